//! Rendering run results into portable artifacts.
//!
//! Everything here produces bytes or strings; writing files is the caller's
//! business. Tables come out as plain CSV with stable column orders, curves
//! as one row per knot, and patch sequences as binary PGM (P5) grids with
//! one row of tiles per curve. All formatting goes through the shortest
//! round-trip float notation, so identical inputs give identical bytes.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::CurvePath;
use crate::pipeline::{CoordinateFrame, PrototypeRecord};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("tile {index} holds {len} values, grid expects {expect} (side {side})")]
    BadTile {
        index: usize,
        len: usize,
        expect: usize,
        side: usize,
    },
    #[error("a grid needs at least one row with at least one tile")]
    EmptyGrid,
}

/// Per-prototype drift-curve distances for the radial-distance table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RhoSummary<F: Real> {
    pub prototype: usize,
    /// Euclidean and Riemannian length of the inward drift curve from the
    /// axis point to the mode.
    pub euclid_inward: F,
    pub riem_inward: F,
    /// The same measures along the outward continuation over the same
    /// Euclidean span.
    pub euclid_outward: F,
    pub riem_outward: F,
}

/// Sphere-size table: one row per prototype.
pub fn csv_spheres<F: Real>(records: &[PrototypeRecord<F>]) -> String {
    let mut out = String::from("prototype,data_members,data_radius,coord_members,coord_radius\n");
    for rec in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.id,
            rec.data_sphere.member_ids.len(),
            rec.data_sphere.radius.as_f64(),
            rec.coord_sphere.member_ids.len(),
            rec.coord_sphere.radius.as_f64(),
        ));
    }
    out
}

/// Drift-curve distance table: one row per prototype.
pub fn csv_rho<F: Real>(rows: &[RhoSummary<F>]) -> String {
    let mut out =
        String::from("prototype,euclid_inward,riem_inward,euclid_outward,riem_outward\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.prototype,
            r.euclid_inward.as_f64(),
            r.riem_inward.as_f64(),
            r.euclid_outward.as_f64(),
            r.riem_outward.as_f64(),
        ));
    }
    out
}

fn distance_cell<F: Real>(d: Option<F>) -> String {
    d.map(|v| v.as_f64().to_string()).unwrap_or_default()
}

/// Principal-direction sweep distances: one row per prototype. Incomplete
/// sweeps leave their cells empty.
pub fn csv_max_directions<F: Real>(frames: &[(usize, &CoordinateFrame<F>)]) -> String {
    let mut out = String::from("prototype,positive,negative,total\n");
    for (id, frame) in frames {
        let row = frame.curves_for(0);
        let (pos, neg, tot) = match row {
            Some(d) => (
                d.positive_distance(),
                d.negative_distance(),
                d.total_distance(),
            ),
            None => (None, None, None),
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            id,
            distance_cell(pos),
            distance_cell(neg),
            distance_cell(tot)
        ));
    }
    out
}

/// Which distance a minimal-direction ranking sorts by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankBy {
    Positive,
    Total,
}

/// The top minimal-direction sweeps of one frame, ranked ascending by the
/// chosen distance, ties by direction id. Only completed sweeps rank.
pub fn csv_min_rankings<F: Real>(
    prototype: usize,
    frame: &CoordinateFrame<F>,
    limit: usize,
    by: RankBy,
) -> String {
    let mut ranked: Vec<(F, usize)> = frame
        .geodesics
        .iter()
        .filter(|d| d.direction_id >= 1 && d.completed())
        .filter_map(|d| {
            let key = match by {
                RankBy::Positive => d.positive_distance(),
                RankBy::Total => d.total_distance(),
            };
            key.map(|k| (k, d.direction_id))
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    });
    let mut out = String::from("prototype,direction,positive,negative,total\n");
    for (_, id) in ranked.into_iter().take(limit) {
        let d = frame.curves_for(id).expect("ranked ids exist");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            prototype,
            id,
            distance_cell(d.positive_distance()),
            distance_cell(d.negative_distance()),
            distance_cell(d.total_distance())
        ));
    }
    out
}

/// One curve as CSV: parameter, ambient coordinates, running lengths, and
/// the active frame center (empty for drift curves, which carry no frame).
pub fn curve_csv<F: Real>(path: &CurvePath<F>) -> String {
    let n = path.points.first().map(|p| p.len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",euclid_len,riem_len,center_axis\n");
    for (k, point) in path.points.iter().enumerate() {
        let t = path.params[k];
        out.push_str(&t.as_f64().to_string());
        for v in point.iter() {
            out.push(',');
            out.push_str(&v.as_f64().to_string());
        }
        let center = path
            .center_at(t)
            .map(|a| a.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            ",{},{},{}\n",
            path.euclid_len[k].as_f64(),
            path.riem_len[k].as_f64(),
            center
        ));
    }
    out
}

/// `count` knots spread evenly in parameter along the curve, endpoints
/// included; duplicates collapse on very short curves.
pub fn sample_curve_points<F: Real>(path: &CurvePath<F>, count: usize) -> Vec<Array1<F>> {
    if path.points.is_empty() || count == 0 {
        return Vec::new();
    }
    if count == 1 || path.points.len() == 1 {
        return vec![path.points[0].clone()];
    }
    let total = path.total_param();
    let mut picks = Vec::with_capacity(count);
    let mut last: Option<usize> = None;
    for j in 0..count {
        let target = total * F::of(j as f64 / (count - 1) as f64);
        let idx = match path
            .params
            .binary_search_by(|p| p.partial_cmp(&target).expect("finite parameters"))
        {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= path.params.len() {
                    path.params.len() - 1
                } else {
                    // nearer neighbor wins
                    if (path.params[i] - target).abs() < (target - path.params[i - 1]).abs() {
                        i
                    } else {
                        i - 1
                    }
                }
            }
        };
        if last != Some(idx) {
            picks.push(path.points[idx].clone());
            last = Some(idx);
        }
    }
    picks
}

/// Renders rows of square tiles into a binary PGM (P5) image. Tile values
/// are clamped to `[0, 1]` and scaled to 8 bits; `gap` pixels of mid-gray
/// separate tiles and rows.
pub fn pgm_grid<F: Real>(
    rows: &[Vec<Array1<F>>],
    side: usize,
    gap: usize,
) -> Result<Vec<u8>, ReportError> {
    let expect = side * side;
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    if rows.is_empty() || cols == 0 || side == 0 {
        return Err(ReportError::EmptyGrid);
    }
    let mut index = 0usize;
    for row in rows {
        for tile in row {
            if tile.len() != expect {
                return Err(ReportError::BadTile {
                    index,
                    len: tile.len(),
                    expect,
                    side,
                });
            }
            index += 1;
        }
    }
    const SEPARATOR: u8 = 96;
    let width = cols * side + gap * cols.saturating_sub(1);
    let height = rows.len() * side + gap * rows.len().saturating_sub(1);
    let mut pixels = vec![SEPARATOR; width * height];
    for (r, row) in rows.iter().enumerate() {
        let top = r * (side + gap);
        for (c, tile) in row.iter().enumerate() {
            let left = c * (side + gap);
            for py in 0..side {
                for px in 0..side {
                    let v = tile[py * side + px].as_f64().clamp(0.0, 1.0);
                    pixels[(top + py) * width + (left + px)] = (v * 255.0).round() as u8;
                }
            }
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

/// Top-level run summary, written alongside the tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub dataset_points: usize,
    pub dataset_dim: usize,
    /// Modes found; degenerate ones may not be charted.
    pub prototypes: usize,
    pub charted: usize,
    pub per_prototype: Vec<PrototypeSummary>,
}

/// One prototype's chart in numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeSummary {
    pub id: usize,
    pub data_radius: f64,
    pub coord_radius: f64,
    pub axis_objective: f64,
    pub axis_stalled: bool,
    pub euclid_inward: f64,
    pub riem_inward: f64,
    pub euclid_outward: f64,
    pub riem_outward: f64,
    pub direction_count: usize,
    pub completed_directions: usize,
    pub selected: Vec<usize>,
}
