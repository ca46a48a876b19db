//! The stage commands: each reads its upstream artifacts, runs one slice of
//! the pipeline, and writes its own artifact into the output directory.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use driftatlas::curves::{rho_curve, Sense, StopRule};
use driftatlas::data::{
    extract_patches, load_dataset, read_idx_file, save_dataset, stroke_glyphs, DatasetMeta,
    IdxArray, PatchConfig,
};
use driftatlas::field::GradientField;
use driftatlas::neighbors::{draw_samples, stream_rng};
use driftatlas::pipeline::{
    angular_separation, build_frame_at_axis, find_prototypes, geodesic_batch, overlap_fraction,
    principal_axis, select_coordinates, sphere_context, AxisMode,
};
use driftatlas::report::{
    csv_max_directions, csv_min_rankings, csv_rho, csv_spheres, curve_csv, pgm_grid,
    sample_curve_points, PrototypeSummary, RankBy, RhoSummary, RunSummary,
};
use driftatlas::{
    CurveOptions, Dataset, KernelContext, KernelField, MixturePotential, ProtoParams,
    SyntheticPotential,
};

use crate::artifacts::{
    self, fetch, store, AxisArtifact, ConcordanceRow, FrameArtifact, SelectionArtifact,
    StationarityRow, VerifyReport,
};
use crate::config::{DatasetKind, RunConfig};
use crate::CliError;

/// Stream unit for drawing the synthetic dataset.
const DATASET_UNIT: u64 = 0xda7a_0001;
/// Seed whitening for the verification resamples, so they never coincide
/// with the production kernel sample.
const VERIFY_SALT: u64 = 0x7e57_0000_0000;

const DATASET_NAME: &str = "dataset";
/// Patch tiles rendered per curve row in the report grids.
const GRID_TILES: usize = 8;
/// A prototype whose coordinate sphere is this thin has no shell to put an
/// axis on (a mode sitting on a mass of duplicate points); it stays in the
/// prototype record but is not charted.
const MIN_SHELL_RADIUS: f64 = 1e-7;

fn provenance(kind: DatasetKind, hash: &str) -> String {
    format!("{kind} {hash}")
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))
}

/// Loads the dataset artifact, enforcing presence and configuration match.
fn load_points(cfg: &RunConfig, hash: &str) -> Result<(Array2<f64>, DatasetMeta), CliError> {
    let dir = &cfg.run.out;
    let meta_path = dir.join(format!("{DATASET_NAME}.json"));
    if !meta_path.exists() {
        return Err(CliError::MissingStage {
            stage: "ingest or synthetic",
            path: meta_path,
        });
    }
    let (points, meta) = load_dataset(dir, DATASET_NAME).map_err(CliError::stage)?;
    if meta.provenance != provenance(cfg.dataset.kind, hash) {
        return Err(CliError::ConfigMismatch {
            artifact: DATASET_NAME.to_string(),
            found: meta.provenance,
            expected: provenance(cfg.dataset.kind, hash),
        });
    }
    Ok((points, meta))
}

fn load_data(cfg: &RunConfig, hash: &str) -> Result<Dataset, CliError> {
    let (points, _) = load_points(cfg, hash)?;
    Dataset::new(points).map_err(CliError::stage)
}

fn save_points(
    cfg: &RunConfig,
    hash: &str,
    points: &Array2<f64>,
) -> Result<(usize, usize), CliError> {
    let meta = DatasetMeta {
        count: points.nrows(),
        dim: points.ncols(),
        seed: cfg.run.seed,
        provenance: provenance(cfg.dataset.kind, hash),
    };
    save_dataset(&cfg.run.out, DATASET_NAME, &points.view(), &meta).map_err(CliError::stage)?;
    Ok((meta.count, meta.dim))
}

fn patches_from_images(cfg: &RunConfig, images: &IdxArray) -> Result<Array2<f64>, CliError> {
    let patch_cfg = PatchConfig {
        patch_size: cfg.dataset.patch_size,
        scans_per_image: cfg.dataset.scans_per_image,
        seed: cfg.run.seed,
    };
    extract_patches(images, &patch_cfg).map_err(CliError::stage)
}

/// Reads the configured IDX image file and scans random patches out of it.
pub fn cmd_ingest(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    if cfg.dataset.kind != DatasetKind::Mnist {
        return Err(CliError::Config(format!(
            "ingest reads an image file; dataset.kind = \"{}\" is generated, use `driftatlas synthetic`",
            cfg.dataset.kind
        )));
    }
    let path = cfg.dataset.path.as_ref().expect("validated");
    let full = read_idx_file(path).map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))?;
    if full.dims.len() != 3 {
        return Err(CliError::Stage(format!(
            "{}: expected an images tensor, got {} dimensions",
            path.display(),
            full.dims.len()
        )));
    }
    let keep = cfg.dataset.images.min(full.dims[0]);
    let (rows, cols) = (full.dims[1], full.dims[2]);
    let images = IdxArray::images(keep, rows, cols, full.data[..keep * rows * cols].to_vec());
    let points = patches_from_images(cfg, &images)?;
    let (count, dim) = save_points(cfg, hash, &points)?;
    println!("ingest: {keep} images -> {count} patches of dimension {dim}");
    Ok(())
}

/// The analytic potential described by the dataset section.
pub fn synthetic_potential(cfg: &RunConfig) -> Result<SyntheticPotential, CliError> {
    let sigmas = Array1::from(cfg.dataset.sigmas.clone());
    let pot = if cfg.dataset.curls.iter().all(|&c| c == 0.0) {
        SyntheticPotential::gaussian(sigmas)
    } else {
        SyntheticPotential::curved(sigmas, Array1::from(cfg.dataset.curls.clone()))
    }
    .map_err(|e| CliError::Config(format!("dataset: {e}")))?;
    Ok(if cfg.dataset.shift.is_empty() {
        pot
    } else {
        pot.with_shift(Array1::from(cfg.dataset.shift.clone()))
    })
}

/// Generates the dataset: analytic-potential draws or procedural glyphs.
pub fn cmd_synthetic(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let points = match cfg.dataset.kind {
        DatasetKind::Mnist => {
            return Err(CliError::Config(
                "dataset.kind = \"mnist\" comes from a file, use `driftatlas ingest`".into(),
            ));
        }
        DatasetKind::Synthetic => {
            let pot = synthetic_potential(cfg)?;
            let mut rng = stream_rng(cfg.run.seed, DATASET_UNIT);
            pot.sample(cfg.dataset.count, &mut rng)
        }
        DatasetKind::Glyphs => {
            let images = stroke_glyphs(cfg.dataset.images, cfg.run.seed);
            patches_from_images(cfg, &images)?
        }
    };
    let (count, dim) = save_points(cfg, hash, &points)?;
    println!("synthetic: {count} points of dimension {dim}");
    Ok(())
}

fn proto_params(cfg: &RunConfig) -> ProtoParams {
    ProtoParams {
        n_starts: cfg.run.n_starts,
        merge_radius: cfg.run.merge_radius,
        data_sphere_k: cfg.spheres.data,
        coord_sphere_k: cfg.spheres.coord,
        ascent_sample: cfg.run.ascent_sample,
        coarse_beta: cfg.density.coarse_beta,
        refine_beta: cfg.density.refine_beta,
        seed: cfg.run.seed,
        ..ProtoParams::default()
    }
}

/// Finds density modes and their working spheres.
pub fn cmd_prototypes(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let ds = load_data(cfg, hash)?;
    let records = find_prototypes(&ds, &proto_params(cfg)).map_err(CliError::stage)?;
    if records.is_empty() {
        eprintln!("prototypes: no mode found; downstream stages will be empty");
    }
    for rec in &records {
        println!(
            "prototype {}: data sphere radius {:.6}, coordinate sphere radius {:.6}",
            rec.id, rec.data_sphere.radius, rec.coord_sphere.radius
        );
    }
    store(&cfg.run.out, artifacts::PROTOTYPES, hash, cfg.run.seed, &records)
}

/// The production kernel context of one prototype: a reproducible subsample
/// of its data sphere at the refinement kernel width.
fn production_field(
    cfg: &RunConfig,
    ds: &Dataset,
    rec: &driftatlas::PrototypeRecord,
) -> Result<KernelContext, CliError> {
    sphere_context(
        ds,
        &rec.data_sphere,
        cfg.spheres.sample,
        cfg.density.refine_beta,
        cfg.run.seed,
    )
    .map_err(CliError::stage)
}

/// Finds each prototype's principal axis and measures the radial distances:
/// inward to the mode, and outward over the same Euclidean span.
pub fn cmd_axes(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let ds = load_data(cfg, hash)?;
    let records: artifacts::Prototypes =
        fetch(&cfg.run.out, artifacts::PROTOTYPES, hash)?.payload;
    let opts = CurveOptions::default();
    let mut out = Vec::with_capacity(records.len());
    for rec in &records {
        if rec.coord_sphere.radius <= MIN_SHELL_RADIUS {
            eprintln!(
                "axes: prototype {} sits on duplicate points (sphere radius {:.1e}), not charted",
                rec.id, rec.coord_sphere.radius
            );
            continue;
        }
        if cfg.run.max_charts != 0 && out.len() >= cfg.run.max_charts {
            eprintln!(
                "axes: chart budget {} reached, skipping prototype {}",
                cfg.run.max_charts, rec.id
            );
            continue;
        }
        let ctx = production_field(cfg, &ds, rec)?;
        let field = KernelField::new(&ctx);
        let axis = principal_axis(
            &field,
            &rec.modified_prototype.view(),
            rec.coord_sphere.radius,
            AxisMode::Refined,
            cfg.run.seed,
            &opts,
        )
        .map_err(CliError::stage)?;
        if axis.stalled {
            eprintln!("axes: prototype {} search stalled, keeping best point", rec.id);
        }
        let euclid_inward = axis.rho_axis.total_euclid();
        let riem_inward = axis.rho_axis.total_riem();
        let outward = rho_curve(
            &field,
            &axis.axis_point.view(),
            Sense::Outward,
            &StopRule::MaxEuclid {
                length: euclid_inward,
            },
            &opts,
        )
        .map_err(CliError::stage)?;
        println!(
            "axis {}: euclidean {:.6}, inward {:.6}, outward {:.6}",
            rec.id,
            euclid_inward,
            riem_inward,
            outward.total_riem()
        );
        out.push(AxisArtifact {
            prototype: rec.id,
            euclid_inward,
            riem_inward,
            euclid_outward: outward.total_euclid(),
            riem_outward: outward.total_riem(),
            outward,
            axis,
        });
    }
    store(&cfg.run.out, artifacts::AXES, hash, cfg.run.seed, &out)
}

fn record_for<'a>(
    records: &'a [driftatlas::PrototypeRecord],
    id: usize,
) -> Result<&'a driftatlas::PrototypeRecord, CliError> {
    records
        .iter()
        .find(|r| r.id == id)
        .ok_or_else(|| CliError::Stage(format!("prototype {id} missing from prototypes artifact")))
}

/// Builds each prototype's transverse frame and sweeps all its geodesics.
pub fn cmd_geodesics(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let ds = load_data(cfg, hash)?;
    let records: artifacts::Prototypes =
        fetch(&cfg.run.out, artifacts::PROTOTYPES, hash)?.payload;
    let axes: artifacts::Axes = fetch(&cfg.run.out, artifacts::AXES, hash)?.payload;
    let opts = CurveOptions::default();
    let mut out = Vec::with_capacity(axes.len());
    for art in &axes {
        let rec = record_for(&records, art.prototype)?;
        let ctx = production_field(cfg, &ds, rec)?;
        let field = KernelField::new(&ctx);
        let mut frame = build_frame_at_axis(
            &field,
            &rec.modified_prototype.view(),
            &art.axis,
            cfg.run.zeta_samples,
            cfg.run.seed,
        )
        .map_err(CliError::stage)?;
        geodesic_batch(&field, &mut frame, None, cfg.run.stop_angle, &opts)
            .map_err(CliError::stage)?;
        let done = frame.geodesics.iter().filter(|d| d.completed()).count();
        println!(
            "geodesics {}: {} of {} directions swept to the target angle",
            art.prototype,
            done,
            frame.direction_count()
        );
        out.push(FrameArtifact {
            prototype: art.prototype,
            frame,
        });
    }
    store(&cfg.run.out, artifacts::GEODESICS, hash, cfg.run.seed, &out)
}

/// Ranks the swept directions and keeps the best `k − 1` per prototype.
pub fn cmd_coords(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let mut frames: artifacts::Frames =
        fetch(&cfg.run.out, artifacts::GEODESICS, hash)?.payload;
    let mut out = Vec::with_capacity(frames.len());
    for art in &mut frames {
        let selected =
            select_coordinates(&mut art.frame, cfg.run.k).map_err(CliError::stage)?;
        println!(
            "coords {}: kept directions {:?}",
            art.prototype, selected
        );
        out.push(SelectionArtifact {
            prototype: art.prototype,
            selected,
        });
    }
    store(&cfg.run.out, artifacts::COORDS, hash, cfg.run.seed, &out)
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Stability checks: everything the chart claims should survive swapping the
/// kernel sample for a fresh one. `deep` additionally rebuilds whole frames
/// on both samples and compares the selected coordinate sets.
pub fn cmd_verify(cfg: &RunConfig, hash: &str, deep: bool) -> Result<(), CliError> {
    let ds = load_data(cfg, hash)?;
    let records: artifacts::Prototypes =
        fetch(&cfg.run.out, artifacts::PROTOTYPES, hash)?.payload;
    let axes: artifacts::Axes = fetch(&cfg.run.out, artifacts::AXES, hash)?.payload;
    let vcfg = &cfg.verify;
    let opts = CurveOptions::default();
    let mut rows = Vec::with_capacity(records.len());
    let mut all_pass = true;
    for rec in &records {
        // Prototypes without an axis (degenerate spheres, chart budget)
        // have nothing downstream to stress-test.
        let Some(production) = axes.iter().find(|a| a.prototype == rec.id) else {
            continue;
        };
        let vseed = cfg.run.seed ^ VERIFY_SALT ^ rec.id as u64;
        let m = cfg.spheres.sample.min(rec.data_sphere.member_ids.len());
        let mut pair =
            draw_samples(&ds, &rec.data_sphere, m, 2, vseed).map_err(CliError::stage)?;
        let ctx_b = KernelContext::new(cfg.density.refine_beta, pair.pop().expect("two samples"))
            .map_err(CliError::stage)?;
        let ctx_a = KernelContext::new(cfg.density.refine_beta, pair.pop().expect("two samples"))
            .map_err(CliError::stage)?;
        let field_a = KernelField::new(&ctx_a);
        let field_b = KernelField::new(&ctx_b);
        let center = rec.modified_prototype.view();
        // The gradient the chart hangs off lives at the axis point; at the
        // prototype itself it vanishes and its direction is sampling noise.
        let probe = production.axis.axis_point.view();
        let grad_a = field_a.gradient(&probe).map_err(CliError::stage)?;
        let grad_b = field_b.gradient(&probe).map_err(CliError::stage)?;
        let grad_cosine = cosine(&grad_a, &grad_b);

        let radius = rec.coord_sphere.radius;
        let axis_a = principal_axis(&field_a, &center, radius, AxisMode::Fast, cfg.run.seed, &opts)
            .map_err(CliError::stage)?;
        let axis_b = principal_axis(&field_b, &center, radius, AxisMode::Fast, cfg.run.seed, &opts)
            .map_err(CliError::stage)?;
        let angle_raw_deg = angular_separation(
            &center,
            &axis_a.axis_point.view(),
            &axis_b.axis_point.view(),
        )
        .to_degrees();
        let angle_deg = angle_raw_deg.min(180.0 - angle_raw_deg);

        let overlap = if deep {
            let chart = |field: &KernelField,
                             axis: &driftatlas::AxisResult|
             -> Result<Vec<usize>, CliError> {
                let mut frame = build_frame_at_axis(
                    field,
                    &center,
                    axis,
                    cfg.run.zeta_samples,
                    cfg.run.seed,
                )
                .map_err(CliError::stage)?;
                geodesic_batch(field, &mut frame, None, cfg.run.stop_angle, &opts)
                    .map_err(CliError::stage)?;
                select_coordinates(&mut frame, cfg.run.k).map_err(CliError::stage)
            };
            let sel_a = chart(&field_a, &axis_a)?;
            let sel_b = chart(&field_b, &axis_b)?;
            Some(overlap_fraction(&sel_a, &sel_b))
        } else {
            None
        };

        let pass = grad_cosine >= vcfg.grad_cos_min
            && angle_deg <= vcfg.angle_limit_deg
            && overlap.map_or(true, |o| o >= vcfg.overlap_min);
        all_pass &= pass;
        let overlap_text = overlap
            .map(|o| format!(", selection overlap {o:.2}"))
            .unwrap_or_default();
        println!(
            "verify {}: {} gradient cosine {:.4}, axis separation {:.2} deg{}",
            rec.id,
            if pass { "PASS" } else { "FAIL" },
            grad_cosine,
            angle_deg,
            overlap_text
        );
        rows.push(ConcordanceRow {
            prototype: rec.id,
            grad_cosine,
            angle_deg,
            angle_raw_deg,
            overlap,
            pass,
        });
    }

    let stationarity = if cfg.dataset.kind == DatasetKind::Synthetic {
        let pot = synthetic_potential(cfg)?;
        let mix = MixturePotential::new(vec![pot], vec![1.0]).map_err(CliError::stage)?;
        let grid_matrix = mix.sample_matrix(vcfg.stationarity_points, cfg.run.seed ^ VERIFY_SALT);
        let grid: Vec<Array1<f64>> = grid_matrix.rows().into_iter().map(|r| r.to_owned()).collect();
        let residual = driftatlas::data::verify_stationarity(&mix, &grid, vcfg.stationarity_step);
        let pass = residual < vcfg.stationarity_limit;
        all_pass &= pass;
        println!(
            "verify stationarity: {} residual {:.3e} (limit {:.1e})",
            if pass { "PASS" } else { "FAIL" },
            residual,
            vcfg.stationarity_limit
        );
        Some(StationarityRow {
            residual,
            limit: vcfg.stationarity_limit,
            pass,
        })
    } else {
        None
    };

    let report = VerifyReport {
        concordance: rows,
        stationarity,
        all_pass,
    };
    store(&cfg.run.out, artifacts::VERIFY, hash, cfg.run.seed, &report)?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Stage(
            "verification failed; see verify.json for the measurements".into(),
        ))
    }
}

/// Merges per-prototype ranking tables into one CSV, keeping one header.
fn merge_csv(parts: &[String]) -> String {
    let mut out = String::new();
    for (i, part) in parts.iter().enumerate() {
        for (j, line) in part.lines().enumerate() {
            if i > 0 && j == 0 {
                continue;
            }
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn exact_square_side(dim: usize) -> Option<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    (side >= 2 && side * side == dim).then_some(side)
}

/// Renders the tables, curve files, patch grids, and the summary.
pub fn cmd_report(cfg: &RunConfig, hash: &str) -> Result<(), CliError> {
    let (_, meta) = load_points(cfg, hash)?;
    let dir = &cfg.run.out;
    let records: artifacts::Prototypes = fetch(dir, artifacts::PROTOTYPES, hash)?.payload;
    let axes: artifacts::Axes = fetch(dir, artifacts::AXES, hash)?.payload;
    let frames: artifacts::Frames = fetch(dir, artifacts::GEODESICS, hash)?.payload;
    let selections: artifacts::Selections = fetch(dir, artifacts::COORDS, hash)?.payload;

    let tables = dir.join("tables");
    let curves = dir.join("curves");
    make_dir(&tables)?;
    make_dir(&curves)?;

    write_text(&tables.join("spheres.csv"), &csv_spheres(&records))?;

    let rho_rows: Vec<RhoSummary<f64>> = axes
        .iter()
        .map(|a| RhoSummary {
            prototype: a.prototype,
            euclid_inward: a.euclid_inward,
            riem_inward: a.riem_inward,
            euclid_outward: a.euclid_outward,
            riem_outward: a.riem_outward,
        })
        .collect();
    write_text(&tables.join("rho_distances.csv"), &csv_rho(&rho_rows))?;

    let pairs: Vec<(usize, &driftatlas::CoordinateFrame)> =
        frames.iter().map(|f| (f.prototype, &f.frame)).collect();
    write_text(&tables.join("theta_max.csv"), &csv_max_directions(&pairs))?;
    let top3: Vec<String> = frames
        .iter()
        .map(|f| csv_min_rankings(f.prototype, &f.frame, 3, RankBy::Positive))
        .collect();
    write_text(&tables.join("theta_min_top3.csv"), &merge_csv(&top3))?;
    let top10: Vec<String> = frames
        .iter()
        .map(|f| csv_min_rankings(f.prototype, &f.frame, 10, RankBy::Total))
        .collect();
    write_text(&tables.join("theta_min_top10.csv"), &merge_csv(&top10))?;

    let side = exact_square_side(meta.dim);
    if side.is_some() {
        make_dir(&dir.join("grids"))?;
    }

    let mut per_prototype = Vec::with_capacity(axes.len());
    for axis in &axes {
        let rec = record_for(&records, axis.prototype)?;
        let frame = frames
            .iter()
            .find(|f| f.prototype == rec.id)
            .map(|f| &f.frame)
            .ok_or_else(|| {
                CliError::Stage(format!("geodesics artifact misses prototype {}", rec.id))
            })?;
        let selected = selections
            .iter()
            .find(|s| s.prototype == rec.id)
            .map(|s| s.selected.clone())
            .ok_or_else(|| {
                CliError::Stage(format!("coords artifact misses prototype {}", rec.id))
            })?;

        write_text(
            &curves.join(format!("proto{}_rho.csv", rec.id)),
            &curve_csv(&axis.axis.rho_axis),
        )?;
        write_text(
            &curves.join(format!("proto{}_rho_outward.csv", rec.id)),
            &curve_csv(&axis.outward),
        )?;
        let mut grid_rows: Vec<Vec<Array1<f64>>> = Vec::new();
        grid_rows.push(sample_curve_points(&axis.axis.rho_axis, GRID_TILES));
        for &id in &selected {
            let Some(dir_curves) = frame.curves_for(id) else {
                continue;
            };
            for (sense, path) in [("plus", &dir_curves.plus), ("minus", &dir_curves.minus)] {
                if let Some(path) = path {
                    write_text(
                        &curves.join(format!("proto{}_dir{}_{sense}.csv", rec.id, id)),
                        &curve_csv(path),
                    )?;
                    grid_rows.push(sample_curve_points(path, GRID_TILES));
                }
            }
        }
        if let Some(side) = side {
            let image = pgm_grid(&grid_rows, side, 1).map_err(CliError::stage)?;
            write_bytes(&dir.join("grids").join(format!("proto{}.pgm", rec.id)), &image)?;
        }

        per_prototype.push(PrototypeSummary {
            id: rec.id,
            data_radius: rec.data_sphere.radius,
            coord_radius: rec.coord_sphere.radius,
            axis_objective: axis.axis.objective,
            axis_stalled: axis.axis.stalled,
            euclid_inward: axis.euclid_inward,
            riem_inward: axis.riem_inward,
            euclid_outward: axis.euclid_outward,
            riem_outward: axis.riem_outward,
            direction_count: frame.direction_count(),
            completed_directions: frame.geodesics.iter().filter(|d| d.completed()).count(),
            selected,
        });
    }

    let summary = RunSummary {
        config_hash: hash.to_string(),
        seed: cfg.run.seed,
        dataset_points: meta.count,
        dataset_dim: meta.dim,
        prototypes: records.len(),
        charted: per_prototype.len(),
        per_prototype,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(CliError::stage)?;
    write_text(&dir.join("summary.json"), &text)?;
    println!(
        "report: {} prototypes ({} charted), tables in {}, summary in {}",
        records.len(),
        axes.len(),
        tables.display(),
        dir.join("summary.json").display()
    );
    Ok(())
}

/// Writes the effective configuration (defaults folded with the file and
/// flags) for inspection; not an artifact, carries no envelope.
pub fn dump_effective_config(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    make_dir(&cfg.run.out)?;
    let path = cfg.run.out.join("config.effective.toml");
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| CliError::Stage(format!("serializing config: {e}")))?;
    write_text(&path, &text)?;
    Ok(path)
}
