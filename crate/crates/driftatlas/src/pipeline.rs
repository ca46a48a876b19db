//! The chart-building procedure over a dataset.
//!
//! A run walks five stages. Prototypes: mean-shift ascents from random data
//! points (a wide coarse kernel, then a sharp refinement), merged by
//! single-linkage clustering, each surviving mode dressed with its data and
//! coordinate spheres. Principal axis: on the coordinate-sphere shell,
//! minimize the squared stationarity measure over unit directions to find
//! the point whose inward drift curve is Riemannian-shortest. Frame: the
//! metric eigensystem at the axis point, sign-sampled minimal eigenvectors,
//! and Gram-Schmidt give one principal transverse direction plus `n−2`
//! orthonormal minimal directions. Geodesic batch: each direction is swept
//! in both senses to a fixed Euclidean angle around the mode, recording
//! per-sense and total distances. Selection and reconstruction: curves are
//! ranked by total distance, a low-dimensional coordinate set is kept, and
//! the error of dropping the rest is measured by projecting data onto the
//! axis-level shell and taking the scaled residual to the kept curves. A
//! principal-component baseline over sphere members is included for
//! comparison. Every stage draws randomness through per-unit seed streams,
//! so fixed seeds give identical results regardless of thread scheduling.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{
    rho_curve, CurveError, CurveOptions, CurvePath, Sense, StopCause, StopRule,
    DEFAULT_MODE_FLOOR,
};
use crate::density::{gradient_ascent, DensityError, KernelContext, SampleSource};
use crate::field::{FieldError, GradientField};
use crate::geometry::{
    eigensystem, orthonormal_directions, random_min_eigenvectors, Frame, GeometryError,
};
use crate::linalg;
use crate::neighbors::{data_sphere, stream_rng, Dataset, NeighborError, Sphere};
use crate::scalar::Real;
use rand::Rng;

/// Unit-direction starts for the shell optimizer.
const AXIS_STARTS: usize = 64;
/// Sweep budget per start; a sweep probes every coordinate once.
const AXIS_MAX_SWEEPS: usize = 200;
/// Initial probe size on the unit sphere, and the size at which a descent
/// counts as converged.
const AXIS_DELTA0: f64 = 0.3;
const AXIS_DELTA_MIN: f64 = 1e-3;
/// Local perturbations tried by the refined axis search.
const AXIS_REFINE_TRIES: usize = 8;
const AXIS_REFINE_DELTA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("direction id {id} does not exist (frame holds {count})")]
    UnknownDirection { id: usize, count: usize },
    #[error("direction subset is empty")]
    NoDirections,
    #[error(
        "selecting {requested} coordinates needs {needed} completed transverse sweeps, found {available}"
    )]
    NotEnoughCurves {
        requested: usize,
        needed: usize,
        available: usize,
    },
    #[error("a chart needs the drift coordinate and the principal sweep: k = {k} is too small")]
    SelectionTooSmall { k: usize },
    #[error("the sphere holds {got} members, this decomposition needs {needed}")]
    NotEnoughMembers { needed: usize, got: usize },
    #[error("no data point survived the shell projection ({excluded} excluded)")]
    EmptyReconstruction { excluded: usize },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Neighbors(#[from] NeighborError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Curves(#[from] CurveError),
}

/// Controls for the prototype stage.
#[derive(Debug, Clone)]
pub struct ProtoParams<F: Real> {
    /// Random data points to ascend from.
    pub n_starts: usize,
    /// Modes closer than this merge into one prototype; `None` resolves to
    /// half the median over data points of the distance to the nearest
    /// found mode.
    pub merge_radius: Option<F>,
    /// Nearest-member counts for the two spheres around each prototype.
    pub data_sphere_k: usize,
    pub coord_sphere_k: usize,
    /// Moving-sample size for the ascents.
    pub ascent_sample: usize,
    /// Wide first-pass kernel and sharp refinement kernel.
    pub coarse_beta: F,
    pub refine_beta: F,
    /// Mean-shift displacement tolerance and iteration cap.
    pub ascent_tol: F,
    pub max_iter: usize,
    pub seed: u64,
}

impl<F: Real> Default for ProtoParams<F> {
    fn default() -> Self {
        ProtoParams {
            n_starts: 16,
            merge_radius: None,
            data_sphere_k: 3200,
            coord_sphere_k: 800,
            ascent_sample: 400,
            coarse_beta: F::of(0.125),
            refine_beta: F::one(),
            ascent_tol: F::of(1e-7),
            max_iter: 400,
            seed: 0,
        }
    }
}

/// One density mode with its neighborhoods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeRecord<F: Real> {
    pub id: usize,
    /// Where the moving-sample ascent landed.
    pub raw_prototype: Array1<F>,
    /// The mode of the data-sphere kernel estimate: the ascent re-run inside
    /// the fixed data-sphere context until the displacement floor.
    pub modified_prototype: Array1<F>,
    pub data_sphere: Sphere<F>,
    /// The smaller working sphere, centered on the modified prototype.
    pub coord_sphere: Sphere<F>,
}

/// Finds density modes by mean-shift ascent from `n_starts` random data
/// points and merges duplicates. Ascents that fail are dropped; an empty
/// result is legal when every start fails.
pub fn find_prototypes<F: Real>(
    ds: &Dataset<F>,
    params: &ProtoParams<F>,
) -> Result<Vec<PrototypeRecord<F>>, PipelineError> {
    assert!(params.n_starts >= 1, "need at least one ascent start");
    let m = params.ascent_sample.min(ds.len());
    let mut rng = stream_rng(params.seed, 0x7057_0001);
    let start_ids: Vec<usize> = (0..params.n_starts)
        .map(|_| rng.random_range(0..ds.len()))
        .collect();

    // Two-pass ascent per start: wide kernel to cross shallow structure,
    // sharp kernel to land on the local mode.
    let modes: Vec<Option<(Array1<F>, F)>> = start_ids
        .par_iter()
        .map(|&id| {
            let x0 = ds.point(id);
            let coarse = gradient_ascent(
                &SampleSource::Nearest {
                    data: ds,
                    m,
                    beta: params.coarse_beta,
                },
                &x0,
                params.ascent_tol,
                params.max_iter,
            )
            .ok()?;
            let refined = gradient_ascent(
                &SampleSource::Nearest {
                    data: ds,
                    m,
                    beta: params.refine_beta,
                },
                &coarse.mode.view(),
                params.ascent_tol,
                params.max_iter,
            )
            .ok()?;
            Some((refined.mode, refined.kernel_sum))
        })
        .collect();
    let modes: Vec<(Array1<F>, F)> = modes.into_iter().flatten().collect();
    if modes.is_empty() {
        return Ok(Vec::new());
    }

    let radius = params
        .merge_radius
        .unwrap_or_else(|| half_median_data_distance(ds, &modes));

    // Single-linkage agglomeration: any chain of close modes is one mode.
    let mut parent: Vec<usize> = (0..modes.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..modes.len() {
        for j in i + 1..modes.len() {
            let d = linalg::distance(&modes[i].0.view(), &modes[j].0.view());
            if d < radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    // Cluster representative: the member with the strongest kernel sum,
    // earliest start on ties; clusters ordered by representative index.
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..modes.len() {
        let root = find(&mut parent, i);
        match reps.iter().position(|&r| find(&mut parent, r) == root) {
            Some(slot) => {
                if modes[i].1 > modes[reps[slot]].1 {
                    reps[slot] = i;
                }
            }
            None => reps.push(i),
        }
    }
    reps.sort_unstable();

    let data_k = params.data_sphere_k.min(ds.len());
    let coord_k = params.coord_sphere_k.min(ds.len());
    let mut records = Vec::new();
    for rep in reps {
        let raw = modes[rep].0.clone();
        let sphere_d = data_sphere(ds, &raw.view(), data_k)?;
        let ctx = KernelContext::new(params.refine_beta, members_matrix(ds, &sphere_d))?;
        let settled = match gradient_ascent(
            &SampleSource::Fixed(&ctx),
            &raw.view(),
            params.ascent_tol,
            params.max_iter,
        ) {
            Ok(a) => a,
            Err(_) => continue,
        };
        let modified = settled.mode;
        let sphere_c = data_sphere(ds, &modified.view(), coord_k)?;
        records.push(PrototypeRecord {
            id: records.len(),
            raw_prototype: raw,
            modified_prototype: modified,
            data_sphere: sphere_d,
            coord_sphere: sphere_c,
        });
    }
    Ok(records)
}

/// Half the median, over data points, of the distance to the nearest found
/// mode. Modes of one cluster sit well inside this scale and merge; modes
/// of distinct clusters sit several cluster radii apart and survive.
fn half_median_data_distance<F: Real>(ds: &Dataset<F>, modes: &[(Array1<F>, F)]) -> F {
    let mut nearest: Vec<F> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let x = ds.point(i);
            modes
                .iter()
                .map(|(m, _)| linalg::distance(&m.view(), &x))
                .fold(F::infinity(), F::min)
        })
        .collect();
    nearest.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    nearest[nearest.len() / 2] * F::of(0.5)
}

/// The member points of a sphere, one row each.
pub fn members_matrix<F: Real>(ds: &Dataset<F>, sphere: &Sphere<F>) -> Array2<F> {
    let mut out = Array2::zeros((sphere.member_ids.len(), ds.dim()));
    for (row, &id) in sphere.member_ids.iter().enumerate() {
        out.row_mut(row).assign(&ds.point(id));
    }
    out
}

/// A kernel context over a reproducible subsample of a sphere's members.
pub fn sphere_context<F: Real>(
    ds: &Dataset<F>,
    sphere: &Sphere<F>,
    sample: usize,
    beta: F,
    seed: u64,
) -> Result<KernelContext<F>, PipelineError> {
    let m = sample.min(sphere.member_ids.len());
    let mut drawn = crate::neighbors::draw_samples(ds, sphere, m, 1, seed)?;
    Ok(KernelContext::new(beta, drawn.remove(0))?)
}

/// How hard the axis search works.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisMode {
    /// Shell minimization of the squared stationarity measure only.
    Fast,
    /// Shell minimization, then local perturbations compared by the
    /// Riemannian length of their inward drift curves.
    Refined,
}

/// The principal-axis point on a shell and its inward drift curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisResult<F: Real> {
    pub axis_point: Array1<F>,
    /// Inward drift curve from the axis point to the mode.
    pub rho_axis: CurvePath<F>,
    /// Squared stationarity measure at the axis point.
    pub objective: F,
    /// True when the best shell descent hit its sweep budget before its
    /// probe size converged; the result is still the best point found.
    pub stalled: bool,
}

/// Finds the shell point minimizing the squared stationarity measure over
/// the sphere `|x − center| = radius`, by multi-start projected coordinate
/// descent over unit directions, and returns it with its inward drift
/// curve. `Refined` additionally compares local perturbations by drift-curve
/// Riemannian length, which can only improve the pick.
pub fn principal_axis<F, G>(
    field: &G,
    center: &ArrayView1<F>,
    radius: F,
    mode: AxisMode,
    seed: u64,
    opts: &CurveOptions<F>,
) -> Result<AxisResult<F>, PipelineError>
where
    F: Real,
    G: GradientField<F> + Sync,
{
    let n = field.dim();
    assert_eq!(center.len(), n);
    let objective = |u: &Array1<F>| -> F {
        let x = center.to_owned() + &u.mapv(|c| c * radius);
        match field.stationarity(&x.view()) {
            Ok(s) => s * s,
            Err(_) => F::infinity(),
        }
    };

    let descents: Vec<(F, Array1<F>, bool)> = (0..AXIS_STARTS)
        .into_par_iter()
        .map(|start| {
            let mut rng = stream_rng(seed, 0xa415_0000 ^ start as u64);
            let mut u = random_unit(n, &mut rng);
            let mut f = objective(&u);
            let mut delta = F::of(AXIS_DELTA0);
            let mut converged = false;
            for _sweep in 0..AXIS_MAX_SWEEPS {
                let mut improved = false;
                for axis in 0..n {
                    for sign in [F::one(), -F::one()] {
                        let mut cand = u.clone();
                        cand[axis] += sign * delta;
                        let norm = linalg::norm(&cand.view());
                        if !(norm > F::zero()) {
                            continue;
                        }
                        cand.mapv_inplace(|c| c / norm);
                        let fc = objective(&cand);
                        if fc < f {
                            f = fc;
                            u = cand;
                            improved = true;
                            break;
                        }
                    }
                }
                if !improved {
                    delta *= F::of(0.5);
                    if delta < F::of(AXIS_DELTA_MIN) {
                        converged = true;
                        break;
                    }
                }
            }
            (f, u, converged)
        })
        .collect();

    let mut best = 0usize;
    for (i, d) in descents.iter().enumerate() {
        if d.0 < descents[best].0 {
            best = i;
        }
    }
    let (mut f_best, mut u_best, converged) = descents[best].clone();
    let stalled = !converged;

    let drift_curve = |u: &Array1<F>| -> Result<CurvePath<F>, CurveError> {
        let x = center.to_owned() + &u.mapv(|c| c * radius);
        rho_curve(
            field,
            &x.view(),
            Sense::Inward,
            &StopRule::AtMode {
                floor: F::of(DEFAULT_MODE_FLOOR),
            },
            opts,
        )
    };
    let mut rho_axis = drift_curve(&u_best)?;

    if mode == AxisMode::Refined {
        let mut rng = stream_rng(seed, 0xa415_ffff);
        let mut best_len = rho_axis.total_riem();
        for _try in 0..AXIS_REFINE_TRIES {
            let mut t = random_unit(n, &mut rng);
            let along = t.dot(&u_best);
            t.zip_mut_with(&u_best, |ti, ui| *ti -= along * *ui);
            let tn = linalg::norm(&t.view());
            if !(tn > F::zero()) {
                continue;
            }
            let mut cand = &u_best + &t.mapv(|c| c * (F::of(AXIS_REFINE_DELTA) / tn));
            let cn = linalg::norm(&cand.view());
            cand.mapv_inplace(|c| c / cn);
            if let Ok(path) = drift_curve(&cand) {
                if path.total_riem() < best_len {
                    best_len = path.total_riem();
                    rho_axis = path;
                    f_best = objective(&cand);
                    u_best = cand;
                }
            }
        }
    }

    let axis_point = center.to_owned() + &u_best.mapv(|c| c * radius);
    Ok(AxisResult {
        axis_point,
        rho_axis,
        objective: f_best,
        stalled,
    })
}

fn random_unit<F: Real>(n: usize, rng: &mut impl Rng) -> Array1<F> {
    loop {
        let v = Array1::from_iter((0..n).map(|_| F::of(rng.sample::<f64, _>(StandardNormal))));
        let norm = linalg::norm(&v.view());
        if norm > F::of(1e-6) {
            return v.mapv(|c| c / norm);
        }
    }
}

/// Geodesic sweeps of one direction in both senses, with failures recorded
/// rather than aborting the batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionCurves<F: Real> {
    pub direction_id: usize,
    pub plus: Option<CurvePath<F>>,
    pub minus: Option<CurvePath<F>>,
    pub plus_error: Option<String>,
    pub minus_error: Option<String>,
}

impl<F: Real> DirectionCurves<F> {
    /// Both senses present and both swept to the target angle.
    pub fn completed(&self) -> bool {
        let done = |p: &Option<CurvePath<F>>| {
            p.as_ref().map(|c| c.stop == StopCause::TargetAngle).unwrap_or(false)
        };
        done(&self.plus) && done(&self.minus)
    }

    pub fn positive_distance(&self) -> Option<F> {
        self.plus.as_ref().map(|c| c.total_riem())
    }

    pub fn negative_distance(&self) -> Option<F> {
        self.minus.as_ref().map(|c| c.total_riem())
    }

    /// Total Riemannian distance of the completed sweep pair.
    pub fn total_distance(&self) -> Option<F> {
        if self.completed() {
            Some(self.plus.as_ref().unwrap().total_riem() + self.minus.as_ref().unwrap().total_riem())
        } else {
            None
        }
    }
}

/// A chart under construction around one prototype: the axis point on the
/// shell, the transverse directions at it, their geodesic sweeps, and the
/// ids of the curves kept for the low-dimensional encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinateFrame<F: Real> {
    /// The mode the chart is centered on.
    pub origin: Array1<F>,
    pub axis_point: Array1<F>,
    /// Frame convention at the axis point (center axis of the moving frame).
    pub center_axis: usize,
    /// Unit principal transverse direction, frame coordinates, slot 0 zero.
    pub max_direction: Array1<F>,
    /// `n−2` orthonormal minimal directions, frame coordinates.
    pub min_directions: Vec<Array1<F>>,
    /// Inward drift curve from the axis point (the ρ coordinate curve).
    pub rho_axis: CurvePath<F>,
    /// Sweeps per direction id; id 0 is the principal direction, id `i ≥ 1`
    /// is `min_directions[i−1]`.
    pub geodesics: Vec<DirectionCurves<F>>,
    /// Direction ids of the kept transverse coordinates, principal first.
    pub selected: Vec<usize>,
}

impl<F: Real> CoordinateFrame<F> {
    pub fn direction_count(&self) -> usize {
        1 + self.min_directions.len()
    }

    /// Direction by id: 0 is the principal direction, the rest are minimal.
    pub fn direction(&self, id: usize) -> Option<&Array1<F>> {
        match id {
            0 => Some(&self.max_direction),
            i if i <= self.min_directions.len() => Some(&self.min_directions[i - 1]),
            _ => None,
        }
    }

    pub fn curves_for(&self, id: usize) -> Option<&DirectionCurves<F>> {
        self.geodesics.iter().find(|d| d.direction_id == id)
    }
}

/// Builds the transverse directions at an axis point: the metric
/// eigensystem, `zeta_samples` random sign combinations of the minimal
/// eigenvectors, and Gram-Schmidt down to an orthonormal set.
pub fn build_frame_at_axis<F: Real>(
    field: &dyn GradientField<F>,
    origin: &ArrayView1<F>,
    axis: &AxisResult<F>,
    zeta_samples: usize,
    seed: u64,
) -> Result<CoordinateFrame<F>, PipelineError> {
    let grad = field.gradient(&axis.axis_point.view())?;
    let frame = Frame::build_auto(&grad.view())?;
    let eig = eigensystem(&frame)?;
    let norm = linalg::norm(&eig.xi1.view());
    let max_direction = eig.xi1.mapv(|c| c / norm);
    let candidates = random_min_eigenvectors(&frame, zeta_samples, seed)?;
    let min_directions = orthonormal_directions(&frame, &candidates)?;
    Ok(CoordinateFrame {
        origin: origin.to_owned(),
        axis_point: axis.axis_point.clone(),
        center_axis: frame.center_axis(),
        max_direction,
        min_directions,
        rho_axis: axis.rho_axis.clone(),
        geodesics: Vec::new(),
        selected: Vec::new(),
    })
}

/// Sweeps the given directions (all of them when `None`) in both senses to
/// `stop_angle` around the chart origin, in parallel, recording per-curve
/// failures as messages and keeping the batch going.
pub fn geodesic_batch<F, G>(
    field: &G,
    frame: &mut CoordinateFrame<F>,
    directions: Option<&[usize]>,
    stop_angle: F,
    opts: &CurveOptions<F>,
) -> Result<(), PipelineError>
where
    F: Real,
    G: GradientField<F> + Sync,
{
    let count = frame.direction_count();
    let all: Vec<usize> = (0..count).collect();
    let ids: &[usize] = match directions {
        Some(list) if list.is_empty() => return Err(PipelineError::NoDirections),
        Some(list) => list,
        None => &all,
    };
    for &id in ids {
        if id >= count {
            return Err(PipelineError::UnknownDirection { id, count });
        }
    }

    let origin = frame.origin.clone();
    let axis_point = frame.axis_point.clone();
    let work: Vec<(usize, Array1<F>)> = ids
        .iter()
        .map(|&id| {
            let dir = frame.direction(id).expect("validated above");
            (id, dir.slice(s![1..]).to_owned())
        })
        .collect();
    let results: Vec<DirectionCurves<F>> = work
        .par_iter()
        .map(|(id, v0)| {
            let id = *id;
            let run = |v: &Array1<F>| {
                crate::curves::geodesic(
                    field,
                    &axis_point.view(),
                    &origin.view(),
                    &v.view(),
                    stop_angle,
                    opts,
                )
            };
            let (plus, plus_error) = split(run(v0));
            let (minus, minus_error) = split(run(&v0.mapv(|c| -c)));
            DirectionCurves {
                direction_id: id,
                plus,
                minus,
                plus_error,
                minus_error,
            }
        })
        .collect();
    frame.geodesics = results;
    Ok(())
}

fn split<F: Real>(r: Result<CurvePath<F>, CurveError>) -> (Option<CurvePath<F>>, Option<String>) {
    match r {
        Ok(path) => (Some(path), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Keeps the `k`-coordinate chart: the drift coordinate, the principal
/// sweep, and the `k−2` minimal-direction sweeps of least total distance
/// (ties by direction id). Returns the kept transverse ids, principal
/// first, and stores them on the frame.
pub fn select_coordinates<F: Real>(
    frame: &mut CoordinateFrame<F>,
    k: usize,
) -> Result<Vec<usize>, PipelineError> {
    if k < 2 {
        return Err(PipelineError::SelectionTooSmall { k });
    }
    let needed = k - 2;
    let mut ranked: Vec<(F, usize)> = frame
        .geodesics
        .iter()
        .filter(|d| d.direction_id >= 1)
        .filter_map(|d| d.total_distance().map(|t| (t, d.direction_id)))
        .collect();
    if ranked.len() < needed {
        return Err(PipelineError::NotEnoughCurves {
            requested: k,
            needed,
            available: ranked.len(),
        });
    }
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    });
    let mut selected = vec![0usize];
    selected.extend(ranked.iter().take(needed).map(|(_, id)| *id));
    frame.selected = selected.clone();
    Ok(selected)
}

/// Reconstruction quality report: root-mean-squared residual over the data
/// points that projected onto the axis shell, and how many did not.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RmsReport<F: Real> {
    pub rms: F,
    pub used: usize,
    pub excluded: usize,
}

/// Measures what dropping the unkept coordinates costs. Each data point is
/// projected along the drift onto the axis-point level shell, its residual
/// is the distance from the projection to the nearest kept sweep polyline
/// (the chord of the dropped transverse motion), and the residual is scaled
/// by the point's drift-curve position relative to the axis curve, so
/// points deep inside the shell count proportionally less. Points whose
/// projection or drift curve fails are excluded and counted.
pub fn reconstruction_rms<F, G>(
    field: &G,
    frame: &CoordinateFrame<F>,
    data: &ArrayView2<F>,
    kept: &[usize],
    opts: &CurveOptions<F>,
) -> Result<RmsReport<F>, PipelineError>
where
    F: Real,
    G: GradientField<F> + Sync,
{
    let mut lines: Vec<&[Array1<F>]> = Vec::new();
    for &id in kept {
        let curves = frame
            .curves_for(id)
            .ok_or(PipelineError::UnknownDirection {
                id,
                count: frame.direction_count(),
            })?;
        for path in [&curves.plus, &curves.minus].into_iter().flatten() {
            lines.push(&path.points);
        }
    }
    if lines.is_empty() {
        return Err(PipelineError::NoDirections);
    }
    let target = field.level(&frame.axis_point.view())?;
    let rho_ref = frame.rho_axis.total_euclid();
    let floor = F::of(DEFAULT_MODE_FLOOR);

    let residuals: Vec<Option<F>> = (0..data.nrows())
        .into_par_iter()
        .map(|row| {
            let y = data.row(row);
            let lv = field.level(&y).ok()?;
            let shell_point: Array1<F>;
            if (lv - target).abs() <= F::of(1e-10) * (F::one() + target.abs()) {
                shell_point = y.to_owned();
            } else {
                let sense = if lv < target { Sense::Inward } else { Sense::Outward };
                let proj = rho_curve(field, &y, sense, &StopRule::AtLevel { target }, opts).ok()?;
                if proj.stop != StopCause::LevelSet {
                    return None;
                }
                shell_point = proj.end().clone();
            }
            let drift = rho_curve(
                field,
                &y,
                Sense::Inward,
                &StopRule::AtMode { floor },
                opts,
            )
            .ok()?;
            if drift.stop != StopCause::ModeFloor {
                return None;
            }
            let rho_y = drift.total_euclid();
            let chord = lines
                .iter()
                .map(|pts| dist_to_polyline(pts, &shell_point.view()))
                .fold(F::infinity(), F::min);
            Some(chord * rho_y / rho_ref)
        })
        .collect();

    let mut sum_sq = F::zero();
    let mut used = 0usize;
    let mut excluded = 0usize;
    for r in residuals {
        match r {
            Some(v) => {
                sum_sq += v * v;
                used += 1;
            }
            None => excluded += 1,
        }
    }
    if used == 0 {
        return Err(PipelineError::EmptyReconstruction { excluded });
    }
    Ok(RmsReport {
        rms: (sum_sq / F::of(used as f64)).sqrt(),
        used,
        excluded,
    })
}

/// Distance from `x` to a polyline given by its knots.
fn dist_to_polyline<F: Real>(points: &[Array1<F>], x: &ArrayView1<F>) -> F {
    if points.len() == 1 {
        return linalg::distance(&points[0].view(), x);
    }
    let mut best = F::infinity();
    for pair in points.windows(2) {
        let a = &pair[0];
        let b = &pair[1];
        let mut ab2 = F::zero();
        let mut t = F::zero();
        for i in 0..x.len() {
            let d = b[i] - a[i];
            ab2 += d * d;
            t += (x[i] - a[i]) * d;
        }
        let t = if ab2 > F::zero() {
            (t / ab2).max(F::zero()).min(F::one())
        } else {
            F::zero()
        };
        let mut d2 = F::zero();
        for i in 0..x.len() {
            let c = a[i] + t * (b[i] - a[i]);
            let d = x[i] - c;
            d2 += d * d;
        }
        best = best.min(d2);
    }
    best.sqrt()
}

/// Principal components of a sphere's members.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaResult<F: Real> {
    /// Descending.
    pub eigenvalues: Array1<F>,
    /// One component per row, matching the eigenvalue order; orthonormal.
    pub components: Array2<F>,
}

/// Top-`k` eigenpairs of the member covariance matrix.
pub fn pca_baseline<F: Real>(
    ds: &Dataset<F>,
    sphere: &Sphere<F>,
    k: usize,
) -> Result<PcaResult<F>, PipelineError> {
    let m = sphere.member_ids.len();
    let n = ds.dim();
    if k > m.min(n) {
        return Err(PipelineError::NotEnoughMembers {
            needed: k,
            got: m.min(n),
        });
    }
    let points = members_matrix(ds, sphere);
    let mean = points.mean_axis(Axis(0)).expect("nonempty sphere");
    let centered = &points - &mean.broadcast((m, n)).expect("broadcastable");
    let cov = centered.t().dot(&centered) / F::of((m - 1).max(1) as f64);
    let (vals, vecs) = linalg::eigh_jacobi(&cov.view());
    // Ascending from the decomposition; keep the top `k` descending.
    let mut eigenvalues = Array1::zeros(k);
    let mut components = Array2::zeros((k, n));
    for out in 0..k {
        let src = n - 1 - out;
        eigenvalues[out] = vals[src];
        components.row_mut(out).assign(&vecs.column(src));
    }
    Ok(PcaResult {
        eigenvalues,
        components,
    })
}

/// Euclidean angle between `a` and `b` as seen from `origin`.
pub fn angular_separation<F: Real>(
    origin: &ArrayView1<F>,
    a: &ArrayView1<F>,
    b: &ArrayView1<F>,
) -> F {
    let mut dot = F::zero();
    let mut na = F::zero();
    let mut nb = F::zero();
    for i in 0..origin.len() {
        let ai = a[i] - origin[i];
        let bi = b[i] - origin[i];
        dot += ai * bi;
        na += ai * ai;
        nb += bi * bi;
    }
    let denom = (na * nb).sqrt();
    if !(denom > F::zero()) {
        return F::zero();
    }
    let mut c = dot / denom;
    if c > F::one() {
        c = F::one();
    }
    if c < -F::one() {
        c = -F::one();
    }
    c.acos()
}

/// Fraction of `reference` ids that also appear in `other`.
pub fn overlap_fraction(reference: &[usize], other: &[usize]) -> f64 {
    if reference.is_empty() {
        return 1.0;
    }
    let hits = reference.iter().filter(|id| other.contains(id)).count();
    hits as f64 / reference.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_sample, MixturePotential, SyntheticPotential};
    use crate::field::KernelField;
    use ndarray::array;

    fn radial_potential(n: usize) -> MixturePotential<f64> {
        let sigma = std::f64::consts::FRAC_1_SQRT_2;
        SyntheticPotential::gaussian(Array1::from_elem(n, sigma))
            .unwrap()
            .into()
    }

    fn small_proto_params() -> ProtoParams<f64> {
        ProtoParams {
            n_starts: 6,
            data_sphere_k: 900,
            coord_sphere_k: 300,
            ascent_sample: 250,
            ..ProtoParams::default()
        }
    }

    #[test]
    fn single_gaussian_yields_one_prototype_near_the_mean() {
        let pot: MixturePotential<f64> = SyntheticPotential::gaussian(array![1.0, 0.8, 0.9])
            .unwrap()
            .into();
        let ds = synthetic_sample(&pot, 1500, 41).unwrap();
        let params = small_proto_params();
        let records = find_prototypes(&ds, &params).unwrap();
        assert_eq!(records.len(), 1, "expected a single mode");
        let rec = &records[0];
        // The sample mode sits near the distribution mode (the origin).
        assert!(
            linalg::norm(&rec.modified_prototype.view()) < 0.25,
            "mode landed at {:?}",
            rec.modified_prototype
        );
        assert_eq!(rec.coord_sphere.center, rec.modified_prototype);
        assert_eq!(rec.data_sphere.member_ids.len(), 900);
        assert_eq!(rec.coord_sphere.member_ids.len(), 300);

        // Identical seeds reproduce the records bitwise.
        let again = find_prototypes(&ds, &params).unwrap();
        assert_eq!(again.len(), 1);
        assert_eq!(again[0].modified_prototype, rec.modified_prototype);
        assert_eq!(again[0].raw_prototype, rec.raw_prototype);
    }

    #[test]
    fn separated_mixture_yields_one_prototype_per_component() {
        let a = SyntheticPotential::gaussian(array![1.0, 1.0, 1.0])
            .unwrap()
            .with_shift(array![6.0, 6.0, 6.0]);
        let b = SyntheticPotential::gaussian(array![1.0, 1.0, 1.0])
            .unwrap()
            .with_shift(array![-6.0, -6.0, -6.0]);
        let pot = MixturePotential::new(vec![a, b], vec![0.5, 0.5]).unwrap();
        let ds = synthetic_sample(&pot, 1600, 17).unwrap();
        let mut params = small_proto_params();
        params.n_starts = 10;
        let records = find_prototypes(&ds, &params).unwrap();
        assert_eq!(records.len(), 2, "expected both components");
        let centers = [array![6.0, 6.0, 6.0], array![-6.0, -6.0, -6.0]];
        let mut seen = [false, false];
        for rec in &records {
            let (which, dist) = crate::neighbors::nearest_center(
                &centers,
                &rec.modified_prototype.view(),
            )
            .unwrap();
            assert!(dist < 0.6, "prototype {dist} off its component center");
            seen[which] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn axis_search_finds_the_flat_direction_of_an_anisotropic_gaussian() {
        // |∇U| on a fixed shell is smallest along the widest axis.
        let pot: MixturePotential<f64> =
            SyntheticPotential::gaussian(array![2.0, 1.0, 1.0, 1.0]).unwrap().into();
        let res = principal_axis(
            &pot,
            &Array1::zeros(4).view(),
            1.0,
            AxisMode::Fast,
            3,
            &CurveOptions::default(),
        )
        .unwrap();
        let u = res.axis_point.clone();
        let align = u[0].abs() / linalg::norm(&u.view());
        assert!(
            align > (10.0_f64).to_radians().cos(),
            "axis point {u:?} misaligned with the wide axis"
        );
        assert!(!res.stalled);
        // Deterministic under the same seed.
        let again = principal_axis(
            &pot,
            &Array1::zeros(4).view(),
            1.0,
            AxisMode::Fast,
            3,
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(again.axis_point, res.axis_point);
    }

    #[test]
    fn isotropic_shell_ties_and_the_drift_curve_oracle_holds() {
        let pot = radial_potential(3);
        let r = 1.2;
        let res = principal_axis(
            &pot,
            &Array1::zeros(3).view(),
            r,
            AxisMode::Fast,
            7,
            &CurveOptions::default(),
        )
        .unwrap();
        // Any shell point is a valid minimizer; the drift curve oracle pins
        // the lengths: Euclidean r, Riemannian r²/2.
        assert!((linalg::norm(&res.axis_point.view()) - r).abs() < 1e-9);
        assert!((res.rho_axis.total_euclid() - r).abs() < 1e-4);
        assert!((res.rho_axis.total_riem() - r * r / 2.0).abs() < 1e-4);
    }

    #[test]
    fn refined_axis_never_loses_to_fast() {
        let pot: MixturePotential<f64> =
            SyntheticPotential::curved(array![1.0, 0.7, 0.5], array![0.0, 0.45, 0.3])
                .unwrap()
                .into();
        let center = Array1::zeros(3);
        let fast = principal_axis(&pot, &center.view(), 1.0, AxisMode::Fast, 11, &CurveOptions::default())
            .unwrap();
        let refined = principal_axis(
            &pot,
            &center.view(),
            1.0,
            AxisMode::Refined,
            11,
            &CurveOptions::default(),
        )
        .unwrap();
        let lf = fast.rho_axis.total_riem();
        let lr = refined.rho_axis.total_riem();
        assert!(lr <= lf, "refined {lr} worse than fast {lf}");
        assert!((lf - lr) / lf < 0.01, "refinement moved too far: {lf} vs {lr}");
    }

    #[test]
    fn frame_directions_are_orthonormal_with_the_right_energies() {
        let pot: MixturePotential<f64> =
            SyntheticPotential::curved(array![1.0, 0.8, 0.7, 0.6, 0.5], array![0.0, 0.3, 0.2, 0.25, 0.15])
                .unwrap()
                .into();
        let center = Array1::zeros(5);
        let axis = principal_axis(&pot, &center.view(), 1.0, AxisMode::Fast, 5, &CurveOptions::default())
            .unwrap();
        let frame = build_frame_at_axis(&pot, &center.view(), &axis, 4000, 5).unwrap();
        assert_eq!(frame.min_directions.len(), 3);

        // Orthonormality across the whole direction set.
        let mut dirs = vec![frame.max_direction.clone()];
        dirs.extend(frame.min_directions.iter().cloned());
        for (i, a) in dirs.iter().enumerate() {
            for (j, b) in dirs.iter().enumerate() {
                let dot = a.dot(b);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "dirs {i},{j} dot {dot}");
            }
            assert_eq!(a[0], 0.0, "direction {i} leaks into the drift slot");
        }

        // Energy integrands: the metric quadratic form gives |∇U|² on the
        // principal direction and P₀² on each minimal one.
        let grad = pot.gradient(&frame.axis_point.view()).unwrap();
        let moving = Frame::build(&grad.view(), frame.center_axis).unwrap();
        let g = crate::geometry::metric(&moving).g;
        let quad = |d: &Array1<f64>| d.dot(&g.dot(d));
        let gn2 = grad.dot(&grad);
        let p0 = grad[frame.center_axis];
        assert!((quad(&frame.max_direction) - gn2).abs() < 1e-9 * gn2);
        for d in &frame.min_directions {
            assert!((quad(d) - p0 * p0).abs() < 1e-9 * gn2);
        }

        // The ambient tangents stand orthogonal to the gradient.
        for d in &dirs {
            let w = moving.tangent_from_transverse(&d.slice(s![1..]).to_owned().view());
            assert!(w.dot(&grad).abs() < 1e-9 * linalg::norm(&grad.view()));
        }
    }

    #[test]
    fn sphere_batch_totals_match_the_great_circle() {
        let pot = radial_potential(3);
        let r = 1.0;
        let center = Array1::zeros(3);
        let axis = principal_axis(&pot, &center.view(), r, AxisMode::Fast, 2, &CurveOptions::default())
            .unwrap();
        let mut frame = build_frame_at_axis(&pot, &center.view(), &axis, 2000, 2).unwrap();
        geodesic_batch(
            &pot,
            &mut frame,
            None,
            std::f64::consts::FRAC_PI_2,
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(frame.geodesics.len(), 2);
        for d in &frame.geodesics {
            assert!(d.completed(), "direction {} failed: {:?} {:?}", d.direction_id, d.plus_error, d.minus_error);
            let total = d.total_distance().unwrap();
            let want = std::f64::consts::PI * r;
            assert!(
                (total - want).abs() < 1e-3 * want,
                "direction {} total {total} vs {want}",
                d.direction_id
            );
            // Gram identity per sense.
            for path in [d.plus.as_ref().unwrap(), d.minus.as_ref().unwrap()] {
                assert!((path.total_riem() - path.total_euclid()).abs() < 1e-3 * path.total_euclid());
            }
        }

        let selected = select_coordinates(&mut frame, 3).unwrap();
        assert_eq!(selected, vec![0, 1]);
        assert!(matches!(
            select_coordinates(&mut frame, 4),
            Err(PipelineError::NotEnoughCurves { .. })
        ));
    }

    /// A frame whose geodesics carry hand-made totals, for selection logic.
    fn synthetic_frame(totals: &[(usize, Option<f64>)]) -> CoordinateFrame<f64> {
        let fake_path = |len: f64| CurvePath::<f64> {
            points: vec![array![0.0, 0.0, 0.0], array![len, 0.0, 0.0]],
            params: vec![0.0, len],
            euclid_len: vec![0.0, len],
            riem_len: vec![0.0, len],
            center_history: vec![],
            v_history: vec![],
            stop: StopCause::TargetAngle,
        };
        let geodesics = totals
            .iter()
            .map(|&(id, total)| match total {
                Some(t) => DirectionCurves {
                    direction_id: id,
                    plus: Some(fake_path(t / 2.0)),
                    minus: Some(fake_path(t / 2.0)),
                    plus_error: None,
                    minus_error: None,
                },
                None => DirectionCurves {
                    direction_id: id,
                    plus: None,
                    minus: None,
                    plus_error: Some("stalled".into()),
                    minus_error: None,
                },
            })
            .collect();
        CoordinateFrame {
            origin: Array1::zeros(3),
            axis_point: array![1.0, 0.0, 0.0],
            center_axis: 0,
            max_direction: array![0.0, 1.0, 0.0],
            min_directions: vec![array![0.0, 0.0, 1.0]; 4],
            rho_axis: fake_path(1.0),
            geodesics,
            selected: vec![],
        }
    }

    #[test]
    fn selection_ranks_by_total_and_breaks_ties_by_id() {
        let mut frame = synthetic_frame(&[
            (0, Some(9.0)),
            (1, Some(2.0)),
            (2, Some(1.0)),
            (3, Some(1.0)),
            (4, None),
        ]);
        let picked = select_coordinates(&mut frame, 4).unwrap();
        assert_eq!(picked, vec![0, 2, 3]);
        assert_eq!(frame.selected, picked);

        // Dropping the worst candidate leaves the selection unchanged.
        let mut smaller = synthetic_frame(&[
            (0, Some(9.0)),
            (2, Some(1.0)),
            (3, Some(1.0)),
        ]);
        assert_eq!(select_coordinates(&mut smaller, 4).unwrap(), picked);

        assert!(matches!(
            select_coordinates(&mut frame, 1),
            Err(PipelineError::SelectionTooSmall { k: 1 })
        ));
    }

    #[test]
    fn reconstruction_vanishes_on_kept_knots_and_scales_down_inside() {
        let pot = radial_potential(3);
        let center = Array1::zeros(3);
        let axis = principal_axis(&pot, &center.view(), 1.0, AxisMode::Fast, 2, &CurveOptions::default())
            .unwrap();
        let mut frame = build_frame_at_axis(&pot, &center.view(), &axis, 2000, 2).unwrap();
        geodesic_batch(&pot, &mut frame, None, std::f64::consts::FRAC_PI_2, &CurveOptions::default())
            .unwrap();

        // Data living on the kept sweep reconstructs at (numerically) zero.
        let kept = [0usize];
        let on_curve = frame.curves_for(0).unwrap().plus.as_ref().unwrap();
        let rows: Vec<Array1<f64>> = on_curve.points.iter().skip(2).take(6).cloned().collect();
        let mut data = Array2::zeros((rows.len(), 3));
        for (i, r) in rows.iter().enumerate() {
            data.row_mut(i).assign(r);
        }
        let report =
            reconstruction_rms(&pot, &frame, &data.view(), &kept, &CurveOptions::default()).unwrap();
        assert_eq!(report.excluded, 0);
        assert!(report.rms < 1e-4, "rms {} on on-curve data", report.rms);

        // A point on the dropped sweep at half the shell radius: the chord
        // to the kept curve is scaled by the drift-position ratio.
        let dropped = frame.curves_for(1).unwrap().plus.as_ref().unwrap();
        let outer = dropped.points.last().unwrap().clone();
        let inner = outer.mapv(|c| c * 0.5);
        let mut data = Array2::zeros((1, 3));
        data.row_mut(0).assign(&inner);
        let inner_report =
            reconstruction_rms(&pot, &frame, &data.view(), &kept, &CurveOptions::default()).unwrap();
        data.row_mut(0).assign(&outer);
        let outer_report =
            reconstruction_rms(&pot, &frame, &data.view(), &kept, &CurveOptions::default()).unwrap();
        let ratio = inner_report.rms / outer_report.rms;
        assert!(
            (ratio - 0.5).abs() < 0.05,
            "drift scaling ratio {ratio} (inner {} outer {})",
            inner_report.rms,
            outer_report.rms
        );
    }

    #[test]
    fn dropping_the_principal_sweep_reconstructs_better() {
        // A banana-curved density with one wide independent axis, rigidly
        // rotated so the wide axis no longer matches an ambient coordinate.
        // The shell minimum of |∇U| sits at the wide pole, the principal
        // transverse direction falls in the thin warped plane, and the
        // minimal direction runs along the ridge fan where the projected
        // data actually spreads. Keeping the minimal sweep and dropping the
        // principal one must then beat the reverse choice.
        let angle = 30.0_f64.to_radians();
        let (c, s) = (angle.cos(), angle.sin());
        let rotation = array![[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
        let pot: MixturePotential<f64> =
            SyntheticPotential::curved(array![1.0, 0.3, 1.6], array![0.0, 0.5, 0.0])
                .unwrap()
                .with_pose(rotation, Array1::zeros(3))
                .unwrap()
                .into();
        let center = Array1::zeros(3);
        let axis = principal_axis(&pot, &center.view(), 1.0, AxisMode::Fast, 13, &CurveOptions::default())
            .unwrap();
        let mut frame = build_frame_at_axis(&pot, &center.view(), &axis, 2000, 13).unwrap();
        geodesic_batch(&pot, &mut frame, None, std::f64::consts::FRAC_PI_2, &CurveOptions::default())
            .unwrap();
        for d in &frame.geodesics {
            assert!(
                d.completed(),
                "direction {} did not finish: {:?} {:?}",
                d.direction_id,
                d.plus_error,
                d.minus_error
            );
        }

        // The level surface is closed, so samples from the opposite side of
        // the mode project onto the far cap, outside the swept patch. The
        // chart only parametrizes points whose projection falls within the
        // sweep, so the comparison runs on those.
        let raw = pot.sample_matrix(1500, 29);
        let target = pot.level(&frame.axis_point.view()).unwrap();
        let patch = 70.0_f64.to_radians();
        let mut rows: Vec<Array1<f64>> = Vec::new();
        for i in 0..raw.nrows() {
            let y = raw.row(i);
            let lv = pot.level(&y).unwrap();
            let sense = if lv < target { Sense::Inward } else { Sense::Outward };
            let Ok(proj) = rho_curve(
                &pot,
                &y,
                sense,
                &StopRule::AtLevel { target },
                &CurveOptions::default(),
            ) else {
                continue;
            };
            if proj.stop != StopCause::LevelSet {
                continue;
            }
            let ang = angular_separation(
                &center.view(),
                &frame.axis_point.view(),
                &proj.end().view(),
            );
            if ang <= patch {
                rows.push(y.to_owned());
            }
        }
        assert!(rows.len() >= 400, "patch holds only {} points", rows.len());
        let mut data = Array2::zeros((rows.len(), 3));
        for (i, r) in rows.iter().enumerate() {
            data.row_mut(i).assign(r);
        }

        let keep_min =
            reconstruction_rms(&pot, &frame, &data.view(), &[1], &CurveOptions::default()).unwrap();
        let keep_max =
            reconstruction_rms(&pot, &frame, &data.view(), &[0], &CurveOptions::default()).unwrap();
        assert!(
            keep_min.rms < keep_max.rms,
            "keeping the minimal sweep ({}) should beat the principal one ({})",
            keep_min.rms,
            keep_max.rms
        );
        assert!(keep_min.used > 400, "too many exclusions: {}", keep_min.excluded);
    }

    #[test]
    fn pca_recovers_the_stretched_axis() {
        let pot: MixturePotential<f64> =
            SyntheticPotential::gaussian(array![2.0, 1.0, 1.0, 1.0]).unwrap().into();
        let ds = synthetic_sample(&pot, 8000, 23).unwrap();
        let all = data_sphere(&ds, &Array1::zeros(4).view(), ds.len()).unwrap();
        let pca = pca_baseline(&ds, &all, 3).unwrap();
        assert!(pca.eigenvalues[0] > pca.eigenvalues[1]);
        let lead = pca.components.row(0);
        assert!(lead[0].abs() > 0.98, "leading component {lead:?}");
        let ratio = pca.eigenvalues[0] / pca.eigenvalues[1];
        assert!((ratio - 4.0).abs() < 0.8, "variance ratio {ratio}");
        for i in 0..3 {
            for j in 0..3 {
                let dot = pca.components.row(i).dot(&pca.components.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
        assert!(matches!(
            pca_baseline(&ds, &all, 5),
            Err(PipelineError::NotEnoughMembers { .. })
        ));
    }

    #[test]
    fn cluster_gradients_ignore_the_far_component() {
        // Two clusters far apart: the kernel gradient near one center is
        // indistinguishable from the gradient computed on that cluster's
        // points alone.
        let a = SyntheticPotential::gaussian(array![1.0, 1.0, 1.0])
            .unwrap()
            .with_shift(array![8.0, 0.0, 0.0]);
        let b = SyntheticPotential::gaussian(array![1.0, 1.0, 1.0])
            .unwrap()
            .with_shift(array![-8.0, 0.0, 0.0]);
        let pot = MixturePotential::new(vec![a, b], vec![0.5, 0.5]).unwrap();
        let points = pot.sample_matrix(1200, 3);
        let cluster: Vec<usize> = (0..points.nrows())
            .filter(|&i| points[[i, 0]] > 0.0)
            .collect();
        let mut own = Array2::zeros((cluster.len(), 3));
        for (row, &id) in cluster.iter().enumerate() {
            own.row_mut(row).assign(&points.row(id));
        }
        let ctx_all = KernelContext::new(0.5, points).unwrap();
        let ctx_own = KernelContext::new(0.5, own).unwrap();
        let field_all = KernelField::new(&ctx_all);
        let field_own = KernelField::new(&ctx_own);
        let mut rng = stream_rng(77, 1);
        for _ in 0..20 {
            let probe = array![
                8.0 + rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0)
            ];
            let ga = field_all.gradient(&probe.view()).unwrap();
            let go = field_own.gradient(&probe.view()).unwrap();
            let cos = ga.dot(&go) / (linalg::norm(&ga.view()) * linalg::norm(&go.view()));
            assert!(cos > 0.99, "gradient cosine {cos} at {probe:?}");
        }
    }

    #[test]
    fn concordance_helpers_measure_angle_and_overlap() {
        let origin = array![1.0, 1.0];
        let a = array![2.0, 1.0];
        let b = array![1.0, 3.0];
        let angle = angular_separation(&origin.view(), &a.view(), &b.view());
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(overlap_fraction(&[1, 2, 3, 4], &[2, 4, 9]), 0.5);
        assert_eq!(overlap_fraction(&[], &[1]), 1.0);
    }
}
