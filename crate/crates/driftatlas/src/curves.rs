//! Integral curves of the drift field and constrained geodesics.
//!
//! Three curve families share one integrator. The ρ curves follow the
//! normalized drift `±∇U/|∇U|`, so their parameter is Euclidean arc length
//! and their Riemannian length accumulates `∫|∇U| ds`. The geodesics run
//! inside the transverse subbundle `span{V₁, …, V_{n−1}}`: the velocity is
//! `x′ = Σᵢ vⁱ Vᵢ(x)` and the constrained Euler-Lagrange system evolves one
//! Lagrange multiplier per coordinate,
//!
//! ```text
//! λ′_m = ∂_m P₀ (P₀|v|² − Σλᵢvᵢ) + (Σ ∂_m P_j v_j)(ΣP_j v_j + λ₀),
//! ```
//!
//! while `v` is eliminated algebraically each evaluation through
//! `(G_Θ v)ᵢ = P₀λᵢ − Pᵢλ₀`, whose closed-form solution is
//! `vᵢ = (λᵢ − Pᵢ·(ΣP_mλ_m)/(ΣP_m²)) / P₀`. All indices are frame slots
//! (center first); the multipliers are gauge-redundant along `P`, and the
//! initial gauge `λᵢ = P₀v0ᵢ, λ₀ = −ΣPᵢv0ᵢ` reproduces a prescribed `v0`
//! exactly. When the center component `P₀` decays toward the frame floor
//! the integration stops on an event, re-centers on the strongest axis,
//! converts the ambient tangent into the new frame, and continues; the
//! recorded coefficient functions `v(t)` can later drive transverse flows
//! through other starting points. Both arc lengths ride along in the ODE
//! state, so they carry integrator accuracy rather than quadrature error.

use ndarray::{s, Array1, ArrayView1};
use thiserror::Error;
use serde::{Deserialize, Serialize};

use crate::field::{FieldError, GradientField};
use crate::geometry::{riemannian_norm_sq, Frame, GeometryError};
use crate::linalg;
use crate::ode::{integrate, OdeError, OdeOptions, Solution};
use crate::scalar::Real;

/// Default stationarity floor declaring that a ρ curve has arrived at a
/// mode (kernel fields measure the mean-shift displacement).
pub const DEFAULT_MODE_FLOOR: f64 = 1e-6;

/// A geodesic re-centers when `|P₀|` falls under this fraction of the
/// largest gradient component, well above the frame-construction floor so
/// the `1/P₀` factors in the system stay conditioned.
pub const RECENTER_REL: f64 = 0.1;

/// Cap on re-center legs per geodesic before declaring the run exhausted.
const MAX_LEGS: usize = 200;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("start is already stationary: measure {measure:e} under floor {floor:e}")]
    StationaryStart { measure: f64, floor: f64 },
    #[error("initial direction must be finite and nonzero")]
    BadDirection,
    #[error("curve start coincides with the sweep origin")]
    DegenerateOrigin,
    #[error("coefficient schedule needs at least one recorded knot")]
    EmptySchedule,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Which way a ρ curve runs relative to the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// With `+∇U`: uphill in density, toward a mode.
    Inward,
    /// Against the drift, away from the mode.
    Outward,
}

impl Sense {
    fn sign<F: Real>(self) -> F {
        match self {
            Sense::Inward => F::one(),
            Sense::Outward => -F::one(),
        }
    }
}

/// When a ρ curve should stop (geodesics stop on the sweep angle instead).
#[derive(Debug, Clone)]
pub enum StopRule<F: Real> {
    /// Stationarity measure dropped under `floor`: the curve reached a mode.
    AtMode { floor: F },
    /// Euclidean arc length reached `length`.
    MaxEuclid { length: F },
    /// Entered the `radius` ball around `target`.
    NearPoint { target: Array1<F>, radius: F },
    /// Crossed the level set `field.level(x) = target`; the drift moves the
    /// level monotonically, so this projects a point onto an equal-density
    /// shell.
    AtLevel { target: F },
}

/// Why a curve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopCause {
    /// Stationarity floor reached (mode arrival).
    ModeFloor,
    /// Euclidean length budget spent.
    LengthBudget,
    /// Proximity target entered.
    NearTarget,
    /// Requested level set crossed.
    LevelSet,
    /// Sweep angle from the origin reached.
    TargetAngle,
    /// Parameter or step budget ran out first: a partial path.
    Exhausted,
}

/// One recorded coefficient sample of a geodesic: time, the frame it is
/// expressed in (center axis; remaining axes ascend), and the transverse
/// coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VKnot<F: Real> {
    pub t: F,
    pub center_axis: usize,
    pub v: Array1<F>,
}

/// An integrated curve: ambient knots with parameters, cumulative arc
/// lengths, re-centering history, and (for geodesics) the coefficient
/// functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePath<F: Real> {
    pub points: Vec<Array1<F>>,
    /// Strictly increasing, starting at zero.
    pub params: Vec<F>,
    /// Cumulative Euclidean arc length at each knot.
    pub euclid_len: Vec<F>,
    /// Cumulative Riemannian arc length at each knot.
    pub riem_len: Vec<F>,
    /// `(t, ambient center axis)` for the initial frame and every re-center
    /// event; empty for ρ curves.
    pub center_history: Vec<(F, usize)>,
    /// Coefficient samples at the knots; geodesic and flow paths only. A
    /// re-center records two samples at the event time, one closing the old
    /// frame and one opening the new.
    pub v_history: Vec<VKnot<F>>,
    pub stop: StopCause,
}

impl<F: Real> CurvePath<F> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> &Array1<F> {
        &self.points[0]
    }

    pub fn end(&self) -> &Array1<F> {
        self.points.last().expect("paths hold at least the start")
    }

    pub fn total_param(&self) -> F {
        *self.params.last().expect("paths hold at least the start")
    }

    pub fn total_euclid(&self) -> F {
        *self.euclid_len.last().expect("paths hold at least the start")
    }

    pub fn total_riem(&self) -> F {
        *self.riem_len.last().expect("paths hold at least the start")
    }

    /// The frame center axis active at parameter `t`; `None` for curves
    /// that never tracked one (drift curves have no moving frame).
    pub fn center_at(&self, t: F) -> Option<usize> {
        let mut current = None;
        for &(start, axis) in &self.center_history {
            if start <= t {
                current = Some(axis);
            } else {
                break;
            }
        }
        current
    }
}

/// Integration controls shared by every curve family.
#[derive(Debug, Clone)]
pub struct CurveOptions<F: Real> {
    pub ode: OdeOptions<F>,
    /// Hard cap on the curve parameter; hitting it ends the curve with
    /// [`StopCause::Exhausted`].
    pub t_cap: F,
}

impl<F: Real> Default for CurveOptions<F> {
    fn default() -> Self {
        CurveOptions {
            ode: OdeOptions::default(),
            t_cap: F::of(1e4),
        }
    }
}

/// Maps a curve-layer failure inside an ODE right-hand side into the
/// integrator's error channel.
fn rhs_failure<F: Real, E>(t: F, err: E) -> OdeError
where
    E: std::error::Error + Send + Sync + 'static,
{
    OdeError::RhsFailure {
        t: t.as_f64(),
        source: Box::new(err),
    }
}

/// Raw accepted-step records collected during one integration leg.
struct RawKnots<F: Real> {
    rows: Vec<(F, Array1<F>)>,
}

impl<F: Real> RawKnots<F> {
    fn new() -> Self {
        RawKnots { rows: Vec::new() }
    }
}

/// Integral curve of the normalized drift `±∇U/|∇U|` from `x0`.
///
/// The parameter is Euclidean arc length; the Riemannian length integrates
/// `|∇U|` along the way. A stationarity-floor event always guards the run
/// (a curve cannot march through a mode); the stop rule adds its own
/// terminal condition on top.
pub fn rho_curve<F: Real>(
    field: &dyn GradientField<F>,
    x0: &ArrayView1<F>,
    sense: Sense,
    stop: &StopRule<F>,
    opts: &CurveOptions<F>,
) -> Result<CurvePath<F>, CurveError> {
    let n = field.dim();
    assert_eq!(x0.len(), n);
    let floor = match stop {
        StopRule::AtMode { floor } => *floor,
        _ => F::of(DEFAULT_MODE_FLOOR),
    };
    let measure = field.stationarity(x0)?;
    if !(measure > floor) {
        return Err(CurveError::StationaryStart {
            measure: measure.as_f64(),
            floor: floor.as_f64(),
        });
    }

    let sign: F = sense.sign();
    let mut rhs = |t: F, y: &ArrayView1<F>| -> Result<Array1<F>, OdeError> {
        let x = y.slice(s![..n]);
        let grad = field.gradient(&x).map_err(|e| rhs_failure(t, e))?;
        let norm = linalg::norm(&grad.view());
        if !(norm > F::zero()) {
            return Err(rhs_failure(
                t,
                CurveError::StationaryStart {
                    measure: 0.0,
                    floor: floor.as_f64(),
                },
            ));
        }
        let mut dy = Array1::zeros(n + 2);
        for i in 0..n {
            dy[i] = sign * grad[i] / norm;
        }
        dy[n] = F::one();
        dy[n + 1] = norm;
        Ok(dy)
    };

    let floor_event = |_t: F, y: &ArrayView1<F>| -> F {
        let x = y.slice(s![..n]);
        match field.stationarity(&x) {
            Ok(m) => m - floor,
            Err(_) => F::zero(),
        }
    };
    let near_event = |target: &Array1<F>, radius: F| {
        let target = target.clone();
        move |_t: F, y: &ArrayView1<F>| -> F {
            let x = y.slice(s![..n]);
            linalg::distance(&x, &target.view()) - radius
        }
    };
    let level_event = |target: F| {
        move |_t: F, y: &ArrayView1<F>| -> F {
            let x = y.slice(s![..n]);
            match field.level(&x) {
                Ok(lv) => lv - target,
                Err(_) => F::zero(),
            }
        }
    };

    let t_end = match stop {
        StopRule::MaxEuclid { length } => (*length).min(opts.t_cap),
        _ => opts.t_cap,
    };
    let mut y0 = Array1::zeros(n + 2);
    y0.slice_mut(s![..n]).assign(x0);

    let mut raw = RawKnots::new();
    let near;
    let shell;
    let mut events: Vec<&dyn Fn(F, &ArrayView1<F>) -> F> = vec![&floor_event];
    match stop {
        StopRule::NearPoint { target, radius } => {
            near = near_event(target, *radius);
            events.push(&near);
        }
        StopRule::AtLevel { target } => {
            shell = level_event(*target);
            events.push(&shell);
        }
        _ => {}
    }
    let sol = run_leg(&mut rhs, F::zero(), &y0, t_end, &events, &opts.ode, &mut raw)?;

    let mut path = CurvePath {
        points: vec![x0.to_owned()],
        params: vec![F::zero()],
        euclid_len: vec![F::zero()],
        riem_len: vec![F::zero()],
        center_history: Vec::new(),
        v_history: Vec::new(),
        stop: StopCause::Exhausted,
    };
    let append = |path: &mut CurvePath<F>, t: F, y: &Array1<F>| {
        path.points.push(y.slice(s![..n]).to_owned());
        path.params.push(t);
        path.euclid_len.push(y[n]);
        path.riem_len.push(y[n + 1]);
    };
    for (t, y) in &raw.rows {
        append(&mut path, *t, y);
    }
    match &sol {
        LegEnd::Event { index, t, y } => {
            append(&mut path, *t, y);
            path.stop = if *index == 0 {
                StopCause::ModeFloor
            } else {
                match stop {
                    StopRule::NearPoint { .. } => StopCause::NearTarget,
                    _ => StopCause::LevelSet,
                }
            };
        }
        LegEnd::SpanEnd { .. } => {
            path.stop = match stop {
                StopRule::MaxEuclid { .. } if t_end < opts.t_cap => StopCause::LengthBudget,
                _ => StopCause::Exhausted,
            };
        }
        LegEnd::Budget { t, y } => {
            if *t > path.total_param() {
                append(&mut path, *t, y);
            }
            path.stop = StopCause::Exhausted;
        }
    }
    Ok(path)
}

/// How one integration leg ended.
enum LegEnd<F: Real> {
    Event { index: usize, t: F, y: Array1<F> },
    SpanEnd { y: Array1<F> },
    Budget { t: F, y: Array1<F> },
}

/// Runs one integration leg, turning step-budget exhaustion into a soft
/// ending instead of an error (curves report those as partial paths).
fn run_leg<F: Real>(
    rhs: &mut dyn FnMut(F, &ArrayView1<F>) -> Result<Array1<F>, OdeError>,
    t0: F,
    y0: &Array1<F>,
    t_end: F,
    events: &[&dyn Fn(F, &ArrayView1<F>) -> F],
    opts: &OdeOptions<F>,
    raw: &mut RawKnots<F>,
) -> Result<LegEnd<F>, CurveError> {
    let rows = &mut raw.rows;
    let outcome: Result<Solution<F>, OdeError> = integrate(
        rhs,
        t0,
        &y0.view(),
        t_end,
        events,
        opts,
        &mut |t, y| rows.push((t, y.to_owned())),
    );
    match outcome {
        Ok(sol) => match sol.event {
            Some(hit) => Ok(LegEnd::Event {
                index: hit.index,
                t: hit.t,
                y: hit.y,
            }),
            None => Ok(LegEnd::SpanEnd { y: sol.y }),
        },
        Err(OdeError::MaxSteps { .. }) => {
            let (t, y) = rows
                .last()
                .cloned()
                .unwrap_or_else(|| (t0, y0.clone()));
            Ok(LegEnd::Budget { t, y })
        }
        Err(e) => Err(CurveError::Ode(e)),
    }
}

/// The initial condition of a constrained geodesic: position, multipliers,
/// the coefficients they encode, and the frame convention in force.
#[derive(Debug, Clone)]
pub struct GeodesicState<F: Real> {
    pub x: Array1<F>,
    /// Multipliers in frame order, `λ₀` first.
    pub lambda: Array1<F>,
    /// Transverse coefficients recovered from the multipliers.
    pub v: Array1<F>,
    pub center_axis: usize,
}

/// Solves the algebraic equation `(G_Θ v)ᵢ = P₀λᵢ − Pᵢλ₀` for the
/// transverse coefficients, using the closed form of the rank-one update.
pub fn coefficients_from_multipliers<F: Real>(
    frame: &Frame<F>,
    lambda: &ArrayView1<F>,
) -> Array1<F> {
    let n = frame.dim();
    assert_eq!(lambda.len(), n);
    let p = frame.p();
    let mut p_dot_l = F::zero();
    let mut p_dot_p = F::zero();
    for m in 0..n {
        p_dot_l += p[m] * lambda[m];
        p_dot_p += p[m] * p[m];
    }
    let ratio = p_dot_l / p_dot_p;
    let mut v = Array1::zeros(n - 1);
    for i in 1..n {
        v[i - 1] = (lambda[i] - p[i] * ratio) / p[0];
    }
    v
}

/// Builds the multiplier state that reproduces the coefficients `v0`
/// exactly, in the gauge `Σ P_m λ_m = 0`: `λᵢ = P₀·v0ᵢ` on the transverse
/// slots and `λ₀ = −Σ Pᵢ·v0ᵢ`.
pub fn geodesic_initial_state<F: Real>(
    frame: &Frame<F>,
    x0: &ArrayView1<F>,
    v0: &ArrayView1<F>,
) -> GeodesicState<F> {
    let n = frame.dim();
    assert_eq!(v0.len(), n - 1);
    let p = frame.p();
    let mut lambda = Array1::zeros(n);
    let mut l0 = F::zero();
    for i in 1..n {
        lambda[i] = p[0] * v0[i - 1];
        l0 -= p[i] * v0[i - 1];
    }
    lambda[0] = l0;
    GeodesicState {
        x: x0.to_owned(),
        lambda,
        v: v0.to_owned(),
        center_axis: frame.center_axis(),
    }
}

/// Euclidean sweep angle of `x` around `origin`, measured against the
/// reference ray `b` (the start position minus the origin).
fn sweep_angle<F: Real>(x: &ArrayView1<F>, origin: &Array1<F>, b: &Array1<F>, b_norm: F) -> F {
    let mut dot = F::zero();
    let mut a_sq = F::zero();
    for i in 0..x.len() {
        let ai = x[i] - origin[i];
        dot += ai * b[i];
        a_sq += ai * ai;
    }
    let a_norm = a_sq.sqrt();
    if !(a_norm > F::zero()) {
        return F::zero();
    }
    let mut c = dot / (a_norm * b_norm);
    if c > F::one() {
        c = F::one();
    }
    if c < -F::one() {
        c = -F::one();
    }
    c.acos()
}

/// Integrates the constrained geodesic from `x0` with initial transverse
/// coefficients `v0` (in the canonical frame at `x0`), sweeping until the
/// Euclidean angle seen from `origin` reaches `stop_angle`.
///
/// The coefficients are rescaled to unit Euclidean speed, so the curve
/// parameter, the Euclidean length, and (through the Gram identity) the
/// Riemannian length all agree up to integrator tolerance. Both lengths
/// are still measured independently. A run that spends its parameter or
/// step budget before the angle is reached comes back with
/// [`StopCause::Exhausted`] (a stall, not an error).
pub fn geodesic<F: Real>(
    field: &dyn GradientField<F>,
    x0: &ArrayView1<F>,
    origin: &ArrayView1<F>,
    v0: &ArrayView1<F>,
    stop_angle: F,
    opts: &CurveOptions<F>,
) -> Result<CurvePath<F>, CurveError> {
    let grad = field.gradient(x0)?;
    let frame = Frame::build_auto(&grad.view())?;
    let w = frame.tangent_from_transverse(v0);
    let speed = linalg::norm(&w.view());
    if !(speed > F::zero()) || !speed.is_finite() {
        return Err(CurveError::BadDirection);
    }
    let v_unit = v0.mapv(|c| c / speed);
    let state = geodesic_initial_state(&frame, x0, &v_unit.view());
    geodesic_from_state(field, &state, origin, stop_angle, opts)
}

/// The geodesic integration itself, from an explicit multiplier state
/// (which [`geodesic`] prepares in the standard gauge). Exposed separately
/// so the multiplier gauge can be exercised directly.
pub fn geodesic_from_state<F: Real>(
    field: &dyn GradientField<F>,
    state: &GeodesicState<F>,
    origin: &ArrayView1<F>,
    stop_angle: F,
    opts: &CurveOptions<F>,
) -> Result<CurvePath<F>, CurveError> {
    let n = field.dim();
    assert_eq!(state.x.len(), n);
    let origin = origin.to_owned();
    let b: Array1<F> = &state.x - &origin;
    let b_norm = linalg::norm(&b.view());
    if !(b_norm > F::zero()) {
        return Err(CurveError::DegenerateOrigin);
    }

    let mut opts = opts.clone();
    if opts.ode.h_max.is_none() {
        // Resolve the sweep: a tenth of the origin distance per step keeps
        // the dense interpolant honest for the two event functions.
        opts.ode.h_max = Some(F::of(0.1) * b_norm);
    }

    let mut path = CurvePath {
        points: vec![state.x.clone()],
        params: vec![F::zero()],
        euclid_len: vec![F::zero()],
        riem_len: vec![F::zero()],
        center_history: vec![(F::zero(), state.center_axis)],
        v_history: vec![VKnot {
            t: F::zero(),
            center_axis: state.center_axis,
            v: state.v.clone(),
        }],
        stop: StopCause::Exhausted,
    };

    let mut t = F::zero();
    let mut center_axis = state.center_axis;
    let mut y = Array1::zeros(2 * n + 2);
    y.slice_mut(s![..n]).assign(&state.x);
    y.slice_mut(s![n..2 * n]).assign(&state.lambda);

    for _leg in 0..MAX_LEGS {
        let perm = frame_perm(n, center_axis);
        let mut rhs = |tt: F, yy: &ArrayView1<F>| -> Result<Array1<F>, OdeError> {
            geodesic_rhs(field, &perm, tt, yy)
        };
        let angle_event = |_t: F, yy: &ArrayView1<F>| -> F {
            let x = yy.slice(s![..n]);
            sweep_angle(&x, &origin, &b, b_norm) - stop_angle
        };
        let recenter_event = |_t: F, yy: &ArrayView1<F>| -> F {
            let x = yy.slice(s![..n]);
            match field.gradient(&x) {
                Ok(g) => {
                    let max = g.iter().fold(F::zero(), |a, gi| a.max(gi.abs()));
                    g[center_axis].abs() - F::of(RECENTER_REL) * max
                }
                Err(_) => F::zero(),
            }
        };
        let events: Vec<&dyn Fn(F, &ArrayView1<F>) -> F> = vec![&angle_event, &recenter_event];

        let mut raw = RawKnots::new();
        let end = run_leg(&mut rhs, t, &y, opts.t_cap, &events, &opts.ode, &mut raw)?;

        // Every accepted step becomes a knot with its coefficients.
        for (tt, yy) in &raw.rows {
            record_geodesic_knot(field, &mut path, center_axis, *tt, yy)?;
        }

        match end {
            LegEnd::Event { index: 0, t: te, y: ye } => {
                record_geodesic_knot(field, &mut path, center_axis, te, &ye)?;
                path.stop = StopCause::TargetAngle;
                return Ok(path);
            }
            LegEnd::Event { t: te, y: ye, .. } => {
                // Center collapse: rebuild the frame on the strongest axis
                // and convert the ambient tangent into it.
                let x_e = ye.slice(s![..n]).to_owned();
                let lam_e = ye.slice(s![n..2 * n]).to_owned();
                let grad_e = field.gradient(&x_e.view())?;
                let old_frame = Frame::build(&grad_e.view(), center_axis)?;
                let v_old = coefficients_from_multipliers(&old_frame, &lam_e.view());
                let w = old_frame.tangent_from_transverse(&v_old.view());
                let new_frame = Frame::build_auto(&grad_e.view())?;
                let v_new = new_frame.transverse_coefficients(&w.view());
                let new_state = geodesic_initial_state(&new_frame, &x_e.view(), &v_new.view());

                path.points.push(x_e.clone());
                path.params.push(te);
                path.euclid_len.push(ye[2 * n]);
                path.riem_len.push(ye[2 * n + 1]);
                path.v_history.push(VKnot {
                    t: te,
                    center_axis,
                    v: v_old,
                });
                path.v_history.push(VKnot {
                    t: te,
                    center_axis: new_frame.center_axis(),
                    v: v_new.clone(),
                });
                path.center_history.push((te, new_frame.center_axis()));

                t = te;
                center_axis = new_frame.center_axis();
                y.slice_mut(s![..n]).assign(&x_e);
                y.slice_mut(s![n..2 * n]).assign(&new_state.lambda);
                y[2 * n] = ye[2 * n];
                y[2 * n + 1] = ye[2 * n + 1];
            }
            LegEnd::SpanEnd { .. } | LegEnd::Budget { .. } => {
                path.stop = StopCause::Exhausted;
                return Ok(path);
            }
        }
    }
    path.stop = StopCause::Exhausted;
    Ok(path)
}

/// Frame order for a center axis: the center first, the rest ascending.
fn frame_perm(n: usize, center_axis: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(n);
    perm.push(center_axis);
    perm.extend((0..n).filter(|&a| a != center_axis));
    perm
}

/// The Euler-Lagrange right-hand side over state
/// `[x (n), λ (n), euclid_len, riem_len]` for a fixed frame permutation.
fn geodesic_rhs<F: Real>(
    field: &dyn GradientField<F>,
    perm: &[usize],
    t: F,
    y: &ArrayView1<F>,
) -> Result<Array1<F>, OdeError> {
    let n = perm.len();
    let x = y.slice(s![..n]);
    let lam = y.slice(s![n..2 * n]);
    let (grad, jac) = field
        .gradient_jacobian(&x)
        .map_err(|e| rhs_failure(t, e))?;

    let p: Vec<F> = perm.iter().map(|&a| grad[a]).collect();
    if p[0] == F::zero() {
        return Err(rhs_failure(
            t,
            GeometryError::DegenerateCenter {
                axis: perm[0],
                component: 0.0,
                floor: 0.0,
            },
        ));
    }
    let mut p_dot_l = F::zero();
    let mut p_dot_p = F::zero();
    for m in 0..n {
        p_dot_l += p[m] * lam[m];
        p_dot_p += p[m] * p[m];
    }
    let ratio = p_dot_l / p_dot_p;
    let mut v = vec![F::zero(); n - 1];
    let mut v_sq = F::zero();
    let mut lam_dot_v = F::zero();
    let mut p_dot_v = F::zero();
    for i in 1..n {
        let vi = (lam[i] - p[i] * ratio) / p[0];
        v[i - 1] = vi;
        v_sq += vi * vi;
        lam_dot_v += lam[i] * vi;
        p_dot_v += p[i] * vi;
    }

    let mut dy = Array1::zeros(2 * n + 2);
    // Velocity in frame slots, pushed back to ambient axes.
    dy[perm[0]] = -p_dot_v;
    for i in 1..n {
        dy[perm[i]] = p[0] * v[i - 1];
    }
    // Multiplier evolution.
    let drift_weight = p[0] * v_sq - lam_dot_v;
    let swirl_weight = p_dot_v + lam[0];
    for m in 0..n {
        let d_p0 = jac[[perm[m], perm[0]]];
        let mut d_pv = F::zero();
        for i in 1..n {
            d_pv += jac[[perm[m], perm[i]]] * v[i - 1];
        }
        dy[n + m] = d_p0 * drift_weight + d_pv * swirl_weight;
    }
    // Arc-length rates, each measured from the ambient velocity.
    let xdot = dy.slice(s![..n]).to_owned();
    let speed_sq = xdot.dot(&xdot);
    dy[2 * n] = speed_sq.sqrt();
    dy[2 * n + 1] = riemannian_norm_sq(&grad.view(), &xdot.view()).sqrt();
    Ok(dy)
}

/// Appends one geodesic knot, recovering the coefficients at that point.
fn record_geodesic_knot<F: Real>(
    field: &dyn GradientField<F>,
    path: &mut CurvePath<F>,
    center_axis: usize,
    t: F,
    y: &Array1<F>,
) -> Result<(), CurveError> {
    let n = field.dim();
    let x = y.slice(s![..n]).to_owned();
    let lam = y.slice(s![n..2 * n]);
    let grad = field.gradient(&x.view())?;
    let frame = Frame::build(&grad.view(), center_axis)?;
    let v = coefficients_from_multipliers(&frame, &lam);
    path.points.push(x);
    path.params.push(t);
    path.euclid_len.push(y[2 * n]);
    path.riem_len.push(y[2 * n + 1]);
    path.v_history.push(VKnot {
        t,
        center_axis,
        v,
    });
    Ok(())
}

/// The coefficient functions of a geodesic, replayable at other starting
/// points: per re-center segment, a cubic Hermite interpolation of the
/// recorded `v(t)` knots in that segment's frame.
#[derive(Debug, Clone)]
pub struct CoefficientSchedule<F: Real> {
    segments: Vec<Segment<F>>,
}

#[derive(Debug, Clone)]
struct Segment<F: Real> {
    center_axis: usize,
    ts: Vec<F>,
    vs: Vec<Array1<F>>,
    /// Catmull-Rom style knot tangents (one-sided at the ends).
    slopes: Vec<Array1<F>>,
}

impl<F: Real> Segment<F> {
    fn build(center_axis: usize, knots: Vec<(F, Array1<F>)>) -> Self {
        let mut ts = Vec::with_capacity(knots.len());
        let mut vs = Vec::with_capacity(knots.len());
        for (t, v) in knots {
            // Duplicate times collapse to the latest sample.
            if ts.last().is_some_and(|last| *last == t) {
                *vs.last_mut().expect("paired") = v;
            } else {
                ts.push(t);
                vs.push(v);
            }
        }
        let k = ts.len();
        let dim = vs[0].len();
        let mut slopes = vec![Array1::zeros(dim); k];
        if k >= 2 {
            for i in 0..k {
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(k - 1));
                let dt = ts[hi] - ts[lo];
                slopes[i] = (&vs[hi] - &vs[lo]).mapv(|d| d / dt);
            }
        }
        Segment {
            center_axis,
            ts,
            vs,
            slopes,
        }
    }

    fn t0(&self) -> F {
        self.ts[0]
    }

    fn t1(&self) -> F {
        *self.ts.last().expect("nonempty segment")
    }

    fn eval(&self, t: F) -> Array1<F> {
        let k = self.ts.len();
        if k == 1 || t <= self.ts[0] {
            return self.vs[0].clone();
        }
        if t >= self.ts[k - 1] {
            return self.vs[k - 1].clone();
        }
        let mut idx = match self
            .ts
            .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite knot times"))
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if idx >= k - 1 {
            idx = k - 2;
        }
        let h = self.ts[idx + 1] - self.ts[idx];
        let s = (t - self.ts[idx]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = F::one() + F::one();
        let three = two + F::one();
        let h00 = two * s3 - three * s2 + F::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        let mut out = self.vs[idx].mapv(|v| v * h00);
        out.zip_mut_with(&self.slopes[idx], |o, m| *o = *o + h10 * h * *m);
        out.zip_mut_with(&self.vs[idx + 1], |o, v| *o = *o + h01 * *v);
        out.zip_mut_with(&self.slopes[idx + 1], |o, m| *o = *o + h11 * h * *m);
        out
    }
}

impl<F: Real> CoefficientSchedule<F> {
    /// Reads the coefficient functions out of a geodesic path.
    pub fn from_path(path: &CurvePath<F>) -> Result<Self, CurveError> {
        if path.v_history.is_empty() {
            return Err(CurveError::EmptySchedule);
        }
        let mut segments = Vec::new();
        let mut current: Vec<(F, Array1<F>)> = Vec::new();
        let mut axis = path.v_history[0].center_axis;
        for knot in &path.v_history {
            if knot.center_axis != axis {
                segments.push(Segment::build(axis, std::mem::take(&mut current)));
                axis = knot.center_axis;
            }
            current.push((knot.t, knot.v.clone()));
        }
        segments.push(Segment::build(axis, current));
        Ok(CoefficientSchedule { segments })
    }

    pub fn t_end(&self) -> F {
        self.segments
            .last()
            .expect("schedules hold at least one segment")
            .t1()
    }

    /// Segment boundaries: `(start time, center axis)` per segment.
    pub fn segment_starts(&self) -> Vec<(F, usize)> {
        self.segments.iter().map(|s| (s.t0(), s.center_axis)).collect()
    }

    /// The frame (center axis) and interpolated coefficients at `t`,
    /// clamped into the recorded range.
    pub fn eval(&self, t: F) -> (usize, Array1<F>) {
        let mut pick = 0usize;
        for (i, seg) in self.segments.iter().enumerate() {
            if t >= seg.t0() {
                pick = i;
            }
        }
        let seg = &self.segments[pick];
        (seg.center_axis, seg.eval(t))
    }
}

/// Drives the transverse flow `x′ = Σᵢ vⁱ(t)·Vᵢ(x)` from `x_start`, with
/// the coefficients and frame conventions replayed from `schedule`.
/// Started at the generating geodesic's own start, the flow retraces it;
/// started elsewhere, it transports the motion pattern sideways.
pub fn transverse_flow<F: Real>(
    field: &dyn GradientField<F>,
    x_start: &ArrayView1<F>,
    schedule: &CoefficientSchedule<F>,
    t_max: F,
    opts: &CurveOptions<F>,
) -> Result<CurvePath<F>, CurveError> {
    let n = field.dim();
    assert_eq!(x_start.len(), n);
    let t_stop = t_max.min(schedule.t_end()).min(opts.t_cap);

    let mut path = CurvePath {
        points: vec![x_start.to_owned()],
        params: vec![F::zero()],
        euclid_len: vec![F::zero()],
        riem_len: vec![F::zero()],
        center_history: vec![(F::zero(), schedule.segments[0].center_axis)],
        v_history: Vec::new(),
        stop: StopCause::Exhausted,
    };

    let mut y = Array1::zeros(n + 2);
    y.slice_mut(s![..n]).assign(x_start);
    let mut t = F::zero();

    for seg in &schedule.segments {
        if t >= t_stop {
            break;
        }
        let leg_end = seg.t1().min(t_stop);
        if !(leg_end > t) {
            continue;
        }
        let axis = seg.center_axis;
        if path.center_history.last().map(|(_, a)| *a) != Some(axis) {
            path.center_history.push((t, axis));
        }
        let mut rhs = |tt: F, yy: &ArrayView1<F>| -> Result<Array1<F>, OdeError> {
            let x = yy.slice(s![..n]);
            let grad = field.gradient(&x).map_err(|e| rhs_failure(tt, e))?;
            let frame = Frame::build(&grad.view(), axis).map_err(|e| rhs_failure(tt, e))?;
            let v = seg.eval(tt);
            let xdot = frame.tangent_from_transverse(&v.view());
            let mut dy = Array1::zeros(n + 2);
            dy.slice_mut(s![..n]).assign(&xdot);
            let speed_sq = xdot.dot(&xdot);
            dy[n] = speed_sq.sqrt();
            dy[n + 1] = riemannian_norm_sq(&grad.view(), &xdot.view()).sqrt();
            Ok(dy)
        };
        let mut raw = RawKnots::new();
        let end = run_leg(&mut rhs, t, &y, leg_end, &[], &opts.ode, &mut raw)?;
        for (tt, yy) in &raw.rows {
            path.points.push(yy.slice(s![..n]).to_owned());
            path.params.push(*tt);
            path.euclid_len.push(yy[n]);
            path.riem_len.push(yy[n + 1]);
            path.v_history.push(VKnot {
                t: *tt,
                center_axis: axis,
                v: seg.eval(*tt),
            });
        }
        match end {
            LegEnd::SpanEnd { y: ye } => {
                t = leg_end;
                y = ye;
            }
            LegEnd::Budget { t: tb, y: yb } => {
                if tb > path.total_param() {
                    path.points.push(yb.slice(s![..n]).to_owned());
                    path.params.push(tb);
                    path.euclid_len.push(yb[n]);
                    path.riem_len.push(yb[n + 1]);
                }
                return Ok(path);
            }
            LegEnd::Event { .. } => unreachable!("flow legs run without events"),
        }
    }
    path.stop = StopCause::LengthBudget;
    Ok(path)
}

/// Euclidean polyline length of a path's knots.
pub fn euclidean_length<F: Real>(path: &CurvePath<F>) -> F {
    let mut total = F::zero();
    for pair in path.points.windows(2) {
        total += linalg::distance(&pair[0].view(), &pair[1].view());
    }
    total
}

/// Riemannian length of a path by midpoint quadrature over its knots: each
/// chord is weighted through the metric's ambient form at the segment
/// midpoint. Subbundle (geodesic) paths reproduce their Euclidean length;
/// drift-aligned paths reproduce `∫|∇U| ds`.
pub fn riemannian_length<F: Real>(
    field: &dyn GradientField<F>,
    path: &CurvePath<F>,
) -> Result<F, CurveError> {
    let mut total = F::zero();
    let half = F::of(0.5);
    for pair in path.points.windows(2) {
        let mid = (&pair[0] + &pair[1]).mapv(|x| x * half);
        let chord = &pair[1] - &pair[0];
        let grad = field.gradient(&mid.view())?;
        total += riemannian_norm_sq(&grad.view(), &chord.view()).sqrt();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MixturePotential, SyntheticPotential};
    use crate::geometry::metric;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// `U = −½|x|²` so that the field gradient is `∇U = −x`: the subbundle
    /// integral manifolds are origin-centered spheres.
    fn radial_potential(n: usize) -> MixturePotential<f64> {
        let sigma = std::f64::consts::FRAC_1_SQRT_2;
        SyntheticPotential::gaussian(Array1::from_elem(n, sigma))
            .unwrap()
            .into()
    }

    fn curved_potential() -> MixturePotential<f64> {
        SyntheticPotential::curved(array![1.0, 0.8, 0.9, 0.7], array![0.0, 0.35, 0.25, 0.2])
            .unwrap()
            .into()
    }

    fn check_path_monotone(path: &CurvePath<f64>) {
        assert!(!path.is_empty());
        assert_eq!(path.params[0], 0.0);
        for w in path.params.windows(2) {
            assert!(w[0] < w[1], "params not strictly increasing");
        }
        for w in path.euclid_len.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in path.riem_len.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    fn random_frame(n: usize, seed: u64) -> Frame<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grad = Array1::from_iter((0..n).map(|_| {
            let mag: f64 = rng.random_range(0.3..1.0);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        }));
        Frame::build_auto(&grad.view()).unwrap()
    }

    #[test]
    fn closed_form_coefficients_solve_the_algebraic_system() {
        for seed in 0..5u64 {
            let n = 6;
            let frame = random_frame(n, 40 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lambda = Array1::from_iter((0..n).map(|_| rng.random_range(-1.0..1.0)));
            let v = coefficients_from_multipliers(&frame, &lambda.view());
            // Residual of (G_Θ v)ᵢ = P₀λᵢ − Pᵢλ₀ against the dense block.
            let g = metric(&frame).g;
            let p = frame.p();
            for i in 1..n {
                let mut lhs = 0.0;
                for j in 1..n {
                    lhs += g[[i, j]] * v[j - 1];
                }
                let rhs = p[0] * lambda[i] - p[i] * lambda[0];
                assert!((lhs - rhs).abs() < 1e-10, "residual {:e}", (lhs - rhs).abs());
            }
            // And against an independent dense solve of the same system.
            let mut block = Array2::zeros((n - 1, n - 1));
            let mut target = Array1::zeros(n - 1);
            for i in 1..n {
                for j in 1..n {
                    block[[i - 1, j - 1]] = g[[i, j]];
                }
                target[i - 1] = p[0] * lambda[i] - p[i] * lambda[0];
            }
            let dense = linalg::solve(&block.view(), &target.view()).unwrap();
            for i in 0..n - 1 {
                assert!((dense[i] - v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn initial_gauge_reproduces_the_requested_coefficients() {
        let n = 5;
        let frame = random_frame(n, 7);
        let x0 = Array1::zeros(n);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v0 = Array1::from_iter((0..n - 1).map(|_| rng.random_range(-1.0..1.0)));
        let state = geodesic_initial_state(&frame, &x0.view(), &v0.view());
        // The gauge condition Σ P_m λ_m = 0 holds.
        let gauge: f64 = frame
            .p()
            .iter()
            .zip(&state.lambda)
            .map(|(p, l)| p * l)
            .sum();
        assert!(gauge.abs() < 1e-12);
        // The algebraic equation returns exactly v0.
        let v = coefficients_from_multipliers(&frame, &state.lambda.view());
        for i in 0..n - 1 {
            assert!((v[i] - v0[i]).abs() < 1e-12);
        }
        // Zero coefficients give zero multipliers.
        let zero = geodesic_initial_state(&frame, &x0.view(), &Array1::zeros(n - 1).view());
        assert!(zero.lambda.iter().all(|l| *l == 0.0));
        // Shifting λ along P changes nothing.
        for c in [1.0, 10.0] {
            let shifted = Array1::from_iter(
                state
                    .lambda
                    .iter()
                    .zip(frame.p())
                    .map(|(l, p)| l + c * p),
            );
            let v_shift = coefficients_from_multipliers(&frame, &shifted.view());
            for i in 0..n - 1 {
                assert!((v_shift[i] - v0[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inward_rho_curve_matches_the_quadratic_oracle() {
        let pot = radial_potential(3);
        let r = 1.5;
        let x0 = array![r, 0.0, 0.0];
        let path = rho_curve(
            &pot,
            &x0.view(),
            Sense::Inward,
            &StopRule::AtMode { floor: 1e-6 },
            &CurveOptions::default(),
        )
        .unwrap();
        check_path_monotone(&path);
        assert_eq!(path.stop, StopCause::ModeFloor);
        // Straight radial segment.
        for p in &path.points {
            assert!(p[1].abs() < 1e-9 && p[2].abs() < 1e-9);
        }
        assert!((path.total_euclid() - r).abs() < 1e-4);
        assert!((path.total_riem() - r * r / 2.0).abs() < 1e-4);
        assert!(linalg::norm(&path.end().view()) < 1e-5);

        // Starting at the mode itself is refused.
        let at_mode = rho_curve(
            &pot,
            &Array1::zeros(3).view(),
            Sense::Inward,
            &StopRule::AtMode { floor: 1e-6 },
            &CurveOptions::default(),
        );
        assert!(matches!(at_mode, Err(CurveError::StationaryStart { .. })));
    }

    #[test]
    fn outward_retraces_inward_and_budgets_hold() {
        let pot = curved_potential();
        let x0 = array![1.2, -0.4, 0.8, 0.3];
        let budget = 0.7;
        let inward = rho_curve(
            &pot,
            &x0.view(),
            Sense::Inward,
            &StopRule::MaxEuclid { length: budget },
            &CurveOptions::default(),
        )
        .unwrap();
        check_path_monotone(&inward);
        assert_eq!(inward.stop, StopCause::LengthBudget);
        assert!((inward.total_euclid() - budget).abs() < 1e-9);

        let back = rho_curve(
            &pot,
            &inward.end().view(),
            Sense::Outward,
            &StopRule::MaxEuclid { length: budget },
            &CurveOptions::default(),
        )
        .unwrap();
        let gap = linalg::distance(&back.end().view(), &x0.view());
        assert!(gap < 1e-5, "reversal gap {gap:e}");

        // Proximity stop pulls up at the requested shell.
        let target = Array1::zeros(4);
        let near = rho_curve(
            &pot,
            &x0.view(),
            Sense::Inward,
            &StopRule::NearPoint {
                target: target.clone(),
                radius: 0.5,
            },
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(near.stop, StopCause::NearTarget);
        assert!((linalg::distance(&near.end().view(), &target.view()) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sphere_geodesic_matches_the_great_circle_oracle() {
        let pot = radial_potential(3);
        let r = 1.0;
        let x0 = array![r, 0.0, 0.0];
        let origin = Array1::zeros(3);
        let v0 = array![1.0, 0.0];
        let path = geodesic(
            &pot,
            &x0.view(),
            &origin.view(),
            &v0.view(),
            std::f64::consts::FRAC_PI_2,
            &CurveOptions::default(),
        )
        .unwrap();
        check_path_monotone(&path);
        assert_eq!(path.stop, StopCause::TargetAngle);

        let quarter = std::f64::consts::FRAC_PI_2 * r;
        assert!(
            (path.total_euclid() - quarter).abs() < 1e-3 * quarter,
            "euclid {} vs {quarter}",
            path.total_euclid()
        );
        assert!((path.total_riem() - quarter).abs() < 1e-3 * quarter);
        assert!((path.total_riem() - path.total_euclid()).abs() < 1e-3 * path.total_euclid());

        // Stays on the sphere and lands a quarter turn away.
        for p in &path.points {
            assert!((linalg::norm(&p.view()) - r).abs() < 1e-5);
        }
        let end = path.end();
        assert!(end[0].abs() < 2e-3);
        assert!((end[1].abs() - r).abs() < 2e-3 || (end[2].abs() - r).abs() < 2e-3);

        // The frame re-centered late in the sweep, away from axis 0.
        assert!(path.center_history.len() >= 2, "no re-center recorded");
        let (t_re, new_axis) = path.center_history[1];
        assert_ne!(new_axis, 0);
        assert!(t_re > 0.8 * path.total_param());

        // Tangency: at every knot the reconstructed velocity is orthogonal
        // to the gradient.
        for knot in &path.v_history {
            let idx = path.params.iter().position(|t| *t == knot.t).unwrap();
            let x = &path.points[idx];
            let grad = pot.gradient(&x.view()).unwrap();
            let frame = Frame::build(&grad.view(), knot.center_axis).unwrap();
            let w = frame.tangent_from_transverse(&knot.v.view());
            let cosine = w.dot(&grad) / (linalg::norm(&w.view()) * linalg::norm(&grad.view()));
            assert!(cosine.abs() < 1e-6, "tangency broke: {cosine:e}");
        }

        // Unit speed is preserved along the run.
        for w in path.params.windows(2).zip(path.euclid_len.windows(2)) {
            let (tw, ew) = w;
            let rate = (ew[1] - ew[0]) / (tw[1] - tw[0]);
            assert!((rate - 1.0).abs() < 1e-3, "speed drifted to {rate}");
        }
    }

    #[test]
    fn geodesic_is_gauge_invariant_in_the_multipliers() {
        let pot = curved_potential();
        let x0 = array![1.0, 0.3, -0.5, 0.6];
        let origin = Array1::zeros(4);
        let grad = pot.gradient(&x0.view()).unwrap();
        let frame = Frame::build_auto(&grad.view()).unwrap();
        let raw = array![0.8, -0.4, 0.45];
        let w = frame.tangent_from_transverse(&raw.view());
        let v0 = raw.mapv(|c| c / linalg::norm(&w.view()));
        let state = geodesic_initial_state(&frame, &x0.view(), &v0.view());
        let angle = 0.9;
        // Tight tolerances so integrator noise cannot mask (or mimic) a
        // gauge dependence: the shifted runs must land on the same curve.
        let mut opts = CurveOptions::default();
        opts.ode.atol = 1e-12;
        opts.ode.rtol = 1e-10;
        let base = geodesic_from_state(&pot, &state, &origin.view(), angle, &opts).unwrap();
        for c in [1.0, 10.0] {
            let mut shifted = state.clone();
            for (l, p) in shifted.lambda.iter_mut().zip(frame.p()) {
                *l += c * p;
            }
            let alt = geodesic_from_state(&pot, &shifted, &origin.view(), angle, &opts).unwrap();
            let gap = linalg::distance(&alt.end().view(), &base.end().view());
            assert!(gap < 1e-8, "gauge shift c = {c} moved the endpoint {gap:e}");
            assert!((alt.total_euclid() - base.total_euclid()).abs() < 1e-8);
        }
    }

    #[test]
    fn recentering_keeps_position_and_velocity_continuous() {
        let pot = radial_potential(3);
        let x0 = array![1.0, 0.0, 0.0];
        let path = geodesic(
            &pot,
            &x0.view(),
            &Array1::zeros(3).view(),
            &array![1.0, 0.0].view(),
            std::f64::consts::FRAC_PI_2,
            &CurveOptions::default(),
        )
        .unwrap();
        let (t_re, _) = path.center_history[1];
        // The two event-time samples bracket the same ambient tangent.
        let pair: Vec<&VKnot<f64>> = path.v_history.iter().filter(|k| k.t == t_re).collect();
        assert_eq!(pair.len(), 2, "re-center should record both frames");
        let idx = path.params.iter().position(|t| *t == t_re).unwrap();
        let x = &path.points[idx];
        let grad = pot.gradient(&x.view()).unwrap();
        let mut tangents = Vec::new();
        for knot in pair {
            let frame = Frame::build(&grad.view(), knot.center_axis).unwrap();
            tangents.push(frame.tangent_from_transverse(&knot.v.view()));
        }
        let jump = linalg::distance(&tangents[0].view(), &tangents[1].view());
        assert!(jump < 1e-8, "velocity jump {jump:e} across re-center");
    }

    #[test]
    fn riemannian_speed_is_constant_on_curved_geodesics() {
        let pot = curved_potential();
        let x0 = array![1.1, 0.2, -0.6, 0.4];
        let path = geodesic(
            &pot,
            &x0.view(),
            &Array1::zeros(4).view(),
            &array![0.5, 0.7, -0.3].view(),
            1.0,
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(path.stop, StopCause::TargetAngle);
        check_path_monotone(&path);
        for w in path.params.windows(2).zip(path.riem_len.windows(2)) {
            let (tw, rw) = w;
            let rate = (rw[1] - rw[0]) / (tw[1] - tw[0]);
            assert!((rate - 1.0).abs() < 1e-3, "riemannian rate {rate}");
        }
        // Gram identity between the length accounts.
        assert!(
            (path.total_riem() - path.total_euclid()).abs() < 1e-3 * path.total_euclid()
        );
    }

    #[test]
    fn great_circle_minimizes_the_discrete_length() {
        // Independent variational check: perturbing the integrated path on
        // its integral manifold (the sphere), with endpoints pinned, only
        // makes the discrete length longer.
        let pot = radial_potential(3);
        let path = geodesic(
            &pot,
            &array![1.0, 0.0, 0.0].view(),
            &Array1::zeros(3).view(),
            &array![1.0, 0.0].view(),
            std::f64::consts::FRAC_PI_2,
            &CurveOptions::default(),
        )
        .unwrap();
        let base_len = euclidean_length(&path);
        let k = path.points.len();
        assert!(k >= 8, "need interior knots to perturb");
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let mut bent: Vec<Array1<f64>> = path.points.clone();
            for (i, point) in bent.iter_mut().enumerate().take(k - 1).skip(1) {
                // Smooth bump, zero at the ends, tangent to the sphere.
                let bump = (std::f64::consts::PI * i as f64 / (k - 1) as f64).sin();
                let noise = Array1::from_iter((0..3).map(|_| rng.random_range(-1.0..1.0)));
                let radial = point.clone() / linalg::norm(&point.view());
                let tangent = &noise - &(radial.clone() * noise.dot(&radial));
                *point += &(tangent * (0.01 * bump));
                let norm = linalg::norm(&point.view());
                point.mapv_inplace(|c| c / norm);
            }
            let bent_len: f64 = bent
                .windows(2)
                .map(|p| linalg::distance(&p[0].view(), &p[1].view()))
                .sum();
            assert!(
                bent_len > base_len,
                "a perturbation shortened the path: {bent_len} < {base_len}"
            );
        }
    }

    #[test]
    fn transverse_flow_retraces_its_generating_geodesic() {
        let pot = radial_potential(3);
        let x0 = array![1.0, 0.0, 0.0];
        let path = geodesic(
            &pot,
            &x0.view(),
            &Array1::zeros(3).view(),
            &array![1.0, 0.0].view(),
            std::f64::consts::FRAC_PI_2,
            &CurveOptions::default(),
        )
        .unwrap();
        let schedule = CoefficientSchedule::from_path(&path).unwrap();
        assert_eq!(schedule.segment_starts().len(), path.center_history.len());

        let flow = transverse_flow(
            &pot,
            &x0.view(),
            &schedule,
            schedule.t_end(),
            &CurveOptions::default(),
        )
        .unwrap();
        check_path_monotone(&flow);
        let len = path.total_euclid();
        let end_gap = linalg::distance(&flow.end().view(), &path.end().view());
        assert!(end_gap < 1e-4 * len, "flow end off by {end_gap:e}");
        assert!((flow.total_euclid() - len).abs() < 1e-4 * len);

        // A zero schedule holds still.
        let mut zero_path = path.clone();
        for knot in &mut zero_path.v_history {
            knot.v.fill(0.0);
        }
        let zero_schedule = CoefficientSchedule::from_path(&zero_path).unwrap();
        let still = transverse_flow(
            &pot,
            &x0.view(),
            &zero_schedule,
            1.0,
            &CurveOptions::default(),
        )
        .unwrap();
        assert!(linalg::distance(&still.end().view(), &x0.view()) < 1e-12);
        assert!(still.total_euclid() < 1e-12);
    }

    #[test]
    fn flow_composition_is_stable_under_tighter_tolerances() {
        let pot = curved_potential();
        let x0 = array![1.0, 0.2, -0.4, 0.5];
        let origin = Array1::zeros(4);
        let opts = CurveOptions::default();
        let make = |v0: &Array1<f64>| {
            geodesic(&pot, &x0.view(), &origin.view(), &v0.view(), 0.8, &opts).unwrap()
        };
        let ga = make(&array![1.0, 0.0, 0.0]);
        let gb = make(&array![0.0, 1.0, 0.0]);
        let sa = CoefficientSchedule::from_path(&ga).unwrap();
        let sb = CoefficientSchedule::from_path(&gb).unwrap();

        let compose = |opts: &CurveOptions<f64>| -> Array1<f64> {
            let first = transverse_flow(&pot, &x0.view(), &sa, 0.5, opts).unwrap();
            let second =
                transverse_flow(&pot, &first.end().view(), &sb, 0.4, opts).unwrap();
            second.end().clone()
        };
        let coarse = compose(&opts);
        let mut tight = opts.clone();
        tight.ode.atol = 1e-10;
        tight.ode.rtol = 1e-8;
        let fine = compose(&tight);
        let moved = linalg::distance(&coarse.view(), &fine.view());
        assert!(moved < 1e-5, "composition moved {moved:e} under refinement");
    }

    #[test]
    fn length_quadrature_matches_constant_field_scaling() {
        struct ConstField {
            g: Array1<f64>,
        }
        impl GradientField<f64> for ConstField {
            fn dim(&self) -> usize {
                self.g.len()
            }
            fn gradient(&self, _x: &ArrayView1<f64>) -> Result<Array1<f64>, FieldError> {
                Ok(self.g.clone())
            }
            fn jacobian(&self, _x: &ArrayView1<f64>) -> Result<ndarray::Array2<f64>, FieldError> {
                Ok(ndarray::Array2::zeros((self.g.len(), self.g.len())))
            }
            fn stationarity(&self, _x: &ArrayView1<f64>) -> Result<f64, FieldError> {
                Ok(linalg::norm(&self.g.view()))
            }
            fn level(&self, _x: &ArrayView1<f64>) -> Result<f64, FieldError> {
                Ok(0.0)
            }
        }
        let field = ConstField {
            g: array![3.0, 0.0, 0.0],
        };
        let segment = |dir: Array1<f64>| CurvePath::<f64> {
            points: (0..=10)
                .map(|i| dir.mapv(|d| d * i as f64 / 10.0))
                .collect(),
            params: (0..=10).map(|i| i as f64 / 10.0).collect(),
            euclid_len: vec![0.0; 11],
            riem_len: vec![0.0; 11],
            center_history: vec![],
            v_history: vec![],
            stop: StopCause::LengthBudget,
        };
        // Parallel to the gradient: scaled by |∇U| = 3.
        let along = segment(array![2.0, 0.0, 0.0]);
        let l = riemannian_length(&field, &along).unwrap();
        assert!((l - 6.0).abs() < 1e-12);
        assert!((euclidean_length(&along) - 2.0).abs() < 1e-12);
        // Orthogonal to the gradient: plain Euclidean.
        let across = segment(array![0.0, 2.0, 0.0]);
        let l = riemannian_length(&field, &across).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn level_stop_projects_onto_the_density_shell() {
        let pot = radial_potential(3);
        let shell_point = array![1.0, 0.0, 0.0];
        let target = pot.level(&shell_point.view()).unwrap();
        // Inward from outside the shell.
        let outer = array![0.9, -0.9, 0.6];
        let path = rho_curve(
            &pot,
            &outer.view(),
            Sense::Inward,
            &StopRule::AtLevel { target },
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(path.stop, StopCause::LevelSet);
        assert!((linalg::norm(&path.end().view()) - 1.0).abs() < 1e-6);
        // Outward from inside.
        let inner = array![0.3, 0.1, -0.2];
        let path = rho_curve(
            &pot,
            &inner.view(),
            Sense::Outward,
            &StopRule::AtLevel { target },
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(path.stop, StopCause::LevelSet);
        assert!((linalg::norm(&path.end().view()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exhausted_budgets_flag_partial_paths() {
        let pot = radial_potential(3);
        let mut opts = CurveOptions::default();
        opts.t_cap = 0.1;
        let path = geodesic(
            &pot,
            &array![1.0, 0.0, 0.0].view(),
            &Array1::zeros(3).view(),
            &array![1.0, 0.0].view(),
            std::f64::consts::FRAC_PI_2,
            &opts,
        )
        .unwrap();
        assert_eq!(path.stop, StopCause::Exhausted);
        assert!((path.total_param() - 0.1).abs() < 1e-9);
        assert!(path.total_euclid() < 0.11);
    }

    #[test]
    fn kernel_field_rho_curve_reaches_the_sample_mode() {
        use crate::density::KernelContext;
        use crate::field::KernelField;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sample = Array2::from_shape_fn((400, 3), |(_, j)| {
            let center = [0.5, -0.25, 0.1][j];
            center + 0.3 * rng.random_range(-1.0..1.0)
        });
        let ctx = KernelContext::new(1.0, sample).unwrap();
        let field = KernelField::new(&ctx);
        let x0 = array![1.6, 0.9, -0.8];
        let path = rho_curve(
            &field,
            &x0.view(),
            Sense::Inward,
            &StopRule::AtMode { floor: 1e-4 },
            &CurveOptions::default(),
        )
        .unwrap();
        assert_eq!(path.stop, StopCause::ModeFloor);
        assert!(field.stationarity(&path.end().view()).unwrap() <= 1.0001e-4);
        let center = array![0.5, -0.25, 0.1];
        assert!(
            linalg::distance(&path.end().view(), &center.view()) < 0.2,
            "mode landed at {:?}",
            path.end()
        );
    }
}
