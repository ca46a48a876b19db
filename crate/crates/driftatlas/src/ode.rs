//! Adaptive Runge-Kutta integration with dense output and event location.
//!
//! The stepper is the Dormand-Prince 5(4) pair: seven stages, first-same-as-
//! last, an embedded fourth-order solution for the error estimate, and a
//! fourth-order interpolant over each accepted step. Step-size control
//! follows the usual scaled-norm rule: a step is accepted when
//!
//! ```text
//! err = sqrt( mean_i ( e_i / (atol + rtol·max(|y_i|, |y'_i|)) )² ) ≤ 1,
//! ```
//!
//! and the next step is `h · clamp(0.9·err^{−1/5}, 0.2, 10)` with growth
//! suppressed right after a rejection. Event functions are scalars sampled
//! at accepted step endpoints; a sign change is narrowed by bisection on the
//! interpolant until the bracket in `t` is below `event_tol_t`. Integration
//! runs forward only (`t_end > t0`).

use ndarray::{Array1, ArrayView1};
use thiserror::Error;

use crate::scalar::Real;

/// Stage coefficients of the Dormand-Prince 5(4) pair.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

/// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Weights of the fifth interpolation polynomial term.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_BISECTIONS: usize = 80;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("integration span must run forward: t0 = {t0:e}, t_end = {t_end:e}")]
    BadSpan { t0: f64, t_end: f64 },
    #[error("step size underflow at t = {t:e}")]
    StepUnderflow { t: f64 },
    #[error("derivative stayed non-finite at t = {t:e}")]
    NonFinite { t: f64 },
    #[error("no convergence within {limit} steps (reached t = {t:e})")]
    MaxSteps { limit: usize, t: f64 },
    #[error("derivative evaluation failed at t = {t:e}: {source}")]
    RhsFailure {
        t: f64,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Integration controls. `h_max` defaults to the full span; `h_init` is
/// chosen automatically from derivative magnitudes when unset.
#[derive(Debug, Clone)]
pub struct OdeOptions<F: Real> {
    pub atol: F,
    pub rtol: F,
    pub h_init: Option<F>,
    pub h_max: Option<F>,
    pub max_steps: usize,
    /// Width of the bisection bracket, in `t`, at which an event is
    /// considered located.
    pub event_tol_t: F,
}

impl<F: Real> Default for OdeOptions<F> {
    fn default() -> Self {
        OdeOptions {
            atol: F::of(1e-8),
            rtol: F::of(1e-6),
            h_init: None,
            h_max: None,
            max_steps: 100_000,
            event_tol_t: F::of(1e-9),
        }
    }
}

/// The interpolant over one accepted step, valid for `t ∈ [t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseStep<F: Real> {
    t0: F,
    h: F,
    cont: [Array1<F>; 5],
}

impl<F: Real> DenseStep<F> {
    pub fn t0(&self) -> F {
        self.t0
    }

    pub fn t1(&self) -> F {
        self.t0 + self.h
    }

    /// Evaluates the interpolant at `t`, clamped to the step interval.
    pub fn eval(&self, t: F) -> Array1<F> {
        let mut theta = (t - self.t0) / self.h;
        if theta < F::zero() {
            theta = F::zero();
        }
        if theta > F::one() {
            theta = F::one();
        }
        let theta1 = F::one() - theta;
        let [c1, c2, c3, c4, c5] = &self.cont;
        let mut out = c5.mapv(|x| x * theta1);
        out.zip_mut_with(c4, |o, c| *o = (*o + *c) * theta);
        out.zip_mut_with(c3, |o, c| *o = (*o + *c) * theta1);
        out.zip_mut_with(c2, |o, c| *o = (*o + *c) * theta);
        out.zip_mut_with(c1, |o, c| *o = *o + *c);
        out
    }
}

/// An event root: which event function fired, where, and the interpolated
/// state there.
#[derive(Debug, Clone)]
pub struct EventHit<F: Real> {
    pub index: usize,
    pub t: F,
    pub y: Array1<F>,
}

/// Where an integration ended and what it did on the way.
#[derive(Debug, Clone)]
pub struct Solution<F: Real> {
    pub t: F,
    pub y: Array1<F>,
    pub accepted: usize,
    pub rejected: usize,
    /// Set when an event function stopped the integration before `t_end`.
    pub event: Option<EventHit<F>>,
}

fn scaled_error_norm<F: Real>(
    err: &Array1<F>,
    y0: &Array1<F>,
    y1: &Array1<F>,
    atol: F,
    rtol: F,
) -> F {
    let n = err.len();
    let mut acc = F::zero();
    for i in 0..n {
        let mag = if y0[i].abs() > y1[i].abs() {
            y0[i].abs()
        } else {
            y1[i].abs()
        };
        let sc = atol + rtol * mag;
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / F::of(n as f64)).sqrt()
}

fn all_finite<F: Real>(y: &Array1<F>) -> bool {
    y.iter().all(|x| x.is_finite())
}

/// One Dormand-Prince step from `(t, y)` with stride `h`, reusing `k1 =
/// f(t, y)`. Returns the candidate endpoint, the scaled error norm, the
/// interpolant, and the endpoint derivative (the next step's `k1`).
#[allow(clippy::type_complexity)]
fn rk_step<F: Real>(
    rhs: &mut dyn FnMut(F, &ArrayView1<F>) -> Result<Array1<F>, OdeError>,
    t: F,
    y: &Array1<F>,
    h: F,
    k1: &Array1<F>,
    atol: F,
    rtol: F,
) -> Result<(Array1<F>, F, DenseStep<F>, Array1<F>), OdeError> {
    let n = y.len();
    let c = F::of;
    let stage = |ks: &[(&Array1<F>, f64)]| -> Array1<F> {
        let mut out = y.clone();
        for (k, a) in ks {
            out.zip_mut_with(k, |o, kk| *o = *o + h * c(*a) * *kk);
        }
        out
    };
    let y2 = stage(&[(k1, A21)]);
    let k2 = rhs(t + c(C2) * h, &y2.view())?;
    let y3 = stage(&[(k1, A31), (&k2, A32)]);
    let k3 = rhs(t + c(C3) * h, &y3.view())?;
    let y4 = stage(&[(k1, A41), (&k2, A42), (&k3, A43)]);
    let k4 = rhs(t + c(C4) * h, &y4.view())?;
    let y5 = stage(&[(k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)]);
    let k5 = rhs(t + c(C5) * h, &y5.view())?;
    let y6 = stage(&[(k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)]);
    let k6 = rhs(t + h, &y6.view())?;
    let y1 = stage(&[(k1, A71), (&k3, A73), (&k4, A74), (&k5, A75), (&k6, A76)]);
    let k7 = rhs(t + h, &y1.view())?;

    let mut err = Array1::zeros(n);
    for i in 0..n {
        err[i] = h
            * (c(E1) * k1[i]
                + c(E3) * k3[i]
                + c(E4) * k4[i]
                + c(E5) * k5[i]
                + c(E6) * k6[i]
                + c(E7) * k7[i]);
    }
    let err_norm = if all_finite(&y1) && all_finite(&err) {
        scaled_error_norm(&err, y, &y1, atol, rtol)
    } else {
        F::infinity()
    };

    let ydiff = &y1 - y;
    let bspl = k1.mapv(|k| k * h) - &ydiff;
    let cont4 = ydiff.mapv(|d| d + d) - &k7.mapv(|k| k * h) - &k1.mapv(|k| k * h);
    let mut cont5 = Array1::zeros(n);
    for i in 0..n {
        cont5[i] = h
            * (c(D1) * k1[i]
                + c(D3) * k3[i]
                + c(D4) * k4[i]
                + c(D5) * k5[i]
                + c(D6) * k6[i]
                + c(D7) * k7[i]);
    }
    let dense = DenseStep {
        t0: t,
        h,
        cont: [y.clone(), ydiff, bspl, cont4, cont5],
    };
    Ok((y1, err_norm, dense, k7))
}

/// Starting step size from derivative magnitudes at both ends of a trial
/// Euler step.
fn initial_step<F: Real>(
    rhs: &mut dyn FnMut(F, &ArrayView1<F>) -> Result<Array1<F>, OdeError>,
    t0: F,
    y0: &Array1<F>,
    f0: &Array1<F>,
    span: F,
    atol: F,
    rtol: F,
) -> Result<F, OdeError> {
    let sc_norm = |v: &Array1<F>, rel_to: &Array1<F>| -> F {
        let n = v.len();
        let mut acc = F::zero();
        for i in 0..n {
            let sc = atol + rtol * rel_to[i].abs();
            let r = v[i] / sc;
            acc += r * r;
        }
        (acc / F::of(n as f64)).sqrt()
    };
    let d0 = sc_norm(y0, y0);
    let d1 = sc_norm(f0, y0);
    let tiny = F::of(1e-10);
    let mut h0 = if d0 < F::of(1e-5) || d1 < F::of(1e-5) {
        F::of(1e-6)
    } else {
        F::of(0.01) * d0 / d1
    };
    if h0 > span {
        h0 = span;
    }
    let y1 = y0 + &f0.mapv(|f| f * h0);
    let f1 = rhs(t0 + h0, &y1.view())?;
    let d2 = sc_norm(&(&f1 - f0), y0) / h0;
    let dm = if d1 > d2 { d1 } else { d2 };
    let h1 = if dm <= tiny {
        let big = h0 * F::of(1e3);
        if F::of(1e-6) > big {
            F::of(1e-6)
        } else {
            big
        }
    } else {
        (F::of(0.01) / dm).powf(F::of(0.2))
    };
    let mut h = h0 * F::of(100.0);
    if h1 < h {
        h = h1;
    }
    if h > span {
        h = span;
    }
    Ok(h)
}

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` to `t_end`, stopping early at
/// the first root of any event function. Events are scalars whose sign
/// change across an accepted step marks a root; the root is located on the
/// interpolant. `on_step` sees every accepted endpoint in order except the
/// one past an event root (the root itself is the final state in the
/// returned [`Solution`]).
pub fn integrate<F: Real>(
    rhs: &mut dyn FnMut(F, &ArrayView1<F>) -> Result<Array1<F>, OdeError>,
    t0: F,
    y0: &ArrayView1<F>,
    t_end: F,
    events: &[&dyn Fn(F, &ArrayView1<F>) -> F],
    opts: &OdeOptions<F>,
    on_step: &mut dyn FnMut(F, &ArrayView1<F>),
) -> Result<Solution<F>, OdeError> {
    let span = t_end - t0;
    if !(span > F::zero()) || !span.is_finite() {
        return Err(OdeError::BadSpan {
            t0: t0.as_f64(),
            t_end: t_end.as_f64(),
        });
    }
    let h_max = opts.h_max.unwrap_or(span);
    let mut t = t0;
    let mut y = y0.to_owned();
    let mut k1 = rhs(t, &y.view())?;
    if !all_finite(&k1) {
        return Err(OdeError::NonFinite { t: t.as_f64() });
    }
    let mut h = match opts.h_init {
        Some(h) => h,
        None => initial_step(rhs, t, &y, &k1, span, opts.atol, opts.rtol)?,
    };
    if h > h_max {
        h = h_max;
    }
    let mut g_prev: Vec<F> = events.iter().map(|g| g(t, &y.view())).collect();
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut just_rejected = false;
    let h_floor = F::of(16.0) * F::epsilon() * if span > F::one() { span } else { F::one() };

    for _ in 0..opts.max_steps {
        if t >= t_end {
            break;
        }
        if h < h_floor {
            return Err(OdeError::StepUnderflow { t: t.as_f64() });
        }
        let mut h_try = h;
        let last = t + h_try >= t_end;
        if last {
            h_try = t_end - t;
        }
        let (y1, err, dense, k7) = rk_step(rhs, t, &y, h_try, &k1, opts.atol, opts.rtol)?;
        if !err.is_finite() {
            // Derivative blow-up inside the step: retry shorter.
            rejected += 1;
            just_rejected = true;
            h = h_try * F::of(0.25);
            if h < h_floor {
                return Err(OdeError::NonFinite { t: t.as_f64() });
            }
            continue;
        }
        if err <= F::one() {
            // Accepted.
            let t1 = dense.t1();
            let g_now: Vec<F> = events.iter().map(|g| g(t1, &y1.view())).collect();
            let mut hit: Option<EventHit<F>> = None;
            for (idx, (&g0, &g1)) in g_prev.iter().zip(&g_now).enumerate() {
                let crossed = (g0 > F::zero() && g1 <= F::zero())
                    || (g0 < F::zero() && g1 >= F::zero());
                if !crossed {
                    continue;
                }
                let root = locate_root(events[idx], &dense, g0, opts.event_tol_t);
                let better = match &hit {
                    None => true,
                    Some(best) => root < best.t,
                };
                if better {
                    let y_root = dense.eval(root);
                    hit = Some(EventHit {
                        index: idx,
                        t: root,
                        y: y_root,
                    });
                }
            }
            accepted += 1;
            if let Some(hit) = hit {
                return Ok(Solution {
                    t: hit.t,
                    y: hit.y.clone(),
                    accepted,
                    rejected,
                    event: Some(hit),
                });
            }
            on_step(t1, &y1.view());
            t = t1;
            y = y1;
            k1 = k7;
            g_prev = g_now;
            let fac_max = if just_rejected { F::one() } else { F::of(FAC_MAX) };
            let fac = if err == F::zero() {
                fac_max
            } else {
                let f = F::of(SAFETY) * err.powf(F::of(-0.2));
                f.min(fac_max).max(F::of(FAC_MIN))
            };
            just_rejected = false;
            h = (h_try * fac).min(h_max);
        } else {
            rejected += 1;
            just_rejected = true;
            let f = (F::of(SAFETY) * err.powf(F::of(-0.2))).max(F::of(FAC_MIN));
            h = h_try * f;
        }
    }
    if t < t_end {
        return Err(OdeError::MaxSteps {
            limit: opts.max_steps,
            t: t.as_f64(),
        });
    }
    Ok(Solution {
        t,
        y,
        accepted,
        rejected,
        event: None,
    })
}

/// Bisects a sign change of `g` over one dense step. `g0` is the value at
/// the step start; the root bracket narrows until it is under `tol_t` wide.
fn locate_root<F: Real>(
    g: &dyn Fn(F, &ArrayView1<F>) -> F,
    dense: &DenseStep<F>,
    g0: F,
    tol_t: F,
) -> F {
    let mut lo = dense.t0();
    let mut hi = dense.t1();
    let start_positive = g0 > F::zero();
    for _ in 0..MAX_BISECTIONS {
        if hi - lo < tol_t {
            break;
        }
        let mid = (lo + hi) * F::of(0.5);
        let y_mid = dense.eval(mid);
        let g_mid = g(mid, &y_mid.view());
        let crossed_by_mid = if start_positive {
            g_mid <= F::zero()
        } else {
            g_mid >= F::zero()
        };
        if crossed_by_mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn opts() -> OdeOptions<f64> {
        OdeOptions::default()
    }

    #[test]
    fn exponential_decay_meets_the_tolerance() {
        let mut rhs = |_t: f64, y: &ArrayView1<f64>| Ok(y.mapv(|v| -v));
        let sol = integrate(
            &mut rhs,
            0.0,
            &array![1.0_f64].view(),
            5.0,
            &[],
            &opts(),
            &mut |_, _| {},
        )
        .unwrap();
        assert_eq!(sol.t, 5.0);
        assert!(sol.event.is_none());
        assert!((sol.y[0] - (-5.0_f64).exp()).abs() < 1e-6);
        assert!(sol.accepted > 5 && sol.accepted < 200);
    }

    #[test]
    fn oscillator_returns_to_its_start_after_a_period() {
        let mut rhs = |_t: f64, y: &ArrayView1<f64>| Ok(array![y[1], -y[0]]);
        let sol = integrate(
            &mut rhs,
            0.0,
            &array![1.0_f64, 0.0].view(),
            2.0 * std::f64::consts::PI,
            &[],
            &opts(),
            &mut |_, _| {},
        )
        .unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-5);
        assert!(sol.y[1].abs() < 1e-5);
    }

    #[test]
    fn accepted_steps_are_reported_in_order() {
        let mut rhs = |t: f64, _y: &ArrayView1<f64>| Ok(array![t.cos()]);
        let mut ts = Vec::new();
        let sol = integrate(
            &mut rhs,
            0.0,
            &array![0.0_f64].view(),
            3.0,
            &[],
            &opts(),
            &mut |t, y| ts.push((t, y[0])),
        )
        .unwrap();
        assert_eq!(ts.len(), sol.accepted);
        assert_eq!(ts.last().unwrap().0, 3.0);
        for w in ts.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
        for (t, v) in ts {
            assert!((v - t.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_output_is_fourth_order_inside_a_step() {
        // Hand-driven steps of y' = cos t from t = 0. The interpolant is
        // fourth order, so its worst in-step error should fall by about
        // 2⁵ = 32 when the step halves.
        let rhs =
            |t: f64, _y: &ArrayView1<f64>| -> Result<Array1<f64>, OdeError> { Ok(array![t.cos()]) };
        let y0 = array![0.0_f64];
        let k1 = rhs(0.0, &y0.view()).unwrap();
        let worst = |h: f64| {
            let mut rhs = |t: f64, _y: &ArrayView1<f64>| -> Result<Array1<f64>, OdeError> {
                Ok(array![t.cos()])
            };
            let (_y1, err, dense, _k7) = rk_step(&mut rhs, 0.0, &y0, h, &k1, 1e-8, 1e-6).unwrap();
            assert!(err.is_finite());
            (0..=16)
                .map(|i| {
                    let t = h * (i as f64) / 16.0;
                    (dense.eval(t)[0] - t.sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let coarse = worst(0.4);
        let fine = worst(0.2);
        assert!(coarse < 1e-6, "coarse dense error {coarse:e}");
        assert!(
            fine < coarse / 16.0,
            "halving the step only moved the dense error {coarse:e} -> {fine:e}"
        );
    }

    #[test]
    fn linear_event_is_located_to_the_bracket_tolerance() {
        let mut rhs = |_t: f64, _y: &ArrayView1<f64>| Ok(array![1.0_f64]);
        let cross = |_t: f64, y: &ArrayView1<f64>| y[0] - 0.5;
        let sol = integrate(
            &mut rhs,
            0.0,
            &array![0.0_f64].view(),
            10.0,
            &[&cross],
            &opts(),
            &mut |_, _| {},
        )
        .unwrap();
        let hit = sol.event.unwrap();
        assert_eq!(hit.index, 0);
        assert!((hit.t - 0.5).abs() < 1e-8);
        assert!((sol.y[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn growth_event_matches_the_logarithm() {
        let mut rhs = |_t: f64, y: &ArrayView1<f64>| Ok(y.to_owned());
        let cross = |_t: f64, y: &ArrayView1<f64>| y[0] - 2.0;
        let sol = integrate(
            &mut rhs,
            0.0,
            &array![1.0_f64].view(),
            10.0,
            &[&cross],
            &opts(),
            &mut |_, _| {},
        )
        .unwrap();
        let hit = sol.event.unwrap();
        // Located on the interpolant, so accuracy tracks the integration
        // tolerance rather than the bisection bracket.
        assert!((hit.t - std::f64::consts::LN_2).abs() < 2e-6);
    }

    #[test]
    fn earliest_of_several_events_wins() {
        let mut rhs = |_t: f64, _y: &ArrayView1<f64>| Ok(array![1.0_f64]);
        let late = |_t: f64, y: &ArrayView1<f64>| y[0] - 0.9;
        let early = |_t: f64, y: &ArrayView1<f64>| y[0] - 0.3;
        let sol = integrate(
            &mut rhs,
            0.0,
            &array![0.0_f64].view(),
            10.0,
            &[&late, &early],
            &opts(),
            &mut |_, _| {},
        )
        .unwrap();
        let hit = sol.event.unwrap();
        assert_eq!(hit.index, 1);
        assert!((hit.t - 0.3).abs() < 1e-8);
    }

    #[test]
    fn events_cut_off_reported_steps() {
        let mut rhs = |_t: f64, _y: &ArrayView1<f64>| Ok(array![1.0_f64]);
        let cross = |_t: f64, y: &ArrayView1<f64>| y[0] - 0.5;
        let mut last_reported = -1.0;
        integrate(
            &mut rhs,
            0.0,
            &array![0.0_f64].view(),
            10.0,
            &[&cross],
            &opts(),
            &mut |t, _| last_reported = t,
        )
        .unwrap();
        assert!(last_reported <= 0.5);
    }

    #[test]
    fn backward_spans_are_rejected() {
        let mut rhs = |_t: f64, y: &ArrayView1<f64>| Ok(y.to_owned());
        let res = integrate(
            &mut rhs,
            1.0,
            &array![1.0_f64].view(),
            0.0,
            &[],
            &opts(),
            &mut |_, _| {},
        );
        assert!(matches!(res, Err(OdeError::BadSpan { .. })));
    }

    #[test]
    fn rhs_failures_surface_as_errors() {
        let mut rhs = |t: f64, y: &ArrayView1<f64>| {
            if t > 0.5 {
                Err(OdeError::RhsFailure {
                    t,
                    source: "field lost its sample".into(),
                })
            } else {
                Ok(y.to_owned())
            }
        };
        let res = integrate(
            &mut rhs,
            0.0,
            &array![1.0_f64].view(),
            2.0,
            &[],
            &opts(),
            &mut |_, _| {},
        );
        assert!(matches!(res, Err(OdeError::RhsFailure { .. })));
    }

    #[test]
    fn step_budget_is_enforced() {
        let mut o = opts();
        o.max_steps = 3;
        o.h_init = Some(1e-4);
        o.h_max = Some(1e-4);
        let mut rhs = |_t: f64, y: &ArrayView1<f64>| Ok(y.to_owned());
        let res = integrate(
            &mut rhs,
            0.0,
            &array![1.0_f64].view(),
            1.0,
            &[],
            &o,
            &mut |_, _| {},
        );
        assert!(matches!(res, Err(OdeError::MaxSteps { limit: 3, .. })));
    }
}
