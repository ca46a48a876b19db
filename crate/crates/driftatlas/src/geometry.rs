//! Moving frames, the dissimilarity metric, and its closed-form spectrum.
//!
//! At a point with drift gradient `∇U`, pick a center axis `p` with
//! `P₀ = ∂U/∂x^p` bounded away from zero and permute coordinates so the
//! center comes first: `P = (P₀, P₁, …, P_{n−1})`. The transverse basis
//! vectors each have exactly two nonzero ambient entries,
//!
//! ```text
//! V_i = (−P_i) e_center + P₀ e_{σ(i)},     i = 1..n−1,
//! ```
//!
//! so every `V_i` is orthogonal to `∇U` and `(∇U, V₁, …, V_{n−1})` spans the
//! space. The metric is the Gram matrix of that frame:
//!
//! ```text
//! g₀₀ = |∇U|²,  g₀ⱼ = 0,  g_ij = P₀²·δ_ij + P_i·P_j   (i, j ≥ 1),
//! ```
//!
//! whose spectrum is known in closed form: `|∇U|²` with multiplicity 2
//! (directions `e₀` and `(0, P₁, …, P_{n−1})`) and `P₀²` with multiplicity
//! `n−2` (the transverse directions orthogonal to `(P₁, …, P_{n−1})`).
//! Random ±1 combinations of the displayed minimal eigenvectors, sorted and
//! thinned, then orthonormalized, give a reproducible transverse direction
//! set. All vectors here are in frame coordinates (slot 0 = center) unless a
//! name says ambient.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::fd;
use crate::field::{FieldError, GradientField};
use crate::linalg;
use crate::neighbors::stream_rng;
use crate::scalar::Real;
use rand::Rng;

/// Relative floor for `|P₀|`: a center axis is usable while
/// `|P₀| ≥ CENTER_FLOOR_REL × max_j |P_j|`.
pub const CENTER_FLOOR_REL: f64 = 1e-3;

/// Relative drop tolerance for Gram-Schmidt on direction candidates.
pub const GS_DROP_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("gradient component {component:e} at axis {axis} is below the center floor {floor:e}")]
    DegenerateCenter {
        axis: usize,
        component: f64,
        floor: f64,
    },
    #[error("metric multiplicities merge: transverse gradient energy {transverse:e} vanishes against |grad|² = {total:e}")]
    DegenerateSpectrum { transverse: f64, total: f64 },
    #[error("direction candidates span only {got} of the required {needed} dimensions")]
    RankDeficient { needed: usize, got: usize },
    #[error("basis index {index} outside 1..{dim}")]
    BadBasisIndex { index: usize, dim: usize },
    #[error("dimension {dim} too small for this operation (needs at least {needs})")]
    DimensionTooSmall { dim: usize, needs: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A centered frame at one point: the permutation to frame order, the
/// permuted gradient, and the transverse basis implied by both.
#[derive(Debug, Clone)]
pub struct Frame<F: Real> {
    center_axis: usize,
    /// Frame index → ambient axis; `perm[0] = center_axis`, the rest keep
    /// ascending ambient order.
    perm: Vec<usize>,
    /// Gradient components in frame order: `p[i] = grad[perm[i]]`.
    p: Array1<F>,
    /// The gradient in ambient order.
    grad: Array1<F>,
}

impl<F: Real> Frame<F> {
    /// Builds the frame for `grad` centered on `center_axis`. The center
    /// component must clear the relative floor
    /// [`CENTER_FLOOR_REL`]`× max_j |grad_j|`.
    pub fn build(grad: &ArrayView1<F>, center_axis: usize) -> Result<Self, GeometryError> {
        let n = grad.len();
        assert!(center_axis < n, "center axis out of range");
        let max_abs = grad
            .iter()
            .map(|x| x.abs())
            .fold(F::zero(), |a, b| if b > a { b } else { a });
        let floor = F::of(CENTER_FLOOR_REL) * max_abs;
        let p0 = grad[center_axis];
        if !(p0.abs() > floor) || max_abs == F::zero() {
            return Err(GeometryError::DegenerateCenter {
                axis: center_axis,
                component: p0.as_f64(),
                floor: floor.as_f64(),
            });
        }
        let mut perm = Vec::with_capacity(n);
        perm.push(center_axis);
        perm.extend((0..n).filter(|&a| a != center_axis));
        let p = Array1::from_iter(perm.iter().map(|&a| grad[a]));
        Ok(Frame {
            center_axis,
            perm,
            p,
            grad: grad.to_owned(),
        })
    }

    /// Builds the frame on the axis of largest gradient magnitude (ties to
    /// the lower axis). This is the canonical centering used whenever the
    /// caller has no reason to prefer an axis.
    pub fn build_auto(grad: &ArrayView1<F>) -> Result<Self, GeometryError> {
        let mut best = 0usize;
        for (j, x) in grad.iter().enumerate() {
            if x.abs() > grad[best].abs() {
                best = j;
            }
        }
        Self::build(grad, best)
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn center_axis(&self) -> usize {
        self.center_axis
    }

    /// Frame index → ambient axis.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Gradient components in frame order (`p()[0]` is the center slot).
    pub fn p(&self) -> &Array1<F> {
        &self.p
    }

    /// The gradient in ambient order.
    pub fn grad(&self) -> &Array1<F> {
        &self.grad
    }

    pub fn p0(&self) -> F {
        self.p[0]
    }

    pub fn grad_norm_sq(&self) -> F {
        self.p.dot(&self.p)
    }

    /// The ambient basis vector `V_i` (two nonzero entries), `i ∈ 1..n−1`.
    pub fn basis_vector(&self, i: usize) -> Array1<F> {
        assert!(i >= 1 && i < self.dim(), "basis index out of range");
        let mut v = Array1::zeros(self.dim());
        v[self.center_axis] = -self.p[i];
        v[self.perm[i]] = self.p0();
        v
    }

    /// All transverse basis vectors `V₁..V_{n−1}` in ambient coordinates.
    pub fn basis(&self) -> Vec<Array1<F>> {
        (1..self.dim()).map(|i| self.basis_vector(i)).collect()
    }

    /// The ambient tangent `Σ_i a_i V_i` for transverse coefficients
    /// `a = (a_1, …, a_{n−1})`.
    pub fn tangent_from_transverse(&self, a: &ArrayView1<F>) -> Array1<F> {
        assert_eq!(a.len(), self.dim() - 1);
        let mut w = Array1::zeros(self.dim());
        let mut center = F::zero();
        for (k, ai) in a.iter().enumerate() {
            let i = k + 1;
            center -= self.p[i] * *ai;
            w[self.perm[i]] = self.p0() * *ai;
        }
        w[self.center_axis] = center;
        w
    }

    /// Decomposes an ambient tangent over `(∇U, V₁, …, V_{n−1})`:
    /// returns `(a₀, a)` with `w = a₀·∇U + Σ a_i·V_i`. Exact because the
    /// `V_i` span the orthogonal complement of `∇U`.
    pub fn decompose(&self, w: &ArrayView1<F>) -> (F, Array1<F>) {
        let a0 = w.dot(&self.grad) / self.grad_norm_sq();
        let mut a = Array1::zeros(self.dim() - 1);
        for k in 0..self.dim() - 1 {
            let i = k + 1;
            a[k] = (w[self.perm[i]] - a0 * self.p[i]) / self.p0();
        }
        (a0, a)
    }

    /// Transverse coefficients of an ambient tangent that lies (up to drift
    /// noise) in the span of the `V_i`: the orthogonal projection onto that
    /// span, expressed in basis coefficients.
    pub fn transverse_coefficients(&self, w: &ArrayView1<F>) -> Array1<F> {
        self.decompose(w).1
    }

    /// Riemannian squared speed of an ambient tangent: the drift-parallel
    /// part is weighted by `|∇U|²`, the transverse part is Euclidean.
    pub fn riemannian_speed_sq(&self, w: &ArrayView1<F>) -> F {
        riemannian_norm_sq(&self.grad.view(), w)
    }
}

/// The metric's ambient quadratic form without building a frame: the
/// component of `w` along `∇U` is weighted by `|∇U|²`, the orthogonal rest
/// stays Euclidean. At a stationary point the parallel weight vanishes and
/// the form degenerates to the plain perpendicular norm.
pub fn riemannian_norm_sq<F: Real>(grad: &ArrayView1<F>, w: &ArrayView1<F>) -> F {
    let gn2 = grad.dot(grad);
    if !(gn2 > F::zero()) {
        return w.dot(w);
    }
    let par = w.dot(grad);
    let par2 = par * par / gn2;
    let perp2 = w.dot(w) - par2;
    // Guard tiny negative round-off in the perpendicular part.
    let perp2 = if perp2 > F::zero() { perp2 } else { F::zero() };
    gn2 * par2 + perp2
}

/// The metric at a frame: the Gram matrix in frame coordinates plus the two
/// scalars that define its spectrum.
#[derive(Debug, Clone)]
pub struct MetricEval<F: Real> {
    pub g: Array2<F>,
    pub grad_norm_sq: F,
    pub p0_sq: F,
}

/// The Gram matrix of `(∇U, V₁, …, V_{n−1})` in frame coordinates.
pub fn metric<F: Real>(frame: &Frame<F>) -> MetricEval<F> {
    let n = frame.dim();
    let p = frame.p();
    let p0_sq = frame.p0() * frame.p0();
    let grad_norm_sq = frame.grad_norm_sq();
    let mut g = Array2::zeros((n, n));
    g[[0, 0]] = grad_norm_sq;
    for i in 1..n {
        for j in 1..n {
            g[[i, j]] = p[i] * p[j];
        }
        g[[i, i]] += p0_sq;
    }
    MetricEval {
        g,
        grad_norm_sq,
        p0_sq,
    }
}

/// The closed-form spectrum of the metric. Eigenvectors are stored in the
/// displayed (unnormalized) form, frame coordinates.
#[derive(Debug, Clone)]
pub struct EigenSystem<F: Real> {
    /// `|∇U|²`, multiplicity 2.
    pub lambda_max: F,
    /// `P₀²`, multiplicity `n−2`.
    pub lambda_min: F,
    /// `e₀`: the pure drift slot.
    pub xi0: Array1<F>,
    /// `(0, P₁, …, P_{n−1})`: the transverse direction aligned with the
    /// gradient shadow.
    pub xi1: Array1<F>,
    /// `ξ_k, k = 2..n−1`: `−P_k` in slot 1 and `P₁` in slot `k`; together
    /// they span the transverse directions orthogonal to `(P₁, …, P_{n−1})`.
    pub xi_min: Vec<Array1<F>>,
}

/// Closed-form eigensystem of the metric at `frame`.
///
/// Requires a genuinely transverse gradient: when every non-center component
/// vanishes the two eigenvalues merge and the split below is meaningless.
/// The minimal eigenvectors additionally pivot on `P₁`, which is nonzero for
/// any estimated gradient in general position.
pub fn eigensystem<F: Real>(frame: &Frame<F>) -> Result<EigenSystem<F>, GeometryError> {
    let n = frame.dim();
    if n < 3 {
        return Err(GeometryError::DimensionTooSmall { dim: n, needs: 3 });
    }
    let p = frame.p();
    let grad_norm_sq = frame.grad_norm_sq();
    let p0_sq = frame.p0() * frame.p0();
    let transverse = grad_norm_sq - p0_sq;
    if !(transverse > F::epsilon() * grad_norm_sq) {
        return Err(GeometryError::DegenerateSpectrum {
            transverse: transverse.as_f64(),
            total: grad_norm_sq.as_f64(),
        });
    }
    let mut xi0 = Array1::zeros(n);
    xi0[0] = F::one();
    let mut xi1 = Array1::zeros(n);
    for i in 1..n {
        xi1[i] = p[i];
    }
    let mut xi_min = Vec::with_capacity(n - 2);
    for k in 2..n {
        let mut v = Array1::zeros(n);
        v[1] = -p[k];
        v[k] = p[1];
        xi_min.push(v);
    }
    Ok(EigenSystem {
        lambda_max: grad_norm_sq,
        lambda_min: p0_sq,
        xi0,
        xi1,
        xi_min,
    })
}

/// Random ±1 combinations of the minimal eigenvectors, sorted by norm and
/// thinned to roughly `2(n−2)` candidates. Every output is itself a minimal
/// eigenvector (the eigenspace is closed under linear combination); the
/// sorted thinning reproduces a spread of combination magnitudes
/// deterministically for a given seed.
pub fn random_min_eigenvectors<F: Real>(
    frame: &Frame<F>,
    count: usize,
    seed: u64,
) -> Result<Vec<Array1<F>>, GeometryError> {
    let eig = eigensystem(frame)?;
    let n = frame.dim();
    let mut rng = stream_rng(seed, 0x5eed_c0de);
    let mut combos: Vec<(F, usize, Array1<F>)> = Vec::with_capacity(count);
    for idx in 0..count {
        let mut zeta = Array1::zeros(n);
        for xi in &eig.xi_min {
            let sign = if rng.random::<bool>() { F::one() } else { -F::one() };
            zeta.zip_mut_with(xi, |z, x| *z = *z + sign * *x);
        }
        let norm = linalg::norm(&zeta.view());
        combos.push((norm, idx, zeta));
    }
    combos.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite norms")
            .then(a.1.cmp(&b.1))
    });
    let stride = (count / (2 * (n - 2)).max(1)).max(1);
    Ok(combos
        .into_iter()
        .step_by(stride)
        .map(|(_, _, z)| z)
        .collect())
}

/// Gram-Schmidt over candidate minimal eigenvectors, keeping exactly `n−2`
/// orthonormal transverse directions (frame coordinates, slot 0 zero).
pub fn orthonormal_directions<F: Real>(
    frame: &Frame<F>,
    candidates: &[Array1<F>],
) -> Result<Vec<Array1<F>>, GeometryError> {
    let needed = frame.dim() - 2;
    let kept = linalg::gram_schmidt(candidates, F::of(GS_DROP_TOL), needed);
    if kept.len() < needed {
        return Err(GeometryError::RankDeficient {
            needed,
            got: kept.len(),
        });
    }
    Ok(kept)
}

/// Commutativity residual of the transverse fields `V_i∂` and `V_j∂` at `x`:
/// the bracketed first-derivative combination from the closed-form Lie
/// bracket, evaluated with central finite differences of the gradient (step
/// `fd_step`). An independent check that the derivative wiring is the
/// gradient of one scalar function; exact symmetry of the Jacobian makes the
/// residual vanish up to finite-difference truncation.
pub fn lie_bracket_residual<F: Real>(
    field: &dyn GradientField<F>,
    x: &ArrayView1<F>,
    i: usize,
    j: usize,
    fd_step: F,
) -> Result<F, GeometryError> {
    let n = field.dim();
    let grad = field.gradient(x)?;
    let frame = Frame::build_auto(&grad.view())?;
    if i < 1 || i >= n {
        return Err(GeometryError::BadBasisIndex { index: i, dim: n });
    }
    if j < 1 || j >= n {
        return Err(GeometryError::BadBasisIndex { index: j, dim: n });
    }
    if i == j {
        return Ok(F::zero());
    }
    // Ambient finite-difference Jacobian of the gradient, permuted to frame
    // order: jac_f[[m, a]] = ∂ P_a / ∂ x̃_m.
    let jac = fd::central_jacobian(
        |q| field.gradient(q).expect("gradient available near x"),
        x,
        fd_step,
    );
    let perm = frame.perm();
    let jf = |m: usize, a: usize| jac[[perm[m], perm[a]]];
    let p = frame.p();
    let p0 = frame.p0();
    let bracket = p0 * (jf(j, i) - jf(i, j)) + p[i] * (jf(0, j) - jf(j, 0))
        + p[j] * (jf(i, 0) - jf(0, i));
    Ok((bracket / (p0 * p0)).abs())
}
