//! Synthetic densities with exact scores, image ingestion, and caching.
//!
//! The synthetic family is a Gaussian seen through a triangular cubic
//! coordinate change. With `T(x)` defined by
//!
//! ```text
//! T₀ = x₀,   T₁ = x₁ − c₁·x₀²,   T_k = x_k − c_k·x_{k−2}·x_{k−1}  (k ≥ 2),
//! ```
//!
//! the map is invertible by forward substitution and its Jacobian is unit
//! lower triangular, so pushing `u ~ N(0, Σ)` through `T⁻¹` yields samples
//! whose density is exactly `exp(−½ T(x)ᵀ Σ⁻¹ T(x))` up to the Gaussian
//! constant, that is `e^{2U}` for `U = −¼ TᵀΣ⁻¹T`. Scores, score Jacobians,
//! and drift vectors all come in closed form, which is what makes these
//! potentials usable as oracles for the kernel estimator. Mixtures add
//! rigid poses (rotation plus shift) per component and combine scores with
//! responsibility weights.
//!
//! The ingestion half reads and writes the big-endian IDX container for
//! byte images and labels, cuts random square patches scaled into `[0, 1]`,
//! and can synthesize a deterministic corpus of stroke glyph images when no
//! real handwriting corpus is on disk. Datasets cache to flat little-endian
//! `f64` files with a JSON sidecar recording count, dimension, seed, and
//! provenance.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, GradientField};
use crate::linalg;
use crate::neighbors::{stream_rng, Dataset, NeighborError};
use crate::scalar::Real;

/// Image side length of the built-in glyph corpus.
pub const GLYPH_SIDE: usize = 28;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("IDX magic 0x{found:08x} is not an unsigned-byte tensor of 1 to 3 dimensions")]
    BadMagic { found: u32 },
    #[error("IDX payload truncated: needed {needed} bytes, got {got}")]
    TruncatedFile { needed: usize, got: usize },
    #[error("variance {value:e} at index {index} must be positive and finite")]
    BadVariance { index: usize, value: f64 },
    #[error("curvature coefficients must leave the leading coordinate linear")]
    BadCurvature,
    #[error("pose rotation is not orthogonal (residual {residual:e})")]
    BadRotation { residual: f64 },
    #[error("mixture needs matching component dimensions and positive weights")]
    BadMixture,
    #[error("patch of side {patch} does not fit a {rows}x{cols} image")]
    PatchTooLarge {
        patch: usize,
        rows: usize,
        cols: usize,
    },
    #[error("images tensor must have 3 dimensions (count, rows, cols), got {got}")]
    NotImages { got: usize },
    #[error("cached payload holds {got} values but the sidecar promises {expected}")]
    CacheShape { expected: usize, got: usize },
    #[error(transparent)]
    Neighbors(#[from] NeighborError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sidecar(#[from] serde_json::Error),
}

/// One Gaussian component viewed through a triangular cubic warp and an
/// optional rigid pose.
#[derive(Debug, Clone)]
pub struct SyntheticPotential<F: Real> {
    /// Standard deviations of the warped coordinates.
    sigmas: Array1<F>,
    /// Curvature coefficients `c_k`; `c₀` is unused and must be zero.
    curls: Array1<F>,
    rotation: Option<Array2<F>>,
    shift: Array1<F>,
}

impl<F: Real> SyntheticPotential<F> {
    /// A plain axis-aligned Gaussian with the given standard deviations.
    pub fn gaussian(sigmas: Array1<F>) -> Result<Self, DataError> {
        let curls = Array1::zeros(sigmas.len());
        Self::curved(sigmas, curls)
    }

    /// A curved component: standard deviations plus curvature coefficients.
    pub fn curved(sigmas: Array1<F>, curls: Array1<F>) -> Result<Self, DataError> {
        for (index, s) in sigmas.iter().enumerate() {
            if !(*s > F::zero()) || !s.is_finite() {
                return Err(DataError::BadVariance {
                    index,
                    value: s.as_f64(),
                });
            }
        }
        if curls.len() != sigmas.len() || (!curls.is_empty() && curls[0] != F::zero()) {
            return Err(DataError::BadCurvature);
        }
        let n = sigmas.len();
        Ok(SyntheticPotential {
            sigmas,
            curls,
            rotation: None,
            shift: Array1::zeros(n),
        })
    }

    /// Applies a pure translation: sampled points become `x + shift`.
    pub fn with_shift(mut self, shift: Array1<F>) -> Self {
        assert_eq!(shift.len(), self.dim());
        self.shift = shift;
        self
    }

    /// Applies a rigid pose: sampled points become `R·x + shift`.
    pub fn with_pose(mut self, rotation: Array2<F>, shift: Array1<F>) -> Result<Self, DataError> {
        let n = self.dim();
        assert_eq!(rotation.nrows(), n);
        assert_eq!(rotation.ncols(), n);
        assert_eq!(shift.len(), n);
        let mut residual = F::zero();
        for i in 0..n {
            for j in 0..n {
                let mut dot = F::zero();
                for k in 0..n {
                    dot += rotation[[k, i]] * rotation[[k, j]];
                }
                let want = if i == j { F::one() } else { F::zero() };
                let r = (dot - want).abs();
                if r > residual {
                    residual = r;
                }
            }
        }
        if residual > F::of(1e-10) {
            return Err(DataError::BadRotation {
                residual: residual.as_f64(),
            });
        }
        self.rotation = Some(rotation);
        self.shift = shift;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    /// The density mode in ambient coordinates.
    pub fn mode(&self) -> Array1<F> {
        self.shift.clone()
    }

    /// Ambient point to shape coordinates (undoes the pose).
    fn to_shape(&self, y: &ArrayView1<F>) -> Array1<F> {
        let d = y - &self.shift;
        match &self.rotation {
            None => d,
            Some(r) => r.t().dot(&d),
        }
    }

    /// Shape coordinates to ambient (applies the pose).
    fn to_ambient(&self, x: &Array1<F>) -> Array1<F> {
        match &self.rotation {
            None => x + &self.shift,
            Some(r) => r.dot(x) + &self.shift,
        }
    }

    fn rotate_out(&self, v: Array1<F>) -> Array1<F> {
        match &self.rotation {
            None => v,
            Some(r) => r.dot(&v),
        }
    }

    /// The triangular warp `T(x)` in shape coordinates.
    pub fn warp(&self, x: &ArrayView1<F>) -> Array1<F> {
        let n = self.dim();
        let mut t = x.to_owned();
        if n >= 2 {
            t[1] = x[1] - self.curls[1] * x[0] * x[0];
        }
        for k in 2..n {
            t[k] = x[k] - self.curls[k] * x[k - 2] * x[k - 1];
        }
        t
    }

    /// Inverse of the warp by forward substitution.
    pub fn unwarp(&self, u: &ArrayView1<F>) -> Array1<F> {
        let n = self.dim();
        let mut x = u.to_owned();
        if n >= 2 {
            x[1] = u[1] + self.curls[1] * x[0] * x[0];
        }
        for k in 2..n {
            x[k] = u[k] + self.curls[k] * x[k - 2] * x[k - 1];
        }
        x
    }

    /// Jacobian of the warp, `jac[[k, i]] = ∂T_k/∂x_i` (unit lower
    /// triangular).
    pub fn warp_jacobian(&self, x: &ArrayView1<F>) -> Array2<F> {
        let n = self.dim();
        let mut j = Array2::eye(n);
        if n >= 2 {
            j[[1, 0]] = -(self.curls[1] + self.curls[1]) * x[0];
        }
        for k in 2..n {
            j[[k, k - 2]] = -self.curls[k] * x[k - 1];
            j[[k, k - 1]] = -self.curls[k] * x[k - 2];
        }
        j
    }

    /// Fully normalized log density at an ambient point (the warp and the
    /// pose both have unit Jacobian determinant, so only the Gaussian
    /// constant appears).
    pub fn log_density(&self, y: &ArrayView1<F>) -> F {
        let x = self.to_shape(y);
        let t = self.warp(&x.view());
        let mut quad = F::zero();
        let mut log_norm = F::zero();
        for k in 0..self.dim() {
            let z = t[k] / self.sigmas[k];
            quad += z * z;
            log_norm += self.sigmas[k].ln();
        }
        let half = F::of(0.5);
        let n = F::of(self.dim() as f64);
        -half * quad - log_norm - half * n * (F::PI() + F::PI()).ln()
    }

    /// The score `∇ log density` at an ambient point, in closed form:
    /// `−J_Tᵀ Σ⁻¹ T` rotated out through the pose.
    pub fn score(&self, y: &ArrayView1<F>) -> Array1<F> {
        let x = self.to_shape(y);
        let t = self.warp(&x.view());
        let jac = self.warp_jacobian(&x.view());
        let n = self.dim();
        let mut g = Array1::zeros(n);
        for i in 0..n {
            let mut acc = F::zero();
            for k in 0..n {
                acc += jac[[k, i]] * t[k] / (self.sigmas[k] * self.sigmas[k]);
            }
            g[i] = -acc;
        }
        self.rotate_out(g)
    }

    /// The drift vector `∇U = ½ ∇ log density`.
    pub fn drift(&self, y: &ArrayView1<F>) -> Array1<F> {
        self.score(y).mapv(|g| g * F::of(0.5))
    }

    /// Jacobian (Hessian) of the score in closed form,
    /// `out[[i, j]] = ∂_i ∂_j log density`.
    pub fn score_jacobian(&self, y: &ArrayView1<F>) -> Array2<F> {
        let x = self.to_shape(y);
        let t = self.warp(&x.view());
        let jac = self.warp_jacobian(&x.view());
        let n = self.dim();
        let mut h = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut acc = F::zero();
                for k in 0..n {
                    acc += jac[[k, i]] * jac[[k, j]] / (self.sigmas[k] * self.sigmas[k]);
                }
                h[[i, j]] = -acc;
                h[[j, i]] = -acc;
            }
        }
        // Curvature of the warp itself: T₁ bends in x₀², the later T_k in
        // the product of their two predecessors.
        if n >= 2 {
            let w = t[1] / (self.sigmas[1] * self.sigmas[1]);
            h[[0, 0]] += (self.curls[1] + self.curls[1]) * w;
        }
        for k in 2..n {
            let w = t[k] / (self.sigmas[k] * self.sigmas[k]);
            h[[k - 2, k - 1]] += self.curls[k] * w;
            h[[k - 1, k - 2]] += self.curls[k] * w;
        }
        match &self.rotation {
            None => h,
            Some(r) => r.dot(&h).dot(&r.t()),
        }
    }

    /// Draws `count` points: warped coordinates `u ~ N(0, Σ)`, pulled back
    /// through the inverse warp and posed.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Array2<F> {
        let n = self.dim();
        let mut out = Array2::zeros((count, n));
        let mut u = Array1::zeros(n);
        for row in 0..count {
            for k in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                u[k] = self.sigmas[k] * F::of(z);
            }
            let y = self.to_ambient(&self.unwarp(&u.view()));
            out.row_mut(row).assign(&y);
        }
        out
    }
}

/// A weighted mixture of posed synthetic components. A single component is
/// the degenerate case, so this is the type the rest of the crate talks to.
#[derive(Debug, Clone)]
pub struct MixturePotential<F: Real> {
    components: Vec<SyntheticPotential<F>>,
    /// Normalized positive weights.
    weights: Vec<F>,
}

impl<F: Real> From<SyntheticPotential<F>> for MixturePotential<F> {
    fn from(pot: SyntheticPotential<F>) -> Self {
        MixturePotential {
            components: vec![pot],
            weights: vec![F::one()],
        }
    }
}

impl<F: Real> MixturePotential<F> {
    pub fn new(components: Vec<SyntheticPotential<F>>, weights: Vec<F>) -> Result<Self, DataError> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(DataError::BadMixture);
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(DataError::BadMixture);
        }
        if weights.iter().any(|w| !(*w > F::zero()) || !w.is_finite()) {
            return Err(DataError::BadMixture);
        }
        let total: F = weights.iter().copied().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(MixturePotential {
            components,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[SyntheticPotential<F>] {
        &self.components
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Per-component log of `weight × density`, the quantity behind both
    /// the mixture density and the responsibilities.
    fn log_terms(&self, y: &ArrayView1<F>) -> Vec<F> {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.log_density(y))
            .collect()
    }

    pub fn log_density(&self, y: &ArrayView1<F>) -> F {
        let terms = self.log_terms(y);
        let top = terms
            .iter()
            .copied()
            .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
        if !top.is_finite() {
            return top;
        }
        let sum: F = terms.iter().map(|t| (*t - top).exp()).sum();
        top + sum.ln()
    }

    /// Responsibility weights of each component at `y`.
    fn responsibilities(&self, y: &ArrayView1<F>) -> Vec<F> {
        let terms = self.log_terms(y);
        let top = terms
            .iter()
            .copied()
            .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
        let mut r: Vec<F> = terms.iter().map(|t| (*t - top).exp()).collect();
        let total: F = r.iter().copied().sum();
        for v in &mut r {
            *v /= total;
        }
        r
    }

    /// Mixture score: responsibility-weighted component scores.
    pub fn score(&self, y: &ArrayView1<F>) -> Array1<F> {
        let r = self.responsibilities(y);
        let mut g = Array1::zeros(self.dim());
        for (c, ri) in self.components.iter().zip(r) {
            g.zip_mut_with(&c.score(y), |acc, gi| *acc = *acc + ri * *gi);
        }
        g
    }

    /// The drift vector `∇U = ½ ∇ log density` of the mixture.
    pub fn drift(&self, y: &ArrayView1<F>) -> Array1<F> {
        self.score(y).mapv(|g| g * F::of(0.5))
    }

    /// Mixture score Jacobian:
    /// `Σ r_i (H_i + g_i g_iᵀ) − ḡ ḡᵀ` with `ḡ` the mixture score.
    pub fn score_jacobian(&self, y: &ArrayView1<F>) -> Array2<F> {
        let n = self.dim();
        let r = self.responsibilities(y);
        let mut h = Array2::zeros((n, n));
        let mut mean: Array1<F> = Array1::zeros(n);
        for (c, ri) in self.components.iter().zip(&r) {
            let g = c.score(y);
            let hc = c.score_jacobian(y);
            for i in 0..n {
                for j in 0..n {
                    h[[i, j]] += *ri * (hc[[i, j]] + g[i] * g[j]);
                }
            }
            mean.zip_mut_with(&g, |m, gi| *m = *m + *ri * *gi);
        }
        for i in 0..n {
            for j in 0..n {
                h[[i, j]] -= mean[i] * mean[j];
            }
        }
        h
    }

    /// Draws a deterministic sample: each point picks a component by weight
    /// and then samples it.
    pub fn sample_matrix(&self, count: usize, seed: u64) -> Array2<F> {
        let mut rng = stream_rng(seed, 0x5a3d_11e5);
        let n = self.dim();
        let mut out = Array2::zeros((count, n));
        for row in 0..count {
            let toss: f64 = rng.random::<f64>();
            let mut pick = self.components.len() - 1;
            let mut acc = 0.0;
            for (idx, w) in self.weights.iter().enumerate() {
                acc += w.as_f64();
                if toss < acc {
                    pick = idx;
                    break;
                }
            }
            let point = self.components[pick].sample(1, &mut rng);
            out.row_mut(row).assign(&point.row(0));
        }
        out
    }
}

/// As a gradient field, an analytic potential feeds its drift `∇U` (half
/// the score), which is the scale the geometric formulas are written in:
/// `U = ½ log density` up to a constant, so `ds² = |∇U|²` along the drift
/// reproduces the closed-form arc-length oracles.
impl<F: Real> GradientField<F> for MixturePotential<F> {
    fn dim(&self) -> usize {
        MixturePotential::dim(self)
    }

    fn gradient(&self, x: &ArrayView1<F>) -> Result<Array1<F>, FieldError> {
        Ok(self.drift(x))
    }

    fn jacobian(&self, x: &ArrayView1<F>) -> Result<Array2<F>, FieldError> {
        Ok(self.score_jacobian(x).mapv_into(|h| h * F::of(0.5)))
    }

    fn stationarity(&self, x: &ArrayView1<F>) -> Result<F, FieldError> {
        Ok(linalg::norm(&self.drift(x).view()))
    }

    fn level(&self, x: &ArrayView1<F>) -> Result<F, FieldError> {
        Ok(self.log_density(x))
    }
}

/// Samples a potential into a neighbor-indexed dataset.
pub fn synthetic_sample<F: Real>(
    pot: &MixturePotential<F>,
    count: usize,
    seed: u64,
) -> Result<Dataset<F>, DataError> {
    Ok(Dataset::new(pot.sample_matrix(count, seed))?)
}

/// Largest residual of the stationary forward operator
/// `½Δp − ∇·(b·p)` with `b = ½∇log p`, evaluated by central differences of
/// step `fd_step` at each grid point, normalized by the largest density on
/// the grid. Zero in exact arithmetic for any potential whose score really
/// is the gradient of its log density; finite differences bound it by the
/// truncation error instead.
pub fn verify_stationarity<F: Real>(
    pot: &MixturePotential<F>,
    grid: &[Array1<F>],
    fd_step: F,
) -> F {
    assert!(!grid.is_empty(), "stationarity check needs grid points");
    let log_ref = grid
        .iter()
        .map(|x| pot.log_density(&x.view()))
        .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
    let density = |y: &Array1<F>| (pot.log_density(&y.view()) - log_ref).exp();
    let half = F::of(0.5);
    let n = pot.dim();
    let mut worst = F::zero();
    let mut peak = F::zero();
    for x in grid {
        let p0 = density(x);
        if p0 > peak {
            peak = p0;
        }
        let mut laplace = F::zero();
        let mut divergence = F::zero();
        for i in 0..n {
            let mut hi = x.clone();
            hi[i] += fd_step;
            let mut lo = x.clone();
            lo[i] -= fd_step;
            let p_hi = density(&hi);
            let p_lo = density(&lo);
            laplace += (p_hi - (p0 + p0) + p_lo) / (fd_step * fd_step);
            let b_hi = half * pot.score(&hi.view())[i];
            let b_lo = half * pot.score(&lo.view())[i];
            divergence += (b_hi * p_hi - b_lo * p_lo) / (fd_step + fd_step);
        }
        let r = (half * laplace - divergence).abs();
        if r > worst {
            worst = r;
        }
    }
    worst / peak
}

/// A byte tensor in the big-endian IDX container layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn images(count: usize, rows: usize, cols: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), count * rows * cols);
        IdxArray {
            dims: vec![count, rows, cols],
            data,
        }
    }

    /// One image plane as (row-major) bytes; images tensors only.
    pub fn image(&self, index: usize) -> &[u8] {
        assert_eq!(self.dims.len(), 3);
        let plane = self.dims[1] * self.dims[2];
        &self.data[index * plane..(index + 1) * plane]
    }
}

/// Parses an IDX byte tensor: zero-zero, type `0x08` (unsigned byte), a
/// dimension count of 1 to 3, then big-endian `u32` extents and the raw
/// payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::TruncatedFile {
            needed: 4,
            got: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let ndim = (magic & 0xff) as usize;
    if magic >> 8 != 0x08 || !(1..=3).contains(&ndim) {
        return Err(DataError::BadMagic { found: magic });
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(DataError::TruncatedFile {
            needed: header,
            got: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    for d in 0..ndim {
        let at = 4 + 4 * d;
        dims.push(
            u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize,
        );
    }
    let needed = header + dims.iter().product::<usize>();
    if bytes.len() < needed {
        return Err(DataError::TruncatedFile {
            needed,
            got: bytes.len(),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..needed].to_vec(),
    })
}

/// Serializes a byte tensor back into the IDX container layout.
pub fn write_idx(arr: &IdxArray) -> Vec<u8> {
    let magic: u32 = 0x0800 | arr.dims.len() as u32;
    let mut out = Vec::with_capacity(4 + 4 * arr.dims.len() + arr.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for d in &arr.dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    out
}

pub fn read_idx_file(path: &Path) -> Result<IdxArray, DataError> {
    parse_idx(&fs::read(path)?)
}

/// How to cut patches out of an image tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_size: usize,
    pub scans_per_image: usize,
    pub seed: u64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            patch_size: 7,
            scans_per_image: 10,
            seed: 0,
        }
    }
}

/// Cuts `scans_per_image` square patches at uniform random offsets from
/// every image, flattens them row-major, and scales intensities into
/// `[0, 1]` with 255 mapping to exactly 1. Offsets come from a per-image
/// random stream, so the output is independent of image-loop order.
pub fn extract_patches<F: Real>(
    images: &IdxArray,
    cfg: &PatchConfig,
) -> Result<Array2<F>, DataError> {
    if images.dims.len() != 3 {
        return Err(DataError::NotImages {
            got: images.dims.len(),
        });
    }
    let (count, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    let side = cfg.patch_size;
    if side == 0 || side > rows || side > cols {
        return Err(DataError::PatchTooLarge {
            patch: side,
            rows,
            cols,
        });
    }
    let scale = F::of(1.0 / 255.0);
    let mut out = Array2::zeros((count * cfg.scans_per_image, side * side));
    for img in 0..count {
        let plane = images.image(img);
        let mut rng = stream_rng(cfg.seed, img as u64);
        for scan in 0..cfg.scans_per_image {
            let r0 = rng.random_range(0..=rows - side);
            let c0 = rng.random_range(0..=cols - side);
            let mut row = out.row_mut(img * cfg.scans_per_image + scan);
            for (slot, (dr, dc)) in (0..side)
                .flat_map(|dr| (0..side).map(move |dc| (dr, dc)))
                .enumerate()
            {
                let byte = plane[(r0 + dr) * cols + (c0 + dc)];
                row[slot] = F::of(byte as f64) * scale;
            }
        }
    }
    Ok(out)
}

/// Ten hand-drawn stroke prototypes in a unit box, one per glyph class.
/// Each entry is a list of polylines; closed shapes are sampled circles.
fn glyph_strokes(class: usize) -> Vec<Vec<(f64, f64)>> {
    let circle = |cx: f64, cy: f64, rx: f64, ry: f64| -> Vec<(f64, f64)> {
        let steps = 24;
        (0..=steps)
            .map(|s| {
                let a = 2.0 * std::f64::consts::PI * (s as f64) / (steps as f64);
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect()
    };
    match class {
        0 => vec![circle(0.5, 0.5, 0.26, 0.36)],
        1 => vec![vec![(0.36, 0.26), (0.55, 0.12), (0.55, 0.88)]],
        2 => vec![vec![
            (0.27, 0.3),
            (0.38, 0.13),
            (0.62, 0.13),
            (0.71, 0.32),
            (0.28, 0.86),
            (0.74, 0.86),
        ]],
        3 => vec![vec![
            (0.3, 0.14),
            (0.66, 0.17),
            (0.48, 0.46),
            (0.7, 0.68),
            (0.52, 0.89),
            (0.28, 0.83),
        ]],
        4 => vec![vec![(0.6, 0.88), (0.6, 0.12), (0.26, 0.64), (0.78, 0.64)]],
        5 => vec![vec![
            (0.7, 0.13),
            (0.33, 0.13),
            (0.31, 0.46),
            (0.6, 0.43),
            (0.71, 0.64),
            (0.6, 0.86),
            (0.29, 0.84),
        ]],
        6 => vec![vec![
            (0.62, 0.11),
            (0.38, 0.38),
            (0.3, 0.68),
            (0.44, 0.89),
            (0.64, 0.82),
            (0.67, 0.61),
            (0.36, 0.61),
        ]],
        7 => vec![vec![(0.26, 0.13), (0.75, 0.13), (0.45, 0.89)]],
        8 => vec![circle(0.5, 0.3, 0.17, 0.17), circle(0.5, 0.67, 0.21, 0.21)],
        _ => vec![
            circle(0.54, 0.3, 0.18, 0.18),
            vec![(0.72, 0.32), (0.67, 0.89)],
        ],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        ((px * dx + py * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (px - t * dx, py - t * dy);
    (ex * ex + ey * ey).sqrt()
}

/// A deterministic corpus of 28x28 stroke glyph images: ten base shapes
/// cycled in class order, each instance jittered by a small rigid transform
/// and stroke width. Stands in for a handwriting corpus when none is on
/// disk; the images have enough local texture for patch-level density work.
pub fn stroke_glyphs(count: usize, seed: u64) -> IdxArray {
    let side = GLYPH_SIDE;
    let mut data = vec![0u8; count * side * side];
    for img in 0..count {
        let class = img % 10;
        let mut rng = stream_rng(seed, 0x917f ^ img as u64);
        let angle: f64 = rng.random_range(-0.13..0.13);
        let scale: f64 = rng.random_range(0.88..1.12);
        let dx: f64 = rng.random_range(-0.05..0.05);
        let dy: f64 = rng.random_range(-0.05..0.05);
        let tau: f64 = rng.random_range(0.045..0.07);
        let (sin, cos) = angle.sin_cos();
        let place = |(x, y): (f64, f64)| -> (f64, f64) {
            let (cx, cy) = (x - 0.5, y - 0.5);
            (
                0.5 + dx + scale * (cos * cx - sin * cy),
                0.5 + dy + scale * (sin * cx + cos * cy),
            )
        };
        let strokes: Vec<Vec<(f64, f64)>> = glyph_strokes(class)
            .into_iter()
            .map(|line| line.into_iter().map(place).collect())
            .collect();
        let plane = &mut data[img * side * side..(img + 1) * side * side];
        for r in 0..side {
            for c in 0..side {
                let p = (
                    (c as f64 + 0.5) / side as f64,
                    (r as f64 + 0.5) / side as f64,
                );
                let mut d = f64::INFINITY;
                for line in &strokes {
                    for seg in line.windows(2) {
                        let sd = segment_distance(p, seg[0], seg[1]);
                        if sd < d {
                            d = sd;
                        }
                    }
                }
                let ink = 255.0 * (-(d / tau) * (d / tau)).exp();
                plane[r * side + c] = if ink < 10.0 { 0 } else { ink.round() as u8 };
            }
        }
    }
    IdxArray {
        dims: vec![count, side, side],
        data,
    }
}

/// Class labels matching [`stroke_glyphs`] order.
pub fn stroke_glyph_labels(count: usize) -> IdxArray {
    IdxArray {
        dims: vec![count],
        data: (0..count).map(|i| (i % 10) as u8).collect(),
    }
}

/// Sidecar for a cached dataset: shape, seed, and where the points came
/// from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub count: usize,
    pub dim: usize,
    pub seed: u64,
    pub provenance: String,
}

/// Writes `name.f64le` (row-major little-endian doubles) and `name.json`
/// under `dir`.
pub fn save_dataset(
    dir: &Path,
    name: &str,
    points: &ArrayView2<f64>,
    meta: &DatasetMeta,
) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(points.len() * 8);
    for v in points.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(format!("{name}.f64le")), bytes)?;
    fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_vec_pretty(meta)?,
    )?;
    Ok(())
}

/// Reads a dataset saved by [`save_dataset`], validating the payload
/// against its sidecar.
pub fn load_dataset(dir: &Path, name: &str) -> Result<(Array2<f64>, DatasetMeta), DataError> {
    let meta: DatasetMeta =
        serde_json::from_slice(&fs::read(dir.join(format!("{name}.json")))?)?;
    let bytes = fs::read(dir.join(format!("{name}.f64le")))?;
    let expected = meta.count * meta.dim;
    if bytes.len() != expected * 8 {
        return Err(DataError::CacheShape {
            expected,
            got: bytes.len() / 8,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let points = Array2::from_shape_vec((meta.count, meta.dim), values)
        .expect("shape validated against byte length");
    Ok((points, meta))
}
