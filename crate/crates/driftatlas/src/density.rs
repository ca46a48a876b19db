//! Gaussian-kernel estimation of the drift field of a sample density.
//!
//! Around a query point `x`, each sample point `s_k` carries the weight
//! `w_k = exp(−β·|s_k − x|²)`. Three aggregates drive everything downstream:
//!
//! * the kernel sum `S = Σ_k w_k`, an unnormalized density estimate;
//! * the drift numerator `du_j = Σ_k w_k·(s_kj − x_j)`, which equals
//!   `∇S / (2β)` exactly, so `du` is itself a gradient field;
//! * its Jacobian `∂_i du_j = 2β·Σ_k w_k (x_i − s_ki)(x_j − s_kj) − δ_ij·S`,
//!   symmetric for the same reason.
//!
//! The normalized gradient `2β·du/S` is the gradient of `log S`, i.e. the
//! score of the smoothed density; it is scale-stable across sample sizes and
//! is what the geometric layers consume. The mean-shift displacement is
//! `du/S`, so one displacement floor serves as both the ascent convergence
//! test and the "arrived at a mode" criterion.
//!
//! Kernel sums use pairwise (tree) summation: samples near and far contribute
//! terms many orders of magnitude apart, and tree accumulation keeps the
//! rounding growth logarithmic in the sample count.

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::linalg::{pairwise_sum, pairwise_sum_rows};
use crate::neighbors::{nearest, Dataset, NeighborError};
use crate::scalar::Real;

/// Kernel sums below this floor are treated as "no support here": the query
/// point is so far outside the sample that every weight has underflowed.
pub const KERNEL_SUM_FLOOR: f64 = 1e-300;

/// Mean-shift displacement below which an iterate counts as stationary.
pub const STATIONARITY_FLOOR: f64 = 1e-6;

/// Cap on mean-shift iterations per ascent round.
pub const MAX_MEAN_SHIFT_ITER: usize = 500;

/// Cap on resampling rounds for the nearest-neighbor ascent.
pub const MAX_RESAMPLE_ROUNDS: usize = 20;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("sample set is empty")]
    EmptySample,
    #[error("bandwidth beta must be positive and finite, got {got}")]
    BadBeta { got: f64 },
    #[error("sample row {row} contains a non-finite coordinate")]
    NonFinite { row: usize },
    #[error("query dimension {got} does not match sample dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel sum underflowed ({kernel_sum:e}); query lies outside all sample support")]
    Underflow { kernel_sum: f64 },
    #[error("mean shift did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error(transparent)]
    Neighbors(#[from] NeighborError),
}

/// A bandwidth plus a sample matrix (rows are points). Immutable after
/// construction, safe to share across threads.
#[derive(Debug, Clone)]
pub struct KernelContext<F: Real> {
    beta: F,
    sample: Array2<F>,
}

/// One gradient evaluation: the point, the drift numerator `du`, the kernel
/// sum, and optionally the Jacobian `∂_i du_j` (row = derivative direction).
#[derive(Debug, Clone)]
pub struct GradientEval<F: Real> {
    pub point: Array1<F>,
    pub du: Array1<F>,
    pub kernel_sum: F,
    pub jacobian: Option<Array2<F>>,
}

impl<F: Real> KernelContext<F> {
    pub fn new(beta: F, sample: Array2<F>) -> Result<Self, DensityError> {
        if sample.nrows() == 0 {
            return Err(DensityError::EmptySample);
        }
        if !(beta.is_finite() && beta > F::zero()) {
            return Err(DensityError::BadBeta {
                got: beta.as_f64(),
            });
        }
        for (row, p) in sample.rows().into_iter().enumerate() {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(DensityError::NonFinite { row });
            }
        }
        Ok(KernelContext { beta, sample })
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.sample.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.sample.ncols()
    }

    pub fn sample(&self) -> ArrayView2<'_, F> {
        self.sample.view()
    }

    fn check_dim(&self, x: &ArrayView1<F>) -> Result<(), DensityError> {
        if x.len() != self.dim() {
            return Err(DensityError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-sample Gaussian weights `exp(−β·|s_k − x|²)`.
    pub fn kernel_weights(&self, x: &ArrayView1<F>) -> Result<Array1<F>, DensityError> {
        self.check_dim(x)?;
        let mut w = Array1::zeros(self.len());
        for (k, s) in self.sample.rows().into_iter().enumerate() {
            let mut d2 = F::zero();
            for (a, b) in s.iter().zip(x.iter()) {
                let d = *a - *b;
                d2 += d * d;
            }
            w[k] = (-self.beta * d2).exp();
        }
        Ok(w)
    }

    /// Drift numerator and kernel sum at `x` (no Jacobian).
    pub fn grad_u(&self, x: &ArrayView1<F>) -> Result<GradientEval<F>, DensityError> {
        self.check_dim(x)?;
        let w = self.kernel_weights(x)?;
        let (du, kernel_sum) = self.accumulate(x, &w);
        Ok(GradientEval {
            point: x.to_owned(),
            du,
            kernel_sum,
            jacobian: None,
        })
    }

    /// Drift numerator, kernel sum, and the Jacobian `∂_i du_j`.
    pub fn grad_u_jacobian(&self, x: &ArrayView1<F>) -> Result<GradientEval<F>, DensityError> {
        self.check_dim(x)?;
        let w = self.kernel_weights(x)?;
        let (du, kernel_sum) = self.accumulate(x, &w);
        let n = self.dim();
        let m = self.len();
        // Second-moment part: M_ij = Σ_k w_k (x_i − s_ki)(x_j − s_kj),
        // assembled as BᵀB with B_k = √w_k · (x − s_k).
        let mut b = Array2::<F>::zeros((m, n));
        for (k, s) in self.sample.rows().into_iter().enumerate() {
            let root = w[k].sqrt();
            let mut row = b.row_mut(k);
            for j in 0..n {
                row[j] = root * (x[j] - s[j]);
            }
        }
        let mut moment = Array2::<F>::zeros((n, n));
        general_mat_mul(F::one(), &b.t(), &b, F::zero(), &mut moment);
        let two_beta = F::of(2.0) * self.beta;
        let mut jac = moment.mapv(|v| two_beta * v);
        for i in 0..n {
            jac[[i, i]] -= kernel_sum;
        }
        Ok(GradientEval {
            point: x.to_owned(),
            du,
            kernel_sum,
            jacobian: Some(jac),
        })
    }

    fn accumulate(&self, x: &ArrayView1<F>, w: &Array1<F>) -> (Array1<F>, F) {
        let n = self.dim();
        let sample = &self.sample;
        let du = pairwise_sum_rows(self.len(), n, |k, out| {
            let wk = w[k];
            let s = sample.row(k);
            for j in 0..n {
                out[j] = wk * (s[j] - x[j]);
            }
        });
        let kernel_sum = pairwise_sum(self.len(), |k| w[k]);
        (Array1::from_vec(du), kernel_sum)
    }

    /// The score `∇ log S = 2β·du/S`. Errors with [`DensityError::Underflow`]
    /// when the kernel sum has no support at `x`.
    pub fn grad_log_density(&self, x: &ArrayView1<F>) -> Result<Array1<F>, DensityError> {
        let eval = self.grad_u(x)?;
        let scale = self.normalizer(eval.kernel_sum)?;
        Ok(eval.du.mapv(|v| v * scale))
    }

    /// `log S` up to the constant `−log m`; level sets of this are the
    /// equal-density surfaces the geodesics live on.
    pub fn log_kernel_sum(&self, x: &ArrayView1<F>) -> Result<F, DensityError> {
        let eval = self.grad_u(x)?;
        self.guard_underflow(eval.kernel_sum)?;
        Ok(eval.kernel_sum.ln())
    }

    /// One mean-shift step: the kernel-weighted sample mean
    /// `x + du/S`.
    pub fn mean_shift_step(&self, x: &ArrayView1<F>) -> Result<Array1<F>, DensityError> {
        let eval = self.grad_u(x)?;
        self.guard_underflow(eval.kernel_sum)?;
        Ok(&eval.point + &eval.du.mapv(|v| v / eval.kernel_sum))
    }

    fn guard_underflow(&self, kernel_sum: F) -> Result<(), DensityError> {
        if kernel_sum > F::of(KERNEL_SUM_FLOOR) {
            Ok(())
        } else {
            Err(DensityError::Underflow {
                kernel_sum: kernel_sum.as_f64(),
            })
        }
    }

    /// `2β/S` with the underflow guard applied.
    pub fn normalizer(&self, kernel_sum: F) -> Result<F, DensityError> {
        self.guard_underflow(kernel_sum)?;
        Ok(F::of(2.0) * self.beta / kernel_sum)
    }
}

/// Where an ascent draws its kernel sample from.
pub enum SampleSource<'a, F: Real> {
    /// One fixed context for the whole ascent.
    Fixed(&'a KernelContext<F>),
    /// Re-fetch the `m` nearest dataset points around the current iterate
    /// after each converged inner loop, until the id set stops changing.
    Nearest {
        data: &'a Dataset<F>,
        m: usize,
        beta: F,
    },
}

/// Result of a mean-shift ascent.
#[derive(Debug, Clone)]
pub struct Ascent<F: Real> {
    pub mode: Array1<F>,
    /// Total inner mean-shift iterations across all rounds.
    pub iterations: usize,
    /// Resampling rounds used (always 1 for a fixed source).
    pub rounds: usize,
    /// False when the resampling id set was still changing at the round cap.
    pub stable: bool,
    /// Kernel sum at the mode under the final context.
    pub kernel_sum: F,
}

/// Mean-shift gradient ascent to a density mode.
///
/// The inner loop iterates `x ← mean_shift_step(x)` until the displacement
/// falls below `tol`; with a [`SampleSource::Nearest`] source the outer loop
/// re-fetches the sample around the new iterate and repeats until the
/// nearest-id set is unchanged (capped at [`MAX_RESAMPLE_ROUNDS`]).
pub fn gradient_ascent<F: Real>(
    source: &SampleSource<'_, F>,
    x0: &ArrayView1<F>,
    tol: F,
    max_iter: usize,
) -> Result<Ascent<F>, DensityError> {
    let mut x = x0.to_owned();
    let mut total_iter = 0usize;
    match source {
        SampleSource::Fixed(ctx) => {
            let kernel_sum = inner_ascent(ctx, &mut x, tol, max_iter, &mut total_iter)?;
            Ok(Ascent {
                mode: x,
                iterations: total_iter,
                rounds: 1,
                stable: true,
                kernel_sum,
            })
        }
        SampleSource::Nearest { data, m, beta } => {
            let mut prev_ids: Option<Vec<usize>> = None;
            let mut rounds = 0usize;
            let mut stable = false;
            let mut kernel_sum = F::zero();
            while rounds < MAX_RESAMPLE_ROUNDS {
                rounds += 1;
                let mut ids: Vec<usize> =
                    nearest(data, &x.view(), *m)?.into_iter().map(|h| h.id).collect();
                ids.sort_unstable();
                let dim = data.dim();
                let mut sample = Array2::zeros((ids.len(), dim));
                for (row, &id) in ids.iter().enumerate() {
                    sample.row_mut(row).assign(&data.point(id));
                }
                let ctx = KernelContext::new(*beta, sample)?;
                kernel_sum = inner_ascent(&ctx, &mut x, tol, max_iter, &mut total_iter)?;
                if prev_ids.as_deref() == Some(ids.as_slice()) {
                    stable = true;
                    break;
                }
                prev_ids = Some(ids);
            }
            Ok(Ascent {
                mode: x,
                iterations: total_iter,
                rounds,
                stable,
                kernel_sum,
            })
        }
    }
}

fn inner_ascent<F: Real>(
    ctx: &KernelContext<F>,
    x: &mut Array1<F>,
    tol: F,
    max_iter: usize,
    total_iter: &mut usize,
) -> Result<F, DensityError> {
    for _ in 0..max_iter {
        *total_iter += 1;
        let eval = ctx.grad_u(&x.view())?;
        ctx.guard_underflow(eval.kernel_sum)?;
        let mut disp2 = F::zero();
        for j in 0..x.len() {
            let d = eval.du[j] / eval.kernel_sum;
            disp2 += d * d;
            x[j] += d;
        }
        if disp2.sqrt() < tol {
            return Ok(eval.kernel_sum);
        }
    }
    Err(DensityError::NonConvergence {
        iterations: max_iter,
    })
}
