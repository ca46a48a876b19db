//! A common face for drift-gradient fields.
//!
//! The geometric layers (frames, metric, curves) only ever ask four
//! questions at a point: what is the gradient, what is its Jacobian, how
//! stationary is the point, and which equal-density level does it sit on.
//! [`GradientField`] captures exactly that, with two families of
//! implementations: kernel-backed fields wrapping a [`KernelContext`] (the
//! estimated score `∇ log S`), and closed-form synthetic potentials (see the
//! data module). Curve integration is agnostic to which one it is driving.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::density::{DensityError, KernelContext};
use crate::linalg;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// A differentiable gradient field with a density interpretation.
pub trait GradientField<F: Real>: Sync {
    fn dim(&self) -> usize;

    /// The drift gradient at `x` (for kernel fields, the score `∇ log S`).
    fn gradient(&self, x: &ArrayView1<F>) -> Result<Array1<F>, FieldError>;

    /// Jacobian of the gradient, `out[[i, j]] = ∂_i grad_j`; symmetric
    /// because every implementation is an exact gradient field.
    fn jacobian(&self, x: &ArrayView1<F>) -> Result<Array2<F>, FieldError>;

    /// Gradient and Jacobian together (one kernel pass for estimators).
    fn gradient_jacobian(&self, x: &ArrayView1<F>) -> Result<(Array1<F>, Array2<F>), FieldError> {
        Ok((self.gradient(x)?, self.jacobian(x)?))
    }

    /// Stationarity measure: small exactly near density modes. Kernel fields
    /// report the mean-shift displacement `|du|/S`; analytic fields report
    /// `|∇U|`.
    fn stationarity(&self, x: &ArrayView1<F>) -> Result<F, FieldError>;

    /// A scalar whose level sets are the equal-density surfaces (log scale);
    /// only differences of this value are meaningful.
    fn level(&self, x: &ArrayView1<F>) -> Result<F, FieldError>;
}

/// Kernel-backed field: the score of the smoothed sample density.
#[derive(Debug, Clone, Copy)]
pub struct KernelField<'a, F: Real> {
    ctx: &'a KernelContext<F>,
}

impl<'a, F: Real> KernelField<'a, F> {
    pub fn new(ctx: &'a KernelContext<F>) -> Self {
        KernelField { ctx }
    }

    pub fn ctx(&self) -> &'a KernelContext<F> {
        self.ctx
    }
}

impl<F: Real> GradientField<F> for KernelField<'_, F> {
    fn dim(&self) -> usize {
        self.ctx.dim()
    }

    fn gradient(&self, x: &ArrayView1<F>) -> Result<Array1<F>, FieldError> {
        Ok(self.ctx.grad_log_density(x)?)
    }

    fn jacobian(&self, x: &ArrayView1<F>) -> Result<Array2<F>, FieldError> {
        Ok(self.gradient_jacobian(x)?.1)
    }

    fn gradient_jacobian(&self, x: &ArrayView1<F>) -> Result<(Array1<F>, Array2<F>), FieldError> {
        let eval = self.ctx.grad_u_jacobian(x)?;
        let scale = self.ctx.normalizer(eval.kernel_sum)?;
        let p = eval.du.mapv(|v| v * scale);
        // Chain rule for P = 2β·du/S with ∇S = 2β·du:
        // ∂_i P_j = (2β/S)·∂_i du_j − P_i·P_j.
        let raw = eval.jacobian.expect("grad_u_jacobian fills the jacobian");
        let mut jac = raw.mapv(|v| v * scale);
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                jac[[i, j]] -= p[i] * p[j];
            }
        }
        Ok((p, jac))
    }

    fn stationarity(&self, x: &ArrayView1<F>) -> Result<F, FieldError> {
        let eval = self.ctx.grad_u(x)?;
        self.ctx.normalizer(eval.kernel_sum)?;
        Ok(linalg::norm(&eval.du.view()) / eval.kernel_sum)
    }

    fn level(&self, x: &ArrayView1<F>) -> Result<F, FieldError> {
        Ok(self.ctx.log_kernel_sum(x)?)
    }
}
