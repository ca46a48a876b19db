//! Scalar abstraction for the numeric core.
//!
//! Everything in this crate is generic over [`Real`], which bundles the float
//! behaviour the library relies on (IEEE arithmetic, literal conversion,
//! ndarray interop, assignment operators, summation) so the same code
//! instantiates at `f32` and `f64`. The crate root re-exports `f64` aliases
//! for the common types, which is what the CLI and the file formats use.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the library.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant (tolerances, configuration values).
    /// Panics only for values no float type can hold, which does not occur
    /// for the literals used in this crate.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    /// Widens to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real is a subset of f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
