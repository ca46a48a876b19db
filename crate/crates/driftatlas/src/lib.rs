//! Riemannian coordinate charts driven by density gradients.
//!
//! This crate estimates the gradient of the log stationary density of a
//! sample set with Gaussian kernels, turns that gradient into a moving frame
//! and a Riemannian metric whose spectrum it knows in closed form, integrates
//! the constrained geodesic and drift curves of that geometry, and assembles
//! the results into low-dimensional (ρ, Θ) encodings of the data around its
//! density modes.
//!
//! The core is generic over the scalar type via [`scalar::Real`] (`f32` or
//! `f64`); the aliases at the crate root fix `f64`, which is what the CLI
//! and the on-disk formats use.

pub mod curves;
pub mod data;
pub mod density;
pub mod fd;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod neighbors;
pub mod ode;
pub mod pipeline;
pub mod report;
pub mod scalar;

pub use scalar::Real;

/// `f64` instantiations of the core types, used by the CLI and file formats.
pub type KernelContext = density::KernelContext<f64>;
pub type GradientEval = density::GradientEval<f64>;
pub type Dataset = neighbors::Dataset<f64>;
pub type Sphere = neighbors::Sphere<f64>;
pub type KernelField<'a> = field::KernelField<'a, f64>;
pub type Frame = geometry::Frame<f64>;
pub type MetricEval = geometry::MetricEval<f64>;
pub type EigenSystem = geometry::EigenSystem<f64>;
pub type CurvePath = curves::CurvePath<f64>;
pub type CurveOptions = curves::CurveOptions<f64>;
pub type CoefficientSchedule = curves::CoefficientSchedule<f64>;
pub type SyntheticPotential = data::SyntheticPotential<f64>;
pub type MixturePotential = data::MixturePotential<f64>;
pub type ProtoParams = pipeline::ProtoParams<f64>;
pub type PrototypeRecord = pipeline::PrototypeRecord<f64>;
pub type AxisResult = pipeline::AxisResult<f64>;
pub type CoordinateFrame = pipeline::CoordinateFrame<f64>;
pub type DirectionCurves = pipeline::DirectionCurves<f64>;
pub type RmsReport = pipeline::RmsReport<f64>;
pub type PcaResult = pipeline::PcaResult<f64>;
pub type RhoSummary = report::RhoSummary<f64>;
