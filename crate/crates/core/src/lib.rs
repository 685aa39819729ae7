//! Wavelet-leader multifractal analysis of constructed coefficient fields.
//!
//! Fields hold magnitudes `|c_{j,k}|` on the dyadic tree of `[0,1)`. Leaders,
//! structure functions and large-deviation counts are computed from them and
//! compared with closed-form spectra of the constructions in [`generators`].

pub mod dyadic;
mod error;
pub mod field;
pub mod generators;
pub mod genspace;
pub mod io;
pub mod leaders;
pub mod oracles;
pub mod rng;
mod scalar;
pub mod spectra;

pub use dyadic::{CantorKind, CantorSpec, DyadicIndex, IntervalSet, Rational, StageSchedule};
pub use error::{Error, Result};
pub use field::{CoefficientField, FieldMeta};
pub use generators::{BernoulliLaw, Construction, GeneratorSpec, SlowVariant};
pub use genspace::AdmissibleSequence;
pub use leaders::{HolderEstimate, LeaderField};
pub use oracles::{CompareReport, OracleSpectra, Verdict};
pub use scalar::Scalar;
pub use spectra::{EpsRule, RateEstimator, EstimatorConfig, LeaderStats, SpectrumCurve, SpectrumKind, ZeroPolicy};

pub type CoefficientField64 = CoefficientField<f64>;
pub type CoefficientField32 = CoefficientField<f32>;
pub type LeaderField64 = LeaderField<f64>;
pub type LeaderField32 = LeaderField<f32>;
pub type SpectrumCurve64 = SpectrumCurve<f64>;
pub type SpectrumCurve32 = SpectrumCurve<f32>;
pub type EstimatorConfig64 = EstimatorConfig<f64>;
pub type AdmissibleSequence64 = AdmissibleSequence<f64>;
