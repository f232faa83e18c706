//! Photon-pair generation by spontaneous four-wave mixing in a cold
//! double-Λ atomic ensemble.
//!
//! The theory path runs atomic steady state → frequency-domain Langevin
//! response → propagation through the medium → spectra, rates and
//! correlation functions. The experiment path generates synthetic
//! time-tag streams from those predictions and analyses them with the
//! same estimators one would apply to measured data.
//!
//! Rates and frequencies are in units of the excited-state decay rate Γ
//! unless a name says otherwise (`_ns`, `_s`, `_ps`). Core numerics are
//! generic over `f32` and `f64`; the aliases below fix the precision.

pub mod analysis;
pub mod detection;
pub mod event_sim;
pub mod linear_response;
pub mod observables;
pub mod params;
pub mod propagation;
pub mod quadrature;
pub mod scalar;
pub mod steady_state;

pub use scalar::Real;

pub type SystemParams64 = params::SystemParams<f64>;
pub type SystemParams32 = params::SystemParams<f32>;
pub type SteadyState64 = steady_state::SteadyState<f64>;
pub type SteadyState32 = steady_state::SteadyState<f32>;
pub type LocalCoefficients64 = linear_response::LocalCoefficients<f64>;
pub type LocalCoefficients32 = linear_response::LocalCoefficients<f32>;
pub type TransferMatrices64 = propagation::TransferMatrices<f64>;
pub type TransferMatrices32 = propagation::TransferMatrices<f32>;
pub type SpectralResult64 = observables::SpectralResult<f64>;
pub type SpectralResult32 = observables::SpectralResult<f32>;
pub type Rates64 = observables::Rates<f64>;
pub type Rates32 = observables::Rates<f32>;
pub type CorrelationResult64 = observables::CorrelationResult<f64>;
pub type CorrelationResult32 = observables::CorrelationResult<f32>;
pub type TheoryRun64 = observables::TheoryRun<f64>;
pub type TheoryRun32 = observables::TheoryRun<f32>;
