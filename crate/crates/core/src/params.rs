//! Physical scenario, numerical controls and detection settings.
//!
//! Every rate and detuning in [`SystemParams`] is expressed in units of the
//! excited-state decay rate Γ. Absolute units (s⁻¹, ns) only appear through
//! [`PhysicalConstants`] when results are reported.
//!
//! A scenario document is JSON with four optional-by-section blocks:
//!
//! ```json
//! {
//!   "system":    { "od": 20, "omega_d": 2, "omega_c": 2, "delta_d": 20,
//!                  "gamma_21": 0.001, "delta_k_l_over_pi": 0.37 },
//!   "numerics":  { "freq_points": 65536 },
//!   "detection": { "eta_s": 0.026, "eta_as": 0.021 },
//!   "constants": { "gamma_inverse_ns": 26.5 }
//! }
//! ```
//!
//! Only `system` is required. See the README for the full key list.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario document at `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("invalid value for `{field}` ({value}): must satisfy {bound}")]
    Invalid {
        field: &'static str,
        value: f64,
        bound: String,
    },
}

fn invalid(field: &'static str, value: f64, bound: impl Into<String>) -> ParamError {
    ParamError::Invalid {
        field,
        value,
        bound: bound.into(),
    }
}

/// Decay rate of the excited level and its lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    /// Γ in rad/s.
    pub gamma: f64,
    /// Γ⁻¹ in nanoseconds.
    pub gamma_inverse_ns: f64,
}

impl PhysicalConstants {
    pub fn from_lifetime_ns(gamma_inverse_ns: f64) -> Result<Self, ParamError> {
        if !(gamma_inverse_ns.is_finite() && gamma_inverse_ns > 0.0) {
            return Err(invalid("constants.gamma_inverse_ns", gamma_inverse_ns, "> 0"));
        }
        Ok(Self {
            gamma: 1e9 / gamma_inverse_ns,
            gamma_inverse_ns,
        })
    }

    /// Converts a rate expressed in Γ units to s⁻¹.
    #[inline]
    pub fn rate_per_second(&self, rate_in_gamma: f64) -> f64 {
        rate_in_gamma * self.gamma
    }

    /// Converts a time expressed in Γ⁻¹ to ns.
    #[inline]
    pub fn time_ns(&self, time_in_gamma_inverse: f64) -> f64 {
        time_in_gamma_inverse * self.gamma_inverse_ns
    }

    /// Γ·L/c for a medium of the given length: the free-space phase per unit
    /// (Γ-scaled) frequency accumulated across the sample.
    pub fn free_space_transit(&self, medium_length_m: f64) -> f64 {
        self.gamma * medium_length_m / SPEED_OF_LIGHT
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::from_lifetime_ns(26.5).expect("positive lifetime")
    }
}

/// The atomic/optical scenario, all rates and detunings in Γ units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T> {
    /// Optical depth of the anti-Stokes transition.
    pub od: T,
    /// Driving-field Rabi frequency Ω_d.
    pub omega_d: T,
    /// Coupling-field Rabi frequency Ω_c.
    pub omega_c: T,
    /// Driving detuning Δ_d.
    pub delta_d: T,
    /// Coupling detuning Δ_c.
    pub delta_c: T,
    /// Ground-state decoherence rate γ₂₁.
    pub gamma_21: T,
    /// Phase mismatch Δk·L in radians.
    pub delta_k_l: T,
    /// Γ·L/c. Zero drops the free-space ±iω/c propagation terms.
    pub free_space_transit: T,
}

impl<T: Real> SystemParams<T> {
    /// The OD 20, Ω_d = Ω_c = 2Γ, Δ_d = 20Γ, γ₂₁ = 0.001Γ, ΔkL = 0.37π scenario.
    pub fn reference() -> Self {
        Self {
            od: T::lit(20.0),
            omega_d: T::lit(2.0),
            omega_c: T::lit(2.0),
            delta_d: T::lit(20.0),
            delta_c: T::zero(),
            gamma_21: T::lit(0.001),
            delta_k_l: T::lit(0.37 * PI),
            free_space_transit: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let f = |x: T| x.to_f64_lossy();
        let all = [
            ("system.od", self.od),
            ("system.omega_d", self.omega_d),
            ("system.omega_c", self.omega_c),
            ("system.delta_d", self.delta_d),
            ("system.delta_c", self.delta_c),
            ("system.gamma_21", self.gamma_21),
            ("system.delta_k_l", self.delta_k_l),
            ("system.free_space_transit", self.free_space_transit),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(invalid(name, f(v), "finite"));
            }
        }
        if self.od <= T::zero() {
            return Err(invalid("system.od", f(self.od), "> 0"));
        }
        if self.omega_c == T::zero() {
            return Err(invalid("system.omega_c", f(self.omega_c), "!= 0"));
        }
        if self.omega_c < T::zero() {
            return Err(invalid("system.omega_c", f(self.omega_c), ">= 0 (real, non-negative Rabi frequency)"));
        }
        if self.omega_d < T::zero() {
            return Err(invalid("system.omega_d", f(self.omega_d), ">= 0 (real, non-negative Rabi frequency)"));
        }
        if self.gamma_21 < T::zero() {
            return Err(invalid("system.gamma_21", f(self.gamma_21), ">= 0"));
        }
        if self.free_space_transit < T::zero() {
            return Err(invalid("system.free_space_transit", f(self.free_space_transit), ">= 0"));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> SystemParams<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        SystemParams {
            od: c(self.od),
            omega_d: c(self.omega_d),
            omega_c: c(self.omega_c),
            delta_d: c(self.delta_d),
            delta_c: c(self.delta_c),
            gamma_21: c(self.gamma_21),
            delta_k_l: c(self.delta_k_l),
            free_space_transit: c(self.free_space_transit),
        }
    }
}

/// Grid and quadrature settings for the spectral computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Half-extent of the frequency grid, in Γ.
    pub freq_halfwidth: f64,
    /// Number of grid points (power of two).
    pub freq_points: usize,
    /// Gauss–Legendre nodes for the integral over the medium.
    pub z_quadrature_nodes: usize,
    /// Eigenvalue-gap threshold, relative to ‖G‖, below which the 2×2
    /// exponential switches to its degenerate form.
    pub expm_degenerate_tol: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            freq_halfwidth: 32.0,
            freq_points: 1 << 16,
            z_quadrature_nodes: 64,
            expm_degenerate_tol: 1e-8,
        }
    }
}

impl NumericsConfig {
    /// Frequency step Δω in Γ.
    pub fn freq_step(&self) -> f64 {
        2.0 * self.freq_halfwidth / self.freq_points as f64
    }

    /// Time step of the conjugate grid, in Γ⁻¹.
    pub fn time_step(&self) -> f64 {
        PI / self.freq_halfwidth
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let n = self.freq_points;
        if n < 1 << 12 || !n.is_power_of_two() {
            return Err(invalid("numerics.freq_points", n as f64, "a power of two >= 4096"));
        }
        if !(self.freq_halfwidth.is_finite() && self.freq_halfwidth >= 8.0) {
            return Err(invalid("numerics.freq_halfwidth", self.freq_halfwidth, ">= 8 (Γ units)"));
        }
        if self.z_quadrature_nodes < 2 || self.z_quadrature_nodes > 4096 {
            return Err(invalid(
                "numerics.z_quadrature_nodes",
                self.z_quadrature_nodes as f64,
                "between 2 and 4096",
            ));
        }
        if !(self.expm_degenerate_tol.is_finite() && self.expm_degenerate_tol > 0.0) {
            return Err(invalid("numerics.expm_degenerate_tol", self.expm_degenerate_tol, "> 0"));
        }
        Ok(())
    }
}

/// Generation-window timing of the pulsed acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DutySchedule {
    /// Length of one generation window (s).
    pub window: f64,
    pub windows_per_cycle: u32,
    /// Start-to-start spacing of consecutive windows (s).
    pub window_spacing: f64,
    /// Detection-cycle period (s).
    pub cycle_period: f64,
}

impl Default for DutySchedule {
    fn default() -> Self {
        // six 10 µs pulses, each followed by 20 µs of repumping, every 5 ms
        Self {
            window: 10e-6,
            windows_per_cycle: 6,
            window_spacing: 30e-6,
            cycle_period: 5e-3,
        }
    }
}

impl DutySchedule {
    /// Fraction of wall-clock time spent generating.
    pub fn duty_fraction(&self) -> f64 {
        self.window * self.windows_per_cycle as f64 / self.cycle_period
    }

    /// Start offset (s) of window `k` within its cycle.
    pub fn window_start(&self, k: u32) -> f64 {
        self.window_spacing * k as f64
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(invalid("detection.duty.window", self.window, "> 0"));
        }
        if self.windows_per_cycle == 0 {
            return Err(invalid("detection.duty.windows_per_cycle", 0.0, ">= 1"));
        }
        if !(self.window_spacing >= self.window) {
            return Err(invalid(
                "detection.duty.window_spacing",
                self.window_spacing,
                ">= window length",
            ));
        }
        let last_end = self.window_start(self.windows_per_cycle - 1) + self.window;
        if !(self.cycle_period.is_finite() && self.cycle_period >= last_end) {
            return Err(invalid(
                "detection.duty.cycle_period",
                self.cycle_period,
                format!(">= end of last window ({last_end:e} s)"),
            ));
        }
        let d = self.duty_fraction();
        if !(d > 0.0 && d <= 1.0) {
            return Err(invalid("detection.duty", d, "duty fraction in (0, 1]"));
        }
        Ok(())
    }
}

/// Collection efficiencies, noise and counting settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionParams {
    pub eta_s: f64,
    pub eta_as: f64,
    /// Environmental count rate in the Stokes channel (s⁻¹).
    pub r_noise_s: f64,
    /// Environmental count rate in the anti-Stokes channel (s⁻¹), summed over
    /// both HBT detectors.
    pub r_noise_as: f64,
    /// Histogram bin width Δτ (s).
    pub bin_width: f64,
    /// Wall-clock collection time (s).
    pub acquisition_time: f64,
    /// Half-width of the coincidence window (s).
    pub coincidence_window: f64,
    pub duty: DutySchedule,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            eta_s: 0.026,
            eta_as: 0.021,
            r_noise_s: 600.0,
            r_noise_as: 570.0,
            bin_width: 4e-9,
            acquisition_time: 3600.0,
            coincidence_window: 1e-6,
            duty: DutySchedule::default(),
        }
    }
}

impl DetectionParams {
    /// Total generation (live) time over the acquisition (s).
    pub fn active_time(&self) -> f64 {
        self.acquisition_time * self.duty.duty_fraction()
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, eta) in [("detection.eta_s", self.eta_s), ("detection.eta_as", self.eta_as)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(invalid(name, eta, "in (0, 1]"));
            }
        }
        for (name, r) in [
            ("detection.r_noise_s", self.r_noise_s),
            ("detection.r_noise_as", self.r_noise_as),
        ] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(name, r, ">= 0"));
            }
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return Err(invalid("detection.bin_width", self.bin_width, "> 0"));
        }
        if !(self.acquisition_time.is_finite() && self.acquisition_time >= 0.0) {
            return Err(invalid("detection.acquisition_time", self.acquisition_time, ">= 0"));
        }
        if !(self.coincidence_window.is_finite() && self.coincidence_window >= self.bin_width) {
            return Err(invalid(
                "detection.coincidence_window",
                self.coincidence_window,
                ">= bin_width",
            ));
        }
        self.duty.validate()
    }
}

/// A validated parameter bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub system: SystemParams<f64>,
    pub numerics: NumericsConfig,
    pub detection: DetectionParams,
    pub constants: PhysicalConstants,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            system: SystemParams::reference(),
            numerics: NumericsConfig::default(),
            detection: DetectionParams::default(),
            constants: PhysicalConstants::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    od: f64,
    omega_d: f64,
    omega_c: f64,
    delta_d: f64,
    #[serde(default)]
    delta_c: f64,
    gamma_21: f64,
    delta_k_l: Option<f64>,
    delta_k_l_over_pi: Option<f64>,
    #[serde(default)]
    free_space_transit: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConstantsDoc {
    gamma: Option<f64>,
    gamma_inverse_ns: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    system: SystemDoc,
    #[serde(default)]
    numerics: NumericsConfig,
    #[serde(default)]
    detection: DetectionParams,
    #[serde(default)]
    constants: ConstantsDoc,
}

#[derive(Serialize)]
struct ScenarioOut<'a> {
    system: &'a SystemParams<f64>,
    numerics: &'a NumericsConfig,
    detection: &'a DetectionParams,
    constants: &'a PhysicalConstants,
}

impl Scenario {
    /// Parses and validates a JSON scenario document.
    pub fn from_json_str(text: &str) -> Result<Self, ParamError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ScenarioDoc = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ParamError::Parse {
                key: if key == "." { "<document>".into() } else { key },
                message: e.into_inner().to_string(),
            }
        })?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: ScenarioDoc) -> Result<Self, ParamError> {
        let s = doc.system;
        let delta_k_l = match (s.delta_k_l, s.delta_k_l_over_pi) {
            (Some(x), None) => x,
            (None, Some(x)) => x * PI,
            (None, None) => 0.0,
            (Some(x), Some(_)) => {
                return Err(invalid(
                    "system.delta_k_l",
                    x,
                    "only one of delta_k_l / delta_k_l_over_pi",
                ))
            }
        };
        let constants = match (doc.constants.gamma, doc.constants.gamma_inverse_ns) {
            (None, None) => PhysicalConstants::default(),
            (None, Some(ns)) => PhysicalConstants::from_lifetime_ns(ns)?,
            (Some(g), None) => {
                if !(g.is_finite() && g > 0.0) {
                    return Err(invalid("constants.gamma", g, "> 0"));
                }
                PhysicalConstants::from_lifetime_ns(1e9 / g)?
            }
            (Some(g), Some(ns)) => {
                let k = PhysicalConstants::from_lifetime_ns(ns)?;
                if ((k.gamma - g) / k.gamma).abs() > 1e-12 {
                    return Err(invalid("constants.gamma", g, "= 1e9 / gamma_inverse_ns"));
                }
                k
            }
        };
        let scenario = Scenario {
            system: SystemParams {
                od: s.od,
                omega_d: s.omega_d,
                omega_c: s.omega_c,
                delta_d: s.delta_d,
                delta_c: s.delta_c,
                gamma_21: s.gamma_21,
                delta_k_l,
                free_space_transit: s.free_space_transit,
            },
            numerics: doc.numerics,
            detection: doc.detection,
            constants,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks every invariant, including that the correlation time step
    /// resolves the histogram bin.
    pub fn validate(&self) -> Result<(), ParamError> {
        self.system.validate()?;
        self.numerics.validate()?;
        self.detection.validate()?;
        let step_s = self.numerics.time_step() / self.constants.gamma;
        if step_s > self.detection.bin_width * (1.0 + 1e-12) {
            return Err(invalid(
                "numerics.freq_halfwidth",
                self.numerics.freq_halfwidth,
                format!(
                    ">= {:.4} so that the time step ({:.3e} s) does not exceed bin_width",
                    PI / (self.detection.bin_width * self.constants.gamma),
                    step_s
                ),
            ));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ScenarioOut {
            system: &self.system,
            numerics: &self.numerics,
            detection: &self.detection,
            constants: &self.constants,
        })
        .expect("scenario serializes")
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ParamError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ParamError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json_str(&text)
}
