//! Coincidence-count model: expected counts for finite efficiencies and
//! environmental noise, and the inverse map from counts back to rates.

use serde::Serialize;
use thiserror::Error;

use crate::observables::{CorrelationResult, Rates};
use crate::params::DetectionParams;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("empty measurement: the active acquisition time is zero")]
    EmptyMeasurement,
    #[error("bin width {bin_ns} ns is finer than the correlation time step {step_ns} ns")]
    BinTooFine { bin_ns: f64, step_ns: f64 },
    #[error(
        "coincidence window too short for background estimation: tail would start at \
         {tail_start_ns:.1} ns but the window ends at {window_ns:.1} ns"
    )]
    WindowTooShort { tail_start_ns: f64, window_ns: f64 },
    #[error("coincidence window {window_ns} ns does not hold a single {bin_ns} ns bin")]
    EmptyGrid { window_ns: f64, bin_ns: f64 },
}

/// Signed-delay histogram layout: `2K` bins of width Δ. Bin `k ∈ [−K, K)`
/// holds delays in [kΔ, (k+1)Δ) for k ≥ 0 and (kΔ, (k+1)Δ] for k < 0, so that
/// reversing the array maps τ to −τ exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinGrid {
    pub bin_width_ns: f64,
    pub half_bins: usize,
}

impl BinGrid {
    pub fn new(bin_width_ns: f64, window_ns: f64) -> Result<Self, DetectionError> {
        let k = (window_ns / bin_width_ns + 1e-9).floor();
        if !(bin_width_ns > 0.0) || !(k >= 1.0) {
            return Err(DetectionError::EmptyGrid {
                window_ns,
                bin_ns: bin_width_ns,
            });
        }
        Ok(Self {
            bin_width_ns,
            half_bins: k as usize,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.half_bins
    }

    pub fn is_empty(&self) -> bool {
        self.half_bins == 0
    }

    /// Signed bin label of array index `i`.
    #[inline]
    pub fn label(&self, i: usize) -> i64 {
        i as i64 - self.half_bins as i64
    }

    /// Array index of signed label `k`, if inside the grid.
    #[inline]
    pub fn index(&self, k: i64) -> Option<usize> {
        let i = k + self.half_bins as i64;
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    pub fn left_edge_ns(&self, i: usize) -> f64 {
        self.label(i) as f64 * self.bin_width_ns
    }

    pub fn center_ns(&self, i: usize) -> f64 {
        self.left_edge_ns(i) + 0.5 * self.bin_width_ns
    }

    pub fn window_ns(&self) -> f64 {
        self.half_bins as f64 * self.bin_width_ns
    }
}

/// Acceptance of finite generation windows: a delay τ survives in a window of
/// length L with probability 1 − |τ|/L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Gate {
    None,
    Window { length_ns: f64 },
}

impl Gate {
    pub fn at(&self, tau_ns: f64) -> f64 {
        match *self {
            Gate::None => 1.0,
            Gate::Window { length_ns } => (1.0 - tau_ns.abs() / length_ns).max(0.0),
        }
    }

    /// Mean of the acceptance over [a, b].
    pub fn average(&self, a: f64, b: f64) -> f64 {
        match *self {
            Gate::None => 1.0,
            Gate::Window { .. } => {
                if a < 0.0 && b > 0.0 {
                    let w = b - a;
                    (self.average(a, 0.0) * -a + self.average(0.0, b) * b) / w
                } else {
                    // linear on each side of zero
                    0.5 * (self.at(a) + self.at(b))
                }
            }
        }
    }
}

/// Mean over [a, b] of the piecewise-linear interpolant of (x, y) on a
/// uniform grid; outside the grid the curve is held at `outside`.
pub fn bin_average(x0: f64, dx: f64, y: &[f64], a: f64, b: f64, outside: f64) -> f64 {
    let n = y.len();
    let x_end = x0 + dx * (n - 1) as f64;
    let prim = |x: f64| -> f64 {
        // ∫_{x0}^{x} of the interpolant, extended by `outside`
        if x <= x0 {
            return (x - x0) * outside;
        }
        if x >= x_end {
            let full: f64 = y.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
            return full + (x - x_end) * outside;
        }
        let u = (x - x0) / dx;
        let i = (u.floor() as usize).min(n - 2);
        let f = u - i as f64;
        let head: f64 = y[..=i].windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
        head + dx * (y[i] * f + 0.5 * (y[i + 1] - y[i]) * f * f)
    };
    (prim(b) - prim(a)) / (b - a)
}

/// Bin averages of a uniform-grid curve over every bin of `grid`.
pub fn bin_curve(x0: f64, dx: f64, y: &[f64], grid: &BinGrid, outside: f64) -> Vec<f64> {
    // running primitive, so the cost is linear in the grid size
    let n = y.len();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + 0.5 * (y[i - 1] + y[i]) * dx;
    }
    let x_end = x0 + dx * (n - 1) as f64;
    let prim = |x: f64| -> f64 {
        if x <= x0 {
            return (x - x0) * outside;
        }
        if x >= x_end {
            return cum[n - 1] + (x - x_end) * outside;
        }
        let u = (x - x0) / dx;
        let i = (u.floor() as usize).min(n - 2);
        let f = u - i as f64;
        cum[i] + dx * (y[i] * f + 0.5 * (y[i + 1] - y[i]) * f * f)
    };
    let w = grid.bin_width_ns;
    (0..grid.len())
        .map(|i| {
            let a = grid.left_edge_ns(i);
            (prim(a + w) - prim(a)) / w
        })
        .collect()
}

/// Channel purities, backgrounds and trigger totals of a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionModel {
    /// Total Stokes-channel counts N_s.
    pub n_s: f64,
    /// Total anti-Stokes-channel counts N_as.
    pub n_as: f64,
    pub p_s: f64,
    pub p_as: f64,
    /// Environmental background of the Stokes-triggered rate curve (s⁻¹).
    pub r_env_s: f64,
    /// Environmental background of the anti-Stokes-triggered rate curve (s⁻¹).
    pub r_env_as: f64,
    pub duty_fraction: f64,
    /// Summed generation time (s).
    pub active_time: f64,
}

/// Purity R·η / (R·η + R_noise); zero when nothing is detected.
pub fn purity(rate: f64, eta: f64, noise: f64) -> f64 {
    let signal = rate * eta;
    if signal + noise > 0.0 {
        signal / (signal + noise)
    } else {
        0.0
    }
}

/// R_env = (1 − P)/P · R_partner + R_noise,partner / (P η_partner).
pub fn environmental_rate(p_trigger: f64, r_partner: f64, noise_partner: f64, eta_partner: f64) -> f64 {
    (1.0 - p_trigger) / p_trigger * r_partner + noise_partner / (p_trigger * eta_partner)
}

impl DetectionModel {
    pub fn new(r_s: f64, r_as: f64, det: &DetectionParams) -> Result<Self, DetectionError> {
        let active = det.active_time();
        if !(active > 0.0) {
            return Err(DetectionError::EmptyMeasurement);
        }
        let p_s = purity(r_s, det.eta_s, det.r_noise_s);
        let p_as = purity(r_as, det.eta_as, det.r_noise_as);
        Ok(Self {
            n_s: (r_s * det.eta_s + det.r_noise_s) * active,
            n_as: (r_as * det.eta_as + det.r_noise_as) * active,
            p_s,
            p_as,
            r_env_s: environmental_rate(p_s, r_as, det.r_noise_as, det.eta_as),
            r_env_as: environmental_rate(p_as, r_s, det.r_noise_s, det.eta_s),
            duty_fraction: det.duty.duty_fraction(),
            active_time: active,
        })
    }
}

/// Expected coincidence counts per bin for both trigger choices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedCoincidences {
    pub grid: BinGrid,
    pub gate: Gate,
    /// Stokes-triggered counts N_C,s per bin.
    pub n_c_s: Vec<f64>,
    /// Anti-Stokes-triggered counts N_C,as per bin.
    pub n_c_as: Vec<f64>,
    /// Bin-averaged R_C,s (s⁻¹).
    pub rc_s: Vec<f64>,
    /// Bin-averaged R_C,as (s⁻¹).
    pub rc_as: Vec<f64>,
    pub model: DetectionModel,
    pub r_s: f64,
    pub r_as: f64,
}

/// Three-term count model: correlated pairs, impure triggers meeting any
/// partner, and pure triggers meeting partner-channel noise.
pub fn expected_coincidences<T: Real>(
    rates: &Rates<T>,
    corr: &CorrelationResult<T>,
    det: &DetectionParams,
    gate: Gate,
) -> Result<ExpectedCoincidences, DetectionError> {
    let r_s = rates.r_s.to_f64_lossy();
    let r_as = rates.r_as.to_f64_lossy();
    let model = DetectionModel::new(r_s, r_as, det)?;
    let bin_ns = det.bin_width * 1e9;
    let step = corr.tau_step_ns.to_f64_lossy();
    if bin_ns < step * (1.0 - 1e-12) {
        return Err(DetectionError::BinTooFine { bin_ns, step_ns: step });
    }
    let grid = BinGrid::new(bin_ns, det.coincidence_window * 1e9)?;
    let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let x0 = corr.tau_grid[0].to_f64_lossy();
    let rc_s = bin_curve(x0, step, &f(&corr.rc_s), &grid, r_as);
    let rc_as = bin_curve(x0, step, &f(&corr.rc_as), &grid, r_s);
    let dt = det.bin_width;
    let m = &model;
    let counts = |n: f64, p: f64, rc: f64, eta_p: f64, r_p: f64, noise_p: f64| {
        n * p * rc * eta_p * dt + n * (1.0 - p) * (r_p * eta_p + noise_p) * dt + n * p * noise_p * dt
    };
    let mut n_c_s = Vec::with_capacity(grid.len());
    let mut n_c_as = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let a = grid.left_edge_ns(i);
        let g = gate.average(a, a + bin_ns);
        n_c_s.push(g * counts(m.n_s, m.p_s, rc_s[i], det.eta_as, r_as, det.r_noise_as));
        n_c_as.push(g * counts(m.n_as, m.p_as, rc_as[i], det.eta_s, r_s, det.r_noise_s));
    }
    Ok(ExpectedCoincidences {
        grid,
        gate,
        n_c_s,
        n_c_as,
        rc_s,
        rc_as,
        model,
        r_s,
        r_as,
    })
}

impl ExpectedCoincidences {
    /// Rate form N_C,s / (N_s P_s η_as Δτ); equals R_C,s + R_env,s without a gate.
    pub fn rate_form_s(&self, det: &DetectionParams) -> Vec<f64> {
        let k = self.model.n_s * self.model.p_s * det.eta_as * det.bin_width;
        self.n_c_s.iter().map(|n| n / k).collect()
    }

    pub fn rate_form_as(&self, det: &DetectionParams) -> Vec<f64> {
        let k = self.model.n_as * self.model.p_as * det.eta_s * det.bin_width;
        self.n_c_as.iter().map(|n| n / k).collect()
    }

    pub fn stokes_curve(&self) -> CountCurve {
        CountCurve {
            grid: self.grid,
            counts: self.n_c_s.clone(),
            n_trigger: self.model.n_s,
            live_time_s: self.model.active_time,
            trigger: Trigger::Stokes,
            gate: self.gate,
        }
    }

    pub fn anti_stokes_curve(&self) -> CountCurve {
        CountCurve {
            grid: self.grid,
            counts: self.n_c_as.clone(),
            n_trigger: self.model.n_as,
            live_time_s: self.model.active_time,
            trigger: Trigger::AntiStokes,
            gate: self.gate,
        }
    }
}

/// Which channel starts the delay clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Stokes,
    AntiStokes,
}

impl Trigger {
    /// +1 when the correlated partner arrives at positive delay.
    pub fn orientation(self) -> f64 {
        match self {
            Trigger::Stokes => 1.0,
            Trigger::AntiStokes => -1.0,
        }
    }

    /// (η, R_noise) of the trigger channel and of the partner channel.
    fn channels(self, det: &DetectionParams) -> ((f64, f64), (f64, f64)) {
        let s = (det.eta_s, det.r_noise_s);
        let a = (det.eta_as, det.r_noise_as);
        match self {
            Trigger::Stokes => (s, a),
            Trigger::AntiStokes => (a, s),
        }
    }
}

/// Coincidence counts against signed delay, measured or expected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountCurve {
    pub grid: BinGrid,
    pub counts: Vec<f64>,
    /// Total trigger-channel counts.
    pub n_trigger: f64,
    pub live_time_s: f64,
    pub trigger: Trigger,
    pub gate: Gate,
}

/// Rates recovered from one coincidence curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    pub trigger: Trigger,
    /// Trigger-channel purity from N and the known noise rate.
    pub purity: f64,
    /// Trigger-channel generation rate (N/T − R_noise)/η (s⁻¹).
    pub trigger_rate: f64,
    /// R^exp_C(τ) per bin (s⁻¹); `None` when no trigger photons were detected.
    pub rate_curve: Option<Vec<f64>>,
    /// Flat-tail level of the rate curve, R_partner + R_env (s⁻¹).
    pub background: f64,
    /// Tail level in counts per bin, before the gate acceptance.
    pub background_counts: f64,
    pub r_env: f64,
    /// Partner-channel generation rate P·background − R_noise/η (s⁻¹).
    pub partner_rate: f64,
    /// Background-subtracted wavepacket area: the trigger channel's pairing ratio.
    pub pairing_ratio: f64,
    pub tau_delay_ns: f64,
    pub tail_start_ns: f64,
    /// Peak of counts over background, minus one.
    pub r_sb: f64,
    /// Counts-to-rate divisor N·P·η_partner·Δτ.
    pub normalisation: f64,
}

const E_INV: f64 = 0.36787944117144233;

/// Delay at which the running excess area, walked in the partner direction,
/// reaches (1 − 1/e) of its total.
fn delay_quantile(grid: &BinGrid, excess: &[f64], in_signal: &[bool], orientation: f64) -> Option<f64> {
    let order: Vec<usize> = if orientation > 0.0 {
        (0..grid.len()).collect()
    } else {
        (0..grid.len()).rev().collect()
    };
    let total: f64 = order.iter().filter(|&&i| in_signal[i]).map(|&i| excess[i]).sum();
    if !(total > 0.0) {
        return None;
    }
    let target = (1.0 - E_INV) * total;
    let mut cum = 0.0;
    for &i in order.iter().filter(|&&i| in_signal[i]) {
        let next = cum + excess[i];
        if next >= target && excess[i] > 0.0 {
            let f = (target - cum) / excess[i];
            let w = grid.bin_width_ns;
            // oriented delay of the bin's near edge
            let near = if orientation > 0.0 {
                grid.left_edge_ns(i)
            } else {
                -(grid.left_edge_ns(i) + w)
            };
            return Some(near + f * w);
        }
        cum = next;
    }
    None
}

/// Recovers rates, pairing ratio and delay from one coincidence curve.
///
/// The flat tail |τ| > 5·τ_delay sets the background (found iteratively,
/// starting from half the window). Efficiencies and noise rates are inputs.
pub fn invert_coincidences(curve: &CountCurve, det: &DetectionParams) -> Result<Inversion, DetectionError> {
    let grid = &curve.grid;
    let n = grid.len();
    let w = grid.bin_width_ns;
    let window = grid.window_ns();
    let live = curve.live_time_s;
    if !(live > 0.0) {
        return Err(DetectionError::EmptyMeasurement);
    }
    let ((eta_t, noise_t), (eta_p, noise_p)) = curve.trigger.channels(det);
    let orient = curve.trigger.orientation();
    let purity = if curve.n_trigger > 0.0 {
        (1.0 - noise_t * live / curve.n_trigger).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let trigger_rate = (curve.n_trigger / live - noise_t).max(0.0) / eta_t;
    let gates: Vec<f64> = (0..n)
        .map(|i| curve.gate.average(grid.left_edge_ns(i), grid.left_edge_ns(i) + w))
        .collect();
    let min_tail_bins = 8;

    let mut tail_start = 0.5 * window;
    let mut tau_delay = f64::NAN;
    let mut bg_counts = 0.0;
    let mut in_signal = vec![false; n];
    for _ in 0..32 {
        if tail_start > window - (min_tail_bins / 2) as f64 * w {
            return Err(DetectionError::WindowTooShort {
                tail_start_ns: tail_start,
                window_ns: window,
            });
        }
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for i in 0..n {
            let (a, b) = (grid.left_edge_ns(i), grid.left_edge_ns(i) + w);
            let tail = a >= tail_start || b <= -tail_start;
            in_signal[i] = a >= -tail_start && b <= tail_start;
            if tail && gates[i] > 0.0 {
                sum += curve.counts[i] / gates[i];
                cnt += 1;
            }
        }
        if cnt < min_tail_bins {
            return Err(DetectionError::WindowTooShort {
                tail_start_ns: tail_start,
                window_ns: window,
            });
        }
        bg_counts = sum / cnt as f64;
        let excess: Vec<f64> = (0..n).map(|i| curve.counts[i] - bg_counts * gates[i]).collect();
        let next = match delay_quantile(grid, &excess, &in_signal, orient) {
            Some(d) => d,
            None => {
                tau_delay = f64::NAN;
                break;
            }
        };
        let new_tail = (5.0 * next).max(4.0 * w);
        let done = (new_tail - tail_start).abs() < 0.5 * w;
        tau_delay = next;
        tail_start = new_tail;
        if done {
            break;
        }
    }
    // final partition for the area
    for i in 0..n {
        let (a, b) = (grid.left_edge_ns(i), grid.left_edge_ns(i) + w);
        in_signal[i] = a >= -tail_start && b <= tail_start;
    }

    let dt = w * 1e-9;
    let norm = curve.n_trigger * purity * eta_p * dt;
    let excess_sum: f64 = (0..n)
        .filter(|&i| in_signal[i])
        .map(|i| curve.counts[i] - bg_counts * gates[i])
        .sum();
    let r_sb = (0..n)
        .filter(|&i| gates[i] > 0.0 && bg_counts > 0.0)
        .map(|i| curve.counts[i] / (bg_counts * gates[i]))
        .fold(f64::NEG_INFINITY, f64::max)
        - 1.0;

    let (rate_curve, background, r_env, partner_rate, pairing_ratio) = if norm > 0.0 {
        let background = bg_counts / norm;
        let partner_rate = purity * background - noise_p / eta_p;
        let r_env = background - partner_rate;
        let curve_rates = curve.counts.iter().map(|c| c / norm).collect();
        // Δτ cancels: Σ (counts/norm)·Δτ
        (Some(curve_rates), background, r_env, partner_rate, excess_sum / norm * dt)
    } else {
        // no trigger photons: only the partner's accidental level is known
        let acc = if curve.n_trigger > 0.0 { bg_counts / (curve.n_trigger * dt) } else { 0.0 };
        (None, f64::NAN, f64::NAN, (acc - noise_p) / eta_p, 0.0)
    };

    Ok(Inversion {
        trigger: curve.trigger,
        purity,
        trigger_rate,
        rate_curve,
        background,
        background_counts: bg_counts,
        r_env,
        partner_rate,
        pairing_ratio,
        tau_delay_ns: tau_delay,
        tail_start_ns: tail_start,
        r_sb,
        normalisation: norm,
    })
}
