//! Spectra, rates, pairing ratios and the time-domain correlation functions.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::linear_response::{local_coefficients, ResponseError};
use crate::params::{DetectionParams, NumericsConfig, PhysicalConstants, Scenario, SystemParams};
use crate::propagation::{diffusion, spectral_point, PropagationError};
use crate::quadrature::GaussLegendre;
use crate::scalar::{re, Cplx, Real};
use crate::steady_state::{steady_state, SteadyStateError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservablesError {
    #[error("steady_state: {0}")]
    SteadyState(#[from] SteadyStateError),
    #[error("linear_response: {0}")]
    Response(#[from] ResponseError),
    #[error("propagation: {0}")]
    Propagation(#[from] PropagationError),
    #[error(
        "time step {step_ns:.3} ns exceeds the requested {max_step_ns:.3} ns; \
         freq_halfwidth must be at least {required_halfwidth:.3} (Γ units)"
    )]
    Resolution {
        step_ns: f64,
        max_step_ns: f64,
        required_halfwidth: f64,
    },
    #[error("inconsistent spectra: total {channel} rate is zero while its paired density is not")]
    Inconsistent { channel: &'static str },
    #[error("no photons are generated; correlation functions are undefined")]
    NoPhotons,
    #[error("{quantity} did not converge on the time grid ({detail}); widen the grid span")]
    NonConvergence { quantity: &'static str, detail: String },
}

/// Uniform frequency grid ω_n = (n − N/2)Δω, Δω = 2W/N (Γ units).
pub fn frequency_grid<T: Real>(n: &NumericsConfig) -> Vec<T> {
    let dw = n.freq_step();
    let half = (n.freq_points / 2) as f64;
    (0..n.freq_points)
        .map(|j| T::lit((j as f64 - half) * dw))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult<T> {
    pub omega_grid: Vec<T>,
    pub freq_step: T,
    pub r_tilde_s: Vec<T>,
    pub r_tilde_as: Vec<T>,
    pub pair_density_s: Vec<T>,
    pub pair_density_as: Vec<T>,
    pub cross_density: Vec<Cplx<T>>,
}

impl<T: Real> SpectralResult<T> {
    pub fn len(&self) -> usize {
        self.omega_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_grid.is_empty()
    }

    /// ∫ f dω/2π on the periodic grid (equal-weight trapezoid).
    pub fn integrate(&self, f: &[T]) -> T {
        let s = f.iter().fold(T::zero(), |a, &x| a + x);
        s * self.freq_step / T::lit(2.0 * PI)
    }
}

pub fn spectra<T: Real>(
    p: &SystemParams<T>,
    n: &NumericsConfig,
) -> Result<SpectralResult<T>, ObservablesError> {
    let s = steady_state(p)?;
    let dm = diffusion(p, &s);
    let quad = GaussLegendre::<T>::new(n.z_quadrature_nodes);
    let tol = T::lit(n.expm_degenerate_tol);
    let grid = frequency_grid::<T>(n);

    let points: Vec<_> = grid
        .par_iter()
        .map(|&w| -> Result<_, ObservablesError> {
            let k = local_coefficients(p, &s, w)?;
            let sp = spectral_point(p, &k, &dm, &quad, w, tol)?;
            let t = sp.transfer;
            let b2 = t.b.norm_sqr();
            let c2 = t.c.norm_sqr();
            Ok((
                b2 + sp.noise.stokes_noise,
                c2 + sp.noise.anti_stokes_noise,
                b2,
                c2,
                t.b.conj() * t.d + sp.noise.cross_noise,
            ))
        })
        .collect::<Result<_, _>>()?;

    let len = points.len();
    let mut out = SpectralResult {
        omega_grid: grid,
        freq_step: T::lit(n.freq_step()),
        r_tilde_s: Vec::with_capacity(len),
        r_tilde_as: Vec::with_capacity(len),
        pair_density_s: Vec::with_capacity(len),
        pair_density_as: Vec::with_capacity(len),
        cross_density: Vec::with_capacity(len),
    };
    for (rs, ras, bs, bas, x) in points {
        out.r_tilde_s.push(rs);
        out.r_tilde_as.push(ras);
        out.pair_density_s.push(bs);
        out.pair_density_as.push(bas);
        out.cross_density.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates<T> {
    /// Stokes generation rate (s⁻¹).
    pub r_s: T,
    /// Anti-Stokes generation rate (s⁻¹).
    pub r_as: T,
    pub rp_s: T,
    pub rp_as: T,
    /// R_s·r_p,s (s⁻¹).
    pub paired_rate: T,
    /// R_s in Γ units.
    pub r_s_gamma: T,
    /// R_as in Γ units.
    pub r_as_gamma: T,
}

impl<T: Real> Rates<T> {
    /// Unpaired Stokes rate R_s(1 − r_p,s) (s⁻¹).
    pub fn unpaired_s(&self) -> T {
        self.r_s * (T::one() - self.rp_s)
    }

    pub fn unpaired_as(&self) -> T {
        self.r_as * (T::one() - self.rp_as)
    }

    /// (R_s − R_as)/R_s
    pub fn asymmetry(&self) -> T {
        (self.r_s - self.r_as) / self.r_s
    }
}

pub fn rates<T: Real>(
    spec: &SpectralResult<T>,
    k: &PhysicalConstants,
) -> Result<Rates<T>, ObservablesError> {
    let rs = spec.integrate(&spec.r_tilde_s);
    let ras = spec.integrate(&spec.r_tilde_as);
    let ps = spec.integrate(&spec.pair_density_s);
    let pas = spec.integrate(&spec.pair_density_as);
    let ratio = |pair: T, tot: T, channel| {
        if tot > T::zero() {
            Ok(pair / tot)
        } else if pair > T::zero() {
            Err(ObservablesError::Inconsistent { channel })
        } else {
            Ok(T::zero())
        }
    };
    let rp_s = ratio(ps, rs, "Stokes")?;
    let rp_as = ratio(pas, ras, "anti-Stokes")?;
    let g = T::lit(k.gamma);
    Ok(Rates {
        r_s: rs * g,
        r_as: ras * g,
        rp_s,
        rp_as,
        paired_rate: ps * g,
        r_s_gamma: rs,
        r_as_gamma: ras,
    })
}

/// Φ(τ_m) = Σ_n X_n e^{−iω_n τ_m} Δω/2π on the conjugate grid
/// τ_m = (m − N/2)Δτ, Δτ = 2π/(NΔω).
pub fn transform_to_time<T: Real>(x: &[Cplx<T>], freq_step: T) -> Vec<Cplx<T>> {
    let n = x.len();
    assert!(n % 4 == 0, "grid length must be a multiple of four");
    let mut buf: Vec<Cplx<T>> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| if j % 2 == 1 { -v } else { v })
        .collect();
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);
    fft.process(&mut buf);
    let scale = freq_step / T::lit(2.0 * PI);
    for (m, v) in buf.iter_mut().enumerate() {
        *v = *v * if m % 2 == 1 { -scale } else { scale };
    }
    buf
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult<T> {
    /// τ grid (ns).
    pub tau_grid: Vec<T>,
    pub tau_step_ns: T,
    pub g2_cross: Vec<T>,
    pub g2_auto_s: Vec<T>,
    pub g2_auto_as: Vec<T>,
    pub g2_cond: Vec<T>,
    /// Stokes-triggered coincidence rate (s⁻¹).
    pub rc_s: Vec<T>,
    /// Anti-Stokes-triggered coincidence rate (s⁻¹).
    pub rc_as: Vec<T>,
}

impl<T: Real> CorrelationResult<T> {
    pub fn len(&self) -> usize {
        self.tau_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_grid.is_empty()
    }

    /// Index of τ = 0.
    pub fn zero_index(&self) -> usize {
        self.tau_grid.len() / 2
    }

    /// Index of −τ_m (the grid is periodic; the first sample maps onto itself).
    #[inline]
    pub fn mirror_index(&self, m: usize) -> usize {
        let n = self.tau_grid.len();
        (n - m) % n
    }

    /// g2_cross(−τ) on the same grid: the anti-Stokes-triggered curve.
    pub fn g2_cross_reflected(&self) -> Vec<T> {
        (0..self.len())
            .map(|m| self.g2_cross[self.mirror_index(m)])
            .collect()
    }

    /// Index of the largest cross-correlation value.
    pub fn peak_index(&self) -> usize {
        argmax(&self.g2_cross)
    }

    /// Linear interpolation of g2_cross at τ (ns). Outside the grid returns 1.
    pub fn g2_cross_at(&self, tau_ns: f64) -> f64 {
        interp_uniform(
            &self.g2_cross,
            self.tau_grid[0].to_f64_lossy(),
            self.tau_step_ns.to_f64_lossy(),
            tau_ns,
        )
        .unwrap_or(1.0)
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn interp_uniform<T: Real>(v: &[T], x0: f64, dx: f64, x: f64) -> Option<f64> {
    let u = (x - x0) / dx;
    if !(u >= 0.0) || u > (v.len() - 1) as f64 {
        return None;
    }
    let i = (u.floor() as usize).min(v.len() - 2);
    let f = u - i as f64;
    Some(v[i].to_f64_lossy() * (1.0 - f) + v[i + 1].to_f64_lossy() * f)
}

/// Conditional anti-Stokes autocorrelation heralded by a Stokes photon.
#[inline]
pub fn conditional_from_cross<T: Real>(g: T) -> T {
    (T::lit(4.0) * g - T::lit(2.0)) / (g * g)
}

pub fn correlations<T: Real>(
    spec: &SpectralResult<T>,
    rates: &Rates<T>,
    k: &PhysicalConstants,
    max_step_ns: f64,
) -> Result<CorrelationResult<T>, ObservablesError> {
    let n = spec.len();
    let dw = spec.freq_step.to_f64_lossy();
    let dtau = 2.0 * PI / (n as f64 * dw);
    let step_ns = k.time_ns(dtau);
    if step_ns > max_step_ns * (1.0 + 1e-12) {
        return Err(ObservablesError::Resolution {
            step_ns,
            max_step_ns,
            required_halfwidth: PI * k.gamma_inverse_ns / max_step_ns,
        });
    }
    let (rs, ras) = (rates.r_s_gamma, rates.r_as_gamma);
    if !(rs > T::zero() && ras > T::zero()) {
        return Err(ObservablesError::NoPhotons);
    }

    let phi = transform_to_time(&spec.cross_density, spec.freq_step);
    let to_c = |v: &[T]| v.iter().map(|&x| re(x)).collect::<Vec<_>>();
    let phi_s = transform_to_time(&to_c(&spec.r_tilde_s), spec.freq_step);
    let phi_as = transform_to_time(&to_c(&spec.r_tilde_as), spec.freq_step);

    let one = T::one();
    let half = n / 2;
    let tau_grid: Vec<T> = (0..n)
        .map(|m| T::lit((m as f64 - half as f64) * step_ns))
        .collect();
    let g2_cross: Vec<T> = phi.iter().map(|z| one + z.norm_sqr() / (rs * ras)).collect();
    let g2_auto_s: Vec<T> = phi_s.iter().map(|z| one + z.norm_sqr() / (rs * rs)).collect();
    let g2_auto_as: Vec<T> = phi_as.iter().map(|z| one + z.norm_sqr() / (ras * ras)).collect();
    let g2_cond = g2_cross.iter().map(|&g| conditional_from_cross(g)).collect();
    let rc_s = g2_cross.iter().map(|&g| rates.r_as * g).collect();
    let rc_as = (0..n).map(|m| rates.r_s * g2_cross[(n - m) % n]).collect();

    Ok(CorrelationResult {
        tau_grid,
        tau_step_ns: T::lit(step_ns),
        g2_cross,
        g2_auto_s,
        g2_auto_as,
        g2_cond,
        rc_s,
        rc_as,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub r_sb: f64,
    pub g2_cross_peak: f64,
    pub g2_cross_peak_tau_ns: f64,
    pub g2_cond_min: f64,
    pub tau_delay_ns: f64,
    pub tau_c_ns: f64,
    pub cs_violation: f64,
    pub eta_h_s: f64,
    pub eta_h_as: f64,
}

/// τ at which the running area of a non-negative curve first reaches
/// `fraction` of its total (trapezoid area, linearly interpolated).
pub fn area_quantile(tau: &[f64], y: &[f64], fraction: f64) -> Option<f64> {
    let n = y.len();
    if n < 2 {
        return None;
    }
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + 0.5 * (y[i] + y[i - 1]) * (tau[i] - tau[i - 1]);
    }
    let total = cum[n - 1];
    if !(total > 0.0) {
        return None;
    }
    let target = fraction * total;
    let k = cum.iter().position(|&c| c >= target)?;
    if k == 0 {
        return Some(tau[0]);
    }
    let f = (target - cum[k - 1]) / (cum[k] - cum[k - 1]);
    Some(tau[k - 1] + f * (tau[k] - tau[k - 1]))
}

/// Full width of an even, peaked curve where it falls to `level`.
fn full_width_at(tau: &[f64], y: &[f64], zero: usize, level: f64) -> Option<f64> {
    let right = (zero + 1..y.len()).find(|&i| y[i] < level)?;
    let left = (0..zero).rev().find(|&i| y[i] < level)?;
    let cross = |a: usize, b: usize| tau[a] + (level - y[a]) * (tau[b] - tau[a]) / (y[b] - y[a]);
    Some(cross(right - 1, right) - cross(left + 1, left))
}

/// Summary metrics of a correlation run. The coherence time is the full
/// 1/e width of g2_auto_as − 1; the delay is the (1 − 1/e) quantile of the
/// correlated area of the Stokes-triggered wavepacket.
pub fn metrics<T: Real>(
    corr: &CorrelationResult<T>,
    rates: &Rates<T>,
    det: &DetectionParams,
) -> Result<Metrics, ObservablesError> {
    let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let tau = f(&corr.tau_grid);
    let g2 = f(&corr.g2_cross);
    let peak = corr.peak_index();
    let excess: Vec<f64> = g2.iter().map(|g| (g - 1.0).max(0.0)).collect();
    let e_inv = (-1.0f64).exp();

    let tau_delay_ns =
        area_quantile(&tau, &excess, 1.0 - e_inv).ok_or(ObservablesError::NonConvergence {
            quantity: "tau_delay",
            detail: "no correlated area".into(),
        })?;

    let auto_as: Vec<f64> = f(&corr.g2_auto_as).iter().map(|g| g - 1.0).collect();
    let tau_c_ns = full_width_at(&tau, &auto_as, corr.zero_index(), e_inv).ok_or(
        ObservablesError::NonConvergence {
            quantity: "tau_c",
            detail: "g2_auto_as - 1 never falls below 1/e".into(),
        },
    )?;

    let z = corr.zero_index();
    let cs = g2[peak] * g2[peak]
        / (corr.g2_auto_s[z].to_f64_lossy() * corr.g2_auto_as[z].to_f64_lossy());
    let g2_cond_min = corr
        .g2_cond
        .iter()
        .map(|x| x.to_f64_lossy())
        .fold(f64::INFINITY, f64::min);
    Ok(Metrics {
        r_sb: g2[peak] - 1.0,
        g2_cross_peak: g2[peak],
        g2_cross_peak_tau_ns: tau[peak],
        g2_cond_min,
        tau_delay_ns,
        tau_c_ns,
        cs_violation: cs,
        eta_h_s: det.eta_s * rates.rp_as.to_f64_lossy(),
        eta_h_as: det.eta_as * rates.rp_s.to_f64_lossy(),
    })
}

/// Spectra, rates and correlations of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRun<T> {
    pub spectra: SpectralResult<T>,
    pub rates: Rates<T>,
    pub correlations: CorrelationResult<T>,
}

impl<T: Real> TheoryRun<T> {
    /// Runs the full chain at the scenario's numerics, requiring the time
    /// step to resolve the histogram bin.
    pub fn compute(s: &Scenario) -> Result<Self, ObservablesError> {
        let p = s.system.cast::<T>();
        let spectra = spectra(&p, &s.numerics)?;
        let rates = rates(&spectra, &s.constants)?;
        let correlations = correlations(
            &spectra,
            &rates,
            &s.constants,
            s.detection.bin_width * 1e9,
        )?;
        Ok(Self {
            spectra,
            rates,
            correlations,
        })
    }

    pub fn metrics(&self, det: &DetectionParams) -> Result<Metrics, ObservablesError> {
        metrics(&self.correlations, &self.rates, det)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NumericsConfig {
        NumericsConfig {
            freq_halfwidth: 16.0,
            freq_points: 4096,
            z_quadrature_nodes: 16,
            ..NumericsConfig::default()
        }
    }

    #[test]
    fn transform_of_a_constant_is_a_delta() {
        let n = 64;
        let dw = 0.5;
        let x = vec![Cplx::new(1.0, 0.0); n];
        let phi = transform_to_time(&x, dw);
        for (m, v) in phi.iter().enumerate() {
            if m == n / 2 {
                assert!((v.re - n as f64 * dw / (2.0 * PI)).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "{m}");
            }
        }
    }

    #[test]
    fn transform_matches_direct_sum() {
        let n = 32;
        let dw = 0.3;
        let x: Vec<Cplx<f64>> = (0..n)
            .map(|j| Cplx::new((j as f64 * 0.7).sin(), (j as f64 * 0.2).cos()))
            .collect();
        let phi = transform_to_time(&x, dw);
        let dt = 2.0 * PI / (n as f64 * dw);
        for m in 0..n {
            let t = (m as f64 - 16.0) * dt;
            let direct: Cplx<f64> = (0..n)
                .map(|j| x[j] * Cplx::from_polar(1.0, -(j as f64 - 16.0) * dw * t))
                .sum::<Cplx<f64>>()
                * (dw / (2.0 * PI));
            assert!((direct - phi[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn undriven_spectra_vanish() {
        let p = SystemParams {
            omega_d: 0.0,
            ..SystemParams::<f64>::reference()
        };
        let s = spectra(&p, &small()).unwrap();
        for v in [&s.r_tilde_s, &s.r_tilde_as, &s.pair_density_s, &s.pair_density_as] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
        assert!(s.cross_density.iter().all(|z| z.norm() == 0.0));
        let r = rates(&s, &PhysicalConstants::default()).unwrap();
        assert_eq!(r.rp_s, 0.0);
        assert!(matches!(
            correlations(&s, &r, &PhysicalConstants::default(), 10.0),
            Err(ObservablesError::NoPhotons)
        ));
    }

    #[test]
    fn coarse_grid_is_rejected_with_the_needed_halfwidth() {
        let p = SystemParams::<f64>::reference();
        let s = spectra(&p, &small()).unwrap();
        let k = PhysicalConstants::default();
        let r = rates(&s, &k).unwrap();
        match correlations(&s, &r, &k, 4.0) {
            Err(ObservablesError::Resolution { required_halfwidth, .. }) => {
                assert!((required_halfwidth - PI * 26.5 / 4.0).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conditional_conversion() {
        assert_eq!(conditional_from_cross(1.0f64), 2.0);
        assert!((conditional_from_cross(2.0f64 + 2f64.sqrt()) - 1.0).abs() < 1e-15);
        assert!((conditional_from_cross(23.0f64) - 0.170).abs() < 5e-4);
        assert!((conditional_from_cross(242.0f64) - 0.0165).abs() < 1e-4);
    }

    #[test]
    fn area_quantile_of_a_box() {
        let tau: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let y: Vec<f64> = tau.iter().map(|&t| if (20.0..=60.0).contains(&t) { 1.0 } else { 0.0 }).collect();
        let q = area_quantile(&tau, &y, 0.5).unwrap();
        assert!((q - 40.0).abs() < 1e-12);
        assert!(area_quantile(&tau, &vec![0.0; 101], 0.5).is_none());
    }

    #[test]
    fn small_run_invariants() {
        let p = SystemParams::<f64>::reference();
        let n = small();
        let s = spectra(&p, &n).unwrap();
        let k = PhysicalConstants::default();
        let r = rates(&s, &k).unwrap();
        let c = correlations(&s, &r, &k, 10.0).unwrap();
        let z = c.zero_index();
        assert!((c.g2_auto_s[z] - 2.0).abs() < 1e-12);
        assert!((c.g2_auto_as[z] - 2.0).abs() < 1e-12);
        assert!(c.g2_cross.iter().all(|&g| g >= 1.0));
        assert!(c.tau_grid[c.peak_index()] > 0.0);
        for m in 1..c.len() {
            assert_eq!(c.rc_as[m], r.r_s * c.g2_cross[c.len() - m]);
        }
    }
}
