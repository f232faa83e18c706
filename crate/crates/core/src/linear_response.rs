//! First-order atomic response: barred rates, the coupled-mode coefficients
//! of the two fields and the Langevin-noise injection vectors.

use serde::Serialize;
use thiserror::Error;

use crate::params::SystemParams;
use crate::scalar::{c, im, re, Cplx, Real};
use crate::steady_state::SteadyState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("pole of the atomic response at omega = {omega} (|T| = {magnitude:e})")]
    Pole { omega: f64, magnitude: f64 },
}

/// Langevin channels that feed the two generated fields, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NoiseIndex {
    N21,
    N23,
    N41,
    N43,
}

impl NoiseIndex {
    pub const ALL: [NoiseIndex; 4] = [Self::N21, Self::N23, Self::N41, Self::N43];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::N21 => "21",
            Self::N23 => "23",
            Self::N41 => "41",
            Self::N43 => "43",
        }
    }
}

pub type NoiseVector<T> = [Cplx<T>; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarredRates<T> {
    pub g21bar: Cplx<T>,
    pub g23bar: Cplx<T>,
    pub g41bar: Cplx<T>,
    pub g43bar: Cplx<T>,
    pub t_denominator: Cplx<T>,
}

pub fn barred_rates<T: Real>(p: &SystemParams<T>, omega: T) -> BarredRates<T> {
    let two = T::lit(2.0);
    let w = two * omega;
    let a = c(p.gamma_21, -w);
    let b = c(T::one(), -two * p.delta_d - w);
    let cc = c(T::one(), two * p.delta_c - w);
    let d = c(two, -two * p.delta_d + two * p.delta_c - w);
    let od2 = p.omega_d * p.omega_d;
    let oc2 = p.omega_c * p.omega_c;
    let diff = oc2 - od2;
    let t = re(diff * diff) + (a * cc + b * d) * oc2 + (a * b + cc * d) * od2 + a * b * cc * d;
    BarredRates {
        g21bar: a,
        g23bar: b,
        g41bar: cc,
        g43bar: d,
        t_denominator: t,
    }
}

/// The un-normalised numerators of the first-order coherences ⟨σ₂₃⟩ and
/// ⟨σ₄₁⟩, before division by T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseNumerators<T> {
    pub eps23: Cplx<T>,
    pub eta23: Cplx<T>,
    pub eps41: Cplx<T>,
    pub eta41: Cplx<T>,
    pub zeta_s: NoiseVector<T>,
    pub zeta_as: NoiseVector<T>,
}

pub fn response_numerators<T: Real>(
    p: &SystemParams<T>,
    s: &SteadyState<T>,
    r: &BarredRates<T>,
) -> ResponseNumerators<T> {
    let two = T::lit(2.0);
    let (a, b, cc, d) = (r.g21bar, r.g23bar, r.g41bar, r.g43bar);
    let od = p.omega_d;
    let oc = p.omega_c;
    let od2 = od * od;
    let oc2 = oc * oc;
    let (s13, s24, s31, s42) = (s.coh13, s.coh24, s.coh31(), s.coh42());
    let i2 = im(two);

    let acd = a * cc * d + d * oc2 + a * od2;
    let abd = a * b * d + a * oc2 + d * od2;
    let cd_m = cc * d - oc2 + od2;
    let ac_p = a * cc + oc2 - od2;
    let bd_p = b * d + oc2 - od2;
    let ab_m = a * b - oc2 + od2;
    let apd = a + d;
    let dc = od * oc;

    let eps23 = i2 * (s.pop22 - s.pop33) * acd + s31 * cd_m * (two * od) + s42 * ac_p * (two * oc);
    let eta23 = -i2 * (dc * (s.pop11 - s.pop44)) * apd - s13 * ac_p * (two * oc) - s24 * cd_m * (two * od);
    let eps41 = i2 * (dc * (s.pop22 - s.pop33)) * apd - s31 * bd_p * (two * oc) - s42 * ab_m * (two * od);
    let eta41 = -i2 * (s.pop11 - s.pop44) * abd + s13 * ab_m * (two * od) + s24 * bd_p * (two * oc);

    let zeta_s = [
        i2 * od * cd_m,
        acd * two,
        apd * (two * dc),
        -i2 * oc * ac_p,
    ];
    let zeta_as = [
        -i2 * oc * bd_p,
        apd * (two * dc),
        abd * two,
        i2 * od * ab_m,
    ];
    ResponseNumerators {
        eps23,
        eta23,
        eps41,
        eta41,
        zeta_s,
        zeta_as,
    }
}

/// Coupled-mode coefficients at one frequency, integrated over the medium
/// length (so `g_r` is g_R·L and the propagation variable is z/L).
///
/// The noise vectors carry the factor √(OD/4) so that a spectral density is
/// `Σ ξ† D ξ` integrated over z/L with no further constants. Their common
/// phase is arbitrary; only bilinear forms are observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalCoefficients<T> {
    pub g_r: Cplx<T>,
    pub gamma_as: Cplx<T>,
    pub kappa_s: Cplx<T>,
    pub kappa_as: Cplx<T>,
    pub xi_s: NoiseVector<T>,
    pub xi_as: NoiseVector<T>,
}

pub fn local_coefficients<T: Real>(
    p: &SystemParams<T>,
    s: &SteadyState<T>,
    omega: T,
) -> Result<LocalCoefficients<T>, ResponseError> {
    let r = barred_rates(p, omega);
    let t = r.t_denominator;
    let mag = t.norm();
    if !(mag > T::tiny()) {
        return Err(ResponseError::Pole {
            omega: omega.to_f64_lossy(),
            magnitude: mag.to_f64_lossy(),
        });
    }
    let n = response_numerators(p, s, &r);
    let k = im(p.od / T::lit(4.0)) / t;
    let amp = (p.od / T::lit(4.0)).sqrt();
    let norm = re(amp) / t;
    let transit = im(omega * p.free_space_transit);
    Ok(LocalCoefficients {
        g_r: k * n.eps23 + transit,
        gamma_as: k * n.eta41 - transit,
        kappa_s: k * n.eta23,
        kappa_as: k * n.eps41,
        xi_s: n.zeta_s.map(|z| z * norm),
        xi_as: n.zeta_as.map(|z| z * norm),
    })
}
