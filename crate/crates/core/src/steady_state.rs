//! Zeroth-order populations and coherences of the driven double-Λ system.

use serde::Serialize;
use thiserror::Error;

use crate::params::SystemParams;
use crate::scalar::{c, Cplx, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyStateError {
    #[error("degenerate drive: both Rabi frequencies vanish, the stationary state is undefined")]
    DegenerateDrive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState<T> {
    pub pop11: T,
    pub pop22: T,
    pub pop33: T,
    pub pop44: T,
    /// ⟨σ₁₃⟩
    pub coh13: Cplx<T>,
    /// ⟨σ₂₄⟩
    pub coh24: Cplx<T>,
    pub m_denominator: T,
}

impl<T: Real> SteadyState<T> {
    /// ⟨σ₃₁⟩
    #[inline]
    pub fn coh31(&self) -> Cplx<T> {
        self.coh13.conj()
    }

    /// ⟨σ₄₂⟩
    #[inline]
    pub fn coh42(&self) -> Cplx<T> {
        self.coh24.conj()
    }

    pub fn population_sum(&self) -> T {
        self.pop11 + self.pop22 + self.pop33 + self.pop44
    }
}

/// Closed-form stationary solution. Rabi frequencies are taken as real.
pub fn steady_state<T: Real>(p: &SystemParams<T>) -> Result<SteadyState<T>, SteadyStateError> {
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let od2 = p.omega_d * p.omega_d;
    let oc2 = p.omega_c * p.omega_c;
    let dd = one + four * p.delta_d * p.delta_d;
    let dc = one + four * p.delta_c * p.delta_c;
    let both = od2 * oc2;

    let m = od2 * dc + oc2 * dd + four * both;
    if !(m > T::zero()) {
        return Err(SteadyStateError::DegenerateDrive);
    }
    let pop11 = (oc2 * dd + both) / m;
    let pop22 = (od2 * dc + both) / m;
    let pop33 = both / m;

    // i(1 + 2iΔ) = -2Δ + i
    let coh13 = c(-two * p.delta_d, one) * (oc2 * p.omega_d / m);
    let coh24 = c(-two * p.delta_c, one) * (od2 * p.omega_c / m);

    Ok(SteadyState {
        pop11,
        pop22,
        pop33,
        pop44: pop33,
        coh13,
        coh24,
        m_denominator: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> SystemParams<f64> {
        SystemParams::reference()
    }

    #[test]
    fn undriven_stokes_leaves_atoms_in_level_one() {
        let mut p = fig2();
        p.omega_d = 0.0;
        let s = steady_state(&p).unwrap();
        assert_eq!(s.pop11, 1.0);
        assert_eq!(s.pop22, 0.0);
        assert_eq!(s.pop33, 0.0);
        assert_eq!(s.pop44, 0.0);
        assert_eq!(s.coh13, Cplx::new(0.0, 0.0));
        assert_eq!(s.coh24, Cplx::new(0.0, 0.0));
    }

    #[test]
    fn no_drive_is_an_error() {
        let mut p = fig2();
        p.omega_d = 0.0;
        p.omega_c = 0.0;
        assert_eq!(steady_state(&p), Err(SteadyStateError::DegenerateDrive));
    }

    #[test]
    fn reference_values() {
        // Ωd = Ωc = 2, Δd = 20, Δc = 0: M = 4 + 4·1601 + 64 = 6472, exact
        // rationals below.
        let s = steady_state(&fig2()).unwrap();
        assert_eq!(s.m_denominator, 6472.0);
        let m = 6472.0;
        assert!((s.pop11 - 6420.0 / m).abs() < 1e-15);
        assert!((s.pop22 - 20.0 / m).abs() < 1e-15);
        assert!((s.pop33 - 16.0 / m).abs() < 1e-15);
        assert!((s.coh13.re - (-40.0 * 8.0 / m)).abs() < 1e-15);
        assert!((s.coh13.im - 8.0 / m).abs() < 1e-15);
        assert!((s.coh24.re).abs() < 1e-15);
        assert!((s.coh24.im - 8.0 / m).abs() < 1e-15);
    }

    #[test]
    fn exchange_symmetry() {
        let p = SystemParams {
            omega_d: 1.3,
            omega_c: 2.7,
            delta_d: -4.0,
            delta_c: 0.6,
            ..fig2()
        };
        let q = SystemParams {
            omega_d: p.omega_c,
            omega_c: p.omega_d,
            delta_d: p.delta_c,
            delta_c: p.delta_d,
            ..p
        };
        let a = steady_state(&p).unwrap();
        let b = steady_state(&q).unwrap();
        assert!((a.pop11 - b.pop22).abs() < 1e-15);
        assert!((a.pop22 - b.pop11).abs() < 1e-15);
        assert!((a.coh13 - b.coh24).norm() < 1e-15);
        assert!((a.coh24 - b.coh13).norm() < 1e-15);
    }

    #[test]
    fn single_precision_agrees() {
        let s64 = steady_state(&fig2()).unwrap();
        let s32 = steady_state(&fig2().cast::<f32>()).unwrap();
        assert!((s64.pop22 - s32.pop22 as f64).abs() < 1e-7);
        assert!((s32.population_sum() - 1.0).abs() < 1e-6);
    }
}
