//! Propagation of the Stokes / anti-Stokes pair through the medium and the
//! z-integrated Langevin-noise contributions.

use serde::Serialize;
use thiserror::Error;

use crate::linear_response::{LocalCoefficients, NoiseVector};
use crate::params::SystemParams;
use crate::quadrature::GaussLegendre;
use crate::scalar::{im, re, Cplx, Real};
use crate::steady_state::SteadyState;

/// Default relative eigenvalue-gap threshold of [`expm_2x2`].
pub const DEFAULT_DEGENERATE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("singular transfer at omega = {omega}: |D'| = {magnitude:e} (backward gain diverges)")]
    SingularTransfer { omega: f64, magnitude: f64 },
}

/// Row-major complex 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mat2<T> {
    pub m: [[Cplx<T>; 2]; 2],
}

impl<T: Real> Mat2<T> {
    pub fn new(a: Cplx<T>, b: Cplx<T>, c: Cplx<T>, d: Cplx<T>) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn identity() -> Self {
        let (o, z) = (Cplx::new(T::one(), T::zero()), Cplx::new(T::zero(), T::zero()));
        Self::new(o, z, z, o)
    }

    pub fn zero() -> Self {
        let z = Cplx::new(T::zero(), T::zero());
        Self::new(z, z, z, z)
    }

    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn scale(&self, s: Cplx<T>) -> Self {
        let m = &self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.m
            .iter()
            .flatten()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut d = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - o.m[i][j]).norm());
            }
        }
        d
    }
}

/// Pre-factored exp(G·t) for one generator, evaluated at many `t`.
///
/// exp(Gt) = e^{mt} [cosh(δt) I + sinh(δt)/δ (G − mI)] with m = tr G / 2 and
/// δ² = ((G₀₀ − G₁₁)/2)² + G₀₁G₁₀.
#[derive(Debug, Clone, Copy)]
pub struct Exponential<T> {
    mean: Cplx<T>,
    delta: Cplx<T>,
    shifted: Mat2<T>,
    degenerate: bool,
}

impl<T: Real> Exponential<T> {
    pub fn new(g: &Mat2<T>, tol: T) -> Self {
        let half = T::lit(0.5);
        let mean = (g.m[0][0] + g.m[1][1]) * half;
        let h = (g.m[0][0] - g.m[1][1]) * half;
        let delta = (h * h + g.m[0][1] * g.m[1][0]).sqrt();
        let mi = Mat2::identity().scale(-mean);
        // |λ+ − λ−| = 2|δ|
        let degenerate = T::lit(2.0) * delta.norm() <= tol * g.norm();
        Self {
            mean,
            delta,
            shifted: g.add(&mi),
            degenerate,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Eigenvalues (λ+, λ−).
    pub fn eigenvalues(&self) -> (Cplx<T>, Cplx<T>) {
        (self.mean + self.delta, self.mean - self.delta)
    }

    /// det exp(G t) = exp(t·tr G), exact where the entrywise product cancels.
    pub fn det_at(&self, t: T) -> Cplx<T> {
        (self.mean * (T::lit(2.0) * t)).exp()
    }

    pub fn at(&self, t: T) -> Mat2<T> {
        let x = self.delta * t;
        let (ch, sh_over) = if self.degenerate {
            let x2 = x * x;
            let c = re(T::one()) + x2 * T::lit(0.5) + x2 * x2 / T::lit(24.0);
            let s = (re(T::one()) + x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)) * t;
            (c, s)
        } else {
            (x.cosh(), x.sinh() / self.delta)
        };
        let em = (self.mean * t).exp();
        Mat2::identity()
            .scale(ch)
            .add(&self.shifted.scale(sh_over))
            .scale(em)
    }
}

/// exp(generator · t) by the closed eigenvalue form.
pub fn expm_2x2<T: Real>(generator: &Mat2<T>, t: T, tol: T) -> Mat2<T> {
    Exponential::new(generator, tol).at(t)
}

/// The coupled-mode generator [[g_R L, κ_s L], [κ_as L, Γ_as L + iΔkL]].
pub fn generator<T: Real>(p: &SystemParams<T>, k: &LocalCoefficients<T>) -> Mat2<T> {
    Mat2::new(k.g_r, k.kappa_s, k.kappa_as, k.gamma_as + im(p.delta_k_l))
}

/// Forward (primed) and input-output (unprimed) transfer coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferMatrices<T> {
    pub a_p: Cplx<T>,
    pub b_p: Cplx<T>,
    pub c_p: Cplx<T>,
    pub d_p: Cplx<T>,
    pub a: Cplx<T>,
    pub b: Cplx<T>,
    pub c: Cplx<T>,
    pub d: Cplx<T>,
}

impl<T: Real> TransferMatrices<T> {
    pub fn from_primed(m: &Mat2<T>, omega: T) -> Result<Self, PropagationError> {
        let [[a_p, b_p], [c_p, d_p]] = m.m;
        Self::with_determinant(m, a_p * d_p - b_p * c_p, omega)
    }

    /// Transfer over the whole medium. A = det/D′ avoids the cancellation in
    /// A′ − B′C′/D′ when the medium has gain.
    pub fn from_exponential(e: &Exponential<T>, omega: T) -> Result<Self, PropagationError> {
        Self::with_determinant(&e.at(T::one()), e.det_at(T::one()), omega)
    }

    fn with_determinant(m: &Mat2<T>, det: Cplx<T>, omega: T) -> Result<Self, PropagationError> {
        let [[a_p, b_p], [c_p, d_p]] = m.m;
        let mag = d_p.norm();
        if !(mag >= T::tiny()) {
            return Err(PropagationError::SingularTransfer {
                omega: omega.to_f64_lossy(),
                magnitude: mag.to_f64_lossy(),
            });
        }
        Ok(Self {
            a_p,
            b_p,
            c_p,
            d_p,
            a: det / d_p,
            b: b_p / d_p,
            c: -c_p / d_p,
            d: d_p.inv(),
        })
    }

    /// Recovers (A′, B′, C′, D′) from the rearranged coefficients.
    pub fn reassemble(&self) -> Mat2<T> {
        let d_p = self.d.inv();
        let b_p = self.b * d_p;
        let c_p = -self.c * d_p;
        let a_p = self.a + b_p * c_p / d_p;
        Mat2::new(a_p, b_p, c_p, d_p)
    }
}

pub fn transfer<T: Real>(
    p: &SystemParams<T>,
    k: &LocalCoefficients<T>,
    omega: T,
    tol: T,
) -> Result<TransferMatrices<T>, PropagationError> {
    TransferMatrices::from_exponential(&Exponential::new(&generator(p, k), tol), omega)
}

pub type Mat4<T> = [[Cplx<T>; 4]; 4];

/// Einstein-relation diffusion coefficients in Γ units.
///
/// `d_dagger_left[r][c]` pairs the daggered operator of row r ∈ {12, 32, 14, 34}
/// with column c ∈ {21, 23, 41, 43}; `d_dagger_right[r][c]` pairs row
/// r ∈ {21, 23, 41, 43} with daggered column c ∈ {12, 32, 14, 34}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionMatrices<T> {
    pub d_dagger_left: Mat4<T>,
    pub d_dagger_right: Mat4<T>,
}

pub fn diffusion<T: Real>(p: &SystemParams<T>, s: &SteadyState<T>) -> DiffusionMatrices<T> {
    let z = re(T::zero());
    let half = T::lit(0.5);
    let g = p.gamma_21;
    let upper = (s.pop33 + s.pop44) * half;
    let (s13, s31, s24, s42) = (s.coh13, s.coh31(), s.coh24, s.coh42());
    let left = [
        [re(g * s.pop11 + upper), s13 * (g * half), z, z],
        [s31 * (g * half), z, z, z],
        [z, z, re(s.pop11 + upper), s13],
        [z, z, s31, re(s.pop33)],
    ];
    let right = [
        [re(g * s.pop22 + upper), z, s24 * (g * half), z],
        [z, re(s.pop22 + upper), z, s24],
        [s42 * (g * half), z, z, z],
        [z, s42, z, re(s.pop44)],
    ];
    DiffusionMatrices {
        d_dagger_left: left,
        d_dagger_right: right,
    }
}

/// u† M v
#[inline]
fn sesqui<T: Real>(u: &NoiseVector<T>, m: &Mat4<T>, v: &NoiseVector<T>) -> Cplx<T> {
    let mut acc = re(T::zero());
    for i in 0..4 {
        let mut row = re(T::zero());
        for j in 0..4 {
            row += m[i][j] * v[j];
        }
        acc += u[i].conj() * row;
    }
    acc
}

/// z-integrated Langevin contributions at one frequency (spectral densities
/// in Γ units; integrate with dω/2π for a rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseQuadratures<T> {
    pub stokes_noise: T,
    pub anti_stokes_noise: T,
    pub cross_noise: Cplx<T>,
}

impl<T: Real> NoiseQuadratures<T> {
    pub fn zero() -> Self {
        Self {
            stokes_noise: T::zero(),
            anti_stokes_noise: T::zero(),
            cross_noise: re(T::zero()),
        }
    }
}

/// Noise quadratures from the exponential of the local generator, reusing
/// `exp` (built from the same generator as `tr`).
pub fn noise_quadratures_with<T: Real>(
    k: &LocalCoefficients<T>,
    exp: &Exponential<T>,
    tr: &TransferMatrices<T>,
    dm: &DiffusionMatrices<T>,
    quad: &GaussLegendre<T>,
) -> NoiseQuadratures<T> {
    let mut sn = T::zero();
    let mut an = T::zero();
    let mut cr = re(T::zero());
    let inv_dp = tr.d_p.inv();
    for (&zi, &wi) in quad.nodes.iter().zip(&quad.weights) {
        let e = exp.at(T::one() - zi);
        // [1, −B]·e^{G(1−z)} equals [A, 0]·e^{−Gz}; with gain the first form
        // subtracts two exponentially large terms, so take the smaller one
        let fwd = [e.m[0][0] - tr.b * e.m[1][0], e.m[0][1] - tr.b * e.m[1][1]];
        let size_fwd = e.m[0][0].norm() + e.m[0][1].norm() + tr.b.norm() * (e.m[1][0].norm() + e.m[1][1].norm());
        let back = exp.at(-zi);
        let size_back = tr.a.norm() * (back.m[0][0].norm() + back.m[0][1].norm());
        let row = if size_back < size_fwd {
            [tr.a * back.m[0][0], tr.a * back.m[0][1]]
        } else {
            fwd
        };
        let mut pv = [re(T::zero()); 4];
        let mut qv = [re(T::zero()); 4];
        for j in 0..4 {
            pv[j] = row[0] * k.xi_s[j] + row[1] * k.xi_as[j];
            let qp = e.m[1][0] * k.xi_s[j] + e.m[1][1] * k.xi_as[j];
            qv[j] = -qp * inv_dp;
        }
        let qc = qv.map(|x| x.conj());
        sn += wi * sesqui(&pv, &dm.d_dagger_left, &pv).re;
        // Qᵀ D Q* = (Q*)† D (Q*)
        an += wi * sesqui(&qc, &dm.d_dagger_right, &qc).re;
        cr += sesqui(&pv, &dm.d_dagger_left, &qv) * wi;
    }
    NoiseQuadratures {
        stokes_noise: sn,
        anti_stokes_noise: an,
        cross_noise: cr,
    }
}

pub fn noise_quadratures<T: Real>(
    p: &SystemParams<T>,
    k: &LocalCoefficients<T>,
    tr: &TransferMatrices<T>,
    dm: &DiffusionMatrices<T>,
    quad: &GaussLegendre<T>,
    tol: T,
) -> NoiseQuadratures<T> {
    let exp = Exponential::new(&generator(p, k), tol);
    noise_quadratures_with(k, &exp, tr, dm, quad)
}

/// Everything the spectra need at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint<T> {
    pub transfer: TransferMatrices<T>,
    pub noise: NoiseQuadratures<T>,
}

/// Transfer and noise at one frequency from a single exponential factorisation.
pub fn spectral_point<T: Real>(
    p: &SystemParams<T>,
    k: &LocalCoefficients<T>,
    dm: &DiffusionMatrices<T>,
    quad: &GaussLegendre<T>,
    omega: T,
    tol: T,
) -> Result<SpectralPoint<T>, PropagationError> {
    let exp = Exponential::new(&generator(p, k), tol);
    let tr = TransferMatrices::from_exponential(&exp, omega)?;
    let noise = noise_quadratures_with(k, &exp, &tr, dm, quad);
    Ok(SpectralPoint { transfer: tr, noise })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_response::local_coefficients;
    use crate::steady_state::steady_state;

    type C = Cplx<f64>;

    fn cx(a: f64, b: f64) -> C {
        C::new(a, b)
    }

    #[test]
    fn zero_generator_gives_identity() {
        for t in [0.0, 0.3, 1.0] {
            let e = expm_2x2(&Mat2::<f64>::zero(), t, 1e-8);
            assert_eq!(e, Mat2::identity());
        }
    }

    #[test]
    fn decoupled_generator_is_diagonal() {
        let g = cx(0.3, -1.2);
        let h = cx(-2.0, 0.7);
        let e = expm_2x2(&Mat2::new(g, cx(0.0, 0.0), cx(0.0, 0.0), h), 1.0, 1e-8);
        assert!((e.m[0][0] - g.exp()).norm() < 1e-14);
        assert!((e.m[1][1] - h.exp()).norm() < 1e-14);
        assert_eq!(e.m[0][1], cx(0.0, 0.0));
        assert_eq!(e.m[1][0], cx(0.0, 0.0));
    }

    #[test]
    fn degenerate_branch_matches_jordan_block() {
        // nilpotent part: exp(λI + N) = e^λ (I + N)
        let lam = cx(-0.4, 0.9);
        let n = cx(0.5, -0.25);
        let g = Mat2::new(lam, n, cx(0.0, 0.0), lam);
        let ex = Exponential::new(&g, 1e-8);
        assert!(ex.is_degenerate());
        let e = ex.at(0.7);
        let el = (lam * 0.7).exp();
        assert!((e.m[0][0] - el).norm() < 1e-15);
        assert!((e.m[0][1] - el * n * 0.7).norm() < 1e-15);
        assert!((e.m[1][1] - el).norm() < 1e-15);
    }

    #[test]
    fn nearly_degenerate_is_continuous_across_the_threshold() {
        let g = |eps: f64| Mat2::new(cx(1.0 + eps, 0.0), cx(0.3, 0.1), cx(0.0, 0.0), cx(1.0 - eps, 0.0));
        let below = expm_2x2(&g(1e-9), 1.0, 1e-8);
        let above = expm_2x2(&g(1e-7), 1.0, 1e-8);
        assert!(below.max_abs_diff(&above) < 1e-6);
    }

    #[test]
    fn transfer_without_coupling() {
        let p = SystemParams::<f64>::reference();
        let mut k = local_coefficients(&p, &steady_state(&p).unwrap(), 0.3).unwrap();
        k.kappa_s = cx(0.0, 0.0);
        k.kappa_as = cx(0.0, 0.0);
        let t = transfer(&p, &k, 0.3, 1e-8).unwrap();
        assert!((t.a - t.a_p).norm() < 1e-14 * t.a_p.norm());
        assert!((t.d - t.d_p.inv()).norm() < 1e-15);
        assert_eq!(t.b, cx(0.0, 0.0));
        assert_eq!(t.c, cx(0.0, 0.0));
    }

    #[test]
    fn pair_amplitudes_follow_the_cross_couplings() {
        let p = SystemParams::<f64>::reference();
        let s = steady_state(&p).unwrap();
        for w in [-2.0, 0.0, 0.01, 1.3] {
            let k = local_coefficients(&p, &s, w).unwrap();
            let t = transfer(&p, &k, w, 1e-8).unwrap();
            // shared off-diagonal factor of exp(G): B/C = −κ_s/κ_as
            let want = -k.kappa_s / k.kappa_as;
            assert!((t.b / t.c - want).norm() < 1e-12 * want.norm());
            // close to, but not exactly, equal magnitudes
            let r = t.b.norm_sqr() / t.c.norm_sqr();
            assert!((r - 1.0).abs() < 1e-2, "|B|²/|C|² = {r} at {w}");
        }
    }

    #[test]
    fn singular_transfer_is_reported() {
        let m = Mat2::new(cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0));
        assert!(matches!(
            TransferMatrices::from_primed(&m, 0.5),
            Err(PropagationError::SingularTransfer { .. })
        ));
    }

    #[test]
    fn diffusion_without_drive_or_dephasing() {
        let p = SystemParams {
            omega_d: 0.0,
            gamma_21: 0.0,
            ..SystemParams::<f64>::reference()
        };
        let s = steady_state(&p).unwrap();
        let d = diffusion(&p, &s);
        for i in 0..4 {
            for j in 0..4 {
                let l = d.d_dagger_left[i][j];
                if (i, j) == (2, 2) {
                    assert_eq!(l, cx(1.0, 0.0));
                } else {
                    assert_eq!(l, cx(0.0, 0.0));
                }
                assert_eq!(d.d_dagger_right[i][j], cx(0.0, 0.0));
            }
        }
    }

    #[test]
    fn diffusion_entries() {
        let p = SystemParams::<f64>::reference();
        let s = steady_state(&p).unwrap();
        let d = diffusion(&p, &s);
        let l = &d.d_dagger_left;
        let r = &d.d_dagger_right;
        assert_eq!(l[0][0].im, 0.0);
        assert_eq!(r[0][0].im, 0.0);
        assert!((l[0][0].re - (0.001 * s.pop11 + s.pop33)).abs() < 1e-16);
        assert!((r[0][0].re - (0.001 * s.pop22 + s.pop33)).abs() < 1e-16);
        assert_eq!(l[3][3], r[3][3]);
        for m in [l, r] {
            for i in 0..4 {
                assert!(m[i][i].re >= 0.0 && m[i][i].im == 0.0);
            }
        }
    }

    #[test]
    fn no_drive_means_no_noise() {
        let p = SystemParams {
            omega_d: 0.0,
            ..SystemParams::<f64>::reference()
        };
        let s = steady_state(&p).unwrap();
        let dm = diffusion(&p, &s);
        let q = GaussLegendre::new(16);
        for w in [-20.0, -1.0, 0.0, 0.05, 3.0] {
            let k = local_coefficients(&p, &s, w).unwrap();
            let sp = spectral_point(&p, &k, &dm, &q, w, 1e-8).unwrap();
            assert!(sp.noise.stokes_noise.abs() < 1e-30);
            assert!(sp.noise.anti_stokes_noise.abs() < 1e-30);
            assert!(sp.noise.cross_noise.norm() < 1e-30);
            assert_eq!(sp.transfer.b, cx(0.0, 0.0));
            assert_eq!(sp.transfer.c, cx(0.0, 0.0));
        }
    }

    #[test]
    fn f32_instantiation_tracks_f64() {
        let p = SystemParams::<f64>::reference();
        let s = steady_state(&p).unwrap();
        let k = local_coefficients(&p, &s, 0.1).unwrap();
        let t = transfer(&p, &k, 0.1, 1e-8).unwrap();
        let p32 = p.cast::<f32>();
        let s32 = steady_state(&p32).unwrap();
        let k32 = local_coefficients(&p32, &s32, 0.1f32).unwrap();
        let t32 = transfer(&p32, &k32, 0.1, 1e-5).unwrap();
        let rel = (t.b.norm() - t32.b.norm() as f64).abs() / t.b.norm();
        assert!(rel < 1e-3, "{rel}");
    }
}
