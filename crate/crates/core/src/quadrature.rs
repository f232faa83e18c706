//! Gauss–Legendre rule on the unit interval.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre<T> {
    /// Nodes in (0, 1), ascending.
    pub nodes: Vec<T>,
    /// Weights summing to 1.
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Builds an `n`-point rule. Nodes are found in `f64` by Newton iteration
    /// on Pₙ and then converted, so the `f32` rule is correctly rounded.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // x runs from near +1 downward; map to u = (1 - x)/2 ascending
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }
}

/// Pₙ(x) and Pₙ'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_nodes_are_symmetric() {
        for n in [1, 2, 5, 64, 256] {
            let q = GaussLegendre::<f64>::new(n);
            let s: f64 = q.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n}: {s}");
            for i in 0..n {
                assert!((q.nodes[i] + q.nodes[n - 1 - i] - 1.0).abs() < 1e-14);
                assert!(q.nodes[i] > 0.0 && q.nodes[i] < 1.0);
            }
            assert!(q.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let q = GaussLegendre::<f64>::new(6);
        for k in 0..12 {
            let got = q.integrate(|x| x.powi(k));
            assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn three_point_rule() {
        let q = GaussLegendre::<f64>::new(3);
        let r = (0.6f64).sqrt() / 2.0;
        assert!((q.nodes[0] - (0.5 - r)).abs() < 1e-15);
        assert!((q.nodes[1] - 0.5).abs() < 1e-15);
        assert!((q.weights[0] - 5.0 / 18.0).abs() < 1e-15);
        assert!((q.weights[1] - 8.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_integrand_converges() {
        let q = GaussLegendre::<f32>::new(16);
        let got = q.integrate(|x| x.exp());
        assert!((got - (std::f32::consts::E - 1.0)).abs() < 1e-6);
    }
}
