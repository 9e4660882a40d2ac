//! Gauss–Laguerre nodes and the two-sided rule for integrals against a
//! density split at a discontinuity.

use crate::error::{Error, Result};
use crate::numkit::std_normal_pdf;

/// Largest supported rule size per side; beyond this the Laguerre
/// polynomial values used for the weights overflow.
pub const MAX_LAGUERRE_NODES: usize = 256;

/// Density of the preintegrated coordinate.
pub trait Density {
    fn pdf(&self, x: f64) -> f64;
    fn median(&self) -> f64;
    /// Characteristic length, used to scale the quadrature nodes.
    fn scale(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub const STANDARD: Gaussian = Gaussian { mean: 0.0, sd: 1.0 };
}

impl Density for Gaussian {
    fn pdf(&self, x: f64) -> f64 {
        std_normal_pdf((x - self.mean) / self.sd) / self.sd
    }
    fn median(&self) -> f64 {
        self.mean
    }
    fn scale(&self) -> f64 {
        self.sd
    }
}

/// Nodes and weights of the `n`-point Gauss–Laguerre rule for
/// `∫_0^∞ f(t) e^{-t} dt`; weights returned as natural logs.
pub fn gauss_laguerre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > MAX_LAGUERRE_NODES {
        return Err(Error::InvalidField { field: "m_lag".into(), constraint: format!("1 <= m_lag <= {MAX_LAGUERRE_NODES}") });
    }
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    let mut z = 0.0f64;
    for i in 0..n {
        // Stroud–Secrest style initial guesses, refined by Newton.
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - nodes[i - 2])
            }
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (p, d) = laguerre_and_derivative(n, z);
            pp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = laguerre_and_derivative(n, z);
        if d.is_finite() {
            pp = d;
        }
        nodes.push(z);
        log_weights.push(-z.ln() - 2.0 * pp.abs().ln());
    }
    Ok((nodes, log_weights))
}

/// `L_n(x)` and `L_n'(x)` by the three-term recurrence.
fn laguerre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf - 1.0 - x) * p2 - (jf - 1.0) * p3) / jf;
    }
    let nf = n as f64;
    (p1, nf * (p1 - p2) / x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub root: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Points per side.
    pub m_lag: usize,
}

impl QuadratureRule {
    pub fn apply<G: FnMut(f64) -> f64>(&self, mut g: G) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }

    /// Nodes below the root come first, nodes above second.
    pub fn lower_side(&self) -> (&[f64], &[f64]) {
        (&self.nodes[..self.m_lag], &self.weights[..self.m_lag])
    }
}

/// Two-sided rule for `∫ g(x) ρ(x) dx` split at `root`: on each half-line
/// the Gauss–Laguerre nodes are mapped to `root ± a t_k` and the weights
/// absorb the density, `a w_k e^{t_k} ρ(root ± a t_k)`.
///
/// The stretch `a = 0.9 · scale / sqrt(m_lag)` keeps the nodes where the
/// density has its mass; with `a = 1` the Gaussian tails are under-resolved
/// and total mass is off by ~1e-6 at 32 nodes.
pub fn laguerre_rule<R: Density + ?Sized>(density: &R, root: f64, m_lag: usize) -> Result<QuadratureRule> {
    let (t, log_w) = gauss_laguerre(m_lag)?;
    let a = 0.9 * density.scale() / (m_lag as f64).sqrt();
    let mut nodes = Vec::with_capacity(2 * m_lag);
    let mut weights = Vec::with_capacity(2 * m_lag);
    for side in [-1.0, 1.0] {
        for (&tk, &lw) in t.iter().zip(&log_w) {
            let x = root + side * a * tk;
            nodes.push(x);
            weights.push(a * (lw + tk).exp() * density.pdf(x));
        }
    }
    Ok(QuadratureRule { root, nodes, weights, m_lag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::std_normal_cdf;

    #[test]
    fn two_point_rule() {
        let (x, lw) = gauss_laguerre(2).unwrap();
        let r2 = 2f64.sqrt();
        assert!((x[0] - (2.0 - r2)).abs() < 1e-14);
        assert!((x[1] - (2.0 + r2)).abs() < 1e-14);
        assert!((lw[0].exp() - (2.0 + r2) / 4.0).abs() < 1e-14);
        assert!((lw[1].exp() - (2.0 - r2) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn integrates_moments_exactly() {
        for n in [1usize, 4, 8, 16, 32] {
            let (x, lw) = gauss_laguerre(n).unwrap();
            let mut fact = 1.0;
            for k in 0..(2 * n).min(20) {
                if k > 0 {
                    fact *= k as f64;
                }
                let q: f64 = x.iter().zip(&lw).map(|(xi, l)| l.exp() * xi.powi(k as i32)).sum();
                assert!((q / fact - 1.0).abs() < 1e-10, "n={n} k={k} q={q}");
            }
        }
    }

    #[test]
    fn nodes_are_sorted_and_positive() {
        for n in [3usize, 32, 100, 256] {
            let (x, lw) = gauss_laguerre(n).unwrap();
            assert!(x[0] > 0.0);
            assert!(x.windows(2).all(|w| w[0] < w[1]), "n={n}");
            assert!(lw.iter().all(|l| l.is_finite()));
        }
        assert!(gauss_laguerre(0).is_err());
    }

    #[test]
    fn total_mass() {
        for root in [-6.0f64, -2.0, 0.0, 0.7, 3.0, 6.0] {
            if root.abs() <= 2.0 {
                // 16 points per side only cover the bulk well near the centre
                let rule = laguerre_rule(&Gaussian::STANDARD, root, 16).unwrap();
                assert!((rule.apply(|_| 1.0) - 1.0).abs() < 1e-8, "root {root}");
            }
            let rule = laguerre_rule(&Gaussian::STANDARD, root, 32).unwrap();
            assert!((rule.apply(|_| 1.0) - 1.0).abs() < 1e-10, "root {root}");
        }
    }

    #[test]
    fn split_indicator_is_resolved() {
        let rule = laguerre_rule(&Gaussian::STANDARD, 0.0, 16).unwrap();
        assert!((rule.apply(|x| if x <= 0.0 { 1.0 } else { 0.0 }) - 0.5).abs() < 1e-10);
        let rule = laguerre_rule(&Gaussian::STANDARD, 0.7, 32).unwrap();
        let got = rule.apply(|x| if x <= 0.7 { 1.0 } else { 0.0 });
        assert!((got - std_normal_cdf(0.7)).abs() < 1e-8);
        assert!(rule.nodes[..32].iter().all(|&x| x < 0.7));
        assert!(rule.nodes[32..].iter().all(|&x| x > 0.7));
    }

    #[test]
    fn non_standard_gaussian() {
        let g = Gaussian { mean: 2.0, sd: 0.3 };
        let rule = laguerre_rule(&g, 2.1, 32).unwrap();
        assert!((rule.apply(|_| 1.0) - 1.0).abs() < 1e-10);
        let m2 = rule.apply(|x| (x - 2.0).powi(2));
        assert!((m2 - 0.09).abs() < 1e-10);
    }

    #[test]
    fn error_shrinks_with_rule_size() {
        // E[cos(X)] = exp(-1/2) for X ~ N(0, 1), rule split off-centre
        let exact = (-0.5f64).exp();
        let mut prev = f64::INFINITY;
        for n in [2usize, 4, 8, 16, 32] {
            let rule = laguerre_rule(&Gaussian::STANDARD, 0.4, n).unwrap();
            let err = (rule.apply(f64::cos) - exact).abs();
            assert!(err < prev || err < 1e-10, "n={n} err={err} prev={prev}");
            prev = err;
        }
        assert!(prev < 1e-10);
    }
}
