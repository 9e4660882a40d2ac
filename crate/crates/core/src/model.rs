//! Black–Scholes portfolio of European calls on `d` assets.
//!
//! Outer scenarios are asset prices at the risk horizon `tau` under the
//! real-world drift; inner samples are discounted portfolio payoffs at `T`
//! under the risk-neutral drift, conditional on the scenario.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{cholesky, std_normal_cdf, LowerTriangular, PointKind, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    d: usize,
    s0: Vec<f64>,
    mu: f64,
    mu0: f64,
    sigma: LowerTriangular,
    strikes: Vec<f64>,
    maturity: f64,
    horizon: f64,
    threshold: f64,
    v0: f64,
}

/// Loss threshold, either absolute or as a fraction of the initial
/// portfolio value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    FractionOfV0(f64),
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s0: Vec<f64>,
        mu: f64,
        mu0: f64,
        sigma: LowerTriangular,
        strikes: Vec<f64>,
        maturity: f64,
        horizon: f64,
        threshold: Threshold,
    ) -> Result<Self> {
        let d = s0.len();
        let invalid = |field: &str, constraint: &str| {
            Err(Error::InvalidField { field: field.into(), constraint: constraint.into() })
        };
        if d == 0 {
            return invalid("d", "d >= 1");
        }
        if strikes.len() != d || sigma.dim() != d {
            return invalid("d", "s0, strikes and sigma must all have dimension d");
        }
        if !(horizon > 0.0 && horizon < maturity) {
            return invalid("tau", "0 < tau < T");
        }
        if s0.iter().any(|&s| !(s > 0.0)) {
            return invalid("s0", "all S0_i > 0");
        }
        if strikes.iter().any(|&k| !(k > 0.0)) {
            return invalid("strike", "all K_i > 0");
        }
        if (0..d).any(|i| sigma.get(i, i) < 0.0) {
            return invalid("sigma", "non-negative diagonal");
        }
        let v0 = (0..d)
            .map(|i| bs_call_price(s0[i], strikes[i], mu0, sigma.row_norm(i), maturity))
            .sum::<Result<f64>>()?;
        let threshold = match threshold {
            Threshold::Absolute(c) => c,
            Threshold::FractionOfV0(f) => f * v0,
        };
        if !threshold.is_finite() {
            return invalid("threshold", "finite");
        }
        Ok(ModelSpec { d, s0, mu, mu0, sigma, strikes, maturity, horizon, threshold, v0 })
    }

    /// The experiment portfolio: `S0 = 100`, `K = 95`, `mu = 8%`, `mu0 = 5%`,
    /// `T = 0.1`, `tau = 0.02`, covariance `C11 = 0.3`,
    /// `C_ij = 0.3 * 0.98^|i-j|` on the remaining block and zero coupling
    /// between asset 1 and the rest.
    pub fn paper(d: usize, threshold: Threshold) -> Result<Self> {
        Self::uniform(d, 100.0, 0.08, 0.05, 95.0, 0.1, 0.02, 0.3, 0.98, threshold)
    }

    /// Identical assets with the separable decaying-correlation covariance.
    /// `base_variance = 0` gives the deterministic model.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        d: usize,
        s0: f64,
        mu: f64,
        mu0: f64,
        strike: f64,
        maturity: f64,
        horizon: f64,
        base_variance: f64,
        correlation: f64,
        threshold: Threshold,
    ) -> Result<Self> {
        if base_variance < 0.0 {
            return Err(Error::InvalidField { field: "base_variance".into(), constraint: ">= 0".into() });
        }
        let sigma = if base_variance == 0.0 {
            LowerTriangular::zeros(d)
        } else {
            cholesky(&separable_covariance(d, base_variance, correlation))?
        };
        Self::new(vec![s0; d], mu, mu0, sigma, vec![strike; d], maturity, horizon, threshold)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn s0(&self) -> &[f64] {
        &self.s0
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn mu0(&self) -> f64 {
        self.mu0
    }
    pub fn sigma(&self) -> &LowerTriangular {
        &self.sigma
    }
    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }
    pub fn maturity(&self) -> f64 {
        self.maturity
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
    /// Time from the risk horizon to maturity.
    pub fn residual(&self) -> f64 {
        self.maturity - self.horizon
    }
    /// Total volatility of asset `i` (row norm of the factor matrix).
    pub fn vol(&self, i: usize) -> f64 {
        self.sigma.row_norm(i)
    }
    pub fn discount(&self) -> f64 {
        (-self.mu0 * self.residual()).exp()
    }
    pub fn initial_value(&self) -> f64 {
        self.v0
    }

    pub fn with_threshold(&self, c: f64) -> Self {
        ModelSpec { threshold: c, ..self.clone() }
    }

    /// Asset 1 loads only on factor 1 and no other asset loads on factor 1.
    pub fn is_separable(&self) -> bool {
        (1..self.d).all(|i| self.sigma.get(i, 0) == 0.0)
    }

    pub fn check_separable(&self) -> Result<()> {
        if self.is_separable() {
            Ok(())
        } else {
            Err(Error::InvalidField {
                field: "sigma".into(),
                constraint: "separable: Sigma[i][0] = 0 for i >= 1".into(),
            })
        }
    }

    /// Conditional portfolio loss `V0 - E[V_T | omega]` in closed form.
    pub fn conditional_loss(&self, omega: &[f64]) -> f64 {
        let t = self.residual();
        let value: f64 = (0..self.d)
            .map(|i| bs_call_price(omega[i], self.strikes[i], self.mu0, self.vol(i), t).unwrap_or(0.0))
            .sum();
        self.v0 - value
    }

    /// Value of the first call at the horizon as a function of `omega_1`.
    pub fn first_call_value(&self, omega1: f64) -> f64 {
        bs_call_price(omega1, self.strikes[0], self.mu0, self.vol(0), self.residual()).unwrap_or(0.0)
    }

    pub fn first_call_delta(&self, omega1: f64) -> f64 {
        bs_call_delta(omega1, self.strikes[0], self.mu0, self.vol(0), self.residual()).unwrap_or(0.0)
    }

    /// Sum of the closed-form values of calls `2..d` at the horizon.
    pub fn rest_call_value(&self, omega: &[f64]) -> f64 {
        let t = self.residual();
        (1..self.d)
            .map(|i| bs_call_price(omega[i], self.strikes[i], self.mu0, self.vol(i), t).unwrap_or(0.0))
            .sum()
    }

    /// `omega_1` as a function of its driving normal `z_1` (separable case).
    pub fn omega1_of_z(&self, z1: f64) -> f64 {
        let v = self.sigma.get(0, 0);
        self.s0[0] * ((self.mu - 0.5 * v * v) * self.horizon + v * self.horizon.sqrt() * z1).exp()
    }

    /// Inverse of [`Self::omega1_of_z`]: the standardized log-price.
    pub fn z_of_omega1(&self, omega1: f64) -> f64 {
        let v = self.sigma.get(0, 0);
        ((omega1 / self.s0[0]).ln() - (self.mu - 0.5 * v * v) * self.horizon) / (v * self.horizon.sqrt())
    }
}

/// `C11 = v`, `C_ij = v * rho^|i-j|` for `i, j >= 2`, zeros elsewhere.
pub fn separable_covariance(d: usize, base_variance: f64, correlation: f64) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; d]; d];
    c[0][0] = base_variance;
    for i in 1..d {
        for j in 1..d {
            c[i][j] = base_variance * correlation.powi((i as i32 - j as i32).abs());
        }
    }
    c
}

/// One outer sample: the driving normals and the asset prices at `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub z: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Scenario {
    pub fn from_normals(spec: &ModelSpec, z: Vec<f64>) -> Self {
        let d = spec.d;
        let mut shock = vec![0.0; d];
        spec.sigma.mul_vec_into(&z, &mut shock);
        let sqrt_tau = spec.horizon.sqrt();
        let omega = (0..d)
            .map(|i| {
                let v = spec.vol(i);
                spec.s0[i] * ((spec.mu - 0.5 * v * v) * spec.horizon + sqrt_tau * shock[i]).exp()
            })
            .collect();
        Scenario { z, omega }
    }

    pub fn omega1(&self) -> f64 {
        self.omega[0]
    }

    pub fn omega_rest(&self) -> &[f64] {
        &self.omega[1..]
    }
}

/// Draw an outer scenario under the real-world measure.
pub fn sample_outer(spec: &ModelSpec, stream: &mut RngStream) -> Scenario {
    let mut z = vec![0.0; spec.d];
    stream.fill_normal(&mut z);
    Scenario::from_normals(spec, z)
}

/// Precomputed per-scenario constants for fast inner payoff evaluation.
#[derive(Debug, Clone)]
pub struct PayoffKernel<'a> {
    spec: &'a ModelSpec,
    /// `omega_i * exp((mu0 - vol_i^2/2)(T - tau))`
    forward_base: Vec<f64>,
    sqrt_dt: f64,
    discount: f64,
    shock: Vec<f64>,
}

impl<'a> PayoffKernel<'a> {
    pub fn new(spec: &'a ModelSpec, scen: &Scenario) -> Self {
        let dt = spec.residual();
        let forward_base = (0..spec.d)
            .map(|i| {
                let v = spec.vol(i);
                scen.omega[i] * ((spec.mu0 - 0.5 * v * v) * dt).exp()
            })
            .collect();
        PayoffKernel { spec, forward_base, sqrt_dt: dt.sqrt(), discount: spec.discount(), shock: vec![0.0; spec.d] }
    }

    #[inline]
    fn call(&self, i: usize, shock: f64) -> f64 {
        (self.forward_base[i] * (self.sqrt_dt * shock).exp() - self.spec.strikes[i]).max(0.0)
    }

    /// Discounted payoff of call 1 and of calls `2..d` for inner normals `w`.
    #[inline]
    pub fn split(&mut self, w: &[f64]) -> (f64, f64) {
        let d = self.spec.d;
        let first = self.call(0, self.spec.sigma.get(0, 0) * w[0]);
        let mut rest = 0.0;
        for i in 1..d {
            let s: f64 = self.spec.sigma.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            self.shock[i] = s;
            rest += self.call(i, s);
        }
        (self.discount * first, self.discount * rest)
    }

    /// Discounted payoff of calls `2..d` only.
    #[inline]
    pub fn rest(&mut self, w: &[f64]) -> f64 {
        let mut rest = 0.0;
        for i in 1..self.spec.d {
            let s: f64 = self.spec.sigma.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            rest += self.call(i, s);
        }
        self.discount * rest
    }

    #[inline]
    pub fn total(&mut self, w: &[f64]) -> f64 {
        let (a, b) = self.split(w);
        a + b
    }
}

/// One discounted portfolio payoff for inner normals `w` under the
/// risk-neutral measure.
pub fn inner_payoff(spec: &ModelSpec, scen: &Scenario, w: &[f64]) -> f64 {
    PayoffKernel::new(spec, scen).total(w)
}

#[derive(Debug, Clone)]
pub struct InnerBatch {
    pub payoffs: Vec<f64>,
    pub source: PointKind,
}

impl InnerBatch {
    pub fn m(&self) -> usize {
        self.payoffs.len()
    }

    /// `m` payoffs from pseudo-random inner normals.
    pub fn sample(spec: &ModelSpec, scen: &Scenario, stream: &mut RngStream, m: usize) -> Self {
        let mut kernel = PayoffKernel::new(spec, scen);
        let mut w = vec![0.0; spec.d];
        let payoffs = (0..m)
            .map(|_| {
                stream.fill_normal(&mut w);
                kernel.total(&w)
            })
            .collect();
        InnerBatch { payoffs, source: PointKind::PseudoRandom }
    }
}

/// `V0 - mean(payoffs)`: the unbiased inner estimate of the loss.
pub fn inner_loss_estimate(spec: &ModelSpec, batch: &InnerBatch) -> f64 {
    assert!(!batch.payoffs.is_empty(), "empty inner batch");
    spec.v0 - batch.payoffs.iter().sum::<f64>() / batch.m() as f64
}

fn bs_check(s: f64, k: f64, vol: f64, t: f64) -> Result<()> {
    if !(s > 0.0) || !(k > 0.0) || !(t > 0.0) || !(vol >= 0.0) {
        return Err(Error::Domain(format!("black-scholes needs s, k, t > 0 and vol >= 0 (s={s}, k={k}, vol={vol}, t={t})")));
    }
    Ok(())
}

#[inline]
fn d1_d2(s: f64, k: f64, r: f64, vol: f64, t: f64) -> (f64, f64) {
    let sd = vol * t.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * vol * vol) * t) / sd;
    (d1, d1 - sd)
}

/// Black–Scholes price of a European call. `vol = 0` takes the
/// deterministic limit `(s - k e^{-rt})^+`.
pub fn bs_call_price(s: f64, k: f64, r: f64, vol: f64, t: f64) -> Result<f64> {
    bs_check(s, k, vol, t)?;
    let kd = k * (-r * t).exp();
    if vol == 0.0 {
        return Ok((s - kd).max(0.0));
    }
    let (d1, d2) = d1_d2(s, k, r, vol, t);
    Ok((s * std_normal_cdf(d1) - kd * std_normal_cdf(d2)).max(0.0))
}

/// Call delta `Phi(d1)`.
pub fn bs_call_delta(s: f64, k: f64, r: f64, vol: f64, t: f64) -> Result<f64> {
    bs_check(s, k, vol, t)?;
    if vol == 0.0 {
        return Ok(if s > k * (-r * t).exp() { 1.0 } else { 0.0 });
    }
    Ok(std_normal_cdf(d1_d2(s, k, r, vol, t).0))
}
