//! Preintegration of the loss indicator over the first asset.
//!
//! The portfolio loss splits as `phi(omega) = -phi_1(omega_1) + phi_rest`,
//! with `phi_1` the horizon value of call 1 (closed form) and `phi_rest` the
//! remaining part estimated from inner samples. For fixed `phi_rest` the
//! event `{phi > c}` is `{omega_1 < psi}` where `phi_1(psi) = phi_rest - c`,
//! so its conditional probability is a normal CDF at the standardized root.

mod newton;
mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numkit::std_normal_cdf;

pub use newton::{newton_root, Bracket, RootResult};
pub use quadrature::{gauss_laguerre, laguerre_rule, Density, Gaussian, QuadratureRule, MAX_LAGUERRE_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingMode {
    Analytic,
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub newton_tol: f64,
    pub max_iterations: u32,
    pub m_lag: usize,
    pub mode: SmoothingMode,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams { newton_tol: 1e-10, max_iterations: 100, m_lag: 32, mode: SmoothingMode::Analytic }
    }
}

impl SmoothingParams {
    pub fn numerical() -> Self {
        SmoothingParams { mode: SmoothingMode::Numerical, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidField { field: "newton_tol".into(), constraint: "newton_tol > 0".into() });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidField { field: "max_iterations".into(), constraint: "max_iterations >= 1".into() });
        }
        if self.m_lag == 0 || self.m_lag > MAX_LAGUERRE_NODES {
            return Err(Error::InvalidField {
                field: "m_lag".into(),
                constraint: format!("1 <= m_lag <= {MAX_LAGUERRE_NODES}"),
            });
        }
        Ok(())
    }
}

/// A smoothed indicator value with the work spent computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothed {
    pub value: f64,
    /// Root in the coordinate used by the solver, if one exists.
    pub root: Option<f64>,
    pub iterations: u32,
    /// Quadrature points evaluated (0 for the closed form).
    pub quadrature_points: u32,
    /// Amount by which the raw quadrature sum left [0, 1].
    pub clamped_by: f64,
}

impl Smoothed {
    fn exact(value: f64) -> Self {
        Smoothed { value, root: None, iterations: 0, quadrature_points: 0, clamped_by: 0.0 }
    }

    /// Cost units charged for this evaluation beyond the inner payoffs.
    pub fn charge(&self) -> u64 {
        self.iterations as u64 + self.quadrature_points as u64
    }
}

/// `P(phi(omega_1, omega_rest) > c | omega_rest)` in closed form, where
/// `loss_rest = phi_rest - c`. `guess` is the starting point for the root
/// in price units (typically the scenario's `omega_1` or a coarser root).
pub fn analytic_smoothed_indicator(spec: &ModelSpec, loss_rest: f64, guess: f64, params: &SmoothingParams) -> Result<Smoothed> {
    if !loss_rest.is_finite() {
        return Err(Error::NonFiniteSample(loss_rest));
    }
    if loss_rest <= 0.0 {
        return Ok(Smoothed::exact(0.0));
    }
    let sigma11 = spec.sigma().get(0, 0);
    if sigma11 == 0.0 {
        let omega1 = spec.omega1_of_z(0.0);
        let hit = spec.first_call_value(omega1) < loss_rest;
        return Ok(Smoothed::exact(if hit { 1.0 } else { 0.0 }));
    }
    let width = sigma11 * spec.horizon().sqrt() * spec.s0()[0];
    let x0 = if guess > 0.0 && guess.is_finite() { guess } else { spec.s0()[0] };
    let res = newton_root(
        |s| spec.first_call_value(s) - loss_rest,
        |s| spec.first_call_delta(s),
        x0,
        params.newton_tol,
        params.max_iterations,
        Bracket::positive(width),
    )?;
    // Call value increases with omega_1, so the event is the lower tail.
    let value = std_normal_cdf(spec.z_of_omega1(res.root));
    Ok(Smoothed { value, root: Some(res.root), iterations: res.iterations, quadrature_points: 0, clamped_by: 0.0 })
}

/// Generic preintegration by root finding and the two-sided rule.
///
/// The integrand is the indicator `1{level(x) > 0}` against `density`;
/// `level` must be monotone with derivative `dlevel`. When no root exists
/// the indicator is constant and its value at the density median is
/// returned.
pub fn numerical_smoothed_indicator<F, D, R>(level: F, dlevel: D, density: &R, x0: f64, params: &SmoothingParams) -> Result<Smoothed>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
    R: Density + ?Sized,
{
    let indicator = |x: f64| if level(x) > 0.0 { 1.0 } else { 0.0 };
    let root = match newton_root(
        &level,
        &dlevel,
        x0,
        params.newton_tol,
        params.max_iterations,
        Bracket::unbounded(density.scale()),
    ) {
        Ok(r) => r,
        Err(Error::NoRoot) => {
            return Ok(Smoothed {
                value: indicator(density.median()),
                root: None,
                iterations: params.max_iterations,
                quadrature_points: 0,
                clamped_by: 0.0,
            })
        }
        Err(e) => return Err(e),
    };
    let rule = laguerre_rule(density, root.root, params.m_lag)?;
    let raw = rule.apply(indicator);
    let value = raw.clamp(0.0, 1.0);
    Ok(Smoothed {
        value,
        root: Some(root.root),
        iterations: root.iterations,
        quadrature_points: params.m_lag as u32,
        clamped_by: (raw - value).abs(),
    })
}

/// The numerical path specialised to the portfolio: preintegrates over the
/// standard normal driving `omega_1`. `guess` is a starting point in that
/// coordinate.
pub fn numerical_portfolio_indicator(spec: &ModelSpec, loss_rest: f64, guess: f64, params: &SmoothingParams) -> Result<Smoothed> {
    if !loss_rest.is_finite() {
        return Err(Error::NonFiniteSample(loss_rest));
    }
    let sigma11 = spec.sigma().get(0, 0);
    if sigma11 == 0.0 {
        return analytic_smoothed_indicator(spec, loss_rest, spec.s0()[0], params);
    }
    let slope = sigma11 * spec.horizon().sqrt();
    numerical_smoothed_indicator(
        |z| loss_rest - spec.first_call_value(spec.omega1_of_z(z)),
        |z| {
            let w = spec.omega1_of_z(z);
            -spec.first_call_delta(w) * w * slope
        },
        &Gaussian::STANDARD,
        if guess.is_finite() { guess } else { 0.0 },
        params,
    )
}

/// Dispatch on the configured mode. `guess_omega1` is a starting point for
/// the root in price units.
pub fn smoothed_indicator(spec: &ModelSpec, loss_rest: f64, guess_omega1: f64, params: &SmoothingParams) -> Result<Smoothed> {
    match params.mode {
        SmoothingMode::Analytic => analytic_smoothed_indicator(spec, loss_rest, guess_omega1, params),
        SmoothingMode::Numerical => {
            let z = if guess_omega1 > 0.0 && spec.sigma().get(0, 0) > 0.0 { spec.z_of_omega1(guess_omega1) } else { 0.0 };
            let mut s = numerical_portfolio_indicator(spec, loss_rest, z, params)?;
            // report the root in price units for warm starts
            s.root = s.root.map(|z| spec.omega1_of_z(z));
            Ok(s)
        }
    }
}
