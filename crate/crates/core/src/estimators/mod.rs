//! Coupled level-difference samplers for every method, the plain nested
//! estimator, and per-level moment accumulation.
//!
//! All methods share one sampling layout per `(seed, level, outer index)`:
//! a scenario drawn from the outer stream and `m_l` inner rows driving
//! assets `2..d`. Call 1 is valued in closed form at the horizon, so the
//! inner batch only estimates the rest of the portfolio. The coarse term of
//! a level uses the first half of the fine batch; the antithetic coarse term
//! averages both halves.

mod accumulator;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution};
use crate::model::{ModelSpec, PayoffKernel, Scenario};
use crate::numkit::{PointKind, Purpose, RngStream, SobolNet, StreamId};
use crate::smoothing::{smoothed_indicator, Smoothed, SmoothingParams};

pub use accumulator::{telescope, CompensatedSum, LevelAccumulator, Telescoped, KURTOSIS_MIN_SAMPLES};

/// Default inner sample size on level 0.
pub const DEFAULT_M0: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "nested_mc")]
    NestedMC,
    #[serde(rename = "std_mlmc")]
    StdMLMC,
    #[serde(rename = "smoothed_mlmc")]
    SmoothedMLMC,
    #[serde(rename = "smoothed_amlmc")]
    SmoothedAMLMC,
    #[serde(rename = "smoothed_mlqmc")]
    SmoothedMLQMC,
    #[serde(rename = "smoothed_amlqmc")]
    SmoothedAMLQMC,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::NestedMC,
        MethodKind::StdMLMC,
        MethodKind::SmoothedMLMC,
        MethodKind::SmoothedAMLMC,
        MethodKind::SmoothedMLQMC,
        MethodKind::SmoothedAMLQMC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::NestedMC => "nested_mc",
            MethodKind::StdMLMC => "std_mlmc",
            MethodKind::SmoothedMLMC => "smoothed_mlmc",
            MethodKind::SmoothedAMLMC => "smoothed_amlmc",
            MethodKind::SmoothedMLQMC => "smoothed_mlqmc",
            MethodKind::SmoothedAMLQMC => "smoothed_amlqmc",
        }
    }

    pub fn is_multilevel(self) -> bool {
        self != MethodKind::NestedMC
    }

    pub fn is_smoothed(self) -> bool {
        !matches!(self, MethodKind::NestedMC | MethodKind::StdMLMC)
    }

    pub fn is_antithetic(self) -> bool {
        matches!(self, MethodKind::SmoothedAMLMC | MethodKind::SmoothedAMLQMC)
    }

    pub fn is_qmc(self) -> bool {
        matches!(self, MethodKind::SmoothedMLQMC | MethodKind::SmoothedAMLQMC)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    /// Accepts the snake_case names and the CamelCase variant names.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name().replace('_', "") == key)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// One coupled sample on a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSample {
    /// Level difference (level 0: the fine term itself).
    pub y: f64,
    pub fine: f64,
    /// Coarse term as it enters the difference; `None` on level 0.
    pub coarse: Option<f64>,
    /// Inner payoff rows plus root-finding and quadrature charges.
    pub cost: u64,
}

/// Inner sample size on `level`: `m0 * 2^level`.
pub fn inner_size(m0: usize, level: usize) -> usize {
    m0 << level
}

/// Per-worker buffers.
#[derive(Debug, Default)]
pub struct Scratch {
    w: Vec<f64>,
    net: Vec<f64>,
}

/// Draws coupled level samples for one method.
#[derive(Debug, Clone)]
pub struct LevelSampler {
    spec: ModelSpec,
    method: MethodKind,
    params: SmoothingParams,
    seed: u64,
    m0: usize,
    inner_kind: PointKind,
    net: Option<SobolNet>,
}

impl LevelSampler {
    pub fn new(spec: &ModelSpec, method: MethodKind, params: SmoothingParams, seed: u64, m0: usize) -> Result<Self> {
        if m0 == 0 {
            return Err(Error::InvalidField { field: "m0".into(), constraint: "m0 >= 1".into() });
        }
        spec.check_separable()?;
        params.validate()?;
        let (inner_kind, net) = if method.is_qmc() {
            if !m0.is_power_of_two() {
                return Err(Error::InvalidField { field: "m0".into(), constraint: "power of 2 for scrambled nets".into() });
            }
            let net = if spec.dim() > 1 { Some(SobolNet::new(spec.dim() - 1)?) } else { None };
            (PointKind::ScrambledNet, net)
        } else {
            (PointKind::PseudoRandom, None)
        };
        Ok(LevelSampler { spec: spec.clone(), method, params, seed, m0, inner_kind, net })
    }

    /// Replace scrambled nets by pseudo-random uniforms pushed through the
    /// same inverse-CDF map. Used to isolate the effect of the point set.
    pub fn with_pseudo_random_inner(mut self) -> Self {
        self.inner_kind = PointKind::PseudoRandom;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn method(&self) -> MethodKind {
        self.method
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn inner_size(&self, level: usize) -> usize {
        inner_size(self.m0, level)
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::default()
    }

    fn scenario(&self, level: usize, index: u64) -> Scenario {
        let mut st = RngStream::new(self.seed, StreamId::new(Purpose::Outer, level, index));
        crate::model::sample_outer(&self.spec, &mut st)
    }

    /// Discounted rest-of-portfolio payoff sums over the first and second
    /// half of the inner batch (level 0: everything in the first).
    fn rest_sums(&self, scen: &Scenario, level: usize, index: u64, scratch: &mut Scratch) -> (f64, f64) {
        let d = self.spec.dim();
        let m = self.inner_size(level);
        if d == 1 {
            return (0.0, 0.0);
        }
        let half = if level == 0 { m } else { m / 2 };
        let mut kernel = PayoffKernel::new(&self.spec, scen);
        scratch.w.clear();
        scratch.w.resize(d, 0.0);
        let (mut r1, mut r2) = (CompensatedSum::default(), CompensatedSum::default());
        let s = d - 1;
        match (self.inner_kind, &self.net) {
            (PointKind::ScrambledNet, Some(net)) => {
                scratch.net.resize(m * s, 0.0);
                net.fill_scrambled(m, self.scramble_seed(level, index), &mut scratch.net);
                for j in 0..m {
                    for (k, &u) in scratch.net[j * s..(j + 1) * s].iter().enumerate() {
                        scratch.w[k + 1] = crate::numkit::normal::std_normal_inv_cdf_unchecked(u);
                    }
                    let r = kernel.rest(&scratch.w);
                    if j < half { r1.add(r) } else { r2.add(r) }
                }
            }
            _ => {
                let mut st = RngStream::new(self.seed, StreamId::new(Purpose::Inner, level, index));
                for j in 0..m {
                    st.fill_normal(&mut scratch.w[1..]);
                    let r = kernel.rest(&scratch.w);
                    if j < half { r1.add(r) } else { r2.add(r) }
                }
            }
        }
        (r1.value(), r2.value())
    }

    fn scramble_seed(&self, level: usize, index: u64) -> u64 {
        let id = StreamId::new(Purpose::Scramble, level, index).0;
        crate::numkit::qmc::splitmix64(self.seed ^ crate::numkit::qmc::splitmix64(id))
    }

    fn smooth(&self, loss_rest: f64, guess: f64) -> Result<Smoothed> {
        smoothed_indicator(&self.spec, loss_rest, guess, &self.params)
    }

    /// One coupled sample on `level` for outer index `index`.
    pub fn sample(&self, level: usize, index: u64, scratch: &mut Scratch) -> Result<LevelSample> {
        let scen = self.scenario(level, index);
        let (r1, r2) = self.rest_sums(&scen, level, index, scratch);
        self.combine(level, scen.omega1(), r1, r2)
    }

    /// Level difference from the scenario's `omega_1` and the two half-batch
    /// payoff sums of the rest of the portfolio.
    pub(crate) fn combine(&self, level: usize, omega1: f64, r1: f64, r2: f64) -> Result<LevelSample> {
        let m = self.inner_size(level) as f64;
        let v0 = self.spec.initial_value();
        let c = self.spec.threshold();
        let fine_rest = v0 - (r1 + r2) / m - c;
        let mut cost = self.inner_size(level) as u64;

        let out = match self.method {
            MethodKind::NestedMC | MethodKind::StdMLMC => {
                let first = self.spec.first_call_value(omega1);
                let ind = |lr: f64| if first < lr { 1.0 } else { 0.0 };
                let fine = ind(fine_rest);
                if level == 0 || self.method == MethodKind::NestedMC {
                    LevelSample { y: fine, fine, coarse: None, cost }
                } else {
                    let coarse = ind(v0 - r1 / (m / 2.0) - c);
                    LevelSample { y: fine - coarse, fine, coarse: Some(coarse), cost }
                }
            }
            _ if level == 0 => {
                let h = self.smooth(fine_rest, omega1)?;
                cost += h.charge();
                LevelSample { y: h.value, fine: h.value, coarse: None, cost }
            }
            method => {
                let c1 = self.smooth(v0 - r1 / (m / 2.0) - c, omega1)?;
                let mut coarse = c1.value;
                cost += c1.charge();
                let mut guess = c1.root.unwrap_or(omega1);
                if method.is_antithetic() {
                    let c2 = self.smooth(v0 - r2 / (m / 2.0) - c, guess)?;
                    cost += c2.charge();
                    coarse = 0.5 * (coarse + c2.value);
                    if c1.root.is_none() {
                        guess = c2.root.unwrap_or(omega1);
                    }
                }
                let f = self.smooth(fine_rest, guess)?;
                cost += f.charge();
                LevelSample { y: f.value - coarse, fine: f.value, coarse: Some(coarse), cost }
            }
        };
        if !out.y.is_finite() {
            return Err(Error::NonFiniteSample(out.y));
        }
        Ok(out)
    }

    /// Accumulate samples for outer indices `range` on `level`. The result
    /// depends only on the range, not on `exec`.
    pub fn accumulate(&self, level: usize, range: std::ops::Range<u64>, exec: Execution) -> Result<LevelAccumulator> {
        let parts = map_chunks(exec, range, |chunk| -> Result<LevelAccumulator> {
            let mut acc = LevelAccumulator::new(level);
            let mut scratch = self.scratch();
            for i in chunk {
                acc.push(&self.sample(level, i, &mut scratch)?)?;
            }
            Ok(acc)
        });
        let mut total = LevelAccumulator::new(level);
        for p in parts {
            total.merge(&p?);
        }
        Ok(total)
    }
}

fn sampler_for(spec: &ModelSpec, method: MethodKind, params: Option<&SmoothingParams>, seed: u64) -> Result<LevelSampler> {
    LevelSampler::new(spec, method, params.copied().unwrap_or_default(), seed, DEFAULT_M0)
}

/// Standard coupled difference of raw indicators.
pub fn level_sample_std(spec: &ModelSpec, level: usize, index: u64, seed: u64) -> Result<LevelSample> {
    sampler_for(spec, MethodKind::StdMLMC, None, seed)?.sample(level, index, &mut Scratch::default())
}

/// Coupled difference of smoothed indicators.
pub fn level_sample_smoothed(spec: &ModelSpec, level: usize, index: u64, seed: u64, params: &SmoothingParams) -> Result<LevelSample> {
    sampler_for(spec, MethodKind::SmoothedMLMC, Some(params), seed)?.sample(level, index, &mut Scratch::default())
}

/// Smoothed difference with the antithetic coarse term.
pub fn level_sample_antithetic(spec: &ModelSpec, level: usize, index: u64, seed: u64, params: &SmoothingParams) -> Result<LevelSample> {
    sampler_for(spec, MethodKind::SmoothedAMLMC, Some(params), seed)?.sample(level, index, &mut Scratch::default())
}

/// Smoothed difference with scrambled-net inner batches.
pub fn level_sample_qmc(
    spec: &ModelSpec,
    level: usize,
    index: u64,
    seed: u64,
    params: &SmoothingParams,
    antithetic: bool,
) -> Result<LevelSample> {
    let method = if antithetic { MethodKind::SmoothedAMLQMC } else { MethodKind::SmoothedMLQMC };
    sampler_for(spec, method, Some(params), seed)?.sample(level, index, &mut Scratch::default())
}

/// Result of the single-level nested estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// 95% normal half-width.
    pub half_width: f64,
    pub n: u64,
    pub m: usize,
    pub cost: u64,
}

/// Plain nested Monte Carlo: `n` scenarios, `m` inner rows each, raw
/// indicator of the estimated loss exceeding the threshold.
pub fn nested_estimate(spec: &ModelSpec, n: u64, m: usize, seed: u64, exec: Execution) -> Result<NestedEstimate> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidField { field: "n, m".into(), constraint: "n >= 1 and m >= 1".into() });
    }
    spec.check_separable()?;
    let d = spec.dim();
    let v0 = spec.initial_value();
    let c = spec.threshold();
    let hits: Vec<u64> = map_chunks(exec, 0..n, |chunk| {
        let mut w = vec![0.0; d];
        let mut hits = 0u64;
        for i in chunk {
            let mut outer = RngStream::new(seed, StreamId::new(Purpose::Oracle, 0, i));
            let scen = crate::model::sample_outer(spec, &mut outer);
            let mut rest = CompensatedSum::default();
            if d > 1 {
                let mut inner = RngStream::new(seed, StreamId::new(Purpose::Oracle, 1, i));
                let mut kernel = PayoffKernel::new(spec, &scen);
                for _ in 0..m {
                    inner.fill_normal(&mut w[1..]);
                    rest.add(kernel.rest(&w));
                }
            }
            let loss_rest = v0 - rest.value() / m as f64 - c;
            if spec.first_call_value(scen.omega1()) < loss_rest {
                hits += 1;
            }
        }
        hits
    });
    let k: u64 = hits.iter().sum();
    let p = k as f64 / n as f64;
    let std_error = if n > 1 { (p * (1.0 - p) / (n - 1) as f64).sqrt() } else { f64::INFINITY };
    Ok(NestedEstimate { estimate: p, std_error, half_width: 1.96 * std_error, n, m, cost: n * m as u64 })
}

/// Outer-only estimate of the exceedance probability with the conditional
/// loss in closed form (no inner sampling, hence no nesting bias).
pub fn exact_loss_estimate(spec: &ModelSpec, n: u64, seed: u64, exec: Execution) -> Result<NestedEstimate> {
    if n < 2 {
        return Err(Error::InvalidField { field: "n".into(), constraint: "n >= 2".into() });
    }
    let c = spec.threshold();
    let hits: Vec<u64> = map_chunks(exec, 0..n, |chunk| {
        chunk
            .filter(|&i| {
                let mut outer = RngStream::new(seed, StreamId::new(Purpose::Oracle, 2, i));
                let scen = crate::model::sample_outer(spec, &mut outer);
                spec.conditional_loss(&scen.omega) > c
            })
            .count() as u64
    });
    let p = hits.iter().sum::<u64>() as f64 / n as f64;
    let std_error = (p * (1.0 - p) / (n - 1) as f64).sqrt();
    Ok(NestedEstimate { estimate: p, std_error, half_width: 1.96 * std_error, n, m: 0, cost: n })
}
