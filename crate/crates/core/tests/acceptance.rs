//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nestmlmc::driver::{
    cost_vs_tol_study, fit_rates_from_levels, optimal_allocation, run_fixed_levels, run_mlmc, LevelRecord, RunConfig,
};
use nestmlmc::estimators::{LevelAccumulator, LevelSample, MethodKind};
use nestmlmc::exec::Execution;
use nestmlmc::model::{sample_outer, ModelSpec, PayoffKernel, Threshold};
use nestmlmc::numkit::{cholesky, std_normal_cdf, std_normal_inv_cdf, std_normal_pdf, Purpose, RngStream, StreamId};
use nestmlmc::oracle::OracleRecord;
use nestmlmc::smoothing::{laguerre_rule, newton_root, smoothed_indicator, Bracket, Gaussian, SmoothingParams};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const SEED: u64 = 2024;
const RATE_SAMPLES: u64 = 100_000;
const QMC_SAMPLES: u64 = 20_000;
const COST_TOLS: [f64; 4] = [2e-2, 1e-2, 5e-3, 2.5e-3];
const COST_REPLICATIONS: usize = 8;
const COST_N_STAR: u64 = 100;
const ORACLE_TOL: f64 = 5e-3;

use MethodKind::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn paper(d: usize) -> ModelSpec {
    ModelSpec::paper(d, Threshold::FractionOfV0(0.3)).unwrap()
}

fn fixed(spec: &ModelSpec, method: MethodKind, max_level: usize, n: u64) -> Vec<LevelRecord> {
    let t = Instant::now();
    let r = run_fixed_levels(spec, method, max_level, n, SEED, SmoothingParams::default(), Execution::Parallel).unwrap();
    eprintln!("  [{} d={} levels 0..={max_level} x {n}: {:.0}s]", method.name(), spec.dim(), t.elapsed().as_secs_f64());
    r.levels
}

fn beta(levels: &[LevelRecord]) -> f64 {
    fit_rates_from_levels(levels).unwrap().beta_hat
}

fn alpha(levels: &[LevelRecord]) -> f64 {
    fit_rates_from_levels(levels).unwrap().alpha_hat
}

fn kurt(levels: &[LevelRecord], l: usize) -> f64 {
    levels[l].kurtosis.unwrap_or(f64::NAN)
}

fn strong_rate_smoothed(r: &BTreeMap<MethodKind, Vec<LevelRecord>>) -> Outcome {
    let b = beta(&r[&SmoothedMLMC]);
    outcome((-1.3..=-0.8).contains(&b), format!("SmoothedMLMC beta_hat = {b:.3} (want [-1.3, -0.8])"))
}

fn strong_rate_std(r: &BTreeMap<MethodKind, Vec<LevelRecord>>) -> Outcome {
    let b = beta(&r[&StdMLMC]);
    outcome((-0.8..=-0.3).contains(&b), format!("StdMLMC beta_hat = {b:.3} (want [-0.8, -0.3])"))
}

fn antithetic_gain(r: &BTreeMap<MethodKind, Vec<LevelRecord>>) -> Outcome {
    let b = beta(&r[&SmoothedAMLMC]);
    let (va, vs) = (r[&SmoothedAMLMC][6].variance, r[&SmoothedMLMC][6].variance);
    outcome(b <= -1.2 && va < vs, format!("SmoothedAMLMC beta_hat = {b:.3} (want <= -1.2); V6 {va:.3e} vs smoothed {vs:.3e}"))
}

fn weak_rate(r: &BTreeMap<MethodKind, Vec<LevelRecord>>) -> Outcome {
    let (a_std, a_sm) = (alpha(&r[&StdMLMC]), alpha(&r[&SmoothedMLMC]));
    let mut worst: f64 = 0.0;
    for (s, m) in r[&StdMLMC].iter().zip(&r[&SmoothedMLMC]) {
        let se = (s.std_error.powi(2) + m.std_error.powi(2)).sqrt();
        worst = worst.max((s.mean - m.mean).abs() / se);
    }
    let ok = (-1.35..=-0.65).contains(&a_std) && (-1.35..=-0.65).contains(&a_sm) && worst <= 3.0;
    outcome(
        ok,
        format!("alpha_hat std {a_std:.3}, smoothed {a_sm:.3} (want [-1.35, -0.65]); max level-mean gap {worst:.2} joint SE (want <= 3)"),
    )
}

fn kurtosis(r: &BTreeMap<MethodKind, Vec<LevelRecord>>) -> Outcome {
    let (s2, s6) = (kurt(&r[&SmoothedMLMC], 2), kurt(&r[&SmoothedMLMC], 6));
    let (t2, t6) = (kurt(&r[&StdMLMC], 2), kurt(&r[&StdMLMC], 6));
    outcome(
        s6 <= 1.5 * s2 && t6 >= 3.0 * t2,
        format!("smoothed kurtosis l2 {s2:.2} -> l6 {s6:.2} (want ratio <= 1.5); std l2 {t2:.2} -> l6 {t6:.2} (want ratio >= 3)"),
    )
}

fn complexity() -> Outcome {
    let spec = paper(4);
    let base = RunConfig { n_star: COST_N_STAR, ..RunConfig::desk(StdMLMC, COST_TOLS[0], SEED) };
    let t = Instant::now();
    let study = cost_vs_tol_study(&spec, &[StdMLMC, SmoothedMLMC], &COST_TOLS, &base, COST_REPLICATIONS).unwrap();
    eprintln!("  [cost study: {:.0}s]", t.elapsed().as_secs_f64());
    let exp = |m| study.exponents.iter().find(|(k, _)| *k == m).unwrap().1;
    let tightest = |m| study.rows.iter().find(|r| r.method == m && r.tol == 2.5e-3).unwrap().total_cost;
    let (es, et) = (exp(SmoothedMLMC), exp(StdMLMC));
    let (cs, ct) = (tightest(SmoothedMLMC), tightest(StdMLMC));
    outcome(
        (-2.4..=-1.8).contains(&es) && (-2.9..=-2.2).contains(&et) && cs < ct,
        format!(
            "cost exponent smoothed {es:.3} (want [-2.4, -1.8]), std {et:.3} (want [-2.9, -2.2]); cost at 2.5e-3 {cs:.3e} vs {ct:.3e}"
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/oracle_d4.json");
    let spec = paper(4);
    let oracle = match OracleRecord::load(&path) {
        Ok(o) if o.matches(&spec) => o,
        Ok(_) => return outcome(false, format!("{} was produced for a different model", path.display())),
        Err(e) => return outcome(false, format!("no cached oracle: {e}")),
    };
    let bound = ORACLE_TOL + 3.0 * oracle.std_error;
    let mut parts = vec![format!("oracle {:.5} +- {:.5} (n={}, m={})", oracle.estimate, oracle.std_error, oracle.n, oracle.m)];
    let mut ok = true;
    for m in [SmoothedMLMC, StdMLMC, NestedMC] {
        let t = Instant::now();
        let r = run_mlmc(&spec, &RunConfig::desk(m, ORACLE_TOL, SEED)).unwrap();
        eprintln!("  [{} at tol {ORACLE_TOL}: {:.0}s]", m.name(), t.elapsed().as_secs_f64());
        let gap = (r.estimate - oracle.estimate).abs();
        ok &= gap <= bound && r.converged();
        parts.push(format!("{} {:.5} (gap {gap:.5})", m.name(), r.estimate));
    }
    parts.push(format!("bound {bound:.5}"));
    outcome(ok, parts.join(", "))
}

fn smoothing_equivalence() -> Outcome {
    let spec = paper(4);
    let analytic = SmoothingParams::default();
    let numerical = SmoothingParams { m_lag: 32, ..SmoothingParams::numerical() };
    let c = spec.threshold();
    let v0 = spec.initial_value();
    let mut w = vec![0.0; spec.dim()];
    let mut worst: f64 = 0.0;
    let mut interior = 0;
    for i in 0..100 {
        let scen = sample_outer(&spec, &mut RngStream::new(SEED, StreamId::new(Purpose::Test, 0, i)));
        let mut inner = RngStream::new(SEED, StreamId::new(Purpose::Test, 1, i));
        let mut kernel = PayoffKernel::new(&spec, &scen);
        let m = 128;
        let rest: f64 = (0..m)
            .map(|_| {
                inner.fill_normal(&mut w);
                kernel.rest(&w)
            })
            .sum::<f64>()
            / m as f64;
        let loss_rest = v0 - rest - c;
        let a = smoothed_indicator(&spec, loss_rest, scen.omega1(), &analytic).unwrap().value;
        let n = smoothed_indicator(&spec, loss_rest, scen.omega1(), &numerical).unwrap().value;
        if a > 1e-6 && a < 1.0 - 1e-6 {
            interior += 1;
        }
        worst = worst.max((a - n).abs());
    }
    outcome(worst <= 1e-6, format!("max |numerical - analytic| = {worst:.2e} over 100 scenarios ({interior} strictly inside (0,1))"))
}

fn coupling_consistency(r: &BTreeMap<MethodKind, Vec<LevelRecord>>) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, levels) in r {
        let mut worst: f64 = 0.0;
        for l in 1..=4 {
            let (f, c) = (&levels[l], &levels[l + 1]);
            let cm = c.coarse_mean.unwrap();
            let se = (f.fine_variance / f.n_l as f64 + c.coarse_variance.unwrap() / c.n_l as f64).sqrt();
            worst = worst.max((f.fine_mean - cm).abs() / se);
        }
        ok &= worst <= 3.0;
        parts.push(format!("{} {worst:.2}", m.name()));
    }
    outcome(
        ok,
        format!("max |E fine_l - E coarse_(l+1)| / joint SE, l=1..4: {} (want <= 3; nested_mc has no coarse term)", parts.join(", ")),
    )
}

fn qmc_benefit() -> Outcome {
    let spec = paper(32);
    let mc = fixed(&spec, SmoothedMLMC, 4, QMC_SAMPLES);
    let qmc = fixed(&spec, SmoothedMLQMC, 6, QMC_SAMPLES);
    let aqmc = fixed(&spec, SmoothedAMLQMC, 6, QMC_SAMPLES);
    let (vm, vq) = (mc[4].variance, qmc[4].variance);
    let (bq, ba) = (beta(&qmc), beta(&aqmc));
    outcome(
        vq < vm && bq <= -1.2 && ba <= bq,
        format!("d=32: V4 MLQMC {vq:.3e} vs MLMC {vm:.3e}; beta_hat MLQMC {bq:.3} (want <= -1.2), AMLQMC {ba:.3} (want <= MLQMC)"),
    )
}

fn property<S: Strategy>(name: &str, cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn unit_invariants() -> Outcome {
    let checks: Vec<(&str, Result<(), String>)> = vec![
        (
            "cholesky round trip",
            property("cholesky", 64, prop::collection::vec(-1.0f64..1.0, 36), |b| {
                let n = 6;
                let a: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
                            .collect()
                    })
                    .collect();
                let g = cholesky(&a).unwrap().gram();
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!((g[i][j] - a[i][j]).abs() < 1e-12);
                    }
                }
                Ok(())
            }),
        ),
        (
            "normal cdf accuracy",
            property("cdf", 128, -8.0f64..8.0, |x| {
                // composite Simpson on the density from 0 to x
                let n = 4000;
                let h = x / n as f64;
                let s: f64 = (0..=n)
                    .map(|k| {
                        let wgt = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                        wgt * std_normal_pdf(k as f64 * h)
                    })
                    .sum();
                let oracle = 0.5 + s * h / 3.0;
                prop_assert!((std_normal_cdf(x) - oracle).abs() < 1e-12);
                // round trip on the lower tail, where p keeps full relative precision
                let lower = -x.abs();
                let p = std_normal_cdf(lower);
                prop_assert!((std_normal_inv_cdf(p).unwrap() - lower).abs() < 1e-9 * (1.0 + x.abs()));
                Ok(())
            }),
        ),
        (
            "stream determinism",
            property("streams", 64, (any::<u64>(), 0usize..255, 0u64..1 << 40, 0u64..500), |(seed, level, idx, skip)| {
                let id = StreamId::new(Purpose::Inner, level, idx);
                let mut a = RngStream::new(seed, id);
                let first: Vec<u64> = (0..skip + 4).map(|_| a.next_u64()).collect();
                let mut b = RngStream::new(seed, id);
                b.seek(skip);
                let tail: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
                prop_assert_eq!(&first[skip as usize..], &tail[..]);
                Ok(())
            }),
        ),
        (
            "accumulator merge associativity",
            property("merge", 64, prop::collection::vec(-1.0f64..1.0, 3..300), |ys| {
                let acc = |xs: &[f64]| {
                    let mut a = LevelAccumulator::new(1);
                    for &y in xs {
                        a.push(&LevelSample { y, fine: y, coarse: Some(0.5 * y), cost: 3 }).unwrap();
                    }
                    a
                };
                let (i, j) = (ys.len() / 3, 2 * ys.len() / 3);
                let (a, b, c) = (acc(&ys[..i]), acc(&ys[i..j]), acc(&ys[j..]));
                let mut left = a.clone();
                left.merge(&b);
                left.merge(&c);
                let mut bc = b.clone();
                bc.merge(&c);
                let mut right = a.clone();
                right.merge(&bc);
                let whole = acc(&ys);
                for x in [&left, &right] {
                    prop_assert_eq!(x.n, whole.n);
                    prop_assert_eq!(x.cost_units, whole.cost_units);
                    prop_assert!((x.mean() - whole.mean()).abs() < 1e-14);
                    prop_assert!((x.variance() - whole.variance()).abs() < 1e-13);
                }
                Ok(())
            }),
        ),
        (
            "quadrature total mass",
            property("mass", 64, -3.0f64..3.0, |root| {
                let rule = laguerre_rule(&Gaussian::STANDARD, root, 32).unwrap();
                prop_assert!((rule.apply(|_| 1.0) - 1.0).abs() < 1e-8);
                let below = rule.apply(|x| if x <= root { 1.0 } else { 0.0 });
                prop_assert!((below - std_normal_cdf(root)).abs() < 1e-8);
                Ok(())
            }),
        ),
        (
            "newton bracket convergence",
            property("newton", 128, (-50.0f64..50.0, 0.01f64..5.0, -40.0f64..40.0), |(r, a, x0)| {
                let f = |x: f64| (x - r).powi(3) + a * (x - r);
                let df = |x: f64| 3.0 * (x - r).powi(2) + a;
                let res = newton_root(f, df, x0, 1e-10, 200, Bracket::unbounded(1.0)).unwrap();
                prop_assert!(res.converged && f(res.root).abs() <= 1e-10);
                Ok(())
            }),
        ),
        (
            "allocation formula",
            property("allocation", 64, (prop::collection::vec((1e-6f64..1.0, 1.0f64..1e4), 1..8), 1e-3f64..1e-1), |(vc, eps)| {
                let (v, c): (Vec<f64>, Vec<f64>) = vc.iter().copied().unzip();
                let n = optimal_allocation(&v, &c, eps, 0.16);
                // Lagrange optimum of sum C_l N_l subject to sum V_l / N_l = 0.84 eps^2
                let lambda = vc.iter().map(|(v, c)| (v * c).sqrt()).sum::<f64>() / (0.84 * eps * eps);
                for ((v, c), &nl) in vc.iter().zip(&n) {
                    let exact = lambda * (v / c).sqrt();
                    prop_assert!(nl as f64 >= exact && (nl as f64) < exact.max(1.0) + 2.0);
                }
                let var: f64 = v.iter().zip(&n).map(|(v, &nl)| v / nl as f64).sum();
                prop_assert!(var <= 0.84 * eps * eps * (1.0 + 1e-12));
                Ok(())
            }),
        ),
    ];
    let failed: Vec<String> = checks.iter().filter_map(|(_, r)| r.clone().err()).collect();
    let names: Vec<&str> = checks.iter().map(|(n, _)| *n).collect();
    if failed.is_empty() {
        outcome(true, format!("{} properties hold: {}", names.len(), names.join(", ")))
    } else {
        outcome(false, failed.join("; "))
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let spec = paper(4);
    let mut rate_runs = BTreeMap::new();
    for (m, max_level) in [(StdMLMC, 6), (SmoothedMLMC, 6), (SmoothedAMLMC, 6), (SmoothedMLQMC, 5), (SmoothedAMLQMC, 5)] {
        rate_runs.insert(m, fixed(&spec, m, max_level, RATE_SAMPLES));
    }
    let results = [
        ("1 strong rate, smoothed", strong_rate_smoothed(&rate_runs)),
        ("2 strong rate, standard", strong_rate_std(&rate_runs)),
        ("3 antithetic gain", antithetic_gain(&rate_runs)),
        ("4 weak rate and bias neutrality", weak_rate(&rate_runs)),
        ("5 kurtosis", kurtosis(&rate_runs)),
        ("6 complexity exponents", complexity()),
        ("7 oracle equivalence", oracle_equivalence()),
        ("8 smoothing equivalence", smoothing_equivalence()),
        ("9 coupling consistency", coupling_consistency(&rate_runs)),
        ("10 QMC benefit", qmc_benefit()),
        ("11 unit-level invariants", unit_invariants()),
    ];
    let mut all = true;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    println!("acceptance: {}/{} passed in {:.0}s", results.iter().filter(|(_, o)| o.pass).count(), results.len(), start.elapsed().as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
