//! Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line with the
//! measured value and its pinned tolerance.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridrisk_core::cascade::{gamma_factor, sample_probability};
use gridrisk_core::config::SimulationConfig;
use gridrisk_core::credibility::{credibility, required_samples};
use gridrisk_core::failure::{MaintenanceEffect, PhiParams};
use gridrisk_core::matpower::{parse_matpower, IEEE57};
use gridrisk_core::network::{BranchId, Network};
use gridrisk_core::optimizer::{
    algorithm_one, algorithm_one_count, algorithm_two, algorithm_two_count, enumerate_optimal, enumeration_count,
    Algorithm, OptimizerConfig,
};
use gridrisk_core::procedure::procedure_one;
use gridrisk_core::risk::{build_matrices, RiskMatrices, Strategy, SurvivalFactors};
use gridrisk_core::sampling::{tiny_model, tiny_samples, SampleSet, Simulator};
use gridrisk_core::tiny::{chain_fixture, enumerate_paths, exact_risk_tiny, TinySystem};

// Timed criteria must not share the core with other tests.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: u32, pass: bool, detail: String) {
    // written past the test harness capture so it lands in the log
    let line = format!("criterion {criterion:>2}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().write_all(line.as_bytes());
}

fn ieee57() -> Network {
    parse_matpower(IEEE57).unwrap()
}

/// The chain fixture's parameters with `maintained` (component indices)
/// under the default effect.
fn maintained_params(params: &[PhiParams], maintained: &[usize]) -> Vec<PhiParams> {
    let effect = MaintenanceEffect::default();
    params
        .iter()
        .enumerate()
        .map(|(k, p)| if maintained.contains(&k) { effect.apply(p) } else { *p })
        .collect()
}

fn chain_matrices(system: &TinySystem, params: &[PhiParams], seed: u64, n: u64) -> RiskMatrices {
    let model = tiny_model(system, params).unwrap();
    let set = tiny_samples(system, params, seed, 0..n).unwrap();
    build_matrices(&set, &model, &MaintenanceEffect::default(), &system.ids, 0.0).unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (mean, x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Five components whose loadings climb with the number already out.
fn five_component() -> (TinySystem, Vec<PhiParams>) {
    let system = TinySystem {
        ids: (1..=5).map(BranchId).collect(),
        loading: Arc::new(|failed, k| 0.6 + 0.25 * failed.count_ones() as f64 + 0.05 * k as f64),
        shed: Arc::new(|failed| (0..5).filter(|k| failed >> k & 1 == 1).map(|k| 10.0 * (k + 1) as f64).sum()),
        stage_cap: 10,
    };
    let params = (0..5)
        .map(|k| PhiParams { p_base: 0.02 + 0.01 * k as f64, p_peak: 0.8, ell_knee: 0.9, ell_sat: 1.5 })
        .collect();
    (system, params)
}

#[test]
fn c01_gamma_product_identity() {
    let _g = serial();
    let start = Instant::now();
    let (system, params) = five_component();
    let model = tiny_model(&system, &params).unwrap();
    let set = tiny_samples(&system, &params, 11, 0..1000).unwrap();
    let mut worst = 0.0f64;
    for s in &set.samples {
        let direct = sample_probability(s, &model).unwrap();
        let product: f64 = system.ids.iter().zip(&params).map(|(&k, p)| gamma_factor(p, s, k).unwrap()).product();
        worst = worst.max(((direct - product) / direct).abs());
    }
    let cascades = set.samples.iter().filter(|s| !s.events.is_empty()).count();
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(10) && cascades > 0;
    report(1, pass, format!("max relative gap {worst:.2e} (tol 1e-12), {cascades} cascading samples, {elapsed:.2?} (limit 10s)"));
    assert!(pass);
}

#[test]
fn c02_exact_oracle_unbiasedness() {
    let _g = serial();
    let start = Instant::now();
    let (system, params) = chain_fixture();
    let strategy: Strategy = [BranchId(1)].into();
    let exact = exact_risk_tiny(&system, &maintained_params(&params, &[0]), 0.0).unwrap();
    let estimates: Vec<f64> = (0..200)
        .map(|seed| chain_matrices(&system, &params, 1000 + seed, 10_000).estimate_risk_strategy(&strategy).unwrap())
        .collect();
    let (mean, var) = mean_var(&estimates);
    let se = (var / estimates.len() as f64).sqrt();
    let z = (mean - exact).abs() / se;
    let elapsed = start.elapsed();
    let pass = z <= 3.0 && elapsed < Duration::from_secs(300);
    report(2, pass, format!("mean {mean:.5} vs exact {exact:.5}, {z:.2} standard errors (tol 3), {elapsed:.2?} (limit 300s)"));
    assert!(pass);
}

#[test]
fn c03_reweighting_matches_resampling() {
    let _g = serial();
    let start = Instant::now();
    let network = ieee57();
    let config = SimulationConfig::default();
    let baseline = config.failure_model(&network).unwrap();
    let perturbed_ids = [BranchId(31), BranchId(46), BranchId(59), BranchId(80)];
    let perturbed = baseline.maintained(&config.maintenance, &perturbed_ids).unwrap();
    let strategy: Strategy = perturbed_ids.into();
    let g_sim = Simulator::new(&network, &baseline, &config).unwrap();
    let f_sim = Simulator::new(&network, &perturbed, &config).unwrap();
    let n = 100_000;
    let trials = 40;
    let mut agree = 0;
    for t in 0..trials {
        let g = g_sim.generate(n, 3000 + t).unwrap();
        let f = f_sim.generate(n, 4000 + t).unwrap();
        let mg = build_matrices(&g, &baseline, &config.maintenance, &perturbed_ids, 0.0).unwrap();
        let mf = build_matrices(&f, &perturbed, &config.maintenance, &perturbed_ids, 0.0).unwrap();
        let rw = credibility(&mg, &strategy, 0.95, 0.1).unwrap();
        let direct = credibility(&mf, &Strategy::new(), 0.95, 0.1).unwrap();
        let gap = (rw.risk - direct.risk).abs();
        if gap <= rw.absolute_half_width + direct.absolute_half_width {
            agree += 1;
        } else {
            println!("trial {t}: reweighted {} vs direct {}", rw.risk, direct.risk);
        }
    }
    let elapsed = start.elapsed();
    let pass = agree >= 38 && elapsed < Duration::from_secs(1800);
    report(3, pass, format!("{agree}/{trials} trials within summed 95% half-widths (need 38), {elapsed:.2?} (limit 1800s)"));
    assert!(pass);
}

#[test]
fn c04_variance_estimator_unbiased() {
    let _g = serial();
    let start = Instant::now();
    let (system, params) = chain_fixture();
    let strategy: Strategy = [BranchId(1)].into();
    let mut risks = Vec::new();
    let mut variances = Vec::new();
    for seed in 0..500 {
        let m = chain_matrices(&system, &params, 5000 + seed, 2000);
        let c = credibility(&m, &strategy, 0.95, 0.1).unwrap();
        risks.push(c.risk);
        variances.push(c.variance);
    }
    let (_, empirical) = mean_var(&risks);
    let (mean_d, _) = mean_var(&variances);
    let rel = (mean_d - empirical).abs() / empirical;
    let elapsed = start.elapsed();
    // exact Var(R) from the path space, for the log only
    let g = enumerate_paths(&system, &params).unwrap();
    let f = enumerate_paths(&system, &maintained_params(&params, &[0])).unwrap();
    let exact_r: f64 = f.iter().map(|p| p.probability * p.shed).sum();
    let second: f64 = g.iter().zip(&f).filter(|(a, _)| a.probability > 0.0).map(|(a, b)| (b.shed * b.probability).powi(2) / a.probability).sum();
    let exact = (second - exact_r * exact_r) / 2000.0;
    let pass = rel <= 0.10 && elapsed < Duration::from_secs(300);
    report(
        4,
        pass,
        format!("mean D {mean_d:.5} vs empirical {empirical:.5}, relative gap {rel:.3} (tol 0.10); exact {exact:.5}; {elapsed:.2?} (limit 300s)"),
    );
    assert!(pass);
}

#[test]
fn c05_interval_coverage() {
    let _g = serial();
    let (system, params) = chain_fixture();
    let strategy: Strategy = [BranchId(1)].into();
    let exact = exact_risk_tiny(&system, &maintained_params(&params, &[0]), 0.0).unwrap();
    let reps = 200;
    let covered = (0..reps)
        .filter(|seed| {
            let m = chain_matrices(&system, &params, 7000 + seed, 10_000);
            let c = credibility(&m, &strategy, 0.9, 0.1).unwrap();
            c.interval[0] <= exact && exact <= c.interval[1]
        })
        .count();
    let coverage = covered as f64 / reps as f64;
    let pass = (coverage - 0.90).abs() <= 0.05;
    report(5, pass, format!("coverage {coverage:.3} at beta 0.9 (tol 0.90 +/- 0.05)"));
    assert!(pass);
}

#[test]
fn c06_sample_size_rule() {
    let _g = serial();
    let n_bar = required_samples(4.0, 2.0, 0.95, 0.1).unwrap();
    let (system, params) = chain_fixture();
    let model = tiny_model(&system, &params).unwrap();
    let effect = MaintenanceEffect::default();
    let eps_bar = 0.1;
    let trials = 50;
    let mut met = 0;
    for t in 0..trials {
        let seed = 9000 + t;
        let mut set: SampleSet = tiny_samples(&system, &params, seed, 0..1000).unwrap();
        let m = build_matrices(&set, &model, &effect, &system.ids, 0.0).unwrap();
        let target = credibility(&m, &Strategy::new(), 0.95, eps_bar).unwrap().required_n.unwrap();
        if target > set.len() as u64 {
            let more = tiny_samples(&system, &params, seed, set.len() as u64..target).unwrap();
            set.samples.extend(more.samples);
            set.header.count = set.samples.len() as u64;
        }
        let m = build_matrices(&set, &model, &effect, &system.ids, 0.0).unwrap();
        let eps = credibility(&m, &Strategy::new(), 0.95, eps_bar).unwrap().epsilon_hat.unwrap();
        if eps <= 1.1 * eps_bar {
            met += 1;
        }
    }
    let pass = n_bar == 385 && met >= 45;
    report(6, pass, format!("N = {n_bar} (exact 385); {met}/{trials} grown sets reach eps <= 1.1 eps_bar (need 45)"));
    assert!(pass);
}

/// Ratios in (0, 1]; each component touches a quarter of the samples.
fn general_fixture(k: usize, n: usize, seed: u64) -> RiskMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shed: Vec<f64> = (0..n).map(|_| -50.0 * (1.0 - rng.random::<f64>()).ln()).collect();
    let q: Vec<f64> = (0..k * n)
        .map(|_| if rng.random::<f64>() < 0.25 { rng.random_range(0.05..=1.0) } else { 1.0 })
        .collect();
    let ids = (1..=k as u32).map(BranchId).collect();
    RiskMatrices::new(Arc::new(SurvivalFactors::from_parts(ids, shed, vec![1.0; k * n], q).unwrap()), 0.0)
}

/// Each sample touched by exactly one component, so risk is additive.
fn separable_fixture(k: usize, n: usize, seed: u64) -> RiskMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shed: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
    let ratio: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut q = vec![1.0; k * n];
    for i in 0..n {
        q[(i % k) * n + i] = ratio[i % k];
    }
    let ids = (1..=k as u32).map(BranchId).collect();
    RiskMatrices::new(Arc::new(SurvivalFactors::from_parts(ids, shed, vec![1.0; k * n], q).unwrap()), 0.0)
}

#[test]
fn c07_scenario_counts() {
    let _g = serial();
    let k = 17;
    let (_, enum_top) = enumeration_count(k, 4);
    let (_, one8) = algorithm_one_count(k, 8, 4);
    let (_, one10) = algorithm_one_count(k, 10, 4);
    let two = algorithm_two_count(k, 4);

    // the optimizers report the same numbers on a 17-component instance
    let m = general_fixture(k, 200, 1);
    let cfg = |m_k| OptimizerConfig { m_max: 4, m_k, ..Default::default() };
    let e = enumerate_optimal(&m, &cfg(8), None).unwrap();
    let a8 = algorithm_one(&m, &cfg(8)).unwrap();
    let a10 = algorithm_one(&m, &cfg(10)).unwrap();
    let a2 = algorithm_two(&m, &cfg(8)).unwrap();
    let reported = [
        e.enumeration_scenarios.unwrap(),
        a8.enumeration_scenarios.unwrap(),
        a10.enumeration_scenarios.unwrap(),
        a2.scenarios_evaluated,
    ];
    let pass = (enum_top, one8, one10, two) == (2380, 70, 210, 62) && reported == [2380, 70, 210, 62];
    report(7, pass, format!("enumeration {enum_top}, alg I {one8}/{one10}, alg II {two}; reported {reported:?} (exact 2380, 70, 210, 62)"));
    assert!(pass);
}

#[test]
fn c08_heuristic_sanity() {
    let _g = serial();
    let (k, m_max) = (12, 4);
    let cfg = OptimizerConfig { m_max, m_k: k, ..Default::default() };

    let one_matches = (0..20)
        .filter(|&seed| {
            let m = general_fixture(k, 300, 100 + seed);
            let e = enumerate_optimal(&m, &cfg, None).unwrap();
            let a = algorithm_one(&m, &cfg).unwrap();
            a.strategy == e.strategy && a.risk == e.risk
        })
        .count();

    let separable_matches = (0..20)
        .filter(|&seed| {
            let m = separable_fixture(k, 300, 200 + seed);
            let e = enumerate_optimal(&m, &cfg, None).unwrap();
            let g = algorithm_two(&m, &cfg).unwrap();
            g.strategy == e.strategy
        })
        .count();

    let mut within = 0;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let m = general_fixture(k, 300, 300 + seed);
        let e = enumerate_optimal(&m, &cfg, None).unwrap();
        let g = algorithm_two(&m, &cfg).unwrap();
        let gap = (g.risk - e.risk) / e.risk;
        worst = worst.max(gap);
        if gap <= 0.05 {
            within += 1;
        }
        if g.strategy != e.strategy {
            println!("seed {seed}: greedy {:?} at {:.4} vs optimum {:?} at {:.4} (gap {gap:.4})", g.strategy, g.risk, e.strategy, e.risk);
        }
    }
    let pass = one_matches == 20 && separable_matches == 20 && within >= 45;
    report(
        8,
        pass,
        format!(
            "alg I = enumeration {one_matches}/20, alg II = enumeration on separable {separable_matches}/20, gap <= 5% {within}/50 (need 45), worst gap {worst:.4}"
        ),
    );
    assert!(pass);
}

#[test]
fn c09_adaptive_trajectory() {
    let _g = serial();
    let network = ieee57();
    let config = SimulationConfig::default();
    let baseline = config.failure_model(&network).unwrap();
    let cfg = OptimizerConfig { n0: 5000, eps_bar: 0.1, beta: 0.95, ..Default::default() };
    let (first, set) = procedure_one(&network, &baseline, &config, &cfg, Algorithm::Two, 42).unwrap();
    let (replay, replay_set) = procedure_one(&network, &baseline, &config, &cfg, Algorithm::Two, 42).unwrap();
    let rounds = first.history.len();
    let eps = first.credibility.epsilon_hat.unwrap_or(f64::INFINITY);
    let monotone = first.history.windows(2).all(|w| w[0].n <= w[1].n);
    let identical = first == replay && set.samples == replay_set.samples;
    for r in &first.history {
        println!("round {}: n {} strategy {:?} risk {:.4} eps {:?} required {:?}", r.round, r.n, r.strategy, r.risk, r.epsilon_hat, r.required_n);
    }
    let pass = first.converged && rounds <= 5 && eps <= 0.1 && monotone && identical;
    let sizes: Vec<u64> = first.history.iter().map(|r| r.n).collect();
    report(9, pass, format!("{rounds} rounds (limit 5), sizes {sizes:?}, final eps {eps:.4} (tol 0.1), replay identical {identical}"));
    assert!(pass);
}

#[test]
fn c10_performance() {
    let _g = serial();
    let network = ieee57();
    let config = SimulationConfig::default();
    let baseline = config.failure_model(&network).unwrap();
    let sim = Simulator::new(&network, &baseline, &config).unwrap();
    let timed = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let start = Instant::now();
        let set = pool.install(|| sim.generate(10_000, 5).unwrap());
        (start.elapsed(), set)
    };
    let (serial_time, serial_set) = timed(1);
    let (parallel_time, parallel_set) = timed(8);
    assert_eq!(serial_set.samples, parallel_set.samples);
    let speedup = serial_time.as_secs_f64() / parallel_time.as_secs_f64();

    let (k, n) = (107, 100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let shed: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
    let p: Vec<f64> = (0..k * n).map(|_| rng.random_range(0.5..1.0)).collect();
    let q: Vec<f64> = p.iter().map(|v| v * 0.5).collect();
    let ids = (1..=k as u32).map(BranchId).collect();
    let m = RiskMatrices::new(Arc::new(SurvivalFactors::from_parts(ids, shed, p, q).unwrap()), 0.0);
    let all: Strategy = m.component_ids().iter().copied().collect();
    m.estimate_risk_strategy(&all).unwrap();
    let start = Instant::now();
    let risk = m.estimate_risk_strategy(&all).unwrap();
    let eval = start.elapsed();
    assert!(risk > 0.0);

    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let pass = serial_time < Duration::from_secs(300) && speedup >= 6.0 && eval < Duration::from_millis(50);
    report(
        10,
        pass,
        format!(
            "1e4 samples single-threaded {serial_time:.2?} (limit 300s), 8-worker speedup {speedup:.2}x (need 6x, {cores} cores available), strategy evaluation {eval:.2?} (limit 50ms)"
        ),
    );
    assert!(pass);
}
