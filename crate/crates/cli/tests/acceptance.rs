//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero on any
//! FAIL outside `KNOWN_FAILURES`.
//!
//! The simulation criteria are slow (tens of minutes on one core). Set
//! `CUREMIX_ACCEPTANCE_REPS` to override the replication count of the
//! simulation studies; values below 10 are raised to 10.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use curemix::effects::{cate, mblp, rmst_closed_form, rmst_mc_with_se, threshold_curve};
use curemix::gradients::{block_gradient, finite_diff};
use curemix::model::log_likelihood;
use curemix::sampler::{gumbel_max_bernoulli, iterate, run_chain};
use curemix::selection::stratified_split;
use curemix::simgen::{generate, kaplan_meier};
use curemix::{
    BlockTarget, ChainState, EffectsConfig, LinkSpec, Measure, Parameters, PosteriorDraws, SamplerConfig, Scenario,
    SimConfig,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn reps() -> u64 {
    std::env::var("CUREMIX_ACCEPTANCE_REPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(50)
        .max(10)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// 1. Gradients against central differences.
// ---------------------------------------------------------------------------

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(1.0, f64::max);
    diff / scale
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(7001);
    // [mu, beta, lambda, theta]: configurations touching the block, failures, worst error.
    let mut configs = [0usize; 4];
    let mut failures = [0usize; 4];
    let mut worst = [0.0f64; 4];
    for c in 0..120 {
        let link = if c % 2 == 0 { LinkSpec::Linear } else { LinkSpec::NeuralNet { width: 1 + (c / 2) % 4 } };
        let m = r.random_range(1..=4);
        let g = r.random_range(1..=3);
        let p = r.random_range(1..=3);
        let n = r.random_range(g..=25);
        let data = common::random_data(&mut r, n, g, p, [0.0, 0.3, 0.7, 1.0][c % 4]);
        let params = common::random_params(&mut r, m, g, p, link, 0.7);
        let mut blocks: Vec<BlockTarget> = (0..m).map(BlockTarget::Mu).collect();
        blocks.extend((0..params.beta.len()).map(BlockTarget::BetaRow));
        blocks.extend((0..g).map(BlockTarget::LambdaRow));
        blocks.extend((0..params.theta.len()).map(BlockTarget::ThetaRow));
        let mut touched = [false; 4];
        for target in blocks {
            let (slot, tol) = match target {
                BlockTarget::Mu(_) => (0, 1e-5),
                BlockTarget::BetaRow(_) => (1, 1e-5),
                BlockTarget::LambdaRow(_) => (2, 1e-5),
                BlockTarget::ThetaRow(_) => (3, 1e-4),
            };
            let analytic = block_gradient(&params, link, &data, target).unwrap().value;
            let fd = finite_diff(&params, link, &data, target, 1e-5).unwrap();
            let e = rel_err(&analytic, &fd);
            touched[slot] = true;
            worst[slot] = worst[slot].max(e);
            if !(e < tol) {
                failures[slot] += 1;
            }
        }
        for (slot, t) in touched.iter().enumerate() {
            configs[slot] += *t as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = configs.iter().all(|&c| c >= 50) && failures.iter().all(|&f| f == 0) && secs < 60.0;
    outcome(
        pass,
        format!(
            "configs mu/beta/lambda/theta {configs:?}, failures {failures:?}, worst rel err {:.1e}/{:.1e}/{:.1e}/{:.1e}, {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Likelihood against the direct formula.
// ---------------------------------------------------------------------------

fn likelihood() -> Outcome {
    let mut r = common::rng(7002);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let link = if k % 2 == 0 { LinkSpec::Linear } else { LinkSpec::NeuralNet { width: 2 } };
        let g = 1 + k % 3;
        let data = common::random_data(&mut r, 5, g, 2, 0.5);
        let params = common::random_params(&mut r, 3, g, 2, link, 0.8);
        let got = log_likelihood(&params, link, &data).unwrap();
        worst = worst.max((got - common::naive_loglik(&params, link, &data)).abs());
    }
    outcome(worst < 1e-10, format!("20 five-subject instances, max abs diff {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 3. RMST: Monte Carlo and quadrature.
// ---------------------------------------------------------------------------

fn rmst() -> Outcome {
    let mut r = common::rng(7003);
    let mut worst_z: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    for k in 0..50 {
        let link = if k % 2 == 0 { LinkSpec::Linear } else { LinkSpec::NeuralNet { width: 2 } };
        let params = common::random_params(&mut r, 3, 2, 2, link, 0.8);
        let x: Vec<f64> = std::iter::once(1.0).chain((0..2).map(|_| common::random_normal(&mut r, 1.0))).collect();
        let g = k % 2;
        let h = 0.5 + 9.5 * r.random::<f64>();
        let exact = rmst_closed_form(&params, link, &x, g, h).unwrap();
        let (mc, se) = rmst_mc_with_se(&params, link, &x, g, h, 100_000, 9000 + k as u64).unwrap();
        worst_z = worst_z.max((mc - exact).abs() / se);
        let f = |t: f64| if t <= 0.0 { 1.0 } else { common::naive_survival(&params, link, &x, g, t) };
        worst_quad = worst_quad.max((exact - common::simpson(&f, 0.0, h, 1e-12)).abs());
    }
    outcome(
        worst_z <= 4.0 && worst_quad < 1e-8,
        format!("50 configs, max |mc - exact| = {worst_z:.2} SE, max |closed - quadrature| = {worst_quad:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 4. Prior calibration and acceptance band.
// ---------------------------------------------------------------------------

fn batch_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let size = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

fn prior_calibration() -> Outcome {
    let mut r = common::rng(7004);
    let data = common::random_data(&mut r, 8, 2, 2, 0.5);
    let link = LinkSpec::NeuralNet { width: 2 };
    let mut params = Parameters::zeros(2, 2, 2, link);
    params.gamma = vec![vec![true, false], vec![false, true]];
    params.hyper.var_mu = 2.0;
    params.hyper.var_beta = 0.5;
    params.hyper.var_lambda = 1.5;
    params.hyper.var_theta = 0.8;
    let burn_in = 5000;
    let config = SamplerConfig {
        iterations: burn_in + 100_000,
        burn_in,
        use_likelihood: false,
        update_gamma: false,
        update_hyper: false,
        seed: 7005,
        ..SamplerConfig::default()
    };
    let mut state = ChainState::new(params.clone(), link, &data, vec![vec![0], vec![1]], &config).unwrap();
    let mut targets: Vec<BlockTarget> = (0..2).map(BlockTarget::Mu).collect();
    targets.extend((0..params.beta.len()).map(BlockTarget::BetaRow));
    targets.extend((0..2).map(BlockTarget::LambdaRow));
    targets.extend((0..params.theta.len()).map(BlockTarget::ThetaRow));
    // Every coordinate of every block.
    let dims: Vec<usize> = targets.iter().map(|&t| params.block_values(t).len()).collect();
    let mut trace: Vec<Vec<Vec<f64>>> = dims.iter().map(|&d| vec![Vec::new(); d]).collect();
    for t in 0..config.iterations {
        iterate(&mut state, &data, &config).unwrap();
        if t >= burn_in {
            for (k, &target) in targets.iter().enumerate() {
                for (j, v) in state.params.block_values(target).iter().enumerate() {
                    trace[k][j].push(*v);
                }
            }
        }
    }
    let mut checked = 0;
    let mut misses = Vec::new();
    for (k, &target) in targets.iter().enumerate() {
        let var = params.block_variance(target);
        for (j, xs) in trace[k].iter().enumerate() {
            let (mean, se) = batch_mean_se(xs, 50);
            let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
            let (m2, se2) = batch_mean_se(&sq, 50);
            checked += 1;
            if mean.abs() > 3.0 * se || (m2 - var).abs() > 3.0 * se2 {
                misses.push(format!("{target:?}[{j}]"));
            }
        }
    }
    outcome(
        misses.is_empty(),
        format!("{checked} coordinates over 1e5 iterations, outside 3 SE: {misses:?}"),
    )
}

fn acceptance_band(fits: &[WellSpecifiedFit]) -> Outcome {
    let rates: Vec<f64> = fits.iter().flat_map(|f| f.acceptance.iter().cloned()).collect();
    let inside = rates.iter().filter(|r| (0.45..=0.7).contains(*r)).count();
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        inside == rates.len(),
        format!(
            "{inside}/{} block rates in [0.45, 0.7] over {} well-specified fits (range {lo:.2}..{hi:.2})",
            rates.len(),
            fits.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Gumbel-max against the Bernoulli probability.
// ---------------------------------------------------------------------------

fn gumbel() -> Outcome {
    let mut r = common::rng(7006);
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let p: f64 = 0.05 + 0.9 * r.random::<f64>();
        let ll1 = -50.0 + 10.0 * r.random::<f64>();
        let ll0 = ll1 + 4.0 * (r.random::<f64>() - 0.5);
        let x1 = p.ln() + ll1;
        let x0 = (1.0 - p).ln() + ll0;
        let prob = 1.0 / (1.0 + (x0 - x1).exp());
        let mut draws = common::rng(7100 + k);
        let hits = (0..n).filter(|_| gumbel_max_bernoulli(x1, x0, &mut draws)).count() as f64;
        let se = (prob * (1.0 - prob) / n as f64).sqrt();
        worst = worst.max((hits / n as f64 - prob).abs() / se);
    }
    outcome(worst <= 3.0, format!("10 settings x 1e5 draws, max deviation {worst:.2} SE"))
}

// ---------------------------------------------------------------------------
// 6. Well-specified simulation study.
// ---------------------------------------------------------------------------

const PAIRS: [(usize, usize); 3] = [(1, 0), (2, 0), (2, 1)];
const HORIZON: f64 = 5.0;

struct WellSpecifiedFit {
    mse: [f64; 3],
    acceptance: Vec<f64>,
}

fn study_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig {
        iterations: 12_000,
        burn_in: 7_200,
        thin: 5,
        seed,
        ..SamplerConfig::default()
    }
}

fn well_specified_fit(rep: u64) -> WellSpecifiedFit {
    let sim = SimConfig {
        seed: 100 + rep,
        ..SimConfig::default()
    };
    let (data, truth) = generate(&sim).unwrap();
    let (train, test) = stratified_split(&data, 0.33, rep).unwrap();
    let (train, test) = (data.subset(&train), data.subset(&test));
    let fit = run_chain(&train, LinkSpec::Linear, &study_sampler(rep)).unwrap();
    let effects = EffectsConfig {
        horizon: HORIZON,
        ..EffectsConfig::default()
    };
    let mut mse = [0.0; 3];
    for (k, &(g, r)) in PAIRS.iter().enumerate() {
        let c = cate(&fit.draws, LinkSpec::Linear, &test, g, r, &effects, Measure::Rmst).unwrap();
        let sq: f64 = (0..test.len())
            .map(|i| (c.mean[i] - truth.zeta(test.covariates(i), g, r, HORIZON).unwrap()).powi(2))
            .sum();
        mse[k] = 100.0 * sq / test.len() as f64;
    }
    WellSpecifiedFit {
        mse,
        acceptance: fit.acceptance.iter().map(|a| a.rate).collect(),
    }
}

fn simulation_study(fits: &[WellSpecifiedFit], secs: f64) -> Outcome {
    let bands = [(0.3, 6.0), (0.1, 3.0), (0.3, 6.0)];
    let mut med = [0.0; 3];
    for k in 0..3 {
        let mut v: Vec<f64> = fits.iter().map(|f| f.mse[k]).collect();
        med[k] = median(&mut v);
    }
    let pass = med.iter().zip(bands).all(|(m, (lo, hi))| (lo..=hi).contains(m));
    outcome(
        pass && secs <= 7200.0,
        format!(
            "median MSEx100 z21/z31/z32 = {:.2}/{:.2}/{:.2} (bands [0.3,6]/[0.1,3]/[0.3,6]), {} reps, {secs:.0}s",
            med[0],
            med[1],
            med[2],
            fits.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Thresholding on the misspecified scenario.
// ---------------------------------------------------------------------------

const MISSPECIFIED_REPS: u64 = 10;

/// Index of the covariate that never enters generation (CNS status).
const NULL_PREDICTOR: usize = 4;

fn misspecified_fit(rep: u64) -> PosteriorDraws {
    let sim = SimConfig {
        scenario: Scenario::Misspecified,
        n: 961,
        seed: 500 + rep,
        ..SimConfig::default()
    };
    let (data, _) = generate(&sim).unwrap();
    let config = SamplerConfig {
        iterations: 6_000,
        burn_in: 3_600,
        thin: 5,
        seed: rep,
        ..SamplerConfig::default()
    };
    run_chain(&data, LinkSpec::NeuralNet { width: 4 }, &config).unwrap()
}

fn thresholding(n_reps: u64) -> Outcome {
    let link = LinkSpec::NeuralNet { width: 4 };
    // wins[pair]: replications where the null covariate is at most 0.05 and minimal.
    let mut wins = [0usize; 3];
    let mut null_values: [Vec<f64>; 3] = Default::default();
    for rep in 0..n_reps {
        let sim = SimConfig {
            scenario: Scenario::Misspecified,
            n: 961,
            seed: 500 + rep,
            ..SimConfig::default()
        };
        let (data, _) = generate(&sim).unwrap();
        let fit = misspecified_fit(rep);
        for (k, &(g, r)) in PAIRS.iter().enumerate() {
            let c = cate(&fit.draws, link, &data, g, r, &EffectsConfig::default(), Measure::Rmst).unwrap();
            let s: Vec<f64> = (1..=data.n_predictors())
                .map(|p| threshold_curve(&mblp(&c, &data, p).unwrap(), &[0.40]).unwrap().proportions[0])
                .collect();
            let null = s[NULL_PREDICTOR - 1];
            let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
            if null <= 0.05 && null <= min {
                wins[k] += 1;
            }
            null_values[k].push(null);
        }
    }
    let need = (0.8 * n_reps as f64).ceil() as usize;
    let medians: Vec<String> = null_values.iter_mut().map(|v| format!("{:.2}", median(v))).collect();
    outcome(
        wins.iter().all(|&w| w >= need),
        format!(
            "null covariate minimal with s <= 0.05 in {}/{}/{} of {n_reps} reps for z21/z31/z32 (need {need}); median s = {}",
            wins[0],
            wins[1],
            wins[2],
            medians.join("/")
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Generator contracts.
// ---------------------------------------------------------------------------

fn generator() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for scenario in [Scenario::WellSpecified, Scenario::Misspecified] {
        let cfg = SimConfig {
            scenario,
            n: 10_000,
            seed: 7008,
            ..SimConfig::default()
        };
        let (data, truth) = generate(&cfg).unwrap();
        let over_cap = data.times().iter().filter(|&&t| t > cfg.cap() + 0.01).count();
        let n = truth.cured.len() as f64;
        let cured = truth.cured.iter().filter(|&&c| c).count() as f64 / n;
        let expected = truth.susceptible_prob.iter().map(|s| 1.0 - s).sum::<f64>() / n;
        let se = truth.susceptible_prob.iter().map(|s| s * (1.0 - s)).sum::<f64>().sqrt() / n;
        let z = (cured - expected).abs() / se;
        let small = generate(&SimConfig { n: 961, ..cfg.clone() }).unwrap().0;
        let plateau = (0..3)
            .map(|g| kaplan_meier(&small, g).unwrap().final_value())
            .fold(f64::INFINITY, f64::min);
        pass &= over_cap == 0 && z <= 3.0 && plateau > 0.4;
        notes.push(format!("{scenario:?}: {over_cap} over cap, cure gap {z:.2} SE, min KM plateau {plateau:.2}"));
    }
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 9. CLI determinism across job counts.
// ---------------------------------------------------------------------------

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = fs::read(&path).unwrap();
        if name == "manifest.json" {
            // Wall clock and absolute paths legitimately differ between runs.
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            let o = v.as_object_mut().unwrap();
            o.remove("wall_clock_seconds");
            o.remove("inputs");
            o.remove("config");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let quick = ["--iterations", "200", "--burn-in", "100", "--thin", "4"];
    let mut runs = Vec::new();
    for (label, jobs) in [("a", "1"), ("b", "2"), ("c", "2")] {
        let root = tmp.path().join(label);
        let p = |name: &str| root.join(name).to_string_lossy().into_owned();
        let (sim, fit, sel, eff) = (p("sim"), p("fit"), p("sel"), p("eff"));
        let data = format!("{sim}/data_rep001.csv");
        let draws = format!("{fit}/draws.jsonl");
        let split = format!("{sim}/split_rep001.json");
        let mut commands: Vec<Vec<&str>> = vec![
            vec!["simulate", "--scenario", "misspecified", "--reps", "2", "--n", "60", "--seed", "21", "--out", &sim],
            vec!["fit", "--data", &data, "--link", "nn", "--k", "2", "--seed", "22", "--out", &fit],
            vec!["select-k", "--data", &data, "--grid", "1,2", "--seed", "23", "--out", &sel],
            vec!["effects", "--data", &data, "--draws", &draws, "--split", &split, "--part", "test", "--mc", "--n-mc", "300", "--parts", "2", "--out", &eff],
        ];
        commands[1].extend_from_slice(&quick);
        commands[2].extend_from_slice(&quick);
        let mut codes = Vec::new();
        for cmd in commands.iter_mut() {
            cmd.extend_from_slice(&["--jobs", jobs]);
            let mut argv = vec!["curemix"];
            argv.extend_from_slice(cmd);
            codes.push(curemix_cli::run(argv));
        }
        if codes.iter().any(|&c| c != 0) {
            return outcome(false, format!("run {label} exit codes {codes:?}"));
        }
        runs.push([sim, fit, sel, eff].map(|d| snapshot(Path::new(&d))));
    }
    let names = ["simulate", "fit", "select-k", "effects"];
    let mut differing = Vec::new();
    for other in &runs[1..] {
        for (k, (a, b)) in runs[0].iter().zip(other).enumerate() {
            if a != b {
                differing.push(names[k]);
            }
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "simulate, fit, select-k and effects byte-identical over three runs (jobs 1, 2, 2)".to_string()
        } else {
            format!("outputs differ for {differing:?}")
        },
    )
}

/// Criteria that fail at faithful settings (see README). They still print
/// FAIL; `CUREMIX_ACCEPTANCE_STRICT=1` makes them fatal too.
const KNOWN_FAILURES: [u32; 3] = [4, 6, 7];

fn main() {
    let n_reps = reps();
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("{} criterion {n}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, gradients());
    report(2, likelihood());
    report(3, rmst());
    report(5, gumbel());
    report(8, generator());
    report(9, determinism());
    let calibration = prior_calibration();
    let start = Instant::now();
    let fits: Vec<WellSpecifiedFit> = (0..n_reps).map(well_specified_fit).collect();
    let secs = start.elapsed().as_secs_f64();
    let band = acceptance_band(&fits);
    report(
        4,
        outcome(
            calibration.pass && band.pass,
            format!("prior: {}; band: {}", calibration.detail, band.detail),
        ),
    );
    report(6, simulation_study(&fits, secs));
    report(7, thresholding(MISSPECIFIED_REPS));
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    let strict = std::env::var("CUREMIX_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let unexpected: Vec<u32> = failed
        .iter()
        .copied()
        .filter(|n| strict || !KNOWN_FAILURES.contains(n))
        .collect();
    for n in KNOWN_FAILURES.iter().filter(|n| !failed.contains(n)) {
        println!("note: criterion {n} is listed as a known failure but passed");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
