//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use curemix::effects::{self, SurvivalCurves};
use curemix::{
    sampler, selection, simgen, CateResult, EffectsConfig, LinkSpec, Measure, PosteriorDraws, SamplerConfig, Scenario,
    SurvivalDataset,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FileConfig, LinkKind};
use crate::error::{CliError, CliResult};
use crate::io::{self, RunManifest};

/// Held-out split of one dataset, one-based subject indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub test_fraction: f64,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Test,
}

pub fn link_spec(kind: LinkKind, k: usize) -> CliResult<LinkSpec> {
    let link = match kind {
        LinkKind::Linear => LinkSpec::Linear,
        LinkKind::Nn => LinkSpec::NeuralNet { width: k },
    };
    link.validate()?;
    Ok(link)
}

pub fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configuration serializes")
}

fn finish_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    mut outputs: Vec<String>,
    start: Instant,
) -> CliResult<()> {
    outputs.sort();
    io::write_manifest(
        dir,
        &RunManifest {
            command: command.into(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs,
            outputs,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
    )
}

/// Loads a dataset and optionally restricts it to one side of a split.
pub fn load_data(
    path: &Path,
    n_groups: Option<usize>,
    flip_censor: bool,
    split: Option<(&Path, Part)>,
) -> CliResult<SurvivalDataset> {
    let data = io::read_dataset(path, n_groups, flip_censor)?;
    let Some((split_path, part)) = split else {
        return Ok(data);
    };
    let s: SplitFile = io::read_json(split_path)?;
    let idx = match part {
        Part::Train => &s.train,
        Part::Test => &s.test,
    };
    if idx.iter().any(|&i| i == 0 || i > data.len()) {
        return Err(CliError::Data(format!(
            "{}: subject index outside 1..={}",
            split_path.display(),
            data.len()
        )));
    }
    let zero: Vec<usize> = idx.iter().map(|i| i - 1).collect();
    Ok(data.subset(&zero))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub struct SimulateRequest {
    pub config: FileConfig,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub covariates: Option<PathBuf>,
    pub components: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateSnapshot<'a> {
    sim: &'a curemix::SimConfig,
    simulate: &'a crate::config::SimulateOptions,
    covariates: Option<&'a PathBuf>,
    components: Option<&'a PathBuf>,
}

pub fn simulate(req: SimulateRequest) -> CliResult<()> {
    let start = Instant::now();
    let sim = &req.config.sim;
    let opts = &req.config.simulate;
    sim.validate()?;
    if opts.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(CliError::Usage("test fraction must lie in (0, 1)".into()));
    }
    let covariates = match &req.covariates {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            simgen::CovariateTable::from_csv(&text)?
        }
        None => simgen::CovariateTable::bundled(),
    };
    let components = match &req.components {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            simgen::ComponentTable::from_json(&text)?
        }
        None => simgen::ComponentTable::bundled(),
    };
    io::ensure_dir(&req.out)?;
    let pool = thread_pool(req.jobs)?;
    let results: Vec<CliResult<Vec<String>>> = pool.install(|| {
        (0..opts.reps)
            .into_par_iter()
            .map(|rep| {
                let cfg = curemix::SimConfig {
                    seed: sim.seed.wrapping_add(rep as u64),
                    ..sim.clone()
                };
                let (data, truth) = match cfg.scenario {
                    Scenario::WellSpecified => simgen::generate_well_specified(&cfg)?,
                    Scenario::Misspecified => simgen::generate_misspecified(&cfg, &covariates, &components)?,
                };
                let (train, test) = selection::stratified_split(&data, opts.test_fraction, cfg.seed)?;
                let split = SplitFile {
                    test_fraction: opts.test_fraction,
                    seed: cfg.seed,
                    train: train.iter().map(|i| i + 1).collect(),
                    test: test.iter().map(|i| i + 1).collect(),
                };
                let names = [
                    format!("data_rep{rep:03}.csv"),
                    format!("truth_rep{rep:03}.json"),
                    format!("split_rep{rep:03}.json"),
                ];
                io::write_dataset(&req.out.join(&names[0]), &data)?;
                io::write_json(&req.out.join(&names[1]), &truth)?;
                io::write_json(&req.out.join(&names[2]), &split)?;
                Ok(names.to_vec())
            })
            .collect()
    });
    let mut outputs = Vec::new();
    for r in results {
        outputs.extend(r?);
    }
    let snapshot = SimulateSnapshot {
        sim,
        simulate: opts,
        covariates: req.covariates.as_ref(),
        components: req.components.as_ref(),
    };
    let mut inputs = Vec::new();
    inputs.extend(req.covariates.clone());
    inputs.extend(req.components.clone());
    finish_manifest(&req.out, "simulate", sim.seed, to_value(&snapshot), inputs, outputs, start)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

pub struct DataSource {
    pub path: PathBuf,
    pub n_groups: Option<usize>,
    pub flip_censor: bool,
    pub split: Option<(PathBuf, Part)>,
}

impl DataSource {
    pub fn load(&self) -> CliResult<SurvivalDataset> {
        load_data(
            &self.path,
            self.n_groups,
            self.flip_censor,
            self.split.as_ref().map(|(p, part)| (p.as_path(), *part)),
        )
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.path.clone()];
        if let Some((p, _)) = &self.split {
            v.push(p.clone());
        }
        v
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "path": self.path,
            "n_groups": self.n_groups,
            "flip_censor": self.flip_censor,
            "split": self.split.as_ref().map(|(p, part)| serde_json::json!({"path": p, "part": part})),
        })
    }
}

pub struct FitRequest {
    pub config: FileConfig,
    pub data: DataSource,
    pub out: PathBuf,
}

/// Post-burn-in acceptance of one block with a band check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub block: String,
    pub step: f64,
    pub rate: Option<f64>,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub band: (f64, f64),
    pub blocks: Vec<AcceptanceRow>,
    pub all_in_band: bool,
}

pub fn acceptance_report(draws: &PosteriorDraws, sampler: &SamplerConfig) -> AcceptanceReport {
    let band = (sampler.accept_low, sampler.accept_high);
    let blocks: Vec<AcceptanceRow> = draws
        .acceptance
        .iter()
        .map(|a| {
            let rate = a.rate.is_finite().then_some(a.rate);
            AcceptanceRow {
                block: format!("{:?}", a.target),
                step: a.step,
                rate,
                in_band: rate.is_some_and(|r| r >= band.0 && r <= band.1),
            }
        })
        .collect();
    let all_in_band = blocks.iter().all(|b| b.in_band);
    AcceptanceReport {
        band,
        blocks,
        all_in_band,
    }
}

pub fn fit(req: FitRequest) -> CliResult<()> {
    let start = Instant::now();
    let data = req.data.load()?;
    let cfg = &req.config;
    cfg.sampler.validate()?;
    let link = link_spec(cfg.fit.link, cfg.fit.k)?;
    let m = if cfg.fit.m_per_group.is_empty() {
        sampler::select_m_per_group(&data, cfg.sampler.max_components)?
    } else {
        cfg.fit.m_per_group.clone()
    };
    let draws = sampler::run_chain_with_counts(&data, link, &cfg.sampler, &m)?;
    io::ensure_dir(&req.out)?;
    io::write_draws(&req.out.join("draws.jsonl"), &draws, data.n_predictors())?;
    let report = acceptance_report(&draws, &cfg.sampler);
    for b in report.blocks.iter().filter(|b| !b.in_band) {
        log::warn!("block {} post-burn-in acceptance {:?} outside the band", b.block, b.rate);
    }
    io::write_json(&req.out.join("acceptance.json"), &report)?;
    let snapshot = serde_json::json!({
        "sampler": cfg.sampler,
        "fit": cfg.fit,
        "data": req.data.snapshot(),
    });
    finish_manifest(
        &req.out,
        "fit",
        cfg.sampler.seed,
        snapshot,
        req.data.inputs(),
        vec!["draws.jsonl".into(), "acceptance.json".into()],
        start,
    )
}

// ---------------------------------------------------------------------------
// select-k
// ---------------------------------------------------------------------------

pub struct SelectRequest {
    pub config: FileConfig,
    pub data: DataSource,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

pub fn select_k(req: SelectRequest) -> CliResult<()> {
    let start = Instant::now();
    let data = req.data.load()?;
    let cfg = &req.config;
    let pool = thread_pool(req.jobs)?;
    let report = pool.install(|| selection::select_k(&data, &cfg.select.grid, &cfg.sampler, cfg.select.test_fraction))?;
    if report.loglik.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(CliError::Numerical("every candidate width failed to fit".into()));
    }
    io::ensure_dir(&req.out)?;
    // -inf does not survive JSON; failed candidates are written as null.
    let json = serde_json::json!({
        "candidates": report.candidates,
        "loglik": report.loglik.iter().map(|v| v.is_finite().then_some(*v)).collect::<Vec<_>>(),
        "chosen": report.chosen,
        "train": report.train.iter().map(|i| i + 1).collect::<Vec<_>>(),
        "test": report.test.iter().map(|i| i + 1).collect::<Vec<_>>(),
        "seed": report.seed,
        "failures": report.failures,
    });
    io::write_json(&req.out.join("report.json"), &json)?;
    let snapshot = serde_json::json!({
        "sampler": cfg.sampler,
        "select": cfg.select,
        "data": req.data.snapshot(),
    });
    finish_manifest(
        &req.out,
        "select-k",
        cfg.sampler.seed,
        snapshot,
        req.data.inputs(),
        vec!["report.json".into()],
        start,
    )
}

// ---------------------------------------------------------------------------
// effects
// ---------------------------------------------------------------------------

pub struct EffectsRequest {
    pub config: FileConfig,
    pub draws: PathBuf,
    pub data: DataSource,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

fn measure_tag(m: Measure) -> &'static str {
    match m {
        Measure::Rmst => "rmst",
        Measure::SurvivalProb => "surv",
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NA".into()
    }
}

/// CATE columns restricted to the listed subjects.
fn restrict(result: &CateResult, idx: &[usize]) -> CateResult {
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    CateResult {
        group: result.group,
        reference: result.reference,
        measure: result.measure,
        horizon: result.horizon,
        values: result.values.iter().map(|row| pick(row)).collect(),
        mean: pick(&result.mean),
        lower: pick(&result.lower),
        upper: pick(&result.upper),
    }
}

struct PairTables {
    cate: String,
    mblp: String,
    thresholds: String,
}

fn pair_tables(
    result: &CateResult,
    data: &SurvivalDataset,
    labels: &[usize],
    n_parts: usize,
    thresholds: &[f64],
) -> CliResult<PairTables> {
    let tag = measure_tag(result.measure);
    let (g, r) = (result.group + 1, result.reference + 1);
    let mut cate = String::from("subject,mean,lower,upper\n");
    for i in 0..result.mean.len() {
        let _ = writeln!(
            cate,
            "{},{},{},{}",
            i + 1,
            num(result.mean[i]),
            num(result.lower[i]),
            num(result.upper[i])
        );
    }
    let p = data.n_predictors();
    let mut mblp_rows = String::new();
    let mut thr_rows = String::new();
    let mut scopes: Vec<(String, Vec<usize>)> = vec![("all".into(), (0..data.len()).collect())];
    if n_parts > 1 {
        for k in 0..n_parts {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == k).collect();
            scopes.push((format!("part{}", k + 1), idx));
        }
    }
    for (scope, idx) in &scopes {
        let (sub_result, sub_data) = if idx.len() == data.len() {
            (result.clone(), data.clone())
        } else {
            (restrict(result, idx), data.subset(idx))
        };
        let mut props: Vec<Vec<f64>> = Vec::with_capacity(p);
        for j in 1..=p {
            match effects::mblp(&sub_result, &sub_data, j) {
                Ok(fit) => {
                    let _ = writeln!(
                        mblp_rows,
                        "{tag},{g},{r},{scope},x{j},{},{},{},{},{},{}",
                        num(fit.intercept_mean),
                        num(fit.intercept_interval.0),
                        num(fit.intercept_interval.1),
                        num(fit.slope_mean),
                        num(fit.slope_interval.0),
                        num(fit.slope_interval.1)
                    );
                    props.push(effects::threshold_curve(&fit, thresholds)?.proportions);
                }
                Err(curemix::Error::Data(msg)) => {
                    log::warn!("{scope}: MBLP for x{j} skipped: {msg}");
                    let _ = writeln!(mblp_rows, "{tag},{g},{r},{scope},x{j},NA,NA,NA,NA,NA,NA");
                    props.push(vec![f64::NAN; thresholds.len()]);
                }
                Err(e) => return Err(e.into()),
            }
        }
        for (k, t) in thresholds.iter().enumerate() {
            let _ = write!(thr_rows, "{tag},{g},{r},{scope},{t:.2}");
            for col in &props {
                let _ = write!(thr_rows, ",{}", if col[k].is_nan() { "NA".into() } else { format!("{:.4}", col[k]) });
            }
            thr_rows.push('\n');
        }
    }
    Ok(PairTables {
        cate,
        mblp: mblp_rows,
        thresholds: thr_rows,
    })
}

fn survival_rows(curves: &SurvivalCurves, scope_names: &dyn Fn(usize) -> String) -> String {
    let mut out = String::new();
    for (s, row) in curves.strata.iter().zip(&curves.curves) {
        for (t, v) in curves.t_grid.iter().zip(row) {
            let _ = writeln!(out, "{},{},{},{}", curves.group + 1, scope_names(*s), num(*t), num(*v));
        }
    }
    out
}

pub fn effects(req: EffectsRequest) -> CliResult<()> {
    let start = Instant::now();
    let data = req.data.load()?;
    let (header, draws) = io::read_draws(&req.draws)?;
    if header.n_predictors != data.n_predictors() {
        return Err(CliError::Data(format!(
            "draws use {} predictors, dataset has {}",
            header.n_predictors,
            data.n_predictors()
        )));
    }
    if header.n_groups != data.n_groups() {
        return Err(CliError::Data(format!(
            "draws use {} groups, dataset has {}",
            header.n_groups,
            data.n_groups()
        )));
    }
    if draws.is_empty() {
        return Err(CliError::Data("draws file holds no draws".into()));
    }
    let cfg = &req.config;
    let ec: &EffectsConfig = &cfg.effects;
    ec.validate()?;
    let rep = &cfg.report;
    let g_count = data.n_groups();
    for [g, r] in &rep.pairs {
        if *g == 0 || *r == 0 || *g > g_count || *r > g_count {
            return Err(CliError::Usage(format!("pair {g}:{r} outside groups 1..={g_count}")));
        }
        if g == r {
            return Err(CliError::Usage(format!("pair {g}:{r} compares a group with itself")));
        }
    }
    if rep.thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::Usage("thresholds must be sorted ascending".into()));
    }
    let n_parts = ec.n_parts.min(data.len());
    let labels = effects::partition_subjects(&data, n_parts, ec.seed)?;
    let jobs: Vec<(Measure, usize, usize)> = rep
        .measures
        .iter()
        .flat_map(|&m| rep.pairs.iter().map(move |[g, r]| (m, g - 1, r - 1)))
        .collect();
    let pool = thread_pool(req.jobs)?;
    let link = draws.link;
    let tables: Vec<CliResult<((Measure, usize, usize), PairTables)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, g, r)| {
                let res = effects::cate(&draws.draws, link, &data, g, r, ec, m)?;
                Ok(((m, g, r), pair_tables(&res, &data, &labels, n_parts, &rep.thresholds)?))
            })
            .collect()
    });
    io::ensure_dir(&req.out)?;
    let p = data.n_predictors();
    let mut outputs = Vec::new();
    let mut mblp = String::from(
        "measure,group,reference,scope,predictor,intercept_mean,intercept_lower,intercept_upper,slope_mean,slope_lower,slope_upper\n",
    );
    let mut thr = String::from("measure,group,reference,scope,threshold");
    for j in 1..=p {
        let _ = write!(thr, ",x{j}");
    }
    thr.push('\n');
    for t in tables {
        let ((m, g, r), tab) = t?;
        let name = format!("cate_{}_{}_{}.csv", measure_tag(m), g + 1, r + 1);
        io::write_atomic(&req.out.join(&name), tab.cate.as_bytes())?;
        outputs.push(name);
        mblp.push_str(&tab.mblp);
        thr.push_str(&tab.thresholds);
    }
    io::write_atomic(&req.out.join("mblp.csv"), mblp.as_bytes())?;
    io::write_atomic(&req.out.join("thresholds.csv"), thr.as_bytes())?;
    outputs.push("mblp.csv".into());
    outputs.push("thresholds.csv".into());

    let mut surv = String::from("group,scope,time,survival\n");
    let grids: Vec<CliResult<String>> = pool.install(|| {
        (0..g_count)
            .into_par_iter()
            .map(|g| {
                let all = effects::survival_curve_grid(&draws.draws, link, &data, g, &rep.times, None)?;
                let mut s = survival_rows(&all, &|_| "all".into());
                if n_parts > 1 {
                    let parts = effects::survival_curve_grid(&draws.draws, link, &data, g, &rep.times, Some(&labels))?;
                    s.push_str(&survival_rows(&parts, &|k| format!("part{}", k + 1)));
                }
                Ok(s)
            })
            .collect()
    });
    for s in grids {
        surv.push_str(&s?);
    }
    io::write_atomic(&req.out.join("survival_grid.csv"), surv.as_bytes())?;
    outputs.push("survival_grid.csv".into());
    let mut part_csv = String::from("subject,partition\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(part_csv, "{},{}", i + 1, l + 1);
    }
    io::write_atomic(&req.out.join("partitions.csv"), part_csv.as_bytes())?;
    outputs.push("partitions.csv".into());

    let snapshot = serde_json::json!({
        "effects": ec,
        "report": rep,
        "draws": req.draws,
        "data": req.data.snapshot(),
    });
    let mut inputs = req.data.inputs();
    inputs.push(req.draws.clone());
    finish_manifest(&req.out, "effects", ec.seed, snapshot, inputs, outputs, start)
}
