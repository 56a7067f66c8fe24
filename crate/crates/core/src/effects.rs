//! Treatment-effect functionals of posterior draws.
//!
//! Restricted mean survival time (RMST) and survival probability at a
//! horizon per arm, their between-arm contrasts (CATEs), per-draw marginal
//! best linear projections of a CATE onto single covariates, the threshold
//! exceedance curves built from those slopes, covariate partitions and
//! stratified survival curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::data::SurvivalDataset;
use crate::diagnostics::{mean, quantile_sorted};
use crate::error::{Error, Result};
use crate::model::{self, LinkSpec, Parameters};
use crate::special::norm_cdf;

/// Outcome scale of a treatment contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Difference in E[min(T, h)].
    Rmst,
    /// Difference in P(T > h).
    SurvivalProb,
}

/// Settings for effect computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectsConfig {
    pub horizon: f64,
    /// Monte-Carlo sample count per component.
    pub n_mc: usize,
    pub seed: u64,
    pub n_parts: usize,
    /// Use the Monte-Carlo estimators instead of the closed forms.
    pub use_mc: bool,
}

impl Default for EffectsConfig {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            n_mc: 100_000,
            seed: 1,
            n_parts: 4,
            use_mc: false,
        }
    }
}

impl EffectsConfig {
    pub fn validate(&self) -> Result<()> {
        check_horizon(self.horizon)?;
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        if self.n_parts == 0 {
            return Err(Error::Config("partition count must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_horizon(h: f64) -> Result<()> {
    if !(h > 0.0) || h.is_nan() {
        return Err(Error::Domain(format!("horizon must be positive, got {h}")));
    }
    Ok(())
}

/// `E[min(T, h)]` for `T ~ LogNormal(μ, σ)`.
pub fn lognormal_truncated_mean(mu: f64, sigma: f64, h: f64) -> f64 {
    if h == f64::INFINITY {
        return (mu + 0.5 * sigma * sigma).exp();
    }
    let lh = h.ln();
    let partial = (mu + 0.5 * sigma * sigma).exp() * norm_cdf((lh - mu - sigma * sigma) / sigma);
    partial + h * norm_cdf(-(lh - mu) / sigma)
}

/// RMST of a cure mixture with component log-means `mu`.
pub fn rmst_from_parts(cure: f64, weights: &[f64], mu: &[f64], sigma: &[f64], h: f64) -> f64 {
    let susceptible: f64 = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(m, &w)| w * lognormal_truncated_mean(mu[m], sigma[m], h))
        .sum();
    if cure == 1.0 {
        return h;
    }
    cure * h + (1.0 - cure) * susceptible
}

/// `P(T > h)` of a cure mixture with component log-means `mu`.
pub fn survival_from_parts(cure: f64, weights: &[f64], mu: &[f64], sigma: &[f64], h: f64) -> f64 {
    let lh = h.ln();
    let su: f64 = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(m, &w)| w * norm_cdf(-(lh - mu[m]) / sigma[m]))
        .sum();
    cure + (1.0 - cure) * su.min(1.0)
}

/// Closed-form RMST `∫₀ʰ S_g(t | x) dt` via log-normal partial expectations.
pub fn rmst_closed_form(draw: &Parameters, link: LinkSpec, x: &[f64], g: usize, h: f64) -> Result<f64> {
    check_horizon(h)?;
    let v = model::arm_view(draw, link, x, g)?;
    Ok(rmst_from_parts(v.cure, &v.weights, &draw.mu, &draw.sigma, h))
}

/// Monte-Carlo RMST with `n_mc` log-normal samples per active component,
/// together with its standard error.
pub fn rmst_mc_with_se(
    draw: &Parameters,
    link: LinkSpec,
    x: &[f64],
    g: usize,
    h: f64,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_horizon(h)?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let v = model::arm_view(draw, link, x, g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = 0.0;
    let mut var = 0.0;
    for (m, &w) in v.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..n_mc {
            let z: f64 = StandardNormal.sample(&mut rng);
            let t = (draw.mu[m] + draw.sigma[m] * z).exp().min(h);
            s += t;
            ss += t * t;
        }
        let n = n_mc as f64;
        let mean_m = s / n;
        let var_m = if n_mc > 1 { (ss - n * mean_m * mean_m) / (n - 1.0) } else { 0.0 };
        est += w * mean_m;
        var += w * w * var_m.max(0.0) / n;
    }
    let r = 1.0 - v.cure;
    Ok((v.cure * h + r * est, r * var.sqrt()))
}

/// Monte-Carlo RMST (deterministic given `seed`).
pub fn rmst_mc(draw: &Parameters, link: LinkSpec, x: &[f64], g: usize, h: f64, n_mc: usize, seed: u64) -> Result<f64> {
    Ok(rmst_mc_with_se(draw, link, x, g, h, n_mc, seed)?.0)
}

/// Exact survival probability at the horizon.
pub fn survival_at_horizon(draw: &Parameters, link: LinkSpec, x: &[f64], g: usize, h: f64) -> Result<f64> {
    check_horizon(h)?;
    model::survival_population(draw, link, x, g, h)
}

/// Monte-Carlo survival probability at the horizon and its standard error.
pub fn survival_at_horizon_mc(
    draw: &Parameters,
    link: LinkSpec,
    x: &[f64],
    g: usize,
    h: f64,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_horizon(h)?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let v = model::arm_view(draw, link, x, g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lh = h.ln();
    let (mut est, mut var) = (0.0, 0.0);
    for (m, &w) in v.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut hits = 0usize;
        for _ in 0..n_mc {
            let z: f64 = StandardNormal.sample(&mut rng);
            if draw.mu[m] + draw.sigma[m] * z > lh {
                hits += 1;
            }
        }
        let q = hits as f64 / n_mc as f64;
        est += w * q;
        var += w * w * q * (1.0 - q) / n_mc as f64;
    }
    let r = 1.0 - v.cure;
    Ok((v.cure + r * est, r * var.sqrt()))
}

fn measure_value(draw: &Parameters, link: LinkSpec, x: &[f64], g: usize, config: &EffectsConfig, measure: Measure, seed: u64) -> Result<f64> {
    let h = config.horizon;
    match (measure, config.use_mc) {
        (Measure::Rmst, false) => rmst_closed_form(draw, link, x, g, h),
        (Measure::Rmst, true) => rmst_mc(draw, link, x, g, h, config.n_mc, seed),
        (Measure::SurvivalProb, false) => survival_at_horizon(draw, link, x, g, h),
        (Measure::SurvivalProb, true) => Ok(survival_at_horizon_mc(draw, link, x, g, h, config.n_mc, seed)?.0),
    }
}

/// Per-draw, per-subject treatment contrasts with posterior summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateResult {
    pub group: usize,
    pub reference: usize,
    pub measure: Measure,
    pub horizon: f64,
    /// `values[b][i]`: contrast for draw b and subject i.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Posterior mean and equal-tailed 95% interval of each column.
fn column_summaries(values: &[Vec<f64>], n_cols: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut mean_v = Vec::with_capacity(n_cols);
    let mut lower = Vec::with_capacity(n_cols);
    let mut upper = Vec::with_capacity(n_cols);
    for i in 0..n_cols {
        let mut col: Vec<f64> = values.iter().map(|row| row[i]).collect();
        mean_v.push(mean(&col));
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
    }
    (mean_v, lower, upper)
}

/// Contrast of arm `g` against arm `reference` without requiring the two
/// to differ; [`cate`] is the checked entry point.
pub fn contrast(
    draws: &[Parameters],
    link: LinkSpec,
    data: &SurvivalDataset,
    g: usize,
    reference: usize,
    config: &EffectsConfig,
    measure: Measure,
) -> Result<CateResult> {
    config.validate()?;
    if draws.is_empty() {
        return Err(Error::Config("no posterior draws".into()));
    }
    let n_groups = draws[0].n_groups();
    for (name, v) in [("group", g), ("reference group", reference)] {
        if v >= n_groups {
            return Err(Error::Config(format!("{name} {} outside 1..={n_groups}", v + 1)));
        }
    }
    let mut values = Vec::with_capacity(draws.len());
    for (b, draw) in draws.iter().enumerate() {
        let mut row = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let x = data.covariates(i);
            // Common random numbers across the two arms keep MC contrasts antisymmetric.
            let seed = config.seed.wrapping_add((b * data.len() + i) as u64);
            let a = measure_value(draw, link, x, g, config, measure, seed)?;
            let r = measure_value(draw, link, x, reference, config, measure, seed)?;
            row.push(a - r);
        }
        values.push(row);
    }
    let (mean_v, lower, upper) = column_summaries(&values, data.len());
    Ok(CateResult {
        group: g,
        reference,
        measure,
        horizon: config.horizon,
        values,
        mean: mean_v,
        lower,
        upper,
    })
}

/// Conditional average treatment effect of arm `g` versus `reference` at
/// each subject's covariates.
pub fn cate(
    draws: &[Parameters],
    link: LinkSpec,
    data: &SurvivalDataset,
    g: usize,
    reference: usize,
    config: &EffectsConfig,
    measure: Measure,
) -> Result<CateResult> {
    if g == reference {
        return Err(Error::Config(format!("contrast needs two different groups, got {} twice", g + 1)));
    }
    contrast(draws, link, data, g, reference, config, measure)
}

/// Per-draw univariate projections of a CATE onto one predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MblpResult {
    /// 1-based predictor index (column of the covariate matrix).
    pub predictor: usize,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercept_mean: f64,
    pub intercept_interval: (f64, f64),
    pub slope_mean: f64,
    pub slope_interval: (f64, f64),
}

/// Least-squares fit of each draw's CATE vector on `(1, x_p)`.
pub fn mblp(result: &CateResult, data: &SurvivalDataset, p: usize) -> Result<MblpResult> {
    if p == 0 || p > data.n_predictors() {
        return Err(Error::Config(format!("predictor x{p} outside 1..={}", data.n_predictors())));
    }
    let x = data.predictor_column(p);
    if x.is_empty() {
        return Err(Error::Data("no subjects".into()));
    }
    let xbar = mean(&x);
    let sxx: f64 = x.iter().map(|v| (v - xbar) * (v - xbar)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Data(format!("predictor x{p} is constant; slope undefined")));
    }
    let mut intercepts = Vec::with_capacity(result.values.len());
    let mut slopes = Vec::with_capacity(result.values.len());
    for row in &result.values {
        if row.len() != x.len() {
            return Err(Error::Config("CATE result does not match dataset size".into()));
        }
        let ybar = mean(row);
        let sxy: f64 = x.iter().zip(row).map(|(a, b)| (a - xbar) * (b - ybar)).sum();
        let slope = sxy / sxx;
        slopes.push(slope);
        intercepts.push(ybar - slope * xbar);
    }
    let summary = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        (mean(v), (quantile_sorted(&s, 0.025), quantile_sorted(&s, 0.975)))
    };
    let (intercept_mean, intercept_interval) = summary(&intercepts);
    let (slope_mean, slope_interval) = summary(&slopes);
    Ok(MblpResult {
        predictor: p,
        intercepts,
        slopes,
        intercept_mean,
        intercept_interval,
        slope_mean,
        slope_interval,
    })
}

/// Proportion of posterior slopes with `|slope| > t` over a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub predictor: usize,
    pub thresholds: Vec<f64>,
    pub proportions: Vec<f64>,
}

pub fn threshold_curve(result: &MblpResult, t_grid: &[f64]) -> Result<ThresholdCurve> {
    if t_grid.windows(2).any(|w| w[0] > w[1]) || t_grid.iter().any(|t| t.is_nan()) {
        return Err(Error::Config("threshold grid must be sorted ascending".into()));
    }
    let b = result.slopes.len() as f64;
    let proportions = t_grid
        .iter()
        .map(|&t| result.slopes.iter().filter(|s| s.abs() > t).count() as f64 / b)
        .collect();
    Ok(ThresholdCurve {
        predictor: result.predictor,
        thresholds: t_grid.to_vec(),
        proportions,
    })
}

/// k-means labels (0-based, every part nonempty) on z-scored predictors.
pub fn partition_subjects(data: &SurvivalDataset, n_parts: usize, seed: u64) -> Result<Vec<usize>> {
    if n_parts == 0 || n_parts > data.len() {
        return Err(Error::Config(format!(
            "cannot split {} subjects into {n_parts} partitions",
            data.len()
        )));
    }
    if n_parts == 1 {
        return Ok(vec![0; data.len()]);
    }
    let p = data.n_predictors();
    let mut cols = Vec::with_capacity(p);
    for j in 1..=p {
        let c = data.predictor_column(j);
        let m = mean(&c);
        let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64).sqrt();
        cols.push(c.into_iter().map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 }).collect::<Vec<_>>());
    }
    let points: Vec<Vec<f64>> = (0..data.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Ok(cluster::kmeans(&points, n_parts, 10, seed)?.labels)
}

/// Posterior-mean population survival curves averaged within strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurves {
    pub group: usize,
    pub t_grid: Vec<f64>,
    /// Stratum label of each row of `curves`, ascending.
    pub strata: Vec<usize>,
    pub curves: Vec<Vec<f64>>,
}

/// For every subject, the posterior mean of `S_g(t | x_i)` on `t_grid`,
/// averaged over the subjects of each stratum. `strata` gives one label per
/// subject; `None` puts everyone in stratum 0.
pub fn survival_curve_grid(
    draws: &[Parameters],
    link: LinkSpec,
    data: &SurvivalDataset,
    g: usize,
    t_grid: &[f64],
    strata: Option<&[usize]>,
) -> Result<SurvivalCurves> {
    if draws.is_empty() {
        return Err(Error::Config("no posterior draws".into()));
    }
    if t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("time grid must be positive and sorted".into()));
    }
    let labels: Vec<usize> = match strata {
        Some(s) if s.len() != data.len() => {
            return Err(Error::Config("one stratum label per subject is required".into()));
        }
        Some(s) => s.to_vec(),
        None => vec![0; data.len()],
    };
    let mut distinct = labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let mut sums = vec![vec![0.0; t_grid.len()]; distinct.len()];
    let mut counts = vec![0usize; distinct.len()];
    for i in 0..data.len() {
        let s = distinct.binary_search(&labels[i]).expect("label present");
        counts[s] += 1;
        let x = data.covariates(i);
        for draw in draws {
            let v = model::arm_view(draw, link, x, g)?;
            for (k, &t) in t_grid.iter().enumerate() {
                let su = model::susceptible_from_weights(draw, &v.weights, t);
                sums[s][k] += v.cure + (1.0 - v.cure) * su;
            }
        }
    }
    let b = draws.len() as f64;
    let curves = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &c)| row.into_iter().map(|v| v / (b * c as f64)).collect())
        .collect();
    Ok(SurvivalCurves {
        group: g,
        t_grid: t_grid.to_vec(),
        strata: distinct,
        curves,
    })
}
