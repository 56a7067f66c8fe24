//! Choice of the hidden-layer width by held-out predictive log-likelihood.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::model::{self, LinkSpec, Parameters};
use crate::sampler::{self, SamplerConfig};

/// Outcome of a width search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub candidates: Vec<usize>,
    /// Predictive log-likelihood per candidate; `-inf` marks a failed fit.
    pub loglik: Vec<f64>,
    pub chosen: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Error message per candidate whose fit failed.
    pub failures: Vec<Option<String>>,
}

/// Average over draws of the test-set log-likelihood (each subject under
/// its assigned arm).
pub fn predictive_loglik(draws: &[Parameters], link: LinkSpec, test: &SurvivalDataset) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Config("no posterior draws".into()));
    }
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let mut total = 0.0;
    for d in draws {
        total += model::log_likelihood(d, link, test)?;
    }
    Ok(total / draws.len() as f64)
}

/// Per-arm random split; each arm with at least two subjects contributes to
/// both parts. Returns sorted (train, test) index lists.
pub fn stratified_split(data: &SurvivalDataset, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for g in 0..data.n_groups() {
        let mut members = data.members(g).to_vec();
        members.shuffle(&mut rng);
        let n = members.len();
        let mut n_test = (n as f64 * test_fraction).round() as usize;
        if n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        } else {
            n_test = 0;
        }
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn fit_and_score(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    k: usize,
    m_per_group: &[usize],
    config: &SamplerConfig,
) -> Result<f64> {
    let link = LinkSpec::NeuralNet { width: k };
    let draws = sampler::run_chain_with_counts(train, link, config, m_per_group)?;
    predictive_loglik(&draws.draws, link, test)
}

/// Index of the largest value; the first (smallest-K) index wins ties.
fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fits the neural-net model for every width in `k_grid` on a stratified
/// training split and scores the held-out part. Fits run in parallel on the
/// current rayon pool; the result does not depend on the pool size.
pub fn select_k(
    data: &SurvivalDataset,
    k_grid: &[usize],
    config: &SamplerConfig,
    test_fraction: f64,
) -> Result<KSelectionReport> {
    if k_grid.is_empty() {
        return Err(Error::Config("width grid is empty".into()));
    }
    if k_grid.contains(&0) {
        return Err(Error::Config("widths must be at least 1".into()));
    }
    config.validate()?;
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let (train_idx, test_idx) = stratified_split(data, test_fraction, config.seed)?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let m_per_group = sampler::select_m_per_group(&train, config.max_components)?;
    let results: Vec<Result<f64>> = grid
        .par_iter()
        .enumerate()
        .map(|(j, &k)| {
            let cfg = SamplerConfig {
                seed: config.seed.wrapping_add(j as u64 + 1),
                ..config.clone()
            };
            fit_and_score(&train, &test, k, &m_per_group, &cfg)
        })
        .collect();
    let mut loglik = Vec::with_capacity(grid.len());
    let mut failures = Vec::with_capacity(grid.len());
    for (k, r) in grid.iter().zip(results) {
        match r {
            Ok(v) if !v.is_nan() => {
                loglik.push(v);
                failures.push(None);
            }
            Ok(_) => {
                log::warn!("width {k}: predictive log-likelihood is NaN");
                loglik.push(f64::NEG_INFINITY);
                failures.push(Some("NaN predictive log-likelihood".into()));
            }
            Err(e) => {
                log::warn!("width {k}: fit failed: {e}");
                loglik.push(f64::NEG_INFINITY);
                failures.push(Some(e.to_string()));
            }
        }
    }
    let chosen = grid[argmax_first(&loglik)];
    Ok(KSelectionReport {
        candidates: grid,
        loglik,
        chosen,
        train: train_idx,
        test: test_idx,
        seed: config.seed,
        failures,
    })
}
