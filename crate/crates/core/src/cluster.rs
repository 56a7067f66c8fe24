//! k-means and one-dimensional Gaussian mixtures.
//!
//! Used to choose and initialize the per-arm component counts and to split
//! subjects into covariate partitions for robustness summaries.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::{log_sum_exp, norm_log_pdf};

/// Result of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares per cluster.
    pub wss: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd iterations from the given centroids. Empty clusters are refilled
/// with the point farthest from its centroid.
pub fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let k = centroids.len();
    let dim = centroids.first().map_or(0, Vec::len);
    let mut labels = vec![usize::MAX; points.len()];
    let mut converged = false;
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, _) = nearest(p, &centroids);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Steal the worst-fitting point from a cluster with more than one member.
                let far = (0..points.len())
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[labels[a]]);
                        let db = sq_dist(&points[b], &centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    let old = labels[i];
                    counts[old] -= 1;
                    for (s, v) in sums[old].iter_mut().zip(&points[i]) {
                        *s -= v;
                    }
                    labels[i] = j;
                    counts[j] = 1;
                    sums[j] = points[i].clone();
                    changed = true;
                }
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let mut wss = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        wss[labels[i]] += sq_dist(p, &centroids[labels[i]]);
    }
    KMeans {
        centroids,
        labels,
        wss,
        converged,
    }
}

/// Sorted-quantile starting centroids for one-dimensional data.
pub fn quantile_centroids(values: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (0..k)
        .map(|j| {
            let q = (j as f64 + 0.5) / k as f64;
            let pos = q * (n as f64 - 1.0);
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// Deterministic one-dimensional k-means started from quantile centroids.
/// On non-convergence within `max_iter`, the quantile centroids themselves
/// are returned with labels set by nearest centroid.
pub fn kmeans_1d(values: &[f64], k: usize, max_iter: usize) -> Result<KMeans> {
    if k == 0 || values.len() < k {
        return Err(Error::Config(format!("cannot form {k} clusters from {} values", values.len())));
    }
    let points: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let start: Vec<Vec<f64>> = quantile_centroids(values, k).into_iter().map(|c| vec![c]).collect();
    let fit = lloyd(&points, start.clone(), max_iter);
    if fit.converged {
        return Ok(fit);
    }
    log::warn!("k-means did not converge in {max_iter} iterations; using quantile centroids");
    Ok(lloyd(&points, start, 1))
}

/// Multivariate k-means with k-means++ seeding and `restarts` independent
/// starts; the lowest total within-cluster sum of squares wins.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
        while centroids.len() < k {
            let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
            let total: f64 = d.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = points.len() - 1;
                for (i, di) in d.iter().enumerate() {
                    if u < *di {
                        pick = i;
                        break;
                    }
                    u -= di;
                }
                pick
            } else {
                let mut idx: Vec<usize> = (0..points.len()).collect();
                idx.shuffle(&mut rng);
                idx[0]
            };
            centroids.push(points[next].clone());
        }
        let fit = lloyd(points, centroids, 300);
        let total: f64 = fit.wss.iter().sum();
        if best.as_ref().is_none_or(|b| total < b.wss.iter().sum::<f64>()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One-dimensional Gaussian mixture fitted by EM.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub loglik: f64,
}

impl Gmm1d {
    /// Bayesian information criterion, `−2 ln L + (3k − 1) ln n` (smaller is better).
    pub fn bic(&self, n: usize) -> f64 {
        let k = self.means.len() as f64;
        -2.0 * self.loglik + (3.0 * k - 1.0) * (n as f64).ln()
    }
}

/// EM for a `k`-component univariate Gaussian mixture with unequal
/// variances, started from one-dimensional k-means.
pub fn fit_gmm_1d(values: &[f64], k: usize) -> Result<Gmm1d> {
    let n = values.len();
    let km = kmeans_1d(values, k, 200)?;
    let mean_all = values.iter().sum::<f64>() / n as f64;
    let var_all = values.iter().map(|v| (v - mean_all).powi(2)).sum::<f64>() / n as f64;
    let floor = (1e-6 * var_all).max(1e-10);
    let mut weights = vec![0.0_f64; k];
    let mut means: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
    let mut variances = vec![0.0; k];
    for (i, &l) in km.labels.iter().enumerate() {
        weights[l] += 1.0;
        variances[l] += (values[i] - means[l]).powi(2);
    }
    for j in 0..k {
        variances[j] = (variances[j] / weights[j].max(1.0)).max(floor);
        weights[j] /= n as f64;
    }
    let mut resp = vec![0.0; n * k];
    let mut terms = vec![0.0; k];
    let mut prev = f64::NEG_INFINITY;
    let mut loglik = f64::NEG_INFINITY;
    for _ in 0..1000 {
        loglik = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for j in 0..k {
                let sd = variances[j].sqrt();
                terms[j] = weights[j].ln() + norm_log_pdf((x - means[j]) / sd) - sd.ln();
            }
            let norm = log_sum_exp(&terms);
            loglik += norm;
            for j in 0..k {
                resp[i * k + j] = (terms[j] - norm).exp();
            }
        }
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nj < 1e-12 {
                continue;
            }
            weights[j] = nj / n as f64;
            means[j] = (0..n).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nj;
            variances[j] = ((0..n).map(|i| resp[i * k + j] * (values[i] - means[j]).powi(2)).sum::<f64>() / nj).max(floor);
        }
        if (loglik - prev).abs() <= 1e-10 * loglik.abs().max(1.0) {
            break;
        }
        prev = loglik;
    }
    if !loglik.is_finite() {
        return Err(Error::Numerical("Gaussian mixture EM produced a non-finite likelihood".into()));
    }
    if variances.iter().any(|&v| v <= 1.01 * floor) {
        return Err(Error::Numerical(format!("{k}-component mixture has a singular component")));
    }
    Ok(Gmm1d {
        weights,
        means,
        variances,
        loglik,
    })
}

/// BIC-optimal number of univariate Gaussian components in `1..=max_k`.
/// Component counts above the number of distinct values are not tried, and
/// fits with a collapsed (singular) component are discarded.
pub fn bic_select_1d(values: &[f64], max_k: usize) -> usize {
    if values.len() < 2 || max_k <= 1 {
        return 1;
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let upper = max_k.min(distinct.len());
    let mut best = (1, f64::INFINITY);
    for k in 1..=upper {
        if let Ok(fit) = fit_gmm_1d(values, k) {
            let bic = fit.bic(values.len());
            if bic < best.1 {
                best = (k, bic);
            }
        }
    }
    best.0
}
