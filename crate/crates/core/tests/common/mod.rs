//! Independent reference implementations used as test oracles.
//!
//! Everything here is written from the model's defining formulas with plain
//! floating-point arithmetic and `statrs` distributions; nothing calls into
//! the library's own numerics except the public data types.

#![allow(dead_code)]

use curemix::{LinkSpec, Parameters, SurvivalDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, Continuous, ContinuousCDF, InverseGamma, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

pub fn naive_features(params: &Parameters, link: LinkSpec, x: &[f64]) -> Vec<f64> {
    match link {
        LinkSpec::Linear => x.to_vec(),
        LinkSpec::NeuralNet { .. } => {
            let mut y = vec![1.0];
            for th in &params.theta {
                let a: f64 = th.iter().zip(x).map(|(u, v)| u * v).sum();
                y.push(a.tanh());
            }
            y
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub fn naive_cure(params: &Parameters, link: LinkSpec, x: &[f64], g: usize) -> f64 {
    let y = naive_features(params, link, x);
    1.0 / (1.0 + (-dot(&params.lambda[g], &y)).exp())
}

/// Softmax over the active components of arm `g`, shifted by the max logit.
pub fn naive_weights(params: &Parameters, link: LinkSpec, x: &[f64], g: usize) -> Vec<f64> {
    let y = naive_features(params, link, x);
    let logits: Vec<Option<f64>> = params
        .beta
        .iter()
        .zip(&params.gamma)
        .map(|(b, row)| row[g].then(|| dot(b, &y)))
        .collect();
    let max = logits.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| l.map_or(0.0, |v| (v - max).exp())).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Lognormal survival `1 − Φ((ln t − μ)/σ)`.
pub fn lognormal_sf(t: f64, mu: f64, sigma: f64) -> f64 {
    1.0 - std_normal().cdf((t.ln() - mu) / sigma)
}

pub fn lognormal_pdf(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = (t.ln() - mu) / sigma;
    std_normal().pdf(z) / (sigma * t)
}

pub fn naive_survival(params: &Parameters, link: LinkSpec, x: &[f64], g: usize, t: f64) -> f64 {
    let c = naive_cure(params, link, x, g);
    let w = naive_weights(params, link, x, g);
    let su: f64 = (0..w.len()).map(|m| w[m] * lognormal_sf(t, params.mu[m], params.sigma[m])).sum();
    c + (1.0 - c) * su
}

/// Term-by-term log-likelihood, each subject under its own arm.
pub fn naive_loglik(params: &Parameters, link: LinkSpec, data: &SurvivalDataset) -> f64 {
    let mut total = 0.0;
    for i in 0..data.len() {
        let x = data.covariates(i);
        let g = data.group(i);
        let t = data.time(i);
        let c = naive_cure(params, link, x, g);
        let w = naive_weights(params, link, x, g);
        if data.is_censored(i) {
            let tail: f64 = (0..w.len())
                .map(|m| w[m] * (1.0 - std_normal().cdf((t.ln() - params.mu[m]) / params.sigma[m])))
                .sum();
            total += (c + (1.0 - c) * tail).ln();
        } else {
            let dens: f64 = (0..w.len()).map(|m| w[m] * lognormal_pdf(t, params.mu[m], params.sigma[m])).sum();
            total += ((1.0 - c) * dens).ln();
        }
    }
    total
}

/// Log prior assembled from `statrs` densities.
pub fn naive_log_prior(params: &Parameters, c: f64, d: f64, a: f64, b: f64) -> f64 {
    let h = &params.hyper;
    let normal_sum = |vals: Vec<f64>, var: f64| -> f64 {
        let n = Normal::new(0.0, var.sqrt()).unwrap();
        vals.iter().map(|v| n.ln_pdf(*v)).sum()
    };
    let ig = InverseGamma::new(a, b).unwrap();
    let mut lp = normal_sum(params.mu.clone(), h.var_mu);
    lp += normal_sum(params.lambda.concat(), h.var_lambda);
    lp += normal_sum(params.beta.concat(), h.var_beta);
    lp += ig.ln_pdf(h.var_mu) + ig.ln_pdf(h.var_lambda) + ig.ln_pdf(h.var_beta);
    if !params.theta.is_empty() {
        lp += normal_sum(params.theta.concat(), h.var_theta);
        lp += ig.ln_pdf(h.var_theta);
    }
    let beta = Beta::new(c, d).unwrap();
    for (g, &p) in h.p.iter().enumerate() {
        lp += beta.ln_pdf(p);
        for row in &params.gamma {
            lp += if row[g] { p.ln() } else { (1.0 - p).ln() };
        }
    }
    lp
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Least squares of `y` on `(1, x)`: (intercept, slope).
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    ((sy - slope * sx) / n, slope)
}

/// Product-limit estimate at `t` built as a worksheet over sorted times.
pub fn km_worksheet(times: &[f64], censored: &[bool], t: f64) -> f64 {
    let mut rows: Vec<(f64, bool)> = times.iter().cloned().zip(censored.iter().cloned()).collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut s = 1.0;
    let mut i = 0;
    while i < rows.len() && rows[i].0 <= t {
        let time = rows[i].0;
        let at_risk = rows.iter().filter(|r| r.0 >= time).count() as f64;
        let deaths = rows.iter().filter(|r| r.0 == time && !r.1).count() as f64;
        s *= 1.0 - deaths / at_risk;
        while i < rows.len() && rows[i].0 == time {
            i += 1;
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Random instances.
// ---------------------------------------------------------------------------

pub fn random_normal(r: &mut ChaCha8Rng, sd: f64) -> f64 {
    // Box-Muller keeps the oracle free of the library's samplers.
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random parameters with every arm having at least one active component.
pub fn random_params(r: &mut ChaCha8Rng, m: usize, g: usize, p: usize, link: LinkSpec, scale: f64) -> Parameters {
    let mut params = Parameters::zeros(m, g, p, link);
    for v in params.mu.iter_mut() {
        *v = random_normal(r, 1.0);
    }
    for v in params.sigma.iter_mut() {
        *v = 0.3 + 1.2 * r.random::<f64>();
    }
    for row in params.lambda.iter_mut().chain(params.beta.iter_mut()).chain(params.theta.iter_mut()) {
        for v in row.iter_mut() {
            *v = random_normal(r, scale);
        }
    }
    for gg in 0..g {
        loop {
            for row in params.gamma.iter_mut() {
                row[gg] = r.random::<f64>() < 0.6;
            }
            if params.gamma.iter().any(|row| row[gg]) {
                break;
            }
        }
    }
    params.hyper.p = (0..g).map(|_| 0.1 + 0.8 * r.random::<f64>()).collect();
    params.hyper.var_mu = 0.5 + r.random::<f64>();
    params.hyper.var_lambda = 0.5 + r.random::<f64>();
    params.hyper.var_beta = 0.5 + r.random::<f64>();
    params.hyper.var_theta = 0.5 + r.random::<f64>();
    params
}

/// Random dataset with lognormal times, a random censoring share and
/// standard-normal predictors. Every arm gets at least one subject.
pub fn random_data(r: &mut ChaCha8Rng, n: usize, g: usize, p: usize, censor_share: f64) -> SurvivalDataset {
    let times = (0..n).map(|_| random_normal(r, 0.8).exp()).collect();
    let censored = (0..n).map(|_| r.random::<f64>() < censor_share).collect();
    let groups = (0..n).map(|i| if i < g { i } else { r.random_range(0..g) }).collect();
    let preds = (0..n).map(|_| (0..p).map(|_| random_normal(r, 1.0)).collect()).collect();
    SurvivalDataset::from_raw(times, censored, groups, preds, g).unwrap()
}
