//! Mixture-cure survival model: parameters, link functions, survival
//! functions, the marginal likelihood and the prior.
//!
//! For a subject with covariates `x` treated in arm `g`, the population
//! survival function is
//!
//! ```text
//! S_g(t | x) = c_g(x) + (1 - c_g(x)) · Σ_m π_{m,g}(x) · Q_m(t)
//! c_g(x)     = logistic(f_g^cure(x))
//! π_{m,g}(x) = γ_{m,g} exp(f_m^surv(x)) / Σ_j γ_{j,g} exp(f_j^surv(x))
//! Q_m(t)     = 1 - Φ((ln t - μ_m) / σ_m)
//! ```
//!
//! Both latent links act on a shared feature vector: the raw covariates for
//! the linear link, or `(1, tanh(xᵀθ_1), …, tanh(xᵀθ_K))` for the
//! single-hidden-layer network. Each subject contributes to the likelihood
//! through its assigned arm only.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::special::{
    activation, compensated_sum, log_add_exp, log_sigmoid, log_sum_exp, norm_log_cdf, norm_log_pdf, sigmoid,
};

/// Latent link family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkSpec {
    Linear,
    NeuralNet { width: usize },
}

impl LinkSpec {
    /// Length of the feature vector (including the constant) fed to λ and β.
    pub fn feature_dim(&self, n_predictors: usize) -> usize {
        match *self {
            LinkSpec::Linear => n_predictors + 1,
            LinkSpec::NeuralNet { width } => width + 1,
        }
    }

    /// Number of hidden units; zero for the linear link.
    pub fn width(&self) -> usize {
        match *self {
            LinkSpec::Linear => 0,
            LinkSpec::NeuralNet { width } => width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LinkSpec::NeuralNet { width: 0 } = self {
            return Err(Error::Config("neural-net link needs at least one hidden unit".into()));
        }
        Ok(())
    }
}

/// Hyperparameters refreshed by the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Inclusion probability `p_g` per arm.
    pub p: Vec<f64>,
    pub var_mu: f64,
    pub var_lambda: f64,
    pub var_beta: f64,
    pub var_theta: f64,
}

/// All latent quantities of the model for fixed `M`, `G`, `P` and `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Log-normal log-means, length M.
    pub mu: Vec<f64>,
    /// Log-normal log-scales, length M, all positive.
    pub sigma: Vec<f64>,
    /// Gating matrix, `gamma[m][g]`.
    pub gamma: Vec<Vec<bool>>,
    /// Cure-link coefficients, one row of feature length per arm.
    pub lambda: Vec<Vec<f64>>,
    /// Weight-link coefficients, one row per component.
    pub beta: Vec<Vec<f64>>,
    /// Hidden-layer weights, K rows of length P+1 (empty for the linear link).
    pub theta: Vec<Vec<f64>>,
    pub hyper: Hyper,
}

impl Parameters {
    /// All coefficients zero, unit scales, every component active in every
    /// arm, `p_g = 1/2` and unit variances.
    pub fn zeros(n_components: usize, n_groups: usize, n_predictors: usize, link: LinkSpec) -> Self {
        let d = link.feature_dim(n_predictors);
        Self {
            mu: vec![0.0; n_components],
            sigma: vec![1.0; n_components],
            gamma: vec![vec![true; n_groups]; n_components],
            lambda: vec![vec![0.0; d]; n_groups],
            beta: vec![vec![0.0; d]; n_components],
            theta: vec![vec![0.0; n_predictors + 1]; link.width()],
            hyper: Hyper {
                p: vec![0.5; n_groups],
                var_mu: 1.0,
                var_lambda: 1.0,
                var_beta: 1.0,
                var_theta: 1.0,
            },
        }
    }

    pub fn n_components(&self) -> usize {
        self.mu.len()
    }

    pub fn n_groups(&self) -> usize {
        self.lambda.len()
    }

    /// Number of active components in arm `g`.
    pub fn active_in_group(&self, g: usize) -> usize {
        self.gamma.iter().filter(|row| row[g]).count()
    }

    /// Checks dimensions against the link and predictor count, positivity of
    /// σ and the variances, NaN-freedom, and that no gating column is empty.
    pub fn validate(&self, link: LinkSpec, n_predictors: usize) -> Result<()> {
        link.validate()?;
        let m = self.mu.len();
        let g = self.lambda.len();
        let d = link.feature_dim(n_predictors);
        if m == 0 || g == 0 {
            return Err(Error::Config("need at least one component and one group".into()));
        }
        if self.sigma.len() != m || self.gamma.len() != m || self.beta.len() != m {
            return Err(Error::Config(format!(
                "component dimension mismatch: mu={}, sigma={}, gamma={}, beta={}",
                m,
                self.sigma.len(),
                self.gamma.len(),
                self.beta.len()
            )));
        }
        if self.gamma.iter().any(|row| row.len() != g) || self.hyper.p.len() != g {
            return Err(Error::Config(format!("gating/p dimension does not match {g} groups")));
        }
        if self.lambda.iter().chain(self.beta.iter()).any(|row| row.len() != d) {
            return Err(Error::Config(format!("link coefficient rows must have length {d}")));
        }
        if self.theta.len() != link.width() || self.theta.iter().any(|row| row.len() != n_predictors + 1) {
            return Err(Error::Config(format!(
                "hidden layer must have {} rows of length {}",
                link.width(),
                n_predictors + 1
            )));
        }
        let all_values = self
            .mu
            .iter()
            .chain(self.sigma.iter())
            .chain(self.lambda.iter().flatten())
            .chain(self.beta.iter().flatten())
            .chain(self.theta.iter().flatten());
        if all_values.clone().any(|v| v.is_nan()) {
            return Err(Error::Domain("parameters contain NaN".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("every sigma must be positive and finite".into()));
        }
        for gi in 0..g {
            if self.active_in_group(gi) == 0 {
                return Err(Error::Invariant(format!("gating column {} has no active component", gi + 1)));
            }
        }
        Ok(())
    }

    /// Applies a component relabelling: new component `j` is old `perm[j]`.
    pub fn permute_components(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (j, &src) in perm.iter().enumerate() {
            out.mu[j] = self.mu[src];
            out.sigma[j] = self.sigma[src];
            out.gamma[j] = self.gamma[src].clone();
            out.beta[j] = self.beta[src].clone();
        }
        out
    }
}

/// Beta and inverse-gamma hyperprior settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Beta(c, d) prior on each inclusion probability `p_g`.
    pub beta_c: f64,
    pub beta_d: f64,
    /// Inverse-gamma(a, b) prior on every coefficient variance.
    pub ig_a: f64,
    pub ig_b: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            beta_c: 1.0,
            beta_d: 1.0,
            ig_a: 1.0,
            ig_b: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.beta_c), ("d", self.beta_d), ("a", self.ig_a), ("b", self.ig_b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("prior parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-subject building blocks of the likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodParts {
    /// `a[i][m] = Φ((ln t_i − μ_m)/σ_m)`.
    pub a: Vec<Vec<f64>>,
    /// `b[i][m]`: log-normal density of component m at `t_i`.
    pub b: Vec<Vec<f64>>,
    /// `cure[i][g] = c_g(x_i)` for every arm.
    pub cure: Vec<Vec<f64>>,
    /// `weights[i][g][m] = π_{i,m,g}`.
    pub weights: Vec<Vec<Vec<f64>>>,
}

// ---------------------------------------------------------------------------
// Feature and weight evaluation for a single covariate vector.
// ---------------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_covariates(params: &Parameters, link: LinkSpec, x: &[f64]) -> Result<()> {
    let expected = match link {
        LinkSpec::Linear => params.lambda.first().map_or(0, Vec::len),
        LinkSpec::NeuralNet { .. } => params.theta.first().map_or(0, Vec::len),
    };
    if x.len() != expected {
        return Err(Error::Config(format!(
            "covariate vector has length {}, model expects {expected} (including intercept)",
            x.len()
        )));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("covariates contain NaN".into()));
    }
    Ok(())
}

fn check_group(params: &Parameters, g: usize) -> Result<()> {
    if g >= params.n_groups() {
        return Err(Error::Config(format!(
            "group {} outside 1..={}",
            g + 1,
            params.n_groups()
        )));
    }
    Ok(())
}

/// Shared feature vector of the latent links for covariates `x`.
pub fn features(params: &Parameters, link: LinkSpec, x: &[f64]) -> Vec<f64> {
    match link {
        LinkSpec::Linear => x.to_vec(),
        LinkSpec::NeuralNet { .. } => {
            let mut y = Vec::with_capacity(params.theta.len() + 1);
            y.push(1.0);
            y.extend(params.theta.iter().map(|th| activation(dot(th, x))));
            y
        }
    }
}

/// Fills `out` with `ln π_{m,g}` for feature vector `y` (−∞ where γ = 0).
fn log_weights_into(params: &Parameters, y: &[f64], g: usize, out: &mut [f64]) {
    for (m, o) in out.iter_mut().enumerate() {
        *o = if params.gamma[m][g] {
            dot(&params.beta[m], y)
        } else {
            f64::NEG_INFINITY
        };
    }
    let norm = log_sum_exp(out);
    for o in out.iter_mut() {
        if *o != f64::NEG_INFINITY {
            *o -= norm;
        }
    }
}

/// Cure probability `c_g(x)`.
pub fn cure_prob(params: &Parameters, link: LinkSpec, x: &[f64], g: usize) -> Result<f64> {
    check_group(params, g)?;
    check_covariates(params, link, x)?;
    let y = features(params, link, x);
    Ok(sigmoid(dot(&params.lambda[g], &y)))
}

/// Softmax mixture weights `π_{·,g}(x)`; exactly zero where `γ_{m,g} = 0`.
pub fn mixture_weights(params: &Parameters, link: LinkSpec, x: &[f64], g: usize) -> Result<Vec<f64>> {
    check_group(params, g)?;
    check_covariates(params, link, x)?;
    if params.active_in_group(g) == 0 {
        return Err(Error::Invariant(format!("gating column {} has no active component", g + 1)));
    }
    let y = features(params, link, x);
    let mut w = vec![0.0; params.n_components()];
    log_weights_into(params, &y, g, &mut w);
    Ok(w.into_iter().map(f64::exp).collect())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Susceptible survival `S_{g,u}(t | x) = Σ_m π_{m,g}(x) Q_m(t)`.
pub fn survival_susceptible(params: &Parameters, link: LinkSpec, x: &[f64], g: usize, t: f64) -> Result<f64> {
    check_time(t)?;
    let w = mixture_weights(params, link, x, g)?;
    Ok(susceptible_from_weights(params, &w, t))
}

pub(crate) fn susceptible_from_weights(params: &Parameters, w: &[f64], t: f64) -> f64 {
    let lt = t.ln();
    let terms: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(m, &wm)| wm.ln() + norm_log_cdf(-(lt - params.mu[m]) / params.sigma[m]))
        .collect();
    log_sum_exp(&terms).exp().min(1.0)
}

/// Population survival `c_g(x) + (1 − c_g(x)) S_{g,u}(t | x)`.
pub fn survival_population(params: &Parameters, link: LinkSpec, x: &[f64], g: usize, t: f64) -> Result<f64> {
    check_time(t)?;
    let c = cure_prob(params, link, x, g)?;
    let su = survival_susceptible(params, link, x, g, t)?;
    Ok(c + (1.0 - c) * su)
}

/// Cure probability, mixture weights and feature vector in one pass.
pub(crate) struct ArmView {
    pub cure: f64,
    pub weights: Vec<f64>,
}

pub(crate) fn arm_view(params: &Parameters, link: LinkSpec, x: &[f64], g: usize) -> Result<ArmView> {
    check_group(params, g)?;
    check_covariates(params, link, x)?;
    if params.active_in_group(g) == 0 {
        return Err(Error::Invariant(format!("gating column {} has no active component", g + 1)));
    }
    let y = features(params, link, x);
    let mut w = vec![0.0; params.n_components()];
    log_weights_into(params, &y, g, &mut w);
    Ok(ArmView {
        cure: sigmoid(dot(&params.lambda[g], &y)),
        weights: w.into_iter().map(f64::exp).collect(),
    })
}

// ---------------------------------------------------------------------------
// Cached per-subject evaluation used by the likelihood, gradients and sampler.
// ---------------------------------------------------------------------------

/// Caches that depend on (μ, σ) per component and on Θ per hidden unit.
///
/// The sampler updates one block at a time, so only the affected component
/// column or hidden-unit column is refreshed after a move.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    n: usize,
    m: usize,
    d: usize,
    k: usize,
    log_t: Vec<f64>,
    /// n × d shared features.
    feats: Vec<f64>,
    /// n × k hidden pre-activations `xᵀθ_k`.
    pre: Vec<f64>,
    /// n × m standardized log-times.
    z: Vec<f64>,
    log_a: Vec<f64>,
    log_q: Vec<f64>,
    /// log density of ln T at ln t: `ln φ(z) − ln σ`.
    log_dens: Vec<f64>,
}

impl Workspace {
    pub fn new(params: &Parameters, link: LinkSpec, data: &SurvivalDataset) -> Self {
        let n = data.len();
        let m = params.n_components();
        let d = link.feature_dim(data.n_predictors());
        let k = link.width();
        let mut ws = Self {
            n,
            m,
            d,
            k,
            log_t: data.times().iter().map(|t| t.ln()).collect(),
            feats: vec![0.0; n * d],
            pre: vec![0.0; n * k],
            z: vec![0.0; n * m],
            log_a: vec![0.0; n * m],
            log_q: vec![0.0; n * m],
            log_dens: vec![0.0; n * m],
        };
        for j in 0..m {
            ws.refresh_component(params, j);
        }
        match link {
            LinkSpec::Linear => {
                for i in 0..n {
                    ws.feats[i * d..(i + 1) * d].copy_from_slice(data.covariates(i));
                }
            }
            LinkSpec::NeuralNet { .. } => {
                for i in 0..n {
                    ws.feats[i * d] = 1.0;
                }
                for kk in 0..k {
                    ws.refresh_hidden(params, data, kk);
                }
            }
        }
        ws
    }

    pub fn refresh_component(&mut self, params: &Parameters, j: usize) {
        let (mu, sigma) = (params.mu[j], params.sigma[j]);
        let ln_sigma = sigma.ln();
        for i in 0..self.n {
            let z = (self.log_t[i] - mu) / sigma;
            let idx = i * self.m + j;
            self.z[idx] = z;
            self.log_a[idx] = norm_log_cdf(z);
            self.log_q[idx] = norm_log_cdf(-z);
            self.log_dens[idx] = norm_log_pdf(z) - ln_sigma;
        }
    }

    pub fn refresh_hidden(&mut self, params: &Parameters, data: &SurvivalDataset, kk: usize) {
        let th = &params.theta[kk];
        for i in 0..self.n {
            let a = dot(th, data.covariates(i));
            self.pre[i * self.k + kk] = a;
            self.feats[i * self.d + kk + 1] = activation(a);
        }
    }

    #[inline]
    pub fn feat(&self, i: usize) -> &[f64] {
        &self.feats[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn pre(&self, i: usize, kk: usize) -> f64 {
        self.pre[i * self.k + kk]
    }

    /// Saves the cache column of component `j` so a rejected move can be undone.
    pub fn component_column(&self, j: usize) -> [Vec<f64>; 4] {
        let col = |v: &Vec<f64>| (0..self.n).map(|i| v[i * self.m + j]).collect::<Vec<_>>();
        [col(&self.z), col(&self.log_a), col(&self.log_q), col(&self.log_dens)]
    }

    pub fn restore_component_column(&mut self, j: usize, saved: &[Vec<f64>; 4]) {
        for i in 0..self.n {
            let idx = i * self.m + j;
            self.z[idx] = saved[0][i];
            self.log_a[idx] = saved[1][i];
            self.log_q[idx] = saved[2][i];
            self.log_dens[idx] = saved[3][i];
        }
    }

    pub fn hidden_column(&self, kk: usize) -> (Vec<f64>, Vec<f64>) {
        let pre = (0..self.n).map(|i| self.pre[i * self.k + kk]).collect();
        let feat = (0..self.n).map(|i| self.feats[i * self.d + kk + 1]).collect();
        (pre, feat)
    }

    pub fn restore_hidden_column(&mut self, kk: usize, saved: &(Vec<f64>, Vec<f64>)) {
        for i in 0..self.n {
            self.pre[i * self.k + kk] = saved.0[i];
            self.feats[i * self.d + kk + 1] = saved.1[i];
        }
    }
}

/// Scratch buffers for one subject's evaluation; reused across subjects.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    pub log_pi: Vec<f64>,
    tmp: Vec<f64>,
    /// ∂ℓ_i/∂f_m^surv.
    pub d_f: Vec<f64>,
    /// ∂ℓ_i/∂μ_m.
    pub d_mu: Vec<f64>,
}

impl Scratch {
    pub fn new(m: usize) -> Self {
        Self {
            log_pi: vec![0.0; m],
            tmp: vec![0.0; m],
            d_f: vec![0.0; m],
            d_mu: vec![0.0; m],
        }
    }
}

/// Log-likelihood contribution of subject `i` under its assigned arm and,
/// when `with_grad` is set, the derivative with respect to the cure-link
/// output `η = f^cure(x_i)` (returned) plus ∂ℓ/∂f_m and ∂ℓ/∂μ_m (in `scratch`).
pub(crate) fn subject_eval(
    params: &Parameters,
    data: &SurvivalDataset,
    ws: &Workspace,
    i: usize,
    scratch: &mut Scratch,
    with_grad: bool,
) -> (f64, f64) {
    let g = data.group(i);
    let y = ws.feat(i);
    let m = ws.m;
    let eta = dot(&params.lambda[g], y);
    let log_c = log_sigmoid(eta);
    let log_r = log_sigmoid(-eta);
    log_weights_into(params, y, g, &mut scratch.log_pi);
    let row = i * m;

    if data.is_censored(i) {
        for j in 0..m {
            scratch.tmp[j] = scratch.log_pi[j] + ws.log_q[row + j];
        }
        let log_su = log_sum_exp(&scratch.tmp);
        let log_s = log_add_exp(log_c, log_r + log_su);
        if !with_grad {
            return (log_s, 0.0);
        }
        for j in 0..m {
            scratch.tmp[j] = scratch.log_pi[j] + ws.log_a[row + j];
        }
        let log_1m_su = log_sum_exp(&scratch.tmp);
        let d_eta = (log_c + log_r + log_1m_su - log_s).exp();
        let su = log_su.exp();
        let w = (log_r - log_s).exp();
        for j in 0..m {
            let lp = scratch.log_pi[j];
            if lp == f64::NEG_INFINITY {
                scratch.d_f[j] = 0.0;
                scratch.d_mu[j] = 0.0;
                continue;
            }
            let pi = lp.exp();
            scratch.d_f[j] = w * pi * (ws.log_q[row + j].exp() - su);
            scratch.d_mu[j] = (log_r + lp + ws.log_dens[row + j] - log_s).exp();
        }
        (log_s, d_eta)
    } else {
        let log_t = ws.log_t[i];
        for j in 0..m {
            scratch.tmp[j] = scratch.log_pi[j] + ws.log_dens[row + j] - log_t;
        }
        let log_fu = log_sum_exp(&scratch.tmp);
        let ll = log_r + log_fu;
        if !with_grad {
            return (ll, 0.0);
        }
        let d_eta = -log_c.exp();
        for j in 0..m {
            let lp = scratch.log_pi[j];
            if lp == f64::NEG_INFINITY {
                scratch.d_f[j] = 0.0;
                scratch.d_mu[j] = 0.0;
                continue;
            }
            let resp = (scratch.tmp[j] - log_fu).exp();
            scratch.d_f[j] = resp - lp.exp();
            scratch.d_mu[j] = resp * ws.z[row + j] / params.sigma[j];
        }
        (ll, d_eta)
    }
}

/// Sum of subject contributions over `subjects`, in the given order.
pub(crate) fn loglik_over(
    params: &Parameters,
    data: &SurvivalDataset,
    ws: &Workspace,
    subjects: impl Iterator<Item = usize>,
    scratch: &mut Scratch,
) -> f64 {
    let mut total = 0.0;
    for i in subjects {
        let (ll, _) = subject_eval(params, data, ws, i, scratch, false);
        if ll == f64::NEG_INFINITY || ll.is_nan() {
            return f64::NEG_INFINITY;
        }
        total += ll;
    }
    total
}

pub(crate) fn check_inputs(params: &Parameters, link: LinkSpec, data: &SurvivalDataset) -> Result<()> {
    params.validate(link, data.n_predictors())?;
    if params.n_groups() != data.n_groups() {
        return Err(Error::Config(format!(
            "parameters describe {} groups, dataset has {}",
            params.n_groups(),
            data.n_groups()
        )));
    }
    Ok(())
}

/// Marginal log-likelihood (cure status integrated out).
///
/// Returns `-∞` when some uncensored subject has zero density under its arm;
/// the sampler treats that as an automatic rejection.
pub fn log_likelihood(params: &Parameters, link: LinkSpec, data: &SurvivalDataset) -> Result<f64> {
    check_inputs(params, link, data)?;
    let ws = Workspace::new(params, link, data);
    let mut scratch = Scratch::new(params.n_components());
    let mut terms = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (ll, _) = subject_eval(params, data, &ws, i, &mut scratch, false);
        if ll.is_nan() {
            return Err(Error::Numerical(format!("subject {i}: NaN likelihood")));
        }
        if ll == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        terms.push(ll);
    }
    Ok(compensated_sum(terms))
}

/// Tabulates a, b, c and π for every subject (π and c for every arm).
pub fn likelihood_parts(params: &Parameters, link: LinkSpec, data: &SurvivalDataset) -> Result<LikelihoodParts> {
    check_inputs(params, link, data)?;
    let ws = Workspace::new(params, link, data);
    let m = params.n_components();
    let g_count = params.n_groups();
    let mut parts = LikelihoodParts {
        a: Vec::with_capacity(data.len()),
        b: Vec::with_capacity(data.len()),
        cure: Vec::with_capacity(data.len()),
        weights: Vec::with_capacity(data.len()),
    };
    let mut buf = vec![0.0; m];
    for i in 0..data.len() {
        let row = i * m;
        parts.a.push((0..m).map(|j| ws.log_a[row + j].exp()).collect());
        parts.b.push((0..m).map(|j| (ws.log_dens[row + j] - ws.log_t[i]).exp()).collect());
        let y = ws.feat(i);
        parts.cure.push((0..g_count).map(|g| sigmoid(dot(&params.lambda[g], y))).collect());
        parts.weights.push(
            (0..g_count)
                .map(|g| {
                    log_weights_into(params, y, g, &mut buf);
                    buf.iter().map(|v| v.exp()).collect()
                })
                .collect(),
        );
    }
    Ok(parts)
}

// ---------------------------------------------------------------------------
// Prior.
// ---------------------------------------------------------------------------

/// `a · ln(y)` with the convention `0 · ln 0 = 0`.
fn xlogy(a: f64, y: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * y.ln()
    }
}

fn normal_log_density(values: impl Iterator<Item = f64>, var: f64) -> f64 {
    let half_log = 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    values.map(|v| -half_log - v * v / (2.0 * var)).sum()
}

fn inv_gamma_log_density(v: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * v.ln() - b / v
}

/// Log prior density with all normalising constants included:
/// Normal(0, σ²) for μ, λ, β and θ; Bernoulli(p_g) for γ; Beta(c, d) for
/// `p_g`; inverse-gamma(a, b) for each variance (σ²_θ only when a hidden
/// layer is present).
pub fn log_prior(params: &Parameters, prior: &PriorConfig) -> Result<f64> {
    prior.validate()?;
    let h = &params.hyper;
    let has_theta = !params.theta.is_empty();
    for (name, v) in [
        ("var_mu", h.var_mu),
        ("var_lambda", h.var_lambda),
        ("var_beta", h.var_beta),
        ("var_theta", h.var_theta),
    ] {
        if name == "var_theta" && !has_theta {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if h.p.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Domain("inclusion probabilities must lie in [0, 1]".into()));
    }
    let mut lp = normal_log_density(params.mu.iter().copied(), h.var_mu);
    lp += normal_log_density(params.lambda.iter().flatten().copied(), h.var_lambda);
    lp += normal_log_density(params.beta.iter().flatten().copied(), h.var_beta);
    if has_theta {
        lp += normal_log_density(params.theta.iter().flatten().copied(), h.var_theta);
    }
    for row in &params.gamma {
        for (g, &on) in row.iter().enumerate() {
            let p = h.p[g];
            lp += if on { xlogy(1.0, p) } else { xlogy(1.0, 1.0 - p) };
        }
    }
    let ln_beta_fn = statrs::function::beta::ln_beta(prior.beta_c, prior.beta_d);
    for &p in &h.p {
        lp += xlogy(prior.beta_c - 1.0, p) + xlogy(prior.beta_d - 1.0, 1.0 - p) - ln_beta_fn;
    }
    lp += inv_gamma_log_density(h.var_mu, prior.ig_a, prior.ig_b);
    lp += inv_gamma_log_density(h.var_lambda, prior.ig_a, prior.ig_b);
    lp += inv_gamma_log_density(h.var_beta, prior.ig_a, prior.ig_b);
    if has_theta {
        lp += inv_gamma_log_density(h.var_theta, prior.ig_a, prior.ig_b);
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_group_params() -> Parameters {
        let mut p = Parameters::zeros(3, 2, 2, LinkSpec::Linear);
        p.mu = vec![0.0, 1.0, -0.5];
        p.sigma = vec![0.5, 1.0, 0.8];
        p
    }

    #[test]
    fn cure_prob_of_zero_link_is_half() {
        let p = two_group_params();
        assert_eq!(cure_prob(&p, LinkSpec::Linear, &[1.0, 0.3, -2.0], 0).unwrap(), 0.5);
    }

    #[test]
    fn cure_prob_of_ln3_intercept_is_three_quarters() {
        let mut p = two_group_params();
        p.lambda[1][0] = 3f64.ln();
        let c = cure_prob(&p, LinkSpec::Linear, &[1.0, 5.0, 7.0], 1).unwrap();
        assert!((c - 0.75).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = two_group_params();
        assert!(matches!(cure_prob(&p, LinkSpec::Linear, &[1.0, 0.3], 0), Err(Error::Config(_))));
        assert!(matches!(cure_prob(&p, LinkSpec::Linear, &[1.0, 0.3, 0.1], 2), Err(Error::Config(_))));
    }

    #[test]
    fn symmetric_softmax_is_uniform() {
        let p = two_group_params();
        let w = mixture_weights(&p, LinkSpec::Linear, &[1.0, 0.2, 0.4], 0).unwrap();
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_active_component_takes_all_weight() {
        let mut p = two_group_params();
        p.gamma[0][1] = false;
        p.gamma[2][1] = false;
        p.beta[1] = vec![3.0, -1.0, 2.0];
        let w = mixture_weights(&p, LinkSpec::Linear, &[1.0, 0.2, 0.4], 1).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_gating_column_is_invariant_error() {
        let mut p = two_group_params();
        for row in &mut p.gamma {
            row[0] = false;
        }
        assert!(matches!(
            mixture_weights(&p, LinkSpec::Linear, &[1.0, 0.0, 0.0], 0),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn median_of_single_component() {
        let mut p = two_group_params();
        p.gamma[0][0] = false;
        p.gamma[2][0] = false;
        let s = survival_susceptible(&p, LinkSpec::Linear, &[1.0, 0.0, 0.0], 0, 1f64.exp()).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn survival_limits() {
        let p = two_group_params();
        let x = [1.0, 0.1, 0.2];
        let s0 = survival_susceptible(&p, LinkSpec::Linear, &x, 0, 1e-300).unwrap();
        assert!((s0 - 1.0).abs() < 1e-12);
        let s_inf = survival_population(&p, LinkSpec::Linear, &x, 0, 1e300).unwrap();
        assert!((s_inf - 0.5).abs() < 1e-12);
        assert!(matches!(survival_population(&p, LinkSpec::Linear, &x, 0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn forced_cure_fractions() {
        let mut p = two_group_params();
        let x = [1.0, 0.1, 0.2];
        p.lambda[0][0] = f64::INFINITY;
        assert_eq!(survival_population(&p, LinkSpec::Linear, &x, 0, 3.0).unwrap(), 1.0);
        p.lambda[0][0] = f64::NEG_INFINITY;
        let sp = survival_population(&p, LinkSpec::Linear, &x, 0, 3.0).unwrap();
        let su = survival_susceptible(&p, LinkSpec::Linear, &x, 0, 3.0).unwrap();
        assert_eq!(sp, su);
    }

    #[test]
    fn forced_cure_likelihood_sentinels() {
        let mut p = Parameters::zeros(1, 1, 0, LinkSpec::Linear);
        p.lambda[0][0] = f64::INFINITY;
        let censored = SurvivalDataset::from_raw(vec![2.0], vec![true], vec![0], vec![vec![]], 1).unwrap();
        assert_eq!(log_likelihood(&p, LinkSpec::Linear, &censored).unwrap(), 0.0);
        let event = SurvivalDataset::from_raw(vec![2.0], vec![false], vec![0], vec![vec![]], 1).unwrap();
        assert_eq!(log_likelihood(&p, LinkSpec::Linear, &event).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_at_zero_with_unit_variances() {
        let link = LinkSpec::NeuralNet { width: 2 };
        let mut p = Parameters::zeros(2, 2, 1, link);
        p.hyper.p = vec![1.0, 1.0];
        let prior = PriorConfig::default();
        let lp = log_prior(&p, &prior).unwrap();
        // 2 μ + 2·3 λ + 2·3 β + 2·2 θ = 18 normal terms at zero with unit variance.
        let normal = -0.5 * (2.0 * std::f64::consts::PI).ln() * 18.0;
        // Beta(1,1) density is 1; IG(1,1) at v = 1 has log density -1, four variances.
        assert!((lp - (normal - 4.0)).abs() < 1e-12, "{lp}");
    }

    #[test]
    fn prior_rejects_nonpositive_variance() {
        let mut p = two_group_params();
        p.hyper.var_beta = 0.0;
        assert!(matches!(log_prior(&p, &PriorConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn neural_net_with_zero_weights_has_constant_features() {
        let link = LinkSpec::NeuralNet { width: 3 };
        let mut p = Parameters::zeros(2, 1, 2, link);
        p.theta[1][0] = 0.7;
        let y = features(&p, link, &[1.0, 4.0, -3.0]);
        assert_eq!(y, vec![1.0, 0.0, 0.7f64.tanh(), 0.0]);
    }
}
