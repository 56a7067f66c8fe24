//! Posterior sampling.
//!
//! One iteration sweeps, in this order: the gating matrix Γ element-wise by
//! Gumbel-max Gibbs draws, then Metropolis-adjusted Langevin moves for every
//! μ_m, β_m, λ_g and θ_k, then conjugate draws of the inclusion
//! probabilities and prior variances. Step sizes are tuned on a fixed
//! schedule during burn-in and frozen afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::gradients::{self, BlockTarget};
use crate::model::{self, LinkSpec, Parameters, PriorConfig, Scratch, Workspace};

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Iterations during which γ_{m,g} stays 1 for m in the arm's own index set.
    pub gamma_freeze: usize,
    pub adapt_interval: usize,
    pub accept_low: f64,
    pub accept_high: f64,
    /// Initial Langevin step for every block; `None` uses a curvature-based guess.
    pub initial_step: Option<f64>,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Upper bound on components per arm when choosing counts by BIC.
    pub max_components: usize,
    /// When false the target is the prior alone (calibration runs).
    pub use_likelihood: bool,
    pub update_gamma: bool,
    pub update_hyper: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 2500,
            thin: 5,
            gamma_freeze: 1000,
            adapt_interval: 200,
            accept_low: 0.45,
            accept_high: 0.7,
            initial_step: None,
            seed: 1,
            prior: PriorConfig::default(),
            max_components: 9,
            use_likelihood: true,
            update_gamma: true,
            update_hyper: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.adapt_interval == 0 {
            return Err(Error::Config("thinning and adaptation interval must be at least 1".into()));
        }
        if !(0.0 < self.accept_low && self.accept_low < self.accept_high && self.accept_high < 1.0) {
            return Err(Error::Config("acceptance band must satisfy 0 < low < high < 1".into()));
        }
        if let Some(e) = self.initial_step {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Config(format!("initial step must be positive, got {e}")));
            }
        }
        if self.max_components == 0 {
            return Err(Error::Config("max_components must be at least 1".into()));
        }
        self.prior.validate()
    }
}

/// Component layout and starting values for μ and σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitPlan {
    pub m_per_group: Vec<usize>,
    /// Zero-based component indices owned by each arm.
    pub index_sets: Vec<Vec<usize>>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Per-block step size and acceptance counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub target: BlockTarget,
    pub step: f64,
    /// Counters since the last adaptation boundary.
    pub accepted: u64,
    pub proposed: u64,
    /// Counters since the end of burn-in.
    pub kept_accepted: u64,
    pub kept_proposed: u64,
}

impl BlockStats {
    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposed as f64
    }
}

/// Mutable MCMC state. The cached workspace is tied to the dataset passed
/// to [`init_state`]; every later call must use that same dataset.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: Parameters,
    pub link: LinkSpec,
    pub blocks: Vec<BlockStats>,
    pub index_sets: Vec<Vec<usize>>,
    pub iteration: usize,
    /// Langevin proposals rejected because the proposal's gradient or
    /// target was not finite.
    pub nonfinite_rejections: u64,
    rng: ChaCha8Rng,
    ws: Workspace,
    scratch: Scratch,
}

/// Post-burn-in acceptance summary of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub target: BlockTarget,
    pub step: f64,
    pub rate: f64,
}

/// Stored draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub link: LinkSpec,
    pub draws: Vec<Parameters>,
    /// Full-data log-likelihood of each draw.
    pub loglik: Vec<f64>,
    pub m_per_group: Vec<usize>,
    pub acceptance: Vec<BlockAcceptance>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Initialization.
// ---------------------------------------------------------------------------

/// Per-arm component counts chosen by BIC over univariate Gaussian mixtures
/// of log event times. Arms with fewer than two events get one component.
pub fn select_m_per_group(data: &SurvivalDataset, max_components: usize) -> Result<Vec<usize>> {
    data.require_all_groups()?;
    Ok((0..data.n_groups())
        .map(|g| {
            let v = data.log_event_times(g);
            if v.len() < 2 {
                1
            } else {
                cluster::bic_select_1d(&v, max_components)
            }
        })
        .collect())
}

/// Index sets, μ centroids and σ spreads from per-arm k-means of log event
/// times. Each cluster's σ is the square root of its within-cluster sum of
/// squares over (cluster size − 1); a zero or undefined spread becomes 1.
pub fn plan_init(data: &SurvivalDataset, m_per_group: &[usize]) -> Result<InitPlan> {
    data.require_all_groups()?;
    if m_per_group.len() != data.n_groups() {
        return Err(Error::Config(format!(
            "{} component counts given for {} groups",
            m_per_group.len(),
            data.n_groups()
        )));
    }
    if m_per_group.iter().any(|&m| m == 0) {
        return Err(Error::Config("every group needs at least one component".into()));
    }
    let mut index_sets = Vec::with_capacity(m_per_group.len());
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    for (g, &mg) in m_per_group.iter().enumerate() {
        let start = mu.len();
        index_sets.push((start..start + mg).collect());
        let events = data.log_event_times(g);
        if events.len() >= mg {
            let fit = cluster::kmeans_1d(&events, mg, 300)?;
            let mut order: Vec<usize> = (0..mg).collect();
            order.sort_by(|&a, &b| fit.centroids[a][0].total_cmp(&fit.centroids[b][0]));
            for j in order {
                let size = fit.labels.iter().filter(|&&l| l == j).count();
                let s = if size > 1 {
                    (fit.wss[j] / (size - 1) as f64).sqrt()
                } else {
                    f64::NAN
                };
                mu.push(fit.centroids[j][0]);
                sigma.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
            }
        } else {
            // Too few events for the requested count: spread starting
            // centres over whatever log-times the arm has.
            let source = if events.is_empty() {
                data.members(g).iter().map(|&i| data.time(i).ln()).collect()
            } else {
                events
            };
            mu.extend(cluster::quantile_centroids(&source, mg));
            sigma.extend(std::iter::repeat_n(1.0, mg));
        }
    }
    Ok(InitPlan {
        m_per_group: m_per_group.to_vec(),
        index_sets,
        mu,
        sigma,
    })
}

fn block_list(params: &Parameters) -> Vec<BlockTarget> {
    let mut out = Vec::new();
    out.extend((0..params.n_components()).map(BlockTarget::Mu));
    out.extend((0..params.n_components()).map(BlockTarget::BetaRow));
    out.extend((0..params.n_groups()).map(BlockTarget::LambdaRow));
    out.extend((0..params.theta.len()).map(BlockTarget::ThetaRow));
    out
}

/// Starting state: μ, σ from the plan, Γ the indicator of the index sets,
/// λ, β, θ drawn from standard normals, `p_g = 1/2`, unit variances.
pub fn init_state(
    data: &SurvivalDataset,
    link: LinkSpec,
    plan: &InitPlan,
    config: &SamplerConfig,
) -> Result<ChainState> {
    config.validate()?;
    link.validate()?;
    let m = plan.mu.len();
    let g_count = data.n_groups();
    let mut params = Parameters::zeros(m, g_count, data.n_predictors(), link);
    params.mu = plan.mu.clone();
    params.sigma = plan.sigma.clone();
    for (g, set) in plan.index_sets.iter().enumerate() {
        for row in params.gamma.iter_mut() {
            row[g] = false;
        }
        for &j in set {
            params.gamma[j][g] = true;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for row in params.lambda.iter_mut().chain(params.beta.iter_mut()).chain(params.theta.iter_mut()) {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    ChainState::from_parameters(params, link, data, plan.index_sets.clone(), config, rng)
}

impl ChainState {
    /// State from explicit parameters (the RNG stream is seeded from the config).
    pub fn new(
        params: Parameters,
        link: LinkSpec,
        data: &SurvivalDataset,
        index_sets: Vec<Vec<usize>>,
        config: &SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::from_parameters(params, link, data, index_sets, config, rng)
    }

    fn from_parameters(
        params: Parameters,
        link: LinkSpec,
        data: &SurvivalDataset,
        index_sets: Vec<Vec<usize>>,
        config: &SamplerConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        model::check_inputs(&params, link, data)?;
        if index_sets.len() != params.n_groups() {
            return Err(Error::Config("one index set per group is required".into()));
        }
        let ws = Workspace::new(&params, link, data);
        let scratch = Scratch::new(params.n_components());
        let blocks = block_list(&params)
            .into_iter()
            .map(|target| BlockStats {
                target,
                step: config.initial_step.unwrap_or(1.0),
                accepted: 0,
                proposed: 0,
                kept_accepted: 0,
                kept_proposed: 0,
            })
            .collect();
        let mut state = Self {
            params,
            link,
            blocks,
            index_sets,
            iteration: 0,
            nonfinite_rejections: 0,
            rng,
            ws,
            scratch,
        };
        if config.initial_step.is_none() {
            for b in 0..state.blocks.len() {
                let target = state.blocks[b].target;
                state.blocks[b].step = state.curvature_step(data, target, config.use_likelihood);
            }
        }
        Ok(state)
    }

    fn block_index(&self, target: BlockTarget) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.target == target)
            .ok_or_else(|| Error::Config(format!("unknown block {target:?}")))
    }

    /// Log target (block prior + likelihood of affected subjects) and its
    /// gradient at the current parameters.
    fn block_target(
        &mut self,
        data: &SurvivalDataset,
        target: BlockTarget,
        subjects: &[usize],
        use_likelihood: bool,
        grad: &mut [f64],
    ) -> f64 {
        let ll = if use_likelihood {
            gradients::data_value_grad(&self.params, data, &self.ws, target, subjects, &mut self.scratch, grad)
        } else {
            grad.iter_mut().for_each(|v| *v = 0.0);
            0.0
        };
        if ll == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let values = self.params.block_values(target);
        ll + gradients::block_prior_add(&values, self.params.block_variance(target), grad)
    }

    /// Writes a block and refreshes the caches that depend on it.
    fn write_block(&mut self, data: &SurvivalDataset, target: BlockTarget, values: &[f64]) {
        self.params.set_block(target, values);
        match target {
            BlockTarget::Mu(m) => self.ws.refresh_component(&self.params, m),
            BlockTarget::ThetaRow(k) => self.ws.refresh_hidden(&self.params, data, k),
            _ => {}
        }
    }

    /// `d^{-1/3} / max_j |H_jj|` with the diagonal Hessian of the block's log
    /// target estimated by differencing the analytic gradient.
    fn curvature_step(&mut self, data: &SurvivalDataset, target: BlockTarget, use_likelihood: bool) -> f64 {
        let fallback = self.params.block_variance(target);
        let x = self.params.block_values(target);
        let d = x.len();
        let subjects = gradients::affected_subjects(&self.params, data, target);
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        let mut max_curv: f64 = 0.0;
        for j in 0..d {
            let h = 1e-4 * x[j].abs().max(1.0);
            let mut v = x.clone();
            v[j] = x[j] + h;
            self.write_block(data, target, &v);
            let a = self.block_target(data, target, &subjects, use_likelihood, &mut gp);
            v[j] = x[j] - h;
            self.write_block(data, target, &v);
            let b = self.block_target(data, target, &subjects, use_likelihood, &mut gm);
            if a.is_finite() && b.is_finite() {
                let hjj = (gp[j] - gm[j]) / (2.0 * h);
                if hjj.is_finite() {
                    max_curv = max_curv.max(hjj.abs());
                }
            }
        }
        self.write_block(data, target, &x);
        let step = if max_curv > 0.0 {
            (d as f64).powf(-1.0 / 3.0) / max_curv
        } else {
            fallback
        };
        step.clamp(1e-8, 10.0)
    }
}

// ---------------------------------------------------------------------------
// Γ updates.
// ---------------------------------------------------------------------------

/// Draws a binary variable with log-weights `(log_w1, log_w0)` as the argmax
/// of the two Gumbel-perturbed logits. Returns `true` for the first option.
pub fn gumbel_max_bernoulli<R: Rng + ?Sized>(log_w1: f64, log_w0: f64, rng: &mut R) -> bool {
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    let x1 = log_w1 + gumbel.sample(rng);
    let x2 = log_w0 + gumbel.sample(rng);
    x1 > x2
}

fn group_loglik(params: &Parameters, data: &SurvivalDataset, ws: &Workspace, g: usize, scratch: &mut Scratch) -> f64 {
    model::loglik_over(params, data, ws, data.members(g).iter().copied(), scratch)
}

/// Full-conditional Gibbs draw of γ_{m,g}. Returns the new value.
///
/// The draw is skipped (value kept) when it could empty column `g`, or when
/// `m` belongs to arm `g`'s own index set and the chain is still inside
/// the freeze horizon.
pub fn gibbs_gamma(
    state: &mut ChainState,
    data: &SurvivalDataset,
    m: usize,
    g: usize,
    config: &SamplerConfig,
) -> Result<bool> {
    gamma_draw(state, data, m, g, config, &mut None)
}

/// [`gibbs_gamma`] with `cached` holding arm `g`'s log-likelihood under the
/// current Γ (filled on first use and kept in sync with the draw).
fn gamma_draw(
    state: &mut ChainState,
    data: &SurvivalDataset,
    m: usize,
    g: usize,
    config: &SamplerConfig,
    cached: &mut Option<f64>,
) -> Result<bool> {
    if m >= state.params.n_components() || g >= state.params.n_groups() {
        return Err(Error::Config(format!("gating index ({}, {}) out of range", m + 1, g + 1)));
    }
    let current = state.params.gamma[m][g];
    if state.iteration < config.gamma_freeze && state.index_sets[g].contains(&m) {
        return Ok(current);
    }
    if current && state.params.active_in_group(g) == 1 {
        return Ok(true);
    }
    let (ll1, ll0) = if config.use_likelihood {
        let ll_current = match *cached {
            Some(v) => v,
            None => group_loglik(&state.params, data, &state.ws, g, &mut state.scratch),
        };
        state.params.gamma[m][g] = !current;
        let ll_flipped = group_loglik(&state.params, data, &state.ws, g, &mut state.scratch);
        state.params.gamma[m][g] = current;
        if current {
            (ll_current, ll_flipped)
        } else {
            (ll_flipped, ll_current)
        }
    } else {
        (0.0, 0.0)
    };
    let p = state.params.hyper.p[g];
    let log_w1 = p.ln() + ll1;
    let log_w0 = (1.0 - p).ln() + ll0;
    if log_w1 == f64::NEG_INFINITY && log_w0 == f64::NEG_INFINITY {
        return Ok(current);
    }
    let value = gumbel_max_bernoulli(log_w1, log_w0, &mut state.rng);
    state.params.gamma[m][g] = value;
    if config.use_likelihood {
        *cached = Some(if value { ll1 } else { ll0 });
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Langevin moves.
// ---------------------------------------------------------------------------

/// `log q(to | from)` for the Langevin proposal with variance `eps`, up to
/// a constant shared by both directions.
fn log_proposal(to: &[f64], from: &[f64], grad_from: &[f64], eps: f64) -> f64 {
    let mut ss = 0.0;
    for j in 0..to.len() {
        let r = to[j] - from[j] - 0.5 * eps * grad_from[j];
        ss += r * r;
    }
    -ss / (2.0 * eps)
}

/// Log Metropolis–Hastings ratio for a Langevin move from `x` to `y`.
pub fn mala_log_ratio(lp_x: f64, grad_x: &[f64], x: &[f64], lp_y: f64, grad_y: &[f64], y: &[f64], eps: f64) -> f64 {
    lp_y - lp_x + log_proposal(x, y, grad_y, eps) - log_proposal(y, x, grad_x, eps)
}

/// One Metropolis-adjusted Langevin update of `target`. Returns whether the
/// proposal was accepted.
pub fn lmc_step(state: &mut ChainState, data: &SurvivalDataset, target: BlockTarget, config: &SamplerConfig) -> Result<bool> {
    gradients::check_target(&state.params, state.link, target)?;
    let b = state.block_index(target)?;
    let eps = state.blocks[b].step;
    let subjects = if config.use_likelihood {
        gradients::affected_subjects(&state.params, data, target)
    } else {
        Vec::new()
    };
    let x = state.params.block_values(target);
    let d = x.len();
    let mut grad_x = vec![0.0; d];
    let lp_x = state.block_target(data, target, &subjects, config.use_likelihood, &mut grad_x);
    let current_ok = lp_x.is_finite() && grad_x.iter().all(|v| v.is_finite());
    if !current_ok {
        // No usable drift at the current point: fall back to a symmetric
        // random-walk proposal.
        grad_x.iter_mut().for_each(|v| *v = 0.0);
    }
    let sd = eps.sqrt();
    let y: Vec<f64> = (0..d)
        .map(|j| {
            let z: f64 = StandardNormal.sample(&mut state.rng);
            x[j] + 0.5 * eps * grad_x[j] + sd * z
        })
        .collect();
    let saved_component = match target {
        BlockTarget::Mu(m) => Some(state.ws.component_column(m)),
        _ => None,
    };
    let saved_hidden = match target {
        BlockTarget::ThetaRow(k) => Some(state.ws.hidden_column(k)),
        _ => None,
    };
    state.write_block(data, target, &y);
    let mut grad_y = vec![0.0; d];
    let lp_y = state.block_target(data, target, &subjects, config.use_likelihood, &mut grad_y);
    let proposal_ok = lp_y.is_finite() && grad_y.iter().all(|v| v.is_finite());
    let u: f64 = state.rng.random();
    let accept = if !proposal_ok {
        if lp_y != f64::NEG_INFINITY {
            state.nonfinite_rejections += 1;
            log::debug!("rejecting {target:?} proposal with non-finite target or gradient");
        }
        false
    } else if !current_ok {
        true
    } else {
        let log_alpha = mala_log_ratio(lp_x, &grad_x, &x, lp_y, &grad_y, &y, eps);
        u.ln() < log_alpha
    };
    if !accept {
        state.params.set_block(target, &x);
        if let (BlockTarget::Mu(m), Some(saved)) = (target, &saved_component) {
            state.ws.restore_component_column(m, saved);
        }
        if let (BlockTarget::ThetaRow(k), Some(saved)) = (target, &saved_hidden) {
            state.ws.restore_hidden_column(k, saved);
        }
    }
    let stats = &mut state.blocks[b];
    stats.proposed += 1;
    stats.kept_proposed += 1;
    if accept {
        stats.accepted += 1;
        stats.kept_accepted += 1;
    }
    Ok(accept)
}

// ---------------------------------------------------------------------------
// Hyperparameters and adaptation.
// ---------------------------------------------------------------------------

fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// Conjugate refresh of `p_g` and the coefficient variances.
pub fn update_hyperparams(state: &mut ChainState, prior: &PriorConfig) {
    let p = &mut state.params;
    let m = p.n_components() as f64;
    for g in 0..p.n_groups() {
        let on = p.active_in_group(g) as f64;
        let beta = Beta::new(prior.beta_c + on, prior.beta_d + m - on).expect("positive beta parameters");
        p.hyper.p[g] = beta.sample(&mut state.rng);
    }
    let refresh = |values: Vec<f64>, rng: &mut ChaCha8Rng| -> f64 {
        let ss: f64 = values.iter().map(|v| v * v).sum();
        sample_inv_gamma(prior.ig_a + values.len() as f64 / 2.0, prior.ig_b + ss / 2.0, rng)
    };
    p.hyper.var_mu = refresh(p.mu.clone(), &mut state.rng);
    p.hyper.var_beta = refresh(p.beta.iter().flatten().copied().collect(), &mut state.rng);
    p.hyper.var_lambda = refresh(p.lambda.iter().flatten().copied().collect(), &mut state.rng);
    if !p.theta.is_empty() {
        p.hyper.var_theta = refresh(p.theta.iter().flatten().copied().collect(), &mut state.rng);
    }
}

/// Multiplies each block's step by 0.8 below the acceptance band and by 1.25
/// above it, then resets the window counters.
pub fn adapt_steps(state: &mut ChainState, config: &SamplerConfig) {
    for b in &mut state.blocks {
        let rate = b.rate();
        if rate < config.accept_low {
            b.step *= 0.8;
        } else if rate > config.accept_high {
            b.step *= 1.25;
        }
        b.accepted = 0;
        b.proposed = 0;
    }
}

/// Runs one full sweep and advances the iteration counter.
pub fn iterate(state: &mut ChainState, data: &SurvivalDataset, config: &SamplerConfig) -> Result<()> {
    if config.update_gamma {
        for g in 0..state.params.n_groups() {
            let mut cached = None;
            for m in 0..state.params.n_components() {
                gamma_draw(state, data, m, g, config, &mut cached)?;
            }
        }
    }
    for b in 0..state.blocks.len() {
        let target = state.blocks[b].target;
        lmc_step(state, data, target, config)?;
    }
    if config.update_hyper {
        update_hyperparams(state, &config.prior);
    }
    state.iteration += 1;
    let t = state.iteration;
    if t <= config.burn_in && t % config.adapt_interval == 0 {
        adapt_steps(state, config);
    }
    if t == config.burn_in {
        for b in &mut state.blocks {
            b.kept_accepted = 0;
            b.kept_proposed = 0;
        }
    }
    Ok(())
}

/// Full-data log-likelihood at the current state.
pub fn current_loglik(state: &mut ChainState, data: &SurvivalDataset) -> f64 {
    model::loglik_over(&state.params, data, &state.ws, 0..data.len(), &mut state.scratch)
}

/// Runs a prepared chain for `config.iterations` sweeps and stores the
/// thinned post-burn-in draws.
pub fn run_from_state(mut state: ChainState, data: &SurvivalDataset, config: &SamplerConfig) -> Result<(PosteriorDraws, ChainState)> {
    config.validate()?;
    let mut draws = Vec::new();
    let mut loglik = Vec::new();
    for t in 0..config.iterations {
        iterate(&mut state, data, config)?;
        if t >= config.burn_in && (t - config.burn_in) % config.thin == 0 {
            draws.push(state.params.clone());
            loglik.push(current_loglik(&mut state, data));
        }
    }
    let m_per_group = state.index_sets.iter().map(Vec::len).collect();
    let acceptance = state
        .blocks
        .iter()
        .map(|b| BlockAcceptance {
            target: b.target,
            step: b.step,
            rate: if b.kept_proposed == 0 {
                f64::NAN
            } else {
                b.kept_accepted as f64 / b.kept_proposed as f64
            },
        })
        .collect();
    Ok((
        PosteriorDraws {
            link: state.link,
            draws,
            loglik,
            m_per_group,
            acceptance,
        },
        state,
    ))
}

/// Chooses component counts, initializes and runs the sampler.
pub fn run_chain(data: &SurvivalDataset, link: LinkSpec, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let m = select_m_per_group(data, config.max_components)?;
    run_chain_with_counts(data, link, config, &m)
}

/// As [`run_chain`] with user-supplied per-arm component counts.
pub fn run_chain_with_counts(
    data: &SurvivalDataset,
    link: LinkSpec,
    config: &SamplerConfig,
    m_per_group: &[usize],
) -> Result<PosteriorDraws> {
    config.validate()?;
    let plan = plan_init(data, m_per_group)?;
    let state = init_state(data, link, &plan, config)?;
    Ok(run_from_state(state, data, config)?.0)
}
