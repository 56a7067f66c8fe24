//! Synthetic datasets with known truth.
//!
//! The well-specified generator draws survival times from the model itself
//! (constant log-normal components); the misspecified generator lets each
//! component's log-mean depend linearly on covariates, which the fitted
//! model cannot represent. In both, the logistic link output is the
//! probability of being *susceptible*, shifted by an offset; the cure
//! probability is its complement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::effects::{rmst_from_parts, survival_from_parts};
use crate::error::{Error, Result};
use crate::special::{log_sum_exp, sigmoid};

/// Covariate rows bundled for the misspecified scenario: standardized age,
/// standardized log white-cell count, sex (0/1) and CNS status (0/1).
pub const BUNDLED_COVARIATES_CSV: &str = include_str!("../data/aall_like_covariates.csv");

/// Default component file for the misspecified scenario.
pub const BUNDLED_COMPONENTS_JSON: &str = include_str!("../data/misspecified_components.json");

/// Component log-means used by the well-specified scenario.
pub const DEFAULT_MU: [f64; 9] = [-1.2, -0.7, -0.25, 0.1, 0.4, 0.7, 1.0, 1.3, 1.75];
/// Component log-scales used by the well-specified scenario.
pub const DEFAULT_SIGMA: [f64; 9] = [0.18, 0.12, 0.1, 0.08, 0.08, 0.08, 0.09, 0.1, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    WellSpecified,
    Misspecified,
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub n_groups: usize,
    /// Number of Uniform(0, 1) predictors (well-specified only).
    pub n_predictors: usize,
    /// Number of components (well-specified only; the component file fixes it otherwise).
    pub n_components: usize,
    /// Added to the susceptible probability before clamping.
    pub offset: f64,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub beta_sd: f64,
    pub gamma_prob: f64,
    pub censor_rate: f64,
    /// Administrative follow-up cap; `None` picks 25 (well-specified) or 5.
    pub follow_up: Option<f64>,
    pub cure_time: f64,
    /// Width of the uniform jitter added to censoring times beyond the cap.
    pub cap_noise: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::WellSpecified,
            n: 180,
            n_groups: 3,
            n_predictors: 3,
            n_components: 9,
            offset: 0.0,
            lambda_low: -2.0,
            lambda_high: 0.0,
            beta_sd: 0.1,
            gamma_prob: 0.6,
            censor_rate: 0.05,
            follow_up: None,
            cure_time: 1000.0,
            cap_noise: 0.01,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn cap(&self) -> f64 {
        self.follow_up.unwrap_or(match self.scenario {
            Scenario::WellSpecified => 25.0,
            Scenario::Misspecified => 5.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_groups == 0 {
            return Err(Error::Config("need at least one subject and one group".into()));
        }
        if !(0.0..=1.0).contains(&self.offset) {
            return Err(Error::Config(format!("offset must lie in [0, 1], got {}", self.offset)));
        }
        if !(self.lambda_low < self.lambda_high) {
            return Err(Error::Config("lambda interval must have low < high".into()));
        }
        if !(self.censor_rate > 0.0) || !(self.cap() > 0.0) || !(self.cap_noise >= 0.0) {
            return Err(Error::Config("censoring rate and follow-up cap must be positive".into()));
        }
        if !(self.beta_sd >= 0.0) || !(0.0..=1.0).contains(&self.gamma_prob) {
            return Err(Error::Config("invalid beta_sd or gamma_prob".into()));
        }
        if self.scenario == Scenario::WellSpecified && (self.n_components == 0 || self.n_components > DEFAULT_MU.len()) {
            return Err(Error::Config(format!(
                "well-specified scenario supports 1..={} components",
                DEFAULT_MU.len()
            )));
        }
        Ok(())
    }
}

/// Per-component regression of the log-mean on covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTable {
    pub xi0: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl ComponentTable {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_COMPONENTS_JSON).expect("bundled component file parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.xi0.len();
        if m == 0 || self.xi.len() != m || self.sigma.len() != m {
            return Err(Error::Data("component file needs equal-length xi0, xi and sigma".into()));
        }
        let p = self.xi[0].len();
        if self.xi.iter().any(|r| r.len() != p) {
            return Err(Error::Data("component regression rows differ in length".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Data("component sigma must be positive".into()));
        }
        Ok(())
    }

    /// Number of leading predictors the log-means depend on.
    pub fn n_active(&self) -> usize {
        self.xi[0].len()
    }
}

/// Covariate rows (without intercept) and their column names.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CovariateTable {
    pub fn bundled() -> Self {
        Self::from_csv(BUNDLED_COVARIATES_CSV).expect("bundled covariate table parses")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Data("empty covariate table".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("covariate row {}: {e}", k + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != names.len() {
                return Err(Error::Data(format!("covariate row {} has {} fields", k + 1, row.len())));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Data("covariate table has no rows".into()));
        }
        Ok(Self { names, rows })
    }
}

/// Generating parameters and per-subject latent quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: Scenario,
    pub offset: f64,
    /// Cure-link coefficients per arm (intercept first); the logistic of
    /// `λ_gᵀx` is the susceptible probability before the offset.
    pub lambda: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// `gamma[m][g]`.
    pub gamma: Vec<Vec<bool>>,
    /// Constant log-means (well-specified) or the intercepts ξ₀ (misspecified).
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Covariate slopes of the log-means (misspecified only).
    pub xi: Option<Vec<Vec<f64>>>,
    pub follow_up: f64,
    pub susceptible_prob: Vec<f64>,
    pub cured: Vec<bool>,
    /// Component of each susceptible subject.
    pub component: Vec<Option<usize>>,
}

impl GroundTruth {
    /// Number of leading covariates (after the intercept) used by the truth.
    fn n_active(&self) -> usize {
        self.lambda[0].len() - 1
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() < self.n_active() + 1 {
            return Err(Error::Config(format!(
                "covariate row has {} entries, truth needs {}",
                x.len(),
                self.n_active() + 1
            )));
        }
        Ok(())
    }

    /// Susceptible probability (after offset and clamping) at covariates `x`
    /// (intercept first; extra trailing predictors are ignored).
    pub fn susceptible_at(&self, x: &[f64], g: usize) -> Result<f64> {
        self.check_x(x)?;
        Ok(susceptible_probability(&self.lambda[g], x, self.offset))
    }

    pub fn cure_prob_at(&self, x: &[f64], g: usize) -> Result<f64> {
        Ok(1.0 - self.susceptible_at(x, g)?)
    }

    pub fn weights_at(&self, x: &[f64], g: usize) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(gated_softmax(&self.beta, &self.gamma, x, g))
    }

    /// Component log-means at `x`.
    pub fn mu_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(match &self.xi {
            None => self.mu.clone(),
            Some(xi) => self
                .mu
                .iter()
                .zip(xi)
                .map(|(x0, row)| x0 + row.iter().zip(&x[1..]).map(|(a, b)| a * b).sum::<f64>())
                .collect(),
        })
    }

    /// True RMST at horizon `h` for arm `g`.
    pub fn rmst(&self, x: &[f64], g: usize, h: f64) -> Result<f64> {
        let c = self.cure_prob_at(x, g)?;
        let w = self.weights_at(x, g)?;
        Ok(rmst_from_parts(c, &w, &self.mu_at(x)?, &self.sigma, h))
    }

    /// True survival probability at `h` for arm `g`.
    pub fn survival(&self, x: &[f64], g: usize, h: f64) -> Result<f64> {
        let c = self.cure_prob_at(x, g)?;
        let w = self.weights_at(x, g)?;
        Ok(survival_from_parts(c, &w, &self.mu_at(x)?, &self.sigma, h))
    }

    /// True RMST contrast ζ between arms `g` and `reference`.
    pub fn zeta(&self, x: &[f64], g: usize, reference: usize, h: f64) -> Result<f64> {
        Ok(self.rmst(x, g, h)? - self.rmst(x, reference, h)?)
    }

    /// True survival-probability contrast τ between arms `g` and `reference`.
    pub fn tau(&self, x: &[f64], g: usize, reference: usize, h: f64) -> Result<f64> {
        Ok(self.survival(x, g, h)? - self.survival(x, reference, h)?)
    }
}

fn linear(coef: &[f64], x: &[f64]) -> f64 {
    coef.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn susceptible_probability(lambda: &[f64], x: &[f64], offset: f64) -> f64 {
    (sigmoid(linear(lambda, x)) + offset).clamp(1e-6, 1.0 - 1e-6)
}

fn gated_softmax(beta: &[Vec<f64>], gamma: &[Vec<bool>], x: &[f64], g: usize) -> Vec<f64> {
    let logits: Vec<f64> = beta
        .iter()
        .zip(gamma)
        .map(|(b, row)| if row[g] { linear(b, x) } else { f64::NEG_INFINITY })
        .collect();
    let norm = log_sum_exp(&logits);
    logits.iter().map(|l| (l - norm).exp()).collect()
}

struct Shared {
    lambda: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    gamma: Vec<Vec<bool>>,
}

fn draw_shared(config: &SimConfig, m: usize, n_active: usize, rng: &mut ChaCha8Rng) -> Shared {
    let lam = Uniform::new(config.lambda_low, config.lambda_high).expect("valid lambda interval");
    let lambda = (0..config.n_groups)
        .map(|_| (0..=n_active).map(|_| lam.sample(rng)).collect())
        .collect();
    let beta = (0..m)
        .map(|_| {
            (0..=n_active)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    config.beta_sd * z
                })
                .collect()
        })
        .collect();
    let mut gamma = vec![vec![false; config.n_groups]; m];
    for g in 0..config.n_groups {
        // Redraw a column until at least one component is active.
        loop {
            for row in gamma.iter_mut() {
                row[g] = rng.random::<f64>() < config.gamma_prob;
            }
            if gamma.iter().any(|row| row[g]) {
                break;
            }
        }
    }
    Shared { lambda, beta, gamma }
}

fn subject_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

fn sample_categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (m, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = m;
            if u < acc {
                return m;
            }
        }
    }
    last
}

/// Censoring time: exponential, pushed just past the cap when it exceeds it.
fn censor_time(config: &SimConfig, rng: &mut ChaCha8Rng) -> f64 {
    let exp = Exp::new(config.censor_rate).expect("positive censoring rate");
    let cap = config.cap();
    let mut c: f64 = exp.sample(rng);
    while c <= 0.0 {
        c = exp.sample(rng);
    }
    if c > cap {
        c = cap + config.cap_noise * rng.random::<f64>();
    }
    c
}

struct Subject {
    time: f64,
    censored: bool,
    susceptible: f64,
    cured: bool,
    component: Option<usize>,
}

fn finish(t_event: f64, c: f64, susceptible: f64, cured: bool, component: Option<usize>) -> Subject {
    // Ties resolve toward the event.
    let censored = c < t_event;
    Subject {
        time: if censored { c } else { t_event },
        censored,
        susceptible,
        cured,
        component,
    }
}

fn assemble(
    config: &SimConfig,
    shared: Shared,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    xi: Option<Vec<Vec<f64>>>,
    predictors: Vec<Vec<f64>>,
    subjects: Vec<Subject>,
) -> Result<(SurvivalDataset, GroundTruth)> {
    let groups = (0..config.n).map(|i| i % config.n_groups).collect();
    let data = SurvivalDataset::from_raw(
        subjects.iter().map(|s| s.time).collect(),
        subjects.iter().map(|s| s.censored).collect(),
        groups,
        predictors,
        config.n_groups,
    )?;
    let truth = GroundTruth {
        scenario: config.scenario,
        offset: config.offset,
        lambda: shared.lambda,
        beta: shared.beta,
        gamma: shared.gamma,
        mu,
        sigma,
        xi,
        follow_up: config.cap(),
        susceptible_prob: subjects.iter().map(|s| s.susceptible).collect(),
        cured: subjects.iter().map(|s| s.cured).collect(),
        component: subjects.iter().map(|s| s.component).collect(),
    };
    Ok((data, truth))
}

/// Well-specified generator: Uniform(0, 1) covariates, arms assigned in
/// rotation, constant log-normal components.
pub fn generate_well_specified(config: &SimConfig) -> Result<(SurvivalDataset, GroundTruth)> {
    config.validate()?;
    let m = config.n_components;
    let p = config.n_predictors;
    let mu = DEFAULT_MU[..m].to_vec();
    let sigma = DEFAULT_SIGMA[..m].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared = draw_shared(config, m, p, &mut rng);
    let mut predictors = Vec::with_capacity(config.n);
    let mut subjects = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut r = subject_rng(config.seed, i);
        let g = i % config.n_groups;
        let xs: Vec<f64> = (0..p).map(|_| r.random::<f64>()).collect();
        let mut x = Vec::with_capacity(p + 1);
        x.push(1.0);
        x.extend(&xs);
        let s = susceptible_probability(&shared.lambda[g], &x, config.offset);
        let cured = r.random::<f64>() < 1.0 - s;
        let (t_event, component) = if cured {
            (config.cure_time, None)
        } else {
            let w = gated_softmax(&shared.beta, &shared.gamma, &x, g);
            let k = sample_categorical(&w, &mut r);
            let z: f64 = StandardNormal.sample(&mut r);
            ((mu[k] + sigma[k] * z).exp(), Some(k))
        };
        let c = censor_time(config, &mut r);
        subjects.push(finish(t_event, c, s, cured, component));
        predictors.push(xs);
    }
    assemble(config, shared, mu, sigma, None, predictors, subjects)
}

/// Misspecified generator: covariate rows taken in order from `covariates`
/// (cycling if `n` exceeds the table), subject-specific log-means
/// `ξ₀ₘ + ξₘᵀx` over the table's leading columns.
pub fn generate_misspecified(
    config: &SimConfig,
    covariates: &CovariateTable,
    components: &ComponentTable,
) -> Result<(SurvivalDataset, GroundTruth)> {
    config.validate()?;
    components.validate()?;
    let m = components.xi0.len();
    let n_active = components.n_active();
    let width = covariates.names.len();
    if n_active > width {
        return Err(Error::Data(format!(
            "component file uses {n_active} covariates, table has {width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared = draw_shared(config, m, n_active, &mut rng);
    let mut predictors = Vec::with_capacity(config.n);
    let mut subjects = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut r = subject_rng(config.seed, i);
        let g = i % config.n_groups;
        let xs = covariates.rows[i % covariates.rows.len()].clone();
        let mut x = Vec::with_capacity(width + 1);
        x.push(1.0);
        x.extend(&xs);
        let s = susceptible_probability(&shared.lambda[g], &x, config.offset);
        let w = gated_softmax(&shared.beta, &shared.gamma, &x, g);
        let k = sample_categorical(&w, &mut r);
        let cured = r.random::<f64>() < 1.0 - s;
        let t_event = if cured {
            config.cure_time
        } else {
            let mu_ik = components.xi0[k] + linear(&components.xi[k], &xs);
            let normal = Normal::new(mu_ik, components.sigma[k]).expect("positive sigma");
            normal.sample(&mut r).exp()
        };
        let c = censor_time(config, &mut r);
        subjects.push(finish(t_event, c, s, cured, (!cured).then_some(k)));
        predictors.push(xs);
    }
    assemble(
        config,
        shared,
        components.xi0.clone(),
        components.sigma.clone(),
        Some(components.xi.clone()),
        predictors,
        subjects,
    )
}

/// Dispatches on `config.scenario`, using the bundled tables for the
/// misspecified case.
pub fn generate(config: &SimConfig) -> Result<(SurvivalDataset, GroundTruth)> {
    match config.scenario {
        Scenario::WellSpecified => generate_well_specified(config),
        Scenario::Misspecified => {
            generate_misspecified(config, &CovariateTable::bundled(), &ComponentTable::bundled())
        }
    }
}

/// Product-limit survival estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// Survival just after each event time.
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KaplanMeier {
    /// Estimate at time `t` (right-continuous step function).
    pub fn value_at(&self, t: f64) -> f64 {
        match self.times.iter().rposition(|&s| s <= t) {
            Some(k) => self.survival[k],
            None => 1.0,
        }
    }

    /// Value after the last event (1 when there are no events).
    pub fn final_value(&self) -> f64 {
        self.survival.last().copied().unwrap_or(1.0)
    }
}

/// Kaplan–Meier estimate for arm `g`. Subjects censored at an event time
/// remain in that time's risk set.
pub fn kaplan_meier(data: &SurvivalDataset, g: usize) -> Result<KaplanMeier> {
    if g >= data.n_groups() {
        return Err(Error::Config(format!("group {} outside 1..={}", g + 1, data.n_groups())));
    }
    let members = data.members(g);
    if members.is_empty() {
        return Err(Error::Data(format!("group {} has no subjects", g + 1)));
    }
    let mut obs: Vec<(f64, bool)> = members.iter().map(|&i| (data.time(i), data.is_censored(i))).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut km = KaplanMeier {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut s = 1.0;
    let mut k = 0;
    while k < obs.len() {
        let t = obs[k].0;
        let at_risk = obs.len() - k;
        let mut d = 0;
        let mut j = k;
        while j < obs.len() && obs[j].0 == t {
            if !obs[j].1 {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            km.times.push(t);
            km.survival.push(s);
            km.at_risk.push(at_risk);
            km.events.push(d);
        }
        k = j;
    }
    Ok(km)
}
