//! Analytic gradients of the log posterior for each Langevin-updated block,
//! and a central finite-difference oracle.
//!
//! Per-subject derivatives with respect to the link outputs come from
//! [`crate::model`]; this module applies the chain rule through the shared
//! features and adds the Normal prior term `−x / σ²` of the block.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::model::{self, LinkSpec, Parameters, PriorConfig, Scratch, Workspace};
use crate::special::activation_deriv;

/// A coefficient block updated jointly by one Langevin move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockTarget {
    Mu(usize),
    BetaRow(usize),
    LambdaRow(usize),
    ThetaRow(usize),
}

/// Gradient of the log posterior with respect to one block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlock {
    pub target: BlockTarget,
    pub value: Vec<f64>,
}

impl Parameters {
    /// Current values of a block.
    pub fn block_values(&self, target: BlockTarget) -> Vec<f64> {
        match target {
            BlockTarget::Mu(m) => vec![self.mu[m]],
            BlockTarget::BetaRow(m) => self.beta[m].clone(),
            BlockTarget::LambdaRow(g) => self.lambda[g].clone(),
            BlockTarget::ThetaRow(k) => self.theta[k].clone(),
        }
    }

    /// Overwrites a block; `values` must have the block's length.
    pub fn set_block(&mut self, target: BlockTarget, values: &[f64]) {
        match target {
            BlockTarget::Mu(m) => self.mu[m] = values[0],
            BlockTarget::BetaRow(m) => self.beta[m].copy_from_slice(values),
            BlockTarget::LambdaRow(g) => self.lambda[g].copy_from_slice(values),
            BlockTarget::ThetaRow(k) => self.theta[k].copy_from_slice(values),
        }
    }

    /// Prior variance of a block.
    pub fn block_variance(&self, target: BlockTarget) -> f64 {
        match target {
            BlockTarget::Mu(_) => self.hyper.var_mu,
            BlockTarget::BetaRow(_) => self.hyper.var_beta,
            BlockTarget::LambdaRow(_) => self.hyper.var_lambda,
            BlockTarget::ThetaRow(_) => self.hyper.var_theta,
        }
    }
}

pub(crate) fn check_target(params: &Parameters, link: LinkSpec, target: BlockTarget) -> Result<()> {
    let (index, bound, name) = match target {
        BlockTarget::Mu(m) => (m, params.n_components(), "component"),
        BlockTarget::BetaRow(m) => (m, params.n_components(), "component"),
        BlockTarget::LambdaRow(g) => (g, params.n_groups(), "group"),
        BlockTarget::ThetaRow(k) => {
            if link == LinkSpec::Linear {
                return Err(Error::Config("hidden-layer gradient requested for the linear link".into()));
            }
            (k, params.theta.len(), "hidden unit")
        }
    };
    if index >= bound {
        return Err(Error::Config(format!("{name} index {} outside 1..={bound}", index + 1)));
    }
    Ok(())
}

/// Subjects whose likelihood term depends on the block.
pub(crate) fn affected_subjects(params: &Parameters, data: &SurvivalDataset, target: BlockTarget) -> Vec<usize> {
    match target {
        BlockTarget::Mu(m) | BlockTarget::BetaRow(m) => {
            let mut out: Vec<usize> = (0..data.n_groups())
                .filter(|&g| params.gamma[m][g])
                .flat_map(|g| data.members(g).iter().copied())
                .collect();
            out.sort_unstable();
            out
        }
        BlockTarget::LambdaRow(g) => data.members(g).to_vec(),
        BlockTarget::ThetaRow(_) => (0..data.len()).collect(),
    }
}

/// Data log-likelihood over `subjects` and its gradient with respect to the
/// block (no prior term). Returns `-∞` with an unspecified gradient when a
/// subject has zero likelihood.
pub(crate) fn data_value_grad(
    params: &Parameters,
    data: &SurvivalDataset,
    ws: &Workspace,
    target: BlockTarget,
    subjects: &[usize],
    scratch: &mut Scratch,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|v| *v = 0.0);
    let mut total = 0.0;
    for &i in subjects {
        let (ll, d_eta) = model::subject_eval(params, data, ws, i, scratch, true);
        if ll == f64::NEG_INFINITY || ll.is_nan() {
            return f64::NEG_INFINITY;
        }
        total += ll;
        match target {
            BlockTarget::Mu(m) => grad[0] += scratch.d_mu[m],
            BlockTarget::BetaRow(m) => {
                let w = scratch.d_f[m];
                for (gv, y) in grad.iter_mut().zip(ws.feat(i)) {
                    *gv += w * y;
                }
            }
            BlockTarget::LambdaRow(_) => {
                for (gv, y) in grad.iter_mut().zip(ws.feat(i)) {
                    *gv += d_eta * y;
                }
            }
            BlockTarget::ThetaRow(k) => {
                let g = data.group(i);
                let mut d_y = d_eta * params.lambda[g][k + 1];
                for (m, row) in params.beta.iter().enumerate() {
                    d_y += scratch.d_f[m] * row[k + 1];
                }
                let w = d_y * activation_deriv(ws.pre(i, k));
                for (gv, x) in grad.iter_mut().zip(data.covariates(i)) {
                    *gv += w * x;
                }
            }
        }
    }
    total
}

/// Normal log prior of a block (up to its constant) and its gradient added
/// into `grad`.
pub(crate) fn block_prior_add(values: &[f64], var: f64, grad: &mut [f64]) -> f64 {
    let mut lp = 0.0;
    for (gv, v) in grad.iter_mut().zip(values) {
        *gv -= v / var;
        lp -= v * v / (2.0 * var);
    }
    lp
}

/// Gradient of `log_likelihood + log_prior` with respect to a block.
pub fn block_gradient(
    params: &Parameters,
    link: LinkSpec,
    data: &SurvivalDataset,
    target: BlockTarget,
) -> Result<GradientBlock> {
    model::check_inputs(params, link, data)?;
    check_target(params, link, target)?;
    let ws = Workspace::new(params, link, data);
    let mut scratch = Scratch::new(params.n_components());
    let values = params.block_values(target);
    let mut grad = vec![0.0; values.len()];
    let subjects = affected_subjects(params, data, target);
    let ll = data_value_grad(params, data, &ws, target, &subjects, &mut scratch, &mut grad);
    if ll == f64::NEG_INFINITY {
        return Err(Error::Numerical("log-likelihood is -inf; gradient undefined".into()));
    }
    block_prior_add(&values, params.block_variance(target), &mut grad);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient for {target:?}")));
    }
    Ok(GradientBlock { target, value: grad })
}

/// ∂/∂μ_m of the log posterior.
pub fn grad_mu(params: &Parameters, link: LinkSpec, data: &SurvivalDataset, m: usize) -> Result<f64> {
    Ok(block_gradient(params, link, data, BlockTarget::Mu(m))?.value[0])
}

/// ∂/∂β_m of the log posterior.
pub fn grad_beta(params: &Parameters, link: LinkSpec, data: &SurvivalDataset, m: usize) -> Result<Vec<f64>> {
    Ok(block_gradient(params, link, data, BlockTarget::BetaRow(m))?.value)
}

/// ∂/∂λ_g of the log posterior.
pub fn grad_lambda(params: &Parameters, link: LinkSpec, data: &SurvivalDataset, g: usize) -> Result<Vec<f64>> {
    Ok(block_gradient(params, link, data, BlockTarget::LambdaRow(g))?.value)
}

/// ∂/∂θ_k of the log posterior (neural-net link only).
pub fn grad_theta(params: &Parameters, link: LinkSpec, data: &SurvivalDataset, k: usize) -> Result<Vec<f64>> {
    Ok(block_gradient(params, link, data, BlockTarget::ThetaRow(k))?.value)
}

/// Central finite difference of `log_likelihood + log_prior` with respect to
/// a block. Coordinate `j` uses the step `step · max(1, |x_j|)`.
pub fn finite_diff(
    params: &Parameters,
    link: LinkSpec,
    data: &SurvivalDataset,
    target: BlockTarget,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    check_target(params, link, target)?;
    let prior = PriorConfig::default();
    let objective = |p: &Parameters| -> Result<f64> {
        Ok(model::log_likelihood(p, link, data)? + model::log_prior(p, &prior)?)
    };
    let base = params.block_values(target);
    let mut work = params.clone();
    let mut out = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let h = step * base[j].abs().max(1.0);
        let mut v = base.clone();
        v[j] = base[j] + h;
        work.set_block(target, &v);
        let up = objective(&work)?;
        v[j] = base[j] - h;
        work.set_block(target, &v);
        let down = objective(&work)?;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
