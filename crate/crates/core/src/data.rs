//! Right-censored multi-arm survival data.

use crate::error::{Error, Result};

/// Subjects with observed time, censoring flag, treatment arm and covariates.
///
/// The censoring flag follows the convention `censored = true` (δ = 1) for a
/// censored observation and `false` (δ = 0) for an observed event. Groups are
/// stored zero-based; files and the CLI use one-based arm labels. Each
/// covariate row carries a leading constant 1 for the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    censored: Vec<bool>,
    groups: Vec<usize>,
    covariates: Vec<Vec<f64>>,
    n_groups: usize,
    n_predictors: usize,
    members: Vec<Vec<usize>>,
}

impl SurvivalDataset {
    /// Builds a dataset from covariate rows *without* the intercept column.
    pub fn from_raw(
        times: Vec<f64>,
        censored: Vec<bool>,
        groups: Vec<usize>,
        predictors: Vec<Vec<f64>>,
        n_groups: usize,
    ) -> Result<Self> {
        let n_predictors = predictors.first().map_or(0, Vec::len);
        let covariates = predictors
            .into_iter()
            .map(|row| {
                let mut full = Vec::with_capacity(row.len() + 1);
                full.push(1.0);
                full.extend(row);
                full
            })
            .collect();
        Self::new(times, censored, groups, covariates, n_groups, n_predictors)
    }

    /// Builds a dataset from covariate rows that already include the
    /// intercept. `n_predictors` is needed to describe empty datasets.
    pub fn new(
        times: Vec<f64>,
        censored: Vec<bool>,
        groups: Vec<usize>,
        covariates: Vec<Vec<f64>>,
        n_groups: usize,
        n_predictors: usize,
    ) -> Result<Self> {
        let n = times.len();
        if censored.len() != n || groups.len() != n || covariates.len() != n {
            return Err(Error::Data(format!(
                "column lengths differ: times={}, censored={}, groups={}, covariates={}",
                n,
                censored.len(),
                groups.len(),
                covariates.len()
            )));
        }
        if n_groups == 0 {
            return Err(Error::Data("at least one treatment group is required".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Data(format!("subject {i}: time must be positive and finite, got {t}")));
            }
        }
        let mut members = vec![Vec::new(); n_groups];
        for (i, &g) in groups.iter().enumerate() {
            if g >= n_groups {
                return Err(Error::Data(format!(
                    "subject {i}: group {} outside 1..={n_groups}",
                    g + 1
                )));
            }
            members[g].push(i);
        }
        for (i, row) in covariates.iter().enumerate() {
            if row.len() != n_predictors + 1 {
                return Err(Error::Data(format!(
                    "subject {i}: expected {} covariates (with intercept), got {}",
                    n_predictors + 1,
                    row.len()
                )));
            }
            if row[0] != 1.0 {
                return Err(Error::Data(format!("subject {i}: intercept column must be 1")));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("subject {i}: non-finite covariate")));
            }
        }
        Ok(Self {
            times,
            censored,
            groups,
            covariates,
            n_groups,
            n_predictors,
            members,
        })
    }

    /// A dataset with no subjects; only the prior contributes to posteriors
    /// evaluated against it.
    pub fn empty(n_groups: usize, n_predictors: usize) -> Self {
        Self {
            times: Vec::new(),
            censored: Vec::new(),
            groups: Vec::new(),
            covariates: Vec::new(),
            n_groups,
            n_predictors,
            members: vec![Vec::new(); n_groups],
        }
    }

    /// Checks that every arm has at least one subject. Fitting requires it.
    pub fn require_all_groups(&self) -> Result<()> {
        for (g, m) in self.members.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::Data(format!("group {} has no subjects", g + 1)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// Number of predictors P, not counting the intercept.
    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn is_censored(&self, i: usize) -> bool {
        self.censored[i]
    }

    pub fn group(&self, i: usize) -> usize {
        self.groups[i]
    }

    /// Covariate row including the leading intercept.
    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn censor_flags(&self) -> &[bool] {
        &self.censored
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// Indices of the subjects assigned to group `g`.
    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    /// Column `p` (1-based predictor index; 0 is the intercept).
    pub fn predictor_column(&self, p: usize) -> Vec<f64> {
        self.covariates.iter().map(|row| row[p]).collect()
    }

    /// Returns a new dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut members = vec![Vec::new(); self.n_groups];
        for (new_i, &i) in indices.iter().enumerate() {
            members[self.groups[i]].push(new_i);
        }
        Self {
            times: indices.iter().map(|&i| self.times[i]).collect(),
            censored: indices.iter().map(|&i| self.censored[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            covariates: indices.iter().map(|&i| self.covariates[i].clone()).collect(),
            n_groups: self.n_groups,
            n_predictors: self.n_predictors,
            members,
        }
    }

    /// Flips every censoring flag (for sources using δ = 1 ⇒ event).
    pub fn flip_censoring(&mut self) {
        for c in &mut self.censored {
            *c = !*c;
        }
    }

    /// Log event times of uncensored subjects in group `g`.
    pub fn log_event_times(&self, g: usize) -> Vec<f64> {
        self.members[g]
            .iter()
            .filter(|&&i| !self.censored[i])
            .map(|&i| self.times[i].ln())
            .collect()
    }
}
