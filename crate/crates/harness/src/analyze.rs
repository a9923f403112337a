//! Closed-form emphasis report for a finite MDP, as exposed by the CLI.

use std::fs;
use std::path::Path;

use tetd_core::analysis::{EmphasisProblem, EmphasisReport};
use tetd_core::envs::baird;
use tetd_core::features::FeatureMap;
use tetd_core::mdp::{InterestFunction, TabularMdp, TabularPolicy};

use crate::error::{HarnessError, Result};

/// Everything the analysis needs besides the truncation length.
#[derive(Debug, Clone)]
pub struct AnalysisInput {
    pub mdp: TabularMdp,
    pub behavior: TabularPolicy,
    pub target: TabularPolicy,
    /// Per state, or per pair `s · |A| + a` when `control` is set.
    pub interest: InterestFunction,
    /// Rows indexed like `interest`.
    pub features: FeatureMap,
    pub control: bool,
}

impl AnalysisInput {
    /// Baird's counterexample with its standard behavior policy and features.
    pub fn baird(p_dashed: f64, control: bool) -> Result<Self> {
        let mdp = baird::baird_mdp();
        let (features, len) = if control {
            (baird::baird_control_features(), mdp.n_pairs())
        } else {
            (baird::baird_features(), mdp.n_states())
        };
        Ok(Self {
            behavior: baird::baird_behavior(),
            target: baird::baird_target(p_dashed)?,
            interest: InterestFunction::ones(len),
            features,
            control,
            mdp,
        })
    }

    pub fn problem(&self) -> Result<EmphasisProblem> {
        let problem = if self.control {
            EmphasisProblem::control(&self.mdp, &self.behavior, &self.target, &self.interest)?
        } else {
            EmphasisProblem::prediction(&self.mdp, &self.behavior, &self.target, &self.interest)?
        };
        Ok(problem)
    }

    pub fn report(&self, n: usize) -> Result<EmphasisReport> {
        Ok(self.problem()?.report(&self.features, n)?)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// Parses an MDP document from a JSON file.
pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    Ok(TabularMdp::from_json_str(&read(path)?)?)
}

/// `uniform`, or a JSON file holding one probability row per state.
pub fn load_policy(spec: &str, mdp: &TabularMdp) -> Result<TabularPolicy> {
    if spec == "uniform" {
        return Ok(TabularPolicy::uniform(mdp.n_states(), mdp.n_actions()));
    }
    let path = Path::new(spec);
    let rows: Vec<Vec<f64>> = serde_json::from_str(&read(path)?).map_err(|e| HarnessError::json(path, e))?;
    Ok(TabularPolicy::from_rows(rows)?)
}

/// A JSON file holding one feature row per index.
pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(&read(path)?).map_err(|e| HarnessError::json(path, e))?;
    Ok(FeatureMap::from_rows(&rows)?)
}

/// A JSON array with one interest value per index.
pub fn load_interest(path: &Path) -> Result<InterestFunction> {
    let values: Vec<f64> = serde_json::from_str(&read(path)?).map_err(|e| HarnessError::json(path, e))?;
    Ok(InterestFunction::new(values)?)
}
