//! JSON experiment configuration.

use crate::continuation::{BranchSpec, Schedule};
use crate::functional::Which;
use crate::green::{default_rho, CutoffProfile, GreenProfile};
use crate::kfield::{KField, KSpec};
use crate::parametrize::NeighborhoodSpec;
use crate::reduced::{Reduced, Separation};
use crate::{ManifoldModel, ModelSpec, QcError, Result};
use serde::Deserialize;
use std::sync::Arc;

fn default_model() -> ModelSpec {
    ModelSpec::sphere(4, 60)
}

fn default_k() -> KSpec {
    KSpec::one_plus_y1(0.3)
}

fn default_seeds() -> usize {
    64
}

/// Experiment configuration shared by the command line and the C interface;
/// every field has a default, so `{}` is valid.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default = "default_k")]
    pub k: KSpec,
    #[serde(default)]
    pub rho: Option<f64>,
    /// ε, η, Λ, C̄, C_0, C̃_0 and the V constant.
    #[serde(default)]
    pub thresholds: NeighborhoodSpec,
    #[serde(default = "default_seeds")]
    pub seeds_per_factor: usize,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub lambda_stop: Option<f64>,
    #[serde(default)]
    pub harness: Option<Vec<Which>>,
    /// Limiting critical configuration for `fit-rate`.
    #[serde(default)]
    pub crit: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Model, K and reduced functional built from a configuration.
pub struct Setup {
    pub model: ManifoldModel,
    pub k: KField,
    pub reduced: Reduced,
}

impl ExperimentConfig {
    pub fn setup(&self) -> Result<Setup> {
        let model = ManifoldModel::new(&self.model)?;
        let k = KField::new(&self.k, model.n)?;
        // K must be positive on the quadrature grid as well as on its profile
        let kmin = (0..model.n_nodes()).map(|i| k.value(&model.node_point(i))).fold(f64::INFINITY, f64::min);
        if !(kmin > 0.0) {
            return Err(QcError::Invalid(format!("K is not positive on the grid: minimum {kmin:e}")));
        }
        let cutoff = CutoffProfile::with_eta(self.rho.unwrap_or_else(default_rho), self.thresholds.eta)?;
        self.thresholds.validate(&cutoff)?;
        let green = Arc::new(GreenProfile::new(&model, cutoff)?);
        let sep = Separation { eta: self.thresholds.eta, c_bar: self.thresholds.c_bar };
        let reduced = Reduced::new(&model, green, k.clone(), sep)?;
        Ok(Setup { model, k, reduced })
    }

    pub fn branch_spec(&self) -> BranchSpec {
        BranchSpec {
            schedule: self.schedule.clone().unwrap_or(Schedule { t0: 0.5, t1: 1.0 - 1e-7, steps: 60, refine_near_1: true }),
            lambda_stop: self.lambda_stop.unwrap_or(1e3),
            neighborhood: self.thresholds.clone(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| QcError::Config(e.to_string()))
    }
}
