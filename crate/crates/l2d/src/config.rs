//! JSON config documents, one per command. Unknown keys are rejected and
//! every document is validated before any computation starts.

use std::path::Path;

use l2d_core::model::{DiscreteDistribution, RegressionLoss};
use l2d_core::oracle::{BoundInstance, BoundKind, Grid, VerifyConfig};
use l2d_core::surrogate::SurrogateSpec;
use l2d_core::synth::{
    gen_discrete, gen_discrete_regression, CounterexampleConfig, DiscreteConfig, RealizableConfig, RegressionConfig, TargetFn,
};
use l2d_core::train::{Arch, Optimizer, Stage1, TripleSearch};
use l2d_core::base::BinaryPhi;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Reads and parses a config file. Parse failures are config errors.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    /// `None` runs the default suite covering every surrogate tag.
    #[serde(default)]
    pub surrogates: Option<Vec<SurrogateSpec>>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Points closer than this to a kink are redrawn.
    #[serde(default = "default_min_kink")]
    pub min_kink: f64,
}

fn default_points() -> usize {
    100
}
fn default_step() -> f64 {
    1e-5
}
fn default_threshold() -> f64 {
    1e-5
}
fn default_min_kink() -> f64 {
    1e-4
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.threshold > 0.0) || !(self.min_kink >= 0.0) {
            return Err(bad("gradcheck needs step > 0, threshold > 0 and min_kink >= 0"));
        }
        if self.min_kink <= self.step && self.min_kink > 0.0 {
            return Err(bad("min_kink must exceed the FD step"));
        }
        Ok(())
    }
}

/// A finite instance given inline or drawn from the discrete generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Explicit {
        cond_probs: Vec<Vec<f64>>,
        weights: Vec<f64>,
        /// `costs[x][y][j]`; empty means no experts.
        #[serde(default)]
        costs: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        label_values: Option<Vec<f64>>,
    },
    /// One instance per seed; the config's own seed field is overridden.
    Generated { config: DiscreteConfig, seeds: Vec<u64> },
}

impl InstanceSource {
    /// Materializes the instances. Regression kinds draw regression tables
    /// from the generator with `loss`.
    pub fn build(&self, regression: Option<RegressionLoss>) -> Result<Vec<BoundInstance>> {
        match self {
            InstanceSource::Explicit { cond_probs, weights, costs, label_values } => {
                let dist = DiscreteDistribution::from_rows(cond_probs.clone(), weights.clone())?;
                let costs = if costs.is_empty() { vec![vec![Vec::new(); dist.n_classes()]; dist.len()] } else { costs.clone() };
                Ok(vec![BoundInstance { dist, costs, label_values: label_values.clone() }])
            }
            InstanceSource::Generated { config, seeds } => seeds
                .iter()
                .map(|&seed| {
                    let c = DiscreteConfig { seed, ..*config };
                    Ok(match regression {
                        Some(loss) => gen_discrete_regression(&c, loss)?,
                        None => gen_discrete(&c)?,
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub mu_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    #[serde(default)]
    pub instances: Vec<InstanceSource>,
    /// Lattice used to locate surrogate minimizers for the regret entries.
    #[serde(default)]
    pub grid: Grid,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu_grid.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(bad(format!("mu grid entries must be finite and >= 0, got {mu}")));
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(bad(format!("c grid entries must lie in (0, 1), got {c}")));
        }
        self.grid.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// `None` checks every endorsed kind.
    #[serde(default)]
    pub kinds: Option<Vec<BoundKind>>,
    pub instances: Vec<InstanceSource>,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Keep every hypothesis record in `bounds.json`, not only the worst.
    #[serde(default)]
    pub full_reports: bool,
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(bad("bounds needs at least one instance source"));
        }
        self.verify.grid.validate()?;
        if let Some(g) = &self.verify.gamma_override {
            g.validate()?;
        }
        Ok(())
    }
}

/// How the models of an experiment are trained. Input and output sizes are
/// derived from the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pipeline {
    SingleStage {
        surrogate: SurrogateSpec,
        #[serde(default = "linear")]
        arch: Arch,
        opt: Optimizer,
    },
    TwoStage {
        #[serde(default)]
        stage1: Stage1,
        surrogate: SurrogateSpec,
        #[serde(default = "linear")]
        predictor_arch: Arch,
        #[serde(default = "linear")]
        deferral_arch: Arch,
        stage1_opt: Optimizer,
        stage2_opt: Optimizer,
    },
}

fn linear() -> Arch {
    Arch::Linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Gaussian clusters with experts exact on disjoint class domains,
    /// trained for every seed and every prefix of the expert list.
    ExpertDisjoint {
        #[serde(default = "six")]
        n_classes: usize,
        #[serde(default = "four")]
        dim: usize,
        #[serde(default = "default_domains")]
        domains: Vec<Vec<usize>>,
        #[serde(default)]
        off_domain_accuracy: Option<f64>,
        #[serde(default = "default_mean_scale")]
        mean_scale: f64,
        #[serde(default = "one")]
        noise: f64,
        #[serde(default = "default_samples")]
        train_samples: usize,
        #[serde(default = "default_samples")]
        test_samples: usize,
        #[serde(default = "default_expert_counts")]
        expert_counts: Vec<usize>,
        #[serde(default = "default_seeds")]
        seeds: Vec<u64>,
        /// Weight of the expert's 0-1 error in its cost.
        #[serde(default = "one")]
        alpha: f64,
        /// Base cost of consulting expert `j`.
        #[serde(default = "default_base_costs")]
        base_costs: Vec<f64>,
        #[serde(default = "default_disjoint_pipeline")]
        pipeline: Pipeline,
        #[serde(default)]
        write_datasets: bool,
    },
    /// Three-region abstention geometry: predictor-rejector pair against
    /// the best score-based linear triple.
    Counterexample {
        #[serde(default)]
        generator: CounterexampleConfig,
        #[serde(default = "default_cx_stage1")]
        stage1_opt: Optimizer,
        #[serde(default = "default_cx_stage2")]
        stage2_opt: Optimizer,
        #[serde(default = "default_cx_phi")]
        phi: BinaryPhi,
        #[serde(default)]
        search: TripleSearch,
        #[serde(default)]
        write_datasets: bool,
    },
    Regression {
        #[serde(default = "default_regression")]
        generator: RegressionConfig,
        #[serde(default = "default_seeds")]
        seeds: Vec<u64>,
        #[serde(default = "squared")]
        loss: RegressionLoss,
        /// Base cost per expert; its length must match the fidelity list.
        #[serde(default = "default_base_costs")]
        base_costs: Vec<f64>,
        /// Upper bound of the expert loss used in the cost bounds.
        #[serde(default = "four_f")]
        loss_bound: f64,
        #[serde(default = "default_regression_pipeline")]
        pipeline: Pipeline,
        #[serde(default)]
        write_datasets: bool,
    },
    /// Two-stage abstention on a realizable distribution.
    Realizable {
        #[serde(default)]
        generator: RealizableConfig,
        #[serde(default = "default_seeds")]
        seeds: Vec<u64>,
        #[serde(default = "default_realizable_pipeline")]
        pipeline: Pipeline,
        #[serde(default)]
        write_datasets: bool,
    },
}

fn six() -> usize {
    6
}
fn four() -> usize {
    4
}
fn one() -> f64 {
    1.0
}
fn four_f() -> f64 {
    4.0
}
fn squared() -> RegressionLoss {
    RegressionLoss::Squared
}
fn default_domains() -> Vec<Vec<usize>> {
    vec![vec![0, 1], vec![2, 3], vec![4, 5]]
}
fn default_mean_scale() -> f64 {
    1.2
}
fn default_samples() -> usize {
    3000
}
fn default_expert_counts() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_base_costs() -> Vec<f64> {
    vec![0.1, 0.12, 0.14]
}
fn default_disjoint_pipeline() -> Pipeline {
    Pipeline::TwoStage {
        stage1: Stage1::default(),
        surrogate: SurrogateSpec::DeferTwoStageScore { family: l2d_core::base::MulticlassFamily::LOG },
        predictor_arch: Arch::Linear,
        // A linear rejector cannot isolate two-cluster domains.
        deferral_arch: Arch::Mlp { hidden: 16 },
        stage1_opt: Optimizer::Gd { lr: 1.0, epochs: 1000 },
        stage2_opt: Optimizer::Gd { lr: 1.0, epochs: 1000 },
    }
}
fn default_regression_pipeline() -> Pipeline {
    Pipeline::TwoStage {
        stage1: Stage1::Regress,
        surrogate: SurrogateSpec::RegTwoStage { family: l2d_core::base::MulticlassFamily::LOG },
        predictor_arch: Arch::Mlp { hidden: 16 },
        deferral_arch: Arch::Mlp { hidden: 16 },
        stage1_opt: Optimizer::Gd { lr: 0.1, epochs: 1000 },
        stage2_opt: Optimizer::Gd { lr: 1.0, epochs: 1000 },
    }
}
fn default_realizable_pipeline() -> Pipeline {
    Pipeline::TwoStage {
        stage1: Stage1::default(),
        surrogate: SurrogateSpec::AbstainTwoStage { phi: BinaryPhi::Logistic },
        predictor_arch: Arch::Linear,
        deferral_arch: Arch::Linear,
        stage1_opt: Optimizer::Gd { lr: 1.0, epochs: 500 },
        stage2_opt: Optimizer::Gd { lr: 1.0, epochs: 2000 },
    }
}
fn default_cx_stage1() -> Optimizer {
    Optimizer::Gd { lr: 2.0, epochs: 300 }
}
fn default_cx_stage2() -> Optimizer {
    Optimizer::Gd { lr: 2.0, epochs: 2000 }
}
fn default_cx_phi() -> BinaryPhi {
    BinaryPhi::Sigmoid { k: 1.0 }
}
fn default_regression() -> RegressionConfig {
    RegressionConfig { target: TargetFn::Sine, dim: 2, fidelity: vec![1.0, 0.5, 0.25], noise: 0.3, samples: 2000, seed: 0 }
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::ExpertDisjoint { .. } => "expert_disjoint",
            Task::Counterexample { .. } => "counterexample",
            Task::Regression { .. } => "regression",
            Task::Realizable { .. } => "realizable",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Task::ExpertDisjoint { domains, expert_counts, seeds, base_costs, alpha, train_samples, test_samples, .. } => {
                if seeds.is_empty() || expert_counts.is_empty() {
                    return Err(bad("need at least one seed and one expert count"));
                }
                if let Some(&k) = expert_counts.iter().find(|&&k| k > domains.len()) {
                    return Err(bad(format!("expert count {k} exceeds the {} configured domains", domains.len())));
                }
                if base_costs.len() < domains.len() {
                    return Err(bad("need one base cost per domain"));
                }
                if !(*alpha >= 0.0) || base_costs.iter().any(|b| !(*b >= 0.0)) {
                    return Err(bad("alpha and base costs must be >= 0"));
                }
                if *train_samples == 0 || *test_samples == 0 {
                    return Err(bad("train and test splits must be non-empty"));
                }
            }
            Task::Counterexample { .. } => {}
            Task::Regression { generator, base_costs, seeds, .. } => {
                if base_costs.len() != generator.fidelity.len() {
                    return Err(bad("need one base cost per expert fidelity level"));
                }
                if seeds.is_empty() {
                    return Err(bad("need at least one seed"));
                }
            }
            Task::Realizable { seeds, .. } => {
                if seeds.is_empty() {
                    return Err(bad("need at least one seed"));
                }
            }
        }
        Ok(())
    }
}
