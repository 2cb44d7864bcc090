use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::fit::{fit, Optimizer, TraceRow};
use super::model::{Model, ModelSpec};
use crate::base::MulticlassFamily;
use crate::error::{bail, Result};
use crate::math;
use crate::model::{eval_cost, rejector_decision, CostKind, CostModel, ExpertOutputs, RegressionLoss, RejectorConvention, Truth};
use crate::oracle::OwnedSample;
use crate::surrogate::{evaluate, SurrogateSpec};
use crate::synth::{Dataset, ExpertTable, Targets};

/// A dataset with its per-sample costs.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub data: Dataset,
    /// `costs[i][j]`: cost of deferring sample `i` to expert `j`.
    pub costs: Vec<Vec<f64>>,
    /// Cost of abstaining on sample `i`.
    pub abstain_costs: Vec<f64>,
    /// Base loss of a regression predictor.
    pub regression_loss: RegressionLoss,
}

impl TaskData {
    /// Abstention data with per-sample costs (`c = 0` is allowed).
    pub fn abstention(data: Dataset, abstain_costs: Vec<f64>) -> Result<Self> {
        if abstain_costs.len() != data.len() || abstain_costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            bail!(InvalidInput, "need one finite non-negative abstention cost per sample");
        }
        let costs = vec![Vec::new(); data.len()];
        Ok(Self { data, costs, abstain_costs, regression_loss: RegressionLoss::Squared })
    }

    /// Costs evaluated from the dataset's expert table.
    pub fn with_costs(data: Dataset, model: &CostModel) -> Result<Self> {
        let mut costs = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let row = match (&data.experts, &data.targets) {
                (ExpertTable::Classes(e), Targets::Classes(y)) => eval_cost(model, ExpertOutputs::Classes(&e[i]), Truth::Class(y[i]))?,
                (ExpertTable::Values(e), Targets::Values(y)) => eval_cost(model, ExpertOutputs::Values(&e[i]), Truth::Value(y[i]))?,
                (_, Targets::Classes(y)) => eval_cost(model, ExpertOutputs::None, Truth::Class(y[i]))?,
                (_, Targets::Values(y)) => eval_cost(model, ExpertOutputs::None, Truth::Value(y[i]))?,
            };
            costs.push(row);
        }
        let regression_loss = match model.kind {
            CostKind::RegressionExpert { loss, .. } => loss,
            _ => RegressionLoss::Squared,
        };
        let abstain_costs = match model.kind {
            CostKind::Constant { c } => vec![c; data.len()],
            _ => vec![0.0; data.len()],
        };
        if let CostKind::Constant { .. } = model.kind {
            costs = vec![Vec::new(); data.len()];
        }
        Ok(Self { data, costs, abstain_costs, regression_loss })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_experts(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    fn class(&self, i: usize) -> usize {
        match &self.data.targets {
            Targets::Classes(y) => y[i],
            Targets::Values(_) => 0,
        }
    }

    fn value(&self, i: usize) -> f64 {
        match &self.data.targets {
            Targets::Values(y) => y[i],
            Targets::Classes(y) => y[i] as f64,
        }
    }

    fn is_regression(&self) -> bool {
        matches!(self.data.targets, Targets::Values(_))
    }
}

/// First-stage training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage1 {
    Classify { family: MulticlassFamily },
    /// Regression with the task's base loss.
    Regress,
}

impl Default for Stage1 {
    fn default() -> Self {
        Stage1::Classify { family: MulticlassFamily::LOG }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", content = "expert", rename_all = "snake_case")]
pub enum Route {
    Keep,
    Abstain,
    Expert(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Prediction {
    Class(usize),
    Value(f64),
}

/// Decision of the pair: where the sample goes and what the model predicts.
pub fn decide(spec: &SurrogateSpec, n: usize, n_e: usize, stage1: Option<&[f64]>, out: &[f64]) -> (Route, Prediction) {
    let class = |h: &[f64]| Prediction::Class(math::argmax(h));
    let first = stage1.unwrap_or(&[]);
    match *spec {
        SurrogateSpec::AbstainLMu { .. } => {
            let k = math::argmax(&out[..n]);
            let route = if out[n] >= out[k] { Route::Abstain } else { Route::Keep };
            (route, Prediction::Class(k))
        }
        SurrogateSpec::PrSingle { .. } => {
            let route = if out[n] <= 0.0 { Route::Abstain } else { Route::Keep };
            (route, class(&out[..n]))
        }
        SurrogateSpec::DeferSingle { .. } => {
            let d = math::argmax(out);
            let route = if d < n { Route::Keep } else { Route::Expert(d - n) };
            (route, class(&out[..n]))
        }
        SurrogateSpec::RegSingle { .. } => {
            let d = math::argmax(&out[..n_e + 1]);
            let route = if d == 0 { Route::Keep } else { Route::Expert(d - 1) };
            (route, Prediction::Value(out[n_e + 1]))
        }
        SurrogateSpec::RegSingleExpert { .. } => {
            let route = if out[0] <= 0.0 { Route::Expert(0) } else { Route::Keep };
            (route, Prediction::Value(out[1]))
        }
        SurrogateSpec::AbstainTwoStage { .. } => {
            let route = if out[0] >= math::max(first) { Route::Abstain } else { Route::Keep };
            (route, class(first))
        }
        SurrogateSpec::PrTwoStage { .. } => {
            let route = if out[0] <= 0.0 { Route::Abstain } else { Route::Keep };
            (route, class(first))
        }
        SurrogateSpec::DeferTwoStageScore { .. } => {
            let mut full = vec![math::max(first)];
            full.extend_from_slice(out);
            let d = math::argmax(&full);
            (if d == 0 { Route::Keep } else { Route::Expert(d - 1) }, class(first))
        }
        SurrogateSpec::DeferTwoStagePr { .. } => {
            let d = rejector_decision(out, RejectorConvention::ArgminDefer, n_e).unwrap_or(0);
            (if d == 0 { Route::Keep } else { Route::Expert(d - 1) }, class(first))
        }
        SurrogateSpec::RegTwoStage { .. } => {
            let d = math::argmax(out);
            (if d == 0 { Route::Keep } else { Route::Expert(d - 1) }, Prediction::Value(first[0]))
        }
    }
}

/// Target loss of one decision on sample `i`.
fn decision_loss(task: &TaskData, i: usize, route: Route, pred: Prediction) -> f64 {
    match route {
        Route::Abstain => task.abstain_costs[i],
        Route::Expert(j) => task.costs[i][j],
        Route::Keep => match pred {
            Prediction::Class(k) => f64::from(u8::from(k != task.class(i))),
            Prediction::Value(v) => task.regression_loss.value(v, task.value(i)),
        },
    }
}

/// A trained predictor plus deferral scores. Single-stage pairs keep every
/// score in `predictor`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPair {
    pub surrogate: SurrogateSpec,
    pub stage1: Option<Stage1>,
    pub predictor: Model,
    pub deferral: Option<Model>,
    pub n_classes: usize,
    pub n_experts: usize,
    pub trace: Vec<TraceRow>,
    /// Predictor checksum taken right after the first stage.
    pub stage1_checksum: Option<u64>,
    pub converged: bool,
}

impl TrainedPair {
    pub fn decide(&self, x: &[f64]) -> (Route, Prediction) {
        match &self.deferral {
            None => decide(&self.surrogate, self.n_classes, self.n_experts, None, &self.predictor.predict(x)),
            Some(d) => {
                let first = self.predictor.predict(x);
                decide(&self.surrogate, self.n_classes, self.n_experts, Some(&first), &d.predict(x))
            }
        }
    }
}

fn check_task(task: &TaskData, spec: &SurrogateSpec) -> Result<(usize, usize)> {
    if task.is_empty() {
        bail!(InvalidInput, "empty dataset");
    }
    let n = task.data.n_classes;
    let n_e = task.n_experts();
    let regression_spec = matches!(
        spec,
        SurrogateSpec::RegSingle { .. } | SurrogateSpec::RegTwoStage { .. } | SurrogateSpec::RegSingleExpert { .. }
    );
    if regression_spec != task.is_regression() {
        bail!(InvalidConfig, "{} does not match the dataset's target type", spec.tag());
    }
    if matches!(spec, SurrogateSpec::RegSingleExpert { .. }) && n_e != 1 {
        bail!(InvalidConfig, "reg_single_expert needs exactly one expert");
    }
    let needs_experts = matches!(
        spec,
        SurrogateSpec::DeferTwoStageScore { .. }
            | SurrogateSpec::DeferTwoStagePr { .. }
            | SurrogateSpec::RegSingle { .. }
            | SurrogateSpec::RegTwoStage { .. }
    );
    if needs_experts && n_e == 0 {
        bail!(InvalidConfig, "{} needs at least one expert", spec.tag());
    }
    spec.validate(n.max(2), n_e)?;
    Ok((n, n_e))
}

fn check_model(spec: &ModelSpec, input: usize, output: usize, what: &str) -> Result<()> {
    if spec.input_dim != input || spec.output_dim != output {
        bail!(
            InvalidConfig,
            "{what} model is {}x{}, task needs {input}x{output}",
            spec.input_dim,
            spec.output_dim
        );
    }
    Ok(())
}

/// Optimizes every score of `spec` jointly.
pub fn train_single_stage(task: &TaskData, spec: &SurrogateSpec, model: ModelSpec, opt: &Optimizer) -> Result<TrainedPair> {
    if spec.is_two_stage() {
        bail!(InvalidConfig, "{} is a second-stage loss", spec.tag());
    }
    let (n, n_e) = check_task(task, spec)?;
    check_model(&model, task.data.dim(), spec.point_len(n, n_e), "joint")?;
    let samples: Vec<OwnedSample> = (0..task.len())
        .map(|i| OwnedSample {
            y: task.class(i),
            c: task.abstain_costs[i],
            costs: task.costs[i].clone(),
            ..Default::default()
        })
        .collect();
    let regression = matches!(spec, SurrogateSpec::RegSingle { .. } | SurrogateSpec::RegSingleExpert { .. });
    let rl = task.regression_loss;
    let loss = |i: usize, out: &[f64], grad: Option<&mut [f64]>| -> Result<f64> {
        let s = samples[i].view();
        if !regression {
            return evaluate(spec, n, &s, out, grad);
        }
        let last = out.len() - 1;
        let mut point = out.to_vec();
        point[last] = rl.value(out[last], task.value(i));
        match grad {
            Some(g) => {
                let v = evaluate(spec, n, &s, &point, Some(&mut *g))?;
                g[last] *= rl.grad(out[last], task.value(i));
                Ok(v)
            }
            None => evaluate(spec, n, &s, &point, None),
        }
    };
    let target = |i: usize, out: &[f64]| {
        let (r, p) = decide(spec, n, n_e, None, out);
        decision_loss(task, i, r, p)
    };
    let fitted = fit(Model::init(model)?, 0, &task.data.features, &loss, &target, opt)?;
    Ok(TrainedPair {
        surrogate: *spec,
        stage1: None,
        predictor: fitted.model,
        deferral: None,
        n_classes: n,
        n_experts: n_e,
        trace: fitted.trace,
        stage1_checksum: None,
        converged: fitted.converged,
    })
}

/// Model specs and optimizers of both stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStagePlan {
    pub stage1: Stage1,
    pub predictor: ModelSpec,
    pub stage1_opt: Optimizer,
    pub deferral: ModelSpec,
    pub stage2_opt: Optimizer,
}

/// Trains the predictor with `plan.stage1`, freezes it, then trains only
/// the deferral scores with `spec` starting from zero outputs.
pub fn train_two_stage(task: &TaskData, spec: &SurrogateSpec, plan: &TwoStagePlan) -> Result<TrainedPair> {
    if !spec.is_two_stage() {
        bail!(InvalidConfig, "{} is not a second-stage loss", spec.tag());
    }
    let (n, n_e) = check_task(task, spec)?;
    let d = task.data.dim();
    let rl = task.regression_loss;
    let first = match (plan.stage1, task.is_regression()) {
        (Stage1::Classify { family }, false) => {
            family.validate(n)?;
            check_model(&plan.predictor, d, n, "predictor")?;
            let loss = |i: usize, out: &[f64], g: Option<&mut [f64]>| Ok(family.value_grad(out, task.class(i), g));
            let target = |i: usize, out: &[f64]| f64::from(u8::from(math::argmax(out) != task.class(i)));
            fit(Model::init(plan.predictor)?, 1, &task.data.features, &loss, &target, &plan.stage1_opt)?
        }
        (Stage1::Regress, true) => {
            check_model(&plan.predictor, d, 1, "predictor")?;
            let loss = |i: usize, out: &[f64], g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = rl.grad(out[0], task.value(i));
                }
                Ok(rl.value(out[0], task.value(i)))
            };
            let target = |i: usize, out: &[f64]| rl.value(out[0], task.value(i));
            fit(Model::init(plan.predictor)?, 1, &task.data.features, &loss, &target, &plan.stage1_opt)?
        }
        _ => bail!(InvalidConfig, "first-stage loss does not match the dataset's target type"),
    };
    let predictor = first.model;
    let checksum = predictor.checksum();
    let frozen: Vec<Vec<f64>> = task.data.features.iter().map(|x| predictor.predict(x)).collect();

    check_model(&plan.deferral, d, spec.point_len(n, n_e), "deferral")?;
    let samples: Vec<OwnedSample> = (0..task.len())
        .map(|i| {
            let h = &frozen[i];
            let correct = !task.is_regression() && math::argmax(h) == task.class(i);
            let mut s = OwnedSample {
                y: task.class(i),
                c: task.abstain_costs[i],
                costs: task.costs[i].clone(),
                correct,
                ..Default::default()
            };
            match spec {
                SurrogateSpec::AbstainTwoStage { .. } => s.frozen = h.clone(),
                SurrogateSpec::DeferTwoStageScore { .. } => s.frozen = vec![math::max(h)],
                SurrogateSpec::RegTwoStage { .. } => s.base_loss = rl.value(h[0], task.value(i)),
                _ => {}
            }
            s
        })
        .collect();
    let loss = |i: usize, out: &[f64], g: Option<&mut [f64]>| evaluate(spec, n, &samples[i].view(), out, g);
    let target = |i: usize, out: &[f64]| {
        let (r, p) = decide(spec, n, n_e, Some(&frozen[i]), out);
        decision_loss(task, i, r, p)
    };
    let second = fit(Model::init(plan.deferral)?, 2, &task.data.features, &loss, &target, &plan.stage2_opt)?;
    if predictor.checksum() != checksum {
        bail!(InvalidConfig, "first-stage parameters changed during the second stage");
    }
    let mut trace = first.trace;
    trace.extend(second.trace);
    Ok(TrainedPair {
        surrogate: *spec,
        stage1: Some(plan.stage1),
        predictor,
        deferral: Some(second.model),
        n_classes: n,
        n_experts: n_e,
        trace,
        stage1_checksum: Some(checksum),
        converged: first.converged && second.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub samples: usize,
    pub target_loss: f64,
    /// Share of samples whose final label (model or expert) is right.
    pub system_accuracy: Option<f64>,
    /// Mean squared error of the final prediction.
    pub system_mse: Option<f64>,
    pub deferral_ratios: Vec<f64>,
    pub abstain_ratio: f64,
    /// Share of samples kept by the model.
    pub coverage: f64,
    /// Error rate (or MSE) of the model on the samples it keeps.
    pub acceptance_error: Option<f64>,
    /// Integer count of correct final labels and the sum of target losses;
    /// with zero base costs `correct_count + loss_sum == samples` exactly.
    pub correct_count: Option<usize>,
    pub loss_sum: f64,
}

impl SystemMetrics {
    /// `correct_count + loss_sum == samples`, which holds exactly when base
    /// costs are zero and every expert cost is its 0-1 error.
    pub fn zero_cost_identity(&self) -> Option<bool> {
        self.correct_count.map(|k| k as f64 + self.loss_sum == self.samples as f64)
    }

    /// `|accuracy + target_loss − 1|`.
    pub fn identity_gap(&self) -> Option<f64> {
        self.system_accuracy.map(|a| math::abs(a + self.target_loss - 1.0))
    }
}

/// Target loss, system accuracy or MSE, routing shares and the error on
/// accepted samples.
pub fn evaluate_system(pair: &TrainedPair, task: &TaskData) -> Result<SystemMetrics> {
    if pair.n_experts > 0 && task.n_experts() != pair.n_experts {
        bail!(InvalidInput, "task has {} experts, pair was trained with {}", task.n_experts(), pair.n_experts);
    }
    let decisions: Vec<(Route, Prediction)> = task.data.features.iter().map(|x| pair.decide(x)).collect();
    evaluate_routes(task, &decisions)
}

/// [`evaluate_system`] for precomputed decisions, e.g. an oracle router.
pub fn evaluate_routes(task: &TaskData, decisions: &[(Route, Prediction)]) -> Result<SystemMetrics> {
    if task.is_empty() || decisions.len() != task.len() {
        bail!(InvalidInput, "need one decision per sample of a non-empty dataset");
    }
    let m = task.len();
    let n_e = task.n_experts();
    let mut loss_sum = 0.0;
    let mut routed = vec![0usize; n_e];
    let (mut abstained, mut kept) = (0usize, 0usize);
    let (mut kept_err, mut correct, mut sq) = (0.0, 0usize, 0.0);
    let mut accuracy_defined = !task.is_regression();
    for (i, &(route, pred)) in decisions.iter().enumerate() {
        if let Route::Expert(j) = route {
            if j >= n_e {
                bail!(InvalidInput, "sample {i} routed to missing expert {j}");
            }
        }
        loss_sum += decision_loss(task, i, route, pred);
        let err = |v: f64| (v - task.value(i)) * (v - task.value(i));
        match route {
            Route::Keep => {
                kept += 1;
                match pred {
                    Prediction::Class(k) => {
                        kept_err += f64::from(u8::from(k != task.class(i)));
                        correct += usize::from(k == task.class(i));
                    }
                    Prediction::Value(v) => {
                        kept_err += err(v);
                        sq += err(v);
                    }
                }
            }
            Route::Abstain => {
                abstained += 1;
                accuracy_defined = false;
            }
            Route::Expert(j) => {
                routed[j] += 1;
                match &task.data.experts {
                    ExpertTable::Classes(e) => correct += usize::from(e[i][j] == task.class(i)),
                    ExpertTable::Values(e) => sq += err(e[i][j]),
                    ExpertTable::None => accuracy_defined = false,
                }
            }
        }
    }
    let mf = m as f64;
    Ok(SystemMetrics {
        samples: m,
        target_loss: loss_sum / mf,
        system_accuracy: accuracy_defined.then(|| correct as f64 / mf),
        system_mse: task.is_regression().then(|| sq / mf),
        deferral_ratios: routed.iter().map(|&r| r as f64 / mf).collect(),
        abstain_ratio: abstained as f64 / mf,
        coverage: kept as f64 / mf,
        acceptance_error: (kept > 0).then(|| kept_err / kept as f64),
        correct_count: accuracy_defined.then_some(correct),
        loss_sum,
    })
}
