//! Experiment runners: a seed × expert-count matrix of trainings with
//! per-trial metrics, traces and a mean ± std summary.

use l2d_core::model::CostModel;
use l2d_core::surrogate::SurrogateSpec;
use l2d_core::synth::{
    counterexample_bayes_loss, gen_counterexample, gen_expert_disjoint, gen_realizable_abstention, gen_regression_task,
    Dataset, ExpertDisjointConfig, ExpertTable, Region, Targets,
};
use l2d_core::train::{
    best_score_based_linear, evaluate_system, train_single_stage, train_two_stage, ModelSpec, Stage1, SystemMetrics,
    TaskData, TraceRow, TrainedPair, TripleResult, TwoStagePlan,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::Completed;
use crate::config::{ExperimentConfig, Pipeline, Task};
use crate::error::{Outcome, Result};
use crate::output::{header, num, opt_num, OutDir};

/// Accuracy means may drop by at most this much from one expert count to
/// the next and still count as non-decreasing.
pub const MONOTONE_TOL: f64 = 0.005;

/// Trains `pipeline` on `task` with model seed `seed`.
pub fn train(pipeline: &Pipeline, task: &TaskData, seed: u64) -> Result<TrainedPair> {
    let n = task.data.n_classes;
    let n_e = task.n_experts();
    let d = task.data.dim();
    Ok(match pipeline {
        Pipeline::SingleStage { surrogate, arch, opt } => {
            let spec = ModelSpec { arch: *arch, input_dim: d, output_dim: surrogate.point_len(n, n_e), seed };
            train_single_stage(task, surrogate, spec, opt)?
        }
        Pipeline::TwoStage { stage1, surrogate, predictor_arch, deferral_arch, stage1_opt, stage2_opt } => {
            let first_out = match stage1 {
                Stage1::Classify { .. } => n,
                Stage1::Regress => 1,
            };
            let plan = TwoStagePlan {
                stage1: *stage1,
                predictor: ModelSpec { arch: *predictor_arch, input_dim: d, output_dim: first_out, seed },
                stage1_opt: *stage1_opt,
                deferral: ModelSpec { arch: *deferral_arch, input_dim: d, output_dim: surrogate.point_len(n, n_e), seed },
                stage2_opt: *stage2_opt,
            };
            train_two_stage(task, surrogate, &plan)?
        }
    })
}

/// One trained and evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub seed: u64,
    pub experts: usize,
    pub metrics: SystemMetrics,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub experts: usize,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; `0` for a single run.
    pub std: f64,
    pub target_loss_mean: f64,
    pub target_loss_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    /// Base costs are zero and expert costs are their 0-1 errors.
    pub applicable: bool,
    /// `correct + Σ loss == samples` exactly on every trial.
    pub holds: bool,
    /// Largest `|accuracy + mean loss − 1|` over trials.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixSummary {
    pub task: &'static str,
    pub metric: &'static str,
    pub groups: Vec<Group>,
    /// Group means non-decreasing in expert count within [`MONOTONE_TOL`].
    pub monotone: Option<bool>,
    pub monotone_tolerance: f64,
    pub identity: Option<IdentityCheck>,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleSummary {
    pub task: &'static str,
    pub samples: usize,
    pub c: f64,
    pub abstain_region_share: f64,
    pub bayes_loss: f64,
    pub pr_pair_loss: f64,
    /// `pr_pair_loss − bayes_loss`.
    pub pr_pair_excess: f64,
    pub score_triple_loss: f64,
    /// `score_triple_loss − bayes_loss`.
    pub delta: f64,
    pub pr_pair_converged: bool,
    pub triple: TripleResult,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn metric_value(name: &str, m: &SystemMetrics) -> f64 {
    match name {
        "system_accuracy" => m.system_accuracy.unwrap_or(f64::NAN),
        "system_mse" => m.system_mse.unwrap_or(f64::NAN),
        _ => m.target_loss,
    }
}

/// The first `k` expert columns.
fn keep_experts(data: &Dataset, k: usize) -> Dataset {
    let mut d = data.clone();
    d.experts = match &data.experts {
        ExpertTable::Classes(r) => ExpertTable::Classes(r.iter().map(|row| row[..k].to_vec()).collect()),
        ExpertTable::Values(r) => ExpertTable::Values(r.iter().map(|row| row[..k].to_vec()).collect()),
        ExpertTable::None => ExpertTable::None,
    };
    d
}

fn dataset_rows(data: &Dataset) -> (Vec<String>, Vec<Vec<String>>) {
    let d = data.dim();
    let ne = data.experts.n_experts();
    let mut head: Vec<String> = (0..d).map(|i| format!("x_{i}")).collect();
    head.push("y".into());
    head.extend((0..ne).map(|j| format!("expert_{j}")));
    let rows = (0..data.len())
        .map(|i| {
            let mut r: Vec<String> = data.features[i].iter().map(|&v| num(v)).collect();
            r.push(match &data.targets {
                Targets::Classes(y) => y[i].to_string(),
                Targets::Values(y) => num(y[i]),
            });
            match &data.experts {
                ExpertTable::Classes(e) => r.extend(e[i].iter().map(|g| g.to_string())),
                ExpertTable::Values(e) => r.extend(e[i].iter().map(|&g| num(g))),
                ExpertTable::None => {}
            }
            r
        })
        .collect();
    (head, rows)
}

fn write_dataset(out: &OutDir, name: &str, data: &Dataset) -> Result<()> {
    let (head, rows) = dataset_rows(data);
    out.csv(name, &head, &rows)
}

fn write_trace<'a>(out: &OutDir, traces: impl IntoIterator<Item = (u64, usize, &'a [TraceRow])>) -> Result<()> {
    let mut rows = Vec::new();
    for (seed, experts, trace) in traces {
        for r in trace {
            rows.push(vec![
                seed.to_string(),
                experts.to_string(),
                r.stage.to_string(),
                r.epoch.to_string(),
                num(r.surrogate_loss),
                num(r.target_loss),
            ]);
        }
    }
    out.csv("trace.csv", &header(&["seed", "experts", "stage", "epoch", "surrogate_loss", "target_loss"]), &rows)
}

fn write_rows(out: &OutDir, metric: &str, trials: &[Trial]) -> Result<()> {
    let k = trials.iter().map(|t| t.metrics.deferral_ratios.len()).max().unwrap_or(0);
    let mut head = header(&["seed", "experts", "metric", "value", "target_loss", "coverage", "abstain_ratio"]);
    head.extend((0..k).map(|j| format!("deferral_ratio_{j}")));
    head.extend(header(&["identity_gap", "zero_cost_identity", "converged"]));
    let rows: Vec<Vec<String>> = trials
        .iter()
        .map(|t| {
            let m = &t.metrics;
            let mut r = vec![
                t.seed.to_string(),
                t.experts.to_string(),
                metric.to_string(),
                num(metric_value(metric, m)),
                num(m.target_loss),
                num(m.coverage),
                num(m.abstain_ratio),
            ];
            r.extend((0..k).map(|j| m.deferral_ratios.get(j).map(|&v| num(v)).unwrap_or_default()));
            r.push(opt_num(m.identity_gap()));
            r.push(m.zero_cost_identity().map(|b| b.to_string()).unwrap_or_default());
            r.push(t.converged.to_string());
            r
        })
        .collect();
    out.csv("rows.csv", &head, &rows)
}

/// Groups trials by expert count in first-seen order.
fn summarize(task: &'static str, metric: &'static str, trials: &[Trial], identity_applicable: bool) -> MatrixSummary {
    let mut counts: Vec<usize> = Vec::new();
    for t in trials {
        if !counts.contains(&t.experts) {
            counts.push(t.experts);
        }
    }
    let groups: Vec<Group> = counts
        .iter()
        .map(|&k| {
            let ts: Vec<&Trial> = trials.iter().filter(|t| t.experts == k).collect();
            let vals: Vec<f64> = ts.iter().map(|t| metric_value(metric, &t.metrics)).collect();
            let losses: Vec<f64> = ts.iter().map(|t| t.metrics.target_loss).collect();
            let (mean, std) = mean_std(&vals);
            let (target_loss_mean, target_loss_std) = mean_std(&losses);
            Group { experts: k, runs: ts.len(), mean, std, target_loss_mean, target_loss_std }
        })
        .collect();
    let monotone = (metric == "system_accuracy" && groups.len() > 1).then(|| {
        let mut sorted: Vec<&Group> = groups.iter().collect();
        sorted.sort_by_key(|g| g.experts);
        sorted.windows(2).all(|w| w[1].mean >= w[0].mean - MONOTONE_TOL)
    });
    let identity = (metric == "system_accuracy").then(|| IdentityCheck {
        applicable: identity_applicable,
        holds: trials.iter().all(|t| t.metrics.zero_cost_identity() == Some(true)),
        max_gap: trials.iter().filter_map(|t| t.metrics.identity_gap()).fold(0.0, f64::max),
    });
    MatrixSummary {
        task,
        metric,
        groups,
        monotone,
        monotone_tolerance: MONOTONE_TOL,
        identity,
        all_converged: trials.iter().all(|t| t.converged),
    }
}

fn log(verbose: bool, msg: impl FnOnce() -> String) {
    if verbose {
        eprintln!("{}", msg());
    }
}

/// Runs `jobs` in parallel and returns results in job order.
fn run_jobs<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    jobs.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

pub fn experiment(cfg: &ExperimentConfig, out: &OutDir, verbose: bool) -> Result<Completed> {
    cfg.task.validate()?;
    match &cfg.task {
        Task::ExpertDisjoint {
            n_classes,
            dim,
            domains,
            off_domain_accuracy,
            mean_scale,
            noise,
            train_samples,
            test_samples,
            expert_counts,
            seeds,
            alpha,
            base_costs,
            pipeline,
            write_datasets,
        } => {
            let data: Vec<(Dataset, Dataset)> = run_jobs(seeds, |&seed| {
                let all = gen_expert_disjoint(&ExpertDisjointConfig {
                    n_classes: *n_classes,
                    dim: *dim,
                    domains: domains.clone(),
                    off_domain_accuracy: *off_domain_accuracy,
                    mean_scale: *mean_scale,
                    noise: *noise,
                    samples: train_samples + test_samples,
                    seed,
                })?;
                Ok((all.slice(0..*train_samples), all.slice(*train_samples..train_samples + test_samples)))
            })?;
            if *write_datasets {
                for (seed, (tr, te)) in seeds.iter().zip(&data) {
                    write_dataset(out, &format!("data_seed{seed}_train.csv"), tr)?;
                    write_dataset(out, &format!("data_seed{seed}_test.csv"), te)?;
                }
            }
            let jobs: Vec<(usize, usize)> =
                (0..seeds.len()).flat_map(|s| expert_counts.iter().map(move |&k| (s, k))).collect();
            let trials = run_jobs(&jobs, |&(s, k)| {
                let cost = CostModel::expert_misclassification(vec![*alpha; k], base_costs[..k].to_vec())?;
                let (tr, te) = &data[s];
                let train_task = TaskData::with_costs(keep_experts(tr, k), &cost)?;
                let test_task = TaskData::with_costs(keep_experts(te, k), &cost)?;
                let pair = train(pipeline, &train_task, seeds[s])?;
                let metrics = evaluate_system(&pair, &test_task)?;
                log(verbose, || format!("seed {} experts {k}: accuracy {:?}", seeds[s], metrics.system_accuracy));
                Ok(Trial { seed: seeds[s], experts: k, metrics, trace: pair.trace, converged: pair.converged })
            })?;
            let zero_base = *alpha == 1.0 && expert_counts.iter().all(|&k| base_costs[..k].iter().all(|&b| b == 0.0));
            finish_matrix(out, summarize("expert_disjoint", "system_accuracy", &trials, zero_base), &trials)
        }
        Task::Regression { generator, seeds, loss, base_costs, loss_bound, pipeline, write_datasets } => {
            let trials = run_jobs(seeds, |&seed| {
                let m = generator.samples;
                let all = gen_regression_task(&l2d_core::synth::RegressionConfig { samples: 2 * m, seed, ..generator.clone() })?;
                let (tr, te) = (all.slice(0..m), all.slice(m..2 * m));
                if *write_datasets {
                    write_dataset(out, &format!("data_seed{seed}_train.csv"), &tr)?;
                    write_dataset(out, &format!("data_seed{seed}_test.csv"), &te)?;
                }
                let cost = CostModel::regression_expert(*loss, base_costs.clone(), *loss_bound)?;
                let pair = train(pipeline, &TaskData::with_costs(tr, &cost)?, seed)?;
                let metrics = evaluate_system(&pair, &TaskData::with_costs(te, &cost)?)?;
                log(verbose, || format!("seed {seed}: mse {:?}", metrics.system_mse));
                Ok(Trial { seed, experts: base_costs.len(), metrics, trace: pair.trace, converged: pair.converged })
            })?;
            finish_matrix(out, summarize("regression", "system_mse", &trials, false), &trials)
        }
        Task::Realizable { generator, seeds, pipeline, write_datasets } => {
            let trials = run_jobs(seeds, |&seed| {
                let (data, costs) = gen_realizable_abstention(&l2d_core::synth::RealizableConfig { seed, ..*generator })?;
                if *write_datasets {
                    write_dataset(out, &format!("data_seed{seed}.csv"), &data)?;
                }
                let task = TaskData::abstention(data, costs)?;
                let pair = train(pipeline, &task, seed)?;
                let metrics = evaluate_system(&pair, &task)?;
                log(verbose, || format!("seed {seed}: target loss {}", metrics.target_loss));
                Ok(Trial { seed, experts: 0, metrics, trace: pair.trace, converged: pair.converged })
            })?;
            finish_matrix(out, summarize("realizable", "target_loss", &trials, false), &trials)
        }
        Task::Counterexample { generator, stage1_opt, stage2_opt, phi, search, write_datasets } => {
            let data = gen_counterexample(generator)?;
            if *write_datasets {
                write_dataset(out, "data.csv", &data)?;
            }
            let (sum, trace) = counterexample(&data, generator.c, generator.seed, stage1_opt, stage2_opt, *phi, search, verbose)?;
            write_trace(out, [(generator.seed, 0, trace.as_slice())])?;
            let rows = vec![
                vec!["bayes".to_string(), num(sum.bayes_loss)],
                vec!["predictor_rejector".to_string(), num(sum.pr_pair_loss)],
                vec!["score_based_triple".to_string(), num(sum.score_triple_loss)],
            ];
            out.csv("rows.csv", &header(&["method", "target_loss"]), &rows)?;
            let summary = format!(
                "counterexample: bayes {:.5}, predictor-rejector {:.5}, score-based {:.5}, delta {:.5}",
                sum.bayes_loss, sum.pr_pair_loss, sum.score_triple_loss, sum.delta
            );
            out.json("summary.json", &sum)?;
            Ok(Completed { outcome: Outcome::Success, summary })
        }
    }
}

fn finish_matrix(out: &OutDir, summary: MatrixSummary, trials: &[Trial]) -> Result<Completed> {
    write_rows(out, summary.metric, trials)?;
    write_trace(out, trials.iter().map(|t| (t.seed, t.experts, t.trace.as_slice())))?;
    out.json("summary.json", &summary)?;
    let groups: Vec<String> = summary.groups.iter().map(|g| format!("k={} {:.4}±{:.4}", g.experts, g.mean, g.std)).collect();
    Ok(Completed {
        outcome: Outcome::Success,
        summary: format!("experiment {}: {} {}", summary.task, summary.metric, groups.join(", ")),
    })
}

/// Bayes loss, two-stage predictor-rejector pair and best score-based
/// linear triple on one counterexample sample.
#[allow(clippy::too_many_arguments)]
pub fn counterexample(
    data: &Dataset,
    c: f64,
    seed: u64,
    stage1_opt: &l2d_core::train::Optimizer,
    stage2_opt: &l2d_core::train::Optimizer,
    phi: l2d_core::base::BinaryPhi,
    search: &l2d_core::train::TripleSearch,
    verbose: bool,
) -> Result<(CounterexampleSummary, Vec<TraceRow>)> {
    let m = data.len();
    let costs = vec![c; m];
    let task = TaskData::abstention(data.clone(), costs.clone())?;
    let pipeline = Pipeline::TwoStage {
        stage1: Stage1::default(),
        surrogate: SurrogateSpec::PrTwoStage { phi },
        predictor_arch: l2d_core::train::Arch::Linear,
        deferral_arch: l2d_core::train::Arch::Linear,
        stage1_opt: *stage1_opt,
        stage2_opt: *stage2_opt,
    };
    let pair = train(&pipeline, &task, seed)?;
    let pr = evaluate_system(&pair, &task)?;
    log(verbose, || format!("predictor-rejector loss {}", pr.target_loss));
    let triple = best_score_based_linear(data, &costs, search)?;
    log(verbose, || format!("score-based triple loss {}", triple.loss));
    let bayes = counterexample_bayes_loss(data, c);
    let share = match &data.regions {
        Some(r) if !r.is_empty() => r.iter().filter(|&&g| g == Region::Abstain).count() as f64 / r.len() as f64,
        _ => 0.0,
    };
    Ok((
        CounterexampleSummary {
            task: "counterexample",
            samples: m,
            c,
            abstain_region_share: share,
            bayes_loss: bayes,
            pr_pair_loss: pr.target_loss,
            pr_pair_excess: pr.target_loss - bayes,
            score_triple_loss: triple.loss,
            delta: triple.loss - bayes,
            pr_pair_converged: pair.converged,
            triple,
        },
        pair.trace,
    ))
}
