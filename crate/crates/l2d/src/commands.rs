//! `gradcheck`, `oracle` and `bounds`. Each command validates its config,
//! computes, writes its files and reports an [`Outcome`].

use l2d_core::model::{check_simplex, RegressionLoss};
use l2d_core::oracle::{
    bayes_abstention, bayes_deferral, bayes_pr_abstention, bayes_recovery, default_surrogate_suite, endorsed_kinds, fd_check,
    min_gap_closed_form, q_vector, random_fd_case, verify_bound, AbstentionDecision, BoundKind, BoundReport, BoundStatus,
};
use l2d_core::surrogate::SurrogateSpec;
use l2d_core::synth::rng_for;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BoundsConfig, GradcheckConfig, OracleConfig};
use crate::error::{CliError, Outcome, Result};
use crate::output::{header, num, OutDir};

/// What a finished command reports on standard output.
#[derive(Debug, Clone, PartialEq)]
pub struct Completed {
    pub outcome: Outcome,
    pub summary: String,
}

fn compact<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config types serialize")
}

/// A spec must be valid for some label-space size the checker draws.
fn check_drawable(spec: &SurrogateSpec) -> Result<()> {
    let ok = (2..=4).any(|n| (0..=3).any(|ne| spec.validate(n, ne).is_ok()));
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("surrogate {} has invalid parameters", compact(spec))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdRow {
    pub spec: SurrogateSpec,
    pub point_id: usize,
    pub max_rel_error: f64,
}

/// Central-difference check of every configured surrogate at `points`
/// seeded configurations. Spec `s` draws from stream `s` of `seed`.
pub fn gradcheck_rows(cfg: &GradcheckConfig) -> Result<Vec<FdRow>> {
    cfg.validate()?;
    let suite = cfg.surrogates.clone().unwrap_or_else(default_surrogate_suite);
    for s in &suite {
        check_drawable(s)?;
    }
    let per_spec: Vec<Result<Vec<FdRow>>> = suite
        .par_iter()
        .enumerate()
        .map(|(s, spec)| {
            let mut rng = rng_for(cfg.seed, s as u64);
            (0..cfg.points)
                .map(|point_id| {
                    let case = random_fd_case(spec, &mut rng, cfg.min_kink);
                    let e = fd_check(&case.spec, case.n, &case.sample.view(), &case.point, cfg.step)?;
                    Ok(FdRow { spec: *spec, point_id, max_rel_error: e })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_spec {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn gradcheck(cfg: &GradcheckConfig, out: &OutDir) -> Result<Completed> {
    let rows = gradcheck_rows(cfg)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.spec.tag().to_string(), compact(&r.spec), r.point_id.to_string(), num(r.max_rel_error)])
        .collect();
    out.csv("gradcheck.csv", &header(&["surrogate", "spec", "point_id", "max_rel_error"]), &table)?;
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failures = rows.iter().filter(|r| !(r.max_rel_error < cfg.threshold)).count();
    Ok(Completed {
        outcome: if failures == 0 { Outcome::Success } else { Outcome::Violation },
        summary: format!("gradcheck: {} checks, {failures} at or above {:e}, max error {worst:e}", rows.len(), cfg.threshold),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinGapEntry {
    pub mu: f64,
    pub c: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstentionEntry {
    pub c: f64,
    pub decision: AbstentionDecision,
    pub risk: f64,
    /// Predictor-rejector Bayes risk with an unrestricted predictor.
    pub pr_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeferralEntry {
    pub expected_costs: Vec<f64>,
    pub q: Vec<f64>,
    /// Class label below `n`, expert `j` as `n + j`.
    pub decision: usize,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEntry {
    pub x: usize,
    pub p: Vec<f64>,
    pub abstention: Vec<AbstentionEntry>,
    pub deferral: Option<DeferralEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretPoint {
    pub x: usize,
    pub bayes: usize,
    pub surrogate: usize,
    pub regret: f64,
}

/// Target regret of the minimizer of the conditional `L_μ` risk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretEntry {
    pub mu: f64,
    pub c: f64,
    pub max_regret: f64,
    pub points: Vec<RegretPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceEntry {
    pub index: usize,
    pub points: Vec<PointEntry>,
    pub regrets: Vec<RegretEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub min_gap: Vec<MinGapEntry>,
    pub instances: Vec<InstanceEntry>,
}

pub fn oracle_report(cfg: &OracleConfig) -> Result<OracleReport> {
    cfg.validate()?;
    let mut min_gap = Vec::new();
    for &mu in &cfg.mu_grid {
        for &c in &cfg.c_grid {
            min_gap.push(MinGapEntry { mu, c, value: min_gap_closed_form(mu, c)? });
        }
    }
    let mut insts = Vec::new();
    for src in &cfg.instances {
        insts.extend(src.build(None)?);
    }
    for inst in &insts {
        inst.validate(false)?;
        for p in &inst.dist.cond_probs {
            check_simplex(p, "cond_probs")?;
        }
    }
    let instances: Vec<Result<InstanceEntry>> = insts
        .par_iter()
        .enumerate()
        .map(|(index, inst)| {
            let mut points = Vec::new();
            for (x, p) in inst.dist.cond_probs.iter().enumerate() {
                let mut abstention = Vec::new();
                for &c in &cfg.c_grid {
                    let (decision, risk) = bayes_abstention(p, c)?;
                    abstention.push(AbstentionEntry { c, decision, risk, pr_risk: bayes_pr_abstention(p, c, None)? });
                }
                let deferral = if inst.n_experts() > 0 {
                    let ec = inst.expected_costs(x);
                    let q = q_vector(p, &ec)?.values;
                    let (decision, risk) = bayes_deferral(p, &ec)?;
                    Some(DeferralEntry { expected_costs: ec, q, decision, risk })
                } else {
                    None
                };
                points.push(PointEntry { x, p: p.clone(), abstention, deferral });
            }
            let mut regrets = Vec::new();
            for &mu in &cfg.mu_grid {
                for &c in &cfg.c_grid {
                    let rep = bayes_recovery(&BoundKind::AbstainScore { mu, c }, inst, &cfg.grid)?;
                    let pts: Vec<RegretPoint> = rep
                        .points
                        .iter()
                        .map(|r| RegretPoint {
                            x: r.x,
                            bayes: r.bayes,
                            surrogate: r.surrogate,
                            regret: (r.risks[r.surrogate] - r.risks[r.bayes]).max(0.0),
                        })
                        .collect();
                    let max_regret = pts.iter().map(|r| r.regret).fold(0.0, f64::max);
                    regrets.push(RegretEntry { mu, c, max_regret, points: pts });
                }
            }
            Ok(InstanceEntry { index, points, regrets })
        })
        .collect();
    Ok(OracleReport { min_gap, instances: instances.into_iter().collect::<Result<_>>()? })
}

pub fn oracle(cfg: &OracleConfig, out: &OutDir) -> Result<Completed> {
    let report = oracle_report(cfg)?;
    out.json("oracle.json", &report)?;
    Ok(Completed {
        outcome: Outcome::Success,
        summary: format!("oracle: {} min-gap entries, {} instances", report.min_gap.len(), report.instances.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRun {
    pub kind: BoundKind,
    pub instance: usize,
    pub status: BoundStatus,
    pub min_margin: f64,
    pub min_margin_grid: f64,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsFile {
    pub outcome: &'static str,
    pub runs: Vec<BoundRun>,
}

fn status_outcome(s: BoundStatus) -> Outcome {
    match s {
        BoundStatus::Pass => Outcome::Success,
        BoundStatus::Violation => Outcome::Violation,
        BoundStatus::Inconclusive => Outcome::Inconclusive,
    }
}

/// Every (kind, instance) pair in config order.
pub fn bound_runs(cfg: &BoundsConfig) -> Result<Vec<BoundRun>> {
    cfg.validate()?;
    let kinds = cfg.kinds.clone().unwrap_or_else(endorsed_kinds);
    let mut jobs = Vec::new();
    for kind in &kinds {
        let regression: Option<RegressionLoss> = match kind {
            BoundKind::RegressionSingle { loss, .. } => Some(*loss),
            _ => None,
        };
        let mut index = 0;
        for src in &cfg.instances {
            for inst in src.build(regression)? {
                jobs.push((*kind, index, inst));
                index += 1;
            }
        }
    }
    let runs: Vec<Result<BoundRun>> = jobs
        .par_iter()
        .map(|(kind, instance, inst)| {
            let mut report = verify_bound(kind, inst, &cfg.verify)?;
            if !cfg.full_reports {
                report.all.clear();
            }
            Ok(BoundRun {
                kind: *kind,
                instance: *instance,
                status: report.status,
                min_margin: report.min_margin,
                min_margin_grid: report.min_margin_grid,
                report,
            })
        })
        .collect();
    runs.into_iter().collect()
}

pub fn bounds(cfg: &BoundsConfig, out: &OutDir) -> Result<Completed> {
    let runs = bound_runs(cfg)?;
    let outcome = runs.iter().fold(Outcome::Success, |o, r| o.combine(status_outcome(r.status)));
    let name = match outcome {
        Outcome::Success => "pass",
        Outcome::Violation => "violation",
        Outcome::Inconclusive => "inconclusive",
    };
    let table: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.kind.tag().to_string(),
                compact(&r.kind),
                r.instance.to_string(),
                compact(&r.status).trim_matches('"').to_string(),
                r.report.hypotheses.to_string(),
                num(r.min_margin),
                num(r.min_margin_grid),
                r.report.violators.len().to_string(),
            ]
        })
        .collect();
    out.csv(
        "bounds.csv",
        &header(&["kind", "spec", "instance", "status", "hypotheses", "min_margin", "min_margin_grid", "violators"]),
        &table,
    )?;
    let worst = runs.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min);
    let summary = format!("bounds: {} runs, outcome {name}, min margin {worst:e}", runs.len());
    out.json("bounds.json", &BoundsFile { outcome: name, runs })?;
    Ok(Completed { outcome, summary })
}
