//! Exact target losses for abstention and deferral, plus the algebraic
//! rewrite of the deferral loss used by the regression surrogates.

use serde::{Deserialize, Serialize};

use crate::error::{bail, check_finite, Result};
use crate::math;
use crate::model::{rejector_decision, RejectorConvention, ScoreBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLossKind {
    AbstainScore,
    AbstainPr,
    DeferScore,
    DeferPr,
    DeferRegression,
}

pub(crate) fn check_cost(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        bail!(InvalidInput, "abstention cost must lie in (0, 1), got {c}");
    }
    Ok(())
}

/// Decision of the score-based abstention rule on `n + 1` scores: the
/// abstain label `n` wins whenever its score is at least the class maximum.
pub fn abstention_decision(scores: &[f64]) -> usize {
    let n = scores.len() - 1;
    let best = math::argmax(&scores[..n]);
    if scores[n] >= scores[best] {
        n
    } else {
        best
    }
}

/// Score-based abstention loss; value in `{0, c, 1}`.
pub fn abstention_loss_score(scores: &[f64], y: usize, c: f64) -> Result<f64> {
    check_cost(c)?;
    if scores.len() < 3 {
        bail!(InvalidInput, "need at least two classes plus the abstain score");
    }
    check_finite(scores, "scores")?;
    let n = scores.len() - 1;
    if y >= n {
        bail!(InvalidInput, "label {y} out of range for {n} classes");
    }
    let d = abstention_decision(scores);
    Ok(if d == n {
        c
    } else if d != y {
        1.0
    } else {
        0.0
    })
}

/// Predictor-rejector abstention loss; `r <= 0` rejects.
pub fn abstention_loss_pr(h: &[f64], r: f64, y: usize, c: f64) -> Result<f64> {
    check_cost(c)?;
    if h.is_empty() || y >= h.len() {
        bail!(InvalidInput, "label {y} out of range for {} classes", h.len());
    }
    check_finite(h, "h")?;
    if !r.is_finite() {
        bail!(InvalidInput, "r is not finite");
    }
    if r <= 0.0 {
        return Ok(c);
    }
    Ok(if math::argmax(h) != y { 1.0 } else { 0.0 })
}

/// Score-based deferral loss over `n + n_e` augmented scores.
pub fn defer_loss_score(scores: &[f64], y: usize, costs: &[f64]) -> Result<f64> {
    let n_e = costs.len();
    if n_e == 0 || scores.len() <= n_e + 1 {
        bail!(InvalidInput, "need n >= 2 class scores plus {n_e} expert scores");
    }
    check_finite(scores, "scores")?;
    let n = scores.len() - n_e;
    if y >= n {
        bail!(InvalidInput, "label {y} out of range for {n} classes");
    }
    let d = math::argmax(scores);
    Ok(if d >= n {
        costs[d - n]
    } else if d != y {
        1.0
    } else {
        0.0
    })
}

/// Deferral loss given a rejector index: the base loss when the index is
/// `0`, otherwise the cost of the chosen expert.
pub fn defer_loss_indexed(base_loss: f64, decision: usize, costs: &[f64]) -> Result<f64> {
    if decision > costs.len() {
        bail!(InvalidInput, "deferral index {decision} exceeds n_e = {}", costs.len());
    }
    Ok(if decision == 0 { base_loss } else { costs[decision - 1] })
}

/// Ground truth for [`deferral_loss`]: the class, or the regression loss
/// `L(h(x), y)` already evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeferTruth {
    Class(usize),
    BaseLoss(f64),
}

/// Dispatches to the deferral loss matching `kind`.
pub fn deferral_loss(
    kind: TargetLossKind,
    bundle: &ScoreBundle,
    truth: DeferTruth,
    costs: &[f64],
    convention: RejectorConvention,
) -> Result<f64> {
    let n_e = costs.len();
    match (kind, truth) {
        (TargetLossKind::DeferScore, DeferTruth::Class(y)) => defer_loss_score(&bundle.h_scores, y, costs),
        (TargetLossKind::DeferPr, DeferTruth::Class(y)) => {
            let r = bundle.r_scores.as_deref().unwrap_or(&[]);
            let d = rejector_decision(r, convention, n_e)?;
            check_finite(&bundle.h_scores, "h_scores")?;
            if y >= bundle.h_scores.len() {
                bail!(InvalidInput, "label {y} out of range");
            }
            let base = if math::argmax(&bundle.h_scores) == y { 0.0 } else { 1.0 };
            defer_loss_indexed(base, d, costs)
        }
        (TargetLossKind::DeferRegression, DeferTruth::BaseLoss(l)) => {
            let r = bundle.r_scores.as_deref().unwrap_or(&[]);
            let d = rejector_decision(r, convention, n_e)?;
            defer_loss_indexed(l, d, costs)
        }
        _ => bail!(InvalidInput, "{kind:?} is not a deferral loss for this truth"),
    }
}

/// Rewritten deferral loss
/// `[Σc]·1{d≠0} + Σ_j [L + Σ_{k≠j} c_k]·1{d≠j} − (n_e − 1)[L + Σc]`.
pub fn deferral_loss_rewrite(base_loss: f64, costs: &[f64], decision: usize) -> Result<f64> {
    let n_e = costs.len();
    if n_e == 0 {
        bail!(InvalidInput, "rewrite needs n_e >= 1");
    }
    if decision > n_e {
        bail!(InvalidInput, "deferral index {decision} exceeds n_e = {n_e}");
    }
    let total: f64 = costs.iter().sum();
    let mut v = if decision != 0 { total } else { 0.0 };
    for (j, &cj) in costs.iter().enumerate() {
        if decision != j + 1 {
            v += base_loss + (total - cj);
        }
    }
    Ok(v - (n_e as f64 - 1.0) * (base_loss + total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn abstention_score_examples() {
        assert_eq!(abstention_loss_score(&[2.0, 0.0, 1.0], 0, 0.3).unwrap(), 0.0);
        assert_eq!(abstention_loss_score(&[0.0, 0.0, 5.0], 1, 0.3).unwrap(), 0.3);
        assert_eq!(abstention_loss_score(&[1.0, 1.0, 1.0], 0, 0.3).unwrap(), 0.3);
        assert!(abstention_loss_score(&[1.0, 1.0, 1.0], 0, 1.0).is_err());
        assert!(abstention_loss_score(&[1.0, 1.0, 1.0], 0, 0.0).is_err());
    }

    #[test]
    fn abstention_pr_examples() {
        assert_eq!(abstention_loss_pr(&[2.0, 0.0], 1.0, 0, 0.5).unwrap(), 0.0);
        assert_eq!(abstention_loss_pr(&[2.0, 0.0], -0.1, 0, 0.5).unwrap(), 0.5);
        assert_eq!(abstention_loss_pr(&[0.0, 2.0], 0.0, 0, 0.2).unwrap(), 0.2);
        assert_eq!(abstention_loss_pr(&[0.0, 2.0], 0.1, 0, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn deferral_examples() {
        let b = ScoreBundle { h_scores: vec![0.0, 0.1, 0.2, 0.9], ..Default::default() };
        let v = deferral_loss(TargetLossKind::DeferScore, &b, DeferTruth::Class(0), &[0.2, 0.9], RejectorConvention::ArgmaxDefer);
        assert_eq!(v.unwrap(), 0.9);

        let b = ScoreBundle { r_scores: Some(vec![1.0, 0.0, 0.0]), h_value: Some(0.0), ..Default::default() };
        let v = deferral_loss(TargetLossKind::DeferRegression, &b, DeferTruth::BaseLoss(0.5), &[0.2, 0.9], RejectorConvention::ArgmaxDefer);
        assert_eq!(v.unwrap(), 0.5);

        let b = ScoreBundle { h_scores: vec![3.0, 1.0], r_scores: Some(vec![0.5, 0.7]), h_value: None };
        let v = deferral_loss(TargetLossKind::DeferPr, &b, DeferTruth::Class(0), &[0.2, 0.9], RejectorConvention::ArgminDefer);
        assert_eq!(v.unwrap(), 0.0);
        assert!(deferral_loss(TargetLossKind::DeferPr, &b, DeferTruth::Class(0), &[0.2], RejectorConvention::ArgminDefer).is_err());
    }

    #[test]
    fn rewrite_examples() {
        assert!((deferral_loss_rewrite(0.5, &[0.2, 0.9], 1).unwrap() - 0.2).abs() < 1e-15);
        assert!((deferral_loss_rewrite(0.5, &[0.2, 0.9], 0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(deferral_loss_rewrite(0.0, &[0.4], 0).unwrap(), 0.0);
        assert!(deferral_loss_rewrite(0.0, &[], 0).is_err());
    }
}
