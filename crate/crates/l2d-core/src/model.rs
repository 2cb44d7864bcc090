//! Label spaces, score containers, cost models, finite distributions and the
//! deterministic decision rules every other module builds on.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, check_finite, Result};
use crate::math;

/// Which problem a label space describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Abstention,
    DeferralClassification,
    DeferralRegression,
}

/// Class count, expert count and the augmented-index conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpace {
    pub n: usize,
    pub n_e: usize,
    pub mode: Mode,
}

impl LabelSpace {
    pub fn new(n: usize, n_e: usize, mode: Mode) -> Result<Self> {
        match mode {
            Mode::Abstention if n < 2 => bail!(InvalidInput, "abstention needs n >= 2, got {n}"),
            Mode::DeferralClassification if n < 2 || n_e < 1 => {
                bail!(InvalidInput, "classification deferral needs n >= 2 and n_e >= 1")
            }
            Mode::DeferralRegression if n_e < 1 => {
                bail!(InvalidInput, "regression deferral needs n_e >= 1")
            }
            _ => {}
        }
        let n_e = if mode == Mode::Abstention { 1 } else { n_e };
        Ok(Self { n, n_e, mode })
    }

    pub fn abstention(n: usize) -> Result<Self> {
        Self::new(n, 1, Mode::Abstention)
    }

    pub fn deferral(n: usize, n_e: usize) -> Result<Self> {
        Self::new(n, n_e, Mode::DeferralClassification)
    }

    /// Length of the augmented score vector of the score-based formulation,
    /// or of the rejector vector in regression mode.
    pub fn score_len(&self) -> usize {
        match self.mode {
            Mode::Abstention => self.n + 1,
            Mode::DeferralClassification => self.n + self.n_e,
            Mode::DeferralRegression => self.n_e + 1,
        }
    }

    /// Length of the predictor-rejector score vector `r(x, 0..=n_e)`.
    pub fn rejector_len(&self) -> usize {
        self.n_e + 1
    }

    pub fn abstain_label(&self) -> usize {
        self.n
    }

    /// Augmented label owned by 0-based expert `j`.
    pub fn expert_label(&self, j: usize) -> usize {
        self.n + j
    }
}

/// Per-input scores of every hypothesis in play.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub h_scores: Vec<f64>,
    pub r_scores: Option<Vec<f64>>,
    pub h_value: Option<f64>,
}

impl ScoreBundle {
    pub fn validate(&self, space: &LabelSpace) -> Result<()> {
        check_finite(&self.h_scores, "h_scores")?;
        match space.mode {
            Mode::DeferralRegression => {
                let r = match &self.r_scores {
                    Some(r) => r,
                    None => bail!(InvalidInput, "regression mode needs r_scores"),
                };
                if r.len() != space.rejector_len() {
                    bail!(InvalidInput, "r_scores has length {}, want {}", r.len(), space.rejector_len());
                }
                check_finite(r, "r_scores")?;
                match self.h_value {
                    Some(v) if v.is_finite() => {}
                    _ => bail!(InvalidInput, "regression mode needs a finite h_value"),
                }
            }
            _ => {
                match &self.r_scores {
                    None => {
                        if self.h_scores.len() != space.score_len() {
                            bail!(
                                InvalidInput,
                                "h_scores has length {}, want {}",
                                self.h_scores.len(),
                                space.score_len()
                            );
                        }
                    }
                    Some(r) => {
                        if self.h_scores.len() != space.n {
                            bail!(InvalidInput, "predictor scores need length n = {}", space.n);
                        }
                        check_finite(r, "r_scores")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Base loss of a regression predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    Squared,
    Absolute,
}

impl RegressionLoss {
    pub fn value(self, prediction: f64, y: f64) -> f64 {
        match self {
            RegressionLoss::Squared => (prediction - y) * (prediction - y),
            RegressionLoss::Absolute => math::abs(prediction - y),
        }
    }

    /// Derivative with respect to the prediction (0 at the absolute-loss kink).
    pub fn grad(self, prediction: f64, y: f64) -> f64 {
        match self {
            RegressionLoss::Squared => 2.0 * (prediction - y),
            RegressionLoss::Absolute => {
                let d = prediction - y;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// How the cost of deferring to each expert is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostKind {
    Constant { c: f64 },
    ExpertMisclassification { alpha: Vec<f64>, beta: Vec<f64> },
    RegressionExpert { loss: RegressionLoss, alpha: Vec<f64>, loss_bound: f64 },
}

/// A cost kind plus per-expert bounds `(c_lo_j, c_hi_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    pub bounds: Vec<(f64, f64)>,
}

/// What the experts output at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpertOutputs<'a> {
    None,
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// Ground truth at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Class(usize),
    Value(f64),
}

impl CostModel {
    pub fn new(kind: CostKind) -> Result<Self> {
        let bounds = match &kind {
            CostKind::Constant { c } => {
                if !(*c > 0.0 && *c < 1.0) {
                    bail!(InvalidInput, "constant cost must lie in (0, 1), got {c}");
                }
                alloc::vec![(*c, *c)]
            }
            CostKind::ExpertMisclassification { alpha, beta } => {
                if alpha.len() != beta.len() || alpha.is_empty() {
                    bail!(InvalidInput, "alpha and beta need the same non-zero length");
                }
                check_finite(alpha, "alpha")?;
                check_finite(beta, "beta")?;
                if alpha.iter().chain(beta).any(|&v| v < 0.0) {
                    bail!(InvalidInput, "alpha and beta must be non-negative");
                }
                alpha.iter().zip(beta).map(|(&a, &b)| (b, a + b)).collect()
            }
            CostKind::RegressionExpert { alpha, loss_bound, .. } => {
                if alpha.is_empty() {
                    bail!(InvalidInput, "regression costs need at least one expert");
                }
                check_finite(alpha, "alpha")?;
                if !(loss_bound.is_finite() && *loss_bound >= 0.0) {
                    bail!(InvalidInput, "loss_bound must be finite and non-negative");
                }
                alpha.iter().map(|&a| (a, loss_bound + a)).collect()
            }
        };
        Ok(Self { kind, bounds })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(CostKind::Constant { c })
    }

    pub fn expert_misclassification(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        Self::new(CostKind::ExpertMisclassification { alpha, beta })
    }

    pub fn regression_expert(loss: RegressionLoss, alpha: Vec<f64>, loss_bound: f64) -> Result<Self> {
        Self::new(CostKind::RegressionExpert { loss, alpha, loss_bound })
    }

    pub fn n_experts(&self) -> usize {
        self.bounds.len()
    }

    /// Replaces the analytic bounds by the range actually attained on a table
    /// of evaluated costs (`rows[i][j]` = cost of expert `j` on sample `i`).
    pub fn tighten_bounds(&mut self, rows: &[Vec<f64>]) {
        for (j, b) in self.bounds.iter_mut().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in rows {
                lo = lo.min(row[j]);
                hi = hi.max(row[j]);
            }
            if lo <= hi {
                *b = (lo, hi);
            }
        }
    }
}

/// Per-expert cost vector at one input.
pub fn eval_cost(model: &CostModel, outputs: ExpertOutputs<'_>, y: Truth) -> Result<Vec<f64>> {
    match (&model.kind, outputs, y) {
        (CostKind::Constant { c }, _, _) => Ok(alloc::vec![*c]),
        (CostKind::ExpertMisclassification { alpha, beta }, ExpertOutputs::Classes(g), Truth::Class(y)) => {
            if g.len() != alpha.len() {
                bail!(InvalidInput, "expected {} expert outputs, got {}", alpha.len(), g.len());
            }
            Ok(g.iter()
                .zip(alpha.iter().zip(beta))
                .map(|(&gj, (&a, &b))| if gj != y { a + b } else { b })
                .collect())
        }
        (CostKind::RegressionExpert { loss, alpha, .. }, ExpertOutputs::Values(g), Truth::Value(y)) => {
            if g.len() != alpha.len() {
                bail!(InvalidInput, "expected {} expert outputs, got {}", alpha.len(), g.len());
            }
            check_finite(g, "expert outputs")?;
            Ok(g.iter().zip(alpha).map(|(&gj, &a)| loss.value(gj, y) + a).collect())
        }
        (_, ExpertOutputs::None, _) => bail!(InvalidInput, "missing expert outputs"),
        _ => bail!(InvalidInput, "expert outputs or truth do not match the cost kind"),
    }
}

/// One element of a finite input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: usize,
    pub features: Option<Vec<f64>>,
}

/// Finite input space with marginal weights and conditional label rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub points: Vec<Point>,
    pub cond_probs: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub const SIMPLEX_TOL: f64 = 1e-12;

/// Rejects vectors that are not probability vectors within [`SIMPLEX_TOL`].
pub fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        bail!(InvalidInput, "{what} is empty");
    }
    check_finite(p, what)?;
    if p.iter().any(|&v| v < 0.0) {
        bail!(InvalidInput, "{what} has a negative entry");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        bail!(InvalidInput, "{what} sums to {s}, not 1");
    }
    Ok(())
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Point>, cond_probs: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != cond_probs.len() || points.len() != weights.len() {
            bail!(InvalidInput, "points, cond_probs and weights need equal lengths");
        }
        check_simplex(&weights, "weights")?;
        let n = cond_probs.first().map_or(0, Vec::len);
        for (i, row) in cond_probs.iter().enumerate() {
            if row.len() != n {
                bail!(InvalidInput, "cond_probs[{i}] has length {}, want {n}", row.len());
            }
            check_simplex(row, "cond_probs row")?;
        }
        Ok(Self { points, cond_probs, weights })
    }

    /// Distribution over ids `0..rows.len()` without features.
    pub fn from_rows(cond_probs: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let points = (0..cond_probs.len()).map(|id| Point { id, features: None }).collect();
        Self::new(points, cond_probs, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.cond_probs.first().map_or(0, Vec::len)
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn predict_label(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        bail!(InvalidInput, "empty score vector");
    }
    check_finite(scores, "scores")?;
    Ok(math::argmax(scores))
}

/// Rejector conventions found in the literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectorConvention {
    /// Input is `r(x, 0..=n_e)`; the decision is its argmax.
    ArgmaxDefer,
    /// Input is `(r_1, ..., r_{n_e})` with `r_0 = 0` implicit; keep the model
    /// when every `r_j > 0`, otherwise defer to the smallest `r_j`.
    ArgminDefer,
}

impl RejectorConvention {
    pub fn input_len(self, n_e: usize) -> usize {
        match self {
            RejectorConvention::ArgmaxDefer => n_e + 1,
            RejectorConvention::ArgminDefer => n_e,
        }
    }
}

/// Deferral index in `0..=n_e`; `0` keeps the base model.
pub fn rejector_decision(r: &[f64], convention: RejectorConvention, n_e: usize) -> Result<usize> {
    if r.len() != convention.input_len(n_e) {
        bail!(InvalidInput, "rejector vector has length {}, want {}", r.len(), convention.input_len(n_e));
    }
    check_finite(r, "r_scores")?;
    Ok(match convention {
        RejectorConvention::ArgmaxDefer => math::argmax(r),
        RejectorConvention::ArgminDefer => {
            let j = math::argmin(r);
            if r[j] > 0.0 {
                0
            } else {
                j + 1
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn predict_label_examples() {
        assert_eq!(predict_label(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(predict_label(&[0.5, 0.5, 0.2]).unwrap(), 0);
        assert_eq!(predict_label(&[-1.0, -1.0, -1.0]).unwrap(), 0);
        assert!(predict_label(&[]).is_err());
        assert!(predict_label(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn rejector_decision_examples() {
        use RejectorConvention::*;
        assert_eq!(rejector_decision(&[0.2, 0.5, 0.1], ArgmaxDefer, 2).unwrap(), 1);
        assert_eq!(rejector_decision(&[-0.3, 0.4], ArgminDefer, 2).unwrap(), 1);
        assert_eq!(rejector_decision(&[1.0, 1.0, 1.0], ArgmaxDefer, 2).unwrap(), 0);
        assert_eq!(rejector_decision(&[0.3, 0.4], ArgminDefer, 2).unwrap(), 0);
        assert_eq!(rejector_decision(&[0.0, 0.0], ArgminDefer, 2).unwrap(), 1);
        assert!(rejector_decision(&[0.1], ArgmaxDefer, 2).is_err());
    }

    #[test]
    fn eval_cost_examples() {
        let m = CostModel::constant(0.3).unwrap();
        assert_eq!(eval_cost(&m, ExpertOutputs::None, Truth::Class(0)).unwrap(), vec![0.3]);
        let m = CostModel::expert_misclassification(vec![1.0], vec![0.1]).unwrap();
        assert_eq!(eval_cost(&m, ExpertOutputs::Classes(&[2]), Truth::Class(2)).unwrap(), vec![0.1]);
        assert_eq!(eval_cost(&m, ExpertOutputs::Classes(&[1]), Truth::Class(2)).unwrap(), vec![1.1]);
        let m = CostModel::regression_expert(RegressionLoss::Squared, vec![4.0], 10.0).unwrap();
        assert_eq!(eval_cost(&m, ExpertOutputs::Values(&[2.0]), Truth::Value(0.0)).unwrap(), vec![8.0]);
        assert!(eval_cost(&m, ExpertOutputs::None, Truth::Value(0.0)).is_err());
    }

    #[test]
    fn constant_cost_must_be_inside_unit_interval() {
        assert!(CostModel::constant(1.0).is_err());
        assert!(CostModel::constant(0.0).is_err());
    }

    #[test]
    fn distribution_rejects_off_simplex_rows() {
        assert!(DiscreteDistribution::from_rows(vec![vec![0.5, 0.6]], vec![1.0]).is_err());
        assert!(DiscreteDistribution::from_rows(vec![vec![1.5, -0.5]], vec![1.0]).is_err());
        assert!(DiscreteDistribution::from_rows(vec![vec![0.5, 0.5]], vec![0.9]).is_err());
        assert!(DiscreteDistribution::from_rows(vec![vec![0.5, 0.5]], vec![1.0]).is_ok());
    }

    #[test]
    fn label_space_lengths() {
        assert_eq!(LabelSpace::abstention(3).unwrap().score_len(), 4);
        assert_eq!(LabelSpace::deferral(3, 2).unwrap().score_len(), 5);
        let r = LabelSpace::new(0, 3, Mode::DeferralRegression).unwrap();
        assert_eq!(r.score_len(), 4);
        assert!(LabelSpace::deferral(3, 0).is_err());
        assert!(LabelSpace::abstention(1).is_err());
    }
}
