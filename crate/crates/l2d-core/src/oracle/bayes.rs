use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, check_finite, Result};
use crate::math;
use crate::model::check_simplex;
use crate::target::check_cost;

/// `Σ_y p(y|x)·loss(y)`.
pub fn conditional_risk(p: &[f64], mut loss: impl FnMut(usize) -> Result<f64>) -> Result<f64> {
    check_simplex(p, "p")?;
    let mut v = 0.0;
    for (y, &py) in p.iter().enumerate() {
        if py != 0.0 {
            v += py * loss(y)?;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "label", rename_all = "snake_case")]
pub enum AbstentionDecision {
    Predict(usize),
    Abstain,
}

/// `Σ_{y≠k} p_y`, summed in the order [`conditional_risk`] uses so both
/// agree bitwise.
fn error_mass(p: &[f64], k: usize) -> f64 {
    p.iter().enumerate().filter(|&(y, &py)| y != k && py != 0.0).map(|(_, &py)| py).fold(0.0, |a, b| a + b)
}

/// Bayes abstention rule: argmax over `(p_1, ..., p_n, 1 − c)` with the
/// abstain option winning ties. Returns the decision and its risk.
pub fn bayes_abstention(p: &[f64], c: f64) -> Result<(AbstentionDecision, f64)> {
    check_simplex(p, "p")?;
    check_cost(c)?;
    let k = math::argmax(p);
    if 1.0 - c >= p[k] {
        Ok((AbstentionDecision::Abstain, c))
    } else {
        Ok((AbstentionDecision::Predict(k), error_mass(p, k)))
    }
}

/// `q(x, y) = p(y|x)` on classes and `1 − E_y[c_j(x, y)]` on expert labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVector {
    pub values: Vec<f64>,
    pub normalizer: f64,
}

impl QVector {
    pub fn normalized(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / self.normalizer).collect()
    }
}

pub fn q_vector(p: &[f64], expected_costs: &[f64]) -> Result<QVector> {
    check_simplex(p, "p")?;
    check_finite(expected_costs, "expected costs")?;
    if expected_costs.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        bail!(InvalidInput, "expected costs must lie in [0, 1] for q to be non-negative");
    }
    let mut values = p.to_vec();
    values.extend(expected_costs.iter().map(|c| 1.0 - c));
    let normalizer = values.iter().sum();
    Ok(QVector { values, normalizer })
}

/// Bayes score-based deferral rule: argmax of `q` (lowest index on ties)
/// with risk `1 − max q`, evaluated as the risk of the chosen action.
pub fn bayes_deferral(p: &[f64], expected_costs: &[f64]) -> Result<(usize, f64)> {
    let q = q_vector(p, expected_costs)?;
    let d = math::argmax(&q.values);
    let n = p.len();
    Ok((d, if d < n { error_mass(p, d) } else { expected_costs[d - n] }))
}

/// Minimal predictor-rejector abstention risk `1 − max{max_{y∈H} p_y, 1 − c}`
/// where `allowed` restricts the labels reachable by the predictor class.
pub fn bayes_pr_abstention(p: &[f64], c: f64, allowed: Option<&[usize]>) -> Result<f64> {
    check_simplex(p, "p")?;
    check_cost(c)?;
    let best = match allowed {
        None => math::max(p),
        Some(ids) => {
            if ids.is_empty() {
                bail!(InvalidInput, "allowed label set is empty");
            }
            let mut m = f64::NEG_INFINITY;
            for &i in ids {
                if i >= p.len() {
                    bail!(InvalidInput, "allowed label {i} out of range");
                }
                m = m.max(p[i]);
            }
            m
        }
    };
    Ok(1.0 - best.max(1.0 - c))
}
