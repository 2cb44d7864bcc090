//! Atomic multi-class loss families and binary margin losses, each with an
//! analytic gradient with respect to the raw scores.
//!
//! Every `value_grad` overwrites the gradient buffer when one is supplied.
//! Kinks carry a zero subgradient so results are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{bail, check_finite, Result};
use crate::math::{self, exp, expm1, softplus};

/// Inner Φ of a sum loss `Σ_{y'≠y} Φ(h(y) − h(y'))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SumInner {
    Sq,
    Exp,
    Rho { rho: f64 },
}

/// Inner Φ of a constrained loss `Σ_{y'≠y} Φ(−h(y'))` with `Σ h = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstrainedInner {
    Hinge,
    RhoHinge { rho: f64 },
    Sq,
    Exp,
    Rho { rho: f64 },
}

/// Multi-class loss `ℓ(h, y)` over `K` labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MulticlassFamily {
    /// `ℓ_μ`: sum-exp at μ = 0, logistic at μ = 1, MAE at μ = 2.
    CompSum { mu: f64 },
    /// Generalized cross-entropy `(1 − s_y^α)/α`.
    Gce { alpha: f64 },
    /// Logistic loss in bits, `log_2 Σ e^{h(y') − h(y)}`; dominates the 0-1 loss.
    Log2,
    SumLoss { inner: SumInner },
    /// Scores are mean-centred before evaluation.
    Constrained { inner: ConstrainedInner },
    /// ρ-margin loss of the confidence margin `h(y) − max_{y'≠y} h(y')`.
    Margin { rho: f64 },
    /// Two-label margin form `Φ(h(y) − h(1 − y))`.
    Binary { phi: BinaryPhi },
}

/// Non-increasing margin losses `Φ(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phi", rename_all = "snake_case", deny_unknown_fields)]
pub enum BinaryPhi {
    Exp,
    /// Natural-log logistic `log(1 + e^{−u})`.
    Logistic,
    /// Base-2 logistic `log_2(1 + e^{−u})`.
    Logistic2,
    Quadratic,
    Hinge,
    Sigmoid { k: f64 },
    RhoMargin { rho: f64 },
}

impl BinaryPhi {
    pub const ALL_DEFAULT: [BinaryPhi; 7] = [
        BinaryPhi::Exp,
        BinaryPhi::Logistic,
        BinaryPhi::Logistic2,
        BinaryPhi::Quadratic,
        BinaryPhi::Hinge,
        BinaryPhi::Sigmoid { k: 1.0 },
        BinaryPhi::RhoMargin { rho: 1.0 },
    ];

    pub fn validate(self) -> Result<()> {
        match self {
            BinaryPhi::Sigmoid { k } if !(k > 0.0 && k.is_finite()) => bail!(InvalidParameter, "sigmoid k must be > 0"),
            BinaryPhi::RhoMargin { rho } if !(rho > 0.0 && rho.is_finite()) => {
                bail!(InvalidParameter, "rho must be > 0")
            }
            _ => Ok(()),
        }
    }

    pub fn value(self, u: f64) -> f64 {
        match self {
            BinaryPhi::Exp => exp(-u),
            BinaryPhi::Logistic => softplus(-u),
            BinaryPhi::Logistic2 => softplus(-u) / core::f64::consts::LN_2,
            BinaryPhi::Quadratic => {
                let m = (1.0 - u).max(0.0);
                m * m
            }
            BinaryPhi::Hinge => (1.0 - u).max(0.0),
            BinaryPhi::Sigmoid { k } => 1.0 - math::tanh(k * u),
            BinaryPhi::RhoMargin { rho } => rho_margin(u, rho),
        }
    }

    pub fn grad(self, u: f64) -> f64 {
        match self {
            BinaryPhi::Exp => -exp(-u),
            BinaryPhi::Logistic => -math::sigmoid(-u),
            BinaryPhi::Logistic2 => -math::sigmoid(-u) / core::f64::consts::LN_2,
            BinaryPhi::Quadratic => -2.0 * (1.0 - u).max(0.0),
            BinaryPhi::Hinge => {
                if u < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            BinaryPhi::Sigmoid { k } => {
                let t = math::tanh(k * u);
                -k * (1.0 - t * t)
            }
            BinaryPhi::RhoMargin { rho } => rho_margin_grad(u, rho),
        }
    }

    /// Distance from `u` to the nearest point where Φ is not twice
    /// differentiable; infinite for smooth Φ.
    pub fn kink_distance(self, u: f64) -> f64 {
        match self {
            BinaryPhi::Quadratic | BinaryPhi::Hinge => math::abs(u - 1.0),
            BinaryPhi::RhoMargin { rho } => math::abs(u).min(math::abs(u - rho)),
            _ => f64::INFINITY,
        }
    }
}

fn rho_margin(u: f64, rho: f64) -> f64 {
    (1.0 - u / rho).clamp(0.0, 1.0)
}

fn rho_margin_grad(u: f64, rho: f64) -> f64 {
    if u > 0.0 && u < rho {
        -1.0 / rho
    } else {
        0.0
    }
}

impl SumInner {
    fn value(self, t: f64) -> f64 {
        match self {
            SumInner::Sq => BinaryPhi::Quadratic.value(t),
            SumInner::Exp => exp(-t),
            SumInner::Rho { rho } => rho_margin(t, rho),
        }
    }
    fn grad(self, t: f64) -> f64 {
        match self {
            SumInner::Sq => BinaryPhi::Quadratic.grad(t),
            SumInner::Exp => -exp(-t),
            SumInner::Rho { rho } => rho_margin_grad(t, rho),
        }
    }
    fn kink_distance(self, t: f64) -> f64 {
        match self {
            SumInner::Sq => math::abs(t - 1.0),
            SumInner::Exp => f64::INFINITY,
            SumInner::Rho { rho } => math::abs(t).min(math::abs(t - rho)),
        }
    }
}

impl ConstrainedInner {
    fn value(self, t: f64) -> f64 {
        match self {
            ConstrainedInner::Hinge => (1.0 - t).max(0.0),
            ConstrainedInner::RhoHinge { rho } => (1.0 - t / rho).max(0.0),
            ConstrainedInner::Sq => BinaryPhi::Quadratic.value(t),
            ConstrainedInner::Exp => exp(-t),
            ConstrainedInner::Rho { rho } => rho_margin(t, rho),
        }
    }
    fn grad(self, t: f64) -> f64 {
        match self {
            ConstrainedInner::Hinge => {
                if t < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ConstrainedInner::RhoHinge { rho } => {
                if t < rho {
                    -1.0 / rho
                } else {
                    0.0
                }
            }
            ConstrainedInner::Sq => BinaryPhi::Quadratic.grad(t),
            ConstrainedInner::Exp => -exp(-t),
            ConstrainedInner::Rho { rho } => rho_margin_grad(t, rho),
        }
    }
    fn kink_distance(self, t: f64) -> f64 {
        match self {
            ConstrainedInner::Hinge | ConstrainedInner::Sq => math::abs(t - 1.0),
            ConstrainedInner::RhoHinge { rho } => math::abs(t - rho),
            ConstrainedInner::Exp => f64::INFINITY,
            ConstrainedInner::Rho { rho } => math::abs(t).min(math::abs(t - rho)),
        }
    }
    fn rho(self) -> Option<f64> {
        match self {
            ConstrainedInner::RhoHinge { rho } | ConstrainedInner::Rho { rho } => Some(rho),
            _ => None,
        }
    }
}

impl MulticlassFamily {
    pub const LOG: MulticlassFamily = MulticlassFamily::CompSum { mu: 1.0 };
    pub const EXP: MulticlassFamily = MulticlassFamily::CompSum { mu: 0.0 };
    pub const MAE: MulticlassFamily = MulticlassFamily::CompSum { mu: 2.0 };
    pub const GCE: MulticlassFamily = MulticlassFamily::Gce { alpha: 0.7 };

    pub fn validate(&self, k: usize) -> Result<()> {
        if k < 2 {
            bail!(InvalidParameter, "loss families need at least two labels, got {k}");
        }
        match *self {
            MulticlassFamily::CompSum { mu } if !(mu >= 0.0 && mu.is_finite()) => {
                bail!(InvalidParameter, "mu must be >= 0, got {mu}")
            }
            MulticlassFamily::Gce { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                bail!(InvalidParameter, "gce alpha must lie in (0, 1), got {alpha}")
            }
            MulticlassFamily::SumLoss { inner: SumInner::Rho { rho } } | MulticlassFamily::Margin { rho }
                if !(rho > 0.0 && rho.is_finite()) =>
            {
                bail!(InvalidParameter, "rho must be > 0, got {rho}")
            }
            MulticlassFamily::Constrained { inner } => {
                if let Some(rho) = inner.rho() {
                    if !(rho > 0.0 && rho.is_finite()) {
                        bail!(InvalidParameter, "rho must be > 0, got {rho}");
                    }
                }
                Ok(())
            }
            MulticlassFamily::Binary { phi } => {
                if k != 2 {
                    bail!(InvalidParameter, "binary margin family needs exactly two labels, got {k}");
                }
                phi.validate()
            }
            _ => Ok(()),
        }
    }

    /// `true` when the family has a smooth softmax form (comp-sum style).
    pub fn is_comp_sum(&self) -> bool {
        matches!(self, MulticlassFamily::CompSum { .. } | MulticlassFamily::Gce { .. } | MulticlassFamily::Log2)
    }

    /// Equivalent `μ` for the comp-sum style families.
    pub fn comp_sum_mu(&self) -> Option<f64> {
        match *self {
            MulticlassFamily::CompSum { mu } => Some(mu),
            MulticlassFamily::Gce { alpha } => Some(1.0 + alpha),
            MulticlassFamily::Log2 => Some(1.0),
            _ => None,
        }
    }

    /// Value of `ℓ(h, target)`, with the gradient written to `grad` when given.
    /// Shapes and parameters are assumed validated.
    pub fn value_grad(&self, h: &[f64], target: usize, grad: Option<&mut [f64]>) -> f64 {
        let k = h.len();
        match *self {
            MulticlassFamily::CompSum { mu } => ce_like(h, target, grad, |u| {
                if mu == 1.0 {
                    (u, 1.0)
                } else {
                    let a = 1.0 - mu;
                    (expm1(a * u) / a, exp(a * u))
                }
            }),
            MulticlassFamily::Gce { alpha } => ce_like(h, target, grad, |u| (-expm1(-alpha * u) / alpha, exp(-alpha * u))),
            MulticlassFamily::Log2 => {
                let l2 = core::f64::consts::LN_2;
                ce_like(h, target, grad, |u| (u / l2, 1.0 / l2))
            }
            MulticlassFamily::SumLoss { inner } => {
                let mut v = 0.0;
                let mut g = grad;
                if let Some(g) = g.as_deref_mut() {
                    g.fill(0.0);
                }
                for j in 0..k {
                    if j == target {
                        continue;
                    }
                    let t = h[target] - h[j];
                    v += inner.value(t);
                    if let Some(g) = g.as_deref_mut() {
                        let d = inner.grad(t);
                        g[target] += d;
                        g[j] -= d;
                    }
                }
                v
            }
            MulticlassFamily::Constrained { inner } => {
                let mean = h.iter().sum::<f64>() / k as f64;
                let mut v = 0.0;
                let mut g = grad;
                if let Some(g) = g.as_deref_mut() {
                    g.fill(0.0);
                }
                for j in 0..k {
                    if j == target {
                        continue;
                    }
                    let t = -(h[j] - mean);
                    v += inner.value(t);
                    if let Some(g) = g.as_deref_mut() {
                        g[j] = -inner.grad(t);
                    }
                }
                if let Some(g) = g {
                    let gm = g.iter().sum::<f64>() / k as f64;
                    for x in g.iter_mut() {
                        *x -= gm;
                    }
                }
                v
            }
            MulticlassFamily::Margin { rho } => {
                let j = best_other(h, target);
                let m = h[target] - h[j];
                if let Some(g) = grad {
                    g.fill(0.0);
                    let d = rho_margin_grad(m, rho);
                    g[target] = d;
                    g[j] = -d;
                }
                rho_margin(m, rho)
            }
            MulticlassFamily::Binary { phi } => {
                let o = 1 - target;
                let m = h[target] - h[o];
                if let Some(g) = grad {
                    let d = phi.grad(m);
                    g[target] = d;
                    g[o] = -d;
                }
                phi.value(m)
            }
        }
    }

    pub fn value(&self, h: &[f64], target: usize) -> f64 {
        self.value_grad(h, target, None)
    }

    /// Distance from `h` to the nearest kink of `ℓ(·, target)`.
    pub fn kink_distance(&self, h: &[f64], target: usize) -> f64 {
        let k = h.len();
        match *self {
            MulticlassFamily::SumLoss { inner } => (0..k)
                .filter(|&j| j != target)
                .map(|j| inner.kink_distance(h[target] - h[j]))
                .fold(f64::INFINITY, f64::min),
            MulticlassFamily::Constrained { inner } => {
                let mean = h.iter().sum::<f64>() / k as f64;
                (0..k)
                    .filter(|&j| j != target)
                    .map(|j| inner.kink_distance(-(h[j] - mean)))
                    .fold(f64::INFINITY, f64::min)
            }
            MulticlassFamily::Margin { rho } => {
                let j = best_other(h, target);
                let m = h[target] - h[j];
                let mut second = f64::INFINITY;
                for i in 0..k {
                    if i != target && i != j {
                        second = second.min(h[j] - h[i]);
                    }
                }
                BinaryPhi::RhoMargin { rho }.kink_distance(m).min(second)
            }
            MulticlassFamily::Binary { phi } => phi.kink_distance(h[target] - h[1 - target]),
            _ => f64::INFINITY,
        }
    }
}

/// Index of the largest score other than `target`, lowest index on ties.
fn best_other(h: &[f64], target: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in h.iter().enumerate() {
        if i != target && (best == usize::MAX || v > h[best]) {
            best = i;
        }
    }
    best
}

/// Losses of the form `f(u)` with `u = log Σ e^{h(y') − h(y)}`; `f` returns
/// `(f(u), f'(u))` and `∂u/∂h_k = s_k − 1{k = y}`.
fn ce_like(h: &[f64], target: usize, grad: Option<&mut [f64]>, f: impl Fn(f64) -> (f64, f64)) -> f64 {
    match grad {
        Some(g) => {
            let lse = math::softmax_into(h, g);
            let u = (lse - h[target]).max(0.0);
            let (v, d) = f(u);
            g[target] -= 1.0;
            for x in g.iter_mut() {
                *x *= d;
            }
            v
        }
        None => {
            let u = (math::log_sum_exp(h) - h[target]).max(0.0);
            f(u).0
        }
    }
}

fn check_shape(family: &MulticlassFamily, h: &[f64], target: usize) -> Result<()> {
    family.validate(h.len())?;
    check_finite(h, "scores")?;
    if target >= h.len() {
        bail!(InvalidInput, "target {target} out of range for {} labels", h.len());
    }
    Ok(())
}

/// `ℓ_μ(h, target)`.
pub fn ell_mu_value(h: &[f64], target: usize, mu: f64) -> Result<f64> {
    let f = MulticlassFamily::CompSum { mu };
    check_shape(&f, h, target)?;
    Ok(f.value(h, target))
}

pub fn family_value(family: &MulticlassFamily, h: &[f64], target: usize) -> Result<f64> {
    check_shape(family, h, target)?;
    Ok(family.value(h, target))
}

pub fn family_grad(family: &MulticlassFamily, h: &[f64], target: usize) -> Result<alloc::vec::Vec<f64>> {
    check_shape(family, h, target)?;
    let mut g = alloc::vec![0.0; h.len()];
    family.value_grad(h, target, Some(&mut g));
    Ok(g)
}

pub fn phi_value(phi: BinaryPhi, u: f64) -> Result<f64> {
    phi.validate()?;
    if !u.is_finite() {
        bail!(InvalidInput, "u is not finite");
    }
    Ok(phi.value(u))
}

pub fn phi_grad(phi: BinaryPhi, u: f64) -> Result<f64> {
    phi.validate()?;
    if !u.is_finite() {
        bail!(InvalidInput, "u is not finite");
    }
    Ok(phi.grad(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ell_mu_examples() {
        let z = [0.0; 3];
        assert_relative_eq!(ell_mu_value(&z, 2, 1.0).unwrap(), 3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(ell_mu_value(&z, 0, 2.0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        let v = ell_mu_value(&[2.0, 0.0, 0.0], 0, 1.0).unwrap();
        assert_relative_eq!(v, (1.0 + 2.0 * (-2f64).exp()).ln(), epsilon = 1e-12);
        assert!((v - 0.239545).abs() < 1e-6);
        assert!(ell_mu_value(&z, 0, -0.1).is_err());
    }

    #[test]
    fn family_examples() {
        let f = MulticlassFamily::SumLoss { inner: SumInner::Exp };
        assert_eq!(family_value(&f, &[0.0, 0.0], 0).unwrap(), 1.0);
        let f = MulticlassFamily::Constrained { inner: ConstrainedInner::Hinge };
        assert_eq!(family_value(&f, &[0.0; 3], 0).unwrap(), 2.0);
        let f = MulticlassFamily::SumLoss { inner: SumInner::Rho { rho: 1.0 } };
        assert_eq!(family_value(&f, &[5.0, 0.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_value(BinaryPhi::Exp, 0.0).unwrap(), 1.0);
        assert_eq!(phi_value(BinaryPhi::Hinge, 2.0).unwrap(), 0.0);
        assert_relative_eq!(phi_value(BinaryPhi::Logistic, 0.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(phi_value(BinaryPhi::Logistic2, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(phi_value(BinaryPhi::Sigmoid { k: 0.0 }, 0.0).is_err());
    }

    #[test]
    fn gce_is_comp_sum_at_one_plus_alpha() {
        let h = [0.3, -1.2, 2.0, 0.1];
        for t in 0..4 {
            let a = MulticlassFamily::Gce { alpha: 0.7 }.value(&h, t);
            let b = MulticlassFamily::CompSum { mu: 1.7 }.value(&h, t);
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constrained_gradient_sums_to_zero() {
        let f = MulticlassFamily::Constrained { inner: ConstrainedInner::Exp };
        let g = family_grad(&f, &[0.3, -0.2, 1.5, 0.0], 1).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn binary_family_needs_two_labels() {
        let f = MulticlassFamily::Binary { phi: BinaryPhi::Exp };
        assert!(f.validate(3).is_err());
        assert!(f.validate(2).is_ok());
    }
}
