use crate::base::MulticlassFamily;
use crate::error::{bail, Result};
use crate::math::{ln, powf};

/// Infimum over the closed simplex of `Σ_k w_k ℓ_μ(s, k)` for
/// non-negative weights.
///
/// For μ < 2 the minimizer is `s_k ∝ w_k^{1/(2−μ)}`; for μ ≥ 2 the objective
/// is concave in `s` and the infimum sits at the vertex of the largest
/// weight.
pub fn comp_sum_infimum(weights: &[f64], mu: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    if mu == 1.0 {
        return -weights.iter().filter(|&&w| w > 0.0).map(|&w| w * ln(w / total)).sum::<f64>();
    }
    if mu < 2.0 {
        let a = 1.0 / (2.0 - mu);
        let s: f64 = weights.iter().filter(|&&w| w > 0.0).map(|&w| powf(w, a)).sum();
        return (powf(s, 2.0 - mu) - total) / (1.0 - mu);
    }
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    (total - wmax) / (mu - 1.0)
}

/// Closed-form pointwise infimum of `Σ_k w_k ℓ(h, k)` for the comp-sum
/// style families; `None` for families without one.
pub fn family_infimum(family: &MulticlassFamily, weights: &[f64]) -> Option<f64> {
    match *family {
        MulticlassFamily::Log2 => Some(comp_sum_infimum(weights, 1.0) / core::f64::consts::LN_2),
        f => f.comp_sum_mu().map(|mu| comp_sum_infimum(weights, mu)),
    }
}

/// Pointwise infimum of the conditional `L_μ` risk under a deterministic
/// label distribution: the infimum of `ℓ_μ(s, y) + (1 − c) ℓ_μ(s, n + 1)`.
pub fn min_gap_closed_form(mu: f64, c: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        bail!(InvalidParameter, "mu must be >= 0, got {mu}");
    }
    if !(c > 0.0 && c < 1.0) {
        bail!(InvalidInput, "c must lie in (0, 1), got {c}");
    }
    Ok(if mu == 1.0 {
        -ln(1.0 / (2.0 - c)) - (1.0 - c) * ln((1.0 - c) / (2.0 - c))
    } else if mu == 2.0 {
        1.0 - c
    } else if mu < 2.0 {
        (powf(1.0 + powf(1.0 - c, 1.0 / (2.0 - mu)), 2.0 - mu) - (2.0 - c)) / (1.0 - mu)
    } else {
        (1.0 - c) / (mu - 1.0)
    })
}

/// Value of the interior stationary point `s_y ∝ 1, s_{n+1} ∝ (1−c)^{1/(2−μ)}`
/// for μ ∉ {1, 2}. It equals [`min_gap_closed_form`] for μ < 2; for μ > 2 the
/// objective is concave along that segment and this is its maximum.
pub fn min_gap_stationary_value(mu: f64, c: f64) -> f64 {
    (powf(1.0 + powf(1.0 - c, 1.0 / (2.0 - mu)), 2.0 - mu) - (2.0 - c)) / (1.0 - mu)
}
