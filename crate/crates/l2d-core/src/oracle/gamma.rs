use alloc::boxed::Box;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::math::{powf, sqrt};

/// A Γ function of an H-consistency bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaForm {
    /// Abstention bound for `L_μ` with `n` classes and cost `c`.
    CompSumMu { mu: f64, c: f64, n: usize },
    /// Comp-sum `ℓ_μ` against the 0-1 loss over `labels` labels.
    CompSumBase { mu: f64, labels: usize },
    /// `scale^{1−α}·β·t^α`.
    Generic { beta: f64, alpha: f64, scale: f64 },
    /// `max{t, scale^{1−α}·β·t^α}`.
    GenericMax { beta: f64, alpha: f64, scale: f64 },
    Linear { slope: f64 },
    /// `outer·Γ(t / inner)`.
    Rescaled { outer: f64, inner: f64, base: Box<GammaForm> },
}

impl GammaForm {
    pub fn validate(&self) -> Result<()> {
        match self {
            GammaForm::CompSumMu { mu, c, n } => {
                if !(*mu >= 0.0) || !(*c > 0.0 && *c < 1.0) || *n < 1 {
                    bail!(InvalidParameter, "comp_sum_mu needs mu >= 0, c in (0,1), n >= 1");
                }
            }
            GammaForm::CompSumBase { mu, labels } => {
                if !(*mu >= 0.0) || *labels < 2 {
                    bail!(InvalidParameter, "comp_sum_base needs mu >= 0 and labels >= 2");
                }
            }
            GammaForm::Generic { beta, alpha, scale } | GammaForm::GenericMax { beta, alpha, scale } => {
                if !(*beta >= 0.0 && *alpha > 0.0 && *alpha <= 1.0 && *scale > 0.0) {
                    bail!(InvalidParameter, "generic needs beta >= 0, alpha in (0,1], scale > 0");
                }
            }
            GammaForm::Linear { slope } => {
                if !(*slope >= 0.0) {
                    bail!(InvalidParameter, "slope must be >= 0");
                }
            }
            GammaForm::Rescaled { outer, inner, base } => {
                if !(*outer >= 0.0 && *inner > 0.0) {
                    bail!(InvalidParameter, "rescaled needs outer >= 0 and inner > 0");
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        match self {
            GammaForm::CompSumMu { mu, c, n } => {
                let k = (*n + 1) as f64;
                if *mu < 1.0 {
                    sqrt((2.0 - c) * powf(2.0, *mu) * (2.0 - mu) * t)
                } else if *mu < 2.0 {
                    sqrt(2.0 * (2.0 - c) * powf(k, mu - 1.0) * t)
                } else {
                    (mu - 1.0) * powf(k, mu - 1.0) * t
                }
            }
            GammaForm::CompSumBase { mu, labels } => {
                let k = *labels as f64;
                if *mu < 1.0 {
                    sqrt(powf(2.0, *mu) * (2.0 - mu) * t)
                } else if *mu < 2.0 {
                    sqrt(2.0 * powf(k, mu - 1.0) * t)
                } else {
                    (mu - 1.0) * powf(k, mu - 1.0) * t
                }
            }
            GammaForm::Generic { beta, alpha, scale } => powf(*scale, 1.0 - alpha) * beta * powf(t, *alpha),
            GammaForm::GenericMax { beta, alpha, scale } => t.max(powf(*scale, 1.0 - alpha) * beta * powf(t, *alpha)),
            GammaForm::Linear { slope } => slope * t,
            GammaForm::Rescaled { outer, inner, base } => outer * base.eval_unchecked(t / inner),
        }
    }
}

/// Evaluates `Γ(t)` for `t ≥ 0`.
pub fn gamma_eval(form: &GammaForm, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        bail!(InvalidInput, "gamma argument must be >= 0, got {t}");
    }
    form.validate()?;
    Ok(form.eval_unchecked(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        let g = GammaForm::CompSumMu { mu: 1.0, c: 0.5, n: 2 };
        assert!((gamma_eval(&g, 0.12).unwrap() - 0.6).abs() < 1e-12);
        let g = GammaForm::CompSumMu { mu: 2.0, c: 0.5, n: 3 };
        assert!((gamma_eval(&g, 0.1).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(gamma_eval(&g, 0.0).unwrap(), 0.0);
        assert!(gamma_eval(&g, -1e-3).is_err());
    }

    #[test]
    fn rescaled_abstention_form_matches_direct_form() {
        for mu in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let c = 0.3;
            let direct = GammaForm::CompSumMu { mu, c, n: 3 };
            let rescaled = GammaForm::Rescaled {
                outer: 2.0 - c,
                inner: 2.0 - c,
                base: Box::new(GammaForm::CompSumBase { mu, labels: 4 }),
            };
            for t in [0.0, 0.01, 0.3, 2.0] {
                let a = gamma_eval(&direct, t).unwrap();
                let b = gamma_eval(&rescaled, t).unwrap();
                assert!((a - b).abs() < 1e-12, "mu={mu} t={t}");
            }
        }
    }

    #[test]
    fn regression_form_examples() {
        let g = GammaForm::GenericMax { beta: 2f64.sqrt(), alpha: 0.5, scale: 4.0 };
        // max{t, 2·√2·√t}
        assert!((gamma_eval(&g, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((gamma_eval(&g, 100.0).unwrap() - 100.0).abs() < 1e-12);
    }
}
