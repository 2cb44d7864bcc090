//! Composed surrogate losses for abstention, multi-expert deferral and
//! regression deferral, with analytic gradients.
//!
//! Each operation returns its value and writes the gradient with respect to
//! its trainable arguments into an optional caller buffer. [`evaluate`]
//! exposes all of them behind one flat-parameter interface used by the
//! gradient checker and the trainers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::base::{BinaryPhi, ConstrainedInner, MulticlassFamily};
use crate::error::{bail, check_finite, Result};
use crate::math;

/// `Ψ` applied to the abstention cost in the single-stage
/// predictor-rejector surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "psi", rename_all = "snake_case", deny_unknown_fields)]
pub enum Psi {
    Identity,
    /// `Ψ(t) = n·t`, with `n` the class count.
    ClassCount,
    Scaled { k: f64 },
}

impl Psi {
    pub fn value(self, c: f64, n: usize) -> f64 {
        match self {
            Psi::Identity => c,
            Psi::ClassCount => n as f64 * c,
            Psi::Scaled { k } => k * c,
        }
    }
}

fn default_phi() -> BinaryPhi {
    BinaryPhi::Exp
}
fn one() -> f64 {
    1.0
}
fn default_psi() -> Psi {
    Psi::Identity
}

/// Family tag plus parameters of a composed surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurrogateSpec {
    AbstainLMu {
        mu: f64,
    },
    AbstainTwoStage {
        phi: BinaryPhi,
    },
    PrSingle {
        ell: MulticlassFamily,
        #[serde(default = "default_psi")]
        psi: Psi,
        #[serde(default = "default_phi")]
        phi: BinaryPhi,
        #[serde(default = "one")]
        alpha_s: f64,
        #[serde(default = "one")]
        beta_s: f64,
    },
    PrTwoStage {
        phi: BinaryPhi,
    },
    DeferSingle {
        family: MulticlassFamily,
    },
    DeferTwoStageScore {
        family: MulticlassFamily,
    },
    DeferTwoStagePr {
        family: MulticlassFamily,
    },
    RegSingle {
        family: MulticlassFamily,
    },
    RegTwoStage {
        family: MulticlassFamily,
    },
    RegSingleExpert {
        phi: BinaryPhi,
    },
}

/// Whether a configuration is covered by a consistency guarantee.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Guarantee {
    Endorsed,
    NoGuarantee { reason: String },
}

impl SurrogateSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            SurrogateSpec::AbstainLMu { .. } => "abstain_L_mu",
            SurrogateSpec::AbstainTwoStage { .. } => "abstain_two_stage",
            SurrogateSpec::PrSingle { .. } => "pr_single",
            SurrogateSpec::PrTwoStage { .. } => "pr_two_stage",
            SurrogateSpec::DeferSingle { .. } => "defer_single",
            SurrogateSpec::DeferTwoStageScore { .. } => "defer_two_stage_score",
            SurrogateSpec::DeferTwoStagePr { .. } => "defer_two_stage_pr",
            SurrogateSpec::RegSingle { .. } => "reg_single",
            SurrogateSpec::RegTwoStage { .. } => "reg_two_stage",
            SurrogateSpec::RegSingleExpert { .. } => "reg_single_expert",
        }
    }

    pub fn is_two_stage(&self) -> bool {
        matches!(
            self,
            SurrogateSpec::AbstainTwoStage { .. }
                | SurrogateSpec::PrTwoStage { .. }
                | SurrogateSpec::DeferTwoStageScore { .. }
                | SurrogateSpec::DeferTwoStagePr { .. }
                | SurrogateSpec::RegTwoStage { .. }
        )
    }

    /// Single-stage predictor-rejector losses carry a guarantee only for
    /// `α_s = β_s`, `Φ = exp` and the three endorsed `(ℓ, Ψ)` pairs.
    pub fn guarantee(&self) -> Guarantee {
        if let SurrogateSpec::PrSingle { ell, psi, phi, alpha_s, beta_s } = *self {
            let pair_ok = matches!(
                (ell, psi),
                (MulticlassFamily::CompSum { mu }, Psi::Identity) if mu == 2.0
            ) || matches!((ell, psi), (MulticlassFamily::Margin { .. }, Psi::Identity))
                || matches!(
                    (ell, psi),
                    (MulticlassFamily::Constrained { inner: ConstrainedInner::RhoHinge { .. } }, Psi::ClassCount)
                );
            if alpha_s != beta_s {
                return Guarantee::NoGuarantee { reason: "alpha_s != beta_s".into() };
            }
            if phi != BinaryPhi::Exp {
                return Guarantee::NoGuarantee { reason: "phi is not exp".into() };
            }
            if !pair_ok {
                return Guarantee::NoGuarantee { reason: "(ell, psi) is not an endorsed pair".into() };
            }
        }
        Guarantee::Endorsed
    }

    /// Number of trainable coordinates in the flat parameter vector.
    pub fn point_len(&self, n: usize, n_e: usize) -> usize {
        match self {
            SurrogateSpec::AbstainLMu { .. } => n + 1,
            SurrogateSpec::AbstainTwoStage { .. } | SurrogateSpec::PrTwoStage { .. } => 1,
            SurrogateSpec::PrSingle { .. } => n + 1,
            SurrogateSpec::DeferSingle { .. } => n + n_e,
            SurrogateSpec::DeferTwoStageScore { .. } | SurrogateSpec::DeferTwoStagePr { .. } => n_e,
            SurrogateSpec::RegSingle { .. } => n_e + 2,
            SurrogateSpec::RegTwoStage { .. } => n_e + 1,
            SurrogateSpec::RegSingleExpert { .. } => 2,
        }
    }

    pub fn validate(&self, n: usize, n_e: usize) -> Result<()> {
        match *self {
            SurrogateSpec::AbstainLMu { mu } => MulticlassFamily::CompSum { mu }.validate(n + 1),
            SurrogateSpec::AbstainTwoStage { phi }
            | SurrogateSpec::PrTwoStage { phi }
            | SurrogateSpec::RegSingleExpert { phi } => phi.validate(),
            SurrogateSpec::PrSingle { ell, phi, alpha_s, beta_s, psi } => {
                if !(alpha_s > 0.0 && beta_s > 0.0) {
                    bail!(InvalidParameter, "alpha_s and beta_s must be > 0");
                }
                if let Psi::Scaled { k } = psi {
                    if !(k >= 0.0 && k.is_finite()) {
                        bail!(InvalidParameter, "psi scale must be >= 0");
                    }
                }
                phi.validate()?;
                ell.validate(n)
            }
            SurrogateSpec::DeferSingle { family } => family.validate(n + n_e),
            SurrogateSpec::DeferTwoStageScore { family }
            | SurrogateSpec::DeferTwoStagePr { family }
            | SurrogateSpec::RegSingle { family }
            | SurrogateSpec::RegTwoStage { family } => family.validate(n_e + 1),
        }
    }
}

/// Non-trainable data of one sample. Which fields matter depends on the tag:
///
/// | tag | uses |
/// |---|---|
/// | `abstain_L_mu` | `y`, `c` |
/// | `abstain_two_stage` | `y`, `c`, `frozen` = first-stage class scores |
/// | `pr_single` | `y`, `c` |
/// | `pr_two_stage` | `correct`, `c` |
/// | `defer_single` | `y`, `costs` |
/// | `defer_two_stage_*` | `correct`, `costs` (`frozen[0]` = max predictor score for `_score`) |
/// | `reg_single` | `costs` |
/// | `reg_two_stage` | `costs`, `base_loss` |
/// | `reg_single_expert` | `costs[0]` |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub y: usize,
    pub c: f64,
    pub costs: &'a [f64],
    pub frozen: &'a [f64],
    pub correct: bool,
    pub base_loss: f64,
}

impl Default for Sample<'_> {
    fn default() -> Self {
        Self { y: 0, c: 0.5, costs: &[], frozen: &[], correct: false, base_loss: 0.0 }
    }
}

/// `Σ_k w_k ℓ(h, k)` over the non-zero weights.
pub fn weighted_family(family: &MulticlassFamily, h: &[f64], weights: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let mut v = 0.0;
    match grad {
        Some(g) => {
            g.fill(0.0);
            let mut tmp = vec![0.0; h.len()];
            for (k, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                v += w * family.value_grad(h, k, Some(&mut tmp));
                for (gi, ti) in g.iter_mut().zip(&tmp) {
                    *gi += w * ti;
                }
            }
        }
        None => {
            for (k, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    v += w * family.value(h, k);
                }
            }
        }
    }
    v
}

fn check_label(y: usize, n: usize) -> Result<()> {
    if y >= n {
        bail!(InvalidInput, "label {y} out of range for {n} classes");
    }
    Ok(())
}

fn check_grad_len(grad: &Option<&mut [f64]>, len: usize) -> Result<()> {
    if let Some(g) = grad {
        if g.len() != len {
            bail!(InvalidInput, "gradient buffer has length {}, want {len}", g.len());
        }
    }
    Ok(())
}

/// `ℓ_μ(h, y) + (1 − c)·ℓ_μ(h, n)` over `n + 1` scores.
pub fn abstain_l_mu(scores: &[f64], y: usize, c: f64, mu: f64, grad: Option<&mut [f64]>) -> Result<f64> {
    crate::target::check_cost(c)?;
    let family = MulticlassFamily::CompSum { mu };
    family.validate(scores.len())?;
    check_finite(scores, "scores")?;
    let n = scores.len() - 1;
    check_label(y, n)?;
    check_grad_len(&grad, scores.len())?;
    let mut w = vec![0.0; n + 1];
    w[y] = 1.0;
    w[n] = 1.0 - c;
    Ok(weighted_family(&family, scores, &w, grad))
}

/// Two-stage abstention loss on a scalar abstention score `h_extra` with the
/// class scores frozen: `1{ĥ≠y}Φ(h_extra − m) + c·Φ(m − h_extra)`,
/// `m = max h_Y`. Returns the value and the derivative in `h_extra`.
pub fn abstain_two_stage(h_y: &[f64], h_extra: f64, y: usize, c: f64, phi: BinaryPhi) -> Result<(f64, f64)> {
    phi.validate()?;
    check_finite(h_y, "h_Y")?;
    check_label(y, h_y.len())?;
    if !(c >= 0.0 && c.is_finite()) || !h_extra.is_finite() {
        bail!(InvalidInput, "cost must be finite and >= 0 and h_extra finite");
    }
    let best = math::argmax(h_y);
    let m = h_y[best];
    let wrong = if best != y { 1.0 } else { 0.0 };
    let v = wrong * phi.value(h_extra - m) + c * phi.value(m - h_extra);
    let d = wrong * phi.grad(h_extra - m) - c * phi.grad(m - h_extra);
    Ok((v, d))
}

/// `ℓ(h, y)·Φ(−α_s r) + Ψ(c)·Φ(β_s r)`. Returns the value and `∂/∂r`;
/// `grad_h` receives `∂/∂h`.
#[allow(clippy::too_many_arguments)]
pub fn pr_single(
    h: &[f64],
    r: f64,
    y: usize,
    c: f64,
    ell: &MulticlassFamily,
    psi: Psi,
    phi: BinaryPhi,
    alpha_s: f64,
    beta_s: f64,
    grad_h: Option<&mut [f64]>,
) -> Result<(f64, f64)> {
    SurrogateSpec::PrSingle { ell: *ell, psi, phi, alpha_s, beta_s }.validate(h.len(), 1)?;
    check_finite(h, "h")?;
    check_label(y, h.len())?;
    check_grad_len(&grad_h, h.len())?;
    if !(c >= 0.0 && c.is_finite()) || !r.is_finite() {
        bail!(InvalidInput, "cost must be finite and >= 0 and r finite");
    }
    let ps = psi.value(c, h.len());
    let a = phi.value(-alpha_s * r);
    let l = match grad_h {
        Some(g) => {
            let l = ell.value_grad(h, y, Some(g));
            for x in g.iter_mut() {
                *x *= a;
            }
            l
        }
        None => ell.value(h, y),
    };
    let v = l * a + ps * phi.value(beta_s * r);
    let dr = -alpha_s * l * phi.grad(-alpha_s * r) + beta_s * ps * phi.grad(beta_s * r);
    Ok((v, dr))
}

/// `1{ĥ≠y}·Φ(−r) + c·Φ(r)`; returns the value and `∂/∂r`.
pub fn pr_two_stage(misclassified: bool, r: f64, c: f64, phi: BinaryPhi) -> Result<(f64, f64)> {
    phi.validate()?;
    if !(c >= 0.0 && c.is_finite()) || !r.is_finite() {
        bail!(InvalidInput, "cost must be finite and >= 0 and r finite");
    }
    let m = if misclassified { 1.0 } else { 0.0 };
    Ok((m * phi.value(-r) + c * phi.value(r), -m * phi.grad(-r) + c * phi.grad(r)))
}

/// `ℓ(h, y) + Σ_j (1 − c_j)·ℓ(h, n + j)` over `n + n_e` scores; `n_e = 0`
/// is plain classification.
pub fn defer_single(
    scores: &[f64],
    y: usize,
    costs: &[f64],
    family: &MulticlassFamily,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let n_e = costs.len();
    if scores.len() < n_e + 2 {
        bail!(InvalidInput, "need n >= 2 class scores plus {n_e} expert scores");
    }
    family.validate(scores.len())?;
    check_finite(scores, "scores")?;
    check_finite(costs, "costs")?;
    let n = scores.len() - n_e;
    check_label(y, n)?;
    check_grad_len(&grad, scores.len())?;
    let mut w = vec![0.0; scores.len()];
    w[y] = 1.0;
    for (j, &cj) in costs.iter().enumerate() {
        w[n + j] = 1.0 - cj;
    }
    Ok(weighted_family(family, scores, &w, grad))
}

/// Score-based two-stage deferral loss. Label `0` carries the frozen score
/// `hp_max`; labels `1..=n_e` carry `hd`.
pub fn defer_two_stage_score(
    hp_max: f64,
    hd: &[f64],
    correct: bool,
    cbar: &[f64],
    family: &MulticlassFamily,
    grad_hd: Option<&mut [f64]>,
) -> Result<f64> {
    if hd.len() != cbar.len() || hd.is_empty() {
        bail!(InvalidInput, "hd and cost complements need equal non-zero lengths");
    }
    family.validate(hd.len() + 1)?;
    check_finite(hd, "hd")?;
    check_finite(cbar, "cost complements")?;
    if !hp_max.is_finite() {
        bail!(InvalidInput, "hp_max is not finite");
    }
    check_grad_len(&grad_hd, hd.len())?;
    let mut h = Vec::with_capacity(hd.len() + 1);
    h.push(hp_max);
    h.extend_from_slice(hd);
    let mut w = Vec::with_capacity(hd.len() + 1);
    w.push(if correct { 1.0 } else { 0.0 });
    w.extend_from_slice(cbar);
    Ok(match grad_hd {
        Some(g) => {
            let mut full = vec![0.0; h.len()];
            let v = weighted_family(family, &h, &w, Some(&mut full));
            g.copy_from_slice(&full[1..]);
            v
        }
        None => weighted_family(family, &h, &w, None),
    })
}

/// Predictor-rejector two-stage deferral loss on `r̄ = (0, −r_1, ..., −r_{n_e})`.
pub fn defer_two_stage_pr(
    r: &[f64],
    correct: bool,
    cbar: &[f64],
    family: &MulticlassFamily,
    grad_r: Option<&mut [f64]>,
) -> Result<f64> {
    if r.len() != cbar.len() || r.is_empty() {
        bail!(InvalidInput, "r and cost complements need equal non-zero lengths");
    }
    family.validate(r.len() + 1)?;
    check_finite(r, "r")?;
    check_finite(cbar, "cost complements")?;
    check_grad_len(&grad_r, r.len())?;
    let mut rb = Vec::with_capacity(r.len() + 1);
    rb.push(0.0);
    rb.extend(r.iter().map(|v| -v));
    let mut w = Vec::with_capacity(r.len() + 1);
    w.push(if correct { 1.0 } else { 0.0 });
    w.extend_from_slice(cbar);
    Ok(match grad_r {
        Some(g) => {
            let mut full = vec![0.0; rb.len()];
            let v = weighted_family(family, &rb, &w, Some(&mut full));
            for (gi, fi) in g.iter_mut().zip(&full[1..]) {
                *gi = -fi;
            }
            v
        }
        None => weighted_family(family, &rb, &w, None),
    })
}

fn reg_weights(l_val: f64, costs: &[f64]) -> Vec<f64> {
    let total: f64 = costs.iter().sum();
    let mut w = Vec::with_capacity(costs.len() + 1);
    w.push(total);
    w.extend(costs.iter().map(|&cj| l_val + total - cj));
    w
}

fn check_reg(l_val: f64, r: &[f64], costs: &[f64], family: &MulticlassFamily) -> Result<()> {
    if costs.is_empty() || r.len() != costs.len() + 1 {
        bail!(InvalidInput, "need n_e >= 1 costs and n_e + 1 rejector scores");
    }
    family.validate(r.len())?;
    check_finite(r, "r")?;
    check_finite(costs, "costs")?;
    if !(l_val >= 0.0 && l_val.is_finite()) {
        bail!(InvalidInput, "base loss must be finite and >= 0");
    }
    Ok(())
}

/// Single-stage regression deferral surrogate
/// `[Σc]ℓ(r,0) + Σ_j [L + Σ_{j'≠j} c_{j'}]ℓ(r,j) − (n_e − 1)L`.
/// Returns the value and `∂/∂L`.
pub fn reg_single(
    l_val: f64,
    r: &[f64],
    costs: &[f64],
    family: &MulticlassFamily,
    grad_r: Option<&mut [f64]>,
) -> Result<(f64, f64)> {
    check_reg(l_val, r, costs, family)?;
    check_grad_len(&grad_r, r.len())?;
    let w = reg_weights(l_val, costs);
    let v = weighted_family(family, r, &w, grad_r);
    let ne1 = costs.len() as f64 - 1.0;
    let dl = (1..r.len()).map(|j| family.value(r, j)).sum::<f64>() - ne1;
    Ok((v - ne1 * l_val, dl))
}

/// Two-stage regression deferral surrogate (base loss frozen).
pub fn reg_two_stage(
    l_val: f64,
    r: &[f64],
    costs: &[f64],
    family: &MulticlassFamily,
    grad_r: Option<&mut [f64]>,
) -> Result<f64> {
    check_reg(l_val, r, costs, family)?;
    check_grad_len(&grad_r, r.len())?;
    Ok(weighted_family(family, r, &reg_weights(l_val, costs), grad_r))
}

/// Single-expert regression surrogate `c·Φ(r) + L·Φ(−r)`.
/// Returns `(value, ∂/∂r, ∂/∂L)`.
pub fn reg_single_expert(l_val: f64, r: f64, c_val: f64, phi: BinaryPhi) -> Result<(f64, f64, f64)> {
    phi.validate()?;
    if !(l_val.is_finite() && r.is_finite() && c_val.is_finite()) {
        bail!(InvalidInput, "non-finite argument");
    }
    let v = c_val * phi.value(r) + l_val * phi.value(-r);
    Ok((v, c_val * phi.grad(r) - l_val * phi.grad(-r), phi.value(-r)))
}

/// Evaluates `spec` on the flat trainable vector `point` (layout given by
/// [`SurrogateSpec::point_len`]): scores first, then scalar extras
/// (`r` for `pr_single`, `L` for `reg_single` and `reg_single_expert`).
pub fn evaluate(
    spec: &SurrogateSpec,
    n: usize,
    sample: &Sample<'_>,
    point: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let n_e = sample.costs.len();
    if point.len() != spec.point_len(n, n_e) {
        bail!(InvalidInput, "{} point has length {}, want {}", spec.tag(), point.len(), spec.point_len(n, n_e));
    }
    check_grad_len(&grad, point.len())?;
    let cbar = || sample.costs.iter().map(|c| 1.0 - c).collect::<Vec<_>>();
    match *spec {
        SurrogateSpec::AbstainLMu { mu } => abstain_l_mu(point, sample.y, sample.c, mu, grad),
        SurrogateSpec::AbstainTwoStage { phi } => {
            let (v, d) = abstain_two_stage(sample.frozen, point[0], sample.y, sample.c, phi)?;
            if let Some(g) = grad {
                g[0] = d;
            }
            Ok(v)
        }
        SurrogateSpec::PrSingle { ell, psi, phi, alpha_s, beta_s } => match grad {
            Some(g) => {
                let (gh, gr) = g.split_at_mut(n);
                let (v, dr) = pr_single(&point[..n], point[n], sample.y, sample.c, &ell, psi, phi, alpha_s, beta_s, Some(gh))?;
                gr[0] = dr;
                Ok(v)
            }
            None => Ok(pr_single(&point[..n], point[n], sample.y, sample.c, &ell, psi, phi, alpha_s, beta_s, None)?.0),
        },
        SurrogateSpec::PrTwoStage { phi } => {
            let (v, d) = pr_two_stage(!sample.correct, point[0], sample.c, phi)?;
            if let Some(g) = grad {
                g[0] = d;
            }
            Ok(v)
        }
        SurrogateSpec::DeferSingle { family } => defer_single(point, sample.y, sample.costs, &family, grad),
        SurrogateSpec::DeferTwoStageScore { family } => {
            let hp = match sample.frozen.first() {
                Some(&v) => v,
                None => bail!(InvalidInput, "defer_two_stage_score needs frozen[0] = max predictor score"),
            };
            defer_two_stage_score(hp, point, sample.correct, &cbar(), &family, grad)
        }
        SurrogateSpec::DeferTwoStagePr { family } => defer_two_stage_pr(point, sample.correct, &cbar(), &family, grad),
        SurrogateSpec::RegSingle { family } => {
            let l = point[n_e + 1];
            match grad {
                Some(g) => {
                    let (gr, gl) = g.split_at_mut(n_e + 1);
                    let (v, dl) = reg_single(l, &point[..n_e + 1], sample.costs, &family, Some(gr))?;
                    gl[0] = dl;
                    Ok(v)
                }
                None => Ok(reg_single(l, &point[..n_e + 1], sample.costs, &family, None)?.0),
            }
        }
        SurrogateSpec::RegTwoStage { family } => reg_two_stage(sample.base_loss, point, sample.costs, &family, grad),
        SurrogateSpec::RegSingleExpert { phi } => {
            let c = match sample.costs.first() {
                Some(&c) => c,
                None => bail!(InvalidInput, "reg_single_expert needs one cost"),
            };
            let (v, dr, dl) = reg_single_expert(point[1], point[0], c, phi)?;
            if let Some(g) = grad {
                g[0] = dr;
                g[1] = dl;
            }
            Ok(v)
        }
    }
}

/// Distance from `point` to the nearest kink of the surrogate; infinite when
/// every constituent is smooth.
pub fn kink_distance(spec: &SurrogateSpec, n: usize, sample: &Sample<'_>, point: &[f64]) -> f64 {
    let n_e = sample.costs.len();
    let fam_all = |f: &MulticlassFamily, h: &[f64]| (0..h.len()).map(|k| f.kink_distance(h, k)).fold(f64::INFINITY, f64::min);
    match *spec {
        SurrogateSpec::AbstainLMu { .. } => f64::INFINITY,
        SurrogateSpec::AbstainTwoStage { phi } => {
            let m = math::max(sample.frozen);
            phi.kink_distance(point[0] - m).min(phi.kink_distance(m - point[0]))
        }
        SurrogateSpec::PrSingle { ell, phi, alpha_s, beta_s, .. } => ell
            .kink_distance(&point[..n], sample.y)
            .min(phi.kink_distance(-alpha_s * point[n]) / alpha_s)
            .min(phi.kink_distance(beta_s * point[n]) / beta_s),
        SurrogateSpec::PrTwoStage { phi } | SurrogateSpec::RegSingleExpert { phi } => {
            phi.kink_distance(point[0]).min(phi.kink_distance(-point[0]))
        }
        SurrogateSpec::DeferSingle { family } => fam_all(&family, point),
        SurrogateSpec::DeferTwoStageScore { family } => {
            let mut h = vec![sample.frozen.first().copied().unwrap_or(0.0)];
            h.extend_from_slice(point);
            fam_all(&family, &h)
        }
        SurrogateSpec::DeferTwoStagePr { family } => {
            let mut h = vec![0.0];
            h.extend(point.iter().map(|v| -v));
            fam_all(&family, &h)
        }
        SurrogateSpec::RegSingle { family } | SurrogateSpec::RegTwoStage { family } => fam_all(&family, &point[..n_e + 1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn abstain_l_mu_examples() {
        let z = [0.0; 3];
        assert_relative_eq!(abstain_l_mu(&z, 0, 0.5, 1.0, None).unwrap(), 1.5 * LN3, epsilon = 1e-12);
        assert!((abstain_l_mu(&z, 0, 0.5, 1.0, None).unwrap() - 1.647918).abs() < 1e-6);
        assert_relative_eq!(abstain_l_mu(&z, 1, 0.5, 2.0, None).unwrap(), 1.0, epsilon = 1e-12);
        assert!(abstain_l_mu(&z, 1, 1.0, 2.0, None).is_err());
    }

    #[test]
    fn abstain_two_stage_examples() {
        let e = core::f64::consts::E;
        let (v, _) = abstain_two_stage(&[1.0, 0.0], 1.0, 1, 0.3, BinaryPhi::Exp).unwrap();
        assert_relative_eq!(v, 1.3, epsilon = 1e-12);
        let (v, _) = abstain_two_stage(&[1.0, 0.0], 0.0, 0, 0.3, BinaryPhi::Exp).unwrap();
        assert_relative_eq!(v, 0.3 / e, epsilon = 1e-12);
        let (v, _) = abstain_two_stage(&[1.0, 0.0], 0.0, 1, 0.3, BinaryPhi::Exp).unwrap();
        assert_relative_eq!(v, e + 0.3 / e, epsilon = 1e-12);
        assert!((v - 2.828646).abs() < 1e-6);
    }

    #[test]
    fn pr_single_examples() {
        let (v, _) = pr_single(&[0.0, 0.0], 0.0, 0, 0.5, &MulticlassFamily::MAE, Psi::Identity, BinaryPhi::Exp, 1.0, 1.0, None)
            .unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        // ℓ = 1 via the ρ-margin loss at zero margin.
        let ell = MulticlassFamily::Margin { rho: 1.0 };
        let (v, _) = pr_single(&[0.0, 0.0], -5.0, 0, 0.0, &ell, Psi::Identity, BinaryPhi::Exp, 1.0, 1.0, None).unwrap();
        assert_relative_eq!(v, (-5f64).exp(), epsilon = 1e-15);
        let (hi, _) = pr_single(&[0.0, 0.0], -3.0, 0, 0.5, &ell, Psi::Identity, BinaryPhi::Exp, 1.0, 1.0, None).unwrap();
        assert_relative_eq!(hi, (-3f64).exp() + 0.5 * 3f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn pr_two_stage_examples() {
        assert_relative_eq!(pr_two_stage(true, 0.0, 0.2, BinaryPhi::Exp).unwrap().0, 1.2, epsilon = 1e-12);
        assert_relative_eq!(pr_two_stage(false, 2.0, 0.2, BinaryPhi::Exp).unwrap().0, 0.2 * (-2f64).exp(), epsilon = 1e-15);
        // Misclassified and cheap to abstain: the minimizer is r = ½ ln c < 0.
        let r_star = 0.5 * 0.25f64.ln();
        assert!((r_star + 0.693147).abs() < 1e-6);
        let (_, d) = pr_two_stage(true, r_star, 0.25, BinaryPhi::Exp).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn defer_single_examples() {
        let h = [0.4, -0.3, 1.2];
        let a = defer_single(&h, 0, &[1.0], &MulticlassFamily::LOG, None).unwrap();
        assert_relative_eq!(a, MulticlassFamily::LOG.value(&h, 0), epsilon = 1e-15);
        let v = defer_single(&[0.0; 3], 1, &[0.0], &MulticlassFamily::LOG, None).unwrap();
        assert_relative_eq!(v, 2.0 * LN3, epsilon = 1e-12);
        for mu in [0.0, 0.5, 1.0, 1.7, 2.0, 3.0] {
            let f = MulticlassFamily::CompSum { mu };
            let a = defer_single(&h, 1, &[0.3], &f, None).unwrap();
            let b = abstain_l_mu(&h, 1, 0.3, mu, None).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn defer_two_stage_score_examples() {
        let f = MulticlassFamily::LOG;
        assert_relative_eq!(defer_two_stage_score(0.7, &[0.7, 0.7], true, &[0.0, 0.0], &f, None).unwrap(), LN3, epsilon = 1e-12);
        assert_relative_eq!(defer_two_stage_score(0.7, &[0.7, 0.7], false, &[1.0, 0.0], &f, None).unwrap(), LN3, epsilon = 1e-12);
        assert_eq!(defer_two_stage_score(0.7, &[0.1, 2.0], false, &[0.0, 0.0], &f, None).unwrap(), 0.0);
    }

    #[test]
    fn defer_two_stage_pr_examples() {
        let f = MulticlassFamily::LOG;
        assert_relative_eq!(defer_two_stage_pr(&[0.0, 0.0], true, &[0.0, 0.0], &f, None).unwrap(), LN3, epsilon = 1e-12);
        let v = defer_two_stage_pr(&[40.0, 40.0], true, &[0.0, 0.0], &f, None).unwrap();
        assert!(v < 1e-15);
        assert_relative_eq!(defer_two_stage_pr(&[0.0], false, &[1.0], &MulticlassFamily::EXP, None).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn regression_examples() {
        let f = MulticlassFamily::LOG;
        let (v, _) = reg_single(0.5, &[0.0; 3], &[0.2, 0.9], &f, None).unwrap();
        assert_relative_eq!(v, 3.2 * LN3 - 0.5, epsilon = 1e-12);
        assert!((v - 3.015559).abs() < 1e-6);
        let w = reg_two_stage(0.5, &[0.0; 3], &[0.2, 0.9], &f, None).unwrap();
        assert_relative_eq!(w, 3.2 * LN3, epsilon = 1e-12);
        assert!((w - 3.515559).abs() < 1e-6);
        let (v, _) = reg_single(0.0, &[0.0, 0.0], &[0.0], &f, None).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn reg_single_expert_examples() {
        assert_relative_eq!(reg_single_expert(4.0, 0.0, 1.0, BinaryPhi::Exp).unwrap().0, 5.0, epsilon = 1e-12);
        let (v, dr, _) = reg_single_expert(4.0, -(2f64.ln()), 1.0, BinaryPhi::Exp).unwrap();
        assert_relative_eq!(v, 4.0, epsilon = 1e-12);
        assert!(dr.abs() < 1e-12);
        assert_eq!(reg_single_expert(0.0, 0.3, 0.0, BinaryPhi::Exp).unwrap().0, 0.0);
    }

    #[test]
    fn pr_single_guarantee_flags() {
        let ok = SurrogateSpec::PrSingle { ell: MulticlassFamily::MAE, psi: Psi::Identity, phi: BinaryPhi::Exp, alpha_s: 1.0, beta_s: 1.0 };
        assert_eq!(ok.guarantee(), Guarantee::Endorsed);
        let bad = SurrogateSpec::PrSingle { ell: MulticlassFamily::LOG, psi: Psi::Identity, phi: BinaryPhi::Exp, alpha_s: 1.0, beta_s: 1.0 };
        assert!(matches!(bad.guarantee(), Guarantee::NoGuarantee { .. }));
        let bad = SurrogateSpec::PrSingle { ell: MulticlassFamily::MAE, psi: Psi::Identity, phi: BinaryPhi::Exp, alpha_s: 1.0, beta_s: 2.0 };
        assert!(matches!(bad.guarantee(), Guarantee::NoGuarantee { .. }));
    }
}
