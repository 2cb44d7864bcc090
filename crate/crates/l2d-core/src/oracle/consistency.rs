use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::base::MulticlassFamily;
use crate::error::{bail, Result};
use crate::math;
use crate::oracle::{grid_minimize, refine, BoundInstance, BoundKind, Grid};
use crate::surrogate::weighted_family;
use crate::target::{abstention_decision, check_cost};

/// Bayes action and lattice-surrogate action at one input. Actions are
/// class labels `0..n`, then abstain (`n`) or experts `n..n + n_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPoint {
    pub x: usize,
    pub bayes: usize,
    /// Decision of the polished surrogate minimizer.
    pub surrogate: usize,
    /// Decision of the raw lattice minimizer.
    pub lattice: usize,
    /// Target conditional risk of every action.
    pub risks: Vec<f64>,
    /// Second-best minus best risk.
    pub risk_gap: f64,
    /// `surrogate` attains the minimal risk (ties are interchangeable).
    pub agree: bool,
    pub lattice_agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub kind: BoundKind,
    pub grid: Grid,
    pub points: Vec<RecoveryPoint>,
    pub all_agree: bool,
    /// Inputs where the raw lattice decision is already Bayes-optimal.
    pub lattice_agreements: usize,
}

/// Risks within this of the minimum count as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Gradient iterations spent polishing a lattice minimizer.
pub const POLISH_ITERS: usize = 3000;

/// Lattice minimizer of `Σ_k w_k ℓ(h, k)` over the free coordinates after
/// `fixed`, then polished by gradient descent. Returns the lattice point
/// and the polished point, both with `fixed` prepended.
fn minimize(family: &MulticlassFamily, weights: &[f64], fixed: &[f64], grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let k = fixed.len();
    let full = |h: &[f64]| {
        let mut v = fixed.to_vec();
        v.extend_from_slice(h);
        v
    };
    let f = |h: &[f64]| weighted_family(family, &full(h), weights, None);
    let lattice = grid_minimize(&f, weights.len() - k, grid);
    let fg = |h: &[f64], g: &mut [f64]| {
        let mut gf = vec![0.0; weights.len()];
        let v = weighted_family(family, &full(h), weights, Some(&mut gf));
        g.copy_from_slice(&gf[k..]);
        v
    };
    let (polished, _) = refine(&fg, &lattice.point, POLISH_ITERS);
    (full(&lattice.point), full(&polished))
}

/// Grid-minimizes the conditional surrogate risk at every input, polishes
/// the lattice minimizer by gradient descent, and compares its decision
/// with the Bayes rule. A lattice step cannot resolve score differences
/// below itself, so the raw lattice decision is reported separately. The
/// two-stage kind freezes the first-stage logistic minimizer.
pub fn bayes_recovery(kind: &BoundKind, inst: &BoundInstance, grid: &Grid) -> Result<RecoveryReport> {
    grid.validate()?;
    let n = inst.dist.n_classes();
    inst.validate(!matches!(kind, BoundKind::AbstainScore { .. }))?;
    let mut points = Vec::with_capacity(inst.dist.len());
    for x in 0..inst.dist.len() {
        let p = &inst.dist.cond_probs[x];
        let (risks, surrogate, lattice) = match *kind {
            BoundKind::AbstainScore { mu, c } => {
                check_cost(c)?;
                let mut w = p.clone();
                w.push(1.0 - c);
                let (lat, pol) = minimize(&MulticlassFamily::CompSum { mu }, &w, &[], grid);
                let mut r: Vec<f64> = p.iter().map(|py| 1.0 - py).collect();
                r.push(c);
                (r, abstention_decision(&pol), abstention_decision(&lat))
            }
            BoundKind::DeferScore { family } => {
                let ec = inst.expected_costs(x);
                let mut w = p.clone();
                w.extend(ec.iter().map(|c| 1.0 - c));
                let r: Vec<f64> = p.iter().map(|py| 1.0 - py).chain(ec.iter().copied()).collect();
                let (lat, pol) = minimize(&family, &w, &[], grid);
                (r, math::argmax(&pol), math::argmax(&lat))
            }
            BoundKind::DeferTwoStageScore { family } => {
                let ec = inst.expected_costs(x);
                let r: Vec<f64> = p.iter().map(|py| 1.0 - py).chain(ec.iter().copied()).collect();
                let (lat1, pol1) = minimize(&MulticlassFamily::LOG, p, &[], grid);
                let decide = |h: &[f64]| {
                    let k = math::argmax(h);
                    let mut w = vec![p[k]];
                    w.extend(ec.iter().map(|c| 1.0 - c));
                    let (lat, pol) = minimize(&family, &w, &[h[k]], grid);
                    let act = |s: &[f64]| match math::argmax(s) {
                        0 => k,
                        d => n + d - 1,
                    };
                    (act(&pol), act(&lat))
                };
                let (polished, _) = decide(&pol1);
                let (_, lattice) = decide(&lat1);
                (r, polished, lattice)
            }
            BoundKind::RegressionSingle { .. } => bail!(InvalidConfig, "Bayes recovery covers classification kinds only"),
        };
        // Abstention ties go to the abstain action, deferral ties to the
        // lowest index.
        let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
        let bayes = match kind {
            BoundKind::AbstainScore { .. } if risks[n] <= best + TIE_TOL => n,
            _ => risks.iter().position(|&r| r <= best + TIE_TOL).unwrap_or(0),
        };
        let second = risks
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != bayes)
            .map(|(_, &r)| r)
            .fold(f64::INFINITY, f64::min);
        points.push(RecoveryPoint {
            x,
            bayes,
            surrogate,
            lattice,
            risk_gap: second - risks[bayes],
            agree: risks[surrogate] <= best + TIE_TOL,
            lattice_agree: risks[lattice] <= best + TIE_TOL,
            risks,
        });
    }
    let all_agree = points.iter().all(|p| p.agree);
    let lattice_agreements = points.iter().filter(|p| p.lattice_agree).count();
    Ok(RecoveryReport { kind: *kind, grid: *grid, points, all_agree, lattice_agreements })
}

/// Bayes-consistent classification kinds covered by [`bayes_recovery`].
pub fn recovery_kinds() -> Vec<BoundKind> {
    let mut v = Vec::new();
    for mu in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        v.push(BoundKind::AbstainScore { mu, c: 0.3 });
    }
    for family in [MulticlassFamily::LOG, MulticlassFamily::EXP, MulticlassFamily::GCE, MulticlassFamily::MAE] {
        v.push(BoundKind::DeferScore { family });
        v.push(BoundKind::DeferTwoStageScore { family });
    }
    v
}
