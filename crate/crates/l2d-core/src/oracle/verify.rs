//! Numeric check of H-consistency bound inequalities on finite instances.
//!
//! The hypothesis class assigns a free score vector from the lattice box to
//! every input, so it is separable across inputs: best-in-class errors are
//! sums of per-input minima, and the minimizability gaps are computed
//! explicitly as the difference between the best hypothesis' risk and those
//! sums. Surrogate infima come in two versions: the lattice minimum (a proxy
//! for the complete class) and the exact infimum over all real scores. The
//! exact one gives the bound as stated; the lattice one is conservative.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::MulticlassFamily;
use crate::error::{bail, check_finite, Result};
use crate::math;
use crate::model::{DiscreteDistribution, RegressionLoss};
use crate::oracle::{
    bayes_abstention, bayes_deferral, family_infimum, gamma_eval, grid_minimize, refine, GammaForm,
    Grid, GridMin,
};
use crate::surrogate::weighted_family;
use crate::synth::rng_for;
use crate::target::{abstention_decision, check_cost};

/// Finite distribution plus cost tables `costs[x][y][j]`. For regression
/// instances label `y` stands for the value `label_values[y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInstance {
    pub dist: DiscreteDistribution,
    pub costs: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub label_values: Option<Vec<f64>>,
}

impl BoundInstance {
    pub fn n_experts(&self) -> usize {
        self.costs.first().and_then(|r| r.first()).map_or(0, Vec::len)
    }

    /// `E_y[c_j(x, y)]` for every expert.
    pub fn expected_costs(&self, x: usize) -> Vec<f64> {
        let p = &self.dist.cond_probs[x];
        (0..self.n_experts()).map(|j| p.iter().zip(&self.costs[x]).map(|(py, row)| py * row[j]).sum()).collect()
    }

    pub fn validate(&self, need_experts: bool) -> Result<()> {
        let m = self.dist.len();
        let n = self.dist.n_classes();
        if m == 0 || n < 2 {
            bail!(InvalidInput, "instance needs at least one point and two labels");
        }
        if need_experts && self.n_experts() == 0 {
            bail!(InvalidInput, "instance needs at least one expert");
        }
        if need_experts && self.costs.len() != m {
            bail!(InvalidInput, "cost table has {} rows, want {m}", self.costs.len());
        }
        let ne = self.n_experts();
        for row in self.costs.iter() {
            if row.len() != n || row.iter().any(|c| c.len() != ne) {
                bail!(InvalidInput, "cost table rows must be {n} x {ne}");
            }
            for c in row {
                check_finite(c, "costs")?;
                if c.iter().any(|&v| v < 0.0) {
                    bail!(InvalidInput, "costs must be >= 0");
                }
            }
        }
        Ok(())
    }
}

/// Which bound inequality to check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundKind {
    /// Score-based abstention with `L_μ` and constant cost `c`.
    AbstainScore { mu: f64, c: f64 },
    /// Score-based deferral with the single-stage surrogate.
    DeferScore { family: MulticlassFamily },
    /// Two-stage score-based deferral: logistic first stage, `family` second.
    DeferTwoStageScore { family: MulticlassFamily },
    /// Single-stage regression deferral using `label_values`.
    RegressionSingle { family: MulticlassFamily, loss: RegressionLoss },
}

impl BoundKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BoundKind::AbstainScore { .. } => "abstain_score",
            BoundKind::DeferScore { .. } => "defer_score",
            BoundKind::DeferTwoStageScore { .. } => "defer_two_stage_score",
            BoundKind::RegressionSingle { .. } => "regression_single",
        }
    }
}

/// Where the cost bounds in the bound constants come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostBoundsSource {
    /// Exact minimum and maximum of the cost table.
    #[default]
    Table,
    /// The generic bracketing `0 ≤ c_j ≤ 1`.
    Bracketing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_hypotheses")]
    pub hypotheses: usize,
    /// Share of hypotheses drawn near the lattice optimum.
    #[serde(default = "default_local_fraction")]
    pub local_fraction: f64,
    /// Lattice steps a local hypothesis may move per coordinate.
    #[serde(default = "default_local_radius")]
    pub local_radius: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub cost_bounds: CostBoundsSource,
    /// Replaces the endorsed Γ (every Γ of a two-stage bound).
    #[serde(default)]
    pub gamma_override: Option<GammaForm>,
    /// Largest lattice excess over the exact surrogate infimum for which a
    /// passing check is conclusive.
    #[serde(default = "default_max_grid_excess")]
    pub max_grid_excess: f64,
}

fn default_hypotheses() -> usize {
    200
}
fn default_local_fraction() -> f64 {
    0.5
}
fn default_local_radius() -> usize {
    2
}
fn default_tol() -> f64 {
    1e-9
}
fn default_max_grid_excess() -> f64 {
    0.1
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            hypotheses: default_hypotheses(),
            local_fraction: default_local_fraction(),
            local_radius: default_local_radius(),
            seed: 0,
            tol: default_tol(),
            cost_bounds: CostBoundsSource::Table,
            gamma_override: None,
            max_grid_excess: default_max_grid_excess(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    /// Every exact margin is at least `−tol` and the lattice resolves the
    /// surrogate infimum to within `max_grid_excess`.
    Pass,
    /// Some margin is below `−tol` against the exact infima.
    Violation,
    /// No violation, but the lattice stays farther than `max_grid_excess`
    /// from the infimum, so near-optimal hypotheses were never probed.
    Inconclusive,
}

/// Right-hand side of the inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BoundShape {
    /// `Γ(t)`.
    Single { gamma: GammaForm },
    /// `Γ1(t1) + outer·Γ2(t2 / inner)`.
    TwoStage { gamma1: GammaForm, gamma2: GammaForm, outer: f64, inner: f64 },
}

impl BoundShape {
    fn eval(&self, t1: f64, t2: f64) -> Result<f64> {
        match self {
            BoundShape::Single { gamma } => gamma_eval(gamma, t1),
            BoundShape::TwoStage { gamma1, gamma2, outer, inner } => {
                Ok(gamma_eval(gamma1, t1)? + outer * gamma_eval(gamma2, t2 / inner)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    pub source: CostBoundsSource,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Best-in-class, pointwise and gap terms of one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTerms {
    pub best_in_class: f64,
    pub pointwise: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTerms {
    /// Terms against the lattice proxy.
    pub grid: GapTerms,
    /// `E_x[inf over all real scores]`.
    pub pointwise_exact: f64,
    /// `grid.pointwise − pointwise_exact ≥ 0`.
    pub grid_excess: f64,
    /// Same excess for the second stage of a two-stage bound.
    pub stage2_grid_excess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTerm {
    pub id: usize,
    pub weight: f64,
    pub target_excess: f64,
    pub surrogate_excess: f64,
    pub surrogate_excess_grid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisOrigin {
    Optimum,
    Local,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub index: usize,
    pub origin: HypothesisOrigin,
    pub target_regret: f64,
    /// Target regret plus target gap.
    pub lhs: f64,
    /// Surrogate argument of Γ (first stage for two-stage bounds).
    pub surrogate_arg: f64,
    pub surrogate_arg_grid: f64,
    pub stage2_arg: Option<f64>,
    pub stage2_arg_grid: Option<f64>,
    pub rhs: f64,
    pub rhs_grid: f64,
    pub margin: f64,
    pub margin_grid: f64,
    /// Per-input breakdown; filled only for the worst hypothesis.
    pub points: Vec<PointTerm>,
}

/// Outcome of [`verify_bound`]. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: String,
    pub shape: BoundShape,
    pub cost_bounds: Option<CostBounds>,
    pub grid: Grid,
    pub hypotheses: usize,
    pub tol: f64,
    pub status: BoundStatus,
    /// Smallest margin against the exact infima.
    pub min_margin: f64,
    /// Smallest margin against the lattice proxy.
    pub min_margin_grid: f64,
    pub target: GapTerms,
    pub surrogate: SurrogateTerms,
    /// Indices whose exact margin is below `−tol`.
    pub violators: Vec<usize>,
    pub worst: HypothesisReport,
    pub all: Vec<HypothesisReport>,
}

fn cost_bounds(inst: &BoundInstance, source: CostBoundsSource) -> CostBounds {
    let ne = inst.n_experts();
    match source {
        CostBoundsSource::Bracketing => CostBounds { source, lower: vec![0.0; ne], upper: vec![1.0; ne] },
        CostBoundsSource::Table => {
            let mut lower = vec![f64::INFINITY; ne];
            let mut upper = vec![f64::NEG_INFINITY; ne];
            for row in inst.costs.iter().flatten() {
                for (j, &c) in row.iter().enumerate() {
                    lower[j] = lower[j].min(c);
                    upper[j] = upper[j].max(c);
                }
            }
            CostBounds { source, lower, upper }
        }
    }
}

/// Per-input data shared by all hypotheses.
struct PointSetup {
    /// Surrogate weights over the lattice coordinates (stage 1 for two-stage).
    weights: Vec<f64>,
    exact: f64,
    opt: GridMin,
    target_best: f64,
    target_bayes: f64,
    /// Two-stage: stage-2 weights without the predictor term.
    cbar: Vec<f64>,
    /// Regression: expected costs, optimal prediction and its loss.
    ec: Vec<f64>,
    h_star: f64,
    l_star: f64,
}

fn lattice_exact(family: &MulticlassFamily, weights: &[f64], opt: &GridMin) -> f64 {
    if let Some(v) = family_infimum(family, weights) {
        return v;
    }
    let fg = |h: &[f64], g: &mut [f64]| weighted_family(family, h, weights, Some(g));
    refine(&fg, &opt.point, 2000).1.min(opt.value)
}

fn lattice_min(family: &MulticlassFamily, weights: &[f64], fixed_first: Option<f64>, grid: &Grid) -> GridMin {
    match fixed_first {
        None => grid_minimize(&|h: &[f64]| weighted_family(family, h, weights, None), weights.len(), grid),
        Some(h0) => {
            let f = |h: &[f64]| {
                let mut full = Vec::with_capacity(h.len() + 1);
                full.push(h0);
                full.extend_from_slice(h);
                weighted_family(family, &full, weights, None)
            };
            grid_minimize(&f, weights.len() - 1, grid)
        }
    }
}

fn regression_base(p: &[f64], values: &[f64], loss: RegressionLoss) -> (f64, f64) {
    let risk = |v: f64| p.iter().zip(values).map(|(py, &y)| py * loss.value(v, y)).sum::<f64>();
    let h = match loss {
        RegressionLoss::Squared => p.iter().zip(values).map(|(py, y)| py * y).sum(),
        // A weighted median is a label value.
        RegressionLoss::Absolute => {
            let mut best = values[0];
            for &v in values {
                if risk(v) < risk(best) {
                    best = v;
                }
            }
            best
        }
    };
    (h, risk(h))
}

fn regression_weights(a: f64, ec: &[f64]) -> Vec<f64> {
    let total: f64 = ec.iter().sum();
    let mut w = vec![total];
    w.extend(ec.iter().map(|c| a + total - c));
    w
}

/// Sampled lattice hypothesis at one input.
struct Draw {
    idx: Vec<usize>,
    stage2: Vec<usize>,
    value: f64,
}

/// Checks `target regret + gap ≤ Γ(surrogate regret + gap)` for the
/// lattice optimum and `cfg.hypotheses` seeded random hypotheses.
pub fn verify_bound(kind: &BoundKind, inst: &BoundInstance, cfg: &VerifyConfig) -> Result<BoundReport> {
    cfg.grid.validate()?;
    if !(cfg.tol >= 0.0) || !(0.0..=1.0).contains(&cfg.local_fraction) || !(cfg.max_grid_excess >= 0.0) {
        bail!(InvalidConfig, "tol and max_grid_excess must be >= 0 and local_fraction in [0, 1]");
    }
    let n = inst.dist.n_classes();
    let ne = inst.n_experts();
    let needs_experts = !matches!(kind, BoundKind::AbstainScore { .. });
    inst.validate(needs_experts)?;
    let grid = &cfg.grid;

    let (family, bounds, mut shape) = match *kind {
        BoundKind::AbstainScore { mu, c } => {
            check_cost(c)?;
            let f = MulticlassFamily::CompSum { mu };
            f.validate(n + 1)?;
            (f, None, BoundShape::Single { gamma: GammaForm::CompSumMu { mu, c, n } })
        }
        BoundKind::DeferScore { family } => {
            family.validate(n + ne)?;
            if inst.costs.iter().flatten().flatten().any(|&c| c > 1.0) {
                bail!(InvalidInput, "score-based deferral needs costs in [0, 1]");
            }
            let b = cost_bounds(inst, cfg.cost_bounds);
            let gamma = match family.comp_sum_mu() {
                Some(mu) => GammaForm::Rescaled {
                    outer: ne as f64 + 1.0 - b.lower.iter().sum::<f64>(),
                    inner: ne as f64 + 1.0 - b.upper.iter().sum::<f64>(),
                    base: Box::new(GammaForm::CompSumBase { mu, labels: n + ne }),
                },
                None => match &cfg.gamma_override {
                    Some(g) => g.clone(),
                    None => bail!(InvalidConfig, "no endorsed gamma for {family:?}; set gamma_override"),
                },
            };
            (family, Some(b), BoundShape::Single { gamma })
        }
        BoundKind::DeferTwoStageScore { family } => {
            family.validate(ne + 1)?;
            if inst.costs.iter().flatten().flatten().any(|&c| c > 1.0) {
                bail!(InvalidInput, "score-based deferral needs costs in [0, 1]");
            }
            let b = cost_bounds(inst, cfg.cost_bounds);
            // Bounds on 1 − c_j.
            let inner: f64 = b.upper.iter().map(|c| 1.0 - c).sum();
            let outer = 1.0 + b.lower.iter().map(|c| 1.0 - c).sum::<f64>();
            if !(inner > 0.0) {
                bail!(InvalidConfig, "two-stage bound needs some expert with max cost < 1 (got {:?} bounds)", b.source);
            }
            let gamma2 = match (family.comp_sum_mu(), &cfg.gamma_override) {
                (Some(mu), _) => GammaForm::CompSumBase { mu, labels: ne + 1 },
                (None, Some(g)) => g.clone(),
                (None, None) => bail!(InvalidConfig, "no endorsed gamma for {family:?}; set gamma_override"),
            };
            let shape = BoundShape::TwoStage { gamma1: GammaForm::CompSumBase { mu: 1.0, labels: n }, gamma2, outer, inner };
            (family, Some(b), shape)
        }
        BoundKind::RegressionSingle { family, loss } => {
            family.validate(ne + 1)?;
            let values = match &inst.label_values {
                Some(v) if v.len() == n => v,
                _ => bail!(InvalidInput, "regression bounds need one label value per label"),
            };
            check_finite(values, "label_values")?;
            let b = cost_bounds(inst, CostBoundsSource::Table);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let l_bar = loss.value(lo, hi);
            let scale = ne as f64 * (l_bar + b.upper.iter().sum::<f64>());
            let gamma = match family {
                MulticlassFamily::Log2 | MulticlassFamily::CompSum { mu: 0.0 } if scale > 0.0 => {
                    GammaForm::GenericMax { beta: core::f64::consts::SQRT_2, alpha: 0.5, scale }
                }
                _ => match &cfg.gamma_override {
                    Some(g) => g.clone(),
                    None => bail!(InvalidConfig, "no endorsed gamma for {family:?}; set gamma_override"),
                },
            };
            (family, Some(b), BoundShape::Single { gamma })
        }
    };
    if let Some(g) = &cfg.gamma_override {
        g.validate()?;
        shape = match shape {
            BoundShape::Single { .. } => BoundShape::Single { gamma: g.clone() },
            BoundShape::TwoStage { outer, inner, .. } => {
                BoundShape::TwoStage { gamma1: g.clone(), gamma2: g.clone(), outer, inner }
            }
        };
    }

    let stage1_family = MulticlassFamily::LOG;
    let label_values = inst.label_values.as_deref().unwrap_or(&[]);
    let mut setups = Vec::with_capacity(inst.dist.len());
    for x in 0..inst.dist.len() {
        let p = &inst.dist.cond_probs[x];
        let ec = if needs_experts { inst.expected_costs(x) } else { Vec::new() };
        let mut s = PointSetup {
            weights: Vec::new(),
            exact: 0.0,
            opt: GridMin { index: Vec::new(), point: Vec::new(), value: 0.0, evals: 0 },
            target_best: 0.0,
            target_bayes: 0.0,
            cbar: Vec::new(),
            ec: ec.clone(),
            h_star: 0.0,
            l_star: 0.0,
        };
        match *kind {
            BoundKind::AbstainScore { c, .. } => {
                s.weights = p.clone();
                s.weights.push(1.0 - c);
                s.target_bayes = bayes_abstention(p, c)?.1;
                s.target_best = p.iter().map(|py| 1.0 - py).fold(c, f64::min);
            }
            BoundKind::DeferScore { .. } => {
                s.weights = p.clone();
                s.weights.extend(ec.iter().map(|c| 1.0 - c));
                s.target_bayes = bayes_deferral(p, &ec)?.1;
                s.target_best = p.iter().map(|py| 1.0 - py).chain(ec.iter().copied()).fold(f64::INFINITY, f64::min);
            }
            BoundKind::DeferTwoStageScore { .. } => {
                s.weights = p.clone();
                s.cbar = ec.iter().map(|c| 1.0 - c).collect();
                s.target_bayes = bayes_deferral(p, &ec)?.1;
                s.target_best = p.iter().map(|py| 1.0 - py).chain(ec.iter().copied()).fold(f64::INFINITY, f64::min);
            }
            BoundKind::RegressionSingle { loss, .. } => {
                let (h, l) = regression_base(p, label_values, loss);
                s.h_star = h;
                s.l_star = l;
                s.weights = regression_weights(l, &ec);
                // Bayes: best of keeping h* and each expert; the lattice can
                // realize every decision, so best-in-class agrees.
                s.target_bayes = ec.iter().copied().fold(l, f64::min);
                s.target_best = ec.iter().fold(l, |m, &c| if c < m { c } else { m });
            }
        }
        let fam = if matches!(kind, BoundKind::DeferTwoStageScore { .. }) { &stage1_family } else { &family };
        s.opt = lattice_min(fam, &s.weights, None, grid);
        s.exact = lattice_exact(fam, &s.weights, &s.opt);
        if let BoundKind::RegressionSingle { .. } = kind {
            let shift = (ne as f64 - 1.0) * s.l_star;
            s.opt.value -= shift;
            s.exact -= shift;
        }
        setups.push(s);
    }

    // Stage-2 lattice minima keyed by (point, predicted label, lattice index of max h_p).
    let mut stage2_cache: BTreeMap<(usize, usize, usize), (GridMin, f64)> = BTreeMap::new();
    let mut stage2 = |x: usize, hp_idx: &[usize]| -> (Vec<f64>, GridMin, f64) {
        let s = &setups[x];
        let hp: Vec<f64> = hp_idx.iter().map(|&i| grid.value(i)).collect();
        let k = math::argmax(&hp);
        let mut w = vec![s.weights[k]];
        w.extend_from_slice(&s.cbar);
        let entry = stage2_cache.entry((x, k, hp_idx[k])).or_insert_with(|| {
            let m = lattice_min(&family, &w, Some(hp[k]), grid);
            let exact = match family_infimum(&family, &w) {
                Some(v) => v,
                None => {
                    let fg = |h: &[f64], g: &mut [f64]| {
                        let mut full = vec![hp[k]];
                        full.extend_from_slice(h);
                        let mut gf = vec![0.0; full.len()];
                        let v = weighted_family(&family, &full, &w, Some(&mut gf));
                        g.copy_from_slice(&gf[1..]);
                        v
                    };
                    refine(&fg, &m.point, 2000).1.min(m.value)
                }
            };
            (m, exact)
        });
        (w, entry.0.clone(), entry.1)
    };

    let g = grid.points();
    let total = cfg.hypotheses + 1;
    let n_local = libm::round(cfg.local_fraction * cfg.hypotheses as f64) as usize;
    let radius = cfg.local_radius as i64;
    let mut all = Vec::with_capacity(total);
    let mut details = Vec::with_capacity(total);
    for hyp in 0..total {
        let origin = if hyp == 0 {
            HypothesisOrigin::Optimum
        } else if hyp <= n_local {
            HypothesisOrigin::Local
        } else {
            HypothesisOrigin::Uniform
        };
        let mut rng = rng_for(cfg.seed, hyp as u64);
        let jitter = |rng: &mut rand_chacha::ChaCha8Rng, base: &[usize]| -> Vec<usize> {
            base.iter()
                .map(|&i| match origin {
                    HypothesisOrigin::Optimum => i,
                    HypothesisOrigin::Local => (i as i64 + rng.random_range(-radius..=radius)).clamp(0, g as i64 - 1) as usize,
                    HypothesisOrigin::Uniform => rng.random_range(0..g),
                })
                .collect()
        };
        let mut draws = Vec::with_capacity(setups.len());
        for (x, s) in setups.iter().enumerate() {
            let idx = jitter(&mut rng, &s.opt.index);
            let mut d = Draw { idx, stage2: Vec::new(), value: s.h_star };
            if let BoundKind::DeferTwoStageScore { .. } = kind {
                let (_, m, _) = stage2(x, &d.idx);
                d.stage2 = jitter(&mut rng, &m.index);
            }
            if let BoundKind::RegressionSingle { .. } = kind {
                let lo = label_values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = label_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                d.value = match origin {
                    HypothesisOrigin::Optimum => s.h_star,
                    HypothesisOrigin::Local => {
                        let span = radius as f64 * grid.step * (hi - lo) / (grid.hi - grid.lo);
                        (s.h_star + span * rng.random_range(-1.0..=1.0)).clamp(lo, hi)
                    }
                    HypothesisOrigin::Uniform => lo + (hi - lo) * rng.random::<f64>(),
                };
            }
            draws.push(d);
        }

        let mut points = Vec::with_capacity(setups.len());
        let (mut t_risk, mut s_risk, mut s2_risk) = (0.0, 0.0, 0.0);
        let (mut s_exact, mut s_grid, mut s2_exact, mut s2_grid) = (0.0, 0.0, 0.0, 0.0);
        let (mut t_best, mut t_bayes) = (0.0, 0.0);
        for (x, (s, d)) in setups.iter().zip(&draws).enumerate() {
            let pi = inst.dist.weights[x];
            let p = &inst.dist.cond_probs[x];
            let h: Vec<f64> = d.idx.iter().map(|&i| grid.value(i)).collect();
            let (t, sv) = match *kind {
                BoundKind::AbstainScore { c, .. } => {
                    let dec = abstention_decision(&h);
                    let t = if dec == n { c } else { 1.0 - p[dec] };
                    (t, weighted_family(&family, &h, &s.weights, None))
                }
                BoundKind::DeferScore { .. } => {
                    let dec = math::argmax(&h);
                    let t = if dec < n { 1.0 - p[dec] } else { s.ec[dec - n] };
                    (t, weighted_family(&family, &h, &s.weights, None))
                }
                BoundKind::DeferTwoStageScore { .. } => {
                    let hd: Vec<f64> = d.stage2.iter().map(|&i| grid.value(i)).collect();
                    let mut full = h.clone();
                    full.extend_from_slice(&hd);
                    let dec = math::argmax(&full);
                    let t = if dec < n { 1.0 - p[dec] } else { s.ec[dec - n] };
                    let (w2, m2, e2) = stage2(x, &d.idx);
                    let mut hbar = vec![math::max(&h)];
                    hbar.extend_from_slice(&hd);
                    let v2 = weighted_family(&family, &hbar, &w2, None);
                    s2_risk += pi * v2;
                    s2_exact += pi * e2;
                    s2_grid += pi * m2.value;
                    (t, weighted_family(&stage1_family, &h, &s.weights, None))
                }
                BoundKind::RegressionSingle { loss, .. } => {
                    let a: f64 = p.iter().zip(label_values).map(|(py, &y)| py * loss.value(d.value, y)).sum();
                    let dec = math::argmax(&h);
                    let t = if dec == 0 { a } else { s.ec[dec - 1] };
                    let w = regression_weights(a, &s.ec);
                    (t, weighted_family(&family, &h, &w, None) - (ne as f64 - 1.0) * a)
                }
            };
            t_risk += pi * t;
            s_risk += pi * sv;
            s_exact += pi * s.exact;
            s_grid += pi * s.opt.value;
            t_best += pi * s.target_best;
            t_bayes += pi * s.target_bayes;
            points.push(PointTerm {
                id: inst.dist.points[x].id,
                weight: pi,
                target_excess: t - s.target_best,
                surrogate_excess: sv - s.exact,
                surrogate_excess_grid: sv - s.opt.value,
            });
        }
        details.push((t_risk, s_risk, s2_risk, s_exact, s_grid, s2_exact, s2_grid, t_best, t_bayes, points));
    }

    // The optimum hypothesis realizes the lattice best-in-class surrogate risk.
    let (_, s_best_grid, ..) = details[0];
    let (_, _, _, s_exact, s_grid, s2_exact0, s2_grid0, t_best, t_bayes, _) = details[0];
    let two_stage = matches!(kind, BoundKind::DeferTwoStageScore { .. });
    let target = GapTerms { best_in_class: t_best, pointwise: t_bayes, gap: t_best - t_bayes };
    let surrogate = SurrogateTerms {
        grid: GapTerms { best_in_class: s_best_grid, pointwise: s_grid, gap: s_best_grid - s_grid },
        pointwise_exact: s_exact,
        grid_excess: s_grid - s_exact,
        stage2_grid_excess: two_stage.then_some(s2_grid0 - s2_exact0),
    };
    let mut min_margin = f64::INFINITY;
    let mut min_margin_grid = f64::INFINITY;
    let mut worst = 0;
    let mut violators = Vec::new();
    for (hyp, (t_risk, s_risk, s2_risk, _, _, s2_exact, s2_grid, _, _, points)) in details.into_iter().enumerate() {
        let target_regret = t_risk - target.best_in_class;
        let lhs = target_regret + target.gap;
        let arg = (s_risk - surrogate.pointwise_exact).max(0.0);
        let arg_grid = (s_risk - surrogate.grid.best_in_class + surrogate.grid.gap).max(0.0);
        let (a2, a2g) = if two_stage { ((s2_risk - s2_exact).max(0.0), (s2_risk - s2_grid).max(0.0)) } else { (0.0, 0.0) };
        let rhs = shape.eval(arg, a2)?;
        let rhs_grid = shape.eval(arg_grid, a2g)?;
        let margin = rhs - lhs;
        let margin_grid = rhs_grid - lhs;
        if margin < -cfg.tol {
            violators.push(hyp);
        }
        if margin < min_margin {
            min_margin = margin;
            worst = hyp;
        }
        min_margin_grid = min_margin_grid.min(margin_grid);
        all.push(HypothesisReport {
            index: hyp,
            origin: if hyp == 0 {
                HypothesisOrigin::Optimum
            } else if hyp <= n_local {
                HypothesisOrigin::Local
            } else {
                HypothesisOrigin::Uniform
            },
            target_regret,
            lhs,
            surrogate_arg: arg,
            surrogate_arg_grid: arg_grid,
            stage2_arg: two_stage.then_some(a2),
            stage2_arg_grid: two_stage.then_some(a2g),
            rhs,
            rhs_grid,
            margin,
            margin_grid,
            points,
        });
    }
    let mut worst_report = all[worst].clone();
    for (i, h) in all.iter_mut().enumerate() {
        if i == worst {
            worst_report.points = core::mem::take(&mut h.points);
        } else {
            h.points.clear();
        }
    }
    let excess = surrogate.grid_excess.max(surrogate.stage2_grid_excess.unwrap_or(0.0));
    let status = if min_margin < -cfg.tol {
        BoundStatus::Violation
    } else if excess > cfg.max_grid_excess {
        BoundStatus::Inconclusive
    } else {
        BoundStatus::Pass
    };
    Ok(BoundReport {
        kind: String::from(kind.tag()),
        shape,
        cost_bounds: bounds,
        grid: *grid,
        hypotheses: total,
        tol: cfg.tol,
        status,
        min_margin,
        min_margin_grid,
        target,
        surrogate,
        violators,
        worst: worst_report,
        all,
    })
}

/// Endorsed (kind, instance) pairs used by the property runs: the three
/// abstention cases, logistic/GCE/MAE deferral, the two-stage logistic case
/// and regression with the base-2 logistic.
pub fn endorsed_kinds() -> Vec<BoundKind> {
    let mut v = Vec::new();
    for mu in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        v.push(BoundKind::AbstainScore { mu, c: 0.3 });
    }
    for family in [MulticlassFamily::LOG, MulticlassFamily::EXP, MulticlassFamily::GCE, MulticlassFamily::MAE] {
        v.push(BoundKind::DeferScore { family });
        v.push(BoundKind::DeferTwoStageScore { family });
    }
    v.push(BoundKind::RegressionSingle { family: MulticlassFamily::Log2, loss: RegressionLoss::Squared });
    v.push(BoundKind::RegressionSingle { family: MulticlassFamily::EXP, loss: RegressionLoss::Absolute });
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::comp_sum_infimum;
    use crate::synth::{gen_discrete, gen_discrete_regression, DiscreteConfig};

    fn instance(seed: u64, classes: usize, experts: usize) -> BoundInstance {
        gen_discrete(&DiscreteConfig { points: 3, classes, experts, cost_range: (0.0, 0.9), one_hot: false, seed }).unwrap()
    }

    #[test]
    fn deterministic_optimum_has_zero_regrets() {
        let inst = gen_discrete(&DiscreteConfig { points: 2, classes: 2, experts: 0, cost_range: (0.0, 0.9), one_hot: true, seed: 1 })
            .unwrap();
        let cfg = VerifyConfig { hypotheses: 0, ..Default::default() };
        let r = verify_bound(&BoundKind::AbstainScore { mu: 1.0, c: 0.5 }, &inst, &cfg).unwrap();
        let h = &r.all[0];
        assert_eq!(h.target_regret, 0.0);
        assert!(h.lhs.abs() < 1e-15);
        assert!(r.target.gap.abs() < 1e-15 && r.surrogate.grid.gap.abs() < 1e-12);
        assert!((r.surrogate.pointwise_exact - comp_sum_infimum(&[1.0, 0.0, 0.5], 1.0)).abs() < 1e-12);
        assert!(h.margin >= 0.0);
    }

    #[test]
    fn endorsed_abstention_run_passes() {
        let inst = instance(3, 2, 0);
        let r = verify_bound(&BoundKind::AbstainScore { mu: 1.0, c: 0.5 }, &inst, &VerifyConfig::default()).unwrap();
        assert!(r.min_margin >= -1e-9, "{}", r.min_margin);
        assert_eq!(r.status, BoundStatus::Pass, "grid excess {}", r.surrogate.grid_excess);
        assert_eq!(r.hypotheses, 201);
    }

    #[test]
    fn sabotaged_gamma_is_detected() {
        let inst = instance(3, 2, 0);
        let cfg = VerifyConfig { gamma_override: Some(GammaForm::Linear { slope: 0.1 }), ..Default::default() };
        let r = verify_bound(&BoundKind::AbstainScore { mu: 1.0, c: 0.5 }, &inst, &cfg).unwrap();
        assert_eq!(r.status, BoundStatus::Violation);
        assert!(!r.violators.is_empty());
    }

    #[test]
    fn other_kinds_run() {
        let cfg = VerifyConfig { hypotheses: 40, ..Default::default() };
        let inst = instance(4, 3, 2);
        for k in [
            BoundKind::DeferScore { family: MulticlassFamily::LOG },
            BoundKind::DeferTwoStageScore { family: MulticlassFamily::LOG },
        ] {
            let r = verify_bound(&k, &inst, &cfg).unwrap();
            assert!(r.min_margin >= -1e-9, "{:?}: {}", k, r.min_margin);
            assert_eq!(r.cost_bounds.as_ref().unwrap().source, CostBoundsSource::Table);
        }
        let reg = gen_discrete_regression(
            &DiscreteConfig { points: 3, classes: 3, experts: 2, cost_range: (0.0, 1.0), one_hot: false, seed: 4 },
            RegressionLoss::Squared,
        )
        .unwrap();
        let k = BoundKind::RegressionSingle { family: MulticlassFamily::Log2, loss: RegressionLoss::Squared };
        let r = verify_bound(&k, &reg, &cfg).unwrap();
        assert!(r.min_margin >= -1e-9, "{}", r.min_margin);
    }

    #[test]
    fn reports_are_deterministic() {
        let inst = instance(8, 3, 1);
        let k = BoundKind::DeferScore { family: MulticlassFamily::GCE };
        let cfg = VerifyConfig { hypotheses: 30, seed: 5, ..Default::default() };
        assert_eq!(verify_bound(&k, &inst, &cfg).unwrap(), verify_bound(&k, &inst, &cfg).unwrap());
    }
}
