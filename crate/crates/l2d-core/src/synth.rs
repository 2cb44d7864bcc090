//! Seeded synthetic generators. Every generator is a pure function of its
//! config; randomness comes from [`rng_for`].

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::math;
use crate::model::{DiscreteDistribution, RegressionLoss};
use crate::oracle::BoundInstance;

/// Independent stream `index` of the generator seeded by `seed`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Expert outputs, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum ExpertTable {
    None,
    Classes(Vec<Vec<usize>>),
    Values(Vec<Vec<f64>>),
}

impl ExpertTable {
    pub fn n_experts(&self) -> usize {
        match self {
            ExpertTable::None => 0,
            ExpertTable::Classes(r) => r.first().map_or(0, Vec::len),
            ExpertTable::Values(r) => r.first().map_or(0, Vec::len),
        }
    }
}

/// Region of the counterexample geometry a sample falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `f_abs(x) ≤ 0`: label is a fair coin.
    Abstain,
    /// `f_abs(x) > 0`, `f_pred(x) > 0`: class 0.
    Positive,
    /// `f_abs(x) > 0`, `f_pred(x) ≤ 0`: class 1.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Targets,
    /// Number of classes; `0` for regression.
    pub n_classes: usize,
    pub experts: ExpertTable,
    pub regions: Option<Vec<Region>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features[range.clone()].to_vec(),
            targets: match &self.targets {
                Targets::Classes(v) => Targets::Classes(v[range.clone()].to_vec()),
                Targets::Values(v) => Targets::Values(v[range.clone()].to_vec()),
            },
            n_classes: self.n_classes,
            experts: match &self.experts {
                ExpertTable::None => ExpertTable::None,
                ExpertTable::Classes(r) => ExpertTable::Classes(r[range.clone()].to_vec()),
                ExpertTable::Values(r) => ExpertTable::Values(r[range.clone()].to_vec()),
            },
            regions: self.regions.as_ref().map(|r| r[range].to_vec()),
        }
    }
}

/// `w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFn {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    fn check_unit(&self, what: &str) -> Result<()> {
        let norm = math::sqrt(self.w.iter().map(|v| v * v).sum());
        if !((norm - 1.0).abs() <= 1e-9) {
            bail!(InvalidConfig, "{what}.w must have unit norm, got {norm}");
        }
        if !self.b.is_finite() {
            bail!(InvalidConfig, "{what}.b is not finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub f_abs: LinearFn,
    pub f_pred: LinearFn,
    pub c: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CounterexampleConfig {
    /// Orthogonal `f_abs`, `f_pred` through the origin of the unit disc.
    fn default() -> Self {
        Self {
            f_abs: LinearFn { w: vec![1.0, 0.0], b: 0.0 },
            f_pred: LinearFn { w: vec![0.0, 1.0], b: 0.0 },
            c: 0.2,
            samples: 100_000,
            seed: 0,
        }
    }
}

fn unit_ball<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = math::sqrt(v.iter().map(|a| a * a).sum());
        if norm == 0.0 {
            continue;
        }
        let radius = math::powf(rng.random::<f64>(), 1.0 / d as f64);
        for a in &mut v {
            *a *= radius / norm;
        }
        return v;
    }
}

/// Uniform samples from the unit ball labelled by the three-region rule.
pub fn gen_counterexample(config: &CounterexampleConfig) -> Result<Dataset> {
    config.f_abs.check_unit("f_abs")?;
    config.f_pred.check_unit("f_pred")?;
    let d = config.f_abs.w.len();
    if d == 0 || config.f_pred.w.len() != d {
        bail!(InvalidConfig, "f_abs and f_pred need the same non-zero dimension");
    }
    if !(config.c >= 0.0 && config.c < 0.5) {
        bail!(InvalidConfig, "counterexample cost must lie in [0, 0.5), got {}", config.c);
    }
    let mut rng = rng_for(config.seed, 0);
    let mut features = Vec::with_capacity(config.samples);
    let mut labels = Vec::with_capacity(config.samples);
    let mut regions = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let x = unit_ball(&mut rng, d);
        let (region, y) = if config.f_abs.eval(&x) <= 0.0 {
            (Region::Abstain, if rng.random_bool(0.5) { 0 } else { 1 })
        } else if config.f_pred.eval(&x) > 0.0 {
            (Region::Positive, 0)
        } else {
            (Region::Negative, 1)
        };
        features.push(x);
        labels.push(y);
        regions.push(region);
    }
    Ok(Dataset { features, targets: Targets::Classes(labels), n_classes: 2, experts: ExpertTable::None, regions: Some(regions) })
}

/// Empirical loss of the Bayes abstention rule on a counterexample sample:
/// abstain on the coin-flip region, predict the deterministic label elsewhere.
pub fn counterexample_bayes_loss(data: &Dataset, c: f64) -> f64 {
    match &data.regions {
        Some(r) if !r.is_empty() => c * r.iter().filter(|&&g| g == Region::Abstain).count() as f64 / r.len() as f64,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertDisjointConfig {
    pub n_classes: usize,
    pub dim: usize,
    /// Classes on which each expert is always right.
    pub domains: Vec<Vec<usize>>,
    /// Probability of a correct answer off-domain; `None` means `1/n`.
    #[serde(default)]
    pub off_domain_accuracy: Option<f64>,
    /// Standard deviation of the class means.
    pub mean_scale: f64,
    pub noise: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Gaussian class clusters plus experts that are exact on their domain and
/// right with probability `off_domain_accuracy` elsewhere (uniform over the
/// wrong labels otherwise).
pub fn gen_expert_disjoint(config: &ExpertDisjointConfig) -> Result<Dataset> {
    let n = config.n_classes;
    if n < 2 || config.dim == 0 {
        bail!(InvalidConfig, "need n_classes >= 2 and dim >= 1");
    }
    for (j, dom) in config.domains.iter().enumerate() {
        if dom.is_empty() {
            bail!(InvalidConfig, "expert {j} has an empty domain");
        }
        if let Some(&k) = dom.iter().find(|&&k| k >= n) {
            bail!(InvalidConfig, "expert {j} domain class {k} is out of range");
        }
    }
    let acc = config.off_domain_accuracy.unwrap_or(1.0 / n as f64);
    if !(0.0..=1.0).contains(&acc) {
        bail!(InvalidConfig, "off_domain_accuracy must lie in [0, 1]");
    }
    if !(config.noise >= 0.0 && config.mean_scale >= 0.0) {
        bail!(InvalidConfig, "noise and mean_scale must be >= 0");
    }
    let mut geo = rng_for(config.seed, 0);
    let means: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..config.dim).map(|_| config.mean_scale * Distribution::<f64>::sample(&StandardNormal, &mut geo)).collect())
        .collect();
    let mut rng = rng_for(config.seed, 1);
    let mut features = Vec::with_capacity(config.samples);
    let mut labels = Vec::with_capacity(config.samples);
    let mut experts = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let y = rng.random_range(0..n);
        let x: Vec<f64> = means[y]
            .iter()
            .map(|m| m + config.noise * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let row: Vec<usize> = config
            .domains
            .iter()
            .map(|dom| {
                if dom.contains(&y) || rng.random_bool(acc) {
                    y
                } else {
                    let k = rng.random_range(0..n - 1);
                    if k >= y {
                        k + 1
                    } else {
                        k
                    }
                }
            })
            .collect();
        features.push(x);
        labels.push(y);
        experts.push(row);
    }
    Ok(Dataset { features, targets: Targets::Classes(labels), n_classes: n, experts: ExpertTable::Classes(experts), regions: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetFn {
    Constant { value: f64 },
    /// `Σ_i x_i / √d`.
    Linear,
    /// `sin(π x_0)`.
    Sine,
}

impl TargetFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TargetFn::Constant { value } => value,
            TargetFn::Linear => x.iter().sum::<f64>() / math::sqrt(x.len() as f64),
            TargetFn::Sine => libm::sin(core::f64::consts::PI * x[0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub target: TargetFn,
    pub dim: usize,
    /// Error scale of each expert; expert `j` outputs `f(x) + fidelity_j·ξ`.
    pub fidelity: Vec<f64>,
    pub noise: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `x ~ U[−1, 1]^d`, `y = f(x) + σ·ξ`, analytic experts with Gaussian error.
pub fn gen_regression_task(config: &RegressionConfig) -> Result<Dataset> {
    if config.dim == 0 {
        bail!(InvalidConfig, "dim must be >= 1");
    }
    if !(config.noise >= 0.0) || config.fidelity.iter().any(|f| !(*f >= 0.0)) {
        bail!(InvalidConfig, "noise and fidelity levels must be >= 0");
    }
    let mut rng = rng_for(config.seed, 0);
    let mut features = Vec::with_capacity(config.samples);
    let mut values = Vec::with_capacity(config.samples);
    let mut experts = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let x: Vec<f64> = (0..config.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = config.target.eval(&x);
        let y = f + config.noise * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let row = config.fidelity.iter().map(|s| f + s * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        features.push(x);
        values.push(y);
        experts.push(row);
    }
    Ok(Dataset { features, targets: Targets::Values(values), n_classes: 0, experts: ExpertTable::Values(experts), regions: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizableConfig {
    pub samples: usize,
    /// Cost of abstaining outside the rejectable region.
    pub outside_cost: f64,
    pub seed: u64,
}

impl Default for RealizableConfig {
    fn default() -> Self {
        Self { samples: 2000, outside_cost: 0.5, seed: 0 }
    }
}

/// Realizable abstention data on `[−1, 1]²` with a margin around both axes:
/// on `x_0 < 0` labels are coin flips and abstaining is free; elsewhere the
/// label is `1{x_1 < 0}` and abstaining costs `outside_cost`. Returns the
/// dataset and the per-sample abstention cost.
pub fn gen_realizable_abstention(config: &RealizableConfig) -> Result<(Dataset, Vec<f64>)> {
    if !(config.outside_cost > 0.0 && config.outside_cost <= 1.0) {
        bail!(InvalidConfig, "outside_cost must lie in (0, 1]");
    }
    let mut rng = rng_for(config.seed, 0);
    let mut features = Vec::with_capacity(config.samples);
    let mut labels = Vec::with_capacity(config.samples);
    let mut costs = Vec::with_capacity(config.samples);
    let mut regions = Vec::with_capacity(config.samples);
    while features.len() < config.samples {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if math::abs(x[0]) <= 0.3 || math::abs(x[1]) <= 0.1 {
            continue;
        }
        if x[0] < 0.0 {
            labels.push(if rng.random_bool(0.5) { 0 } else { 1 });
            costs.push(0.0);
            regions.push(Region::Abstain);
        } else {
            let y = usize::from(x[1] < 0.0);
            labels.push(y);
            costs.push(config.outside_cost);
            regions.push(if y == 0 { Region::Positive } else { Region::Negative });
        }
        features.push(x.to_vec());
    }
    let data = Dataset { features, targets: Targets::Classes(labels), n_classes: 2, experts: ExpertTable::None, regions: Some(regions) };
    Ok((data, costs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub points: usize,
    pub classes: usize,
    pub experts: usize,
    /// Range of the random cost tables.
    #[serde(default = "default_cost_range")]
    pub cost_range: (f64, f64),
    /// Draw one-hot conditional rows.
    #[serde(default)]
    pub one_hot: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_cost_range() -> (f64, f64) {
    (0.0, 0.9)
}

fn simplex_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    for a in &mut v {
        *a /= s;
    }
    v
}

fn check_discrete(config: &DiscreteConfig) -> Result<()> {
    if config.points == 0 || config.classes == 0 {
        bail!(InvalidConfig, "points and classes must be >= 1");
    }
    let (lo, hi) = config.cost_range;
    if !(lo >= 0.0 && lo <= hi && hi <= 1.0) {
        bail!(InvalidConfig, "cost_range must satisfy 0 <= lo <= hi <= 1");
    }
    Ok(())
}

/// Random finite distribution with uniform-Dirichlet rows and weights and
/// cost tables `costs[x][y][j]` uniform on `cost_range`.
pub fn gen_discrete(config: &DiscreteConfig) -> Result<BoundInstance> {
    check_discrete(config)?;
    let mut rng = rng_for(config.seed, 0);
    let rows: Vec<Vec<f64>> = (0..config.points)
        .map(|_| {
            if config.one_hot {
                let mut r = vec![0.0; config.classes];
                r[rng.random_range(0..config.classes)] = 1.0;
                r
            } else {
                simplex_row(&mut rng, config.classes)
            }
        })
        .collect();
    let weights = simplex_row(&mut rng, config.points);
    let (lo, hi) = config.cost_range;
    let costs = (0..config.points)
        .map(|_| (0..config.classes).map(|_| (0..config.experts).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()).collect())
        .collect();
    Ok(BoundInstance { dist: DiscreteDistribution::from_rows(rows, weights)?, costs, label_values: None })
}

/// Finite regression instance: label values uniform on `[0, 1]`, one
/// analytic expert prediction per point and expert, and costs
/// `L(g_j(x), y)` (the `cost_range` field is ignored).
pub fn gen_discrete_regression(config: &DiscreteConfig, loss: RegressionLoss) -> Result<BoundInstance> {
    check_discrete(config)?;
    if config.experts == 0 {
        bail!(InvalidConfig, "regression instances need experts >= 1");
    }
    let mut inst = gen_discrete(config)?;
    let mut rng = rng_for(config.seed, 1);
    let mut values: Vec<f64> = (0..config.classes).map(|_| rng.random::<f64>()).collect();
    values.sort_by(f64::total_cmp);
    for x in 0..config.points {
        let g: Vec<f64> = (0..config.experts).map(|_| rng.random::<f64>()).collect();
        for (y, &v) in values.iter().enumerate() {
            inst.costs[x][y] = g.iter().map(|&gj| loss.value(gj, v)).collect();
        }
    }
    inst.label_values = Some(values);
    Ok(inst)
}
