use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::math;
use crate::synth::{rng_for, Dataset, Targets};

/// Multi-start search over score-based linear abstention rules
/// `s_k(x) = w_k·x + b_k` (`k` = class 0, class 1, abstain) with `‖w_k‖ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleSearch {
    pub starts: usize,
    /// Local moves tried per start.
    pub moves: usize,
    pub bias_range: f64,
    pub seed: u64,
}

impl Default for TripleSearch {
    fn default() -> Self {
        Self { starts: 24, moves: 600, bias_range: 2.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleResult {
    /// Unit directions `w_0, w_1, w_abstain`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub loss: f64,
    pub evals: usize,
}

fn normalize(v: &mut [f64]) {
    let n = math::sqrt(v.iter().map(|a| a * a).sum());
    if n > 0.0 {
        for a in v.iter_mut() {
            *a /= n;
        }
    }
}

/// Empirical abstention loss of a linear triple; ties go to abstaining.
pub fn triple_loss(data: &Dataset, costs: &[f64], w: &[Vec<f64>], b: &[f64]) -> f64 {
    let Targets::Classes(y) = &data.targets else { return f64::NAN };
    let mut total = 0.0;
    for ((x, &yi), &c) in data.features.iter().zip(y).zip(costs) {
        let s: Vec<f64> = (0..3).map(|k| w[k].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b[k]).collect();
        let k = if s[1] > s[0] { 1 } else { 0 };
        total += if s[2] >= s[k] {
            c
        } else if k != yi {
            1.0
        } else {
            0.0
        };
    }
    total / data.len().max(1) as f64
}

/// Random starts (plus the start aligned with the data's axes) refined by
/// shrinking random perturbations that are kept when they lower the loss.
pub fn best_score_based_linear(data: &Dataset, costs: &[f64], cfg: &TripleSearch) -> Result<TripleResult> {
    if data.n_classes != 2 || data.is_empty() || costs.len() != data.len() {
        bail!(InvalidInput, "triple search needs a non-empty two-class dataset with one cost per sample");
    }
    let d = data.dim();
    let mut best: Option<TripleResult> = None;
    let mut evals = 0;
    for start in 0..=cfg.starts {
        let mut rng = rng_for(cfg.seed, start as u64);
        let (mut w, mut b): (Vec<Vec<f64>>, Vec<f64>) = if start == 0 && d >= 2 {
            let e = |i: usize, s: f64| {
                let mut v = vec![0.0; d];
                v[i] = s;
                v
            };
            (vec![e(1, 1.0), e(1, -1.0), e(0, -1.0)], vec![0.0, 0.0, 0.0])
        } else {
            let w = (0..3)
                .map(|_| {
                    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    normalize(&mut v);
                    v
                })
                .collect();
            let b = (0..3).map(|_| rng.random_range(-cfg.bias_range..=cfg.bias_range)).collect();
            (w, b)
        };
        let mut loss = triple_loss(data, costs, &w, &b);
        evals += 1;
        let mut step = 0.5;
        let mut fails = 0;
        for _ in 0..cfg.moves {
            let k = rng.random_range(0..3);
            let mut wk = w[k].clone();
            for a in wk.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *a += step * z;
            }
            normalize(&mut wk);
            let z: f64 = StandardNormal.sample(&mut rng);
            let bk = (b[k] + step * z).clamp(-cfg.bias_range, cfg.bias_range);
            let (old_w, old_b) = (core::mem::replace(&mut w[k], wk), b[k]);
            b[k] = bk;
            let v = triple_loss(data, costs, &w, &b);
            evals += 1;
            if v < loss {
                loss = v;
                fails = 0;
            } else {
                w[k] = old_w;
                b[k] = old_b;
                fails += 1;
                if fails >= 25 {
                    step = (step * 0.5).max(1e-3);
                    fails = 0;
                }
            }
        }
        if best.as_ref().map_or(true, |r| loss < r.loss) {
            best = Some(TripleResult { w, b, loss, evals: 0 });
        }
    }
    let mut r = best.expect("at least one start");
    r.evals = evals;
    Ok(r)
}
