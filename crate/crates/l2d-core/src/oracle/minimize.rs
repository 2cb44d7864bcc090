use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Regular lattice `lo, lo + step, ..., hi` on every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0, step: 0.25 }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step > 0.0 && self.hi > self.lo) {
            bail!(InvalidConfig, "grid needs finite lo < hi and step > 0");
        }
        Ok(())
    }

    /// Number of lattice points per coordinate.
    pub fn points(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9) as usize + 1
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    /// Lattice index closest to `v`, clamped to the box.
    pub fn nearest(&self, v: f64) -> usize {
        let i = libm::floor((v - self.lo) / self.step + 0.5);
        (i.max(0.0) as usize).min(self.points() - 1)
    }
}

/// Lattice minimizer of `f` over `dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMin {
    pub index: Vec<usize>,
    pub point: Vec<f64>,
    pub value: f64,
    /// Number of objective evaluations spent.
    pub evals: usize,
}

/// Full enumeration is used up to this many lattice points.
pub const EXHAUSTIVE_LIMIT: usize = 200_000;

/// Minimizes `f` over the lattice: by enumeration when small enough,
/// otherwise by exact coordinate line searches plus paired moves from
/// several deterministic starts.
pub fn grid_minimize(f: &dyn Fn(&[f64]) -> f64, dim: usize, grid: &Grid) -> GridMin {
    let g = grid.points();
    let total = libm::pow(g as f64, dim as f64);
    if total <= EXHAUSTIVE_LIMIT as f64 {
        exhaustive(f, dim, grid)
    } else {
        pattern_search(f, dim, grid)
    }
}

fn exhaustive(f: &dyn Fn(&[f64]) -> f64, dim: usize, grid: &Grid) -> GridMin {
    let g = grid.points();
    let mut idx = vec![0usize; dim];
    let mut x: Vec<f64> = idx.iter().map(|&i| grid.value(i)).collect();
    let mut best = GridMin { index: idx.clone(), point: x.clone(), value: f(&x), evals: 1 };
    loop {
        let mut k = 0;
        while k < dim {
            idx[k] += 1;
            if idx[k] < g {
                x[k] = grid.value(idx[k]);
                break;
            }
            idx[k] = 0;
            x[k] = grid.value(0);
            k += 1;
        }
        if k == dim {
            break;
        }
        let v = f(&x);
        best.evals += 1;
        if v < best.value {
            best.value = v;
            best.index.copy_from_slice(&idx);
            best.point.copy_from_slice(&x);
        }
    }
    best
}

fn pattern_search(f: &dyn Fn(&[f64]) -> f64, dim: usize, grid: &Grid) -> GridMin {
    let g = grid.points();
    let mid = grid.nearest(0.0);
    let mut starts: Vec<Vec<usize>> = vec![vec![mid; dim]];
    for k in 0..dim {
        let mut s = vec![0; dim];
        s[k] = g - 1;
        starts.push(s);
    }
    let mut best: Option<GridMin> = None;
    let mut evals = 0;
    for start in starts {
        let mut idx = start;
        let mut x: Vec<f64> = idx.iter().map(|&i| grid.value(i)).collect();
        let mut val = f(&x);
        evals += 1;
        loop {
            let mut improved = false;
            for k in 0..dim {
                let keep = idx[k];
                let mut bi = keep;
                for i in 0..g {
                    if i == keep {
                        continue;
                    }
                    x[k] = grid.value(i);
                    let v = f(&x);
                    evals += 1;
                    if v < val {
                        val = v;
                        bi = i;
                    }
                }
                idx[k] = bi;
                x[k] = grid.value(bi);
                improved |= bi != keep;
            }
            for a in 0..dim {
                for b in a + 1..dim {
                    for (da, db) in [(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
                        let ia = idx[a] as i64 + da;
                        let ib = idx[b] as i64 + db;
                        if ia < 0 || ib < 0 || ia >= g as i64 || ib >= g as i64 {
                            continue;
                        }
                        x[a] = grid.value(ia as usize);
                        x[b] = grid.value(ib as usize);
                        let v = f(&x);
                        evals += 1;
                        if v < val {
                            val = v;
                            idx[a] = ia as usize;
                            idx[b] = ib as usize;
                            improved = true;
                        } else {
                            x[a] = grid.value(idx[a]);
                            x[b] = grid.value(idx[b]);
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| val < b.value) {
            best = Some(GridMin { index: idx.clone(), point: x.clone(), value: val, evals: 0 });
        }
    }
    let mut b = best.expect("at least one start");
    b.evals = evals;
    b
}

/// Gradient descent with Armijo backtracking from `start`. `fg` returns the
/// value and writes the gradient. Returns the final point and value.
pub fn refine(fg: &dyn Fn(&[f64], &mut [f64]) -> f64, start: &[f64], iters: usize) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut x = start.to_vec();
    let mut g = vec![0.0; d];
    let mut v = fg(&x, &mut g);
    let mut trial = vec![0.0; d];
    let mut gt = vec![0.0; d];
    let mut step = 1.0;
    for _ in 0..iters {
        let gn: f64 = g.iter().map(|a| a * a).sum();
        if gn < 1e-30 {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            for i in 0..d {
                trial[i] = x[i] - step * g[i];
            }
            let vt = fg(&trial, &mut gt);
            if vt.is_finite() && vt <= v - 1e-4 * step * gn {
                x.copy_from_slice(&trial);
                g.copy_from_slice(&gt);
                v = vt;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_points() {
        assert_eq!(Grid::default().points(), 41);
        assert_eq!(Grid { lo: -5.0, hi: 5.0, step: 2.0 }.points(), 6);
        assert_eq!(Grid::default().nearest(0.1), 20);
    }

    #[test]
    fn exhaustive_and_pattern_agree_on_quadratic() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (v - 0.5 * i as f64).powi(2)).sum::<f64>();
        let grid = Grid::default();
        let a = exhaustive(&f, 3, &grid);
        let b = pattern_search(&f, 3, &grid);
        assert_eq!(a.index, b.index);
        assert!(a.value.abs() < 1e-12);
    }

    #[test]
    fn refine_reaches_continuous_minimum() {
        let fg = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 0.3);
            g[1] = 2.0 * (x[1] + 0.1);
            (x[0] - 0.3).powi(2) + (x[1] + 0.1).powi(2)
        };
        let (x, v) = refine(&fg, &[0.0, 0.0], 200);
        assert!(v < 1e-16);
        assert!((x[0] - 0.3).abs() < 1e-8);
    }
}
