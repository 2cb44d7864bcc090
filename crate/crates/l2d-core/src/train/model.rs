use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::math;
use crate::synth::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case", deny_unknown_fields)]
pub enum Arch {
    Linear,
    /// One hidden rectifier layer.
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self { arch: Arch::Linear, input_dim, output_dim, seed: 0 }
    }

    pub fn n_params(&self) -> usize {
        let (d, o) = (self.input_dim, self.output_dim);
        match self.arch {
            Arch::Linear => o * d + o,
            Arch::Mlp { hidden: h } => h * d + h + o * h + o,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            bail!(InvalidConfig, "model dims must be >= 1");
        }
        if let Arch::Mlp { hidden: 0 } = self.arch {
            bail!(InvalidConfig, "hidden width must be >= 1");
        }
        Ok(())
    }
}

/// Parameters in row-major blocks. Linear: `W[o×d], b[o]`. MLP:
/// `W1[h×d], b1[h], W2[o×h], b2[o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<f64>,
}

/// Per-sample activations kept between forward and backward passes.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    hidden: Vec<f64>,
}

impl Model {
    /// Linear models start at zero; MLPs draw the hidden layer from
    /// `N(0, 2/d)` and start the output layer at zero.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = vec![0.0; spec.n_params()];
        if let Arch::Mlp { hidden } = spec.arch {
            let mut rng = rng_for(spec.seed, 0);
            let sd = math::sqrt(2.0 / spec.input_dim as f64);
            for w in &mut params[..hidden * spec.input_dim] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = sd * z;
            }
        }
        Ok(Self { spec, params })
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        let (d, o) = (self.spec.input_dim, self.spec.output_dim);
        match self.spec.arch {
            Arch::Linear => affine(&self.params[..o * d], &self.params[o * d..], x, out),
            Arch::Mlp { hidden: h } => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(o * h);
                scratch.hidden.resize(h, 0.0);
                affine(w1, b1, x, &mut scratch.hidden);
                for a in &mut scratch.hidden {
                    *a = a.max(0.0);
                }
                affine(w2, b2, &scratch.hidden, out);
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.output_dim];
        self.forward(x, &mut out, &mut Scratch::default());
        out
    }

    /// Adds `∂(dout·f(x))/∂θ` to `grad`; `scratch` must hold the forward pass of `x`.
    pub fn backward(&self, x: &[f64], dout: &[f64], scratch: &Scratch, grad: &mut [f64]) {
        let (d, o) = (self.spec.input_dim, self.spec.output_dim);
        match self.spec.arch {
            Arch::Linear => {
                let (gw, gb) = grad.split_at_mut(o * d);
                outer_add(gw, gb, dout, x);
            }
            Arch::Mlp { hidden: h } => {
                let w2 = &self.params[h * d + h..h * d + h + o * h];
                let (g1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (g2, gb2) = rest.split_at_mut(o * h);
                outer_add(g2, gb2, dout, &scratch.hidden);
                let mut dh = vec![0.0; h];
                for (k, &dk) in dout.iter().enumerate() {
                    for (i, dhi) in dh.iter_mut().enumerate() {
                        *dhi += dk * w2[k * h + i];
                    }
                }
                for (i, dhi) in dh.iter_mut().enumerate() {
                    if scratch.hidden[i] <= 0.0 {
                        *dhi = 0.0;
                    }
                }
                outer_add(g1, gb1, &dh, x);
            }
        }
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.params {
            for b in p.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        *o = b[k] + w[k * d..(k + 1) * d].iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

fn outer_add(gw: &mut [f64], gb: &mut [f64], dout: &[f64], x: &[f64]) {
    let d = x.len();
    for (k, &dk) in dout.iter().enumerate() {
        if dk == 0.0 {
            continue;
        }
        gb[k] += dk;
        for (g, &xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
            *g += dk * xi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let spec = ModelSpec { arch: Arch::Mlp { hidden: 4 }, input_dim: 3, output_dim: 2, seed: 3 };
        let mut m = Model::init(spec).unwrap();
        for (i, p) in m.params.iter_mut().enumerate() {
            *p += 0.1 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
        }
        let x = [0.3, -0.7, 1.1];
        let dout = [0.5, -1.5];
        let mut s = Scratch::default();
        let mut out = [0.0; 2];
        m.forward(&x, &mut out, &mut s);
        let mut g = vec![0.0; spec.n_params()];
        m.backward(&x, &dout, &s, &mut g);
        for i in 0..g.len() {
            let keep = m.params[i];
            m.params[i] = keep + 1e-6;
            let up: f64 = m.predict(&x).iter().zip(&dout).map(|(a, b)| a * b).sum();
            m.params[i] = keep - 1e-6;
            let dn: f64 = m.predict(&x).iter().zip(&dout).map(|(a, b)| a * b).sum();
            m.params[i] = keep;
            assert!((g[i] - (up - dn) / 2e-6).abs() < 1e-6, "param {i}");
        }
    }

    #[test]
    fn checksum_tracks_parameters() {
        let m = Model::init(ModelSpec::linear(2, 3)).unwrap();
        let mut n = m.clone();
        assert_eq!(m.checksum(), n.checksum());
        n.params[0] = 1e-300;
        assert_ne!(m.checksum(), n.checksum());
    }
}
