use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::base::{BinaryPhi, ConstrainedInner, MulticlassFamily, SumInner};
use crate::error::Result;
use crate::surrogate::{evaluate, kink_distance, Psi, Sample, SurrogateSpec};

/// Owned counterpart of [`Sample`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OwnedSample {
    pub y: usize,
    pub c: f64,
    pub costs: Vec<f64>,
    pub frozen: Vec<f64>,
    pub correct: bool,
    pub base_loss: f64,
}

impl OwnedSample {
    pub fn view(&self) -> Sample<'_> {
        Sample {
            y: self.y,
            c: self.c,
            costs: &self.costs,
            frozen: &self.frozen,
            correct: self.correct,
            base_loss: self.base_loss,
        }
    }
}

/// Maximum over coordinates of `|analytic − central FD| / max(1, |analytic|)`.
pub fn fd_check(spec: &SurrogateSpec, n: usize, sample: &Sample<'_>, point: &[f64], step: f64) -> Result<f64> {
    let mut g = vec![0.0; point.len()];
    evaluate(spec, n, sample, point, Some(&mut g))?;
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let up = evaluate(spec, n, sample, &x, None)?;
        x[i] = point[i] - step;
        let down = evaluate(spec, n, sample, &x, None)?;
        x[i] = point[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
    }
    Ok(worst)
}

/// One random configuration for the gradient checker.
#[derive(Debug, Clone, PartialEq)]
pub struct FdCase {
    pub spec: SurrogateSpec,
    pub n: usize,
    pub sample: OwnedSample,
    pub point: Vec<f64>,
}

fn needs_binary(spec: &SurrogateSpec) -> bool {
    matches!(
        spec,
        SurrogateSpec::RegSingle { family: MulticlassFamily::Binary { .. } }
            | SurrogateSpec::RegTwoStage { family: MulticlassFamily::Binary { .. } }
            | SurrogateSpec::DeferTwoStageScore { family: MulticlassFamily::Binary { .. } }
            | SurrogateSpec::DeferTwoStagePr { family: MulticlassFamily::Binary { .. } }
    )
}

/// Draws a configuration whose point is farther than `min_kink` from every
/// kink of `spec`.
pub fn random_fd_case<R: Rng>(spec: &SurrogateSpec, rng: &mut R, min_kink: f64) -> FdCase {
    loop {
        let n = match spec {
            SurrogateSpec::PrSingle { ell: MulticlassFamily::Binary { .. }, .. } => 2,
            _ => rng.random_range(2..=4),
        };
        let n_e = if needs_binary(spec) || matches!(spec, SurrogateSpec::RegSingleExpert { .. }) {
            1
        } else if matches!(spec, SurrogateSpec::AbstainLMu { .. } | SurrogateSpec::AbstainTwoStage { .. } | SurrogateSpec::PrSingle { .. } | SurrogateSpec::PrTwoStage { .. }) {
            0
        } else {
            rng.random_range(1..=3)
        };
        let mut s = OwnedSample {
            y: rng.random_range(0..n),
            c: rng.random_range(0.05..0.95),
            costs: (0..n_e).map(|_| rng.random_range(0.0..1.0)).collect(),
            frozen: Vec::new(),
            correct: rng.random_bool(0.5),
            base_loss: rng.random_range(0.0..3.0),
        };
        match spec {
            SurrogateSpec::AbstainTwoStage { .. } => s.frozen = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
            SurrogateSpec::DeferTwoStageScore { .. } => s.frozen = vec![rng.random_range(-3.0..3.0)],
            SurrogateSpec::RegSingleExpert { .. } => {}
            _ => {}
        }
        let len = spec.point_len(n, n_e);
        let mut point: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        match spec {
            SurrogateSpec::RegSingle { .. } => point[len - 1] = rng.random_range(0.1..3.0),
            SurrogateSpec::RegSingleExpert { .. } => point[1] = rng.random_range(0.1..3.0),
            _ => {}
        }
        if spec.validate(n, n_e).is_err() {
            continue;
        }
        if kink_distance(spec, n, &s.view(), &point) > min_kink {
            return FdCase { spec: *spec, n, sample: s, point };
        }
    }
}

/// Every surrogate tag instantiated with each base family or Φ it supports.
pub fn default_surrogate_suite() -> Vec<SurrogateSpec> {
    let phis = BinaryPhi::ALL_DEFAULT;
    let comp = [MulticlassFamily::LOG, MulticlassFamily::EXP, MulticlassFamily::GCE, MulticlassFamily::MAE];
    let sums = [
        MulticlassFamily::SumLoss { inner: SumInner::Sq },
        MulticlassFamily::SumLoss { inner: SumInner::Exp },
        MulticlassFamily::SumLoss { inner: SumInner::Rho { rho: 1.0 } },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Hinge },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Sq },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Exp },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Rho { rho: 1.0 } },
    ];
    let mut out = Vec::new();
    for mu in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        out.push(SurrogateSpec::AbstainLMu { mu });
    }
    for phi in phis {
        out.push(SurrogateSpec::AbstainTwoStage { phi });
    }
    let e = BinaryPhi::Exp;
    out.push(SurrogateSpec::PrSingle { ell: MulticlassFamily::MAE, psi: Psi::Identity, phi: e, alpha_s: 1.0, beta_s: 1.0 });
    out.push(SurrogateSpec::PrSingle { ell: MulticlassFamily::Margin { rho: 1.0 }, psi: Psi::Identity, phi: e, alpha_s: 1.0, beta_s: 1.0 });
    out.push(SurrogateSpec::PrSingle {
        ell: MulticlassFamily::Constrained { inner: ConstrainedInner::RhoHinge { rho: 1.0 } },
        psi: Psi::ClassCount,
        phi: e,
        alpha_s: 1.0,
        beta_s: 1.0,
    });
    out.push(SurrogateSpec::PrSingle { ell: MulticlassFamily::LOG, psi: Psi::Identity, phi: e, alpha_s: 1.0, beta_s: 2.0 });
    for phi in phis {
        out.push(SurrogateSpec::PrTwoStage { phi });
    }
    for f in comp.iter().chain(&sums) {
        out.push(SurrogateSpec::DeferSingle { family: *f });
    }
    for f in comp {
        out.push(SurrogateSpec::DeferTwoStageScore { family: f });
    }
    for f in comp {
        out.push(SurrogateSpec::DeferTwoStagePr { family: f });
    }
    for f in comp.iter().chain(&[MulticlassFamily::Log2, MulticlassFamily::Binary { phi: e }]) {
        out.push(SurrogateSpec::RegSingle { family: *f });
        out.push(SurrogateSpec::RegTwoStage { family: *f });
    }
    for phi in phis {
        out.push(SurrogateSpec::RegSingleExpert { phi });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rng_for;

    #[test]
    fn fd_examples() {
        let mut rng = rng_for(7, 0);
        let case = random_fd_case(&SurrogateSpec::AbstainLMu { mu: 1.0 }, &mut rng, 1e-4);
        let e = fd_check(&case.spec, case.n, &case.sample.view(), &case.point, 1e-5).unwrap();
        assert!(e < 1e-5);
        let spec = SurrogateSpec::PrTwoStage { phi: BinaryPhi::Hinge };
        let s = OwnedSample { c: 0.3, correct: false, ..Default::default() };
        assert!(fd_check(&spec, 2, &s.view(), &[1.5], 1e-5).unwrap() < 1e-5);
        // Symmetric point of the exp pr loss with c = 1: zero gradient.
        let spec = SurrogateSpec::PrTwoStage { phi: BinaryPhi::Exp };
        let s = OwnedSample { c: 1.0, correct: false, ..Default::default() };
        assert!(fd_check(&spec, 2, &s.view(), &[0.0], 1e-5).unwrap() < 1e-9);
    }

    #[test]
    fn suite_covers_every_tag() {
        let tags: alloc::collections::BTreeSet<_> = default_surrogate_suite().iter().map(|s| s.tag()).collect();
        assert_eq!(tags.len(), 10);
    }
}
