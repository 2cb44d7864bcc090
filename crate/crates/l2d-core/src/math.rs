//! Thin float helpers over `libm` plus the stable softmax primitives.

use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn ln1p(x: f64) -> f64 {
    libm::log1p(x)
}
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln1p(exp(-x))
    } else {
        ln1p(exp(x))
    }
}

/// Logistic sigmoid `1 / (1 + e^{-x})`, stable on both tails.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Largest entry; `-inf` for an empty slice.
pub fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `log Σ e^{x_i}` with max-shift.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = max(xs);
    if !m.is_finite() {
        return m;
    }
    m + ln(xs.iter().map(|&x| exp(x - m)).sum::<f64>())
}

/// Softmax written into `out`; returns the log-sum-exp.
pub fn softmax_into(xs: &[f64], out: &mut [f64]) -> f64 {
    let m = max(xs);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = exp(x - m);
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    m + ln(z)
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; xs.len()];
    softmax_into(xs, &mut out);
    out
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v < xs[best] {
            best = i;
        }
    }
    best
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero below two samples.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for i in -40..=40 {
            let x = i as f64 * 0.5;
            assert!((softplus(x) - ln(1.0 + exp(x))).abs() < 1e-12);
        }
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn log_sum_exp_is_shift_stable() {
        let a = log_sum_exp(&[1000.0, 1000.0]);
        assert!((a - (1000.0 + ln(2.0))).abs() < 1e-9);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmin(&[2.0, 0.5, 0.5]), 1);
    }
}
