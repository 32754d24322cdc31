//! Small numeric helpers shared by the kernels, the sampler and the effect
//! post-processing.

use std::f64::consts::PI;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn log1p_exp(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// `log logistic(z)`.
#[inline]
pub fn log_logistic(z: f64) -> f64 {
    -log1p_exp(-z)
}

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Log of `sum(exp(values))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `exp(log_weights)`.
///
/// Returns `None` when every weight is zero or non-finite.
pub fn sample_log_weights<R: rand::Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| !w.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_weights
        .iter()
        .map(|w| if w.is_nan() { 0.0 } else { (w - max).exp() })
        .sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (idx, w) in log_weights.iter().enumerate() {
        if w.is_nan() {
            continue;
        }
        let p = (w - max).exp();
        if p > 0.0 {
            last = Some(idx);
        }
        if u < p {
            return Some(idx);
        }
        u -= p;
    }
    last
}

/// Draws an index with probability proportional to non-negative `weights`.
pub fn sample_weights<R: rand::Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (idx, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = Some(idx);
        }
        if u < w {
            return Some(idx);
        }
        u -= w;
    }
    last
}

/// Linear-interpolation sample quantile (Hyndman–Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the `n - 1` divisor.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Density of a scaled, shifted Student-t with `df` degrees of freedom.
pub fn student_t_logpdf(x: f64, df: f64, loc: f64, scale2: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let z2 = (x - loc) * (x - loc) / scale2;
    ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * PI * scale2).ln()
        - (df + 1.0) / 2.0 * (1.0 + z2 / df).ln()
}
