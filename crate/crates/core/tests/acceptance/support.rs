//! Reporting and small statistics shared by the criteria.

use std::io::Write;

use edpcausal::diagnostics::effective_sample_size;

/// Outcome of one check.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub id: String,
    pub pass: bool,
}

/// Prints one `ID PASS|FAIL: detail` line and returns the verdict.
pub fn report(id: impl Into<String>, pass: bool, detail: impl AsRef<str>) -> Verdict {
    let id = id.into();
    println!("{id} {}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stdout().flush();
    Verdict { id, pass }
}

/// Progress notes for long runs; never a verdict.
pub fn note(msg: impl AsRef<str>) {
    println!("    {}", msg.as_ref());
    let _ = std::io::stdout().flush();
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Monte Carlo standard error of the mean of an autocorrelated trace.
/// A constant trace has zero error.
pub fn mcse(trace: &[f64]) -> f64 {
    let v = var(trace);
    if v == 0.0 {
        return 0.0;
    }
    let ess = effective_sample_size(trace).unwrap_or(1.0).max(1.0);
    (v / ess).sqrt()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(x)`, stable in both tails.
pub fn ln_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}
