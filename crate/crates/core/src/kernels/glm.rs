//! Pooled maximum-likelihood GLM used to centre the coefficient prior.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, VariableKind};
use crate::error::{Error, Result};
use crate::math::logistic;

const MAX_IRLS_ITERATIONS: usize = 100;
const IRLS_TOLERANCE: f64 = 1e-10;
const DIVERGENCE_BOUND: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GlmFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
}

/// Design row `(1, treatment indicators for levels 1..q, covariates)`.
pub fn design_row(a: usize, l: &[f64], q: usize) -> Vec<f64> {
    let mut x = vec![0.0; q + l.len()];
    x[0] = 1.0;
    if a > 0 {
        x[a] = 1.0;
    }
    x[q..].copy_from_slice(l);
    x
}

/// Design matrix over complete-case rows, plus the matching outcomes.
pub fn design_matrix(data: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    let q = data.schema().treatment_levels();
    let rows: Vec<usize> = (0..data.n())
        .filter(|&i| (0..data.p()).all(|r| !data.is_missing(i, r)))
        .collect();
    let d = q + data.p();
    let x = DMatrix::from_fn(rows.len(), d, |k, c| {
        let i = rows[k];
        match c {
            0 => 1.0,
            c if c < q => f64::from(u8::from(data.a()[i] == c)),
            c => data.row(i)[c - q],
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y()[i]));
    (x, y)
}

/// Maximum-likelihood fit of `Y` on the design: IRLS for a binary outcome,
/// least squares for a continuous one. Rows with a missing covariate are
/// dropped.
pub fn fit_reference_glm(data: &Dataset) -> Result<GlmFit> {
    let (x, y) = design_matrix(data);
    if x.nrows() < x.ncols() {
        return Err(Error::Singular(format!(
            "{} complete rows for {} coefficients",
            x.nrows(),
            x.ncols()
        )));
    }
    match data.schema().outcome_kind() {
        VariableKind::Continuous => least_squares(&x, &y),
        VariableKind::Binary => logistic_irls(&x, &y),
    }
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GlmFit> {
    let qr = x.clone().qr();
    let r = qr.r();
    if (0..r.ncols()).any(|k| r[(k, k)].abs() < 1e-10 * (1.0 + r[(0, 0)].abs())) {
        return Err(Error::Singular("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("design matrix is rank deficient".into()))?;
    Ok(GlmFit {
        beta: beta.iter().copied().collect(),
        iterations: 1,
    })
}

/// Logistic maximum likelihood by iteratively reweighted least squares.
pub fn logistic_irls(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<GlmFit> {
    penalized_logistic_irls(x, y, 0.0)
}

/// Penalty used when the unpenalized reference fit separates or is
/// singular.
pub const RIDGE_FALLBACK: f64 = 1.0;

/// Like [`fit_reference_glm`] but maximizes the likelihood minus
/// `lambda / 2 * |beta_slopes|^2`; the intercept is unpenalized.
pub fn fit_reference_glm_ridge(data: &Dataset, lambda: f64) -> Result<GlmFit> {
    let (x, y) = design_matrix(data);
    if x.nrows() == 0 {
        return Err(Error::Singular("no complete rows".into()));
    }
    match data.schema().outcome_kind() {
        VariableKind::Continuous => {
            let mut xtx = x.transpose() * &x;
            for k in 1..xtx.ncols() {
                xtx[(k, k)] += lambda;
            }
            let beta = xtx
                .cholesky()
                .ok_or_else(|| Error::Singular("penalized normal equations are not positive definite".into()))?
                .solve(&(x.transpose() * &y));
            Ok(GlmFit {
                beta: beta.iter().copied().collect(),
                iterations: 1,
            })
        }
        VariableKind::Binary => penalized_logistic_irls(&x, &y, lambda),
    }
}

/// Reference fit with fallbacks: the plain MLE when it exists, otherwise
/// the [`RIDGE_FALLBACK`]-penalized fit. The ridge cannot rescue an
/// unpenalized intercept when the complete cases share one outcome value,
/// which selective missingness can produce; the same two fits are then
/// repeated on all rows with missing covariates set to their observed
/// means.
pub fn fit_reference_glm_or_ridge(data: &Dataset) -> Result<GlmFit> {
    match mle_or_ridge(data) {
        Err(e) if data.missing_count() > 0 && is_fit_failure(&e) => mle_or_ridge(&data.mean_filled()),
        other => other,
    }
}

fn is_fit_failure(e: &Error) -> bool {
    matches!(e, Error::Separation { .. } | Error::Singular(_) | Error::NonConvergence { .. })
}

fn mle_or_ridge(data: &Dataset) -> Result<GlmFit> {
    match fit_reference_glm(data) {
        Err(e) if is_fit_failure(&e) => fit_reference_glm_ridge(data, RIDGE_FALLBACK),
        other => other,
    }
}

fn penalized_logistic_irls(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<GlmFit> {
    let (n, d) = x.shape();
    let mut beta = DVector::<f64>::zeros(d);
    for iteration in 1..=MAX_IRLS_ITERATIONS {
        let eta = x * &beta;
        let mut xtwx = DMatrix::<f64>::zeros(d, d);
        let mut score = DVector::<f64>::zeros(d);
        for i in 0..n {
            let p = logistic(eta[i]);
            let w = (p * (1.0 - p)).max(1e-12);
            let row = x.row(i);
            for r in 0..d {
                score[r] += row[r] * (y[i] - p);
                let wr = w * row[r];
                for c in 0..=r {
                    xtwx[(r, c)] += wr * row[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                xtwx[(c, r)] = xtwx[(r, c)];
            }
        }
        for k in 1..d {
            xtwx[(k, k)] += lambda;
            score[k] -= lambda * beta[k];
        }
        let step = xtwx
            .cholesky()
            .ok_or_else(|| Error::Singular("weighted design matrix is not positive definite".into()))?
            .solve(&score);
        beta += &step;
        if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND || !b.is_finite()) {
            return Err(Error::Separation {
                last: beta.iter().copied().collect(),
            });
        }
        if step.amax() < IRLS_TOLERANCE {
            return Ok(GlmFit {
                beta: beta.iter().copied().collect(),
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_IRLS_ITERATIONS,
        last: beta.iter().copied().collect(),
    })
}
