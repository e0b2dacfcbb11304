//! Ridge-regularized sequential threshold least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

fn default_max_iterations() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Coefficients with magnitude below this are pruned.
    pub threshold: f64,
    /// Weight of the `||c||^2` penalty.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl FitConfig {
    pub fn new(threshold: f64, lambda: f64) -> Result<Self> {
        let cfg = Self {
            threshold,
            lambda,
            max_iterations: default_max_iterations(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "coefficient threshold must be nonnegative, got {}",
                self.threshold
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "regularization weight must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// Every retained coefficient clears the threshold.
    Converged,
    /// All columns were pruned; the coefficients are zero.
    EmptySupport,
    /// Stopped at `max_iterations`; sub-threshold entries were zeroed.
    IterationLimit,
}

/// Dense-length coefficient vector with an explicit support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    values: DVector<f64>,
    support: Vec<usize>,
    status: FitStatus,
}

impl SparseCoefficients {
    /// Builds from `(index, value)` pairs; indices must be strictly increasing and `< len`.
    pub fn from_sparse(
        len: usize,
        support: Vec<usize>,
        nonzeros: &[f64],
        status: FitStatus,
    ) -> Result<Self> {
        if support.len() != nonzeros.len() {
            return Err(argument("support and values differ in length"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) || support.last().is_some_and(|&i| i >= len) {
            return Err(argument("support indices must be increasing and in range"));
        }
        let mut values = DVector::zeros(len);
        for (&i, &v) in support.iter().zip(nonzeros) {
            values[i] = v;
        }
        Ok(Self {
            values,
            support,
            status,
        })
    }

    pub fn zeros(len: usize, status: FitStatus) -> Self {
        Self {
            values: DVector::zeros(len),
            support: Vec::new(),
            status,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn nonzeros(&self) -> Vec<f64> {
        self.support.iter().map(|&i| self.values[i]).collect()
    }

    pub fn status(&self) -> FitStatus {
        self.status
    }
}

fn check_finite(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    if g.nrows() == 0 || g.ncols() == 0 {
        return Err(argument(
            "design matrix must have at least one row and column",
        ));
    }
    if g.nrows() != b.len() {
        return Err(argument(format!(
            "design has {} rows but target has {}",
            g.nrows(),
            b.len()
        )));
    }
    if g.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(argument("non-finite entry in regression data"));
    }
    Ok(())
}

fn svd_least_squares(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * g.nrows().max(g.ncols()) as f64 * f64::EPSILON;
    svd.solve(b, eps)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))
}

/// Unregularized least squares through Householder QR, falling back to the
/// minimum-norm SVD solution when `G` is wide or numerically rank deficient.
fn least_squares(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if g.nrows() < g.ncols() {
        return svd_least_squares(g, b);
    }
    let qr = g.clone().qr();
    let r = qr.r();
    let diag = r.diagonal().abs();
    let scale = diag.max();
    let tol = scale * g.nrows() as f64 * f64::EPSILON;
    if scale == 0.0 || diag.iter().any(|&d| d <= tol) {
        return svd_least_squares(g, b);
    }
    let qtb = qr.q().tr_mul(b);
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

fn solve_gram(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    match gram.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => svd_least_squares(&gram, rhs),
    }
}

/// Minimizer of `||G c - b||^2 + lambda ||c||^2`.
pub fn ridge_solve(g: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_finite(g, b)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(argument(format!(
            "regularization weight must be nonnegative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return least_squares(g, b);
    }
    let mut gram = g.tr_mul(g);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    solve_gram(gram, &g.tr_mul(b))
}

/// Sequential threshold least squares. Each pass solves the ridge problem on
/// the current support and drops the single smallest-magnitude coefficient
/// below `cfg.threshold` (lowest column index on ties).
pub fn stlsq(g: &DMatrix<f64>, b: &DVector<f64>, cfg: &FitConfig) -> Result<SparseCoefficients> {
    check_finite(g, b)?;
    cfg.validate()?;
    let ncols = g.ncols();
    // With a penalty the normal equations are reused across passes.
    let normal = (cfg.lambda > 0.0).then(|| (g.tr_mul(g), g.tr_mul(b)));

    let mut support: Vec<usize> = (0..ncols).collect();
    let mut iterations = 0;
    loop {
        if support.is_empty() {
            log::warn!("sequential thresholding pruned every column");
            return Ok(SparseCoefficients::zeros(ncols, FitStatus::EmptySupport));
        }
        let c = match &normal {
            Some((gram, rhs)) => {
                let k = support.len();
                let mut sub = DMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
                for i in 0..k {
                    sub[(i, i)] += cfg.lambda;
                }
                let sub_rhs = DVector::from_fn(k, |i, _| rhs[support[i]]);
                solve_gram(sub, &sub_rhs)?
            }
            None => least_squares(&g.select_columns(&support), b)?,
        };
        iterations += 1;

        let weakest = c
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() < cfg.threshold)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);

        match weakest {
            None => {
                let values: Vec<f64> = c.iter().copied().collect();
                return SparseCoefficients::from_sparse(
                    ncols,
                    support,
                    &values,
                    FitStatus::Converged,
                );
            }
            Some(_) if iterations >= cfg.max_iterations => {
                log::warn!("sequential thresholding hit the iteration limit");
                let (kept, values): (Vec<usize>, Vec<f64>) = support
                    .iter()
                    .zip(c.iter())
                    .filter(|(_, v)| v.abs() >= cfg.threshold)
                    .map(|(&i, &v)| (i, v))
                    .unzip();
                return SparseCoefficients::from_sparse(
                    ncols,
                    kept,
                    &values,
                    FitStatus::IterationLimit,
                );
            }
            Some(i) => {
                support.remove(i);
            }
        }
    }
}
