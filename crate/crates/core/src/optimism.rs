//! Expected training, test-set and out-of-sample error of a linear smoother,
//! and the optimism terms separating them.
//!
//! For responses `Y ~ (μ, Σ)` and fitted values `Ŷ = HY` the expected errors,
//! all normalised by `1/n`, decompose as
//!
//! ```text
//! Err  = tr Σ/n + ‖μ − Hμ‖²/n + tr(HΣHᵀ)/n          (new independent draw)
//! err  = Err − (2/n) tr(HΣ)                           (same draw)
//! test = Err − (2/n) tr(C Hᵀ),  C = Cov(Y_test, Y_train)
//! ```
//!
//! [`analytic_decomposition`] evaluates these on explicit matrices;
//! [`closed_form_equicorrelated_ols`] is the same quantity for an
//! orthogonal-with-intercept design under equicorrelation, and
//! [`monte_carlo_errors`] estimates all three by simulation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{ar1_autocovariance, CovarianceSpec};
use crate::designs::DesignMatrix;
use crate::error::{dim, Error, Result};
use crate::sampling::{MvnSampler, PairedSampler, SeededStream};
use crate::smoothers::LinearSmoother;
use crate::stats::mean_and_se;

/// Components of expected error, in squared response units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDecomposition {
    /// `tr Σ / n`.
    pub irreducible: f64,
    /// `‖μ − E Ŷ‖² / n`.
    pub squared_bias: f64,
    /// `tr(HΣHᵀ) / n`.
    pub estimator_variance: f64,
    /// `(2/n) tr(HΣ)`.
    pub optimism_train: f64,
    /// `(2/n) tr(C Hᵀ)`.
    pub optimism_test: f64,
    pub expected_train: f64,
    pub expected_test: f64,
    pub expected_oos: f64,
}

impl ErrorDecomposition {
    /// Assembles the expected errors from their components.
    pub fn from_components(
        irreducible: f64,
        squared_bias: f64,
        estimator_variance: f64,
        optimism_train: f64,
        optimism_test: f64,
    ) -> Self {
        let expected_oos = irreducible + squared_bias + estimator_variance;
        Self {
            irreducible,
            squared_bias,
            estimator_variance,
            optimism_train,
            optimism_test,
            expected_train: expected_oos - optimism_train,
            expected_test: expected_oos - optimism_test,
            expected_oos,
        }
    }

    /// `(name, value)` pairs in reporting order.
    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("irreducible", self.irreducible),
            ("squared_bias", self.squared_bias),
            ("estimator_variance", self.estimator_variance),
            ("optimism_train", self.optimism_train),
            ("optimism_test", self.optimism_test),
            ("expected_train", self.expected_train),
            ("expected_test", self.expected_test),
            ("expected_oos", self.expected_oos),
        ]
    }

    /// Largest absolute difference over all fields.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields().iter())
            .map(|((_, a), (_, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `Σᵢⱼ Aᵢⱼ Bᵢⱼ = tr(A Bᵀ)`.
fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Exact decomposition for mean `μ`, smoother `H`, covariance `Σ` and
/// test/training cross-covariance `C = Cov(Y_test, Y_train)`; `None` means an
/// independent test draw.
pub fn analytic_decomposition(
    mu: &DVector<f64>,
    smoother: &LinearSmoother,
    sigma: &DMatrix<f64>,
    cross: Option<&DMatrix<f64>>,
) -> Result<ErrorDecomposition> {
    let n = mu.len();
    if smoother.dim() != n || sigma.shape() != (n, n) {
        return Err(dim(format!(
            "mean length {n}, smoother {}x{0}, covariance {:?} disagree",
            smoother.dim(),
            sigma.shape()
        )));
    }
    if let Some(c) = cross {
        if c.shape() != (n, n) {
            return Err(dim(format!("cross covariance {:?} is not {n}x{n}", c.shape())));
        }
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale || sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }

    let h = smoother.matrix();
    let nf = n as f64;
    let h_sigma = h * sigma;
    let bias = mu - h * mu;
    let optimism_test = match cross {
        Some(c) => 2.0 * frobenius_inner(c, h) / nf,
        None => 0.0,
    };
    Ok(ErrorDecomposition::from_components(
        sigma.trace() / nf,
        bias.norm_squared() / nf,
        frobenius_inner(&h_sigma, h) / nf,
        2.0 * h_sigma.trace() / nf,
        optimism_test,
    ))
}

/// Closed form for OLS on an orthogonal design with intercept, `d + 1`
/// columns, equicorrelated errors and a paired test copy with cross
/// correlation `ρ`:
///
/// * `tr(HΣ) = tr(HΣHᵀ) = σ²((1 − ρ)(d + 1) + ρn)` because `H1 = 1`;
/// * test optimism `2ρσ²`;
/// * squared bias zero (correctly specified mean).
pub fn closed_form_equicorrelated_ols(
    n: usize,
    degree: usize,
    rho: f64,
    sigma2: f64,
) -> Result<ErrorDecomposition> {
    CovarianceSpec::Equicorrelated { sigma2, rho, n }.validate()?;
    if degree + 1 > n {
        return Err(dim(format!("degree {degree} needs more than {n} observations")));
    }
    let nf = n as f64;
    let trace_h_sigma = sigma2 * ((1.0 - rho) * (degree as f64 + 1.0) + rho * nf);
    Ok(ErrorDecomposition::from_components(
        sigma2,
        0.0,
        trace_h_sigma / nf,
        2.0 * trace_h_sigma / nf,
        2.0 * rho * sigma2,
    ))
}

/// Covariance between a held-out AR(1) value `Y_t` and its symmetric
/// k-nearest-neighbour fit when all `k` neighbours are in training: the
/// average of `γ(j)` over lags `j = 1..=k/2`. For `k = 2` this is
/// `σ²φ/(1 − φ²)`; for `k = 4` it is `σ²(φ + φ²)/(2(1 − φ²))`.
pub fn closed_form_ar1_knn_covariance(phi: f64, sigma2: f64, k: usize) -> Result<f64> {
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("k must be a positive even integer, got {k}")));
    }
    let half = k / 2;
    let mut total = 0.0;
    for lag in 1..=half {
        total += ar1_autocovariance(phi, sigma2, lag as i64)?;
    }
    Ok(total / half as f64)
}

/// Mean and Monte Carlo standard error of a simulated quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub mc_se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, mc_se) = mean_and_se(values);
        Self { mean, mc_se }
    }
}

/// Per-replication mean squared errors from [`monte_carlo_errors`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloErrors {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    pub oos: Vec<f64>,
}

impl MonteCarloErrors {
    pub fn reps(&self) -> usize {
        self.train.len()
    }

    pub fn train_summary(&self) -> Summary {
        Summary::of(&self.train)
    }

    pub fn test_summary(&self) -> Summary {
        Summary::of(&self.test)
    }

    pub fn oos_summary(&self) -> Summary {
        Summary::of(&self.oos)
    }

    /// CSV with header `rep,train_mse,test_mse,oos_mse`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rep,train_mse,test_mse,oos_mse")?;
        for r in 0..self.reps() {
            writeln!(out, "{r},{},{},{}", self.train[r], self.test[r], self.oos[r])?;
        }
        Ok(())
    }
}

fn mse(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared() / a.len() as f64
}

/// Simulates the paired fixed-X model `reps` times.
///
/// Replication `r` uses stream `(seed, r)`: one joint draw of
/// `(y_train, y_test)`, then an independent `y*` from the marginal
/// `N(Xβ, Σ)` with the cross correlation removed. The smoother is fit to
/// `y_train`; errors are mean squared residuals against each response.
/// Replications run on the current rayon pool and are returned in index
/// order, so results do not depend on the thread count.
pub fn monte_carlo_errors(
    x: &DesignMatrix,
    beta: &DVector<f64>,
    cov: &CovarianceSpec,
    smoother: &LinearSmoother,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloErrors> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if smoother.dim() != x.nrows() {
        return Err(dim(format!(
            "smoother size {} does not match {} design rows",
            smoother.dim(),
            x.nrows()
        )));
    }
    let paired = PairedSampler::new(x, beta, cov)?;
    let marginal = MvnSampler::new(x.mean_response(beta)?, &cov.marginal().materialize()?)?;

    let rows: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut stream = SeededStream::new(seed, r as u64);
            let draw = paired.sample(&mut stream);
            let y_new = marginal.sample(&mut stream);
            let fitted = smoother.matrix() * &draw.y_train;
            (
                mse(&draw.y_train, &fitted),
                mse(&draw.y_test, &fitted),
                mse(&y_new, &fitted),
            )
        })
        .collect();

    Ok(MonteCarloErrors {
        train: rows.iter().map(|r| r.0).collect(),
        test: rows.iter().map(|r| r.1).collect(),
        oos: rows.iter().map(|r| r.2).collect(),
    })
}
