//! Fitting estimators over split plans, comparing cross-validation schemes
//! with true out-of-sample error, and two auxiliary procedures: McNemar's
//! paired test and Meng's decomposition of estimation error.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

use crate::covariance::CovarianceSpec;
use crate::designs::{equally_spaced, least_squares, orthogonal_polynomial_features, DesignMatrix};
use crate::error::{dim, Error, Result};
use crate::optimism::Summary;
use crate::sampling::{sample_ar1, MvnSampler, SeededStream};
use crate::smoothers::knn_smoother;
use crate::splitters::{kfold, leave_one_out, non_dependent_cv, temporal_block, SplitPlan};

/// An estimator ready to be fit on the training rows of a plan.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    /// Least squares on the given design.
    Ols(&'a DesignMatrix),
    /// Average of the `k` training observations nearest in index order.
    Knn { k: usize },
}

/// Mean squared errors on the training and test rows of one plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitErrors {
    pub train: f64,
    pub test: f64,
}

/// Mean of `y` over the `k` members of `pool` closest to `t` in index
/// distance, skipping `t` itself; ties go to the smaller index. `pool` must
/// be sorted.
fn knn_predict(y: &DVector<f64>, pool: &[usize], t: usize, k: usize) -> Option<f64> {
    let split = pool.partition_point(|&i| i < t);
    let mut left = split;
    let mut right = if pool.get(split) == Some(&t) { split + 1 } else { split };
    let (mut sum, mut used) = (0.0, 0usize);
    while used < k {
        let l = left.checked_sub(1).map(|i| pool[i]);
        let r = pool.get(right).copied();
        let pick = match (l, r) {
            (Some(a), Some(b)) => {
                if t - a <= b - t {
                    left -= 1;
                    a
                } else {
                    right += 1;
                    b
                }
            }
            (Some(a), None) => {
                left -= 1;
                a
            }
            (None, Some(b)) => {
                right += 1;
                b
            }
            (None, None) => break,
        };
        sum += y[pick];
        used += 1;
    }
    (used > 0).then(|| sum / used as f64)
}

/// Fits on `plan.train()` only and scores the training and test rows.
///
/// OLS predicts test rows with `X_test β̂`. k-NN predicts every point from
/// its nearest training neighbours (excluding itself), so training error is
/// also out-of-point.
pub fn evaluate_split(y: &DVector<f64>, plan: &SplitPlan, estimator: &Estimator<'_>) -> Result<SplitErrors> {
    if y.len() != plan.n() {
        return Err(dim(format!("response length {} does not match plan size {}", y.len(), plan.n())));
    }
    match estimator {
        Estimator::Ols(x) => {
            if x.nrows() != y.len() {
                return Err(dim(format!("design rows {} vs response length {}", x.nrows(), y.len())));
            }
            let x_train = x.select_rows(plan.train());
            let y_train = y.select_rows(plan.train().iter());
            let beta = least_squares(&x_train, &y_train)?;
            let train = (&y_train - &x_train * &beta).norm_squared() / plan.train().len() as f64;
            let x_test = x.select_rows(plan.test());
            let y_test = y.select_rows(plan.test().iter());
            let test = (&y_test - &x_test * &beta).norm_squared() / plan.test().len() as f64;
            Ok(SplitErrors { train, test })
        }
        Estimator::Knn { k } => {
            if *k == 0 {
                return Err(Error::InvalidArgument("knn needs k >= 1".into()));
            }
            let sq_err = |t: usize| -> Result<f64> {
                let pred = knn_predict(y, plan.train(), t, *k).ok_or_else(|| {
                    Error::DegenerateInput(format!("no training neighbour for index {t}"))
                })?;
                Ok((y[t] - pred).powi(2))
            };
            let train: f64 = plan.train().iter().map(|&t| sq_err(t)).sum::<Result<f64>>()?;
            let test: f64 = plan.test().iter().map(|&t| sq_err(t)).sum::<Result<f64>>()?;
            Ok(SplitErrors {
                train: train / plan.train().len() as f64,
                test: test / plan.test().len() as f64,
            })
        }
    }
}

/// Data-generating process for [`compare_schemes`].
#[derive(Debug, Clone, PartialEq)]
pub enum Dgp {
    /// Mean-zero stationary AR(1) series of length `n`.
    Ar1 { n: usize, phi: f64, sigma2: f64 },
    /// `N(Xβ, Σ)` with orthogonal polynomial `X` on `n` points spaced `1/n`,
    /// `β = beta·1` and equicorrelated `Σ`.
    Equicorrelated {
        n: usize,
        degree: usize,
        beta: f64,
        rho: f64,
        sigma2: f64,
    },
}

impl Dgp {
    pub fn n(&self) -> usize {
        match self {
            Self::Ar1 { n, .. } | Self::Equicorrelated { n, .. } => *n,
        }
    }
}

/// Estimator family used by [`compare_schemes`].
///
/// On the AR(1) process `Ols` is the lag-1 autoregression `Y_t ~ 1 + Y_{t−1}`
/// and `Knn(k)` averages neighbours in time. On the equicorrelated process
/// `Ols` is least squares on the polynomial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Ols,
    Knn(usize),
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ols => write!(f, "ols"),
            Self::Knn(k) => write!(f, "knn:{k}"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "ols" {
            return Ok(Self::Ols);
        }
        let k = s
            .strip_prefix("knn")
            .map(|rest| rest.trim_start_matches(':'))
            .and_then(|k| k.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))?;
        if k == 0 || k % 2 != 0 {
            return Err(Error::InvalidArgument(format!("knn needs a positive even k, got {k}")));
        }
        Ok(Self::Knn(k))
    }
}

/// A cross-validation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    KFold { k: usize },
    Loo,
    TemporalBlock { test_fraction: f64, gap: usize },
    NonDependent { k: usize, gap: usize },
}

impl Scheme {
    /// Parses `kfold:K`, `loo`, `temporal:FRACTION[:GAP]` or
    /// `nondep:K[:GAP]`; a missing gap takes `default_gap`.
    pub fn parse(s: &str, default_gap: usize) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("cannot parse scheme `{s}`"));
        let int = |i: usize| parts.get(i).ok_or_else(bad)?.parse::<usize>().map_err(|_| bad());
        let gap = |i: usize| parts.get(i).map_or(Ok(default_gap), |g| g.parse::<usize>().map_err(|_| bad()));
        match parts[0].to_ascii_lowercase().as_str() {
            "kfold" if parts.len() == 2 => Ok(Self::KFold { k: int(1)? }),
            "loo" if parts.len() == 1 => Ok(Self::Loo),
            "temporal" if (2..=3).contains(&parts.len()) => Ok(Self::TemporalBlock {
                test_fraction: parts[1].parse().map_err(|_| bad())?,
                gap: gap(2)?,
            }),
            "nondep" if (2..=3).contains(&parts.len()) => Ok(Self::NonDependent { k: int(1)?, gap: gap(2)? }),
            _ => Err(bad()),
        }
    }

    /// Plans over `n` positions; random schemes draw from `stream`.
    pub fn plans(&self, n: usize, stream: &mut SeededStream) -> Result<Vec<SplitPlan>> {
        match *self {
            Self::KFold { k } => kfold(n, k, stream),
            Self::Loo => leave_one_out(n),
            Self::TemporalBlock { test_fraction, gap } => Ok(vec![temporal_block(n, test_fraction, gap)?]),
            Self::NonDependent { k, gap } => non_dependent_cv(n, k, gap),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::KFold { k } => write!(f, "kfold:{k}"),
            Self::Loo => write!(f, "loo"),
            Self::TemporalBlock { test_fraction, gap } => write!(f, "temporal:{test_fraction}:{gap}"),
            Self::NonDependent { k, gap } => write!(f, "nondep:{k}:{gap}"),
        }
    }
}

/// Per-replication estimates of each scheme alongside the true error.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeComparison {
    pub schemes: Vec<Scheme>,
    /// `estimates[s][r]`: scheme `s`, replication `r`.
    pub estimates: Vec<Vec<f64>>,
    pub true_oos: Vec<f64>,
}

impl SchemeComparison {
    pub fn reps(&self) -> usize {
        self.true_oos.len()
    }

    pub fn summary(&self, scheme: usize) -> Summary {
        Summary::of(&self.estimates[scheme])
    }

    pub fn true_summary(&self) -> Summary {
        Summary::of(&self.true_oos)
    }

    /// Mean and standard error of `estimate − true` per replication.
    pub fn bias_summary(&self, scheme: usize) -> Summary {
        let diff: Vec<f64> = self.estimates[scheme]
            .iter()
            .zip(&self.true_oos)
            .map(|(e, t)| e - t)
            .collect();
        Summary::of(&diff)
    }

    /// Index of a scheme by its display tag.
    pub fn position(&self, tag: &str) -> Option<usize> {
        self.schemes.iter().position(|s| s.to_string() == tag)
    }

    /// CSV with header `scheme,mean_estimate,mc_se`; the last row,
    /// `true_oos`, is the reference error.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "scheme,mean_estimate,mc_se")?;
        for (i, s) in self.schemes.iter().enumerate() {
            let sum = self.summary(i);
            writeln!(out, "{s},{},{}", sum.mean, sum.mc_se)?;
        }
        let t = self.true_summary();
        writeln!(out, "true_oos,{},{}", t.mean, t.mc_se)
    }
}

/// Everything fixed across replications of one comparison.
enum Setup {
    Ar1Knn { n: usize, phi: f64, sigma2: f64, k: usize, full: DMatrix<f64> },
    Ar1Lag { n: usize, phi: f64, sigma2: f64 },
    Linear { x: DesignMatrix, sampler: MvnSampler, full: DMatrix<f64>, knn: Option<usize> },
}

impl Setup {
    fn new(dgp: &Dgp, estimator: EstimatorKind) -> Result<Self> {
        match (dgp, estimator) {
            (&Dgp::Ar1 { n, phi, sigma2 }, EstimatorKind::Knn(k)) => {
                CovarianceSpec::Ar1 { sigma2, phi, n }.validate()?;
                Ok(Self::Ar1Knn { n, phi, sigma2, k, full: knn_smoother(n, k, None)?.matrix().clone() })
            }
            (&Dgp::Ar1 { n, phi, sigma2 }, EstimatorKind::Ols) => {
                CovarianceSpec::Ar1 { sigma2, phi, n }.validate()?;
                if n < 3 {
                    return Err(dim("lag-1 regression needs n >= 3"));
                }
                Ok(Self::Ar1Lag { n, phi, sigma2 })
            }
            (&Dgp::Equicorrelated { n, degree, beta, rho, sigma2 }, est) => {
                let x = orthogonal_polynomial_features(&equally_spaced(n, 1.0 / n as f64), degree)?;
                let mu = x.mean_response(&DVector::from_element(degree + 1, beta))?;
                let sigma = CovarianceSpec::Equicorrelated { sigma2, rho, n }.materialize()?;
                let sampler = MvnSampler::new(mu, &sigma)?;
                let (full, knn) = match est {
                    EstimatorKind::Ols => (crate::designs::hat_matrix(&x)?.matrix().clone(), None),
                    EstimatorKind::Knn(k) => (knn_smoother(n, k, None)?.matrix().clone(), Some(k)),
                };
                Ok(Self::Linear { x, sampler, full, knn })
            }
        }
    }

    /// Scheme estimates and true error for one replication.
    fn replicate(&self, schemes: &[Scheme], stream: &mut SeededStream) -> Result<(Vec<f64>, f64)> {
        let scheme_mean = |y: &DVector<f64>, est: &Estimator<'_>, n: usize, stream: &mut SeededStream| {
            schemes
                .iter()
                .map(|s| {
                    let plans = s.plans(n, stream)?;
                    let total = plans
                        .iter()
                        .map(|p| evaluate_split(y, p, est).map(|e| e.test))
                        .sum::<Result<f64>>()?;
                    Ok(total / plans.len() as f64)
                })
                .collect::<Result<Vec<f64>>>()
        };
        match self {
            Self::Ar1Knn { n, phi, sigma2, k, full } => {
                let y = DVector::from_vec(sample_ar1(*n, *phi, *sigma2, stream)?);
                let fresh = DVector::from_vec(sample_ar1(*n, *phi, *sigma2, stream)?);
                let truth = (fresh - full * &y).norm_squared() / *n as f64;
                Ok((scheme_mean(&y, &Estimator::Knn { k: *k }, *n, stream)?, truth))
            }
            Self::Ar1Lag { n, phi, sigma2 } => {
                let (x, y) = lag_design(&sample_ar1(*n + 1, *phi, *sigma2, stream)?)?;
                let (x_new, y_new) = lag_design(&sample_ar1(*n + 1, *phi, *sigma2, stream)?)?;
                let beta = least_squares(x.values(), &y)?;
                let truth = (y_new - x_new.values() * beta).norm_squared() / *n as f64;
                Ok((scheme_mean(&y, &Estimator::Ols(&x), *n, stream)?, truth))
            }
            Self::Linear { x, sampler, full, knn } => {
                let y = sampler.sample(stream);
                let fresh = sampler.sample(stream);
                let n = x.nrows();
                let truth = (fresh - full * &y).norm_squared() / n as f64;
                let est = match knn {
                    Some(k) => Estimator::Knn { k: *k },
                    None => Estimator::Ols(x),
                };
                Ok((scheme_mean(&y, &est, n, stream)?, truth))
            }
        }
    }
}

/// Rows `t = 1..len` of the lag-1 regression: design `[1, y_{t−1}]`, response `y_t`.
fn lag_design(path: &[f64]) -> Result<(DesignMatrix, DVector<f64>)> {
    let n = path.len() - 1;
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { path[i] });
    Ok((DesignMatrix::new(x, true)?, DVector::from_column_slice(&path[1..])))
}

/// Simulates `reps` datasets and records, for each scheme, the mean test
/// error over its plans, plus the error of the full-data fit against an
/// independent fresh draw.
///
/// Replication `r` uses stream `(seed, r)` for the data, the fresh draw and
/// then any random fold assignment, in that order. Replications run on the
/// current rayon pool; results are kept in replication order.
pub fn compare_schemes(
    dgp: &Dgp,
    estimator: EstimatorKind,
    schemes: &[Scheme],
    reps: usize,
    seed: u64,
) -> Result<SchemeComparison> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if schemes.is_empty() {
        return Err(Error::InvalidArgument("at least one scheme is required".into()));
    }
    let setup = Setup::new(dgp, estimator)?;
    // Check every scheme can be built before spending time on replications.
    for s in schemes {
        s.plans(dgp.n(), &mut SeededStream::new(seed, u64::MAX))?;
    }
    let rows: Vec<(Vec<f64>, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| setup.replicate(schemes, &mut SeededStream::new(seed, r as u64)))
        .collect::<Result<_>>()?;

    let mut estimates = vec![Vec::with_capacity(reps); schemes.len()];
    let mut true_oos = Vec::with_capacity(reps);
    for (est, truth) in rows {
        for (col, v) in estimates.iter_mut().zip(est) {
            col.push(v);
        }
        true_oos.push(truth);
    }
    Ok(SchemeComparison {
        schemes: schemes.to_vec(),
        estimates,
        true_oos,
    })
}

/// Which form of McNemar's test to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum McNemarMode {
    /// `(|b − c| − 1)² / (b + c)` against χ²(1).
    #[default]
    ChiSquareCorrected,
    /// Two-sided binomial test of `b` successes in `b + c` trials at ½.
    ExactBinomial,
}

impl FromStr for McNemarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corrected" | "chi_square_corrected" | "chi2" => Ok(Self::ChiSquareCorrected),
            "exact" | "exact_binomial" | "binomial" => Ok(Self::ExactBinomial),
            other => Err(Error::InvalidArgument(format!("unknown McNemar mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemarResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// McNemar's test on the discordant counts `b` and `c` of a paired 2×2 table.
pub fn mcnemar_test(b: u64, c: u64, mode: McNemarMode) -> Result<McNemarResult> {
    let total = b + c;
    if total == 0 {
        return Err(Error::DegenerateInput("McNemar needs at least one discordant pair".into()));
    }
    match mode {
        McNemarMode::ChiSquareCorrected => {
            let diff = (b as f64 - c as f64).abs() - 1.0;
            let statistic = diff * diff / total as f64;
            let chi2 = ChiSquared::new(1.0).expect("one degree of freedom is valid");
            Ok(McNemarResult {
                statistic,
                p_value: chi2.sf(statistic),
            })
        }
        McNemarMode::ExactBinomial => {
            let tail: f64 = (0..=b.min(c))
                .map(|i| (ln_binomial(total, i) - total as f64 * std::f64::consts::LN_2).exp())
                .sum();
            Ok(McNemarResult {
                statistic: b as f64,
                p_value: (2.0 * tail).min(1.0),
            })
        }
    }
}

/// Meng's factorisation of the error of a sample mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MengDecomposition {
    /// Correlation between the response indicator and the values; `None`
    /// when it is undefined (everyone responded, or the population is constant).
    pub data_quality: Option<f64>,
    /// `√((N − n)/n)`.
    pub data_quantity: f64,
    /// Population standard deviation (divisor `N`).
    pub difficulty: f64,
    /// Mean of responders minus population mean.
    pub error: f64,
}

impl MengDecomposition {
    /// `error − quality × quantity × difficulty`, with undefined quality read as 0.
    pub fn identity_residual(&self) -> f64 {
        self.error - self.data_quality.unwrap_or(0.0) * self.data_quantity * self.difficulty
    }
}

pub fn meng_decomposition(population: &[f64], responded: &[bool]) -> Result<MengDecomposition> {
    let big_n = population.len();
    if responded.len() != big_n {
        return Err(dim(format!("{} indicators for a population of {big_n}", responded.len())));
    }
    if population.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("population contains non-finite values".into()));
    }
    let n = responded.iter().filter(|&&r| r).count();
    if n == 0 {
        return Err(Error::DegenerateInput("nobody responded".into()));
    }
    let nf = big_n as f64;
    let mean = population.iter().sum::<f64>() / nf;
    let difficulty = (population.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
    let data_quantity = ((big_n - n) as f64 / n as f64).sqrt();
    let constant = population.iter().all(|&v| v == population[0]);
    if n == big_n || constant {
        return Ok(MengDecomposition {
            data_quality: None,
            data_quantity,
            difficulty: if constant { 0.0 } else { difficulty },
            error: 0.0,
        });
    }
    let responder_mean =
        population.iter().zip(responded).filter(|(_, &r)| r).map(|(v, _)| v).sum::<f64>() / n as f64;
    let f = n as f64 / nf;
    let cov = population
        .iter()
        .zip(responded)
        .map(|(v, &r)| (f64::from(u8::from(r)) - f) * (v - mean))
        .sum::<f64>()
        / nf;
    let data_quality = cov / ((f * (1.0 - f)).sqrt() * difficulty);
    Ok(MengDecomposition {
        data_quality: Some(data_quality),
        data_quantity,
        difficulty,
        error: responder_mean - mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::ols_fit;

    #[test]
    fn knn_predict_picks_nearest_with_low_index_ties() {
        let y = DVector::from_vec(vec![0.0, 10.0, 20.0, 30.0, 40.0]);
        assert_eq!(knn_predict(&y, &[0, 1, 3, 4], 2, 2), Some(20.0));
        assert_eq!(knn_predict(&y, &[0, 1, 2], 4, 2), Some(15.0));
        // t in the pool is skipped
        assert_eq!(knn_predict(&y, &[1, 2, 3], 2, 2), Some(20.0));
        // distance tie between 1 and 3 with k = 1: lower index wins
        assert_eq!(knn_predict(&y, &[1, 3], 2, 1), Some(10.0));
        assert_eq!(knn_predict(&y, &[2], 2, 2), None);
        // fewer than k available
        assert_eq!(knn_predict(&y, &[0], 3, 2), Some(0.0));
    }

    #[test]
    fn noiseless_ols_split_has_zero_error() {
        let x = orthogonal_polynomial_features(&equally_spaced(12, 0.1), 2).unwrap();
        let y = x.mean_response(&DVector::from_vec(vec![1.0, 2.0, -1.0])).unwrap();
        let plan = temporal_block(12, 0.25, 1).unwrap();
        let e = evaluate_split(&y, &plan, &Estimator::Ols(&x)).unwrap();
        assert!(e.train < 1e-20 && e.test < 1e-20);
    }

    #[test]
    fn ols_split_matches_brute_force() {
        // Independent oracle: normal equations solved by Cramer's rule for a
        // straight line through the training points.
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = DVector::from_vec(vec![1.0, 2.5, 2.0, 4.5, 3.0]);
        let design = DesignMatrix::new(DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }), true).unwrap();
        let plan = SplitPlan::new(5, vec![0, 2, 3], vec![1, 4], vec![], "hand").unwrap();
        let e = evaluate_split(&y, &plan, &Estimator::Ols(&design)).unwrap();

        let tr = [0usize, 2, 3];
        let (sx, sy) = (tr.iter().map(|&i| xs[i]).sum::<f64>(), tr.iter().map(|&i| y[i]).sum::<f64>());
        let sxx = tr.iter().map(|&i| xs[i] * xs[i]).sum::<f64>();
        let sxy = tr.iter().map(|&i| xs[i] * y[i]).sum::<f64>();
        let det = 3.0 * sxx - sx * sx;
        let b1 = (3.0 * sxy - sx * sy) / det;
        let b0 = (sy - b1 * sx) / 3.0;
        let test = [1usize, 4].iter().map(|&i| (y[i] - b0 - b1 * xs[i]).powi(2)).sum::<f64>() / 2.0;
        let train = tr.iter().map(|&i| (y[i] - b0 - b1 * xs[i]).powi(2)).sum::<f64>() / 3.0;
        assert!((e.test - test).abs() < 1e-12);
        assert!((e.train - train).abs() < 1e-12);
    }

    #[test]
    fn knn_split_errors() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 8.0, 16.0]);
        let plan = SplitPlan::new(5, vec![0, 1, 3], vec![2, 4], vec![], "hand").unwrap();
        let e = evaluate_split(&y, &plan, &Estimator::Knn { k: 2 }).unwrap();
        // test 2 <- (2 + 8)/2 = 5; test 4 <- (8 + 2)/2 = 5 (nearest 3 then 1)
        assert!((e.test - ((4.0f64 - 5.0).powi(2) + (16.0f64 - 5.0).powi(2)) / 2.0).abs() < 1e-12);
        // train 0 <- (2+8)/2, 1 <- (1+8)/2, 3 <- (2+1)/2
        let train = ((1.0f64 - 5.0).powi(2) + (2.0f64 - 4.5).powi(2) + (8.0f64 - 1.5).powi(2)) / 3.0;
        assert!((e.train - train).abs() < 1e-12);
    }

    #[test]
    fn knn_needs_a_training_neighbour() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let plan = SplitPlan::new(2, vec![0], vec![1], vec![], "hand").unwrap();
        // the lone training point has no other training neighbour
        assert!(matches!(
            evaluate_split(&y, &plan, &Estimator::Knn { k: 2 }),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn ols_split_rejects_underdetermined_training_set() {
        let x = orthogonal_polynomial_features(&equally_spaced(6, 0.2), 3).unwrap();
        let y = DVector::from_element(6, 1.0);
        let plan = SplitPlan::new(6, vec![0, 1], vec![2, 3, 4, 5], vec![], "hand").unwrap();
        assert!(evaluate_split(&y, &plan, &Estimator::Ols(&x)).is_err());
    }

    #[test]
    fn full_training_ols_matches_ols_fit() {
        let x = orthogonal_polynomial_features(&equally_spaced(8, 0.125), 2).unwrap();
        let y = DVector::from_vec(vec![0.3, 1.2, 0.7, 2.2, 1.9, 3.1, 2.8, 4.0]);
        let plan = SplitPlan::new(8, (0..7).collect(), vec![7], vec![], "hand").unwrap();
        let e = evaluate_split(&y, &plan, &Estimator::Ols(&x)).unwrap();
        let sub = DesignMatrix::new(x.select_rows(&(0..7).collect::<Vec<_>>()), true).unwrap();
        let fit = ols_fit(&sub, &y.rows(0, 7).into_owned()).unwrap();
        assert!((e.train - fit.residuals(&y.rows(0, 7).into_owned()).norm_squared() / 7.0).abs() < 1e-12);
    }

    #[test]
    fn parse_schemes_and_estimators() {
        assert_eq!(Scheme::parse("kfold:5", 0).unwrap(), Scheme::KFold { k: 5 });
        assert_eq!(Scheme::parse("loo", 0).unwrap(), Scheme::Loo);
        assert_eq!(
            Scheme::parse("temporal:0.2", 3).unwrap(),
            Scheme::TemporalBlock { test_fraction: 0.2, gap: 3 }
        );
        assert_eq!(Scheme::parse("nondep:5:2", 3).unwrap(), Scheme::NonDependent { k: 5, gap: 2 });
        assert!(Scheme::parse("kfold", 0).is_err());
        assert!(Scheme::parse("bootstrap:3", 0).is_err());
        for s in ["kfold:4", "loo", "temporal:0.25:1", "nondep:3:2"] {
            assert_eq!(Scheme::parse(s, 0).unwrap().to_string(), s);
        }
        assert_eq!("knn:2".parse::<EstimatorKind>().unwrap(), EstimatorKind::Knn(2));
        assert_eq!("KNN4".parse::<EstimatorKind>().unwrap(), EstimatorKind::Knn(4));
        assert_eq!("ols".parse::<EstimatorKind>().unwrap(), EstimatorKind::Ols);
        assert!("knn:3".parse::<EstimatorKind>().is_err());
        assert!("tree".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn compare_is_deterministic_and_validates() {
        let dgp = Dgp::Ar1 { n: 60, phi: 0.5, sigma2: 1.0 };
        let schemes = [Scheme::KFold { k: 5 }, Scheme::TemporalBlock { test_fraction: 0.2, gap: 0 }];
        let a = compare_schemes(&dgp, EstimatorKind::Knn(2), &schemes, 20, 3).unwrap();
        let b = compare_schemes(&dgp, EstimatorKind::Knn(2), &schemes, 20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reps(), 20);
        assert_eq!(a.position("kfold:5"), Some(0));
        assert!(compare_schemes(&dgp, EstimatorKind::Knn(2), &schemes, 0, 3).is_err());
        assert!(compare_schemes(&dgp, EstimatorKind::Knn(2), &[], 5, 3).is_err());
        let too_wide = [Scheme::NonDependent { k: 2, gap: 40 }];
        assert!(compare_schemes(&dgp, EstimatorKind::Knn(2), &too_wide, 5, 3).is_err());
        let lag = compare_schemes(&dgp, EstimatorKind::Ols, &schemes, 20, 3).unwrap();
        assert!(lag.true_summary().mean > 0.5);
    }

    #[test]
    fn comparison_csv() {
        let c = SchemeComparison {
            schemes: vec![Scheme::Loo],
            estimates: vec![vec![1.0, 3.0]],
            true_oos: vec![2.0, 2.0],
        };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scheme,mean_estimate,mc_se");
        assert_eq!(lines[1], "loo,2,1");
        assert_eq!(lines[2], "true_oos,2,0");
        assert_eq!(c.bias_summary(0).mean, 0.0);
    }

    #[test]
    fn mcnemar_examples() {
        // χ²(1) survival oracle: P(Z² > x) = erfc(√(x/2)).
        let r = mcnemar_test(5, 5, McNemarMode::ChiSquareCorrected).unwrap();
        assert!((r.statistic - 0.1).abs() < 1e-15);
        assert!((r.p_value - 0.751_829_634_045_6).abs() < 1e-9, "{}", r.p_value);
        let r = mcnemar_test(10, 2, McNemarMode::ChiSquareCorrected).unwrap();
        assert!((r.statistic - 49.0 / 12.0).abs() < 1e-12);
        assert!((r.p_value - 0.043_308_142_810_1).abs() < 1e-9, "{}", r.p_value);
        let r = mcnemar_test(10, 2, McNemarMode::ExactBinomial).unwrap();
        assert!((r.p_value - 2.0 * 79.0 / 4096.0).abs() < 1e-14);
        assert_eq!(r.statistic, 10.0);
        assert_eq!(mcnemar_test(3, 3, McNemarMode::ExactBinomial).unwrap().p_value, 1.0);
        assert!(matches!(
            mcnemar_test(0, 0, McNemarMode::ChiSquareCorrected),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn meng_examples() {
        let d = meng_decomposition(&[1.0, 2.0, 3.0, 4.0], &[true, true, false, false]).unwrap();
        assert!((d.error + 1.0).abs() < 1e-15);
        assert!((d.data_quality.unwrap() + 0.894_427_191).abs() < 1e-9);
        assert!((d.data_quantity - 1.0).abs() < 1e-15);
        assert!((d.difficulty - 1.118_033_988_7).abs() < 1e-9);
        assert!(d.identity_residual().abs() < 1e-12);

        let sym = meng_decomposition(&[1.0, 2.0, 3.0, 4.0], &[true, false, false, true]).unwrap();
        assert_eq!(sym.error, 0.0);
        assert!(sym.data_quality.unwrap().abs() < 1e-15);

        let everyone = meng_decomposition(&[1.0, 5.0], &[true, true]).unwrap();
        assert_eq!((everyone.error, everyone.data_quantity, everyone.data_quality), (0.0, 0.0, None));
        let flat = meng_decomposition(&[3.0, 3.0, 3.0], &[true, false, false]).unwrap();
        assert_eq!((flat.error, flat.difficulty, flat.data_quality), (0.0, 0.0, None));

        assert!(matches!(
            meng_decomposition(&[1.0, 2.0], &[false, false]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(meng_decomposition(&[1.0, 2.0], &[true]).is_err());
    }
}
