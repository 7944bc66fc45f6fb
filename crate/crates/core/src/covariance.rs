//! Structured covariance models for the response vector.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A named covariance structure. Variances are in squared response units.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// `σ² I`.
    Iid { sigma2: f64, n: usize },
    /// `σ²[(1 − ρ) I + ρ 11ᵀ]`.
    Equicorrelated { sigma2: f64, rho: f64, n: usize },
    /// Stationary AR(1) with innovation variance `σ²`.
    Ar1 { sigma2: f64, phi: f64, n: usize },
    /// Equicorrelation `ρ` within groups sharing a label, zero across groups.
    GroupBlock {
        sigma2: f64,
        rho_within: f64,
        groups: Vec<usize>,
    },
    /// Training and test copies of an equicorrelated vector stacked into
    /// `2n` dimensions, with every cross pair at covariance `cross_rho·σ²`.
    PairedCross {
        sigma2: f64,
        rho: f64,
        n: usize,
        cross_rho: f64,
    },
}

/// Autocovariance `γ(h) = σ² φ^|h| / (1 − φ²)` of a stationary AR(1).
pub fn ar1_autocovariance(phi: f64, sigma2: f64, lag: i64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_phi(phi)?;
    Ok(sigma2 * phi.powi(lag.unsigned_abs() as i32) / (1.0 - phi * phi))
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("variance must be positive, got {sigma2}")))
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi.is_finite() && phi.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("AR(1) requires |phi| < 1, got {phi}")))
    }
}

/// Equicorrelation of dimension `n` is positive definite iff
/// `−1/(n−1) < ρ < 1`.
fn check_equicorrelation(rho: f64, n: usize) -> Result<()> {
    if !rho.is_finite() || rho >= 1.0 {
        return Err(Error::InvalidSpec(format!("correlation must be below 1, got {rho}")));
    }
    if n >= 2 {
        let lower = -1.0 / (n as f64 - 1.0);
        if rho <= lower {
            return Err(Error::InvalidSpec(format!(
                "correlation {rho} violates the lower bound {lower} for dimension {n}"
            )));
        }
    }
    Ok(())
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidSpec("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn equicorrelated(sigma2: f64, rho: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { sigma2 } else { rho * sigma2 })
}

impl CovarianceSpec {
    /// Dimension of the materialized matrix.
    pub fn dim(&self) -> usize {
        match self {
            Self::Iid { n, .. } | Self::Equicorrelated { n, .. } | Self::Ar1 { n, .. } => *n,
            Self::GroupBlock { groups, .. } => groups.len(),
            Self::PairedCross { n, .. } => 2 * n,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            Self::Iid { sigma2, .. }
            | Self::Equicorrelated { sigma2, .. }
            | Self::Ar1 { sigma2, .. }
            | Self::GroupBlock { sigma2, .. }
            | Self::PairedCross { sigma2, .. } => *sigma2,
        }
    }

    /// Checks every bound, confirming positive definiteness by Cholesky for
    /// variants without a closed-form condition.
    pub fn validate(&self) -> Result<()> {
        check_sigma2(self.sigma2())?;
        match self {
            Self::Iid { n, .. } => check_dimension(*n),
            Self::Equicorrelated { rho, n, .. } => {
                check_dimension(*n)?;
                check_equicorrelation(*rho, *n)
            }
            Self::Ar1 { phi, n, .. } => {
                check_dimension(*n)?;
                check_phi(*phi)
            }
            Self::GroupBlock {
                rho_within, groups, ..
            } => {
                check_dimension(groups.len())?;
                let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
                for &g in groups {
                    *sizes.entry(g).or_default() += 1;
                }
                for (label, &m) in &sizes {
                    check_equicorrelation(*rho_within, m).map_err(|e| {
                        Error::InvalidSpec(format!("group {label} (size {m}): {e}"))
                    })?;
                }
                self.confirm_cholesky()
            }
            Self::PairedCross {
                rho, n, cross_rho, ..
            } => {
                check_dimension(*n)?;
                check_equicorrelation(*rho, *n)?;
                if !cross_rho.is_finite() {
                    return Err(Error::InvalidSpec("cross correlation must be finite".into()));
                }
                self.confirm_cholesky()
            }
        }
    }

    fn confirm_cholesky(&self) -> Result<()> {
        if self.build().cholesky().is_some() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{self} is not positive definite")))
        }
    }

    /// Dense symmetric covariance matrix.
    pub fn materialize(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        Ok(self.build())
    }

    fn build(&self) -> DMatrix<f64> {
        match self {
            Self::Iid { sigma2, n } => DMatrix::identity(*n, *n) * *sigma2,
            Self::Equicorrelated { sigma2, rho, n } => equicorrelated(*sigma2, *rho, *n),
            Self::Ar1 { sigma2, phi, n } => {
                let gamma: Vec<f64> = (0..*n)
                    .map(|h| sigma2 * phi.powi(h as i32) / (1.0 - phi * phi))
                    .collect();
                DMatrix::from_fn(*n, *n, |i, j| gamma[i.abs_diff(j)])
            }
            Self::GroupBlock {
                sigma2,
                rho_within,
                groups,
            } => {
                let n = groups.len();
                DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        *sigma2
                    } else if groups[i] == groups[j] {
                        rho_within * sigma2
                    } else {
                        0.0
                    }
                })
            }
            Self::PairedCross {
                sigma2,
                rho,
                n,
                cross_rho,
            } => {
                let inner = equicorrelated(*sigma2, *rho, *n);
                let mut m = DMatrix::from_element(2 * n, 2 * n, cross_rho * sigma2);
                m.view_mut((0, 0), (*n, *n)).copy_from(&inner);
                m.view_mut((*n, *n), (*n, *n)).copy_from(&inner);
                m
            }
        }
    }

    /// Covariance of one copy of a paired specification; other variants are
    /// returned unchanged.
    pub fn marginal(&self) -> CovarianceSpec {
        match self {
            Self::PairedCross { sigma2, rho, n, .. } => Self::Equicorrelated {
                sigma2: *sigma2,
                rho: *rho,
                n: *n,
            },
            other => other.clone(),
        }
    }

    /// Parses `name(key=value, ...)` strings such as
    /// `equicorrelated(sigma2=1, rho=0.5)`. The dimension `n` comes from the
    /// surrounding configuration.
    ///
    /// Recognised forms: `iid(sigma2)`, `equicorrelated(sigma2, rho)`,
    /// `ar1(sigma2, phi)`, `groupblock(sigma2, rho, size)` (consecutive
    /// groups of `size`), `paired(sigma2, rho, cross)` (`cross` defaults to
    /// `rho`).
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let text = text.trim();
        let (name, rest) = text
            .split_once('(')
            .ok_or_else(|| Error::InvalidSpec(format!("expected name(...), got `{text}`")))?;
        let body = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::InvalidSpec(format!("missing `)` in `{text}`")))?;
        let mut args: BTreeMap<String, f64> = BTreeMap::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got `{part}`")))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("`{v}` is not a number")))?;
            args.insert(k.trim().to_ascii_lowercase(), value);
        }
        let mut take = |key: &str, default: Option<f64>| -> Result<f64> {
            args.remove(key)
                .or(default)
                .ok_or_else(|| Error::InvalidSpec(format!("`{name}` requires `{key}`")))
        };
        let spec = match name.trim().to_ascii_lowercase().as_str() {
            "iid" => Self::Iid {
                sigma2: take("sigma2", Some(1.0))?,
                n,
            },
            "equicorrelated" => Self::Equicorrelated {
                sigma2: take("sigma2", Some(1.0))?,
                rho: take("rho", None)?,
                n,
            },
            "ar1" => Self::Ar1 {
                sigma2: take("sigma2", Some(1.0))?,
                phi: take("phi", None)?,
                n,
            },
            "groupblock" => {
                let sigma2 = take("sigma2", Some(1.0))?;
                let rho_within = take("rho", None)?;
                let size = take("size", None)?;
                if !(size >= 1.0 && size.fract() == 0.0) {
                    return Err(Error::InvalidSpec(format!("group size must be a positive integer, got {size}")));
                }
                Self::GroupBlock {
                    sigma2,
                    rho_within,
                    groups: (0..n).map(|i| i / size as usize).collect(),
                }
            }
            "paired" => {
                let sigma2 = take("sigma2", Some(1.0))?;
                let rho = take("rho", None)?;
                let cross_rho = take("cross", Some(rho))?;
                Self::PairedCross {
                    sigma2,
                    rho,
                    n,
                    cross_rho,
                }
            }
            other => return Err(Error::InvalidSpec(format!("unknown covariance `{other}`"))),
        };
        if let Some(key) = args.keys().next() {
            return Err(Error::InvalidSpec(format!("unexpected argument `{key}` for `{name}`")));
        }
        Ok(spec)
    }
}

impl fmt::Display for CovarianceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Iid { sigma2, n } => write!(f, "iid(sigma2={sigma2}, n={n})"),
            Self::Equicorrelated { sigma2, rho, n } => {
                write!(f, "equicorrelated(sigma2={sigma2}, rho={rho}, n={n})")
            }
            Self::Ar1 { sigma2, phi, n } => write!(f, "ar1(sigma2={sigma2}, phi={phi}, n={n})"),
            Self::GroupBlock {
                sigma2,
                rho_within,
                groups,
            } => write!(
                f,
                "groupblock(sigma2={sigma2}, rho={rho_within}, n={})",
                groups.len()
            ),
            Self::PairedCross {
                sigma2,
                rho,
                n,
                cross_rho,
            } => write!(f, "paired(sigma2={sigma2}, rho={rho}, cross={cross_rho}, n={n})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_zero_is_identity() {
        let m = CovarianceSpec::Equicorrelated {
            sigma2: 1.0,
            rho: 0.0,
            n: 3,
        }
        .materialize()
        .unwrap();
        assert_eq!(m, DMatrix::identity(3, 3));
    }

    #[test]
    fn ar1_toeplitz_entries() {
        let m = CovarianceSpec::Ar1 {
            sigma2: 1.0,
            phi: 0.5,
            n: 3,
        }
        .materialize()
        .unwrap();
        let expect = [[4.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0], [2.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - expect[i][j]).abs() < 1e-15);
                assert_eq!(m[(i, j)], ar1_autocovariance(0.5, 1.0, i as i64 - j as i64).unwrap());
            }
        }
    }

    #[test]
    fn autocovariance_values() {
        assert!((ar1_autocovariance(0.5, 1.0, 0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((ar1_autocovariance(0.5, 1.0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            ar1_autocovariance(0.5, 2.0, -3).unwrap(),
            ar1_autocovariance(0.5, 2.0, 3).unwrap()
        );
        assert_eq!(ar1_autocovariance(0.0, 1.0, 4).unwrap(), 0.0);
        assert!(matches!(ar1_autocovariance(1.0, 1.0, 1), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn equicorrelated_lower_bound() {
        let bad = CovarianceSpec::Equicorrelated {
            sigma2: 1.0,
            rho: -0.5,
            n: 100,
        };
        assert!(matches!(bad.materialize(), Err(Error::InvalidSpec(_))));
        let edge = CovarianceSpec::Equicorrelated {
            sigma2: 1.0,
            rho: -1.0 / 99.0 + 1e-6,
            n: 100,
        };
        edge.validate().unwrap();
        assert!(edge.materialize().unwrap().cholesky().is_some());
    }

    #[test]
    fn ar1_unit_root_rejected() {
        let spec = CovarianceSpec::Ar1 {
            sigma2: 1.0,
            phi: 1.0,
            n: 5,
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn group_block_validity() {
        let groups: Vec<usize> = (0..20).map(|i| i / 5).collect();
        let spec = CovarianceSpec::GroupBlock {
            sigma2: 1.0,
            rho_within: 0.9,
            groups: groups.clone(),
        };
        spec.validate().unwrap();
        let m = spec.materialize().unwrap();
        assert_eq!(m[(0, 4)], 0.9);
        assert_eq!(m[(0, 5)], 0.0);
        let bad = CovarianceSpec::GroupBlock {
            sigma2: 1.0,
            rho_within: -0.3,
            groups,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equicorrelated_eigenvalues() {
        let (n, rho, s2) = (12usize, 0.3, 2.0);
        let m = CovarianceSpec::Equicorrelated { sigma2: s2, rho, n }.materialize().unwrap();
        let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for v in &eig[..n - 1] {
            assert!((v - s2 * (1.0 - rho)).abs() < 1e-8);
        }
        assert!((eig[n - 1] - s2 * (1.0 + (n as f64 - 1.0) * rho)).abs() < 1e-8);
    }

    #[test]
    fn paired_cross_blocks() {
        let spec = CovarianceSpec::PairedCross {
            sigma2: 2.0,
            rho: 0.5,
            n: 3,
            cross_rho: 0.5,
        };
        let m = spec.materialize().unwrap();
        assert_eq!(m.shape(), (6, 6));
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(0, 3)], 1.0);
        assert_eq!(m[(4, 4)], 2.0);
        assert_eq!(m, m.transpose());
        assert_eq!(
            spec.marginal(),
            CovarianceSpec::Equicorrelated {
                sigma2: 2.0,
                rho: 0.5,
                n: 3
            }
        );
        // cross covariance larger than the within-copy variance is not PD
        let bad = CovarianceSpec::PairedCross {
            sigma2: 1.0,
            rho: 0.0,
            n: 3,
            cross_rho: 0.9,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parse_forms() {
        assert_eq!(
            CovarianceSpec::parse("equicorrelated(sigma2=1, rho=0.5)", 4).unwrap(),
            CovarianceSpec::Equicorrelated {
                sigma2: 1.0,
                rho: 0.5,
                n: 4
            }
        );
        assert_eq!(
            CovarianceSpec::parse(" AR1(phi=0.8) ", 10).unwrap(),
            CovarianceSpec::Ar1 {
                sigma2: 1.0,
                phi: 0.8,
                n: 10
            }
        );
        match CovarianceSpec::parse("groupblock(rho=0.2, size=3)", 7).unwrap() {
            CovarianceSpec::GroupBlock { groups, .. } => assert_eq!(groups, vec![0, 0, 0, 1, 1, 1, 2]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(CovarianceSpec::parse("equicorrelated(sigma2=1)", 4).is_err());
        assert!(CovarianceSpec::parse("iid(sigma2=1, bogus=2)", 4).is_err());
        assert!(CovarianceSpec::parse("wishart(df=3)", 4).is_err());
        assert!(CovarianceSpec::parse("iid", 4).is_err());
    }
}
