//! Linear smoothers: estimators whose fitted values are `ŷ = Hy`.
//!
//! OLS and k-nearest-neighbour regression along a time ordering are both
//! linear smoothers, so the covariance penalties in [`crate::optimism`] apply
//! to either through the explicit matrix `H`.

use nalgebra::{DMatrix, DVector};

use crate::designs::{hat_matrix, DesignMatrix};
use crate::error::{dim, Error, Result};

/// A dense smoothing matrix with a descriptive label.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSmoother {
    h: DMatrix<f64>,
    label: String,
}

impl LinearSmoother {
    pub fn new(h: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if !h.is_square() {
            return Err(dim(format!("smoother must be square, got {:?}", h.shape())));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("smoother has non-finite entries".into()));
        }
        Ok(Self {
            h,
            label: label.into(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            h: DMatrix::identity(n, n),
            label: "identity".into(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `H·y`.
    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.dim() {
            return Err(dim(format!(
                "response length {} does not match smoother size {}",
                y.len(),
                self.dim()
            )));
        }
        Ok(&self.h * y)
    }

    /// `trace(H)`.
    pub fn degrees_of_freedom(&self) -> f64 {
        self.h.trace()
    }
}

/// The OLS hat matrix as a smoother, labelled `"ols"`.
pub fn ols_smoother(x: &DesignMatrix) -> Result<LinearSmoother> {
    hat_matrix(x)
}

/// k-nearest-neighbour averaging along a time ordering.
///
/// Row `t` places weight `1/m` on each of the `m` positions within `k/2` of
/// `t` on either side, excluding `t`. Interior rows have `m = k`; rows near
/// either end keep only the neighbours that exist. `ordering[i]` is the
/// observation index at time position `i`; pass `None` for the identity
/// ordering.
pub fn knn_smoother(n: usize, k: usize, ordering: Option<&[usize]>) -> Result<LinearSmoother> {
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("k must be a positive even integer, got {k}")));
    }
    let half = k / 2;
    if n <= half {
        return Err(dim(format!("knn with k={k} needs n > {half}, got {n}")));
    }
    let identity: Vec<usize>;
    let order = match ordering {
        Some(o) => {
            check_permutation(o, n)?;
            o
        }
        None => {
            identity = (0..n).collect();
            &identity
        }
    };

    let mut h = DMatrix::zeros(n, n);
    for pos in 0..n {
        let lo = pos.saturating_sub(half);
        let hi = (pos + half).min(n - 1);
        let m = (hi - lo) as f64;
        let row = order[pos];
        for other in (lo..=hi).filter(|&q| q != pos) {
            h[(row, order[other])] = 1.0 / m;
        }
    }
    LinearSmoother::new(h, format!("knn{k}"))
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(dim(format!("ordering has length {}, expected {n}", order.len())));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument("ordering is not a permutation".into()));
        }
    }
    Ok(())
}
