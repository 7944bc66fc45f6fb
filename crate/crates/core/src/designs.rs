//! Design matrices, least squares and the hat matrix.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim, Error, Result};
use crate::smoothers::LinearSmoother;

/// Designs whose Gram matrix has reciprocal condition number below this are
/// rejected as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// An `n × p` design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    has_intercept: bool,
    degree: Option<usize>,
}

impl DesignMatrix {
    /// Wraps a matrix, checking shape, finiteness and the intercept column.
    pub fn new(values: DMatrix<f64>, has_intercept: bool) -> Result<Self> {
        let (n, p) = values.shape();
        if p == 0 || n < p {
            return Err(dim(format!("design must satisfy n >= p >= 1, got {n}x{p}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design contains non-finite entries".into()));
        }
        if has_intercept && values.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidArgument(
                "intercept flagged but column 0 is not all ones".into(),
            ));
        }
        Ok(Self {
            values,
            has_intercept,
            degree: None,
        })
    }

    /// Single all-ones column.
    pub fn intercept_only(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, 1, 1.0), true)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Polynomial degree, for designs built by [`orthogonal_polynomial_features`].
    pub fn degree(&self) -> Option<usize> {
        self.degree
    }

    /// `X β`.
    pub fn mean_response(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        if beta.len() != self.ncols() {
            return Err(dim(format!(
                "coefficient length {} does not match {} design columns",
                beta.len(),
                self.ncols()
            )));
        }
        Ok(&self.values * beta)
    }

    /// Rows of the design picked out by `rows`, in order.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        self.values.select_rows(rows.iter())
    }

    /// Row-major CSV with header `x0,x1,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.ncols()).map(|j| format!("x{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.nrows() {
            let row: Vec<String> = self.values.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Orthogonal polynomial features of degree `degree` evaluated at `points`.
///
/// Column 0 is the raw all-ones intercept. Columns `1..=degree` are built by
/// the Stieltjes recurrence on the centred points (multiply the previous
/// basis vector by `x − x̄`, then orthogonalise against every earlier column,
/// twice) and scaled to unit Euclidean norm, so that `XᵀX = diag(n, 1, …, 1)`.
pub fn orthogonal_polynomial_features(points: &[f64], degree: usize) -> Result<DesignMatrix> {
    let n = points.len();
    if degree + 1 > n {
        return Err(dim(format!("degree {degree} needs more than {n} points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("points contain non-finite values".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < degree + 1 {
        return Err(Error::DegenerateInput(format!(
            "{} distinct points cannot support degree {degree}",
            sorted.len()
        )));
    }

    let mean = points.iter().sum::<f64>() / n as f64;
    let centred = DVector::from_iterator(n, points.iter().map(|x| x - mean));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(degree + 1);
    basis.push(DVector::from_element(n, 1.0 / (n as f64).sqrt()));

    for j in 1..=degree {
        let mut v = centred.component_mul(&basis[j - 1]);
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-13 * (n as f64).sqrt() {
            return Err(Error::DegenerateInput(format!(
                "polynomial column {j} vanished numerically"
            )));
        }
        basis.push(v / norm);
    }

    let mut values = DMatrix::zeros(n, degree + 1);
    values.column_mut(0).fill(1.0);
    for (j, q) in basis.iter().enumerate().skip(1) {
        values.set_column(j, q);
    }
    let mut design = DesignMatrix::new(values, true)?;
    design.degree = Some(degree);
    Ok(design)
}

/// `n` equally spaced points `0, step, 2·step, …`.
pub fn equally_spaced(n: usize, step: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * step).collect()
}

/// Thin QR of a full-column-rank matrix, after checking its conditioning.
struct ThinQr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn thin_qr(x: &DMatrix<f64>) -> Result<ThinQr> {
    let (n, p) = x.shape();
    if n < p || p == 0 {
        return Err(dim(format!("least squares needs n >= p >= 1, got {n}x{p}")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let rcond = if smax > 0.0 { (smin / smax).powi(2) } else { 0.0 };
    if rcond.is_nan() || rcond < RCOND_THRESHOLD {
        return Err(Error::SingularDesign {
            rcond,
            threshold: RCOND_THRESHOLD,
        });
    }
    Ok(ThinQr { q: qr.q(), r })
}

/// Least-squares coefficients for an arbitrary full-rank matrix.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(dim(format!(
            "response length {} does not match {} design rows",
            y.len(),
            x.nrows()
        )));
    }
    let ThinQr { q, r } = thin_qr(x)?;
    let qty = q.transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign {
            rcond: 0.0,
            threshold: RCOND_THRESHOLD,
        })
}

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
}

impl OlsFit {
    pub fn residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.fitted
    }
}

/// Ordinary least squares `β̂ = (XᵀX)⁻¹Xᵀy`, `ŷ = Xβ̂`.
pub fn ols_fit(x: &DesignMatrix, y: &DVector<f64>) -> Result<OlsFit> {
    let coefficients = least_squares(x.values(), y)?;
    let fitted = x.values() * &coefficients;
    Ok(OlsFit {
        coefficients,
        fitted,
    })
}

/// The hat matrix `H = X(XᵀX)⁻¹Xᵀ`, computed as `QQᵀ` from a thin QR and
/// symmetrised exactly.
pub fn hat_matrix(x: &DesignMatrix) -> Result<LinearSmoother> {
    let ThinQr { q, .. } = thin_qr(x.values())?;
    let h = &q * q.transpose();
    let h = (&h + h.transpose()) * 0.5;
    LinearSmoother::new(h, "ols")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    fn gram_target(n: usize, p: usize) -> DMatrix<f64> {
        let mut g = DMatrix::identity(p, p);
        g[(0, 0)] = n as f64;
        g
    }

    #[test]
    fn two_point_linear_design() {
        let x = orthogonal_polynomial_features(&[0.0, 1.0], 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(x.values().column(0).as_slice(), &[1.0, 1.0]);
        assert!((x.values()[(0, 1)] + s).abs() < 1e-15);
        assert!((x.values()[(1, 1)] - s).abs() < 1e-15);
        assert_eq!(x.degree(), Some(1));
    }

    #[test]
    fn degree_twenty_grid_is_orthogonal() {
        let pts = equally_spaced(100, 0.01);
        let x = orthogonal_polynomial_features(&pts, 20).unwrap();
        let gram = x.values().transpose() * x.values();
        assert!(max_abs(&(gram - gram_target(100, 21))) <= 1e-8);
    }

    #[test]
    fn inverse_gram_trace_is_d_plus_one_over_n() {
        for &(n, d) in &[(100usize, 20usize), (30, 4), (7, 0), (12, 11)] {
            let x = orthogonal_polynomial_features(&equally_spaced(n, 1.0 / n as f64), d).unwrap();
            let gram = x.values().transpose() * x.values();
            let inv = gram.try_inverse().unwrap();
            assert!((inv.trace() - (d as f64 + 1.0 / n as f64)).abs() < 1e-8);
        }
    }

    #[test]
    fn polynomial_errors() {
        assert!(matches!(
            orthogonal_polynomial_features(&[0.0, 1.0], 2),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            orthogonal_polynomial_features(&[0.0, 0.0, 1.0, 1.0], 2),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn hat_matrix_of_constant_column() {
        let h = hat_matrix(&DesignMatrix::intercept_only(2).unwrap()).unwrap();
        assert!(max_abs(&(h.matrix() - DMatrix::from_element(2, 2, 0.5))) < 1e-15);
    }

    #[test]
    fn hat_matrix_of_square_design_is_identity() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, -1.0, 3.0, 1.0, 0.5, 1.0]);
        let h = hat_matrix(&DesignMatrix::new(x, true).unwrap()).unwrap();
        assert!(max_abs(&(h.matrix() - DMatrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn hat_matrix_of_fig_mse_design_has_trace_21() {
        let x = orthogonal_polynomial_features(&equally_spaced(100, 0.01), 20).unwrap();
        let h = hat_matrix(&x).unwrap();
        assert!((h.matrix().trace() - 21.0).abs() < 1e-8);
    }

    #[test]
    fn singular_design_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let x = DesignMatrix::new(x, true).unwrap();
        assert!(matches!(hat_matrix(&x), Err(Error::SingularDesign { .. })));
        assert!(matches!(
            ols_fit(&x, &DVector::from_vec(vec![1.0, 2.0, 3.0])),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn ols_mean_fit() {
        let x = DesignMatrix::intercept_only(2).unwrap();
        let fit = ols_fit(&x, &DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!((fit.fitted[0] - 2.0).abs() < 1e-14 && (fit.fitted[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ols_reproduces_response_in_column_space() {
        let x = orthogonal_polynomial_features(&equally_spaced(10, 0.1), 3).unwrap();
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = x.mean_response(&beta).unwrap();
        let fit = ols_fit(&x, &y).unwrap();
        assert!(fit.residuals(&y).amax() < 1e-12);
        assert!((fit.coefficients - beta).amax() < 1e-12);
    }

    #[test]
    fn ols_length_mismatch() {
        let x = DesignMatrix::intercept_only(3).unwrap();
        assert!(matches!(
            ols_fit(&x, &DVector::from_vec(vec![1.0, 2.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn intercept_flag_requires_ones() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(DesignMatrix::new(x, true).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let x = orthogonal_polynomial_features(&[0.0, 1.0], 1).unwrap();
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,-0.7071"));
    }
}
