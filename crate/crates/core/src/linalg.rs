//! Dense linear algebra helpers shared by the numerical modules.
//!
//! Factorizations come from `nalgebra`; this module fixes the ordering and
//! sign conventions the rest of the crate relies on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition numbers at or above this are treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e10;

/// Thin SVD with singular values in descending order.
///
/// Each left singular vector is flipped so that its largest-magnitude entry is
/// positive (the matching right vector flips with it).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Shape("SVD of an empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("SVD input contains non-finite values".into()));
        }
        let svd = m.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Numeric("SVD did not produce singular vectors".into())),
        };
        let s = svd.singular_values;
        let r = s.len();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

        let mut us = DMatrix::zeros(u.nrows(), r);
        let mut vs = DMatrix::zeros(r, v_t.ncols());
        let mut ss = DVector::zeros(r);
        for (dst, &src) in order.iter().enumerate() {
            let col = u.column(src);
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            us.set_column(dst, &(col * sign));
            vs.set_row(dst, &(v_t.row(src) * sign));
            ss[dst] = s[src];
        }
        Ok(Self {
            u: us,
            singular_values: ss,
            v_t: vs,
        })
    }

    /// `U diag(s) Vᵀ` using only the first `rank` triplets.
    pub fn reconstruct(&self, rank: usize) -> DMatrix<f64> {
        let r = rank.min(self.singular_values.len());
        let mut out = DMatrix::zeros(self.u.nrows(), self.v_t.ncols());
        for i in 0..r {
            let s = self.singular_values[i];
            if s == 0.0 {
                continue;
            }
            out += (self.u.column(i) * s) * self.v_t.row(i);
        }
        out
    }
}

/// Solution of a dense least-squares problem `min ‖y − D c‖₂`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// `(DᵀD)⁻¹`, used for standard errors.
    pub unscaled_covariance: DMatrix<f64>,
    pub condition: f64,
}

/// QR least squares. `names` labels the design columns for error messages.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::Shape(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if p == 0 {
        return Err(Error::Shape("design has no columns".into()));
    }
    if n < p {
        return Err(Error::Degenerate(format!(
            "{n} observations cannot determine {p} coefficients"
        )));
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("least-squares input contains non-finite values".into()));
    }

    let sv = design.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let qr = design.clone().qr();
    let r = qr.r();
    if !(condition < MAX_CONDITION) {
        // Smallest diagonal of R relative to its column norm marks the column
        // that adds least new direction to the ones before it.
        let mut worst = 0;
        let mut worst_ratio = f64::INFINITY;
        for j in 0..p {
            let norm = design.column(j).norm();
            let ratio = if norm > 0.0 { r[(j, j)].abs() / norm } else { 0.0 };
            if ratio < worst_ratio {
                worst_ratio = ratio;
                worst = j;
            }
        }
        let name = names.get(worst).cloned().unwrap_or_else(|| format!("#{worst}"));
        return Err(Error::Conditioning {
            column: worst,
            name,
            condition,
        });
    }

    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    let residuals = y - design * &coefficients;
    let rss = residuals.norm_squared();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numeric("triangular inverse failed".into()))?;
    let unscaled_covariance = &r_inv * r_inv.transpose();

    Ok(LeastSquares {
        coefficients,
        residuals,
        rss,
        unscaled_covariance,
        condition,
    })
}

/// Format with 17 significant digits so the text re-parses to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
