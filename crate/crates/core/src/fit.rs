//! Small least-squares helpers for the experiment harnesses.

use crate::error::{QcError, Result};
use nalgebra::{DMatrix, DVector};

/// Least-squares line through `(x, y)` pairs: returns `(slope, intercept)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    let c = lstsq(pts.iter().map(|(x, _)| vec![*x, 1.0]).collect(), pts.iter().map(|p| p.1).collect())?;
    Ok((c[0], c[1]))
}

/// Solves `min ‖A c − b‖` for rows of A given as vectors.
pub fn lstsq(rows: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Vec<f64>> {
    let m = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    if m < k || k == 0 {
        return Err(QcError::InsufficientData(format!("{m} samples for {k} unknowns")));
    }
    let a = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-13 * smax {
        return Err(QcError::InsufficientData("rank-deficient design".into()));
    }
    let c = svd.solve(&DVector::from_vec(b), 0.0).map_err(|e| QcError::InsufficientData(e.to_string()))?;
    Ok(c.iter().copied().collect())
}

/// `(max − min) / |mean|`.
pub fn relative_spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (max - min) / mean.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (s, b) = linear_fit(&pts).unwrap();
        assert!((s + 2.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
        assert!(linear_fit(&[(1.0, 1.0)]).is_err());
        assert!((relative_spread(&[0.9, 1.1]) - 0.2).abs() < 1e-12);
    }
}
