//! Quadratic-Chi histogram distance.
//!
//! `QC(P,Q) = sqrt( Σ_ij z_i z_j A_ij )` with `z_i = (P_i − Q_i) / D_i^m`
//! and `D_i = Σ_c (P_c + Q_c) A_ci`. Bins with `D_i = 0` contribute nothing.
//! Only bins in the union support of `P` and `Q` can be nonzero, so the sum
//! runs over that support.
//!
//! The radicand is clamped at zero: the clipped-CIEDE2000 similarity matrix
//! is not positive semidefinite over the full grid, so for some histogram
//! pairs the quadratic form is slightly negative.

use crate::error::{Error, Result};
use crate::histogram::HsvHistogram;
use crate::transport::SimilarityMatrix;

pub const DEFAULT_QC_EXPONENT: f64 = 0.5;

pub fn quadratic_chi(p: &HsvHistogram, q: &HsvHistogram, a: &SimilarityMatrix, m: f64) -> Result<f64> {
    p.require_normalized()?;
    q.require_normalized()?;
    if !(0.0..1.0).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "QC exponent m must be in [0,1), got {m}"
        )));
    }
    if p.len() != q.len() || a.len() != p.len() {
        return Err(Error::DimensionMismatch(format!(
            "histograms over {} and {} bins, similarity over {}",
            p.len(),
            q.len(),
            a.len()
        )));
    }
    Ok(quadratic_chi_unchecked(p.mass(), q.mass(), a, m))
}

pub(crate) fn quadratic_chi_unchecked(p: &[f64], q: &[f64], a: &SimilarityMatrix, m: f64) -> f64 {
    let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] + q[i] > 0.0).collect();
    let n = support.len();
    if n == 0 {
        return 0.0;
    }
    let sim = a.submatrix(&support);
    let sums: Vec<f64> = support.iter().map(|&c| p[c] + q[c]).collect();

    let z: Vec<f64> = (0..n)
        .map(|i| {
            let diff = p[support[i]] - q[support[i]];
            if diff == 0.0 {
                return 0.0;
            }
            let d: f64 = (0..n).map(|c| sums[c] * sim[c * n + i]).sum();
            if d <= 0.0 {
                0.0
            } else if m == 0.0 {
                diff
            } else {
                diff / d.powf(m)
            }
        })
        .collect();

    let active: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
    let mut radicand = 0.0;
    for &i in &active {
        let row: f64 = active.iter().map(|&j| z[j] * sim[i * n + j]).sum();
        radicand += z[i] * row;
    }
    radicand.max(0.0).sqrt()
}
