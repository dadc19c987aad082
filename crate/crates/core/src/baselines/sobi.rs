use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Symmetrized empirical covariances of a centred signal at several lags.
#[derive(Clone, Debug, PartialEq)]
pub struct LaggedCovarianceSet {
    pub lags: Vec<usize>,
    pub matrices: Vec<DMatrix<f64>>,
}

impl LaggedCovarianceSet {
    /// `x` is channels × time and assumed centred.
    pub fn from_samples(x: ArrayView2<'_, f64>, lags: &[usize]) -> Result<Self> {
        let (n, len) = x.dim();
        if let Some(&max) = lags.iter().max() {
            if max >= len {
                return Err(Error::DegenerateInput(format!("lag {max} is not shorter than the {len}-sample signal")));
            }
        }
        let matrices = lags
            .iter()
            .map(|&lag| {
                let count = (len - lag) as f64;
                let mut m = DMatrix::zeros(n, n);
                for a in 0..n {
                    let xa = x.row(a);
                    for b in 0..n {
                        let xb = x.row(b);
                        let mut acc = 0.0;
                        for t in 0..len - lag {
                            acc += xa[t + lag] * xb[t];
                        }
                        m[(a, b)] = acc / count;
                    }
                }
                (&m + m.transpose()) * 0.5
            })
            .collect();
        Ok(LaggedCovarianceSet { lags: lags.to_vec(), matrices })
    }
}

/// Sum of squared off-diagonal entries over a set of matrices.
pub fn off_diagonal_energy(matrices: &[DMatrix<f64>]) -> f64 {
    matrices
        .iter()
        .map(|m| {
            let mut s = 0.0;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if i != j {
                        s += m[(i, j)] * m[(i, j)];
                    }
                }
            }
            s
        })
        .sum()
}

/// Orthogonal `V` approximately diagonalizing every `Vᵀ M V`, by Jacobi
/// (Givens) sweeps stopped when no rotation exceeds `threshold` in sine.
/// Returns `V` and the off-diagonal energy after each sweep (first entry:
/// before any rotation).
pub fn joint_diagonalize(matrices: &mut [DMatrix<f64>], threshold: f64, max_sweeps: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = matrices.first().map_or(0, |m| m.nrows());
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut history = vec![off_diagonal_energy(matrices)];
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut g00, mut g01, mut g11) = (0.0, 0.0, 0.0);
                for m in matrices.iter() {
                    let h0 = m[(p, p)] - m[(q, q)];
                    let h1 = m[(p, q)] + m[(q, p)];
                    g00 += h0 * h0;
                    g01 += h0 * h1;
                    g11 += h1 * h1;
                }
                let ton = g00 - g11;
                let toff = 2.0 * g01;
                let angle = 0.5 * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (s, c) = angle.sin_cos();
                if s.abs() <= threshold {
                    continue;
                }
                rotated = true;
                for m in matrices.iter_mut() {
                    for k in 0..n {
                        let (mp, mq) = (m[(p, k)], m[(q, k)]);
                        m[(p, k)] = c * mp + s * mq;
                        m[(q, k)] = c * mq - s * mp;
                    }
                    for k in 0..n {
                        let (mp, mq) = (m[(k, p)], m[(k, q)]);
                        m[(k, p)] = c * mp + s * mq;
                        m[(k, q)] = c * mq - s * mp;
                    }
                }
                for k in 0..n {
                    let (vp, vq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vp + s * vq;
                    v[(k, q)] = c * vq - s * vp;
                }
            }
        }
        history.push(off_diagonal_energy(matrices));
        if !rotated {
            break;
        }
    }
    (v, history)
}

/// Result of [`sobi_detailed`].
#[derive(Clone, Debug, PartialEq)]
pub struct SobiOutcome {
    pub unmixing: DMatrix<f64>,
    pub whitener: DMatrix<f64>,
    /// Off-diagonal energy of the whitened lagged covariances per sweep.
    pub off_diagonal: Vec<f64>,
}

pub const DEFAULT_LAGS: [usize; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
const ROTATION_THRESHOLD: f64 = 1e-8;

/// SOBI unmixing matrix of the channels × time samples `x`.
///
/// Rows come out in a canonical order (decreasing lag-one autocorrelation
/// of the separated sources) with the largest-magnitude entry of each row
/// positive, so the result does not depend on the channel order.
pub fn sobi_detailed(x: ArrayView2<'_, f64>, lags: &[usize]) -> Result<SobiOutcome> {
    let (n, len) = x.dim();
    if n == 0 || len < 2 {
        return Err(Error::DegenerateInput(format!("SOBI needs a non-empty signal, got {n}×{len}")));
    }
    if lags.is_empty() || lags.contains(&0) {
        return Err(Error::Config("SOBI lags must be non-empty and positive".into()));
    }
    let mut centred = x.to_owned();
    for mut row in centred.rows_mut() {
        let mean = row.sum() / len as f64;
        row -= mean;
    }
    let c0 = &LaggedCovarianceSet::from_samples(centred.view(), &[0])?.matrices[0];
    let eig = SymmetricEigen::new(c0.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::DegenerateInput(format!(
            "zero-lag covariance is rank deficient (eigenvalues {min:e} … {max:e})"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let whitener = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let whitened = {
        let w = &whitener;
        ndarray::Array2::from_shape_fn((n, len), |(a, t)| (0..n).map(|b| w[(a, b)] * centred[[b, t]]).sum())
    };
    let mut set = LaggedCovarianceSet::from_samples(whitened.view(), lags)?;
    let (v, off_diagonal) = joint_diagonalize(&mut set.matrices, ROTATION_THRESHOLD, 100);
    let unmixing = v.transpose() * &whitener;

    let first = &set.matrices[0];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| first[(b, b)].total_cmp(&first[(a, a)]).then(a.cmp(&b)));
    let mut unmixing = unmixing.select_rows(&order);
    for mut row in unmixing.row_iter_mut() {
        let lead = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            row *= -1.0;
        }
    }
    Ok(SobiOutcome { unmixing, whitener, off_diagonal })
}

pub fn sobi(x: ArrayView2<'_, f64>, lags: &[usize]) -> Result<DMatrix<f64>> {
    Ok(sobi_detailed(x, lags)?.unmixing)
}
