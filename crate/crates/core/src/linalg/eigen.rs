use alloc::vec::Vec;

use super::{LinalgError, Matrix};
use crate::math;

/// Eigendecomposition of a symmetric matrix: `values` sorted
/// non-increasing, `vectors` holding the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition for symmetric input.
///
/// Symmetry is verified up to `1e-10` (scaled by the largest entry);
/// asymmetric matrices are rejected rather than silently symmetrized.
pub fn sym_eigen(c: &Matrix) -> Result<SymEigen, LinalgError> {
    let n = c.rows();
    if c.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            left: (c.rows(), c.cols()),
            right: (c.cols(), c.cols()),
        });
    }
    c.check_finite()?;
    let sym_tol = 1e-10 * c.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (c.get(i, j) - c.get(j, i)).abs();
            if delta > sym_tol {
                return Err(LinalgError::NotSymmetric {
                    row: i,
                    col: j,
                    delta,
                });
            }
        }
    }

    let mut a: Vec<Vec<f64>> = (0..n).map(|i| c.row(i).to_vec()).collect();
    let mut v = Matrix::identity(n);
    let thresh = 1e-14 * c.frobenius_norm().max(1e-300);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                if a[p][q].abs() <= thresh {
                    continue;
                }
                rotated = true;
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + math::sqrt(1.0 + theta * theta));
                let cr = 1.0 / math::sqrt(1.0 + t * t);
                let sr = cr * t;
                // A <- J^T A J
                for row in a.iter_mut() {
                    let aip = row[p];
                    let aiq = row[q];
                    row[p] = cr * aip - sr * aiq;
                    row[q] = sr * aip + cr * aiq;
                }
                let (head, tail) = a.split_at_mut(q);
                let (row_p, row_q) = (&mut head[p], &mut tail[0]);
                for (apj, aqj) in row_p.iter_mut().zip(row_q.iter_mut()) {
                    let rp = cr * *apj - sr * *aqj;
                    let rq = sr * *apj + cr * *aqj;
                    *apj = rp;
                    *aqj = rq;
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, cr * vip - sr * viq);
                    v.set(i, q, sr * vip + cr * viq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            routine: "sym_eigen",
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, k, v.get(i, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Inverse square root of a symmetric PSD matrix with pseudo-inverse
/// handling of small eigenvalues: modes with eigenvalue below `eps` are
/// dropped, so `R * c * R` is the projector onto the retained eigenspace.
pub fn inv_sqrt_psd(c: &Matrix, eps: f64) -> Result<Matrix, LinalgError> {
    let e = sym_eigen(c)?;
    let scale = e.values.first().copied().unwrap_or(0.0).max(0.0);
    let neg_tol = 1e-10 * scale.max(1.0);
    if let Some(&min) = e.values.last() {
        if min < -neg_tol {
            return Err(LinalgError::NotPositiveSemiDefinite { eigenvalue: min });
        }
    }

    let n = c.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in e.values.iter().enumerate() {
        if lambda <= 0.0 || lambda < eps {
            continue;
        }
        let w = 1.0 / math::sqrt(lambda);
        for i in 0..n {
            let vi = e.vectors.get(i, k);
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                let cur = out.get(i, j);
                out.set(i, j, cur + w * vi * e.vectors.get(j, k));
            }
        }
    }
    Ok(out)
}
