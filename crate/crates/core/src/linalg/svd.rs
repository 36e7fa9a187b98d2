use alloc::vec;
use alloc::vec::Vec;

use super::{LinalgError, Matrix};
use crate::math;

/// Singular value decomposition `A = U * diag(S) * Vt` in economy form.
///
/// With `k = min(rows, cols)`: `u` is `rows x k` with orthonormal columns,
/// `s` holds `k` non-negative values sorted non-increasing, and `vt` is
/// `k x cols` with orthonormal rows. Singular-vector signs are normalized
/// so the largest-magnitude entry of every `u` column is non-negative,
/// making the factors bit-stable across runs.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// `U * diag(S) * Vt`, for reconstruction checks.
    pub fn reconstruct(&self) -> Result<Matrix, LinalgError> {
        let mut scaled = self.vt.clone();
        for (i, &si) in self.s.iter().enumerate() {
            for v in scaled.row_mut(i) {
                *v *= si;
            }
        }
        self.u.matmul(&scaled)
    }
}

// Rotations stop once every column pair satisfies |dot| <= ORTH_TOL * |a||b|.
const ORTH_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 64;

/// One-sided Jacobi SVD.
///
/// Wide matrices are transposed internally, so callers may pass either
/// orientation. Rejects non-finite input.
pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    a.check_finite()?;
    let mut out = if a.rows() >= a.cols() {
        svd_tall(a)?
    } else {
        let t = svd_tall(&a.transpose())?;
        SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        }
    };
    normalize_signs(&mut out);
    Ok(out)
}

/// Smallest `k` such that the top `k` singular values explain at least
/// `fraction` of the total energy (sum of squared singular values).
pub fn truncate_by_variance(s: &[f64], fraction: f64) -> Result<usize, LinalgError> {
    if fraction.is_nan() || fraction <= 0.0 || fraction > 1.0 {
        return Err(LinalgError::InvalidFraction { fraction });
    }
    if s.is_empty() {
        return Err(LinalgError::NoVariance);
    }
    for (i, &v) in s.iter().enumerate() {
        if v < 0.0 || (i > 0 && v > s[i - 1]) {
            return Err(LinalgError::UnsortedSpectrum { index: i });
        }
    }
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(LinalgError::NoVariance);
    }
    let mut cum = 0.0;
    for (i, &v) in s.iter().enumerate() {
        cum += v * v;
        if cum / total >= fraction {
            return Ok(i + 1);
        }
    }
    // Rounding can leave cum/total marginally below 1.0.
    Ok(s.len())
}

fn svd_tall(a: &Matrix) -> Result<SvdResult, LinalgError> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);

    // Column-major working copies keep the rotations cache-friendly.
    let mut b: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = column_moments(&b[p], &b[q]);
                if alpha * beta == 0.0 || gamma.abs() <= ORTH_TOL * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_pair(&mut b, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { routine: "svd" });
    }

    let norms: Vec<f64> = b
        .iter()
        .map(|col| math::sqrt(col.iter().map(|x| x * x).sum()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let s_max = norms[order[0]];
    let cutoff = s_max * (m.max(n) as f64) * 1e-15;

    let mut s = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vt = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        s.push(norms[src]);
        if norms[src] > cutoff {
            u_cols.push(b[src].iter().map(|x| x / norms[src]).collect());
        } else {
            u_cols.push(orthonormal_completion(m, &u_cols));
        }
        for (j, &vj) in v[src].iter().enumerate() {
            vt.set(k, j, vj);
        }
    }

    let mut u = Matrix::zeros(m, n);
    for (k, col) in u_cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            u.set(i, k, x);
        }
    }
    Ok(SvdResult { u, s, vt })
}

fn column_moments(p: &[f64], q: &[f64]) -> (f64, f64, f64) {
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (a, b) in p.iter().zip(q) {
        alpha += a * a;
        beta += b * b;
        gamma += a * b;
    }
    (alpha, beta, gamma)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    // Split borrow: p < q always.
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = c * *x - s * *y;
        let xq = s * *x + c * *y;
        *x = xp;
        *y = xq;
    }
}

/// Deterministic fill-in for left singular vectors of (numerically) zero
/// singular values: the standard basis vector with the largest residual
/// after orthogonalization against the established columns. The summed
/// residual mass over all candidates is m minus the established count, so
/// the best residual is always positive while columns remain to fill.
fn orthonormal_completion(m: usize, established: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in 0..m {
        let mut v = vec![0.0; m];
        v[cand] = 1.0;
        for col in established {
            let dot: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(col) {
                *vi -= dot * ci;
            }
        }
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if best.as_ref().is_none_or(|(b, _)| norm_sq > *b) {
            best = Some((norm_sq, v));
        }
    }
    let (norm_sq, mut v) = best.expect("m > 0");
    let norm = math::sqrt(norm_sq);
    for vi in &mut v {
        *vi /= norm;
    }
    v
}

fn normalize_signs(out: &mut SvdResult) {
    for k in 0..out.s.len() {
        let mut best = 0usize;
        let mut best_abs = out.u.get(0, k).abs();
        for i in 1..out.u.rows() {
            let a = out.u.get(i, k).abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if out.u.get(best, k) < 0.0 {
            for i in 0..out.u.rows() {
                let v = out.u.get(i, k);
                out.u.set(i, k, -v);
            }
            for j in 0..out.vt.cols() {
                let v = out.vt.get(k, j);
                out.vt.set(k, j, -v);
            }
        }
    }
}
