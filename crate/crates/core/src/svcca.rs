//! SVCCA similarity pipeline: per-neuron centering, variance-fraction SVD
//! truncation, canonical correlation analysis between the retained
//! subspaces, and top-T correlation averaging.
//!
//! Comparing two layers means building one `ActivationMatrix` per network
//! (row `j` holds neuron `j`'s activation over all samples, in identical
//! sample order) and asking for the canonical correlation spectrum of the
//! dominant subspaces. Affine reparametrizations of either side leave the
//! spectrum unchanged, which is exactly what makes it usable as a
//! representation (rather than parameter) similarity.

use alloc::string::String;
use alloc::vec::Vec;

use core::fmt;

use crate::data::subset_fingerprint;
use crate::linalg::{self, LinalgError, Matrix};

/// Per-layer neuron-by-sample activation matrix for one model variant.
///
/// `values` is `M x N` (neurons by samples). Instances being compared must
/// carry the same dataset fingerprint: that is how identical sample
/// ordering is enforced across variants.
#[derive(Debug, Clone)]
pub struct ActivationMatrix {
    pub layer_name: String,
    pub values: Matrix,
    pub fingerprint: u64,
}

impl ActivationMatrix {
    pub fn new(
        layer_name: impl Into<String>,
        values: Matrix,
        fingerprint: u64,
    ) -> Result<Self, SvccaError> {
        if values.cols() < 2 {
            return Err(SvccaError::TooFewSamples {
                samples: values.cols(),
            });
        }
        Ok(ActivationMatrix {
            layer_name: layer_name.into(),
            values,
            fingerprint,
        })
    }

    #[inline]
    pub fn neurons(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn samples(&self) -> usize {
        self.values.cols()
    }

    /// Restricts to the given sample columns; the fingerprint is re-derived
    /// so matching subsets of predictions and activations stay aligned.
    pub fn select_samples(&self, indices: &[usize]) -> Result<ActivationMatrix, SvccaError> {
        if indices.len() < 2 {
            return Err(SvccaError::TooFewSamples {
                samples: indices.len(),
            });
        }
        for &i in indices {
            if i >= self.samples() {
                return Err(SvccaError::BadSampleIndex {
                    index: i,
                    samples: self.samples(),
                });
            }
        }
        Ok(ActivationMatrix {
            layer_name: self.layer_name.clone(),
            values: self.values.select_cols(indices)?,
            fingerprint: subset_fingerprint(self.fingerprint, indices),
        })
    }
}

/// SVCCA knobs: the variance fraction retained by the SVD truncation and
/// the number of top correlations averaged into the similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvccaConfig {
    pub variance_fraction: f64,
    pub top_t: usize,
}

impl Default for SvccaConfig {
    fn default() -> Self {
        SvccaConfig {
            variance_fraction: 0.99,
            top_t: 20,
        }
    }
}

/// Canonical correlation spectrum between two truncated subspaces.
#[derive(Debug, Clone)]
pub struct CcaSpectrum {
    /// Correlations in `[0, 1]`, non-increasing; length `min(k1, k2)`.
    pub correlations: Vec<f64>,
    pub k1: usize,
    pub k2: usize,
    /// Set when the sample count does not exceed the larger retained rank;
    /// the spectrum is still computed but sits in a degenerate regime.
    pub rank_deficient: bool,
}

/// Subtracts each neuron's mean activation; layer name and fingerprint are
/// preserved. CCA's correlation semantics require centered variables.
pub fn center_rows(z: &ActivationMatrix) -> ActivationMatrix {
    let mut values = z.values.clone();
    for r in 0..values.rows() {
        let row = values.row_mut(r);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        for v in row {
            *v -= mean;
        }
    }
    ActivationMatrix {
        layer_name: z.layer_name.clone(),
        values,
        fingerprint: z.fingerprint,
    }
}

/// Activations centered and projected onto their dominant SVD subspace.
///
/// Precomputing this once per variant makes all-pairs ensemble comparisons
/// cheap: the SVD happens K times instead of K*(K-1) times.
#[derive(Debug, Clone)]
pub struct ProjectedActivations {
    /// `k x N`: row `i` is the i-th singular direction scaled by its
    /// singular value (mean-zero by construction).
    subspace: Matrix,
    fingerprint: u64,
}

impl ProjectedActivations {
    #[inline]
    pub fn rank(&self) -> usize {
        self.subspace.rows()
    }

    #[inline]
    pub fn samples(&self) -> usize {
        self.subspace.cols()
    }
}

/// Centers and truncates one activation matrix to the subspace explaining
/// `variance_fraction` of the squared-singular-value energy.
pub fn project(
    z: &ActivationMatrix,
    variance_fraction: f64,
) -> Result<ProjectedActivations, SvccaError> {
    let centered = center_rows(z);
    let decomp = linalg::svd(&centered.values)?;
    let k = linalg::truncate_by_variance(&decomp.s, variance_fraction)?;
    let n = z.samples();
    let mut subspace = Matrix::zeros(k, n);
    for i in 0..k {
        let si = decomp.s[i];
        for j in 0..n {
            subspace.set(i, j, si * decomp.vt.get(i, j));
        }
    }
    Ok(ProjectedActivations {
        subspace,
        fingerprint: z.fingerprint,
    })
}

/// CCA between two projected subspaces: the correlations are the singular
/// values of `Sxx^{-1/2} Sxy Syy^{-1/2}` built from (N-1)-normalized
/// covariance blocks.
pub fn cca_projected(
    p1: &ProjectedActivations,
    p2: &ProjectedActivations,
) -> Result<CcaSpectrum, SvccaError> {
    if p1.fingerprint != p2.fingerprint {
        return Err(SvccaError::SampleAlignment {
            left: p1.fingerprint,
            right: p2.fingerprint,
        });
    }
    if p1.samples() != p2.samples() {
        return Err(SvccaError::SampleCountMismatch {
            left: p1.samples(),
            right: p2.samples(),
        });
    }
    let n = p1.samples();
    let norm = 1.0 / (n as f64 - 1.0);
    let x = &p1.subspace;
    let y = &p2.subspace;
    let sxx = x.matmul(&x.transpose())?.scale(norm);
    let syy = y.matmul(&y.transpose())?.scale(norm);
    let sxy = x.matmul(&y.transpose())?.scale(norm);

    // The projected covariances are diagonal up to rounding, so the largest
    // diagonal entry is the spectral scale for the whitening drop-off.
    let wx = linalg::inv_sqrt_psd(&sxx, 1e-12 * max_diag(&sxx))?;
    let wy = linalg::inv_sqrt_psd(&syy, 1e-12 * max_diag(&syy))?;
    let t = wx.matmul(&sxy)?.matmul(&wy)?;
    let correlations: Vec<f64> = linalg::svd(&t)?
        .s
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0))
        .collect();

    // Centering caps the retained rank at N-1, so the degenerate regime is
    // "the subspace saturates the sample dimension": k = N-1 (CCA then
    // reports spuriously perfect correlations).
    let (k1, k2) = (p1.rank(), p2.rank());
    Ok(CcaSpectrum {
        correlations,
        k1,
        k2,
        rank_deficient: n <= k1.max(k2) + 1,
    })
}

/// Full SVCCA spectrum between two activation matrices.
pub fn svcca_correlations(
    z1: &ActivationMatrix,
    z2: &ActivationMatrix,
    variance_fraction: f64,
) -> Result<CcaSpectrum, SvccaError> {
    let p1 = project(z1, variance_fraction)?;
    let p2 = project(z2, variance_fraction)?;
    cca_projected(&p1, &p2)
}

/// Mean of the `min(top_t, available)` largest correlations.
pub fn svcca_similarity(spectrum: &CcaSpectrum, top_t: usize) -> Result<f64, SvccaError> {
    if top_t == 0 {
        return Err(SvccaError::InvalidTopT);
    }
    if spectrum.correlations.is_empty() {
        return Err(SvccaError::EmptySpectrum);
    }
    let t = top_t.min(spectrum.correlations.len());
    Ok(spectrum.correlations[..t].iter().sum::<f64>() / t as f64)
}

fn max_diag(m: &Matrix) -> f64 {
    (0..m.rows()).fold(0.0_f64, |acc, i| acc.max(m.get(i, i)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SvccaError {
    TooFewSamples { samples: usize },
    BadSampleIndex { index: usize, samples: usize },
    SampleAlignment { left: u64, right: u64 },
    SampleCountMismatch { left: usize, right: usize },
    EmptySpectrum,
    InvalidTopT,
    Linalg(LinalgError),
}

impl From<LinalgError> for SvccaError {
    fn from(e: LinalgError) -> Self {
        SvccaError::Linalg(e)
    }
}

impl fmt::Display for SvccaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SvccaError::TooFewSamples { samples } => {
                write!(
                    f,
                    "activation matrix needs at least 2 samples, got {samples}"
                )
            }
            SvccaError::BadSampleIndex { index, samples } => {
                write!(f, "sample index {index} out of range for {samples} samples")
            }
            SvccaError::SampleAlignment { left, right } => write!(
                f,
                "sample alignment violated: fingerprints {left:016x} vs {right:016x}"
            ),
            SvccaError::SampleCountMismatch { left, right } => {
                write!(f, "sample counts differ: {left} vs {right}")
            }
            SvccaError::EmptySpectrum => write!(f, "empty correlation spectrum"),
            SvccaError::InvalidTopT => write!(f, "top_t must be at least 1"),
            SvccaError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SvccaError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    const FP: u64 = 0xFEED;

    fn random_activations(m: usize, n: usize, seed: u64) -> ActivationMatrix {
        let mut rng = crate::rng::stream(seed, 0x5C);
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        ActivationMatrix::new("test", Matrix::new(m, n, data).unwrap(), FP).unwrap()
    }

    #[test]
    fn centering_examples() {
        let z = ActivationMatrix::new(
            "z",
            Matrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![0.0, 2.0, 1.0]]).unwrap(),
            FP,
        )
        .unwrap();
        let c = center_rows(&z);
        assert_eq!(c.values.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(c.values.row(1), &[-1.0, 1.0, 0.0]);
        assert_eq!(c.fingerprint, FP);

        let z2 =
            ActivationMatrix::new("z", Matrix::from_rows(&[vec![0.0, 2.0]]).unwrap(), FP).unwrap();
        assert_eq!(center_rows(&z2).values.row(0), &[-1.0, 1.0]);
    }

    #[test]
    fn centering_zeroes_row_means() {
        let z = random_activations(4, 50, 1);
        let c = center_rows(&z);
        for r in 0..4 {
            let mean = c.values.row(r).iter().sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_correlate_fully() {
        let z = random_activations(6, 300, 2);
        let spec = svcca_correlations(&z, &z, 0.99).unwrap();
        for &c in &spec.correlations {
            assert!((c - 1.0).abs() < 1e-8, "correlation {c}");
        }
    }

    fn invertible_map(m: usize, seed: u64) -> Matrix {
        // A A^T + I is symmetric positive definite, hence invertible.
        let mut rng = crate::rng::stream(seed, 0x1B);
        let a = Matrix::new(
            m,
            m,
            (0..m * m).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
        )
        .unwrap();
        let mut q = a.matmul(&a.transpose()).unwrap();
        for i in 0..m {
            let v = q.get(i, i);
            q.set(i, i, v + 1.0);
        }
        q
    }

    fn affine_copy(z: &ActivationMatrix, seed: u64) -> ActivationMatrix {
        let m = z.neurons();
        let q = invertible_map(m, seed);
        let mut mapped = q.matmul(&z.values).unwrap();
        let mut rng = crate::rng::stream(seed, 0x0F);
        for r in 0..m {
            let offset = rng.gen::<f64>() * 4.0 - 2.0;
            for v in mapped.row_mut(r) {
                *v += offset;
            }
        }
        ActivationMatrix::new("mapped", mapped, z.fingerprint).unwrap()
    }

    #[test]
    fn affine_invariance() {
        let z = random_activations(8, 400, 3);
        let w = affine_copy(&z, 17);
        let spec = svcca_correlations(&z, &w, 0.99).unwrap();
        for &c in &spec.correlations {
            assert!((c - 1.0).abs() < 1e-6, "correlation {c}");
        }
    }

    #[test]
    fn single_neuron_pair_reduces_to_pearson() {
        let mut rng = crate::rng::stream(4, 0x11);
        let a: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.3 * v + 0.1 * rng.gen::<f64>()).collect();
        let z1 = ActivationMatrix::new("a", Matrix::new(1, 200, a.clone()).unwrap(), FP).unwrap();
        let z2 = ActivationMatrix::new("b", Matrix::new(1, 200, b.clone()).unwrap(), FP).unwrap();
        let spec = svcca_correlations(&z1, &z2, 0.99).unwrap();
        assert_eq!(spec.correlations.len(), 1);
        let expected = crate::linalg::pearson(&a, &b).unwrap().abs();
        assert!((spec.correlations[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn spectrum_is_symmetric() {
        let z1 = random_activations(7, 250, 5);
        let z2 = random_activations(9, 250, 6);
        let ab = svcca_correlations(&z1, &z2, 0.99).unwrap();
        let ba = svcca_correlations(&z2, &z1, 0.99).unwrap();
        assert_eq!(ab.correlations.len(), ba.correlations.len());
        for (x, y) in ab.correlations.iter().zip(&ba.correlations) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn neuron_permutation_leaves_spectrum() {
        let z1 = random_activations(6, 200, 7);
        let z2 = random_activations(6, 200, 8);
        let base = svcca_correlations(&z1, &z2, 0.99).unwrap();

        // Reverse the neuron order of z1.
        let rows: Vec<Vec<f64>> = (0..6).rev().map(|r| z1.values.row(r).to_vec()).collect();
        let permuted = ActivationMatrix::new("p", Matrix::from_rows(&rows).unwrap(), FP).unwrap();
        let perm = svcca_correlations(&permuted, &z2, 0.99).unwrap();
        for (x, y) in base.correlations.iter().zip(&perm.correlations) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn independent_inputs_correlate_weakly() {
        let mut total = 0.0;
        for trial in 0..20 {
            let z1 = random_activations(10, 2000, 100 + trial);
            let z2 = random_activations(10, 2000, 200 + trial);
            let spec = svcca_correlations(&z1, &z2, 0.99).unwrap();
            total += spec.correlations.iter().sum::<f64>() / spec.correlations.len() as f64;
        }
        let mean = total / 20.0;
        assert!(mean < 0.3, "independent-matrix mean correlation {mean}");
    }

    #[test]
    fn fingerprint_mismatch_rejected() {
        let z1 = random_activations(4, 100, 9);
        let mut z2 = random_activations(4, 100, 10);
        z2.fingerprint = 0xBAD;
        let err = svcca_correlations(&z1, &z2, 0.99).unwrap_err();
        assert!(matches!(err, SvccaError::SampleAlignment { .. }));
        assert!(alloc::format!("{err}").contains("sample alignment violated"));
    }

    #[test]
    fn rank_deficient_regime_is_flagged() {
        let z1 = random_activations(6, 4, 11);
        let z2 = random_activations(6, 4, 12);
        let spec = svcca_correlations(&z1, &z2, 1.0).unwrap();
        assert!(spec.rank_deficient);

        let healthy = svcca_correlations(
            &random_activations(4, 100, 13),
            &random_activations(4, 100, 14),
            0.99,
        )
        .unwrap();
        assert!(!healthy.rank_deficient);
    }

    #[test]
    fn similarity_examples() {
        let spec = |c: Vec<f64>| CcaSpectrum {
            correlations: c,
            k1: 3,
            k2: 3,
            rank_deficient: false,
        };
        assert_eq!(
            svcca_similarity(&spec(vec![1.0, 1.0, 1.0]), 20).unwrap(),
            1.0
        );
        assert!((svcca_similarity(&spec(vec![0.9, 0.5, 0.1]), 2).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(svcca_similarity(&spec(vec![0.8]), 20).unwrap(), 0.8);
        assert_eq!(
            svcca_similarity(&spec(vec![]), 20),
            Err(SvccaError::EmptySpectrum)
        );
        assert_eq!(
            svcca_similarity(&spec(vec![0.5]), 0),
            Err(SvccaError::InvalidTopT)
        );
    }

    // Independent oracle for the top canonical correlation: alternating
    // maximization of corr(u^T X, v^T Y) over unit projection vectors,
    // using plain Gaussian elimination. No shared code with the SVCCA path.
    #[allow(clippy::needless_range_loop)]
    mod oracle {
        use alloc::vec;
        use alloc::vec::Vec;

        fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
            let n = b.len();
            for col in 0..n {
                let mut piv = col;
                for r in col + 1..n {
                    if a[r][col].abs() > a[piv][col].abs() {
                        piv = r;
                    }
                }
                a.swap(col, piv);
                b.swap(col, piv);
                let d = a[col][col];
                for r in col + 1..n {
                    let factor = a[r][col] / d;
                    for c in col..n {
                        a[r][c] -= factor * a[col][c];
                    }
                    b[r] -= factor * b[col];
                }
            }
            let mut x = vec![0.0; n];
            for r in (0..n).rev() {
                let mut acc = b[r];
                for c in r + 1..n {
                    acc -= a[r][c] * x[c];
                }
                x[r] = acc / a[r][r];
            }
            x
        }

        fn cov(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
            let n = x[0].len() as f64;
            x.iter()
                .map(|xi| {
                    y.iter()
                        .map(|yj| xi.iter().zip(yj).map(|(a, b)| a * b).sum::<f64>() / (n - 1.0))
                        .collect()
                })
                .collect()
        }

        fn center(rows: &mut [Vec<f64>]) {
            for row in rows {
                let m = row.iter().sum::<f64>() / row.len() as f64;
                for v in row.iter_mut() {
                    *v -= m;
                }
            }
        }

        fn corr(u: &[f64], v: &[f64], x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
            let n = x[0].len();
            let mut px = vec![0.0; n];
            let mut py = vec![0.0; n];
            for (ui, xi) in u.iter().zip(x) {
                for (p, &val) in px.iter_mut().zip(xi) {
                    *p += ui * val;
                }
            }
            for (vi, yi) in v.iter().zip(y) {
                for (p, &val) in py.iter_mut().zip(yi) {
                    *p += vi * val;
                }
            }
            let sx: f64 = px.iter().map(|a| a * a).sum();
            let sy: f64 = py.iter().map(|a| a * a).sum();
            let sxy: f64 = px.iter().zip(&py).map(|(a, b)| a * b).sum();
            sxy / (sx * sy).sqrt()
        }

        /// Top canonical correlation by alternating conditional maximization.
        pub fn top_canonical_correlation(x_in: &[Vec<f64>], y_in: &[Vec<f64>]) -> f64 {
            let mut x = x_in.to_vec();
            let mut y = y_in.to_vec();
            center(&mut x);
            center(&mut y);
            let sxx = cov(&x, &x);
            let syy = cov(&y, &y);
            let sxy = cov(&x, &y);
            let syx = cov(&y, &x);

            let ridge = |mut m: Vec<Vec<f64>>| {
                let scale = m
                    .iter()
                    .map(|r| r.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                    .fold(0.0f64, f64::max);
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] += 1e-12 * scale.max(1.0);
                }
                m
            };
            let sxx = ridge(sxx);
            let syy = ridge(syy);

            let mut u = vec![1.0; x.len()];
            let mut best = 0.0f64;
            for _ in 0..500 {
                let rhs: Vec<f64> = syx
                    .iter()
                    .map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum())
                    .collect();
                let v = solve(syy.clone(), rhs);
                let rhs: Vec<f64> = sxy
                    .iter()
                    .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
                    .collect();
                u = solve(sxx.clone(), rhs);
                let norm = (u.iter().map(|a| a * a).sum::<f64>()).sqrt();
                for ui in &mut u {
                    *ui /= norm;
                }
                let c = corr(&u, &v, &x, &y).abs();
                if (c - best).abs() < 1e-12 {
                    best = best.max(c);
                    break;
                }
                best = best.max(c);
            }
            best
        }
    }

    #[test]
    fn top_correlation_matches_direct_maximization() {
        for trial in 0..10u64 {
            let m1 = 1 + (trial % 3) as usize;
            let m2 = 1 + ((trial / 3) % 3) as usize;
            let z1 = random_activations(m1, 150, 300 + trial);
            let z2 = random_activations(m2, 150, 400 + trial);

            // fraction 1.0 keeps the full (rank <= 3) subspace, so the
            // spectrum is plain CCA and directly comparable to the oracle.
            let spec = svcca_correlations(&z1, &z2, 1.0).unwrap();
            let x: Vec<Vec<f64>> = (0..m1).map(|r| z1.values.row(r).to_vec()).collect();
            let y: Vec<Vec<f64>> = (0..m2).map(|r| z2.values.row(r).to_vec()).collect();
            let expected = oracle::top_canonical_correlation(&x, &y);
            assert!(
                (spec.correlations[0] - expected).abs() < 1e-4,
                "trial {trial}: {} vs oracle {expected}",
                spec.correlations[0]
            );
        }
    }

    #[test]
    fn select_samples_rederives_fingerprint() {
        let z = random_activations(3, 10, 21);
        let sub = z.select_samples(&[1, 3, 5]).unwrap();
        assert_eq!(sub.samples(), 3);
        assert_ne!(sub.fingerprint, z.fingerprint);
        let sub2 = z.select_samples(&[1, 3, 5]).unwrap();
        assert_eq!(sub.fingerprint, sub2.fingerprint);
        assert!(matches!(
            z.select_samples(&[1, 99]),
            Err(SvccaError::BadSampleIndex { .. })
        ));
    }
}
