//! Multiplicity metrics over ensembles of risk-equivalent variants:
//! per-sample and aggregate predictive multiplicity (PM), pairwise and
//! ensemble representational multiplicity (RM), confabulation scores, and
//! the RM/PM correlation summary.

use alloc::vec;
use alloc::vec::Vec;

use core::fmt;

use crate::data::subset_fingerprint;
use crate::linalg::{self, LinalgError, Matrix};
use crate::svcca::{self, ActivationMatrix, SvccaConfig, SvccaError};

/// Output probabilities and argmax labels of `K` variants over one dataset.
///
/// Probability rows must sum to 1 within 1e-6; labels are derived as the
/// argmax with ties broken toward the lowest class index. Any multiplicity
/// computation requires at least two variants.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    variants: usize,
    samples: usize,
    classes: usize,
    probs: Vec<f64>,
    labels: Vec<usize>,
    pub dataset_fingerprint: u64,
}

impl PredictionTable {
    pub fn from_probs(
        variants: usize,
        samples: usize,
        classes: usize,
        probs: Vec<f64>,
        dataset_fingerprint: u64,
    ) -> Result<Self, MultiplicityError> {
        if variants == 0 || samples == 0 || classes == 0 {
            return Err(MultiplicityError::EmptyTable);
        }
        if probs.len() != variants * samples * classes {
            return Err(MultiplicityError::BadLength {
                expected: variants * samples * classes,
                found: probs.len(),
            });
        }
        let mut labels = Vec::with_capacity(variants * samples);
        for k in 0..variants {
            for n in 0..samples {
                let base = (k * samples + n) * classes;
                let row = &probs[base..base + classes];
                let mut sum = 0.0;
                for (c, &p) in row.iter().enumerate() {
                    if !p.is_finite() || !(0.0..=1.0 + 1e-9).contains(&p) {
                        return Err(MultiplicityError::ProbabilityRange {
                            variant: k,
                            sample: n,
                            class: c,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(MultiplicityError::RowSum {
                        variant: k,
                        sample: n,
                        sum,
                    });
                }
                labels.push(argmax_lowest(row));
            }
        }
        Ok(PredictionTable {
            variants,
            samples,
            classes,
            probs,
            labels,
            dataset_fingerprint,
        })
    }

    /// Stacks per-variant `N x C` probability matrices into one table.
    pub fn from_variant_matrices(
        variant_probs: &[Matrix],
        dataset_fingerprint: u64,
    ) -> Result<Self, MultiplicityError> {
        let first = variant_probs.first().ok_or(MultiplicityError::EmptyTable)?;
        let (samples, classes) = (first.rows(), first.cols());
        let mut probs = Vec::with_capacity(variant_probs.len() * samples * classes);
        for m in variant_probs {
            if m.rows() != samples || m.cols() != classes {
                return Err(MultiplicityError::ShapeMismatch {
                    expected: (samples, classes),
                    found: (m.rows(), m.cols()),
                });
            }
            probs.extend_from_slice(m.data());
        }
        PredictionTable::from_probs(
            variant_probs.len(),
            samples,
            classes,
            probs,
            dataset_fingerprint,
        )
    }

    /// Pools the variants of several tables over the same dataset.
    pub fn merge(tables: &[&PredictionTable]) -> Result<Self, MultiplicityError> {
        let first = tables.first().ok_or(MultiplicityError::EmptyTable)?;
        let mut probs = Vec::new();
        let mut variants = 0;
        for t in tables {
            if t.dataset_fingerprint != first.dataset_fingerprint {
                return Err(MultiplicityError::FingerprintMismatch {
                    left: first.dataset_fingerprint,
                    right: t.dataset_fingerprint,
                });
            }
            if t.samples != first.samples || t.classes != first.classes {
                return Err(MultiplicityError::ShapeMismatch {
                    expected: (first.samples, first.classes),
                    found: (t.samples, t.classes),
                });
            }
            probs.extend_from_slice(&t.probs);
            variants += t.variants;
        }
        PredictionTable::from_probs(
            variants,
            first.samples,
            first.classes,
            probs,
            first.dataset_fingerprint,
        )
    }

    /// Restricts to the given samples; the fingerprint is re-derived with
    /// the same rule `ActivationMatrix::select_samples` uses.
    pub fn select_samples(&self, indices: &[usize]) -> Result<Self, MultiplicityError> {
        validate_subset(indices, self.samples)?;
        let mut probs = Vec::with_capacity(self.variants * indices.len() * self.classes);
        for k in 0..self.variants {
            for &n in indices {
                let base = (k * self.samples + n) * self.classes;
                probs.extend_from_slice(&self.probs[base..base + self.classes]);
            }
        }
        PredictionTable::from_probs(
            self.variants,
            indices.len(),
            self.classes,
            probs,
            subset_fingerprint(self.dataset_fingerprint, indices),
        )
    }

    #[inline]
    pub fn variants(&self) -> usize {
        self.variants
    }

    #[inline]
    pub fn samples(&self) -> usize {
        self.samples
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn prob(&self, variant: usize, sample: usize, class: usize) -> f64 {
        self.probs[(variant * self.samples + sample) * self.classes + class]
    }

    #[inline]
    pub fn label(&self, variant: usize, sample: usize) -> usize {
        self.labels[variant * self.samples + sample]
    }

    fn require_ensemble(&self) -> Result<(), MultiplicityError> {
        if self.variants < 2 {
            return Err(MultiplicityError::NeedTwoVariants {
                variants: self.variants,
            });
        }
        Ok(())
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best
}

fn validate_subset(indices: &[usize], samples: usize) -> Result<(), MultiplicityError> {
    if indices.is_empty() {
        return Err(MultiplicityError::EmptySubset);
    }
    let mut seen = vec![false; samples];
    for &i in indices {
        if i >= samples {
            return Err(MultiplicityError::IndexOutOfRange { index: i, samples });
        }
        if seen[i] {
            return Err(MultiplicityError::DuplicateIndex { index: i });
        }
        seen[i] = true;
    }
    Ok(())
}

/// Accuracy window that admits variants into a risk-equivalent ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBand {
    pub target_accuracy: f64,
    pub epsilon: f64,
}

impl RiskBand {
    pub fn new(target_accuracy: f64, epsilon: f64) -> Result<Self, MultiplicityError> {
        let target_ok = target_accuracy > 0.0 && target_accuracy <= 1.0;
        if !target_ok || epsilon.is_nan() || epsilon <= 0.0 {
            return Err(MultiplicityError::InvalidRiskBand {
                target: target_accuracy,
                epsilon,
            });
        }
        Ok(RiskBand {
            target_accuracy,
            epsilon,
        })
    }

    #[inline]
    pub fn contains(&self, accuracy: f64) -> bool {
        (accuracy - self.target_accuracy).abs() < self.epsilon
    }
}

/// How `Var{h(x)}` is read when computing PM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PmMode {
    /// Per-class population variance of the softmax vectors, averaged over
    /// classes, then square-rooted. The default: probability vectors carry
    /// metric structure, class indices do not.
    #[default]
    Probabilities,
    /// Population variance of the numeric class index; comparison mode only.
    Labels,
}

/// Per-sample predictive multiplicity under the default probability mode.
pub fn per_sample_pm(table: &PredictionTable) -> Result<Vec<f64>, MultiplicityError> {
    per_sample_pm_mode(table, PmMode::Probabilities)
}

pub fn per_sample_pm_mode(
    table: &PredictionTable,
    mode: PmMode,
) -> Result<Vec<f64>, MultiplicityError> {
    table.require_ensemble()?;
    let k = table.variants as f64;
    let mut out = Vec::with_capacity(table.samples);
    match mode {
        PmMode::Probabilities => {
            for n in 0..table.samples {
                let mut var_sum = 0.0;
                for c in 0..table.classes {
                    let mut mean = 0.0;
                    for v in 0..table.variants {
                        mean += table.prob(v, n, c);
                    }
                    mean /= k;
                    let mut var = 0.0;
                    for v in 0..table.variants {
                        let d = table.prob(v, n, c) - mean;
                        var += d * d;
                    }
                    var_sum += var / k;
                }
                out.push(crate::math::sqrt(var_sum / table.classes as f64));
            }
        }
        PmMode::Labels => {
            for n in 0..table.samples {
                let mut mean = 0.0;
                for v in 0..table.variants {
                    mean += table.label(v, n) as f64;
                }
                mean /= k;
                let mut var = 0.0;
                for v in 0..table.variants {
                    let d = table.label(v, n) as f64 - mean;
                    var += d * d;
                }
                out.push(crate::math::sqrt(var / k));
            }
        }
    }
    Ok(out)
}

/// PM over a dataset (or a sample subset): the mean of `per_sample_pm`.
pub fn pm(table: &PredictionTable, subset: Option<&[usize]>) -> Result<f64, MultiplicityError> {
    pm_mode(table, subset, PmMode::Probabilities)
}

pub fn pm_mode(
    table: &PredictionTable,
    subset: Option<&[usize]>,
    mode: PmMode,
) -> Result<f64, MultiplicityError> {
    let values = per_sample_pm_mode(table, mode)?;
    match subset {
        None => Ok(linalg::mean(&values)),
        Some(indices) => {
            validate_subset(indices, table.samples)?;
            let sum: f64 = indices.iter().map(|&i| values[i]).sum();
            Ok(sum / indices.len() as f64)
        }
    }
}

/// Pairwise RM: the negated top-T SVCCA similarity, in `[-1, 0]`.
pub fn rm_pair(
    z1: &ActivationMatrix,
    z2: &ActivationMatrix,
    cfg: &SvccaConfig,
) -> Result<f64, MultiplicityError> {
    let spectrum = svcca::svcca_correlations(z1, z2, cfg.variance_fraction)?;
    Ok(-svcca::svcca_similarity(&spectrum, cfg.top_t)?)
}

/// Mean pairwise SVCCA similarity over all unordered variant pairs.
///
/// This is `|RM|`; reports quote it directly because higher is "more
/// similar". Each variant is centered, decomposed, and truncated once,
/// then every pair runs CCA on the cached projections. Pairs are oriented
/// and summed by a content-derived key, so the result is exactly invariant
/// to the order the variants are passed in.
pub fn mean_pairwise_svcca(
    activations: &[ActivationMatrix],
    cfg: &SvccaConfig,
) -> Result<f64, MultiplicityError> {
    if activations.len() < 2 {
        return Err(MultiplicityError::NeedTwoVariants {
            variants: activations.len(),
        });
    }
    let keys: Vec<u64> = activations.iter().map(content_key).collect();
    let mut order: Vec<usize> = (0..activations.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));

    let projected: Vec<_> = order
        .iter()
        .map(|&i| svcca::project(&activations[i], cfg.variance_fraction))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for u in 0..projected.len() {
        for v in (u + 1)..projected.len() {
            let spectrum = svcca::cca_projected(&projected[u], &projected[v])?;
            total += svcca::svcca_similarity(&spectrum, cfg.top_t)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

fn content_key(z: &ActivationMatrix) -> u64 {
    let bytes = z.fingerprint.to_le_bytes().into_iter().chain(
        z.values
            .data()
            .iter()
            .flat_map(|v| v.to_bits().to_le_bytes()),
    );
    crate::data::fnv1a64(&mut { bytes })
}

/// Ensemble RM: the mean of `rm_pair` over all `C(K, 2)` unordered pairs.
pub fn rm_ensemble(
    activations: &[ActivationMatrix],
    cfg: &SvccaConfig,
) -> Result<f64, MultiplicityError> {
    Ok(-mean_pairwise_svcca(activations, cfg)?)
}

/// One sample's predicted-label diversity across an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfabulationEntry {
    pub sample_index: usize,
    /// Shannon entropy (nats) of the label histogram; 0 iff all variants agree.
    pub score: f64,
    /// Predicted-label counts per class, summing to K.
    pub label_histogram: Vec<usize>,
}

impl ConfabulationEntry {
    /// Number of distinct labels assigned; exported as a diagnostic.
    pub fn distinct_labels(&self) -> usize {
        self.label_histogram.iter().filter(|&&c| c > 0).count()
    }
}

/// Entropy of the predicted-label histogram for every sample.
pub fn confabulation_scores(
    table: &PredictionTable,
) -> Result<Vec<ConfabulationEntry>, MultiplicityError> {
    table.require_ensemble()?;
    let k = table.variants as f64;
    let mut entries = Vec::with_capacity(table.samples);
    for n in 0..table.samples {
        let mut histogram = vec![0usize; table.classes];
        for v in 0..table.variants {
            histogram[table.label(v, n)] += 1;
        }
        let mut score = 0.0;
        for &count in &histogram {
            if count > 0 {
                let p = count as f64 / k;
                score -= p * crate::math::ln(p);
            }
        }
        entries.push(ConfabulationEntry {
            sample_index: n,
            score: score.max(0.0),
            label_histogram: histogram,
        });
    }
    Ok(entries)
}

/// Result of `top_confabulators`; `truncated` notes a request larger than
/// the sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct TopConfabulators {
    pub indices: Vec<usize>,
    pub truncated: bool,
}

/// Indices of the `n` highest confabulation scores, descending. Ties break
/// by higher per-sample PM, then by lower sample index, so the listing is
/// deterministic.
pub fn top_confabulators(
    entries: &[ConfabulationEntry],
    per_sample_pm: &[f64],
    n: usize,
) -> Result<TopConfabulators, MultiplicityError> {
    if n == 0 {
        return Err(MultiplicityError::InvalidTopN);
    }
    if per_sample_pm.len() != entries.len() {
        return Err(MultiplicityError::BadLength {
            expected: entries.len(),
            found: per_sample_pm.len(),
        });
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[b]
            .score
            .total_cmp(&entries[a].score)
            .then(per_sample_pm[b].total_cmp(&per_sample_pm[a]))
            .then(entries[a].sample_index.cmp(&entries[b].sample_index))
    });
    let truncated = n > entries.len();
    order.truncate(n.min(entries.len()));
    let indices = order.into_iter().map(|i| entries[i].sample_index).collect();
    Ok(TopConfabulators { indices, truncated })
}

/// Pearson correlation between per-strategy SVCCA similarities and PM
/// values. SVCCA similarity is inverted RM, so strong RM/PM alignment
/// shows up as a strongly negative coefficient.
pub fn pcc_rm_pm(svcca_values: &[f64], pm_values: &[f64]) -> Result<f64, MultiplicityError> {
    Ok(linalg::pearson(svcca_values, pm_values)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplicityError {
    EmptyTable,
    BadLength {
        expected: usize,
        found: usize,
    },
    ProbabilityRange {
        variant: usize,
        sample: usize,
        class: usize,
        value: f64,
    },
    RowSum {
        variant: usize,
        sample: usize,
        sum: f64,
    },
    NeedTwoVariants {
        variants: usize,
    },
    EmptySubset,
    IndexOutOfRange {
        index: usize,
        samples: usize,
    },
    DuplicateIndex {
        index: usize,
    },
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    FingerprintMismatch {
        left: u64,
        right: u64,
    },
    InvalidRiskBand {
        target: f64,
        epsilon: f64,
    },
    InvalidTopN,
    Svcca(SvccaError),
    Linalg(LinalgError),
}

impl From<SvccaError> for MultiplicityError {
    fn from(e: SvccaError) -> Self {
        MultiplicityError::Svcca(e)
    }
}

impl From<LinalgError> for MultiplicityError {
    fn from(e: LinalgError) -> Self {
        MultiplicityError::Linalg(e)
    }
}

impl fmt::Display for MultiplicityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiplicityError::EmptyTable => write!(f, "prediction table has no content"),
            MultiplicityError::BadLength { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            MultiplicityError::ProbabilityRange {
                variant,
                sample,
                class,
                value,
            } => write!(
                f,
                "probability out of range at variant {variant}, sample {sample}, class {class}: {value}"
            ),
            MultiplicityError::RowSum {
                variant,
                sample,
                sum,
            } => write!(
                f,
                "probability row of variant {variant}, sample {sample} sums to {sum}, not 1"
            ),
            MultiplicityError::NeedTwoVariants { variants } => {
                write!(f, "multiplicity needs at least 2 variants, got {variants}")
            }
            MultiplicityError::EmptySubset => write!(f, "sample subset is empty"),
            MultiplicityError::IndexOutOfRange { index, samples } => {
                write!(f, "sample index {index} out of range for {samples} samples")
            }
            MultiplicityError::DuplicateIndex { index } => {
                write!(f, "duplicate sample index {index} in subset")
            }
            MultiplicityError::ShapeMismatch { expected, found } => write!(
                f,
                "table shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            MultiplicityError::FingerprintMismatch { left, right } => write!(
                f,
                "dataset fingerprints differ: {left:016x} vs {right:016x}"
            ),
            MultiplicityError::InvalidRiskBand { target, epsilon } => {
                write!(f, "invalid risk band: target {target}, epsilon {epsilon}")
            }
            MultiplicityError::InvalidTopN => write!(f, "top-n must be at least 1"),
            MultiplicityError::Svcca(e) => write!(f, "{e}"),
            MultiplicityError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MultiplicityError {}
