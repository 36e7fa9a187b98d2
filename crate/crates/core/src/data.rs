//! In-memory datasets: validation, content fingerprints, IDX decoding,
//! and the synthetic blob/stripe generator used for desk-scale runs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use core::fmt;

use rand::Rng;

use crate::math;
use crate::rng;

/// IDX magic for unsigned-byte image files (3 dimensions).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX magic for unsigned-byte label files (1 dimension).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A labelled image dataset with pixels in `[0, 1]`.
///
/// The `fingerprint` identifies the exact content; sample alignment between
/// prediction tables and activation matrices is enforced by comparing it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
    pub samples: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub split: Split,
    pub fingerprint: u64,
}

impl Dataset {
    /// Validates shapes, label range, and pixel range; computes a content
    /// fingerprint over dimensions, labels, and pixel bits.
    pub fn new(
        images: Vec<f64>,
        labels: Vec<usize>,
        channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        split: Split,
    ) -> Result<Self, DataError> {
        let samples = labels.len();
        if channels == 0 || height == 0 || width == 0 || classes == 0 {
            return Err(DataError::InvalidParam { name: "dimensions" });
        }
        if images.len() != samples * channels * height * width {
            return Err(DataError::PayloadLength {
                which: "images",
                expected: samples * channels * height * width,
                found: images.len(),
            });
        }
        for (index, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(DataError::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
        }
        for (index, &value) in images.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(DataError::PixelOutOfRange { index, value });
            }
        }
        let fingerprint = content_fingerprint(&images, &labels, channels, height, width, classes);
        Ok(Dataset {
            images,
            labels,
            samples,
            channels,
            height,
            width,
            classes,
            split,
            fingerprint,
        })
    }

    #[inline]
    pub fn pixels_per_sample(&self) -> usize {
        self.channels * self.height * self.width
    }

    #[inline]
    pub fn image(&self, n: usize) -> &[f64] {
        let stride = self.pixels_per_sample();
        &self.images[n * stride..(n + 1) * stride]
    }
}

/// FNV-1a over a byte stream; deterministic 64-bit content hash.
pub fn fnv1a64(chunks: &mut dyn Iterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in chunks {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Renders a fingerprint in the canonical 16-digit hex form.
pub fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

/// Fingerprint of a sample subset, derived from the parent fingerprint and
/// the selected indices. Prediction tables and activation matrices subset
/// with the same indices stay mutually aligned.
pub fn subset_fingerprint(parent: u64, indices: &[usize]) -> u64 {
    let bytes = parent
        .to_le_bytes()
        .into_iter()
        .chain(indices.iter().flat_map(|&i| (i as u64).to_le_bytes()));
    fnv1a64(&mut { bytes })
}

fn content_fingerprint(
    images: &[f64],
    labels: &[usize],
    channels: usize,
    height: usize,
    width: usize,
    classes: usize,
) -> u64 {
    let dims = [labels.len(), channels, height, width, classes];
    let bytes = dims
        .iter()
        .flat_map(|&d| (d as u64).to_le_bytes())
        .chain(labels.iter().flat_map(|&l| (l as u64).to_le_bytes()))
        .chain(images.iter().flat_map(|&p| p.to_bits().to_le_bytes()));
    fnv1a64(&mut { bytes })
}

// ── IDX decoding ────────────────────────────────────────────────────

/// Decodes an IDX image/label pair from raw bytes.
///
/// Pixels are widened to `f64` and scaled to `[0, 1]`; the dataset
/// fingerprint is computed over the raw bytes of both files. Magic
/// mismatches, truncated payloads, and image/label count mismatches are
/// reported as distinct errors.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset, DataError> {
    let (n_images, height, width, pixel_bytes) = parse_idx_images(images)?;
    let (n_labels, label_bytes) = parse_idx_labels(labels)?;
    if n_images != n_labels {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let pixels: Vec<f64> = pixel_bytes.iter().map(|&b| b as f64 / 255.0).collect();
    let label_values: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let classes = label_values.iter().copied().max().map_or(1, |m| m + 1);

    let mut ds = Dataset::new(pixels, label_values, 1, height, width, classes, split)?;
    ds.fingerprint = fnv1a64(&mut images.iter().chain(labels.iter()).copied());
    Ok(ds)
}

fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), DataError> {
    if bytes.len() < 16 {
        return Err(DataError::PayloadLength {
            which: "image header",
            expected: 16,
            found: bytes.len(),
        });
    }
    let magic = be_u32(&bytes[0..4]);
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            which: "images",
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes[4..8]) as usize;
    let h = be_u32(&bytes[8..12]) as usize;
    let w = be_u32(&bytes[12..16]) as usize;
    let expected = n * h * w;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(DataError::PayloadLength {
            which: "images",
            expected,
            found: payload.len(),
        });
    }
    Ok((n, h, w, payload))
}

fn parse_idx_labels(bytes: &[u8]) -> Result<(usize, &[u8]), DataError> {
    if bytes.len() < 8 {
        return Err(DataError::PayloadLength {
            which: "label header",
            expected: 8,
            found: bytes.len(),
        });
    }
    let magic = be_u32(&bytes[0..4]);
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            which: "labels",
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes[4..8]) as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(DataError::PayloadLength {
            which: "labels",
            expected: n,
            found: payload.len(),
        });
    }
    Ok((n, payload))
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Encodes a dataset back into IDX bytes (images, labels). Pixels are
/// quantized to `u8`; round-tripping through `parse_idx` reproduces the
/// quantized values exactly.
pub fn encode_idx(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>), DataError> {
    if ds.channels != 1 {
        return Err(DataError::InvalidParam { name: "channels" });
    }
    let mut images = Vec::with_capacity(16 + ds.images.len());
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(ds.samples as u32).to_be_bytes());
    images.extend_from_slice(&(ds.height as u32).to_be_bytes());
    images.extend_from_slice(&(ds.width as u32).to_be_bytes());
    for &p in &ds.images {
        images.push((p * 255.0 + 0.5) as u8);
    }
    let mut labels = Vec::with_capacity(8 + ds.samples);
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.samples as u32).to_be_bytes());
    for &l in &ds.labels {
        labels.push(l as u8);
    }
    Ok((images, labels))
}

// ── Synthetic data ──────────────────────────────────────────────────

/// Parameters for the synthetic class-conditional blob/stripe generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples: usize,
    pub image_size: usize,
    /// 0 produces identical (Bayes-separable) images per class; larger
    /// values jitter the blob position and add pixel noise.
    pub noise: f64,
}

/// Deterministic synthetic dataset: each class owns a Gaussian blob at a
/// fixed angle around the image centre plus a class-specific horizontal
/// stripe. Labels cycle round-robin, so classes stay balanced.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
    split: Split,
) -> Result<Dataset, DataError> {
    if spec.classes < 2 {
        return Err(DataError::TooFewClasses {
            classes: spec.classes,
        });
    }
    if spec.samples == 0 || spec.image_size < 6 {
        return Err(DataError::InvalidParam {
            name: "samples/image_size",
        });
    }
    if !spec.noise.is_finite() || spec.noise < 0.0 {
        return Err(DataError::InvalidParam { name: "noise" });
    }

    let size = spec.image_size;
    let mut rng = rng::stream(seed, rng::TAG_SYNTH);
    let mut images = Vec::with_capacity(spec.samples * size * size);
    let mut labels = Vec::with_capacity(spec.samples);

    let centre = (size - 1) as f64 / 2.0;
    let radius = size as f64 / 4.0;
    let sigma = size as f64 / 7.0;

    for n in 0..spec.samples {
        let class = n % spec.classes;
        let angle = core::f64::consts::TAU * class as f64 / spec.classes as f64;
        let jx: f64 = 2.0 * spec.noise * (rng.gen::<f64>() * 2.0 - 1.0);
        let jy: f64 = 2.0 * spec.noise * (rng.gen::<f64>() * 2.0 - 1.0);
        let cx = centre + radius * math::cos(angle) + jx;
        let cy = centre + radius * math::sin(angle) + jy;
        let stripe_row = (size * (class + 1)) / (spec.classes + 1);

        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let blob = math::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                let ds = y as f64 - stripe_row as f64 - 0.5 * jy;
                let stripe = 0.3 * math::exp(-ds * ds / 2.0);
                let noise = spec.noise * 0.45 * rng::normal(&mut rng);
                images.push((blob + stripe + noise).clamp(0.0, 1.0));
            }
        }
        labels.push(class);
    }

    Dataset::new(images, labels, 1, size, size, spec.classes, split)
}

// ── Errors ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    BadMagic {
        which: &'static str,
        expected: u32,
        found: u32,
    },
    PayloadLength {
        which: &'static str,
        expected: usize,
        found: usize,
    },
    CountMismatch {
        images: usize,
        labels: usize,
    },
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    PixelOutOfRange {
        index: usize,
        value: f64,
    },
    TooFewClasses {
        classes: usize,
    },
    InvalidParam {
        name: &'static str,
    },
    UnknownTransform {
        name: String,
    },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::BadMagic {
                which,
                expected,
                found,
            } => write!(
                f,
                "bad {which} magic: expected {expected:#010x}, found {found:#010x}"
            ),
            DataError::PayloadLength {
                which,
                expected,
                found,
            } => {
                if found < expected {
                    write!(
                        f,
                        "truncated payload for {which}: need {expected} bytes, have {found}"
                    )
                } else {
                    write!(
                        f,
                        "oversized payload for {which}: expected {expected} bytes, have {found}"
                    )
                }
            }
            DataError::CountMismatch { images, labels } => {
                write!(
                    f,
                    "image/label count mismatch: {images} images vs {labels} labels"
                )
            }
            DataError::LabelOutOfRange {
                index,
                label,
                classes,
            } => write!(
                f,
                "label {label} at sample {index} exceeds class count {classes}"
            ),
            DataError::PixelOutOfRange { index, value } => {
                write!(f, "pixel {index} out of [0,1]: {value}")
            }
            DataError::TooFewClasses { classes } => {
                write!(f, "need at least 2 classes, got {classes}")
            }
            DataError::InvalidParam { name } => write!(f, "invalid parameter: {name}"),
            DataError::UnknownTransform { name } => write!(f, "unknown transform: {name}"),
        }
    }
}

impl core::error::Error for DataError {}
