//! Path-based IDX dataset loading and saving; byte-level decoding lives
//! in the core crate so external trainers can reuse it without `std`.

use std::fs;
use std::path::{Path, PathBuf};

use rashomon_core::data::{encode_idx, parse_idx, DataError, Dataset, Split};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{images} / {labels}: {source}")]
    Format {
        images: PathBuf,
        labels: PathBuf,
        source: DataError,
    },
}

/// Loads an IDX image/label pair. The dataset fingerprint covers the raw
/// bytes of both files.
pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset, IdxError> {
    let image_bytes = fs::read(images).map_err(|source| IdxError::Io {
        path: images.to_path_buf(),
        source,
    })?;
    let label_bytes = fs::read(labels).map_err(|source| IdxError::Io {
        path: labels.to_path_buf(),
        source,
    })?;
    parse_idx(&image_bytes, &label_bytes, split).map_err(|source| IdxError::Format {
        images: images.to_path_buf(),
        labels: labels.to_path_buf(),
        source,
    })
}

/// Writes a grayscale dataset as an IDX pair (pixels quantized to u8).
pub fn save_idx(ds: &Dataset, images: &Path, labels: &Path) -> Result<(), IdxError> {
    let (image_bytes, label_bytes) = encode_idx(ds).map_err(|source| IdxError::Format {
        images: images.to_path_buf(),
        labels: labels.to_path_buf(),
        source,
    })?;
    fs::write(images, image_bytes).map_err(|source| IdxError::Io {
        path: images.to_path_buf(),
        source,
    })?;
    fs::write(labels, label_bytes).map_err(|source| IdxError::Io {
        path: labels.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rashomon_core::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn file_roundtrip_preserves_content() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic(
            &SyntheticSpec {
                classes: 3,
                samples: 15,
                image_size: 8,
                noise: 0.4,
            },
            2,
            Split::Train,
        )
        .unwrap();
        let images = dir.path().join("im.idx");
        let labels = dir.path().join("lb.idx");
        save_idx(&ds, &images, &labels).unwrap();
        let back = load_idx(&images, &labels, Split::Train).unwrap();
        assert_eq!(back.samples, 15);
        assert_eq!(back.labels, ds.labels);
        // Quantized pixels reload exactly.
        let again = dir.path().join("im2.idx");
        let again_l = dir.path().join("lb2.idx");
        save_idx(&back, &again, &again_l).unwrap();
        assert_eq!(fs::read(&images).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_idx(
            Path::new("/no/such/images"),
            Path::new("/no/such/labels"),
            Split::Test,
        )
        .unwrap_err();
        assert!(matches!(err, IdxError::Io { .. }));
    }
}
