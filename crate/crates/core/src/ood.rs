//! Evaluation-time OOD constructions: horizontal flip, pixelation,
//! brightness/hue jitter, and banded rotations. Transforms never touch
//! labels or sample counts, clamp pixels back into `[0, 1]`, and are
//! deterministic given the transform seed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{DataError, Dataset};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OodTransform {
    /// Horizontal mirror applied per sample with the given probability.
    XFlip { prob: f64 },
    /// Block-average downscale then nearest upsample by `factor`.
    Pixelate { factor: usize },
    /// Per-sample brightness factor in `[1 - brightness, 1 + brightness]`
    /// and, for 3-channel data, a hue rotation within `±hue` of the full
    /// circle. On grayscale input the hue component degenerates to
    /// brightness-only.
    ColorJitter { brightness: f64, hue: f64 },
    /// Per-sample rotation by an angle drawn uniformly from the band.
    Rotate { min_deg: f64, max_deg: f64 },
}

impl OodTransform {
    /// Canonical transform names: `x-flip`, `pixelate[-N]`, `color-jitter`,
    /// `rot-MIN-MAX`. Unknown names are rejected.
    pub fn parse(name: &str) -> Result<Self, DataError> {
        if name == "x-flip" {
            return Ok(OodTransform::XFlip { prob: 0.9 });
        }
        if name == "pixelate" {
            return Ok(OodTransform::Pixelate { factor: 2 });
        }
        if let Some(rest) = name.strip_prefix("pixelate-") {
            if let Ok(factor) = rest.parse::<usize>() {
                if factor >= 1 {
                    return Ok(OodTransform::Pixelate { factor });
                }
            }
        }
        if name == "color-jitter" {
            return Ok(OodTransform::ColorJitter {
                brightness: 0.3,
                hue: 0.1,
            });
        }
        if let Some(rest) = name.strip_prefix("rot-") {
            let parts: Vec<&str> = rest.split('-').collect();
            if parts.len() == 2 {
                if let (Ok(min), Ok(max)) = (parts[0].parse::<f64>(), parts[1].parse::<f64>()) {
                    if min.is_finite() && max.is_finite() && min <= max {
                        return Ok(OodTransform::Rotate {
                            min_deg: min,
                            max_deg: max,
                        });
                    }
                }
            }
        }
        Err(DataError::UnknownTransform {
            name: name.to_string(),
        })
    }

    pub fn label(&self) -> String {
        match self {
            OodTransform::XFlip { .. } => "x-flip".to_string(),
            OodTransform::Pixelate { factor } => {
                if *factor == 2 {
                    "pixelate".to_string()
                } else {
                    format!("pixelate-{factor}")
                }
            }
            OodTransform::ColorJitter { .. } => "color-jitter".to_string(),
            OodTransform::Rotate { min_deg, max_deg } => {
                format!("rot-{}-{}", fmt_deg(*min_deg), fmt_deg(*max_deg))
            }
        }
    }

    /// Rotation bands used by the full evaluation grid: 0-20, then tens up
    /// to 110 degrees.
    pub fn rotation_bands() -> Vec<OodTransform> {
        let edges = [
            (0.0, 20.0),
            (20.0, 30.0),
            (30.0, 40.0),
            (40.0, 50.0),
            (50.0, 60.0),
            (60.0, 70.0),
            (70.0, 80.0),
            (80.0, 90.0),
            (90.0, 100.0),
            (100.0, 110.0),
        ];
        edges
            .iter()
            .map(|&(min_deg, max_deg)| OodTransform::Rotate { min_deg, max_deg })
            .collect()
    }
}

fn fmt_deg(d: f64) -> String {
    if d == math::floor(d) {
        format!("{}", d as i64)
    } else {
        format!("{d}")
    }
}

/// Applies one transform to a whole dataset. Per-sample draws happen in
/// sample order from a stream seeded by `seed`, so results are
/// reproducible and independent of any batching downstream.
pub fn apply_ood_transform(
    ds: &Dataset,
    transform: &OodTransform,
    seed: u64,
) -> Result<Dataset, DataError> {
    validate(transform)?;
    let mut rng = rng::stream(seed, rng::TAG_OOD);
    let stride = ds.pixels_per_sample();
    let mut images = Vec::with_capacity(ds.images.len());

    for n in 0..ds.samples {
        let img = &ds.images[n * stride..(n + 1) * stride];
        let out = match transform {
            OodTransform::XFlip { prob } => {
                let flip = rng.gen::<f64>() < *prob;
                if flip {
                    flip_horizontal(img, ds.channels, ds.height, ds.width)
                } else {
                    img.to_vec()
                }
            }
            OodTransform::Pixelate { factor } => {
                pixelate(img, ds.channels, ds.height, ds.width, *factor)
            }
            OodTransform::ColorJitter { brightness, hue } => {
                let factor = 1.0 + brightness * (2.0 * rng.gen::<f64>() - 1.0);
                let mut out: Vec<f64> = img.iter().map(|p| (p * factor).clamp(0.0, 1.0)).collect();
                if ds.channels == 3 {
                    let shift = hue * (2.0 * rng.gen::<f64>() - 1.0) * 360.0;
                    rotate_hue(&mut out, ds.height, ds.width, shift);
                }
                out
            }
            OodTransform::Rotate { min_deg, max_deg } => {
                let angle = min_deg + rng.gen::<f64>() * (max_deg - min_deg);
                rotate(img, ds.channels, ds.height, ds.width, angle.to_radians())
            }
        };
        images.extend(out.into_iter().map(|p| p.clamp(0.0, 1.0)));
    }

    Dataset::new(
        images,
        ds.labels.clone(),
        ds.channels,
        ds.height,
        ds.width,
        ds.classes,
        ds.split,
    )
}

fn validate(t: &OodTransform) -> Result<(), DataError> {
    let ok = match t {
        OodTransform::XFlip { prob } => (0.0..=1.0).contains(prob),
        OodTransform::Pixelate { factor } => *factor >= 1,
        OodTransform::ColorJitter { brightness, hue } => {
            (0.0..=1.0).contains(brightness) && (0.0..=0.5).contains(hue)
        }
        OodTransform::Rotate { min_deg, max_deg } => {
            min_deg.is_finite() && max_deg.is_finite() && min_deg <= max_deg
        }
    };
    if ok {
        Ok(())
    } else {
        Err(DataError::InvalidParam { name: "transform" })
    }
}

fn flip_horizontal(img: &[f64], channels: usize, height: usize, width: usize) -> Vec<f64> {
    let mut out = img.to_vec();
    for c in 0..channels {
        for y in 0..height {
            let row = (c * height + y) * width;
            out[row..row + width].reverse();
        }
    }
    out
}

fn pixelate(img: &[f64], channels: usize, height: usize, width: usize, factor: usize) -> Vec<f64> {
    if factor == 1 {
        return img.to_vec();
    }
    let mut out = vec![0.0; img.len()];
    for c in 0..channels {
        let plane = c * height * width;
        let mut by = 0;
        while by < height {
            let bh = factor.min(height - by);
            let mut bx = 0;
            while bx < width {
                let bw = factor.min(width - bx);
                let mut sum = 0.0;
                for y in by..by + bh {
                    for x in bx..bx + bw {
                        sum += img[plane + y * width + x];
                    }
                }
                let avg = sum / (bh * bw) as f64;
                for y in by..by + bh {
                    for x in bx..bx + bw {
                        out[plane + y * width + x] = avg;
                    }
                }
                bx += factor;
            }
            by += factor;
        }
    }
    out
}

fn rotate(img: &[f64], channels: usize, height: usize, width: usize, angle: f64) -> Vec<f64> {
    let (sin, cos) = (math::sin(angle), math::cos(angle));
    let cy = (height - 1) as f64 / 2.0;
    let cx = (width - 1) as f64 / 2.0;
    let mut out = vec![0.0; img.len()];
    for c in 0..channels {
        let plane = c * height * width;
        for y in 0..height {
            for x in 0..width {
                // Inverse map into the source image.
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = cx + cos * dx + sin * dy;
                let sy = cy - sin * dx + cos * dy;
                out[plane + y * width + x] =
                    bilinear(&img[plane..plane + height * width], height, width, sy, sx);
            }
        }
    }
    out
}

fn bilinear(plane: &[f64], height: usize, width: usize, y: f64, x: f64) -> f64 {
    let x0 = math::floor(x);
    let y0 = math::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let sample = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= height as f64 || xx >= width as f64 {
            0.0
        } else {
            plane[yy as usize * width + xx as usize]
        }
    };
    let v00 = sample(y0, x0);
    let v01 = sample(y0, x0 + 1.0);
    let v10 = sample(y0 + 1.0, x0);
    let v11 = sample(y0 + 1.0, x0 + 1.0);
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

fn rotate_hue(img: &mut [f64], height: usize, width: usize, shift_deg: f64) {
    let plane = height * width;
    for i in 0..plane {
        let (r, g, b) = (img[i], img[plane + i], img[2 * plane + i]);
        let (h, s, v) = rgb_to_hsv(r, g, b);
        let (r2, g2, b2) = hsv_to_rgb(math::rem_euclid(h + shift_deg, 360.0), s, v);
        img[i] = r2;
        img[plane + i] = g2;
        img[2 * plane + i] = b2;
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max;
    let s = if max == 0.0 { 0.0 } else { d / max };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * math::rem_euclid((g - b) / d, 6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    (math::rem_euclid(h, 360.0), s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (math::rem_euclid(hp, 2.0) - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn dataset_from_image(img: Vec<f64>, channels: usize, size: usize) -> Dataset {
        Dataset::new(img, vec![0], channels, size, size, 2, Split::Test).unwrap()
    }

    #[test]
    fn parse_and_label_roundtrip() {
        for name in [
            "x-flip",
            "pixelate",
            "color-jitter",
            "rot-0-20",
            "rot-90-110",
        ] {
            let t = OodTransform::parse(name).unwrap();
            assert_eq!(t.label(), name);
        }
        assert!(matches!(
            OodTransform::parse("sepia"),
            Err(DataError::UnknownTransform { .. })
        ));
    }

    #[test]
    fn ten_rotation_bands() {
        assert_eq!(OodTransform::rotation_bands().len(), 10);
    }

    #[test]
    fn xflip_of_symmetric_image_is_identity() {
        // 4x4 symmetric in x.
        let img = vec![
            0.1, 0.2, 0.2, 0.1, //
            0.3, 0.4, 0.4, 0.3, //
            0.5, 0.6, 0.6, 0.5, //
            0.7, 0.8, 0.8, 0.7,
        ];
        let ds = dataset_from_image(img.clone(), 1, 4);
        let out = apply_ood_transform(&ds, &OodTransform::XFlip { prob: 1.0 }, 1).unwrap();
        assert_eq!(out.images, img);
    }

    #[test]
    fn pixelate_of_constant_image_is_identity() {
        let ds = dataset_from_image(vec![0.25; 36], 1, 6);
        let out = apply_ood_transform(&ds, &OodTransform::Pixelate { factor: 2 }, 1).unwrap();
        assert_eq!(out.images, ds.images);
    }

    #[test]
    fn pixelate_averages_blocks() {
        let img = vec![
            0.0, 1.0, 0.5, 0.5, //
            1.0, 0.0, 0.5, 0.5, //
            0.2, 0.2, 1.0, 0.0, //
            0.2, 0.2, 0.0, 1.0,
        ];
        let ds = dataset_from_image(img, 1, 4);
        let out = apply_ood_transform(&ds, &OodTransform::Pixelate { factor: 2 }, 1).unwrap();
        assert_eq!(out.images[0], 0.5);
        assert_eq!(out.images[2], 0.5);
        assert_eq!(out.images[8], 0.2);
        assert_eq!(out.images[10], 0.5);
    }

    #[test]
    fn zero_rotation_band_is_identity() {
        let spec = crate::data::SyntheticSpec {
            classes: 2,
            samples: 6,
            image_size: 9,
            noise: 0.3,
        };
        let ds = crate::data::generate_synthetic(&spec, 4, Split::Test).unwrap();
        let out = apply_ood_transform(
            &ds,
            &OodTransform::Rotate {
                min_deg: 0.0,
                max_deg: 0.0,
            },
            5,
        )
        .unwrap();
        assert_eq!(out.images, ds.images);
    }

    #[test]
    fn labels_and_counts_never_change() {
        let spec = crate::data::SyntheticSpec {
            classes: 3,
            samples: 9,
            image_size: 8,
            noise: 0.5,
        };
        let ds = crate::data::generate_synthetic(&spec, 6, Split::Test).unwrap();
        for t in [
            OodTransform::XFlip { prob: 0.9 },
            OodTransform::Pixelate { factor: 2 },
            OodTransform::ColorJitter {
                brightness: 0.3,
                hue: 0.1,
            },
            OodTransform::Rotate {
                min_deg: 20.0,
                max_deg: 30.0,
            },
        ] {
            let out = apply_ood_transform(&ds, &t, 7).unwrap();
            assert_eq!(out.labels, ds.labels);
            assert_eq!(out.samples, ds.samples);
            assert!(out.images.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = crate::data::SyntheticSpec {
            classes: 2,
            samples: 8,
            image_size: 8,
            noise: 0.4,
        };
        let ds = crate::data::generate_synthetic(&spec, 8, Split::Test).unwrap();
        let t = OodTransform::Rotate {
            min_deg: 10.0,
            max_deg: 40.0,
        };
        let a = apply_ood_transform(&ds, &t, 9).unwrap();
        let b = apply_ood_transform(&ds, &t, 9).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        let c = apply_ood_transform(&ds, &t, 10).unwrap();
        assert_ne!(a.fingerprint, c.fingerprint);
    }

    #[test]
    fn hue_rotation_by_full_circle_is_near_identity() {
        let mut img = Vec::new();
        // r, g, b planes (2x2).
        img.extend([0.8, 0.2, 0.4, 0.1]);
        img.extend([0.1, 0.9, 0.4, 0.5]);
        img.extend([0.3, 0.3, 0.9, 0.2]);
        let mut rotated = img.clone();
        rotate_hue(&mut rotated, 2, 2, 360.0);
        for (a, b) in rotated.iter().zip(&img) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grayscale_jitter_is_brightness_only() {
        let ds = dataset_from_image(vec![0.5; 64], 1, 8);
        let t = OodTransform::ColorJitter {
            brightness: 0.0,
            hue: 0.1,
        };
        let out = apply_ood_transform(&ds, &t, 3).unwrap();
        assert_eq!(out.images, ds.images); // zero brightness, no hue channel
    }
}
