//! Folder-structured image ingestion.
//!
//! Datasets are directory trees two levels deep, `root/<class>/<subtype>/`,
//! holding JPEG or PNG files. [`scan_dataset`] builds a manifest of every
//! decodable image; [`load_batch`] serves resized, normalised pixel tensors.
//! Pixels live in `[-1, 1]` to match the generator's tanh output head.

mod synthetic;

pub use synthetic::{make_synthetic_dataset, ShapeKind, SyntheticSpec};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image file extensions considered by the scanner (case-insensitive).
const EXTENSIONS: &[&str] = &["jpg", "jpeg", "png"];

/// Default side length images are served at.
pub const DEFAULT_RESOLUTION: u32 = 28;

/// Maps an 8-bit pixel into the `[-1, 1]` training range. The continuous
/// midpoint 127.5 maps to exactly 0.
pub fn normalize_pixel(v: f64) -> f64 {
    v / 127.5 - 1.0
}

/// Inverse of [`normalize_pixel`] over the 8-bit lattice: exact round trip
/// for every u8 value.
pub fn denormalize_pixel(y: f64) -> u8 {
    ((y + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

// ---------------------------------------------------------------------------
// ImageBatch
// ---------------------------------------------------------------------------

/// A batch of images, shape (batch, channels, height, width), every value
/// finite and inside `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pixels: Array4<f64>,
}

impl ImageBatch {
    pub fn new(pixels: Array4<f64>) -> Result<Self> {
        for &v in pixels.iter() {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(Error::PixelOutOfRange { value: v });
            }
        }
        Ok(ImageBatch { pixels })
    }

    pub fn pixels(&self) -> &Array4<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array4<f64> {
        self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().3
    }

    /// Flattens each image to one row of length `c·h·w`.
    pub fn flatten_rows(&self) -> Array2<f64> {
        let (n, c, h, w) = self.pixels.dim();
        self.pixels
            .view()
            .into_shape_with_order((n, c * h * w))
            .expect("standard layout")
            .to_owned()
    }

    /// Rebuilds a batch from flattened rows.
    pub fn from_rows(rows: Array2<f64>, c: usize, h: usize, w: usize) -> Result<Self> {
        let (n, len) = rows.dim();
        if len != c * h * w {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {}", c * h * w),
                got: format!("{len}"),
            });
        }
        let pixels = rows
            .into_shape_with_order((n, c, h, w))
            .expect("length checked");
        ImageBatch::new(pixels)
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Sample count of one (class, subtype) folder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtypeEntry {
    pub class: String,
    pub subtype: String,
    pub count: usize,
}

/// What a dataset scan found: per-subtype counts plus the ordered image
/// list that batch loading indexes into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<SubtypeEntry>,
    pub total_samples: usize,
    pub source_path: PathBuf,
    /// (height, width) images are served at.
    pub resolution: (u32, u32),
    /// Paths relative to `source_path`, sorted.
    pub images: Vec<PathBuf>,
}

impl DatasetManifest {
    /// Checks internal consistency: counts add up and every path resolves.
    pub fn validate(&self) -> Result<()> {
        let sum: usize = self.classes.iter().map(|e| e.count).sum();
        if sum != self.total_samples || self.images.len() != self.total_samples {
            return Err(Error::InvalidConfig(format!(
                "manifest counts disagree: classes sum {sum}, total {}, images {}",
                self.total_samples,
                self.images.len()
            )));
        }
        for rel in &self.images {
            let p = self.source_path.join(rel);
            if !p.exists() {
                return Err(Error::MissingPath(p));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Walks a two-level `root/<class>/<subtype>/` tree and lists every
/// decodable image. Counts are independent of directory listing order.
pub fn scan_dataset(root: &Path, resolution: u32) -> Result<DatasetManifest> {
    if !root.exists() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    // BTreeMap keyed by (class, subtype) gives a stable order no matter
    // how the filesystem enumerates entries.
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut images: Vec<PathBuf> = Vec::new();

    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    for class_dir in &class_dirs {
        let class = dir_name(class_dir);
        let mut subtype_dirs: Vec<PathBuf> = fs::read_dir(class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subtype_dirs.sort();
        for subtype_dir in &subtype_dirs {
            let subtype = dir_name(subtype_dir);
            let mut files: Vec<PathBuf> = fs::read_dir(subtype_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_image_file(p))
                .collect();
            files.sort();
            for file in files {
                if image::open(&file).is_err() {
                    log::warn!("skipping undecodable image {}", file.display());
                    continue;
                }
                let rel = file
                    .strip_prefix(root)
                    .expect("file lives under root")
                    .to_path_buf();
                images.push(rel);
                *counts.entry((class.clone(), subtype.clone())).or_insert(0) += 1;
            }
        }
    }

    if images.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    images.sort();
    let classes: Vec<SubtypeEntry> = counts
        .into_iter()
        .map(|((class, subtype), count)| SubtypeEntry {
            class,
            subtype,
            count,
        })
        .collect();
    Ok(DatasetManifest {
        total_samples: images.len(),
        classes,
        source_path: root.to_path_buf(),
        resolution: (resolution, resolution),
        images,
    })
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads the indexed images, resized to `target` (height, width) and
/// normalised to `[-1, 1]`, always 3 channels.
pub fn load_batch(
    manifest: &DatasetManifest,
    indices: &[usize],
    target: (u32, u32),
) -> Result<ImageBatch> {
    let (th, tw) = target;
    let mut pixels = Array4::zeros((indices.len(), 3, th as usize, tw as usize));
    for (bi, &idx) in indices.iter().enumerate() {
        if idx >= manifest.total_samples {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: manifest.total_samples,
            });
        }
        let path = manifest.source_path.join(&manifest.images[idx]);
        let img = image::open(&path).map_err(|e| Error::ImageDecode {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let rgb = if rgb.dimensions() == (tw, th) {
            rgb
        } else {
            image::imageops::resize(&rgb, tw, th, FilterType::Triangle)
        };
        for y in 0..th as usize {
            for x in 0..tw as usize {
                let p = rgb.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    pixels[(bi, c, y, x)] = normalize_pixel(p[c] as f64);
                }
            }
        }
    }
    ImageBatch::new(pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn normalization_endpoints_and_midpoint() {
        assert_eq!(normalize_pixel(0.0), -1.0);
        assert_eq!(normalize_pixel(255.0), 1.0);
        assert_eq!(normalize_pixel(127.5), 0.0);
    }

    #[test]
    fn normalization_round_trips_all_8bit_values() {
        for v in 0..=255u8 {
            assert_eq!(denormalize_pixel(normalize_pixel(v as f64)), v);
        }
    }

    #[test]
    fn image_batch_rejects_out_of_range() {
        let mut a = Array4::zeros((1, 3, 2, 2));
        a[(0, 0, 0, 0)] = 1.5;
        assert!(ImageBatch::new(a).is_err());
        let mut b = Array4::zeros((1, 3, 2, 2));
        b[(0, 1, 1, 1)] = f64::NAN;
        assert!(ImageBatch::new(b).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let mut a = Array4::zeros((2, 3, 4, 4));
        a[(0, 1, 2, 3)] = 0.5;
        a[(1, 2, 0, 0)] = -0.25;
        let batch = ImageBatch::new(a.clone()).unwrap();
        let rows = batch.flatten_rows();
        let back = ImageBatch::from_rows(rows, 3, 4, 4).unwrap();
        assert_eq!(back.pixels(), &a);
    }

    #[test]
    fn scan_missing_root_errors() {
        let err = scan_dataset(Path::new("/definitely/not/here"), 28).unwrap_err();
        assert!(matches!(err, Error::MissingPath(_)));
    }
}
