//! Latent input: incompressible noise `z` plus structured codes `c`.
//!
//! The generator consumes the concatenation `[z | c_cat | c_cont]`. The
//! categorical codes are one-hot blocks the auxiliary head learns to
//! recover; the continuous codes are uniform on `[-1, 1]`.

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions of the latent input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpec {
    /// Noise dimensions.
    pub z_dim: usize,
    /// Number of categorical codes.
    pub n_categorical: usize,
    /// Categories per categorical code.
    pub n_classes: usize,
    /// Number of continuous codes.
    pub n_continuous: usize,
}

impl Default for LatentSpec {
    fn default() -> Self {
        // InfoGAN's small-image configuration, with one 4-way categorical
        // code matching the four dataset subtypes.
        LatentSpec {
            z_dim: 62,
            n_categorical: 1,
            n_classes: 4,
            n_continuous: 2,
        }
    }
}

impl LatentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.z_dim < 1 {
            return Err(Error::InvalidConfig("z_dim must be >= 1".into()));
        }
        if self.n_categorical > 0 && self.n_classes < 2 {
            return Err(Error::InvalidConfig(
                "categorical codes need at least 2 classes".into(),
            ));
        }
        Ok(())
    }

    pub fn cat_width(&self) -> usize {
        self.n_categorical * self.n_classes
    }

    /// Width of the composed generator input.
    pub fn total_width(&self) -> usize {
        self.z_dim + self.cat_width() + self.n_continuous
    }
}

/// A sampled batch of latent inputs, kept in parts so the structured codes
/// stay addressable.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub spec: LatentSpec,
    /// (batch, z_dim), standard normal.
    pub z: Array2<f64>,
    /// (batch, n_categorical·n_classes), one-hot per code block.
    pub c_cat: Array2<f64>,
    /// (batch, n_continuous), uniform on [-1, 1].
    pub c_cont: Array2<f64>,
}

impl LatentBatch {
    pub fn batch_size(&self) -> usize {
        self.z.nrows()
    }

    /// Class index of categorical code `code` for each row.
    pub fn cat_class(&self, code: usize, row: usize) -> usize {
        let block = self
            .c_cat
            .slice(s![row, code * self.spec.n_classes..(code + 1) * self.spec.n_classes]);
        block
            .iter()
            .position(|&v| v == 1.0)
            .expect("one-hot block has a 1")
    }
}

/// Draws a latent batch: `z ~ N(0, 1)`, categorical codes uniform over
/// classes, continuous codes uniform on `[-1, 1]`.
pub fn sample_latent(spec: &LatentSpec, batch_size: usize, rng: &mut ChaCha20Rng) -> LatentBatch {
    let z = Array2::from_shape_fn((batch_size, spec.z_dim), |_| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let mut c_cat = Array2::zeros((batch_size, spec.cat_width()));
    for i in 0..batch_size {
        for code in 0..spec.n_categorical {
            let class = rng.random_range(0..spec.n_classes);
            c_cat[(i, code * spec.n_classes + class)] = 1.0;
        }
    }
    let c_cont = Array2::from_shape_fn((batch_size, spec.n_continuous), |_| {
        rng.random_range(-1.0..1.0)
    });
    LatentBatch {
        spec: *spec,
        z,
        c_cat,
        c_cont,
    }
}

/// Concatenates the parts as `[z | c_cat | c_cont]`.
pub fn compose_input(batch: &LatentBatch) -> Array2<f64> {
    let n = batch.batch_size();
    let spec = &batch.spec;
    let mut out = Array2::zeros((n, spec.total_width()));
    out.slice_mut(s![.., 0..spec.z_dim]).assign(&batch.z);
    out.slice_mut(s![.., spec.z_dim..spec.z_dim + spec.cat_width()])
        .assign(&batch.c_cat);
    out.slice_mut(s![.., spec.z_dim + spec.cat_width()..])
        .assign(&batch.c_cont);
    out
}

/// Splits a composed input back into its parts.
pub fn decompose_input(spec: &LatentSpec, composed: &Array2<f64>) -> Result<LatentBatch> {
    if composed.ncols() != spec.total_width() {
        return Err(Error::ShapeMismatch {
            expected: format!("width {}", spec.total_width()),
            got: format!("{}", composed.ncols()),
        });
    }
    Ok(LatentBatch {
        spec: *spec,
        z: composed.slice(s![.., 0..spec.z_dim]).to_owned(),
        c_cat: composed
            .slice(s![.., spec.z_dim..spec.z_dim + spec.cat_width()])
            .to_owned(),
        c_cont: composed
            .slice(s![.., spec.z_dim + spec.cat_width()..])
            .to_owned(),
    })
}
