//! Generator, discriminator and the auxiliary code-prediction head.
//!
//! Both networks follow the small-image convolutional topology: the
//! generator maps the composed latent input through two dense layers to a
//! `(channels, size/4, size/4)` grid and upsamples twice with stride-2
//! transposed convolutions into a tanh output; the discriminator downsamples
//! twice, flattens into a dense trunk, and feeds two heads — a sigmoid
//! realness scalar and the auxiliary head predicting the latent codes from
//! the trunk's penultimate features. Batch normalisation is used in the
//! generator only; the discriminator uses leaky rectifiers (slope 0.1), so
//! its outputs never depend on batch composition — which the GA relies on
//! when scoring candidates in arbitrary groupings.
//!
//! All passes are hand-written `f64` forward/backward pairs; gradients are
//! verified against central finite differences in the acceptance suite.

mod adam;
pub mod layers;

pub use adam::Adam;
pub use layers::Mode;

use ndarray::{s, Array1, Array2, Array4, ArrayD, Axis};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageBatch;
use crate::error::{Error, Result};
use crate::latent::LatentSpec;
use layers::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid, tanh, tanh_backward,
    BatchNorm, BnCache, Conv2d, ConvTranspose2d, Dense, ParamVisitor, StateVisitor,
};

/// Negative slope of the discriminator's leaky rectifiers.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Layer widths; every experiment records these so runs are
/// self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub image_channels: usize,
    /// Output side length; must be a multiple of 4.
    pub image_size: usize,
    pub g_fc_dim: usize,
    /// Channels at the generator's base grid; halved after the first
    /// upsampling stage.
    pub g_channels: usize,
    /// Channels after the discriminator's first convolution; doubled after
    /// the second.
    pub d_channels: usize,
    pub d_fc_dim: usize,
    pub q_fc_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            image_channels: 3,
            image_size: 28,
            g_fc_dim: 1024,
            g_channels: 128,
            d_channels: 64,
            d_fc_dim: 1024,
            q_fc_dim: 128,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 4 || self.image_size % 4 != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_size must be a multiple of 4, got {}",
                self.image_size
            )));
        }
        if self.g_channels < 2 || self.g_channels % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "g_channels must be even and >= 2, got {}",
                self.g_channels
            )));
        }
        for (name, v) in [
            ("image_channels", self.image_channels),
            ("g_fc_dim", self.g_fc_dim),
            ("d_channels", self.d_channels),
            ("d_fc_dim", self.d_fc_dim),
            ("q_fc_dim", self.q_fc_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Side length of the grid the generator starts from.
    pub fn base_size(&self) -> usize {
        self.image_size / 4
    }
}

/// Collects every persistent array of a network as (name, shape, data).
pub fn export_state(visit: impl FnOnce(&mut StateVisitor<'_>)) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    visit(&mut |name: &str, shape: &[usize], data: &mut Vec<f64>| {
        out.push((name.to_string(), shape.to_vec(), data.clone()));
    });
    out
}

/// Writes previously exported arrays back, matching by visit order and
/// validating names and shapes.
pub fn import_state(
    arrays: &[(String, Vec<usize>, Vec<f64>)],
    visit: impl FnOnce(&mut StateVisitor<'_>),
) -> Result<()> {
    let mut index = 0usize;
    let mut error: Option<Error> = None;
    visit(&mut |name: &str, shape: &[usize], data: &mut Vec<f64>| {
        if error.is_some() {
            return;
        }
        let Some((got_name, got_shape, got_data)) = arrays.get(index) else {
            error = Some(Error::Checkpoint(format!(
                "missing array {index} ({name}) in checkpoint"
            )));
            return;
        };
        if got_name != name || got_shape != shape {
            error = Some(Error::Checkpoint(format!(
                "checkpoint array mismatch: expected {name} {shape:?}, found {got_name} {got_shape:?}"
            )));
            return;
        }
        data.copy_from_slice(got_data);
        index += 1;
    });
    if let Some(e) = error {
        return Err(e);
    }
    if index != arrays.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} arrays, network consumed {index}",
            arrays.len()
        )));
    }
    Ok(())
}

fn l2_norm(data: &[f64]) -> f64 {
    data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Latent-to-image decoder with a tanh output head.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: NetworkConfig,
    latent_width: usize,
    fc1: Dense,
    bn1: BatchNorm,
    fc2: Dense,
    bn2: BatchNorm,
    dc1: ConvTranspose2d,
    bn3: BatchNorm,
    dc2: ConvTranspose2d,
}

/// Intermediates of a training-mode generator pass.
pub struct GenCache {
    x: Array2<f64>,
    bn1: BnCache,
    r1: Array2<f64>,
    bn2: BnCache,
    r2: Array4<f64>,
    bn3: BnCache,
    r3: Array4<f64>,
    /// Tanh output (the generated images).
    pub y: Array4<f64>,
}

impl Generator {
    pub fn new(cfg: &NetworkConfig, latent_width: usize, rng: &mut ChaCha20Rng) -> Self {
        let base = cfg.base_size();
        let gch = cfg.g_channels;
        Generator {
            cfg: *cfg,
            latent_width,
            fc1: Dense::new("g.fc1", latent_width, cfg.g_fc_dim, rng),
            bn1: BatchNorm::new("g.bn1", cfg.g_fc_dim),
            fc2: Dense::new("g.fc2", cfg.g_fc_dim, gch * base * base, rng),
            bn2: BatchNorm::new("g.bn2", gch),
            dc1: ConvTranspose2d::new("g.dc1", gch, gch / 2, 4, 2, 1, rng),
            bn3: BatchNorm::new("g.bn3", gch / 2),
            dc2: ConvTranspose2d::new("g.dc2", gch / 2, cfg.image_channels, 4, 2, 1, rng),
        }
    }

    pub fn latent_width(&self) -> usize {
        self.latent_width
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.latent_width {
            return Err(Error::ShapeMismatch {
                expected: format!("latent width {}", self.latent_width),
                got: format!("{}", x.ncols()),
            });
        }
        Ok(())
    }

    /// Training-mode pass: batch statistics in the normalisation layers,
    /// running averages updated, intermediates cached for backward.
    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<(Array4<f64>, GenCache)> {
        self.check_input(x)?;
        let n = x.nrows();
        let base = self.cfg.base_size();
        let gch = self.cfg.g_channels;

        let h1 = self.fc1.forward(x);
        let (b1, c1) = self.bn1.forward2(&h1, Mode::Train);
        let r1 = relu(&b1);
        let h2 = self.fc2.forward(&r1);
        let h2 = h2
            .into_shape_with_order((n, gch, base, base))
            .expect("fc2 output matches grid");
        let (b2, c2) = self.bn2.forward4(&h2, Mode::Train);
        let r2 = relu(&b2);
        let h3 = self.dc1.forward(&r2);
        let (b3, c3) = self.bn3.forward4(&h3, Mode::Train);
        let r3 = relu(&b3);
        let h4 = self.dc2.forward(&r3);
        let y = tanh(&h4);
        let cache = GenCache {
            x: x.clone(),
            bn1: c1.expect("train mode caches"),
            r1,
            bn2: c2.expect("train mode caches"),
            r2,
            bn3: c3.expect("train mode caches"),
            r3,
            y: y.clone(),
        };
        Ok((y, cache))
    }

    /// Inference-mode pass from running statistics; deterministic in
    /// (parameters, input) and does not mutate the network.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array4<f64>> {
        self.check_input(x)?;
        let n = x.nrows();
        let base = self.cfg.base_size();
        let gch = self.cfg.g_channels;
        let h1 = self.fc1.forward(x);
        let r1 = relu(&self.bn1.eval2(&h1));
        let h2 = self.fc2.forward(&r1);
        let h2 = h2
            .into_shape_with_order((n, gch, base, base))
            .expect("fc2 output matches grid");
        let r2 = relu(&self.bn2.eval4(&h2));
        let r3 = relu(&self.bn3.eval4(&self.dc1.forward(&r2)));
        Ok(tanh(&self.dc2.forward(&r3)))
    }

    /// Inference pass wrapped as a validated image batch.
    pub fn generate(&self, x: &Array2<f64>) -> Result<ImageBatch> {
        ImageBatch::new(self.forward_eval(x)?)
    }

    /// Accumulates parameter gradients from the loss gradient with respect
    /// to the generated images.
    pub fn backward(&mut self, cache: &GenCache, d_images: &Array4<f64>) {
        let n = cache.x.nrows();
        let g = tanh_backward(&cache.y, d_images);
        let g = self.dc2.backward(&cache.r3, &g);
        let g = relu_backward(&cache.r3, &g);
        let g = self.bn3.backward4(&cache.bn3, &g);
        let g = self.dc1.backward(&cache.r2, &g);
        let g = relu_backward(&cache.r2, &g);
        let g = self.bn2.backward4(&cache.bn2, &g);
        let g = g
            .into_shape_with_order((n, self.fc2.out_dim()))
            .expect("grid flattens back to fc2 width");
        let g = self.fc2.backward(&cache.r1, &g);
        let g = relu_backward(&cache.r1, &g);
        let g = self.bn1.backward2(&cache.bn1, &g);
        let _ = self.fc1.backward(&cache.x, &g);
    }

    pub fn zero_grads(&mut self) {
        self.fc1.zero_grads();
        self.bn1.zero_grads();
        self.fc2.zero_grads();
        self.bn2.zero_grads();
        self.dc1.zero_grads();
        self.bn3.zero_grads();
        self.dc2.zero_grads();
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        self.fc1.visit_params(f);
        self.bn1.visit_params(f);
        self.fc2.visit_params(f);
        self.bn2.visit_params(f);
        self.dc1.visit_params(f);
        self.bn3.visit_params(f);
        self.dc2.visit_params(f);
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        self.fc1.visit_state(f);
        self.bn1.visit_state(f);
        self.fc2.visit_state(f);
        self.bn2.visit_state(f);
        self.dc1.visit_state(f);
        self.bn3.visit_state(f);
        self.dc2.visit_state(f);
    }

    pub fn param_norms(&mut self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name: &str, p: &mut [f64], _: &mut [f64]| {
            out.push((name.to_string(), l2_norm(p)));
        });
        out
    }
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

/// Outputs of one discriminator pass.
#[derive(Debug, Clone)]
pub struct DiscOutput {
    /// Realness probabilities, `sigmoid(logits)`, one per image.
    pub realness: Array1<f64>,
    /// Pre-sigmoid realness scores; kept for numerically stable loss
    /// gradients.
    pub logits: Array1<f64>,
    /// (batch, n_categorical·n_classes) logits from the auxiliary head.
    pub q_cat_logits: Array2<f64>,
    /// (batch, n_continuous) predicted Gaussian means.
    pub q_cont_means: Array2<f64>,
}

/// Intermediates of one discriminator pass.
pub struct DiscCache {
    x: Array4<f64>,
    a1: Array4<f64>,
    a2: Array4<f64>,
    flat: Array2<f64>,
    /// Trunk features (penultimate layer) both heads consume.
    trunk: Array2<f64>,
    qh: Array2<f64>,
}

/// Convolutional encoder with a realness head and the auxiliary
/// code-prediction head on its penultimate features.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub cfg: NetworkConfig,
    latent: LatentSpec,
    conv1: Conv2d,
    conv2: Conv2d,
    fc_trunk: Dense,
    d_head: Dense,
    q_fc: Dense,
    q_out: Dense,
}

impl Discriminator {
    pub fn new(cfg: &NetworkConfig, latent: &LatentSpec, rng: &mut ChaCha20Rng) -> Self {
        let base = cfg.base_size();
        let dch = cfg.d_channels;
        let flat_dim = 2 * dch * base * base;
        let q_out_dim = latent.cat_width() + latent.n_continuous;
        Discriminator {
            cfg: *cfg,
            latent: *latent,
            conv1: Conv2d::new("d.conv1", cfg.image_channels, dch, 4, 2, 1, rng),
            conv2: Conv2d::new("d.conv2", dch, 2 * dch, 4, 2, 1, rng),
            fc_trunk: Dense::new("d.fc_trunk", flat_dim, cfg.d_fc_dim, rng),
            d_head: Dense::new("d.head", cfg.d_fc_dim, 1, rng),
            q_fc: Dense::new("q.fc", cfg.d_fc_dim, cfg.q_fc_dim, rng),
            q_out: Dense::new("q.out", cfg.q_fc_dim, q_out_dim, rng),
        }
    }

    pub fn latent_spec(&self) -> &LatentSpec {
        &self.latent
    }

    fn check_input(&self, images: &Array4<f64>) -> Result<()> {
        let (_, c, h, w) = images.dim();
        let s = self.cfg.image_size;
        if c != self.cfg.image_channels || h != s || w != s {
            return Err(Error::ShapeMismatch {
                expected: format!("images ({}, {s}, {s})", self.cfg.image_channels),
                got: format!("({c}, {h}, {w})"),
            });
        }
        Ok(())
    }

    /// Scores a batch of images. The discriminator has no batch-coupled
    /// layers, so each row's outputs depend only on that image.
    pub fn forward(&self, images: &Array4<f64>) -> Result<(DiscOutput, DiscCache)> {
        self.check_input(images)?;
        let n = images.dim().0;
        let a1 = leaky_relu(&self.conv1.forward(images), LEAKY_SLOPE);
        let a2 = leaky_relu(&self.conv2.forward(&a1), LEAKY_SLOPE);
        let flat = a2
            .view()
            .into_shape_with_order((n, self.fc_trunk.in_dim()))
            .expect("conv output flattens to trunk width")
            .to_owned();
        let trunk = leaky_relu(&self.fc_trunk.forward(&flat), LEAKY_SLOPE);
        let logits2 = self.d_head.forward(&trunk); // (n, 1)
        let logits = logits2.index_axis(Axis(1), 0).to_owned();
        let realness = sigmoid(&logits);
        let qh = leaky_relu(&self.q_fc.forward(&trunk), LEAKY_SLOPE);
        let q = self.q_out.forward(&qh);
        let cat_w = self.latent.cat_width();
        let q_cat_logits = q.slice(s![.., 0..cat_w]).to_owned();
        let q_cont_means = q.slice(s![.., cat_w..]).to_owned();
        Ok((
            DiscOutput {
                realness,
                logits,
                q_cat_logits,
                q_cont_means,
            },
            DiscCache {
                x: images.clone(),
                a1,
                a2,
                flat,
                trunk,
                qh,
            },
        ))
    }

    /// Convenience pass returning outputs only.
    pub fn score(&self, images: &ImageBatch) -> Result<DiscOutput> {
        Ok(self.forward(images.pixels())?.0)
    }

    /// Accumulates parameter gradients given the loss gradients with
    /// respect to the realness logits and the auxiliary outputs. Returns
    /// the gradient with respect to the input images.
    pub fn backward(
        &mut self,
        cache: &DiscCache,
        d_logits: &Array1<f64>,
        d_q_cat: &Array2<f64>,
        d_q_cont: &Array2<f64>,
    ) -> Array4<f64> {
        let n = cache.x.dim().0;
        let d_logits2 = d_logits
            .view()
            .into_shape_with_order((n, 1))
            .expect("column vector");
        let mut g_trunk = self.d_head.backward(&cache.trunk, &d_logits2.to_owned());

        let cat_w = self.latent.cat_width();
        let mut d_q = Array2::zeros((n, cat_w + self.latent.n_continuous));
        d_q.slice_mut(s![.., 0..cat_w]).assign(d_q_cat);
        d_q.slice_mut(s![.., cat_w..]).assign(d_q_cont);
        let g_qh = self.q_out.backward(&cache.qh, &d_q);
        let g_qh = leaky_relu_backward(&cache.qh, &g_qh, LEAKY_SLOPE);
        g_trunk += &self.q_fc.backward(&cache.trunk, &g_qh);

        let g = leaky_relu_backward(&cache.trunk, &g_trunk, LEAKY_SLOPE);
        let g = self.fc_trunk.backward(&cache.flat, &g);
        let base = self.cfg.base_size();
        let g = g
            .into_shape_with_order((n, 2 * self.cfg.d_channels, base, base))
            .expect("trunk width reshapes to conv grid");
        let g = leaky_relu_backward(&cache.a2, &g, LEAKY_SLOPE);
        let g = self.conv2.backward(&cache.a1, &g);
        let g = leaky_relu_backward(&cache.a1, &g, LEAKY_SLOPE);
        self.conv1.backward(&cache.x, &g)
    }

    pub fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.conv2.zero_grads();
        self.fc_trunk.zero_grads();
        self.d_head.zero_grads();
        self.q_fc.zero_grads();
        self.q_out.zero_grads();
    }

    /// All parameters: trunk, realness head, auxiliary head.
    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        self.conv1.visit_params(f);
        self.conv2.visit_params(f);
        self.fc_trunk.visit_params(f);
        self.d_head.visit_params(f);
        self.q_fc.visit_params(f);
        self.q_out.visit_params(f);
    }

    /// The auxiliary head only; updated together with the generator.
    pub fn visit_q_params(&mut self, f: &mut ParamVisitor<'_>) {
        self.q_fc.visit_params(f);
        self.q_out.visit_params(f);
    }

    pub fn visit_state(&mut self, f: &mut StateVisitor<'_>) {
        self.conv1.visit_state(f);
        self.conv2.visit_state(f);
        self.fc_trunk.visit_state(f);
        self.d_head.visit_state(f);
        self.q_fc.visit_state(f);
        self.q_out.visit_state(f);
    }

    pub fn param_norms(&mut self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name: &str, p: &mut [f64], _: &mut [f64]| {
            out.push((name.to_string(), l2_norm(p)));
        });
        out
    }
}

/// Flattened copy of every persistent array, keyed by name. Used by the
/// test oracles to re-run networks with independent arithmetic.
pub fn state_map(
    visit: impl FnOnce(&mut StateVisitor<'_>),
) -> std::collections::BTreeMap<String, ArrayD<f64>> {
    export_state(visit)
        .into_iter()
        .map(|(name, shape, data)| {
            (
                name,
                ArrayD::from_shape_vec(ndarray::IxDyn(&shape), data).expect("shape matches"),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{compose_input, sample_latent};
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    fn tiny_cfg() -> NetworkConfig {
        NetworkConfig {
            image_channels: 3,
            image_size: 28,
            g_fc_dim: 32,
            g_channels: 8,
            d_channels: 4,
            d_fc_dim: 32,
            q_fc_dim: 16,
        }
    }

    fn latent() -> LatentSpec {
        LatentSpec {
            z_dim: 62,
            n_categorical: 1,
            n_classes: 4,
            n_continuous: 2,
        }
    }

    #[test]
    fn generator_output_shape_and_range() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut init = stream_rng(0, Stream::Init);
        let mut gen = Generator::new(&cfg, spec.total_width(), &mut init);
        let mut rng = stream_rng(1, Stream::Train);
        let x = compose_input(&sample_latent(&spec, 16, &mut rng));
        let (y, _) = gen.forward_train(&x).unwrap();
        assert_eq!(y.dim(), (16, 3, 28, 28));
        assert!(y.iter().all(|v| v.abs() <= 1.0));
        // eval path too
        let y = gen.forward_eval(&x).unwrap();
        assert_eq!(y.dim(), (16, 3, 28, 28));
    }

    #[test]
    fn generator_rejects_wrong_width() {
        let cfg = tiny_cfg();
        let mut init = stream_rng(0, Stream::Init);
        let gen = Generator::new(&cfg, 68, &mut init);
        let x = Array2::zeros((4, 67));
        assert!(matches!(
            gen.forward_eval(&x),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn identical_latents_give_identical_images() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut init = stream_rng(3, Stream::Init);
        let gen = Generator::new(&cfg, spec.total_width(), &mut init);
        let mut rng = stream_rng(4, Stream::Train);
        let one = compose_input(&sample_latent(&spec, 1, &mut rng));
        let mut x = Array2::zeros((2, spec.total_width()));
        x.row_mut(0).assign(&one.row(0));
        x.row_mut(1).assign(&one.row(0));
        let y = gen.forward_eval(&x).unwrap();
        assert_eq!(
            y.index_axis(Axis(0), 0).to_owned(),
            y.index_axis(Axis(0), 1).to_owned()
        );
    }

    #[test]
    fn generator_range_holds_under_fuzzing() {
        let spec = latent();
        let mut rng = stream_rng(5, Stream::Train);
        // 50 random nets x 20 random inputs = 1000 trials.
        for net in 0..50u64 {
            let mut init = stream_rng(net, Stream::Init);
            let gen = Generator::new(&tiny_cfg(), spec.total_width(), &mut init);
            let x = compose_input(&sample_latent(&spec, 20, &mut rng)) * 3.0;
            let y = gen.forward_eval(&x).unwrap();
            assert!(y.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn discriminator_shapes_and_open_interval() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut init = stream_rng(6, Stream::Init);
        let disc = Discriminator::new(&cfg, &spec, &mut init);
        let mut rng = stream_rng(7, Stream::Train);
        let imgs = ndarray::Array4::from_shape_fn((16, 3, 28, 28), |_| {
            rng.random_range(-1.0..1.0)
        });
        let (out, _) = disc.forward(&imgs).unwrap();
        assert_eq!(out.realness.len(), 16);
        assert_eq!(out.q_cat_logits.dim(), (16, 4));
        assert_eq!(out.q_cont_means.dim(), (16, 2));
        assert!(out.realness.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn discriminator_sigmoid_open_interval_fuzzed() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut rng = stream_rng(8, Stream::Train);
        // 50 random nets x 20 random images = 1000 trials.
        for net in 0..50u64 {
            let mut init = stream_rng(net, Stream::Init);
            let disc = Discriminator::new(&cfg, &spec, &mut init);
            let imgs = ndarray::Array4::from_shape_fn((20, 3, 28, 28), |_| {
                rng.random_range(-1.0..1.0)
            });
            let (out, _) = disc.forward(&imgs).unwrap();
            assert!(out.realness.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn discriminator_identical_rows_identical_outputs() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut init = stream_rng(9, Stream::Init);
        let disc = Discriminator::new(&cfg, &spec, &mut init);
        let mut rng = stream_rng(10, Stream::Train);
        let one = ndarray::Array4::from_shape_fn((1, 3, 28, 28), |_| {
            rng.random_range(-1.0..1.0)
        });
        let mut imgs = ndarray::Array4::zeros((2, 3, 28, 28));
        imgs.index_axis_mut(Axis(0), 0).assign(&one.index_axis(Axis(0), 0));
        imgs.index_axis_mut(Axis(0), 1).assign(&one.index_axis(Axis(0), 0));
        let (out, _) = disc.forward(&imgs).unwrap();
        assert_eq!(out.realness[0], out.realness[1]);
        assert_eq!(out.q_cat_logits.row(0), out.q_cat_logits.row(1));
    }

    #[test]
    fn discriminator_rejects_wrong_shape() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut init = stream_rng(11, Stream::Init);
        let disc = Discriminator::new(&cfg, &spec, &mut init);
        let imgs = ndarray::Array4::zeros((2, 3, 27, 27));
        assert!(matches!(
            disc.forward(&imgs),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn state_export_import_round_trip() {
        let cfg = tiny_cfg();
        let spec = latent();
        let mut init = stream_rng(12, Stream::Init);
        let mut gen = Generator::new(&cfg, spec.total_width(), &mut init);
        let mut rng = stream_rng(13, Stream::Train);
        let x = compose_input(&sample_latent(&spec, 4, &mut rng));
        let before = gen.forward_eval(&x).unwrap();

        let exported = export_state(|f| gen.visit_state(f));
        let mut init2 = stream_rng(99, Stream::Init);
        let mut gen2 = Generator::new(&cfg, spec.total_width(), &mut init2);
        import_state(&exported, |f| gen2.visit_state(f)).unwrap();
        let after = gen2.forward_eval(&x).unwrap();
        assert_eq!(before, after);
    }
}
