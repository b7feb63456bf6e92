//! Feature embedders behind a common interface.
//!
//! Two are provided: the pretrained inception classifier (2048-d pooled
//! features, weights loaded from an ONNX file under the cache directory)
//! for parity with the standard evaluation protocol, and a tiny
//! fixed-weight convolutional embedder (64-d) seeded deterministically so
//! desk-scale tests run without any download.

use std::path::PathBuf;

use ndarray::{Array1, Array2, Array4};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataset::ImageBatch;
use crate::error::{Error, Result};
use crate::nn::layers::{conv_forward, relu};

/// Feature width of the toy embedder.
pub const TOY_EMBED_DIM: usize = 64;

/// Feature width of the inception pool layer.
pub const INCEPTION_EMBED_DIM: usize = 2048;

/// Fixed seed the toy embedder's weights are drawn from.
const TOY_WEIGHT_SEED: u64 = 0x70f1d;

/// How an embedder wants its inputs prepared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    /// Side length images are resized to before embedding; `None` keeps
    /// the native resolution.
    pub resize_to: Option<u32>,
    /// Expected pixel value range.
    pub value_range: (f64, f64),
}

/// Deterministic map from images to feature rows.
pub trait ImageEmbedder {
    fn id(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn preprocess(&self) -> Preprocess;
    /// (n, dim) features; identical images give identical rows.
    fn embed(&self, images: &ImageBatch) -> Result<Array2<f64>>;
}

/// Resolves an embedder by identifier.
pub fn create_embedder(id: &str) -> Result<Box<dyn ImageEmbedder>> {
    match id {
        "toy_conv" => Ok(Box::new(ToyConvEmbedder::new())),
        "inception_v3" => {
            #[cfg(feature = "inception")]
            {
                Ok(Box::new(InceptionEmbedder::load()?))
            }
            #[cfg(not(feature = "inception"))]
            {
                Err(Error::Embedder(
                    "this build does not include the inception embedder; \
                     rebuild with `--features inception`"
                        .into(),
                ))
            }
        }
        other => Err(Error::Embedder(format!(
            "unknown embedder `{other}`; available: toy_conv, inception_v3"
        ))),
    }
}

/// Directory for embedder weights and cached statistics: `$EVOGAN_CACHE`,
/// falling back to `~/.cache/evogan`.
pub fn cache_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("EVOGAN_CACHE") {
        return PathBuf::from(dir);
    }
    if let Ok(home) = std::env::var("HOME") {
        return PathBuf::from(home).join(".cache").join("evogan");
    }
    PathBuf::from(".evogan-cache")
}

// ---------------------------------------------------------------------------
// Toy embedder
// ---------------------------------------------------------------------------

/// Three fixed random stride-2 convolutions with rectifiers and a global
/// average pool into 64 features. Never trained; weights come from a
/// hard-coded seed, so features are reproducible everywhere.
pub struct ToyConvEmbedder {
    w1: Array4<f64>,
    w2: Array4<f64>,
    w3: Array4<f64>,
}

impl ToyConvEmbedder {
    pub fn new() -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(TOY_WEIGHT_SEED);
        ToyConvEmbedder {
            w1: he_kernel(&mut rng, 16, 3, 3),
            w2: he_kernel(&mut rng, 32, 16, 3),
            w3: he_kernel(&mut rng, TOY_EMBED_DIM, 32, 3),
        }
    }
}

impl Default for ToyConvEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

fn he_kernel(rng: &mut ChaCha20Rng, out_ch: usize, in_ch: usize, k: usize) -> Array4<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let std = (2.0 / (in_ch * k * k) as f64).sqrt();
    Array4::from_shape_fn((out_ch, in_ch, k, k), |_| {
        rng.sample::<f64, _>(StandardNormal) * std
    })
}

impl ImageEmbedder for ToyConvEmbedder {
    fn id(&self) -> &'static str {
        "toy_conv"
    }

    fn dim(&self) -> usize {
        TOY_EMBED_DIM
    }

    fn preprocess(&self) -> Preprocess {
        Preprocess {
            resize_to: None,
            value_range: (-1.0, 1.0),
        }
    }

    fn embed(&self, images: &ImageBatch) -> Result<Array2<f64>> {
        let x = images.pixels();
        let h1 = relu(&conv_forward(x, &self.w1, None, 2, 1));
        let h2 = relu(&conv_forward(&h1, &self.w2, None, 2, 1));
        let h3 = relu(&conv_forward(&h2, &self.w3, None, 2, 1));
        let (n, d, oh, ow) = h3.dim();
        let mut features = Array2::zeros((n, d));
        for b in 0..n {
            for c in 0..d {
                let mut acc = 0.0;
                for y in 0..oh {
                    for xx in 0..ow {
                        acc += h3[(b, c, y, xx)];
                    }
                }
                features[(b, c)] = acc / (oh * ow) as f64;
            }
        }
        Ok(features)
    }
}

// ---------------------------------------------------------------------------
// Inception embedder
// ---------------------------------------------------------------------------

#[cfg(feature = "inception")]
pub use inception::InceptionEmbedder;

#[cfg(feature = "inception")]
mod inception {
    use super::*;
    use tract_onnx::prelude::*;

    const WEIGHTS_FILE: &str = "inception_v3.onnx";

    const FETCH_INSTRUCTIONS: &str = "\
Place an ONNX export of the inception-v3 feature extractor at the path \
above (set EVOGAN_CACHE to change the directory). The graph must take \
float images shaped [1, 3, 299, 299] in [-1, 1] and emit the 2048-wide \
pooled feature vector. With torchvision installed:

    python - <<'EOF'
    import torch, torchvision
    m = torchvision.models.inception_v3(weights='IMAGENET1K_V1', aux_logits=True)
    m.fc = torch.nn.Identity(); m.eval()
    torch.onnx.export(m, torch.zeros(1, 3, 299, 299), 'inception_v3.onnx',
                      input_names=['images'], output_names=['features'])
    EOF
";

    type OnnxPlan =
        SimplePlan<TypedFact, Box<dyn TypedOp>, Graph<TypedFact, Box<dyn TypedOp>>>;

    /// Pooled-feature extractor backed by an ONNX graph run with tract.
    pub struct InceptionEmbedder {
        plan: OnnxPlan,
    }

    impl InceptionEmbedder {
        /// Loads `inception_v3.onnx` from the cache directory.
        pub fn load() -> Result<Self> {
            Self::load_from(&cache_dir().join(WEIGHTS_FILE))
        }

        pub fn load_from(path: &std::path::Path) -> Result<Self> {
            if !path.exists() {
                return Err(Error::EmbedderWeightsUnavailable {
                    path: path.to_path_buf(),
                    instructions: FETCH_INSTRUCTIONS.to_string(),
                });
            }
            let plan = tract_onnx::onnx()
                .model_for_path(path)
                .and_then(|m| {
                    m.with_input_fact(
                        0,
                        InferenceFact::dt_shape(f32::datum_type(), tvec![1, 3, 299, 299]),
                    )
                })
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable())
                .map_err(|e| Error::Embedder(format!("failed to load {}: {e}", path.display())))?;
            Ok(InceptionEmbedder { plan })
        }
    }

    impl ImageEmbedder for InceptionEmbedder {
        fn id(&self) -> &'static str {
            "inception_v3"
        }

        fn dim(&self) -> usize {
            INCEPTION_EMBED_DIM
        }

        fn preprocess(&self) -> Preprocess {
            Preprocess {
                resize_to: Some(299),
                value_range: (-1.0, 1.0),
            }
        }

        fn embed(&self, images: &ImageBatch) -> Result<Array2<f64>> {
            let n = images.len();
            let mut features = Array2::zeros((n, INCEPTION_EMBED_DIM));
            for i in 0..n {
                let resized = resize_to_299(images, i);
                let input = tract_ndarray::Array4::from_shape_fn(
                    (1, 3, 299, 299),
                    |(_, c, y, x)| resized[(c, y, x)] as f32,
                );
                let result = self
                    .plan
                    .run(tvec![Tensor::from(input).into()])
                    .map_err(|e| Error::Embedder(format!("inference failed: {e}")))?;
                let out = result[0]
                    .to_array_view::<f32>()
                    .map_err(|e| Error::Embedder(format!("bad output tensor: {e}")))?;
                let flat: Vec<f32> = out.iter().cloned().collect();
                if flat.len() != INCEPTION_EMBED_DIM {
                    return Err(Error::Embedder(format!(
                        "expected {INCEPTION_EMBED_DIM} features, model produced {}",
                        flat.len()
                    )));
                }
                for (j, v) in flat.iter().enumerate() {
                    features[(i, j)] = *v as f64;
                }
            }
            Ok(features)
        }
    }

    /// Bilinear resize of one [-1, 1] image to 299x299, in float space.
    fn resize_to_299(images: &ImageBatch, index: usize) -> ndarray::Array3<f64> {
        let px = images.pixels();
        let (_, c, h, w) = px.dim();
        let mut out = ndarray::Array3::zeros((c, 299, 299));
        for ch in 0..c {
            for oy in 0..299 {
                for ox in 0..299 {
                    // align-corners=false convention
                    let sy = ((oy as f64 + 0.5) * h as f64 / 299.0 - 0.5)
                        .clamp(0.0, h as f64 - 1.0);
                    let sx = ((ox as f64 + 0.5) * w as f64 / 299.0 - 0.5)
                        .clamp(0.0, w as f64 - 1.0);
                    let y0 = sy.floor() as usize;
                    let x0 = sx.floor() as usize;
                    let y1 = (y0 + 1).min(h - 1);
                    let x1 = (x0 + 1).min(w - 1);
                    let fy = sy - y0 as f64;
                    let fx = sx - x0 as f64;
                    let v = px[(index, ch, y0, x0)] * (1.0 - fy) * (1.0 - fx)
                        + px[(index, ch, y0, x1)] * (1.0 - fy) * fx
                        + px[(index, ch, y1, x0)] * fy * (1.0 - fx)
                        + px[(index, ch, y1, x1)] * fy * fx;
                    out[(ch, oy, ox)] = v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;
    use rand::Rng;

    use crate::rng::{stream_rng, Stream};

    fn random_images(n: usize, seed: u64) -> ImageBatch {
        let mut rng = stream_rng(seed, Stream::Train);
        ImageBatch::new(Array4::from_shape_fn((n, 3, 28, 28), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    #[test]
    fn toy_embedder_shape_and_determinism() {
        let e = ToyConvEmbedder::new();
        let images = random_images(6, 0);
        let a = e.embed(&images).unwrap();
        assert_eq!(a.dim(), (6, TOY_EMBED_DIM));
        let b = ToyConvEmbedder::new().embed(&images).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_images_identical_rows() {
        let e = ToyConvEmbedder::new();
        let one = random_images(1, 1);
        let mut px = Array4::zeros((2, 3, 28, 28));
        px.index_axis_mut(Axis(0), 0)
            .assign(&one.pixels().index_axis(Axis(0), 0));
        px.index_axis_mut(Axis(0), 1)
            .assign(&one.pixels().index_axis(Axis(0), 0));
        let f = e.embed(&ImageBatch::new(px).unwrap()).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }

    #[test]
    fn embedding_order_invariance_of_stats() {
        let e = ToyConvEmbedder::new();
        let images = random_images(8, 2);
        let f = e.embed(&images).unwrap();
        let stats = crate::metrics::gaussian_stats(&f).unwrap();

        let mut reversed = Array4::zeros(images.pixels().raw_dim());
        for i in 0..8 {
            reversed
                .index_axis_mut(Axis(0), i)
                .assign(&images.pixels().index_axis(Axis(0), 7 - i));
        }
        let f2 = e.embed(&ImageBatch::new(reversed).unwrap()).unwrap();
        let stats2 = crate::metrics::gaussian_stats(&f2).unwrap();
        for (a, b) in stats.mu.iter().zip(stats2.mu.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_embedder_rejected() {
        assert!(create_embedder("resnet").is_err());
    }

    #[cfg(feature = "inception")]
    #[test]
    fn inception_missing_weights_explains_fetch() {
        let dir = tempfile::tempdir().unwrap();
        let err =
            InceptionEmbedder::load_from(&dir.path().join("inception_v3.onnx")).unwrap_err();
        match err {
            Error::EmbedderWeightsUnavailable { instructions, .. } => {
                assert!(instructions.contains("onnx"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    /// Runs only when real weights are present in the cache; the hermetic
    /// test environment has no network to fetch them.
    #[cfg(feature = "inception")]
    #[test]
    fn inception_shape_if_weights_present() {
        let path = cache_dir().join("inception_v3.onnx");
        if !path.exists() {
            eprintln!("skipping: {} not present", path.display());
            return;
        }
        let e = InceptionEmbedder::load_from(&path).unwrap();
        let images = random_images(4, 3);
        let f = e.embed(&images).unwrap();
        assert_eq!(f.dim(), (4, INCEPTION_EMBED_DIM));
    }
}
