//! Adversarial image synthesis with a genetic-algorithm refinement stage.
//!
//! This crate trains small-image generative adversarial models in three
//! flavours: a plain InfoGAN baseline and two variants that run a genetic
//! algorithm over the generated batch before the discriminator sees it.
//! The GA treats each generated image as a chromosome and the
//! discriminator's realness score as its fitness, evolving the batch by
//! roulette-wheel selection, arithmetic crossover (the "WC" variant) and
//! per-gene Gaussian mutation. Synthesis quality is tracked with the
//! Fréchet distance between Gaussians fitted to embedded features of real
//! and generated images.
//!
//! Everything runs on the CPU in `f64` with explicit, checkpointable RNG
//! state, so a `(config, seed)` pair fully determines a training run.
//!
//! The crate is organised around the pipeline:
//!
//! - [`dataset`] — folder-structured image ingestion plus a synthetic
//!   shape dataset for desk-scale experiments
//! - [`latent`] — noise + structured-code sampling and composition
//! - [`nn`] — generator / discriminator networks with hand-rolled
//!   forward and backward passes
//! - [`losses`] — the adversarial objectives including the
//!   mutual-information lower bound
//! - [`ga`] — the population engine: selection, crossover, mutation,
//!   elitist replacement
//! - [`training`] — the training loop for all three variants, with
//!   checkpoints and resumable runs
//! - [`metrics`] — feature embedders, Gaussian statistics and the
//!   Fréchet distance
//! - [`cli`] — the `evogan` command-line entry points, also callable as
//!   library functions
//!
//! Runnable demonstrations of each capability live under `examples/`;
//! start with `make_synthetic` and `train_baseline`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod ga;
pub mod latent;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod plotting;
pub mod rng;
pub mod training;

pub use config::{TrainingConfig, Variant};
pub use dataset::{DatasetManifest, ImageBatch};
pub use error::Error;
pub use ga::{GaConfig, Individual, Population};
pub use latent::{LatentBatch, LatentSpec};
pub use metrics::FidStats;
