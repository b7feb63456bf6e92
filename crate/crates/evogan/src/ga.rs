//! Population refinement of generated images.
//!
//! Each generated image, flattened, is a chromosome; its fitness is the
//! discriminator's realness score. One [`evolve`] call runs a fixed number
//! of generations of roulette-wheel selection, optional arithmetic
//! crossover, per-gene Gaussian mutation with clamping, and elitist
//! replacement (a child only ever displaces the least-fit member, and only
//! when strictly fitter). The discriminator is borrowed immutably, so its
//! parameters are frozen for the duration of a call.
//!
//! Within one generation all offspring are bred from the population as it
//! stood at the start of that generation, their fitness is evaluated as a
//! single batch, and replacements are applied in offspring order. The
//! refinement is non-differentiable by construction — outputs are detached
//! images, never a gradient path.
//!
//! Every random draw can be recorded into a [`GaTrace`] so that an
//! independent replayer can reproduce the run decision by decision.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageBatch;
use crate::error::{Error, Result};
use crate::nn::Discriminator;

/// Pixel bounds chromosomes are clamped to.
pub const CLAMP_RANGE: (f64, f64) = (-1.0, 1.0);

/// One candidate image in the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Flattened image, length `channels·height·width`, values in
    /// [`CLAMP_RANGE`].
    pub chromosome: Array1<f64>,
    /// The discriminator's realness score, once evaluated.
    pub fitness: Option<f64>,
}

/// Operator parameters for one evolution call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    /// Generations per training iteration.
    pub generations: usize,
    /// Per-gene probability of mutation.
    pub mutation_rate: f64,
    /// Standard deviation of the additive Gaussian perturbation.
    pub mutation_scale: f64,
    /// Arithmetic crossover on (the WC variant) or off (WoC).
    pub crossover_enabled: bool,
    /// Children bred per generation. Zero makes evolution a pure
    /// fitness-sort, which the degenerate-equivalence checks rely on.
    pub offspring_per_generation: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            generations: 3,
            mutation_rate: 0.10,
            mutation_scale: 0.05,
            crossover_enabled: true,
            offspring_per_generation: 32,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::InvalidConfig(format!(
                "mutation_rate must be in [0, 1], got {}",
                self.mutation_rate
            )));
        }
        if self.mutation_scale < 0.0 || !self.mutation_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "mutation_scale must be finite and >= 0, got {}",
                self.mutation_scale
            )));
        }
        if self.generations < 1 {
            return Err(Error::InvalidConfig("generations must be >= 1".into()));
        }
        Ok(())
    }
}

/// The GA state: a constant-size, ordered collection of individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub individuals: Vec<Individual>,
    image_shape: (usize, usize, usize),
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.image_shape
    }

    pub fn fitness_values(&self) -> Result<Vec<f64>> {
        self.individuals
            .iter()
            .enumerate()
            .map(|(i, ind)| ind.fitness.ok_or(Error::FitnessUnset(i)))
            .collect()
    }

    /// Index of the least-fit member; ties break toward the lowest index.
    pub fn least_fit(&self) -> Result<usize> {
        let fits = self.fitness_values()?;
        let mut min_i = 0;
        for (i, &f) in fits.iter().enumerate() {
            if f < fits[min_i] {
                min_i = i;
            }
        }
        Ok(min_i)
    }

    /// Elitist replacement: the child enters only by displacing the
    /// current minimum, and only when strictly fitter. Returns the
    /// replaced index, if any.
    pub fn replace_least_fit(
        &mut self,
        chromosome: Array1<f64>,
        fitness: f64,
    ) -> Result<Option<usize>> {
        let min_i = self.least_fit()?;
        let min_fit = self.individuals[min_i].fitness.expect("checked by least_fit");
        if fitness > min_fit {
            self.individuals[min_i] = Individual {
                chromosome,
                fitness: Some(fitness),
            };
            Ok(Some(min_i))
        } else {
            Ok(None)
        }
    }

    /// Stacks all chromosomes into an image tensor.
    pub fn to_images(&self) -> Array4<f64> {
        let (c, h, w) = self.image_shape;
        let n = self.individuals.len();
        let mut out = Array4::zeros((n, c, h, w));
        for (i, ind) in self.individuals.iter().enumerate() {
            let img = ind
                .chromosome
                .view()
                .into_shape_with_order((c, h, w))
                .expect("chromosome length matches image shape");
            out.index_axis_mut(ndarray::Axis(0), i).assign(&img);
        }
        out
    }
}

/// Seeds a population from generated images, one individual per image,
/// fitness unset.
pub fn init_population(fakes: &ImageBatch) -> Result<Population> {
    if fakes.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let rows = fakes.flatten_rows();
    let individuals = rows
        .outer_iter()
        .map(|row| Individual {
            chromosome: row.to_owned(),
            fitness: None,
        })
        .collect();
    Ok(Population {
        individuals,
        image_shape: (fakes.channels(), fakes.height(), fakes.width()),
    })
}

/// Scores every individual with the discriminator in one batched pass.
pub fn evaluate_fitness(population: &mut Population, disc: &Discriminator) -> Result<()> {
    let images = population.to_images();
    let (out, _) = disc.forward(&images)?;
    for (ind, &p) in population.individuals.iter_mut().zip(out.realness.iter()) {
        ind.fitness = Some(p);
    }
    Ok(())
}

fn fitness_for_selection(population: &Population) -> Result<Vec<f64>> {
    let fits = population.fitness_values()?;
    if fits.iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidConfig(
            "roulette selection requires non-negative fitness".into(),
        ));
    }
    Ok(fits)
}

/// Walks the cumulative fitness with one uniform draw `u` in [0, 1).
/// A zero fitness sum degenerates to uniform selection.
fn roulette_pick(fits: &[f64], u: f64) -> usize {
    let total: f64 = fits.iter().sum();
    if total <= 0.0 {
        return ((u * fits.len() as f64) as usize).min(fits.len() - 1);
    }
    let target = u * total;
    let mut acc = 0.0;
    for (i, &f) in fits.iter().enumerate() {
        acc += f;
        if target < acc {
            return i;
        }
    }
    fits.len() - 1
}

/// Fitness-proportional selection with replacement; returns the chosen
/// indices.
pub fn roulette_select(
    population: &Population,
    n_parents: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<usize>> {
    let fits = fitness_for_selection(population)?;
    Ok((0..n_parents)
        .map(|_| roulette_pick(&fits, rng.random::<f64>()))
        .collect())
}

/// `child = α·a + (1-α)·b`, elementwise.
pub fn arithmetic_crossover(
    parent_a: &Array1<f64>,
    parent_b: &Array1<f64>,
    alpha: f64,
) -> Result<Array1<f64>> {
    if parent_a.len() != parent_b.len() {
        return Err(Error::ChromosomeLength {
            a: parent_a.len(),
            b: parent_b.len(),
        });
    }
    let mut child = Array1::zeros(parent_a.len());
    for i in 0..parent_a.len() {
        child[i] = alpha * parent_a[i] + (1.0 - alpha) * parent_b[i];
    }
    Ok(child)
}

/// Per-gene Gaussian mutation with clamping; also returns the
/// (index, perturbation) log of the genes that were selected.
pub fn mutate_traced(
    chromosome: &Array1<f64>,
    rate: f64,
    scale: f64,
    rng: &mut ChaCha20Rng,
) -> (Array1<f64>, Vec<(usize, f64)>) {
    let mut out = chromosome.clone();
    let mut log = Vec::new();
    for i in 0..out.len() {
        if rng.random::<f64>() < rate {
            let delta = rng.sample::<f64, _>(StandardNormal) * scale;
            out[i] = (out[i] + delta).clamp(CLAMP_RANGE.0, CLAMP_RANGE.1);
            log.push((i, delta));
        }
    }
    (out, log)
}

/// Per-gene Gaussian mutation with clamping. Genes the mask skips are
/// bit-identical to the input.
pub fn mutate(
    chromosome: &Array1<f64>,
    rate: f64,
    scale: f64,
    rng: &mut ChaCha20Rng,
) -> Array1<f64> {
    mutate_traced(chromosome, rate, scale, rng).0
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// Every random decision of one offspring: raw selection draws, the chosen
/// parent indices, the crossover coefficient, the mutation log, and the
/// fitness the discriminator assigned to the child.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringTrace {
    pub parent_a: usize,
    pub selection_u_a: f64,
    pub parent_b: Option<usize>,
    pub selection_u_b: Option<f64>,
    pub alpha: Option<f64>,
    pub mutation: Vec<(usize, f64)>,
    pub child_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationTrace {
    pub offspring: Vec<OffspringTrace>,
}

/// Complete record of one [`evolve`] call's randomness, sufficient to
/// replay it by direct rule application.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaTrace {
    pub generations: Vec<GenerationTrace>,
}

/// Per-generation population statistics (after replacement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStats {
    pub best: f64,
    pub mean: f64,
    pub min: f64,
}

/// Summary of one evolution call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaReport {
    pub per_generation: Vec<GenStats>,
}

impl GaReport {
    pub fn best_fitness(&self) -> Option<f64> {
        self.per_generation.last().map(|s| s.best)
    }
}

fn gen_stats(population: &Population) -> Result<GenStats> {
    let fits = population.fitness_values()?;
    let best = fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = fits.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = fits.iter().sum::<f64>() / fits.len() as f64;
    Ok(GenStats { best, mean, min })
}

// ---------------------------------------------------------------------------
// Evolution
// ---------------------------------------------------------------------------

/// Runs the configured generations over a generated batch and returns the
/// refined images sorted by descending fitness, plus per-generation stats
/// and the full randomness trace.
pub fn evolve_traced(
    fakes: &ImageBatch,
    disc: &Discriminator,
    cfg: &GaConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(ImageBatch, GaReport, GaTrace)> {
    cfg.validate()?;
    let mut pop = init_population(fakes)?;
    evaluate_fitness(&mut pop, disc)?;
    let genome_len = pop.individuals[0].chromosome.len();

    let mut trace = GaTrace::default();
    let mut report = GaReport::default();

    for _ in 0..cfg.generations {
        let mut gen_trace = GenerationTrace::default();
        // Selection sees the population as it stands at generation start.
        let fits = fitness_for_selection(&pop)?;
        let mut children: Vec<(Array1<f64>, OffspringTrace)> =
            Vec::with_capacity(cfg.offspring_per_generation);
        for _ in 0..cfg.offspring_per_generation {
            let u_a = rng.random::<f64>();
            let pa = roulette_pick(&fits, u_a);
            let (child, parent_b, u_b, alpha) = if cfg.crossover_enabled {
                let u_b = rng.random::<f64>();
                let pb = roulette_pick(&fits, u_b);
                let alpha = rng.random::<f64>();
                let child = arithmetic_crossover(
                    &pop.individuals[pa].chromosome,
                    &pop.individuals[pb].chromosome,
                    alpha,
                )?;
                (child, Some(pb), Some(u_b), Some(alpha))
            } else {
                (
                    pop.individuals[pa].chromosome.clone(),
                    None,
                    None,
                    None,
                )
            };
            let (child, mutation) =
                mutate_traced(&child, cfg.mutation_rate, cfg.mutation_scale, rng);
            children.push((
                child,
                OffspringTrace {
                    parent_a: pa,
                    selection_u_a: u_a,
                    parent_b,
                    selection_u_b: u_b,
                    alpha,
                    mutation,
                    child_fitness: f64::NAN, // set after the batched pass
                },
            ));
        }

        if !children.is_empty() {
            // One batched discriminator pass over all offspring.
            let (c, h, w) = pop.image_shape();
            let mut batch = Array2::zeros((children.len(), genome_len));
            for (i, (child, _)) in children.iter().enumerate() {
                batch.row_mut(i).assign(child);
            }
            let images = batch
                .into_shape_with_order((children.len(), c, h, w))
                .expect("chromosomes are flattened images");
            let (out, _) = disc.forward(&images)?;
            for (i, (_, tr)) in children.iter_mut().enumerate() {
                tr.child_fitness = out.realness[i];
            }
            // Replacements in offspring order.
            for (child, tr) in children {
                pop.replace_least_fit(child, tr.child_fitness)?;
                gen_trace.offspring.push(tr);
            }
        }

        report.per_generation.push(gen_stats(&pop)?);
        trace.generations.push(gen_trace);
    }

    Ok((sorted_images(&pop)?, report, trace))
}

/// [`evolve_traced`] without keeping the trace.
pub fn evolve(
    fakes: &ImageBatch,
    disc: &Discriminator,
    cfg: &GaConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(ImageBatch, GaReport)> {
    let (images, report, _) = evolve_traced(fakes, disc, cfg, rng)?;
    Ok((images, report))
}

/// Final population as images, ordered by descending fitness (ties keep
/// the lower index first).
fn sorted_images(pop: &Population) -> Result<ImageBatch> {
    let fits = pop.fitness_values()?;
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&i, &j| {
        fits[j]
            .partial_cmp(&fits[i])
            .expect("fitness is finite")
            .then(i.cmp(&j))
    });
    let (c, h, w) = pop.image_shape();
    let mut out = Array4::zeros((pop.len(), c, h, w));
    for (slot, &i) in order.iter().enumerate() {
        let img = pop.individuals[i]
            .chromosome
            .view()
            .into_shape_with_order((c, h, w))
            .expect("chromosome length matches image shape");
        out.index_axis_mut(ndarray::Axis(0), slot).assign(&img);
    }
    ImageBatch::new(out)
}
