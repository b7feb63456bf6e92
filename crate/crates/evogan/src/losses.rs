//! Adversarial objectives with the mutual-information regulariser.
//!
//! The discriminator minimises
//! `-E[log D(x)] - E[log(1 - D(g(z,c)))] - λ·I(c; g(z,c))`
//! and the generator minimises the non-saturating
//! `-E[log D(g(z,c))] - λ·I(c; g(z,c))`,
//! where `I` is the variational lower bound on the mutual information
//! between the structured codes and the generated images: the mean
//! log-likelihood the auxiliary head assigns to the true codes
//! (categorical via log-softmax, continuous via a fixed unit-variance
//! Gaussian, constants dropped).
//!
//! Loss *values* are computed from probabilities with an ε-clamp so the
//! logarithms stay finite; loss *gradients* are taken with respect to the
//! pre-sigmoid logits, where the expressions are exact and stable.

use ndarray::{Array1, Array2};

use crate::latent::LatentBatch;

/// Probabilities are clamped to `[ε, 1-ε]` before logs.
pub const PROB_EPS: f64 = 1e-7;

fn clamped_ln(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

/// Scalars reported for each training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub d_loss: f64,
    pub g_loss: f64,
    /// Unweighted variational bound (categorical + continuous) from the
    /// generator step.
    pub mi_term: f64,
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
}

/// The two components of the mutual-information lower bound; each is a
/// batch-mean log-likelihood, so both are ≤ 0 with maximum 0 at perfect
/// prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiParts {
    pub categorical: f64,
    pub continuous: f64,
}

impl MiParts {
    pub fn total(&self) -> f64 {
        self.categorical + self.continuous
    }

    /// λ-weighted sum as it enters the losses.
    pub fn weighted(&self, lambda_cat: f64, lambda_cont: f64) -> f64 {
        lambda_cat * self.categorical + lambda_cont * self.continuous
    }
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - max - log_sum).collect()
}

/// Variational lower bound on `I(c; g(z,c))`, split into its categorical
/// and continuous parts. Q outputs must come from the images generated
/// from `latent`.
pub fn mi_parts(
    latent: &LatentBatch,
    q_cat_logits: &Array2<f64>,
    q_cont_means: &Array2<f64>,
) -> MiParts {
    let n = latent.batch_size();
    let spec = &latent.spec;

    let mut categorical = 0.0;
    if spec.n_categorical > 0 {
        for i in 0..n {
            for code in 0..spec.n_categorical {
                let lo = code * spec.n_classes;
                let hi = lo + spec.n_classes;
                let block: Vec<f64> = (lo..hi).map(|j| q_cat_logits[(i, j)]).collect();
                let logp = log_softmax_row(&block);
                let class = latent.cat_class(code, i);
                categorical += logp[class];
            }
        }
        categorical /= n as f64;
    }

    let mut continuous = 0.0;
    if spec.n_continuous > 0 {
        for i in 0..n {
            for d in 0..spec.n_continuous {
                let diff = latent.c_cont[(i, d)] - q_cont_means[(i, d)];
                continuous += -0.5 * diff * diff;
            }
        }
        continuous /= n as f64;
    }

    MiParts {
        categorical,
        continuous,
    }
}

/// The bound as a single scalar (both parts, unweighted).
pub fn mutual_information_lower_bound(
    latent: &LatentBatch,
    q_cat_logits: &Array2<f64>,
    q_cont_means: &Array2<f64>,
) -> f64 {
    mi_parts(latent, q_cat_logits, q_cont_means).total()
}

/// Gradient of `w_cat·MI_cat + w_cont·MI_cont` with respect to the
/// auxiliary outputs. To descend a loss carrying `-λ·MI`, pass negative
/// weights.
pub fn mi_backward(
    latent: &LatentBatch,
    q_cat_logits: &Array2<f64>,
    q_cont_means: &Array2<f64>,
    w_cat: f64,
    w_cont: f64,
) -> (Array2<f64>, Array2<f64>) {
    let n = latent.batch_size();
    let nf = n as f64;
    let spec = &latent.spec;

    let mut d_logits = Array2::zeros(q_cat_logits.raw_dim());
    for i in 0..n {
        for code in 0..spec.n_categorical {
            let lo = code * spec.n_classes;
            let hi = lo + spec.n_classes;
            let block: Vec<f64> = (lo..hi).map(|j| q_cat_logits[(i, j)]).collect();
            let logp = log_softmax_row(&block);
            let class = latent.cat_class(code, i);
            for (k, lp) in logp.iter().enumerate() {
                let onehot = if k == class { 1.0 } else { 0.0 };
                d_logits[(i, lo + k)] = w_cat * (onehot - lp.exp()) / nf;
            }
        }
    }

    let mut d_means = Array2::zeros(q_cont_means.raw_dim());
    for i in 0..n {
        for d in 0..spec.n_continuous {
            let diff = latent.c_cont[(i, d)] - q_cont_means[(i, d)];
            d_means[(i, d)] = w_cont * diff / nf;
        }
    }
    (d_logits, d_means)
}

/// `-mean(log d_real) - mean(log(1 - d_fake)) - λ·mi_bound`.
pub fn discriminator_loss(
    d_real: &Array1<f64>,
    d_fake: &Array1<f64>,
    mi_bound: f64,
    lambda: f64,
) -> f64 {
    let real_term = -d_real.iter().map(|&p| clamped_ln(p)).sum::<f64>() / d_real.len() as f64;
    let fake_term =
        -d_fake.iter().map(|&p| clamped_ln(1.0 - p)).sum::<f64>() / d_fake.len() as f64;
    real_term + fake_term - lambda * mi_bound
}

/// Non-saturating generator loss `-mean(log d_fake) - λ·mi_bound`.
pub fn generator_loss(d_fake: &Array1<f64>, mi_bound: f64, lambda: f64) -> f64 {
    -d_fake.iter().map(|&p| clamped_ln(p)).sum::<f64>() / d_fake.len() as f64 - lambda * mi_bound
}

/// Gradient of `-mean(log σ(a))` with respect to the logits `a`,
/// evaluated from the probabilities: `(p - 1)/n`.
pub fn neg_log_sigmoid_logit_grad(probs: &Array1<f64>) -> Array1<f64> {
    let n = probs.len() as f64;
    probs.mapv(|p| (p - 1.0) / n)
}

/// Gradient of `-mean(log(1 - σ(a)))` with respect to the logits `a`:
/// `p/n`.
pub fn neg_log_one_minus_sigmoid_logit_grad(probs: &Array1<f64>) -> Array1<f64> {
    let n = probs.len() as f64;
    probs.mapv(|p| p / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{sample_latent, LatentSpec};
    use crate::rng::{stream_rng, Stream};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn spec() -> LatentSpec {
        LatentSpec {
            z_dim: 4,
            n_categorical: 1,
            n_classes: 4,
            n_continuous: 2,
        }
    }

    #[test]
    fn half_probabilities_give_two_ln_two() {
        let half = Array1::from_elem(8, 0.5);
        let loss = discriminator_loss(&half, &half, 0.0, 0.0);
        assert_abs_diff_eq!(loss, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn perfect_discriminator_loss_vanishes_under_clamp() {
        let real = Array1::from_elem(4, 1.0);
        let fake = Array1::from_elem(4, 0.0);
        let loss = discriminator_loss(&real, &fake, 0.0, 0.0);
        assert!(loss >= 0.0 && loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn generator_loss_analytic_points() {
        let half = Array1::from_elem(8, 0.5);
        assert_abs_diff_eq!(
            generator_loss(&half, 0.0, 0.0),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        let ones = Array1::from_elem(8, 1.0);
        assert!(generator_loss(&ones, 0.0, 0.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_logits_give_minus_ln_k() {
        let s = spec();
        let mut rng = stream_rng(0, Stream::Train);
        let latent = sample_latent(&s, 16, &mut rng);
        let logits = Array2::zeros((16, 4));
        let means = latent.c_cont.clone();
        let parts = mi_parts(&latent, &logits, &means);
        assert_abs_diff_eq!(parts.categorical, -(4.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(parts.continuous, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn perfect_prediction_maximises_bound() {
        let s = spec();
        let mut rng = stream_rng(1, Stream::Train);
        let latent = sample_latent(&s, 8, &mut rng);
        let mut logits = Array2::from_elem((8, 4), 0.0);
        for i in 0..8 {
            logits[(i, latent.cat_class(0, i))] = 1e3;
        }
        let parts = mi_parts(&latent, &logits, &latent.c_cont.clone());
        assert_abs_diff_eq!(parts.categorical, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.continuous, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mi_is_permutation_invariant() {
        let s = spec();
        let mut rng = stream_rng(2, Stream::Train);
        let latent = sample_latent(&s, 6, &mut rng);
        let logits = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin());
        let means = Array2::from_shape_fn((6, 2), |(i, j)| ((i + j) as f64 * 0.11).cos());
        let a = mutual_information_lower_bound(&latent, &logits, &means);

        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut latent_p = latent.clone();
        let mut logits_p = logits.clone();
        let mut means_p = means.clone();
        for (to, &from) in perm.iter().enumerate() {
            latent_p.z.row_mut(to).assign(&latent.z.row(from));
            latent_p.c_cat.row_mut(to).assign(&latent.c_cat.row(from));
            latent_p.c_cont.row_mut(to).assign(&latent.c_cont.row(from));
            logits_p.row_mut(to).assign(&logits.row(from));
            means_p.row_mut(to).assign(&means.row(from));
        }
        let b = mutual_information_lower_bound(&latent_p, &logits_p, &means_p);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    /// With λ=0 the discriminator loss is the negative of the minimax
    /// objective evaluated directly (real log-likelihood plus saturating
    /// fake term).
    #[test]
    fn lambda_zero_reduces_to_minimax_value() {
        let mut rng = stream_rng(3, Stream::Train);
        for _ in 0..50 {
            let d_real = Array1::from_shape_fn(5, |_| rng.random_range(0.01..0.99));
            let d_fake = Array1::from_shape_fn(5, |_| rng.random_range(0.01..0.99));
            let direct: f64 = d_real.iter().map(|&p| p.ln()).sum::<f64>() / 5.0
                + d_fake.iter().map(|&p| (1.0 - p).ln()).sum::<f64>() / 5.0;
            let loss = discriminator_loss(&d_real, &d_fake, 0.0, 1.0);
            assert_abs_diff_eq!(loss, -direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn larger_lambda_strictly_lowers_losses_for_positive_bound() {
        let probs = array![0.3, 0.6, 0.8];
        let mi = 0.7;
        let mut last_d = f64::INFINITY;
        let mut last_g = f64::INFINITY;
        for i in 0..5 {
            let lambda = i as f64 * 0.5;
            let d = discriminator_loss(&probs, &probs, mi, lambda);
            let g = generator_loss(&probs, mi, lambda);
            assert!(d < last_d);
            assert!(g < last_g);
            last_d = d;
            last_g = g;
        }
    }

    /// Logit-space gradients agree with finite differences of the
    /// probability-space loss.
    #[test]
    fn logit_gradients_match_finite_differences() {
        let logits = array![0.3, -1.2, 2.0, 0.0];
        let sigmoid = |a: f64| 1.0 / (1.0 + (-a).exp());
        let probs = logits.mapv(sigmoid);
        let eps = 1e-6;

        let g_real = neg_log_sigmoid_logit_grad(&probs);
        let g_fake = neg_log_one_minus_sigmoid_logit_grad(&probs);
        for k in 0..4 {
            let mut lp = logits.clone();
            lp[k] += eps;
            let mut lm = logits.clone();
            lm[k] -= eps;
            let f = |l: &Array1<f64>| -> (f64, f64) {
                let p = l.mapv(sigmoid);
                (
                    -p.iter().map(|&v| v.ln()).sum::<f64>() / 4.0,
                    -p.iter().map(|&v| (1.0 - v).ln()).sum::<f64>() / 4.0,
                )
            };
            let (rp, fp) = f(&lp);
            let (rm, fm) = f(&lm);
            assert_abs_diff_eq!(g_real[k], (rp - rm) / (2.0 * eps), epsilon = 1e-8);
            assert_abs_diff_eq!(g_fake[k], (fp - fm) / (2.0 * eps), epsilon = 1e-8);
        }
    }

    #[test]
    fn mi_backward_matches_finite_differences() {
        let s = spec();
        let mut rng = stream_rng(4, Stream::Train);
        let latent = sample_latent(&s, 3, &mut rng);
        let logits = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 3 + j) as f64 * 0.29).sin());
        let means = Array2::from_shape_fn((3, 2), |(i, j)| ((i * 2 + j) as f64 * 0.17).cos());
        let (dl, dm) = mi_backward(&latent, &logits, &means, 1.0, 0.1);
        let eps = 1e-6;
        let value = |lg: &Array2<f64>, mn: &Array2<f64>| {
            let p = mi_parts(&latent, lg, mn);
            p.weighted(1.0, 0.1)
        };
        for idx in [(0usize, 0usize), (1, 3), (2, 2)] {
            let mut lp = logits.clone();
            lp[idx] += eps;
            let mut lm = logits.clone();
            lm[idx] -= eps;
            let fd = (value(&lp, &means) - value(&lm, &means)) / (2.0 * eps);
            assert_abs_diff_eq!(dl[idx], fd, epsilon = 1e-8);
        }
        for idx in [(0usize, 1usize), (2, 0)] {
            let mut mp = means.clone();
            mp[idx] += eps;
            let mut mm = means.clone();
            mm[idx] -= eps;
            let fd = (value(&logits, &mp) - value(&logits, &mm)) / (2.0 * eps);
            assert_abs_diff_eq!(dm[idx], fd, epsilon = 1e-8);
        }
    }
}
