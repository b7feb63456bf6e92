//! Fréchet-distance evaluation over embedded image features.
//!
//! Real and generated images are mapped through an embedder, a Gaussian is
//! fitted to each feature cloud, and the squared Wasserstein-2 distance
//! between the two Gaussians is reported:
//! `‖μ_a - μ_b‖² + Tr(Σ_a + Σ_b - 2(Σ_a Σ_b)^{1/2})`.
//!
//! The matrix square root goes through an eigendecomposition of the
//! symmetrised product `Σ_a^{1/2} Σ_b Σ_a^{1/2}` with eigenvalues clipped
//! at zero; a negative eigenvalue beyond the relative tolerance (the
//! real-symmetric counterpart of an imaginary residue) is an error rather
//! than silently discarded.

mod embed;

pub use embed::{create_embedder, ImageEmbedder, Preprocess, ToyConvEmbedder, TOY_EMBED_DIM};
#[cfg(feature = "inception")]
pub use embed::InceptionEmbedder;

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Relative tolerance for negative eigenvalues in the square-root path.
const RESIDUE_REL_TOL: f64 = 1e-3;

/// Gaussian fitted to one feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FidStats {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub n: usize,
}

impl FidStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Binary container with a shape header; exact `f64` round trip.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"EVFS")?;
        f.write_u32::<LittleEndian>(1)?; // version
        f.write_u64::<LittleEndian>(self.n as u64)?;
        f.write_u64::<LittleEndian>(self.dim() as u64)?;
        for v in self.mu.iter() {
            f.write_f64::<LittleEndian>(*v)?;
        }
        for v in self.sigma.iter() {
            f.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"EVFS" {
            return Err(Error::Checkpoint(format!(
                "{} is not a statistics container",
                path.display()
            )));
        }
        let version = f.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(Error::Checkpoint(format!(
                "unsupported statistics version {version}"
            )));
        }
        let n = f.read_u64::<LittleEndian>()? as usize;
        let d = f.read_u64::<LittleEndian>()? as usize;
        let mut mu = Array1::zeros(d);
        for v in mu.iter_mut() {
            *v = f.read_f64::<LittleEndian>()?;
        }
        let mut sigma = Array2::zeros((d, d));
        for v in sigma.iter_mut() {
            *v = f.read_f64::<LittleEndian>()?;
        }
        Ok(FidStats { mu, sigma, n })
    }
}

/// Fits a Gaussian: column means and the unbiased (n-1) sample covariance.
pub fn gaussian_stats(features: &Array2<f64>) -> Result<FidStats> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mu = features.mean_axis(Axis(0)).expect("n >= 2");
    let centered = features - &mu;
    let sigma = centered.t().dot(&centered) / (n - 1) as f64;
    let _ = d;
    Ok(FidStats { mu, sigma, n })
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice().expect("standard layout"))
}

/// Clipped symmetric square root. Errors when a negative eigenvalue
/// exceeds the relative residue tolerance.
fn sym_sqrt(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let max_ev = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    let tol = RESIDUE_REL_TOL * max_ev.max(1e-12);
    let mut sqrt_ev = DVector::zeros(eig.eigenvalues.len());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < -tol {
            return Err(Error::NonConvergentSqrt(format!(
                "{context}: eigenvalue {ev:.3e} below -{tol:.3e}"
            )));
        }
        sqrt_ev[i] = ev.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&sqrt_ev) * q.transpose())
}

/// Squared Wasserstein-2 distance between the two Gaussians.
pub fn frechet_distance(a: &FidStats, b: &FidStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    let mean_term: f64 = a
        .mu
        .iter()
        .zip(b.mu.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();

    let sa = to_nalgebra(&a.sigma);
    let sb = to_nalgebra(&b.sigma);
    let sqrt_a = sym_sqrt(&sa, "first covariance")?;
    let inner = &sqrt_a * &sb * &sqrt_a;
    let eig = nalgebra::SymmetricEigen::new((&inner + inner.transpose()) * 0.5);
    let max_ev = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, |x, y| x.max(y.abs()));
    let tol = RESIDUE_REL_TOL * max_ev.max(1e-12);
    let mut tr_sqrt = 0.0;
    for &ev in eig.eigenvalues.iter() {
        if ev < -tol {
            return Err(Error::NonConvergentSqrt(format!(
                "product eigenvalue {ev:.3e} below -{tol:.3e}"
            )));
        }
        tr_sqrt += ev.max(0.0).sqrt();
    }
    let trace_term = sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    Ok((mean_term + trace_term).max(0.0))
}

/// Where a FID trajectory settles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceResult {
    /// First epoch from which the moving average stays within tolerance of
    /// the final moving average.
    pub epoch: u64,
    /// False when that only happens at the last point.
    pub converged: bool,
}

/// Finds the first epoch whose `window`-point moving average stays within
/// `tolerance` (relative) of the final moving average for the rest of the
/// series. `series` is (epoch, fid) pairs in epoch order.
pub fn convergence_epoch(
    series: &[(u64, f64)],
    window: usize,
    tolerance: f64,
) -> Result<ConvergenceResult> {
    if series.len() <= window || series.is_empty() {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            window,
        });
    }
    let values: Vec<f64> = series.iter().map(|&(_, v)| v).collect();
    let w = window.max(1);
    let ma: Vec<f64> = (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    let last = *ma.last().expect("nonempty");
    let tol = tolerance * last.abs().max(f64::MIN_POSITIVE);
    let within = |v: f64| (v - last).abs() <= tol;

    let mut first = ma.len() - 1;
    for k in (0..ma.len()).rev() {
        if within(ma[k]) {
            first = k;
        } else {
            break;
        }
    }
    Ok(ConvergenceResult {
        epoch: series[first].0,
        converged: first < ma.len() - 1 || ma.len() == 1,
    })
}
