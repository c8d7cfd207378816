//! Fréchet distance between Gaussian fits of two feature sets.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{spectral_map, symmetric_eigen, SymMatrix};

/// Covariance regularization policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shrinkage {
    /// Add `1e-6 * I` when there are fewer than `10 * dim` samples.
    Auto,
    Never,
}

pub const RIDGE: f64 = 1e-6;
/// Eigenvalues in `[-NEG_TOL * scale, 0)` are treated as zero.
const NEG_TOL: f64 = 1e-6;

fn mean_cov(rows: &[Vec<f64>], dim: usize) -> (Vec<f64>, SymMatrix) {
    let n = rows.len() as f64;
    let mut mean = alloc::vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = SymMatrix::zeros(dim);
    let mut centered = alloc::vec![0.0; dim];
    for r in rows {
        for ((c, v), m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov.data[i * dim + j] += ci * centered[j];
            }
        }
    }
    let denom = n - 1.0;
    for i in 0..dim {
        for j in i..dim {
            let v = cov.data[i * dim + j] / denom;
            cov.data[i * dim + j] = v;
            cov.data[j * dim + i] = v;
        }
    }
    (mean, cov)
}

fn clip_eigen(v: f64, scale: f64) -> Result<f64> {
    if v < -NEG_TOL * scale.max(1.0) {
        return Err(Error::Numerical(format!("eigenvalue {v} is significantly negative")));
    }
    Ok(v.max(0.0))
}

fn check(rows: &[Vec<f64>], dim: usize, which: &str) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::Arity {
            needed: 2,
            got: rows.len(),
        });
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Invalid(format!("{which}: inconsistent feature dimension")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "features" });
    }
    Ok(())
}

/// FID with automatic shrinkage.
pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    fid_with(a, b, Shrinkage::Auto)
}

/// `||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
///
/// The trace of the square root is taken through the symmetric product
/// `S_a^{1/2} S_b S_a^{1/2}`, which has the same spectrum as `S_a S_b`.
pub fn fid_with(a: &[Vec<f64>], b: &[Vec<f64>], shrinkage: Shrinkage) -> Result<f64> {
    let dim = a.first().map(Vec::len).unwrap_or(0);
    check(a, dim, "features_a")?;
    check(b, dim, "features_b")?;
    let (mu_a, mut cov_a) = mean_cov(a, dim);
    let (mu_b, mut cov_b) = mean_cov(b, dim);
    for (cov, n) in [(&mut cov_a, a.len()), (&mut cov_b, b.len())] {
        match shrinkage {
            Shrinkage::Auto if n < 10 * dim => {
                for i in 0..dim {
                    cov.data[i * dim + i] += RIDGE;
                }
            }
            Shrinkage::Never if n <= dim => {
                return Err(Error::Numerical(format!(
                    "{n} samples cannot give a nonsingular {dim}-dim covariance"
                )));
            }
            _ => {}
        }
    }
    let scale = cov_a.trace().max(cov_b.trace());
    let (va, _) = symmetric_eigen(&cov_a);
    for &v in &va {
        clip_eigen(v, scale)?;
    }
    let sqrt_a = spectral_map(&cov_a, |v| libm::sqrt(v.max(0.0)));
    let product = sqrt_a.matmul(&cov_b).matmul(&sqrt_a).symmetrized();
    let (vals, _) = symmetric_eigen(&product);
    let mut tr_sqrt = 0.0;
    for v in vals {
        tr_sqrt += libm::sqrt(clip_eigen(v, scale * scale)?);
    }
    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    let value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}
