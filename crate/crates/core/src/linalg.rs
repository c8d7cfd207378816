//! Small dense symmetric linear algebra.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        crate::kernels::gemm(n, n, n, 1.0, &self.data, false, &other.data, false, 0.0, &mut out.data);
        out
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = 0.5 * (self.at(i, j) + self.at(j, i));
            }
        }
        out
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as columns
/// of a row-major `n x n` buffer.
pub fn symmetric_eigen(a: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let mut m = a.symmetrized().data;
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// `V diag(f(lambda)) V^T`.
pub fn spectral_map(a: &SymMatrix, f: impl Fn(f64) -> f64) -> SymMatrix {
    let n = a.n;
    let (vals, vecs) = symmetric_eigen(a);
    let mut out = SymMatrix::zeros(n);
    for k in 0..n {
        let fk = f(vals[k]);
        for i in 0..n {
            let vik = vecs[i * n + k] * fk;
            for j in 0..n {
                out.data[i * n + j] += vik * vecs[j * n + k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = SymMatrix {
            n: 3,
            data: vec![4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0],
        };
        let r = spectral_map(&a, |x| x);
        for (x, y) in r.data.iter().zip(&a.data) {
            assert!((x - y).abs() < 1e-12);
        }
        let (vals, _) = symmetric_eigen(&a);
        assert!((vals.iter().sum::<f64>() - a.trace()).abs() < 1e-12);
    }

    #[test]
    fn square_root_squares_back() {
        let a = SymMatrix {
            n: 2,
            data: vec![2.0, 0.3, 0.3, 1.0],
        };
        let r = spectral_map(&a, libm::sqrt);
        let sq = r.matmul(&r);
        for (x, y) in sq.data.iter().zip(&a.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
