//! Linear softmax probe used to measure domain information in content codes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.5,
            l2: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub chance: f64,
    pub test_size: usize,
}

struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>], dim: usize) -> Self {
        let n = x.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in x {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let inv_std = var
            .iter()
            .map(|v| if *v > 1e-12 { 1.0 / libm::sqrt(*v) } else { 0.0 })
            .collect();
        Self { mean, inv_std }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

fn logits(w: &[f64], b: &[f64], x: &[f64], k: usize, out: &mut [f64]) {
    let d = x.len();
    for c in 0..k {
        out[c] = b[c] + w[c * d..(c + 1) * d].iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fits a multinomial logistic regression on standardized `train_x` by
/// full-batch gradient descent and reports test accuracy.
pub fn linear_probe(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    num_classes: usize,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    if num_classes < 2 {
        return Err(Error::Invalid(alloc::format!(
            "probe needs at least 2 domains, got {num_classes}"
        )));
    }
    if train_x.is_empty() || test_x.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    if train_x.len() != train_y.len() || test_x.len() != test_y.len() {
        return Err(Error::Invalid("probe features and labels differ in length".into()));
    }
    if let Some(&bad) = train_y.iter().chain(test_y).find(|&&y| y >= num_classes) {
        return Err(Error::Label {
            label: bad,
            num_domains: num_classes,
        });
    }
    let dim = train_x[0].len();
    if train_x.iter().chain(test_x).any(|r| r.len() != dim) {
        return Err(Error::Invalid("probe features have inconsistent dimension".into()));
    }
    let std = Standardizer::fit(train_x, dim);
    let xs: Vec<Vec<f64>> = train_x.iter().map(|r| std.apply(r)).collect();
    let k = num_classes;
    let n = xs.len() as f64;
    let mut w = vec![0.0; k * dim];
    let mut b = vec![0.0; k];
    let mut z = vec![0.0; k];
    for _ in 0..config.epochs {
        let mut gw = vec![0.0; k * dim];
        let mut gb = vec![0.0; k];
        for (x, &y) in xs.iter().zip(train_y) {
            logits(&w, &b, x, k, &mut z);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in z.iter_mut() {
                *v = libm::exp(*v - m);
                total += *v;
            }
            for c in 0..k {
                let err = z[c] / total - if c == y { 1.0 } else { 0.0 };
                gb[c] += err / n;
                for (g, xv) in gw[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                    *g += err * xv / n;
                }
            }
        }
        for (wv, g) in w.iter_mut().zip(&gw) {
            *wv -= config.learning_rate * (g + config.l2 * *wv);
        }
        for (bv, g) in b.iter_mut().zip(&gb) {
            *bv -= config.learning_rate * g;
        }
    }
    let accuracy_of = |rows: &mut dyn Iterator<Item = (Vec<f64>, usize)>| {
        let mut z = vec![0.0; k];
        let (mut hit, mut total) = (0usize, 0usize);
        for (x, y) in rows {
            logits(&w, &b, &x, k, &mut z);
            hit += (argmax(&z) == y) as usize;
            total += 1;
        }
        hit as f64 / total as f64
    };
    let train_accuracy = accuracy_of(&mut xs.iter().cloned().zip(train_y.iter().copied()));
    let accuracy = accuracy_of(&mut test_x.iter().map(|r| std.apply(r)).zip(test_y.iter().copied()));
    Ok(ProbeResult {
        accuracy,
        train_accuracy,
        chance: 1.0 / k as f64,
        test_size: test_x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_tensor;
    use rand::SeedableRng;

    fn noise(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        normal_tensor(&mut rng, &[n, dim], 1.0)
            .data()
            .chunks(dim)
            .map(<[f64]>::to_vec)
            .collect()
    }

    fn labels(n: usize) -> Vec<usize> {
        (0..n).map(|i| i % 2).collect()
    }

    #[test]
    fn one_hot_codes_are_perfectly_classified() {
        let y = labels(60);
        let x: Vec<Vec<f64>> = y
            .iter()
            .map(|&c| if c == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let r = linear_probe(&x, &y, &x, &y, 2, &ProbeConfig::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.chance, 0.5);
    }

    #[test]
    fn noise_codes_are_near_chance() {
        let (n, d) = (400, 16);
        let r = linear_probe(
            &noise(n, d, 1),
            &labels(n),
            &noise(n, d, 2),
            &labels(n),
            2,
            &ProbeConfig::default(),
        )
        .unwrap();
        let sd = libm::sqrt(0.25 / n as f64);
        assert!((r.accuracy - 0.5).abs() < 3.0 * sd, "{}", r.accuracy);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = noise(4, 2, 3);
        assert!(matches!(
            linear_probe(&x, &[0; 4], &x, &[0; 4], 1, &ProbeConfig::default()),
            Err(Error::Invalid(_))
        ));
    }
}
