//! Perceptual feature extractors and the pairwise diversity score.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{avg_pool2, conv2d_forward, ConvGeom};
use crate::params::init_normal;
use crate::tensor::Tensor;
use crate::types::Image;

/// Maps an image batch `[N, C, H, W]` to a list of feature maps `[N, C_l, H_l, W_l]`.
pub trait FeatureExtractor {
    fn name(&self) -> &str;

    fn layers(&self, batch: &Tensor) -> Vec<Tensor>;

    /// Spatially averaged features of every layer, concatenated, one row per image.
    fn pooled(&self, batch: &Tensor) -> Vec<Vec<f64>> {
        let n = batch.shape()[0];
        let mut rows = alloc::vec![Vec::new(); n];
        for layer in self.layers(batch) {
            let (c, hw) = (layer.shape()[1], layer.shape()[2] * layer.shape()[3]);
            for (i, row) in rows.iter_mut().enumerate() {
                for ch in 0..c {
                    let plane = &layer.data()[(i * c + ch) * hw..(i * c + ch + 1) * hw];
                    row.push(plane.iter().sum::<f64>() / hw as f64);
                }
            }
        }
        rows
    }
}

impl<T: FeatureExtractor + ?Sized> FeatureExtractor for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn layers(&self, batch: &Tensor) -> Vec<Tensor> {
        (**self).layers(batch)
    }
}

struct Stage {
    in_ch: usize,
    out_ch: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Fixed random convolutional stack: three 3x3 conv + leaky ReLU stages with
/// 2x average pooling in between. The weights depend only on the seed.
pub struct RandomConvExtractor {
    name: String,
    stages: Vec<Stage>,
}

pub const DEFAULT_EXTRACTOR_SEED: u64 = 0x5eed_f00d;
const WIDTHS: [usize; 3] = [16, 32, 32];

impl RandomConvExtractor {
    pub fn new(seed: u64, in_channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::new();
        let mut in_ch = in_channels;
        for out_ch in WIDTHS {
            let fan_in = in_ch * 9;
            let weight = init_normal(&mut rng, &[out_ch, fan_in], fan_in, 1.0).into_data();
            stages.push(Stage {
                in_ch,
                out_ch,
                weight,
                bias: alloc::vec![0.0; out_ch],
            });
            in_ch = out_ch;
        }
        Self {
            name: alloc::format!("randconv-{seed:x}"),
            stages,
        }
    }

    pub fn desk_default(in_channels: usize) -> Self {
        Self::new(DEFAULT_EXTRACTOR_SEED, in_channels)
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn layers(&self, batch: &Tensor) -> Vec<Tensor> {
        let s = batch.shape();
        let (n, mut h, mut w) = (s[0], s[2], s[3]);
        let mut x = batch.data().to_vec();
        let mut out = Vec::new();
        for (i, st) in self.stages.iter().enumerate() {
            if i > 0 {
                x = avg_pool2(n * st.in_ch, h, w, &x);
                h /= 2;
                w /= 2;
            }
            let geom = ConvGeom {
                batch: n,
                in_ch: st.in_ch,
                out_ch: st.out_ch,
                height: h,
                width: w,
                kernel: 3,
            };
            let (mut y, _) = conv2d_forward(&geom, &x, &st.weight, &st.bias);
            for v in &mut y {
                if *v < 0.0 {
                    *v *= 0.2;
                }
            }
            out.push(Tensor::new(&[n, st.out_ch, h, w], y.clone()));
            x = y;
        }
        out
    }
}

/// Unit-normalize each spatial feature vector across channels.
fn channel_normalize(layer: &Tensor) -> Tensor {
    let s = layer.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let mut out = layer.clone();
    let d = out.data_mut();
    for i in 0..n {
        for p in 0..hw {
            let norm = libm::sqrt(
                (0..c)
                    .map(|ch| d[(i * c + ch) * hw + p] * d[(i * c + ch) * hw + p])
                    .sum::<f64>(),
            );
            let inv = 1.0 / (norm + 1e-10);
            for ch in 0..c {
                d[(i * c + ch) * hw + p] *= inv;
            }
        }
    }
    out
}

/// Distance between items `a` and `b` of already normalized layer stacks:
/// per layer, squared difference summed over channels and averaged over space,
/// then summed over layers.
fn normalized_distance(layers: &[Tensor], a: usize, b: usize) -> f64 {
    let mut total = 0.0;
    for layer in layers {
        let s = layer.shape();
        let (c, hw) = (s[1], s[2] * s[3]);
        let len = c * hw;
        let xa = &layer.data()[a * len..(a + 1) * len];
        let xb = &layer.data()[b * len..(b + 1) * len];
        let sq: f64 = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum();
        total += sq / hw as f64;
    }
    total
}

/// Perceptual distance between two images under `extractor`.
pub fn perceptual_distance(extractor: &dyn FeatureExtractor, a: &Image, b: &Image) -> f64 {
    let batch = Image::batch(&[a.clone(), b.clone()]);
    let layers: Vec<Tensor> = extractor.layers(&batch).iter().map(channel_normalize).collect();
    normalized_distance(&layers, 0, 1)
}

/// Mean perceptual distance over all unordered pairs of `translations`.
///
/// Pair distances are sorted before summation so the result does not depend
/// on the order of the list.
pub fn lpips_diversity(translations: &[Image], extractor: &dyn FeatureExtractor) -> Result<f64> {
    let n = translations.len();
    if n < 2 {
        return Err(Error::Arity { needed: 2, got: n });
    }
    let batch = Image::batch(translations);
    let layers: Vec<Tensor> = extractor.layers(&batch).iter().map(channel_normalize).collect();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(normalized_distance(&layers, i, j));
        }
    }
    dists.sort_by(f64::total_cmp);
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}
