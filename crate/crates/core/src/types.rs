//! Domain values: images, labels and the three kinds of codes.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A `[channels, height, width]` image with pixels in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Tensor);

impl Image {
    pub fn new(pixels: Tensor) -> Result<Self> {
        let s = pixels.shape();
        if s.len() != 3 || !matches!(s[0], 1 | 3) {
            return Err(Error::Shape {
                context: "image",
                expected: alloc::vec![3, s.get(1).copied().unwrap_or(0), s.get(2).copied().unwrap_or(0)],
                actual: s.to_vec(),
            });
        }
        if !pixels.is_finite() {
            return Err(Error::NonFinite { context: "image" });
        }
        if pixels.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange { context: "image" });
        }
        Ok(Self(pixels))
    }

    /// Wraps a tensor without checks (network outputs are bounded by construction).
    pub(crate) fn from_tensor_unchecked(pixels: Tensor) -> Self {
        Self(pixels)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    /// Stacks images into an `[N, C, H, W]` batch.
    pub fn batch(images: &[Image]) -> Tensor {
        let ts: Vec<Tensor> = images.iter().map(|i| i.0.clone()).collect();
        Tensor::stack(&ts)
    }
}

/// Maps an 8-bit level to the canonical pixel range.
pub fn normalize_u8(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Inverse of [`normalize_u8`], rounding and clamping arbitrary values.
pub fn denormalize_u8(v: f64) -> u8 {
    let x = libm::round((v + 1.0) * 127.5);
    x.clamp(0.0, 255.0) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DomainLabel(usize);

impl DomainLabel {
    pub fn new(index: usize, num_domains: usize) -> Result<Self> {
        if index >= num_domains {
            return Err(Error::Label {
                label: index,
                num_domains,
            });
        }
        Ok(Self(index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Spatial content code `[content_channels, h', w']`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentCode(pub Tensor);

/// Style vector of length `style_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode(pub Vec<f64>);

/// Mapping-network input of length `latent_dim`, nominally `N(0, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(pub Vec<f64>);
