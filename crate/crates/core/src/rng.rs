//! Seeded random streams.
//!
//! One root seed feeds several independent ChaCha streams so that switching a
//! consumer off (e.g. the content noise) never shifts the draws of another.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// Named consumers of randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 0,
    ContentNoise = 1,
    Latent = 2,
    Init = 3,
    Eval = 4,
}

impl Stream {
    pub const ALL: [Stream; 5] = [
        Stream::Data,
        Stream::ContentNoise,
        Stream::Latent,
        Stream::Init,
        Stream::Eval,
    ];
}

/// The full set of streams derived from one seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStreams {
    streams: [ChaCha8Rng; 5],
}

/// Serialized size of [`RngStreams::to_bytes`].
pub const RNG_STATE_LEN: usize = 5 * (32 + 8 + 16);

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let make = |s: Stream| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s as u64);
            r
        };
        Self {
            streams: Stream::ALL.map(make),
        }
    }

    pub fn get(&mut self, s: Stream) -> &mut ChaCha8Rng {
        &mut self.streams[s as usize]
    }

    /// Seed, stream id and word position of every stream.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RNG_STATE_LEN);
        for r in &self.streams {
            out.extend_from_slice(&r.get_seed());
            out.extend_from_slice(&r.get_stream().to_le_bytes());
            out.extend_from_slice(&r.get_word_pos().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != RNG_STATE_LEN {
            return None;
        }
        let mut streams = Stream::ALL.map(|_| ChaCha8Rng::seed_from_u64(0));
        for (i, chunk) in bytes.chunks(56).enumerate() {
            let seed: [u8; 32] = chunk[..32].try_into().ok()?;
            let stream = u64::from_le_bytes(chunk[32..40].try_into().ok()?);
            let pos = u128::from_le_bytes(chunk[40..56].try_into().ok()?);
            let mut r = ChaCha8Rng::from_seed(seed);
            r.set_stream(stream);
            r.set_word_pos(pos);
            streams[i] = r;
        }
        Some(Self { streams })
    }
}

/// Tensor of i.i.d. `N(0, std^2)` draws.
pub fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}
