//! Distribution and diversity metrics plus the content-leakage probe.

pub mod fid;
pub mod perceptual;
pub mod probe;

pub use fid::{fid, fid_with, Shrinkage};
pub use perceptual::{lpips_diversity, perceptual_distance, FeatureExtractor, RandomConvExtractor};
pub use probe::{linear_probe, ProbeConfig, ProbeResult};
