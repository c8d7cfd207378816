//! Multi-domain image-to-image translation with a variational content bottleneck.
//!
//! A content encoder, a domain-conditional style encoder, a mapping network,
//! an AdaIN generator and a domain-conditional discriminator are trained with
//! a cycle reconstruction loss, an adversarial loss and a KL penalty that pulls
//! the fixed-variance content posterior towards a zero-mean prior.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature only switches
//! the matrix kernels to run-time CPU feature detection.

#![no_std]

extern crate alloc;

pub mod autograd;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod types;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use networks::Model;
pub use tensor::Tensor;
pub use types::{ContentCode, DomainLabel, Image, LatentCode, StyleCode};
