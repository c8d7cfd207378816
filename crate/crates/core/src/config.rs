//! Training configuration.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Every hyperparameter of a run. [`TrainConfig::default`] is the documented
/// default for each field.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Standard deviation of the fixed-variance content posterior and prior.
    pub sigma: f64,
    pub lambda_adv: f64,
    /// Weight of the content-bottleneck KL term; 0 disables it (ablation).
    pub lambda_cb: f64,
    pub num_domains: usize,
    pub style_dim: usize,
    pub latent_dim: usize,
    pub content_channels: usize,
    pub image_size: usize,
    pub image_channels: usize,
    /// Width of the first convolution of every image network.
    pub base_channels: usize,
    pub max_channels: usize,
    /// Down-sampling stages of the content encoder (and up-sampling stages of the generator).
    pub downsample_stages: usize,
    pub mapping_hidden: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lr_mapping: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub ema_decay: f64,
    pub r1_gamma: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Random horizontal flips of training images.
    pub hflip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            lambda_adv: 1.0,
            lambda_cb: 1e-4,
            num_domains: 2,
            style_dim: 16,
            latent_dim: 16,
            content_channels: 8,
            image_size: 32,
            image_channels: 3,
            base_channels: 16,
            max_channels: 32,
            downsample_stages: 2,
            mapping_hidden: 64,
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            lr_mapping: 1e-6,
            adam_beta1: 0.0,
            adam_beta2: 0.99,
            batch_size: 8,
            total_steps: 2000,
            ema_decay: 0.999,
            r1_gamma: 1.0,
            seed: 0,
            checkpoint_every: 500,
            hflip: false,
        }
    }
}

/// Field names in canonical order.
pub const FIELDS: &[&str] = &[
    "sigma",
    "lambda_adv",
    "lambda_cb",
    "num_domains",
    "style_dim",
    "latent_dim",
    "content_channels",
    "image_size",
    "image_channels",
    "base_channels",
    "max_channels",
    "downsample_stages",
    "mapping_hidden",
    "lr_generator",
    "lr_discriminator",
    "lr_mapping",
    "adam_beta1",
    "adam_beta2",
    "batch_size",
    "total_steps",
    "ema_decay",
    "r1_gamma",
    "seed",
    "checkpoint_every",
    "hflip",
];

fn parse<T: core::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse `{}`", value.trim()),
    })
}

impl TrainConfig {
    /// Sets one field from its textual value. Does not validate ranges.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sigma" => self.sigma = parse(key, value)?,
            "lambda_adv" => self.lambda_adv = parse(key, value)?,
            "lambda_cb" => self.lambda_cb = parse(key, value)?,
            "num_domains" => self.num_domains = parse(key, value)?,
            "style_dim" => self.style_dim = parse(key, value)?,
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "content_channels" => self.content_channels = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "image_channels" => self.image_channels = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "max_channels" => self.max_channels = parse(key, value)?,
            "downsample_stages" => self.downsample_stages = parse(key, value)?,
            "mapping_hidden" => self.mapping_hidden = parse(key, value)?,
            "lr_generator" => self.lr_generator = parse(key, value)?,
            "lr_discriminator" => self.lr_discriminator = parse(key, value)?,
            "lr_mapping" => self.lr_mapping = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "ema_decay" => self.ema_decay = parse(key, value)?,
            "r1_gamma" => self.r1_gamma = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "hflip" => self.hflip = parse(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "unknown key".to_string(),
                })
            }
        }
        Ok(())
    }

    /// Textual value of a field, in a form [`TrainConfig::set`] parses back exactly.
    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "sigma" => fmt_f64(self.sigma),
            "lambda_adv" => fmt_f64(self.lambda_adv),
            "lambda_cb" => fmt_f64(self.lambda_cb),
            "num_domains" => self.num_domains.to_string(),
            "style_dim" => self.style_dim.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "content_channels" => self.content_channels.to_string(),
            "image_size" => self.image_size.to_string(),
            "image_channels" => self.image_channels.to_string(),
            "base_channels" => self.base_channels.to_string(),
            "max_channels" => self.max_channels.to_string(),
            "downsample_stages" => self.downsample_stages.to_string(),
            "mapping_hidden" => self.mapping_hidden.to_string(),
            "lr_generator" => fmt_f64(self.lr_generator),
            "lr_discriminator" => fmt_f64(self.lr_discriminator),
            "lr_mapping" => fmt_f64(self.lr_mapping),
            "adam_beta1" => fmt_f64(self.adam_beta1),
            "adam_beta2" => fmt_f64(self.adam_beta2),
            "batch_size" => self.batch_size.to_string(),
            "total_steps" => self.total_steps.to_string(),
            "ema_decay" => fmt_f64(self.ema_decay),
            "r1_gamma" => fmt_f64(self.r1_gamma),
            "seed" => self.seed.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "hflip" => self.hflip.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// `(key, value)` pairs in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        FIELDS
            .iter()
            .map(|&k| (k, self.get(k).expect("every listed field has a value")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        let positive = [
            ("sigma", self.sigma),
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_mapping", self.lr_mapping),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(k, "must be a positive finite number");
            }
        }
        for (k, v) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_cb", self.lambda_cb),
            ("r1_gamma", self.r1_gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(k, "must be a non-negative finite number");
            }
        }
        for (k, v) in [
            ("ema_decay", self.ema_decay),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(k, "must lie in [0, 1)");
            }
        }
        if self.num_domains < 2 {
            return bad("num_domains", "at least 2 domains are required");
        }
        for (k, v) in [
            ("style_dim", self.style_dim),
            ("latent_dim", self.latent_dim),
            ("content_channels", self.content_channels),
            ("base_channels", self.base_channels),
            ("mapping_hidden", self.mapping_hidden),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(k, "must be positive");
            }
        }
        if self.max_channels < self.base_channels {
            return bad("max_channels", "must be >= base_channels");
        }
        if !matches!(self.image_channels, 1 | 3) {
            return bad("image_channels", "must be 1 or 3");
        }
        if self.image_size < 8 || !self.image_size.is_power_of_two() {
            return bad("image_size", "must be a power of two >= 8");
        }
        if self.image_size >> self.downsample_stages == 0 || self.image_size % (1 << self.downsample_stages) != 0 {
            return bad("downsample_stages", "image_size must be divisible by 2^stages");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every", "must be positive");
        }
        Ok(())
    }

    /// Spatial side of the content code.
    pub fn content_size(&self) -> usize {
        self.image_size >> self.downsample_stages
    }

    pub fn content_shape(&self) -> [usize; 3] {
        let s = self.content_size();
        [self.content_channels, s, s]
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.image_channels, self.image_size, self.image_size]
    }
}

/// Shortest decimal form that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
