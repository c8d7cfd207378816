//! Factor-controlled synthetic shapes.
//!
//! Each image shows one shape on a black background. The domain picks the
//! shape; position and rotation are content; hue and stripe frequency are
//! style. Rendering is pure so the std crate only has to encode PNGs.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SHAPES: [&str; 4] = ["circle", "square", "triangle", "cross"];
/// Shapes are inscribed in a circle of this radius, as a fraction of the image size.
pub const SHAPE_RADIUS: f64 = 0.18;
const SUPERSAMPLE: usize = 4;
/// Pixels whose value (max channel, in `[0, 1]`) exceeds this are foreground.
pub const FOREGROUND_VALUE: f64 = 0.3;
/// Minimum saturation for a foreground pixel to contribute to mean hue.
pub const HUE_MIN_SATURATION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Texture {
    Low,
    Mid,
    High,
}

impl Texture {
    pub const ALL: [Texture; 3] = [Texture::Low, Texture::Mid, Texture::High];

    /// Stripe cycles across the shape's diameter.
    pub fn cycles(self) -> f64 {
        match self {
            Texture::Low => 1.0,
            Texture::Mid => 2.0,
            Texture::High => 4.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Texture::Low => "low",
            Texture::Mid => "mid",
            Texture::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFactorSpec {
    pub num_domains: usize,
    pub image_size: usize,
    pub samples_per_domain: usize,
    pub seed: u64,
}

impl SyntheticFactorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains == 0 {
            return Err(Error::Invalid("num_domains must be positive".into()));
        }
        if self.image_size < 8 {
            return Err(Error::Invalid("image_size must be at least 8".into()));
        }
        Ok(())
    }

    pub fn domain_name(&self, d: usize) -> String {
        alloc::format!("{}_{}", d, SHAPES[d % SHAPES.len()])
    }
}

/// Ground truth for one rendered image. Positions are fractions of the image size.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    pub domain: usize,
    pub pos_x: f64,
    pub pos_y: f64,
    pub rotation: f64,
    pub hue: f64,
    pub texture: Texture,
}

/// Samples factors domain by domain; content and style are independent of the domain.
pub fn sample_factors(spec: &SyntheticFactorSpec) -> Result<Vec<Factors>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.num_domains * spec.samples_per_domain);
    for domain in 0..spec.num_domains {
        for _ in 0..spec.samples_per_domain {
            out.push(Factors {
                domain,
                pos_x: rng.random_range(0.2..0.8),
                pos_y: rng.random_range(0.2..0.8),
                rotation: rng.random_range(0.0..2.0 * PI),
                hue: rng.random_range(0.0..1.0),
                texture: Texture::ALL[rng.random_range(0..3)],
            });
        }
    }
    Ok(out)
}

/// `x mod m` in `[0, m)`.
fn wrap(x: f64, m: f64) -> f64 {
    let r = x - m * libm::floor(x / m);
    if r >= m {
        0.0
    } else {
        r
    }
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h - libm::floor(h)) * 6.0;
    let i = libm::floor(h6);
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// `(hue in [0, 1), saturation, value)`.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        wrap((g - b) / delta, 6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (wrap(h / 6.0, 1.0), s, max)
}

/// Inside test in the shape's rotated frame, with `(u, v)` scaled by the radius.
fn inside(shape: usize, u: f64, v: f64) -> bool {
    match shape % SHAPES.len() {
        0 => u * u + v * v <= 1.0,
        1 => {
            let half = core::f64::consts::FRAC_1_SQRT_2;
            libm::fabs(u) <= half && libm::fabs(v) <= half
        }
        2 => {
            // equilateral triangle with circumradius 1, apex on +v
            let s3 = libm::sqrt(3.0);
            v >= -0.5 && s3 * libm::fabs(u) <= 1.0 - v
        }
        _ => {
            let (au, av) = (libm::fabs(u), libm::fabs(v));
            let arm = 0.3;
            (au <= arm && av <= 0.95) || (av <= arm && au <= 0.95)
        }
    }
}

/// Renders factors to interleaved RGB bytes (`size * size * 3`, row-major).
pub fn render(f: &Factors, size: usize) -> Vec<u8> {
    let r = SHAPE_RADIUS * size as f64;
    let (cx, cy) = (f.pos_x * size as f64, f.pos_y * size as f64);
    let (cos, sin) = (libm::cos(f.rotation), libm::sin(f.rotation));
    let cycles = f.texture.cycles();
    let mut out = alloc::vec![0u8; size * size * 3];
    let sub = 1.0 / SUPERSAMPLE as f64;
    for py in 0..size {
        for px in 0..size {
            let mut acc = [0.0f64; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 + (sx as f64 + 0.5) * sub - cx;
                    let y = py as f64 + (sy as f64 + 0.5) * sub - cy;
                    let u = (cos * x + sin * y) / r;
                    let v = (-sin * x + cos * y) / r;
                    if !inside(f.domain, u, v) {
                        continue;
                    }
                    let stripe = 0.5 + 0.5 * libm::cos(PI * cycles * u);
                    let rgb = hsv_to_rgb(f.hue, 1.0, 0.55 + 0.45 * stripe);
                    for c in 0..3 {
                        acc[c] += rgb[c];
                    }
                }
            }
            let scale = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for c in 0..3 {
                out[(py * size + px) * 3 + c] = libm::round((acc[c] * scale * 255.0).clamp(0.0, 255.0)) as u8;
            }
        }
    }
    out
}

/// Interleaved RGB bytes to a `[3, H, W]` tensor in `[-1, 1]`.
pub fn bytes_to_tensor(bytes: &[u8], size: usize) -> Tensor {
    let hw = size * size;
    let mut data = alloc::vec![0.0; 3 * hw];
    for p in 0..hw {
        for c in 0..3 {
            data[c * hw + p] = crate::types::normalize_u8(bytes[p * 3 + c]);
        }
    }
    Tensor::new(&[3, size, size], data)
}

fn pixel(img: &Tensor, p: usize) -> [f64; 3] {
    let hw = img.shape()[1] * img.shape()[2];
    let d = img.data();
    core::array::from_fn(|c| ((d[c * hw + p] + 1.0) * 0.5).clamp(0.0, 1.0))
}

/// Centroid `(x, y)` of foreground pixels of a `[3, H, W]` image in `[-1, 1]`,
/// in pixel units with pixel centers at `i + 0.5`.
pub fn foreground_centroid(img: &Tensor) -> Option<(f64, f64)> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            let rgb = pixel(img, y * w + x);
            if rgb.iter().cloned().fold(0.0, f64::max) > FOREGROUND_VALUE {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Circular mean hue of saturated foreground pixels, in `[0, 1)`.
pub fn mean_hue(img: &Tensor) -> Option<f64> {
    let hw = img.shape()[1] * img.shape()[2];
    let (mut c, mut s) = (0.0, 0.0);
    for p in 0..hw {
        let (h, sat, val) = rgb_to_hsv(pixel(img, p));
        if val > FOREGROUND_VALUE && sat > HUE_MIN_SATURATION {
            let wgt = sat * val;
            c += wgt * libm::cos(2.0 * PI * h);
            s += wgt * libm::sin(2.0 * PI * h);
        }
    }
    if c * c + s * s < 1e-18 {
        return None;
    }
    Some(wrap(libm::atan2(s, c) / (2.0 * PI), 1.0))
}

/// Distance on the unit hue circle, in `[0, 0.5]`.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = wrap(libm::fabs(a - b), 1.0);
    d.min(1.0 - d)
}
