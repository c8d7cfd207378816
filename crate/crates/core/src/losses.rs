//! Objective terms: cycle reconstruction, adversarial (with optional R1),
//! the content-bottleneck KL and the reparameterized content sampler.

use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::kernels::softplus;
use crate::networks::Model;
use crate::params::ParamId;
use crate::rng::normal_tensor;
use crate::tensor::Tensor;
use crate::types::{ContentCode, DomainLabel, Image};

/// `D_KL(N(mu, sigma^2 I) || N(0, sigma^2 I)) = ||mu||^2 / (2 sigma^2)`.
///
/// Closed form for two Gaussians sharing the covariance `sigma^2 I`.
pub fn content_bottleneck_loss(c_mean: &ContentCode, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !c_mean.0.is_finite() {
        return Err(Error::NonFinite {
            context: "content code",
        });
    }
    Ok(c_mean.0.sum_sq() / (2.0 * sigma * sigma))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Invalid(alloc::format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Batch mean of the per-sample KL, as a graph node. `c_mean` is `[N, ...]`.
pub fn kl_term(g: &mut Graph, c_mean: Var, sigma: f64) -> Var {
    let n = g.shape(c_mean)[0] as f64;
    let sq = g.sum_sq(c_mean);
    g.scale(sq, 1.0 / (2.0 * sigma * sigma * n))
}

/// `c = c_mean + z`, `z ~ N(0, sigma^2 I)` elementwise.
pub fn sample_content_noise<R: Rng + ?Sized>(c_mean: &ContentCode, sigma: f64, rng: &mut R) -> Result<ContentCode> {
    check_sigma(sigma)?;
    let z = normal_tensor(rng, c_mean.0.shape(), sigma);
    Ok(ContentCode(c_mean.0.zip_map(&z, |a, b| a + b)))
}

/// Reparameterized sampling inside a graph; the gradient w.r.t. `c_mean` is the identity.
pub fn add_content_noise<R: Rng + ?Sized>(g: &mut Graph, c_mean: Var, sigma: f64, rng: &mut R) -> Var {
    let z = normal_tensor(rng, g.shape(c_mean), sigma);
    g.add_const(c_mean, &z)
}

/// `mean |a - b|`.
pub fn l1_mean(a: &Tensor, b: &Tensor) -> f64 {
    a.zip_map(b, |x, y| libm::fabs(x - y)).sum() / a.len() as f64
}

pub fn l1_term(g: &mut Graph, a: Var, b: Var) -> Var {
    let d = g.sub(a, b);
    let d = g.abs(d);
    g.mean(d)
}

/// Discriminator cross-entropy on logits: `mean softplus(-real) + mean softplus(fake)`.
pub fn disc_bce_term(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Var {
    let neg = g.scale(real_logits, -1.0);
    let r = g.softplus(neg);
    let r = g.mean(r);
    let f = g.softplus(fake_logits);
    let f = g.mean(f);
    g.add(r, f)
}

/// Non-saturating generator loss `mean softplus(-fake) = -mean log D(fake)`.
pub fn gen_adv_term(g: &mut Graph, fake_logits: Var) -> Var {
    let neg = g.scale(fake_logits, -1.0);
    let l = g.softplus(neg);
    g.mean(l)
}

/// R1 penalty `gamma/2 * mean_i ||grad_x D(x_i, y_i)||^2` and its gradient
/// w.r.t. the discriminator parameters.
///
/// The discriminator is piecewise linear in its input. With the leaky-ReLU
/// slopes frozen at `x` it is affine, `D_M(x + v) - D_M(x) = v . grad_x D(x)`
/// holds exactly, and the parameter gradient of the penalty is
/// `gamma/N * grad_theta sum_i [D_M(x_i + v_i) - D_M(x_i)]` with `v = grad_x D`.
pub fn r1_penalty(
    model: &Model,
    x_real: &Tensor,
    labels: &[usize],
    gamma: f64,
) -> Result<(f64, Vec<(ParamId, Tensor)>)> {
    let n = x_real.shape()[0] as f64;
    let mut g = Graph::new();
    g.record_gates();
    let x = g.input(x_real.clone());
    let logits = model.disc.forward(&mut g, &model.params, x, labels)?;
    let pattern = g.take_gates();
    let s = g.sum(logits);
    let v = g.backward(s).get(x).expect("input gradient").clone();
    let value = 0.5 * gamma * v.sum_sq() / n;

    let mut g = Graph::new();
    g.replay_gates(pattern.clone());
    let shifted = g.constant(x_real.zip_map(&v, |a, b| a + b));
    let up = model.disc.forward(&mut g, &model.params, shifted, labels)?;
    g.replay_gates(pattern);
    let base = g.constant(x_real.clone());
    let down = model.disc.forward(&mut g, &model.params, base, labels)?;
    let d = g.sub(up, down);
    let d = g.sum(d);
    let obj = g.scale(d, gamma / n);
    let grads = g.backward(obj).param_grads(&g).collect();
    Ok((value, grads))
}

/// `(adv_d, adv_g)` for one real and one translated image.
///
/// `adv_d` includes the R1 penalty when `model.config.r1_gamma > 0`.
pub fn adversarial_losses(
    model: &Model,
    real_x: &Image,
    real_y: DomainLabel,
    fake_x: &Image,
    fake_y: DomainLabel,
) -> Result<(f64, f64)> {
    let real = Image::batch(core::slice::from_ref(real_x));
    let fake = Image::batch(core::slice::from_ref(fake_x));
    adversarial_losses_batch(model, &real, &[real_y.index()], &fake, &[fake_y.index()])
}

pub fn adversarial_losses_batch(
    model: &Model,
    real: &Tensor,
    real_y: &[usize],
    fake: &Tensor,
    fake_y: &[usize],
) -> Result<(f64, f64)> {
    let lr = model.discriminate_batch(real, real_y)?;
    let lf = model.discriminate_batch(fake, fake_y)?;
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64;
    let mut adv_d = mean(&lr, &|l| softplus(-l)) + mean(&lf, &softplus);
    let adv_g = mean(&lf, &|l| softplus(-l));
    if model.config.r1_gamma > 0.0 {
        adv_d += r1_penalty(model, real, real_y, model.config.r1_gamma)?.0;
    }
    Ok((adv_d, adv_g))
}

/// `mean |G(E_c(x_translated), E_s(x, y)) - x|` with the noise-free content code.
pub fn cycle_reconstruction_loss(model: &Model, x: &Image, y: DomainLabel, x_translated: &Image) -> Result<f64> {
    if x.tensor().shape() != x_translated.tensor().shape() {
        return Err(Error::Shape {
            context: "translated image",
            expected: x.tensor().shape().to_vec(),
            actual: x_translated.tensor().shape().to_vec(),
        });
    }
    let xb = Image::batch(core::slice::from_ref(x));
    let tb = Image::batch(core::slice::from_ref(x_translated));
    let s = model.style_batch(&xb, &[y.index()])?;
    let c = model.content_batch(&tb)?;
    let cycled = model.generate_batch(&c, &s)?;
    Ok(l1_mean(&cycled, &xb))
}

/// Per-step loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub rec: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub cb: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    pub const COLUMNS: [&'static str; 6] = ["rec", "adv_g", "adv_d", "cb", "total_g", "total_d"];

    pub fn values(&self) -> [f64; 6] {
        [self.rec, self.adv_g, self.adv_d, self.cb, self.total_g, self.total_d]
    }
}

/// Combines component losses:
/// `total_g = rec + lambda_adv * adv_g + lambda_cb * cb`, `total_d = lambda_adv * adv_d`.
pub fn total_objective(
    rec: f64,
    adv_g: f64,
    adv_d: f64,
    cb: f64,
    config: &TrainConfig,
    step: u64,
) -> Result<LossReport> {
    for (term, v) in [("rec", rec), ("adv_g", adv_g), ("adv_d", adv_d), ("cb", cb)] {
        if v.is_nan() {
            return Err(Error::Divergence { step, term });
        }
    }
    // a zero weight removes the term entirely, even if it overflowed
    let cb_part = if config.lambda_cb == 0.0 {
        0.0
    } else {
        config.lambda_cb * cb
    };
    let report = LossReport {
        rec,
        adv_g,
        adv_d,
        cb,
        total_g: rec + config.lambda_adv * adv_g + cb_part,
        total_d: config.lambda_adv * adv_d,
    };
    for (term, v) in [("total_g", report.total_g), ("total_d", report.total_d)] {
        if !v.is_finite() {
            return Err(Error::Divergence { step, term });
        }
    }
    Ok(report)
}
