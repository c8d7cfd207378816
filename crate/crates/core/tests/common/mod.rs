//! Shared helpers for the integration tests: toy models, finite-difference
//! gradient checks and head-isolation checks.

#![allow(dead_code)]

use disent_core::autograd::Graph;
use disent_core::losses;
use disent_core::params::{ParamId, ParamStore};
use disent_core::rng::normal_tensor;
use disent_core::training::{generator_objective, ContentPath, Dataset, StyleSource, TrainStepPlan};
use disent_core::{Model, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_TOLERANCE: f64 = 1e-3;

pub fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig {
        image_size: 8,
        base_channels: 4,
        max_channels: 8,
        downsample_stages: 1,
        content_channels: 2,
        style_dim: 3,
        latent_dim: 4,
        mapping_hidden: 6,
        num_domains: 3,
        batch_size: 2,
        seed,
        ..TrainConfig::default()
    }
}

/// Smooth deterministic images, distinct per domain and index.
pub fn toy_data(cfg: &TrainConfig, per_domain: usize) -> Dataset {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let n = cfg.image_channels * cfg.image_size * cfg.image_size;
    for d in 0..cfg.num_domains {
        for i in 0..per_domain {
            let data = (0..n).map(|k| ((k * (d + 1) + i * 7) as f64 * 0.1).sin()).collect();
            images.push(Tensor::new(&cfg.image_shape(), data));
            labels.push(d);
        }
    }
    let names = (0..cfg.num_domains).map(|d| format!("d{d}")).collect();
    Dataset::new(images, labels, names).unwrap()
}

/// A random step plan with images in `(-1, 1)`.
pub fn random_plan(cfg: &TrainConfig, rng: &mut ChaCha8Rng, style_source: StyleSource) -> TrainStepPlan {
    let n = cfg.batch_size;
    let mut shape = vec![n];
    shape.extend(cfg.image_shape());
    let img = |rng: &mut ChaCha8Rng| normal_tensor(rng, &shape, 0.5).map(f64::tanh);
    let labels = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(0..cfg.num_domains)).collect::<Vec<_>>();
    TrainStepPlan {
        x: img(rng),
        y: labels(rng),
        x_ref: img(rng),
        y_target: labels(rng),
        z: normal_tensor(rng, &[n, cfg.latent_dim], 1.0),
        style_source,
        x_indices: vec![0; n],
        ref_indices: vec![0; n],
    }
}

pub type Grads = Vec<(ParamId, Tensor)>;

fn with_weights(model: &Model, lambda_adv: f64, lambda_cb: f64) -> Model {
    let mut m = model.clone();
    m.config.lambda_adv = lambda_adv;
    m.config.lambda_cb = lambda_cb;
    m
}

fn objective_grads(model: &Model, plan: &TrainStepPlan, noise_seed: u64) -> Grads {
    let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
    let (g, total, _) = generator_objective(model, plan, ContentPath::Bottleneck, &mut noise).unwrap();
    g.backward(total).param_grads(&g).collect()
}

fn diff(a: Grads, b: &Grads) -> Grads {
    a.into_iter()
        .map(|(id, t)| {
            let other = b.iter().find(|(j, _)| *j == id).map(|(_, t)| t);
            match other {
                Some(o) => (id, t.zip_map(o, |x, y| x - y)),
                None => (id, t),
            }
        })
        .collect()
}

/// A loss term whose parameter gradient can be checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Rec,
    AdvG,
    AdvD,
    Cb,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::Rec, Term::AdvG, Term::AdvD, Term::Cb];
}

struct Problem {
    model: Model,
    plan: TrainStepPlan,
    fake: Tensor,
    noise_seed: u64,
}

impl Problem {
    fn new(seed: u64) -> Self {
        let mut cfg = toy_config(seed);
        cfg.r1_gamma = 1.0;
        let model = Model::new(&cfg, &mut disent_core::rng::RngStreams::new(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let source = if seed % 2 == 0 {
            StyleSource::Reference
        } else {
            StyleSource::Latent
        };
        let plan = random_plan(&cfg, &mut rng, source);
        let fake = {
            let c = model.content_batch(&plan.x).unwrap();
            let s = model.style_batch(&plan.x_ref, &plan.y_target).unwrap();
            model.generate_batch(&c, &s).unwrap()
        };
        Self {
            model,
            plan,
            fake,
            noise_seed: seed.wrapping_mul(31),
        }
    }

    fn value(&self, term: Term, params: &ParamStore) -> f64 {
        let m = self.model.with_params(params.clone()).unwrap();
        match term {
            Term::AdvD => {
                losses::adversarial_losses_batch(&m, &self.plan.x, &self.plan.y, &self.fake, &self.plan.y_target)
                    .unwrap()
                    .0
            }
            _ => {
                let mut noise = ChaCha8Rng::seed_from_u64(self.noise_seed);
                let (_, _, t) = generator_objective(&m, &self.plan, ContentPath::Bottleneck, &mut noise).unwrap();
                match term {
                    Term::Rec => t.rec,
                    Term::AdvG => t.adv_g,
                    _ => t.cb,
                }
            }
        }
    }

    fn analytic(&self, term: Term) -> Grads {
        let (m, p, s) = (&self.model, &self.plan, self.noise_seed);
        let base = || objective_grads(&with_weights(m, 0.0, 0.0), p, s);
        match term {
            Term::Rec => base(),
            Term::AdvG => diff(objective_grads(&with_weights(m, 1.0, 0.0), p, s), &base()),
            Term::Cb => diff(objective_grads(&with_weights(m, 0.0, 1.0), p, s), &base()),
            Term::AdvD => {
                let mut g = Graph::new();
                g.freeze(m.params.ids().filter(|&id| !m.params.name(id).starts_with("disc.")));
                let xr = g.constant(p.x.clone());
                let xf = g.constant(self.fake.clone());
                let lr = m.disc.forward(&mut g, &m.params, xr, &p.y).unwrap();
                let lf = m.disc.forward(&mut g, &m.params, xf, &p.y_target).unwrap();
                let bce = losses::disc_bce_term(&mut g, lr, lf);
                let mut grads: Grads = g.backward(bce).param_grads(&g).collect();
                let (_, r1) = losses::r1_penalty(m, &p.x, &p.y, m.config.r1_gamma).unwrap();
                for ((id, a), (rid, b)) in grads.iter_mut().zip(&r1) {
                    assert_eq!(id, rid);
                    a.axpy(1.0, b);
                }
                grads
            }
        }
    }
}

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub term: Term,
    pub seed: u64,
    /// Worst relative error over the checked directions.
    pub max_rel_error: f64,
    pub directions: usize,
}

/// Compares analytic gradients of `term` with central differences along random
/// unit directions: one over every parameter with a gradient, and one per
/// network restricted to that network's parameters.
pub fn check_term(term: Term, seed: u64) -> GradCheck {
    let prob = Problem::new(seed);
    let grads = prob.analytic(term);
    let params = &prob.model.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151);

    let mut groups: Vec<Vec<usize>> = vec![(0..grads.len()).collect()];
    for prefix in ["content.", "style.", "mapping.", "generator.", "disc."] {
        let g: Vec<usize> = (0..grads.len())
            .filter(|&i| params.name(grads[i].0).starts_with(prefix) && grads[i].1.sum_sq() > 0.0)
            .collect();
        if !g.is_empty() {
            groups.push(g);
        }
    }

    let mut worst: f64 = 0.0;
    let mut directions = 0;
    for group in groups {
        let mut dir: Vec<(usize, Tensor)> = group
            .iter()
            .map(|&i| (i, normal_tensor(&mut rng, grads[i].1.shape(), 1.0)))
            .collect();
        let norm = dir.iter().map(|(_, t)| t.sum_sq()).sum::<f64>().sqrt();
        for (_, t) in &mut dir {
            *t = t.map(|v| v / norm);
        }
        let analytic: f64 = dir
            .iter()
            .map(|(i, d)| grads[*i].1.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let shifted = |k: f64| {
            let mut p = params.clone();
            for (i, d) in &dir {
                p.get_mut(grads[*i].0).axpy(k, d);
            }
            prob.value(term, &p)
        };
        // A leaky-ReLU or L1 kink inside [-h, h] shows up as disagreeing
        // one-sided differences; shrink h until the interval is kink-free.
        let f0 = prob.value(term, params);
        let mut numeric = 0.0;
        for h in [1e-5, 1e-6, 1e-7] {
            let (fp, fm) = (shifted(h), shifted(-h));
            numeric = (fp - fm) / (2.0 * h);
            let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
            if (fwd - bwd).abs() <= 1e-4 * fwd.abs().max(bwd.abs()).max(1e-6) {
                break;
            }
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        directions += 1;
    }
    GradCheck {
        term,
        seed,
        max_rel_error: worst,
        directions,
    }
}

/// Domain index encoded in a head parameter name (`style.head.d2.weight`,
/// `mapping.d1.out.bias`, `disc.head.d0.weight`), if any.
pub fn head_domain(name: &str) -> Option<usize> {
    name.split('.')
        .find_map(|part| part.strip_prefix('d').and_then(|d| d.parse().ok()))
}

/// A random small configuration for the isolation checks.
pub fn random_config(rng: &mut ChaCha8Rng) -> TrainConfig {
    let size = [8, 16][rng.random_range(0..2)];
    TrainConfig {
        image_size: size,
        base_channels: rng.random_range(2..6),
        max_channels: 8,
        downsample_stages: 1,
        content_channels: rng.random_range(1..4),
        style_dim: rng.random_range(1..6),
        latent_dim: rng.random_range(1..6),
        mapping_hidden: rng.random_range(2..8),
        num_domains: rng.random_range(2..6),
        batch_size: rng.random_range(1..4),
        seed: rng.random(),
        ..TrainConfig::default()
    }
}

/// Backpropagates a random projection of the style encoder, mapping network and
/// discriminator outputs for a label set that leaves out at least one domain.
/// Returns an error naming the first head that breaks isolation.
pub fn check_isolation(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let model = Model::new(cfg, &mut disent_core::rng::RngStreams::new(cfg.seed)).unwrap();
    let n = cfg.batch_size;
    let k = cfg.num_domains;
    let skipped = rng.random_range(0..k);
    let labels: Vec<usize> = (0..n).map(|_| (skipped + 1 + rng.random_range(0..k - 1)) % k).collect();
    let mut shape = vec![n];
    shape.extend(cfg.image_shape());
    let x = normal_tensor(rng, &shape, 0.5);
    let z = normal_tensor(rng, &[n, cfg.latent_dim], 1.0);

    for net in ["style.", "mapping.", "disc."] {
        let mut g = Graph::new();
        let out = match net {
            "style." => {
                let xv = g.constant(x.clone());
                model.style.forward(&mut g, &model.params, xv, &labels)
            }
            "mapping." => {
                let zv = g.constant(z.clone());
                model.mapping.forward(&mut g, &model.params, zv, &labels)
            }
            _ => {
                let xv = g.constant(x.clone());
                model.disc.forward(&mut g, &model.params, xv, &labels)
            }
        }
        .map_err(|e| e.to_string())?;
        let seed_grad = normal_tensor(rng, g.shape(out), 1.0);
        let grads = g.backward_with(out, seed_grad);
        let mut selected_nonzero = false;
        for (id, grad) in grads.param_grads(&g) {
            let name = model.params.name(id);
            if !name.starts_with(net) {
                continue;
            }
            let Some(d) = head_domain(name) else { continue };
            let mass = grad.sum_sq();
            if !labels.contains(&d) && mass != 0.0 {
                return Err(format!("{name} received gradient {mass} for an absent domain"));
            }
            if labels.contains(&d) && mass > 0.0 {
                selected_nonzero = true;
            }
        }
        if !selected_nonzero {
            return Err(format!("{net} selected heads received no gradient"));
        }
    }
    Ok(())
}
