//! Alternating min-max optimization: one discriminator update followed by one
//! update of the content encoder, style encoder, mapping network and generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::Graph;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::losses::{self, LossReport};
use crate::networks::{Model, NetKind, StyleInjection};
use crate::optim::{ema_update, Adam};
use crate::params::{ParamId, ParamStore};
use crate::rng::{normal_tensor, RngStreams, Stream};
use crate::tensor::Tensor;

/// Pixel storage of a [`Dataset`].
#[derive(Clone, Debug)]
enum Pixels {
    Real(Vec<Tensor>),
    /// 8-bit `[C, H, W]` planes, converted on access.
    Bytes {
        shape: [usize; 3],
        data: Vec<Vec<u8>>,
    },
}

/// In-memory labelled training images, each `[C, H, W]` in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pixels: Pixels,
    labels: Vec<usize>,
    domain_names: Vec<String>,
    by_domain: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, domain_names: Vec<String>) -> Result<Self> {
        Self::build(images.len(), Pixels::Real(images), labels, domain_names)
    }

    /// Images stored as 8-bit planes of shape `shape`, eight times smaller than [`Dataset::new`].
    pub fn from_bytes(
        shape: [usize; 3],
        images: Vec<Vec<u8>>,
        labels: Vec<usize>,
        domain_names: Vec<String>,
    ) -> Result<Self> {
        let len = shape.iter().product::<usize>();
        if let Some(i) = images.iter().position(|b| b.len() != len) {
            return Err(Error::Dataset(format!(
                "image {i} has {} bytes, expected {len}",
                images[i].len()
            )));
        }
        Self::build(
            images.len(),
            Pixels::Bytes { shape, data: images },
            labels,
            domain_names,
        )
    }

    fn build(n: usize, pixels: Pixels, labels: Vec<usize>, domain_names: Vec<String>) -> Result<Self> {
        if n != labels.len() {
            return Err(Error::Dataset(format!("{n} images but {} labels", labels.len())));
        }
        let k = domain_names.len();
        let mut by_domain = alloc::vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::Label {
                    label: l,
                    num_domains: k,
                });
            }
            by_domain[l].push(i);
        }
        if let Some(d) = by_domain.iter().position(Vec::is_empty) {
            return Err(Error::Dataset(format!("domain `{}` has no images", domain_names[d])));
        }
        Ok(Self {
            pixels,
            labels,
            domain_names,
            by_domain,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_domains(&self) -> usize {
        self.domain_names.len()
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn image(&self, i: usize) -> Tensor {
        match &self.pixels {
            Pixels::Real(v) => v[i].clone(),
            Pixels::Bytes { shape, data } => {
                Tensor::new(shape, data[i].iter().map(|&b| crate::types::normalize_u8(b)).collect())
            }
        }
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn domain_indices(&self, d: usize) -> &[usize] {
        &self.by_domain[d]
    }

    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let items: Vec<Tensor> = indices.iter().map(|&i| self.image(i)).collect();
        Tensor::stack(&items)
    }
}

/// Where the target style of a step comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StyleSource {
    /// `E_s(x_ref, y_target)`.
    Reference,
    /// `mapping(z, y_target)`.
    Latent,
}

impl StyleSource {
    /// Even steps use references, odd steps use latents.
    pub fn for_step(step: u64) -> Self {
        if step % 2 == 0 {
            StyleSource::Reference
        } else {
            StyleSource::Latent
        }
    }
}

/// One minibatch worth of sampled inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainStepPlan {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub x_ref: Tensor,
    pub y_target: Vec<usize>,
    pub z: Tensor,
    pub style_source: StyleSource,
    /// Dataset indices of `x` and `x_ref`.
    pub x_indices: Vec<usize>,
    pub ref_indices: Vec<usize>,
}

fn hflip(img: &Tensor) -> Tensor {
    let s = img.shape();
    let (planes, w) = (s[0] * s[1], s[2]);
    let mut out = img.clone();
    let src = img.data();
    let dst = out.data_mut();
    for p in 0..planes {
        for x in 0..w {
            dst[p * w + x] = src[p * w + (w - 1 - x)];
        }
    }
    out
}

/// Samples the inputs of step `step` from the data and latent streams.
///
/// `x` is uniform over the dataset, `y_target` uniform over domains (the
/// source domain included) and `x_ref` uniform within `y_target`.
pub fn sample_step_plan(
    data: &Dataset,
    config: &TrainConfig,
    rngs: &mut RngStreams,
    step: u64,
) -> Result<TrainStepPlan> {
    if data.num_domains() != config.num_domains {
        return Err(Error::Dataset(format!(
            "dataset has {} domains, config expects {}",
            data.num_domains(),
            config.num_domains
        )));
    }
    let n = config.batch_size;
    let k = config.num_domains;
    let mut xs = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    let mut x_indices = Vec::with_capacity(n);
    let mut ref_indices = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y_target = Vec::with_capacity(n);
    let rng = rngs.get(Stream::Data);
    for _ in 0..n {
        let i = rng.random_range(0..data.len());
        let t = rng.random_range(0..k);
        let pool = data.domain_indices(t);
        let r = pool[rng.random_range(0..pool.len())];
        let mut xi = data.image(i);
        let mut ri = data.image(r);
        if config.hflip {
            if rng.random_bool(0.5) {
                xi = hflip(&xi);
            }
            if rng.random_bool(0.5) {
                ri = hflip(&ri);
            }
        }
        xs.push(xi);
        refs.push(ri);
        x_indices.push(i);
        ref_indices.push(r);
        y.push(data.label(i));
        y_target.push(t);
    }
    let z = normal_tensor(rngs.get(Stream::Latent), &[n, config.latent_dim], 1.0);
    Ok(TrainStepPlan {
        x: Tensor::stack(&xs),
        y,
        x_ref: Tensor::stack(&refs),
        y_target,
        z,
        style_source: StyleSource::for_step(step),
        x_indices,
        ref_indices,
    })
}

/// Whether the content code passes through the noisy bottleneck.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContentPath {
    /// `c = E_c(x) + z` in every generator-consuming pass, plus the KL term.
    Bottleneck,
    /// `c = E_c(x)`, no KL term; reference path for ablation checks.
    Plain,
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub ema: ParamStore,
    pub optimizer: Adam,
    pub rngs: RngStreams,
    pub step: u64,
    pub path: ContentPath,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let mut rngs = RngStreams::new(config.seed);
        let model = Model::new(config, &mut rngs)?;
        let optimizer = Adam::new(
            &model.params,
            |name| match NetKind::of(name) {
                Some(NetKind::Discriminator) => config.lr_discriminator,
                Some(NetKind::Mapping) => config.lr_mapping,
                _ => config.lr_generator,
            },
            config.adam_beta1,
            config.adam_beta2,
        );
        Ok(Self {
            ema: model.params.clone(),
            model,
            optimizer,
            rngs,
            step: 0,
            path: ContentPath::Bottleneck,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.model.config
    }

    /// The model with EMA parameters, used for inference.
    pub fn ema_model(&self) -> Model {
        self.model
            .with_params(self.ema.clone())
            .expect("EMA store shares the model layout")
    }

    fn ids_of(&self, pred: impl Fn(NetKind) -> bool) -> Vec<ParamId> {
        self.model
            .params
            .iter()
            .enumerate()
            .filter(|(_, (name, _))| NetKind::of(name).is_some_and(&pred))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    /// Parameters of the generator side (everything except the discriminator).
    pub fn generator_side_ids(&self) -> Vec<ParamId> {
        self.ids_of(|k| k != NetKind::Discriminator)
    }

    pub fn discriminator_ids(&self) -> Vec<ParamId> {
        self.ids_of(|k| k == NetKind::Discriminator)
    }
}

fn target_style(g: &mut Graph, model: &Model, plan: &TrainStepPlan) -> Result<crate::autograd::Var> {
    match plan.style_source {
        StyleSource::Reference => {
            let r = g.constant(plan.x_ref.clone());
            model.style.forward(g, &model.params, r, &plan.y_target)
        }
        StyleSource::Latent => {
            let z = g.constant(plan.z.clone());
            model.mapping.forward(g, &model.params, z, &plan.y_target)
        }
    }
}

fn check_plan(state: &TrainState, plan: &TrainStepPlan) -> Result<()> {
    state.model.check_images(&plan.x)?;
    state.model.check_images(&plan.x_ref)?;
    let n = plan.x.shape()[0];
    if plan.y.len() != n
        || plan.y_target.len() != n
        || plan.x_ref.shape()[0] != n
        || plan.z.shape() != [n, state.config().latent_dim]
    {
        return Err(Error::Invalid(String::from("step plan fields disagree on batch size")));
    }
    Ok(())
}

/// Discriminator half-step. Returns `adv_d` (including R1).
pub fn discriminator_step(state: &mut TrainState, plan: &TrainStepPlan) -> Result<f64> {
    check_plan(state, plan)?;
    let cfg = state.model.config.clone();
    let model = &state.model;

    let fake = {
        let mut g = Graph::inference();
        let x = g.constant(plan.x.clone());
        let mut c = model.content.forward(&mut g, &model.params, x);
        if state.path == ContentPath::Bottleneck {
            c = losses::add_content_noise(&mut g, c, cfg.sigma, state.rngs.get(Stream::ContentNoise));
        }
        let s = target_style(&mut g, model, plan)?;
        let out = model
            .generator
            .forward(&mut g, &model.params, c, StyleInjection::Style(s));
        g.value(out).clone()
    };

    let mut g = Graph::new();
    let d_ids = state.discriminator_ids();
    g.freeze(state.generator_side_ids());
    let xr = g.constant(plan.x.clone());
    let xf = g.constant(fake);
    let lr = model.disc.forward(&mut g, &model.params, xr, &plan.y)?;
    let lf = model.disc.forward(&mut g, &model.params, xf, &plan.y_target)?;
    let bce = losses::disc_bce_term(&mut g, lr, lf);
    let obj = g.scale(bce, cfg.lambda_adv);
    let grads = g.backward(obj);
    let mut d_grads: Vec<(ParamId, Tensor)> = grads.param_grads(&g).collect();
    let mut adv_d = g.value(bce).item();

    if cfg.r1_gamma > 0.0 {
        let (r1, r1_grads) = losses::r1_penalty(model, &plan.x, &plan.y, cfg.r1_gamma)?;
        adv_d += r1;
        for ((id, gd), (rid, gr)) in d_grads.iter_mut().zip(&r1_grads) {
            debug_assert_eq!(id, rid);
            gd.axpy(cfg.lambda_adv, gr);
        }
    }
    if !adv_d.is_finite() || d_grads.iter().any(|(_, t)| !t.is_finite()) {
        return Err(Error::Divergence {
            step: state.step,
            term: "adv_d",
        });
    }
    debug_assert!(d_grads.iter().all(|(id, _)| d_ids.contains(id)));
    state.optimizer.step(&mut state.model.params, &d_grads);
    Ok(adv_d)
}

/// Generator-side values of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorTerms {
    pub rec: f64,
    pub adv_g: f64,
    pub cb: f64,
}

/// Builds the generator-side objective on a fresh graph without updating anything.
///
/// Returns the graph, the total objective node and the component values.
pub fn generator_objective(
    model: &Model,
    plan: &TrainStepPlan,
    path: ContentPath,
    noise: &mut impl Rng,
) -> Result<(Graph, crate::autograd::Var, GeneratorTerms)> {
    let cfg = &model.config;
    let mut g = Graph::new();
    g.freeze(model.params.ids_with_prefix(NetKind::Discriminator.prefix()));
    let x = g.constant(plan.x.clone());

    let c_mean = model.content.forward(&mut g, &model.params, x);
    let c = match path {
        ContentPath::Bottleneck => losses::add_content_noise(&mut g, c_mean, cfg.sigma, noise),
        ContentPath::Plain => c_mean,
    };
    let s_hat = target_style(&mut g, model, plan)?;
    let fake = model
        .generator
        .forward(&mut g, &model.params, c, StyleInjection::Style(s_hat));
    let logits = model.disc.forward(&mut g, &model.params, fake, &plan.y_target)?;
    let adv_g = losses::gen_adv_term(&mut g, logits);

    let s = model.style.forward(&mut g, &model.params, x, &plan.y)?;
    let c2_mean = model.content.forward(&mut g, &model.params, fake);
    let c2 = match path {
        ContentPath::Bottleneck => losses::add_content_noise(&mut g, c2_mean, cfg.sigma, noise),
        ContentPath::Plain => c2_mean,
    };
    let cycled = model
        .generator
        .forward(&mut g, &model.params, c2, StyleInjection::Style(s));
    let rec = losses::l1_term(&mut g, cycled, x);

    let weighted_adv = g.scale(adv_g, cfg.lambda_adv);
    let mut total = g.add(rec, weighted_adv);
    let mut cb = 0.0;
    if path == ContentPath::Bottleneck {
        let kl = losses::kl_term(&mut g, c_mean, cfg.sigma);
        cb = g.value(kl).item();
        if cfg.lambda_cb != 0.0 {
            let weighted = g.scale(kl, cfg.lambda_cb);
            total = g.add(total, weighted);
        }
    }
    let terms = GeneratorTerms {
        rec: g.value(rec).item(),
        adv_g: g.value(adv_g).item(),
        cb,
    };
    Ok((g, total, terms))
}

/// Generator-side half-step on freshly generated fakes.
pub fn generator_step(state: &mut TrainState, plan: &TrainStepPlan) -> Result<GeneratorTerms> {
    check_plan(state, plan)?;
    let (g, total, terms) = generator_objective(&state.model, plan, state.path, state.rngs.get(Stream::ContentNoise))?;
    if !g.value(total).is_finite() {
        let term = if !terms.rec.is_finite() {
            "rec"
        } else if !terms.adv_g.is_finite() {
            "adv_g"
        } else {
            "total_g"
        };
        return Err(Error::Divergence { step: state.step, term });
    }
    let grads = g.backward(total);
    let g_grads: Vec<(ParamId, Tensor)> = grads.param_grads(&g).collect();
    if g_grads.iter().any(|(_, t)| !t.is_finite()) {
        return Err(Error::Divergence {
            step: state.step,
            term: "total_g",
        });
    }
    state.optimizer.step(&mut state.model.params, &g_grads);
    Ok(terms)
}

/// One full training step: discriminator update, generator-side update, EMA, counter.
pub fn train_step(state: &mut TrainState, plan: &TrainStepPlan) -> Result<LossReport> {
    let adv_d = discriminator_step(state, plan)?;
    let t = generator_step(state, plan)?;
    let report = losses::total_objective(t.rec, t.adv_g, adv_d, t.cb, state.config(), state.step)?;
    let g_ids = state.generator_side_ids();
    let decay = state.config().ema_decay;
    ema_update(&mut state.ema, &state.model.params, &g_ids, decay);
    for id in state.discriminator_ids() {
        *state.ema.get_mut(id) = state.model.params.get(id).clone();
    }
    state.step += 1;
    Ok(report)
}
