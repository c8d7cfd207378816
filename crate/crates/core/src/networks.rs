//! The five trainable networks and the typed single-image operations on them.
//!
//! Layouts follow the usual residual design for multi-domain translation,
//! with widths, depth and resolution taken from [`TrainConfig`]:
//!
//! * content encoder: `from_rgb` conv, normalized down-sampling residual
//!   blocks, one bottom block, then a 1x1 projection to `content_channels`;
//! * style encoder / discriminator: unnormalized down-sampling residual
//!   blocks to 4x4, a shared fully-connected layer, one head per domain;
//! * mapping network: shared fully-connected trunk, per-domain final layers;
//! * generator: 1x1 projection of the content code, AdaIN residual blocks
//!   (up-sampling back to full resolution), `to_rgb` 1x1 conv and `tanh`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::params::{init_normal, ParamId, ParamStore};
use crate::rng::{RngStreams, Stream};
use crate::tensor::Tensor;
use crate::types::{ContentCode, DomainLabel, Image, LatentCode, StyleCode};

pub const LRELU_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;
const SQRT2_INV: f64 = core::f64::consts::FRAC_1_SQRT_2;
const LRELU_GAIN: f64 = 1.3867504905630728; // sqrt(2 / (1 + 0.2^2))

/// Spatial side at which the style encoder and discriminator stop down-sampling.
pub const TRUNK_SIZE: usize = 4;

struct Builder<'a, R: Rng> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, gain: f64) -> Conv {
        let w = init_normal(self.rng, &[cout, cin, k, k], cin * k * k, gain);
        Conv {
            weight: self.store.insert(format!("{name}.weight"), w),
            bias: self.store.insert(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }

    fn linear(&mut self, name: &str, fin: usize, fout: usize, gain: f64) -> Linear {
        let w = init_normal(self.rng, &[fout, fin], fin, gain);
        Linear {
            weight: self.store.insert(format!("{name}.weight"), w),
            bias: self.store.insert(format!("{name}.bias"), Tensor::zeros(&[fout])),
        }
    }
}

#[derive(Clone, Debug)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
}

impl Conv {
    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Var {
        let w = g.param(p, self.weight);
        let b = g.param(p, self.bias);
        g.conv2d(x, w, b)
    }
}

#[derive(Clone, Debug)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Var {
        let w = g.param(p, self.weight);
        let b = g.param(p, self.bias);
        g.linear(x, w, b)
    }
}

/// Pre-activation residual block, optionally instance-normalized and down-sampling.
#[derive(Clone, Debug)]
struct ResBlock {
    conv1: Conv,
    conv2: Conv,
    shortcut: Option<Conv>,
    normalize: bool,
    downsample: bool,
}

impl ResBlock {
    fn new<R: Rng>(
        b: &mut Builder<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        normalize: bool,
        downsample: bool,
    ) -> Self {
        Self {
            conv1: b.conv(&format!("{name}.conv1"), cin, cin, 3, LRELU_GAIN),
            conv2: b.conv(&format!("{name}.conv2"), cin, cout, 3, LRELU_GAIN),
            shortcut: (cin != cout).then(|| b.conv(&format!("{name}.sc"), cin, cout, 1, 1.0)),
            normalize,
            downsample,
        }
    }

    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Var {
        let mut sc = x;
        if let Some(conv) = &self.shortcut {
            sc = conv.forward(g, p, sc);
        }
        if self.downsample {
            sc = g.avg_pool2(sc);
        }
        let mut h = x;
        if self.normalize {
            h = g.instance_norm(h, NORM_EPS);
        }
        h = g.leaky_relu(h, LRELU_SLOPE);
        h = self.conv1.forward(g, p, h);
        if self.downsample {
            h = g.avg_pool2(h);
        }
        if self.normalize {
            h = g.instance_norm(h, NORM_EPS);
        }
        h = g.leaky_relu(h, LRELU_SLOPE);
        h = self.conv2.forward(g, p, h);
        let sum = g.add(h, sc);
        g.scale(sum, SQRT2_INV)
    }
}

/// How the style reaches the AdaIN sites of the generator.
#[derive(Clone, Copy, Debug)]
pub enum StyleInjection {
    /// Scale and shift computed from a `[N, style_dim]` style batch.
    Style(Var),
    /// Scale forced to 1 and shift to 0 at every site.
    Neutral,
}

#[derive(Clone, Debug)]
struct AdaIn {
    fc: Linear,
    channels: usize,
}

impl AdaIn {
    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var, style: StyleInjection) -> Var {
        let n = g.shape(x)[0];
        let normed = g.instance_norm(x, NORM_EPS);
        let c = self.channels;
        let (scale, shift) = match style {
            StyleInjection::Style(s) => {
                let h = self.fc.forward(g, p, s);
                let all: Vec<usize> = alloc::vec![0; n];
                let gamma = g.gather(h, &all, c);
                let beta = g.gather(h, &alloc::vec![1; n], c);
                // (1 + gamma)
                let ones = Tensor::full(&[n, c], 1.0);
                (g.add_const(gamma, &ones), beta)
            }
            StyleInjection::Neutral => (
                g.constant(Tensor::full(&[n, c], 1.0)),
                g.constant(Tensor::zeros(&[n, c])),
            ),
        };
        g.channel_affine(normed, scale, shift)
    }
}

#[derive(Clone, Debug)]
struct AdaInResBlock {
    norm1: AdaIn,
    conv1: Conv,
    norm2: AdaIn,
    conv2: Conv,
    shortcut: Option<Conv>,
    upsample: bool,
}

impl AdaInResBlock {
    fn new<R: Rng>(
        b: &mut Builder<'_, R>,
        name: &str,
        cin: usize,
        cout: usize,
        style_dim: usize,
        upsample: bool,
    ) -> Self {
        Self {
            norm1: AdaIn {
                fc: b.linear(&format!("{name}.adain1"), style_dim, 2 * cin, 1.0),
                channels: cin,
            },
            conv1: b.conv(&format!("{name}.conv1"), cin, cout, 3, LRELU_GAIN),
            norm2: AdaIn {
                fc: b.linear(&format!("{name}.adain2"), style_dim, 2 * cout, 1.0),
                channels: cout,
            },
            conv2: b.conv(&format!("{name}.conv2"), cout, cout, 3, LRELU_GAIN),
            shortcut: (cin != cout).then(|| b.conv(&format!("{name}.sc"), cin, cout, 1, 1.0)),
            upsample,
        }
    }

    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var, style: StyleInjection) -> Var {
        let mut sc = x;
        if self.upsample {
            sc = g.upsample2(sc);
        }
        if let Some(conv) = &self.shortcut {
            sc = conv.forward(g, p, sc);
        }
        let mut h = self.norm1.forward(g, p, x, style);
        h = g.leaky_relu(h, LRELU_SLOPE);
        if self.upsample {
            h = g.upsample2(h);
        }
        h = self.conv1.forward(g, p, h);
        h = self.norm2.forward(g, p, h, style);
        h = g.leaky_relu(h, LRELU_SLOPE);
        h = self.conv2.forward(g, p, h);
        let sum = g.add(h, sc);
        g.scale(sum, SQRT2_INV)
    }
}

fn widths(cfg: &TrainConfig, stages: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(stages + 1);
    let mut c = cfg.base_channels;
    w.push(c);
    for _ in 0..stages {
        c = (2 * c).min(cfg.max_channels);
        w.push(c);
    }
    w
}

fn trunk_stages(image_size: usize) -> usize {
    (image_size / TRUNK_SIZE).trailing_zeros() as usize
}

fn check_labels(labels: &[usize], num_domains: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= num_domains) {
        Some(&label) => Err(Error::Label { label, num_domains }),
        None => Ok(()),
    }
}

/// `E_c`: image to spatial content code (the posterior mean).
#[derive(Clone, Debug)]
pub struct ContentEncoder {
    from_rgb: Conv,
    blocks: Vec<ResBlock>,
    out: Conv,
}

impl ContentEncoder {
    fn new<R: Rng>(b: &mut Builder<'_, R>, cfg: &TrainConfig) -> Self {
        let w = widths(cfg, cfg.downsample_stages);
        let mut blocks = Vec::new();
        for i in 0..cfg.downsample_stages {
            blocks.push(ResBlock::new(
                b,
                &format!("content.block{i}"),
                w[i],
                w[i + 1],
                true,
                true,
            ));
        }
        let last = *w.last().unwrap();
        blocks.push(ResBlock::new(
            b,
            &format!("content.block{}", cfg.downsample_stages),
            last,
            last,
            true,
            false,
        ));
        Self {
            from_rgb: b.conv("content.from_rgb.conv", cfg.image_channels, w[0], 3, 1.0),
            blocks,
            out: b.conv("content.out.conv", last, cfg.content_channels, 1, 1.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Var {
        let mut h = self.from_rgb.forward(g, p, x);
        for blk in &self.blocks {
            h = blk.forward(g, p, h);
        }
        h = g.instance_norm(h, NORM_EPS);
        h = g.leaky_relu(h, LRELU_SLOPE);
        self.out.forward(g, p, h)
    }
}

/// Shared down-sampling trunk of the style encoder and the discriminator.
#[derive(Clone, Debug)]
struct Trunk {
    from_rgb: Conv,
    blocks: Vec<ResBlock>,
    fc: Linear,
}

impl Trunk {
    fn new<R: Rng>(b: &mut Builder<'_, R>, net: &str, cfg: &TrainConfig) -> (Self, usize) {
        let stages = trunk_stages(cfg.image_size);
        let w = widths(cfg, stages);
        let blocks = (0..stages)
            .map(|i| ResBlock::new(b, &format!("{net}.block{i}"), w[i], w[i + 1], false, true))
            .collect();
        let last = w[stages];
        let trunk = Self {
            from_rgb: b.conv(&format!("{net}.from_rgb.conv"), cfg.image_channels, w[0], 3, 1.0),
            blocks,
            fc: b.linear(
                &format!("{net}.shared.fc"),
                last * TRUNK_SIZE * TRUNK_SIZE,
                last,
                LRELU_GAIN,
            ),
        };
        (trunk, last)
    }

    fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var) -> Var {
        let mut h = self.from_rgb.forward(g, p, x);
        for blk in &self.blocks {
            h = blk.forward(g, p, h);
        }
        h = g.leaky_relu(h, LRELU_SLOPE);
        let s = g.shape(h).to_vec();
        h = g.reshape(h, &[s[0], s[1] * s[2] * s[3]]);
        h = self.fc.forward(g, p, h);
        g.leaky_relu(h, LRELU_SLOPE)
    }
}

/// One linear head per domain; only the head named by each row's label is read.
#[derive(Clone, Debug)]
struct DomainHeads {
    heads: Vec<Linear>,
    width: usize,
}

impl DomainHeads {
    fn forward(&self, g: &mut Graph, p: &ParamStore, h: Var, labels: &[usize]) -> Var {
        let outs: Vec<Var> = self.heads.iter().map(|l| l.forward(g, p, h)).collect();
        let all = g.concat(&outs);
        g.gather(all, labels, self.width)
    }
}

/// `E_s`: (image, domain) to style code.
#[derive(Clone, Debug)]
pub struct StyleEncoder {
    trunk: Trunk,
    heads: DomainHeads,
    num_domains: usize,
}

impl StyleEncoder {
    fn new<R: Rng>(b: &mut Builder<'_, R>, cfg: &TrainConfig) -> Self {
        let (trunk, last) = Trunk::new(b, "style", cfg);
        let heads = (0..cfg.num_domains)
            .map(|d| b.linear(&format!("style.head.d{d}"), last, cfg.style_dim, 1.0))
            .collect();
        Self {
            trunk,
            heads: DomainHeads {
                heads,
                width: cfg.style_dim,
            },
            num_domains: cfg.num_domains,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var, labels: &[usize]) -> Result<Var> {
        check_labels(labels, self.num_domains)?;
        let h = self.trunk.forward(g, p, x);
        Ok(self.heads.forward(g, p, h, labels))
    }
}

/// Latent code to style code, with domain-specific final layers.
#[derive(Clone, Debug)]
pub struct MappingNetwork {
    shared: Vec<Linear>,
    branches: Vec<(Linear, Linear)>,
    style_dim: usize,
}

impl MappingNetwork {
    fn new<R: Rng>(b: &mut Builder<'_, R>, cfg: &TrainConfig) -> Self {
        let h = cfg.mapping_hidden;
        let shared = alloc::vec![
            b.linear("mapping.shared.fc0", cfg.latent_dim, h, LRELU_GAIN),
            b.linear("mapping.shared.fc1", h, h, LRELU_GAIN),
        ];
        let branches = (0..cfg.num_domains)
            .map(|d| {
                (
                    b.linear(&format!("mapping.d{d}.fc0"), h, h, LRELU_GAIN),
                    b.linear(&format!("mapping.d{d}.out"), h, cfg.style_dim, 1.0),
                )
            })
            .collect();
        Self {
            shared,
            branches,
            style_dim: cfg.style_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, z: Var, labels: &[usize]) -> Result<Var> {
        check_labels(labels, self.branches.len())?;
        let mut h = z;
        for l in &self.shared {
            h = l.forward(g, p, h);
            h = g.leaky_relu(h, LRELU_SLOPE);
        }
        let mut outs = Vec::with_capacity(self.branches.len());
        for (fc, out) in &self.branches {
            let b = fc.forward(g, p, h);
            let b = g.leaky_relu(b, LRELU_SLOPE);
            outs.push(out.forward(g, p, b));
        }
        let all = g.concat(&outs);
        Ok(g.gather(all, labels, self.style_dim))
    }
}

/// `G`: (content code, style code) to image.
#[derive(Clone, Debug)]
pub struct Generator {
    from_content: Conv,
    blocks: Vec<AdaInResBlock>,
    to_rgb: Conv,
}

impl Generator {
    fn new<R: Rng>(b: &mut Builder<'_, R>, cfg: &TrainConfig) -> Self {
        let w = widths(cfg, cfg.downsample_stages);
        let last = *w.last().unwrap();
        let mut blocks = alloc::vec![AdaInResBlock::new(
            b,
            "generator.block0",
            last,
            last,
            cfg.style_dim,
            false
        )];
        for (k, i) in (0..cfg.downsample_stages).rev().enumerate() {
            blocks.push(AdaInResBlock::new(
                b,
                &format!("generator.block{}", k + 1),
                w[i + 1],
                w[i],
                cfg.style_dim,
                true,
            ));
        }
        Self {
            from_content: b.conv("generator.from_content.conv", cfg.content_channels, last, 1, 1.0),
            blocks,
            to_rgb: b.conv("generator.to_rgb.conv", w[0], cfg.image_channels, 1, 1.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &ParamStore, c: Var, style: StyleInjection) -> Var {
        let mut h = self.from_content.forward(g, p, c);
        for blk in &self.blocks {
            h = blk.forward(g, p, h, style);
        }
        h = g.instance_norm(h, NORM_EPS);
        h = g.leaky_relu(h, LRELU_SLOPE);
        h = self.to_rgb.forward(g, p, h);
        g.tanh(h)
    }
}

/// `D`: (image, domain) to a real/fake logit.
#[derive(Clone, Debug)]
pub struct Discriminator {
    trunk: Trunk,
    heads: DomainHeads,
    num_domains: usize,
}

impl Discriminator {
    fn new<R: Rng>(b: &mut Builder<'_, R>, cfg: &TrainConfig) -> Self {
        let (trunk, last) = Trunk::new(b, "disc", cfg);
        let heads = (0..cfg.num_domains)
            .map(|d| b.linear(&format!("disc.head.d{d}"), last, 1, 1.0))
            .collect();
        Self {
            trunk,
            heads: DomainHeads { heads, width: 1 },
            num_domains: cfg.num_domains,
        }
    }

    /// Logits of shape `[N, 1]`.
    pub fn forward(&self, g: &mut Graph, p: &ParamStore, x: Var, labels: &[usize]) -> Result<Var> {
        check_labels(labels, self.num_domains)?;
        let h = self.trunk.forward(g, p, x);
        Ok(self.heads.forward(g, p, h, labels))
    }
}

/// Which network a parameter belongs to, by name prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetKind {
    Content,
    Style,
    Mapping,
    Generator,
    Discriminator,
}

impl NetKind {
    pub const ALL: [NetKind; 5] = [
        NetKind::Content,
        NetKind::Style,
        NetKind::Mapping,
        NetKind::Generator,
        NetKind::Discriminator,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            NetKind::Content => "content.",
            NetKind::Style => "style.",
            NetKind::Mapping => "mapping.",
            NetKind::Generator => "generator.",
            NetKind::Discriminator => "disc.",
        }
    }

    pub fn of(name: &str) -> Option<NetKind> {
        Self::ALL.into_iter().find(|k| name.starts_with(k.prefix()))
    }
}

/// Network structure plus the parameter values it reads.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub content: ContentEncoder,
    pub style: StyleEncoder,
    pub mapping: MappingNetwork,
    pub generator: Generator,
    pub disc: Discriminator,
    pub params: ParamStore,
}

impl Model {
    /// Builds all networks, drawing initial weights from the init stream.
    pub fn new(config: &TrainConfig, rngs: &mut RngStreams) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let rng = rngs.get(Stream::Init);
        let mut b = Builder {
            store: &mut params,
            rng,
        };
        let content = ContentEncoder::new(&mut b, config);
        let style = StyleEncoder::new(&mut b, config);
        let mapping = MappingNetwork::new(&mut b, config);
        let generator = Generator::new(&mut b, config);
        let disc = Discriminator::new(&mut b, config);
        Ok(Self {
            config: config.clone(),
            content,
            style,
            mapping,
            generator,
            disc,
            params,
        })
    }

    /// Same structure with a different set of parameter values (e.g. the EMA copy).
    pub fn with_params(&self, params: ParamStore) -> Result<Self> {
        if !params.same_layout(&self.params) {
            return Err(Error::Invalid(String::from(
                "parameter layout does not match the model",
            )));
        }
        Ok(Self { params, ..self.clone() })
    }

    pub fn check_images(&self, x: &Tensor) -> Result<()> {
        let [c, h, w] = self.config.image_shape();
        let s = x.shape();
        if s.len() != 4 || s[1..] != [c, h, w] {
            let n = s.first().copied().unwrap_or(0);
            return Err(Error::Shape {
                context: "image batch",
                expected: alloc::vec![n, c, h, w],
                actual: s.to_vec(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite { context: "image batch" });
        }
        Ok(())
    }

    fn check_content(&self, c: &Tensor) -> Result<()> {
        let [cc, h, w] = self.config.content_shape();
        let s = c.shape();
        if s.len() != 4 || s[1..] != [cc, h, w] {
            let n = s.first().copied().unwrap_or(0);
            return Err(Error::Shape {
                context: "content code",
                expected: alloc::vec![n, cc, h, w],
                actual: s.to_vec(),
            });
        }
        if !c.is_finite() {
            return Err(Error::NonFinite {
                context: "content code",
            });
        }
        Ok(())
    }

    fn check_style(&self, s: &Tensor) -> Result<()> {
        let d = self.config.style_dim;
        if s.ndim() != 2 || s.shape()[1] != d {
            return Err(Error::Shape {
                context: "style code",
                expected: alloc::vec![s.shape().first().copied().unwrap_or(0), d],
                actual: s.shape().to_vec(),
            });
        }
        if !s.is_finite() {
            return Err(Error::NonFinite { context: "style code" });
        }
        Ok(())
    }

    /// Batched `E_c` without gradient tracking.
    pub fn content_batch(&self, x: &Tensor) -> Result<Tensor> {
        self.check_images(x)?;
        let mut g = Graph::inference();
        let xv = g.constant(x.clone());
        let c = self.content.forward(&mut g, &self.params, xv);
        Ok(g.value(c).clone())
    }

    pub fn style_batch(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
        self.check_images(x)?;
        let mut g = Graph::inference();
        let xv = g.constant(x.clone());
        let s = self.style.forward(&mut g, &self.params, xv, labels)?;
        Ok(g.value(s).clone())
    }

    pub fn map_batch(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        if z.ndim() != 2 || z.shape()[1] != self.config.latent_dim {
            return Err(Error::Shape {
                context: "latent code",
                expected: alloc::vec![z.shape().first().copied().unwrap_or(0), self.config.latent_dim],
                actual: z.shape().to_vec(),
            });
        }
        if !z.is_finite() {
            return Err(Error::NonFinite { context: "latent code" });
        }
        let mut g = Graph::inference();
        let zv = g.constant(z.clone());
        let s = self.mapping.forward(&mut g, &self.params, zv, labels)?;
        Ok(g.value(s).clone())
    }

    pub fn generate_batch(&self, c: &Tensor, s: &Tensor) -> Result<Tensor> {
        self.check_content(c)?;
        self.check_style(s)?;
        if s.shape()[0] != c.shape()[0] {
            return Err(Error::Shape {
                context: "style batch",
                expected: alloc::vec![c.shape()[0], self.config.style_dim],
                actual: s.shape().to_vec(),
            });
        }
        let mut g = Graph::inference();
        let cv = g.constant(c.clone());
        let sv = g.constant(s.clone());
        let out = self
            .generator
            .forward(&mut g, &self.params, cv, StyleInjection::Style(sv));
        Ok(g.value(out).clone())
    }

    /// Generator output with every AdaIN site forced to the identity affine map.
    pub fn generate_neutral_batch(&self, c: &Tensor) -> Result<Tensor> {
        self.check_content(c)?;
        let mut g = Graph::inference();
        let cv = g.constant(c.clone());
        let out = self
            .generator
            .forward(&mut g, &self.params, cv, StyleInjection::Neutral);
        Ok(g.value(out).clone())
    }

    /// Logits `[N]`.
    pub fn discriminate_batch(&self, x: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
        self.check_images(x)?;
        let mut g = Graph::inference();
        let xv = g.constant(x.clone());
        let l = self.disc.forward(&mut g, &self.params, xv, labels)?;
        Ok(g.value(l).data().to_vec())
    }
}

fn single(img: &Image) -> Tensor {
    let s = img.tensor().shape();
    img.tensor().clone().reshape(&[1, s[0], s[1], s[2]])
}

/// `c = E_c(x)`.
pub fn encode_content(model: &Model, x: &Image) -> Result<ContentCode> {
    let c = model.content_batch(&single(x))?;
    Ok(ContentCode(c.batch_item(0)))
}

/// `s = E_s(x, y)`.
pub fn encode_style(model: &Model, x: &Image, y: DomainLabel) -> Result<StyleCode> {
    let s = model.style_batch(&single(x), &[y.index()])?;
    Ok(StyleCode(s.into_data()))
}

pub fn map_latent(model: &Model, z: &LatentCode, y: DomainLabel) -> Result<StyleCode> {
    let zt = Tensor::new(&[1, z.0.len()], z.0.clone());
    let s = model.map_batch(&zt, &[y.index()])?;
    Ok(StyleCode(s.into_data()))
}

/// `G(c, s)`; the generator is not given the domain label.
pub fn generate(model: &Model, c: &ContentCode, s: &StyleCode) -> Result<Image> {
    let cs = c.0.shape().to_vec();
    let ct = c.0.clone().reshape(&[
        1,
        cs[0],
        cs.get(1).copied().unwrap_or(0),
        cs.get(2).copied().unwrap_or(0),
    ]);
    let st = Tensor::new(&[1, s.0.len()], s.0.clone());
    let out = model.generate_batch(&ct, &st)?;
    Ok(Image::from_tensor_unchecked(out.batch_item(0)))
}

pub fn discriminate(model: &Model, x: &Image, y: DomainLabel) -> Result<f64> {
    Ok(model.discriminate_batch(&single(x), &[y.index()])?[0])
}
