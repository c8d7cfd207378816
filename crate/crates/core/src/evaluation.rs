//! Translation sweeps and the metric grid.
//!
//! All functions here expect the EMA model and use noise-free content codes.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{fid, linear_probe, lpips_diversity, FeatureExtractor, ProbeConfig, ProbeResult};
use crate::networks::Model;
use crate::rng::normal_tensor;
use crate::tensor::Tensor;
use crate::training::Dataset;
use crate::types::{DomainLabel, Image, LatentCode};

/// Anything that can translate image batches; `Model` is the real one.
pub trait Translator {
    fn num_domains(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn translate_reference(&self, x: &Tensor, x_ref: &Tensor, y_target: &[usize]) -> Result<Tensor>;
    fn translate_sampling(&self, x: &Tensor, z: &Tensor, y_target: &[usize]) -> Result<Tensor>;
}

impl Translator for Model {
    fn num_domains(&self) -> usize {
        self.config.num_domains
    }

    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn translate_reference(&self, x: &Tensor, x_ref: &Tensor, y_target: &[usize]) -> Result<Tensor> {
        let c = self.content_batch(x)?;
        let s = self.style_batch(x_ref, y_target)?;
        self.generate_batch(&c, &s)
    }

    fn translate_sampling(&self, x: &Tensor, z: &Tensor, y_target: &[usize]) -> Result<Tensor> {
        let c = self.content_batch(x)?;
        let s = self.map_batch(z, y_target)?;
        self.generate_batch(&c, &s)
    }
}

fn single(img: &Image) -> Tensor {
    let s = img.tensor().shape();
    img.tensor().clone().reshape(&[1, s[0], s[1], s[2]])
}

/// `G(E_c(x), E_s(x_ref, y_target))`.
pub fn translate_reference(model: &Model, x: &Image, x_ref: &Image, y_target: DomainLabel) -> Result<Image> {
    let out = model.translate_reference(&single(x), &single(x_ref), &[y_target.index()])?;
    Ok(Image::from_tensor_unchecked(out.batch_item(0)))
}

/// `G(E_c(x), mapping(z, y_target))`.
pub fn translate_sampling(model: &Model, x: &Image, y_target: DomainLabel, z: &LatentCode) -> Result<Image> {
    let zt = Tensor::new(&[1, z.0.len()], z.0.clone());
    let out = model.translate_sampling(&single(x), &zt, &[y_target.index()])?;
    Ok(Image::from_tensor_unchecked(out.batch_item(0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Reference,
    Sampling,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Reference, Strategy::Sampling];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Reference => "reference",
            Strategy::Sampling => "sampling",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub num_repeats: usize,
    pub seed: u64,
    pub include_same_domain: bool,
    /// Upper bound on images per generator call.
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_repeats: 10,
            seed: 0,
            include_same_domain: false,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsCell {
    pub source: usize,
    pub target: usize,
    pub strategy: Strategy,
    /// `None` when fewer than two repeats were produced.
    pub lpips: Option<f64>,
    pub fid: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReportMetadata {
    pub checkpoint: String,
    pub extractor: String,
    pub seed: u64,
    pub num_repeats: usize,
    pub domains: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub cells: Vec<MetricsCell>,
    pub leakage: Option<ProbeResult>,
    pub metadata: ReportMetadata,
}

impl MetricsReport {
    pub fn cell(&self, source: usize, target: usize, strategy: Strategy) -> Option<&MetricsCell> {
        self.cells
            .iter()
            .find(|c| c.source == source && c.target == target && c.strategy == strategy)
    }
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Distinct deterministic stream per cell.
fn cell_rng(seed: u64, source: usize, target: usize, strategy: Strategy, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((source * k + target) * 2 + strategy as usize) as u64;
    rng.set_stream(id + 1);
    rng
}

/// Translations of every source-domain test image, `num_repeats` each, grouped per input.
pub fn translate_cell(
    translator: &dyn Translator,
    test: &Dataset,
    source: usize,
    target: usize,
    strategy: Strategy,
    config: &EvalConfig,
) -> Result<Vec<Vec<Image>>> {
    let k = test.num_domains();
    let r = config.num_repeats;
    if r == 0 {
        return Err(Error::Invalid("num_repeats must be positive".into()));
    }
    let mut rng = cell_rng(config.seed, source, target, strategy, k);
    let refs = test.domain_indices(target);
    let per_call = (config.batch_size / r).max(1);
    let mut out = Vec::new();
    for chunk in test.domain_indices(source).chunks(per_call) {
        let mut xs = Vec::with_capacity(chunk.len() * r);
        for &i in chunk {
            xs.extend(core::iter::repeat_n(test.image(i), r));
        }
        let x = Tensor::stack(&xs);
        let labels = alloc::vec![target; xs.len()];
        let y = match strategy {
            Strategy::Reference => {
                let picks: Vec<usize> = (0..xs.len()).map(|_| refs[rng.random_range(0..refs.len())]).collect();
                translator.translate_reference(&x, &test.batch(&picks), &labels)?
            }
            Strategy::Sampling => {
                let z = normal_tensor(&mut rng, &[xs.len(), translator.latent_dim()], 1.0);
                translator.translate_sampling(&x, &z, &labels)?
            }
        };
        for j in 0..chunk.len() {
            out.push(
                (0..r)
                    .map(|q| Image::from_tensor_unchecked(y.batch_item(j * r + q)))
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Fills LPIPS and FID for every ordered domain pair and both strategies.
/// The leakage field is left empty; see [`leakage_probe`].
pub fn run_evaluation(
    translator: &dyn Translator,
    test: &Dataset,
    extractor: &dyn FeatureExtractor,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let k = test.num_domains();
    if k != translator.num_domains() {
        return Err(Error::Invalid(alloc::format!(
            "test set has {k} domains, model has {}",
            translator.num_domains()
        )));
    }
    let real_features: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|d| features_of(extractor, test, test.domain_indices(d), config.batch_size))
        .collect();
    let mut cells = Vec::new();
    for source in 0..k {
        for target in 0..k {
            if source == target && !config.include_same_domain {
                continue;
            }
            for strategy in Strategy::ALL {
                let groups = translate_cell(translator, test, source, target, strategy, config)?;
                let lpips = if config.num_repeats >= 2 {
                    let per_input = groups
                        .iter()
                        .map(|g| lpips_diversity(g, extractor))
                        .collect::<Result<Vec<f64>>>()?;
                    Some(sorted_mean(per_input))
                } else {
                    None
                };
                let flat: Vec<Image> = groups.into_iter().flatten().collect();
                let mut fake = Vec::with_capacity(flat.len());
                for chunk in flat.chunks(config.batch_size.max(1)) {
                    fake.extend(extractor.pooled(&Image::batch(chunk)));
                }
                let fid = fid(&fake, &real_features[target])?;
                cells.push(MetricsCell {
                    source,
                    target,
                    strategy,
                    lpips,
                    fid,
                });
            }
        }
    }
    Ok(MetricsReport {
        cells,
        leakage: None,
        metadata: ReportMetadata {
            checkpoint: String::new(),
            extractor: extractor.name().into(),
            seed: config.seed,
            num_repeats: config.num_repeats,
            domains: test.domain_names().to_vec(),
        },
    })
}

/// Pooled extractor features of selected dataset images.
pub fn features_of(extractor: &dyn FeatureExtractor, data: &Dataset, indices: &[usize], batch: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch.max(1)) {
        out.extend(extractor.pooled(&data.batch(chunk)));
    }
    out
}

/// Flattened mean content codes, in dataset order.
pub fn content_features(model: &Model, data: &Dataset, batch: usize) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch.max(1)) {
        let c = model.content_batch(&data.batch(chunk))?;
        let len = c.item_len();
        out.extend(c.data().chunks(len).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Trains a linear probe to predict the domain from content codes.
pub fn leakage_probe(model: &Model, train: &Dataset, test: &Dataset, config: &ProbeConfig) -> Result<ProbeResult> {
    let k = train.num_domains();
    if k < 2 {
        return Err(Error::Invalid(alloc::format!(
            "leakage probe needs at least 2 domains, got {k}"
        )));
    }
    let xtr = content_features(model, train, 64)?;
    let xte = content_features(model, test, 64)?;
    let ytr: Vec<usize> = (0..train.len()).map(|i| train.label(i)).collect();
    let yte: Vec<usize> = (0..test.len()).map(|i| test.label(i)).collect();
    linear_probe(&xtr, &ytr, &xte, &yte, k, config)
}
