//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use disent_core::evaluation::{leakage_probe, run_evaluation, translate_reference, translate_sampling, EvalConfig};
use disent_core::metrics::{linear_probe, ProbeConfig, RandomConvExtractor};
use disent_core::rng::normal_tensor;
use disent_core::synthetic::SyntheticFactorSpec;
use disent_core::{DomainLabel, Image, LatentCode, TrainConfig};

use crate::checkpoint::load_checkpoint;
use crate::config_file::{apply_overrides, load_config};
use crate::data::{
    apply_aggregation, generate_synthetic, load_image, load_split, scan_dataset, AggregationMap, DatasetManifest,
    Split, CUB_AGGREGATION,
};
use crate::error::{io_err, Error, Result};
use crate::report::{comparison_grid, report_jsonl, report_table, write_png};
use crate::runner::{run_training, RunOptions};

#[derive(Parser, Debug)]
#[command(
    name = "disent",
    version,
    about = "Multi-domain image translation with a content bottleneck"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render the synthetic shapes dataset and its factor ledger.
    MakeSynthetic(MakeSyntheticArgs),
    /// Scan an image-folder dataset and write a manifest.
    Scan(ScanArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Translate one image or a directory of images.
    Translate(TranslateArgs),
    /// Compute the LPIPS/FID grid and the leakage probe.
    Evaluate(EvaluateArgs),
    /// Fit the content-leakage probe.
    Probe(ProbeArgs),
    /// Write a content-by-style comparison grid.
    Grid(GridArgs),
}

#[derive(Args, Debug)]
pub struct MakeSyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub domains: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 500)]
    pub per_domain: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct AggregationArgs {
    /// Rules file with `pattern -> coarse_name` lines.
    #[arg(long, conflicts_with = "cub_default")]
    pub aggregation: Option<PathBuf>,
    /// Use the bundled (non-canonical) CUB coarse grouping.
    #[arg(long)]
    pub cub_default: bool,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub test_per_domain: usize,
    #[command(flatten)]
    pub agg: AggregationArgs,
    /// Manifest file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "source")]
pub struct SourceArgs {
    /// Dataset root with one subdirectory per domain.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Manifest written by `scan`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Test images per domain when scanning `--data`.
    #[arg(long, default_value_t = 0)]
    pub test_per_domain: usize,
    #[command(flatten)]
    pub agg: AggregationArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Reference,
    Sample,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Image file or directory of images.
    #[arg(long)]
    pub input: PathBuf,
    /// Target domain index.
    #[arg(long)]
    pub target: usize,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Style reference image (reference mode).
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Latent seed (sample mode, default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or directory when `--input` is a directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also evaluate source = target cells.
    #[arg(long)]
    pub include_same: bool,
    #[arg(long)]
    pub no_probe: bool,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Permute training labels with `--seed` (chance-level sanity check).
    #[arg(long)]
    pub shuffle_labels: bool,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub content: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub style: Vec<PathBuf>,
    /// Domain index of each style image.
    #[arg(long, num_args = 1.., required = true)]
    pub style_domain: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn resolve_manifest(d: &DataArgs) -> Result<DatasetManifest> {
    let m = match (&d.source.data, &d.source.manifest) {
        (Some(root), None) => scan_dataset(root, d.test_per_domain)?,
        (None, Some(path)) => DatasetManifest::load(path)?,
        _ => return Err(Error::Usage("give exactly one of --data or --manifest".into())),
    };
    aggregate(m, &d.agg)
}

fn aggregate(m: DatasetManifest, agg: &AggregationArgs) -> Result<DatasetManifest> {
    let map = match (&agg.aggregation, agg.cub_default) {
        (Some(p), _) => AggregationMap::load(p)?,
        (None, true) => AggregationMap::parse(CUB_AGGREGATION)?,
        (None, false) => return Ok(m),
    };
    apply_aggregation(&m, &map)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(io_err(p))
}

fn cmd_make_synthetic(a: &MakeSyntheticArgs) -> Result<()> {
    let spec = SyntheticFactorSpec {
        num_domains: a.domains,
        image_size: a.size,
        samples_per_domain: a.per_domain,
        seed: a.seed,
    };
    spec.validate()?;
    create_dir(&a.out)?;
    let (m, _) = generate_synthetic(&spec, &a.out)?;
    eprintln!(
        "wrote {} images in {} domains to {}",
        m.entries.len(),
        m.domains.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_scan(a: &ScanArgs) -> Result<()> {
    let m = aggregate(scan_dataset(&a.data, a.test_per_domain)?, &a.agg)?;
    m.save(&a.out)?;
    eprintln!(
        "{} domains, {} train / {} test entries",
        m.domains.len(),
        m.count(Split::Train),
        m.count(Split::Test)
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest = resolve_manifest(&a.data)?;
    let mut config = match &a.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    config.num_domains = manifest.domains.len();
    apply_overrides(&mut config, &a.overrides)?;
    let train = load_split(&manifest, Split::Train, config.image_size, config.image_channels)?;
    create_dir(&a.out)?;
    let opts = RunOptions {
        resume: a.resume.clone(),
        log_every: a.log_every,
    };
    let ck = run_training(&config, &train, &a.out, &opts)?;
    eprintln!("finished at step {}", ck.step);
    Ok(())
}

fn cmd_translate(a: &TranslateArgs) -> Result<()> {
    match (a.mode, &a.reference, a.seed) {
        (Mode::Reference, None, _) => return Err(Error::Usage("reference mode needs --ref".into())),
        (Mode::Reference, Some(_), Some(_)) => {
            return Err(Error::Usage("--seed conflicts with --ref in reference mode".into()))
        }
        (Mode::Sample, Some(_), _) => return Err(Error::Usage("--ref is only valid in reference mode".into())),
        _ => {}
    }
    let ck = load_checkpoint(&a.ckpt)?;
    let model = ck.ema_model()?;
    let cfg = &model.config;
    let y = DomainLabel::new(a.target, cfg.num_domains)?;
    let load = |p: &Path| -> Result<Image> { Ok(Image::new(load_image(p, cfg.image_size, cfg.image_channels)?)?) };
    let style = a.reference.as_deref().map(load).transpose()?;
    let z = {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(0));
        LatentCode(normal_tensor(&mut rng, &[cfg.latent_dim], 1.0).into_data())
    };
    let run = |x: &Image| match &style {
        Some(r) => translate_reference(&model, x, r, y),
        None => translate_sampling(&model, x, y, &z),
    };
    if a.input.is_dir() {
        create_dir(&a.out)?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&a.input)
            .map_err(io_err(&a.input))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && matches!(
                        p.extension()
                            .and_then(|e| e.to_str())
                            .map(str::to_ascii_lowercase)
                            .as_deref(),
                        Some("png" | "jpg" | "jpeg")
                    )
            })
            .collect();
        files.sort();
        for f in files {
            let stem = f.file_stem().unwrap().to_string_lossy();
            let out = a.out.join(format!("{stem}_to{}.png", a.target));
            write_png(run(&load(&f)?)?.tensor(), &out)?;
        }
    } else {
        write_png(run(&load(&a.input)?)?.tensor(), &a.out)?;
    }
    Ok(())
}

fn load_eval_sets(
    ck_cfg: &TrainConfig,
    d: &DataArgs,
) -> Result<(
    disent_core::training::Dataset,
    disent_core::training::Dataset,
    DatasetManifest,
)> {
    let manifest = resolve_manifest(d)?;
    if manifest.domains.len() < 2 {
        return Err(Error::Core(disent_core::Error::Invalid(format!(
            "need at least 2 domains, manifest has {}",
            manifest.domains.len()
        ))));
    }
    if manifest.domains.len() != ck_cfg.num_domains {
        return Err(Error::Core(disent_core::Error::Invalid(format!(
            "manifest has {} domains, checkpoint was trained on {}",
            manifest.domains.len(),
            ck_cfg.num_domains
        ))));
    }
    if manifest.count(Split::Test) == 0 {
        return Err(Error::Usage(
            "the test split is empty; use --test-per-domain or a manifest with test entries".into(),
        ));
    }
    let train = load_split(&manifest, Split::Train, ck_cfg.image_size, ck_cfg.image_channels)?;
    let test = load_split(&manifest, Split::Test, ck_cfg.image_size, ck_cfg.image_channels)?;
    Ok((train, test, manifest))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let ck = load_checkpoint(&a.ckpt)?;
    let model = ck.ema_model()?;
    let (train, test, _) = load_eval_sets(&model.config, &a.data)?;
    let extractor = RandomConvExtractor::desk_default(model.config.image_channels);
    let cfg = EvalConfig {
        num_repeats: a.repeats,
        seed: a.seed,
        include_same_domain: a.include_same,
        ..EvalConfig::default()
    };
    let mut report = run_evaluation(&model, &test, &extractor, &cfg)?;
    report.metadata.checkpoint = a.ckpt.display().to_string();
    if !a.no_probe {
        report.leakage = Some(leakage_probe(&model, &train, &test, &ProbeConfig::default())?);
    }
    create_dir(&a.out)?;
    let jsonl = a.out.join("report.jsonl");
    std::fs::write(&jsonl, report_jsonl(&report)).map_err(io_err(&jsonl))?;
    let table = report_table(&report);
    let txt = a.out.join("report.txt");
    std::fs::write(&txt, &table).map_err(io_err(&txt))?;
    print!("{table}");
    Ok(())
}

fn cmd_probe(a: &ProbeArgs) -> Result<()> {
    let ck = load_checkpoint(&a.ckpt)?;
    let model = ck.ema_model()?;
    let (train, test, _) = load_eval_sets(&model.config, &a.data)?;
    let result = if a.shuffle_labels {
        use disent_core::evaluation::content_features;
        let xtr = content_features(&model, &train, 64)?;
        let xte = content_features(&model, &test, 64)?;
        let mut ytr: Vec<usize> = (0..train.len()).map(|i| train.label(i)).collect();
        ytr.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
        let yte: Vec<usize> = (0..test.len()).map(|i| test.label(i)).collect();
        linear_probe(&xtr, &ytr, &xte, &yte, train.num_domains(), &ProbeConfig::default())?
    } else {
        leakage_probe(&model, &train, &test, &ProbeConfig::default())?
    };
    println!(
        "accuracy {:.4} chance {:.4} train_accuracy {:.4} n {}",
        result.accuracy, result.chance, result.train_accuracy, result.test_size
    );
    Ok(())
}

fn cmd_grid(a: &GridArgs) -> Result<()> {
    if a.style.len() != a.style_domain.len() {
        return Err(Error::Usage("give one --style-domain per --style image".into()));
    }
    let ck = load_checkpoint(&a.ckpt)?;
    let model = ck.ema_model()?;
    let cfg = &model.config;
    let load = |p: &PathBuf| -> Result<Image> { Ok(Image::new(load_image(p, cfg.image_size, cfg.image_channels)?)?) };
    let contents = a.content.iter().map(load).collect::<Result<Vec<_>>>()?;
    let styles = a
        .style
        .iter()
        .zip(&a.style_domain)
        .map(|(p, &d)| Ok((load(p)?, DomainLabel::new(d, cfg.num_domains)?)))
        .collect::<Result<Vec<_>>>()?;
    write_png(&comparison_grid(&model, &contents, &styles)?, &a.out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::MakeSynthetic(a) => cmd_make_synthetic(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Train(a) => cmd_train(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Grid(a) => cmd_grid(a),
    }
}

/// Machine-readable description of every subcommand and flag.
pub fn help_json() -> serde_json::Value {
    let root = Cli::command();
    let commands: Vec<_> = root
        .get_subcommands()
        .map(|sc| {
            let flags: Vec<_> = sc
                .get_arguments()
                .filter(|a| a.get_long().is_some())
                .map(|a| {
                    json!({
                        "flag": format!("--{}", a.get_long().unwrap()),
                        "help": a.get_help().map(|h| h.to_string()),
                        "required": a.is_required_set(),
                        "takes_value": a.get_action().takes_values(),
                        "repeatable": matches!(a.get_action(), clap::ArgAction::Append),
                        "default": a.get_default_values().iter().map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>(),
                        "values": a.get_possible_values().iter().map(|v| v.get_name().to_string()).collect::<Vec<_>>(),
                    })
                })
                .collect();
            json!({ "command": sc.get_name(), "about": sc.get_about().map(|s| s.to_string()), "flags": flags })
        })
        .collect();
    json!({ "program": root.get_name(), "exit_codes": { "0": "success", "1": "usage error", "2": "runtime error" }, "commands": commands })
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if args.iter().skip(1).any(|a| a == "--help-json") {
        println!(
            "{}",
            serde_json::to_string_pretty(&help_json()).expect("static schema serializes")
        );
        return 0;
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
