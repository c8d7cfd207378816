//! Training driver with checkpoints and a CSV loss log.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use disent_core::losses::LossReport;
use disent_core::training::{sample_step_plan, train_step, Dataset, TrainState};
use disent_core::TrainConfig;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config_file::render_config;
use crate::error::{io_err, Error, Result};

pub const LOSS_LOG: &str = "loss_log.csv";
pub const RESOLVED_CONFIG: &str = "config_resolved.txt";

pub fn checkpoint_path(out: &Path, step: u64) -> PathBuf {
    out.join("checkpoints").join(format!("step_{step}.ckpt"))
}

fn log_header() -> String {
    format!("step,{}\n", LossReport::COLUMNS.join(","))
}

fn log_row(step: u64, r: &LossReport) -> String {
    let vals: Vec<String> = r.values().iter().map(f64::to_string).collect();
    format!("{step},{}\n", vals.join(","))
}

/// Keeps the header and rows with `step <= last`.
fn truncate_log(path: &Path, last: u64) -> Result<()> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut out = log_header();
    for line in text.lines().skip(1) {
        let step: Option<u64> = line.split(',').next().and_then(|s| s.parse().ok());
        if step.is_some_and(|s| s <= last) {
            out.push_str(line);
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Options beyond the config itself.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub resume: Option<PathBuf>,
    /// Print a progress line to stderr every this many steps (0 = silent).
    pub log_every: u64,
}

/// Runs `config.total_steps` steps, writing `checkpoints/step_<N>.ckpt`,
/// `loss_log.csv` and `config_resolved.txt` under `out`.
///
/// On resume the checkpoint's config is used, except that `total_steps` and
/// `checkpoint_every` come from `config`.
pub fn run_training(config: &TrainConfig, train: &Dataset, out: &Path, opts: &RunOptions) -> Result<Checkpoint> {
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    let log_path = out.join(LOSS_LOG);
    let mut state = match &opts.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let mut state = ck.to_state()?;
            state.model.config.total_steps = config.total_steps;
            state.model.config.checkpoint_every = config.checkpoint_every;
            truncate_log(&log_path, state.step)?;
            state
        }
        None => {
            let state = TrainState::new(config)?;
            fs::write(&log_path, log_header()).map_err(io_err(&log_path))?;
            save_checkpoint(&Checkpoint::from_state(&state), &checkpoint_path(out, 0))?;
            state
        }
    };
    let cfg = state.config().clone();
    if train.num_domains() != cfg.num_domains {
        return Err(Error::Core(disent_core::Error::Invalid(format!(
            "dataset has {} domains but the config expects {}",
            train.num_domains(),
            cfg.num_domains
        ))));
    }
    let resolved = out.join(RESOLVED_CONFIG);
    fs::write(&resolved, render_config(&cfg)).map_err(io_err(&resolved))?;
    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    while state.step < cfg.total_steps {
        let plan = sample_step_plan(train, &cfg, &mut state.rngs, state.step)?;
        let report = train_step(&mut state, &plan)?;
        log.write_all(log_row(state.step, &report).as_bytes())
            .map_err(io_err(&log_path))?;
        if opts.log_every > 0 && state.step % opts.log_every == 0 {
            eprintln!(
                "step {:>6}  rec {:.4}  adv_g {:.4}  adv_d {:.4}  cb {:.3}",
                state.step, report.rec, report.adv_g, report.adv_d, report.cb
            );
        }
        if state.step % cfg.checkpoint_every.max(1) == 0 || state.step == cfg.total_steps {
            log.flush().map_err(io_err(&log_path))?;
            save_checkpoint(&Checkpoint::from_state(&state), &checkpoint_path(out, state.step))?;
        }
    }
    Ok(Checkpoint::from_state(&state))
}

/// Parses `loss_log.csv` into `(step, [rec, adv_g, adv_d, cb, total_g, total_d])` rows.
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, [f64; 6])>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Parse {
            line: i + 1,
            key: "loss_log".into(),
            message: "malformed row".into(),
        };
        let mut it = line.split(',');
        let step = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let vals: Vec<f64> = it.map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        rows.push((step, vals.try_into().map_err(|_| bad())?));
    }
    Ok(rows)
}
