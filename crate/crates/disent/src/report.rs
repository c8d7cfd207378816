//! Metric report output, PNG writing and comparison grids.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use disent_core::evaluation::{translate_reference, MetricsReport, Strategy};
use disent_core::types::denormalize_u8;
use disent_core::{DomainLabel, Image, Model, Tensor};

use crate::error::{Error, Result};

/// One JSON object per line: a record per cell, then a leakage record if present.
pub fn report_jsonl(report: &MetricsReport) -> String {
    let m = &report.metadata;
    let name = |d: usize| m.domains.get(d).cloned().unwrap_or_else(|| d.to_string());
    let mut out = String::new();
    for c in &report.cells {
        let rec = json!({
            "kind": "cell",
            "source": name(c.source),
            "target": name(c.target),
            "strategy": c.strategy.name(),
            "lpips_diversity": c.lpips,
            "fid": c.fid,
            "checkpoint": m.checkpoint,
            "extractor": m.extractor,
            "seed": m.seed,
            "num_repeats": m.num_repeats,
        });
        let _ = writeln!(out, "{rec}");
    }
    if let Some(p) = &report.leakage {
        let rec = json!({
            "kind": "leakage",
            "accuracy": p.accuracy,
            "train_accuracy": p.train_accuracy,
            "chance": p.chance,
            "test_size": p.test_size,
            "checkpoint": m.checkpoint,
        });
        let _ = writeln!(out, "{rec}");
    }
    out
}

/// Grid with one row per ordered domain pair and LPIPS/FID columns per strategy.
pub fn report_table(report: &MetricsReport) -> String {
    let m = &report.metadata;
    let name = |d: usize| m.domains.get(d).cloned().unwrap_or_else(|| d.to_string());
    let mut pairs: Vec<(usize, usize)> = report.cells.iter().map(|c| (c.source, c.target)).collect();
    pairs.dedup();
    let width = pairs
        .iter()
        .map(|&(s, t)| name(s).len() + name(t).len() + 4)
        .max()
        .unwrap_or(10)
        .max(10);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:width$} | {:^21} | {:^21}",
        "", "Reference-guided", "Latent-guided"
    );
    let _ = writeln!(
        out,
        "{:width$} | {:>10} {:>10} | {:>10} {:>10}",
        "source -> target", "LPIPS↑", "FID↓", "LPIPS↑", "FID↓"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 48));
    for (s, t) in pairs {
        let mut row = format!("{:width$}", format!("{} -> {}", name(s), name(t)));
        for strategy in Strategy::ALL {
            match report.cell(s, t, strategy) {
                Some(c) => {
                    let lp = c.lpips.map_or("n/a".to_string(), |v| format!("{v:.4}"));
                    let _ = write!(row, " | {lp:>10} {:>10.4}", c.fid);
                }
                None => row.push_str(" |        n/a        n/a"),
            }
        }
        let _ = writeln!(out, "{row}");
    }
    if let Some(p) = &report.leakage {
        let _ = writeln!(
            out,
            "\nleakage probe accuracy {:.4} (chance {:.4}, n = {})",
            p.accuracy, p.chance, p.test_size
        );
    }
    let _ = writeln!(
        out,
        "extractor {}, seed {}, repeats {}",
        m.extractor, m.seed, m.num_repeats
    );
    out
}

/// `[C, H, W]` in `[-1, 1]` to an 8-bit PNG.
pub fn write_png(t: &Tensor, path: &Path) -> Result<()> {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let hw = h * w;
    let mut px = vec![0u8; c * hw];
    for p in 0..hw {
        for ch in 0..c {
            px[p * c + ch] = denormalize_u8(t.data()[ch * hw + p]);
        }
    }
    let color = if c == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, &px, w as u32, h as u32, color, image::ImageFormat::Png).map_err(|e| {
        Error::Image {
            path: path.into(),
            message: e.to_string(),
        }
    })
}

/// Comparison grid: the top row holds the content images, the left column
/// the style references; cell `(i, j)` renders content `j` with style `i`.
pub fn comparison_grid(model: &Model, contents: &[Image], styles: &[(Image, DomainLabel)]) -> Result<Tensor> {
    let first = contents
        .first()
        .ok_or_else(|| Error::Usage("grid needs at least one content image".into()))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let (rows, cols) = (styles.len() + 1, contents.len() + 1);
    let mut canvas = Tensor::full(&[c, rows * h, cols * w], 1.0);
    let (gh, gw) = (rows * h, cols * w);
    let mut blit = |img: &Tensor, r: usize, col: usize| {
        let d = canvas.data_mut();
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    d[ch * gh * gw + (r * h + y) * gw + col * w + x] = img.data()[(ch * h + y) * w + x];
                }
            }
        }
    };
    for (j, x) in contents.iter().enumerate() {
        blit(x.tensor(), 0, j + 1);
    }
    for (i, (s, y)) in styles.iter().enumerate() {
        blit(s.tensor(), i + 1, 0);
        for (j, x) in contents.iter().enumerate() {
            let out = translate_reference(model, x, s, *y)?;
            blit(out.tensor(), i + 1, j + 1);
        }
    }
    Ok(canvas)
}
