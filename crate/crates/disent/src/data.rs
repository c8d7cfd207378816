//! Image folders, manifests, coarse-domain aggregation and the synthetic generator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::Rng;

use disent_core::synthetic::{render, sample_factors, Factors, SyntheticFactorSpec, Texture};
use disent_core::training::Dataset;
use disent_core::types::normalize_u8;
use disent_core::Tensor;

use crate::error::{io_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest root.
    pub path: PathBuf,
    pub domain: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub domains: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.into(),
            message: e.to_string(),
        })
}

/// One domain per subdirectory of `root`, files in lexicographic order; the
/// last `test_per_domain` files of every domain form the test split.
pub fn scan_dataset(root: &Path, test_per_domain: usize) -> Result<DatasetManifest> {
    let root = &root.canonicalize().map_err(io_err(root))?;
    let mut domains = Vec::new();
    let mut entries = Vec::new();
    for dir in sorted_children(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let files: Vec<PathBuf> = sorted_children(&dir)?
            .into_iter()
            .filter(|p| p.is_file() && is_image(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Core(disent_core::Error::Dataset(format!(
                "domain directory `{name}` has no images"
            ))));
        }
        let d = domains.len();
        let n_test = test_per_domain.min(files.len());
        for (i, f) in files.iter().enumerate() {
            decode(f)?;
            let split = if i >= files.len() - n_test {
                Split::Test
            } else {
                Split::Train
            };
            entries.push(ManifestEntry {
                path: f.strip_prefix(root).unwrap().to_path_buf(),
                domain: d,
                split,
            });
        }
        domains.push(name);
    }
    if domains.is_empty() {
        return Err(Error::Core(disent_core::Error::Dataset(format!(
            "{} has no domain directories",
            root.display()
        ))));
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        domains,
        entries,
    })
}

impl DatasetManifest {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].split == split)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Text form: `root`, `domain` and tab-separated `entry` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# disent manifest\n");
        let _ = writeln!(out, "root\t{}", self.root.display());
        for d in &self.domains {
            let _ = writeln!(out, "domain\t{d}");
        }
        for e in &self.entries {
            let _ = writeln!(out, "entry\t{}\t{}\t{}", e.split.name(), e.domain, e.path.display());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut root = None;
        let mut domains = Vec::new();
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                line: i + 1,
                key: line.split('\t').next().unwrap_or("").into(),
                message: m.into(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["root", r] => root = Some(PathBuf::from(r)),
                ["domain", d] => domains.push(d.to_string()),
                ["entry", split, d, path] => {
                    let split = match *split {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        _ => return Err(bad("split must be train or test")),
                    };
                    let domain: usize = d.parse().map_err(|_| bad("domain index is not an integer"))?;
                    if domain >= domains.len() {
                        return Err(bad("domain index out of range"));
                    }
                    entries.push(ManifestEntry {
                        path: PathBuf::from(path),
                        domain,
                        split,
                    });
                }
                _ => return Err(bad("unrecognized manifest line")),
            }
        }
        let root = root.ok_or_else(|| Error::Parse {
            line: 0,
            key: "root".into(),
            message: "missing".into(),
        })?;
        Ok(Self { root, domains, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

/// Ordered `pattern -> coarse` rules; the first matching rule wins.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationMap {
    pub rules: Vec<(String, String)>,
}

/// `*` matches any run of characters, everything else is literal.
pub fn wildcard_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || text.len() < first.len() + last.len() || !text.ends_with(last) {
        return false;
    }
    let mut rest = &text[first.len()..text.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(at) => rest = &rest[at + mid.len()..],
            None => return false,
        }
    }
    true
}

impl AggregationMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (p, c) = line.split_once("->").ok_or_else(|| Error::Parse {
                line: i + 1,
                key: line.into(),
                message: "expected `pattern -> coarse_name`".into(),
            })?;
            rules.push((p.trim().to_string(), c.trim().to_string()));
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn resolve(&self, fine: &str) -> Option<&str> {
        self.rules
            .iter()
            .find(|(p, _)| wildcard_match(p, fine))
            .map(|(_, c)| c.as_str())
    }
}

/// Relabels entries to coarse domains, ordered by first appearance over the fine domains.
pub fn apply_aggregation(manifest: &DatasetManifest, map: &AggregationMap) -> Result<DatasetManifest> {
    let unmatched: Vec<&str> = manifest
        .domains
        .iter()
        .filter(|d| map.resolve(d).is_none())
        .map(String::as_str)
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::Core(disent_core::Error::Invalid(format!(
            "no aggregation rule matches: {}",
            unmatched.join(", ")
        ))));
    }
    let mut coarse: Vec<String> = Vec::new();
    let mut remap = Vec::with_capacity(manifest.domains.len());
    for d in &manifest.domains {
        let c = map.resolve(d).unwrap();
        let idx = coarse.iter().position(|x| x == c).unwrap_or_else(|| {
            coarse.push(c.to_string());
            coarse.len() - 1
        });
        remap.push(idx);
    }
    let entries = manifest
        .entries
        .iter()
        .map(|e| ManifestEntry {
            domain: remap[e.domain],
            ..e.clone()
        })
        .collect();
    Ok(DatasetManifest {
        root: manifest.root.clone(),
        domains: coarse,
        entries,
    })
}

/// Decodes one file to `[C, size, size]` bytes (planar), resizing when needed.
pub fn load_image_bytes(path: &Path, size: usize, channels: usize) -> Result<Vec<u8>> {
    let img = decode(path)?;
    let img = if img.width() as usize != size || img.height() as usize != size {
        img.resize_exact(size as u32, size as u32, FilterType::Triangle)
    } else {
        img
    };
    let hw = size * size;
    let mut out = vec![0u8; channels * hw];
    match channels {
        1 => out.copy_from_slice(img.to_luma8().as_raw()),
        3 => {
            let rgb = img.to_rgb8();
            for (p, px) in rgb.as_raw().chunks_exact(3).enumerate() {
                for c in 0..3 {
                    out[c * hw + p] = px[c];
                }
            }
        }
        _ => return Err(Error::Usage(format!("unsupported channel count {channels}"))),
    }
    Ok(out)
}

pub fn load_image(path: &Path, size: usize, channels: usize) -> Result<Tensor> {
    let bytes = load_image_bytes(path, size, channels)?;
    Ok(Tensor::new(
        &[channels, size, size],
        bytes.into_iter().map(normalize_u8).collect(),
    ))
}

/// Decoded batch `[N, C, size, size]` in `[-1, 1]` plus labels. With `flip`,
/// each image is mirrored with probability 1/2 using the given stream.
pub fn load_batch<R: Rng>(
    manifest: &DatasetManifest,
    indices: &[usize],
    size: usize,
    channels: usize,
    mut flip: Option<&mut R>,
) -> Result<(Tensor, Vec<usize>)> {
    let mut images = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let e = manifest
            .entries
            .get(i)
            .ok_or_else(|| Error::Usage(format!("manifest index {i} out of range")))?;
        let mut t = load_image(&manifest.root.join(&e.path), size, channels)?;
        if let Some(rng) = flip.as_deref_mut() {
            if rng.random::<bool>() {
                let w = size;
                let src = t.clone();
                for (row_out, row_in) in t.data_mut().chunks_mut(w).zip(src.data().chunks(w)) {
                    for x in 0..w {
                        row_out[x] = row_in[w - 1 - x];
                    }
                }
            }
        }
        images.push(t);
        labels.push(e.domain);
    }
    Ok((Tensor::stack(&images), labels))
}

/// Loads one split into memory as 8-bit planes.
pub fn load_split(manifest: &DatasetManifest, split: Split, size: usize, channels: usize) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for e in manifest.entries.iter().filter(|e| e.split == split) {
        images.push(load_image_bytes(&manifest.root.join(&e.path), size, channels)?);
        labels.push(e.domain);
    }
    Ok(Dataset::from_bytes(
        [channels, size, size],
        images,
        labels,
        manifest.domains.clone(),
    )?)
}

pub const LEDGER_FILE: &str = "ledger.csv";
pub const LEDGER_HEADER: [&str; 7] = ["filename", "domain", "pos_x", "pos_y", "rotation", "hue", "texture"];

/// Writes `<out>/<domain>/<domain>_<i>.png` for every sampled image plus
/// `<out>/ledger.csv`. Filenames in the ledger are relative to `out`.
pub fn generate_synthetic(
    spec: &SyntheticFactorSpec,
    out: &Path,
) -> Result<(DatasetManifest, Vec<(PathBuf, Factors)>)> {
    let factors = sample_factors(spec)?;
    let domains: Vec<String> = (0..spec.num_domains).map(|d| spec.domain_name(d)).collect();
    for d in &domains {
        let dir = out.join(d);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut entries = Vec::with_capacity(factors.len());
    let mut ledger = Vec::with_capacity(factors.len());
    for (i, f) in factors.into_iter().enumerate() {
        let rel = PathBuf::from(&domains[f.domain]).join(format!(
            "{}_{:05}.png",
            domains[f.domain],
            i % spec.samples_per_domain.max(1)
        ));
        let path = out.join(&rel);
        let px = render(&f, spec.image_size);
        let s = spec.image_size as u32;
        image::save_buffer_with_format(
            &path,
            &px,
            s,
            s,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
        entries.push(ManifestEntry {
            path: rel.clone(),
            domain: f.domain,
            split: Split::Train,
        });
        ledger.push((rel, f));
    }
    write_ledger(&out.join(LEDGER_FILE), &ledger)?;
    Ok((
        DatasetManifest {
            root: out.to_path_buf(),
            domains,
            entries,
        },
        ledger,
    ))
}

pub fn write_ledger(path: &Path, rows: &[(PathBuf, Factors)]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io {
        path: path.into(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(LEDGER_HEADER).map_err(csv_err)?;
    for (p, f) in rows {
        w.write_record([
            p.to_string_lossy().into_owned(),
            f.domain.to_string(),
            f.pos_x.to_string(),
            f.pos_y.to_string(),
            f.rotation.to_string(),
            f.hue.to_string(),
            f.texture.name().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_ledger(path: &Path) -> Result<Vec<(PathBuf, Factors)>> {
    let csv_err = |e: csv::Error| Error::Io {
        path: path.into(),
        source: std::io::Error::other(e),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |k: &str| Error::Parse {
            line: i + 2,
            key: k.into(),
            message: "invalid value".into(),
        };
        let num = |k: usize| {
            rec.get(k)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad(LEDGER_HEADER[k]))
        };
        out.push((
            PathBuf::from(rec.get(0).ok_or_else(|| bad("filename"))?),
            Factors {
                domain: rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("domain"))?,
                pos_x: num(2)?,
                pos_y: num(3)?,
                rotation: num(4)?,
                hue: num(5)?,
                texture: rec.get(6).and_then(Texture::parse).ok_or_else(|| bad("texture"))?,
            },
        ));
    }
    Ok(out)
}

/// Non-canonical CUB-200 coarse grouping by species-name substrings.
pub const CUB_AGGREGATION: &str = include_str!("../data/cub_coarse.txt");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcards() {
        assert!(wildcard_match("*Gull*", "059.California_Gull"));
        assert!(wildcard_match("a*c", "abbc"));
        assert!(!wildcard_match("a*c", "abcd"));
        assert!(wildcard_match("*", ""));
        assert!(wildcard_match("exact", "exact"));
        assert!(!wildcard_match("ab*ba", "aba"));
    }

    #[test]
    fn cub_map_parses() {
        let map = AggregationMap::parse(CUB_AGGREGATION).unwrap();
        assert_eq!(map.resolve("062.Herring_Gull"), Some("Gull"));
        assert_eq!(map.resolve("190.Red_cockaded_Woodpecker"), Some("Woodpecker"));
    }

    #[test]
    fn manifest_text_round_trips() {
        let m = DatasetManifest {
            root: "/data/x".into(),
            domains: vec!["cat".into(), "dog".into()],
            entries: vec![
                ManifestEntry {
                    path: "cat/a.png".into(),
                    domain: 0,
                    split: Split::Train,
                },
                ManifestEntry {
                    path: "dog/b.jpg".into(),
                    domain: 1,
                    split: Split::Test,
                },
            ],
        };
        assert_eq!(DatasetManifest::from_text(&m.to_text()).unwrap(), m);
    }
}
