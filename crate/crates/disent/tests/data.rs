use std::path::Path;

use disent::data::*;
use disent_core::synthetic::{bytes_to_tensor, foreground_centroid, hue_distance, mean_hue, SyntheticFactorSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solid_png(path: &Path, value: u8, size: u32) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    image::RgbImage::from_pixel(size, size, image::Rgb([value; 3]))
        .save(path)
        .unwrap();
}

/// `domains` directories with `per` PNG files each.
fn tree(root: &Path, domains: &[&str], per: usize) {
    for (d, name) in domains.iter().enumerate() {
        for i in 0..per {
            solid_png(&root.join(name).join(format!("img{i:02}.png")), (d * 40 + i) as u8, 4);
        }
    }
}

#[test]
fn scan_counts_splits_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    tree(dir.path(), &["a", "b", "c"], 10);
    let m = scan_dataset(dir.path(), 2).unwrap();
    assert_eq!((m.count(Split::Train), m.count(Split::Test)), (24, 6));
    assert_eq!(m.domains, ["a", "b", "c"]);
    let tests: Vec<_> = m
        .entries
        .iter()
        .filter(|e| e.split == Split::Test)
        .map(|e| e.path.clone())
        .collect();
    assert_eq!(tests[0], Path::new("a").join("img08.png"));
    assert_eq!(scan_dataset(dir.path(), 2).unwrap(), m);
    let all_train = scan_dataset(dir.path(), 0).unwrap();
    assert_eq!(all_train.count(Split::Train), 30);
}

#[test]
fn scan_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    tree(dir.path(), &["a"], 2);
    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    let err = scan_dataset(dir.path(), 0).unwrap_err().to_string();
    assert!(err.contains("empty"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    tree(dir.path(), &["a"], 2);
    std::fs::write(dir.path().join("a").join("broken.png"), b"not a png").unwrap();
    let err = scan_dataset(dir.path(), 0).unwrap_err().to_string();
    assert!(err.contains("broken.png"), "{err}");
}

#[test]
fn manifest_round_trips_through_file() {
    let dir = tempfile::tempdir().unwrap();
    tree(&dir.path().join("data"), &["x", "y"], 3);
    let m = scan_dataset(&dir.path().join("data"), 1).unwrap();
    let path = dir.path().join("m.tsv");
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}

#[test]
fn aggregation_examples() {
    let dir = tempfile::tempdir().unwrap();
    let species = [
        "California_Gull",
        "Downy_Woodpecker",
        "Herring_Gull",
        "Red_headed_Woodpecker",
    ];
    tree(dir.path(), &species, 2);
    let m = scan_dataset(dir.path(), 0).unwrap();

    let map = AggregationMap::parse("*Gull* -> Gull\n*Woodpecker* -> Woodpecker\n").unwrap();
    let agg = apply_aggregation(&m, &map).unwrap();
    assert_eq!(agg.domains, ["Gull", "Woodpecker"]);
    assert_eq!(agg.entries.len(), m.entries.len());
    let labels: Vec<usize> = agg.entries.iter().map(|e| e.domain).collect();
    assert_eq!(labels, [0, 0, 1, 1, 0, 0, 1, 1]);
    assert!(agg
        .entries
        .iter()
        .zip(&m.entries)
        .all(|(a, b)| a.path == b.path && a.split == b.split));

    let identity = AggregationMap::parse(&species.iter().map(|s| format!("{s} -> {s}\n")).collect::<String>()).unwrap();
    assert_eq!(apply_aggregation(&m, &identity).unwrap(), m);

    let partial = AggregationMap::parse("*Gull* -> Gull\n").unwrap();
    let err = apply_aggregation(&m, &partial).unwrap_err().to_string();
    assert!(
        err.contains("Downy_Woodpecker") && err.contains("Red_headed_Woodpecker"),
        "{err}"
    );
}

#[test]
fn shipped_cub_map_covers_any_name() {
    let map = AggregationMap::parse(CUB_AGGREGATION).unwrap();
    assert_eq!(map.resolve("059.California_Gull"), Some("Gull"));
    assert!(map.resolve("999.Unheard_Of_Bird").is_some());
}

#[test]
fn batch_loading_hits_normalization_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    solid_png(&dir.path().join("k").join("black.png"), 0, 6);
    solid_png(&dir.path().join("w").join("white.png"), 255, 6);
    let m = scan_dataset(dir.path(), 0).unwrap();
    let (t, labels) = load_batch::<ChaCha8Rng>(&m, &[0, 1], 6, 3, None).unwrap();
    assert_eq!(labels, [0, 1]);
    let half = t.len() / 2;
    assert!(t.data()[..half].iter().all(|&v| v == -1.0));
    assert!(t.data()[half..].iter().all(|&v| v == 1.0));
    let again = load_batch::<ChaCha8Rng>(&m, &[0, 1], 6, 3, None).unwrap().0;
    assert_eq!(again, t);
    let flipped = load_batch(&m, &[0, 1], 6, 3, Some(&mut ChaCha8Rng::seed_from_u64(0)))
        .unwrap()
        .0;
    assert_eq!(flipped, t);
}

#[test]
fn synthetic_output_matches_its_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticFactorSpec {
        num_domains: 3,
        image_size: 32,
        samples_per_domain: 8,
        seed: 4,
    };
    let (m, rows) = generate_synthetic(&spec, dir.path()).unwrap();
    assert_eq!(m.entries.len(), 24);
    assert_eq!(read_ledger(&dir.path().join(LEDGER_FILE)).unwrap(), rows);
    for (path, f) in &rows {
        let bytes = load_image_bytes(&dir.path().join(path), 32, 3).unwrap();
        // planar bytes back to interleaved for the shared decoder
        let hw = 32 * 32;
        let inter: Vec<u8> = (0..hw)
            .flat_map(|p| (0..3).map(move |c| (c, p)))
            .map(|(c, p)| bytes[c * hw + p])
            .collect();
        let img = bytes_to_tensor(&inter, 32);
        let (cx, cy) = foreground_centroid(&img).unwrap();
        assert!((cx - f.pos_x * 32.0).hypot(cy - f.pos_y * 32.0) < 1.0, "{path:?}");
        assert!(hue_distance(mean_hue(&img).unwrap(), f.hue) < 0.02, "{path:?}");
    }

    let empty = tempfile::tempdir().unwrap();
    let spec0 = SyntheticFactorSpec {
        samples_per_domain: 0,
        ..spec
    };
    let (m0, rows0) = generate_synthetic(&spec0, empty.path()).unwrap();
    assert!(m0.entries.is_empty() && rows0.is_empty());
    assert!(read_ledger(&empty.path().join(LEDGER_FILE)).unwrap().is_empty());
}
