use std::path::Path;

use phyzzy::data::*;
use proptest::prelude::*;
use tempfile::TempDir;

fn matrix(rows: usize, channels: usize, seed: usize) -> Vec<f64> {
    (0..rows * channels)
        .map(|i| ((i * 7919 + seed * 104_729) % 2001) as f64 / 1000.0 - 1.0)
        .collect()
}

fn write_dir(dir: &Path, names: &[&str], rows: usize, channels: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for (k, name) in names.iter().enumerate() {
        write_ims_file(&dir.join(name), &matrix(rows, channels, k), channels).unwrap();
    }
}

const NAMES: [&str; 3] = ["2004.02.12.10.52.39", "2004.02.12.10.32.39", "2004.02.12.10.42.39"];

#[test]
fn ingests_well_formed_four_channel_directory() {
    let tmp = TempDir::new().unwrap();
    write_dir(tmp.path(), &NAMES, IMS_ROWS, 4);
    let record = ingest_ims(tmp.path(), &IngestOptions::default()).unwrap();
    assert_eq!(record.len(), 3);
    assert_eq!(record.channels(), 4);
    assert_eq!(record.raw_channels, 4);
    // Sorted by timestamp, not by directory order.
    assert_eq!(record.files, vec![NAMES[1], NAMES[2], NAMES[0]]);
}

#[test]
fn rejects_short_file_by_name() {
    let tmp = TempDir::new().unwrap();
    write_dir(tmp.path(), &NAMES[..2], IMS_ROWS, 4);
    write_ims_file(&tmp.path().join(NAMES[2]), &matrix(IMS_ROWS - 1, 4, 9), 4).unwrap();
    let err = ingest_ims(tmp.path(), &IngestOptions::default()).unwrap_err();
    assert!(matches!(err, DataError::RowCount { actual: 20_479, .. }));
    assert!(err.to_string().contains(NAMES[2]));
}

#[test]
fn rejects_malformed_rows_with_line_number() {
    let tmp = TempDir::new().unwrap();
    const BAD: &str = NAMES[0];
    write_dir(tmp.path(), &NAMES[1..2], 8, 4);
    std::fs::write(tmp.path().join(BAD), "0.1\t0.2\t0.3\t0.4\n0.1\tx\t0.3\t0.4\n").unwrap();
    let options = IngestOptions {
        rows: 8,
        ..IngestOptions::default()
    };
    let err = ingest_ims(tmp.path(), &options).unwrap_err().to_string();
    assert!(err.contains(BAD) && err.contains(":2:"), "{err}");

    std::fs::write(tmp.path().join(BAD), "0.1\t0.2\t0.3\n".repeat(8)).unwrap();
    let err = ingest_ims(tmp.path(), &options).unwrap_err();
    assert!(matches!(err, DataError::ChannelCount { expected: 4, actual: 3, .. }), "{err:?}");
}

#[test]
fn eight_channel_layout_pairs_into_bearings() {
    let tmp = TempDir::new().unwrap();
    write_dir(tmp.path(), &NAMES[..1], 16, 8);
    let options = IngestOptions {
        rows: 16,
        ..IngestOptions::default()
    };
    let record = ingest_ims(tmp.path(), &options).unwrap();
    let sources: Vec<Vec<usize>> = record.channel_map.iter().map(|g| g.sources.clone()).collect();
    assert_eq!(sources, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
    assert_eq!(record.channel_map[3].name, "bearing4");

    let raw = matrix(16, 8, 0);
    let window = record.load_window(0).unwrap();
    assert_eq!(window.len(), 4 * 16);
    for r in 0..16 {
        let expected = (raw[r * 8 + 2] + raw[r * 8 + 3]) / 2.0;
        assert_eq!(window[16 + r], expected);
    }
}

#[test]
fn manifest_round_trip_and_relative_directories() {
    let tmp = TempDir::new().unwrap();
    let spec = SynthSpec {
        length: 12,
        ..SynthSpec::default()
    };
    let written = write_synthetic(&spec, 4, tmp.path()).unwrap();
    let loaded = Manifest::load(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.experiments[0].snapshots, 12);
    assert_eq!(loaded.label_t_max, written.label_t_max);
    // Files written by the generator ingest like any IMS directory.
    let options = IngestOptions {
        rows: spec.window_len,
        average_pairs: false,
        ..IngestOptions::default()
    };
    let ingested = ingest_ims(tmp.path(), &options).unwrap();
    assert_eq!(ingested.files, loaded.experiments[0].record.files);

    let truth = read_truth_csv(&tmp.path().join("truth.csv")).unwrap();
    let generated = synth_bearing(&spec, 4).unwrap();
    assert_eq!(truth, generated.truth);
    let first = loaded.experiments[0].record.load_window(0).unwrap();
    assert_eq!(first, generated.windows[0]);
}

#[test]
fn dataset_joins_sp_table() {
    let tmp = TempDir::new().unwrap();
    let spec = SynthSpec {
        length: 6,
        ..SynthSpec::default()
    };
    let manifest = write_synthetic(&spec, 1, tmp.path()).unwrap();
    let rows: Vec<SpRow> = (0..6)
        .map(|index| SpRow {
            experiment: "synthetic".into(),
            index,
            timestamp: String::new(),
            sp: 100 + index,
            valid: index != 2,
            reason: String::new(),
        })
        .collect();
    let mut manifest = manifest;
    manifest.experiments[0].record.directory = tmp.path().to_path_buf();
    let ds = Dataset::from_manifest(&manifest, Some(&rows)).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!(ds.sample(1).sp, 101.0);
    assert_eq!(ds.sample(2).sp, 0.0);
    assert!(!ds.sample(2).sp_valid);
    assert_eq!(ds.sample(5).y, 0.0);
    assert_eq!(ds.sample(0).y, 5.0 / spec.label_t_max);
    assert!(Dataset::from_manifest(&manifest, Some(&rows[..5])).is_err());

    let path = tmp.path().join("sp.csv");
    write_sp_csv(&path, &rows).unwrap();
    assert_eq!(read_sp_csv(&path).unwrap(), rows);
}

#[test]
fn standard_normal_channel_scales_to_unit() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let w: Vec<f64> = (0..20_000).map(|_| 3.0 + 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let z = ZScore::fit([w.as_slice()], 1).unwrap();
    let mut x = w.clone();
    z.apply(&mut x);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    assert!(mean.abs() < 0.05 && (std - 1.0).abs() < 0.05);
    // Refitting on the same data reproduces the statistics exactly.
    assert_eq!(ZScore::fit([w.as_slice()], 1).unwrap(), z);
}

proptest! {
    #[test]
    fn ims_text_round_trips(values in prop::collection::vec(-1e3f64..1e3, 12)) {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join(NAMES[0]);
        write_ims_file(&path, &values, 4).unwrap();
        prop_assert_eq!(read_ims_file(&path, Some(3), Some(4)).unwrap(), values);
    }

    #[test]
    fn labels_decrease_to_zero(len in 1usize..3000) {
        let y = label_rul(len, 6324.0).unwrap();
        prop_assert!(y.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(*y.last().unwrap(), 0.0);
        prop_assert!(y.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn split_partitions_samples(lengths in prop::collection::vec(1usize..60, 1..4), fraction in 0.05f64..0.95, seed: u64) {
        let spec = SplitSpec { train_fraction: fraction, seed, stratification: Stratification::None };
        let (train, test) = concat_split(&lengths, &spec).unwrap();
        let n: usize = lengths.iter().sum();
        prop_assert_eq!(train.len(), (fraction * n as f64).floor() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn scaling_inverts(values in prop::collection::vec(-50f64..50.0, 2..40)) {
        let mut values = values;
        values[0] += 1.0; // keep the channel non-constant
        let z = ZScore::fit([values.as_slice()], 1).unwrap();
        let mut x = values.clone();
        z.apply(&mut x);
        z.unapply(&mut x);
        for (a, b) in x.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()) * 10.0);
        }
    }
}
