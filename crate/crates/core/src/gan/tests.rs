use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{synth_bearing, Dataset, SynthSpec, ZScore};
use crate::ndcore::{Tape, Tensor, Var};
use crate::physics::{BearingGeometry, SpallGrowthConfig, SpallModel};

fn sigmoidal(i: f64) -> f64 {
    let e = 4.5f64.exp();
    ((1.0 + e) / (1.0 + (-9.0 * (i - 0.5)).exp()) - 1.0) / (e - 1.0)
}

fn model() -> SpallModel {
    let geom = BearingGeometry::new(0.0715, 0.0084, 2000.0 / 60.0, 20_000.0, 0.0).unwrap();
    SpallModel::new(geom, SpallGrowthConfig::default()).unwrap()
}

fn head_values(tape: &mut Tape, values: Vec<f64>, width: usize) -> Var {
    let batch = values.len() / width;
    tape.constant(Tensor::new(vec![batch, width], values).unwrap())
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        assert_eq!(Variant::from_tag(v.tag()), Some(v));
    }
    assert_eq!("PhyzzyGAN".parse::<Variant>().unwrap(), Variant::PhyzzyGan);
    let err = "gan".parse::<Variant>().unwrap_err().to_string();
    for name in ["cgan", "fuzzygan", "physicgan", "phyzzygan"] {
        assert!(err.contains(name));
    }
}

#[test]
fn head_widths() {
    let p = crate::fuzzy::FuzzyPartition::default();
    assert_eq!(Variant::FuzzyGan.head_width(&p), 40);
    assert_eq!(Variant::PhyzzyGan.head_width(&p), 40);
    assert_eq!(Variant::Cgan.head_width(&p), 1);
    assert_eq!(Variant::PhysiCgan.head_width(&p), 1);
    assert_eq!(p.implication_width(), 16);
}

#[test]
fn fuzzy_head_examples() {
    let p = crate::fuzzy::FuzzyPartition::default();
    let mut tape = Tape::new();
    let ones = head_values(&mut tape, vec![1.0; 40], 40);
    let i = fuzzy_head(&mut tape, ones, &p).unwrap();
    assert_eq!(tape.shape(i), &[1, 16]);
    assert!(tape.value(i).data().iter().all(|&v| (v - 1.0).abs() < 1e-12));

    let halves = head_values(&mut tape, vec![0.5; 40], 40);
    let i = fuzzy_head(&mut tape, halves, &p).unwrap();
    // T = 0.25, S = 0.75, I_RC = 1 − T + T·S = 0.9375.
    let expected = sigmoidal(0.9375);
    assert!(tape.value(i).data().iter().all(|&v| (v - expected).abs() < 1e-12));
}

#[test]
fn uneven_partition_tiles_to_widest_block() {
    let p = crate::fuzzy::FuzzyPartition::new(2, 3, 1, 4).unwrap();
    let head: Vec<f64> = (0..10).map(|i| 0.05 + 0.09 * i as f64).collect();
    let mut tape = Tape::new();
    let h = head_values(&mut tape, head.clone(), 10);
    let i = fuzzy_head(&mut tape, h, &p).unwrap();
    assert_eq!(tape.shape(i), &[1, 4]);
    let (a, b, c, d) = (&head[0..2], &head[2..5], &head[5..6], &head[6..10]);
    for n in 0..4 {
        let t = a[n % 3 % 2] * b[n % 3];
        let (cv, dv) = (c[0], d[n]);
        let s = cv + dv - cv * dv;
        let want = sigmoidal(1.0 - t + t * s);
        assert!((tape.value(i).data()[n] - want).abs() < 1e-12, "element {n}");
    }
}

#[test]
fn predict_examples() {
    let p = crate::fuzzy::FuzzyPartition::default();
    let m = model();
    let mut tape = Tape::new();
    let ones = head_values(&mut tape, vec![1.0; 40], 40);
    let y = predict(&mut tape, ones, Variant::FuzzyGan, &p, None, &[0.0]).unwrap();
    assert!((tape.value(y).data()[0] - 1.0).abs() < 1e-12);

    // Weight w from a non-trivial head; choose sp so that w·l_max / l_o hits
    // 1 (zero life) and e (one e-folding of growth).
    let head: Vec<f64> = (0..40).map(|i| 0.9 + 0.002 * i as f64).collect();
    let w = predict_values(&head, Variant::FuzzyGan, &p, None, 0.0).unwrap();
    let per_sample = m.spall_width(1.0);
    let sp_zero = w * m.l_max() / per_sample;
    let sp_e = w * m.l_max() / std::f64::consts::E / per_sample;
    let h = head_values(&mut tape, [head.clone(), head.clone()].concat(), 40);
    let y = predict(&mut tape, h, Variant::PhyzzyGan, &p, Some(&m), &[sp_zero, sp_e]).unwrap();
    let y = tape.value(y).data().to_vec();
    assert!(y[0].abs() < 1e-9);
    let oracle = 1.0 / 1.001f64.ln() / 6324.0;
    assert!((y[1] - oracle).abs() / oracle < 1e-9, "{} vs {oracle}", y[1]);
    assert!((oracle - 0.15821).abs() < 5e-6);

    // Scalar and graph paths agree for every variant.
    for v in Variant::ALL {
        let width = v.head_width(&p);
        let h = head_values(&mut tape, head[..width].to_vec(), width);
        let g = predict(&mut tape, h, v, &p, Some(&m), &[150.0]).unwrap();
        let s = predict_values(&head[..width], v, &p, Some(&m), 150.0).unwrap();
        assert!((tape.value(g).data()[0] - s).abs() < 1e-12, "{v}");
    }
}

#[test]
fn physics_variants_need_a_model() {
    let p = crate::fuzzy::FuzzyPartition::default();
    let mut tape = Tape::new();
    let h = head_values(&mut tape, vec![0.5], 1);
    assert!(matches!(
        predict(&mut tape, h, Variant::PhysiCgan, &p, None, &[1.0]),
        Err(GanError::MissingPhysics { .. })
    ));
}

#[test]
fn loss_examples() {
    let mut tape = Tape::new();
    let half = tape.constant(Tensor::vector(vec![0.5]));
    let d = discriminator_loss(&mut tape, half, half).unwrap();
    assert!((tape.value(d).data()[0] - 2.0 * 2f64.ln()).abs() < 1e-12);
    let g = generator_loss(&mut tape, half).unwrap();
    assert!((tape.value(g).data()[0] - 2f64.ln()).abs() < 1e-12);
    assert!(bce(1.0, 1.0) < 1e-6);
    assert!(bce(0.0, 0.0) < 1e-6);
    assert!((bce(0.5, 1.0) - 2f64.ln()).abs() < 1e-12);
    assert!(bce(0.0, 1.0).is_finite());
}

fn tiny_config() -> GanConfig {
    GanConfig {
        noise_dim: 4,
        noise_projection: 4,
        conv_channels: vec![3, 4],
        conv_kernel: 8,
        conv_stride: 4,
        hidden: vec![8],
        epochs: 2,
        batch_size: 8,
        lr_generator: 1e-3,
        lr_discriminator: 1e-3,
        ..GanConfig::default()
    }
}

fn tiny_dataset() -> (Dataset, ZScore) {
    let spec = SynthSpec {
        length: 32,
        window_len: 256,
        initial_sp: 20.0,
        entry_min: 40,
        entry_max: 60,
        growth_rate: 0.01,
        label_t_max: 40.0,
        ..SynthSpec::default()
    };
    let out = synth_bearing(&spec, 5).unwrap();
    let sp: Vec<f64> = out.truth.iter().map(|t| t.sp.unwrap() as f64).collect();
    let y: Vec<f64> = out.truth.iter().map(|t| t.rul).collect();
    let scaler = ZScore::fit(out.windows.iter().map(Vec::as_slice), 1).unwrap();
    (Dataset::from_windows(out.windows, 1, 20_000.0, &sp, &y).unwrap(), scaler)
}

#[test]
fn generator_output_range_and_determinism() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Generator::new(&cfg, Variant::FuzzyGan, 1, &mut rng).unwrap();
    let (data, scaler) = tiny_dataset();
    let indices: Vec<usize> = (0..8).collect();
    let set = TrainingSet {
        dataset: &data,
        indices: &indices,
        scaler: &scaler,
    };
    let batch = set.batch(&[0, 1, 2, 3]).unwrap();
    let run = || {
        let mut tape = Tape::new();
        let vars = g.bind(&mut tape, false);
        let x = tape.constant(batch.x.clone());
        let z = tape.constant(Tensor::full(&[4, 4], 0.3));
        let head = g.forward(&mut tape, &vars, x, z).unwrap();
        tape.value(head).clone()
    };
    let a = run();
    assert_eq!(a.shape(), &[4, 40]);
    assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(a, run());
}

#[test]
fn training_smoke_and_determinism() {
    let (data, scaler) = tiny_dataset();
    let indices: Vec<usize> = (0..32).collect();
    let set = TrainingSet {
        dataset: &data,
        indices: &indices,
        scaler: &scaler,
    };
    let m = model();
    for v in Variant::ALL {
        let a = train(&set, v, &tiny_config(), Some(&m), 11).unwrap();
        assert_eq!(a.report.epochs.len(), 2);
        assert!(a
            .report
            .epochs
            .iter()
            .all(|e| e.generator.is_finite() && e.discriminator.is_finite()));
        let b = train(&set, v, &tiny_config(), Some(&m), 11).unwrap();
        assert_eq!(a.report.epochs, b.report.epochs, "{v}");
        assert_eq!(a.generator, b.generator);
    }
}

#[test]
fn training_rejects_missing_physics() {
    let (data, scaler) = tiny_dataset();
    let indices: Vec<usize> = (0..32).collect();
    let set = TrainingSet {
        dataset: &data,
        indices: &indices,
        scaler: &scaler,
    };
    assert!(matches!(
        train(&set, Variant::PhyzzyGan, &tiny_config(), None, 0),
        Err(GanError::MissingPhysics { .. })
    ));
}

#[test]
fn params_round_trip() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Generator::new(&cfg, Variant::PhyzzyGan, 2, &mut rng).unwrap();
    let d = Discriminator::new(&cfg, 2, &mut rng).unwrap();
    let mut buf = Vec::new();
    write_params(&mut buf, Variant::PhyzzyGan, &g.params, &d.params).unwrap();
    assert_eq!(&buf[..8], PARAMS_MAGIC);
    let (v, gp, dp) = read_params(&mut buf.as_slice()).unwrap();
    assert_eq!(v, Variant::PhyzzyGan);
    assert_eq!(Generator::from_params(&cfg, v, 2, gp).unwrap(), g);
    assert_eq!(Discriminator::from_params(&cfg, 2, dp).unwrap(), d);

    assert!(read_params(&mut &buf[..buf.len() - 3]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_params(&mut bad.as_slice()).is_err());
    // Parameters for a different architecture are rejected.
    let (_, gp, _) = read_params(&mut buf.as_slice()).unwrap();
    assert!(Generator::from_params(&cfg, Variant::Cgan, 2, gp).is_err());
}

#[test]
fn window_too_short_for_extractor() {
    let cfg = GanConfig::default();
    assert_eq!(cfg.feature_length(20_480), Some(3));
    assert_eq!(cfg.feature_length(100), None);
}

#[test]
fn evaluate_matches_predictions() {
    let (data, scaler) = tiny_dataset();
    let indices: Vec<usize> = (20..32).collect();
    let set = TrainingSet {
        dataset: &data,
        indices: &indices,
        scaler: &scaler,
    };
    let m = model();
    let cfg = tiny_config();
    let trained = train(&set, Variant::PhyzzyGan, &cfg, Some(&m), 2).unwrap();
    let y_hat = predict_dataset(&trained.generator, &set, Variant::PhyzzyGan, &cfg, Some(&m), cfg.eval_seed).unwrap();
    let errors: Vec<f64> = indices.iter().zip(&y_hat).map(|(&i, p)| data.sample(i).y - p).collect();
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / 12.0;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / 12.0;
    let (got_mae, got_mse) = evaluate(&trained.generator, &set, Variant::PhyzzyGan, &cfg, Some(&m)).unwrap();
    assert!((got_mae - mae).abs() < 1e-15 && (got_mse - mse).abs() < 1e-15);
}
