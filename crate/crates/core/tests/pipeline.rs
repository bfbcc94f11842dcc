use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use romcast::forecast::{
    evaluate_ensemble, reconstruct_forecast, region_starts, rollout, rollout_from, timing_benchmark, Region,
};
use romcast::linalg::Matrix;
use romcast::neural::{dropout_mask, grad_check, Activation, Discriminator, LstmForecaster, Parameters};
use romcast::optim::{bce, mse, NadamConfig, NadamState};
use romcast::pca::{self, PcaBasis, Truncation};
use romcast::snapshots::{generate, GeneratorConfig, MinMaxScaler, SnapshotMatrix, TRACER};
use romcast::training::{
    discriminator_accuracy, discriminator_step, forward_batch, generator_step, grid_search, make_windows,
    train_adversarial, train_classic, AdversarialTerm, DiscriminatorInput, GridSpec, TrainConfig,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_generator() -> GeneratorConfig {
    GeneratorConfig {
        grid_nx: 16,
        grid_ny: 16,
        n_steps: 240,
        source_center: (5, 8),
        ..GeneratorConfig::default()
    }
}

fn small_scores(tau: usize) -> (PcaBasis, SnapshotMatrix, Matrix) {
    let snaps = generate(&small_generator()).unwrap();
    let tracer = snaps.field(TRACER).unwrap();
    let basis = pca::fit(tracer.data(), Truncation::Rank(tau)).unwrap();
    let scores = basis.project(tracer.data()).unwrap();
    (basis, tracer, scores)
}

fn scaled_dataset(scores: &Matrix, cfg: &TrainConfig) -> (MinMaxScaler, romcast::training::WindowedDataset) {
    let n = scores.rows();
    let split = ((n - cfg.time_lag) as f64 * cfg.train_fraction).floor() as usize;
    let scaler = MinMaxScaler::fit(&scores.take_rows(split + cfg.time_lag), 0.0, 1.0).unwrap();
    let ds = make_windows(&scaler.scale(scores).unwrap(), cfg.time_lag, cfg.train_fraction).unwrap();
    (scaler, ds)
}

fn param_bits<P: Parameters>(p: &P) -> Vec<u64> {
    p.param_slices().iter().flat_map(|s| s.iter().map(|v| v.to_bits())).collect()
}

#[test]
fn default_generator_shape_and_source_period() {
    let cfg = GeneratorConfig::default();
    let snaps = generate(&cfg).unwrap();
    assert_eq!((snaps.n(), snaps.m()), (600, 3072));

    // dominant period of the tracer at the source node, brute-force DFT
    let (sx, sy) = cfg.source_center;
    let node = sy * cfg.grid_nx + sx;
    let series: Vec<f64> = (0..snaps.n()).map(|t| snaps.data().get(t, node)).collect();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let n = series.len();
    let (mut best_k, mut best_power) = (0, 0.0);
    for k in 1..n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in series.iter().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            re += (v - mean) * phase.cos();
            im -= (v - mean) * phase.sin();
        }
        let power = re * re + im * im;
        if power > best_power {
            best_k = k;
            best_power = power;
        }
    }
    let period = n as f64 * cfg.dt / best_k as f64;
    assert!((period - cfg.source_period).abs() / cfg.source_period < 0.05, "period {period}");
}

#[test]
fn gradients_match_finite_differences_where_resolvable() {
    // Central differences carry roughly 1e-12 absolute cancellation error
    // at this step, so tiny gradients are compared in absolute terms.
    for seed in 0..5u64 {
        let mut r = rng(seed);
        let model = LstmForecaster::new(16, 32, Activation::Sigmoid, 0.3, 2, &mut r).unwrap();
        let disc = Discriminator::new(16, 32, &mut r).unwrap();
        let window = Matrix::from_vec(2, 16, (0..32).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let target: Vec<f64> = (0..16).map(|_| r.gen_range(0.0..1.0)).collect();
        let mask = dropout_mask(32, 0.3, &mut r);
        let tape = model.forward_with_mask(&window, Some(&mask)).unwrap();
        let row = |v: &[f64]| Matrix::from_vec(1, 16, v.to_vec()).unwrap();
        let (_, mut d_out) = mse(&tape.output, &target).unwrap();
        let dt = disc.forward(&row(&tape.output)).unwrap();
        let (_, dp) = bce(&[dt.prob], 1.0).unwrap();
        let mut scratch = disc.zeros_like();
        let dseq = disc.backward(&dt, dp[0], &mut scratch).unwrap();
        for (a, b) in d_out.iter_mut().zip(dseq.row(0)) {
            *a += b;
        }
        let mut g = model.zeros_like();
        model.backward(&tape, &d_out, &mut g).unwrap();
        let loss = |m: &LstmForecaster| {
            let out = m.forward_with_mask(&window, Some(&mask)).unwrap().output;
            mse(&out, &target).unwrap().0 + bce(&[disc.probability(&row(&out)).unwrap()], 1.0).unwrap().0
        };
        let grads: Vec<f64> = g.param_slices().iter().flat_map(|s| s.to_vec()).collect();
        let mut probe = model.clone();
        let mut flat = 0;
        let eps = 1e-5;
        let sizes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        for (s, &len) in sizes.iter().enumerate() {
            for i in (0..len).step_by(7) {
                let orig = model.param_slices()[s][i];
                probe.param_slices_mut()[s][i] = orig + eps;
                let up = loss(&probe);
                probe.param_slices_mut()[s][i] = orig - eps;
                let down = loss(&probe);
                probe.param_slices_mut()[s][i] = orig;
                let fd = (up - down) / (2.0 * eps);
                let a = grads[flat + i];
                if a.abs() >= 1e-5 {
                    assert!((a - fd).abs() / a.abs() < 1e-5, "seed {seed} slice {s} idx {i}: {a} vs {fd}");
                } else {
                    assert!((a - fd).abs() < 1e-9, "seed {seed} slice {s} idx {i}: {a} vs {fd}");
                }
            }
            flat += len;
        }
    }
}

#[test]
fn gradient_checker_reports_mse_forecaster_on_wide_step() {
    let mut r = rng(77);
    let model = LstmForecaster::new(3, 5, Activation::Linear, 0.5, 2, &mut r).unwrap();
    let window = Matrix::from_vec(2, 3, vec![0.2, -0.4, 0.9, 0.1, 0.5, -0.3]).unwrap();
    let target = [0.3, -0.2, 0.6];
    let mask = dropout_mask(5, 0.5, &mut r);
    let tape = model.forward_with_mask(&window, Some(&mask)).unwrap();
    let (_, d) = mse(&tape.output, &target).unwrap();
    let mut g = model.zeros_like();
    model.backward(&tape, &d, &mut g).unwrap();
    let loss = |m: &LstmForecaster| mse(&m.forward_with_mask(&window, Some(&mask)).unwrap().output, &target).unwrap().0;
    let rep = grad_check(&model, &g, loss, 100, 1e-4, &mut r);
    assert_eq!(rep.checked, 100);
    assert!(rep.max_relative_error < 1e-4, "{rep:?}");
}

#[test]
fn constant_dataset_is_learned_by_the_bias() {
    let scores = Matrix::from_vec(120, 3, [0.2, 0.5, 0.7].repeat(120)).unwrap();
    let ds = make_windows(&scores, 2, 0.9).unwrap();
    let cfg = TrainConfig { epochs: 200, hidden_nodes: 8, dropout: 0.0, seed: 3, ..TrainConfig::default() };
    let (_, report) = train_classic(&ds, &cfg).unwrap();
    let last = report.epochs.last().unwrap();
    assert!(last.train_mse < 1e-4, "final train mse {}", last.train_mse);
}

#[test]
fn optimizer_step_count_and_determinism() {
    let mut r = rng(9);
    let scores = Matrix::from_vec(90, 4, (0..360).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    let ds = make_windows(&scores, 2, 0.9).unwrap();
    let k_train = ds.train_indices().len();
    for batch in [k_train, 10, 32] {
        let cfg = TrainConfig { epochs: 1, batch_size: batch, hidden_nodes: 6, ..TrainConfig::default() };
        let (_, rep) = train_classic(&ds, &cfg).unwrap();
        assert_eq!(rep.optimizer_steps, k_train.div_ceil(batch) as u64);
    }
    let cfg = TrainConfig { epochs: 3, hidden_nodes: 6, seed: 5, ..TrainConfig::default() };
    let (a, ra) = train_classic(&ds, &cfg).unwrap();
    let (b, rb) = train_classic(&ds, &cfg).unwrap();
    assert_eq!(param_bits(&a), param_bits(&b));
    assert_eq!(ra.to_csv(), rb.to_csv());
    let (c, _) = train_classic(&ds, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(param_bits(&a), param_bits(&c));
}

#[test]
fn untrained_discriminator_loss_is_two_ln_two() {
    let mut r = rng(10);
    let scores = Matrix::from_vec(60, 4, (0..240).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    let ds = make_windows(&scores, 2, 0.9).unwrap();
    let mut disc = Discriminator::new(4, 6, &mut r).unwrap();
    // zero head weights: D outputs exactly 0.5
    disc.head.w.iter_mut().for_each(|w| *w = 0.0);
    disc.head.b[0] = 0.0;
    let mut opt = NadamState::new(&disc, NadamConfig::default());
    let batch: Vec<usize> = (0..8).collect();
    let fakes: Vec<Vec<f64>> = batch.iter().map(|_| vec![0.5; 4]).collect();
    let loss = discriminator_step(&mut disc, &mut opt, &ds, &batch, &fakes, DiscriminatorInput::Step).unwrap();
    assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
}

#[test]
fn training_phases_touch_only_their_own_network() {
    let mut r = rng(11);
    let scores = Matrix::from_vec(60, 4, (0..240).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    let ds = make_windows(&scores, 2, 0.9).unwrap();
    let mut model = LstmForecaster::new(4, 6, Activation::Sigmoid, 0.3, 2, &mut r).unwrap();
    let mut disc = Discriminator::new(4, 6, &mut r).unwrap();
    let batch: Vec<usize> = (0..10).collect();
    let tapes = forward_batch(&model, &ds, &batch, &mut rng(12)).unwrap();
    let fakes: Vec<Vec<f64>> = tapes.iter().map(|t| t.output.clone()).collect();

    let model_before = param_bits(&model);
    let mut d_opt = NadamState::new(&disc, NadamConfig::default());
    discriminator_step(&mut disc, &mut d_opt, &ds, &batch, &fakes, DiscriminatorInput::Step).unwrap();
    assert_eq!(param_bits(&model), model_before);

    let disc_before = param_bits(&disc);
    let mut g_opt = NadamState::new(&model, NadamConfig::default());
    let term = AdversarialTerm { discriminator: &disc, weight: 1.0, input: DiscriminatorInput::Step };
    generator_step(&mut model, &mut g_opt, &ds, &batch, &tapes, Some(&term)).unwrap();
    assert_eq!(param_bits(&disc), disc_before);
    assert_ne!(param_bits(&model), model_before);
}

#[test]
fn adversarial_training_stays_finite_and_discriminator_is_not_degenerate() {
    let (_, _, scores) = small_scores(6);
    let cfg = TrainConfig { epochs: 20, hidden_nodes: 12, adversarial: true, seed: 2, ..TrainConfig::default() };
    let (_, ds) = scaled_dataset(&scores, &cfg);
    let (model, disc, report) = train_adversarial(&ds, &cfg).unwrap();
    for e in &report.epochs {
        assert!(e.train_mse.is_finite() && e.val_mse.is_finite());
        assert!(e.d_loss.unwrap().is_finite() && e.g_adv_loss.unwrap().is_finite());
    }
    let acc = discriminator_accuracy(&model, &disc, &ds, ds.validation_indices(), DiscriminatorInput::Step).unwrap();
    assert!(acc > 0.45 && acc < 1.0, "accuracy {acc}");
}

#[test]
fn grid_search_records_every_point() {
    let (_, _, scores) = small_scores(4);
    let base = TrainConfig { hidden_nodes: 4, ..TrainConfig::default() };
    let grid = GridSpec {
        dropout: vec![0.3, 0.5],
        hidden_nodes: vec![4, 6],
        batch_size: vec![32],
        output_activation: vec![Activation::Sigmoid],
        time_lag: vec![2],
        epochs: 2,
    };
    let res = grid_search(&scores, &base, &grid, 2).unwrap();
    assert_eq!(res.points.len(), 4);
    assert_eq!(res.to_csv().lines().count(), 5);

    let single = GridSpec { dropout: vec![0.5], hidden_nodes: vec![6], ..grid };
    let res = grid_search(&scores, &base, &single, 1).unwrap();
    assert_eq!(res.points.len(), 1);
    assert_eq!((res.best_config().dropout, res.best_config().hidden_nodes), (0.5, 6));
}

#[test]
fn default_grid_covers_the_published_search_space() {
    let g = GridSpec::default();
    assert_eq!(g.dropout, vec![0.3, 0.5]);
    assert!(g.output_activation.contains(&Activation::Relu) && g.output_activation.contains(&Activation::Sigmoid));
    assert_eq!(g.time_lag, vec![2]);
}

#[test]
fn chronological_split() {
    let scores = Matrix::zeros(50, 2);
    let ds = make_windows(&scores, 2, 0.8).unwrap();
    assert!(ds.train_indices().max().unwrap() < ds.validation_indices().min().unwrap());
}

#[test]
fn rollout_purity_swap_symmetry_and_reconstruction() {
    let (basis, tracer, scores) = small_scores(5);
    let cfg = TrainConfig { epochs: 3, hidden_nodes: 6, seed: 4, ..TrainConfig::default() };
    let (scaler, ds) = scaled_dataset(&scores, &cfg);
    let (a, _) = train_classic(&ds, &cfg).unwrap();
    let (b, _) = train_classic(&ds, &TrainConfig { seed: 8, ..cfg.clone() }).unwrap();

    let before = param_bits(&a);
    let r1 = rollout_from(&a, &scaler, &scores, 30, 20).unwrap();
    let r2 = rollout_from(&a, &scaler, &scores, 30, 20).unwrap();
    assert_eq!(param_bits(&a), before);
    assert_eq!(r1, r2);

    let starts = region_starts(scores.rows(), 2, ds.split, 10, Region::Validation, 4).unwrap();
    let ab = evaluate_ensemble(&a, &b, &scores, &scaler, &starts, 10, 1).unwrap();
    let ba = evaluate_ensemble(&b, &a, &scores, &scaler, &starts, 10, 2).unwrap();
    assert_eq!(ab.classic, ba.adversarial);
    assert_eq!(ab.adversarial, ba.classic);
    let same = evaluate_ensemble(&a, &a, &scores, &scaler, &starts, 10, 1).unwrap();
    assert!(same.error_reduction().iter().all(|&r| r == 0.0));

    // step 1 error equals the direct single-step error for that window
    let start = starts[0];
    let mut r = rollout_from(&a, &scaler, &scores, start, 10).unwrap();
    let window = scaler.scale(&scores.slice_rows(start, start + 2)).unwrap();
    let mut direct = Matrix::from_vec(1, 5, a.predict(&window).unwrap()).unwrap();
    direct = scaler.invert(&direct).unwrap();
    let truth = scores.slice_rows(start + 2, start + 12);
    r.score(&truth).unwrap();
    let e1: f64 = direct.row(0).iter().zip(truth.row(0)).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
    assert_eq!(r.errors[0], e1);

    // zero scores reconstruct to the mean; true scores match PCA reconstruction
    let mut zero = rollout(&a, &scaler, &window, 1, start).unwrap();
    zero.predicted = Matrix::zeros(1, 5);
    let fields = reconstruct_forecast(&basis, &zero).unwrap();
    assert_eq!(fields.row(0), &basis.mean[..]);
    zero.predicted = truth.slice_rows(0, 1);
    let fields = reconstruct_forecast(&basis, &zero).unwrap();
    let oracle = basis.reconstruct(&truth.slice_rows(0, 1)).unwrap();
    let diff = fields.sub(&oracle).unwrap().frobenius_norm();
    assert!(diff <= 1e-9 * oracle.frobenius_norm().max(1.0));
    let _ = tracer;
}

#[test]
fn pca_basis_survives_save_and_load() {
    let (basis, _, _) = small_scores(4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.romf");
    basis.save(&path, TRACER).unwrap();
    let (loaded, manifest) = PcaBasis::load(&path).unwrap();
    assert_eq!(manifest.field, TRACER);
    assert_eq!(manifest.tau, 4);
    assert_eq!(loaded.eofs.as_slice(), basis.eofs.as_slice());
    assert_eq!(loaded.mean, basis.mean);
    assert_eq!(loaded.singular_values, basis.singular_values);
}

#[test]
fn snapshot_csv_has_one_row_per_step() {
    let snaps = generate(&GeneratorConfig { n_steps: 5, grid_nx: 4, grid_ny: 3, source_center: (1, 1), ..GeneratorConfig::default() }).unwrap();
    let mut buf = Vec::new();
    snaps.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0].split(',').count(), 36);
    assert!(lines[0].starts_with("tracer:0,tracer:1,"));
}

#[test]
fn larger_grid_raises_the_speed_ratio() {
    let mut r = rng(13);
    let model = LstmForecaster::new(16, 32, Activation::Sigmoid, 0.3, 2, &mut r).unwrap();
    let base = GeneratorConfig { n_steps: 100, ..GeneratorConfig::default() };
    let big = GeneratorConfig { grid_nx: 64, grid_ny: 64, source_center: (20, 32), ..base.clone() };
    let small = timing_benchmark(&model, &base, 200, 3).unwrap();
    let large = timing_benchmark(&model, &big, 200, 3).unwrap();
    assert!(large.ratio > small.ratio, "{small:?} vs {large:?}");
}
