use netal::acquisition::random_select;
use netal::bayesian::{committee_train, mc_predict};
use netal::dataset::{fit_normalizer, split_pool, Normalizer};
use netal::engine::{evaluate_rmse, Learner, TargetScale};
use netal::neural::{init_params, NetworkParams, NetworkSpec, TrainOptions};
use netal::synth::{generate_synthetic_dataset, schema, twin_label, TwinWorld};
use netal::{Activation, AdamHyper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[test]
fn normalizer_standardizes_and_round_trips() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..1000)
        .map(|_| vec![r.random_range(-50.0..150.0), 3.0 + 0.01 * gaussian(&mut r), 7.0])
        .collect();
    let norm = Normalizer::fit(rows.iter().map(|v| v.as_slice())).unwrap();
    let z: Vec<Vec<f64>> = rows.iter().map(|x| norm.normalize(x)).collect();
    for d in 0..2 {
        let col: Vec<f64> = z.iter().map(|v| v[d]).collect();
        let (m, s) = mean_std(&col);
        assert!(m.abs() < 1e-9, "dim {d} mean {m}");
        assert!((s - 1.0).abs() < 1e-9, "dim {d} std {s}");
    }
    assert!(z.iter().all(|v| v[2] == 0.0));
    for (x, zx) in rows.iter().zip(&z) {
        for (a, b) in x.iter().zip(norm.denormalize(zx)) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}

#[test]
fn held_out_residual_recovers_noise_variance() {
    let sigma = 0.5;
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<Vec<f64>> = (0..2000).map(|_| vec![r.random_range(-1.0..1.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] + sigma * gaussian(&mut r)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let spec = NetworkSpec::new(vec![1, 16, 1], 0.0, Activation::Tanh).unwrap();
    let mut learner = Learner::new(
        spec,
        TrainOptions { epochs: 60, batch_size: 32, adam: AdamHyper::default() },
        TargetScale::fit(&ys[..1600]).unwrap(),
        3,
    );
    learner.fit(&refs[..1600], &ys[..1600], 60, 4, true).unwrap();
    let est = learner.aleatoric(&refs[1600..], &ys[1600..]).unwrap();
    let truth = sigma * sigma;
    assert!((est - truth).abs() / truth < 0.2, "estimate {est} vs {truth}");
}

#[test]
fn committee_members_each_fit_a_line() {
    let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![-1.0 + 2.0 * i as f64 / 199.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0]).collect();
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let spec = NetworkSpec::new(vec![1, 16, 1], 0.0, Activation::Tanh).unwrap();
    let opts = TrainOptions { epochs: 300, batch_size: 16, adam: AdamHyper::default() };
    let committee = committee_train(&spec, &refs, &ys, 3, 10, &opts).unwrap();
    assert_eq!(committee.len(), 3);
    for (k, member) in committee.members.iter().enumerate() {
        let rmse = evaluate_rmse(member, &spec, &refs, &ys).unwrap();
        assert!(rmse * rmse < 1e-2, "member {k} mse {}", rmse * rmse);
    }
    assert_ne!(committee.members[0], committee.members[1]);
}

#[test]
fn random_selection_is_uniform() {
    let candidates: Vec<usize> = (100..110).collect();
    let trials = 10_000;
    let mut counts = [0usize; 10];
    for seed in 0..trials {
        let pick = random_select(&candidates, 3, seed).unwrap();
        let mut sorted = pick.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
        for id in pick {
            counts[id - 100] += 1;
        }
    }
    let expected = trials as f64 * 3.0 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn mc_variance_converges_with_passes() {
    let spec = NetworkSpec::new(vec![4, 32, 32, 1], 0.2, Activation::Relu).unwrap();
    let params = init_params(&spec, 8);
    let x = [0.3, -0.7, 1.2, 0.1];
    let reference = mc_predict(&params, &spec, &x, 200_000, 99).unwrap().epistemic_var;
    let err = |t: usize| {
        let runs: Vec<f64> = (0..8)
            .map(|s| (mc_predict(&params, &spec, &x, t, s).unwrap().epistemic_var - reference).abs())
            .collect();
        runs.iter().sum::<f64>() / runs.len() as f64
    };
    let (small, large) = (err(50), err(5000));
    assert!(reference > 0.0);
    assert!(large < small, "error at T=5000 {large} vs T=50 {small}");
    assert!(large / reference < 0.05, "relative error {}", large / reference);
}

#[test]
fn twin_label_noise_matches_configured_std() {
    let world = TwinWorld::default();
    let (bx, by) = world.base_stations[0];
    let mut f = vec![0.0; schema::FEATURE_COUNT];
    f[schema::POS_X] = bx + 20.0;
    f[schema::POS_Y] = by;
    let labels: Vec<f64> = (0..4000).map(|s| twin_label(&world, &f, s).unwrap()).collect();
    let (_, s) = mean_std(&labels);
    assert!((s - world.noise_std).abs() / world.noise_std < 0.3, "label std {s}");
}

#[test]
fn twin_world_is_learnable() {
    let world = TwinWorld::default();
    let samples = generate_synthetic_dataset(&world, 3000, 21);
    let (pool, _) = split_pool(samples, 0.2, 0.8, 5).unwrap();
    let norm = fit_normalizer(&pool).unwrap();
    let train: Vec<(Vec<f64>, f64)> = pool
        .labeled()
        .iter()
        .map(|id| {
            let s = pool.sample(*id).unwrap();
            (norm.normalize(&s.features), s.label.unwrap())
        })
        .collect();
    let xs: Vec<&[f64]> = train.iter().map(|(x, _)| x.as_slice()).collect();
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let spec = NetworkSpec::new(vec![schema::FEATURE_COUNT, 64, 64, 1], 0.0, Activation::Relu).unwrap();
    let mut learner = Learner::new(spec, TrainOptions::default(), TargetScale::fit(&ys).unwrap(), 1);
    learner.fit(&xs, &ys, 100, 2, true).unwrap();

    let test: Vec<(Vec<f64>, f64)> = pool
        .test()
        .iter()
        .map(|id| {
            let s = pool.sample(*id).unwrap();
            (norm.normalize(&s.features), s.label.unwrap())
        })
        .collect();
    let labels: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
    let preds: Vec<f64> = test.iter().map(|(x, _)| learner.predict(x)).collect();
    let rmse = netal::engine::rmse(&preds, &labels).unwrap();
    let (_, label_std) = mean_std(&labels);
    assert!(rmse < 0.6 * label_std, "rmse {rmse} vs label std {label_std}");
}

#[test]
fn rmse_of_mean_predictor_is_population_std() {
    let spec = NetworkSpec::new(vec![2, 3, 1], 0.0, Activation::Tanh).unwrap();
    let mut params = NetworkParams::zeros(&spec);
    let labels = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
    params.layers[1].bias[0] = 5.0;
    let xs: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64, -(i as f64)]).collect();
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let got = evaluate_rmse(&params, &spec, &refs, &labels).unwrap();
    assert!((got - 2.0).abs() < 1e-12, "{got}");
}

#[test]
fn probe_grid_walks_the_loop() {
    let world = TwinWorld::default();
    let probe = world.probe_grid(40, 3);
    assert_eq!(probe.len(), 40);
    assert_eq!(probe, world.probe_grid(40, 3));
    assert!(probe.iter().all(|f| f.len() == schema::FEATURE_COUNT));
    let driving = probe.iter().filter(|f| f[schema::MODE] == 1.0).count();
    assert_eq!(driving, 20);
    let progress: Vec<f64> = probe.iter().map(|f| f[schema::LOOP_PROGRESS]).collect();
    assert!(progress.windows(2).all(|w| w[0] < w[1] + 0.02), "{progress:?}");
    assert!(progress[0] < 0.05 && progress[39] > 0.95);
}
