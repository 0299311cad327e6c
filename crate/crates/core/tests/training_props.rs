use ineural_sindy::autodiff::Tensor;
use ineural_sindy::dynamics::{rk4_step, GenerateOptions};
use ineural_sindy::regression::stls;
use ineural_sindy::rng::SplitMix64;
use ineural_sindy::training::{
    loss_deri, loss_mse, loss_rk4, masked_adam_step, AdamConfig, AdamState, NetworkConfig, TrainSchedule,
};
use ineural_sindy::{
    coeff_error, generate_dataset, Benchmark, CoefficientMatrix, Dataset, DictionarySpec, LossSpace, TrainConfig,
    Trainer,
};
use proptest::prelude::*;

fn oscillator_data(trajectories: usize, samples: usize, seed: u64) -> Dataset {
    let ics = [vec![2.0, 0.0], vec![-1.0, 1.5], vec![0.5, -2.0]];
    generate_dataset(
        &Benchmark::LinearOscillator.system(),
        &ics[..trajectories],
        &GenerateOptions {
            samples,
            t_span: (0.0, 2.0),
            sigma: 0.01,
            seed,
            ..Default::default()
        },
    )
    .unwrap()
}

fn miniature_config(seed: u64, space: LossSpace) -> TrainConfig {
    TrainConfig {
        network: NetworkConfig {
            hidden: vec![4],
            ..Default::default()
        },
        schedule: TrainSchedule {
            max_iter: 20,
            init_iter: 10,
            q: 5,
            ..Default::default()
        },
        space,
        seed,
        ..Default::default()
    }
}

fn random_xi(spec: &DictionarySpec, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let d = spec.len();
    Tensor::matrix(d, spec.state_dim, (0..d * spec.state_dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn total_loss_gradient_matches_finite_differences(seed in 0u64..1000, normalized in any::<bool>()) {
        let space = if normalized { LossSpace::Normalized } else { LossSpace::Physical };
        let data = oscillator_data(1, 8, seed);
        let spec = DictionarySpec::polynomial(2, 2);
        let trainer = Trainer::new(&data, &spec, &miniature_config(seed, space)).unwrap();
        let net = trainer.network().unwrap().clone();
        let xi = random_xi(&spec, seed ^ 0x55);
        let eval = trainer.evaluate(Some(&net), &xi).unwrap();
        let h = 1e-5;
        let loss_at = |net: &ineural_sindy::SirenNetwork, xi: &Tensor| trainer.evaluate(Some(net), xi).unwrap().loss.total;

        for (l, (gw, gb)) in eval.net_grads.iter().enumerate() {
            for (which, grad) in [(0, gw), (1, gb)] {
                for i in 0..grad.len() {
                    let shift = |delta: f64| {
                        let mut n = net.clone();
                        let t = if which == 0 { &mut n.layers[l].weights } else { &mut n.layers[l].bias };
                        t.values_mut()[i] += delta;
                        n
                    };
                    let fd = (loss_at(&shift(h), &xi) - loss_at(&shift(-h), &xi)) / (2.0 * h);
                    prop_assert!(rel(grad.values()[i], fd) <= 1e-4, "layer {} {} entry {}: {} vs {}", l, which, i, grad.values()[i], fd);
                }
            }
        }
        for i in 0..xi.len() {
            let shift = |delta: f64| {
                let mut x = xi.clone();
                x.values_mut()[i] += delta;
                x
            };
            let fd = (loss_at(&net, &shift(h)) - loss_at(&net, &shift(-h))) / (2.0 * h);
            prop_assert!(rel(eval.xi_grad.values()[i], fd) <= 1e-4, "xi entry {}: {} vs {}", i, eval.xi_grad.values()[i], fd);
        }
    }

    #[test]
    fn single_trajectory_losses_match_direct_formulas(seed in 0u64..1000, samples in 4usize..40) {
        let data = oscillator_data(1, samples, seed);
        let spec = DictionarySpec::polynomial(2, 2);
        let trainer = Trainer::new(&data, &spec, &miniature_config(seed, LossSpace::Physical)).unwrap();
        let net = trainer.network().unwrap().clone();
        let xi = random_xi(&spec, seed);
        let parts = trainer.evaluate(Some(&net), &xi).unwrap().loss;

        let traj = &data.trajectories[0];
        let norm = &data.normalization;
        let inputs = Tensor::matrix(samples, 1, traj.times.iter().map(|&t| norm.normalize_time(t)).collect());
        let (xn, dxn) = net.predict_batch(&inputs).unwrap();
        let (mut x, mut dx) = (Vec::new(), Vec::new());
        for r in 0..samples {
            let (a, b) = norm.denormalize_state_and_derivative(xn.row_slice(r), dxn.row_slice(r)).unwrap();
            x.extend(a);
            dx.extend(b);
        }
        let x = Tensor::matrix(samples, 2, x);
        let dx = Tensor::matrix(samples, 2, dx);
        let mse = loss_mse(&x, &traj.noisy).unwrap();
        let deri = loss_deri(&dx, &x, &spec, &xi).unwrap();
        let rk4 = loss_rk4(&x, &traj.times, &spec, &xi).unwrap();
        prop_assert!(rel(parts.mse, mse) <= 1e-12, "{} vs {}", parts.mse, mse);
        prop_assert!(rel(parts.deri, deri) <= 1e-12, "{} vs {}", parts.deri, deri);
        prop_assert!(rel(parts.rk4, rk4) <= 1e-12, "{} vs {}", parts.rk4, rk4);
        prop_assert_eq!(parts.total, parts.mse + 0.1 * parts.deri + 0.1 * parts.rk4);
    }

    #[test]
    fn direct_residual_ignores_trajectory_order(seed in 0u64..1000) {
        let data = oscillator_data(3, 20, seed);
        let mut reordered = data.clone();
        reordered.trajectories.reverse();
        reordered.trajectories.swap(0, 1);
        let spec = DictionarySpec::polynomial(2, 2);
        let schedule = TrainSchedule { max_iter: 20, init_iter: 10, q: 5, ..Default::default() };
        let xi = random_xi(&spec, seed);
        for space in [LossSpace::Physical, LossSpace::Normalized] {
            let a = Trainer::direct(&data, &spec, &schedule, space).unwrap().evaluate(None, &xi).unwrap();
            let b = Trainer::direct(&reordered, &spec, &schedule, space).unwrap().evaluate(None, &xi).unwrap();
            prop_assert!(rel(a.loss.total, b.loss.total) <= 1e-12);
            for (g, h) in a.xi_grad.values().iter().zip(b.xi_grad.values()) {
                prop_assert!((g - h).abs() <= 1e-10 * g.abs().max(1.0));
            }
        }
    }

    #[test]
    fn stls_output_is_a_fixed_point(seed in any::<u64>(), states in 1usize..4, tol in 0.05f64..0.3) {
        let mut rng = SplitMix64::new(seed);
        let (rows, d) = (60, 8);
        let theta = Tensor::matrix(rows, d, (0..rows * d).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let truth: Vec<f64> = (0..d * states)
            .map(|_| if rng.next_f64() < 0.4 { rng.uniform(0.5, 2.0) * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 } } else { 0.0 })
            .collect();
        let mut dx = vec![0.0; rows * states];
        for r in 0..rows {
            for s in 0..states {
                dx[r * states + s] = (0..d).map(|f| theta.get(r, f) * truth[f * states + s]).sum::<f64>() + 0.05 * rng.normal();
            }
        }
        let dx = Tensor::matrix(rows, states, dx);
        let labels: Vec<String> = (0..d).map(|f| format!("f{f}")).collect();
        let names: Vec<String> = (0..states).map(|s| format!("x{}", s + 1)).collect();
        let first = stls(&theta, &dx, labels.clone(), names.clone(), tol, 20).unwrap().coefficients;

        for s in 0..states {
            let active: Vec<usize> = (0..d).filter(|&f| first.is_active(f, s)).collect();
            if active.is_empty() {
                continue;
            }
            let sub = Tensor::matrix(rows, active.len(), (0..rows).flat_map(|r| active.iter().map(move |&f| (r, f))).map(|(r, f)| theta.get(r, f)).collect());
            let col = Tensor::matrix(rows, 1, (0..rows).map(|r| dx.get(r, s)).collect());
            let sub_labels = active.iter().map(|&f| labels[f].clone()).collect();
            let again = stls(&sub, &col, sub_labels, vec![names[s].clone()], tol, 20).unwrap().coefficients;
            prop_assert_eq!(again.active_count(), active.len());
            for (k, &f) in active.iter().enumerate() {
                prop_assert!((again.get(k, 0) - first.get(f, s)).abs() <= 1e-10, "{} vs {}", again.get(k, 0), first.get(f, s));
            }
        }
    }

    #[test]
    fn coefficient_error_is_a_metric(seed in any::<u64>(), d in 1usize..8, n in 1usize..4) {
        let mut rng = SplitMix64::new(seed);
        let labels: Vec<String> = (0..d).map(|f| format!("f{f}")).collect();
        let names: Vec<String> = (0..n).map(|s| format!("x{}", s + 1)).collect();
        let mut make = || {
            let v = Tensor::matrix(d, n, (0..d * n).map(|_| rng.uniform(-3.0, 3.0)).collect());
            CoefficientMatrix::from_values(labels.clone(), names.clone(), v).unwrap()
        };
        let (a, b, c) = (make(), make(), make());
        let ab = coeff_error(&a, &b).unwrap();
        let ba = coeff_error(&b, &a).unwrap();
        let bc = coeff_error(&b, &c).unwrap();
        let ac = coeff_error(&a, &c).unwrap();
        prop_assert!(coeff_error(&a, &a).unwrap().iter().all(|&e| e == 0.0));
        for s in 0..n {
            prop_assert!(ab[s] >= 0.0);
            prop_assert_eq!(ab[s], ba[s]);
            prop_assert!(ac[s] <= ab[s] + bc[s] + 1e-12);
        }
    }

    #[test]
    fn rk4_step_matches_matrix_polynomial(seed in any::<u64>(), n in 1usize..5, h in 1e-3f64..0.5) {
        let mut rng = SplitMix64::new(seed);
        let a: Vec<f64> = (0..n * n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let apply = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect() };
        let step = rk4_step(&mut |v: &[f64]| apply(v), &x, h);
        // x + hAx + (hA)^2 x / 2 + (hA)^3 x / 6 + (hA)^4 x / 24
        let mut term = x.clone();
        let mut expect = x.clone();
        for k in 1..=4 {
            term = apply(&term).into_iter().map(|v| v * h / k as f64).collect();
            expect.iter_mut().zip(&term).for_each(|(e, t)| *e += t);
        }
        for (s, e) in step.iter().zip(&expect) {
            prop_assert!((s - e).abs() <= 1e-12 * e.abs().max(1.0), "{} vs {}", s, e);
        }
    }
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let solve = |steps: usize| {
        let h = 1.0 / steps as f64;
        let mut x = vec![1.0];
        for _ in 0..steps {
            x = rk4_step(&mut |v: &[f64]| vec![-v[0]], &x, h);
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    for steps in [5, 10, 20] {
        let ratio = solve(steps) / solve(2 * steps);
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "{steps} steps: ratio {ratio}");
    }
}

#[test]
fn masked_entries_survive_ten_thousand_steps() {
    let mut rng = SplitMix64::new(11);
    let (d, n) = (10, 3);
    let values = Tensor::matrix(d, n, (0..d * n).map(|_| rng.uniform(-0.3, 0.3)).collect());
    let labels = (0..d).map(|f| format!("f{f}")).collect();
    let names = (0..n).map(|s| format!("x{}", s + 1)).collect();
    let mut xi = CoefficientMatrix::from_values(labels, names, values).unwrap();
    let pruned = xi.threshold(0.15);
    assert!(!pruned.is_empty());
    let masked: Vec<usize> = (0..d * n).filter(|&k| !xi.mask()[k]).collect();
    let mut state = AdamState::new(d * n);
    let cfg = AdamConfig::with_lr(1e-2);
    for step in 0..10_000 {
        let grads: Vec<f64> = (0..d * n).map(|_| rng.uniform(-5.0, 5.0)).collect();
        masked_adam_step(&mut xi, &grads, &mut state, &cfg);
        for &k in &masked {
            assert_eq!(xi.values().values()[k].to_bits(), 0.0f64.to_bits(), "entry {k} at step {step}");
        }
    }
    assert_eq!(xi.active_count(), d * n - masked.len());
}

#[test]
fn trainer_keeps_pruned_entries_zero() {
    let data = oscillator_data(2, 16, 5);
    let spec = DictionarySpec::polynomial(2, 2);
    let mut config = miniature_config(5, LossSpace::Physical);
    config.schedule = TrainSchedule {
        max_iter: 400,
        init_iter: 50,
        q: 50,
        tol: 0.5,
        ..Default::default()
    };
    let mut trainer = Trainer::new(&data, &spec, &config).unwrap();
    let mut ever_masked = vec![false; spec.len() * 2];
    while !trainer.is_finished() {
        trainer.step().unwrap();
        let xi = trainer.coefficients();
        for (k, m) in xi.mask().iter().enumerate() {
            assert!(!(ever_masked[k] && *m), "entry {k} was unmasked");
            ever_masked[k] |= !m;
            if !m {
                assert_eq!(xi.values().values()[k].to_bits(), 0.0f64.to_bits());
            }
        }
    }
    assert!(ever_masked.iter().any(|&m| m));
}
