//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.
//!
//! The default tier runs everything that finishes in a few minutes. Set
//! `INEURAL_ACCEPTANCE=full` for the full-length recovery runs and
//! `INEURAL_ACCEPTANCE=extended` to add the Lorenz run.

use std::time::Instant;

use ineural_sindy::autodiff::Tensor;
use ineural_sindy::dynamics::{rk4_step, GenerateOptions};
use ineural_sindy::regression::stls;
use ineural_sindy::rng::SplitMix64;
use ineural_sindy::training::{masked_adam_step, AdamConfig, AdamState, NetworkConfig, TrainSchedule};
use ineural_sindy::{
    discover, generate_dataset, Benchmark, CoefficientMatrix, Dataset, DictionarySpec, DiscoverOptions,
    DiscoveryResult, Method, Preset, TrainConfig, Trainer,
};
use ineural_sindy_cli::commands::{cmd_discover, cmd_sweep};
use ineural_sindy_cli::config::ExperimentConfig;

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Tier {
    Quick,
    Full,
    Extended,
}

enum Status {
    Pass,
    Fail,
    Skipped,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let tier = match std::env::var("INEURAL_ACCEPTANCE").as_deref() {
        Ok("full") => Tier::Full,
        Ok("extended") => Tier::Extended,
        _ => Tier::Quick,
    };
    let criteria: [(&str, &str, Tier, Check); 13] = [
        ("1", "gradient correctness", Tier::Quick, gradient_correctness),
        ("2", "rk4 order and one-step oracle", Tier::Quick, rk4_order),
        ("3a", "linear oscillator smoke profile", Tier::Quick, linear_smoke),
        ("3b", "sweep machinery on a 2x2 grid", Tier::Quick, sweep_grid),
        ("3c", "linear oscillator full profile", Tier::Full, linear_full),
        ("4", "cubic oscillator recovery", Tier::Full, cubic_recovery),
        ("5", "FitzHugh-Nagumo recovery", Tier::Full, fhn_recovery),
        ("6", "Lorenz recovery", Tier::Extended, lorenz_recovery),
        ("7", "derivative-mode support matches least squares", Tier::Full, stls_equivalence),
        ("8", "mask integrity", Tier::Quick, mask_integrity),
        ("9", "determinism", Tier::Quick, determinism),
        ("10", "noise degradation ordering", Tier::Full, noise_ordering),
        ("10a", "noise degradation ordering (smoke)", Tier::Quick, noise_ordering_smoke),
    ];
    let mut failed = 0;
    for (id, name, needs, check) in criteria {
        let start = Instant::now();
        let outcome = if needs <= tier {
            check()
        } else {
            let var = if needs == Tier::Full { "full" } else { "extended" };
            Outcome {
                status: Status::Skipped,
                detail: format!("set INEURAL_ACCEPTANCE={var} to run"),
            }
        };
        let label = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skipped => "SKIPPED",
        };
        println!(
            "criterion {id:>3} {label:<7} {name} ({}) [{:.1}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let data = generate_dataset(
        &Benchmark::LinearOscillator.system(),
        &[vec![2.0, 0.0]],
        &GenerateOptions {
            samples: 8,
            t_span: (0.0, 2.0),
            sigma: 0.01,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let spec = DictionarySpec::polynomial(2, 2);
    let config = TrainConfig {
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
        seed: 2,
        ..Default::default()
    };
    let trainer = Trainer::new(&data, &spec, &config).unwrap();
    let net = trainer.network().unwrap().clone();
    let mut rng = SplitMix64::new(3);
    let xi = Tensor::matrix(spec.len(), 2, (0..spec.len() * 2).map(|_| rng.uniform(-1.0, 1.0)).collect());
    let eval = trainer.evaluate(Some(&net), &xi).unwrap();
    let h = 1e-5;
    let loss = |n: &ineural_sindy::SirenNetwork, x: &Tensor| trainer.evaluate(Some(n), x).unwrap().loss.total;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (l, (gw, gb)) in eval.net_grads.iter().enumerate() {
        for (is_bias, grad) in [(false, gw), (true, gb)] {
            for i in 0..grad.len() {
                let shift = |d: f64| {
                    let mut n = net.clone();
                    let t = if is_bias { &mut n.layers[l].bias } else { &mut n.layers[l].weights };
                    t.values_mut()[i] += d;
                    n
                };
                let fd = (loss(&shift(h), &xi) - loss(&shift(-h), &xi)) / (2.0 * h);
                worst = worst.max(rel(grad.values()[i], fd));
                count += 1;
            }
        }
    }
    for i in 0..xi.len() {
        let shift = |d: f64| {
            let mut x = xi.clone();
            x.values_mut()[i] += d;
            x
        };
        let fd = (loss(&net, &shift(h)) - loss(&net, &shift(-h))) / (2.0 * h);
        worst = worst.max(rel(eval.xi_grad.values()[i], fd));
        count += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && secs < 5.0,
        format!("{count} parameters, max relative error {worst:.2e}, {secs:.2}s"),
    )
}

fn rk4_order() -> Outcome {
    let start = Instant::now();
    let solve = |steps: usize| {
        let h = 1.0 / steps as f64;
        let mut x = vec![1.0];
        for _ in 0..steps {
            x = rk4_step(&mut |v: &[f64]| vec![-v[0]], &x, h);
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let ratio = solve(10) / solve(20);
    let mut rng = SplitMix64::new(9);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 1 + (rng.next_u64() % 4) as usize;
        let a: Vec<f64> = (0..n * n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let h = rng.uniform(1e-3, 0.5);
        let apply = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect() };
        let step = rk4_step(&mut |v: &[f64]| apply(v), &x, h);
        let (mut term, mut expect) = (x.clone(), x.clone());
        for k in 1..=4 {
            term = apply(&term).into_iter().map(|v| v * h / k as f64).collect();
            expect.iter_mut().zip(&term).for_each(|(e, t)| *e += t);
        }
        for (s, e) in step.iter().zip(&expect) {
            worst = worst.max((s - e).abs() / e.abs().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        (ratio - 16.0).abs() <= 3.2 && worst <= 1e-12 && secs < 1.0,
        format!("error ratio {ratio:.3}, one-step deviation {worst:.1e}"),
    )
}

struct Run {
    result: DiscoveryResult,
    truth: CoefficientMatrix,
}

impl Run {
    fn support_exact(&self) -> bool {
        let truth: Vec<bool> = self.truth.values().values().iter().map(|&v| v != 0.0).collect();
        self.result.coefficients.mask() == truth.as_slice()
    }

    fn errors(&self) -> Vec<f64> {
        self.result.errors.clone().unwrap_or_default()
    }

    fn summary(&self) -> String {
        let e: Vec<String> = self.errors().iter().map(|v| format!("{v:.4}")).collect();
        format!(
            "sigma {}: {} E=[{}] {:.0}s",
            self.result.sigma,
            self.result.equations.join("; "),
            e.join(", "),
            self.result.runtime_s
        )
    }
}

fn run(b: Benchmark, method: Method, sigma: f64, samples: Option<usize>, max_iter: Option<usize>) -> Result<Run, String> {
    let mut preset = Preset::for_benchmark(b);
    if let Some(m) = samples {
        preset.samples = m;
    }
    if let Some(k) = max_iter {
        preset.schedule = preset.schedule.shortened(k);
    }
    let data = generate_dataset(&b.system(), &preset.initial_conditions, &preset.generate_options(sigma, 0))
        .map_err(|e| e.to_string())?;
    let spec = preset.dictionary();
    let truth = preset.ground_truth().map_err(|e| e.to_string())?;
    let opts = DiscoverOptions {
        train: preset.train_config(0),
        ..Default::default()
    };
    let result = discover(&data, &spec, method, Some(&truth), &opts).map_err(|e| e.to_string())?;
    Ok(Run { result, truth })
}

fn linear_runs(samples: Option<usize>, max_iter: Option<usize>, limit: f64, budget_s: f64) -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for sigma in [0.0, 0.02] {
        match run(Benchmark::LinearOscillator, Method::Ineural, sigma, samples, max_iter) {
            Ok(r) => {
                ok &= r.support_exact() && r.errors().iter().all(|&e| e <= limit) && r.result.runtime_s <= budget_s;
                details.push(r.summary());
            }
            Err(e) => {
                ok = false;
                details.push(format!("sigma {sigma}: {e}"));
            }
        }
    }
    verdict(ok, details.join(" | "))
}

fn linear_smoke() -> Outcome {
    linear_runs(Some(128), Some(4000), 0.1, 90.0)
}

fn linear_full() -> Outcome {
    linear_runs(None, None, 0.02, 600.0)
}

fn sweep_grid() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[experiment]\nsystem = \"linear_oscillator\"\nout_dir = {:?}\n\
         [training]\nmax_iter = 4000\ninit_iter = 2000\nq = 1000\n\
         [sweep]\nmode = \"scene_a\"\nsigma = [0.0, 0.02]\nsamples = [64, 128]\n",
        dir.path().display().to_string()
    );
    let exp = match ExperimentConfig::parse(&text).and_then(|c| c.resolve()) {
        Ok(e) => e,
        Err(e) => return verdict(false, e.to_string()),
    };
    match cmd_sweep(&exp, 2, &mut std::io::sink()) {
        Ok(rows) => {
            let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap_or_default();
            let finite = rows.iter().all(|r| r.error_total.is_finite());
            let cells: Vec<String> = rows.iter().map(|r| format!("{}/{}: {:.4}", r.sigma, r.value, r.error_total)).collect();
            verdict(
                rows.len() == 4 && finite && csv.lines().count() == 5 && dir.path().join("sweep_ineural.svg").exists(),
                format!("E_total {}", cells.join(", ")),
            )
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn cubic_recovery() -> Outcome {
    let b = Benchmark::CubicOscillator;
    let clean = run(b, Method::Ineural, 0.0, None, None);
    let noisy = run(b, Method::Ineural, 0.04, None, None);
    let direct = run(b, Method::Rk4Direct, 0.04, None, None);
    let mut details = Vec::new();
    let mut ok = true;
    match &clean {
        Ok(r) => {
            ok &= r.support_exact() && r.errors().iter().all(|&e| e <= 0.02);
            details.push(format!("ineural {}", r.summary()));
        }
        Err(e) => {
            ok = false;
            details.push(e.clone());
        }
    }
    match &noisy {
        Ok(r) => {
            ok &= r.support_exact();
            details.push(format!("ineural {}", r.summary()));
        }
        Err(e) => {
            ok = false;
            details.push(e.clone());
        }
    }
    // Spurious terms are permitted for the direct method; report only.
    match &direct {
        Ok(r) => details.push(format!("rk4_direct {}", r.summary())),
        Err(e) => details.push(format!("rk4_direct: {e}")),
    }
    verdict(ok, details.join(" | "))
}

fn fhn_recovery() -> Outcome {
    let r = match run(Benchmark::FitzHughNagumo, Method::Ineural, 0.0, None, None) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let xi = &r.result.coefficients;
    let row = |label: &str| xi.labels().iter().position(|l| l == label).unwrap();
    let x1_support: Vec<&str> = ["1", "x1", "x2", "x1^3"].to_vec();
    let active = |s: usize| -> Vec<String> {
        (0..xi.features()).filter(|&f| xi.is_active(f, s)).map(|f| xi.labels()[f].clone()).collect()
    };
    let ok = active(0) == x1_support
        && active(1) == ["x1", "x2"]
        && (xi.get(row("1"), 0) - 0.1).abs() <= 0.01
        && (xi.get(row("x1^3"), 0) + 1.0 / 3.0).abs() <= 0.01
        && (xi.get(row("x1"), 1) - r.truth.get(row("x1"), 1)).abs() <= 0.005
        && (xi.get(row("x2"), 1) - r.truth.get(row("x2"), 1)).abs() <= 0.005;
    verdict(ok, r.summary())
}

fn lorenz_recovery() -> Outcome {
    let start = Instant::now();
    let r = match run(Benchmark::Lorenz, Method::Ineural, 0.0, None, None) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let xi = &r.result.coefficients;
    let mut worst: f64 = 0.0;
    for f in 0..xi.features() {
        for s in 0..xi.states() {
            if r.truth.get(f, s) != 0.0 {
                let t = r.truth.get(f, s);
                worst = worst.max((xi.get(f, s) - t).abs() / t.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.support_exact() && worst <= 0.01 && secs <= 1800.0,
        format!("worst relative error {worst:.4}; {}", r.summary()),
    )
}

/// Least squares on exact derivatives of the clean trajectories.
fn analytic_stls(preset: &Preset, data: &Dataset) -> CoefficientMatrix {
    let spec = preset.dictionary();
    let truth = preset.ground_truth().unwrap();
    let mut theta = Vec::new();
    let mut dx = Vec::new();
    let mut rows = 0;
    for t in &data.trajectories {
        for r in 0..t.clean.rows() {
            let x = t.clean.row_slice(r);
            theta.extend(spec.eval_features(x).unwrap());
            dx.extend(spec.apply(x, truth.values()).unwrap());
            rows += 1;
        }
    }
    let theta = Tensor::matrix(rows, spec.len(), theta);
    let dx = Tensor::matrix(rows, spec.state_dim, dx);
    stls(&theta, &dx, spec.labels(), spec.state_names(), preset.schedule.tol, 10)
        .unwrap()
        .coefficients
}

fn stls_equivalence() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for b in Benchmark::ALL {
        let preset = Preset::for_benchmark(b);
        let data = generate_dataset(&b.system(), &preset.initial_conditions, &preset.generate_options(0.0, 0)).unwrap();
        let reference = analytic_stls(&preset, &data);
        let opts = DiscoverOptions {
            train: preset.train_config(0),
            ..Default::default()
        };
        match discover(&data, &preset.dictionary(), Method::DeriOnly, None, &opts) {
            Ok(r) => {
                let same = r.coefficients.mask() == reference.mask();
                ok &= same;
                details.push(format!(
                    "{}: {} ({} vs {} terms)",
                    b.name(),
                    if same { "identical" } else { "differ" },
                    r.coefficients.active_count(),
                    reference.active_count()
                ));
                if !same {
                    details.push(format!("deri_only gave {}", r.equations.join("; ")));
                }
            }
            Err(e) => {
                ok = false;
                details.push(format!("{}: {e}", b.name()));
            }
        }
    }
    verdict(ok, details.join(", "))
}

fn mask_integrity() -> Outcome {
    let mut rng = SplitMix64::new(21);
    let (d, n) = (20, 3);
    let values = Tensor::matrix(d, n, (0..d * n).map(|_| rng.uniform(-0.3, 0.3)).collect());
    let mut xi = CoefficientMatrix::from_values(
        (0..d).map(|f| format!("f{f}")).collect(),
        (1..=n).map(|s| format!("x{s}")).collect(),
        values,
    )
    .unwrap();
    xi.threshold(0.15);
    let masked: Vec<usize> = (0..d * n).filter(|&k| !xi.mask()[k]).collect();
    let mut state = AdamState::new(d * n);
    let cfg = AdamConfig::with_lr(1e-2);
    let mut violations = 0;
    for _ in 0..10_000 {
        let grads: Vec<f64> = (0..d * n).map(|_| rng.uniform(-10.0, 10.0)).collect();
        masked_adam_step(&mut xi, &grads, &mut state, &cfg);
        violations += masked.iter().filter(|&&k| xi.values().values()[k].to_bits() != 0).count();
    }
    verdict(
        violations == 0 && !masked.is_empty(),
        format!("{} masked entries, 10000 steps, {violations} violations", masked.len()),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for k in 0..2 {
        let text = format!(
            "[experiment]\nsystem = \"fitzhugh_nagumo\"\nseed = 5\nmethods = [\"ineural\", \"stls\", \"rk4_direct\"]\n\
             out_dir = {:?}\n[data]\nsamples = 64\nsigma = [0.02]\n\
             [network]\nhidden = [8, 8]\n[training]\nmax_iter = 300\ninit_iter = 100\nq = 100\n",
            dir.path().join(format!("run{k}")).display().to_string()
        );
        let exp = ExperimentConfig::parse(&text).and_then(|c| c.resolve()).unwrap();
        if let Err(e) = cmd_discover(&exp, &mut std::io::sink()) {
            return verdict(false, e.to_string());
        }
        let mut files = Vec::new();
        for m in ["ineural", "stls", "rk4_direct"] {
            let p = exp.out_dir.join("results").join(format!("fitzhugh_nagumo_sigma0.02_{m}_xi.csv"));
            files.push(std::fs::read(p).unwrap_or_default());
        }
        csvs.push(files);
    }
    let same = csvs[0] == csvs[1] && csvs[0].iter().all(|f| !f.is_empty());
    verdict(same, "three methods, two runs, coefficient CSVs compared byte for byte")
}

fn ordering(samples: Option<usize>, max_iter: Option<usize>, limit: f64) -> Outcome {
    let b = Benchmark::LinearOscillator;
    let ineural = run(b, Method::Ineural, 0.08, samples, max_iter);
    let direct = run(b, Method::Rk4Direct, 0.08, samples, max_iter);
    match (ineural, direct) {
        (Ok(i), Ok(d)) => {
            let (et_d, et_i) = (d.result.error_total().unwrap_or(f64::NAN), i.result.error_total().unwrap_or(f64::NAN));
            let ok = et_d > et_i && i.errors().iter().all(|&e| e <= limit);
            verdict(
                ok,
                format!(
                    "E_total rk4_direct {:.4} vs ineural {:.4}; ineural {}",
                    et_d,
                    et_i,
                    i.summary()
                ),
            )
        }
        (i, d) => verdict(false, format!("{:?} / {:?}", i.err(), d.err())),
    }
}

fn noise_ordering() -> Outcome {
    ordering(None, None, 0.05)
}

/// Same comparison on the smoke profile; only the ordering is required.
fn noise_ordering_smoke() -> Outcome {
    ordering(Some(128), Some(4000), f64::INFINITY)
}
