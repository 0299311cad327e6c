use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ineural_sindy::metrics::ResultJson;
use ineural_sindy::rng::mix64;
use ineural_sindy::training::NetworkConfig;
use ineural_sindy::{
    discover, generate_dataset, CoefficientMatrix, Dataset, DictionarySpec, DiscoverOptions, DiscoveryResult, Method,
};

use crate::config::{Experiment, SweepMode};
use crate::{svg, CliError};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Io(e.to_string()))
}

/// File stem of one dataset, e.g. `linear_oscillator_sigma0.02`.
pub fn dataset_stem(exp: &Experiment, sigma: f64) -> String {
    format!("{}_sigma{sigma}", exp.system.name())
}

/// Physical ground truth of the configured system, if the dictionary can
/// express it.
pub fn ground_truth(exp: &Experiment) -> Option<CoefficientMatrix> {
    truth_for(exp, &exp.dictionary)
}

fn truth_for(exp: &Experiment, spec: &DictionarySpec) -> Option<CoefficientMatrix> {
    let xi = exp.system.system().ground_truth(spec, exp.alpha).ok()?;
    CoefficientMatrix::from_values(spec.labels(), spec.state_names(), xi).ok()
}

/// Datasets for every configured noise level (or the configured CSV).
pub fn datasets(exp: &Experiment) -> Result<Vec<(String, Dataset)>, CliError> {
    if let Some(csv) = &exp.csv {
        let sidecar_path = csv.with_extension("json");
        let text = std::fs::read_to_string(csv).map_err(|e| io_err(csv, e))?;
        let sidecar = std::fs::read_to_string(&sidecar_path).map_err(|e| io_err(&sidecar_path, e))?;
        let sidecar = serde_json::from_str(&sidecar).map_err(|e| CliError::Config(format!("{}: {e}", sidecar_path.display())))?;
        let data = Dataset::from_csv(&text, &sidecar).map_err(|e| CliError::Config(e.to_string()))?;
        let stem = csv.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![(stem, data)]);
    }
    exp.sigmas
        .iter()
        .map(|&sigma| {
            let data = generate_dataset(&exp.system.system(), &exp.initial_conditions, &exp.generate_options(sigma))
                .map_err(CliError::from_core)?;
            Ok((dataset_stem(exp, sigma), data))
        })
        .collect()
}

/// Writes one dataset CSV and JSON sidecar per noise level.
pub fn cmd_generate(exp: &Experiment, out: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
    let dir = exp.out_dir.join("data");
    let mut written = Vec::new();
    for (stem, data) in datasets(exp)? {
        let csv = dir.join(format!("{stem}.csv"));
        write_file(&csv, &data.to_csv())?;
        let sidecar = serde_json::to_string_pretty(&data.sidecar()).expect("serializable") + "\n";
        write_file(&dir.join(format!("{stem}.json")), &sidecar)?;
        say(
            out,
            format!(
                "{}: {} trajectories x {} samples, sigma {}, alpha {} -> {}",
                stem,
                data.trajectories.len(),
                data.trajectories[0].times.len(),
                data.sigma,
                data.alpha,
                csv.display()
            ),
        )?;
        written.push(csv);
    }
    Ok(written)
}

fn options(exp: &Experiment) -> DiscoverOptions {
    DiscoverOptions {
        train: exp.train.clone(),
        stls_max_iter: exp.stls_max_iter,
        precision: 3,
    }
}

/// Files written for one method run.
fn write_result(dir: &Path, stem: &str, r: &DiscoveryResult) -> Result<PathBuf, CliError> {
    let base = format!("{stem}_{}", r.method.name());
    let xi_name = format!("{base}_xi.csv");
    write_file(&dir.join(&xi_name), &r.coefficients.to_csv())?;
    if let Some(trace) = &r.trace {
        write_file(&dir.join(format!("{base}_trace.csv")), &trace.to_csv())?;
    }
    if let Some(net) = &r.network {
        let ck = serde_json::to_string(&net.to_checkpoint()).expect("serializable") + "\n";
        write_file(&dir.join(format!("{base}_net.json")), &ck)?;
    }
    let json_path = dir.join(format!("{base}.json"));
    let json = serde_json::to_string_pretty(&r.to_json(&xi_name)).expect("serializable") + "\n";
    write_file(&json_path, &json)?;
    Ok(json_path)
}

/// Runs every configured method on every dataset and writes the results.
/// A failing method is reported and the others still run.
pub fn cmd_discover(exp: &Experiment, out: &mut dyn Write) -> Result<Vec<DiscoveryResult>, CliError> {
    let dir = exp.out_dir.join("results");
    let opts = options(exp);
    let truth = ground_truth(exp);
    let mut results = Vec::new();
    let mut failures: Vec<CliError> = Vec::new();
    for (stem, data) in datasets(exp)? {
        for &method in &exp.methods {
            match discover(&data, &exp.dictionary, method, truth.as_ref(), &opts) {
                Ok(r) => {
                    let path = write_result(&dir, &stem, &r)?;
                    say(out, format!("[{stem}] {} ({:.1} s)", method.name(), r.runtime_s))?;
                    for eq in &r.equations {
                        say(out, format!("  {eq}"))?;
                    }
                    if let Some(e) = &r.errors {
                        let parts: Vec<String> = e.iter().map(|v| format!("{v:.4}")).collect();
                        say(out, format!("  E = [{}]", parts.join(", ")))?;
                    }
                    say(out, format!("  -> {}", path.display()))?;
                    results.push(r);
                }
                Err(e) => {
                    say(out, format!("[{stem}] {} failed: {e}", method.name()))?;
                    failures.push(CliError::from_core(e));
                }
            }
        }
    }
    match failures.into_iter().max_by_key(CliError::exit_code) {
        Some(e) => Err(e),
        None => Ok(results),
    }
}

/// One sweep cell result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub value: usize,
    pub method: Method,
    /// Per-state errors; empty if the run failed.
    pub errors: Vec<f64>,
    pub error_total: f64,
}

/// Seed of sweep cell `(i, j)`.
pub fn cell_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed ^ mix64(((i as u64) << 32) | j as u64)
}

fn run_cell(exp: &Experiment, i: usize, j: usize) -> Vec<SweepRow> {
    let s = &exp.sweep;
    let sigma = s.sigmas[i];
    let seed = cell_seed(exp.seed, i, j);
    let (value, samples, hidden) = match s.mode {
        SweepMode::SceneA => (s.samples[j], s.samples[j], exp.train.network.hidden.clone()),
        SweepMode::SceneB => (s.neurons[j], exp.samples, vec![s.neurons[j]; exp.train.network.hidden.len()]),
    };
    let mut gen = exp.generate_options(sigma);
    gen.samples = samples;
    gen.seed = seed;
    let mut opts = options(exp);
    opts.train.seed = seed;
    opts.train.network = NetworkConfig {
        hidden,
        ..opts.train.network.clone()
    };
    let truth = ground_truth(exp);
    let data = generate_dataset(&exp.system.system(), &[s.initial_condition.clone()], &gen);
    exp.methods
        .iter()
        .map(|&method| {
            let errors = data
                .as_ref()
                .ok()
                .and_then(|d| discover(d, &exp.dictionary, method, truth.as_ref(), &opts).ok())
                .and_then(|r| r.errors)
                .unwrap_or_default();
            let error_total = if errors.is_empty() { f64::NAN } else { errors.iter().sum() };
            SweepRow {
                sigma,
                value,
                method,
                errors,
                error_total,
            }
        })
        .collect()
}

/// Runs the noise x samples (or noise x width) grid on `jobs` threads and
/// writes `sweep.csv`, `sweep_states.csv`, `sweep_ic.txt` and one SVG heatmap
/// per method.
pub fn cmd_sweep(exp: &Experiment, jobs: usize, out: &mut dyn Write) -> Result<Vec<SweepRow>, CliError> {
    let s = &exp.sweep;
    let values = match s.mode {
        SweepMode::SceneA => &s.samples,
        SweepMode::SceneB => &s.neurons,
    };
    let cells: Vec<(usize, usize)> = (0..s.sigmas.len())
        .flat_map(|i| (0..values.len()).map(move |j| (i, j)))
        .collect();
    if cells.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Vec<SweepRow>>>> = Mutex::new(vec![None; cells.len()]);
    let workers = jobs.clamp(1, cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(i, j)) = cells.get(k) else { break };
                let rows = run_cell(exp, i, j);
                slots.lock().expect("no worker panicked")[k] = Some(rows);
            });
        }
    });
    let rows: Vec<SweepRow> = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .flat_map(|r| r.expect("every cell ran"))
        .collect();

    let axis = match s.mode {
        SweepMode::SceneA => "samples",
        SweepMode::SceneB => "neurons",
    };
    let mut csv = String::from("sigma,samples_or_neurons,method,E_total\n");
    let mut states = String::from("sigma,samples_or_neurons,method,state,E\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{}", r.sigma, r.value, r.method.name(), r.error_total).unwrap();
        for (k, e) in r.errors.iter().enumerate() {
            writeln!(states, "{},{},{},x{},{}", r.sigma, r.value, r.method.name(), k + 1, e).unwrap();
        }
    }
    write_file(&exp.out_dir.join("sweep.csv"), &csv)?;
    write_file(&exp.out_dir.join("sweep_states.csv"), &states)?;
    let row_labels: Vec<String> = s.sigmas.iter().map(|v| v.to_string()).collect();
    let col_labels: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    for &method in &exp.methods {
        let grid: Vec<Vec<f64>> = (0..s.sigmas.len())
            .map(|i| {
                (0..values.len())
                    .map(|j| {
                        rows.iter()
                            .find(|r| r.method == method && r.sigma == s.sigmas[i] && r.value == values[j])
                            .map_or(f64::NAN, |r| r.error_total)
                    })
                    .collect()
            })
            .collect();
        let title = format!("{} {} {}: total coefficient error", exp.system.name(), s.mode.name(), method.name());
        let path = exp.out_dir.join(format!("sweep_{}.svg", method.name()));
        write_file(&path, &svg::heatmap(&title, "sigma", axis, &row_labels, &col_labels, &grid))?;
    }
    let ic: Vec<String> = s.initial_condition.iter().map(|v| v.to_string()).collect();
    write_file(&exp.out_dir.join("sweep_ic.txt"), &format!("{}\n", ic.join(",")))?;
    say(out, format!("initial condition ({})", ic.join(", ")))?;
    say(out, format!("{} cells x {} methods -> {}", cells.len(), exp.methods.len(), exp.out_dir.join("sweep.csv").display()))?;
    for r in &rows {
        say(out, format!("  sigma {:<6} {axis} {:<5} {:<10} E_total {:.4}", r.sigma, r.value, r.method.name(), r.error_total))?;
    }
    Ok(rows)
}

fn collect_json(dir: &Path, found: &mut Vec<(PathBuf, ResultJson)>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect_json(&p, found)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            if let Ok(r) = serde_json::from_str::<ResultJson>(&text) {
                found.push((p, r));
            }
        }
    }
    Ok(())
}

/// Collates every result JSON under `dir` into `report.md` and `report.csv`,
/// grouped by method.
pub fn cmd_report(dir: &Path, out: &mut dyn Write) -> Result<String, CliError> {
    let mut found = Vec::new();
    collect_json(dir, &mut found)?;
    if found.is_empty() {
        return Err(CliError::Input(format!("no result files under {}", dir.display())));
    }
    let order = |m: &str| Method::from_name(m).map_or(usize::MAX, |m| Method::ALL.iter().position(|x| *x == m).unwrap());
    found.sort_by(|(pa, a), (pb, b)| {
        order(&a.method)
            .cmp(&order(&b.method))
            .then_with(|| a.system.cmp(&b.system))
            .then_with(|| a.sigma.total_cmp(&b.sigma))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| pa.cmp(pb))
    });
    let n_states = found.iter().map(|(_, r)| r.equations.len()).max().unwrap_or(0);
    let e_headers: Vec<String> = (1..=n_states).map(|k| format!("E(x{k})")).collect();

    let mut md = String::from("| method | system | sigma | alpha | seed | equations |");
    let mut csv = String::from("method,system,sigma,alpha,seed,equations");
    for h in &e_headers {
        write!(md, " {h} |").unwrap();
        write!(csv, ",{h}").unwrap();
    }
    md.push_str(" E_total |\n|");
    csv.push_str(",E_total\n");
    for _ in 0..7 + n_states {
        md.push_str("---|");
    }
    md.push('\n');
    for (_, r) in &found {
        let cells: Vec<String> = (0..n_states)
            .map(|k| r.errors.as_ref().and_then(|e| e.get(k)).map_or(String::new(), |v| format!("{v:.4}")))
            .collect();
        let total = r.errors.as_ref().map_or(String::new(), |e| format!("{:.4}", e.iter().sum::<f64>()));
        writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.method,
            r.system,
            r.sigma,
            r.alpha,
            r.seed,
            r.equations.join("<br>"),
            cells.join(" | "),
            total
        )
        .unwrap();
        writeln!(
            csv,
            "{},{},{},{},{},\"{}\",{},{}",
            r.method,
            r.system,
            r.sigma,
            r.alpha,
            r.seed,
            r.equations.join("; "),
            cells.join(","),
            total
        )
        .unwrap();
    }
    write_file(&dir.join("report.md"), &md)?;
    write_file(&dir.join("report.csv"), &csv)?;
    say(out, &md)?;
    Ok(md)
}
