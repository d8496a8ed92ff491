//! `sediment`: sample, analyze, solve, sweep and verify from one binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sediment_core::harness::verify::{run_checks, Check};
use sediment_core::harness::{
    apply_override, emit_plot_data, persist_result, scaling_sweep_in, with_workers, ExperimentConfig, Model,
};
use sediment_core::linear_model::solve_linear;
use sediment_core::point_process::{min_pairwise_distance, ParticleConfiguration};
use sediment_core::statistics::{
    estimate_pair_correlation, estimate_structure_factor, hyperuniformity_metric, number_variance_curve, write_rows,
};
use sediment_core::stokes::{
    check_energy_identity, settling_identity, solve_sedimentation, write_particles_csv, RunLog, SolverOptions,
};
use sediment_core::torus::export::write_field;
use sediment_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_HARDCORE: u8 = 4;

#[derive(Parser)]
#[command(name = "sediment", version, about = "Settling rigid spheres in a periodic Stokes fluid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `dotted.key=value`, applied after the file is read. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (default: the SEDIMENT_WORKERS variable, else all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the ensemble at every tank size and write configuration files.
    Sample(Common),
    /// Pair correlation, structure factor, number variance and the
    /// hyperuniformity metric over stored configurations.
    Stats {
        #[command(flatten)]
        common: Common,
        /// Directory written by `sample` (default: `<out>/configs`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Solve one realization and report the identities.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Particle configuration JSON; otherwise realization `index` at the first tank size.
        #[arg(long)]
        particles: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Scaling sweep over the tank sizes. Reruns skip finished realizations.
    Sweep(Common),
    /// Run the invariant battery.
    Verify(Common),
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            Error::FailureCap { .. } | Error::NotConverged { .. } => EXIT_SOLVER,
            Error::Overlap(..) => EXIT_HARDCORE,
            _ => EXIT_FAILURE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_FAILURE, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.into() }
}

/// Parsed file with `--seed` and `--set` applied, as a TOML tree.
fn effective_tree(common: &Common) -> Result<toml::Value, Failure> {
    let mut tree = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            toml::from_str::<toml::Value>(&text).map_err(|e| config_error(e.to_string()))?
        }
        None => toml::Value::Table(Default::default()),
    };
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| config_error(format!("override {o:?} is not KEY=VALUE")))?;
        apply_override(&mut tree, k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        apply_override(&mut tree, "ensemble.seed", &seed.to_string())?;
    }
    Ok(tree)
}

fn experiment(common: &Common) -> Result<ExperimentConfig, Failure> {
    if common.config.is_none() {
        return Err(config_error("--config is required"));
    }
    let mut cfg = ExperimentConfig::from_value(effective_tree(common)?)?;
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn write_log(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).map_err(Error::from)?)?;
    Ok(())
}

fn header(command: &str, cfg: &serde_json::Value, start: Instant) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "effective_config": cfg,
        "wall_time_s": start.elapsed().as_secs_f64(),
    })
}

fn config_json(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn cmd_sample(common: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = experiment(common)?;
    let root = cfg.output.join("configs");
    let mut summary = Vec::new();
    for &l in &cfg.lengths {
        let dom = cfg.domain(l)?;
        let ensemble = with_workers(common.workers, || cfg.ensemble.sample_all(&dom))??;
        let dir = root.join(format!("L{l}"));
        fs::create_dir_all(&dir)?;
        let mut intensities = Vec::new();
        let mut min_distances = Vec::new();
        for (i, c) in ensemble.iter().enumerate() {
            if let Err(err) = c.validate() {
                return Err(Failure { code: EXIT_HARDCORE, message: format!("realization {i} at L = {l}: {err}") });
            }
            c.write_json(&dir.join(format!("config_{i:06}.json")))?;
            intensities.push(c.intensity());
            min_distances.push(min_pairwise_distance(c).ok());
        }
        summary.push(json!({ "L": l, "realizations": ensemble.len(), "intensities": intensities, "min_distances": min_distances }));
        println!("L = {l}: wrote {} configurations", ensemble.len());
    }
    let mut log = header("sample", &config_json(&cfg), start);
    log["summary"] = json!(summary);
    write_log(&cfg.output, "sample_log.json", &log)
}

fn read_ensemble(dir: &Path) -> Result<Vec<ParticleConfiguration>, Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ParticleConfiguration::read_json(p).map_err(Failure::from)).collect()
}

fn cmd_stats(common: &Common, input: Option<&Path>) -> Result<(), Failure> {
    let start = Instant::now();
    let tree = effective_tree(common)?;
    let out = common
        .out
        .clone()
        .or_else(|| tree.get("output").and_then(|v| v.as_str()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| out.join("configs"));
    if !input.is_dir() {
        return Err(config_error(format!("input directory {} does not exist", input.display())));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&input)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    if dirs.is_empty() {
        dirs.push(input.clone());
    }
    let mut report = Vec::new();
    for dir in dirs {
        let ensemble = read_ensemble(&dir)?;
        if ensemble.is_empty() {
            continue;
        }
        let name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let target = out.join("stats").join(&name);
        fs::create_dir_all(&target)?;
        let l = ensemble[0].domain.l;
        let meta = json!({ "source": dir, "L": l, "realizations": ensemble.len() });
        let mut entry = json!({ "set": name, "L": l, "realizations": ensemble.len() });
        let (pair, sk, nv, metric) = with_workers(common.workers, || {
            let r_max = 0.5 * l;
            let bins = ((r_max / (2.0 * ensemble[0].domain.h())).floor() as usize).clamp(1, 40);
            let edges: Vec<f64> = (0..=bins).map(|i| r_max * i as f64 / bins as f64).collect();
            let radii: Vec<f64> = (1..=8).map(|i| 0.25 * l * i as f64 / 8.0).collect();
            (
                estimate_pair_correlation(&ensemble, &edges),
                estimate_structure_factor(&ensemble, 2.0 * std::f64::consts::PI * 8.0 / l),
                number_variance_curve(&ensemble, &radii),
                hyperuniformity_metric(&ensemble),
            )
        })?;
        match pair {
            Ok(p) => write_rows(&p.rows(), &meta, &target.join("g2.csv"))?,
            Err(e) => entry["g2_error"] = json!(e.to_string()),
        }
        match sk {
            Ok(s) => write_rows(&s.rows(), &meta, &target.join("structure_factor.csv"))?,
            Err(e) => entry["structure_factor_error"] = json!(e.to_string()),
        }
        match nv {
            Ok(v) => {
                write_rows(&v.rows(), &meta, &target.join("number_variance.csv"))?;
                entry["number_variance_fit"] = json!(v.fit);
            }
            Err(e) => entry["number_variance_error"] = json!(e.to_string()),
        }
        match metric {
            Ok(m) => entry["hyperuniformity_metric"] = json!(m),
            Err(e) => entry["hyperuniformity_metric_error"] = json!(e.to_string()),
        }
        println!("{name}: {} configurations analyzed", ensemble.len());
        report.push(entry);
    }
    let mut log = header("stats", &json!(tree), start);
    log["sets"] = json!(report);
    write_log(&out, "stats_log.json", &log)
}

fn cmd_solve(common: &Common, particles: Option<&Path>, index: u64) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = experiment(common)?;
    let config = match particles {
        Some(p) => ParticleConfiguration::read_json(p).map_err(|e| config_error(e.to_string()))?,
        None => cfg.ensemble.sample(&cfg.domain(cfg.lengths[0])?, index)?,
    };
    let dom = config.domain;
    let e = cfg.gravity();
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir)?;
    let mut log = header("solve", &config_json(&cfg), start);
    match cfg.model {
        Model::Full => {
            let sol = match with_workers(common.workers, || solve_sedimentation(&dom, &config, &e, &cfg.solver_options()))? {
                Ok(s) => s,
                Err(err) => {
                    if let Error::NotConverged { history, .. } = &err {
                        log["residual_history"] = json!(history);
                    }
                    log["error"] = json!(err.to_string());
                    write_log(&dir, "solve_log.json", &log)?;
                    return Err(err.into());
                }
            };
            write_particles_csv(&sol, &dir.join("particles.csv"))?;
            write_field(&sol.phi, &dir.join("velocity.raw"))?;
            write_field(&sol.pressure, &dir.join("pressure.raw"))?;
            let run = RunLog::new(&sol);
            log["run"] = json!(run);
            log["energy_identity_residual"] = json!(check_energy_identity(&sol).ok());
            log["settling_identity"] = json!(settling_identity(&sol).ok());
            println!(
                "converged in {} iterations; energy identity residual {:?}; settling gap {:?}",
                sol.residuals.iterations,
                run.energy_identity_residual,
                run.settling_identity.map(|s| s.gap)
            );
        }
        Model::Linear => {
            let sol = solve_linear(&dom, &config, &e)?;
            write_field(&sol.phi, &dir.join("velocity.raw"))?;
            write_field(&sol.pressure, &dir.join("pressure.raw"))?;
            log["velocities"] = json!(sol.velocities);
            log["volume_fraction"] = json!(sol.volume_fraction);
            println!("linear solve: {} particles", sol.velocities.len());
        }
        Model::ScalarProxy => return Err(config_error("solve needs model = \"linear\" or \"full\"")),
    }
    log["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    write_log(&dir, "solve_log.json", &log)
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = experiment(common)?;
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir)?;
    let result = with_workers(common.workers, || scaling_sweep_in(&cfg, Some(&dir.join("records"))))?;
    let result = match result {
        Ok(r) => r,
        Err(err) => {
            let mut log = header("sweep", &config_json(&cfg), start);
            log["error"] = json!(err.to_string());
            write_log(&dir, "sweep_log.json", &log)?;
            return Err(err.into());
        }
    };
    persist_result(&result, &dir.join("result.json"))?;
    let plots = emit_plot_data(&result, &dir.join("plots"))?;
    for p in &result.points {
        println!(
            "L = {:>6}: speed {:.6e} ± {:.2e}, fluctuation {:.6e} ± {:.2e}, {} realizations",
            p.l, p.speed, p.speed_stderr, p.fluctuation, p.fluctuation_stderr, p.realizations
        );
    }
    println!(
        "fluctuation exponent {:.4} ± {:.4}; speed exponent {:.4} ± {:.4}",
        result.fluctuation.power.exponent,
        result.fluctuation.power.stderr,
        result.speed.power.exponent,
        result.speed.power.stderr
    );
    let mut log = header("sweep", &config_json(&cfg), start);
    log["plots"] = json!(plots);
    write_log(&dir, "sweep_log.json", &log)
}

fn cmd_verify(common: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let tree = effective_tree(common)?;
    let num = |key: &str| tree.get(key).and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)));
    let defaults = SolverOptions::default();
    let opts = SolverOptions {
        tol: num("tol").unwrap_or(defaults.tol),
        max_iterations: num("max_iterations").map_or(defaults.max_iterations, |v| v as usize),
    };
    if !(opts.tol > 0.0) || opts.max_iterations == 0 {
        return Err(config_error("tol and max_iterations must be positive"));
    }
    let checks: Vec<Check> = with_workers(common.workers, || run_checks(&opts))??;
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        println!(
            "{} {:<45} {:>12.4e}  threshold {:.1e}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.note.as_ref().map(|n| format!("  ({n})")).unwrap_or_default()
        );
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut log = header("verify", &json!(tree), start);
    log["solver"] = json!(opts);
    log["checks"] = json!(checks);
    write_log(&out, "verify_log.json", &log)?;
    if all {
        Ok(())
    } else {
        Err(Failure { code: EXIT_FAILURE, message: "verification failed".into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sample(c) => cmd_sample(c),
        Command::Stats { common, input } => cmd_stats(common, input.as_deref()),
        Command::Solve { common, particles, index } => cmd_solve(common, particles.as_deref(), *index),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Verify(c) => cmd_verify(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
