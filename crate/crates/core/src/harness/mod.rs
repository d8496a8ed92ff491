//! Monte Carlo campaigns: ensembles over a list of tank sizes, scaling fits,
//! persistence and plot data.

pub mod verify;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_model::{linear_velocities, pooled_fluctuation, proxy_kernels, proxy_statistics_from};
use crate::point_process::EnsembleSpec;
use crate::statistics::{fit_log_law, fit_power_law, mean, standard_error, LinearFit, PowerLawFit};
use crate::stokes::{solve_sedimentation, SolverDiagnostics, SolverOptions};
use crate::torus::{StokesOperator, TorusDomain};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SEDIMENT_WORKERS";

/// Largest tolerated fraction of failed realizations per tank size.
pub const FAILURE_CAP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Linear,
    Full,
    ScalarProxy,
}

fn default_ppu() -> f64 {
    4.0
}

fn default_tol() -> f64 {
    1e-8
}

fn default_iterations() -> usize {
    2000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub d: usize,
    pub ensemble: EnsembleSpec,
    pub lengths: Vec<f64>,
    /// Grid points per unit length, fixed across the sweep.
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
    /// Defaults to `−e_d`.
    #[serde(default)]
    pub gravity: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        let dims = match self.model {
            Model::ScalarProxy => 1..=4,
            _ => 2..=3,
        };
        if !dims.contains(&self.d) {
            return Err(Error::Config(format!("model {:?} does not support d = {}", self.model, self.d)));
        }
        if self.lengths.is_empty() {
            return Err(Error::Config("length list is empty".into()));
        }
        if self.lengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("lengths must be strictly increasing".into()));
        }
        if !(self.points_per_unit > 0.0) {
            return Err(Error::Config("points_per_unit must be positive".into()));
        }
        if let Some(e) = &self.gravity {
            if e.len() != self.d {
                return Err(Error::Config(format!("gravity has {} components, expected {}", e.len(), self.d)));
            }
        }
        if !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config("tol and max_iterations must be positive".into()));
        }
        for &l in &self.lengths {
            self.domain(l)?;
        }
        Ok(())
    }

    pub fn domain(&self, l: f64) -> Result<TorusDomain> {
        TorusDomain::with_density(self.d, l, self.points_per_unit).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn gravity(&self) -> Vec<f64> {
        self.gravity.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; self.d];
            e[self.d - 1] = -1.0;
            e
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iterations: self.max_iterations }
    }
}

/// Replaces the entry at a dotted key. The raw value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key:?}")));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} descends into a non-table")))?;
        node = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::Config(format!("override {key:?} descends into a non-table")))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers.or_else(workers_from_env) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub particles: usize,
    pub volume_fraction: f64,
    /// `(1/N) Σ ê·V_n`.
    pub mean_velocity: Option<f64>,
    /// RMS of `V_n − (1/N)Σ V_m` within the realization.
    pub velocity_spread: Option<f64>,
    pub velocities: Vec<Vec<f64>>,
    /// Scalar-proxy sums `(Σ F(x_n), Σ G(x_n))`.
    pub proxy: Option<(Vec<f64>, f64)>,
    pub diagnostics: Option<SolverDiagnostics>,
    pub failure: Option<String>,
}

impl RealizationRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

fn velocity_summary(v: &[Vec<f64>], e: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    let along = v.iter().map(|x| x.iter().zip(e).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>() / (n * norm);
    let d = e.len();
    let m: Vec<f64> = (0..d).map(|a| v.iter().map(|x| x[a]).sum::<f64>() / n).collect();
    let spread = (v.iter().map(|x| (0..d).map(|a| (x[a] - m[a]).powi(2)).sum::<f64>()).sum::<f64>() / n).sqrt();
    (Some(along), Some(spread))
}

/// Shared per-size state, built once per tank size.
enum Solver {
    Linear(StokesOperator),
    Full,
    Proxy(crate::linear_model::ProxyKernels),
}

fn solver_for(config: &ExperimentConfig, domain: &TorusDomain) -> Result<Solver> {
    Ok(match config.model {
        Model::Linear => Solver::Linear(StokesOperator::new(domain)?),
        Model::Full => Solver::Full,
        Model::ScalarProxy => Solver::Proxy(proxy_kernels(domain)?),
    })
}

fn realize(config: &ExperimentConfig, domain: &TorusDomain, solver: &Solver, l: f64, index: usize) -> RealizationRecord {
    let e = config.gravity();
    let mut rec = RealizationRecord {
        index,
        l,
        particles: 0,
        volume_fraction: 0.0,
        mean_velocity: None,
        velocity_spread: None,
        velocities: Vec::new(),
        proxy: None,
        diagnostics: None,
        failure: None,
    };
    let sample = match config.ensemble.sample(domain, index as u64) {
        Ok(c) => c,
        Err(err) => {
            rec.failure = Some(err.to_string());
            return rec;
        }
    };
    rec.particles = sample.len();
    rec.volume_fraction = sample.volume_fraction();
    let outcome: Result<()> = (|| {
        match solver {
            Solver::Linear(op) => rec.velocities = linear_velocities(op, &sample, &e)?,
            Solver::Full => {
                let sol = solve_sedimentation(domain, &sample, &e, &config.solver_options())?;
                rec.velocities = sol.velocities;
                rec.diagnostics = Some(sol.residuals);
            }
            Solver::Proxy(k) => rec.proxy = Some(k.sums(&sample)),
        }
        Ok(())
    })();
    if let Err(err) = outcome {
        rec.failure = Some(err.to_string());
    }
    (rec.mean_velocity, rec.velocity_spread) = velocity_summary(&rec.velocities, &e);
    rec
}

/// All realizations at tank size `l`, in index order. Failures are recorded;
/// the call errors only when every realization fails.
pub fn run_ensemble(config: &ExperimentConfig, l: f64) -> Result<Vec<RealizationRecord>> {
    run_ensemble_in(config, l, None)
}

fn record_path(dir: &Path, l: f64, index: usize) -> PathBuf {
    dir.join(format!("L{l}")).join(format!("r{index:06}.json"))
}

/// As [`run_ensemble`], reusing and writing per-realization JSON records under
/// `store` so that an interrupted sweep can resume.
pub fn run_ensemble_in(config: &ExperimentConfig, l: f64, store: Option<&Path>) -> Result<Vec<RealizationRecord>> {
    let domain = config.domain(l)?;
    let solver = solver_for(config, &domain)?;
    let m = config.ensemble.realizations;
    if let Some(dir) = store {
        fs::create_dir_all(dir.join(format!("L{l}")))?;
    }
    let records: Vec<RealizationRecord> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<RealizationRecord> {
            if let Some(dir) = store {
                let path = record_path(dir, l, i);
                if let Ok(text) = fs::read_to_string(&path) {
                    if let Ok(rec) = serde_json::from_str::<RealizationRecord>(&text) {
                        if rec.index == i && rec.l == l {
                            return Ok(rec);
                        }
                    }
                }
                let rec = realize(config, &domain, &solver, l, i);
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, serde_json::to_string(&rec)?)?;
                fs::rename(&tmp, &path)?;
                Ok(rec)
            } else {
                Ok(realize(config, &domain, &solver, l, i))
            }
        })
        .collect::<Result<_>>()?;
    if records.iter().all(|r| r.failed()) {
        return Err(Error::Data(format!(
            "all {m} realizations failed at L = {l}: {}",
            records[0].failure.as_deref().unwrap_or("")
        )));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    #[serde(rename = "L")]
    pub l: f64,
    /// Mean settling speed, or the speed-proxy variance.
    pub speed: f64,
    pub speed_stderr: f64,
    /// Pooled `σ_L`, or the fluctuation-proxy variance.
    pub fluctuation: f64,
    pub fluctuation_stderr: f64,
    pub realizations: usize,
    pub failures: Vec<FailureNote>,
    pub mean_particles: f64,
    pub mean_volume_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub power: PowerLawFit,
    /// Against `log L`, of the value squared when `log_of_square`.
    pub log_law: LinearFit,
    pub log_of_square: bool,
}

impl Fits {
    pub fn new(ls: &[f64], ys: &[f64], log_of_square: bool) -> Result<Fits> {
        Ok(Fits { power: fit_power_law(ls, ys, None)?, log_law: fit_log_law(ls, ys, log_of_square)?, log_of_square })
    }

    /// The log-law fit expressed in the units of the value.
    pub fn log_law_value(&self, l: f64) -> f64 {
        let y = self.log_law.intercept + self.log_law.slope * l.ln();
        if self.log_of_square {
            y.max(0.0).sqrt()
        } else {
            y
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub schema_version: u32,
    pub model: Model,
    pub d: usize,
    pub points: Vec<ScalingPoint>,
    pub speed: Fits,
    pub fluctuation: Fits,
    /// The configuration that produced the result, verbatim.
    pub config: Option<ExperimentConfig>,
}

impl ScalingResult {
    /// Fits both observables over the given points.
    pub fn from_points(model: Model, d: usize, points: Vec<ScalingPoint>) -> Result<Self> {
        let ls: Vec<f64> = points.iter().map(|p| p.l).collect();
        let speed: Vec<f64> = points.iter().map(|p| p.speed).collect();
        let fluct: Vec<f64> = points.iter().map(|p| p.fluctuation).collect();
        let square = model != Model::ScalarProxy;
        Ok(ScalingResult {
            schema_version: SCHEMA_VERSION,
            model,
            d,
            speed: Fits::new(&ls, &speed, square)?,
            fluctuation: Fits::new(&ls, &fluct, square)?,
            points,
            config: None,
        })
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.l).collect()
    }
}

/// Aggregates one tank size, enforcing the failure cap.
pub fn aggregate(model: Model, l: f64, records: &[RealizationRecord]) -> Result<ScalingPoint> {
    let total = records.len();
    let failures: Vec<FailureNote> = records
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|m| FailureNote { index: r.index, message: m.clone() }))
        .collect();
    if failures.len() as f64 > FAILURE_CAP * total as f64 {
        return Err(Error::FailureCap { failed: failures.len(), total });
    }
    let ok: Vec<&RealizationRecord> = records.iter().filter(|r| !r.failed()).collect();
    let mean_particles = mean(&ok.iter().map(|r| r.particles as f64).collect::<Vec<_>>());
    let mean_volume_fraction = mean(&ok.iter().map(|r| r.volume_fraction).collect::<Vec<_>>());
    let (speed, speed_stderr, fluctuation, fluctuation_stderr) = match model {
        Model::ScalarProxy => {
            let samples: Vec<(Vec<f64>, f64)> = ok.iter().filter_map(|r| r.proxy.clone()).collect();
            if samples.len() < 2 {
                return Err(Error::InsufficientRealizations { needed: 2, got: samples.len() });
            }
            let s = proxy_statistics_from(&samples);
            (s.speed_proxy_variance, s.speed_proxy_stderr, s.fluctuation_proxy_variance, s.fluctuation_proxy_stderr)
        }
        _ => {
            let speeds: Vec<f64> = ok.iter().filter_map(|r| r.mean_velocity).collect();
            let velocities: Vec<Vec<Vec<f64>>> = ok.iter().map(|r| r.velocities.clone()).collect();
            let (sigma, sigma_se) = pooled_fluctuation(&velocities)?;
            (mean(&speeds), standard_error(&speeds), sigma, sigma_se)
        }
    };
    Ok(ScalingPoint {
        l,
        speed,
        speed_stderr,
        fluctuation,
        fluctuation_stderr,
        realizations: ok.len(),
        failures,
        mean_particles,
        mean_volume_fraction,
    })
}

/// Ensembles at every tank size, aggregated and fitted.
pub fn scaling_sweep(config: &ExperimentConfig) -> Result<ScalingResult> {
    scaling_sweep_in(config, None)
}

/// As [`scaling_sweep`], resuming from per-realization records under `store`.
pub fn scaling_sweep_in(config: &ExperimentConfig, store: Option<&Path>) -> Result<ScalingResult> {
    config.validate()?;
    if config.lengths.len() < 3 {
        return Err(Error::Config("a sweep needs at least 3 tank sizes".into()));
    }
    if config.ensemble.realizations < 20 {
        return Err(Error::Config("a sweep needs at least 20 realizations".into()));
    }
    let points = config
        .lengths
        .iter()
        .map(|&l| aggregate(config.model, l, &run_ensemble_in(config, l, store)?))
        .collect::<Result<Vec<_>>>()?;
    let mut result = ScalingResult::from_points(config.model, config.d, points)?;
    result.config = Some(config.clone());
    Ok(result)
}

/// JSON result plus a per-size CSV next to it (same stem, `.csv`).
pub fn persist_result(result: &ScalingResult, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(result)?)?;
    let mut w = csv::Writer::from_path(path.with_extension("csv"))?;
    w.write_record([
        "L",
        "speed",
        "speed_stderr",
        "fluctuation",
        "fluctuation_stderr",
        "realizations",
        "failures",
        "mean_particles",
        "mean_volume_fraction",
        "seed_range",
    ])?;
    let seeds = result
        .config
        .as_ref()
        .map(|c| format!("{}:0..{}", c.ensemble.seed, c.ensemble.realizations))
        .unwrap_or_default();
    for p in &result.points {
        w.write_record(&[
            format!("{}", p.l),
            format!("{:.17e}", p.speed),
            format!("{:.17e}", p.speed_stderr),
            format!("{:.17e}", p.fluctuation),
            format!("{:.17e}", p.fluctuation_stderr),
            p.realizations.to_string(),
            p.failures.len().to_string(),
            format!("{:.17e}", p.mean_particles),
            format!("{:.17e}", p.mean_volume_fraction),
            seeds.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_result(path: &Path) -> Result<ScalingResult> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Data("result has no schema_version".into()))? as u32;
    if found > SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found, supported: SCHEMA_VERSION });
    }
    Ok(serde_json::from_value(value)?)
}

/// Number of samples on the fitted curves.
pub const CURVE_POINTS: usize = 50;

/// Writes `{speed,fluctuation}_points.csv` (L, value, stderr) and
/// `{speed,fluctuation}_fit.csv` (L, power law, log law, 50 log-spaced rows)
/// into `dir`. Returns the paths written.
pub fn emit_plot_data(result: &ScalingResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.points.is_empty() {
        return Err(Error::Data("result has no points to plot".into()));
    }
    fs::create_dir_all(dir)?;
    let ls = result.lengths();
    let (lo, hi) = (ls[0].ln(), ls[ls.len() - 1].ln());
    let mut written = Vec::new();
    for (name, fits, get) in [
        ("speed", &result.speed, (|p: &ScalingPoint| (p.speed, p.speed_stderr)) as fn(&ScalingPoint) -> (f64, f64)),
        ("fluctuation", &result.fluctuation, |p: &ScalingPoint| (p.fluctuation, p.fluctuation_stderr)),
    ] {
        let path = dir.join(format!("{name}_points.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["L", "value", "stderr"])?;
        for p in &result.points {
            let (v, s) = get(p);
            w.write_record(&[format!("{}", p.l), format!("{v:.17e}"), format!("{s:.17e}")])?;
        }
        w.flush()?;
        written.push(path);
        let path = dir.join(format!("{name}_fit.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["L", "power_law", "log_law"])?;
        for i in 0..CURVE_POINTS {
            let t = i as f64 / (CURVE_POINTS - 1) as f64;
            let l = (lo + t * (hi - lo)).exp();
            w.write_record(&[
                format!("{l:.17e}"),
                format!("{:.17e}", fits.power.eval(l)),
                format!("{:.17e}", fits.log_law_value(l)),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(l: f64, v: f64) -> ScalingPoint {
        ScalingPoint {
            l,
            speed: v,
            speed_stderr: 0.01 * v,
            fluctuation: v,
            fluctuation_stderr: 0.01 * v,
            realizations: 20,
            failures: Vec::new(),
            mean_particles: 1.0,
            mean_volume_fraction: 0.01,
        }
    }

    #[test]
    fn injected_square_root_law() {
        let pts = [8.0, 16.0, 32.0, 64.0].iter().map(|&l| point(l, f64::sqrt(l))).collect();
        let r = ScalingResult::from_points(Model::Linear, 3, pts).unwrap();
        assert!((r.fluctuation.power.exponent - 0.5).abs() < 1e-12);
        assert!(r.fluctuation.log_of_square);
    }

    #[test]
    fn override_nested_key() {
        let mut v: toml::Value = toml::from_str("a = 1\n[b]\nc = 2").unwrap();
        apply_override(&mut v, "b.c", "3.5").unwrap();
        apply_override(&mut v, "b.name", "matern").unwrap();
        apply_override(&mut v, "x.y", "[1, 2]").unwrap();
        assert_eq!(v["b"]["c"].as_float(), Some(3.5));
        assert_eq!(v["b"]["name"].as_str(), Some("matern"));
        assert_eq!(v["x"]["y"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut v, "a.z", "1").is_err());
    }

    #[test]
    fn failure_cap() {
        let rec = |i: usize, fail: bool| RealizationRecord {
            index: i,
            l: 8.0,
            particles: 1,
            volume_fraction: 0.01,
            mean_velocity: Some(1.0),
            velocity_spread: Some(0.0),
            velocities: vec![vec![0.0, -1.0 - 0.01 * i as f64]],
            proxy: None,
            diagnostics: None,
            failure: fail.then(|| "no".to_string()),
        };
        let ok: Vec<_> = (0..20).map(|i| rec(i, i == 3)).collect();
        let p = aggregate(Model::Linear, 8.0, &ok);
        assert!(matches!(p, Err(Error::InsufficientRealizations { .. })));
        let ok: Vec<_> = (0..40).map(|i| rec(i, i == 3 || i == 9)).collect();
        let p = aggregate(Model::Linear, 8.0, &ok).unwrap();
        assert_eq!(p.realizations, 38);
        assert_eq!(p.failures.iter().map(|f| f.index).collect::<Vec<_>>(), vec![3, 9]);
        let bad: Vec<_> = (0..40).map(|i| rec(i, i < 3)).collect();
        assert!(matches!(aggregate(Model::Linear, 8.0, &bad), Err(Error::FailureCap { failed: 3, total: 40 })));
    }
}
