//! Rigid inclusions settling under gravity: the constrained Stokes solve,
//! the rigidity projection, reflections, the colloidal corrector and the
//! exact identities used to check them.

mod constraint;
mod corrector;
mod identities;
mod reflections;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use corrector::{effective_viscosity, solve_colloidal_corrector, trace_free_basis, CorrectorSolution, ViscosityEstimate};
pub use identities::{check_energy_identity, settling_identity, surface_force_balance, SettlingIdentity, SurfaceBalance};
pub use reflections::{solve_by_reflections, ReflectionReport};

use constraint::{Constraints, MultiplierSystem};
use crate::error::{Error, Result};
use crate::linear_model::check_grid;
use crate::point_process::ParticleConfiguration;
use crate::torus::{SpectralField, StokesOperator, TorusDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iterations: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Relative CG residual after every iteration.
    pub residual_history: Vec<f64>,
    pub cg_residual: f64,
    /// Inclusion-to-fluid RMS ratio of the finite-difference strain rate.
    pub rigidity_ratio: f64,
    /// Relative distance of `φ` on the cells from its best rigid fit.
    pub rigid_fit_residual: f64,
    pub wall_time_s: f64,
    pub preconditioner: String,
}

#[derive(Debug, Clone)]
pub struct SuspensionSolution {
    pub phi: SpectralField,
    /// Pressure normalized to mean zero over the fluid cells.
    pub pressure: SpectralField,
    pub velocities: Vec<Vec<f64>>,
    /// `d=2`: one entry; `d=3`: the axial vector of `Θ_n`.
    pub angular_velocities: Vec<Vec<f64>>,
    /// `α_L = λ_L/(1 − λ_L)` with `λ_L` the cell volume fraction.
    pub backflow: f64,
    pub volume_fraction: f64,
    pub gravity: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub residuals: SolverDiagnostics,
}

impl SuspensionSolution {
    pub fn domain(&self) -> &TorusDomain {
        self.phi.domain()
    }

    pub fn cell_counts(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.len()).collect()
    }
}

fn check_vector(domain: &TorusDomain, e: &[f64]) -> Result<()> {
    if e.len() != domain.d {
        return Err(Error::Precondition(format!("gravity has {} components, expected {}", e.len(), domain.d)));
    }
    Ok(())
}

fn check_options(opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0) || opts.max_iterations == 0 {
        return Err(Error::Precondition("solver tolerance and iteration cap must be positive".into()));
    }
    Ok(())
}

/// Per-particle rigid motion of `φ + A` on the cells.
fn rigid_motions(cons: &Constraints, field: &[Vec<f64>], affine: Option<&[Vec<f64>]>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut v = cons.gather(field);
    if let Some(a) = affine {
        v.iter_mut().zip(cons.gather(a)).for_each(|(x, y)| *x += y);
    }
    cons.parts
        .iter()
        .enumerate()
        .map(|(n, p)| p.rigid_motion(cons.d, cons.slice(&v, n)))
        .unzip()
}

/// Pressure from the total source `body + Cᵀμ`, mean zero on fluid cells.
fn pressure_of(sys: &MultiplierSystem, body: Option<(&[f64], &[f64])>, mu: &[f64]) -> Vec<f64> {
    let n = sys.op.domain().len();
    let mut q = mu.to_vec();
    sys.cons.remove_rigid(&mut q);
    let mut src = sys.cons.scatter(&q, n);
    if let Some((s, e)) = body {
        for (a, comp) in src.iter_mut().enumerate() {
            comp.iter_mut().zip(s).for_each(|(x, y)| *x += y * e[a]);
        }
    }
    let spec: Vec<_> = src.iter().map(|c| sys.op.forward(c)).collect();
    let mut p = sys.op.inverse_real(sys.op.pressure_spectrum(&spec));
    let fluid = sys.cons.indicator(n);
    let (sum, count) = p
        .iter()
        .zip(&fluid)
        .filter(|(_, f)| **f == 0.0)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count > 0 {
        let m = sum / count as f64;
        p.iter_mut().for_each(|v| *v -= m);
    }
    p
}

/// Solves the rigid-inclusion sedimentation problem by minimizing
/// `½∫|∇φ|² − (1+α_L) e·∫_I φ` over mean-zero divergence-free fields that
/// are rigid on every inclusion.
pub fn solve_sedimentation(
    domain: &TorusDomain,
    config: &ParticleConfiguration,
    e: &[f64],
    opts: &SolverOptions,
) -> Result<SuspensionSolution> {
    check_vector(domain, e)?;
    check_options(opts)?;
    check_grid(domain, config)?;
    let op = StokesOperator::new(domain)?;
    let sys = MultiplierSystem::new(&op, config);
    let n = domain.len();
    let lambda = sys.cons.cell_count() as f64 / n as f64;
    let alpha = lambda / (1.0 - lambda);
    let body: Vec<f64> = sys.cons.indicator(n).iter().map(|v| v * (1.0 + alpha)).collect();
    let phi0 = op.velocity_scalar_source(&body, e);
    let (mu, phi, diag) = sys.solve(phi0, None, opts.tol, opts.max_iterations)?;
    Ok(assemble(&sys, config, mu, phi, diag, Some(&body), e, alpha, lambda))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    sys: &MultiplierSystem,
    config: &ParticleConfiguration,
    mu: Vec<f64>,
    phi: Vec<Vec<f64>>,
    diag: SolverDiagnostics,
    body: Option<&[f64]>,
    e: &[f64],
    alpha: f64,
    lambda: f64,
) -> SuspensionSolution {
    let domain = *sys.op.domain();
    let pressure = pressure_of(sys, body.map(|b| (b, e)), &mu);
    let (velocities, angular_velocities) = rigid_motions(&sys.cons, &phi, None);
    SuspensionSolution {
        phi: SpectralField::new(domain, phi).with_flags(true, true),
        pressure: SpectralField::scalar(domain, pressure),
        velocities,
        angular_velocities,
        backflow: alpha,
        volume_fraction: lambda,
        gravity: e.to_vec(),
        centers: config.centers.clone(),
        cells: sys.cons.parts.iter().map(|p| p.cells.clone()).collect(),
        residuals: diag,
    }
}

/// `H¹`-orthogonal projection of a divergence-free mean-zero field onto
/// fields rigid on every inclusion.
pub fn project_rigid(field: &SpectralField, config: &ParticleConfiguration, opts: &SolverOptions) -> Result<SpectralField> {
    let domain = *field.domain();
    check_options(opts)?;
    check_grid(&domain, config)?;
    if field.components() != domain.d {
        return Err(Error::Precondition("projection needs a vector field".into()));
    }
    if field.divergence_residual() > 1e-8 || field.mean_residual() > 1e-8 {
        return Err(Error::Precondition("field must be divergence-free with zero mean".into()));
    }
    let op = StokesOperator::new(&domain)?;
    let sys = MultiplierSystem::new(&op, config);
    let (_, phi, _) = sys.solve(field.values().to_vec(), None, opts.tol, opts.max_iterations)?;
    Ok(SpectralField::new(domain, phi).with_flags(true, true))
}

/// Per-particle CSV: index, center, `V`, `Θ`.
pub fn write_particles_csv(solution: &SuspensionSolution, path: &Path) -> Result<()> {
    let d = solution.domain().d;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["index".to_string()];
    header.extend((0..d).map(|a| format!("x{a}")));
    header.extend((0..d).map(|a| format!("v{a}")));
    let rot = solution.angular_velocities.first().map_or(if d == 2 { 1 } else { 3 }, |t| t.len());
    header.extend((0..rot).map(|a| format!("theta{a}")));
    w.write_record(&header)?;
    for (i, ((x, v), t)) in solution
        .centers
        .iter()
        .zip(&solution.velocities)
        .zip(&solution.angular_velocities)
        .enumerate()
    {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().chain(v).chain(t).map(|z| format!("{z:.17e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub domain: TorusDomain,
    pub particles: usize,
    pub gravity: Vec<f64>,
    pub backflow: f64,
    pub volume_fraction: f64,
    pub diagnostics: SolverDiagnostics,
    pub energy_identity_residual: Option<f64>,
    pub settling_identity: Option<SettlingIdentity>,
}

impl RunLog {
    pub fn new(solution: &SuspensionSolution) -> Self {
        RunLog {
            domain: *solution.domain(),
            particles: solution.velocities.len(),
            gravity: solution.gravity.clone(),
            backflow: solution.backflow,
            volume_fraction: solution.volume_fraction,
            diagnostics: solution.residuals.clone(),
            energy_identity_residual: check_energy_identity(solution).ok(),
            settling_identity: settling_identity(solution).ok(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
