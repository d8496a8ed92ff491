use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constraint::MultiplierSystem;
use super::{check_options, pressure_of, rigid_motions, SolverDiagnostics, SolverOptions};
use crate::error::{Error, Result};
use crate::linear_model::check_grid;
use crate::point_process::ParticleConfiguration;
use crate::statistics::jackknife;
use crate::torus::{dirichlet_inner, SpectralField, StokesOperator, TorusDomain};

#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub psi: SpectralField,
    pub pressure: SpectralField,
    pub strain: Vec<Vec<f64>>,
    /// Rigid motion of `ψ_E + E(x − x_n)` on each inclusion.
    pub velocities: Vec<Vec<f64>>,
    pub angular_velocities: Vec<Vec<f64>>,
    pub residuals: SolverDiagnostics,
}

fn check_strain(d: usize, e: &[Vec<f64>]) -> Result<()> {
    if e.len() != d || e.iter().any(|r| r.len() != d) {
        return Err(Error::Precondition(format!("strain must be {d}×{d}")));
    }
    let scale = e.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let trace: f64 = (0..d).map(|a| e[a][a]).sum();
    let asym = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).map(|(a, b)| (e[a][b] - e[b][a]).abs()).fold(0.0, f64::max);
    if trace.abs() > 1e-12 * scale || asym > 1e-12 * scale {
        return Err(Error::Precondition("strain must be symmetric and trace-free".into()));
    }
    Ok(())
}

/// Orthonormal basis (Frobenius product) of symmetric trace-free `d×d` matrices.
pub fn trace_free_basis(d: usize) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let s2 = 0.5f64.sqrt();
    for k in 1..d {
        // diag(1, …, 1, −k, 0, …) over the first k+1 entries
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut m = vec![vec![0.0; d]; d];
        for a in 0..k {
            m[a][a] = 1.0 / norm;
        }
        m[k][k] = -(k as f64) / norm;
        out.push(m);
    }
    for a in 0..d {
        for b in a + 1..d {
            let mut m = vec![vec![0.0; d]; d];
            m[a][b] = s2;
            m[b][a] = s2;
            out.push(m);
        }
    }
    out
}

/// Periodic-cell colloidal corrector: `ψ_E` mean-zero, divergence-free,
/// with `ψ_E + E(x − x_n)` rigid on every inclusion and force-free,
/// torque-free multipliers.
pub fn solve_colloidal_corrector(
    domain: &TorusDomain,
    config: &ParticleConfiguration,
    strain: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<CorrectorSolution> {
    check_options(opts)?;
    check_grid(domain, config)?;
    check_strain(domain.d, strain)?;
    let op = StokesOperator::new(domain)?;
    let sys = MultiplierSystem::new(&op, config);
    corrector_with(&sys, strain, opts)
}

fn corrector_with(sys: &MultiplierSystem, strain: &[Vec<f64>], opts: &SolverOptions) -> Result<CorrectorSolution> {
    let dom = *sys.op.domain();
    let d = dom.d;
    let n = dom.len();
    let mut affine = vec![vec![0.0; n]; d];
    for p in &sys.cons.parts {
        for (c, &cell) in p.cells.iter().enumerate() {
            let r = &p.offsets[c * d..(c + 1) * d];
            for a in 0..d {
                affine[a][cell] = (0..d).map(|b| strain[a][b] * r[b]).sum();
            }
        }
    }
    let (mu, psi, diag) = sys.solve(vec![vec![0.0; n]; d], Some(&affine), opts.tol, opts.max_iterations)?;
    let pressure = pressure_of(sys, None, &mu);
    let (velocities, angular_velocities) = rigid_motions(&sys.cons, &psi, Some(&affine));
    Ok(CorrectorSolution {
        psi: SpectralField::new(dom, psi).with_flags(true, true),
        pressure: SpectralField::scalar(dom, pressure),
        strain: strain.to_vec(),
        velocities,
        angular_velocities,
        residuals: diag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityEstimate {
    /// `B̄` in the coordinates of `basis`.
    pub matrix: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub basis: Vec<Vec<Vec<f64>>>,
    pub realizations: usize,
}

impl ViscosityEstimate {
    /// Eigenvalues of the symmetrized matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.matrix.len();
        let a = nalgebra::DMatrix::from_fn(m, m, |i, j| 0.5 * (self.matrix[i][j] + self.matrix[j][i]));
        let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Smallest eigenvalue with a jackknife error, from the per-realization Gram matrices.
    pub fn min_eigenvalue_stderr(&self, per_realization: &[Vec<Vec<f64>>]) -> (f64, f64) {
        let m = per_realization.len();
        let dim = self.matrix.len();
        jackknife(m, |skip| {
            let count = (m - skip.map_or(0, |_| 1)) as f64;
            let a = nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
                let s: f64 = per_realization
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| Some(*k) != skip)
                    .map(|(_, g)| 0.5 * (g[i][j] + g[j][i]))
                    .sum();
                s / count
            });
            a.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
        })
    }
}

/// `B̄_{E'E} = E[⨍(∇ψ_{E'} + E'):(∇ψ_E + E)]` over an orthonormal trace-free
/// basis. Also returns the per-realization matrices.
pub fn effective_viscosity(
    domain: &TorusDomain,
    ensemble: &[ParticleConfiguration],
    opts: &SolverOptions,
) -> Result<(ViscosityEstimate, Vec<Vec<Vec<f64>>>)> {
    if ensemble.len() < 5 {
        return Err(Error::InsufficientRealizations { needed: 5, got: ensemble.len() });
    }
    check_options(opts)?;
    let d = domain.d;
    let basis = trace_free_basis(d);
    let k = basis.len();
    let op = StokesOperator::new(domain)?;
    let per: Vec<Vec<Vec<f64>>> = ensemble
        .par_iter()
        .map(|config| -> Result<Vec<Vec<f64>>> {
            check_grid(domain, config)?;
            let sys = MultiplierSystem::new(&op, config);
            let psis: Vec<SpectralField> = basis
                .iter()
                .map(|e| corrector_with(&sys, e, opts).map(|c| c.psi))
                .collect::<Result<_>>()?;
            let mut g = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in 0..k {
                    let base = if i == j { 1.0 } else { 0.0 };
                    g[i][j] = base + dirichlet_inner(&psis[i], &psis[j]) / domain.volume();
                }
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let m = per.len();
    let mut matrix = vec![vec![0.0; k]; k];
    let mut stderr = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let vals: Vec<f64> = per.iter().map(|g| g[i][j]).collect();
            let (v, s) = jackknife(m, |skip| {
                let c = (m - skip.map_or(0, |_| 1)) as f64;
                vals.iter().enumerate().filter(|(x, _)| Some(*x) != skip).map(|(_, v)| v).sum::<f64>() / c
            });
            matrix[i][j] = v;
            stderr[i][j] = s;
        }
    }
    Ok((ViscosityEstimate { matrix, stderr, basis, realizations: m }, per))
}
