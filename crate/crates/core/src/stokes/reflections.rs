use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::constraint::{norm, MultiplierSystem};
use super::{assemble, check_options, check_vector, SolverDiagnostics, SolverOptions, SuspensionSolution};
use crate::error::Result;
use crate::linear_model::check_grid;
use crate::point_process::{min_pairwise_distance, ParticleConfiguration};
use crate::stokes::constraint::rigidity_ratio;
use crate::torus::{StokesOperator, TorusDomain};

/// Growth factor of the iterate difference treated as divergence.
const BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    /// `‖φ_{k+1} − φ_k‖/‖φ_k‖` for the correction pending after sweep `k`.
    pub differences: Vec<f64>,
    pub converged: bool,
    pub sweeps_used: usize,
    pub min_distance: Option<f64>,
}

fn l2(field: &[Vec<f64>]) -> f64 {
    field.iter().map(|c| norm(c).powi(2)).sum::<f64>().sqrt()
}

/// Jacobi sweeps of single-particle rigidity corrections. Divergence or
/// the sweep cap is a reported outcome, not an error.
pub fn solve_by_reflections(
    domain: &TorusDomain,
    config: &ParticleConfiguration,
    e: &[f64],
    opts: &SolverOptions,
    max_sweeps: usize,
) -> Result<(Option<SuspensionSolution>, ReflectionReport)> {
    check_vector(domain, e)?;
    check_options(opts)?;
    check_grid(domain, config)?;
    let start = Instant::now();
    let op = StokesOperator::new(domain)?;
    let sys = MultiplierSystem::new(&op, config);
    let n = domain.len();
    let lambda = sys.cons.cell_count() as f64 / n as f64;
    let alpha = lambda / (1.0 - lambda);
    let body: Vec<f64> = sys.cons.indicator(n).iter().map(|v| v * (1.0 + alpha)).collect();
    let mut phi = op.velocity_scalar_source(&body, e);
    let mut mu = vec![0.0; sys.cons.len];
    let min_distance = min_pairwise_distance(config).ok();
    let mut report = ReflectionReport { differences: Vec::new(), converged: false, sweeps_used: 0, min_distance };
    let correction = |phi: &[Vec<f64>]| {
        let r: Vec<f64> = sys.constrain(phi).iter().map(|v| -v).collect();
        let delta = sys.precondition(&r);
        let u = sys.velocity_of(&delta);
        (delta, u)
    };
    let (mut delta, mut u) = correction(&phi);
    if sys.cons.len > 0 {
        for sweep in 1..=max_sweeps {
            mu.iter_mut().zip(&delta).for_each(|(m, v)| *m += v);
            phi.iter_mut().zip(&u).for_each(|(f, g)| f.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            (delta, u) = correction(&phi);
            let size = l2(&phi);
            let diff = if size > 0.0 { l2(&u) / size } else { 0.0 };
            report.differences.push(diff);
            report.sweeps_used = sweep;
            if diff <= opts.tol {
                report.converged = true;
                break;
            }
            if !diff.is_finite() || diff > BLOWUP * report.differences[0].max(f64::MIN_POSITIVE) {
                break;
            }
        }
    } else {
        report.converged = true;
    }
    if !report.converged {
        return Ok((None, report));
    }
    let diag = SolverDiagnostics {
        iterations: report.sweeps_used,
        residual_history: report.differences.clone(),
        cg_residual: report.differences.last().copied().unwrap_or(0.0),
        rigidity_ratio: rigidity_ratio(domain, &sys.cons, &phi, None),
        rigid_fit_residual: sys.cons.rigid_fit_residual(&phi, None),
        wall_time_s: start.elapsed().as_secs_f64(),
        preconditioner: sys.preconditioner_name().to_string(),
    };
    let sol = assemble(&sys, config, mu, phi, diag, Some(&body), e, alpha, lambda);
    Ok((Some(sol), report))
}
