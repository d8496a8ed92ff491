//! Desk-scale invariant battery with measured values against thresholds.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linear_model::solve_linear;
use crate::point_process::{EnsembleSpec, ParticleConfiguration, ProcessKind};
use crate::statistics::{estimate_structure_factor, hyperuniformity_metric};
use crate::stokes::{
    check_energy_identity, effective_viscosity, project_rigid, settling_identity, solve_by_reflections,
    solve_sedimentation, SolverOptions,
};
use crate::torus::TorusDomain;

/// Rigidity and reformulation thresholds are pinned to this tolerance,
/// independent of the tolerance the solves run with.
pub const REFERENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub note: Option<String>,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, passed: value <= threshold, note: None }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, passed: value >= threshold, note: None }
    }

    fn failed(name: &str, threshold: f64, err: impl ToString) -> Check {
        Check { name: name.into(), value: f64::NAN, threshold, passed: false, note: Some(err.to_string()) }
    }
}

/// Two particles on `d=2, L=8, n=64`.
pub fn tiny_instance() -> ParticleConfiguration {
    let dom = TorusDomain::new(2, 8.0, 64).expect("valid domain");
    ParticleConfiguration::new(dom, 0.1, vec![vec![-1.93, 0.41], vec![1.37, -0.77]])
}

/// Two particles at distance 11 on `d=2, L=24, n=96`.
pub fn dilute_pair() -> ParticleConfiguration {
    let dom = TorusDomain::new(2, 24.0, 96).expect("valid domain");
    ParticleConfiguration::new(dom, 0.1, vec![vec![-5.3, 0.2], vec![5.7, -0.1]])
}

fn tiny_checks(opts: &SolverOptions, out: &mut Vec<Check>) {
    let config = tiny_instance();
    let dom = config.domain;
    let e = [0.0, -1.0];
    let sol = match solve_sedimentation(&dom, &config, &e, opts) {
        Ok(s) => s,
        Err(err) => {
            out.push(Check::failed("rigidity ratio (tiny instance)", REFERENCE_TOL, err));
            return;
        }
    };
    out.push(Check::at_most("rigidity ratio (tiny instance)", sol.residuals.rigidity_ratio, REFERENCE_TOL));
    out.push(Check::at_most("rigid-motion fit residual", sol.residuals.rigid_fit_residual, 10.0 * REFERENCE_TOL));
    out.push(Check::at_most("divergence residual", sol.phi.divergence_residual(), 1e-12));
    out.push(Check::at_most("mean residual", sol.phi.mean_residual(), 1e-12));
    match check_energy_identity(&sol) {
        Ok(r) => out.push(Check::at_most("energy identity residual", r, 1e-4)),
        Err(err) => out.push(Check::failed("energy identity residual", 1e-4, err)),
    }
    match settling_identity(&sol) {
        Ok(s) => out.push(Check::at_most("settling identity gap", s.gap, 1e-3)),
        Err(err) => out.push(Check::failed("settling identity gap", 1e-3, err)),
    }
    let reform = solve_linear(&dom, &config, &e).and_then(|lin| {
        let pi = project_rigid(&lin.phi, &config, opts)?;
        Ok(pi.scale(1.0 / (1.0 - lin.volume_fraction)).relative_distance(&sol.phi))
    });
    match reform {
        Ok(r) => out.push(Check::at_most("projection reformulation", r, 10.0 * REFERENCE_TOL)),
        Err(err) => out.push(Check::failed("projection reformulation", 10.0 * REFERENCE_TOL, err)),
    }
    match solve_sedimentation(&dom, &config, &[0.0, 1.0], opts) {
        Ok(neg) => out.push(Check::at_most("gravity parity", neg.phi.add(&sol.phi).l2_norm() / sol.phi.l2_norm(), REFERENCE_TOL)),
        Err(err) => out.push(Check::failed("gravity parity", REFERENCE_TOL, err)),
    }
}

fn reflection_check(opts: &SolverOptions, out: &mut Vec<Check>) {
    let config = dilute_pair();
    let dom = config.domain;
    let e = [0.0, -1.0];
    let name = "reflections vs direct (dilute pair)";
    let res = solve_sedimentation(&dom, &config, &e, opts)
        .and_then(|direct| Ok((direct, solve_by_reflections(&dom, &config, &e, opts, 200)?)));
    match res {
        Ok((direct, (Some(refl), _))) => out.push(Check::at_most(name, refl.phi.relative_distance(&direct.phi), 1e-4)),
        Ok((_, (None, report))) => out.push(Check::failed(name, 1e-4, format!("no convergence in {} sweeps", report.sweeps_used))),
        Err(err) => out.push(Check::failed(name, 1e-4, err)),
    }
}

fn statistics_checks(out: &mut Vec<Check>) {
    let dom = TorusDomain::new(2, 20.0, 40).expect("valid domain");
    let lattice = EnsembleSpec {
        process: ProcessKind::PerturbedLattice { spacing: 4.0, u_max: 0.9, random_shift: true },
        delta: 0.0,
        realizations: 20,
        seed: 11,
    };
    match lattice.sample_all(&dom).and_then(|ens| hyperuniformity_metric(&ens)) {
        Ok(m) => out.push(Check::at_most("perturbed-lattice hyperuniformity metric", m.value.abs(), 0.0)),
        Err(err) => out.push(Check::failed("perturbed-lattice hyperuniformity metric", 0.0, err)),
    }
    let poisson = EnsembleSpec { process: ProcessKind::Poisson { rho: 0.5 }, delta: 0.0, realizations: 200, seed: 12 };
    let name = "Poisson S(k) bins within 3 standard errors";
    match poisson.sample_all(&dom).and_then(|ens| estimate_structure_factor(&ens, 3.0)) {
        Ok(sk) => {
            let inside = sk.s.iter().zip(&sk.stderr).filter(|(s, se)| (*s - 1.0).abs() <= 3.0 * **se).count();
            out.push(Check::at_least(name, inside as f64 / sk.s.len() as f64, 0.95));
        }
        Err(err) => out.push(Check::failed(name, 0.95, err)),
    }
}

fn viscosity_check(opts: &SolverOptions, out: &mut Vec<Check>) {
    let dom = TorusDomain::new(2, 8.0, 32).expect("valid domain");
    let empty = vec![ParticleConfiguration::empty(dom, 0.1); 5];
    let name = "zero-particle viscosity is the identity";
    match effective_viscosity(&dom, &empty, opts) {
        Ok((b, _)) => {
            let dev = b
                .matrix
                .iter()
                .enumerate()
                .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (v - if i == j { 1.0 } else { 0.0 }).abs()))
                .fold(0.0, f64::max);
            out.push(Check::at_most(name, dev, 0.0));
        }
        Err(err) => out.push(Check::failed(name, 0.0, err)),
    }
}

/// Runs the battery with the given solver options.
pub fn run_checks(opts: &SolverOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    tiny_checks(opts, &mut out);
    reflection_check(opts, &mut out);
    statistics_checks(&mut out);
    viscosity_check(opts, &mut out);
    Ok(out)
}
