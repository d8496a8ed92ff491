//! Desk-scale acceptance battery. Every criterion writes one PASS/FAIL line
//! to stderr, bypassing the test harness capture, and then asserts.

mod common;

use std::f64::consts::PI;
use std::io::Write;

use common::{dense_sedimentation, relative_l2, DenseKernel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sediment_core::harness::verify::{dilute_pair, tiny_instance};
use sediment_core::harness::{scaling_sweep, ExperimentConfig, Model, ScalingResult};
use sediment_core::linear_model::solve_linear;
use sediment_core::point_process::{perturbed_lattice_with, EnsembleSpec, ParticleConfiguration, ProcessKind};
use sediment_core::statistics::{
    efron_stein_check, estimate_structure_factor, hyperuniformity_metric, jackknife, linear_functional_variance,
    number_variance_curve, Functional,
};
use sediment_core::stokes::{
    check_energy_identity, effective_viscosity, project_rigid, settling_identity, solve_by_reflections,
    solve_sedimentation, SolverOptions,
};
use sediment_core::TorusDomain;

fn report(criterion: u32, passed: bool, detail: &str) {
    let line = format!("criterion {criterion:>2}: {} {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn opts() -> SolverOptions {
    SolverOptions { tol: 1e-8, max_iterations: 2000 }
}

fn matern(lambda: f64) -> ProcessKind {
    ProcessKind::MaternHardcore { rho_proposal: None, lambda_target: Some(lambda) }
}

fn lattice(a: f64, u: f64) -> ProcessKind {
    ProcessKind::PerturbedLattice { spacing: a, u_max: u, random_shift: true }
}

fn sweep(model: Model, d: usize, lengths: &[f64], ppu: f64, process: ProcessKind, m: usize) -> ScalingResult {
    let cfg = ExperimentConfig {
        model,
        d,
        ensemble: EnsembleSpec { process, delta: 0.1, realizations: m, seed: 7 },
        lengths: lengths.to_vec(),
        points_per_unit: ppu,
        gravity: None,
        tol: 1e-8,
        max_iterations: 2000,
        output: "out".into(),
    };
    scaling_sweep(&cfg).unwrap()
}

const D3_LENGTHS: [f64; 5] = [8.0, 12.0, 16.0, 24.0, 32.0];

#[test]
fn criterion_01_mixing_fluctuations_grow_like_square_root() {
    let r = sweep(Model::Linear, 3, &D3_LENGTHS, 4.0, matern(0.03), 100);
    let fit = r.fluctuation.power;
    let passed = (fit.exponent - 0.5).abs() <= 0.15;
    let sigmas: Vec<String> = r.points.iter().map(|p| format!("{:.4}", p.fluctuation)).collect();
    report(1, passed, &format!("σ exponent {:.3} ± {:.3} (want 0.5 ± 0.15); σ = [{}]", fit.exponent, fit.stderr, sigmas.join(", ")));
    assert!(passed);
}

#[test]
fn criterion_02_hyperuniform_fluctuations_stay_bounded() {
    // Spacing 4 keeps a − 2u_max at the hardcore distance 2(1+δ).
    let r = sweep(Model::Linear, 3, &D3_LENGTHS, 4.0, lattice(4.0, 0.9), 100);
    let (s, v) = (r.fluctuation.power.exponent, r.speed.power.exponent);
    let passed = s <= 0.15 && v <= 0.15;
    let sigmas: Vec<String> = r.points.iter().map(|p| format!("{:.4}", p.fluctuation)).collect();
    report(2, passed, &format!("σ exponent {s:.3}, V̄ exponent {v:.3} (want both ≤ 0.15); σ = [{}]", sigmas.join(", ")));
    assert!(passed);
}

#[test]
fn criterion_03_two_dimensional_speed_grows_logarithmically() {
    let ls = [16.0, 32.0, 64.0, 128.0];
    let m = sweep(Model::Linear, 2, &ls, 4.0, matern(0.03), 20);
    let l = sweep(Model::Linear, 2, &ls, 4.0, lattice(4.0, 0.9), 20);
    let r2 = m.speed.log_law.r_squared;
    let exp = l.speed.power.exponent;
    let passed = r2 >= 0.9 && exp <= 0.1;
    report(3, passed, &format!("Matérn V̄² vs log L R² {r2:.4} (want ≥ 0.9); lattice V̄ exponent {exp:.4} (want ≤ 0.1)"));
    assert!(passed);
}

#[test]
fn criterion_04_four_dimensional_proxy_fluctuations() {
    let ls = [8.0, 12.0, 16.0, 24.0];
    let m = sweep(Model::ScalarProxy, 4, &ls, 2.0, matern(0.03), 2000);
    let l = sweep(Model::ScalarProxy, 4, &ls, 2.0, lattice(4.0, 0.9), 2000);
    let r2 = m.fluctuation.log_law.r_squared;
    let exp = l.fluctuation.power.exponent;
    let passed = r2 >= 0.85 && exp <= 0.1;
    report(4, passed, &format!("Matérn proxy variance vs log L R² {r2:.4} (want ≥ 0.85); lattice exponent {exp:.4} (want ≤ 0.1)"));
    assert!(passed);
}

fn on_grid(config: &ParticleConfiguration, n: usize) -> ParticleConfiguration {
    let dom = TorusDomain::new(config.domain.d, config.domain.l, n).unwrap();
    ParticleConfiguration::new(dom, config.delta, config.centers.clone())
}

#[test]
fn criterion_05_full_solver_matches_dense_oracle_and_identities() {
    let config = tiny_instance();
    let dom = config.domain;
    let e = [0.0, -1.0];
    let sol = solve_sedimentation(&dom, &config, &e, &opts()).unwrap();
    let dense = dense_sedimentation(&DenseKernel::new(dom), &config, &e);
    let oracle = relative_l2(sol.phi.values(), &dense);
    let mut energy = Vec::new();
    let mut settling = Vec::new();
    for n in [64, 128] {
        let c = on_grid(&config, n);
        let s = solve_sedimentation(&c.domain, &c, &e, &opts()).unwrap();
        energy.push(check_energy_identity(&s).unwrap());
        settling.push(settling_identity(&s).unwrap().gap);
    }
    let converges = |v: &[f64]| v[1] <= 0.5 * v[0] || v[1] <= 1e-10;
    let passed = oracle <= 1e-6 && energy[0] <= 1e-4 && converges(&energy) && settling[0] <= 1e-3 && converges(&settling);
    report(
        5,
        passed,
        &format!("oracle {oracle:.2e} (≤ 1e-6); energy {:.2e} → {:.2e} (≤ 1e-4, halving); settling gap {:.2e} → {:.2e} (≤ 1e-3, halving)", energy[0], energy[1], settling[0], settling[1]),
    );
    assert!(passed);
}

#[test]
fn criterion_06_projection_reformulation() {
    let config = tiny_instance();
    let dom = config.domain;
    let sol = solve_sedimentation(&dom, &config, &[0.0, -1.0], &opts()).unwrap();
    let lin = solve_linear(&dom, &config, &[0.0, -1.0]).unwrap();
    let pi = project_rigid(&lin.phi, &config, &opts()).unwrap();
    let err = pi.scale(1.0 / (1.0 - lin.volume_fraction)).relative_distance(&sol.phi);
    let passed = err <= 1e-6;
    report(6, passed, &format!("relative distance {err:.2e} (≤ 1e-6)"));
    assert!(passed);
}

#[test]
fn criterion_07_reflections_converge_only_when_dilute() {
    let config = dilute_pair();
    let dom = config.domain;
    let e = [0.0, -1.0];
    let direct = solve_sedimentation(&dom, &config, &e, &opts()).unwrap();
    let (sol, rep) = solve_by_reflections(&dom, &config, &e, &opts(), 200).unwrap();
    let gap = rep.min_distance.unwrap();
    let err = sol.map(|s| s.phi.relative_distance(&direct.phi)).unwrap_or(f64::INFINITY);
    let near_dom = TorusDomain::new(2, 8.0, 64).unwrap();
    let near = ParticleConfiguration::new(near_dom, 0.05, vec![vec![-1.05, 0.0], vec![1.05, 0.0]]);
    let (_, near_rep) = solve_by_reflections(&near_dom, &near, &e, &opts(), 30).unwrap();
    let passed = gap >= 10.0 && rep.converged && err <= 1e-4;
    report(
        7,
        passed,
        &format!(
            "dilute pair distance {gap:.1}, {} sweeps, error {err:.2e} (≤ 1e-4); near contact: converged {} after {} sweeps, last change {:.2e}",
            rep.sweeps_used,
            near_rep.converged,
            near_rep.sweeps_used,
            near_rep.differences.last().copied().unwrap_or(f64::NAN)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_08_statistics_identities() {
    let dom2 = TorusDomain::new(2, 16.0, 64).unwrap();
    let poisson = EnsembleSpec { process: ProcessKind::Poisson { rho: 0.1 }, delta: 0.0, realizations: 500, seed: 11 }
        .sample_all(&dom2)
        .unwrap();
    let sk = estimate_structure_factor(&poisson, 2.0).unwrap();
    let worst = sk.s.iter().zip(&sk.stderr).map(|(s, e)| (s - 1.0).abs() / e).fold(0.0, f64::max);
    let s_ok = worst <= 3.0;

    let lat = EnsembleSpec { process: lattice(4.0, 0.9), delta: 0.1, realizations: 50, seed: 11 }.sample_all(&dom2).unwrap();
    let metric = hyperuniformity_metric(&lat).unwrap().value;
    let metric_ok = metric == 0.0;

    let dom3 = TorusDomain::new(3, 48.0, 48).unwrap();
    let radii: Vec<f64> = (0..6).map(|i| 4.0 + 1.6 * i as f64).collect();
    let p3 = EnsembleSpec { process: ProcessKind::Poisson { rho: 0.01 }, delta: 0.0, realizations: 100, seed: 12 }
        .sample_all(&dom3)
        .unwrap();
    let poisson_exp = number_variance_curve(&p3, &radii).unwrap().fit.unwrap().exponent;
    let l3 = EnsembleSpec { process: lattice(4.0, 0.9), delta: 0.1, realizations: 100, seed: 12 }.sample_all(&dom3).unwrap();
    let lattice_exp = number_variance_curve(&l3, &radii).unwrap().fit.unwrap().exponent;
    let nv_ok = (poisson_exp - 3.0).abs() <= 0.3 && (lattice_exp - 2.0).abs() <= 0.4;

    let passed = s_ok && metric_ok && nv_ok;
    report(
        8,
        passed,
        &format!(
            "Poisson S worst deviation {worst:.2} SE over {} bins (≤ 3); lattice metric {metric:e} (= 0); number variance exponents Poisson {poisson_exp:.3} (3 ± 0.3), lattice {lattice_exp:.3} (2 ± 0.4)",
            sk.k.len()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_09_functional_variance_dichotomy() {
    let l = 32.0;
    let dom = TorusDomain::new(2, l, 64).unwrap();
    let wave = move |x: &[f64]| (2.0 * PI * x[0] / l).cos();
    let zeta = Functional::Callable { f: &wave, grid: dom };
    let lat = EnsembleSpec { process: lattice(4.0, 0.9), delta: 0.1, realizations: 400, seed: 13 }.sample_all(&dom).unwrap();
    let v_lat = linear_functional_variance(&lat, &zeta, true).unwrap();
    let lat_ratio = v_lat.variance / v_lat.hyperuniform_bound.unwrap();
    // Saturated Matérn, where particle density is of order one.
    let dense = ProcessKind::MaternHardcore { rho_proposal: Some(1.0), lambda_target: None };
    let mat = EnsembleSpec { process: dense, delta: 0.1, realizations: 400, seed: 13 }.sample_all(&dom).unwrap();
    let v_mat = linear_functional_variance(&mat, &zeta, true).unwrap();
    let mat_ratio = v_mat.variance / v_mat.mixing_bound;
    let dilute = EnsembleSpec { process: matern(0.03), delta: 0.1, realizations: 400, seed: 13 }.sample_all(&dom).unwrap();
    let v_dil = linear_functional_variance(&dilute, &zeta, true).unwrap();
    let dilute_ratio = v_dil.variance / v_dil.mixing_bound;

    let samples: Vec<_> = (0..300)
        .map(|s| perturbed_lattice_with(&dom, 4.0, 0.9, false, &mut ChaCha8Rng::seed_from_u64(s)).unwrap())
        .collect();
    let fns: [&(dyn Fn(&[f64]) -> f64 + Sync); 3] = [
        &wave,
        &|x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) / 32.0).exp(),
        &|x: &[f64]| (2.0 * PI * (x[0] + 2.0 * x[1]) / 32.0).sin() * (2.0 * PI * x[1] / 32.0).cos(),
    ];
    let es: Vec<_> = fns.iter().enumerate().map(|(i, f)| efron_stein_check(&samples, *f, 20 + i as u64).unwrap()).collect();
    let es_ok = es.iter().all(|e| e.variance <= e.bound);

    let passed = lat_ratio <= 10.0 && (0.1..=10.0).contains(&mat_ratio) && es_ok;
    let es_text: Vec<String> = es.iter().map(|e| format!("{:.3}≤{:.3} (resample {:.3})", e.variance, e.bound, e.resample_bound)).collect();
    report(
        9,
        passed,
        &format!(
            "lattice Var/ρ²∫|∇ζ|² {lat_ratio:.3} (≤ 10); dense Matérn Var/ρ²∫|ζ|² {mat_ratio:.3} (within 10×); Efron–Stein [{}]; dilute Matérn ratio {dilute_ratio:.1} (reported)",
            es_text.join(", ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_effective_viscosity_is_positive_on_trace_free_strains() {
    let dom = TorusDomain::new(2, 16.0, 64).unwrap();
    let ens = EnsembleSpec { process: matern(0.1), delta: 0.1, realizations: 20, seed: 14 }.sample_all(&dom).unwrap();
    let (b, per) = effective_viscosity(&dom, &ens, &opts()).unwrap();
    let m = per.len();
    let k = b.matrix.len();
    let loo = |skip: Option<usize>| -> Vec<Vec<f64>> {
        let used: Vec<&Vec<Vec<f64>>> = per.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| v).collect();
        (0..k).map(|i| (0..k).map(|j| used.iter().map(|v| v[i][j]).sum::<f64>() / used.len() as f64).collect()).collect()
    };
    let mut sym_ok = true;
    let mut worst_sym = 0.0f64;
    for i in 0..k {
        for j in i + 1..k {
            let (diff, se) = jackknife(m, |s| {
                let a = loo(s);
                a[i][j] - a[j][i]
            });
            let z = if se > 0.0 { diff.abs() / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
            worst_sym = worst_sym.max(z);
            sym_ok &= diff.abs() <= 3.0 * se || diff.abs() <= 1e-12;
        }
    }
    let smallest = |a: &[Vec<f64>]| {
        let mat = nalgebra::DMatrix::from_fn(k, k, |i, j| 0.5 * (a[i][j] + a[j][i]));
        mat.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (ev, ev_se) = jackknife(m, |s| smallest(&loo(s)));
    let pd_ok = ev > 3.0 * ev_se && ev > 0.0;

    let empty = vec![ParticleConfiguration::empty(dom, 0.1); 5];
    let (id, _) = effective_viscosity(&dom, &empty, &opts()).unwrap();
    let id_ok = id.matrix.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, v)| *v == if i == j { 1.0 } else { 0.0 }));

    let passed = sym_ok && pd_ok && id_ok;
    report(
        10,
        passed,
        &format!(
            "asymmetry worst {worst_sym:.2} SE (≤ 3); smallest trace-free eigenvalue {ev:.5} ± {ev_se:.1e} (> 3 SE); empty ensemble identity {id_ok}"
        ),
    );
    assert!(passed);
}
