//! Dilute linearized sedimentation (no particle interactions) and the scalar
//! Laplace proxy used for cheap scaling tests in dimensions 1–4.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point_process::ParticleConfiguration;
use crate::special::bessel_j;
use crate::statistics::{jackknife, sample_variance};
use crate::torus::fft::FftNd;
use crate::torus::spectral::{average_over, cells_in_ball};
use crate::torus::{dirichlet_energy, unit_ball_volume, SpectralField, StokesOperator, TorusDomain, WaveGrid};

/// Solution of `−Δφ° + ∇Π° = (Σ_n 1_{I_n} − λ_L) e`.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub phi: SpectralField,
    pub pressure: SpectralField,
    /// `V°_n`, the average of `φ°` over the cells of particle `n`.
    pub velocities: Vec<Vec<f64>>,
    pub gravity: Vec<f64>,
    /// Volume fraction of the particle cells, `Σ_n |I_n|/L^d` on the grid.
    pub volume_fraction: f64,
    pub cell_counts: Vec<usize>,
}

pub(crate) fn check_grid(domain: &TorusDomain, config: &ParticleConfiguration) -> Result<()> {
    if domain.d != config.domain.d || (domain.l - config.domain.l).abs() > 1e-12 * domain.l {
        return Err(Error::Precondition("grid domain does not match the configuration".into()));
    }
    if !(2..=3).contains(&domain.d) {
        return Err(Error::Dimension(domain.d));
    }
    domain.check_resolution()?;
    if !config.is_empty() {
        config.validate()?;
    }
    Ok(())
}

/// Cell sets of every particle and the indicator of their union.
pub(crate) fn inclusion_cells(domain: &TorusDomain, config: &ParticleConfiguration) -> (Vec<Vec<usize>>, Vec<f64>) {
    let cells: Vec<Vec<usize>> = config
        .centers
        .par_iter()
        .map(|x| cells_in_ball(domain, x, 1.0).0)
        .collect();
    let mut indicator = vec![0.0; domain.len()];
    for c in &cells {
        for &i in c {
            indicator[i] = 1.0;
        }
    }
    (cells, indicator)
}

fn centered(indicator: &[f64]) -> (Vec<f64>, f64) {
    let frac = indicator.iter().sum::<f64>() / indicator.len() as f64;
    (indicator.iter().map(|v| v - frac).collect(), frac)
}

pub fn solve_linear(domain: &TorusDomain, config: &ParticleConfiguration, e: &[f64]) -> Result<LinearSolution> {
    check_grid(domain, config)?;
    if e.len() != domain.d {
        return Err(Error::Precondition(format!("gravity has {} components, expected {}", e.len(), domain.d)));
    }
    let op = StokesOperator::new(domain)?;
    let (cells, indicator) = inclusion_cells(domain, config);
    let (source, frac) = centered(&indicator);
    let (u, p) = op.solve_scalar_source(&source, e);
    let velocities = cells.iter().map(|c| average_over(&u, c)).collect();
    Ok(LinearSolution {
        phi: SpectralField::new(*domain, u).with_flags(true, true),
        pressure: SpectralField::scalar(*domain, p).with_flags(false, true),
        velocities,
        gravity: e.to_vec(),
        volume_fraction: frac,
        cell_counts: cells.iter().map(|c| c.len()).collect(),
    })
}

/// `V°_n` only, skipping the pressure; used by sweeps.
pub fn linear_velocities(op: &StokesOperator, config: &ParticleConfiguration, e: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_grid(op.domain(), config)?;
    let (cells, indicator) = inclusion_cells(op.domain(), config);
    let (source, _) = centered(&indicator);
    let u = op.velocity_scalar_source(&source, e);
    Ok(cells.iter().map(|c| average_over(&u, c)).collect())
}

/// `(1/N) Σ_n ê·V°_n` and `(λ_L|e|)^{−1} ⨍|∇φ°|²`.
pub fn linear_settling_speed(solution: &LinearSolution) -> Result<(f64, f64)> {
    let n = solution.velocities.len();
    if n == 0 {
        return Err(Error::Precondition("settling speed needs at least one particle".into()));
    }
    let norm = solution.gravity.iter().map(|v| v * v).sum::<f64>().sqrt();
    let from_v = solution
        .velocities
        .iter()
        .map(|v| v.iter().zip(&solution.gravity).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        / (n as f64 * norm);
    let dom = solution.phi.domain();
    let from_energy = dirichlet_energy(&solution.phi) / dom.volume() / (solution.volume_fraction * norm);
    Ok((from_v, from_energy))
}

/// Pooled per-particle velocity spread `σ = (tr Cov V_n)^{1/2}` over all
/// particles of all realizations, with a jackknife error over realizations.
pub fn pooled_fluctuation(velocities: &[Vec<Vec<f64>>]) -> Result<(f64, f64)> {
    if velocities.len() < 20 {
        return Err(Error::InsufficientRealizations { needed: 20, got: velocities.len() });
    }
    let d = velocities.iter().flatten().next().map_or(0, |v| v.len());
    // Per realization: count, Σ V, Σ |V|².
    let sums: Vec<(f64, Vec<f64>, f64)> = velocities
        .iter()
        .map(|vs| {
            let mut s = vec![0.0; d];
            let mut q = 0.0;
            for v in vs {
                for a in 0..d {
                    s[a] += v[a];
                    q += v[a] * v[a];
                }
            }
            (vs.len() as f64, s, q)
        })
        .collect();
    let est = |skip: Option<usize>| {
        let mut n = 0.0;
        let mut s = vec![0.0; d];
        let mut q = 0.0;
        for (i, (ni, si, qi)) in sums.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            n += ni;
            q += qi;
            for a in 0..d {
                s[a] += si[a];
            }
        }
        if n < 2.0 {
            return 0.0;
        }
        let mean2: f64 = s.iter().map(|v| v * v).sum::<f64>() / n;
        ((q - mean2) / (n - 1.0)).max(0.0).sqrt()
    };
    Ok(jackknife(velocities.len(), est))
}

/// `σ°` over an ensemble of linear solutions.
pub fn linear_fluctuation(solutions: &[LinearSolution]) -> Result<(f64, f64)> {
    let v: Vec<Vec<Vec<f64>>> = solutions.iter().map(|s| s.velocities.clone()).collect();
    pooled_fluctuation(&v)
}

/// Fourier transform of the unit-ball indicator at `|k|`.
pub fn ball_transform(d: usize, k: f64) -> f64 {
    if k < 1e-8 {
        return unit_ball_volume(d);
    }
    match d {
        1 => 2.0 * k.sin() / k,
        2 => 2.0 * PI * bessel_j(1, k) / k,
        3 => 4.0 * PI * (k.sin() - k * k.cos()) / (k * k * k),
        4 => 4.0 * PI * PI * bessel_j(2, k) / (k * k),
        _ => panic!("ball transform implemented for d ≤ 4"),
    }
}

/// Grid samples of `F_L = ∫_{B(x)} ∇G_L` (d components) and of the
/// ball-averaged Green's function `Ĝ_L = ⨍_{B(x)} G_L`.
#[derive(Debug, Clone)]
pub struct ProxyKernels {
    pub f: SpectralField,
    pub g: SpectralField,
}

pub fn proxy_kernels(domain: &TorusDomain) -> Result<ProxyKernels> {
    let d = domain.d;
    if !(1..=4).contains(&d) {
        return Err(Error::Dimension(d));
    }
    let grid = WaveGrid::new(domain);
    let fft = FftNd::new(domain.n_grid, d);
    let len = domain.len();
    let step = 2.0 * PI / domain.l;
    let scale = len as f64 / domain.volume();
    let ball = unit_ball_volume(d);
    let mut cache: HashMap<i64, f64> = HashMap::new();
    let mut modes = vec![0i64; d];
    let mut bhat = vec![0.0; len];
    let mut sign = vec![0.0; len];
    for (idx, (b, s)) in bhat.iter_mut().zip(sign.iter_mut()).enumerate() {
        grid.mode(idx, &mut modes);
        let m2: i64 = modes.iter().map(|m| m * m).sum();
        *b = *cache.entry(m2).or_insert_with(|| ball_transform(d, step * (m2 as f64).sqrt()));
        // Grid point j sits at −L/2 + jh, which shifts every mode by (−1)^{Σm}.
        *s = if modes.iter().sum::<i64>() % 2 == 0 { 1.0 } else { -1.0 };
    }
    let mut g_spec = vec![Complex64::default(); len];
    let mut f_spec = vec![vec![Complex64::default(); len]; d];
    let mut k = [0.0; 4];
    for idx in 1..len {
        let k2 = grid.k_squared(idx);
        grid.wavevector(idx, &mut k);
        let base = scale * sign[idx] * bhat[idx] / k2;
        g_spec[idx] = Complex64::new(base / ball, 0.0);
        for a in 0..d {
            f_spec[a][idx] = Complex64::new(0.0, k[a] * base);
        }
    }
    let to_real = |mut s: Vec<Complex64>| {
        fft.inverse(&mut s);
        s.into_iter().map(|z| z.re).collect::<Vec<f64>>()
    };
    let g = SpectralField::scalar(*domain, to_real(g_spec)).with_flags(false, true);
    let f = SpectralField::new(*domain, f_spec.into_iter().map(to_real).collect()).with_flags(false, true);
    Ok(ProxyKernels { f, g })
}

impl ProxyKernels {
    /// `(Σ_n F_L(x_n), Σ_n Ĝ_L(x_n))`.
    pub fn sums(&self, config: &ParticleConfiguration) -> (Vec<f64>, f64) {
        let d = self.f.components();
        let mut sf = vec![0.0; d];
        let mut sg = 0.0;
        for x in &config.centers {
            for (s, v) in sf.iter_mut().zip(self.f.interpolate(x)) {
                *s += v;
            }
            sg += self.g.interpolate(x)[0];
        }
        (sf, sg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyStatistics {
    /// `Σ_a Var[Σ_n F_L,a(x_n)]`.
    pub speed_proxy_variance: f64,
    pub speed_proxy_stderr: f64,
    /// `Var[Σ_n Ĝ_L(x_n)]`.
    pub fluctuation_proxy_variance: f64,
    pub fluctuation_proxy_stderr: f64,
    /// `|E Σ_n F_L(x_n)|`, zero up to noise.
    pub speed_proxy_mean: f64,
    pub realizations: usize,
}

/// Per-realization proxy sums `(Σ F, Σ Ĝ)`.
pub fn proxy_samples(ensemble: &[ParticleConfiguration], domain: &TorusDomain) -> Result<Vec<(Vec<f64>, f64)>> {
    let kernels = proxy_kernels(domain)?;
    Ok(ensemble.par_iter().map(|c| kernels.sums(c)).collect())
}

pub fn scalar_proxy_statistics(ensemble: &[ParticleConfiguration], domain: &TorusDomain) -> Result<ProxyStatistics> {
    if ensemble.len() < 2 {
        return Err(Error::InsufficientRealizations { needed: 2, got: ensemble.len() });
    }
    Ok(proxy_statistics_from(&proxy_samples(ensemble, domain)?))
}

pub fn proxy_statistics_from(samples: &[(Vec<f64>, f64)]) -> ProxyStatistics {
    let m = samples.len();
    let d = samples[0].0.len();
    let pick = |skip: Option<usize>| samples.iter().enumerate().filter(move |(i, _)| Some(*i) != skip).map(|(_, s)| s);
    let (sv, se) = jackknife(m, |skip| {
        (0..d)
            .map(|a| sample_variance(&pick(skip).map(|s| s.0[a]).collect::<Vec<_>>()))
            .sum()
    });
    let (gv, ge) = jackknife(m, |skip| sample_variance(&pick(skip).map(|s| s.1).collect::<Vec<_>>()));
    let mean_f: f64 = (0..d)
        .map(|a| (samples.iter().map(|s| s.0[a]).sum::<f64>() / m as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    ProxyStatistics {
        speed_proxy_variance: sv,
        speed_proxy_stderr: se,
        fluctuation_proxy_variance: gv,
        fluctuation_proxy_stderr: ge,
        speed_proxy_mean: mean_f,
        realizations: m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_transform_limits() {
        for d in 1..=4 {
            let small = ball_transform(d, 1e-4);
            assert!((small - unit_ball_volume(d)).abs() < 1e-6, "d={d}");
        }
    }

    #[test]
    fn ball_transform_matches_quadrature_in_two_dimensions() {
        let k = 2.7;
        let m = 2000;
        let h = 2.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -1.0 + (i as f64 + 0.5) * h;
                let y = -1.0 + (j as f64 + 0.5) * h;
                if x * x + y * y < 1.0 {
                    s += (k * x).cos() * h * h;
                }
            }
        }
        assert!((s - ball_transform(2, k)).abs() < 1e-3);
    }
}
