use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::export::EstimateRow;
use super::fit::{fit_power_law, PowerLawFit};
use super::{check_ensemble, jackknife, loo_sum, mean, sample_variance};
use crate::error::{Error, Result};
use crate::point_process::{uniform_in_ball, LatticeSample, ParticleConfiguration};
use crate::rng;
use crate::torus::{dirichlet_energy, periodic_distance, SpectralField, TorusDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub stderr: f64,
    pub realizations: usize,
}

fn counts_and_volume(ensemble: &[ParticleConfiguration]) -> (Vec<f64>, f64, f64) {
    let dom = ensemble[0].domain;
    let n: Vec<f64> = ensemble.iter().map(|c| c.len() as f64).collect();
    (n, dom.volume(), dom.l)
}

/// `L² Var̂[N]/(ρ̂² L^d)`, which stays bounded in `L` exactly for
/// hyperuniform ensembles.
pub fn hyperuniformity_metric(ensemble: &[ParticleConfiguration]) -> Result<MetricEstimate> {
    check_ensemble(ensemble, 20)?;
    let (n, vol, l) = counts_and_volume(ensemble);
    let m = n.len();
    let est = |skip: Option<usize>| {
        let sub: Vec<f64> = n.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| *v).collect();
        let rho = mean(&sub) / vol;
        if rho == 0.0 {
            return 0.0;
        }
        l * l * sample_variance(&sub) / (rho * rho * vol)
    };
    let (value, stderr) = jackknife(m, est);
    Ok(MetricEstimate { value, stderr, realizations: m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberVarianceCurve {
    pub radii: Vec<f64>,
    pub variance: Vec<f64>,
    pub stderr: Vec<f64>,
    pub windows: usize,
    pub realizations: usize,
    pub fit: Option<PowerLawFit>,
}

impl NumberVarianceCurve {
    pub fn rows(&self) -> Vec<EstimateRow> {
        (0..self.radii.len())
            .map(|i| EstimateRow {
                abscissa: self.radii[i],
                value: self.variance[i],
                stderr: self.stderr[i],
                n_samples: self.realizations * self.windows,
            })
            .collect()
    }
}

/// Regular grid of `per_axis^d` window centers.
pub fn window_grid(domain: &TorusDomain, per_axis: usize) -> Vec<Vec<f64>> {
    let d = domain.d;
    let step = domain.l / per_axis as f64;
    (0..per_axis.pow(d as u32))
        .map(|mut lin| {
            (0..d)
                .map(|_| {
                    let i = lin % per_axis;
                    lin /= per_axis;
                    -0.5 * domain.l + (i as f64 + 0.5) * step
                })
                .collect()
        })
        .collect()
}

fn default_windows(d: usize) -> usize {
    match d {
        1 => 64,
        2 => 8,
        3 => 4,
        _ => 3,
    }
}

/// `Var[#(P ∩ B_R)]` averaged over a fixed grid of window centers, with a
/// power-law fit in `R`.
pub fn number_variance_curve(ensemble: &[ParticleConfiguration], radii: &[f64]) -> Result<NumberVarianceCurve> {
    check_ensemble(ensemble, 20)?;
    let dom = ensemble[0].domain;
    number_variance_at(ensemble, radii, &window_grid(&dom, default_windows(dom.d)))
}

pub fn number_variance_at(
    ensemble: &[ParticleConfiguration],
    radii: &[f64],
    centers: &[Vec<f64>],
) -> Result<NumberVarianceCurve> {
    check_ensemble(ensemble, 20)?;
    let dom = ensemble[0].domain;
    if radii.iter().any(|r| !(*r > 0.0 && *r <= 0.25 * dom.l + 1e-12)) {
        return Err(Error::Precondition(format!("radii must lie in (0, L/4] = (0, {}]", 0.25 * dom.l)));
    }
    let m = ensemble.len();
    let w = centers.len();
    let nr = radii.len();
    // counts[i][r * w + c]
    let counts: Vec<Vec<f64>> = ensemble
        .par_iter()
        .map(|cfg| {
            let mut out = vec![0.0; nr * w];
            for (c, z) in centers.iter().enumerate() {
                for x in &cfg.centers {
                    let r = periodic_distance(x, z, &dom);
                    for (k, rk) in radii.iter().enumerate() {
                        if r < *rk {
                            out[k * w + c] += 1.0;
                        }
                    }
                }
            }
            out
        })
        .collect();
    let s1: Vec<f64> = (0..nr * w).map(|j| counts.iter().map(|c| c[j]).sum()).collect();
    let s2: Vec<f64> = (0..nr * w).map(|j| counts.iter().map(|c| c[j] * c[j]).sum()).collect();
    let mut variance = Vec::with_capacity(nr);
    let mut stderr = Vec::with_capacity(nr);
    for k in 0..nr {
        let est = |skip: Option<usize>| {
            let mm = (m - skip.map_or(0, |_| 1)) as f64;
            let mut acc = 0.0;
            for c in 0..w {
                let j = k * w + c;
                let (mut a, mut b) = (s1[j], s2[j]);
                if let Some(i) = skip {
                    a -= counts[i][j];
                    b -= counts[i][j] * counts[i][j];
                }
                acc += ((b - a * a / mm) / (mm - 1.0)).max(0.0);
            }
            acc / w as f64
        };
        let (v, e) = jackknife(m, est);
        variance.push(v);
        stderr.push(e);
    }
    let fit = if nr >= 3 && variance.iter().all(|v| *v > 0.0) {
        fit_power_law(radii, &variance, Some(&stderr)).ok()
    } else {
        None
    };
    Ok(NumberVarianceCurve { radii: radii.to_vec(), variance, stderr, windows: w, realizations: m, fit })
}

/// Test function `ζ`, either a grid field (interpolated at points) or a
/// closure sampled on `grid` for the reference integrals.
pub enum Functional<'a> {
    Field(&'a SpectralField),
    Callable {
        f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        grid: TorusDomain,
    },
}

impl Functional<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Functional::Field(field) => field.interpolate(x)[0],
            Functional::Callable { f, .. } => f(x),
        }
    }

    fn sampled(&self) -> SpectralField {
        match self {
            Functional::Field(field) => (*field).clone(),
            Functional::Callable { f, grid } => SpectralField::from_fn(*grid, 1, |x| vec![f(x)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalVariance {
    pub variance: f64,
    pub stderr: f64,
    /// `ρ̂² ∫|ζ|²`.
    pub mixing_bound: f64,
    /// `ρ̂² ∫|∇ζ|²`, present when requested for a mean-zero `ζ`.
    pub hyperuniform_bound: Option<f64>,
}

/// Ensemble variance of `Σ_n ζ(x_n)` and the two reference functionals.
pub fn linear_functional_variance(
    ensemble: &[ParticleConfiguration],
    zeta: &Functional<'_>,
    want_hyperuniform_bound: bool,
) -> Result<FunctionalVariance> {
    check_ensemble(ensemble, 2)?;
    let field = zeta.sampled();
    let dom = *field.domain();
    let sum_abs: f64 = field.component(0).iter().map(|v| v.abs()).sum::<f64>() * dom.cell_volume();
    let integral: f64 = field.component(0).iter().sum::<f64>() * dom.cell_volume();
    if want_hyperuniform_bound && integral.abs() > 1e-8 * sum_abs.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!("ζ has nonzero mean ∫ζ = {integral:.3e}")));
    }
    let ys: Vec<f64> = ensemble
        .par_iter()
        .map(|c| c.centers.iter().map(|x| zeta.eval(x)).sum())
        .collect();
    let m = ys.len();
    let (variance, stderr) = jackknife(m, |skip| {
        let sub: Vec<f64> = ys.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| *v).collect();
        sample_variance(&sub)
    });
    let n: Vec<f64> = ensemble.iter().map(|c| c.len() as f64).collect();
    let rho = loo_sum(&n, None) / (m as f64 * ensemble[0].domain.volume());
    let l2: f64 = field.component(0).iter().map(|v| v * v).sum::<f64>() * dom.cell_volume();
    Ok(FunctionalVariance {
        variance,
        stderr,
        mixing_bound: rho * rho * l2,
        hyperuniform_bound: want_hyperuniform_bound.then(|| rho * rho * dirichlet_energy(&field)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfronStein {
    pub variance: f64,
    pub variance_stderr: f64,
    /// `½ E Σ_z (∂mov_{B(z)} Y)²`: the oscillation of `Y` when the points in
    /// the displacement ball around site `z` move inside it.
    pub bound: f64,
    pub bound_stderr: f64,
    /// `½ E Σ_z (Y − Y^z)²`, with `Y^z` the functional after redrawing site `z`.
    /// Equal to the variance for additive `Y`.
    pub resample_bound: f64,
    pub resample_bound_stderr: f64,
}

/// Offsets probing the sup and inf of `ζ` over a ball: centre, axis poles,
/// then random points in the ball and on its boundary.
fn ball_probes(d: usize, r: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, 0, rng::stage::PROBE);
    let mut out = vec![vec![0.0; d]];
    for a in 0..d {
        for s in [-r, r] {
            let mut v = vec![0.0; d];
            v[a] = s;
            out.push(v);
        }
    }
    for i in 0..1024 {
        let v = uniform_in_ball(d, r, &mut rng);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if i % 2 == 1 && n > 0.0 {
            out.push(v.iter().map(|x| x * r / n).collect());
        } else {
            out.push(v);
        }
    }
    out
}

/// Compares `Var[Σ ζ(x_n)]` with the Efron–Stein bound for a perturbed
/// lattice sampled without a global shift. For additive `Y` the move-point
/// oscillation over `B(z)` is `#(points in B(z)) · (sup_B ζ − inf_B ζ)`;
/// sup and inf are taken over a finite probe set.
pub fn efron_stein_check(
    samples: &[LatticeSample],
    zeta: &(dyn Fn(&[f64]) -> f64 + Sync),
    seed: u64,
) -> Result<EfronStein> {
    if samples.len() < 2 {
        return Err(Error::InsufficientRealizations { needed: 2, got: samples.len() });
    }
    let s0 = &samples[0];
    let dom = s0.domain;
    let probes = ball_probes(dom.d, s0.u_max, seed);
    let site_osc: Vec<f64> = s0
        .sites
        .par_iter()
        .map(|site| {
            let vals = probes.iter().map(|u| {
                let y: Vec<f64> = site.iter().zip(u).map(|(a, b)| dom.wrap(a + b)).collect();
                zeta(&y)
            });
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .collect();
    let per: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = rng::stream(seed, i as u64, rng::stage::RESAMPLE);
            let cfg = s.configuration();
            let y: f64 = cfg.centers.iter().map(|x| zeta(x)).sum();
            let (mut mov, mut res) = (0.0, 0.0);
            for (z, x) in cfg.centers.iter().enumerate() {
                let inside = cfg.centers.iter().filter(|c| periodic_distance(c, &s.sites[z], &dom) <= s.u_max).count();
                let o = inside as f64 * site_osc[z];
                mov += o * o;
                let u = uniform_in_ball(dom.d, s.u_max, &mut rng);
                let moved: Vec<f64> = s.sites[z].iter().zip(&u).map(|(a, b)| dom.wrap(a + b)).collect();
                let dy = zeta(x) - zeta(&moved);
                res += dy * dy;
            }
            (y, 0.5 * mov, 0.5 * res)
        })
        .collect();
    let ys: Vec<f64> = per.iter().map(|p| p.0).collect();
    let bs: Vec<f64> = per.iter().map(|p| p.1).collect();
    let rs: Vec<f64> = per.iter().map(|p| p.2).collect();
    let m = ys.len();
    let (variance, variance_stderr) = jackknife(m, |skip| {
        let sub: Vec<f64> = ys.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| *v).collect();
        sample_variance(&sub)
    });
    Ok(EfronStein {
        variance,
        variance_stderr,
        bound: mean(&bs),
        bound_stderr: super::standard_error(&bs),
        resample_bound: mean(&rs),
        resample_bound_stderr: super::standard_error(&rs),
    })
}
