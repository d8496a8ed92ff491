use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::cell_list::{CellList, DynamicCells};
use super::ParticleConfiguration;
use crate::error::{Error, Result};
use crate::rng;
use crate::torus::{unit_ball_volume, TorusDomain};

fn uniform_point<R: Rng + ?Sized>(domain: &TorusDomain, rng: &mut R) -> Vec<f64> {
    let half = 0.5 * domain.l;
    (0..domain.d).map(|_| domain.wrap(rng.random_range(-half..half))).collect()
}

/// Uniform sample from the ball of radius `r` around the origin.
pub fn uniform_in_ball<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> Vec<f64> {
    if r == 0.0 {
        return vec![0.0; d];
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = v.iter().map(|x| x * x).sum();
        if s <= 1.0 {
            return v.into_iter().map(|x| x * r).collect();
        }
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive Poisson mean").sample(rng) as usize
}

pub fn poisson_with<R: Rng + ?Sized>(domain: &TorusDomain, rho: f64, rng: &mut R) -> ParticleConfiguration {
    let n = poisson_count(rho * domain.volume(), rng);
    let centers = (0..n).map(|_| uniform_point(domain, rng)).collect();
    ParticleConfiguration { domain: *domain, delta: 0.0, centers, hardcore: false, saturated: false }
}

/// Homogeneous Poisson process of intensity `rho`; carries no exclusion.
pub fn sample_poisson(domain: &TorusDomain, rho: f64, seed: u64) -> Result<ParticleConfiguration> {
    if !(rho > 0.0) {
        return Err(Error::Precondition(format!("intensity {rho} must be positive")));
    }
    Ok(poisson_with(domain, rho, &mut rng::from_seed(seed)))
}

/// Retained intensity of Matérn II thinning, `(1 − e^{−ρ_p V_h})/V_h`.
pub fn matern_intensity(d: usize, rho_proposal: f64, delta: f64) -> f64 {
    let vh = unit_ball_volume(d) * (2.0 * (1.0 + delta)).powi(d as i32);
    (1.0 - (-rho_proposal * vh).exp()) / vh
}

/// Proposal intensity whose Matérn II output has volume fraction `lambda`.
pub fn matern_proposal_for_fraction(d: usize, lambda: f64, delta: f64) -> Result<f64> {
    let vh = unit_ball_volume(d) * (2.0 * (1.0 + delta)).powi(d as i32);
    let rho = lambda / unit_ball_volume(d);
    if !(rho > 0.0 && rho * vh < 1.0) {
        return Err(Error::Precondition(format!(
            "volume fraction {lambda} is beyond the Matérn II ceiling {}",
            unit_ball_volume(d) / vh
        )));
    }
    Ok(-(1.0 - rho * vh).ln() / vh)
}

/// Marked proposals kept by a Matérn II sampler, exposed for diagnostics.
#[derive(Debug, Clone)]
pub struct MaternProposal {
    pub points: Vec<Vec<f64>>,
    pub marks: Vec<f64>,
}

pub(crate) fn matern_with<R: Rng + ?Sized>(
    domain: &TorusDomain,
    rho_proposal: f64,
    delta: f64,
    rng: &mut R,
) -> Result<ParticleConfiguration> {
    let dist = 2.0 * (1.0 + delta);
    if !(rho_proposal > 0.0) {
        return Err(Error::Precondition(format!("proposal intensity {rho_proposal} must be positive")));
    }
    if !(dist < 0.5 * domain.l) {
        return Err(Error::Precondition(format!("hardcore distance {dist} must be below L/2")));
    }
    let n = poisson_count(rho_proposal * domain.volume(), rng);
    let mut prop = MaternProposal { points: Vec::with_capacity(n), marks: Vec::with_capacity(n) };
    for _ in 0..n {
        prop.points.push(uniform_point(domain, rng));
        prop.marks.push(rng.random::<f64>());
    }
    let cells = CellList::with_cell_size(domain, &prop.points, dist);
    let beats = |j: usize, i: usize| (prop.marks[j], j) < (prop.marks[i], i);
    let mut kept: Vec<usize> = (0..n)
        .filter(|&i| {
            !cells
                .neighbors(&prop.points[i], dist)
                .into_iter()
                .any(|j| j != i && beats(j, i) && crate::torus::periodic_distance(&prop.points[i], &prop.points[j], domain) < dist)
        })
        .collect();
    kept.sort_by(|&a, &b| prop.marks[a].total_cmp(&prop.marks[b]).then(a.cmp(&b)));
    let centers = kept.into_iter().map(|i| prop.points[i].clone()).collect();
    let config = ParticleConfiguration { domain: *domain, delta, centers, hardcore: true, saturated: false };
    if config.volume_fraction() >= 0.5 {
        return Err(Error::Density(config.volume_fraction()));
    }
    Ok(config)
}

/// Matérn type-II hardcore process: a proposal point survives unless a
/// proposal with a smaller mark lies closer than `2(1+δ)`.
pub fn sample_matern_hardcore(
    domain: &TorusDomain,
    rho_proposal: f64,
    delta: f64,
    seed: u64,
) -> Result<ParticleConfiguration> {
    matern_with(domain, rho_proposal, delta, &mut rng::from_seed(seed))
}

fn rsa_guard(d: usize) -> f64 {
    match d {
        1 => 0.45,
        2 => 0.35,
        3 => 0.25,
        _ => 0.15,
    }
}

pub fn rsa_with<R: Rng + ?Sized>(
    domain: &TorusDomain,
    lambda_target: f64,
    delta: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<ParticleConfiguration> {
    if !(lambda_target > 0.0 && lambda_target <= rsa_guard(domain.d)) {
        return Err(Error::Precondition(format!(
            "RSA target {lambda_target} outside (0, {}] for d={}",
            rsa_guard(domain.d),
            domain.d
        )));
    }
    let dist = 2.0 * (1.0 + delta);
    let ball = unit_ball_volume(domain.d);
    let target = (lambda_target * domain.volume() / ball - 1e-9).ceil().max(1.0) as usize;
    let mut cells = DynamicCells::new(domain, dist);
    let mut attempts = 0;
    while cells.points.len() < target && attempts < max_attempts {
        attempts += 1;
        let x = uniform_point(domain, rng);
        if !cells.conflicts(&x, dist) {
            cells.insert(x);
        }
    }
    let saturated = cells.points.len() < target;
    Ok(ParticleConfiguration { domain: *domain, delta, centers: cells.points, hardcore: true, saturated })
}

/// Random sequential adsorption up to volume fraction `lambda_target`.
/// Falls short only when `max_attempts` runs out, which sets `saturated`.
pub fn sample_rsa(
    domain: &TorusDomain,
    lambda_target: f64,
    delta: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<ParticleConfiguration> {
    rsa_with(domain, lambda_target, delta, max_attempts, &mut rng::from_seed(seed))
}

/// Perturbed lattice keeping sites and displacements apart so single sites
/// can be redrawn.
#[derive(Debug, Clone)]
pub struct LatticeSample {
    pub domain: TorusDomain,
    pub spacing: f64,
    pub u_max: f64,
    pub sites: Vec<Vec<f64>>,
    pub displacements: Vec<Vec<f64>>,
}

impl LatticeSample {
    /// Hardcore slack guaranteed by `a − 2u_max = 2(1+δ)`.
    pub fn delta(&self) -> f64 {
        0.5 * (self.spacing - 2.0 * self.u_max) - 1.0
    }

    pub fn configuration(&self) -> ParticleConfiguration {
        let centers = self
            .sites
            .iter()
            .zip(&self.displacements)
            .map(|(z, u)| z.iter().zip(u).map(|(a, b)| self.domain.wrap(a + b)).collect())
            .collect();
        ParticleConfiguration { domain: self.domain, delta: self.delta(), centers, hardcore: true, saturated: false }
    }

    /// Same sample with site `i` given a fresh displacement.
    pub fn redraw_site<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> LatticeSample {
        let mut out = self.clone();
        out.displacements[i] = uniform_in_ball(self.domain.d, self.u_max, rng);
        out
    }
}

pub fn perturbed_lattice_with<R: Rng + ?Sized>(
    domain: &TorusDomain,
    spacing: f64,
    u_max: f64,
    random_shift: bool,
    rng: &mut R,
) -> Result<LatticeSample> {
    let per_axis = (domain.l / spacing).round();
    if !(spacing > 0.0 && (per_axis * spacing - domain.l).abs() < 1e-9 * domain.l) {
        return Err(Error::Precondition(format!("L={} is not a multiple of a={spacing}", domain.l)));
    }
    if !(u_max >= 0.0 && u_max < 0.5 * spacing) {
        return Err(Error::Precondition(format!("u_max={u_max} must lie in [0, a/2)")));
    }
    if spacing - 2.0 * u_max <= 2.0 {
        return Err(Error::Precondition(format!(
            "a − 2u_max = {} leaves no hardcore slack",
            spacing - 2.0 * u_max
        )));
    }
    let d = domain.d;
    let per_axis = per_axis as usize;
    let shift: Vec<f64> = if random_shift {
        (0..d).map(|_| rng.random_range(0.0..spacing)).collect()
    } else {
        vec![0.5 * spacing; d]
    };
    let total = per_axis.pow(d as u32);
    let mut sites = Vec::with_capacity(total);
    for mut lin in 0..total {
        let mut z = Vec::with_capacity(d);
        for s in shift.iter() {
            z.push(-0.5 * domain.l + (lin % per_axis) as f64 * spacing + s);
            lin /= per_axis;
        }
        sites.push(z);
    }
    let displacements = (0..total).map(|_| uniform_in_ball(d, u_max, rng)).collect();
    Ok(LatticeSample { domain: *domain, spacing, u_max, sites, displacements })
}

/// Lattice of spacing `a` with i.i.d. uniform displacements in `B_{u_max}`;
/// a uniform global shift makes the process stationary.
pub fn sample_perturbed_lattice(
    domain: &TorusDomain,
    spacing: f64,
    u_max: f64,
    seed: u64,
) -> Result<ParticleConfiguration> {
    Ok(perturbed_lattice_with(domain, spacing, u_max, true, &mut rng::from_seed(seed))?.configuration())
}
