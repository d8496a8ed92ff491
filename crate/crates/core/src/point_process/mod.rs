//! Hardcore, Poisson and hyperuniform particle ensembles on the torus.

mod cell_list;
mod resample;
mod samplers;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::torus::{periodic_distance, unit_ball_volume, TorusDomain};

pub use cell_list::CellList;
pub use resample::{resample_in_ball, ResampleMode};
pub use samplers::{
    matern_intensity, matern_proposal_for_fraction, perturbed_lattice_with, poisson_with, rsa_with,
    sample_matern_hardcore, sample_perturbed_lattice, sample_poisson, sample_rsa, uniform_in_ball,
    LatticeSample, MaternProposal,
};

/// Centers of unit balls in `Q_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfiguration {
    #[serde(flatten)]
    pub domain: TorusDomain,
    pub delta: f64,
    pub centers: Vec<Vec<f64>>,
    /// False for Poisson samples, which carry no exclusion.
    #[serde(default = "yes")]
    pub hardcore: bool,
    /// Set when RSA stopped short of its target.
    #[serde(default)]
    pub saturated: bool,
}

fn yes() -> bool {
    true
}

impl ParticleConfiguration {
    pub fn new(domain: TorusDomain, delta: f64, centers: Vec<Vec<f64>>) -> Self {
        let centers = centers.iter().map(|c| domain.wrap_point(c)).collect();
        ParticleConfiguration { domain, delta, centers, hardcore: true, saturated: false }
    }

    pub fn empty(domain: TorusDomain, delta: f64) -> Self {
        Self::new(domain, delta, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn d(&self) -> usize {
        self.domain.d
    }

    /// `ρ_L = N/L^d`.
    pub fn intensity(&self) -> f64 {
        self.len() as f64 / self.domain.volume()
    }

    /// `λ_L = N|B|/L^d`.
    pub fn volume_fraction(&self) -> f64 {
        self.intensity() * unit_ball_volume(self.domain.d)
    }

    /// `α_L = λ_L/(1 − λ_L)`.
    pub fn backflow(&self) -> f64 {
        let l = self.volume_fraction();
        l / (1.0 - l)
    }

    pub fn hardcore_distance(&self) -> f64 {
        if self.hardcore {
            2.0 * (1.0 + self.delta)
        } else {
            0.0
        }
    }

    /// Checks the hardcore separation and `λ_L < 1/2`.
    pub fn validate(&self) -> Result<()> {
        if self.volume_fraction() >= 0.5 {
            return Err(Error::Density(self.volume_fraction()));
        }
        if !self.hardcore {
            return Err(Error::Precondition("configuration carries no hardcore condition".into()));
        }
        let min = 2.0 * (1.0 + self.delta);
        if let Some((i, j)) = closest_pair(self) {
            if periodic_distance(&self.centers[i], &self.centers[j], &self.domain) < min * (1.0 - 1e-12) {
                return Err(Error::Overlap(i, j));
            }
        }
        Ok(())
    }

    /// Rigid translation of every center.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for c in &mut out.centers {
            for (x, s) in c.iter_mut().zip(shift) {
                *x = self.domain.wrap(*x + s);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One center per row, columns `x0, x1, …`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.d()).map(|a| format!("x{a}")).collect();
        w.write_record(&header)?;
        for c in &self.centers {
            w.write_record(c.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indices of a pair realizing the minimum periodic distance.
pub fn closest_pair(config: &ParticleConfiguration) -> Option<(usize, usize)> {
    if config.len() < 2 {
        return None;
    }
    CellList::new(&config.domain, &config.centers).closest_pair()
}

/// Exact minimum of `|x_m − x_n|_L` over pairs.
pub fn min_pairwise_distance(config: &ParticleConfiguration) -> Result<f64> {
    match closest_pair(config) {
        Some((i, j)) => Ok(periodic_distance(&config.centers[i], &config.centers[j], &config.domain)),
        None => Err(Error::Precondition(format!("need at least 2 particles, got {}", config.len()))),
    }
}

/// O(N²) reference for [`min_pairwise_distance`].
pub fn min_pairwise_distance_brute(config: &ParticleConfiguration) -> Option<f64> {
    let n = config.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = periodic_distance(&config.centers[i], &config.centers[j], &config.domain);
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    Poisson {
        rho: f64,
    },
    /// Either the proposal intensity or a target volume fraction.
    MaternHardcore {
        #[serde(default)]
        rho_proposal: Option<f64>,
        #[serde(default)]
        lambda_target: Option<f64>,
    },
    Rsa {
        lambda_target: f64,
        #[serde(default = "default_attempts")]
        max_attempts: usize,
    },
    PerturbedLattice {
        spacing: f64,
        u_max: f64,
        #[serde(default = "yes")]
        random_shift: bool,
    },
}

fn default_attempts() -> usize {
    1_000_000
}

/// Reproducible ensemble: realization `i` is drawn from stream `(seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub process: ProcessKind,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.1
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realization count must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config("delta must be nonnegative".into()));
        }
        match &self.process {
            ProcessKind::MaternHardcore { rho_proposal, lambda_target } => {
                if rho_proposal.is_some() == lambda_target.is_some() {
                    return Err(Error::Config(
                        "matern_hardcore needs exactly one of rho_proposal, lambda_target".into(),
                    ));
                }
            }
            ProcessKind::Poisson { rho } if !(*rho > 0.0) => {
                return Err(Error::Config("poisson rho must be positive".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn sample(&self, domain: &TorusDomain, index: u64) -> Result<ParticleConfiguration> {
        let mut rng = rng::stream(self.seed, index, rng::stage::SAMPLE);
        match &self.process {
            ProcessKind::Poisson { rho } => Ok(poisson_with(domain, *rho, &mut rng)),
            ProcessKind::MaternHardcore { rho_proposal, lambda_target } => {
                let rho_p = match (rho_proposal, lambda_target) {
                    (Some(r), _) => *r,
                    (None, Some(l)) => matern_proposal_for_fraction(domain.d, *l, self.delta)?,
                    (None, None) => return Err(Error::Config("matern_hardcore has no intensity".into())),
                };
                samplers::matern_with(domain, rho_p, self.delta, &mut rng)
            }
            ProcessKind::Rsa { lambda_target, max_attempts } => {
                rsa_with(domain, *lambda_target, self.delta, *max_attempts, &mut rng)
            }
            ProcessKind::PerturbedLattice { spacing, u_max, random_shift } => {
                Ok(perturbed_lattice_with(domain, *spacing, *u_max, *random_shift, &mut rng)?.configuration())
            }
        }
    }

    /// All realizations, computed in parallel and returned in index order.
    pub fn sample_all(&self, domain: &TorusDomain) -> Result<Vec<ParticleConfiguration>> {
        (0..self.realizations as u64)
            .into_par_iter()
            .map(|i| self.sample(domain, i))
            .collect()
    }
}
