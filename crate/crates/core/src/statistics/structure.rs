use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::export::EstimateRow;
use super::{check_ensemble, mean, standard_error, PairCorrelationEstimate};
use crate::error::{Error, Result};
use crate::point_process::ParticleConfiguration;
use crate::special::bessel_j;

/// Radially binned `S(k)`, one bin per exact value of `|m|²`, `k = 2πm/L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFactorEstimate {
    pub k: Vec<f64>,
    pub s: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Number of dual-lattice vectors in each shell.
    pub degeneracy: Vec<usize>,
    pub realizations: usize,
}

impl StructureFactorEstimate {
    pub fn rows(&self) -> Vec<EstimateRow> {
        (0..self.k.len())
            .map(|i| EstimateRow {
                abscissa: self.k[i],
                value: self.s[i],
                stderr: self.stderr[i],
                n_samples: self.degeneracy[i] * self.realizations,
            })
            .collect()
    }
}

/// Nonzero integer vectors with `|m|² ≤ m2_max`, grouped by `|m|²`.
fn shells(d: usize, m2_max: i64) -> BTreeMap<i64, Vec<Vec<i64>>> {
    let r = (m2_max as f64).sqrt().floor() as i64;
    let side = (2 * r + 1) as usize;
    let mut out: BTreeMap<i64, Vec<Vec<i64>>> = BTreeMap::new();
    for lin in 0..side.pow(d as u32) {
        let mut i = lin;
        let mut m = Vec::with_capacity(d);
        for _ in 0..d {
            m.push((i % side) as i64 - r);
            i /= side;
        }
        let m2: i64 = m.iter().map(|v| v * v).sum();
        if m2 > 0 && m2 <= m2_max {
            out.entry(m2).or_default().push(m);
        }
    }
    out
}

fn phase_sum_sq(config: &ParticleConfiguration, m: &[i64]) -> f64 {
    let scale = 2.0 * PI / config.domain.l;
    let (mut re, mut im) = (0.0, 0.0);
    for x in &config.centers {
        let ph: f64 = m.iter().zip(x).map(|(mi, xi)| *mi as f64 * xi).sum::<f64>() * scale;
        re += ph.cos();
        im -= ph.sin();
    }
    re * re + im * im
}

/// `|Σ_n e^{−ik·x_n}|²/N` at every dual-lattice vector with `0 < |k| ≤ k_max`.
pub fn structure_factor_modes(config: &ParticleConfiguration, k_max: f64) -> Vec<(Vec<i64>, f64)> {
    let n = config.len().max(1) as f64;
    let m2_max = (k_max * config.domain.l / (2.0 * PI)).powi(2).floor() as i64;
    shells(config.d(), m2_max)
        .into_values()
        .flatten()
        .map(|m| {
            let s = phase_sum_sq(config, &m) / n;
            (m, s)
        })
        .collect()
}

/// Direct-summation structure factor averaged over shells and realizations.
pub fn estimate_structure_factor(ensemble: &[ParticleConfiguration], k_max: f64) -> Result<StructureFactorEstimate> {
    if ensemble.is_empty() {
        return Err(Error::Data("empty ensemble".into()));
    }
    check_ensemble(ensemble, 2)?;
    let dom = ensemble[0].domain;
    let m2_max = (k_max * dom.l / (2.0 * PI)).powi(2).floor() as i64;
    let groups = shells(dom.d, m2_max);
    if groups.is_empty() {
        return Err(Error::Data(format!("k_max {k_max} is below the smallest dual-lattice wavenumber")));
    }
    // per[i][b]: shell average for realization i
    let per: Vec<Vec<f64>> = ensemble
        .par_iter()
        .map(|c| {
            let n = c.len().max(1) as f64;
            groups
                .values()
                .map(|ms| ms.iter().map(|m| phase_sum_sq(c, m)).sum::<f64>() / (ms.len() as f64 * n))
                .collect()
        })
        .collect();
    let mut k = Vec::new();
    let mut s = Vec::new();
    let mut stderr = Vec::new();
    let mut degeneracy = Vec::new();
    for (b, (m2, ms)) in groups.iter().enumerate() {
        let vals: Vec<f64> = per.iter().map(|p| p[b]).collect();
        k.push(2.0 * PI * (*m2 as f64).sqrt() / dom.l);
        s.push(mean(&vals));
        stderr.push(standard_error(&vals));
        degeneracy.push(ms.len());
    }
    Ok(StructureFactorEstimate { k, s, stderr, degeneracy, realizations: ensemble.len() })
}

fn radial_kernel(d: usize, x: f64) -> f64 {
    match d {
        1 => x.cos(),
        2 => bessel_j(0, x),
        3 => {
            if x.abs() < 1e-8 {
                1.0
            } else {
                x.sin() / x
            }
        }
        _ => {
            if x.abs() < 1e-8 {
                1.0
            } else {
                2.0 * bessel_j(1, x) / x
            }
        }
    }
}

/// `1 + ρ ∫ g2(r) ⟨e^{−ik·x}⟩_{|x|=r} dx` from binned `g2` with its
/// per-bin errors propagated as independent.
pub fn structure_factor_from_g2(est: &PairCorrelationEstimate, d: usize, k: f64) -> (f64, f64) {
    let centers = est.centers();
    let mut s = 1.0;
    let mut var = 0.0;
    for b in 0..centers.len() {
        let w = est.rho * est.shell_volumes[b] * radial_kernel(d, k * centers[b]);
        s += w * est.g2[b];
        var += (w * est.stderr[b]).powi(2);
    }
    (s, var.sqrt())
}
