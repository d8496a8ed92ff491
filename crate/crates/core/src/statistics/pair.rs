use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::export::EstimateRow;
use super::shell::torus_ball_volume;
use super::{check_ensemble, jackknife, loo_sum};
use crate::error::{Error, Result};
use crate::point_process::{CellList, ParticleConfiguration};
use crate::torus::periodic_distance;

/// Shell-count estimate of `g2 = f2 − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelationEstimate {
    pub edges: Vec<f64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub rho: f64,
    pub realizations: usize,
    /// Ordered pair counts per bin, summed over realizations.
    pub pair_counts: Vec<u64>,
    pub shell_volumes: Vec<f64>,
}

impl PairCorrelationEstimate {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `∫ g2` over the binned range.
    pub fn integral(&self) -> f64 {
        self.g2.iter().zip(&self.shell_volumes).map(|(g, v)| g * v).sum()
    }

    pub fn rows(&self) -> Vec<EstimateRow> {
        self.centers()
            .into_iter()
            .enumerate()
            .map(|(b, r)| EstimateRow {
                abscissa: r,
                value: self.g2[b],
                stderr: self.stderr[b],
                n_samples: self.pair_counts[b] as usize,
            })
            .collect()
    }
}

fn pair_counts(config: &ParticleConfiguration, edges: &[f64]) -> Vec<u64> {
    let nb = edges.len() - 1;
    let r_max = edges[nb];
    let mut counts = vec![0u64; nb];
    let pts = &config.centers;
    let cells = CellList::with_cell_size(&config.domain, pts, r_max);
    for (i, x) in pts.iter().enumerate() {
        for j in cells.neighbors(x, r_max) {
            if j <= i {
                continue;
            }
            let r = periodic_distance(x, &pts[j], &config.domain);
            if r < edges[0] || r >= r_max {
                continue;
            }
            let b = edges.partition_point(|e| *e <= r) - 1;
            counts[b] += 2;
        }
    }
    counts
}

/// `g2(r) = (ordered pair count)/(ρ̂² L^d |shell| M) − 1` with exact
/// torus-restricted shell volumes and jackknife errors over realizations.
pub fn estimate_pair_correlation(
    ensemble: &[ParticleConfiguration],
    edges: &[f64],
) -> Result<PairCorrelationEstimate> {
    if ensemble.is_empty() {
        return Err(Error::Data("empty ensemble".into()));
    }
    check_ensemble(ensemble, 2)?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
        return Err(Error::Data("bin edges must be nonnegative and strictly increasing".into()));
    }
    let dom = ensemble[0].domain;
    let min_width = edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if min_width < 2.0 * dom.h() - 1e-12 {
        return Err(Error::Precondition(format!("bin width {min_width} below 2h = {}", 2.0 * dom.h())));
    }
    let half_diag = 0.5 * dom.l * (dom.d as f64).sqrt();
    let edges: Vec<f64> = edges.iter().map(|e| e.min(half_diag + 1e-9)).collect();
    let m = ensemble.len();
    let vol = dom.volume();
    let shells: Vec<f64> = edges
        .windows(2)
        .map(|w| torus_ball_volume(dom.d, dom.l, w[1]) - torus_ball_volume(dom.d, dom.l, w[0]))
        .collect();
    let per: Vec<Vec<u64>> = ensemble.par_iter().map(|c| pair_counts(c, &edges)).collect();
    let counts_n: Vec<f64> = ensemble.iter().map(|c| c.len() as f64).collect();
    let nb = shells.len();
    let by_bin: Vec<Vec<f64>> = (0..nb).map(|b| per.iter().map(|c| c[b] as f64).collect()).collect();
    let estimate = |b: usize, skip: Option<usize>| {
        let mm = (m - skip.map_or(0, |_| 1)) as f64;
        let rho = loo_sum(&counts_n, skip) / (mm * vol);
        if rho == 0.0 || shells[b] == 0.0 {
            return -1.0;
        }
        loo_sum(&by_bin[b], skip) / (rho * rho * vol * shells[b] * mm) - 1.0
    };
    let mut g2 = Vec::with_capacity(nb);
    let mut stderr = Vec::with_capacity(nb);
    for b in 0..nb {
        let (v, e) = jackknife(m, |skip| estimate(b, skip));
        g2.push(v);
        stderr.push(e);
    }
    Ok(PairCorrelationEstimate {
        edges,
        g2,
        stderr,
        rho: counts_n.iter().sum::<f64>() / (m as f64 * vol),
        realizations: m,
        pair_counts: (0..nb).map(|b| per.iter().map(|c| c[b]).sum()).collect(),
        shell_volumes: shells,
    })
}
