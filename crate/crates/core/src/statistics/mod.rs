//! Two-point statistics of particle ensembles and scaling fits.

mod export;
mod fit;
mod pair;
mod shell;
mod structure;
mod variance;

pub use export::{write_rows, EstimateRow};
pub use fit::{fit_line, fit_log_law, fit_power_law, LinearFit, PowerLawFit};
pub use pair::{estimate_pair_correlation, PairCorrelationEstimate};
pub use shell::torus_ball_volume;
pub use structure::{
    estimate_structure_factor, structure_factor_from_g2, structure_factor_modes, StructureFactorEstimate,
};
pub use variance::{
    efron_stein_check, hyperuniformity_metric, linear_functional_variance, number_variance_at, number_variance_curve, window_grid,
    EfronStein, Functional, FunctionalVariance, MetricEstimate, NumberVarianceCurve,
};

use crate::error::{Error, Result};
use crate::point_process::ParticleConfiguration;

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Jackknife standard error of `estimator` over `m` realizations;
/// `estimator(Some(i))` leaves realization `i` out.
pub fn jackknife(m: usize, estimator: impl Fn(Option<usize>) -> f64) -> (f64, f64) {
    let full = estimator(None);
    if m < 2 {
        return (full, 0.0);
    }
    let loo: Vec<f64> = (0..m).map(|i| estimator(Some(i))).collect();
    let avg = mean(&loo);
    let var = loo.iter().map(|t| (t - avg).powi(2)).sum::<f64>() * (m - 1) as f64 / m as f64;
    (full, var.sqrt())
}

/// Sum over realizations with one optionally left out.
pub(crate) fn loo_sum(values: &[f64], skip: Option<usize>) -> f64 {
    values.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, v)| v).sum()
}

pub(crate) fn check_ensemble(ensemble: &[ParticleConfiguration], needed: usize) -> Result<()> {
    if ensemble.len() < needed {
        return Err(Error::InsufficientRealizations { needed, got: ensemble.len() });
    }
    let dom = ensemble[0].domain;
    if ensemble.iter().any(|c| c.domain.d != dom.d || c.domain.l != dom.l) {
        return Err(Error::Data("ensemble mixes domains".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let (m, se) = jackknife(xs.len(), |skip| {
            loo_sum(&xs, skip) / (xs.len() - skip.map_or(0, |_| 1)) as f64
        });
        assert!((m - 4.0).abs() < 1e-14);
        assert!((se - standard_error(&xs)).abs() < 1e-12);
    }
}
