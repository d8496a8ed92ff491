use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub prefactor: f64,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Straight-line fit `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Weighted least squares line. Weights default to one.
pub fn fit_line(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::Data(format!("line fit needs matching data of length ≥ 2, got {n}")));
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() == n => w.to_vec(),
        Some(_) => return Err(Error::Data("weight length mismatch".into())),
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let xm = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - xm;
        let dy = ys[i] - ym;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Data("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = (0..n).map(|i| w[i] * (ys[i] - intercept - slope * xs[i]).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ssr / syy };
    let slope_stderr = if n > 2 { (ssr / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, slope_stderr, r_squared })
}

/// Power law `y = c x^p` by weighted least squares on `(log x, log y)`.
/// With errors the weights are `(y/σ_y)²`, the inverse variance of `log y`.
pub fn fit_power_law(xs: &[f64], ys: &[f64], y_errors: Option<&[f64]>) -> Result<PowerLawFit> {
    if xs.len() < 3 {
        return Err(Error::Data(format!("power-law fit needs at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Data("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let weights: Option<Vec<f64>> = match y_errors {
        Some(e) if e.len() == ys.len() && e.iter().all(|s| *s > 0.0 && s.is_finite()) => {
            Some(ys.iter().zip(e).map(|(y, s)| (y / s).powi(2)).collect())
        }
        _ => None,
    };
    let line = fit_line(&lx, &ly, weights.as_deref())?;
    Ok(PowerLawFit {
        exponent: line.slope,
        stderr: line.slope_stderr,
        r_squared: line.r_squared,
        prefactor: line.intercept.exp(),
    })
}

/// Linear fit of `y` (or `y²` when `square`) against `log x`, the test for
/// `(log x)^{1/2}` growth of `y`.
pub fn fit_log_law(xs: &[f64], ys: &[f64], square: bool) -> Result<LinearFit> {
    if xs.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Data("log-law fit needs positive abscissae".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = if square { ys.iter().map(|v| v * v).collect() } else { ys.to_vec() };
    fit_line(&lx, &y, None)
}
