//! The periodic tank `(−L/2, L/2]^d`, its grid, and fields living on it.

pub mod export;
pub mod fft;
pub mod field;
pub mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use field::SpectralField;
pub use spectral::{
    averaged_stokeslet, ball_average, ball_cells, dirichlet_energy, dirichlet_inner, laplace_green, leray_project,
    StokesOperator, WaveGrid,
};

/// Largest grid spacing accepted for a field solve.
pub const MAX_SPACING: f64 = 0.25;

/// Cubic periodic domain with `n_grid` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusDomain {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub n_grid: usize,
}

fn is_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

impl TorusDomain {
    /// `n_grid` must be even with no prime factors beyond 5.
    pub fn new(d: usize, l: f64, n_grid: usize) -> Result<Self> {
        if !(1..=4).contains(&d) {
            return Err(Error::Dimension(d));
        }
        if !(l.is_finite() && l >= 1.0) {
            return Err(Error::InvalidDomain(format!("side length {l} must be finite and >= 1")));
        }
        if n_grid < 2 || n_grid % 2 != 0 || !is_smooth(n_grid) {
            return Err(Error::InvalidDomain(format!(
                "n_grid {n_grid} must be even with prime factors 2, 3, 5 only"
            )));
        }
        Ok(TorusDomain { d, l, n_grid })
    }

    /// Grid with `points_per_unit` points per unit length, i.e. `h = 1/points_per_unit`.
    pub fn with_density(d: usize, l: f64, points_per_unit: f64) -> Result<Self> {
        let n = (l * points_per_unit).round() as usize;
        let dom = Self::new(d, l, n)?;
        if ((n as f64) - l * points_per_unit).abs() > 1e-9 {
            return Err(Error::InvalidDomain(format!(
                "L={l} times {points_per_unit} points per unit is not an integer"
            )));
        }
        Ok(dom)
    }

    pub fn h(&self) -> f64 {
        self.l / self.n_grid as f64
    }

    pub fn len(&self) -> usize {
        self.n_grid.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.l.powi(self.d as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn check_resolution(&self) -> Result<()> {
        if self.h() > MAX_SPACING + 1e-12 {
            return Err(Error::Resolution { h: self.h(), max: MAX_SPACING });
        }
        Ok(())
    }

    /// Per-axis integer indices of a linear grid index (axis 0 fastest).
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for o in out.iter_mut().take(self.d) {
            *o = idx % self.n_grid;
            idx /= self.n_grid;
        }
    }

    /// Linear index of per-axis indices, each reduced modulo `n_grid`.
    pub fn ravel(&self, multi: &[i64]) -> usize {
        let n = self.n_grid as i64;
        multi.iter().take(self.d).rev().fold(0usize, |acc, &m| {
            acc * self.n_grid + m.rem_euclid(n) as usize
        })
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.l + i as f64 * self.h()
    }

    pub fn grid_point(&self, idx: usize) -> Vec<f64> {
        let mut m = [0usize; 4];
        self.unravel(idx, &mut m);
        m[..self.d].iter().map(|&i| self.coordinate(i)).collect()
    }

    /// Representative of `x` in `(−L/2, L/2]`.
    pub fn wrap(&self, x: f64) -> f64 {
        wrap_coordinate(x, self.l)
    }

    pub fn wrap_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.wrap(v)).collect()
    }

    /// Minimum-image displacement `x − y`.
    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| minimum_image(a - b, self.l)).collect()
    }
}

pub fn wrap_coordinate(x: f64, l: f64) -> f64 {
    let mut r = x - l * (x / l).round();
    if r <= -0.5 * l {
        r += l;
    } else if r > 0.5 * l {
        r -= l;
    }
    r
}

/// Minimum-image reduction of one displacement component.
pub fn minimum_image(dx: f64, l: f64) -> f64 {
    dx - l * (dx / l).round()
}

/// Flat-torus distance `|x − y|_L`.
pub fn periodic_distance(x: &[f64], y: &[f64], domain: &TorusDomain) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| minimum_image(a - b, domain.l).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => {
            let half = d as f64 / 2.0;
            PI.powf(half) / gamma_half_integer(half + 1.0)
        }
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    if x <= 1.0 {
        if (x - 0.5).abs() < 1e-12 {
            std::f64::consts::PI.sqrt()
        } else {
            1.0
        }
    } else {
        (x - 1.0) * gamma_half_integer(x - 1.0)
    }
}
