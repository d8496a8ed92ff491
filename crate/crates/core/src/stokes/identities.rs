use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SuspensionSolution;
use crate::error::{Error, Result};
use crate::special::gauss_legendre;
use crate::torus::spectral::gradient;
use crate::torus::{dirichlet_energy, unit_ball_volume, SpectralField};

/// `|∫|∇φ|² − (1+α) Σ_n e·∫_{I_n} φ| / ∫|∇φ|²`, both sides by grid quadrature.
pub fn check_energy_identity(solution: &SuspensionSolution) -> Result<f64> {
    if solution.cells.is_empty() {
        return Ok(0.0);
    }
    let lhs = dirichlet_energy(&solution.phi);
    if lhs == 0.0 {
        return Err(Error::Precondition("zero Dirichlet energy with particles present".into()));
    }
    let dv = solution.domain().cell_volume();
    let phi = solution.phi.values();
    let mut rhs = 0.0;
    for cells in &solution.cells {
        for &c in cells {
            for (a, ea) in solution.gravity.iter().enumerate() {
                rhs += ea * phi[a][c];
            }
        }
    }
    rhs *= (1.0 + solution.backflow) * dv;
    Ok((lhs - rhs).abs() / lhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingIdentity {
    /// `(1/N) Σ_n ê·V_n`.
    pub lhs: f64,
    /// `(α_L|e|)^{−1} ⨍|∇φ|²`.
    pub rhs: f64,
    pub gap: f64,
}

pub fn settling_identity(solution: &SuspensionSolution) -> Result<SettlingIdentity> {
    let n = solution.velocities.len();
    if n == 0 {
        return Err(Error::Precondition("settling identity needs at least one particle".into()));
    }
    if !(solution.backflow > 0.0) {
        return Err(Error::Precondition("settling identity needs a positive backflow factor".into()));
    }
    let norm = solution.gravity.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lhs = solution
        .velocities
        .iter()
        .map(|v| v.iter().zip(&solution.gravity).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        / (n as f64 * norm);
    let rhs = dirichlet_energy(&solution.phi) / solution.domain().volume() / (solution.backflow * norm);
    Ok(SettlingIdentity { lhs, rhs, gap: (lhs - rhs).abs() / lhs.abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBalance {
    /// `|e|B| + ∫_{∂B_R} σν − α e|B_R \ B|| / (|e||B|)`.
    pub force_residual: f64,
    /// `|∫_{∂B_R} (x − x_n) × σν| / (|e||B|)`.
    pub torque_residual: f64,
    pub radius: f64,
}

/// Quadrature nodes and weights on the sphere of radius `r` (normals first).
fn sphere_rule(d: usize, r: f64) -> Vec<(Vec<f64>, f64)> {
    if d == 2 {
        let m = 512;
        return (0..m)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / m as f64;
                (vec![t.cos(), t.sin()], 2.0 * PI * r / m as f64)
            })
            .collect();
    }
    let (z, w) = gauss_legendre(48);
    let m = 96;
    let mut out = Vec::with_capacity(z.len() * m);
    for (zi, wi) in z.iter().zip(&w) {
        let s = (1.0 - zi * zi).sqrt();
        for j in 0..m {
            let p = 2.0 * PI * j as f64 / m as f64;
            out.push((vec![s * p.cos(), s * p.sin(), *zi], wi * 2.0 * PI / m as f64 * r * r));
        }
    }
    out
}

/// Surface-quadrature check of the force and torque balances on spheres
/// of radius `1 + 4h` around each particle. Accurate to `O(h)` only.
pub fn surface_force_balance(solution: &SuspensionSolution) -> Vec<SurfaceBalance> {
    let dom = *solution.domain();
    let d = dom.d;
    let radius = 1.0 + 4.0 * dom.h();
    let grads: Vec<SpectralField> = gradient(&solution.phi)
        .into_iter()
        .map(|g| SpectralField::new(dom, g))
        .collect();
    let rule = sphere_rule(d, radius);
    let ball = unit_ball_volume(d);
    let annulus = ball * (radius.powi(d as i32) - 1.0);
    let e = &solution.gravity;
    let e_norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    solution
        .centers
        .iter()
        .map(|x| {
            let mut force = vec![0.0; d];
            let mut torque = [0.0; 3];
            for (nu, w) in &rule {
                let y: Vec<f64> = (0..d).map(|a| x[a] + radius * nu[a]).collect();
                let p = solution.pressure.interpolate(&y)[0];
                let g: Vec<Vec<f64>> = grads.iter().map(|f| f.interpolate(&y)).collect();
                let mut t = vec![0.0; d];
                for a in 0..d {
                    for b in 0..d {
                        t[a] += (g[a][b] + g[b][a]) * nu[b];
                    }
                    t[a] -= p * nu[a];
                    force[a] += w * t[a];
                }
                let r: Vec<f64> = nu.iter().map(|v| radius * v).collect();
                if d == 2 {
                    torque[0] += w * (r[0] * t[1] - r[1] * t[0]);
                } else {
                    torque[0] += w * (r[1] * t[2] - r[2] * t[1]);
                    torque[1] += w * (r[2] * t[0] - r[0] * t[2]);
                    torque[2] += w * (r[0] * t[1] - r[1] * t[0]);
                }
            }
            let res: f64 = (0..d)
                .map(|a| (e[a] * ball + force[a] - solution.backflow * e[a] * annulus).powi(2))
                .sum::<f64>()
                .sqrt();
            let tq = torque.iter().map(|v| v * v).sum::<f64>().sqrt();
            SurfaceBalance {
                force_residual: res / (e_norm * ball),
                torque_residual: tq / (e_norm * ball),
                radius,
            }
        })
        .collect()
}
