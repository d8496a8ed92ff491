//! Rigidity constraints on inclusion cells and the multiplier system
//! `C K Cᵀ μ = −C φ₀`, with `C = (I − Q)P` restricting to the cells and
//! removing the ℓ²-rigid part on each particle.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::SolverDiagnostics;
use crate::error::{Error, Result};
use crate::point_process::ParticleConfiguration;
use crate::torus::spectral::{cells_in_ball, packed_index};
use crate::torus::{StokesOperator, TorusDomain};

/// Dense block preconditioning is skipped above this many stored entries.
const BLOCK_BUDGET: usize = 40_000_000;
const SHIFT: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct Inclusion {
    pub cells: Vec<usize>,
    /// `x_cell − x_n`, flattened per cell.
    pub offsets: Vec<f64>,
    /// Orthonormal rigid motions restricted to the cells, each of length `d·cells`.
    basis: Vec<Vec<f64>>,
}

impl Inclusion {
    fn new(domain: &TorusDomain, center: &[f64]) -> Self {
        let d = domain.d;
        let (cells, offsets) = cells_in_ball(domain, center, 1.0);
        let m = cells.len();
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for a in 0..d {
            let mut v = vec![0.0; m * d];
            for c in 0..m {
                v[c * d + a] = 1.0;
            }
            raw.push(v);
        }
        let rotations: Vec<(usize, usize)> = if d == 2 { vec![(0, 1)] } else { vec![(0, 1), (0, 2), (1, 2)] };
        for (a, b) in rotations {
            let mut v = vec![0.0; m * d];
            for c in 0..m {
                let r = &offsets[c * d..(c + 1) * d];
                v[c * d + a] = -r[b];
                v[c * d + b] = r[a];
            }
            raw.push(v);
        }
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut v in raw {
            for _ in 0..2 {
                for q in &basis {
                    let s = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= s * y);
                }
            }
            let n = dot(&v, &v).sqrt();
            if n > 1e-12 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        Inclusion { cells, offsets, basis }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    /// `v ← (I − Q) v`.
    fn remove_rigid(&self, v: &mut [f64]) {
        for q in &self.basis {
            let s = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= s * y);
        }
    }

    /// Cell average and angular velocity of the best rigid fit to `v`.
    pub fn rigid_motion(&self, d: usize, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.cells.len();
        let mut mean = vec![0.0; d];
        let mut centroid = vec![0.0; d];
        for c in 0..m {
            for a in 0..d {
                mean[a] += v[c * d + a] / m as f64;
                centroid[a] += self.offsets[c * d + a] / m as f64;
            }
        }
        if d == 2 {
            let (mut num, mut den) = (0.0, 0.0);
            for c in 0..m {
                let rx = self.offsets[c * 2] - centroid[0];
                let ry = self.offsets[c * 2 + 1] - centroid[1];
                num += rx * v[c * 2 + 1] - ry * v[c * 2];
                den += rx * rx + ry * ry;
            }
            return (mean, vec![num / den]);
        }
        let mut torque = [0.0; 3];
        let mut inertia = nalgebra::Matrix3::<f64>::zeros();
        for c in 0..m {
            let r = nalgebra::Vector3::new(
                self.offsets[c * 3] - centroid[0],
                self.offsets[c * 3 + 1] - centroid[1],
                self.offsets[c * 3 + 2] - centroid[2],
            );
            let u = nalgebra::Vector3::new(v[c * 3], v[c * 3 + 1], v[c * 3 + 2]);
            let t = r.cross(&u);
            for a in 0..3 {
                torque[a] += t[a];
            }
            inertia += nalgebra::Matrix3::identity() * r.norm_squared() - r * r.transpose();
        }
        let omega = inertia
            .try_inverse()
            .map(|inv| inv * nalgebra::Vector3::from(torque))
            .unwrap_or_else(nalgebra::Vector3::zeros);
        (mean, omega.iter().copied().collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Inclusion cell sets of a configuration, laid out as one vector of
/// `d` components per cell, particle after particle.
#[derive(Debug, Clone)]
pub(crate) struct Constraints {
    pub d: usize,
    pub parts: Vec<Inclusion>,
    pub starts: Vec<usize>,
    pub len: usize,
}

impl Constraints {
    pub fn new(domain: &TorusDomain, config: &ParticleConfiguration) -> Self {
        let parts: Vec<Inclusion> = config.centers.par_iter().map(|x| Inclusion::new(domain, x)).collect();
        let mut starts = Vec::with_capacity(parts.len());
        let mut len = 0;
        for p in &parts {
            starts.push(len);
            len += p.len();
        }
        Constraints { d: domain.d, parts, starts, len }
    }

    pub fn cell_count(&self) -> usize {
        self.parts.iter().map(|p| p.cells.len()).sum()
    }

    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for p in &self.parts {
            for &c in &p.cells {
                s[c] = 1.0;
            }
        }
        s
    }

    pub fn slice<'a>(&self, v: &'a [f64], n: usize) -> &'a [f64] {
        &v[self.starts[n]..self.starts[n] + self.parts[n].len()]
    }

    pub fn remove_rigid(&self, v: &mut [f64]) {
        let mut rest = v;
        let mut chunks = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            let (head, tail) = rest.split_at_mut(p.len());
            chunks.push(head);
            rest = tail;
        }
        chunks.into_par_iter().zip(&self.parts).for_each(|(c, p)| p.remove_rigid(c));
    }

    pub fn gather(&self, field: &[Vec<f64>]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; self.len];
        for (p, &s) in self.parts.iter().zip(&self.starts) {
            for (c, &cell) in p.cells.iter().enumerate() {
                for a in 0..d {
                    out[s + c * d + a] = field[a][cell];
                }
            }
        }
        out
    }

    pub fn scatter(&self, v: &[f64], n: usize) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut out = vec![vec![0.0; n]; d];
        for (p, &s) in self.parts.iter().zip(&self.starts) {
            for (c, &cell) in p.cells.iter().enumerate() {
                for a in 0..d {
                    out[a][cell] += v[s + c * d + a];
                }
            }
        }
        out
    }

    /// `‖(I − Q)P(φ + A)‖ / ‖P(φ + A)‖`.
    pub fn rigid_fit_residual(&self, field: &[Vec<f64>], affine: Option<&[Vec<f64>]>) -> f64 {
        let mut v = self.gather(field);
        if let Some(a) = affine {
            v.iter_mut().zip(self.gather(a)).for_each(|(x, y)| *x += y);
        }
        let total = norm(&v);
        if total == 0.0 {
            return 0.0;
        }
        self.remove_rigid(&mut v);
        norm(&v) / total
    }
}

enum Preconditioner {
    Blocks(Vec<Cholesky<f64, Dyn>>),
    Scale(f64),
}

/// The multiplier operator `S = C K Cᵀ` with its block-Jacobi preconditioner.
pub(crate) struct MultiplierSystem<'a> {
    pub op: &'a StokesOperator,
    pub cons: Constraints,
    precond: Preconditioner,
}

impl<'a> MultiplierSystem<'a> {
    pub fn new(op: &'a StokesOperator, config: &ParticleConfiguration) -> Self {
        let cons = Constraints::new(op.domain(), config);
        let stored: usize = cons.parts.iter().map(|p| p.len() * p.len()).sum();
        let kernel = op.kernel();
        let diag = (0..op.domain().d).map(|a| kernel[packed_index(op.domain().d, a, a)][0]).sum::<f64>()
            / op.domain().d as f64;
        let precond = if stored <= BLOCK_BUDGET && !cons.parts.is_empty() {
            Preconditioner::Blocks(cons.parts.par_iter().map(|p| block_factor(op.domain(), &kernel, p)).collect())
        } else {
            Preconditioner::Scale(1.0 / diag)
        };
        MultiplierSystem { op, cons, precond }
    }

    pub fn preconditioner_name(&self) -> &'static str {
        match self.precond {
            Preconditioner::Blocks(_) => "block_jacobi",
            Preconditioner::Scale(_) => "diagonal",
        }
    }

    /// `K Cᵀ p` on the grid.
    pub fn velocity_of(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let mut q = p.to_vec();
        self.cons.remove_rigid(&mut q);
        self.op.velocity(&self.cons.scatter(&q, self.op.domain().len()))
    }

    /// `(S p, K Cᵀ p)`.
    pub fn apply(&self, p: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let u = self.velocity_of(p);
        (self.constrain(&u), u)
    }

    /// `C φ`.
    pub fn constrain(&self, field: &[Vec<f64>]) -> Vec<f64> {
        let mut v = self.cons.gather(field);
        self.cons.remove_rigid(&mut v);
        v
    }

    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        match &self.precond {
            Preconditioner::Scale(s) => r.iter().map(|v| v * s).collect(),
            Preconditioner::Blocks(blocks) => {
                let parts: Vec<Vec<f64>> = blocks
                    .par_iter()
                    .enumerate()
                    .map(|(n, ch)| {
                        let rhs = DVector::from_column_slice(self.cons.slice(r, n));
                        ch.solve(&rhs).as_slice().to_vec()
                    })
                    .collect();
                parts.concat()
            }
        }
    }

    /// `−C(φ + A)`.
    fn residual(&self, phi: &[Vec<f64>], affine: Option<&[f64]>) -> Vec<f64> {
        let mut r = self.constrain(phi);
        if let Some(a) = affine {
            r.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        }
        r.iter_mut().for_each(|x| *x = -*x);
        r
    }

    /// Preconditioned CG for `S μ = −C(φ₀ + A)`, tracking `φ = φ₀ + K Cᵀ μ`.
    /// `A` is an optional grid field supported on the inclusion cells.
    /// Stops once both the relative residual and the rigidity ratio are ≤ `tol`.
    pub fn solve(
        &self,
        phi0: Vec<Vec<f64>>,
        affine: Option<&[Vec<f64>]>,
        tol: f64,
        max_iterations: usize,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>, SolverDiagnostics)> {
        let start = Instant::now();
        let dom = *self.op.domain();
        let mut phi = phi0;
        let mut mu = vec![0.0; self.cons.len];
        let c_affine = affine.map(|a| self.constrain(a));
        let c_affine = c_affine.as_deref();
        let mut r = self.residual(&phi, c_affine);
        let b_norm = norm(&r);
        let mut history = Vec::new();
        let mut diag = SolverDiagnostics {
            iterations: 0,
            residual_history: Vec::new(),
            cg_residual: 0.0,
            rigidity_ratio: 0.0,
            rigid_fit_residual: 0.0,
            wall_time_s: 0.0,
            preconditioner: self.preconditioner_name().to_string(),
        };
        let scale = {
            let mut v = self.cons.gather(&phi);
            if let Some(a) = affine {
                v.iter_mut().zip(self.cons.gather(a)).for_each(|(x, y)| *x += y);
            }
            norm(&v)
        };
        let done = b_norm <= tol * scale && rigidity_ratio(&dom, &self.cons, &phi, affine) <= tol;
        if b_norm == 0.0 || self.cons.len == 0 || done {
            diag.rigidity_ratio = rigidity_ratio(&dom, &self.cons, &phi, affine);
            diag.wall_time_s = start.elapsed().as_secs_f64();
            return Ok((mu, phi, diag));
        }
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=max_iterations {
            let (sp, up) = self.apply(&p);
            let denom = dot(&p, &sp);
            if !(denom > 0.0) {
                break;
            }
            let alpha = rz / denom;
            mu.iter_mut().zip(&p).for_each(|(m, v)| *m += alpha * v);
            r.iter_mut().zip(&sp).for_each(|(x, v)| *x -= alpha * v);
            phi.par_iter_mut().zip(&up).for_each(|(f, u)| f.iter_mut().zip(u).for_each(|(x, y)| *x += alpha * y));
            let rel = norm(&r) / b_norm;
            history.push(rel);
            if rel <= tol {
                let true_r = self.residual(&phi, c_affine);
                let true_rel = norm(&true_r) / b_norm;
                let ratio = rigidity_ratio(&dom, &self.cons, &phi, affine);
                if true_rel <= tol && ratio <= tol {
                    diag.iterations = it;
                    diag.cg_residual = true_rel;
                    diag.rigidity_ratio = ratio;
                    diag.rigid_fit_residual = self.cons.rigid_fit_residual(&phi, affine);
                    diag.residual_history = history;
                    diag.wall_time_s = start.elapsed().as_secs_f64();
                    return Ok((mu, phi, diag));
                }
                if true_rel > tol {
                    r = true_r;
                }
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pv, zv)| *pv = zv + beta * *pv);
        }
        let residual = history.last().copied().unwrap_or(1.0);
        Err(Error::NotConverged { iterations: history.len(), residual, history })
    }
}

fn block_factor(domain: &TorusDomain, kernel: &[Vec<f64>], part: &Inclusion) -> Cholesky<f64, Dyn> {
    let d = domain.d;
    let cells = &part.cells;
    let nc = cells.len();
    let m = nc * d;
    let mut multi: Vec<Vec<i64>> = Vec::with_capacity(nc);
    let mut buf = vec![0usize; d];
    for &c in cells {
        domain.unravel(c, &mut buf);
        multi.push(buf.iter().map(|&v| v as i64).collect());
    }
    let mut g = DMatrix::<f64>::zeros(m, m);
    let mut diff = vec![0i64; d];
    for i in 0..nc {
        for j in i..nc {
            for a in 0..d {
                diff[a] = multi[i][a] - multi[j][a];
            }
            let off = domain.ravel(&diff);
            for a in 0..d {
                for b in 0..d {
                    let v = kernel[packed_index(d, a, b)][off];
                    g[(i * d + a, j * d + b)] = v;
                    g[(j * d + b, i * d + a)] = v;
                }
            }
        }
    }
    let r = part.basis.len();
    let basis = DMatrix::from_fn(m, r, |i, k| part.basis[k][i]);
    let gb = &g * &basis;
    let bgb = basis.transpose() * &gb;
    let scale = g.trace() / m as f64;
    let mut a = g - &basis * gb.transpose() - &gb * basis.transpose() + &basis * bgb * basis.transpose()
        + &basis * basis.transpose() * scale;
    for i in 0..m {
        a[(i, i)] += SHIFT * scale;
    }
    let a = 0.5 * (&a + a.transpose());
    Cholesky::new(a).expect("shifted rigidity block is positive definite")
}

/// RMS of the central-difference `D(φ + A)` over inclusion cells whose full
/// stencil lies in the same inclusion, divided by the RMS of `D(φ)` over fluid cells.
pub(crate) fn rigidity_ratio(
    domain: &TorusDomain,
    cons: &Constraints,
    phi: &[Vec<f64>],
    affine: Option<&[Vec<f64>]>,
) -> f64 {
    if cons.parts.is_empty() {
        return 0.0;
    }
    let d = domain.d;
    let n = domain.len();
    let mut label = vec![0u32; n];
    for (k, p) in cons.parts.iter().enumerate() {
        for &c in &p.cells {
            label[c] = k as u32 + 1;
        }
    }
    let h = domain.h();
    let ng = domain.n_grid;
    let strides: Vec<usize> = (0..d).map(|a| ng.pow(a as u32)).collect();
    let neighbor = |idx: usize, a: usize, up: bool| {
        let i = (idx / strides[a]) % ng;
        let j = if up { (i + 1) % ng } else { (i + ng - 1) % ng };
        idx - i * strides[a] + j * strides[a]
    };
    let cell = |idx: usize| {
        let lab = label[idx];
        let mut interior = true;
        let mut s = 0.0;
        let mut grad = [[0.0; 3]; 3];
        for a in 0..d {
            let up = neighbor(idx, a, true);
            let dn = neighbor(idx, a, false);
            if lab != 0 && (label[up] != lab || label[dn] != lab) {
                interior = false;
            }
            for c in 0..d {
                let mut diff = phi[c][up] - phi[c][dn];
                if let (Some(aff), true) = (affine, lab != 0) {
                    diff += aff[c][up] - aff[c][dn];
                }
                grad[c][a] = diff / (2.0 * h);
            }
        }
        for a in 0..d {
            for b in 0..d {
                let e = 0.5 * (grad[a][b] + grad[b][a]);
                s += e * e;
            }
        }
        (lab, interior, s)
    };
    const CHUNK: usize = 4096;
    let partial: Vec<[f64; 4]> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut acc = [0.0; 4];
            for idx in k * CHUNK..((k + 1) * CHUNK).min(n) {
                match cell(idx) {
                    (0, _, s) => {
                        acc[2] += s;
                        acc[3] += 1.0;
                    }
                    (_, true, s) => {
                        acc[0] += s;
                        acc[1] += 1.0;
                    }
                    _ => {}
                }
            }
            acc
        })
        .collect();
    let mut t = [0.0; 4];
    for p in &partial {
        for i in 0..4 {
            t[i] += p[i];
        }
    }
    let (inside, fluid) = ((t[0], t[1] as usize), (t[2], t[3] as usize));
    if inside.1 == 0 || fluid.1 == 0 || fluid.0 == 0.0 {
        return 0.0;
    }
    ((inside.0 / inside.1 as f64) / (fluid.0 / fluid.1 as f64)).sqrt()
}
