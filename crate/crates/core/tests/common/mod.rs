//! Independent references shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use sediment_core::point_process::ParticleConfiguration;
use sediment_core::TorusDomain;

pub fn min_image(dx: f64, l: f64) -> f64 {
    dx - l * (dx / l).round()
}

/// Minimum over the `3^d` nearest images, no wrapping helper involved.
pub fn image_distance(x: &[f64], y: &[f64], l: f64) -> f64 {
    let d = x.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let mut s = 0.0;
        for a in 0..d {
            let shift = (c % 3) as f64 - 1.0;
            c /= 3;
            let base = (x[a] - y[a]).rem_euclid(l);
            let v = base + shift * l;
            s += v * v;
        }
        best = best.min(s.sqrt());
    }
    best
}

pub fn grid_point(dom: &TorusDomain, idx: usize) -> Vec<f64> {
    let n = dom.n_grid;
    let mut i = idx;
    (0..dom.d)
        .map(|_| {
            let j = i % n;
            i /= n;
            -0.5 * dom.l + j as f64 * dom.h()
        })
        .collect()
}

/// Discrete Stokes kernel by direct summation over Fourier modes.
/// `kernel[a*d+b][offset]` is the velocity component `a` at grid offset
/// `offset` due to a unit point source in component `b`.
pub struct DenseKernel {
    pub dom: TorusDomain,
    pub g: Vec<Vec<f64>>,
}

impl DenseKernel {
    pub fn new(dom: TorusDomain) -> Self {
        let d = dom.d;
        let n = dom.n_grid;
        let len = dom.len();
        let h = dom.h();
        let mut modes: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for idx in 0..len {
            let mut i = idx;
            let mut m = Vec::with_capacity(d);
            for _ in 0..d {
                let j = (i % n) as i64;
                i /= n;
                m.push(if j < n as i64 / 2 { j } else if j == n as i64 / 2 { i64::MAX } else { j - n as i64 });
            }
            if m.contains(&i64::MAX) || m.iter().all(|&v| v == 0) {
                continue;
            }
            let k: Vec<f64> = m.iter().map(|&v| 2.0 * PI * v as f64 / dom.l).collect();
            let kt: Vec<f64> = k.iter().map(|&v| (v * h).sin() / h).collect();
            let k2: f64 = k.iter().map(|v| v * v).sum();
            let kt2: f64 = kt.iter().map(|v| v * v).sum();
            let mut sym = vec![0.0; d * d];
            for a in 0..d {
                for b in 0..d {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    sym[a * d + b] = (delta - kt[a] * kt[b] / kt2) / k2;
                }
            }
            let phase_index: Vec<f64> = m.iter().map(|&v| 2.0 * PI * v as f64 / n as f64).collect();
            modes.push((phase_index, sym));
        }
        let mut g = vec![vec![0.0; len]; d * d];
        let mut off = vec![0usize; d];
        for o in 0..len {
            let mut i = o;
            for a in 0..d {
                off[a] = i % n;
                i /= n;
            }
            for (ph, sym) in &modes {
                let t: f64 = (0..d).map(|a| ph[a] * off[a] as f64).sum();
                let c = t.cos();
                for (gab, s) in g.iter_mut().zip(sym) {
                    gab[o] += s * c;
                }
            }
            for gab in g.iter_mut() {
                gab[o] /= len as f64;
            }
        }
        DenseKernel { dom, g }
    }

    fn offset(&self, target: usize, source: usize) -> usize {
        let n = self.dom.n_grid;
        let (mut t, mut s) = (target, source);
        let mut out = 0;
        let mut stride = 1;
        for _ in 0..self.dom.d {
            let diff = (t % n + n - s % n) % n;
            out += diff * stride;
            stride *= n;
            t /= n;
            s /= n;
        }
        out
    }

    pub fn entry(&self, target: usize, a: usize, source: usize, b: usize) -> f64 {
        self.g[a * self.dom.d + b][self.offset(target, source)]
    }
}

/// Cell indices of every particle, found by a full grid scan.
pub fn particle_cells(dom: &TorusDomain, config: &ParticleConfiguration) -> Vec<Vec<(usize, Vec<f64>)>> {
    config
        .centers
        .iter()
        .map(|c| {
            (0..dom.len())
                .filter_map(|idx| {
                    let x = grid_point(dom, idx);
                    let r: Vec<f64> = x.iter().zip(c).map(|(a, b)| min_image(a - b, dom.l)).collect();
                    let s: f64 = r.iter().map(|v| v * v).sum();
                    (s <= 1.0 + 1e-12).then_some((idx, r))
                })
                .collect()
        })
        .collect()
}

/// Velocity of the rigid-inclusion problem by assembling the saddle-point
/// system on the inclusion cells explicitly and solving it by SVD:
/// find forces `f` on the cells, free of rigid components, and rigid motions
/// `ξ` with `K(b + f) = Rξ` on every particle, `b = (1+α) e` on the cells.
pub fn dense_sedimentation(kernel: &DenseKernel, config: &ParticleConfiguration, e: &[f64]) -> Vec<Vec<f64>> {
    let dom = kernel.dom;
    let d = dom.d;
    let parts = particle_cells(&dom, config);
    let cells: Vec<(usize, usize, Vec<f64>)> = parts
        .iter()
        .enumerate()
        .flat_map(|(p, cs)| cs.iter().map(move |(i, r)| (p, *i, r.clone())))
        .collect();
    let nc = cells.len();
    let lambda = nc as f64 / dom.len() as f64;
    let alpha = lambda / (1.0 - lambda);
    let rigid_per = if d == 2 { 3 } else { 6 };
    let nr = rigid_per * parts.len();
    let nf = nc * d;
    let rigid = |p: usize, r: &[f64], a: usize, k: usize| -> f64 {
        if k / rigid_per != p {
            return 0.0;
        }
        let j = k % rigid_per;
        if j < d {
            return if j == a { 1.0 } else { 0.0 };
        }
        let (u, v) = match (d, j - d) {
            (2, _) => (0, 1),
            (_, 0) => (0, 1),
            (_, 1) => (0, 2),
            _ => (1, 2),
        };
        if a == u {
            -r[v]
        } else if a == v {
            r[u]
        } else {
            0.0
        }
    };
    let mut m = DMatrix::<f64>::zeros(nf + nr, nf + nr);
    let mut rhs = DVector::<f64>::zeros(nf + nr);
    for (i, (pi, ci, ri)) in cells.iter().enumerate() {
        for a in 0..d {
            let row = i * d + a;
            let mut kb = 0.0;
            for (j, (_, cj, _)) in cells.iter().enumerate() {
                for b in 0..d {
                    let g = kernel.entry(*ci, a, *cj, b);
                    m[(row, j * d + b)] = g;
                    kb += g * (1.0 + alpha) * e[b];
                }
            }
            rhs[row] = -kb;
            for k in 0..nr {
                let v = rigid(*pi, ri, a, k);
                m[(row, nf + k)] = -v;
                m[(nf + k, row)] = v;
            }
        }
    }
    let svd = m.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).expect("SVD solve");
    let mut phi = vec![vec![0.0; dom.len()]; d];
    for x in 0..dom.len() {
        for a in 0..d {
            let mut s = 0.0;
            for (j, (_, cj, _)) in cells.iter().enumerate() {
                for b in 0..d {
                    s += kernel.entry(x, a, *cj, b) * ((1.0 + alpha) * e[b] + sol[j * d + b]);
                }
            }
            phi[a][x] = s;
        }
    }
    phi
}

pub fn relative_l2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ca, cb) in a.iter().zip(b) {
        for (x, y) in ca.iter().zip(cb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}
