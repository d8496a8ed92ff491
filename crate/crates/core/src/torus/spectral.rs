//! Fourier-space operators: Leray projection, periodic Laplace and Stokes
//! inversion, Green's kernels and ball averages.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::FftNd;
use super::field::SpectralField;
use super::{TorusDomain, MAX_SPACING};
use crate::error::{Error, Result};

/// Dual lattice `(2π/L) Z^d` restricted to the grid's index box.
#[derive(Debug, Clone)]
pub struct WaveGrid {
    d: usize,
    n: usize,
    k: Vec<f64>,
    compact: Vec<f64>,
    nyquist: Vec<bool>,
}

impl WaveGrid {
    pub fn new(domain: &TorusDomain) -> Self {
        let n = domain.n_grid;
        let step = 2.0 * std::f64::consts::PI / domain.l;
        let signed = |i: usize| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        let h = domain.h();
        let k: Vec<f64> = (0..n).map(|i| step * signed(i) as f64).collect();
        WaveGrid {
            d: domain.d,
            n,
            compact: k.iter().map(|&v| (v * h).sin() / h).collect(),
            k,
            nyquist: (0..n).map(|i| n % 2 == 0 && i == n / 2).collect(),
        }
    }

    /// Derivative symbol at a linear index; components along Nyquist axes are zero.
    pub fn wavevector(&self, mut idx: usize, out: &mut [f64]) {
        for o in out.iter_mut().take(self.d) {
            let i = idx % self.n;
            *o = if self.nyquist[i] { 0.0 } else { self.k[i] };
            idx /= self.n;
        }
    }

    /// Central-difference symbol `sin(k_a h)/h`, used for divergence and
    /// the Leray projection. Vanishes on Nyquist axes.
    pub fn divergence_symbol(&self, mut idx: usize, out: &mut [f64]) {
        for o in out.iter_mut().take(self.d) {
            let i = idx % self.n;
            *o = if self.nyquist[i] { 0.0 } else { self.compact[i] };
            idx /= self.n;
        }
    }

    /// `|k|²` of the Laplacian symbol (Nyquist axes included).
    pub fn k_squared(&self, mut idx: usize) -> f64 {
        let mut s = 0.0;
        for _ in 0..self.d {
            let k = self.k[idx % self.n];
            s += k * k;
            idx /= self.n;
        }
        s
    }

    pub fn has_nyquist(&self, mut idx: usize) -> bool {
        for _ in 0..self.d {
            if self.nyquist[idx % self.n] {
                return true;
            }
            idx /= self.n;
        }
        false
    }

    /// Signed integer mode numbers.
    pub fn mode(&self, mut idx: usize, out: &mut [i64]) {
        let n = self.n as i64;
        for o in out.iter_mut().take(self.d) {
            let i = (idx % self.n) as i64;
            *o = if i <= n / 2 { i } else { i - n };
            idx /= self.n;
        }
    }
}

fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

fn real_part(values: &[Complex64]) -> Vec<f64> {
    values.iter().map(|z| z.re).collect()
}

/// Periodic Stokes solution operator `s ↦ (φ, Π)` with `−Δφ + ∇̃Π = s`,
/// `diṽ φ = 0`, `⨍φ = 0`. The Laplacian is spectral; `∇̃` and `diṽ` are
/// central differences, so that discrete gradients supported in a region
/// stay supported there. Modes carrying a Nyquist index are dropped.
#[derive(Debug, Clone)]
pub struct StokesOperator {
    domain: TorusDomain,
    fft: FftNd,
    grid: WaveGrid,
}

impl StokesOperator {
    pub fn new(domain: &TorusDomain) -> Result<Self> {
        if !(2..=3).contains(&domain.d) {
            return Err(Error::Dimension(domain.d));
        }
        domain.check_resolution()?;
        Ok(Self::unchecked(domain))
    }

    pub(crate) fn unchecked(domain: &TorusDomain) -> Self {
        StokesOperator {
            domain: *domain,
            fft: FftNd::new(domain.n_grid, domain.d),
            grid: WaveGrid::new(domain),
        }
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn wave_grid(&self) -> &WaveGrid {
        &self.grid
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf = to_complex(values);
        self.fft.forward(&mut buf);
        buf
    }

    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut spec);
        real_part(&spec)
    }

    /// `(k̃, |k̃|², |k|²)` on active modes.
    fn active(&self, idx: usize) -> Option<([f64; 3], f64, f64)> {
        if idx == 0 || self.grid.has_nyquist(idx) {
            return None;
        }
        let mut k = [0.0; 3];
        self.grid.divergence_symbol(idx, &mut k[..self.domain.d]);
        let kt2 = k.iter().map(|v| v * v).sum();
        Some((k, kt2, self.grid.k_squared(idx)))
    }

    /// Velocity spectra from source spectra.
    pub fn velocity_spectrum(&self, src: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let d = self.domain.d;
        let modes: Vec<[Complex64; 3]> = (0..self.domain.len())
            .into_par_iter()
            .map(|idx| {
                let mut out = [Complex64::default(); 3];
                if let Some((k, kt2, k2)) = self.active(idx) {
                    let mut kdot = Complex64::default();
                    for a in 0..d {
                        kdot += src[a][idx] * k[a];
                    }
                    for a in 0..d {
                        out[a] = (src[a][idx] - kdot * (k[a] / kt2)) / k2;
                    }
                }
                out
            })
            .collect();
        (0..d).map(|a| modes.iter().map(|m| m[a]).collect()).collect()
    }

    /// Pressure spectrum `Π̂ = −i k̃·ŝ/|k̃|²`.
    pub fn pressure_spectrum(&self, src: &[Vec<Complex64>]) -> Vec<Complex64> {
        let d = self.domain.d;
        (0..self.domain.len())
            .into_par_iter()
            .map(|idx| match self.active(idx) {
                Some((k, kt2, _)) => {
                    let mut kdot = Complex64::default();
                    for a in 0..d {
                        kdot += src[a][idx] * k[a];
                    }
                    Complex64::new(0.0, -1.0) * kdot / kt2
                }
                None => Complex64::default(),
            })
            .collect()
    }

    pub fn velocity(&self, source: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let src: Vec<Vec<Complex64>> = source.iter().map(|s| self.forward(s)).collect();
        self.velocity_spectrum(&src)
            .into_iter()
            .map(|s| self.inverse_real(s))
            .collect()
    }

    /// Velocity for a source of the form `s(x) e`, needing a single forward transform.
    pub fn velocity_scalar_source(&self, s: &[f64], e: &[f64]) -> Vec<Vec<f64>> {
        let sh = self.forward(s);
        let src: Vec<Vec<Complex64>> = e.iter().map(|&ea| sh.iter().map(|z| z * ea).collect()).collect();
        self.velocity_spectrum(&src)
            .into_iter()
            .map(|s| self.inverse_real(s))
            .collect()
    }

    /// Velocity and pressure for a source `s(x) e`.
    pub fn solve_scalar_source(&self, s: &[f64], e: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let sh = self.forward(s);
        let src: Vec<Vec<Complex64>> = e.iter().map(|&ea| sh.iter().map(|z| z * ea).collect()).collect();
        let p = self.inverse_real(self.pressure_spectrum(&src));
        let u = self
            .velocity_spectrum(&src)
            .into_iter()
            .map(|s| self.inverse_real(s))
            .collect();
        (u, p)
    }

    pub fn solve(&self, source: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let src: Vec<Vec<Complex64>> = source.iter().map(|s| self.forward(s)).collect();
        let p = self.inverse_real(self.pressure_spectrum(&src));
        let u = self
            .velocity_spectrum(&src)
            .into_iter()
            .map(|s| self.inverse_real(s))
            .collect();
        (u, p)
    }

    /// Discrete Stokeslet `G_ab` on grid offsets, packed upper-triangular
    /// (`(0,0), (0,1), …, (1,1), …`). `(K f)_a(x_i) = Σ_j G_ab(x_i − x_j) f_b(x_j)`.
    pub fn kernel(&self) -> Vec<Vec<f64>> {
        let d = self.domain.d;
        let len = self.domain.len();
        let mut out = Vec::new();
        for a in 0..d {
            for b in a..d {
                let spec: Vec<Complex64> = (0..len)
                    .into_par_iter()
                    .map(|idx| match self.active(idx) {
                        Some((k, kt2, k2)) => {
                            let delta = if a == b { 1.0 } else { 0.0 };
                            Complex64::new((delta - k[a] * k[b] / kt2) / k2, 0.0)
                        }
                        None => Complex64::default(),
                    })
                    .collect();
                out.push(self.inverse_real(spec));
            }
        }
        out
    }
}

/// Index into the packed kernel for the pair `(a, b)`.
pub fn packed_index(d: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * d - a * (a + 1) / 2 + b
}

/// Solves `−Δu = s − ⨍s` with zero mean.
pub fn laplace_solve(domain: &TorusDomain, source: &[f64]) -> Vec<f64> {
    let fft = FftNd::new(domain.n_grid, domain.d);
    let grid = WaveGrid::new(domain);
    let mut buf = to_complex(source);
    fft.forward(&mut buf);
    buf.par_iter_mut().enumerate().for_each(|(idx, z)| {
        if idx == 0 {
            *z = Complex64::default();
        } else {
            *z /= grid.k_squared(idx);
        }
    });
    fft.inverse(&mut buf);
    real_part(&buf)
}

/// Linear index of the grid point nearest to `x`.
pub fn nearest_cell(domain: &TorusDomain, x: &[f64]) -> usize {
    let h = domain.h();
    let m: Vec<i64> = x
        .iter()
        .map(|&v| ((domain.wrap(v) + 0.5 * domain.l) / h).round() as i64)
        .collect();
    domain.ravel(&m)
}

/// Periodic Green's function `G_L(· − shift)` of `−ΔG = δ − L^{−d}`, with the
/// delta taken as the unit-mass indicator of the cell nearest to `shift`.
pub fn laplace_green(domain: &TorusDomain, shift: &[f64]) -> Result<SpectralField> {
    domain.check_resolution()?;
    let mut src = vec![-1.0 / domain.volume(); domain.len()];
    src[nearest_cell(domain, shift)] += 1.0 / domain.cell_volume();
    let g = laplace_solve(domain, &src);
    Ok(SpectralField::scalar(*domain, g).with_flags(false, true))
}

/// Cells whose centers lie within `radius` of `center`, with their
/// minimum-image offsets `x_cell − center` flattened per cell.
pub fn cells_in_ball(domain: &TorusDomain, center: &[f64], radius: f64) -> (Vec<usize>, Vec<f64>) {
    assert!(radius < 0.5 * domain.l, "ball radius must be below L/2");
    let d = domain.d;
    let h = domain.h();
    let c = domain.wrap_point(center);
    let lo: Vec<i64> = c
        .iter()
        .map(|&v| ((v + 0.5 * domain.l - radius) / h - 1e-9).ceil() as i64)
        .collect();
    let hi: Vec<i64> = c
        .iter()
        .map(|&v| ((v + 0.5 * domain.l + radius) / h + 1e-9).floor() as i64)
        .collect();
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut cells = Vec::new();
    let mut offsets = Vec::new();
    let mut m = lo.clone();
    let mut r = vec![0.0; d];
    'outer: loop {
        let mut s = 0.0;
        for a in 0..d {
            r[a] = m[a] as f64 * h - 0.5 * domain.l - c[a];
            s += r[a] * r[a];
        }
        if s <= r2 {
            cells.push(domain.ravel(&m));
            offsets.extend_from_slice(&r);
        }
        for a in 0..d {
            m[a] += 1;
            if m[a] <= hi[a] {
                continue 'outer;
            }
            m[a] = lo[a];
        }
        break;
    }
    (cells, offsets)
}

/// Cells of the unit ball around `center`.
pub fn ball_cells(domain: &TorusDomain, center: &[f64]) -> Vec<usize> {
    cells_in_ball(domain, center, 1.0).0
}

/// Mean of `field` over the cells of the unit ball at `center`.
pub fn ball_average(field: &SpectralField, center: &[f64]) -> Result<Vec<f64>> {
    let cells = ball_cells(field.domain(), center);
    if cells.len() < 8 {
        return Err(Error::Resolution { h: field.domain().h(), max: MAX_SPACING });
    }
    Ok(average_over(field.values(), &cells))
}

pub(crate) fn average_over(values: &[Vec<f64>], cells: &[usize]) -> Vec<f64> {
    values
        .iter()
        .map(|c| cells.iter().map(|&i| c[i]).sum::<f64>() / cells.len() as f64)
        .collect()
}

/// Leray projection onto fields with `diṽ = 0` (zero mode untouched).
pub fn leray_project(field: &SpectralField) -> SpectralField {
    let dom = *field.domain();
    let d = dom.d;
    assert_eq!(field.components(), d, "Leray projection needs a vector field");
    let grid = WaveGrid::new(&dom);
    let spec = field.spectrum();
    let fft = FftNd::new(dom.n_grid, d);
    let mut out: Vec<Vec<Complex64>> = spec.to_vec();
    let mut k = [0.0; 4];
    for idx in 0..dom.len() {
        grid.divergence_symbol(idx, &mut k);
        let k2: f64 = k[..d].iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            continue;
        }
        let mut kdot = Complex64::default();
        for a in 0..d {
            kdot += spec[a][idx] * k[a];
        }
        for a in 0..d {
            out[a][idx] = spec[a][idx] - kdot * (k[a] / k2);
        }
    }
    let values = out
        .into_iter()
        .map(|mut s| {
            fft.inverse(&mut s);
            real_part(&s)
        })
        .collect();
    SpectralField::new(dom, values).with_flags(true, field.is_mean_zero())
}

/// Spectral gradient of every component; entry `[c][a]` is `∂_a f_c`.
pub fn gradient(field: &SpectralField) -> Vec<Vec<Vec<f64>>> {
    let dom = *field.domain();
    let d = dom.d;
    let grid = WaveGrid::new(&dom);
    let fft = FftNd::new(dom.n_grid, d);
    let spec = field.spectrum();
    spec.iter()
        .map(|s| {
            (0..d)
                .map(|a| {
                    let mut buf: Vec<Complex64> = (0..dom.len())
                        .into_par_iter()
                        .map(|idx| {
                            let mut k = [0.0; 4];
                            grid.wavevector(idx, &mut k);
                            s[idx] * Complex64::new(0.0, k[a])
                        })
                        .collect();
                    fft.inverse(&mut buf);
                    real_part(&buf)
                })
                .collect()
        })
        .collect()
}

/// `∫_{Q_L} |∇f|²` evaluated mode by mode.
pub fn dirichlet_energy(field: &SpectralField) -> f64 {
    let dom = field.domain();
    let grid = WaveGrid::new(dom);
    let spec = field.spectrum();
    let mut k = [0.0; 4];
    let mut total = 0.0;
    for idx in 0..dom.len() {
        grid.wavevector(idx, &mut k);
        let k2: f64 = k[..dom.d].iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            continue;
        }
        total += k2 * spec.iter().map(|s| s[idx].norm_sqr()).sum::<f64>();
    }
    let n = dom.len() as f64;
    total * dom.volume() / (n * n)
}

/// `∫_{Q_L} ∇f:∇g` evaluated mode by mode.
pub fn dirichlet_inner(f: &SpectralField, g: &SpectralField) -> f64 {
    let dom = f.domain();
    assert_eq!(f.components(), g.components(), "fields differ in component count");
    let grid = WaveGrid::new(dom);
    let (sf, sg) = (f.spectrum(), g.spectrum());
    let mut k = [0.0; 4];
    let mut total = 0.0;
    for idx in 0..dom.len() {
        grid.wavevector(idx, &mut k);
        let k2: f64 = k[..dom.d].iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            continue;
        }
        total += k2 * sf.iter().zip(sg).map(|(a, b)| (a[idx] * b[idx].conj()).re).sum::<f64>();
    }
    let n = dom.len() as f64;
    total * dom.volume() / (n * n)
}

/// Ball-averaged periodic Stokeslet `(U_L, P_L)` for the source
/// `(1_B − L^{−d}|B|) e` with `B` the unit ball at the origin.
pub fn averaged_stokeslet(domain: &TorusDomain, e: &[f64]) -> Result<(SpectralField, SpectralField)> {
    let op = StokesOperator::new(domain)?;
    if e.len() != domain.d {
        return Err(Error::Precondition(format!("force has {} components, expected {}", e.len(), domain.d)));
    }
    let origin = vec![0.0; domain.d];
    let cells = ball_cells(domain, &origin);
    let frac = cells.len() as f64 / domain.len() as f64;
    let mut s = vec![-frac; domain.len()];
    for &c in &cells {
        s[c] += 1.0;
    }
    let src: Vec<Vec<f64>> = e.iter().map(|&ea| s.iter().map(|v| v * ea).collect()).collect();
    let (u, p) = op.solve(&src);
    Ok((
        SpectralField::new(*domain, u).with_flags(true, true),
        SpectralField::scalar(*domain, p).with_flags(false, true),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indices_cover_upper_triangle() {
        assert_eq!(packed_index(2, 0, 0), 0);
        assert_eq!(packed_index(2, 1, 0), 1);
        assert_eq!(packed_index(2, 1, 1), 2);
        assert_eq!(packed_index(3, 0, 2), 2);
        assert_eq!(packed_index(3, 1, 1), 3);
        assert_eq!(packed_index(3, 2, 1), 4);
        assert_eq!(packed_index(3, 2, 2), 5);
    }

    #[test]
    fn kernel_convolution_matches_operator() {
        let dom = TorusDomain::new(2, 4.0, 16).unwrap();
        let op = StokesOperator::new(&dom).unwrap();
        let g = op.kernel();
        let mut src = vec![vec![0.0; dom.len()]; 2];
        src[0][37] = 1.0;
        src[1][37] = -0.5;
        src[1][100] = 2.0;
        let u = op.velocity(&src);
        let mut mi = [0usize; 2];
        let mut mj = [0usize; 2];
        for i in [0usize, 5, 37, 200] {
            dom.unravel(i, &mut mi);
            for a in 0..2 {
                let mut acc = 0.0;
                for (j, b, f) in [(37, 0, 1.0), (37, 1, -0.5), (100, 1, 2.0)] {
                    dom.unravel(j, &mut mj);
                    let off = dom.ravel(&[mi[0] as i64 - mj[0] as i64, mi[1] as i64 - mj[1] as i64]);
                    acc += g[packed_index(2, a, b)][off] * f;
                }
                assert!((acc - u[a][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_cells_are_symmetric_about_grid_centers() {
        let dom = TorusDomain::new(2, 8.0, 64).unwrap();
        let (cells, offsets) = cells_in_ball(&dom, &[0.0, 0.0], 1.0);
        let sx: f64 = offsets.chunks(2).map(|r| r[0]).sum();
        assert!(sx.abs() < 1e-12);
        assert!((cells.len() as f64 * dom.cell_volume() - std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn ball_wraps_across_the_boundary() {
        let dom = TorusDomain::new(2, 8.0, 32).unwrap();
        let inside = ball_cells(&dom, &[0.0, 0.0]).len();
        let edge = ball_cells(&dom, &[4.0, -4.0]).len();
        assert_eq!(inside, edge);
    }
}
