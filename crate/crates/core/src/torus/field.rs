use std::sync::OnceLock;

use rustfft::num_complex::Complex64;

use super::fft::FftNd;
use super::TorusDomain;

/// Scalar or vector grid field. Values are immutable once built; the
/// spectrum is computed lazily on first request.
#[derive(Debug)]
pub struct SpectralField {
    domain: TorusDomain,
    values: Vec<Vec<f64>>,
    divergence_free: bool,
    mean_zero: bool,
    spectrum: OnceLock<Vec<Vec<Complex64>>>,
}

impl Clone for SpectralField {
    fn clone(&self) -> Self {
        SpectralField {
            domain: self.domain,
            values: self.values.clone(),
            divergence_free: self.divergence_free,
            mean_zero: self.mean_zero,
            spectrum: OnceLock::new(),
        }
    }
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.values == other.values
    }
}

impl SpectralField {
    pub fn new(domain: TorusDomain, values: Vec<Vec<f64>>) -> Self {
        assert!(!values.is_empty(), "field needs at least one component");
        for v in &values {
            assert_eq!(v.len(), domain.len(), "component length does not match grid");
        }
        SpectralField {
            domain,
            values,
            divergence_free: false,
            mean_zero: false,
            spectrum: OnceLock::new(),
        }
    }

    pub fn scalar(domain: TorusDomain, values: Vec<f64>) -> Self {
        Self::new(domain, vec![values])
    }

    pub fn zeros(domain: TorusDomain, components: usize) -> Self {
        Self::new(domain, vec![vec![0.0; domain.len()]; components])
    }

    pub fn from_fn(domain: TorusDomain, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut values = vec![vec![0.0; domain.len()]; components];
        for idx in 0..domain.len() {
            let x = domain.grid_point(idx);
            let v = f(&x);
            for (c, comp) in values.iter_mut().enumerate() {
                comp[idx] = v[c];
            }
        }
        Self::new(domain, values)
    }

    pub(crate) fn with_flags(mut self, divergence_free: bool, mean_zero: bool) -> Self {
        self.divergence_free = divergence_free;
        self.mean_zero = mean_zero;
        self
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn components(&self) -> usize {
        self.values.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Vec<f64>> {
        self.values
    }

    pub fn at(&self, idx: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[idx]).collect()
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean_zero
    }

    /// Unnormalized DFT of each component.
    pub fn spectrum(&self) -> &[Vec<Complex64>] {
        self.spectrum.get_or_init(|| {
            let fft = FftNd::new(self.domain.n_grid, self.domain.d);
            self.values
                .iter()
                .map(|comp| {
                    let mut buf: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                    fft.forward(&mut buf);
                    buf
                })
                .collect()
        })
    }

    /// Periodic multilinear interpolation at an arbitrary point.
    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let dom = &self.domain;
        let d = dom.d;
        let n = dom.n_grid as i64;
        let h = dom.h();
        let mut base = [0i64; 4];
        let mut frac = [0.0; 4];
        for a in 0..d {
            let u = (dom.wrap(x[a]) + 0.5 * dom.l) / h;
            let f = u.floor();
            base[a] = f as i64;
            frac[a] = u - f;
        }
        let mut out = vec![0.0; self.components()];
        let mut corner = [0i64; 4];
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                let bit = ((mask >> a) & 1) as i64;
                corner[a] = (base[a] + bit).rem_euclid(n);
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let idx = dom.ravel(&corner[..d]);
            for (o, comp) in out.iter_mut().zip(&self.values) {
                *o += w * comp[idx];
            }
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    /// Root mean square of the pointwise Euclidean norm.
    pub fn rms(&self) -> f64 {
        (self.dot(self) / self.domain.volume()).sqrt()
    }

    /// Grid quadrature of `∫ f·g`.
    pub fn dot(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.components(), other.components());
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        s * self.domain.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Relative L² distance `‖self − other‖/‖other‖`.
    pub fn relative_distance(&self, other: &SpectralField) -> f64 {
        let diff = self.sub(other);
        let denom = other.l2_norm();
        if denom == 0.0 {
            diff.l2_norm()
        } else {
            diff.l2_norm() / denom
        }
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        let values = self.values.iter().map(|c| c.iter().map(|v| v * s).collect()).collect();
        SpectralField::new(self.domain, values).with_flags(self.divergence_free, self.mean_zero)
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &SpectralField, f: impl Fn(f64, f64) -> f64) -> SpectralField {
        assert_eq!(self.components(), other.components());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        SpectralField::new(self.domain, values).with_flags(
            self.divergence_free && other.divergence_free,
            self.mean_zero && other.mean_zero,
        )
    }

    /// Largest `|k̃·û(k)|` relative to the largest `|k̃||û(k)|` over all modes,
    /// with `k̃` the central-difference symbol.
    pub fn divergence_residual(&self) -> f64 {
        let d = self.domain.d;
        assert_eq!(self.components(), d, "divergence needs a vector field");
        let grid = super::WaveGrid::new(&self.domain);
        let spec = self.spectrum();
        let mut k = [0.0; 4];
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for idx in 0..self.domain.len() {
            grid.divergence_symbol(idx, &mut k);
            let mut dot = Complex64::default();
            let mut norm2 = 0.0;
            for a in 0..d {
                dot += spec[a][idx] * k[a];
                norm2 += spec[a][idx].norm_sqr();
            }
            let kk: f64 = k[..d].iter().map(|v| v * v).sum();
            num = num.max(dot.norm());
            den = den.max((kk * norm2).sqrt());
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Zero-mode magnitude relative to the field RMS.
    pub fn mean_residual(&self) -> f64 {
        let m: f64 = self.mean().iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = self.rms();
        if r == 0.0 {
            0.0
        } else {
            m / r
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_of_constant_is_a_single_mode() {
        let dom = TorusDomain::new(2, 4.0, 8).unwrap();
        let f = SpectralField::scalar(dom, vec![2.0; dom.len()]);
        let s = f.spectrum();
        assert!((s[0][0].re - 2.0 * 64.0).abs() < 1e-12);
        assert!(s[0][1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dot_is_grid_quadrature() {
        let dom = TorusDomain::new(1, 2.0, 4).unwrap();
        let f = SpectralField::scalar(dom, vec![1.0, 2.0, 3.0, 4.0]);
        assert!((f.dot(&f) - 30.0 * 0.5).abs() < 1e-14);
    }
}
