//! Multi-dimensional complex FFT on cubic grids, built from 1-D `rustfft`
//! plans applied axis by axis. Axis 0 is the fastest-varying index.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Number of lines gathered at once when transforming a strided axis.
const LINE_BLOCK: usize = 32;

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// `dim`-dimensional FFT over `n^dim` points.
#[derive(Clone)]
pub struct FftNd {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("n", &self.n).field("dim", &self.dim).finish()
    }
}

impl FftNd {
    pub fn new(n: usize, dim: usize) -> Self {
        let (forward, inverse) = plans(n);
        FftNd { n, dim, forward, inverse }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, `X_k = Σ_j x_j e^{-2πi jk/n}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/n^dim` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        let n = self.n;
        // Axis 0 is contiguous: rustfft handles a buffer of back-to-back lines.
        data.par_chunks_mut(n * LINE_BLOCK.max(1)).for_each(|chunk| {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(chunk, &mut scratch);
        });
        for axis in 1..self.dim {
            let inner = n.pow(axis as u32);
            let slab = inner * n;
            data.par_chunks_mut(slab).for_each(|slab_data| {
                transform_strided(slab_data, n, inner, plan);
            });
        }
    }
}

/// Transforms every line of a slab laid out as `[n][inner]` along its
/// leading (strided) index.
fn transform_strided(slab: &mut [Complex64], n: usize, inner: usize, plan: &Arc<dyn Fft<f64>>) {
    let mut buffer = vec![Complex64::default(); n * LINE_BLOCK];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut start = 0;
    while start < inner {
        let width = LINE_BLOCK.min(inner - start);
        for j in 0..n {
            let row = &slab[j * inner + start..j * inner + start + width];
            for (b, value) in row.iter().enumerate() {
                buffer[b * n + j] = *value;
            }
        }
        plan.process_with_scratch(&mut buffer[..width * n], &mut scratch);
        for j in 0..n {
            let row = &mut slab[j * inner + start..j * inner + start + width];
            for (b, value) in row.iter_mut().enumerate() {
                *value = buffer[b * n + j];
            }
        }
        start += width;
    }
}
