use crate::torus::{periodic_distance, TorusDomain};

/// Uniform bucket grid over the torus for neighbor queries.
#[derive(Debug, Clone)]
pub struct CellList<'a> {
    domain: TorusDomain,
    points: &'a [Vec<f64>],
    per_axis: usize,
    size: f64,
    buckets: Vec<Vec<usize>>,
}

impl<'a> CellList<'a> {
    /// Buckets sized near the mean interparticle spacing.
    pub fn new(domain: &TorusDomain, points: &'a [Vec<f64>]) -> Self {
        let n = points.len().max(1) as f64;
        let spacing = domain.l / n.powf(1.0 / domain.d as f64);
        Self::with_cell_size(domain, points, spacing)
    }

    pub fn with_cell_size(domain: &TorusDomain, points: &'a [Vec<f64>], min_size: f64) -> Self {
        let per_axis = ((domain.l / min_size).floor() as usize).clamp(1, 64);
        let size = domain.l / per_axis as f64;
        let mut buckets = vec![Vec::new(); per_axis.pow(domain.d as u32)];
        for (i, p) in points.iter().enumerate() {
            buckets[bucket_of(domain, per_axis, size, p)].push(i);
        }
        CellList { domain: *domain, points, per_axis, size, buckets }
    }

    pub fn cell_size(&self) -> f64 {
        self.size
    }

    /// Indices of points within `radius` of `x` (`radius ≤ cell_size` when the
    /// grid has at least three buckets per axis; otherwise all points are scanned).
    pub fn neighbors(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_candidate(x, |j| {
            if periodic_distance(x, &self.points[j], &self.domain) <= radius {
                out.push(j);
            }
        });
        out
    }

    fn for_each_candidate(&self, x: &[f64], mut f: impl FnMut(usize)) {
        if self.per_axis < 3 {
            (0..self.points.len()).for_each(f);
            return;
        }
        let d = self.domain.d;
        let home = axis_indices(&self.domain, self.per_axis, self.size, x);
        let mut offs = vec![-1i64; d];
        loop {
            let mut lin = 0usize;
            for a in (0..d).rev() {
                let c = (home[a] as i64 + offs[a]).rem_euclid(self.per_axis as i64) as usize;
                lin = lin * self.per_axis + c;
            }
            for &j in &self.buckets[lin] {
                f(j);
            }
            let mut a = 0;
            loop {
                if a == d {
                    return;
                }
                offs[a] += 1;
                if offs[a] <= 1 {
                    break;
                }
                offs[a] = -1;
                a += 1;
            }
        }
    }

    /// Pair with the smallest periodic distance, identical to a brute-force scan.
    pub fn closest_pair(&self) -> Option<(usize, usize)> {
        let n = self.points.len();
        if n < 2 {
            return None;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        if self.per_axis >= 3 {
            for i in 0..n {
                self.for_each_candidate(&self.points[i], |j| {
                    if j > i {
                        let r = periodic_distance(&self.points[i], &self.points[j], &self.domain);
                        if best.is_none_or(|(b, _, _)| r < b) {
                            best = Some((r, i, j));
                        }
                    }
                });
            }
        }
        match best {
            // Any pair closer than one bucket lies in adjacent buckets.
            Some((r, i, j)) if r <= self.size => Some((i, j)),
            _ => brute_closest(&self.domain, self.points),
        }
    }
}

fn brute_closest(domain: &TorusDomain, points: &[Vec<f64>]) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let r = periodic_distance(&points[i], &points[j], domain);
            if best.is_none_or(|(b, _, _)| r < b) {
                best = Some((r, i, j));
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

fn axis_indices(domain: &TorusDomain, per_axis: usize, size: f64, x: &[f64]) -> Vec<usize> {
    x.iter()
        .map(|&v| {
            let u = ((domain.wrap(v) + 0.5 * domain.l) / size).floor() as i64;
            u.rem_euclid(per_axis as i64) as usize
        })
        .collect()
}

fn bucket_of(domain: &TorusDomain, per_axis: usize, size: f64, x: &[f64]) -> usize {
    axis_indices(domain, per_axis, size, x)
        .iter()
        .rev()
        .fold(0, |acc, &c| acc * per_axis + c)
}

/// Growable bucket grid used by sequential samplers.
#[derive(Debug, Clone)]
pub(crate) struct DynamicCells {
    domain: TorusDomain,
    per_axis: usize,
    size: f64,
    buckets: Vec<Vec<usize>>,
    pub(crate) points: Vec<Vec<f64>>,
}

impl DynamicCells {
    pub(crate) fn new(domain: &TorusDomain, min_size: f64) -> Self {
        let per_axis = ((domain.l / min_size.max(1e-9)).floor() as usize).clamp(1, 256);
        let per_axis = if (per_axis as u64).pow(domain.d as u32) > 1 << 24 { 64 } else { per_axis };
        let size = domain.l / per_axis as f64;
        DynamicCells {
            domain: *domain,
            per_axis,
            size,
            buckets: vec![Vec::new(); per_axis.pow(domain.d as u32)],
            points: Vec::new(),
        }
    }

    pub(crate) fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub(crate) fn wrap(&self, x: &[f64]) -> Vec<f64> {
        self.domain.wrap_point(x)
    }

    pub(crate) fn insert(&mut self, x: Vec<f64>) {
        let b = bucket_of(&self.domain, self.per_axis, self.size, &x);
        self.buckets[b].push(self.points.len());
        self.points.push(x);
    }

    /// True if some stored point lies strictly closer than `radius` (`radius ≤ cell size`).
    pub(crate) fn conflicts(&self, x: &[f64], radius: f64) -> bool {
        if radius <= 0.0 {
            return false;
        }
        if self.per_axis < 3 {
            return self.points.iter().any(|p| periodic_distance(x, p, &self.domain) < radius);
        }
        let d = self.domain.d;
        let home = axis_indices(&self.domain, self.per_axis, self.size, x);
        let mut offs = vec![-1i64; d];
        loop {
            let mut lin = 0usize;
            for a in (0..d).rev() {
                let c = (home[a] as i64 + offs[a]).rem_euclid(self.per_axis as i64) as usize;
                lin = lin * self.per_axis + c;
            }
            for &j in &self.buckets[lin] {
                if periodic_distance(x, &self.points[j], &self.domain) < radius {
                    return true;
                }
            }
            let mut a = 0;
            loop {
                if a == d {
                    return false;
                }
                offs[a] += 1;
                if offs[a] <= 1 {
                    break;
                }
                offs[a] = -1;
                a += 1;
            }
        }
    }
}
