use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::cell_list::DynamicCells;
use super::samplers::uniform_in_ball;
use super::ParticleConfiguration;
use crate::error::{Error, Result};
use crate::rng;
use crate::torus::{periodic_distance, unit_ball_volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Same number of points inside the ball, new positions.
    Move,
    /// Count redrawn from Poisson(ρ|B_ℓ|), rejected until placeable.
    Oscillate,
}

const PLACEMENT_TRIES: usize = 200;
const ROUNDS: usize = 200;

/// Redraws the points of `config` inside `B_ell(center)`, keeping every
/// point outside bit-for-bit.
pub fn resample_in_ball(
    config: &ParticleConfiguration,
    center: &[f64],
    ell: f64,
    mode: ResampleMode,
    seed: u64,
) -> Result<ParticleConfiguration> {
    let dom = config.domain;
    if !(ell > 0.0 && ell <= 0.5 * dom.l) {
        return Err(Error::Precondition(format!("radius {ell} must lie in (0, L/2]")));
    }
    let mut rng = rng::stream(seed, 0, rng::stage::RESAMPLE);
    let (inside, outside): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) =
        config.centers.iter().partition(|x| periodic_distance(x, center, &dom) < ell);
    if mode == ResampleMode::Move && inside.is_empty() {
        return Ok(config.clone());
    }
    let dist = config.hardcore_distance();
    let mut base = DynamicCells::new(&dom, dist.max(ell.min(0.25 * dom.l)));
    for x in &outside {
        base.insert((*x).clone());
    }
    let mean = config.intensity() * unit_ball_volume(dom.d) * ell.powi(dom.d as i32);
    for _ in 0..ROUNDS {
        let count = match mode {
            ResampleMode::Move => inside.len(),
            ResampleMode::Oscillate if mean > 0.0 => Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize,
            ResampleMode::Oscillate => 0,
        };
        if let Some(new_points) = place(&base, center, ell, count, dist, &mut rng) {
            let mut centers: Vec<Vec<f64>> = config
                .centers
                .iter()
                .filter(|x| periodic_distance(x, center, &dom) >= ell)
                .cloned()
                .collect();
            centers.extend(new_points);
            return Ok(ParticleConfiguration { centers, ..config.clone() });
        }
    }
    Err(Error::Rejection(ROUNDS * PLACEMENT_TRIES))
}

fn place<R: Rng + ?Sized>(
    base: &DynamicCells,
    center: &[f64],
    ell: f64,
    count: usize,
    dist: f64,
    rng: &mut R,
) -> Option<Vec<Vec<f64>>> {
    let dom_d = center.len();
    let mut cells = base.clone();
    let mut placed = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ok = false;
        for _ in 0..PLACEMENT_TRIES {
            let u = uniform_in_ball(dom_d, ell, rng);
            let x: Vec<f64> = center.iter().zip(&u).map(|(c, v)| c + v).collect();
            let x = cells.wrap(&x);
            if periodic_distance(&x, center, cells.domain()) < ell && !cells.conflicts(&x, dist) {
                cells.insert(x.clone());
                placed.push(x);
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::{sample_matern_hardcore, min_pairwise_distance};
    use crate::torus::TorusDomain;

    #[test]
    fn empty_ball_is_untouched_under_move() {
        let dom = TorusDomain::new(2, 20.0, 80).unwrap();
        let c = ParticleConfiguration::new(dom, 0.1, vec![vec![5.0, 5.0]]);
        let out = resample_in_ball(&c, &[-5.0, -5.0], 2.0, ResampleMode::Move, 3).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn move_keeps_outside_and_count() {
        let dom = TorusDomain::new(2, 30.0, 120).unwrap();
        let c = sample_matern_hardcore(&dom, 0.08, 0.1, 4).unwrap();
        let center = [1.0, -2.0];
        for seed in 0..10 {
            let out = resample_in_ball(&c, &center, 6.0, ResampleMode::Move, seed).unwrap();
            assert_eq!(out.len(), c.len());
            let outside = |cfg: &ParticleConfiguration| {
                cfg.centers.iter().filter(|x| periodic_distance(x, &center, &dom) >= 6.0).cloned().collect::<Vec<_>>()
            };
            assert_eq!(outside(&out), outside(&c));
            assert!(min_pairwise_distance(&out).unwrap() >= 2.2);
        }
    }

    #[test]
    fn oscillate_changes_count_sometimes() {
        let dom = TorusDomain::new(2, 30.0, 120).unwrap();
        let c = sample_matern_hardcore(&dom, 0.05, 0.1, 8).unwrap();
        let counts: Vec<usize> = (0..20)
            .map(|s| resample_in_ball(&c, &[0.0, 0.0], 5.0, ResampleMode::Oscillate, s).unwrap().len())
            .collect();
        assert!(counts.iter().any(|&n| n != counts[0]));
    }
}
