//! Volume of `B_r ∩ [−L/2, L/2]^d`, the torus-restricted ball.

use std::f64::consts::PI;

use crate::special::{gauss_legendre, integrate};
use crate::torus::unit_ball_volume;

const NODES: usize = 24;

/// `|{x ∈ Q_L : |x| < r}|` for the centred cube.
pub fn torus_ball_volume(d: usize, l: f64, r: f64) -> f64 {
    let a = 0.5 * l;
    if r <= 0.0 {
        return 0.0;
    }
    if r <= a {
        return unit_ball_volume(d) * r.powi(d as i32);
    }
    if r * r >= d as f64 * a * a {
        return l.powi(d as i32);
    }
    match d {
        1 => l,
        2 => disc_in_square(a, r),
        _ => {
            let rule = gauss_legendre(NODES);
            sliced(d, a, r, &rule)
        }
    }
}

fn disc_in_square(a: f64, r: f64) -> f64 {
    if r <= a {
        PI * r * r
    } else if r * r >= 2.0 * a * a {
        4.0 * a * a
    } else {
        let segment = r * r * (a / r).acos() - a * (r * r - a * a).sqrt();
        PI * r * r - 4.0 * segment
    }
}

/// Slices orthogonal to the last axis, parametrized as `t = r sin θ` so the
/// integrand stays smooth at `|t| = r`; breakpoints where the slice radius
/// crosses `a√j` make each piece smooth.
fn sliced(d: usize, a: f64, r: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    if d == 2 {
        return disc_in_square(a, r);
    }
    if r <= a {
        return unit_ball_volume(d) * r.powi(d as i32);
    }
    if r * r >= d as f64 * a * a {
        return (2.0 * a).powi(d as i32);
    }
    let theta_max = if r > a { (a / r).asin() } else { 0.5 * PI };
    let mut breaks = vec![0.0, theta_max];
    for j in 1..d {
        let s = a * (j as f64).sqrt();
        if s < r {
            let th = (s / r).acos();
            if th > 0.0 && th < theta_max {
                breaks.push(th);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    let f = |th: f64| {
        let rho = r * th.cos();
        sliced(d - 1, a, rho, rule) * r * th.cos()
    };
    let half: f64 = breaks.windows(2).map(|w| integrate(f, w[0], w[1], rule)).sum();
    2.0 * half
}
