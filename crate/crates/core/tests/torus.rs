mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sediment_core::torus::export::{read_field, write_field};
use sediment_core::torus::{
    averaged_stokeslet, ball_average, ball_cells, laplace_green, leray_project, StokesOperator,
};
use sediment_core::{periodic_distance, SpectralField, TorusDomain};

fn random_field(dom: TorusDomain, components: usize, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..components).map(|_| (0..dom.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    SpectralField::new(dom, values)
}

fn norm(f: &SpectralField) -> f64 {
    f.l2_norm()
}

/// Central difference along `axis` on the periodic grid.
fn central_difference(dom: &TorusDomain, q: &[f64], axis: usize) -> Vec<f64> {
    let n = dom.n_grid;
    let stride = n.pow(axis as u32);
    (0..dom.len())
        .map(|idx| {
            let i = (idx / stride) % n;
            let up = idx - i * stride + ((i + 1) % n) * stride;
            let dn = idx - i * stride + ((i + n - 1) % n) * stride;
            (q[up] - q[dn]) / (2.0 * dom.h())
        })
        .collect()
}

#[test]
fn periodic_distance_examples() {
    let line = TorusDomain::new(1, 10.0, 40).unwrap();
    assert_eq!(periodic_distance(&[1.3], &[1.3], &line), 0.0);
    assert!((periodic_distance(&[4.9], &[-4.9], &line) - 0.2).abs() < 1e-12);
    let plane = TorusDomain::new(2, 8.0, 32).unwrap();
    let r = periodic_distance(&[3.0, 3.0], &[-3.0, -3.0], &plane);
    assert!((r - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!((r - common::image_distance(&[3.0, 3.0], &[-3.0, -3.0], 8.0)).abs() < 1e-12);
}

fn point(d: usize, l: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5 * l..0.5 * l, d)
}

proptest! {
    #[test]
    fn periodic_distance_is_a_bounded_symmetric_metric(
        d in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let l = 7.0;
        let dom = TorusDomain::new(d, l, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = || (0..d).map(|_| rng.random_range(-3.0 * l..3.0 * l)).collect::<Vec<f64>>();
        let (x, y, z) = (p(), p(), p());
        let xy = periodic_distance(&x, &y, &dom);
        prop_assert!((xy - periodic_distance(&y, &x, &dom)).abs() <= 1e-12);
        prop_assert!(xy <= 0.5 * l * (d as f64).sqrt() + 1e-12);
        prop_assert!(xy <= periodic_distance(&x, &z, &dom) + periodic_distance(&z, &y, &dom) + 1e-12);
        prop_assert!((xy - common::image_distance(&x, &y, l)).abs() <= 1e-9);
    }

    #[test]
    fn distance_is_invariant_under_lattice_shifts(x in point(3, 9.0), y in point(3, 9.0), k in -3i32..=3) {
        let dom = TorusDomain::new(3, 9.0, 36).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + 9.0 * k as f64).collect();
        prop_assert!((periodic_distance(&x, &y, &dom) - periodic_distance(&shifted, &y, &dom)).abs() <= 1e-9);
    }
}

#[test]
fn domain_rejects_bad_grids() {
    assert!(TorusDomain::new(5, 8.0, 32).is_err());
    assert!(TorusDomain::new(2, 8.0, 33).is_err());
    assert!(TorusDomain::new(2, 0.5, 32).is_err());
    let coarse = TorusDomain::new(2, 8.0, 16).unwrap();
    assert!(coarse.check_resolution().is_err());
    assert!(laplace_green(&coarse, &[0.0, 0.0]).is_err());
    assert!(averaged_stokeslet(&coarse, &[0.0, 1.0]).is_err());
}

#[test]
fn laplace_green_is_mean_zero_and_even() {
    let dom = TorusDomain::new(2, 8.0, 32).unwrap();
    let g = laplace_green(&dom, &[0.0, 0.0]).unwrap();
    let vals = g.component(0);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(vals.iter().sum::<f64>().abs() / vals.len() as f64 <= 1e-12 * scale);
    let n = dom.n_grid;
    // Grid index n/2 is the origin, so x ↦ −x sends i to (n − i) mod n.
    for j in 0..n {
        for i in 0..n {
            let a = vals[i + n * j];
            let b = vals[(n - i) % n + n * ((n - j) % n)];
            assert!((a - b).abs() <= 1e-10 * scale, "{i} {j}");
        }
    }
}

#[test]
fn laplace_green_matches_free_space_kernel_in_three_dimensions() {
    let l = 32.0;
    let dom = TorusDomain::new(3, l, 128).unwrap();
    let g = laplace_green(&dom, &[0.0, 0.0, 0.0]).unwrap();
    // Mean-zero cubic-lattice expansion: 1/(4πr) − 2.837297/(4πL) + r²/(6L³).
    let madelung = -2.837_297_479_480_62 / (4.0 * PI * l);
    let mut worst = 0.0f64;
    for idx in 0..dom.len() {
        let x = common::grid_point(&dom, idx);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(2.0..=6.0).contains(&r) {
            continue;
        }
        let free = 1.0 / (4.0 * PI * r);
        let want = free + madelung + r * r / (6.0 * l * l * l);
        worst = worst.max((g.component(0)[idx] - want).abs() / free);
    }
    assert!(worst <= 0.1, "worst relative deviation {worst}");
}

#[test]
fn stokeslet_is_divergence_free_and_aligned_with_the_force() {
    let dom = TorusDomain::new(3, 8.0, 32).unwrap();
    let (u, p) = averaged_stokeslet(&dom, &[0.0, 0.0, 1.0]).unwrap();
    assert!(u.divergence_residual() <= 1e-12);
    assert!(u.mean_residual() <= 1e-12);
    assert_eq!(p.components(), 1);
    let origin = dom.ravel(&[16, 16, 16]);
    let v = u.at(origin);
    assert!(v[2] > 0.0);
    assert!(v[0].abs() <= 1e-12 * v[2] && v[1].abs() <= 1e-12 * v[2], "{v:?}");
    assert!(averaged_stokeslet(&TorusDomain::new(1, 8.0, 32).unwrap(), &[1.0]).is_err());
}

#[test]
fn stokeslet_envelope_decays_like_inverse_distance() {
    let dom = TorusDomain::new(3, 32.0, 128).unwrap();
    let (u, _) = averaged_stokeslet(&dom, &[0.0, 0.0, 1.0]).unwrap();
    let h = dom.h();
    // Uniform periodic backflow of a cubic array, −2.837297 F/(6πL) with F = |B|·e.
    let force = sediment_core::torus::unit_ball_volume(3);
    let background = -2.837_297_479_480_62 * force / (6.0 * PI * dom.l);
    let radii: Vec<f64> = (0..7).map(|i| 2.0 + i as f64).collect();
    let mut env = vec![0.0f64; radii.len()];
    for idx in 0..dom.len() {
        let x = common::grid_point(&dom, idx);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (k, rk) in radii.iter().enumerate() {
            if (r - rk).abs() <= 0.5 * h {
                let mut v = u.at(idx);
                v[2] -= background;
                let m = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                env[k] = env[k].max(m);
            }
        }
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = env.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let slope = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() <= 0.2, "slope {slope}, envelope {env:?}");
}

#[test]
fn ball_average_examples() {
    let dom = TorusDomain::new(2, 8.0, 32).unwrap();
    let c = SpectralField::from_fn(dom, 2, |_| vec![1.5, -0.25]);
    let avg = ball_average(&c, &[0.7, -1.1]).unwrap();
    assert!((avg[0] - 1.5).abs() < 1e-14 && (avg[1] + 0.25).abs() < 1e-14);

    let lin = SpectralField::from_fn(dom, 1, |x| vec![0.3 * x[0] - 1.2 * x[1]]);
    assert!(ball_average(&lin, &[0.0, 0.0]).unwrap()[0].abs() <= 1e-12);

    let (u, _) = averaged_stokeslet(&dom, &[0.0, -1.0]).unwrap();
    let mut sum = [0.0; 2];
    let mut count = 0usize;
    for idx in 0..dom.len() {
        let x = common::grid_point(&dom, idx);
        if x.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            sum[0] += u.component(0)[idx];
            sum[1] += u.component(1)[idx];
            count += 1;
        }
    }
    let avg = ball_average(&u, &[0.0, 0.0]).unwrap();
    assert_eq!(ball_cells(&dom, &[0.0, 0.0]).len(), count);
    assert_eq!(avg[0], sum[0] / count as f64);
    assert_eq!(avg[1], sum[1] / count as f64);

    let coarse = TorusDomain::new(2, 8.0, 8).unwrap();
    let f = SpectralField::from_fn(coarse, 1, |_| vec![1.0]);
    assert!(ball_average(&f, &[0.1, 0.1]).is_err());
}

#[test]
fn ball_average_of_the_stokeslet_converges_under_refinement() {
    let x0 = [2.3, -1.7];
    let vals: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let dom = TorusDomain::new(2, 8.0, n).unwrap();
            let (u, _) = averaged_stokeslet(&dom, &[0.0, -1.0]).unwrap();
            ball_average(&u, &x0).unwrap()[1]
        })
        .collect();
    let order = ((vals[0] - vals[1]).abs() / (vals[1] - vals[2]).abs()).log2();
    assert!(order >= 1.0, "empirical order {order}, values {vals:?}");
}

#[test]
fn leray_projection_is_idempotent_and_self_adjoint() {
    for (d, n) in [(2, 32), (3, 16)] {
        let dom = TorusDomain::new(d, 4.0, n).unwrap();
        let f = random_field(dom, d, 1);
        let g = random_field(dom, d, 2);
        let pf = leray_project(&f);
        let ppf = leray_project(&pf);
        assert!(norm(&ppf.sub(&pf)) <= 1e-12 * norm(&f));
        assert!(pf.divergence_residual() <= 1e-12);
        let pg = leray_project(&g);
        let lhs = pf.dot(&g);
        let rhs = f.dot(&pg);
        assert!((lhs - rhs).abs() <= 1e-10 * norm(&f) * norm(&g), "{lhs} vs {rhs}");
    }
}

#[test]
fn leray_projection_removes_discrete_gradients() {
    let dom = TorusDomain::new(3, 4.0, 16).unwrap();
    let q = random_field(dom, 1, 3);
    let grad: Vec<Vec<f64>> = (0..3).map(|a| central_difference(&dom, q.component(0), a)).collect();
    let field = SpectralField::new(dom, grad);
    let p = leray_project(&field);
    assert!(norm(&p) <= 1e-12 * norm(&field), "{}", norm(&p) / norm(&field));
}

#[test]
fn stokes_solve_satisfies_the_strong_form_mode_by_mode() {
    let dom = TorusDomain::new(2, 6.0, 24).unwrap();
    let op = StokesOperator::new(&dom).unwrap();
    let mut src = random_field(dom, 2, 4).into_values();
    for c in &mut src {
        let m = c.iter().sum::<f64>() / c.len() as f64;
        c.iter_mut().for_each(|v| *v -= m);
    }
    let (u, p) = op.solve(&src);
    let s_hat: Vec<_> = src.iter().map(|c| op.forward(c)).collect();
    let u_hat: Vec<_> = u.iter().map(|c| op.forward(c)).collect();
    let p_hat = op.forward(&p);
    let n = dom.n_grid;
    let h = dom.h();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..dom.len() {
        let m: Vec<i64> = [idx % n, idx / n]
            .iter()
            .map(|&j| if j <= n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        scale = scale.max(s_hat[0][idx].norm().max(s_hat[1][idx].norm()));
        if m.iter().any(|&v| v == n as i64 / 2) || m.iter().all(|&v| v == 0) {
            continue;
        }
        let k: Vec<f64> = m.iter().map(|&v| 2.0 * PI * v as f64 / dom.l).collect();
        let k2: f64 = k.iter().map(|v| v * v).sum();
        for a in 0..2 {
            let kt = (k[a] * h).sin() / h;
            // |k|² û + i k̃ Π̂ − ŝ
            let re = u_hat[a][idx].re * k2 - p_hat[idx].im * kt - s_hat[a][idx].re;
            let im = u_hat[a][idx].im * k2 + p_hat[idx].re * kt - s_hat[a][idx].im;
            worst = worst.max(re.hypot(im));
        }
    }
    assert!(worst <= 1e-10 * scale, "{}", worst / scale);
}

#[test]
fn field_export_round_trips() {
    let dom = TorusDomain::new(2, 4.0, 16).unwrap();
    let f = random_field(dom, 2, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.raw");
    write_field(&f, &path).unwrap();
    let g = read_field(&path).unwrap();
    assert_eq!(f.values(), g.values());
    assert_eq!(g.domain(), &dom);
}
