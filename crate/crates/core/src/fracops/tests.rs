use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::*;
use crate::grid::{build_grid, l2_inner, DomainSpec};

fn unit(n: usize) -> Arc<Grid> {
    build_grid(DomainSpec::interval(0.0, 1.0, n)).unwrap()
}

fn bump(g: &Arc<Grid>) -> Field {
    Field::from_fn(g, |x| (-40.0 * (x[0] - 0.5f64).powi(2)).exp()).unwrap()
}

fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
    Field::from_values(
        g,
        (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn laplacian_constant_at_half_order_is_one_over_pi() {
    let (_, c) = normalizing_constants(1, 0.5).unwrap();
    assert!((c - 1.0 / PI).abs() < 1e-14);
}

#[test]
fn constants_positive_and_finite() {
    for d in [1, 2] {
        for s in [0.1, 0.5, 0.9, 0.999] {
            let (mu, c) = normalizing_constants(d, s).unwrap();
            assert!(
                mu.is_finite() && mu > 0.0 && c.is_finite() && c > 0.0,
                "d={d} s={s}"
            );
        }
    }
    assert!(normalizing_constants(1, 1.0).is_err());
    assert!(normalizing_constants(3, 0.5).is_err());
}

#[test]
fn zero_field_maps_to_zero() {
    let g = unit(32);
    let q = QuadratureParams::default();
    let grad = assemble_gradient(&g, 0.4, q).unwrap();
    let lap = assemble_laplacian(&g, 0.4, q).unwrap();
    let z = Field::zeros(&g);
    assert!(apply_gradient(&grad, &z)
        .unwrap()
        .component(0)
        .iter()
        .all(|v| *v == 0.0));
    assert!(apply_laplacian(&lap, &z)
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));
    assert_eq!(composition_residual(&grad, &lap, &z).unwrap(), 0.0);
}

#[test]
fn gradient_is_linear() {
    let g = unit(64);
    let grad = assemble_gradient(&g, 0.5, QuadratureParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (u1, u2) = (random_field(&g, &mut rng), random_field(&g, &mut rng));
    let alpha = 0.37;
    let lhs = apply_gradient(&grad, &u1.axpy(alpha, &u2)).unwrap();
    let a = apply_gradient(&grad, &u1).unwrap();
    let b = apply_gradient(&grad, &u2).unwrap();
    for i in 0..g.len() {
        let rhs = a.component(0)[i] + alpha * b.component(0)[i];
        assert!((lhs.component(0)[i] - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }
}

#[test]
fn symmetric_bump_has_zero_centre_gradient() {
    let g = unit(65);
    let grad = assemble_gradient(&g, 0.5, QuadratureParams::default()).unwrap();
    let v = apply_gradient(&grad, &bump(&g)).unwrap();
    assert!(v.component(0)[32].abs() <= 1e-10);
    assert!(v.component(0)[20] > 0.0 && v.component(0)[44] < 0.0);
}

#[test]
fn laplacian_symmetric_positive_definite() {
    let g = unit(64);
    for s in [0.3, 0.5, 0.7] {
        let lap = assemble_laplacian(&g, s, QuadratureParams::default()).unwrap();
        let a = &lap.tables()[0];
        assert!((a - a.transpose()).amax() <= 1e-12 * a.amax());
        let eig = a.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.min();
        assert!(lmin > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let u = random_field(&g, &mut rng);
            let q = laplacian_form(&lap, &u).unwrap();
            assert!(q >= lmin * l2_inner(&u, &u).unwrap() * (1.0 - 1e-12));
        }
    }
}

#[test]
fn duality_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for dims in [vec![64], vec![12, 9]] {
        let g = if dims.len() == 1 {
            unit(dims[0])
        } else {
            build_grid(DomainSpec::rectangle(
                (0.0, 1.0),
                (0.0, 0.8),
                dims[0],
                dims[1],
            ))
            .unwrap()
        };
        let grad = assemble_gradient(&g, 0.6, QuadratureParams::default()).unwrap();
        for _ in 0..20 {
            let u = random_field(&g, &mut rng);
            let comps = (0..g.dim())
                .map(|_| random_field(&g, &mut rng).into_values())
                .collect();
            let phi = VectorField::from_components(&g, comps).unwrap();
            let lhs = l2_inner(&u, &apply_divergence(&grad, &phi).unwrap()).unwrap();
            let rhs = -phi.l2_inner(&apply_gradient(&grad, &u).unwrap()).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }
}

/// `∇ˢu` of the full Gaussian through its Fourier symbol `iξ|ξ|^{s-1}` on a
/// periodic box of width 16 with 2¹⁴ modes.
fn fourier_gradient(s: f64, nodes: &[f64]) -> Vec<f64> {
    let (m, width) = (1usize << 14, 16.0);
    let dx = width / m as f64;
    let x0 = -7.5;
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|k| Complex::new((-40.0 * (x0 + k as f64 * dx - 0.5f64).powi(2)).exp(), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let j = if k <= m / 2 {
            k as f64
        } else {
            k as f64 - m as f64
        };
        let xi = 2.0 * PI * j / width;
        let symbol = if xi == 0.0 {
            Complex::new(0.0, 0.0)
        } else {
            Complex::new(0.0, xi * xi.abs().powf(s - 1.0))
        };
        *v *= symbol / m as f64;
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    nodes
        .iter()
        .map(|x| buf[((x - x0) / dx).round() as usize].re)
        .collect()
}

#[test]
fn gradient_matches_fourier_multiplier() {
    let g = unit(256);
    let grad = assemble_gradient(&g, 0.5, QuadratureParams::default()).unwrap();
    let v = apply_gradient(&grad, &bump(&g)).unwrap();
    let oracle = fourier_gradient(0.5, g.axis(0));
    let (mut num, mut den) = (0.0, 0.0);
    for i in 64..192 {
        num += (v.component(0)[i] - oracle[i]).powi(2);
        den += oracle[i].powi(2);
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 0.03, "relative L² error {rel}");
}

#[test]
fn composition_small_and_decreasing() {
    let q = QuadratureParams::default();
    for s in [0.3, 0.5, 0.7] {
        let mut last = f64::INFINITY;
        for n in [64, 128, 256] {
            let g = unit(n);
            let grad = assemble_gradient(&g, s, q).unwrap();
            let lap = assemble_laplacian(&g, s, q).unwrap();
            let r = composition_residual(&grad, &lap, &bump(&g)).unwrap();
            assert!(r < last, "s={s} n={n}: {r} after {last}");
            last = r;
        }
        assert!(last <= 0.05, "s={s}: {last}");
    }
}

#[test]
fn composition_rejects_mismatched_orders() {
    let g = unit(16);
    let q = QuadratureParams::default();
    let grad = assemble_gradient(&g, 0.4, q).unwrap();
    let lap = assemble_laplacian(&g, 0.5, q).unwrap();
    assert!(matches!(
        composition_residual(&grad, &lap, &Field::zeros(&g)),
        Err(Error::OrderMismatch(..))
    ));
    assert!(matches!(
        composition_residual(&lap, &lap, &Field::zeros(&g)),
        Err(Error::KindMismatch { .. })
    ));
}

#[test]
fn laplacian_approaches_minus_second_derivative() {
    // bump on (-1, 1) with u'' in closed form
    let g = build_grid(DomainSpec::interval(-1.0, 1.0, 400)).unwrap();
    let u = Field::from_fn(&g, |x| (-10.0 * x[0] * x[0]).exp()).unwrap();
    let minus_u2 = Field::from_fn(&g, |x| {
        let t = x[0];
        -(400.0 * t * t - 20.0) * (-10.0 * t * t).exp()
    })
    .unwrap();
    let mut errs = Vec::new();
    for s in [0.95, 0.99] {
        let lap = assemble_laplacian(&g, s, QuadratureParams::default()).unwrap();
        let lu = apply_laplacian(&lap, &u).unwrap();
        errs.push(lu.axpy(-1.0, &minus_u2).l2_norm() / minus_u2.l2_norm());
    }
    assert!(errs[1] < errs[0] && errs[1] < 0.05, "{errs:?}");
}

#[test]
fn operator_dump_round_trip() {
    let g = unit(10);
    let grad = assemble_gradient(&g, 0.5, QuadratureParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grad.fvop");
    write_operator(&path, &grad).unwrap();
    let dump = read_operator(&path).unwrap();
    assert_eq!((dump.dim, dump.order, dump.nodes), (1, 0.5, 10));
    assert_eq!(dump.data.len(), 100);
    assert_eq!(dump.data[3], grad.tables()[0][(0, 3)]);
    std::fs::write(&path, b"NOPE").unwrap();
    assert!(matches!(read_operator(&path), Err(Error::Format(_))));
}

#[test]
fn invalid_quadrature_params_are_rejected() {
    let g = unit(16);
    let q = QuadratureParams {
        tail_radius: Some(0.5),
        ..QuadratureParams::default()
    };
    assert!(assemble_gradient(&g, 0.5, q).is_err());
    let q = QuadratureParams {
        near_field: 0.0,
        ..QuadratureParams::default()
    };
    assert!(assemble_laplacian(&g, 0.5, q).is_err());
    assert!(assemble_laplacian(&g, 1.2, QuadratureParams::default()).is_err());
}
