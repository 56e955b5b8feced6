//! First Dirichlet eigenpair of the assembled fractional Laplacian by inverse
//! power iteration.

use nalgebra::{Cholesky, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracops::{apply_laplacian, laplacian_form, NonlocalOperator, OperatorKind};
use crate::grid::Field;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;

/// Nodal values below this (after the sign flip) break the Perron property.
const PERRON_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// L²-normalized, nodewise nonnegative.
    #[serde(skip)]
    pub vector: Field,
    /// `‖(-Δ)ˢφ₁ - λ₁φ₁‖_{L²}`.
    pub residual: f64,
    pub iterations: usize,
}

pub fn first_eigenpair(lap: &NonlocalOperator, tol: f64) -> Result<EigenPair> {
    if lap.kind() != OperatorKind::Laplacian {
        return Err(Error::KindMismatch {
            expected: "laplacian",
            found: "gradient",
        });
    }
    let grid = lap.grid();
    let table = &lap.tables()[0];
    let w = grid.weight();
    let chol = Cholesky::new(table.clone())
        .ok_or_else(|| Error::Factorization("laplacian table is not positive definite".into()))?;
    let norm = |v: &DVector<f64>| (w * v.norm_squared()).sqrt();

    let mut x = DVector::from_element(grid.len(), 1.0);
    x /= norm(&x);
    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for it in 1..=MAX_ITERATIONS {
        let y = chol.solve(&x);
        x = &y / norm(&y);
        let lx = table * &x;
        let lambda = w * x.dot(&lx);
        residual = norm(&(&lx - lambda * &x));
        if residual <= tol {
            return finish(lap, x, lambda, residual, it);
        }
        // Past this point rounding in the matrix product dominates; accept
        // once the residual has stopped improving and is at that floor.
        if residual < best * (1.0 - 1e-3) {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        let floor = 64.0 * f64::EPSILON * table.amax() * (grid.len() as f64).sqrt();
        if stalled >= 20 && residual <= floor.max(tol) * 1e3 {
            return finish(lap, x, lambda, residual, it);
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

fn finish(
    lap: &NonlocalOperator,
    mut x: DVector<f64>,
    lambda: f64,
    residual: f64,
    iterations: usize,
) -> Result<EigenPair> {
    if x.sum() < 0.0 {
        x = -x;
    }
    let min = x.min();
    if min < -PERRON_SLACK {
        return Err(Error::SignedEigenvector { min });
    }
    let values = x.iter().map(|v| v.max(0.0)).collect();
    Ok(EigenPair {
        lambda,
        vector: Field::from_values(lap.grid(), values)?,
        residual,
        iterations,
    })
}

/// `⟨u, (-Δ)ˢu⟩ / ‖u‖²`.
pub fn rayleigh_quotient(lap: &NonlocalOperator, u: &Field) -> Result<f64> {
    let n2 = u.l2_norm().powi(2);
    if n2 == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(laplacian_form(lap, u)? / n2)
}

/// `‖(-Δ)ˢu - λu‖_{L²}`.
pub fn eigen_residual(lap: &NonlocalOperator, lambda: f64, u: &Field) -> Result<f64> {
    Ok(apply_laplacian(lap, u)?.axpy(-lambda, u).l2_norm())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fracops::{assemble_gradient, assemble_laplacian, QuadratureParams};
    use crate::grid::{build_grid, DomainSpec, Grid};

    fn lap(a: f64, b: f64, n: usize, s: f64) -> NonlocalOperator {
        let g = build_grid(DomainSpec::interval(a, b, n)).unwrap();
        assemble_laplacian(&g, s, QuadratureParams::default()).unwrap()
    }

    #[test]
    fn matches_dense_eigensolve() {
        let op = lap(-1.0, 1.0, 256, 0.5);
        let pair = first_eigenpair(&op, DEFAULT_TOL).unwrap();
        let oracle = op.tables()[0].clone().symmetric_eigen().eigenvalues.min();
        assert!((pair.lambda - oracle).abs() <= 1e-8 * oracle);
        // restricted fractional Laplacian on (-1, 1), s = 1/2: λ₁ ≈ 1.1578
        assert!(
            (pair.lambda - 1.1578).abs() < 0.02 * 1.1578,
            "{}",
            pair.lambda
        );
        assert!(pair.vector.min_value() >= 0.0);
        assert!((pair.vector.l2_norm() - 1.0).abs() < 1e-12);
        let q = rayleigh_quotient(&op, &pair.vector).unwrap();
        assert!((q - pair.lambda).abs() <= 1e-10 * pair.lambda);
    }

    #[test]
    fn near_one_order_approaches_classical_value() {
        let op = lap(0.0, 1.0, 512, 0.99);
        let pair = first_eigenpair(&op, DEFAULT_TOL).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((pair.lambda - pi2).abs() <= 0.05 * pi2, "{}", pair.lambda);
    }

    #[test]
    fn rayleigh_quotients_bounded_below() {
        let op = lap(0.0, 1.0, 96, 0.4);
        let g: Arc<Grid> = op.grid().clone();
        let pair = first_eigenpair(&op, DEFAULT_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let u = Field::from_values(
                &g,
                (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            assert!(rayleigh_quotient(&op, &u).unwrap() >= pair.lambda - 1e-8);
        }
        assert!(matches!(
            rayleigh_quotient(&op, &Field::zeros(&g)),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn mixed_with_second_mode_lies_between() {
        let op = lap(0.0, 1.0, 64, 0.5);
        let eig = op.tables()[0].clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..64).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
        let pair = first_eigenpair(&op, DEFAULT_TOL).unwrap();
        let second = Field::from_values(
            op.grid(),
            eig.eigenvectors.column(order[1]).iter().copied().collect(),
        )
        .unwrap();
        let second = second.scaled(1.0 / second.l2_norm());
        let q = rayleigh_quotient(&op, &pair.vector.axpy(0.1, &second)).unwrap();
        assert!(l1 < q && q < l2, "{l1} < {q} < {l2}");
    }

    #[test]
    fn shrinking_the_domain_raises_lambda() {
        let small = first_eigenpair(&lap(0.0, 1.0, 128, 0.5), DEFAULT_TOL).unwrap();
        let large = first_eigenpair(&lap(0.0, 2.0, 128, 0.5), DEFAULT_TOL).unwrap();
        assert!(small.lambda > large.lambda);
        // scaling: λ₁(0,2) = 2^{-2s} λ₁(0,1)
        assert!((large.lambda - 0.5 * small.lambda).abs() < 1e-9 * small.lambda);
    }

    #[test]
    fn residual_and_kind_checks() {
        let op = lap(0.0, 1.0, 64, 0.7);
        let pair = first_eigenpair(&op, DEFAULT_TOL).unwrap();
        assert!(pair.residual <= DEFAULT_TOL);
        assert!(eigen_residual(&op, pair.lambda, &pair.vector).unwrap() <= 1e-9);
        let grad = assemble_gradient(op.grid(), 0.7, QuadratureParams::default()).unwrap();
        assert!(matches!(
            first_eigenpair(&grad, DEFAULT_TOL),
            Err(Error::KindMismatch { .. })
        ));
    }
}
