//! Uniform cell-centred grids on boxes in one or two dimensions, and the
//! nodal fields that live on them.
//!
//! Every [`Field`] is understood to be extended by zero outside the box, so
//! the nonlocal Dirichlet condition is part of the type rather than a set of
//! boundary rows.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box domain and resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    /// `(a_k, b_k)` per axis.
    pub bounds: Vec<[f64; 2]>,
    /// Cells per axis.
    pub nodes: Vec<usize>,
}

impl DomainSpec {
    pub fn interval(a: f64, b: f64, n: usize) -> Self {
        Self {
            dim: 1,
            bounds: vec![[a, b]],
            nodes: vec![n],
        }
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Self {
        Self {
            dim: 2,
            bounds: vec![[x.0, x.1], [y.0, y.1]],
            nodes: vec![nx, ny],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1 or 2, got {}",
                self.dim
            )));
        }
        if self.bounds.len() != self.dim || self.nodes.len() != self.dim {
            return Err(Error::InvalidDomain(format!(
                "expected {} bounds and node counts, got {} and {}",
                self.dim,
                self.bounds.len(),
                self.nodes.len()
            )));
        }
        for (k, ([a, b], &n)) in self.bounds.iter().zip(&self.nodes).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidDomain(format!("axis {k}: non-finite bounds")));
            }
            if a >= b {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: lower bound {a} is not below upper bound {b}"
                )));
            }
            if n < 4 {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: need at least 4 nodes, got {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Cell-centred grid. Node `i` in 2D has multi-index `(i % nx, i / nx)`.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: DomainSpec,
    spacing: Vec<f64>,
    axes: Vec<Vec<f64>>,
    weight: f64,
}

pub fn build_grid(spec: DomainSpec) -> Result<Arc<Grid>> {
    Grid::new(spec).map(Arc::new)
}

impl Grid {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        let spacing: Vec<f64> = spec
            .bounds
            .iter()
            .zip(&spec.nodes)
            .map(|([a, b], &n)| (b - a) / n as f64)
            .collect();
        let axes = spec
            .bounds
            .iter()
            .zip(&spec.nodes)
            .zip(&spacing)
            .map(|(([a, _], &n), &h)| (0..n).map(|i| a + (i as f64 + 0.5) * h).collect())
            .collect();
        let weight = spacing.iter().product();
        Ok(Self {
            spec,
            spacing,
            axes,
            weight,
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.spec.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.spec.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Quadrature weight `h^d`, identical at every node.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn measure(&self) -> f64 {
        self.spec.bounds.iter().map(|[a, b]| b - a).product()
    }

    pub fn diameter(&self) -> f64 {
        self.spec
            .bounds
            .iter()
            .map(|[a, b]| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        let nx = self.spec.nodes[0];
        [i % nx, i / nx]
    }

    pub fn coord(&self, i: usize) -> [f64; 2] {
        let [ix, iy] = self.multi_index(i);
        if self.dim() == 1 {
            [self.axes[0][ix], 0.0]
        } else {
            [self.axes[0][ix], self.axes[1][iy]]
        }
    }

    /// Strictly inside the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self
                .spec
                .bounds
                .iter()
                .zip(x)
                .all(|([a, b], &xk)| xk > *a && xk < *b)
    }

    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || self.spec == other.spec
    }
}

/// Scalar nodal function, zero outside the domain.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidDomain(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at every node; `f` receives `[x]` or `[x, y]`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.coord(i);
                let v = f(&p[..d]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { node: i, value: v })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at an arbitrary point: exactly zero off the open domain, the
    /// lattice-linear interpolant (with zero ghost nodes) inside.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let g = &self.grid;
        let n = g.nodes_per_axis();
        let mut idx = [0i64; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..g.dim() {
            let a = g.spec().bounds[k][0];
            let t = (x[k] - a) / g.spacing()[k] - 0.5;
            let f = t.floor();
            idx[k] = f as i64;
            frac[k] = t - f;
        }
        let at = |ix: i64, iy: i64| -> f64 {
            if ix < 0 || ix >= n[0] as i64 {
                return 0.0;
            }
            if g.dim() == 1 {
                return self.values[ix as usize];
            }
            if iy < 0 || iy >= n[1] as i64 {
                return 0.0;
            }
            self.values[ix as usize + n[0] * iy as usize]
        };
        if g.dim() == 1 {
            let [i] = [idx[0]];
            (1.0 - frac[0]) * at(i, 0) + frac[0] * at(i + 1, 0)
        } else {
            let (i, j) = (idx[0], idx[1]);
            let (fx, fy) = (frac[0], frac[1]);
            (1.0 - fx) * (1.0 - fy) * at(i, j)
                + fx * (1.0 - fy) * at(i + 1, j)
                + (1.0 - fx) * fy * at(i, j + 1)
                + fx * fy * at(i + 1, j + 1)
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.weight() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub(crate) fn check_grid(&self, other: &Arc<Grid>) -> Result<()> {
        if self.grid.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Nodal d-vectors stored component-wise: `components[c][i]`.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn from_components(grid: &Arc<Grid>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidDomain(
                "vector field shape does not match grid".into(),
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            components,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Nodal d-vector.
    pub fn at(&self, i: usize) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (c, comp) in self.components.iter().enumerate() {
            v[c] = comp[i];
        }
        v
    }

    /// `|v_i|^2` per node.
    pub fn squared_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.components.iter().map(|c| c[i] * c[i]).sum())
            .collect()
    }

    /// `sum_i w <self_i, other_i>`.
    pub fn l2_inner(&self, other: &VectorField) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        Ok(self.grid.weight() * s)
    }
}

/// Discrete L² pairing `sum_i w_i f1_i f2_i`.
pub fn l2_inner(f1: &Field, f2: &Field) -> Result<f64> {
    f1.check_grid(&f2.grid)?;
    Ok(f1.grid.weight()
        * f1.values
            .iter()
            .zip(&f2.values)
            .map(|(a, b)| a * b)
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_interval_cell_centres() {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, 8)).unwrap();
        assert_eq!(g.len(), 8);
        for i in 0..8 {
            assert_eq!(g.coord(i)[0], (i as f64 + 0.5) / 8.0);
        }
        assert_eq!(g.weight(), 1.0 / 8.0);
    }

    #[test]
    fn square_product_grid() {
        let g = build_grid(DomainSpec::rectangle((0.0, 1.0), (0.0, 1.0), 4, 4)).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.weight(), 1.0 / 16.0);
        assert_eq!(g.coord(5), [0.375, 0.375]);
    }

    #[test]
    fn weights_sum_to_measure() {
        let g = build_grid(DomainSpec::interval(-1.0, 1.0, 256)).unwrap();
        let total = g.weight() * g.len() as f64;
        assert!((total - 2.0).abs() / 2.0 < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Grid::new(DomainSpec::interval(0.0, 1.0, 3)).is_err());
        assert!(Grid::new(DomainSpec::interval(1.0, 1.0, 8)).is_err());
        assert!(Grid::new(DomainSpec::interval(0.0, f64::NAN, 8)).is_err());
        assert!(Grid::new(DomainSpec::interval(2.0, 1.0, 8)).is_err());
        let mut bad = DomainSpec::interval(0.0, 1.0, 8);
        bad.dim = 3;
        assert!(Grid::new(bad).is_err());
    }

    #[test]
    fn constant_field_and_exterior_zero() {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, 8)).unwrap();
        let f = Field::from_fn(&g, |_| 1.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
        assert_eq!(f.value_at(&[2.0]), 0.0);
        assert_eq!(f.value_at(&[-1e-300]), 0.0);
        assert_eq!(f.value_at(&[1.0]), 0.0);
    }

    #[test]
    fn sampling_identity() {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, 4)).unwrap();
        let f = Field::from_fn(&g, |x| x[0]).unwrap();
        assert_eq!(f.values(), &[0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn sampling_rejects_non_finite() {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, 4)).unwrap();
        let err = Field::from_fn(&g, |x| if x[0] > 0.5 { f64::NAN } else { 0.0 });
        assert!(matches!(err, Err(Error::NonFinite { node: 2, .. })));
    }

    #[test]
    fn inner_products() {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, 256)).unwrap();
        let one = Field::from_fn(&g, |_| 1.0).unwrap();
        let x = Field::from_fn(&g, |x| x[0]).unwrap();
        assert_relative_eq!(l2_inner(&one, &one).unwrap(), 1.0, epsilon = 1e-14);
        // midpoint rule is exact for linear integrands
        assert!((l2_inner(&one, &x).unwrap() - 0.5).abs() < 1e-6);
        let neg = x.scaled(-1.0);
        let v = l2_inner(&neg, &x).unwrap();
        assert!(v < 0.0);
        assert_relative_eq!(v, -x.l2_norm().powi(2), epsilon = 1e-14);
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let g1 = build_grid(DomainSpec::interval(0.0, 1.0, 8)).unwrap();
        let g2 = build_grid(DomainSpec::interval(0.0, 2.0, 8)).unwrap();
        let a = Field::zeros(&g1);
        let b = Field::zeros(&g2);
        assert!(matches!(l2_inner(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn refinement_halves_spacing_exactly() {
        let g1 = Grid::new(DomainSpec::interval(0.0, 1.0, 64)).unwrap();
        let g2 = Grid::new(DomainSpec::interval(0.0, 1.0, 128)).unwrap();
        assert_eq!(g2.len(), 2 * g1.len());
        assert_eq!(g2.spacing()[0] * 2.0, g1.spacing()[0]);
        // every coarse centre is the midpoint of two fine centres
        for i in 0..64 {
            let mid = 0.5 * (g2.axis(0)[2 * i] + g2.axis(0)[2 * i + 1]);
            assert!((mid - g1.axis(0)[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_in_two_dimensions() {
        let g = build_grid(DomainSpec::rectangle((0.0, 1.0), (0.0, 2.0), 4, 8)).unwrap();
        let f = Field::from_fn(&g, |p| p[0] + p[1]).unwrap();
        let c = g.coord(9);
        assert!((f.value_at(&c) - (c[0] + c[1])).abs() < 1e-14);
        assert_eq!(f.value_at(&[0.5, 2.5]), 0.0);
    }
}
