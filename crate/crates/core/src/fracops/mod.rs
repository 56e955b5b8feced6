//! Discrete Riesz fractional gradient, fractional divergence and fractional
//! Laplacian on a [`Grid`], assembled as dense tables.
//!
//! The divergence is never assembled separately: it is the negative adjoint of
//! the gradient table under the discrete L² pairing, so
//! `⟨u, div φ⟩ = -⟨φ, ∇u⟩` holds to rounding for every pair.

mod weights;
mod whole_space;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid, VectorField};

pub use weights::OffsetTable;
pub use whole_space::WholeSpaceGradient;

/// Parameters of the principal-value and tail treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureParams {
    /// Half-width of the Laplacian near-field box, in grid spacings. Inside it
    /// the kernel is integrated against the nodal second difference.
    pub near_field: f64,
    /// Radius beyond which the exterior tail is dropped when
    /// `tail_correction` is off. `None` means `10 · diam(Ω)`.
    pub tail_radius: Option<f64>,
    /// Add the closed-form exterior tail of the Laplacian diagonal.
    pub tail_correction: bool,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            near_field: 1.0,
            tail_radius: None,
            tail_correction: true,
        }
    }
}

impl QuadratureParams {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.near_field > 0.0 && self.near_field <= 1.0) {
            return Err(invalid(
                "quadrature.near_field",
                format!("must lie in (0, 1], got {}", self.near_field),
            ));
        }
        let tail = self.tail_radius(grid);
        if !(tail.is_finite() && tail > grid.diameter()) {
            return Err(invalid(
                "quadrature.tail_radius",
                format!("must exceed diam(Ω) = {}, got {tail}", grid.diameter()),
            ));
        }
        Ok(())
    }

    pub fn tail_radius(&self, grid: &Grid) -> f64 {
        self.tail_radius.unwrap_or(10.0 * grid.diameter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Gradient,
    Laplacian,
}

impl OperatorKind {
    fn name(self) -> &'static str {
        match self {
            OperatorKind::Gradient => "gradient",
            OperatorKind::Laplacian => "laplacian",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Assembled dense operator. Gradient operators hold one `N x N` table per
/// component; the Laplacian holds a single symmetric table.
#[derive(Debug, Clone)]
pub struct NonlocalOperator {
    kind: OperatorKind,
    order: f64,
    grid: Arc<Grid>,
    tables: Vec<DMatrix<f64>>,
    constant: f64,
    params: QuadratureParams,
}

impl NonlocalOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn tables(&self) -> &[DMatrix<f64>] {
        &self.tables
    }

    /// The normalising constant the tables were scaled by.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn params(&self) -> &QuadratureParams {
        &self.params
    }

    fn expect(&self, kind: OperatorKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }
}

fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(invalid(
            "s",
            format!("fractional order must lie in (0, 1), got {s}"),
        ))
    }
}

/// Riesz-gradient constant `μ_{d,s}` and fractional-Laplacian constant
/// `C_{d,s}`:
///
/// ```text
/// μ_{d,s} = 2^s Γ((d+s+1)/2) / (π^{d/2} Γ((1-s)/2))
/// C_{d,s} = 4^s Γ(d/2+s) / (π^{d/2} |Γ(-s)|)
/// ```
///
/// With these, `∇ˢ = ∇(-Δ)^{(s-1)/2}` and `-divˢ∇ˢ = (-Δ)ˢ` on ℝᵈ.
pub fn normalizing_constants(d: usize, s: f64) -> Result<(f64, f64)> {
    check_order(s)?;
    if d != 1 && d != 2 {
        return Err(invalid("d", format!("dimension must be 1 or 2, got {d}")));
    }
    let df = d as f64;
    let pi_d2 = std::f64::consts::PI.powf(df / 2.0);
    let mu = 2f64.powf(s) * gamma((df + s + 1.0) / 2.0) / (pi_d2 * gamma((1.0 - s) / 2.0));
    // |Γ(-s)| = Γ(1-s)/s on (0, 1)
    let abs_gamma_neg = gamma(1.0 - s) / s;
    let c = 4f64.powf(s) * gamma(df / 2.0 + s) / (pi_d2 * abs_gamma_neg);
    Ok((mu, c))
}

/// Assembles the fractional gradient table.
pub fn assemble_gradient(
    grid: &Arc<Grid>,
    s: f64,
    q: QuadratureParams,
) -> Result<NonlocalOperator> {
    check_order(s)?;
    q.validate(grid)?;
    let (mu, _) = normalizing_constants(grid.dim(), s)?;
    let n = grid.len();
    let tables = match grid.dim() {
        1 => {
            let h = grid.spacing()[0];
            let a = weights::gradient_1d(s, n);
            let scale = mu * h.powf(-s);
            let w = DMatrix::from_fn(n, n, |i, j| {
                if j > i {
                    scale * a[j - i]
                } else if j < i {
                    -scale * a[i - j]
                } else {
                    0.0
                }
            });
            vec![w]
        }
        _ => {
            let [nx, ny] = [grid.nodes_per_axis()[0], grid.nodes_per_axis()[1]];
            let [hx, hy] = [grid.spacing()[0], grid.spacing()[1]];
            let t = weights::gradient_2d(s, hx, hy, nx, ny);
            (0..2)
                .map(|c| {
                    DMatrix::from_fn(n, n, |i, j| {
                        let [ix, iy] = grid.multi_index(i);
                        let [jx, jy] = grid.multi_index(j);
                        mu * t.get(jx as i64 - ix as i64, jy as i64 - iy as i64)[c]
                    })
                })
                .collect()
        }
    };
    Ok(NonlocalOperator {
        kind: OperatorKind::Gradient,
        order: s,
        grid: grid.clone(),
        tables,
        constant: mu,
        params: q,
    })
}

/// Assembles the fractional Laplacian table (symmetric positive definite on
/// the zero-extension class).
pub fn assemble_laplacian(
    grid: &Arc<Grid>,
    s: f64,
    q: QuadratureParams,
) -> Result<NonlocalOperator> {
    check_order(s)?;
    q.validate(grid)?;
    let (_, c) = normalizing_constants(grid.dim(), s)?;
    let n = grid.len();
    let tail = (!q.tail_correction).then(|| q.tail_radius(grid));
    let table = match grid.dim() {
        1 => {
            let h = grid.spacing()[0];
            let tail = tail.map(|t| t / h);
            let lap = weights::laplacian_1d(s, q.near_field, n, tail);
            let scale = c * h.powf(-2.0 * s);
            let diag = scale * (lap.far_total - lap.far[0] + lap.near);
            let first = scale * (-lap.far[1] - 0.5 * lap.near);
            DMatrix::from_fn(n, n, |i, j| {
                let m = i.abs_diff(j);
                match m {
                    0 => diag,
                    1 => first,
                    _ => -scale * lap.far[m],
                }
            })
        }
        _ => {
            let [nx, ny] = [grid.nodes_per_axis()[0], grid.nodes_per_axis()[1]];
            let [hx, hy] = [grid.spacing()[0], grid.spacing()[1]];
            let lap = weights::laplacian_2d(s, hx, hy, nx, ny, q.near_field, tail);
            let near_x = 0.5 * lap.near[0] / (hx * hx);
            let near_y = 0.5 * lap.near[1] / (hy * hy);
            DMatrix::from_fn(n, n, |i, j| {
                let [ix, iy] = grid.multi_index(i);
                let [jx, jy] = grid.multi_index(j);
                let (mx, my) = (jx as i64 - ix as i64, jy as i64 - iy as i64);
                let mut v = -lap.far.get(mx, my);
                match (mx.abs(), my.abs()) {
                    (0, 0) => v += lap.far_total + 2.0 * near_x + 2.0 * near_y,
                    (1, 0) => v -= near_x,
                    (0, 1) => v -= near_y,
                    _ => {}
                }
                c * v
            })
        }
    };
    Ok(NonlocalOperator {
        kind: OperatorKind::Laplacian,
        order: s,
        grid: grid.clone(),
        tables: vec![table],
        constant: c,
        params: q,
    })
}

fn as_vector(u: &Field) -> DVector<f64> {
    DVector::from_column_slice(u.values())
}

/// `∇ˢu` at every node.
pub fn apply_gradient(op: &NonlocalOperator, u: &Field) -> Result<VectorField> {
    op.expect(OperatorKind::Gradient)?;
    u.check_grid(&op.grid)?;
    let x = as_vector(u);
    let comps = op
        .tables
        .iter()
        .map(|w| (w * &x).as_slice().to_vec())
        .collect();
    VectorField::from_components(&op.grid, comps)
}

/// `divˢφ`, realised as `-Wᵀφ` so that it is the exact negative adjoint of
/// [`apply_gradient`] under the uniform nodal weights.
pub fn apply_divergence(op: &NonlocalOperator, phi: &VectorField) -> Result<Field> {
    op.expect(OperatorKind::Gradient)?;
    if !phi.grid().same_as(&op.grid) {
        return Err(Error::GridMismatch);
    }
    let out = transpose_contract(&op.tables, phi.components());
    Field::from_values(&op.grid, out.iter().map(|v| -v).collect())
}

/// `Σ_c W_cᵀ φ_c`.
pub(crate) fn transpose_contract(tables: &[DMatrix<f64>], comps: &[Vec<f64>]) -> Vec<f64> {
    let n = tables[0].nrows();
    let mut acc = DVector::zeros(n);
    for (w, c) in tables.iter().zip(comps) {
        let v = DVector::from_column_slice(c);
        acc.gemv_tr(1.0, w, &v, 1.0);
    }
    acc.as_slice().to_vec()
}

/// `(-Δ)ˢu` at every node.
pub fn apply_laplacian(op: &NonlocalOperator, u: &Field) -> Result<Field> {
    op.expect(OperatorKind::Laplacian)?;
    u.check_grid(&op.grid)?;
    let y = &op.tables[0] * as_vector(u);
    Field::from_values(&op.grid, y.as_slice().to_vec())
}

/// Relative L² mismatch `‖-divˢ∇ˢu - (-Δ)ˢu‖ / ‖(-Δ)ˢu‖` at the nodes of Ω.
///
/// The identity holds on the whole space, and `∇ˢu` does not vanish outside
/// Ω even though `u` does. The composed side therefore samples `∇ˢu` over
/// ℝᵈ with [`WholeSpaceGradient`] and takes the divergence back at the nodes
/// of Ω. The restricted table alone would drop the exterior flux, which is
/// singular at `∂Ω` and does not shrink under refinement.
pub fn composition_residual(
    grad: &NonlocalOperator,
    lap: &NonlocalOperator,
    u: &Field,
) -> Result<f64> {
    grad.expect(OperatorKind::Gradient)?;
    lap.expect(OperatorKind::Laplacian)?;
    if grad.order != lap.order {
        return Err(Error::OrderMismatch(grad.order, lap.order));
    }
    if !grad.grid.same_as(&lap.grid) {
        return Err(Error::GridMismatch);
    }
    u.check_grid(&grad.grid)?;
    let whole = WholeSpaceGradient::new(grad)?;
    let w = grad.grid.weight();
    let flux: Vec<Vec<f64>> = whole
        .apply(u.values())
        .into_iter()
        .map(|c| {
            c.iter()
                .zip(whole.weights())
                .map(|(v, ws)| v * ws / w)
                .collect()
        })
        .collect();
    let composed = Field::from_values(&grad.grid, whole.adjoint(&flux))?;
    let direct = apply_laplacian(lap, u)?;
    let denom = direct.l2_norm();
    if denom == 0.0 {
        return Ok(composed.l2_norm());
    }
    Ok(composed.axpy(-1.0, &direct).l2_norm() / denom)
}

/// Nodal quadratic form `Σ w u (-Δ)ˢu`.
pub fn laplacian_form(lap: &NonlocalOperator, u: &Field) -> Result<f64> {
    let lu = apply_laplacian(lap, u)?;
    crate::grid::l2_inner(u, &lu)
}

const OPERATOR_MAGIC: &[u8; 4] = b"FVOP";

/// Binary dump: `FVOP`, u32 LE `d`, f64 LE `s`, u32 LE `N`, then each table
/// row-major as f64 LE (gradient components one after another).
pub fn write_operator(path: impl AsRef<Path>, op: &NonlocalOperator) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 8 * op.tables.len() * op.grid.len().pow(2));
    buf.extend_from_slice(OPERATOR_MAGIC);
    buf.extend_from_slice(&(op.grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&op.order.to_le_bytes());
    buf.extend_from_slice(&(op.grid.len() as u32).to_le_bytes());
    for t in &op.tables {
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                buf.extend_from_slice(&t[(i, j)].to_le_bytes());
            }
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Header and row-major payload of an operator dump.
#[derive(Debug, Clone)]
pub struct OperatorDump {
    pub dim: u32,
    pub order: f64,
    pub nodes: u32,
    pub data: Vec<f64>,
}

pub fn read_operator(path: impl AsRef<Path>) -> Result<OperatorDump> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[..4] != OPERATOR_MAGIC {
        return Err(Error::Format("missing FVOP header".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let order = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let nodes = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let payload = &bytes[20..];
    if payload.len() % 8 != 0 || payload.len() / 8 % (nodes as usize).pow(2) != 0 {
        return Err(Error::Format(
            "payload length is not a multiple of N²".into(),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(OperatorDump {
        dim,
        order,
        nodes,
        data,
    })
}

#[cfg(test)]
mod tests;
