//! Convergence of the weighted form `∫γ(|∇ˢv|²/(2t²))⟨∇ˢv, ∇ˢw⟩` to
//! `γ(∞)∫⟨∇ˢv, ∇ˢw⟩` as `t → 0`.

use serde::{Deserialize, Serialize};

use super::{default_coefficient, OperatorSpec};
use crate::coeffs::{make_coefficient, CoefficientFamily};
use crate::energy::{gradient_pairing, weighted_form, EnergyModel};
use crate::error::{invalid, Result};
use crate::fracops::assemble_gradient;
use crate::grid::{build_grid, DomainSpec, Field};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixConfig {
    pub domain: DomainSpec,
    pub operator: OperatorSpec,
    pub coefficient: CoefficientFamily,
    /// Scales `tₙ = 2⁻ⁿ` for `n = 0..=levels`.
    pub levels: u32,
    /// Amplitude of `v = amplitude · sin(πx̂)`; `w` is a fixed smooth
    /// two-mode field of unit size.
    pub amplitude: f64,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::interval(0.0, 1.0, 128),
            operator: OperatorSpec::default(),
            coefficient: default_coefficient(),
            levels: 12,
            amplitude: 100.0,
        }
    }
}

impl AppendixConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        make_coefficient(self.coefficient)?;
        if !(self.operator.s > 0.0 && self.operator.s < 1.0) {
            return Err(invalid("operator.s", "must lie in (0, 1)"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("amplitude", "must be positive"));
        }
        if self.levels > 60 {
            return Err(invalid("levels", "at most 60"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    pub t: f64,
    pub value: f64,
    pub limit: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub final_error: f64,
    /// Relative error nonincreasing in `n` from `n = 2` on.
    pub nonincreasing_from_2: bool,
    /// Largest relative error over all levels with `γ ≡ γ(∞)`.
    pub constant_error: f64,
}

fn table(model: &EnergyModel, levels: u32, v: &Field, w: &Field) -> Result<Vec<ConvergenceRow>> {
    let limit = model.coefficient().gamma_inf * gradient_pairing(model, w, v)?;
    (0..=levels)
        .map(|n| {
            let t = 0.5f64.powi(n as i32);
            let value = weighted_form(model, t, v, w)?;
            Ok(ConvergenceRow {
                n,
                t,
                value,
                limit,
                rel_error: (value - limit).abs() / limit.abs(),
            })
        })
        .collect()
}

/// Weighted form at `tₙ = 2⁻ⁿ` against its `γ(∞)` limit, for the configured
/// coefficient and for the constant coefficient `γ ≡ γ(∞)`.
pub fn appendix_convergence(cfg: &AppendixConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let grid = build_grid(cfg.domain.clone())?;
    let gradient = std::sync::Arc::new(assemble_gradient(
        &grid,
        cfg.operator.s,
        cfg.operator.quadrature,
    )?);
    let coeff = make_coefficient(cfg.coefficient)?;
    let model = EnergyModel::new(gradient, coeff, None, Field::zeros(&grid))?;
    let bounds = grid.spec().bounds.clone();
    let unit = |x: &[f64], k: usize| {
        let [a, b] = bounds[k];
        std::f64::consts::PI * (x[k] - a) / (b - a)
    };
    let d = grid.dim();
    let v = Field::from_fn(&grid, |x| {
        cfg.amplitude * (0..d).map(|k| unit(x, k).sin()).product::<f64>()
    })?;
    let w = Field::from_fn(&grid, |x| {
        (0..d)
            .map(|k| unit(x, k).sin() + 0.5 * (2.0 * unit(x, k)).sin())
            .product::<f64>()
    })?;
    let rows = table(&model, cfg.levels, &v, &w)?;
    let constant = make_coefficient(CoefficientFamily::Constant { c: coeff.gamma_inf })?;
    let constant_error = table(&model.with_coefficient(constant), cfg.levels, &v, &w)?
        .iter()
        .map(|r| r.rel_error)
        .fold(0.0, f64::max);
    let nonincreasing_from_2 = rows
        .windows(2)
        .filter(|p| p[0].n >= 2)
        .all(|p| p[1].rel_error <= p[0].rel_error);
    Ok(ConvergenceReport {
        final_error: rows.last().map_or(f64::NAN, |r| r.rel_error),
        rows,
        nonincreasing_from_2,
        constant_error,
    })
}
