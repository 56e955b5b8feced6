//! The energy `𝒥(u) = ∫Γ(|∇ˢu|²/2) - ∫F(u) - ∫hu`, its derivative, and the
//! auxiliary forms used by the convexity and asymptotic checks.
//!
//! The reaction and forcing integrals use the nodal rule on Ω. The gradient
//! term is split at the lower bound `γ_min` of the coefficient:
//!
//! `∫Γ(|∇ˢu|²/2) = (γ_min/2)⟨u, (-Δ)ˢu⟩ + ∫[Γ(|∇ˢu|²/2) - γ_min|∇ˢu|²/2]`
//!
//! using `∫_{ℝᵈ}|∇ˢu|² = ⟨u, (-Δ)ˢu⟩`. The first term goes through the
//! assembled Laplacian, the remainder through [`WholeSpaceGradient`] samples
//! over all of ℝᵈ (`∇ˢu` does not vanish where `u` does). For constant `γ` the
//! energy is then exactly the Laplacian quadratic form. Both terms are convex
//! whenever `t ↦ Γ(t) - γ_min t` is, which holds for the bundled families.
//! The derivative is exactly the transpose chain of this quadrature.

use std::sync::Arc;

use crate::coeffs::{CoefficientModel, ReactionModel};
use crate::error::{invalid, Error, Result};
use crate::fracops::{
    apply_laplacian, assemble_laplacian, NonlocalOperator, OperatorKind, WholeSpaceGradient,
};
use crate::grid::{Field, Grid};

/// Arguments of `Γ` and `F` beyond this magnitude are reported as overflow.
pub const OVERFLOW_ARGUMENT: f64 = 1e150;

#[derive(Debug, Clone)]
pub struct EnergyModel {
    grad: Arc<NonlocalOperator>,
    lap: Arc<NonlocalOperator>,
    whole: Arc<WholeSpaceGradient>,
    coeff: CoefficientModel,
    reaction: Option<ReactionModel>,
    forcing: Field,
}

impl EnergyModel {
    /// `reaction = None` means `f ≡ 0`.
    pub fn new(
        grad: Arc<NonlocalOperator>,
        coeff: CoefficientModel,
        reaction: Option<ReactionModel>,
        forcing: Field,
    ) -> Result<Self> {
        if grad.kind() != OperatorKind::Gradient {
            return Err(Error::KindMismatch {
                expected: "gradient",
                found: "laplacian",
            });
        }
        if !forcing.grid().same_as(grad.grid()) {
            return Err(Error::GridMismatch);
        }
        let whole = Arc::new(WholeSpaceGradient::new(&grad)?);
        let lap = Arc::new(assemble_laplacian(
            grad.grid(),
            grad.order(),
            *grad.params(),
        )?);
        Ok(Self {
            grad,
            lap,
            whole,
            coeff,
            reaction,
            forcing,
        })
    }

    /// As [`EnergyModel::new`], additionally requiring `h ≥ 0` nodewise.
    pub fn nonnegative(
        grad: Arc<NonlocalOperator>,
        coeff: CoefficientModel,
        reaction: Option<ReactionModel>,
        forcing: Field,
    ) -> Result<Self> {
        if forcing.min_value() < 0.0 {
            return Err(invalid("forcing", "must be nonnegative nodewise"));
        }
        Self::new(grad, coeff, reaction, forcing)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.grad.grid()
    }

    pub fn gradient_operator(&self) -> &Arc<NonlocalOperator> {
        &self.grad
    }

    /// The Laplacian on the same grid, order and quadrature parameters.
    pub fn laplacian_operator(&self) -> &Arc<NonlocalOperator> {
        &self.lap
    }

    pub fn coefficient(&self) -> &CoefficientModel {
        &self.coeff
    }

    pub fn reaction(&self) -> Option<&ReactionModel> {
        self.reaction.as_ref()
    }

    pub fn forcing(&self) -> &Field {
        &self.forcing
    }

    /// Copy with a different forcing term.
    pub fn with_forcing(&self, forcing: Field) -> Result<Self> {
        if !forcing.grid().same_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            forcing,
            ..self.clone()
        })
    }

    pub fn whole_space_gradient(&self) -> &Arc<WholeSpaceGradient> {
        &self.whole
    }

    /// Copy with a different coefficient.
    pub fn with_coefficient(&self, coeff: CoefficientModel) -> Self {
        Self {
            coeff,
            ..self.clone()
        }
    }

    /// Copy with a different reaction term.
    pub fn with_reaction(&self, reaction: Option<ReactionModel>) -> Self {
        Self {
            reaction,
            ..self.clone()
        }
    }

    fn f(&self, t: f64) -> f64 {
        self.reaction.map_or(0.0, |r| r.f(t))
    }

    fn big_f(&self, t: f64) -> Result<f64> {
        if t.abs() > OVERFLOW_ARGUMENT {
            return Err(Error::Overflow { what: "F", arg: t });
        }
        Ok(self.reaction.map_or(0.0, |r| r.big_f(t)))
    }
}

fn big_gamma_checked(coeff: &CoefficientModel, t: f64) -> Result<f64> {
    if t.is_nan() || t > OVERFLOW_ARGUMENT {
        return Err(Error::Overflow { what: "Γ", arg: t });
    }
    Ok(coeff.big_gamma(t))
}

fn gamma_checked(coeff: &CoefficientModel, t: f64) -> Result<f64> {
    if t.is_nan() || t > OVERFLOW_ARGUMENT {
        return Err(Error::Overflow { what: "γ", arg: t });
    }
    Ok(coeff.gamma(t))
}

/// `∇ˢu` at the whole-space samples with the half squared norms `|∇ˢu|²/2`.
fn gradient_with_density(model: &EnergyModel, u: &Field) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if !u.grid().same_as(model.grid()) {
        return Err(Error::GridMismatch);
    }
    let g = model.whole.apply(u.values());
    let mut half = vec![0.0; model.whole.len()];
    for c in &g {
        for (h, v) in half.iter_mut().zip(c) {
            *h += 0.5 * v * v;
        }
    }
    Ok((g, half))
}

/// `Σ w u·(-Δ)ˢv`.
fn laplacian_pairing(model: &EnergyModel, u: &Field, v: &Field) -> Result<f64> {
    let lv = apply_laplacian(&model.lap, v)?;
    crate::grid::l2_inner(u, &lv)
}

fn dot_at(a: &[Vec<f64>], b: &[Vec<f64>], e: usize) -> f64 {
    a.iter().zip(b).map(|(x, y)| x[e] * y[e]).sum()
}

/// `Φ(u) = ∫Γ(|∇ˢu|²/2)`.
pub fn quasilinear_part(model: &EnergyModel, u: &Field) -> Result<f64> {
    let base = model.coeff.gamma_min;
    let mut acc = 0.5 * base * laplacian_pairing(model, u, u)?;
    if !model.coeff.is_constant() {
        let (_, half) = gradient_with_density(model, u)?;
        for (t, ws) in half.iter().zip(model.whole.weights()) {
            acc += ws * (big_gamma_checked(&model.coeff, *t)? - base * t);
        }
    }
    Ok(acc)
}

/// `𝒥(u)`.
pub fn energy(model: &EnergyModel, u: &Field) -> Result<f64> {
    let phi = quasilinear_part(model, u)?;
    let w = model.grid().weight();
    let mut reaction = 0.0;
    let mut forcing = 0.0;
    for (ui, hi) in u.values().iter().zip(model.forcing.values()) {
        reaction += model.big_f(*ui)?;
        forcing += hi * ui;
    }
    Ok(phi - w * reaction - w * forcing)
}

/// Nodal representer of `𝒥′(u)`: `𝒥′(u)[φ] = Σ wᵢ gᵢ φᵢ`.
#[derive(Debug, Clone)]
pub struct EnergyGradient {
    pub representer: Field,
}

impl EnergyGradient {
    /// `𝒥′(u)[φ]` through the representer.
    pub fn pair(&self, phi: &Field) -> Result<f64> {
        crate::grid::l2_inner(&self.representer, phi)
    }
}

/// `γ_min (-Δ)ˢu + Σ_c Kᵀ_c((γ - γ_min) ∇ˢ_c u)`, the representer of `Φ′(u)`.
fn quasilinear_representer(model: &EnergyModel, u: &Field) -> Result<Vec<f64>> {
    let base = model.coeff.gamma_min;
    let mut rep = apply_laplacian(&model.lap, u)?.scaled(base).into_values();
    if model.coeff.is_constant() {
        return Ok(rep);
    }
    let (g, half) = gradient_with_density(model, u)?;
    let w = model.grid().weight();
    let mut weights = Vec::with_capacity(half.len());
    for (t, ws) in half.iter().zip(model.whole.weights()) {
        weights.push(ws / w * (gamma_checked(&model.coeff, *t)? - base));
    }
    let flux: Vec<Vec<f64>> = g
        .iter()
        .map(|c| c.iter().zip(&weights).map(|(v, k)| v * k).collect())
        .collect();
    for (r, v) in rep.iter_mut().zip(model.whole.adjoint(&flux)) {
        *r += v;
    }
    Ok(rep)
}

pub fn energy_gradient(model: &EnergyModel, u: &Field) -> Result<EnergyGradient> {
    let mut rep = quasilinear_representer(model, u)?;
    for ((r, ui), hi) in rep.iter_mut().zip(u.values()).zip(model.forcing.values()) {
        *r -= model.f(*ui) + hi;
    }
    Ok(EnergyGradient {
        representer: Field::from_values(model.grid(), rep)?,
    })
}

/// `𝒥′(u)[φ] = ∫γ(|∇ˢu|²/2)⟨∇ˢu, ∇ˢφ⟩ - ∫f(u)φ - ∫hφ` by direct quadrature.
pub fn directional_derivative(model: &EnergyModel, u: &Field, phi: &Field) -> Result<f64> {
    let base = model.coeff.gamma_min;
    let mut acc = base * laplacian_pairing(model, phi, u)?;
    if !model.coeff.is_constant() {
        let (gu, half) = gradient_with_density(model, u)?;
        let (gphi, _) = gradient_with_density(model, phi)?;
        let ws = model.whole.weights();
        for (e, t) in half.iter().enumerate() {
            acc += ws[e] * (gamma_checked(&model.coeff, *t)? - base) * dot_at(&gu, &gphi, e);
        }
    }
    let mut local = 0.0;
    for ((ui, pi), hi) in u
        .values()
        .iter()
        .zip(phi.values())
        .zip(model.forcing.values())
    {
        local += (model.f(*ui) + hi) * pi;
    }
    Ok(acc - model.grid().weight() * local)
}

/// `Φ(u₁) - Φ(u₂) - Φ′(u₂)[u₁ - u₂]`.
pub fn convexity_gap(model: &EnergyModel, u1: &Field, u2: &Field) -> Result<f64> {
    let rep = Field::from_values(model.grid(), quasilinear_representer(model, u2)?)?;
    let diff = u1.axpy(-1.0, u2);
    let slope = crate::grid::l2_inner(&rep, &diff)?;
    Ok(quasilinear_part(model, u1)? - quasilinear_part(model, u2)? - slope)
}

/// `∫γ(|∇ˢv|²/(2t²))⟨∇ˢv, ∇ˢw⟩` for `t > 0`.
pub fn weighted_form(model: &EnergyModel, t: f64, v: &Field, w: &Field) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("scale must be positive, got {t}")));
    }
    let base = model.coeff.gamma_min;
    let mut acc = base * laplacian_pairing(model, w, v)?;
    if !model.coeff.is_constant() {
        let (gv, half) = gradient_with_density(model, v)?;
        let (gw, _) = gradient_with_density(model, w)?;
        let ws = model.whole.weights();
        for (e, h) in half.iter().enumerate() {
            acc += ws[e] * (gamma_checked(&model.coeff, h / (t * t))? - base) * dot_at(&gv, &gw, e);
        }
    }
    Ok(acc)
}

/// `∫⟨∇ˢv, ∇ˢw⟩ = ⟨v, (-Δ)ˢw⟩`, the constant-weight form.
pub fn gradient_pairing(model: &EnergyModel, v: &Field, w: &Field) -> Result<f64> {
    if !v.grid().same_as(model.grid()) {
        return Err(Error::GridMismatch);
    }
    laplacian_pairing(model, v, w)
}

/// Discrete `H₀ˢ` norm `‖∇ˢu‖_{L²(ℝᵈ)}`.
pub fn sobolev_norm(model: &EnergyModel, u: &Field) -> Result<f64> {
    Ok(gradient_pairing(model, u, u)?.max(0.0).sqrt())
}

/// `⟨β(z₁) - β(z₂), z₁ - z₂⟩` with `β(z) = γ(|z|²/2) z`.
pub fn monotonicity_pairing(coeff: &CoefficientModel, z1: &[f64], z2: &[f64]) -> f64 {
    let half = |z: &[f64]| 0.5 * z.iter().map(|v| v * v).sum::<f64>();
    let (g1, g2) = (coeff.gamma(half(z1)), coeff.gamma(half(z2)));
    z1.iter()
        .zip(z2)
        .map(|(a, b)| (g1 * a - g2 * b) * (a - b))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{make_coefficient, make_reaction, CoefficientFamily, ReactionFamily};
    use crate::fracops::{assemble_gradient, QuadratureParams};
    use crate::grid::{build_grid, DomainSpec};

    fn model(n: usize) -> EnergyModel {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, n)).unwrap();
        let grad = Arc::new(assemble_gradient(&g, 0.5, QuadratureParams::default()).unwrap());
        let coeff = make_coefficient(CoefficientFamily::Paper {
            a: 1.0,
            b: 2.0,
            p: 1.5,
        })
        .unwrap();
        let reaction = make_reaction(ReactionFamily::CubicSaturating { kappa: 3.0 }).unwrap();
        EnergyModel::new(grad, coeff, Some(reaction), Field::zeros(&g)).unwrap()
    }

    #[test]
    fn zero_field() {
        let m = model(32);
        let z = Field::zeros(m.grid());
        assert_eq!(energy(&m, &z).unwrap(), 0.0);
        assert!(energy_gradient(&m, &z)
            .unwrap()
            .representer
            .values()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn representer_matches_direct_quadrature() {
        let m = model(48);
        let u = Field::from_fn(m.grid(), |x| (3.0 * x[0]).sin() + 0.3).unwrap();
        let phi = Field::from_fn(m.grid(), |x| x[0] * x[0] - 0.2).unwrap();
        let via_rep = energy_gradient(&m, &u).unwrap().pair(&phi).unwrap();
        let direct = directional_derivative(&m, &u, &phi).unwrap();
        assert!((via_rep - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn overflow_is_reported() {
        let m = model(16);
        let u = Field::from_values(m.grid(), vec![1e160; 16]).unwrap();
        assert!(matches!(energy(&m, &u), Err(Error::Overflow { .. })));
    }

    #[test]
    fn paired_scalings() {
        let m = model(32);
        let v = Field::from_fn(m.grid(), |x| x[0] * (1.0 - x[0])).unwrap();
        assert!(weighted_form(&m, 0.0, &v, &v).is_err());
        assert_eq!(convexity_gap(&m, &v, &v).unwrap(), 0.0);
        let c = make_coefficient(CoefficientFamily::Constant { c: 2.0 }).unwrap();
        let z = [0.3, -1.0];
        let expected = c.gamma(0.0) * (0.09 + 1.0);
        assert!((monotonicity_pairing(&c, &z, &[0.0, 0.0]) - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_coefficient_is_the_laplacian_form() {
        let g = build_grid(DomainSpec::interval(0.0, 1.0, 40)).unwrap();
        let grad = Arc::new(assemble_gradient(&g, 0.5, QuadratureParams::default()).unwrap());
        let coeff = make_coefficient(CoefficientFamily::Constant { c: 1.0 }).unwrap();
        let h = Field::from_fn(&g, |x| x[0]).unwrap();
        let m = EnergyModel::new(grad, coeff, None, h.clone()).unwrap();
        let u = Field::from_fn(&g, |x| (x[0] * (1.0 - x[0])).sqrt()).unwrap();
        let lu = apply_laplacian(m.laplacian_operator(), &u).unwrap();
        let expected =
            0.5 * crate::grid::l2_inner(&u, &lu).unwrap() - crate::grid::l2_inner(&h, &u).unwrap();
        assert!((energy(&m, &u).unwrap() - expected).abs() < 1e-14 * expected.abs());
    }

    #[test]
    fn sampled_gradient_energy_matches_laplacian_form() {
        let m = model(128);
        let u = Field::from_fn(m.grid(), |x| (-30.0 * (x[0] - 0.5f64).powi(2)).exp()).unwrap();
        let (g, _) = gradient_with_density(&m, &u).unwrap();
        let ws = m.whole_space_gradient().weights();
        let sampled: f64 = (0..ws.len()).map(|e| ws[e] * dot_at(&g, &g, e)).sum();
        let form = gradient_pairing(&m, &u, &u).unwrap();
        assert!(
            ((sampled - form) / form).abs() < 1e-2,
            "{sampled} vs {form}"
        );
    }

    #[test]
    fn finite_difference_derivative() {
        let m = model(48);
        let u = Field::from_fn(m.grid(), |x| 2.0 * (3.0 * x[0]).sin() + 0.5).unwrap();
        let phi = Field::from_fn(m.grid(), |x| (7.0 * x[0]).cos()).unwrap();
        let eps = 1e-5 * u.l2_norm() / phi.l2_norm();
        let plus = energy(&m, &u.axpy(eps, &phi)).unwrap();
        let minus = energy(&m, &u.axpy(-eps, &phi)).unwrap();
        let fd = (plus - minus) / (2.0 * eps);
        let exact = energy_gradient(&m, &u).unwrap().pair(&phi).unwrap();
        assert!(((fd - exact) / exact).abs() < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn convexity_gap_is_nonnegative() {
        let m = model(48);
        for k in 0..10 {
            let a = k as f64;
            let u1 = Field::from_fn(m.grid(), |x| (a + 1.0) * (x[0] * (a + 2.0)).sin()).unwrap();
            let u2 = Field::from_fn(m.grid(), |x| 3.0 * (x[0] - 0.1 * a).powi(2)).unwrap();
            assert!(convexity_gap(&m, &u1, &u2).unwrap() >= -1e-10);
        }
    }
}
