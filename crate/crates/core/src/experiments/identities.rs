//! Identity suite: duality, divergence against direct quadrature, composition
//! with the Laplacian, the sign pattern of the positive and negative parts of
//! the identity function, and the energy calculus checks.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bump, random_smooth_field, stream};
use crate::coeffs::{make_coefficient, make_reaction, CoefficientFamily, ReactionFamily};
use crate::energy::{convexity_gap, energy, energy_gradient, monotonicity_pairing, EnergyModel};
use crate::error::{invalid, Result};
use crate::fracops::{
    apply_divergence, apply_gradient, assemble_gradient, assemble_laplacian, composition_residual,
    normalizing_constants, NonlocalOperator, QuadratureParams,
};
use crate::grid::{build_grid, l2_inner, DomainSpec, Field, Grid, VectorField};
use crate::quadrature::GaussLegendre;

pub const DUALITY_TOL: f64 = 1e-12;
pub const DIVERGENCE_TOL: f64 = 0.02;
pub const COMPOSITION_TOL: f64 = 0.05;
pub const COMPOSITION_2D_TOL: f64 = 0.10;
pub const FD_TOL: f64 = 1e-5;
pub const CONVEXITY_TOL: f64 = 1e-10;
pub const MONOTONICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignSpec {
    pub s: f64,
    /// The line is truncated to `(-width/2, width/2)`.
    pub width: f64,
    pub nodes: usize,
    /// Sample points satisfy `sample_min ≤ |x| ≤ sample_max`.
    pub sample_min: f64,
    pub sample_max: f64,
}

impl Default for SignSpec {
    fn default() -> Self {
        Self {
            s: 0.5,
            width: 32.0,
            nodes: 512,
            sample_min: 0.25,
            sample_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySpec {
    pub domain: DomainSpec,
    pub s: f64,
    pub coefficient: CoefficientFamily,
    pub reaction: ReactionFamily,
    pub fd_pairs: usize,
    pub convexity_pairs: usize,
    pub monotonicity_pairs: usize,
}

impl Default for EnergySpec {
    fn default() -> Self {
        Self {
            domain: DomainSpec::interval(0.0, 1.0, 64),
            s: 0.5,
            coefficient: super::default_coefficient(),
            reaction: ReactionFamily::CubicSaturating { kappa: 3.0 },
            fd_pairs: 20,
            convexity_pairs: 100,
            monotonicity_pairs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoDSpec {
    pub nodes: usize,
    pub s: f64,
}

impl Default for TwoDSpec {
    fn default() -> Self {
        Self { nodes: 32, s: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub bounds: [f64; 2],
    pub nodes: usize,
    pub orders: Vec<f64>,
    pub quadrature: QuadratureParams,
    /// Random pairs for the duality check.
    pub pairs: usize,
    pub sign: SignSpec,
    pub energy: EnergySpec,
    pub two_d: Option<TwoDSpec>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            bounds: [-1.0, 1.0],
            nodes: 256,
            orders: vec![0.3, 0.5, 0.7],
            quadrature: QuadratureParams::default(),
            pairs: 20,
            sign: SignSpec::default(),
            energy: EnergySpec::default(),
            two_d: Some(TwoDSpec::default()),
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        DomainSpec::interval(self.bounds[0], self.bounds[1], self.nodes).validate()?;
        for s in self.orders.iter().chain([&self.sign.s, &self.energy.s]) {
            if !(*s > 0.0 && *s < 1.0) {
                return Err(invalid(
                    "verify.orders",
                    format!("orders must lie in (0, 1), got {s}"),
                ));
            }
        }
        if self.orders.is_empty() {
            return Err(invalid("verify.orders", "must not be empty"));
        }
        let sg = &self.sign;
        if !(sg.width > 0.0
            && sg.sample_min > 0.0
            && sg.sample_min < sg.sample_max
            && sg.sample_max < sg.width / 2.0)
        {
            return Err(invalid(
                "verify.sign",
                "need 0 < sample_min < sample_max < width/2",
            ));
        }
        self.energy.domain.validate()?;
        make_coefficient(self.energy.coefficient)?;
        make_reaction(self.energy.reaction)?;
        if let Some(t) = &self.two_d {
            if !(t.s > 0.0 && t.s < 1.0) {
                return Err(invalid("verify.two_d.s", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }

    /// `value > 0`.
    fn positive(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: 0.0,
            passed: value > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionRow {
    pub dim: usize,
    pub s: f64,
    pub nodes: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<IdentityCheck>,
    pub composition: Vec<CompositionRow>,
    pub all_passed: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `μ PV∫_{lo}^{hi} sign(y - x)|y - x|^{-1-s}(f(y) - f(x)) dy` for
/// `lo < x < hi`, by Gauss–Legendre after the substitution
/// `r = ρ^{1/(1-s)}` on the symmetric part. `breaks` lists points where `f`
/// has kinks.
pub fn riesz_quadrature_1d(
    mu: f64,
    s: f64,
    f: &dyn Fn(f64) -> f64,
    x: f64,
    lo: f64,
    hi: f64,
    breaks: &[f64],
) -> f64 {
    let gl = GaussLegendre::new(16);
    let fx = f(x);
    let m = (x - lo).min(hi - x);
    // radii at which x ± r meets a kink
    let mut radii: Vec<f64> = breaks
        .iter()
        .map(|b| (b - x).abs())
        .filter(|r| *r > 0.0)
        .collect();
    radii.sort_by(f64::total_cmp);
    let q = 1.0 - s;
    let symmetric = |r0: f64, r1: f64| {
        let (a, b) = (r0.powf(q), r1.powf(q));
        gl.composite(a, b, 8, |rho| {
            let r = rho.powf(1.0 / q);
            (f(x + r) - f(x - r)) * rho.powf(-1.0 / q) / q
        })
    };
    let mut total = 0.0;
    let mut r0 = 0.0;
    for r in radii.iter().copied().filter(|r| *r < m).chain([m]) {
        if r > r0 {
            total += symmetric(r0, r);
            r0 = r;
        }
    }
    // one-sided remainder beyond the symmetric window
    let one_sided = |sign: f64, r0: f64, r1: f64| {
        let mut pts = vec![r0];
        pts.extend(radii.iter().copied().filter(|r| *r > r0 && *r < r1));
        pts.push(r1);
        let mut acc = 0.0;
        for w in pts.windows(2) {
            // geometric panels resolve the r^{-1-s} decay
            let panels = ((w[1] / w[0]).ln().max(0.0) * 4.0).ceil().max(4.0) as usize;
            let ratio = (w[1] / w[0]).powf(1.0 / panels as f64);
            let mut a = w[0];
            for _ in 0..panels {
                let b = a * ratio;
                acc += gl.integrate(a, b, |r| sign * r.powf(-1.0 - s) * (f(x + sign * r) - fx));
                a = b;
            }
        }
        acc
    };
    if hi - x > m {
        total += one_sided(1.0, m, hi - x);
    }
    if x - lo > m {
        total += one_sided(-1.0, m, x - lo);
    }
    mu * total
}

fn relative_duality(op: &NonlocalOperator, u: &Field, phi: &VectorField) -> Result<f64> {
    let a = l2_inner(u, &apply_divergence(op, phi)?)?;
    let b = phi.l2_inner(&apply_gradient(op, u)?)?;
    Ok((a + b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
}

fn duality_check(op: &NonlocalOperator, pairs: usize, seed: u64, label: &str) -> Result<f64> {
    let grid = op.grid();
    let mut rng = stream(seed, label);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = random_smooth_field(grid, &mut rng)?;
        let comps = (0..grid.dim())
            .map(|_| random_smooth_field(grid, &mut rng).map(Field::into_values))
            .collect::<Result<Vec<_>>>()?;
        let phi = VectorField::from_components(grid, comps)?;
        worst = worst.max(relative_duality(op, &u, &phi)?);
    }
    Ok(worst)
}

fn smooth_bump_1d(x: f64, c: f64, half: f64) -> f64 {
    let r = (x - c) / half;
    if r.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// `‖divˢφ - D φ‖ / ‖D φ‖` with `D φ` from [`riesz_quadrature_1d`] and `φ` a
/// smooth bump supported in the middle 60% of the interval.
fn divergence_agreement(op: &NonlocalOperator, bounds: [f64; 2]) -> Result<f64> {
    let grid = op.grid();
    let c = 0.5 * (bounds[0] + bounds[1]);
    let half = 0.3 * (bounds[1] - bounds[0]);
    let f = |x: f64| smooth_bump_1d(x, c, half);
    let phi = Field::from_fn(grid, |x| f(x[0]))?;
    let discrete = apply_divergence(
        op,
        &VectorField::from_components(grid, vec![phi.into_values()])?,
    )?;
    let (mu, _) = normalizing_constants(1, op.order())?;
    let reach = bounds[1] - bounds[0] + 2.0 * half;
    let direct: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.coord(i)[0];
            riesz_quadrature_1d(
                mu,
                op.order(),
                &f,
                x,
                x - reach,
                x + reach,
                &[c - half, c + half],
            )
        })
        .collect();
    let direct = Field::from_values(grid, direct)?;
    Ok(discrete.axpy(-1.0, &direct).l2_norm() / direct.l2_norm())
}

fn composition(grid: &Arc<Grid>, s: f64, q: QuadratureParams) -> Result<f64> {
    let grad = assemble_gradient(grid, s, q)?;
    let lap = assemble_laplacian(grid, s, q)?;
    composition_residual(&grad, &lap, &bump(grid, 0.6)?)
}

struct SignPattern {
    plus_right: f64,
    plus_left: f64,
    minus_right: f64,
    minus_left: f64,
    pairing: f64,
    direct_plus: f64,
    direct_minus: f64,
}

/// Positive and negative parts of `u(x) = x` on the truncated line. Values
/// are oriented so that the expected sign is positive: `min ∇ˢu₊` and
/// `-max ∇ˢu₋` over the samples, and `-⟨∇ˢu₊, ∇ˢu₋⟩`.
fn sign_pattern(spec: &SignSpec, q: QuadratureParams) -> Result<SignPattern> {
    let half = 0.5 * spec.width;
    let grid = build_grid(DomainSpec::interval(-half, half, spec.nodes))?;
    let op = assemble_gradient(&grid, spec.s, q)?;
    let up = Field::from_fn(&grid, |x| x[0].max(0.0))?;
    let um = Field::from_fn(&grid, |x| (-x[0]).max(0.0))?;
    let gp = apply_gradient(&op, &up)?;
    let gm = apply_gradient(&op, &um)?;
    let sampled = |x: f64| (spec.sample_min..=spec.sample_max).contains(&x.abs());
    let mut out = SignPattern {
        plus_right: f64::INFINITY,
        plus_left: f64::INFINITY,
        minus_right: f64::INFINITY,
        minus_left: f64::INFINITY,
        pairing: -gp.l2_inner(&gm)?,
        direct_plus: f64::INFINITY,
        direct_minus: f64::INFINITY,
    };
    for i in 0..grid.len() {
        let x = grid.coord(i)[0];
        if !sampled(x) {
            continue;
        }
        let (p, m) = (gp.component(0)[i], -gm.component(0)[i]);
        if x > 0.0 {
            out.plus_right = out.plus_right.min(p);
            out.minus_right = out.minus_right.min(m);
        } else {
            out.plus_left = out.plus_left.min(p);
            out.minus_left = out.minus_left.min(m);
        }
    }
    // truncated integrals, independent of the lattice
    let (mu, _) = normalizing_constants(1, spec.s)?;
    let mut points = Vec::new();
    let mut x = spec.sample_min;
    while x <= spec.sample_max {
        points.extend([x, -x]);
        x *= 2.0;
    }
    let fp = |y: f64| y.max(0.0);
    let fm = |y: f64| (-y).max(0.0);
    for x in points {
        let p = riesz_quadrature_1d(mu, spec.s, &fp, x, -half, half, &[0.0]);
        let m = riesz_quadrature_1d(mu, spec.s, &fm, x, -half, half, &[0.0]);
        out.direct_plus = out.direct_plus.min(p);
        out.direct_minus = out.direct_minus.min(-m);
    }
    Ok(out)
}

struct EnergyChecks {
    fd: f64,
    convexity: f64,
    monotonicity: f64,
    strict: f64,
}

fn energy_checks(spec: &EnergySpec, q: QuadratureParams, seed: u64) -> Result<EnergyChecks> {
    let grid = build_grid(spec.domain.clone())?;
    let grad = Arc::new(assemble_gradient(&grid, spec.s, q)?);
    let coeff = make_coefficient(spec.coefficient)?;
    let reaction = make_reaction(spec.reaction)?;
    let mut rng = stream(seed, "energy");
    let h = random_smooth_field(&grid, &mut rng)?;
    let model = EnergyModel::new(grad, coeff, Some(reaction), h)?;

    let mut fd: f64 = 0.0;
    for _ in 0..spec.fd_pairs {
        let u = random_smooth_field(&grid, &mut rng)?.scaled(3.0);
        let phi = random_smooth_field(&grid, &mut rng)?;
        let eps = 1e-5 * u.l2_norm() / phi.l2_norm();
        let plus = energy(&model, &u.axpy(eps, &phi))?;
        let minus = energy(&model, &u.axpy(-eps, &phi))?;
        let central = (plus - minus) / (2.0 * eps);
        let exact = energy_gradient(&model, &u)?.pair(&phi)?;
        fd = fd.max(((central - exact) / exact).abs());
    }

    let mut convexity = f64::INFINITY;
    for _ in 0..spec.convexity_pairs {
        let a = 10f64.powf(rng.random_range(-1.0..2.0));
        let u1 = random_smooth_field(&grid, &mut rng)?.scaled(a);
        let u2 = random_smooth_field(&grid, &mut rng)?.scaled(a);
        convexity = convexity.min(convexity_gap(&model, &u1, &u2)?);
    }

    let mut monotonicity = f64::INFINITY;
    let mut strict = f64::INFINITY;
    let dim = grid.dim().max(2);
    for _ in 0..spec.monotonicity_pairs {
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let z1: Vec<f64> = (0..dim)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let z2: Vec<f64> = (0..dim)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let pairing = monotonicity_pairing(&coeff, &z1, &z2);
        monotonicity = monotonicity.min(pairing);
        let dist2: f64 = z1.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum();
        if dist2 >= 1e-6 {
            strict = strict.min(pairing / dist2);
        }
    }
    Ok(EnergyChecks {
        fd,
        convexity,
        monotonicity,
        strict,
    })
}

/// Runs every identity check and collects the measured values.
pub fn verify_identities(cfg: &VerifyConfig, seed: u64) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let [a, b] = cfg.bounds;
    let coarse = build_grid(DomainSpec::interval(a, b, cfg.nodes))?;
    let fine = build_grid(DomainSpec::interval(a, b, 2 * cfg.nodes))?;
    for &s in &cfg.orders {
        let op = assemble_gradient(&coarse, s, cfg.quadrature)?;
        let dual = duality_check(&op, cfg.pairs, seed, &format!("duality-{s}"))?;
        checks.push(IdentityCheck::at_most(
            format!("duality s={s}"),
            dual,
            DUALITY_TOL,
        ));
        let div = divergence_agreement(&op, cfg.bounds)?;
        checks.push(IdentityCheck::at_most(
            format!("divergence quadrature s={s}"),
            div,
            DIVERGENCE_TOL,
        ));
        let r1 = composition(&coarse, s, cfg.quadrature)?;
        let r2 = composition(&fine, s, cfg.quadrature)?;
        rows.push(CompositionRow {
            dim: 1,
            s,
            nodes: cfg.nodes,
            residual: r1,
        });
        rows.push(CompositionRow {
            dim: 1,
            s,
            nodes: 2 * cfg.nodes,
            residual: r2,
        });
        checks.push(IdentityCheck::at_most(
            format!("composition s={s}"),
            r1,
            COMPOSITION_TOL,
        ));
        checks.push(IdentityCheck::positive(
            format!("composition decrease s={s}"),
            r1 - r2,
        ));
    }

    let sign = sign_pattern(&cfg.sign, cfg.quadrature)?;
    checks.push(IdentityCheck::positive(
        "sign grad u+ on x>0",
        sign.plus_right,
    ));
    checks.push(IdentityCheck::positive(
        "sign grad u+ on x<0",
        sign.plus_left,
    ));
    checks.push(IdentityCheck::positive(
        "sign -grad u- on x>0",
        sign.minus_right,
    ));
    checks.push(IdentityCheck::positive(
        "sign -grad u- on x<0",
        sign.minus_left,
    ));
    checks.push(IdentityCheck::positive(
        "sign -<grad u+, grad u->",
        sign.pairing,
    ));
    checks.push(IdentityCheck::positive(
        "sign grad u+ direct",
        sign.direct_plus,
    ));
    checks.push(IdentityCheck::positive(
        "sign -grad u- direct",
        sign.direct_minus,
    ));

    let e = energy_checks(&cfg.energy, cfg.quadrature, seed)?;
    checks.push(IdentityCheck::at_most(
        "energy finite difference",
        e.fd,
        FD_TOL,
    ));
    checks.push(IdentityCheck::at_least(
        "convexity gap",
        e.convexity,
        -CONVEXITY_TOL,
    ));
    checks.push(IdentityCheck::at_least(
        "monotonicity pairing",
        e.monotonicity,
        -MONOTONICITY_TOL,
    ));
    checks.push(IdentityCheck::at_least(
        "strict monotonicity",
        e.strict,
        1e-12,
    ));

    if let Some(two) = &cfg.two_d {
        let grid = build_grid(DomainSpec::rectangle((a, b), (a, b), two.nodes, two.nodes))?;
        let op = assemble_gradient(&grid, two.s, cfg.quadrature)?;
        let dual = duality_check(&op, cfg.pairs, seed, "duality-2d")?;
        checks.push(IdentityCheck::at_most(
            format!("duality 2d s={}", two.s),
            dual,
            DUALITY_TOL,
        ));
        let r = composition(&grid, two.s, cfg.quadrature)?;
        rows.push(CompositionRow {
            dim: 2,
            s: two.s,
            nodes: two.nodes,
            residual: r,
        });
        checks.push(IdentityCheck::at_most(
            format!("composition 2d s={}", two.s),
            r,
            COMPOSITION_2D_TOL,
        ));
    }

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        checks,
        composition: rows,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_quadrature_of_a_linear_ramp() {
        // for f(y) = y on (-L, L): μ ∫ |r|^{-s} dr over the window, in closed form
        let s = 0.5;
        let (mu, _) = normalizing_constants(1, s).unwrap();
        let f = |y: f64| y;
        for (x, lo, hi) in [(0.0, -1.0, 1.0), (0.3, -1.0, 1.0), (-0.7, -2.0, 1.0)] {
            let value = riesz_quadrature_1d(mu, s, &f, x, lo, hi, &[]);
            let exact = mu * ((hi - x).powf(1.0 - s) + (x - lo).powf(1.0 - s)) / (1.0 - s);
            assert!((value - exact).abs() <= 1e-10 * exact, "{value} vs {exact}");
        }
    }

    #[test]
    fn direct_quadrature_of_odd_power() {
        // f(y) = y³ on a symmetric window around 0 integrates sign(r)|r|^{-1-s} r³
        let s = 0.3;
        let f = |y: f64| y * y * y;
        let value = riesz_quadrature_1d(1.0, s, &f, 0.0, -2.0, 2.0, &[]);
        let exact = 2.0 * 2f64.powf(3.0 - s) / (3.0 - s);
        assert!((value - exact).abs() <= 1e-10 * exact, "{value} vs {exact}");
    }

    #[test]
    fn small_suite_passes() {
        let cfg = VerifyConfig {
            nodes: 96,
            orders: vec![0.5],
            pairs: 3,
            sign: SignSpec {
                nodes: 128,
                ..SignSpec::default()
            },
            energy: EnergySpec {
                fd_pairs: 3,
                convexity_pairs: 5,
                monotonicity_pairs: 50,
                ..EnergySpec::default()
            },
            two_d: None,
            ..VerifyConfig::default()
        };
        let report = verify_identities(&cfg, 7).unwrap();
        for c in &report.checks {
            println!("{:40} {:12.4e} {}", c.name, c.value, c.passed);
        }
        assert!(report.check("duality s=0.5").unwrap().passed);
        assert!(report.check("energy finite difference").unwrap().passed);
    }
}
