//! Regime experiments for the sublinear and linear-growth reactions, the
//! operator/energy identity suite, and the large-argument convergence check
//! of the quasilinear form.

mod appendix;
mod identities;
mod regimes;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{
    critical_exponent, make_coefficient, make_reaction, CoefficientFamily, CoefficientModel,
    ReactionFamily, ReactionModel,
};
use crate::energy::EnergyModel;
use crate::error::{invalid, Result};
use crate::fracops::{assemble_gradient, NonlocalOperator, QuadratureParams};
use crate::grid::{build_grid, DomainSpec, Field, Grid};
use crate::solvers::SolverOptions;
use crate::spectral::{first_eigenpair, EigenPair, DEFAULT_TOL};

pub use appendix::{appendix_convergence, AppendixConfig, ConvergenceReport, ConvergenceRow};
pub use identities::{
    riesz_quadrature_1d, verify_identities, CompositionRow, IdentityCheck, VerificationReport,
    VerifyConfig,
};
pub use regimes::{
    find_nu_threshold, minimize_from_default, nu_large, nu_small, run_linear_regime,
    run_sublinear_regime, GeometryOutcome, LinearReport, LinearRun, Probe, SublinearReport,
    SublinearRun, ThresholdReport,
};

/// Forcing term `h`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    Zero,
    /// `h = δ φ₁`.
    Eigen {
        delta: f64,
    },
    Constant {
        value: f64,
    },
    /// Nodal values in grid order.
    Values {
        values: Vec<f64>,
    },
}

/// Bracket and resolution of the `ν` threshold bisection. Missing ends
/// default to [`nu_small`] and [`nu_large`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSpec {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub rel_width: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            lo: None,
            hi: None,
            rel_width: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Multipliers `ν` for the sublinear regime.
    pub nu: Vec<f64>,
    /// Forcing scales `δ` (`h = δ φ₁`) for the linear regime. Empty means a
    /// single run with the configured forcing.
    pub delta: Vec<f64>,
    /// Bisection on `ν` (sublinear regime with `h = 0` only).
    pub threshold: Option<ThresholdSpec>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            nu: vec![0.1, 1.0, 10.0],
            delta: vec![1e-3, 1e-2, 1e-1],
            threshold: Some(ThresholdSpec::default()),
        }
    }
}

/// Log-grid ray search along `φ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaySpec {
    pub t_max: f64,
    pub steps: usize,
}

impl Default for RaySpec {
    fn default() -> Self {
        Self {
            t_max: 1e3,
            steps: 241,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub s: f64,
    #[serde(default)]
    pub quadrature: QuadratureParams,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        Self {
            s: 0.5,
            quadrature: QuadratureParams::default(),
        }
    }
}

pub fn default_coefficient() -> CoefficientFamily {
    CoefficientFamily::Paper {
        a: 1.0,
        b: 2.0,
        p: 1.5,
    }
}

pub fn default_domain() -> DomainSpec {
    DomainSpec::interval(0.0, 1.0, 128)
}

/// Everything a regime experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    #[serde(default = "default_domain")]
    pub domain: DomainSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default = "default_coefficient")]
    pub coefficient: CoefficientFamily,
    #[serde(default)]
    pub reaction: Option<ReactionFamily>,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub ray: RaySpec,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            domain: default_domain(),
            operator: OperatorSpec::default(),
            coefficient: default_coefficient(),
            reaction: None,
            forcing: ForcingSpec::Zero,
            solver: SolverOptions::default(),
            sweep: SweepSpec::default(),
            ray: RaySpec::default(),
        }
    }
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let s = self.operator.s;
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid(
                "operator.s",
                format!("must lie in (0, 1), got {s}"),
            ));
        }
        make_coefficient(self.coefficient)?;
        if let Some(r) = self.reaction {
            make_reaction(r)?;
        }
        self.solver.validate()?;
        if self.sweep.nu.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("sweep.nu", "values must be positive"));
        }
        if self
            .sweep
            .delta
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(invalid("sweep.delta", "values must be nonnegative"));
        }
        if let Some(t) = self.sweep.threshold {
            if !(t.rel_width > 0.0 && t.rel_width.is_finite()) {
                return Err(invalid("sweep.threshold.rel_width", "must be positive"));
            }
            for (name, v) in [("sweep.threshold.lo", t.lo), ("sweep.threshold.hi", t.hi)] {
                if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                    return Err(invalid(name, "must be positive"));
                }
            }
        }
        if !(self.ray.t_max > 0.0 && self.ray.t_max.is_finite()) || self.ray.steps < 2 {
            return Err(invalid("ray", "need t_max > 0 and at least two steps"));
        }
        match &self.forcing {
            ForcingSpec::Eigen { delta } if !(*delta >= 0.0 && delta.is_finite()) => {
                Err(invalid("forcing.delta", "must be nonnegative"))
            }
            ForcingSpec::Constant { value } if !value.is_finite() => {
                Err(invalid("forcing.value", "must be finite"))
            }
            ForcingSpec::Values { values } => {
                let n: usize = self.domain.nodes.iter().product();
                if values.len() != n {
                    return Err(invalid(
                        "forcing.values",
                        format!("expected {n} nodal values, got {}", values.len()),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Assembled operators, first eigenpair and models for one configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Arc<Grid>,
    pub gradient: Arc<NonlocalOperator>,
    pub coefficient: CoefficientModel,
    pub reaction: Option<ReactionModel>,
    pub eigen: EigenPair,
    /// Model with the configured forcing.
    pub model: EnergyModel,
    /// Critical exponent `2d/(d - 2s)` used by the hypothesis audit.
    pub critical_exponent: f64,
}

impl Setup {
    pub fn new(cfg: &RegimeConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = build_grid(cfg.domain.clone())?;
        let gradient = Arc::new(assemble_gradient(
            &grid,
            cfg.operator.s,
            cfg.operator.quadrature,
        )?);
        let coefficient = make_coefficient(cfg.coefficient)?;
        let reaction = cfg.reaction.map(make_reaction).transpose()?;
        let bare = EnergyModel::new(gradient.clone(), coefficient, reaction, Field::zeros(&grid))?;
        let eigen = first_eigenpair(bare.laplacian_operator(), DEFAULT_TOL)?;
        let forcing = forcing_field(&cfg.forcing, &grid, &eigen.vector)?;
        let model = bare.with_forcing(forcing)?;
        Ok(Self {
            critical_exponent: critical_exponent(grid.dim(), cfg.operator.s),
            grid,
            gradient,
            coefficient,
            reaction,
            eigen,
            model,
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.eigen.lambda
    }

    pub fn phi1(&self) -> &Field {
        &self.eigen.vector
    }

    /// Model with `h = δ φ₁`.
    pub fn with_eigen_forcing(&self, delta: f64) -> Result<EnergyModel> {
        self.model.with_forcing(self.phi1().scaled(delta))
    }
}

pub fn forcing_field(spec: &ForcingSpec, grid: &Arc<Grid>, phi1: &Field) -> Result<Field> {
    match spec {
        ForcingSpec::Zero => Ok(Field::zeros(grid)),
        ForcingSpec::Eigen { delta } => Ok(phi1.scaled(*delta)),
        ForcingSpec::Constant { value } => Field::from_fn(grid, |_| *value),
        ForcingSpec::Values { values } => Field::from_values(grid, values.clone()),
    }
}

/// Smooth random field: a random combination of the first eight sine modes
/// per axis of the box, vanishing on its boundary.
pub fn random_smooth_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Result<Field> {
    const MODES: usize = 8;
    let d = grid.dim();
    let bounds: Vec<[f64; 2]> = grid.spec().bounds.clone();
    let coeffs: Vec<f64> = (0..MODES.pow(d as u32))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let phase = |x: f64, k: usize| {
        let [a, b] = bounds[k];
        std::f64::consts::PI * (x - a) / (b - a)
    };
    Field::from_fn(grid, |x| {
        let mut acc = 0.0;
        for (idx, c) in coeffs.iter().enumerate() {
            let mut term = *c;
            let mut rest = idx;
            for (k, xk) in x.iter().enumerate().take(d) {
                let m = rest % MODES + 1;
                rest /= MODES;
                term *= (m as f64 * phase(*xk, k)).sin() / m as f64;
            }
            acc += term;
        }
        acc
    })
}

/// Deterministic generator for a named stream derived from `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let salt = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    });
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - r²))` on the ellipse
/// inscribed in the middle `fraction` of the box.
pub fn bump(grid: &Arc<Grid>, fraction: f64) -> Result<Field> {
    let bounds = grid.spec().bounds.clone();
    Field::from_fn(grid, |x| {
        let r2: f64 = x
            .iter()
            .zip(&bounds)
            .map(|(xk, [a, b])| {
                let c = 0.5 * (a + b);
                let half = 0.5 * fraction * (b - a);
                ((xk - c) / half).powi(2)
            })
            .sum();
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}
