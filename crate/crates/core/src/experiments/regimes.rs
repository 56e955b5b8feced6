//! Sublinear (`f = ν g`) and linear-growth regimes: sweeps, the `ν`
//! threshold bisection, and the two-solution pipeline.

use rayon::prelude::*;
use serde::Serialize;

use super::{ForcingSpec, RegimeConfig, Setup, ThresholdSpec};
use crate::coeffs::{
    check_ball_condition, check_hypotheses, sublinear_growth_bound, GrowthClass, Hypothesis,
    HypothesisReport,
};
use crate::energy::{sobolev_norm, EnergyModel};
use crate::error::{invalid, Error, Result};
use crate::solvers::{
    default_ball_radius, initial_guess, minimize_cone, mountain_pass, ray_search_below,
    Classification, SolveReport, SolverOptions,
};

/// Scale of the default initial guess `0.1 φ₁` when `h = 0`.
const GUESS_SCALE: f64 = 0.1;
/// Distinctness threshold relative to `max(‖u₁‖, ‖u₂‖, 0.1)`.
const DISTINCT_FRACTION: f64 = 0.1;
const DISTINCT_FLOOR: f64 = 0.1;

const SUBLINEAR: &[Hypothesis] = &[
    Hypothesis::Gamma1,
    Hypothesis::Gamma2,
    Hypothesis::G1,
    Hypothesis::G2,
    Hypothesis::G3,
];
const LINEAR: &[Hypothesis] = &[
    Hypothesis::Gamma1,
    Hypothesis::Gamma2,
    Hypothesis::F1,
    Hypothesis::F3,
    Hypothesis::F4,
];

#[derive(Debug, Clone, Serialize)]
pub struct SublinearRun {
    pub nu: f64,
    pub solve: SolveReport,
    pub nontrivial: bool,
    /// `𝒥(u) < 0 = 𝒥(0)`.
    pub negative_energy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub nu: f64,
    pub nontrivial: bool,
    pub energy: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub nu_star: f64,
    pub lo: f64,
    pub hi: f64,
    /// `hi / lo - 1` at termination.
    pub rel_width: f64,
    /// Every probe below `ν*` trivial and every probe above nontrivial.
    pub monotone: bool,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SublinearReport {
    pub lambda1: f64,
    /// Sampled `C_g = sup |g(t)|/|t|`.
    pub growth_bound: f64,
    pub hypotheses: HypothesisReport,
    pub audit_passed: bool,
    pub runs: Vec<SublinearRun>,
    pub threshold: Option<ThresholdReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GeometryOutcome {
    /// `𝒥(t* φ₁) < 𝒥(u₁)`.
    Satisfied {
        t_star: f64,
        energy_far: f64,
    },
    Violated {
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearRun {
    pub delta: f64,
    pub minimizer: SolveReport,
    pub geometry: GeometryOutcome,
    pub saddle: Option<SolveReport>,
    /// `‖u₁ - u₂‖_{H₀ˢ}`.
    pub separation: Option<f64>,
    pub distinct: bool,
    /// `𝒥(u₂) > 0 ≥ 𝒥(u₁)`.
    pub energies_ordered: bool,
    /// Mountain-pass point found, converged and distinct from `u₁`.
    pub second_solution: bool,
    /// Margin of `R² ≥ C R² + ‖h‖ R` at `R = ‖t* φ₁‖_{L²}`, logged only.
    pub ball_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearReport {
    pub lambda1: f64,
    pub hypotheses: HypothesisReport,
    pub audit_passed: bool,
    pub runs: Vec<LinearRun>,
    /// Largest `δ > 0` for which the two-solution pipeline succeeded.
    pub smallness_bound: Option<f64>,
}

fn audit(setup: &Setup) -> Result<HypothesisReport> {
    let reaction = setup
        .reaction
        .as_ref()
        .ok_or_else(|| invalid("reaction", "regime experiments need a reaction term"))?;
    Ok(check_hypotheses(
        &setup.coefficient,
        reaction,
        setup.lambda1(),
        setup.critical_exponent,
    ))
}

/// `0.01 γ_min λ₁ / C_g`, below the nonexistence bound for nontrivial
/// solutions with `h = 0`.
pub fn nu_small(setup: &Setup) -> Result<f64> {
    let reaction = setup
        .reaction
        .as_ref()
        .ok_or_else(|| invalid("reaction", "missing"))?;
    let c_g = sublinear_growth_bound(reaction)
        .ok_or_else(|| invalid("reaction", "not a sublinear family"))?;
    Ok(0.01 * setup.coefficient.gamma_min * setup.lambda1() / c_g)
}

/// `50 γ_max λ₁`.
pub fn nu_large(setup: &Setup) -> f64 {
    50.0 * setup.coefficient.gamma_max * setup.lambda1()
}

/// [`minimize_cone`] from the default start, with the default ball radius
/// when none is configured.
pub fn minimize_from_default(
    setup: &Setup,
    model: &EnergyModel,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let mut opts = *opts;
    if opts.ball_radius.is_none() {
        opts.ball_radius = default_ball_radius(model, setup.lambda1());
    }
    let u0 = initial_guess(model, setup.phi1(), GUESS_SCALE)?;
    minimize_cone(model, &opts, &u0)
}

/// `Some(true)` for a nontrivial minimizer, `Some(false)` for the trivial
/// one, `None` when the run neither converged nor reached negative energy.
fn nontrivial(report: &SolveReport) -> Option<bool> {
    match report.classification {
        Classification::Trivial => Some(false),
        Classification::LocalMin | Classification::MountainPass => Some(true),
        // 𝒥(0) = 0, so a negative iterate already rules out the trivial minimizer
        Classification::Failed
            if report.energy < 0.0 && report.l2_norm > crate::solvers::TRIVIAL_NORM =>
        {
            Some(true)
        }
        Classification::Failed => None,
    }
}

fn sublinear_model(setup: &Setup, nu: f64) -> Result<EnergyModel> {
    let reaction = setup
        .reaction
        .as_ref()
        .ok_or_else(|| invalid("reaction", "missing"))?;
    Ok(setup.model.with_reaction(Some(reaction.with_nu(nu)?)))
}

fn sublinear_run(setup: &Setup, opts: &SolverOptions, nu: f64) -> Result<SublinearRun> {
    let model = sublinear_model(setup, nu)?;
    let solve = minimize_from_default(setup, &model, opts)?;
    Ok(SublinearRun {
        nu,
        nontrivial: nontrivial(&solve) == Some(true),
        negative_energy: solve.energy < 0.0,
        solve,
    })
}

/// Geometric bisection on `ν` between a trivial and a nontrivial outcome.
pub fn find_nu_threshold(
    setup: &Setup,
    spec: &ThresholdSpec,
    opts: &SolverOptions,
) -> Result<ThresholdReport> {
    let mut lo = match spec.lo {
        Some(v) => v,
        None => nu_small(setup)?,
    };
    let mut hi = spec.hi.unwrap_or_else(|| nu_large(setup));
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::NoBracket(format!(
            "need 0 < lo < hi, got lo = {lo}, hi = {hi}"
        )));
    }
    let mut probes = Vec::new();
    let mut probe = |nu: f64| -> Result<bool> {
        let report = minimize_from_default(setup, &sublinear_model(setup, nu)?, opts)?;
        let verdict = nontrivial(&report).ok_or(Error::NotConverged {
            iterations: report.iterations,
            residual: report.kkt_residual,
        })?;
        probes.push(Probe {
            nu,
            nontrivial: verdict,
            energy: report.energy,
            iterations: report.iterations,
        });
        Ok(verdict)
    };
    if probe(lo)? {
        return Err(Error::NoBracket(format!(
            "lower end ν = {lo} is already nontrivial"
        )));
    }
    if !probe(hi)? {
        return Err(Error::NoBracket(format!(
            "upper end ν = {hi} is still trivial"
        )));
    }
    while hi / lo - 1.0 > spec.rel_width {
        let mid = (lo * hi).sqrt();
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let nu_star = (lo * hi).sqrt();
    let monotone = probes.iter().all(|p| p.nontrivial == (p.nu > nu_star));
    Ok(ThresholdReport {
        nu_star,
        lo,
        hi,
        rel_width: hi / lo - 1.0,
        monotone,
        probes,
    })
}

/// Minimization over the cone for every `ν` of the sweep, plus the threshold
/// bisection when `h = 0` and a threshold is requested.
pub fn run_sublinear_regime(cfg: &RegimeConfig) -> Result<SublinearReport> {
    let setup = Setup::new(cfg)?;
    let reaction = setup
        .reaction
        .ok_or_else(|| invalid("reaction", "sublinear regime needs a reaction"))?;
    if reaction.class != GrowthClass::Sublinear {
        return Err(invalid(
            "reaction",
            "sublinear regime needs a sublinear family",
        ));
    }
    if cfg.sweep.nu.is_empty() {
        return Err(invalid("sweep.nu", "must not be empty"));
    }
    let hypotheses = audit(&setup)?;
    let runs = cfg
        .sweep
        .nu
        .par_iter()
        .map(|&nu| sublinear_run(&setup, &cfg.solver, nu))
        .collect::<Result<Vec<_>>>()?;
    let threshold = match (&cfg.sweep.threshold, &cfg.forcing) {
        (Some(spec), ForcingSpec::Zero) => Some(find_nu_threshold(&setup, spec, &cfg.solver)?),
        _ => None,
    };
    Ok(SublinearReport {
        lambda1: setup.lambda1(),
        growth_bound: sublinear_growth_bound(&reaction).unwrap_or(f64::NAN),
        audit_passed: hypotheses.all_hold(SUBLINEAR),
        hypotheses,
        runs,
        threshold,
    })
}

fn linear_run(
    setup: &Setup,
    cfg: &RegimeConfig,
    model: &EnergyModel,
    delta: f64,
) -> Result<LinearRun> {
    let minimizer = minimize_from_default(setup, model, &cfg.solver)?;
    let level = minimizer.energy;
    let margin = 1e-8 * level.abs().max(1.0);
    let ray = ray_search_below(
        model,
        setup.phi1(),
        cfg.ray.t_max,
        cfg.ray.steps,
        level,
        margin,
    );
    let (geometry, far) = match ray {
        Ok(r) => (
            GeometryOutcome::Satisfied {
                t_star: r.t_star,
                energy_far: r.energy,
            },
            Some(setup.phi1().scaled(r.t_star)),
        ),
        Err(Error::NoSignChange { t_max }) => (
            GeometryOutcome::Violated {
                reason: format!("𝒥(t φ₁) ≥ 𝒥(u₁) on the sampled ray up to t = {t_max}"),
            },
            None,
        ),
        Err(e) => return Err(e),
    };
    let mut run = LinearRun {
        delta,
        geometry,
        saddle: None,
        separation: None,
        distinct: false,
        energies_ordered: false,
        second_solution: false,
        ball_margin: None,
        minimizer,
    };
    let Some(far) = far else {
        return Ok(run);
    };
    if let Some(reaction) = model.reaction() {
        run.ball_margin =
            Some(check_ball_condition(far.l2_norm(), reaction, model.forcing().l2_norm()).margin);
    }
    if run.minimizer.classification == Classification::Failed {
        run.geometry = GeometryOutcome::Violated {
            reason: "first solution did not converge".into(),
        };
        return Ok(run);
    }
    let opts = SolverOptions {
        ball_radius: None,
        ..cfg.solver
    };
    let saddle = match mountain_pass(model, &run.minimizer.solution, &far, &opts) {
        Ok(r) => r,
        Err(Error::Geometry(reason)) => {
            run.geometry = GeometryOutcome::Violated { reason };
            return Ok(run);
        }
        Err(e) => return Err(e),
    };
    let u1 = &run.minimizer.solution;
    let u2 = &saddle.solution;
    let separation = sobolev_norm(model, &u1.axpy(-1.0, u2))?;
    let scale = sobolev_norm(model, u1)?
        .max(sobolev_norm(model, u2)?)
        .max(DISTINCT_FLOOR);
    run.distinct = separation >= DISTINCT_FRACTION * scale;
    run.energies_ordered = saddle.energy > 0.0 && run.minimizer.energy <= 0.0;
    run.second_solution = saddle.classification == Classification::MountainPass && run.distinct;
    run.separation = Some(separation);
    run.saddle = Some(saddle);
    Ok(run)
}

/// Eigenpair, hypothesis audit, minimizer, ray search along `φ₁`, mountain
/// pass and distinctness check for every forcing scale `δ` (`h = δ φ₁`), or
/// once with the configured forcing when the `δ` list is empty.
pub fn run_linear_regime(cfg: &RegimeConfig) -> Result<LinearReport> {
    let setup = Setup::new(cfg)?;
    let reaction = setup
        .reaction
        .ok_or_else(|| invalid("reaction", "linear regime needs a reaction"))?;
    if reaction.class != GrowthClass::Linear {
        return Err(invalid(
            "reaction",
            "linear regime needs a linear-growth family",
        ));
    }
    let hypotheses = audit(&setup)?;
    let cases: Vec<(f64, EnergyModel)> = if cfg.sweep.delta.is_empty() {
        let delta = match cfg.forcing {
            ForcingSpec::Eigen { delta } => delta,
            _ => f64::NAN,
        };
        vec![(delta, setup.model.clone())]
    } else {
        cfg.sweep
            .delta
            .iter()
            .map(|&d| setup.with_eigen_forcing(d).map(|m| (d, m)))
            .collect::<Result<_>>()?
    };
    let runs = cases
        .par_iter()
        .map(|(delta, model)| linear_run(&setup, cfg, model, *delta))
        .collect::<Result<Vec<_>>>()?;
    let smallness_bound = runs
        .iter()
        .filter(|r| r.delta > 0.0 && r.second_solution && r.energies_ordered)
        .map(|r| r.delta)
        .fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |a| a.max(d)))
        });
    Ok(LinearReport {
        lambda1: setup.lambda1(),
        audit_passed: hypotheses.all_hold(LINEAR),
        hypotheses,
        runs,
        smallness_bound,
    })
}
