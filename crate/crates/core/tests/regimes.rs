use fracvar::coeffs::{CoefficientFamily, ReactionFamily};
use fracvar::error::Error;
use fracvar::experiments::{
    find_nu_threshold, nu_small, run_linear_regime, run_sublinear_regime, ForcingSpec,
    GeometryOutcome, RegimeConfig, Setup, SweepSpec, ThresholdSpec,
};
use fracvar::grid::{DomainSpec, Field};
use fracvar::solvers::{mountain_pass, Classification, SolverOptions};

fn saturating(scale: f64) -> RegimeConfig {
    RegimeConfig {
        domain: DomainSpec::interval(0.0, 1.0, 64),
        reaction: Some(ReactionFamily::Saturating { nu: 1.0, scale }),
        sweep: SweepSpec {
            nu: vec![1.0],
            delta: Vec::new(),
            threshold: None,
        },
        ..Default::default()
    }
}

#[test]
fn threshold_halves_when_g_doubles() {
    let spec = ThresholdSpec {
        lo: Some(0.5),
        hi: Some(50.0),
        rel_width: 1e-3,
    };
    let opts = SolverOptions::default();
    let one = find_nu_threshold(&Setup::new(&saturating(1.0)).unwrap(), &spec, &opts).unwrap();
    let two = find_nu_threshold(&Setup::new(&saturating(2.0)).unwrap(), &spec, &opts).unwrap();
    assert!(one.monotone && two.monotone);
    let ratio = two.nu_star / one.nu_star;
    assert!((ratio - 0.5).abs() <= 0.025, "ν*(2g)/ν*(g) = {ratio}");
}

#[test]
fn trivial_bracket_is_rejected() {
    let setup = Setup::new(&saturating(1.0)).unwrap();
    let lo = nu_small(&setup).unwrap();
    let spec = ThresholdSpec {
        lo: Some(lo),
        hi: Some(2.0 * lo),
        rel_width: 1e-2,
    };
    let err = find_nu_threshold(&setup, &spec, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NoBracket(_)), "{err}");
}

#[test]
fn forced_sublinear_runs_are_nontrivial_and_nonnegative() {
    let cfg = RegimeConfig {
        forcing: ForcingSpec::Eigen { delta: 0.01 },
        sweep: SweepSpec {
            nu: vec![0.1, 1.0, 10.0],
            delta: Vec::new(),
            threshold: Some(ThresholdSpec::default()),
        },
        ..saturating(1.0)
    };
    let report = run_sublinear_regime(&cfg).unwrap();
    // the bisection only applies to h = 0
    assert!(report.threshold.is_none());
    assert_eq!(report.runs.len(), 3);
    for r in &report.runs {
        assert!(r.nontrivial, "ν = {}: {:?}", r.nu, r.solve.classification);
        assert!(r.solve.solution.min_value() >= 0.0);
        let bound = 10.0 * r.solve.boundary.ball_radius.expect("default radius");
        assert!(r.solve.max_sobolev_norm <= bound);
    }
}

#[test]
fn sweep_results_come_back_in_sweep_order() {
    let cfg = RegimeConfig {
        sweep: SweepSpec {
            nu: vec![100.0, 0.1, 10.0, 1.0],
            delta: Vec::new(),
            threshold: None,
        },
        ..saturating(1.0)
    };
    let report = run_sublinear_regime(&cfg).unwrap();
    let nus: Vec<f64> = report.runs.iter().map(|r| r.nu).collect();
    assert_eq!(nus, cfg.sweep.nu);
}

#[test]
fn sublinear_regime_refuses_a_linear_reaction() {
    let cfg = RegimeConfig {
        reaction: Some(ReactionFamily::CubicSaturating { kappa: 5.0 }),
        ..saturating(1.0)
    };
    assert!(run_sublinear_regime(&cfg).is_err());
    assert!(run_linear_regime(&saturating(1.0)).is_err());
}

#[test]
fn smallness_bound_is_the_largest_working_delta() {
    let probe = Setup::new(&RegimeConfig {
        domain: DomainSpec::interval(0.0, 1.0, 64),
        ..Default::default()
    })
    .unwrap();
    let kappa = 2.0 * probe.coefficient.gamma_inf * probe.lambda1();
    let cfg = RegimeConfig {
        domain: DomainSpec::interval(0.0, 1.0, 64),
        reaction: Some(ReactionFamily::CubicSaturating { kappa }),
        sweep: SweepSpec {
            delta: vec![1e-3, 1e-2],
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_linear_regime(&cfg).unwrap();
    assert!(report.audit_passed);
    for r in &report.runs {
        assert!(matches!(r.geometry, GeometryOutcome::Satisfied { .. }));
        assert!(r.second_solution && r.energies_ordered, "δ = {}", r.delta);
        assert!(r.ball_margin.is_some());
    }
    assert_eq!(report.smallness_bound, Some(1e-2));
}

#[test]
fn resonant_linear_problem_has_no_mountain_pass() {
    // γ ≡ 1 and f(u) = λ₁u: 𝒥 is flat along φ₁, so there is no strict geometry
    let probe = RegimeConfig {
        domain: DomainSpec::interval(0.0, 1.0, 48),
        coefficient: CoefficientFamily::Constant { c: 1.0 },
        ..Default::default()
    };
    let lambda1 = Setup::new(&probe).unwrap().lambda1();
    let setup = Setup::new(&RegimeConfig {
        reaction: Some(ReactionFamily::Linear { kappa: lambda1 }),
        ..probe
    })
    .unwrap();
    let opts = SolverOptions {
        max_iterations: 300,
        ..Default::default()
    };
    let zero = Field::zeros(&setup.grid);
    let far = setup.phi1().scaled(10.0);
    match mountain_pass(&setup.model, &zero, &far, &opts) {
        Err(Error::Geometry(_)) => {}
        Ok(report) => assert_eq!(
            report.classification,
            Classification::Failed,
            "{:?}",
            report.message
        ),
        Err(e) => panic!("unexpected error {e}"),
    }
}
