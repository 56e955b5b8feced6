//! Diffusivity coefficients `γ`/`Γ`, reaction terms `f`/`F`, and a sampled
//! audit of the standing structural hypotheses on them.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Built-in diffusivity families, tagged by `family` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientFamily {
    /// `Γ(t) = At + B[(1+t)^{p/2} - 1]`, `1 < p < 2`.
    Paper {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
        p: f64,
    },
    /// `γ ≡ c`.
    Constant { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub family: CoefficientFamily,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_inf: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be finite and positive, got {v}"),
        ))
    }
}

pub fn make_coefficient(family: CoefficientFamily) -> Result<CoefficientModel> {
    match family {
        CoefficientFamily::Paper { a, b, p } => {
            positive("coefficient.A", a)?;
            positive("coefficient.B", b)?;
            if !(p > 1.0 && p < 2.0) {
                return Err(invalid(
                    "coefficient.p",
                    format!("must lie in (1, 2), got {p}"),
                ));
            }
            Ok(CoefficientModel {
                family,
                gamma_min: a,
                gamma_max: a + b * p / 2.0,
                gamma_inf: a,
            })
        }
        CoefficientFamily::Constant { c } => {
            positive("coefficient.c", c)?;
            Ok(CoefficientModel {
                family,
                gamma_min: c,
                gamma_max: c,
                gamma_inf: c,
            })
        }
    }
}

impl CoefficientModel {
    /// `γ(t)` for `t ≥ 0`.
    pub fn gamma(&self, t: f64) -> f64 {
        match self.family {
            CoefficientFamily::Paper { a, b, p } => {
                a + b * p / 2.0 * ((p / 2.0 - 1.0) * t.ln_1p()).exp()
            }
            CoefficientFamily::Constant { c } => c,
        }
    }

    /// `Γ(t) = ∫₀ᵗ γ`.
    pub fn big_gamma(&self, t: f64) -> f64 {
        match self.family {
            CoefficientFamily::Paper { a, b, p } => a * t + b * (p / 2.0 * t.ln_1p()).exp_m1(),
            CoefficientFamily::Constant { c } => c * t,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, CoefficientFamily::Constant { .. })
    }
}

/// Built-in reaction families, tagged by `family` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReactionFamily {
    /// `f = ν g` with `g(t) = scale · t / (1 + |t|)`.
    Saturating {
        nu: f64,
        #[serde(default = "unit")]
        scale: f64,
    },
    /// `f(t) = κ t³ / (1 + t²)`.
    CubicSaturating { kappa: f64 },
    /// `f(t) = κ t`.
    Linear { kappa: f64 },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthClass {
    Sublinear,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionModel {
    pub family: ReactionFamily,
    pub class: GrowthClass,
    /// Constant of the linear bound `f(t) ≤ C t` for `t > t₀`.
    pub linear_bound: f64,
    pub onset: f64,
    /// `lim f(t)/t` as `t → ∞`.
    pub slope_inf: f64,
}

/// Slope used for the linear bound of the saturating family.
const SATURATING_BOUND: f64 = 0.5;

pub fn make_reaction(family: ReactionFamily) -> Result<ReactionModel> {
    match family {
        ReactionFamily::Saturating { nu, scale } => {
            positive("reaction.nu", nu)?;
            positive("reaction.scale", scale)?;
            Ok(ReactionModel {
                family,
                class: GrowthClass::Sublinear,
                linear_bound: SATURATING_BOUND,
                onset: (nu * scale / SATURATING_BOUND - 1.0).max(0.0),
                slope_inf: 0.0,
            })
        }
        ReactionFamily::CubicSaturating { kappa } | ReactionFamily::Linear { kappa } => {
            positive("reaction.kappa", kappa)?;
            Ok(ReactionModel {
                family,
                class: GrowthClass::Linear,
                linear_bound: kappa,
                onset: 0.0,
                slope_inf: kappa,
            })
        }
    }
}

impl ReactionModel {
    pub fn f(&self, t: f64) -> f64 {
        match self.family {
            ReactionFamily::Saturating { nu, scale } => nu * scale * t / (1.0 + t.abs()),
            ReactionFamily::CubicSaturating { kappa } => kappa * t * t * t / (1.0 + t * t),
            ReactionFamily::Linear { kappa } => kappa * t,
        }
    }

    /// `F(t) = ∫₀ᵗ f`.
    pub fn big_f(&self, t: f64) -> f64 {
        match self.family {
            ReactionFamily::Saturating { nu, scale } => nu * scale * (t.abs() - t.abs().ln_1p()),
            ReactionFamily::CubicSaturating { kappa } => kappa * 0.5 * (t * t - (t * t).ln_1p()),
            ReactionFamily::Linear { kappa } => 0.5 * kappa * t * t,
        }
    }

    /// Multiplier `ν` of a sublinear family.
    pub fn nu(&self) -> Option<f64> {
        match self.family {
            ReactionFamily::Saturating { nu, .. } => Some(nu),
            _ => None,
        }
    }

    /// The profile `g` of a sublinear family (`f = ν g`).
    pub fn g(&self, t: f64) -> Option<f64> {
        self.nu().map(|nu| self.f(t) / nu)
    }

    pub fn big_g(&self, t: f64) -> Option<f64> {
        self.nu().map(|nu| self.big_f(t) / nu)
    }

    /// Same family with `ν` replaced (sublinear families only).
    pub fn with_nu(&self, nu: f64) -> Result<ReactionModel> {
        match self.family {
            ReactionFamily::Saturating { scale, .. } => {
                make_reaction(ReactionFamily::Saturating { nu, scale })
            }
            _ => Err(invalid("reaction.nu", "only sublinear families carry ν")),
        }
    }

    /// `f′(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        match self.family {
            ReactionFamily::Saturating { nu, scale } => nu * scale,
            ReactionFamily::CubicSaturating { .. } => 0.0,
            ReactionFamily::Linear { kappa } => kappa,
        }
    }
}

/// Critical Sobolev exponent `2d/(d-2s)`, infinite when `d ≤ 2s`.
pub fn critical_exponent(d: usize, s: f64) -> f64 {
    let d = d as f64;
    if d <= 2.0 * s {
        f64::INFINITY
    } else {
        2.0 * d / (d - 2.0 * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Gamma1,
    Gamma2,
    F1,
    F2,
    F3,
    F4,
    G1,
    G2,
    G3,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::Gamma1 => "γ1",
            Hypothesis::Gamma2 => "γ2",
            Hypothesis::F1 => "f1",
            Hypothesis::F2 => "f2",
            Hypothesis::F3 => "f3",
            Hypothesis::F4 => "f4",
            Hypothesis::G1 => "g1",
            Hypothesis::G2 => "g2",
            Hypothesis::G3 => "g3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    VerifiedAnalytic,
    VerifiedSampled,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn holds(self) -> bool {
        matches!(self, Verdict::VerifiedAnalytic | Verdict::VerifiedSampled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub verdict: Verdict,
    /// Sampled quantity the verdict is based on.
    pub estimate: f64,
    /// Value it was compared against, if any.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub lambda1: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn verdict(&self, h: Hypothesis) -> Option<Verdict> {
        self.checks
            .iter()
            .find(|c| c.hypothesis == h)
            .map(|c| c.verdict)
    }

    /// Whether every listed hypothesis holds.
    pub fn all_hold(&self, hs: &[Hypothesis]) -> bool {
        hs.iter()
            .all(|h| self.verdict(*h).is_some_and(Verdict::holds))
    }
}

/// `count` points log-spaced over `[10^lo, 10^hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1).max(1) as f64))
        .collect()
}

fn check(
    hypothesis: Hypothesis,
    verdict: Verdict,
    estimate: f64,
    threshold: Option<f64>,
) -> HypothesisCheck {
    HypothesisCheck {
        hypothesis,
        verdict,
        estimate,
        threshold,
    }
}

/// Midpoint convexity of `t ↦ Γ(t²)` on random pairs in `[0, 10³]`; returns
/// the worst violation (negative when convex everywhere sampled).
pub fn convexity_defect(coeff: &CoefficientModel, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a6d);
    let phi = |t: f64| coeff.big_gamma(t * t);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let a = 10f64.powf(rng.random_range(-4.0..3.0)) * f64::from(rng.random_range(0..2u8));
        let b = 10f64.powf(rng.random_range(-4.0..3.0));
        let mid = phi(0.5 * (a + b));
        let chord = 0.5 * (phi(a) + phi(b));
        let slack = 1e-12 * chord.abs();
        worst = worst.max(mid - chord - slack);
    }
    worst
}

/// Sampled audit of the coefficient and reaction hypotheses against the
/// first eigenvalue `lambda1`. `star` is the critical exponent used for the
/// admissible power in (f2).
pub fn check_hypotheses(
    coeff: &CoefficientModel,
    reaction: &ReactionModel,
    lambda1: f64,
    star: f64,
) -> HypothesisReport {
    let mut checks = Vec::new();
    let all_t = log_space(-6.0, 6.0, 241);
    let sampled_gamma = all_t
        .iter()
        .map(|&t| coeff.gamma(t))
        .chain([coeff.gamma(0.0)]);
    let (lo, hi) = sampled_gamma.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
        (lo.min(g), hi.max(g))
    });
    let inside = lo >= coeff.gamma_min * (1.0 - 1e-12) && hi <= coeff.gamma_max * (1.0 + 1e-12);
    checks.push(check(
        Hypothesis::Gamma1,
        if inside && coeff.gamma_min > 0.0 {
            Verdict::VerifiedAnalytic
        } else {
            Verdict::Violated
        },
        lo,
        Some(coeff.gamma_min),
    ));

    let defect = convexity_defect(coeff, 1000);
    checks.push(check(
        Hypothesis::Gamma2,
        if defect <= 0.0 {
            Verdict::VerifiedSampled
        } else {
            Verdict::Violated
        },
        defect,
        Some(0.0),
    ));

    // (f1): limsup f(t)/t as t → 0
    let near = log_space(-6.0, -1.0, 51);
    let f1 = near
        .iter()
        .flat_map(|&t| [reaction.f(t) / t, reaction.f(-t) / -t])
        .fold(f64::NEG_INFINITY, f64::max);
    let f1_bound = coeff.gamma_min * lambda1;
    checks.push(check(
        Hypothesis::F1,
        if f1 < f1_bound {
            Verdict::VerifiedSampled
        } else {
            Verdict::Violated
        },
        f1,
        Some(f1_bound),
    ));

    // (f2): f(t)/t^p → 0 for an admissible p ∈ (1, 2*_s - 1)
    let far = log_space(2.0, 6.0, 41);
    let p = 1.0 + 0.5 * (star - 2.0).min(1.0);
    let ratios: Vec<f64> = far.iter().map(|&t| reaction.f(t) / t.powf(p)).collect();
    let decreasing = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let (first, last) = (ratios[0].abs(), ratios[ratios.len() - 1].abs());
    let f2 = if decreasing && last <= 0.1 * first.max(f64::MIN_POSITIVE) {
        Verdict::VerifiedSampled
    } else if last > first {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    checks.push(check(Hypothesis::F2, f2, last, Some(0.0)));

    // (f3)/(f4): liminf f(t)/t as t → ∞
    let slopes: Vec<f64> = far.iter().map(|&t| reaction.f(t) / t).collect();
    let liminf = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let f3_bound = coeff.gamma_inf * lambda1;
    checks.push(check(
        Hypothesis::F3,
        if liminf >= f3_bound {
            Verdict::VerifiedSampled
        } else {
            Verdict::Violated
        },
        liminf,
        Some(f3_bound),
    ));
    let tail = &slopes[slopes.len() / 2..];
    let bounded = liminf.is_finite()
        && tail
            .iter()
            .all(|v| v.abs() <= 10.0 * tail[0].abs().max(1.0));
    checks.push(check(
        Hypothesis::F4,
        if bounded {
            Verdict::VerifiedSampled
        } else {
            Verdict::Inconclusive
        },
        liminf,
        None,
    ));

    if reaction.class == GrowthClass::Sublinear {
        let g = |t: f64| reaction.g(t).unwrap_or(f64::NAN);
        let big_g = |t: f64| reaction.big_g(t).unwrap_or(f64::NAN);
        let large = log_space(3.0, 6.0, 31);
        let ratios: Vec<f64> = large.iter().map(|&t| g(t) / t).collect();
        let decreasing = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let last = ratios[ratios.len() - 1];
        checks.push(check(
            Hypothesis::G1,
            if decreasing && last.abs() <= 1e-2 * ratios[0].abs().max(1e-300) {
                Verdict::VerifiedSampled
            } else {
                Verdict::Violated
            },
            last,
            Some(0.0),
        ));
        let positive = log_space(-3.0, 3.0, 61)
            .into_iter()
            .find(|&t| big_g(t) > 0.0);
        checks.push(check(
            Hypothesis::G2,
            if positive.is_some() {
                Verdict::VerifiedSampled
            } else {
                Verdict::Violated
            },
            positive.map_or(f64::NAN, big_g),
            positive,
        ));
        let cg = sublinear_growth_bound(reaction).unwrap_or(f64::NAN);
        checks.push(check(
            Hypothesis::G3,
            if cg.is_finite() {
                Verdict::VerifiedSampled
            } else {
                Verdict::Violated
            },
            cg,
            None,
        ));
    }

    HypothesisReport { lambda1, checks }
}

/// Sampled `C_g = sup |g(t)|/|t|` over `|t| ∈ [10⁻⁶, 10⁶]`.
pub fn sublinear_growth_bound(reaction: &ReactionModel) -> Option<f64> {
    reaction.nu()?;
    let sup = log_space(-6.0, 6.0, 241)
        .into_iter()
        .flat_map(|t| [t, -t])
        .map(|t| reaction.g(t).unwrap_or(f64::NAN).abs() / t.abs())
        .fold(0.0, f64::max);
    Some(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCondition {
    pub satisfied: bool,
    /// `R² - C R² - ‖h‖ R`.
    pub margin: f64,
    /// `R` lies below the onset `t₀` of the linear bound.
    pub below_onset: bool,
}

/// Evaluates `R² ≥ C R² + ‖h‖ R` with `C` the linear-bound constant.
pub fn check_ball_condition(r: f64, reaction: &ReactionModel, h_norm: f64) -> BallCondition {
    let margin = r * r - reaction.linear_bound * r * r - h_norm * r;
    BallCondition {
        satisfied: margin >= 0.0,
        margin,
        below_onset: r < reaction.onset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_family() -> CoefficientModel {
        make_coefficient(CoefficientFamily::Paper {
            a: 1.0,
            b: 2.0,
            p: 1.5,
        })
        .unwrap()
    }

    #[test]
    fn default_family_values() {
        let c = default_family();
        assert_eq!(c.big_gamma(0.0), 0.0);
        assert!((c.gamma(0.0) - 2.5).abs() < 1e-15);
        let eps = 1e-6;
        let fd = (c.big_gamma(eps) - c.big_gamma(0.0)) / eps;
        assert!((fd - 2.5).abs() < 1e-5);
        // γ(t) - 1 = 1.5 (1+t)^{-1/4}: slow decay, 1e-2 only near t = 5e8
        assert!((c.gamma(1e6) - 1.0 - 1.5 * (1.0 + 1e6f64).powf(-0.25)).abs() < 1e-14);
        assert!((c.gamma(1e10) - 1.0).abs() <= 1e-2);
        assert_eq!((c.gamma_min, c.gamma_max, c.gamma_inf), (1.0, 2.5, 1.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_coefficient(CoefficientFamily::Paper {
            a: 1.0,
            b: 1.0,
            p: 2.0
        })
        .is_err());
        assert!(make_coefficient(CoefficientFamily::Constant { c: 0.0 }).is_err());
        assert!(make_reaction(ReactionFamily::Linear { kappa: -1.0 }).is_err());
        assert!(make_reaction(ReactionFamily::Saturating {
            nu: 0.0,
            scale: 1.0
        })
        .is_err());
    }

    #[test]
    fn derivative_consistency() {
        let coeffs = [
            default_family(),
            make_coefficient(CoefficientFamily::Constant { c: 3.0 }).unwrap(),
        ];
        for c in coeffs {
            for t in log_space(-3.0, 6.0, 100) {
                let e = 1e-6 * t;
                let fd = (c.big_gamma(t + e) - c.big_gamma(t - e)) / (2.0 * e);
                assert!((fd - c.gamma(t)).abs() <= 1e-6 * c.gamma(t), "t={t}");
            }
        }
        let reactions = [
            ReactionFamily::Saturating {
                nu: 2.0,
                scale: 1.0,
            },
            ReactionFamily::CubicSaturating { kappa: 3.0 },
            ReactionFamily::Linear { kappa: 0.7 },
        ];
        for fam in reactions {
            let r = make_reaction(fam).unwrap();
            assert_eq!(r.big_f(0.0), 0.0);
            for t in log_space(-2.0, 4.0, 100) {
                for t in [t, -t] {
                    let e = 1e-6 * t.abs();
                    let fd = (r.big_f(t + e) - r.big_f(t - e)) / (2.0 * e);
                    assert!(
                        (fd - r.f(t)).abs() <= 1e-6 * r.f(t).abs().max(1e-8),
                        "{fam:?} t={t}"
                    );
                }
                if t > r.onset {
                    assert!(r.f(t) <= r.linear_bound * t * (1.0 + 1e-14));
                }
            }
        }
    }

    #[test]
    fn saturating_primitive_at_one() {
        let r = make_reaction(ReactionFamily::Saturating {
            nu: 1.0,
            scale: 1.0,
        })
        .unwrap();
        let oracle =
            crate::quadrature::GaussLegendre::new(20).integrate(0.0, 1.0, |t| t / (1.0 + t));
        assert!((r.big_g(1.0).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - (1.0 - 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn cubic_limits() {
        let r = make_reaction(ReactionFamily::CubicSaturating { kappa: 3.0 }).unwrap();
        assert!(r.f(1e-4) / 1e-4 < 1e-7);
        assert!((r.f(1e6) / 1e6 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn audit_constant_and_cubic() {
        let lambda = 4.0;
        let c = make_coefficient(CoefficientFamily::Constant { c: 1.0 }).unwrap();
        let r = make_reaction(ReactionFamily::CubicSaturating {
            kappa: 2.0 * lambda,
        })
        .unwrap();
        let rep = check_hypotheses(&c, &r, lambda, f64::INFINITY);
        for h in [
            Hypothesis::Gamma1,
            Hypothesis::Gamma2,
            Hypothesis::F1,
            Hypothesis::F2,
            Hypothesis::F3,
            Hypothesis::F4,
        ] {
            assert!(rep.verdict(h).unwrap().holds(), "{h}");
        }
        assert_eq!(
            rep.verdict(Hypothesis::Gamma2),
            Some(Verdict::VerifiedSampled)
        );
        assert_eq!(rep.verdict(Hypothesis::G1), None);
    }

    #[test]
    fn audit_flags_linear_violation() {
        let lambda = 4.0;
        let c = default_family();
        let r = make_reaction(ReactionFamily::Linear {
            kappa: 1.5 * lambda,
        })
        .unwrap();
        let rep = check_hypotheses(&c, &r, lambda, 4.0);
        assert_eq!(rep.verdict(Hypothesis::F1), Some(Verdict::Violated));
        // (f2) fails for the pure linear term only when p ≤ 1; here p = 2 > 1
        assert!(rep.verdict(Hypothesis::F2).unwrap().holds());
    }

    #[test]
    fn audit_sublinear_family() {
        let c = default_family();
        let r = make_reaction(ReactionFamily::Saturating {
            nu: 1.0,
            scale: 1.0,
        })
        .unwrap();
        let rep = check_hypotheses(&c, &r, 3.0, f64::INFINITY);
        for h in [Hypothesis::G1, Hypothesis::G2, Hypothesis::G3] {
            assert!(rep.verdict(h).unwrap().holds(), "{h}");
        }
        let cg = sublinear_growth_bound(&r).unwrap();
        assert!((cg - 1.0).abs() < 1e-5);
    }

    #[test]
    fn ball_condition_arithmetic() {
        let r = make_reaction(ReactionFamily::Saturating {
            nu: 0.5,
            scale: 1.0,
        })
        .unwrap();
        assert_eq!(r.linear_bound, 0.5);
        let b = check_ball_condition(1.0, &r, 0.0);
        assert!(b.satisfied && (b.margin - 0.5).abs() < 1e-15);
        let b = check_ball_condition(1.0, &r, 0.4);
        assert!(b.satisfied && (b.margin - 0.1).abs() < 1e-15);
        let steep = make_reaction(ReactionFamily::Linear { kappa: 1.2 }).unwrap();
        for radius in [0.1, 1.0, 10.0] {
            assert!(!check_ball_condition(radius, &steep, 0.0).satisfied);
        }
    }

    #[test]
    fn critical_exponent_convention() {
        assert!(critical_exponent(1, 0.5).is_infinite());
        assert!((critical_exponent(2, 0.5) - 4.0).abs() < 1e-15);
        assert!((critical_exponent(1, 0.25) - 4.0).abs() < 1e-15);
    }
}
