//! Minimization over the cone of nonnegative fields and the mountain-pass
//! path method for saddle-type critical points.
//!
//! Descent directions are preconditioned by `((-Δ)ˢ + I)⁻¹` restricted to
//! the free nodes (a two-metric projection: nodes pinned at zero with a
//! gradient pushing outward are held at zero, the rest move along the
//! preconditioned direction and are then clipped).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::coeffs::check_ball_condition;
use crate::energy::{energy, energy_gradient, gradient_pairing, sobolev_norm, EnergyModel};
use crate::error::{invalid, Error, Result};
use crate::grid::{l2_inner, Field};

/// `‖u‖_{L²}` at or below this counts as the trivial solution.
pub const TRIVIAL_NORM: f64 = 1e-8;
/// Mountain-pass path is redistributed by arclength this often.
const RESPLINE_EVERY: usize = 10;
const MAX_BACKTRACKS: usize = 60;
/// Golden-section iterations per path segment when locating the path maximum.
const LINE_MAX_ITERATIONS: usize = 40;
/// Relative rounding level of an energy evaluation; accepted descent steps
/// never raise `𝒥` by more than this times `max(|𝒥|, 1)`.
pub const ENERGY_NOISE: f64 = 1e-11;
/// Near-flat trial points kept for the residual test of the descent step.
const FLAT_CANDIDATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// KKT tolerance `tol_g`.
    pub tol_g: f64,
    /// Backtracking factor of the Armijo rule.
    pub armijo_factor: f64,
    /// Sufficient-decrease fraction of the Armijo rule.
    pub armijo_slope: f64,
    /// Radius of the `H₀ˢ` ball; `None` leaves iterates unconstrained.
    pub ball_radius: Option<f64>,
    pub project_cone: bool,
    /// Points on the mountain-pass path (odd, at least 3).
    pub path_points: usize,
    /// Largest `H₀ˢ` displacement of one path-point move; `None` uses a tenth
    /// of the endpoint distance.
    pub path_step_cap: Option<f64>,
    /// Radius `r_h` of the sphere whose energy infimum the mountain-pass
    /// level is checked against.
    pub barrier_radius: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tol_g: 1e-6,
            armijo_factor: 0.5,
            armijo_slope: 1e-4,
            ball_radius: None,
            project_cone: true,
            path_points: 41,
            path_step_cap: None,
            barrier_radius: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("solver.tol_g", self.tol_g)?;
        positive("solver.armijo_slope", self.armijo_slope)?;
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(invalid("solver.armijo_factor", "must lie in (0, 1)"));
        }
        if self.armijo_slope >= 1.0 {
            return Err(invalid("solver.armijo_slope", "must be below 1"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("solver.max_iterations", "must be at least 1"));
        }
        if self.path_points < 3 || self.path_points.is_multiple_of(2) {
            return Err(invalid(
                "solver.path_points",
                format!("must be odd and at least 3, got {}", self.path_points),
            ));
        }
        for (name, v) in [
            ("solver.ball_radius", self.ball_radius),
            ("solver.path_step_cap", self.path_step_cap),
            ("solver.barrier_radius", self.barrier_radius),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Trivial,
    LocalMin,
    MountainPass,
    Failed,
}

/// Which alternative of the Schechter list describes the final iterate:
/// (a) interior of the ball, (b) on the sphere with `⟨𝒥′(u), u⟩ ≤ 0`,
/// (c) on the sphere with `⟨𝒥′(u), u⟩ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchechterCondition {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryDiagnostics {
    pub ball_radius: Option<f64>,
    /// Iterates pulled back onto the sphere.
    pub rescalings: usize,
    pub condition: SchechterCondition,
    /// `⟨𝒥′(u), u⟩` at the final iterate.
    pub radial_derivative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierCheck {
    pub radius: f64,
    /// Smallest energy found on `{‖u‖_{H₀ˢ} = r} ∩ cone`.
    pub infimum: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: Field,
    pub energy: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub classification: Classification,
    pub l2_norm: f64,
    pub sobolev_norm: f64,
    pub boundary: BoundaryDiagnostics,
    /// `R² - C R² - ‖h‖ R` for the ball radius in use.
    pub ball_margin: Option<f64>,
    /// Mountain-pass level `c`.
    pub level: Option<f64>,
    pub barrier: Option<BarrierCheck>,
    /// Largest `H₀ˢ` norm over accepted iterates.
    pub max_sobolev_norm: f64,
    pub message: Option<String>,
    /// Energy after every accepted step (the tracked point for mountain pass).
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

/// Nodewise positive part.
pub fn project_cone(u: &Field) -> Field {
    Field::from_values(u.grid(), u.values().iter().map(|v| v.max(0.0)).collect())
        .expect("positive part of a valid field")
}

/// Discrete first-order optimality over the cone: `|gᵢ|` where
/// `uᵢ > tol_active`, `max(0, -gᵢ)` elsewhere, maximized over nodes.
pub fn kkt_residual(model: &EnergyModel, u: &Field, tol_active: f64) -> Result<f64> {
    let g = energy_gradient(model, u)?.representer;
    Ok(kkt_from(u, &g, tol_active))
}

fn kkt_from(u: &Field, g: &Field, tol_active: f64) -> f64 {
    u.values()
        .iter()
        .zip(g.values())
        .map(|(ui, gi)| {
            if *ui > tol_active {
                gi.abs()
            } else {
                (-gi).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Unconstrained residual `max |gᵢ|`.
fn free_residual(g: &Field) -> f64 {
    g.max_abs()
}

/// Radius outside which `𝒥 > 0 = 𝒥(0)` for sublinear reactions with
/// `|f| ≤ K`: `2 (K |Ω|^{1/2} + ‖h‖) / (γ_min λ₁^{1/2})`.
pub fn coercivity_radius(model: &EnergyModel, lambda1: f64) -> Option<f64> {
    let reaction = model.reaction()?;
    reaction.nu()?;
    let bound = crate::coeffs::log_space(-6.0, 6.0, 241)
        .into_iter()
        .flat_map(|t| [t, -t])
        .map(|t| reaction.f(t).abs())
        .fold(0.0, f64::max);
    let gamma_min = model.coefficient().gamma_min;
    let h = model.forcing().l2_norm();
    let measure = model.grid().measure();
    Some(2.0 * (bound * measure.sqrt() + h) / (gamma_min * lambda1.sqrt()))
}

/// Ten times [`coercivity_radius`].
pub fn default_ball_radius(model: &EnergyModel, lambda1: f64) -> Option<f64> {
    coercivity_radius(model, lambda1).map(|r| 10.0 * r)
}

/// Cone projection of `((-Δ)ˢ)⁻¹h`, or `scale·φ₁` when `h ≡ 0`.
pub fn initial_guess(model: &EnergyModel, phi1: &Field, scale: f64) -> Result<Field> {
    let h = model.forcing();
    if h.max_abs() == 0.0 {
        return Ok(phi1.scaled(scale));
    }
    let lap = model.laplacian_operator();
    let chol = Cholesky::new(lap.tables()[0].clone())
        .ok_or_else(|| Error::Factorization("laplacian table is not positive definite".into()))?;
    let x = chol.solve(&DVector::from_column_slice(h.values()));
    Ok(project_cone(&Field::from_values(
        model.grid(),
        x.as_slice().to_vec(),
    )?))
}

/// One descent move and what it cost.
struct Step {
    u: Field,
    energy: f64,
    rescaled: bool,
}

/// Preconditioned projected Armijo steps with a cached factorization of
/// `((-Δ)ˢ + I)` on the current free set.
struct Descent<'a> {
    model: &'a EnergyModel,
    opts: SolverOptions,
    shifted: DMatrix<f64>,
    cache: Option<(Vec<bool>, Cholesky<f64, Dyn>)>,
}

impl<'a> Descent<'a> {
    fn new(model: &'a EnergyModel, opts: SolverOptions) -> Self {
        let mut shifted = model.laplacian_operator().tables()[0].clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += 1.0;
        }
        Self {
            model,
            opts,
            shifted,
            cache: None,
        }
    }

    fn solve_free(&mut self, free: &[bool], g: &[f64]) -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
        let stale = self
            .cache
            .as_ref()
            .is_none_or(|(f, _)| f.as_slice() != free);
        if stale {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.shifted[(idx[a], idx[b])]);
            let chol = Cholesky::new(sub).ok_or_else(|| {
                Error::Factorization("preconditioner is not positive definite".into())
            })?;
            self.cache = Some((free.to_vec(), chol));
        }
        let (_, chol) = self.cache.as_ref().expect("factorization cached above");
        let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| g[i]));
        let x = chol.solve(&rhs);
        let mut out = vec![0.0; free.len()];
        for (k, &i) in idx.iter().enumerate() {
            out[i] = -x[k];
        }
        Ok(out)
    }

    /// Pull back onto the ball if needed.
    fn retract(&self, u: Field) -> Result<(Field, bool)> {
        if let Some(r) = self.opts.ball_radius {
            let norm = sobolev_norm(self.model, &u)?;
            if norm > r {
                return Ok((u.scaled(r / norm), true));
            }
        }
        Ok((u, false))
    }

    /// Free set of the two-metric projection and the preconditioned
    /// direction on it; `None` when every node is pinned.
    fn direction(&mut self, u: &Field, g: &Field) -> Result<Option<(Vec<bool>, Vec<f64>)>> {
        let (uv, gv) = (u.values(), g.values());
        let mut free = vec![true; u.len()];
        if self.opts.project_cone {
            let proj_gap = uv
                .iter()
                .zip(gv)
                .map(|(a, b)| (a - (a - b).max(0.0)).abs())
                .fold(0.0, f64::max);
            let eps = proj_gap.min(1e-3 * u.max_abs());
            for i in 0..u.len() {
                if uv[i] <= eps && gv[i] > 0.0 {
                    free[i] = false;
                }
            }
        }
        if !free.iter().any(|f| *f) {
            return Ok(None);
        }
        let d = self.solve_free(&free, gv)?;
        Ok(Some((free, d)))
    }

    fn moved(&self, u: &Field, free: &[bool], d: &[f64], alpha: f64) -> Result<Field> {
        let values = (0..u.len())
            .map(|i| {
                let x = u.values()[i] + alpha * d[i];
                if !free[i] {
                    0.0
                } else if self.opts.project_cone {
                    x.max(0.0)
                } else {
                    x
                }
            })
            .collect();
        Field::from_values(u.grid(), values)
    }

    /// Armijo step from `u`; `None` when no step length gives sufficient
    /// decrease.
    ///
    /// Near a critical point the decrease predicted by the Armijo rule can
    /// drop below the rounding noise of `𝒥`. Trial points whose energy lies
    /// within that noise are then accepted when they reduce the KKT residual.
    fn step(&mut self, u: &Field, e: f64, g: &Field, cap: Option<f64>) -> Result<Option<Step>> {
        let Some((free, mut d)) = self.direction(u, g)? else {
            return Ok(None);
        };
        if let Some(cap) = cap {
            let len = sobolev_norm(self.model, &Field::from_values(u.grid(), d.clone())?)?;
            if len > cap {
                d.iter_mut().for_each(|v| *v *= cap / len);
            }
        }
        let noise = ENERGY_NOISE * e.abs().max(1.0);
        let mut flat = Vec::new();
        let mut alpha = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let (trial, rescaled) = self.retract(self.moved(u, &free, &d, alpha)?)?;
            let decrease = l2_inner(g, &trial.axpy(-1.0, u))?;
            match energy(self.model, &trial) {
                Ok(et) if decrease < 0.0 && et <= e + self.opts.armijo_slope * decrease => {
                    return Ok(Some(Step {
                        u: trial,
                        energy: et,
                        rescaled,
                    }));
                }
                Ok(et) if decrease < 0.0 && et <= e + noise && flat.len() < FLAT_CANDIDATES => {
                    flat.push(Step {
                        u: trial,
                        energy: et,
                        rescaled,
                    });
                }
                Ok(_) | Err(Error::Overflow { .. }) => {}
                Err(err) => return Err(err),
            }
            alpha *= self.opts.armijo_factor;
        }
        let current = residual(u, g, self.opts.project_cone);
        for step in flat {
            let gt = energy_gradient(self.model, &step.u)?.representer;
            if residual(&step.u, &gt, self.opts.project_cone) < current {
                return Ok(Some(step));
            }
        }
        Ok(None)
    }
}

fn residual(u: &Field, g: &Field, cone: bool) -> f64 {
    if cone {
        kkt_from(u, g, 0.0)
    } else {
        free_residual(g)
    }
}

fn boundary(
    model: &EnergyModel,
    u: &Field,
    g: &Field,
    opts: &SolverOptions,
    rescalings: usize,
) -> Result<BoundaryDiagnostics> {
    let radial = l2_inner(g, u)?;
    let condition = match opts.ball_radius {
        Some(r) if sobolev_norm(model, u)? >= r * (1.0 - 1e-9) => {
            if radial <= 0.0 {
                SchechterCondition::B
            } else {
                SchechterCondition::C
            }
        }
        _ => SchechterCondition::A,
    };
    Ok(BoundaryDiagnostics {
        ball_radius: opts.ball_radius,
        rescalings,
        condition,
        radial_derivative: radial,
    })
}

fn ball_margin(model: &EnergyModel, opts: &SolverOptions) -> Option<f64> {
    let r = opts.ball_radius?;
    let reaction = model.reaction()?;
    Some(check_ball_condition(r, reaction, model.forcing().l2_norm()).margin)
}

/// Projected preconditioned descent on `𝒥` over the cone (and ball).
///
/// On convergence to a nonzero point, the origin is preferred when it is
/// itself cone-stationary with no larger energy: descent only approaches a
/// strict minimum at zero geometrically and would otherwise stop at a field
/// of size `~tol_g`.
pub fn minimize_cone(model: &EnergyModel, opts: &SolverOptions, u0: &Field) -> Result<SolveReport> {
    opts.validate()?;
    if !u0.grid().same_as(model.grid()) {
        return Err(Error::GridMismatch);
    }
    if opts.project_cone && u0.min_value() < 0.0 {
        return Err(invalid("u0", "initial guess must be nonnegative"));
    }
    let mut descent = Descent::new(model, *opts);
    let (mut u, mut rescalings) = {
        let (u, r) = descent.retract(u0.clone())?;
        (u, usize::from(r))
    };
    let mut e = energy(model, &u)?;
    let mut history = vec![e];
    let mut max_norm = sobolev_norm(model, &u)?;
    let mut message = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut g = energy_gradient(model, &u)?.representer;
    for it in 1..=opts.max_iterations {
        iterations = it;
        if residual(&u, &g, opts.project_cone) <= opts.tol_g {
            converged = true;
            iterations = it - 1;
            break;
        }
        match descent.step(&u, e, &g, None)? {
            Some(step) => {
                rescalings += usize::from(step.rescaled);
                u = step.u;
                e = step.energy;
                history.push(e);
                max_norm = max_norm.max(sobolev_norm(model, &u)?);
                g = energy_gradient(model, &u)?.representer;
            }
            None => {
                converged = residual(&u, &g, opts.project_cone) <= opts.tol_g;
                if !converged {
                    message = Some("line search found no decrease".into());
                }
                break;
            }
        }
    }
    if !converged && message.is_none() {
        converged = residual(&u, &g, opts.project_cone) <= opts.tol_g;
        if !converged {
            message = Some(format!("iteration cap {} reached", opts.max_iterations));
        }
    }
    if converged && opts.project_cone && u.l2_norm() > TRIVIAL_NORM {
        let zero = Field::zeros(model.grid());
        let g0 = energy_gradient(model, &zero)?.representer;
        if kkt_from(&zero, &g0, 0.0) <= opts.tol_g && energy(model, &zero)? <= e {
            u = zero;
            e = 0.0;
            g = g0;
            history.push(e);
            message = Some("origin is cone-stationary with no larger energy".into());
        }
    }
    let kkt = residual(&u, &g, opts.project_cone);
    let l2 = u.l2_norm();
    let classification = if !converged {
        Classification::Failed
    } else if l2 <= TRIVIAL_NORM {
        Classification::Trivial
    } else {
        Classification::LocalMin
    };
    Ok(SolveReport {
        energy: e,
        kkt_residual: kkt,
        iterations,
        classification,
        l2_norm: l2,
        sobolev_norm: sobolev_norm(model, &u)?,
        boundary: boundary(model, &u, &g, opts, rescalings)?,
        ball_margin: ball_margin(model, opts),
        level: None,
        barrier: None,
        max_sobolev_norm: max_norm,
        message,
        energy_history: history,
        solution: u,
    })
}

/// Energy samples along `t ↦ 𝒥(t·direction)`.
#[derive(Debug, Clone, Serialize)]
pub struct RaySearch {
    pub t_star: f64,
    pub energy: f64,
    /// `(t, 𝒥(t·direction))` on the log grid.
    pub curve: Vec<[f64; 2]>,
}

/// Smallest `t` on a log grid over `[t_max·1e-6, t_max]` with
/// `𝒥(t·direction) < 𝒥(0)`.
pub fn ray_search(
    model: &EnergyModel,
    direction: &Field,
    t_max: f64,
    steps: usize,
) -> Result<RaySearch> {
    let level = energy(model, &Field::zeros(model.grid()))?;
    ray_search_below(
        model,
        direction,
        t_max,
        steps,
        level,
        1e-8 * level.abs().max(1e-6),
    )
}

/// As [`ray_search`], against an arbitrary energy `level`: the smallest
/// sampled `t` with `𝒥(t·direction) < level - margin`.
pub fn ray_search_below(
    model: &EnergyModel,
    direction: &Field,
    t_max: f64,
    steps: usize,
    level: f64,
    margin: f64,
) -> Result<RaySearch> {
    if direction.max_abs() == 0.0 {
        return Err(Error::ZeroField);
    }
    if direction.min_value() < 0.0 {
        return Err(invalid("direction", "must be nonnegative"));
    }
    if !(t_max > 0.0 && t_max.is_finite()) || steps < 2 {
        return Err(invalid("t_max", "need t_max > 0 and at least two steps"));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(invalid("margin", "must be nonnegative"));
    }
    let lo = t_max.log10() - 6.0;
    let ts = crate::coeffs::log_space(lo, t_max.log10(), steps);
    let mut curve = Vec::with_capacity(steps);
    let mut found = None;
    for t in ts {
        let e = match energy(model, &direction.scaled(t)) {
            Ok(e) => e,
            Err(Error::Overflow { .. }) => break,
            Err(err) => return Err(err),
        };
        curve.push([t, e]);
        if found.is_none() && e < level - margin {
            found = Some((t, e));
        }
    }
    match found {
        Some((t_star, energy)) => Ok(RaySearch {
            t_star,
            energy,
            curve,
        }),
        None => Err(Error::NoSignChange { t_max }),
    }
}

/// Smallest energy found on `{‖u‖_{H₀ˢ} = radius} ∩ cone` by projected
/// descent with radial retraction, started from `start`.
pub fn sphere_infimum(
    model: &EnergyModel,
    radius: f64,
    start: &Field,
    opts: &SolverOptions,
) -> Result<f64> {
    let norm = |u: &Field| sobolev_norm(model, u);
    let onto = |u: &Field| -> Result<Option<Field>> {
        let n = norm(u)?;
        Ok((n > 0.0).then(|| u.scaled(radius / n)))
    };
    let mut u = onto(&project_cone(start))?.ok_or(Error::ZeroField)?;
    let mut e = energy(model, &u)?;
    let mut descent = Descent::new(
        model,
        SolverOptions {
            ball_radius: None,
            ..*opts
        },
    );
    for _ in 0..opts.max_iterations.min(500) {
        let g = energy_gradient(model, &u)?.representer;
        // tangential part of the representer with respect to the L² pairing
        let radial = l2_inner(&g, &u)? / l2_inner(&u, &u)?;
        let gt = g.axpy(-radial, &u);
        if gt.max_abs() <= opts.tol_g {
            break;
        }
        let free = vec![true; u.len()];
        let d = Field::from_values(u.grid(), descent.solve_free(&free, gt.values())?)?;
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..MAX_BACKTRACKS {
            if let Some(trial) = onto(&project_cone(&u.axpy(alpha, &d)))? {
                if let Ok(et) = energy(model, &trial) {
                    if et < e - opts.armijo_slope * alpha * l2_inner(&gt, &d)?.abs() {
                        u = trial;
                        e = et;
                        moved = true;
                        break;
                    }
                }
            }
            alpha *= opts.armijo_factor;
        }
        if !moved {
            break;
        }
    }
    Ok(e)
}

fn h_distance(model: &EnergyModel, a: &Field, b: &Field) -> Result<f64> {
    sobolev_norm(model, &a.axpy(-1.0, b))
}

fn lerp(a: &Field, b: &Field, t: f64) -> Field {
    a.scaled(1.0 - t).axpy(t, b)
}

/// Maximum of `𝒥` on the segment `[a, b]` by golden-section search.
fn segment_max(model: &EnergyModel, a: &Field, b: &Field) -> Result<(f64, f64)> {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = energy(model, &lerp(a, b, x1))?;
    let mut f2 = energy(model, &lerp(a, b, x2))?;
    for _ in 0..LINE_MAX_ITERATIONS {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = energy(model, &lerp(a, b, x1))?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = energy(model, &lerp(a, b, x2))?;
        }
    }
    Ok(if f1 > f2 { (x1, f1) } else { (x2, f2) })
}

/// Equal-arclength redistribution in the `H₀ˢ` norm, endpoints fixed.
fn respline(model: &EnergyModel, path: &[Field]) -> Result<Vec<Field>> {
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        let last = *cum.last().expect("nonempty");
        cum.push(last + h_distance(model, &w[0], &w[1])?);
    }
    let total = *cum.last().expect("nonempty");
    if total == 0.0 {
        return Ok(path.to_vec());
    }
    let p = path.len();
    let mut out = Vec::with_capacity(p);
    let mut seg = 0;
    for k in 0..p {
        let target = total * k as f64 / (p - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((target - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(lerp(&path[seg], &path[seg + 1], t));
    }
    out[0] = path[0].clone();
    out[p - 1] = path[p - 1].clone();
    Ok(out)
}

/// Path iterations without a tenfold drop of the top-point residual before
/// the path phase hands over to ray maximization.
const PATH_PATIENCE: usize = 50;
const RAY_BRACKET_STEPS: usize = 60;
const RAY_ROOT_ITERATIONS: usize = 200;

/// Point of the ray `anchor + t·v` (projected onto the cone when required).
fn ray_point(anchor: &Field, v: &Field, t: f64, cone: bool) -> Field {
    let x = anchor.axpy(t, v);
    if cone {
        project_cone(&x)
    } else {
        x
    }
}

struct RayMax {
    t: f64,
    u: Field,
    energy: f64,
    gradient: Field,
}

/// Maximizes `t ↦ 𝒥(anchor + t·v)` over `t > 0` by a sign-change search on
/// the derivative, starting the bracket at `t0`.
fn ray_max(model: &EnergyModel, anchor: &Field, v: &Field, t0: f64, cone: bool) -> Result<RayMax> {
    let slope = |t: f64| -> Result<(f64, Field, Field)> {
        let x = anchor.axpy(t, v);
        let u = ray_point(anchor, v, t, cone);
        let g = energy_gradient(model, &u)?.representer;
        let w = model.grid().weight();
        let s: f64 = (0..u.len())
            .filter(|&i| !cone || x.values()[i] > 0.0)
            .map(|i| g.values()[i] * v.values()[i])
            .sum::<f64>()
            * w;
        Ok((s, u, g))
    };
    let (s0, _, _) = slope(t0)?;
    let (mut lo, mut hi) = (t0, t0);
    let (mut s_lo, mut s_hi) = (s0, s0);
    for _ in 0..RAY_BRACKET_STEPS {
        if s_lo > 0.0 && s_hi < 0.0 {
            break;
        }
        if s0 > 0.0 {
            lo = hi;
            s_lo = s_hi;
            hi *= 2.0;
            s_hi = slope(hi)?.0;
        } else {
            hi = lo;
            s_hi = s_lo;
            lo *= 0.5;
            s_lo = slope(lo)?.0;
        }
    }
    if !(s_lo > 0.0 && s_hi <= 0.0) {
        return Err(Error::Geometry(
            "energy has no interior maximum along the ray".into(),
        ));
    }
    // Illinois variant of regula falsi on the derivative
    let mut side = 0i8;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..RAY_ROOT_ITERATIONS {
        t = (lo * s_hi - hi * s_lo) / (s_hi - s_lo);
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let st = slope(t)?.0;
        if st == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if st > 0.0 {
            lo = t;
            s_lo = st;
            if side == 1 {
                s_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = t;
            s_hi = st;
            if side == -1 {
                s_lo *= 0.5;
            }
            side = -1;
        }
    }
    let (_, u, gradient) = slope(t)?;
    Ok(RayMax {
        t,
        energy: energy(model, &u)?,
        u,
        gradient,
    })
}

struct Refined {
    u: Field,
    energy: f64,
    gradient: Field,
    iterations: usize,
    converged: bool,
    message: Option<String>,
}

/// Local minimax from the path maximum: the point is kept at the maximum of
/// `𝒥` along the ray from `anchor`, and the ray direction is moved by
/// preconditioned descent steps orthogonal (in `H₀ˢ`) to it.
#[allow(clippy::too_many_arguments)]
fn refine(
    model: &EnergyModel,
    descent: &mut Descent<'_>,
    anchor: &Field,
    start: &Field,
    opts: &SolverOptions,
    cap: f64,
    budget: usize,
    history: &mut Vec<f64>,
    max_norm: &mut f64,
) -> Result<Refined> {
    let cone = opts.project_cone;
    let mut v = start.axpy(-1.0, anchor);
    let mut cur = ray_max(model, anchor, &v, 1.0, cone)?;
    v = v.scaled(cur.t);
    let mut iterations = 0;
    while iterations < budget {
        history.push(cur.energy);
        *max_norm = max_norm.max(sobolev_norm(model, &cur.u)?);
        let r = residual(&cur.u, &cur.gradient, cone);
        if r <= opts.tol_g {
            return Ok(Refined {
                u: cur.u,
                energy: cur.energy,
                gradient: cur.gradient,
                iterations,
                converged: true,
                message: None,
            });
        }
        iterations += 1;
        let Some((_, d)) = descent.direction(&cur.u, &cur.gradient)? else {
            break;
        };
        let mut d = Field::from_values(model.grid(), d)?;
        let along = gradient_pairing(model, &d, &v)? / gradient_pairing(model, &v, &v)?;
        d = d.axpy(-along, &v);
        let len = sobolev_norm(model, &d)?;
        if len > cap {
            d = d.scaled(cap / len);
        }
        let slope = l2_inner(&cur.gradient, &d)?;
        if slope >= 0.0 {
            break;
        }
        let noise = ENERGY_NOISE * cur.energy.abs().max(1.0);
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..MAX_BACKTRACKS {
            let q = ray_point(&cur.u, &d, alpha, cone);
            let w = q.axpy(-1.0, anchor);
            if let Ok(cand) = ray_max(model, anchor, &w, 1.0, cone) {
                let armijo = cand.energy <= cur.energy + opts.armijo_slope * alpha * slope;
                let flat = cand.energy <= cur.energy + noise
                    && residual(&cand.u, &cand.gradient, cone) < r;
                if armijo || flat {
                    v = w.scaled(cand.t);
                    next = Some(cand);
                    break;
                }
            }
            alpha *= opts.armijo_factor;
        }
        match next {
            Some(n) => cur = n,
            None => break,
        }
    }
    let converged = residual(&cur.u, &cur.gradient, cone) <= opts.tol_g;
    let message = (!converged).then(|| {
        if iterations >= budget {
            format!("iteration cap {} reached", opts.max_iterations)
        } else {
            "line search found no decrease at the ray maximum".to_string()
        }
    });
    Ok(Refined {
        u: cur.u,
        energy: cur.energy,
        gradient: cur.gradient,
        iterations,
        converged,
        message,
    })
}

/// Discrete path deformation: the path from `u_low` to `u_far` is pushed down
/// at its highest point until that point is critical.
///
/// Each iteration places the top point at the exact maximum of the path near
/// it (golden section on the two adjacent segments), checks its KKT
/// residual, and moves it by one projected Armijo step. The path is
/// redistributed by `H₀ˢ` arclength every ten iterations. Once the top-point
/// residual stops falling, the top point is handed to a local minimax
/// iteration along rays from `u_low`, which converges to the same saddle
/// without the path discretization limiting the accuracy.
pub fn mountain_pass(
    model: &EnergyModel,
    u_low: &Field,
    u_far: &Field,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    for u in [u_low, u_far] {
        if !u.grid().same_as(model.grid()) {
            return Err(Error::GridMismatch);
        }
        if opts.project_cone && u.min_value() < 0.0 {
            return Err(invalid("mountain_pass endpoints", "must be nonnegative"));
        }
    }
    let e_low = energy(model, u_low)?;
    let e_far = energy(model, u_far)?;
    if e_far >= e_low {
        return Err(Error::Geometry(format!(
            "𝒥(u_far) = {e_far} is not below 𝒥(u_low) = {e_low}"
        )));
    }
    let p = opts.path_points;
    let cap = opts
        .path_step_cap
        .unwrap_or(0.1 * h_distance(model, u_low, u_far)?);
    let mut path: Vec<Field> = (0..p)
        .map(|k| lerp(u_low, u_far, k as f64 / (p - 1) as f64))
        .collect();
    let mut energies = path
        .iter()
        .map(|u| energy(model, u))
        .collect::<Result<Vec<_>>>()?;
    let mut descent = Descent::new(
        model,
        SolverOptions {
            ball_radius: None,
            ..*opts
        },
    );
    let floor = e_low.max(e_far);

    let mut history = Vec::new();
    let mut max_norm: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut top = 1;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut g = energy_gradient(model, &path[top])?.representer;
    for it in 1..=opts.max_iterations {
        iterations = it;
        if it % RESPLINE_EVERY == 0 {
            path = respline(model, &path)?;
            energies = path
                .iter()
                .map(|u| energy(model, u))
                .collect::<Result<Vec<_>>>()?;
        }
        top = (1..p - 1)
            .max_by(|&a, &b| energies[a].total_cmp(&energies[b]))
            .expect("at least one interior point");
        let (tl, el) = segment_max(model, &path[top - 1], &path[top])?;
        let (tr, er) = segment_max(model, &path[top], &path[top + 1])?;
        if el > energies[top] || er > energies[top] {
            let u = if el >= er {
                lerp(&path[top - 1], &path[top], tl)
            } else {
                lerp(&path[top], &path[top + 1], tr)
            };
            energies[top] = el.max(er);
            path[top] = u;
        }
        let level = energies[top];
        history.push(level);
        max_norm = max_norm.max(sobolev_norm(model, &path[top])?);
        g = energy_gradient(model, &path[top])?.representer;
        let r = residual(&path[top], &g, opts.project_cone);
        if r <= opts.tol_g {
            converged = true;
            break;
        }
        if r < 0.1 * best {
            best = r;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= PATH_PATIENCE {
                break;
            }
        }
        match descent.step(&path[top], level, &g, Some(cap))? {
            Some(step) => {
                path[top] = step.u;
                energies[top] = step.energy;
            }
            None => break,
        }
    }
    let mut u = path[top].clone();
    let mut level = energies[top];
    let mut message = None;
    if !converged {
        let budget = opts.max_iterations.saturating_sub(iterations).max(1);
        let refined = refine(
            model,
            &mut descent,
            u_low,
            &u,
            opts,
            cap,
            budget,
            &mut history,
            &mut max_norm,
        )?;
        iterations += refined.iterations;
        converged = refined.converged;
        message = refined.message;
        u = refined.u;
        level = refined.energy;
        g = refined.gradient;
    }
    if level < floor {
        let note = format!("level {level} lies below max(𝒥(u_low), 𝒥(u_far)) = {floor}");
        message = Some(match message {
            Some(m) => format!("{m}; {note}"),
            None => note,
        });
    }
    let barrier = match opts.barrier_radius {
        Some(r) => {
            let inf = sphere_infimum(model, r, u_far, opts)?;
            Some(BarrierCheck {
                radius: r,
                infimum: inf,
                satisfied: level >= inf - 1e-10 * inf.abs().max(1.0),
            })
        }
        None => None,
    };
    let l2 = u.l2_norm();
    let classification = if !converged {
        Classification::Failed
    } else if l2 <= TRIVIAL_NORM {
        Classification::Trivial
    } else {
        Classification::MountainPass
    };
    let plain = SolverOptions {
        ball_radius: None,
        ..*opts
    };
    Ok(SolveReport {
        energy: level,
        kkt_residual: residual(&u, &g, opts.project_cone),
        iterations,
        classification,
        l2_norm: l2,
        sobolev_norm: sobolev_norm(model, &u)?,
        boundary: boundary(model, &u, &g, &plain, 0)?,
        ball_margin: None,
        level: Some(level),
        barrier,
        max_sobolev_norm: max_norm,
        message,
        energy_history: history,
        solution: u,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::coeffs::{make_coefficient, make_reaction, CoefficientFamily, ReactionFamily};
    use crate::fracops::{assemble_gradient, QuadratureParams};
    use crate::grid::{build_grid, DomainSpec, Grid};
    use crate::spectral::{first_eigenpair, DEFAULT_TOL};

    fn grid(n: usize) -> Arc<Grid> {
        build_grid(DomainSpec::interval(-1.0, 1.0, n)).unwrap()
    }

    fn model(
        g: &Arc<Grid>,
        s: f64,
        coeff: CoefficientFamily,
        reaction: Option<ReactionFamily>,
        h: f64,
    ) -> EnergyModel {
        let grad = Arc::new(assemble_gradient(g, s, QuadratureParams::default()).unwrap());
        let forcing = Field::from_fn(g, |_| h).unwrap();
        EnergyModel::new(
            grad,
            make_coefficient(coeff).unwrap(),
            reaction.map(|r| make_reaction(r).unwrap()),
            forcing,
        )
        .unwrap()
    }

    fn default_family() -> CoefficientFamily {
        CoefficientFamily::Paper {
            a: 1.0,
            b: 2.0,
            p: 1.5,
        }
    }

    #[test]
    fn cone_projection_clips_negatives() {
        let g = grid(4);
        let u = Field::from_values(&g, vec![-1.0, 0.0, 2.5, -0.0]).unwrap();
        assert_eq!(project_cone(&u).values(), &[0.0, 0.0, 2.5, 0.0]);
        let p = project_cone(&u);
        assert_eq!(project_cone(&p).values(), p.values());
    }

    #[test]
    fn kkt_at_origin_sees_only_inward_forcing() {
        let g = grid(32);
        let m = model(&g, 0.5, CoefficientFamily::Constant { c: 1.0 }, None, 2.0);
        // representer at 0 is -h: every node wants to move up
        let r = kkt_residual(&m, &Field::zeros(&g), 0.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12, "{r}");
        let repelled = m
            .with_forcing(Field::from_fn(&g, |_| -2.0).unwrap())
            .unwrap();
        assert_eq!(
            kkt_residual(&repelled, &Field::zeros(&g), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_coefficient_solve_matches_linear_system() {
        let g = grid(128);
        let m = model(&g, 0.5, CoefficientFamily::Constant { c: 1.0 }, None, 1.0);
        let lap = m.laplacian_operator();
        let exact = Cholesky::new(lap.tables()[0].clone())
            .unwrap()
            .solve(&DVector::from_element(g.len(), 1.0));
        let exact = Field::from_values(&g, exact.as_slice().to_vec()).unwrap();
        for cone in [true, false] {
            let opts = SolverOptions {
                project_cone: cone,
                ..SolverOptions::default()
            };
            let rep = minimize_cone(&m, &opts, &Field::zeros(&g)).unwrap();
            assert_eq!(rep.classification, Classification::LocalMin);
            let err = rep.solution.axpy(-1.0, &exact).l2_norm() / exact.l2_norm();
            assert!(err <= 1e-4, "cone={cone}: {err}");
        }
    }

    #[test]
    fn energy_history_is_nonincreasing() {
        let g = grid(64);
        let m = model(
            &g,
            0.4,
            default_family(),
            Some(ReactionFamily::Saturating {
                nu: 20.0,
                scale: 1.0,
            }),
            0.5,
        );
        let rep = minimize_cone(&m, &SolverOptions::default(), &Field::zeros(&g)).unwrap();
        assert_ne!(
            rep.classification,
            Classification::Failed,
            "{:?}",
            rep.message
        );
        for w in rep.energy_history.windows(2) {
            assert!(
                w[1] <= w[0] + ENERGY_NOISE * w[0].abs().max(1.0),
                "{} > {}",
                w[1],
                w[0]
            );
        }
        assert!(rep.solution.min_value() >= 0.0);
    }

    #[test]
    fn small_and_large_multipliers_classify() {
        let g = grid(64);
        let s = 0.5;
        let base = model(
            &g,
            s,
            default_family(),
            Some(ReactionFamily::Saturating {
                nu: 0.1,
                scale: 1.0,
            }),
            0.0,
        );
        let pair = first_eigenpair(base.laplacian_operator(), DEFAULT_TOL).unwrap();
        let u0 = pair.vector.scaled(0.1);
        let rep = minimize_cone(&base, &SolverOptions::default(), &u0).unwrap();
        assert_eq!(
            rep.classification,
            Classification::Trivial,
            "{:?}",
            rep.message
        );
        assert_eq!(rep.energy, 0.0);

        let strong = base.with_reaction(Some(
            make_reaction(ReactionFamily::Saturating {
                nu: 20.0,
                scale: 1.0,
            })
            .unwrap(),
        ));
        let rep = minimize_cone(&strong, &SolverOptions::default(), &u0).unwrap();
        assert_eq!(
            rep.classification,
            Classification::LocalMin,
            "{:?}",
            rep.message
        );
        assert!(rep.energy < 0.0);
        assert!(rep.kkt_residual <= 1e-6);
    }

    #[test]
    fn ball_constraint_is_respected() {
        let g = grid(48);
        let m = model(
            &g,
            0.5,
            default_family(),
            Some(ReactionFamily::Saturating {
                nu: 20.0,
                scale: 1.0,
            }),
            0.0,
        );
        let pair = first_eigenpair(m.laplacian_operator(), DEFAULT_TOL).unwrap();
        let opts = SolverOptions {
            ball_radius: Some(0.5),
            ..SolverOptions::default()
        };
        let rep = minimize_cone(&m, &opts, &pair.vector).unwrap();
        assert!(rep.sobolev_norm <= 0.5 * (1.0 + 1e-12));
        assert!(rep.max_sobolev_norm <= 0.5 * (1.0 + 1e-12));
        assert!(rep.boundary.rescalings > 0);
        assert_ne!(rep.boundary.condition, SchechterCondition::A);
        let default = default_ball_radius(&m, pair.lambda).unwrap();
        assert!(default > 0.0 && default.is_finite());
    }

    #[test]
    fn ray_search_finds_descent_past_the_eigenvalue() {
        let g = grid(64);
        let m = model(
            &g,
            0.5,
            default_family(),
            Some(ReactionFamily::CubicSaturating { kappa: 5.0 }),
            0.0,
        );
        let pair = first_eigenpair(m.laplacian_operator(), DEFAULT_TOL).unwrap();
        let ray = ray_search(&m, &pair.vector, 1e3, 121).unwrap();
        assert!(ray.t_star.is_finite() && ray.t_star > 0.0);
        assert!(ray.energy < 0.0);

        let weak = m.with_reaction(Some(
            make_reaction(ReactionFamily::Linear { kappa: 0.1 }).unwrap(),
        ));
        assert!(matches!(
            ray_search(&weak, &pair.vector, 1e3, 121),
            Err(Error::NoSignChange { .. })
        ));
        assert!(matches!(
            ray_search(&m, &Field::zeros(&g), 1.0, 10),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn mountain_pass_finds_positive_level_saddle() {
        let g = grid(48);
        let m = model(
            &g,
            0.5,
            default_family(),
            Some(ReactionFamily::CubicSaturating { kappa: 5.0 }),
            0.0,
        );
        let pair = first_eigenpair(m.laplacian_operator(), DEFAULT_TOL).unwrap();
        let ray = ray_search(&m, &pair.vector, 1e3, 121).unwrap();
        let far = pair.vector.scaled(2.0 * ray.t_star);
        let opts = SolverOptions {
            path_points: 21,
            barrier_radius: Some(0.05),
            ..SolverOptions::default()
        };
        let rep = mountain_pass(&m, &Field::zeros(&g), &far, &opts).unwrap();
        assert_eq!(
            rep.classification,
            Classification::MountainPass,
            "{:?}",
            rep.message
        );
        let level = rep.level.unwrap();
        assert!(level > 0.0);
        assert!(rep.kkt_residual <= opts.tol_g);
        let barrier = rep.barrier.unwrap();
        assert!(barrier.satisfied, "{barrier:?} vs {level}");
        assert!(rep.solution.min_value() >= 0.0);
    }

    #[test]
    fn mountain_pass_rejects_bad_geometry() {
        let g = grid(32);
        let m = model(
            &g,
            0.5,
            default_family(),
            Some(ReactionFamily::Linear { kappa: 0.1 }),
            0.0,
        );
        let far = Field::from_fn(&g, |x| 1.0 - x[0] * x[0]).unwrap();
        assert!(matches!(
            mountain_pass(&m, &Field::zeros(&g), &far, &SolverOptions::default()),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn options_validate() {
        assert!(SolverOptions::default().validate().is_ok());
        for bad in [
            SolverOptions {
                path_points: 4,
                ..SolverOptions::default()
            },
            SolverOptions {
                armijo_factor: 1.0,
                ..SolverOptions::default()
            },
            SolverOptions {
                tol_g: 0.0,
                ..SolverOptions::default()
            },
            SolverOptions {
                ball_radius: Some(-1.0),
                ..SolverOptions::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        let parsed: std::result::Result<SolverOptions, _> =
            serde_json::from_str(r#"{"tol_g": 1e-7, "bogus": 1}"#);
        assert!(parsed.is_err());
    }
}
