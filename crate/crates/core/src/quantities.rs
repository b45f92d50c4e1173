//! Mutual-information types `I₁…I₄ᵋ` and conditional-entropy types `H₁…H₃ᵋ`.
//!
//! Every type is `±D(ρ̂ ‖ X_A ⊗ Y_B)` for some choice of first argument `ρ̂` (the state or a
//! smoothing-ball candidate), first factor `X_A` (`ρ_A` or `𝟙_A`) and second factor `Y_B`
//! (`ρ_B`, a candidate marginal, or a minimized `σ_B`). Infima are approximated from above by
//! a quasi-Newton solve over `σ_B` and a randomized search over the ball; the returned
//! witnesses always reproduce the reported value.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channels::{LocalIsometry, ReversalChannel};
use crate::divergences::{evaluate_spectral, DivergenceSpec, Spectral};
use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, Subsystem};
use crate::sampling::{random_state, restart_seed, TrialRng};
use crate::states::{BipartiteState, DensityOperator, PositiveOperator, SmoothingBall};

/// Eigenvalue floor applied to every `σ_B` the solver produces.
pub const SIGMA_FLOOR: f64 = 1e-12;

const FD_STEP: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;
const LINE_SEARCH_HALVINGS: usize = 40;
const SEARCH_MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    I1,
    I2,
    I3,
    I4,
    H1,
    H2,
    H3,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::I1,
        Family::I2,
        Family::I3,
        Family::I4,
        Family::H1,
        Family::H2,
        Family::H3,
    ];

    pub fn is_smoothed(self) -> bool {
        matches!(self, Family::I3 | Family::I4 | Family::H3)
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, Family::H1 | Family::H2 | Family::H3)
    }

    /// Whether an infimum over `σ_B` is involved.
    pub fn minimizes_sigma(self) -> bool {
        matches!(self, Family::I2 | Family::I3 | Family::H2 | Family::H3)
    }

    pub fn first_factor(self) -> FirstFactor {
        if self.is_conditional() {
            FirstFactor::IdentityA
        } else {
            FirstFactor::MarginalRhoA
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::I1 => "I1",
            Family::I2 => "I2",
            Family::I3 => "I3",
            Family::I4 => "I4",
            Family::H1 => "H1",
            Family::H2 => "H2",
            Family::H3 => "H3",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown quantity '{s}', expected one of I1, I2, I3, I4, H1, H2, H3")))
    }
}

/// A quantity type together with its smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityKind {
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
}

impl QuantityKind {
    pub fn new(family: Family, epsilon: Option<f64>) -> Result<Self> {
        match (family.is_smoothed(), epsilon) {
            (true, None) => Err(Error::Parameter(format!("{family} requires epsilon"))),
            (false, Some(_)) => Err(Error::Parameter(format!("{family} takes no epsilon"))),
            (true, Some(e)) if !(0.0..=1.0).contains(&e) => {
                Err(Error::Parameter(format!("epsilon must lie in [0, 1], got {e}")))
            }
            _ => Ok(Self { family, epsilon }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    UpperBound,
    /// For H-types: the negated infimum was approximated from above.
    LowerBound,
}

impl Exactness {
    pub fn name(self) -> &'static str {
        match self {
            Exactness::Exact => "exact",
            Exactness::UpperBound => "upper_bound",
            Exactness::LowerBound => "lower_bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub sigma_tolerance: f64,
    pub sigma_max_iterations: usize,
    /// Random starts for the `σ_B` solve, on top of `ρ_B` and `π_B`.
    pub sigma_random_starts: usize,
    pub smoothing_restarts: usize,
    pub smoothing_step_budget: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            sigma_tolerance: 1e-8,
            sigma_max_iterations: 5000,
            sigma_random_starts: 1,
            smoothing_restarts: 8,
            smoothing_step_budget: 2000,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_tolerance > 0.0 && self.sigma_tolerance.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma_tolerance must be positive, got {}",
                self.sigma_tolerance
            )));
        }
        if self.sigma_max_iterations == 0 || self.smoothing_restarts == 0 || self.smoothing_step_budget == 0 {
            return Err(Error::Parameter(
                "iteration budgets and restart counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QuantityResult {
    pub value: f64,
    pub exactness: Exactness,
    pub sigma_witness: Option<DensityOperator>,
    pub smoothing_witness: Option<DensityOperator>,
    pub converged: bool,
}

/// The operator on A in the second argument: `ρ_A` for I-types, `𝟙_A` for H-types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstFactor {
    MarginalRhoA,
    IdentityA,
}

impl FirstFactor {
    fn operator(self, rho: &BipartiteState) -> PositiveOperator {
        match self {
            FirstFactor::MarginalRhoA => rho.marginal(Subsystem::A).into(),
            FirstFactor::IdentityA => PositiveOperator::identity(rho.dim_a()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigmaSolution {
    pub sigma: DensityOperator,
    /// `D(ρ ‖ X_A ⊗ σ)` at the returned `σ`.
    pub value: f64,
    pub converged: bool,
}

fn dim_check(rho: &BipartiteState, op: &DensityOperator) -> Result<()> {
    if op.dim() != rho.state().dim() {
        return Err(Error::dims(rho.state().dim(), op.dim()));
    }
    Ok(())
}

/// `D(ρ̂ ‖ X ⊗ σ)` with precomputed spectra.
fn pair_value(spec: &DivergenceSpec, first: &Spectral, x: &Spectral, sigma: &Spectral) -> f64 {
    evaluate_spectral(spec, first, &x.kron(sigma))
        .map(|v| v.value)
        .unwrap_or(f64::INFINITY)
}

/// Clamps eigenvalues to at least [`SIGMA_FLOOR`] and renormalizes.
fn floor_state(m: &ComplexMatrix) -> DensityOperator {
    let spectrum = linalg::eigh_unchecked(&linalg::hermitian_part(m));
    let total: f64 = spectrum.eigenvalues.iter().map(|&v| v.max(SIGMA_FLOOR)).sum();
    let floored = spectrum
        .apply(|v| v.max(SIGMA_FLOOR) / total, false)
        .expect("finite floor");
    DensityOperator::normalized_unchecked(floored)
}

/// Lower-triangular factor `L` with real diagonal; `d²` real parameters.
fn params_from_state(sigma: &DensityOperator) -> DVector<f64> {
    let d = sigma.dim();
    let chol = floor_state(sigma.matrix()).into_matrix().cholesky();
    let l = chol.map(|ch| ch.l()).unwrap_or_else(|| linalg::identity(d));
    let mut x = Vec::with_capacity(d * d);
    for i in 0..d {
        x.push(l[(i, i)].re);
    }
    for i in 0..d {
        for j in 0..i {
            x.push(l[(i, j)].re);
            x.push(l[(i, j)].im);
        }
    }
    DVector::from_vec(x)
}

fn state_from_params(x: &DVector<f64>, d: usize) -> DensityOperator {
    let mut l = linalg::zeros(d, d);
    for i in 0..d {
        l[(i, i)] = c(x[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in 0..i {
            l[(i, j)] = c(x[k], x[k + 1]);
            k += 2;
        }
    }
    let g = &l * l.adjoint();
    if !(linalg::trace(&g).re > 0.0) {
        return DensityOperator::maximally_mixed(d);
    }
    floor_state(&g.unscale(linalg::trace(&g).re))
}

struct BfgsOutcome {
    x: DVector<f64>,
    converged: bool,
}

fn gradient(f: &mut impl FnMut(&DVector<f64>) -> f64, x: &DVector<f64>, fx: f64) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = FD_STEP * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => 0.0,
        };
    }
    g
}

/// Quasi-Newton descent with Armijo backtracking and finite-difference gradients.
fn bfgs(mut f: impl FnMut(&DVector<f64>) -> f64, x0: DVector<f64>, tol: f64, max_iter: usize) -> BfgsOutcome {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    if !fx.is_finite() {
        return BfgsOutcome {
            x,
            converged: false,
        };
    }
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut g = gradient(&mut f, &x, fx);
    let mut small_steps = 0;
    for _ in 0..max_iter {
        if g.amax() <= 1e-10 {
            return BfgsOutcome {
                x,
                converged: true,
            };
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..LINE_SEARCH_HALVINGS {
            let trial = &x + &dir * step;
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if !fresh {
                h_inv = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            // No descent left at finite-difference resolution.
            return BfgsOutcome {
                converged: g.amax() <= tol.sqrt(),
                x,
            };
        };
        let g_new = gradient(&mut f, &x_new, f_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 {
            if fresh {
                h_inv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        let decrease = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if decrease <= tol * fx.abs().max(1.0) {
            small_steps += 1;
            if small_steps >= 2 {
                return BfgsOutcome {
                    x,
                    converged: true,
                };
            }
        } else {
            small_steps = 0;
        }
    }
    BfgsOutcome {
        x,
        converged: false,
    }
}

/// Minimizes `σ ↦ D(first ‖ X ⊗ σ)` over full-rank states on B from the given starts.
fn solve_sigma(
    spec: &DivergenceSpec,
    first: &Spectral,
    x: &Spectral,
    d_b: usize,
    starts: &[DensityOperator],
    cfg: &OptimizerConfig,
) -> SigmaSolution {
    if d_b == 1 {
        let sigma = DensityOperator::maximally_mixed(1);
        let value = pair_value(spec, first, x, &Spectral::of_state(&sigma));
        return SigmaSolution {
            sigma,
            value,
            converged: value.is_finite(),
        };
    }
    let mut best: Option<SigmaSolution> = None;
    for start in starts {
        let objective = |p: &DVector<f64>| pair_value(spec, first, x, &Spectral::of_state(&state_from_params(p, d_b)));
        let run = bfgs(objective, params_from_state(start), cfg.sigma_tolerance, cfg.sigma_max_iterations);
        let sigma = state_from_params(&run.x, d_b);
        let value = pair_value(spec, first, x, &Spectral::of_state(&sigma));
        let improves = match &best {
            None => true,
            Some(b) => value < b.value || (b.value.is_infinite() && value.is_infinite() && run.converged),
        };
        if improves {
            best = Some(SigmaSolution {
                sigma,
                value,
                converged: run.converged && value.is_finite(),
            });
        }
    }
    best.expect("at least one start")
}

fn default_starts(marginal_b: &DensityOperator, cfg: &OptimizerConfig, stream: u64) -> Vec<DensityOperator> {
    let d_b = marginal_b.dim();
    let mut starts = vec![floor_state(marginal_b.matrix()), DensityOperator::maximally_mixed(d_b)];
    for i in 0..cfg.sigma_random_starts {
        let mut rng = TrialRng::new(restart_seed(cfg.seed ^ stream, i as u64));
        starts.push(random_state(&mut rng, d_b, None));
    }
    starts
}

/// `inf_σ D(ρ_AB ‖ X_A ⊗ σ_B)` with `X_A` chosen by `first_factor`.
pub fn minimize_sigma_b(
    spec: &DivergenceSpec,
    rho: &BipartiteState,
    first_factor: FirstFactor,
    cfg: &OptimizerConfig,
) -> Result<SigmaSolution> {
    spec.validate()?;
    cfg.validate()?;
    let x = Spectral::new(&first_factor.operator(rho));
    let starts = default_starts(&rho.marginal(Subsystem::B), cfg, 0);
    Ok(solve_sigma(spec, &Spectral::of_state(rho.state()), &x, rho.dim_b(), &starts, cfg))
}

#[derive(Debug, Clone)]
pub struct SmoothingOutcome {
    pub candidate: DensityOperator,
    pub value: f64,
    pub evaluations: usize,
}

/// `(1 − s)·center + s·τ` with `s = fraction × ` the largest mixing weight that stays in the ball.
pub fn mixture_candidate(ball: &SmoothingBall, tau: &DensityOperator, fraction: f64) -> DensityOperator {
    ball.center().mix(tau, fraction.clamp(0.0, 1.0) * boundary_fraction(ball, tau))
}

/// Largest `s ∈ [0, 1]` with `(1 − s)·center + s·τ` inside the ball.
fn boundary_fraction(ball: &SmoothingBall, tau: &DensityOperator) -> f64 {
    let inside = |s: f64| {
        ball.contains(&ball.center().mix(tau, s))
            .map(|m| m.inside)
            .unwrap_or(false)
    };
    if inside(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Hermitian square root, used as the factor `G` in `ρ̂ = GG†/Tr[GG†]`.
fn state_factor(rho: &DensityOperator) -> ComplexMatrix {
    linalg::eigh_unchecked(rho.matrix())
        .apply(|v| v.max(0.0).sqrt(), false)
        .expect("finite square root")
}

/// Randomized search for a low-objective member of `ball`.
///
/// Each restart mixes the center towards a seeded state (the maximally mixed state first)
/// up to the ball boundary, then hill-climbs on the factor `G` of `ρ̂ = GG†/Tr[GG†]`,
/// rejecting proposals outside the ball. `warm` candidates are evaluated as well.
pub fn smooth_search(
    ball: &SmoothingBall,
    objective: &mut dyn FnMut(&DensityOperator) -> f64,
    cfg: &OptimizerConfig,
    warm: &[DensityOperator],
) -> SmoothingOutcome {
    let center = ball.center().clone();
    let mut evaluations = 1;
    let center_value = objective(&center);
    let mut best_value = center_value;
    let mut best = center.clone();
    let in_ball = |cand: &DensityOperator| ball.contains(cand).map(|m| m.inside).unwrap_or(false);
    for w in warm {
        if w.dim() == center.dim() && in_ball(w) {
            evaluations += 1;
            let v = objective(w);
            if v < best_value {
                best_value = v;
                best = w.clone();
            }
        }
    }
    if ball.epsilon() == 0.0 {
        return SmoothingOutcome {
            candidate: best,
            value: best_value,
            evaluations,
        };
    }
    let d = center.dim();
    for r in 0..cfg.smoothing_restarts {
        let mut rng = TrialRng::new(restart_seed(cfg.seed, r as u64));
        let tau = if r == 0 {
            DensityOperator::maximally_mixed(d)
        } else {
            random_state(&mut rng, d, None)
        };
        let s_max = boundary_fraction(ball, &tau);
        // The first restart continues from the best point so far (possibly a warm start).
        let (mut current, mut current_value) = if r == 0 {
            (best.clone(), best_value)
        } else {
            (center.clone(), center_value)
        };
        for frac in [1.0, 0.5, 0.25] {
            let cand = center.mix(&tau, frac * s_max);
            if !in_ball(&cand) {
                continue;
            }
            evaluations += 1;
            let v = objective(&cand);
            if v < current_value {
                current = cand;
                current_value = v;
            }
        }

        let mut g = state_factor(&current);
        let mut step = 0.1;
        for _ in 0..cfg.smoothing_step_budget {
            if step < SEARCH_MIN_STEP {
                break;
            }
            let noise = rng.ginibre(d, d);
            let scale = step * linalg::frobenius(&g) / linalg::frobenius(&noise);
            let g_new = &g + noise.scale(scale);
            let gg = &g_new * g_new.adjoint();
            let cand = DensityOperator::normalized_unchecked(gg);
            if !in_ball(&cand) {
                step *= 0.9;
                continue;
            }
            evaluations += 1;
            let v = objective(&cand);
            if v < current_value {
                g = g_new;
                current = cand;
                current_value = v;
                step = (step * 1.5).min(1.0);
            } else {
                step *= 0.9;
            }
        }
        if current_value < best_value {
            best_value = current_value;
            best = current;
        }
    }
    SmoothingOutcome {
        candidate: best,
        value: best_value,
        evaluations,
    }
}

/// Witnesses from a previous solve, reused as starting points.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub sigma: Option<DensityOperator>,
    pub candidate: Option<DensityOperator>,
}

impl From<&QuantityResult> for WarmStart {
    fn from(r: &QuantityResult) -> Self {
        Self {
            sigma: r.sigma_witness.clone(),
            candidate: r.smoothing_witness.clone(),
        }
    }
}

fn signed(family: Family, divergence: f64) -> f64 {
    if family.is_conditional() {
        -divergence
    } else {
        divergence
    }
}

fn inexact(family: Family) -> Exactness {
    if family.is_conditional() {
        Exactness::LowerBound
    } else {
        Exactness::UpperBound
    }
}

/// `D(ρ̂ ‖ X_A ⊗ Y_B)` for the given witnesses: the objective the family minimizes.
///
/// H-type values are the negation of this. `candidate` defaults to `ρ` and is ignored by
/// unsmoothed families; `sigma` is required exactly when the family minimizes over `σ_B`.
pub fn objective_at(
    family: Family,
    spec: &DivergenceSpec,
    rho: &BipartiteState,
    sigma: Option<&DensityOperator>,
    candidate: Option<&DensityOperator>,
) -> Result<f64> {
    spec.validate()?;
    let first = match candidate {
        Some(cand) if family.is_smoothed() => {
            dim_check(rho, cand)?;
            cand
        }
        _ => rho.state(),
    };
    let x = Spectral::new(&family.first_factor().operator(rho));
    let y = if family.minimizes_sigma() {
        let s = sigma.ok_or_else(|| Error::Parameter(format!("{family} needs a sigma witness")))?;
        if s.dim() != rho.dim_b() {
            return Err(Error::dims(rho.dim_b(), s.dim()));
        }
        s.clone()
    } else {
        let with = BipartiteState::new(first.clone(), rho.dim_a(), rho.dim_b())?;
        with.marginal(Subsystem::B)
    };
    Ok(pair_value(spec, &Spectral::of_state(first), &x, &Spectral::of_state(&y)))
}

fn unsmoothed(family: Family, spec: &DivergenceSpec, rho: &BipartiteState, cfg: &OptimizerConfig, warm: &WarmStart) -> QuantityResult {
    let first = Spectral::of_state(rho.state());
    let x = Spectral::new(&family.first_factor().operator(rho));
    if !family.minimizes_sigma() {
        let value = pair_value(spec, &first, &x, &Spectral::of_state(&rho.marginal(Subsystem::B)));
        return QuantityResult {
            value: signed(family, value),
            exactness: Exactness::Exact,
            sigma_witness: None,
            smoothing_witness: None,
            converged: value.is_finite(),
        };
    }
    let mut starts = default_starts(&rho.marginal(Subsystem::B), cfg, 0);
    starts.extend(warm.sigma.iter().filter(|s| s.dim() == rho.dim_b()).cloned());
    let sol = solve_sigma(spec, &first, &x, rho.dim_b(), &starts, cfg);
    QuantityResult {
        value: signed(family, sol.value),
        exactness: if sol.converged { Exactness::Exact } else { inexact(family) },
        sigma_witness: Some(sol.sigma),
        smoothing_witness: None,
        converged: sol.converged,
    }
}

fn smoothed(
    family: Family,
    spec: &DivergenceSpec,
    rho: &BipartiteState,
    epsilon: f64,
    cfg: &OptimizerConfig,
    warm: &WarmStart,
) -> Result<QuantityResult> {
    let (da, db) = rho.dims();
    if epsilon == 0.0 {
        let inner = match family {
            Family::I3 => Family::I2,
            Family::H3 => Family::H2,
            _ => Family::I1,
        };
        let mut r = unsmoothed(inner, spec, rho, cfg, warm);
        r.smoothing_witness = Some(rho.state().clone());
        return Ok(r);
    }
    let ball = SmoothingBall::new(rho.state().clone(), epsilon)?;
    let x = Spectral::new(&family.first_factor().operator(rho));
    let warm_candidates: Vec<DensityOperator> = warm.candidate.iter().cloned().collect();
    let marginal_b = |cand: &DensityOperator| {
        DensityOperator::from_matrix_unchecked(
            linalg::partial_trace(cand.matrix(), (da, db), Subsystem::B).expect("dims match"),
        )
    };

    if family == Family::I4 {
        let mut objective = |cand: &DensityOperator| {
            pair_value(spec, &Spectral::of_state(cand), &x, &Spectral::of_state(&marginal_b(cand)))
        };
        let found = smooth_search(&ball, &mut objective, cfg, &warm_candidates);
        let finite = found.value.is_finite();
        return Ok(QuantityResult {
            value: found.value,
            exactness: Exactness::UpperBound,
            sigma_witness: None,
            smoothing_witness: Some(found.candidate),
            converged: finite,
        });
    }

    // Alternate: σ at the center, smoothing with σ fixed, σ re-solved at the best candidate.
    let center = Spectral::of_state(rho.state());
    let mut starts = default_starts(&rho.marginal(Subsystem::B), cfg, 0);
    starts.extend(warm.sigma.iter().filter(|s| s.dim() == db).cloned());
    let at_center = solve_sigma(spec, &center, &x, db, &starts, cfg);
    let sigma0 = Spectral::of_state(&at_center.sigma);
    let mut objective = |cand: &DensityOperator| pair_value(spec, &Spectral::of_state(cand), &x, &sigma0);
    let found = smooth_search(&ball, &mut objective, cfg, &warm_candidates);

    let cand_spec = Spectral::of_state(&found.candidate);
    let mut restarts = vec![at_center.sigma.clone(), floor_state(marginal_b(&found.candidate).matrix())];
    restarts.extend(warm.sigma.iter().filter(|s| s.dim() == db).cloned());
    let refined = solve_sigma(spec, &cand_spec, &x, db, &restarts, cfg);

    let mut best = (refined.value, found.candidate.clone(), refined.sigma.clone(), refined.converged);
    let center_pair = pair_value(spec, &center, &x, &sigma0);
    if center_pair < best.0 {
        best = (center_pair, rho.state().clone(), at_center.sigma.clone(), at_center.converged);
    }
    if let (Some(cand), Some(sigma)) = (&warm.candidate, &warm.sigma) {
        if cand.dim() == rho.state().dim() && sigma.dim() == db && ball.contains(cand)?.inside {
            let v = pair_value(spec, &Spectral::of_state(cand), &x, &Spectral::of_state(sigma));
            if v < best.0 {
                best = (v, cand.clone(), sigma.clone(), refined.converged);
            }
        }
    }
    let (value, candidate, sigma, converged) = best;
    let converged = converged && value.is_finite();
    Ok(QuantityResult {
        value: signed(family, value),
        exactness: inexact(family),
        sigma_witness: Some(sigma),
        smoothing_witness: Some(candidate),
        converged,
    })
}

/// Computes any quantity type; `warm` witnesses are reused as extra starting points.
pub fn compute_with_warm_start(
    kind: &QuantityKind,
    spec: &DivergenceSpec,
    rho: &BipartiteState,
    cfg: &OptimizerConfig,
    warm: &WarmStart,
) -> Result<QuantityResult> {
    spec.validate()?;
    cfg.validate()?;
    let kind = QuantityKind::new(kind.family, kind.epsilon)?;
    match kind.epsilon {
        Some(eps) => smoothed(kind.family, spec, rho, eps, cfg, warm),
        None => Ok(unsmoothed(kind.family, spec, rho, cfg, warm)),
    }
}

pub fn compute(kind: &QuantityKind, spec: &DivergenceSpec, rho: &BipartiteState, cfg: &OptimizerConfig) -> Result<QuantityResult> {
    compute_with_warm_start(kind, spec, rho, cfg, &WarmStart::default())
}

pub fn i1(spec: &DivergenceSpec, rho: &BipartiteState) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::I1, None)?, spec, rho, &OptimizerConfig::default())
}

pub fn i2(spec: &DivergenceSpec, rho: &BipartiteState, cfg: &OptimizerConfig) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::I2, None)?, spec, rho, cfg)
}

pub fn i3(spec: &DivergenceSpec, rho: &BipartiteState, epsilon: f64, cfg: &OptimizerConfig) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::I3, Some(epsilon))?, spec, rho, cfg)
}

pub fn i4(spec: &DivergenceSpec, rho: &BipartiteState, epsilon: f64, cfg: &OptimizerConfig) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::I4, Some(epsilon))?, spec, rho, cfg)
}

pub fn h1(spec: &DivergenceSpec, rho: &BipartiteState) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::H1, None)?, spec, rho, &OptimizerConfig::default())
}

pub fn h2(spec: &DivergenceSpec, rho: &BipartiteState, cfg: &OptimizerConfig) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::H2, None)?, spec, rho, cfg)
}

pub fn h3(spec: &DivergenceSpec, rho: &BipartiteState, epsilon: f64, cfg: &OptimizerConfig) -> Result<QuantityResult> {
    compute(&QuantityKind::new(Family::H3, Some(epsilon))?, spec, rho, cfg)
}

/// A smoothed family over ascending `epsilons`, each solve warm-started from the previous
/// witnesses. Since the balls are nested, the values are non-increasing in `ε` exactly.
pub fn smoothed_sweep(
    family: Family,
    spec: &DivergenceSpec,
    rho: &BipartiteState,
    epsilons: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Vec<QuantityResult>> {
    if !family.is_smoothed() {
        return Err(Error::Parameter(format!("{family} is not a smoothed quantity")));
    }
    if epsilons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("epsilons must be ascending".into()));
    }
    let mut warm = WarmStart::default();
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let r = compute_with_warm_start(&QuantityKind::new(family, Some(eps))?, spec, rho, cfg, &warm)?;
        warm = WarmStart::from(&r);
        out.push(r);
    }
    Ok(out)
}

/// Pushes witnesses forward: `σ_B ↦ V_B σ_B V_B†`, `ρ̂ ↦ (V_A ⊗ V_B) ρ̂ (V_A ⊗ V_B)†`.
pub fn transport_candidates(
    v: &LocalIsometry,
    sigma_b: &DensityOperator,
    candidate: Option<&DensityOperator>,
) -> Result<(DensityOperator, Option<DensityOperator>)> {
    let sigma = v.v_b().apply_state(sigma_b)?;
    let cand = candidate.map(|c| v.joint().apply_state(c)).transpose()?;
    Ok((sigma, cand))
}

/// Pulls witnesses on the output space back through a reversal channel `R` of `v`:
/// `σ̃_B ↦ Tr_A[R(V_A π_A V_A† ⊗ σ̃_B)]` and `ρ̃ ↦ R(ρ̃)`.
pub fn pullback_candidates(
    v: &LocalIsometry,
    reversal: &ReversalChannel,
    sigma_b: Option<&DensityOperator>,
    candidate: Option<&DensityOperator>,
) -> Result<(Option<DensityOperator>, Option<DensityOperator>)> {
    let (da, db) = v.dims_in();
    let sigma = match sigma_b {
        Some(s) => {
            let pushed_a = v.v_a().apply_state(&DensityOperator::maximally_mixed(da))?;
            let joint = reversal.apply_state(&pushed_a.kron(s))?;
            let reduced = linalg::partial_trace(joint.matrix(), (da, db), Subsystem::B)?;
            Some(DensityOperator::from_matrix_unchecked(reduced))
        }
        None => None,
    };
    let cand = candidate.map(|c| reversal.apply_state(c)).transpose()?;
    Ok((sigma, cand))
}
