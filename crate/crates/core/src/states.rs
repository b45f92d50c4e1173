//! Validated states, positive operators and bipartite structure.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, Subsystem};

/// Tolerance for Hermiticity, positivity and unit trace of validated operators.
pub const STATE_TOL: f64 = 1e-10;

/// Additive slack applied to the fidelity bound of a smoothing ball.
pub const BALL_SLACK: f64 = 1e-12;

fn check_square(m: &ComplexMatrix) -> Result<usize> {
    if m.nrows() == 0 || !m.is_square() {
        return Err(Error::Validation(format!(
            "operator must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn validate_positive(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_square(m)?;
    let defect = linalg::hermiticity_defect(m);
    if defect > STATE_TOL {
        return Err(Error::Validation(format!(
            "operator is not Hermitian: relative ‖X − X†‖_F = {defect:e} exceeds {STATE_TOL:e}"
        )));
    }
    let h = linalg::hermitian_part(m);
    let spectrum = linalg::eigh_unchecked(&h);
    let min = spectrum.min_eigenvalue();
    let bound = STATE_TOL * spectrum.max_abs_eigenvalue().max(1.0);
    if min < -bound {
        return Err(Error::Validation(format!(
            "operator is not positive semidefinite: minimum eigenvalue {min:e} below −{bound:e}"
        )));
    }
    Ok(h)
}

/// A positive-semidefinite operator with unconstrained trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveOperator {
    matrix: ComplexMatrix,
}

impl PositiveOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Ok(Self {
            matrix: validate_positive(&matrix)?,
        })
    }

    /// Wraps a matrix known to be positive by construction; only the Hermitian part is kept.
    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: linalg::hermitian_part(&matrix),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: linalg::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn kron(&self, other: &PositiveOperator) -> PositiveOperator {
        Self::from_matrix_unchecked(linalg::kron(&self.matrix, &other.matrix))
    }
}

/// A quantum state: positive semidefinite with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let h = validate_positive(&matrix)?;
        let tr = linalg::trace(&h).re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!(
                "state must have unit trace, got {tr}"
            )));
        }
        Ok(Self { matrix: h })
    }

    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: linalg::hermitian_part(&matrix),
        }
    }

    /// Rescales a positive matrix to unit trace.
    pub(crate) fn normalized_unchecked(matrix: ComplexMatrix) -> Self {
        let tr = linalg::trace(&matrix).re;
        Self::from_matrix_unchecked(matrix.unscale(tr))
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm_sqr: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if psi.is_empty() || norm_sqr <= 0.0 || !norm_sqr.is_finite() {
            return Err(Error::Validation("state vector must be non-zero and finite".into()));
        }
        let n = psi.len();
        let m = ComplexMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / norm_sqr);
        Ok(Self::from_matrix_unchecked(m))
    }

    /// `|k⟩⟨k|` in dimension `d`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut m = linalg::zeros(d, d);
        m[(k, k)] = c(1.0, 0.0);
        Self { matrix: m }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: linalg::identity(d).unscale(d as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn as_positive(&self) -> PositiveOperator {
        PositiveOperator {
            matrix: self.matrix.clone(),
        }
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.matrix, &self.matrix).re
    }

    pub fn kron(&self, other: &DensityOperator) -> DensityOperator {
        Self::from_matrix_unchecked(linalg::kron(&self.matrix, &other.matrix))
    }

    /// `(1 − s)·self + s·other`.
    pub fn mix(&self, other: &DensityOperator, s: f64) -> DensityOperator {
        Self::from_matrix_unchecked(self.matrix.scale(1.0 - s) + other.matrix.scale(s))
    }
}

impl From<DensityOperator> for PositiveOperator {
    fn from(rho: DensityOperator) -> Self {
        PositiveOperator { matrix: rho.matrix }
    }
}

/// A state on `A ⊗ B` tagged with its subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    dim_a: usize,
    dim_b: usize,
    state: DensityOperator,
}

impl BipartiteState {
    pub fn new(state: DensityOperator, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || dim_a * dim_b != state.dim() {
            return Err(Error::dims(
                format!("{dim_a}·{dim_b} = {}", dim_a * dim_b),
                state.dim(),
            ));
        }
        Ok(Self { dim_a, dim_b, state })
    }

    pub fn product(rho_a: &DensityOperator, rho_b: &DensityOperator) -> Self {
        Self {
            dim_a: rho_a.dim(),
            dim_b: rho_b.dim(),
            state: rho_a.kron(rho_b),
        }
    }

    /// `|Φ_d⟩ = Σ_i |ii⟩/√d`.
    pub fn maximally_entangled(d: usize) -> Self {
        let mut psi = vec![c(0.0, 0.0); d * d];
        for i in 0..d {
            psi[i * d + i] = c(1.0, 0.0);
        }
        Self {
            dim_a: d,
            dim_b: d,
            state: DensityOperator::pure(&psi).expect("non-zero vector"),
        }
    }

    pub fn maximally_mixed(dim_a: usize, dim_b: usize) -> Self {
        Self {
            dim_a,
            dim_b,
            state: DensityOperator::maximally_mixed(dim_a * dim_b),
        }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    pub fn state(&self) -> &DensityOperator {
        &self.state
    }

    pub fn into_state(self) -> DensityOperator {
        self.state
    }

    pub fn marginal(&self, keep: Subsystem) -> DensityOperator {
        marginal(self, keep)
    }

    /// Same subsystem split, different joint state.
    pub fn with_state(&self, state: DensityOperator) -> Result<Self> {
        Self::new(state, self.dim_a, self.dim_b)
    }
}

/// A smoothing ball `{ρ̂ : F(center, ρ̂) ≥ 1 − ε²}` over normalized states.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingBall {
    center: DensityOperator,
    epsilon: f64,
    sqrt_center: ComplexMatrix,
}

impl SmoothingBall {
    pub fn new(center: DensityOperator, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Parameter(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        let sqrt_center = sqrt_factor(center.matrix());
        Ok(Self {
            center,
            epsilon,
            sqrt_center,
        })
    }

    pub fn center(&self) -> &DensityOperator {
        &self.center
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Minimum fidelity `1 − ε²` a member must reach.
    pub fn fidelity_bound(&self) -> f64 {
        1.0 - self.epsilon * self.epsilon
    }

    pub fn contains(&self, candidate: &DensityOperator) -> Result<BallMembership> {
        in_ball(candidate, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallMembership {
    pub inside: bool,
    /// `F(center, candidate) − (1 − ε²)`.
    pub margin: f64,
}

pub fn marginal(rho: &BipartiteState, keep: Subsystem) -> DensityOperator {
    let m = linalg::partial_trace(rho.state.matrix(), rho.dims(), keep)
        .expect("bipartite dims are validated on construction");
    DensityOperator::from_matrix_unchecked(m)
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dims(a, b));
    }
    Ok(())
}

fn sqrt_factor(sigma: &ComplexMatrix) -> ComplexMatrix {
    // Round-off eigenvalues below the support threshold would contribute O(√1e-16) otherwise.
    linalg::eigh_unchecked(sigma)
        .apply(f64::sqrt, true)
        .expect("sqrt of support eigenvalues is finite")
}

/// Fidelity `(Tr √(√σ ρ √σ))²` of two positive matrices, without validation.
pub(crate) fn fidelity_raw(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> f64 {
    fidelity_with_sqrt(rho, &sqrt_factor(sigma))
}

fn fidelity_with_sqrt(rho: &ComplexMatrix, sqrt_sigma: &ComplexMatrix) -> f64 {
    let inner = linalg::eigh_unchecked(&linalg::hermitian_part(&linalg::conjugate(sqrt_sigma, rho)));
    let thr = inner.support_threshold();
    let root_sum: f64 = inner.eigenvalues.iter().filter(|&&v| v > thr).map(|&v| v.sqrt()).sum();
    root_sum * root_sum
}

pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    check_same_dim(rho.dim(), sigma.dim())?;
    Ok(fidelity_raw(rho.matrix(), sigma.matrix()).clamp(0.0, 1.0))
}

pub fn sine_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    Ok((1.0 - fidelity(rho, sigma)?).max(0.0).sqrt())
}

pub fn in_ball(candidate: &DensityOperator, ball: &SmoothingBall) -> Result<BallMembership> {
    check_same_dim(candidate.dim(), ball.center.dim())?;
    let f = fidelity_with_sqrt(candidate.matrix(), &ball.sqrt_center).clamp(0.0, 1.0);
    let margin = f - ball.fidelity_bound();
    Ok(BallMembership {
        inside: margin >= -BALL_SLACK,
        margin,
    })
}

/// Purifies `ρ` onto `system ⊗ environment` with environment dimension `rank(ρ)`.
pub fn purify(rho: &DensityOperator) -> BipartiteState {
    let spectrum = linalg::eigh_unchecked(rho.matrix());
    let thr = spectrum.support_threshold();
    let kept: Vec<usize> = (0..spectrum.dim())
        .rev()
        .filter(|&k| spectrum.eigenvalues[k] > thr)
        .collect();
    let d = rho.dim();
    let r = kept.len().max(1);
    let mut psi = vec![c(0.0, 0.0); d * r];
    for (env, &k) in kept.iter().enumerate() {
        let weight = spectrum.eigenvalues[k].sqrt();
        for sys in 0..d {
            psi[sys * r + env] = spectrum.eigenvectors[(sys, k)] * weight;
        }
    }
    let state = DensityOperator::pure(&psi).expect("purification vector has unit norm");
    BipartiteState {
        dim_a: d,
        dim_b: r,
        state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, frobenius_distance, identity};
    use crate::sampling::{random_state, random_unitary, TrialRng};

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(matches!(DensityOperator::new(diag(&[0.5, 0.6])), Err(Error::Validation(m)) if m.contains("unit trace")));
        assert!(matches!(DensityOperator::new(diag(&[1.5, -0.5])), Err(Error::Validation(m)) if m.contains("positive")));
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(DensityOperator::new(m), Err(Error::Validation(m)) if m.contains("Hermitian")));
        assert!(PositiveOperator::new(diag(&[3.0, 0.0])).is_ok());
    }

    #[test]
    fn marginal_examples() {
        let mut rng = TrialRng::new(1);
        let ra = random_state(&mut rng, 2, None);
        let rb = random_state(&mut rng, 2, None);
        let prod = BipartiteState::product(&ra, &rb);
        assert!(frobenius_distance(marginal(&prod, Subsystem::A).matrix(), ra.matrix()) < 1e-12);

        let bell = BipartiteState::maximally_entangled(2);
        let m = marginal(&bell, Subsystem::A);
        assert!(frobenius_distance(m.matrix(), &identity(2).scale(0.5)) < 1e-15);

        let mixed = BipartiteState::maximally_mixed(2, 3);
        let mb = marginal(&mixed, Subsystem::B);
        assert!(frobenius_distance(mb.matrix(), &identity(3).unscale(3.0)) < 1e-15);
        assert!(DensityOperator::new(mb.into_matrix()).is_ok());
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = TrialRng::new(2);
        let rho = random_state(&mut rng, 3, None);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-10);

        let zero = DensityOperator::basis(2, 0);
        let one = DensityOperator::basis(2, 1);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-15);
        assert!((sine_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-15);

        // F(|0⟩⟨0|, 𝟙/2) = (√(1/2))² = 1/2.
        let half = DensityOperator::maximally_mixed(2);
        assert!((fidelity(&zero, &half).unwrap() - 0.5).abs() < 1e-14);
        assert!(sine_distance(&rho, &rho).unwrap() < 1e-5);
    }

    #[test]
    fn sine_distance_from_fidelity_three_quarters() {
        // |ψ⟩ = cos θ|0⟩ + sin θ|1⟩ with cos²θ = 3/4 gives F = 3/4 against |0⟩.
        let psi = [c(0.75_f64.sqrt(), 0.0), c(0.5, 0.0)];
        let rho = DensityOperator::pure(&psi).unwrap();
        let zero = DensityOperator::basis(2, 0);
        assert!((fidelity(&zero, &rho).unwrap() - 0.75).abs() < 1e-14);
        assert!((sine_distance(&zero, &rho).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let a = DensityOperator::maximally_mixed(2);
        let b = DensityOperator::maximally_mixed(3);
        assert!(matches!(fidelity(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fidelity_is_symmetric_and_unitarily_invariant() {
        let mut rng = TrialRng::new(3);
        for _ in 0..20 {
            let rho = random_state(&mut rng, 4, None);
            let sigma = random_state(&mut rng, 4, Some(2));
            let f1 = fidelity(&rho, &sigma).unwrap();
            let f2 = fidelity(&sigma, &rho).unwrap();
            assert!((f1 - f2).abs() < 1e-10);
            let u = random_unitary(&mut rng, 4);
            let ur = DensityOperator::from_matrix_unchecked(linalg::conjugate(u.matrix(), rho.matrix()));
            let us = DensityOperator::from_matrix_unchecked(linalg::conjugate(u.matrix(), sigma.matrix()));
            assert!((fidelity(&ur, &us).unwrap() - f1).abs() < 1e-10);
        }
    }

    #[test]
    fn ball_membership_examples() {
        let mut rng = TrialRng::new(4);
        let rho = random_state(&mut rng, 3, None);
        for eps in [0.0, 0.1, 0.7] {
            let ball = SmoothingBall::new(rho.clone(), eps).unwrap();
            let m = in_ball(&rho, &ball).unwrap();
            assert!(m.inside);
            assert!((m.margin - eps * eps).abs() < 1e-10);
        }
        let other = random_state(&mut rng, 3, None);
        let ball0 = SmoothingBall::new(rho.clone(), 0.0).unwrap();
        assert!(!in_ball(&other, &ball0).unwrap().inside);
        assert!(SmoothingBall::new(rho, 1.5).is_err());
    }

    #[test]
    fn ball_boundary_by_bisection_on_mixing_weight() {
        let mut rng = TrialRng::new(5);
        let rho = random_state(&mut rng, 3, None);
        let tau = random_state(&mut rng, 3, Some(1));
        let eps = 0.2;
        let target = 1.0 - eps * eps;
        // Independent of the crate's own boundary search: plain bisection on F.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fidelity(&rho, &rho.mix(&tau, mid)).unwrap() >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ball = SmoothingBall::new(rho.clone(), eps).unwrap();
        let m = in_ball(&rho.mix(&tau, lo), &ball).unwrap();
        assert!(m.inside);
        assert!(m.margin.abs() < 1e-10);
    }

    #[test]
    fn purification_examples() {
        let pure = DensityOperator::basis(3, 1);
        let p = purify(&pure);
        assert_eq!(p.dim_b(), 1);
        assert!(frobenius_distance(p.state().matrix(), pure.matrix()) < 1e-14);

        let p = purify(&DensityOperator::maximally_mixed(2));
        assert_eq!(p.dims(), (2, 2));
        assert!((p.state().purity() - 1.0).abs() < 1e-12);
        assert!(frobenius_distance(marginal(&p, Subsystem::A).matrix(), &identity(2).scale(0.5)) < 1e-12);

        let mut rng = TrialRng::new(6);
        let rho = random_state(&mut rng, 4, Some(3));
        let p = purify(&rho);
        assert_eq!(p.dim_b(), 3);
        assert!(frobenius_distance(marginal(&p, Subsystem::A).matrix(), rho.matrix()) < 1e-10);
    }
}
