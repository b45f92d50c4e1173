//! Isometric channels, Kraus channels, reversal channels and Choi certification.

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, Subsystem};
use crate::states::{BipartiteState, DensityOperator, PositiveOperator};

/// Tolerance on `V†V = 𝟙`, `Σ K†K = 𝟙` and the Choi checks.
pub const CHANNEL_TOL: f64 = 1e-10;

/// A linear map on operators, `L(ℂ^dim_in) → L(ℂ^dim_out)`.
pub trait LinearMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix;
}

/// `V` with `V†V = 𝟙`, stored as a `dim_out × dim_in` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    matrix: ComplexMatrix,
}

impl Isometry {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        if cols == 0 || rows < cols {
            return Err(Error::Validation(format!(
                "isometry must satisfy dim_out ≥ dim_in ≥ 1, got {rows}x{cols}"
            )));
        }
        let defect = linalg::frobenius_distance(&(matrix.adjoint() * &matrix), &linalg::identity(cols));
        if defect > CHANNEL_TOL {
            return Err(Error::Validation(format!(
                "‖V†V − 𝟙‖_F = {defect:e} exceeds {CHANNEL_TOL:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: linalg::identity(d),
        }
    }

    /// `ℂ^d_in → ℂ^d_out` embedding onto the first `d_in` basis vectors.
    pub fn embedding(d_in: usize, d_out: usize) -> Result<Self> {
        Self::new(ComplexMatrix::from_fn(d_out, d_in, |i, j| {
            if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }
        }))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_unitary(&self) -> bool {
        self.dim_in() == self.dim_out()
    }

    pub fn kron(&self, other: &Isometry) -> Isometry {
        Isometry {
            matrix: linalg::kron(&self.matrix, &other.matrix),
        }
    }

    /// `VV†`, the projector onto the range.
    pub fn range_projector(&self) -> ComplexMatrix {
        &self.matrix * self.matrix.adjoint()
    }

    fn check_input(&self, d: usize) -> Result<()> {
        if d != self.dim_in() {
            return Err(Error::dims(self.dim_in(), d));
        }
        Ok(())
    }

    /// `V X V†`.
    pub fn apply(&self, x: &PositiveOperator) -> Result<PositiveOperator> {
        self.check_input(x.dim())?;
        Ok(PositiveOperator::from_matrix_unchecked(linalg::conjugate(&self.matrix, x.matrix())))
    }

    pub fn apply_state(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        self.check_input(rho.dim())?;
        Ok(DensityOperator::from_matrix_unchecked(linalg::conjugate(&self.matrix, rho.matrix())))
    }

    /// `V† X V`.
    pub fn adjoint_apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.matrix.adjoint() * x * &self.matrix
    }
}

impl LinearMap for Isometry {
    fn dim_in(&self) -> usize {
        Isometry::dim_in(self)
    }
    fn dim_out(&self) -> usize {
        Isometry::dim_out(self)
    }
    fn apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        linalg::conjugate(&self.matrix, x)
    }
}

/// `V_A ⊗ V_B` acting on a bipartite space.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalIsometry {
    v_a: Isometry,
    v_b: Isometry,
    joint: Isometry,
}

impl LocalIsometry {
    pub fn new(v_a: Isometry, v_b: Isometry) -> Self {
        let joint = v_a.kron(&v_b);
        Self { v_a, v_b, joint }
    }

    pub fn identity(dim_a: usize, dim_b: usize) -> Self {
        Self::new(Isometry::identity(dim_a), Isometry::identity(dim_b))
    }

    /// Splits a joint isometry `ℂ^{a·b} → ℂ^{a'·b'}` into `V_A ⊗ V_B`.
    ///
    /// Fails with a contract error when the operator-Schmidt rank exceeds one,
    /// i.e. the isometry entangles the two factors.
    pub fn factor(joint: &Isometry, dims_in: (usize, usize), dims_out: (usize, usize)) -> Result<Self> {
        let (a, b) = dims_in;
        let (a2, b2) = dims_out;
        if joint.dim_in() != a * b || joint.dim_out() != a2 * b2 {
            return Err(Error::dims(
                format!("{}x{}", a2 * b2, a * b),
                format!("{}x{}", joint.dim_out(), joint.dim_in()),
            ));
        }
        // Realignment: R[(i,j),(k,l)] = V[(i k),(j l)] so that V_A ⊗ V_B ↦ vec(V_A) vec(V_B)ᵀ.
        let m = joint.matrix();
        let realigned = ComplexMatrix::from_fn(a2 * a, b2 * b, |row, col| {
            let (i, j) = (row / a, row % a);
            let (k, l) = (col / b, col % b);
            m[(i * b2 + k, j * b + l)]
        });
        // A product operator realigns to a rank-one matrix x yᵀ: take x along the heaviest
        // column, project to get y, and measure what is left over.
        let pivot = (0..realigned.ncols())
            .max_by(|&i, &j| realigned.column(i).norm_squared().total_cmp(&realigned.column(j).norm_squared()))
            .expect("non-empty");
        let x = realigned.column(pivot).normalize();
        let y = x.adjoint() * &realigned;
        let tail = linalg::frobenius(&(&realigned - &x * &y));
        if tail > CHANNEL_TOL * linalg::frobenius(&realigned).max(1.0) {
            return Err(Error::Contract(format!(
                "isometry is not of local product form (operator-Schmidt tail {tail:e})"
            )));
        }
        let va = ComplexMatrix::from_fn(a2, a, |i, j| x[i * a + j]);
        let vb = ComplexMatrix::from_fn(b2, b, |k, l| y[k * b + l]);
        // Fix the split scalar so that V_A is itself an isometry.
        let na = linalg::frobenius(&va) / (a as f64).sqrt();
        let va = va.unscale(na);
        let vb = vb.scale(na);
        Ok(Self::new(Isometry::new(va)?, Isometry::new(vb)?))
    }

    pub fn v_a(&self) -> &Isometry {
        &self.v_a
    }

    pub fn v_b(&self) -> &Isometry {
        &self.v_b
    }

    pub fn joint(&self) -> &Isometry {
        &self.joint
    }

    pub fn a_is_unitary(&self) -> bool {
        self.v_a.is_unitary()
    }

    pub fn dims_in(&self) -> (usize, usize) {
        (self.v_a.dim_in(), self.v_b.dim_in())
    }

    pub fn dims_out(&self) -> (usize, usize) {
        (self.v_a.dim_out(), self.v_b.dim_out())
    }

    pub fn apply_bipartite(&self, rho: &BipartiteState) -> Result<BipartiteState> {
        if rho.dims() != self.dims_in() {
            return Err(Error::dims(format!("{:?}", self.dims_in()), format!("{:?}", rho.dims())));
        }
        let out = self.joint.apply_state(rho.state())?;
        let (a, b) = self.dims_out();
        BipartiteState::new(out, a, b)
    }
}

/// `R(σ) = V†σV + Tr[(𝟙 − VV†)σ]·ω`, a CPTP left inverse of `X ↦ VXV†`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversalChannel {
    isometry: Isometry,
    omega: DensityOperator,
}

impl ReversalChannel {
    pub fn new(isometry: Isometry, omega: DensityOperator) -> Result<Self> {
        if omega.dim() != isometry.dim_in() {
            return Err(Error::dims(isometry.dim_in(), omega.dim()));
        }
        Ok(Self { isometry, omega })
    }

    /// Reversal with `ω` maximally mixed on the input space.
    pub fn with_default_omega(isometry: Isometry) -> Self {
        let omega = DensityOperator::maximally_mixed(isometry.dim_in());
        Self { isometry, omega }
    }

    pub fn isometry(&self) -> &Isometry {
        &self.isometry
    }

    pub fn omega(&self) -> &DensityOperator {
        &self.omega
    }

    fn check_input(&self, d: usize) -> Result<()> {
        if d != self.isometry.dim_out() {
            return Err(Error::dims(self.isometry.dim_out(), d));
        }
        Ok(())
    }

    pub fn apply(&self, sigma: &PositiveOperator) -> Result<PositiveOperator> {
        self.check_input(sigma.dim())?;
        Ok(PositiveOperator::from_matrix_unchecked(self.apply_matrix(sigma.matrix())))
    }

    pub fn apply_state(&self, sigma: &DensityOperator) -> Result<DensityOperator> {
        self.check_input(sigma.dim())?;
        Ok(DensityOperator::from_matrix_unchecked(self.apply_matrix(sigma.matrix())))
    }
}

impl LinearMap for ReversalChannel {
    fn dim_in(&self) -> usize {
        self.isometry.dim_out()
    }
    fn dim_out(&self) -> usize {
        self.isometry.dim_in()
    }
    fn apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let pulled = self.isometry.adjoint_apply_matrix(x);
        // Tr[(𝟙 − VV†)X] = Tr[X] − Tr[V†XV].
        let deficit = linalg::trace(x) - linalg::trace(&pulled);
        pulled + self.omega.matrix() * deficit
    }
}

/// Which `ω` the reversal channel of a local isometry is built with.
#[derive(Debug, Clone)]
pub enum ReversalVariant {
    /// `ω = ρ_A ⊗ ω_B`; reverses `V_A(ρ_A) ⊗ σ_B` to `ρ_A ⊗ (·)` for any isometric `V_A`.
    MarginalA { rho_a: DensityOperator, omega_b: DensityOperator },
    /// `ω = π_A ⊗ ω_B`; maps `𝟙_A ⊗ σ_B` to `𝟙_A ⊗ (·)`. Requires unitary `V_A`.
    MaximallyMixedA { omega_b: DensityOperator },
    /// `ω = ρ_A ⊗ ω_B` with unitary `V_A`; also reverses arbitrary joint inputs to `ρ_A ⊗ Tr_A[R(σ_AB)]`.
    UnitaryMarginalA { rho_a: DensityOperator, omega_b: DensityOperator },
}

pub fn build_local_reversal(v: &LocalIsometry, variant: ReversalVariant) -> Result<ReversalChannel> {
    let (da, db) = v.dims_in();
    let check = |rho: &DensityOperator, d: usize| -> Result<()> {
        if rho.dim() != d {
            return Err(Error::dims(d, rho.dim()));
        }
        Ok(())
    };
    let require_unitary = || -> Result<()> {
        if !v.a_is_unitary() {
            return Err(Error::Contract(format!(
                "this reversal variant needs a unitary V_A, got a {}→{} isometry",
                v.v_a().dim_in(),
                v.v_a().dim_out()
            )));
        }
        Ok(())
    };
    let omega = match variant {
        ReversalVariant::MarginalA { rho_a, omega_b } => {
            check(&rho_a, da)?;
            check(&omega_b, db)?;
            rho_a.kron(&omega_b)
        }
        ReversalVariant::MaximallyMixedA { omega_b } => {
            require_unitary()?;
            check(&omega_b, db)?;
            DensityOperator::maximally_mixed(da).kron(&omega_b)
        }
        ReversalVariant::UnitaryMarginalA { rho_a, omega_b } => {
            require_unitary()?;
            check(&rho_a, da)?;
            check(&omega_b, db)?;
            rho_a.kron(&omega_b)
        }
    };
    ReversalChannel::new(v.joint().clone(), omega)
}

/// A channel in Kraus form, `X ↦ Σ K X K†`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Validation("Kraus set must be non-empty".into()))?;
        let shape = first.shape();
        if ops.iter().any(|k| k.shape() != shape) {
            return Err(Error::Validation("Kraus operators must share one shape".into()));
        }
        let mut sum = linalg::zeros(shape.1, shape.1);
        for k in &ops {
            sum += k.adjoint() * k;
        }
        let defect = linalg::frobenius_distance(&sum, &linalg::identity(shape.1));
        if defect > CHANNEL_TOL {
            return Err(Error::Validation(format!(
                "‖Σ K†K − 𝟙‖_F = {defect:e} exceeds {CHANNEL_TOL:e}"
            )));
        }
        Ok(Self { ops })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            ops: vec![linalg::identity(d)],
        }
    }

    /// Kraus set `{|i⟩⟨j|/√d}`, sending every state to `𝟙/d`.
    pub fn completely_depolarizing(d: usize) -> Self {
        let w = 1.0 / (d as f64).sqrt();
        let ops = (0..d * d)
            .map(|n| {
                let mut k = linalg::zeros(d, d);
                k[(n / d, n % d)] = c(w, 0.0);
                k
            })
            .collect();
        Self { ops }
    }

    /// Channel obtained from an isometry `ℂ^d_in → ℂ^d_out ⊗ ℂ^env` by tracing out the environment.
    pub fn from_stinespring(v: &Isometry, d_out: usize, env: usize) -> Result<Self> {
        if v.dim_out() != d_out * env {
            return Err(Error::dims(d_out * env, v.dim_out()));
        }
        let m = v.matrix();
        let ops = (0..env)
            .map(|e| ComplexMatrix::from_fn(d_out, v.dim_in(), |i, j| m[(i * env + e, j)]))
            .collect();
        Self::new(ops)
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn apply(&self, x: &PositiveOperator) -> Result<PositiveOperator> {
        if x.dim() != LinearMap::dim_in(self) {
            return Err(Error::dims(LinearMap::dim_in(self), x.dim()));
        }
        Ok(PositiveOperator::from_matrix_unchecked(self.apply_matrix(x.matrix())))
    }

    pub fn apply_state(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != LinearMap::dim_in(self) {
            return Err(Error::dims(LinearMap::dim_in(self), rho.dim()));
        }
        Ok(DensityOperator::from_matrix_unchecked(self.apply_matrix(rho.matrix())))
    }
}

impl LinearMap for KrausChannel {
    fn dim_in(&self) -> usize {
        self.ops[0].ncols()
    }
    fn dim_out(&self) -> usize {
        self.ops[0].nrows()
    }
    fn apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = linalg::zeros(self.dim_out(), self.dim_out());
        for k in &self.ops {
            out += linalg::conjugate(k, x);
        }
        out
    }
}

/// Matrix transpose, the standard positive but not completely positive map.
#[derive(Debug, Clone, Copy)]
pub struct TransposeMap(pub usize);

impl LinearMap for TransposeMap {
    fn dim_in(&self) -> usize {
        self.0
    }
    fn dim_out(&self) -> usize {
        self.0
    }
    fn apply_matrix(&self, x: &ComplexMatrix) -> ComplexMatrix {
        x.transpose()
    }
}

/// Choi operator `Σ_ij |i⟩⟨j| ⊗ N(|i⟩⟨j|)` on `input ⊗ output`.
pub fn choi_matrix(map: &impl LinearMap) -> ComplexMatrix {
    let (din, dout) = (map.dim_in(), map.dim_out());
    let mut choi = linalg::zeros(din * dout, din * dout);
    for i in 0..din {
        for j in 0..din {
            let mut unit = linalg::zeros(din, din);
            unit[(i, j)] = c(1.0, 0.0);
            let block = map.apply_matrix(&unit);
            choi.view_mut((i * dout, j * dout), (dout, dout)).copy_from(&block);
        }
    }
    choi
}

/// Complete positivity and trace preservation read off the Choi operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiCertificate {
    pub min_eigenvalue: f64,
    /// `‖Tr_out[J] − 𝟙‖_F`.
    pub trace_defect: f64,
}

impl ChoiCertificate {
    pub fn completely_positive(&self) -> bool {
        self.min_eigenvalue >= -CHANNEL_TOL
    }

    pub fn trace_preserving(&self) -> bool {
        self.trace_defect <= CHANNEL_TOL
    }
}

pub fn certify(map: &impl LinearMap) -> ChoiCertificate {
    let choi = choi_matrix(map);
    let spectrum = linalg::eigh_unchecked(&linalg::hermitian_part(&choi));
    let reduced = linalg::partial_trace(&choi, (map.dim_in(), map.dim_out()), Subsystem::A)
        .expect("Choi dims are consistent");
    ChoiCertificate {
        min_eigenvalue: spectrum.min_eigenvalue(),
        trace_defect: linalg::frobenius_distance(&reduced, &linalg::identity(map.dim_in())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_distance, kron};
    use crate::sampling::{random_channel, random_isometry, random_state, random_unitary, TrialRng};

    #[test]
    fn identity_isometry_is_a_no_op() {
        let mut rng = TrialRng::new(1);
        let rho = random_state(&mut rng, 3, None);
        let out = Isometry::identity(3).apply_state(&rho).unwrap();
        assert_eq!(out.matrix(), rho.matrix());
    }

    #[test]
    fn embedding_pads_with_zeros() {
        let mut rng = TrialRng::new(2);
        let rho = random_state(&mut rng, 2, None);
        let out = Isometry::embedding(2, 3).unwrap().apply_state(&rho).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i < 2 && j < 2 { rho.matrix()[(i, j)] } else { c(0.0, 0.0) };
                assert_eq!(out.matrix()[(i, j)], expect);
            }
        }
    }

    #[test]
    fn isometric_image_spectrum() {
        let mut rng = TrialRng::new(3);
        let rho = random_state(&mut rng, 3, None);
        let v = random_isometry(&mut rng, 3, 5);
        let mut lhs = linalg::eigh(v.apply_state(&rho).unwrap().matrix()).unwrap().eigenvalues;
        let mut rhs = linalg::eigh(rho.matrix()).unwrap().eigenvalues;
        rhs.extend([0.0, 0.0]);
        lhs.sort_by(f64::total_cmp);
        rhs.sort_by(f64::total_cmp);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn non_isometry_rejected() {
        assert!(Isometry::new(linalg::identity(2).scale(2.0)).is_err());
        assert!(Isometry::new(linalg::zeros(2, 3)).is_err());
    }

    #[test]
    fn reversal_undoes_the_isometry() {
        let mut rng = TrialRng::new(4);
        for _ in 0..20 {
            let rho = random_state(&mut rng, 3, None);
            let v = random_isometry(&mut rng, 3, 5);
            let omega = random_state(&mut rng, 3, None);
            let r = ReversalChannel::new(v.clone(), omega).unwrap();
            let back = r.apply_state(&v.apply_state(&rho).unwrap()).unwrap();
            assert!(frobenius_distance(back.matrix(), rho.matrix()) < 1e-12);
        }
    }

    #[test]
    fn reversal_of_unitary_is_conjugation() {
        let mut rng = TrialRng::new(5);
        let u = random_unitary(&mut rng, 3);
        let sigma = random_state(&mut rng, 3, None);
        let r = ReversalChannel::with_default_omega(u.clone());
        let out = r.apply_state(&sigma).unwrap();
        let expect = u.adjoint_apply_matrix(sigma.matrix());
        assert!(frobenius_distance(out.matrix(), &expect) < 1e-13);
    }

    #[test]
    fn reversal_of_off_range_input_is_omega() {
        let mut rng = TrialRng::new(6);
        let v = random_isometry(&mut rng, 2, 4);
        // Any unit vector orthogonal to range(V).
        let complement = linalg::identity(4) - v.range_projector();
        let spectrum = linalg::eigh(&complement).unwrap();
        let psi: Vec<_> = spectrum.eigenvectors.column(3).iter().copied().collect();
        let sigma = DensityOperator::pure(&psi).unwrap();
        let omega = random_state(&mut rng, 2, None);
        let r = ReversalChannel::new(v, omega.clone()).unwrap();
        let out = r.apply_state(&sigma).unwrap();
        assert!(frobenius_distance(out.matrix(), omega.matrix()) < 1e-12);
    }

    #[test]
    fn reversal_is_cptp_and_not_unique() {
        let mut rng = TrialRng::new(7);
        let v = random_isometry(&mut rng, 2, 4);
        let r1 = ReversalChannel::new(v.clone(), random_state(&mut rng, 2, None)).unwrap();
        let r2 = ReversalChannel::new(v.clone(), random_state(&mut rng, 2, None)).unwrap();
        for r in [&r1, &r2] {
            let cert = certify(r);
            assert!(cert.completely_positive(), "{cert:?}");
            assert!(cert.trace_preserving(), "{cert:?}");
        }
        let rho = random_state(&mut rng, 2, None);
        let image = v.apply_state(&rho).unwrap();
        let a = r1.apply_state(&image).unwrap();
        let b = r2.apply_state(&image).unwrap();
        assert!(frobenius_distance(a.matrix(), b.matrix()) < 1e-12);
        let off = random_state(&mut rng, 4, None);
        let a = r1.apply_state(&off).unwrap();
        let b = r2.apply_state(&off).unwrap();
        assert!(frobenius_distance(a.matrix(), b.matrix()) > 1e-6);
    }

    #[test]
    fn choi_examples() {
        let choi = choi_matrix(&KrausChannel::identity(2));
        let spectrum = linalg::eigh(&choi).unwrap().eigenvalues;
        let expect = [0.0, 0.0, 0.0, 2.0];
        for (x, y) in spectrum.iter().zip(expect) {
            assert!((x - y).abs() < 1e-14);
        }
        let cert = certify(&TransposeMap(2));
        assert!((cert.min_eigenvalue + 1.0).abs() < 1e-14);
        assert!(!cert.completely_positive());
        assert!(cert.trace_preserving());
    }

    #[test]
    fn kraus_examples() {
        let mut rng = TrialRng::new(8);
        let rho = random_state(&mut rng, 3, None);
        let out = KrausChannel::identity(3).apply_state(&rho).unwrap();
        assert!(frobenius_distance(out.matrix(), rho.matrix()) < 1e-15);

        let out = KrausChannel::completely_depolarizing(3).apply_state(&rho).unwrap();
        assert!(frobenius_distance(out.matrix(), &linalg::identity(3).unscale(3.0)) < 1e-14);

        for _ in 0..10 {
            let n = random_channel(&mut rng, 3, 3, 2);
            let out = n.apply_state(&rho).unwrap();
            assert!((linalg::trace(out.matrix()).re - 1.0).abs() < 1e-12);
            let cert = certify(&n);
            assert!(cert.completely_positive() && cert.trace_preserving());
        }
        assert!(KrausChannel::new(vec![linalg::identity(2).scale(0.5)]).is_err());
    }

    fn random_local(rng: &mut TrialRng, unitary_a: bool) -> LocalIsometry {
        let va = if unitary_a { random_unitary(rng, 2) } else { random_isometry(rng, 2, 4) };
        LocalIsometry::new(va, random_isometry(rng, 3, 5))
    }

    #[test]
    fn local_reversal_identities() {
        let mut rng = TrialRng::new(9);
        for _ in 0..10 {
            // Variant with ω = ρ_A ⊗ ω_B: R(V_A(ρ_A) ⊗ σ_B) = ρ_A ⊗ Tr_A R(V_A(σ̂_A) ⊗ σ_B).
            let v = random_local(&mut rng, false);
            let rho_a = random_state(&mut rng, 2, None);
            let hat_a = random_state(&mut rng, 2, None);
            let sigma_b = random_state(&mut rng, 5, None);
            let r = build_local_reversal(
                &v,
                ReversalVariant::MarginalA { rho_a: rho_a.clone(), omega_b: random_state(&mut rng, 3, None) },
            )
            .unwrap();
            let lhs = r.apply_state(&v.v_a().apply_state(&rho_a).unwrap().kron(&sigma_b)).unwrap();
            let inner = r.apply_state(&v.v_a().apply_state(&hat_a).unwrap().kron(&sigma_b)).unwrap();
            let rhs = kron(rho_a.matrix(), &linalg::partial_trace(inner.matrix(), (2, 3), Subsystem::B).unwrap());
            assert!(frobenius_distance(lhs.matrix(), &rhs) < 1e-10);

            // ω = π_A ⊗ ω_B with unitary V_A: R(𝟙 ⊗ σ_B) = 𝟙 ⊗ Tr_A R(π_A ⊗ σ_B).
            let u = random_local(&mut rng, true);
            let r = build_local_reversal(&u, ReversalVariant::MaximallyMixedA { omega_b: random_state(&mut rng, 3, None) })
                .unwrap();
            let id_sigma = PositiveOperator::identity(2).kron(&sigma_b.as_positive());
            let lhs = r.apply(&id_sigma).unwrap();
            let inner = r.apply_state(&DensityOperator::maximally_mixed(2).kron(&sigma_b)).unwrap();
            let rhs = kron(&linalg::identity(2), &linalg::partial_trace(inner.matrix(), (2, 3), Subsystem::B).unwrap());
            assert!(frobenius_distance(lhs.matrix(), &rhs) < 1e-10);

            // ω = ρ_A ⊗ ω_B with unitary V_A: R(U_A(ρ_A) ⊗ σ_B) = ρ_A ⊗ Tr_A R(σ_AB).
            let sigma_ab = random_state(&mut rng, 10, None);
            let sb = linalg::partial_trace(sigma_ab.matrix(), (2, 5), Subsystem::B).unwrap();
            let sb = DensityOperator::from_matrix_unchecked(sb);
            let r = build_local_reversal(
                &u,
                ReversalVariant::UnitaryMarginalA { rho_a: rho_a.clone(), omega_b: random_state(&mut rng, 3, None) },
            )
            .unwrap();
            let lhs = r.apply_state(&u.v_a().apply_state(&rho_a).unwrap().kron(&sb)).unwrap();
            let inner = r.apply_state(&sigma_ab).unwrap();
            let rhs = kron(rho_a.matrix(), &linalg::partial_trace(inner.matrix(), (2, 3), Subsystem::B).unwrap());
            assert!(frobenius_distance(lhs.matrix(), &rhs) < 1e-10);
        }
    }

    #[test]
    fn unitary_only_variants_reject_proper_isometries() {
        let mut rng = TrialRng::new(10);
        let v = random_local(&mut rng, false);
        let omega_b = random_state(&mut rng, 3, None);
        let r = build_local_reversal(&v, ReversalVariant::MaximallyMixedA { omega_b: omega_b.clone() });
        assert!(matches!(r, Err(Error::Contract(_))));
        let r = build_local_reversal(
            &v,
            ReversalVariant::UnitaryMarginalA { rho_a: random_state(&mut rng, 2, None), omega_b },
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn lemma2prime_omega_is_maximally_mixed_on_a() {
        let mut rng = TrialRng::new(11);
        let u = random_local(&mut rng, true);
        let omega_b = random_state(&mut rng, 3, None);
        let r = build_local_reversal(&u, ReversalVariant::MaximallyMixedA { omega_b: omega_b.clone() }).unwrap();
        let expect = kron(&linalg::identity(2).scale(0.5), omega_b.matrix());
        assert!(frobenius_distance(r.omega().matrix(), &expect) < 1e-15);
    }

    #[test]
    fn all_variants_conjugate_when_both_factors_unitary() {
        let mut rng = TrialRng::new(12);
        let u = LocalIsometry::new(random_unitary(&mut rng, 2), random_unitary(&mut rng, 3));
        let rho_a = random_state(&mut rng, 2, None);
        let omega_b = random_state(&mut rng, 3, None);
        let sigma = random_state(&mut rng, 6, None);
        let expect = u.joint().adjoint_apply_matrix(sigma.matrix());
        for variant in [
            ReversalVariant::MarginalA { rho_a: rho_a.clone(), omega_b: omega_b.clone() },
            ReversalVariant::MaximallyMixedA { omega_b: omega_b.clone() },
            ReversalVariant::UnitaryMarginalA { rho_a: rho_a.clone(), omega_b: omega_b.clone() },
        ] {
            let out = build_local_reversal(&u, variant).unwrap().apply_state(&sigma).unwrap();
            assert!(frobenius_distance(out.matrix(), &expect) < 1e-12);
        }
    }

    #[test]
    fn factor_recovers_local_isometries_and_rejects_entanglers() {
        let mut rng = TrialRng::new(13);
        let v = random_local(&mut rng, false);
        let f = LocalIsometry::factor(v.joint(), (2, 3), (4, 5)).unwrap();
        assert!(frobenius_distance(f.joint().matrix(), v.joint().matrix()) < 1e-10);

        let mut cnot = linalg::zeros(4, 4);
        for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            cnot[(i, j)] = c(1.0, 0.0);
        }
        let cnot = Isometry::new(cnot).unwrap();
        assert!(matches!(LocalIsometry::factor(&cnot, (2, 2), (2, 2)), Err(Error::Contract(_))));
    }
}
