//! Concrete generalized divergences `D(ρ‖ζ)` between a state and a positive operator.
//!
//! Every kind here is monotone under channels and therefore invariant under
//! isometries. Values are reported in the configured log base (bits by default).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, HermitianEigen};
use crate::states::{DensityOperator, PositiveOperator};

/// Leakage of `ρ` outside `supp(ζ)` above which support-sensitive kinds return `+∞`.
pub const SUPPORT_LEAK_TOL: f64 = 1e-10;

const BISECTION_ITERATIONS: usize = 200;
const BISECTION_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    Umegaki,
    PetzRenyi,
    SandwichedRenyi,
    GeometricRenyi,
    MaxRelative,
    HypothesisTesting,
}

impl DivergenceKind {
    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Umegaki => "umegaki",
            DivergenceKind::PetzRenyi => "petz_renyi",
            DivergenceKind::SandwichedRenyi => "sandwiched_renyi",
            DivergenceKind::GeometricRenyi => "geometric_renyi",
            DivergenceKind::MaxRelative => "max_relative",
            DivergenceKind::HypothesisTesting => "hypothesis_testing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Two => nats / std::f64::consts::LN_2,
            LogBase::E => nats,
        }
    }

    pub fn log(self, x: f64) -> f64 {
        self.from_nats(x.ln())
    }
}

/// One concrete divergence: its kind plus parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub log_base: LogBase,
}

impl DivergenceSpec {
    fn plain(kind: DivergenceKind) -> Self {
        Self {
            kind,
            alpha: None,
            epsilon: None,
            log_base: LogBase::Two,
        }
    }

    pub fn umegaki() -> Self {
        Self::plain(DivergenceKind::Umegaki)
    }

    pub fn max_relative() -> Self {
        Self::plain(DivergenceKind::MaxRelative)
    }

    pub fn petz(alpha: f64) -> Result<Self> {
        Self::renyi(DivergenceKind::PetzRenyi, alpha)
    }

    pub fn sandwiched(alpha: f64) -> Result<Self> {
        Self::renyi(DivergenceKind::SandwichedRenyi, alpha)
    }

    pub fn geometric(alpha: f64) -> Result<Self> {
        Self::renyi(DivergenceKind::GeometricRenyi, alpha)
    }

    pub fn hypothesis_testing(epsilon: f64) -> Result<Self> {
        let spec = Self {
            epsilon: Some(epsilon),
            ..Self::plain(DivergenceKind::HypothesisTesting)
        };
        spec.validate()?;
        Ok(spec)
    }

    fn renyi(kind: DivergenceKind, alpha: f64) -> Result<Self> {
        let spec = Self {
            alpha: Some(alpha),
            ..Self::plain(kind)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_log_base(mut self, base: LogBase) -> Self {
        self.log_base = base;
        self
    }

    /// Checks that the parameters lie in the range where the data-processing inequality holds.
    pub fn validate(&self) -> Result<()> {
        use DivergenceKind::*;
        let alpha = || {
            self.alpha
                .filter(|a| a.is_finite())
                .ok_or_else(|| Error::Parameter(format!("{} needs a finite alpha", self.kind.name())))
        };
        match self.kind {
            PetzRenyi | GeometricRenyi => {
                let a = alpha()?;
                if !((a > 0.0 && a < 1.0) || (a > 1.0 && a <= 2.0)) {
                    return Err(Error::Parameter(format!(
                        "{} requires alpha in (0,1) ∪ (1,2], got {a}",
                        self.kind.name()
                    )));
                }
            }
            SandwichedRenyi => {
                let a = alpha()?;
                if !((0.5..1.0).contains(&a) || a > 1.0) {
                    return Err(Error::Parameter(format!(
                        "sandwiched_renyi requires alpha in [1/2,1) ∪ (1,∞), got {a}"
                    )));
                }
            }
            HypothesisTesting => {
                let e = self.epsilon.ok_or_else(|| Error::Parameter("hypothesis_testing needs epsilon".into()))?;
                if !(0.0..1.0).contains(&e) {
                    return Err(Error::Parameter(format!(
                        "hypothesis_testing requires epsilon in [0,1), got {e}"
                    )));
                }
            }
            Umegaki | MaxRelative => {}
        }
        Ok(())
    }

    /// Whether `supp(ρ) ⊄ supp(ζ)` forces the value to `+∞`.
    pub fn requires_support(&self) -> bool {
        use DivergenceKind::*;
        match self.kind {
            Umegaki | MaxRelative => true,
            PetzRenyi | SandwichedRenyi | GeometricRenyi => self.alpha.is_some_and(|a| a > 1.0),
            HypothesisTesting => false,
        }
    }
}

impl fmt::Display for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        if let Some(a) = self.alpha {
            write!(f, "(alpha={a})")?;
        }
        if let Some(e) = self.epsilon {
            write!(f, "(epsilon={e})")?;
        }
        Ok(())
    }
}

/// Result of a divergence evaluation; `value` may be `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub value: f64,
    pub support_violation: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
}

impl DivergenceValue {
    fn finite(value: f64) -> Self {
        Self {
            value,
            support_violation: false,
            diagnostics: BTreeMap::new(),
        }
    }

    fn infinite(support_violation: bool) -> Self {
        Self {
            value: f64::INFINITY,
            support_violation,
            diagnostics: BTreeMap::new(),
        }
    }

    fn note(mut self, key: &str, v: f64) -> Self {
        self.diagnostics.insert(key.to_string(), v);
        self
    }

    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }
}

/// A function on (state, positive operator) pairs, expected to satisfy data processing.
pub trait Divergence {
    fn label(&self) -> String;
    fn evaluate(&self, rho: &DensityOperator, zeta: &PositiveOperator) -> Result<DivergenceValue>;
}

impl Divergence for DivergenceSpec {
    fn label(&self) -> String {
        self.to_string()
    }

    fn evaluate(&self, rho: &DensityOperator, zeta: &PositiveOperator) -> Result<DivergenceValue> {
        evaluate(self, rho, zeta)
    }
}

/// A positive operator together with its spectrum, for repeated evaluations.
#[derive(Debug, Clone)]
pub struct Spectral {
    matrix: ComplexMatrix,
    spectrum: HermitianEigen,
}

impl Spectral {
    pub fn new(op: &PositiveOperator) -> Self {
        Self::from_matrix(op.matrix().clone())
    }

    pub fn of_state(rho: &DensityOperator) -> Self {
        Self::from_matrix(rho.matrix().clone())
    }

    fn from_matrix(matrix: ComplexMatrix) -> Self {
        let spectrum = linalg::eigh_unchecked(&matrix);
        Self { matrix, spectrum }
    }

    /// `self ⊗ other`, with the spectrum assembled from the factors.
    pub fn kron(&self, other: &Spectral) -> Spectral {
        Spectral {
            matrix: linalg::kron(&self.matrix, &other.matrix),
            spectrum: linalg::kron_eigen(&self.spectrum, &other.spectrum),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &HermitianEigen {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖(𝟙 − Π) x (𝟙 − Π)‖_F` with `Π` the support projector of `self`.
    fn leakage(&self, x: &ComplexMatrix) -> f64 {
        let n = self.dim();
        if self.spectrum.rank() == n {
            return 0.0;
        }
        let outside = linalg::identity(n) - self.spectrum.support_projector();
        linalg::frobenius(&linalg::conjugate(&outside, x))
    }

    fn power(&self, p: f64) -> ComplexMatrix {
        self.spectrum
            .apply(|x| x.powf(p), true)
            .expect("support eigenvalues are positive")
    }
}

fn trace_power(m: &ComplexMatrix, p: f64) -> f64 {
    let spectrum = linalg::eigh_unchecked(&linalg::hermitian_part(m));
    let thr = spectrum.support_threshold();
    spectrum.eigenvalues.iter().filter(|&&v| v > thr).map(|v| v.powf(p)).sum()
}

pub fn evaluate(spec: &DivergenceSpec, rho: &DensityOperator, zeta: &PositiveOperator) -> Result<DivergenceValue> {
    if rho.dim() != zeta.dim() {
        return Err(Error::dims(rho.dim(), zeta.dim()));
    }
    evaluate_spectral(spec, &Spectral::of_state(rho), &Spectral::new(zeta))
}

/// [`evaluate`] on precomputed spectra. `rho` must hold a density operator.
pub fn evaluate_spectral(spec: &DivergenceSpec, rho: &Spectral, zeta: &Spectral) -> Result<DivergenceValue> {
    spec.validate()?;
    if rho.dim() != zeta.dim() {
        return Err(Error::dims(rho.dim(), zeta.dim()));
    }
    let base = spec.log_base;
    let r = rho.matrix();
    if spec.kind == DivergenceKind::HypothesisTesting {
        let eps = spec.epsilon.expect("validated");
        let test = np_test(rho, zeta, eps);
        if test.beta <= 0.0 {
            return Ok(DivergenceValue::infinite(false).note("beta", 0.0));
        }
        return Ok(DivergenceValue::finite(-base.log(test.beta))
            .note("beta", test.beta)
            .note("threshold", test.threshold));
    }

    let leak = zeta.leakage(r);
    if spec.requires_support() && leak > SUPPORT_LEAK_TOL {
        return Ok(DivergenceValue::infinite(true).note("leakage", leak));
    }

    let value = match spec.kind {
        DivergenceKind::Umegaki => {
            let thr = rho.spectrum.support_threshold();
            let neg_entropy: f64 = rho
                .spectrum
                .eigenvalues
                .iter()
                .filter(|&&v| v > thr)
                .map(|&v| v * v.ln())
                .sum();
            let log_zeta = zeta.spectrum.apply(f64::ln, true).expect("log on support");
            base.from_nats(neg_entropy - linalg::trace_product(r, &log_zeta).re)
        }
        DivergenceKind::MaxRelative => {
            let inv_sqrt = zeta.power(-0.5);
            let sandwich = linalg::conjugate(&inv_sqrt, r);
            let lmax = linalg::eigh_unchecked(&linalg::hermitian_part(&sandwich)).max_eigenvalue();
            if lmax <= 0.0 {
                return Ok(DivergenceValue::infinite(true));
            }
            base.log(lmax)
        }
        DivergenceKind::PetzRenyi | DivergenceKind::SandwichedRenyi | DivergenceKind::GeometricRenyi => {
            let alpha = spec.alpha.expect("validated");
            let q = renyi_quasi(spec.kind, alpha, rho, zeta);
            if q <= 0.0 {
                // Only reachable for α < 1 with orthogonal supports, where the limit is +∞.
                return Ok(DivergenceValue::infinite(true).note("quasi_entropy", q));
            }
            base.from_nats(q.ln() / (alpha - 1.0))
        }
        DivergenceKind::HypothesisTesting => unreachable!(),
    };
    Ok(DivergenceValue::finite(value).note("leakage", leak))
}

/// The trace functional `Q_α` inside `log(Q_α)/(α − 1)`.
fn renyi_quasi(kind: DivergenceKind, alpha: f64, rho: &Spectral, zeta: &Spectral) -> f64 {
    let r = rho.matrix();
    match kind {
        DivergenceKind::PetzRenyi => {
            let rho_alpha = rho.power(alpha);
            linalg::trace_product(&rho_alpha, &zeta.power(1.0 - alpha)).re
        }
        DivergenceKind::SandwichedRenyi => {
            let z = zeta.power((1.0 - alpha) / (2.0 * alpha));
            trace_power(&linalg::conjugate(&z, r), alpha)
        }
        DivergenceKind::GeometricRenyi => {
            let inv_sqrt = zeta.power(-0.5);
            let g = linalg::hermitian_part(&linalg::conjugate(&inv_sqrt, r));
            let g_alpha = linalg::eigh_unchecked(&g)
                .apply(|x| x.powf(alpha), true)
                .expect("positive power");
            // Tr[ζ^{1/2} G^α ζ^{1/2}] = Tr[ζ G^α].
            linalg::trace_product(zeta.matrix(), &g_alpha).re
        }
        _ => unreachable!("not a Rényi kind"),
    }
}

/// Optimal test for `min{Tr[Λζ] : 0 ≤ Λ ≤ 𝟙, Tr[Λρ] ≥ 1 − ε}`.
#[derive(Debug, Clone)]
pub struct NeymanPearsonTest {
    pub test: PositiveOperator,
    /// `Tr[Λζ]` at the returned test.
    pub beta: f64,
    /// Threshold `t` of the spectral family `ρ − tζ` the test was built from.
    pub threshold: f64,
    /// Weak-duality lower bound `((1−ε) − Tr[(ρ − tζ)₊])/t` on the optimum.
    pub dual_bound: f64,
}

fn positive_part_weight(spectrum: &HermitianEigen, rho: &ComplexMatrix) -> f64 {
    let p = spectrum.spectral_projector(|v| v > 0.0);
    linalg::trace_product(&p, rho).re
}

/// Quantum Neyman–Pearson test: `Λ = P_{>t} + c·P_{=t}` over the spectrum of `ρ − tζ`,
/// with `t` located by bisection and `c` saturating the constraint.
pub fn neyman_pearson_test(rho: &DensityOperator, zeta: &PositiveOperator, epsilon: f64) -> Result<NeymanPearsonTest> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Parameter(format!("epsilon must lie in [0,1), got {epsilon}")));
    }
    if rho.dim() != zeta.dim() {
        return Err(Error::dims(rho.dim(), zeta.dim()));
    }
    Ok(np_test(&Spectral::of_state(rho), &Spectral::new(zeta), epsilon))
}

fn np_test(rho: &Spectral, zeta: &Spectral, epsilon: f64) -> NeymanPearsonTest {
    let r = rho.matrix();
    let z = zeta.matrix();
    let n = rho.dim();
    let target = 1.0 - epsilon;
    let rho_spec = &rho.spectrum;
    let zeta_spec = &zeta.spectrum;

    if epsilon == 0.0 {
        // Tr[Λρ] = 1 forces Λ ≥ Π_ρ; the support projector itself is optimal.
        let proj = rho_spec.support_projector();
        let beta = linalg::trace_product(&proj, z).re.max(0.0);
        return NeymanPearsonTest {
            test: PositiveOperator::from_matrix_unchecked(proj),
            beta,
            threshold: 0.0,
            dual_bound: beta,
        };
    }

    // Enough weight of ρ outside supp(ζ) makes the hypotheses perfectly distinguishable.
    let kernel = linalg::identity(n) - zeta_spec.support_projector();
    let kernel_weight = linalg::trace_product(&kernel, r).re;
    if kernel_weight >= target {
        let test = kernel.scale(target / kernel_weight);
        return NeymanPearsonTest {
            test: PositiveOperator::from_matrix_unchecked(test),
            beta: 0.0,
            threshold: f64::INFINITY,
            dual_bound: 0.0,
        };
    }

    let zeta_min_pos = zeta_spec
        .eigenvalues
        .iter()
        .copied()
        .filter(|&v| v > zeta_spec.support_threshold())
        .fold(f64::INFINITY, f64::min);
    let weight_at = |t: f64| positive_part_weight(&linalg::eigh_unchecked(&(r - z.scale(t))), r);

    let mut lo = 0.0;
    let mut hi = rho_spec.max_eigenvalue() / zeta_min_pos + 1.0;
    let mut doublings = 0;
    while weight_at(hi) >= target && doublings < 60 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    for _ in 0..BISECTION_ITERATIONS {
        if hi - lo <= BISECTION_WIDTH * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if weight_at(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let spectrum = linalg::eigh_unchecked(&linalg::hermitian_part(&(r - z.scale(t))));

    // Fill eigenvectors in descending eigenvalue order until the constraint is met; the
    // eigenspace where it saturates receives the fractional weight c.
    let vec_weight = |k: usize, op: &ComplexMatrix| -> f64 {
        let v = spectrum.eigenvectors.column(k);
        (v.adjoint() * op * v)[(0, 0)].re
    };
    let rho_w: Vec<f64> = (0..n).map(|k| vec_weight(k, r)).collect();
    let mut acc = 0.0;
    let mut boundary = 0;
    for k in (0..n).rev() {
        acc += rho_w[k];
        if acc >= target {
            boundary = k;
            break;
        }
    }
    let lambda_star = spectrum.eigenvalues[boundary];
    let scale = rho_spec.max_eigenvalue().max(t * zeta_spec.max_eigenvalue());
    let tau = 1e-10 * scale;
    let is_full = |k: usize| spectrum.eigenvalues[k] > lambda_star + tau;
    let is_cluster = |k: usize| (spectrum.eigenvalues[k] - lambda_star).abs() <= tau;
    let a: f64 = (0..n).filter(|&k| is_full(k)).map(|k| rho_w[k]).sum();
    let b: f64 = (0..n).filter(|&k| is_cluster(k)).map(|k| rho_w[k]).sum();
    let frac = if b > 0.0 { ((target - a) / b).clamp(0.0, 1.0) } else { 1.0 };
    let mut test = linalg::zeros(n, n);
    for k in 0..n {
        let w = if is_full(k) {
            1.0
        } else if is_cluster(k) {
            frac
        } else {
            continue;
        };
        let v = spectrum.eigenvectors.column(k);
        test += (v * v.adjoint()).scale(w);
    }
    let test = linalg::hermitian_part(&test);
    let beta = linalg::trace_product(&test, z).re.max(0.0);

    let positive: f64 = spectrum.eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    let dual_bound = if t > 0.0 { ((target - positive) / t).max(0.0) } else { 0.0 };

    NeymanPearsonTest {
        test: PositiveOperator::from_matrix_unchecked(test),
        beta,
        threshold: t,
        dual_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;
    use crate::sampling::{random_channel, random_isometry, random_state, TrialRng};
    use crate::states::{fidelity, BipartiteState};

    fn all_specs() -> Vec<DivergenceSpec> {
        vec![
            DivergenceSpec::umegaki(),
            DivergenceSpec::petz(0.5).unwrap(),
            DivergenceSpec::petz(1.5).unwrap(),
            DivergenceSpec::petz(2.0).unwrap(),
            DivergenceSpec::sandwiched(0.5).unwrap(),
            DivergenceSpec::sandwiched(2.0).unwrap(),
            DivergenceSpec::geometric(1.5).unwrap(),
            DivergenceSpec::geometric(0.5).unwrap(),
            DivergenceSpec::max_relative(),
            DivergenceSpec::hypothesis_testing(0.1).unwrap(),
        ]
    }

    // Classical counterparts on probability vectors, in bits.
    fn classical(spec: &DivergenceSpec, p: &[f64], q: &[f64]) -> f64 {
        match spec.kind {
            DivergenceKind::Umegaki => p
                .iter()
                .zip(q)
                .filter(|(pi, _)| **pi > 0.0)
                .map(|(pi, qi)| pi * (pi / qi).log2())
                .sum(),
            DivergenceKind::MaxRelative => p
                .iter()
                .zip(q)
                .map(|(pi, qi)| pi / qi)
                .fold(f64::NEG_INFINITY, f64::max)
                .log2(),
            DivergenceKind::HypothesisTesting => -classical_np_bruteforce(p, q, spec.epsilon.unwrap()).log2(),
            _ => {
                let a = spec.alpha.unwrap();
                let s: f64 = p.iter().zip(q).map(|(pi, qi)| pi.powf(a) * qi.powf(1.0 - a)).sum();
                s.log2() / (a - 1.0)
            }
        }
    }

    /// Exhaustive classical Neyman–Pearson: every subset as the deterministic part plus
    /// one fractional outcome, minimum over all feasible combinations.
    fn classical_np_bruteforce(p: &[f64], q: &[f64], eps: f64) -> f64 {
        let n = p.len();
        let target = 1.0 - eps;
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let inc = |i: usize| mask & (1 << i) != 0;
            let pw: f64 = (0..n).filter(|&i| inc(i)).map(|i| p[i]).sum();
            let qw: f64 = (0..n).filter(|&i| inc(i)).map(|i| q[i]).sum();
            if pw >= target {
                best = best.min(qw);
            }
            for j in (0..n).filter(|&j| !inc(j)) {
                if p[j] > 0.0 && pw < target && pw + p[j] >= target {
                    let frac = (target - pw) / p[j];
                    best = best.min(qw + frac * q[j]);
                }
            }
        }
        best
    }

    fn random_probs(rng: &mut TrialRng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform() + 0.01).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    fn diag_state(p: &[f64]) -> DensityOperator {
        DensityOperator::new(diag(p)).unwrap()
    }

    #[test]
    fn parameter_ranges() {
        assert!(DivergenceSpec::petz(1.0).is_err());
        assert!(DivergenceSpec::petz(2.5).is_err());
        assert!(DivergenceSpec::petz(0.0).is_err());
        assert!(DivergenceSpec::sandwiched(0.4).is_err());
        assert!(DivergenceSpec::sandwiched(1.0).is_err());
        assert!(DivergenceSpec::sandwiched(7.0).is_ok());
        assert!(DivergenceSpec::geometric(2.0).is_ok());
        assert!(DivergenceSpec::geometric(2.1).is_err());
        assert!(DivergenceSpec::hypothesis_testing(1.0).is_err());
        assert!(DivergenceSpec::hypothesis_testing(0.0).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let rho = DensityOperator::maximally_mixed(2);
        let zeta = PositiveOperator::identity(3);
        assert!(matches!(
            evaluate(&DivergenceSpec::umegaki(), &rho, &zeta),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn self_divergence_vanishes() {
        let mut rng = TrialRng::new(1);
        for _ in 0..10 {
            let rho = random_state(&mut rng, 3, None);
            for spec in all_specs() {
                let v = evaluate(&spec, &rho, &rho.as_positive()).unwrap().value;
                let expect = match spec.kind {
                    DivergenceKind::HypothesisTesting => -(1.0 - spec.epsilon.unwrap()).log2(),
                    _ => 0.0,
                };
                assert!((v - expect).abs() < 1e-9, "{spec}: {v}");
            }
        }
    }

    #[test]
    fn umegaki_commuting_pair() {
        let v = evaluate(&DivergenceSpec::umegaki(), &diag_state(&[0.7, 0.3]), &diag_state(&[0.5, 0.5]).as_positive())
            .unwrap()
            .value;
        let expect = 0.7 * 1.4_f64.log2() + 0.3 * 0.6_f64.log2();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.1187).abs() < 1e-4);
    }

    #[test]
    fn max_relative_of_maximally_entangled_state() {
        for d in [2usize, 3] {
            let phi = BipartiteState::maximally_entangled(d);
            let pi = PositiveOperator::identity(d * d).into_matrix().unscale((d * d) as f64);
            let v = evaluate(&DivergenceSpec::max_relative(), phi.state(), &PositiveOperator::new(pi).unwrap())
                .unwrap()
                .value;
            assert!((v - 2.0 * (d as f64).log2()).abs() < 1e-9);
        }
    }

    #[test]
    fn support_violations() {
        let rho = DensityOperator::basis(2, 0);
        let zeta = DensityOperator::basis(2, 1).as_positive();
        for spec in [
            DivergenceSpec::umegaki(),
            DivergenceSpec::max_relative(),
            DivergenceSpec::petz(1.5).unwrap(),
            DivergenceSpec::sandwiched(2.0).unwrap(),
            DivergenceSpec::geometric(1.5).unwrap(),
        ] {
            let v = evaluate(&spec, &rho, &zeta).unwrap();
            assert!(v.is_infinite() && v.support_violation, "{spec}");
        }
        // α < 1 with orthogonal supports diverges as well.
        let v = evaluate(&DivergenceSpec::petz(0.5).unwrap(), &rho, &zeta).unwrap();
        assert!(v.is_infinite());
        // Orthogonal supports are perfectly distinguishable.
        let v = evaluate(&DivergenceSpec::hypothesis_testing(0.3).unwrap(), &rho, &zeta).unwrap();
        assert!(v.is_infinite());
    }

    #[test]
    fn natural_log_base() {
        let spec = DivergenceSpec::umegaki().with_log_base(LogBase::E);
        let v = evaluate(&spec, &diag_state(&[0.7, 0.3]), &diag_state(&[0.5, 0.5]).as_positive())
            .unwrap()
            .value;
        let expect = 0.7 * 1.4_f64.ln() + 0.3 * 0.6_f64.ln();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn commuting_reduction() {
        let mut rng = TrialRng::new(2);
        for n in 2..=5 {
            for _ in 0..5 {
                let p = random_probs(&mut rng, n);
                let q = random_probs(&mut rng, n);
                let rho = diag_state(&p);
                let zeta = PositiveOperator::new(diag(&q)).unwrap();
                for spec in all_specs() {
                    let v = evaluate(&spec, &rho, &zeta).unwrap().value;
                    let tol = if spec.kind == DivergenceKind::HypothesisTesting { 1e-8 } else { 1e-9 };
                    assert!((v - classical(&spec, &p, &q)).abs() < tol, "{spec}: {v}");
                }
            }
        }
    }

    #[test]
    fn sandwiched_half_is_minus_log_fidelity() {
        let mut rng = TrialRng::new(3);
        for _ in 0..10 {
            let rho = random_state(&mut rng, 3, None);
            let sigma = random_state(&mut rng, 3, Some(2));
            let v = evaluate(&DivergenceSpec::sandwiched(0.5).unwrap(), &rho, &sigma.as_positive())
                .unwrap()
                .value;
            let f = fidelity(&rho, &sigma).unwrap();
            assert!((v + f.log2()).abs() < 1e-9);
        }
    }

    #[test]
    fn sandwiched_monotone_in_alpha() {
        let mut rng = TrialRng::new(4);
        let alphas = [0.5, 0.7, 0.9, 1.1, 1.5, 2.0, 3.0, 5.0];
        for _ in 0..10 {
            let rho = random_state(&mut rng, 3, None);
            let sigma = random_state(&mut rng, 3, None).as_positive();
            let vals: Vec<f64> = alphas
                .iter()
                .map(|&a| evaluate(&DivergenceSpec::sandwiched(a).unwrap(), &rho, &sigma).unwrap().value)
                .collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{vals:?}");
        }
    }

    #[test]
    fn data_processing_and_isometric_invariance() {
        let mut rng = TrialRng::new(5);
        for _ in 0..20 {
            let d = 2 + rng.below(3);
            let rho = random_state(&mut rng, d, None);
            let zeta = random_state(&mut rng, d, None).as_positive();
            let n = random_channel(&mut rng, d, d, 2);
            let v = random_isometry(&mut rng, d, d + 2);
            for spec in all_specs() {
                let before = evaluate(&spec, &rho, &zeta).unwrap().value;
                let after = evaluate(&spec, &n.apply_state(&rho).unwrap(), &n.apply(&zeta).unwrap())
                    .unwrap()
                    .value;
                let iso = evaluate(&spec, &v.apply_state(&rho).unwrap(), &v.apply(&zeta).unwrap())
                    .unwrap()
                    .value;
                let hyp = spec.kind == DivergenceKind::HypothesisTesting;
                assert!(before - after >= if hyp { -1e-6 } else { -1e-9 }, "{spec}");
                assert!((iso - before).abs() <= if hyp { 1e-6 } else { 1e-8 }, "{spec}: {iso} vs {before}");
            }
        }
    }

    #[test]
    fn neyman_pearson_examples() {
        let mut rng = TrialRng::new(6);
        let rho = random_state(&mut rng, 3, None);
        for eps in [0.0, 0.1, 0.5, 0.9] {
            let np = neyman_pearson_test(&rho, &rho.as_positive(), eps).unwrap();
            assert!((np.beta - (1.0 - eps)).abs() < 1e-9);
        }
        let a = DensityOperator::basis(2, 0);
        let b = DensityOperator::basis(2, 1).as_positive();
        for eps in [0.0, 0.2] {
            assert_eq!(neyman_pearson_test(&a, &b, eps).unwrap().beta, 0.0);
        }
    }

    #[test]
    fn neyman_pearson_zero_epsilon_commuting() {
        let mut rng = TrialRng::new(7);
        for n in 2..=5 {
            let mut p = random_probs(&mut rng, n);
            // Rank-deficient ρ so the support projector is non-trivial.
            p[0] = 0.0;
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            let q = random_probs(&mut rng, n);
            let np = neyman_pearson_test(&diag_state(&p), &PositiveOperator::new(diag(&q)).unwrap(), 0.0).unwrap();
            assert!((np.beta - classical_np_bruteforce(&p, &q, 0.0)).abs() < 1e-8);
            assert!((linalg::trace_product(np.test.matrix(), &diag(&p)).re - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn neyman_pearson_feasibility_and_duality_gap() {
        let mut rng = TrialRng::new(8);
        for _ in 0..30 {
            let d = 2 + rng.below(4);
            let rank = 1 + rng.below(d);
            let rho = random_state(&mut rng, d, Some(rank));
            let zeta = random_state(&mut rng, d, None).as_positive();
            let eps = rng.uniform() * 0.9;
            let np = neyman_pearson_test(&rho, &zeta, eps).unwrap();
            let spec = linalg::eigh(np.test.matrix()).unwrap();
            assert!(spec.min_eigenvalue() >= -1e-10 && spec.max_eigenvalue() <= 1.0 + 1e-10);
            let accept = linalg::trace_product(np.test.matrix(), rho.matrix()).re;
            assert!(accept >= 1.0 - eps - 1e-9, "{accept}");
            assert!(np.beta - np.dual_bound <= 1e-8, "gap {}", np.beta - np.dual_bound);
            assert!(np.dual_bound <= np.beta + 1e-12);
        }
    }

    #[test]
    fn neyman_pearson_degenerate_commuting_ties() {
        // p/q ratios tie across outcomes, so the boundary eigenspace is degenerate.
        let p = [0.4, 0.2, 0.2, 0.2];
        let q = [0.1, 0.3, 0.3, 0.3];
        let rho = diag_state(&p);
        let zeta = PositiveOperator::new(diag(&q)).unwrap();
        for eps in [0.1, 0.3, 0.5] {
            let np = neyman_pearson_test(&rho, &zeta, eps).unwrap();
            assert!((np.beta - classical_np_bruteforce(&p, &q, eps)).abs() < 1e-8);
        }
    }
}
