//! Seeded random states, unitaries, isometries and channels.
//!
//! Every sampler draws from a [`TrialRng`], a ChaCha8 stream. Seeds for
//! independent trials or restarts come from [`derive_seed`], a splittable
//! counter hash, so adding a trial or a check never shifts another stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channels::{Isometry, KrausChannel};
use crate::linalg::{self, c, ComplexMatrix};
use crate::states::{BipartiteState, DensityOperator};

pub type TrialRng = SeededRng;

/// Deterministic random stream for one trial.
#[derive(Debug, Clone)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn gaussian(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    /// Complex Gaussian with unit variance, `E|z|² = 1`.
    pub fn complex_gaussian(&mut self) -> num_complex::Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        c(self.gaussian() * s, self.gaussian() * s)
    }

    pub fn ginibre(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        // Fill row-major so the stream order does not depend on storage layout.
        let entries: Vec<_> = (0..rows * cols).map(|_| self.complex_gaussian()).collect();
        linalg::from_rows(rows, cols, &entries)
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for stream `index` of the family named `label` under `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a(label) ^ splitmix64(index))
}

/// Restart `i` of a multi-start search seeded by `seed`: `seed ⊕ splitmix64(i)`.
pub fn restart_seed(seed: u64, i: u64) -> u64 {
    seed ^ splitmix64(i)
}

/// Hilbert–Schmidt-measure state `GG†/Tr[GG†]`, `G` a `d × rank` Ginibre matrix.
pub fn random_state(rng: &mut SeededRng, d: usize, rank: Option<usize>) -> DensityOperator {
    let r = rank.unwrap_or(d).clamp(1, d);
    let g = rng.ginibre(d, r);
    DensityOperator::normalized_unchecked(&g * g.adjoint())
}

pub fn random_bipartite(rng: &mut SeededRng, dims: (usize, usize), rank: Option<usize>) -> BipartiteState {
    let rho = random_state(rng, dims.0 * dims.1, rank);
    BipartiteState::new(rho, dims.0, dims.1).expect("dims match by construction")
}

/// Haar unitary: QR of a Ginibre matrix with the phases of `R`'s diagonal divided out.
pub fn random_unitary(rng: &mut SeededRng, d: usize) -> Isometry {
    let g = rng.ginibre(d, d);
    let (q, r) = g.qr().unpack();
    let mut u = q;
    for k in 0..d {
        let rkk = r[(k, k)];
        let phase = if rkk.norm() > 0.0 { rkk / rkk.norm() } else { c(1.0, 0.0) };
        for z in u.column_mut(k).iter_mut() {
            *z *= phase;
        }
    }
    Isometry::new(u).expect("QR factor is unitary")
}

/// First `d_in` columns of a Haar unitary on `d_out`.
pub fn random_isometry(rng: &mut SeededRng, d_in: usize, d_out: usize) -> Isometry {
    assert!(d_out >= d_in, "isometry needs d_out ≥ d_in");
    let u = random_unitary(rng, d_out);
    Isometry::new(u.matrix().columns(0, d_in).into_owned()).expect("columns of a unitary")
}

/// Stinespring channel: random isometry into `d_out ⊗ env`, environment traced out.
pub fn random_channel(rng: &mut SeededRng, d_in: usize, d_out: usize, env: usize) -> KrausChannel {
    let v = random_isometry(rng, d_in, d_out * env);
    KrausChannel::from_stinespring(&v, d_out, env).expect("dims match by construction")
}
