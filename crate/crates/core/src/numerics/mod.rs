//! Deterministic numerical kernels shared by every other module.

mod chol;
mod mvn;
mod normal;
mod optim;
mod quadrature;

pub use chol::{chol_default, chol_psd, chol_strict, symmetrize, CholFactor, DEFAULT_JITTER_FRACTION};
pub use mvn::{mvn_sample, standard_normal_matrix};
pub use normal::{
    expected_improvement, inv_mills, log_std_normal_cdf, log_std_normal_pdf, log_sum_exp,
    std_normal_cdf, std_normal_pdf,
};
pub use optim::{numeric_gradient, BoxMinimizer, MinimizeResult};
pub use quadrature::{gauss_hermite, QuadratureRule, SQRT_PI};

use rand::SeedableRng;

/// The generator every stochastic component draws from.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Derives an independent child seed from `seed` and a stream label.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_rng(seed: u64, stream: u64) -> SimRng {
    seeded_rng(derive_seed(seed, stream))
}
