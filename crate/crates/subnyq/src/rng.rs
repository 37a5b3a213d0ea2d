//! Crate-private helpers around the counter-mode generator used for noise
//! and for Monte Carlo draws.

use rand_core::RngCore;

/// Uniform draw in `[0, 1)` with 53 random bits.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `(0, 1]`, safe as a logarithm argument.
pub(crate) fn unit_f64_open_low(rng: &mut impl RngCore) -> f64 {
    1.0 - unit_f64(rng)
}

/// Uniform draw in `[lo, hi)`.
pub(crate) fn range_f64(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + unit_f64(rng) * (hi - lo)
}
