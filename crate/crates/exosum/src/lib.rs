//! Exponential sums over finite fields and the character theory behind them.
//!
//! The crate is organized bottom-up:
//!
//! - [`fields`]: towers of finite fields `F_{q^m}` with compatible generators,
//!   discrete-log tables, norm/trace/Frobenius as index arithmetic.
//! - [`chars`]: multiplicative and additive characters, Frobenius orbits,
//!   classical Gauss sums.
//! - [`etale`]: etale algebras `F_λ = ∏ F_{k_i}`, tensor products with `F_m`,
//!   the two norm maps and the trace.
//! - [`expsums`]: exotic Gauss sums, exotic Kloosterman sums, L-polynomials
//!   of Kloosterman families and their roots.
//! - [`partitions`], [`symfunc`]: exact symmetric-function kernel
//!   (monomial/power-sum/Schur bases, Hall-Littlewood families, Hall inner
//!   product, flag counts).
//! - [`glq`]: `GL_n(F_q)` matrices, conjugacy classes, class identification,
//!   Shintani norm map.
//! - [`repth`]: class functions, characteristic maps, Green parameters,
//!   irreducible and Speh characters, Bessel functions, Kondo scalars,
//!   epsilon and gamma factors.
//! - [`mks`]: exotic matrix Kloosterman sums (brute force, convolution,
//!   Hall-Littlewood fast path, global truncations, zero-cycle sums).
//! - [`verify`]: a registry of named identity checks, each pairing a closed
//!   form with an independent oracle.
//! - [`cli`]: string-level front end used by the `exosum` binary.

pub mod chars;
pub mod cli;
pub mod error;
pub mod etale;
pub mod expsums;
pub mod fields;
pub mod glq;
pub mod mks;
pub mod partitions;
pub mod repth;
pub mod symfunc;
pub mod verify;

pub use error::Error;

/// Shorthand used throughout the crate.
pub type Complex = num_complex::Complex64;

/// Deterministic chunked sum: chunks are reduced independently (possibly in
/// parallel) and combined in index order, so results do not depend on the
/// number of worker threads.
pub fn chunked_sum<F>(total: u64, chunk: u64, eval: F) -> Complex
where
    F: Fn(u64, u64) -> Complex + Sync,
{
    use rayon::prelude::*;
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk);
    if n_chunks <= 1 {
        return eval(0, total);
    }
    (0..n_chunks)
        .into_par_iter()
        .map(|c| eval(c * chunk, ((c + 1) * chunk).min(total)))
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}
