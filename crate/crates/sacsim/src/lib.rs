//! Compiler and cycle-level simulator for sparse CNN inference on a bit-serial
//! selector-accumulator (SAC) systolic array.
//!
//! The pipeline turns a floating-point CNN description into something a very
//! small piece of hardware can run, then runs it in software:
//!
//! 1. [`model`] — the model intermediate representation. Weights are quantized
//!    to powers of two (`sign * 2^exp`, `exp` in `[-6, 0]`, or exactly zero),
//!    batch-norm layers are folded into the weight exponents and a per-layer
//!    fixed-point bias, and input images are reshaped so deep, narrow tensors
//!    keep the array busy.
//! 2. [`packer`] — column combining. Within each aligned group of `g` input
//!    channels a filter row keeps at most one non-zero weight, so `g` sparse
//!    columns collapse into one dense column of 8-bit cell codes.
//! 3. [`scheduler`] — tiling of packed layers onto a fixed rows x cols array
//!    and emission of the 64-bit load-weights / matmul instruction stream.
//! 4. [`sim`] — the array model itself: per-column register chains that
//!    multiply by `2^k` with wiring delays, bit-serial accumulation, data-zero
//!    skipping, ReLU + requantization, and cycle/activity accounting.
//! 5. [`oracle`] — independent integer reference implementations and a
//!    deterministic synthetic-model generator used to verify all of the above.
//!
//! Every simulator output is bit-exact against the oracle: the bit-serial and
//! word-level paths, tiled and untiled schedules, and folded and unfolded
//! batch norm all produce identical 32-bit accumulator words.

pub mod error;
pub mod model;
pub mod oracle;
pub mod packer;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};

// Run every example in the guide as a doctest so the book cannot drift from
// the library. Each chapter is compiled as the documentation of an empty
// module; `cargo test --doc` picks them up.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(quantization, "../../../book/src/quantization.md");
    chapter!(reshaping, "../../../book/src/reshaping.md");
    chapter!(packing, "../../../book/src/packing.md");
    chapter!(scheduling, "../../../book/src/scheduling.md");
    chapter!(simulator, "../../../book/src/simulator.md");
    chapter!(cli, "../../../book/src/cli.md");
}
