//! Batch-norm quantization and folding.
//!
//! With the learnable scale fixed to 1, batch norm is the affine map
//! `y = (1/sigma) * x + (beta - mu/sigma)`. We quantize the scale to a power
//! of two and the bias to the 32-bit accumulator's fixed-point grid; folding
//! then just adds the scale exponent to every weight exponent, which is
//! exact — the fold itself introduces no numeric error at all.

use crate::error::{Error, Result};
use crate::model::layer::{BnState, LayerSpec};
use crate::model::weight::{round_log2_half_up, PowTwoWeight, MAX_EXP, MIN_EXP};

/// Raw batch-norm statistics for one layer (learnable scale fixed to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnParams {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
}

/// Batch norm after quantization: `y = 2^scale_exp * x + bias`, with the bias
/// stored as `bias_fx` accumulator steps of `2^(lsb_exp - 6)`.
///
/// Unlike weight exponents, `scale_exp` is not clamped to `[-6, 0]`; the
/// range check happens when the scale is folded into the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldedAffine {
    pub scale_exp: i32,
    pub bias_fx: i32,
}

/// Quantizes batch-norm statistics for a model whose activations sit on the
/// `2^lsb_exp` grid.
///
/// The scale `1/sigma` is rounded to the nearest power of two in the log
/// domain (halves toward +infinity); the bias `beta - mu/sigma` is rounded to
/// the nearest accumulator step of `2^(lsb_exp - 6)` (halves away from zero).
pub fn quantize_bn(bn: &BnParams, lsb_exp: i32) -> Result<FoldedAffine> {
    if !(bn.sigma.is_finite() && bn.sigma > 0.0) {
        return Err(Error::invalid(format!(
            "bn.sigma must be > 0, got {}",
            bn.sigma
        )));
    }
    if !bn.mu.is_finite() || !bn.beta.is_finite() {
        return Err(Error::invalid("bn.mu and bn.beta must be finite"));
    }
    let scale_exp = round_log2_half_up(bn.sigma.recip().log2());
    let bias = (bn.beta - bn.mu / bn.sigma) * (-(lsb_exp - 6) as f64).exp2();
    let bias_fx = bias.round();
    if bias_fx < i32::MIN as f64 || bias_fx > i32::MAX as f64 {
        return Err(Error::invalid(format!(
            "bn bias {bias_fx} does not fit a 32-bit accumulator word"
        )));
    }
    Ok(FoldedAffine {
        scale_exp,
        bias_fx: bias_fx as i32,
    })
}

/// Folds the quantized batch-norm scale into the layer's weight exponents.
///
/// Every non-zero weight exponent grows by `scale_exp`; the bias stays behind
/// for the array's bias unit (the returned layer carries `scale_exp = 0`).
/// Errors if any combined exponent leaves `[-6, 0]`.
pub fn fold_bn_into_weights(layer: &LayerSpec) -> Result<LayerSpec> {
    let affine = match layer.bn {
        Some(BnState::Quantized(affine)) => affine,
        Some(BnState::Raw(_)) => {
            return Err(Error::invalid(
                "batch norm must be quantized before folding",
            ))
        }
        None => return Err(Error::invalid("layer has no batch norm to fold")),
    };

    let mut folded = layer.clone();
    for row in 0..folded.weights.rows() {
        for col in 0..folded.weights.cols() {
            if let PowTwoWeight::Pow { negative, exponent } = folded.weights.get(row, col) {
                let combined = exponent as i32 + affine.scale_exp;
                if !(MIN_EXP..=MAX_EXP).contains(&combined) {
                    return Err(Error::invalid(format!(
                        "folding scale 2^{} into weight {} at ({row}, {col}) \
                         gives exponent {combined} outside [{MIN_EXP}, {MAX_EXP}]",
                        affine.scale_exp,
                        folded.weights.get(row, col),
                    )));
                }
                folded
                    .weights
                    .set(row, col, PowTwoWeight::new(negative, combined)?);
            }
        }
    }
    folded.bn = Some(BnState::Quantized(FoldedAffine {
        scale_exp: 0,
        bias_fx: affine.bias_fx,
    }));
    Ok(folded)
}

/// Multiplies an accumulator value by `2^scale_exp` using arithmetic shifts.
///
/// For a layer that folds without error, every accumulator term is divisible
/// by `2^-scale_exp`, so the right shift on a negative exponent is exact and
/// applying the scale before or after summation gives the same word.
pub fn apply_scale_exp(acc: i64, scale_exp: i32) -> i64 {
    if scale_exp >= 0 {
        acc << scale_exp
    } else {
        acc >> -scale_exp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layer::WeightMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantizes_known_statistics() {
        // 1/0.7 = 1.4286, log2 = 0.5146, rounds up to scale 2^1;
        // bias (0.1 - 0.2/0.7) = -0.18571 is -11.886 steps of 2^-6 -> -12.
        let affine = quantize_bn(
            &BnParams {
                mu: 0.2,
                sigma: 0.7,
                beta: 0.1,
            },
            0,
        )
        .unwrap();
        assert_eq!(
            affine,
            FoldedAffine {
                scale_exp: 1,
                bias_fx: -12
            }
        );

        let identity = quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 1.0,
                beta: 0.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(
            identity,
            FoldedAffine {
                scale_exp: 0,
                bias_fx: 0
            }
        );
    }

    #[test]
    fn scale_exponent_is_not_clamped() {
        let wide = quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 1024.0,
                beta: 0.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(wide.scale_exp, -10);
        let narrow = quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 1.0 / 512.0,
                beta: 0.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(narrow.scale_exp, 9);
    }

    #[test]
    fn rejects_bad_sigma_and_huge_bias() {
        let err = quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 0.0,
                beta: 0.0,
            },
            0,
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("bn.sigma must be > 0"),
            "got: {err}"
        );
        assert!(quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: -1.0,
                beta: 0.0
            },
            0
        )
        .is_err());
        assert!(quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 1.0,
                beta: 1e12
            },
            0
        )
        .is_err());
    }

    #[test]
    fn bias_uses_the_lsb_grid() {
        // With lsb_exp = 2 the accumulator step is 2^-4, so the same bias is
        // four times fewer steps.
        let a0 = quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 1.0,
                beta: 0.5,
            },
            0,
        )
        .unwrap();
        let a2 = quantize_bn(
            &BnParams {
                mu: 0.0,
                sigma: 1.0,
                beta: 0.5,
            },
            2,
        )
        .unwrap();
        assert_eq!(a0.bias_fx, 32);
        assert_eq!(a2.bias_fx, 8);
    }

    fn layer_with(weights: WeightMatrix, affine: FoldedAffine) -> LayerSpec {
        let channels = weights.cols();
        LayerSpec::new(
            weights.rows(),
            channels,
            1,
            1,
            weights,
            Some(BnState::Quantized(affine)),
            None,
        )
        .unwrap()
    }

    #[test]
    fn folding_shifts_exponents_and_keeps_bias() {
        let mut w = WeightMatrix::zeros(1, 2);
        w.set(0, 0, PowTwoWeight::pos(-1));
        let layer = layer_with(
            w,
            FoldedAffine {
                scale_exp: -2,
                bias_fx: 7,
            },
        );
        let folded = fold_bn_into_weights(&layer).unwrap();
        assert_eq!(folded.weights.get(0, 0), PowTwoWeight::pos(-3));
        assert_eq!(folded.weights.get(0, 1), PowTwoWeight::Zero);
        assert_eq!(
            folded.bn,
            Some(BnState::Quantized(FoldedAffine {
                scale_exp: 0,
                bias_fx: 7
            }))
        );
    }

    #[test]
    fn folding_rejects_out_of_range_results() {
        let mut w = WeightMatrix::zeros(1, 1);
        w.set(0, 0, PowTwoWeight::pos(0));
        let layer = layer_with(
            w,
            FoldedAffine {
                scale_exp: 1,
                bias_fx: 0,
            },
        );
        assert!(fold_bn_into_weights(&layer).is_err());

        let mut w = WeightMatrix::zeros(1, 1);
        w.set(0, 0, PowTwoWeight::neg(-6));
        let layer = layer_with(
            w,
            FoldedAffine {
                scale_exp: -1,
                bias_fx: 0,
            },
        );
        assert!(fold_bn_into_weights(&layer).is_err());
    }

    /// Folding before the matmul and scaling after it are the same integer.
    #[test]
    fn folding_commutes_with_integer_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let scale_exp = rng.gen_range(-2..=2);
            let (lo, hi) = (
                MIN_EXP.max(MIN_EXP - scale_exp),
                MAX_EXP.min(MAX_EXP - scale_exp),
            );
            let rows = rng.gen_range(1..=8);
            let cols = rng.gen_range(1..=8);
            let mut w = WeightMatrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    if rng.gen_bool(0.7) {
                        w.set(
                            r,
                            c,
                            PowTwoWeight::new(rng.gen(), rng.gen_range(lo..=hi)).unwrap(),
                        );
                    }
                }
            }
            let bias = rng.gen_range(-100..100);
            let layer = layer_with(
                w,
                FoldedAffine {
                    scale_exp,
                    bias_fx: bias,
                },
            );
            let folded = fold_bn_into_weights(&layer).unwrap();
            let inputs: Vec<u8> = (0..cols).map(|_| rng.gen()).collect();

            for r in 0..rows {
                let dot = |l: &LayerSpec| -> i64 {
                    (0..cols)
                        .map(|c| match l.weights.get(r, c) {
                            PowTwoWeight::Zero => 0,
                            w => {
                                w.signum() as i64
                                    * ((inputs[c] as i64) << (w.exponent().unwrap() + 6))
                            }
                        })
                        .sum()
                };
                let unfolded = apply_scale_exp(dot(&layer), scale_exp) + bias as i64;
                let direct = dot(&folded) + bias as i64;
                assert_eq!(unfolded, direct, "row {r}, scale 2^{scale_exp}");
            }
        }
    }
}
