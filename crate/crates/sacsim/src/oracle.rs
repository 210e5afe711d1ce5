//! Reference implementations the simulator is verified against, plus a
//! deterministic generator for synthetic models.
//!
//! The reference path is deliberately naive: plain nested loops over the
//! unpacked weight matrices, 64-bit arithmetic throughout, batch norm applied
//! unfolded (scale the dot product, then add the bias). It shares no code
//! with the packer, scheduler or array model, so agreement between
//! [`crate::sim::run_model`] and [`ref_forward`] checks the whole compiled
//! pipeline — packing, tiling, instruction encoding, bias injection, folding
//! and the bit-serial adders — in one comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    apply_scale_exp, channel_shift, reshape_input, BnParams, BnState, LayerSpec, ModelManifest,
    PowTwoWeight, QuantTensor, ShiftDir, WeightMatrix, MAX_EXP, MIN_EXP,
};
use crate::packer::PackedLayer;

/// ReLU and requantization at reference precision: negatives clamp to zero,
/// positives drop the six fractional bits and saturate at 255.
fn relu_quantize_wide(acc: i64) -> u8 {
    if acc < 0 {
        0
    } else {
        (acc >> 6).min(255) as u8
    }
}

/// Reference result for one packed tile: what the array must produce when
/// this tile is loaded and `vectors` stream through it. Row `r` starts from
/// the tile's bias and adds `sign * (selected << (exp + 6))` per column.
pub fn ref_matmul(packed: &PackedLayer, vectors: &[Vec<u8>]) -> Vec<Vec<i64>> {
    let g = packed.group_size;
    (0..packed.rows)
        .map(|r| {
            vectors
                .iter()
                .map(|v| {
                    assert_eq!(v.len(), packed.cols * g, "vector spans the packed width");
                    let mut acc = packed.bias_fx[r] as i64;
                    for c in 0..packed.cols {
                        let (index, w) = packed.weight_at(r, c);
                        if let Some(exp) = w.exponent() {
                            acc += w.signum() as i64 * ((v[c * g + index] as i64) << (exp + 6));
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Reference response of one layer straight from its unpacked weight matrix,
/// with quantized batch norm applied unfolded: `2^scale_exp * (Wx) + bias`.
///
/// Raw batch-norm statistics must be quantized first.
pub fn ref_layer_response(layer: &LayerSpec, vectors: &[Vec<u8>]) -> Result<Vec<Vec<i64>>> {
    let (scale_exp, bias_fx) = match layer.bn {
        Some(BnState::Quantized(a)) => (a.scale_exp, a.bias_fx),
        Some(BnState::Raw(_)) => {
            return Err(Error::invalid(
                "batch norm must be quantized before the reference run",
            ))
        }
        None => (0, 0),
    };
    let cols = layer.padded_channels();
    Ok((0..layer.filters)
        .map(|f| {
            vectors
                .iter()
                .map(|v| {
                    assert_eq!(v.len(), cols, "vector spans the padded channels");
                    let mut dot = 0i64;
                    for (ch, &elem) in v.iter().enumerate() {
                        let w = layer.weights.get(f, ch);
                        if let Some(exp) = w.exponent() {
                            dot += w.signum() as i64 * ((elem as i64) << (exp + 6));
                        }
                    }
                    apply_scale_exp(dot, scale_exp) + bias_fx as i64
                })
                .collect()
        })
        .collect())
}

/// Reference inference over a whole manifest: class scores at full 64-bit
/// precision, without packing, tiling or folding.
pub fn ref_forward(manifest: &ModelManifest, image: &QuantTensor) -> Result<Vec<i64>> {
    if image.shape() != manifest.input_shape {
        return Err(Error::invalid(format!(
            "input is {:?}, the model expects {:?}",
            image.shape(),
            manifest.input_shape
        )));
    }
    let model = manifest.quantized()?;
    let mut tensor = reshape_input(image, model.reshape_factor)?;

    for (li, layer) in model.layers.iter().enumerate() {
        if tensor.channels != layer.channels {
            return Err(Error::invalid(format!(
                "layer {li} expects {} channels, got {}",
                layer.channels, tensor.channels
            )));
        }
        let staged = match &layer.shift_dirs {
            Some(dirs) => channel_shift(&tensor, dirs)?,
            None => tensor.clone(),
        };
        let (scale_exp, bias_fx) = match layer.bn {
            Some(BnState::Quantized(a)) => (a.scale_exp, a.bias_fx),
            _ => (0, 0),
        };
        let (out_h, out_w) = (
            staged.height.div_ceil(layer.stride),
            staged.width.div_ceil(layer.stride),
        );
        let mut next = QuantTensor::zeros(layer.filters, out_h, out_w);
        next.lsb_exp = tensor.lsb_exp;
        for (oy, y) in (0..staged.height).step_by(layer.stride).enumerate() {
            for (ox, x) in (0..staged.width).step_by(layer.stride).enumerate() {
                for f in 0..layer.filters {
                    let mut dot = 0i64;
                    for ch in 0..layer.channels {
                        let w = layer.weights.get(f, ch);
                        if let Some(exp) = w.exponent() {
                            dot += w.signum() as i64 * ((staged.get(ch, y, x) as i64) << (exp + 6));
                        }
                    }
                    let acc = apply_scale_exp(dot, scale_exp) + bias_fx as i64;
                    next.set(f, oy, ox, relu_quantize_wide(acc));
                }
            }
        }
        tensor = next;
    }

    let fc = &model.fc;
    if tensor.channels != fc.channels {
        return Err(Error::invalid(format!(
            "the fully connected layer expects {} channels, got {}",
            fc.channels, tensor.channels
        )));
    }
    let mut logits = vec![0i64; fc.filters];
    for y in 0..tensor.height {
        for x in 0..tensor.width {
            for (class, logit) in logits.iter_mut().enumerate() {
                for ch in 0..fc.channels {
                    let w = fc.weights.get(class, ch);
                    if let Some(exp) = w.exponent() {
                        *logit += w.signum() as i64 * ((tensor.get(ch, y, x) as i64) << (exp + 6));
                    }
                }
            }
        }
    }
    Ok(logits)
}

/// Shape and statistics of a generated model. Channel counts are implied:
/// the first layer sees `input channels * reshape_factor^2`, every later
/// layer sees the previous layer's filter count.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub input_shape: (usize, usize, usize),
    pub reshape_factor: usize,
    /// One `(filters, stride, group_size)` triple per convolution layer.
    pub conv_layers: Vec<(usize, usize, usize)>,
    pub classes: usize,
    pub fc_group: usize,
    pub clock_mhz: f64,
    pub lsb_exp: i32,
    /// Probability that a filter row keeps a weight in a given channel group.
    pub density: f64,
}

impl SyntheticSpec {
    /// A minimal two-layer model for fast tests.
    pub fn tiny() -> Self {
        SyntheticSpec {
            input_shape: (2, 4, 4),
            reshape_factor: 1,
            conv_layers: vec![(6, 1, 2), (4, 2, 2)],
            classes: 3,
            fc_group: 2,
            clock_mhz: 170.0,
            lsb_exp: 0,
            density: 0.6,
        }
    }

    /// A 19-convolution, 1000-class topology in the style of compact
    /// ImageNet networks: a 224x224 input reshaped 4x to 48x56x56, channel
    /// width doubling at each stride-2 stage, group sizes growing with the
    /// width. Used for latency estimates at realistic scale.
    pub fn imagenet_small_56() -> Self {
        let mut conv_layers = vec![(64, 1, 2); 3];
        conv_layers.push((128, 2, 2));
        conv_layers.extend([(128, 1, 2); 3]);
        conv_layers.push((256, 2, 4));
        conv_layers.extend([(256, 1, 4); 4]);
        conv_layers.push((512, 2, 8));
        conv_layers.extend([(512, 1, 8); 6]);
        SyntheticSpec {
            input_shape: (3, 224, 224),
            reshape_factor: 4,
            conv_layers,
            classes: 1000,
            fc_group: 8,
            clock_mhz: 170.0,
            lsb_exp: 0,
            density: 0.5,
        }
    }

    /// A small random topology: up to 8 convolution layers, at most 64
    /// channels anywhere, spatial dims kept tiny.
    pub fn random(rng: &mut impl Rng) -> Self {
        let groups = [1usize, 2, 4, 8];
        let r = [1usize, 2][rng.gen_range(0..2)];
        let base = rng.gen_range(2..=4);
        let conv_layers = (0..rng.gen_range(1..=8))
            .map(|_| {
                (
                    rng.gen_range(1..=64),
                    if rng.gen_bool(0.3) { 2 } else { 1 },
                    groups[rng.gen_range(0..4)],
                )
            })
            .collect();
        SyntheticSpec {
            input_shape: (rng.gen_range(1..=3), base * r, base * r),
            reshape_factor: r,
            conv_layers,
            classes: rng.gen_range(2..=10),
            fc_group: groups[rng.gen_range(0..4)],
            clock_mhz: rng.gen_range(100.0..400.0),
            lsb_exp: rng.gen_range(-1..=1),
            density: rng.gen_range(0.2..0.9),
        }
    }
}

/// Generates a deterministic synthetic model.
///
/// Weights are placed at most one per aligned channel group, so column
/// combining is lossless on every generated layer; batch-norm statistics are
/// sampled so that the quantized scale always folds into the weight-exponent
/// range. Layers past the first get the round-robin shift directions.
pub fn gen_synthetic(seed: u64, spec: &SyntheticSpec) -> ModelManifest {
    // At most one weight per row-group, with exponents confined to
    // `[lo, hi]` so they stay in range after folding.
    fn sparse_weights(
        rng: &mut ChaCha8Rng,
        density: f64,
        rows: usize,
        channels: usize,
        g: usize,
        lo: i32,
        hi: i32,
    ) -> WeightMatrix {
        let mut w = WeightMatrix::zeros(rows, channels);
        for row in 0..rows {
            for group in 0..channels.div_ceil(g) {
                if rng.gen_bool(density) {
                    let ch = group * g + rng.gen_range(0..g);
                    if ch < channels {
                        let exp = rng.gen_range(lo..=hi);
                        w.set(row, ch, PowTwoWeight::new(rng.gen::<bool>(), exp).unwrap());
                    }
                }
            }
        }
        w
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channels = spec.input_shape.0 * spec.reshape_factor * spec.reshape_factor;
    let mut layers = Vec::with_capacity(spec.conv_layers.len());
    for (i, &(filters, stride, g)) in spec.conv_layers.iter().enumerate() {
        // Sample sigma so the scale 1/sigma quantizes to a chosen exponent:
        // log2(1/sigma) = scale_exp - u with |u| < 0.5 rounds to scale_exp.
        let scale_exp: i32 = rng.gen_range(-1..=1);
        let sigma = (-(scale_exp as f64) + rng.gen_range(-0.49..0.49)).exp2();
        let bn = BnParams {
            mu: rng.gen_range(-0.5..0.5),
            sigma,
            beta: rng.gen_range(-0.5..0.5),
        };
        let (lo, hi) = (
            MIN_EXP.max(MIN_EXP - scale_exp),
            MAX_EXP.min(MAX_EXP - scale_exp),
        );
        let w = sparse_weights(&mut rng, spec.density, filters, channels, g, lo, hi);
        let dirs = (i > 0).then(|| ShiftDir::round_robin(channels));
        layers.push(
            LayerSpec::new(
                filters,
                channels,
                stride,
                g,
                w,
                Some(BnState::Raw(bn)),
                dirs,
            )
            .expect("generated layers are structurally valid"),
        );
        channels = filters;
    }

    let w = sparse_weights(
        &mut rng,
        spec.density,
        spec.classes,
        channels,
        spec.fc_group,
        MIN_EXP,
        MAX_EXP,
    );
    let fc = LayerSpec::new(spec.classes, channels, 1, spec.fc_group, w, None, None)
        .expect("generated fully connected layer is structurally valid");

    ModelManifest {
        input_shape: spec.input_shape,
        reshape_factor: spec.reshape_factor,
        clock_mhz: spec.clock_mhz,
        lsb_exp: spec.lsb_exp,
        layers,
        fc,
    }
}

/// Deterministic random input tensor: `zero_fraction` of the values are
/// exactly zero, the rest uniform in `1..=255`.
pub fn gen_input(seed: u64, shape: (usize, usize, usize), zero_fraction: f64) -> QuantTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = shape;
    let values = (0..c * h * w)
        .map(|_| {
            if rng.gen_bool(zero_fraction) {
                0
            } else {
                rng.gen_range(1..=255)
            }
        })
        .collect();
    QuantTensor::from_values(c, h, w, values).expect("shape matches the value count")
}
