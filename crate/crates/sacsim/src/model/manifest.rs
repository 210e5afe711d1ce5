//! Model manifests: the on-disk description of a quantized network.
//!
//! A manifest is a UTF-8 JSON document:
//!
//! ```text
//! {
//!   "input_shape": [3, 224, 224],
//!   "reshape_factor": 4,
//!   "clock_mhz": 170.0,          // optional, default 170
//!   "lsb_exp": 0,                // optional, default 0
//!   "layers": [
//!     {
//!       "f": 64, "c": 48, "s": 1, "g": 2,
//!       "weights": [ {"row": 0, "col": 1, "sign": -1, "exp": -1}, ... ],
//!       "bn": {"mu": 0.2, "sigma": 0.7, "beta": 0.1},
//!       "shift_dirs": [[0, 1], [-1, 0], ...]   // optional, round-robin default
//!     }, ...
//!   ],
//!   "fc": { "classes": 1000, "c": 512, "g": 8, "weights": [...] }
//! }
//! ```
//!
//! `weights` is either a sparse list of `{row, col, sign, exp}` entries or a
//! dense `f x c` array of floats (quantized on load); `bn` is either raw
//! statistics `{mu, sigma, beta}` or the quantized form
//! `{scale_exp, bias_fx}`. Unknown fields anywhere are rejected. The first
//! layer never has shift directions; the fully connected layer has neither
//! shifts nor batch norm.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::bn::{fold_bn_into_weights, quantize_bn, BnParams, FoldedAffine};
use crate::model::layer::{BnState, LayerSpec, ShiftDir, WeightMatrix};
use crate::model::weight::{log_quantize, PowTwoWeight, MAX_EXP, MIN_EXP};

pub const DEFAULT_CLOCK_MHZ: f64 = 170.0;

/// A fully validated model: convolution layers, the final fully connected
/// layer, and the global input/clock parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifest {
    /// Image shape before reshaping, `(channels, height, width)`.
    pub input_shape: (usize, usize, usize),
    pub reshape_factor: usize,
    pub clock_mhz: f64,
    /// Exponent of one activation LSB; biases are quantized to steps of
    /// `2^(lsb_exp - 6)`.
    pub lsb_exp: i32,
    pub layers: Vec<LayerSpec>,
    /// Final fully connected layer; `filters` is the class count.
    pub fc: LayerSpec,
}

impl ModelManifest {
    pub fn classes(&self) -> usize {
        self.fc.filters
    }

    /// Channel count the first layer sees, after space-to-depth reshaping.
    pub fn reshaped_channels(&self) -> usize {
        self.input_shape.0 * self.reshape_factor * self.reshape_factor
    }

    /// Spatial dims entering each convolution layer, plus the final dims the
    /// fully connected layer sums over.
    pub fn spatial_dims(&self) -> (Vec<(usize, usize)>, (usize, usize)) {
        let r = self.reshape_factor;
        let mut dims = (self.input_shape.1 / r, self.input_shape.2 / r);
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            per_layer.push(dims);
            dims = (dims.0.div_ceil(layer.stride), dims.1.div_ceil(layer.stride));
        }
        (per_layer, dims)
    }

    /// Returns a copy with every raw batch norm quantized to
    /// `{scale_exp, bias_fx}` on this model's LSB grid.
    pub fn quantized(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, layer) in out.layers.iter_mut().enumerate() {
            if let Some(BnState::Raw(params)) = layer.bn {
                let affine = quantize_bn(&params, self.lsb_exp)
                    .map_err(|e| prefix(&format!("layers[{i}]"), e))?;
                layer.bn = Some(BnState::Quantized(affine));
            }
        }
        Ok(out)
    }

    /// Quantizes batch norm and folds its scale into the weight exponents,
    /// leaving only per-layer biases behind.
    pub fn folded(&self) -> Result<Self> {
        let mut out = self.quantized()?;
        for (i, layer) in out.layers.iter_mut().enumerate() {
            *layer = fold_bn_into_weights(layer).map_err(|e| prefix(&format!("layers[{i}]"), e))?;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// File schema.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    input_shape: [u64; 3],
    reshape_factor: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clock_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lsb_exp: Option<i32>,
    layers: Vec<LayerDoc>,
    fc: FcDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    f: u64,
    c: u64,
    s: u64,
    g: u64,
    weights: Value,
    bn: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift_dirs: Option<Vec<[i64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FcDoc {
    classes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<u64>,
    c: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<u64>,
    g: u64,
    weights: Value,
}

fn prefix(ctx: &str, e: Error) -> Error {
    match e {
        Error::InvalidModel(m) => Error::InvalidModel(format!("{ctx}: {m}")),
        other => other,
    }
}

fn invalid(ctx: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidModel(format!("{ctx}: {msg}"))
}

/// Parses a sparse entry list or dense float matrix into weights.
fn weights_from_value(ctx: &str, value: &Value, f: usize, c: usize) -> Result<WeightMatrix> {
    let items = value
        .as_array()
        .ok_or_else(|| invalid(ctx, "weights must be an array"))?;
    let mut w = WeightMatrix::zeros(f, c);
    if items.is_empty() {
        return Ok(w);
    }
    if items[0].is_object() {
        // Sparse {row, col, sign, exp} entries.
        let mut seen = std::collections::HashSet::new();
        for (i, item) in items.iter().enumerate() {
            let ctx = format!("{ctx}.weights[{i}]");
            let obj = item
                .as_object()
                .ok_or_else(|| invalid(&ctx, "expected a {row, col, sign, exp} object"))?;
            for key in obj.keys() {
                if !matches!(key.as_str(), "row" | "col" | "sign" | "exp") {
                    return Err(invalid(&ctx, format!("unknown field `{key}`")));
                }
            }
            let int = |key: &str| -> Result<i64> {
                obj.get(key)
                    .and_then(Value::as_i64)
                    .ok_or_else(|| invalid(&ctx, format!("missing or non-integer `{key}`")))
            };
            let (row, col, sign, exp) = (int("row")?, int("col")?, int("sign")?, int("exp")?);
            if row < 0 || row as usize >= f {
                return Err(invalid(&ctx, format!("row {row} outside 0..{f}")));
            }
            if col < 0 || col as usize >= c {
                return Err(invalid(&ctx, format!("col {col} outside 0..{c}")));
            }
            if sign != 1 && sign != -1 {
                return Err(invalid(&ctx, format!("sign must be 1 or -1, got {sign}")));
            }
            if !(MIN_EXP as i64..=MAX_EXP as i64).contains(&exp) {
                return Err(invalid(
                    &ctx,
                    format!("exp {exp} outside [{MIN_EXP}, {MAX_EXP}]"),
                ));
            }
            if !seen.insert((row, col)) {
                return Err(invalid(&ctx, format!("duplicate entry for ({row}, {col})")));
            }
            w.set(
                row as usize,
                col as usize,
                PowTwoWeight::new(sign < 0, exp as i32)?,
            );
        }
    } else {
        // Dense float rows, quantized on load.
        if items.len() != f {
            return Err(invalid(
                ctx,
                format!("dense weights have {} rows, expected {f}", items.len()),
            ));
        }
        for (r, row) in items.iter().enumerate() {
            let row = row
                .as_array()
                .ok_or_else(|| invalid(ctx, format!("weights row {r} is not an array")))?;
            if row.len() != c {
                return Err(invalid(
                    ctx,
                    format!("weights row {r} has {} entries, expected {c}", row.len()),
                ));
            }
            for (col, v) in row.iter().enumerate() {
                let x = v
                    .as_f64()
                    .ok_or_else(|| invalid(ctx, format!("weights[{r}][{col}] is not a number")))?;
                w.set(r, col, log_quantize(x));
            }
        }
    }
    Ok(w)
}

/// Parses `{mu, sigma, beta}` or `{scale_exp, bias_fx}`.
fn bn_from_value(ctx: &str, value: &Value) -> Result<BnState> {
    let obj = value
        .as_object()
        .ok_or_else(|| invalid(ctx, "bn must be an object"))?;
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    match keys.as_slice() {
        ["beta", "mu", "sigma"] => {
            let num = |key: &str| -> Result<f64> {
                obj[key]
                    .as_f64()
                    .ok_or_else(|| invalid(ctx, format!("bn.{key} is not a number")))
            };
            let params = BnParams {
                mu: num("mu")?,
                sigma: num("sigma")?,
                beta: num("beta")?,
            };
            if !(params.sigma.is_finite() && params.sigma > 0.0) {
                return Err(invalid(ctx, "bn.sigma must be > 0"));
            }
            Ok(BnState::Raw(params))
        }
        ["bias_fx", "scale_exp"] => {
            let int = |key: &str| -> Result<i64> {
                obj[key]
                    .as_i64()
                    .ok_or_else(|| invalid(ctx, format!("bn.{key} is not an integer")))
            };
            let scale_exp = int("scale_exp")?;
            let bias_fx = int("bias_fx")?;
            if i32::try_from(scale_exp).is_err() {
                return Err(invalid(
                    ctx,
                    format!("bn.scale_exp {scale_exp} out of range"),
                ));
            }
            let bias_fx = i32::try_from(bias_fx)
                .map_err(|_| invalid(ctx, format!("bn.bias_fx {bias_fx} does not fit 32 bits")))?;
            Ok(BnState::Quantized(FoldedAffine {
                scale_exp: scale_exp as i32,
                bias_fx,
            }))
        }
        _ => Err(invalid(
            ctx,
            "bn must have exactly the fields {mu, sigma, beta} or {scale_exp, bias_fx}",
        )),
    }
}

fn shift_dirs_from_doc(ctx: &str, dirs: &[[i64; 2]], channels: usize) -> Result<Vec<ShiftDir>> {
    if dirs.len() != channels {
        return Err(invalid(
            ctx,
            format!(
                "shift_dirs has {} entries for {channels} channels",
                dirs.len()
            ),
        ));
    }
    dirs.iter()
        .enumerate()
        .map(|(i, [dy, dx])| {
            let small = |v: i64| i8::try_from(v).ok().filter(|v| (-1..=1).contains(v));
            match (small(*dy), small(*dx)) {
                (Some(dy), Some(dx)) => Ok(ShiftDir { dy, dx }),
                _ => Err(invalid(
                    ctx,
                    format!("shift_dirs[{i}] = [{dy}, {dx}] outside {{-1,0,1}}"),
                )),
            }
        })
        .collect()
}

fn usize_field(ctx: &str, name: &str, v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| invalid(ctx, format!("{name} = {v} is out of range")))
}

/// Parses and validates a manifest document.
pub fn load_manifest(text: &str) -> Result<ModelManifest> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: ManifestDoc = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::parse(format!("manifest: {e}")))?;

    let input_shape = (
        usize_field("input_shape", "channels", doc.input_shape[0])?,
        usize_field("input_shape", "height", doc.input_shape[1])?,
        usize_field("input_shape", "width", doc.input_shape[2])?,
    );
    if input_shape.0 == 0 || input_shape.1 == 0 || input_shape.2 == 0 {
        return Err(Error::invalid("input_shape dimensions must be positive"));
    }
    let r = usize_field("reshape_factor", "reshape_factor", doc.reshape_factor)?;
    if !matches!(r, 1 | 2 | 4) {
        return Err(Error::invalid(format!(
            "reshape_factor must be 1, 2 or 4, got {r}"
        )));
    }
    if input_shape.1 % r != 0 || input_shape.2 % r != 0 {
        return Err(Error::invalid(format!(
            "input {}x{} not divisible by reshape_factor {r}",
            input_shape.1, input_shape.2
        )));
    }
    let clock_mhz = doc.clock_mhz.unwrap_or(DEFAULT_CLOCK_MHZ);
    if !(clock_mhz.is_finite() && clock_mhz > 0.0) {
        return Err(Error::invalid(format!(
            "clock_mhz must be positive, got {clock_mhz}"
        )));
    }
    let lsb_exp = doc.lsb_exp.unwrap_or(0);

    let mut expected_c = input_shape.0 * r * r;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, layer) in doc.layers.iter().enumerate() {
        let ctx = format!("layers[{i}]");
        let f = usize_field(&ctx, "f", layer.f)?;
        let c = usize_field(&ctx, "c", layer.c)?;
        let s = usize_field(&ctx, "s", layer.s)?;
        let g = usize_field(&ctx, "g", layer.g)?;
        if c != expected_c {
            return Err(invalid(
                &ctx,
                format!("c = {c} does not match the {expected_c} channels produced upstream"),
            ));
        }
        let weights = weights_from_value(&ctx, &layer.weights, f, c)?;
        let bn = bn_from_value(&format!("{ctx}.bn"), &layer.bn)?;
        let shift_dirs = match (&layer.shift_dirs, i) {
            (Some(_), 0) => {
                return Err(invalid(&ctx, "shift_dirs not allowed on the first layer"));
            }
            (Some(dirs), _) => Some(shift_dirs_from_doc(&ctx, dirs, c)?),
            (None, 0) => None,
            (None, _) => Some(ShiftDir::round_robin(c)),
        };
        layers.push(
            LayerSpec::new(f, c, s, g, weights, Some(bn), shift_dirs)
                .map_err(|e| prefix(&ctx, e))?,
        );
        expected_c = f;
    }

    let ctx = "fc";
    let classes = usize_field(ctx, "classes", doc.fc.classes)?;
    if classes == 0 {
        return Err(invalid(ctx, "classes must be positive"));
    }
    if let Some(f) = doc.fc.f {
        if f != classes as u64 {
            return Err(invalid(
                ctx,
                format!("f = {f} disagrees with classes = {classes}"),
            ));
        }
    }
    if let Some(s) = doc.fc.s {
        if s != 1 {
            return Err(invalid(
                ctx,
                format!("the fully connected layer must have s = 1, got {s}"),
            ));
        }
    }
    let c = usize_field(ctx, "c", doc.fc.c)?;
    if c != expected_c {
        return Err(invalid(
            ctx,
            format!("c = {c} does not match the {expected_c} channels produced upstream"),
        ));
    }
    let g = usize_field(ctx, "g", doc.fc.g)?;
    let weights = weights_from_value(ctx, &doc.fc.weights, classes, c)?;
    let fc = LayerSpec::new(classes, c, 1, g, weights, None, None).map_err(|e| prefix(ctx, e))?;

    Ok(ModelManifest {
        input_shape,
        reshape_factor: r,
        clock_mhz,
        lsb_exp,
        layers,
        fc,
    })
}

/// Serializes a manifest back to its JSON document form.
///
/// Weights are written sparsely in (row, col) order, so the output is fully
/// deterministic for a given model.
pub fn save_manifest(model: &ModelManifest) -> String {
    let weights_doc = |w: &WeightMatrix, channels: usize| -> Value {
        let mut entries = Vec::new();
        for row in 0..w.rows() {
            for col in 0..channels {
                if let PowTwoWeight::Pow { negative, exponent } = w.get(row, col) {
                    entries.push(serde_json::json!({
                        "row": row,
                        "col": col,
                        "sign": if negative { -1 } else { 1 },
                        "exp": exponent,
                    }));
                }
            }
        }
        Value::Array(entries)
    };
    let bn_doc = |bn: &BnState| -> Value {
        match bn {
            BnState::Raw(p) => {
                serde_json::json!({ "mu": p.mu, "sigma": p.sigma, "beta": p.beta })
            }
            BnState::Quantized(a) => {
                serde_json::json!({ "scale_exp": a.scale_exp, "bias_fx": a.bias_fx })
            }
        }
    };
    let doc = ManifestDoc {
        input_shape: [
            model.input_shape.0 as u64,
            model.input_shape.1 as u64,
            model.input_shape.2 as u64,
        ],
        reshape_factor: model.reshape_factor as u64,
        clock_mhz: Some(model.clock_mhz),
        lsb_exp: Some(model.lsb_exp),
        layers: model
            .layers
            .iter()
            .map(|layer| LayerDoc {
                f: layer.filters as u64,
                c: layer.channels as u64,
                s: layer.stride as u64,
                g: layer.group_size as u64,
                weights: weights_doc(&layer.weights, layer.channels),
                bn: bn_doc(layer.bn.as_ref().expect("conv layers carry bn")),
                shift_dirs: layer
                    .shift_dirs
                    .as_ref()
                    .map(|dirs| dirs.iter().map(|d| [d.dy as i64, d.dx as i64]).collect()),
            })
            .collect(),
        fc: FcDoc {
            classes: model.fc.filters as u64,
            f: None,
            c: model.fc.channels as u64,
            s: None,
            g: model.fc.group_size as u64,
            weights: weights_doc(&model.fc.weights, model.fc.channels),
        },
    };
    serde_json::to_string_pretty(&doc).expect("manifest serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_manifest() -> String {
        r#"{
            "input_shape": [8, 4, 4],
            "reshape_factor": 1,
            "layers": [{
                "f": 8, "c": 8, "s": 1, "g": 4,
                "weights": [{"row": 0, "col": 1, "sign": -1, "exp": -1}],
                "bn": {"mu": 0.0, "sigma": 1.0, "beta": 0.0}
            }],
            "fc": {"classes": 4, "c": 8, "g": 4,
                   "weights": [{"row": 3, "col": 7, "sign": 1, "exp": 0}]}
        }"#
        .to_string()
    }

    #[test]
    fn loads_a_minimal_manifest() {
        let m = load_manifest(&minimal_manifest()).unwrap();
        assert_eq!(m.layers.len(), 1);
        assert_eq!(m.clock_mhz, DEFAULT_CLOCK_MHZ);
        assert_eq!(m.lsb_exp, 0);
        assert_eq!(m.layers[0].weights.get(0, 1), PowTwoWeight::neg(-1));
        assert_eq!(m.classes(), 4);
        assert!(m.layers[0].shift_dirs.is_none(), "first layer never shifts");
        assert_eq!(m.fc.weights.get(3, 7), PowTwoWeight::pos(0));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = minimal_manifest().replace(
            "\"reshape_factor\": 1",
            "\"reshape_factor\": 1, \"voltage\": 3",
        );
        let err = load_manifest(&text).unwrap_err();
        assert!(err.to_string().contains("voltage"), "got: {err}");

        let text = minimal_manifest().replace("\"mu\": 0.0", "\"gamma\": 2.0, \"mu\": 0.0");
        assert!(
            load_manifest(&text).is_err(),
            "bn with a gamma field must be rejected"
        );
    }

    #[test]
    fn rejects_zero_sigma_with_named_field() {
        let text = minimal_manifest().replace("\"sigma\": 1.0", "\"sigma\": 0.0");
        let err = load_manifest(&text).unwrap_err();
        assert!(
            err.to_string().contains("bn.sigma must be > 0"),
            "got: {err}"
        );
        assert!(err.to_string().contains("layers[0]"), "got: {err}");
    }

    #[test]
    fn rejects_channel_chain_breaks() {
        let text =
            minimal_manifest().replace("\"classes\": 4, \"c\": 8", "\"classes\": 4, \"c\": 16");
        let err = load_manifest(&text).unwrap_err();
        assert!(err.to_string().contains("fc"), "got: {err}");

        let text = minimal_manifest().replace("\"f\": 8, \"c\": 8", "\"f\": 8, \"c\": 4");
        assert!(
            load_manifest(&text).is_err(),
            "layer c must match reshaped input channels"
        );
    }

    #[test]
    fn rejects_bad_sparse_entries() {
        for (from, to) in [
            ("\"col\": 1", "\"col\": 9"),
            ("\"sign\": -1", "\"sign\": 2"),
            ("\"exp\": -1", "\"exp\": -9"),
            ("\"exp\": -1", "\"exp\": 1"),
        ] {
            let text = minimal_manifest().replace(from, to);
            assert!(load_manifest(&text).is_err(), "{from} -> {to} must fail");
        }
        let text = minimal_manifest().replace(
            "[{\"row\": 0, \"col\": 1, \"sign\": -1, \"exp\": -1}]",
            "[{\"row\": 0, \"col\": 1, \"sign\": -1, \"exp\": -1},
              {\"row\": 0, \"col\": 1, \"sign\": 1, \"exp\": 0}]",
        );
        let err = load_manifest(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");
    }

    #[test]
    fn dense_weights_are_quantized_on_load() {
        let text = r#"{
            "input_shape": [2, 2, 2],
            "reshape_factor": 1,
            "layers": [{
                "f": 2, "c": 2, "s": 1, "g": 1,
                "weights": [[0.5, 0.0], [0.3, -0.001]],
                "bn": {"scale_exp": 0, "bias_fx": 0}
            }],
            "fc": {"classes": 2, "c": 2, "g": 1, "weights": []}
        }"#;
        let m = load_manifest(text).unwrap();
        assert_eq!(m.layers[0].weights.get(0, 0), PowTwoWeight::pos(-1));
        assert_eq!(m.layers[0].weights.get(0, 1), PowTwoWeight::Zero);
        assert_eq!(m.layers[0].weights.get(1, 0), PowTwoWeight::pos(-2));
        assert_eq!(
            m.layers[0].weights.get(1, 1),
            PowTwoWeight::Zero,
            "below threshold"
        );
    }

    #[test]
    fn first_layer_may_not_shift_and_defaults_apply_elsewhere() {
        let text = minimal_manifest().replace(
            "\"bn\": {\"mu\": 0.0, \"sigma\": 1.0, \"beta\": 0.0}",
            "\"bn\": {\"mu\": 0.0, \"sigma\": 1.0, \"beta\": 0.0}, \"shift_dirs\": [[0,0],[0,0],[0,0],[0,0],[0,0],[0,0],[0,0],[0,0]]",
        );
        let err = load_manifest(&text).unwrap_err();
        assert!(err.to_string().contains("first layer"), "got: {err}");

        // A second layer without shift_dirs gets the round-robin default.
        let text = minimal_manifest().replace("\"fc\":", r#""layers_tail": 0, "fc":"#);
        assert!(
            load_manifest(&text).is_err(),
            "sanity: unknown field still rejected"
        );
        let two_layer = r#"{
            "input_shape": [8, 4, 4],
            "reshape_factor": 1,
            "layers": [
                {"f": 8, "c": 8, "s": 1, "g": 4, "weights": [],
                 "bn": {"scale_exp": 0, "bias_fx": 0}},
                {"f": 4, "c": 8, "s": 2, "g": 2, "weights": [],
                 "bn": {"scale_exp": 0, "bias_fx": 0}}
            ],
            "fc": {"classes": 4, "c": 4, "g": 2, "weights": []}
        }"#;
        let m = load_manifest(two_layer).unwrap();
        assert_eq!(m.layers[1].shift_dirs, Some(ShiftDir::round_robin(8)));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let text = minimal_manifest();
        let m = load_manifest(&text).unwrap();
        let saved = save_manifest(&m);
        let reloaded = load_manifest(&saved).unwrap();
        assert_eq!(reloaded, m);
        assert_eq!(
            save_manifest(&reloaded),
            saved,
            "serialization is deterministic"
        );
    }

    #[test]
    fn fc_rejects_bn_stride_and_class_mismatches() {
        let text = minimal_manifest().replace(
            "\"classes\": 4, \"c\": 8",
            "\"classes\": 4, \"f\": 5, \"c\": 8",
        );
        assert!(load_manifest(&text).is_err(), "fc.f must equal classes");

        let text = minimal_manifest().replace(
            "\"classes\": 4, \"c\": 8",
            "\"classes\": 4, \"s\": 2, \"c\": 8",
        );
        assert!(load_manifest(&text).is_err(), "fc stride must be 1");

        let text = minimal_manifest().replace(
            "\"classes\": 4, \"c\": 8",
            "\"classes\": 4, \"bn\": {\"scale_exp\": 0, \"bias_fx\": 0}, \"c\": 8",
        );
        assert!(load_manifest(&text).is_err(), "fc may not carry bn");
    }
}
