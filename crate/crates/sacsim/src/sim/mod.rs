//! The array simulator: selector-accumulator cells, matmul execution at two
//! fidelity levels, zero-skip activity accounting, and whole-model runs.
//!
//! Each cell holds one packed weight. During a matmul it selects its channel
//! from the column's register chain (the `index` field), taps the chain
//! `exponent + 6` stages early to multiply by the weight magnitude, and
//! serially adds or subtracts the tapped word into the partial sum flowing
//! along its row. A cell with the zero weight is disabled for the entire
//! matmul; with zero-skipping enabled, a cell whose selected data element is
//! zero skips that element's cycles. Neither affects results — only the
//! activity counters, which stand in for switching energy.
//!
//! The two fidelity levels — `BitSerial` (every bit of every adder) and
//! `Word` (plain integer shift-adds) — produce identical accumulator words;
//! the test suite enforces this bit-exactly.
//!
//! Cycle accounting uses a documented estimate: a load-weights costs
//! `tile_rows` cycles (one row shifted in per cycle) and a matmul costs
//! `num_vectors + tile_rows + tile_cols + WORD_BITS - 2` cycles (streaming
//! plus pipeline fill and drain across the skewed tile). Input/output skew
//! therefore shows up only in cycle counts, never in values.

pub mod bitserial;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{channel_shift, reshape_input, ModelManifest, PowTwoWeight, QuantTensor};
use crate::packer::{decode_cell, CellCode, PackedLayer, ZERO_CELL};
use crate::scheduler::{compile, ArrayConfig, InstrKind, LayerKind, LayerProgram, Program};

pub use bitserial::{chain_tap, RegisterChain};

/// Bits per streamed input word.
pub const WORD_BITS: usize = 8;

/// 32-bit two's-complement accumulator word, in steps of `2^(lsb_exp - 6)`:
/// a product `input * 2^exp` contributes `input << (exp + 6)` steps.
pub type AccumWord = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Model every bit of every serial adder.
    BitSerial,
    /// Word-level shift-adds in the same order. Bit-exact with `BitSerial`.
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub fidelity: Fidelity,
    pub zero_skip: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            fidelity: Fidelity::BitSerial,
            zero_skip: true,
        }
    }
}

/// Cycle and switching-activity counters.
///
/// A "cell-cycle" is one (cell, data element) slot of a matmul. `total`
/// counts every slot of every loaded tile; `active` counts the slots that
/// actually toggled the adder, so `active / total` is the energy proxy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub cycles: u64,
    pub cell_cycles_total: u64,
    pub cell_cycles_active: u64,
}

/// One selector-accumulator cell.
#[derive(Debug, Clone, Copy)]
pub struct SacCell {
    pub code: CellCode,
    /// Which of the column's interleaved channels this cell selects.
    pub index: usize,
    pub weight: PowTwoWeight,
    /// False for zero weights: the cell sits out the whole matmul.
    pub enabled: bool,
    /// The serial adder's carry flip-flop.
    pub carry: bool,
}

impl SacCell {
    fn idle() -> Self {
        SacCell {
            code: ZERO_CELL,
            index: 0,
            weight: PowTwoWeight::Zero,
            enabled: false,
            carry: false,
        }
    }
}

/// Software model of the physical array plus its bias unit and counters.
pub struct SacArray {
    pub config: ArrayConfig,
    pub options: SimOptions,
    cells: Vec<SacCell>,
    bias: Vec<i32>,
    group_size: usize,
    tile_rows: usize,
    tile_cols: usize,
    counters: Counters,
    last_matmul: (u64, u64),
}

impl SacArray {
    pub fn new(config: ArrayConfig, options: SimOptions) -> Self {
        SacArray {
            config,
            options,
            cells: vec![SacCell::idle(); config.rows * config.cols],
            bias: Vec::new(),
            group_size: 1,
            tile_rows: 0,
            tile_cols: 0,
            counters: Counters::default(),
            last_matmul: (0, 0),
        }
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// `(active, total)` cell-cycles of the most recent matmul.
    pub fn zero_skip_account(&self) -> (u64, u64) {
        self.last_matmul
    }

    /// Loads a packed tile, one row per cycle. Cells outside the tile are
    /// disabled; a zero-weight cell inside it is disabled too.
    pub fn load_weights(&mut self, tile: &PackedLayer) -> Result<()> {
        if tile.rows > self.config.rows || tile.cols > self.config.cols {
            return Err(Error::PayloadMismatch(format!(
                "tile {}x{} exceeds the {} array",
                tile.rows, tile.cols, self.config
            )));
        }
        if tile.group_size > ArrayConfig::MAX_GROUP {
            return Err(Error::PayloadMismatch(format!(
                "group size {} exceeds the register chain",
                tile.group_size
            )));
        }
        for cell in &mut self.cells {
            *cell = SacCell::idle();
        }
        for r in 0..tile.rows {
            for c in 0..tile.cols {
                let code = tile.cell(r, c);
                let (index, weight) = decode_cell(code)?;
                self.cells[r * self.config.cols + c] = SacCell {
                    code,
                    index,
                    weight,
                    enabled: !weight.is_zero(),
                    carry: false,
                };
            }
        }
        self.bias = tile.bias_fx.clone();
        self.group_size = tile.group_size;
        self.tile_rows = tile.rows;
        self.tile_cols = tile.cols;
        self.counters.cycles += tile.rows as u64;
        Ok(())
    }

    /// The loaded tile's cell codes, row-major — readback for verification.
    pub fn cell_codes(&self) -> Vec<Vec<CellCode>> {
        (0..self.tile_rows)
            .map(|r| {
                (0..self.tile_cols)
                    .map(|c| self.cells[r * self.config.cols + c].code)
                    .collect()
            })
            .collect()
    }

    /// Runs the loaded tile over `vectors`, each a slice of
    /// `tile_cols * group_size` channel values. `base` (same shape as the
    /// result) seeds the partial sums when accumulating a horizontal tile;
    /// otherwise rows start from the bias unit.
    ///
    /// Returns the `tile_rows x vectors.len()` accumulator matrix. Overflow
    /// of any 32-bit word is an error, never a silent wrap.
    pub fn run_matmul(
        &mut self,
        vectors: &[&[u8]],
        base: Option<&[Vec<AccumWord>]>,
    ) -> Result<Vec<Vec<AccumWord>>> {
        let span = self.tile_cols * self.group_size;
        for (n, v) in vectors.iter().enumerate() {
            if v.len() != span {
                return Err(Error::PayloadMismatch(format!(
                    "input vector {n} has {} channels, tile selects from {span}",
                    v.len()
                )));
            }
        }
        if let Some(base) = base {
            if base.len() != self.tile_rows || base.iter().any(|r| r.len() != vectors.len()) {
                return Err(Error::PayloadMismatch(
                    "partial-sum base does not match the tile".into(),
                ));
            }
        }

        let mut out = vec![vec![0 as AccumWord; vectors.len()]; self.tile_rows];
        let mut active = 0u64;
        for (n, vector) in vectors.iter().enumerate() {
            for r in 0..self.tile_rows {
                let mut acc = match base {
                    Some(base) => base[r][n],
                    None => self.bias[r],
                };
                for c in 0..self.tile_cols {
                    let chain =
                        RegisterChain::new(&vector[c * self.group_size..(c + 1) * self.group_size]);
                    let cell = &mut self.cells[r * self.config.cols + c];
                    let selected = chain.word(cell.index);
                    let toggles = cell.enabled && selected != 0;
                    if toggles || !self.options.zero_skip {
                        active += 1;
                    }
                    if !toggles {
                        continue;
                    }
                    let (negative, exponent) = match cell.weight {
                        PowTwoWeight::Pow { negative, exponent } => (negative, exponent as i32),
                        PowTwoWeight::Zero => unreachable!("disabled above"),
                    };
                    let k = (exponent + 6) as usize;
                    let addend = (selected as i64) << k;
                    let addend = if negative { -addend } else { addend };
                    let exact = acc as i64 + addend;
                    if exact < i32::MIN as i64 || exact > i32::MAX as i64 {
                        return Err(Error::AccumOverflow { row: r, vector: n });
                    }
                    acc = match self.options.fidelity {
                        Fidelity::Word => exact as AccumWord,
                        Fidelity::BitSerial => {
                            let word = bitserial::serial_accumulate(
                                &chain,
                                cell.index,
                                k,
                                negative,
                                acc as u32,
                                &mut cell.carry,
                            );
                            word as AccumWord
                        }
                    };
                    debug_assert_eq!(acc as i64, exact, "serial adder diverged");
                }
                out[r][n] = acc;
            }
        }

        let total = (self.tile_rows * self.tile_cols * vectors.len()) as u64;
        self.counters.cell_cycles_total += total;
        self.counters.cell_cycles_active += active;
        self.last_matmul = (active, total);
        self.counters.cycles +=
            (vectors.len() + self.tile_rows + self.tile_cols + WORD_BITS - 2) as u64;
        Ok(out)
    }
}

/// ReLU plus requantization back to the 8-bit activation grid: negatives
/// clamp to zero, positives drop the six fractional accumulator bits
/// (truncation toward -infinity) and saturate at 255.
pub fn relu_quantize(acc: AccumWord) -> u8 {
    if acc < 0 {
        0
    } else {
        (acc >> 6).min(255) as u8
    }
}

/// The output accumulator used instead of ReLU after the fully connected
/// layer: sums each class row across all spatial positions. The hardware's
/// average pool would divide by the position count; we keep the plain sum
/// (the argmax is unchanged), so logits are `positions` times the pooled
/// values.
pub fn output_accumulate(acc: &[Vec<AccumWord>]) -> Result<Vec<AccumWord>> {
    acc.iter()
        .enumerate()
        .map(|(row, positions)| {
            let mut sum: AccumWord = 0;
            for (n, &v) in positions.iter().enumerate() {
                sum = sum
                    .checked_add(v)
                    .ok_or(Error::AccumOverflow { row, vector: n })?;
            }
            Ok(sum)
        })
        .collect()
}

/// The simulator's result: class scores plus the cost accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// Accumulator-unit class scores (position count times the pooled value;
    /// see `logit_scale`).
    pub logits: Vec<AccumWord>,
    pub cycles: u64,
    pub cell_cycles_total: u64,
    pub cell_cycles_active: u64,
    /// `cell_cycles_active / cell_cycles_total`: the switching-activity share
    /// a zero-skipping array actually pays.
    pub energy_proxy: f64,
    pub latency_ms: f64,
    /// Spatial positions summed by the output accumulator; divide logits by
    /// this to get pooled values.
    pub logit_scale: usize,
}

impl SimReport {
    pub fn argmax(&self) -> usize {
        self.logits
            .iter()
            .enumerate()
            .max_by_key(|(i, &v)| (v, std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Builds the data matrix a layer streams: one vector per surviving spatial
/// position (stride subsampling), each covering the padded channel span.
fn stage_vectors(t: &QuantTensor, padded_channels: usize, stride: usize) -> Vec<Vec<u8>> {
    let mut vectors = Vec::new();
    for y in (0..t.height).step_by(stride) {
        for x in (0..t.width).step_by(stride) {
            let mut v = vec![0u8; padded_channels];
            for (ch, slot) in v.iter_mut().enumerate().take(t.channels) {
                *slot = t.get(ch, y, x);
            }
            vectors.push(v);
        }
    }
    vectors
}

/// Executes a compiled program on one input image.
pub fn execute(program: &Program, image: &QuantTensor, options: &SimOptions) -> Result<SimReport> {
    if image.shape() != program.input_shape {
        return Err(Error::invalid(format!(
            "input is {:?}, the program expects {:?}",
            image.shape(),
            program.input_shape
        )));
    }
    let mut tensor = reshape_input(image, program.reshape_factor)?;
    tensor.lsb_exp = program.lsb_exp;

    let mut array = SacArray::new(program.array, *options);
    let mut logits = None;
    let mut logit_scale = 1;

    for (li, layer) in program.layers.iter().enumerate() {
        if tensor.channels != layer.channels || (tensor.height, tensor.width) != layer.in_dims {
            return Err(Error::invalid(format!(
                "layer {li} expects {}x{}x{}, got {}x{}x{}",
                layer.channels,
                layer.in_dims.0,
                layer.in_dims.1,
                tensor.channels,
                tensor.height,
                tensor.width
            )));
        }
        let staged = match &layer.shift_dirs {
            Some(dirs) => channel_shift(&tensor, dirs)?,
            None => tensor.clone(),
        };
        let vectors = stage_vectors(&staged, layer.padded_channels, layer.stride);
        let (out_h, out_w) = layer.data_dims;
        debug_assert_eq!(vectors.len(), out_h * out_w);

        let acc = run_layer_tiles(&mut array, layer, &vectors)?;

        match layer.kind {
            LayerKind::Conv => {
                let mut next = QuantTensor::zeros(layer.filters, out_h, out_w);
                next.lsb_exp = tensor.lsb_exp;
                for (f, words) in acc.iter().enumerate().take(layer.filters) {
                    for (n, &word) in words.iter().enumerate() {
                        next.set(f, n / out_w, n % out_w, relu_quantize(word));
                    }
                }
                tensor = next;
            }
            LayerKind::Fc => {
                logits = Some(output_accumulate(&acc)?);
                logit_scale = vectors.len();
            }
        }
    }

    let counters = array.counters();
    let energy_proxy = if counters.cell_cycles_total == 0 {
        0.0
    } else {
        counters.cell_cycles_active as f64 / counters.cell_cycles_total as f64
    };
    Ok(SimReport {
        logits: logits.ok_or_else(|| Error::invalid("program has no fully connected layer"))?,
        cycles: counters.cycles,
        cell_cycles_total: counters.cell_cycles_total,
        cell_cycles_active: counters.cell_cycles_active,
        energy_proxy,
        latency_ms: counters.cycles as f64 / (program.clock_mhz * 1e3),
        logit_scale,
    })
}

/// Runs every tile of one layer, assembling the full `filters x positions`
/// accumulator matrix (vertical tiles concatenate, horizontal tiles
/// accumulate).
fn run_layer_tiles(
    array: &mut SacArray,
    layer: &LayerProgram,
    vectors: &[Vec<u8>],
) -> Result<Vec<Vec<AccumWord>>> {
    let mut acc = vec![Vec::new(); layer.filters];
    for pair in layer.instructions.chunks(2) {
        let load = &pair[0];
        let InstrKind::LoadWeights { ref payload, .. } = load.kind else {
            return Err(Error::invalid("instruction stream out of order"));
        };
        let tile = PackedLayer::from_bytes(payload)?;
        array.load_weights(&tile)?;

        let g = layer.group_size;
        let span = load.col_tile.start * g..load.col_tile.end * g;
        let tile_vectors: Vec<&[u8]> = vectors.iter().map(|v| &v[span.clone()]).collect();
        let base: Option<Vec<Vec<AccumWord>>> = load
            .accumulate
            .then(|| load.row_tile.clone().map(|r| acc[r].clone()).collect());

        let rows = array
            .run_matmul(&tile_vectors, base.as_deref())
            .map_err(|e| match e {
                Error::AccumOverflow { row, vector } => Error::AccumOverflow {
                    row: load.row_tile.start + row,
                    vector,
                },
                other => other,
            })?;
        for (local, row) in rows.into_iter().enumerate() {
            acc[load.row_tile.start + local] = row;
        }
    }
    Ok(acc)
}

/// Compiles and runs a manifest in one step.
pub fn run_model(
    manifest: &ModelManifest,
    image: &QuantTensor,
    array: ArrayConfig,
    options: &SimOptions,
) -> Result<SimReport> {
    execute(&compile(manifest, array)?, image, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BnState, FoldedAffine, LayerSpec, WeightMatrix};
    use crate::packer::combine_columns;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn array(rows: usize, cols: usize, fidelity: Fidelity) -> SacArray {
        SacArray::new(
            ArrayConfig::new(rows, cols).unwrap(),
            SimOptions {
                fidelity,
                zero_skip: true,
            },
        )
    }

    fn packed_layer(
        rng: &mut ChaCha8Rng,
        f: usize,
        c: usize,
        g: usize,
        density: f64,
        bias: std::ops::Range<i32>,
    ) -> PackedLayer {
        let mut w = WeightMatrix::zeros(f, c);
        for r in 0..f {
            for ch in 0..c {
                if rng.gen_bool(density) {
                    w.set(
                        r,
                        ch,
                        PowTwoWeight::new(rng.gen(), rng.gen_range(-6..=0)).unwrap(),
                    );
                }
            }
        }
        let bias_fx = rng.gen_range(bias);
        let bn = Some(BnState::Quantized(FoldedAffine {
            scale_exp: 0,
            bias_fx,
        }));
        let layer = LayerSpec::new(f, c, 1, g, w, bn, None).unwrap();
        combine_columns(&layer)
    }

    #[test]
    fn readback_reproduces_the_loaded_tile() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let tile = packed_layer(&mut rng, 5, 12, 4, 0.6, -5..5);
        let mut sac = array(8, 8, Fidelity::Word);
        sac.load_weights(&tile).unwrap();
        let codes = sac.cell_codes();
        for (r, row) in codes.iter().enumerate().take(tile.rows) {
            for (c, &code) in row.iter().enumerate().take(tile.cols) {
                assert_eq!(code, tile.cell(r, c));
            }
        }
        assert_eq!(sac.counters().cycles, 5, "one cycle per loaded row");
    }

    #[test]
    fn oversized_tiles_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let tile = packed_layer(&mut rng, 9, 8, 1, 0.5, 0..1);
        let mut sac = array(8, 8, Fidelity::Word);
        assert!(matches!(
            sac.load_weights(&tile),
            Err(Error::PayloadMismatch(_))
        ));
    }

    #[test]
    fn all_zero_input_yields_the_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let tile = packed_layer(&mut rng, 6, 8, 2, 0.8, -100..100);
        for fidelity in [Fidelity::Word, Fidelity::BitSerial] {
            let mut sac = array(8, 8, fidelity);
            sac.load_weights(&tile).unwrap();
            let zeros = vec![0u8; 8];
            let out = sac.run_matmul(&[&zeros, &zeros], None).unwrap();
            for (r, row) in out.iter().enumerate() {
                assert_eq!(row, &vec![tile.bias_fx[r]; 2]);
            }
        }
    }

    #[test]
    fn single_cell_identity() {
        // One cell holding +2^0 adds input << 6 to the bias.
        let mut w = WeightMatrix::zeros(1, 1);
        w.set(0, 0, PowTwoWeight::pos(0));
        let layer = LayerSpec::new(1, 1, 1, 1, w, None, None).unwrap();
        let tile = combine_columns(&layer);
        let mut sac = array(1, 1, Fidelity::BitSerial);
        sac.load_weights(&tile).unwrap();
        let v = [7u8];
        let out = sac.run_matmul(&[&v], None).unwrap();
        assert_eq!(out, vec![vec![7 << 6]]);
    }

    /// Reference for a single tile: plain nested loops.
    fn naive_matmul(
        tile: &PackedLayer,
        vectors: &[&[u8]],
        base: Option<&[Vec<i32>]>,
    ) -> Vec<Vec<i64>> {
        let g = tile.group_size;
        (0..tile.rows)
            .map(|r| {
                vectors
                    .iter()
                    .enumerate()
                    .map(|(n, v)| {
                        let mut acc = base.map_or(tile.bias_fx[r] as i64, |b| b[r][n] as i64);
                        for c in 0..tile.cols {
                            let (index, w) = tile.weight_at(r, c);
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

    #[test]
    fn both_fidelities_match_the_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        for trial in 0..300 {
            let g = [1usize, 2, 4, 8][rng.gen_range(0..4)];
            let f = rng.gen_range(1..=8);
            let c = rng.gen_range(1..=16usize).next_multiple_of(g);
            let tile = packed_layer(&mut rng, f, c, g, 0.7, -1000..1000);
            let n = rng.gen_range(1..=6);
            let data: Vec<Vec<u8>> = (0..n)
                .map(|_| {
                    (0..c)
                        .map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen() })
                        .collect()
                })
                .collect();
            let views: Vec<&[u8]> = data.iter().map(|v| v.as_slice()).collect();
            let expect = naive_matmul(&tile, &views, None);

            for fidelity in [Fidelity::Word, Fidelity::BitSerial] {
                let mut sac = array(8, 16, fidelity);
                sac.load_weights(&tile).unwrap();
                let out = sac.run_matmul(&views, None).unwrap();
                for r in 0..f {
                    for v in 0..n {
                        assert_eq!(
                            out[r][v] as i64, expect[r][v],
                            "trial {trial} {fidelity:?} row {r} vector {v}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn accumulating_base_continues_partial_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let tile = packed_layer(&mut rng, 4, 8, 2, 0.9, -10..10);
        let data: Vec<Vec<u8>> = (0..3)
            .map(|_| (0..8).map(|_| rng.gen()).collect())
            .collect();
        let views: Vec<&[u8]> = data.iter().map(|v| v.as_slice()).collect();
        let base: Vec<Vec<i32>> = (0..4)
            .map(|_| (0..3).map(|_| rng.gen_range(-500..500)).collect())
            .collect();
        let mut sac = array(4, 4, Fidelity::BitSerial);
        sac.load_weights(&tile).unwrap();
        let out = sac.run_matmul(&views, Some(&base)).unwrap();
        let expect = naive_matmul(&tile, &views, Some(&base));
        for r in 0..4 {
            for n in 0..3 {
                assert_eq!(out[r][n] as i64, expect[r][n]);
            }
        }
    }

    #[test]
    fn overflow_is_reported_not_wrapped() {
        let mut w = WeightMatrix::zeros(1, 1);
        w.set(0, 0, PowTwoWeight::pos(0));
        let bn = Some(BnState::Quantized(FoldedAffine {
            scale_exp: 0,
            bias_fx: i32::MAX - 5,
        }));
        let layer = LayerSpec::new(1, 1, 1, 1, w, bn, None).unwrap();
        let tile = combine_columns(&layer);
        for fidelity in [Fidelity::Word, Fidelity::BitSerial] {
            let mut sac = array(1, 1, fidelity);
            sac.load_weights(&tile).unwrap();
            let v = [1u8];
            let err = sac.run_matmul(&[&v], None).unwrap_err();
            assert!(
                matches!(err, Error::AccumOverflow { row: 0, vector: 0 }),
                "{fidelity:?}: {err}"
            );
        }
    }

    #[test]
    fn zero_skip_counts_only_toggling_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(76);
        for _ in 0..50 {
            let g = [1usize, 2][rng.gen_range(0..2)];
            let f = rng.gen_range(1..=6);
            let c = rng.gen_range(1..=8usize).next_multiple_of(g);
            let tile = packed_layer(&mut rng, f, c, g, 0.5, 0..1);
            let n = rng.gen_range(1..=5);
            let data: Vec<Vec<u8>> = (0..n)
                .map(|_| {
                    (0..c)
                        .map(|_| {
                            if rng.gen_bool(0.5) {
                                0
                            } else {
                                rng.gen_range(1..=255)
                            }
                        })
                        .collect()
                })
                .collect();
            let views: Vec<&[u8]> = data.iter().map(|v| v.as_slice()).collect();

            let mut sac = array(8, 8, Fidelity::Word);
            sac.load_weights(&tile).unwrap();
            let skipped = sac.run_matmul(&views, None).unwrap();
            let (active, total) = sac.zero_skip_account();

            // Brute-force recount straight from the definition.
            let mut expect_active = 0;
            for r in 0..tile.rows {
                for col in 0..tile.cols {
                    let (index, w) = tile.weight_at(r, col);
                    if w.is_zero() {
                        continue;
                    }
                    expect_active +=
                        views.iter().filter(|v| v[col * g + index] != 0).count() as u64;
                }
            }
            assert_eq!(active, expect_active);
            assert_eq!(total, (tile.rows * tile.cols * n) as u64);

            // Disabling zero-skipping never changes values, only the counter.
            let mut unskipped = SacArray::new(
                ArrayConfig::new(8, 8).unwrap(),
                SimOptions {
                    fidelity: Fidelity::Word,
                    zero_skip: false,
                },
            );
            unskipped.load_weights(&tile).unwrap();
            let plain = unskipped.run_matmul(&views, None).unwrap();
            assert_eq!(plain, skipped);
            assert_eq!(unskipped.zero_skip_account(), (total, total));
        }
    }

    #[test]
    fn matmul_cycle_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let tile = packed_layer(&mut rng, 3, 10, 2, 0.5, 0..1);
        let mut sac = array(4, 8, Fidelity::Word);
        sac.load_weights(&tile).unwrap();
        let data = vec![vec![0u8; 10]; 7];
        let views: Vec<&[u8]> = data.iter().map(|v| v.as_slice()).collect();
        sac.run_matmul(&views, None).unwrap();
        // load: 3 rows; matmul: 7 vectors + 3 + 5 + 8 - 2 = 21.
        assert_eq!(sac.counters().cycles, 3 + 21);
    }

    #[test]
    fn relu_quantize_clamps_shifts_and_saturates() {
        assert_eq!(relu_quantize(-5), 0);
        assert_eq!(relu_quantize(-1), 0);
        assert_eq!(relu_quantize(0), 0);
        assert_eq!(relu_quantize(64 * 7), 7);
        assert_eq!(
            relu_quantize(64 * 7 + 63),
            7,
            "fraction truncates toward -inf"
        );
        assert_eq!(relu_quantize(64 * 300), 255, "saturates at the top of u8");
        assert_eq!(relu_quantize(i32::MAX), 255);

        // Monotone: never decreasing over the whole interesting range.
        let mut prev = relu_quantize(-70000);
        for acc in (-70000..70000).step_by(7) {
            let cur = relu_quantize(acc);
            assert!(cur >= prev, "relu_quantize must be monotone at {acc}");
            prev = cur;
        }
    }

    #[test]
    fn output_accumulator_sums_positions() {
        let acc = vec![vec![5, -3, 10], vec![0, 0, 0], vec![-1, -2, -3]];
        assert_eq!(output_accumulate(&acc).unwrap(), vec![12, 0, -6]);

        let r = 4;
        let acc = vec![vec![7; r]];
        assert_eq!(output_accumulate(&acc).unwrap(), vec![7 * r as i32]);

        let overflow = vec![vec![i32::MAX, 1]];
        assert!(matches!(
            output_accumulate(&overflow),
            Err(Error::AccumOverflow { row: 0, vector: 1 })
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let report = SimReport {
            logits: vec![3, 9, 9, 1],
            cycles: 0,
            cell_cycles_total: 0,
            cell_cycles_active: 0,
            energy_proxy: 0.0,
            latency_ms: 0.0,
            logit_scale: 1,
        };
        assert_eq!(report.argmax(), 1);
    }
}
