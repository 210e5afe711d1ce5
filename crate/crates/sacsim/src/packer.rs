//! Column combining and the 8-bit cell encoding.
//!
//! After pruning, a filter row keeps at most one non-zero weight inside each
//! aligned group of `g` input channels, so the `g` sparse columns of a group
//! collapse into a single dense column. Each packed cell is one byte:
//!
//! ```text
//!   bit 7 6 5   4      3 2 1 0
//!       index   sign   power
//! ```
//!
//! * `index` — which of the group's channels the weight came from (0-7);
//! * `sign`  — 1 for negative weights;
//! * `power` — 0 encodes the zero weight; otherwise `exponent + 7`, so
//!   `0001` is `2^-6` up through `0111` for `2^0`. Codes `1000`-`1111` are
//!   reserved and rejected on decode.
//!
//! The canonical zero cell is the all-zero byte. As a worked example, a
//! weight `-2^-1` sitting at group offset 1 encodes as index `001`, sign 1,
//! power `0110`: byte `0b001_10110 = 0x36`.
//!
//! Packed-layer binary format: an 8-byte header (`rows: u16 LE`,
//! `cols: u16 LE`, `group_size: u8`, three reserved zero bytes), the
//! `rows * cols` cell bytes in row-major order, then `rows` little-endian
//! `i32` bias words.

use crate::error::{Error, Result};
use crate::model::{LayerSpec, PowTwoWeight, WeightMatrix};

/// One packed cell: channel index, sign and power in a single byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellCode(pub u8);

/// Index (bits 7..5) of the canonical zero cell and its power code are zero.
pub const ZERO_CELL: CellCode = CellCode(0);

/// Offset between a weight exponent and its 4-bit power code.
const POWER_BIAS: i32 = 7;

/// Encodes a weight at a group offset. `index` must be below 8 (the widest
/// supported group); the zero weight always encodes as the all-zero byte.
pub fn encode_cell(index: usize, w: PowTwoWeight) -> Result<CellCode> {
    if index >= 8 {
        return Err(Error::invalid(format!("cell index {index} outside 0..8")));
    }
    match w {
        PowTwoWeight::Zero => Ok(ZERO_CELL),
        PowTwoWeight::Pow { negative, exponent } => {
            let power = (exponent as i32 + POWER_BIAS) as u8;
            debug_assert!((1..=7).contains(&power));
            Ok(CellCode(
                ((index as u8) << 5) | ((negative as u8) << 4) | power,
            ))
        }
    }
}

/// Decodes a cell byte back to its group offset and weight.
///
/// Rejects the reserved power codes `1000`-`1111` and any zero-power byte
/// that is not the canonical all-zero cell.
pub fn decode_cell(code: CellCode) -> Result<(usize, PowTwoWeight)> {
    let byte = code.0;
    let power = byte & 0x0f;
    if power > 7 {
        return Err(Error::MalformedCell {
            byte,
            reason: "reserved power code",
        });
    }
    if power == 0 {
        if byte != 0 {
            return Err(Error::MalformedCell {
                byte,
                reason: "non-canonical zero cell",
            });
        }
        return Ok((0, PowTwoWeight::Zero));
    }
    let negative = byte & 0x10 != 0;
    let index = (byte >> 5) as usize;
    Ok((
        index,
        PowTwoWeight::new(negative, power as i32 - POWER_BIAS)?,
    ))
}

/// A layer after column combining: `rows x cols` cells, each standing for a
/// group of `group_size` original channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedLayer {
    pub rows: usize,
    pub cols: usize,
    pub group_size: usize,
    /// Row-major cell bytes.
    pub cells: Vec<CellCode>,
    /// Per-row bias in accumulator steps, injected by the array's bias unit.
    pub bias_fx: Vec<i32>,
    /// Provenance of each kept weight: its original `(row, channel)`.
    pub origins: Vec<Option<(usize, usize)>>,
}

impl PackedLayer {
    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> CellCode {
        self.cells[row * self.cols + col]
    }

    /// Decoded view of one cell.
    pub fn weight_at(&self, row: usize, col: usize) -> (usize, PowTwoWeight) {
        decode_cell(self.cell(row, col)).expect("packed layers hold only valid cells")
    }

    pub fn count_nonzero(&self) -> usize {
        self.cells.iter().filter(|c| **c != ZERO_CELL).count()
    }

    /// Extracts a rectangular tile as its own packed layer. Origins are
    /// remapped to the tile's local coordinates, matching what
    /// [`PackedLayer::from_bytes`] reconstructs.
    pub fn tile(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> PackedLayer {
        assert!(rows.end <= self.rows && cols.end <= self.cols);
        let mut cells = Vec::with_capacity(rows.len() * cols.len());
        let mut origins = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            for c in cols.clone() {
                cells.push(self.cell(r, c));
                origins.push(
                    self.origins[r * self.cols + c]
                        .map(|(or, och)| (or - rows.start, och - cols.start * self.group_size)),
                );
            }
        }
        PackedLayer {
            rows: rows.len(),
            cols: cols.len(),
            group_size: self.group_size,
            cells,
            bias_fx: self.bias_fx[rows].to_vec(),
            origins,
        }
    }

    /// Serializes to the packed-layer binary format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let rows = u16::try_from(self.rows)
            .map_err(|_| Error::invalid(format!("{} rows exceed the packed format", self.rows)))?;
        let cols = u16::try_from(self.cols)
            .map_err(|_| Error::invalid(format!("{} cols exceed the packed format", self.cols)))?;
        let mut out = Vec::with_capacity(8 + self.cells.len() + 4 * self.bias_fx.len());
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        out.push(self.group_size as u8);
        out.extend_from_slice(&[0, 0, 0]);
        out.extend(self.cells.iter().map(|c| c.0));
        for bias in &self.bias_fx {
            out.extend_from_slice(&bias.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses the packed-layer binary format, validating every cell byte.
    pub fn from_bytes(bytes: &[u8]) -> Result<PackedLayer> {
        if bytes.len() < 8 {
            return Err(Error::parse("packed layer shorter than its 8-byte header"));
        }
        let rows = u16::from_le_bytes([bytes[0], bytes[1]]) as usize;
        let cols = u16::from_le_bytes([bytes[2], bytes[3]]) as usize;
        let group_size = bytes[4] as usize;
        if !matches!(group_size, 1 | 2 | 4 | 8) {
            return Err(Error::parse(format!(
                "packed layer group size {group_size} invalid"
            )));
        }
        if bytes[5..8] != [0, 0, 0] {
            return Err(Error::parse(
                "packed layer reserved header bytes must be zero",
            ));
        }
        let expect = 8 + rows * cols + 4 * rows;
        if bytes.len() != expect {
            return Err(Error::parse(format!(
                "packed layer is {} bytes, expected {expect} for {rows}x{cols}",
                bytes.len()
            )));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        let mut origins = Vec::with_capacity(rows * cols);
        for (i, &byte) in bytes[8..8 + rows * cols].iter().enumerate() {
            let code = CellCode(byte);
            let (index, w) = decode_cell(code)?;
            if index >= group_size && !w.is_zero() {
                return Err(Error::MalformedCell {
                    byte,
                    reason: "index outside group",
                });
            }
            let (r, c) = (i / cols, i % cols);
            origins.push((!w.is_zero()).then_some((r, c * group_size + index)));
            cells.push(code);
        }
        let bias_fx = bytes[8 + rows * cols..]
            .chunks_exact(4)
            .map(|b| i32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(PackedLayer {
            rows,
            cols,
            group_size,
            cells,
            bias_fx,
            origins,
        })
    }
}

/// Packs a layer by column combining: within each aligned group of
/// `group_size` channels, each row keeps only its largest-magnitude non-zero
/// weight (ties go to the lowest channel index); everything else is pruned.
///
/// The packed width is always `padded_channels / group_size`.
pub fn combine_columns(layer: &LayerSpec) -> PackedLayer {
    let g = layer.group_size;
    let cols = layer.packed_cols();
    let mut cells = Vec::with_capacity(layer.filters * cols);
    let mut origins = Vec::with_capacity(layer.filters * cols);
    for row in 0..layer.filters {
        for group in 0..cols {
            let mut kept: Option<(usize, PowTwoWeight)> = None;
            for ch in group * g..(group + 1) * g {
                let w = layer.weights.get(row, ch);
                if w.is_zero() {
                    continue;
                }
                let better = match kept {
                    None => true,
                    // Strictly larger magnitude wins; a tie keeps the earlier
                    // (lower) channel.
                    Some((_, best)) => w.exponent() > best.exponent(),
                };
                if better {
                    kept = Some((ch, w));
                }
            }
            match kept {
                Some((ch, w)) => {
                    cells.push(encode_cell(ch - group * g, w).expect("group offset < 8"));
                    origins.push(Some((row, ch)));
                }
                None => {
                    cells.push(ZERO_CELL);
                    origins.push(None);
                }
            }
        }
    }
    PackedLayer {
        rows: layer.filters,
        cols,
        group_size: g,
        cells,
        bias_fx: vec![layer.bias_fx(); layer.filters],
        origins,
    }
}

/// How many non-zero weights column combining would prune from this layer.
/// Zero for any layer that already satisfies the one-per-group rule.
pub fn dropped_weights(layer: &LayerSpec) -> usize {
    let g = layer.group_size;
    let mut dropped = 0;
    for row in 0..layer.filters {
        for group in 0..layer.packed_cols() {
            let nonzero = (group * g..(group + 1) * g)
                .filter(|&ch| !layer.weights.get(row, ch).is_zero())
                .count();
            dropped += nonzero.saturating_sub(1);
        }
    }
    dropped
}

/// Reconstructs the (pruned) weight matrix a packed layer stands for.
pub fn unpack_weights(packed: &PackedLayer) -> WeightMatrix {
    let mut w = WeightMatrix::zeros(packed.rows, packed.cols * packed.group_size);
    for row in 0..packed.rows {
        for col in 0..packed.cols {
            let (index, weight) = packed.weight_at(row, col);
            if !weight.is_zero() {
                w.set(row, col * packed.group_size + index, weight);
            }
        }
    }
    w
}
