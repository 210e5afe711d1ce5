//! Tiling of packed layers onto a fixed-size array and the instruction
//! stream that drives it.
//!
//! A packed layer rarely matches the array: extra filters become vertical
//! tiles (their outputs are concatenated), extra packed columns become
//! horizontal tiles (their outputs are partial sums, accumulated in place).
//! Every tile costs exactly two instructions — one load-weights, one matrix
//! multiply — so a model needs
//! `2 * sum(ceil(f / rows) * ceil(packed_cols / cols))` instruction words.
//!
//! Instruction words are 64-bit little-endian:
//!
//! ```text
//!   bit 0       load-weights flag
//!   bit 1       matmul flag          (exactly one of the two is set)
//!   bits 15..8  tile width  (array columns covered; load-weights only)
//!   bits 23..16 tile height (array rows covered;   load-weights only)
//!   bits 39..24 input width  (data columns;  matmul only)
//!   bits 55..40 input height (data rows;     matmul only)
//! ```
//!
//! All remaining bits are zero. In the stream file every load-weights word is
//! immediately followed by its tile's packed-cell payload, then by the
//! matching matmul word.

pub mod program;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::packer::PackedLayer;

pub use program::{compile, LayerKind, LayerProgram, Program};

/// Physical array geometry. Both dimensions must fit the 8-bit tile fields
/// of the instruction encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
}

impl ArrayConfig {
    /// Widest channel group a column's register chain can select from.
    pub const MAX_GROUP: usize = 8;

    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows > 255 || cols > 255 {
            return Err(Error::invalid(format!(
                "array must be between 1x1 and 255x255, got {rows}x{cols}"
            )));
        }
        Ok(ArrayConfig { rows, cols })
    }
}

impl std::str::FromStr for ArrayConfig {
    type Err = Error;

    /// Parses `"128x64"`.
    fn from_str(s: &str) -> Result<Self> {
        let (rows, cols) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::parse(format!("array geometry `{s}` is not ROWSxCOLS")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(format!("array geometry `{s}` is not ROWSxCOLS")))
        };
        ArrayConfig::new(parse(rows)?, parse(cols)?)
    }
}

impl std::fmt::Display for ArrayConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// How one packed layer maps onto the array: filter ranges (vertical tiles)
/// and packed-column ranges (horizontal tiles). All tiles are maximal except
/// possibly the last in each direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub row_tiles: Vec<Range<usize>>,
    pub col_tiles: Vec<Range<usize>>,
}

impl TilePlan {
    pub fn tile_count(&self) -> usize {
        self.row_tiles.len() * self.col_tiles.len()
    }
}

pub(crate) fn split_into_tiles(total: usize, max: usize) -> Vec<Range<usize>> {
    (0..total.div_ceil(max))
        .map(|i| i * max..total.min((i + 1) * max))
        .collect()
}

/// Plans the tiling of a packed layer onto the array.
pub fn plan_tiles(packed: &PackedLayer, array: &ArrayConfig) -> TilePlan {
    TilePlan {
        row_tiles: split_into_tiles(packed.rows, array.rows),
        col_tiles: split_into_tiles(packed.cols, array.cols),
    }
}

/// One instruction plus the scheduling context the binary word does not
/// carry: which layer and tile it belongs to, and whether the tile's outputs
/// accumulate into the previous horizontal tile's partial sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub kind: InstrKind,
    pub layer: usize,
    pub row_tile: Range<usize>,
    pub col_tile: Range<usize>,
    /// True on every horizontal tile after the first: its outputs are added
    /// to the partial sums already produced for the same filter rows.
    /// Vertical tiles instead concatenate their output rows.
    pub accumulate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstrKind {
    LoadWeights {
        tile_rows: usize,
        tile_cols: usize,
        /// The tile's cells and biases in the packed-layer binary format.
        payload: Vec<u8>,
    },
    MatMul {
        /// Spatial height of the data streamed through the tile (after any
        /// shift and stride subsampling).
        input_h: usize,
        /// Spatial width of the streamed data.
        input_w: usize,
    },
}

/// Emits the instruction stream for a set of packed layers.
///
/// `data_dims[i]` is the spatial shape of the data matrix streamed through
/// layer `i`. Per layer, vertical tiles are the outer loop and horizontal
/// tiles the inner one; each tile contributes a load-weights instruction
/// (payload attached) followed by its matmul.
pub fn emit_instructions(
    packed: &[PackedLayer],
    plans: &[TilePlan],
    data_dims: &[(usize, usize)],
) -> Result<Vec<Instruction>> {
    assert_eq!(packed.len(), plans.len());
    assert_eq!(packed.len(), data_dims.len());
    let mut out = Vec::new();
    for (layer, ((packed, plan), &(h, w))) in packed.iter().zip(plans).zip(data_dims).enumerate() {
        for rows in &plan.row_tiles {
            for (h_idx, cols) in plan.col_tiles.iter().enumerate() {
                let tile = packed.tile(rows.clone(), cols.clone());
                let accumulate = h_idx > 0;
                out.push(Instruction {
                    kind: InstrKind::LoadWeights {
                        tile_rows: tile.rows,
                        tile_cols: tile.cols,
                        payload: tile.to_bytes()?,
                    },
                    layer,
                    row_tile: rows.clone(),
                    col_tile: cols.clone(),
                    accumulate,
                });
                out.push(Instruction {
                    kind: InstrKind::MatMul {
                        input_h: h,
                        input_w: w,
                    },
                    layer,
                    row_tile: rows.clone(),
                    col_tile: cols.clone(),
                    accumulate,
                });
            }
        }
    }
    Ok(out)
}

/// The geometry fields of a decoded instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstrWord {
    pub load: bool,
    pub matmul: bool,
    pub tile_cols: u8,
    pub tile_rows: u8,
    pub input_w: u16,
    pub input_h: u16,
}

/// Encodes an instruction to its 64-bit word (payload not included).
pub fn encode_instruction(instr: &Instruction) -> Result<u64> {
    match instr.kind {
        InstrKind::LoadWeights {
            tile_rows,
            tile_cols,
            ..
        } => {
            let rows = u8::try_from(tile_rows).map_err(|_| {
                Error::FieldOverflow(format!("tile height {tile_rows} exceeds 8 bits"))
            })?;
            let cols = u8::try_from(tile_cols).map_err(|_| {
                Error::FieldOverflow(format!("tile width {tile_cols} exceeds 8 bits"))
            })?;
            Ok(1 | (cols as u64) << 8 | (rows as u64) << 16)
        }
        InstrKind::MatMul { input_h, input_w } => {
            let h = u16::try_from(input_h).map_err(|_| {
                Error::FieldOverflow(format!("input height {input_h} exceeds 16 bits"))
            })?;
            let w = u16::try_from(input_w).map_err(|_| {
                Error::FieldOverflow(format!("input width {input_w} exceeds 16 bits"))
            })?;
            Ok(2 | (w as u64) << 24 | (h as u64) << 40)
        }
    }
}

/// Decodes a 64-bit instruction word, checking that exactly one kind flag is
/// set and all reserved bits are zero.
pub fn decode_instruction(word: u64) -> Result<InstrWord> {
    let load = word & 1 != 0;
    let matmul = word & 2 != 0;
    if load == matmul {
        return Err(Error::parse(format!(
            "instruction word {word:#018x} must set exactly one kind flag"
        )));
    }
    const RESERVED: u64 = !0u64 << 56 | 0b1111_1100;
    if word & RESERVED != 0 {
        return Err(Error::parse(format!(
            "instruction word {word:#018x} has reserved bits set"
        )));
    }
    let decoded = InstrWord {
        load,
        matmul,
        tile_cols: (word >> 8) as u8,
        tile_rows: (word >> 16) as u8,
        input_w: (word >> 24) as u16,
        input_h: (word >> 40) as u16,
    };
    if load && (decoded.input_w != 0 || decoded.input_h != 0) {
        return Err(Error::parse("load-weights word carries input dims"));
    }
    if matmul && (decoded.tile_cols != 0 || decoded.tile_rows != 0) {
        return Err(Error::parse("matmul word carries tile dims"));
    }
    Ok(decoded)
}
