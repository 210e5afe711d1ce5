//! Compiled programs: the bridge between a manifest and the simulator, and
//! the on-disk instruction-stream format.
//!
//! Stream file layout (all integers little-endian):
//!
//! ```text
//! magic "SACP"  version u8  reserved [0;3]
//! array_rows u16  array_cols u16
//! reshape_factor u8  lsb_exp i8  layer_count u16
//! clock_mhz f64
//! input_channels u32  input_height u32  input_width u32
//! then per layer:
//!   kind u8 (0 conv, 1 fc)  has_shift u8  stride u8  group_size u8
//!   filters u32  channels u32  padded_channels u32
//!   in_h u32  in_w u32  data_h u32  data_w u32
//!   tiles_v u16  tiles_h u16
//!   [shift_dirs: channels x (dy i8, dx i8)]        when has_shift
//!   then per tile (vertical outer, horizontal inner):
//!     load-weights word u64
//!     payload: the tile in packed-layer binary form
//!     matmul word u64
//! ```
//!
//! The per-tile section is exactly the instruction stream: a load-weights
//! word immediately followed by its cell payload and the matching matmul
//! word. Everything before it exists so a stream plus an input tensor is
//! sufficient to reproduce a full inference.

use crate::error::{Error, Result};
use crate::model::{ModelManifest, ShiftDir};
use crate::packer::{combine_columns, PackedLayer};
use crate::scheduler::{
    decode_instruction, emit_instructions, encode_instruction, plan_tiles, ArrayConfig, InstrKind,
    Instruction, TilePlan,
};

const MAGIC: &[u8; 4] = b"SACP";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Fc,
}

/// One layer of a compiled program.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProgram {
    pub kind: LayerKind,
    pub stride: usize,
    pub group_size: usize,
    pub filters: usize,
    /// Logical input channels (tensor channels feeding this layer).
    pub channels: usize,
    /// Channels after zero-padding to a group multiple.
    pub padded_channels: usize,
    /// Spatial dims of the incoming tensor.
    pub in_dims: (usize, usize),
    /// Spatial dims of the data streamed through the array (after shift and
    /// stride subsampling); also the layer's output dims.
    pub data_dims: (usize, usize),
    pub shift_dirs: Option<Vec<ShiftDir>>,
    pub plan: TilePlan,
    /// Load/matmul pairs, vertical tiles outer, horizontal inner.
    pub instructions: Vec<Instruction>,
}

impl LayerProgram {
    pub fn packed_cols(&self) -> usize {
        self.padded_channels / self.group_size
    }
}

/// A compiled model: everything the simulator needs besides the input image.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub array: ArrayConfig,
    pub clock_mhz: f64,
    pub reshape_factor: usize,
    pub lsb_exp: i32,
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerProgram>,
}

impl Program {
    pub fn total_instructions(&self) -> usize {
        self.layers.iter().map(|l| l.instructions.len()).sum()
    }

    /// All instruction words in stream order.
    pub fn instruction_words(&self) -> Result<Vec<u64>> {
        self.layers
            .iter()
            .flat_map(|l| l.instructions.iter())
            .map(encode_instruction)
            .collect()
    }
}

/// Compiles a manifest for a given array: quantizes and folds batch norm,
/// packs every layer, plans tiles and emits the instruction stream.
pub fn compile(manifest: &ModelManifest, array: ArrayConfig) -> Result<Program> {
    if manifest
        .layers
        .iter()
        .chain(std::iter::once(&manifest.fc))
        .any(|l| l.group_size > ArrayConfig::MAX_GROUP)
    {
        return Err(Error::invalid(
            "column group exceeds the register-chain depth",
        ));
    }
    let folded = manifest.folded()?;
    let (conv_dims, final_dims) = folded.spatial_dims();

    let mut packed = Vec::new();
    let mut plans = Vec::new();
    let mut dims = Vec::new();
    for (layer, &(h, w)) in folded.layers.iter().zip(&conv_dims) {
        let p = combine_columns(layer);
        plans.push(plan_tiles(&p, &array));
        packed.push(p);
        dims.push((h.div_ceil(layer.stride), w.div_ceil(layer.stride)));
    }
    let p = combine_columns(&folded.fc);
    plans.push(plan_tiles(&p, &array));
    packed.push(p);
    dims.push(final_dims);

    let mut instructions = emit_instructions(&packed, &plans, &dims)?;
    // Fail compilation, not simulation, if any word cannot be encoded.
    for instr in &instructions {
        encode_instruction(instr)?;
    }

    let mut layers = Vec::new();
    let n_conv = folded.layers.len();
    for i in (0..=n_conv).rev() {
        let split = instructions
            .iter()
            .position(|ins| ins.layer == i)
            .unwrap_or(instructions.len());
        let layer_instrs = instructions.split_off(split);
        let (kind, spec, in_dims, data_dims) = if i == n_conv {
            (LayerKind::Fc, &folded.fc, final_dims, final_dims)
        } else {
            (LayerKind::Conv, &folded.layers[i], conv_dims[i], dims[i])
        };
        layers.push(LayerProgram {
            kind,
            stride: spec.stride,
            group_size: spec.group_size,
            filters: spec.filters,
            channels: spec.channels,
            padded_channels: spec.padded_channels(),
            in_dims,
            data_dims,
            shift_dirs: spec.shift_dirs.clone(),
            plan: plans[i].clone(),
            instructions: layer_instrs,
        });
    }
    layers.reverse();

    Ok(Program {
        array,
        clock_mhz: folded.clock_mhz,
        reshape_factor: folded.reshape_factor,
        lsb_exp: folded.lsb_exp,
        input_shape: folded.input_shape,
        layers,
    })
}

// ---------------------------------------------------------------------------
// Binary serialization.

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: usize) -> Result<()> {
        let v = u16::try_from(v).map_err(|_| Error::invalid(format!("{v} exceeds u16")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} exceeds u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse("stream file truncated"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<usize> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Program {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u8(VERSION);
        w.0.extend_from_slice(&[0, 0, 0]);
        w.u16(self.array.rows)?;
        w.u16(self.array.cols)?;
        w.u8(self.reshape_factor as u8);
        let lsb = i8::try_from(self.lsb_exp)
            .map_err(|_| Error::invalid(format!("lsb_exp {} exceeds i8", self.lsb_exp)))?;
        w.u8(lsb as u8);
        w.u16(self.layers.len())?;
        w.0.extend_from_slice(&self.clock_mhz.to_le_bytes());
        w.u32(self.input_shape.0)?;
        w.u32(self.input_shape.1)?;
        w.u32(self.input_shape.2)?;

        for layer in &self.layers {
            w.u8(match layer.kind {
                LayerKind::Conv => 0,
                LayerKind::Fc => 1,
            });
            w.u8(layer.shift_dirs.is_some() as u8);
            w.u8(layer.stride as u8);
            w.u8(layer.group_size as u8);
            w.u32(layer.filters)?;
            w.u32(layer.channels)?;
            w.u32(layer.padded_channels)?;
            w.u32(layer.in_dims.0)?;
            w.u32(layer.in_dims.1)?;
            w.u32(layer.data_dims.0)?;
            w.u32(layer.data_dims.1)?;
            w.u16(layer.plan.row_tiles.len())?;
            w.u16(layer.plan.col_tiles.len())?;
            if let Some(dirs) = &layer.shift_dirs {
                for d in dirs {
                    w.u8(d.dy as u8);
                    w.u8(d.dx as u8);
                }
            }
            for pair in layer.instructions.chunks(2) {
                let load = &pair[0];
                let matmul = &pair[1];
                w.u64(encode_instruction(load)?);
                match &load.kind {
                    InstrKind::LoadWeights { payload, .. } => w.0.extend_from_slice(payload),
                    _ => return Err(Error::invalid("instruction pair out of order")),
                }
                w.u64(encode_instruction(matmul)?);
            }
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Program> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::parse("not a stream file (bad magic)"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::parse(format!(
                "unsupported stream version {version}"
            )));
        }
        r.take(3)?;
        let array = ArrayConfig::new(r.u16()?, r.u16()?)?;
        let reshape_factor = r.u8()? as usize;
        let lsb_exp = r.u8()? as i8 as i32;
        let layer_count = r.u16()?;
        let clock_mhz = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if !(clock_mhz.is_finite() && clock_mhz > 0.0) {
            return Err(Error::parse(format!(
                "stream clock {clock_mhz} MHz is invalid"
            )));
        }
        let input_shape = (r.u32()?, r.u32()?, r.u32()?);

        let mut layers = Vec::with_capacity(layer_count);
        for li in 0..layer_count {
            let kind = match r.u8()? {
                0 => LayerKind::Conv,
                1 => LayerKind::Fc,
                k => return Err(Error::parse(format!("unknown layer kind {k}"))),
            };
            let has_shift = r.u8()? != 0;
            let stride = r.u8()? as usize;
            let group_size = r.u8()? as usize;
            let filters = r.u32()?;
            let channels = r.u32()?;
            let padded_channels = r.u32()?;
            let in_dims = (r.u32()?, r.u32()?);
            let data_dims = (r.u32()?, r.u32()?);
            let tiles_v = r.u16()?;
            let tiles_h = r.u16()?;
            if !matches!(group_size, 1 | 2 | 4 | 8) || padded_channels % group_size != 0 {
                return Err(Error::parse(format!("layer {li}: invalid group geometry")));
            }
            let shift_dirs = if has_shift {
                let mut dirs = Vec::with_capacity(channels);
                for _ in 0..channels {
                    let dy = r.u8()? as i8;
                    let dx = r.u8()? as i8;
                    dirs.push(
                        ShiftDir::new(dy, dx)
                            .map_err(|_| Error::parse(format!("layer {li}: bad shift dir")))?,
                    );
                }
                Some(dirs)
            } else {
                None
            };

            let packed_cols = padded_channels / group_size;
            let plan = TilePlan {
                row_tiles: super::split_into_tiles(filters, array.rows),
                col_tiles: super::split_into_tiles(packed_cols, array.cols),
            };
            if plan.row_tiles.len() != tiles_v || plan.col_tiles.len() != tiles_h {
                return Err(Error::parse(format!(
                    "layer {li}: tile counts {tiles_v}x{tiles_h} disagree with geometry"
                )));
            }

            let mut instructions = Vec::with_capacity(2 * plan.tile_count());
            for rows in &plan.row_tiles {
                for (h_idx, cols) in plan.col_tiles.iter().enumerate() {
                    let load_word = decode_instruction(r.u64()?)?;
                    if !load_word.load {
                        return Err(Error::parse(format!(
                            "layer {li}: expected a load-weights word"
                        )));
                    }
                    let (tr, tc) = (load_word.tile_rows as usize, load_word.tile_cols as usize);
                    if tr != rows.len() || tc != cols.len() {
                        return Err(Error::PayloadMismatch(format!(
                            "layer {li}: load word is {tr}x{tc}, tile is {}x{}",
                            rows.len(),
                            cols.len()
                        )));
                    }
                    let payload = r.take(8 + tr * tc + 4 * tr)?.to_vec();
                    let tile = PackedLayer::from_bytes(&payload)?;
                    if tile.group_size != group_size {
                        return Err(Error::PayloadMismatch(format!(
                            "layer {li}: payload group {} != layer group {group_size}",
                            tile.group_size
                        )));
                    }
                    let matmul_word = decode_instruction(r.u64()?)?;
                    if !matmul_word.matmul {
                        return Err(Error::parse(format!("layer {li}: expected a matmul word")));
                    }
                    let accumulate = h_idx > 0;
                    instructions.push(Instruction {
                        kind: InstrKind::LoadWeights {
                            tile_rows: tr,
                            tile_cols: tc,
                            payload,
                        },
                        layer: li,
                        row_tile: rows.clone(),
                        col_tile: cols.clone(),
                        accumulate,
                    });
                    instructions.push(Instruction {
                        kind: InstrKind::MatMul {
                            input_h: matmul_word.input_h as usize,
                            input_w: matmul_word.input_w as usize,
                        },
                        layer: li,
                        row_tile: rows.clone(),
                        col_tile: cols.clone(),
                        accumulate,
                    });
                }
            }
            layers.push(LayerProgram {
                kind,
                stride,
                group_size,
                filters,
                channels,
                padded_channels,
                in_dims,
                data_dims,
                shift_dirs,
                plan,
                instructions,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::parse("trailing bytes after the last instruction"));
        }
        Ok(Program {
            array,
            clock_mhz,
            reshape_factor,
            lsb_exp,
            input_shape,
            layers,
        })
    }
}
