//! Quantized activation tensors and the two input transforms: space-to-depth
//! reshaping and per-channel shifts.
//!
//! Tensor file format (used by the CLI): three little-endian `u32` dims
//! `(channels, height, width)` followed by `channels * height * width`
//! unsigned bytes in row-major `(channel, y, x)` order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// An unsigned 8-bit activation tensor on the `2^lsb_exp` fixed-point grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<u8>,
    /// Exponent of the value of one data LSB. Metadata only: the integer
    /// pipeline is identical for any grid.
    pub lsb_exp: i32,
}

impl QuantTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        QuantTensor {
            channels,
            height,
            width,
            values: vec![0; channels * height * width],
            lsb_exp: 0,
        }
    }

    pub fn from_values(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<u8>,
    ) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                values.len()
            )));
        }
        Ok(QuantTensor {
            channels,
            height,
            width,
            values,
            lsb_exp: 0,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn get(&self, ch: usize, y: usize, x: usize) -> u8 {
        self.values[(ch * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, y: usize, x: usize, v: u8) {
        self.values[(ch * self.height + y) * self.width + x] = v;
    }

    /// Serializes to the raw tensor file format.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        for dim in [self.channels, self.height, self.width] {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::invalid(format!("tensor dimension {dim} exceeds u32")))?;
            out.write_all(&dim.to_le_bytes())?;
        }
        out.write_all(&self.values)?;
        Ok(())
    }

    /// Parses the raw tensor file format.
    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut header = [0u8; 12];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::parse("tensor header truncated"))?;
        let dim = |i: usize| -> usize {
            u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().unwrap()) as usize
        };
        let (channels, height, width) = (dim(0), dim(1), dim(2));
        let mut values = vec![0u8; channels * height * width];
        input
            .read_exact(&mut values)
            .map_err(|_| Error::parse("tensor data shorter than its header claims"))?;
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::parse("trailing bytes after tensor data"));
        }
        Ok(QuantTensor {
            channels,
            height,
            width,
            values,
            lsb_exp: 0,
        })
    }
}

/// Space-to-depth reshaping: trades spatial resolution for channel depth so a
/// small array sees wider, shorter data matrices.
///
/// Each `r x r` spatial block becomes `r*r` channel planes: pixel
/// `(ch, y, x)` moves to channel `c*((y mod r)*r + (x mod r)) + ch` at
/// `(y div r, x div r)`, where `c` is the input channel count. A 3x224x224
/// image becomes 12x112x112 for `r = 2` and 48x56x56 for `r = 4`.
pub fn reshape_input(t: &QuantTensor, r: usize) -> Result<QuantTensor> {
    if !matches!(r, 1 | 2 | 4) {
        return Err(Error::invalid(format!(
            "reshape factor must be 1, 2 or 4, got {r}"
        )));
    }
    if !t.height.is_multiple_of(r) || !t.width.is_multiple_of(r) {
        return Err(Error::invalid(format!(
            "spatial dims {}x{} not divisible by reshape factor {r}",
            t.height, t.width
        )));
    }
    if r == 1 {
        return Ok(t.clone());
    }
    let mut out = QuantTensor::zeros(t.channels * r * r, t.height / r, t.width / r);
    out.lsb_exp = t.lsb_exp;
    for ch in 0..t.channels {
        for y in 0..t.height {
            for x in 0..t.width {
                let out_ch = t.channels * ((y % r) * r + (x % r)) + ch;
                out.set(out_ch, y / r, x / r, t.get(ch, y, x));
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`reshape_input`]: `original_channels` is the channel
/// count before reshaping.
pub fn reshape_inverse(t: &QuantTensor, r: usize, original_channels: usize) -> Result<QuantTensor> {
    if original_channels * r * r != t.channels {
        return Err(Error::invalid(format!(
            "{} channels is not {original_channels} x {r}^2",
            t.channels
        )));
    }
    let mut out = QuantTensor::zeros(original_channels, t.height * r, t.width * r);
    out.lsb_exp = t.lsb_exp;
    for ch in 0..t.channels {
        let block = ch / original_channels;
        let (dy, dx) = (block / r, block % r);
        for y in 0..t.height {
            for x in 0..t.width {
                out.set(
                    ch % original_channels,
                    y * r + dy,
                    x * r + dx,
                    t.get(ch, y, x),
                );
            }
        }
    }
    Ok(out)
}

/// Applies each channel's spatial shift; vacated border positions are zero.
///
/// A direction `(0, 1)` moves a channel one column to the right, so its left
/// column reads zero afterwards.
pub fn channel_shift(t: &QuantTensor, dirs: &[crate::model::ShiftDir]) -> Result<QuantTensor> {
    if dirs.len() != t.channels {
        return Err(Error::invalid(format!(
            "{} shift directions for {} channels",
            dirs.len(),
            t.channels
        )));
    }
    let mut out = QuantTensor::zeros(t.channels, t.height, t.width);
    out.lsb_exp = t.lsb_exp;
    for (ch, dir) in dirs.iter().enumerate() {
        for y in 0..t.height {
            let Some(src_y) = y.checked_add_signed(-(dir.dy as isize)) else {
                continue;
            };
            if src_y >= t.height {
                continue;
            }
            for x in 0..t.width {
                let Some(src_x) = x.checked_add_signed(-(dir.dx as isize)) else {
                    continue;
                };
                if src_x >= t.width {
                    continue;
                }
                out.set(ch, y, x, t.get(ch, src_y, src_x));
            }
        }
    }
    Ok(out)
}
