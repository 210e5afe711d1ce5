//! Layer descriptions: a 1x1 convolution (or the final fully connected
//! layer), its quantized weight matrix, batch-norm state, and the optional
//! per-channel shift directions that stand in for spatial kernels.

use crate::error::{Error, Result};
use crate::model::bn::{BnParams, FoldedAffine};
use crate::model::weight::PowTwoWeight;

/// Dense row-major matrix of quantized weights (filters x input channels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    w: Vec<PowTwoWeight>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        WeightMatrix {
            rows,
            cols,
            w: vec![PowTwoWeight::Zero; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> PowTwoWeight {
        assert!(row < self.rows && col < self.cols);
        self.w[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: PowTwoWeight) {
        assert!(row < self.rows && col < self.cols);
        self.w[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[PowTwoWeight] {
        &self.w[row * self.cols..(row + 1) * self.cols]
    }

    pub fn count_nonzero(&self) -> usize {
        self.w.iter().filter(|w| !w.is_zero()).count()
    }

    /// Returns a copy widened to `cols` columns, the new columns all zero.
    fn widened(&self, cols: usize) -> Self {
        assert!(cols >= self.cols);
        let mut out = WeightMatrix::zeros(self.rows, cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c));
            }
        }
        out
    }
}

/// Per-channel spatial shift, each component in `{-1, 0, 1}`.
///
/// `dy` moves content down (row index grows), `dx` moves it right; vacated
/// border positions read as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftDir {
    pub dy: i8,
    pub dx: i8,
}

impl ShiftDir {
    pub fn new(dy: i8, dx: i8) -> Result<Self> {
        if !(-1..=1).contains(&dy) || !(-1..=1).contains(&dx) {
            return Err(Error::invalid(format!(
                "shift direction ({dy}, {dx}) outside {{-1, 0, 1}}^2"
            )));
        }
        Ok(ShiftDir { dy, dx })
    }

    /// The nine directions in row-major order, assigned round-robin:
    /// channel `i` gets direction `i % 9`.
    pub fn round_robin(channels: usize) -> Vec<ShiftDir> {
        (0..channels)
            .map(|i| ShiftDir {
                dy: (i % 9) as i8 / 3 - 1,
                dx: (i % 9) as i8 % 3 - 1,
            })
            .collect()
    }
}

/// Batch-norm state carried by a convolution layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BnState {
    /// Raw statistics straight from the manifest.
    Raw(BnParams),
    /// Quantized (and possibly already folded, in which case `scale_exp` is 0).
    Quantized(FoldedAffine),
}

/// One layer of the model: `filters` outputs over `channels` inputs.
///
/// The weight matrix is padded on the right with zero columns so that the
/// column-combining group size always divides its width; `channels` stays
/// the logical count used for tensor chaining.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub filters: usize,
    pub channels: usize,
    pub stride: usize,
    pub group_size: usize,
    pub weights: WeightMatrix,
    pub bn: Option<BnState>,
    pub shift_dirs: Option<Vec<ShiftDir>>,
}

impl LayerSpec {
    /// Builds a layer, padding the weight matrix to a multiple of the group
    /// size and checking every structural rule.
    pub fn new(
        filters: usize,
        channels: usize,
        stride: usize,
        group_size: usize,
        weights: WeightMatrix,
        bn: Option<BnState>,
        shift_dirs: Option<Vec<ShiftDir>>,
    ) -> Result<Self> {
        if filters == 0 || channels == 0 {
            return Err(Error::invalid(
                "layer must have at least one filter and channel",
            ));
        }
        if !matches!(stride, 1 | 2) {
            return Err(Error::invalid(format!(
                "stride must be 1 or 2, got {stride}"
            )));
        }
        if !matches!(group_size, 1 | 2 | 4 | 8) {
            return Err(Error::invalid(format!(
                "column group size must be 1, 2, 4 or 8, got {group_size}"
            )));
        }
        if weights.rows() != filters || weights.cols() != channels {
            return Err(Error::invalid(format!(
                "weight matrix is {}x{}, expected {filters}x{channels}",
                weights.rows(),
                weights.cols()
            )));
        }
        if let Some(dirs) = &shift_dirs {
            if dirs.len() != channels {
                return Err(Error::invalid(format!(
                    "{} shift directions for {channels} channels",
                    dirs.len()
                )));
            }
        }
        let padded = channels.next_multiple_of(group_size);
        let weights = if padded == channels {
            weights
        } else {
            weights.widened(padded)
        };
        Ok(LayerSpec {
            filters,
            channels,
            stride,
            group_size,
            weights,
            bn,
            shift_dirs,
        })
    }

    /// Channel count after zero-padding to a multiple of the group size.
    pub fn padded_channels(&self) -> usize {
        self.weights.cols()
    }

    /// Width of the layer after column combining.
    pub fn packed_cols(&self) -> usize {
        self.padded_channels() / self.group_size
    }

    pub fn has_shift(&self) -> bool {
        self.shift_dirs.is_some()
    }

    /// Folded bias for the array's bias unit; zero until batch norm is
    /// quantized (and always zero for the fully connected layer).
    pub fn bias_fx(&self) -> i32 {
        match self.bn {
            Some(BnState::Quantized(affine)) => affine.bias_fx,
            _ => 0,
        }
    }
}
