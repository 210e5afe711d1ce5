//! Bit-serial building blocks: the per-column register chain and the serial
//! two's-complement adder each cell runs.
//!
//! Data words stream least-significant bit first. A column's register chain
//! interleaves the bit pipelines of its `g` channels and exposes seven tap
//! points per pipeline; tapping `k` stages early delays the word by `k`
//! cycles, which prepends `k` zero bits and therefore multiplies by `2^k`.
//! A cell multiplies by its weight simply by choosing the tap `exponent + 6`.

/// View of one column's register chain for the current input vector: one
/// word per interleaved channel pipeline.
pub struct RegisterChain<'a> {
    words: &'a [u8],
}

impl<'a> RegisterChain<'a> {
    pub fn new(words: &'a [u8]) -> Self {
        debug_assert!(words.len() <= 8, "a chain interleaves at most 8 channels");
        RegisterChain { words }
    }

    /// Bit `t` of channel `lane`'s word as seen from tap `k`: the word's bit
    /// `t - k`, or the zero bits the delay pads in front (and after bit 7).
    #[inline]
    pub fn tap_bit(&self, lane: usize, k: usize, t: usize) -> u32 {
        if t < k || t - k >= 8 {
            0
        } else {
            ((self.words[lane] >> (t - k)) & 1) as u32
        }
    }

    /// The word currently loaded in `lane`'s pipeline.
    #[inline]
    pub fn word(&self, lane: usize) -> u8 {
        self.words[lane]
    }
}

/// The value read from tap `k`: the input delayed by `k` cycles, i.e.
/// `input * 2^k`. Assembled bit by bit exactly as the hardware would see it.
///
/// Tap offsets run 0..=6, one per representable weight magnitude.
pub fn chain_tap(input: u8, k: usize) -> u32 {
    assert!(k <= 6, "tap offsets run 0..=6, got {k}");
    let chain = RegisterChain::new(std::slice::from_ref(&input));
    let mut word = 0u32;
    for t in 0..8 + k {
        word |= chain.tap_bit(0, k, t) << t;
    }
    word
}

/// One cell-frame of serial accumulation: adds `sign * (x << k)` to the
/// 32-bit two's-complement partial sum `y_in`, one bit per cycle.
///
/// Negative weights stream the inverted tap bits with the carry flip-flop
/// seeded to 1 (serial two's complement); the inversion also covers the sign
/// extension, since the raw tap reads zero past the top data bit. The final
/// carry out is discarded, exactly like the hardware adder. Returns the new
/// partial sum; `carry` is left as the adder's end-of-frame state.
pub fn serial_accumulate(
    chain: &RegisterChain<'_>,
    lane: usize,
    k: usize,
    negative: bool,
    y_in: u32,
    carry: &mut bool,
) -> u32 {
    *carry = negative;
    let mut out = 0u32;
    for t in 0..32 {
        let raw = chain.tap_bit(lane, k, t);
        let addend = raw ^ negative as u32;
        let y = (y_in >> t) & 1;
        let c = *carry as u32;
        out |= (y ^ addend ^ c) << t;
        *carry = (y & addend) | (c & (y | addend)) != 0;
    }
    out
}
