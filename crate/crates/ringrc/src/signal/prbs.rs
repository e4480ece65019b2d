//! PRBS-8 source: maximal-length sequence from a Fibonacci LFSR.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrbsError {
    #[error("LFSR seed must be nonzero")]
    ZeroSeed,
}

/// Feedback taps for x^8 + x^6 + x^5 + x^4 + 1, a standard maximal PRBS-8
/// polynomial (period 255).
const TAPS: u8 = 0b0001_1101;

/// One period of a PRBS bit stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSequence {
    bits: Vec<u8>,
    order: u32,
}

impl BitSequence {
    /// Bits of one period, each 0 or 1.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn period(&self) -> usize {
        self.bits.len()
    }

    /// The sequence repeated for `repeats` periods.
    pub fn repeated(&self, repeats: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.period() * repeats);
        for _ in 0..repeats {
            out.extend_from_slice(&self.bits);
        }
        out
    }

    /// The sequence repeated, then truncated to exactly `n_bits`.
    pub fn cycle_to(&self, n_bits: usize) -> Vec<u8> {
        (0..n_bits).map(|i| self.bits[i % self.period()]).collect()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Generate one 255-bit period of the PRBS-8 m-sequence. Any nonzero seed
/// yields a cyclic shift of the same sequence.
pub fn prbs8_generate(seed: u8) -> Result<BitSequence, PrbsError> {
    if seed == 0 {
        return Err(PrbsError::ZeroSeed);
    }
    let mut state = seed;
    let mut bits = Vec::with_capacity(255);
    for _ in 0..255 {
        bits.push(state & 1);
        let feedback = (state & TAPS).count_ones() as u8 & 1;
        state = (state >> 1) | (feedback << 7);
    }
    Ok(BitSequence { bits, order: 8 })
}
