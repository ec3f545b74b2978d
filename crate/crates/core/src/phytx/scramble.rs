//! Additive scrambler driven by the x^7 + x^4 + 1 LFSR.

use super::PhyError;

pub const DEFAULT_SEED: u8 = 0b101_1101;

#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u8,
}

impl Lfsr {
    pub fn new(seed: u8) -> Result<Self, PhyError> {
        let state = seed & 0x7f;
        if state == 0 {
            return Err(PhyError::ZeroSeed);
        }
        Ok(Self { state })
    }

    pub fn next_bit(&mut self) -> u8 {
        let out = ((self.state >> 6) ^ (self.state >> 3)) & 1;
        self.state = ((self.state << 1) | out) & 0x7f;
        out
    }
}

/// XORs `bits` (one bit per byte) with the LFSR stream started from `seed`.
pub fn scramble(bits: &[u8], seed: u8) -> Result<Vec<u8>, PhyError> {
    let mut l = Lfsr::new(seed)?;
    Ok(bits.iter().map(|b| (b & 1) ^ l.next_bit()).collect())
}

pub fn scramble_in_place(bits: &mut [u8], seed: u8) -> Result<(), PhyError> {
    let mut l = Lfsr::new(seed)?;
    bits.iter_mut().for_each(|b| *b = (*b & 1) ^ l.next_bit());
    Ok(())
}
