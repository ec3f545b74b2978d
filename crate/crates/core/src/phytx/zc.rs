use crate::dsp::{gcd, Cf};

use super::PhyError;

#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    pub root: u64,
    pub values: Vec<Cf>,
}

impl ZcSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Zadoff-Chu sequence of length `n` and root `q`. The exponent is reduced modulo `2n`
/// in integer arithmetic so the phase stays exact for large indices.
pub fn zc_generate(n: usize, q: u64) -> Result<ZcSequence, PhyError> {
    if n == 0 || q == 0 || gcd(q, n as u64) != 1 {
        return Err(PhyError::NotCoprime { root: q, len: n });
    }
    let two_n = 2 * n as u128;
    let values = (0..n as u128)
        .map(|i| {
            let e = if n % 2 == 0 {
                (q as u128 * i * i) % two_n
            } else {
                (q as u128 * i * (i + 1)) % two_n
            };
            Cf::from_polar(1.0, -std::f64::consts::PI * e as f64 / n as f64)
        })
        .collect();
    Ok(ZcSequence { root: q, values })
}
