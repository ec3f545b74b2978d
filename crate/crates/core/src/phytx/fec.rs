//! Forward error correction: LDPC with a normalized min-sum decoder, and a pass-through
//! code protected only by CRC-32.

use super::framing::{bits_to_bytes, crc32_bits};
use super::PhyError;

const DEFAULT_ALIST: &str = include_str!("../../data/ldpc_648_r12.alist");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Converged,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub info: Vec<u8>,
    pub status: DecodeStatus,
    pub iterations: usize,
}

/// Block code interface. LLRs are positive for bit 0.
pub trait Fec: Send + Sync + std::fmt::Debug {
    fn info_len(&self) -> usize;
    fn code_len(&self) -> usize;
    fn encode(&self, info: &[u8]) -> Result<Vec<u8>, PhyError>;
    fn decode(&self, llr: &[f64]) -> Result<Decoded, PhyError>;
}

#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    /// Variables attached to each check, CSR layout.
    check_offsets: Vec<usize>,
    check_vars: Vec<u32>,
    info_positions: Vec<usize>,
    /// `(codeword position, mask over info indices)` for every parity bit.
    parity_rules: Vec<(usize, Vec<u64>)>,
    pub alpha: f64,
    pub max_iterations: usize,
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl LdpcCode {
    /// The shipped rate-1/2, n=648 quasi-cyclic code.
    pub fn default_648() -> Self {
        Self::from_alist(DEFAULT_ALIST).expect("shipped matrix is valid")
    }

    pub fn from_alist(text: &str) -> Result<Self, PhyError> {
        let bad = |s: String| PhyError::MatrixFileInvalid(s);
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut nums = |what: &str| -> Result<Vec<usize>, PhyError> {
            let l = lines.next().ok_or_else(|| bad(format!("missing {what}")))?;
            l.split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| bad(format!("{what}: {e}"))))
                .collect()
        };
        let dims = nums("dimensions")?;
        if dims.len() != 2 || dims[0] == 0 || dims[1] == 0 || dims[1] >= dims[0] {
            return Err(bad(format!("bad dimensions {dims:?}")));
        }
        let (n, m) = (dims[0], dims[1]);
        let _max_deg = nums("max degrees")?;
        let col_deg = nums("column degrees")?;
        let row_deg = nums("row degrees")?;
        if col_deg.len() != n || row_deg.len() != m {
            return Err(bad("degree list length".into()));
        }
        let mut cols: Vec<Vec<usize>> = Vec::with_capacity(n);
        for j in 0..n {
            let v: Vec<usize> = nums("column list")?.into_iter().filter(|&x| x != 0).collect();
            if v.len() != col_deg[j] || v.iter().any(|&r| r > m) {
                return Err(bad(format!("column {j} entries")));
            }
            cols.push(v.into_iter().map(|r| r - 1).collect());
        }
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(m);
        for i in 0..m {
            let v: Vec<usize> = nums("row list")?.into_iter().filter(|&x| x != 0).collect();
            if v.len() != row_deg[i] || v.iter().any(|&c| c > n) {
                return Err(bad(format!("row {i} entries")));
            }
            let mut v: Vec<usize> = v.into_iter().map(|c| c - 1).collect();
            v.sort_unstable();
            rows.push(v);
        }
        // the two views must describe the same matrix
        let mut from_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, c) in cols.iter().enumerate() {
            for &i in c {
                from_cols[i].push(j);
            }
        }
        if from_cols != rows {
            return Err(bad("row and column lists disagree".into()));
        }
        Self::from_rows(n, &rows)
    }

    fn from_rows(n: usize, rows: &[Vec<usize>]) -> Result<Self, PhyError> {
        let m = rows.len();
        let w = words(n);
        let mut dense: Vec<Vec<u64>> = rows
            .iter()
            .map(|r| {
                let mut b = vec![0u64; w];
                for &c in r {
                    b[c / 64] ^= 1 << (c % 64);
                }
                b
            })
            .collect();
        // reduced row echelon form, pivots chosen from the rightmost column
        let mut pivots: Vec<(usize, usize)> = Vec::new();
        let mut next = 0;
        for col in (0..n).rev() {
            if next == m {
                break;
            }
            let bit = |r: &Vec<u64>| (r[col / 64] >> (col % 64)) & 1 == 1;
            let Some(p) = (next..m).find(|&r| bit(&dense[r])) else {
                continue;
            };
            dense.swap(next, p);
            let pivot_row = dense[next].clone();
            for (r, row) in dense.iter_mut().enumerate() {
                if r != next && bit(row) {
                    row.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push((next, col));
            next += 1;
        }
        let rank = pivots.len();
        if rank == 0 {
            return Err(PhyError::MatrixFileInvalid("zero matrix".into()));
        }
        let mut is_pivot = vec![false; n];
        pivots.iter().for_each(|&(_, c)| is_pivot[c] = true);
        let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let k = info_positions.len();
        let kw = words(k);
        let parity_rules = pivots
            .iter()
            .map(|&(r, c)| {
                let mut mask = vec![0u64; kw];
                for (i, &pos) in info_positions.iter().enumerate() {
                    if (dense[r][pos / 64] >> (pos % 64)) & 1 == 1 {
                        mask[i / 64] |= 1 << (i % 64);
                    }
                }
                (c, mask)
            })
            .collect();
        let mut check_offsets = vec![0];
        let mut check_vars = Vec::new();
        for r in rows {
            check_vars.extend(r.iter().map(|&c| c as u32));
            check_offsets.push(check_vars.len());
        }
        Ok(Self {
            n,
            k,
            check_offsets,
            check_vars,
            info_positions,
            parity_rules,
            alpha: 0.75,
            max_iterations: 25,
        })
    }

    pub fn num_checks(&self) -> usize {
        self.check_offsets.len() - 1
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// True when every parity check is satisfied by the hard decisions.
    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        (0..self.num_checks()).all(|c| {
            self.check_vars[self.check_offsets[c]..self.check_offsets[c + 1]]
                .iter()
                .fold(0u8, |acc, &v| acc ^ bits[v as usize])
                == 0
        })
    }
}

impl Fec for LdpcCode {
    fn info_len(&self) -> usize {
        self.k
    }

    fn code_len(&self) -> usize {
        self.n
    }

    fn encode(&self, info: &[u8]) -> Result<Vec<u8>, PhyError> {
        if info.len() != self.k {
            return Err(PhyError::LengthMismatch {
                expected: self.k,
                got: info.len(),
            });
        }
        let mut packed = vec![0u64; words(self.k)];
        for (i, &b) in info.iter().enumerate() {
            packed[i / 64] |= ((b & 1) as u64) << (i % 64);
        }
        let mut cw = vec![0u8; self.n];
        for (i, &pos) in self.info_positions.iter().enumerate() {
            cw[pos] = info[i] & 1;
        }
        for (pos, mask) in &self.parity_rules {
            let ones: u32 = mask.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[*pos] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    fn decode(&self, llr: &[f64]) -> Result<Decoded, PhyError> {
        if llr.len() != self.n {
            return Err(PhyError::LengthMismatch {
                expected: self.n,
                got: llr.len(),
            });
        }
        let chan: Vec<f64> = llr
            .iter()
            .map(|&x| if x.is_nan() { 0.0 } else { x.clamp(-1e3, 1e3) })
            .collect();
        let mut post = chan.clone();
        let mut hard: Vec<u8> = post.iter().map(|&x| (x < 0.0) as u8).collect();
        let finish = |hard: &[u8], status, iterations| Decoded {
            info: self.info_positions.iter().map(|&p| hard[p]).collect(),
            status,
            iterations,
        };
        if self.syndrome_ok(&hard) {
            return Ok(finish(&hard, DecodeStatus::Converged, 0));
        }
        let mut c2v = vec![0.0f64; self.check_vars.len()];
        let mut scratch: Vec<f64> = Vec::new();
        for it in 1..=self.max_iterations {
            let mut next = chan.clone();
            for c in 0..self.num_checks() {
                let (a, b) = (self.check_offsets[c], self.check_offsets[c + 1]);
                scratch.clear();
                let mut sign = 1.0f64;
                let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, 0usize);
                for e in a..b {
                    let v2c = post[self.check_vars[e] as usize] - c2v[e];
                    scratch.push(v2c);
                    if v2c < 0.0 {
                        sign = -sign;
                    }
                    let mag = v2c.abs();
                    if mag < min1 {
                        min2 = min1;
                        min1 = mag;
                        arg = e - a;
                    } else if mag < min2 {
                        min2 = mag;
                    }
                }
                for e in a..b {
                    let v2c = scratch[e - a];
                    let s = if v2c < 0.0 { -sign } else { sign };
                    let mag = if e - a == arg { min2 } else { min1 };
                    c2v[e] = self.alpha * s * mag;
                    next[self.check_vars[e] as usize] += c2v[e];
                }
            }
            post = next;
            hard.iter_mut().zip(&post).for_each(|(h, &x)| *h = (x < 0.0) as u8);
            if self.syndrome_ok(&hard) {
                return Ok(finish(&hard, DecodeStatus::Converged, it));
            }
        }
        Ok(finish(&hard, DecodeStatus::Failed, self.max_iterations))
    }
}

/// Pass-through code: info bits followed by their CRC-32.
#[derive(Debug, Clone)]
pub struct NullCode {
    k: usize,
}

impl NullCode {
    pub fn new(info_len: usize) -> Self {
        Self { k: info_len }
    }
}

impl Fec for NullCode {
    fn info_len(&self) -> usize {
        self.k
    }

    fn code_len(&self) -> usize {
        self.k + 32
    }

    fn encode(&self, info: &[u8]) -> Result<Vec<u8>, PhyError> {
        if info.len() != self.k {
            return Err(PhyError::LengthMismatch {
                expected: self.k,
                got: info.len(),
            });
        }
        let crc = crc32_bits(info);
        let mut out: Vec<u8> = info.iter().map(|b| b & 1).collect();
        out.extend((0..32).rev().map(|i| ((crc >> i) & 1) as u8));
        Ok(out)
    }

    fn decode(&self, llr: &[f64]) -> Result<Decoded, PhyError> {
        if llr.len() != self.code_len() {
            return Err(PhyError::LengthMismatch {
                expected: self.code_len(),
                got: llr.len(),
            });
        }
        let hard: Vec<u8> = llr.iter().map(|&x| (x < 0.0) as u8).collect();
        let info = hard[..self.k].to_vec();
        let rx_crc = bits_to_bytes(&hard[self.k..]);
        let rx_crc = u32::from_be_bytes([rx_crc[0], rx_crc[1], rx_crc[2], rx_crc[3]]);
        let status = if rx_crc == crc32_bits(&info) {
            DecodeStatus::Converged
        } else {
            DecodeStatus::Failed
        };
        Ok(Decoded {
            info,
            status,
            iterations: 0,
        })
    }
}
