//! Slow-time handling of channel-symbol columns: stride downsampling, clutter filtering and
//! repacking into sensing frames.

use crate::dsp::{CMatrix, Cf};

use super::mti::{MtiFilter, SosCascade};

/// Keeps columns whose index is a multiple of `stride`.
pub fn downsample(stream: &CMatrix, stride: usize) -> CMatrix {
    assert!(stride >= 1);
    let cols: Vec<Vec<Cf>> = (0..stream.cols)
        .step_by(stride)
        .map(|m| stream.column(m).to_vec())
        .collect();
    CMatrix::from_columns(stream.rows, &cols)
}

/// Consecutive non-overlapping blocks of `ms` columns; a trailing partial block is dropped.
pub fn repack(stream: &CMatrix, ms: usize) -> Vec<CMatrix> {
    assert!(ms >= 1);
    (0..stream.cols / ms)
        .map(|b| CMatrix {
            rows: stream.rows,
            cols: ms,
            data: stream.data[b * ms * stream.rows..(b + 1) * ms * stream.rows].to_vec(),
        })
        .collect()
}

/// One repacked block of downsampled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingFrame {
    pub index: u64,
    /// Channel symbols after the clutter filter (or unfiltered when it is bypassed).
    pub cells: CMatrix,
    /// The same columns before the clutter filter.
    pub pre_mti: CMatrix,
    /// Original slow-time indices of the columns.
    pub symbol_indices: Vec<u64>,
    pub stride: usize,
    pub mti_enabled: bool,
}

/// Streaming downsample, MTI and repack. The stride and filter switch are latched when a
/// new sensing frame starts.
#[derive(Debug, Clone)]
pub struct SlowTimeChain {
    width: usize,
    ms: usize,
    stride: usize,
    pending_stride: Option<usize>,
    mti: MtiFilter,
    mti_enabled: bool,
    pending_mti: Option<bool>,
    next_symbol: u64,
    next_keep: u64,
    frame_index: u64,
    post: Vec<Cf>,
    pre: Vec<Cf>,
    indices: Vec<u64>,
}

impl SlowTimeChain {
    pub fn new(width: usize, ms: usize, stride: usize, cascade: SosCascade) -> Self {
        assert!(ms >= 1 && stride >= 1);
        Self {
            width,
            ms,
            stride,
            pending_stride: None,
            mti: MtiFilter::new(cascade, width),
            mti_enabled: true,
            pending_mti: None,
            next_symbol: 0,
            next_keep: 0,
            frame_index: 0,
            post: Vec::with_capacity(width * ms),
            pre: Vec::with_capacity(width * ms),
            indices: Vec::with_capacity(ms),
        }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn mti_enabled(&self) -> bool {
        self.mti_enabled
    }

    /// Requests a new stride from the next sensing frame on.
    pub fn set_stride(&mut self, stride: usize) {
        if stride >= 1 && stride != self.stride {
            self.pending_stride = Some(stride);
            self.latch_if_idle();
        }
    }

    pub fn set_mti_enabled(&mut self, on: bool) {
        if on != self.mti_enabled {
            self.pending_mti = Some(on);
            self.latch_if_idle();
        }
    }

    fn latch_if_idle(&mut self) {
        if self.indices.is_empty() {
            self.latch();
        }
    }

    fn latch(&mut self) {
        if let Some(s) = self.pending_stride.take() {
            if let Some(last) = self.last_kept() {
                self.next_keep = last + s as u64;
            }
            self.stride = s;
        }
        if let Some(on) = self.pending_mti.take() {
            if on {
                self.mti.reset();
            }
            self.mti_enabled = on;
        }
    }

    fn last_kept(&self) -> Option<u64> {
        if self.next_symbol == 0 || self.next_keep < self.stride as u64 {
            None
        } else {
            Some(self.next_keep - self.stride as u64)
        }
    }

    /// Slow-time index the next pushed column will carry.
    pub fn next_symbol(&self) -> u64 {
        self.next_symbol
    }

    /// Feeds one channel-symbol column; returns a sensing frame when one completes.
    pub fn push_column(&mut self, col: &[Cf]) -> Option<SensingFrame> {
        assert_eq!(col.len(), self.width);
        let idx = self.next_symbol;
        self.next_symbol += 1;
        if idx != self.next_keep {
            return None;
        }
        self.next_keep += self.stride as u64;
        let start = self.post.len();
        self.pre.extend_from_slice(col);
        self.post.extend_from_slice(col);
        if self.mti_enabled {
            self.mti.process_column(&mut self.post[start..]);
        }
        self.indices.push(idx);
        if self.indices.len() < self.ms {
            return None;
        }
        let frame = SensingFrame {
            index: self.frame_index,
            cells: CMatrix {
                rows: self.width,
                cols: self.ms,
                data: std::mem::take(&mut self.post),
            },
            pre_mti: CMatrix {
                rows: self.width,
                cols: self.ms,
                data: std::mem::take(&mut self.pre),
            },
            symbol_indices: std::mem::take(&mut self.indices),
            stride: self.stride,
            mti_enabled: self.mti_enabled,
        };
        self.frame_index += 1;
        self.latch();
        Some(frame)
    }

    /// Feeds every column of `block` in order.
    pub fn push_block(&mut self, block: &CMatrix) -> Vec<SensingFrame> {
        (0..block.cols).filter_map(|m| self.push_column(block.column(m))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(rows: usize, cols: usize) -> CMatrix {
        let c: Vec<Vec<Cf>> = (0..cols)
            .map(|m| (0..rows).map(|n| Cf::new(m as f64, n as f64)).collect())
            .collect();
        CMatrix::from_columns(rows, &c)
    }

    #[test]
    fn downsample_examples() {
        let s = stream(2, 100);
        let d = downsample(&s, 20);
        assert_eq!(d.cols, 5);
        let idx: Vec<f64> = (0..5).map(|m| d.get(0, m).re).collect();
        assert_eq!(idx, vec![0.0, 20.0, 40.0, 60.0, 80.0]);
        assert_eq!(downsample(&s, 1), s);
        let d = downsample(&stream(1, 7), 3);
        assert_eq!((0..d.cols).map(|m| d.get(0, m).re).collect::<Vec<_>>(), vec![0.0, 3.0, 6.0]);
    }

    #[test]
    fn repack_examples() {
        let s = stream(3, 10);
        assert_eq!(repack(&s, 10), vec![s.clone()]);
        assert_eq!(repack(&s, 4).len(), 2);
        assert!(repack(&stream(3, 0), 4).is_empty());
    }

    #[test]
    fn sensing_frame_spans_two_frames() {
        // M=100 symbols per frame, stride 20, Ms=7: the first sensing frame takes symbols
        // 0,20,...,120, the last two from the second frame
        let mut ch = SlowTimeChain::new(1, 7, 20, SosCascade::default_highpass());
        let mut got = None;
        for m in 0..200u64 {
            if let Some(f) = ch.push_column(&[Cf::new(m as f64, 0.0)]) {
                got.get_or_insert(f);
            }
        }
        let f = got.unwrap();
        assert_eq!(f.symbol_indices, vec![0, 20, 40, 60, 80, 100, 120]);
        assert_eq!(f.symbol_indices.iter().filter(|&&i| i >= 100).count(), 2);
    }

    #[test]
    fn stride_change_latched_at_frame_boundary() {
        let mut ch = SlowTimeChain::new(1, 3, 2, SosCascade::default_highpass());
        let mut frames = Vec::new();
        for m in 0..40u64 {
            if m == 3 {
                ch.set_stride(5);
            }
            if let Some(f) = ch.push_column(&[Cf::new(1.0, 0.0)]) {
                frames.push(f);
            }
        }
        assert_eq!(frames[0].symbol_indices, vec![0, 2, 4]);
        assert_eq!(frames[0].stride, 2);
        assert_eq!(frames[1].symbol_indices, vec![9, 14, 19]);
        assert_eq!(frames[1].stride, 5);
    }

    #[test]
    fn bypassed_filter_passes_columns() {
        let mut ch = SlowTimeChain::new(2, 2, 1, SosCascade::default_highpass());
        ch.set_mti_enabled(false);
        ch.push_column(&[Cf::new(1.0, 0.0); 2]);
        let f = ch.push_column(&[Cf::new(2.0, 0.0); 2]).unwrap();
        assert_eq!(f.cells, f.pre_mti);
        assert!(!f.mti_enabled);
    }

    proptest! {
        #[test]
        fn linear_in_scale(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let s = stream(4, 30);
            let g = Cf::new(a, b);
            let mut c1 = SlowTimeChain::new(4, 5, 3, SosCascade::default_highpass());
            let mut c2 = SlowTimeChain::new(4, 5, 3, SosCascade::default_highpass());
            let scaled = CMatrix { rows: 4, cols: 30, data: s.data.iter().map(|v| v * g).collect() };
            let f1 = c1.push_block(&s);
            let f2 = c2.push_block(&scaled);
            for (x, y) in f1.iter().zip(&f2) {
                for (u, v) in x.cells.data.iter().zip(&y.cells.data) {
                    prop_assert!((u * g - v).norm() < 1e-9);
                }
            }
        }
    }
}
