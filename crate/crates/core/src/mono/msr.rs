use crate::dsp::CMatrix;

use super::MonoError;

/// Clutter suppression in dB over columns `m_start..=m_start + m_avg`.
pub fn msr(pre: &CMatrix, post: &CMatrix, m_start: usize, m_avg: usize) -> Result<f64, MonoError> {
    let end = m_start + m_avg;
    let len = pre.cols.min(post.cols);
    if end >= len {
        return Err(MonoError::WindowOutOfRange { start: m_start, end, len });
    }
    let energy = |s: &CMatrix| -> f64 {
        (m_start..=end).map(|m| s.column(m).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum()
    };
    Ok(10.0 * (energy(pre) / energy(post)).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Cf;

    #[test]
    fn arithmetic() {
        let pre = CMatrix { rows: 2, cols: 5, data: (0..10).map(|i| Cf::new(i as f64 + 1.0, 0.5)).collect() };
        assert!(msr(&pre, &pre, 0, 4).unwrap().abs() < 1e-12);
        let post = CMatrix { rows: 2, cols: 5, data: pre.data.iter().map(|v| v / 10.0).collect() };
        assert!((msr(&pre, &post, 1, 3).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(
            msr(&pre, &post, 2, 3),
            Err(MonoError::WindowOutOfRange { start: 2, end: 5, len: 5 })
        );
    }
}
