//! Trailing moving average for learning curves.

use crate::error::{HarnessError, Result};

/// Each output is the mean of the last `window` inputs up to and including
/// its position; the first `window − 1` use the available prefix.
pub fn smooth(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(HarnessError::Invalid("smoothing window must be at least 1".into()));
    }
    // Direct sums avoid the drift of a running total, so window 1 is exact.
    Ok((0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect())
}
