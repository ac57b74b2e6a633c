//! Growth-rate arithmetic used when reporting study results.

use crate::error::{Error, Result};

/// Average annual growth rate in percent: the geometric mean growth over
/// `years` steps from `start` to `end`.
pub fn aagr(start: f64, end: f64, years: u32) -> Result<f64> {
    if !(start > 0.0 && end > 0.0) || !start.is_finite() || !end.is_finite() {
        return Err(Error::Data(format!(
            "growth rate needs positive endpoints, got {start} and {end}"
        )));
    }
    if years == 0 {
        return Err(Error::Data("growth rate needs at least one year".into()));
    }
    Ok(100.0 * ((end / start).powf(1.0 / years as f64) - 1.0))
}

/// Percent change from `before` to `after`.
pub fn pct_change(before: f64, after: f64) -> Result<f64> {
    if before == 0.0 {
        return Err(Error::Data("percent change from zero".into()));
    }
    Ok(100.0 * (after - before) / before)
}
