//! Differencing of level series and re-integration of predictive draws.

use crate::error::{GvpError, Result};

/// `d`-fold first differences; the result has `len - d` values.
pub fn difference(y: &[f64], d: usize) -> Result<Vec<f64>> {
    if d >= y.len() {
        return Err(GvpError::Input(format!(
            "cannot difference {} values {d} times",
            y.len()
        )));
    }
    let mut z = y.to_vec();
    for _ in 0..d {
        z = z.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(z)
}

/// Maps draws of `Delta^d y_{n+1}` back to draws of `y_{n+1}` given the
/// observed levels `history = y_1..y_n`.
pub fn undifference(history: &[f64], d: usize, draws: &[f64]) -> Result<Vec<f64>> {
    if d >= history.len() && d > 0 {
        return Err(GvpError::Input(format!(
            "need more than {d} observed levels to undo {d} differences, got {}",
            history.len()
        )));
    }
    // Last value of each differenced series Delta^k y, k = 0..d-1.
    let mut lasts = Vec::with_capacity(d);
    let mut level = history.to_vec();
    for _ in 0..d {
        lasts.push(*level.last().expect("non-empty"));
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(draws
        .iter()
        .map(|&z| lasts.iter().rev().fold(z, |acc, last| acc + last))
        .collect())
}
