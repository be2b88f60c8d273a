//! Forecast scoring: mean squared error over full-state squared 2-norms and
//! the coefficient of determination against the mean of the scored rows.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct ScoreReport {
    pub mse: f64,
    pub r2: f64,
    pub n_scored: usize,
    pub n_divergent: usize,
}

/// MSE = mean_i ||actual_i - predicted_i||²;
/// R²  = 1 - sum_i ||actual_i - predicted_i||² / sum_i ||actual_i - mean||².
pub fn score(predicted: ArrayView2<'_, f64>, actual: ArrayView2<'_, f64>) -> Result<ScoreReport> {
    if predicted.dim() != actual.dim() {
        return Err(Error::DimensionMismatch { left: predicted.nrows(), right: actual.nrows() });
    }
    let n = actual.nrows();
    if n < 2 {
        return Err(Error::Input("scoring needs at least two rows".into()));
    }
    let d = actual.ncols();
    let mut mean = vec![0.0; d];
    for row in actual.rows() {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut sq_err = 0.0;
    let mut sq_dev = 0.0;
    for (p_row, a_row) in predicted.rows().into_iter().zip(actual.rows()) {
        for c in 0..d {
            let e = a_row[c] - p_row[c];
            sq_err += e * e;
            let dv = a_row[c] - mean[c];
            sq_dev += dv * dv;
        }
    }
    if sq_dev <= 0.0 {
        return Err(Error::Metric("actual values have zero variance".into()));
    }
    Ok(ScoreReport {
        mse: sq_err / n as f64,
        r2: 1.0 - sq_err / sq_dev,
        n_scored: n,
        n_divergent: 0,
    })
}
