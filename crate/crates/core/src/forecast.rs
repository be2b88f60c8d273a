//! Multi-step test forecasting in chunks: the test series is cut into
//! blocks of horizon + delay samples, each block is seeded with its true
//! leading states, and the model's outputs are fed back as inputs for the
//! remaining steps. Future sampling times are taken as given, so the
//! time-aware variants read true gaps while states are rolled forward from
//! predictions.

use ndarray::{Array1, Array2};

use crate::embedding::{TimeSeries, Variant};
use crate::error::{Error, Result};
use crate::interpolant::FittedModel;

/// Anything that maps an embedded input window to a next-state estimate.
/// The kernel ridge model implements it; the experiment runner also feeds in
/// its indefinite-kernel fallback solution.
pub trait Predictor {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<Array1<f64>>;
}

impl Predictor for FittedModel {
    fn input_dim(&self) -> usize {
        FittedModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        FittedModel::output_dim(self)
    }

    fn predict(&self, x: &[f64]) -> Result<Array1<f64>> {
        FittedModel::predict(self, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub delay: usize,
    pub variant: Variant,
}

/// Predictions aligned with the scored test rows (everything past each
/// chunk's seed prefix), plus the matching truth.
#[derive(Clone, Debug)]
pub struct ForecastResult {
    pub predicted: Array2<f64>,
    pub actual: Array2<f64>,
    /// Index into the test series for every scored row.
    pub test_indices: Vec<usize>,
    /// Start index of each chunk in the test series.
    pub chunk_boundaries: Vec<usize>,
    /// Scored rows that were filled with the last finite value after a
    /// non-finite prediction; they still count against the score.
    pub n_divergent: usize,
}

fn build_input(
    variant: Variant,
    window: &[Vec<f64>],
    times: &[f64],
    next_index: usize,
) -> Vec<f64> {
    let tau = window.len();
    match variant {
        Variant::Regular => window.iter().flatten().copied().collect(),
        Variant::Irregular => {
            let d = window[0].len();
            let mut out = Vec::with_capacity(tau * (d + 1));
            for (j, state) in window.iter().enumerate() {
                let i = next_index - tau + j;
                out.extend_from_slice(state);
                out.push(times[i + 1] - times[i]);
            }
            out
        }
        Variant::Euler => window[tau - 1].clone(),
    }
}

/// Runs the chunked protocol. A trailing chunk still holding at least
/// delay + 1 samples is forecast over its remainder; anything shorter is
/// dropped.
pub fn forecast_chunked<P: Predictor>(
    model: &P,
    test: &TimeSeries,
    cfg: &ForecastConfig,
) -> Result<ForecastResult> {
    let tau = match cfg.variant {
        Variant::Euler => 1,
        _ => cfg.delay,
    };
    if tau == 0 || cfg.horizon == 0 {
        return Err(Error::Input("horizon and delay must be >= 1".into()));
    }
    if test.len() < tau + 1 {
        return Err(Error::Input(format!(
            "test series of length {} too short for delay {tau}",
            test.len()
        )));
    }
    let d = test.dim();
    let expected = cfg.variant.input_dim(d, tau);
    if model.input_dim() != expected {
        return Err(Error::VariantMismatch { expected: model.input_dim(), actual: expected });
    }
    if model.output_dim() != d {
        return Err(Error::DimensionMismatch { left: model.output_dim(), right: d });
    }

    let chunk_len = cfg.horizon + tau;
    let mut predicted_rows: Vec<Vec<f64>> = Vec::new();
    let mut actual_rows: Vec<Vec<f64>> = Vec::new();
    let mut test_indices = Vec::new();
    let mut chunk_boundaries = Vec::new();
    let mut n_divergent = 0usize;

    let mut start = 0usize;
    while start < test.len() {
        let end = (start + chunk_len).min(test.len());
        if end - start < tau + 1 {
            break;
        }
        chunk_boundaries.push(start);
        let mut window: Vec<Vec<f64>> =
            (start..start + tau).map(|k| test.state(k).to_vec()).collect();
        let mut diverged = false;
        for j in start + tau..end {
            let value = if diverged {
                None
            } else {
                let input = build_input(cfg.variant, &window, test.times(), j);
                let raw = match cfg.variant {
                    Variant::Euler => model.predict(&input).map(|slope| {
                        let dt = test.times()[j] - test.times()[j - 1];
                        input.iter().zip(slope.iter()).map(|(x, f)| x + dt * f).collect::<Vec<f64>>()
                    }),
                    _ => model.predict(&input).map(|v| v.to_vec()),
                };
                match raw {
                    Ok(v) if v.iter().all(|x| x.is_finite()) => Some(v),
                    Ok(_) => None,
                    Err(Error::Numeric { .. }) => None,
                    Err(other) => return Err(other),
                }
            };
            let state = match value {
                Some(v) => v,
                None => {
                    diverged = true;
                    n_divergent += 1;
                    window[tau - 1].clone()
                }
            };
            predicted_rows.push(state.clone());
            actual_rows.push(test.state(j).to_vec());
            test_indices.push(j);
            window.rotate_left(1);
            window[tau - 1] = state;
        }
        start = end;
    }

    let n = predicted_rows.len();
    let mut predicted = Array2::<f64>::zeros((n, d));
    let mut actual = Array2::<f64>::zeros((n, d));
    for (r, (p, a)) in predicted_rows.iter().zip(&actual_rows).enumerate() {
        for c in 0..d {
            predicted[[r, c]] = p[c];
            actual[[r, c]] = a[c];
        }
    }
    Ok(ForecastResult { predicted, actual, test_indices, chunk_boundaries, n_divergent })
}
