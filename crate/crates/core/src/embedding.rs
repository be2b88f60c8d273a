//! Delay embeddings that turn a time series into regression data.
//!
//! Three variants: `Regular` concatenates the last `delay` states and
//! discards the clock; `Irregular` interleaves each state with the gap that
//! follows it, so the regressor sees the sampling times; `Euler` regresses
//! the finite-difference estimate of the vector field (one state in, slope
//! out), so the surrogate advances as x + dt * f(x).

use ndarray::Array2;

use crate::error::{Error, Result};

/// Observation times and d-dimensional states, irregularly spaced.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    times: Vec<f64>,
    states: Array2<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, states: Array2<f64>) -> Result<Self> {
        if times.len() != states.nrows() {
            return Err(Error::DimensionMismatch { left: times.len(), right: states.nrows() });
        }
        if times.is_empty() || states.ncols() == 0 {
            return Err(Error::Input("time series must be non-empty".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Input(format!(
                    "observation times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) || states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("time series values must be finite".into()));
        }
        Ok(TimeSeries { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension d.
    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[f64] {
        self.states.row(k).to_slice().expect("row-major states")
    }

    /// Contiguous slice of the series, `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.len() {
            return Err(Error::Input(format!(
                "window {start}..{end} out of bounds for series of length {}",
                self.len()
            )));
        }
        TimeSeries::new(
            self.times[start..end].to_vec(),
            self.states.slice(ndarray::s![start..end, ..]).to_owned(),
        )
    }
}

/// Which surrogate model the regression data encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Regular,
    Irregular,
    Euler,
}

impl Variant {
    /// Input columns produced for state dimension `d` and delay `tau`.
    pub fn input_dim(&self, d: usize, tau: usize) -> usize {
        match self {
            Variant::Regular => tau * d,
            Variant::Irregular => tau * (d + 1),
            Variant::Euler => d,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Regular => "regular",
            Variant::Irregular => "irregular",
            Variant::Euler => "euler",
        }
    }
}

/// Regression inputs and targets built from a time series.
#[derive(Clone, Debug)]
pub struct EmbeddedDataset {
    pub variant: Variant,
    pub delay: usize,
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl EmbeddedDataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// Optional per-column affine map to zero mean and unit spread.
    /// Off for every preset; provided for exploratory runs only.
    pub fn normalized(&self) -> (EmbeddedDataset, Vec<(f64, f64)>) {
        let n = self.inputs.nrows() as f64;
        let mut transforms = Vec::with_capacity(self.inputs.ncols());
        let mut inputs = self.inputs.clone();
        for mut col in inputs.columns_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) / scale);
            transforms.push((mean, scale));
        }
        (
            EmbeddedDataset {
                variant: self.variant,
                delay: self.delay,
                inputs,
                targets: self.targets.clone(),
            },
            transforms,
        )
    }
}

fn check_length(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        return Err(Error::Input(format!(
            "series of length {n} too short for embedding needing {needed} samples"
        )));
    }
    Ok(())
}

/// Inputs are the `tau` consecutive states before the target; times are
/// discarded.
pub fn embed_regular(ts: &TimeSeries, tau: usize) -> Result<EmbeddedDataset> {
    if tau == 0 {
        return Err(Error::Input("delay must be >= 1".into()));
    }
    check_length(ts.len(), tau + 1)?;
    let n = ts.len() - tau;
    let d = ts.dim();
    let mut inputs = Array2::<f64>::zeros((n, tau * d));
    let mut targets = Array2::<f64>::zeros((n, d));
    for k in 0..n {
        for j in 0..tau {
            for c in 0..d {
                inputs[[k, j * d + c]] = ts.states()[[k + j, c]];
            }
        }
        for c in 0..d {
            targets[[k, c]] = ts.states()[[k + tau, c]];
        }
    }
    Ok(EmbeddedDataset { variant: Variant::Regular, delay: tau, inputs, targets })
}

/// Each state is followed by the time gap to its successor, so the final
/// column of every window is the gap leading to the target (known at
/// prediction time from the requested sampling instants).
pub fn embed_irregular(ts: &TimeSeries, tau: usize) -> Result<EmbeddedDataset> {
    if tau == 0 {
        return Err(Error::Input("delay must be >= 1".into()));
    }
    check_length(ts.len(), tau + 1)?;
    let n = ts.len() - tau;
    let d = ts.dim();
    let width = tau * (d + 1);
    let mut inputs = Array2::<f64>::zeros((n, width));
    let mut targets = Array2::<f64>::zeros((n, d));
    for k in 0..n {
        for j in 0..tau {
            let base = j * (d + 1);
            for c in 0..d {
                inputs[[k, base + c]] = ts.states()[[k + j, c]];
            }
            inputs[[k, base + d]] = ts.times()[k + j + 1] - ts.times()[k + j];
        }
        for c in 0..d {
            targets[[k, c]] = ts.states()[[k + tau, c]];
        }
    }
    Ok(EmbeddedDataset { variant: Variant::Irregular, delay: tau, inputs, targets })
}

/// Targets are the difference quotients (x[k+1] - x[k]) / dt[k]; the learned
/// map is the vector field itself and reconstruction applies x + dt * f(x).
pub fn embed_euler(ts: &TimeSeries) -> Result<EmbeddedDataset> {
    check_length(ts.len(), 2)?;
    let n = ts.len() - 1;
    let d = ts.dim();
    let mut inputs = Array2::<f64>::zeros((n, d));
    let mut targets = Array2::<f64>::zeros((n, d));
    for k in 0..n {
        let dt = ts.times()[k + 1] - ts.times()[k];
        if !(dt > 0.0) {
            return Err(Error::Input(format!("non-positive time gap at index {k}: {dt}")));
        }
        for c in 0..d {
            inputs[[k, c]] = ts.states()[[k, c]];
            targets[[k, c]] = (ts.states()[[k + 1, c]] - ts.states()[[k, c]]) / dt;
        }
    }
    Ok(EmbeddedDataset { variant: Variant::Euler, delay: 1, inputs, targets })
}

pub fn embed(ts: &TimeSeries, variant: Variant, tau: usize) -> Result<EmbeddedDataset> {
    match variant {
        Variant::Regular => embed_regular(ts, tau),
        Variant::Irregular => embed_irregular(ts, tau),
        Variant::Euler => embed_euler(ts),
    }
}
