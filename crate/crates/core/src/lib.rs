//! Surrogate modeling of dynamical systems from irregularly-sampled time
//! series: kernel ridge regression with a composite kernel whose parameters
//! are learned by gradient descent on a cross-validation loss, plus the
//! benchmark systems, forecasting protocol, and experiment harness used to
//! compare time-aware, plain, and Euler model variants.

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod flows;
pub mod forecast;
pub mod interpolant;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod systems;

pub use embedding::{EmbeddedDataset, TimeSeries, Variant};
pub use error::{Error, Result};
pub use flows::{KFConfig, TrainTrace};
pub use forecast::{ForecastConfig, ForecastResult};
pub use interpolant::FittedModel;
pub use kernel::KernelParams;
pub use metrics::ScoreReport;
pub use systems::{SamplingScheme, SystemSpec};
