//! End-to-end experiment orchestration: generate a trajectory, discard the
//! burn-in, subsample irregularly, split train/test, then for every enabled
//! approach and repetition draw a kernel initialization, optionally learn the
//! kernel, fit, forecast in chunks, and score. Everything is deterministic
//! given the master seed, and every approach/repetition owns an isolated RNG
//! stream so enabling one approach never shifts another's results.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{self, format_f64};
use crate::embedding::{self, EmbeddedDataset, TimeSeries, Variant};
use crate::error::{Error, Result};
use crate::flows::{self, KFConfig};
use crate::forecast::{forecast_chunked, ForecastConfig, ForecastResult};
use crate::interpolant::{self, FittedModel};
use crate::kernel::{self, KernelParams};
use crate::linalg;
use crate::metrics;
use crate::report::{ExperimentReport, RunRecord};
use crate::systems::{self, SamplingScheme, SystemSpec};

/// The five compared approaches: time-aware or plain delay embedding, the
/// Euler vector-field variant, each with a learned or a random kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Approach {
    /// Time-aware embedding, kernel learned.
    A,
    /// Plain embedding, kernel learned.
    B,
    /// Euler vector-field model, kernel learned.
    C,
    /// Time-aware embedding, random kernel.
    D,
    /// Plain embedding, random kernel.
    E,
}

impl Approach {
    pub const ALL: [Approach; 5] = [Approach::A, Approach::B, Approach::C, Approach::D, Approach::E];

    pub fn variant(&self) -> Variant {
        match self {
            Approach::A | Approach::D => Variant::Irregular,
            Approach::B | Approach::E => Variant::Regular,
            Approach::C => Variant::Euler,
        }
    }

    pub fn learns(&self) -> bool {
        matches!(self, Approach::A | Approach::B | Approach::C)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Approach::A => "A",
            Approach::B => "B",
            Approach::C => "C",
            Approach::D => "D",
            Approach::E => "E",
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Approach::A => "time-aware, learned",
            Approach::B => "plain, learned",
            Approach::C => "euler, learned",
            Approach::D => "time-aware, random",
            Approach::E => "plain, random",
        }
    }

    pub fn index(&self) -> u64 {
        match self {
            Approach::A => 0,
            Approach::B => 1,
            Approach::C => 2,
            Approach::D => 3,
            Approach::E => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Approach> {
        match s.trim() {
            "A" | "a" => Ok(Approach::A),
            "B" | "b" => Ok(Approach::B),
            "C" | "c" => Ok(Approach::C),
            "D" | "d" => Ok(Approach::D),
            "E" | "e" => Ok(Approach::E),
            other => Err(Error::Config(format!("unknown approach {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub sampling_alpha: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub nugget: f64,
    pub horizon: usize,
    pub delay: usize,
    pub approaches: Vec<Approach>,
    pub repetitions: usize,
    pub burn_in: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// The benchmark configurations. Training sizes, learning rates,
    /// horizons, delays and alpha follow the per-system comparison setup;
    /// step sizes, burn-in and the Van der Pol split are this project's
    /// documented choices.
    pub fn preset(system: &str) -> Result<ExperimentConfig> {
        let base = |spec: SystemSpec| ExperimentConfig {
            system: spec,
            sampling_alpha: 5,
            n_train: 0,
            n_test: 0,
            batch_size: 100,
            learning_rate: 0.01,
            iterations: 1000,
            nugget: 1e-6,
            horizon: 1,
            delay: 1,
            approaches: Approach::ALL.to_vec(),
            repetitions: 5,
            burn_in: 1000,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
        };
        match system {
            "henon" => {
                let mut cfg = base(SystemSpec::henon_default());
                cfg.sampling_alpha = 3;
                cfg.n_train = 600;
                cfg.n_test = 400;
                cfg.learning_rate = 0.1;
                cfg.horizon = 5;
                cfg.delay = 1;
                cfg.approaches = vec![Approach::A, Approach::B, Approach::D, Approach::E];
                cfg.output_dir = PathBuf::from("out/henon");
                Ok(cfg)
            }
            "vanderpol" => {
                let mut cfg = base(SystemSpec::van_der_pol_default());
                cfg.n_train = 2000;
                cfg.n_test = 1000;
                cfg.horizon = 10;
                cfg.delay = 1;
                cfg.output_dir = PathBuf::from("out/vanderpol");
                Ok(cfg)
            }
            "lorenz" => {
                let mut cfg = base(SystemSpec::lorenz_default());
                cfg.n_train = 5000;
                cfg.n_test = 5000;
                cfg.horizon = 20;
                cfg.delay = 2;
                cfg.output_dir = PathBuf::from("out/lorenz");
                Ok(cfg)
            }
            other => Err(Error::Config(format!("unknown system {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.approaches.is_empty() {
            return Err(Error::Config("at least one approach must be enabled".into()));
        }
        if !self.system.is_continuous() && self.approaches.contains(&Approach::C) {
            return Err(Error::Config(
                "approach C needs a continuous-time system; the Euler variant is not applicable to henon".into(),
            ));
        }
        if self.sampling_alpha == 0 {
            return Err(Error::Config("alpha must be >= 1".into()));
        }
        if self.delay == 0 || self.horizon == 0 {
            return Err(Error::Config("delay and horizon must be >= 1".into()));
        }
        if self.n_train < self.delay + 1 || self.n_test < self.delay + 1 {
            return Err(Error::Config("train and test splits are too small for the delay".into()));
        }
        if self.batch_size % 2 != 0 || self.batch_size < 2 {
            return Err(Error::Config("batch size must be even and >= 2".into()));
        }
        if self.batch_size > self.n_train - self.delay {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {} embedded training rows",
                self.batch_size,
                self.n_train - self.delay
            )));
        }
        Ok(())
    }

    /// Serializes to the flat key=value format `parse` accepts.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("system", self.system.label().to_string());
        match self.system {
            SystemSpec::Henon { a, b, initial } => {
                push("henon_a", format_f64(a));
                push("henon_b", format_f64(b));
                push("initial_state", format!("{},{}", format_f64(initial[0]), format_f64(initial[1])));
            }
            SystemSpec::VanDerPol { epsilon, initial, base_step, micro_substeps } => {
                push("vdp_epsilon", format_f64(epsilon));
                push("initial_state", format!("{},{}", format_f64(initial[0]), format_f64(initial[1])));
                push("base_step", format_f64(base_step));
                push("micro_substeps", micro_substeps.to_string());
            }
            SystemSpec::Lorenz { sigma, rho, beta, initial, base_step, micro_substeps } => {
                push("lorenz_sigma", format_f64(sigma));
                push("lorenz_rho", format_f64(rho));
                push("lorenz_beta", format_f64(beta));
                push(
                    "initial_state",
                    format!(
                        "{},{},{}",
                        format_f64(initial[0]),
                        format_f64(initial[1]),
                        format_f64(initial[2])
                    ),
                );
                push("base_step", format_f64(base_step));
                push("micro_substeps", micro_substeps.to_string());
            }
        }
        push("alpha", self.sampling_alpha.to_string());
        push("n_train", self.n_train.to_string());
        push("n_test", self.n_test.to_string());
        push("batch_size", self.batch_size.to_string());
        push("learning_rate", format_f64(self.learning_rate));
        push("iterations", self.iterations.to_string());
        push("nugget", format_f64(self.nugget));
        push("horizon", self.horizon.to_string());
        push("delay", self.delay.to_string());
        push(
            "approaches",
            self.approaches.iter().map(|a| a.label()).collect::<Vec<_>>().join(","),
        );
        push("repetitions", self.repetitions.to_string());
        push("burn_in", self.burn_in.to_string());
        push("seed", self.master_seed.to_string());
        push("output_dir", self.output_dir.display().to_string());
        out
    }

    /// Parses the flat key=value format; `system` selects the preset whose
    /// fields the remaining keys override.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut map: HashMap<&str, &str> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            map.insert(k.trim(), v.trim());
        }
        let system = map
            .remove("system")
            .ok_or_else(|| Error::Config("missing required key: system".into()))?;
        let mut cfg = ExperimentConfig::preset(system)?;

        fn parsed<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>().map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
        }

        let keys: Vec<(&str, &str)> = {
            let mut kv: Vec<_> = map.into_iter().collect();
            kv.sort();
            kv
        };
        for (key, value) in keys {
            match key {
                "henon_a" => {
                    if let SystemSpec::Henon { ref mut a, .. } = cfg.system {
                        *a = parsed(key, value)?;
                    } else {
                        return Err(Error::Config(format!("{key} is only valid for henon")));
                    }
                }
                "henon_b" => {
                    if let SystemSpec::Henon { ref mut b, .. } = cfg.system {
                        *b = parsed(key, value)?;
                    } else {
                        return Err(Error::Config(format!("{key} is only valid for henon")));
                    }
                }
                "vdp_epsilon" => {
                    if let SystemSpec::VanDerPol { ref mut epsilon, .. } = cfg.system {
                        *epsilon = parsed(key, value)?;
                    } else {
                        return Err(Error::Config(format!("{key} is only valid for vanderpol")));
                    }
                }
                "lorenz_sigma" => {
                    if let SystemSpec::Lorenz { ref mut sigma, .. } = cfg.system {
                        *sigma = parsed(key, value)?;
                    } else {
                        return Err(Error::Config(format!("{key} is only valid for lorenz")));
                    }
                }
                "lorenz_rho" => {
                    if let SystemSpec::Lorenz { ref mut rho, .. } = cfg.system {
                        *rho = parsed(key, value)?;
                    } else {
                        return Err(Error::Config(format!("{key} is only valid for lorenz")));
                    }
                }
                "lorenz_beta" => {
                    if let SystemSpec::Lorenz { ref mut beta, .. } = cfg.system {
                        *beta = parsed(key, value)?;
                    } else {
                        return Err(Error::Config(format!("{key} is only valid for lorenz")));
                    }
                }
                "initial_state" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|p| parsed::<f64>(key, p.trim()))
                        .collect::<Result<_>>()?;
                    match cfg.system {
                        SystemSpec::Henon { ref mut initial, .. }
                        | SystemSpec::VanDerPol { ref mut initial, .. } => {
                            if parts.len() != 2 {
                                return Err(Error::Config("initial_state needs 2 components".into()));
                            }
                            initial.copy_from_slice(&parts);
                        }
                        SystemSpec::Lorenz { ref mut initial, .. } => {
                            if parts.len() != 3 {
                                return Err(Error::Config("initial_state needs 3 components".into()));
                            }
                            initial.copy_from_slice(&parts);
                        }
                    }
                }
                "base_step" => match cfg.system {
                    SystemSpec::VanDerPol { ref mut base_step, .. }
                    | SystemSpec::Lorenz { ref mut base_step, .. } => {
                        *base_step = parsed(key, value)?;
                    }
                    SystemSpec::Henon { .. } => {
                        return Err(Error::Config("base_step is only valid for continuous systems".into()))
                    }
                },
                "micro_substeps" => match cfg.system {
                    SystemSpec::VanDerPol { ref mut micro_substeps, .. }
                    | SystemSpec::Lorenz { ref mut micro_substeps, .. } => {
                        *micro_substeps = parsed(key, value)?;
                    }
                    SystemSpec::Henon { .. } => {
                        return Err(Error::Config(
                            "micro_substeps is only valid for continuous systems".into(),
                        ))
                    }
                },
                "alpha" => cfg.sampling_alpha = parsed(key, value)?,
                "n_train" => cfg.n_train = parsed(key, value)?,
                "n_test" => cfg.n_test = parsed(key, value)?,
                "batch_size" => cfg.batch_size = parsed(key, value)?,
                "learning_rate" => cfg.learning_rate = parsed(key, value)?,
                "iterations" => cfg.iterations = parsed(key, value)?,
                "nugget" => cfg.nugget = parsed(key, value)?,
                "horizon" => cfg.horizon = parsed(key, value)?,
                "delay" => cfg.delay = parsed(key, value)?,
                "approaches" => {
                    let mut list: Vec<Approach> =
                        value.split(',').map(Approach::parse).collect::<Result<_>>()?;
                    list.sort();
                    list.dedup();
                    cfg.approaches = list;
                }
                "repetitions" => cfg.repetitions = parsed(key, value)?,
                "burn_in" => cfg.burn_in = parsed(key, value)?,
                "seed" => cfg.master_seed = parsed(key, value)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                other => return Err(Error::Config(format!("unknown config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(salt))
}

const SALT_SAMPLING: u64 = 0x01;
const SALT_INIT: u64 = 0x1000;
const SALT_TRAIN: u64 = 0x2000;

pub fn sampling_seed(master: u64) -> u64 {
    derive_seed(master, SALT_SAMPLING)
}

pub fn init_seed(master: u64, repetition: usize) -> u64 {
    derive_seed(master, SALT_INIT + repetition as u64)
}

pub fn train_seed(master: u64, repetition: usize, approach: Approach) -> u64 {
    derive_seed(master, SALT_TRAIN + 16 * repetition as u64 + approach.index())
}

/// Ridge coefficients solved through an indefinite regularized Gram matrix.
/// The regression formula K(x,X)(K(X,X)+nugget·I)⁻¹Y needs only
/// invertibility; when the composite kernel's quadratic term makes the
/// matrix indefinite, the coefficients come from an LU solve at the same
/// nugget instead of a nugget large enough to bury the data.
#[derive(Clone, Debug)]
pub struct IndefiniteRidge {
    params: KernelParams,
    train_inputs: ndarray::Array2<f64>,
    coeffs: ndarray::Array2<f64>,
}

impl crate::forecast::Predictor for IndefiniteRidge {
    fn input_dim(&self) -> usize {
        self.train_inputs.ncols()
    }

    fn output_dim(&self) -> usize {
        self.coeffs.ncols()
    }

    fn predict(&self, x: &[f64]) -> Result<ndarray::Array1<f64>> {
        let row = kernel::cross_row(&self.params, x, self.train_inputs.view())?;
        Ok(self.coeffs.t().dot(&row))
    }
}

/// A fitted regression, factorized when the kernel matrix allows it.
pub enum FittedSurrogate {
    Definite(FittedModel),
    Indefinite(IndefiniteRidge),
}

impl FittedSurrogate {
    pub fn solver(&self) -> &'static str {
        match self {
            FittedSurrogate::Definite(_) => "cholesky",
            FittedSurrogate::Indefinite(_) => "lu",
        }
    }
}

impl crate::forecast::Predictor for FittedSurrogate {
    fn input_dim(&self) -> usize {
        match self {
            FittedSurrogate::Definite(m) => m.input_dim(),
            FittedSurrogate::Indefinite(m) => m.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            FittedSurrogate::Definite(m) => m.output_dim(),
            FittedSurrogate::Indefinite(m) => m.output_dim(),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<ndarray::Array1<f64>> {
        match self {
            FittedSurrogate::Definite(m) => m.predict(x),
            FittedSurrogate::Indefinite(m) => m.predict(x),
        }
    }
}

/// Fits by Cholesky at the configured nugget; if the regularized matrix is
/// not positive definite, solves the same system by LU (logged) so every
/// approach is compared at the same nugget.
pub fn fit_surrogate(
    params: &KernelParams,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    nugget: f64,
) -> Result<FittedSurrogate> {
    if !(nugget >= 0.0) {
        return Err(Error::Input(format!("nugget must be >= 0, got {nugget}")));
    }
    let mut k = kernel::gram(params, inputs)?;
    for i in 0..k.nrows() {
        k[[i, i]] += nugget;
    }
    match linalg::cholesky(k.view()) {
        Ok(chol) => {
            let coeffs = linalg::cholesky_solve(&chol, targets);
            Ok(FittedSurrogate::Definite(interpolant::from_parts(
                *params,
                inputs.to_owned(),
                targets.to_owned(),
                nugget,
                chol,
                coeffs,
            )))
        }
        Err(Error::Fit { pivot }) => {
            log::debug!("gram matrix indefinite at pivot {pivot}; solving by lu at nugget {nugget:e}");
            let coeffs = linalg::lu_solve(k.view(), targets)?;
            Ok(FittedSurrogate::Indefinite(IndefiniteRidge {
                params: *params,
                train_inputs: inputs.to_owned(),
                coeffs,
            }))
        }
        Err(other) => Err(other),
    }
}

/// The U(0,1) kernel draw for a repetition; the no-learning baselines use it
/// directly and the trained approaches start gradient descent from it.
pub fn draw_init(master_seed: u64, repetition: usize) -> KernelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed(master_seed, repetition));
    KernelParams::sample_uniform(&mut rng)
}

/// Serializes forecast rows next to their truth, with test index, time, and
/// chunk ordinal per row.
pub fn predictions_to_csv(test: &TimeSeries, fc: &ForecastResult) -> String {
    let d = test.dim();
    let mut out = String::from("index,t,chunk");
    for c in 1..=d {
        out.push_str(&format!(",actual_x{c}"));
    }
    for c in 1..=d {
        out.push_str(&format!(",pred_x{c}"));
    }
    out.push('\n');
    let mut chunk = 0usize;
    for (row, &idx) in fc.test_indices.iter().enumerate() {
        while chunk + 1 < fc.chunk_boundaries.len() && idx >= fc.chunk_boundaries[chunk + 1] {
            chunk += 1;
        }
        out.push_str(&format!("{},{},{}", idx, format_f64(test.times()[idx]), chunk));
        for c in 0..d {
            out.push(',');
            out.push_str(&format_f64(fc.actual[[row, c]]));
        }
        for c in 0..d {
            out.push(',');
            out.push_str(&format_f64(fc.predicted[[row, c]]));
        }
        out.push('\n');
    }
    out
}

struct Embeddings {
    regular: Option<EmbeddedDataset>,
    irregular: Option<EmbeddedDataset>,
    euler: Option<EmbeddedDataset>,
}

impl Embeddings {
    fn build(train: &TimeSeries, cfg: &ExperimentConfig) -> Result<Embeddings> {
        let mut e = Embeddings { regular: None, irregular: None, euler: None };
        for a in &cfg.approaches {
            match a.variant() {
                Variant::Regular if e.regular.is_none() => {
                    e.regular = Some(embedding::embed_regular(train, cfg.delay)?);
                }
                Variant::Irregular if e.irregular.is_none() => {
                    e.irregular = Some(embedding::embed_irregular(train, cfg.delay)?);
                }
                Variant::Euler if e.euler.is_none() => {
                    e.euler = Some(embedding::embed_euler(train)?);
                }
                _ => {}
            }
        }
        Ok(e)
    }

    fn get(&self, variant: Variant) -> &EmbeddedDataset {
        match variant {
            Variant::Regular => self.regular.as_ref().expect("embedding built"),
            Variant::Irregular => self.irregular.as_ref().expect("embedding built"),
            Variant::Euler => self.euler.as_ref().expect("embedding built"),
        }
    }
}

struct CellOutput {
    score: crate::metrics::ScoreReport,
    solver: &'static str,
    train_skipped: usize,
    best_smoothed_rho: f64,
    trace_csv: Option<String>,
    predictions_csv: String,
}

fn run_cell(
    cfg: &ExperimentConfig,
    approach: Approach,
    repetition: usize,
    init: &KernelParams,
    data: &EmbeddedDataset,
    test: &TimeSeries,
) -> Result<CellOutput> {
    let t_seed = train_seed(cfg.master_seed, repetition, approach);
    let (params, train_skipped, best_smoothed_rho, trace_csv) = if approach.learns() {
        let kf = KFConfig {
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            iterations: cfg.iterations,
            nugget: cfg.nugget,
            rng_seed: t_seed,
        };
        let mut sink: Vec<u8> = Vec::new();
        let trace = flows::train_with_sink(data, &kf, init, Some(&mut sink))?;
        let csv = String::from_utf8(sink).expect("ascii trace");
        (trace.best_params, trace.skipped_steps, trace.best_smoothed_rho, Some(csv))
    } else {
        (*init, 0, f64::NAN, None)
    };

    let model = fit_surrogate(&params, data.inputs.view(), data.targets.view(), cfg.nugget)?;
    let tau = match approach.variant() {
        Variant::Euler => 1,
        _ => cfg.delay,
    };
    let fc_cfg = ForecastConfig { horizon: cfg.horizon, delay: tau, variant: approach.variant() };
    let fc = forecast_chunked(&model, test, &fc_cfg)?;
    let mut score = metrics::score(fc.predicted.view(), fc.actual.view())?;
    score.n_divergent = fc.n_divergent;
    Ok(CellOutput {
        score,
        solver: model.solver(),
        train_skipped,
        best_smoothed_rho,
        trace_csv,
        predictions_csv: predictions_to_csv(test, &fc),
    })
}

/// Runs the full comparison and writes datasets, per-run predictions and
/// traces, the raw report CSVs, and the rendered table into the output
/// directory. Failures are recorded per (approach, repetition) without
/// aborting sibling runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let total = cfg.n_train + cfg.n_test;
    let source_len = cfg.burn_in + systems::source_length_for(total, cfg.sampling_alpha);
    let source = systems::generate(&cfg.system, source_len)?;
    let burned = source.window(cfg.burn_in, source.len())?;
    let scheme =
        SamplingScheme { alpha_max: cfg.sampling_alpha, rng_seed: sampling_seed(cfg.master_seed) };
    let sampled = systems::subsample_irregular(&burned, &scheme, total)?;
    let train_series = sampled.window(0, cfg.n_train)?;
    let test_series = sampled.window(cfg.n_train, total)?;

    let out = &cfg.output_dir;
    dataset::write_series(&out.join("train.csv"), &train_series)?;
    dataset::write_series(&out.join("test.csv"), &test_series)?;
    dataset::atomic_write(&out.join("config_used.cfg"), cfg.to_config_string().as_bytes())?;

    let embeddings = Embeddings::build(&train_series, cfg)?;
    let mut records = Vec::new();
    for repetition in 0..cfg.repetitions {
        let i_seed = init_seed(cfg.master_seed, repetition);
        let init = draw_init(cfg.master_seed, repetition);
        for &approach in &cfg.approaches {
            let t_seed = train_seed(cfg.master_seed, repetition, approach);
            log::info!(
                "running {} approach {} repetition {repetition}",
                cfg.system.label(),
                approach.label()
            );
            let cell = run_cell(cfg, approach, repetition, &init, embeddings.get(approach.variant()), &test_series);
            let record = match cell {
                Ok(out_cell) => {
                    let stem = format!("{}_{}", approach.label(), repetition);
                    dataset::atomic_write(
                        &out.join(format!("predictions_{stem}.csv")),
                        out_cell.predictions_csv.as_bytes(),
                    )?;
                    if let Some(trace_csv) = out_cell.trace_csv {
                        let with_header = format!("iter,rho,grad_norm,skipped\n{trace_csv}");
                        dataset::atomic_write(&out.join(format!("trace_{stem}.csv")), with_header.as_bytes())?;
                    }
                    RunRecord {
                        approach,
                        repetition,
                        init_seed: i_seed,
                        train_seed: t_seed,
                        solver: out_cell.solver.to_string(),
                        train_skipped: out_cell.train_skipped,
                        best_smoothed_rho: out_cell.best_smoothed_rho,
                        outcome: Ok(out_cell.score),
                    }
                }
                Err(Error::Io { path, source }) => return Err(Error::Io { path, source }),
                Err(e) => {
                    log::warn!(
                        "{} approach {} repetition {repetition} failed: {e}",
                        cfg.system.label(),
                        approach.label()
                    );
                    RunRecord {
                        approach,
                        repetition,
                        init_seed: i_seed,
                        train_seed: t_seed,
                        solver: String::new(),
                        train_skipped: 0,
                        best_smoothed_rho: f64::NAN,
                        outcome: Err(e.to_string()),
                    }
                }
            };
            records.push(record);
        }
    }

    let report = ExperimentReport { system_label: cfg.system.label().to_string(), records };
    dataset::atomic_write(&out.join("report.csv"), crate::report::report_csv(&report).as_bytes())?;
    dataset::atomic_write(&out.join("aggregate.csv"), crate::report::aggregate_csv(&report).as_bytes())?;
    dataset::atomic_write(&out.join("table.txt"), crate::report::emit_table(&report).as_bytes())?;
    Ok(report)
}

/// Generates, burns in, subsamples, and splits without running any model;
/// the `generate` CLI verb and tests share this path with `run_experiment`.
pub fn prepare_series(cfg: &ExperimentConfig) -> Result<(TimeSeries, TimeSeries)> {
    let total = cfg.n_train + cfg.n_test;
    let source_len = cfg.burn_in + systems::source_length_for(total, cfg.sampling_alpha);
    let source = systems::generate(&cfg.system, source_len)?;
    let burned = source.window(cfg.burn_in, source.len())?;
    let scheme =
        SamplingScheme { alpha_max: cfg.sampling_alpha, rng_seed: sampling_seed(cfg.master_seed) };
    let sampled = systems::subsample_irregular(&burned, &scheme, total)?;
    Ok((sampled.window(0, cfg.n_train)?, sampled.window(cfg.n_train, total)?))
}
