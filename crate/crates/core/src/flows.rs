//! Kernel learning by minibatch gradient descent on the cross-validation
//! loss rho = 1 - (half-batch quadratic form) / (full-batch quadratic form),
//! where each quadratic form is Yᵀ(K + nugget·I)⁻¹Y summed over target
//! columns. A kernel is good when refitting on half the data loses little.
//!
//! The quadratic forms are solved by LU with partial pivoting rather than
//! Cholesky: the composite kernel's quadratic term leaves the regularized
//! Gram matrix indefinite for many parameter draws, and those draws must
//! still produce a loss value for descent to escape them. On an indefinite
//! matrix a quadratic form can be negative and the loss can leave [0, 1];
//! that is logged, and only a vanishing denominator (degenerate targets) is
//! an error.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddedDataset;
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams, PARAM_COUNT};
use crate::linalg;

/// Iterations contributing to the moving average that selects the best
/// parameters.
pub const SMOOTHING_WINDOW: usize = 50;

/// Gradient steps are clipped at this Euclidean norm; near-singular systems
/// occasionally produce explosive gradients.
pub const GRADIENT_CLIP: f64 = 1e3;

/// Fraction of skipped steps above which a training run is abandoned.
pub const MAX_SKIP_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug)]
pub struct KFConfig {
    /// Minibatch size M; the half batch has M/2 rows.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub nugget: f64,
    pub rng_seed: u64,
}

impl Default for KFConfig {
    fn default() -> Self {
        KFConfig {
            batch_size: 100,
            learning_rate: 0.1,
            iterations: 1000,
            nugget: 1e-6,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub iteration: usize,
    /// Loss at the parameters held entering this iteration; NaN if skipped.
    pub rho: f64,
    pub smoothed_rho: f64,
    pub grad_norm: f64,
    pub skipped: bool,
    pub theta_hash: u64,
}

#[derive(Clone, Debug)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub best_params: KernelParams,
    pub best_smoothed_rho: f64,
    pub final_params: KernelParams,
    pub skipped_steps: usize,
}

fn quadratic_form_and_coeffs(
    params: &KernelParams,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    nugget: f64,
) -> Result<(f64, Array2<f64>)> {
    let mut k = kernel::gram(params, inputs)?;
    for i in 0..k.nrows() {
        k[[i, i]] += nugget;
    }
    let coeffs = linalg::lu_solve(k.view(), targets)?;
    let value = targets.iter().zip(coeffs.iter()).map(|(y, c)| y * c).sum();
    Ok((value, coeffs))
}

fn select_rows(data: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((idx.len(), data.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&data.row(i));
    }
    out
}

fn check_beta(batch_len: usize, beta_idx: &[usize]) -> Result<()> {
    if beta_idx.is_empty() {
        return Err(Error::Input("beta subset must be non-empty".into()));
    }
    if beta_idx.iter().any(|&i| i >= batch_len) {
        return Err(Error::Input("beta index out of batch range".into()));
    }
    Ok(())
}

fn check_denominator(denominator: f64) -> Result<()> {
    if denominator == 0.0 || !denominator.is_finite() {
        return Err(Error::numeric(
            "rho",
            format!("degenerate denominator {denominator} (zero targets?)"),
        ));
    }
    Ok(())
}

/// The loss for one batch: `beta_idx` selects the half batch within the
/// given rows. Vector-valued targets contribute the sum of per-column
/// quadratic forms.
pub fn rho(
    params: &KernelParams,
    batch_inputs: ArrayView2<'_, f64>,
    batch_targets: ArrayView2<'_, f64>,
    beta_idx: &[usize],
    nugget: f64,
) -> Result<f64> {
    check_beta(batch_inputs.nrows(), beta_idx)?;
    let beta_inputs = select_rows(batch_inputs, beta_idx);
    let beta_targets = select_rows(batch_targets, beta_idx);
    let (numerator, _) =
        quadratic_form_and_coeffs(params, beta_inputs.view(), beta_targets.view(), nugget)?;
    let (denominator, _) = quadratic_form_and_coeffs(params, batch_inputs, batch_targets, nugget)?;
    check_denominator(denominator)?;
    let value = 1.0 - numerator / denominator;
    if !value.is_finite() {
        return Err(Error::numeric("rho", "non-finite loss"));
    }
    if !(-1e-10..=1.0 + 1e-10).contains(&value) {
        log::debug!("rho outside [0,1]: {value} (nugget {nugget})");
    }
    Ok(value)
}

/// d(Yᵀ A⁻¹ Y)/d(theta_k) = -(A⁻¹Y)ᵀ (dK/d theta_k) (A⁻¹Y), contracted as a
/// Frobenius inner product with C·Cᵀ.
fn quadratic_form_gradient(
    params: &KernelParams,
    inputs: ArrayView2<'_, f64>,
    coeffs: &Array2<f64>,
) -> Result<[f64; PARAM_COUNT]> {
    let grads = kernel::gram_gradient(params, inputs)?;
    let outer = coeffs.dot(&coeffs.t());
    let mut out = [0.0; PARAM_COUNT];
    for (k, g) in grads.iter().enumerate() {
        out[k] = -g.iter().zip(outer.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(out)
}

fn rho_value_and_gradient(
    params: &KernelParams,
    batch_inputs: ArrayView2<'_, f64>,
    batch_targets: ArrayView2<'_, f64>,
    beta_idx: &[usize],
    nugget: f64,
) -> Result<(f64, [f64; PARAM_COUNT])> {
    check_beta(batch_inputs.nrows(), beta_idx)?;
    let beta_inputs = select_rows(batch_inputs, beta_idx);
    let beta_targets = select_rows(batch_targets, beta_idx);
    let (numerator, beta_coeffs) =
        quadratic_form_and_coeffs(params, beta_inputs.view(), beta_targets.view(), nugget)?;
    let (denominator, batch_coeffs) =
        quadratic_form_and_coeffs(params, batch_inputs, batch_targets, nugget)?;
    check_denominator(denominator)?;
    let value = 1.0 - numerator / denominator;
    if !value.is_finite() {
        return Err(Error::numeric("rho", "non-finite loss"));
    }
    let d_num = quadratic_form_gradient(params, beta_inputs.view(), &beta_coeffs)?;
    let d_den = quadratic_form_gradient(params, batch_inputs, &batch_coeffs)?;
    let mut grad = [0.0; PARAM_COUNT];
    for k in 0..PARAM_COUNT {
        grad[k] = (numerator * d_den[k] - d_num[k] * denominator) / (denominator * denominator);
        if !grad[k].is_finite() {
            return Err(Error::numeric("rho gradient", format!("non-finite component {k}")));
        }
    }
    Ok((value, grad))
}

/// Analytic gradient of the loss with respect to
/// (gamma0..gamma4, sigma0..sigma5).
pub fn rho_gradient(
    params: &KernelParams,
    batch_inputs: ArrayView2<'_, f64>,
    batch_targets: ArrayView2<'_, f64>,
    beta_idx: &[usize],
    nugget: f64,
) -> Result<[f64; PARAM_COUNT]> {
    rho_value_and_gradient(params, batch_inputs, batch_targets, beta_idx, nugget).map(|(_, g)| g)
}

/// Minibatch gradient descent over the dataset. Each iteration draws a fresh
/// batch without replacement, a fresh half batch within it, and steps
/// against the gradient; steps whose linear systems fail are skipped and
/// counted. Deterministic given the seed.
pub fn train(data: &EmbeddedDataset, cfg: &KFConfig, init: &KernelParams) -> Result<TrainTrace> {
    train_with_sink(data, cfg, init, None)
}

/// As [`train`], optionally emitting `iter,rho,grad_norm,skipped` lines.
pub fn train_with_sink(
    data: &EmbeddedDataset,
    cfg: &KFConfig,
    init: &KernelParams,
    mut sink: Option<&mut dyn Write>,
) -> Result<TrainTrace> {
    let n = data.len();
    if cfg.batch_size < 2 || cfg.batch_size % 2 != 0 {
        return Err(Error::Config(format!("batch size must be even and >= 2, got {}", cfg.batch_size)));
    }
    if cfg.batch_size > n {
        return Err(Error::Config(format!("batch size {} exceeds dataset size {n}", cfg.batch_size)));
    }
    if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.learning_rate)));
    }
    if !(cfg.nugget >= 0.0) {
        return Err(Error::Config(format!("nugget must be >= 0, got {}", cfg.nugget)));
    }
    if !init.is_finite() {
        return Err(Error::Input("initial kernel parameters must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut theta = *init;
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut window: VecDeque<f64> = VecDeque::with_capacity(SMOOTHING_WINDOW);
    let mut window_sum = 0.0;
    let mut best = *init;
    let mut best_smoothed = f64::INFINITY;
    let mut skipped = 0usize;

    for iteration in 0..cfg.iterations {
        let pi = rand::seq::index::sample(&mut rng, n, cfg.batch_size).into_vec();
        let beta =
            rand::seq::index::sample(&mut rng, cfg.batch_size, cfg.batch_size / 2).into_vec();
        let batch_inputs = select_rows(data.inputs.view(), &pi);
        let batch_targets = select_rows(data.targets.view(), &pi);

        let step = rho_value_and_gradient(
            &theta,
            batch_inputs.view(),
            batch_targets.view(),
            &beta,
            cfg.nugget,
        );
        let row = match step {
            Ok((value, mut grad)) => {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > GRADIENT_CLIP {
                    let scale = GRADIENT_CLIP / norm;
                    for g in grad.iter_mut() {
                        *g *= scale;
                    }
                }
                let hash = theta.fingerprint();
                // values outside [0,1] come from indefinite batch systems and
                // say nothing about kernel quality; keep them out of the
                // moving average that picks the best parameters
                let smoothed = if (-1e-10..=1.0 + 1e-10).contains(&value) {
                    if window.len() == SMOOTHING_WINDOW {
                        window_sum -= window.pop_front().unwrap();
                    }
                    window.push_back(value);
                    window_sum += value;
                    let smoothed = window_sum / window.len() as f64;
                    // a short window is a lucky-batch magnet, not an average;
                    // only a full window may nominate the best parameters
                    if window.len() == SMOOTHING_WINDOW && smoothed < best_smoothed {
                        best_smoothed = smoothed;
                        best = theta;
                    }
                    smoothed
                } else {
                    f64::NAN
                };
                let mut flat = theta.to_flat();
                for (t, g) in flat.iter_mut().zip(grad.iter()) {
                    *t -= cfg.learning_rate * g;
                }
                theta = KernelParams::from_flat(&flat);
                TraceRow {
                    iteration,
                    rho: value,
                    smoothed_rho: smoothed,
                    grad_norm: norm,
                    skipped: false,
                    theta_hash: hash,
                }
            }
            Err(Error::Numeric { .. }) | Err(Error::Fit { .. }) => {
                skipped += 1;
                TraceRow {
                    iteration,
                    rho: f64::NAN,
                    smoothed_rho: f64::NAN,
                    grad_norm: f64::NAN,
                    skipped: true,
                    theta_hash: theta.fingerprint(),
                }
            }
            Err(other) => return Err(other),
        };
        if let Some(out) = sink.as_deref_mut() {
            writeln!(out, "{},{},{},{}", row.iteration, row.rho, row.grad_norm, u8::from(row.skipped))
                .map_err(|e| Error::io("trace sink", e))?;
        }
        rows.push(row);
    }

    if cfg.iterations > 0 && skipped as f64 > MAX_SKIP_FRACTION * cfg.iterations as f64 {
        return Err(Error::Training { skipped, total: cfg.iterations });
    }
    if best_smoothed.is_infinite() {
        best = theta;
    }
    Ok(TrainTrace {
        rows,
        best_params: best,
        best_smoothed_rho: best_smoothed,
        final_params: theta,
        skipped_steps: skipped,
    })
}


#[cfg(test)]
mod scratch {
    use super::*;
    use crate::embedding::embed_irregular;
    use crate::systems::{henon_orbit, subsample_irregular, SamplingScheme};
    use rand_chacha::ChaCha8Rng;

    #[test]
    #[ignore]
    fn henon_diag() {
        let orbit = henon_orbit(1.4, 0.3, [0.0, 0.0], 3000).unwrap();
        let burned = orbit.window(1000, 3000).unwrap();
        let sub = subsample_irregular(&burned, &SamplingScheme { alpha_max: 3, rng_seed: 11 }, 600)
            .unwrap();
        let data = embed_irregular(&sub, 1).unwrap();
        for seed in 0..5u64 {
            let cfg = KFConfig {
                batch_size: 100,
                learning_rate: 0.1,
                iterations: 1000,
                nugget: 1e-6,
                rng_seed: seed,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let init = KernelParams::sample_uniform(&mut rng);
            let trace = train(&data, &cfg, &init).unwrap();
            let acc: Vec<&TraceRow> = trace.rows.iter().filter(|r| !r.skipped).collect();
            let first = acc.first().unwrap().rho;
            let lastsm: Vec<f64> = acc[acc.len().saturating_sub(100)..].iter().map(|r| r.smoothed_rho).collect();
            let mut s = lastsm.clone(); s.sort_by(|a,b| a.partial_cmp(b).unwrap());
            println!("seed {seed}: first_rho={first:.4} median_last100={:.4} best_smoothed={:.4} skipped={}",
                s[s.len()/2], trace.best_smoothed_rho, trace.skipped_steps);
            println!("  init  gamma={:?} sigma={:?}", init.gamma.map(|v| (v*100.0).round()/100.0), init.sigma.map(|v| (v*100.0).round()/100.0));
            let f = trace.final_params;
            println!("  final gamma={:?} sigma={:?}", f.gamma.map(|v| (v*100.0).round()/100.0), f.sigma.map(|v| (v*100.0).round()/100.0));
            let b = trace.best_params;
            println!("  best  gamma={:?} sigma={:?}", b.gamma.map(|v| (v*100.0).round()/100.0), b.sigma.map(|v| (v*100.0).round()/100.0));
            // raw rho every 100 iters
            let samples: Vec<String> = acc.iter().step_by(100).map(|r| format!("{}:{:.3}", r.iteration, r.rho)).collect();
            println!("  rho trail: {}", samples.join(" "));
        }
    }
}
