//! Ground-truth trajectory generation: the Hénon map, the Van der Pol
//! oscillator, the Lorenz system, and the irregular subsampling scheme that
//! keeps every sample a random multiple of the base step apart.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::TimeSeries;
use crate::error::{Error, Result};

/// Coordinates beyond this magnitude count as a diverged orbit.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// A benchmark system with its parameters, initial state, and (for the
/// continuous systems) integration step settings.
#[derive(Clone, Copy, Debug)]
pub enum SystemSpec {
    Henon {
        a: f64,
        b: f64,
        initial: [f64; 2],
    },
    VanDerPol {
        epsilon: f64,
        initial: [f64; 2],
        base_step: f64,
        micro_substeps: usize,
    },
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
        initial: [f64; 3],
        base_step: f64,
        micro_substeps: usize,
    },
}

impl SystemSpec {
    pub fn henon_default() -> Self {
        SystemSpec::Henon { a: 1.4, b: 0.3, initial: [0.0, 0.0] }
    }

    /// epsilon = 0.01 makes the fast manifold stiff; the fine micro-step
    /// keeps the relaxation spikes resolved.
    pub fn van_der_pol_default() -> Self {
        SystemSpec::VanDerPol {
            epsilon: 0.01,
            initial: [0.0, 0.0],
            base_step: 0.001,
            micro_substeps: 100,
        }
    }

    pub fn lorenz_default() -> Self {
        SystemSpec::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            initial: [1.0, 1.0, 1.0],
            base_step: 0.01,
            micro_substeps: 4,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Henon { .. } | SystemSpec::VanDerPol { .. } => 2,
            SystemSpec::Lorenz { .. } => 3,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, SystemSpec::Henon { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            SystemSpec::Henon { .. } => "henon",
            SystemSpec::VanDerPol { .. } => "vanderpol",
            SystemSpec::Lorenz { .. } => "lorenz",
        }
    }

    /// The recorded sampling step: the map's unit clock for Hénon, the base
    /// step for the continuous systems.
    pub fn base_step(&self) -> f64 {
        match self {
            SystemSpec::Henon { .. } => 1.0,
            SystemSpec::VanDerPol { base_step, .. } | SystemSpec::Lorenz { base_step, .. } => {
                *base_step
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SystemSpec::Henon { a, b, initial } => {
                if ![a, b, initial[0], initial[1]].iter().all(|v| v.is_finite()) {
                    return Err(Error::Input("henon parameters must be finite".into()));
                }
            }
            SystemSpec::VanDerPol { epsilon, base_step, micro_substeps, .. } => {
                if !(epsilon > 0.0) {
                    return Err(Error::Input("van der pol epsilon must be > 0".into()));
                }
                check_step(base_step, micro_substeps)?;
            }
            SystemSpec::Lorenz { base_step, micro_substeps, .. } => {
                check_step(base_step, micro_substeps)?;
            }
        }
        Ok(())
    }
}

fn check_step(base_step: f64, micro_substeps: usize) -> Result<()> {
    if !(base_step > 0.0) {
        return Err(Error::Input("base step must be > 0".into()));
    }
    if micro_substeps == 0 {
        return Err(Error::Input("micro_substeps must be >= 1".into()));
    }
    Ok(())
}

/// Iterates x' = 1 - a x^2 + y, y' = b x; times are the step indices.
pub fn henon_orbit(a: f64, b: f64, initial: [f64; 2], n: usize) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::Input("orbit length must be >= 1".into()));
    }
    let mut states = Array2::<f64>::zeros((n, 2));
    let (mut x, mut y) = (initial[0], initial[1]);
    for k in 0..n {
        if !x.is_finite() || !y.is_finite() || x.abs() > DIVERGENCE_LIMIT || y.abs() > DIVERGENCE_LIMIT
        {
            return Err(Error::Divergence { step: k });
        }
        states[[k, 0]] = x;
        states[[k, 1]] = y;
        let next_x = 1.0 - a * x * x + y;
        let next_y = b * x;
        x = next_x;
        y = next_y;
    }
    TimeSeries::new((0..n).map(|k| k as f64).collect(), states)
}

/// One classical fourth-order Runge-Kutta step of size `h`.
fn rk4_step(field: &impl Fn(&[f64], &mut [f64]), state: &mut [f64], h: f64, scratch: &mut [f64]) {
    let d = state.len();
    let (k1, rest) = scratch.split_at_mut(d);
    let (k2, rest) = rest.split_at_mut(d);
    let (k3, rest) = rest.split_at_mut(d);
    let (k4, tmp) = rest.split_at_mut(d);
    field(state, k1);
    for i in 0..d {
        tmp[i] = state[i] + 0.5 * h * k1[i];
    }
    field(tmp, k2);
    for i in 0..d {
        tmp[i] = state[i] + 0.5 * h * k2[i];
    }
    field(tmp, k3);
    for i in 0..d {
        tmp[i] = state[i] + h * k3[i];
    }
    field(tmp, k4);
    for i in 0..d {
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// RK4 trajectory of an arbitrary autonomous field, recording every
/// `base_step` with `micro_substeps` internal sub-steps. Exposed so tests can
/// drive analytic fields through the same path the benchmark systems use.
pub fn integrate_field(
    field: impl Fn(&[f64], &mut [f64]),
    initial: &[f64],
    base_step: f64,
    micro_substeps: usize,
    n_samples: usize,
) -> Result<TimeSeries> {
    check_step(base_step, micro_substeps)?;
    if n_samples < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let d = initial.len();
    let h = base_step / micro_substeps as f64;
    let mut state = initial.to_vec();
    let mut scratch = vec![0.0; 5 * d];
    let mut states = Array2::<f64>::zeros((n_samples, d));
    for k in 0..n_samples {
        if state.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step: k });
        }
        for c in 0..d {
            states[[k, c]] = state[c];
        }
        if k + 1 < n_samples {
            for _ in 0..micro_substeps {
                rk4_step(&field, &mut state, h, &mut scratch);
            }
        }
    }
    let times = (0..n_samples).map(|k| k as f64 * base_step).collect();
    TimeSeries::new(times, states)
}

fn van_der_pol_field(epsilon: f64) -> impl Fn(&[f64], &mut [f64]) {
    move |s, out| {
        let (x, y) = (s[0], s[1]);
        out[0] = (y - 6.75 * x * x * (x + 1.0)) / epsilon;
        out[1] = -0.5 - x;
    }
}

fn lorenz_field(sigma: f64, rho: f64, beta: f64) -> impl Fn(&[f64], &mut [f64]) {
    move |s, out| {
        let (x, y, z) = (s[0], s[1], s[2]);
        out[0] = sigma * (y - x);
        out[1] = x * (rho - z) - y;
        out[2] = x * y - beta * z;
    }
}

/// RK4 trajectory of a continuous-time benchmark system.
pub fn integrate(spec: &SystemSpec, n_samples: usize) -> Result<TimeSeries> {
    spec.validate()?;
    match *spec {
        SystemSpec::Henon { .. } => {
            Err(Error::Input("henon is a discrete map; use henon_orbit".into()))
        }
        SystemSpec::VanDerPol { epsilon, initial, base_step, micro_substeps } => integrate_field(
            van_der_pol_field(epsilon),
            &initial,
            base_step,
            micro_substeps,
            n_samples,
        ),
        SystemSpec::Lorenz { sigma, rho, beta, initial, base_step, micro_substeps } => {
            integrate_field(lorenz_field(sigma, rho, beta), &initial, base_step, micro_substeps, n_samples)
        }
    }
}

/// Trajectory of any benchmark system on its natural clock.
pub fn generate(spec: &SystemSpec, n_samples: usize) -> Result<TimeSeries> {
    spec.validate()?;
    match *spec {
        SystemSpec::Henon { a, b, initial } => henon_orbit(a, b, initial, n_samples),
        _ => integrate(spec, n_samples),
    }
}

/// Irregular subsampling: consecutive kept samples are a random 1..=alpha
/// source steps apart.
#[derive(Clone, Copy, Debug)]
pub struct SamplingScheme {
    pub alpha_max: u32,
    pub rng_seed: u64,
}

/// Keeps `count` samples of `ts`, starting at the first, with i.i.d. uniform
/// gaps; output times are the source times of the kept samples.
pub fn subsample_irregular(ts: &TimeSeries, scheme: &SamplingScheme, count: usize) -> Result<TimeSeries> {
    if scheme.alpha_max == 0 {
        return Err(Error::Input("alpha must be >= 1".into()));
    }
    if count == 0 {
        return Err(Error::Input("requested length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.rng_seed);
    let mut indices = Vec::with_capacity(count);
    let mut idx = 0usize;
    for _ in 0..count {
        if idx >= ts.len() {
            return Err(Error::Length { needed: idx + 1, available: ts.len() });
        }
        indices.push(idx);
        idx += rng.gen_range(1..=scheme.alpha_max) as usize;
    }
    let mut states = Array2::<f64>::zeros((count, ts.dim()));
    let mut times = Vec::with_capacity(count);
    for (row, &i) in indices.iter().enumerate() {
        times.push(ts.times()[i]);
        for c in 0..ts.dim() {
            states[[row, c]] = ts.states()[[i, c]];
        }
    }
    TimeSeries::new(times, states)
}

/// Source samples that guarantee `count` subsampled points in the worst case.
pub fn source_length_for(count: usize, alpha_max: u32) -> usize {
    (count - 1) * alpha_max as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn henon_hand_steps() {
        let ts = henon_orbit(1.4, 0.3, [0.0, 0.0], 3).unwrap();
        assert_eq!(ts.state(0), &[0.0, 0.0]);
        assert_eq!(ts.state(1), &[1.0, 0.0]);
        let s2 = ts.state(2);
        assert!((s2[0] - (-0.4)).abs() < 1e-15);
        assert!((s2[1] - 0.3).abs() < 1e-15);
        assert_eq!(ts.times(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn henon_constant_map() {
        let ts = henon_orbit(0.0, 0.0, [0.7, -0.2], 6).unwrap();
        // y0 feeds the first iterate; everything after is pinned at (1, 0)
        for k in 2..6 {
            assert_eq!(ts.state(k), &[1.0, 0.0]);
        }
        let zero_y = henon_orbit(0.0, 0.0, [-3.5, 0.0], 6).unwrap();
        for k in 1..6 {
            assert_eq!(zero_y.state(k), &[1.0, 0.0]);
        }
    }

    #[test]
    fn henon_divergence_reports_step() {
        match henon_orbit(-10.0, 0.3, [2.0, 0.0], 50) {
            Err(Error::Divergence { step }) => assert!(step > 0 && step < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn henon_orbit_stays_on_attractor() {
        let ts = henon_orbit(1.4, 0.3, [0.0, 0.0], 10_000).unwrap();
        let max_x = ts.states().column(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_y = ts.states().column(1).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_x <= 1.5, "max |x| = {max_x}");
        assert!(max_y <= 0.45, "max |y| = {max_y}");
    }

    #[test]
    fn linear_field_matches_exponential() {
        let ts = integrate_field(|s, out| out[0] = -s[0], &[1.0], 0.01, 1, 101).unwrap();
        let got = ts.states()[[100, 0]];
        assert!((got - (-1.0f64).exp()).abs() <= 1e-8, "{got}");
    }

    fn lorenz_at_t1(micro: usize) -> Vec<f64> {
        let spec = SystemSpec::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            initial: [1.0, 1.0, 1.0],
            base_step: 0.01,
            micro_substeps: micro,
        };
        integrate(&spec, 101).unwrap().state(100).to_vec()
    }

    #[test]
    fn lorenz_step_halving_is_tight() {
        // at the default micro-step, halving moves the state at t = 1 by
        // less than 1e-6 per coordinate
        let full = lorenz_at_t1(4);
        let half = lorenz_at_t1(8);
        for c in 0..3 {
            assert!((full[c] - half[c]).abs() <= 1e-6, "coordinate {c}");
        }
    }

    #[test]
    fn rk4_fourth_order_ratio() {
        let full = lorenz_at_t1(1);
        let half = lorenz_at_t1(2);
        let quarter = lorenz_at_t1(4);
        let e1: f64 = full.iter().zip(&half).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let e2: f64 =
            half.iter().zip(&quarter).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let ratio = e1 / e2;
        assert!(ratio >= 12.0, "step-halving error ratio {ratio}");
    }

    #[test]
    fn van_der_pol_stays_bounded() {
        let spec = SystemSpec::van_der_pol_default();
        // 10 time units at base_step 0.001
        let ts = integrate(&spec, 10_001).unwrap();
        let bound = ts.states().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(bound <= 10.0, "max coordinate {bound}");
    }

    #[test]
    fn subsample_identity_when_alpha_is_one() {
        let ts = henon_orbit(1.4, 0.3, [0.0, 0.0], 50).unwrap();
        let out =
            subsample_irregular(&ts, &SamplingScheme { alpha_max: 1, rng_seed: 7 }, 50).unwrap();
        assert_eq!(out.times(), ts.times());
        assert_eq!(out.states(), ts.states());
    }

    #[test]
    fn subsample_gaps_stay_in_range() {
        let ts = henon_orbit(1.4, 0.3, [0.0, 0.0], 400).unwrap();
        let out =
            subsample_irregular(&ts, &SamplingScheme { alpha_max: 3, rng_seed: 3 }, 100).unwrap();
        for w in out.times().windows(2) {
            let gap = w[1] - w[0];
            assert!((1.0..=3.0).contains(&gap) && gap.fract() == 0.0);
        }
    }

    #[test]
    fn subsample_times_are_increasing_subsequence_of_source() {
        let ts = integrate(&SystemSpec::lorenz_default(), 500).unwrap();
        let out =
            subsample_irregular(&ts, &SamplingScheme { alpha_max: 5, rng_seed: 9 }, 90).unwrap();
        let mut src = 0usize;
        for t in out.times() {
            while src < ts.len() && ts.times()[src] != *t {
                src += 1;
            }
            assert!(src < ts.len(), "time {t} not found in source order");
        }
        for w in out.times().windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn subsample_exhaustion_is_a_length_error() {
        let ts = henon_orbit(1.4, 0.3, [0.0, 0.0], 10).unwrap();
        match subsample_irregular(&ts, &SamplingScheme { alpha_max: 3, rng_seed: 1 }, 10) {
            Err(Error::Length { .. }) => {}
            other => panic!("expected length error, got {other:?}"),
        }
    }

    #[test]
    fn subsample_gap_frequencies_are_uniform() {
        let alpha = 3u32;
        let draws = 100_000usize;
        let len = source_length_for(draws + 1, alpha);
        let states = Array2::<f64>::zeros((len, 1));
        let ts = TimeSeries::new((0..len).map(|k| k as f64).collect(), states).unwrap();
        let out = subsample_irregular(
            &ts,
            &SamplingScheme { alpha_max: alpha, rng_seed: 42 },
            draws + 1,
        )
        .unwrap();
        let mut counts = vec![0usize; alpha as usize + 1];
        for w in out.times().windows(2) {
            counts[(w[1] - w[0]) as usize] += 1;
        }
        let expect = 1.0 / alpha as f64;
        for m in 1..=alpha as usize {
            let freq = counts[m] as f64 / draws as f64;
            assert!(
                (freq - expect).abs() <= 0.01 * expect,
                "multiplicity {m}: frequency {freq} vs {expect}"
            );
        }
    }

    #[test]
    fn determinism_given_seed() {
        let ts = integrate(&SystemSpec::lorenz_default(), 300).unwrap();
        let s = SamplingScheme { alpha_max: 5, rng_seed: 31 };
        let a = subsample_irregular(&ts, &s, 50).unwrap();
        let b = subsample_irregular(&ts, &s, 50).unwrap();
        assert_eq!(a.times(), b.times());
        assert_eq!(a.states(), b.states());
    }
}

#[cfg(test)]
mod scratch {
    use super::*;

    #[test]
    #[ignore]
    fn lorenz_halving_magnitude() {
        for micro in [1usize, 2, 4, 8] {
            let spec = SystemSpec::Lorenz {
                sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0,
                initial: [1.0, 1.0, 1.0], base_step: 0.01, micro_substeps: micro,
            };
            let s = integrate(&spec, 101).unwrap().state(100).to_vec();
            println!("micro {micro}: {s:?}");
        }
    }
}
