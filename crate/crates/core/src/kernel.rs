//! The parametric composite kernel: a linear combination of triangular,
//! Gaussian, Laplace, locally periodic, and quadratic terms with amplitudes
//! `gamma[0..5]` and scales `sigma[0..6]`, together with Gram-matrix assembly
//! and analytic derivatives with respect to every parameter.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Number of free kernel parameters: five amplitudes plus six scales.
pub const PARAM_COUNT: usize = 11;

/// Scales enter as divisors; their magnitude is clamped at evaluation time so
/// a gradient step through zero cannot divide by zero. Stored values are
/// never mutated.
pub const SCALE_FLOOR: f64 = 1e-8;

const TERM_NAMES: [&str; 5] = ["triangular", "gaussian", "laplace", "locally_periodic", "quadratic"];

/// Amplitudes and scales of the composite kernel, in the fixed parameter
/// order (gamma0..gamma4, sigma0..sigma5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub gamma: [f64; 5],
    pub sigma: [f64; 6],
}

impl KernelParams {
    pub fn new(gamma: [f64; 5], sigma: [f64; 6]) -> Result<Self> {
        let p = KernelParams { gamma, sigma };
        if !p.is_finite() {
            return Err(Error::Input("kernel parameters must be finite".into()));
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.iter().chain(self.sigma.iter()).all(|v| v.is_finite())
    }

    pub fn from_flat(theta: &[f64; PARAM_COUNT]) -> Self {
        let mut gamma = [0.0; 5];
        let mut sigma = [0.0; 6];
        gamma.copy_from_slice(&theta[..5]);
        sigma.copy_from_slice(&theta[5..]);
        KernelParams { gamma, sigma }
    }

    pub fn to_flat(&self) -> [f64; PARAM_COUNT] {
        let mut out = [0.0; PARAM_COUNT];
        out[..5].copy_from_slice(&self.gamma);
        out[5..].copy_from_slice(&self.sigma);
        out
    }

    /// Independent U(0,1) draw per component, the no-learning baseline and
    /// the gradient-descent starting point.
    pub fn sample_uniform(rng: &mut impl rand::Rng) -> Self {
        let mut theta = [0.0; PARAM_COUNT];
        for v in theta.iter_mut() {
            *v = rng.gen::<f64>();
        }
        KernelParams::from_flat(&theta)
    }

    /// Key=value rendering (gamma0..gamma4, sigma0..sigma5) for params files.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (i, g) in self.gamma.iter().enumerate() {
            out.push_str(&format!("gamma{i}={g:.17e}\n"));
        }
        for (i, s) in self.sigma.iter().enumerate() {
            out.push_str(&format!("sigma{i}={s:.17e}\n"));
        }
        out
    }

    /// Parses the key=value rendering produced by [`Self::to_config_string`].
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut gamma = [f64::NAN; 5];
        let mut sigma = [f64::NAN; 6];
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("expected key=value, got {line:?}")))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad number for {k}: {v:?}")))?;
            let k = k.trim();
            let slot = if let Some(i) = k.strip_prefix("gamma") {
                gamma.get_mut(i.parse::<usize>().map_err(|_| Error::Input(format!("bad key {k}")))?)
            } else if let Some(i) = k.strip_prefix("sigma") {
                sigma.get_mut(i.parse::<usize>().map_err(|_| Error::Input(format!("bad key {k}")))?)
            } else {
                None
            };
            match slot {
                Some(s) => *s = value,
                None => return Err(Error::Input(format!("unknown parameter key {k:?}"))),
            }
        }
        if gamma.iter().chain(sigma.iter()).any(|v| v.is_nan()) {
            return Err(Error::Input("params file is missing parameters".into()));
        }
        KernelParams::new(gamma, sigma)
    }

    /// FNV-1a over the parameter bit patterns; stable across runs, used to
    /// keep training traces light.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in self.to_flat() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

#[inline]
fn clamped(s: f64) -> f64 {
    if s.abs() >= SCALE_FLOOR {
        s
    } else if s.is_sign_negative() {
        -SCALE_FLOOR
    } else {
        SCALE_FLOOR
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let d = a - b;
        s += d * d;
    }
    s
}

/// The five terms of the composite kernel at squared distance `r2`.
#[inline]
fn terms(p: &KernelParams, r2: f64) -> [f64; 5] {
    let r = r2.sqrt();
    let s0 = clamped(p.sigma[0]);
    let s1 = clamped(p.sigma[1]);
    let s2 = clamped(p.sigma[2]);
    let s4 = p.sigma[4];
    let s5 = clamped(p.sigma[5]);
    let tri = (1.0 - r2 / (s0 * s0)).max(0.0);
    let gauss = (-r2 / (s1 * s1)).exp();
    let lap = (-r / (s2 * s2)).exp();
    let sin2 = (s4 * std::f64::consts::PI * r2).sin().powi(2);
    let periodic = (-p.sigma[3] * sin2).exp() * (-r2 / (s5 * s5)).exp();
    [
        p.gamma[0] * p.gamma[0] * tri,
        p.gamma[1] * p.gamma[1] * gauss,
        p.gamma[2] * p.gamma[2] * lap,
        p.gamma[3] * p.gamma[3] * periodic,
        p.gamma[4] * p.gamma[4] * r2,
    ]
}

#[inline]
fn eval_r2(p: &KernelParams, r2: f64) -> f64 {
    let t = terms(p, r2);
    t[0] + t[1] + t[2] + t[3] + t[4]
}

fn check_finite(p: &KernelParams, r2: f64, value: f64) -> Result<f64> {
    if value.is_finite() {
        return Ok(value);
    }
    let t = terms(p, r2);
    let name = t
        .iter()
        .position(|v| !v.is_finite())
        .map(|i| TERM_NAMES[i])
        .unwrap_or("sum");
    Err(Error::numeric(format!("kernel term {name}"), format!("non-finite at r2={r2}")))
}

/// Pointwise kernel value k(x, y).
pub fn eval(p: &KernelParams, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { left: x.len(), right: y.len() });
    }
    if x.is_empty() {
        return Err(Error::Input("kernel inputs must have dimension >= 1".into()));
    }
    let r2 = sq_dist(x, y);
    check_finite(p, r2, eval_r2(p, r2))
}

fn check_rows(xs: &ArrayView2<'_, f64>) -> Result<()> {
    if xs.nrows() == 0 || xs.ncols() == 0 {
        return Err(Error::Input("gram needs at least one point of dimension >= 1".into()));
    }
    Ok(())
}

/// Gram matrix K(X, X); the upper triangle is computed and mirrored, so the
/// result is symmetric by construction.
pub fn gram(p: &KernelParams, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_rows(&xs)?;
    let n = xs.nrows();
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let xi = xs.row(i);
        let xi = xi.as_slice().expect("row-major input");
        for j in i..n {
            let xj = xs.row(j);
            let r2 = sq_dist(xi, xj.as_slice().expect("row-major input"));
            let v = check_finite(p, r2, eval_r2(p, r2))?;
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// Kernel vector k(x, X) against every training row.
pub fn cross_row(p: &KernelParams, x: &[f64], xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if x.len() != xs.ncols() {
        return Err(Error::DimensionMismatch { left: x.len(), right: xs.ncols() });
    }
    let mut out = Array1::<f64>::zeros(xs.nrows());
    for (j, xj) in xs.rows().into_iter().enumerate() {
        let r2 = sq_dist(x, xj.as_slice().expect("row-major input"));
        out[j] = check_finite(p, r2, eval_r2(p, r2))?;
    }
    Ok(out)
}

/// Rectangular kernel matrix K(A, B) between two point sets.
pub fn cross_matrix(
    p: &KernelParams,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { left: a.ncols(), right: b.ncols() });
    }
    let mut out = Array2::<f64>::zeros((a.nrows(), b.nrows()));
    for (i, ai) in a.rows().into_iter().enumerate() {
        let ai = ai.as_slice().expect("row-major input");
        for (j, bj) in b.rows().into_iter().enumerate() {
            let r2 = sq_dist(ai, bj.as_slice().expect("row-major input"));
            out[[i, j]] = check_finite(p, r2, eval_r2(p, r2))?;
        }
    }
    Ok(out)
}

/// All eleven partial derivatives of k at squared distance `r2`, in
/// parameter order.
#[inline]
fn term_gradients(p: &KernelParams, r2: f64) -> [f64; PARAM_COUNT] {
    let r = r2.sqrt();
    let s0 = clamped(p.sigma[0]);
    let s1 = clamped(p.sigma[1]);
    let s2 = clamped(p.sigma[2]);
    let s3 = p.sigma[3];
    let s4 = p.sigma[4];
    let s5 = clamped(p.sigma[5]);
    let tri = (1.0 - r2 / (s0 * s0)).max(0.0);
    let gauss = (-r2 / (s1 * s1)).exp();
    let lap = (-r / (s2 * s2)).exp();
    let angle = s4 * std::f64::consts::PI * r2;
    let sin2 = angle.sin().powi(2);
    let periodic = (-s3 * sin2).exp() * (-r2 / (s5 * s5)).exp();
    // the clamp is flat below the floor, so scale gradients vanish there
    let live = |raw: f64| if raw.abs() >= SCALE_FLOOR { 1.0 } else { 0.0 };
    [
        2.0 * p.gamma[0] * tri,
        2.0 * p.gamma[1] * gauss,
        2.0 * p.gamma[2] * lap,
        2.0 * p.gamma[3] * periodic,
        2.0 * p.gamma[4] * r2,
        if tri > 0.0 {
            p.gamma[0] * p.gamma[0] * 2.0 * r2 / (s0 * s0 * s0) * live(p.sigma[0])
        } else {
            0.0
        },
        p.gamma[1] * p.gamma[1] * gauss * 2.0 * r2 / (s1 * s1 * s1) * live(p.sigma[1]),
        p.gamma[2] * p.gamma[2] * lap * 2.0 * r / (s2 * s2 * s2) * live(p.sigma[2]),
        p.gamma[3] * p.gamma[3] * periodic * (-sin2),
        p.gamma[3] * p.gamma[3] * periodic * (-s3 * (2.0 * angle).sin() * std::f64::consts::PI * r2),
        p.gamma[3] * p.gamma[3] * periodic * 2.0 * r2 / (s5 * s5 * s5) * live(p.sigma[5]),
    ]
}

/// The eleven matrices dK(X,X)/d(theta_k), in parameter order
/// (gamma0..gamma4, sigma0..sigma5).
pub fn gram_gradient(p: &KernelParams, xs: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    check_rows(&xs)?;
    let n = xs.nrows();
    let mut out: Vec<Array2<f64>> = (0..PARAM_COUNT).map(|_| Array2::zeros((n, n))).collect();
    for i in 0..n {
        let xi = xs.row(i);
        let xi = xi.as_slice().expect("row-major input");
        for j in i..n {
            let xj = xs.row(j);
            let r2 = sq_dist(xi, xj.as_slice().expect("row-major input"));
            let g = term_gradients(p, r2);
            for (k, gk) in g.iter().enumerate() {
                if !gk.is_finite() {
                    return Err(Error::numeric(
                        "kernel gradient",
                        format!("non-finite derivative of parameter {k} at r2={r2}"),
                    ));
                }
                out[k][[i, j]] = *gk;
                out[k][[j, i]] = *gk;
            }
        }
    }
    Ok(out)
}
