//! The kernel ridge regressor: prediction is K(x,X)(K(X,X) + nugget·I)⁻¹Y,
//! held as a Cholesky factor plus solved coefficients. The factor also yields
//! the pointwise error bound and the Newton basis, and new observations
//! extend the factor in place of a full refit.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams};
use crate::linalg;

/// A fitted kernel ridge model over N training pairs.
#[derive(Clone, Debug)]
pub struct FittedModel {
    params: KernelParams,
    train_inputs: Array2<f64>,
    train_targets: Array2<f64>,
    nugget: f64,
    chol: Array2<f64>,
    coeffs: Array2<f64>,
}

/// Fits the regressor: factorizes K(X,X) + nugget·I and solves for the
/// coefficient matrix shared by all target columns.
pub fn fit(
    params: &KernelParams,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    nugget: f64,
) -> Result<FittedModel> {
    if inputs.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch { left: inputs.nrows(), right: targets.nrows() });
    }
    if inputs.nrows() == 0 {
        return Err(Error::Input("cannot fit on zero points".into()));
    }
    if !(nugget >= 0.0) {
        return Err(Error::Input(format!("nugget must be >= 0, got {nugget}")));
    }
    if inputs.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("training data must be finite".into()));
    }
    let mut k = kernel::gram(params, inputs)?;
    for i in 0..k.nrows() {
        k[[i, i]] += nugget;
    }
    let chol = linalg::cholesky(k.view())?;
    let coeffs = linalg::cholesky_solve(&chol, targets);
    Ok(FittedModel {
        params: *params,
        train_inputs: inputs.to_owned(),
        train_targets: targets.to_owned(),
        nugget,
        chol,
        coeffs,
    })
}

/// Assembles a model from an already-computed factor and coefficients; the
/// experiment runner uses this to retry nugget levels on one Gram matrix.
pub(crate) fn from_parts(
    params: KernelParams,
    train_inputs: Array2<f64>,
    train_targets: Array2<f64>,
    nugget: f64,
    chol: Array2<f64>,
    coeffs: Array2<f64>,
) -> FittedModel {
    FittedModel { params, train_inputs, train_targets, nugget, chol, coeffs }
}

impl FittedModel {
    pub fn len(&self) -> usize {
        self.train_inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.train_inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.train_targets.ncols()
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn train_inputs(&self) -> ArrayView2<'_, f64> {
        self.train_inputs.view()
    }

    pub fn train_targets(&self) -> ArrayView2<'_, f64> {
        self.train_targets.view()
    }

    pub fn chol_factor(&self) -> &Array2<f64> {
        &self.chol
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    /// K(x,X)·C, a d-vector.
    pub fn predict(&self, x: &[f64]) -> Result<Array1<f64>> {
        let row = kernel::cross_row(&self.params, x, self.train_inputs.view())?;
        Ok(self.coeffs.t().dot(&row))
    }

    /// Pointwise standard-deviation bound
    /// sqrt(max(0, K(x,x) - K(x,X)(K+nugget·I)⁻¹K(X,x))).
    pub fn error_bound(&self, x: &[f64]) -> Result<f64> {
        let row = kernel::cross_row(&self.params, x, self.train_inputs.view())?;
        let col = row.insert_axis(Axis(1));
        let v = linalg::solve_lower(&self.chol, col.view());
        let explained: f64 = v.iter().map(|a| a * a).sum();
        let prior = kernel::eval(&self.params, x, x)?;
        Ok((prior - explained).max(0.0).sqrt())
    }

    /// Adds observations by extending the Cholesky factor with one block
    /// solve and a Schur-complement factorization; behavior matches a full
    /// refit on the union of the data.
    pub fn extend(&self, inputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<FittedModel> {
        if inputs.nrows() == 0 {
            return Ok(self.clone());
        }
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { left: inputs.ncols(), right: self.input_dim() });
        }
        if inputs.nrows() != targets.nrows() || targets.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch { left: inputs.nrows(), right: targets.nrows() });
        }
        let cross = kernel::cross_matrix(&self.params, self.train_inputs.view(), inputs)?;
        let mut corner = kernel::gram(&self.params, inputs)?;
        for i in 0..corner.nrows() {
            corner[[i, i]] += self.nugget;
        }
        let chol = linalg::extend_cholesky(&self.chol, cross.view(), corner.view())?;
        let n_old = self.train_inputs.nrows();
        let m = inputs.nrows();
        let mut all_inputs = Array2::<f64>::zeros((n_old + m, self.input_dim()));
        all_inputs.slice_mut(ndarray::s![..n_old, ..]).assign(&self.train_inputs);
        all_inputs.slice_mut(ndarray::s![n_old.., ..]).assign(&inputs);
        let mut all_targets = Array2::<f64>::zeros((n_old + m, self.output_dim()));
        all_targets.slice_mut(ndarray::s![..n_old, ..]).assign(&self.train_targets);
        all_targets.slice_mut(ndarray::s![n_old.., ..]).assign(&targets);
        let coeffs = linalg::cholesky_solve(&chol, all_targets.view());
        Ok(FittedModel {
            params: self.params,
            train_inputs: all_inputs,
            train_targets: all_targets,
            nugget: self.nugget,
            chol,
            coeffs,
        })
    }

    /// The RKHS-orthonormal basis induced by the factor: B = L⁻ᵀ with
    /// v_j(x) = sum_i B[i,j]·K(x, x_i).
    pub fn newton_basis(&self) -> NewtonBasis {
        NewtonBasis { back_transform: linalg::invert_lower_transpose(&self.chol) }
    }
}

/// Upper-triangular change of basis from kernel sections to the orthonormal
/// Newton functions.
#[derive(Clone, Debug)]
pub struct NewtonBasis {
    pub back_transform: Array2<f64>,
}

impl NewtonBasis {
    /// Evaluates every basis function at x given the kernel row K(x, X).
    pub fn evaluate(&self, kernel_row: &Array1<f64>) -> Array1<f64> {
        self.back_transform.t().dot(kernel_row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_only(amplitude: f64, scale: f64) -> KernelParams {
        KernelParams::new(
            [0.0, amplitude, 0.0, 0.0, 0.0],
            [1.0, scale, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    fn full_params() -> KernelParams {
        KernelParams::new([0.5, 0.9, 0.4, 0.3, 0.05], [1.2, 0.8, 1.1, 0.6, 0.9, 1.3]).unwrap()
    }

    /// Plain Gauss-Jordan elimination; the no-Cholesky oracle for solves.
    fn dense_solve(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let d = b.ncols();
        let mut m = a.clone();
        let mut x = b.clone();
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if m[[r, col]].abs() > m[[piv, col]].abs() {
                    piv = r;
                }
            }
            for c in 0..n {
                let t = m[[col, c]];
                m[[col, c]] = m[[piv, c]];
                m[[piv, c]] = t;
            }
            for c in 0..d {
                let t = x[[col, c]];
                x[[col, c]] = x[[piv, c]];
                x[[piv, c]] = t;
            }
            let pivot = m[[col, col]];
            for c in 0..n {
                m[[col, c]] /= pivot;
            }
            for c in 0..d {
                x[[col, c]] /= pivot;
            }
            for r in 0..n {
                if r != col {
                    let f = m[[r, col]];
                    for c in 0..n {
                        m[[r, c]] -= f * m[[col, c]];
                    }
                    for c in 0..d {
                        x[[r, c]] -= f * x[[col, c]];
                    }
                }
            }
        }
        x
    }

    /// Points with guaranteed pairwise separation, so interpolation stays
    /// well conditioned.
    fn separated_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((n, dim));
        let mut count = 0;
        while count < n {
            let cand: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let ok = (0..count).all(|i| {
                let d2: f64 =
                    (0..dim).map(|c| (out[[i, c]] - cand[c]).powi(2)).sum();
                d2 > 0.25
            });
            if ok {
                for c in 0..dim {
                    out[[count, c]] = cand[c];
                }
                count += 1;
            }
        }
        out
    }

    #[test]
    fn scalar_fit_solves_in_closed_form() {
        let p = gaussian_only(2.0, 1.0); // K(x,x) = 4
        let x = array![[0.3]];
        let y = array![[2.0]];
        let m = fit(&p, x.view(), y.view(), 0.0).unwrap();
        assert!((m.coeffs()[[0, 0]] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn interpolation_reproduces_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = gaussian_only(1.0, 1.0);
        let xs = separated_points(&mut rng, 10, 2);
        let ys = Array2::from_shape_fn((10, 1), |_| rng.gen_range(-2.0..2.0));
        let m = fit(&p, xs.view(), ys.view(), 1e-10).unwrap();
        let max_y = ys.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..10 {
            let pred = m.predict(xs.row(i).as_slice().unwrap()).unwrap();
            assert!((pred[0] - ys[[i, 0]]).abs() <= 1e-5 * max_y);
        }
    }

    #[test]
    fn huge_nugget_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = full_params();
        let xs = separated_points(&mut rng, 6, 2);
        let ys = Array2::from_shape_fn((6, 2), |_| rng.gen_range(0.5..2.0));
        let lambda = 1e6;
        let m = fit(&p, xs.view(), ys.view(), lambda).unwrap();
        for i in 0..6 {
            for c in 0..2 {
                let expect = ys[[i, c]] / lambda;
                let got = m.coeffs()[[i, c]];
                assert!(((got - expect) / expect).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn single_point_prediction_closed_form() {
        let p = gaussian_only(1.3, 0.9);
        let xs = array![[0.5, -0.5]];
        let ys = array![[2.0, -1.0]];
        let lambda = 0.1;
        let m = fit(&p, xs.view(), ys.view(), lambda).unwrap();
        let probe = [0.8, 0.1];
        let k = kernel::eval(&p, &probe, &[0.5, -0.5]).unwrap();
        let k11 = kernel::eval(&p, &[0.5, -0.5], &[0.5, -0.5]).unwrap();
        let pred = m.predict(&probe).unwrap();
        assert!((pred[0] - k * 2.0 / (k11 + lambda)).abs() < 1e-12);
        assert!((pred[1] - k * (-1.0) / (k11 + lambda)).abs() < 1e-12);
    }

    #[test]
    fn predict_matches_dense_solve_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p = full_params();
        let xs = separated_points(&mut rng, 5, 2);
        let ys = Array2::from_shape_fn((5, 2), |_| rng.gen_range(-1.0..1.0));
        let lambda = 1e-3;
        let m = fit(&p, xs.view(), ys.view(), lambda).unwrap();

        let mut a = kernel::gram(&p, xs.view()).unwrap();
        for i in 0..5 {
            a[[i, i]] += lambda;
        }
        let coeffs = dense_solve(&a, &ys);
        for _ in 0..10 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let row = kernel::cross_row(&p, &probe, xs.view()).unwrap();
            let expect = coeffs.t().dot(&row);
            let got = m.predict(&probe).unwrap();
            for c in 0..2 {
                assert!((got[c] - expect[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn error_bound_vanishes_at_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let p = gaussian_only(1.0, 1.0);
        let xs = separated_points(&mut rng, 8, 2);
        let ys = Array2::from_shape_fn((8, 1), |_| rng.gen_range(-1.0..1.0));
        let m = fit(&p, xs.view(), ys.view(), 0.0).unwrap();
        for i in 0..8 {
            let s = m.error_bound(xs.row(i).as_slice().unwrap()).unwrap();
            assert!(s <= 1e-6, "sigma at training point {i} = {s}");
        }
    }

    #[test]
    fn error_bound_far_field_is_prior_amplitude() {
        let amplitude = 1.7;
        let p = gaussian_only(amplitude, 1.0);
        let xs = array![[0.0, 0.0]];
        let ys = array![[1.0]];
        let m = fit(&p, xs.view(), ys.view(), 0.0).unwrap();
        let s = m.error_bound(&[50.0, 50.0]).unwrap();
        assert!((s - amplitude).abs() < 1e-9);
    }

    #[test]
    fn error_bound_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let p = full_params();
        let xs = separated_points(&mut rng, 7, 2);
        let ys = Array2::from_shape_fn((7, 1), |_| rng.gen_range(-1.0..1.0));
        let lambda = 1e-2;
        let m = fit(&p, xs.view(), ys.view(), lambda).unwrap();
        let mut a = kernel::gram(&p, xs.view()).unwrap();
        for i in 0..7 {
            a[[i, i]] += lambda;
        }
        for _ in 0..10 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let row = kernel::cross_row(&p, &probe, xs.view()).unwrap();
            let col = row.clone().insert_axis(Axis(1));
            let solved = dense_solve(&a, &col.to_owned());
            let quad: f64 = row.iter().zip(solved.column(0)).map(|(a, b)| a * b).sum();
            let expect = (kernel::eval(&p, &probe, &probe).unwrap() - quad).max(0.0).sqrt();
            let got = m.error_bound(&probe).unwrap();
            assert!((got - expect).abs() <= 1e-8);
        }
    }

    #[test]
    fn error_bound_grows_with_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let p = gaussian_only(1.0, 1.2);
        let xs = separated_points(&mut rng, 6, 2);
        let ys = Array2::from_shape_fn((6, 1), |_| rng.gen_range(-1.0..1.0));
        let small = fit(&p, xs.view(), ys.view(), 1e-6).unwrap();
        let large = fit(&p, xs.view(), ys.view(), 1e-2).unwrap();
        for _ in 0..10 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!(large.error_bound(&probe).unwrap() >= small.error_bound(&probe).unwrap());
        }
    }

    #[test]
    fn extend_by_nothing_is_identity() {
        let p = full_params();
        let xs = array![[0.0, 0.0], [1.0, 0.5]];
        let ys = array![[1.0], [0.0]];
        let m = fit(&p, xs.view(), ys.view(), 1e-6).unwrap();
        let empty_x = Array2::<f64>::zeros((0, 2));
        let empty_y = Array2::<f64>::zeros((0, 1));
        let e = m.extend(empty_x.view(), empty_y.view()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.coeffs(), m.coeffs());
    }

    #[test]
    fn extend_matches_full_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..50 {
            let p = gaussian_only(1.0, rng.gen_range(0.8..1.5));
            let all = separated_points(&mut rng, 13, 2);
            let ys = Array2::from_shape_fn((13, 2), |_| rng.gen_range(-1.0..1.0));
            let lambda = 1e-6;
            let base = fit(
                &p,
                all.slice(ndarray::s![..10, ..]),
                ys.slice(ndarray::s![..10, ..]),
                lambda,
            )
            .unwrap();
            let extended = base
                .extend(all.slice(ndarray::s![10.., ..]), ys.slice(ndarray::s![10.., ..]))
                .unwrap();
            let full = fit(&p, all.view(), ys.view(), lambda).unwrap();
            for _ in 0..20 {
                let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let a = extended.predict(&probe).unwrap();
                let b = full.predict(&probe).unwrap();
                for c in 0..2 {
                    assert!((a[c] - b[c]).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn sequential_extension_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let p = gaussian_only(1.0, 1.0);
        let all = separated_points(&mut rng, 15, 2);
        let ys = Array2::from_shape_fn((15, 1), |_| rng.gen_range(-1.0..1.0));
        let base = fit(
            &p,
            all.slice(ndarray::s![..10, ..]),
            ys.slice(ndarray::s![..10, ..]),
            1e-8,
        )
        .unwrap();
        let batch = base
            .extend(all.slice(ndarray::s![10.., ..]), ys.slice(ndarray::s![10.., ..]))
            .unwrap();
        let mut one_by_one = base;
        for i in 10..15 {
            one_by_one = one_by_one
                .extend(all.slice(ndarray::s![i..i + 1, ..]), ys.slice(ndarray::s![i..i + 1, ..]))
                .unwrap();
        }
        for _ in 0..20 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = batch.predict(&probe).unwrap();
            let b = one_by_one.predict(&probe).unwrap();
            assert!((a[0] - b[0]).abs() <= 1e-8);
        }
    }

    #[test]
    fn newton_basis_single_point() {
        let p = gaussian_only(2.0, 1.0); // K(x,x) = 4
        let xs = array![[0.0]];
        let ys = array![[1.0]];
        let lambda = 0.5;
        let m = fit(&p, xs.view(), ys.view(), lambda).unwrap();
        let b = m.newton_basis();
        assert!((b.back_transform[[0, 0]] - 1.0 / (4.0 + lambda).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn newton_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let p = gaussian_only(1.0, 1.1);
        let xs = separated_points(&mut rng, 9, 2);
        let ys = Array2::from_shape_fn((9, 1), |_| rng.gen_range(-1.0..1.0));
        let lambda = 1e-9;
        let m = fit(&p, xs.view(), ys.view(), lambda).unwrap();
        let b = &m.newton_basis().back_transform;
        let mut a = kernel::gram(&p, xs.view()).unwrap();
        for i in 0..9 {
            a[[i, i]] += lambda;
        }
        let prod = b.t().dot(&a).dot(b);
        for i in 0..9 {
            for j in 0..9 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - expect).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn newton_expansion_reproduces_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let p = full_params();
        let xs = separated_points(&mut rng, 8, 2);
        let ys = Array2::from_shape_fn((8, 1), |_| rng.gen_range(-1.0..1.0));
        let m = fit(&p, xs.view(), ys.view(), 1e-4).unwrap();
        let basis = m.newton_basis();
        // coefficients in the Newton basis: b = L^T C
        let b = m.chol_factor().t().dot(m.coeffs());
        for _ in 0..10 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let row = kernel::cross_row(&p, &probe, xs.view()).unwrap();
            let values = basis.evaluate(&row);
            let expansion: f64 = values.iter().zip(b.column(0)).map(|(v, c)| v * c).sum();
            let direct = m.predict(&probe).unwrap()[0];
            assert!((expansion - direct).abs() <= 1e-8);
        }
    }

    #[test]
    fn prediction_is_linear_in_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = full_params();
        let xs = separated_points(&mut rng, 6, 2);
        let y1 = Array2::from_shape_fn((6, 1), |_| rng.gen_range(-1.0..1.0));
        let y2 = Array2::from_shape_fn((6, 1), |_| rng.gen_range(-1.0..1.0));
        let (a, b) = (0.7, -1.3);
        let combo = &y1 * a + &y2 * b;
        let lambda = 1e-4;
        let m1 = fit(&p, xs.view(), y1.view(), lambda).unwrap();
        let m2 = fit(&p, xs.view(), y2.view(), lambda).unwrap();
        let mc = fit(&p, xs.view(), combo.view(), lambda).unwrap();
        for _ in 0..10 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let expect = a * m1.predict(&probe).unwrap()[0] + b * m2.predict(&probe).unwrap()[0];
            let got = mc.predict(&probe).unwrap()[0];
            assert!((expect - got).abs() <= 1e-10);
        }
    }

    #[test]
    fn fit_reports_failing_pivot() {
        // quadratic-only kernel: zero diagonal, large off-diagonal, nugget
        // cannot rescue it
        let p = KernelParams::new([0.0, 0.0, 0.0, 0.0, 1.0], [1.0; 6]).unwrap();
        let xs = array![[0.0], [10.0]];
        let ys = array![[1.0], [2.0]];
        match fit(&p, xs.view(), ys.view(), 1e-6) {
            Err(Error::Fit { pivot }) => assert!(pivot <= 1),
            other => panic!("expected fit error, got {other:?}"),
        }
    }
}
