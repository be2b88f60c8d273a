//! Dense symmetric linear algebra used by the interpolant and the training
//! loss: Cholesky factorization with an O(N²m) block extension, triangular
//! solves with multiple right-hand sides, and an LU solve with partial
//! pivoting for matrices that are invertible but not positive definite
//! (the composite kernel's quadratic term can produce those).

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Dot product with split accumulators so the compiler can keep several
/// dependency chains in flight; the Cholesky inner loop lives here.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let mut acc = [0.0f64; 8];
    let mut i = 0;
    while i + 8 <= n {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
        acc[4] += a[i + 4] * b[i + 4];
        acc[5] += a[i + 5] * b[i + 5];
        acc[6] += a[i + 6] * b[i + 6];
        acc[7] += a[i + 7] * b[i + 7];
        i += 8;
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    while i < n {
        s += a[i] * b[i];
        i += 1;
    }
    s
}

/// Lower-triangular Cholesky factor L with L·Lᵀ = A.
///
/// Fails with the offending pivot index when A is not positive definite.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { left: n, right: a.ncols() });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    let buf = l.as_slice_mut().expect("contiguous");
    for i in 0..n {
        for j in 0..=i {
            let s = if i == j {
                let row = &buf[i * n..i * n + j];
                dot(row, row)
            } else {
                let (head, tail) = buf.split_at(i * n);
                dot(&head[j * n..j * n + j], &tail[..j])
            };
            let aij = a[[i, j]] - s;
            if i == j {
                if !(aij > 0.0) || !aij.is_finite() {
                    return Err(Error::Fit { pivot: i });
                }
                buf[i * n + j] = aij.sqrt();
            } else {
                buf[i * n + j] = aij / buf[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Extends the factor of A to the factor of [[A, B], [Bᵀ, C]] without
/// refactorizing the leading block: the new rows are solved from the old L
/// and only the m×m Schur complement is factorized (O(N²m + m³)).
pub fn extend_cholesky(
    l: &Array2<f64>,
    cross: ArrayView2<'_, f64>,
    corner: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let n = l.nrows();
    let m = corner.nrows();
    if cross.nrows() != n || cross.ncols() != m || corner.ncols() != m {
        return Err(Error::DimensionMismatch { left: cross.nrows(), right: n });
    }
    // L21ᵀ solves L·Z = B, so L21 = Zᵀ, copied into row-major storage for the dots below.
    let z = solve_lower(l, cross);
    let mut l21 = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        for k in 0..n {
            l21[[i, k]] = z[[k, i]];
        }
    }
    let mut schur = corner.to_owned();
    for i in 0..m {
        for j in 0..=i {
            let s = dot(l21.row(i).as_slice().unwrap(), l21.row(j).as_slice().unwrap());
            schur[[i, j]] -= s;
            if i != j {
                schur[[j, i]] = schur[[i, j]];
            }
        }
    }
    let l22 = cholesky(schur.view()).map_err(|e| match e {
        Error::Fit { pivot } => Error::Fit { pivot: n + pivot },
        other => other,
    })?;
    let mut out = Array2::<f64>::zeros((n + m, n + m));
    out.slice_mut(ndarray::s![..n, ..n]).assign(l);
    for i in 0..m {
        for k in 0..n {
            out[[n + i, k]] = l21[[i, k]];
        }
        for k in 0..=i {
            out[[n + i, n + k]] = l22[[i, k]];
        }
    }
    Ok(out)
}

/// Forward substitution: solves L·X = B for lower-triangular L, B is n×d.
pub fn solve_lower(l: &Array2<f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = l.nrows();
    let d = b.ncols();
    let mut x = b.to_owned();
    let lb = l.as_slice().expect("contiguous");
    let xb = x.as_slice_mut().expect("contiguous");
    for i in 0..n {
        let (done, rest) = xb.split_at_mut(i * d);
        let row = &mut rest[..d];
        for k in 0..i {
            let lik = lb[i * n + k];
            if lik != 0.0 {
                let xk = &done[k * d..k * d + d];
                for c in 0..d {
                    row[c] -= lik * xk[c];
                }
            }
        }
        let diag = lb[i * n + i];
        for v in row.iter_mut() {
            *v /= diag;
        }
    }
    x
}

/// Back substitution: solves Lᵀ·X = B using the lower-triangular storage of L.
pub fn solve_lower_transpose(l: &Array2<f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = l.nrows();
    let d = b.ncols();
    let mut x = b.to_owned();
    let lb = l.as_slice().expect("contiguous");
    let xb = x.as_slice_mut().expect("contiguous");
    for i in (0..n).rev() {
        let (head, tail) = xb.split_at_mut((i + 1) * d);
        let row = &mut head[i * d..];
        for k in i + 1..n {
            let lki = lb[k * n + i];
            if lki != 0.0 {
                let xk = &tail[(k - i - 1) * d..(k - i - 1) * d + d];
                for c in 0..d {
                    row[c] -= lki * xk[c];
                }
            }
        }
        let diag = lb[i * n + i];
        for v in row.iter_mut() {
            *v /= diag;
        }
    }
    x
}

/// Solves (L·Lᵀ)·X = B given the Cholesky factor.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, y.view())
}

/// B = L⁻ᵀ, upper triangular, by back substitution on the identity.
pub fn invert_lower_transpose(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    solve_lower_transpose(l, Array2::<f64>::eye(n).view())
}

/// Solves A·X = B by LU with partial pivoting; A need not be definite.
///
/// The training loss evaluates quadratic forms through this path because the
/// quadratic kernel term makes the regularized Gram matrix indefinite for
/// many parameter draws while still being invertible.
pub fn lu_solve(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { left: n, right: a.ncols() });
    }
    let d = b.ncols();
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    let lub = lu.as_slice_mut().expect("contiguous");
    let xb = x.as_slice_mut().expect("contiguous");
    let scale = lub.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let mut piv = col;
        let mut best = lub[col * n + col].abs();
        for r in col + 1..n {
            let v = lub[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !best.is_finite() || best <= f64::EPSILON * scale * n as f64 {
            return Err(Error::numeric("lu_solve", format!("singular pivot at column {col}")));
        }
        if piv != col {
            for c in 0..n {
                lub.swap(col * n + c, piv * n + c);
            }
            for c in 0..d {
                xb.swap(col * d + c, piv * d + c);
            }
        }
        let pivot = lub[col * n + col];
        for r in col + 1..n {
            let factor = lub[r * n + col] / pivot;
            if factor != 0.0 {
                for c in col..n {
                    lub[r * n + c] -= factor * lub[col * n + c];
                }
                for c in 0..d {
                    xb[r * d + c] -= factor * xb[col * d + c];
                }
            }
            lub[r * n + col] = 0.0;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let u = lub[i * n + k];
            if u != 0.0 {
                for c in 0..d {
                    xb[i * d + c] -= u * xb[k * d + c];
                }
            }
        }
        let diag = lub[i * n + i];
        for c in 0..d {
            xb[i * d + c] /= diag;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let m = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let mut a = m.t().dot(&m);
        for i in 0..n {
            a[[i, i]] += n as f64;
        }
        a
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 17] {
            let a = random_spd(n, &mut rng);
            let l = cholesky(a.view()).unwrap();
            let rec = l.dot(&l.t());
            assert!(max_abs_diff(&rec, &a) < 1e-10 * n as f64);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[0.0, 3.0], [3.0, 0.0]];
        match cholesky(a.view()) {
            Err(Error::Fit { pivot }) => assert_eq!(pivot, 0),
            other => panic!("expected Fit error, got {other:?}"),
        }
        let b = array![[4.0, 5.0], [5.0, 4.0]];
        match cholesky(b.view()) {
            Err(Error::Fit { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected Fit error, got {other:?}"),
        }
    }

    #[test]
    fn triangular_solves_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_spd(8, &mut rng);
        let l = cholesky(a.view()).unwrap();
        let x = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-2.0..2.0));
        let b = a.dot(&x);
        let got = cholesky_solve(&l, b.view());
        assert!(max_abs_diff(&got, &x) < 1e-9);
    }

    #[test]
    fn lower_transpose_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(6, &mut rng);
        let l = cholesky(a.view()).unwrap();
        let binv = invert_lower_transpose(&l);
        let prod = l.t().dot(&binv);
        assert!(max_abs_diff(&prod, &Array2::eye(6)) < 1e-10);
    }

    #[test]
    fn block_extension_matches_full_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd(10, &mut rng);
        let l_full = cholesky(a.view()).unwrap();
        let l_head = cholesky(a.slice(ndarray::s![..7, ..7])).unwrap();
        let l_ext = extend_cholesky(
            &l_head,
            a.slice(ndarray::s![..7, 7..]),
            a.slice(ndarray::s![7.., 7..]),
        )
        .unwrap();
        assert!(max_abs_diff(&l_ext, &l_full) < 1e-10);
    }

    #[test]
    fn lu_handles_indefinite_and_matches_cholesky_on_spd() {
        // indefinite but invertible: analytic inverse of [[0,2],[2,1]] is [[-0.25,0.5],[0.5,0]]
        let a = array![[0.0, 2.0], [2.0, 1.0]];
        let x = lu_solve(a.view(), Array2::eye(2).view()).unwrap();
        let expect = array![[-0.25, 0.5], [0.5, 0.0]];
        assert!(max_abs_diff(&x, &expect) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spd = random_spd(9, &mut rng);
        let b = Array2::from_shape_fn((9, 2), |_| rng.gen_range(-1.0..1.0));
        let l = cholesky(spd.view()).unwrap();
        let x1 = cholesky_solve(&l, b.view());
        let x2 = lu_solve(spd.view(), b.view()).unwrap();
        assert!(max_abs_diff(&x1, &x2) < 1e-9);
    }

    #[test]
    fn lu_reports_singularity() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(lu_solve(a.view(), Array2::eye(2).view()).is_err());
    }
}
