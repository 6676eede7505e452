//! Small dense helpers on top of `faer` shared by the numerical modules.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// For each column, whether it must be negated so that its largest-magnitude
/// entry is nonnegative. The first entry wins among equal magnitudes.
pub fn column_sign_flips(m: MatRef<'_, f64>) -> Vec<bool> {
    (0..m.ncols())
        .map(|j| {
            let mut best = 0usize;
            let mut best_abs = -1.0;
            for i in 0..m.nrows() {
                let a = m[(i, j)].abs();
                if a > best_abs {
                    best_abs = a;
                    best = i;
                }
            }
            m.nrows() > 0 && m[(best, j)] < 0.0
        })
        .collect()
}

/// Applies the sign convention of [`column_sign_flips`] in place.
pub fn fix_column_signs(m: &mut Mat<f64>) {
    let flips = column_sign_flips(m.as_ref());
    negate_columns(m, &flips);
}

pub fn negate_columns(m: &mut Mat<f64>, flips: &[bool]) {
    for (j, &flip) in flips.iter().enumerate() {
        if flip {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Inverse of a general square matrix through its SVD, refusing matrices whose
/// 2-norm condition number exceeds `cond_limit`.
pub fn inverse_checked(a: MatRef<'_, f64>, cond_limit: f64, context: &str) -> Result<Mat<f64>> {
    assert_eq!(a.nrows(), a.ncols(), "inverse of a non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let svd = a
        .svd()
        .map_err(|e| Error::NoConvergence(format!("{context}: {e:?}")))?;
    let s = svd.S().column_vector();
    let smax = s[0];
    let smin = s[n - 1];
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= cond_limit) {
        return Err(Error::IllConditioned {
            context: context.to_string(),
            condition,
            limit: cond_limit,
        });
    }
    let u = svd.U();
    let v = svd.V();
    Ok(Mat::from_fn(n, n, |i, j| {
        (0..n).map(|k| v[(i, k)] * u[(j, k)] / s[k]).sum()
    }))
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition,
/// with the same conditioning guard as [`inverse_checked`].
pub fn spd_inverse(a: MatRef<'_, f64>, cond_limit: f64, context: &str) -> Result<Mat<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let sym = symmetrize(a);
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NoConvergence(format!("{context}: {e:?}")))?;
    let s = evd.S().column_vector();
    let lmin = s[0];
    let lmax = s[n - 1];
    let condition = if lmin > 0.0 && lmax > 0.0 {
        lmax / lmin
    } else {
        f64::INFINITY
    };
    if !(condition <= cond_limit) {
        return Err(Error::IllConditioned {
            context: context.to_string(),
            condition,
            limit: cond_limit,
        });
    }
    let u = evd.U();
    let mut inv = Mat::from_fn(n, n, |i, j| {
        (0..n).map(|k| u[(i, k)] * u[(j, k)] / s[k]).sum()
    });
    make_symmetric(&mut inv);
    Ok(inv)
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Copies the upper triangle onto the lower one.
pub fn make_symmetric(a: &mut Mat<f64>) {
    for j in 0..a.ncols() {
        for i in (j + 1)..a.nrows() {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let (p, q) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * p, a.ncols() * q, |i, j| {
        a[(i / p, j / q)] * b[(i % p, j % q)]
    })
}

/// Largest absolute entry of `A - B`.
pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols());
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Converts nested rows into a matrix; every row must have `ncols` entries.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major nested representation of a matrix.
pub fn to_rows(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Gathers the listed columns of `m` into a new matrix.
pub fn select_columns(m: MatRef<'_, f64>, cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}
