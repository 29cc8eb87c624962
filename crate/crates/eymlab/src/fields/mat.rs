//! Fixed-size per-site matrix helpers for dimension up to four.

pub type M4 = [[f64; 4]; 4];

pub const ZERO: M4 = [[0.0; 4]; 4];

pub fn identity(n: usize) -> M4 {
    let mut m = ZERO;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

#[inline]
pub fn mul(n: usize, a: &M4, b: &M4) -> M4 {
    let mut out = ZERO;
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

#[inline]
pub fn trace(n: usize, a: &M4) -> f64 {
    (0..n).map(|i| a[i][i]).sum()
}

/// `tr(a b)` for square matrices.
#[inline]
pub fn trace_product(n: usize, a: &M4, b: &M4) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[i][j] * b[j][i];
        }
    }
    acc
}

/// Cholesky factorization of a symmetric matrix; `None` unless positive definite.
pub fn cholesky(n: usize, a: &M4) -> Option<M4> {
    let mut l = ZERO;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse and determinant of a symmetric positive-definite matrix.
pub fn spd_inverse(n: usize, a: &M4) -> Option<(M4, f64)> {
    let l = cholesky(n, a)?;
    let det = (0..n).map(|i| l[i][i]).product::<f64>().powi(2);
    // Invert L, then a^{-1} = L^{-T} L^{-1}.
    let mut linv = ZERO;
    for i in 0..n {
        linv[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let mut sum = 0.0;
            for k in j..i {
                sum -= l[i][k] * linv[k][j];
            }
            linv[i][j] = sum / l[i][i];
        }
    }
    let mut inv = ZERO;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in i.max(j)..n {
                sum += linv[k][i] * linv[k][j];
            }
            inv[i][j] = sum;
            inv[j][i] = sum;
        }
    }
    Some((inv, det))
}

/// Determinant of the submatrix of `m` on the given rows and columns.
pub fn minor_det(m: &M4, rows: &[usize], cols: &[usize]) -> f64 {
    debug_assert_eq!(rows.len(), cols.len());
    match rows.len() {
        0 => 1.0,
        1 => m[rows[0]][cols[0]],
        2 => m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]],
        r => {
            let mut acc = 0.0;
            let sub_rows = &rows[1..];
            let mut sub_cols = Vec::with_capacity(r - 1);
            for (c, &col) in cols.iter().enumerate() {
                sub_cols.clear();
                sub_cols.extend(cols.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, &v)| v));
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * m[rows[0]][col] * minor_det(m, sub_rows, &sub_cols);
            }
            acc
        }
    }
}
