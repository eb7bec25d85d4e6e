//! Small dense kernels shared by the objective and the spectral experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative tolerance on the Rayleigh quotient used by [`gram_lambda_max`].
pub const POWER_TOL: f64 = 1e-8;
/// Iteration cap used by [`gram_lambda_max`].
pub const POWER_MAX_ITER: usize = 100_000;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `out = M v` for a row-major `rows x cols` matrix.
pub fn mat_vec(data: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(data.len(), rows * cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&data[r * cols..(r + 1) * cols], v);
    }
}

/// `out = M^t v` for a row-major `rows x cols` matrix.
pub fn mat_t_vec(data: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        let vr = v[r];
        if vr == 0.0 {
            continue;
        }
        let row = &data[r * cols..(r + 1) * cols];
        for (o, m) in out.iter_mut().zip(row) {
            *o += vr * m;
        }
    }
}

/// Largest eigenvalue of `M^t M` for a row-major `rows x cols` matrix, by
/// power iteration on the Rayleigh quotient `|M v|^2`.
///
/// Stops when two successive estimates agree to `tol` relative. The start
/// vector is a fixed pseudo-random direction so results are reproducible.
pub fn gram_lambda_max(
    data: &[f64],
    rows: usize,
    cols: usize,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if data.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_1a4b);
    let mut v: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() + 0.5).collect();
    let nv = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    let mut mv = vec![0.0; rows];
    let mut w = vec![0.0; cols];
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        mat_vec(data, rows, cols, &v, &mut mv);
        let estimate = norm_sq(&mv);
        mat_t_vec(data, rows, cols, &mv, &mut w);
        let nw = norm_sq(&w).sqrt();
        if nw == 0.0 {
            return Ok(estimate);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (estimate - prev).abs() <= tol * estimate {
            return Ok(estimate);
        }
        prev = estimate;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate: prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_product_matches_explicit() {
        // 2x3
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 3];
        mat_t_vec(&m, 2, 3, &[1.0, -1.0], &mut out);
        assert_eq!(out, [-3.0, -3.0, -3.0]);
        let mut out2 = [0.0; 2];
        mat_vec(&m, 2, 3, &[1.0, 0.0, 1.0], &mut out2);
        assert_eq!(out2, [4.0, 10.0]);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        assert_eq!(gram_lambda_max(&[0.0; 6], 2, 3, 1e-8, 10).unwrap(), 0.0);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(gram_lambda_max(&[], 0, 3, 1e-8, 10).is_err());
    }
}
