//! Spectral norm estimation by power iteration on the Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::MnnError;

/// Maximum power-iteration sweeps before falling back to an exact eigen solve.
pub const MAX_ITERATIONS: usize = 100;
/// Stop once successive singular value estimates differ by less than this (relative).
pub const CONVERGENCE_TOL: f64 = 1e-9;
/// Accepted relative error of the estimate.
pub const ACCEPTED_ERROR: f64 = 1e-8;
/// Matrices with a spectral norm below this are never rescaled.
pub const DEAD_WEIGHT_THRESHOLD: f64 = 1e-12;

/// Largest singular value of `m`.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64, MnnError> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(MnnError::NonFinite);
    }
    let mut warm = None;
    Ok(spectral_norm_warm(m, &mut warm))
}

/// Power iteration that carries its dominant vector between calls.
///
/// The vector lives on the smaller side of `m`, so an `n x 11` matrix iterates
/// in 11 dimensions. `warm` is replaced when its length does not match.
pub(crate) fn spectral_norm_warm(m: &DMatrix<f64>, warm: &mut Option<DVector<f64>>) -> f64 {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    if m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    // Iterate on M^T M when cols <= rows, otherwise on M M^T.
    let tall = cols <= rows;
    let dim = if tall { cols } else { rows };

    let mut v = match warm.take() {
        Some(v) if v.len() == dim && v.norm() > 0.0 && v.iter().all(|x| x.is_finite()) => v,
        _ => start_vector(dim),
    };
    let vn = v.norm();
    v /= vn;

    let mut image = DVector::zeros(if tall { rows } else { cols });
    let mut back = DVector::zeros(dim);
    let mut prev = 0.0;
    let mut converged = None;
    for it in 0..MAX_ITERATIONS {
        if tall {
            image.gemv(1.0, m, &v, 0.0);
            back.gemv_tr(1.0, m, &image, 0.0);
        } else {
            image.gemv_tr(1.0, m, &v, 0.0);
            back.gemv(1.0, m, &image, 0.0);
        }
        let image_norm = image.norm();
        let back_norm = back.norm();
        if image_norm == 0.0 || back_norm == 0.0 {
            // start vector fell in the null space
            break;
        }
        // ||M^T M v|| / ||M v|| is a lower bound on sigma_max that dominates ||M v||.
        let sigma = back_norm / image_norm;
        v.copy_from(&back);
        v /= back_norm;
        if it > 0 && (sigma - prev).abs() <= CONVERGENCE_TOL * sigma {
            converged = Some(sigma);
            break;
        }
        prev = sigma;
    }
    let sigma = match converged {
        Some(s) => s,
        None => {
            let (s, vec) = exact_dominant(m, tall);
            v = vec;
            s
        }
    };
    *warm = Some(v);
    sigma
}

fn start_vector(dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| {
        1.0 + 0.5 * ((i as f64) * 1.618_033_988_75 + 0.3).sin()
    })
}

fn exact_dominant(m: &DMatrix<f64>, tall: bool) -> (f64, DVector<f64>) {
    let gram = if tall { m.tr_mul(m) } else { m * m.transpose() };
    let eig = gram.symmetric_eigen();
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty gram matrix");
    let vec = eig.eigenvectors.column(idx).into_owned();
    (lambda.max(0.0).sqrt(), vec)
}
