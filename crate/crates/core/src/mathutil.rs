//! Small numeric helpers shared across modules.

use nalgebra::DMatrix;

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Force exact symmetry by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns.
/// Unlike an implicit-shift QL iteration this cannot stall or emit
/// non-finite values for a finite symmetric input; it is intended for the
/// small (state-dimension) matrices used by the estimator.
pub fn symmetric_eigen_jacobi(m: &DMatrix<f64>) -> (nalgebra::DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        let scale = a.amax();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // classic Jacobi rotation annihilating a[(p, q)]
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Log-density of a multivariate normal evaluated at residual `r` with
/// covariance `s`. Returns `None` if `s` has no Cholesky factor.
pub fn gaussian_logpdf(r: &nalgebra::DVector<f64>, s: &DMatrix<f64>) -> Option<f64> {
    let chol = s.clone().cholesky()?;
    let half_logdet: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    let solved = chol.solve(r);
    let maha = r.dot(&solved);
    let k = r.len() as f64;
    Some(-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + maha) - half_logdet)
}
