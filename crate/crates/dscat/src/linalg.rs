//! Shared dense linear algebra helpers on complex matrices.
//!
//! The working type throughout the crate is `nalgebra::DMatrix<Complex64>`;
//! the general (non-normal) eigendecomposition is delegated to `faer`.

use faer::complex_native::c64;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Hermitian part (A + A*)/2.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Pin the worker-thread count for the dense backends. A single thread makes
/// every factorization bitwise reproducible across runs.
pub fn set_threads(threads: usize) {
    faer::set_global_parallelism(if threads <= 1 {
        faer::Parallelism::None
    } else {
        faer::Parallelism::Rayon(threads)
    });
}

fn to_faer(a: &CMat) -> faer::Mat<c64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        c64::new(z.re, z.im)
    })
}

/// Operator 2-norm (largest singular value).
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = to_faer(a).singular_values();
    sv.first().copied().unwrap_or(0.0)
}

/// All singular values, descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    to_faer(a).singular_values()
}

/// Matrix 1-norm (max column sum), used by the exponential scaling heuristic.
pub fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a general complex matrix: eigenvalues and the matrix
/// of right eigenvectors (columns, unit norm).
pub fn eig(a: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eig expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let evd: faer::solvers::Eigendecomposition<c64> = to_faer(a).eigendecomposition();
    let s = evd.s();
    let u = evd.u();
    let vals: Vec<Complex64> = (0..n)
        .map(|i| {
            let z = s.column_vector().read(i);
            Complex64::new(z.re, z.im)
        })
        .collect();
    let mut vecs = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let z = u.read(i, j);
            vecs[(i, j)] = Complex64::new(z.re, z.im);
        }
        let norm = vecs.column(j).norm();
        if norm > 0.0 {
            let scale = Complex64::new(1.0 / norm, 0.0);
            for i in 0..n {
                vecs[(i, j)] *= scale;
            }
        }
    }
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    Ok((vals, vecs))
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues (ascending) and
/// orthonormal eigenvectors.
pub fn eig_hermitian(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    let evd = to_faer(a).selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s();
    let u = evd.u();
    let vals: Vec<f64> = (0..n).map(|i| s.column_vector().read(i).re).collect();
    let mut vecs = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let z = u.read(i, j);
            vecs[(i, j)] = Complex64::new(z.re, z.im);
        }
    }
    Ok((vals, vecs))
}

/// Solve A x = b by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CVec) -> Result<CVec> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::Eigensolver("singular matrix in solve".into()))
}

/// Solve A X = B for a matrix right-hand side.
pub fn solve_mat(a: &CMat, b: &CMat) -> Result<CMat> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::Eigensolver("singular matrix in solve".into()))
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigensolver("matrix not invertible".into()))
}

/// Principal square root of a positive semi-definite Hermitian matrix.
pub fn sqrtm_psd(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = eig_hermitian(a)?;
    let n = a.nrows();
    let mut d = CMat::zeros(n, n);
    for (i, &v) in vals.iter().enumerate() {
        d[(i, i)] = Complex64::new(v.max(0.0).sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

/// Orthonormal basis for the column span of `a`, keeping singular directions
/// with singular value > `tol` (relative to the largest).
pub fn column_span(a: &CMat, tol: f64) -> CMat {
    if a.ncols() == 0 {
        return CMat::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax.max(1e-300))
        .count();
    u.columns(0, rank).into_owned()
}

/// Principal angles (radians, ascending) between the spans of two matrices
/// with orthonormal columns.
pub fn principal_angles(qa: &CMat, qb: &CMat) -> Vec<f64> {
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return vec![];
    }
    let m = qa.adjoint() * qb;
    let mut cos: Vec<f64> = singular_values(&m);
    cos.truncate(qa.ncols().min(qb.ncols()));
    let mut angles: Vec<f64> = cos
        .iter()
        .map(|&c| c.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    angles
}

/// Largest principal angle between spans; 0 for two empty spans.
pub fn max_principal_angle(qa: &CMat, qb: &CMat) -> f64 {
    if qa.ncols() != qb.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    principal_angles(qa, qb)
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMat::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn rand_unit_vector<R: Rng>(rng: &mut R, n: usize) -> CVec {
    let mut v = CVec::from_fn(n, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let norm = v.norm();
    if norm > 0.0 {
        v /= Complex64::new(norm, 0.0);
    }
    v
}

/// Matrix exponential by scaling and squaring with a Padé(13) kernel.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = one_norm(a);
    let theta13 = 5.371920351148152;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let scale = Complex64::new(0.5f64.powi(s), 0.0);
    let a_s = a * scale;

    // Padé(13) coefficients.
    let b = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = CMat::identity(n, n);
    let a2 = &a_s * &a_s;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let c = |x: f64| Complex64::new(x, 0.0);
    let u_inner = &a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]);
    let u = &a_s
        * (&a6 * &u_inner + &a6 * c(b[7]) + &a4 * c(b[5]) + &a2 * c(b[3]) + &id * c(b[1]));
    let v_inner = &a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]);
    let v = &a6 * &v_inner + &a6 * c(b[6]) + &a4 * c(b[4]) + &a2 * c(b[2]) + &id * c(b[0]);
    let mut f = solve_mat(&(&v - &u), &(&v + &u)).expect("Padé denominator invertible");
    for _ in 0..s {
        f = &f * &f;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eig_of_known_matrix() {
        // [[0,1],[1,-i]] has eigenvalues (±√3 - i)/2.
        let a = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, -1.0)]);
        let (mut vals, vecs) = eig(&a).unwrap();
        vals.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        let s3 = 3f64.sqrt();
        assert_relative_eq!(vals[0].re, -s3 / 2.0, epsilon = 1e-12);
        assert_relative_eq!(vals[0].im, -0.5, epsilon = 1e-12);
        assert_relative_eq!(vals[1].re, s3 / 2.0, epsilon = 1e-12);
        // residual check
        for j in 0..2 {
            let v = vecs.column(j).into_owned();
            let lam = eig(&a).unwrap().0[j];
            let r = (&a * &v - v.clone() * lam).norm();
            assert!(r < 1e-12);
        }
    }

    #[test]
    fn expm_matches_diagonal() {
        let a = CMat::from_row_slice(2, 2, &[c(0.0, -1.0), c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)]);
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)].re, 1f64.cos(), epsilon = 1e-13);
        assert_relative_eq!(e[(0, 0)].im, -(1f64.sin()), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 1)].re, (-2f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn expm_scaling_branch() {
        // norm large enough to force squaring steps
        let a = CMat::from_row_slice(2, 2, &[c(0.0, -40.0), c(3.0, 0.0), c(0.0, 0.0), c(0.0, -41.0)]);
        let e = expm(&a);
        // eigen-based reference
        let (vals, vecs) = eig(&a).unwrap();
        let vinv = inverse(&vecs).unwrap();
        let mut d = CMat::zeros(2, 2);
        for (i, &l) in vals.iter().enumerate() {
            d[(i, i)] = l.exp();
        }
        let reference = &vecs * d * vinv;
        assert!(op_norm(&(&e - &reference)) < 1e-10);
    }

    #[test]
    fn principal_angles_orthogonal_vs_equal() {
        let e1 = CMat::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let e2 = CMat::from_row_slice(2, 1, &[c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(max_principal_angle(&e1, &e1) < 1e-12);
        assert!((max_principal_angle(&e1, &e2) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn sqrtm_reproduces_psd() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(1.0, 0.0)]);
        let r = sqrtm_psd(&m).unwrap();
        assert!(op_norm(&(&r * &r - &m)) < 1e-12);
    }
}
