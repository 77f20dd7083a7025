//! Small dense linear algebra for observer design.
//!
//! Everything here is sized for the matrices that show up in observer
//! synthesis (a handful of states, LMIs of a few dozen rows). The symmetric
//! eigen-solver is a cyclic Jacobi iteration; the Lyapunov and Sylvester
//! equations are solved through their Kronecker-vectorized linear systems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Sweep cap for the cyclic Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max relative asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },
    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is not Hurwitz (max eigenvalue real part {max_real_part})")]
    NotHurwitz { max_real_part: f64 },
    #[error("pair (A, C) is not observable (observability rank {rank} < {n})")]
    NotObservable { rank: usize, n: usize },
    #[error("bad target eigenvalues: {0}")]
    BadTargets(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear system is singular")]
    Singular,
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Symmetric eigendecomposition `S = V diag(eigenvalues) V^T`.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: Mat,
}

impl SymEig {
    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn reconstruct(&self) -> Mat {
        let d = Mat::from_diagonal(&Vector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

/// Largest absolute entry, `‖M‖_max`.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max(1, ‖M‖_max)`, the scale used by every hybrid tolerance in this crate.
pub fn tol_scale(m: &Mat) -> f64 {
    max_abs(m).max(1.0)
}

fn require_square(m: &Mat) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn require_finite(m: &Mat) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(s: &Mat) -> Result<SymEig, LinalgError> {
    let n = require_square(s)?;
    require_finite(s)?;
    let scale = tol_scale(s);
    let asym = (s - s.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs())) / scale;
    if asym > SYMMETRY_TOL {
        return Err(LinalgError::Asymmetric { asymmetry: asym });
    }

    let mut a = (s + s.transpose()) * 0.5;
    let mut v = Mat::identity(n, n);
    let frob = a.norm();
    let mut converged = n <= 1 || frob == 0.0;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= f64::EPSILON * frob * 1e-2 || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
        sweep += 1;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: sweep });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// True iff the largest eigenvalue of `s` is at most `tol`.
pub fn is_negative_semidefinite(s: &Mat, tol: f64) -> Result<bool, LinalgError> {
    Ok(sym_eig(s)?.max() <= tol)
}

/// Eigenvalues of a general real square matrix.
pub fn spectrum(a: &Mat) -> Result<Vec<Complex64>, LinalgError> {
    require_square(a)?;
    require_finite(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &Mat) -> Result<f64, LinalgError> {
    Ok(spectrum(a)?
        .iter()
        .fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re)))
}

pub fn is_hurwitz(a: &Mat) -> Result<bool, LinalgError> {
    Ok(spectral_abscissa(a)? < 0.0)
}

/// Sorts complex numbers by (real, imaginary) for spectrum comparisons.
pub fn sort_complex(v: &mut [Complex64]) {
    v.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

fn solve_dense(lhs: Mat, rhs: &Vector) -> Result<Vector, LinalgError> {
    let lu = lhs.clone().lu();
    let mut x = lu.solve(rhs).ok_or(LinalgError::Singular)?;
    // one step of iterative refinement
    let r = rhs - &lhs * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(LinalgError::Singular)
    }
}

/// Solves `P·Acl + Aclᵀ·P = −Q` for symmetric `P`.
pub fn solve_lyapunov_q(acl: &Mat, q: &Mat) -> Result<Mat, LinalgError> {
    let n = require_square(acl)?;
    if q.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch(format!(
            "Q is {}x{}, expected {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    let abscissa = spectral_abscissa(acl)?;
    if abscissa >= 0.0 {
        return Err(LinalgError::NotHurwitz {
            max_real_part: abscissa,
        });
    }
    // column-major vec: vec(P Acl) = (Aclᵀ ⊗ I) vec P, vec(Aclᵀ P) = (I ⊗ Aclᵀ) vec P
    let eye = Mat::identity(n, n);
    let at = acl.transpose();
    let lhs = kron(&at, &eye) + kron(&eye, &at);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let x = solve_dense(lhs, &rhs)?;
    let p = Mat::from_column_slice(n, n, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Solves `P·Acl + Aclᵀ·P = −ν·I`.
pub fn solve_lyapunov(acl: &Mat, nu: f64) -> Result<Mat, LinalgError> {
    let n = require_square(acl)?;
    solve_lyapunov_q(acl, &(Mat::identity(n, n) * nu))
}

/// `‖P·Acl + Aclᵀ·P + Q‖_max`.
pub fn lyapunov_residual(acl: &Mat, p: &Mat, q: &Mat) -> f64 {
    max_abs(&(p * acl + acl.transpose() * p + q))
}

/// Numerical rank by SVD with a relative threshold.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * rel_tol).count()
}

/// Observability matrix `[C; CA; …; CA^{n−1}]` with each block row scaled
/// to unit max-norm so the rank test is not dominated by large powers of A.
pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    let n = a.nrows();
    let ny = c.nrows();
    let mut out = Mat::zeros(n * ny, n);
    let mut block = c.clone();
    for k in 0..n {
        let s = max_abs(&block);
        let scaled = if s > 0.0 { &block / s } else { block.clone() };
        out.view_mut((k * ny, 0), (ny, n)).copy_from(&scaled);
        block = &block * a;
    }
    out
}

pub fn observability_rank(a: &Mat, c: &Mat) -> usize {
    rank(&observability_matrix(a, c), 1e-10)
}

fn check_targets(targets: &[Complex64], n: usize) -> Result<(), LinalgError> {
    if targets.len() != n {
        return Err(LinalgError::BadTargets(format!(
            "expected {n} eigenvalues, got {}",
            targets.len()
        )));
    }
    if let Some(z) = targets.iter().find(|z| !(z.re < 0.0) || !z.im.is_finite()) {
        return Err(LinalgError::BadTargets(format!(
            "eigenvalue {z} does not have a negative real part"
        )));
    }
    let mut pos: Vec<Complex64> = targets.iter().copied().filter(|z| z.im > 0.0).collect();
    let mut neg: Vec<Complex64> = targets
        .iter()
        .filter(|z| z.im < 0.0)
        .map(|z| z.conj())
        .collect();
    sort_complex(&mut pos);
    sort_complex(&mut neg);
    let closed = pos.len() == neg.len()
        && pos
            .iter()
            .zip(&neg)
            .all(|(x, y)| (x - y).norm() <= 1e-12 * x.norm().max(1.0));
    if !closed {
        return Err(LinalgError::BadTargets(
            "targets are not closed under complex conjugation".into(),
        ));
    }
    Ok(())
}

/// Monic real polynomial with the given roots, coefficients from `s^0` up.
fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

fn spectra_match(a: &Mat, targets: &[Complex64], rel: f64) -> Result<bool, LinalgError> {
    let mut have = spectrum(a)?;
    let mut want = targets.to_vec();
    sort_complex(&mut have);
    sort_complex(&mut want);
    Ok(have
        .iter()
        .zip(&want)
        .all(|(x, y)| (x - y).norm() <= rel * y.norm().max(1.0)))
}

/// Output injection `L` such that `A + L·C` has the requested spectrum.
///
/// Single-output pairs use Ackermann's formula on the dual pair; multi-output
/// pairs solve a Sylvester equation against a real block-diagonal target
/// matrix with a seeded free parameter. The pair must be observable.
pub fn stabilizing_output_injection(
    a: &Mat,
    c: &Mat,
    targets: &[Complex64],
) -> Result<Mat, LinalgError> {
    let n = require_square(a)?;
    if c.ncols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "C has {} columns, A is {n}x{n}",
            c.ncols()
        )));
    }
    check_targets(targets, n)?;
    let ny = c.nrows();
    let rank = observability_rank(a, c);
    if rank < n {
        return Err(LinalgError::NotObservable { rank, n });
    }
    if spectra_match(a, targets, 1e-9)? {
        return Ok(Mat::zeros(n, ny));
    }
    if ny == 1 {
        return ackermann(a, c, targets);
    }
    sylvester_assignment(a, c, targets)
}

fn ackermann(a: &Mat, c: &Mat, targets: &[Complex64]) -> Result<Mat, LinalgError> {
    let n = a.nrows();
    let at = a.transpose();
    let b = c.transpose();
    let mut ctrb = Mat::zeros(n, n);
    let mut col = b.clone();
    for k in 0..n {
        ctrb.set_column(k, &col.column(0));
        col = &at * col;
    }
    let coeffs = poly_from_roots(targets);
    // Horner: φ(Aᵀ)
    let mut phi = Mat::identity(n, n) * coeffs[n];
    for k in (0..n).rev() {
        phi = &phi * &at + Mat::identity(n, n) * coeffs[k];
    }
    let mut en = Vector::zeros(n);
    en[n - 1] = 1.0;
    // row vector e_nᵀ 𝒞⁻¹ via 𝒞ᵀ w = e_n
    let w = ctrb
        .transpose()
        .lu()
        .solve(&en)
        .ok_or(LinalgError::Singular)?;
    let k = w.transpose() * phi;
    Ok(Mat::from_fn(n, 1, |i, _| -k[i]))
}

fn target_block_matrix(targets: &[Complex64], jordan: bool) -> Mat {
    let n = targets.len();
    let mut sorted = targets.to_vec();
    sort_complex(&mut sorted);
    let mut lam = Mat::zeros(n, n);
    let mut i = 0;
    let mut prev_real: Option<f64> = None;
    for z in sorted.iter().filter(|z| z.im >= 0.0) {
        if z.im == 0.0 {
            lam[(i, i)] = z.re;
            if jordan && i > 0 && prev_real == Some(z.re) {
                lam[(i - 1, i)] = 1.0;
            }
            prev_real = Some(z.re);
            i += 1;
        } else {
            lam[(i, i)] = z.re;
            lam[(i + 1, i + 1)] = z.re;
            lam[(i, i + 1)] = z.im;
            lam[(i + 1, i)] = -z.im;
            prev_real = None;
            i += 2;
        }
    }
    lam
}

fn sylvester_assignment(a: &Mat, c: &Mat, targets: &[Complex64]) -> Result<Mat, LinalgError> {
    let n = a.nrows();
    let ny = c.nrows();
    let at = a.transpose();
    let b = c.transpose();
    let eye = Mat::identity(n, n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0b5e);
    for jordan in [false, true] {
        let lam = target_block_matrix(targets, jordan);
        // vec(Aᵀ X) − vec(X Λ) = (I ⊗ Aᵀ − Λᵀ ⊗ I) vec X
        let lhs = kron(&eye, &at) - kron(&lam.transpose(), &eye);
        for _ in 0..16 {
            let g = Mat::from_fn(ny, n, |_, _| rng.random_range(-1.0..1.0));
            let rhs_m = &b * &g;
            let Ok(x) = solve_dense(lhs.clone(), &Vector::from_column_slice(rhs_m.as_slice()))
            else {
                continue;
            };
            let x = Mat::from_column_slice(n, n, x.as_slice());
            let sv = x.clone().svd(false, false).singular_values;
            let smax = sv.max();
            let smin = sv.min();
            if !(smin > smax * 1e-10) {
                continue;
            }
            let Some(xinv) = x.try_inverse() else {
                continue;
            };
            let k = g * xinv;
            let l = -k.transpose();
            if spectra_match(&(a + &l * c), targets, 1e-6)? {
                return Ok(l);
            }
        }
    }
    Err(LinalgError::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = sym_eig(&Mat::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_matrix_eigenvalues() {
        let e = sym_eig(&Mat::zeros(2, 2)).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0, 0.0]);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let e = sym_eig(&m(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(
            sym_eig(&Mat::zeros(2, 3)),
            Err(LinalgError::NonSquare { .. })
        ));
        assert!(matches!(
            sym_eig(&m(2, 2, &[1.0, 2.0, 0.0, 1.0])),
            Err(LinalgError::Asymmetric { .. })
        ));
    }

    #[test]
    fn nsd_examples() {
        assert!(is_negative_semidefinite(&Mat::zeros(3, 3), 0.0).unwrap());
        let d = Mat::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0]));
        assert!(!is_negative_semidefinite(&d, 1e-9).unwrap());
        let d = Mat::from_diagonal(&Vector::from_vec(vec![-1.0, 5e-10]));
        assert!(is_negative_semidefinite(&d, 1e-9).unwrap());
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov(&(-Mat::identity(2, 2)), 2.0).unwrap();
        assert!(max_abs(&(p - Mat::identity(2, 2))) < 1e-14);

        let acl = Mat::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
        let p = solve_lyapunov(&acl, 2.0).unwrap();
        assert!(max_abs(&(p - Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.5])))) < 1e-14);
    }

    /// Quadrature of `∫₀^∞ e^{Aᵀt} ν e^{At} dt` with RK4-propagated matrix
    /// exponentials, independent of the Kronecker solve.
    fn lyapunov_by_quadrature(acl: &Mat, nu: f64) -> Mat {
        let n = acl.nrows();
        let h = 1e-3;
        let step = {
            let a = acl.clone();
            let ah = &a * h;
            let a2 = &ah * &ah;
            let a3 = &a2 * &ah;
            let a4 = &a3 * &ah;
            Mat::identity(n, n) + &ah + a2 / 2.0 + a3 / 6.0 + a4 / 24.0
        };
        let mut e = Mat::identity(n, n);
        let mut acc = Mat::zeros(n, n);
        let mut prev = e.transpose() * &e * nu;
        for _ in 0..40_000 {
            e = &step * &e;
            let cur = e.transpose() * &e * nu;
            acc += (&prev + &cur) * (h / 2.0);
            prev = cur;
        }
        acc
    }

    #[test]
    fn lyapunov_companion_matches_quadrature() {
        let acl = m(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let p = solve_lyapunov(&acl, 2.0).unwrap();
        let q = Mat::identity(2, 2) * 2.0;
        assert!(lyapunov_residual(&acl, &p, &q) <= 1e-8 * 2.0);
        let oracle = lyapunov_by_quadrature(&acl, 2.0);
        assert!(max_abs(&(&p - &oracle)) < 1e-5, "{p} vs {oracle}");
        assert!(sym_eig(&p).unwrap().min() > 0.0);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let err = solve_lyapunov(&Mat::identity(2, 2), 1.0).unwrap_err();
        assert!(matches!(err, LinalgError::NotHurwitz { .. }));
    }

    #[test]
    fn injection_diagonal() {
        let l = stabilizing_output_injection(
            &(-Mat::identity(2, 2)),
            &Mat::identity(2, 2),
            &[c(-2.0), c(-2.0)],
        )
        .unwrap();
        assert!(max_abs(&(l + Mat::identity(2, 2))) < 1e-10);
    }

    #[test]
    fn injection_double_integrator() {
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let cm = m(1, 2, &[1.0, 0.0]);
        let l = stabilizing_output_injection(&a, &cm, &[c(-1.0), c(-1.0)]).unwrap();
        assert!((l[(0, 0)] + 2.0).abs() < 1e-12);
        assert!((l[(1, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn injection_identity_case() {
        let a = m(2, 2, &[-1.0, 0.5, 0.0, -3.0]);
        let cm = m(1, 2, &[1.0, 1.0]);
        let l = stabilizing_output_injection(&a, &cm, &[c(-1.0), c(-3.0)]).unwrap();
        assert_eq!(max_abs(&l), 0.0);
    }

    #[test]
    fn injection_rejects_unobservable_and_bad_targets() {
        let err =
            stabilizing_output_injection(&Mat::zeros(2, 2), &m(1, 2, &[1.0, 0.0]), &[c(-1.0), c(-2.0)])
                .unwrap_err();
        assert!(matches!(err, LinalgError::NotObservable { rank: 1, n: 2 }));
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let cm = m(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            stabilizing_output_injection(&a, &cm, &[c(-1.0), c(1.0)]),
            Err(LinalgError::BadTargets(_))
        ));
        assert!(matches!(
            stabilizing_output_injection(&a, &cm, &[Complex64::new(-1.0, 1.0), c(-1.0)]),
            Err(LinalgError::BadTargets(_))
        ));
    }

    #[test]
    fn injection_complex_targets_mimo() {
        let a = m(
            3,
            3,
            &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.5],
        );
        let cm = m(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let targets = [Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0), c(-3.0)];
        let l = stabilizing_output_injection(&a, &cm, &targets).unwrap();
        assert!(spectra_match(&(&a + &l * &cm), &targets, 1e-6).unwrap());
    }

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = Mat::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
        (&r + r.transpose()) * 0.5
    }

    proptest! {
        #[test]
        fn eig_reconstructs(n in 1usize..=12, seed in any::<u64>()) {
            let s = random_symmetric(n, seed);
            let e = sym_eig(&s).unwrap();
            let scale = tol_scale(&s);
            prop_assert!(max_abs(&(e.reconstruct() - &s)) <= 1e-9 * scale);
            let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
            prop_assert!(max_abs(&(vtv - Mat::identity(n, n))) <= 1e-9);
            prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn nsd_agrees_with_quadratic_form_samples(n in 1usize..=6, seed in any::<u64>()) {
            let s = random_symmetric(n, seed) - Mat::identity(n, n) * 3.0;
            let tol = 1e-9;
            let nsd = is_negative_semidefinite(&s, tol).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut sampled = true;
            for _ in 0..1000 {
                let x = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                if (x.transpose() * &s * &x)[(0, 0)] > tol * x.norm_squared() {
                    sampled = false;
                    break;
                }
            }
            // sampling can miss a thin positive cone, never the converse
            if !sampled {
                prop_assert!(!nsd);
            }
            if nsd {
                prop_assert!(sampled);
            }
        }
    }

    #[test]
    fn lyapunov_random_hurwitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let v = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) + Mat::identity(n, n) * 2.0;
            let d = Mat::from_diagonal(&Vector::from_fn(n, |_, _| -rng.random_range(0.2..5.0)));
            let acl = &v * d * v.clone().try_inverse().unwrap();
            let nu = 2.0;
            let p = solve_lyapunov(&acl, nu).unwrap();
            let q = Mat::identity(n, n) * nu;
            assert!(lyapunov_residual(&acl, &p, &q) <= 1e-8 * nu);
            assert!(sym_eig(&p).unwrap().min() > 0.0);
        }
    }

    #[test]
    fn injection_spectrum_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..=5);
            let ny = rng.random_range(1..=2);
            let a = Mat::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            let cm = Mat::from_fn(ny, n, |_, _| rng.random_range(-1.0..1.0));
            let targets: Vec<Complex64> = (0..n).map(|k| c(-1.0 - k as f64 * 0.7)).collect();
            let l = stabilizing_output_injection(&a, &cm, &targets).unwrap();
            assert!(spectra_match(&(&a + &l * &cm), &targets, 1e-6).unwrap());
        }
    }
}
