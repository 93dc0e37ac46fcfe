use crate::scalar::{vdot, Real};

use super::dense::{cholesky, sym_eigen, DenseMatrix};
use super::krylov::{pcg, Jacobi, SolveOptions};
use super::sparse::Csr;
use super::SolverError;

/// Largest size accepted by the dense eigensolver.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CondMethod {
    Dense,
    Lanczos,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub kappa: T,
    pub lambda_min: T,
    pub lambda_max: T,
}

/// Spectral condition number of a symmetric positive definite matrix.
///
/// The dense path takes `lambda_max` from the full eigensolve and
/// `lambda_min` as `1 / lambda_max(A^{-1})` with the inverse formed through
/// Cholesky, which keeps relative accuracy on badly graded matrices where a
/// direct eigensolve would lose `lambda_min` in round-off.
pub fn condition_number<T: Real>(a: &Csr<T>, method: CondMethod) -> Result<Spectrum<T>, SolverError> {
    let n = a.rows;
    if n == 0 {
        return Err(SolverError::Indefinite);
    }
    let (lambda_min, lambda_max) = match method {
        CondMethod::Dense => {
            if n > DENSE_LIMIT {
                return Err(SolverError::TooLarge { size: n, limit: DENSE_LIMIT });
            }
            let dense = a.to_dense();
            let lmax = *sym_eigen(&dense, false).values.last().expect("non-empty");
            let inv = cholesky(&dense)?.inverse();
            let imax = *sym_eigen(&inv, false).values.last().expect("non-empty");
            if !(imax > T::zero()) || !(lmax > T::zero()) {
                return Err(SolverError::Indefinite);
            }
            (T::one() / imax, lmax)
        }
        CondMethod::Lanczos => (inverse_iteration(a, 200)?, lanczos_max(a, 200)),
    };
    Ok(Spectrum { kappa: lambda_max / lambda_min, lambda_min, lambda_max })
}

fn start_vector<T: Real>(n: usize) -> Vec<T> {
    // deterministic and not orthogonal to smooth or oscillatory modes
    let v: Vec<T> = (0..n).map(|i| T::one() + T::lit(((i * 7919) % 1013) as f64 / 1013.0)).collect();
    let nv = vdot(&v, &v).sqrt();
    v.into_iter().map(|x| x / nv).collect()
}

/// Largest eigenvalue by Lanczos with full reorthogonalisation.
pub fn lanczos_max<T: Real>(a: &Csr<T>, iters: usize) -> T {
    let n = a.rows;
    let steps = iters.min(n);
    let mut basis: Vec<Vec<T>> = vec![start_vector(n)];
    let mut alpha = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    for k in 0..steps {
        let mut w = a.matvec(&basis[k]);
        let ak = vdot(&w, &basis[k]);
        alpha.push(ak);
        for q in &basis {
            let c = vdot(&w, q);
            for (wi, &qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
        let bk = vdot(&w, &w).sqrt();
        if k + 1 == steps || bk <= T::epsilon() * ak.abs().max(T::one()) {
            break;
        }
        beta.push(bk);
        basis.push(w.into_iter().map(|x| x / bk).collect());
    }
    let m = alpha.len();
    let t = DenseMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i.abs_diff(j) == 1 {
            beta[i.min(j)]
        } else {
            T::zero()
        }
    });
    *sym_eigen(&t, false).values.last().expect("non-empty")
}

/// Smallest eigenvalue by inverse iteration with Jacobi-preconditioned CG solves.
pub fn inverse_iteration<T: Real>(a: &Csr<T>, iters: usize) -> Result<T, SolverError> {
    let jac = Jacobi::new(a).map_err(|_| SolverError::Indefinite)?;
    let opts = SolveOptions { tol: T::tol(1e-13), maxit: Some(20 * a.rows) };
    let mut x = start_vector::<T>(a.rows);
    let mut lambda = vdot(&x, &a.matvec(&x));
    for _ in 0..iters {
        let (y, _) = pcg(a, &x, Some(&jac), &opts).map_err(|_| SolverError::Indefinite)?;
        let ny = vdot(&y, &y).sqrt();
        if !(ny > T::zero()) {
            return Err(SolverError::Indefinite);
        }
        x = y.into_iter().map(|v| v / ny).collect();
        let next = vdot(&x, &a.matvec(&x));
        let done = (next - lambda).abs() <= T::tol(1e-12) * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    if !(lambda > T::zero()) {
        return Err(SolverError::Indefinite);
    }
    Ok(lambda)
}

/// `D^{-1/2} A D^{-1/2}` with `D = diag(A)`.
pub fn jacobi_scale<T: Real>(a: &Csr<T>) -> Result<Csr<T>, SolverError> {
    let d = a.diagonal();
    if let Some(i) = d.iter().position(|&v| !(v > T::zero())) {
        return Err(SolverError::NonPositiveDiagonal(i));
    }
    let s: Vec<T> = d.iter().map(|&v| T::one() / v.sqrt()).collect();
    let mut out = a.clone();
    for i in 0..a.rows {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            out.values[k] = a.values[k] * s[i] * s[a.col_idx[k]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let a = Csr::from_dense(&DenseMatrix::diag(&[1.0f64, 4.0]));
        let s = condition_number(&a, CondMethod::Dense).unwrap();
        assert!((s.kappa - 4.0).abs() < 1e-14);
        let s = condition_number(&a, CondMethod::Lanczos).unwrap();
        assert!((s.kappa - 4.0).abs() < 1e-10);
    }

    #[test]
    fn scale_invariance() {
        let n = 25;
        let lap = Csr::from_dense(&DenseMatrix::from_fn(n, n, |i, j| if i == j { 2.0f64 } else if i.abs_diff(j) == 1 { -1.0 } else { 0.0 }));
        let k1 = condition_number(&lap, CondMethod::Dense).unwrap().kappa;
        let k7 = condition_number(&lap.scaled(7.0), CondMethod::Dense).unwrap().kappa;
        assert!((k1 - k7).abs() < 1e-10 * k1);
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let exact = (1.0 - (n as f64 * h).cos()) / (1.0 - h.cos());
        assert!((k1 - exact).abs() < 1e-9 * exact);
        let kl = condition_number(&lap, CondMethod::Lanczos).unwrap().kappa;
        assert!((kl - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn indefinite_and_too_large() {
        let a = Csr::from_dense(&DenseMatrix::diag(&[1.0, -1.0]));
        assert_eq!(condition_number(&a, CondMethod::Dense).unwrap_err(), SolverError::Indefinite);
        let big = Csr::<f64>::identity(DENSE_LIMIT + 1);
        assert!(matches!(condition_number(&big, CondMethod::Dense), Err(SolverError::TooLarge { .. })));
    }

    #[test]
    fn graded_matrix_keeps_small_eigenvalue() {
        let a = Csr::from_dense(&DenseMatrix::from_fn(3, 3, |i, j| [[1e-14f64, 1e-15, 0.0], [1e-15, 1.0, 0.1], [0.0, 0.1, 2.0]][i][j]));
        let s = condition_number(&a, CondMethod::Dense).unwrap();
        // exact smallest eigenvalue to leading order
        let schur = 1e-14 - 1e-30 * 2.0 / (2.0 - 0.01);
        assert!((s.lambda_min - schur).abs() < 1e-6 * schur);
    }

    #[test]
    fn jacobi_scaling() {
        let a = Csr::from_dense(&DenseMatrix::from_fn(2, 2, |i, j| [[4.0f64, 1.0], [1.0, 9.0]][i][j]));
        let s = jacobi_scale(&a).unwrap();
        assert_eq!(s.diagonal(), vec![1.0, 1.0]);
        assert!((s.get(0, 1) - 1.0 / 6.0).abs() < 1e-16);
        assert_eq!(s.asymmetry(), 0.0);
        let unit = Csr::from_dense(&DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.3 }));
        assert_eq!(jacobi_scale(&unit).unwrap(), unit);
        let bad = Csr::from_dense(&DenseMatrix::diag(&[1.0, 0.0]));
        assert_eq!(jacobi_scale(&bad).unwrap_err(), SolverError::NonPositiveDiagonal(1));
    }
}
