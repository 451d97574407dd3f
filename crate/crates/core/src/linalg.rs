//! Small dense solvers for the normal equations and Newton systems.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// stored row-major as `n × n`.
pub fn cholesky<T: Real>(a: &[T], n: usize) -> Result<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(T::zero(), |acc, v| acc.max(v));
    let tol = scale * T::epsilon() * T::of_usize(n.max(1)) * T::of(16.0);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= tol {
                    return Err(Error::Singular(format!(
                        "pivot {i} is {sum} (tolerance {tol})"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum = sum - l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// Solves the SPD system `a x = b`.
pub fn solve_spd<T: Real>(a: &[T], n: usize, b: &[T]) -> Result<Vec<T>> {
    let l = cholesky(a, n)?;
    Ok(cholesky_solve(&l, n, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = solve_spd(&a, 2, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0f64).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0f64).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(matches!(solve_spd(&a, 2, &[1.0, 1.0]), Err(Error::Singular(_))));
    }
}
