use serde::{Deserialize, Serialize};

use super::tree::check_width;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Ridge regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    intercept: T,
    coefficients: Vec<T>,
    ridge_lambda: T,
    /// Population std of each training column, kept for importance weighting.
    column_std: Vec<T>,
}

impl<T: Real> LinearModel<T> {
    /// Minimizes `‖y − Xβ − b‖² + λ‖β‖²` through the centred normal equations
    /// and a Cholesky solve.
    pub fn fit(x: &Matrix<T>, y: &[T], ridge_lambda: f64) -> Result<Self> {
        let (n, p) = (x.rows(), x.cols());
        if n != y.len() {
            return Err(Error::Shape { expected: n, got: y.len() });
        }
        if n == 0 {
            return Err(Error::Fit("cannot fit a linear model on zero rows".into()));
        }
        if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::Param(format!("ridge_lambda must be >= 0, got {ridge_lambda}")));
        }
        // Normal equations are accumulated and solved in double precision
        // whatever `T` is; single-precision Gram matrices lose rank quickly.
        let nf = n as f64;
        let y_mean = y.iter().map(|v| v.as_f64()).sum::<f64>() / nf;
        let mut x_mean = vec![0.0f64; p];
        for r in 0..n {
            for (m, &v) in x_mean.iter_mut().zip(x.row(r)) {
                *m += v.as_f64();
            }
        }
        for m in &mut x_mean {
            *m /= nf;
        }

        let mut gram = vec![0.0f64; p * p];
        let mut rhs = vec![0.0f64; p];
        let mut centred = vec![0.0f64; p];
        for r in 0..n {
            for (c, (&v, &m)) in x.row(r).iter().zip(&x_mean).enumerate() {
                centred[c] = v.as_f64() - m;
            }
            let yc = y[r].as_f64() - y_mean;
            for i in 0..p {
                let ci = centred[i];
                rhs[i] += ci * yc;
                for j in 0..=i {
                    gram[i * p + j] += ci * centred[j];
                }
            }
        }
        let column_std = (0..p).map(|i| T::of((gram[i * p + i] / nf).sqrt())).collect();
        for i in 0..p {
            for j in 0..i {
                gram[j * p + i] = gram[i * p + j];
            }
            gram[i * p + i] += ridge_lambda;
        }

        let beta: Vec<f64> = if p == 0 {
            Vec::new()
        } else {
            solve_spd(&gram, p, &rhs).map_err(|e| match e {
                Error::Singular(msg) if ridge_lambda == 0.0 => {
                    Error::Singular(format!("normal equations are singular without ridge ({msg})"))
                }
                other => other,
            })?
        };
        let intercept = T::of(y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>());
        let coefficients = beta.into_iter().map(T::of).collect();
        let lambda = T::of(ridge_lambda);
        Ok(LinearModel {
            intercept,
            coefficients,
            ridge_lambda: lambda,
            column_std,
        })
    }

    pub fn from_parts(intercept: T, coefficients: Vec<T>, column_std: Vec<T>) -> Result<Self> {
        if coefficients.len() != column_std.len() {
            return Err(Error::Shape {
                expected: coefficients.len(),
                got: column_std.len(),
            });
        }
        Ok(LinearModel {
            intercept,
            coefficients,
            ridge_lambda: T::zero(),
            column_std,
        })
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn ridge_lambda(&self) -> T {
        self.ridge_lambda
    }

    pub fn column_std(&self) -> &[T] {
        &self.column_std
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(&b, &v)| b * v)
                .sum::<T>()
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        check_width(self.coefficients.len(), x)?;
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0]);
        let m = LinearModel::fit(&x, &[1.0, 3.0, 5.0], 0.0).unwrap();
        assert!((m.intercept() - 1.0f64).abs() < 1e-12);
        assert!((m.coefficients()[0] - 2.0f64).abs() < 1e-12);
    }

    #[test]
    fn constant_target_gives_flat_fit() {
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0, 7.0]);
        let m = LinearModel::<f64>::fit(&x, &[4.0; 4], 0.0).unwrap();
        assert!(m.coefficients()[0].abs() < 1e-12);
        assert!((m.intercept() - 4.0f64).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular_without_ridge() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let err = LinearModel::fit(&x, &[1.0, 3.0, 5.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(LinearModel::fit(&x, &[1.0, 3.0, 5.0], 1e-6).is_ok());
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0]);
        let m = LinearModel::fit(&x, &[1.0, 3.0, 5.0], 0.0).unwrap();
        let wide = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(m.predict(&wide), Err(Error::Shape { expected: 1, got: 2 })));
    }
}
