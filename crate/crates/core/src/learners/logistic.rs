//! L2-regularized logistic regression solved by damped Newton iterations.
//!
//! Inputs are standardized internally. The objective is the mean
//! log-likelihood minus `λ/2 ‖w‖²`; the intercept is not penalized.

use serde::{Deserialize, Serialize};

use super::tree::check_width;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<T> {
    intercept: T,
    coefficients: Vec<T>,
    ridge_lambda: T,
    input_mean: Vec<T>,
    input_std: Vec<T>,
    iterations: usize,
}

/// Objective values after each accepted Newton step, starting at the origin.
#[derive(Debug, Clone)]
pub struct NewtonTrace<T> {
    pub objective: Vec<T>,
    pub final_gradient_norm: T,
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn linear_term<T: Real>(theta: &[T], row: &[T]) -> T {
    theta[0] + theta[1..].iter().zip(row).map(|(&w, &v)| w * v).sum::<T>()
}

/// Mean log-likelihood minus `λ/2 ‖w‖²` at `theta = [intercept, w...]` on
/// already-standardized inputs `z`.
pub fn penalized_log_likelihood<T: Real>(theta: &[T], z: &Matrix<T>, y: &[bool], lambda: T) -> T {
    let n = T::of_usize(z.rows());
    let ll: T = (0..z.rows())
        .map(|r| {
            let eta = linear_term(theta, z.row(r));
            if y[r] {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum();
    let penalty: T = theta[1..].iter().map(|&w| w * w).sum();
    ll / n - lambda * penalty / T::of(2.0)
}

/// Analytic gradient of [`penalized_log_likelihood`].
pub fn penalized_gradient<T: Real>(theta: &[T], z: &Matrix<T>, y: &[bool], lambda: T) -> Vec<T> {
    let n = T::of_usize(z.rows());
    let mut g = vec![T::zero(); theta.len()];
    for r in 0..z.rows() {
        let row = z.row(r);
        let resid = (if y[r] { T::one() } else { T::zero() }) - sigmoid(linear_term(theta, row));
        g[0] = g[0] + resid;
        for (gj, &v) in g[1..].iter_mut().zip(row) {
            *gj = *gj + resid * v;
        }
    }
    for gj in &mut g {
        *gj = *gj / n;
    }
    for (gj, &w) in g[1..].iter_mut().zip(&theta[1..]) {
        *gj = *gj - lambda * w;
    }
    g
}

fn max_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

impl<T: Real> LogisticModel<T> {
    /// One-dimensional fit, as used by the funding calibrator.
    pub fn fit(x: &[T], y: &[bool], ridge_lambda: f64) -> Result<Self> {
        Self::fit_matrix(&Matrix::column_vector(x), y, ridge_lambda)
    }

    pub fn fit_matrix(x: &Matrix<T>, y: &[bool], ridge_lambda: f64) -> Result<Self> {
        Self::fit_with_trace(x, y, ridge_lambda).map(|(m, _)| m)
    }

    pub fn fit_with_trace(x: &Matrix<T>, y: &[bool], ridge_lambda: f64) -> Result<(Self, NewtonTrace<T>)> {
        let (n, p) = (x.rows(), x.cols());
        if n != y.len() {
            return Err(Error::Shape { expected: n, got: y.len() });
        }
        if !(ridge_lambda > 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::Param(format!("ridge_lambda must be positive, got {ridge_lambda}")));
        }
        let positives = y.iter().filter(|&&v| v).count();
        if positives == 0 || positives == n {
            return Err(Error::Fit("logistic fit needs both classes".into()));
        }
        if !x.is_finite() {
            return Err(Error::Fit("non-finite logistic input".into()));
        }

        let mut input_mean = Vec::with_capacity(p);
        let mut input_std = Vec::with_capacity(p);
        for c in 0..p {
            let col = x.column(c);
            let m = crate::scalar::mean(&col).unwrap_or_else(T::zero);
            let s = crate::scalar::population_std(&col).unwrap_or_else(T::zero);
            input_mean.push(m);
            input_std.push(if s > T::zero() { s } else { T::one() });
        }
        let mut z = x.clone();
        for r in 0..n {
            for (c, v) in z.row_mut(r).iter_mut().enumerate() {
                *v = (*v - input_mean[c]) / input_std[c];
            }
        }

        let lambda = T::of(ridge_lambda);
        let dim = p + 1;
        let mut theta = vec![T::zero(); dim];
        let mut objective = penalized_log_likelihood(&theta, &z, y, lambda);
        let mut trace = vec![objective];
        let tol = T::of(GRADIENT_TOLERANCE);
        let nt = T::of_usize(n);

        for iteration in 0..=MAX_ITERATIONS {
            let grad = penalized_gradient(&theta, &z, y, lambda);
            let gnorm = max_norm(&grad);
            if gnorm < tol {
                let model = LogisticModel {
                    intercept: theta[0],
                    coefficients: theta[1..].to_vec(),
                    ridge_lambda: lambda,
                    input_mean,
                    input_std,
                    iterations: iteration,
                };
                return Ok((
                    model,
                    NewtonTrace {
                        objective: trace,
                        final_gradient_norm: gnorm,
                    },
                ));
            }
            if iteration == MAX_ITERATIONS {
                return Err(Error::Convergence {
                    iterations: MAX_ITERATIONS,
                    gradient_norm: gnorm.as_f64(),
                });
            }

            // Negative Hessian: (1/n) Σ p(1−p) a aᵀ + λ·diag(0, 1, …, 1).
            let mut hess = vec![T::zero(); dim * dim];
            let mut a = vec![T::one(); dim];
            for r in 0..n {
                a[1..].copy_from_slice(z.row(r));
                let pr = sigmoid(linear_term(&theta, z.row(r)));
                let w = pr * (T::one() - pr);
                for i in 0..dim {
                    for j in 0..=i {
                        hess[i * dim + j] = hess[i * dim + j] + w * a[i] * a[j];
                    }
                }
            }
            for i in 0..dim {
                for j in 0..=i {
                    hess[i * dim + j] = hess[i * dim + j] / nt;
                    hess[j * dim + i] = hess[i * dim + j];
                }
                if i > 0 {
                    hess[i * dim + i] = hess[i * dim + i] + lambda;
                }
            }
            // Saturated fits make p(1−p) underflow; a tiny ridge on the
            // intercept keeps the system solvable without moving the optimum.
            hess[0] = hess[0] + T::epsilon();
            let step = solve_spd(&hess, dim, &grad)?;

            let mut scale = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let candidate: Vec<T> = theta.iter().zip(&step).map(|(&t, &s)| t + scale * s).collect();
                let value = penalized_log_likelihood(&candidate, &z, y, lambda);
                if value >= objective {
                    theta = candidate;
                    objective = value;
                    accepted = true;
                    break;
                }
                scale = scale / T::of(2.0);
            }
            if !accepted {
                // No ascent direction left at working precision.
                if gnorm < T::of(1e-6) {
                    let model = LogisticModel {
                        intercept: theta[0],
                        coefficients: theta[1..].to_vec(),
                        ridge_lambda: lambda,
                        input_mean,
                        input_std,
                        iterations: iteration,
                    };
                    return Ok((
                        model,
                        NewtonTrace {
                            objective: trace,
                            final_gradient_norm: gnorm,
                        },
                    ));
                }
                return Err(Error::Convergence {
                    iterations: iteration,
                    gradient_norm: gnorm.as_f64(),
                });
            }
            trace.push(objective);
        }
        unreachable!("loop returns on its last iteration")
    }

    pub fn from_parts(intercept: T, coefficients: Vec<T>, input_mean: Vec<T>, input_std: Vec<T>) -> Result<Self> {
        if coefficients.len() != input_mean.len() || coefficients.len() != input_std.len() {
            return Err(Error::Shape {
                expected: coefficients.len(),
                got: input_mean.len(),
            });
        }
        Ok(LogisticModel {
            intercept,
            coefficients,
            ridge_lambda: T::zero(),
            input_mean,
            input_std,
            iterations: 0,
        })
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    /// Coefficients on the standardized inputs.
    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn input_mean(&self) -> &[T] {
        &self.input_mean
    }

    pub fn input_std(&self) -> &[T] {
        &self.input_std
    }

    pub fn ridge_lambda(&self) -> T {
        self.ridge_lambda
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_proba_row(&self, row: &[T]) -> T {
        let eta = self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .zip(self.input_mean.iter().zip(&self.input_std))
                .map(|((&w, &v), (&m, &s))| w * (v - m) / s)
                .sum::<T>();
        sigmoid(eta)
    }

    pub fn predict_proba(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        check_width(self.coefficients.len(), x)?;
        Ok((0..x.rows()).map(|r| self.predict_proba_row(x.row(r))).collect())
    }

    /// Probability for a single scalar input (one-dimensional models).
    pub fn predict_scalar(&self, value: T) -> Result<T> {
        if self.coefficients.len() != 1 {
            return Err(Error::Shape {
                expected: self.coefficients.len(),
                got: 1,
            });
        }
        Ok(self.predict_proba_row(&[value]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn symmetric_data_is_even_odds_at_zero() {
        let x = [-2.0, -1.0, -1.0, 1.0, 1.0, 2.0];
        let y = [false, false, true, false, true, true];
        let m = LogisticModel::<f64>::fit(&x, &y, 1e-3).unwrap();
        assert!((m.predict_scalar(0.0).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn separable_data_converges_with_finite_coefficients() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let m = LogisticModel::fit(&x, &y, 1e-3).unwrap();
        assert!(m.coefficients()[0].is_finite() && m.coefficients()[0] > 0.0);
        assert!(m.predict_scalar(39.0).unwrap() > 0.9);
        assert!(m.predict_scalar(0.0).unwrap() < 0.1);
    }

    #[test]
    fn single_class_is_fit_error() {
        assert!(matches!(
            LogisticModel::<f64>::fit(&[1.0, 2.0], &[true, true], 1e-3),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn zero_coefficient_closed_form() {
        let m = LogisticModel::<f64>::from_parts(0.7, vec![0.0], vec![3.0], vec![2.0]).unwrap();
        let want = 1.0 / (1.0 + (-0.7f64).exp());
        assert!((m.predict_scalar(3.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn objective_increases_across_newton_steps() {
        let mut rng = crate::rng::stream(21, 0);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<bool> = rows
            .iter()
            .map(|r| rng.gen::<f64>() < 1.0 / (1.0 + (-(2.0 * r[0] - r[1])).exp()))
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let (_, trace) = LogisticModel::fit_with_trace(&x, &y, 1e-3).unwrap();
        assert!(trace.objective.windows(2).all(|w| w[1] >= w[0]));
        assert!(trace.final_gradient_norm < GRADIENT_TOLERANCE);
    }
}
