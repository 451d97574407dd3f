//! Stagewise squared-loss gradient boosting over CART trees.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{check_width, grow, RegressionTree, SortedColumns, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    /// Row fraction drawn without replacement for each tree, in (0, 1].
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 200,
            max_depth: 4,
            min_samples_leaf: 5,
            learning_rate: 0.05,
            subsample: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostedTrees<T> {
    initial_prediction: T,
    learning_rate: T,
    trees: Vec<RegressionTree<T>>,
    n_features: usize,
    params: GbtParams,
}

impl<T: Real> GradientBoostedTrees<T> {
    pub fn fit(x: &Matrix<T>, y: &[T], params: &GbtParams) -> Result<Self> {
        if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
            return Err(Error::Param(format!(
                "learning_rate must be positive, got {}",
                params.learning_rate
            )));
        }
        if !(params.subsample > 0.0 && params.subsample <= 1.0) {
            return Err(Error::Param(format!(
                "subsample must lie in (0, 1], got {}",
                params.subsample
            )));
        }
        if x.rows() != y.len() {
            return Err(Error::Shape {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if y.len() < 2 {
            return Err(Error::Fit("boosting needs at least two samples".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite target".into()));
        }
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: 1.0,
        };
        tree_params.validate()?;

        let n = y.len();
        let initial = y.iter().copied().sum::<T>() / T::of_usize(n);
        let lr = T::of(params.learning_rate);
        let columns = SortedColumns::new(x);
        let mut prediction = vec![initial; n];
        let mut residual = vec![T::zero(); n];
        let mut rng = crate::rng::stream(params.seed, 0x6762_74);
        let draw = ((params.subsample * n as f64).round() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            for i in 0..n {
                residual[i] = y[i] - prediction[i];
            }
            let mut rows: Vec<usize> = if draw == n {
                (0..n).collect()
            } else {
                sample(&mut rng, n, draw).into_vec()
            };
            rows.sort_unstable();
            let tree = grow(&columns, &residual, rows, &tree_params, &mut rng);
            for (i, p) in prediction.iter_mut().enumerate() {
                *p = *p + lr * tree.predict_row(x.row(i));
            }
            trees.push(tree);
        }
        Ok(GradientBoostedTrees {
            initial_prediction: initial,
            learning_rate: lr,
            trees,
            n_features: x.cols(),
            params: *params,
        })
    }

    pub fn initial_prediction(&self) -> T {
        self.initial_prediction
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    pub fn params(&self) -> &GbtParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        self.predict_row_staged(row, self.trees.len())
    }

    /// Prediction using only the first `n_trees` trees.
    pub fn predict_row_staged(&self, row: &[T], n_trees: usize) -> T {
        let sum: T = self.trees[..n_trees.min(self.trees.len())]
            .iter()
            .map(|t| t.predict_row(row))
            .sum();
        self.initial_prediction + self.learning_rate * sum
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_case() -> (Matrix<f64>, Vec<f64>) {
        (
            Matrix::column_vector(&[0.0, 0.0, 1.0, 1.0]),
            vec![0.0, 0.0, 10.0, 10.0],
        )
    }

    #[test]
    fn one_stump_with_unit_rate_fits_hand_case_exactly() {
        let (x, y) = hand_case();
        let params = GbtParams {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            seed: 0,
        };
        let model = GradientBoostedTrees::fit(&x, &y, &params).unwrap();
        assert_eq!(model.initial_prediction(), 5.0);
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn zero_trees_predicts_mean() {
        let (x, y) = hand_case();
        let params = GbtParams {
            n_trees: 0,
            ..GbtParams::default()
        };
        let model = GradientBoostedTrees::fit(&x, &y, &params).unwrap();
        assert_eq!(model.predict(&x).unwrap(), vec![5.0; 4]);
    }

    #[test]
    fn vanishing_rate_stays_near_mean() {
        let (x, y) = hand_case();
        let params = GbtParams {
            n_trees: 50,
            learning_rate: 1e-9,
            min_samples_leaf: 1,
            ..GbtParams::default()
        };
        let model = GradientBoostedTrees::fit(&x, &y, &params).unwrap();
        for p in model.predict(&x).unwrap() {
            assert!((p - 5.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let (x, y) = hand_case();
        for lr in [0.0, -1.0, f64::NAN] {
            let params = GbtParams {
                learning_rate: lr,
                ..GbtParams::default()
            };
            assert!(matches!(
                GradientBoostedTrees::fit(&x, &y, &params),
                Err(Error::Param(_))
            ));
        }
    }

    #[test]
    fn runs_in_single_precision() {
        let x = Matrix::<f32>::column_vector(&[0.0, 0.0, 1.0, 1.0]);
        let y = [0.0f32, 0.0, 10.0, 10.0];
        let params = GbtParams {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            seed: 0,
        };
        let model = GradientBoostedTrees::fit(&x, &y, &params).unwrap();
        assert_eq!(model.predict(&x).unwrap(), y.to_vec());
    }
}
