//! From-scratch regression and classification learners: CART trees,
//! gradient boosting, random forests, ridge regression and regularized
//! logistic regression, plus split-gain / coefficient based importances.

mod forest;
mod gbt;
mod linear;
mod logistic;
mod tree;

pub use forest::{ForestParams, RandomForest};
pub use gbt::{GbtParams, GradientBoostedTrees};
pub use linear::LinearModel;
pub use logistic::{
    penalized_gradient, penalized_log_likelihood, LogisticModel, NewtonTrace, GRADIENT_TOLERANCE, MAX_ITERATIONS,
};
pub use tree::{best_split, Node, RegressionTree, SortedColumns, TreeParams};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Models that expose a normalized per-column importance vector.
pub trait Importance<T: Real> {
    /// Unnormalized, non-negative importance per input column.
    fn raw_importance(&self) -> Result<Vec<T>>;

    /// Importance normalized to sum to one; uniform when every raw value is zero.
    fn importance(&self) -> Result<Vec<T>> {
        normalize(self.raw_importance()?)
    }
}

pub(crate) fn normalize<T: Real>(raw: Vec<T>) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Err(Error::State("importance requested for a model with no inputs".into()));
    }
    let total: T = raw.iter().copied().sum();
    if total > T::zero() && total.is_finite() {
        Ok(raw.into_iter().map(|v| v / total).collect())
    } else {
        let u = T::one() / T::of_usize(raw.len());
        Ok(vec![u; raw.len()])
    }
}

fn summed_gains<T: Real>(trees: &[RegressionTree<T>], width: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); width];
    for tree in trees {
        for (a, g) in acc.iter_mut().zip(tree.feature_gains()) {
            *a = *a + g;
        }
    }
    acc
}

impl<T: Real> Importance<T> for RegressionTree<T> {
    fn raw_importance(&self) -> Result<Vec<T>> {
        Ok(self.feature_gains())
    }
}

/// Split gains as recorded while fitting each tree on its residuals; the
/// learning rate is not applied.
impl<T: Real> Importance<T> for GradientBoostedTrees<T> {
    fn raw_importance(&self) -> Result<Vec<T>> {
        Ok(summed_gains(self.trees(), self.n_features()))
    }
}

impl<T: Real> Importance<T> for RandomForest<T> {
    fn raw_importance(&self) -> Result<Vec<T>> {
        Ok(summed_gains(self.trees(), self.n_features()))
    }
}

/// `|coefficient| × training-column std`.
impl<T: Real> Importance<T> for LinearModel<T> {
    fn raw_importance(&self) -> Result<Vec<T>> {
        Ok(self
            .coefficients()
            .iter()
            .zip(self.column_std())
            .map(|(c, s)| c.abs() * *s)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn single_split_tree_puts_all_weight_on_its_feature() {
        let x = Matrix::from_rows(&[vec![5.0, 0.0], vec![5.0, 0.0], vec![5.0, 1.0], vec![5.0, 1.0]]).unwrap();
        let tree = RegressionTree::fit(&x, &[0.0, 0.0, 10.0, 10.0], &TreeParams::default()).unwrap();
        assert_eq!(tree.importance().unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_coefficient_gets_zero_share() {
        let m = LinearModel::<f64>::from_parts(0.0, vec![2.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.importance().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn all_zero_is_uniform() {
        let m = LinearModel::<f64>::from_parts(1.0, vec![0.0, 0.0, 0.0, 0.0], vec![1.0; 4]).unwrap();
        assert_eq!(m.importance().unwrap(), vec![0.25; 4]);
        let empty = LinearModel::<f64>::from_parts(1.0, vec![], vec![]).unwrap();
        assert!(matches!(empty.importance(), Err(Error::State(_))));
    }
}
