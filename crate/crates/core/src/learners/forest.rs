use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_width, grow, RegressionTree, SortedColumns, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of columns considered at each split.
    pub max_features: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 300,
            max_depth: 12,
            min_samples_leaf: 1,
            max_features: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    trees: Vec<RegressionTree<T>>,
    tree_seeds: Vec<u64>,
    n_features: usize,
    params: ForestParams,
}

impl<T: Real> RandomForest<T> {
    pub fn fit(x: &Matrix<T>, y: &[T], params: &ForestParams) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::Param("a forest needs at least one tree".into()));
        }
        if x.rows() != y.len() {
            return Err(Error::Shape {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if y.len() < 2 {
            return Err(Error::Fit("a forest needs at least two samples".into()));
        }
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: params.max_features,
        };
        tree_params.validate()?;

        let columns = SortedColumns::new(x);
        let n = y.len();
        let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
            .map(|t| crate::rng::derive_seed(params.seed, t))
            .collect();
        let trees = tree_seeds
            .par_iter()
            .map(|&seed| {
                let mut rng = crate::rng::stream(seed, 0);
                let rows: Vec<usize> = if params.bootstrap {
                    let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                    rows.sort_unstable();
                    rows
                } else {
                    (0..n).collect()
                };
                grow(&columns, y, rows, &tree_params, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            trees,
            tree_seeds,
            n_features: x.cols(),
            params: *params,
        })
    }

    /// Builds a forest from already-fitted trees (all must share a width).
    pub fn from_trees(trees: Vec<RegressionTree<T>>, params: ForestParams) -> Result<Self> {
        let n_features = trees
            .first()
            .map(|t| t.n_features())
            .ok_or_else(|| Error::Param("a forest needs at least one tree".into()))?;
        if let Some(t) = trees.iter().find(|t| t.n_features() != n_features) {
            return Err(Error::Shape {
                expected: n_features,
                got: t.n_features(),
            });
        }
        let tree_seeds = vec![params.seed; trees.len()];
        Ok(RandomForest {
            trees,
            tree_seeds,
            n_features,
            params,
        })
    }

    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / T::of_usize(self.trees.len())
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Matrix<f64>, Vec<f64>) {
        let mut rng = crate::rng::stream(9, 0);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = rows.iter().map(|r| 2.0 * r[0] - r[1] * r[2]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = data();
        let params = ForestParams {
            n_trees: 10,
            seed: 4,
            ..ForestParams::default()
        };
        let a = RandomForest::fit(&x, &y, &params).unwrap();
        let b = RandomForest::fit(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        let c = RandomForest::fit(&x, &y, &ForestParams { seed: 5, ..params }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn predictions_stay_within_target_range() {
        let (x, y) = data();
        let forest = RandomForest::fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 15,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probe = Matrix::from_rows(&[vec![5.0, -5.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        for p in forest.predict(&x).unwrap().into_iter().chain(forest.predict(&probe).unwrap()) {
            assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn identical_trees_average_to_the_tree() {
        let (x, y) = data();
        let tree = RegressionTree::fit(&x, &y, &TreeParams::default()).unwrap();
        let forest = RandomForest::from_trees(vec![tree.clone(); 4], ForestParams::default()).unwrap();
        let a = forest.predict(&x).unwrap();
        let b = tree.predict(&x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trees_rejected() {
        let (x, y) = data();
        let params = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(matches!(RandomForest::fit(&x, &y, &params), Err(Error::Param(_))));
    }
}
