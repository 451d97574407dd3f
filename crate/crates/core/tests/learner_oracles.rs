//! Learners checked against independent reference implementations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rarecast::learners::{penalized_gradient, penalized_log_likelihood};
use rarecast::learners::{ForestParams, GbtParams};
use rarecast::matrix::Matrix;
use rarecast::{Forest, Gbt, Linear};

#[test]
fn linear_exact_line() {
    let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
    let m = Linear::fit(&x, &[1.0, 3.0, 5.0], 0.0).unwrap();
    assert!((m.intercept() - 1.0).abs() < 1e-12);
    assert!((m.coefficients()[0] - 2.0).abs() < 1e-12);
}

#[test]
fn linear_matches_pseudoinverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (n, p) = (rng.gen_range(10..40), rng.gen_range(1..6));
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let design = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { rows[r][c - 1] });
        let beta = design.clone().pseudo_inverse(1e-12).unwrap() * DVector::from_vec(y.clone());

        let m = Linear::fit(&Matrix::from_rows(&rows).unwrap(), &y, 0.0).unwrap();
        assert!((m.intercept() - beta[0]).abs() < 1e-8);
        for j in 0..p {
            assert!((m.coefficients()[j] - beta[j + 1]).abs() < 1e-8, "coef {j}");
        }
    }
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 40;
    let z = Matrix::from_rows(
        &(0..n)
            .map(|_| vec![1.0, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    let lambda = 1e-3;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let g = penalized_gradient(&theta, &z, &y, lambda);
        for j in 0..3 {
            let h = 1e-6;
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (penalized_log_likelihood(&up, &z, &y, lambda) - penalized_log_likelihood(&down, &z, &y, lambda)) / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(1e-8);
            assert!(rel < 1e-5, "component {j}: analytic {} numeric {fd}", g[j]);
        }
    }
}

#[test]
fn gbt_hand_case_is_exact() {
    let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let y = [0.0, 0.0, 10.0, 10.0];
    let params = GbtParams {
        n_trees: 1,
        max_depth: 1,
        min_samples_leaf: 1,
        learning_rate: 1.0,
        subsample: 1.0,
        seed: 0,
    };
    let m = Gbt::fit(&x, &y, &params).unwrap();
    assert_eq!(m.predict(&x).unwrap(), y.to_vec());
}

/// Plain recursive CART: exhaustive search over midpoints of sorted distinct
/// values, strict improvement required, first feature and lowest threshold
/// win ties.
enum Cart {
    Leaf(f64),
    Split(usize, f64, Box<Cart>, Box<Cart>),
}

fn sse(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum()
}

fn cart(rows: &[Vec<f64>], y: &[f64], depth: usize, max_depth: usize, min_leaf: usize) -> Cart {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if depth >= max_depth || y.len() < 2 * min_leaf {
        return Cart::Leaf(mean);
    }
    let parent = sse(y);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<f64>, Vec<f64>) = {
                let mut l = Vec::new();
                let mut r = Vec::new();
                for (row, &v) in rows.iter().zip(y) {
                    if row[f] <= t {
                        l.push(v)
                    } else {
                        r.push(v)
                    }
                }
                (l, r)
            };
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let gain = parent - sse(&l) - sse(&r);
            if gain > 1e-9 * parent.max(1.0) && best.map_or(true, |b| gain > b.0 + 1e-9 * parent.max(1.0)) {
                best = Some((gain, f, t));
            }
        }
    }
    let Some((_, f, t)) = best else {
        return Cart::Leaf(mean);
    };
    let (mut lr, mut ly, mut rr, mut ry) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, &v) in rows.iter().zip(y) {
        if row[f] <= t {
            lr.push(row.clone());
            ly.push(v);
        } else {
            rr.push(row.clone());
            ry.push(v);
        }
    }
    Cart::Split(
        f,
        t,
        Box::new(cart(&lr, &ly, depth + 1, max_depth, min_leaf)),
        Box::new(cart(&rr, &ry, depth + 1, max_depth, min_leaf)),
    )
}

fn cart_predict(t: &Cart, row: &[f64]) -> f64 {
    match t {
        Cart::Leaf(v) => *v,
        Cart::Split(f, th, l, r) => cart_predict(if row[*f] <= *th { l } else { r }, row),
    }
}

#[test]
fn single_tree_forest_matches_cart_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - 2.0 * r[3] + rng.gen_range(-0.5..0.5)).collect();
        let max_depth = rng.gen_range(1..6);
        let min_leaf = rng.gen_range(1..5);
        let params = ForestParams {
            n_trees: 1,
            max_depth,
            min_samples_leaf: min_leaf,
            max_features: 1.0,
            bootstrap: false,
            seed: case,
        };
        let forest = Forest::fit(&Matrix::from_rows(&rows).unwrap(), &y, &params).unwrap();
        let oracle = cart(&rows, &y, 0, max_depth, min_leaf);
        let probes: Vec<Vec<f64>> = rows
            .iter()
            .cloned()
            .chain((0..50).map(|_| (0..5).map(|_| rng.gen_range(-0.1..1.1)).collect()))
            .collect();
        for p in &probes {
            let (a, b) = (forest.predict_row(p), cart_predict(&oracle, p));
            assert!((a - b).abs() < 1e-9, "case {case}: forest {a} oracle {b}");
        }
    }
}

