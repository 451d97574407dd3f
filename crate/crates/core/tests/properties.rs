use std::sync::OnceLock;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rarecast::classes::FundingClass;
use rarecast::data::{split_indices, Dataset, SplitSpec};
use rarecast::encode::fit_standardizer;
use rarecast::evalkit::{default_grid, kendall_tau, mape, precision_multiple, precision_recall, sweep_probabilities};
use rarecast::pipeline::fold_assignment;
use rarecast::synth::{generate_dataset, GeneratorConfig};

fn shared_data() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        generate_dataset(&GeneratorConfig {
            n_records: 3000,
            seed: 17,
            ..Default::default()
        })
        .unwrap()
    })
}

proptest! {
    #[test]
    fn standardized_values_have_zero_mean_unit_std(values in prop::collection::vec(-1e4f64..1e4, 2..200)) {
        let s = fit_standardizer(&values).unwrap();
        let z: Vec<f64> = values.iter().map(|&v| s.apply(v).unwrap()).collect();
        if s.std == 0.0 {
            prop_assert!(z.iter().all(|v| *v == 0.0));
        } else {
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let std = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_columns_map_to_zero(v in -1e6f64..1e6, n in 1usize..50) {
        let s = fit_standardizer(&vec![v; n]).unwrap();
        prop_assert_eq!(s.apply(v).unwrap(), 0.0);
    }

    #[test]
    fn funding_classes_partition_positive_amounts(log in 0.0f64..12.0) {
        let amount = 10f64.powf(log);
        let class = FundingClass::of(amount);
        let (lo, hi) = class.bounds();
        prop_assert!(amount >= lo || class == FundingClass::ALL[0]);
        prop_assert!(amount < hi);
        prop_assert_eq!(FundingClass::ALL.iter().filter(|c| {
            let (l, h) = c.bounds();
            (amount >= l || **c == FundingClass::ALL[0]) && amount < h
        }).count(), 1);
    }

    #[test]
    fn folds_are_balanced_and_cover_every_row(n in 5usize..400, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let folds = fold_assignment(n, k, seed).unwrap();
        let mut counts = vec![0usize; k];
        for f in &folds {
            counts[*f] += 1;
        }
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        prop_assert_eq!(folds, fold_assignment(n, k, seed).unwrap());
    }

    #[test]
    fn sweep_is_monotone_and_matches_recount(
        cases in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..300),
    ) {
        let (probs, actual): (Vec<f64>, Vec<bool>) = cases.into_iter().unzip();
        let rows = sweep_probabilities(&probs, &actual, &default_grid()).unwrap();
        prop_assert_eq!(rows.len(), 10);
        for w in rows.windows(2) {
            prop_assert!(w[1].n_predicted_positive <= w[0].n_predicted_positive);
            if let (Some(a), Some(b)) = (w[0].recall, w[1].recall) {
                prop_assert!(b <= a);
            }
        }
        for row in &rows {
            let predicted: Vec<bool> = probs.iter().map(|p| *p >= row.threshold).collect();
            let pr = precision_recall(&predicted, &actual).unwrap();
            prop_assert_eq!(row.n_predicted_positive, predicted.iter().filter(|p| **p).count());
            prop_assert_eq!(row.precision, pr.precision);
            prop_assert_eq!(row.recall, pr.recall);
        }
    }

    #[test]
    fn kendall_tau_is_bounded_and_symmetric(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let t = kendall_tau(&x, &y).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&t));
        prop_assert!((t - kendall_tau(&y, &x).unwrap()).abs() < 1e-12);
        prop_assert!((kendall_tau(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mape_is_zero_only_for_exact_predictions(values in prop::collection::vec(1.0f64..1e9, 1..50), bump in 0usize..50) {
        prop_assert_eq!(mape(&values, &values).unwrap(), 0.0);
        let mut off = values.clone();
        let i = bump % off.len();
        off[i] *= 1.5;
        prop_assert!(mape(&off, &values).unwrap() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stratified_splits_are_disjoint_and_rate_matched(seed in any::<u64>()) {
        let data = shared_data();
        let spec = SplitSpec::scaled_to(data.len(), seed);
        let split = split_indices(data, &spec).unwrap();
        let mut all: Vec<usize> = split.train.iter().chain(split.eval.iter().flatten()).copied().collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), total);
        prop_assert_eq!(total, spec.total());
        let rate = data.success_rate();
        for part in std::iter::once(&split.train).chain(&split.eval) {
            let r = data.subset(part).success_rate();
            prop_assert!((r - rate).abs() <= 0.01, "partition rate {} vs {}", r, rate);
        }
        prop_assert_eq!(split, split_indices(data, &spec).unwrap());
    }
}

#[test]
fn random_classifier_has_unit_precision_multiple_on_shuffled_labels() {
    let data = shared_data();
    let mut multiples = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        let mut actual: Vec<bool> = idx[..1000].iter().map(|&i| data.labels()[i].success).collect();
        actual.shuffle(&mut rng);
        let predicted: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.2)).collect();
        let pr = precision_recall(&predicted, &actual).unwrap();
        let baseline = actual.iter().filter(|a| **a).count() as f64 / 1000.0;
        multiples.push(precision_multiple(pr.precision.unwrap(), baseline).unwrap());
    }
    let mean = multiples.iter().sum::<f64>() / multiples.len() as f64;
    assert!((0.5..=1.5).contains(&mean), "mean multiple {mean}");
}
