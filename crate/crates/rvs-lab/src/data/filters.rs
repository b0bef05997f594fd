//! Dataset-level selection: top-fraction and success filters for filtered
//! behavior cloning, trajectory-level train/validation splitting, and score
//! normalization against reference policies.
//!
//! Every operation takes `&Dataset` and returns a new one; inputs are never
//! modified.

use rand::seq::SliceRandom;

use super::trajectory::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::rng::stream;

/// `fraction * n` rounded toward an integer count, tolerating the float
/// slop in products like `0.1 * 10` (= 1.0000000000000002) so that exact
/// fractions give exact counts. `round_up` picks ceil vs floor for
/// non-integer products.
fn fraction_count(fraction: f64, n: usize, round_up: bool) -> usize {
    let product = fraction * n as f64;
    let nearest = product.round();
    let exact = if (product - nearest).abs() < 1e-9 {
        nearest
    } else if round_up {
        product.ceil()
    } else {
        product.floor()
    };
    exact as usize
}

/// Keeps the `ceil(fraction * N)` trajectories with the highest total
/// reward; ties are broken in favor of the earlier dataset index. Output
/// preserves the original relative order.
pub fn filter_top_fraction(dataset: &Dataset, fraction: f64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    dataset.validate()?;
    let n = dataset.trajectories.len();
    let keep = fraction_count(fraction, n, true).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort by descending total keeps earlier indices first among ties.
    order.sort_by(|&a, &b| {
        dataset.trajectories[b]
            .total_reward()
            .partial_cmp(&dataset.trajectories[a].total_reward())
            .expect("totals are finite")
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    Ok(Dataset {
        env_id: dataset.env_id.clone(),
        horizon_h: dataset.horizon_h,
        provenance: format!("{}|top{}", dataset.provenance, fraction),
        trajectories: kept
            .into_iter()
            .map(|i| dataset.trajectories[i].clone())
            .collect(),
    })
}

/// Default success test: the trajectory contains a reward of exactly 1.
pub fn default_success(traj: &Trajectory) -> bool {
    traj.rewards.iter().any(|&r| r == 1.0)
}

/// Keeps exactly the trajectories satisfying `predicate`. Zero survivors is
/// an error: training on the result would be undefined.
pub fn filter_successful<F>(dataset: &Dataset, predicate: F) -> Result<Dataset>
where
    F: Fn(&Trajectory) -> bool,
{
    dataset.validate()?;
    let survivors: Vec<Trajectory> = dataset
        .trajectories
        .iter()
        .filter(|t| predicate(t))
        .cloned()
        .collect();
    if survivors.is_empty() {
        return Err(Error::Dataset(
            "success filter removed every trajectory".into(),
        ));
    }
    Ok(Dataset {
        env_id: dataset.env_id.clone(),
        horizon_h: dataset.horizon_h,
        provenance: format!("{}|successful", dataset.provenance),
        trajectories: survivors,
    })
}

/// The index-level core of [`split_train_validation`]: which trajectory
/// positions land in the train half and which in validation. Exposed so
/// callers can trace split members back to the original dataset (e.g. to
/// audit that validation trajectories never feed gradients).
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 trajectories to split, got {n}"
        )));
    }
    let train_count = fraction_count(train_fraction, n, false).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "train-val-split", 0));
    let mut train_idx: Vec<usize> = order[..train_count].to_vec();
    let mut val_idx: Vec<usize> = order[train_count..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((train_idx, val_idx))
}

/// Splits at the trajectory level into `floor(train_fraction * N)` train
/// trajectories (at least 1, at most N-1) and the rest as validation, via a
/// seeded shuffle. Each half preserves the original relative order.
pub fn split_train_validation(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    dataset.validate()?;
    let (train_idx, val_idx) = split_indices(dataset.trajectories.len(), train_fraction, seed)?;
    let pick = |idx: &[usize], tag: &str| Dataset {
        env_id: dataset.env_id.clone(),
        horizon_h: dataset.horizon_h,
        provenance: format!("{}|{}", dataset.provenance, tag),
        trajectories: idx
            .iter()
            .map(|&i| dataset.trajectories[i].clone())
            .collect(),
    };
    Ok((pick(&train_idx, "train"), pick(&val_idx, "val")))
}

/// `100 * (raw - random) / (expert - random)`: 0 at the random-policy
/// reference, 100 at the expert reference.
pub fn normalized_score(raw_return: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if expert_ref == random_ref {
        return Err(Error::InvalidArgument(format!(
            "reference returns coincide at {random_ref}; score undefined"
        )));
    }
    Ok(100.0 * ((raw_return - random_ref) / (expert_ref - random_ref)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn traj_with_total(total: f64, len: usize) -> Trajectory {
        let mut rewards = vec![0.0; len];
        rewards[0] = total;
        Trajectory {
            states: (0..len).map(|i| vec![i as f64]).collect(),
            actions: vec![vec![0.0]; len],
            rewards,
            terminated: false,
        }
    }

    fn dataset_with_totals(totals: &[f64]) -> Dataset {
        Dataset {
            env_id: "toy".into(),
            horizon_h: 8,
            provenance: "test".into(),
            trajectories: totals.iter().map(|&r| traj_with_total(r, 3)).collect(),
        }
    }

    /// Threshold-based reimplementation of the top-fraction rule: keep all
    /// totals above the cutoff, then fill remaining slots with cutoff ties
    /// in ascending index order.
    fn top_fraction_oracle(totals: &[f64], keep: usize) -> Vec<usize> {
        let mut sorted = totals.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let cutoff = sorted[keep - 1];
        let mut kept: Vec<usize> = (0..totals.len())
            .filter(|&i| totals[i] > cutoff)
            .collect();
        for i in 0..totals.len() {
            if kept.len() == keep {
                break;
            }
            if totals[i] == cutoff {
                kept.push(i);
            }
        }
        kept.sort_unstable();
        kept
    }

    fn kept_totals(ds: &Dataset) -> Vec<f64> {
        ds.trajectories.iter().map(|t| t.total_reward()).collect()
    }

    #[test]
    fn top_tenth_of_ten_keeps_only_the_best() {
        let totals: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = dataset_with_totals(&totals);
        let top = filter_top_fraction(&ds, 0.1).unwrap();
        assert_eq!(kept_totals(&top), vec![9.0]);
    }

    #[test]
    fn full_fraction_keeps_everything_in_order() {
        let ds = dataset_with_totals(&[3.0, 1.0, 2.0]);
        let top = filter_top_fraction(&ds, 1.0).unwrap();
        assert_eq!(top.trajectories, ds.trajectories);
    }

    #[test]
    fn cut_ties_keep_the_earlier_index() {
        // keep=2: total 5 is in, and the tie at total 2 resolves to index 0.
        let ds = dataset_with_totals(&[2.0, 5.0, 2.0]);
        let top = filter_top_fraction(&ds, 2.0 / 3.0).unwrap();
        assert_eq!(top.trajectories.len(), 2);
        assert_eq!(top.trajectories[0], ds.trajectories[0]);
        assert_eq!(top.trajectories[1], ds.trajectories[1]);
    }

    #[test]
    fn top_fraction_matches_threshold_oracle_on_random_cases() {
        let mut rng = stream(11, "filter-oracle", 0);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            // Coarse totals force plenty of ties.
            let totals: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let fraction = rng.gen_range(0.01..=1.0);
            let ds = dataset_with_totals(&totals);
            let top = filter_top_fraction(&ds, fraction).unwrap();
            let keep = top.trajectories.len();
            let want: Vec<f64> = top_fraction_oracle(&totals, keep)
                .into_iter()
                .map(|i| totals[i])
                .collect();
            assert_eq!(kept_totals(&top), want, "n={n} fraction={fraction}");
        }
    }

    #[test]
    fn fraction_counts_survive_float_slop() {
        // 0.1 * 10 and 0.7 * 10 are not exact in binary floating point.
        assert_eq!(fraction_count(0.1, 10, true), 1);
        assert_eq!(fraction_count(0.7, 10, false), 7);
        assert_eq!(fraction_count(0.8, 5, false), 4);
        assert_eq!(fraction_count(0.25, 10, true), 3);
        assert_eq!(fraction_count(0.25, 10, false), 2);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let ds = dataset_with_totals(&[1.0, 2.0]);
        assert!(filter_top_fraction(&ds, 0.0).is_err());
        assert!(filter_top_fraction(&ds, 1.5).is_err());
        assert!(filter_top_fraction(&ds, -0.2).is_err());
    }

    #[test]
    fn success_filter_keeps_exactly_the_matching_trajectories() {
        let ds = dataset_with_totals(&[0.0, 1.0, 0.5, 1.0]);
        let kept = filter_successful(&ds, default_success).unwrap();
        assert_eq!(kept_totals(&kept), vec![1.0, 1.0]);
        // Survivor set equals an independent linear scan.
        let scan: Vec<&Trajectory> = ds
            .trajectories
            .iter()
            .filter(|t| t.rewards.contains(&1.0))
            .collect();
        assert_eq!(kept.trajectories.len(), scan.len());
        for (a, b) in kept.trajectories.iter().zip(scan) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn success_filter_with_no_survivors_is_an_error() {
        let ds = dataset_with_totals(&[0.0, 0.0, 0.0]);
        let err = filter_successful(&ds, default_success).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit_code::USAGE);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let ds10 = dataset_with_totals(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let (train, val) = split_train_validation(&ds10, 0.8, 7).unwrap();
        assert_eq!((train.trajectories.len(), val.trajectories.len()), (8, 2));
        let ds5 = dataset_with_totals(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let (train, val) = split_train_validation(&ds5, 0.8, 7).unwrap();
        assert_eq!((train.trajectories.len(), val.trajectories.len()), (4, 1));
    }

    #[test]
    fn split_is_an_exact_partition() {
        let ds = dataset_with_totals(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let (train, val) = split_train_validation(&ds, 0.8, 3).unwrap();
        let mut union: Vec<String> = train
            .trajectories
            .iter()
            .chain(&val.trajectories)
            .map(|t| serde_json::to_string(t).unwrap())
            .collect();
        union.sort();
        let mut original: Vec<String> = ds
            .trajectories
            .iter()
            .map(|t| serde_json::to_string(t).unwrap())
            .collect();
        original.sort();
        assert_eq!(union, original);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let ds = dataset_with_totals(&(0..12).map(|i| i as f64).collect::<Vec<_>>());
        let (t1, v1) = split_train_validation(&ds, 0.75, 42).unwrap();
        let (t2, v2) = split_train_validation(&ds, 0.75, 42).unwrap();
        assert_eq!(t1.trajectories, t2.trajectories);
        assert_eq!(v1.trajectories, v2.trajectories);
    }

    #[test]
    fn split_rejects_singleton_datasets() {
        let ds = dataset_with_totals(&[1.0]);
        assert!(split_train_validation(&ds, 0.8, 0).is_err());
    }

    #[test]
    fn normalized_score_reference_points() {
        assert_eq!(normalized_score(10.0, 10.0, 110.0).unwrap(), 0.0);
        assert_eq!(normalized_score(110.0, 10.0, 110.0).unwrap(), 100.0);
        assert_eq!(normalized_score(60.0, 10.0, 110.0).unwrap(), 50.0);
        assert!(normalized_score(5.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn normalized_score_matches_commuted_formula_on_random_cases() {
        let mut rng = stream(13, "score-oracle", 0);
        for _ in 0..1000 {
            let random_ref = rng.gen_range(-50.0..50.0);
            let expert_ref = random_ref + rng.gen_range(0.1..100.0);
            let raw = rng.gen_range(-100.0..200.0);
            let got = normalized_score(raw, random_ref, expert_ref).unwrap();
            let want = (raw - random_ref) / (expert_ref - random_ref) * 100.0;
            assert_eq!(got, want);
        }
    }

    #[test]
    fn operations_leave_the_input_unmodified() {
        let ds = dataset_with_totals(&[1.0, 0.0, 2.0, 1.0]);
        let before = ds.clone();
        let _ = filter_top_fraction(&ds, 0.5).unwrap();
        let _ = filter_successful(&ds, default_success).unwrap();
        let _ = split_train_validation(&ds, 0.5, 9).unwrap();
        assert_eq!(ds, before);
    }

    proptest! {
        // Every kept total is >= every excluded total.
        #[test]
        fn kept_totals_dominate_excluded(
            totals in proptest::collection::vec(0.0f64..10.0, 1..30),
            fraction in 0.05f64..1.0,
        ) {
            let ds = dataset_with_totals(&totals);
            let top = filter_top_fraction(&ds, fraction).unwrap();
            let kept = kept_totals(&top);
            let mut excluded = totals.clone();
            for k in &kept {
                let pos = excluded.iter().position(|e| e == k).unwrap();
                excluded.remove(pos);
            }
            let min_kept = kept.iter().cloned().fold(f64::INFINITY, f64::min);
            for e in excluded {
                prop_assert!(min_kept >= e);
            }
        }

        // Split sizes are exact for every N and fraction.
        #[test]
        fn split_partition_sizes(
            n in 2usize..40,
            fraction in 0.05f64..0.95,
            seed in 0u64..1000,
        ) {
            let totals: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ds = dataset_with_totals(&totals);
            let (train, val) = split_train_validation(&ds, fraction, seed).unwrap();
            prop_assert_eq!(train.trajectories.len() + val.trajectories.len(), n);
            prop_assert!(!train.trajectories.is_empty());
            prop_assert!(!val.trajectories.is_empty());
        }
    }
}
