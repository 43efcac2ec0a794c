mod common;

use common::checks::*;
use proptest::prelude::*;

use s2t_core::global::{enhance_node, update_global, GlobalState};
use s2t_core::objective::{alignment_loss, total_loss};
use s2t_core::temporal::IntensityVector;

fn vec_strategy(max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..=max_dim)
}

proptest! {
    #[test]
    fn similarity_weights_sum_to_one(
        (owner, neighbors) in (1usize..8).prop_flat_map(|d| (
            prop::collection::vec(-5.0f64..5.0, d),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), 1..8),
        ))
    ) {
        softmax_sums_to_one(&owner, &neighbors).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn interval_weights_are_a_distribution(
        mut times in prop::collection::vec(0.0f64..10.0, 1..12),
        extra in 0.0f64..3.0,
    ) {
        times.sort_by(f64::total_cmp);
        let t = times.last().unwrap() + extra;
        interval_weights_sum_to_one(&times, t).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn sigmoid_stays_in_range(x in -1e4f64..1e4) {
        sigmoid_range(x).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn alignment_is_zero_on_identical_and_non_negative(a in vec_strategy(8), shift in -3.0f64..3.0) {
        alignment_of_identical_is_zero(&a).map_err(TestCaseError::fail)?;
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let l = alignment_loss(&IntensityVector::from_vec(a.clone()), &IntensityVector::from_vec(b)).unwrap();
        prop_assert!(l >= 0.0);
    }

    #[test]
    fn masked_slots_are_ignored(seed in any::<u64>()) {
        mask_neutrality(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn neighbor_order_does_not_matter(seed in any::<u64>()) {
        permutation_stability(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn replay_and_index_agree_and_are_causal(seed in any::<u64>()) {
        replay_matches_index(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn global_updates_commute(
        (a, b) in (1usize..6).prop_flat_map(|d| (
            prop::collection::vec(-2.0f64..2.0, d),
            prop::collection::vec(-2.0f64..2.0, d),
        )),
        theta in -1.0f64..1.0,
        da in 1usize..5,
        db in 1usize..5,
    ) {
        let mut g1 = GlobalState::new(a.len());
        update_global(&mut g1, &a, theta, da).unwrap();
        update_global(&mut g1, &b, theta, db).unwrap();
        let mut g2 = GlobalState::new(a.len());
        update_global(&mut g2, &b, theta, db).unwrap();
        update_global(&mut g2, &a, theta, da).unwrap();
        for (x, y) in g1.z_g.iter().zip(&g2.z_g) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn more_active_nodes_take_less_from_global(
        z in vec_strategy(6),
        theta in 0.01f64..1.0,
        dyn_ in 1usize..50,
    ) {
        let g = GlobalState { z_g: vec![1.0; z.len()] };
        let lo = enhance_node(&z, &g, theta, dyn_).unwrap();
        let hi = enhance_node(&z, &g, theta, dyn_ + 1).unwrap();
        for ((l, h), base) in lo.iter().zip(&hi).zip(&z) {
            prop_assert!(l - base > h - base);
        }
    }

    #[test]
    fn total_is_the_weighted_sum(
        task in 0.0f64..10.0, align in 0.0f64..10.0, global in -10.0f64..10.0,
        e1 in 0.0f64..2.0, e2 in 0.0f64..2.0,
    ) {
        let l = total_loss(task, align, global, e1, e2).unwrap();
        prop_assert_eq!(l.total, task + e1 * align + e2 * global);
    }
}

#[test]
fn smooth_l1_is_c1() {
    smooth_l1_continuity().unwrap();
}

#[test]
fn sampler_fits_degree_distribution() {
    sampler_chi_square(17, 200_000).unwrap();
}

#[test]
fn evaluation_sets_are_balanced() {
    for seed in 0..3 {
        balanced_eval(seed).unwrap();
    }
}

#[test]
fn batch_pipeline_runs_in_order() {
    pipeline_order(1).unwrap();
}
