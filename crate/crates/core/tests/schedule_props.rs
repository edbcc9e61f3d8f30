//! Candidate generation, legality and state encoding.

mod common;

use std::collections::HashSet;

use common::*;
use proptest::prelude::*;
use valsched::cost::{benchmark, MachineModel};
use valsched::rng::SearchRng;
use valsched::schedule::{
    apply, candidate_actions, canonical_key, parse_schedule, space_size, state_from_key, write_schedule,
    ScheduleSpace, ScheduleState, Site,
};

#[test]
fn one_stage_grid_has_eighteen_candidates() {
    let space = ScheduleSpace::new(load("toys", "one_stage.pipe")).unwrap();
    let s0 = ScheduleState::initial(&space);
    let c = candidate_actions(&s0).unwrap();
    assert_eq!(c.len(), grid_count(&s0));
    assert_eq!(c.len(), 18);
    assert_eq!(c[0].to_string(), "a split=- order=x vec=1 par=0 compute=root store=root");
}

#[test]
fn space_size_matches_enumeration() {
    for name in ["one_stage.pipe", "stencil_pair.pipe", "blur.pipe", "diamond.pipe", "matmul_bias.pipe"] {
        let space = ScheduleSpace::new(load("toys", name)).unwrap();
        assert_eq!(all_complete(&space).len() as u128, space_size(&space), "{name}");
    }
}

#[test]
fn large_space_is_beyond_enumeration() {
    let space = ScheduleSpace::new(load("large", "chain12.pipe")).unwrap();
    assert_eq!(space.num_stages(), 12);
    assert!(space_size(&space) > 10u128.pow(20));
}

#[test]
fn keys_are_injective_on_a_two_stage_tree() {
    let space = ScheduleSpace::new(load("toys", "stencil_pair.pipe")).unwrap();
    let all = all_complete(&space);
    let mut keys = HashSet::new();
    let mut decisions = HashSet::new();
    for s in &all {
        for j in 0..=s.scheduled_count() {
            let p = s.prefix(j);
            let k = canonical_key(&p);
            let d: Vec<String> = p.decisions().iter().map(|d| d.to_string()).collect();
            // Same key iff same decision list.
            assert_eq!(keys.insert(k), decisions.insert(d));
        }
    }
    assert_eq!(keys.len(), decisions.len());
}

fn walk(space: &std::sync::Arc<ScheduleSpace>, seed: u64) -> Vec<ScheduleState> {
    let mut rng = SearchRng::new(seed);
    let mut s = ScheduleState::initial(space);
    let mut path = vec![s.clone()];
    while !s.is_complete() {
        let c = candidate_actions(&s).unwrap();
        s = apply(&s, &c[rng.below(c.len() as u64) as usize]).unwrap();
        path.push(s.clone());
    }
    path
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_walks_stay_legal(seed in any::<u64>(), which in 0usize..6) {
        let space = spaces("toys").swap_remove(which);
        let m = MachineModel::default();
        let path = walk(&space, seed);
        for s in &path[..path.len() - 1] {
            let c = candidate_actions(s).unwrap();
            prop_assert_eq!(c.len(), grid_count(s));
            prop_assert_eq!(&c, &candidate_actions(s).unwrap());
            prop_assert_eq!(c[0].compute_at.clone(), Site::Root);
            for a in &c {
                prop_assert!(apply(s, a).is_ok());
            }
        }
        let done = path.last().unwrap();
        prop_assert!(done.is_complete());
        prop_assert!(benchmark(done, &m).is_ok());
        check_bounds(done).map_err(TestCaseError::fail)?;
        prop_assert_eq!(&parse_schedule(&space, &write_schedule(done)).unwrap(), done);
        for s in &path {
            prop_assert_eq!(&state_from_key(&space, &canonical_key(s)).unwrap(), s);
        }
    }

    #[test]
    fn large_pipeline_candidates_match_grid(seed in any::<u64>()) {
        let space = ScheduleSpace::new(load("large", "chain12.pipe")).unwrap();
        let path = walk(&space, seed);
        for s in &path[..path.len() - 1] {
            prop_assert_eq!(candidate_actions(s).unwrap().len(), grid_count(s));
        }
    }
}

#[test]
fn anchored_candidates_appear_in_walks() {
    let mut anchored = 0;
    for space in spaces("toys") {
        for seed in 0..50 {
            let done = walk(&space, seed).pop().unwrap();
            anchored += done.decisions().iter().filter(|d| d.compute_at != Site::Root).count();
        }
    }
    assert!(anchored > 20, "only {anchored} anchored decisions");
}
