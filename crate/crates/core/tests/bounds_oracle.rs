//! Bounds inference and the cost model against brute-force walks.

mod common;

use common::*;
use valsched::cost::{benchmark, MachineModel};
use valsched::rng::SearchRng;
use valsched::search::random_schedule;

#[test]
fn toy_assets_are_small() {
    let toys = load_dir("toys");
    assert!(toys.len() >= 5);
    for p in &toys {
        let points: u64 = p.stages.iter().map(|s| s.domain_points()).sum();
        assert!(points <= 4096, "{} has {points} points", p.name);
    }
}

#[test]
fn random_schedules_match_walked_bounds() {
    for space in spaces("toys") {
        let mut rng = SearchRng::new(99);
        for _ in 0..40 {
            let s = random_schedule(&space, &mut rng);
            if let Err(e) = check_bounds(&s) {
                panic!("{}: {e}", valsched::schedule::canonical_key(&s));
            }
        }
    }
}

#[test]
fn every_stencil_pair_schedule_matches_walked_bounds() {
    let space = valsched::schedule::ScheduleSpace::new(load("toys", "stencil_pair.pipe")).unwrap();
    let all = all_complete(&space);
    assert_eq!(all.len() as u128, valsched::schedule::space_size(&space));
    for s in &all {
        check_bounds(s).unwrap();
    }
}

#[test]
fn benchmark_is_repeatable() {
    let m = MachineModel::default();
    for space in spaces("toys") {
        let s = random_schedule(&space, &mut SearchRng::new(5));
        let first = benchmark(&s, &m).unwrap();
        for _ in 0..10 {
            assert_eq!(benchmark(&s, &m).unwrap(), first);
        }
    }
}
