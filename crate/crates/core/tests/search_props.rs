//! Greedy, beam and exhaustive search against enumeration.

mod common;

use std::collections::HashMap;

use common::*;
use valsched::cost::{benchmark, Fixed, MachineModel};
use valsched::model::init_params;
use valsched::rng::SearchRng;
use valsched::schedule::{candidate_actions, canonical_key, apply, ScheduleSpace, ScheduleState};
use valsched::search::*;

const LIMIT: u128 = 1_000_000;

fn cost(s: &ScheduleState) -> Fixed {
    benchmark(s, &MachineModel::default()).unwrap().total
}

fn candidates_along(s: &ScheduleState) -> u64 {
    (0..s.scheduled_count())
        .map(|j| candidate_actions(&s.prefix(j)).unwrap().len() as u64)
        .sum()
}

#[test]
fn one_stage_optimum_by_hand() {
    let space = ScheduleSpace::new(load("toys", "one_stage.pipe")).unwrap();
    let m = MachineModel::default();
    let s0 = ScheduleState::initial(&space);
    let by_render: HashMap<String, Fixed> = candidate_actions(&s0)
        .unwrap()
        .iter()
        .map(|a| (a.to_string(), cost(&apply(&s0, a).unwrap())))
        .collect();
    // 64 points, 2 flops each, one 4-byte read from memory (8/byte) and one
    // 4-byte write to a 256-byte buffer that fits in cache (1/byte).
    let memory = 64 * 4 * 8 + 64 * 4;
    let hand = [
        ("a split=- order=x vec=1 par=0 compute=root store=root", 128 + memory),
        ("a split=- order=x vec=8 par=0 compute=root store=root", 128 / 8 + memory),
        // 4 cores over an outer extent of 8, one task per outer iteration.
        ("a split=x:8 order=xo,xi vec=8 par=1 compute=root store=root", 128 / 32 + memory + 8 * 1000),
    ];
    for (render, want) in hand {
        assert_eq!(by_render[render], Fixed::from_int(want), "{render}");
    }
    let ex = exhaustive(&space, &m, LIMIT).unwrap();
    assert_eq!(ex.visited, 18);
    assert_eq!(ex.cost, *by_render.values().min().unwrap());
    assert_eq!(ex.cost, Fixed::from_int(2320));
}

#[test]
fn exact_table_is_min_over_completions() {
    for name in ["stencil_pair.pipe", "blur.pipe", "diamond.pipe"] {
        let space = ScheduleSpace::new(load("toys", name)).unwrap();
        let ex = exhaustive(&space, &MachineModel::default(), LIMIT).unwrap();
        let mut best: HashMap<String, Fixed> = HashMap::new();
        for s in all_complete(&space) {
            let c = cost(&s);
            for j in 0..s.scheduled_count() {
                let e = best.entry(canonical_key(&s.prefix(j))).or_insert(c);
                *e = (*e).min(c);
            }
        }
        assert_eq!(ex.exact.table, best, "{name}");
        assert_eq!(ex.cost, best[&canonical_key(&ScheduleState::initial(&space))]);
    }
}

#[test]
fn greedy_under_exact_value_is_optimal() {
    for space in spaces("toys") {
        let ex = exhaustive(&space, &MachineModel::default(), LIMIT).unwrap();
        let g = greedy_schedule(&space, &ex.exact, None, &mut SearchRng::new(0));
        assert_eq!(cost(&g.state), ex.cost, "{}", space.pipeline().name);
        assert_eq!(g.visited, candidates_along(&g.state));
    }
}

#[test]
fn exact_value_bounds_random_schedules() {
    for space in spaces("toys") {
        let ex = exhaustive(&space, &MachineModel::default(), LIMIT).unwrap();
        let v0 = ex.exact.get(&ScheduleState::initial(&space)).unwrap();
        for seed in 0..100 {
            assert!(v0 <= cost(&random_schedule(&space, &mut SearchRng::new(seed))));
        }
    }
}

#[test]
fn greedy_counts_every_candidate() {
    let model = init_params(3, 8);
    for sub in ["toys", "large"] {
        for space in spaces(sub) {
            let g = greedy_schedule(&space, &model, None, &mut SearchRng::new(0));
            assert!(g.state.is_complete());
            assert_eq!(g.visited, candidates_along(&g.state));
        }
    }
}

#[test]
fn default_completion_guide_is_total() {
    for space in spaces("toys") {
        let g = greedy_schedule(&space, &DefaultCompletion::default(), None, &mut SearchRng::new(0));
        assert!(benchmark(&g.state, &MachineModel::default()).is_ok());
    }
}

#[test]
fn width_one_beam_is_greedy() {
    let guides: Vec<Box<dyn ValueFunction>> = vec![
        Box::new(DefaultCompletion::default()),
        Box::new(init_params(1, 4)),
        Box::new(init_params(2, 16)),
    ];
    for space in spaces("toys") {
        let path = random_schedule(&space, &mut SearchRng::new(4));
        for v in &guides {
            for j in 0..space.num_stages() {
                let prefix = path.prefix(j);
                let b = beam_search(&prefix, v.as_ref(), 1).unwrap();
                let g = greedy_from(&prefix, v.as_ref(), None, &mut SearchRng::new(0));
                assert_eq!(b.state, g.state);
            }
        }
    }
}

#[test]
fn unbounded_beam_finds_the_guide_minimum() {
    let model = init_params(8, 8);
    for name in ["stencil_pair.pipe", "blur.pipe", "one_stage.pipe"] {
        let space = ScheduleSpace::new(load("toys", name)).unwrap();
        let all = all_complete(&space);
        let best = all.iter().map(|s| model.value(s)).fold(f64::INFINITY, f64::min);
        let b = beam_search(&ScheduleState::initial(&space), &model, all.len()).unwrap();
        assert_eq!(b.value, best);

        let ex = exhaustive(&space, &MachineModel::default(), LIMIT).unwrap();
        let b = beam_search(&ScheduleState::initial(&space), &ex.exact, all.len()).unwrap();
        assert_eq!(cost(&b.state), ex.cost);
    }
}

#[test]
fn beam_never_loses_to_greedy_under_its_guide() {
    for (i, space) in spaces("toys").into_iter().enumerate() {
        let model = init_params(i as u64, 8);
        let g = greedy_schedule(&space, &model, None, &mut SearchRng::new(0));
        for width in [1, 2, 3, 8, 32] {
            let b = beam_search(&ScheduleState::initial(&space), &model, width).unwrap();
            assert!(b.value <= model.value(&g.state));
        }
    }
}

#[test]
fn beam_value_under_exact_guide_is_monotone_in_width() {
    for space in spaces("toys") {
        let ex = exhaustive(&space, &MachineModel::default(), LIMIT).unwrap();
        let mut last = f64::INFINITY;
        for width in 1..=8 {
            let b = beam_search(&ScheduleState::initial(&space), &ex.exact, width).unwrap();
            assert!(b.value <= last);
            last = b.value;
        }
    }
}

#[test]
fn random_schedules_are_legal_and_reproducible() {
    let m = MachineModel::default();
    for space in spaces("toys") {
        let mut keys = std::collections::HashSet::new();
        for seed in 0..1000 {
            let s = random_schedule(&space, &mut SearchRng::new(seed));
            assert!(s.is_complete());
            assert!(benchmark(&s, &m).is_ok());
            keys.insert(canonical_key(&s));
        }
        assert_eq!(
            random_schedule(&space, &mut SearchRng::new(17)),
            random_schedule(&space, &mut SearchRng::new(17))
        );
        assert!(keys.len() > 1);
    }
}

#[test]
fn noisy_greedy_is_independent_of_thread_count() {
    let model = init_params(5, 8);
    let noise = Some(NoiseConfig::default());
    for space in spaces("toys") {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| greedy_schedule(&space, &model, noise, &mut SearchRng::new(21)))
        };
        assert_eq!(run(1), run(4));
    }
}
