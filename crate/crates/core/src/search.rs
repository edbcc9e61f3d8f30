//! Greedy and beam scheduling under a value function, random schedules, and
//! exhaustive enumeration.
//!
//! Candidate evaluations within a layer run in parallel. Selection always scans
//! results in enumeration order, and noise draws come from per-candidate derived
//! streams, so results do not depend on the thread count.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{benchmark, Fixed, MachineModel};
use crate::model::{predict, ValueModelParams};
use crate::rng::SearchRng;
use crate::schedule::{
    apply, candidate_actions, canonical_key, space_size, LayerSchedule, ScheduleSpace, ScheduleState,
};

pub const DEFAULT_BEAM_WIDTH: usize = 8;

/// Estimated best achievable cost of a (possibly partial) schedule.
pub trait ValueFunction: Sync {
    fn value(&self, s: &ScheduleState) -> f64;
}

impl ValueFunction for ValueModelParams {
    fn value(&self, s: &ScheduleState) -> f64 {
        predict(self, s)
    }
}

impl<F: Fn(&ScheduleState) -> f64 + Sync> ValueFunction for F {
    fn value(&self, s: &ScheduleState) -> f64 {
        self(s)
    }
}

/// Completes the state with default actions and benchmarks the result.
#[derive(Clone, Debug, Default)]
pub struct DefaultCompletion {
    pub machine: MachineModel,
}

impl ValueFunction for DefaultCompletion {
    fn value(&self, s: &ScheduleState) -> f64 {
        let mut cur = s.clone();
        while let Some(next) = cur.next_stage() {
            let a = LayerSchedule::default_for(&cur.pipeline().stages[next]);
            cur = apply(&cur, &a).expect("default action is always legal");
        }
        benchmark(&cur, &self.machine).expect("complete").total.to_f64()
    }
}

/// The exact value function of enumerable pipelines. Incomplete states are
/// looked up by canonical key; complete states are benchmarked directly.
/// Unknown keys evaluate to infinity.
#[derive(Clone, Debug, Default)]
pub struct ExactValue {
    pub machine: MachineModel,
    pub table: HashMap<String, Fixed>,
}

impl ExactValue {
    pub fn get(&self, s: &ScheduleState) -> Option<Fixed> {
        if s.is_complete() {
            benchmark(s, &self.machine).ok().map(|c| c.total)
        } else {
            self.table.get(&canonical_key(s)).copied()
        }
    }

    pub fn merge(&mut self, other: ExactValue) {
        self.table.extend(other.table);
    }
}

impl ValueFunction for ExactValue {
    fn value(&self, s: &ScheduleState) -> f64 {
        self.get(s).map_or(f64::INFINITY, Fixed::to_f64)
    }
}

/// Multiplicative evaluation noise: `V(s) * (1 + eta)`, `eta ~ U(-epsilon, epsilon)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub epsilon: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { epsilon: 0.25 }
    }
}

impl NoiseConfig {
    pub fn check(&self) -> Result<(), SearchError> {
        if (0.0..1.0).contains(&self.epsilon) {
            Ok(())
        } else {
            Err(SearchError::Noise(self.epsilon))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("schedule space has {count} complete schedules, limit is {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("noise amplitude {0} outside [0, 1)")]
    Noise(f64),
    #[error("beam width must be at least 1")]
    BeamWidth,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Children of `s` in candidate order, each with its guide value.
fn expand<V: ValueFunction + ?Sized>(s: &ScheduleState, v: &V) -> Vec<(ScheduleState, f64)> {
    let cands = candidate_actions(s).expect("state is incomplete");
    cands
        .par_iter()
        .map(|a| {
            let next = apply(s, a).expect("candidates are legal");
            let val = sanitize(v.value(&next));
            (next, val)
        })
        .collect()
}

/// First index of the minimum.
fn argmin(vals: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in vals.enumerate() {
        if i == 0 || v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyResult {
    pub state: ScheduleState,
    /// Number of candidate states evaluated, `Σ_i |C_i|`.
    pub visited: u64,
}

/// Layer-by-layer argmin of `V(apply(s, a))` from the initial state.
pub fn greedy_schedule<V: ValueFunction + ?Sized>(
    space: &Arc<ScheduleSpace>,
    v: &V,
    noise: Option<NoiseConfig>,
    rng: &mut SearchRng,
) -> GreedyResult {
    greedy_from(&ScheduleState::initial(space), v, noise, rng)
}

/// Greedy completion of `start`. With noise, candidate `j` of the `l`-th
/// decision draws from `base.derive(l << 32 | j)` where `base` is seeded by one
/// draw from `rng`.
pub fn greedy_from<V: ValueFunction + ?Sized>(
    start: &ScheduleState,
    v: &V,
    noise: Option<NoiseConfig>,
    rng: &mut SearchRng,
) -> GreedyResult {
    let base = SearchRng::new(rng.next_u64());
    let eps = noise.map_or(0.0, |n| n.epsilon);
    let mut s = start.clone();
    let mut visited = 0u64;
    while !s.is_complete() {
        let layer = s.scheduled_count() as u64;
        let mut children = expand(&s, v);
        visited += children.len() as u64;
        if eps > 0.0 {
            for (j, (_, val)) in children.iter_mut().enumerate() {
                let eta = base.derive(layer << 32 | j as u64).uniform(-eps, eps);
                *val *= 1.0 + eta;
            }
        }
        let pick = argmin(children.iter().map(|c| c.1));
        s = children.swap_remove(pick).0;
    }
    GreedyResult { state: s, visited }
}

/// Noiseless greedy completion of `prefix`.
pub fn greedy_completion<V: ValueFunction + ?Sized>(prefix: &ScheduleState, v: &V) -> ScheduleState {
    greedy_from(prefix, v, None, &mut SearchRng::new(0)).state
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult {
    pub state: ScheduleState,
    pub value: f64,
}

/// Beam search from `prefix` keeping the `width` lowest-valued states per
/// layer (stable in enumeration order). The greedy completion is kept as a
/// fallback, so the returned guide value never exceeds greedy's and width 1 is
/// exactly greedy.
pub fn beam_search<V: ValueFunction + ?Sized>(
    prefix: &ScheduleState,
    v: &V,
    width: usize,
) -> Result<BeamResult, SearchError> {
    if width == 0 {
        return Err(SearchError::BeamWidth);
    }
    if prefix.is_complete() {
        return Ok(BeamResult {
            value: sanitize(v.value(prefix)),
            state: prefix.clone(),
        });
    }
    let mut beam = vec![prefix.clone()];
    let mut scored: Vec<(ScheduleState, f64)> = Vec::new();
    while !beam[0].is_complete() {
        scored = beam.iter().flat_map(|s| expand(s, v)).collect();
        // Stable: equal values keep enumeration order.
        scored.sort_by(|a, b| a.1.total_cmp(&b.1));
        scored.truncate(width);
        beam = scored.iter().map(|(s, _)| s.clone()).collect();
    }
    let (best, best_val) = scored.swap_remove(0);
    let greedy = greedy_completion(prefix, v);
    let greedy_val = sanitize(v.value(&greedy));
    Ok(if greedy_val < best_val {
        BeamResult {
            state: greedy,
            value: greedy_val,
        }
    } else {
        BeamResult {
            state: best,
            value: best_val,
        }
    })
}

/// Uniformly random candidate at every layer.
pub fn random_schedule(space: &Arc<ScheduleSpace>, rng: &mut SearchRng) -> ScheduleState {
    let mut s = ScheduleState::initial(space);
    while !s.is_complete() {
        let cands = candidate_actions(&s).expect("incomplete");
        let a = &cands[rng.below(cands.len() as u64) as usize];
        s = apply(&s, a).expect("candidates are legal");
    }
    s
}

#[derive(Clone, Debug)]
pub struct Exhaustive {
    pub best: ScheduleState,
    pub cost: Fixed,
    /// Complete schedules benchmarked.
    pub visited: u64,
    /// Exact optimum over completions of every incomplete reachable state.
    pub exact: ExactValue,
}

/// Benchmarks every complete schedule. Refuses when the space exceeds `limit`.
pub fn exhaustive(space: &Arc<ScheduleSpace>, m: &MachineModel, limit: u128) -> Result<Exhaustive, SearchError> {
    let count = space_size(space);
    if count > limit {
        return Err(SearchError::TooLarge { count, limit });
    }
    let root = ScheduleState::initial(space);
    let (best, cost, visited, table) = enumerate(&root, m);
    Ok(Exhaustive {
        best,
        cost,
        visited,
        exact: ExactValue {
            machine: m.clone(),
            table,
        },
    })
}

type Subtree = (ScheduleState, Fixed, u64, HashMap<String, Fixed>);

fn enumerate(s: &ScheduleState, m: &MachineModel) -> Subtree {
    if s.is_complete() {
        let c = benchmark(s, m).expect("complete").total;
        return (s.clone(), c, 1, HashMap::new());
    }
    let cands = candidate_actions(s).expect("incomplete");
    let go = |a: &LayerSchedule| enumerate(&apply(s, a).expect("candidates are legal"), m);
    let parts: Vec<Subtree> = if s.scheduled_count() == 0 {
        cands.par_iter().map(go).collect()
    } else {
        cands.iter().map(go).collect()
    };
    let mut iter = parts.into_iter();
    let (mut best, mut cost, mut visited, mut table) = iter.next().expect("default candidate");
    for (b, c, n, t) in iter {
        visited += n;
        table.extend(t);
        if c < cost {
            best = b;
            cost = c;
        }
    }
    table.insert(canonical_key(s), cost);
    (best, cost, visited, table)
}
