//! Learned value functions for scheduling tensor pipelines.
//!
//! A schedule is built one stage at a time. Each step picks the candidate whose
//! predicted best-achievable cost is lowest; the predictor is a small recurrent
//! network refined by rounds of noisy rollouts, beam completions and analytical
//! cost measurements.

pub mod cost;
pub mod features;
pub mod learner;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod schedule;
pub mod search;
pub mod text;

pub use cost::{benchmark, cost_breakdown, infer_bounds, BoundsTable, Cost, Fixed, MachineModel};
pub use pipeline::{footprint_region, intrinsic_stats, topological_order, validate, Pipeline, Region};
pub use schedule::{
    apply, candidate_actions, canonical_key, initial_state, loop_nest, LayerSchedule, ScheduleSpace,
    ScheduleState,
};
pub use text::parse_pipeline;
