//! Per-stage feature rows consumed by the value model.
//!
//! The first eight columns depend only on the pipeline; the last eight describe
//! the decision taken for the stage and are zero until it is scheduled.

use thiserror::Error;

use crate::cost::partial_bounds;
use crate::schedule::ScheduleState;

pub const FEATURE_DIM: usize = 16;
pub const INTRINSIC_DIM: usize = 8;
const SIGMA_FLOOR: f64 = 1e-6;

pub type FeatureRow = [f64; FEATURE_DIM];

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "log_points",
    "log_flops",
    "log_input_bytes",
    "log_output_bytes",
    "arithmetic_intensity",
    "num_inputs",
    "num_reduction_dims",
    "max_overlap",
    "scheduled",
    "log_vector_width",
    "log_parallel_tasks",
    "log_innermost_extent",
    "compute_depth",
    "log_recompute",
    "fits_cache",
    "log_invocations",
];

fn log1p2(x: u64) -> f64 {
    (1.0 + x as f64).log2()
}

/// Feature matrix of `s`, one row per stage in topological order. `cache_size`
/// decides the fits-in-cache flag.
pub fn featurize_state(s: &ScheduleState, cache_size: u64) -> Vec<FeatureRow> {
    let space = s.space();
    let p = s.pipeline();
    let bounds = partial_bounds(s);
    space
        .topo()
        .iter()
        .map(|&idx| {
            let stage = &p.stages[idx];
            let st = space.intrinsic(idx);
            let mut row = [0.0; FEATURE_DIM];
            row[0] = log1p2(st.points);
            row[1] = log1p2(st.flops);
            row[2] = log1p2(st.input_bytes);
            row[3] = log1p2(st.output_bytes);
            row[4] = st.flops as f64 / (1 + st.input_bytes + st.output_bytes) as f64;
            row[5] = stage.inputs.len() as f64;
            row[6] = stage.reduction_dims.len() as f64;
            row[7] = stage
                .inputs
                .iter()
                .flat_map(|e| e.access.iter())
                .map(|m| m.window as f64 / m.stride.max(1) as f64)
                .fold(0.0, f64::max);

            if let (Some((decision, loops)), Some(b)) = (s.decision_for(idx), &bounds[idx]) {
                row[8] = 1.0;
                row[9] = (decision.vectorize_width as f64).log2();
                row[10] = if decision.parallel {
                    (loops[0].extent as f64).log2()
                } else {
                    0.0
                };
                row[11] = (loops.last().unwrap().extent as f64).log2();
                row[12] = b.compute_depth as f64;
                row[13] = b.recompute_factor().log2();
                row[14] = f64::from(b.alloc_bytes <= cache_size);
                row[15] = log1p2(b.invocations);
            }
            row
        })
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot fit a normalizer on an empty dataset")]
pub struct EmptyDataset;

/// Column-wise z-scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    pub fn normalize_row(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = [0.0; FEATURE_DIM];
        for j in 0..FEATURE_DIM {
            out[j] = (row[j] - self.mean[j]) / self.std[j];
        }
        out
    }

    pub fn denormalize_row(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = [0.0; FEATURE_DIM];
        for j in 0..FEATURE_DIM {
            out[j] = row[j] * self.std[j] + self.mean[j];
        }
        out
    }
}

pub fn fit_normalizer(dataset: &[Vec<FeatureRow>]) -> Result<Normalizer, EmptyDataset> {
    let rows = dataset.iter().flat_map(|m| m.iter());
    let n = dataset.iter().map(Vec::len).sum::<usize>();
    if n == 0 {
        return Err(EmptyDataset);
    }
    let mut mean = [0.0; FEATURE_DIM];
    for r in rows.clone() {
        for j in 0..FEATURE_DIM {
            mean[j] += r[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = [0.0; FEATURE_DIM];
    for r in rows {
        for j in 0..FEATURE_DIM {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    let mut std = [0.0; FEATURE_DIM];
    for j in 0..FEATURE_DIM {
        std[j] = (var[j] / n as f64).sqrt().max(SIGMA_FLOOR);
    }
    Ok(Normalizer { mean, std })
}

pub fn normalize(nz: &Normalizer, matrix: &[FeatureRow]) -> Vec<FeatureRow> {
    matrix.iter().map(|r| nz.normalize_row(r)).collect()
}
