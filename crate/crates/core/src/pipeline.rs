//! Declarative tensor pipelines: stages, external buffers and the strided-window
//! access maps that connect them.
//!
//! A stage iterates over a box domain made of pure dims followed by reduction
//! dims. Every input edge maps each producer dimension to an interval
//! `[stride * c, stride * c + window)` of a single consumer dim `c`, or to a
//! constant window when no consumer dim is named. That is enough to express
//! pointwise ops, stencils, convolutions and pooling while keeping bounds
//! inference exact interval arithmetic.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// Bytes per element of every stage-produced buffer (f32).
pub const STAGE_ELEMENT_SIZE: u64 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dim {
    pub name: String,
    pub extent: u64,
}

impl Dim {
    pub fn new(name: impl Into<String>, extent: u64) -> Self {
        Dim {
            name: name.into(),
            extent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalBuffer {
    pub name: String,
    pub dims: Vec<u64>,
    pub element_size: u64,
}

/// Producer index range for consumer index `c` is `[stride * c, stride * c + window)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AccessMap {
    /// Index into the consumer's pure dims followed by its reduction dims.
    pub consumer_dim: Option<usize>,
    pub stride: u64,
    pub window: u64,
}

impl AccessMap {
    pub fn identity(consumer_dim: usize) -> Self {
        AccessMap {
            consumer_dim: Some(consumer_dim),
            stride: 1,
            window: 1,
        }
    }

    /// Largest producer index touched when the consumer dim spans `[0, consumer_extent)`.
    pub fn max_index(&self, consumer_extent: u64) -> u64 {
        match self.consumer_dim {
            Some(_) => self.stride * consumer_extent.saturating_sub(1) + self.window - 1,
            None => self.window - 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputEdge {
    pub producer: String,
    /// One map per producer dimension, in producer-dim order.
    pub access: Vec<AccessMap>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stage {
    pub name: String,
    /// Pure dims, outermost first.
    pub dims: Vec<Dim>,
    pub reduction_dims: Vec<Dim>,
    pub flops_per_point: u64,
    pub inputs: Vec<InputEdge>,
    pub output: bool,
}

impl Stage {
    /// Pure dims followed by reduction dims; the index space of `AccessMap::consumer_dim`.
    pub fn all_dims(&self) -> impl Iterator<Item = &Dim> {
        self.dims.iter().chain(self.reduction_dims.iter())
    }

    pub fn num_all_dims(&self) -> usize {
        self.dims.len() + self.reduction_dims.len()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.all_dims().position(|d| d.name == name)
    }

    pub fn is_reduction_dim(&self, index: usize) -> bool {
        index >= self.dims.len()
    }

    pub fn pure_points(&self) -> u64 {
        self.dims.iter().map(|d| d.extent).product()
    }

    pub fn reduction_points(&self) -> u64 {
        self.reduction_dims.iter().map(|d| d.extent).product()
    }

    pub fn domain_points(&self) -> u64 {
        self.pure_points() * self.reduction_points()
    }

    /// Full iteration domain over pure and reduction dims.
    pub fn domain(&self) -> Region {
        Region::from_extents(self.all_dims().map(|d| d.extent))
    }

    /// Region of the buffer this stage produces (pure dims only).
    pub fn output_region(&self) -> Region {
        Region::from_extents(self.dims.iter().map(|d| d.extent))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pipeline {
    pub name: String,
    pub buffers: Vec<ExternalBuffer>,
    pub stages: Vec<Stage>,
}

/// What an input edge reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Producer<'a> {
    Stage(usize, &'a Stage),
    Buffer(&'a ExternalBuffer),
}

impl<'a> Producer<'a> {
    pub fn extents(&self) -> Vec<u64> {
        match self {
            Producer::Stage(_, s) => s.dims.iter().map(|d| d.extent).collect(),
            Producer::Buffer(b) => b.dims.clone(),
        }
    }

    pub fn element_size(&self) -> u64 {
        match self {
            Producer::Stage(..) => STAGE_ELEMENT_SIZE,
            Producer::Buffer(b) => b.element_size,
        }
    }
}

impl Pipeline {
    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn stage_index(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }

    pub fn buffer(&self, name: &str) -> Option<&ExternalBuffer> {
        self.buffers.iter().find(|b| b.name == name)
    }

    pub fn producer(&self, name: &str) -> Option<Producer<'_>> {
        if let Some(i) = self.stage_index(name) {
            return Some(Producer::Stage(i, &self.stages[i]));
        }
        self.buffer(name).map(Producer::Buffer)
    }

    /// `(consumer stage index, edge index)` for every edge reading stage `producer`,
    /// in declaration order.
    pub fn consumers_of(&self, producer: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (ci, stage) in self.stages.iter().enumerate() {
            for (ei, edge) in stage.inputs.iter().enumerate() {
                if edge.producer == producer {
                    out.push((ci, ei));
                }
            }
        }
        out
    }
}

/// Half-open integer interval `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    pub fn new(lo: u64, hi: u64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn len(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region(pub Vec<Interval>);

impl Region {
    pub fn from_extents(extents: impl IntoIterator<Item = u64>) -> Self {
        Region(extents.into_iter().map(|e| Interval::new(0, e)).collect())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn size(&self) -> u64 {
        self.0.iter().map(Interval::len).product()
    }

    pub fn extents(&self) -> Vec<u64> {
        self.0.iter().map(Interval::len).collect()
    }

    pub fn contains(&self, point: &[u64]) -> bool {
        point.len() == self.0.len()
            && point
                .iter()
                .zip(&self.0)
                .all(|(&p, iv)| iv.lo <= p && p < iv.hi)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, iv) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}..{}", iv.lo, iv.hi)?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("cycle detected through stage `{0}`")]
    Cycle(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("region has rank {got}, edge expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid pipeline:\n{0}")]
    Invalid(ValidationReport),
}

/// Image of `consumer_region` (over the consumer's pure + reduction dims) through an edge.
pub fn footprint_region(edge: &InputEdge, consumer_region: &Region) -> Result<Region, PipelineError> {
    let rank = consumer_region.rank();
    let mut out = Vec::with_capacity(edge.access.len());
    for map in &edge.access {
        let iv = match map.consumer_dim {
            Some(d) => {
                let c = consumer_region.0.get(d).ok_or(PipelineError::DimensionMismatch {
                    expected: d + 1,
                    got: rank,
                })?;
                if c.is_empty() {
                    Interval::new(0, 0)
                } else {
                    Interval::new(map.stride * c.lo, map.stride * (c.hi - 1) + map.window)
                }
            }
            None => Interval::new(0, map.window),
        };
        out.push(iv);
    }
    Ok(Region(out))
}

/// Number of producer points an edge touches for a consumer box with the given extents.
/// Equivalent to `footprint_region(..).size()` but independent of the box offset.
pub fn footprint_size(edge: &InputEdge, consumer_extents: &[u64]) -> u64 {
    edge.access
        .iter()
        .map(|m| match m.consumer_dim {
            Some(d) => {
                let t = consumer_extents[d];
                if t == 0 {
                    0
                } else {
                    m.stride * (t - 1) + m.window
                }
            }
            None => m.window,
        })
        .product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntrinsicStats {
    pub points: u64,
    pub flops: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

/// Schedule-independent work and traffic of one stage.
pub fn intrinsic_stats(p: &Pipeline, stage: &str) -> Result<IntrinsicStats, PipelineError> {
    let s = p
        .stage(stage)
        .ok_or_else(|| PipelineError::UnknownStage(stage.to_string()))?;
    let points = s.domain_points();
    let extents: Vec<u64> = s.all_dims().map(|d| d.extent).collect();
    let input_bytes = s
        .inputs
        .iter()
        .map(|e| {
            let elem = p.producer(&e.producer).map_or(0, |pr| pr.element_size());
            footprint_size(e, &extents) * elem
        })
        .sum();
    Ok(IntrinsicStats {
        points,
        flops: points * s.flops_per_point,
        input_bytes,
        output_bytes: s.pure_points() * STAGE_ELEMENT_SIZE,
    })
}

/// Stage names ordered so every producer precedes its consumers. Ties go to the
/// stage declared first.
pub fn topological_order(p: &Pipeline) -> Result<Vec<String>, PipelineError> {
    topological_indices(p).map(|idx| idx.into_iter().map(|i| p.stages[i].name.clone()).collect())
}

pub fn topological_indices(p: &Pipeline) -> Result<Vec<usize>, PipelineError> {
    let index: HashMap<&str, usize> = p
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();
    let preds: Vec<Vec<usize>> = p
        .stages
        .iter()
        .map(|s| {
            s.inputs
                .iter()
                .filter_map(|e| index.get(e.producer.as_str()).copied())
                .collect()
        })
        .collect();
    let mut done = vec![false; p.stages.len()];
    let mut order = Vec::with_capacity(p.stages.len());
    while order.len() < p.stages.len() {
        let next = (0..p.stages.len()).find(|&i| !done[i] && preds[i].iter().all(|&q| done[q]));
        match next {
            Some(i) => {
                done[i] = true;
                order.push(i);
            }
            None => {
                let stuck = (0..p.stages.len()).find(|&i| !done[i]).unwrap();
                return Err(PipelineError::Cycle(p.stages[stuck].name.clone()));
            }
        }
    }
    Ok(order)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoStages,
    OutputCount(usize),
    DuplicateName(String),
    UnknownProducer { stage: String, producer: String },
    Cycle(String),
    EmptyDims(String),
    ZeroExtent { owner: String, dim: String },
    DuplicateDim { stage: String, dim: String },
    ZeroElementSize(String),
    MissingFlops(String),
    AccessArity { stage: String, producer: String, expected: usize, got: usize },
    ConsumerDimRange { stage: String, producer: String, dim: usize },
    StrideWithoutDim { stage: String, producer: String, dim: usize },
    ZeroWindow { stage: String, producer: String, dim: usize },
    GappedWindow { stage: String, producer: String, dim: usize },
    RepeatedConsumerDim { stage: String, producer: String, consumer_dim: usize },
    OutOfBounds { stage: String, producer: String, dim: usize, max_index: u64, extent: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoStages => write!(f, "pipeline has no stages"),
            OutputCount(n) => write!(f, "expected exactly one output stage, found {n}"),
            DuplicateName(n) => write!(f, "duplicate name `{n}`"),
            UnknownProducer { stage, producer } => {
                write!(f, "stage `{stage}` reads unknown producer `{producer}`")
            }
            Cycle(s) => write!(f, "dependence cycle through stage `{s}`"),
            EmptyDims(s) => write!(f, "stage `{s}` has no pure dims"),
            ZeroExtent { owner, dim } => write!(f, "`{owner}` has zero extent in dim `{dim}`"),
            DuplicateDim { stage, dim } => write!(f, "stage `{stage}` repeats dim `{dim}`"),
            ZeroElementSize(b) => write!(f, "buffer `{b}` has element size 0"),
            MissingFlops(s) => write!(f, "stage `{s}` has inputs but flops 0"),
            AccessArity { stage, producer, expected, got } => write!(
                f,
                "edge {producer} -> {stage}: {got} map clauses for a {expected}-d producer"
            ),
            ConsumerDimRange { stage, producer, dim } => write!(
                f,
                "edge {producer} -> {stage}: map {dim} names a consumer dim that does not exist"
            ),
            StrideWithoutDim { stage, producer, dim } => write!(
                f,
                "edge {producer} -> {stage}: map {dim} has no consumer dim but a non-zero stride"
            ),
            ZeroWindow { stage, producer, dim } => {
                write!(f, "edge {producer} -> {stage}: map {dim} has window 0")
            }
            GappedWindow { stage, producer, dim } => write!(
                f,
                "edge {producer} -> {stage}: map {dim} has window smaller than stride"
            ),
            RepeatedConsumerDim { stage, producer, consumer_dim } => write!(
                f,
                "edge {producer} -> {stage}: consumer dim {consumer_dim} drives more than one producer dim"
            ),
            OutOfBounds { stage, producer, dim, max_index, extent } => write!(
                f,
                "edge {producer} -> {stage}: out-of-bounds access in dim {dim} (max index {max_index} >= extent {extent})"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collect every structural violation. An empty report means the pipeline is well-formed.
pub fn validate(p: &Pipeline) -> ValidationReport {
    let mut v = Vec::new();

    if p.stages.is_empty() {
        v.push(Violation::NoStages);
    }
    let outputs = p.stages.iter().filter(|s| s.output).count();
    if !p.stages.is_empty() && outputs != 1 {
        v.push(Violation::OutputCount(outputs));
    }

    let mut seen = HashSet::new();
    for name in p
        .buffers
        .iter()
        .map(|b| &b.name)
        .chain(p.stages.iter().map(|s| &s.name))
    {
        if !seen.insert(name.as_str()) {
            v.push(Violation::DuplicateName(name.clone()));
        }
    }

    for b in &p.buffers {
        for (i, &e) in b.dims.iter().enumerate() {
            if e == 0 {
                v.push(Violation::ZeroExtent {
                    owner: b.name.clone(),
                    dim: i.to_string(),
                });
            }
        }
        if b.element_size == 0 {
            v.push(Violation::ZeroElementSize(b.name.clone()));
        }
    }

    for s in &p.stages {
        if s.dims.is_empty() {
            v.push(Violation::EmptyDims(s.name.clone()));
        }
        let mut dim_names = HashSet::new();
        for d in s.all_dims() {
            if d.extent == 0 {
                v.push(Violation::ZeroExtent {
                    owner: s.name.clone(),
                    dim: d.name.clone(),
                });
            }
            if !dim_names.insert(d.name.as_str()) {
                v.push(Violation::DuplicateDim {
                    stage: s.name.clone(),
                    dim: d.name.clone(),
                });
            }
        }
        if !s.inputs.is_empty() && s.flops_per_point == 0 {
            v.push(Violation::MissingFlops(s.name.clone()));
        }
        let consumer_extents: Vec<u64> = s.all_dims().map(|d| d.extent).collect();
        for edge in &s.inputs {
            let Some(producer) = p.producer(&edge.producer) else {
                v.push(Violation::UnknownProducer {
                    stage: s.name.clone(),
                    producer: edge.producer.clone(),
                });
                continue;
            };
            let extents = producer.extents();
            if extents.len() != edge.access.len() {
                v.push(Violation::AccessArity {
                    stage: s.name.clone(),
                    producer: edge.producer.clone(),
                    expected: extents.len(),
                    got: edge.access.len(),
                });
                continue;
            }
            let mut used = HashSet::new();
            for (dim, (map, &extent)) in edge.access.iter().zip(&extents).enumerate() {
                let ctx = || (s.name.clone(), edge.producer.clone());
                if map.window == 0 {
                    let (stage, producer) = ctx();
                    v.push(Violation::ZeroWindow { stage, producer, dim });
                    continue;
                }
                let consumer_extent = match map.consumer_dim {
                    Some(c) if c >= consumer_extents.len() => {
                        let (stage, producer) = ctx();
                        v.push(Violation::ConsumerDimRange { stage, producer, dim });
                        continue;
                    }
                    Some(c) => {
                        if !used.insert(c) {
                            let (stage, producer) = ctx();
                            v.push(Violation::RepeatedConsumerDim {
                                stage,
                                producer,
                                consumer_dim: c,
                            });
                        }
                        if map.window < map.stride {
                            let (stage, producer) = ctx();
                            v.push(Violation::GappedWindow { stage, producer, dim });
                        }
                        consumer_extents[c]
                    }
                    None => {
                        if map.stride != 0 {
                            let (stage, producer) = ctx();
                            v.push(Violation::StrideWithoutDim { stage, producer, dim });
                        }
                        1
                    }
                };
                let max_index = map.max_index(consumer_extent);
                if max_index >= extent {
                    let (stage, producer) = ctx();
                    v.push(Violation::OutOfBounds {
                        stage,
                        producer,
                        dim,
                        max_index,
                        extent,
                    });
                }
            }
        }
    }

    if let Err(PipelineError::Cycle(s)) = topological_indices(p) {
        v.push(Violation::Cycle(s));
    }

    ValidationReport { violations: v }
}
