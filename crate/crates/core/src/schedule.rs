//! Partial schedules as MDP states, and per-stage scheduling actions.
//!
//! Stages are visited consumers-first (reverse topological order), so a stage's
//! `compute_at`/`store_at` candidates always refer to a consumer loop nest that is
//! already fixed. An action is the complete primitive bundle for one stage:
//! splits, loop order, vectorization, parallelization and placement.
//!
//! Anchoring rules: a stage may be placed inside a consumer only if that consumer
//! is its sole reader (through a single edge), reads the whole producer domain,
//! and is itself computed at root. The anchor loop and every loop enclosing it
//! must be pure, and the set of consumer points covered by one iteration of those
//! loops must be a box.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::pipeline::{
    footprint_size, intrinsic_stats, topological_indices, validate, IntrinsicStats, Interval,
    Pipeline, Region, Stage, ValidationReport,
};
use crate::text::is_identifier;

/// Split factors offered by the candidate grid.
pub const GRID_SPLIT_FACTORS: [u64; 2] = [8, 32];
/// Vector widths offered by the candidate grid.
pub const GRID_VECTOR_WIDTHS: [u64; 2] = [1, 8];
/// Deepest consumer loop level offered for anchoring.
pub const GRID_MAX_ANCHOR_LEVEL: usize = 2;
/// Vector widths accepted by `apply`.
pub const LEGAL_VECTOR_WIDTHS: [u64; 4] = [1, 4, 8, 16];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    Root,
    /// Inside loop `level` (0 = outermost) of `consumer`'s nest.
    At { consumer: String, level: usize },
}

impl Site {
    pub fn level(&self) -> Option<usize> {
        match self {
            Site::Root => None,
            Site::At { level, .. } => Some(*level),
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Root => write!(f, "root"),
            Site::At { consumer, level } => write!(f, "{consumer}@{level}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Split {
    pub dim: String,
    pub factor: u64,
}

/// One action: every scheduling decision for a single stage.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerSchedule {
    pub stage: String,
    pub splits: Vec<Split>,
    /// Loop names, outermost first.
    pub order: Vec<String>,
    pub vectorize_width: u64,
    pub parallel: bool,
    pub compute_at: Site,
    pub store_at: Site,
}

impl LayerSchedule {
    /// No splits, natural loop order, scalar, serial, computed and stored at root.
    pub fn default_for(stage: &Stage) -> Self {
        LayerSchedule {
            stage: stage.name.clone(),
            splits: Vec::new(),
            order: stage.all_dims().map(|d| d.name.clone()).collect(),
            vectorize_width: 1,
            parallel: false,
            compute_at: Site::Root,
            store_at: Site::Root,
        }
    }
}

impl fmt::Display for LayerSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} split=", self.stage)?;
        if self.splits.is_empty() {
            write!(f, "-")?;
        }
        for (i, s) in self.splits.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", s.dim, s.factor)?;
        }
        write!(
            f,
            " order={} vec={} par={} compute={} store={}",
            self.order.join(","),
            self.vectorize_width,
            u8::from(self.parallel),
            self.compute_at,
            self.store_at
        )
    }
}

fn parse_site(s: &str) -> Result<Site, String> {
    if s == "root" {
        return Ok(Site::Root);
    }
    let (consumer, level) = s.split_once('@').ok_or_else(|| format!("bad site `{s}`"))?;
    if !is_identifier(consumer) {
        return Err(format!("bad site `{s}`"));
    }
    let level = level.parse().map_err(|_| format!("bad site level `{level}`"))?;
    Ok(Site::At {
        consumer: consumer.to_string(),
        level,
    })
}

impl FromStr for LayerSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut toks = s.split_whitespace();
        let stage = toks.next().ok_or("empty schedule line")?;
        if !is_identifier(stage) {
            return Err(format!("bad stage name `{stage}`"));
        }
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for t in toks {
            let (k, v) = t.split_once('=').ok_or_else(|| format!("expected key=value, found `{t}`"))?;
            if fields.insert(k, v).is_some() {
                return Err(format!("repeated field `{k}`"));
            }
        }
        let mut take = |k: &str| fields.remove(k).ok_or_else(|| format!("missing field `{k}`"));
        let splits = match take("split")? {
            "-" => Vec::new(),
            list => list
                .split(',')
                .map(|item| {
                    let (dim, factor) = item
                        .split_once(':')
                        .ok_or_else(|| format!("bad split `{item}`"))?;
                    Ok(Split {
                        dim: dim.to_string(),
                        factor: factor.parse().map_err(|_| format!("bad split factor `{factor}`"))?,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?,
        };
        let order = take("order")?.split(',').map(str::to_string).collect();
        let vec = take("vec")?;
        let vectorize_width = vec.parse().map_err(|_| format!("bad vector width `{vec}`"))?;
        let parallel = match take("par")? {
            "0" => false,
            "1" => true,
            other => return Err(format!("bad par flag `{other}`")),
        };
        let compute_at = parse_site(take("compute")?)?;
        let store_at = parse_site(take("store")?)?;
        if let Some(k) = fields.keys().next() {
            return Err(format!("unknown field `{k}`"));
        }
        Ok(LayerSchedule {
            stage: stage.to_string(),
            splits,
            order,
            vectorize_width,
            parallel,
            compute_at,
            store_at,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LoopPart {
    Whole,
    Outer,
    Inner,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Loop {
    pub name: String,
    pub extent: u64,
    /// Index into the stage's pure + reduction dims.
    pub dim: usize,
    pub part: LoopPart,
    pub reduction: bool,
    pub vectorized: bool,
    pub parallel: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IllegalAction {
    #[error("action targets stage `{got}` but the next stage is `{expected}`")]
    WrongStage { expected: String, got: String },
    #[error("split names unknown dim `{0}`")]
    UnknownDim(String),
    #[error("split of `{0}` targets a reduction dim")]
    SplitReduction(String),
    #[error("dim `{0}` split more than once")]
    RepeatedSplit(String),
    #[error("split factor {factor} of `{dim}` must be >= 2 and divide {extent}")]
    BadFactor { dim: String, factor: u64, extent: u64 },
    #[error("loop names collide after splitting (`{0}`)")]
    LoopNameCollision(String),
    #[error("order is not a permutation of the loops {0:?}")]
    BadOrder(Vec<String>),
    #[error("vector width {0} is not one of 1, 4, 8, 16")]
    BadVectorWidth(u64),
    #[error("vector width {width} does not divide innermost extent {extent}")]
    VectorNotDivisible { width: u64, extent: u64 },
    #[error("innermost loop `{0}` is a reduction loop and cannot be vectorized")]
    VectorizeReduction(String),
    #[error("outermost loop `{0}` is a reduction loop and cannot be parallel")]
    ParallelReduction(String),
    #[error("`{0}` cannot host this stage")]
    NotAnchorHost(String),
    #[error("host `{0}` is not computed at root")]
    HostNotRoot(String),
    #[error("loop level {level} does not exist in `{consumer}`")]
    NoSuchLevel { consumer: String, level: usize },
    #[error("anchor at `{consumer}`@{level} is enclosed by a reduction loop")]
    AnchorUnderReduction { consumer: String, level: usize },
    #[error("anchor at `{consumer}`@{level} does not cover a box of the consumer")]
    NonBoxAnchor { consumer: String, level: usize },
    #[error("store_at must be at or outside compute_at")]
    StoreInsideCompute,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("invalid pipeline:\n{0}")]
    InvalidPipeline(ValidationReport),
    #[error("state is already complete")]
    Complete,
    #[error("illegal action for stage `{stage}`: {reason}")]
    Illegal { stage: String, reason: IllegalAction },
    #[error("schedule line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schedule is for pipeline `{found}`, expected `{expected}`")]
    WrongPipeline { expected: String, found: String },
}

/// Static scheduling facts about a validated pipeline, shared by all its states.
#[derive(Debug)]
pub struct ScheduleSpace {
    pipeline: Pipeline,
    topo: Vec<usize>,
    visit: Vec<usize>,
    host: Vec<Option<usize>>,
    host_edge: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    intrinsic: Vec<IntrinsicStats>,
}

impl ScheduleSpace {
    pub fn new(pipeline: Pipeline) -> Result<Arc<Self>, ScheduleError> {
        let report = validate(&pipeline);
        if !report.is_empty() {
            return Err(ScheduleError::InvalidPipeline(report));
        }
        let topo = topological_indices(&pipeline).expect("validated pipeline is acyclic");
        let visit: Vec<usize> = topo.iter().rev().copied().collect();
        let n = pipeline.stages.len();
        let mut host = vec![None; n];
        let mut host_edge = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (i, stage) in pipeline.stages.iter().enumerate() {
            if stage.output {
                continue;
            }
            let readers = pipeline.consumers_of(&stage.name);
            if let [(c, e)] = readers[..] {
                let consumer = &pipeline.stages[c];
                let extents: Vec<u64> = consumer.all_dims().map(|d| d.extent).collect();
                if footprint_size(&consumer.inputs[e], &extents) == stage.pure_points() {
                    host[i] = Some(c);
                    host_edge[i] = Some(e);
                    children[c].push(i);
                }
            }
        }
        let intrinsic = pipeline
            .stages
            .iter()
            .map(|s| intrinsic_stats(&pipeline, &s.name).expect("stage exists"))
            .collect();
        Ok(Arc::new(ScheduleSpace {
            pipeline,
            topo,
            visit,
            host,
            host_edge,
            children,
            intrinsic,
        }))
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn num_stages(&self) -> usize {
        self.pipeline.stages.len()
    }

    /// Stage indices, producers first.
    pub fn topo(&self) -> &[usize] {
        &self.topo
    }

    /// Stage indices in the order decisions are made (consumers first).
    pub fn visit(&self) -> &[usize] {
        &self.visit
    }

    /// Stage that may host `stage` via compute_at, if any.
    pub fn host_of(&self, stage: usize) -> Option<usize> {
        self.host[stage]
    }

    /// Edge of the host that reads `stage`.
    pub fn host_edge_of(&self, stage: usize) -> Option<usize> {
        self.host_edge[stage]
    }

    pub fn intrinsic(&self, stage: usize) -> &IntrinsicStats {
        &self.intrinsic[stage]
    }
}

/// A partial schedule: decisions for a prefix of the visit order.
#[derive(Clone)]
pub struct ScheduleState {
    space: Arc<ScheduleSpace>,
    decisions: Vec<LayerSchedule>,
    loops: Vec<Arc<[Loop]>>,
}

impl fmt::Debug for ScheduleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScheduleState({})", canonical_key(self))
    }
}

impl PartialEq for ScheduleState {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.space, &other.space) || self.space.pipeline == other.space.pipeline)
            && self.decisions == other.decisions
    }
}

impl Eq for ScheduleState {}

impl ScheduleState {
    pub fn initial(space: &Arc<ScheduleSpace>) -> Self {
        ScheduleState {
            space: Arc::clone(space),
            decisions: Vec::new(),
            loops: Vec::new(),
        }
    }

    pub fn space(&self) -> &Arc<ScheduleSpace> {
        &self.space
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.space.pipeline
    }

    pub fn decisions(&self) -> &[LayerSchedule] {
        &self.decisions
    }

    pub fn scheduled_count(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_complete(&self) -> bool {
        self.decisions.len() == self.space.num_stages()
    }

    /// Index of the stage the next action schedules.
    pub fn next_stage(&self) -> Option<usize> {
        self.space.visit.get(self.decisions.len()).copied()
    }

    /// Position of `stage` in the visit order if it has been scheduled.
    pub fn decision_index(&self, stage: usize) -> Option<usize> {
        let pos = self.space.visit.iter().position(|&s| s == stage)?;
        (pos < self.decisions.len()).then_some(pos)
    }

    pub fn decision_for(&self, stage: usize) -> Option<(&LayerSchedule, &[Loop])> {
        self.decision_index(stage)
            .map(|k| (&self.decisions[k], &*self.loops[k]))
    }

    /// The prefix with the first `count` decisions.
    pub fn prefix(&self, count: usize) -> ScheduleState {
        ScheduleState {
            space: Arc::clone(&self.space),
            decisions: self.decisions[..count].to_vec(),
            loops: self.loops[..count].to_vec(),
        }
    }
}

pub fn initial_state(p: &Pipeline) -> Result<ScheduleState, ScheduleError> {
    Ok(ScheduleState::initial(&ScheduleSpace::new(p.clone())?))
}

/// Materialize a stage's loops from its splits and order, then annotate.
pub fn build_loops(stage: &Stage, a: &LayerSchedule) -> Result<Vec<Loop>, IllegalAction> {
    let mut factors: Vec<Option<u64>> = vec![None; stage.num_all_dims()];
    for s in &a.splits {
        let d = stage
            .dim_index(&s.dim)
            .ok_or_else(|| IllegalAction::UnknownDim(s.dim.clone()))?;
        if stage.is_reduction_dim(d) {
            return Err(IllegalAction::SplitReduction(s.dim.clone()));
        }
        if factors[d].is_some() {
            return Err(IllegalAction::RepeatedSplit(s.dim.clone()));
        }
        let extent = stage.dims[d].extent;
        if s.factor < 2 || !extent.is_multiple_of(s.factor) {
            return Err(IllegalAction::BadFactor {
                dim: s.dim.clone(),
                factor: s.factor,
                extent,
            });
        }
        factors[d] = Some(s.factor);
    }
    let base = base_loops(stage, &factors);
    for (i, l) in base.iter().enumerate() {
        if base[..i].iter().any(|m| m.name == l.name) {
            return Err(IllegalAction::LoopNameCollision(l.name.clone()));
        }
    }
    let bad_order = || IllegalAction::BadOrder(base.iter().map(|l| l.name.clone()).collect());
    if a.order.len() != base.len() {
        return Err(bad_order());
    }
    let mut loops = Vec::with_capacity(base.len());
    for name in &a.order {
        let l = base.iter().find(|l| &l.name == name).ok_or_else(bad_order)?;
        if loops.iter().any(|m: &Loop| &m.name == name) {
            return Err(bad_order());
        }
        loops.push(l.clone());
    }
    annotate(&mut loops, a.vectorize_width, a.parallel)?;
    Ok(loops)
}

fn base_loops(stage: &Stage, factors: &[Option<u64>]) -> Vec<Loop> {
    let mut loops = Vec::with_capacity(stage.num_all_dims() + 2);
    let mk = |name: String, extent, dim, part, reduction| Loop {
        name,
        extent,
        dim,
        part,
        reduction,
        vectorized: false,
        parallel: false,
    };
    for (d, dim) in stage.dims.iter().enumerate() {
        match factors[d] {
            Some(f) => {
                loops.push(mk(format!("{}o", dim.name), dim.extent / f, d, LoopPart::Outer, false));
                loops.push(mk(format!("{}i", dim.name), f, d, LoopPart::Inner, false));
            }
            None => loops.push(mk(dim.name.clone(), dim.extent, d, LoopPart::Whole, false)),
        }
    }
    let np = stage.dims.len();
    for (r, dim) in stage.reduction_dims.iter().enumerate() {
        loops.push(mk(dim.name.clone(), dim.extent, np + r, LoopPart::Whole, true));
    }
    loops
}

fn annotate(loops: &mut [Loop], width: u64, parallel: bool) -> Result<(), IllegalAction> {
    if !LEGAL_VECTOR_WIDTHS.contains(&width) {
        return Err(IllegalAction::BadVectorWidth(width));
    }
    if width > 1 {
        let inner = loops.last_mut().expect("stage has at least one loop");
        if inner.reduction {
            return Err(IllegalAction::VectorizeReduction(inner.name.clone()));
        }
        if !inner.extent.is_multiple_of(width) {
            return Err(IllegalAction::VectorNotDivisible {
                width,
                extent: inner.extent,
            });
        }
        inner.vectorized = true;
    }
    if parallel {
        let outer = &mut loops[0];
        if outer.reduction {
            return Err(IllegalAction::ParallelReduction(outer.name.clone()));
        }
        outer.parallel = true;
    }
    Ok(())
}

/// Extents, over the host's pure + reduction dims, of the host points covered by one
/// iteration of loops `0..=level`. `None` when that set is not a box.
pub fn tile_extents(host: &Stage, loops: &[Loop], level: usize) -> Option<Vec<u64>> {
    let mut ext: Vec<u64> = host.all_dims().map(|d| d.extent).collect();
    let (fixed, free) = loops.split_at(level + 1);
    for l in fixed {
        match l.part {
            LoopPart::Whole => ext[l.dim] = 1,
            LoopPart::Outer => {
                let inner_free = free.iter().any(|m| m.dim == l.dim && m.part == LoopPart::Inner);
                ext[l.dim] = if inner_free { host.all_dims().nth(l.dim)?.extent / l.extent } else { 1 };
            }
            LoopPart::Inner => {
                if free.iter().any(|m| m.dim == l.dim && m.part == LoopPart::Outer) {
                    return None;
                }
            }
        }
    }
    Some(ext)
}

/// Host region covered by the iteration of loops `0..=level` given by `indices`
/// (one index per fixed loop). Requires a box-shaped anchor.
pub fn tile_region(host: &Stage, loops: &[Loop], level: usize, indices: &[u64]) -> Region {
    let ext = tile_extents(host, loops, level).expect("box-shaped anchor");
    let mut lo = vec![0u64; ext.len()];
    for (l, &i) in loops[..=level].iter().zip(indices) {
        match l.part {
            LoopPart::Whole | LoopPart::Inner => lo[l.dim] += i,
            LoopPart::Outer => {
                let full = host.all_dims().nth(l.dim).unwrap().extent;
                lo[l.dim] += i * (full / l.extent);
            }
        }
    }
    Region(
        lo.into_iter()
            .zip(ext)
            .map(|(lo, e)| Interval::new(lo, lo + e))
            .collect(),
    )
}

/// Loops of the host seen from the stage being placed.
#[derive(Clone, Copy)]
struct HostView<'a> {
    name: &'a str,
    stage: &'a Stage,
    root: bool,
    loops: &'a [Loop],
}

impl<'a> HostView<'a> {
    fn check_level(&self, level: usize) -> Result<(), IllegalAction> {
        let consumer = self.name.to_string();
        if !self.root {
            return Err(IllegalAction::HostNotRoot(consumer));
        }
        if level >= self.loops.len() {
            return Err(IllegalAction::NoSuchLevel { consumer, level });
        }
        if self.loops[..=level].iter().any(|l| l.reduction) {
            return Err(IllegalAction::AnchorUnderReduction { consumer, level });
        }
        if tile_extents(self.stage, self.loops, level).is_none() {
            return Err(IllegalAction::NonBoxAnchor { consumer, level });
        }
        Ok(())
    }

    /// Allowed (compute, store) placements from the grid, root first.
    fn grid_sites(&self) -> Vec<(Site, Site)> {
        let mut out = Vec::new();
        for level in 0..=GRID_MAX_ANCHOR_LEVEL {
            if self.check_level(level).is_ok() {
                let at = Site::At {
                    consumer: self.name.to_string(),
                    level,
                };
                out.push((at.clone(), Site::Root));
                out.push((at.clone(), at));
            }
        }
        out
    }
}

fn host_view<'a>(state: &'a ScheduleState, stage: usize) -> Option<HostView<'a>> {
    let h = state.space.host[stage]?;
    let (decision, loops) = state.decision_for(h)?;
    Some(HostView {
        name: &state.space.pipeline.stages[h].name,
        stage: &state.space.pipeline.stages[h],
        root: decision.compute_at == Site::Root,
        loops,
    })
}

fn check_sites(a: &LayerSchedule, host: Option<HostView<'_>>) -> Result<(), IllegalAction> {
    let at = |site: &Site| -> Result<Option<usize>, IllegalAction> {
        match site {
            Site::Root => Ok(None),
            Site::At { consumer, level } => match host {
                Some(h) if h.name == consumer => {
                    h.check_level(*level)?;
                    Ok(Some(*level))
                }
                _ => Err(IllegalAction::NotAnchorHost(consumer.clone())),
            },
        }
    };
    let compute = at(&a.compute_at)?;
    let store = at(&a.store_at)?;
    match (compute, store) {
        (_, None) => Ok(()),
        (Some(c), Some(s)) if s <= c => Ok(()),
        _ => Err(IllegalAction::StoreInsideCompute),
    }
}

fn check_action(state: &ScheduleState, a: &LayerSchedule) -> Result<Vec<Loop>, ScheduleError> {
    let next = state.next_stage().ok_or(ScheduleError::Complete)?;
    let stage = &state.space.pipeline.stages[next];
    let illegal = |reason| ScheduleError::Illegal {
        stage: a.stage.clone(),
        reason,
    };
    if a.stage != stage.name {
        return Err(illegal(IllegalAction::WrongStage {
            expected: stage.name.clone(),
            got: a.stage.clone(),
        }));
    }
    let loops = build_loops(stage, a).map_err(illegal)?;
    check_sites(a, host_view(state, next)).map_err(illegal)?;
    Ok(loops)
}

/// Extend `s` by one decision. `s` itself is left untouched.
pub fn apply(s: &ScheduleState, a: &LayerSchedule) -> Result<ScheduleState, ScheduleError> {
    let loops = check_action(s, a)?;
    let mut next = s.clone();
    next.decisions.push(a.clone());
    next.loops.push(loops.into());
    Ok(next)
}

/// Split/order/vectorize/parallel combinations of the grid for one stage,
/// independent of placement, with their materialized loops. Default first.
fn structural_grid(stage: &Stage) -> Vec<(LayerSchedule, Vec<Loop>)> {
    let np = stage.dims.len();
    let split_dims: Vec<usize> = (np.saturating_sub(2)..np).collect();
    let options: Vec<Vec<Option<u64>>> = split_dims
        .iter()
        .map(|&d| {
            let e = stage.dims[d].extent;
            std::iter::once(None)
                .chain(
                    GRID_SPLIT_FACTORS
                        .iter()
                        .filter(|&&f| f < e && e.is_multiple_of(f))
                        .map(|&f| Some(f)),
                )
                .collect()
        })
        .collect();

    let mut combos: Vec<Vec<Option<u64>>> = vec![Vec::new()];
    for opts in &options {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                opts.iter().map(move |o| {
                    let mut c = c.clone();
                    c.push(*o);
                    c
                })
            })
            .collect();
    }

    let mut out = Vec::new();
    for combo in combos {
        let mut factors = vec![None; stage.num_all_dims()];
        let mut splits = Vec::new();
        for (&d, f) in split_dims.iter().zip(&combo) {
            factors[d] = *f;
            if let Some(f) = f {
                splits.push(Split {
                    dim: stage.dims[d].name.clone(),
                    factor: *f,
                });
            }
        }
        let base = base_loops(stage, &factors);
        let (pure, red): (Vec<&Loop>, Vec<&Loop>) = base.iter().partition(|l| !l.reduction);
        let mut placements = vec![[pure.clone(), red.clone()].concat()];
        if !red.is_empty() {
            placements.push([red.clone(), pure.clone()].concat());
        }
        let mut orders: Vec<Vec<String>> = Vec::new();
        for p in placements {
            let names: Vec<String> = p.iter().map(|l| l.name.clone()).collect();
            let mut variants = vec![names.clone()];
            if names.len() >= 2 {
                let mut swapped = names;
                let n = swapped.len();
                swapped.swap(n - 2, n - 1);
                variants.push(swapped);
            }
            for v in variants {
                if !orders.contains(&v) {
                    orders.push(v);
                }
            }
        }
        for order in orders {
            for &vec in &GRID_VECTOR_WIDTHS {
                for parallel in [false, true] {
                    let a = LayerSchedule {
                        stage: stage.name.clone(),
                        splits: splits.clone(),
                        order: order.clone(),
                        vectorize_width: vec,
                        parallel,
                        compute_at: Site::Root,
                        store_at: Site::Root,
                    };
                    if let Ok(loops) = build_loops(stage, &a) {
                        out.push((a, loops));
                    }
                }
            }
        }
    }
    out
}

fn grid_candidates(stage: &Stage, host: Option<HostView<'_>>) -> Vec<LayerSchedule> {
    let mut sites = vec![(Site::Root, Site::Root)];
    if let Some(h) = host {
        sites.extend(h.grid_sites());
    }
    let mut out = Vec::new();
    for (a, _) in structural_grid(stage) {
        for (compute, store) in &sites {
            let mut c = a.clone();
            c.compute_at = compute.clone();
            c.store_at = store.clone();
            out.push(c);
        }
    }
    out
}

/// Every legal grid action for the next stage, in a fixed order with the
/// default action first.
pub fn candidate_actions(s: &ScheduleState) -> Result<Vec<LayerSchedule>, ScheduleError> {
    let next = s.next_stage().ok_or(ScheduleError::Complete)?;
    Ok(grid_candidates(&s.space.pipeline.stages[next], host_view(s, next)))
}

/// Number of complete schedules reachable from the initial state, saturating at
/// `u128::MAX`. Candidate sets only depend on the host's decision, so the count
/// factorizes over the host forest.
pub fn space_size(space: &ScheduleSpace) -> u128 {
    let mut memo: HashMap<(usize, Vec<Loop>, bool), u128> = HashMap::new();
    let mut total: u128 = 1;
    for &s in space.visit() {
        if space.host[s].is_none() {
            total = total.saturating_mul(subtree_count(space, s, None, &mut memo));
        }
    }
    total
}

/// Σ over candidates `b` of `stage` (given its host view) of Π over its children.
fn subtree_count(
    space: &ScheduleSpace,
    stage: usize,
    host: Option<HostView<'_>>,
    memo: &mut HashMap<(usize, Vec<Loop>, bool), u128>,
) -> u128 {
    let key = (
        stage,
        host.map(|h| h.loops.to_vec()).unwrap_or_default(),
        host.is_some_and(|h| h.root),
    );
    if let Some(&c) = memo.get(&key) {
        return c;
    }
    let st = &space.pipeline.stages[stage];
    let mut sum: u128 = 0;
    for b in grid_candidates(st, host) {
        let loops = build_loops(st, &b).expect("grid candidates are legal");
        let view = HostView {
            name: &st.name,
            stage: st,
            root: b.compute_at == Site::Root,
            loops: &loops,
        };
        let mut prod: u128 = 1;
        for &child in &space.children[stage] {
            prod = prod.saturating_mul(subtree_count(space, child, Some(view), memo));
        }
        sum = sum.saturating_add(prod);
    }
    memo.insert(key, sum);
    sum
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageNest {
    pub stage: String,
    pub loops: Vec<Loop>,
    pub compute_at: Site,
    pub store_at: Site,
}

/// Materialized loops of every scheduled stage, in decision order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopNest {
    pub stages: Vec<StageNest>,
}

pub fn loop_nest(s: &ScheduleState) -> LoopNest {
    LoopNest {
        stages: s
            .decisions
            .iter()
            .zip(&s.loops)
            .map(|(d, l)| StageNest {
                stage: d.stage.clone(),
                loops: l.to_vec(),
                compute_at: d.compute_at.clone(),
                store_at: d.store_at.clone(),
            })
            .collect(),
    }
}

impl fmt::Display for LoopNest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stages {
            write!(f, "{} [compute {}, store {}]:", s.stage, s.compute_at, s.store_at)?;
            for l in &s.loops {
                write!(f, " {}:{}", l.name, l.extent)?;
                if l.parallel {
                    write!(f, "(par)")?;
                }
                if l.vectorized {
                    write!(f, "(vec)")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// `<pipeline>/<decision>;<decision>;...`
pub fn canonical_key(s: &ScheduleState) -> String {
    let mut key = format!("{}/", s.space.pipeline.name);
    for (i, d) in s.decisions.iter().enumerate() {
        if i > 0 {
            key.push(';');
        }
        key.push_str(&d.to_string());
    }
    key
}

/// Rebuild a state from its canonical key, re-checking every decision.
pub fn state_from_key(space: &Arc<ScheduleSpace>, key: &str) -> Result<ScheduleState, ScheduleError> {
    let parse = |message: String| ScheduleError::Parse { line: 1, message };
    let (name, rest) = key
        .split_once('/')
        .ok_or_else(|| parse("missing `/` after pipeline name".into()))?;
    if name != space.pipeline.name {
        return Err(ScheduleError::WrongPipeline {
            expected: space.pipeline.name.clone(),
            found: name.to_string(),
        });
    }
    let mut s = ScheduleState::initial(space);
    if rest.is_empty() {
        return Ok(s);
    }
    for part in rest.split(';') {
        let a: LayerSchedule = part.parse().map_err(parse)?;
        s = apply(&s, &a)?;
    }
    Ok(s)
}

/// Schedule file: a `schedule <pipeline>` header, then one decision per line.
pub fn write_schedule(s: &ScheduleState) -> String {
    let mut out = format!("schedule {}\n", s.space.pipeline.name);
    for d in &s.decisions {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_schedule(space: &Arc<ScheduleSpace>, text: &str) -> Result<ScheduleState, ScheduleError> {
    let mut s = ScheduleState::initial(space);
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix("schedule ") {
            if header_seen || s.scheduled_count() > 0 {
                return Err(ScheduleError::Parse {
                    line,
                    message: "unexpected schedule header".into(),
                });
            }
            header_seen = true;
            if name.trim() != space.pipeline.name {
                return Err(ScheduleError::WrongPipeline {
                    expected: space.pipeline.name.clone(),
                    found: name.trim().to_string(),
                });
            }
            continue;
        }
        let a: LayerSchedule = content
            .parse()
            .map_err(|message| ScheduleError::Parse { line, message })?;
        s = apply(&s, &a)?;
    }
    Ok(s)
}
