//! Analytical cost oracle standing in for hardware benchmarking.
//!
//! Costs are exact fixed-point numbers with three decimals. A stage pays for
//! compute (scaled down by vectorization and parallelism), for memory traffic
//! (cheap when the touched allocation fits in cache, expensive otherwise), and a
//! per-task overhead for parallel loops.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::str::FromStr;

use thiserror::Error;

use crate::pipeline::{footprint_region, footprint_size, Producer, Region, STAGE_ELEMENT_SIZE};
use crate::schedule::{tile_extents, tile_region, Loop, ScheduleState, Site, LEGAL_VECTOR_WIDTHS};

/// Non-negative fixed-point value in thousandths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(u64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);

    pub const fn from_int(v: u64) -> Self {
        Fixed(v * 1000)
    }

    pub const fn from_millis(m: u64) -> Self {
        Fixed(m)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// `num / den` in thousandths, rounding half up.
    fn ratio_millis(num: u128, den: u128) -> Fixed {
        Fixed(((2 * num + den) / (2 * den)) as u64)
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl Sum for Fixed {
    fn sum<I: Iterator<Item = Fixed>>(iter: I) -> Fixed {
        iter.fold(Fixed::ZERO, Add::add)
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl FromStr for Fixed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid fixed-point value `{s}`");
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 3 || (int.is_empty() && frac.is_empty()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let mut millis = 0u64;
        for (i, c) in frac.chars().enumerate() {
            let d = c.to_digit(10).ok_or_else(bad)? as u64;
            millis += d * 10u64.pow(2 - i as u32);
        }
        Ok(Fixed(int * 1000 + millis))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineModel {
    pub flop_cost: Fixed,
    pub mem_byte_cost: Fixed,
    pub cache_byte_cost: Fixed,
    /// Bytes.
    pub cache_size: u64,
    pub cores: u64,
    pub task_overhead: Fixed,
    pub vec_widths: Vec<u64>,
}

impl Default for MachineModel {
    fn default() -> Self {
        MachineModel {
            flop_cost: Fixed::from_int(1),
            mem_byte_cost: Fixed::from_int(8),
            cache_byte_cost: Fixed::from_int(1),
            cache_size: 32768,
            cores: 4,
            task_overhead: Fixed::from_int(1000),
            vec_widths: LEGAL_VECTOR_WIDTHS.to_vec(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("schedule is incomplete ({scheduled} of {stages} stages)")]
    Incomplete { scheduled: usize, stages: usize },
    #[error("illegal schedule: {0}")]
    Illegal(String),
    #[error("invalid machine model: {0}")]
    Machine(String),
}

impl MachineModel {
    pub fn check(&self) -> Result<(), CostError> {
        let bad = |m: &str| Err(CostError::Machine(m.to_string()));
        if self.flop_cost == Fixed::ZERO
            || self.mem_byte_cost == Fixed::ZERO
            || self.cache_byte_cost == Fixed::ZERO
            || self.task_overhead == Fixed::ZERO
            || self.cache_size == 0
        {
            return bad("all costs and sizes must be positive");
        }
        if self.cores == 0 {
            return bad("cores must be >= 1");
        }
        if self.cache_byte_cost > self.mem_byte_cost {
            return bad("cache_byte_cost must not exceed mem_byte_cost");
        }
        if self.vec_widths.is_empty() || !self.vec_widths.contains(&1) {
            return bad("vec_widths must include 1");
        }
        Ok(())
    }

    /// Apply `key=value` lines on top of `self`. `#` starts a comment.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), CostError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| CostError::Machine(format!("line {}: {m}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        self.check()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let int = |v: &str| v.parse::<u64>().map_err(|_| format!("invalid integer `{v}`"));
        match key {
            "flop_cost" => self.flop_cost = value.parse()?,
            "mem_byte_cost" => self.mem_byte_cost = value.parse()?,
            "cache_byte_cost" => self.cache_byte_cost = value.parse()?,
            "cache_size" => self.cache_size = int(value)?,
            "cores" => self.cores = int(value)?,
            "task_overhead" => self.task_overhead = value.parse()?,
            "vec_widths" => {
                self.vec_widths = value.split(',').map(|w| int(w.trim())).collect::<Result<_, _>>()?
            }
            other => return Err(format!("unknown machine key `{other}`")),
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; `apply_overrides` reads it back.
    pub fn to_text(&self) -> String {
        let widths: Vec<String> = self.vec_widths.iter().map(u64::to_string).collect();
        format!(
            "flop_cost={}\nmem_byte_cost={}\ncache_byte_cost={}\ncache_size={}\ncores={}\ntask_overhead={}\nvec_widths={}\n",
            self.flop_cost,
            self.mem_byte_cost,
            self.cache_byte_cost,
            self.cache_size,
            self.cores,
            self.task_overhead,
            widths.join(",")
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageBounds {
    /// Times the stage's compute site executes.
    pub invocations: u64,
    /// Region of the produced buffer computed by the first invocation.
    pub region: Region,
    /// Region size times the reduction extents.
    pub points_per_invocation: u64,
    pub domain_points: u64,
    /// Size of the stage's allocation at its store site.
    pub alloc_bytes: u64,
    /// 0 for root, `level + 1` when computed inside a consumer.
    pub compute_depth: usize,
}

impl StageBounds {
    pub fn computed_points(&self) -> u64 {
        self.invocations * self.points_per_invocation
    }

    pub fn recompute_factor(&self) -> f64 {
        self.computed_points() as f64 / self.domain_points as f64
    }
}

/// Bounds for every stage, indexed like `Pipeline::stages`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundsTable {
    pub stages: Vec<StageBounds>,
}

fn anchor_loops<'a>(s: &'a ScheduleState, consumer: &str) -> (usize, &'a [Loop]) {
    let c = s.pipeline().stage_index(consumer).expect("legal anchor");
    let (_, loops) = s.decision_for(c).expect("host scheduled before producer");
    (c, loops)
}

/// Bounds of the stages scheduled so far; `None` for the rest.
pub fn partial_bounds(s: &ScheduleState) -> Vec<Option<StageBounds>> {
    let p = s.pipeline();
    let mut out = vec![None; p.stages.len()];
    for &idx in s.space().visit().iter().take(s.scheduled_count()) {
        let stage = &p.stages[idx];
        let (decision, _) = s.decision_for(idx).unwrap();
        let full_bytes = stage.pure_points() * STAGE_ELEMENT_SIZE;
        let b = match &decision.compute_at {
            Site::Root => StageBounds {
                invocations: 1,
                region: stage.output_region(),
                points_per_invocation: stage.domain_points(),
                domain_points: stage.domain_points(),
                alloc_bytes: full_bytes,
                compute_depth: 0,
            },
            Site::At { consumer, level } => {
                let (c, loops) = anchor_loops(s, consumer);
                let host = &p.stages[c];
                let edge = &host.inputs[s.space().host_edge_of(idx).unwrap()];
                let zeros = vec![0; level + 1];
                let region = footprint_region(edge, &tile_region(host, loops, *level, &zeros))
                    .expect("edge arity matches host");
                let invocations = loops[..=*level].iter().map(|l| l.extent).product();
                let alloc_bytes = match &decision.store_at {
                    Site::Root => full_bytes,
                    Site::At { level: sl, .. } => {
                        let ext = tile_extents(host, loops, *sl).expect("box-shaped store site");
                        footprint_size(edge, &ext) * STAGE_ELEMENT_SIZE
                    }
                };
                StageBounds {
                    invocations,
                    points_per_invocation: region.size() * stage.reduction_points(),
                    region,
                    domain_points: stage.domain_points(),
                    alloc_bytes,
                    compute_depth: level + 1,
                }
            }
        };
        out[idx] = Some(b);
    }
    out
}

fn require_complete(s: &ScheduleState) -> Result<(), CostError> {
    if s.is_complete() {
        Ok(())
    } else {
        Err(CostError::Incomplete {
            scheduled: s.scheduled_count(),
            stages: s.pipeline().stages.len(),
        })
    }
}

pub fn infer_bounds(s: &ScheduleState) -> Result<BoundsTable, CostError> {
    require_complete(s)?;
    Ok(BoundsTable {
        stages: partial_bounds(s).into_iter().map(Option::unwrap).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageCost {
    pub stage: String,
    pub compute: Fixed,
    pub memory: Fixed,
    pub overhead: Fixed,
}

impl StageCost {
    pub fn total(&self) -> Fixed {
        self.compute + self.memory + self.overhead
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cost {
    pub total: Fixed,
    /// One row per stage, producers first.
    pub per_stage: Vec<StageCost>,
}

/// Abstract runtime of a complete schedule on `m`.
pub fn benchmark(s: &ScheduleState, m: &MachineModel) -> Result<Cost, CostError> {
    let bounds = infer_bounds(s)?;
    let p = s.pipeline();
    let unit = |alloc: u64| if alloc <= m.cache_size { m.cache_byte_cost } else { m.mem_byte_cost };

    let mut per_stage = Vec::with_capacity(p.stages.len());
    for &idx in s.space().topo() {
        let stage = &p.stages[idx];
        let b = &bounds.stages[idx];
        let (decision, loops) = s.decision_for(idx).unwrap();
        if !m.vec_widths.contains(&decision.vectorize_width) {
            return Err(CostError::Illegal(format!(
                "stage `{}`: vector width {} not supported by the machine",
                stage.name, decision.vectorize_width
            )));
        }
        let v = decision.vectorize_width as u128;
        let outer = loops[0].extent;
        let (p_eff, tasks) = if decision.parallel {
            (m.cores.min(outer) as u128, b.invocations as u128 * outer as u128)
        } else {
            (1, 0)
        };
        let work = b.computed_points() as u128 * stage.flops_per_point as u128;
        let compute = Fixed::ratio_millis(work * m.flop_cost.millis() as u128, v * p_eff);
        let overhead = Fixed::from_millis((tasks * m.task_overhead.millis() as u128) as u64);

        let mut extents = b.region.extents();
        extents.extend(stage.reduction_dims.iter().map(|d| d.extent));
        let mut memory: u128 = 0;
        for edge in &stage.inputs {
            let producer = p.producer(&edge.producer).expect("validated");
            let bytes = footprint_size(edge, &extents) as u128 * producer.element_size() as u128;
            let u = match producer {
                Producer::Stage(pi, _) => unit(bounds.stages[pi].alloc_bytes),
                Producer::Buffer(_) => m.mem_byte_cost,
            };
            memory += b.invocations as u128 * bytes * u.millis() as u128;
        }
        let written = b.region.size() as u128 * STAGE_ELEMENT_SIZE as u128;
        memory += b.invocations as u128 * written * unit(b.alloc_bytes).millis() as u128;

        per_stage.push(StageCost {
            stage: stage.name.clone(),
            compute,
            memory: Fixed::from_millis(memory as u64),
            overhead,
        });
    }
    let total = per_stage.iter().map(StageCost::total).sum();
    Ok(Cost { total, per_stage })
}

pub fn cost_breakdown(s: &ScheduleState, m: &MachineModel) -> Result<Vec<StageCost>, CostError> {
    benchmark(s, m).map(|c| c.per_stage)
}
