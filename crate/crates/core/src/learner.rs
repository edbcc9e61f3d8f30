//! Value iteration: random bootstrap, then rounds of noisy greedy rollouts whose
//! prefixes are completed by beam search, benchmarked, and folded into a table
//! of best observed costs. A fresh model is fit to the table after each round.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{benchmark, Fixed, MachineModel};
use crate::model::{init_params, train, ModelError, TrainConfig, TrainMetrics, ValueModelParams};
use crate::rng::SearchRng;
use crate::schedule::{canonical_key, state_from_key, ScheduleError, ScheduleSpace, ScheduleState};
use crate::search::{
    beam_search, exhaustive, greedy_schedule, random_schedule, NoiseConfig, SearchError, ValueFunction,
    DEFAULT_BEAM_WIDTH,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("target table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("round report line {line}: {message}")]
    Report { line: usize, message: String },
    #[error("no pipeline named `{0}`")]
    UnknownPipeline(String),
    #[error("invalid round config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub r_min: Fixed,
    pub count: u64,
}

/// Best observed completion cost per canonical key. Keys start with the
/// pipeline name, so the table may hold several pipelines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TargetTable {
    entries: BTreeMap<String, Target>,
}

impl TargetTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<Target> {
        self.entries.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Target)> {
        self.entries.iter().map(|(k, t)| (k.as_str(), *t))
    }

    /// Records one observation: keeps the minimum and bumps the count.
    pub fn update(&mut self, key: &str, r: Fixed) {
        match self.entries.get_mut(key) {
            Some(t) => {
                t.r_min = t.r_min.min(r);
                t.count += 1;
            }
            None => {
                self.entries.insert(key.to_string(), Target { r_min: r, count: 1 });
            }
        }
    }

    pub fn to_tsv(&self) -> String {
        self.to_string()
    }

    pub fn parse_tsv(text: &str) -> Result<Self, LearnError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: &str| LearnError::Table {
                line: i + 1,
                message: message.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(key), Some(r), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected three tab-separated fields"));
            };
            let r_min: Fixed = r.parse().map_err(|_| err("bad cost"))?;
            let count: u64 = c.parse().map_err(|_| err("bad count"))?;
            if r_min == Fixed::from_millis(0) || count == 0 {
                return Err(err("cost and count must be positive"));
            }
            if entries.insert(key.to_string(), Target { r_min, count }).is_some() {
                return Err(err("duplicate key"));
            }
        }
        Ok(TargetTable { entries })
    }
}

impl fmt::Display for TargetTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, t) in &self.entries {
            writeln!(f, "{k}\t{}\t{}", t.r_min, t.count)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundConfig {
    /// Noisy rollouts per pipeline.
    pub schedules_per_pipeline: usize,
    pub beam_width: usize,
    pub noise: NoiseConfig,
    pub train: TrainConfig,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            schedules_per_pipeline: 100,
            beam_width: DEFAULT_BEAM_WIDTH,
            noise: NoiseConfig::default(),
            train: TrainConfig::default(),
            hidden: 32,
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn check(&self) -> Result<(), LearnError> {
        if self.schedules_per_pipeline == 0 || self.beam_width == 0 || self.hidden == 0 {
            return Err(LearnError::Config(
                "rollouts, beam width and hidden size must be positive".into(),
            ));
        }
        self.noise.check()?;
        self.train.check()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportRow {
    pub pipeline: String,
    pub greedy_cost: Fixed,
    pub beam_cost: Fixed,
    pub exhaustive_cost: Option<Fixed>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundReport {
    pub round: usize,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str = "pipeline,greedy_cost,beam_cost,exhaustive_cost,round";

impl RoundReport {
    pub fn mean_greedy(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.greedy_cost.to_f64()))
    }

    pub fn mean_beam(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.beam_cost.to_f64()))
    }

    /// Mean over pipelines of greedy cost / beam cost.
    pub fn mean_greedy_beam_ratio(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.greedy_cost.to_f64() / r.beam_cost.to_f64()))
    }

    /// Mean over pipelines with a known optimum of greedy cost / optimum.
    pub fn mean_exhaustive_ratio(&self) -> Option<f64> {
        let ratios: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| r.exhaustive_cost.map(|e| r.greedy_cost.to_f64() / e.to_f64()))
            .collect();
        (!ratios.is_empty()).then(|| mean(ratios.into_iter()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let ex = r.exhaustive_cost.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.pipeline, r.greedy_cost, r.beam_cost, ex, self.round
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, LearnError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, message: &str| LearnError::Report {
            line,
            message: message.to_string(),
        };
        match lines.next() {
            Some((_, h)) if h == REPORT_HEADER => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut rows = Vec::new();
        let mut round = None;
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err(i + 1, "expected five fields"));
            }
            let fixed = |s: &str| s.parse::<Fixed>().map_err(|_| err(i + 1, "bad cost"));
            let r: usize = f[4].parse().map_err(|_| err(i + 1, "bad round"))?;
            if round.is_some_and(|x| x != r) {
                return Err(err(i + 1, "mixed rounds"));
            }
            round = Some(r);
            rows.push(ReportRow {
                pipeline: f[0].to_string(),
                greedy_cost: fixed(f[1])?,
                beam_cost: fixed(f[2])?,
                exhaustive_cost: if f[3].is_empty() { None } else { Some(fixed(f[3])?) },
            });
        }
        let round = round.ok_or_else(|| err(1, "no data rows"))?;
        Ok(RoundReport { round, rows })
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn bench(s: &ScheduleState, m: &MachineModel) -> Fixed {
    benchmark(s, m).expect("searches return complete schedules").total
}

/// `count` random schedules per pipeline; each one's cost is recorded at every
/// prefix, including the empty and complete states. Schedule `k` of pipeline
/// `i` uses stream `SearchRng::new(seed).derive(i << 32 | k)`.
pub fn bootstrap(
    spaces: &[Arc<ScheduleSpace>],
    count: usize,
    m: &MachineModel,
    seed: u64,
) -> TargetTable {
    let root = SearchRng::new(seed);
    let mut table = TargetTable::new();
    for (i, space) in spaces.iter().enumerate() {
        let runs: Vec<(ScheduleState, Fixed)> = (0..count)
            .into_par_iter()
            .map(|k| {
                let s = random_schedule(space, &mut root.derive((i as u64) << 32 | k as u64));
                let c = bench(&s, m);
                (s, c)
            })
            .collect();
        for (s, c) in &runs {
            for j in 0..=s.scheduled_count() {
                table.update(&canonical_key(&s.prefix(j)), *c);
            }
        }
    }
    table
}

fn space_for<'a>(spaces: &'a [Arc<ScheduleSpace>], key: &str) -> Result<&'a Arc<ScheduleSpace>, LearnError> {
    let name = key.split('/').next().unwrap_or("");
    spaces
        .iter()
        .find(|s| s.pipeline().name == name)
        .ok_or_else(|| LearnError::UnknownPipeline(name.to_string()))
}

/// Decodes every table key into its state, paired with `r_min`.
pub fn table_dataset(
    spaces: &[Arc<ScheduleSpace>],
    table: &TargetTable,
) -> Result<Vec<(ScheduleState, f64)>, LearnError> {
    let items: Vec<(&str, Target)> = table.iter().collect();
    items
        .par_iter()
        .map(|(k, t)| Ok((state_from_key(space_for(spaces, k)?, k)?, t.r_min.to_f64())))
        .collect()
}

/// Fits a freshly initialized model to the table. `round` selects the seed
/// stream for initialization and minibatch order.
pub fn fit_table(
    spaces: &[Arc<ScheduleSpace>],
    table: &TargetTable,
    m: &MachineModel,
    cfg: &RoundConfig,
    round: usize,
) -> Result<(ValueModelParams, TrainMetrics), LearnError> {
    let data = table_dataset(spaces, table)?;
    let mut rng = SearchRng::new(cfg.seed).derive(0xF17 << 32 | round as u64);
    let init = init_params(rng.next_u64(), cfg.hidden);
    let tc = TrainConfig {
        seed: rng.next_u64(),
        ..cfg.train.clone()
    };
    Ok(train(&init, &data, m.cache_size, &tc)?)
}

/// Optimal cost of each pipeline whose space has at most `limit` schedules.
pub fn exhaustive_optima(spaces: &[Arc<ScheduleSpace>], m: &MachineModel, limit: u128) -> Vec<Option<Fixed>> {
    spaces
        .iter()
        .map(|sp| exhaustive(sp, m, limit).ok().map(|e| e.cost))
        .collect()
}

/// Noiseless greedy and beam schedules under `v`, benchmarked. `optima` holds
/// the known exhaustive costs, aligned with `spaces`.
pub fn evaluate_round<V: ValueFunction + ?Sized>(
    spaces: &[Arc<ScheduleSpace>],
    v: &V,
    m: &MachineModel,
    beam_width: usize,
    optima: &[Option<Fixed>],
    round: usize,
) -> Result<RoundReport, LearnError> {
    let mut rows = Vec::with_capacity(spaces.len());
    for (i, sp) in spaces.iter().enumerate() {
        let g = greedy_schedule(sp, v, None, &mut SearchRng::new(0)).state;
        let b = beam_search(&ScheduleState::initial(sp), v, beam_width)?.state;
        rows.push(ReportRow {
            pipeline: sp.pipeline().name.clone(),
            greedy_cost: bench(&g, m),
            beam_cost: bench(&b, m),
            exhaustive_cost: optima.get(i).copied().flatten(),
        });
    }
    Ok(RoundReport { round, rows })
}

#[derive(Clone, Debug)]
pub struct RoundOutput {
    pub table: TargetTable,
    pub params: ValueModelParams,
    pub metrics: TrainMetrics,
    pub report: RoundReport,
    /// Distinct complete schedules benchmarked this round.
    pub benchmarked: usize,
}

/// One round of value iteration producing `V_round` from `V_{round-1}`.
///
/// Rollout `k` of pipeline `i` draws noise from
/// `SearchRng::new(cfg.seed).derive(round << 48 | i << 24 | k)`. Every prefix of
/// every rollout is beam-completed under the noiseless previous model and the
/// stitched schedule's cost recorded at the prefix. Identical prefixes and
/// identical stitched schedules are computed once but still counted once per
/// observation.
#[allow(clippy::too_many_arguments)]
pub fn value_iteration_round(
    spaces: &[Arc<ScheduleSpace>],
    prev: &ValueModelParams,
    table: &TargetTable,
    m: &MachineModel,
    cfg: &RoundConfig,
    round: usize,
    optima: &[Option<Fixed>],
) -> Result<RoundOutput, LearnError> {
    cfg.check()?;
    let root = SearchRng::new(cfg.seed);
    let mut out = table.clone();
    let mut benchmarked = 0;
    for (i, sp) in spaces.iter().enumerate() {
        let rollouts: Vec<ScheduleState> = (0..cfg.schedules_per_pipeline)
            .into_par_iter()
            .map(|k| {
                let mut rng = root.derive((round as u64) << 48 | (i as u64) << 24 | k as u64);
                greedy_schedule(sp, prev, Some(cfg.noise), &mut rng).state
            })
            .collect();

        // Observations in (rollout, prefix) order.
        let mut observations: Vec<String> = Vec::new();
        let mut prefixes: Vec<ScheduleState> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for r in &rollouts {
            for j in 0..=r.scheduled_count() {
                let p = r.prefix(j);
                let key = canonical_key(&p);
                if !seen.contains_key(&key) {
                    seen.insert(key.clone(), prefixes.len());
                    prefixes.push(p);
                }
                observations.push(key);
            }
        }

        let stitched: Vec<ScheduleState> = prefixes
            .par_iter()
            .map(|p| beam_search(p, prev, cfg.beam_width).map(|b| b.state))
            .collect::<Result<_, _>>()?;
        let mut unique: Vec<&ScheduleState> = Vec::new();
        let mut unique_of: Vec<usize> = Vec::with_capacity(stitched.len());
        let mut by_key: HashMap<String, usize> = HashMap::new();
        for s in &stitched {
            let key = canonical_key(s);
            let idx = *by_key.entry(key).or_insert_with(|| {
                unique.push(s);
                unique.len() - 1
            });
            unique_of.push(idx);
        }
        let costs: Vec<Fixed> = unique.par_iter().map(|s| bench(s, m)).collect();
        benchmarked += costs.len();

        for key in &observations {
            let pi = seen[key];
            out.update(key, costs[unique_of[pi]]);
        }
    }
    let (params, metrics) = fit_table(spaces, &out, m, cfg, round)?;
    let report = evaluate_round(spaces, &params, m, cfg.beam_width, optima, round)?;
    Ok(RoundOutput {
        table: out,
        params,
        metrics,
        report,
        benchmarked,
    })
}
