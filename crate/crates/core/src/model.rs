//! The learned value function: a single-layer LSTM over the per-stage feature
//! rows, with a shared scalar readout per timestep. Readouts are summed in log
//! space, so `predict = exp(sum_t c_t + target_scale)`.
//!
//! Gate blocks in the stacked weight matrices are ordered input, forget,
//! output, candidate.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::features::{featurize_state, fit_normalizer, FeatureRow, Normalizer, FEATURE_DIM};
use crate::rng::SearchRng;
use crate::schedule::ScheduleState;

const CHECKPOINT_MAGIC: &[u8; 4] = b"VSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ValueModelParams {
    pub hidden: usize,
    /// `4H x FEATURE_DIM`, row-major.
    pub w_x: Vec<f64>,
    /// `4H x H`, row-major.
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
    /// Mean log target of the training set.
    pub target_scale: f64,
    pub normalizer: Normalizer,
    /// Cache size used for the fits-in-cache feature.
    pub cache_size: u64,
}

/// Gradient of the loss, shaped like the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl Gradients {
    fn zeros(h: usize) -> Self {
        Gradients {
            w_x: vec![0.0; 4 * h * FEATURE_DIM],
            w_h: vec![0.0; 4 * h * h],
            bias: vec![0.0; 4 * h],
            w_out: vec![0.0; h],
            b_out: 0.0,
        }
    }

    fn add_assign(&mut self, o: &Gradients) {
        for (a, b) in self.groups_mut().into_iter().zip(o.groups()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn groups(&self) -> [&[f64]; 5] {
        [
            &self.w_x,
            &self.w_h,
            &self.bias,
            &self.w_out,
            std::slice::from_ref(&self.b_out),
        ]
    }

    fn groups_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.w_x,
            &mut self.w_h,
            &mut self.bias,
            &mut self.w_out,
            std::slice::from_mut(&mut self.b_out),
        ]
    }

    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, k: f64) {
        for g in self.groups_mut() {
            for v in g {
                *v *= k;
            }
        }
    }
}

/// Names of the trainable parameter groups, in `param_groups` order.
pub const PARAM_GROUPS: [&str; 5] = ["w_x", "w_h", "bias", "w_out", "b_out"];

impl ValueModelParams {
    /// Trainable parameters grouped as in [`PARAM_GROUPS`].
    pub fn param_groups_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.w_x,
            &mut self.w_h,
            &mut self.bias,
            &mut self.w_out,
            std::slice::from_mut(&mut self.b_out),
        ]
    }

    fn step(&mut self, g: &Gradients, lr: f64) {
        for (p, d) in self.param_groups_mut().into_iter().zip(g.groups()) {
            for (x, y) in p.iter_mut().zip(d) {
                *x -= lr * y;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.w_x
            .iter()
            .chain(&self.w_h)
            .chain(&self.bias)
            .chain(&self.w_out)
            .chain([&self.b_out, &self.target_scale])
            .all(|v| v.is_finite())
    }
}

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
pub fn init_params(seed: u64, hidden: usize) -> ValueModelParams {
    assert!(hidden >= 1, "hidden size must be positive");
    let mut rng = SearchRng::new(seed);
    let k = 1.0 / (hidden as f64).sqrt();
    let mut draw = |n: usize| (0..n).map(|_| rng.uniform(-k, k)).collect::<Vec<f64>>();
    let w_x = draw(4 * hidden * FEATURE_DIM);
    let w_h = draw(4 * hidden * hidden);
    let mut bias = draw(4 * hidden);
    let w_out = draw(hidden);
    for b in &mut bias[hidden..2 * hidden] {
        *b = 1.0;
    }
    ValueModelParams {
        hidden,
        w_x,
        w_h,
        bias,
        w_out,
        b_out: 0.0,
        target_scale: 0.0,
        normalizer: Normalizer::identity(),
        cache_size: crate::cost::MachineModel::default().cache_size,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Step {
    x: FeatureRow,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Runs the recurrence over normalized rows; returns `sum_t c_t` and the tape.
fn forward(p: &ValueModelParams, rows: &[FeatureRow], keep: bool) -> (f64, Vec<Step>) {
    let h = p.hidden;
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    let mut raw = 0.0;
    let mut tape = Vec::new();
    let mut z = vec![0.0; 4 * h];
    for x in rows {
        for (r, zr) in z.iter_mut().enumerate() {
            let wx = &p.w_x[r * FEATURE_DIM..(r + 1) * FEATURE_DIM];
            let wh = &p.w_h[r * h..(r + 1) * h];
            *zr = p.bias[r]
                + wx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + wh.iter().zip(&hs).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut gates = vec![0.0; 4 * h];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = sigmoid(z[2 * h + j]);
            gates[3 * h + j] = z[3 * h + j].tanh();
        }
        let mut c_new = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        for j in 0..h {
            c_new[j] = gates[h + j] * cs[j] + gates[j] * gates[3 * h + j];
            tanh_c[j] = c_new[j].tanh();
            h_new[j] = gates[2 * h + j] * tanh_c[j];
        }
        raw += p.b_out + p.w_out.iter().zip(&h_new).map(|(a, b)| a * b).sum::<f64>();
        if keep {
            tape.push(Step {
                x: *x,
                h_prev: hs.clone(),
                c_prev: cs.clone(),
                gates,
                tanh_c,
                h: h_new.clone(),
            });
        }
        hs = h_new;
        cs = c_new;
    }
    (raw, tape)
}

/// Sum of per-timestep readouts for already-normalized rows.
pub fn raw_output(p: &ValueModelParams, normalized: &[FeatureRow]) -> f64 {
    forward(p, normalized, false).0
}

/// Predicted best achievable cost of `s` in linear cost units.
pub fn predict(p: &ValueModelParams, s: &ScheduleState) -> f64 {
    let rows = featurize_state(s, p.cache_size);
    predict_rows(p, &rows)
}

/// Prediction from raw (unnormalized) feature rows.
pub fn predict_rows(p: &ValueModelParams, rows: &[FeatureRow]) -> f64 {
    let normed: Vec<FeatureRow> = rows.iter().map(|r| p.normalizer.normalize_row(r)).collect();
    (raw_output(p, &normed) + p.target_scale).exp()
}

/// Accumulates d(loss)/d(params) for one sequence given d(loss)/d(raw).
fn backward(p: &ValueModelParams, tape: &[Step], d_raw: f64, g: &mut Gradients) {
    let h = p.hidden;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for st in tape.iter().rev() {
        g.b_out += d_raw;
        for j in 0..h {
            g.w_out[j] += d_raw * st.h[j];
        }
        for j in 0..h {
            let (i, f, o, gg) = (st.gates[j], st.gates[h + j], st.gates[2 * h + j], st.gates[3 * h + j]);
            let dh = d_raw * p.w_out[j] + dh_next[j];
            let d_o = dh * st.tanh_c[j];
            let dc = dh * o * (1.0 - st.tanh_c[j] * st.tanh_c[j]) + dc_next[j];
            dz[j] = dc * gg * i * (1.0 - i);
            dz[h + j] = dc * st.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = d_o * o * (1.0 - o);
            dz[3 * h + j] = dc * i * (1.0 - gg * gg);
            dc_next[j] = dc * f;
        }
        for (r, &d) in dz.iter().enumerate() {
            g.bias[r] += d;
            let gx = &mut g.w_x[r * FEATURE_DIM..(r + 1) * FEATURE_DIM];
            for (gv, xv) in gx.iter_mut().zip(&st.x) {
                *gv += d * xv;
            }
            let gh = &mut g.w_h[r * h..(r + 1) * h];
            for (gv, hv) in gh.iter_mut().zip(&st.h_prev) {
                *gv += d * hv;
            }
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            let wh = &p.w_h[r * h..(r + 1) * h];
            for (dn, w) in dh_next.iter_mut().zip(wh) {
                *dn += d * w;
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("target {0} is not positive")]
    NonPositiveTarget(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset has {0} entries, need at least 10")]
    DatasetTooSmall(usize),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("cannot read checkpoint: {0}")]
    Io(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
}

/// A training example: normalized feature rows and the log of the target cost.
#[derive(Clone, Debug)]
pub struct Sample {
    pub rows: Vec<FeatureRow>,
    pub log_target: f64,
}

impl Sample {
    pub fn new(rows: Vec<FeatureRow>, target: f64) -> Result<Self, ModelError> {
        if target.is_nan() || target <= 0.0 {
            return Err(ModelError::NonPositiveTarget(target));
        }
        Ok(Sample {
            rows,
            log_target: target.ln(),
        })
    }
}

fn residual(p: &ValueModelParams, s: &Sample) -> f64 {
    raw_output(p, &s.rows) + p.target_scale - s.log_target
}

/// Mean squared log error over the batch.
pub fn loss(p: &ValueModelParams, batch: &[Sample]) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let sq: Vec<f64> = batch.par_iter().map(|s| residual(p, s).powi(2)).collect();
    Ok(sq.iter().sum::<f64>() / batch.len() as f64)
}

/// Exact gradient of [`loss`] by backpropagation through time. Per-sample terms
/// are reduced in batch order, so the result does not depend on thread count.
pub fn gradients(p: &ValueModelParams, batch: &[Sample]) -> Result<Gradients, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let parts: Vec<Gradients> = batch
        .par_iter()
        .map(|s| {
            let (raw, tape) = forward(p, &s.rows, true);
            let d_raw = 2.0 * (raw + p.target_scale - s.log_target) / n;
            let mut g = Gradients::zeros(p.hidden);
            backward(p, &tape, d_raw, &mut g);
            g
        })
        .collect();
    let mut total = Gradients::zeros(p.hidden);
    for g in &parts {
        total.add_assign(g);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adam with beta1 0.9, beta2 0.999, epsilon 1e-8.
    Adam,
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl AdamState {
    fn new(h: usize) -> Self {
        AdamState {
            m: Gradients::zeros(h),
            v: Gradients::zeros(h),
            t: 0,
        }
    }

    /// Rewrites `g` in place into the Adam update direction.
    fn direction(&mut self, g: &mut Gradients) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        let groups = g.groups_mut().into_iter().zip(self.m.groups_mut()).zip(self.v.groups_mut());
        for ((gg, mm), vv) in groups {
            for ((x, m), v) in gg.iter_mut().zip(mm.iter_mut()).zip(vv.iter_mut()) {
                *m = B1 * *m + (1.0 - B1) * *x;
                *v = B2 * *v + (1.0 - B2) * *x * *x;
                *x = (*m / c1) / ((*v / c2).sqrt() + 1e-8);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub holdout_fraction: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            clip_norm: 5.0,
            holdout_fraction: 0.2,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if [self.learning_rate, self.clip_norm].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return bad("learning rate and clip norm must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch size and patience must be positive");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainMetrics {
    /// Mean squared log error on the training split before the first update.
    pub initial_train_mse: f64,
    pub train_mse: f64,
    pub holdout_mse: f64,
    /// Coefficient of determination of log cost on the holdout split.
    pub r2: f64,
    /// Median of |pred - target| / target on the holdout split.
    pub median_rel_error: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// Fit normalizer and target scale on `dataset`, then train with minibatch
/// updates on the clipped gradient and early stopping on a holdout split.
/// Returns the parameters from the best holdout epoch.
pub fn train(
    init: &ValueModelParams,
    dataset: &[(ScheduleState, f64)],
    cache_size: u64,
    cfg: &TrainConfig,
) -> Result<(ValueModelParams, TrainMetrics), ModelError> {
    cfg.check()?;
    if dataset.len() < 10 {
        return Err(ModelError::DatasetTooSmall(dataset.len()));
    }
    let raw: Vec<(Vec<FeatureRow>, f64)> = dataset
        .par_iter()
        .map(|(s, t)| (featurize_state(s, cache_size), *t))
        .collect();
    train_on_features(init, &raw, cache_size, cfg)
}

/// As [`train`], on precomputed (unnormalized) feature matrices.
pub fn train_on_features(
    init: &ValueModelParams,
    dataset: &[(Vec<FeatureRow>, f64)],
    cache_size: u64,
    cfg: &TrainConfig,
) -> Result<(ValueModelParams, TrainMetrics), ModelError> {
    cfg.check()?;
    if dataset.len() < 10 {
        return Err(ModelError::DatasetTooSmall(dataset.len()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = SearchRng::new(cfg.seed);
    rng.shuffle(&mut order);
    let n_hold = ((dataset.len() as f64 * cfg.holdout_fraction).ceil() as usize)
        .clamp(1, dataset.len() - 1);
    let (hold_idx, train_idx) = order.split_at(n_hold);

    let train_mats: Vec<Vec<FeatureRow>> = train_idx.iter().map(|&i| dataset[i].0.clone()).collect();
    let normalizer = fit_normalizer(&train_mats).expect("training split is non-empty");
    let to_sample = |i: &usize| {
        let (rows, t) = &dataset[*i];
        Sample::new(rows.iter().map(|r| normalizer.normalize_row(r)).collect(), *t)
    };
    let train_set: Vec<Sample> = train_idx.iter().map(to_sample).collect::<Result<_, _>>()?;
    let hold_set: Vec<Sample> = hold_idx.iter().map(to_sample).collect::<Result<_, _>>()?;

    let mut p = init.clone();
    p.normalizer = normalizer;
    p.cache_size = cache_size;
    p.target_scale = train_set.iter().map(|s| s.log_target).sum::<f64>() / train_set.len() as f64;

    let initial_train_mse = loss(&p, &train_set)?;
    let mut best = p.clone();
    let mut best_loss = loss(&p, &hold_set)?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut idx: Vec<usize> = (0..train_set.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| AdamState::new(p.hidden));

    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        rng.shuffle(&mut idx);
        for chunk in idx.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let mut g = gradients(&p, &batch)?;
            let norm = g.norm();
            if norm > cfg.clip_norm {
                g.scale(cfg.clip_norm / norm);
            }
            if let Some(adam) = adam.as_mut() {
                adam.direction(&mut g);
            }
            p.step(&g, cfg.learning_rate);
        }
        if !p.all_finite() {
            break;
        }
        let hold_loss = loss(&p, &hold_set)?;
        if hold_loss < best_loss {
            best_loss = hold_loss;
            best = p.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let preds: Vec<f64> = hold_set.iter().map(|s| raw_output(&best, &s.rows) + best.target_scale).collect();
    let mean_t = hold_set.iter().map(|s| s.log_target).sum::<f64>() / hold_set.len() as f64;
    let ss_res: f64 = preds.iter().zip(&hold_set).map(|(p, s)| (p - s.log_target).powi(2)).sum();
    let ss_tot: f64 = hold_set.iter().map(|s| (s.log_target - mean_t).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    let mut rel: Vec<f64> = preds
        .iter()
        .zip(&hold_set)
        .map(|(p, s)| ((p - s.log_target).exp() - 1.0).abs())
        .collect();
    rel.sort_by(f64::total_cmp);
    let median_rel_error = if rel.len() % 2 == 1 {
        rel[rel.len() / 2]
    } else {
        0.5 * (rel[rel.len() / 2 - 1] + rel[rel.len() / 2])
    };

    let metrics = TrainMetrics {
        initial_train_mse,
        train_mse: loss(&best, &train_set)?,
        holdout_mse: best_loss,
        r2,
        median_rel_error,
        epochs_run,
        best_epoch,
    };
    Ok((best, metrics))
}

/// Serialize to the versioned little-endian checkpoint format.
pub fn to_bytes(p: &ValueModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u32).to_le_bytes());
    out.extend_from_slice(&(p.hidden as u32).to_le_bytes());
    out.extend_from_slice(&p.cache_size.to_le_bytes());
    let mut put = |vals: &[f64]| {
        for v in vals {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    };
    put(&[p.target_scale, p.b_out]);
    put(&p.w_x);
    put(&p.w_h);
    put(&p.bias);
    put(&p.w_out);
    put(&p.normalizer.mean);
    put(&p.normalizer.std);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() < n {
            return Err(ModelError::Corrupt("truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        (0..n).map(|_| self.u64().map(f64::from_bits)).collect()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ValueModelParams, ModelError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(ModelError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let input = r.u32()? as usize;
    if input != FEATURE_DIM {
        return Err(ModelError::Corrupt(format!(
            "input width {input}, expected {FEATURE_DIM}"
        )));
    }
    let hidden = r.u32()? as usize;
    if hidden == 0 || hidden > 4096 {
        return Err(ModelError::Corrupt(format!("hidden size {hidden}")));
    }
    let cache_size = r.u64()?;
    let head = r.f64s(2)?;
    let w_x = r.f64s(4 * hidden * FEATURE_DIM)?;
    let w_h = r.f64s(4 * hidden * hidden)?;
    let bias = r.f64s(4 * hidden)?;
    let w_out = r.f64s(hidden)?;
    let mean = r.f64s(FEATURE_DIM)?;
    let std = r.f64s(FEATURE_DIM)?;
    if !r.buf.is_empty() {
        return Err(ModelError::Corrupt("trailing bytes".into()));
    }
    let p = ValueModelParams {
        hidden,
        w_x,
        w_h,
        bias,
        w_out,
        b_out: head[1],
        target_scale: head[0],
        normalizer: Normalizer {
            mean: mean.try_into().unwrap(),
            std: std.try_into().unwrap(),
        },
        cache_size,
    };
    if !p.all_finite() {
        return Err(ModelError::Corrupt("non-finite parameter".into()));
    }
    Ok(p)
}

pub fn save(p: &ValueModelParams, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_bytes(p)).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<ValueModelParams, ModelError> {
    let bytes = fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    from_bytes(&bytes)
}
