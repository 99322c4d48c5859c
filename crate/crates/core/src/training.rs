//! Masked MSE and two-phase curriculum training.
//!
//! Phase one fits single-day predictions. Phase two fine-tunes on two-day
//! autoregressive rollouts whose loss is the mean of both steps; the second
//! step consumes the first prediction on the same tape, so gradients flow
//! through the fed-back state.
//!
//! Sample selection at optimizer step `s` depends only on `(seed, s)`, which
//! makes a resumed run follow the same trajectory as an uninterrupted one.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    AdamW, AdamWConfig, Checkpoint, Gradients, Matrix, NodeId, ParamStore, Scalar, Tape,
};
use crate::error::{Error, Result};
use crate::grid::{ChannelSchema, FieldSet, NormStats, Role};
use crate::model::{check_inputs, GraphTensors, Model, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    OneStep,
    TwoStep,
}

impl Phase {
    /// Autoregressive steps per sample.
    pub fn steps(self) -> usize {
        match self {
            Phase::OneStep => 1,
            Phase::TwoStep => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::OneStep => "one_step",
            Phase::TwoStep => "two_step",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "one_step" => Ok(Phase::OneStep),
            "2" | "two_step" => Ok(Phase::TwoStep),
            other => Err(Error::Config(format!("unknown training phase {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phase: Phase,
    pub learning_rate_one_step: f64,
    pub learning_rate_two_step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Optimizer steps in the phase.
    pub steps: u64,
    /// Samples averaged per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Checkpoint cadence in optimizer steps; 0 disables intermediate saves.
    pub checkpoint_every: u64,
    /// Validation cadence in optimizer steps; 0 validates only at the end.
    pub validate_every: u64,
    /// Validation windows, evenly spaced over the validation period.
    pub val_samples: usize,
    /// Per-ocean-channel loss weights; uniform when absent.
    pub channel_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase: Phase::OneStep,
            learning_rate_one_step: 1e-3,
            learning_rate_two_step: 1e-4,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 1e-2,
            steps: 500,
            batch_size: 1,
            seed: 0,
            checkpoint_every: 100,
            validate_every: 100,
            val_samples: 16,
            channel_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.val_samples == 0 {
            return Err(Error::Config("batch size and validation samples must be >= 1".into()));
        }
        let lrs = [self.learning_rate_one_step, self.learning_rate_two_step];
        if lrs.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if let Some(w) = &self.channel_weights {
            if w.iter().any(|v| !(*v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config("channel weights must be >= 0 with a positive sum".into()));
            }
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        match self.phase {
            Phase::OneStep => self.learning_rate_one_step,
            Phase::TwoStep => self.learning_rate_two_step,
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate(),
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Loss weights for `c_x` channels.
    pub fn weights(&self, c_x: usize) -> Result<Vec<f64>> {
        match &self.channel_weights {
            None => Ok(vec![1.0; c_x]),
            Some(w) if w.len() == c_x => Ok(w.clone()),
            Some(w) => Err(Error::Config(format!(
                "{} channel weights for {c_x} ocean channels",
                w.len()
            ))),
        }
    }
}

/// Weighted mean of squared normalized errors on ocean rows, and its gradient
/// with respect to `pred`.
///
/// The loss is `Σ_c w_c Σ_r ((pred - truth) / std_c)² / (R · Σ_c w_c)`.
pub fn masked_mse_rows<T: Scalar>(
    pred: &Matrix<T>,
    truth: &Matrix<T>,
    stds: &[f64],
    weights: &[f64],
) -> Result<(f64, Matrix<T>)> {
    let (r, c) = pred.shape();
    if truth.shape() != (r, c) || stds.len() != c || weights.len() != c {
        return Err(Error::Shape(format!(
            "loss on {r}x{c} prediction, {:?} truth, {} stds, {} weights",
            truth.shape(),
            stds.len(),
            weights.len()
        )));
    }
    if r == 0 {
        return Err(Error::Data("loss over zero ocean cells".into()));
    }
    let norm = r as f64 * weights.iter().sum::<f64>();
    let coef: Vec<f64> = (0..c).map(|j| weights[j] / (stds[j] * stds[j] * norm)).collect();
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let e = pred.get(i, j).f64() - truth.get(i, j).f64();
            loss += coef[j] * e * e;
            grad.set(i, j, T::of(2.0 * coef[j] * e));
        }
    }
    Ok((loss, grad))
}

/// Masked MSE between two ocean field sets in normalized units.
///
/// Land cells of `truth` contribute nothing.
pub fn masked_mse(
    pred: &FieldSet,
    truth: &FieldSet,
    stats: &NormStats,
    weights: Option<&[f64]>,
) -> Result<f64> {
    if pred.channels != truth.channels || pred.n_lat != truth.n_lat || pred.n_lon != truth.n_lon {
        return Err(Error::Shape("prediction and truth differ in layout".into()));
    }
    if stats.role_of(&truth.channels)? != Role::Ocean {
        return Err(Error::Data("masked MSE is defined on ocean channels".into()));
    }
    let cells = crate::grid::ocean_cells(&truth.mask);
    let uniform = vec![1.0; truth.n_channels()];
    let w = weights.unwrap_or(&uniform);
    let (loss, _) = masked_mse_rows::<f64>(
        &pred.rows(&cells),
        &truth.rows(&cells),
        &stats.stds(Role::Ocean),
        w,
    )?;
    Ok(loss)
}

/// Consecutive daily ocean and forcing fields.
#[derive(Debug, Clone)]
pub struct DailyData {
    pub ocean: Vec<FieldSet>,
    pub forcing: Vec<FieldSet>,
}

impl DailyData {
    pub fn new(ocean: Vec<FieldSet>, forcing: Vec<FieldSet>) -> Result<Self> {
        if ocean.len() != forcing.len() || ocean.is_empty() {
            return Err(Error::Data(format!(
                "{} ocean days and {} forcing days",
                ocean.len(),
                forcing.len()
            )));
        }
        let d0 = ocean[0].day;
        for (i, (o, a)) in ocean.iter().zip(&forcing).enumerate() {
            if o.day != d0 + i as i64 || a.day != o.day {
                return Err(Error::Data(format!(
                    "day {} is not consecutive (ocean {}, forcing {})",
                    d0 + i as i64,
                    o.day,
                    a.day
                )));
            }
        }
        Ok(Self { ocean, forcing })
    }

    pub fn len(&self) -> usize {
        self.ocean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ocean.is_empty()
    }

    /// Days from `first` to `last` inclusive.
    pub fn slice_days(&self, first: i64, last: i64) -> Result<Self> {
        let d0 = self.ocean[0].day;
        let (a, b) = (first - d0, last - d0);
        if a < 0 || b < a || b as usize >= self.len() {
            return Err(Error::Data(format!(
                "days {first}..={last} outside the dataset ({d0}..={})",
                d0 + self.len() as i64 - 1
            )));
        }
        let (a, b) = (a as usize, b as usize + 1);
        Self::new(self.ocean[a..b].to_vec(), self.forcing[a..b].to_vec())
    }

    /// Indices `t` usable as the current day of a sample in `phase`:
    /// `t - 1` and `t + phase.steps()` must exist.
    pub fn windows(&self, phase: Phase) -> Vec<usize> {
        let k = phase.steps();
        if self.len() < k + 2 {
            return Vec::new();
        }
        (1..self.len() - k).collect()
    }

    /// Up to `n` windows spread evenly over the period.
    pub fn spread_windows(&self, phase: Phase, n: usize) -> Vec<usize> {
        let w = self.windows(phase);
        if w.len() <= n {
            return w;
        }
        (0..n).map(|i| w[i * (w.len() - 1) / (n - 1).max(1)]).collect()
    }
}

/// Everything a loss evaluation needs besides parameters and data.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a, T> {
    pub model: &'a Model,
    pub graph: &'a GraphTensors<T>,
    pub stats: &'a NormStats,
    pub statics: &'a FieldSet,
    pub weights: &'a [f64],
}

impl<T: Scalar> LossContext<'_, T> {
    /// Loss of the sample centered at `t`, with gradients when `grad` is set.
    pub fn sample_loss(
        &self,
        params: &ParamStore<T>,
        data: &DailyData,
        t: usize,
        phase: Phase,
        grad: bool,
    ) -> Result<(f64, Option<Gradients<T>>)> {
        let k = phase.steps();
        if t == 0 || t + k >= data.len() {
            return Err(Error::Data(format!("no {phase} sample centered at index {t}")));
        }
        let (o, a) = (&data.ocean, &data.forcing);
        check_inputs(
            &self.model.schema,
            &self.graph.cells,
            &o[t - 1],
            &o[t],
            &a[t - 1],
            &a[t],
            &a[t + 1],
        )?;
        let cells = &self.graph.cells;
        let stds = self.stats.stds(Role::Ocean);
        let mut tape = Tape::new();
        let mut prev = tape.input(o[t - 1].rows::<T>(cells));
        let mut cur = tape.input(o[t].rows::<T>(cells));
        let mut seeds: Vec<(NodeId, Matrix<T>)> = Vec::with_capacity(k);
        let mut total = 0.0;
        for s in 0..k {
            let d = t + s;
            let forcing = [&a[d - 1], &a[d], &a[d + 1]];
            let pred = self.model.step_on_tape(
                &mut tape,
                params,
                self.graph,
                self.stats,
                prev,
                cur,
                &forcing,
                self.statics,
            )?;
            let truth = o[d + 1].rows::<T>(cells);
            let (loss, mut g) = masked_mse_rows(tape.value(pred), &truth, &stds, self.weights)?;
            total += loss / k as f64;
            let inv = T::of(1.0 / k as f64);
            g.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
            seeds.push((pred, g));
            prev = cur;
            cur = pred;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite { stage: "loss".into() });
        }
        let grads = if grad {
            Some(tape.backward(params, &seeds)?)
        } else {
            None
        };
        Ok((total, grads))
    }

    /// Mean loss over `windows`.
    pub fn mean_loss(
        &self,
        params: &ParamStore<T>,
        data: &DailyData,
        windows: &[usize],
        phase: Phase,
    ) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::Data(format!("no {phase} windows to evaluate")));
        }
        let mut sum = 0.0;
        for &t in windows {
            sum += self.sample_loss(params, data, t, phase, false)?.0;
        }
        Ok(sum / windows.len() as f64)
    }
}

/// Loss of predicting `X^t` at every step of the sample centered at `t`.
pub fn persistence_loss(
    data: &DailyData,
    stats: &NormStats,
    windows: &[usize],
    phase: Phase,
    weights: Option<&[f64]>,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Data("no windows for the persistence loss".into()));
    }
    let k = phase.steps();
    let mut sum = 0.0;
    for &t in windows {
        for s in 1..=k {
            sum += masked_mse(&data.ocean[t], &data.ocean[t + s], stats, weights)? / k as f64;
        }
    }
    Ok(sum / windows.len() as f64)
}

/// Provenance stored in a checkpoint's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub phase: Phase,
    pub step: u64,
    pub model: ModelConfig,
    pub schema: ChannelSchema,
    pub stats: NormStats,
    /// Resolved experiment configuration.
    pub config: serde_json::Value,
}

/// Parameters and optimizer of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub phase: Phase,
    pub params: ParamStore<f32>,
    pub optimizer: AdamW<f32>,
}

impl TrainState {
    /// A fresh optimizer for `config.phase` over `params`.
    pub fn start(config: &TrainConfig, params: ParamStore<f32>) -> Self {
        let optimizer = AdamW::new(config.adamw(), &params);
        Self {
            phase: config.phase,
            params,
            optimizer,
        }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn checkpoint(&self, meta: &CheckpointMeta) -> Result<Checkpoint> {
        Ok(Checkpoint {
            params: self.params.clone(),
            optimizer: Some(self.optimizer.clone()),
            metadata: serde_json::to_string(meta)?,
        })
    }

    /// Resumes from a checkpoint written by [`TrainState::checkpoint`].
    pub fn resume(ck: &Checkpoint) -> Result<(Self, CheckpointMeta)> {
        let meta: CheckpointMeta = serde_json::from_str(&ck.metadata)?;
        let optimizer = ck.optimizer.clone().ok_or_else(|| {
            Error::Data("checkpoint has no optimizer state to resume from".into())
        })?;
        Ok((
            Self {
                phase: meta.phase,
                params: ck.params.clone(),
                optimizer,
            },
            meta,
        ))
    }
}

/// Reads the model, parameters and metadata of a checkpoint.
pub fn load_model(ck: &Checkpoint) -> Result<(Model, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&ck.metadata)?;
    let model = Model::bind(&meta.model, &meta.schema, &ck.params)?;
    Ok((model, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,grad_norm,val_loss,seconds\n");
        for r in &self.rows {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{:.3}\n",
                r.step, r.loss, r.grad_norm, val, r.seconds
            ));
        }
        s
    }

    /// Parses the output of [`TrainLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("step,loss,grad_norm,val_loss,seconds") {
            return Err(Error::Data("training log has an unexpected header".into()));
        }
        let bad = |line: &str| Error::Data(format!("malformed training log line {line:?}"));
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad(line));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
                Ok(LogRow {
                    step: f[0].parse().map_err(|_| bad(line))?,
                    loss: num(f[1])?,
                    grad_norm: num(f[2])?,
                    val_loss: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                    seconds: num(f[4])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn last_val_loss(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.val_loss)
    }
}

/// Samples drawn at optimizer step `step`.
pub fn batch_for_step(seed: u64, step: u64, windows: &[usize], batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (0..batch)
        .map(|_| windows[rng.random_range(0..windows.len())])
        .collect()
}

/// Runs `state` up to `config.steps` optimizer steps.
///
/// A non-finite loss or gradient aborts before the update, so the state (and
/// any checkpoint saved through `on_checkpoint`) stays at the last good step.
pub fn train_phase(
    config: &TrainConfig,
    ctx: &LossContext<'_, f32>,
    train: &DailyData,
    val: &DailyData,
    state: &mut TrainState,
    log: &mut TrainLog,
    on_checkpoint: &mut dyn FnMut(&TrainState, &TrainLog) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    if state.phase != config.phase {
        return Err(Error::Config(format!(
            "state is in phase {}, configuration asks for {}",
            state.phase, config.phase
        )));
    }
    let phase = config.phase;
    let windows = train.windows(phase);
    if windows.is_empty() {
        return Err(Error::Data(format!("training data too short for {phase}")));
    }
    let val_windows = val.spread_windows(phase, config.val_samples);
    let start = Instant::now();
    let offset = log.rows.last().map_or(0.0, |r| r.seconds);
    while state.step() < config.steps {
        let step = state.step();
        let mut loss = 0.0;
        let mut grads: Option<Gradients<f32>> = None;
        for &t in &batch_for_step(config.seed, step, &windows, config.batch_size) {
            let (l, g) = ctx.sample_loss(&state.params, train, t, phase, true)?;
            let g = g.expect("gradients requested");
            loss += l;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.accumulate(&g),
            }
        }
        let mut grads = grads.expect("batch size >= 1");
        if config.batch_size > 1 {
            grads.scale(1.0 / config.batch_size as f32);
            loss /= config.batch_size as f64;
        }
        let grad_norm = grads.global_norm();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("training step {}", step + 1),
            });
        }
        state.optimizer.update(&mut state.params, &grads)?;
        let done = state.step();
        let validate = done == config.steps
            || (config.validate_every > 0 && done.is_multiple_of(config.validate_every));
        let val_loss = if validate && !val_windows.is_empty() {
            Some(ctx.mean_loss(&state.params, val, &val_windows, phase)?)
        } else {
            None
        };
        log.rows.push(LogRow {
            step: done,
            loss,
            grad_norm,
            val_loss,
            seconds: offset + start.elapsed().as_secs_f64(),
        });
        if done == config.steps || (config.checkpoint_every > 0 && done.is_multiple_of(config.checkpoint_every))
        {
            on_checkpoint(state, log)?;
        }
    }
    Ok(())
}
