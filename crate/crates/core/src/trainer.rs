//! Online gradient-descent training of the readout weights, and an offline
//! ridge-regression baseline.
//!
//! The online rule is `w_i <- w_i + lambda (d - y) s_i` where `y` is the
//! output the machine actually produced (after DAC, bias and RC filter) and
//! `s` the states seen by the training path. The step size decays every
//! `k` steps: `lambda(m+1) = lambda_min + gamma (lambda(m) - lambda_min)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{
    parse_num, validate_config, InputMask, PhotodiodeFn, ReadoutMode, ReservoirConfig,
};
use crate::error::{check_len, Result, SimError};
use crate::readout::{dot, sense_into, Photodiode, Quantizer, RcFilter, WeightPath, WeightVector};
use crate::reservoir::Reservoir;
use crate::tasks::TaskData;

/// Weights beyond this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Default Tikhonov regulariser for the offline baseline.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub lambda0: f64,
    pub lambda_min: f64,
    pub gamma: f64,
    /// Steps between step-size decays (k).
    pub update_rate: usize,
    pub train_len: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            lambda0: 0.4,
            lambda_min: 0.0,
            gamma: 0.999,
            update_rate: 10,
            train_len: 83_000,
        }
    }
}

impl TrainSchedule {
    pub const KEYS: [&'static str; 5] =
        ["lambda0", "lambda_min", "gamma", "update_rate", "train_len"];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda0" => self.lambda0 = parse_num(key, value)?,
            "lambda_min" => self.lambda_min = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "update_rate" | "k" => self.update_rate = parse_num(key, value)?,
            "train_len" => self.train_len = parse_num(key, value)?,
            _ => return Err(SimError::Parse(format!("unknown schedule key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(SimError::InvalidConfig { field, reason });
        if !(0.0 <= self.lambda_min && self.lambda_min <= self.lambda0) {
            return bad(
                "lambda_min",
                format!(
                    "need 0 <= lambda_min <= lambda0, got {} and {}",
                    self.lambda_min, self.lambda0
                ),
            );
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("must lie in (0, 1), got {}", self.gamma));
        }
        if self.update_rate == 0 {
            return bad("update_rate", "must be at least 1".into());
        }
        if self.train_len == 0 {
            return bad("train_len", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Step size in force at training step `n`, in closed form.
pub fn lambda_at(n: usize, sched: &TrainSchedule) -> f64 {
    let m = (n / sched.update_rate) as i32;
    sched.lambda_min + sched.gamma.powi(m) * (sched.lambda0 - sched.lambda_min)
}

/// Step size by iterating the decay recurrence, one value per training step.
#[derive(Debug, Clone)]
pub struct LambdaSchedule<'a> {
    sched: &'a TrainSchedule,
    n: usize,
    lambda: f64,
}

impl<'a> LambdaSchedule<'a> {
    pub fn new(sched: &'a TrainSchedule) -> Self {
        LambdaSchedule {
            sched,
            n: 0,
            lambda: sched.lambda0,
        }
    }
}

impl Iterator for LambdaSchedule<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.n > 0 && self.n.is_multiple_of(self.sched.update_rate) {
            let s = self.sched;
            self.lambda = s.lambda_min + s.gamma * (self.lambda - s.lambda_min);
        }
        self.n += 1;
        Some(self.lambda)
    }
}

/// One gradient step on the instantaneous squared error.
pub fn online_step(
    w: &WeightVector,
    sensed: &[f64],
    y: f64,
    d: f64,
    lambda: f64,
) -> Result<WeightVector> {
    check_len("sensed states", w.len(), sensed.len())?;
    let mut next = w.clone();
    update_in_place(next.as_mut_slice(), sensed, y, d, lambda, 0)?;
    Ok(next)
}

#[inline]
fn update_in_place(
    w: &mut [f64],
    sensed: &[f64],
    y: f64,
    d: f64,
    lambda: f64,
    step: usize,
) -> Result<()> {
    if !y.is_finite() || !d.is_finite() {
        return Err(SimError::Divergence {
            step,
            reason: format!("non-finite signal (y = {y}, d = {d})"),
        });
    }
    let gain = lambda * (d - y);
    for (wi, &si) in w.iter_mut().zip(sensed) {
        *wi += gain * si;
    }
    Ok(())
}

/// Per-step record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub lambda: Vec<f64>,
    pub sq_error: Vec<f64>,
    pub final_weights: WeightVector,
}

impl TrainLog {
    pub fn final_lambda(&self) -> f64 {
        self.lambda.last().copied().unwrap_or(f64::NAN)
    }

    /// Mean squared error over the last `frac` of training.
    pub fn tail_error(&self, frac: f64) -> f64 {
        let n = self.sq_error.len();
        let take = ((n as f64 * frac).ceil() as usize).clamp(1, n.max(1));
        let tail = &self.sq_error[n.saturating_sub(take)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    /// Mean squared error over the first `frac` of training.
    pub fn head_error(&self, frac: f64) -> f64 {
        let n = self.sq_error.len();
        let take = ((n as f64 * frac).ceil() as usize).clamp(1, n.max(1));
        let head = &self.sq_error[..take.min(n)];
        head.iter().sum::<f64>() / head.len().max(1) as f64
    }

    /// `n,lambda,sq_error`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "lambda", "sq_error"])?;
        for (n, (l, e)) in self.lambda.iter().zip(&self.sq_error).enumerate() {
            w.write_record([n.to_string(), l.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The simulated machine: reservoir, weight signal path and output layer.
#[derive(Debug, Clone)]
pub struct Machine {
    mode: ReadoutMode,
    reservoir: Reservoir,
    filter: RcFilter,
    path: WeightPath,
    pd_readout: Photodiode,
    pd_output: Photodiode,
    gain: f64,
    weights: Vec<f64>,
    applied: Vec<f64>,
    sensed: Vec<f64>,
}

impl Machine {
    pub fn new(mask: InputMask, cfg: &ReservoirConfig) -> Result<Self> {
        let cfg = validate_config(cfg.clone())?;
        let n = cfg.n_neurons;
        let reservoir = Reservoir::from_config(mask, &cfg)?;
        let pd = Photodiode(cfg.photodiode_fn);
        let (pd_readout, pd_output) = match cfg.readout_mode {
            ReadoutMode::NonlinearReadout => (pd, Photodiode::LINEAR),
            ReadoutMode::NonlinearOutput => (Photodiode::LINEAR, pd),
            ReadoutMode::IdealLinear | ReadoutMode::AnalogueLinear => {
                (Photodiode::LINEAR, Photodiode::LINEAR)
            }
        };
        let quantizer = cfg
            .dac_bits
            .map(|b| Quantizer::new(b, cfg.dac_range))
            .transpose()?;
        Ok(Machine {
            mode: cfg.readout_mode,
            reservoir,
            filter: RcFilter::new(n, cfg.rc_ratio, cfg.kernel),
            path: WeightPath {
                quantizer,
                bias: cfg.mz_bias,
            },
            pd_readout,
            pd_output,
            gain: cfg.output_gain,
            weights: vec![0.0; n],
            applied: vec![0.0; n],
            sensed: vec![0.0; n],
        })
    }

    pub fn weights(&self) -> WeightVector {
        WeightVector::new(self.weights.clone()).expect("weights stay finite")
    }

    pub fn set_weights(&mut self, w: &WeightVector) -> Result<()> {
        check_len("weights", self.weights.len(), w.len())?;
        self.weights.copy_from_slice(w.as_slice());
        Ok(())
    }

    /// Injects `u`, returns the output sampled at this step. The output gain
    /// only applies to the analogue readouts. Sensed states
    /// for the training path are left in `self.sensed`.
    #[inline]
    fn advance(&mut self, u: f64) -> f64 {
        let states = self.reservoir.advance(u);
        self.path.apply_into(&self.weights, &mut self.applied);
        let y = match self.mode {
            ReadoutMode::IdealLinear => dot(&self.applied, states),
            _ => self.gain * self.filter.push(&self.applied, states, self.pd_output),
        };
        sense_into(states, self.pd_readout, &mut self.sensed);
        y
    }

    /// Online training over `data.input[range]`; samples flagged unusable
    /// advance the machine without updating the weights.
    pub fn train(
        &mut self,
        data: &TaskData,
        range: std::ops::Range<usize>,
        sched: &TrainSchedule,
    ) -> Result<TrainLog> {
        sched.validate()?;
        let len = range.len();
        let mut log_lambda = Vec::with_capacity(len);
        let mut log_err = Vec::with_capacity(len);
        for (step, (n, lambda)) in range.zip(LambdaSchedule::new(sched)).enumerate() {
            let y = self.advance(data.input[n]);
            let d = data.target[n];
            log_lambda.push(lambda);
            log_err.push((d - y) * (d - y));
            if !data.usable[n] {
                continue;
            }
            update_in_place(&mut self.weights, &self.sensed, y, d, lambda, step)?;
            if let Some(i) = self.weights.iter().position(|w| w.abs() > DIVERGENCE_LIMIT) {
                return Err(SimError::Divergence {
                    step,
                    reason: format!("|w_{i}| = {} exceeds {DIVERGENCE_LIMIT}", self.weights[i]),
                });
            }
        }
        Ok(TrainLog {
            lambda: log_lambda,
            sq_error: log_err,
            final_weights: self.weights(),
        })
    }

    /// Runs `data.input[range]` with frozen weights and returns the outputs.
    pub fn run_frozen(&mut self, data: &TaskData, range: std::ops::Range<usize>) -> Vec<f64> {
        range.map(|n| self.advance(data.input[n])).collect()
    }
}

/// Trains from zero weights over the first `sched.train_len` samples of the
/// training split.
pub fn train_online(
    task: &TaskData,
    mask: &InputMask,
    cfg: &ReservoirConfig,
    sched: &TrainSchedule,
) -> Result<(WeightVector, TrainLog)> {
    if task.train_len < sched.train_len {
        return Err(SimError::InvalidArgument(format!(
            "training split has {} samples, schedule needs {}",
            task.train_len, sched.train_len
        )));
    }
    let mut machine = Machine::new(mask.clone(), cfg)?;
    let log = machine.train(task, 0..sched.train_len, sched)?;
    Ok((log.final_weights.clone(), log))
}

/// Feature model assumed by the offline solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OfflineModel {
    /// Instantaneous sensed states.
    Ideal,
    /// Sensed states passed through a linear RC filter with the configured
    /// rho, i.e. weights corrected for a known, linear analogue readout.
    Analogue,
}

/// Solves `(X^T X + ridge I) w = X^T d` over the usable training samples.
pub fn train_offline_ridge(
    task: &TaskData,
    mask: &InputMask,
    cfg: &ReservoirConfig,
    ridge: f64,
) -> Result<WeightVector> {
    train_offline(task, mask, cfg, ridge, OfflineModel::Ideal)
}

pub fn train_offline(
    task: &TaskData,
    mask: &InputMask,
    cfg: &ReservoirConfig,
    ridge: f64,
    model: OfflineModel,
) -> Result<WeightVector> {
    if task.train_len == 0 {
        return Err(SimError::InvalidArgument("training split is empty".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(SimError::InvalidArgument(format!(
            "ridge must be non-negative, got {ridge}"
        )));
    }
    let cfg = validate_config(cfg.clone())?;
    let n = cfg.n_neurons;
    let mut reservoir = Reservoir::from_config(mask.clone(), &cfg)?;
    let pd = if cfg.readout_mode == ReadoutMode::NonlinearReadout {
        Photodiode(cfg.photodiode_fn)
    } else {
        Photodiode(PhotodiodeFn::Identity)
    };
    let mut filter_state = vec![0.0; n];
    let decay = (-cfg.rc_ratio * n as f64).exp();
    let in_trip: Vec<f64> = (0..n)
        .map(|i| cfg.output_gain * cfg.rc_ratio * (-cfg.rc_ratio * (n - 1 - i) as f64).exp())
        .collect();
    let mut sensed = vec![0.0; n];
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for t in task.train_range() {
        let states = reservoir.advance(task.input[t]);
        sense_into(states, pd, &mut sensed);
        let features: &[f64] = match model {
            OfflineModel::Ideal => &sensed,
            OfflineModel::Analogue => {
                for i in 0..n {
                    filter_state[i] = decay * filter_state[i] + in_trip[i] * sensed[i];
                }
                &filter_state
            }
        };
        if !task.usable[t] {
            continue;
        }
        let x = DVector::from_column_slice(features);
        gram.ger(1.0, &x, &x, 1.0);
        rhs.axpy(task.target[t], &x, 1.0);
    }
    for i in 0..n {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        SimError::Numerical(format!(
            "normal matrix is singular with ridge = {ridge}; use a positive ridge"
        ))
    })?;
    WeightVector::new(chol.solve(&rhs).iter().copied().collect())
}
