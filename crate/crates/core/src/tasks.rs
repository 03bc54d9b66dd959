//! Benchmark datasets and their error metrics.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SimRng;
use crate::error::{check_len, Result, SimError};

pub const SYMBOLS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];

/// Channel impulse response, taps for `d(n+2)` down to `d(n-7)`.
pub const CHANNEL_TAPS: [f64; 10] = [0.08, -0.12, 1.0, 0.18, -0.1, 0.091, -0.05, 0.04, 0.03, 0.01];

/// Offset of the `d(n)` tap inside [`CHANNEL_TAPS`].
const CHANNEL_LEAD: usize = 2;

/// Samples at each end of a channel sequence that see zero padding.
pub const CHANNEL_EDGE: usize = 10;

const NARMA_ORDER: usize = 10;
const NARMA_MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    ChannelEq,
    Narma10,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ChannelEq => "channel",
            TaskKind::Narma10 => "narma10",
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            TaskKind::ChannelEq => "SER",
            TaskKind::Narma10 => "NMSE",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['_', '-'], "")
            .as_str()
        {
            "channel" | "channeleq" | "channelequalisation" | "channelequalization" => {
                Ok(TaskKind::ChannelEq)
            }
            "narma10" | "narma" => Ok(TaskKind::Narma10),
            other => Err(SimError::Parse(format!("unknown task `{other}`"))),
        }
    }
}

/// One generated input/target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub kind: TaskKind,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// `false` where the sample must not be trained on or scored.
    pub usable: Vec<bool>,
    /// Sequences discarded by the NARMA10 divergence guard.
    pub regenerations: usize,
}

impl Series {
    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    /// Pairs input `n` with target `n - delay`. Samples whose shifted index
    /// falls outside the sequence become unusable.
    pub fn with_target_delay(mut self, delay: i64) -> Self {
        if delay == 0 {
            return self;
        }
        let len = self.len() as i64;
        let (orig_t, orig_u) = (self.target.clone(), self.usable.clone());
        for n in 0..len {
            let src = n - delay;
            if (0..len).contains(&src) {
                self.target[n as usize] = orig_t[src as usize];
                self.usable[n as usize] = orig_u[src as usize];
            } else {
                self.target[n as usize] = orig_t[src.clamp(0, len - 1) as usize];
                self.usable[n as usize] = false;
            }
        }
        self
    }

    /// Two-column `u,d` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u", "d"])?;
        for (u, d) in self.input.iter().zip(&self.target) {
            w.write_record([u.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `u,d` CSV; every sample is marked usable.
    pub fn read_csv<R: Read>(kind: TaskKind, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut u = Vec::new();
        let mut d = Vec::new();
        for rec in r.deserialize() {
            let (a, b): (f64, f64) = rec?;
            u.push(a);
            d.push(b);
        }
        Ok(Series {
            kind,
            usable: vec![true; u.len()],
            input: u,
            target: d,
            regenerations: 0,
        })
    }
}

/// Training and test sequences, concatenated: the reservoir runs straight
/// from one into the other.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub kind: TaskKind,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub usable: Vec<bool>,
    pub train_len: usize,
    pub test_len: usize,
    pub regenerations: usize,
}

impl TaskData {
    pub fn from_parts(train: Series, test: Series) -> Result<Self> {
        if train.kind != test.kind {
            return Err(SimError::InvalidArgument(
                "train and test series come from different tasks".into(),
            ));
        }
        let (train_len, test_len) = (train.len(), test.len());
        let mut input = train.input;
        input.extend(test.input);
        let mut target = train.target;
        target.extend(test.target);
        let mut usable = train.usable;
        usable.extend(test.usable);
        Ok(TaskData {
            kind: train.kind,
            input,
            target,
            usable,
            train_len,
            test_len,
            regenerations: train.regenerations + test.regenerations,
        })
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.train_len
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train_len..self.train_len + self.test_len
    }
}

/// Linear part of the channel, zero-padded at both ends.
pub fn channel_filter(d: &[f64]) -> Vec<f64> {
    let len = d.len() as i64;
    (0..len)
        .map(|n| {
            CHANNEL_TAPS
                .iter()
                .enumerate()
                .map(|(j, &tap)| {
                    let idx = n + CHANNEL_LEAD as i64 - j as i64;
                    if (0..len).contains(&idx) {
                        tap * d[idx as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

/// Memoryless amplifier distortion.
#[inline]
pub fn channel_nonlinearity(q: f64) -> f64 {
    q + 0.036 * q * q - 0.011 * q * q * q
}

/// Random 4-level symbols through the distorting channel. With `snr_db`,
/// white Gaussian noise is added at that signal-to-noise ratio relative to
/// the channel output power.
pub fn gen_channel(rng: &mut SimRng, length: usize, snr_db: Option<f64>) -> Result<Series> {
    if length < 2 * CHANNEL_EDGE {
        return Err(SimError::InvalidArgument(format!(
            "channel sequence needs at least {} samples, got {length}",
            2 * CHANNEL_EDGE
        )));
    }
    let d: Vec<f64> = (0..length).map(|_| SYMBOLS[rng.index(4)]).collect();
    let mut u: Vec<f64> = channel_filter(&d)
        .into_iter()
        .map(channel_nonlinearity)
        .collect();
    if let Some(snr) = snr_db {
        let power = u.iter().map(|v| v * v).sum::<f64>() / length as f64;
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        let noise = Normal::new(0.0, sigma)
            .map_err(|e| SimError::InvalidArgument(format!("noise level: {e}")))?;
        for v in &mut u {
            *v += noise.sample(rng.inner());
        }
    }
    let usable = (0..length)
        .map(|n| n >= CHANNEL_EDGE && n < length - CHANNEL_EDGE)
        .collect();
    Ok(Series {
        kind: TaskKind::ChannelEq,
        input: u,
        target: d,
        usable,
        regenerations: 0,
    })
}

/// NARMA10 recurrence from zero history:
/// `d(n+1) = 0.3 d(n) + 0.05 d(n) sum_{i=0..9} d(n-i) + 1.5 u(n-9) u(n) + 0.1`.
pub fn narma10_targets(u: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; u.len()];
    for n in 0..u.len().saturating_sub(1) {
        let window: f64 = d[n.saturating_sub(NARMA_ORDER - 1)..=n].iter().sum();
        let lagged_u = if n >= NARMA_ORDER - 1 {
            u[n - (NARMA_ORDER - 1)]
        } else {
            0.0
        };
        d[n + 1] = 0.3 * d[n] + 0.05 * d[n] * window + 1.5 * lagged_u * u[n] + 0.1;
    }
    d
}

/// Uniform inputs on `[0, 0.5]` and their NARMA10 targets. Sequences where
/// any `|d| > 1` are discarded and redrawn.
pub fn gen_narma10(rng: &mut SimRng, length: usize) -> Result<Series> {
    if length < NARMA_ORDER {
        return Err(SimError::InvalidArgument(format!(
            "NARMA10 sequence needs at least {NARMA_ORDER} samples, got {length}"
        )));
    }
    for attempt in 0..NARMA_MAX_RETRIES {
        let u: Vec<f64> = (0..length).map(|_| rng.uniform(0.0, 0.5)).collect();
        let d = narma10_targets(&u);
        if d.iter().all(|v| v.abs() <= 1.0) {
            return Ok(Series {
                kind: TaskKind::Narma10,
                input: u,
                usable: vec![true; length],
                target: d,
                regenerations: attempt,
            });
        }
    }
    Err(SimError::Generation(format!(
        "NARMA10 diverged in {NARMA_MAX_RETRIES} consecutive draws"
    )))
}

/// Nearest symbol; ties at -2, 0, 2 go to the larger symbol.
#[inline]
pub fn nearest_symbol(y: f64) -> f64 {
    if y >= 2.0 {
        3.0
    } else if y >= 0.0 {
        1.0
    } else if y >= -2.0 {
        -1.0
    } else {
        -3.0
    }
}

fn check_metric_args(y: &[f64], d: &[f64], washout: usize) -> Result<()> {
    check_len("metric target", y.len(), d.len())?;
    if y.len() <= washout {
        return Err(SimError::InvalidArgument(format!(
            "sequence of length {} does not exceed washout {washout}",
            y.len()
        )));
    }
    Ok(())
}

/// Symbol error rate over samples `washout..`.
pub fn ser(y: &[f64], d: &[f64], washout: usize) -> Result<f64> {
    ser_masked(y, d, None, washout)
}

/// Symbol error rate over usable samples `washout..`.
pub fn ser_masked(y: &[f64], d: &[f64], usable: Option<&[bool]>, washout: usize) -> Result<f64> {
    check_metric_args(y, d, washout)?;
    let mut wrong = 0usize;
    let mut total = 0usize;
    for n in washout..y.len() {
        if usable.is_some_and(|m| !m[n]) {
            continue;
        }
        total += 1;
        if nearest_symbol(y[n]) != d[n] {
            wrong += 1;
        }
    }
    if total == 0 {
        return Err(SimError::UndefinedMetric("no usable samples".into()));
    }
    Ok(wrong as f64 / total as f64)
}

/// Normalised mean square error over samples `washout..`.
pub fn nmse(y: &[f64], d: &[f64], washout: usize) -> Result<f64> {
    nmse_masked(y, d, None, washout)
}

pub fn nmse_masked(y: &[f64], d: &[f64], usable: Option<&[bool]>, washout: usize) -> Result<f64> {
    check_metric_args(y, d, washout)?;
    let idx: Vec<usize> = (washout..y.len())
        .filter(|&n| usable.is_none_or(|m| m[n]))
        .collect();
    if idx.is_empty() {
        return Err(SimError::UndefinedMetric("no usable samples".into()));
    }
    let count = idx.len() as f64;
    let mean_d = idx.iter().map(|&n| d[n]).sum::<f64>() / count;
    let var_d = idx.iter().map(|&n| (d[n] - mean_d).powi(2)).sum::<f64>() / count;
    if var_d == 0.0 {
        return Err(SimError::UndefinedMetric(
            "target variance is zero over the evaluated range".into(),
        ));
    }
    let mse = idx.iter().map(|&n| (y[n] - d[n]).powi(2)).sum::<f64>() / count;
    Ok(mse / var_d)
}
