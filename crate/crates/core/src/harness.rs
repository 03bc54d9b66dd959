//! Experiment orchestration: single runs, parameter sweeps over replicated
//! input masks, aggregation and CSV output.
//!
//! Every run derives its mask and its data from `(seed, mask_id)` only, so
//! all points of a sweep share the same masks and any row can be re-run on
//! its own.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    make_mask, parse_num, validate_config, InputMask, PhotodiodeFn, ReadoutMode, ReservoirConfig,
    SimRng, StreamTag,
};
use crate::error::{Result, SimError};
use crate::tasks::{gen_channel, gen_narma10, nmse_masked, ser_masked, Series, TaskData, TaskKind};
use crate::trainer::{train_offline, Machine, OfflineModel, TrainSchedule, DEFAULT_RIDGE};

/// Header of the per-run CSV.
pub const RUN_HEADER: [&str; 12] = [
    "task",
    "mask_id",
    "seed",
    "alpha",
    "beta",
    "rho",
    "bias",
    "dac_bits",
    "readout_mode",
    "pd_fn",
    "metric",
    "value",
];

/// Header of the aggregate CSV.
pub const AGGREGATE_HEADER: [&str; 5] = ["param", "value", "mean", "std", "n"];

/// Header of the run metadata sidecar.
pub const META_HEADER: [&str; 6] = [
    "row",
    "mask_id",
    "status",
    "final_lambda",
    "final_train_error",
    "wall_s",
];

/// Training split used by the quick profile.
pub const QUICK_TRAIN_LEN: usize = 20_000;

/// Task, sequence lengths and channel noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub test_len: usize,
    /// Channel noise; `None` is noiseless.
    pub snr_db: Option<f64>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        let test_len = match kind {
            TaskKind::ChannelEq => 100_000,
            TaskKind::Narma10 => 10_000,
        };
        TaskSpec {
            kind,
            test_len,
            snr_db: None,
        }
    }

    pub fn quick(kind: TaskKind) -> Self {
        let test_len = match kind {
            TaskKind::ChannelEq => 10_000,
            TaskKind::Narma10 => 2_000,
        };
        TaskSpec {
            test_len,
            ..Self::new(kind)
        }
    }
}

/// Reservoir configuration with the optimal gains and RC ratio of `kind`.
pub fn task_defaults(kind: TaskKind) -> ReservoirConfig {
    let base = ReservoirConfig::default();
    match kind {
        TaskKind::ChannelEq => ReservoirConfig {
            feedback_gain: 0.8,
            input_gain: 0.2,
            rc_ratio: 0.03,
            ..base
        },
        TaskKind::Narma10 => ReservoirConfig {
            feedback_gain: 0.95,
            input_gain: 0.8,
            rc_ratio: 0.003,
            ..base
        },
    }
}

/// How the readout weights are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrainMethod {
    Online,
    /// Ridge regression, then the weights are frozen into the machine.
    Offline {
        model: OfflineModel,
        ridge: f64,
    },
}

impl fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainMethod::Online => f.write_str("online"),
            TrainMethod::Offline {
                model: OfflineModel::Ideal,
                ..
            } => f.write_str("offline-ideal"),
            TrainMethod::Offline {
                model: OfflineModel::Analogue,
                ..
            } => f.write_str("offline-analogue"),
        }
    }
}

impl FromStr for TrainMethod {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let offline = |model| TrainMethod::Offline {
            model,
            ridge: DEFAULT_RIDGE,
        };
        match s.trim().to_ascii_lowercase().as_str() {
            "online" => Ok(TrainMethod::Online),
            "offline" | "offline-ideal" | "ridge" => Ok(offline(OfflineModel::Ideal)),
            "offline-analogue" | "offline-analog" => Ok(offline(OfflineModel::Analogue)),
            other => Err(SimError::Parse(format!(
                "unknown training method `{other}`"
            ))),
        }
    }
}

/// One swept parameter and its grid, kept as text so that non-numeric
/// fields (`dac_bits = none`, `readout_mode`) sweep the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    pub fn new(param: &str, values: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(SimError::InvalidArgument(format!(
                "grid for `{param}` is empty"
            )));
        }
        let mut probe = ReservoirConfig::default();
        for v in &values {
            probe
                .set(param, v)
                .map_err(|e| SimError::InvalidArgument(format!("sweep `{param}`: {e}")))?;
        }
        Ok(SweepAxis {
            param: param.to_string(),
            values,
        })
    }

    pub fn numeric(param: &str, values: &[f64]) -> Result<Self> {
        Self::new(param, values.iter().map(|v| format_value(*v)).collect())
    }

    /// Parses `v1,v2,...`, `lin:a:b:n` (n points) or `log:a:b:n` (n points,
    /// geometric).
    pub fn parse(param: &str, spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let grid = if let Some(rest) = spec.strip_prefix("log:") {
            let (a, b, n) = parse_range(param, rest)?;
            if a <= 0.0 || b <= 0.0 {
                return Err(SimError::Parse(format!(
                    "`{param}`: log grid needs positive ends"
                )));
            }
            log_grid(a, b, n)
        } else if let Some(rest) = spec.strip_prefix("lin:") {
            let (a, b, n) = parse_range(param, rest)?;
            lin_grid(a, b, n)
        } else {
            let values = spec
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            return Self::new(param, values);
        };
        Self::numeric(param, &grid)
    }
}

fn parse_range(param: &str, s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(SimError::Parse(format!(
            "`{param}`: expected a:b:n, got `{s}`"
        )));
    }
    let n: usize = parse_num(param, parts[2])?;
    if n == 0 {
        return Err(SimError::Parse(format!(
            "`{param}`: grid needs at least one point"
        )));
    }
    Ok((parse_num(param, parts[0])?, parse_num(param, parts[1])?, n))
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn lin_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `n` geometrically spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    lin_grid(a.log10(), b.log10(), n)
        .into_iter()
        .map(|e| 10f64.powf(e))
        .collect()
}

/// Shortest representation that parses back to the same `f64`, trimmed of
/// float noise from grid arithmetic.
fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.10e}").parse().unwrap_or(v);
    rounded.to_string()
}

/// Everything needed to run a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: ReservoirConfig,
    pub sched: TrainSchedule,
    pub task: TaskSpec,
    pub method: TrainMethod,
    pub sweep: Vec<SweepAxis>,
    pub n_masks: usize,
    pub parallel: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(kind: TaskKind) -> Self {
        ExperimentSpec {
            base: task_defaults(kind),
            sched: TrainSchedule::default(),
            task: TaskSpec::new(kind),
            method: TrainMethod::Online,
            sweep: Vec::new(),
            n_masks: 10,
            parallel: true,
            output: None,
        }
    }

    /// Shorter training and test sequences for smoke runs.
    pub fn quick(kind: TaskKind) -> Self {
        let mut spec = Self::new(kind);
        spec.make_quick();
        spec
    }

    /// Moves to `kind`, taking its gains, RC ratio and test length and
    /// keeping every other setting.
    pub fn switch_task(&mut self, kind: TaskKind) {
        let d = task_defaults(kind);
        self.base.feedback_gain = d.feedback_gain;
        self.base.input_gain = d.input_gain;
        self.base.rc_ratio = d.rc_ratio;
        let quick = self.sched.train_len == QUICK_TRAIN_LEN;
        self.task = if quick {
            TaskSpec::quick(kind)
        } else {
            TaskSpec::new(kind)
        };
        self.task.snr_db = None;
    }

    pub fn make_quick(&mut self) {
        self.sched.train_len = QUICK_TRAIN_LEN;
        self.task.test_len = TaskSpec::quick(self.task.kind).test_len;
    }

    /// Keys understood by [`ExperimentSpec::set`] besides the reservoir and
    /// schedule keys and `sweep.<param>`.
    pub const KEYS: [&'static str; 8] = [
        "task", "test_len", "snr_db", "method", "ridge", "n_masks", "parallel", "output",
    ];

    /// Builds a spec from `key = value` pairs. The task is resolved first so
    /// its defaults can be overridden by any other pair, wherever it appears.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let kind = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "task")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(TaskKind::ChannelEq);
        let mut spec = Self::new(kind);
        if pairs
            .iter()
            .any(|(k, v)| k == "quick" && parse_bool(k, v).unwrap_or(false))
        {
            spec.make_quick();
        }
        for (k, v) in pairs {
            if k != "task" && k != "quick" {
                spec.set(k, v)?;
            }
        }
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        if let Some(param) = key.strip_prefix("sweep.") {
            let axis = SweepAxis::parse(param, value)?;
            self.sweep.retain(|a| a.param != axis.param);
            self.sweep.push(axis);
            return Ok(());
        }
        match key.as_str() {
            "task" => {
                let kind: TaskKind = value.parse()?;
                if kind != self.task.kind {
                    self.switch_task(kind);
                }
            }
            "test_len" => self.task.test_len = parse_num(&key, value)?,
            "snr_db" | "snr" => {
                self.task.snr_db = match value.to_ascii_lowercase().as_str() {
                    "none" | "inf" | "" => None,
                    v => Some(parse_num(&key, v)?),
                }
            }
            "method" => {
                let ridge = match self.method {
                    TrainMethod::Offline { ridge, .. } => ridge,
                    TrainMethod::Online => DEFAULT_RIDGE,
                };
                self.method = match value.parse()? {
                    TrainMethod::Offline { model, .. } => TrainMethod::Offline { model, ridge },
                    m => m,
                };
            }
            "ridge" => {
                let r: f64 = parse_num(&key, value)?;
                if let TrainMethod::Offline { ridge, .. } = &mut self.method {
                    *ridge = r;
                } else {
                    self.method = TrainMethod::Offline {
                        model: OfflineModel::Ideal,
                        ridge: r,
                    };
                }
            }
            "n_masks" | "masks" => self.n_masks = parse_num(&key, value)?,
            "parallel" => self.parallel = parse_bool(&key, value)?,
            "quick" => {
                if parse_bool(&key, value)? {
                    self.make_quick();
                }
            }
            "output" | "out" => self.output = Some(PathBuf::from(value)),
            k if TrainSchedule::KEYS.contains(&k) || k == "k" => self.sched.set(k, value)?,
            k => self.base.set(k, value)?,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_masks == 0 {
            return Err(SimError::InvalidArgument(
                "n_masks must be at least 1".into(),
            ));
        }
        if self.task.test_len == 0 {
            return Err(SimError::InvalidArgument(
                "test_len must be at least 1".into(),
            ));
        }
        self.sched.validate()?;
        for cfg in self.grid_configs()? {
            validate_config(cfg)?;
        }
        Ok(())
    }

    /// Configurations of every grid point, in grid order: the last axis
    /// varies fastest.
    pub fn grid_configs(&self) -> Result<Vec<ReservoirConfig>> {
        let mut configs = vec![self.base.clone()];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(configs.len() * axis.values.len());
            for cfg in &configs {
                for v in &axis.values {
                    let mut c = cfg.clone();
                    c.set(&axis.param, v)?;
                    next.push(c);
                }
            }
            configs = next;
        }
        Ok(configs)
    }

    /// `(param, value)` labels of every grid point, in grid order.
    pub fn grid_labels(&self) -> Vec<(String, String)> {
        if self.sweep.is_empty() {
            return vec![("none".into(), String::new())];
        }
        let param = self
            .sweep
            .iter()
            .map(|a| a.param.as_str())
            .collect::<Vec<_>>()
            .join(";");
        let mut values = vec![Vec::<&str>::new()];
        for axis in &self.sweep {
            values = values
                .iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.as_str());
                        p
                    })
                })
                .collect();
        }
        values
            .into_iter()
            .map(|v| (param.clone(), v.join(";")))
            .collect()
    }

    /// The spec as `key = value` lines, readable by [`parse_spec`].
    pub fn to_config_text(&self) -> String {
        let c = &self.base;
        let s = &self.sched;
        let mut lines = vec![
            format!("task = {}", self.task.kind),
            format!("test_len = {}", self.task.test_len),
            format!(
                "snr_db = {}",
                self.task
                    .snr_db
                    .map_or("none".to_string(), |v| v.to_string())
            ),
            format!("method = {}", self.method),
        ];
        if let TrainMethod::Offline { ridge, .. } = self.method {
            lines.push(format!("ridge = {ridge}"));
        }
        lines.extend([
            format!("n_masks = {}", self.n_masks),
            format!("n_neurons = {}", c.n_neurons),
            format!("alpha = {}", c.feedback_gain),
            format!("beta = {}", c.input_gain),
            format!("rho = {}", c.rc_ratio),
            format!("bias = {}", c.mz_bias),
            format!("output_gain = {}", c.output_gain),
            format!("dac_bits = {}", c.dac_bits_label()),
            format!("dac_range = {}", c.dac_range),
            format!("readout_mode = {}", c.readout_mode),
            format!("pd_fn = {}", c.photodiode_fn),
            format!("kernel = {}", c.kernel),
            format!("seed = {}", c.seed),
            format!("washout = {}", c.washout),
            format!("roundtrip_s = {}", c.roundtrip_s),
            format!("lambda0 = {}", s.lambda0),
            format!("lambda_min = {}", s.lambda_min),
            format!("gamma = {}", s.gamma),
            format!("update_rate = {}", s.update_rate),
            format!("train_len = {}", s.train_len),
        ]);
        for axis in &self.sweep {
            lines.push(format!("sweep.{} = {}", axis.param, axis.values.join(",")));
        }
        lines.join("\n") + "\n"
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(SimError::Parse(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

/// Reads flat `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            SimError::Parse(format!(
                "line {}: expected `key = value`, got `{line}`",
                i + 1
            ))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    ExperimentSpec::from_pairs(&parse_pairs(text)?)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    parse_spec(&std::fs::read_to_string(path)?)
}

/// Outcome of one training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: TaskSpec,
    pub config: ReservoirConfig,
    pub sched: TrainSchedule,
    pub method: TrainMethod,
    pub mask_id: u64,
    pub metric: String,
    pub value: f64,
    pub final_lambda: f64,
    /// Mean squared training error over the last 1% of training.
    pub final_train_error: f64,
    pub wall_time: Duration,
}

/// Mask for replica `mask_id`.
pub fn mask_for(cfg: &ReservoirConfig, mask_id: u64) -> Result<InputMask> {
    make_mask(
        &mut SimRng::stream(cfg.seed, StreamTag::Mask, mask_id),
        cfg.n_neurons,
    )
}

/// Training and test data for replica `mask_id`.
pub fn data_for(task: &TaskSpec, seed: u64, train_len: usize, mask_id: u64) -> Result<TaskData> {
    let gen = |tag, len| -> Result<Series> {
        let mut rng = SimRng::stream(seed, tag, mask_id);
        match task.kind {
            TaskKind::ChannelEq => gen_channel(&mut rng, len, task.snr_db),
            TaskKind::Narma10 => gen_narma10(&mut rng, len),
        }
    };
    TaskData::from_parts(
        gen(StreamTag::TrainData, train_len)?,
        gen(StreamTag::TestData, task.test_len)?,
    )
}

/// Task metric of `y` against the test split.
pub fn evaluate(data: &TaskData, y: &[f64], washout: usize) -> Result<f64> {
    let r = data.test_range();
    let d = &data.target[r.clone()];
    let usable = &data.usable[r];
    match data.kind {
        TaskKind::ChannelEq => ser_masked(y, d, Some(usable), washout),
        TaskKind::Narma10 => nmse_masked(y, d, Some(usable), washout),
    }
}

/// Trains replica `mask_id` and evaluates it on fresh test data with
/// frozen weights.
pub fn run_once(
    cfg: &ReservoirConfig,
    sched: &TrainSchedule,
    task: &TaskSpec,
    method: TrainMethod,
    mask_id: u64,
) -> Result<RunResult> {
    let start = Instant::now();
    let cfg = validate_config(cfg.clone())?;
    sched.validate()?;
    let mask = mask_for(&cfg, mask_id)?;
    let data = data_for(task, cfg.seed, sched.train_len, mask_id)?;
    let mut machine = Machine::new(mask.clone(), &cfg)?;
    let (final_lambda, final_train_error) = match method {
        TrainMethod::Online => {
            let log = machine.train(&data, data.train_range(), sched)?;
            (log.final_lambda(), log.tail_error(0.01))
        }
        TrainMethod::Offline { model, ridge } => {
            let w = train_offline(&data, &mask, &cfg, ridge, model)?;
            machine.set_weights(&w)?;
            let y = machine.run_frozen(&data, data.train_range());
            let tail = y.len() - y.len().div_ceil(100);
            let err = (tail..y.len())
                .map(|t| (y[t] - data.target[t]).powi(2))
                .sum::<f64>()
                / (y.len() - tail) as f64;
            (0.0, err)
        }
    };
    let y = machine.run_frozen(&data, data.test_range());
    let value = evaluate(&data, &y, cfg.washout)?;
    Ok(RunResult {
        task: task.clone(),
        config: cfg,
        sched: sched.clone(),
        method,
        mask_id,
        metric: task.kind.metric_name().to_string(),
        value,
        final_lambda,
        final_train_error,
        wall_time: start.elapsed(),
    })
}

/// One job of a sweep: grid point index, configuration and mask.
#[derive(Debug, Clone)]
struct Job {
    point: usize,
    cfg: ReservoirConfig,
    mask_id: u64,
}

/// Result of one job; failures are kept with their configuration.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub point: usize,
    pub config: ReservoirConfig,
    pub mask_id: u64,
    pub outcome: std::result::Result<RunResult, String>,
}

/// Mean and spread of one grid point over the masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub param: String,
    pub value: String,
    pub mean: f64,
    /// Sample standard deviation over masks; 0 with a single mask.
    pub std: f64,
    /// Successful runs.
    pub n: usize,
    pub failures: usize,
}

/// Sample mean and standard deviation; NaN for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// All runs of a sweep and their aggregates.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub spec: ExperimentSpec,
    pub runs: Vec<SweepRun>,
    pub rows: Vec<AggregateRow>,
}

impl SweepOutput {
    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    /// Writes `<stem>.runs.csv`, `<stem>.csv` (aggregates),
    /// `<stem>.meta.csv` and `<stem>.cfg` next to `path`.
    pub fn write_all(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let paths = output_paths(path);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        write_runs_csv(std::fs::File::create(&paths[0])?, &self.spec, &self.runs)?;
        write_aggregate_csv(std::fs::File::create(&paths[1])?, &self.rows)?;
        write_meta_csv(std::fs::File::create(&paths[2])?, &self.runs)?;
        std::fs::write(&paths[3], self.spec.to_config_text())?;
        Ok(paths.to_vec())
    }
}

/// Per-run, aggregate, metadata and config paths derived from `path`.
pub fn output_paths(path: &Path) -> [PathBuf; 4] {
    let stem = path.with_extension("");
    let with = |suffix: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    [
        with(".runs.csv"),
        with(".csv"),
        with(".meta.csv"),
        with(".cfg"),
    ]
}

/// Runs every grid point on every mask. Individual failures are counted in
/// the aggregate rows, never abort the sweep.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let configs = spec.grid_configs()?;
    let jobs: Vec<Job> = configs
        .iter()
        .enumerate()
        .flat_map(|(point, cfg)| {
            (0..spec.n_masks as u64).map(move |mask_id| Job {
                point,
                cfg: cfg.clone(),
                mask_id,
            })
        })
        .collect();
    let exec = |job: &Job| SweepRun {
        point: job.point,
        config: job.cfg.clone(),
        mask_id: job.mask_id,
        outcome: run_once(&job.cfg, &spec.sched, &spec.task, spec.method, job.mask_id)
            .map_err(|e| e.to_string()),
    };
    // `collect` on an indexed parallel iterator keeps job order.
    let runs: Vec<SweepRun> = if spec.parallel {
        jobs.par_iter().map(exec).collect()
    } else {
        jobs.iter().map(exec).collect()
    };
    let rows = aggregate(&spec.grid_labels(), &runs);
    Ok(SweepOutput {
        spec: spec.clone(),
        runs,
        rows,
    })
}

fn aggregate(labels: &[(String, String)], runs: &[SweepRun]) -> Vec<AggregateRow> {
    labels
        .iter()
        .enumerate()
        .map(|(point, (param, value))| {
            let mine = runs.iter().filter(|r| r.point == point);
            let values: Vec<f64> = mine
                .clone()
                .filter_map(|r| r.outcome.as_ref().ok().map(|o| o.value))
                .collect();
            let failures = mine.filter(|r| r.outcome.is_err()).count();
            let (mean, std) = mean_std(&values);
            AggregateRow {
                param: param.clone(),
                value: value.clone(),
                mean,
                std,
                n: values.len(),
                failures,
            }
        })
        .collect()
}

/// One line of the per-run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub mask_id: u64,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub bias: f64,
    pub dac_bits: String,
    pub readout_mode: String,
    pub pd_fn: String,
    pub metric: String,
    /// Empty when the run failed.
    pub value: Option<f64>,
}

impl RunRecord {
    fn from_run(task: TaskKind, run: &SweepRun) -> Self {
        let c = &run.config;
        RunRecord {
            task: task.to_string(),
            mask_id: run.mask_id,
            seed: c.seed,
            alpha: c.feedback_gain,
            beta: c.input_gain,
            rho: c.rc_ratio,
            bias: c.mz_bias,
            dac_bits: c.dac_bits_label(),
            readout_mode: c.readout_mode.to_string(),
            pd_fn: c.photodiode_fn.to_string(),
            metric: task.metric_name().to_string(),
            value: run.outcome.as_ref().ok().map(|r| r.value),
        }
    }
}

pub fn write_runs_csv<W: Write>(out: W, spec: &ExperimentSpec, runs: &[SweepRun]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(RUN_HEADER)?;
    for run in runs {
        w.serialize(RunRecord::from_run(spec.task.kind, run))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &RUN_HEADER)?;
    r.deserialize()
        .map(|rec| rec.map_err(SimError::from))
        .collect()
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for row in rows {
        w.write_record([
            row.param.clone(),
            row.value.clone(),
            row.mean.to_string(),
            row.std.to_string(),
            row.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an aggregate CSV. Failure counts are not stored there and come
/// back as zero.
pub fn read_aggregate_csv<R: Read>(input: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &AGGREGATE_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(AggregateRow {
            param: rec[0].to_string(),
            value: rec[1].to_string(),
            mean: parse_num("mean", &rec[2])?,
            std: parse_num("std", &rec[3])?,
            n: parse_num("n", &rec[4])?,
            failures: 0,
        });
    }
    Ok(rows)
}

fn check_header(got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(SimError::Parse(format!(
            "unexpected CSV header `{}`",
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Wall times and training summaries, kept apart from the per-run CSV so
/// that the latter is byte-identical across re-runs.
pub fn write_meta_csv<W: Write>(out: W, runs: &[SweepRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(META_HEADER)?;
    for (i, run) in runs.iter().enumerate() {
        let rec = match &run.outcome {
            Ok(r) => [
                i.to_string(),
                run.mask_id.to_string(),
                "ok".to_string(),
                r.final_lambda.to_string(),
                r.final_train_error.to_string(),
                format!("{:.3}", r.wall_time.as_secs_f64()),
            ],
            Err(e) => [
                i.to_string(),
                run.mask_id.to_string(),
                format!("error: {e}"),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Readout scenarios of the nonlinear-readout comparison, linear first.
pub const TABLE1_CELLS: [(ReadoutMode, PhotodiodeFn); 5] = [
    (ReadoutMode::AnalogueLinear, PhotodiodeFn::Identity),
    (ReadoutMode::NonlinearReadout, PhotodiodeFn::Logistic),
    (ReadoutMode::NonlinearReadout, PhotodiodeFn::HypTan),
    (ReadoutMode::NonlinearOutput, PhotodiodeFn::Logistic),
    (ReadoutMode::NonlinearOutput, PhotodiodeFn::HypTan),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Cell {
    pub task: TaskKind,
    pub readout_mode: ReadoutMode,
    pub pd_fn: PhotodiodeFn,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub failures: usize,
}

/// Both tasks under every readout scenario. `quick` shortens the
/// sequences; `seed` overrides the default.
pub fn reproduce_table1(
    n_masks: usize,
    quick: bool,
    seed: u64,
    parallel: bool,
) -> Result<(Vec<Table1Cell>, Vec<SweepOutput>)> {
    if n_masks < 2 {
        return Err(SimError::InvalidArgument(format!(
            "table needs at least 2 masks for a spread, got {n_masks}"
        )));
    }
    let mut cells = Vec::new();
    let mut outputs = Vec::new();
    for kind in [TaskKind::ChannelEq, TaskKind::Narma10] {
        let mut spec = if quick {
            ExperimentSpec::quick(kind)
        } else {
            ExperimentSpec::new(kind)
        };
        spec.base.seed = seed;
        spec.n_masks = n_masks;
        spec.parallel = parallel;
        for &(mode, pd) in &TABLE1_CELLS {
            spec.base.readout_mode = mode;
            spec.base.photodiode_fn = pd;
            let out = run_sweep(&spec)?;
            let row = &out.rows[0];
            cells.push(Table1Cell {
                task: kind,
                readout_mode: mode,
                pd_fn: pd,
                mean: row.mean,
                std: row.std,
                n: row.n,
                failures: row.failures,
            });
            outputs.push(out);
        }
    }
    Ok((cells, outputs))
}

/// `task,readout_mode,pd_fn,metric,mean,std,n`
pub fn write_table1_csv<W: Write>(out: W, cells: &[Table1Cell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "task",
        "readout_mode",
        "pd_fn",
        "metric",
        "mean",
        "std",
        "n",
    ])?;
    for c in cells {
        w.write_record([
            c.task.to_string(),
            c.readout_mode.to_string(),
            c.pd_fn.to_string(),
            c.task.metric_name().to_string(),
            c.mean.to_string(),
            c.std.to_string(),
            c.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Default grid of a figure parameter.
pub fn default_grid(param: &str) -> Result<SweepAxis> {
    match param {
        "beta" => SweepAxis::numeric(param, &lin_grid(0.1, 0.9, 9)),
        "alpha" => SweepAxis::numeric(param, &lin_grid(0.6, 1.0, 9)),
        // 9 points per decade.
        "rho" => SweepAxis::numeric(param, &log_grid(1e-4, 1.0, 37)),
        "bias" => SweepAxis::numeric(param, &log_grid(0.01, 0.1, 10)),
        "dac_bits" => SweepAxis::new(param, (1..=20).map(|b| b.to_string()).collect()),
        _ => Err(SimError::InvalidArgument(format!(
            "no default grid for `{param}`"
        ))),
    }
}

/// Parameters scanned for the figures.
pub const FIGURE_PARAMS: [&str; 5] = ["beta", "alpha", "rho", "bias", "dac_bits"];

/// One sweep per (figure parameter, task), each written under `dir` as
/// `<param>_<task>.*`.
pub fn figure_specs(base: &ExperimentSpec, dir: &Path) -> Result<Vec<ExperimentSpec>> {
    let mut specs = Vec::new();
    for param in FIGURE_PARAMS {
        for kind in [TaskKind::ChannelEq, TaskKind::Narma10] {
            let mut spec = base.clone();
            spec.switch_task(kind);
            spec.sweep = vec![default_grid(param)?];
            spec.output = Some(dir.join(format!("{param}_{kind}.csv")));
            specs.push(spec);
        }
    }
    Ok(specs)
}

/// Grid value with the lowest mean; failed or empty points are skipped.
pub fn argmin(rows: &[AggregateRow]) -> Option<&AggregateRow> {
    rows.iter()
        .filter(|r| r.n > 0 && r.mean.is_finite())
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
}
