//! Machine parameters, seeded random streams and the input mask.
//!
//! Every random draw in the crate goes through [`SimRng`]. A stream is
//! identified by `(seed, purpose, replica)`, so the mask for replica 3 is the
//! same whatever the training or test lengths are.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Round trip time of the physical delay loop, in seconds. Metadata only.
pub const DEFAULT_ROUNDTRIP_S: f64 = 7.94e-6;

/// Default gain between the filter voltage and the recorded output.
///
/// With unit gain the RC kernel spreads the output over many neurons and the
/// default learning rate becomes too small to converge in 83000 steps.
pub const DEFAULT_OUTPUT_GAIN: f64 = 20.0;

/// How the output y(n) is formed from the reservoir states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadoutMode {
    /// Instantaneous dot product of weights and states.
    IdealLinear,
    /// RC-filtered sum of weighted states.
    AnalogueLinear,
    /// RC-filtered output; the training path sees saturated states.
    NonlinearReadout,
    /// Saturating summing photodiode inside the RC-filtered output.
    NonlinearOutput,
}

impl ReadoutMode {
    pub const ALL: [ReadoutMode; 4] = [
        ReadoutMode::IdealLinear,
        ReadoutMode::AnalogueLinear,
        ReadoutMode::NonlinearReadout,
        ReadoutMode::NonlinearOutput,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReadoutMode::IdealLinear => "ideal",
            ReadoutMode::AnalogueLinear => "analogue",
            ReadoutMode::NonlinearReadout => "nonlinear-readout",
            ReadoutMode::NonlinearOutput => "nonlinear-output",
        }
    }

    pub fn is_analogue(self) -> bool {
        self != ReadoutMode::IdealLinear
    }
}

impl fmt::Display for ReadoutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReadoutMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ideal" | "ideal-linear" | "ideallinear" => Ok(ReadoutMode::IdealLinear),
            "analogue" | "analog" | "analogue-linear" | "analoguelinear" => {
                Ok(ReadoutMode::AnalogueLinear)
            }
            "nonlinear-readout" | "nonlinearreadout" => Ok(ReadoutMode::NonlinearReadout),
            "nonlinear-output" | "nonlinearoutput" => Ok(ReadoutMode::NonlinearOutput),
            other => Err(SimError::Parse(format!("unknown readout mode `{other}`"))),
        }
    }
}

/// Transfer function of a photodiode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhotodiodeFn {
    Identity,
    /// `2 / (1 + exp(-2x)) - 1`
    Logistic,
    /// `0.6 * tanh(1.8 x)`
    HypTan,
}

impl PhotodiodeFn {
    pub fn as_str(self) -> &'static str {
        match self {
            PhotodiodeFn::Identity => "identity",
            PhotodiodeFn::Logistic => "logistic",
            PhotodiodeFn::HypTan => "tanh",
        }
    }
}

impl fmt::Display for PhotodiodeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhotodiodeFn {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" | "x" => Ok(PhotodiodeFn::Identity),
            "logistic" | "lg" => Ok(PhotodiodeFn::Logistic),
            "tanh" | "hyptan" | "ht" => Ok(PhotodiodeFn::HypTan),
            other => Err(SimError::Parse(format!(
                "unknown photodiode function `{other}`"
            ))),
        }
    }
}

/// Sign convention of the RC kernel exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelVariant {
    /// `exp(-rho (N - i + N k))`: older round trips are attenuated more.
    Decaying,
    /// `exp(-rho (N - i - N k))`, for comparison at `k = 0` only; the factor
    /// grows with the lag and has no physical filter behind it.
    Growing,
}

impl FromStr for KernelVariant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decaying" => Ok(KernelVariant::Decaying),
            "growing" => Ok(KernelVariant::Growing),
            other => Err(SimError::Parse(format!("unknown kernel variant `{other}`"))),
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelVariant::Decaying => "decaying",
            KernelVariant::Growing => "growing",
        })
    }
}

/// Scalar parameters of the simulated machine. All signals are normalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_neurons: usize,
    /// Feedback gain (alpha).
    pub feedback_gain: f64,
    /// Input gain (beta).
    pub input_gain: f64,
    /// RC integrator ratio rho = theta / tau.
    pub rc_ratio: f64,
    /// Additive offset on every applied readout weight.
    pub mz_bias: f64,
    /// Gain between the capacitor voltage and the recorded output.
    pub output_gain: f64,
    /// `None` leaves the weights unquantized.
    pub dac_bits: Option<u32>,
    /// Full scale of the weight DAC.
    pub dac_range: f64,
    pub readout_mode: ReadoutMode,
    pub photodiode_fn: PhotodiodeFn,
    pub kernel: KernelVariant,
    pub seed: u64,
    /// Leading test steps excluded from metrics.
    pub washout: usize,
    /// Physical round trip time (s). Recorded, never used in computation.
    pub roundtrip_s: f64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            n_neurons: 50,
            feedback_gain: 0.8,
            input_gain: 0.2,
            rc_ratio: 0.03,
            mz_bias: 0.0,
            output_gain: DEFAULT_OUTPUT_GAIN,
            dac_bits: None,
            dac_range: crate::readout::DEFAULT_DAC_RANGE,
            readout_mode: ReadoutMode::AnalogueLinear,
            photodiode_fn: PhotodiodeFn::Identity,
            kernel: KernelVariant::Decaying,
            seed: 42,
            washout: 100,
            roundtrip_s: DEFAULT_ROUNDTRIP_S,
        }
    }
}

impl ReservoirConfig {
    /// Names accepted by [`ReservoirConfig::set`].
    pub const KEYS: [&'static str; 14] = [
        "n_neurons",
        "alpha",
        "beta",
        "rho",
        "bias",
        "output_gain",
        "dac_bits",
        "dac_range",
        "readout_mode",
        "pd_fn",
        "kernel",
        "seed",
        "washout",
        "roundtrip_s",
    ];

    /// Sets a field from its textual `key = value` form.
    ///
    /// `dac_bits` accepts `none`/`unquantized` to disable quantization.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "n_neurons" | "n" => self.n_neurons = parse_num(key, value)?,
            "alpha" | "feedback_gain" => self.feedback_gain = parse_num(key, value)?,
            "beta" | "input_gain" => self.input_gain = parse_num(key, value)?,
            "rho" | "rc_ratio" => self.rc_ratio = parse_num(key, value)?,
            "bias" | "mz_bias" => self.mz_bias = parse_num(key, value)?,
            "output_gain" | "gain" => self.output_gain = parse_num(key, value)?,
            "dac_bits" => {
                self.dac_bits = match value.to_ascii_lowercase().as_str() {
                    "none" | "unquantized" | "inf" | "" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "dac_range" => self.dac_range = parse_num(key, value)?,
            "readout_mode" | "readout" => self.readout_mode = value.parse()?,
            "pd_fn" | "photodiode_fn" => self.photodiode_fn = value.parse()?,
            "kernel" => self.kernel = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "washout" => self.washout = parse_num(key, value)?,
            "roundtrip_s" => self.roundtrip_s = parse_num(key, value)?,
            _ => return Err(SimError::Parse(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn dac_bits_label(&self) -> String {
        match self.dac_bits {
            Some(b) => b.to_string(),
            None => "none".to_string(),
        }
    }
}

pub(crate) fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| SimError::Parse(format!("`{key}`: cannot parse `{value}`")))
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// Checks every invariant of `cfg` and hands it back unchanged.
pub fn validate_config(cfg: ReservoirConfig) -> Result<ReservoirConfig> {
    if cfg.n_neurons == 0 {
        return Err(invalid("n_neurons", "must be at least 1"));
    }
    if !(0.0..=1.05).contains(&cfg.feedback_gain) {
        return Err(invalid(
            "feedback_gain",
            format!("must lie in [0, 1.05], got {}", cfg.feedback_gain),
        ));
    }
    if !(0.0..=1.5).contains(&cfg.input_gain) {
        return Err(invalid(
            "input_gain",
            format!("must lie in [0, 1.5], got {}", cfg.input_gain),
        ));
    }
    if !(cfg.rc_ratio > 0.0 && cfg.rc_ratio.is_finite()) {
        return Err(invalid(
            "rc_ratio",
            format!("must be positive and finite, got {}", cfg.rc_ratio),
        ));
    }
    if !cfg.mz_bias.is_finite() {
        return Err(invalid("mz_bias", "must be finite"));
    }
    if !(cfg.output_gain > 0.0 && cfg.output_gain.is_finite()) {
        return Err(invalid(
            "output_gain",
            format!("must be positive and finite, got {}", cfg.output_gain),
        ));
    }
    if let Some(bits) = cfg.dac_bits {
        if !(1..=52).contains(&bits) {
            return Err(invalid(
                "dac_bits",
                format!("must lie in 1..=52, got {bits}"),
            ));
        }
    }
    if !(cfg.dac_range > 0.0 && cfg.dac_range.is_finite()) {
        return Err(invalid(
            "dac_range",
            format!("must be positive and finite, got {}", cfg.dac_range),
        ));
    }
    if cfg.readout_mode == ReadoutMode::IdealLinear && cfg.photodiode_fn != PhotodiodeFn::Identity {
        return Err(invalid(
            "photodiode_fn",
            "must be identity when readout_mode is ideal",
        ));
    }
    Ok(cfg)
}

/// Purpose of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Mask = 1,
    TrainData = 2,
    TestData = 3,
    Noise = 4,
}

/// Deterministic random stream (ChaCha20, portable across platforms).
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha20Rng);

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        SimRng(ChaCha20Rng::seed_from_u64(seed))
    }

    /// Independent sub-stream for `(seed, tag, replica)`.
    pub fn stream(seed: u64, tag: StreamTag, replica: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(((tag as u64) << 48) ^ (replica & 0xFFFF_FFFF_FFFF));
        SimRng(rng)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn inner(&mut self) -> &mut impl Rng {
        &mut self.0
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Per-neuron input coupling coefficients, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMask {
    values: Vec<f64>,
}

impl InputMask {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SimError::InvalidArgument("mask must be non-empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(SimError::InvalidArgument(format!(
                "mask value {v} outside [-1, 1]"
            )));
        }
        Ok(InputMask { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `n` mask values i.i.d. uniform on the closed interval `[-1, 1]`.
pub fn make_mask(rng: &mut SimRng, n: usize) -> Result<InputMask> {
    if n == 0 {
        return Err(SimError::InvalidArgument(
            "mask length must be at least 1".into(),
        ));
    }
    let values = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Ok(InputMask { values })
}
