//! Output layer models.
//!
//! The analogue readout integrates the weighted, time-multiplexed states in
//! a low-pass RC filter. Sampled once per round trip, neuron `i` (1-based) of
//! round trip `n - k` has been decaying for `N - i + N k` neuron durations,
//! so
//!
//! ```text
//! y(n) = rho * sum_{i=1..N} sum_{k>=0} w_i(n-k) s_i(n-k) exp(-rho (N - i + N k))
//! ```
//!
//! with `rho = theta / tau`. [`analogue_output`] evaluates the truncated
//! double sum from lag buffers; [`RcFilter`] is the equivalent one-pole
//! recursion used by the trainer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::{KernelVariant, PhotodiodeFn};
use crate::error::{check_len, Result, SimError};

/// Default DAC full scale. Trained weights stay below about 5 at the default
/// output gain.
pub const DEFAULT_DAC_RANGE: f64 = 8.0;

/// Kernel factors below this are treated as zero when choosing `K_max`.
pub const KERNEL_CUTOFF: f64 = 1e-12;

/// Readout weights `w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(SimError::InvalidArgument(format!("non-finite weight {w}")));
        }
        Ok(WeightVector(weights))
    }

    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Saturable photodiode response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Photodiode(pub PhotodiodeFn);

impl Photodiode {
    pub const LINEAR: Photodiode = Photodiode(PhotodiodeFn::Identity);

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self.0 {
            PhotodiodeFn::Identity => x,
            PhotodiodeFn::Logistic => 2.0 / (1.0 + (-2.0 * x).exp()) - 1.0,
            PhotodiodeFn::HypTan => 0.6 * (1.8 * x).tanh(),
        }
    }
}

/// Sensed states `g(x_i)` as seen by the training path.
pub fn sense_states(states: &[f64], pd: Photodiode) -> Vec<f64> {
    states.iter().map(|&x| pd.apply(x)).collect()
}

pub(crate) fn sense_into(states: &[f64], pd: Photodiode, out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(states) {
        *o = pd.apply(x);
    }
}

/// `sum_i w_i x_i`.
pub fn ideal_output(states: &[f64], w: &WeightVector) -> Result<f64> {
    check_len("weights", states.len(), w.len())?;
    Ok(dot(states, w.as_slice()))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform mid-tread quantizer with step `2R / 2^bits`, clamped to `[-R, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    step: f64,
    range: f64,
}

impl Quantizer {
    pub fn new(bits: u32, range: f64) -> Result<Self> {
        if bits == 0 || bits > 52 {
            return Err(SimError::InvalidArgument(format!(
                "DAC bits must lie in 1..=52, got {bits}"
            )));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(SimError::InvalidArgument(format!(
                "DAC range must be positive, got {range}"
            )));
        }
        Ok(Quantizer {
            step: 2.0 * range / 2f64.powi(bits as i32),
            range,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn quantize(&self, w: f64) -> f64 {
        ((w / self.step).round() * self.step).clamp(-self.range, self.range)
    }
}

pub fn apply_dac(w: &WeightVector, bits: u32, range: f64) -> Result<WeightVector> {
    let q = Quantizer::new(bits, range)?;
    Ok(WeightVector(w.0.iter().map(|&v| q.quantize(v)).collect()))
}

/// Adds the modulator bias offset to every weight.
pub fn apply_mz_bias(w: &WeightVector, bias: f64) -> WeightVector {
    WeightVector(w.0.iter().map(|&v| v + bias).collect())
}

/// Signal path from stored weights to the modulator: DAC, then bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPath {
    pub quantizer: Option<Quantizer>,
    pub bias: f64,
}

impl WeightPath {
    pub const IDEAL: WeightPath = WeightPath {
        quantizer: None,
        bias: 0.0,
    };

    pub fn apply_into(&self, raw: &[f64], out: &mut [f64]) {
        match self.quantizer {
            Some(q) => {
                for (o, &w) in out.iter_mut().zip(raw) {
                    *o = q.quantize(w) + self.bias;
                }
            }
            None => {
                for (o, &w) in out.iter_mut().zip(raw) {
                    *o = w + self.bias;
                }
            }
        }
    }
}

/// Fixed-capacity buffer of recent rows, lag 0 first.
#[derive(Debug, Clone)]
pub struct LagBuffer {
    width: usize,
    capacity: usize,
    rows: VecDeque<Vec<f64>>,
}

/// Weights actually applied at recent steps.
pub type WeightHistory = LagBuffer;

impl LagBuffer {
    pub fn new(width: usize, capacity: usize) -> Self {
        LagBuffer {
            width,
            capacity: capacity.max(1),
            rows: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    /// Pushes the newest row; the oldest falls off once full.
    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        check_len("row", self.width, row.len())?;
        let slot = if self.rows.len() == self.capacity {
            let mut old = self.rows.pop_back().expect("capacity >= 1");
            old.copy_from_slice(row);
            old
        } else {
            row.to_vec()
        };
        self.rows.push_front(slot);
        Ok(())
    }

    /// Row at lag `k` (0 = most recent).
    pub fn lag(&self, k: usize) -> Option<&[f64]> {
        self.rows.get(k).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Precomputed attenuation factors, row `k` holds lag `k` for neurons
/// `i = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    n_neurons: usize,
    rho: f64,
    k_max: usize,
    factors: Vec<f64>,
}

/// Smallest `K` with `exp(-rho N K) < KERNEL_CUTOFF`.
pub fn default_k_max(n_neurons: usize, rho: f64) -> usize {
    let per_trip = rho * n_neurons as f64;
    (-(KERNEL_CUTOFF.ln()) / per_trip).floor() as usize + 1
}

impl KernelTable {
    pub fn new(n_neurons: usize, rho: f64, k_max: usize, variant: KernelVariant) -> Result<Self> {
        if n_neurons == 0 {
            return Err(SimError::InvalidArgument(
                "kernel needs at least one neuron".into(),
            ));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(SimError::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let n = n_neurons as f64;
        let mut factors = Vec::with_capacity((k_max + 1) * n_neurons);
        for k in 0..=k_max {
            for i in 1..=n_neurons {
                let elapsed = match variant {
                    KernelVariant::Decaying => n - i as f64 + n * k as f64,
                    KernelVariant::Growing => n - i as f64 - n * k as f64,
                };
                factors.push((-rho * elapsed).exp());
            }
        }
        Ok(KernelTable {
            n_neurons,
            rho,
            k_max,
            factors,
        })
    }

    /// Decaying kernel truncated at [`default_k_max`], capped at `max_lag`.
    pub fn with_default_depth(n_neurons: usize, rho: f64, max_lag: Option<usize>) -> Result<Self> {
        let mut k = default_k_max(n_neurons, rho);
        if let Some(cap) = max_lag {
            k = k.min(cap);
        }
        Self::new(n_neurons, rho, k, KernelVariant::Decaying)
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    /// Factors for lag `k`, indexed by 0-based neuron.
    pub fn lag_row(&self, k: usize) -> &[f64] {
        &self.factors[k * self.n_neurons..(k + 1) * self.n_neurons]
    }

    pub fn factor(&self, i0: usize, k: usize) -> f64 {
        self.factors[k * self.n_neurons + i0]
    }

    /// Upper bound on the relative weight of the lags beyond `K_max`.
    pub fn truncation_bound(&self) -> f64 {
        let per_trip = self.rho * self.n_neurons as f64;
        (-per_trip * self.k_max as f64).exp() / (1.0 - (-per_trip).exp())
    }
}

/// Truncated double sum of the RC readout over buffered lags.
///
/// Lags beyond the shorter of the two buffers or beyond `K_max` contribute
/// nothing, which matches a filter that started from rest.
pub fn analogue_output(
    states: &LagBuffer,
    weights: &WeightHistory,
    kernel: &KernelTable,
    pd_output: Photodiode,
) -> Result<f64> {
    check_len("state window width", kernel.n_neurons(), states.width())?;
    check_len("weight history width", kernel.n_neurons(), weights.width())?;
    if states.len() != weights.len() {
        return Err(SimError::InvalidArgument(format!(
            "state window holds {} lags but weight history holds {}",
            states.len(),
            weights.len()
        )));
    }
    let depth = states.len().min(kernel.k_max() + 1);
    let mut total = 0.0;
    for k in 0..depth {
        let x = states.lag(k).expect("k < len");
        let w = weights.lag(k).expect("k < len");
        let f = kernel.lag_row(k);
        for i in 0..x.len() {
            total += w[i] * pd_output.apply(x[i]) * f[i];
        }
    }
    Ok(kernel.rho() * total)
}

/// One-pole recursion equivalent to the untruncated decaying double sum:
/// `y(n) = exp(-rho N) y(n-1) + rho * sum_i w_i(n) s_i(n) exp(-rho (N - i))`.
#[derive(Debug, Clone)]
pub struct RcFilter {
    rho: f64,
    decay: f64,
    in_trip: Vec<f64>,
    y: f64,
}

impl RcFilter {
    pub fn new(n_neurons: usize, rho: f64, variant: KernelVariant) -> Self {
        let n = n_neurons as f64;
        let in_trip = (1..=n_neurons)
            .map(|i| (-rho * (n - i as f64)).exp())
            .collect();
        // The growing kernel only makes sense truncated at k = 0, so it
        // carries no memory across round trips.
        let decay = match variant {
            KernelVariant::Decaying => (-rho * n).exp(),
            KernelVariant::Growing => 0.0,
        };
        RcFilter {
            rho,
            decay,
            in_trip,
            y: 0.0,
        }
    }

    /// Feeds one round trip of applied weights and sensed states, returns
    /// the sampled output.
    #[inline]
    pub fn push(&mut self, applied: &[f64], states: &[f64], pd_output: Photodiode) -> f64 {
        let mut acc = 0.0;
        match pd_output.0 {
            PhotodiodeFn::Identity => {
                for ((&w, &x), &f) in applied.iter().zip(states).zip(&self.in_trip) {
                    acc += w * x * f;
                }
            }
            _ => {
                for ((&w, &x), &f) in applied.iter().zip(states).zip(&self.in_trip) {
                    acc += w * pd_output.apply(x) * f;
                }
            }
        }
        self.y = self.decay * self.y + self.rho * acc;
        self.y
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn reset(&mut self) {
        self.y = 0.0;
    }
}
