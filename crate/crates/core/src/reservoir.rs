//! Ring-topology delay reservoir with a sine nonlinearity.
//!
//! Neuron `i > 0` is driven by neuron `i - 1` of the same round trip; neuron
//! 0 is driven by the last neuron one round trip *earlier* than the others
//! see it, which models the desynchronisation of the physical delay loop:
//!
//! ```text
//! x_0(n+1) = sin(alpha * x_{N-1}(n-1) + beta * M_0 * u(n))
//! x_i(n+1) = sin(alpha * x_{i-1}(n)   + beta * M_i * u(n))
//! ```
//!
//! Row `n` of a [`ReservoirTrace`] holds the state produced by injecting
//! `u(n)`, so the readout at step `n` sees the current input.

use std::io::Write;

use crate::config::{InputMask, ReservoirConfig};
use crate::error::{check_len, Result, SimError};

/// One update of the ring. `prev_last_lagged` is `x_{N-1}(n-1)`.
pub fn step(
    prev_states: &[f64],
    prev_last_lagged: f64,
    u: f64,
    mask: &InputMask,
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    check_len("mask", prev_states.len(), mask.len())?;
    let mut next = vec![0.0; prev_states.len()];
    step_into(
        prev_states,
        prev_last_lagged,
        u,
        mask.values(),
        alpha,
        beta,
        &mut next,
    );
    Ok(next)
}

#[inline]
fn step_into(
    prev: &[f64],
    prev_last_lagged: f64,
    u: f64,
    mask: &[f64],
    alpha: f64,
    beta: f64,
    out: &mut [f64],
) {
    out[0] = (alpha * prev_last_lagged + beta * mask[0] * u).sin();
    for i in 1..out.len() {
        out[i] = (alpha * prev[i - 1] + beta * mask[i] * u).sin();
    }
}

/// Streaming reservoir: keeps the two most recent rows.
#[derive(Debug, Clone)]
pub struct Reservoir {
    mask: InputMask,
    alpha: f64,
    beta: f64,
    current: Vec<f64>,
    next: Vec<f64>,
    /// `x_{N-1}` one step before `current`.
    last_lagged: f64,
}

impl Reservoir {
    /// Starts from the all-zero rest state, including the lagged term.
    pub fn new(mask: InputMask, alpha: f64, beta: f64) -> Self {
        let n = mask.len();
        Reservoir {
            mask,
            alpha,
            beta,
            current: vec![0.0; n],
            next: vec![0.0; n],
            last_lagged: 0.0,
        }
    }

    pub fn from_config(mask: InputMask, cfg: &ReservoirConfig) -> Result<Self> {
        check_len("mask", cfg.n_neurons, mask.len())?;
        Ok(Self::new(mask, cfg.feedback_gain, cfg.input_gain))
    }

    /// Injects `u` and returns the new state row.
    pub fn advance(&mut self, u: f64) -> &[f64] {
        step_into(
            &self.current,
            self.last_lagged,
            u,
            self.mask.values(),
            self.alpha,
            self.beta,
            &mut self.next,
        );
        self.last_lagged = self.current[self.current.len() - 1];
        std::mem::swap(&mut self.current, &mut self.next);
        &self.current
    }

    pub fn states(&self) -> &[f64] {
        &self.current
    }

    pub fn n_neurons(&self) -> usize {
        self.current.len()
    }

    /// Overwrites the state, e.g. to compare trajectories from different
    /// initial conditions.
    pub fn set_state(&mut self, states: &[f64], last_lagged: f64) -> Result<()> {
        check_len("state", self.current.len(), states.len())?;
        self.current.copy_from_slice(states);
        self.last_lagged = last_lagged;
        Ok(())
    }
}

/// Dense `timesteps x N` record of the neuron states.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTrace {
    n_neurons: usize,
    data: Vec<f64>,
}

impl ReservoirTrace {
    pub fn timesteps(&self) -> usize {
        self.data.len() / self.n_neurons
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_neurons..(n + 1) * self.n_neurons]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_neurons)
    }

    /// Writes `n,x_0,...,x_{N-1}`; a debugging aid, not a stable format.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n".to_string()];
        header.extend((0..self.n_neurons).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for (n, row) in self.rows().enumerate() {
            let mut rec = vec![n.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the reservoir over `u_seq` from the zero state.
pub fn run_reservoir(
    u_seq: &[f64],
    mask: &InputMask,
    cfg: &ReservoirConfig,
) -> Result<ReservoirTrace> {
    if u_seq.is_empty() {
        return Err(SimError::InvalidArgument("input sequence is empty".into()));
    }
    let mut res = Reservoir::from_config(mask.clone(), cfg)?;
    let n = cfg.n_neurons;
    let mut data = Vec::with_capacity(u_seq.len() * n);
    for &u in u_seq {
        data.extend_from_slice(res.advance(u));
    }
    Ok(ReservoirTrace { n_neurons: n, data })
}
