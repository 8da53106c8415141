//! Mean-field SIS dynamics, fixed-step forward integration, and the exact
//! Markov-chain reference model.
//!
//! All trajectories live on a uniform [`TimeGrid`]. Controls are stored at
//! grid nodes and linearly interpolated in between, so RK4 half-steps use
//! the average of the two neighboring nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netgraph::Network;

/// Drift past [0, 1] below this size is rounding and gets clamped.
const CLAMP_SLACK: f64 = 1e-12;

/// Uniform grid `t_k = k T / M`, `k = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and positive, got {t_final}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs at least 2 steps, got {steps}"
            )));
        }
        Ok(TimeGrid { t_final, steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid nodes, `M + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_final * k as f64 / self.steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.time(k))
    }
}

/// Infection probabilities `x_i(t_k)`, row-major by grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    grid: TimeGrid,
    n: usize,
    values: Vec<f64>,
}

impl StateTrajectory {
    /// Build from rows (one per grid node); every entry must lie in [0, 1].
    pub fn from_rows(grid: TimeGrid, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * n {
            return Err(Error::dim("state values", grid.len() * n, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "state entry {v} outside [0, 1]"
            )));
        }
        Ok(StateTrajectory { grid, n, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn initial(&self) -> &[f64] {
        self.at(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.grid.steps())
    }

    /// Time series of one node.
    pub fn node(&self, i: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.at(k)[i]).collect()
    }

    /// Network-average infection `(1/N) Σ_i x_i(t_k)` per grid node.
    pub fn network_average(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|k| {
                if self.n == 0 {
                    0.0
                } else {
                    self.at(k).iter().sum::<f64>() / self.n as f64
                }
            })
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Adapted weights `u_e(t_k)` per edge (network edge order), row-major by
/// grid node; piecewise linear in time between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    grid: TimeGrid,
    edges: usize,
    values: Vec<f64>,
}

impl ControlTrajectory {
    pub fn from_rows(grid: TimeGrid, edges: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * edges {
            return Err(Error::dim("control values", grid.len() * edges, values.len()));
        }
        Ok(ControlTrajectory {
            grid,
            edges,
            values,
        })
    }

    /// The same edge weights at every grid node.
    pub fn constant(grid: TimeGrid, weights: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.len() * weights.len());
        for _ in 0..grid.len() {
            values.extend_from_slice(weights);
        }
        ControlTrajectory {
            grid,
            edges: weights.len(),
            values,
        }
    }

    /// `u ≡ w^o`: no adaptation.
    pub fn original_weights(net: &Network, grid: TimeGrid) -> Self {
        Self::constant(grid, &net.original_weights())
    }

    pub fn zeros(net: &Network, grid: TimeGrid) -> Self {
        Self::constant(grid, &vec![0.0; net.edge_count()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.edges..(k + 1) * self.edges]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.edges..(k + 1) * self.edges]
    }

    pub fn edge(&self, e: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.at(k)[e]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation of edge `e` at time `t` (clamped to the horizon).
    pub fn value_at(&self, e: usize, t: f64) -> f64 {
        let s = (t / self.grid.step()).clamp(0.0, self.grid.steps() as f64);
        let k = (s.floor() as usize).min(self.grid.steps() - 1);
        let frac = s - k as f64;
        let a = self.at(k)[e];
        let b = self.at(k + 1)[e];
        a + (b - a) * frac
    }

    /// The same control sampled on another grid by linear interpolation.
    pub fn resample(&self, grid: TimeGrid) -> Result<Self> {
        if (grid.t_final() - self.grid.t_final()).abs() > 1e-12 * self.grid.t_final() {
            return Err(Error::GridMismatch);
        }
        let mut values = Vec::with_capacity(grid.len() * self.edges);
        for k in 0..grid.len() {
            let t = grid.time(k);
            values.extend((0..self.edges).map(|e| self.value_at(e, t)));
        }
        Ok(ControlTrajectory {
            grid,
            edges: self.edges,
            values,
        })
    }

    /// Every entry within `[0, w^o_e]`.
    pub fn check_admissible(&self, net: &Network) -> Result<()> {
        if self.edges != net.edge_count() {
            return Err(Error::dim("control edges", net.edge_count(), self.edges));
        }
        for k in 0..self.grid.len() {
            for (e, &u) in self.at(k).iter().enumerate() {
                let w = net.edge(e).weight;
                if !(0.0..=w).contains(&u) {
                    return Err(Error::InvalidParameter(format!(
                        "control {u} on edge {e} at step {k} outside [0, {w}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `‖self − other‖_∞` over every edge and grid node.
    pub fn max_abs_diff(&self, other: &ControlTrajectory) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.edges != other.edges {
            return Err(Error::dim("control edges", self.edges, other.edges));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `self ← (1 − θ) self + θ target`.
    pub fn blend_toward(&mut self, target: &ControlTrajectory, theta: f64) {
        for (a, &b) in self.values.iter_mut().zip(&target.values) {
            *a = (1.0 - theta) * *a + theta * b;
        }
    }
}

pub(crate) fn check_same_grid(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `ẋ_i = (1 − x_i) Σ_{j ∈ out(i)} u_ij β_j x_j − σ_i x_i`, written into `out`.
pub(crate) fn rhs_into(net: &Network, x: &[f64], u: &[f64], out: &mut [f64]) {
    let beta = net.beta();
    let sigma = net.sigma();
    let edges = net.edges();
    for i in 0..net.node_count() {
        let mut pressure = 0.0;
        for e in net.out_edges(i) {
            let j = edges[e].to;
            pressure += u[e] * beta[j] * x[j];
        }
        out[i] = (1.0 - x[i]) * pressure - sigma[i] * x[i];
    }
}

/// Mean-field right-hand side for a state vector and an edge-weight snapshot.
pub fn mean_field_rhs(net: &Network, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.node_count() {
        return Err(Error::dim("state vector", net.node_count(), x.len()));
    }
    if u.len() != net.edge_count() {
        return Err(Error::dim("edge weights", net.edge_count(), u.len()));
    }
    let mut out = vec![0.0; x.len()];
    rhs_into(net, x, u, &mut out);
    Ok(out)
}

pub(crate) fn validate_initial_state(net: &Network, x0: &[f64]) -> Result<()> {
    if x0.len() != net.node_count() {
        return Err(Error::dim("initial state", net.node_count(), x0.len()));
    }
    if let Some((i, v)) = x0
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
    {
        return Err(Error::InvalidParameter(format!(
            "initial infection of node {i} is {v}, outside [0, 1]"
        )));
    }
    Ok(())
}

/// Fourth-order Runge–Kutta over the grid from `x0` under controls `u`.
///
/// Rounding drift below 1e-12 outside [0, 1] is clamped; anything larger
/// (or a non-finite value) is reported as an instability.
pub fn integrate_forward(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    u: &ControlTrajectory,
) -> Result<StateTrajectory> {
    validate_initial_state(net, x0)?;
    check_same_grid(grid, u.grid())?;
    if u.edge_count() != net.edge_count() {
        return Err(Error::dim("control edges", net.edge_count(), u.edge_count()));
    }

    let n = net.node_count();
    let h = grid.step();
    let mut values = Vec::with_capacity(grid.len() * n);
    values.extend_from_slice(x0);

    let mut x = x0.to_vec();
    let mut u_mid = vec![0.0; net.edge_count()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];

    for k in 0..grid.steps() {
        let u0 = u.at(k);
        let u1 = u.at(k + 1);
        for ((m, a), b) in u_mid.iter_mut().zip(u0).zip(u1) {
            *m = 0.5 * (a + b);
        }
        rhs_into(net, &x, u0, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs_into(net, &tmp, &u_mid, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs_into(net, &tmp, &u_mid, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs_into(net, &tmp, u1, &mut k4);
        for i in 0..n {
            let next = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            x[i] = clamp_unit(next).ok_or_else(|| Error::Instability {
                step: k + 1,
                time: grid.time(k + 1),
                detail: format!("state of node {i} left [0, 1]: {next}"),
            })?;
        }
        values.extend_from_slice(&x);
    }
    Ok(StateTrajectory {
        grid: *grid,
        n,
        values,
    })
}

fn clamp_unit(v: f64) -> Option<f64> {
    if !v.is_finite() {
        None
    } else if v < 0.0 {
        (v >= -CLAMP_SLACK).then_some(0.0)
    } else if v > 1.0 {
        (v <= 1.0 + CLAMP_SLACK).then_some(1.0)
    } else {
        Some(v)
    }
}

/// Monte Carlo estimate of `P(X_i(t_k) = 1)` from the exact Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovEstimate {
    grid: TimeGrid,
    n: usize,
    runs: usize,
    mean: Vec<f64>,
    stderr: Vec<f64>,
}

impl MarkovEstimate {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn mean_at(&self, k: usize) -> &[f64] {
        &self.mean[k * self.n..(k + 1) * self.n]
    }

    pub fn stderr_at(&self, k: usize) -> &[f64] {
        &self.stderr[k * self.n..(k + 1) * self.n]
    }
}

const RUNS_PER_CHUNK: usize = 64;

/// Sample the continuous-time Markov chain by exact event simulation.
///
/// Initial states are independent Bernoulli(`x0_i`). A susceptible node `i`
/// becomes infected at rate `Σ_j u_ij β_j X_j`; an infected node recovers
/// at rate `σ_i`. Edge weights are held at their interval-midpoint value
/// within each grid interval. Run `r` draws from its own ChaCha stream
/// derived from `(seed, r)`, so the result is independent of thread count.
pub fn simulate_markov(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    u: &ControlTrajectory,
    runs: usize,
    seed: u64,
) -> Result<MarkovEstimate> {
    validate_initial_state(net, x0)?;
    check_same_grid(grid, u.grid())?;
    if u.edge_count() != net.edge_count() {
        return Err(Error::dim("control edges", net.edge_count(), u.edge_count()));
    }
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let n = net.node_count();
    let cells = grid.len() * n;
    let mid: Vec<Vec<f64>> = (0..grid.steps())
        .map(|k| {
            u.at(k)
                .iter()
                .zip(u.at(k + 1))
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        })
        .collect();

    let chunks: Vec<usize> = (0..runs.div_ceil(RUNS_PER_CHUNK)).collect();
    // integer counts make the reduction order irrelevant
    let counts = chunks
        .par_iter()
        .map(|&c| {
            let mut counts = vec![0u64; cells];
            let lo = c * RUNS_PER_CHUNK;
            let hi = (lo + RUNS_PER_CHUNK).min(runs);
            let mut state = vec![false; n];
            let mut rates = vec![0.0; n];
            for r in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                sample_path(net, grid, x0, &mid, &mut rng, &mut state, &mut rates, &mut counts);
            }
            counts
        })
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let total = runs as f64;
    let mean: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let stderr = mean
        .iter()
        .map(|&p| {
            if runs > 1 {
                (p * (1.0 - p) / (total - 1.0)).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(MarkovEstimate {
        grid: *grid,
        n,
        runs,
        mean,
        stderr,
    })
}

#[allow(clippy::too_many_arguments)]
fn sample_path(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    mid: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    state: &mut [bool],
    rates: &mut [f64],
    counts: &mut [u64],
) {
    let n = net.node_count();
    let edges = net.edges();
    let beta = net.beta();
    let sigma = net.sigma();
    for i in 0..n {
        state[i] = rng.random::<f64>() < x0[i];
    }
    let record = |k: usize, state: &[bool], counts: &mut [u64]| {
        for (i, &s) in state.iter().enumerate() {
            if s {
                counts[k * n + i] += 1;
            }
        }
    };
    record(0, state, counts);

    for k in 0..grid.steps() {
        let weights = &mid[k];
        let mut t = grid.time(k);
        let end = grid.time(k + 1);
        loop {
            let mut total = 0.0;
            for i in 0..n {
                rates[i] = if state[i] {
                    sigma[i]
                } else {
                    net.out_edges(i)
                        .filter(|&e| state[edges[e].to])
                        .map(|e| weights[e] * beta[edges[e].to])
                        .sum()
                };
                total += rates[i];
            }
            if total <= 0.0 {
                break;
            }
            let wait = -(1.0 - rng.random::<f64>()).ln() / total;
            t += wait;
            if t >= end {
                break;
            }
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &r) in rates.iter().enumerate() {
                if pick < r {
                    chosen = i;
                    break;
                }
                pick -= r;
            }
            // rounding can leave `pick` past the last positive rate
            while rates[chosen] <= 0.0 && chosen > 0 {
                chosen -= 1;
            }
            state[chosen] = !state[chosen];
        }
        record(k + 1, state, counts);
    }
}
