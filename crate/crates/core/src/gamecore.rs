//! Costate dynamics and pointwise control rules shared by the Nash game,
//! the penalized game and the centralized problem.
//!
//! Every player's costate obeys `ṗ_i = Γ(t) p_i + γ_i(t)` with
//! `p_i(T) = 0`, where `Γ` is the same matrix for all players:
//!
//! ```text
//! Γ_mm = Σ_{j ∈ out(m)} u_mj β_j x_j + σ_m
//! Γ_mn = −(1 − x_n) u_nm β_m      for an edge n → m
//! ```
//!
//! The players differ only in the source `γ_i`, which is what the penalty
//! mechanism changes. The centralized costate `λ` solves the same equation
//! with the full source `(−f'_1, …, −f'_N)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{weight_cost_derivative_inverse, CostModel, WeightCost};
use crate::dynamics::{check_same_grid, rhs_into, ControlTrajectory, StateTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::netgraph::{NodeId, Network, ReachSets};

/// Which problem a sweep solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Selfish open-loop Nash game.
    Game,
    /// Game with the full-network penalty `c_i = Σ_{j≠i} f_j`.
    PenaltyFull,
    /// Game with the reachability penalty `c_i = Σ_{j ∈ R_i \ {i}} f_j`.
    PenaltyReach,
    /// Centralized social optimum.
    Central,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Game, Mode::PenaltyFull, Mode::PenaltyReach, Mode::Central];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Game => "game",
            Mode::PenaltyFull => "penalty-full",
            Mode::PenaltyReach => "penalty-reach",
            Mode::Central => "central",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// Dense `Γ` at one grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix(DMatrix<f64>);

impl GammaMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.0[(m, n)]
    }
}

/// `Γ` stored as its diagonal plus one coefficient per edge: edge `e = n → m`
/// carries `Γ_mn`.
#[derive(Debug, Clone)]
pub(crate) struct SparseGamma {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SparseGamma {
    pub(crate) fn new(net: &Network) -> Self {
        SparseGamma {
            diag: vec![0.0; net.node_count()],
            off: vec![0.0; net.edge_count()],
        }
    }

    pub(crate) fn fill(&mut self, net: &Network, x: &[f64], u: &[f64]) {
        let beta = net.beta();
        let sigma = net.sigma();
        for m in 0..net.node_count() {
            let mut d = sigma[m];
            for e in net.out_edges(m) {
                let j = net.edge(e).to;
                d += u[e] * beta[j] * x[j];
            }
            self.diag[m] = d;
        }
        for (e, edge) in net.edges().iter().enumerate() {
            self.off[e] = -(1.0 - x[edge.from]) * u[e] * beta[edge.to];
        }
    }

    /// `out = Γ p`.
    pub(crate) fn apply(&self, net: &Network, p: &[f64], out: &mut [f64]) {
        for m in 0..out.len() {
            out[m] = self.diag[m] * p[m];
        }
        for (e, edge) in net.edges().iter().enumerate() {
            out[edge.to] += self.off[e] * p[edge.from];
        }
    }
}

fn check_snapshot(net: &Network, x: &[f64], u: &[f64]) -> Result<()> {
    if x.len() != net.node_count() {
        return Err(Error::dim("state snapshot", net.node_count(), x.len()));
    }
    if u.len() != net.edge_count() {
        return Err(Error::dim("control snapshot", net.edge_count(), u.len()));
    }
    Ok(())
}

/// Assemble `Γ` from state and control snapshots at a common grid node.
pub fn gamma_matrix(net: &Network, x: &[f64], u: &[f64]) -> Result<GammaMatrix> {
    check_snapshot(net, x, u)?;
    let mut sparse = SparseGamma::new(net);
    sparse.fill(net, x, u);
    let n = net.node_count();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = sparse.diag[i];
    }
    for (e, edge) in net.edges().iter().enumerate() {
        m[(edge.to, edge.from)] += sparse.off[e];
    }
    Ok(GammaMatrix(m))
}

/// `ṗ = Γ p + γ`.
pub fn costate_rhs(gamma: &GammaMatrix, p: &[f64], source: &[f64]) -> Result<Vec<f64>> {
    let n = gamma.size();
    if p.len() != n {
        return Err(Error::dim("costate vector", n, p.len()));
    }
    if source.len() != n {
        return Err(Error::dim("source vector", n, source.len()));
    }
    Ok((0..n)
        .map(|m| (0..n).map(|k| gamma.get(m, k) * p[k]).sum::<f64>() + source[m])
        .collect())
}

/// Source term of costate row `row` under `mode` at a state snapshot.
///
/// * game: `−f'_i(x_i)` in component `i` only
/// * penalty-full and central: `−f'_j(x_j)` in every component
/// * penalty-reach: `−f'_j(x_j)` for `j ∈ R_i`, zero elsewhere
///
/// `row` is ignored in central mode.
pub fn source_vector(
    mode: Mode,
    row: NodeId,
    costs: &CostModel,
    reach: Option<&ReachSets>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = x.len();
    if mode != Mode::Central && row >= n {
        return Err(Error::NodeOutOfRange { node: row, n });
    }
    let mut s = vec![0.0; n];
    match mode {
        Mode::Game => s[row] = -costs.infection.derivative(row, x[row]),
        Mode::PenaltyFull | Mode::Central => {
            for (j, v) in s.iter_mut().enumerate() {
                *v = -costs.infection.derivative(j, x[j]);
            }
        }
        Mode::PenaltyReach => {
            let reach = reach.ok_or(Error::MissingReachability)?;
            if reach.node_count() != n {
                return Err(Error::dim("reachability sets", n, reach.node_count()));
            }
            for &j in reach.set(row) {
                s[j] = -costs.infection.derivative(j, x[j]);
            }
        }
    }
    Ok(s)
}

/// How much of the costate a backward pass keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostateStorage {
    /// Every row (or the single central row).
    Full,
    /// Only the own-costate entries `p_ii` (or `λ_i`), which is all the
    /// control rule needs.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostateLayout {
    /// `N` rows of length `N`; row `i` is player `i`'s costate.
    PerPlayer,
    /// One shared row `λ` (centralized problem).
    Shared,
    /// Only `p_ii(t_k)` per player.
    Diagonal,
}

/// Costate values on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    grid: TimeGrid,
    n: usize,
    mode: Mode,
    layout: CostateLayout,
    data: Vec<f64>,
}

impl CostateTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn layout(&self) -> CostateLayout {
        self.layout
    }

    fn stride(&self) -> usize {
        match self.layout {
            CostateLayout::PerPlayer => self.n * self.n,
            CostateLayout::Shared | CostateLayout::Diagonal => self.n,
        }
    }

    /// Costate row of player `i` at grid node `k`. In the shared layout
    /// every player sees `λ`. `None` for the diagonal layout.
    pub fn row(&self, k: usize, i: NodeId) -> Option<&[f64]> {
        let base = k * self.stride();
        match self.layout {
            CostateLayout::PerPlayer => Some(&self.data[base + i * self.n..base + (i + 1) * self.n]),
            CostateLayout::Shared => Some(&self.data[base..base + self.n]),
            CostateLayout::Diagonal => None,
        }
    }

    /// `p_ij(t_k)` when stored.
    pub fn entry(&self, k: usize, i: NodeId, j: NodeId) -> Option<f64> {
        match self.layout {
            CostateLayout::Diagonal => (i == j).then(|| self.own(k, i)),
            _ => self.row(k, i).map(|r| r[j]),
        }
    }

    /// `p_ii(t_k)`, or `λ_i(t_k)` for the centralized problem.
    pub fn own(&self, k: usize, i: NodeId) -> f64 {
        let base = k * self.stride();
        match self.layout {
            CostateLayout::PerPlayer => self.data[base + i * self.n + i],
            CostateLayout::Shared | CostateLayout::Diagonal => self.data[base + i],
        }
    }

    /// Number of stored costate rows per grid node.
    pub fn rows(&self) -> usize {
        match self.layout {
            CostateLayout::PerPlayer => self.n,
            CostateLayout::Shared => 1,
            CostateLayout::Diagonal => 0,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn check_trajectories(net: &Network, x: &StateTrajectory, u: &ControlTrajectory) -> Result<()> {
    check_same_grid(x.grid(), u.grid())?;
    if x.node_count() != net.node_count() {
        return Err(Error::dim("state nodes", net.node_count(), x.node_count()));
    }
    if u.edge_count() != net.edge_count() {
        return Err(Error::dim("control edges", net.edge_count(), u.edge_count()));
    }
    Ok(())
}

/// Integrate the costates backward from `p(T) = 0` with RK4, keeping every
/// row. Game and penalty modes solve all `N` rows at once as one matrix
/// ODE; central mode solves the single row `λ`.
pub fn integrate_backward(
    net: &Network,
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costs: &CostModel,
    mode: Mode,
    reach: Option<&ReachSets>,
) -> Result<CostateTrajectory> {
    integrate_backward_with(net, x, u, costs, mode, reach, CostateStorage::Full)
}

/// [`integrate_backward`] with a choice of what to keep.
pub fn integrate_backward_with(
    net: &Network,
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costs: &CostModel,
    mode: Mode,
    reach: Option<&ReachSets>,
    storage: CostateStorage,
) -> Result<CostateTrajectory> {
    check_trajectories(net, x, u)?;
    if mode == Mode::PenaltyReach {
        let r = reach.ok_or(Error::MissingReachability)?;
        if r.node_count() != net.node_count() {
            return Err(Error::dim("reachability sets", net.node_count(), r.node_count()));
        }
    }
    let n = net.node_count();
    let grid = *x.grid();
    let rows = if mode == Mode::Central { 1 } else { n };
    let layout = match (mode, storage) {
        (_, CostateStorage::Diagonal) => CostateLayout::Diagonal,
        (Mode::Central, CostateStorage::Full) => CostateLayout::Shared,
        (_, CostateStorage::Full) => CostateLayout::PerPlayer,
    };

    // Γ and −f' at every grid node (even slots) and interval midpoint (odd slots)
    let slots = 2 * grid.steps() + 1;
    let snapshots: Vec<(SparseGamma, Vec<f64>)> = (0..slots)
        .into_par_iter()
        .map(|s| {
            let (k, mid) = (s / 2, s % 2 == 1);
            let (xs, us): (Vec<f64>, Vec<f64>) = if mid {
                let (xa, xb) = (x.at(k), x.at(k + 1));
                let (ua, ub) = (u.at(k), u.at(k + 1));
                (
                    xa.iter().zip(xb).map(|(a, b)| 0.5 * (a + b)).collect(),
                    ua.iter().zip(ub).map(|(a, b)| 0.5 * (a + b)).collect(),
                )
            } else {
                (x.at(k).to_vec(), u.at(k).to_vec())
            };
            let mut gamma = SparseGamma::new(net);
            gamma.fill(net, &xs, &us);
            let src = (0..n).map(|j| -costs.infection.derivative(j, xs[j])).collect();
            (gamma, src)
        })
        .collect();

    let h = grid.step();
    // each costate row is an independent linear ODE sharing Γ
    let integrate_row = |r: usize| -> Result<Vec<f64>> {
        // the diagonal of the shared central costate is the whole row
        let keep_row = layout != CostateLayout::Diagonal || rows == 1;
        let mut out = vec![0.0; if keep_row { grid.len() * n } else { grid.len() }];
        let mut p = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let eval = |slot: usize, p: &[f64], out: &mut [f64]| {
            let (gamma, src) = &snapshots[slot];
            gamma.apply(net, p, out);
            match mode {
                Mode::Game => out[r] += src[r],
                Mode::PenaltyFull | Mode::Central => {
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += s;
                    }
                }
                Mode::PenaltyReach => {
                    for &j in reach.expect("checked above").set(r) {
                        out[j] += src[j];
                    }
                }
            }
        };
        // p(T) = 0 is already in place at k = M
        for k in (0..grid.steps()).rev() {
            // stepping from t_{k+1} to t_k, i.e. with step −h
            eval(2 * k + 2, &p, &mut k1);
            for q in 0..n {
                tmp[q] = p[q] - 0.5 * h * k1[q];
            }
            eval(2 * k + 1, &tmp, &mut k2);
            for q in 0..n {
                tmp[q] = p[q] - 0.5 * h * k2[q];
            }
            eval(2 * k + 1, &tmp, &mut k3);
            for q in 0..n {
                tmp[q] = p[q] - h * k3[q];
            }
            eval(2 * k, &tmp, &mut k4);
            for q in 0..n {
                p[q] -= h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
            if let Some(q) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::Instability {
                    step: k,
                    time: grid.time(k),
                    detail: format!("costate entry ({r}, {q}) is {}", p[q]),
                });
            }
            if keep_row {
                out[k * n..(k + 1) * n].copy_from_slice(&p);
            } else {
                out[k] = p[r];
            }
        }
        Ok(out)
    };

    let data = if rows == 1 {
        integrate_row(0)?
    } else {
        let per_row: Vec<Vec<f64>> = (0..rows)
            .into_par_iter()
            .map(integrate_row)
            .collect::<Result<_>>()?;
        let len = grid.len();
        match layout {
            CostateLayout::PerPlayer => {
                let mut data = vec![0.0; len * n * n];
                for (i, row) in per_row.iter().enumerate() {
                    for k in 0..len {
                        data[k * n * n + i * n..k * n * n + (i + 1) * n]
                            .copy_from_slice(&row[k * n..(k + 1) * n]);
                    }
                }
                data
            }
            _ => {
                let mut data = vec![0.0; len * n];
                for (i, row) in per_row.iter().enumerate() {
                    for k in 0..len {
                        data[k * n + i] = row[k];
                    }
                }
                data
            }
        }
    };

    Ok(CostateTrajectory {
        grid,
        n,
        mode,
        layout,
        data,
    })
}

/// `φ_ij(t_k) = p_ii (1 − x_i) β_j x_j` for edge `e = i → j`.
pub fn switching_value(net: &Network, p: &CostateTrajectory, x: &StateTrajectory, k: usize, e: usize) -> f64 {
    let edge = net.edge(e);
    let xs = x.at(k);
    p.own(k, edge.from) * (1.0 - xs[edge.from]) * net.beta()[edge.to] * xs[edge.to]
}

/// Minimizer of `g(u − w^o) + φ u` over `u ∈ [0, w^o]` for convex `g`.
pub fn convex_response(costs: &CostModel, net: &Network, e: usize, phi: f64) -> Result<f64> {
    let w_o = net.edge(e).weight;
    let u = match &costs.weight {
        WeightCost::Quadratic { d } => {
            if phi <= 0.0 {
                w_o
            } else if phi >= d[e] * w_o {
                0.0
            } else {
                w_o - phi / d[e]
            }
        }
        WeightCost::Convex(g) => {
            let slope = -phi;
            if slope <= g.derivative(e, -w_o) {
                0.0
            } else if slope >= g.derivative(e, 0.0) {
                w_o
            } else {
                w_o + weight_cost_derivative_inverse(costs, net, e, slope)?
            }
        }
        WeightCost::Concave(_) => {
            return Err(Error::InvalidParameter(
                "concave weight costs use the bang-bang rule".into(),
            ))
        }
    };
    Ok(u.clamp(0.0, w_o))
}

/// Bang-bang response for a concave `g`: `0` when `φ ≥ g(−w^o)/w^o`,
/// otherwise `w^o`. The tie goes to `0`.
pub fn concave_response(costs: &CostModel, net: &Network, e: usize, phi: f64) -> Result<f64> {
    let WeightCost::Concave(g) = &costs.weight else {
        return Err(Error::NotConcave);
    };
    let w_o = net.edge(e).weight;
    let threshold = g.value(e, -w_o) / w_o;
    Ok(if phi >= threshold { 0.0 } else { w_o })
}

fn pointwise_update(
    net: &Network,
    p: &CostateTrajectory,
    x: &StateTrajectory,
    rule: impl Fn(usize, f64) -> Result<f64>,
) -> Result<ControlTrajectory> {
    check_same_grid(p.grid(), x.grid())?;
    if p.node_count() != net.node_count() || x.node_count() != net.node_count() {
        return Err(Error::dim("costate/state nodes", net.node_count(), p.node_count()));
    }
    let grid = *x.grid();
    let m = net.edge_count();
    let mut values = Vec::with_capacity(grid.len() * m);
    for k in 0..grid.len() {
        for e in 0..m {
            values.push(rule(e, switching_value(net, p, x, k, e))?);
        }
    }
    ControlTrajectory::from_rows(grid, m, values)
}

/// Pointwise minimization of each player's Hamiltonian (convex `g`).
/// With a shared costate this is also the centralized update.
pub fn control_update(
    net: &Network,
    costs: &CostModel,
    p: &CostateTrajectory,
    x: &StateTrajectory,
) -> Result<ControlTrajectory> {
    pointwise_update(net, p, x, |e, phi| convex_response(costs, net, e, phi))
}

/// Switching control rule for a concave weight cost.
pub fn bang_bang_control(
    net: &Network,
    costs: &CostModel,
    p: &CostateTrajectory,
    x: &StateTrajectory,
) -> Result<ControlTrajectory> {
    if !costs.weight.is_concave() {
        return Err(Error::NotConcave);
    }
    pointwise_update(net, p, x, |e, phi| concave_response(costs, net, e, phi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianKind {
    Player(NodeId),
    Central,
}

/// Hamiltonian at one snapshot, using the mean-field dynamics as the
/// costate-weighted drift:
///
/// * player `i`: `f_i + Σ_{out(i)} g + p_i · ẋ`
/// * central: `Σ f + Σ g + λ · ẋ`
pub fn hamiltonian(
    kind: HamiltonianKind,
    net: &Network,
    costs: &CostModel,
    x: &[f64],
    u: &[f64],
    costate_row: &[f64],
) -> Result<f64> {
    check_snapshot(net, x, u)?;
    let n = net.node_count();
    if costate_row.len() != n {
        return Err(Error::dim("costate row", n, costate_row.len()));
    }
    let mut drift = vec![0.0; n];
    rhs_into(net, x, u, &mut drift);
    let coupling: f64 = costate_row.iter().zip(&drift).map(|(p, d)| p * d).sum();
    let g = |e: usize| costs.weight.value(e, u[e] - net.edge(e).weight);
    Ok(match kind {
        HamiltonianKind::Player(i) => {
            if i >= n {
                return Err(Error::NodeOutOfRange { node: i, n });
            }
            costs.infection.value(i, x[i]) + net.out_edges(i).map(g).sum::<f64>() + coupling
        }
        HamiltonianKind::Central => {
            (0..n).map(|i| costs.infection.value(i, x[i])).sum::<f64>()
                + (0..net.edge_count()).map(g).sum::<f64>()
                + coupling
        }
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::costmodel::{InfectionCost, SqrtWeightCost};
    use crate::dynamics::integrate_forward;

    fn five_node_dag() -> Network {
        Network::new(
            5,
            [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (3, 2, 1.0), (3, 4, 1.0)],
            vec![0.04, 0.05, 0.06, 0.07, 0.08],
            vec![0.1, 0.11, 0.12, 0.13, 0.14],
        )
        .unwrap()
    }

    #[test]
    fn gamma_at_zero_state() {
        let net = five_node_dag();
        let u = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let g = gamma_matrix(&net, &[0.0; 5], &u).unwrap();
        for m in 0..5 {
            assert_eq!(g.get(m, m), net.sigma()[m]);
        }
        for (e, edge) in net.edges().iter().enumerate() {
            assert_eq!(g.get(edge.to, edge.from), -u[e] * net.beta()[edge.to]);
        }
    }

    #[test]
    fn gamma_with_zero_controls_is_diagonal() {
        let net = five_node_dag();
        let g = gamma_matrix(&net, &[0.3, 0.1, 0.5, 0.2, 0.7], &[0.0; 6]).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(net.sigma().to_vec()));
        assert_eq!(g.matrix(), &expected);
    }

    #[test]
    fn gamma_block_structure_for_node5_permutation() {
        let net = five_node_dag();
        let x = [0.3, 0.1, 0.5, 0.2, 0.7];
        let u = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let g = gamma_matrix(&net, &x, &u).unwrap();
        let b = net.beta();
        // permutation {1, 4, 5, 2, 3} in 0-based ids
        let perm = [0, 3, 4, 1, 2];
        let pg = DMatrix::from_fn(5, 5, |r, c| g.get(perm[r], perm[c]));
        // upper-right 3×2 block vanishes
        for r in 0..3 {
            for c in 3..5 {
                assert_eq!(pg[(r, c)], 0.0);
            }
        }
        // upper-left block
        let d0 = u[0] * b[1] * x[1] + u[1] * b[2] * x[2] + u[2] * b[3] * x[3] + net.sigma()[0];
        assert!((pg[(0, 0)] - d0).abs() < 1e-15);
        assert_eq!(pg[(0, 1)], 0.0);
        assert!((pg[(1, 0)] + (1.0 - x[0]) * u[2] * b[3]).abs() < 1e-15);
        let d3 = u[4] * b[2] * x[2] + u[5] * b[4] * x[4] + net.sigma()[3];
        assert!((pg[(1, 1)] - d3).abs() < 1e-15);
        assert_eq!(pg[(2, 0)], 0.0);
        assert!((pg[(2, 1)] + (1.0 - x[3]) * u[5] * b[4]).abs() < 1e-15);
        assert_eq!(pg[(2, 2)], net.sigma()[4]);
        // lower-left block
        assert!((pg[(3, 0)] + (1.0 - x[0]) * u[0] * b[1]).abs() < 1e-15);
        assert_eq!(pg[(3, 1)], 0.0);
        assert!((pg[(4, 0)] + (1.0 - x[0]) * u[1] * b[2]).abs() < 1e-15);
        assert!((pg[(4, 1)] + (1.0 - x[3]) * u[4] * b[2]).abs() < 1e-15);
        // lower-right block
        assert!((pg[(3, 3)] - (u[3] * b[2] * x[2] + net.sigma()[1])).abs() < 1e-15);
        assert_eq!(pg[(3, 4)], 0.0);
        assert!((pg[(4, 3)] + (1.0 - x[1]) * u[3] * b[2]).abs() < 1e-15);
        assert_eq!(pg[(4, 4)], net.sigma()[2]);
    }

    #[test]
    fn gamma_dimension_errors() {
        let net = five_node_dag();
        assert!(gamma_matrix(&net, &[0.0; 4], &[0.0; 6]).is_err());
        assert!(gamma_matrix(&net, &[0.0; 5], &[0.0; 5]).is_err());
    }

    #[test]
    fn costate_rhs_examples() {
        let net = five_node_dag();
        let g = gamma_matrix(&net, &[0.2; 5], &[1.0; 6]).unwrap();
        let mut src = vec![0.0; 5];
        src[2] = -1.5;
        let d = costate_rhs(&g, &[0.0; 5], &src).unwrap();
        assert_eq!(d, src);
        assert_eq!(costate_rhs(&g, &[0.0; 5], &[0.0; 5]).unwrap(), vec![0.0; 5]);
        assert!(costate_rhs(&g, &[0.0; 4], &[0.0; 5]).is_err());
    }

    #[test]
    fn source_vector_modes() {
        let net = Network::uniform(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], 0.04, 0.1).unwrap();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let reach = net.reachability();
        let x = [0.1, 0.2, 0.3];
        assert_eq!(source_vector(Mode::Game, 1, &costs, None, &x).unwrap(), vec![0.0, -1.0, 0.0]);
        let central = source_vector(Mode::Central, 0, &costs, None, &x).unwrap();
        for i in 0..3 {
            assert_eq!(source_vector(Mode::PenaltyFull, i, &costs, None, &x).unwrap(), central);
            assert_eq!(
                source_vector(Mode::PenaltyReach, i, &costs, Some(&reach), &x).unwrap(),
                central
            );
        }
        assert!(matches!(
            source_vector(Mode::PenaltyReach, 0, &costs, None, &x),
            Err(Error::MissingReachability)
        ));
    }

    #[test]
    fn backward_decoupled_closed_form() {
        let net = Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1).unwrap();
        let grid = TimeGrid::new(20.0, 2000).unwrap();
        let u = ControlTrajectory::zeros(&net, grid);
        let x = integrate_forward(&net, &grid, &[0.16, 0.3], &u).unwrap();
        let costs = CostModel {
            infection: InfectionCost::Linear { alpha: vec![1.0, 2.5] },
            weight: crate::costmodel::WeightCost::quadratic_uniform(0.2, 2),
        };
        let p = integrate_backward(&net, &x, &u, &costs, Mode::Game, None).unwrap();
        for k in (0..grid.len()).step_by(50) {
            let tau = 20.0 - grid.time(k);
            for (i, a) in [1.0, 2.5].into_iter().enumerate() {
                let exact = a / 0.1 * (1.0 - (-0.1 * tau).exp());
                assert!((p.own(k, i) - exact).abs() < 1e-8);
            }
            // u ≡ 0 decouples players completely
            assert_eq!(p.entry(k, 0, 1), Some(0.0));
        }
        for i in 0..2 {
            assert_eq!(p.row(grid.steps(), i).unwrap(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn backward_zero_source_stays_zero() {
        let net = Network::uniform(2, [(0, 1, 1.0)], 0.04, 0.1).unwrap();
        let grid = TimeGrid::new(5.0, 50).unwrap();
        let u = ControlTrajectory::original_weights(&net, grid);
        let x = integrate_forward(&net, &grid, &[0.2, 0.2], &u).unwrap();
        let costs = CostModel {
            infection: InfectionCost::Linear { alpha: vec![0.0, 0.0] },
            weight: crate::costmodel::WeightCost::quadratic_uniform(0.2, 1),
        };
        let p = integrate_backward(&net, &x, &u, &costs, Mode::Central, None).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_equals_penalty_full_rows() {
        let net = Network::uniform(3, [(0, 1, 1.0), (1, 2, 0.5), (2, 0, 0.8), (1, 0, 0.3)], 0.3, 0.1)
            .unwrap();
        let grid = TimeGrid::new(10.0, 500).unwrap();
        let u = ControlTrajectory::constant(grid, &[0.7, 0.2, 0.4, 0.9]);
        let x = integrate_forward(&net, &grid, &[0.2, 0.5, 0.1], &u).unwrap();
        let costs = CostModel::uniform(&net, 1.3, 0.2);
        let lam = integrate_backward(&net, &x, &u, &costs, Mode::Central, None).unwrap();
        let pen = integrate_backward(&net, &x, &u, &costs, Mode::PenaltyFull, None).unwrap();
        for k in 0..grid.len() {
            for i in 0..3 {
                let a = lam.row(k, i).unwrap();
                let b = pen.row(k, i).unwrap();
                for j in 0..3 {
                    assert!((a[j] - b[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_storage_matches_full() {
        let net = five_node_dag();
        let grid = TimeGrid::new(10.0, 300).unwrap();
        let u = ControlTrajectory::original_weights(&net, grid);
        let x = integrate_forward(&net, &grid, &[0.3; 5], &u).unwrap();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let full = integrate_backward(&net, &x, &u, &costs, Mode::Game, None).unwrap();
        let diag =
            integrate_backward_with(&net, &x, &u, &costs, Mode::Game, None, CostateStorage::Diagonal)
                .unwrap();
        for k in 0..grid.len() {
            for i in 0..5 {
                assert_eq!(full.own(k, i), diag.own(k, i));
            }
        }
        assert!(diag.row(0, 0).is_none());
    }

    // grid search over u ∈ [0, w^o] at resolution 1e-5
    fn grid_search(w_o: f64, d: f64, phi: f64) -> f64 {
        let steps = (w_o / 1e-5).round() as usize;
        (0..=steps)
            .map(|s| s as f64 * 1e-5)
            .min_by(|a, b| {
                let ha = 0.5 * d * (a - w_o).powi(2) + phi * a;
                let hb = 0.5 * d * (b - w_o).powi(2) + phi * b;
                ha.partial_cmp(&hb).unwrap()
            })
            .unwrap()
    }

    #[test]
    fn control_rule_examples() {
        let net = Network::uniform(2, [(0, 1, 1.0)], 0.04, 0.1).unwrap();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        assert_eq!(convex_response(&costs, &net, 0, 0.0).unwrap(), 1.0);
        let u = convex_response(&costs, &net, 0, 0.1).unwrap();
        assert!((u - grid_search(1.0, 0.2, 0.1)).abs() < 1e-5);
        assert!((u - 0.5).abs() < 1e-15);
        let u = convex_response(&costs, &net, 0, 0.3).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(grid_search(1.0, 0.2, 0.3), 0.0);
    }

    #[test]
    fn bang_bang_examples() {
        let net = Network::uniform(2, [(0, 1, 1.0)], 0.04, 0.1).unwrap();
        // g(-1)/1 = 0.2
        let costs = CostModel {
            infection: InfectionCost::linear_uniform(1.0, 2),
            weight: WeightCost::Concave(Arc::new(SqrtWeightCost { c: vec![0.2] })),
        };
        assert_eq!(concave_response(&costs, &net, 0, 0.0).unwrap(), 1.0);
        assert_eq!(concave_response(&costs, &net, 0, 0.3).unwrap(), 0.0);
        assert_eq!(concave_response(&costs, &net, 0, 0.2).unwrap(), 0.0);
        // two-point comparison at the tie: both endpoints cost the same
        let h = |u: f64| costs.weight.value(0, u - 1.0) + 0.2 * u;
        assert!((h(0.0) - h(1.0)).abs() < 1e-15);
        assert_eq!(concave_response(&costs, &net, 0, 0.1999).unwrap(), 1.0);

        let convex = CostModel::uniform(&net, 1.0, 0.2);
        assert!(matches!(concave_response(&convex, &net, 0, 0.1), Err(Error::NotConcave)));
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let u = ControlTrajectory::original_weights(&net, grid);
        let x = integrate_forward(&net, &grid, &[0.5, 0.5], &u).unwrap();
        let p = integrate_backward(&net, &x, &u, &convex, Mode::Game, None).unwrap();
        assert!(matches!(bang_bang_control(&net, &convex, &p, &x), Err(Error::NotConcave)));
        assert!(control_update(&net, &costs, &p, &x).is_err());
        let bb = bang_bang_control(&net, &costs, &p, &x).unwrap();
        assert!(bb.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn hamiltonian_at_rest() {
        let net = five_node_dag();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let w = net.original_weights();
        for i in 0..5 {
            let h = hamiltonian(HamiltonianKind::Player(i), &net, &costs, &[0.0; 5], &w, &[0.0; 5])
                .unwrap();
            assert_eq!(h, 0.0);
        }
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("nash".parse::<Mode>().is_err());
    }
}
