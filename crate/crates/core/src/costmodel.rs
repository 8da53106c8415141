//! Infection and weight-deviation costs, their derivatives, cost integrals
//! and the penalty terms of the mechanism-design game.
//!
//! Weight costs are functions of the deviation `w = u − w^o`. Only the
//! branch `w ∈ [−w^o, 0]` is ever exercised by admissible controls, and the
//! derivative inverse is restricted to that branch.

use std::fmt::Debug;
use std::sync::Arc;

use crate::dynamics::{check_same_grid, ControlTrajectory, StateTrajectory};
use crate::error::{Error, Result};
use crate::netgraph::{NodeId, Network, ReachSets};

const BISECTION_TOL: f64 = 1e-12;

/// A user-supplied infection cost `f_i : [0, 1] → ℝ⁺`, increasing and C¹.
pub trait InfectionCostFn: Send + Sync + Debug {
    fn value(&self, node: NodeId, x: f64) -> f64;
    fn derivative(&self, node: NodeId, x: f64) -> f64;
}

/// A user-supplied convex, C¹ weight cost with `g(0) = 0` as unique minimum.
pub trait ConvexWeightCost: Send + Sync + Debug {
    fn value(&self, edge: usize, w: f64) -> f64;
    fn derivative(&self, edge: usize, w: f64) -> f64;
    /// Closed-form `(g')⁻¹(slope)` on `[−w^o, 0]`; `None` falls back to bisection.
    fn derivative_inverse(&self, _edge: usize, _slope: f64) -> Option<f64> {
        None
    }
}

/// A weight cost declared concave on the deviation branch. Only its value
/// is needed: the best response then switches between `0` and `w^o`.
pub trait ConcaveWeightCost: Send + Sync + Debug {
    fn value(&self, edge: usize, w: f64) -> f64;
}

#[derive(Debug, Clone)]
pub enum InfectionCost {
    /// `f_i(x) = α_i x`.
    Linear { alpha: Vec<f64> },
    Custom(Arc<dyn InfectionCostFn>),
}

impl InfectionCost {
    pub fn linear_uniform(alpha: f64, n: usize) -> Self {
        InfectionCost::Linear {
            alpha: vec![alpha; n],
        }
    }

    pub fn value(&self, i: NodeId, x: f64) -> f64 {
        match self {
            InfectionCost::Linear { alpha } => alpha[i] * x,
            InfectionCost::Custom(f) => f.value(i, x),
        }
    }

    pub fn derivative(&self, i: NodeId, x: f64) -> f64 {
        match self {
            InfectionCost::Linear { alpha } => alpha[i],
            InfectionCost::Custom(f) => f.derivative(i, x),
        }
    }

    /// `α_i` when the cost is linear.
    pub fn linear_coefficient(&self, i: NodeId) -> Option<f64> {
        match self {
            InfectionCost::Linear { alpha } => Some(alpha[i]),
            InfectionCost::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum WeightCost {
    /// `g_e(w) = d_e w² / 2`.
    Quadratic { d: Vec<f64> },
    Convex(Arc<dyn ConvexWeightCost>),
    Concave(Arc<dyn ConcaveWeightCost>),
}

impl WeightCost {
    pub fn quadratic_uniform(d: f64, edges: usize) -> Self {
        WeightCost::Quadratic { d: vec![d; edges] }
    }

    pub fn value(&self, e: usize, w: f64) -> f64 {
        match self {
            WeightCost::Quadratic { d } => 0.5 * d[e] * w * w,
            WeightCost::Convex(g) => g.value(e, w),
            WeightCost::Concave(g) => g.value(e, w),
        }
    }

    /// `g'_e(w)`; `None` for concave costs, which carry no derivative.
    pub fn derivative(&self, e: usize, w: f64) -> Option<f64> {
        match self {
            WeightCost::Quadratic { d } => Some(d[e] * w),
            WeightCost::Convex(g) => Some(g.derivative(e, w)),
            WeightCost::Concave(_) => None,
        }
    }

    pub fn is_concave(&self) -> bool {
        matches!(self, WeightCost::Concave(_))
    }
}

/// The cost functions of every player.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub infection: InfectionCost,
    pub weight: WeightCost,
}

impl CostModel {
    /// Linear infection cost `α x` and quadratic weight cost `d w²/2` on
    /// every node and edge.
    pub fn uniform(net: &Network, alpha: f64, d: f64) -> Self {
        CostModel {
            infection: InfectionCost::linear_uniform(alpha, net.node_count()),
            weight: WeightCost::quadratic_uniform(d, net.edge_count()),
        }
    }

    /// Check per-node and per-edge coefficient vectors against a network.
    pub fn validate(&self, net: &Network) -> Result<()> {
        if let InfectionCost::Linear { alpha } = &self.infection {
            if alpha.len() != net.node_count() {
                return Err(Error::dim("alpha", net.node_count(), alpha.len()));
            }
            if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "linear infection cost needs alpha > 0, got {a}"
                )));
            }
        }
        if let WeightCost::Quadratic { d } = &self.weight {
            if d.len() != net.edge_count() {
                return Err(Error::dim("d", net.edge_count(), d.len()));
            }
            if let Some(v) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "quadratic weight cost needs d > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

fn check_pair(net: &Network, x: &StateTrajectory, u: &ControlTrajectory) -> Result<()> {
    check_same_grid(x.grid(), u.grid())?;
    if x.node_count() != net.node_count() {
        return Err(Error::dim("state nodes", net.node_count(), x.node_count()));
    }
    if u.edge_count() != net.edge_count() {
        return Err(Error::dim("control edges", net.edge_count(), u.edge_count()));
    }
    Ok(())
}

/// Running cost of player `i` at one grid node.
pub(crate) fn running_cost(net: &Network, costs: &CostModel, i: NodeId, x: &[f64], u: &[f64]) -> f64 {
    let mut c = costs.infection.value(i, x[i]);
    for e in net.out_edges(i) {
        c += costs.weight.value(e, u[e] - net.edge(e).weight);
    }
    c
}

/// `J_i = ∫ f_i(x_i) + Σ_{j ∈ out(i)} g_ij(u_ij − w^o_ij) dt` by the
/// trapezoid rule on the trajectories' grid.
pub fn player_cost(
    net: &Network,
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costs: &CostModel,
    i: NodeId,
) -> Result<f64> {
    check_pair(net, x, u)?;
    if i >= net.node_count() {
        return Err(Error::NodeOutOfRange {
            node: i,
            n: net.node_count(),
        });
    }
    let grid = x.grid();
    let samples: Vec<f64> = (0..grid.len())
        .map(|k| running_cost(net, costs, i, x.at(k), u.at(k)))
        .collect();
    Ok(trapezoid(&samples, grid.step()))
}

/// `J_i` for every player.
pub fn player_costs(
    net: &Network,
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costs: &CostModel,
) -> Result<Vec<f64>> {
    (0..net.node_count())
        .map(|i| player_cost(net, x, u, costs, i))
        .collect()
}

/// `J_o = Σ_i J_i`.
pub fn social_cost(
    net: &Network,
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costs: &CostModel,
) -> Result<f64> {
    Ok(player_costs(net, x, u, costs)?.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// `c_i = Σ_{j ≠ i} f_j(x_j)`.
    Full,
    /// `c_i = Σ_{j ∈ R_i \ {i}} f_j(x_j)`.
    Reachability,
}

/// Penalty `c_i` at one state snapshot.
pub fn penalty(
    net: &Network,
    costs: &CostModel,
    mode: PenaltyMode,
    reach: Option<&ReachSets>,
    i: NodeId,
    x: &[f64],
) -> Result<f64> {
    let n = net.node_count();
    if i >= n {
        return Err(Error::NodeOutOfRange { node: i, n });
    }
    if x.len() != n {
        return Err(Error::dim("state vector", n, x.len()));
    }
    Ok(match mode {
        PenaltyMode::Full => (0..n)
            .filter(|&j| j != i)
            .map(|j| costs.infection.value(j, x[j]))
            .fold(0.0, |a, b| a + b),
        PenaltyMode::Reachability => {
            let reach = reach.ok_or(Error::MissingReachability)?;
            reach
                .set(i)
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| costs.infection.value(j, x[j]))
                .fold(0.0, |a, b| a + b)
        }
    })
}

/// `∫ c_i dt` along a state trajectory.
pub fn penalty_integral(
    net: &Network,
    costs: &CostModel,
    mode: PenaltyMode,
    reach: Option<&ReachSets>,
    i: NodeId,
    x: &StateTrajectory,
) -> Result<f64> {
    let samples = (0..x.grid().len())
        .map(|k| penalty(net, costs, mode, reach, i, x.at(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(&samples, x.grid().step()))
}

/// The unique deviation `w ∈ [−w^o, 0]` with `g'_e(w) = slope`.
///
/// `slope` must lie in `[g'(−w^o), g'(0)]`; the endpoints map to `−w^o`
/// and `0`. Custom convex costs without a closed-form inverse are inverted
/// by bisection to 1e-12.
pub fn weight_cost_derivative_inverse(
    costs: &CostModel,
    net: &Network,
    edge: usize,
    slope: f64,
) -> Result<f64> {
    if edge >= net.edge_count() {
        return Err(Error::InvalidParameter(format!("edge {edge} does not exist")));
    }
    let w_o = net.edge(edge).weight;
    let g = &costs.weight;
    let (Some(lo), Some(hi)) = (g.derivative(edge, -w_o), g.derivative(edge, 0.0)) else {
        return Err(Error::InvalidParameter(
            "a concave weight cost has no derivative inverse".into(),
        ));
    };
    if !(slope >= lo && slope <= hi) {
        return Err(Error::NotInvertible {
            edge,
            slope,
            lo,
            hi,
        });
    }
    if slope == hi {
        return Ok(0.0);
    }
    if slope == lo {
        return Ok(-w_o);
    }
    match g {
        WeightCost::Quadratic { d } => Ok(slope / d[edge]),
        WeightCost::Convex(c) => match c.derivative_inverse(edge, slope) {
            Some(w) => Ok(w.clamp(-w_o, 0.0)),
            None => Ok(bisect_derivative(c.as_ref(), edge, slope, -w_o, 0.0)),
        },
        WeightCost::Concave(_) => unreachable!("concave costs rejected above"),
    }
}

fn bisect_derivative(g: &dyn ConvexWeightCost, edge: usize, slope: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if g.derivative(edge, mid) < slope {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `f(x) = α x²`: convex, increasing on [0, 1].
#[derive(Debug, Clone)]
pub struct QuadraticInfection {
    pub alpha: Vec<f64>,
}

impl InfectionCostFn for QuadraticInfection {
    fn value(&self, node: NodeId, x: f64) -> f64 {
        self.alpha[node] * x * x
    }

    fn derivative(&self, node: NodeId, x: f64) -> f64 {
        2.0 * self.alpha[node] * x
    }
}

/// `g(w) = d w⁴ / 4`, with a closed-form derivative inverse.
#[derive(Debug, Clone)]
pub struct QuarticWeightCost {
    pub d: Vec<f64>,
}

impl ConvexWeightCost for QuarticWeightCost {
    fn value(&self, edge: usize, w: f64) -> f64 {
        0.25 * self.d[edge] * w.powi(4)
    }

    fn derivative(&self, edge: usize, w: f64) -> f64 {
        self.d[edge] * w.powi(3)
    }

    fn derivative_inverse(&self, edge: usize, slope: f64) -> Option<f64> {
        Some((slope / self.d[edge]).cbrt())
    }
}

/// `g(w) = d (cosh w − 1)`: convex with no inverse supplied, so the
/// generic bisection path is used.
#[derive(Debug, Clone)]
pub struct CoshWeightCost {
    pub d: Vec<f64>,
}

impl ConvexWeightCost for CoshWeightCost {
    fn value(&self, edge: usize, w: f64) -> f64 {
        self.d[edge] * (w.cosh() - 1.0)
    }

    fn derivative(&self, edge: usize, w: f64) -> f64 {
        self.d[edge] * w.sinh()
    }
}

/// `g(w) = c √|w|`: concave on each side of zero.
#[derive(Debug, Clone)]
pub struct SqrtWeightCost {
    pub c: Vec<f64>,
}

impl ConcaveWeightCost for SqrtWeightCost {
    fn value(&self, edge: usize, w: f64) -> f64 {
        self.c[edge] * w.abs().sqrt()
    }
}
