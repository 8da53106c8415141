//! Independent checks of what the sweep returns, for small instances.
//!
//! None of these use the costate machinery except to read the value under
//! test: deviation probes and the brute-force search only integrate the
//! state forward and evaluate costs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::costmodel::{penalty_integral, player_cost, social_cost, CostModel, PenaltyMode};
use crate::dynamics::{integrate_forward, ControlTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::gamecore::Mode;
use crate::netgraph::{Network, NodeId};
use crate::solver::{dvr_solve, mode_player_cost, SolveReport, SweepConfig};

pub const BEST_RESPONSE_MAX_NODES: usize = 3;
pub const BEST_RESPONSE_MAX_SEGMENTS: usize = 4;
pub const BEST_RESPONSE_MAX_LEVELS: usize = 11;
pub const BEST_RESPONSE_MAX_CANDIDATES: usize = 1_000_000;
pub const STRUCTURAL_MAX_NODES: usize = 8;

/// A unilateral bump of `±delta` on one edge over grid nodes
/// `start..=end`, projected back onto `[0, w^o]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationProbe {
    pub player: NodeId,
    pub edge: usize,
    pub start: usize,
    pub end: usize,
    pub delta: f64,
}

impl DeviationProbe {
    fn validate(&self, net: &Network, grid: &TimeGrid) -> Result<()> {
        if self.edge >= net.edge_count() {
            return Err(Error::InfeasibleProbe(format!("edge {} does not exist", self.edge)));
        }
        if net.edge(self.edge).from != self.player {
            return Err(Error::InfeasibleProbe(format!(
                "edge {} is not controlled by player {}",
                self.edge, self.player
            )));
        }
        if self.start > self.end || self.end > grid.steps() {
            return Err(Error::InfeasibleProbe(format!(
                "grid range {}..={} outside 0..={}",
                self.start,
                self.end,
                grid.steps()
            )));
        }
        if !(self.delta >= 0.0 && self.delta <= net.edge(self.edge).weight) {
            return Err(Error::InfeasibleProbe(format!(
                "magnitude {} outside [0, w^o]",
                self.delta
            )));
        }
        Ok(())
    }

    fn apply(&self, net: &Network, u: &ControlTrajectory, sign: f64) -> ControlTrajectory {
        let w_o = net.edge(self.edge).weight;
        let mut v = u.clone();
        for k in self.start..=self.end {
            let slot = &mut v.at_mut(k)[self.edge];
            *slot = (*slot + sign * self.delta).clamp(0.0, w_o);
        }
        v
    }
}

/// `count` probes on interior grid intervals, each on a random edge.
pub fn random_probes(net: &Network, grid: &TimeGrid, count: usize, delta: f64, seed: u64) -> Vec<DeviationProbe> {
    if net.edge_count() == 0 || grid.steps() < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_len = (grid.steps() / 10).max(1);
    (0..count)
        .map(|_| {
            let edge = rng.random_range(0..net.edge_count());
            let start = rng.random_range(1..grid.steps());
            let len = rng.random_range(0..max_len);
            DeviationProbe {
                player: net.edge(edge).from,
                edge,
                start,
                end: (start + len).min(grid.steps() - 1),
                delta,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationOutcome {
    /// `max (J_i(eq) − J_i(perturbed)) / J_i(eq)` over probes and signs.
    pub worst_relative_decrease: f64,
    pub per_probe: Vec<f64>,
}

/// Re-integrate with each probe applied (both signs) and report the best
/// relative improvement any player found. The cost is the one the player
/// minimizes in the report's mode.
pub fn ne_deviation_check(
    report: &SolveReport,
    net: &Network,
    costs: &CostModel,
    probes: &[DeviationProbe],
) -> Result<DeviationOutcome> {
    let mode = report
        .mode
        .ok_or_else(|| Error::InvalidParameter("the baseline has no equilibrium to probe".into()))?;
    let u = &report.control;
    let grid = *u.grid();
    let x0 = report.state.initial();
    for p in probes {
        p.validate(net, &grid)?;
    }
    let x = integrate_forward(net, &grid, x0, u)?;
    let per_probe = probes
        .par_iter()
        .map(|probe| {
            let base = mode_player_cost(net, &x, u, costs, mode, probe.player)?;
            let mut worst = f64::NEG_INFINITY;
            for sign in [1.0, -1.0] {
                let v = probe.apply(net, u, sign);
                let xv = integrate_forward(net, &grid, x0, &v)?;
                let cost = mode_player_cost(net, &xv, &v, costs, mode, probe.player)?;
                worst = worst.max((base - cost) / base.abs().max(f64::MIN_POSITIVE));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeviationOutcome {
        worst_relative_decrease: per_probe.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_probe,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub cost: f64,
    /// `segment_values[a][s]`: value on the player's `a`-th out-edge in
    /// segment `s`.
    pub segment_values: Vec<Vec<f64>>,
    pub control: ControlTrajectory,
    pub candidates: usize,
}

fn segment_of(k: usize, steps: usize, segments: usize) -> usize {
    (k * segments / steps).min(segments - 1)
}

/// Exhaustive search over piecewise-constant controls for `player` with
/// every other edge held at `opponents`. Each segment value is one of
/// `levels` evenly spaced points of `[0, w^o]`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_best_response(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    costs: &CostModel,
    opponents: &ControlTrajectory,
    player: NodeId,
    levels: usize,
    segments: usize,
) -> Result<BestResponse> {
    let n = net.node_count();
    if n > BEST_RESPONSE_MAX_NODES {
        return Err(Error::InstanceTooLarge {
            n,
            limit: BEST_RESPONSE_MAX_NODES,
        });
    }
    if player >= n {
        return Err(Error::NodeOutOfRange { node: player, n });
    }
    if !(1..=BEST_RESPONSE_MAX_SEGMENTS).contains(&segments) {
        return Err(Error::InvalidParameter(format!(
            "segments must lie in 1..={BEST_RESPONSE_MAX_SEGMENTS}, got {segments}"
        )));
    }
    if !(2..=BEST_RESPONSE_MAX_LEVELS).contains(&levels) {
        return Err(Error::InvalidParameter(format!(
            "levels must lie in 2..={BEST_RESPONSE_MAX_LEVELS}, got {levels}"
        )));
    }
    let owned: Vec<usize> = net.out_edges(player).collect();
    let digits = owned.len() * segments;
    let candidates = (levels as f64).powi(digits as i32);
    if candidates > BEST_RESPONSE_MAX_CANDIDATES as f64 {
        return Err(Error::SearchSpaceTooLarge {
            candidates,
            cap: BEST_RESPONSE_MAX_CANDIDATES,
        });
    }
    let candidates = candidates as usize;
    let opponents = opponents.resample(*grid)?;
    if opponents.edge_count() != net.edge_count() {
        return Err(Error::dim("opponent control edges", net.edge_count(), opponents.edge_count()));
    }

    let decode = |mut c: usize| -> Vec<Vec<f64>> {
        let mut vals = vec![vec![0.0; segments]; owned.len()];
        for (a, &e) in owned.iter().enumerate() {
            let w_o = net.edge(e).weight;
            for v in vals[a].iter_mut() {
                *v = w_o * (c % levels) as f64 / (levels - 1) as f64;
                c /= levels;
            }
        }
        vals
    };
    let build = |vals: &[Vec<f64>]| -> ControlTrajectory {
        let mut u = opponents.clone();
        for k in 0..grid.len() {
            let s = segment_of(k, grid.steps(), segments);
            let row = u.at_mut(k);
            for (a, &e) in owned.iter().enumerate() {
                row[e] = vals[a][s];
            }
        }
        u
    };

    let (cost, best) = (0..candidates)
        .into_par_iter()
        .map(|c| -> Result<(f64, usize)> {
            let u = build(&decode(c));
            let x = integrate_forward(net, grid, x0, &u)?;
            Ok((player_cost(net, &x, &u, costs, player)?, c))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least one candidate");
    let segment_values = decode(best);
    Ok(BestResponse {
        cost,
        control: build(&segment_values),
        segment_values,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointCheck {
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Compare `p_ij(0)` with a central difference of player `i`'s mode cost
/// in `x_j(0)`, controls frozen at the report's.
pub fn adjoint_gradient_check(
    report: &SolveReport,
    net: &Network,
    costs: &CostModel,
    i: NodeId,
    j: NodeId,
    delta: f64,
) -> Result<AdjointCheck> {
    let n = net.node_count();
    for node in [i, j] {
        if node >= n {
            return Err(Error::NodeOutOfRange { node, n });
        }
    }
    let mode = report
        .mode
        .ok_or_else(|| Error::InvalidParameter("the baseline carries no costate".into()))?;
    let p = report
        .costate
        .as_ref()
        .ok_or(Error::CostateUnavailable("report has no costate"))?;
    let adjoint = p
        .entry(0, i, j)
        .ok_or(Error::CostateUnavailable("only the diagonal was kept"))?;
    let x0 = report.state.initial();
    if !(delta > 0.0) || x0[j] - delta < 0.0 || x0[j] + delta > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "x_{j}(0) ± {delta} leaves [0, 1]"
        )));
    }
    let u = &report.control;
    let grid = *u.grid();
    let cost_at = |shift: f64| -> Result<f64> {
        let mut x0s = x0.to_vec();
        x0s[j] += shift;
        let x = integrate_forward(net, &grid, &x0s, u)?;
        mode_player_cost(net, &x, u, costs, mode, i)
    };
    let finite_difference = (cost_at(delta)? - cost_at(-delta)?) / (2.0 * delta);
    Ok(AdjointCheck {
        adjoint,
        finite_difference,
        relative_error: (finite_difference - adjoint).abs() / adjoint.abs().max(1e-12),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCheck {
    /// `‖u_penalty-full − u_central‖_∞`.
    pub control_gap: f64,
    /// `‖u_penalty-reach − u_penalty-full‖_∞`.
    pub reach_gap: f64,
    /// `max |ΔĴ_i − ΔJ_o|` over the substitutions.
    pub identity_max_error: f64,
    pub social_cost: f64,
    pub substitutions: usize,
}

fn converged(report: SolveReport) -> Result<SolveReport> {
    if report.converged {
        Ok(report)
    } else {
        Err(Error::NotConverged {
            what: report.scheme().to_string(),
            iterations: report.iterations,
            residual: report.final_residual,
        })
    }
}

/// Solve central, penalty-full and penalty-reach modes and compare their
/// controls; then check on random unilateral substitutions `u_i → v_i`
/// that the change in the full-penalty cost `Ĵ_i` equals the change in
/// `J_o`.
pub fn potential_equivalence_check(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    costs: &CostModel,
    cfg: &SweepConfig,
    substitutions: usize,
    seed: u64,
) -> Result<PotentialCheck> {
    let central = converged(dvr_solve(net, grid, x0, costs, Mode::Central, cfg)?)?;
    let full = converged(dvr_solve(net, grid, x0, costs, Mode::PenaltyFull, cfg)?)?;
    let reach = converged(dvr_solve(net, grid, x0, costs, Mode::PenaltyReach, cfg)?)?;
    let control_gap = full.control.max_abs_diff(&central.control)?;
    let reach_gap = reach.control.max_abs_diff(&full.control)?;

    let u = &central.control;
    let x = &central.state;
    let j_o = central.social_cost;
    let controllers: Vec<NodeId> = (0..net.node_count()).filter(|&i| net.out_degree(i) > 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    if !controllers.is_empty() {
        for _ in 0..substitutions {
            let i = controllers[rng.random_range(0..controllers.len())];
            let segs = 4;
            let mut v = u.clone();
            let picks: Vec<Vec<f64>> = net
                .out_edges(i)
                .map(|e| (0..segs).map(|_| rng.random::<f64>() * net.edge(e).weight).collect())
                .collect();
            for k in 0..grid.len() {
                let s = segment_of(k, grid.steps(), segs);
                for (a, e) in net.out_edges(i).enumerate() {
                    v.at_mut(k)[e] = picks[a][s];
                }
            }
            let xv = integrate_forward(net, grid, x0, &v)?;
            let hat = |x, u| -> Result<f64> {
                Ok(player_cost(net, x, u, costs, i)? + penalty_integral(net, costs, PenaltyMode::Full, None, i, x)?)
            };
            let d_hat = hat(&xv, &v)? - hat(x, u)?;
            let d_o = social_cost(net, &xv, &v, costs)? - j_o;
            worst = worst.max((d_hat - d_o).abs());
        }
    }
    Ok(PotentialCheck {
        control_gap,
        reach_gap,
        identity_max_error: worst,
        social_cost: j_o,
        substitutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::no_adaptation_baseline;

    fn two_node() -> Network {
        Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1).unwrap()
    }

    #[test]
    fn zero_delta_probe_is_exactly_zero() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let r = dvr_solve(&net, &grid, &[0.16, 0.16], &costs, Mode::Game, &SweepConfig::default()).unwrap();
        let probes = random_probes(&net, &grid, 5, 0.0, 1);
        let out = ne_deviation_check(&r, &net, &costs, &probes).unwrap();
        assert_eq!(out.worst_relative_decrease, 0.0);
    }

    #[test]
    fn probe_validation() {
        let net = two_node();
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let bad = [
            DeviationProbe { player: 1, edge: 0, start: 1, end: 2, delta: 1e-3 },
            DeviationProbe { player: 0, edge: 0, start: 5, end: 2, delta: 1e-3 },
            DeviationProbe { player: 0, edge: 0, start: 1, end: 201, delta: 1e-3 },
            DeviationProbe { player: 0, edge: 0, start: 1, end: 2, delta: 2.0 },
        ];
        for p in bad {
            assert!(matches!(p.validate(&net, &grid), Err(Error::InfeasibleProbe(_))));
        }
        for p in random_probes(&net, &grid, 50, 1e-3, 9) {
            p.validate(&net, &grid).unwrap();
            assert!(p.start >= 1 && p.end < grid.steps());
        }
    }

    #[test]
    fn brute_force_guards() {
        let net = Network::uniform(4, [(0, 1, 1.0)], 0.04, 0.1).unwrap();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 20).unwrap();
        let u = ControlTrajectory::original_weights(&net, grid);
        assert!(matches!(
            brute_force_best_response(&net, &grid, &[0.1; 4], &costs, &u, 0, 3, 2),
            Err(Error::InstanceTooLarge { .. })
        ));
        let net = two_node();
        let u = ControlTrajectory::original_weights(&net, grid);
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        assert!(brute_force_best_response(&net, &grid, &[0.1; 2], &costs, &u, 0, 12, 2).is_err());
        assert!(brute_force_best_response(&net, &grid, &[0.1; 2], &costs, &u, 0, 3, 5).is_err());
        let dense = Network::uniform(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0)], 0.04, 0.1).unwrap();
        let costs = CostModel::uniform(&dense, 1.0, 0.2);
        let u = ControlTrajectory::original_weights(&dense, grid);
        assert!(matches!(
            brute_force_best_response(&dense, &grid, &[0.1; 3], &costs, &u, 0, 11, 4),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn zero_infection_best_response_keeps_weights() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 40).unwrap();
        let u = ControlTrajectory::original_weights(&net, grid);
        let br = brute_force_best_response(&net, &grid, &[0.0, 0.0], &costs, &u, 0, 5, 2).unwrap();
        assert_eq!(br.cost, 0.0);
        assert!(br.segment_values[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn adjoint_needs_a_costate() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let b = no_adaptation_baseline(&net, &grid, &[0.16, 0.16], &costs).unwrap();
        assert!(adjoint_gradient_check(&b, &net, &costs, 0, 0, 1e-5).is_err());
    }

    #[test]
    fn adjoint_decoupled_closed_form() {
        let net = Network::uniform(1, std::iter::empty(), 0.04, 0.1).unwrap();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 2000).unwrap();
        let r = dvr_solve(&net, &grid, &[0.16], &costs, Mode::Game, &SweepConfig::default()).unwrap();
        let c = adjoint_gradient_check(&r, &net, &costs, 0, 0, 1e-5).unwrap();
        let exact = 1.0 / 0.1 * (1.0 - (-2.0f64).exp());
        assert!((c.adjoint - exact).abs() < 1e-8);
        assert!((c.finite_difference - exact).abs() < 1e-6);
    }

    #[test]
    fn identity_without_substitution_is_zero() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let c = potential_equivalence_check(&net, &grid, &[0.16, 0.16], &costs, &SweepConfig::default(), 0, 1)
            .unwrap();
        assert_eq!(c.identity_max_error, 0.0);
        assert_eq!(c.control_gap, 0.0);
        assert_eq!(c.reach_gap, 0.0);
    }
}
