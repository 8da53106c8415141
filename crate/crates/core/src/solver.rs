//! Forward-backward sweep for the game, penalized game and central modes.
//!
//! Each iteration integrates the state forward under the current controls,
//! integrates the costates backward, and replaces the controls by the
//! pointwise Hamiltonian minimizers `û`. The sweep stops once
//! `‖û − u‖_∞ < ε`; otherwise it moves to `(1 − θ) u + θ û`, or, with
//! [`Acceleration::Anderson`], to a least-squares combination of the last
//! few iterates projected back onto `[0, w^o]`.

use std::collections::VecDeque;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costmodel::{penalty_integral, player_costs, CostModel, PenaltyMode};
use crate::dynamics::{integrate_forward, validate_initial_state, ControlTrajectory, StateTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::gamecore::{
    bang_bang_control, control_update, integrate_backward_with, CostateStorage, CostateTrajectory, Mode,
};
use crate::netgraph::{Network, NodeId, ReachSets};

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialControl {
    /// `u⁰ ≡ w^o`.
    #[default]
    OriginalWeights,
    /// `u⁰ ≡ 0`.
    Zero,
    Supplied(ControlTrajectory),
}

/// How the next iterate is formed from `u` and `û`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acceleration {
    /// `(1 − θ) u + θ û`.
    #[default]
    None,
    /// Anderson mixing over the last `depth` residuals, projected onto
    /// `[0, w^o]`. History is dropped whenever the residual is above the
    /// best seen so far.
    Anderson { depth: usize },
}

#[derive(Debug, Default)]
struct AndersonMixer {
    depth: usize,
    du: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl AndersonMixer {
    fn new(depth: usize) -> Self {
        AndersonMixer {
            depth,
            ..Default::default()
        }
    }

    fn next(&mut self, u: &[f64], f: &[f64], theta: f64, restart: bool) -> Vec<f64> {
        if restart {
            self.du.clear();
            self.df.clear();
        }
        if let Some((pu, pf)) = self.prev.take() {
            if !restart {
                self.du.push_back(u.iter().zip(&pu).map(|(a, b)| a - b).collect());
                self.df.push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
                if self.du.len() > self.depth {
                    self.du.pop_front();
                    self.df.pop_front();
                }
            }
        }
        self.prev = Some((u.to_vec(), f.to_vec()));

        let mut out: Vec<f64> = u.iter().zip(f).map(|(a, b)| a + theta * b).collect();
        let m = self.df.len();
        if m == 0 {
            return out;
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let gram = DMatrix::from_fn(m, m, |a, b| dot(&self.df[a], &self.df[b]));
        let rhs = DVector::from_fn(m, |a, _| dot(&self.df[a], f));
        let eps = 1e-12 * gram.trace().max(f64::MIN_POSITIVE);
        let Ok(gamma) = gram.svd(true, true).solve(&rhs, eps) else {
            return out;
        };
        for a in 0..m {
            let g = gamma[a];
            for (o, (du, df)) in out.iter_mut().zip(self.du[a].iter().zip(&self.df[a])) {
                *o -= g * (du + theta * df);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// `θ` in `u ← (1 − θ) u + θ û`.
    pub damping: f64,
    pub init: InitialControl,
    pub acceleration: Acceleration,
    /// Costate kept in the final report.
    pub costate: CostateStorage,
    /// Consecutive residual increases tolerated before giving up.
    pub divergence_window: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilon: 1e-6,
            max_iters: 500,
            damping: 0.5,
            init: InitialControl::OriginalWeights,
            acceleration: Acceleration::None,
            costate: CostateStorage::Full,
            divergence_window: 10,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.acceleration == (Acceleration::Anderson { depth: 0 }) {
            return Err(Error::InvalidParameter("Anderson depth must be at least 1".into()));
        }
        if self.divergence_window == 0 {
            return Err(Error::InvalidParameter("divergence_window must be at least 1".into()));
        }
        Ok(())
    }
}

/// What a sweep produced. `mode` is `None` for the no-adaptation baseline.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub mode: Option<Mode>,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    /// `J_i` without penalty terms.
    pub player_costs: Vec<f64>,
    /// `J_o = Σ J_i`.
    pub social_cost: f64,
    pub state: StateTrajectory,
    pub control: ControlTrajectory,
    pub costate: Option<CostateTrajectory>,
}

/// Serializable digest of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub scheme: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub social_cost: f64,
    pub player_costs: Vec<f64>,
}

impl SolveReport {
    pub fn scheme(&self) -> &'static str {
        self.mode.map_or("baseline", Mode::as_str)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            scheme: self.scheme().to_string(),
            converged: self.converged,
            iterations: self.iterations,
            final_residual: self.final_residual,
            social_cost: self.social_cost,
            player_costs: self.player_costs.clone(),
        }
    }
}

fn prepare(net: &Network, grid: &TimeGrid, x0: &[f64], costs: &CostModel) -> Result<()> {
    validate_initial_state(net, x0)?;
    costs.validate(net)?;
    if grid.t_final() <= 0.0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    Ok(())
}

fn initial_control(net: &Network, grid: &TimeGrid, init: &InitialControl) -> Result<ControlTrajectory> {
    let u = match init {
        InitialControl::OriginalWeights => ControlTrajectory::original_weights(net, *grid),
        InitialControl::Zero => ControlTrajectory::zeros(net, *grid),
        InitialControl::Supplied(u) => {
            if u.edge_count() != net.edge_count() {
                return Err(Error::dim("initial control edges", net.edge_count(), u.edge_count()));
            }
            u.resample(*grid)?
        }
    };
    u.check_admissible(net)?;
    Ok(u)
}

fn reach_for(net: &Network, mode: Mode) -> Option<ReachSets> {
    (mode == Mode::PenaltyReach).then(|| net.reachability())
}

/// One undamped sweep `u ↦ û`.
pub fn sweep_map(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    costs: &CostModel,
    mode: Mode,
    u: &ControlTrajectory,
) -> Result<ControlTrajectory> {
    prepare(net, grid, x0, costs)?;
    let reach = reach_for(net, mode);
    step(net, grid, x0, costs, mode, reach.as_ref(), u)
}

fn step(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    costs: &CostModel,
    mode: Mode,
    reach: Option<&ReachSets>,
    u: &ControlTrajectory,
) -> Result<ControlTrajectory> {
    let x = integrate_forward(net, grid, x0, u)?;
    let p = integrate_backward_with(net, &x, u, costs, mode, reach, CostateStorage::Diagonal)?;
    if costs.weight.is_concave() {
        bang_bang_control(net, costs, &p, &x)
    } else {
        control_update(net, costs, &p, &x)
    }
}

/// Run the sweep in the given mode.
///
/// Running out of iterations is not an error: the report comes back with
/// `converged = false`. Ten (by default) consecutive residual increases
/// abort with [`Error::Diverged`].
pub fn dvr_solve(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    costs: &CostModel,
    mode: Mode,
    cfg: &SweepConfig,
) -> Result<SolveReport> {
    prepare(net, grid, x0, costs)?;
    cfg.validate()?;
    let reach = reach_for(net, mode);
    let mut u = initial_control(net, grid, &cfg.init)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut rising = 0;
    let mut mixer = match cfg.acceleration {
        Acceleration::None => None,
        Acceleration::Anderson { depth } => Some(AndersonMixer::new(depth)),
    };

    for iter in 1..=cfg.max_iters {
        let u_hat = step(net, grid, x0, costs, mode, reach.as_ref(), &u)?;
        let residual = u_hat.max_abs_diff(&u)?;
        debug!("{mode} iteration {iter}: residual {residual:.3e}");
        if history.last().is_some_and(|&prev| residual > prev) {
            rising += 1;
        } else {
            rising = 0;
        }
        history.push(residual);
        if residual < cfg.epsilon {
            u = u_hat;
            converged = true;
            break;
        }
        if rising >= cfg.divergence_window {
            return Err(Error::Diverged {
                iterations: iter,
                residual,
                window: cfg.divergence_window,
            });
        }
        match (&mut mixer, cfg.acceleration) {
            (Some(mixer), _) => {
                let f: Vec<f64> = u_hat.as_slice().iter().zip(u.as_slice()).map(|(a, b)| a - b).collect();
                let best = history.iter().copied().fold(f64::INFINITY, f64::min);
                let next = mixer.next(u.as_slice(), &f, cfg.damping, residual > best);
                let m = net.edge_count();
                for (q, (slot, v)) in u.values_mut().iter_mut().zip(next).enumerate() {
                    *slot = v.clamp(0.0, net.edge(q % m).weight);
                }
            }
            _ => u.blend_toward(&u_hat, cfg.damping),
        }
    }

    if converged {
        info!("{mode} converged after {} iterations", history.len());
    } else {
        warn!(
            "{mode} stopped after {} iterations with residual {:.3e}",
            history.len(),
            history.last().copied().unwrap_or(f64::NAN)
        );
    }

    let x = integrate_forward(net, grid, x0, &u)?;
    let p = integrate_backward_with(net, &x, &u, costs, mode, reach.as_ref(), cfg.costate)?;
    let player_costs = player_costs(net, &x, &u, costs)?;
    Ok(SolveReport {
        mode: Some(mode),
        converged,
        iterations: history.len(),
        final_residual: history.last().copied().unwrap_or(0.0),
        residual_history: history,
        social_cost: player_costs.iter().sum(),
        player_costs,
        state: x,
        control: u,
        costate: Some(p),
    })
}

/// Costs with the nominal weights held throughout (`u ≡ w^o`).
pub fn no_adaptation_baseline(
    net: &Network,
    grid: &TimeGrid,
    x0: &[f64],
    costs: &CostModel,
) -> Result<SolveReport> {
    prepare(net, grid, x0, costs)?;
    let u = ControlTrajectory::original_weights(net, *grid);
    let x = integrate_forward(net, grid, x0, &u)?;
    let player_costs = player_costs(net, &x, &u, costs)?;
    Ok(SolveReport {
        mode: None,
        converged: true,
        iterations: 0,
        final_residual: 0.0,
        residual_history: Vec::new(),
        social_cost: player_costs.iter().sum(),
        player_costs,
        state: x,
        control: u,
        costate: None,
    })
}

/// The cost player `i` minimizes in `mode`: `J_i`, plus the penalty
/// integral in the penalty modes. Central mode returns `J_o`.
pub fn mode_player_cost(
    net: &Network,
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costs: &CostModel,
    mode: Mode,
    i: NodeId,
) -> Result<f64> {
    let own = crate::costmodel::player_cost(net, x, u, costs, i)?;
    match mode {
        Mode::Game => Ok(own),
        Mode::PenaltyFull => Ok(own + penalty_integral(net, costs, PenaltyMode::Full, None, i, x)?),
        Mode::PenaltyReach => {
            let reach = net.reachability();
            Ok(own + penalty_integral(net, costs, PenaltyMode::Reachability, Some(&reach), i, x)?)
        }
        Mode::Central => Ok(player_costs(net, x, u, costs)?.iter().sum()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> Network {
        Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1).unwrap()
    }

    #[test]
    fn zero_infection_converges_immediately() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        for mode in Mode::ALL {
            let r = dvr_solve(&net, &grid, &[0.0, 0.0], &costs, mode, &SweepConfig::default()).unwrap();
            assert!(r.converged);
            assert_eq!(r.iterations, 1);
            assert_eq!(r.social_cost, 0.0);
            assert!(r.control.as_slice().iter().all(|&v| v == 1.0));
        }
        let b = no_adaptation_baseline(&net, &grid, &[0.0, 0.0], &costs).unwrap();
        assert_eq!(b.social_cost, 0.0);
        assert!(b.costate.is_none());
    }

    #[test]
    fn converged_implies_small_residual() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 400).unwrap();
        let cfg = SweepConfig::default();
        let r = dvr_solve(&net, &grid, &[0.16, 0.16], &costs, Mode::Game, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.final_residual < cfg.epsilon);
        // terminal controls are nominal
        assert_eq!(r.control.at(grid.steps()), &[1.0, 1.0]);
    }

    #[test]
    fn iteration_cap_is_reported_not_raised() {
        let net = two_node();
        let costs = CostModel::uniform(&net, 5.0, 0.2);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let cfg = SweepConfig {
            max_iters: 2,
            epsilon: 1e-14,
            ..SweepConfig::default()
        };
        let r = dvr_solve(&net, &grid, &[0.5, 0.5], &costs, Mode::Game, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn config_validation() {
        for cfg in [
            SweepConfig { epsilon: 0.0, ..SweepConfig::default() },
            SweepConfig { damping: 0.0, ..SweepConfig::default() },
            SweepConfig { damping: 1.5, ..SweepConfig::default() },
            SweepConfig { max_iters: 0, ..SweepConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn deterministic_reports() {
        let net = crate::netgraph::generate_barabasi_albert(12, 2, 3).unwrap();
        let costs = CostModel::uniform(&net, 1.0, 0.2);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let x0 = vec![0.16; 12];
        let a = dvr_solve(&net, &grid, &x0, &costs, Mode::Game, &SweepConfig::default()).unwrap();
        let b = dvr_solve(&net, &grid, &x0, &costs, Mode::Game, &SweepConfig::default()).unwrap();
        assert_eq!(a.control, b.control);
        assert_eq!(a.player_costs, b.player_costs);
    }
}
