//! Decentralized virus-resistant weight adaptation on directed networks.
//!
//! Nodes of a weighted digraph follow the SIS mean-field dynamics
//!
//! ```text
//! ẋ_i = (1 − x_i) Σ_{j ∈ out(i)} u_ij β_j x_j − σ_i x_i
//! ```
//!
//! where an edge `i → j` means node `i` can be infected by node `j`. Each
//! node owns the weights of its outgoing edges and trades its own infection
//! cost against the cost of moving those weights away from their nominal
//! values. The crate solves the resulting open-loop Nash game, the
//! centralized social optimum, and the penalized game whose equilibrium
//! coincides with the social optimum, all with one forward-backward sweep.
//!
//! The `examples/` directory is the best tour:
//!
//! | example | shows |
//! |---|---|
//! | `outbreak_diagnostics` | networks, degree stats, the outbreak eigenvalue |
//! | `nash_weight_adaptation` | solving the selfish game on a scale-free network |
//! | `social_optimum_vs_nash` | game vs. centralized vs. penalized game |
//! | `penalty_mechanism` | reachability penalty on a small DAG |
//! | `markov_vs_mean_field` | stochastic simulation against the ODE |
//! | `equilibrium_oracles` | deviation probes, brute force, adjoint checks |
//! | `concave_bang_bang` | switching controls for concave weight costs |
//! | `full_scale_comparison` | the large comparison run (slow) |
//!
//! ```
//! use dvr::{dvr_solve, CostModel, Mode, Network, SweepConfig, TimeGrid};
//!
//! let net = Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1).unwrap();
//! let costs = CostModel::uniform(&net, 1.0, 0.2);
//! let grid = TimeGrid::new(20.0, 200).unwrap();
//! let report = dvr_solve(&net, &grid, &[0.16, 0.16], &costs, Mode::Game, &SweepConfig::default())
//!     .unwrap();
//! assert!(report.converged);
//! ```

pub mod cli;
pub mod costmodel;
pub mod dynamics;
mod error;
pub mod gamecore;
pub mod netgraph;
pub mod oracle;
pub mod solver;

pub use costmodel::{CostModel, InfectionCost, PenaltyMode, WeightCost};
pub use dynamics::{
    integrate_forward, simulate_markov, ControlTrajectory, MarkovEstimate, StateTrajectory,
    TimeGrid,
};
pub use error::{Error, Result};
pub use gamecore::{integrate_backward, CostateTrajectory, Mode};
pub use netgraph::{generate_barabasi_albert, Network, NodeId, ReachSets};
pub use solver::{dvr_solve, Acceleration, InitialControl, SolveReport, SweepConfig};
