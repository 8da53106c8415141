//! With a concave cost on weight changes, partial cuts are never worth it:
//! each link is either kept at full weight or dropped.
//!
//! ```text
//! cargo run --release --example concave_bang_bang
//! ```

use std::sync::Arc;

use dvr::costmodel::SqrtWeightCost;
use dvr::{dvr_solve, CostModel, InfectionCost, Mode, Network, SweepConfig, TimeGrid, WeightCost};

fn main() -> dvr::Result<()> {
    let net = Network::uniform(
        4,
        [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)],
        0.3,
        0.1,
    )?;
    let grid = TimeGrid::new(20.0, 1000)?;
    let x0 = [0.3, 0.1, 0.2, 0.4];
    let costs = CostModel {
        infection: InfectionCost::linear_uniform(2.0, 4),
        weight: WeightCost::Concave(Arc::new(SqrtWeightCost {
            c: vec![0.05; net.edge_count()],
        })),
    };
    // responses are all-or-nothing, so blending only delays the switch pattern
    let cfg = SweepConfig {
        damping: 1.0,
        divergence_window: 50,
        ..SweepConfig::default()
    };
    let r = dvr_solve(&net, &grid, &x0, &costs, Mode::Game, &cfg)?;
    println!("converged {} after {} sweeps, J_o = {:.4}", r.converged, r.iterations, r.social_cost);

    for (e, edge) in net.edges().iter().enumerate() {
        let u = r.control.edge(e);
        let switches: Vec<f64> = (1..u.len())
            .filter(|&k| (u[k] == 0.0) != (u[k - 1] == 0.0))
            .map(|k| grid.time(k))
            .collect();
        let off = u.iter().filter(|&&v| v == 0.0).count() as f64 / u.len() as f64;
        println!(
            "link {} -> {}: cut {:.0}% of the horizon, switches at {:?}",
            edge.from,
            edge.to,
            100.0 * off,
            switches
        );
    }
    Ok(())
}
