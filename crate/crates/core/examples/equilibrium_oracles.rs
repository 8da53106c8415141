//! Independent checks on a computed equilibrium: random unilateral
//! deviations, exhaustive best responses, finite-difference costates and
//! the potential identity.
//!
//! ```text
//! cargo run --release --example equilibrium_oracles
//! ```

use dvr::oracle::{
    adjoint_gradient_check, brute_force_best_response, ne_deviation_check, potential_equivalence_check,
    random_probes,
};
use dvr::{dvr_solve, CostModel, Mode, Network, SweepConfig, TimeGrid};

fn main() -> dvr::Result<()> {
    let net = Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1)?;
    let grid = TimeGrid::new(20.0, 2000)?;
    let x0 = [0.16, 0.16];
    let costs = CostModel::uniform(&net, 1.0, 0.2);
    let cfg = SweepConfig::default();
    let game = dvr_solve(&net, &grid, &x0, &costs, Mode::Game, &cfg)?;
    println!("equilibrium costs {:?}", game.player_costs);

    let probes = random_probes(&net, &grid, 20, 1e-3, 1);
    let dev = ne_deviation_check(&game, &net, &costs, &probes)?;
    println!("best relative gain from 20 deviations: {:.2e}", dev.worst_relative_decrease);

    for player in 0..2 {
        let br = brute_force_best_response(&net, &grid, &x0, &costs, &game.control, player, 11, 3)?;
        println!(
            "player {player}: brute force {:.6} over {} candidates, equilibrium {:.6}, segments {:?}",
            br.cost, br.candidates, game.player_costs[player], br.segment_values[0]
        );
    }

    for (i, j) in [(0, 0), (0, 1), (1, 0)] {
        let c = adjoint_gradient_check(&game, &net, &costs, i, j, 1e-5)?;
        println!(
            "p_{i}{j}(0) = {:.8}, finite difference {:.8}, relative error {:.1e}",
            c.adjoint, c.finite_difference, c.relative_error
        );
    }

    let pot = potential_equivalence_check(&net, &grid, &x0, &costs, &cfg, 10, 3)?;
    println!(
        "penalty vs central gap {:.1e}, reach gap {:.1e}, identity error {:.1e} (J_o {:.6})",
        pot.control_gap, pot.reach_gap, pot.identity_max_error, pot.social_cost
    );
    Ok(())
}
