//! Selfish weight adaptation: every node lowers the weights of its own
//! links just enough to balance infection risk against lost interaction.
//!
//! ```text
//! cargo run --release --example nash_weight_adaptation -- 30
//! ```

use dvr::{
    dvr_solve, generate_barabasi_albert, Acceleration, CostModel, Mode,
    SweepConfig, TimeGrid,
};

fn main() -> dvr::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let net = generate_barabasi_albert(n, 3, 7)?;
    let grid = TimeGrid::new(20.0, 2000)?;
    let x0 = vec![0.16; n];
    let costs = CostModel::uniform(&net, 1.0, 0.2);

    let cfg = SweepConfig {
        damping: 1.0,
        acceleration: Acceleration::Anderson { depth: 6 },
        ..SweepConfig::default()
    };
    let game = dvr_solve(&net, &grid, &x0, &costs, Mode::Game, &cfg)?;
    let base = dvr::solver::no_adaptation_baseline(&net, &grid, &x0, &costs)?;

    println!(
        "game: converged {} after {} sweeps (residual {:.1e})",
        game.converged, game.iterations, game.final_residual
    );
    for (it, r) in game.residual_history.iter().enumerate() {
        println!("  sweep {:>3}: {r:.3e}", it + 1);
    }
    println!("J_o without adaptation {:.3}, at equilibrium {:.3}", base.social_cost, game.social_cost);

    // the hub adapts hardest
    let hub = (0..n).max_by_key(|&i| net.out_degree(i)).unwrap_or(0);
    println!("hub {hub}: {} links, J = {:.3}", net.out_degree(hub), game.player_costs[hub]);
    println!("{:>6} {:>8} {:>12}", "t", "x_hub", "mean u_hub");
    for k in (0..grid.len()).step_by(grid.steps() / 10) {
        let links = net.out_edges(hub);
        let mean_u = game.control.at(k)[links.clone()].iter().sum::<f64>() / links.len() as f64;
        println!("{:>6.1} {:>8.4} {:>12.4}", grid.time(k), game.state.at(k)[hub], mean_u);
    }
    Ok(())
}
