//! The 150-node comparison across infection costs. About seven minutes
//! on one core with a release build.
//!
//! ```text
//! cargo run --release --example full_scale_comparison
//! ```

use dvr::cli::scenario::{Overrides, Scenario};
use dvr::gamecore::CostateStorage;
use dvr::netgraph::{degree_stats, largest_real_eigenvalue};
use dvr::solver::no_adaptation_baseline;
use dvr::{dvr_solve, Mode};

fn main() -> dvr::Result<()> {
    let scn = Scenario::preset("scale-free-150", &Overrides::default())?;
    let net = &scn.network;
    println!(
        "{} nodes, mean out-degree {:.3}, eigenvalue {:.4}",
        net.node_count(),
        degree_stats(net).mean_out_degree,
        largest_real_eigenvalue(net)
    );
    // only the diagonal costate is needed for the cost table
    let cfg = dvr::SweepConfig {
        costate: CostateStorage::Diagonal,
        ..scn.sweep.clone()
    };
    println!("{:>6} {:>12} {:>12} {:>12} {:>8}", "alpha", "baseline", "game", "central", "PoA");
    for &alpha in &scn.alphas {
        let costs = scn.costs.with_uniform_alpha(alpha).build();
        let base = no_adaptation_baseline(net, &scn.grid, &scn.x0, &costs)?;
        let game = dvr_solve(net, &scn.grid, &scn.x0, &costs, Mode::Game, &cfg)?;
        let central = dvr_solve(net, &scn.grid, &scn.x0, &costs, Mode::Central, &cfg)?;
        println!(
            "{:>6} {:>12.3} {:>12.3} {:>12.3} {:>8.4}{}",
            alpha,
            base.social_cost,
            game.social_cost,
            central.social_cost,
            game.social_cost / central.social_cost,
            if game.converged && central.converged { "" } else { "  (not converged)" }
        );
    }
    Ok(())
}
