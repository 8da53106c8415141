//! Price of anarchy: no adaptation, the selfish equilibrium, the central
//! optimum and the penalized game on the 50-node preset. Takes a couple
//! of minutes on one core.
//!
//! ```text
//! cargo run --release --example social_optimum_vs_nash -- 1.5
//! ```

use dvr::cli::scenario::{Overrides, Scenario};
use dvr::solver::no_adaptation_baseline;
use dvr::{dvr_solve, Mode};

fn main() -> dvr::Result<()> {
    let alpha: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let scn = Scenario::preset("scale-free-50", &Overrides::default())?;
    let costs = scn.costs.with_uniform_alpha(alpha).build();
    let (net, grid, x0) = (&scn.network, &scn.grid, &scn.x0);

    let base = no_adaptation_baseline(net, grid, x0, &costs)?;
    println!("alpha = {alpha}");
    println!("{:>14} {:>12} {:>6} {:>10}", "scheme", "J_o", "sweeps", "converged");
    println!("{:>14} {:>12.4} {:>6} {:>10}", "baseline", base.social_cost, 0, true);
    let mut solved = Vec::new();
    for mode in [Mode::Game, Mode::Central, Mode::PenaltyFull] {
        let r = dvr_solve(net, grid, x0, &costs, mode, &scn.sweep)?;
        println!("{:>14} {:>12.4} {:>6} {:>10}", mode, r.social_cost, r.iterations, r.converged);
        solved.push(r);
    }
    let (game, central, penalized) = (&solved[0], &solved[1], &solved[2]);
    println!("price of anarchy J_game / J_central = {:.4}", game.social_cost / central.social_cost);
    println!(
        "penalized game vs central: max control gap {:.2e}",
        penalized.control.max_abs_diff(&central.control)?
    );

    let avg = |r: &dvr::SolveReport| r.state.network_average();
    let (b, g, c) = (base.state.network_average(), avg(game), avg(central));
    println!("{:>6} {:>9} {:>9} {:>9}", "t", "baseline", "game", "central");
    for k in (0..grid.len()).step_by(grid.steps() / 10) {
        println!("{:>6.1} {:>9.4} {:>9.4} {:>9.4}", grid.time(k), b[k], g[k], c[k]);
    }
    Ok(())
}
