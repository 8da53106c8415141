//! On a DAG a node only needs to pay for the infections it can cause, so
//! the reachability penalty is enough to recover the social optimum.
//!
//! ```text
//! cargo run --release --example penalty_mechanism
//! ```

use dvr::costmodel::{penalty_integral, PenaltyMode};
use dvr::{dvr_solve, CostModel, Mode, Network, SweepConfig, TimeGrid};

fn main() -> dvr::Result<()> {
    let net = Network::uniform(
        5,
        [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (3, 2, 1.0), (3, 4, 1.0)],
        0.04,
        0.1,
    )?;
    let grid = TimeGrid::new(20.0, 2000)?;
    let x0 = [0.16; 5];
    let costs = CostModel::uniform(&net, 1.0, 0.2);
    let cfg = SweepConfig::default();
    let reach = net.reachability();

    let mut reports = Vec::new();
    for mode in Mode::ALL {
        let r = dvr_solve(&net, &grid, &x0, &costs, mode, &cfg)?;
        println!("{mode:>14}: J_o = {:.6} in {} sweeps", r.social_cost, r.iterations);
        reports.push((mode, r));
    }
    let central = &reports.iter().find(|(m, _)| *m == Mode::Central).unwrap().1;
    for (mode, r) in reports.iter().filter(|(m, _)| *m != Mode::Central) {
        println!("  |u_{mode} - u_central| = {:.2e}", r.control.max_abs_diff(&central.control)?);
    }

    println!("penalties charged at the optimum:");
    for i in 0..5 {
        let full = penalty_integral(&net, &costs, PenaltyMode::Full, None, i, &central.state)?;
        let part = penalty_integral(&net, &costs, PenaltyMode::Reachability, Some(&reach), i, &central.state)?;
        println!("  node {i}: full {full:8.4}  reach {part:8.4}  R = {:?}", reach.set(i));
    }
    Ok(())
}
