//! The mean-field ODE against exact stochastic simulation of the SIS chain.
//! The ODE overestimates infection, so it is a safe planning model.
//!
//! ```text
//! cargo run --release --example markov_vs_mean_field -- 20000
//! ```

use dvr::{generate_barabasi_albert, integrate_forward, simulate_markov, ControlTrajectory, TimeGrid};

fn main() -> dvr::Result<()> {
    let runs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let net = generate_barabasi_albert(10, 2, 9)?.with_rates(vec![0.15; 10], vec![0.2; 10])?;
    let grid = TimeGrid::new(20.0, 200)?;
    let u = ControlTrajectory::original_weights(&net, grid);
    let x0 = vec![0.2; 10];

    let x = integrate_forward(&net, &grid, &x0, &u)?;
    let mc = simulate_markov(&net, &grid, &x0, &u, runs, 42)?;

    println!("{runs} runs; columns are node averages");
    println!("{:>6} {:>10} {:>10} {:>10}", "t", "mean-field", "markov", "stderr");
    let mut worst = f64::INFINITY;
    for k in 0..grid.len() {
        let (mf, est, se) = (x.at(k), mc.mean_at(k), mc.stderr_at(k));
        for i in 0..10 {
            worst = worst.min(mf[i] - est[i] + 3.0 * se[i]);
        }
        if k % 20 == 0 {
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!("{:>6.1} {:>10.4} {:>10.4} {:>10.4}", grid.time(k), avg(mf), avg(est), avg(se));
        }
    }
    println!("smallest margin x_mf - (x_mc - 3 se): {worst:.4}");
    Ok(())
}
