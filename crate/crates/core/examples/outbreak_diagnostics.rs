//! Generate a scale-free network and check whether an epidemic can take off
//! when nobody adapts.
//!
//! ```text
//! cargo run --example outbreak_diagnostics -- 150 4 1
//! ```

use dvr::generate_barabasi_albert;
use dvr::netgraph::{degree_stats, largest_real_eigenvalue};
use dvr::Network;

fn arg(idx: usize, default: u64) -> u64 {
    std::env::args()
        .nth(idx)
        .and_then(|a| a.parse().ok())
        .unwrap_or(default)
}

fn main() -> dvr::Result<()> {
    let (n, m, seed) = (arg(1, 150) as usize, arg(2, 4) as usize, arg(3, 1));
    let net = generate_barabasi_albert(n, m, seed)?;
    let stats = degree_stats(&net);
    println!("BA({n}, {m}) seed {seed}: {} directed edges", net.edge_count());
    println!(
        "  mean out-degree {:.3}, max out-degree {}",
        stats.mean_out_degree, stats.max_out_degree
    );

    let lambda = largest_real_eigenvalue(&net);
    let verdict = if lambda > 0.0 { "outbreak" } else { "dies out" };
    println!("  largest real eigenvalue of W B - D: {lambda:.4} ({verdict})");

    // the same network with a stronger cure rate
    for sigma in [0.2, 0.4, 0.8] {
        let cured = net.clone().with_rates(net.beta().to_vec(), vec![sigma; n])?;
        println!("  sigma = {sigma}: eigenvalue {:.4}", largest_real_eigenvalue(&cured));
    }

    let pair = Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1)?;
    println!("two nodes, beta 0.04, sigma 0.1: eigenvalue {:.4}", largest_real_eigenvalue(&pair));

    let dag = Network::uniform(
        5,
        [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (3, 2, 1.0), (3, 4, 1.0)],
        0.04,
        0.1,
    )?;
    let reach = dag.reachability();
    println!("five-node DAG, strongly connected: {}", dag.is_strongly_connected());
    for i in 0..5 {
        println!("  R_{i} = {:?}", reach.set(i));
    }
    Ok(())
}
