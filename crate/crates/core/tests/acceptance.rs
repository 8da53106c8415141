//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dvr::cli::scenario::{Overrides, Scenario};
use dvr::costmodel::player_cost;
use dvr::netgraph::{degree_stats, largest_real_eigenvalue};
use dvr::oracle::{
    adjoint_gradient_check, brute_force_best_response, ne_deviation_check, potential_equivalence_check,
    random_probes,
};
use dvr::solver::no_adaptation_baseline;
use dvr::{
    dvr_solve, generate_barabasi_albert, integrate_forward, simulate_markov, Acceleration, ControlTrajectory,
    CostModel, Mode, Network, SweepConfig, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn preset(name: &str) -> Scenario {
    Scenario::preset(name, &Overrides::default()).expect("preset parses")
}

fn anderson() -> SweepConfig {
    SweepConfig {
        damping: 1.0,
        acceleration: Acceleration::Anderson { depth: 6 },
        ..SweepConfig::default()
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration, detail: String) -> Outcome {
    check(
        elapsed < budget,
        format!("{detail}; {:.1}s of {}s budget", elapsed.as_secs_f64(), budget.as_secs()),
    )
}

/// Random digraph on `n` nodes, edge probability `p`, nominal weights in
/// [0.5, 1], heterogeneous rates.
fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64, ring: bool) -> Network {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let on_ring = ring && j == (i + 1) % n;
            if i != j && (on_ring || rng.random::<f64>() < p) {
                edges.push((i, j, rng.random_range(0.5..=1.0)));
            }
        }
    }
    let beta = (0..n).map(|_| rng.random_range(0.02..0.3)).collect();
    let sigma = (0..n).map(|_| rng.random_range(0.05..0.4)).collect();
    Network::new(n, edges, beta, sigma).unwrap()
}

fn random_x0(rng: &mut ChaCha8Rng, n: usize, lo: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=1.0)).collect()
}

fn state_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = rng.random_range(1..=30);
        let density = rng.random_range(0.05..0.5);
        let net = random_digraph(&mut rng, n, density, false);
        let grid = TimeGrid::new(rng.random_range(1.0..30.0), rng.random_range(50..=1500)).unwrap();
        let x0: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.1 { 1.0 } else { rng.random_range(1e-6..=1.0) })
            .collect();
        let m = net.edge_count();
        let values = (0..grid.len() * m)
            .map(|q| rng.random_range(0.0..=net.edge(q % m).weight))
            .collect();
        let u = ControlTrajectory::from_rows(grid, m, values).unwrap();
        let x = integrate_forward(&net, &grid, &x0, &u).unwrap();
        for k in 1..grid.len() {
            for &v in x.at(k) {
                worst_lo = worst_lo.min(v);
                worst_hi = worst_hi.max(v);
            }
        }
    }
    let detail = format!("min {worst_lo:.3e}, max 1 - {:.3e}", 1.0 - worst_hi);
    if !(worst_lo > 0.0 && worst_hi < 1.0) {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(30), detail)
}

/// Digraph with node 0 of zero in-degree and node `n-1` of zero out-degree.
fn structured_digraph(rng: &mut ChaCha8Rng, n: usize) -> Network {
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        for j in 1..n {
            if i != j && rng.random::<f64>() < 0.3 {
                edges.push((i, j, rng.random_range(0.5..=1.0)));
            }
        }
    }
    if !edges.iter().any(|&(a, b, _)| (a, b) == (0, n - 1)) {
        edges.push((0, n - 1, 1.0));
    }
    let beta = (0..n).map(|_| rng.random_range(0.05..0.3)).collect();
    let sigma = (0..n).map(|_| rng.random_range(0.05..0.3)).collect();
    Network::new(n, edges, beta, sigma).unwrap()
}

fn costate_structure() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let grid = TimeGrid::new(20.0, 1000).unwrap();
    let mut min_pij = f64::INFINITY;
    let mut failures = Vec::new();
    let mut runs = 0;
    while runs < 10 {
        let n = rng.random_range(4..=20);
        let net = structured_digraph(&mut rng, n);
        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let costs = CostModel {
            infection: dvr::InfectionCost::Linear { alpha: alpha.clone() },
            weight: dvr::WeightCost::Quadratic {
                d: (0..net.edge_count()).map(|_| rng.random_range(0.1..0.5)).collect(),
            },
        };
        let x0 = random_x0(&mut rng, n, 0.05);
        let r = dvr_solve(&net, &grid, &x0, &costs, Mode::Game, &SweepConfig::default()).unwrap();
        if !r.converged {
            failures.push(format!("run {runs} did not converge"));
            runs += 1;
            continue;
        }
        runs += 1;
        let p = r.costate.as_ref().unwrap();
        let last = grid.steps();
        for k in 0..grid.len() {
            for i in 0..n {
                for j in 0..n {
                    min_pij = min_pij.min(p.entry(k, i, j).unwrap());
                }
                if k < last && !(p.own(k, i) > 0.0) {
                    failures.push(format!("p_{i}{i}({k}) = {} not positive", p.own(k, i)));
                }
            }
        }
        for e in 0..net.edge_count() {
            let w_o = net.edge(e).weight;
            if r.control.at(last)[e] != w_o {
                failures.push(format!("u_{e}(T) != w^o"));
            }
            for k in 1..last {
                let phi = dvr::gamecore::switching_value(&net, p, &r.state, k, e);
                if phi > 0.0 && !(r.control.at(k)[e] < w_o) {
                    failures.push(format!("u_{e}({k}) = w^o with phi = {phi:e}"));
                }
            }
        }
        for i in 0..n {
            if net.in_degree(i) == 0 {
                let cap = alpha[i] / net.sigma()[i] + 1e-9;
                if (0..grid.len()).any(|k| p.own(k, i) > cap) {
                    failures.push(format!("p_{i}{i} exceeds alpha/sigma"));
                }
            }
            if net.out_degree(i) == 0 && (1..grid.len()).any(|k| !(p.own(k, i) < p.own(k - 1, i))) {
                failures.push(format!("p_{i}{i} not strictly decreasing"));
            }
        }
    }
    if min_pij < -1e-9 {
        failures.push(format!("min p_ij = {min_pij:e}"));
    }
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    within(
        start.elapsed(),
        Duration::from_secs(300),
        format!("10 runs, min p_ij = {min_pij:.2e}"),
    )
}

fn ne_stationarity() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, mode) in [
        ("two-node", Mode::Game),
        ("five-node-dag", Mode::Game),
        ("five-node-dag", Mode::PenaltyReach),
    ] {
        let scn = preset(name);
        let costs = scn.cost_model();
        let r = dvr_solve(&scn.network, &scn.grid, &scn.x0, &costs, mode, &scn.sweep).unwrap();
        let probes = random_probes(&scn.network, &scn.grid, 20, 1e-3, scn.seed);
        let out = ne_deviation_check(&r, &scn.network, &costs, &probes).unwrap();
        ok &= r.converged && out.worst_relative_decrease < 1e-5;
        details.push(format!(
            "{name}/{mode}: converged {} worst {:.2e}",
            r.converged, out.worst_relative_decrease
        ));
    }
    check(ok, details.join(", "))
}

fn brute_force_equivalence() -> Outcome {
    let start = Instant::now();
    let scn = preset("two-node");
    let costs = scn.cost_model();
    let r = dvr_solve(&scn.network, &scn.grid, &scn.x0, &costs, Mode::Game, &scn.sweep).unwrap();
    let mut worst = 0.0f64;
    for i in 0..2 {
        let br = brute_force_best_response(&scn.network, &scn.grid, &scn.x0, &costs, &r.control, i, 11, 3).unwrap();
        worst = worst.max((br.cost - r.player_costs[i]).abs() / r.player_costs[i]);
    }
    let detail = format!("converged {}, max relative gap {worst:.2e}", r.converged);
    if !(r.converged && worst < 0.01) {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(120), detail)
}

fn potential_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let grid = TimeGrid::new(20.0, 1000).unwrap();
    let (mut gap, mut reach_gap, mut identity) = (0.0f64, 0.0f64, 0.0f64);
    for inst in 0..5 {
        let n = rng.random_range(5..=20);
        let strongly = inst < 3;
        let net = random_digraph(&mut rng, n, 0.2, strongly);
        let costs = CostModel::uniform(&net, rng.random_range(0.5..2.0), rng.random_range(0.1..0.5));
        let x0 = random_x0(&mut rng, n, 0.05);
        let c = match potential_equivalence_check(&net, &grid, &x0, &costs, &anderson(), 10, inst) {
            Ok(c) => c,
            Err(e) => return Err(format!("instance {inst}: {e}")),
        };
        gap = gap.max(c.control_gap);
        identity = identity.max(c.identity_max_error / c.social_cost.abs());
        if strongly {
            assert!(net.is_strongly_connected());
            reach_gap = reach_gap.max(c.reach_gap);
        }
    }
    check(
        gap < 1e-6 && identity < 1e-8 && reach_gap < 1e-9,
        format!("control gap {gap:.2e}, identity {identity:.2e}·|J_o|, reach gap {reach_gap:.2e}"),
    )
}

fn adjoint() -> Outcome {
    let mut worst_rel = 0.0f64;
    let mut worst_zero = 0.0f64;
    let mut pairs = 0;
    let mut cases: Vec<(String, Network, TimeGrid, Vec<f64>, CostModel, Mode, SweepConfig)> = Vec::new();
    for (name, mode) in [
        ("two-node", Mode::Game),
        ("five-node-dag", Mode::Game),
        ("five-node-dag", Mode::PenaltyReach),
    ] {
        let s = preset(name);
        let costs = s.cost_model();
        cases.push((name.into(), s.network, s.grid, s.x0, costs, mode, s.sweep));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let net = random_digraph(&mut rng, 8, 0.3, false);
    let costs = CostModel::uniform(&net, 1.0, 0.2);
    let x0 = (0..8).map(|_| rng.random_range(0.05..0.9)).collect();
    cases.push((
        "random".into(),
        net,
        TimeGrid::new(20.0, 2000).unwrap(),
        x0,
        costs,
        Mode::Game,
        SweepConfig::default(),
    ));

    for (name, net, grid, x0, costs, mode, cfg) in &cases {
        let r = dvr_solve(net, grid, x0, costs, *mode, cfg).unwrap();
        if !r.converged {
            return Err(format!("{name}/{mode} did not converge"));
        }
        let reach = net.reachability();
        let dag = name == "five-node-dag";
        for i in 0..net.node_count() {
            for j in 0..net.node_count() {
                let c = adjoint_gradient_check(&r, net, costs, i, j, 1e-5).unwrap();
                pairs += 1;
                if reach.contains(j, i) {
                    worst_rel = worst_rel.max(c.relative_error);
                } else if dag && *mode == Mode::Game {
                    worst_zero = worst_zero.max(c.adjoint.abs()).max(c.finite_difference.abs());
                }
            }
        }
    }
    check(
        worst_rel < 1e-3 && worst_zero < 1e-8,
        format!("{pairs} pairs, max relative error {worst_rel:.2e}, max unreachable {worst_zero:.2e}"),
    )
}

fn cost_ordering() -> Outcome {
    let start = Instant::now();
    let scn = preset("scale-free-50");
    let net = &scn.network;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &alpha in &[0.5, 1.0, 1.5, 2.0] {
        let costs = scn.costs.with_uniform_alpha(alpha).build();
        let base = no_adaptation_baseline(net, &scn.grid, &scn.x0, &costs).unwrap().social_cost;
        let game = dvr_solve(net, &scn.grid, &scn.x0, &costs, Mode::Game, &scn.sweep).unwrap();
        let central = dvr_solve(net, &scn.grid, &scn.x0, &costs, Mode::Central, &scn.sweep).unwrap();
        if !(game.converged && central.converged) {
            failures.push(format!("alpha {alpha}: not converged"));
        }
        let tol = 1e-4 * base;
        let (g, c) = (game.social_cost, central.social_cost);
        if !(c <= g + tol && g <= base + tol) {
            failures.push(format!("alpha {alpha}: ordering {c} / {g} / {base}"));
        }
        rows.push((alpha, base, g, c, tol));
    }
    for w in rows.windows(2) {
        let (gap0, gap1) = (w[0].2 - w[0].3, w[1].2 - w[1].3);
        if gap1 < gap0 - w[0].4.min(w[1].4) {
            failures.push(format!("gap falls from {gap0} to {gap1} at alpha {}", w[1].0));
        }
    }
    let table = rows
        .iter()
        .map(|(a, b, g, c, _)| format!("a={a}: {b:.2}/{g:.2}/{c:.2}"))
        .collect::<Vec<_>>()
        .join(" ");
    if !failures.is_empty() {
        return Err(format!("{}; {table}", failures.join("; ")));
    }
    within(start.elapsed(), Duration::from_secs(900), format!("baseline/game/central {table}"))
}

fn outbreak() -> Outcome {
    let scn = preset("scale-free-150");
    let net = generate_barabasi_albert(150, 4, scn.seed).unwrap();
    let lambda = largest_real_eigenvalue(&net);
    let mean_out = degree_stats(&net).mean_out_degree;
    let pair = Network::uniform(2, [(0, 1, 1.0), (1, 0, 1.0)], 0.04, 0.1).unwrap();
    let pair_lambda = largest_real_eigenvalue(&pair);
    check(
        lambda > 0.0 && (pair_lambda + 0.06).abs() < 1e-12 && (7.0..=8.0).contains(&mean_out),
        format!("BA(150,4) lambda {lambda:.4}, mean out-degree {mean_out:.3}; two-node {pair_lambda:.15}"),
    )
}

fn mean_field_bound() -> Outcome {
    let start = Instant::now();
    let net = generate_barabasi_albert(10, 2, 9)
        .unwrap()
        .with_rates(vec![0.15; 10], vec![0.2; 10])
        .unwrap();
    let grid = TimeGrid::new(20.0, 200).unwrap();
    let m = net.edge_count();
    let values = (0..grid.len())
        .flat_map(|k| {
            let t = grid.time(k);
            (0..m).map(move |e| 0.6 + 0.4 * (0.3 * t + e as f64).cos())
        })
        .collect();
    let u = ControlTrajectory::from_rows(grid, m, values).unwrap();
    let x0: Vec<f64> = (0..10).map(|i| 0.05 + 0.05 * i as f64).collect();
    let x = integrate_forward(&net, &grid, &x0, &u).unwrap();
    let mc = simulate_markov(&net, &grid, &x0, &u, 10_000, 7).unwrap();
    let mut worst = f64::INFINITY;
    for k in 0..grid.len() {
        for i in 0..10 {
            worst = worst.min(x.at(k)[i] - (mc.mean_at(k)[i] - 3.0 * mc.stderr_at(k)[i]));
        }
    }
    let detail = format!("min margin {worst:.3e}");
    if worst < 0.0 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(300), detail)
}

fn integrator_order() -> Outcome {
    let scn = preset("two-node");
    let net = &scn.network;
    let costs = scn.cost_model();
    let solve = |steps: usize| {
        let grid = TimeGrid::new(scn.grid.t_final(), steps).unwrap();
        let u = ControlTrajectory::original_weights(net, grid);
        let x = integrate_forward(net, &grid, &scn.x0, &u).unwrap();
        (x.terminal()[0], player_cost(net, &x, &u, &costs, 0).unwrap())
    };
    let (a, b, c) = (solve(20), solve(40), solve(80));
    let rk4 = (a.0 - b.0).abs() / (b.0 - c.0).abs();
    let trap = (a.1 - b.1).abs() / (b.1 - c.1).abs();
    check(
        (12.0..=20.0).contains(&rk4) && (3.5..=4.5).contains(&trap),
        format!("RK4 ratio {rk4:.3}, trapezoid ratio {trap:.3}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("state bounds", state_bounds),
        ("costate structure", costate_structure),
        ("equilibrium stationarity", ne_stationarity),
        ("brute-force best response", brute_force_equivalence),
        ("potential equivalence", potential_equivalence),
        ("adjoint gradients", adjoint),
        ("cost ordering", cost_ordering),
        ("outbreak diagnostic", outbreak),
        ("mean-field upper bound", mean_field_bound),
        ("integrator order", integrator_order),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let id = idx + 1;
        if !only.is_empty() && !only.iter().any(|o| *o == id.to_string()) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
