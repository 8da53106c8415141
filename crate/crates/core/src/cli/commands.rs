use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::output::{control_csv, costate_csv, state_csv, StagedDir};
use super::scenario::{CostSpec, Scenario};
use crate::costmodel::{player_cost, CostModel};
use crate::dynamics::{integrate_forward, TimeGrid};
use crate::error::{Error, Result};
use crate::gamecore::{CostateStorage, Mode};
use crate::netgraph::{
    degree_stats, format_edge_list, format_node_params, generate_barabasi_albert, largest_real_eigenvalue,
    Network,
};
use crate::oracle::{
    adjoint_gradient_check, brute_force_best_response, ne_deviation_check, potential_equivalence_check,
    random_probes, BEST_RESPONSE_MAX_NODES, STRUCTURAL_MAX_NODES,
};
use crate::solver::{dvr_solve, no_adaptation_baseline, SolveReport, SweepConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

/// Exit status for an error that aborted a command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::InvalidNetwork(_)
        | Error::InvalidParameter(_)
        | Error::NodeOutOfRange { .. }
        | Error::DimensionMismatch { .. }
        | Error::NotInvertible { .. }
        | Error::NotConcave
        | Error::InstanceTooLarge { .. }
        | Error::SearchSpaceTooLarge { .. }
        | Error::Io { .. } => EXIT_CONFIG,
        Error::Diverged { .. } | Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_FAILURE,
    }
}

fn toml_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    toml::to_string(value)
        .map(String::into_bytes)
        .map_err(|e| Error::Config(format!("cannot serialize summary: {e}")))
}

#[derive(Debug, Serialize)]
struct GraphSummary {
    nodes: usize,
    edges: usize,
    seed: u64,
    attachment: usize,
    beta: f64,
    sigma: f64,
    mean_out_degree: f64,
    max_out_degree: usize,
    largest_real_eigenvalue: f64,
    strongly_connected: bool,
}

/// Generate a Barabási–Albert network and write `edges.txt`, `nodes.txt`
/// and `graph.toml` into `out_dir`.
pub fn generate_graph(n: usize, m: usize, seed: u64, beta: f64, sigma: f64, out_dir: &Path) -> Result<PathBuf> {
    let net = generate_barabasi_albert(n, m, seed)?.with_rates(vec![beta; n], vec![sigma; n])?;
    let stats = degree_stats(&net);
    let summary = GraphSummary {
        nodes: n,
        edges: net.edge_count(),
        seed,
        attachment: m,
        beta,
        sigma,
        mean_out_degree: stats.mean_out_degree,
        max_out_degree: stats.max_out_degree,
        largest_real_eigenvalue: largest_real_eigenvalue(&net),
        strongly_connected: net.is_strongly_connected(),
    };
    println!(
        "{n} nodes, {} edges, mean out-degree {:.3}, largest real eigenvalue {:.4}",
        summary.edges, summary.mean_out_degree, summary.largest_real_eigenvalue
    );
    let mut out = StagedDir::new(out_dir)?;
    out.write("edges.txt", format_edge_list(&net).as_bytes())?;
    out.write("nodes.txt", format_node_params(&net).as_bytes())?;
    out.write("graph.toml", &toml_bytes(&summary)?)?;
    out.commit()
}

#[derive(Debug, Serialize)]
struct ResultSection {
    converged: bool,
    iterations: usize,
    final_residual: f64,
    social_cost: f64,
    player_costs: Vec<f64>,
}

impl From<&SolveReport> for ResultSection {
    fn from(r: &SolveReport) -> Self {
        ResultSection {
            converged: r.converged,
            iterations: r.iterations,
            final_residual: r.final_residual,
            social_cost: r.social_cost,
            player_costs: r.player_costs.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct References {
    baseline_social_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    central_social_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    central_converged: Option<bool>,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    scenario: String,
    mode: String,
    seed: u64,
    nodes: usize,
    edges: usize,
    t_final: f64,
    steps: usize,
    result: ResultSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    references: Option<References>,
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: SolveReport,
}

/// Solve the scenario's mode and write `summary.toml`, `state.csv`,
/// `control.csv` and optionally `costate.csv`.
pub fn run(scn: &Scenario) -> Result<RunOutcome> {
    let costs = scn.cost_model();
    let sweep = SweepConfig {
        costate: if scn.output.costate {
            CostateStorage::Full
        } else {
            CostateStorage::Diagonal
        },
        ..scn.sweep.clone()
    };
    let start = Instant::now();
    let report = dvr_solve(&scn.network, &scn.grid, &scn.x0, &costs, scn.mode, &sweep)?;
    eprintln!(
        "{}: {} after {} iterations (residual {:.2e}) in {:.2?}",
        scn.mode,
        if report.converged { "converged" } else { "NOT converged" },
        report.iterations,
        report.final_residual,
        start.elapsed()
    );
    let references = if scn.output.references {
        let baseline = no_adaptation_baseline(&scn.network, &scn.grid, &scn.x0, &costs)?;
        let central = if scn.mode == Mode::Central {
            None
        } else {
            let cfg = SweepConfig {
                costate: CostateStorage::Diagonal,
                ..scn.sweep.clone()
            };
            Some(dvr_solve(&scn.network, &scn.grid, &scn.x0, &costs, Mode::Central, &cfg)?)
        };
        Some(References {
            baseline_social_cost: baseline.social_cost,
            central_social_cost: central.as_ref().map(|c| c.social_cost),
            central_converged: central.as_ref().map(|c| c.converged),
        })
    } else {
        None
    };
    let summary = RunSummary {
        scenario: scn.name.clone(),
        mode: scn.mode.to_string(),
        seed: scn.seed,
        nodes: scn.network.node_count(),
        edges: scn.network.edge_count(),
        t_final: scn.grid.t_final(),
        steps: scn.grid.steps(),
        result: ResultSection::from(&report),
        references,
    };
    let mut out = StagedDir::new(&scn.output.dir)?;
    out.write("summary.toml", &toml_bytes(&summary)?)?;
    out.write("state.csv", &state_csv(&report.state)?)?;
    out.write("control.csv", &control_csv(&scn.network, &report.control)?)?;
    if scn.output.costate {
        if let Some(p) = &report.costate {
            out.write("costate.csv", &costate_csv(p)?)?;
        }
    }
    let dir = out.commit()?;
    Ok(RunOutcome { dir, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub alpha: String,
    pub scheme: String,
    pub social_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
}

pub struct CompareOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ComparisonRow>,
}

fn alpha_label(spec: &CostSpec) -> String {
    let a0 = spec.alpha.first().copied().unwrap_or(0.0);
    if spec.alpha.iter().all(|&a| a == a0) {
        a0.to_string()
    } else {
        "custom".into()
    }
}

/// Baseline, game and central schemes on the same instance, once per `α`
/// in the scan (or once with the scenario's costs). Writes
/// `comparison.csv` and `infection.csv` (network-average infection).
pub fn compare(scn: &Scenario) -> Result<CompareOutcome> {
    let specs: Vec<CostSpec> = if scn.alphas.is_empty() {
        vec![scn.costs.clone()]
    } else {
        scn.alphas.iter().map(|&a| scn.costs.with_uniform_alpha(a)).collect()
    };
    let sweep = SweepConfig {
        costate: CostateStorage::Diagonal,
        ..scn.sweep.clone()
    };
    let start = Instant::now();
    let runs: Vec<(String, Vec<SolveReport>)> = specs
        .par_iter()
        .map(|spec| -> Result<(String, Vec<SolveReport>)> {
            let costs = spec.build();
            let (net, grid, x0) = (&scn.network, &scn.grid, &scn.x0[..]);
            let baseline = no_adaptation_baseline(net, grid, x0, &costs)?;
            let game = dvr_solve(net, grid, x0, &costs, Mode::Game, &sweep)?;
            let central = dvr_solve(net, grid, x0, &costs, Mode::Central, &sweep)?;
            Ok((alpha_label(spec), vec![baseline, game, central]))
        })
        .collect::<Result<_>>()?;
    eprintln!("compare: {} scheme runs in {:.2?}", runs.len() * 3, start.elapsed());

    let mut rows = Vec::new();
    for (alpha, reports) in &runs {
        for r in reports {
            rows.push(ComparisonRow {
                alpha: alpha.clone(),
                scheme: r.scheme().to_string(),
                social_cost: r.social_cost,
                converged: r.converged,
                iterations: r.iterations,
                final_residual: r.final_residual,
            });
        }
    }
    let mut table = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        table
            .serialize(row)
            .map_err(|e| Error::Config(format!("cannot serialize comparison row: {e}")))?;
    }
    let table = table
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;

    let mut infection = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(runs.iter().flat_map(|(alpha, reports)| {
            reports.iter().map(move |r| format!("{}@{alpha}", r.scheme()))
        }))
        .collect();
    let csv_err = |e: csv::Error| Error::Config(format!("cannot write infection table: {e}"));
    infection.write_record(&header).map_err(csv_err)?;
    let averages: Vec<Vec<f64>> = runs
        .iter()
        .flat_map(|(_, reports)| reports.iter().map(|r| r.state.network_average()))
        .collect();
    for k in 0..scn.grid.len() {
        let record: Vec<String> = std::iter::once(scn.grid.time(k).to_string())
            .chain(averages.iter().map(|a| a[k].to_string()))
            .collect();
        infection.write_record(&record).map_err(csv_err)?;
    }
    let infection = infection
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;

    let mut out = StagedDir::new(&scn.output.dir)?;
    out.write("comparison.csv", &table)?;
    out.write("infection.csv", &infection)?;
    let dir = out.commit()?;
    Ok(CompareOutcome { dir, rows })
}

#[derive(Debug, Serialize)]
struct GameSection {
    converged: bool,
    iterations: usize,
    social_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrupted_edge: Option<usize>,
}

#[derive(Debug, Serialize)]
struct DeviationSection {
    probes: usize,
    delta: f64,
    seed: u64,
    worst_relative_decrease: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct AdjointPair {
    i: usize,
    j: usize,
    reachable: bool,
    adjoint: f64,
    finite_difference: f64,
    relative_error: f64,
}

#[derive(Debug, Serialize)]
struct AdjointSection {
    delta: f64,
    max_relative_error: f64,
    max_unreachable_abs: f64,
    skipped: usize,
    passed: bool,
    pair: Vec<AdjointPair>,
}

#[derive(Debug, Serialize)]
struct PotentialSection {
    control_gap: f64,
    reach_gap: f64,
    identity_max_error: f64,
    social_cost: f64,
    substitutions: usize,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct BrutePlayer {
    player: usize,
    oracle_cost: f64,
    sweep_cost: f64,
    relative_gap: f64,
}

#[derive(Debug, Serialize)]
struct BruteSection {
    levels: usize,
    segments: usize,
    steps: usize,
    tolerance: f64,
    passed: bool,
    player: Vec<BrutePlayer>,
}

#[derive(Debug, Serialize)]
struct VerifySummary {
    scenario: String,
    passed: bool,
    game: GameSection,
    deviation: DeviationSection,
    adjoint: AdjointSection,
    potential: PotentialSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force: Option<BruteSection>,
}

pub struct VerifyOutcome {
    pub dir: PathBuf,
    pub passed: bool,
}

fn corrupt(report: &mut SolveReport, net: &Network, x0: &[f64], costs: &CostModel, edge: usize) -> Result<()> {
    if edge >= net.edge_count() {
        return Err(Error::Config(format!("--corrupt-control names edge {edge}, which does not exist")));
    }
    for k in 0..report.control.grid().len() {
        report.control.at_mut(k)[edge] *= 0.5;
    }
    report.state = integrate_forward(net, report.control.grid(), x0, &report.control)?;
    report.player_costs = (0..net.node_count())
        .map(|i| player_cost(net, &report.state, &report.control, costs, i))
        .collect::<Result<_>>()?;
    report.social_cost = report.player_costs.iter().sum();
    report.converged = false;
    Ok(())
}

/// Run the oracle checks on a small scenario and write `verify.toml`.
/// `corrupt_edge` halves the equilibrium control on that edge before the
/// deviation and brute-force checks, which should then fail.
pub fn verify(scn: &Scenario, corrupt_edge: Option<usize>) -> Result<VerifyOutcome> {
    let net = &scn.network;
    let n = net.node_count();
    if n > STRUCTURAL_MAX_NODES {
        return Err(Error::InstanceTooLarge {
            n,
            limit: STRUCTURAL_MAX_NODES,
        });
    }
    let costs = scn.cost_model();
    let v = &scn.verify;
    let sweep = SweepConfig {
        costate: CostateStorage::Full,
        ..scn.sweep.clone()
    };
    let solved = dvr_solve(net, &scn.grid, &scn.x0, &costs, Mode::Game, &sweep)?;
    let mut game = solved.clone();
    if let Some(e) = corrupt_edge {
        corrupt(&mut game, net, &scn.x0, &costs, e)?;
    }

    let probes = random_probes(net, &scn.grid, v.probes, v.probe_delta, scn.seed);
    let dev = ne_deviation_check(&game, net, &costs, &probes)?;
    let deviation = DeviationSection {
        probes: probes.len(),
        delta: v.probe_delta,
        seed: scn.seed,
        worst_relative_decrease: dev.worst_relative_decrease,
        tolerance: v.deviation_tol,
        passed: dev.worst_relative_decrease < v.deviation_tol,
    };

    let reach = net.reachability();
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for i in 0..n {
        for j in 0..n {
            match adjoint_gradient_check(&solved, net, &costs, i, j, v.fd_delta) {
                Ok(c) => pairs.push(AdjointPair {
                    i,
                    j,
                    reachable: reach.contains(j, i),
                    adjoint: c.adjoint,
                    finite_difference: c.finite_difference,
                    relative_error: c.relative_error,
                }),
                Err(Error::InvalidParameter(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let max_relative_error = pairs
        .iter()
        .filter(|p| p.reachable)
        .map(|p| p.relative_error)
        .fold(0.0, f64::max);
    let max_unreachable_abs = pairs
        .iter()
        .filter(|p| !p.reachable)
        .map(|p| p.adjoint.abs().max(p.finite_difference.abs()))
        .fold(0.0, f64::max);
    let adjoint = AdjointSection {
        delta: v.fd_delta,
        max_relative_error,
        max_unreachable_abs,
        skipped,
        passed: max_relative_error < v.adjoint_tol && max_unreachable_abs < v.unreachable_tol,
        pair: pairs,
    };

    let pot = potential_equivalence_check(net, &scn.grid, &scn.x0, &costs, &sweep, v.substitutions, scn.seed)?;
    let potential = PotentialSection {
        control_gap: pot.control_gap,
        reach_gap: pot.reach_gap,
        identity_max_error: pot.identity_max_error,
        social_cost: pot.social_cost,
        substitutions: pot.substitutions,
        passed: pot.control_gap < v.gap_tol
            && pot.reach_gap < v.reach_tol
            && pot.identity_max_error <= v.identity_tol * pot.social_cost.abs(),
    };

    let brute_force = if n <= BEST_RESPONSE_MAX_NODES {
        let coarse = TimeGrid::new(scn.grid.t_final(), v.brute_steps)?;
        let mut players = Vec::new();
        for i in (0..n).filter(|&i| net.out_degree(i) > 0) {
            let br = brute_force_best_response(
                net,
                &coarse,
                &scn.x0,
                &costs,
                &game.control,
                i,
                v.brute_levels,
                v.brute_segments,
            )?;
            let sweep_cost = game.player_costs[i];
            players.push(BrutePlayer {
                player: i,
                oracle_cost: br.cost,
                sweep_cost,
                relative_gap: (br.cost - sweep_cost).abs() / sweep_cost.abs().max(f64::MIN_POSITIVE),
            });
        }
        Some(BruteSection {
            levels: v.brute_levels,
            segments: v.brute_segments,
            steps: v.brute_steps,
            tolerance: v.brute_tol,
            passed: players.iter().all(|p| p.relative_gap < v.brute_tol),
            player: players,
        })
    } else {
        None
    };

    let game_section = GameSection {
        converged: solved.converged,
        iterations: solved.iterations,
        social_cost: game.social_cost,
        corrupted_edge: corrupt_edge,
    };
    let passed = solved.converged
        && deviation.passed
        && adjoint.passed
        && potential.passed
        && brute_force.as_ref().is_none_or(|b| b.passed);
    for (name, ok) in [
        ("deviation", deviation.passed),
        ("adjoint", adjoint.passed),
        ("potential", potential.passed),
    ]
    .into_iter()
    .chain(brute_force.as_ref().map(|b| ("brute-force", b.passed)))
    {
        eprintln!("{name}: {}", if ok { "pass" } else { "FAIL" });
    }
    let summary = VerifySummary {
        scenario: scn.name.clone(),
        passed,
        game: game_section,
        deviation,
        adjoint,
        potential,
        brute_force,
    };
    let mut out = StagedDir::new(&scn.output.dir)?;
    out.write("verify.toml", &toml_bytes(&summary)?)?;
    let dir = out.commit()?;
    Ok(VerifyOutcome { dir, passed })
}
