//! Scenario files.
//!
//! A scenario is one TOML document. Every section except `[network]` is
//! optional; omitted keys take the defaults listed in the README. Relative
//! file paths are resolved against the scenario's own directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::costmodel::{
    CoshWeightCost, CostModel, InfectionCost, QuadraticInfection, QuarticWeightCost, SqrtWeightCost,
    WeightCost,
};
use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::gamecore::{CostateStorage, Mode};
use crate::netgraph::{
    generate_barabasi_albert, parse_edge_list, parse_node_params, parse_node_values, Network, DEFAULT_BETA,
    DEFAULT_SIGMA,
};
use crate::solver::{Acceleration, InitialControl, SweepConfig};

/// Built-in scenarios, also shipped as files under `scenarios/`.
pub const PRESETS: [(&str, &str); 4] = [
    ("two-node", include_str!("../../scenarios/two-node.toml")),
    ("five-node-dag", include_str!("../../scenarios/five-node-dag.toml")),
    ("scale-free-50", include_str!("../../scenarios/scale-free-50.toml")),
    ("scale-free-150", include_str!("../../scenarios/scale-free-150.toml")),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrList::List(v) if v.len() == len => Ok(v.clone()),
            ScalarOrList::List(v) => Err(Error::Config(format!(
                "{what} lists {} values but {len} are needed",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    network: RawNetwork,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    costs: RawCosts,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    compare: RawCompare,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    /// Barabási–Albert size.
    n: Option<usize>,
    /// Barabási–Albert attachment count.
    m: Option<usize>,
    /// Inline `[from, to, weight]` triples.
    links: Option<Vec<(usize, usize, f64)>>,
    /// Edge-list file.
    edges: Option<String>,
    /// Node count for inline links or edge files; inferred when omitted.
    nodes: Option<usize>,
    /// Node-parameter file overriding `beta`/`sigma`.
    params: Option<String>,
    beta: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    t_final: f64,
    steps: usize,
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid {
            t_final: 20.0,
            steps: 2000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawInitial {
    x0: ScalarOrList,
    x0_file: Option<String>,
}

impl Default for RawInitial {
    fn default() -> Self {
        RawInitial {
            x0: ScalarOrList::Scalar(0.16),
            x0_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfectionKind {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Quadratic,
    Quartic,
    Cosh,
    Sqrt,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCosts {
    infection: InfectionKind,
    alpha: ScalarOrList,
    weight: WeightKind,
    d: ScalarOrList,
}

impl Default for RawCosts {
    fn default() -> Self {
        RawCosts {
            infection: InfectionKind::Linear,
            alpha: ScalarOrList::Scalar(1.0),
            weight: WeightKind::Quadratic,
            d: ScalarOrList::Scalar(0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawInit {
    OriginalWeights,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawAcceleration {
    None,
    Anderson,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    mode: Mode,
    epsilon: f64,
    max_iters: usize,
    damping: f64,
    init: RawInit,
    acceleration: RawAcceleration,
    anderson_depth: usize,
    divergence_window: usize,
}

impl Default for RawSolver {
    fn default() -> Self {
        let d = SweepConfig::default();
        RawSolver {
            mode: Mode::Game,
            epsilon: d.epsilon,
            max_iters: d.max_iters,
            damping: d.damping,
            init: RawInit::OriginalWeights,
            acceleration: RawAcceleration::None,
            anderson_depth: 6,
            divergence_window: d.divergence_window,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCompare {
    alphas: Vec<f64>,
}

/// Oracle settings and tolerances for `verify`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub probes: usize,
    pub probe_delta: f64,
    pub deviation_tol: f64,
    pub fd_delta: f64,
    pub adjoint_tol: f64,
    pub unreachable_tol: f64,
    pub substitutions: usize,
    pub gap_tol: f64,
    pub identity_tol: f64,
    pub reach_tol: f64,
    pub brute_levels: usize,
    pub brute_segments: usize,
    pub brute_steps: usize,
    pub brute_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            probes: 20,
            probe_delta: 1e-3,
            deviation_tol: 1e-5,
            fd_delta: 1e-5,
            adjoint_tol: 1e-3,
            unreachable_tol: 1e-8,
            substitutions: 10,
            gap_tol: 1e-6,
            identity_tol: 1e-8,
            reach_tol: 1e-9,
            brute_levels: 11,
            brute_segments: 3,
            brute_steps: 200,
            brute_tol: 0.01,
        }
    }
}

type RawVerify = VerifySettings;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: String,
    costate: bool,
    references: bool,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: "out".into(),
            costate: false,
            references: true,
        }
    }
}

/// Recipe for the cost model, kept so `compare` can swap `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub infection: InfectionKind,
    pub alpha: Vec<f64>,
    pub weight: WeightKind,
    pub d: Vec<f64>,
}

impl CostSpec {
    pub fn build(&self) -> CostModel {
        let infection = match self.infection {
            InfectionKind::Linear => InfectionCost::Linear {
                alpha: self.alpha.clone(),
            },
            InfectionKind::Quadratic => InfectionCost::Custom(Arc::new(QuadraticInfection {
                alpha: self.alpha.clone(),
            })),
        };
        let weight = match self.weight {
            WeightKind::Quadratic => WeightCost::Quadratic { d: self.d.clone() },
            WeightKind::Quartic => WeightCost::Convex(Arc::new(QuarticWeightCost { d: self.d.clone() })),
            WeightKind::Cosh => WeightCost::Convex(Arc::new(CoshWeightCost { d: self.d.clone() })),
            WeightKind::Sqrt => WeightCost::Concave(Arc::new(SqrtWeightCost { c: self.d.clone() })),
        };
        CostModel { infection, weight }
    }

    pub fn with_uniform_alpha(&self, alpha: f64) -> CostSpec {
        CostSpec {
            alpha: vec![alpha; self.alpha.len()],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub costate: bool,
    pub references: bool,
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub network: Network,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub costs: CostSpec,
    pub mode: Mode,
    pub sweep: SweepConfig,
    pub alphas: Vec<f64>,
    pub verify: VerifySettings,
    pub output: OutputSettings,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Scenario {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::parse(&text, &path.display().to_string(), base, overrides)
    }

    pub fn preset(name: &str, overrides: &Overrides) -> Result<Scenario> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset {name:?}; known presets: {}", known.join(", ")))
        })?;
        Scenario::parse(text, &format!("preset:{name}"), Path::new("."), overrides)
    }

    /// Parse scenario text. `origin` labels diagnostics; `base` anchors
    /// relative paths.
    pub fn parse(text: &str, origin: &str, base: &Path, overrides: &Overrides) -> Result<Scenario> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let seed = overrides.seed.unwrap_or(raw.seed);
        let network = build_network(&raw.network, seed, base)?;
        let n = network.node_count();
        let grid = TimeGrid::new(raw.grid.t_final, raw.grid.steps)?;

        let x0 = match &raw.initial.x0_file {
            Some(file) => {
                let path = base.join(file);
                let values = parse_node_values(&path.display().to_string(), &read(&path)?)?;
                let mut x0 = vec![0.0; n];
                let mut seen = vec![false; n];
                for (i, v) in values {
                    if i >= n {
                        return Err(Error::NodeOutOfRange { node: i, n });
                    }
                    x0[i] = v;
                    seen[i] = true;
                }
                if let Some(i) = seen.iter().position(|s| !s) {
                    return Err(Error::Config(format!("{} gives no initial value for node {i}", path.display())));
                }
                x0
            }
            None => raw.initial.x0.expand(n, "initial.x0")?,
        };

        let costs = CostSpec {
            infection: raw.costs.infection,
            alpha: raw.costs.alpha.expand(n, "costs.alpha")?,
            weight: raw.costs.weight,
            d: raw.costs.d.expand(network.edge_count(), "costs.d")?,
        };
        costs.build().validate(&network)?;

        let s = &raw.solver;
        let sweep = SweepConfig {
            epsilon: overrides.epsilon.unwrap_or(s.epsilon),
            max_iters: overrides.max_iters.unwrap_or(s.max_iters),
            damping: s.damping,
            init: match s.init {
                RawInit::OriginalWeights => InitialControl::OriginalWeights,
                RawInit::Zero => InitialControl::Zero,
            },
            acceleration: match s.acceleration {
                RawAcceleration::None => Acceleration::None,
                RawAcceleration::Anderson => Acceleration::Anderson { depth: s.anderson_depth },
            },
            costate: CostateStorage::Full,
            divergence_window: s.divergence_window,
        };
        sweep.validate()?;

        let alphas = if raw.compare.alphas.is_empty() {
            Vec::new()
        } else {
            raw.compare.alphas.clone()
        };
        if alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("compare.alphas must be non-negative".into()));
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| origin.to_string()),
            seed,
            network,
            grid,
            x0,
            costs,
            mode: overrides.mode.unwrap_or(raw.solver.mode),
            sweep,
            alphas,
            verify: raw.verify,
            output: OutputSettings {
                dir: overrides
                    .out_dir
                    .clone()
                    .unwrap_or_else(|| base.join(&raw.output.dir)),
                costate: raw.output.costate,
                references: raw.output.references,
            },
        })
    }

    pub fn cost_model(&self) -> CostModel {
        self.costs.build()
    }
}

fn build_network(raw: &RawNetwork, seed: u64, base: &Path) -> Result<Network> {
    let sources = [raw.n.is_some() || raw.m.is_some(), raw.links.is_some(), raw.edges.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(Error::Config(
            "[network] needs exactly one of n/m (generate), links (inline) or edges (file)".into(),
        ));
    }
    let beta = raw.beta.unwrap_or(DEFAULT_BETA);
    let sigma = raw.sigma.unwrap_or(DEFAULT_SIGMA);
    let mut net = if let (Some(n), Some(m)) = (raw.n, raw.m) {
        if raw.nodes.is_some() {
            return Err(Error::Config("network.nodes conflicts with n/m".into()));
        }
        let g = generate_barabasi_albert(n, m, seed)?;
        g.with_rates(vec![beta; n], vec![sigma; n])?
    } else if raw.n.is_some() || raw.m.is_some() {
        return Err(Error::Config("generating a network needs both n and m".into()));
    } else {
        let edges = match (&raw.links, &raw.edges) {
            (Some(links), _) => links.clone(),
            (None, Some(file)) => {
                let path = base.join(file);
                parse_edge_list(&path.display().to_string(), &read(&path)?)?
            }
            (None, None) => unreachable!("exactly one source checked above"),
        };
        let inferred = edges.iter().map(|&(a, b, _)| a.max(b) + 1).max().unwrap_or(0);
        let n = raw.nodes.unwrap_or(inferred);
        Network::uniform(n, edges, beta, sigma)?
    };
    if let Some(file) = &raw.params {
        let path = base.join(file);
        let rows = parse_node_params(&path.display().to_string(), &read(&path)?)?;
        let n = net.node_count();
        let mut b = net.beta().to_vec();
        let mut s = net.sigma().to_vec();
        for (i, bi, si) in rows {
            if i >= n {
                return Err(Error::NodeOutOfRange { node: i, n });
            }
            b[i] = bi;
            s[i] = si;
        }
        net = net.with_rates(b, s)?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::parse(text, "test", Path::new("."), &Overrides::default())
    }

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let s = Scenario::preset(name, &Overrides::default()).unwrap();
            assert!(s.network.node_count() >= 2, "{name}");
        }
        assert!(Scenario::preset("nope", &Overrides::default()).is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let s = parse("[network]\nlinks = [[0, 1, 1.0], [1, 0, 1.0]]\n").unwrap();
        assert_eq!(s.grid.steps(), 2000);
        assert_eq!(s.x0, vec![0.16, 0.16]);
        assert_eq!(s.costs.alpha, vec![1.0, 1.0]);
        assert_eq!(s.costs.d, vec![0.2, 0.2]);
        assert_eq!(s.mode, Mode::Game);
        assert_eq!(s.network.beta(), &[0.04, 0.04]);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = parse("seed = 1\n[network]\nlinks = [[0, 1, 1.0]]\nbogus = 3\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("[network\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn network_source_must_be_unique() {
        assert!(parse("[network]\nn = 10\nm = 2\nlinks = [[0, 1, 1.0]]\n").is_err());
        assert!(parse("[network]\nn = 10\n").is_err());
        assert!(parse("[network]\n").is_err());
    }

    #[test]
    fn list_lengths_are_checked() {
        assert!(parse("[network]\nlinks = [[0, 1, 1.0]]\n[costs]\nalpha = [1.0]\n").is_err());
        assert!(parse("[network]\nlinks = [[0, 1, 1.0]]\n[initial]\nx0 = [0.1, 0.2]\n").is_ok());
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            mode: Some(Mode::Central),
            epsilon: Some(1e-8),
            max_iters: Some(7),
            seed: Some(99),
            out_dir: Some(PathBuf::from("/tmp/x")),
        };
        let s = Scenario::parse("[network]\nn = 6\nm = 2\n", "t", Path::new("."), &o).unwrap();
        assert_eq!(s.mode, Mode::Central);
        assert_eq!(s.sweep.epsilon, 1e-8);
        assert_eq!(s.sweep.max_iters, 7);
        assert_eq!(s.seed, 99);
        assert_eq!(s.output.dir, PathBuf::from("/tmp/x"));
    }
}
