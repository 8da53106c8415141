//! Directed weighted networks, scale-free generation, reachability and
//! spectral outbreak diagnostics.
//!
//! Edge convention: an edge `i -> j` with weight `w_ij` means node `i`
//! acquires infection from node `j`; `w_ij` multiplies `x_j` in the
//! dynamics of `x_i`. Node `i` owns (controls) its out-edges.

use std::collections::{BTreeSet, VecDeque};
use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Default infection rate of generated networks.
pub const DEFAULT_BETA: f64 = 0.04;
/// Default curing rate of generated networks.
pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    /// Original (undisturbed) weight `w^o`.
    pub weight: f64,
}

/// A directed weighted graph with per-node infection and curing rates.
///
/// Edges are kept sorted by `(from, to)`, so the out-edges of a node form a
/// contiguous range of edge ids. That edge order is the column order of
/// every control trajectory in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    edges: Vec<Edge>,
    beta: Vec<f64>,
    sigma: Vec<f64>,
    weight_cap: Option<Vec<f64>>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_edges: Vec<usize>,
}

impl Network {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
        beta: Vec<f64>,
        sigma: Vec<f64>,
    ) -> Result<Self> {
        if beta.len() != n {
            return Err(Error::dim("beta", n, beta.len()));
        }
        if sigma.len() != n {
            return Err(Error::dim("sigma", n, sigma.len()));
        }
        for (i, &b) in beta.iter().enumerate() {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "infection rate of node {i} must be finite and >= 0, got {b}"
                )));
            }
        }
        for (i, &s) in sigma.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "curing rate of node {i} must be finite and > 0, got {s}"
                )));
            }
        }

        let mut list: Vec<Edge> = Vec::new();
        for (from, to, weight) in edges {
            if from >= n {
                return Err(Error::NodeOutOfRange { node: from, n });
            }
            if to >= n {
                return Err(Error::NodeOutOfRange { node: to, n });
            }
            if from == to {
                return Err(Error::InvalidNetwork(format!("self-loop on node {from}")));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {from}->{to} must have a finite positive weight, got {weight}"
                )));
            }
            list.push(Edge { from, to, weight });
        }
        list.sort_by_key(|e| (e.from, e.to));
        if let Some(w) = list.windows(2).find(|w| w[0].from == w[1].from && w[0].to == w[1].to) {
            return Err(Error::InvalidNetwork(format!(
                "duplicate edge {}->{}",
                w[0].from, w[0].to
            )));
        }

        let mut out_offsets = vec![0usize; n + 1];
        for e in &list {
            out_offsets[e.from + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }

        let mut in_offsets = vec![0usize; n + 1];
        for e in &list {
            in_offsets[e.to + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut fill = in_offsets.clone();
        let mut in_edges = vec![0usize; list.len()];
        for (id, e) in list.iter().enumerate() {
            in_edges[fill[e.to]] = id;
            fill[e.to] += 1;
        }

        Ok(Network {
            n,
            edges: list,
            beta,
            sigma,
            weight_cap: None,
            out_offsets,
            in_offsets,
            in_edges,
        })
    }

    /// Network with the same infection and curing rate on every node.
    pub fn uniform(
        n: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
        beta: f64,
        sigma: f64,
    ) -> Result<Self> {
        Network::new(n, edges, vec![beta; n], vec![sigma; n])
    }

    /// Attach per-edge upper bounds `w̄_ij` (edge order). They are stored
    /// for completeness; admissible controls never exceed `w^o` anyway.
    pub fn with_weight_cap(mut self, caps: Vec<f64>) -> Result<Self> {
        if caps.len() != self.edges.len() {
            return Err(Error::dim("weight_cap", self.edges.len(), caps.len()));
        }
        if let Some((id, c)) = caps
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::InvalidNetwork(format!("weight cap of edge {id} is {c}")));
        }
        self.weight_cap = Some(caps);
        Ok(self)
    }

    pub fn with_rates(mut self, beta: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let edges: Vec<_> = self.edges.iter().map(|e| (e.from, e.to, e.weight)).collect();
        let caps = self.weight_cap.take();
        let net = Network::new(self.n, edges, beta, sigma)?;
        match caps {
            Some(c) => net.with_weight_cap(c),
            None => Ok(net),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn weight_cap(&self) -> Option<&[f64]> {
        self.weight_cap.as_deref()
    }

    /// Original weights in edge order.
    pub fn original_weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    /// Edge ids of the out-edges of `i` (the edges player `i` controls).
    pub fn out_edges(&self, i: NodeId) -> Range<usize> {
        self.out_offsets[i]..self.out_offsets[i + 1]
    }

    /// Edge ids of the in-edges of `i`.
    pub fn in_edges(&self, i: NodeId) -> &[usize] {
        &self.in_edges[self.in_offsets[i]..self.in_offsets[i + 1]]
    }

    pub fn out_degree(&self, i: NodeId) -> usize {
        self.out_offsets[i + 1] - self.out_offsets[i]
    }

    pub fn in_degree(&self, i: NodeId) -> usize {
        self.in_offsets[i + 1] - self.in_offsets[i]
    }

    pub fn edge_index(&self, from: NodeId, to: NodeId) -> Option<usize> {
        if from >= self.n {
            return None;
        }
        let range = self.out_edges(from);
        self.edges[range.clone()]
            .binary_search_by_key(&to, |e| e.to)
            .ok()
            .map(|k| range.start + k)
    }

    fn check_node(&self, i: NodeId) -> Result<()> {
        if i >= self.n {
            Err(Error::NodeOutOfRange { node: i, n: self.n })
        } else {
            Ok(())
        }
    }

    /// `{ j : (i, j) ∈ E }`.
    pub fn out_neighbors(&self, i: NodeId) -> Result<BTreeSet<NodeId>> {
        self.check_node(i)?;
        Ok(self.edges[self.out_edges(i)].iter().map(|e| e.to).collect())
    }

    /// `{ j : (j, i) ∈ E }`.
    pub fn in_neighbors(&self, i: NodeId) -> Result<BTreeSet<NodeId>> {
        self.check_node(i)?;
        Ok(self.in_edges(i).iter().map(|&e| self.edges[e].from).collect())
    }

    /// All nodes with a directed path to `i`, including `i` itself.
    ///
    /// Breadth-first search along reversed edges.
    pub fn reachable_from(&self, i: NodeId) -> Result<BTreeSet<NodeId>> {
        self.check_node(i)?;
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(v) = queue.pop_front() {
            for &e in self.in_edges(v) {
                let u = self.edges[e].from;
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        Ok((0..self.n).filter(|&v| seen[v]).collect())
    }

    /// Reachability sets of every node.
    pub fn reachability(&self) -> ReachSets {
        let sets = (0..self.n)
            .map(|i| self.reachable_from(i).expect("node index in range"))
            .collect();
        ReachSets::from_sets(self.n, sets)
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let backward = self.reachable_from(0).map(|r| r.len()).unwrap_or(0);
        if backward != self.n {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for e in &self.edges[self.out_edges(v)] {
                if !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Dense `W^o diag(β) − diag(σ)`, the linearization of the mean-field
    /// dynamics at the disease-free state.
    pub fn outbreak_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(self.n, self.n);
        for e in &self.edges {
            m[(e.from, e.to)] += e.weight * self.beta[e.to];
        }
        for i in 0..self.n {
            m[(i, i)] -= self.sigma[i];
        }
        m
    }
}

/// Reachability sets `R_i` for every node, with O(1) membership tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSets {
    n: usize,
    sets: Vec<Vec<NodeId>>,
    member: Vec<bool>,
}

impl ReachSets {
    fn from_sets(n: usize, sets: Vec<BTreeSet<NodeId>>) -> Self {
        let mut member = vec![false; n * n];
        let sets: Vec<Vec<NodeId>> = sets
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                for &j in &s {
                    member[i * n + j] = true;
                }
                s.into_iter().collect()
            })
            .collect();
        ReachSets { n, sets, member }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// `R_i`, sorted ascending.
    pub fn set(&self, i: NodeId) -> &[NodeId] {
        &self.sets[i]
    }

    /// `j ∈ R_i`: a directed path `j ⇝ i` exists.
    pub fn contains(&self, i: NodeId, j: NodeId) -> bool {
        self.member[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub mean_out_degree: f64,
    pub mean_in_degree: f64,
    pub max_out_degree: usize,
}

pub fn degree_stats(net: &Network) -> DegreeStats {
    let n = net.node_count();
    if n == 0 {
        return DegreeStats {
            mean_out_degree: 0.0,
            mean_in_degree: 0.0,
            max_out_degree: 0,
        };
    }
    let total: usize = (0..n).map(|i| net.out_degree(i)).sum();
    let total_in: usize = (0..n).map(|i| net.in_degree(i)).sum();
    DegreeStats {
        mean_out_degree: total as f64 / n as f64,
        mean_in_degree: total_in as f64 / n as f64,
        max_out_degree: (0..n).map(|i| net.out_degree(i)).max().unwrap_or(0),
    }
}

/// Largest real part over the spectrum of `W^o diag(β) − diag(σ)`.
///
/// A positive value puts the unadapted network in the outbreak regime.
pub fn largest_real_eigenvalue(net: &Network) -> f64 {
    if net.node_count() == 0 {
        return f64::NEG_INFINITY;
    }
    net.outbreak_matrix()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bi-directional Barabási–Albert network with unit weights.
///
/// Starts from the complete graph on `m + 1` nodes; each further node links
/// to `m` distinct existing nodes chosen with probability proportional to
/// their degree. Every undirected link becomes two directed edges of weight
/// one. Rates are set to [`DEFAULT_BETA`] and [`DEFAULT_SIGMA`].
pub fn generate_barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Network> {
    if m < 1 || n <= m {
        return Err(Error::InvalidParameter(format!(
            "Barabási–Albert generation needs n > m >= 1, got n = {n}, m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links: Vec<(usize, usize)> = Vec::new();
    // every link endpoint, so a uniform draw is degree-proportional
    let mut endpoints: Vec<usize> = Vec::new();
    for a in 0..=m {
        for b in (a + 1)..=m {
            links.push((a, b));
            endpoints.push(a);
            endpoints.push(b);
        }
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for new in (m + 1)..n {
        chosen.clear();
        while chosen.len() < m {
            let target = endpoints[rng.random_range(0..endpoints.len())];
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &t in &chosen {
            links.push((new, t));
            endpoints.push(new);
            endpoints.push(t);
        }
    }
    let edges = links
        .into_iter()
        .flat_map(|(a, b)| [(a, b, 1.0), (b, a, 1.0)]);
    Network::uniform(n, edges, DEFAULT_BETA, DEFAULT_SIGMA)
}

fn parse_fields<'a>(
    path: &str,
    line_no: usize,
    line: &'a str,
    expected: usize,
) -> Result<Option<Vec<&'a str>>> {
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = content.split_whitespace().collect();
    if fields.len() != expected {
        return Err(Error::Parse {
            path: path.to_string(),
            line: line_no,
            message: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    Ok(Some(fields))
}

fn parse_num<T: std::str::FromStr>(path: &str, line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

/// Parse an edge list: one `i j w` triple per line, 0-based ids.
/// Blank lines and `#` comments are ignored. `path` only labels errors.
pub fn parse_edge_list(path: &str, text: &str) -> Result<Vec<(NodeId, NodeId, f64)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let Some(f) = parse_fields(path, k + 1, line, 3)? else {
            continue;
        };
        out.push((
            parse_num(path, k + 1, f[0], "source node")?,
            parse_num(path, k + 1, f[1], "target node")?,
            parse_num(path, k + 1, f[2], "weight")?,
        ));
    }
    Ok(out)
}

/// Parse per-node parameters: one `i beta sigma` triple per line.
pub fn parse_node_params(path: &str, text: &str) -> Result<Vec<(NodeId, f64, f64)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let Some(f) = parse_fields(path, k + 1, line, 3)? else {
            continue;
        };
        out.push((
            parse_num(path, k + 1, f[0], "node")?,
            parse_num(path, k + 1, f[1], "beta")?,
            parse_num(path, k + 1, f[2], "sigma")?,
        ));
    }
    Ok(out)
}

/// Parse `i value` pairs (per-node initial infection and similar).
pub fn parse_node_values(path: &str, text: &str) -> Result<Vec<(NodeId, f64)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let Some(f) = parse_fields(path, k + 1, line, 2)? else {
            continue;
        };
        out.push((
            parse_num(path, k + 1, f[0], "node")?,
            parse_num(path, k + 1, f[1], "value")?,
        ));
    }
    Ok(out)
}

pub fn format_edge_list(net: &Network) -> String {
    let mut s = String::new();
    for e in net.edges() {
        s.push_str(&format!("{} {} {}\n", e.from, e.to, e.weight));
    }
    s
}

pub fn format_node_params(net: &Network) -> String {
    let mut s = String::new();
    for i in 0..net.node_count() {
        s.push_str(&format!("{} {} {}\n", i, net.beta()[i], net.sigma()[i]));
    }
    s
}
