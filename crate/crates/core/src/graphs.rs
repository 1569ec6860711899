//! Feature graphs, the ER / BA / WS topology generators and Laplacian
//! utilities.
//!
//! Everything here works with the combinatorial Laplacian `L = D − A` of an
//! unweighted, undirected simple graph.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RandomSource};

/// Undirected simple graph on `p` feature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    p: usize,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    laplacian: Matrix,
}

impl FeatureGraph {
    /// Builds a graph from unordered pairs. Duplicates and orientation are
    /// normalized away; self-loops and out-of-range nodes are rejected.
    pub fn new(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop on node {a}")));
            }
            if a >= p || b >= p {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a},{b}) out of range for {p} nodes"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut degrees = vec![0; p];
        let mut neighbors = vec![Vec::new(); p];
        let mut laplacian = Array2::zeros((p, p));
        for &(i, j) in &edges {
            degrees[i] += 1;
            degrees[j] += 1;
            neighbors[i].push(j);
            neighbors[j].push(i);
            laplacian[[i, j]] = -1.0;
            laplacian[[j, i]] = -1.0;
        }
        for (j, &d) in degrees.iter().enumerate() {
            laplacian[[j, j]] = d as f64;
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            p,
            edges,
            degrees,
            neighbors,
            laplacian,
        })
    }

    pub fn empty(p: usize) -> Result<Self> {
        Self::new(p, std::iter::empty())
    }

    pub fn complete(p: usize) -> Result<Self> {
        Self::new(p, (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))))
    }

    pub fn path(p: usize) -> Result<Self> {
        Self::new(p, (1..p).map(|i| (i - 1, i)))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Array2::zeros((self.p, self.p));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Fraction of the `p(p−1)/2` possible edges that are present.
    pub fn density(&self) -> f64 {
        if self.p < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (self.p * (self.p - 1) / 2) as f64
    }

    /// Unweighted hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.p];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in &self.neighbors[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Component label per node, labels dense from 0 in order of first node.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.p).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut label_of_root = vec![usize::MAX; self.p];
        let mut next = 0;
        (0..self.p)
            .map(|x| {
                let root = find(&mut parent, x);
                if label_of_root[root] == usize::MAX {
                    label_of_root[root] = next;
                    next += 1;
                }
                label_of_root[root]
            })
            .collect()
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Nodes whose degree is strictly below the maximum degree.
    pub fn sub_maximal_nodes(&self) -> Vec<usize> {
        let max = self.degrees.iter().copied().max().unwrap_or(0);
        (0..self.p).filter(|&j| self.degrees[j] < max).collect()
    }

    /// Edge-list text: a `# nodes <p>` header, then one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.p);
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses [`to_edge_list`](Self::to_edge_list) output. Without a header
    /// the node count is `p_hint`, or one past the largest index seen.
    pub fn from_edge_list(text: &str, p_hint: Option<usize>) -> Result<Self> {
        let mut p = p_hint;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(count) = rest.trim().strip_prefix("nodes") {
                    p = Some(count.trim().parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        column: 1,
                        message: format!("bad node count `{}`", count.trim()),
                    })?);
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = |column| -> Result<usize> {
                fields
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: lineno + 1,
                        column,
                        message: format!("expected two node indices, got `{line}`"),
                    })
            };
            pairs.push((next(1)?, next(2)?));
        }
        let p = p.unwrap_or_else(|| pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0));
        Self::new(p, pairs)
    }
}

/// `tr(VᵀLV)`, the Laplacian energy of the columns of `v`.
pub fn laplacian_quadratic(graph: &FeatureGraph, v: &Matrix) -> Result<f64> {
    if v.nrows() != graph.p() {
        return Err(Error::DimensionMismatch(format!(
            "loadings have {} rows, graph has {} nodes",
            v.nrows(),
            graph.p()
        )));
    }
    let lv = graph.laplacian().dot(v);
    Ok((&lv * v).sum().max(0.0))
}

/// Support graph of a precision matrix: edge `(i, j)` iff `|Θ_ij| > threshold`
/// or `|Θ_ji| > threshold`. The diagonal is ignored.
pub fn adjacency_from_precision(theta: &Matrix, threshold: f64) -> Result<FeatureGraph> {
    let p = theta.nrows();
    if theta.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "precision must be square, got {}x{}",
            p,
            theta.ncols()
        )));
    }
    if threshold < 0.0 {
        return Err(Error::InvalidParameter("threshold must be non-negative".into()));
    }
    let pairs = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .filter(|&(i, j)| theta[[i, j]].abs().max(theta[[j, i]].abs()) > threshold);
    FeatureGraph::new(p, pairs.collect::<Vec<_>>())
}

/// Topology family without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "ER")]
    ErdosRenyi,
    #[serde(rename = "BA")]
    BarabasiAlbert,
    #[serde(rename = "WS")]
    WattsStrogatz,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Self::ErdosRenyi, Self::BarabasiAlbert, Self::WattsStrogatz];

    pub fn label(self) -> &'static str {
        match self {
            Self::ErdosRenyi => "ER",
            Self::BarabasiAlbert => "BA",
            Self::WattsStrogatz => "WS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ER" => Some(Self::ErdosRenyi),
            "BA" => Some(Self::BarabasiAlbert),
            "WS" => Some(Self::WattsStrogatz),
            _ => None,
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Topology family with its generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TopologyKind {
    ErdosRenyi { edge_prob: f64 },
    BarabasiAlbert { attach_m: usize },
    WattsStrogatz { ring_k: usize, rewire_prob: f64 },
}

/// Rewiring probability used when a WS graph is requested by density.
pub const DEFAULT_REWIRE_PROB: f64 = 0.1;

impl TopologyKind {
    pub fn topology(&self) -> Topology {
        match self {
            Self::ErdosRenyi { .. } => Topology::ErdosRenyi,
            Self::BarabasiAlbert { .. } => Topology::BarabasiAlbert,
            Self::WattsStrogatz { .. } => Topology::WattsStrogatz,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if p < 3 {
            return bad(format!("need at least 3 nodes, got {p}"));
        }
        match *self {
            Self::ErdosRenyi { edge_prob } if !(0.0..=1.0).contains(&edge_prob) => {
                bad(format!("edge_prob {edge_prob} outside [0,1]"))
            }
            Self::BarabasiAlbert { attach_m } if attach_m < 1 || attach_m >= p => {
                bad(format!("attach_m {attach_m} outside [1,{p})"))
            }
            Self::WattsStrogatz { ring_k, rewire_prob } => {
                if ring_k % 2 != 0 || ring_k < 2 || ring_k >= p {
                    bad(format!("ring_k {ring_k} must be even and in [2,{p})"))
                } else if !(0.0..=1.0).contains(&rewire_prob) {
                    bad(format!("rewire_prob {rewire_prob} outside [0,1]"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Expected edge density of graphs drawn with these parameters.
    pub fn expected_density(&self, p: usize) -> f64 {
        let pairs = (p * (p - 1) / 2) as f64;
        match *self {
            Self::ErdosRenyi { edge_prob } => edge_prob,
            Self::BarabasiAlbert { attach_m } => ba_edge_count(p, attach_m) as f64 / pairs,
            Self::WattsStrogatz { ring_k, .. } => (p * ring_k / 2) as f64 / pairs,
        }
    }
}

/// Edge count of the BA construction: a complete seed graph on `m + 1`
/// nodes, then `m` new edges for each of the remaining `p − m − 1` nodes.
pub fn ba_edge_count(p: usize, m: usize) -> usize {
    m * (m + 1) / 2 + m * (p - m - 1)
}

/// Draws a graph from the given family.
pub fn generate(kind: TopologyKind, p: usize, rs: &mut RandomSource) -> Result<FeatureGraph> {
    kind.validate(p)?;
    let pairs = match kind {
        TopologyKind::ErdosRenyi { edge_prob } => erdos_renyi(p, edge_prob, rs),
        TopologyKind::BarabasiAlbert { attach_m } => barabasi_albert(p, attach_m, rs),
        TopologyKind::WattsStrogatz {
            ring_k,
            rewire_prob,
        } => watts_strogatz(p, ring_k, rewire_prob, rs),
    };
    FeatureGraph::new(p, pairs)
}

fn erdos_renyi(p: usize, prob: f64, rs: &mut RandomSource) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if rs.uniform() < prob {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn barabasi_albert(p: usize, m: usize, rs: &mut RandomSource) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(ba_edge_count(p, m));
    // every edge endpoint, so a uniform pick is a degree-proportional pick
    let mut endpoints = Vec::new();
    for i in 0..=m {
        for j in (i + 1)..=m {
            pairs.push((i, j));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    for new in (m + 1)..p {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            let pick = endpoints[rs.random_range(0..endpoints.len())];
            targets.insert(pick);
        }
        for &t in &targets {
            pairs.push((t, new));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    pairs
}

fn watts_strogatz(p: usize, k: usize, beta: f64, rs: &mut RandomSource) -> Vec<(usize, usize)> {
    let mut adj = vec![BTreeSet::new(); p];
    for u in 0..p {
        for off in 1..=k / 2 {
            let w = (u + off) % p;
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    for off in 1..=k / 2 {
        for u in 0..p {
            let w = (u + off) % p;
            if rs.uniform() >= beta || !adj[u].contains(&w) {
                continue;
            }
            if adj[u].len() >= p - 1 {
                continue;
            }
            let mut target = rs.random_range(0..p);
            while target == u || adj[u].contains(&target) {
                target = rs.random_range(0..p);
            }
            adj[u].remove(&w);
            adj[w].remove(&u);
            adj[u].insert(target);
            adj[target].insert(u);
        }
    }
    (0..p)
        .flat_map(|u| adj[u].iter().filter(move |&&w| w > u).map(move |&w| (u, w)))
        .collect()
}

/// Parameters whose expected density is the feasible value nearest `target`.
///
/// ER hits the target exactly. BA and WS have discrete feasible sets; the
/// nearest member is chosen and its density returned alongside. A target
/// closer to the empty graph than to the sparsest feasible graph is
/// `Infeasible`.
pub fn density_to_params(topology: Topology, p: usize, target: f64) -> Result<(TopologyKind, f64)> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target density {target} outside (0,1]"
        )));
    }
    if p < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 nodes, got {p}")));
    }
    let kind = match topology {
        Topology::ErdosRenyi => TopologyKind::ErdosRenyi { edge_prob: target },
        Topology::BarabasiAlbert => {
            let best = (1..p)
                .min_by(|&a, &b| {
                    let da = (TopologyKind::BarabasiAlbert { attach_m: a }.expected_density(p) - target).abs();
                    let db = (TopologyKind::BarabasiAlbert { attach_m: b }.expected_density(p) - target).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            let sparsest = TopologyKind::BarabasiAlbert { attach_m: 1 }.expected_density(p);
            if target < sparsest / 2.0 {
                return Err(Error::Infeasible {
                    topology: "BA",
                    target,
                    reason: format!("sparsest BA graph has density {sparsest:.4}"),
                });
            }
            TopologyKind::BarabasiAlbert { attach_m: best }
        }
        Topology::WattsStrogatz => {
            let ideal = target * (p - 1) as f64;
            let max_k = if (p - 1) % 2 == 0 { p - 1 } else { p - 2 };
            let k = (2.0 * (ideal / 2.0).round()) as usize;
            if k < 2 {
                return Err(Error::Infeasible {
                    topology: "WS",
                    target,
                    reason: format!("ring lattice needs k >= 2, i.e. density >= {:.4}", 2.0 / (p - 1) as f64),
                });
            }
            TopologyKind::WattsStrogatz {
                ring_k: k.min(max_k),
                rewire_prob: DEFAULT_REWIRE_PROB,
            }
        }
    };
    Ok((kind, kind.expected_density(p)))
}
