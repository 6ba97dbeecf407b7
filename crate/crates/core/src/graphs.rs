//! Discrete Laplacian of a weighted interaction graph and its spectral
//! quantities.
//!
//! Conventions follow the generator form `L_G h(i) = Σ_{j∼i} λ_ij (h(j) − h(i))`,
//! so `L_G` is negative semidefinite; the spectral gap `ρ` is the second
//! smallest eigenvalue of `−L_G` and the Dirichlet eigenvalue `ρ_D` is the
//! smallest eigenvalue of `−L_G` with one vertex pinned.
//!
//! The Cheeger constant is `min w(∂A)/|A|` over nonempty `A` with
//! `|A| ≤ ⌊|G|/2⌋`, with `w(∂A)` the total weight of the cut edges. The
//! non-strict size bound admits the half-chain minimiser `{0, …, ⌊(N+1)/2⌋−1}`
//! on even vertex counts; a strict `|A| < |G|/2` would exclude it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Exhaustive Cheeger enumeration is limited to this many vertices.
pub const CHEEGER_MAX_VERTICES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Finite, connected, undirected graph with positive edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct InteractionGraph {
    vertex_count: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    vertices: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<RawGraph> for InteractionGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        InteractionGraph::new(raw.vertices, &raw.edges)
    }
}

impl From<InteractionGraph> for RawGraph {
    fn from(g: InteractionGraph) -> Self {
        RawGraph {
            vertices: g.vertex_count,
            edges: g.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
        }
    }
}

impl InteractionGraph {
    /// Validates and normalises `(i, j, λ_ij)` triples to `i < j`.
    pub fn new(vertex_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if vertex_count < 2 {
            return Err(Error::invalid("graph needs at least 2 vertices"));
        }
        let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at vertex {a}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) has weight {w}, must be > 0"
                )));
            }
            let (i, j) = (a.min(b), a.max(b));
            if out.iter().any(|e| e.i == i && e.j == j) {
                return Err(Error::invalid(format!("duplicate edge ({i}, {j})")));
            }
            out.push(Edge { i, j, weight: w });
        }
        let g = InteractionGraph {
            vertex_count,
            edges: out,
        };
        if !g.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(g)
    }

    /// Path `0 − 1 − … − n` with uniform weight (the chain of `n+1` particles).
    pub fn chain(n: usize, lambda: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("chain needs N >= 1"));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, i + 1, lambda)).collect();
        Self::new(n + 1, &edges)
    }

    /// Complete graph on `vertices` vertices with uniform weight.
    pub fn complete(vertices: usize, lambda: f64) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..vertices {
            for j in (i + 1)..vertices {
                edges.push((i, j, lambda));
            }
        }
        Self::new(vertices, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Same graph with every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| (e.i, e.j, e.weight * factor))
            .collect();
        Self::new(self.vertex_count, &edges)
    }

    /// `Some((N, λ))` when the graph is the uniform path `0 − 1 − … − N`.
    pub fn as_uniform_chain(&self) -> Option<(usize, f64)> {
        let n = self.vertex_count - 1;
        if self.edges.len() != n {
            return None;
        }
        let w = self.edges[0].weight;
        let path = (0..n).all(|k| {
            self.edges
                .iter()
                .any(|e| e.i == k && e.j == k + 1 && e.weight == w)
        });
        path.then_some((n, w))
    }

    fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let adj = self.neighbours();
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// The `(N+1)×(N+1)` matrix of `L_G`: off-diagonal `λ_ij`, zero row sums.
pub fn laplacian(g: &InteractionGraph) -> DMatrix<f64> {
    let n = g.vertex_count();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        l[(e.i, e.j)] += e.weight;
        l[(e.j, e.i)] += e.weight;
        l[(e.i, e.i)] -= e.weight;
        l[(e.j, e.j)] -= e.weight;
    }
    l
}

/// Second-smallest eigenvalue of `−L_G`.
pub fn spectral_gap(g: &InteractionGraph) -> f64 {
    let (vals, _) = linalg::sym_eigen(&(-laplacian(g)));
    vals[1]
}

/// `−L_G` with row and column `pinned` deleted.
pub fn pinned_laplacian(g: &InteractionGraph, pinned: usize) -> Result<DMatrix<f64>> {
    let n = g.vertex_count();
    if pinned >= n {
        return Err(Error::invalid(format!(
            "pinned vertex {pinned} out of range for {n} vertices"
        )));
    }
    Ok((-laplacian(g)).remove_row(pinned).remove_column(pinned))
}

/// Smallest eigenvalue of `−L_G` restricted to `h(pinned) = 0`.
pub fn dirichlet_eigenvalue(g: &InteractionGraph, pinned: usize) -> Result<f64> {
    Ok(linalg::lambda_min(&pinned_laplacian(g, pinned)?))
}

/// Closed-form lower bounds for the uniform chain of `N+1` particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainBounds {
    /// `λ/(N+1)²`, stated for `N ≥ 3` only.
    pub rho_lower: Option<f64>,
    /// `λ(1 − cos(π/(2N)))`.
    pub rho_d_lower: f64,
}

pub fn chain_bounds(n: usize, lambda: f64) -> Result<ChainBounds> {
    if n < 1 {
        return Err(Error::invalid("chain bounds need N >= 1"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let nf = n as f64;
    Ok(ChainBounds {
        rho_lower: (n >= 3).then(|| lambda / (nf + 1.0).powi(2)),
        rho_d_lower: lambda * (1.0 - (std::f64::consts::PI / (2.0 * nf)).cos()),
    })
}

/// Exact Cheeger constant by Gray-code enumeration of vertex subsets.
pub fn cheeger_constant(g: &InteractionGraph) -> Result<f64> {
    let n = g.vertex_count();
    if n > CHEEGER_MAX_VERTICES {
        return Err(Error::UnsupportedSize(format!(
            "Cheeger enumeration is limited to {CHEEGER_MAX_VERTICES} vertices, got {n}"
        )));
    }
    let adj = g.neighbours();
    let half = n / 2;
    let mut member = vec![false; n];
    let mut size = 0usize;
    let mut cut = 0.0f64;
    let mut best = f64::INFINITY;
    let mut best_mask = 0u32;
    let mut mask = 0u32;
    for k in 1u32..(1u32 << n) {
        let v = k.trailing_zeros() as usize;
        let entering = !member[v];
        for &(u, w) in &adj[v] {
            // An edge to a member becomes internal on entry, cut on exit.
            let delta = if member[u] { -w } else { w };
            cut += if entering { delta } else { -delta };
        }
        member[v] = entering;
        mask ^= 1 << v;
        if entering {
            size += 1;
        } else {
            size -= 1;
        }
        if size >= 1 && size <= half {
            let ratio = cut / size as f64;
            if ratio < best {
                best = ratio;
                best_mask = mask;
            }
        }
    }
    // Recompute the minimiser exactly to shed accumulated round-off.
    let inside = |v: usize| best_mask & (1 << v) != 0;
    let exact_cut: f64 = g
        .edges()
        .iter()
        .filter(|e| inside(e.i) != inside(e.j))
        .map(|e| e.weight)
        .sum();
    Ok(exact_cut / best_mask.count_ones() as f64)
}

/// Spectral quantities of a graph, with the chain bounds when it is a
/// uniform chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub rho: f64,
    pub rho_d: f64,
    pub cheeger: Option<f64>,
    pub chain_lower_rho: Option<f64>,
    pub chain_lower_rho_d: Option<f64>,
}

pub fn gap_report(g: &InteractionGraph, pinned: usize) -> Result<GapReport> {
    let chain = g
        .as_uniform_chain()
        .map(|(n, lambda)| chain_bounds(n, lambda))
        .transpose()?;
    let cheeger = if g.vertex_count() <= CHEEGER_MAX_VERTICES {
        Some(cheeger_constant(g)?)
    } else {
        None
    };
    Ok(GapReport {
        rho: spectral_gap(g),
        rho_d: dirichlet_eigenvalue(g, pinned)?,
        cheeger,
        chain_lower_rho: chain.and_then(|c| c.rho_lower),
        chain_lower_rho_d: chain.map(|c| c.rho_d_lower),
    })
}
