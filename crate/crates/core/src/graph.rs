//! Weighted undirected graphs and their (regularized) Laplacians.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regularization used when none is given explicitly (σ⁻² = 0.01).
pub const DEFAULT_SIGMA: f64 = 10.0;

/// Absolute tolerance for sign, symmetry and row-sum checks.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Smallest eigenvalue a Laplacian must exceed to count as nonsingular.
pub const NONSINGULAR_EIGEN_TOL: f64 = 1e-10;

/// Undirected graph with nonnegative edge weights.
///
/// Each edge is stored once as `(i, j, w)` with `i < j`; the weight applies in
/// both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<T> {
    node_count: usize,
    edges: Vec<(usize, usize, T)>,
    node_names: Option<Vec<String>>,
}

impl<T: Scalar> WeightedGraph<T> {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut seen = HashMap::new();
        let mut stored = Vec::new();
        for (k, (i, j, w)) in edges.into_iter().enumerate() {
            if i >= node_count || j >= node_count {
                return Err(Error::invalid(format!(
                    "edge {k}: node id out of range for {node_count} nodes"
                )));
            }
            if i == j {
                return Err(Error::invalid(format!("edge {k}: self-loop on node {i}")));
            }
            if !(w >= T::zero()) {
                return Err(Error::invalid(format!("edge {k}: negative weight")));
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key, k).is_some() {
                return Err(Error::invalid(format!("edge {k}: duplicate edge {}-{}", key.0, key.1)));
            }
            stored.push((key.0, key.1, w));
        }
        Ok(Self {
            node_count,
            edges: stored,
            node_names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.node_count {
            return Err(Error::invalid(format!(
                "{} node names for {} nodes",
                names.len(),
                self.node_count
            )));
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize, T)] {
        &self.edges
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// Symmetric weight lookup; zero when there is no edge.
    pub fn weight(&self, i: usize, j: usize) -> T {
        let key = (i.min(j), i.max(j));
        self.edges
            .iter()
            .find(|&&(a, b, _)| (a, b) == key)
            .map_or(T::zero(), |e| e.2)
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Connected components, each sorted ascending, ordered by their lowest id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.node_count];
        let mut out = Vec::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.node_count > 0 && self.components().len() == 1
    }

    /// Subgraph induced by `nodes` (ascending), renumbered 0..nodes.len().
    pub fn induced(&self, nodes: &[usize]) -> (Self, IdMap) {
        let map = IdMap::from_kept(self.node_count, nodes);
        let edges = self
            .edges
            .iter()
            .filter_map(|&(i, j, w)| Some((map.to_new(i)?, map.to_new(j)?, w)))
            .collect();
        let node_names = self
            .node_names
            .as_ref()
            .map(|names| nodes.iter().map(|&n| names[n].clone()).collect());
        (
            Self {
                node_count: nodes.len(),
                edges,
                node_names,
            },
            map,
        )
    }
}

/// Old ↔ new node id correspondence produced by subgraph extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    old_to_new: Vec<Option<usize>>,
    new_to_old: Vec<usize>,
}

impl IdMap {
    fn from_kept(old_count: usize, kept: &[usize]) -> Self {
        let mut old_to_new = vec![None; old_count];
        for (new, &old) in kept.iter().enumerate() {
            old_to_new[old] = Some(new);
        }
        Self {
            old_to_new,
            new_to_old: kept.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_kept(n, &(0..n).collect::<Vec<_>>())
    }

    pub fn to_new(&self, old: usize) -> Option<usize> {
        self.old_to_new.get(old).copied().flatten()
    }

    pub fn to_old(&self, new: usize) -> usize {
        self.new_to_old[new]
    }

    pub fn len(&self) -> usize {
        self.new_to_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_to_old.is_empty()
    }
}

/// Parses a whitespace-separated `i j w` edge list (0-based ids, `#` comments).
pub fn load_edge_list<T: Scalar, R: BufRead>(source: R) -> Result<WeightedGraph<T>> {
    let mut edges = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut max_id = None;
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                lineno,
                format!("expected `i j w`, got {} fields", fields.len()),
            ));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node id `{}`", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node id `{}`", fields[1])))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad weight `{}`", fields[2])))?;
        if !w.is_finite() {
            return Err(Error::parse(lineno, "non-finite weight"));
        }
        if w < 0.0 {
            return Err(Error::parse(lineno, "negative weight"));
        }
        if w == 0.0 {
            return Err(Error::parse(lineno, "zero weight"));
        }
        if i == j {
            return Err(Error::parse(lineno, format!("self-loop on node {i}")));
        }
        let key = (i.min(j), i.max(j));
        if let Some(first) = seen.insert(key, lineno) {
            return Err(Error::parse(
                lineno,
                format!("duplicate edge {}-{} (first on line {first})", key.0, key.1),
            ));
        }
        max_id = Some(max_id.unwrap_or(0).max(key.1));
        edges.push((key.0, key.1, T::lit(w)));
    }
    let node_count = max_id.map_or(0, |m| m + 1);
    WeightedGraph::new(node_count, edges)
}

/// Reads a node-name sidecar: line `k` names node `k`.
pub fn load_node_names<R: BufRead>(source: R) -> Result<Vec<String>> {
    source
        .lines()
        .map(|l| l.map(|s| s.trim_end().to_string()).map_err(Error::from))
        .collect()
}

/// Induced subgraph on the largest connected component.
///
/// Ties go to the component containing the lowest original node id.
pub fn largest_connected_component<T: Scalar>(g: &WeightedGraph<T>) -> Result<(WeightedGraph<T>, IdMap)> {
    if g.node_count() == 0 {
        return Err(Error::invalid("empty graph has no components"));
    }
    let mut best: Option<Vec<usize>> = None;
    for comp in g.components() {
        if best.as_ref().is_none_or(|b| comp.len() > b.len()) {
            best = Some(comp);
        }
    }
    Ok(g.induced(&best.expect("nonempty graph")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    Unregularized,
    Regularized,
    /// Row and column of this (graph) node removed.
    NodeDeleted(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LaplacianMode<T> {
    Unregularized,
    /// Per-node σᵢ > 0; adds diag(σᵢ⁻²).
    Regularized(Vec<T>),
    DeleteNode(usize),
}

impl<T: Scalar> LaplacianMode<T> {
    pub fn uniform(node_count: usize, sigma: T) -> Self {
        LaplacianMode::Regularized(vec![sigma; node_count])
    }

    pub fn default_regularized(node_count: usize) -> Self {
        Self::uniform(node_count, T::lit(DEFAULT_SIGMA))
    }
}

/// Dense symmetric graph Laplacian.
///
/// `nodes[k]` is the graph node id of row/column `k`; ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian<T: Scalar> {
    matrix: DMatrix<T>,
    kind: LaplacianKind,
    regularization: Option<Vec<T>>,
    nodes: Vec<usize>,
}

impl<T: Scalar> Laplacian<T> {
    /// Wraps an arbitrary square matrix without checking it; run
    /// [`validate_conditions`] before relying on Laplacian properties.
    pub fn from_matrix(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("Laplacian must be square"));
        }
        let n = matrix.nrows();
        Ok(Self {
            matrix,
            kind: LaplacianKind::Unregularized,
            regularization: None,
            nodes: (0..n).collect(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn regularization(&self) -> Option<&[T]> {
        self.regularization.as_deref()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Matrix row of graph node `node`.
    pub fn index_of(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    pub(crate) fn indices_of(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|&v| {
                self.index_of(v)
                    .ok_or_else(|| Error::invalid(format!("node {v} is not part of the Laplacian")))
            })
            .collect()
    }

    /// Multiplies every entry by `gamma`.
    pub fn scaled(&self, gamma: T) -> Self {
        Self {
            matrix: &self.matrix * gamma,
            ..self.clone()
        }
    }
}

/// Builds `diag(W) − W` with the requested modification.
pub fn build_laplacian<T: Scalar>(g: &WeightedGraph<T>, mode: &LaplacianMode<T>) -> Result<Laplacian<T>> {
    let n = g.node_count();
    let mut m = DMatrix::zeros(n, n);
    for &(i, j, w) in g.edges() {
        m[(i, j)] -= w;
        m[(j, i)] -= w;
        m[(i, i)] += w;
        m[(j, j)] += w;
    }
    match mode {
        LaplacianMode::Unregularized => Ok(Laplacian {
            matrix: m,
            kind: LaplacianKind::Unregularized,
            regularization: None,
            nodes: (0..n).collect(),
        }),
        LaplacianMode::Regularized(sigma) => {
            if sigma.len() != n {
                return Err(Error::invalid(format!("{} σ values for {n} nodes", sigma.len())));
            }
            for (i, &s) in sigma.iter().enumerate() {
                if !(s > T::zero()) {
                    return Err(Error::invalid(format!("σ for node {i} must be positive")));
                }
                m[(i, i)] += T::one() / (s * s);
            }
            Ok(Laplacian {
                matrix: m,
                kind: LaplacianKind::Regularized,
                regularization: Some(sigma.clone()),
                nodes: (0..n).collect(),
            })
        }
        LaplacianMode::DeleteNode(v) => {
            let v = *v;
            if v >= n {
                return Err(Error::invalid(format!("cannot delete node {v}: graph has {n} nodes")));
            }
            if !g.is_connected() {
                return Err(Error::invalid("node deletion requires a connected graph"));
            }
            let m = crate::linalg::remove_index(m, v);
            Ok(Laplacian {
                matrix: m,
                kind: LaplacianKind::NodeDeleted(v),
                regularization: None,
                nodes: (0..n).filter(|&k| k != v).collect(),
            })
        }
    }
}

/// Outcome of checking the structural Laplacian conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport<T> {
    /// Nonnegative diagonal, nonpositive off-diagonal.
    pub sign_ok: bool,
    pub symmetric_ok: bool,
    /// Off-diagonal sparsity pattern forms a single connected component.
    pub connected_ok: bool,
    /// Every row sums to a nonnegative value.
    pub rowsum_ok: bool,
    pub nonsingular_ok: bool,
    pub min_eigenvalue: T,
}

impl<T> ConditionReport<T> {
    pub fn all_ok(&self) -> bool {
        self.sign_ok && self.symmetric_ok && self.connected_ok && self.rowsum_ok && self.nonsingular_ok
    }

    /// Everything except nonsingularity.
    pub fn structure_ok(&self) -> bool {
        self.sign_ok && self.symmetric_ok && self.connected_ok && self.rowsum_ok
    }
}

pub fn validate_conditions<T: Scalar>(l: &Laplacian<T>, tol: T) -> ConditionReport<T> {
    let m = l.matrix();
    let n = m.nrows();
    let mut sign_ok = true;
    let mut symmetric_ok = true;
    let mut rowsum_ok = true;
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            let a = m[(i, j)];
            row += a;
            if i == j {
                sign_ok &= a >= -tol;
            } else {
                sign_ok &= a <= tol;
                symmetric_ok &= (a - m[(j, i)]).abs() <= tol;
            }
        }
        rowsum_ok &= row >= -tol;
    }

    let connected_ok = {
        let mut seen = vec![false; n];
        let mut stack = Vec::new();
        if n > 0 {
            seen[0] = true;
            stack.push(0);
        }
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && v != u && (m[(u, v)].abs() > tol || m[(v, u)].abs() > tol) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };

    let min_eigenvalue = if n == 0 {
        T::lit(f64::INFINITY)
    } else {
        let sym = crate::linalg::symmetrize(m.clone());
        SymmetricEigen::new(sym).eigenvalues.min()
    };
    ConditionReport {
        sign_ok,
        symmetric_ok,
        connected_ok,
        rowsum_ok,
        nonsingular_ok: min_eigenvalue > T::lit(NONSINGULAR_EIGEN_TOL),
        min_eigenvalue,
    }
}
