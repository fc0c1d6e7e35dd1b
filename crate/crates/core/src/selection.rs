//! Risk criteria and budgeted greedy query selection.
//!
//! The greedy engine keeps the conditional covariance `Σ = L_U⁻¹` of the
//! unlabeled nodes and evaluates every candidate's risk from one column of
//! `Σ`. Committing a query removes that node with a rank-one downdate, so a
//! run of `k` queries costs one factorization plus `O(k N²)`.

use std::cmp::Ordering;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::grf::{split, TestSet};
use crate::linalg;
use crate::scalar::Scalar;

/// Diagonal entries of `Σ` at or below this are treated as deterministic nodes.
pub const MIN_PIVOT: f64 = 1e-12;

/// Relative score difference below which two candidates count as tied.
pub(crate) const TIE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriterionKind {
    /// V-optimality: trace of the test-set covariance.
    Classification,
    /// Σ-optimality: grand sum of the test-set covariance.
    Survey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Criterion {
    pub kind: CriterionKind,
    pub test: TestSet,
}

impl Criterion {
    pub fn new(kind: CriterionKind, test: TestSet) -> Self {
        Self { kind, test }
    }

    pub fn classification() -> Self {
        Self::new(CriterionKind::Classification, TestSet::AllUnlabeled)
    }

    pub fn survey() -> Self {
        Self::new(CriterionKind::Survey, TestSet::AllUnlabeled)
    }
}

/// Per-node query costs (indexed by graph node id) and a total limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget<T> {
    costs: Vec<T>,
    limit: T,
}

impl<T: Scalar> Budget<T> {
    pub fn new(costs: Vec<T>, limit: T) -> Result<Self> {
        if let Some(i) = costs.iter().position(|&c| !(c > T::zero())) {
            return Err(Error::invalid(format!("cost of node {i} must be positive")));
        }
        if !(limit > T::zero()) {
            return Err(Error::invalid("budget limit must be positive"));
        }
        Ok(Self { costs, limit })
    }

    pub fn unit(node_count: usize, limit: T) -> Result<Self> {
        Self::new(vec![T::one(); node_count], limit)
    }

    pub fn limit(&self) -> T {
        self.limit
    }

    pub fn costs(&self) -> &[T] {
        &self.costs
    }

    pub fn cost(&self, node: usize) -> Option<T> {
        self.costs.get(node).copied()
    }

    pub fn with_limit(&self, limit: T) -> Result<Self> {
        Self::new(self.costs.clone(), limit)
    }

    /// Whether `spent` stays within the limit, up to accumulated rounding.
    pub fn allows(&self, spent: T) -> bool {
        within(spent, self.limit)
    }
}

fn within<T: Scalar>(spent: T, limit: T) -> bool {
    spent <= limit + limit * T::default_epsilon() * T::lit(256.0)
}

/// A covariance matrix whose rows/columns are labeled with graph node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<T: Scalar> {
    nodes: Vec<usize>,
    matrix: DMatrix<T>,
}

impl<T: Scalar> Covariance<T> {
    pub fn new(nodes: Vec<usize>, matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() != nodes.len() || matrix.ncols() != nodes.len() {
            return Err(Error::invalid("covariance shape does not match its node list"));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("covariance node ids must be strictly ascending"));
        }
        Ok(Self { nodes, matrix })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn position(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Covariance after additionally labeling `node`:
/// `Σ − Σ_{*v} Σ_{v*} / Σ_{vv}` with row and column `v` dropped.
pub fn rank_one_downdate<T: Scalar>(cov: &Covariance<T>, node: usize) -> Result<Covariance<T>> {
    let k = cov
        .position(node)
        .ok_or_else(|| Error::invalid(format!("node {node} is not in the covariance")))?;
    let m = &cov.matrix;
    let pivot = m[(k, k)];
    if !(pivot > T::lit(MIN_PIVOT)) {
        return Err(Error::Numerical(format!(
            "conditional variance of node {node} is {pivot}; node is (nearly) deterministic"
        )));
    }
    let n = m.nrows() - 1;
    let skip = |r: usize| if r < k { r } else { r + 1 };
    let col = m.column(k);
    let matrix = DMatrix::from_fn(n, n, |r, c| {
        let (r, c) = (skip(r), skip(c));
        m[(r, c)] - col[r] * col[c] / pivot
    });
    let mut nodes = cov.nodes.clone();
    nodes.remove(k);
    Ok(Covariance { nodes, matrix })
}

/// Risk of a covariance restricted to `test` positions (`None` = all rows).
fn covariance_risk<T: Scalar>(m: &DMatrix<T>, kind: CriterionKind, test: Option<&[usize]>) -> T {
    match (kind, test) {
        (CriterionKind::Classification, None) => m.trace(),
        (CriterionKind::Classification, Some(t)) => t.iter().fold(T::zero(), |acc, &i| acc + m[(i, i)]),
        (CriterionKind::Survey, None) => m.sum(),
        (CriterionKind::Survey, Some(t)) => t
            .iter()
            .flat_map(|&r| t.iter().map(move |&c| (r, c)))
            .fold(T::zero(), |acc, (r, c)| acc + m[(r, c)]),
    }
}

fn test_positions(nodes: &[usize], test: &TestSet) -> Result<Option<Vec<usize>>> {
    let Some(t) = test.nodes() else {
        return Ok(None);
    };
    let mut pos: Vec<usize> = t
        .iter()
        .map(|&v| {
            nodes
                .binary_search(&v)
                .map_err(|_| Error::invalid(format!("test node {v} is labeled or not part of the Laplacian")))
        })
        .collect::<Result<_>>()?;
    pos.sort_unstable();
    pos.dedup();
    Ok(Some(pos))
}

/// Direct evaluation by inverting `L_(V−L)`; the reference for the fast path.
pub fn evaluate_risk<T: Scalar>(l: &Laplacian<T>, labeled: &[usize], criterion: &Criterion) -> Result<T> {
    let (_, unl_idx) = split(l, labeled)?;
    let nodes: Vec<usize> = unl_idx.iter().map(|&k| l.nodes()[k]).collect();
    let test = test_positions(&nodes, &criterion.test)?;
    let cov = linalg::spd_inverse(linalg::principal(l.matrix(), &unl_idx), "L_(V-L)")?;
    Ok(covariance_risk(&cov, criterion.kind, test.as_deref()))
}

/// Risk the criterion would have after labeling one more candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRisk<T> {
    pub node: usize,
    /// `None` when the candidate's conditional variance is too small to pivot on.
    pub risk: Option<T>,
}

/// Greedy bookkeeping: labeled set, spend, and `Σ` over the unlabeled nodes.
#[derive(Debug, Clone)]
pub struct SelectionState<T: Scalar> {
    criterion: Criterion,
    labeled: Vec<usize>,
    spent: T,
    covariance: Covariance<T>,
    test_pos: Option<Vec<usize>>,
    current_risk: T,
}

impl<T: Scalar> SelectionState<T> {
    /// State with nothing labeled; factors `L` once.
    pub fn new(l: &Laplacian<T>, criterion: Criterion) -> Result<Self> {
        Self::with_labeled(l, criterion, &[])
    }

    pub fn with_labeled(l: &Laplacian<T>, criterion: Criterion, labeled: &[usize]) -> Result<Self> {
        let (_, unl_idx) = split(l, labeled)?;
        let nodes: Vec<usize> = unl_idx.iter().map(|&k| l.nodes()[k]).collect();
        let test_pos = test_positions(&nodes, &criterion.test)?;
        let matrix = linalg::spd_inverse(linalg::principal(l.matrix(), &unl_idx), "L_(V-L)")?;
        let current_risk = covariance_risk(&matrix, criterion.kind, test_pos.as_deref());
        Ok(Self {
            criterion,
            labeled: labeled.to_vec(),
            spent: T::zero(),
            covariance: Covariance { nodes, matrix },
            test_pos,
            current_risk,
        })
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn spent(&self) -> T {
        self.spent
    }

    pub fn covariance(&self) -> &Covariance<T> {
        &self.covariance
    }

    pub fn current_risk(&self) -> T {
        self.current_risk
    }

    /// Risk recomputed from the maintained covariance.
    pub fn recomputed_risk(&self) -> T {
        covariance_risk(&self.covariance.matrix, self.criterion.kind, self.test_pos.as_deref())
    }

    fn is_test_position(&self, k: usize) -> bool {
        self.test_pos.as_ref().is_some_and(|t| t.binary_search(&k).is_ok())
    }

    fn queryable_position(&self, node: usize) -> Result<usize> {
        let k = self
            .covariance
            .position(node)
            .ok_or_else(|| Error::invalid(format!("node {node} is labeled or not part of the Laplacian")))?;
        if self.is_test_position(k) {
            return Err(Error::invalid(format!("test node {node} cannot be queried")));
        }
        Ok(k)
    }

    /// `R(L ∪ {v})` from column `v` of `Σ` in `O(|T|)`.
    fn risk_with_position(&self, k: usize) -> Option<T> {
        let m = &self.covariance.matrix;
        let pivot = m[(k, k)];
        if !(pivot > T::lit(MIN_PIVOT)) {
            return None;
        }
        if self.test_pos.is_none() && m.nrows() == 1 {
            // Labeling the last unlabeled node leaves an empty sum.
            return Some(T::zero());
        }
        let col = m.column(k);
        let reduction = match (self.criterion.kind, self.test_pos.as_deref()) {
            (CriterionKind::Classification, None) => col.norm_squared(),
            (CriterionKind::Classification, Some(t)) => t.iter().fold(T::zero(), |a, &i| a + col[i] * col[i]),
            (CriterionKind::Survey, None) => {
                let s = col.sum();
                s * s
            }
            (CriterionKind::Survey, Some(t)) => {
                let s = t.iter().fold(T::zero(), |a, &i| a + col[i]);
                s * s
            }
        };
        Some(self.current_risk - reduction / pivot)
    }

    pub fn candidate_risk(&self, node: usize) -> Result<Option<T>> {
        Ok(self.risk_with_position(self.queryable_position(node)?))
    }

    /// Labels `node`, charging `cost`; returns the new risk.
    pub fn commit(&mut self, node: usize, cost: T) -> Result<T> {
        let k = self.queryable_position(node)?;
        self.covariance = rank_one_downdate(&self.covariance, node)?;
        if let Some(t) = self.test_pos.as_mut() {
            for p in t.iter_mut() {
                if *p > k {
                    *p -= 1;
                }
            }
        }
        self.labeled.push(node);
        self.spent += cost;
        self.current_risk = self.recomputed_risk();
        Ok(self.current_risk)
    }
}

/// `R(L ∪ {v})` for every candidate in `pool`, each from one column of `Σ`.
pub fn fast_marginal_gains<T: Scalar>(state: &SelectionState<T>, pool: &[usize]) -> Result<Vec<CandidateRisk<T>>> {
    pool.iter()
        .map(|&node| {
            Ok(CandidateRisk {
                node,
                risk: state.candidate_risk(node)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<T> {
    pub node: usize,
    pub cost: T,
    /// Risk reduction from this query (`R_old − R_new`).
    pub marginal_gain: T,
    pub gain_per_cost: T,
    pub risk_after: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace<T> {
    pub initial_risk: T,
    pub steps: Vec<Step<T>>,
}

impl<T: Scalar> SelectionTrace<T> {
    pub fn empty(initial_risk: T) -> Self {
        Self {
            initial_risk,
            steps: Vec::new(),
        }
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.node).collect()
    }

    pub fn spent(&self) -> T {
        self.steps.iter().fold(T::zero(), |a, s| a + s.cost)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of leading steps whose cumulative cost stays within `budget`.
    pub fn prefix_within(&self, budget: T) -> usize {
        let mut spent = T::zero();
        self.steps
            .iter()
            .take_while(|s| {
                spent += s.cost;
                within(spent, budget)
            })
            .count()
    }

    /// Risk after the first `len` steps.
    pub fn risk_after_prefix(&self, len: usize) -> T {
        match len {
            0 => self.initial_risk,
            n => self.steps[n - 1].risk_after,
        }
    }
}

/// Order among exactly tied candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestId,
    /// Seeded random priority over node ids.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GreedyOptions {
    pub tie_break: TieBreak,
}

/// Priority used to break ties; lower wins.
pub(crate) struct TiePriority(Option<Vec<u64>>);

impl TiePriority {
    pub(crate) fn new(tie_break: TieBreak, node_bound: usize) -> Self {
        match tie_break {
            TieBreak::LowestId => Self(None),
            TieBreak::Seeded(seed) => {
                let mut rank: Vec<u64> = (0..node_bound as u64).collect();
                rank.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                Self(Some(rank))
            }
        }
    }

    fn of(&self, node: usize) -> u64 {
        self.0.as_ref().map_or(node as u64, |r| r[node])
    }

    /// Index of the minimum score; near-equal scores resolved by priority.
    pub(crate) fn argmin<T: Scalar>(&self, scored: &[(usize, T)]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &(node, score)) in scored.iter().enumerate() {
            let Some(b) = best else {
                best = Some(i);
                continue;
            };
            let (bnode, bscore) = scored[b];
            let eps = T::lit(TIE_RTOL) * score.abs().max(bscore.abs());
            let order = if (score - bscore).abs() <= eps {
                self.of(node).cmp(&self.of(bnode))
            } else if score < bscore {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            if order == Ordering::Less {
                best = Some(i);
            }
        }
        best
    }
}

fn node_bound(l_nodes: &[usize], pool: &[usize]) -> usize {
    l_nodes.iter().chain(pool).max().map_or(0, |&m| m + 1)
}

/// Sorted, deduplicated pool; checks costs exist and no test node is queryable.
pub(crate) fn prepare_pool<T: Scalar>(
    l: &Laplacian<T>,
    test: &TestSet,
    budget: &Budget<T>,
    pool: &[usize],
) -> Result<Vec<usize>> {
    let mut pool = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    for &v in &pool {
        if test.contains(v) {
            return Err(Error::invalid(format!("pool node {v} is in the test set")));
        }
        if l.index_of(v).is_none() {
            return Err(Error::invalid(format!("pool node {v} is not part of the Laplacian")));
        }
        if budget.cost(v).is_none() {
            return Err(Error::invalid(format!("no cost given for pool node {v}")));
        }
    }
    Ok(pool)
}

/// Pool members not yet labeled that still fit in the budget.
pub(crate) fn affordable<T: Scalar>(pool: &[usize], labeled: &[usize], spent: T, budget: &Budget<T>) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|v| !labeled.contains(v))
        .filter(|&v| budget.allows(spent + budget.costs[v]))
        .collect()
}

/// Cost-aware greedy selection with lowest-id tie breaking.
pub fn greedy_select<T: Scalar>(
    l: &Laplacian<T>,
    criterion: &Criterion,
    budget: &Budget<T>,
    pool: &[usize],
) -> Result<SelectionTrace<T>> {
    greedy_select_with(l, criterion, budget, pool, GreedyOptions::default())
}

pub fn greedy_select_with<T: Scalar>(
    l: &Laplacian<T>,
    criterion: &Criterion,
    budget: &Budget<T>,
    pool: &[usize],
    options: GreedyOptions,
) -> Result<SelectionTrace<T>> {
    let pool = prepare_pool(l, &criterion.test, budget, pool)?;
    if affordable(&pool, &[], T::zero(), budget).is_empty() {
        // R(∅) is undefined (NaN) when L itself is singular.
        let initial = evaluate_risk(l, &[], criterion).unwrap_or(T::lit(f64::NAN));
        return Ok(SelectionTrace::empty(initial));
    }
    let ties = TiePriority::new(options.tie_break, node_bound(l.nodes(), &pool));
    let mut state = SelectionState::new(l, criterion.clone())?;
    let mut trace = SelectionTrace::empty(state.current_risk());
    loop {
        let open = affordable(&pool, state.labeled(), state.spent(), budget);
        if open.is_empty() {
            break;
        }
        let risk_old = state.current_risk();
        let mut scored = Vec::with_capacity(open.len());
        for cand in fast_marginal_gains(&state, &open)? {
            match cand.risk {
                Some(r) => scored.push((cand.node, (r - risk_old) / budget.costs[cand.node])),
                None => warn!("skipping node {}: conditional variance below {MIN_PIVOT}", cand.node),
            }
        }
        let Some(best) = ties.argmin(&scored) else {
            warn!("no candidate with usable variance remains; stopping early");
            break;
        };
        let node = scored[best].0;
        let cost = budget.costs[node];
        let risk_after = state.commit(node, cost)?;
        let gain = risk_old - risk_after;
        trace.steps.push(Step {
            node,
            cost,
            marginal_gain: gain,
            gain_per_cost: gain / cost,
            risk_after,
        });
    }
    Ok(trace)
}

/// Scores an externally chosen query sequence under `criterion`.
pub fn score_sequence<T: Scalar>(
    l: &Laplacian<T>,
    criterion: &Criterion,
    budget: &Budget<T>,
    nodes: &[usize],
) -> Result<SelectionTrace<T>> {
    let mut state = SelectionState::new(l, criterion.clone())?;
    let mut trace = SelectionTrace::empty(state.current_risk());
    for &node in nodes {
        let cost = budget
            .cost(node)
            .ok_or_else(|| Error::invalid(format!("no cost given for node {node}")))?;
        let before = state.current_risk();
        let risk_after = state.commit(node, cost)?;
        trace.steps.push(Step {
            node,
            cost,
            marginal_gain: before - risk_after,
            gain_per_cost: (before - risk_after) / cost,
            risk_after,
        });
    }
    Ok(trace)
}

/// Eigen-decomposition `L = Q Λ Qᵀ` with ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    pub eigenvalues: DVector<T>,
    /// Orthonormal eigenvectors as columns; row `i` is `rᵢ`.
    pub eigenvectors: DMatrix<T>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn new(l: &Laplacian<T>) -> Self {
        let eig = SymmetricEigen::new(linalg::symmetrize(l.matrix().clone()));
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(Ordering::Equal)
        });
        Self {
            eigenvalues: DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]),
            eigenvectors: DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]),
        }
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }
}

/// Survey risk of every single-node labeled set `{vᵢ}` for a singular,
/// connected Laplacian, from one eigen-decomposition:
/// `R_s({vᵢ}) = −N(N−1) − N² aᵢ`, `aᵢ = Σ_{k≥2} q_{ik}² (1+λ_k)/(−λ_k)`.
///
/// Values are aligned with `l.nodes()`.
pub fn first_query_survey_singular<T: Scalar>(l: &Laplacian<T>) -> Result<Vec<T>> {
    let n = l.dim();
    if n < 2 {
        return Err(Error::invalid("first-query needs at least two nodes"));
    }
    let eig = SpectralDecomposition::new(l);
    let lam = &eig.eigenvalues;
    let tol = T::lit(1e-8) * T::one().max(lam[n - 1].abs());
    if lam[0].abs() > tol {
        return Err(Error::invalid(format!(
            "Laplacian is nonsingular (smallest eigenvalue {}); evaluate the risk directly",
            lam[0]
        )));
    }
    if lam[1] <= tol {
        return Err(Error::Numerical(format!(
            "second eigenvalue {} is zero: graph is disconnected",
            lam[1]
        )));
    }
    let weights: Vec<T> = (1..n).map(|k| (T::one() + lam[k]) / -lam[k]).collect();
    let nf = T::lit(n as f64);
    let q = &eig.eigenvectors;
    Ok((0..n)
        .map(|i| {
            let a = (1..n).fold(T::zero(), |acc, k| acc + q[(i, k)] * q[(i, k)] * weights[k - 1]);
            -nf * (nf - T::one()) - nf * nf * a
        })
        .collect())
}

/// Position of the smallest value, ties to the lowest index.
pub fn argmin_first_query<T: Scalar>(values: &[T]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, T)>, (i, &v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}
