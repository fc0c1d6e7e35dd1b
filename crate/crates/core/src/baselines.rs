//! Comparison selectors: mutual-information greedy and uniform random.

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::grf::TestSet;
use crate::linalg;
use crate::scalar::Scalar;
use crate::selection::{
    affordable, prepare_pool, Budget, Criterion, CriterionKind, GreedyOptions, SelectionState, SelectionTrace, Step,
    TiePriority, MIN_PIVOT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Mig,
    Random { seed: u64 },
}

/// Greedy mutual-information placement under the prior covariance `L⁻¹`.
///
/// Each step maximizes `½·ln(σ²(v | 𝓛) / σ²(v | Ā)) / c_v`, where `Ā` is every
/// node outside `𝓛 ∪ {v}` and outside the test set. Conditional variances come
/// from the precision matrix directly: `σ²(v | S) = [(L_{V∖S})⁻¹]_vv`. The
/// trace records V-optimality risks on `test` so curves are comparable.
pub fn mig_select<T: Scalar>(
    l: &Laplacian<T>,
    budget: &Budget<T>,
    pool: &[usize],
    test: &TestSet,
) -> Result<SelectionTrace<T>> {
    mig_select_with(l, budget, pool, test, GreedyOptions::default())
}

pub fn mig_select_with<T: Scalar>(
    l: &Laplacian<T>,
    budget: &Budget<T>,
    pool: &[usize],
    test: &TestSet,
    options: GreedyOptions,
) -> Result<SelectionTrace<T>> {
    let pool = prepare_pool(l, test, budget, pool)?;
    let criterion = Criterion::new(CriterionKind::Classification, test.clone());
    // Σ = L_U⁻¹ gives σ²(v | 𝓛) on its diagonal and the V-optimality risk.
    let mut state = SelectionState::new(l, criterion)?;
    let mut trace = SelectionTrace::empty(state.current_risk());
    let bound = l.nodes().iter().chain(&pool).max().map_or(0, |&m| m + 1);
    let ties = TiePriority::new(options.tie_break, bound);
    let test_idx = l.indices_of(test.nodes().unwrap_or(&[]))?;
    let m = l.matrix();

    loop {
        let open = affordable(&pool, state.labeled(), state.spent(), budget);
        if open.is_empty() {
            break;
        }
        // S = 𝓛 ∪ T; σ²(v | Ā) = 1 / (L_vv − L_vS L_SS⁻¹ L_Sv).
        let mut s_idx = l.indices_of(state.labeled())?;
        s_idx.extend_from_slice(&test_idx);
        let open_idx = l.indices_of(&open)?;
        let coupling = if s_idx.is_empty() {
            None
        } else {
            let chol = linalg::cholesky(linalg::principal(m, &s_idx), "L_(L ∪ T)")?;
            let l_sp = linalg::block(m, &s_idx, &open_idx);
            let solved = chol.solve(&l_sp);
            Some((l_sp, solved))
        };

        let mut scored = Vec::with_capacity(open.len());
        for (c, (&node, &k)) in open.iter().zip(&open_idx).enumerate() {
            let pos = state.covariance().position(node).expect("open nodes are unlabeled");
            let var_given_labeled = state.covariance().matrix()[(pos, pos)];
            let schur = match &coupling {
                None => m[(k, k)],
                Some((l_sp, solved)) => m[(k, k)] - l_sp.column(c).dot(&solved.column(c)),
            };
            let var_given_rest = T::one() / schur;
            if !(schur > T::zero()) || !(var_given_rest > T::lit(MIN_PIVOT)) || !(var_given_labeled > T::lit(MIN_PIVOT))
            {
                warn!("skipping node {node}: degenerate conditional variance");
                continue;
            }
            let gain = T::lit(0.5) * (var_given_labeled / var_given_rest).ln();
            // argmin of the negated ratio is argmax of gain per cost
            scored.push((node, -gain / budget.costs()[node]));
        }
        let Some(best) = ties.argmin(&scored) else {
            warn!("no candidate with usable variance remains; stopping early");
            break;
        };
        let node = scored[best].0;
        let cost = budget.costs()[node];
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

/// Per-step MI gains `½·ln(σ²(v|𝓛)/σ²(v|Ā))` by explicit inversion, for checking.
pub fn mig_gain_direct<T: Scalar>(l: &Laplacian<T>, labeled: &[usize], test: &TestSet, node: usize) -> Result<T> {
    let var_given = |observed: &dyn Fn(usize) -> bool| -> Result<T> {
        let keep: Vec<usize> = l.nodes().iter().copied().filter(|&u| !observed(u)).collect();
        let idx = l.indices_of(&keep)?;
        let inv = linalg::spd_inverse(linalg::principal(l.matrix(), &idx), "L_(V−S)")?;
        let p = keep.iter().position(|&u| u == node).expect("node stays unobserved");
        Ok(inv[(p, p)])
    };
    let given_labeled = var_given(&|u| labeled.contains(&u))?;
    let given_rest = var_given(&|u| !(labeled.contains(&u) || test.contains(u) || u == node))?;
    Ok(T::lit(0.5) * (given_labeled / given_rest).ln())
}

/// Uniform sampling without replacement among affordable pool nodes until
/// nothing fits; deterministic for a given seed.
pub fn random_select<T: Scalar>(pool: &[usize], budget: &Budget<T>, seed: u64) -> Result<Vec<usize>> {
    let mut pool = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if let Some(&v) = pool.iter().find(|&&v| budget.cost(v).is_none()) {
        return Err(Error::invalid(format!("no cost given for pool node {v}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    let mut spent = T::zero();
    loop {
        let open = affordable(&pool, &chosen, spent, budget);
        if open.is_empty() {
            return Ok(chosen);
        }
        let node = open[rng.random_range(0..open.len())];
        spent += budget.costs()[node];
        chosen.push(node);
    }
}

/// Random selection scored under `criterion` so it fits the same curves.
pub fn random_trace<T: Scalar>(
    l: &Laplacian<T>,
    criterion: &Criterion,
    budget: &Budget<T>,
    pool: &[usize],
    seed: u64,
) -> Result<SelectionTrace<T>> {
    let pool = prepare_pool(l, &criterion.test, budget, pool)?;
    let nodes = random_select(&pool, budget, seed)?;
    crate::selection::score_sequence(l, criterion, budget, &nodes)
}

/// Dense `L⁻¹`, the GP prior the MIG baseline works with.
pub fn prior_covariance<T: Scalar>(l: &Laplacian<T>) -> Result<DMatrix<T>> {
    linalg::spd_inverse(l.matrix().clone(), "L")
}
