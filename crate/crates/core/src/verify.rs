//! Randomized certification of the structural facts greedy selection relies
//! on: nonnegative inverses, nonnegative PSD block differences, range of the
//! harmonic predictor, monotone submodular risk reduction, absence of
//! suppressors, and the `1 − 1/e` greedy ratio.
//!
//! Every check is deterministic in its seed. Trial `t` draws from its own
//! ChaCha stream, so trials run in parallel and merge in trial order.
//! A failing trial carries a witness: the instance as an edge list with `#`
//! header lines, replayable with [`replay_witness`].

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{build_laplacian, load_edge_list, validate_conditions, Laplacian, LaplacianMode, WeightedGraph};
use crate::grf::{condition, conditional_correlation, GrfModel, LabeledSet, TestSet};
use crate::linalg;
use crate::selection::{evaluate_risk, greedy_select, Budget, Criterion, CriterionKind};

/// Absolute slack on inequalities between quantities of order 1–10.
pub const SLACK: f64 = 1e-9;

/// Slack on the smallest eigenvalue in the PSD check.
pub const PSD_SLACK: f64 = 1e-8;

pub const GREEDY_BOUND: f64 = 1.0 - 1.0 / std::f64::consts::E;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub failures: usize,
    /// Largest amount by which any inequality was violated (0 if none).
    pub worst_violation: f64,
    /// Serialized failing instance with the largest violation, or empty.
    pub witness: String,
    /// Smallest greedy/optimum ratio seen (greedy ratio check only).
    pub min_ratio: Option<f64>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random regularized or node-deleted Laplacian on a connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: WeightedGraph<f64>,
    pub mode: LaplacianMode<f64>,
}

impl Instance {
    /// Erdős–Rényi `G(n, ½)` conditioned on connectivity, weights in
    /// `(0.1, 2.0)`; regularized with σ in `(1, 100)` or with one node deleted.
    pub fn random<R: Rng>(rng: &mut R, n: usize, allow_delete: bool) -> Self {
        let graph = random_connected_graph(rng, n, 0.5);
        let mode = if allow_delete && rng.random_bool(0.5) {
            LaplacianMode::DeleteNode(rng.random_range(0..n))
        } else {
            LaplacianMode::Regularized((0..n).map(|_| rng.random_range(1.0..100.0)).collect())
        };
        Self { graph, mode }
    }

    pub fn laplacian(&self) -> Result<Laplacian<f64>> {
        build_laplacian(&self.graph, &self.mode)
    }

    /// Nodes that remain in the Laplacian.
    pub fn nodes(&self) -> Vec<usize> {
        (0..self.graph.node_count())
            .filter(|&v| self.mode != LaplacianMode::DeleteNode(v))
            .collect()
    }

    pub fn witness(&self, header: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# check {header}").unwrap();
        match &self.mode {
            LaplacianMode::Regularized(s) => {
                let s: Vec<String> = s.iter().map(|x| x.to_string()).collect();
                writeln!(out, "# sigma {}", s.join(" ")).unwrap();
            }
            LaplacianMode::DeleteNode(v) => writeln!(out, "# delete-node {v}").unwrap(),
            LaplacianMode::Unregularized => writeln!(out, "# unregularized").unwrap(),
        }
        for &(i, j, w) in self.graph.edges() {
            writeln!(out, "{i} {j} {w}").unwrap();
        }
        out
    }
}

/// `G(n, p)` resampled until connected, weights uniform in `(0.1, 2.0)`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> WeightedGraph<f64> {
    loop {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(p) {
                    edges.push((i, j, rng.random_range(0.1..2.0)));
                }
            }
        }
        let g = WeightedGraph::new(n, edges).expect("generated edges are valid");
        if g.is_connected() {
            return g;
        }
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

struct Outcome {
    violation: f64,
    witness: Option<String>,
    ratio: Option<f64>,
}

impl Outcome {
    fn new(violation: f64, witness: impl FnOnce() -> String) -> Self {
        let witness = (violation > SLACK).then(witness);
        Self {
            violation,
            witness,
            ratio: None,
        }
    }
}

fn run_trials<F>(property: &str, trials: usize, seed: u64, trial: F) -> Result<PropertyReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Outcome> + Sync,
{
    let outcomes: Vec<Outcome> = (0..trials)
        .into_par_iter()
        .map(|t| trial(&mut trial_rng(seed, t)))
        .collect::<Result<_>>()?;
    let mut report = PropertyReport {
        property: property.to_string(),
        trials,
        failures: 0,
        worst_violation: 0.0,
        witness: String::new(),
        min_ratio: None,
    };
    for o in outcomes {
        if o.violation > SLACK {
            report.failures += 1;
        }
        if o.violation > report.worst_violation {
            report.worst_violation = o.violation;
            if let Some(w) = o.witness {
                report.witness = w;
            }
        }
        if let Some(r) = o.ratio {
            report.min_ratio = Some(report.min_ratio.map_or(r, |m: f64| m.min(r)));
        }
    }
    Ok(report)
}

fn sample_n<R: Rng>(rng: &mut R, n_max: usize) -> Result<usize> {
    if n_max < 2 {
        return Err(Error::invalid("n_max must be at least 2"));
    }
    Ok(rng.random_range(2..=n_max))
}

fn join(ids: &[usize]) -> String {
    ids.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// `max(0, −min L⁻¹)`; rejects matrices that violate the Laplacian conditions.
pub fn inverse_nonnegative_violation(l: &Laplacian<f64>) -> Result<f64> {
    // Connectivity is not needed once the matrix is nonsingular; deleting a
    // cut vertex legitimately leaves several blocks.
    let report = validate_conditions(l, crate::graph::DEFAULT_TOL);
    if !(report.sign_ok && report.symmetric_ok && report.rowsum_ok && report.nonsingular_ok) {
        return Err(Error::invalid(format!(
            "matrix violates the Laplacian conditions: {report:?}"
        )));
    }
    let inv = linalg::spd_inverse(l.matrix().clone(), "L")?;
    Ok((-inv.min()).max(0.0))
}

pub fn check_inverse_nonnegative(trials: usize, n_max: usize, seed: u64) -> Result<PropertyReport> {
    run_trials("inverse_nonnegative", trials, seed, |rng| {
        let n = sample_n(rng, n_max)?;
        let inst = Instance::random(rng, n, true);
        let v = inverse_nonnegative_violation(&inst.laplacian()?)?;
        Ok(Outcome::new(v, || inst.witness("inverse_nonnegative")))
    })
}

/// Violation of `L⁻¹ − [[L_SS⁻¹, 0], [0, 0]] ⪰ 0` and `≥ 0` for a block `S`
/// (given as matrix indices).
pub fn block_difference_violation(l: &Laplacian<f64>, block: &[usize]) -> Result<f64> {
    let inv = linalg::spd_inverse(l.matrix().clone(), "L")?;
    let sub = linalg::spd_inverse(linalg::principal(l.matrix(), block), "L_SS")?;
    let mut diff = inv;
    for (r, &i) in block.iter().enumerate() {
        for (c, &j) in block.iter().enumerate() {
            diff[(i, j)] -= sub[(r, c)];
        }
    }
    let min_eig = SymmetricEigen::new(linalg::symmetrize(diff.clone())).eigenvalues.min();
    // Shifted so that exceeding SLACK means the eigenvalue is below −PSD_SLACK.
    let psd = (-min_eig - (PSD_SLACK - SLACK)).max(0.0);
    Ok(psd.max((-diff.min()).max(0.0)))
}

pub fn check_block_difference(trials: usize, n_max: usize, seed: u64) -> Result<PropertyReport> {
    run_trials("block_difference", trials, seed, |rng| {
        let n = sample_n(rng, n_max)?;
        let inst = Instance::random(rng, n, true);
        let l = inst.laplacian()?;
        let mut idx: Vec<usize> = (0..l.dim()).collect();
        idx.shuffle(rng);
        let take = rng.random_range(1..=l.dim());
        let mut block = idx[..take].to_vec();
        block.sort_unstable();
        let v = block_difference_violation(&l, &block)?;
        let nodes: Vec<usize> = block.iter().map(|&k| l.nodes()[k]).collect();
        Ok(Outcome::new(v, || {
            inst.witness(&format!("block_difference block={}", join(&nodes)))
        }))
    })
}

/// Harmonic means stay inside `[0, 1]` for tags in `[0, 1]`.
pub fn check_harmonic_range(trials: usize, n_max: usize, seed: u64) -> Result<PropertyReport> {
    run_trials("harmonic_range", trials, seed, |rng| {
        let n = sample_n(rng, n_max)?;
        let graph = random_connected_graph(rng, n, 0.5);
        // Unregularized field: conditioning on a nonempty set is enough.
        let l = build_laplacian(&graph, &LaplacianMode::Unregularized)?;
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(rng);
        let k = rng.random_range(1..n);
        let labeled: Vec<usize> = nodes[..k].to_vec();
        let tags: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        let p = condition(&GrfModel::unit(l), &LabeledSet::new(labeled.clone(), tags.clone())?)?;
        let v = p.mean.iter().map(|&f| (-f).max(f - 1.0).max(0.0)).fold(0.0, f64::max);
        let inst = Instance {
            graph,
            mode: LaplacianMode::Unregularized,
        };
        Ok(Outcome::new(v, || {
            let t: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
            inst.witness(&format!(
                "harmonic_range labeled={} tags={}",
                join(&labeled),
                t.join(",")
            ))
        }))
    })
}

fn kind_name(kind: CriterionKind) -> &'static str {
    match kind {
        CriterionKind::Classification => "classification",
        CriterionKind::Survey => "survey",
    }
}

/// Sets for one monotonicity/submodularity trial; all disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularCase {
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
    pub v: usize,
    pub test: TestSet,
}

/// Violation of normalization, monotonicity and diminishing returns.
pub fn submodular_violation(l: &Laplacian<f64>, kind: CriterionKind, case: &SubmodularCase) -> Result<f64> {
    let crit = Criterion::new(kind, case.test.clone());
    let risk = |set: &[&[usize]]| -> Result<f64> {
        let s: Vec<usize> = set.iter().flat_map(|p| p.iter().copied()).collect();
        evaluate_risk(l, &s, &crit)
    };
    let v = [case.v];
    let r_empty = risk(&[])?;
    let r1 = risk(&[&case.l1])?;
    let r1v = risk(&[&case.l1, &v])?;
    let r12 = risk(&[&case.l1, &case.l2])?;
    let r12v = risk(&[&case.l1, &case.l2, &v])?;
    let delta = |r: f64| r_empty - r;
    let normalization = if delta(r_empty) == 0.0 { 0.0 } else { f64::INFINITY };
    let monotone = delta(r1) - delta(r12);
    let diminishing = (delta(r12v) - delta(r12)) - (delta(r1v) - delta(r1));
    Ok(normalization.max(monotone).max(diminishing).max(0.0))
}

fn sample_submodular_case<R: Rng>(rng: &mut R, nodes: &[usize]) -> SubmodularCase {
    let mut shuffled = nodes.to_vec();
    shuffled.shuffle(rng);
    let v = shuffled.pop().expect("at least one node");
    let (mut l1, mut l2, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let use_test = rng.random_bool(0.5);
    for u in shuffled {
        match rng.random_range(0..4) {
            0 => l1.push(u),
            1 => l2.push(u),
            2 if use_test => test.push(u),
            _ => {}
        }
    }
    l1.sort_unstable();
    l2.sort_unstable();
    test.sort_unstable();
    let test = if use_test && !test.is_empty() {
        TestSet::Nodes(test)
    } else {
        TestSet::AllUnlabeled
    };
    SubmodularCase { l1, l2, v, test }
}

fn case_header(name: &str, case: &SubmodularCase) -> String {
    let test = case.test.nodes().map_or("all".to_string(), join);
    format!(
        "{name} L1={} L2={} v={} test={test}",
        join(&case.l1),
        join(&case.l2),
        case.v
    )
}

pub fn check_monotone_submodular(
    kind: CriterionKind,
    trials: usize,
    n_max: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let name = format!("monotone_submodular criterion={}", kind_name(kind));
    run_trials(&name, trials, seed, |rng| {
        let n = sample_n(rng, n_max)?;
        let inst = Instance::random(rng, n, true);
        let l = inst.laplacian()?;
        let case = sample_submodular_case(rng, &inst.nodes());
        let v = submodular_violation(&l, kind, &case)?;
        Ok(Outcome::new(v, || inst.witness(&case_header(&name, &case))))
    })
}

/// Violation of `0 ≤ Corr(i, j | L1 ∪ L2) ≤ Corr(i, j | L1)` over all pairs.
pub fn aofs_violation(l: &Laplacian<f64>, l1: &[usize], l2: &[usize]) -> Result<f64> {
    let model = GrfModel::unit(l.clone());
    let c1 = conditional_correlation(&model, l1)?;
    let both: Vec<usize> = l1.iter().chain(l2).copied().collect();
    let c2 = conditional_correlation(&model, &both)?;
    let mut worst = 0.0f64;
    for (a, &i) in c2.nodes.iter().enumerate() {
        for (b, &j) in c2.nodes.iter().enumerate().skip(a + 1) {
            let after = c2.matrix[(a, b)];
            let before = c1.get(i, j).expect("unlabeled in both");
            worst = worst.max(after - before).max(-after);
        }
    }
    Ok(worst)
}

pub fn check_aofs(trials: usize, n_max: usize, seed: u64) -> Result<PropertyReport> {
    run_trials("aofs", trials, seed, |rng| {
        let n = sample_n(rng, n_max.max(3))?;
        let inst = Instance::random(rng, n, true);
        let l = inst.laplacian()?;
        let mut nodes = inst.nodes();
        nodes.shuffle(rng);
        // Keep at least one pair outside both sets.
        let outside = nodes.len().saturating_sub(2);
        nodes.truncate(outside);
        let (mut l1, mut l2) = (Vec::new(), Vec::new());
        for u in nodes {
            match rng.random_range(0..3) {
                0 => l1.push(u),
                1 => l2.push(u),
                _ => {}
            }
        }
        l1.sort_unstable();
        l2.sort_unstable();
        let v = aofs_violation(&l, &l1, &l2)?;
        Ok(Outcome::new(v, || {
            inst.witness(&format!("aofs L1={} L2={}", join(&l1), join(&l2)))
        }))
    })
}

/// `R_Δ(L_g) / R_Δ(L*)` with unit costs and `k` queries, by exhaustive search.
pub fn greedy_ratio(l: &Laplacian<f64>, kind: CriterionKind, k: usize) -> Result<f64> {
    let crit = Criterion::new(kind, TestSet::AllUnlabeled);
    let pool = l.nodes().to_vec();
    let bound = pool.iter().max().map_or(0, |&m| m + 1);
    let budget = Budget::unit(bound, k as f64)?;
    let greedy = greedy_select(l, &crit, &budget, &pool)?.nodes();
    let r_empty = evaluate_risk(l, &[], &crit)?;
    let greedy_gain = r_empty - evaluate_risk(l, &greedy, &crit)?;
    let mut best = 0.0f64;
    for subset in subsets(&pool, k.min(pool.len())) {
        best = best.max(r_empty - evaluate_risk(l, &subset, &crit)?);
    }
    Ok(if best <= 0.0 { 1.0 } else { greedy_gain / best })
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

pub fn check_greedy_ratio(
    kind: CriterionKind,
    trials: usize,
    n_max: usize,
    k_max: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if n_max > 10 || k_max > 3 || k_max == 0 {
        return Err(Error::invalid("greedy ratio check needs n_max ≤ 10 and 1 ≤ k_max ≤ 3"));
    }
    let name = format!("greedy_ratio criterion={}", kind_name(kind));
    run_trials(&name, trials, seed, |rng| {
        let n = sample_n(rng, n_max)?;
        let inst = Instance::random(rng, n, true);
        let l = inst.laplacian()?;
        let k = rng.random_range(1..=k_max).min(l.dim());
        let ratio = greedy_ratio(&l, kind, k)?;
        let mut o = Outcome::new((GREEDY_BOUND - ratio).max(0.0), || {
            inst.witness(&format!("{name} k={k}"))
        });
        o.ratio = Some(ratio);
        Ok(o)
    })
}

/// All suites at the given sizes; used by the CLI.
pub fn run_all(trials: usize, n_max: usize, seed: u64) -> Result<Vec<PropertyReport>> {
    use CriterionKind::*;
    Ok(vec![
        check_inverse_nonnegative(trials, n_max, seed)?,
        check_block_difference(trials, n_max, seed)?,
        check_harmonic_range(trials, n_max, seed)?,
        check_monotone_submodular(Classification, trials, n_max, seed)?,
        check_monotone_submodular(Survey, trials, n_max, seed)?,
        check_aofs(trials, n_max, seed)?,
        check_greedy_ratio(Classification, (trials / 10).max(1), n_max.min(10), 3, seed)?,
        check_greedy_ratio(Survey, (trials / 10).max(1), n_max.min(10), 3, seed)?,
    ])
}

fn parse_ids(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| {
            x.parse()
                .map_err(|_| Error::invalid(format!("bad node id `{x}` in witness")))
        })
        .collect()
}

/// Re-evaluates the violation recorded in a witness.
pub fn replay_witness(text: &str) -> Result<f64> {
    let mut header: Option<Vec<String>> = None;
    let mut mode = None;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { continue };
        let words: Vec<&str> = rest.split_whitespace().collect();
        match words.first().copied() {
            Some("check") => header = Some(words[1..].iter().map(|s| s.to_string()).collect()),
            Some("sigma") => {
                let s = words[1..]
                    .iter()
                    .map(|x| x.parse().map_err(|_| Error::invalid(format!("bad σ `{x}`"))))
                    .collect::<Result<Vec<f64>>>()?;
                mode = Some(LaplacianMode::Regularized(s));
            }
            Some("delete-node") => {
                let v = words
                    .get(1)
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| Error::invalid("bad delete-node line"))?;
                mode = Some(LaplacianMode::DeleteNode(v));
            }
            Some("unregularized") => mode = Some(LaplacianMode::Unregularized),
            _ => {}
        }
    }
    let header = header.ok_or_else(|| Error::invalid("witness has no `# check` line"))?;
    let mode = mode.ok_or_else(|| Error::invalid("witness has no regularization line"))?;
    let graph: WeightedGraph<f64> = load_edge_list(text.as_bytes())?;
    let inst = Instance { graph, mode };
    let l = inst.laplacian()?;
    let field = |key: &str| -> Result<&str> {
        header
            .iter()
            .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::invalid(format!("witness is missing `{key}=`")))
    };
    let kind = || -> Result<CriterionKind> {
        match field("criterion")? {
            "classification" => Ok(CriterionKind::Classification),
            "survey" => Ok(CriterionKind::Survey),
            other => Err(Error::invalid(format!("unknown criterion `{other}`"))),
        }
    };
    match header.first().map(String::as_str) {
        Some("inverse_nonnegative") => inverse_nonnegative_violation(&l),
        Some("block_difference") => {
            let idx = l.indices_of(&parse_ids(field("block")?)?)?;
            block_difference_violation(&l, &idx)
        }
        Some("harmonic_range") => {
            let labeled = parse_ids(field("labeled")?)?;
            let tags = field("tags")?
                .split(',')
                .map(|x| x.parse().map_err(|_| Error::invalid(format!("bad tag `{x}`"))))
                .collect::<Result<Vec<f64>>>()?;
            let p = condition(&GrfModel::unit(l), &LabeledSet::new(labeled, tags)?)?;
            Ok(p.mean.iter().map(|&f| (-f).max(f - 1.0).max(0.0)).fold(0.0, f64::max))
        }
        Some("monotone_submodular") => {
            let test = match field("test")? {
                "all" => TestSet::AllUnlabeled,
                ids => TestSet::Nodes(parse_ids(ids)?),
            };
            let v = field("v")?.parse().map_err(|_| Error::invalid("bad `v=` in witness"))?;
            let case = SubmodularCase {
                l1: parse_ids(field("L1")?)?,
                l2: parse_ids(field("L2")?)?,
                v,
                test,
            };
            submodular_violation(&l, kind()?, &case)
        }
        Some("aofs") => aofs_violation(&l, &parse_ids(field("L1")?)?, &parse_ids(field("L2")?)?),
        Some("greedy_ratio") => {
            let k = field("k")?.parse().map_err(|_| Error::invalid("bad `k=` in witness"))?;
            Ok((GREEDY_BOUND - greedy_ratio(&l, kind()?, k)?).max(0.0))
        }
        other => Err(Error::invalid(format!("unknown check {other:?}"))),
    }
}

/// Dense `L⁻¹` of a Laplacian, exposed for tests that inspect it directly.
pub fn inverse(l: &Laplacian<f64>) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(l.matrix().clone(), "L")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path(n: usize) -> WeightedGraph<f64> {
        WeightedGraph::new(n, (1..n).map(|i| (i - 1, i, 1.0))).unwrap()
    }

    #[test]
    fn regularized_path_inverse_is_nonnegative() {
        let l = build_laplacian(&path(3), &LaplacianMode::uniform(3, 1.0)).unwrap();
        assert_eq!(inverse_nonnegative_violation(&l).unwrap(), 0.0);
        assert!(inverse(&l).unwrap().min() >= 0.0);
    }

    #[test]
    fn sign_violation_is_rejected() {
        let mut m = build_laplacian(&path(3), &LaplacianMode::uniform(3, 1.0))
            .unwrap()
            .matrix()
            .clone();
        m[(0, 2)] = 0.3;
        m[(2, 0)] = 0.3;
        let l = Laplacian::from_matrix(m).unwrap();
        assert!(matches!(inverse_nonnegative_violation(&l), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn path3_submodularity_values() {
        let c = Criterion::classification();
        let case = SubmodularCase {
            l1: vec![],
            l2: vec![0],
            v: 1,
            test: TestSet::AllUnlabeled,
        };
        // Node 2 deleted: L = [[1, -1], [-1, 2]], L⁻¹ = [[2, 1], [1, 1]].
        let l = build_laplacian(&path(3), &LaplacianMode::DeleteNode(2)).unwrap();
        let r = |s: &[usize]| evaluate_risk(&l, s, &c).unwrap();
        assert_abs_diff_eq!(r(&[]), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r(&[]) - r(&[1]), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r(&[0]) - r(&[0, 1]), 0.5, epsilon = 1e-12);
        assert_eq!(
            submodular_violation(&l, CriterionKind::Classification, &case).unwrap(),
            0.0
        );

        // σ = 1: R(∅) = 7/4, gain of v alone 3/4, after labeling node 0 it is 1/2.
        let l = build_laplacian(&path(3), &LaplacianMode::uniform(3, 1.0)).unwrap();
        let r = |s: &[usize]| evaluate_risk(&l, s, &c).unwrap();
        assert_abs_diff_eq!(r(&[]), 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(r(&[]) - r(&[1]), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(r(&[0]) - r(&[0, 1]), 0.5, epsilon = 1e-12);
        assert_eq!(
            submodular_violation(&l, CriterionKind::Classification, &case).unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_l2_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let inst = Instance::random(&mut rng, 6, true);
            let l = inst.laplacian().unwrap();
            let nodes = inst.nodes();
            let case = SubmodularCase {
                l1: vec![nodes[0]],
                l2: vec![],
                v: nodes[1],
                test: TestSet::AllUnlabeled,
            };
            assert_eq!(submodular_violation(&l, CriterionKind::Survey, &case).unwrap(), 0.0);
        }
    }

    #[test]
    fn path4_correlations_decrease() {
        let l = build_laplacian(&path(4), &LaplacianMode::uniform(4, 10.0)).unwrap();
        let m = GrfModel::unit(l.clone());
        let before = conditional_correlation(&m, &[]).unwrap().get(2, 3).unwrap();
        let after = conditional_correlation(&m, &[0]).unwrap().get(2, 3).unwrap();
        // Oracle: explicit inverses of the 4×4 and the 3×3 block.
        let full = inverse(&l).unwrap();
        let expect_before = full[(2, 3)] / (full[(2, 2)] * full[(3, 3)]).sqrt();
        let sub = Laplacian::from_matrix(l.matrix().view((1, 1), (3, 3)).clone_owned()).unwrap();
        let sub_inv = inverse(&sub).unwrap();
        let expect_after = sub_inv[(1, 2)] / (sub_inv[(1, 1)] * sub_inv[(2, 2)]).sqrt();
        assert_abs_diff_eq!(before, expect_before, epsilon = 1e-12);
        assert_abs_diff_eq!(after, expect_after, epsilon = 1e-12);
        assert!(before >= after && after >= 0.0);
        assert_eq!(aofs_violation(&l, &[0], &[]).unwrap(), 0.0);
    }

    #[test]
    fn single_query_greedy_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let inst = Instance::random(&mut rng, 7, true);
            let l = inst.laplacian().unwrap();
            for kind in [CriterionKind::Classification, CriterionKind::Survey] {
                assert_abs_diff_eq!(greedy_ratio(&l, kind, 1).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn generator_emits_valid_laplacians() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..9 {
            let inst = Instance::random(&mut rng, n, true);
            assert!(inst.graph.is_connected());
            let r = validate_conditions(&inst.laplacian().unwrap(), 1e-8);
            assert!(r.sign_ok && r.symmetric_ok && r.rowsum_ok);
            assert!(r.nonsingular_ok);
        }
    }

    #[test]
    fn reports_are_deterministic_and_witnesses_replay() {
        let a = check_monotone_submodular(CriterionKind::Survey, 50, 6, 42).unwrap();
        let b = check_monotone_submodular(CriterionKind::Survey, 50, 6, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.passed());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = Instance::random(&mut rng, 6, true);
        let l = inst.laplacian().unwrap();
        let case = sample_submodular_case(&mut rng, &inst.nodes());
        let w = inst.witness(&case_header("monotone_submodular criterion=survey", &case));
        let direct = submodular_violation(&l, CriterionKind::Survey, &case).unwrap();
        assert_eq!(replay_witness(&w).unwrap(), direct);

        let w = inst.witness("aofs L1=0 L2=");
        assert!(replay_witness(&w).is_ok());
    }

    #[test]
    fn small_suites_pass() {
        for r in run_all(40, 7, 1).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }
}
