//! Experiment runner: repeated selection runs over a budget schedule, scored
//! against a label oracle and written out as CSV learning curves.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::{mig_select_with, random_trace};
use crate::error::{Error, Result};
use crate::graph::{
    build_laplacian, largest_connected_component, load_edge_list, IdMap, Laplacian, LaplacianMode, WeightedGraph,
    DEFAULT_SIGMA,
};
use crate::grf::{harmonic_means, TestSet};
use crate::selection::{greedy_select_with, Budget, Criterion, CriterionKind, GreedyOptions, SelectionTrace, TieBreak};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VOpt,
    SigmaOpt,
    Mig,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::VOpt => "v_opt",
            Method::SigmaOpt => "sigma_opt",
            Method::Mig => "mig",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "v_opt" => Ok(Method::VOpt),
            "sigma_opt" => Ok(Method::SigmaOpt),
            "mig" => Ok(Method::Mig),
            "random" => Ok(Method::Random),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Classification,
    Survey,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "classification" => Ok(Task::Classification),
            "survey" => Ok(Task::Survey),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

/// How the Laplacian is made nonsingular.
///
/// Written as `regularized`, `regularized:<sigma>` or `delete-node:<id>`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "String")]
pub enum Regularization {
    Regularized { sigma: f64 },
    DeleteNode(usize),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Regularized { sigma: DEFAULT_SIGMA }
    }
}

impl FromStr for Regularization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = s.split_once(':').map_or((s, None), |(h, a)| (h, Some(a)));
        match (head, arg) {
            ("regularized", None) => Ok(Self::default()),
            ("regularized", Some(a)) => {
                let sigma: f64 = a.parse().map_err(|_| Error::invalid(format!("bad σ `{a}`")))?;
                if !(sigma > 0.0) {
                    return Err(Error::invalid("σ must be positive"));
                }
                Ok(Regularization::Regularized { sigma })
            }
            ("delete-node" | "delete_node", Some(a)) => a
                .parse()
                .map(Regularization::DeleteNode)
                .map_err(|_| Error::invalid(format!("bad node id `{a}`"))),
            _ => Err(Error::invalid(format!(
                "unknown regularization `{s}` (regularized[:sigma] | delete-node:<id>)"
            ))),
        }
    }
}

impl TryFrom<String> for Regularization {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Declarative description of one experiment; also readable from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph_path: PathBuf,
    pub labels_path: PathBuf,
    #[serde(default)]
    pub costs_path: Option<PathBuf>,
    #[serde(default)]
    pub task: Task,
    pub methods: Vec<Method>,
    pub budget_schedule: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub regularization: Regularization,
    #[serde(default)]
    pub test_set_path: Option<PathBuf>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_repetitions() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.graph_path);
        fix(&mut cfg.labels_path);
        cfg.costs_path.as_mut().map(fix);
        cfg.test_set_path.as_mut().map(fix);
        cfg.output_path.as_mut().map(fix);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_protocol(&self.methods, &self.budget_schedule, self.repetitions)
    }
}

fn validate_protocol(methods: &[Method], budgets: &[f64], repetitions: usize) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::invalid("at least one method is required"));
    }
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    if budgets.is_empty() || budgets.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::invalid("budget checkpoints must be positive"));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("budget checkpoints must be strictly ascending"));
    }
    Ok(())
}

/// Ground truth answered when a node is queried.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelOracle {
    /// Class id per node.
    Classes(Vec<usize>),
    /// Value in `[0, 1]` per node.
    Values(Vec<f64>),
}

impl LabelOracle {
    pub fn len(&self) -> usize {
        match self {
            LabelOracle::Classes(c) => c.len(),
            LabelOracle::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-node predictions; entries for queried nodes hold their answers.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    /// Binary task: predicted probability of class 1.
    Binary(Vec<f64>),
    /// One-vs-rest scores, `scores[node][class]`.
    PerClass(Vec<Vec<f64>>),
}

/// Fraction of `unqueried` nodes whose predicted class matches `truth`.
///
/// Binary: class 1 iff the value is at least 0.5. Per-class: argmax, ties to
/// the lowest class id.
pub fn score_classification(predictions: &Predictions, truth: &[usize], unqueried: &[usize]) -> f64 {
    if unqueried.is_empty() {
        return 1.0;
    }
    let predicted = |v: usize| -> usize {
        match predictions {
            Predictions::Binary(p) => usize::from(p[v] >= 0.5),
            Predictions::PerClass(s) => {
                s[v].iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (c, &x)| if x > best.1 { (c, x) } else { best },
                    )
                    .0
            }
        }
    };
    let correct = unqueried.iter().filter(|&&v| predicted(v) == truth[v]).count();
    correct as f64 / unqueried.len() as f64
}

/// `|Σ_t f_t − Σ_t y_t|` over the test nodes.
pub fn score_survey(predictions: &[f64], truth: &[f64], test_set: &[usize]) -> f64 {
    let (f, y) = test_set
        .iter()
        .fold((0.0, 0.0), |(f, y), &v| (f + predictions[v], y + truth[v]));
    (f - y).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub repetition: usize,
    pub budget: f64,
    pub risk: f64,
    /// Accuracy (classification) or absolute survey error.
    pub metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub budget: f64,
    pub mean: f64,
    /// Sample standard deviation over `√repetitions`; zero for one sample.
    pub sem: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Mean and SEM of the metric per (method, budget), in first-seen order.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut order: Vec<(Method, u64)> = Vec::new();
        let mut groups: HashMap<(Method, u64), Vec<f64>> = HashMap::new();
        for r in &self.rows {
            let key = (r.method, r.budget.to_bits());
            groups
                .entry(key)
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r.metric);
        }
        order
            .into_iter()
            .map(|key| {
                let xs = &groups[&key];
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let sem = if xs.len() < 2 {
                    0.0
                } else {
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                };
                AggregateRow {
                    method: key.0,
                    budget: f64::from_bits(key.1),
                    mean,
                    sem,
                }
            })
            .collect()
    }

    pub fn mean(&self, method: Method, budget: f64) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.method == method && a.budget == budget)
            .map(|a| a.mean)
    }
}

/// Formats like C's `%.10g`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 10;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x))
    }
}

/// CSV rows, then the aggregate section. An empty table is header-only.
pub fn emit_results<W: Write>(table: &ResultTable, mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "method,repetition,budget,risk,metric")?;
    for r in &table.rows {
        writeln!(
            sink,
            "{},{},{},{},{}",
            r.method,
            r.repetition,
            format_sig(r.budget),
            format_sig(r.risk),
            format_sig(r.metric)
        )?;
    }
    if !table.rows.is_empty() {
        writeln!(sink, "method,budget,mean,sem")?;
        for a in table.aggregate() {
            writeln!(
                sink,
                "{},{},{},{}",
                a.method,
                format_sig(a.budget),
                format_sig(a.mean),
                format_sig(a.sem)
            )?;
        }
    }
    sink.flush()
}

/// Fully loaded experiment on a connected graph with ids `0..n`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: WeightedGraph<f64>,
    pub oracle: LabelOracle,
    pub costs: Vec<f64>,
    pub test: Option<Vec<usize>>,
    pub regularization: Regularization,
    pub methods: Vec<Method>,
    pub budget_schedule: Vec<f64>,
    pub repetitions: usize,
    pub base_seed: u64,
}

/// Selection and prediction setup shared by every repetition.
struct Prepared {
    selection: Laplacian<f64>,
    prediction: Laplacian<f64>,
    /// Nodes whose answers are always known (the deleted node, if any).
    fixed: Vec<usize>,
    pool: Vec<usize>,
    test: TestSet,
    budget: Budget<f64>,
    classes: usize,
}

impl Experiment {
    fn prepare(&self) -> Result<Prepared> {
        let n = self.graph.node_count();
        if !self.graph.is_connected() {
            return Err(Error::invalid("experiment graph must be connected"));
        }
        if self.oracle.len() != n || self.costs.len() != n {
            return Err(Error::invalid("labels and costs must cover every node"));
        }
        validate_protocol(&self.methods, &self.budget_schedule, self.repetitions)?;
        let (selection, prediction, fixed) = match self.regularization {
            Regularization::Regularized { sigma } => {
                let l = build_laplacian(&self.graph, &LaplacianMode::uniform(n, sigma))?;
                (l.clone(), l, Vec::new())
            }
            Regularization::DeleteNode(v) => (
                build_laplacian(&self.graph, &LaplacianMode::DeleteNode(v))?,
                build_laplacian(&self.graph, &LaplacianMode::Unregularized)?,
                vec![v],
            ),
        };
        let test_nodes = self.test.clone().unwrap_or_default();
        if let Some(&v) = test_nodes.iter().find(|&&v| v >= n || fixed.contains(&v)) {
            return Err(Error::invalid(format!(
                "test node {v} is out of range or always labeled"
            )));
        }
        let pool: Vec<usize> = (0..n)
            .filter(|v| !fixed.contains(v) && !test_nodes.contains(v))
            .collect();
        let total: f64 = pool.iter().map(|&v| self.costs[v]).sum();
        let max_budget = *self.budget_schedule.last().expect("validated nonempty");
        if max_budget > total {
            warn!("budget {max_budget} exceeds the total pool cost {total}; later checkpoints are capped");
        }
        let budget = Budget::new(self.costs.clone(), max_budget)?;
        let classes = match &self.oracle {
            LabelOracle::Classes(c) => c.iter().max().map_or(1, |&m| m + 1),
            LabelOracle::Values(_) => 1,
        };
        Ok(Prepared {
            selection,
            prediction,
            fixed,
            pool,
            test: self.test.clone().map_or(TestSet::AllUnlabeled, TestSet::Nodes),
            budget,
            classes,
        })
    }

    fn task(&self) -> Task {
        match self.oracle {
            LabelOracle::Classes(_) => Task::Classification,
            LabelOracle::Values(_) => Task::Survey,
        }
    }

    fn trace(&self, p: &Prepared, method: Method, seed: u64) -> Result<SelectionTrace<f64>> {
        let opts = GreedyOptions {
            tie_break: TieBreak::Seeded(seed),
        };
        let crit = |kind| Criterion::new(kind, p.test.clone());
        match method {
            Method::VOpt => greedy_select_with(
                &p.selection,
                &crit(CriterionKind::Classification),
                &p.budget,
                &p.pool,
                opts,
            ),
            Method::SigmaOpt => {
                greedy_select_with(&p.selection, &crit(CriterionKind::Survey), &p.budget, &p.pool, opts)
            }
            Method::Mig => mig_select_with(&p.selection, &p.budget, &p.pool, &p.test, opts),
            Method::Random => {
                let kind = match self.task() {
                    Task::Classification => CriterionKind::Classification,
                    Task::Survey => CriterionKind::Survey,
                };
                random_trace(&p.selection, &crit(kind), &p.budget, &p.pool, seed)
            }
        }
    }

    /// Metric after observing the answers for `queried`.
    fn score(&self, p: &Prepared, queried: &[usize]) -> Result<f64> {
        let n = self.graph.node_count();
        let labeled: Vec<usize> = p.fixed.iter().chain(queried).copied().collect();
        let eval: Vec<usize> = match &self.test {
            Some(t) => t.clone(),
            None => (0..n).filter(|v| !labeled.contains(v)).collect(),
        };
        match &self.oracle {
            LabelOracle::Classes(truth) => {
                let binary = p.classes <= 2;
                let cols = if binary { 1 } else { p.classes };
                let tags = DMatrix::from_fn(labeled.len(), cols, |r, c| {
                    let class = truth[labeled[r]];
                    if binary {
                        class as f64
                    } else {
                        f64::from(u8::from(class == c))
                    }
                });
                let (unl, means) = harmonic_means(&p.prediction, &labeled, &tags)?;
                let mut scores = vec![vec![0.0; cols]; n];
                for (r, &v) in labeled.iter().enumerate() {
                    scores[v] = tags.row(r).iter().copied().collect();
                }
                for (r, &v) in unl.iter().enumerate() {
                    scores[v] = means.row(r).iter().copied().collect();
                }
                let preds = if binary {
                    Predictions::Binary(scores.into_iter().map(|s| s[0]).collect())
                } else {
                    Predictions::PerClass(scores)
                };
                Ok(score_classification(&preds, truth, &eval))
            }
            LabelOracle::Values(truth) => {
                let tags = DMatrix::from_fn(labeled.len(), 1, |r, _| truth[labeled[r]]);
                let (unl, means) = harmonic_means(&p.prediction, &labeled, &tags)?;
                let mut f = vec![0.0; n];
                for &v in &labeled {
                    f[v] = truth[v];
                }
                for (r, &v) in unl.iter().enumerate() {
                    f[v] = means[(r, 0)];
                }
                Ok(score_survey(&f, truth, &eval))
            }
        }
    }

    fn repetition(&self, p: &Prepared, rep: usize) -> Result<Vec<ResultRow>> {
        let seed = self.base_seed.wrapping_add(rep as u64);
        let mut rows = Vec::new();
        for &method in &self.methods {
            let trace = self.trace(p, method, seed)?;
            let nodes = trace.nodes();
            for &budget in &self.budget_schedule {
                let len = trace.prefix_within(budget);
                rows.push(ResultRow {
                    method,
                    repetition: rep,
                    budget,
                    risk: trace.risk_after_prefix(len),
                    metric: self.score(p, &nodes[..len])?,
                });
            }
        }
        Ok(rows)
    }

    pub fn run(&self) -> Result<ResultTable> {
        let p = self.prepare()?;
        let per_rep: Vec<Vec<ResultRow>> = (0..self.repetitions)
            .into_par_iter()
            .map(|rep| self.repetition(&p, rep))
            .collect::<Result<_>>()?;
        let mut rows: Vec<ResultRow> = per_rep.into_iter().flatten().collect();
        let method_rank = |m: Method| self.methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
        rows.sort_by_key(|r| (method_rank(r.method), r.repetition));
        Ok(ResultTable { rows })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn data_lines<R: BufRead>(source: R) -> impl Iterator<Item = Result<(usize, Vec<String>)>> {
    source.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#'))
                .then(|| Ok((i + 1, t.split_whitespace().map(str::to_string).collect())))
        }
    })
}

fn parse_pairs<R: BufRead, V, F>(source: R, parse: F) -> Result<Vec<(usize, V)>>
where
    F: Fn(&str) -> Option<V>,
{
    let mut out = Vec::new();
    for line in data_lines(source) {
        let (lineno, fields) = line?;
        if fields.len() != 2 {
            return Err(Error::parse(
                lineno,
                format!("expected `node value`, got {} fields", fields.len()),
            ));
        }
        let node = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node id `{}`", fields[0])))?;
        let value = parse(&fields[1]).ok_or_else(|| Error::parse(lineno, format!("bad value `{}`", fields[1])))?;
        out.push((node, value));
    }
    Ok(out)
}

/// Labels file: `node class` (classification) or `node value` (survey).
pub fn load_labels<R: BufRead>(source: R, task: Task, map: &IdMap) -> Result<LabelOracle> {
    fn place<V: Clone>(pairs: Vec<(usize, V)>, map: &IdMap) -> Result<Vec<V>> {
        let mut out: Vec<Option<V>> = vec![None; map.len()];
        for (old, v) in pairs {
            if let Some(new) = map.to_new(old) {
                out[new] = Some(v);
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(k, v)| v.ok_or_else(|| Error::invalid(format!("label file is missing node {}", map.to_old(k)))))
            .collect()
    }
    match task {
        Task::Classification => {
            let pairs = parse_pairs(source, |s| s.parse::<usize>().ok())?;
            Ok(LabelOracle::Classes(place(pairs, map)?))
        }
        Task::Survey => {
            let pairs = parse_pairs(source, |s| s.parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v)))?;
            Ok(LabelOracle::Values(place(pairs, map)?))
        }
    }
}

/// Costs file: `node cost`; nodes not listed cost 1.
pub fn load_costs<R: BufRead>(source: R, map: &IdMap) -> Result<Vec<f64>> {
    let pairs = parse_pairs(source, |s| s.parse::<f64>().ok().filter(|c| *c > 0.0 && c.is_finite()))?;
    let mut costs = vec![1.0; map.len()];
    for (old, c) in pairs {
        if let Some(new) = map.to_new(old) {
            costs[new] = c;
        }
    }
    Ok(costs)
}

/// One node id per line.
pub fn load_node_set<R: BufRead>(source: R, map: &IdMap) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for line in data_lines(source) {
        let (lineno, fields) = line?;
        let old: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node id `{}`", fields[0])))?;
        let new = map
            .to_new(old)
            .ok_or_else(|| Error::parse(lineno, format!("node {old} is not in the largest component")))?;
        out.push(new);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Graph file reduced to its largest component.
pub fn load_graph(path: &Path) -> Result<(WeightedGraph<f64>, IdMap)> {
    let g = load_edge_list(open(path)?)?;
    let (lcc, map) = largest_connected_component(&g)?;
    if lcc.node_count() < g.node_count() {
        warn!(
            "using the largest component: {} of {} nodes",
            lcc.node_count(),
            g.node_count()
        );
    }
    Ok((lcc, map))
}

pub fn map_regularization(reg: Regularization, map: &IdMap) -> Result<Regularization> {
    match reg {
        Regularization::DeleteNode(old) => map
            .to_new(old)
            .map(Regularization::DeleteNode)
            .ok_or_else(|| Error::invalid(format!("node {old} is not in the largest component"))),
        other => Ok(other),
    }
}

/// Loads every input named by `config` and runs it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let (graph, map) = load_graph(&config.graph_path)?;
    let oracle = load_labels(open(&config.labels_path)?, config.task, &map)?;
    let costs = match &config.costs_path {
        Some(p) => load_costs(open(p)?, &map)?,
        None => vec![1.0; graph.node_count()],
    };
    let test = match &config.test_set_path {
        Some(p) => Some(load_node_set(open(p)?, &map)?),
        None => None,
    };
    Experiment {
        graph,
        oracle,
        costs,
        test,
        regularization: map_regularization(config.regularization, &map)?,
        methods: config.methods.clone(),
        budget_schedule: config.budget_schedule.clone(),
        repetitions: config.repetitions,
        base_seed: config.base_seed,
    }
    .run()
}
