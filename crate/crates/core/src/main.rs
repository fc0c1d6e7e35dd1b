use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use grf_active::baselines::{mig_select_with, random_trace};
use grf_active::graph::{build_laplacian, IdMap, LaplacianMode};
use grf_active::grf::TestSet;
use grf_active::harness::{
    emit_results, format_sig, load_costs, load_graph, load_node_set, map_regularization, run_experiment,
    ExperimentConfig, Method, Regularization, Task,
};
use grf_active::selection::{
    argmin_first_query, first_query_survey_singular, greedy_select_with, Budget, Criterion, CriterionKind,
    GreedyOptions, SelectionTrace, TieBreak,
};
use grf_active::verify::{self, PropertyReport};
use grf_active::{Error, Result};

#[derive(Parser)]
#[command(
    name = "grf-active",
    version,
    about = "Active learning and surveying on Gaussian random fields over graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one budgeted selection and print its trace.
    Select(SelectArgs),
    /// Run repeated selection and scoring over a budget schedule.
    Experiment(ExperimentArgs),
    /// Run the randomized property suites.
    Verify(VerifyArgs),
    /// Survey risk of every possible first query on the unregularized Laplacian.
    FirstQuery(FirstQueryArgs),
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    budget: f64,
    #[arg(long, default_value = "v_opt", value_parser = parse_method)]
    method: Method,
    /// `regularized[:sigma]` or `delete-node:<id>`.
    #[arg(long, default_value = "regularized", value_parser = parse_regularization)]
    regularization: Regularization,
    /// File with one test node id per line.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Seed for random selection and for breaking exact ties.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML config; other flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    graph: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    labels: Option<PathBuf>,
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long, default_value = "classification", value_parser = parse_task)]
    task: Task,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "v_opt,random")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    budgets: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "regularized", value_parser = parse_regularization)]
    regularization: Regularization,
    #[arg(long)]
    test: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    All,
    Inverse,
    Block,
    Harmonic,
    SubmodularClassification,
    SubmodularSurvey,
    Aofs,
    RatioClassification,
    RatioSurvey,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-evaluate a saved witness instead of running suites.
    #[arg(long, conflicts_with_all = ["suite", "trials", "n_max", "seed"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct FirstQueryArgs {
    #[arg(long)]
    graph: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_regularization(s: &str) -> std::result::Result<Regularization, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Outcome {
    Done,
    PropertyFailed,
}

fn select(args: SelectArgs, out: &mut impl Write) -> Result<Outcome> {
    let (graph, map) = load_graph(&args.graph)?;
    let n = graph.node_count();
    let costs = match &args.costs {
        Some(p) => load_costs(io::BufReader::new(File::open(p)?), &map)?,
        None => vec![1.0; n],
    };
    let test = match &args.test {
        Some(p) => TestSet::Nodes(load_node_set(io::BufReader::new(File::open(p)?), &map)?),
        None => TestSet::AllUnlabeled,
    };
    let (mode, fixed) = match map_regularization(args.regularization, &map)? {
        Regularization::Regularized { sigma } => (LaplacianMode::uniform(n, sigma), None),
        Regularization::DeleteNode(v) => (LaplacianMode::DeleteNode(v), Some(v)),
    };
    let l = build_laplacian(&graph, &mode)?;
    let pool: Vec<usize> = (0..n).filter(|&v| Some(v) != fixed && !test.contains(v)).collect();
    let budget = Budget::new(costs, args.budget)?;
    let options = GreedyOptions {
        tie_break: args.seed.map_or(TieBreak::LowestId, TieBreak::Seeded),
    };
    let criterion = |kind| Criterion::new(kind, test.clone());
    let trace = match args.method {
        Method::VOpt => greedy_select_with(&l, &criterion(CriterionKind::Classification), &budget, &pool, options)?,
        Method::SigmaOpt => greedy_select_with(&l, &criterion(CriterionKind::Survey), &budget, &pool, options)?,
        Method::Mig => mig_select_with(&l, &budget, &pool, &test, options)?,
        Method::Random => random_trace(
            &l,
            &criterion(CriterionKind::Classification),
            &budget,
            &pool,
            args.seed.unwrap_or(0),
        )?,
    };
    write_trace(&trace, &map, out)?;
    Ok(Outcome::Done)
}

fn write_trace(trace: &SelectionTrace<f64>, map: &IdMap, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "# initial_risk {}", format_sig(trace.initial_risk))?;
    writeln!(out, "step,node,cost,marginal_gain,gain_per_cost,risk_after")?;
    for (k, s) in trace.steps.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            k + 1,
            map.to_old(s.node),
            format_sig(s.cost),
            format_sig(s.marginal_gain),
            format_sig(s.gain_per_cost),
            format_sig(s.risk_after)
        )?;
    }
    Ok(())
}

fn experiment(args: ExperimentArgs, out: &mut impl Write) -> Result<Outcome> {
    let config = match args.config {
        Some(path) => ExperimentConfig::from_file(&path)?,
        None => ExperimentConfig {
            graph_path: args.graph.expect("required by clap"),
            labels_path: args.labels.expect("required by clap"),
            costs_path: args.costs,
            task: args.task,
            methods: args.methods,
            budget_schedule: args.budgets,
            repetitions: args.repetitions,
            base_seed: args.seed,
            regularization: args.regularization,
            test_set_path: args.test,
            output_path: args.output,
        },
    };
    let table = run_experiment(&config)?;
    match &config.output_path {
        Some(p) => emit_results(&table, BufWriter::new(File::create(p)?))?,
        None => emit_results(&table, out)?,
    }
    Ok(Outcome::Done)
}

fn verify_cmd(args: VerifyArgs, out: &mut impl Write) -> Result<Outcome> {
    if let Some(path) = args.replay {
        let violation = verify::replay_witness(&std::fs::read_to_string(path)?)?;
        writeln!(out, "violation {}", format_sig(violation))?;
        return Ok(if violation > verify::SLACK {
            Outcome::PropertyFailed
        } else {
            Outcome::Done
        });
    }
    let (t, n, seed) = (args.trials, args.n_max, args.seed);
    let ratio_trials = (t / 10).max(1);
    let reports: Vec<PropertyReport> = match args.suite {
        Suite::All => verify::run_all(t, n, seed)?,
        Suite::Inverse => vec![verify::check_inverse_nonnegative(t, n, seed)?],
        Suite::Block => vec![verify::check_block_difference(t, n, seed)?],
        Suite::Harmonic => vec![verify::check_harmonic_range(t, n, seed)?],
        Suite::SubmodularClassification => {
            vec![verify::check_monotone_submodular(
                CriterionKind::Classification,
                t,
                n,
                seed,
            )?]
        }
        Suite::SubmodularSurvey => vec![verify::check_monotone_submodular(CriterionKind::Survey, t, n, seed)?],
        Suite::Aofs => vec![verify::check_aofs(t, n, seed)?],
        Suite::RatioClassification => vec![verify::check_greedy_ratio(
            CriterionKind::Classification,
            ratio_trials,
            n.min(10),
            3,
            seed,
        )?],
        Suite::RatioSurvey => vec![verify::check_greedy_ratio(
            CriterionKind::Survey,
            ratio_trials,
            n.min(10),
            3,
            seed,
        )?],
    };
    writeln!(out, "property,trials,failures,worst_violation,min_ratio,status")?;
    for r in &reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.property,
            r.trials,
            r.failures,
            format_sig(r.worst_violation),
            r.min_ratio.map_or(String::new(), format_sig),
            if r.passed() { "pass" } else { "FAIL" }
        )?;
    }
    for r in reports.iter().filter(|r| !r.passed()) {
        write!(out, "{}", r.witness)?;
    }
    Ok(if reports.iter().all(PropertyReport::passed) {
        Outcome::Done
    } else {
        Outcome::PropertyFailed
    })
}

fn first_query(args: FirstQueryArgs, out: &mut impl Write) -> Result<Outcome> {
    let (graph, map) = load_graph(&args.graph)?;
    let l = build_laplacian(&graph, &LaplacianMode::Unregularized)?;
    let risks = first_query_survey_singular(&l)?;
    writeln!(out, "node,survey_risk")?;
    for (k, r) in risks.iter().enumerate() {
        writeln!(out, "{},{}", map.to_old(k), format_sig(*r))?;
    }
    if let Some(best) = argmin_first_query(&risks) {
        writeln!(out, "# argmin {}", map.to_old(best))?;
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = match cli.command {
        Command::Select(a) => select(a, &mut out),
        Command::Experiment(a) => experiment(a, &mut out),
        Command::Verify(a) => verify_cmd(a, &mut out),
        Command::FirstQuery(a) => first_query(a, &mut out),
    };
    let flushed = out.flush();
    match (result, flushed) {
        (Ok(Outcome::Done), Ok(())) => ExitCode::SUCCESS,
        (Ok(Outcome::PropertyFailed), Ok(())) => ExitCode::from(3),
        (Err(e), _) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
        (_, Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
