use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use crowdteach::datagen::{build_vw_problem, VwProblemParams};
use crowdteach::harness::{
    difficulty_curve, empirical_marginal, hypothesis_marginal, lemma1_check, simulate_population,
    total_variation, write_difficulty_csv, write_report_csv, PolicySpec, SimulationReport,
};
use crowdteach::io::{load_problem, load_sequence, save_problem, save_sequence};
use crowdteach::rgtp::{rgtp_teach, RgtpConfig};
use crowdteach::{
    random_teach, setcover_teach, strict_teach, Error, PolicyKind, Problem, TeachConfig,
};
use crowdteach_service::{ServiceConfig, SessionStore};

const PROBLEM_FORMAT: &str = "\
Problem file (JSON):
  {\"alpha\": 2.0,
   \"examples\": [{\"id\": \"x0\", \"x\": [0.1, 0.2], \"y\": 1, \"asset\": \"img/x0.png\"}, ...],
   \"hypotheses\": [{\"w\": [1.0, 0.0], \"b\": 0.0}, ...],
   \"prior\": [0.5, 0.5], \"target_index\": 0,
   \"test_examples\": [...]}        (optional, same shape as examples)";

const SEQUENCE_FORMAT: &str = "\
Sequence file (JSON):
  {\"policy\": \"strict\", \"status\": \"tolerance_met\", \"example_ids\": [\"x3\", ...],
   \"per_step\": [{\"F\": 0.21, \"gain\": 0.21, \"difficulty\": 0.95}, ...]}";

const REPORT_FORMAT: &str = "\
Report file (CSV):
  policy,teaching_length,learner_alpha,teacher_alpha,n_learners,mean_test_error,std_test_error,seed
  learner_alpha lists the alphas separated by ';'; teacher_alpha is empty for policies without one.";

/// Teaching sequences for crowd annotators.
#[derive(Debug, Parser)]
#[command(
    name = "crowdteach",
    version,
    after_help = "Set CROWDTEACH_THREADS to cap parallelism (0 or unset: automatic)."
)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic problem.
    #[command(subcommand)]
    Generate(Generate),
    /// Compute a teaching sequence.
    #[command(after_help = format!("{PROBLEM_FORMAT}\n\n{SEQUENCE_FORMAT}"))]
    Teach(TeachArgs),
    /// Simulate learner populations taught by one or more policies.
    #[command(after_help = format!("{PROBLEM_FORMAT}\n\n{REPORT_FORMAT}"))]
    Simulate(SimulateArgs),
    /// Compare the law of the learner's hypothesis at one step with the posterior.
    #[command(after_help = format!("{PROBLEM_FORMAT}\n\n{SEQUENCE_FORMAT}"))]
    Lemma1(Lemma1Args),
    /// Serve teach-then-test sessions over HTTP.
    #[command(after_help = format!("{PROBLEM_FORMAT}\n\n{SEQUENCE_FORMAT}"))]
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum Generate {
    /// Two Gaussian classes in 2D and eight clusters of linear hypotheses.
    #[command(after_help = PROBLEM_FORMAT)]
    Vw(VwArgs),
}

#[derive(Debug, Args)]
struct VwArgs {
    /// Output problem file.
    #[arg(long)]
    out: PathBuf,
    /// Hypotheses drawn per cluster.
    #[arg(long, default_value_t = 2)]
    per_cluster: usize,
    /// Learner confidence stored in the problem.
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct TeachArgs {
    #[arg(long)]
    problem: PathBuf,
    /// strict, setcover, random or rgtp.
    #[arg(long)]
    policy: String,
    /// Target error (strict: expected learner error; rgtp: 1 - p(h*)).
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Learner confidence assumed by strict [default: the problem's alpha].
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight rgtp assumes for inconsistent hypotheses.
    #[arg(long, default_value_t = 0.5)]
    wo: f64,
    /// Length cap; the exact length for setcover and random [default: all examples].
    #[arg(long)]
    max_len: Option<usize>,
    /// Output sequence file.
    #[arg(long)]
    out: PathBuf,
    /// rgtp only: belief trace CSV (step,p_target,eta).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Difficulty CSV (step,difficulty) of the picks.
    #[arg(long)]
    difficulty_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',', default_value = "strict,setcover,random")]
    policy: Vec<String>,
    /// Comma-separated teaching lengths.
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20")]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    learners: usize,
    /// Comma-separated learner confidences, assigned round-robin.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    learner_alphas: Vec<f64>,
    /// Teacher confidence for strict [default: the problem's alpha].
    #[arg(long)]
    alpha: Option<f64>,
    /// Stopping tolerance for strict and rgtp.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    wo: f64,
    /// Output report CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Lemma1Args {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    sequence: PathBuf,
    /// 1-based step t; h_t is compared with the posterior after t - 1 examples.
    #[arg(long)]
    step: usize,
    #[arg(long, default_value_t = 50_000)]
    rollouts: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Teaching sequence for a group, as GROUP=PATH or PATH (group named
    /// after the file's policy). Repeatable. Group "none" always exists.
    #[arg(long)]
    sequence: Vec<String>,
    /// Number of test items (the first test examples of the problem).
    #[arg(long, default_value_t = 10)]
    test_len: usize,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory with static assets and the web client.
    #[arg(long)]
    assets_dir: Option<PathBuf>,
    /// Append every answer to this JSONL file.
    #[arg(long)]
    answer_log: Option<PathBuf>,
    /// Send feature vectors with each item.
    #[arg(long)]
    features: bool,
}

fn parse_policy(name: &str) -> anyhow::Result<PolicyKind> {
    name.parse::<PolicyKind>()
        .map_err(|e| anyhow!("--policy: {e}"))
}

fn teacher_alpha(flag: Option<f64>, problem: &Problem) -> f64 {
    flag.unwrap_or_else(|| problem.alpha())
}

fn generate_vw(args: VwArgs, seed: u64) -> anyhow::Result<()> {
    let mut params = VwProblemParams {
        alpha: args.alpha,
        ..Default::default()
    };
    params.hypotheses.per_cluster = args.per_cluster;
    let problem = build_vw_problem(&params, seed)?;
    save_problem(&problem, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "{}: {} teaching examples, {} test examples, {} hypotheses",
        args.out.display(),
        problem.n_examples(),
        problem.test_set().map_or(0, <[_]>::len),
        problem.n_hypotheses()
    );
    Ok(())
}

fn teach(args: TeachArgs, seed: u64) -> anyhow::Result<()> {
    let policy = parse_policy(&args.policy)?;
    let problem = load_problem(&args.problem)
        .with_context(|| format!("problem {}", args.problem.display()))?;
    if args.trace.is_some() && policy != PolicyKind::Rgtp {
        bail!("--trace is only available with --policy rgtp");
    }
    let full = args.max_len.unwrap_or(problem.n_examples());
    let sequence = match policy {
        PolicyKind::Strict => {
            let mut config = TeachConfig::new(args.epsilon, teacher_alpha(args.alpha, &problem));
            if let Some(m) = args.max_len {
                config = config.with_max_len(m);
            }
            strict_teach(&problem, &config)?
        }
        PolicyKind::SetCover => setcover_teach(&problem, full, seed)?,
        PolicyKind::Random => random_teach(&problem, full, seed)?,
        PolicyKind::Rgtp => {
            let config = RgtpConfig {
                w_o: args.wo,
                epsilon: args.epsilon,
                max_len: full,
            };
            let (sequence, trace) = rgtp_teach(&problem, &config, seed)?;
            if let Some(path) = &args.trace {
                trace.write_csv(problem.target_index(), path)?;
            }
            sequence
        }
    };
    save_sequence(&sequence, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.difficulty_out {
        write_difficulty_csv(&difficulty_curve(&problem, &sequence.example_ids)?, path)?;
    }
    let status = serde_json::to_value(sequence.status)?;
    println!(
        "{}: {} examples, status {}",
        args.out.display(),
        sequence.len(),
        status.as_str().unwrap_or_default()
    );
    Ok(())
}

fn simulate(args: SimulateArgs, seed: u64) -> anyhow::Result<()> {
    let policies = args
        .policy
        .iter()
        .map(|p| parse_policy(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let problem = load_problem(&args.problem)
        .with_context(|| format!("problem {}", args.problem.display()))?;
    let mut report = SimulationReport::default();
    for policy in policies {
        let spec = match policy {
            PolicyKind::Strict => PolicySpec::Strict {
                epsilon: args.epsilon,
                teacher_alpha: teacher_alpha(args.alpha, &problem),
            },
            PolicyKind::SetCover => PolicySpec::SetCover,
            PolicyKind::Random => PolicySpec::Random,
            PolicyKind::Rgtp => PolicySpec::Rgtp {
                epsilon: args.epsilon,
                w_o: args.wo,
            },
        };
        report.extend(simulate_population(
            &problem,
            &spec,
            &args.lengths,
            args.learners,
            &args.learner_alphas,
            seed,
        )?);
    }
    write_report_csv(&report, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    for r in &report.rows {
        println!(
            "{:<9} len {:>3}  error {:.4} ± {:.4}",
            r.policy,
            r.teaching_length,
            r.mean_test_error,
            r.standard_error()
        );
    }
    Ok(())
}

fn lemma1(args: Lemma1Args, seed: u64) -> anyhow::Result<()> {
    let problem = load_problem(&args.problem)
        .with_context(|| format!("problem {}", args.problem.display()))?;
    let sequence = load_sequence(&args.sequence)
        .with_context(|| format!("sequence {}", args.sequence.display()))?;
    let ids = &sequence.example_ids;
    let tv = lemma1_check(&problem, ids, args.step, args.rollouts, seed)?;
    let empirical = empirical_marginal(&problem, ids, args.step, args.rollouts, seed)?;
    let process = hypothesis_marginal(&problem, ids, args.step)?;
    println!("tv_to_posterior {tv}");
    println!(
        "tv_to_process_law {}",
        total_variation(&empirical, &process)
    );
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let problem = load_problem(&args.problem)
        .with_context(|| format!("problem {}", args.problem.display()))?;
    let mut config = ServiceConfig::new(problem, args.test_len);
    config.serve_features = args.features;
    config.answer_log = args.answer_log;
    for spec in &args.sequence {
        let (group, path) = match spec.split_once('=') {
            Some((g, p)) => (Some(g.to_string()), PathBuf::from(p)),
            None => (None, PathBuf::from(spec)),
        };
        let file = load_sequence(&path).with_context(|| format!("sequence {}", path.display()))?;
        let group = group.unwrap_or_else(|| file.policy.to_string());
        if config.groups.contains_key(&group) {
            bail!("--sequence: group `{group}` given twice");
        }
        config.groups.insert(group, file.example_ids);
    }
    let store = SessionStore::new(config)?;
    let groups: Vec<&str> = store.group_names().collect();
    let addr = SocketAddr::from(([0, 0, 0, 0], args.port));
    println!("listening on {addr}; groups: {}", groups.join(", "));
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(crowdteach_service::serve(store, args.assets_dir, addr))?;
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("CROWDTEACH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow!("CROWDTEACH_THREADS must be a non-negative integer, got `{raw}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate(Generate::Vw(args)) => generate_vw(args, cli.seed),
        Command::Teach(args) => teach(args, cli.seed),
        Command::Simulate(args) => simulate(args, cli.seed),
        Command::Lemma1(args) => lemma1(args, cli.seed),
        Command::Serve(args) => serve(args),
    }
}

fn is_io(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.is::<std::io::Error>() || cause.downcast_ref::<Error>().is_some_and(Error::is_io)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = err
                .chain()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(": ");
            eprintln!("error: {msg}");
            ExitCode::from(if is_io(&err) { 2 } else { 1 })
        }
    }
}
