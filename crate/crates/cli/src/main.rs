use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use asymreg_core::batch::{self, evaluate_fixture, run_batch, BatchConfig, Method, Prior, ResultRow, SummaryRow};
use asymreg_core::corpus::{self, build_dataset, read_jsonl, space_size, CorpusConfig, CorpusError, CorpusRecord};
use asymreg_core::ea::EaConfig;
use asymreg_core::grammar::{parse_template, parse_text, Expr, ParseError};
use asymreg_core::mcts::MctsConfig;
use asymreg_core::metrics::{aggregate, evaluate_grid, grid_conditions, write_grid_csv, TrainingIndex};
use asymreg_core::objective::TargetSpec;
use asymreg_core::policy::{
    sample_from_prefix, EmpiricalPolicy, EmpiricalVariant, Endpoint, Fallback, NeuralPolicyClient, Policy, PolicyError,
    RandomPolicy, ENDPOINT_ENV,
};
use asymreg_core::rational::{analyze, leading_powers, Condition};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

const DEFAULT_ENDPOINT: &str = "tcp://127.0.0.1:7878";

const EXIT_CODES: &str = "Exit codes: 0 success, 1 other failure, 2 usage error, 3 I/O error, \
4 parse or data error, 5 policy service unavailable or protocol error.";

#[derive(Parser, Debug)]
#[command(name = "asymreg", version, about = "Symbolic regression with asymptotic constraints", after_help = EXIT_CODES)]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for files and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    /// JSON file with optional "corpus", "mcts" and "ea" sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scale {
    Desk,
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the train/validation/holdout corpus.
    GenDataset,
    /// Number of partial derivations with at most N rules.
    SpaceSize {
        n: usize,
        /// Print two-digit scientific notation instead of the exact integer.
        #[arg(long)]
        sci: bool,
    },
    /// Leading powers at zero and infinity.
    LeadingPower { expr: String },
    /// Canonical key of the simplified rational function.
    Canonical { expr: String },
    /// Run a search method over every target of a holdout file.
    Search {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        holdout: PathBuf,
        /// Standard deviation of Gaussian noise on the training values.
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        /// Score each row's "candidate" instead of searching.
        #[arg(long)]
        fixtures: bool,
        /// Prior for ng-mcts: nn, nnnc, teacher, random, fh, fhnc, lh:L, lhnc:L.
        #[arg(long)]
        prior: Option<String>,
        /// Training corpus for empirical priors.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        simulations: Option<usize>,
        /// Only the first N targets.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Success, L1 and novelty of a generator over a condition grid.
    EvalPolicy {
        /// nn, nnnc, random, fh, fhnc, lh:L or lhnc:L.
        #[arg(long)]
        model: String,
        /// Training corpus (novelty reference and empirical counts).
        #[arg(long)]
        train: PathBuf,
        /// All 361 conditions with |c0|, |cinf| <= 9 instead of the in-sample ones.
        #[arg(long)]
        grid: bool,
        /// Generations per condition.
        #[arg(long)]
        k: Option<usize>,
        /// What empirical models do on an unseen context.
        #[arg(long, default_value = "halt")]
        fallback: Fallback,
        #[arg(long, default_value_t = 100)]
        length_limit: usize,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Sample completions of a template with placeholders.
    Complete {
        /// e.g. "1 / □ - □" (placeholders: □, ?, _).
        #[arg(long)]
        template: String,
        /// "C0,CINF"
        #[arg(long, allow_hyphen_values = true)]
        condition: Condition,
        #[arg(short, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value = "random")]
        model: String,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        length_limit: usize,
        /// Completions to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Join results files and summarize solved, invalid and hard targets.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        join: Vec<PathBuf>,
    },
    /// Launch the neural policy service, passing arguments through.
    ServePolicy {
        #[arg(long, default_value = "python3")]
        python: String,
        #[arg(long, default_value = "asymreg_policy")]
        module: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

#[derive(Debug)]
enum Fail {
    Usage(String),
    Io(String),
    Data(String),
    Protocol(String),
    Other(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Other(_) => 1,
            Fail::Usage(_) => 2,
            Fail::Io(_) => 3,
            Fail::Data(_) => 4,
            Fail::Protocol(_) => 5,
        }
    }

    fn io(path: &Path, e: impl fmt::Display) -> Fail {
        Fail::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (Fail::Usage(m) | Fail::Io(m) | Fail::Data(m) | Fail::Protocol(m) | Fail::Other(m)) = self;
        f.write_str(m)
    }
}

impl From<CorpusError> for Fail {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Fail::Io(e.to_string()),
            CorpusError::Data { .. } => Fail::Data(e.to_string()),
        }
    }
}

impl From<PolicyError> for Fail {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::ServiceUnavailable(_) | PolicyError::Protocol(_) => Fail::Protocol(e.to_string()),
            PolicyError::Grammar(_) => Fail::Data(e.to_string()),
            PolicyError::NoSupport => Fail::Other(e.to_string()),
        }
    }
}

fn parse_expr(s: &str) -> Result<Expr, Fail> {
    parse_text(s).map_err(|e: ParseError| Fail::Data(format!("cannot parse {s:?}: {e}")))
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default)]
struct FileConfig {
    corpus: Option<CorpusConfig>,
    mcts: Option<MctsConfig>,
    ea: Option<EaConfig>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Fail> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Fail::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Fail::Data(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Fail> {
    fs::write(path, contents).map_err(|e| Fail::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Fail> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    write_file(path, text.as_bytes())
}

/// Everything needed to rerun a command, without timestamps.
fn write_manifest(cli: &Cli, name: &str, config: Value) -> Result<(), Fail> {
    ensure_dir(&cli.out)?;
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv,
        "seed": cli.seed,
        "scale": cli.scale,
        "config": config,
    });
    write_json(&cli.out.join(format!("manifest_{name}.json")), &manifest)
}

enum Model {
    Neural,
    Random,
    Empirical(EmpiricalVariant),
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nn" | "nnnc" => Ok(Model::Neural),
            "random" => Ok(Model::Random),
            _ => s
                .parse()
                .map(Model::Empirical)
                .map_err(|e| format!("unknown model {s:?}: {e}")),
        }
    }
}

fn endpoint(flag: Option<&str>) -> Result<Endpoint, Fail> {
    let from_env = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty());
    let s = flag
        .map(str::to_string)
        .or(from_env)
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
    s.parse().map_err(Fail::Usage)
}

fn connect(endpoint: &Endpoint) -> Result<NeuralPolicyClient, Fail> {
    let client = NeuralPolicyClient::connect(endpoint)?;
    client.ping()?;
    Ok(client)
}

fn read_training(path: Option<&Path>, what: &str) -> Result<Vec<CorpusRecord>, Fail> {
    let path = path.ok_or_else(|| Fail::Usage(format!("{what} needs --train")))?;
    Ok(read_jsonl(path)?)
}

fn empirical(records: &[CorpusRecord], variant: EmpiricalVariant, fallback: Fallback) -> EmpiricalPolicy {
    let seqs = records.iter().filter_map(|r| r.condition.map(|c| (&r.rules[..], c)));
    EmpiricalPolicy::build(seqs, variant).with_fallback(fallback)
}

fn build_policy(
    model: &str,
    train: Option<&Path>,
    fallback: Fallback,
    endpoint_flag: Option<&str>,
) -> Result<Box<dyn Policy + Send + Sync>, Fail> {
    Ok(match model.parse::<Model>().map_err(Fail::Usage)? {
        Model::Neural => Box::new(connect(&endpoint(endpoint_flag)?)?),
        Model::Random => Box::new(RandomPolicy),
        Model::Empirical(v) => Box::new(empirical(&read_training(train, model)?, v, fallback)),
    })
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn print_rows(rows: &[ResultRow]) {
    println!("target\tmethod\tbest\tdg_train\tdg_int\tdg_ext\tdp\tstatus");
    for r in rows {
        let dp = if r.dp_sentinel {
            format!("{}*", r.dp)
        } else {
            r.dp.to_string()
        };
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.target,
            r.method,
            r.best_expr.as_deref().unwrap_or("-"),
            fmt_opt(r.dg_train),
            fmt_opt(r.dg_int),
            fmt_opt(r.dg_ext),
            dp,
            r.error
                .as_deref()
                .map_or_else(|| r.status.to_string(), |e| format!("error: {e}")),
        );
    }
}

fn print_summary(rows: &[SummaryRow]) {
    println!("band\tmethod\truns\tsolved%\tinvalid%\thard%\tdg_train\tdg_int\tdg_ext\tdp");
    for s in rows {
        println!(
            "{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{}\t{}\t{}\t{}",
            s.band,
            s.method,
            s.runs,
            s.solved_pct,
            s.invalid_pct,
            s.hard_pct,
            fmt_opt(s.median_dg_train),
            fmt_opt(s.median_dg_int),
            fmt_opt(s.median_dg_ext),
            s.median_dp.map_or_else(|| "-".to_string(), |v| v.to_string()),
        );
    }
}

fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), Fail> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("serializable"));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn read_json_lines(path: &Path) -> Result<Vec<(usize, Value)>, Fail> {
    let file = fs::File::open(path).map_err(|e| Fail::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Fail::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Fail::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

/// Rows with "expr" (or "target") and "candidate", optionally restricted to
/// one "method".
fn run_fixtures(path: &Path, method: Method) -> Result<Vec<ResultRow>, Fail> {
    let mut rows = Vec::new();
    for (line, v) in read_json_lines(path)? {
        let field = |k: &str| v.get(k).and_then(Value::as_str);
        if let Some(m) = field("method") {
            if m.parse::<Method>().ok() != Some(method) {
                continue;
            }
        }
        let at = |msg: String| Fail::Data(format!("{}:{line}: {msg}", path.display()));
        let target = field("expr")
            .or(field("target"))
            .ok_or_else(|| at("missing \"expr\"".into()))?;
        let candidate = field("candidate").ok_or_else(|| at("missing \"candidate\"".into()))?;
        let spec = TargetSpec::new(parse_expr(target)?).map_err(|e| at(e.to_string()))?;
        rows.push(evaluate_fixture(&spec, method.name(), Some(&parse_expr(candidate)?)));
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn search(
    cli: &Cli,
    file: &FileConfig,
    method: Method,
    holdout: &Path,
    noise_sd: f64,
    fixtures: bool,
    prior: Option<&str>,
    train: Option<&Path>,
    simulations: Option<usize>,
    limit: Option<usize>,
    endpoint_flag: Option<&str>,
) -> Result<(), Fail> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Fail::Usage("--noise-sd must be a nonnegative number".into()));
    }
    let stem = format!("search_{}", method.name());
    if fixtures {
        let rows = run_fixtures(holdout, method)?;
        ensure_dir(&cli.out)?;
        write_results(&cli.out.join(format!("fixtures_{}.jsonl", method.name())), &rows)?;
        write_manifest(cli, &format!("fixtures_{}", method.name()), json!({ "method": method }))?;
        print_rows(&rows);
        return Ok(());
    }
    if prior.is_some() && method != Method::NgMcts {
        return Err(Fail::Usage(format!("--prior only applies to ng-mcts, not {method}")));
    }
    let mut config = BatchConfig {
        method,
        mcts: file.mcts.clone().unwrap_or_default(),
        ea: file.ea.clone().unwrap_or_default(),
        noise_sd,
        seed: cli.seed,
    };
    if let Some(n) = simulations {
        config.mcts.simulations = n;
        config.ea.eval_budget = n;
    }
    let mut targets: Vec<Expr> = read_jsonl(holdout)?.into_iter().map(|r| r.expr).collect();
    if let Some(n) = limit {
        targets.truncate(n);
    }

    let prior_name = match method {
        Method::NgMcts => prior.unwrap_or("nn"),
        m if m.is_ea() => "none",
        _ => "uniform",
    };
    let rows = match prior_name {
        "none" | "uniform" | "random" => run_batch(&targets, &config, &Prior::Uniform),
        "teacher" => run_batch(&targets, &config, &Prior::Teacher),
        "nn" | "nnnc" => {
            let ep = endpoint(endpoint_flag)?;
            connect(&ep)?;
            let factory = move || NeuralPolicyClient::connect(&ep).map(|c| Box::new(c) as Box<dyn Policy + Send>);
            run_batch(&targets, &config, &Prior::PerWorker(&factory))
        }
        other => {
            let variant: EmpiricalVariant = other.parse().map_err(|e| Fail::Usage(format!("--prior: {e}")))?;
            let policy = empirical(&read_training(train, other)?, variant, Fallback::Uniform);
            run_batch(&targets, &config, &Prior::Shared(&policy))
        }
    };
    let summary = batch::summarize(&rows);
    ensure_dir(&cli.out)?;
    write_results(&cli.out.join(format!("results_{}.jsonl", method.name())), &rows)?;
    write_json(&cli.out.join(format!("summary_{}.json", method.name())), &summary)?;
    write_manifest(
        cli,
        &stem,
        json!({ "batch": config, "prior": prior_name, "holdout": holdout }),
    )?;
    print_summary(&summary);
    if matches!(prior_name, "nn" | "nnnc") {
        if let Some(e) = rows.iter().find_map(|r| r.error.as_ref()) {
            return Err(Fail::Protocol(e.clone()));
        }
    }
    Ok(())
}

fn eval_policy(
    cli: &Cli,
    model: &str,
    train: &Path,
    grid: bool,
    k: Option<usize>,
    fallback: Fallback,
    length_limit: usize,
    endpoint_flag: Option<&str>,
) -> Result<(), Fail> {
    let records = read_jsonl(train)?;
    let index = TrainingIndex::new(&records);
    let in_sample_max_m = CorpusConfig::default().in_sample_max_m;
    let policy: Box<dyn Policy + Send + Sync> = match model.parse::<Model>().map_err(Fail::Usage)? {
        Model::Empirical(v) => Box::new(empirical(&records, v, fallback)),
        _ => build_policy(model, Some(train), fallback, endpoint_flag)?,
    };
    let conditions = if grid {
        grid_conditions(9)
    } else {
        Condition::up_to_complexity(in_sample_max_m)
    };
    let k = k.unwrap_or(match cli.scale {
        Scale::Desk => 25,
        Scale::Full => 100,
    });
    let cells = evaluate_grid(policy.as_ref(), &conditions, k, length_limit, cli.seed, &index)?;
    let report = aggregate(model, &cells, in_sample_max_m);
    ensure_dir(&cli.out)?;
    let stem = file_stem(model);
    let mut csv = Vec::new();
    write_grid_csv(&mut csv, &cells).expect("writing to memory");
    write_file(&cli.out.join(format!("grid_{stem}.csv")), &csv)?;
    write_json(&cli.out.join(format!("report_{stem}.json")), &report)?;
    write_manifest(
        cli,
        &format!("eval_policy_{stem}"),
        json!({ "model": model, "train": train, "grid": grid, "k": k, "fallback": format!("{fallback:?}").to_lowercase(), "length_limit": length_limit }),
    )?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Fail> {
    if let Some(n) = cli.parallelism {
        if n == 0 {
            return Err(Fail::Usage("--parallelism must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Fail::Other(e.to_string()))?;
    }
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::GenDataset => {
            let mut config = file.corpus.clone().unwrap_or_else(|| match cli.scale {
                Scale::Desk => CorpusConfig::desk(),
                Scale::Full => CorpusConfig::full(),
            });
            config.seed = cli.seed;
            let data = build_dataset(&config);
            data.write(&cli.out)?;
            write_manifest(cli, "gen_dataset", json!({ "corpus": config }))?;
            for (name, recs) in data.files() {
                println!("{name}\t{}", recs.len());
            }
        }
        Command::SpaceSize { n, sci } => {
            let size = space_size(*n);
            if *sci {
                println!("{}", corpus::scientific(&size, 2));
            } else {
                println!("{size}");
            }
        }
        Command::LeadingPower { expr } => println!("{}", leading_powers(&parse_expr(expr)?)),
        Command::Canonical { expr } => println!("{}", analyze(&parse_expr(expr)?).key),
        Command::Search {
            method,
            holdout,
            noise_sd,
            fixtures,
            prior,
            train,
            simulations,
            limit,
            endpoint,
        } => search(
            cli,
            &file,
            *method,
            holdout,
            *noise_sd,
            *fixtures,
            prior.as_deref(),
            train.as_deref(),
            *simulations,
            *limit,
            endpoint.as_deref(),
        )?,
        Command::EvalPolicy {
            model,
            train,
            grid,
            k,
            fallback,
            length_limit,
            endpoint,
        } => eval_policy(
            cli,
            model,
            train,
            *grid,
            *k,
            *fallback,
            *length_limit,
            endpoint.as_deref(),
        )?,
        Command::Complete {
            template,
            condition,
            n,
            model,
            train,
            length_limit,
            top,
            endpoint,
        } => {
            let prefix = parse_template(template).map_err(|e| Fail::Data(format!("template {template:?}: {e}")))?;
            let policy = build_policy(model, train.as_deref(), Fallback::Uniform, endpoint.as_deref())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let summary = sample_from_prefix(policy.as_ref(), &prefix, *condition, *n, *length_limit, &mut rng)?;
            println!("n={} incomplete={}", summary.n, summary.incomplete);
            for c in summary.completions.iter().take(*top) {
                println!("{:.4}\t{}\t{}", c.frequency, c.count, c.expr);
            }
        }
        Command::Report { join } => {
            let mut rows = Vec::new();
            for path in join {
                for (line, v) in read_json_lines(path)? {
                    let row: ResultRow =
                        serde_json::from_value(v).map_err(|e| Fail::Data(format!("{}:{line}: {e}", path.display())))?;
                    rows.push(row);
                }
            }
            let summary = batch::summarize(&rows);
            ensure_dir(&cli.out)?;
            write_json(&cli.out.join("summary.json"), &summary)?;
            write_manifest(cli, "report", json!({ "join": join }))?;
            print_summary(&summary);
        }
        Command::ServePolicy { python, module, args } => {
            let status = std::process::Command::new(python)
                .arg("-m")
                .arg(module)
                .arg("serve")
                .args(args)
                .status()
                .map_err(|e| Fail::Io(format!("cannot launch {python}: {e}")))?;
            if !status.success() {
                return Err(Fail::Other(format!("policy service exited with {status}")));
            }
        }
    }
    std::io::stdout().flush().map_err(|e| Fail::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("asymreg: {e}");
            ExitCode::from(e.code())
        }
    }
}
