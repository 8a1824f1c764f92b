use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use txfidelity::entity::{
    assign_entities, size_distribution, AssignMode, AssignmentSummary, DEFAULT_ENTITY_COLUMN,
};
use txfidelity::graph::build_bipartite;
use txfidelity::groundtruth::{generate_ground_truth_rows, ground_truth_schema};
use txfidelity::ingest::{
    build_entity_sequences, load_synthetic, load_table, ClassMode, SchemaConfig, TransactionTable,
};
use txfidelity::oracle::{
    fit_marginals, generate_rowindep, verify_prop1, verify_prop2, SpacingSource,
};
use txfidelity::scoring::{
    evaluate, noise_floor, parse_patterns, BaselineScores, EvalConfig, FanoutScale, MetricId,
    MetricSettings, SplitMode,
};
use txfidelity::velocity::{load_ruleset, parse_duration};
use txfidelity::{Error, Result};

/// Behavioral fidelity of synthetic transaction data.
#[derive(Parser)]
#[command(name = "txfid", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for splits, assignment and generation.
    #[arg(long, global = true, env = "TXFID_SEED", default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noise floor from a seeded 50/50 split of the real data.
    Baseline(BaselineArgs),
    /// Degradation ratios of a synthetic table against a baseline.
    Evaluate(EvaluateArgs),
    /// Post-hoc pseudo-entity labels for a synthetic table.
    Assign(AssignArgs),
    /// Row-independent reference generator and proposition checks.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Export the entity-attribute incidence list as CSV.
    Edges(EdgesArgs),
}

#[derive(Args)]
struct MetricArgs {
    /// Comma-separated subset of P1,P2,P3,P4.
    #[arg(long)]
    patterns: Option<String>,
    /// Burst thresholds, e.g. 60s,5m,30m.
    #[arg(long)]
    deltas: Option<String>,
    /// Velocity rules file replacing the built-in R1-R8.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// any-fraud | strict | split
    #[arg(long)]
    class_mode: Option<String>,
    /// Skip clique expansion for attributes with more entities than this.
    #[arg(long)]
    clique_limit: Option<usize>,
    /// raw | normalized
    #[arg(long)]
    fanout_scale: Option<String>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Output baseline JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// entity | row
    #[arg(long, default_value = "entity")]
    split_mode: String,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    syn: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    /// Output report file.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Assign pseudo-entities when the synthetic table has no entity column.
    #[arg(long)]
    assign: bool,
    #[arg(long, default_value = "consecutive")]
    assign_mode: AssignMode,
    /// Add the clustering and triangle gaps to the composite.
    #[arg(long)]
    include_graph_gaps: bool,
    /// Composite weights, e.g. p1_autocorr_gap=2,p3_fanout_w1=1.
    #[arg(long)]
    weights: Option<String>,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    syn: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value = "consecutive")]
    mode: AssignMode,
    /// Name of the added entity column (default: the schema's entity_col).
    #[arg(long)]
    column: Option<String>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Sample rows i.i.d. from the column marginals of a real table.
    Gen {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Row count (default: as many as the fitted table).
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Monte Carlo check of a fan-out or spacing proposition.
    Check(CheckArgs),
    /// Bursty ground-truth table with shared devices and IPs.
    Groundtruth {
        #[arg(long, default_value_t = 50_000)]
        rows: usize,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the matching schema file.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CheckArgs {
    /// 1 = fan-out mean/variance, 2 = spacing autocorrelation.
    #[arg(long)]
    prop: u8,
    /// Per-row probability of the attribute value (prop 1).
    #[arg(long)]
    p: Option<f64>,
    /// Entity sizes, comma separated (prop 1).
    #[arg(long)]
    sizes: Option<String>,
    /// Monte Carlo trials (prop 1).
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Transactions per entity (prop 2).
    #[arg(long)]
    n: Option<usize>,
    /// uniform | exponential | pool (prop 2)
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Simulated entities (prop 2).
    #[arg(long, default_value_t = 100_000)]
    entities: usize,
    /// Table whose timestamps form the pool for --dist pool.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct EdgesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command, seed: u64) -> Result<()> {
    match command {
        Command::Baseline(a) => cmd_baseline(a, seed),
        Command::Evaluate(a) => cmd_evaluate(a, seed),
        Command::Assign(a) => cmd_assign(a, seed),
        Command::Oracle(c) => cmd_oracle(c, seed),
        Command::Edges(a) => cmd_edges(a),
    }
}

fn load_schema(path: &Path) -> Result<SchemaConfig> {
    SchemaConfig::load(path)
}

fn parse_deltas(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|d| parse_duration(d.trim())).collect()
}

fn parse_weights(s: &str) -> Result<BTreeMap<MetricId, f64>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("weight {part:?} is not metric=value")))?;
        let w: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("weight {v:?} is not a number")))?;
        out.insert(k.trim().parse()?, w);
    }
    Ok(out)
}

/// Apply metric flags on top of `base`.
fn apply_metric_args(args: &MetricArgs, base: &mut MetricSettings) -> Result<()> {
    if let Some(d) = &args.deltas {
        base.burst_deltas = parse_deltas(d)?;
    }
    if let Some(r) = &args.rules {
        base.ruleset = load_ruleset(r)?;
    }
    if let Some(c) = &args.class_mode {
        base.class_mode = c.parse::<ClassMode>()?;
    }
    if let Some(l) = args.clique_limit {
        base.clique_limit = Some(l);
    }
    if let Some(f) = &args.fanout_scale {
        base.fanout_scale = f.parse::<FanoutScale>()?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_baseline(a: BaselineArgs, seed: u64) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let mut config = EvalConfig {
        split_mode: a.split_mode.parse::<SplitMode>()?,
        ..EvalConfig::default()
    };
    apply_metric_args(&a.metrics, &mut config.settings)?;
    if let Some(p) = &a.metrics.patterns {
        config.patterns = Some(parse_patterns(p)?);
    }
    let real = load_table(&a.real, &schema)?;
    let baseline = noise_floor(&real, seed, &config)?;
    baseline.save(&a.out)?;
    print!("{}", baseline.render_text());
    Ok(())
}

fn real_size_distribution(real: &TransactionTable) -> Result<txfidelity::entity::EntitySizeDistribution> {
    // sizes are drawn per class, so entities are split by label
    let seqs = build_entity_sequences(real, ClassMode::SplitByClass)?;
    size_distribution(&seqs)
}

fn cmd_evaluate(a: EvaluateArgs, seed: u64) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let baseline = BaselineScores::load(&a.baseline)?;
    let mut settings = baseline.settings.clone();
    apply_metric_args(&a.metrics, &mut settings)?;
    let config = EvalConfig {
        patterns: a.metrics.patterns.as_deref().map(parse_patterns).transpose()?,
        settings,
        split_mode: baseline.split_mode,
        include_graph_gaps: a.include_graph_gaps,
        weights: a.weights.as_deref().map(parse_weights).transpose()?,
    };
    let real = load_table(&a.real, &schema)?;
    let mut syn = load_synthetic(&a.syn, &schema)?;
    let mut assignment: Option<AssignmentSummary> = None;
    if a.assign && syn.entity_column().is_none() {
        let dist = real_size_distribution(&real)?;
        let column = schema.entity_col.clone().unwrap_or_else(|| DEFAULT_ENTITY_COLUMN.into());
        let (labeled, summary) = assign_entities(&syn, &dist, seed, a.assign_mode, &column)?;
        syn = labeled;
        assignment = Some(summary);
    }
    let report = evaluate(&real, &syn, &baseline, &config, assignment)?;
    let text = report.render_text();
    if let Some(out) = &a.out {
        match a.format {
            Format::Json => report.save(out)?,
            Format::Text => write_text(out, &text)?,
        }
    }
    match (a.format, &a.out) {
        (Format::Json, None) => print!("{}", report.to_json()?),
        _ => print!("{text}"),
    }
    Ok(())
}

fn cmd_assign(a: AssignArgs, seed: u64) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let real = load_table(&a.real, &schema)?;
    let column = a
        .column
        .or_else(|| schema.entity_col.clone())
        .unwrap_or_else(|| DEFAULT_ENTITY_COLUMN.into());
    let mut syn_schema = schema.clone();
    syn_schema.entity_col = None;
    let syn = load_synthetic(&a.syn, &syn_schema)?;
    if syn.column(&column).is_some() {
        return Err(Error::InvalidArgument(format!(
            "synthetic table already has a column named {column:?}"
        )));
    }
    let dist = real_size_distribution(&real)?;
    let (labeled, summary) = assign_entities(&syn, &dist, seed, a.mode, &column)?;
    let comments = vec![format!(
        "txfid assign mode={} seed={} column={} groups={}",
        summary.mode,
        summary.seed,
        summary.column,
        summary.groups.values().sum::<usize>()
    )];
    labeled.write_csv(&a.out, &comments)?;
    println!(
        "assigned {} rows to {} pseudo-entities (mode {}, seed {}) -> {}",
        labeled.n_rows(),
        summary.groups.values().sum::<usize>(),
        summary.mode,
        summary.seed,
        a.out.display()
    );
    Ok(())
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("entity size {x:?} is not a non-negative integer")))
        })
        .collect()
}

fn cmd_oracle(c: OracleCommand, seed: u64) -> Result<()> {
    match c {
        OracleCommand::Gen { fit, schema, rows, out } => {
            let schema = load_schema(&schema)?;
            let real = load_table(&fit, &schema)?;
            let model = fit_marginals(&real)?;
            let n = rows.unwrap_or(real.n_rows());
            let syn = generate_rowindep(&model, n, seed)?;
            let comments = vec![format!("txfid oracle gen rows={n} seed={seed} fit={}", model.fingerprint())];
            syn.write_csv(&out, &comments)?;
            println!("wrote {n} row-independent rows -> {}", out.display());
        }
        OracleCommand::Check(a) => {
            let check = match a.prop {
                1 => {
                    let p = a.p.ok_or_else(|| Error::Config("--prop 1 needs --p".into()))?;
                    let sizes = a.sizes.as_deref().ok_or_else(|| Error::Config("--prop 1 needs --sizes".into()))?;
                    verify_prop1(p, &parse_sizes(sizes)?, seed, a.trials)?
                }
                2 => {
                    let n = a.n.ok_or_else(|| Error::Config("--prop 2 needs --n".into()))?;
                    let source = match a.dist.as_str() {
                        "uniform" => SpacingSource::Uniform,
                        "exponential" => SpacingSource::Exponential,
                        "pool" => {
                            let (fit, schema) = a
                                .fit
                                .as_ref()
                                .zip(a.schema.as_ref())
                                .ok_or_else(|| Error::Config("--dist pool needs --fit and --schema".into()))?;
                            let table = load_table(fit, &load_schema(schema)?)?;
                            SpacingSource::EmpiricalPool(table.timestamps().to_vec())
                        }
                        other => return Err(Error::Config(format!("unknown spacing distribution {other:?}"))),
                    };
                    verify_prop2(n, &source, seed, a.entities)?
                }
                other => return Err(Error::Config(format!("--prop must be 1 or 2, got {other}"))),
            };
            print!("{}", check.render());
        }
        OracleCommand::Groundtruth { rows, out, schema_out } => {
            let t = generate_ground_truth_rows(rows, seed)?;
            t.write_csv(&out, &[format!("txfid oracle groundtruth seed={seed}")])?;
            if let Some(s) = schema_out {
                write_text(&s, &ground_truth_schema().to_config_string())?;
            }
            println!("wrote {} ground-truth rows -> {}", t.n_rows(), out.display());
        }
    }
    Ok(())
}

fn cmd_edges(a: EdgesArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let table = load_table(&a.input, &schema)?;
    let g = build_bipartite(&table, &schema.attribute_cols)?;
    g.write_edge_list(&a.out)?;
    println!(
        "{} entities, {} attributes, {} edges -> {}",
        g.n_entities(),
        g.n_attributes(),
        g.n_edges(),
        a.out.display()
    );
    Ok(())
}
