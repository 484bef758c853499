use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use context_cd::citest::{write_test_log, CiTest, CitKind, DataEngine, OracleContext};
use context_cd::discovery::{discover, DiscoveryConfig, LinkAssumptions, LinkMode, Method};
use context_cd::eval::{read_metrics, write_metrics, MetricsRow, Scope, BOOTSTRAP_ITERATIONS};
use context_cd::experiment::{
    evaluate, evaluate_graphs, replay, run_experiment, summarize, write_discovery, write_summary, ExperimentConfig,
};
use context_cd::graph::DirectedMixedGraph;
use context_cd::scm::{generate_scm, ground_truth, sample, CycleMode, EditOp, GeneratorConfig, GroundTruth};
use context_cd::{data::DatasetMeta, Dataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "context-cd",
    version,
    about = "Context-specific causal discovery with an endogenous context indicator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a multi-context model and sample a dataset from it.
    Generate(GenerateArgs),
    /// Run one discovery method on a dataset.
    Discover(DiscoverArgs),
    /// Run a full seeded experiment from a TOML config.
    Experiment(ExperimentArgs),
    /// Score discovered graphs, or summarize a metrics table.
    Eval(EvalArgs),
    /// Re-run one trial of a finished experiment.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Node count including R.
    #[arg(long, default_value_t = 8)]
    nodes: usize,
    #[arg(long, default_value_t = 0.4)]
    density: f64,
    #[arg(long, default_value_t = 2)]
    n_contexts: usize,
    #[arg(long, default_value_t = 1.0)]
    balance: f64,
    #[arg(long, default_value_t = 1)]
    n_change: usize,
    #[arg(long, value_delimiter = ',', default_value = "remove")]
    ops: Vec<EditOp>,
    #[arg(long, default_value = "forbid")]
    cycles: CycleMode,
    /// Rows to sample.
    #[arg(long, default_value_t = 1000)]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Dataset CSV; optional with the oracle engine.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "ac")]
    method: Method,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "parcorr-mixed")]
    cit: CitKind,
    #[arg(long, default_value = "none")]
    link_assumptions: LinkMode,
    /// Ground-truth JSON; needed by the oracle and by link assumptions,
    /// and enables metrics.csv.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    max_sepset_size: Option<usize>,
    /// Also write every executed CI test to tests.csv.
    #[arg(long)]
    test_log: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Output directory of `discover`.
    #[arg(long, requires = "ground_truth", conflicts_with = "metrics")]
    pred: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Metrics CSV to summarize with bootstrap intervals.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value_t = BOOTSTRAP_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    trial: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Discover(a) => discover_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => {
            let t = replay(a.trial, &a.dir)?;
            let status = if t.generation_failed { "generation failed" } else { "ok" };
            println!(
                "trial {} (seed {}): {status}, {} metrics rows",
                t.trial_id,
                t.seed,
                t.rows.len()
            );
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    if a.nodes < 2 {
        bail!("--nodes counts R and must be at least 2");
    }
    let cfg = GeneratorConfig {
        system_vars: a.nodes - 1,
        density: a.density,
        n_contexts: a.n_contexts,
        balance: a.balance,
        n_change: a.n_change,
        ops: a.ops,
        cycles: a.cycles,
        ..GeneratorConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let scm = generate_scm(&cfg, &mut rng)?;
    let truth = ground_truth(&scm)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("scm.json"), scm.to_json()?)?;
    fs::write(a.out.join("ground_truth.json"), truth.to_json()?)?;
    let meta = DatasetMeta {
        seed: Some(a.seed),
        config: Some(serde_json::json!({ "generator": cfg, "n_samples": a.n_samples })),
        ground_truth_files: vec!["scm.json".into(), "ground_truth.json".into()],
    };
    let data = sample(&scm, a.n_samples, &mut rng)?.with_meta(meta);
    data.save(&a.out.join("data.csv"))?;
    println!("wrote {} rows to {}", data.n_rows(), a.out.join("data.csv").display());
    Ok(())
}

fn load_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(GroundTruth::from_json(&text)?)
}

fn discover_cmd(a: DiscoverArgs) -> Result<()> {
    let truth = a.ground_truth.as_deref().map(load_truth).transpose()?;
    let data = a.data.as_deref().map(Dataset::load).transpose()?;
    let links = match (a.link_assumptions, &truth) {
        (LinkMode::None, _) => LinkAssumptions::none(),
        (mode, Some(t)) => {
            let r = t.union.n_nodes() - 1;
            LinkAssumptions::from_truth(mode, r, &t.r_edges())?
        }
        (_, None) => bail!("--link-assumptions {} needs --ground-truth", a.link_assumptions),
    };
    let cfg = DiscoveryConfig {
        alpha: a.alpha,
        max_sepset_size: a.max_sepset_size,
        method: a.method,
        link_assumptions: links,
        cit: a.cit,
    };
    cfg.validate()?;

    let oracle;
    let engine;
    let tester: &dyn CiTest = match (a.cit, &data, &truth) {
        (CitKind::Oracle, _, Some(t)) => {
            oracle = OracleContext::new(t.descriptive.clone(), t.union.clone())?;
            &oracle
        }
        (CitKind::Oracle, _, None) => bail!("--cit oracle needs --ground-truth"),
        (CitKind::ParcorrMixed, Some(d), _) => {
            engine = DataEngine::new(d);
            &engine
        }
        (CitKind::ParcorrMixed, None, _) => bail!("--cit parcorr-mixed needs --data"),
    };

    let start = Instant::now();
    let res = discover(tester, &cfg)?;
    let runtime = start.elapsed().as_secs_f64();
    write_discovery(&a.out, &res)?;
    let stats = serde_json::json!({
        "method": res.method,
        "link_assumptions": a.link_assumptions,
        "test_count": res.test_count,
        "runtime_seconds": runtime,
        "n_rows": data.as_ref().map(|d| d.n_rows()),
        "warnings": res.warnings,
    });
    fs::write(a.out.join("stats.json"), serde_json::to_string_pretty(&stats)?)?;
    for w in &res.warnings {
        log::warn!("{w}");
    }
    if a.test_log {
        let names: Vec<String> = res.union_graph.nodes().iter().map(|n| n.name.clone()).collect();
        write_test_log(fs::File::create(a.out.join("tests.csv"))?, &names, &res.tests)?;
    }
    if let Some(t) = &truth {
        let base = base_row(
            a.method.as_str(),
            a.link_assumptions,
            data.as_ref().map_or(0, |d| d.n_rows()),
        );
        let rows = evaluate(&res, t, &base)?;
        write_metrics(fs::File::create(a.out.join("metrics.csv"))?, &rows)?;
    }
    println!(
        "{}: {} tests, {} union edges, {:.3}s",
        res.method.label(),
        res.test_count,
        res.union_graph.n_edges(),
        runtime
    );
    Ok(())
}

fn base_row(method: &str, links: LinkMode, n: usize) -> MetricsRow {
    MetricsRow {
        trial_id: 0,
        method: method.into(),
        link_assumptions: links.as_str().into(),
        n_samples: n,
        scope: Scope::IncludeR,
        context: "union".into(),
        tpr: None,
        fpr: None,
        em_precision: None,
        em_recall: None,
        test_count: None,
        failed: false,
    }
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(dir) = a.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.master_seed {
        cfg.master_seed = s;
    }
    let results = run_experiment(&cfg)?;
    let failed = results.iter().filter(|t| t.generation_failed).count();
    println!(
        "{} trials ({failed} failed generations) written to {}",
        results.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn std::io::Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    if let Some(m) = &a.metrics {
        let rows = read_metrics(fs::File::open(m).with_context(|| format!("opening {}", m.display()))?)?;
        let summary = summarize(&rows, a.iterations, a.seed)?;
        return Ok(write_summary(output(a.out.as_deref())?, &summary)?);
    }
    let (Some(pred), Some(gt)) = (&a.pred, &a.ground_truth) else {
        bail!("eval needs either --metrics or --pred with --ground-truth");
    };
    let truth = load_truth(gt)?;
    let read_graph = |p: PathBuf| -> Result<DirectedMixedGraph> {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(DirectedMixedGraph::from_json(&text)?)
    };
    let union = read_graph(pred.join("union.json"))?;
    let mut contexts = BTreeMap::new();
    for &r in truth.descriptive.keys() {
        let p = pred.join(format!("context_{r}.json"));
        if p.exists() {
            contexts.insert(r, read_graph(p)?);
        }
    }
    let stats: Option<serde_json::Value> = fs::read_to_string(pred.join("stats.json"))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    let field = |k: &str| stats.as_ref().and_then(|s| s.get(k).cloned());
    let method = field("method")
        .and_then(|m| m.as_str().map(String::from))
        .unwrap_or_default();
    let n = field("n_rows").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let tests = field("test_count").and_then(|v| v.as_u64()).map(|c| c as usize);
    let links = field("link_assumptions")
        .and_then(|v| v.as_str().and_then(|s| s.parse().ok()))
        .unwrap_or_default();
    let base = base_row(&method, links, n);
    let rows = evaluate_graphs(&contexts, &union, tests, &truth, &base)?;
    Ok(write_metrics(output(a.out.as_deref())?, &rows)?)
}
