mod format;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use resplace_core::config::Config;
use resplace_core::graph::{build_resnet50, MemoryMode, ResNetGraph};
use resplace_core::objective::FeasibilityReport;
use resplace_core::sim::{run_scenario, sweep, METRICS};
use resplace_core::solver::solve_ga;
use resplace_core::{Error, Instance};
use serde_json::json;

use format::{fmt_g, round_row, summary_row, write_csv, ROUND_COLUMNS, SUMMARY_COLUMNS};

const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "resplace",
    version,
    about = "Block placement and block dropping for distributed ResNet-50 inference"
)]
struct Cli {
    /// Scenario config file (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(short, long, global = true, env = "RESPLACE_OUT_DIR", default_value = "out")]
    output_dir: PathBuf,

    /// Override a config key, e.g. `--set weights.alpha=0.7`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Replaces scenario.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Exit with status 3 when any solved round is infeasible.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-block memory, compute and output-size table.
    Model,
    /// Solve a single round and write the assignment.
    Solve {
        /// Include every constraint check with its margin.
        #[arg(long)]
        explain: bool,
    },
    /// Run all rounds of the scenario.
    Simulate,
    /// Run the scenario once per value of the sweep axis.
    Sweep,
}

enum Failure {
    Config(anyhow::Error),
    Infeasible(String),
    Internal(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Parse(_)
            | Error::Validation { .. }
            | Error::EmptyFeasibleSet { .. }
            | Error::InvalidInputSide(_)
            | Error::InvalidModel(_) => Failure::Config(e.into()),
            other => Failure::Internal(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = match (&cli.command, &cli.config) {
        (Command::Model, None) => None,
        (_, None) => return Err(Failure::Config(anyhow!("--config is required for this command"))),
        (_, Some(path)) => Some(load_config(cli, path)?),
    };
    std::fs::create_dir_all(&cli.output_dir)
        .with_context(|| format!("creating output directory {}", cli.output_dir.display()))?;
    if let Some(cfg) = &config {
        let dumped = cfg.to_toml()?;
        let path = cli.output_dir.join("effective_config.toml");
        std::fs::write(&path, dumped).with_context(|| format!("writing {}", path.display()))?;
    }
    match &cli.command {
        Command::Model => cmd_model(cli, config.as_ref()),
        Command::Solve { explain } => cmd_solve(cli, config.as_ref().expect("loaded"), *explain),
        Command::Simulate => cmd_simulate(cli, config.as_ref().expect("loaded")),
        Command::Sweep => cmd_sweep(cli, config.as_ref().expect("loaded")),
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<Config, Failure> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("scenario.seed={seed}"));
    }
    Config::load(path, &overrides).map_err(|e| Failure::Config(e.into()))
}

fn cmd_model(cli: &Cli, config: Option<&Config>) -> Result<(), Failure> {
    let side = config.map_or(224, |c| c.model.input_side);
    let graph = build_resnet50(side)?;
    let rows = (1..=graph.len()).map(|j| model_row(&graph, j));
    write_csv(
        &cli.output_dir.join("model.csv"),
        &[
            "block_id",
            "stage",
            "kind",
            "droppable",
            "mem_inputs_bytes",
            "mem_weights_bytes",
            "mem_both_bytes",
            "compute_mults",
            "output_bits",
        ],
        rows,
    )?;
    Ok(())
}

fn model_row(graph: &ResNetGraph, j: usize) -> Vec<String> {
    let b = graph.block(j);
    vec![
        j.to_string(),
        b.stage.to_string(),
        b.kind.to_string(),
        b.droppable.to_string(),
        graph.memory_load(j, MemoryMode::Inputs).to_string(),
        graph.memory_load(j, MemoryMode::Weights).to_string(),
        graph.memory_load(j, MemoryMode::Both).to_string(),
        graph.compute_load(j).to_string(),
        graph.output_bits(j).to_string(),
    ]
}

fn report_json(report: &FeasibilityReport, all: bool) -> serde_json::Value {
    let checks: Vec<_> = report
        .checks
        .iter()
        .filter(|c| all || !c.passed)
        .map(|c| {
            json!({
                "constraint": c.kind.to_string(),
                "witness": c.witness,
                "used": c.used,
                "limit": c.limit,
                "margin": c.margin,
                "passed": c.passed,
            })
        })
        .collect();
    serde_json::Value::Array(checks)
}

fn cmd_solve(cli: &Cli, config: &Config, explain: bool) -> Result<(), Failure> {
    let scenario = config.scenario()?;
    let (mut inst, solver) = scenario.round_instance(config.solve.round)?;
    if let Some(r) = config.solve.requests {
        inst = Instance::new(
            inst.graph.clone(),
            inst.fleet.clone(),
            inst.rates.clone(),
            r,
            inst.energy,
        )?
        .with_memory_mode(scenario.memory_mode)
        .with_accounting(scenario.accounting);
    }
    let path = cli.output_dir.join("solve.json");
    let res = match solve_ga(&inst, &scenario.weights, &scenario.profile, &solver) {
        Ok(res) => res,
        Err(Error::InfeasibleInstance(msg)) => {
            let doc = json!({
                "round": config.solve.round,
                "requests": inst.requests,
                "feasible": false,
                "error": msg,
            });
            write_json(&path, &doc)?;
            return if cli.strict {
                Err(Failure::Infeasible(msg))
            } else {
                Ok(())
            };
        }
        Err(e) => return Err(e.into()),
    };
    let bd = inst.evaluate(&res.assignment)?;
    let a = &res.assignment;
    let per_request: Vec<_> = (0..a.requests())
        .map(|r| {
            let placement: Vec<_> = (0..a.blocks())
                .map(|j| match a.host(r, j) {
                    Some(i) => json!(i + 1),
                    None => serde_json::Value::Null,
                })
                .collect();
            json!({
                "request": r + 1,
                "drop_set": a.drop_set(r).ids(),
                "accuracy": scenario.profile.g_lookup(a.keep_vector(r)),
                "device_per_block": placement,
            })
        })
        .collect();
    let mut doc = json!({
        "round": config.solve.round,
        "requests": inst.requests,
        "objective": res.objective,
        "feasible": res.feasible,
        "evaluations": res.evaluations,
        "metrics": {
            "avg_accuracy": resplace_core::objective::accuracy_term(a, &scenario.profile)?,
            "total_latency_s": bd.total_latency,
            "shared_data_bits": bd.shared_bits,
            "total_computation_mults": bd.total_computation,
            "total_energy_j": bd.total_energy(),
        },
        "assignment": per_request,
        "violations": report_json(&res.report, false),
    });
    if explain {
        doc["constraints"] = report_json(&res.report, true);
    }
    write_json(&path, &doc)?;
    if cli.strict && !res.feasible {
        return Err(Failure::Infeasible(format!(
            "{} constraint(s) violated",
            res.report.failures().count()
        )));
    }
    Ok(())
}

fn write_json(path: &Path, doc: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc).map_err(anyhow::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn strict_check(cli: &Cli, infeasible: usize) -> Result<(), Failure> {
    if cli.strict && infeasible > 0 {
        Err(Failure::Infeasible(format!("{infeasible} round(s) infeasible")))
    } else {
        Ok(())
    }
}

fn cmd_simulate(cli: &Cli, config: &Config) -> Result<(), Failure> {
    let scenario = config.scenario()?;
    let run = run_scenario(&scenario)?;
    write_csv(
        &cli.output_dir.join("rounds.csv"),
        &ROUND_COLUMNS,
        run.records.iter().map(round_row),
    )?;
    write_csv(
        &cli.output_dir.join("summary.csv"),
        &SUMMARY_COLUMNS,
        [summary_row(&run.summary)],
    )?;
    for r in run.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("round {} failed: {}", r.round, r.error.as_deref().unwrap_or_default());
    }
    strict_check(cli, run.records.iter().filter(|r| !r.feasible).count())
}

fn cmd_sweep(cli: &Cli, config: &Config) -> Result<(), Failure> {
    let points = config.sweep_points()?;
    let runs = sweep(&points)?;
    let mut long = Vec::new();
    for s in &runs {
        for (k, metric) in METRICS.iter().enumerate() {
            for rec in &s.run.records {
                long.push(vec![
                    s.label.clone(),
                    metric.to_string(),
                    rec.round.to_string(),
                    fmt_g(rec.metric_values()[k]),
                ]);
            }
        }
    }
    write_csv(
        &cli.output_dir.join("sweep.csv"),
        &["axis_value", "metric", "round", "value"],
        long,
    )?;
    let mut header = vec!["axis_value"];
    header.extend(SUMMARY_COLUMNS);
    write_csv(
        &cli.output_dir.join("sweep_summary.csv"),
        &header,
        runs.iter().map(|s| {
            let mut row = vec![s.label.clone()];
            row.extend(summary_row(&s.run.summary));
            row
        }),
    )?;
    strict_check(
        cli,
        runs.iter().flat_map(|s| &s.run.records).filter(|r| !r.feasible).count(),
    )
}
