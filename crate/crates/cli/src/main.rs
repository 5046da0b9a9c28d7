//! `selfheal`: validate flows, run fault scenarios, and report on timelines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use selfheal_core::flow::{parse_flow, validate_graph, FlowGraph, Severity};
use selfheal_core::marble::{bucket_for_periods, infer_bucket, render_marble};
use selfheal_core::nodes::NodeKind;
use selfheal_core::report::{render_metric, Metric};
use selfheal_core::sim::{parse_scenario, ScenarioScript, Simulation};
use selfheal_core::timeline::TimelineLog;
use selfheal_core::Millis;

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "selfheal", version, about = "Self-healing dataflow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Marble,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mttr,
    Loss,
}

#[derive(Subcommand)]
enum Command {
    /// Run flows (one per instance, in order) under a scenario script.
    Run {
        #[arg(long = "flow", required = true)]
        flows: Vec<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Timeline destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Check a flow document and print its diagnostics.
    Validate {
        #[arg(long)]
        flow: PathBuf,
    },
    /// Compute a metric from a timeline CSV.
    Report {
        #[arg(long)]
        timeline: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
    },
    /// Render a timeline CSV as a marble diagram.
    Marble {
        #[arg(long)]
        timeline: PathBuf,
        /// Only rows for these nodes.
        #[arg(long = "node")]
        nodes: Vec<String>,
        /// Bucket width in ms; inferred from the timeline when absent.
        #[arg(long)]
        bucket: Option<Millis>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<FlowGraph, Failure> {
    let graph = parse_flow(&read(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let errors: Vec<String> = validate_graph(&graph)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| format!("  {d}"))
        .collect();
    if errors.is_empty() {
        Ok(graph)
    } else {
        Err(Failure::invalid(format!(
            "{}: flow failed validation:\n{}",
            path.display(),
            errors.join("\n")
        )))
    }
}

fn load_timeline(path: &Path) -> Result<TimelineLog, Failure> {
    TimelineLog::from_csv(&read(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Periods declared anywhere in the run, for the marble bucket width.
fn configured_periods(graphs: &[FlowGraph], script: &ScenarioScript) -> Vec<Millis> {
    let mut out: Vec<Millis> = script.world.devices.iter().map(|d| d.period_ms).collect();
    for g in graphs {
        for n in &g.nodes {
            let key = match n.kind {
                NodeKind::Inject | NodeKind::HttpAware | NodeKind::NetworkAware => "period",
                NodeKind::Compensate => "interval",
                NodeKind::Heartbeat => "timeout",
                NodeKind::TimingCheck => "expected",
                NodeKind::Debounce | NodeKind::ReplicationVoter => "window",
                _ => continue,
            };
            out.extend(n.config.get(key).and_then(|v| v.as_u64()));
        }
    }
    out
}

fn report_text(log: &TimelineLog) -> String {
    let mut text = render_metric(log, Metric::Mttr);
    text.push_str(&render_metric(log, Metric::Loss));
    text
}

fn cmd_run(flows: &[PathBuf], scenario: &Path, seed: u64, out: Option<&Path>, format: Format) -> Result<(), Failure> {
    let graphs = flows.iter().map(|p| load_graph(p)).collect::<Result<Vec<_>, _>>()?;
    let mut script =
        parse_scenario(&read(scenario)?).map_err(|e| Failure::invalid(format!("{}: {e}", scenario.display())))?;
    script.seed = seed;
    let periods = configured_periods(&graphs, &script);
    let sim = Simulation::new(graphs, script).map_err(|e| Failure::invalid(e.to_string()))?;
    let log = sim.run();
    let text = match format {
        Format::Csv => log.to_csv(),
        Format::Marble => {
            render_marble(&log, bucket_for_periods(periods), None).map_err(|e| Failure::invalid(e.to_string()))?
        }
    };
    match out {
        Some(path) => {
            write(path, &text)?;
            write(&path.with_extension("report.txt"), &report_text(&log))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let graph = parse_flow(&read(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let diags = validate_graph(&graph);
    for d in &diags {
        println!("{d}");
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        return Err(Failure::invalid(format!("{}: {errors} error(s)", path.display())));
    }
    println!(
        "{}: ok ({} nodes, {} wires)",
        path.display(),
        graph.nodes.len(),
        graph.wires.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            flows,
            scenario,
            seed,
            out,
            format,
        } => cmd_run(&flows, &scenario, seed, out.as_deref(), format),
        Command::Validate { flow } => cmd_validate(&flow),
        Command::Report { timeline, metric } => {
            let log = load_timeline(&timeline)?;
            let metric = match metric {
                MetricArg::Mttr => Metric::Mttr,
                MetricArg::Loss => Metric::Loss,
            };
            print!("{}", render_metric(&log, metric));
            Ok(())
        }
        Command::Marble {
            timeline,
            nodes,
            bucket,
        } => {
            let log = load_timeline(&timeline)?;
            let bucket = bucket.unwrap_or_else(|| infer_bucket(&log));
            let filter = (!nodes.is_empty()).then_some(nodes.as_slice());
            let text = render_marble(&log, bucket, filter).map_err(|e| Failure::invalid(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
