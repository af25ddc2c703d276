//! Experiment CLI: seeded simulation runs with metrics reports and
//! invariant audits, sustained-rate sweeps, the common-core checker, and
//! offline trace auditing. Exit code is nonzero on any invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nxbft_core::harness::{
    self, audit_simulation, audit_trace, preset, preset_names, report, CoreDag,
};
use nxbft_core::sim::{SimConfig, Simulation, TraceLog};

#[derive(Parser)]
#[command(name = "nxbft", about = "Deterministic simulation harness for a TEE-assisted DAG SMR protocol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and report metrics; audits the run afterwards.
    Run(RunArgs),
    /// Search for the maximum sustained request rate.
    Sweep(SweepArgs),
    /// Check the common-core property of an explicit DAG file.
    CheckCore(CheckCoreArgs),
    /// Re-check invariants from a recorded binary trace.
    Audit(AuditArgs),
    /// Print an example experiment configuration (TOML).
    Config(ConfigArgs),
}

#[derive(Args)]
struct ConfigSource {
    /// Experiment file (TOML); see `nxbft config` for the schema.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset; see `--list-presets`.
    #[arg(long)]
    preset: Option<String>,
    /// Override the scheduler seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the virtual run duration (milliseconds).
    #[arg(long)]
    duration_ms: Option<u64>,
    /// Override the request rate (per second).
    #[arg(long)]
    rate: Option<f64>,
}

impl ConfigSource {
    fn load(&self) -> Result<SimConfig, String> {
        let mut cfg = if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            SimConfig::from_toml(&text).map_err(|e| e.to_string())?
        } else if let Some(name) = &self.preset {
            preset(name).ok_or_else(|| {
                format!("unknown preset {name}; available: {}", preset_names().join(", "))
            })?
        } else {
            SimConfig::default()
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(d) = self.duration_ms {
            cfg.duration_ms = d;
        }
        if let Some(r) = self.rate {
            cfg.clients.rate_per_s = r;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Write summary/latency/round CSVs into this directory.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Record a binary event trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Dump replica 0's DAG in DOT format after the run.
    #[arg(long)]
    dump_dag: Option<PathBuf>,
    /// Skip the post-run invariant audit.
    #[arg(long)]
    no_audit: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Comma-separated request rates to test (per second).
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
}

#[derive(Args)]
struct CheckCoreArgs {
    /// DAG file in the documented text format.
    #[arg(required_unless_present = "builtin")]
    dag: Option<PathBuf>,
    /// Check the built-in three-round counterexample instead.
    #[arg(long)]
    builtin: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Binary trace recorded with `run --trace`.
    trace: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Start from this preset instead of the defaults.
    #[arg(long)]
    preset: Option<String>,
    /// List available presets and exit.
    #[arg(long)]
    list_presets: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::CheckCore(args) => check_core(args),
        Command::Audit(args) => audit(args),
        Command::Config(args) => config(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let cfg = args.source.load()?;
    let n = cfg.n;
    let seed = cfg.seed;
    let mut sim = Simulation::with_trace(cfg, args.trace.is_some());
    sim.run();
    print!("{}", report::text_summary(&sim));

    if let Some(dir) = &args.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("summary.csv"), report::summary_csv(&sim))
            .map_err(|e| e.to_string())?;
        std::fs::write(
            dir.join("latency_buckets.csv"),
            report::latency_buckets_csv(&sim, 750),
        )
        .map_err(|e| e.to_string())?;
        std::fs::write(dir.join("round_messages.csv"), report::round_messages_csv(&sim))
            .map_err(|e| e.to_string())?;
        println!("csv written to {}", dir.display());
    }
    if let Some(path) = &args.dump_dag {
        if let Some(r) = sim.replica(0) {
            std::fs::write(path, r.dag().to_dot()).map_err(|e| e.to_string())?;
            println!("dag dumped to {}", path.display());
        }
    }
    if let Some(path) = &args.trace {
        if let Some(trace) = sim.take_trace() {
            std::fs::write(path, trace.encode(n, seed)).map_err(|e| e.to_string())?;
            println!("trace written to {}", path.display());
        }
    }

    if !args.no_audit {
        let audit = audit_simulation(&sim);
        if !audit.ok() {
            eprintln!("AUDIT FAILED:");
            for v in &audit.violations {
                eprintln!("  - {v}");
            }
            return Ok(ExitCode::from(1));
        }
        println!("audit: ok");
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode, String> {
    let cfg = args.source.load()?;
    let rates = if args.rates.is_empty() {
        vec![100.0, 200.0, 400.0, 800.0, 1600.0]
    } else {
        args.rates
    };
    let points = harness::sweep(&cfg, &rates);
    println!("rate_per_s,throughput_per_s,accepted");
    for p in &points {
        println!("{},{:.1},{}", p.rate_per_s, p.throughput_per_s, p.accepted);
    }
    match harness::max_sustained(&points) {
        Some(rate) => println!("max sustained rate: {rate}/s"),
        None => println!("no tested rate was sustained"),
    }
    Ok(ExitCode::SUCCESS)
}

fn check_core(args: CheckCoreArgs) -> Result<ExitCode, String> {
    let text = if args.builtin {
        harness::three_round_counterexample().to_string()
    } else {
        let path = args.dag.as_ref().expect("clap enforces presence");
        std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?
    };
    let dag = CoreDag::parse(&text).map_err(|e| e.to_string())?;
    let rep = dag.check().map_err(|e| e.to_string())?;
    println!(
        "n={} rounds={} min_links={} quorum={}",
        rep.n, rep.rounds, rep.min_links, rep.quorum
    );
    println!(
        "max common core: {} (witness: {:?})",
        rep.max_common_core_size, rep.witness
    );
    if rep.holds {
        println!("common-core property HOLDS (core >= quorum)");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("common-core property FAILS (core < quorum)");
        Ok(ExitCode::from(1))
    }
}

fn audit(args: AuditArgs) -> Result<ExitCode, String> {
    let bytes = std::fs::read(&args.trace)
        .map_err(|e| format!("cannot read {}: {e}", args.trace.display()))?;
    let (n, seed, log) = TraceLog::decode(&bytes)?;
    println!("trace: n={n} seed={seed} records={}", log.records.len());
    let report = audit_trace(&log);
    if report.ok() {
        println!("audit: ok");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("AUDIT FAILED:");
        for v in &report.violations {
            eprintln!("  - {v}");
        }
        Ok(ExitCode::from(1))
    }
}

fn config(args: ConfigArgs) -> Result<ExitCode, String> {
    if args.list_presets {
        for name in preset_names() {
            println!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = match &args.preset {
        Some(name) => preset(name).ok_or_else(|| format!("unknown preset {name}"))?,
        None => SimConfig::default(),
    };
    print!("{}", cfg.to_toml());
    Ok(ExitCode::SUCCESS)
}
