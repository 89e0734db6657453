//! `spectracam` — generate synthetic spectra, build a clustered CAM
//! snapshot, run the query/expansion phase, and summarize the logs.
//!
//! Configuration precedence: CLI flags > `SPECTRACAM_*` environment
//! variables > `--config` key=value file > built-in defaults.
//! Exit codes: 0 success, 1 input error, 2 config error, 3 violated
//! internal invariant.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use spectracam_core::config::ConfigError;
use spectracam_core::hdc::{bind, hamming, Accumulator, Hypervector};
use spectracam_core::runtime::{
    dry_run_report, run_gen, run_phase3, run_report, run_setup, RuntimeError,
};
use spectracam_core::spectra::{generate_synthetic, preprocess_all};
use spectracam_core::{Encoder, EnergyLatencyLedger, RunConfig};

#[derive(Parser)]
#[command(
    name = "spectracam",
    about = "Hyperdimensional spectral clustering on a simulated content-addressable memory",
    version
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key=value config file applied over the defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (synthetic data and tie-breaker streams).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Scheduler execution mode.
    #[arg(long, global = true, value_name = "serial|parallel")]
    mode: Option<String>,
    /// Matchline current model.
    #[arg(long = "current-model", global = true, value_name = "ideal|parasitic")]
    current_model: Option<String>,
    /// Individual config override, repeatable (e.g. --set cluster.theta=480).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic MGF corpus.
    Gen,
    /// Phase I+II: cluster an MGF corpus into a versioned CAM snapshot.
    Setup {
        /// Input MGF file (omit with --dry-run).
        input: Option<PathBuf>,
        /// Report the ledger for writing N rows without building anything.
        #[arg(long = "dry-run", value_name = "ROWS")]
        dry_run: Option<u64>,
    },
    /// Phase III: stream a query MGF against a snapshot.
    Run {
        /// Snapshot directory produced by `setup` (omit with --dry-run).
        snapshot: Option<PathBuf>,
        /// Query MGF file (omit with --dry-run).
        queries: Option<PathBuf>,
        /// Report the ledger for searching N rows without running anything.
        #[arg(long = "dry-run", value_name = "ROWS")]
        dry_run: Option<u64>,
    },
    /// Summarize a run directory (quality, energy, latency, speedups).
    Report {
        /// Run directory produced by `run`.
        run_dir: PathBuf,
        /// Print the machine-readable summary JSON instead of the table.
        #[arg(long)]
        json: bool,
        /// Also write summary.json and buckets.csv into --out.
        #[arg(long)]
        emit: bool,
    },
    /// In-process microbenchmarks of the hot kernels.
    Bench {
        /// Iterations per kernel.
        #[arg(long, default_value_t = 20_000)]
        iters: u64,
    },
}

fn build_config(common: &Common) -> Result<RunConfig, RuntimeError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            RuntimeError::Config(ConfigError::Invalid(format!(
                "cannot read config file {}: {e}",
                path.display()
            )))
        })?;
        cfg.apply_file(&text)?;
    }
    cfg.apply_env(std::env::vars())?;
    for pair in &common.sets {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            RuntimeError::Config(ConfigError::Invalid(format!(
                "--set expects KEY=VALUE, got \"{pair}\""
            )))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(mode) = &common.mode {
        cfg.set("scheduler.mode", mode)?;
    }
    if let Some(model) = &common.current_model {
        cfg.set("cam.current_mode", model)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: &Cli) -> Result<(), RuntimeError> {
    let cfg = build_config(&cli.common)?;
    match &cli.command {
        Command::Gen => {
            let art = run_gen(&cfg, &cli.common.out)?;
            println!(
                "wrote {} spectra to {} (labels: {})",
                art.spectra,
                art.mgf_path.display(),
                art.labels_path.display()
            );
        }
        Command::Setup { input, dry_run } => match (dry_run, input) {
            (Some(rows), _) => {
                let (_, report) = dry_run_report(&cfg, *rows, false);
                println!("{}", pretty(&report));
            }
            (None, Some(input)) => {
                let art = run_setup(&cfg, input, &cli.common.out)?;
                println!(
                    "snapshot {}: {} spectra -> {} clusters in {} buckets ({} rejects)",
                    art.snapshot_dir.display(),
                    art.catalog.totals.spectra,
                    art.catalog.totals.clusters,
                    art.catalog.buckets.len(),
                    art.catalog.totals.rejects
                );
            }
            (None, None) => {
                return Err(RuntimeError::Config(ConfigError::Invalid(
                    "setup needs an input MGF file (or --dry-run ROWS)".into(),
                )))
            }
        },
        Command::Run {
            snapshot,
            queries,
            dry_run,
        } => match (dry_run, snapshot, queries) {
            (Some(rows), _, _) => {
                let (_, report) = dry_run_report(&cfg, *rows, true);
                println!("{}", pretty(&report));
            }
            (None, Some(snapshot), Some(queries)) => {
                let art = run_phase3(&cfg, snapshot, queries, &cli.common.out)?;
                println!(
                    "run {}: {} queries -> {} matches, {} new clusters over {} cycles",
                    art.run_dir.display(),
                    art.stats.dispatched,
                    art.stats.matches,
                    art.stats.new_clusters,
                    art.stats.cycles
                );
            }
            _ => {
                return Err(RuntimeError::Config(ConfigError::Invalid(
                    "run needs SNAPSHOT and QUERIES (or --dry-run ROWS)".into(),
                )))
            }
        },
        Command::Report { run_dir, json, emit } => {
            let art = run_report(run_dir)?;
            if *json {
                println!("{}", pretty(&art.summary));
            } else {
                print!("{}", art.table);
            }
            if *emit {
                std::fs::create_dir_all(&cli.common.out).map_err(|source| RuntimeError::Io {
                    path: cli.common.out.clone(),
                    source,
                })?;
                let summary_path = cli.common.out.join("summary.json");
                std::fs::write(&summary_path, pretty(&art.summary) + "\n").map_err(|source| {
                    RuntimeError::Io {
                        path: summary_path.clone(),
                        source,
                    }
                })?;
                let csv_path = cli.common.out.join("buckets.csv");
                std::fs::write(&csv_path, &art.csv).map_err(|source| RuntimeError::Io {
                    path: csv_path.clone(),
                    source,
                })?;
                eprintln!(
                    "wrote {} and {}",
                    summary_path.display(),
                    csv_path.display()
                );
            }
        }
        Command::Bench { iters } => bench(&cfg, *iters)?,
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Wall-clock microbenchmarks of the kernels the simulator spends its
/// time in, plus the deterministic modeled-energy anchors.
fn bench(cfg: &RunConfig, iters: u64) -> Result<(), RuntimeError> {
    let dim = cfg.dim;
    let a = Hypervector::random(dim, cfg.seed, 1).expect("validated dim");
    let b = Hypervector::random(dim, cfg.seed, 2).expect("validated dim");

    let t = Instant::now();
    let mut acc = 0u64;
    for _ in 0..iters {
        acc = acc.wrapping_add(u64::from(hamming(&a, &b).expect("same dim")));
    }
    let hamming_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    for _ in 0..iters {
        acc = acc.wrapping_add(u64::from(bind(&a, &b).expect("same dim").bit(0)));
    }
    let bind_s = t.elapsed().as_secs_f64();

    let bundle_iters = (iters / 100).max(1);
    let t = Instant::now();
    for _ in 0..bundle_iters {
        let mut bundle = Accumulator::new(dim).expect("valid dim");
        for i in 0..64 {
            bundle
                .add(&Hypervector::random(dim, cfg.seed, 10 + i).expect("validated dim"))
                .expect("same dim");
        }
        acc = acc.wrapping_add(u64::from(bundle.bundle(&a).expect("same dim").bit(1)));
    }
    let bundle_s = t.elapsed().as_secs_f64();

    let mut synth = cfg.synthetic_config();
    synth.n_peptides = 1;
    synth.spectra_per_peptide = 1;
    let (spectra, _) = preprocess_all(generate_synthetic(&synth)?, &cfg.preprocess_config());
    let spectrum = spectra.into_iter().next().ok_or_else(|| {
        RuntimeError::Input("benchmark spectrum rejected by preprocessing".into())
    })?;
    let encoder = Encoder::new(cfg.encoder_config())?;
    let encode_iters = (iters / 20).max(1);
    let t = Instant::now();
    for _ in 0..encode_iters {
        acc = acc.wrapping_add(u64::from(encoder.encode(&spectrum).expect("valid").bit(2)));
    }
    let encode_s = t.elapsed().as_secs_f64();

    println!("kernel        iters      ns/op      ops/s");
    for (name, n, secs) in [
        ("hamming", iters, hamming_s),
        ("bind", iters, bind_s),
        ("bundle64", bundle_iters, bundle_s),
        ("encode", encode_iters, encode_s),
    ] {
        println!(
            "{name:<12} {n:>8} {:>10.1} {:>10.0}",
            secs * 1e9 / n as f64,
            n as f64 / secs
        );
    }

    // Deterministic modeled anchors, independent of host speed.
    let mut ledger = EnergyLatencyLedger::new();
    ledger.dry_run_search(882, dim, &cfg.device);
    println!(
        "modeled search, 882 rows:      {:.4} nJ",
        ledger.total_fj() / 1e6
    );
    let mut ledger = EnergyLatencyLedger::new();
    ledger.dry_run_write(2_000_000, dim, &cfg.device);
    println!(
        "modeled write, 2,000,000 rows: {:.4} mJ",
        ledger.total_fj() / 1e12
    );
    let _ = acc; // keep the kernels observable
    Ok(())
}
