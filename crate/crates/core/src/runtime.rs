//! End-to-end drivers shared by the command-line tool and the
//! integration suite: synthetic data generation, Phase-I/II setup into a
//! versioned snapshot, the Phase-III query loop with full trace capture,
//! and report aggregation over the emitted logs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{ledger_report, CamError, EnergyLatencyLedger};
use crate::cluster::{
    compare_speedup, metrics, Assignment, BucketLoad, BucketStats, ClusterEngine, ClusterError,
    Outcome, QualityMetrics, SpeedupWorkload,
};
use crate::config::{ConfigError, RunConfig};
use crate::encoder::{bucket_of, BucketParams, Encoder, EncoderError};
use crate::hdc::{HdcError, Hypervector};
use crate::scheduler::{CycleReport, ExecMode, QueryRecord, Scheduler, SchedulerError};
use crate::snapshot::{
    bucket_rows_filename, next_version_dir, read_bucket_records, read_catalog, read_codebook,
    write_bucket_records, write_catalog, write_codebook, BucketEntry, SnapshotCatalog,
    SnapshotError, SnapshotTotals,
};
use crate::spectra::{
    generate_synthetic, mgf::attach_labels, parse_mgf, read_labels, write_labels, write_mgf,
    SpectraError, Spectrum,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input error: {0}")]
    Input(String),
    #[error("config/snapshot mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error(transparent)]
    Cam(#[from] CamError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

impl RuntimeError {
    /// Process exit code: 1 input error, 2 config error, 3 violated
    /// internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Input(_) | Self::Spectra(_) | Self::Snapshot(_) => 1,
            Self::Scheduler(SchedulerError::BucketTooLarge { .. }) => 1,
            Self::Config(_) | Self::Mismatch(_) | Self::Encoder(_) => 2,
            Self::Cam(CamError::BadParams(_)) => 2,
            Self::Scheduler(SchedulerError::BadConfig(_)) => 2,
            Self::Hdc(_) | Self::Cam(_) | Self::Cluster(_) | Self::Scheduler(_) => 3,
        }
    }
}

fn read_file(path: &Path) -> Result<String, RuntimeError> {
    fs::read_to_string(path).map_err(|source| RuntimeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), RuntimeError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| RuntimeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| RuntimeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RuntimeError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("log record serializes"));
        out.push('\n');
    }
    write_file(path, &out)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RuntimeError> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| {
            RuntimeError::Input(format!("{}:{}: corrupt record: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// `queries.mgf` → `queries.labels.tsv`.
pub fn labels_sidecar(path: &Path) -> PathBuf {
    path.with_extension("labels.tsv")
}

// ---------------------------------------------------------------------
// gen

#[derive(Debug)]
pub struct GenArtifacts {
    pub mgf_path: PathBuf,
    pub labels_path: PathBuf,
    pub spectra: usize,
}

/// Generate the synthetic corpus and its label sidecar.
pub fn run_gen(cfg: &RunConfig, out_dir: &Path) -> Result<GenArtifacts, RuntimeError> {
    cfg.validate()?;
    let spectra = generate_synthetic(&cfg.synthetic_config())?;
    let mgf_path = out_dir.join("synthetic.mgf");
    let labels_path = labels_sidecar(&mgf_path);
    write_file(&mgf_path, &write_mgf(&spectra))?;
    write_file(&labels_path, &write_labels(&spectra))?;
    Ok(GenArtifacts {
        mgf_path,
        labels_path,
        spectra: spectra.len(),
    })
}

// ---------------------------------------------------------------------
// shared encode pipeline

/// Preprocessed, encoded, bucketed spectra ready for clustering or
/// querying.
#[derive(Debug)]
pub struct EncodedSet {
    /// bucket → (spectrum id, hypervector) in input order.
    pub items: BTreeMap<u64, Vec<(String, Hypervector)>>,
    /// Original input order, for query admission.
    pub order: Vec<(String, u64, Hypervector)>,
    /// Observed precursor m/z extremes per bucket.
    pub mz_ranges: BTreeMap<u64, (f64, f64)>,
    pub labels: BTreeMap<String, String>,
    /// Human-readable reject lines (parse- and preprocess-level).
    pub rejects: Vec<String>,
}

/// Preprocess, encode, and bucket a parsed spectrum list.
pub fn encode_spectra(
    cfg: &RunConfig,
    spectra: Vec<Spectrum>,
    encoder: &Encoder,
) -> Result<EncodedSet, RuntimeError> {
    let (kept, dropped) = crate::spectra::preprocess_all(spectra, &cfg.preprocess_config());
    let mut set = EncodedSet {
        items: BTreeMap::new(),
        order: Vec::with_capacity(kept.len()),
        mz_ranges: BTreeMap::new(),
        labels: BTreeMap::new(),
        rejects: dropped.iter().map(|e| e.to_string()).collect(),
    };
    let bucket_params = BucketParams::default();
    for s in &kept {
        let hv = encoder.encode(s)?;
        let bucket = bucket_of(s, &bucket_params)?;
        set.items
            .entry(bucket)
            .or_default()
            .push((s.id.clone(), hv.clone()));
        set.order.push((s.id.clone(), bucket, hv));
        let range = set
            .mz_ranges
            .entry(bucket)
            .or_insert((s.precursor_mz, s.precursor_mz));
        range.0 = range.0.min(s.precursor_mz);
        range.1 = range.1.max(s.precursor_mz);
        if let Some(label) = &s.label {
            set.labels.insert(s.id.clone(), label.clone());
        }
    }
    Ok(set)
}

fn parse_input_mgf(path: &Path) -> Result<(Vec<Spectrum>, Vec<String>), RuntimeError> {
    let text = read_file(path)?;
    let parsed = parse_mgf(&text);
    if parsed.spectra.is_empty() {
        return Err(RuntimeError::Input(format!(
            "no spectra parsed from {}",
            path.display()
        )));
    }
    let mut spectra = parsed.spectra;
    let sidecar = labels_sidecar(path);
    if sidecar.exists() {
        attach_labels(&mut spectra, &read_labels(&read_file(&sidecar)?));
    }
    let rejects = parsed.rejects.iter().map(|r| r.to_string()).collect();
    Ok((spectra, rejects))
}

// ---------------------------------------------------------------------
// setup (Phase I + II)

#[derive(Debug)]
pub struct SetupArtifacts {
    pub snapshot_dir: PathBuf,
    pub catalog: SnapshotCatalog,
    pub ledger: EnergyLatencyLedger,
    pub phase1_assignments: Vec<Assignment>,
    pub rejects: Vec<String>,
}

/// Phase-I initial clustering plus Phase-II CAM image preparation,
/// persisted as the next snapshot version under `out_root`.
pub fn run_setup(
    cfg: &RunConfig,
    input: &Path,
    out_root: &Path,
) -> Result<SetupArtifacts, RuntimeError> {
    cfg.validate()?;
    let (spectra, mut rejects) = parse_input_mgf(input)?;
    let encoder = Encoder::new(cfg.encoder_config())?;
    let set = encode_spectra(cfg, spectra, &encoder)?;
    rejects.extend(set.rejects.iter().cloned());
    if set.order.is_empty() {
        return Err(RuntimeError::Input(
            "every input spectrum was rejected during preprocessing".into(),
        ));
    }

    let mut engine = ClusterEngine::new(cfg.dim, encoder.tie().clone(), cfg.cluster.rewrite_period);
    let mut phase1_assignments = Vec::with_capacity(set.order.len());
    for (bucket, items) in &set.items {
        phase1_assignments.extend(engine.run_phase_one(*bucket, items, cfg.cluster.theta)?);
    }
    engine.fit_thresholds(cfg.cluster.threshold_percentile, cfg.cluster.threshold_beta)?;

    // Phase II: charge the one-time write of every consensus row into CAM
    let buckets: Vec<u64> = engine.bucket_ids().collect();
    let total_clusters: usize = buckets.iter().map(|b| engine.records(*b).len()).sum();
    let mut ledger = EnergyLatencyLedger::new();
    ledger.dry_run_write(total_clusters as u64, cfg.dim, &cfg.device);

    let snapshot_dir = next_version_dir(out_root)?;
    write_codebook(&snapshot_dir.join("id.cb"), encoder.id_codebook())?;
    write_codebook(&snapshot_dir.join("level.cb"), encoder.level_codebook())?;
    let mut bucket_entries = Vec::with_capacity(buckets.len());
    for bucket in buckets {
        let records = engine.records(bucket);
        let rows_file = bucket_rows_filename(bucket);
        write_bucket_records(&snapshot_dir.join(&rows_file), bucket, cfg.dim, records)?;
        let (mz_min, mz_max) = set.mz_ranges[&bucket];
        bucket_entries.push(BucketEntry {
            bucket,
            clusters: records.len(),
            spectra: set.items[&bucket].len(),
            mz_min,
            mz_max,
            rows_file,
        });
    }
    let catalog = SnapshotCatalog {
        format_version: 1,
        dim: cfg.dim,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        thresholds: engine
            .thresholds()
            .cloned()
            .expect("thresholds fitted above"),
        buckets: bucket_entries,
        totals: SnapshotTotals {
            spectra: set.order.len(),
            clusters: total_clusters,
            rejects: rejects.len(),
        },
    };
    write_catalog(&snapshot_dir, &catalog)?;
    let report = ledger_report(&ledger, &cfg.device);
    write_file(
        &snapshot_dir.join("ledger.json"),
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    write_jsonl(&snapshot_dir.join("phase1_assignments.jsonl"), &phase1_assignments)?;
    if !set.labels.is_empty() {
        let lines: String = set
            .labels
            .iter()
            .map(|(id, l)| format!("{id}\t{l}\n"))
            .collect();
        write_file(&snapshot_dir.join("labels.tsv"), &lines)?;
    }
    if !rejects.is_empty() {
        write_file(&snapshot_dir.join("rejects.log"), &(rejects.join("\n") + "\n"))?;
    }
    Ok(SetupArtifacts {
        snapshot_dir,
        catalog,
        ledger,
        phase1_assignments,
        rejects,
    })
}

/// Catalog-only energy accounting: the ledger figures of writing (or
/// searching) `rows` consensus rows without materializing hypervectors.
pub fn dry_run_report(
    cfg: &RunConfig,
    rows: u64,
    search: bool,
) -> (EnergyLatencyLedger, serde_json::Value) {
    let mut ledger = EnergyLatencyLedger::new();
    if search {
        ledger.dry_run_search(rows, cfg.dim, &cfg.device);
    } else {
        ledger.dry_run_write(rows, cfg.dim, &cfg.device);
    }
    let report = ledger_report(&ledger, &cfg.device);
    (ledger, report)
}

// ---------------------------------------------------------------------
// run (Phase III)

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub cycles: u64,
    pub admitted: u64,
    pub dispatched: u64,
    pub matches: u64,
    pub new_clusters: u64,
    pub mode: ExecMode,
    /// Elapsed dispatch time under the configured mode.
    pub elapsed_search_ns: f64,
    /// The same dispatch stream costed serially (sum over dispatches).
    pub elapsed_search_serial_ns: f64,
    /// …and fully bucket-parallel (sum over cycles of the max dispatch).
    pub elapsed_search_parallel_ns: f64,
    pub elapsed_residency_ns: f64,
    /// Mean dispatches per non-idle cycle.
    pub mean_concurrency: f64,
}

/// Provenance and model inputs persisted beside the run logs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub config_hash: String,
    pub snapshot_dir: String,
    pub queries: String,
    pub workload: SpeedupWorkload,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub assignments: Vec<Assignment>,
    pub cycles: Vec<CycleReport>,
    pub stats: RunStats,
    pub ledger: EnergyLatencyLedger,
    /// Quality over the snapshot's Phase-I population plus this run's
    /// queries; present when every involved spectrum carries a label.
    pub metrics: Option<QualityMetrics>,
}

/// Phase III: load the snapshot, encode and admit the query stream, and
/// dispatch to completion, logging assignments, the cycle trace, the
/// ledger, and quality metrics into the next version dir under
/// `out_root`.
pub fn run_phase3(
    cfg: &RunConfig,
    snapshot_dir: &Path,
    queries_path: &Path,
    out_root: &Path,
) -> Result<RunArtifacts, RuntimeError> {
    cfg.validate()?;
    let catalog = read_catalog(snapshot_dir)?;
    if catalog.dim != cfg.dim {
        return Err(RuntimeError::Mismatch(format!(
            "snapshot dimension {} differs from configured dimension {}",
            catalog.dim, cfg.dim
        )));
    }
    let id_cb = read_codebook(&snapshot_dir.join("id.cb"))?;
    let level_cb = read_codebook(&snapshot_dir.join("level.cb"))?;
    // the snapshot's encoder settings are authoritative: queries must be
    // encoded exactly as the database was
    let encoder = Encoder::from_codebooks(catalog.config.encoder_config(), id_cb, level_cb)?;

    let mut engine = ClusterEngine::new(cfg.dim, encoder.tie().clone(), cfg.cluster.rewrite_period);
    engine.set_thresholds(catalog.thresholds.clone());
    let mut sched = Scheduler::new(cfg.scheduler_config(), cfg.dim)?;
    let mut initial_rows: BTreeMap<u64, usize> = BTreeMap::new();
    for entry in &catalog.buckets {
        let (bucket, records) = read_bucket_records(&snapshot_dir.join(&entry.rows_file))?;
        if bucket != entry.bucket {
            return Err(RuntimeError::Mismatch(format!(
                "rows file {} holds bucket {bucket}, catalog says {}",
                entry.rows_file, entry.bucket
            )));
        }
        initial_rows.insert(bucket, records.len());
        sched.install_bucket(
            bucket,
            records
                .iter()
                .map(|r| (r.cluster_id, r.consensus.clone()))
                .collect(),
        );
        engine.install_bucket(bucket, records, BucketStats::default());
    }

    let (spectra, _query_rejects) = parse_input_mgf(queries_path)?;
    let set = encode_spectra(cfg, spectra, &encoder)?;
    if set.order.is_empty() {
        return Err(RuntimeError::Input(
            "every query spectrum was rejected during preprocessing".into(),
        ));
    }

    let model = cfg.current_model()?;
    let mut ledger = EnergyLatencyLedger::new();
    sched.admit(
        set.order
            .iter()
            .map(|(id, bucket, hv)| QueryRecord::new(id.clone(), *bucket, hv.clone())),
    );
    let admitted = sched.admitted();
    let cycles = sched.run_to_completion(&mut engine, &model, &cfg.device, &mut ledger)?;

    let assignments: Vec<Assignment> = cycles
        .iter()
        .flat_map(|c| c.dispatched.iter().map(|d| d.assignment.clone()))
        .collect();
    let matches = assignments
        .iter()
        .filter(|a| a.outcome == Outcome::Match)
        .count() as u64;
    let serial_ns: f64 = cycles
        .iter()
        .flat_map(|c| c.dispatched.iter().map(|d| d.latency_ns))
        .sum();
    let parallel_ns: f64 = cycles
        .iter()
        .map(|c| {
            c.dispatched
                .iter()
                .map(|d| d.latency_ns)
                .fold(0.0, f64::max)
        })
        .sum();
    let busy_cycles = cycles.iter().filter(|c| !c.dispatched.is_empty()).count();
    let stats = RunStats {
        cycles: cycles.len() as u64,
        admitted,
        dispatched: assignments.len() as u64,
        matches,
        new_clusters: assignments.len() as u64 - matches,
        mode: cfg.scheduler.mode,
        elapsed_search_ns: cycles.iter().map(|c| c.search_elapsed_ns).sum(),
        elapsed_search_serial_ns: serial_ns,
        elapsed_search_parallel_ns: parallel_ns,
        elapsed_residency_ns: cycles.iter().map(|c| c.residency_elapsed_ns).sum(),
        mean_concurrency: if busy_cycles == 0 {
            0.0
        } else {
            assignments.len() as f64 / busy_cycles as f64
        },
    };

    // per-bucket workload for the expansion-vs-recluster cost model
    let mut per_bucket: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for a in &assignments {
        let slot = per_bucket.entry(a.bucket).or_default();
        match a.outcome {
            Outcome::Match => slot.0 += 1,
            Outcome::NewCluster => slot.1 += 1,
        }
    }
    let workload = SpeedupWorkload {
        buckets: per_bucket
            .iter()
            .map(|(b, &(m, o))| BucketLoad {
                initial_rows: initial_rows.get(b).copied().unwrap_or(0),
                matches: m,
                outliers: o,
            })
            .collect(),
    };

    // quality over Phase-I members plus queries, when labels cover both
    let phase1_path = snapshot_dir.join("phase1_assignments.jsonl");
    let mut all_assignments: Vec<Assignment> = if phase1_path.exists() {
        read_jsonl(&phase1_path)?
    } else {
        Vec::new()
    };
    all_assignments.extend(assignments.iter().cloned());
    let mut labels = set.labels.clone();
    let snapshot_labels = snapshot_dir.join("labels.tsv");
    if snapshot_labels.exists() {
        labels.extend(read_labels(&read_file(&snapshot_labels)?));
    }
    let quality = if all_assignments
        .iter()
        .all(|a| labels.contains_key(&a.spectrum_id))
    {
        Some(metrics(&all_assignments, &labels)?)
    } else {
        None
    };

    let run_dir = next_version_dir(out_root)?;
    write_jsonl(&run_dir.join("assignments.jsonl"), &assignments)?;
    write_jsonl(&run_dir.join("trace.jsonl"), &cycles)?;
    write_file(
        &run_dir.join("ledger.json"),
        &(serde_json::to_string_pretty(&ledger_report(&ledger, &cfg.device))
            .expect("report serializes")
            + "\n"),
    )?;
    write_file(
        &run_dir.join("stats.json"),
        &(serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n"),
    )?;
    if let Some(q) = &quality {
        write_file(
            &run_dir.join("metrics.json"),
            &(serde_json::to_string_pretty(q).expect("metrics serialize") + "\n"),
        )?;
    }
    let meta = RunMeta {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        snapshot_dir: snapshot_dir.display().to_string(),
        queries: queries_path.display().to_string(),
        workload,
    };
    write_file(
        &run_dir.join("meta.json"),
        &(serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n"),
    )?;

    Ok(RunArtifacts {
        run_dir,
        assignments,
        cycles,
        stats,
        ledger,
        metrics: quality,
    })
}

// ---------------------------------------------------------------------
// report

#[derive(Debug)]
pub struct ReportArtifacts {
    pub summary: serde_json::Value,
    pub table: String,
    pub csv: String,
}

/// Aggregate a run directory into human- and machine-readable summaries.
/// Totals are recomputed from the raw assignment log, not copied from
/// stats, so the two can be cross-checked.
pub fn run_report(run_dir: &Path) -> Result<ReportArtifacts, RuntimeError> {
    let assignments: Vec<Assignment> = read_jsonl(&run_dir.join("assignments.jsonl"))?;
    let stats: RunStats = serde_json::from_str(&read_file(&run_dir.join("stats.json"))?)
        .map_err(|e| RuntimeError::Input(format!("stats.json: {e}")))?;
    let ledger_json: serde_json::Value =
        serde_json::from_str(&read_file(&run_dir.join("ledger.json"))?)
            .map_err(|e| RuntimeError::Input(format!("ledger.json: {e}")))?;
    let meta: RunMeta = serde_json::from_str(&read_file(&run_dir.join("meta.json"))?)
        .map_err(|e| RuntimeError::Input(format!("meta.json: {e}")))?;
    let metrics_path = run_dir.join("metrics.json");
    let quality: Option<QualityMetrics> = if metrics_path.exists() {
        Some(
            serde_json::from_str(&read_file(&metrics_path)?)
                .map_err(|e| RuntimeError::Input(format!("metrics.json: {e}")))?,
        )
    } else {
        None
    };

    let mut per_bucket: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for a in &assignments {
        let slot = per_bucket.entry(a.bucket).or_default();
        match a.outcome {
            Outcome::Match => slot.0 += 1,
            Outcome::NewCluster => slot.1 += 1,
        }
    }
    let matches: u64 = per_bucket.values().map(|v| v.0).sum();
    let new_clusters: u64 = per_bucket.values().map(|v| v.1).sum();

    let speedup = compare_speedup(&meta.workload, &meta.config.device);
    let parallel_speedup = if stats.elapsed_search_parallel_ns > 0.0 {
        stats.elapsed_search_serial_ns / stats.elapsed_search_parallel_ns
    } else {
        1.0
    };

    let summary = serde_json::json!({
        "config_hash": meta.config_hash,
        "totals": {
            "queries": assignments.len(),
            "matches": matches,
            "new_clusters": new_clusters,
            "buckets_touched": per_bucket.len(),
        },
        "quality": quality,
        "energy": ledger_json,
        "latency": {
            "mode": stats.mode,
            "elapsed_search_ns": stats.elapsed_search_ns,
            "elapsed_search_serial_ns": stats.elapsed_search_serial_ns,
            "elapsed_search_parallel_ns": stats.elapsed_search_parallel_ns,
            "elapsed_residency_ns": stats.elapsed_residency_ns,
            "cycles": stats.cycles,
            "mean_concurrency": stats.mean_concurrency,
        },
        "speedup": {
            "expansion_ns": speedup.expansion_ns,
            "full_recluster_ns": speedup.full_recluster_ns,
            "full_over_expansion": speedup.ratio,
            "parallel_over_serial": parallel_speedup,
        },
    });

    let mut table = String::new();
    table.push_str(&format!(
        "queries      {:>12}\nmatches      {:>12}\nnew clusters {:>12}\nbuckets      {:>12}\n",
        assignments.len(),
        matches,
        new_clusters,
        per_bucket.len()
    ));
    if let Some(q) = &quality {
        table.push_str(&format!(
            "clustered spectra ratio   {:>8.4}\nincorrect clustering ratio{:>8.4}\n",
            q.clustered_spectra_ratio, q.incorrect_clustering_ratio
        ));
    }
    table.push_str(&format!(
        "search elapsed (ns)  {:>16.3}\nresidency elapsed (ns){:>15.3}\nmodeled full/expansion speedup {:>8.2}x\nmodeled parallel/serial speedup{:>8.2}x\n",
        stats.elapsed_search_ns,
        stats.elapsed_residency_ns,
        speedup.ratio,
        parallel_speedup
    ));

    let mut csv = String::from("bucket,queries,matches,new_clusters\n");
    for (bucket, (m, o)) in &per_bucket {
        csv.push_str(&format!("{bucket},{},{m},{o}\n", m + o));
    }

    Ok(ReportArtifacts {
        summary,
        table,
        csv,
    })
}
