//! Core library for an energy-accounted simulator of in-memory
//! mass-spectrum search: hypervector algebra, spectrum ingestion and
//! preprocessing, spectrum-to-hypervector encoding, a content-addressable
//! memory device model with an energy/latency ledger, a bucket residency
//! scheduler, and an incremental clustering engine.

pub mod cam;
pub mod cluster;
pub mod config;
pub mod encoder;
pub mod hdc;
pub mod runtime;
pub mod scheduler;
pub mod snapshot;
pub mod spectra;

pub use cam::{
    lta_select, CamBank, CamError, CurrentMode, CurrentModel, DeviceParams, EnergyLatencyLedger,
    RowMatch,
};
pub use cluster::{
    compare_speedup, fit_threshold, initial_cluster, metrics, overlap_report, Assignment,
    BucketLoad, BucketStats, ClusterEngine, ClusterError, ClusterRecord, Outcome, OverlapReport,
    PhaseOneResult, QualityMetrics, SpeedupReport, SpeedupWorkload, ThresholdModel,
};
pub use config::{ConfigError, RunConfig};
pub use runtime::{
    run_gen, run_phase3, run_report, run_setup, GenArtifacts, ReportArtifacts, RunArtifacts,
    RunStats, RuntimeError, SetupArtifacts,
};
pub use snapshot::{SnapshotCatalog, SnapshotError};
pub use scheduler::{
    CycleReport, DispatchRecord, ExecMode, QueryRecord, Scheduler, SchedulerConfig,
    SchedulerError,
};
pub use encoder::{bucket_of, BucketParams, Encoder, EncoderConfig, EncoderError};
pub use hdc::{bind, hamming, Accumulator, Codebook, CodebookKind, HdcError, Hypervector};
pub use spectra::{Peak, PreprocessConfig, SpectraError, Spectrum, SyntheticConfig};
