//! On-disk persistence: little-endian binary dumps for codebooks and
//! bucket consensus rows, a JSON catalog tying a snapshot together, and
//! append-only `v1, v2, …` version directories.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterRecord, ThresholdModel};
use crate::config::RunConfig;
use crate::hdc::{Accumulator, Codebook, CodebookKind, HdcError, Hypervector};

const CODEBOOK_MAGIC: &[u8; 4] = b"HVCB";
const ROWS_MAGIC: &[u8; 4] = b"HVRS";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a {expected} file (bad magic)")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: unsupported format version {got}")]
    UnsupportedVersion { path: PathBuf, got: u16 },
    #[error("{path}: corrupt snapshot: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One bucket's line in the snapshot catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketEntry {
    pub bucket: u64,
    pub clusters: usize,
    pub spectra: usize,
    /// Precursor m/z extremes observed in this bucket during setup.
    pub mz_min: f64,
    pub mz_max: f64,
    /// Path of the consensus-row dump, relative to the snapshot dir.
    pub rows_file: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotTotals {
    pub spectra: usize,
    pub clusters: usize,
    pub rejects: usize,
}

/// The JSON catalog at the root of a snapshot version directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCatalog {
    pub format_version: u16,
    pub dim: usize,
    pub config: RunConfig,
    pub config_hash: String,
    pub thresholds: ThresholdModel,
    pub buckets: Vec<BucketEntry>,
    pub totals: SnapshotTotals,
}

pub fn bucket_rows_filename(bucket: u64) -> String {
    format!("rows/b{bucket:020}.rows")
}

/// Create and return the next `vN` directory under `root` (v1 if none).
pub fn next_version_dir(root: &Path) -> Result<PathBuf, SnapshotError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let next = scan_versions(root)?.last().map_or(1, |&(n, _)| n + 1);
    let dir = root.join(format!("v{next}"));
    fs::create_dir(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

/// The highest existing `vN` directory under `root`, if any.
pub fn latest_version_dir(root: &Path) -> Result<Option<PathBuf>, SnapshotError> {
    if !root.exists() {
        return Ok(None);
    }
    Ok(scan_versions(root)?.last().map(|(_, p)| p.clone()))
}

fn scan_versions(root: &Path) -> Result<Vec<(u64, PathBuf)>, SnapshotError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name();
        let Some(rest) = name.to_string_lossy().strip_prefix('v').map(str::to_string) else {
            continue;
        };
        if let Ok(n) = rest.parse::<u64>() {
            found.push((n, entry.path()));
        }
    }
    found.sort();
    Ok(found)
}

pub fn write_codebook(path: &Path, cb: &Codebook) -> Result<(), SnapshotError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut buf = Vec::with_capacity(24 + cb.len() * cb.dim() / 8);
    buf.extend_from_slice(CODEBOOK_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(match cb.kind {
        CodebookKind::Id => 0,
        CodebookKind::Level => 1,
    });
    buf.push(0); // reserved
    buf.extend_from_slice(&(cb.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(cb.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cb.seed.to_le_bytes());
    for entry in cb.entries() {
        buf.extend_from_slice(&entry.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_codebook(path: &Path) -> Result<Codebook, SnapshotError> {
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut header = [0u8; 24];
    file.read_exact(&mut header).map_err(io_err(path))?;
    if &header[0..4] != CODEBOOK_MAGIC {
        return Err(SnapshotError::BadMagic {
            path: path.to_path_buf(),
            expected: "codebook",
        });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(SnapshotError::UnsupportedVersion {
            path: path.to_path_buf(),
            got: version,
        });
    }
    let kind = match header[6] {
        0 => CodebookKind::Id,
        1 => CodebookKind::Level,
        k => {
            return Err(SnapshotError::Corrupt {
                path: path.to_path_buf(),
                detail: format!("unknown codebook kind {k}"),
            })
        }
    };
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(header[16..24].try_into().unwrap());
    if dim == 0 || !dim.is_multiple_of(64) {
        return Err(SnapshotError::Corrupt {
            path: path.to_path_buf(),
            detail: format!("dimension {dim} is not a positive multiple of 64"),
        });
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(io_err(path))?;
    let row_bytes = dim / 8;
    if payload.len() != n * row_bytes {
        return Err(SnapshotError::Corrupt {
            path: path.to_path_buf(),
            detail: format!(
                "expected {} payload bytes for {n} entries, found {}",
                n * row_bytes,
                payload.len()
            ),
        });
    }
    let mut entries = Vec::with_capacity(n);
    for chunk in payload.chunks_exact(row_bytes) {
        entries.push(Hypervector::from_le_bytes(dim, chunk)?);
    }
    Ok(Codebook::from_entries(kind, seed, entries)?)
}

/// Dump one bucket's cluster records: per row the cluster id, the member
/// count, and the packed consensus. Accumulators are not persisted —
/// loading rebuilds them consensus-weighted (see [`read_bucket_records`]).
pub fn write_bucket_records(
    path: &Path,
    bucket: u64,
    dim: usize,
    records: &[ClusterRecord],
) -> Result<(), SnapshotError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut buf = Vec::with_capacity(24 + records.len() * (12 + dim / 8));
    buf.extend_from_slice(ROWS_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&[0, 0]); // reserved
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    buf.extend_from_slice(&bucket.to_le_bytes());
    for r in records {
        buf.extend_from_slice(&r.cluster_id.to_le_bytes());
        buf.extend_from_slice(&r.members.to_le_bytes());
        buf.extend_from_slice(&r.consensus.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Read a bucket dump back into live cluster records. The accumulator of
/// each record is reconstructed as `members` copies of the consensus, so
/// rebundling reproduces the stored consensus exactly and later updates
/// move it with the stored weight.
pub fn read_bucket_records(path: &Path) -> Result<(u64, Vec<ClusterRecord>), SnapshotError> {
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut header = [0u8; 24];
    file.read_exact(&mut header).map_err(io_err(path))?;
    if &header[0..4] != ROWS_MAGIC {
        return Err(SnapshotError::BadMagic {
            path: path.to_path_buf(),
            expected: "bucket rows",
        });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(SnapshotError::UnsupportedVersion {
            path: path.to_path_buf(),
            got: version,
        });
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let bucket = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(io_err(path))?;
    let rec_bytes = 12 + dim / 8;
    if payload.len() != n * rec_bytes {
        return Err(SnapshotError::Corrupt {
            path: path.to_path_buf(),
            detail: format!(
                "expected {} payload bytes for {n} rows, found {}",
                n * rec_bytes,
                payload.len()
            ),
        });
    }
    let mut records = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(rec_bytes).enumerate() {
        let cluster_id = u64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let members = u32::from_le_bytes(chunk[8..12].try_into().unwrap());
        let consensus = Hypervector::from_le_bytes(dim, &chunk[12..])?;
        if cluster_id != i as u64 {
            return Err(SnapshotError::Corrupt {
                path: path.to_path_buf(),
                detail: format!("row {i} carries cluster id {cluster_id}"),
            });
        }
        records.push(ClusterRecord {
            cluster_id,
            bucket_id: bucket,
            accumulator: Accumulator::weighted(&consensus, members.max(1)),
            consensus,
            members,
            pending_updates: 0,
        });
    }
    Ok((bucket, records))
}

pub fn write_catalog(dir: &Path, catalog: &SnapshotCatalog) -> Result<(), SnapshotError> {
    let path = dir.join("catalog.json");
    let mut file = fs::File::create(&path).map_err(io_err(&path))?;
    let json = serde_json::to_string_pretty(catalog).map_err(|source| SnapshotError::Json {
        path: path.clone(),
        source,
    })?;
    file.write_all(json.as_bytes()).map_err(io_err(&path))?;
    file.write_all(b"\n").map_err(io_err(&path))
}

pub fn read_catalog(dir: &Path) -> Result<SnapshotCatalog, SnapshotError> {
    let path = dir.join("catalog.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| SnapshotError::Json { path, source })
}
