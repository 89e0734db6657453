//! Spectrum ingestion: domain types, preprocessing, MGF text I/O, and a
//! labeled synthetic-spectrum generator for ground-truth quality checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod mgf;
pub mod synthetic;

pub use mgf::{parse_mgf, read_labels, write_labels, write_mgf, MgfReject, ParsedMgf};
pub use synthetic::{generate_synthetic, SyntheticConfig};

#[derive(Debug, Error, PartialEq)]
pub enum SpectraError {
    #[error("spectrum {id}: {surviving} peaks survive preprocessing, need at least {min_peaks}")]
    TooFewPeaks {
        id: String,
        surviving: usize,
        min_peaks: usize,
    },
    #[error("spectrum {id}: all peak intensities are zero")]
    NoIntensity { id: String },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// One centroided peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub mz: f64,
    pub intensity: f64,
}

/// A mass spectrum with its precursor coordinates and an optional
/// ground-truth label (synthetic peptide index or external annotation).
///
/// `preprocessed` marks spectra already passed through [`preprocess`];
/// the transform is destructive (peak filtering and intensity rescaling),
/// so the flag is what makes preprocessing idempotent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub id: String,
    pub precursor_mz: f64,
    /// Precursor charge, 1..=8.
    pub charge: u8,
    pub peaks: Vec<Peak>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    #[serde(default)]
    pub preprocessed: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Retained m/z window `[mz_min, mz_max)`.
    pub mz_min: f64,
    pub mz_max: f64,
    /// Keep at most this many peaks, largest intensities first.
    pub top_n: usize,
    /// Reject spectra with fewer surviving peaks.
    pub min_peaks: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            mz_min: 200.0,
            mz_max: 2000.0,
            top_n: 50,
            min_peaks: 5,
        }
    }
}

/// Filter to the configured m/z window, keep the `top_n` largest
/// intensities, replace intensities by their square roots scaled to unit
/// maximum, and re-sort by m/z. Peaks sharing an identical m/z collapse to
/// the strongest one so the output is strictly ascending.
///
/// Already-preprocessed spectra pass through unchanged.
pub fn preprocess(s: Spectrum, cfg: &PreprocessConfig) -> Result<Spectrum, SpectraError> {
    if s.preprocessed {
        return Ok(s);
    }
    let mut kept: Vec<Peak> = s
        .peaks
        .iter()
        .copied()
        .filter(|p| p.mz >= cfg.mz_min && p.mz < cfg.mz_max)
        .collect();

    // Collapse duplicate m/z positions (keep the strongest) so the sorted
    // output is strictly, not merely weakly, ascending.
    kept.sort_by(|a, b| {
        a.mz.total_cmp(&b.mz)
            .then(b.intensity.total_cmp(&a.intensity))
    });
    kept.dedup_by(|next, first| next.mz == first.mz);

    // Top-N by intensity; ties resolved toward lower m/z so the survivor
    // set is deterministic.
    kept.sort_by(|a, b| {
        b.intensity
            .total_cmp(&a.intensity)
            .then(a.mz.total_cmp(&b.mz))
    });
    kept.truncate(cfg.top_n);

    if kept.len() < cfg.min_peaks {
        return Err(SpectraError::TooFewPeaks {
            id: s.id,
            surviving: kept.len(),
            min_peaks: cfg.min_peaks,
        });
    }

    let max = kept
        .iter()
        .map(|p| p.intensity)
        .fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(SpectraError::NoIntensity { id: s.id });
    }
    let scale = max.sqrt();
    for p in &mut kept {
        p.intensity = p.intensity.sqrt() / scale;
    }
    kept.sort_by(|a, b| a.mz.total_cmp(&b.mz));

    Ok(Spectrum {
        peaks: kept,
        preprocessed: true,
        ..s
    })
}

/// Apply [`preprocess`] to a batch, splitting survivors from rejects.
/// Rejects are returned, never silently dropped.
pub fn preprocess_all(
    spectra: Vec<Spectrum>,
    cfg: &PreprocessConfig,
) -> (Vec<Spectrum>, Vec<SpectraError>) {
    let mut kept = Vec::with_capacity(spectra.len());
    let mut rejects = Vec::new();
    for s in spectra {
        match preprocess(s, cfg) {
            Ok(p) => kept.push(p),
            Err(e) => rejects.push(e),
        }
    }
    (kept, rejects)
}

/// Debug dump: one JSON object per line.
pub fn to_json_lines(spectra: &[Spectrum]) -> String {
    let mut out = String::new();
    for s in spectra {
        out.push_str(&serde_json::to_string(s).expect("spectrum serializes"));
        out.push('\n');
    }
    out
}
