//! Spectrum → hypervector encoding and precursor bucketing.
//!
//! Each peak maps to a pair (m/z bin id, quantized intensity level); the
//! id and level hypervectors are bound (XOR) and all bound pairs are
//! bundled by majority vote into one binary spectrum hypervector.
//!
//! Bucketing quantizes the neutral precursor mass: spectra land in bucket
//! `floor((precursor_mz − m_q) · charge / d_c)`, where `m_q` is the
//! charge (proton) mass and `d_c` the adjacent-cluster mass spacing. Only
//! spectra in the same bucket are ever compared.

use thiserror::Error;

use crate::hdc::{bind, Accumulator, Codebook, HdcError, Hypervector};
use crate::spectra::Spectrum;

/// Charge (proton) mass in Daltons.
pub const M_Q: f64 = 1.00794;
/// Adjacent-cluster mass spacing in Daltons; doubles as the default
/// fragment m/z bin width so fragment binning aligns with precursor
/// bucketing granularity.
pub const D_C: f64 = 1.0005079;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("spectrum {id}: encode requires a preprocessed spectrum")]
    NotPreprocessed { id: String },
    #[error("spectrum {id}: peak m/z {mz} outside encoder range [{low}, {high})")]
    PeakOutOfRange {
        id: String,
        mz: f64,
        low: f64,
        high: f64,
    },
    #[error("spectrum {id}: intensity {intensity} outside [0, 1] after preprocessing")]
    BadIntensity { id: String, intensity: f64 },
    #[error("spectrum {id}: empty peak list")]
    NoPeaks { id: String },
    #[error("spectrum {id}: precursor m/z {precursor_mz} below the charge mass {M_Q}")]
    NonphysicalPrecursor { id: String, precursor_mz: f64 },
    #[error("encoder config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Hdc(#[from] HdcError),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    /// Hypervector dimension.
    pub dim: usize,
    /// Fragment m/z bin width in Daltons.
    pub mz_bin_width: f64,
    /// Half-open fragment m/z range `[low, high)`; must cover every
    /// preprocessed peak.
    pub mz_range: (f64, f64),
    /// Number of quantized intensity levels.
    pub intensity_levels: usize,
    pub id_seed: u64,
    pub level_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 2048,
            mz_bin_width: D_C,
            mz_range: (200.0, 2000.0),
            intensity_levels: 64,
            id_seed: 0x1d,
            level_seed: 0x1e7e1,
        }
    }
}

/// Quantized precursor-mass partition constants.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BucketParams {
    pub m_q: f64,
    pub d_c: f64,
}

impl Default for BucketParams {
    fn default() -> Self {
        Self { m_q: M_Q, d_c: D_C }
    }
}

impl EncoderConfig {
    /// Number of fragment m/z bins: `ceil((high − low)/width)`.
    pub fn n_id_bins(&self) -> usize {
        let (low, high) = self.mz_range;
        ((high - low) / self.mz_bin_width).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let (low, high) = self.mz_range;
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(EncoderError::BadConfig(format!(
                "mz_range ({low}, {high}) must satisfy low < high"
            )));
        }
        if !(self.mz_bin_width.is_finite() && self.mz_bin_width > 0.0) {
            return Err(EncoderError::BadConfig(format!(
                "mz_bin_width {} must be positive",
                self.mz_bin_width
            )));
        }
        if self.n_id_bins() > 65536 {
            return Err(EncoderError::BadConfig(format!(
                "{} m/z bins exceed the 65536 codebook limit",
                self.n_id_bins()
            )));
        }
        if self.intensity_levels < 2 {
            return Err(EncoderError::BadConfig(
                "need at least 2 intensity levels".into(),
            ));
        }
        Ok(())
    }
}

/// Ready-to-use encoder: config plus materialized codebooks and the
/// majority tie-breaker vector.
pub struct Encoder {
    cfg: EncoderConfig,
    id_cb: Codebook,
    level_cb: Codebook,
    tie: Hypervector,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let id_cb = crate::hdc::make_id_codebook(cfg.n_id_bins(), cfg.dim, cfg.id_seed)?;
        let level_cb =
            crate::hdc::make_level_codebook(cfg.intensity_levels, cfg.dim, cfg.level_seed)?;
        let tie = Self::tie_breaker(&cfg)?;
        Ok(Self {
            cfg,
            id_cb,
            level_cb,
            tie,
        })
    }

    /// Rebuild an encoder around snapshot-restored codebooks.
    pub fn from_codebooks(
        cfg: EncoderConfig,
        id_cb: Codebook,
        level_cb: Codebook,
    ) -> Result<Self, EncoderError> {
        cfg.validate()?;
        if id_cb.dim() != cfg.dim || level_cb.dim() != cfg.dim {
            return Err(EncoderError::BadConfig(format!(
                "codebook dimensions ({}, {}) do not match config dim {}",
                id_cb.dim(),
                level_cb.dim(),
                cfg.dim
            )));
        }
        if id_cb.len() != cfg.n_id_bins() || level_cb.len() != cfg.intensity_levels {
            return Err(EncoderError::BadConfig(format!(
                "codebook sizes ({}, {}) do not match config ({}, {})",
                id_cb.len(),
                level_cb.len(),
                cfg.n_id_bins(),
                cfg.intensity_levels
            )));
        }
        let tie = Self::tie_breaker(&cfg)?;
        Ok(Self {
            cfg,
            id_cb,
            level_cb,
            tie,
        })
    }

    /// Deterministic majority tie-breaker derived from both codebook seeds.
    fn tie_breaker(cfg: &EncoderConfig) -> Result<Hypervector, HdcError> {
        Hypervector::random(cfg.dim, cfg.id_seed.rotate_left(17) ^ cfg.level_seed, u64::MAX)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn id_codebook(&self) -> &Codebook {
        &self.id_cb
    }

    pub fn level_codebook(&self) -> &Codebook {
        &self.level_cb
    }

    pub fn tie(&self) -> &Hypervector {
        &self.tie
    }

    /// Fragment m/z bin index.
    pub fn id_index(&self, mz: f64, spectrum_id: &str) -> Result<usize, EncoderError> {
        let (low, high) = self.cfg.mz_range;
        if !(mz >= low && mz < high) {
            return Err(EncoderError::PeakOutOfRange {
                id: spectrum_id.to_string(),
                mz,
                low,
                high,
            });
        }
        // in-range mz can still round up to n_id_bins at the very edge of
        // the last partial bin; clamp keeps it addressable
        Ok((((mz - low) / self.cfg.mz_bin_width) as usize).min(self.cfg.n_id_bins() - 1))
    }

    /// Quantized intensity level: round-to-nearest over `[0, 1]`,
    /// half-way rounds up.
    pub fn level_index(&self, intensity: f64, spectrum_id: &str) -> Result<usize, EncoderError> {
        if !(0.0..=1.0).contains(&intensity) {
            return Err(EncoderError::BadIntensity {
                id: spectrum_id.to_string(),
                intensity,
            });
        }
        Ok((intensity * (self.cfg.intensity_levels - 1) as f64 + 0.5) as usize)
    }

    /// Encode one preprocessed spectrum: bind each peak's (id, level)
    /// pair, bundle all pairs by majority vote.
    pub fn encode(&self, s: &Spectrum) -> Result<Hypervector, EncoderError> {
        if !s.preprocessed {
            return Err(EncoderError::NotPreprocessed { id: s.id.clone() });
        }
        if s.peaks.is_empty() {
            return Err(EncoderError::NoPeaks { id: s.id.clone() });
        }
        let mut acc = Accumulator::new(self.cfg.dim)?;
        for p in &s.peaks {
            let id_idx = self.id_index(p.mz, &s.id)?;
            let level_idx = self.level_index(p.intensity, &s.id)?;
            acc.add(&bind(self.id_cb.entry(id_idx), self.level_cb.entry(level_idx))?)?;
        }
        Ok(acc.bundle(&self.tie)?)
    }
}

/// Precursor bucket id: `floor((precursor_mz − m_q) · charge / d_c)`.
/// Total over physical inputs; a precursor at exactly `m_q` maps to
/// bucket 0, anything below it is rejected.
pub fn bucket_of(s: &Spectrum, p: &BucketParams) -> Result<u64, EncoderError> {
    debug_assert!((1..=8).contains(&s.charge));
    if s.precursor_mz < p.m_q || !s.precursor_mz.is_finite() {
        return Err(EncoderError::NonphysicalPrecursor {
            id: s.id.clone(),
            precursor_mz: s.precursor_mz,
        });
    }
    Ok(((s.precursor_mz - p.m_q) * f64::from(s.charge) / p.d_c).floor() as u64)
}
