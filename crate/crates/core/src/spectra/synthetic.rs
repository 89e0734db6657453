//! Labeled synthetic spectra: peptide templates plus noisy replicas.
//!
//! Each peptide gets a template spectrum (peaks uniform over the m/z
//! range) and a precursor placed on one of a fixed set of mass lanes.
//! Real peptide masses pile up on a near-integer lattice, so many peptides
//! share a precursor bin; the lanes reproduce that, which gives the
//! downstream bucket partition realistic multi-peptide occupancy instead
//! of one lonely peptide per bucket. Replicas perturb the template with
//! peak dropout, Gaussian m/z jitter, and relative intensity jitter, and
//! inherit the template precursor exactly.
//!
//! Everything is a pure function of (config, seed): templates draw from a
//! per-peptide stream and replicas from a per-(peptide, replica) stream,
//! so outputs are stable under any iteration order.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Peak, Spectrum, SpectraError};
use crate::encoder::{D_C, M_Q};
use crate::hdc::stream_rng;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    pub n_peptides: usize,
    pub spectra_per_peptide: usize,
    pub peaks_per_spectrum: usize,
    /// Probability each template peak is absent from a replica.
    pub dropout_prob: f64,
    /// Gaussian sd of per-peak m/z displacement, in Daltons.
    pub mz_jitter_sd: f64,
    /// Relative sd of per-peak intensity scaling.
    pub intensity_jitter_rel: f64,
    /// Half-open peak m/z range `[low, high)`.
    pub mz_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_peptides: 500,
            spectra_per_peptide: 10,
            peaks_per_spectrum: 60,
            dropout_prob: 0.05,
            mz_jitter_sd: 0.02,
            intensity_jitter_rel: 0.08,
            mz_range: (200.0, 2000.0),
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SpectraError> {
        let (low, high) = self.mz_range;
        if !(low.is_finite() && high.is_finite() && low > 0.0 && low < high) {
            return Err(SpectraError::BadConfig(format!(
                "mz_range ({low}, {high}) must satisfy 0 < low < high"
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(SpectraError::BadConfig(format!(
                "dropout_prob {} outside [0, 1]",
                self.dropout_prob
            )));
        }
        for (name, v) in [
            ("mz_jitter_sd", self.mz_jitter_sd),
            ("intensity_jitter_rel", self.intensity_jitter_rel),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SpectraError::BadConfig(format!(
                    "{name} {v} must be finite and non-negative"
                )));
            }
        }
        if self.peaks_per_spectrum == 0 {
            return Err(SpectraError::BadConfig("peaks_per_spectrum must be > 0".into()));
        }
        if self.n_peptides > (1 << 31) - 1 || self.spectra_per_peptide > (1 << 16) - 1 {
            return Err(SpectraError::BadConfig(
                "peptide/replica counts exceed stream-index packing limits".into(),
            ));
        }
        Ok(())
    }

    /// Number of precursor mass lanes templates are distributed over.
    fn n_lanes(&self) -> usize {
        (self.n_peptides / 8).max(4)
    }
}

fn template_rng(cfg: &SyntheticConfig, p: usize) -> rand_chacha::ChaCha8Rng {
    stream_rng(cfg.seed, (p as u64) << 32)
}

fn replica_rng(cfg: &SyntheticConfig, p: usize, r: usize) -> rand_chacha::ChaCha8Rng {
    stream_rng(cfg.seed, ((p as u64) << 32) | (1 << 16) | r as u64)
}

/// Noise-free template for peptide `p`. Draw order (lane, in-bin offset,
/// then peaks) is part of the determinism contract.
fn template(cfg: &SyntheticConfig, p: usize) -> Spectrum {
    let mut rng = template_rng(cfg, p);
    let (low, high) = cfg.mz_range;
    let span = high - low;

    // Lane → charge and precursor bin; the peptide sits at a uniform
    // offset inside that bin, never on its edge.
    let lane = rng.random_range(0..cfg.n_lanes());
    let in_bin: f64 = rng.random_range(-0.4..0.4);
    let charge = 2 + (lane % 2) as u8;
    let lane_mz = (low + 0.25 * span) + (lane as f64 + 0.5) / cfg.n_lanes() as f64 * (0.5 * span);
    let bin = (((lane_mz - M_Q) * f64::from(charge) / D_C).floor()).max(0.0);
    let precursor_mz = M_Q + (bin + 0.5 + in_bin) * D_C / f64::from(charge);

    let mut peaks: Vec<Peak> = (0..cfg.peaks_per_spectrum)
        .map(|_| Peak {
            mz: rng.random_range(low..high),
            intensity: rng.random_range(0.05..1.0),
        })
        .collect();
    peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz));

    Spectrum {
        id: format!("P{p:05}T"),
        precursor_mz,
        charge,
        peaks,
        label: Some(p.to_string()),
        preprocessed: false,
    }
}

/// The noise-free templates themselves, one per peptide. Exposed for
/// tests and workload construction; [`generate_synthetic`] emits only the
/// replicas.
pub fn generate_templates(cfg: &SyntheticConfig) -> Result<Vec<Spectrum>, SpectraError> {
    cfg.validate()?;
    Ok((0..cfg.n_peptides).map(|p| template(cfg, p)).collect())
}

/// Generate `n_peptides × spectra_per_peptide` labeled replicas in
/// (peptide-major, replica-minor) order.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<Spectrum>, SpectraError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_peptides * cfg.spectra_per_peptide);
    for p in 0..cfg.n_peptides {
        let t = template(cfg, p);
        for r in 0..cfg.spectra_per_peptide {
            out.push(replicate(cfg, &t, p, r));
        }
    }
    Ok(out)
}

fn replicate(cfg: &SyntheticConfig, t: &Spectrum, p: usize, r: usize) -> Spectrum {
    let mut rng = replica_rng(cfg, p, r);
    // Zero-noise settings skip sampling entirely so replicas reproduce the
    // template bit-exactly.
    let mz_noise = (cfg.mz_jitter_sd > 0.0)
        .then(|| Normal::new(0.0, cfg.mz_jitter_sd).expect("validated sd"));
    let int_noise = (cfg.intensity_jitter_rel > 0.0)
        .then(|| Normal::new(0.0, cfg.intensity_jitter_rel).expect("validated sd"));

    let mut peaks = Vec::with_capacity(t.peaks.len());
    for peak in &t.peaks {
        if cfg.dropout_prob > 0.0 && rng.random_bool(cfg.dropout_prob) {
            continue;
        }
        let mz = match &mz_noise {
            Some(n) => peak.mz + n.sample(&mut rng),
            None => peak.mz,
        };
        let intensity = match &int_noise {
            Some(n) => peak.intensity * (1.0 + n.sample(&mut rng)).max(0.01),
            None => peak.intensity,
        };
        peaks.push(Peak { mz, intensity });
    }
    peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz));

    Spectrum {
        id: format!("P{p:05}R{r:03}"),
        precursor_mz: t.precursor_mz,
        charge: t.charge,
        peaks,
        label: t.label.clone(),
        preprocessed: false,
    }
}
