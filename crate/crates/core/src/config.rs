//! Run configuration: one flat key=value namespace layered from defaults,
//! a config file, `SPECTRACAM_*` environment variables, and command-line
//! overrides — later layers win. The full configuration is echoed into
//! every report together with its SHA-256 hash for provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cam::{CamError, CurrentMode, CurrentModel, DeviceParams};
use crate::encoder::EncoderConfig;
use crate::scheduler::{ExecMode, SchedulerConfig};
use crate::spectra::{PreprocessConfig, SyntheticConfig};

/// Environment variables starting with this prefix override config keys;
/// `__` stands for the dot (`SPECTRACAM_ENCODER__ID_SEED` → `encoder.id_seed`).
pub const ENV_PREFIX: &str = "SPECTRACAM_";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: expected {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("malformed config line {line}: {text:?} (expected key=value)")]
    MalformedLine { line: usize, text: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderKeys {
    pub mz_bin_width: f64,
    pub mz_min: f64,
    pub mz_max: f64,
    pub intensity_levels: usize,
    pub id_seed: u64,
    pub level_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessKeys {
    pub top_n: usize,
    pub min_peaks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamKeys {
    pub capacity_bits: u64,
    pub current_mode: CurrentMode,
    pub alpha: f64,
    /// Apply per-slice distance calibration in parasitic mode.
    pub calibrated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerKeys {
    pub cache_capacity_rows: usize,
    pub cache_ns_per_row: f64,
    pub main_memory_bandwidth_gb_s: f64,
    pub main_memory_latency_ns: f64,
    pub mode: ExecMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterKeys {
    /// Phase-I greedy clustering radius in Hamming bits.
    pub theta: u32,
    /// Consensus rewrite period k (0 freezes consensus rows).
    pub rewrite_period: u32,
    pub threshold_percentile: f64,
    pub threshold_beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenKeys {
    pub n_peptides: usize,
    pub spectra_per_peptide: usize,
    pub peaks_per_spectrum: usize,
    pub dropout_prob: f64,
    pub mz_jitter_sd: f64,
    pub intensity_jitter_rel: f64,
}

/// The complete, echoable run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    /// Master seed of the synthetic generator.
    pub seed: u64,
    pub encoder: EncoderKeys,
    pub preprocess: PreprocessKeys,
    pub device: DeviceParams,
    pub cam: CamKeys,
    pub scheduler: SchedulerKeys,
    pub cluster: ClusterKeys,
    pub gen: GenKeys,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let pre = PreprocessConfig::default();
        let sched = SchedulerConfig::default();
        let synth = SyntheticConfig::default();
        Self {
            dim: enc.dim,
            seed: synth.seed,
            encoder: EncoderKeys {
                mz_bin_width: enc.mz_bin_width,
                mz_min: enc.mz_range.0,
                mz_max: enc.mz_range.1,
                intensity_levels: enc.intensity_levels,
                id_seed: enc.id_seed,
                level_seed: enc.level_seed,
            },
            preprocess: PreprocessKeys {
                top_n: pre.top_n,
                min_peaks: pre.min_peaks,
            },
            device: DeviceParams::default(),
            cam: CamKeys {
                capacity_bits: sched.cam_capacity_bits,
                current_mode: CurrentMode::Ideal,
                alpha: 0.002,
                calibrated: true,
            },
            scheduler: SchedulerKeys {
                cache_capacity_rows: sched.cache_capacity_rows,
                cache_ns_per_row: sched.cache_ns_per_row,
                main_memory_bandwidth_gb_s: sched.main_memory_bandwidth_gb_s,
                main_memory_latency_ns: sched.main_memory_latency_ns,
                mode: sched.mode,
            },
            cluster: ClusterKeys {
                theta: 512,
                rewrite_period: 16,
                threshold_percentile: 95.0,
                threshold_beta: 1.0,
            },
            gen: GenKeys {
                n_peptides: synth.n_peptides,
                spectra_per_peptide: synth.spectra_per_peptide,
                peaks_per_spectrum: synth.peaks_per_spectrum,
                dropout_prob: synth.dropout_prob,
                mz_jitter_sd: synth.mz_jitter_sd,
                intensity_jitter_rel: synth.intensity_jitter_rel,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

impl RunConfig {
    /// Set one dotted key from its string form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dim" => self.dim = parse(key, value, "positive integer")?,
            "seed" => self.seed = parse(key, value, "unsigned integer")?,
            "encoder.mz_bin_width" => self.encoder.mz_bin_width = parse(key, value, "number")?,
            "encoder.mz_min" => self.encoder.mz_min = parse(key, value, "number")?,
            "encoder.mz_max" => self.encoder.mz_max = parse(key, value, "number")?,
            "encoder.intensity_levels" => {
                self.encoder.intensity_levels = parse(key, value, "positive integer")?
            }
            "encoder.id_seed" => self.encoder.id_seed = parse(key, value, "unsigned integer")?,
            "encoder.level_seed" => {
                self.encoder.level_seed = parse(key, value, "unsigned integer")?
            }
            "preprocess.top_n" => self.preprocess.top_n = parse(key, value, "positive integer")?,
            "preprocess.min_peaks" => {
                self.preprocess.min_peaks = parse(key, value, "positive integer")?
            }
            "device.search_energy_per_bit_fj" => {
                self.device.search_energy_per_bit_fj = parse(key, value, "number")?
            }
            "device.search_latency_ns" => {
                self.device.search_latency_ns = parse(key, value, "number")?
            }
            "device.write_energy_per_bit_fj" => {
                self.device.write_energy_per_bit_fj = parse(key, value, "number")?
            }
            "device.write_latency_per_row_ns" => {
                self.device.write_latency_per_row_ns = parse(key, value, "number")?
            }
            "device.operating_voltage_v" => {
                self.device.operating_voltage_v = parse(key, value, "number")?
            }
            "device.array_rows" => self.device.array_rows = parse(key, value, "positive integer")?,
            "device.array_cols" => self.device.array_cols = parse(key, value, "positive integer")?,
            "device.lta_stage_latency_ns" => {
                self.device.lta_stage_latency_ns = parse(key, value, "number")?
            }
            "cam.capacity_bits" => self.cam.capacity_bits = parse(key, value, "unsigned integer")?,
            "cam.current_mode" => {
                self.cam.current_mode = match value.trim() {
                    "ideal" => CurrentMode::Ideal,
                    "parasitic" => CurrentMode::Parasitic,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "ideal|parasitic",
                        })
                    }
                }
            }
            "cam.alpha" => self.cam.alpha = parse(key, value, "number")?,
            "cam.calibrated" => self.cam.calibrated = parse(key, value, "true|false")?,
            "scheduler.cache_capacity_rows" => {
                self.scheduler.cache_capacity_rows = parse(key, value, "unsigned integer")?
            }
            "scheduler.cache_ns_per_row" => {
                self.scheduler.cache_ns_per_row = parse(key, value, "number")?
            }
            "scheduler.main_memory_bandwidth_gb_s" => {
                self.scheduler.main_memory_bandwidth_gb_s = parse(key, value, "number")?
            }
            "scheduler.main_memory_latency_ns" => {
                self.scheduler.main_memory_latency_ns = parse(key, value, "number")?
            }
            "scheduler.mode" => {
                self.scheduler.mode = match value.trim() {
                    "serial" => ExecMode::Serial,
                    "parallel" => ExecMode::Parallel,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "serial|parallel",
                        })
                    }
                }
            }
            "cluster.theta" => self.cluster.theta = parse(key, value, "unsigned integer")?,
            "cluster.rewrite_period" => {
                self.cluster.rewrite_period = parse(key, value, "unsigned integer")?
            }
            "cluster.threshold_percentile" => {
                self.cluster.threshold_percentile = parse(key, value, "number")?
            }
            "cluster.threshold_beta" => {
                self.cluster.threshold_beta = parse(key, value, "number")?
            }
            "gen.n_peptides" => self.gen.n_peptides = parse(key, value, "positive integer")?,
            "gen.spectra_per_peptide" => {
                self.gen.spectra_per_peptide = parse(key, value, "positive integer")?
            }
            "gen.peaks_per_spectrum" => {
                self.gen.peaks_per_spectrum = parse(key, value, "positive integer")?
            }
            "gen.dropout_prob" => self.gen.dropout_prob = parse(key, value, "probability")?,
            "gen.mz_jitter_sd" => self.gen.mz_jitter_sd = parse(key, value, "number")?,
            "gen.intensity_jitter_rel" => {
                self.gen.intensity_jitter_rel = parse(key, value, "number")?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply a line-oriented `key = value` file body. `#` starts a
    /// comment; blank lines are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply `SPECTRACAM_*` variables from an environment snapshot.
    /// Unrelated variables are ignored; a recognized prefix with an
    /// unknown remainder is an error (likely a typo).
    pub fn apply_env(
        &mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<(), ConfigError> {
        // sort for a deterministic application order
        let mut relevant: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        relevant.sort();
        for (name, value) in relevant {
            let key = name[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Apply CLI overrides, the topmost layer.
    pub fn apply_overrides<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, String)>,
    ) -> Result<(), ConfigError> {
        for (key, value) in pairs {
            self.set(key, &value)?;
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            mz_bin_width: self.encoder.mz_bin_width,
            mz_range: (self.encoder.mz_min, self.encoder.mz_max),
            intensity_levels: self.encoder.intensity_levels,
            id_seed: self.encoder.id_seed,
            level_seed: self.encoder.level_seed,
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            mz_min: self.encoder.mz_min,
            mz_max: self.encoder.mz_max,
            top_n: self.preprocess.top_n,
            min_peaks: self.preprocess.min_peaks,
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_peptides: self.gen.n_peptides,
            spectra_per_peptide: self.gen.spectra_per_peptide,
            peaks_per_spectrum: self.gen.peaks_per_spectrum,
            dropout_prob: self.gen.dropout_prob,
            mz_jitter_sd: self.gen.mz_jitter_sd,
            intensity_jitter_rel: self.gen.intensity_jitter_rel,
            mz_range: (self.encoder.mz_min, self.encoder.mz_max),
            seed: self.seed,
        }
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            cam_capacity_bits: self.cam.capacity_bits,
            cache_capacity_rows: self.scheduler.cache_capacity_rows,
            cache_ns_per_row: self.scheduler.cache_ns_per_row,
            main_memory_bandwidth_gb_s: self.scheduler.main_memory_bandwidth_gb_s,
            main_memory_latency_ns: self.scheduler.main_memory_latency_ns,
            mode: self.scheduler.mode,
        }
    }

    pub fn current_model(&self) -> Result<CurrentModel, CamError> {
        match self.cam.current_mode {
            CurrentMode::Ideal => Ok(CurrentModel::ideal()),
            CurrentMode::Parasitic => {
                let model = CurrentModel::parasitic(self.cam.alpha);
                if self.cam.calibrated {
                    model.calibrate()
                } else {
                    Ok(model)
                }
            }
        }
    }

    /// Cross-field validation of the assembled configuration.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let reject = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.encoder_config().validate() {
            return reject(format!("encoder: {e}"));
        }
        if let Err(e) = self.device.validate() {
            return reject(format!("device: {e}"));
        }
        if let Err(e) = self.scheduler_config().validate() {
            return reject(format!("scheduler: {e}"));
        }
        if let Err(e) = self.synthetic_config().validate() {
            return reject(format!("gen: {e}"));
        }
        if self.cluster.theta as usize >= self.dim {
            return reject(format!(
                "cluster.theta = {} must be below the dimension {}",
                self.cluster.theta, self.dim
            ));
        }
        if !(self.cluster.threshold_percentile > 0.0 && self.cluster.threshold_percentile <= 100.0)
        {
            return reject("cluster.threshold_percentile must be in (0, 100]".into());
        }
        if !(self.cluster.threshold_beta.is_finite() && self.cluster.threshold_beta > 0.0) {
            return reject("cluster.threshold_beta must be positive".into());
        }
        if self.cam.current_mode == CurrentMode::Parasitic
            && !(self.cam.alpha.is_finite() && self.cam.alpha > 0.0)
        {
            return reject("cam.alpha must be positive in parasitic mode".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; embedded in every report.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn file_layer_parses_comments_and_spacing() {
        let mut cfg = RunConfig::default();
        cfg.apply_file(
            "# a comment\n\
             dim = 1024\n\
             \n\
             encoder.intensity_levels=32   # trailing comment\n\
             scheduler.mode = serial\n",
        )
        .unwrap();
        assert_eq!(cfg.dim, 1024);
        assert_eq!(cfg.encoder.intensity_levels, 32);
        assert_eq!(cfg.scheduler.mode, ExecMode::Serial);
    }

    #[test]
    fn unknown_key_and_bad_value_error() {
        let mut cfg = RunConfig::default();
        assert_eq!(
            cfg.set("encoder.typo", "1").unwrap_err(),
            ConfigError::UnknownKey("encoder.typo".into())
        );
        assert!(matches!(
            cfg.set("dim", "poodle").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
        assert!(matches!(
            cfg.apply_file("dim 2048").unwrap_err(),
            ConfigError::MalformedLine { line: 1, .. }
        ));
        assert!(matches!(
            cfg.set("scheduler.mode", "fast").unwrap_err(),
            ConfigError::BadValue { .. }
        ));
    }

    // Precedence: CLI flag > environment > file > default.
    #[test]
    fn layering_precedence() {
        let mut cfg = RunConfig::default();
        cfg.apply_file("seed = 1\ncluster.theta = 100\ndim = 1024\n")
            .unwrap();
        cfg.apply_env([
            ("SPECTRACAM_SEED".to_string(), "2".to_string()),
            ("SPECTRACAM_CLUSTER__THETA".to_string(), "200".to_string()),
            ("HOME".to_string(), "/root".to_string()), // ignored
        ])
        .unwrap();
        cfg.apply_overrides([("seed", "3".to_string())]).unwrap();
        assert_eq!(cfg.seed, 3, "CLI wins");
        assert_eq!(cfg.cluster.theta, 200, "env beats file");
        assert_eq!(cfg.dim, 1024, "file beats default");
    }

    #[test]
    fn env_with_recognized_prefix_but_unknown_key_errors() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_env([("SPECTRACAM_NO_SUCH".to_string(), "1".to_string())])
            .unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("no_such".into()));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "99").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn materialized_configs_mirror_keys() {
        let mut cfg = RunConfig::default();
        cfg.set("dim", "4096").unwrap();
        cfg.set("encoder.mz_min", "150").unwrap();
        cfg.set("gen.n_peptides", "42").unwrap();
        let enc = cfg.encoder_config();
        assert_eq!(enc.dim, 4096);
        assert_eq!(enc.mz_range.0, 150.0);
        let synth = cfg.synthetic_config();
        assert_eq!(synth.n_peptides, 42);
        assert_eq!(synth.mz_range.0, 150.0, "gen range follows the encoder window");
        let pre = cfg.preprocess_config();
        assert_eq!(pre.mz_min, 150.0);
    }

    #[test]
    fn current_model_materialization() {
        let mut cfg = RunConfig::default();
        assert!(!cfg.current_model().unwrap().is_calibrated());
        cfg.set("cam.current_mode", "parasitic").unwrap();
        assert!(cfg.current_model().unwrap().is_calibrated());
        cfg.set("cam.calibrated", "false").unwrap();
        assert!(!cfg.current_model().unwrap().is_calibrated());
    }

    #[test]
    fn theta_must_stay_below_dimension() {
        let mut cfg = RunConfig::default();
        cfg.set("cluster.theta", "2048").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
