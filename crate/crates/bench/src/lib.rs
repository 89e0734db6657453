//! Benchmark-only crate; the measurements live in `benches/kernels.rs`
//! (`cargo bench -p spectracam-bench`). Shared helpers for building
//! benchmark inputs sit here so the bench file stays declarative.

use spectracam_core::hdc::Hypervector;
use spectracam_core::spectra::{generate_synthetic, preprocess_all};
use spectracam_core::{CamBank, DeviceParams, Encoder, EnergyLatencyLedger, RunConfig, Spectrum};

/// A deterministic random hypervector at the given dimension.
pub fn hv(dim: usize, index: u64) -> Hypervector {
    Hypervector::random(dim, 0xbe7c4, index).expect("valid benchmark dimension")
}

/// One preprocessed synthetic spectrum plus the encoder for it.
pub fn encode_input() -> (Encoder, Spectrum) {
    let cfg = RunConfig::default();
    let mut synth = cfg.synthetic_config();
    synth.n_peptides = 1;
    synth.spectra_per_peptide = 1;
    let (mut kept, _) = preprocess_all(
        generate_synthetic(&synth).expect("valid default config"),
        &cfg.preprocess_config(),
    );
    let encoder = Encoder::new(cfg.encoder_config()).expect("valid default config");
    (encoder, kept.pop().expect("one spectrum survives"))
}

/// A CAM bank filled with `rows` random consensus rows.
pub fn filled_bank(dim: usize, rows: usize) -> CamBank {
    let device = DeviceParams::default();
    let mut ledger = EnergyLatencyLedger::new();
    let mut bank = CamBank::new(7, dim, rows).expect("valid dimensions");
    let image: Vec<(u64, Hypervector)> = (0..rows)
        .map(|i| (i as u64, hv(dim, 1000 + i as u64)))
        .collect();
    bank.write_rows(&image, &device, &mut ledger)
        .expect("capacity sized to fit");
    bank
}
