//! MGF (Mascot generic format) subset: text blocks of the form
//!
//! ```text
//! BEGIN IONS
//! TITLE=<spectrum id>
//! PEPMASS=<precursor m/z>
//! CHARGE=<n>+
//! <mz> <intensity>
//! ...
//! END IONS
//! ```
//!
//! Unrecognized `KEY=value` headers are ignored. Malformed blocks are
//! rejected individually — parsing always continues to the next block —
//! and every reject carries the offending line number and the block's
//! TITLE when one was seen. Serialization uses shortest-round-trip float
//! formatting, so `parse(write(spectra))` reproduces every field
//! bit-exactly.

use std::collections::BTreeMap;
use std::fmt;

use super::{Peak, Spectrum};

/// Diagnostic for one rejected block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MgfReject {
    pub title: Option<String>,
    /// 1-based line number of the offending line (the block's `BEGIN IONS`
    /// line for block-level problems such as a missing header).
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for MgfReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.title {
            Some(t) => write!(f, "block \"{t}\" (line {}): {}", self.line, self.reason),
            None => write!(f, "untitled block (line {}): {}", self.line, self.reason),
        }
    }
}

#[derive(Debug, Default)]
pub struct ParsedMgf {
    pub spectra: Vec<Spectrum>,
    pub rejects: Vec<MgfReject>,
}

#[derive(Default)]
struct Block {
    begin_line: usize,
    title: Option<String>,
    pepmass: Option<f64>,
    charge: Option<u8>,
    peaks: Vec<Peak>,
    /// First problem seen inside the block; the rest of the block is still
    /// consumed so parsing resumes cleanly at the next one.
    reject: Option<(usize, String)>,
}

impl Block {
    fn flag(&mut self, line: usize, reason: impl Into<String>) {
        if self.reject.is_none() {
            self.reject = Some((line, reason.into()));
        }
    }

    fn finish(mut self, anon_counter: &mut usize) -> Result<Spectrum, MgfReject> {
        if self.reject.is_none() {
            if self.pepmass.is_none() {
                self.flag(self.begin_line, "missing PEPMASS");
            } else if self.charge.is_none() {
                self.flag(self.begin_line, "missing CHARGE");
            }
        }
        if let Some((line, reason)) = self.reject {
            return Err(MgfReject {
                title: self.title,
                line,
                reason,
            });
        }
        let id = self.title.unwrap_or_else(|| {
            *anon_counter += 1;
            format!("spectrum_{anon_counter:06}")
        });
        Ok(Spectrum {
            id,
            precursor_mz: self.pepmass.expect("checked above"),
            charge: self.charge.expect("checked above"),
            peaks: self.peaks,
            label: None,
            preprocessed: false,
        })
    }
}

fn parse_charge(text: &str) -> Result<u8, String> {
    let digits = text.strip_suffix('+').unwrap_or(text);
    let n: u8 = digits
        .parse()
        .map_err(|_| format!("unparseable CHARGE \"{text}\""))?;
    if !(1..=8).contains(&n) {
        return Err(format!("CHARGE {n} outside 1..=8"));
    }
    Ok(n)
}

/// Parse an MGF document. Lines outside `BEGIN IONS`/`END IONS` are
/// ignored, so interleaved comments and global headers are harmless.
pub fn parse_mgf(text: &str) -> ParsedMgf {
    let mut out = ParsedMgf::default();
    let mut block: Option<Block> = None;
    let mut anon = 0usize;

    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw_line.trim();
        let Some(b) = block.as_mut() else {
            if line == "BEGIN IONS" {
                block = Some(Block {
                    begin_line: lineno,
                    ..Default::default()
                });
            }
            continue;
        };

        if line == "END IONS" {
            match block.take().expect("inside a block").finish(&mut anon) {
                Ok(s) => out.spectra.push(s),
                Err(r) => out.rejects.push(r),
            }
        } else if line == "BEGIN IONS" {
            b.flag(lineno, "BEGIN IONS before the previous block ended");
            let dead = block.take().expect("inside a block");
            out.rejects.push(
                dead.finish(&mut anon)
                    .expect_err("flagged blocks always reject"),
            );
            block = Some(Block {
                begin_line: lineno,
                ..Default::default()
            });
        } else if line.is_empty() {
            // blank padding inside a block is tolerated
        } else if let Some((key, value)) = line.split_once('=') {
            match key {
                "TITLE" => b.title = Some(value.trim().to_string()),
                "PEPMASS" => {
                    // a second token (precursor intensity) is permitted and ignored
                    let first = value.split_whitespace().next().unwrap_or("");
                    match first.parse::<f64>() {
                        Ok(m) if m > 0.0 && m.is_finite() => b.pepmass = Some(m),
                        _ => b.flag(lineno, format!("unparseable PEPMASS \"{value}\"")),
                    }
                }
                "CHARGE" => match parse_charge(value.trim()) {
                    Ok(c) => b.charge = Some(c),
                    Err(e) => b.flag(lineno, e),
                },
                _ => {} // unknown KEY=value headers are ignored
            }
        } else {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [mz, intensity] => match (mz.parse::<f64>(), intensity.parse::<f64>()) {
                    (Ok(mz), Ok(intensity)) => Some(Peak { mz, intensity }),
                    _ => None,
                },
                _ => None,
            };
            match parsed {
                Some(p) if p.mz > 0.0 && p.mz.is_finite() && p.intensity >= 0.0 => {
                    b.peaks.push(p);
                }
                Some(_) => b.flag(lineno, format!("nonphysical peak \"{line}\"")),
                None => b.flag(lineno, format!("unparseable line \"{line}\"")),
            }
        }
    }

    if let Some(dead) = block {
        let mut dead = dead;
        dead.flag(dead.begin_line, "unterminated block (missing END IONS)");
        out.rejects.push(
            dead.finish(&mut anon)
                .expect_err("flagged blocks always reject"),
        );
    }
    out
}

/// Serialize spectra to MGF text. Floats print in Rust's shortest
/// round-trip form, so a parse of the output reproduces them bit-exactly.
pub fn write_mgf(spectra: &[Spectrum]) -> String {
    let mut out = String::new();
    for s in spectra {
        out.push_str("BEGIN IONS\n");
        out.push_str(&format!("TITLE={}\n", s.id));
        out.push_str(&format!("PEPMASS={}\n", s.precursor_mz));
        out.push_str(&format!("CHARGE={}+\n", s.charge));
        for p in &s.peaks {
            out.push_str(&format!("{} {}\n", p.mz, p.intensity));
        }
        out.push_str("END IONS\n\n");
    }
    out
}

/// Serialize ground-truth labels as `id<TAB>label` lines.
pub fn write_labels(spectra: &[Spectrum]) -> String {
    let mut out = String::new();
    for s in spectra {
        if let Some(label) = &s.label {
            out.push_str(&format!("{}\t{}\n", s.id, label));
        }
    }
    out
}

/// Parse the label sidecar written by [`write_labels`].
pub fn read_labels(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            l.split_once('\t')
                .map(|(id, label)| (id.to_string(), label.to_string()))
        })
        .collect()
}

/// Attach sidecar labels to parsed spectra by id.
pub fn attach_labels(spectra: &mut [Spectrum], labels: &BTreeMap<String, String>) {
    for s in spectra {
        if let Some(l) = labels.get(&s.id) {
            s.label = Some(l.clone());
        }
    }
}
