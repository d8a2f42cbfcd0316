//! CSV ingestion, fixed-precision formatting and atomic output staging.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use odmr_core::metrics::LatticeRow;
use odmr_core::spectrum::{Spectrum, SpectrumKind};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SPECTRUM_HEADER: [&str; 2] = ["frequency_mhz", "value"];
pub const ODMR_HEADER: [&str; 2] = ["frequency_mhz", "contrast"];
pub const LATTICE_HEADER: [&str; 3] = ["temperature_k", "a_angstrom", "c_angstrom"];

/// Rounds a frequency to the 6 decimals used in every output file.
pub fn mhz(v: f64) -> f64 {
    round_to(v, 1e6)
}

/// Rounds a field component to 4 decimals.
pub fn mt(v: f64) -> f64 {
    round_to(v, 1e4)
}

fn round_to(v: f64, scale: f64) -> f64 {
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// Parses numeric rows below a required header. Errors name the 1-based line.
fn read_rows<const N: usize>(text: &str, expected: &[&[&str; N]], source: &str) -> Result<(usize, Vec<[f64; N]>), CliError> {
    let bad = |msg: String| CliError::Input(format!("{source}: {msg}"));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(format!("line 1: {e}")))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let schema = expected.iter().position(|h| names == h[..]).ok_or_else(|| {
        let wanted: Vec<String> = expected.iter().map(|h| h.join(",")).collect();
        bad(format!("line 1: header `{}` does not match {}", names.join(","), wanted.join(" or ")))
    })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
        let mut row = [0.0; N];
        for (k, slot) in row.iter_mut().enumerate() {
            let field = rec.get(k).unwrap_or("");
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("line {line}: column `{}` is not a finite number: `{field}`", expected[schema][k])))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok((schema, rows))
}

/// Reads a `frequency_mhz,value` or `frequency_mhz,contrast` spectrum.
pub fn read_spectrum_csv(text: &str, source: &str) -> Result<Spectrum, CliError> {
    let (schema, rows) = read_rows(text, &[&SPECTRUM_HEADER, &ODMR_HEADER], source)?;
    for (i, w) in rows.windows(2).enumerate() {
        if w[1][0] <= w[0][0] {
            return Err(CliError::Input(format!(
                "{source}: line {}: frequencies must be strictly increasing",
                i + 3
            )));
        }
    }
    let kind = if schema == 0 {
        SpectrumKind::FftAmplitude
    } else {
        SpectrumKind::OdmrContrast
    };
    let (f, v) = rows.into_iter().map(|[f, v]| (f, v)).unzip();
    Spectrum::new(f, v, kind, source).map_err(|e| CliError::Input(format!("{source}: {e}")))
}

/// Writes `frequency_mhz,value`, or `frequency_mhz,contrast` for contrast spectra.
pub fn write_spectrum_csv(s: &Spectrum) -> Vec<u8> {
    let header = if s.kind == SpectrumKind::OdmrContrast {
        ODMR_HEADER
    } else {
        SPECTRUM_HEADER
    };
    let mut out = format!("{}\n", header.join(","));
    for (f, v) in s.freqs_mhz.iter().zip(&s.values) {
        out.push_str(&format!("{f:.6},{v:e}\n"));
    }
    out.into_bytes()
}

pub fn read_lattice_csv(text: &str, source: &str) -> Result<Vec<LatticeRow>, CliError> {
    let (_, rows) = read_rows(text, &[&LATTICE_HEADER], source)?;
    Ok(rows
        .into_iter()
        .map(|[t, a, c]| LatticeRow {
            temperature_k: t,
            a_angstrom: a,
            c_angstrom: c,
        })
        .collect())
}

pub fn write_lattice_csv(rows: &[LatticeRow]) -> Vec<u8> {
    let mut out = format!("{}\n", LATTICE_HEADER.join(","));
    for r in rows {
        out.push_str(&format!("{:e},{:e},{:e}\n", r.temperature_k, r.a_angstrom, r.c_angstrom));
    }
    out.into_bytes()
}

pub fn read_input(path: &Path) -> Result<(String, String), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let hash = sha256_hex(text.as_bytes());
    Ok((text, hash))
}

/// Output files held in memory until every one of them is ready.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn hashes(&self) -> Vec<(String, String)> {
        self.files.iter().map(|(n, b)| (n.clone(), sha256_hex(b))).collect()
    }

    /// Writes every file as temp-then-rename. On any failure the files already
    /// renamed and all temp files are removed.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::Output(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut temps: Vec<(PathBuf, PathBuf)> = Vec::new();
        let mut done: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (name, bytes) in &self.files {
                let target = dir.join(name);
                let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
                temps.push((tmp.clone(), target.clone()));
                let mut f = fs::File::create(&tmp).map_err(|e| io(&tmp, e))?;
                f.write_all(bytes).map_err(|e| io(&tmp, e))?;
                f.sync_all().map_err(|e| io(&tmp, e))?;
            }
            for (tmp, target) in &temps {
                fs::rename(tmp, target).map_err(|e| io(target, e))?;
                done.push(target.clone());
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &temps {
                let _ = fs::remove_file(tmp);
            }
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        Ok(done)
    }
}
