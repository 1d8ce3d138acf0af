//! Deterministic output files: digest-stamped CSV, JSON summaries, binary snapshots and the
//! run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::integrator::{EnergyLedgerEntry, PathRecord, State};
use crate::spectral::{PressureField, VelocityField};

use super::config::RunConfig;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything that determines a run's data files.
#[derive(Clone, Debug, Serialize)]
pub struct ManifestInputs<'a> {
    pub command: &'a str,
    pub code_version: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
}

impl ManifestInputs<'_> {
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest<'a> {
    pub digest: String,
    pub inputs: ManifestInputs<'a>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<FileDigest>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Collects the data files of one run under a directory, stamping each with the digest.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    digest: String,
    files: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(dir: &Path, digest: String) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digest,
            files: Vec::new(),
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileDigest {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let text = table.render(&self.digest);
        self.write(name, text.as_bytes())
    }

    /// JSON summary with the digest as its first field.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            manifest: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Stamped {
            manifest: &self.digest,
            value,
        })?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_snapshot(&mut self, name: &str, state: &State) -> Result<()> {
        let digest = hex::decode(&self.digest).map_err(|e| Error::Snapshot(e.to_string()))?;
        let bytes = encode_snapshot(state, &digest)?;
        self.write(name, &bytes)
    }

    pub fn finish(self, inputs: ManifestInputs<'_>, started_unix: f64) -> Result<PathBuf> {
        let manifest = RunManifest {
            digest: self.digest.clone(),
            inputs,
            started_unix,
            finished_unix: unix_now(),
            outputs: self.files,
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }

    pub fn render(&self, digest: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# manifest {digest}");
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn path_table(rec: &PathRecord) -> CsvTable {
    let mut t = CsvTable::new(&["t", "l2_u", "h1_u", "l4_u", "l2_p", "l2_div_u", "energy", "residual"]);
    for r in &rec.rows {
        t.push_f64(&[r.t, r.l2_u, r.h1_u, r.l4_u, r.l2_p, r.l2_div_u, r.energy, r.residual]);
    }
    t
}

pub fn ledger_table(ledger: &[EnergyLedgerEntry]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "t",
        "energy_before",
        "energy",
        "dissipation_increment",
        "work_increment",
        "ito_increment",
        "martingale_increment",
        "residual",
    ]);
    for e in ledger {
        t.push_f64(&[
            e.t,
            e.energy_before,
            e.energy,
            e.dissipation_increment,
            e.work_increment,
            e.ito_increment,
            e.martingale_increment,
            e.residual,
        ]);
    }
    t
}

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"ACNS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Little-endian layout: magic `ACNS`, version `u32`, `N` `u32`, velocity count `u32`,
/// pressure count `u32`, `t` `f64`, 32-byte manifest digest, velocity coefficients `f64`,
/// pressure coefficients `f64`.
pub fn encode_snapshot(state: &State, digest: &[u8]) -> Result<Vec<u8>> {
    if digest.len() != 32 {
        return Err(Error::Snapshot(format!("digest must be 32 bytes, got {}", digest.len())));
    }
    let (u, p) = (state.u.coeffs(), state.p.coeffs());
    let mut out = Vec::with_capacity(60 + 8 * (u.len() + p.len()));
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.u.n_modes() as u32).to_le_bytes());
    out.extend_from_slice(&(u.len() as u32).to_le_bytes());
    out.extend_from_slice(&(p.len() as u32).to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    out.extend_from_slice(digest);
    for x in u.iter().chain(p.iter()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_snapshot`]; returns the state and the embedded digest.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(State, [u8; 32])> {
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Snapshot("truncated".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let n = u32_at(take(4)?) as usize;
    let nu = u32_at(take(4)?) as usize;
    let np = u32_at(take(4)?) as usize;
    if nu != 2 * n * n || np != 2 * n * n {
        return Err(Error::Snapshot("coefficient counts do not match N".into()));
    }
    let t = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let digest: [u8; 32] = take(32)?.try_into().unwrap();
    let mut read = |count: usize| -> Result<Vec<f64>> {
        (0..count)
            .map(|_| take(8).map(|s| f64::from_le_bytes(s.try_into().unwrap())))
            .collect()
    };
    let u = read(nu)?;
    let p = read(np)?;
    if pos != bytes.len() {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    let state = State {
        u: VelocityField::from_vec(n, u)?,
        p: PressureField::from_coeffs(n, p.into())?,
        t,
    };
    Ok((state, digest))
}
