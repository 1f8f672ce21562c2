use crate::config::Resolved;
use scalar_closure::experiments::Outcome;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub criterion: usize,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Every parameter used, defaults included.
    pub config: serde_json::Value,
    pub wall_time_seconds: f64,
    pub outputs: Vec<Output>,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Output {
    pub file: String,
    pub sha256: String,
}

/// A check as stored on disk; non-finite measurements become null.
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub measured: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write the CSV tables and the manifest; returns the manifest path.
pub fn write(resolved: &Resolved, outcome: &Outcome, wall: f64) -> Result<PathBuf, String> {
    let config = serde_json::to_value(resolved).map_err(|e| e.to_string())?;
    let canonical = serde_json::to_string(&config).map_err(|e| e.to_string())?;
    fs::create_dir_all(&resolved.out).map_err(|e| format!("cannot create {}: {e}", resolved.out.display()))?;
    let mut outputs = Vec::new();
    for table in &outcome.tables {
        let path = resolved.out.join(&table.name);
        fs::write(&path, &table.csv).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        outputs.push(Output { file: table.name.clone(), sha256: sha256_hex(table.csv.as_bytes()) });
    }
    let manifest = Manifest {
        experiment: resolved.experiment.to_string(),
        criterion: resolved.kind.criterion(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: resolved.seed,
        config_sha256: sha256_hex(canonical.as_bytes()),
        config,
        wall_time_seconds: wall,
        outputs,
        checks: outcome
            .checks
            .iter()
            .map(|c| CheckRecord {
                name: c.name.clone(),
                measured: c.measured.is_finite().then_some(c.measured),
                expected: c.expected,
                tolerance: c.tolerance,
                passed: c.passed,
            })
            .collect(),
        passed: outcome.passed(),
    };
    let path = resolved.out.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    fs::write(&path, text + "\n").map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

/// Summary table for a manifest and whether every check passed. Outputs listed in the
/// manifest must exist next to it with matching checksums.
pub fn report(path: &Path) -> Result<(String, bool), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read manifest {}: {e}", path.display()))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| format!("malformed manifest {}: {e}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for out in &m.outputs {
        let file = dir.join(&out.file);
        let bytes = fs::read(&file).map_err(|e| format!("missing output {}: {e}", file.display()))?;
        if sha256_hex(&bytes) != out.sha256 {
            return Err(format!("output {} does not match its recorded checksum", file.display()));
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, "experiment  {} (criterion {})", m.experiment, m.criterion);
    let _ = writeln!(s, "version     {}", m.version);
    let _ = writeln!(s, "seed        {}", m.seed);
    let _ = writeln!(s, "config      sha256:{}", m.config_sha256);
    let _ = writeln!(s, "outputs     {} verified", m.outputs.len());
    let _ = writeln!(s);
    let width = m.checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(5).max(5);
    let _ = writeln!(s, "   {:<width$}  {:>14}  {:>14}  {:>10}", "check", "measured", "expected", "tolerance");
    let mut failed = 0;
    for c in &m.checks {
        let mark = if c.passed { " ✓ " } else { ">✗ " };
        if !c.passed {
            failed += 1;
        }
        let measured = c.measured.map_or("non-finite".to_string(), |v| format!("{v:.6e}"));
        let pad = width - c.name.chars().count();
        let _ = writeln!(
            s,
            "{mark}{}{}  {measured:>14}  {:>14.6e}  {:>10.1e}",
            c.name,
            " ".repeat(pad),
            c.expected,
            c.tolerance
        );
    }
    let _ = writeln!(s);
    if failed == 0 {
        let _ = writeln!(s, "PASS ({} checks)", m.checks.len());
    } else {
        let _ = writeln!(s, "FAIL ({failed} of {} checks failed)", m.checks.len());
    }
    Ok((s, failed == 0))
}
