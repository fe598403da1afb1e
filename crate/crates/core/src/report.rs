//! Self-describing, byte-deterministic report files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Objective, RunConfig};
use crate::error::{Error, Result};
use crate::simulation::RoundRecord;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub objective: Objective,
    /// Penalty scale applied for negative-control runs; 1 otherwise.
    pub penalty_scale: f64,
    pub warnings: Vec<String>,
}

impl ReportMeta {
    pub fn new(command: &str, cfg: &RunConfig, penalty_scale: f64) -> Self {
        ReportMeta {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config_sha256: cfg.sha256.clone(),
            seed: cfg.file.seed,
            objective: cfg.file.objective,
            penalty_scale,
            warnings: cfg.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub meta: ReportMeta,
    pub result: T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value))
}

/// CSV trace with columns `round, seed, delta, p_1.., pi_1.., residual, flags`.
pub fn rounds_csv(
    records: &[RoundRecord],
    n_buyers: usize,
    n_contributors: usize,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["round".to_string(), "seed".into(), "delta".into()];
    header.extend((1..=n_buyers).map(|j| format!("p_{j}")));
    header.extend((1..=n_contributors).map(|i| format!("pi_{i}")));
    header.extend(["residual".into(), "flags".into()]);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.round.to_string(), r.seed.to_string(), r.delta.to_string()];
        row.extend(r.prices.iter().map(f64::to_string));
        row.extend(r.payments.iter().map(f64::to_string));
        row.extend([r.residual.to_string(), r.flags.clone()]);
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: PathBuf::from("<rounds.csv>"),
        source: e.into_error(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.json");
        write_json(&p, &vec![1.5, 2.0]).unwrap();
        write_json(&p, &vec![3.0]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "[\n  3.0\n]\n");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("nested"))
            .unwrap()
            .collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn csv_columns() {
        let r = RoundRecord {
            round: 0,
            seed: 9,
            delta: 0.5,
            prices: vec![1.0, 2.0],
            payments: vec![1.5, 1.5, 0.0],
            residual: 0.0,
            flags: String::new(),
        };
        let text = String::from_utf8(rounds_csv(&[r], 2, 3).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "round,seed,delta,p_1,p_2,pi_1,pi_2,pi_3,residual,flags"
        );
        assert_eq!(lines.next().unwrap(), "0,9,0.5,1,2,1.5,1.5,0,0,");
    }
}
