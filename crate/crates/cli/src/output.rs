//! CSV tables and artifact files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of one column, in row order.
    pub fn column(&self, name: &str) -> Vec<&str> {
        let i = self.column_index(name).unwrap_or_else(|| panic!("no column `{name}`"));
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    /// Header line plus rows, comma separated.
    pub fn body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }

    /// Parses a body written by [`Table::body`], skipping `#` comment lines.
    pub fn parse(text: &str) -> Self {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let columns = lines.next().map(|h| h.split(',').map(str::to_string).collect()).unwrap_or_default();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Self { columns, rows }
    }
}

/// Formats an `f64` with the shortest representation that parses back exactly.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

/// A written CSV and the table it holds.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub path: PathBuf,
    pub table: Table,
    /// Human-readable summary lines.
    pub notes: Vec<String>,
}

/// Provenance comments recorded at the top of every CSV: hash and seeds, then
/// the full configuration with each line prefixed by `# config | `.
pub fn provenance(cfg: &ExperimentConfig, command: &str) -> String {
    let mut out = format!(
        "# fens {command} config_sha256={} seed={} dataset.seed={} train.rng_seed={} attack.rng_seed={} noise.rng_seed={}\n",
        cfg.experiment_hash(),
        cfg.seed,
        cfg.dataset.seed,
        cfg.train.rng_seed,
        cfg.attack.rng_seed,
        cfg.noise.rng_seed,
    );
    for line in cfg.to_toml().lines() {
        let _ = writeln!(out, "# config | {line}");
    }
    out
}

pub fn csv_path(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.out_dir.join(format!("{command}_{}.csv", cfg.tag))
}

/// Writes `<command>_<tag>.csv` and a copy of the configuration beside it.
pub fn write_artifact(
    cfg: &ExperimentConfig,
    command: &str,
    comments: &[String],
    table: Table,
    notes: Vec<String>,
) -> anyhow::Result<Artifact> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut text = provenance(cfg, command);
    for c in comments {
        let _ = writeln!(text, "# {c}");
    }
    text.push_str(&table.body());
    let path = csv_path(cfg, command);
    write(&path, text.as_bytes())?;
    write(&cfg.out_dir.join(format!("{command}_{}.toml", cfg.tag)), cfg.to_toml().as_bytes())?;
    Ok(Artifact { path, table, notes })
}

pub fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// The CSV body of a written file, without comment lines.
pub fn read_body(path: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x".into()]);
        t.push(vec![num(0.1), fixed(2.0 / 3.0, 4)]);
        let text = format!("# comment\n{}", t.body());
        assert_eq!(Table::parse(&text), t);
        assert_eq!(t.column("b"), vec!["x", "0.6667"]);
        assert_eq!(num(8.0), "8");
    }
}
