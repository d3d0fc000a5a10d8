//! Append-only record of completed sweep points with a derived CSV view.
//!
//! Every finished point, failed or not, is one JSON line. A point is keyed by
//! the configuration hash, the lattice label and the exact bits of `G/γ`, so
//! rerunning a configuration skips everything already on disk.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context};
use qdbh_core::corner::ConvergenceEntry;
use qdbh_core::liouvillian::SolverMethod;
use serde::{Deserialize, Serialize};

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 9] = [
    "size",
    "G_over_gamma",
    "parity",
    "entropy",
    "n_per_site",
    "method",
    "M",
    "residual",
    "converged",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub config_hash: String,
    /// Canonical lattice label (`"4"` or `"3x3"`).
    pub size: String,
    pub n_sites: usize,
    pub dimensionality: usize,
    pub g_over_gamma: f64,
    pub parity: Option<f64>,
    pub entropy: Option<f64>,
    pub n_per_site: Option<f64>,
    /// `max |[ρ, Π]_ij|`.
    pub parity_commutator: Option<f64>,
    /// `log D` of the basis the state lives in: the upper bound on the entropy.
    pub log_dim: Option<f64>,
    pub method: SolverMethod,
    pub m: Option<usize>,
    pub n_max: usize,
    pub residual: Option<f64>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub max_discarded_weight: Option<f64>,
    pub corner_history: Option<Vec<ConvergenceEntry>>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl PointRecord {
    pub fn key(&self) -> PointKey {
        PointKey::new(&self.config_hash, &self.size, self.g_over_gamma)
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.parity.is_some() && self.entropy.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PointKey {
    config_hash: String,
    size: String,
    g_bits: u64,
}

impl PointKey {
    pub fn new(config_hash: &str, size: &str, g: f64) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            size: size.to_string(),
            g_bits: g.to_bits(),
        }
    }
}

/// One CSV row, as written and re-read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub size: String,
    #[serde(rename = "G_over_gamma")]
    pub g_over_gamma: f64,
    pub parity: Option<f64>,
    pub entropy: Option<f64>,
    pub n_per_site: Option<f64>,
    pub method: SolverMethod,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub residual: Option<f64>,
    pub converged: bool,
}

impl From<&PointRecord> for CsvRow {
    fn from(r: &PointRecord) -> Self {
        Self {
            size: r.size.clone(),
            g_over_gamma: r.g_over_gamma,
            parity: r.parity,
            entropy: r.entropy,
            n_per_site: r.n_per_site,
            method: r.method,
            m: r.m,
            residual: r.residual,
            converged: r.converged,
        }
    }
}

pub struct SweepStore {
    jsonl: PathBuf,
    csv: PathBuf,
    writer: Mutex<File>,
}

impl SweepStore {
    /// Opens (creating if needed) `<dir>/<name>.jsonl`; the CSV lives next to it.
    pub fn open(dir: &Path, name: &str) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let jsonl = dir.join(format!("{name}.jsonl"));
        let csv = dir.join(format!("{name}.csv"));
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&jsonl)
            .with_context(|| format!("opening {}", jsonl.display()))?;
        Ok(Self {
            jsonl,
            csv,
            writer: Mutex::new(writer),
        })
    }

    pub fn jsonl_path(&self) -> &Path {
        &self.jsonl
    }

    pub fn csv_path(&self) -> &Path {
        &self.csv
    }

    /// Appends one record and flushes it, so an interrupted sweep loses at most
    /// the points still in flight.
    pub fn append(&self, record: &PointRecord) -> anyhow::Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut w = self
            .writer
            .lock()
            .map_err(|_| anyhow::anyhow!("store writer poisoned"))?;
        w.write_all(line.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// All records on disk. A truncated last line (interrupted write) is ignored.
    pub fn records(&self) -> anyhow::Result<Vec<PointRecord>> {
        read_records(&self.jsonl)
    }

    /// Keys of every recorded point of the configuration `hash`.
    pub fn completed(&self, hash: &str) -> anyhow::Result<HashSet<PointKey>> {
        Ok(self
            .records()?
            .into_iter()
            .filter(|r| r.config_hash == hash)
            .map(|r| r.key())
            .collect())
    }

    /// Latest record per point of the configuration `hash`, in file order.
    pub fn records_for(&self, hash: &str) -> anyhow::Result<Vec<PointRecord>> {
        let mut latest: HashMap<PointKey, usize> = HashMap::new();
        let all: Vec<PointRecord> = self.records()?.into_iter().filter(|r| r.config_hash == hash).collect();
        for (i, r) in all.iter().enumerate() {
            latest.insert(r.key(), i);
        }
        let keep: HashSet<usize> = latest.into_values().collect();
        Ok(all
            .into_iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(i))
            .map(|(_, r)| r)
            .collect())
    }

    /// Rewrites the CSV view from `records`, sorted by lattice then `G/γ`.
    pub fn write_csv(&self, records: &[PointRecord]) -> anyhow::Result<()> {
        write_csv(&self.csv, records)
    }
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<PointRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("opening {}", path.display())),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let n = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PointRecord>(line) {
            Ok(r) => out.push(r),
            Err(e) if i + 1 == n => log::warn!("ignoring unreadable last line of {}: {e}", path.display()),
            Err(e) => bail!("{}:{}: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn size_order(label: &str) -> (usize, String) {
    let n = qdbh_core::lattice::Shape::parse(label)
        .map(|s| s.n_sites())
        .unwrap_or(usize::MAX);
    (n, label.to_string())
}

pub fn write_csv(path: &Path, records: &[PointRecord]) -> anyhow::Result<()> {
    let mut rows: Vec<CsvRow> = records.iter().map(CsvRow::from).collect();
    rows.sort_by(|a, b| {
        size_order(&a.size)
            .cmp(&size_order(&b.size))
            .then(a.g_over_gamma.total_cmp(&b.g_over_gamma))
    });
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> anyhow::Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        bail!("{}: unexpected columns {header:?}", path.display());
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
