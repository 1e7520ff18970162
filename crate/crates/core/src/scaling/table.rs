use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Family;
use crate::stats;

/// Version written to, and required from, every table file.
pub const SCHEMA_VERSION: u32 = 1;

const TABLE_HEADER: &str = "family,N,p,r,L,R,mean,std,stderr";
const RAW_HEADER: &str = "family,N,p,r,sample,value";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Entropy,
    GradVariance,
    MutualInfo,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Entropy => "entropy",
            ValueKind::GradVariance => "grad_variance",
            ValueKind::MutualInfo => "mutual_info",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(ValueKind::Entropy),
            "grad_variance" => Ok(ValueKind::GradVariance),
            "mutual_info" => Ok(ValueKind::MutualInfo),
            other => Err(Error::Table(format!("unknown value kind `{other}`"))),
        }
    }
}

/// One `(N, p[, r])` cell of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub family: Family,
    pub n: usize,
    pub p: f64,
    /// Two-site separation, for mutual-information tables.
    pub r: Option<usize>,
    pub depth: usize,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    /// Per-realization values, when retained.
    #[serde(skip)]
    pub raw: Vec<f64>,
}

impl TableRow {
    /// Row statistics from raw per-realization values.
    pub fn from_samples(
        family: Family,
        n: usize,
        p: f64,
        r: Option<usize>,
        depth: usize,
        raw: Vec<f64>,
    ) -> Self {
        Self {
            family,
            n,
            p,
            r,
            depth,
            samples: raw.len(),
            mean: stats::mean(&raw),
            std: stats::sample_std(&raw),
            stderr: stats::standard_error(&raw),
            raw,
        }
    }
}

/// Interchange format between simulation and fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleTable {
    pub kind: ValueKind,
    pub rows: Vec<TableRow>,
    /// Free-form `# key=value` metadata, written in key order.
    pub metadata: BTreeMap<String, String>,
}

impl EnsembleTable {
    pub fn new(kind: ValueKind, rows: Vec<TableRow>) -> Self {
        Self {
            kind,
            rows,
            metadata: BTreeMap::new(),
        }
    }

    /// Checks the row invariants: at least one row, `R >= 2`, `std >= 0`,
    /// finite statistics and unique `(N, p, r)` keys.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Table("table has no rows".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for row in &self.rows {
            if row.samples < 2 {
                return Err(Error::Table(format!(
                    "row N={} p={} has R={} < 2",
                    row.n, row.p, row.samples
                )));
            }
            if !(row.std >= 0.0 && row.stderr >= 0.0 && row.mean.is_finite()) {
                return Err(Error::Table(format!("row N={} p={} has invalid statistics", row.n, row.p)));
            }
            if !seen.insert((row.n, row.p.to_bits(), row.r)) {
                return Err(Error::Table(format!(
                    "duplicate row N={} p={} r={:?}",
                    row.n, row.p, row.r
                )));
            }
        }
        Ok(())
    }

    /// Distinct system sizes, ascending.
    pub fn sizes(&self) -> Vec<usize> {
        let mut n: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    /// Distinct measurement rates, ascending.
    pub fn p_values(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.rows.iter().map(|r| r.p).collect();
        p.sort_by(f64::total_cmp);
        p.dedup();
        p
    }

    /// Rows at size `n` (and separation `r`, if given), sorted by `p`.
    pub fn curve(&self, n: usize, r: Option<usize>) -> Vec<&TableRow> {
        let mut rows: Vec<&TableRow> = self
            .rows
            .iter()
            .filter(|row| row.n == n && (r.is_none() || row.r == r))
            .collect();
        rows.sort_by(|a, b| a.p.total_cmp(&b.p));
        rows
    }

    /// Rows restricted to sizes accepted by `keep`.
    pub fn filter_sizes(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            kind: self.kind,
            rows: self.rows.iter().filter(|r| keep(r.n)).cloned().collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn has_raw(&self) -> bool {
        self.rows.iter().all(|r| r.raw.len() >= 2)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.preamble();
        out.push_str(TABLE_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.family,
                row.n,
                row.p,
                opt(row.r),
                row.depth,
                row.samples,
                row.mean,
                row.std,
                row.stderr
            );
        }
        out
    }

    /// Per-realization values, one line per sample.
    pub fn raw_to_csv(&self) -> String {
        let mut out = self.preamble();
        out.push_str(RAW_HEADER);
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.raw.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{},{}", row.family, row.n, row.p, opt(row.r), k, v);
            }
        }
        out
    }

    fn preamble(&self) -> String {
        let mut out = format!("# schema_version={SCHEMA_VERSION}\n# kind={}\n", self.kind.name());
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (kind, metadata, body) = parse_preamble(text, TABLE_HEADER)?;
        let rows = body
            .map(|(line_no, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 9 {
                    return Err(Error::Table(format!("line {line_no}: expected 9 fields")));
                }
                let bad = |what: &str| Error::Table(format!("line {line_no}: bad {what}"));
                Ok(TableRow {
                    family: f[0].parse().map_err(|_| bad("family"))?,
                    n: f[1].parse().map_err(|_| bad("N"))?,
                    p: f[2].parse().map_err(|_| bad("p"))?,
                    r: parse_opt(f[3]).map_err(|_| bad("r"))?,
                    depth: f[4].parse().map_err(|_| bad("L"))?,
                    samples: f[5].parse().map_err(|_| bad("R"))?,
                    mean: f[6].parse().map_err(|_| bad("mean"))?,
                    std: f[7].parse().map_err(|_| bad("std"))?,
                    stderr: f[8].parse().map_err(|_| bad("stderr"))?,
                    raw: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = Self {
            kind,
            rows,
            metadata,
        };
        table.validate()?;
        Ok(table)
    }

    /// Attaches per-realization values from a raw file to matching rows.
    pub fn attach_raw_csv(&mut self, text: &str) -> Result<()> {
        let (kind, _, body) = parse_preamble(text, RAW_HEADER)?;
        if kind != self.kind {
            return Err(Error::Table(format!(
                "raw file holds {} values, table holds {}",
                kind.name(),
                self.kind.name()
            )));
        }
        let mut raw: BTreeMap<(usize, u64, Option<usize>), Vec<f64>> = BTreeMap::new();
        for (line_no, line) in body {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Table(format!("raw line {line_no} malformed"));
            if f.len() != 6 {
                return Err(bad());
            }
            let n: usize = f[1].parse().map_err(|_| bad())?;
            let p: f64 = f[2].parse().map_err(|_| bad())?;
            let r = parse_opt(f[3]).map_err(|_| bad())?;
            let v: f64 = f[5].parse().map_err(|_| bad())?;
            raw.entry((n, p.to_bits(), r)).or_default().push(v);
        }
        for row in &mut self.rows {
            row.raw = raw.remove(&(row.n, row.p.to_bits(), row.r)).ok_or_else(|| {
                Error::Table(format!("no raw samples for N={} p={} r={:?}", row.n, row.p, row.r))
            })?;
            if row.raw.len() != row.samples {
                return Err(Error::Table(format!(
                    "raw sample count {} disagrees with R={} at N={} p={}",
                    row.raw.len(),
                    row.samples,
                    row.n,
                    row.p
                )));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

type Body<'a> = Box<dyn Iterator<Item = (usize, &'a str)> + 'a>;

fn parse_preamble<'a>(
    text: &'a str,
    header: &str,
) -> Result<(ValueKind, BTreeMap<String, String>, Body<'a>)> {
    let mut metadata = BTreeMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut header_seen = false;
    for (line_no, line) in lines.by_ref() {
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Table(format!("line {line_no}: malformed metadata")))?;
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        } else if line.is_empty() {
            continue;
        } else if line == header {
            header_seen = true;
            break;
        } else {
            return Err(Error::Table(format!("line {line_no}: expected header `{header}`")));
        }
    }
    let version = metadata
        .remove("schema_version")
        .ok_or_else(|| Error::Table("missing schema_version".into()))?;
    if version != SCHEMA_VERSION.to_string() {
        return Err(Error::Table(format!("unsupported schema_version {version}")));
    }
    let kind = ValueKind::parse(
        &metadata
            .remove("kind")
            .ok_or_else(|| Error::Table("missing kind".into()))?,
    )?;
    if !header_seen {
        return Err(Error::Table("missing header row".into()));
    }
    Ok((kind, metadata, Box::new(lines.filter(|(_, l)| !l.is_empty()))))
}

fn opt(r: Option<usize>) -> String {
    r.map(|r| r.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> std::result::Result<Option<usize>, std::num::ParseIntError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}
