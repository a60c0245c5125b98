//! Error-report assembly and CSV emission.
//!
//! A report holds one row per test-grid parameter with the relative error
//! of each reduced model; divergence is carried as `+inf`. Three CSV
//! artifacts are derived from it: a per-parameter table, a per-split
//! summary of order statistics, and (for basis-size sweeps) a per-size
//! summary. CSV is the exchange contract — plotting is left to external
//! tools — so all numbers are written with Rust's shortest round-trip
//! float formatting to keep the bytes deterministic and parseable.

use std::path::Path;

use romkit::{Error, Result};

use crate::metrics::{error_statistics, ErrorStats};

/// Which half of the test grid a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Parameter is on the training grid (snapshots were collected there).
    Train,
    /// Parameter is on the testing grid only.
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split '{other}'"))),
        }
    }
}

/// The reduced-model families a benchmark can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rom,
    Deim,
    RomNn,
}

/// Column order of the per-method fields in every CSV.
pub const METHODS: [Method; 3] = [Method::Rom, Method::Deim, Method::RomNn];

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rom => "rom",
            Method::Deim => "deim",
            Method::RomNn => "romnn",
        }
    }
}

/// Errors of every evaluated method at one test-grid parameter.
///
/// `None` means the method was not run; `+inf` means it diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRow {
    pub mu: Vec<f64>,
    pub split: Split,
    pub eps_rom: Option<f64>,
    pub eps_deim: Option<f64>,
    pub eps_romnn: Option<f64>,
}

impl ParamRow {
    pub fn eps(&self, method: Method) -> Option<f64> {
        match method {
            Method::Rom => self.eps_rom,
            Method::Deim => self.eps_deim,
            Method::RomNn => self.eps_romnn,
        }
    }
}

/// Full benchmark outcome: one row per test-grid parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    param_dim: usize,
    rows: Vec<ParamRow>,
}

impl ErrorReport {
    pub fn new(param_dim: usize) -> Self {
        ErrorReport { param_dim, rows: Vec::new() }
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn rows(&self) -> &[ParamRow] {
        &self.rows
    }

    pub fn push(&mut self, row: ParamRow) -> Result<()> {
        if row.mu.len() != self.param_dim {
            return Err(Error::DimensionMismatch(format!(
                "report rows have {} parameter components, got {}",
                self.param_dim,
                row.mu.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// All recorded errors of `method` on `split` (divergence included
    /// as `+inf`; unevaluated rows skipped).
    pub fn split_errors(&self, split: Split, method: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.split == split)
            .filter_map(|r| r.eps(method))
            .collect()
    }

    /// All recorded errors of `method` across both splits.
    pub fn all_errors(&self, method: Method) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.eps(method)).collect()
    }

    pub fn split_stats(&self, split: Split, method: Method) -> ErrorStats {
        error_statistics(&self.split_errors(split, method))
    }

    /// Counts rows where both the network and interpolation errors are
    /// finite, returning `(rows where the network is strictly better,
    /// comparable rows)`.
    pub fn network_vs_interpolation(&self) -> (usize, usize) {
        let mut better = 0;
        let mut comparable = 0;
        for row in &self.rows {
            if let (Some(en), Some(ed)) = (row.eps_romnn, row.eps_deim) {
                if en.is_finite() && ed.is_finite() {
                    comparable += 1;
                    if en < ed {
                        better += 1;
                    }
                }
            }
        }
        (better, comparable)
    }

    fn per_param_header(&self) -> Vec<String> {
        let mut header: Vec<String> =
            (1..=self.param_dim).map(|i| format!("mu_{i}")).collect();
        header.push("split".into());
        for m in METHODS {
            header.push(format!("eps_{}", m.as_str()));
        }
        for m in METHODS {
            header.push(format!("stable_{}", m.as_str()));
        }
        header
    }

    /// Per-parameter CSV: one row per test point with the error and a
    /// stability flag for each method. Unevaluated methods leave both
    /// cells empty; divergence is `inf` / `false`.
    pub fn per_param_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.per_param_header()).expect("in-memory csv");
        for row in &self.rows {
            let mut record: Vec<String> =
                row.mu.iter().map(|v| format!("{v}")).collect();
            record.push(row.split.as_str().into());
            for m in METHODS {
                record.push(match row.eps(m) {
                    Some(e) => format!("{e}"),
                    None => String::new(),
                });
            }
            for m in METHODS {
                record.push(match row.eps(m) {
                    Some(e) => format!("{}", e.is_finite()),
                    None => String::new(),
                });
            }
            w.write_record(record).expect("in-memory csv");
        }
        finish_csv(w)
    }

    /// Parses a per-parameter CSV back into a report (inverse of
    /// [`per_param_csv`](Self::per_param_csv); stability flags are
    /// checked for consistency rather than stored).
    pub fn parse_per_param_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Format(format!("csv header: {e}")))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let d = header
            .iter()
            .take_while(|name| name.starts_with("mu_"))
            .count();
        let mut report = ErrorReport::new(d);
        if header != report.per_param_header() {
            return Err(Error::Format(format!(
                "unexpected per-parameter csv header: {header:?}"
            )));
        }
        for record in reader.records() {
            let record = record.map_err(|e| Error::Format(format!("csv row: {e}")))?;
            let fields: Vec<&str> = record.iter().collect();
            if fields.len() != d + 7 {
                return Err(Error::Format(format!(
                    "expected {} csv fields, got {}",
                    d + 7,
                    fields.len()
                )));
            }
            let mu = fields[..d]
                .iter()
                .map(|s| parse_f64(s))
                .collect::<Result<Vec<f64>>>()?;
            let split = Split::parse(fields[d])?;
            let mut eps = [None, None, None];
            for (i, slot) in eps.iter_mut().enumerate() {
                let eps_field = fields[d + 1 + i];
                let stable_field = fields[d + 4 + i];
                if eps_field.is_empty() {
                    if !stable_field.is_empty() {
                        return Err(Error::Format(
                            "stability flag present without an error value".into(),
                        ));
                    }
                    continue;
                }
                let value = parse_f64(eps_field)?;
                let expected = format!("{}", value.is_finite());
                if stable_field != expected {
                    return Err(Error::Format(format!(
                        "stability flag '{stable_field}' inconsistent with error {value}"
                    )));
                }
                *slot = Some(value);
            }
            report.push(ParamRow {
                mu,
                split,
                eps_rom: eps[0],
                eps_deim: eps[1],
                eps_romnn: eps[2],
            })?;
        }
        Ok(report)
    }

    /// Summary CSV: order statistics per split and method. Methods that
    /// were never evaluated are omitted; all-diverged combinations keep
    /// their row with empty statistic cells.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["split", "method", "min", "max", "median", "diverged", "count"])
            .expect("in-memory csv");
        for split in [Split::Train, Split::Test] {
            for method in METHODS {
                let errors = self.split_errors(split, method);
                if errors.is_empty() {
                    continue;
                }
                let stats = error_statistics(&errors);
                w.write_record([
                    split.as_str().to_string(),
                    method.as_str().to_string(),
                    opt_cell(stats.min),
                    opt_cell(stats.max),
                    opt_cell(stats.median),
                    stats.n_diverged.to_string(),
                    stats.n_total.to_string(),
                ])
                .expect("in-memory csv");
            }
        }
        finish_csv(w)
    }

    pub fn write_per_param(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.per_param_csv())?;
        Ok(())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.summary_csv())?;
        Ok(())
    }
}

/// Basis-size sweep summary: order statistics of each method over the
/// whole test grid, one block of rows per basis size.
pub fn sweep_csv(entries: &[(usize, &ErrorReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k_u", "method", "min", "max", "median", "diverged", "count"])
        .expect("in-memory csv");
    for (k_u, report) in entries {
        for method in METHODS {
            let errors = report.all_errors(method);
            if errors.is_empty() {
                continue;
            }
            let stats = error_statistics(&errors);
            w.write_record([
                k_u.to_string(),
                method.as_str().to_string(),
                opt_cell(stats.min),
                opt_cell(stats.max),
                opt_cell(stats.median),
                stats.n_diverged.to_string(),
                stats.n_total.to_string(),
            ])
            .expect("in-memory csv");
        }
    }
    finish_csv(w)
}

pub fn write_sweep_csv(path: &Path, entries: &[(usize, &ErrorReport)]) -> Result<()> {
    std::fs::write(path, sweep_csv(entries))?;
    Ok(())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory csv");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

fn opt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("cannot parse '{s}' as a number")))
}
