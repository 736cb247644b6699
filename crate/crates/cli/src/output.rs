//! Tabular output (CSV or JSON), read-back and self-audit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Number, Value};

use crate::config::OutputFormat;
use crate::engine::TimeSeriesRow;
use crate::error::CliError;

pub const ROW_COLUMNS: [&str; 20] = [
    "t",
    "gamma_a",
    "gamma_b_abs",
    "gamma_b_arg",
    "p_ee",
    "p_eg",
    "p_ge",
    "p_gg",
    "eta",
    "lam_e_plus",
    "lam_e_minus",
    "lam_g_plus",
    "lam_g_minus",
    "purity_e",
    "purity_g",
    "defect_e",
    "defect_g",
    "n_field",
    "n_bath",
    "recurrence_warning",
];

const IDENTITY_TOL: f64 = 1e-9;
const CONSERVATION_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub enum Cell {
    Num(f64),
    Bool(bool),
}

impl PartialEq for Cell {
    // bitwise, so that the audit detects any round-trip loss
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits(),
            (Cell::Bool(a), Cell::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Cell {
    fn num(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Bool(_) => None,
        }
    }
}

fn row_cells(r: &TimeSeriesRow) -> Vec<Cell> {
    use Cell::Num;
    vec![
        Num(r.t),
        Num(r.gamma_a),
        Num(r.gamma_b_abs),
        Num(r.gamma_b_arg),
        Num(r.p_ee),
        Num(r.p_eg),
        Num(r.p_ge),
        Num(r.p_gg),
        Num(r.eta),
        Num(r.lam_e_plus),
        Num(r.lam_e_minus),
        Num(r.lam_g_plus),
        Num(r.lam_g_minus),
        Num(r.purity_e),
        Num(r.purity_g),
        Num(r.defect_e),
        Num(r.defect_g),
        Num(r.n_field),
        Num(r.n_bath),
        Cell::Bool(r.recurrence_warning),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn from_rows(rows: &[TimeSeriesRow]) -> Self {
        Self {
            columns: ROW_COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows: rows.iter().map(row_cells).collect(),
        }
    }

    /// Side-by-side rows of two engines on the same grid: `t` once, every
    /// other column twice with the given suffixes.
    pub fn joint(left: &[TimeSeriesRow], right: &[TimeSeriesRow], suffixes: [&str; 2]) -> Self {
        let mut columns = vec!["t".to_string()];
        for c in &ROW_COLUMNS[1..] {
            for s in suffixes {
                columns.push(format!("{c}{s}"));
            }
        }
        let rows = left
            .iter()
            .zip(right)
            .map(|(a, b)| {
                let (ca, cb) = (row_cells(a), row_cells(b));
                let mut out = vec![ca[0]];
                for k in 1..ca.len() {
                    out.push(ca[k]);
                    out.push(cb[k]);
                }
                out
            })
            .collect();
        Self { columns, rows }
    }

    /// Prepends a constant-per-block column.
    pub fn tagged(blocks: &[(f64, Table)], name: &str) -> Self {
        let columns = std::iter::once(name.to_string())
            .chain(blocks.first().map(|b| b.1.columns.clone()).unwrap_or_default())
            .collect();
        let rows = blocks
            .iter()
            .flat_map(|(v, t)| {
                t.rows.iter().map(move |r| std::iter::once(Cell::Num(*v)).chain(r.iter().copied()).collect())
            })
            .collect();
        Self { columns, rows }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        // 17 significant digits
        Cell::Num(x) => format!("{x:.16e}"),
        Cell::Bool(b) => b.to_string(),
    }
}

fn parse_cell(s: &str) -> Option<Cell> {
    match s {
        "true" => Some(Cell::Bool(true)),
        "false" => Some(Cell::Bool(false)),
        _ => s.parse::<f64>().ok().map(Cell::Num),
    }
}

pub fn write_table(table: &Table, format: OutputFormat, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let io = |e: std::io::Error| CliError::io(path, e);
    let file = File::create(path).map_err(io)?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            let csv_err = |e: csv::Error| CliError::io(path, e.into());
            w.write_record(&table.columns).map_err(csv_err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(format_cell)).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        OutputFormat::Json => {
            let mut values = Vec::with_capacity(table.rows.len());
            for row in &table.rows {
                let mut obj = Map::new();
                for (name, cell) in table.columns.iter().zip(row) {
                    let v = match cell {
                        Cell::Num(x) => Value::Number(
                            Number::from_f64(*x)
                                .ok_or_else(|| CliError::audit(path, format!("non-finite value in column {name}")))?,
                        ),
                        Cell::Bool(b) => Value::Bool(*b),
                    };
                    obj.insert(name.clone(), v);
                }
                values.push(Value::Object(obj));
            }
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &values).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_table(format: OutputFormat, path: &Path) -> Result<Table, CliError> {
    let bad = |msg: String| CliError::audit(path, msg);
    match format {
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
            let columns: Vec<String> =
                r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
            let mut rows = Vec::new();
            for (i, rec) in r.records().enumerate() {
                let rec = rec.map_err(|e| bad(e.to_string()))?;
                let row = rec
                    .iter()
                    .map(|s| parse_cell(s).ok_or_else(|| bad(format!("row {i}: unparsable cell {s:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                rows.push(row);
            }
            Ok(Table { columns, rows })
        }
        OutputFormat::Json => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let values: Vec<Map<String, Value>> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let columns: Vec<String> = values.first().map(|m| m.keys().cloned().collect()).unwrap_or_default();
            let mut rows = Vec::new();
            for (i, obj) in values.iter().enumerate() {
                let row = obj
                    .values()
                    .map(|v| match v {
                        Value::Bool(b) => Ok(Cell::Bool(*b)),
                        Value::Number(n) => {
                            n.as_f64().map(Cell::Num).ok_or_else(|| bad(format!("row {i}: bad number")))
                        }
                        other => Err(bad(format!("row {i}: unexpected value {other}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                rows.push(row);
            }
            Ok(Table { columns, rows })
        }
    }
}

/// Which column groups obey excitation-number conservation.
#[derive(Clone, Debug, Default)]
pub struct AuditRules {
    /// Column suffixes ("" for plain rows) whose `n_field + n_bath` must stay
    /// constant within each block.
    pub conserving: Vec<String>,
    /// Column splitting the table into independent blocks (sweeps).
    pub block_column: Option<String>,
}

/// Checks per-row identities on an in-memory table.
pub fn check_invariants(table: &Table, rules: &AuditRules) -> Result<(), String> {
    let suffixes: Vec<String> = ["", "_micro", "_me"]
        .iter()
        .map(|s| s.to_string())
        .filter(|s| table.column(&format!("p_ee{s}")).is_some())
        .collect();
    let block = rules.block_column.as_deref().and_then(|c| table.column(c));
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != table.columns.len() {
            return Err(format!("row {i}: {} cells for {} columns", row.len(), table.columns.len()));
        }
        for (name, cell) in table.columns.iter().zip(row) {
            if let Cell::Num(x) = cell {
                if !x.is_finite() {
                    return Err(format!("row {i}: {name} is not finite"));
                }
            }
        }
        for s in &suffixes {
            let get =
                |c: &str| row[table.column(&format!("{c}{s}")).expect("column present")].num().unwrap_or(f64::NAN);
            let (p_ee, p_eg, p_ge, p_gg, eta) = (get("p_ee"), get("p_eg"), get("p_ge"), get("p_gg"), get("eta"));
            if !((p_ee + p_eg - 1.0).abs() <= IDENTITY_TOL) {
                return Err(format!("row {i}: p_ee{s} + p_eg{s} = {}", p_ee + p_eg));
            }
            if !((p_ge + p_gg - 1.0).abs() <= IDENTITY_TOL) {
                return Err(format!("row {i}: p_ge{s} + p_gg{s} = {}", p_ge + p_gg));
            }
            if !((eta - (p_ee - p_ge)).abs() <= IDENTITY_TOL) {
                return Err(format!("row {i}: eta{s} != p_ee{s} - p_ge{s}"));
            }
        }
    }
    for s in &rules.conserving {
        let (Some(nf), Some(nb)) = (table.column(&format!("n_field{s}")), table.column(&format!("n_bath{s}"))) else {
            continue;
        };
        let mut reference: Option<(Option<u64>, f64)> = None;
        for (i, row) in table.rows.iter().enumerate() {
            let key = block.and_then(|b| row[b].num()).map(f64::to_bits);
            let total = row[nf].num().unwrap_or(f64::NAN) + row[nb].num().unwrap_or(f64::NAN);
            match reference {
                Some((k, n0)) if k == key => {
                    if !((total - n0).abs() <= CONSERVATION_TOL) {
                        return Err(format!("row {i}: n_field{s} + n_bath{s} = {total}, expected {n0}"));
                    }
                }
                _ => reference = Some((key, total)),
            }
        }
    }
    Ok(())
}

/// Writes the table, then reads the file back and checks that it reproduces
/// the table exactly and satisfies the row invariants.
pub fn write_and_audit(table: &Table, format: OutputFormat, path: &Path, rules: &AuditRules) -> Result<(), CliError> {
    check_invariants(table, rules).map_err(|m| CliError::audit(path, m))?;
    write_table(table, format, path)?;
    let back = read_table(format, path)?;
    if back.columns != table.columns {
        return Err(CliError::audit(path, "column names differ after read-back"));
    }
    if back.rows.len() != table.rows.len() {
        return Err(CliError::audit(path, format!("{} rows read back, {} written", back.rows.len(), table.rows.len())));
    }
    if let Some(i) = back.rows.iter().zip(&table.rows).position(|(a, b)| a != b) {
        return Err(CliError::audit(path, format!("row {i} does not round-trip")));
    }
    check_invariants(&back, rules).map_err(|m| CliError::audit(path, m))
}
