//! CSV reading and writing against the schema registry.
//!
//! Files are named `<table>.csv` and carry a header row. Extra columns are
//! ignored; missing registry columns are an error. Strings are encoded with the
//! registry dictionary, extended in first-seen order for unknown values.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::schema::{self, format_date, parse_date, registry};
use super::{Dataset, Manifest};
use crate::error::{Error, Result};
use crate::table::{Column, ColumnData, ColumnTable, DataType, Value};

pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Writes a table with a header row. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_csv(table: &ColumnTable, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_csv_to(table, file).map_err(|e| io_err(path, e))
}

/// Same as [`write_csv`], to any writer.
pub fn write_csv_to<W: std::io::Write>(table: &ColumnTable, out: W) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(out);
    let err = |e: ::csv::Error| Error::Io(e.to_string());
    w.write_record(table.column_names()).map_err(err)?;
    let mut record = Vec::with_capacity(table.num_columns());
    for r in 0..table.num_rows() {
        record.clear();
        for c in 0..table.num_columns() {
            record.push(match table.value(r, c) {
                Value::Int(x) => x.to_string(),
                Value::Float(x) => x.to_string(),
                Value::Date(d) => format_date(d),
                Value::Str(s) => s.to_string(),
            });
        }
        w.write_record(&record).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

enum Builder {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Date(Vec<i32>),
    Dict {
        codes: Vec<i32>,
        values: Vec<String>,
        index: HashMap<String, i32>,
    },
}

impl Builder {
    fn push(&mut self, cell: &str) -> std::result::Result<(), String> {
        match self {
            Builder::Int(v) => v.push(cell.trim().parse().map_err(|_| format!("bad integer {cell:?}"))?),
            Builder::Float(v) => v.push(cell.trim().parse().map_err(|_| format!("bad number {cell:?}"))?),
            Builder::Date(v) => v.push(parse_date(cell).ok_or_else(|| format!("bad date {cell:?}"))?),
            Builder::Dict { codes, values, index } => {
                let code = match index.get(cell) {
                    Some(&c) => c,
                    None => {
                        values.push(cell.to_string());
                        let c = values.len() as i32 - 1;
                        index.insert(cell.to_string(), c);
                        c
                    }
                };
                codes.push(code);
            }
        }
        Ok(())
    }

    fn finish(self, canonical: Option<crate::table::Dictionary>) -> ColumnData {
        match self {
            Builder::Int(v) => ColumnData::Int64(v),
            Builder::Float(v) => ColumnData::Float64(v),
            Builder::Date(v) => ColumnData::Date(v),
            Builder::Dict { codes, values, .. } => {
                let canonical = canonical.expect("string columns have a dictionary");
                // Keep the shared Arc when nothing new was seen.
                let dict = if values.len() == canonical.len() {
                    canonical
                } else {
                    Arc::new(values)
                };
                ColumnData::Dict { codes, dict }
            }
        }
    }
}

/// Reads one registry table from a CSV file.
pub fn read_table_csv(table_name: &str, path: &Path) -> Result<ColumnTable> {
    let spec = registry().table(table_name)?;
    let shown = path.display().to_string();
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let mut positions = Vec::with_capacity(spec.columns.len());
    let mut builders = Vec::with_capacity(spec.columns.len());
    for c in &spec.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == c.name)
            .ok_or_else(|| Error::Parse {
                path: shown.clone(),
                line: 1,
                message: format!("missing required column {}", c.name),
            })?;
        positions.push(pos);
        builders.push(match c.data_type {
            DataType::Int64 => Builder::Int(Vec::new()),
            DataType::Float64 => Builder::Float(Vec::new()),
            DataType::Date => Builder::Date(Vec::new()),
            DataType::Dict => {
                let values: Vec<String> = c.dict.as_ref().expect("dictionary").as_ref().clone();
                let index = values.iter().enumerate().map(|(i, s)| (s.clone(), i as i32)).collect();
                Builder::Dict {
                    codes: Vec::new(),
                    values,
                    index,
                }
            }
        });
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: shown.clone(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for ((b, &pos), c) in builders.iter_mut().zip(&positions).zip(&spec.columns) {
            let cell = rec.get(pos).ok_or_else(|| Error::Parse {
                path: shown.clone(),
                line,
                message: format!("row has no value for {}", c.name),
            })?;
            b.push(cell).map_err(|m| Error::Parse {
                path: shown.clone(),
                line,
                message: format!("{}: {m}", c.name),
            })?;
        }
    }
    let columns = builders
        .into_iter()
        .zip(&spec.columns)
        .map(|(b, c)| Column::new(c.name, b.finish(c.dict.clone())))
        .collect();
    ColumnTable::new(columns)
}

fn table_name_of(path: &Path) -> Result<String> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("cannot name a table after {}", path.display())))?;
    registry().table(stem)?;
    Ok(stem.to_string())
}

/// Loads `<table>.csv` files. Scale, skew and seed come from a manifest in the
/// same directory when there is one, and are zero otherwise.
pub fn load_csv(paths: &[PathBuf]) -> Result<Dataset> {
    let mut tables = BTreeMap::new();
    for p in paths {
        let name = table_name_of(p)?;
        tables.insert(name.clone(), read_table_csv(&name, p)?);
    }
    let manifest = paths
        .first()
        .and_then(|p| p.parent())
        .map(|d| d.join(MANIFEST_FILE))
        .filter(|m| m.exists())
        .map(|m| read_manifest(&m))
        .transpose()?;
    let (sf, skew, seed) = manifest.map_or((0.0, 0.0, 0), |m| (m.sf, m.skew, m.seed));
    Ok(Dataset::new(sf, skew, seed, tables))
}

/// Loads every registry table present as CSV in `dir`.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let paths: Vec<PathBuf> = schema::TABLE_NAMES
        .iter()
        .map(|t| dir.join(format!("{t}.csv")))
        .filter(|p| p.exists())
        .collect();
    if paths.is_empty() {
        return Err(Error::Io(format!("{}: no table CSV files found", dir.display())));
    }
    load_csv(&paths)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes every table as `<dir>/<table>.csv` plus `manifest.json`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, table) in ds.tables() {
        write_csv(table, &dir.join(format!("{name}.csv")))?;
    }
    let manifest = serde_json::to_string_pretty(&ds.manifest())?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| io_err(&path, e))?;
    Ok(())
}
