//! Columnar tables with fixed-width column types.
//!
//! Strings are dictionary-encoded: a column holds `i32` codes into a shared
//! `Arc<Vec<String>>`. Tables built from the same schema registry share their
//! dictionaries, so codes can be compared and moved without translation.

use std::collections::HashMap;
use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Int64,
    Float64,
    /// Days since 1970-01-01.
    Date,
    Dict,
}

impl DataType {
    /// Bytes per value on the wire and in memory.
    pub fn width(self) -> usize {
        match self {
            DataType::Int64 | DataType::Float64 => 8,
            DataType::Date | DataType::Dict => 4,
        }
    }

    fn code(self) -> u8 {
        match self {
            DataType::Int64 => 1,
            DataType::Float64 => 2,
            DataType::Date => 3,
            DataType::Dict => 4,
        }
    }
}

pub type Dictionary = Arc<Vec<String>>;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Date(Vec<i32>),
    Dict { codes: Vec<i32>, dict: Dictionary },
}

/// A single cell, borrowed from its column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Int(i64),
    Float(f64),
    Date(i32),
    Str(&'a str),
}

impl ColumnData {
    pub fn data_type(&self) -> DataType {
        match self {
            ColumnData::Int64(_) => DataType::Int64,
            ColumnData::Float64(_) => DataType::Float64,
            ColumnData::Date(_) => DataType::Date,
            ColumnData::Dict { .. } => DataType::Dict,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Date(v) => v.len(),
            ColumnData::Dict { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, row: usize) -> Value<'_> {
        match self {
            ColumnData::Int64(v) => Value::Int(v[row]),
            ColumnData::Float64(v) => Value::Float(v[row]),
            ColumnData::Date(v) => Value::Date(v[row]),
            ColumnData::Dict { codes, dict } => Value::Str(&dict[codes[row] as usize]),
        }
    }

    /// Same type (and dictionary), no rows.
    pub fn empty_like(&self) -> ColumnData {
        match self {
            ColumnData::Int64(_) => ColumnData::Int64(Vec::new()),
            ColumnData::Float64(_) => ColumnData::Float64(Vec::new()),
            ColumnData::Date(_) => ColumnData::Date(Vec::new()),
            ColumnData::Dict { dict, .. } => ColumnData::Dict {
                codes: Vec::new(),
                dict: dict.clone(),
            },
        }
    }

    pub fn take(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Int64(v) => ColumnData::Int64(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Float64(v) => ColumnData::Float64(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Date(v) => ColumnData::Date(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Dict { codes, dict } => ColumnData::Dict {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                dict: dict.clone(),
            },
        }
    }

    /// Little-endian encoding of the selected rows (all rows when `rows` is `None`).
    pub fn encode(&self, rows: Option<&[usize]>) -> Bytes {
        fn put<T: Copy, const W: usize>(v: &[T], rows: Option<&[usize]>, f: impl Fn(T) -> [u8; W]) -> Bytes {
            let mut out = Vec::with_capacity(rows.map_or(v.len(), |r| r.len()) * W);
            match rows {
                Some(rows) => rows.iter().for_each(|&r| out.extend_from_slice(&f(v[r]))),
                None => v.iter().for_each(|&x| out.extend_from_slice(&f(x))),
            }
            Bytes::from(out)
        }
        match self {
            ColumnData::Int64(v) => put(v, rows, i64::to_le_bytes),
            ColumnData::Float64(v) => put(v, rows, f64::to_le_bytes),
            ColumnData::Date(v) => put(v, rows, i32::to_le_bytes),
            ColumnData::Dict { codes, .. } => put(codes, rows, i32::to_le_bytes),
        }
    }

    /// Appends values decoded from `bytes`, which must hold whole values.
    pub fn extend_from_le(&mut self, bytes: &[u8]) -> Result<()> {
        let w = self.data_type().width();
        if !bytes.len().is_multiple_of(w) {
            return Err(Error::Protocol(format!(
                "column payload of {} bytes is not a multiple of {w}",
                bytes.len()
            )));
        }
        match self {
            ColumnData::Int64(v) => v.extend(bytes.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap()))),
            ColumnData::Float64(v) => {
                v.extend(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())))
            }
            ColumnData::Date(v) => v.extend(bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap()))),
            ColumnData::Dict { codes, dict } => {
                let start = codes.len();
                codes.extend(bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())));
                if let Some(bad) = codes[start..].iter().find(|&&c| c < 0 || c as usize >= dict.len()) {
                    return Err(Error::Protocol(format!(
                        "dictionary code {bad} out of range for a dictionary of {}",
                        dict.len()
                    )));
                }
            }
        }
        Ok(())
    }

    fn append(&mut self, other: &ColumnData) -> Result<()> {
        match (self, other) {
            (ColumnData::Int64(a), ColumnData::Int64(b)) => a.extend_from_slice(b),
            (ColumnData::Float64(a), ColumnData::Float64(b)) => a.extend_from_slice(b),
            (ColumnData::Date(a), ColumnData::Date(b)) => a.extend_from_slice(b),
            (ColumnData::Dict { codes, dict }, ColumnData::Dict { codes: c2, dict: d2 }) => {
                if same_dictionary(dict, d2) {
                    codes.extend_from_slice(c2);
                } else {
                    let (merged, remap) = merge_dictionaries(dict, d2);
                    *dict = merged;
                    codes.extend(c2.iter().map(|&c| remap[c as usize]));
                }
            }
            (a, b) => {
                return Err(Error::Schema(format!(
                    "cannot append {:?} to {:?}",
                    b.data_type(),
                    a.data_type()
                )))
            }
        }
        Ok(())
    }
}

pub fn same_dictionary(a: &Dictionary, b: &Dictionary) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Extends `a` with the entries of `b` it lacks. Returns the merged dictionary
/// and the code translation for `b`.
pub fn merge_dictionaries(a: &Dictionary, b: &Dictionary) -> (Dictionary, Vec<i32>) {
    let mut merged: Vec<String> = a.as_ref().clone();
    let mut index: HashMap<&str, i32> = a.iter().enumerate().map(|(i, s)| (s.as_str(), i as i32)).collect();
    let mut remap = Vec::with_capacity(b.len());
    for s in b.iter() {
        let code = *index.entry(s.as_str()).or_insert_with(|| {
            merged.push(s.clone());
            merged.len() as i32 - 1
        });
        remap.push(code);
    }
    (Arc::new(merged), remap)
}

/// 64-bit FNV-1a, used for fingerprints and digests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn dictionary_fingerprint(dict: &Dictionary) -> u64 {
    let mut h = fnv1a(&(dict.len() as u64).to_le_bytes());
    for s in dict.iter() {
        h = fnv1a(&[h.to_le_bytes().as_slice(), s.as_bytes(), &[0xff]].concat());
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn new(name: impl Into<String>, data: ColumnData) -> Self {
        Column {
            name: name.into(),
            data,
        }
    }

    pub fn int64(name: impl Into<String>, v: Vec<i64>) -> Self {
        Column::new(name, ColumnData::Int64(v))
    }

    pub fn float64(name: impl Into<String>, v: Vec<f64>) -> Self {
        Column::new(name, ColumnData::Float64(v))
    }

    pub fn date(name: impl Into<String>, v: Vec<i32>) -> Self {
        Column::new(name, ColumnData::Date(v))
    }

    pub fn dict(name: impl Into<String>, codes: Vec<i32>, dict: Dictionary) -> Self {
        Column::new(name, ColumnData::Dict { codes, dict })
    }

    /// Dictionary-encodes strings with a fresh dictionary in first-seen order.
    pub fn strings<S: AsRef<str>>(name: impl Into<String>, values: &[S]) -> Self {
        let mut dict = Vec::new();
        let mut index: HashMap<String, i32> = HashMap::new();
        let codes = values
            .iter()
            .map(|s| {
                *index.entry(s.as_ref().to_string()).or_insert_with(|| {
                    dict.push(s.as_ref().to_string());
                    dict.len() as i32 - 1
                })
            })
            .collect();
        Column::dict(name, codes, Arc::new(dict))
    }

    pub fn data_type(&self) -> DataType {
        self.data.data_type()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTable {
    columns: Vec<Column>,
    row_count: usize,
}

impl ColumnTable {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let row_count = columns.first().map_or(0, |c| c.data.len());
        for (i, c) in columns.iter().enumerate() {
            if c.data.len() != row_count {
                return Err(Error::Schema(format!(
                    "column {} has {} rows, expected {row_count}",
                    c.name,
                    c.data.len()
                )));
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate column {}", c.name)));
            }
            if let ColumnData::Dict { codes, dict } = &c.data {
                if let Some(bad) = codes.iter().find(|&&x| x < 0 || x as usize >= dict.len()) {
                    return Err(Error::Schema(format!(
                        "column {}: code {bad} outside a dictionary of {}",
                        c.name,
                        dict.len()
                    )));
                }
            }
        }
        Ok(ColumnTable { columns, row_count })
    }

    pub fn num_rows(&self) -> usize {
        self.row_count
    }

    pub fn is_empty(&self) -> bool {
        self.row_count == 0
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn schema(&self) -> Vec<(String, DataType)> {
        self.columns.iter().map(|c| (c.name.clone(), c.data_type())).collect()
    }

    /// Hash of column names and types; equal schemas give equal fingerprints.
    pub fn schema_fingerprint(&self) -> u64 {
        let mut buf = Vec::new();
        for c in &self.columns {
            buf.extend_from_slice(c.name.as_bytes());
            buf.push(0);
            buf.push(c.data_type().code());
        }
        fnv1a(&buf)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown column {name}")))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.index_of(name)?])
    }

    fn type_error(&self, name: &str, want: DataType) -> Error {
        let got = self.column(name).map(|c| c.data_type());
        Error::Schema(format!("column {name} is {got:?}, expected {want:?}"))
    }

    pub fn i64s(&self, name: &str) -> Result<&[i64]> {
        match &self.column(name)?.data {
            ColumnData::Int64(v) => Ok(v),
            _ => Err(self.type_error(name, DataType::Int64)),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match &self.column(name)?.data {
            ColumnData::Float64(v) => Ok(v),
            _ => Err(self.type_error(name, DataType::Float64)),
        }
    }

    pub fn dates(&self, name: &str) -> Result<&[i32]> {
        match &self.column(name)?.data {
            ColumnData::Date(v) => Ok(v),
            _ => Err(self.type_error(name, DataType::Date)),
        }
    }

    pub fn codes(&self, name: &str) -> Result<(&[i32], &Dictionary)> {
        match &self.column(name)?.data {
            ColumnData::Dict { codes, dict } => Ok((codes, dict)),
            _ => Err(self.type_error(name, DataType::Dict)),
        }
    }

    /// Bytes held by the column values.
    pub fn byte_size(&self) -> u64 {
        (self.row_width() * self.row_count) as u64
    }

    pub fn row_width(&self) -> usize {
        self.columns.iter().map(|c| c.data_type().width()).sum()
    }

    pub fn take(&self, rows: &[usize]) -> ColumnTable {
        ColumnTable {
            columns: self
                .columns
                .iter()
                .map(|c| Column::new(c.name.clone(), c.data.take(rows)))
                .collect(),
            row_count: rows.len(),
        }
    }

    pub fn filter(&self, mask: &[bool]) -> Result<ColumnTable> {
        if mask.len() != self.row_count {
            return Err(Error::Schema(format!(
                "mask of {} entries for {} rows",
                mask.len(),
                self.row_count
            )));
        }
        let rows: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        Ok(self.take(&rows))
    }

    pub fn empty_like(&self) -> ColumnTable {
        ColumnTable {
            columns: self
                .columns
                .iter()
                .map(|c| Column::new(c.name.clone(), c.data.empty_like()))
                .collect(),
            row_count: 0,
        }
    }

    pub fn project(&self, names: &[&str]) -> Result<ColumnTable> {
        let columns = names
            .iter()
            .map(|n| self.column(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        ColumnTable::new(columns)
    }

    pub fn with_column(mut self, column: Column) -> Result<ColumnTable> {
        if self.columns.is_empty() {
            self.row_count = column.data.len();
        }
        self.columns.push(column);
        ColumnTable::new(self.columns)
    }

    /// Row-wise concatenation in argument order. Dictionaries that differ are
    /// merged and codes translated.
    pub fn concat(parts: &[ColumnTable]) -> Result<ColumnTable> {
        let Some(first) = parts.first() else {
            return ColumnTable::new(Vec::new());
        };
        let schema = first.schema();
        let mut columns: Vec<Column> = first.columns.clone();
        for p in &parts[1..] {
            if p.schema() != schema {
                return Err(Error::Schema(format!(
                    "cannot concatenate {:?} with {:?}",
                    p.column_names(),
                    first.column_names()
                )));
            }
            for (dst, src) in columns.iter_mut().zip(&p.columns) {
                dst.data.append(&src.data)?;
            }
        }
        let row_count = parts.iter().map(|p| p.row_count).sum();
        Ok(ColumnTable { columns, row_count })
    }

    /// Self-describing binary form: schema, dictionaries and column values.
    pub fn to_bytes(&self) -> Bytes {
        let mut out = Vec::with_capacity(64 + self.byte_size() as usize);
        out.extend_from_slice(&(self.columns.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.row_count as u64).to_le_bytes());
        for c in &self.columns {
            out.extend_from_slice(&(c.name.len() as u32).to_le_bytes());
            out.extend_from_slice(c.name.as_bytes());
            out.push(c.data_type().code());
            if let ColumnData::Dict { dict, .. } = &c.data {
                out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
                for s in dict.iter() {
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
            out.extend_from_slice(&c.data.encode(None));
        }
        Bytes::from(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ColumnTable> {
        let mut r = Reader { buf: bytes };
        let ncols = r.u32()? as usize;
        let rows = r.u64()? as usize;
        let mut columns = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            let len = r.u32()? as usize;
            let name = r.string(len)?;
            let mut data = match r.take(1)?[0] {
                1 => ColumnData::Int64(Vec::new()),
                2 => ColumnData::Float64(Vec::new()),
                3 => ColumnData::Date(Vec::new()),
                4 => {
                    let n = r.u32()? as usize;
                    let mut dict = Vec::with_capacity(n);
                    for _ in 0..n {
                        let len = r.u32()? as usize;
                        dict.push(r.string(len)?);
                    }
                    ColumnData::Dict {
                        codes: Vec::new(),
                        dict: Arc::new(dict),
                    }
                }
                t => return Err(Error::Protocol(format!("unknown column type code {t}"))),
            };
            let w = data.data_type().width();
            data.extend_from_le(r.take(rows * w)?)?;
            columns.push(Column::new(name, data));
        }
        if !r.buf.is_empty() {
            return Err(Error::Protocol(format!("{} trailing bytes after table", r.buf.len())));
        }
        let mut t = ColumnTable::new(columns)?;
        t.row_count = rows;
        Ok(t)
    }

    pub fn value(&self, row: usize, col: usize) -> Value<'_> {
        self.columns[col].data.value(row)
    }

    /// Order-insensitive digest of the rows: wrapping sum of per-row hashes.
    /// Floats are rounded to 9 significant digits first, so results that differ
    /// only by summation order digest alike (barring rounding boundaries).
    pub fn digest(&self) -> u64 {
        let mut total: u64 = 0;
        let mut buf = Vec::new();
        for r in 0..self.row_count {
            buf.clear();
            for c in &self.columns {
                match c.data.value(r) {
                    Value::Int(x) => buf.extend_from_slice(&x.to_le_bytes()),
                    Value::Date(x) => buf.extend_from_slice(&x.to_le_bytes()),
                    Value::Float(x) => buf.extend_from_slice(format!("{x:.8e}").as_bytes()),
                    Value::Str(s) => buf.extend_from_slice(s.as_bytes()),
                }
                buf.push(0x1f);
            }
            total = total.wrapping_add(fnv1a(&buf));
        }
        total
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Protocol("truncated table encoding".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| Error::Protocol(e.to_string()))
    }
}
