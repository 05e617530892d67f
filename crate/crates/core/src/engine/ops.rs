//! Local relational operators: predicate filter, hash join, grouped
//! aggregation, sorting. They work on one worker's tables and never talk to
//! other workers.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::table::{Column, ColumnData, ColumnTable, DataType, Dictionary, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Lit {
    Int(i64),
    Float(f64),
    Date(i32),
    Str(String),
}

impl From<&str> for Lit {
    fn from(s: &str) -> Self {
        Lit::Str(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, o: Ordering) -> bool {
        match self {
            CmpOp::Eq => o == Ordering::Equal,
            CmpOp::Ne => o != Ordering::Equal,
            CmpOp::Lt => o == Ordering::Less,
            CmpOp::Le => o != Ordering::Greater,
            CmpOp::Gt => o == Ordering::Greater,
            CmpOp::Ge => o != Ordering::Less,
        }
    }
}

/// Row predicate, evaluated a column at a time.
#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    Cmp {
        col: String,
        op: CmpOp,
        lit: Lit,
    },
    /// Compares two columns of the same type.
    ColCmp {
        left: String,
        op: CmpOp,
        right: String,
    },
    /// Inclusive on both ends.
    Between {
        col: String,
        lo: Lit,
        hi: Lit,
    },
    In {
        col: String,
        values: Vec<Lit>,
    },
    StartsWith {
        col: String,
        prefix: String,
    },
    And(Vec<Pred>),
    Or(Vec<Pred>),
    Not(Box<Pred>),
}

impl Pred {
    pub fn cmp(col: &str, op: CmpOp, lit: Lit) -> Pred {
        Pred::Cmp {
            col: col.into(),
            op,
            lit,
        }
    }

    pub fn col_cmp(left: &str, op: CmpOp, right: &str) -> Pred {
        Pred::ColCmp {
            left: left.into(),
            op,
            right: right.into(),
        }
    }

    pub fn between(col: &str, lo: Lit, hi: Lit) -> Pred {
        Pred::Between {
            col: col.into(),
            lo,
            hi,
        }
    }

    pub fn is_in(col: &str, values: Vec<Lit>) -> Pred {
        Pred::In {
            col: col.into(),
            values,
        }
    }

    pub fn starts_with(col: &str, prefix: &str) -> Pred {
        Pred::StartsWith {
            col: col.into(),
            prefix: prefix.into(),
        }
    }

    /// Evaluates to one flag per row.
    pub fn eval(&self, t: &ColumnTable) -> Result<Vec<bool>> {
        match self {
            Pred::Cmp { col, op, lit } => compare_lit(t, col, |o| op.holds(o), lit),
            Pred::ColCmp { left, op, right } => compare_cols(t, left, *op, right),
            Pred::Between { col, lo, hi } => {
                let a = compare_lit(t, col, |o| o != Ordering::Less, lo)?;
                let b = compare_lit(t, col, |o| o != Ordering::Greater, hi)?;
                Ok(a.iter().zip(&b).map(|(x, y)| *x && *y).collect())
            }
            Pred::In { col, values } => {
                let mut out = vec![false; t.num_rows()];
                for v in values {
                    let m = compare_lit(t, col, |o| o == Ordering::Equal, v)?;
                    out.iter_mut().zip(m).for_each(|(o, x)| *o |= x);
                }
                Ok(out)
            }
            Pred::StartsWith { col, prefix } => {
                let (codes, dict) = t.codes(col)?;
                let hit: Vec<bool> = dict.iter().map(|s| s.starts_with(prefix.as_str())).collect();
                Ok(codes.iter().map(|&c| hit[c as usize]).collect())
            }
            Pred::And(ps) => {
                let mut out = vec![true; t.num_rows()];
                for p in ps {
                    out.iter_mut().zip(p.eval(t)?).for_each(|(o, x)| *o &= x);
                }
                Ok(out)
            }
            Pred::Or(ps) => {
                let mut out = vec![false; t.num_rows()];
                for p in ps {
                    out.iter_mut().zip(p.eval(t)?).for_each(|(o, x)| *o |= x);
                }
                Ok(out)
            }
            Pred::Not(p) => Ok(p.eval(t)?.into_iter().map(|x| !x).collect()),
        }
    }
}

fn lit_mismatch(col: &str, ty: DataType, lit: &Lit) -> Error {
    Error::Schema(format!("cannot compare {col} ({ty:?}) with {lit:?}"))
}

fn compare_lit(t: &ColumnTable, col: &str, keep: impl Fn(Ordering) -> bool, lit: &Lit) -> Result<Vec<bool>> {
    let c = t.column(col)?;
    Ok(match (&c.data, lit) {
        (ColumnData::Int64(v), Lit::Int(x)) => v.iter().map(|a| keep(a.cmp(x))).collect(),
        (ColumnData::Int64(v), Lit::Float(x)) => v.iter().map(|&a| keep((a as f64).total_cmp(x))).collect(),
        (ColumnData::Float64(v), Lit::Float(x)) => v.iter().map(|a| keep(a.total_cmp(x))).collect(),
        (ColumnData::Float64(v), Lit::Int(x)) => v.iter().map(|a| keep(a.total_cmp(&(*x as f64)))).collect(),
        (ColumnData::Date(v), Lit::Date(x)) => v.iter().map(|a| keep(a.cmp(x))).collect(),
        (ColumnData::Dict { codes, dict }, Lit::Str(s)) => {
            let per_code: Vec<bool> = dict.iter().map(|d| keep(d.as_str().cmp(s.as_str()))).collect();
            codes.iter().map(|&c| per_code[c as usize]).collect()
        }
        (data, lit) => return Err(lit_mismatch(col, data.data_type(), lit)),
    })
}

fn compare_cols(t: &ColumnTable, left: &str, op: CmpOp, right: &str) -> Result<Vec<bool>> {
    let (a, b) = (&t.column(left)?.data, &t.column(right)?.data);
    Ok(match (a, b) {
        (ColumnData::Int64(x), ColumnData::Int64(y)) => x.iter().zip(y).map(|(p, q)| op.holds(p.cmp(q))).collect(),
        (ColumnData::Float64(x), ColumnData::Float64(y)) => {
            x.iter().zip(y).map(|(p, q)| op.holds(p.total_cmp(q))).collect()
        }
        (ColumnData::Date(x), ColumnData::Date(y)) => x.iter().zip(y).map(|(p, q)| op.holds(p.cmp(q))).collect(),
        _ => {
            return Err(Error::Schema(format!(
                "cannot compare {left} ({:?}) with {right} ({:?})",
                a.data_type(),
                b.data_type()
            )))
        }
    })
}

pub fn filter(t: &ColumnTable, pred: &Pred) -> Result<ColumnTable> {
    t.filter(&pred.eval(t)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinType {
    Inner,
    Semi,
    Anti,
}

const MAX_KEYS: usize = 3;
type Key = [i64; MAX_KEYS];

/// Row keys of `t`; dictionary columns are mapped into `base`'s code space
/// (unknown strings get a value that matches nothing).
fn join_keys(t: &ColumnTable, keys: &[&str], bases: &[Option<Dictionary>]) -> Result<Vec<Key>> {
    let mut out = vec![[0i64; MAX_KEYS]; t.num_rows()];
    for (k, (name, base)) in keys.iter().zip(bases).enumerate() {
        match &t.column(name)?.data {
            ColumnData::Int64(v) => out.iter_mut().zip(v).for_each(|(o, &x)| o[k] = x),
            ColumnData::Date(v) => out.iter_mut().zip(v).for_each(|(o, &x)| o[k] = x as i64),
            ColumnData::Dict { codes, dict } => {
                let map: Vec<i64> = match base {
                    Some(b) if !crate::table::same_dictionary(b, dict) => {
                        let idx: HashMap<&str, i64> =
                            b.iter().enumerate().map(|(i, s)| (s.as_str(), i as i64)).collect();
                        dict.iter()
                            .map(|s| idx.get(s.as_str()).copied().unwrap_or(i64::MIN))
                            .collect()
                    }
                    _ => (0..dict.len() as i64).collect(),
                };
                out.iter_mut().zip(codes).for_each(|(o, &c)| o[k] = map[c as usize]);
            }
            ColumnData::Float64(_) => return Err(Error::Schema(format!("cannot join on float column {name}"))),
        }
    }
    Ok(out)
}

/// Hash join: builds on `right`, probes with `left`.
///
/// Inner joins output the left columns followed by the right columns, in
/// left-row order; the two sides must not share column names. Semi and anti
/// joins return left rows that do or do not have a match.
pub fn local_hash_join(
    left: &ColumnTable,
    right: &ColumnTable,
    left_keys: &[&str],
    right_keys: &[&str],
    how: JoinType,
) -> Result<ColumnTable> {
    if left_keys.len() != right_keys.len() || left_keys.is_empty() || left_keys.len() > MAX_KEYS {
        return Err(Error::InvalidArgument(format!(
            "join needs 1 to {MAX_KEYS} key pairs, got {left_keys:?} and {right_keys:?}"
        )));
    }
    let mut bases = Vec::with_capacity(left_keys.len());
    for (l, r) in left_keys.iter().zip(right_keys) {
        let (lt, rt) = (left.column(l)?.data_type(), right.column(r)?.data_type());
        if lt != rt {
            return Err(Error::Schema(format!("join key {l} is {lt:?} but {r} is {rt:?}")));
        }
        bases.push(match &right.column(r)?.data {
            ColumnData::Dict { dict, .. } => Some(dict.clone()),
            _ => None,
        });
    }
    let rkeys = join_keys(right, right_keys, &vec![None; right_keys.len()])?;
    let lkeys = join_keys(left, left_keys, &bases)?;
    let mut table: HashMap<Key, Vec<usize>> = HashMap::with_capacity(rkeys.len());
    for (i, k) in rkeys.iter().enumerate() {
        table.entry(*k).or_default().push(i);
    }
    match how {
        JoinType::Semi | JoinType::Anti => {
            let want = how == JoinType::Semi;
            let rows: Vec<usize> = (0..left.num_rows())
                .filter(|&i| table.contains_key(&lkeys[i]) == want)
                .collect();
            Ok(left.take(&rows))
        }
        JoinType::Inner => {
            if let Some(dup) = right.column_names().iter().find(|n| left.index_of(n).is_ok()) {
                return Err(Error::Schema(format!("both join inputs have a column named {dup}")));
            }
            let mut li = Vec::new();
            let mut ri = Vec::new();
            for (i, k) in lkeys.iter().enumerate() {
                if let Some(m) = table.get(k) {
                    for &j in m {
                        li.push(i);
                        ri.push(j);
                    }
                }
            }
            let mut cols = left.take(&li).into_columns();
            cols.extend(right.take(&ri).into_columns());
            if cols.is_empty() {
                return ColumnTable::new(cols);
            }
            ColumnTable::new(cols)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agg {
    pub func: AggFunc,
    /// Input column; ignored by `Count`.
    pub column: String,
    pub output: String,
}

impl Agg {
    pub fn new(func: AggFunc, column: &str, output: &str) -> Agg {
        Agg {
            func,
            column: column.into(),
            output: output.into(),
        }
    }
}

enum Acc {
    SumI(Vec<i64>),
    SumF(Vec<f64>),
    Count(Vec<i64>),
    MinMaxI(Vec<Option<i64>>, bool),
    MinMaxF(Vec<Option<f64>>, bool),
    MinMaxD(Vec<Option<i32>>, bool),
    Avg(Vec<f64>, Vec<i64>),
}

/// Groups by `keys` and aggregates. Output: key columns, then one column per
/// aggregate, sorted by the keys. Empty input gives an empty result, with or
/// without keys.
pub fn group_aggregate(t: &ColumnTable, keys: &[&str], aggs: &[Agg]) -> Result<ColumnTable> {
    let key_cols: Vec<&ColumnData> = keys
        .iter()
        .map(|k| t.column(k).map(|c| &c.data))
        .collect::<Result<_>>()?;
    for (k, c) in keys.iter().zip(&key_cols) {
        if c.data_type() == DataType::Float64 {
            return Err(Error::Schema(format!("cannot group by float column {k}")));
        }
    }
    // group id per row, first-seen order
    let mut ids: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut first_row = Vec::new();
    let mut group_of = Vec::with_capacity(t.num_rows());
    let mut key = Vec::with_capacity(keys.len());
    for r in 0..t.num_rows() {
        key.clear();
        for c in &key_cols {
            key.push(match c {
                ColumnData::Int64(v) => v[r],
                ColumnData::Date(v) => v[r] as i64,
                ColumnData::Dict { codes, .. } => codes[r] as i64,
                ColumnData::Float64(_) => unreachable!(),
            });
        }
        let next = ids.len();
        let g = *ids.entry(key.clone()).or_insert_with(|| {
            first_row.push(r);
            next
        });
        group_of.push(g);
    }
    let groups = first_row.len();

    let mut out_cols: Vec<Column> = keys
        .iter()
        .zip(&key_cols)
        .map(|(k, c)| Column::new(*k, c.take(&first_row)))
        .collect();
    for a in aggs {
        let input = if a.func == AggFunc::Count {
            None
        } else {
            Some(&t.column(&a.column)?.data)
        };
        let mut acc = match (a.func, input) {
            (AggFunc::Count, _) => Acc::Count(vec![0; groups]),
            (AggFunc::Sum, Some(ColumnData::Int64(_))) => Acc::SumI(vec![0; groups]),
            (AggFunc::Sum, Some(ColumnData::Float64(_))) => Acc::SumF(vec![0.0; groups]),
            (AggFunc::Avg, Some(ColumnData::Int64(_) | ColumnData::Float64(_))) => {
                Acc::Avg(vec![0.0; groups], vec![0; groups])
            }
            (f @ (AggFunc::Min | AggFunc::Max), Some(ColumnData::Int64(_))) => {
                Acc::MinMaxI(vec![None; groups], f == AggFunc::Max)
            }
            (f @ (AggFunc::Min | AggFunc::Max), Some(ColumnData::Float64(_))) => {
                Acc::MinMaxF(vec![None; groups], f == AggFunc::Max)
            }
            (f @ (AggFunc::Min | AggFunc::Max), Some(ColumnData::Date(_))) => {
                Acc::MinMaxD(vec![None; groups], f == AggFunc::Max)
            }
            (f, Some(d)) => {
                return Err(Error::Schema(format!(
                    "{f:?} is not defined on {} ({:?})",
                    a.column,
                    d.data_type()
                )))
            }
            (_, None) => unreachable!(),
        };
        for (r, &g) in group_of.iter().enumerate() {
            match (&mut acc, input) {
                (Acc::Count(v), _) => v[g] += 1,
                (Acc::SumI(v), Some(ColumnData::Int64(x))) => v[g] = v[g].wrapping_add(x[r]),
                (Acc::SumF(v), Some(ColumnData::Float64(x))) => v[g] += x[r],
                (Acc::Avg(s, c), Some(ColumnData::Int64(x))) => {
                    s[g] += x[r] as f64;
                    c[g] += 1;
                }
                (Acc::Avg(s, c), Some(ColumnData::Float64(x))) => {
                    s[g] += x[r];
                    c[g] += 1;
                }
                (Acc::MinMaxI(v, max), Some(ColumnData::Int64(x))) => v[g] = Some(pick(v[g], x[r], *max)),
                (Acc::MinMaxF(v, max), Some(ColumnData::Float64(x))) => {
                    v[g] = Some(match v[g] {
                        None => x[r],
                        Some(c) if *max => c.max(x[r]),
                        Some(c) => c.min(x[r]),
                    })
                }
                (Acc::MinMaxD(v, max), Some(ColumnData::Date(x))) => v[g] = Some(pick(v[g], x[r], *max)),
                _ => unreachable!(),
            }
        }
        let data = match acc {
            Acc::SumI(v) | Acc::Count(v) => ColumnData::Int64(v),
            Acc::SumF(v) => ColumnData::Float64(v),
            Acc::Avg(s, c) => ColumnData::Float64(s.iter().zip(&c).map(|(s, &c)| s / c as f64).collect()),
            Acc::MinMaxI(v, _) => ColumnData::Int64(v.into_iter().map(Option::unwrap).collect()),
            Acc::MinMaxF(v, _) => ColumnData::Float64(v.into_iter().map(Option::unwrap).collect()),
            Acc::MinMaxD(v, _) => ColumnData::Date(v.into_iter().map(Option::unwrap).collect()),
        };
        out_cols.push(Column::new(a.output.clone(), data));
    }
    let out = ColumnTable::new(out_cols)?;
    let order: Vec<SortKey> = keys.iter().map(|k| SortKey::asc(k)).collect();
    sort_by(&out, &order)
}

fn pick<T: Ord + Copy>(cur: Option<T>, x: T, max: bool) -> T {
    match cur {
        None => x,
        Some(c) if max => c.max(x),
        Some(c) => c.min(x),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub column: String,
    pub descending: bool,
}

impl SortKey {
    pub fn asc(column: &str) -> SortKey {
        SortKey {
            column: column.into(),
            descending: false,
        }
    }

    pub fn desc(column: &str) -> SortKey {
        SortKey {
            column: column.into(),
            descending: true,
        }
    }
}

/// Total order on cells of one column: numbers numerically, strings
/// lexicographically.
pub fn cmp_values(a: Value<'_>, b: Value<'_>) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(&y),
        (Value::Float(x), Value::Float(y)) => x.total_cmp(&y),
        (Value::Date(x), Value::Date(y)) => x.cmp(&y),
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        // mixed types never share a column
        _ => Ordering::Equal,
    }
}

/// Stable sort by the given keys.
pub fn sort_by(t: &ColumnTable, keys: &[SortKey]) -> Result<ColumnTable> {
    let idx: Vec<usize> = keys.iter().map(|k| t.index_of(&k.column)).collect::<Result<_>>()?;
    let mut rows: Vec<usize> = (0..t.num_rows()).collect();
    rows.sort_by(|&a, &b| {
        for (k, &c) in keys.iter().zip(&idx) {
            let o = cmp_values(t.value(a, c), t.value(b, c));
            let o = if k.descending { o.reverse() } else { o };
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    });
    Ok(t.take(&rows))
}

pub fn limit(t: &ColumnTable, n: usize) -> ColumnTable {
    t.take(&(0..n.min(t.num_rows())).collect::<Vec<_>>())
}

/// Sort by every column, non-float columns first, so equal multisets of rows
/// end up in the same order.
pub fn canonical_sort(t: &ColumnTable) -> ColumnTable {
    let mut keys: Vec<SortKey> = t
        .columns()
        .iter()
        .filter(|c| c.data_type() != DataType::Float64)
        .map(|c| SortKey::asc(&c.name))
        .collect();
    keys.extend(
        t.columns()
            .iter()
            .filter(|c| c.data_type() == DataType::Float64)
            .map(|c| SortKey::asc(&c.name)),
    );
    sort_by(t, &keys).expect("own columns")
}

/// Compares two results as multisets of rows: integers, dates and strings
/// exactly, floats within `rel_tol` relative difference.
pub fn results_match(a: &ColumnTable, b: &ColumnTable, rel_tol: f64) -> std::result::Result<(), String> {
    if a.schema() != b.schema() {
        return Err(format!("schemas differ: {:?} vs {:?}", a.schema(), b.schema()));
    }
    if a.num_rows() != b.num_rows() {
        return Err(format!("row counts differ: {} vs {}", a.num_rows(), b.num_rows()));
    }
    let (a, b) = (canonical_sort(a), canonical_sort(b));
    for r in 0..a.num_rows() {
        for c in 0..a.num_columns() {
            let (x, y) = (a.value(r, c), b.value(r, c));
            let same = match (x, y) {
                (Value::Float(p), Value::Float(q)) => {
                    p == q || (p - q).abs() <= rel_tol * p.abs().max(q.abs()) || (p.is_nan() && q.is_nan())
                }
                _ => x == y,
            };
            if !same {
                return Err(format!("row {r}, column {}: {x:?} vs {y:?}", a.columns()[c].name));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_example() {
        let t = ColumnTable::new(vec![Column::float64("l_quantity", vec![10.0, 30.0, 23.0, 24.0, 50.0])]).unwrap();
        let f = filter(&t, &Pred::cmp("l_quantity", CmpOp::Lt, Lit::Float(24.0))).unwrap();
        assert_eq!(f.num_rows(), 2);
    }

    #[test]
    fn predicate_forms() {
        let t = ColumnTable::new(vec![
            Column::int64("a", vec![1, 2, 3, 4]),
            Column::int64("b", vec![4, 3, 2, 1]),
            Column::strings("s", &["PROMO X", "STD", "PROMO Y", "ECO"]),
        ])
        .unwrap();
        let eval = |p: Pred| p.eval(&t).unwrap();
        assert_eq!(eval(Pred::col_cmp("a", CmpOp::Lt, "b")), vec![true, true, false, false]);
        assert_eq!(
            eval(Pred::between("a", Lit::Int(2), Lit::Int(3))),
            vec![false, true, true, false]
        );
        assert_eq!(
            eval(Pred::is_in("s", vec!["STD".into(), "ECO".into()])),
            vec![false, true, false, true]
        );
        assert_eq!(eval(Pred::starts_with("s", "PROMO")), vec![true, false, true, false]);
        assert_eq!(
            eval(Pred::Or(vec![
                Pred::cmp("a", CmpOp::Eq, Lit::Int(1)),
                Pred::cmp("s", CmpOp::Eq, "ECO".into())
            ])),
            vec![true, false, false, true]
        );
        assert_eq!(
            eval(Pred::Not(Box::new(Pred::cmp("a", CmpOp::Ge, Lit::Int(3))))),
            vec![true, true, false, false]
        );
        assert!(Pred::cmp("s", CmpOp::Eq, Lit::Int(1)).eval(&t).is_err());
        assert!(Pred::cmp("zz", CmpOp::Eq, Lit::Int(1)).eval(&t).is_err());
    }

    #[test]
    fn join_kinds() {
        let left = ColumnTable::new(vec![
            Column::int64("k", vec![1, 2, 2, 3]),
            Column::int64("v", vec![10, 20, 21, 30]),
        ])
        .unwrap();
        let right = ColumnTable::new(vec![
            Column::int64("rk", vec![2, 3, 3]),
            Column::int64("w", vec![200, 300, 301]),
        ])
        .unwrap();
        let inner = local_hash_join(&left, &right, &["k"], &["rk"], JoinType::Inner).unwrap();
        assert_eq!(inner.i64s("v").unwrap(), &[20, 21, 30, 30]);
        assert_eq!(inner.i64s("w").unwrap(), &[200, 200, 300, 301]);
        let semi = local_hash_join(&left, &right, &["k"], &["rk"], JoinType::Semi).unwrap();
        assert_eq!(semi.i64s("v").unwrap(), &[20, 21, 30]);
        let anti = local_hash_join(&left, &right, &["k"], &["rk"], JoinType::Anti).unwrap();
        assert_eq!(anti.i64s("v").unwrap(), &[10]);
    }

    #[test]
    fn join_with_empty_right() {
        let left = ColumnTable::new(vec![Column::int64("k", vec![1, 2])]).unwrap();
        let right = ColumnTable::new(vec![Column::int64("rk", vec![])]).unwrap();
        assert_eq!(
            local_hash_join(&left, &right, &["k"], &["rk"], JoinType::Inner)
                .unwrap()
                .num_rows(),
            0
        );
        assert_eq!(
            local_hash_join(&left, &right, &["k"], &["rk"], JoinType::Anti).unwrap(),
            left
        );
    }

    #[test]
    fn join_on_strings_across_dictionaries() {
        let left = ColumnTable::new(vec![Column::strings("a", &["x", "y", "z"])]).unwrap();
        let right = ColumnTable::new(vec![Column::strings("b", &["z", "x"])]).unwrap();
        let semi = local_hash_join(&left, &right, &["a"], &["b"], JoinType::Semi).unwrap();
        assert_eq!(semi.num_rows(), 2);
        let dup = ColumnTable::new(vec![Column::strings("a", &["x"])]).unwrap();
        assert!(local_hash_join(&left, &dup, &["a"], &["a"], JoinType::Inner).is_err());
        let ints = ColumnTable::new(vec![Column::int64("b", vec![1])]).unwrap();
        assert!(local_hash_join(&left, &ints, &["a"], &["b"], JoinType::Semi).is_err());
    }

    #[test]
    fn group_sum_example() {
        let t = ColumnTable::new(vec![
            Column::strings("g", &["b", "a", "a"]),
            Column::int64("x", vec![3, 1, 2]),
        ])
        .unwrap();
        let out = group_aggregate(
            &t,
            &["g"],
            &[
                Agg::new(AggFunc::Sum, "x", "s"),
                Agg::new(AggFunc::Count, "", "n"),
                Agg::new(AggFunc::Min, "x", "lo"),
                Agg::new(AggFunc::Max, "x", "hi"),
                Agg::new(AggFunc::Avg, "x", "avg"),
            ],
        )
        .unwrap();
        assert_eq!(out.value(0, 0), Value::Str("a"));
        assert_eq!(out.i64s("s").unwrap(), &[3, 3]);
        assert_eq!(out.i64s("n").unwrap(), &[2, 1]);
        assert_eq!(out.i64s("lo").unwrap(), &[1, 3]);
        assert_eq!(out.i64s("hi").unwrap(), &[2, 3]);
        assert_eq!(out.f64s("avg").unwrap(), &[1.5, 3.0]);
    }

    #[test]
    fn group_errors_and_empty() {
        let t = ColumnTable::new(vec![Column::float64("f", vec![1.0]), Column::strings("s", &["a"])]).unwrap();
        assert!(group_aggregate(&t, &["f"], &[]).is_err());
        assert!(group_aggregate(&t, &[], &[Agg::new(AggFunc::Sum, "s", "x")]).is_err());
        let e = group_aggregate(&t.empty_like(), &["s"], &[Agg::new(AggFunc::Sum, "f", "x")]).unwrap();
        assert_eq!(e.num_rows(), 0);
        let global = group_aggregate(&t, &[], &[Agg::new(AggFunc::Sum, "f", "x")]).unwrap();
        assert_eq!(global.f64s("x").unwrap(), &[1.0]);
    }

    #[test]
    fn sorting_and_matching() {
        let t = ColumnTable::new(vec![
            Column::int64("k", vec![2, 1, 3]),
            Column::float64("v", vec![0.2, 0.1, 0.3]),
        ])
        .unwrap();
        let s = sort_by(&t, &[SortKey::desc("v")]).unwrap();
        assert_eq!(s.i64s("k").unwrap(), &[3, 2, 1]);
        assert_eq!(limit(&s, 2).num_rows(), 2);
        let mut nudged = t.clone().into_columns();
        nudged[1] = Column::float64("v", vec![0.2 * (1.0 + 1e-12), 0.1, 0.3]);
        let nudged = ColumnTable::new(nudged).unwrap();
        assert!(results_match(&s, &nudged, 1e-9).is_ok());
        assert!(results_match(&s, &limit(&s, 2), 1e-9).is_err());
    }
}
