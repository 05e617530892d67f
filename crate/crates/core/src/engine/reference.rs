//! Single-context execution over full tables, used as the correctness oracle.
//! Written as plain row loops so it shares no operator code with the
//! distributed plans.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::queries::*;
use super::QueryId;
use crate::data::schema::{registry, CUSTOMER, LINEITEM, LINE_STATUSES, ORDERS, PART, RETURN_FLAGS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::table::{Column, ColumnTable, Dictionary};

/// Per-row strings of a dictionary column.
fn strings<'a>(t: &'a ColumnTable, col: &str) -> Result<Vec<&'a str>> {
    let (codes, dict) = t.codes(col)?;
    Ok(codes.iter().map(|&c| dict[c as usize].as_str()).collect())
}

fn code_in(dict: &Dictionary, s: &str) -> Result<i32> {
    dict.iter()
        .position(|d| d == s)
        .map(|p| p as i32)
        .ok_or_else(|| Error::Unsupported(format!("{s:?} is not in the canonical dictionary")))
}

pub fn reference_run(query: QueryId, data: &Dataset) -> Result<ColumnTable> {
    match query {
        QueryId::Q1 => q1(data),
        QueryId::Q3 => q3(data),
        QueryId::Q6 => q6(data),
        QueryId::Q12 => q12(data),
        QueryId::Q14 => q14(data),
        QueryId::Q19 => q19(data),
    }
}

fn q1(data: &Dataset) -> Result<ColumnTable> {
    let l = data.table(LINEITEM)?;
    let flag = strings(l, "l_returnflag")?;
    let status = strings(l, "l_linestatus")?;
    let ship = l.dates("l_shipdate")?;
    let (qty, price, disc, tax) = (
        l.f64s("l_quantity")?,
        l.f64s("l_extendedprice")?,
        l.f64s("l_discount")?,
        l.f64s("l_tax")?,
    );
    // (sum_qty, sum_price, sum_disc_price, sum_charge, sum_disc, count)
    let mut groups: BTreeMap<(&str, &str), ([f64; 5], i64)> = BTreeMap::new();
    let cutoff = q1_cutoff();
    for r in 0..l.num_rows() {
        if ship[r] > cutoff {
            continue;
        }
        let g = groups.entry((flag[r], status[r])).or_insert(([0.0; 5], 0));
        let dp = revenue(price[r], disc[r]);
        g.0[0] += qty[r];
        g.0[1] += price[r];
        g.0[2] += dp;
        g.0[3] += dp * (1.0 + tax[r]);
        g.0[4] += disc[r];
        g.1 += 1;
    }
    let flags = registry().dict(LINEITEM, "l_returnflag")?;
    let statuses = registry().dict(LINEITEM, "l_linestatus")?;
    let mut fc = Vec::new();
    let mut sc = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut count = Vec::new();
    for ((f, s), (sum, n)) in groups {
        if !RETURN_FLAGS.contains(&f) || !LINE_STATUSES.contains(&s) {
            return Err(Error::Unsupported(format!("unexpected Q1 group ({f}, {s})")));
        }
        fc.push(code_in(&flags, f)?);
        sc.push(code_in(&statuses, s)?);
        let d = n as f64;
        for (c, v) in cols
            .iter_mut()
            .zip([sum[0], sum[1], sum[2], sum[3], sum[0] / d, sum[1] / d, sum[4] / d])
        {
            c.push(v);
        }
        count.push(n);
    }
    let names = [
        "sum_qty",
        "sum_base_price",
        "sum_disc_price",
        "sum_charge",
        "avg_qty",
        "avg_price",
        "avg_disc",
    ];
    let mut columns = vec![
        Column::dict("l_returnflag", fc, flags),
        Column::dict("l_linestatus", sc, statuses),
    ];
    columns.extend(names.iter().zip(cols).map(|(n, v)| Column::float64(*n, v)));
    columns.push(Column::int64("count_order", count));
    ColumnTable::new(columns)
}

fn q3(data: &Dataset) -> Result<ColumnTable> {
    let c = data.table(CUSTOMER)?;
    let seg = strings(c, "c_mktsegment")?;
    let building: HashSet<i64> = c
        .i64s("c_custkey")?
        .iter()
        .zip(&seg)
        .filter(|(_, s)| **s == Q3_SEGMENT)
        .map(|(k, _)| *k)
        .collect();

    let o = data.table(ORDERS)?;
    let (okey, ocust, odate, oprio) = (
        o.i64s("o_orderkey")?,
        o.i64s("o_custkey")?,
        o.dates("o_orderdate")?,
        o.i64s("o_shippriority")?,
    );
    let cut = q3_date();
    let mut orders: HashMap<i64, Vec<(i32, i64)>> = HashMap::new();
    for r in 0..o.num_rows() {
        if odate[r] < cut && building.contains(&ocust[r]) {
            orders.entry(okey[r]).or_default().push((odate[r], oprio[r]));
        }
    }

    let l = data.table(LINEITEM)?;
    let (lkey, price, disc, ship) = (
        l.i64s("l_orderkey")?,
        l.f64s("l_extendedprice")?,
        l.f64s("l_discount")?,
        l.dates("l_shipdate")?,
    );
    let mut groups: HashMap<(i64, i32, i64), f64> = HashMap::new();
    for r in 0..l.num_rows() {
        if ship[r] <= cut {
            continue;
        }
        if let Some(matches) = orders.get(&lkey[r]) {
            for &(d, p) in matches {
                *groups.entry((lkey[r], d, p)).or_insert(0.0) += revenue(price[r], disc[r]);
            }
        }
    }
    let mut rows: Vec<((i64, i32, i64), f64)> = groups.into_iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0 .1.cmp(&b.0 .1)).then(a.0 .0.cmp(&b.0 .0)));
    rows.truncate(Q3_LIMIT);
    ColumnTable::new(vec![
        Column::int64("l_orderkey", rows.iter().map(|r| r.0 .0).collect()),
        Column::float64("revenue", rows.iter().map(|r| r.1).collect()),
        Column::date("o_orderdate", rows.iter().map(|r| r.0 .1).collect()),
        Column::int64("o_shippriority", rows.iter().map(|r| r.0 .2).collect()),
    ])
}

fn q6(data: &Dataset) -> Result<ColumnTable> {
    let l = data.table(LINEITEM)?;
    let (ship, disc, qty, price) = (
        l.dates("l_shipdate")?,
        l.f64s("l_discount")?,
        l.f64s("l_quantity")?,
        l.f64s("l_extendedprice")?,
    );
    let (lo, hi) = q6_range();
    let mut sum = 0.0;
    let mut n = 0;
    for r in 0..l.num_rows() {
        if ship[r] >= lo && ship[r] < hi && disc[r] >= Q6_DISCOUNT.0 && disc[r] <= Q6_DISCOUNT.1 && qty[r] < Q6_QUANTITY
        {
            sum += price[r] * disc[r];
            n += 1;
        }
    }
    ColumnTable::new(vec![Column::float64("revenue", if n > 0 { vec![sum] } else { vec![] })])
}

fn q12(data: &Dataset) -> Result<ColumnTable> {
    let o = data.table(ORDERS)?;
    let prio = strings(o, "o_orderpriority")?;
    let mut high: HashMap<i64, Vec<bool>> = HashMap::new();
    for (k, p) in o.i64s("o_orderkey")?.iter().zip(&prio) {
        high.entry(*k).or_default().push(Q12_HIGH.contains(p));
    }
    let l = data.table(LINEITEM)?;
    let mode = strings(l, "l_shipmode")?;
    let (key, ship, commit, receipt) = (
        l.i64s("l_orderkey")?,
        l.dates("l_shipdate")?,
        l.dates("l_commitdate")?,
        l.dates("l_receiptdate")?,
    );
    let (lo, hi) = q12_range();
    let mut counts: BTreeMap<&str, (i64, i64)> = BTreeMap::new();
    for r in 0..l.num_rows() {
        if !Q12_MODES.contains(&mode[r])
            || commit[r] >= receipt[r]
            || ship[r] >= commit[r]
            || receipt[r] < lo
            || receipt[r] >= hi
        {
            continue;
        }
        for &h in high.get(&key[r]).map(Vec::as_slice).unwrap_or(&[]) {
            let c = counts.entry(mode[r]).or_insert((0, 0));
            if h {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
    }
    let modes: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    ColumnTable::new(vec![
        Column::strings("l_shipmode", &modes),
        Column::int64("high_line_count", counts.values().map(|c| c.0).collect()),
        Column::int64("low_line_count", counts.values().map(|c| c.1).collect()),
    ])
}

fn q14(data: &Dataset) -> Result<ColumnTable> {
    let p = data.table(PART)?;
    let ty = strings(p, "p_type")?;
    let mut promo_part: HashMap<i64, Vec<bool>> = HashMap::new();
    for (k, t) in p.i64s("p_partkey")?.iter().zip(&ty) {
        promo_part.entry(*k).or_default().push(t.starts_with(Q14_PROMO));
    }
    let l = data.table(LINEITEM)?;
    let (key, price, disc, ship) = (
        l.i64s("l_partkey")?,
        l.f64s("l_extendedprice")?,
        l.f64s("l_discount")?,
        l.dates("l_shipdate")?,
    );
    let (lo, hi) = q14_range();
    let (mut promo, mut total, mut n) = (0.0, 0.0, 0);
    for r in 0..l.num_rows() {
        if ship[r] < lo || ship[r] >= hi {
            continue;
        }
        for &is_promo in promo_part.get(&key[r]).map(Vec::as_slice).unwrap_or(&[]) {
            let v = revenue(price[r], disc[r]);
            if is_promo {
                promo += v;
            }
            total += v;
            n += 1;
        }
    }
    let v = if n > 0 { vec![100.0 * promo / total] } else { vec![] };
    ColumnTable::new(vec![Column::float64("promo_revenue", v)])
}

fn q19(data: &Dataset) -> Result<ColumnTable> {
    let p = data.table(PART)?;
    let brand = strings(p, "p_brand")?;
    let container = strings(p, "p_container")?;
    let size = p.i64s("p_size")?;
    let mut parts: HashMap<i64, Vec<usize>> = HashMap::new();
    for (r, k) in p.i64s("p_partkey")?.iter().enumerate() {
        parts.entry(*k).or_default().push(r);
    }
    let l = data.table(LINEITEM)?;
    let mode = strings(l, "l_shipmode")?;
    let instruct = strings(l, "l_shipinstruct")?;
    let (key, qty, price, disc) = (
        l.i64s("l_partkey")?,
        l.f64s("l_quantity")?,
        l.f64s("l_extendedprice")?,
        l.f64s("l_discount")?,
    );
    let (mut sum, mut n) = (0.0, 0);
    for r in 0..l.num_rows() {
        if !Q19_MODES.contains(&mode[r]) || instruct[r] != Q19_INSTRUCT {
            continue;
        }
        for &pr in parts.get(&key[r]).map(Vec::as_slice).unwrap_or(&[]) {
            let hit = Q19_BRANCHES.iter().any(|b| {
                brand[pr] == b.brand
                    && b.containers.contains(&container[pr])
                    && (1..=b.max_size).contains(&size[pr])
                    && qty[r] >= b.quantity.0
                    && qty[r] <= b.quantity.1
            });
            if hit {
                sum += revenue(price[r], disc[r]);
                n += 1;
            }
        }
    }
    ColumnTable::new(vec![Column::float64("revenue", if n > 0 { vec![sum] } else { vec![] })])
}
