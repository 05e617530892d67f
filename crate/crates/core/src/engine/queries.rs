//! Distributed plans for the supported queries.

use super::ctx::ExecCtx;
use super::ops::*;
use super::{QueryId, Variant};
use crate::collectives::{all_reduce, ReduceOp};
use crate::data::schema::{registry, ymd, CUSTOMER, LINEITEM, LINE_STATUSES, ORDERS, PART, RETURN_FLAGS};
use crate::data::WorkerTables;
use crate::error::{Error, Result};
use crate::table::{Column, ColumnTable};

// Query parameters, shared with the reference executor.
pub(super) fn q1_cutoff() -> i32 {
    ymd(1998, 9, 2)
}
pub(super) fn q3_date() -> i32 {
    ymd(1995, 3, 15)
}
pub(super) const Q3_SEGMENT: &str = "BUILDING";
pub(super) const Q3_LIMIT: usize = 10;
pub(super) fn q6_range() -> (i32, i32) {
    (ymd(1994, 1, 1), ymd(1995, 1, 1))
}
pub(super) const Q6_DISCOUNT: (f64, f64) = (0.05, 0.07);
pub(super) const Q6_QUANTITY: f64 = 24.0;
pub(super) const Q12_MODES: [&str; 2] = ["MAIL", "SHIP"];
pub(super) const Q12_HIGH: [&str; 2] = ["1-URGENT", "2-HIGH"];
pub(super) fn q12_range() -> (i32, i32) {
    (ymd(1994, 1, 1), ymd(1995, 1, 1))
}
pub(super) fn q14_range() -> (i32, i32) {
    (ymd(1995, 9, 1), ymd(1995, 10, 1))
}
pub(super) const Q14_PROMO: &str = "PROMO";
pub(super) const Q19_MODES: [&str; 2] = ["AIR", "AIR REG"];
pub(super) const Q19_INSTRUCT: &str = "DELIVER IN PERSON";

/// One disjunct of the Q19 predicate.
pub(super) struct Q19Branch {
    pub brand: &'static str,
    pub containers: [&'static str; 4],
    pub max_size: i64,
    pub quantity: (f64, f64),
}

pub(super) const Q19_BRANCHES: [Q19Branch; 3] = [
    Q19Branch {
        brand: "Brand#12",
        containers: ["SM CASE", "SM BOX", "SM PACK", "SM PKG"],
        max_size: 5,
        quantity: (1.0, 11.0),
    },
    Q19Branch {
        brand: "Brand#23",
        containers: ["MED BAG", "MED BOX", "MED PKG", "MED PACK"],
        max_size: 10,
        quantity: (10.0, 20.0),
    },
    Q19Branch {
        brand: "Brand#34",
        containers: ["LG CASE", "LG BOX", "LG PACK", "LG PKG"],
        max_size: 15,
        quantity: (20.0, 30.0),
    },
];

pub(super) fn revenue(price: f64, discount: f64) -> f64 {
    price * (1.0 - discount)
}

fn strs(values: &[&str]) -> Vec<Lit> {
    values.iter().map(|&s| Lit::from(s)).collect()
}

fn half_open(col: &str, (lo, hi): (i32, i32)) -> Pred {
    Pred::And(vec![
        Pred::cmp(col, CmpOp::Ge, Lit::Date(lo)),
        Pred::cmp(col, CmpOp::Lt, Lit::Date(hi)),
    ])
}

fn with_revenue(t: &ColumnTable) -> Result<ColumnTable> {
    let price = t.f64s("l_extendedprice")?;
    let disc = t.f64s("l_discount")?;
    let rev = price.iter().zip(disc).map(|(&p, &d)| revenue(p, d)).collect();
    t.clone().with_column(Column::float64("revenue", rev))
}

pub(super) fn execute(
    ctx: &mut ExecCtx<'_>,
    w: &WorkerTables,
    query: QueryId,
    variant: Variant,
) -> Result<Option<ColumnTable>> {
    match query {
        QueryId::Q1 => q1(ctx, w),
        QueryId::Q3 => q3(ctx, w),
        QueryId::Q6 => q6(ctx, w),
        QueryId::Q12 => q12(ctx, w, variant),
        QueryId::Q14 => q14(ctx, w),
        QueryId::Q19 => q19(ctx, w),
    }
}

const Q1_SUMS: usize = 5;

/// Slot of each local dictionary code in a fixed list of strings.
fn slots(dict: &[String], expected: &[&str], column: &str) -> Result<Vec<usize>> {
    dict.iter()
        .map(|s| {
            expected
                .iter()
                .position(|e| e == s)
                .ok_or_else(|| Error::Unsupported(format!("{column} value {s:?} is outside {expected:?}")))
        })
        .collect()
}

/// Builds the Q1 result from per-group sums (quantity, price, discounted
/// price, charge, discount) and counts, indexed flag-major.
pub(super) fn q1_result(sums: &[f64], counts: &[i64]) -> Result<ColumnTable> {
    let mut flag = Vec::new();
    let mut status = Vec::new();
    let mut cols: [Vec<f64>; 7] = Default::default();
    let mut count = Vec::new();
    for (g, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let s = &sums[g * Q1_SUMS..(g + 1) * Q1_SUMS];
        flag.push((g / LINE_STATUSES.len()) as i32);
        status.push((g % LINE_STATUSES.len()) as i32);
        let d = n as f64;
        for (c, v) in cols
            .iter_mut()
            .zip([s[0], s[1], s[2], s[3], s[0] / d, s[1] / d, s[4] / d])
        {
            c.push(v);
        }
        count.push(n);
    }
    let reg = registry();
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
        Column::dict("l_returnflag", flag, reg.dict(LINEITEM, "l_returnflag")?),
        Column::dict("l_linestatus", status, reg.dict(LINEITEM, "l_linestatus")?),
    ];
    columns.extend(names.iter().zip(cols).map(|(n, v)| Column::float64(*n, v)));
    columns.push(Column::int64("count_order", count));
    ColumnTable::new(columns)
}

fn q1(ctx: &mut ExecCtx<'_>, w: &WorkerTables) -> Result<Option<ColumnTable>> {
    let cols = [
        "l_quantity",
        "l_extendedprice",
        "l_discount",
        "l_tax",
        "l_returnflag",
        "l_linestatus",
        "l_shipdate",
    ];
    let l = ctx.scan(w, LINEITEM, &cols)?;
    let l = ctx.local(l, |t| {
        filter(t, &Pred::cmp("l_shipdate", CmpOp::Le, Lit::Date(q1_cutoff())))
    })?;
    ctx.charge(l.byte_size());

    let groups = RETURN_FLAGS.len() * LINE_STATUSES.len();
    let mut sums = vec![0.0; groups * Q1_SUMS];
    let mut counts = vec![0i64; groups];
    let (fc, fd) = l.codes("l_returnflag")?;
    let (sc, sd) = l.codes("l_linestatus")?;
    let fslot = slots(fd, &RETURN_FLAGS, "l_returnflag")?;
    let sslot = slots(sd, &LINE_STATUSES, "l_linestatus")?;
    let (qty, price, disc, tax) = (
        l.f64s("l_quantity")?,
        l.f64s("l_extendedprice")?,
        l.f64s("l_discount")?,
        l.f64s("l_tax")?,
    );
    for r in 0..l.num_rows() {
        let g = fslot[fc[r] as usize] * LINE_STATUSES.len() + sslot[sc[r] as usize];
        let s = &mut sums[g * Q1_SUMS..(g + 1) * Q1_SUMS];
        let dp = revenue(price[r], disc[r]);
        s[0] += qty[r];
        s[1] += price[r];
        s[2] += dp;
        s[3] += dp * (1.0 + tax[r]);
        s[4] += disc[r];
        counts[g] += 1;
    }
    ctx.release(l);
    let sums = all_reduce(ctx.ep, &sums, ReduceOp::Sum)?;
    let counts = all_reduce(ctx.ep, &counts, ReduceOp::Sum)?;
    Ok(if ctx.rank() == 0 {
        Some(q1_result(&sums, &counts)?)
    } else {
        None
    })
}

pub(super) fn q3_order() -> [SortKey; 3] {
    [
        SortKey::desc("revenue"),
        SortKey::asc("o_orderdate"),
        SortKey::asc("l_orderkey"),
    ]
}

pub(super) const Q3_COLUMNS: [&str; 4] = ["l_orderkey", "revenue", "o_orderdate", "o_shippriority"];

fn top_q3(t: &ColumnTable) -> Result<ColumnTable> {
    Ok(limit(&sort_by(t, &q3_order())?, Q3_LIMIT))
}

fn q3(ctx: &mut ExecCtx<'_>, w: &WorkerTables) -> Result<Option<ColumnTable>> {
    let c = ctx.scan(w, CUSTOMER, &["c_custkey", "c_mktsegment"])?;
    let c = ctx.local(c, |t| {
        filter(t, &Pred::cmp("c_mktsegment", CmpOp::Eq, Q3_SEGMENT.into()))?.project(&["c_custkey"])
    })?;
    let c = ctx.broadcast(c)?;

    let o = ctx.scan(w, ORDERS, &["o_orderkey", "o_custkey", "o_orderdate", "o_shippriority"])?;
    let o = ctx.local(o, |t| {
        filter(t, &Pred::cmp("o_orderdate", CmpOp::Lt, Lit::Date(q3_date())))
    })?;
    let o = ctx.join(o, c, &["o_custkey"], &["c_custkey"], JoinType::Semi)?;
    let o = ctx.local(o, |t| t.project(&["o_orderkey", "o_orderdate", "o_shippriority"]))?;

    let l = ctx.scan(
        w,
        LINEITEM,
        &["l_orderkey", "l_extendedprice", "l_discount", "l_shipdate"],
    )?;
    let l = ctx.local(l, |t| {
        let f = filter(t, &Pred::cmp("l_shipdate", CmpOp::Gt, Lit::Date(q3_date())))?;
        with_revenue(&f)?.project(&["l_orderkey", "revenue"])
    })?;
    let j = ctx.join(l, o, &["l_orderkey"], &["o_orderkey"], JoinType::Inner)?;
    let top = ctx.local(j, |t| {
        let g = group_aggregate(
            t,
            &["l_orderkey", "o_orderdate", "o_shippriority"],
            &[Agg::new(AggFunc::Sum, "revenue", "revenue")],
        )?;
        top_q3(&g)?.project(&Q3_COLUMNS)
    })?;
    let all = ctx.gather(&top)?;
    ctx.release(top);
    all.map(|t| top_q3(&t)).transpose()
}

fn q6(ctx: &mut ExecCtx<'_>, w: &WorkerTables) -> Result<Option<ColumnTable>> {
    let l = ctx.scan(
        w,
        LINEITEM,
        &["l_shipdate", "l_discount", "l_quantity", "l_extendedprice"],
    )?;
    let pred = Pred::And(vec![
        half_open("l_shipdate", q6_range()),
        Pred::between("l_discount", Lit::Float(Q6_DISCOUNT.0), Lit::Float(Q6_DISCOUNT.1)),
        Pred::cmp("l_quantity", CmpOp::Lt, Lit::Float(Q6_QUANTITY)),
    ]);
    let l = ctx.local(l, |t| filter(t, &pred))?;
    ctx.charge(l.byte_size());
    let price = l.f64s("l_extendedprice")?;
    let disc = l.f64s("l_discount")?;
    let sum: f64 = price.iter().zip(disc).map(|(p, d)| p * d).sum();
    let n = l.num_rows() as i64;
    ctx.release(l);
    let sum = all_reduce(ctx.ep, &[sum], ReduceOp::Sum)?[0];
    let n = all_reduce(ctx.ep, &[n], ReduceOp::Sum)?[0];
    if ctx.rank() != 0 {
        return Ok(None);
    }
    let v = if n > 0 { vec![sum] } else { Vec::new() };
    Ok(Some(ColumnTable::new(vec![Column::float64("revenue", v)])?))
}

fn q12_sum(t: &ColumnTable) -> Result<ColumnTable> {
    group_aggregate(
        t,
        &["l_shipmode"],
        &[
            Agg::new(AggFunc::Sum, "high_line_count", "high_line_count"),
            Agg::new(AggFunc::Sum, "low_line_count", "low_line_count"),
        ],
    )
}

fn q12(ctx: &mut ExecCtx<'_>, w: &WorkerTables, variant: Variant) -> Result<Option<ColumnTable>> {
    let l = ctx.scan(
        w,
        LINEITEM,
        &[
            "l_orderkey",
            "l_shipmode",
            "l_shipdate",
            "l_commitdate",
            "l_receiptdate",
        ],
    )?;
    let pred = Pred::And(vec![
        Pred::is_in("l_shipmode", strs(&Q12_MODES)),
        Pred::col_cmp("l_commitdate", CmpOp::Lt, "l_receiptdate"),
        Pred::col_cmp("l_shipdate", CmpOp::Lt, "l_commitdate"),
        half_open("l_receiptdate", q12_range()),
    ]);
    let l = ctx.local(l, |t| filter(t, &pred)?.project(&["l_orderkey", "l_shipmode"]))?;
    let o = ctx.scan(w, ORDERS, &["o_orderkey", "o_orderpriority"])?;
    let (l, o) = match variant {
        Variant::Default => (l, o),
        Variant::Pa => {
            let l = ctx.shuffle(l, "l_orderkey")?;
            (l, ctx.shuffle(o, "o_orderkey")?)
        }
        Variant::Pb => (ctx.broadcast(l)?, o),
    };
    let j = ctx.join(l, o, &["l_orderkey"], &["o_orderkey"], JoinType::Inner)?;
    let part = ctx.local(j, |t| {
        let high = Pred::is_in("o_orderpriority", strs(&Q12_HIGH)).eval(t)?;
        let hi: Vec<i64> = high.iter().map(|&h| h as i64).collect();
        let lo: Vec<i64> = high.iter().map(|&h| !h as i64).collect();
        let t = t
            .project(&["l_shipmode"])?
            .with_column(Column::int64("high_line_count", hi))?
            .with_column(Column::int64("low_line_count", lo))?;
        q12_sum(&t)
    })?;
    let all = ctx.gather(&part)?;
    ctx.release(part);
    all.map(|t| q12_sum(&t)).transpose()
}

/// One row of per-worker float sums plus the row count `n`.
fn partial_sums(columns: &[(&str, f64)], n: i64) -> Result<ColumnTable> {
    let mut cols: Vec<Column> = columns
        .iter()
        .map(|(name, v)| Column::float64(*name, vec![*v]))
        .collect();
    cols.push(Column::int64("n", vec![n]));
    ColumnTable::new(cols)
}

fn q14(ctx: &mut ExecCtx<'_>, w: &WorkerTables) -> Result<Option<ColumnTable>> {
    let l = ctx.scan(
        w,
        LINEITEM,
        &["l_partkey", "l_extendedprice", "l_discount", "l_shipdate"],
    )?;
    let l = ctx.local(l, |t| {
        let f = filter(t, &half_open("l_shipdate", q14_range()))?;
        with_revenue(&f)?.project(&["l_partkey", "revenue"])
    })?;
    let l = ctx.shuffle(l, "l_partkey")?;
    let p = ctx.scan(w, PART, &["p_partkey", "p_type"])?;
    let j = ctx.join(l, p, &["l_partkey"], &["p_partkey"], JoinType::Inner)?;
    ctx.charge(j.byte_size());
    let promo_rows = Pred::starts_with("p_type", Q14_PROMO).eval(&j)?;
    let rev = j.f64s("revenue")?;
    let mut promo = 0.0;
    let mut total = 0.0;
    for (r, &is_promo) in rev.iter().zip(&promo_rows) {
        if is_promo {
            promo += r;
        }
        total += r;
    }
    let n = j.num_rows() as i64;
    ctx.release(j);
    let partial = partial_sums(&[("promo", promo), ("total", total)], n)?;
    let Some(all) = ctx.gather(&partial)? else {
        return Ok(None);
    };
    let promo: f64 = all.f64s("promo")?.iter().sum();
    let total: f64 = all.f64s("total")?.iter().sum();
    let n: i64 = all.i64s("n")?.iter().sum();
    let v = if n > 0 { vec![100.0 * promo / total] } else { Vec::new() };
    Ok(Some(ColumnTable::new(vec![Column::float64("promo_revenue", v)])?))
}

/// Part-side conditions of one Q19 branch.
fn q19_part_pred(b: &Q19Branch) -> Pred {
    Pred::And(vec![
        Pred::cmp("p_brand", CmpOp::Eq, b.brand.into()),
        Pred::is_in("p_container", strs(&b.containers)),
        Pred::between("p_size", Lit::Int(1), Lit::Int(b.max_size)),
    ])
}

fn q19(ctx: &mut ExecCtx<'_>, w: &WorkerTables) -> Result<Option<ColumnTable>> {
    let p = ctx.scan(w, PART, &["p_partkey", "p_brand", "p_container", "p_size"])?;
    let part_pred = Pred::Or(Q19_BRANCHES.iter().map(q19_part_pred).collect());
    let p = ctx.local(p, |t| filter(t, &part_pred))?;
    let p = ctx.broadcast(p)?;

    let l = ctx.scan(
        w,
        LINEITEM,
        &[
            "l_partkey",
            "l_quantity",
            "l_extendedprice",
            "l_discount",
            "l_shipmode",
            "l_shipinstruct",
        ],
    )?;
    let line_pred = Pred::And(vec![
        Pred::is_in("l_shipmode", strs(&Q19_MODES)),
        Pred::cmp("l_shipinstruct", CmpOp::Eq, Q19_INSTRUCT.into()),
        Pred::between("l_quantity", Lit::Float(1.0), Lit::Float(30.0)),
    ]);
    let l = ctx.local(l, |t| {
        with_revenue(&filter(t, &line_pred)?)?.project(&["l_partkey", "l_quantity", "revenue"])
    })?;
    let j = ctx.join(l, p, &["l_partkey"], &["p_partkey"], JoinType::Inner)?;
    let full = Pred::Or(
        Q19_BRANCHES
            .iter()
            .map(|b| {
                Pred::And(vec![
                    q19_part_pred(b),
                    Pred::between("l_quantity", Lit::Float(b.quantity.0), Lit::Float(b.quantity.1)),
                ])
            })
            .collect(),
    );
    let j = ctx.local(j, |t| filter(t, &full))?;
    ctx.charge(j.byte_size());
    let sum: f64 = j.f64s("revenue")?.iter().sum();
    let n = j.num_rows() as i64;
    ctx.release(j);
    let partial = partial_sums(&[("revenue", sum)], n)?;
    let Some(all) = ctx.gather(&partial)? else {
        return Ok(None);
    };
    let sum: f64 = all.f64s("revenue")?.iter().sum();
    let n: i64 = all.i64s("n")?.iter().sum();
    let v = if n > 0 { vec![sum] } else { Vec::new() };
    Ok(Some(ColumnTable::new(vec![Column::float64("revenue", v)])?))
}
