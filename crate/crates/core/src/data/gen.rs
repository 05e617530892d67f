//! Desk-scale TPC-H-like generator.
//!
//! Cardinalities follow dbgen (orders = 1.5M·sf, one to seven lines per order,
//! and so on) but only the columns the supported queries touch are produced.
//! A Zipf exponent `skew > 0` makes the foreign keys `l_orderkey`,
//! `l_partkey`, `l_suppkey` and `o_custkey` heavy-tailed; hot keys are
//! scattered over the key space by a seeded permutation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::schema::*;
use super::Dataset;
use crate::error::{Error, Result};
use crate::table::{Column, ColumnTable};

/// Orders are dated between these, leaving room for shipping.
fn start_date() -> i32 {
    ymd(1992, 1, 1)
}

fn end_date() -> i32 {
    ymd(1998, 12, 31)
}

/// Lines received before this date are returned or accepted, shipped lines
/// before it are final.
fn current_date() -> i32 {
    ymd(1995, 6, 17)
}

fn scaled(base: f64, sf: f64) -> usize {
    ((base * sf).round() as usize).max(1)
}

/// Draws keys in `1..=n`, uniformly or Zipf-distributed with hot ranks
/// scattered by a permutation.
struct KeyDraw {
    n: usize,
    zipf: Option<(Zipf<f64>, Vec<i64>)>,
}

impl KeyDraw {
    fn new(n: usize, skew: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if skew == 0.0 {
            return Ok(KeyDraw { n, zipf: None });
        }
        let zipf = Zipf::new(n as f64, skew).map_err(|e| Error::InvalidArgument(format!("zipf: {e}")))?;
        let mut perm: Vec<i64> = (1..=n as i64).collect();
        perm.shuffle(rng);
        Ok(KeyDraw {
            n,
            zipf: Some((zipf, perm)),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> i64 {
        match &self.zipf {
            None => rng.random_range(1..=self.n as i64),
            Some((z, perm)) => {
                let rank = (z.sample(rng) as usize).clamp(1, self.n);
                perm[rank - 1]
            }
        }
    }
}

fn retail_price(partkey: i64) -> f64 {
    (90000 + ((partkey / 10) % 20001) + 100 * (partkey % 1000)) as f64 / 100.0
}

fn cents(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> f64 {
    rng.random_range(lo..=hi) as f64 / 100.0
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generates a dataset; identical `(sf, skew, seed)` give identical tables.
pub fn generate(sf: f64, skew: f64, seed: u64) -> Result<Dataset> {
    if !(sf > 0.0 && sf.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive, got {sf}"
        )));
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "skew must be a finite exponent >= 0, got {skew}"
        )));
    }
    let reg = registry();
    let n_supp = scaled(10_000.0, sf);
    let n_part = scaled(200_000.0, sf);
    let n_cust = scaled(150_000.0, sf);
    let n_orders = scaled(1_500_000.0, sf);

    let mut tables = BTreeMap::new();

    // region, nation
    tables.insert(
        REGION.to_string(),
        ColumnTable::new(vec![
            Column::int64("r_regionkey", (0..REGIONS.len() as i64).collect()),
            Column::dict(
                "r_name",
                (0..REGIONS.len() as i32).collect(),
                reg.dict(REGION, "r_name")?,
            ),
        ])?,
    );
    tables.insert(
        NATION.to_string(),
        ColumnTable::new(vec![
            Column::int64("n_nationkey", (0..NATIONS.len() as i64).collect()),
            Column::dict(
                "n_name",
                (0..NATIONS.len() as i32).collect(),
                reg.dict(NATION, "n_name")?,
            ),
            Column::int64("n_regionkey", NATIONS.iter().map(|(_, r)| *r).collect()),
        ])?,
    );

    // supplier
    let mut rng = rng_for(seed, 1);
    tables.insert(
        SUPPLIER.to_string(),
        ColumnTable::new(vec![
            Column::int64("s_suppkey", (1..=n_supp as i64).collect()),
            Column::int64("s_nationkey", (0..n_supp).map(|_| rng.random_range(0..25)).collect()),
            Column::float64(
                "s_acctbal",
                (0..n_supp).map(|_| cents(&mut rng, -99_999, 999_999)).collect(),
            ),
        ])?,
    );

    // part
    let mut rng = rng_for(seed, 2);
    let mut brand = Vec::with_capacity(n_part);
    let mut ptype = Vec::with_capacity(n_part);
    let mut size = Vec::with_capacity(n_part);
    let mut container = Vec::with_capacity(n_part);
    for _ in 0..n_part {
        brand.push(rng.random_range(0..25));
        ptype.push(rng.random_range(0..150));
        size.push(rng.random_range(1..=50));
        container.push(rng.random_range(0..40));
    }
    tables.insert(
        PART.to_string(),
        ColumnTable::new(vec![
            Column::int64("p_partkey", (1..=n_part as i64).collect()),
            Column::dict("p_brand", brand, reg.dict(PART, "p_brand")?),
            Column::dict("p_type", ptype, reg.dict(PART, "p_type")?),
            Column::int64("p_size", size),
            Column::dict("p_container", container, reg.dict(PART, "p_container")?),
            Column::float64("p_retailprice", (1..=n_part as i64).map(retail_price).collect()),
        ])?,
    );

    // partsupp: four suppliers per part
    let mut rng = rng_for(seed, 3);
    let s = n_supp as i64;
    let mut ps_partkey = Vec::with_capacity(4 * n_part);
    let mut ps_suppkey = Vec::with_capacity(4 * n_part);
    for p in 1..=n_part as i64 {
        for i in 0..4 {
            ps_partkey.push(p);
            ps_suppkey.push((p + i * (s / 4 + (p - 1) / s)) % s + 1);
        }
    }
    let rows = ps_partkey.len();
    tables.insert(
        PARTSUPP.to_string(),
        ColumnTable::new(vec![
            Column::int64("ps_partkey", ps_partkey),
            Column::int64("ps_suppkey", ps_suppkey),
            Column::int64("ps_availqty", (0..rows).map(|_| rng.random_range(1..=9999)).collect()),
            Column::float64(
                "ps_supplycost",
                (0..rows).map(|_| cents(&mut rng, 100, 100_000)).collect(),
            ),
        ])?,
    );

    // customer
    let mut rng = rng_for(seed, 4);
    tables.insert(
        CUSTOMER.to_string(),
        ColumnTable::new(vec![
            Column::int64("c_custkey", (1..=n_cust as i64).collect()),
            Column::int64("c_nationkey", (0..n_cust).map(|_| rng.random_range(0..25)).collect()),
            Column::dict(
                "c_mktsegment",
                (0..n_cust)
                    .map(|_| rng.random_range(0..SEGMENTS.len() as i32))
                    .collect(),
                reg.dict(CUSTOMER, "c_mktsegment")?,
            ),
            Column::float64(
                "c_acctbal",
                (0..n_cust).map(|_| cents(&mut rng, -99_999, 999_999)).collect(),
            ),
        ])?,
    );

    // orders
    let mut rng = rng_for(seed, 5);
    let cust_draw = KeyDraw::new(n_cust, skew, &mut rng)?;
    let last_order_date = end_date() - 151;
    let mut o_custkey = Vec::with_capacity(n_orders);
    let mut o_orderdate = Vec::with_capacity(n_orders);
    let mut o_priority = Vec::with_capacity(n_orders);
    let mut lines_per_order = Vec::with_capacity(n_orders);
    for _ in 0..n_orders {
        o_custkey.push(cust_draw.draw(&mut rng));
        o_orderdate.push(rng.random_range(start_date()..=last_order_date));
        o_priority.push(rng.random_range(0..ORDER_PRIORITIES.len() as i32));
        lines_per_order.push(rng.random_range(1..=7usize));
    }

    // lineitem: which order each line belongs to
    let mut rng = rng_for(seed, 6);
    let total_lines: usize = lines_per_order.iter().sum();
    let line_order: Vec<usize> = if skew == 0.0 {
        lines_per_order
            .iter()
            .enumerate()
            .flat_map(|(o, &c)| std::iter::repeat_n(o, c))
            .collect()
    } else {
        let draw = KeyDraw::new(n_orders, skew, &mut rng)?;
        let mut v: Vec<usize> = (0..total_lines).map(|_| draw.draw(&mut rng) as usize - 1).collect();
        v.sort_unstable();
        v
    };
    let part_draw = KeyDraw::new(n_part, skew, &mut rng)?;
    let supp_draw = KeyDraw::new(n_supp, skew, &mut rng)?;

    let n = line_order.len();
    let mut l = LineColumns::with_capacity(n);
    let mut o_totalprice = vec![0.0f64; n_orders];
    let mut o_final = vec![0u32; n_orders];
    let mut o_lines = vec![0u32; n_orders];
    let ((a_flag, n_flag, r_flag), (f_status, o_status)) = ((0, 1, 2), (0, 1));
    for &o in &line_order {
        o_lines[o] += 1;
        let odate = o_orderdate[o];
        let partkey = part_draw.draw(&mut rng);
        let quantity = rng.random_range(1..=50) as f64;
        let price = (quantity * retail_price(partkey) * 100.0).round() / 100.0;
        let discount = cents(&mut rng, 0, 10);
        let tax = cents(&mut rng, 0, 8);
        let ship = odate + rng.random_range(1..=121);
        let commit = odate + rng.random_range(30..=90);
        let receipt = ship + rng.random_range(1..=30);
        let flag = if receipt <= current_date() {
            if rng.random_bool(0.5) {
                r_flag
            } else {
                a_flag
            }
        } else {
            n_flag
        };
        let status = if ship > current_date() { o_status } else { f_status };
        if status == f_status {
            o_final[o] += 1;
        }
        o_totalprice[o] += price * (1.0 + tax) * (1.0 - discount);

        l.orderkey.push(o as i64 + 1);
        l.partkey.push(partkey);
        l.suppkey.push(supp_draw.draw(&mut rng));
        l.linenumber.push(o_lines[o] as i64);
        l.quantity.push(quantity);
        l.extendedprice.push(price);
        l.discount.push(discount);
        l.tax.push(tax);
        l.returnflag.push(flag);
        l.linestatus.push(status);
        l.shipdate.push(ship);
        l.commitdate.push(commit);
        l.receiptdate.push(receipt);
        l.shipinstruct.push(rng.random_range(0..SHIP_INSTRUCTS.len() as i32));
        l.shipmode.push(rng.random_range(0..SHIP_MODES.len() as i32));
    }

    let o_status: Vec<i32> = (0..n_orders)
        .map(|o| match (o_final[o], o_lines[o]) {
            (f, t) if f == t => 0,
            (0, _) => 1,
            _ => 2,
        })
        .collect();
    tables.insert(
        ORDERS.to_string(),
        ColumnTable::new(vec![
            Column::int64("o_orderkey", (1..=n_orders as i64).collect()),
            Column::int64("o_custkey", o_custkey),
            Column::dict("o_orderstatus", o_status, reg.dict(ORDERS, "o_orderstatus")?),
            Column::float64(
                "o_totalprice",
                o_totalprice.iter().map(|p| (p * 100.0).round() / 100.0).collect(),
            ),
            Column::date("o_orderdate", o_orderdate),
            Column::dict("o_orderpriority", o_priority, reg.dict(ORDERS, "o_orderpriority")?),
            Column::int64("o_shippriority", vec![0; n_orders]),
        ])?,
    );
    tables.insert(LINEITEM.to_string(), l.into_table()?);

    Ok(Dataset::new(sf, skew, seed, tables))
}

struct LineColumns {
    orderkey: Vec<i64>,
    partkey: Vec<i64>,
    suppkey: Vec<i64>,
    linenumber: Vec<i64>,
    quantity: Vec<f64>,
    extendedprice: Vec<f64>,
    discount: Vec<f64>,
    tax: Vec<f64>,
    returnflag: Vec<i32>,
    linestatus: Vec<i32>,
    shipdate: Vec<i32>,
    commitdate: Vec<i32>,
    receiptdate: Vec<i32>,
    shipinstruct: Vec<i32>,
    shipmode: Vec<i32>,
}

impl LineColumns {
    fn with_capacity(n: usize) -> Self {
        LineColumns {
            orderkey: Vec::with_capacity(n),
            partkey: Vec::with_capacity(n),
            suppkey: Vec::with_capacity(n),
            linenumber: Vec::with_capacity(n),
            quantity: Vec::with_capacity(n),
            extendedprice: Vec::with_capacity(n),
            discount: Vec::with_capacity(n),
            tax: Vec::with_capacity(n),
            returnflag: Vec::with_capacity(n),
            linestatus: Vec::with_capacity(n),
            shipdate: Vec::with_capacity(n),
            commitdate: Vec::with_capacity(n),
            receiptdate: Vec::with_capacity(n),
            shipinstruct: Vec::with_capacity(n),
            shipmode: Vec::with_capacity(n),
        }
    }

    fn into_table(self) -> Result<ColumnTable> {
        let reg = registry();
        ColumnTable::new(vec![
            Column::int64("l_orderkey", self.orderkey),
            Column::int64("l_partkey", self.partkey),
            Column::int64("l_suppkey", self.suppkey),
            Column::int64("l_linenumber", self.linenumber),
            Column::float64("l_quantity", self.quantity),
            Column::float64("l_extendedprice", self.extendedprice),
            Column::float64("l_discount", self.discount),
            Column::float64("l_tax", self.tax),
            Column::dict("l_returnflag", self.returnflag, reg.dict(LINEITEM, "l_returnflag")?),
            Column::dict("l_linestatus", self.linestatus, reg.dict(LINEITEM, "l_linestatus")?),
            Column::date("l_shipdate", self.shipdate),
            Column::date("l_commitdate", self.commitdate),
            Column::date("l_receiptdate", self.receiptdate),
            Column::dict(
                "l_shipinstruct",
                self.shipinstruct,
                reg.dict(LINEITEM, "l_shipinstruct")?,
            ),
            Column::dict("l_shipmode", self.shipmode, reg.dict(LINEITEM, "l_shipmode")?),
        ])
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn cardinalities_at_sf_001() {
        let ds = generate(0.01, 0.0, 1).unwrap();
        let lines = ds.table(LINEITEM).unwrap().num_rows() as f64;
        assert!((lines - 60_000.0).abs() / 60_000.0 < 0.01, "{lines}");
        assert_eq!(ds.table(ORDERS).unwrap().num_rows(), 15_000);
        assert_eq!(ds.table(PART).unwrap().num_rows(), 2_000);
        assert_eq!(ds.table(PARTSUPP).unwrap().num_rows(), 8_000);
        assert_eq!(ds.table(CUSTOMER).unwrap().num_rows(), 1_500);
        assert_eq!(ds.table(SUPPLIER).unwrap().num_rows(), 100);
        assert_eq!(ds.table(NATION).unwrap().num_rows(), 25);
    }

    #[test]
    fn skew_concentrates_orderkeys() {
        let ds = generate(0.01, 1.5, 1).unwrap();
        let li = ds.table(LINEITEM).unwrap();
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for &k in li.i64s("l_orderkey").unwrap() {
            *counts.entry(k).or_default() += 1;
        }
        let top = *counts.values().max().unwrap() as f64;
        assert!(top / li.num_rows() as f64 >= 0.05);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(0.002, 0.7, 9).unwrap(), generate(0.002, 0.7, 9).unwrap());
        assert_ne!(
            generate(0.002, 0.0, 9).unwrap().table(LINEITEM).unwrap(),
            generate(0.002, 0.0, 10).unwrap().table(LINEITEM).unwrap()
        );
    }

    #[test]
    fn referential_integrity() {
        let ds = generate(0.005, 1.2, 4).unwrap();
        let n_orders = ds.table(ORDERS).unwrap().num_rows() as i64;
        let n_part = ds.table(PART).unwrap().num_rows() as i64;
        let n_cust = ds.table(CUSTOMER).unwrap().num_rows() as i64;
        let li = ds.table(LINEITEM).unwrap();
        assert!(li
            .i64s("l_orderkey")
            .unwrap()
            .iter()
            .all(|&k| (1..=n_orders).contains(&k)));
        assert!(li.i64s("l_partkey").unwrap().iter().all(|&k| (1..=n_part).contains(&k)));
        let o = ds.table(ORDERS).unwrap();
        assert!(o.i64s("o_custkey").unwrap().iter().all(|&k| (1..=n_cust).contains(&k)));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate(0.0, 0.0, 1).is_err());
        assert!(generate(-1.0, 0.0, 1).is_err());
        assert!(generate(0.01, -0.5, 1).is_err());
    }
}
