//! Fixed schema registry for the TPC-H-like tables, with canonical
//! dictionaries for every string column and date helpers.
//!
//! All generated and loaded tables draw their dictionaries from here, so the
//! same string always gets the same code and dictionaries are shared by `Arc`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::table::{DataType, Dictionary};

pub const LINEITEM: &str = "lineitem";
pub const ORDERS: &str = "orders";
pub const PART: &str = "part";
pub const PARTSUPP: &str = "partsupp";
pub const CUSTOMER: &str = "customer";
pub const SUPPLIER: &str = "supplier";
pub const NATION: &str = "nation";
pub const REGION: &str = "region";

pub const TABLE_NAMES: [&str; 8] = [LINEITEM, ORDERS, PART, PARTSUPP, CUSTOMER, SUPPLIER, NATION, REGION];

#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub data_type: DataType,
    /// Canonical dictionary of a string column.
    pub dict: Option<Dictionary>,
}

#[derive(Debug, Clone)]
pub struct TableSpec {
    pub name: &'static str,
    pub columns: Vec<ColumnSpec>,
    /// Partitioning key under the default scheme.
    pub partition_key: &'static str,
}

impl TableSpec {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }
}

pub const RETURN_FLAGS: [&str; 3] = ["A", "N", "R"];
pub const LINE_STATUSES: [&str; 2] = ["F", "O"];
pub const SHIP_MODES: [&str; 7] = ["AIR", "FOB", "MAIL", "RAIL", "REG AIR", "SHIP", "TRUCK"];
pub const SHIP_INSTRUCTS: [&str; 4] = ["COLLECT COD", "DELIVER IN PERSON", "NONE", "TAKE BACK RETURN"];
pub const ORDER_PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];
pub const ORDER_STATUSES: [&str; 3] = ["F", "O", "P"];
pub const SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"];
pub const TYPE_SYLLABLE_1: [&str; 6] = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"];
pub const TYPE_SYLLABLE_2: [&str; 5] = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"];
pub const TYPE_SYLLABLE_3: [&str; 5] = ["TIN", "NICKEL", "BRASS", "STEEL", "COPPER"];
pub const CONTAINER_SYLLABLE_1: [&str; 5] = ["SM", "LG", "MED", "JUMBO", "WRAP"];
pub const CONTAINER_SYLLABLE_2: [&str; 8] = ["CASE", "BOX", "BAG", "JAR", "PKG", "PACK", "CAN", "DRUM"];
pub const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];
/// Nation name and region key.
pub const NATIONS: [(&str, i64); 25] = [
    ("ALGERIA", 0),
    ("ARGENTINA", 1),
    ("BRAZIL", 1),
    ("CANADA", 1),
    ("EGYPT", 4),
    ("ETHIOPIA", 0),
    ("FRANCE", 3),
    ("GERMANY", 3),
    ("INDIA", 2),
    ("INDONESIA", 2),
    ("IRAN", 4),
    ("IRAQ", 4),
    ("JAPAN", 2),
    ("JORDAN", 4),
    ("KENYA", 0),
    ("MOROCCO", 0),
    ("MOZAMBIQUE", 0),
    ("PERU", 1),
    ("CHINA", 2),
    ("ROMANIA", 3),
    ("SAUDI ARABIA", 4),
    ("VIETNAM", 2),
    ("RUSSIA", 3),
    ("UNITED KINGDOM", 3),
    ("UNITED STATES", 1),
];

fn dict_of<S: AsRef<str>>(values: impl IntoIterator<Item = S>) -> Dictionary {
    Arc::new(values.into_iter().map(|s| s.as_ref().to_string()).collect())
}

fn brands() -> Vec<String> {
    (1..=5)
        .flat_map(|m| (1..=5).map(move |n| format!("Brand#{m}{n}")))
        .collect()
}

fn part_types() -> Vec<String> {
    let mut out = Vec::new();
    for a in TYPE_SYLLABLE_1 {
        for b in TYPE_SYLLABLE_2 {
            for c in TYPE_SYLLABLE_3 {
                out.push(format!("{a} {b} {c}"));
            }
        }
    }
    out
}

fn containers() -> Vec<String> {
    let mut out = Vec::new();
    for a in CONTAINER_SYLLABLE_1 {
        for b in CONTAINER_SYLLABLE_2 {
            out.push(format!("{a} {b}"));
        }
    }
    out
}

#[derive(Debug)]
pub struct Registry {
    tables: Vec<TableSpec>,
}

impl Registry {
    pub fn table(&self, name: &str) -> Result<&TableSpec> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown table {name}")))
    }

    pub fn tables(&self) -> &[TableSpec] {
        &self.tables
    }

    /// Canonical dictionary of a string column.
    pub fn dict(&self, table: &str, column: &str) -> Result<Dictionary> {
        self.table(table)?
            .column(column)
            .and_then(|c| c.dict.clone())
            .ok_or_else(|| Error::Schema(format!("{table}.{column} is not a string column")))
    }
}

pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

fn build_registry() -> Registry {
    use DataType::*;
    let col = |name, data_type| ColumnSpec {
        name,
        data_type,
        dict: None,
    };
    let s = |name, dict: Dictionary| ColumnSpec {
        name,
        data_type: Dict,
        dict: Some(dict),
    };
    let flag = |v: &[&str]| dict_of(v.iter());
    Registry {
        tables: vec![
            TableSpec {
                name: LINEITEM,
                partition_key: "l_orderkey",
                columns: vec![
                    col("l_orderkey", Int64),
                    col("l_partkey", Int64),
                    col("l_suppkey", Int64),
                    col("l_linenumber", Int64),
                    col("l_quantity", Float64),
                    col("l_extendedprice", Float64),
                    col("l_discount", Float64),
                    col("l_tax", Float64),
                    s("l_returnflag", flag(&RETURN_FLAGS)),
                    s("l_linestatus", flag(&LINE_STATUSES)),
                    col("l_shipdate", Date),
                    col("l_commitdate", Date),
                    col("l_receiptdate", Date),
                    s("l_shipinstruct", flag(&SHIP_INSTRUCTS)),
                    s("l_shipmode", flag(&SHIP_MODES)),
                ],
            },
            TableSpec {
                name: ORDERS,
                partition_key: "o_orderkey",
                columns: vec![
                    col("o_orderkey", Int64),
                    col("o_custkey", Int64),
                    s("o_orderstatus", flag(&ORDER_STATUSES)),
                    col("o_totalprice", Float64),
                    col("o_orderdate", Date),
                    s("o_orderpriority", flag(&ORDER_PRIORITIES)),
                    col("o_shippriority", Int64),
                ],
            },
            TableSpec {
                name: PART,
                partition_key: "p_partkey",
                columns: vec![
                    col("p_partkey", Int64),
                    s("p_brand", dict_of(brands())),
                    s("p_type", dict_of(part_types())),
                    col("p_size", Int64),
                    s("p_container", dict_of(containers())),
                    col("p_retailprice", Float64),
                ],
            },
            TableSpec {
                name: PARTSUPP,
                partition_key: "ps_partkey",
                columns: vec![
                    col("ps_partkey", Int64),
                    col("ps_suppkey", Int64),
                    col("ps_availqty", Int64),
                    col("ps_supplycost", Float64),
                ],
            },
            TableSpec {
                name: CUSTOMER,
                partition_key: "c_custkey",
                columns: vec![
                    col("c_custkey", Int64),
                    col("c_nationkey", Int64),
                    s("c_mktsegment", flag(&SEGMENTS)),
                    col("c_acctbal", Float64),
                ],
            },
            TableSpec {
                name: SUPPLIER,
                partition_key: "s_suppkey",
                columns: vec![
                    col("s_suppkey", Int64),
                    col("s_nationkey", Int64),
                    col("s_acctbal", Float64),
                ],
            },
            TableSpec {
                name: NATION,
                partition_key: "n_nationkey",
                columns: vec![
                    col("n_nationkey", Int64),
                    s("n_name", dict_of(NATIONS.iter().map(|(n, _)| *n))),
                    col("n_regionkey", Int64),
                ],
            },
            TableSpec {
                name: REGION,
                partition_key: "r_regionkey",
                columns: vec![col("r_regionkey", Int64), s("r_name", flag(&REGIONS))],
            },
        ],
    }
}

/// Code of `value` in a dictionary, if present.
pub fn code_of(dict: &Dictionary, value: &str) -> Option<i32> {
    dict.iter().position(|s| s == value).map(|i| i as i32)
}

/// Lookup table from string to code, for bulk encoding.
pub fn dict_index(dict: &Dictionary) -> HashMap<&str, i32> {
    dict.iter().enumerate().map(|(i, s)| (s.as_str(), i as i32)).collect()
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

/// Days since 1970-01-01.
pub fn days(date: NaiveDate) -> i32 {
    (date - epoch()).num_days() as i32
}

/// Days since 1970-01-01 of a calendar date; panics on an invalid date, so
/// only use it with literals.
pub fn ymd(y: i32, m: u32, d: u32) -> i32 {
    days(NaiveDate::from_ymd_opt(y, m, d).expect("valid date literal"))
}

pub fn parse_date(s: &str) -> Option<i32> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok().map(days)
}

pub fn format_date(d: i32) -> String {
    let date = epoch() + chrono::Duration::days(d as i64);
    format!("{:04}-{:02}-{:02}", date.year(), date.month(), date.day())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates_round_trip() {
        assert_eq!(ymd(1970, 1, 2), 1);
        assert_eq!(parse_date("1995-03-15"), Some(ymd(1995, 3, 15)));
        assert_eq!(format_date(ymd(1998, 12, 1)), "1998-12-01");
        assert_eq!(parse_date("1995-13-01"), None);
    }

    #[test]
    fn registry_dictionaries_are_shared() {
        let a = registry().dict(LINEITEM, "l_shipmode").unwrap();
        let b = registry().dict(LINEITEM, "l_shipmode").unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(registry().dict(PART, "p_type").unwrap().len(), 150);
        assert_eq!(registry().dict(PART, "p_container").unwrap().len(), 40);
        assert!(registry().dict(LINEITEM, "l_orderkey").is_err());
        assert!(registry().table("nope").is_err());
    }
}
