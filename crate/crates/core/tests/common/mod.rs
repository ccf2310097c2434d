#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use regcensus::cleanse::cleanse;
use regcensus::deident::{deidentify, digest, DeidentPolicy, Salt};
use regcensus::integrate::relabel_fields;
use regcensus::record::{FieldValue, ReferenceCensus, Register, MAIN_VARIABLES};
use regcensus::synth::Scenario;

pub const CENSUS_AREA: [&str; 3] = ["2401", "2402", "2403"];

pub fn salt() -> Salt {
    Salt::new(b"integration-test-salt-0001".to_vec()).unwrap()
}

/// Relabel, cleanse and de-identify each register.
pub fn prepare(registers: &[Register], census_year: i32, salt: &Salt) -> Vec<Register> {
    registers
        .iter()
        .cloned()
        .map(|r| {
            let r = relabel_fields(r).unwrap();
            let (r, _, _) = cleanse(r, census_year);
            deidentify(r, &DeidentPolicy::default(), salt).unwrap()
        })
        .collect()
}

pub fn hashed_reference(s: &Scenario, salt: &Salt) -> ReferenceCensus {
    let mut records = s.reference_records.clone();
    for r in &mut records {
        if let FieldValue::Present(p) = &r.pid {
            r.pid = FieldValue::Present(digest(p, salt));
        }
    }
    ReferenceCensus::from_records(&records, s.truth.census_year)
}

pub const MERGED_FIELDS: [&str; 7] = [
    "pid",
    "prefix",
    "first_name",
    "last_name",
    "year_of_birth",
    "sex",
    "address_area",
];
const COMBINED: [&str; 5] = ["first_name", "last_name", "year_of_birth", "sex", "address_area"];

#[derive(Debug, Clone)]
struct FlatRecord {
    register_id: String,
    timestamp: i64,
    values: BTreeMap<&'static str, Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRow {
    pub values: BTreeMap<&'static str, Option<String>>,
    pub registers: BTreeSet<String>,
}

/// Integrated database computed by exhaustive pairwise comparison.
#[derive(Debug, Clone)]
pub struct OracleDb {
    pub rows: BTreeMap<String, OracleRow>,
    pub census_year: i32,
}

fn flatten(registers: &[Register], salt: &Salt) -> Vec<FlatRecord> {
    let mut out = Vec::new();
    for reg in registers {
        for r in &reg.records {
            let mut values: BTreeMap<&'static str, Option<String>> = MERGED_FIELDS
                .iter()
                .map(|f| (*f, r.value(f).as_str().map(str::to_string)))
                .collect();
            if let Some(code) = r.extra.get("gender") {
                let sex = match code.as_str() {
                    Some("1") => Some("M".to_string()),
                    Some("2") => Some("F".to_string()),
                    _ => None,
                };
                values.insert("sex", sex);
            }
            if let Some(Some(p)) = values.get("pid").cloned() {
                values.insert("pid", Some(digest(&p, salt)));
            }
            out.push(FlatRecord {
                register_id: reg.register_id.clone(),
                timestamp: r.record_timestamp,
                values,
            });
        }
    }
    out
}

fn combined_key(r: &FlatRecord) -> Option<Vec<String>> {
    COMBINED.iter().map(|f| r.values[f].clone()).collect()
}

fn same_person(a: &FlatRecord, b: &FlatRecord) -> bool {
    match (&a.values["pid"], &b.values["pid"]) {
        (Some(x), Some(y)) => x == y,
        (None, None) => matches!((combined_key(a), combined_key(b)), (Some(x), Some(y)) if x == y),
        _ => false,
    }
}

/// Nested-loop join of raw generated registers, hashing PIDs with `salt`.
pub fn oracle_integrate(registers: &[Register], salt: &Salt, census_year: i32) -> OracleDb {
    let records = flatten(registers, salt);
    let joinable: Vec<&FlatRecord> = records
        .iter()
        .filter(|r| r.values["pid"].is_some() || combined_key(r).is_some())
        .collect();
    let mut groups: Vec<Vec<&FlatRecord>> = Vec::new();
    'outer: for r in joinable {
        for g in groups.iter_mut() {
            if same_person(g[0], r) {
                g.push(r);
                continue 'outer;
            }
        }
        groups.push(vec![r]);
    }

    let mut by_pid: Vec<(String, OracleRow)> = Vec::new();
    let mut by_key: Vec<(Vec<String>, OracleRow)> = Vec::new();
    for g in groups {
        let mut values = BTreeMap::new();
        for f in MERGED_FIELDS {
            let mut best: Option<&FlatRecord> = None;
            for r in &g {
                if r.values[f].is_none() {
                    continue;
                }
                best = match best {
                    None => Some(r),
                    Some(b) => {
                        let better = r.timestamp > b.timestamp
                            || (r.timestamp == b.timestamp && r.register_id < b.register_id)
                            || (r.timestamp == b.timestamp
                                && r.register_id == b.register_id
                                && r.values[f] < b.values[f]);
                        Some(if better { r } else { b })
                    }
                };
            }
            values.insert(f, best.and_then(|b| b.values[f].clone()));
        }
        let row = OracleRow {
            values,
            registers: g.iter().map(|r| r.register_id.clone()).collect(),
        };
        match &g[0].values["pid"] {
            Some(p) => by_pid.push((p.clone(), row)),
            None => by_key.push((combined_key(g[0]).unwrap(), row)),
        }
    }
    by_pid.sort_by(|a, b| a.0.cmp(&b.0));
    by_key.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rows = BTreeMap::new();
    for (i, (_, row)) in by_pid.into_iter().enumerate() {
        rows.insert(format!("C-{:06}", i + 1), row);
    }
    for (i, (_, row)) in by_key.into_iter().enumerate() {
        rows.insert(format!("K-{:06}", i + 1), row);
    }
    OracleDb { rows, census_year }
}

/// Framework membership rules applied directly to oracle rows.
pub fn oracle_members(db: &OracleDb, framework: &str, min_registers: usize) -> BTreeSet<String> {
    db.rows
        .iter()
        .filter(|(_, row)| {
            let present = |f: &str| row.values[f].is_some();
            match framework {
                "F1" => row.values["address_area"]
                    .as_deref()
                    .is_some_and(|a| CENSUS_AREA.contains(&a)),
                "F2" => present("pid"),
                "F3" => MAIN_VARIABLES.iter().all(|f| present(f)),
                "F4" => MAIN_VARIABLES.iter().any(|f| present(f)),
                "F5" => row.registers.len() >= min_registers,
                _ => unreachable!(),
            }
        })
        .map(|(k, _)| k.clone())
        .collect()
}

/// Age-bin index by direct arithmetic.
pub fn oracle_bin(year_of_birth: i32, census_year: i32) -> usize {
    (((census_year - year_of_birth) / 5) as usize).min(14)
}

/// ½ Σ (p−q)²/(p+q) over categories with mass.
pub fn oracle_chd_squared(a: &[u64], b: &[u64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (p, q) = (*x as f64 / sa, *y as f64 / sb);
        if p + q > 0.0 {
            acc += (p - q) * (p - q) / (p + q);
        }
    }
    acc / 2.0
}

/// Pearson statistic of a 2×n table, empty columns dropped.
pub fn oracle_chi2(a: &[u64], b: &[u64]) -> (f64, usize) {
    let cols: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(x, y)| (*x as f64, *y as f64))
        .collect();
    let ra: f64 = cols.iter().map(|c| c.0).sum();
    let rb: f64 = cols.iter().map(|c| c.1).sum();
    let n = ra + rb;
    let mut stat = 0.0;
    for (x, y) in &cols {
        let col = x + y;
        let (ea, eb) = (ra * col / n, rb * col / n);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    (stat, cols.len() - 1)
}
