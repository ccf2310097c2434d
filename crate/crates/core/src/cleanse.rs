//! Value standardization, validity checks and within-register
//! de-duplication.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;

use crate::deident::{hash_value, Salt};
use crate::error::{Error, Result};
use crate::record::{
    FieldValue, Register, RegisterRecord, ValueRule, MAIN_VARIABLES, MIN_BIRTH_YEAR, SEX,
    YEAR_OF_BIRTH,
};

/// Replaces every mapped source value by its canonical value. Unmapped
/// values pass through untouched.
pub fn standardize_values(mut register: Register) -> Register {
    let maps = register.dictionary.value_maps.clone();
    for record in &mut register.records {
        for (field, map) in &maps {
            let Some(slot) = record.get_mut(field) else { continue };
            if let Some(canonical) = slot.as_str().and_then(|v| map.get(v)) {
                *slot = FieldValue::Present(canonical.clone());
            }
        }
    }
    register
}

/// Rules always enforced: sex in {M, F}, birth year in [1850, census year].
pub fn default_rules(census_year: i32) -> BTreeMap<String, ValueRule> {
    BTreeMap::from([
        (SEX.to_string(), ValueRule::one_of(["M", "F"])),
        (
            YEAR_OF_BIRTH.to_string(),
            ValueRule::IntRange {
                min: i64::from(MIN_BIRTH_YEAR),
                max: i64::from(census_year),
            },
        ),
    ])
}

/// Per-field count of values replaced with N/A.
pub type ValidationTally = BTreeMap<String, usize>;

/// Replaces values outside their field's permitted set with N/A. The
/// default sex/birth-year rules apply alongside the dictionary's own rules.
pub fn validate_values(mut register: Register, census_year: i32) -> (Register, ValidationTally) {
    let mut rules: Vec<(String, ValueRule)> = default_rules(census_year).into_iter().collect();
    rules.extend(
        register
            .dictionary
            .valid_values
            .iter()
            .map(|(k, v)| (k.clone(), v.clone())),
    );
    let mut tally = ValidationTally::new();
    for record in &mut register.records {
        for (field, rule) in &rules {
            let Some(slot) = record.get_mut(field) else { continue };
            if slot.as_str().is_some_and(|v| !rule.permits(v)) {
                *slot = FieldValue::NotAvailable;
                *tally.entry(field.clone()).or_insert(0) += 1;
            }
        }
    }
    (register, tally)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupAction {
    KeptLatest,
    DroppedAll,
}

impl DedupAction {
    pub fn as_str(self) -> &'static str {
        match self {
            DedupAction::KeptLatest => "kept_latest",
            DedupAction::DroppedAll => "dropped_all",
        }
    }
}

/// One PID that occurred more than once in a register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupGroup {
    /// The PID as it stood at dedup time (raw, before de-identification).
    pub pid: String,
    pub size: usize,
    pub action: DedupAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupReport {
    pub register_id: String,
    pub groups: Vec<DedupGroup>,
}

impl DedupReport {
    pub fn dropped_groups(&self) -> usize {
        self.groups
            .iter()
            .filter(|g| g.action == DedupAction::DroppedAll)
            .count()
    }

    pub fn removed_records(&self) -> usize {
        self.groups
            .iter()
            .map(|g| match g.action {
                DedupAction::KeptLatest => g.size - 1,
                DedupAction::DroppedAll => g.size,
            })
            .sum()
    }
}

fn main_values(record: &RegisterRecord) -> [&FieldValue; 6] {
    MAIN_VARIABLES.map(|f| record.value(f))
}

/// Collapses rows sharing a present PID. The most recent row survives when
/// the most recent rows agree on the six main variables; otherwise the
/// whole group is removed. Rows with N/A PID are left alone. Surviving rows
/// keep their source order.
pub fn dedup_register(mut register: Register) -> (Register, DedupReport) {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in register.records.iter().enumerate() {
        if let Some(pid) = r.pid.as_str() {
            groups.entry(pid).or_default().push(i);
        }
    }
    let mut report = DedupReport {
        register_id: register.register_id.clone(),
        groups: Vec::new(),
    };
    let mut remove: BTreeSet<usize> = BTreeSet::new();
    for (pid, idx) in &groups {
        if idx.len() < 2 {
            continue;
        }
        let records = &register.records;
        let latest = idx.iter().map(|&i| records[i].record_timestamp).max().unwrap();
        let top: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| records[i].record_timestamp == latest)
            .collect();
        let agree = top
            .iter()
            .all(|&i| main_values(&records[i]) == main_values(&records[top[0]]));
        let action = if agree {
            remove.extend(idx.iter().copied().filter(|&i| i != top[0]));
            DedupAction::KeptLatest
        } else {
            remove.extend(idx.iter().copied());
            DedupAction::DroppedAll
        };
        report.groups.push(DedupGroup {
            pid: pid.to_string(),
            size: idx.len(),
            action,
        });
    }
    if !remove.is_empty() {
        let records = std::mem::take(&mut register.records);
        register.records = records
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !remove.contains(i))
            .map(|(_, r)| r)
            .collect();
    }
    (register, report)
}

/// Counts produced by [`cleanse`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleanseSummary {
    pub register_id: String,
    pub input_records: usize,
    pub output_records: usize,
    pub invalidated: ValidationTally,
    pub duplicate_groups: usize,
    pub dropped_groups: usize,
}

/// Standardize, validate, then de-duplicate one register.
pub fn cleanse(register: Register, census_year: i32) -> (Register, DedupReport, CleanseSummary) {
    let input_records = register.records.len();
    let register = standardize_values(register);
    let (register, invalidated) = validate_values(register, census_year);
    let (register, dedup) = dedup_register(register);
    let summary = CleanseSummary {
        register_id: register.register_id.clone(),
        input_records,
        output_records: register.records.len(),
        invalidated,
        duplicate_groups: dedup.groups.len(),
        dropped_groups: dedup.dropped_groups(),
    };
    (register, dedup, summary)
}

/// Writes dedup groups as CSV (`register_id, pid_hash_prefix, group_size,
/// action`). PIDs appear only as the first 8 hex characters of their salted
/// digest.
pub fn write_dedup_reports<W: Write>(writer: W, reports: &[DedupReport], salt: &Salt) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["register_id", "pid_hash_prefix", "group_size", "action"])?;
    for report in reports {
        for g in &report.groups {
            let digest = hash_value(&FieldValue::Present(g.pid.clone()), salt)?;
            w.write_record([
                report.register_id.as_str(),
                &digest[..8],
                &g.size.to_string(),
                g.action.as_str(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<dedup report>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{FieldDictionary, PREFIX};
    use proptest::prelude::*;

    fn rec(pid: Option<&str>, sex: &str, ts: i64) -> RegisterRecord {
        let mut r = RegisterRecord::new("r1", ts);
        r.pid = pid.map_or(FieldValue::NotAvailable, |p| FieldValue::Present(p.into()));
        r.sex = FieldValue::from_raw(sex);
        r.first_name = FieldValue::Present("Somchai".into());
        r
    }

    fn register(records: Vec<RegisterRecord>) -> Register {
        Register::new("r1", 2019, records, FieldDictionary::default()).unwrap()
    }

    fn sex_dictionary() -> FieldDictionary {
        let mut d = FieldDictionary::default();
        d.value_maps.insert(
            SEX.into(),
            BTreeMap::from([("1".into(), "M".into()), ("2".into(), "F".into())]),
        );
        d.value_maps
            .insert(PREFIX.into(), BTreeMap::from([("นาย".into(), "Mr.".into())]));
        d
    }

    #[test]
    fn standardize_examples() {
        let mut a = rec(Some("1"), "1", 0);
        a.prefix = FieldValue::Present("นาย".into());
        let b = rec(Some("2"), "M", 0);
        let mut reg = register(vec![a, b]);
        reg.dictionary = sex_dictionary();
        let out = standardize_values(reg);
        assert_eq!(out.records[0].sex.as_str(), Some("M"));
        assert_eq!(out.records[0].prefix.as_str(), Some("Mr."));
        assert_eq!(out.records[1].sex.as_str(), Some("M"));
    }

    #[test]
    fn value_map_round_trip_oracle() {
        // Every source key maps to its canonical value, canonical values are
        // fixed points, and nothing else changes.
        let dict = sex_dictionary();
        for (src, canon) in &dict.value_maps[SEX] {
            let mut reg = register(vec![rec(Some("1"), src, 0), rec(Some("2"), canon, 0)]);
            reg.dictionary = dict.clone();
            let out = standardize_values(reg);
            assert_eq!(out.records[0].sex.as_str(), Some(canon.as_str()));
            assert_eq!(out.records[1].sex.as_str(), Some(canon.as_str()));
        }
    }

    #[test]
    fn validate_examples() {
        let mut bad_year = rec(Some("2"), "F", 0);
        bad_year.year_of_birth = FieldValue::Present("20XX".into());
        let reg = register(vec![rec(Some("1"), "X", 0), bad_year]);
        let (out, tally) = validate_values(reg, 2019);
        assert_eq!(out.records[0].sex, FieldValue::NotAvailable);
        assert_eq!(out.records[1].year_of_birth, FieldValue::NotAvailable);
        assert_eq!(out.records[1].sex.as_str(), Some("F"));
        assert_eq!(tally[SEX], 1);
        assert_eq!(tally[YEAR_OF_BIRTH], 1);
    }

    #[test]
    fn dedup_keeps_latest_when_values_agree() {
        let reg = register(vec![rec(Some("1"), "M", 10), rec(Some("1"), "M", 20)]);
        let (out, report) = dedup_register(reg);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].record_timestamp, 20);
        assert_eq!(report.groups[0].action, DedupAction::KeptLatest);
    }

    #[test]
    fn dedup_drops_conflicting_tie() {
        let reg = register(vec![rec(Some("1"), "M", 20), rec(Some("1"), "F", 20)]);
        let (out, report) = dedup_register(reg);
        assert!(out.records.is_empty());
        assert_eq!(report.dropped_groups(), 1);
    }

    #[test]
    fn dedup_conflict_resolved_by_strict_latest() {
        let reg = register(vec![rec(Some("1"), "M", 10), rec(Some("1"), "F", 20)]);
        let (out, _) = dedup_register(reg);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].sex.as_str(), Some("F"));
    }

    #[test]
    fn dedup_single_and_na_pid_untouched() {
        let reg = register(vec![rec(Some("1"), "M", 10), rec(None, "M", 1), rec(None, "M", 1)]);
        let (out, report) = dedup_register(reg.clone());
        assert_eq!(out, reg);
        assert!(report.groups.is_empty());
    }

    fn arb_register() -> impl Strategy<Value = Register> {
        proptest::collection::vec(
            (proptest::option::of(0u8..6), prop_oneof![Just("M"), Just("F"), Just("")], 0i64..4),
            0..30,
        )
        .prop_map(|rows| {
            register(
                rows.into_iter()
                    .map(|(pid, sex, ts)| rec(pid.map(|p| p.to_string()).as_deref(), sex, ts))
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent_and_unique(reg in arb_register()) {
            let (once, _) = dedup_register(reg.clone());
            let mut seen = BTreeSet::new();
            for r in &once.records {
                if let Some(p) = r.pid.as_str() {
                    prop_assert!(seen.insert(p.to_string()));
                }
            }
            let (twice, report) = dedup_register(once.clone());
            prop_assert_eq!(twice, once);
            prop_assert!(report.groups.is_empty());
        }

        #[test]
        fn cleansing_leaves_only_canonical_or_na(
            sexes in proptest::collection::vec("[0-9MFX]", 1..20),
            years in proptest::collection::vec("[0-9X]{2,4}", 1..20),
        ) {
            let records: Vec<_> = sexes.iter().zip(years.iter()).enumerate().map(|(i, (s, y))| {
                let mut r = rec(Some(&i.to_string()), s, 0);
                r.year_of_birth = FieldValue::from_raw(y);
                r
            }).collect();
            let before: Vec<_> = records.iter().map(|r| r.sex.is_present() || r.year_of_birth.is_present()).collect();
            let mut reg = register(records);
            reg.dictionary = sex_dictionary();
            let (out, _, _) = cleanse(reg, 2019);
            for (r, had) in out.records.iter().zip(before) {
                prop_assert!(r.check(2019).is_ok());
                // no value invented
                prop_assert!(had || (!r.sex.is_present() && !r.year_of_birth.is_present()));
            }
        }
    }
}
