//! Joining cleansed, de-identified registers into one integrated database:
//! field re-labeling, primary-key auditing, the citizen-ID / combined-key
//! join and priority-ordered value replacement.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{
    GlobalKey, IntegratedDatabase, KeyOrigin, Register, RegisterRecord, ADDRESS_AREA,
    FIRST_NAME, LAST_NAME, MAIN_VARIABLES, PID, SEX, YEAR_OF_BIRTH,
};

/// Applies the register dictionary's field renames (e.g. `gender` ->
/// `sex`).
pub fn relabel_fields(mut register: Register) -> Result<Register> {
    register.dictionary.validate()?;
    let renames: Vec<(String, String)> = register
        .dictionary
        .renames
        .iter()
        .filter(|(s, t)| s != t)
        .map(|(s, t)| (s.clone(), t.clone()))
        .collect();
    if let Some((s, t)) = renames
        .iter()
        .find(|(_, t)| renames.iter().any(|(s, _)| s == t))
    {
        return Err(Error::config(format!(
            "rename {s} -> {t} chains into another rename"
        )));
    }
    for record in &mut register.records {
        for (source, target) in &renames {
            let value = record.take(source);
            if !value.is_present() {
                continue;
            }
            if record.value(target).is_present() {
                return Err(Error::config(format!(
                    "register {}: both {source:?} and {target:?} carry values for {target:?}",
                    register.register_id
                )));
            }
            record.set(target, value);
        }
    }
    Ok(register)
}

/// Join keys: citizen ID first, then the optional combined key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeySpec {
    pub combined_fields: Vec<String>,
    pub fallback_enabled: bool,
}

impl Default for KeySpec {
    fn default() -> Self {
        KeySpec {
            combined_fields: [FIRST_NAME, LAST_NAME, YEAR_OF_BIRTH, SEX, ADDRESS_AREA]
                .map(String::from)
                .to_vec(),
            fallback_enabled: true,
        }
    }
}

impl KeySpec {
    pub fn pid_only() -> Self {
        KeySpec {
            fallback_enabled: false,
            ..KeySpec::default()
        }
    }

    /// The combined key of a record, if every component is present.
    pub fn combined_key<'a>(&self, record: &'a RegisterRecord) -> Option<Vec<&'a str>> {
        self.combined_fields
            .iter()
            .map(|f| record.value(f).as_str())
            .collect()
    }
}

/// How the surviving value of a field is chosen within a person group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReplacementPolicy {
    /// Most recent record wins; timestamp ties go to `tie_break` order,
    /// then the smallest register id.
    Timeline {
        #[serde(default)]
        tie_break: Option<Vec<String>>,
    },
    /// Listed register order wins; ties within a register go to the most
    /// recent record.
    SourcePriority { order: Vec<String> },
}

impl Default for ReplacementPolicy {
    fn default() -> Self {
        ReplacementPolicy::Timeline { tie_break: None }
    }
}

impl ReplacementPolicy {
    fn priority_list(&self) -> Option<&[String]> {
        match self {
            ReplacementPolicy::Timeline { tie_break } => tie_break.as_deref(),
            ReplacementPolicy::SourcePriority { order } => Some(order),
        }
    }

    /// A priority list must name every participating register exactly once.
    pub fn validate(&self, register_ids: &BTreeSet<&str>) -> Result<()> {
        let Some(list) = self.priority_list() else {
            return Ok(());
        };
        let listed: BTreeSet<&str> = list.iter().map(String::as_str).collect();
        if listed.len() != list.len() || &listed != register_ids {
            return Err(Error::config(format!(
                "source priority {list:?} must list each of {register_ids:?} exactly once"
            )));
        }
        Ok(())
    }

    fn rank(&self, register_id: &str) -> usize {
        self.priority_list()
            .and_then(|l| l.iter().position(|r| r == register_id))
            .unwrap_or(0)
    }

    /// `Less` means `a` is preferred over `b`.
    fn prefer(&self, a: &RegisterRecord, b: &RegisterRecord) -> Ordering {
        let by_time = b.record_timestamp.cmp(&a.record_timestamp);
        let by_rank = self.rank(&a.register_id).cmp(&self.rank(&b.register_id));
        let primary = match self {
            ReplacementPolicy::Timeline { .. } => by_time.then(by_rank),
            ReplacementPolicy::SourcePriority { .. } => by_rank.then(by_time),
        };
        primary.then_with(|| a.register_id.cmp(&b.register_id))
    }
}

/// Per-register quality scorecard (informational only).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegisterScorecard {
    pub register_id: String,
    pub reference_year: i32,
    pub records: usize,
    /// Share of present values over the six main variables.
    pub completeness: f64,
    pub field_completeness: BTreeMap<String, f64>,
    /// Share of records joinable by citizen ID.
    pub degree_of_integration: f64,
    /// Number of fields with at least one present value.
    pub utility: usize,
}

impl RegisterScorecard {
    pub fn of(register: &Register) -> Self {
        let n = register.records.len();
        let share = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let field_completeness: BTreeMap<String, f64> = MAIN_VARIABLES
            .iter()
            .map(|f| {
                let present = register.records.iter().filter(|r| r.value(f).is_present()).count();
                (f.to_string(), share(present))
            })
            .collect();
        let completeness = field_completeness.values().sum::<f64>() / MAIN_VARIABLES.len() as f64;
        let mut used: BTreeSet<&str> = BTreeSet::new();
        for r in &register.records {
            used.extend(r.field_names().filter(|f| r.value(f).is_present()));
        }
        RegisterScorecard {
            register_id: register.register_id.clone(),
            reference_year: register.reference_year,
            records: n,
            completeness,
            degree_of_integration: field_completeness[PID],
            field_completeness,
            utility: used.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationLog {
    pub input_records: usize,
    pub merged_by_pid: usize,
    pub merged_by_combined_key: usize,
    pub dropped: usize,
    pub groups: usize,
    pub groups_by_pid: usize,
    pub groups_by_combined_key: usize,
    pub per_register_scorecard: Vec<RegisterScorecard>,
}

/// Three-step join: group by citizen ID, then by combined key for records
/// lacking one (when enabled), then merge each group under `policy`.
/// Records matching neither key are dropped.
pub fn integrate(
    registers: &[Register],
    keys: &KeySpec,
    policy: &ReplacementPolicy,
) -> Result<(IntegratedDatabase, IntegrationLog)> {
    if registers.is_empty() {
        return Err(Error::config("integration needs at least one register"));
    }
    let ids: BTreeSet<&str> = registers.iter().map(|r| r.register_id.as_str()).collect();
    if ids.len() != registers.len() {
        return Err(Error::config("register ids must be unique within an integration"));
    }
    if keys.fallback_enabled && keys.combined_fields.is_empty() {
        return Err(Error::config("combined key has no fields"));
    }
    policy.validate(&ids)?;

    let mut by_pid: BTreeMap<&str, Vec<&RegisterRecord>> = BTreeMap::new();
    let mut by_combined: BTreeMap<Vec<&str>, Vec<&RegisterRecord>> = BTreeMap::new();
    let mut dropped = 0;
    let mut input_records = 0;
    for record in registers.iter().flat_map(|r| &r.records) {
        input_records += 1;
        if let Some(pid) = record.pid.as_str() {
            by_pid.entry(pid).or_default().push(record);
        } else if let Some(key) = keys.fallback_enabled.then(|| keys.combined_key(record)).flatten() {
            by_combined.entry(key).or_default().push(record);
        } else {
            dropped += 1;
        }
    }

    let mut db = IntegratedDatabase {
        registers: ids.iter().map(|s| s.to_string()).collect(),
        census_year: registers.iter().map(|r| r.reference_year).max().unwrap_or_default(),
        ..Default::default()
    };
    let groups = by_pid
        .values()
        .map(|g| (KeyOrigin::CitizenId, g))
        .enumerate()
        .chain(
            by_combined
                .values()
                .map(|g| (KeyOrigin::CombinedKey, g))
                .enumerate(),
        );
    for (ordinal, (origin, group)) in groups {
        let key = GlobalKey::sequential(origin, ordinal + 1);
        let (row, provenance) = merge_group(group, policy);
        let sources: BTreeSet<&str> = group.iter().map(|r| r.register_id.as_str()).collect();
        db.source_count.insert(key.clone(), sources.len());
        db.provenance.insert(key.clone(), provenance);
        db.rows.insert(key, row);
    }

    let log = IntegrationLog {
        input_records,
        merged_by_pid: by_pid.values().map(Vec::len).sum(),
        merged_by_combined_key: by_combined.values().map(Vec::len).sum(),
        dropped,
        groups: db.rows.len(),
        groups_by_pid: by_pid.len(),
        groups_by_combined_key: by_combined.len(),
        per_register_scorecard: registers.iter().map(RegisterScorecard::of).collect(),
    };
    Ok((db, log))
}

/// Builds the merged row of one person group and the per-field provenance.
fn merge_group(
    group: &[&RegisterRecord],
    policy: &ReplacementPolicy,
) -> (RegisterRecord, BTreeMap<String, String>) {
    let lead = group
        .iter()
        .copied()
        .min_by(|a, b| policy.prefer(a, b).then_with(|| a.pid.cmp(&b.pid)))
        .expect("non-empty group");
    let mut merged = RegisterRecord::new(lead.register_id.clone(), lead.record_timestamp);
    let fields: BTreeSet<&str> = group.iter().flat_map(|r| r.field_names()).collect();
    let mut provenance = BTreeMap::new();
    for field in fields {
        let winner = group
            .iter()
            .copied()
            .filter(|r| r.value(field).is_present())
            .min_by(|a, b| policy.prefer(a, b).then_with(|| a.value(field).cmp(b.value(field))));
        if let Some(w) = winner {
            merged.set(field, w.value(field).clone());
            provenance.insert(field.to_string(), w.register_id.clone());
        }
    }
    (merged, provenance)
}

/// External validity check for key values (check digits, reference
/// register lookups, ...).
pub trait KeyValidator {
    fn name(&self) -> &str;
    fn is_valid(&self, value: &str) -> bool;
}

/// Thai 13-digit citizen ID check digit.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThaiCitizenIdChecksum;

impl KeyValidator for ThaiCitizenIdChecksum {
    fn name(&self) -> &str {
        "thai-citizen-id-checksum"
    }

    fn is_valid(&self, value: &str) -> bool {
        let digits: Vec<u32> = value.chars().filter_map(|c| c.to_digit(10)).collect();
        if digits.len() != 13 || value.len() != 13 {
            return false;
        }
        let sum: u32 = digits[..12]
            .iter()
            .enumerate()
            .map(|(i, d)| d * (13 - i as u32))
            .sum();
        (11 - sum % 11) % 10 == digits[12]
    }
}

/// Appends the Thai check digit to 12 leading digits.
pub fn thai_citizen_id(first_twelve: u64) -> String {
    let body = format!("{:012}", first_twelve % 1_000_000_000_000);
    let sum: u32 = body
        .chars()
        .enumerate()
        .map(|(i, c)| c.to_digit(10).unwrap() * (13 - i as u32))
        .sum();
    format!("{body}{}", (11 - sum % 11) % 10)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegisterKeyAudit {
    pub register_id: String,
    pub records: usize,
    pub present: usize,
    pub present_rate: f64,
    pub distinct_values: usize,
    pub duplicated_values: usize,
    pub uniqueness_rate: f64,
    /// Share of this register's values that occur in every other register.
    pub cross_register_presence: f64,
    /// Missing key values force removal or the combined-key fallback.
    pub needs_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ValidityCheck {
    ExternallyCheckable,
    Checked { validator: String, invalid: usize },
}

/// Machine-checkable primary-key properties of one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimaryKeyAudit {
    pub field: String,
    pub registers: Vec<RegisterKeyAudit>,
    /// No two records in any register share a value.
    pub unique: bool,
    /// Every record in every register has a value.
    pub present_everywhere: bool,
    /// No value is attached to different birth years across the snapshots.
    pub non_reuse: bool,
    pub reused_values: usize,
    pub validity: ValidityCheck,
}

impl PrimaryKeyAudit {
    pub fn passes(&self) -> bool {
        let valid = match &self.validity {
            ValidityCheck::ExternallyCheckable => true,
            ValidityCheck::Checked { invalid, .. } => *invalid == 0,
        };
        self.unique && self.present_everywhere && self.non_reuse && valid
    }
}

/// Audits `field` as a join key across `registers`.
pub fn validate_key_candidate(
    registers: &[Register],
    field: &str,
    validator: Option<&dyn KeyValidator>,
) -> PrimaryKeyAudit {
    let value_sets: Vec<BTreeSet<&str>> = registers
        .iter()
        .map(|reg| reg.records.iter().filter_map(|r| r.value(field).as_str()).collect())
        .collect();
    let mut audits = Vec::new();
    for (i, reg) in registers.iter().enumerate() {
        let values: Vec<&str> = reg.records.iter().filter_map(|r| r.value(field).as_str()).collect();
        let distinct = &value_sets[i];
        let shared = distinct
            .iter()
            .filter(|v| {
                value_sets
                    .iter()
                    .enumerate()
                    .all(|(j, set)| j == i || set.contains(*v))
            })
            .count();
        let n = reg.records.len();
        let rate = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &values {
            *counts.entry(v).or_insert(0) += 1;
        }
        audits.push(RegisterKeyAudit {
            register_id: reg.register_id.clone(),
            records: n,
            present: values.len(),
            present_rate: rate(values.len(), n),
            distinct_values: distinct.len(),
            duplicated_values: counts.values().filter(|&&c| c > 1).count(),
            uniqueness_rate: rate(distinct.len(), values.len()),
            cross_register_presence: rate(shared, distinct.len()),
            needs_fallback: values.len() < n,
        });
    }

    let mut births: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in registers.iter().flat_map(|reg| &reg.records) {
        if let (Some(v), Some(y)) = (r.value(field).as_str(), r.year_of_birth.as_str()) {
            births.entry(v).or_default().insert(y);
        }
    }
    let reused_values = births.values().filter(|ys| ys.len() > 1).count();

    let validity = match validator {
        None => ValidityCheck::ExternallyCheckable,
        Some(v) => ValidityCheck::Checked {
            validator: v.name().to_string(),
            invalid: value_sets
                .iter()
                .flatten()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .filter(|x| !v.is_valid(x))
                .count(),
        },
    };

    PrimaryKeyAudit {
        field: field.to_string(),
        unique: audits.iter().all(|a| a.duplicated_values == 0),
        present_everywhere: audits.iter().all(|a| !a.needs_fallback),
        non_reuse: reused_values == 0,
        reused_values,
        registers: audits,
        validity,
    }
}
