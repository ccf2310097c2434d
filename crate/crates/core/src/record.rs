//! Shared domain types: field values, register records, registers, the
//! integrated database and the reference census.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const PID: &str = "pid";
pub const PREFIX: &str = "prefix";
pub const FIRST_NAME: &str = "first_name";
pub const LAST_NAME: &str = "last_name";
pub const YEAR_OF_BIRTH: &str = "year_of_birth";
pub const SEX: &str = "sex";
pub const ADDRESS_AREA: &str = "address_area";
pub const REGISTER_ID: &str = "register_id";
pub const RECORD_TIMESTAMP: &str = "record_timestamp";

/// The seven person fields carried directly on every record, in canonical
/// column order.
pub const PERSON_FIELDS: [&str; 7] = [
    PID,
    PREFIX,
    FIRST_NAME,
    LAST_NAME,
    YEAR_OF_BIRTH,
    SEX,
    ADDRESS_AREA,
];

/// The six main census variables.
pub const MAIN_VARIABLES: [&str; 6] = [PID, FIRST_NAME, LAST_NAME, YEAR_OF_BIRTH, PREFIX, SEX];

/// Serialized form of [`FieldValue::NotAvailable`].
pub const NA_TOKEN: &str = "\\N";

/// Earliest accepted year of birth.
pub const MIN_BIRTH_YEAR: i32 = 1850;

/// A single cell value. `NotAvailable` is distinct from any text, including
/// the empty string, which is never stored as `Present`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum FieldValue {
    Present(String),
    #[default]
    NotAvailable,
}

impl FieldValue {
    /// Strict constructor: rejects empty text, control characters and the
    /// reserved N/A token.
    pub fn present(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::domain("present field value may not be empty"));
        }
        if text.chars().any(char::is_control) {
            return Err(Error::domain(format!(
                "present field value {text:?} contains control characters"
            )));
        }
        if text == NA_TOKEN {
            return Err(Error::domain("present field value may not be the N/A token"));
        }
        Ok(FieldValue::Present(text))
    }

    /// Lifts raw source text: control characters are stripped, whitespace
    /// trimmed, and empty results become `NotAvailable`.
    pub fn from_raw(raw: &str) -> Self {
        let cleaned = crate::ingest::strip_control_chars(raw);
        if cleaned.is_empty() || cleaned == NA_TOKEN {
            FieldValue::NotAvailable
        } else {
            FieldValue::Present(cleaned)
        }
    }

    /// Parses a cell of the canonical CSV format.
    pub fn from_token(token: &str) -> Self {
        if token == NA_TOKEN {
            FieldValue::NotAvailable
        } else {
            FieldValue::from_raw(token)
        }
    }

    pub fn to_token(&self) -> &str {
        match self {
            FieldValue::Present(s) => s,
            FieldValue::NotAvailable => NA_TOKEN,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            FieldValue::Present(s) => Some(s),
            FieldValue::NotAvailable => None,
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, FieldValue::Present(_))
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_token())
    }
}

impl Serialize for FieldValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_str().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FieldValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let opt = Option::<String>::deserialize(deserializer)?;
        Ok(match opt {
            Some(s) => FieldValue::present(s).map_err(serde::de::Error::custom)?,
            None => FieldValue::NotAvailable,
        })
    }
}

/// One person-row from one register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRecord {
    pub pid: FieldValue,
    pub prefix: FieldValue,
    pub first_name: FieldValue,
    pub last_name: FieldValue,
    pub year_of_birth: FieldValue,
    pub sex: FieldValue,
    pub address_area: FieldValue,
    pub extra: BTreeMap<String, FieldValue>,
    pub register_id: String,
    pub record_timestamp: i64,
}

impl RegisterRecord {
    /// An all-N/A record.
    pub fn new(register_id: impl Into<String>, record_timestamp: i64) -> Self {
        RegisterRecord {
            pid: FieldValue::NotAvailable,
            prefix: FieldValue::NotAvailable,
            first_name: FieldValue::NotAvailable,
            last_name: FieldValue::NotAvailable,
            year_of_birth: FieldValue::NotAvailable,
            sex: FieldValue::NotAvailable,
            address_area: FieldValue::NotAvailable,
            extra: BTreeMap::new(),
            register_id: register_id.into(),
            record_timestamp,
        }
    }

    /// Looks a field up by canonical name. Unknown extra fields yield `None`.
    pub fn get(&self, name: &str) -> Option<&FieldValue> {
        match name {
            PID => Some(&self.pid),
            PREFIX => Some(&self.prefix),
            FIRST_NAME => Some(&self.first_name),
            LAST_NAME => Some(&self.last_name),
            YEAR_OF_BIRTH => Some(&self.year_of_birth),
            SEX => Some(&self.sex),
            ADDRESS_AREA => Some(&self.address_area),
            _ => self.extra.get(name),
        }
    }

    /// Like [`get`](Self::get) but treats missing extras as N/A.
    pub fn value(&self, name: &str) -> &FieldValue {
        const NA: FieldValue = FieldValue::NotAvailable;
        self.get(name).unwrap_or(&NA)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut FieldValue> {
        match name {
            PID => Some(&mut self.pid),
            PREFIX => Some(&mut self.prefix),
            FIRST_NAME => Some(&mut self.first_name),
            LAST_NAME => Some(&mut self.last_name),
            YEAR_OF_BIRTH => Some(&mut self.year_of_birth),
            SEX => Some(&mut self.sex),
            ADDRESS_AREA => Some(&mut self.address_area),
            _ => self.extra.get_mut(name),
        }
    }

    pub fn set(&mut self, name: &str, value: FieldValue) {
        match self.get_mut(name) {
            Some(slot) => *slot = value,
            None => {
                self.extra.insert(name.to_string(), value);
            }
        }
    }

    /// Removes an extra field, or resets a person field to N/A.
    pub fn take(&mut self, name: &str) -> FieldValue {
        if PERSON_FIELDS.contains(&name) {
            std::mem::take(self.get_mut(name).expect("person field"))
        } else {
            self.extra.remove(name).unwrap_or_default()
        }
    }

    /// Person fields followed by this record's extra field names.
    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        PERSON_FIELDS
            .iter()
            .copied()
            .chain(self.extra.keys().map(String::as_str))
    }

    pub fn birth_year(&self) -> Option<i32> {
        self.year_of_birth.as_str().and_then(|s| s.parse().ok())
    }

    /// Post-cleansing invariants: canonical sex code, plausible birth year,
    /// non-empty register id.
    pub fn check(&self, census_year: i32) -> Result<()> {
        if self.register_id.is_empty() {
            return Err(Error::domain("record has empty register_id"));
        }
        if let Some(s) = self.sex.as_str() {
            if s != "M" && s != "F" {
                return Err(Error::domain(format!("sex code {s:?} is not M or F")));
            }
        }
        if let Some(y) = self.year_of_birth.as_str() {
            match y.parse::<i32>() {
                Ok(y) if (MIN_BIRTH_YEAR..=census_year).contains(&y) => {}
                _ => {
                    return Err(Error::domain(format!(
                        "year_of_birth {y:?} outside [{MIN_BIRTH_YEAR}, {census_year}]"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// A permitted-value rule for one canonical field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueRule {
    OneOf(BTreeSet<String>),
    IntRange { min: i64, max: i64 },
}

impl ValueRule {
    pub fn one_of<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ValueRule::OneOf(values.into_iter().map(Into::into).collect())
    }

    pub fn permits(&self, value: &str) -> bool {
        match self {
            ValueRule::OneOf(set) => set.contains(value),
            ValueRule::IntRange { min, max } => value
                .parse::<i64>()
                .map(|v| (*min..=*max).contains(&v))
                .unwrap_or(false),
        }
    }
}

/// Per-register data dictionary: field renames, value synonyms and
/// permitted values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldDictionary {
    pub renames: BTreeMap<String, String>,
    pub value_maps: BTreeMap<String, BTreeMap<String, String>>,
    pub valid_values: BTreeMap<String, ValueRule>,
}

impl FieldDictionary {
    /// Rename targets must be unique and may not be reserved columns.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (source, target) in &self.renames {
            if target == REGISTER_ID || target == RECORD_TIMESTAMP {
                return Err(Error::config(format!(
                    "rename {source} -> {target} targets a reserved column"
                )));
            }
            if let Some(prev) = seen.insert(target, source) {
                return Err(Error::config(format!(
                    "fields {prev:?} and {source:?} both rename to {target:?}"
                )));
            }
        }
        for (field, map) in &self.value_maps {
            if map.values().any(|v| FieldValue::present(v.clone()).is_err()) {
                return Err(Error::config(format!(
                    "value map for {field:?} has an invalid canonical value"
                )));
            }
        }
        Ok(())
    }
}

/// A named, dated collection of records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub register_id: String,
    pub reference_year: i32,
    pub records: Vec<RegisterRecord>,
    pub dictionary: FieldDictionary,
}

impl Register {
    pub fn new(
        register_id: impl Into<String>,
        reference_year: i32,
        records: Vec<RegisterRecord>,
        dictionary: FieldDictionary,
    ) -> Result<Self> {
        let register = Register {
            register_id: register_id.into(),
            reference_year,
            records,
            dictionary,
        };
        register.check()?;
        Ok(register)
    }

    pub fn check(&self) -> Result<()> {
        if self.register_id.is_empty() {
            return Err(Error::config("register_id may not be empty"));
        }
        if !(1900..=2200).contains(&self.reference_year) {
            return Err(Error::config(format!(
                "register {} reference_year {} outside [1900, 2200]",
                self.register_id, self.reference_year
            )));
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| r.register_id != self.register_id)
        {
            return Err(Error::domain(format!(
                "record tagged {:?} inside register {:?}",
                r.register_id, self.register_id
            )));
        }
        Ok(())
    }

    /// Sorted union of extra field names over all records.
    pub fn extra_fields(&self) -> BTreeSet<String> {
        extra_fields(&self.records)
    }
}

pub(crate) fn extra_fields<'a, I>(records: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a RegisterRecord>,
{
    records
        .into_iter()
        .flat_map(|r| r.extra.keys().cloned())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyOrigin {
    CitizenId,
    CombinedKey,
}

impl KeyOrigin {
    pub fn prefix(self) -> &'static str {
        match self {
            KeyOrigin::CitizenId => "C",
            KeyOrigin::CombinedKey => "K",
        }
    }
}

/// Synthetic person key assigned during integration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalKey {
    pub value: String,
    pub origin: KeyOrigin,
}

impl GlobalKey {
    /// `C-000001` style key for the `ordinal`-th (1-based) group of an origin.
    pub fn sequential(origin: KeyOrigin, ordinal: usize) -> Self {
        GlobalKey {
            value: format!("{}-{ordinal:06}", origin.prefix()),
            origin,
        }
    }

    /// Parses a key previously produced by [`sequential`](Self::sequential).
    pub fn parse(value: &str) -> Result<Self> {
        let origin = match value.split_once('-') {
            Some(("C", _)) => KeyOrigin::CitizenId,
            Some(("K", _)) => KeyOrigin::CombinedKey,
            _ => return Err(Error::domain(format!("malformed global key {value:?}"))),
        };
        Ok(GlobalKey {
            value: value.to_string(),
            origin,
        })
    }
}

impl fmt::Display for GlobalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

impl Serialize for GlobalKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.value)
    }
}

impl<'de> Deserialize<'de> for GlobalKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = String::deserialize(deserializer)?;
        GlobalKey::parse(&value).map_err(serde::de::Error::custom)
    }
}

/// The post-join table, one merged row per person.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegratedDatabase {
    pub rows: BTreeMap<GlobalKey, RegisterRecord>,
    pub source_count: BTreeMap<GlobalKey, usize>,
    /// (key, field) -> register that supplied the surviving value.
    pub provenance: BTreeMap<GlobalKey, BTreeMap<String, String>>,
    /// Every register that took part in the integration.
    pub registers: BTreeSet<String>,
    pub census_year: i32,
}

impl IntegratedDatabase {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Age in completed years falls into one of 15 five-year bins, the last
/// open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeBin(u8);

impl AgeBin {
    pub const COUNT: usize = 15;

    pub fn all() -> impl Iterator<Item = AgeBin> {
        (0..Self::COUNT as u8).map(AgeBin)
    }

    pub fn from_age(age: u32) -> Self {
        AgeBin((age / 5).min(Self::COUNT as u32 - 1) as u8)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(AgeBin(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> String {
        if self.index() == Self::COUNT - 1 {
            ">=70".to_string()
        } else {
            let lo = self.0 as u32 * 5;
            format!("{}-{}", lo, lo + 4)
        }
    }

    /// Inclusive lower age bound and exclusive upper bound (`None` = open).
    pub fn bounds(self) -> (u32, Option<u32>) {
        let lo = self.0 as u32 * 5;
        if self.index() == Self::COUNT - 1 {
            (lo, None)
        } else {
            (lo, Some(lo + 5))
        }
    }
}

impl fmt::Display for AgeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Age bin of a person born in `year_of_birth`, evaluated at `census_year`.
pub fn bin_age(year_of_birth: i32, census_year: i32) -> Result<AgeBin> {
    if year_of_birth > census_year {
        return Err(Error::domain(format!(
            "birth year after census year ({year_of_birth} > {census_year})"
        )));
    }
    Ok(AgeBin::from_age((census_year - year_of_birth) as u32))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexCounts {
    pub female: u64,
    pub male: u64,
    pub unknown: u64,
}

impl SexCounts {
    pub fn total(&self) -> u64 {
        self.female + self.male + self.unknown
    }

    /// Known categories in reporting order (F, M).
    pub fn known(&self) -> [u64; 2] {
        [self.female, self.male]
    }

    pub fn tally(&mut self, sex: &FieldValue) {
        match sex.as_str() {
            Some("F") => self.female += 1,
            Some("M") => self.male += 1,
            _ => self.unknown += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeCounts {
    pub bins: [u64; AgeBin::COUNT],
    pub unknown: u64,
}

impl AgeCounts {
    pub fn from_bins(bins: [u64; AgeBin::COUNT]) -> Self {
        AgeCounts { bins, unknown: 0 }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum::<u64>() + self.unknown
    }

    pub fn tally(&mut self, bin: Option<AgeBin>) {
        match bin {
            Some(b) => self.bins[b.index()] += 1,
            None => self.unknown += 1,
        }
    }
}

/// Age bin of a record, if its birth year is present and not after the
/// census year.
pub(crate) fn record_age_bin(record: &RegisterRecord, census_year: i32) -> Option<AgeBin> {
    record
        .birth_year()
        .and_then(|y| bin_age(y, census_year).ok())
}

/// The traditional census used as the reference population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCensus {
    /// De-identified PIDs.
    pub persons: BTreeSet<String>,
    pub sex_counts: SexCounts,
    pub age_counts: AgeCounts,
    pub census_year: i32,
}

impl ReferenceCensus {
    pub fn new(
        persons: BTreeSet<String>,
        sex_counts: SexCounts,
        age_counts: AgeCounts,
        census_year: i32,
    ) -> Result<Self> {
        let n = persons.len() as u64;
        if sex_counts.total() != n || age_counts.total() != n {
            return Err(Error::domain(format!(
                "reference census tallies (sex {}, age {}) do not match {} persons",
                sex_counts.total(),
                age_counts.total(),
                n
            )));
        }
        Ok(ReferenceCensus {
            persons,
            sex_counts,
            age_counts,
            census_year,
        })
    }

    /// Builds the reference from person records. Records without a PID are
    /// skipped; repeated PIDs count once (first occurrence wins).
    pub fn from_records<'a, I>(records: I, census_year: i32) -> Self
    where
        I: IntoIterator<Item = &'a RegisterRecord>,
    {
        let mut persons = BTreeSet::new();
        let mut sex_counts = SexCounts::default();
        let mut age_counts = AgeCounts::default();
        for record in records {
            let Some(pid) = record.pid.as_str() else {
                continue;
            };
            if persons.insert(pid.to_string()) {
                sex_counts.tally(&record.sex);
                age_counts.tally(record_age_bin(record, census_year));
            }
        }
        ReferenceCensus {
            persons,
            sex_counts,
            age_counts,
            census_year,
        }
    }
}

/// Column order of the canonical CSV for a set of extra fields.
pub fn canonical_header(extra: &BTreeSet<String>) -> Vec<String> {
    PERSON_FIELDS
        .iter()
        .map(|s| s.to_string())
        .chain([REGISTER_ID.to_string(), RECORD_TIMESTAMP.to_string()])
        .chain(extra.iter().cloned())
        .collect()
}

/// Cells of one record in canonical order.
pub fn canonical_row(record: &RegisterRecord, extra: &BTreeSet<String>) -> Vec<String> {
    PERSON_FIELDS
        .iter()
        .map(|f| record.value(f).to_token().to_string())
        .chain([
            record.register_id.clone(),
            record.record_timestamp.to_string(),
        ])
        .chain(extra.iter().map(|f| record.value(f).to_token().to_string()))
        .collect()
}

/// Writes records as canonical CSV: header row, `\N` for N/A, person
/// fields, register_id, record_timestamp, then sorted extras.
pub fn write_records<W: Write>(writer: W, records: &[RegisterRecord]) -> Result<()> {
    let extra = extra_fields(records);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(canonical_header(&extra))?;
    for record in records {
        w.write_record(canonical_row(record, &extra))?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Reads canonical CSV records. Extra columns whose value is N/A are not
/// materialized on the record.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<RegisterRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let idx = |name: &str| header.iter().position(|h| h == name);
    let reg_idx = idx(REGISTER_ID)
        .ok_or_else(|| Error::domain("canonical CSV lacks register_id column"))?;
    let ts_idx = idx(RECORD_TIMESTAMP)
        .ok_or_else(|| Error::domain("canonical CSV lacks record_timestamp column"))?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let ts: i64 = row[ts_idx].trim().parse().map_err(|_| {
            Error::domain(format!("bad record_timestamp {:?}", &row[ts_idx]))
        })?;
        let mut record = RegisterRecord::new(row[reg_idx].to_string(), ts);
        for (i, name) in header.iter().enumerate() {
            if i == reg_idx || i == ts_idx {
                continue;
            }
            let value = FieldValue::from_token(row.get(i).unwrap_or(""));
            if PERSON_FIELDS.contains(&name) || value.is_present() {
                record.set(name, value);
            }
        }
        out.push(record);
    }
    Ok(out)
}
