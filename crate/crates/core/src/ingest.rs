//! Parsing raw register files (delimited, fixed-width, composite columns)
//! into [`Register`]s, with malformed records quarantined as rejects.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{
    canonical_header, canonical_row, extra_fields, FieldDictionary, FieldValue, Register,
    RegisterRecord, PERSON_FIELDS, RECORD_TIMESTAMP, REGISTER_ID,
};

pub const REJECT_SHORT_RECORD: &str = "short record";
pub const REJECT_COLUMN_COUNT: &str = "column count mismatch";
pub const REJECT_BAD_TIMESTAMP: &str = "bad timestamp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Encoding {
    #[default]
    #[serde(rename = "utf-8")]
    Utf8,
    #[serde(rename = "tis-620")]
    Tis620,
    #[serde(rename = "latin-1")]
    Latin1,
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(label: &str) -> Result<Self> {
        match label.to_ascii_lowercase().replace('_', "-").as_str() {
            "utf-8" | "utf8" => Ok(Encoding::Utf8),
            "tis-620" | "tis620" => Ok(Encoding::Tis620),
            "latin-1" | "latin1" | "iso-8859-1" => Ok(Encoding::Latin1),
            _ => Err(Error::config(format!("unsupported encoding {label:?}"))),
        }
    }
}

/// Decoded text plus the number of undecodable sequences that were
/// replaced with U+FFFD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub text: String,
    pub replacements: usize,
}

impl Encoding {
    pub fn decode(self, bytes: &[u8]) -> Decoded {
        let mut text = String::with_capacity(bytes.len());
        let mut replacements = 0;
        match self {
            Encoding::Utf8 => {
                let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
                for chunk in bytes.utf8_chunks() {
                    text.push_str(chunk.valid());
                    if !chunk.invalid().is_empty() {
                        text.push(char::REPLACEMENT_CHARACTER);
                        replacements += 1;
                    }
                }
            }
            Encoding::Latin1 => text.extend(bytes.iter().map(|&b| b as char)),
            Encoding::Tis620 => {
                for &b in bytes {
                    match tis620_char(b) {
                        Some(c) => text.push(c),
                        None => {
                            text.push(char::REPLACEMENT_CHARACTER);
                            replacements += 1;
                        }
                    }
                }
            }
        }
        Decoded { text, replacements }
    }
}

/// TIS-620: ASCII below 0x80, Thai block at 0xA1..=0xDA and 0xDF..=0xFB.
fn tis620_char(b: u8) -> Option<char> {
    match b {
        0x00..=0x7F => Some(b as char),
        0xA1..=0xDA => char::from_u32(0x0E01 + (b - 0xA1) as u32),
        0xDF..=0xFB => char::from_u32(0x0E3F + (b - 0xDF) as u32),
        _ => None,
    }
}

/// Decodes `bytes` declared as `declared` (an encoding label) into UTF-8.
pub fn normalize_encoding(bytes: &[u8], declared: &str) -> Result<Decoded> {
    Ok(declared.parse::<Encoding>()?.decode(bytes))
}

/// Removes control characters (NUL, CR, LF, TAB, ...) anywhere in the value
/// and trims surrounding whitespace.
pub fn strip_control_chars(text: &str) -> String {
    let stripped: String = text.chars().filter(|c| !c.is_control()).collect();
    stripped.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedField {
    pub name: String,
    pub offset: usize,
    pub length: usize,
}

impl FixedField {
    pub fn new(name: impl Into<String>, offset: usize, length: usize) -> Self {
        FixedField {
            name: name.into(),
            offset,
            length,
        }
    }

    fn end(&self) -> usize {
        self.offset + self.length
    }
}

/// Checks a fixed-width layout: non-empty, named, non-overlapping spans.
pub fn validate_fixed_layout(fields: &[FixedField]) -> Result<()> {
    if fields.is_empty() {
        return Err(Error::config("fixed-width layout has no fields"));
    }
    let mut sorted: Vec<&FixedField> = fields.iter().collect();
    sorted.sort_by_key(|f| f.offset);
    for f in &sorted {
        if f.length == 0 || f.name.is_empty() {
            return Err(Error::config(format!("invalid fixed-width field {f:?}")));
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].end() > pair[1].offset {
            return Err(Error::config(format!(
                "fixed-width fields {} and {} overlap",
                pair[0].name, pair[1].name
            )));
        }
    }
    let mut names: Vec<&str> = fields.iter().map(|f| f.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("fixed-width layout repeats a field name"));
    }
    Ok(())
}

/// Why a record was quarantined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReject {
    pub reason: &'static str,
}

/// Slices one fixed-width line by byte spans, decoding and trimming each
/// field. Returns the field map and the decode replacement count.
pub fn parse_fixed_width(
    line: &[u8],
    fields: &[FixedField],
    encoding: Encoding,
) -> std::result::Result<(BTreeMap<String, String>, usize), ParseReject> {
    let required = fields.iter().map(FixedField::end).max().unwrap_or(0);
    if line.len() < required {
        return Err(ParseReject {
            reason: REJECT_SHORT_RECORD,
        });
    }
    let mut replacements = 0;
    let map = fields
        .iter()
        .map(|f| {
            let decoded = encoding.decode(&line[f.offset..f.end()]);
            replacements += decoded.replacements;
            (f.name.clone(), strip_control_chars(&decoded.text))
        })
        .collect();
    Ok((map, replacements))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Separator {
    Text(String),
    /// Character offsets at which to cut.
    Positions(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRule {
    pub source_column: String,
    pub separator: Separator,
    pub targets: Vec<String>,
}

impl SplitRule {
    pub fn new<S: Into<String>>(source_column: &str, separator: &str, targets: Vec<S>) -> Self {
        SplitRule {
            source_column: source_column.to_string(),
            separator: Separator::Text(separator.to_string()),
            targets: targets.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.len() < 2 {
            return Err(Error::config(format!(
                "split rule on {} needs at least two targets",
                self.source_column
            )));
        }
        match &self.separator {
            Separator::Text(s) if s.is_empty() => {
                Err(Error::config("split rule separator may not be empty"))
            }
            Separator::Positions(p) if p.len() + 1 != self.targets.len() => Err(Error::config(
                "positional split needs one fewer cut than targets",
            )),
            Separator::Positions(p) if p.windows(2).any(|w| w[0] >= w[1]) => {
                Err(Error::config("positional split cuts must be increasing"))
            }
            _ => Ok(()),
        }
    }
}

/// Replaces `rule.source_column` with its target columns. Missing trailing
/// parts become empty; surplus parts are kept together in the last target.
pub fn split_composite(
    record: &BTreeMap<String, String>,
    rule: &SplitRule,
) -> BTreeMap<String, String> {
    let mut out = record.clone();
    let value = out.remove(&rule.source_column).unwrap_or_default();
    let n = rule.targets.len();
    let parts: Vec<String> = match &rule.separator {
        Separator::Text(sep) => {
            let tokens: Vec<&str> = value
                .split(sep.as_str())
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .collect();
            let mut parts: Vec<String> = tokens.iter().take(n - 1).map(|t| t.to_string()).collect();
            if tokens.len() >= n {
                parts.push(tokens[n - 1..].join(sep));
            }
            parts
        }
        Separator::Positions(cuts) => {
            let chars: Vec<char> = value.chars().collect();
            let mut bounds = vec![0];
            bounds.extend(cuts.iter().map(|&c| c.min(chars.len())));
            bounds.push(chars.len());
            bounds
                .windows(2)
                .map(|w| chars[w[0]..w[1]].iter().collect::<String>().trim().to_string())
                .collect()
        }
    };
    for (i, target) in rule.targets.iter().enumerate() {
        out.insert(target.clone(), parts.get(i).cloned().unwrap_or_default());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceFormat {
    Delimited {
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default = "default_quote")]
        quote: char,
    },
    FixedWidth {
        fields: Vec<FixedField>,
    },
    Composite {
        base: Box<SourceFormat>,
        splits: Vec<SplitRule>,
    },
}

fn default_delimiter() -> char {
    ','
}

fn default_quote() -> char {
    '"'
}

impl SourceFormat {
    pub fn csv() -> Self {
        SourceFormat::Delimited {
            delimiter: ',',
            quote: '"',
        }
    }
}

/// Declares how one raw register file is read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub register_id: String,
    pub path: PathBuf,
    pub reference_year: i32,
    pub format: SourceFormat,
    #[serde(default)]
    pub encoding: Encoding,
    /// Column holding epoch-second record timestamps. Without it a
    /// `record_timestamp` column is used when present, else January 1st
    /// of the reference year.
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub dictionary: FieldDictionary,
}

impl SourceSpec {
    pub fn new(
        register_id: impl Into<String>,
        path: impl Into<PathBuf>,
        reference_year: i32,
        format: SourceFormat,
    ) -> Self {
        SourceSpec {
            register_id: register_id.into(),
            path: path.into(),
            reference_year,
            format,
            encoding: Encoding::Utf8,
            timestamp_column: None,
            dictionary: FieldDictionary::default(),
        }
    }
}

/// A quarantined source record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub source_line_number: u64,
    pub reason: String,
    /// Whatever could be parsed; all N/A when nothing could.
    pub record: RegisterRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub register_id: String,
    pub source_records: usize,
    pub accepted: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    pub replacement_chars: usize,
    #[serde(skip)]
    pub rejects: Vec<Reject>,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.rejected_by_reason.values().sum()
    }
}

/// Epoch seconds of 00:00 UTC on January 1st of `year`.
pub fn year_start_epoch(year: i32) -> i64 {
    // days-from-civil for (year, 1, 1)
    let y = i64::from(year) - 1;
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let doy = 306; // March-based day of year for January 1st
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    (era * 146_097 + doe - 719_468) * 86_400
}

/// Reads and parses one source file.
pub fn ingest(spec: &SourceSpec) -> Result<(Register, IngestReport)> {
    let bytes = std::fs::read(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    ingest_bytes(spec, &bytes)
}

type RawRow = std::result::Result<BTreeMap<String, String>, ParseReject>;

/// Parses already-loaded file contents according to `spec`.
pub fn ingest_bytes(spec: &SourceSpec, bytes: &[u8]) -> Result<(Register, IngestReport)> {
    spec.dictionary.validate()?;
    let (base, splits) = match &spec.format {
        SourceFormat::Composite { base, splits } => {
            if matches!(**base, SourceFormat::Composite { .. }) {
                return Err(Error::config("composite formats may not nest"));
            }
            (base.as_ref(), splits.as_slice())
        }
        other => (other, &[][..]),
    };
    for rule in splits {
        rule.validate()?;
    }

    let mut report = IngestReport {
        register_id: spec.register_id.clone(),
        ..Default::default()
    };
    let mut rows: Vec<(u64, RawRow)> = Vec::new();
    let columns: Vec<String> = match base {
        SourceFormat::Delimited { delimiter, quote } => {
            let (delimiter, quote) = match (u8::try_from(*delimiter), u8::try_from(*quote)) {
                (Ok(d), Ok(q)) if d.is_ascii() && q.is_ascii() => (d, q),
                _ => return Err(Error::config("delimiter and quote must be ASCII")),
            };
            let decoded = spec.encoding.decode(bytes);
            report.replacement_chars += decoded.replacements;
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .quote(quote)
                .has_headers(true)
                .flexible(true)
                .from_reader(decoded.text.as_bytes());
            let header: Vec<String> = rdr
                .headers()?
                .iter()
                .map(strip_control_chars)
                .collect();
            for row in rdr.records() {
                let row = row?;
                let line = row.position().map_or(0, |p| p.line());
                let map: BTreeMap<String, String> = header
                    .iter()
                    .zip(row.iter())
                    .map(|(h, v)| (h.clone(), strip_control_chars(v)))
                    .collect();
                if row.len() != header.len() {
                    rows.push((line, Err(ParseReject { reason: REJECT_COLUMN_COUNT })));
                    // keep the partial map for the reject file
                    report.rejects.push(Reject {
                        source_line_number: line,
                        reason: REJECT_COLUMN_COUNT.to_string(),
                        record: partial_record(spec, &map),
                    });
                } else {
                    rows.push((line, Ok(map)));
                }
            }
            header
        }
        SourceFormat::FixedWidth { fields } => {
            validate_fixed_layout(fields)?;
            let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
            if lines.last().is_some_and(|l| l.is_empty()) {
                lines.pop();
            }
            for (i, raw) in lines.into_iter().enumerate() {
                let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
                let line = i as u64 + 1;
                match parse_fixed_width(raw, fields, spec.encoding) {
                    Ok((map, repl)) => {
                        report.replacement_chars += repl;
                        rows.push((line, Ok(map)));
                    }
                    Err(reject) => {
                        report.rejects.push(Reject {
                            source_line_number: line,
                            reason: reject.reason.to_string(),
                            record: RegisterRecord::new(spec.register_id.clone(), 0),
                        });
                        rows.push((line, Err(reject)));
                    }
                }
            }
            fields.iter().map(|f| f.name.clone()).collect()
        }
        SourceFormat::Composite { .. } => unreachable!("checked above"),
    };

    for rule in splits {
        if !columns.contains(&rule.source_column) {
            return Err(Error::config(format!(
                "split rule references missing column {:?}",
                rule.source_column
            )));
        }
    }
    if let Some(col) = &spec.timestamp_column {
        if !columns.contains(col) {
            return Err(Error::config(format!(
                "timestamp column {col:?} not found in {}",
                spec.path.display()
            )));
        }
    }

    report.source_records = rows.len();
    let default_ts = year_start_epoch(spec.reference_year);
    let mut records = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let Ok(mut map) = row else { continue };
        for rule in splits {
            map = split_composite(&map, rule);
        }
        match build_record(spec, &map, default_ts) {
            Ok(record) => records.push(record),
            Err(reason) => report.rejects.push(Reject {
                source_line_number: line,
                reason: reason.to_string(),
                record: partial_record(spec, &map),
            }),
        }
    }
    report.rejects.sort_by_key(|r| r.source_line_number);
    for r in &report.rejects {
        *report.rejected_by_reason.entry(r.reason.clone()).or_insert(0) += 1;
    }
    report.accepted = records.len();

    if records.is_empty() {
        return Err(Error::Ingest {
            register_id: spec.register_id.clone(),
            message: format!("no parsable records in {}", spec.path.display()),
        });
    }
    let register = Register::new(
        spec.register_id.clone(),
        spec.reference_year,
        records,
        spec.dictionary.clone(),
    )?;
    Ok((register, report))
}

fn timestamp_column(spec: &SourceSpec) -> &str {
    spec.timestamp_column.as_deref().unwrap_or(RECORD_TIMESTAMP)
}

fn build_record(
    spec: &SourceSpec,
    map: &BTreeMap<String, String>,
    default_ts: i64,
) -> std::result::Result<RegisterRecord, &'static str> {
    let ts_col = timestamp_column(spec);
    let ts = match map.get(ts_col) {
        Some(raw) => raw.trim().parse::<i64>().map_err(|_| REJECT_BAD_TIMESTAMP)?,
        None => default_ts,
    };
    let mut record = RegisterRecord::new(spec.register_id.clone(), ts);
    fill_fields(&mut record, map, ts_col);
    Ok(record)
}

fn partial_record(spec: &SourceSpec, map: &BTreeMap<String, String>) -> RegisterRecord {
    let mut record = RegisterRecord::new(spec.register_id.clone(), 0);
    fill_fields(&mut record, map, timestamp_column(spec));
    record
}

fn fill_fields(record: &mut RegisterRecord, map: &BTreeMap<String, String>, ts_col: &str) {
    for (name, raw) in map {
        if name == ts_col || name == REGISTER_ID || name.is_empty() {
            continue;
        }
        let value = FieldValue::from_raw(raw);
        if PERSON_FIELDS.contains(&name.as_str()) || value.is_present() {
            record.set(name, value);
        }
    }
}

/// Writes rejects as canonical CSV plus `reject_reason` and
/// `source_line_number` columns.
pub fn write_rejects<W: Write>(writer: W, rejects: &[Reject]) -> Result<()> {
    let extra = extra_fields(rejects.iter().map(|r| &r.record));
    let mut w = csv::Writer::from_writer(writer);
    let mut header = canonical_header(&extra);
    header.push("reject_reason".into());
    header.push("source_line_number".into());
    w.write_record(&header)?;
    for r in rejects {
        let mut row = canonical_row(&r.record, &extra);
        row.push(r.reason.clone());
        row.push(r.source_line_number.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<rejects output>", e))?;
    Ok(())
}
