//! Census population enumeration under the five membership frameworks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::record::{
    record_age_bin, AgeBin, AgeCounts, GlobalKey, IntegratedDatabase, RegisterRecord, SexCounts,
    MAIN_VARIABLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrameworkKind {
    /// Current address identified inside the census area.
    #[serde(rename = "F1")]
    CurrentAddress,
    /// Has a citizen ID.
    #[serde(rename = "F2")]
    HasPid,
    /// Every main variable present.
    #[serde(rename = "F3")]
    AllMainVariables,
    /// At least one main variable present.
    #[serde(rename = "F4")]
    AnyMainVariable,
    /// Appears in at least `min_registers` registers.
    #[serde(rename = "F5")]
    MultiRegister,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 5] = [
        FrameworkKind::CurrentAddress,
        FrameworkKind::HasPid,
        FrameworkKind::AllMainVariables,
        FrameworkKind::AnyMainVariable,
        FrameworkKind::MultiRegister,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FrameworkKind::CurrentAddress => "F1",
            FrameworkKind::HasPid => "F2",
            FrameworkKind::AllMainVariables => "F3",
            FrameworkKind::AnyMainVariable => "F4",
            FrameworkKind::MultiRegister => "F5",
        }
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkSpec {
    pub kind: FrameworkKind,
    pub census_area_codes: BTreeSet<String>,
    /// Restrict every framework to members addressed inside the census area.
    pub area_scope: bool,
    pub main_variables: Vec<String>,
    pub min_registers: usize,
    /// F2 only: also require the person to appear in every integrated
    /// register.
    pub strict_pid: bool,
}

impl FrameworkSpec {
    pub fn new(kind: FrameworkKind) -> Self {
        FrameworkSpec {
            kind,
            census_area_codes: BTreeSet::new(),
            area_scope: false,
            main_variables: MAIN_VARIABLES.map(String::from).to_vec(),
            min_registers: 2,
            strict_pid: false,
        }
    }

    /// Sets the census area and turns scoping on.
    pub fn scoped_to<I, S>(mut self, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.census_area_codes = codes.into_iter().map(Into::into).collect();
        self.area_scope = true;
        self
    }

    pub fn with_min_registers(mut self, min: usize) -> Self {
        self.min_registers = min;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.main_variables.is_empty() {
            return Err(Error::config("main_variables may not be empty"));
        }
        if self.kind == FrameworkKind::MultiRegister && self.min_registers < 2 {
            return Err(Error::config("F5 min_registers must be at least 2"));
        }
        if self.census_area_codes.is_empty()
            && (self.kind == FrameworkKind::CurrentAddress || self.area_scope)
        {
            return Err(Error::config(format!(
                "{} needs census area codes",
                if self.area_scope { "area scoping" } else { "F1" }
            )));
        }
        Ok(())
    }

    fn in_area(&self, record: &RegisterRecord) -> bool {
        record
            .address_area
            .as_str()
            .is_some_and(|a| self.census_area_codes.contains(a))
    }

    /// Membership rule for one integrated row.
    pub fn admits(&self, db: &IntegratedDatabase, key: &GlobalKey, row: &RegisterRecord) -> bool {
        let sources = db.source_count.get(key).copied().unwrap_or(0);
        let rule = match self.kind {
            FrameworkKind::CurrentAddress => self.in_area(row),
            FrameworkKind::HasPid => {
                row.pid.is_present() && (!self.strict_pid || sources >= db.registers.len())
            }
            FrameworkKind::AllMainVariables => self
                .main_variables
                .iter()
                .all(|v| row.value(v).is_present()),
            FrameworkKind::AnyMainVariable => self
                .main_variables
                .iter()
                .any(|v| row.value(v).is_present()),
            FrameworkKind::MultiRegister => sources >= self.min_registers,
        };
        rule && (!self.area_scope || self.in_area(row))
    }
}

/// Age-by-sex tally: 15 age bins plus an unknown row, columns F, M, unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Pyramid {
    pub cells: [[u64; 3]; AgeBin::COUNT + 1],
}

impl Pyramid {
    pub const COLUMNS: [&'static str; 3] = ["F", "M", "unknown"];

    fn add(&mut self, age: Option<AgeBin>, sex: Option<&str>) {
        let row = age.map_or(AgeBin::COUNT, AgeBin::index);
        let col = match sex {
            Some("F") => 0,
            Some("M") => 1,
            _ => 2,
        };
        self.cells[row][col] += 1;
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn by_sex(&self) -> SexCounts {
        let col = |c: usize| self.cells.iter().map(|r| r[c]).sum();
        SexCounts {
            female: col(0),
            male: col(1),
            unknown: col(2),
        }
    }

    pub fn by_age(&self) -> AgeCounts {
        let mut counts = AgeCounts::default();
        for (i, row) in self.cells.iter().enumerate() {
            let n: u64 = row.iter().sum();
            match counts.bins.get_mut(i) {
                Some(slot) => *slot = n,
                None => counts.unknown = n,
            }
        }
        counts
    }

    /// A joint table consistent with given marginals (north-west corner
    /// fill), for populations known only by their published tallies.
    pub fn from_marginals(sex: SexCounts, age: AgeCounts) -> Result<Self> {
        if sex.total() != age.total() {
            return Err(Error::domain(format!(
                "sex total {} differs from age total {}",
                sex.total(),
                age.total()
            )));
        }
        let mut rows: Vec<u64> = age.bins.to_vec();
        rows.push(age.unknown);
        let mut cols = [sex.female, sex.male, sex.unknown];
        let mut p = Pyramid::default();
        let (mut i, mut j) = (0, 0);
        while i < rows.len() && j < cols.len() {
            let take = rows[i].min(cols[j]);
            p.cells[i][j] += take;
            rows[i] -= take;
            cols[j] -= take;
            if rows[i] == 0 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(p)
    }

    /// CSV: `age_bin,F,M,unknown`, one row per bin then `unknown`.
    pub fn write_csv<W: Write>(&self, writer: W, label: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        write_pyramid_rows(&mut w, self, label, true)?;
        w.flush().map_err(|e| Error::io("<pyramid output>", e))?;
        Ok(())
    }
}

pub(crate) fn write_pyramid_rows<W: Write>(
    w: &mut csv::Writer<W>,
    pyramid: &Pyramid,
    label: Option<&str>,
    header: bool,
) -> Result<()> {
    if header {
        let mut h: Vec<&str> = label.map(|_| "population").into_iter().collect();
        h.push("age_bin");
        h.extend(Pyramid::COLUMNS);
        w.write_record(&h)?;
    }
    for (i, row) in pyramid.cells.iter().enumerate() {
        let bin = AgeBin::from_index(i).map_or("unknown".to_string(), AgeBin::label);
        let mut rec: Vec<String> = label.map(str::to_string).into_iter().collect();
        rec.push(bin);
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    Ok(())
}

/// Members of one framework applied to one integrated database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusPopulation {
    pub framework: FrameworkSpec,
    pub members: BTreeSet<GlobalKey>,
    /// De-identified PIDs of the members that have one; the id space
    /// shared with the reference census.
    pub person_ids: BTreeSet<String>,
    pub pyramid: Pyramid,
    pub source_years: String,
    pub census_year: i32,
    /// Built from published tallies; carries no member identities.
    pub prebuilt: bool,
}

impl CensusPopulation {
    /// A population known only by its sex and age tallies.
    pub fn prebuilt(
        framework: FrameworkSpec,
        sex: SexCounts,
        age: AgeCounts,
        census_year: i32,
        source_years: impl Into<String>,
    ) -> Result<Self> {
        Ok(CensusPopulation {
            framework,
            members: BTreeSet::new(),
            person_ids: BTreeSet::new(),
            pyramid: Pyramid::from_marginals(sex, age)?,
            source_years: source_years.into(),
            census_year,
            prebuilt: true,
        })
    }

    pub fn size(&self) -> u64 {
        self.pyramid.total()
    }

    pub fn by_sex(&self) -> SexCounts {
        self.pyramid.by_sex()
    }

    pub fn by_age(&self) -> AgeCounts {
        self.pyramid.by_age()
    }

    /// Count plus SHA-256 over the sorted member keys, one per line.
    pub fn membership_digest(&self) -> MembershipDigest {
        let mut h = Sha256::new();
        for key in &self.members {
            h.update(key.value.as_bytes());
            h.update(b"\n");
        }
        MembershipDigest {
            count: self.members.len(),
            sha256: hex::encode(h.finalize()),
        }
    }

    pub fn summary(&self) -> PopulationSummary {
        PopulationSummary {
            framework: self.framework.kind,
            source_years: self.source_years.clone(),
            census_year: self.census_year,
            size: self.size(),
            membership: self.membership_digest(),
            by_sex: self.by_sex(),
            by_age: AgeBin::all()
                .map(|b| (b.label(), self.by_age().bins[b.index()]))
                .collect(),
            age_unknown: self.by_age().unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MembershipDigest {
    pub count: usize,
    pub sha256: String,
}

/// JSON export of a population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PopulationSummary {
    pub framework: FrameworkKind,
    pub source_years: String,
    pub census_year: i32,
    pub size: u64,
    pub membership: MembershipDigest,
    pub by_sex: SexCounts,
    pub by_age: BTreeMap<String, u64>,
    pub age_unknown: u64,
}

/// Applies `spec` to every row of `db`.
pub fn enumerate(db: &IntegratedDatabase, spec: &FrameworkSpec) -> Result<CensusPopulation> {
    spec.validate()?;
    if db.is_empty() {
        return Err(Error::domain("integrated database is empty"));
    }
    if spec.kind == FrameworkKind::MultiRegister && db.registers.len() < 2 {
        return Err(Error::config(format!(
            "F5 requires ≥2 registers (database built from {})",
            db.registers.iter().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut members = BTreeSet::new();
    let mut person_ids = BTreeSet::new();
    let mut pyramid = Pyramid::default();
    for (key, row) in &db.rows {
        if !spec.admits(db, key, row) {
            continue;
        }
        members.insert(key.clone());
        if let Some(pid) = row.pid.as_str() {
            person_ids.insert(pid.to_string());
        }
        pyramid.add(record_age_bin(row, db.census_year), row.sex.as_str());
    }
    Ok(CensusPopulation {
        framework: spec.clone(),
        members,
        person_ids,
        pyramid,
        source_years: db.registers.iter().cloned().collect::<Vec<_>>().join("+"),
        census_year: db.census_year,
        prebuilt: false,
    })
}

/// The age-by-sex table of a population.
pub fn pyramid(pop: &CensusPopulation) -> Pyramid {
    pop.pyramid
}
