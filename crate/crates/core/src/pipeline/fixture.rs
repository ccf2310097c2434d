//! Evaluation from published tallies instead of person-level data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{CandidateReport, ReferenceSummary, RunReport};
use crate::error::{Error, Result};
use crate::frameworks::{CensusPopulation, FrameworkKind, FrameworkSpec};
use crate::quality::{evaluate_counts, MembershipCounts, Tallies};
use crate::record::{AgeCounts, SexCounts};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateCounts {
    pub label: String,
    pub database: String,
    pub framework: FrameworkKind,
    /// |R|
    pub population_size: u64,
    /// |T ∩ R|
    pub covered: u64,
    pub sex: SexCounts,
    pub age: AgeCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsFixture {
    pub census_year: i32,
    pub reference: ReferenceSummary,
    pub candidates: Vec<CandidateCounts>,
}

impl CountsFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("counts fixture: {e}")))
    }
}

fn check_totals(what: &str, size: u64, sex: &SexCounts, age: &AgeCounts) -> Result<()> {
    if sex.total() != size || age.total() != size {
        return Err(Error::domain(format!(
            "{what}: sex total {} and age total {} must both equal {size}",
            sex.total(),
            age.total()
        )));
    }
    Ok(())
}

/// Scores every candidate of a fixture against its reference tallies.
pub fn evaluate_fixture(fixture: &CountsFixture) -> Result<RunReport> {
    let reference = &fixture.reference;
    check_totals("reference", reference.persons, &reference.sex, &reference.age)?;
    let mut candidates = Vec::with_capacity(fixture.candidates.len());
    for c in &fixture.candidates {
        check_totals(&c.label, c.population_size, &c.sex, &c.age)?;
        let pop = CensusPopulation::prebuilt(
            FrameworkSpec::new(c.framework),
            c.sex,
            c.age,
            fixture.census_year,
            c.database.clone(),
        )?;
        let counts = MembershipCounts::new(reference.persons, pop.size(), c.covered)?;
        let report = evaluate_counts(
            counts,
            Tallies {
                r_sex: pop.by_sex(),
                t_sex: reference.sex,
                r_age: pop.by_age(),
                t_age: reference.age,
            },
        )?;
        candidates.push(CandidateReport {
            label: c.label.clone(),
            database: c.database.clone(),
            framework: c.framework,
            source_years: pop.source_years,
            population_size: c.population_size,
            report,
        });
    }
    RunReport::new(fixture.census_year, reference.clone(), candidates)
}
