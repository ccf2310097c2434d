use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frameworks::FrameworkKind;
use crate::quality::{format_p, rank_frameworks, QualityReport, Ranking};
use crate::record::{AgeBin, AgeCounts, ReferenceCensus, SexCounts};

/// Reference-census tallies carried into the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub persons: u64,
    pub sex: SexCounts,
    pub age: AgeCounts,
}

impl From<&ReferenceCensus> for ReferenceSummary {
    fn from(r: &ReferenceCensus) -> Self {
        ReferenceSummary {
            persons: r.persons.len() as u64,
            sex: r.sex_counts,
            age: r.age_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub label: String,
    pub database: String,
    pub framework: FrameworkKind,
    pub source_years: String,
    pub population_size: u64,
    pub report: QualityReport<f64>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub census_year: i32,
    pub reference: ReferenceSummary,
    pub candidates: Vec<CandidateReport>,
    /// Present when there are at least two candidates.
    pub ranking: Option<Ranking<f64>>,
}

impl RunReport {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| crate::error::Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn new(census_year: i32, reference: ReferenceSummary, candidates: Vec<CandidateReport>) -> Result<Self> {
        let ranking = if candidates.len() >= 2 {
            let rows: Vec<(String, QualityReport<f64>)> = candidates
                .iter()
                .map(|c| (c.label.clone(), c.report.clone()))
                .collect();
            Some(rank_frameworks(&rows)?)
        } else {
            None
        };
        Ok(RunReport {
            census_year,
            reference,
            candidates,
            ranking,
        })
    }
}

pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn grouped(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let int = int.parse::<u64>().map(thousands).unwrap_or_else(|_| int.to_string());
    if frac.is_empty() {
        int
    } else {
        format!("{int}.{frac}")
    }
}

/// `6.257E-05` style: four significant digits, two-digit exponent.
pub fn sci(x: f64) -> String {
    let s = format!("{x:.3E}");
    match s.split_once('E') {
        Some((m, e)) => {
            let e: i32 = e.parse().unwrap_or(0);
            let sign = if e < 0 { '-' } else { '+' };
            format!("{m}E{sign}{:02}", e.abs())
        }
        None => s,
    }
}

fn statistic(x: f64) -> String {
    grouped(x, if x >= 1000.0 { 2 } else { 3 })
}

fn share(n: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 / total as f64 * 100.0
    }
}

/// Column-aligned block: first column left, the rest right.
fn block(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |row: &[String]| {
        let mut s = String::new();
        for (i, cell) in row.iter().enumerate() {
            let pad = width[i] - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string()
    };
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", line(header));
    let _ = writeln!(out, "{}", "-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1)));
    for row in rows {
        let _ = writeln!(out, "{}", line(row));
    }
    out.push('\n');
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn coverage_table(out: &mut String, r: &RunReport) {
    let header = strings(&[
        "Candidate",
        "Population size",
        "T∩R",
        "Coverage rate",
        "R∩T'",
        "Overcoverage rate",
        "Female",
        "Male",
        "Unknown sex",
    ]);
    let mut rows: Vec<Vec<String>> = r
        .candidates
        .iter()
        .map(|c| {
            let q = &c.report;
            vec![
                c.label.clone(),
                thousands(q.counts.r),
                thousands(q.counts.t_and_r),
                format!("{:.3}", q.coverage_rate),
                thousands(q.counts.r_not_t),
                format!("{:.3}", q.overcoverage_rate),
                thousands(q.tallies.r_sex.female),
                thousands(q.tallies.r_sex.male),
                thousands(q.tallies.r_sex.unknown),
            ]
        })
        .collect();
    rows.push(vec![
        "Reference census".into(),
        thousands(r.reference.persons),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        thousands(r.reference.sex.female),
        thousands(r.reference.sex.male),
        thousands(r.reference.sex.unknown),
    ]);
    block(out, "Population size, coverage and overcoverage", &header, &rows);
}

fn age_table(out: &mut String, r: &RunReport) {
    let mut header = vec!["Age (year)".to_string()];
    header.extend(r.candidates.iter().map(|c| c.label.clone()));
    header.push("Reference census".into());
    let mut rows: Vec<Vec<String>> = AgeBin::all()
        .map(|b| {
            let mut row = vec![b.label()];
            row.extend(
                r.candidates
                    .iter()
                    .map(|c| thousands(c.report.tallies.r_age.bins[b.index()])),
            );
            row.push(thousands(r.reference.age.bins[b.index()]));
            row
        })
        .collect();
    let mut unknown = vec!["unknown".to_string()];
    unknown.extend(r.candidates.iter().map(|c| thousands(c.report.tallies.r_age.unknown)));
    unknown.push(thousands(r.reference.age.unknown));
    rows.push(unknown);
    let mut total = vec!["Population size".to_string()];
    total.extend(r.candidates.iter().map(|c| thousands(c.population_size)));
    total.push(thousands(r.reference.persons));
    rows.push(total);
    block(out, "Members by age", &header, &rows);
}

fn homogeneity_rows(
    labels: &[String],
    reg: &[u64],
    refc: &[u64],
    first: [String; 3],
) -> Vec<Vec<String>> {
    let (rt, tt): (u64, u64) = (reg.iter().sum(), refc.iter().sum());
    let mut first = Some(first);
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let (pr, pt) = (share(reg[i], rt), share(refc[i], tt));
            let mut row = vec![
                label.clone(),
                format!("{} ({pr:.2}%)", thousands(reg[i])),
                format!("{} ({pt:.2}%)", thousands(refc[i])),
                format!("{:.2}%", (pr - pt).abs()),
            ];
            row.extend(first.take().unwrap_or_default());
            row
        })
        .collect()
}

fn sex_table(out: &mut String, r: &RunReport) {
    let header = strings(&[
        "Sex",
        "Register frequency (%)",
        "Reference frequency (%)",
        "Absolute difference",
        "Chi-square (df)",
        "P-value",
        "CHD(Sex)",
    ]);
    for c in &r.candidates {
        let q = &c.report;
        let rows = homogeneity_rows(
            &strings(&["Female", "Male"]),
            &q.tallies.r_sex.known(),
            &q.tallies.t_sex.known(),
            [
                format!("{} ({})", statistic(q.chi2_sex.statistic), q.chi2_sex.df),
                format_p(q.chi2_sex.p_value),
                sci(q.chd_sex_squared),
            ],
        );
        block(out, &format!("Homogeneity by sex: {}", c.label), &header, &rows);
    }
}

fn age_homogeneity_table(out: &mut String, r: &RunReport) {
    let header = strings(&[
        "Age",
        "Register frequency (%)",
        "Reference frequency (%)",
        "Absolute difference",
        "Chi-square (df)",
        "P-value",
        "CHD(Age)",
    ]);
    let labels: Vec<String> = AgeBin::all().map(AgeBin::label).collect();
    for c in &r.candidates {
        let q = &c.report;
        let rows = homogeneity_rows(
            &labels,
            &q.tallies.r_age.bins,
            &q.tallies.t_age.bins,
            [
                format!("{} ({})", statistic(q.chi2_age.statistic), q.chi2_age.df),
                format_p(q.chi2_age.p_value),
                format!("{:.6}", q.chd_age_squared),
            ],
        );
        block(out, &format!("Homogeneity by age: {}", c.label), &header, &rows);
    }
}

/// Text tables: coverage, age counts, sex and age homogeneity, ranking.
/// CHD columns hold the pre-root sums; roots are in `report.json`.
pub fn render_tables(r: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Census year {}\n", r.census_year);
    coverage_table(&mut out, r);
    age_table(&mut out, r);
    sex_table(&mut out, r);
    age_homogeneity_table(&mut out, r);
    if let Some(ranking) = &r.ranking {
        let _ = writeln!(out, "Ranking (1 = best on a measure)");
        out.push_str(&ranking.to_table());
    }
    out
}
