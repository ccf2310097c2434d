use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{QualityReport, Scalar};
use crate::error::{Error, Result};

/// The four ranked measures, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    CoverageRate,
    OvercoverageRate,
    ChdSex,
    ChdAge,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::CoverageRate,
        Measure::OvercoverageRate,
        Measure::ChdSex,
        Measure::ChdAge,
    ];

    pub fn higher_is_better(self) -> bool {
        matches!(self, Measure::CoverageRate)
    }

    /// Value used for ranking. CHD is ranked on its pre-root value, which
    /// orders identically to the root.
    pub fn value<F: Scalar>(self, report: &QualityReport<F>) -> F {
        match self {
            Measure::CoverageRate => report.coverage_rate,
            Measure::OvercoverageRate => report.overcoverage_rate,
            Measure::ChdSex => report.chd_sex_squared,
            Measure::ChdAge => report.chd_age_squared,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Measure::CoverageRate => "Coverage rate",
            Measure::OvercoverageRate => "Overcoverage rate",
            Measure::ChdSex => "CHD(Sex)",
            Measure::ChdAge => "CHD(Age)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate<F> {
    pub label: String,
    pub values: [F; 4],
    pub ranks: [f64; 4],
    pub average_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking<F> {
    pub measures: [Measure; 4],
    pub candidates: Vec<RankedCandidate<F>>,
    pub winner: String,
}

/// Ranks of `values` (1 = best), ties sharing the mean of their positions.
fn average_ranks<F: Scalar>(values: &[F], higher_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal);
        if higher_is_better {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Ranks candidates on every measure and picks the lowest average rank.
/// Equal averages go to the earlier candidate.
pub fn rank_frameworks<F: Scalar>(reports: &[(String, QualityReport<F>)]) -> Result<Ranking<F>> {
    if reports.len() < 2 {
        return Err(Error::domain("ranking needs at least two candidates"));
    }
    let per_measure: Vec<Vec<f64>> = Measure::ALL
        .iter()
        .map(|m| {
            let vals: Vec<F> = reports.iter().map(|(_, r)| m.value(r)).collect();
            average_ranks(&vals, m.higher_is_better())
        })
        .collect();
    let candidates: Vec<RankedCandidate<F>> = reports
        .iter()
        .enumerate()
        .map(|(i, (label, report))| {
            let ranks = [0, 1, 2, 3].map(|m| per_measure[m][i]);
            RankedCandidate {
                label: label.clone(),
                values: Measure::ALL.map(|m| m.value(report)),
                ranks,
                average_rank: ranks.iter().sum::<f64>() / 4.0,
            }
        })
        .collect();
    let winner = candidates
        .iter()
        .fold(None::<&RankedCandidate<F>>, |best, c| match best {
            Some(b) if b.average_rank <= c.average_rank => Some(b),
            _ => Some(c),
        })
        .map(|c| c.label.clone())
        .unwrap_or_default();
    Ok(Ranking {
        measures: Measure::ALL,
        candidates,
        winner,
    })
}

fn format_rank(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

impl<F: Scalar> Ranking<F> {
    /// Fixed-width text table: one row per candidate, rank in parentheses.
    pub fn to_table(&self) -> String {
        let width = self
            .candidates
            .iter()
            .map(|c| c.label.chars().count())
            .max()
            .unwrap_or(0)
            .max("Candidate".len());
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Candidate");
        for m in self.measures {
            let _ = write!(out, "  {:>18}", m.title());
        }
        let _ = writeln!(out, "  {:>12}", "Average rank");
        for c in &self.candidates {
            let _ = write!(out, "{:<width$}", c.label);
            for (k, m) in self.measures.iter().enumerate() {
                let v = c.values[k].to_f64().unwrap_or(f64::NAN);
                let cell = match m {
                    Measure::ChdSex => format!("{v:.8} ({})", format_rank(c.ranks[k])),
                    _ => format!("{v:.6} ({})", format_rank(c.ranks[k])),
                };
                let _ = write!(out, "  {cell:>18}");
            }
            let _ = writeln!(out, "  {:>12.2}", c.average_rank);
        }
        let _ = writeln!(out, "Best: {}", self.winner);
        out
    }
}
