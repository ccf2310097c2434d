//! Census quality measures: coverage, overcoverage, chi-square histogram
//! distance, chi-square test for homogeneity, and candidate ranking.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`).

mod rank;

use std::collections::BTreeSet;
use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::frameworks::CensusPopulation;
use crate::record::{AgeBin, AgeCounts, ReferenceCensus, SexCounts};

pub use rank::{rank_frameworks, Measure, RankedCandidate, Ranking};

/// Floating-point type the quality measures are computed in.
pub trait Scalar: Float + FromPrimitive + Serialize + Debug + Display + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn ratio<F: Scalar>(num: u64, den: u64) -> F {
    F::from_u64(num).unwrap() / F::from_u64(den).unwrap()
}

/// Sizes of the reference set T, the register set R and their overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipCounts {
    pub t: u64,
    pub r: u64,
    pub t_and_r: u64,
    pub r_not_t: u64,
}

impl MembershipCounts {
    pub fn new(t: u64, r: u64, t_and_r: u64) -> Result<Self> {
        if t_and_r > t || t_and_r > r {
            return Err(Error::domain(format!(
                "overlap {t_and_r} exceeds |T| = {t} or |R| = {r}"
            )));
        }
        Ok(MembershipCounts {
            t,
            r,
            t_and_r,
            r_not_t: r - t_and_r,
        })
    }

    pub fn from_sets<K: Ord>(t: &BTreeSet<K>, r: &BTreeSet<K>) -> Self {
        let t_and_r = t.intersection(r).count() as u64;
        MembershipCounts {
            t: t.len() as u64,
            r: r.len() as u64,
            t_and_r,
            r_not_t: r.len() as u64 - t_and_r,
        }
    }

    /// |T ∩ R| / |T|
    pub fn coverage_rate<F: Scalar>(&self) -> Result<F> {
        if self.t == 0 {
            return Err(Error::domain("coverage rate of an empty reference population"));
        }
        Ok(ratio(self.t_and_r, self.t))
    }

    /// |R \ T| / |R|
    pub fn overcoverage_rate<F: Scalar>(&self) -> Result<F> {
        if self.r == 0 {
            return Err(Error::domain("overcoverage rate of an empty register population"));
        }
        Ok(ratio(self.r_not_t, self.r))
    }
}

/// Share of the reference set T found in the register set R.
pub fn coverage_rate<F: Scalar, K: Ord>(t: &BTreeSet<K>, r: &BTreeSet<K>) -> Result<F> {
    MembershipCounts::from_sets(t, r).coverage_rate()
}

/// Share of the register set R absent from the reference set T.
pub fn overcoverage_rate<F: Scalar, K: Ord>(t: &BTreeSet<K>, r: &BTreeSet<K>) -> Result<F> {
    MembershipCounts::from_sets(t, r).overcoverage_rate()
}

/// Counts over labelled categories and the matching proportions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryDistribution<F> {
    pub categories: Vec<String>,
    pub counts: Vec<u64>,
    pub proportions: Vec<F>,
}

impl<F: Scalar> CategoryDistribution<F> {
    pub fn from_counts<S: Into<String>>(
        categories: impl IntoIterator<Item = S>,
        counts: &[u64],
    ) -> Result<Self> {
        let categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        if categories.len() != counts.len() {
            return Err(Error::domain("category and count lists differ in length"));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::domain("distribution has no mass"));
        }
        Ok(CategoryDistribution {
            proportions: counts.iter().map(|&c| ratio(c, total)).collect(),
            counts: counts.to_vec(),
            categories,
        })
    }

    /// Known sexes in F, M order.
    pub fn of_sex(counts: &SexCounts) -> Result<Self> {
        Self::from_counts(["F", "M"], &counts.known())
    }

    /// The 15 age bins.
    pub fn of_age(counts: &AgeCounts) -> Result<Self> {
        Self::from_counts(AgeBin::all().map(AgeBin::label), &counts.bins)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// ½ Σ (p − q)² / (p + q); categories with no mass on either side are
/// skipped.
pub fn chd_squared<F: Scalar>(p: &CategoryDistribution<F>, q: &CategoryDistribution<F>) -> Result<F> {
    if p.categories != q.categories {
        return Err(Error::domain(format!(
            "category lists differ: {:?} vs {:?}",
            p.categories, q.categories
        )));
    }
    let half = F::from_f64(0.5).unwrap();
    let sum = p
        .proportions
        .iter()
        .zip(&q.proportions)
        .filter(|(a, b)| **a + **b > F::zero())
        .fold(F::zero(), |acc, (&a, &b)| {
            let d = a - b;
            acc + d * d / (a + b)
        });
    Ok(half * sum)
}

/// Chi-square histogram distance: the square root of [`chd_squared`].
pub fn chd<F: Scalar>(p: &CategoryDistribution<F>, q: &CategoryDistribution<F>) -> Result<F> {
    chd_squared(p, q).map(Float::sqrt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Test<F> {
    pub statistic: F,
    pub df: usize,
    pub p_value: F,
}

/// Pearson chi-square test for homogeneity of two count vectors over the
/// same categories (no continuity correction).
pub fn chi2_homogeneity<F: Scalar>(counts_r: &[u64], counts_t: &[u64]) -> Result<Chi2Test<F>> {
    if counts_r.len() != counts_t.len() {
        return Err(Error::domain("samples have different numbers of categories"));
    }
    let n = counts_r.len();
    if n < 2 {
        return Err(Error::domain("homogeneity test needs at least two categories"));
    }
    let total_r: u64 = counts_r.iter().sum();
    let total_t: u64 = counts_t.iter().sum();
    let grand = F::from_u64(total_r + total_t).unwrap();
    let mut statistic = F::zero();
    for (row, (counts, total)) in [(counts_r, total_r), (counts_t, total_t)].into_iter().enumerate() {
        for (col, &observed) in counts.iter().enumerate() {
            let col_total = counts_r[col] + counts_t[col];
            if col_total == 0 || total == 0 {
                return Err(Error::domain(format!(
                    "zero expected count in cell (sample {row}, category {col})"
                )));
            }
            let expected =
                F::from_u64(total).unwrap() * F::from_u64(col_total).unwrap() / grand;
            let d = F::from_u64(observed).unwrap() - expected;
            statistic = statistic + d * d / expected;
        }
    }
    let df = n - 1;
    Ok(Chi2Test {
        statistic,
        df,
        p_value: chi2_upper_tail(statistic, df),
    })
}

/// P(X ≥ x) for X ~ χ²(df).
pub fn chi2_upper_tail<F: Scalar>(x: F, df: usize) -> F {
    if x <= F::zero() {
        return F::one();
    }
    let dist = ChiSquared::new(df as f64).expect("df is at least 1");
    F::from_f64(dist.sf(x.to_f64().unwrap_or(f64::INFINITY))).unwrap_or_else(F::zero)
}

/// p-value as printed in tables: "< 0.001" below that threshold.
pub fn format_p<F: Scalar>(p: F) -> String {
    let p = p.to_f64().unwrap_or(f64::NAN);
    if p < 0.001 {
        "< 0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Register and reference tallies the distributional measures are based on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub r_sex: SexCounts,
    pub t_sex: SexCounts,
    pub r_age: AgeCounts,
    pub t_age: AgeCounts,
}

/// All quality measures for one register population against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport<F> {
    pub coverage_rate: F,
    pub overcoverage_rate: F,
    pub chd_sex_squared: F,
    pub chd_sex: F,
    pub chd_age_squared: F,
    pub chd_age: F,
    pub chi2_sex: Chi2Test<F>,
    pub chi2_age: Chi2Test<F>,
    pub counts: MembershipCounts,
    pub tallies: Tallies,
}

/// Drops categories empty in both samples; the test is undefined there.
fn nonempty_columns(a: &[u64], b: &[u64]) -> (Vec<u64>, Vec<u64>) {
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(x, y)| (*x, *y))
        .unzip()
}

/// Builds the report from membership counts and tallies. Unknown sex/age
/// buckets are excluded from the distributions.
pub fn evaluate_counts<F: Scalar>(counts: MembershipCounts, tallies: Tallies) -> Result<QualityReport<F>> {
    let r_sex = CategoryDistribution::<F>::of_sex(&tallies.r_sex)?;
    let t_sex = CategoryDistribution::<F>::of_sex(&tallies.t_sex)?;
    let r_age = CategoryDistribution::<F>::of_age(&tallies.r_age)?;
    let t_age = CategoryDistribution::<F>::of_age(&tallies.t_age)?;
    let chd_sex_squared = chd_squared(&r_sex, &t_sex)?;
    let chd_age_squared = chd_squared(&r_age, &t_age)?;
    let (sr, st) = nonempty_columns(&r_sex.counts, &t_sex.counts);
    let (ar, at) = nonempty_columns(&r_age.counts, &t_age.counts);
    Ok(QualityReport {
        coverage_rate: counts.coverage_rate()?,
        overcoverage_rate: counts.overcoverage_rate()?,
        chd_sex_squared,
        chd_sex: chd_sex_squared.sqrt(),
        chd_age_squared,
        chd_age: chd_age_squared.sqrt(),
        chi2_sex: chi2_homogeneity(&sr, &st)?,
        chi2_age: chi2_homogeneity(&ar, &at)?,
        counts,
        tallies,
    })
}

/// Scores an enumerated population against the reference census.
pub fn evaluate<F: Scalar>(pop: &CensusPopulation, reference: &ReferenceCensus) -> Result<QualityReport<F>> {
    if pop.prebuilt {
        return Err(Error::domain(
            "population has no member identities; use evaluate_counts",
        ));
    }
    if pop.census_year != reference.census_year {
        return Err(Error::domain(format!(
            "census years differ: population {} vs reference {}",
            pop.census_year, reference.census_year
        )));
    }
    let r = pop.members.len() as u64;
    let t_and_r = pop.person_ids.intersection(&reference.persons).count() as u64;
    let counts = MembershipCounts::new(reference.persons.len() as u64, r, t_and_r)?;
    evaluate_counts(
        counts,
        Tallies {
            r_sex: pop.by_sex(),
            t_sex: reference.sex_counts,
            r_age: pop.by_age(),
            t_age: reference.age_counts,
        },
    )
}
