//! Register-based census toolkit: ingest administrative registers, cleanse
//! and de-identify them, integrate them into one person-level database,
//! enumerate census populations under membership frameworks and score them
//! against a traditional census.

pub mod cleanse;
pub mod deident;
pub mod error;
pub mod frameworks;
pub mod ingest;
pub mod integrate;
pub mod pipeline;
pub mod quality;
pub mod record;
pub mod synth;

pub use error::{Error, Result};
pub use record::{
    AgeBin, AgeCounts, FieldDictionary, FieldValue, GlobalKey, IntegratedDatabase, ReferenceCensus,
    Register, RegisterRecord, SexCounts,
};

pub type QualityReport = quality::QualityReport<f64>;
pub type CategoryDistribution = quality::CategoryDistribution<f64>;
pub type Chi2Test = quality::Chi2Test<f64>;
pub type Ranking = quality::Ranking<f64>;
