use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deident::{DeidentPolicy, Salt};
use crate::error::{Error, Result};
use crate::frameworks::{FrameworkKind, FrameworkSpec};
use crate::ingest::SourceSpec;
use crate::integrate::{KeySpec, ReplacementPolicy};
use crate::record::PID;

fn default_frameworks() -> Vec<FrameworkKind> {
    FrameworkKind::ALL.to_vec()
}

fn default_min_registers() -> usize {
    2
}

fn default_deident_fields() -> Vec<String> {
    vec![PID.to_string()]
}

/// A candidate register-based census: a named subset of the sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseSpec {
    pub name: String,
    pub sources: Vec<String>,
    /// Overrides the run-level framework list for this database.
    #[serde(default)]
    pub frameworks: Option<Vec<FrameworkKind>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeidentConfig {
    #[serde(default = "default_deident_fields")]
    pub fields: Vec<String>,
    /// Environment variable holding the base64 salt.
    #[serde(default)]
    pub salt_env: Option<String>,
    /// File holding the raw salt bytes.
    #[serde(default)]
    pub salt_file: Option<PathBuf>,
}

impl DeidentConfig {
    pub fn policy(&self) -> Result<DeidentPolicy> {
        DeidentPolicy::new(self.fields.iter().cloned())
    }

    pub fn salt(&self) -> Result<Salt> {
        match (&self.salt_env, &self.salt_file) {
            (Some(var), None) => Salt::from_env(var),
            (None, Some(path)) => Salt::from_file(path),
            _ => Err(Error::config("deident needs exactly one of salt_env or salt_file")),
        }
    }
}

/// The traditional census: a canonical CSV of person records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub path: PathBuf,
    /// PIDs in the file are already de-identified with the run's salt.
    #[serde(default)]
    pub hashed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub census_year: i32,
    #[serde(default)]
    pub census_areas: BTreeSet<String>,
    #[serde(default)]
    pub area_scope: bool,
    #[serde(default = "default_frameworks")]
    pub frameworks: Vec<FrameworkKind>,
    #[serde(default = "default_min_registers")]
    pub min_registers: usize,
    #[serde(default)]
    pub strict_pid: bool,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub databases: Vec<DatabaseSpec>,
    pub deident: DeidentConfig,
    #[serde(default)]
    pub keys: KeySpec,
    #[serde(default)]
    pub replacement: ReplacementPolicy,
    pub reference: ReferenceSpec,
}

impl RunConfig {
    /// Reads a TOML run file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("run config: {}", e.message())))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sources {
            fix(&mut s.path);
        }
        fix(&mut self.reference.path);
        if let Some(p) = &mut self.deident.salt_file {
            fix(p);
        }
    }

    /// Declared databases, or one database `all` over every source.
    pub fn databases(&self) -> Vec<DatabaseSpec> {
        if !self.databases.is_empty() {
            return self.databases.clone();
        }
        vec![DatabaseSpec {
            name: "all".into(),
            sources: self.sources.iter().map(|s| s.register_id.clone()).collect(),
            frameworks: None,
        }]
    }

    pub fn framework_spec(&self, kind: FrameworkKind) -> FrameworkSpec {
        let mut spec = FrameworkSpec::new(kind).with_min_registers(self.min_registers);
        spec.census_area_codes = self.census_areas.clone();
        spec.area_scope = self.area_scope;
        spec.strict_pid = self.strict_pid;
        spec
    }

    /// (database, framework) pairs in evaluation order.
    pub fn candidates(&self) -> Vec<(DatabaseSpec, FrameworkSpec)> {
        self.databases()
            .into_iter()
            .flat_map(|db| {
                let kinds = db.frameworks.clone().unwrap_or_else(|| self.frameworks.clone());
                kinds
                    .into_iter()
                    .map(move |k| (db.clone(), self.framework_spec(k)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1900..=2200).contains(&self.census_year) {
            return Err(Error::config(format!("census_year {} out of range", self.census_year)));
        }
        if self.sources.is_empty() {
            return Err(Error::config("no sources declared"));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            if !ids.insert(s.register_id.as_str()) {
                return Err(Error::config(format!("duplicate register_id {:?}", s.register_id)));
            }
            if s.reference_year > self.census_year {
                return Err(Error::config(format!(
                    "register {} is dated after the census year",
                    s.register_id
                )));
            }
        }
        if self.frameworks.is_empty() {
            return Err(Error::config("framework list is empty"));
        }
        self.deident.policy()?;
        if self.deident.salt_env.is_some() == self.deident.salt_file.is_some() {
            return Err(Error::config("deident needs exactly one of salt_env or salt_file"));
        }
        let mut names = BTreeSet::new();
        for db in self.databases() {
            if !names.insert(db.name.clone()) {
                return Err(Error::config(format!("duplicate database name {:?}", db.name)));
            }
            if db.name.is_empty()
                || !db.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            {
                return Err(Error::config(format!("database name {:?} must be a plain file name", db.name)));
            }
            let members: BTreeSet<&str> = db.sources.iter().map(String::as_str).collect();
            if members.is_empty() || members.len() != db.sources.len() {
                return Err(Error::config(format!("database {} lists no or repeated sources", db.name)));
            }
            if let Some(unknown) = members.iter().find(|m| !ids.contains(*m)) {
                return Err(Error::config(format!("database {} uses unknown source {unknown}", db.name)));
            }
            restrict_policy(&self.replacement, &members).validate(&members)?;
        }
        for (db, spec) in self.candidates() {
            spec.validate()?;
            if spec.kind == FrameworkKind::MultiRegister && db.sources.len() < 2 {
                return Err(Error::config(format!(
                    "F5 requires ≥2 registers (database {} has {})",
                    db.name,
                    db.sources.len()
                )));
            }
        }
        Ok(())
    }
}

/// The replacement policy with its priority list cut down to `members`.
pub fn restrict_policy(policy: &ReplacementPolicy, members: &BTreeSet<&str>) -> ReplacementPolicy {
    let keep = |list: &[String]| -> Vec<String> {
        list.iter().filter(|r| members.contains(r.as_str())).cloned().collect()
    };
    match policy {
        ReplacementPolicy::Timeline { tie_break } => ReplacementPolicy::Timeline {
            tie_break: tie_break.as_deref().map(keep),
        },
        ReplacementPolicy::SourcePriority { order } => {
            ReplacementPolicy::SourcePriority { order: keep(order) }
        }
    }
}
