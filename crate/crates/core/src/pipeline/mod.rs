//! End-to-end run: ingest, cleanse, de-identify, integrate, enumerate,
//! evaluate and report, with per-stage resume by content digest.

pub mod config;
pub mod fixture;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cleanse::{cleanse, write_dedup_reports, CleanseSummary, DedupReport};
use crate::deident::{deidentify, digest, DeidentPolicy, Salt};
use crate::error::{Error, Result};
use crate::frameworks::{enumerate, write_pyramid_rows, CensusPopulation, PopulationSummary};
use crate::ingest::{ingest, write_rejects, IngestReport, Reject, SourceFormat, SourceSpec};
use crate::integrate::{integrate, relabel_fields, IntegrationLog};
use crate::quality::evaluate;
use crate::record::{
    read_records, write_records, FieldDictionary, IntegratedDatabase, ReferenceCensus, Register,
    RegisterRecord,
};

pub use config::{DatabaseSpec, DeidentConfig, ReferenceSpec, RunConfig};
pub use fixture::{evaluate_fixture, CountsFixture};
pub use report::{render_tables, CandidateReport, ReferenceSummary, RunReport};

pub const REPORT_JSON: &str = "report.json";
pub const TABLES_TXT: &str = "tables.txt";
pub const PYRAMID_CSV: &str = "pyramid.csv";
pub const INTEGRATION_LOG_JSON: &str = "integration_log.json";
pub const DEDUP_REPORT_CSV: &str = "dedup_report.csv";
pub const REJECTS_CSV: &str = "rejects.csv";
pub const POPULATIONS_JSON: &str = "populations.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
const PREPARED: &str = "prepared";
const INTEGRATED: &str = "integrated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Cleanse,
    Deident,
    Integrate,
    Enumerate,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Cleanse,
        Stage::Deident,
        Stage::Integrate,
        Stage::Enumerate,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cleanse => "cleanse",
            Stage::Deident => "deident",
            Stage::Integrate => "integrate",
            Stage::Enumerate => "enumerate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Ingest, cleanse and de-identification share one in-memory pass;
    /// only de-identified data is saved.
    fn is_preparation(self) -> bool {
        self <= Stage::Deident
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "deidentify" {
            return Ok(Stage::Deident);
        }
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown stage {s:?}")))
    }
}

/// Which stages a run executes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StagePlan {
    /// Every stage up to and including this one.
    Through(Stage),
    /// Exactly these; earlier saved outputs must already exist.
    Only(BTreeSet<Stage>),
}

impl StagePlan {
    pub fn all() -> Self {
        StagePlan::Through(Stage::Report)
    }

    /// Parses a comma-separated stage list.
    pub fn parse_list(list: &str) -> Result<Self> {
        let stages = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Stage::from_str)
            .collect::<Result<BTreeSet<_>>>()?;
        if stages.is_empty() {
            return Err(Error::config("empty stage list"));
        }
        Ok(StagePlan::Only(stages))
    }

    pub fn includes(&self, stage: Stage) -> bool {
        match self {
            StagePlan::Through(last) => stage <= *last,
            StagePlan::Only(set) => set.contains(&stage),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_digest: String,
    /// Run-directory relative path -> SHA-256 of the file.
    pub outputs: BTreeMap<String, String>,
}

/// Saved per-stage input digests and output checksums.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<Stage, StageRecord>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

impl Manifest {
    fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_JSON);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| Error::domain(format!("corrupt {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// True when the stage ran with these inputs and its outputs are intact.
    fn is_fresh(&self, dir: &Path, stage: Stage, input_digest: &str) -> bool {
        self.stages.get(&stage).is_some_and(|rec| {
            rec.input_digest == input_digest
                && rec
                    .outputs
                    .iter()
                    .all(|(rel, sum)| file_digest(&dir.join(rel)).is_ok_and(|d| &d == sum))
        })
    }

    fn outputs_digest(&self, stage: Stage) -> Result<String> {
        let rec = self.stages.get(&stage).ok_or_else(|| {
            Error::config(format!("stage {stage} has no saved output in this run directory; run it first"))
        })?;
        Ok(sha256_hex(&serde_json::to_vec(&rec.outputs)?))
    }
}

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::config(format!(
                "run directory {} is in use (remove {} if no run is active)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOutcome {
    pub executed: Vec<Stage>,
    pub reused: Vec<Stage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PreparedRegister {
    register_id: String,
    reference_year: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidatePopulation {
    pub label: String,
    pub database: String,
    pub summary: PopulationSummary,
}

pub fn candidate_label(database: &str, spec: &crate::frameworks::FrameworkSpec) -> String {
    format!("{} on {database}", spec.kind)
}

/// Hashes the policy fields of a raw record, including source columns
/// that the dictionary renames onto a policy field.
fn scrub(record: &mut RegisterRecord, dictionary: &FieldDictionary, policy: &DeidentPolicy, salt: &Salt) {
    let targets: BTreeSet<&str> = policy.fields().collect();
    for (source, target) in &dictionary.renames {
        if targets.contains(target.as_str()) {
            if let Some(slot) = record.get_mut(source) {
                if let Some(v) = slot.as_str() {
                    *slot = crate::record::FieldValue::Present(digest(v, salt));
                }
            }
        }
    }
    policy.apply(record, salt);
}

struct Runner<'a> {
    config: &'a RunConfig,
    dir: PathBuf,
    manifest: Manifest,
    salt: Option<Salt>,
    outcome: RunOutcome,
}

impl Runner<'_> {
    fn salt(&mut self) -> Result<Salt> {
        if self.salt.is_none() {
            self.salt = Some(self.config.deident.salt()?);
        }
        Ok(self.salt.clone().expect("salt loaded"))
    }

    fn write(&self, rel: &str, bytes: &[u8], outputs: &mut BTreeMap<String, String>) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn read(&self, rel: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(rel);
        fs::read(&path).map_err(|e| Error::io(path, e))
    }

    fn record(&mut self, stage: Stage, input_digest: String, outputs: BTreeMap<String, String>) -> Result<()> {
        self.manifest.stages.insert(stage, StageRecord { input_digest, outputs });
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        let tmp = self.dir.join(format!("{MANIFEST_JSON}.tmp"));
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        let path = self.dir.join(MANIFEST_JSON);
        fs::rename(&tmp, &path).map_err(|e| Error::io(path, e))
    }

    fn preparation_digest(&mut self) -> Result<String> {
        let c = self.config;
        let mut h = Sha256::new();
        h.update(b"deident\n");
        h.update(serde_json::to_vec(&(c.census_year, &c.sources, &c.deident.fields, c.reference.hashed))?);
        for s in &c.sources {
            h.update(file_digest(&s.path)?.as_bytes());
        }
        h.update(file_digest(&c.reference.path)?.as_bytes());
        h.update(self.salt()?.fingerprint().as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    fn stage_digest(&self, stage: Stage, config_part: &impl Serialize, upstream: &[Stage]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.as_str().as_bytes());
        h.update(serde_json::to_vec(config_part)?);
        for s in upstream {
            h.update(self.manifest.outputs_digest(*s)?.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    fn prepare(&mut self, upto: Stage) -> Result<()> {
        let config = self.config;
        let input_digest = self.preparation_digest()?;
        if upto == Stage::Deident && self.manifest.is_fresh(&self.dir, Stage::Deident, &input_digest) {
            self.outcome.reused.extend([Stage::Ingest, Stage::Cleanse, Stage::Deident]);
            return Ok(());
        }
        let policy = config.deident.policy()?;
        let salt = self.salt()?;
        let mut ingest_reports: Vec<IngestReport> = Vec::new();
        let mut rejects: Vec<Reject> = Vec::new();
        let mut dedup: Vec<DedupReport> = Vec::new();
        let mut summaries: Vec<CleanseSummary> = Vec::new();
        let mut registers: Vec<Register> = Vec::new();
        for spec in &config.sources {
            let (register, mut report) = ingest(spec)?;
            for mut r in report.rejects.drain(..) {
                scrub(&mut r.record, &spec.dictionary, &policy, &salt);
                rejects.push(r);
            }
            ingest_reports.push(report);
            if upto == Stage::Ingest {
                continue;
            }
            let register = relabel_fields(register)?;
            let (register, dedup_report, summary) = cleanse(register, config.census_year);
            dedup.push(dedup_report);
            summaries.push(summary);
            if upto == Stage::Deident {
                registers.push(deidentify(register, &policy, &salt)?);
            }
        }

        let mut outputs = BTreeMap::new();
        let mut buf = Vec::new();
        write_rejects(&mut buf, &rejects)?;
        self.write(REJECTS_CSV, &buf, &mut outputs)?;
        self.write(
            &format!("{PREPARED}/ingest_report.json"),
            &serde_json::to_vec_pretty(&ingest_reports)?,
            &mut outputs,
        )?;
        self.outcome.executed.push(Stage::Ingest);
        if upto == Stage::Ingest {
            return Ok(());
        }
        let mut buf = Vec::new();
        write_dedup_reports(&mut buf, &dedup, &salt)?;
        self.write(DEDUP_REPORT_CSV, &buf, &mut outputs)?;
        self.write(
            &format!("{PREPARED}/cleanse_summary.json"),
            &serde_json::to_vec_pretty(&summaries)?,
            &mut outputs,
        )?;
        self.outcome.executed.push(Stage::Cleanse);
        if upto == Stage::Cleanse {
            return Ok(());
        }

        let mut listing = Vec::new();
        for r in &registers {
            let mut buf = Vec::new();
            write_records(&mut buf, &r.records)?;
            self.write(&format!("{PREPARED}/{}.csv", r.register_id), &buf, &mut outputs)?;
            listing.push(PreparedRegister {
                register_id: r.register_id.clone(),
                reference_year: r.reference_year,
            });
        }
        self.write(
            &format!("{PREPARED}/registers.json"),
            &serde_json::to_vec_pretty(&listing)?,
            &mut outputs,
        )?;
        let reference = self.read_reference(&policy, &salt)?;
        self.write(
            &format!("{PREPARED}/reference.json"),
            &serde_json::to_vec(&reference)?,
            &mut outputs,
        )?;
        self.outcome.executed.push(Stage::Deident);
        self.record(Stage::Deident, input_digest, outputs)
    }

    fn read_reference(&self, policy: &DeidentPolicy, salt: &Salt) -> Result<ReferenceCensus> {
        let c = self.config;
        let spec = SourceSpec::new("reference", &c.reference.path, c.census_year, SourceFormat::csv());
        let (reference, _) = ingest(&spec)?;
        let mut records = reference.records;
        if !c.reference.hashed {
            for r in &mut records {
                policy.apply(r, salt);
            }
        }
        let census = ReferenceCensus::from_records(&records, c.census_year);
        if census.persons.is_empty() {
            return Err(Error::domain("reference census has no persons with a PID"));
        }
        Ok(census)
    }

    fn load_registers(&self) -> Result<Vec<Register>> {
        let listing: Vec<PreparedRegister> =
            serde_json::from_slice(&self.read(&format!("{PREPARED}/registers.json"))?)?;
        listing
            .into_iter()
            .map(|p| {
                let bytes = self.read(&format!("{PREPARED}/{}.csv", p.register_id))?;
                let records = read_records(bytes.as_slice())?;
                Register::new(p.register_id, p.reference_year, records, FieldDictionary::default())
            })
            .collect()
    }

    fn load_reference(&self) -> Result<ReferenceCensus> {
        Ok(serde_json::from_slice(&self.read(&format!("{PREPARED}/reference.json"))?)?)
    }

    fn integrate(&mut self) -> Result<()> {
        let c = self.config;
        let dbs = c.databases();
        let input_digest = self.stage_digest(
            Stage::Integrate,
            &(c.census_year, &c.keys, &c.replacement, &dbs),
            &[Stage::Deident],
        )?;
        if self.manifest.is_fresh(&self.dir, Stage::Integrate, &input_digest) {
            self.outcome.reused.push(Stage::Integrate);
            return Ok(());
        }
        let registers = self.load_registers()?;
        let mut outputs = BTreeMap::new();
        let mut logs: BTreeMap<String, IntegrationLog> = BTreeMap::new();
        for db in &dbs {
            let members: BTreeSet<&str> = db.sources.iter().map(String::as_str).collect();
            let mut chosen: Vec<Register> = registers
                .iter()
                .filter(|r| members.contains(r.register_id.as_str()))
                .cloned()
                .collect();
            chosen.sort_by(|a, b| a.register_id.cmp(&b.register_id));
            let policy = config::restrict_policy(&c.replacement, &members);
            let (mut integrated, log) = integrate(&chosen, &c.keys, &policy)?;
            integrated.census_year = c.census_year;
            self.write(
                &format!("{INTEGRATED}/{}.json", db.name),
                &serde_json::to_vec(&integrated)?,
                &mut outputs,
            )?;
            logs.insert(db.name.clone(), log);
        }
        self.write(INTEGRATION_LOG_JSON, &serde_json::to_vec_pretty(&logs)?, &mut outputs)?;
        self.outcome.executed.push(Stage::Integrate);
        self.record(Stage::Integrate, input_digest, outputs)
    }

    fn load_integrated(&self, name: &str) -> Result<IntegratedDatabase> {
        Ok(serde_json::from_slice(&self.read(&format!("{INTEGRATED}/{name}.json"))?)?)
    }

    fn populations(&self) -> Result<Vec<(String, String, CensusPopulation)>> {
        let mut cache: BTreeMap<String, IntegratedDatabase> = BTreeMap::new();
        let mut out = Vec::new();
        for (db, spec) in self.config.candidates() {
            if !cache.contains_key(&db.name) {
                cache.insert(db.name.clone(), self.load_integrated(&db.name)?);
            }
            let pop = enumerate(&cache[&db.name], &spec)?;
            out.push((candidate_label(&db.name, &spec), db.name.clone(), pop));
        }
        Ok(out)
    }

    fn enumerate(&mut self) -> Result<()> {
        let candidates = self.config.candidates();
        let input_digest = self.stage_digest(Stage::Enumerate, &candidates, &[Stage::Integrate])?;
        if self.manifest.is_fresh(&self.dir, Stage::Enumerate, &input_digest) {
            self.outcome.reused.push(Stage::Enumerate);
            return Ok(());
        }
        let pops = self.populations()?;
        let mut outputs = BTreeMap::new();
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for (i, (label, _, pop)) in pops.iter().enumerate() {
                write_pyramid_rows(&mut w, &pop.pyramid, Some(label), i == 0)?;
            }
            w.flush().map_err(|e| Error::io(PYRAMID_CSV, e))?;
        }
        self.write(PYRAMID_CSV, &buf, &mut outputs)?;
        let summaries: Vec<CandidatePopulation> = pops
            .iter()
            .map(|(label, db, pop)| CandidatePopulation {
                label: label.clone(),
                database: db.clone(),
                summary: pop.summary(),
            })
            .collect();
        self.write(POPULATIONS_JSON, &serde_json::to_vec_pretty(&summaries)?, &mut outputs)?;
        self.outcome.executed.push(Stage::Enumerate);
        self.record(Stage::Enumerate, input_digest, outputs)
    }

    fn evaluate(&mut self) -> Result<()> {
        let candidates = self.config.candidates();
        let input_digest = self.stage_digest(
            Stage::Evaluate,
            &candidates,
            &[Stage::Deident, Stage::Integrate, Stage::Enumerate],
        )?;
        if self.manifest.is_fresh(&self.dir, Stage::Evaluate, &input_digest) {
            self.outcome.reused.push(Stage::Evaluate);
            return Ok(());
        }
        let reference = self.load_reference()?;
        let mut reports = Vec::new();
        for (label, database, pop) in self.populations()? {
            reports.push(CandidateReport {
                report: evaluate(&pop, &reference)?,
                label,
                database,
                framework: pop.framework.kind,
                source_years: pop.source_years.clone(),
                population_size: pop.size(),
            });
        }
        let report = RunReport::new(self.config.census_year, ReferenceSummary::from(&reference), reports)?;
        let mut outputs = BTreeMap::new();
        self.write(REPORT_JSON, &serde_json::to_vec_pretty(&report)?, &mut outputs)?;
        self.outcome.executed.push(Stage::Evaluate);
        self.record(Stage::Evaluate, input_digest, outputs)
    }

    fn report(&mut self) -> Result<()> {
        let input_digest = self.stage_digest(Stage::Report, &(), &[Stage::Evaluate])?;
        if self.manifest.is_fresh(&self.dir, Stage::Report, &input_digest) {
            self.outcome.reused.push(Stage::Report);
            return Ok(());
        }
        let report: RunReport = serde_json::from_slice(&self.read(REPORT_JSON)?)?;
        let mut outputs = BTreeMap::new();
        self.write(TABLES_TXT, render_tables(&report).as_bytes(), &mut outputs)?;
        self.outcome.executed.push(Stage::Report);
        self.record(Stage::Report, input_digest, outputs)
    }
}

/// Runs the planned stages of `config` inside `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path, plan: &StagePlan) -> Result<RunOutcome> {
    config.validate()?;
    let _lock = RunLock::acquire(out_dir)?;
    let mut runner = Runner {
        config,
        dir: out_dir.to_path_buf(),
        manifest: Manifest::load(out_dir)?,
        salt: None,
        outcome: RunOutcome::default(),
    };
    if let Some(upto) = Stage::ALL
        .into_iter()
        .filter(|s| s.is_preparation() && plan.includes(*s))
        .max()
    {
        runner.prepare(upto)?;
    }
    if plan.includes(Stage::Integrate) {
        runner.integrate()?;
    }
    if plan.includes(Stage::Enumerate) {
        runner.enumerate()?;
    }
    if plan.includes(Stage::Evaluate) {
        runner.evaluate()?;
    }
    if plan.includes(Stage::Report) {
        runner.report()?;
    }
    Ok(runner.outcome)
}

/// Writes `report.json` and `tables.txt` for a counts fixture.
pub fn run_fixture(fixture: &CountsFixture, out_dir: &Path) -> Result<RunReport> {
    let _lock = RunLock::acquire(out_dir)?;
    let report = evaluate_fixture(fixture)?;
    let write = |name: &str, bytes: &[u8]| {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(REPORT_JSON, &serde_json::to_vec_pretty(&report)?)?;
    write(TABLES_TXT, render_tables(&report).as_bytes())?;
    Ok(report)
}

/// Run configuration for a scenario written by
/// [`write_scenario`](crate::synth::write_scenario) into the same directory:
/// the most recent register alone under F1-F4, and all registers pooled
/// under F1-F5 when there are several.
pub fn scenario_run_config(scenario: &crate::synth::Scenario, salt_env: &str) -> Result<String> {
    use crate::frameworks::FrameworkKind;
    let cfg = &scenario.metadata.config;
    let sources: Vec<SourceSpec> = scenario
        .registers
        .iter()
        .map(|r| {
            let mut s = SourceSpec::new(
                &r.register_id,
                crate::synth::register_file_name(&r.register_id),
                r.reference_year,
                SourceFormat::csv(),
            );
            s.dictionary = r.dictionary.clone();
            s
        })
        .collect();
    let recent = scenario
        .registers
        .iter()
        .max_by_key(|r| r.reference_year)
        .expect("at least one register");
    let single = [
        FrameworkKind::CurrentAddress,
        FrameworkKind::HasPid,
        FrameworkKind::AllMainVariables,
        FrameworkKind::AnyMainVariable,
    ];
    let mut databases = vec![DatabaseSpec {
        name: "recent".into(),
        sources: vec![recent.register_id.clone()],
        frameworks: Some(single.to_vec()),
    }];
    if scenario.registers.len() > 1 {
        databases.push(DatabaseSpec {
            name: "pooled".into(),
            sources: sources.iter().map(|s| s.register_id.clone()).collect(),
            frameworks: Some(FrameworkKind::ALL.to_vec()),
        });
    }
    let config = RunConfig {
        census_year: cfg.census_year(),
        census_areas: cfg.census_area_codes.iter().cloned().collect(),
        area_scope: false,
        frameworks: FrameworkKind::ALL.to_vec(),
        min_registers: 2,
        strict_pid: false,
        sources,
        databases,
        deident: DeidentConfig {
            fields: vec![crate::record::PID.into()],
            salt_env: Some(salt_env.into()),
            salt_file: None,
        },
        keys: Default::default(),
        replacement: Default::default(),
        reference: ReferenceSpec {
            path: crate::synth::REFERENCE_FILE.into(),
            hashed: false,
        },
    };
    config.validate()?;
    toml::to_string(&config).map_err(|e| Error::config(format!("cannot serialize run config: {e}")))
}
