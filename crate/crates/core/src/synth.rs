//! Seeded generator of multi-year synthetic registers, a matching
//! reference census and the ground truth behind both.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::year_start_epoch;
use crate::integrate::thai_citizen_id;
use crate::record::{
    write_records, FieldDictionary, FieldValue, ReferenceCensus, Register, RegisterRecord,
    ADDRESS_AREA, MAIN_VARIABLES, SEX,
};

/// Identifier of the random source written into scenario metadata.
pub const RNG_ALGORITHM: &str = "chacha8 (rand_chacha 0.3 ChaCha8Rng::seed_from_u64(seed), stream = person index)";

const YEAR_SECONDS: i64 = 365 * 86_400;
const MAX_AGE: i32 = 95;
const LEGACY_FIELD: &str = "gender";

const SYLLABLES: [&str; 16] = [
    "som", "chai", "ma", "nee", "sri", "pra", "kit", "wan", "rat", "tha", "pong", "sak", "nok",
    "jan", "dao", "pim",
];
const SURNAMES: [&str; 12] = [
    "Jaidee", "Srisuk", "Boonmee", "Rattana", "Wongsa", "Chaiyo", "Kaewmanee", "Saelim",
    "Thongdee", "Phromma", "Inthara", "Suwan",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub population_size: usize,
    /// Register reference years; the last is the census year.
    pub years: Vec<i32>,
    pub area_codes: Vec<String>,
    /// Subset of `area_codes` forming the census area.
    pub census_area_codes: Vec<String>,
    /// Yearly chance that an in-area person leaves the census area. Leavers
    /// drop out of all later registers.
    pub migration_rate_per_year: f64,
    /// Per-record chance that a main variable (or `address_area`) is N/A.
    pub missingness: BTreeMap<String, f64>,
    /// Per-record chance of an older exact copy in the same register.
    pub duplication_rate: f64,
    /// Share of the in-area population the reference census enumerates.
    pub reference_census_sampling: f64,
    /// Share of persons registered with an address outside the census area.
    pub out_of_area_share: f64,
    /// Code sex as `gender` 1/2 in the earliest register when there are
    /// several, with the dictionary needed to map it back.
    pub legacy_first_register: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            population_size: 1_000,
            years: vec![2017, 2018, 2019],
            area_codes: ["2401", "2402", "2403", "1001", "2001"].map(String::from).to_vec(),
            census_area_codes: ["2401", "2402", "2403"].map(String::from).to_vec(),
            migration_rate_per_year: 0.0,
            missingness: BTreeMap::new(),
            duplication_rate: 0.0,
            reference_census_sampling: 1.0,
            out_of_area_share: 0.0,
            legacy_first_register: true,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("scenario config: {}", e.message())))
    }

    pub fn census_year(&self) -> i32 {
        self.years.iter().copied().max().unwrap_or_default()
    }

    fn outside_codes(&self) -> Vec<&String> {
        self.area_codes
            .iter()
            .filter(|c| !self.census_area_codes.contains(c))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::config("population_size must be at least 1"));
        }
        if self.population_size > 99_999_999 {
            return Err(Error::config("population_size too large for generated ids"));
        }
        let years: BTreeSet<i32> = self.years.iter().copied().collect();
        if years.is_empty() || years.len() != self.years.len() {
            return Err(Error::config("years must be non-empty and distinct"));
        }
        if self.census_area_codes.is_empty()
            || self.census_area_codes.iter().any(|c| !self.area_codes.contains(c))
        {
            return Err(Error::config("census_area_codes must be a non-empty subset of area_codes"));
        }
        let mut rates = vec![
            ("migration_rate_per_year", self.migration_rate_per_year),
            ("duplication_rate", self.duplication_rate),
            ("reference_census_sampling", self.reference_census_sampling),
            ("out_of_area_share", self.out_of_area_share),
        ];
        for (field, rate) in &self.missingness {
            if !MAIN_VARIABLES.contains(&field.as_str()) && field != ADDRESS_AREA {
                return Err(Error::config(format!("missingness for unknown field {field:?}")));
            }
            rates.push((field.as_str(), *rate));
        }
        if let Some((name, _)) = rates.iter().find(|(_, r)| !(0.0..=1.0).contains(r)) {
            return Err(Error::config(format!("{name} must lie in [0, 1]")));
        }
        if (self.migration_rate_per_year > 0.0 || self.out_of_area_share > 0.0)
            && self.outside_codes().is_empty()
        {
            return Err(Error::config("migration needs area codes outside the census area"));
        }
        Ok(())
    }

    fn register_id(year: i32) -> String {
        format!("reg{year}")
    }
}

/// One synthetic person as generated, before any register noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PersonTruth {
    pub pid: String,
    pub prefix: String,
    pub first_name: String,
    pub last_name: String,
    pub year_of_birth: i32,
    pub sex: String,
    /// Address in the census year.
    pub address_area: String,
    /// Address carried by the person's register records.
    pub registered_area: String,
    /// Reference years whose register holds this person.
    pub registered_years: Vec<i32>,
    /// Year the person left the census area, if they did.
    pub migrated_in: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundTruth {
    pub census_year: i32,
    pub persons: Vec<PersonTruth>,
    /// Raw PIDs living in the census area in the census year.
    pub in_area_pids: BTreeSet<String>,
    /// Raw PIDs enumerated by the reference census.
    pub reference_pids: BTreeSet<String>,
    /// Raw PIDs of persons with at least one record, per register.
    pub register_pids: BTreeMap<String, BTreeSet<String>>,
    pub records_emitted: BTreeMap<String, usize>,
    pub duplicates_emitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioMetadata {
    pub rng_algorithm: String,
    pub seed: u64,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub registers: Vec<Register>,
    pub reference: ReferenceCensus,
    /// Person records the reference census was built from.
    pub reference_records: Vec<RegisterRecord>,
    pub truth: GroundTruth,
    pub metadata: ScenarioMetadata,
}

fn person_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Fixed-width base-26 code, so suffixed names stay unique.
fn letters(mut n: usize) -> String {
    let mut out = vec![b'a'; 6];
    for slot in out.iter_mut().rev() {
        *slot = b'a' + (n % 26) as u8;
        n /= 26;
    }
    String::from_utf8(out).expect("ascii")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

struct Draft {
    truth: PersonTruth,
    /// Last year spent inside the census area.
    in_area_through: i32,
    registered_outside: bool,
}

fn draft_person(config: &ScenarioConfig, index: usize, rng: &mut ChaCha8Rng) -> Draft {
    let census_year = config.census_year();
    let first_year = config.years.iter().copied().min().unwrap_or(census_year);
    let sex = if rng.gen_bool(0.5) { "F" } else { "M" };
    let year_of_birth = rng.gen_range((census_year - MAX_AGE)..=first_year);
    let age = census_year - year_of_birth;
    let prefix = match (sex, age < 15, rng.gen_bool(0.5)) {
        ("M", true, _) => "Master",
        ("M", false, _) => "Mr.",
        (_, true, _) | (_, false, false) => "Miss",
        (_, false, true) => "Mrs.",
    };
    let first_name = format!(
        "{}{}{}",
        capitalize(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]),
        SYLLABLES[rng.gen_range(0..SYLLABLES.len())],
        letters(index)
    );
    let last_name = SURNAMES[rng.gen_range(0..SURNAMES.len())].to_string();
    let outside = config.outside_codes();
    let registered_outside = rng.gen_bool(config.out_of_area_share);
    let home = if registered_outside {
        outside[rng.gen_range(0..outside.len())].clone()
    } else {
        config.census_area_codes[rng.gen_range(0..config.census_area_codes.len())].clone()
    };

    let mut years: Vec<i32> = config.years.clone();
    years.sort_unstable();
    let mut in_area_through = census_year;
    let mut migrated_in = None;
    let mut address = home.clone();
    if !registered_outside {
        for pair in years.windows(2) {
            if rng.gen_bool(config.migration_rate_per_year) {
                in_area_through = pair[0];
                migrated_in = Some(pair[1]);
                address = outside[rng.gen_range(0..outside.len())].clone();
                break;
            }
        }
    }
    let registered_years = years.iter().copied().filter(|&y| y <= in_area_through).collect();
    Draft {
        truth: PersonTruth {
            pid: thai_citizen_id(100_000_000_000 + index as u64),
            prefix: prefix.to_string(),
            first_name,
            last_name,
            year_of_birth,
            sex: sex.to_string(),
            address_area: address,
            registered_area: home,
            registered_years,
            migrated_in,
        },
        in_area_through,
        registered_outside,
    }
}

fn clean_record(p: &PersonTruth, register_id: &str, timestamp: i64, address: &str) -> RegisterRecord {
    let mut r = RegisterRecord::new(register_id, timestamp);
    r.pid = FieldValue::Present(p.pid.clone());
    r.prefix = FieldValue::Present(p.prefix.clone());
    r.first_name = FieldValue::Present(p.first_name.clone());
    r.last_name = FieldValue::Present(p.last_name.clone());
    r.year_of_birth = FieldValue::Present(p.year_of_birth.to_string());
    r.sex = FieldValue::Present(p.sex.clone());
    r.address_area = FieldValue::Present(address.to_string());
    r
}

fn legacy_dictionary() -> FieldDictionary {
    let mut d = FieldDictionary::default();
    d.renames.insert(LEGACY_FIELD.into(), SEX.into());
    d.value_maps.insert(
        SEX.into(),
        BTreeMap::from([("1".into(), "M".into()), ("2".into(), "F".into())]),
    );
    d
}

/// Builds the scenario. Identical configs give identical output.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let census_year = config.census_year();
    let mut years = config.years.clone();
    years.sort_unstable();
    let legacy_year = (config.legacy_first_register && years.len() > 1).then(|| years[0]);
    let noisy_fields: Vec<(&str, f64)> = MAIN_VARIABLES
        .iter()
        .copied()
        .chain([ADDRESS_AREA])
        .map(|f| (f, config.missingness.get(f).copied().unwrap_or(0.0)))
        .collect();

    let mut per_year: BTreeMap<i32, Vec<RegisterRecord>> =
        years.iter().map(|&y| (y, Vec::new())).collect();
    let mut truth = GroundTruth {
        census_year,
        persons: Vec::with_capacity(config.population_size),
        in_area_pids: BTreeSet::new(),
        reference_pids: BTreeSet::new(),
        register_pids: years
            .iter()
            .map(|&y| (ScenarioConfig::register_id(y), BTreeSet::new()))
            .collect(),
        records_emitted: BTreeMap::new(),
        duplicates_emitted: 0,
    };
    let mut reference_records = Vec::new();

    for index in 0..config.population_size {
        let mut rng = person_rng(config.seed, index);
        let draft = draft_person(config, index, &mut rng);
        let p = &draft.truth;
        let home = &p.registered_area;
        for &year in &p.registered_years {
            let register_id = ScenarioConfig::register_id(year);
            let ts = year_start_epoch(year) + rng.gen_range(0..YEAR_SECONDS);
            let mut record = clean_record(p, &register_id, ts, home);
            for &(field, rate) in &noisy_fields {
                if rng.gen_bool(rate) {
                    record.set(field, FieldValue::NotAvailable);
                }
            }
            if Some(year) == legacy_year {
                let code = match record.sex.as_str() {
                    Some("M") => FieldValue::Present("1".into()),
                    Some(_) => FieldValue::Present("2".into()),
                    None => FieldValue::NotAvailable,
                };
                record.sex = FieldValue::NotAvailable;
                record.extra.insert(LEGACY_FIELD.into(), code);
            }
            let duplicate = rng.gen_bool(config.duplication_rate).then(|| {
                let mut d = record.clone();
                d.record_timestamp -= rng.gen_range(1..=30) * 86_400;
                d
            });
            truth.register_pids.get_mut(&register_id).expect("year").insert(p.pid.clone());
            let bucket = per_year.get_mut(&year).expect("year");
            bucket.push(record);
            if let Some(d) = duplicate {
                bucket.push(d);
                truth.duplicates_emitted += 1;
            }
        }
        let in_area_now = !draft.registered_outside && draft.in_area_through == census_year;
        if in_area_now {
            truth.in_area_pids.insert(p.pid.clone());
            if rng.gen_bool(config.reference_census_sampling) {
                truth.reference_pids.insert(p.pid.clone());
                reference_records.push(clean_record(
                    p,
                    "reference",
                    year_start_epoch(census_year),
                    &p.address_area,
                ));
            }
        }
        truth.persons.push(draft.truth);
    }

    let mut registers = Vec::with_capacity(years.len());
    for (year, records) in per_year {
        let register_id = ScenarioConfig::register_id(year);
        truth.records_emitted.insert(register_id.clone(), records.len());
        let dictionary = if Some(year) == legacy_year {
            legacy_dictionary()
        } else {
            FieldDictionary::default()
        };
        registers.push(Register::new(register_id, year, records, dictionary)?);
    }
    let reference = ReferenceCensus::from_records(&reference_records, census_year);
    Ok(Scenario {
        registers,
        reference,
        reference_records,
        truth,
        metadata: ScenarioMetadata {
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: config.seed,
            config: config.clone(),
        },
    })
}

/// File name of a register's canonical CSV inside a scenario directory.
pub fn register_file_name(register_id: &str) -> String {
    format!("{register_id}.csv")
}

pub const REFERENCE_FILE: &str = "reference.csv";
pub const DICTIONARY_FILE_SUFFIX: &str = ".dictionary.json";

/// Writes registers, reference records, dictionaries, ground truth and
/// metadata under `dir`.
pub fn write_scenario(scenario: &Scenario, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).map_err(|e| Error::io(&path, e))
    };
    for register in &scenario.registers {
        write_records(create(&register_file_name(&register.register_id))?, &register.records)?;
        if register.dictionary != FieldDictionary::default() {
            serde_json::to_writer_pretty(
                create(&format!("{}{DICTIONARY_FILE_SUFFIX}", register.register_id))?,
                &register.dictionary,
            )?;
        }
    }
    write_records(create(REFERENCE_FILE)?, &scenario.reference_records)?;
    serde_json::to_writer_pretty(create("ground_truth.json")?, &scenario.truth)?;
    serde_json::to_writer_pretty(create("metadata.json")?, &scenario.metadata)?;
    Ok(())
}
