//! Acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use regcensus::deident::{deidentify, digest, DeidentPolicy, Salt};
use regcensus::frameworks::{enumerate, CensusPopulation, FrameworkKind, FrameworkSpec};
use regcensus::integrate::{integrate, relabel_fields, KeySpec, ReplacementPolicy};
use regcensus::pipeline::{self, evaluate_fixture, CountsFixture, RunConfig, StagePlan};
use regcensus::quality::{chd_squared, evaluate, CategoryDistribution, QualityReport};
use regcensus::record::{IntegratedDatabase, Register};
use regcensus::synth::{self, Scenario, ScenarioConfig};

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/published_counts.json")
}

fn spec(kind: FrameworkKind, min_registers: usize) -> FrameworkSpec {
    let mut s = FrameworkSpec::new(kind).with_min_registers(min_registers);
    s.census_area_codes = CENSUS_AREA.iter().map(|c| c.to_string()).collect();
    s
}

fn integrated(registers: &[Register]) -> IntegratedDatabase {
    integrate(registers, &KeySpec::default(), &ReplacementPolicy::default())
        .unwrap()
        .0
}

fn member_strings(pop: &CensusPopulation) -> BTreeSet<String> {
    pop.members.iter().map(|k| k.to_string()).collect()
}

fn random_config(i: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0000 + i);
    let n_years = rng.gen_range(1..=3);
    let mut missingness = BTreeMap::new();
    for f in MERGED_FIELDS {
        if rng.gen_bool(0.5) {
            missingness.insert(f.to_string(), rng.gen_range(0.0..0.15));
        }
    }
    ScenarioConfig {
        population_size: rng.gen_range(100..=1000),
        years: (2020 - n_years..2020).collect(),
        migration_rate_per_year: rng.gen_range(0.0..0.1),
        missingness,
        duplication_rate: rng.gen_range(0.0..0.1),
        reference_census_sampling: rng.gen_range(0.6..=1.0),
        out_of_area_share: rng.gen_range(0.0..0.3),
        legacy_first_register: rng.gen_bool(0.5),
        seed: i,
        ..Default::default()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// |x − printed| within half a unit of the printed value's last digit.
fn rounds_to(x: f64, printed: &str) -> bool {
    let value: f64 = printed.parse().unwrap();
    let (mantissa, exp) = match printed.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().unwrap()),
        None => (printed, 0),
    };
    let decimals = mantissa.split_once('.').map_or(0, |(_, f)| f.len()) as i32;
    (x - value).abs() <= 0.5 * 10f64.powi(exp - decimals) * (1.0 + 1e-9)
}

fn c1() -> String {
    let report = evaluate_fixture(&CountsFixture::load(&fixture_path()).unwrap()).unwrap();
    let coverage = [0.688496, 0.720602, 0.681585];
    let overcoverage = [0.655908, 0.686306, 0.683317];
    for (i, c) in report.candidates.iter().enumerate() {
        assert!(close(c.report.coverage_rate, coverage[i], 1e-6), "{}: coverage {}", c.label, c.report.coverage_rate);
        assert!(
            close(c.report.overcoverage_rate, overcoverage[i], 1e-6),
            "{}: overcoverage {}",
            c.label,
            c.report.overcoverage_rate
        );
    }
    let ranking = report.ranking.unwrap();
    let avg: Vec<f64> = ranking.candidates.iter().map(|c| c.average_rank).collect();
    assert_eq!(avg, vec![1.5, 2.5, 2.0]);
    assert_eq!(ranking.winner, "F1-4 on 2019");
    format!("rates within 1e-6, average ranks {avg:?}, best {}", ranking.winner)
}

fn c2() -> String {
    let fixture = CountsFixture::load(&fixture_path()).unwrap();
    let printed = [
        ("6.257E-05", "0.003051"),
        ("6.97037E-05", "0.004243"),
        ("6.78432E-05", "0.003021"),
    ];
    let t = &fixture.reference;
    for (c, (sex_printed, age_printed)) in fixture.candidates.iter().zip(printed) {
        let sex: f64 = chd_squared(
            &CategoryDistribution::of_sex(&c.sex).unwrap(),
            &CategoryDistribution::of_sex(&t.sex).unwrap(),
        )
        .unwrap();
        let age: f64 = chd_squared(
            &CategoryDistribution::of_age(&c.age).unwrap(),
            &CategoryDistribution::of_age(&t.age).unwrap(),
        )
        .unwrap();
        assert!(close(sex, oracle_chd_squared(&c.sex.known(), &t.sex.known()), 1e-15));
        assert!(close(age, oracle_chd_squared(&c.age.bins, &t.age.bins), 1e-15));
        assert!(rounds_to(sex, sex_printed), "{}: sex {sex:e} vs {sex_printed}", c.label);
        assert!(rounds_to(age, age_printed), "{}: age {age} vs {age_printed}", c.label);
    }
    "pre-root CHD sums match the longhand oracle and round to every printed value".into()
}

fn c3() -> String {
    let report = evaluate_fixture(&CountsFixture::load(&fixture_path()).unwrap()).unwrap();
    let sex = [30.439, 35.467, 33.830];
    let age = [1629.30, 2149.47, 1507.43];
    let mut worst: f64 = 0.0;
    for (i, c) in report.candidates.iter().enumerate() {
        let q = &c.report;
        for (test, target, df) in [(&q.chi2_sex, sex[i], 1), (&q.chi2_age, age[i], 14)] {
            let rel = (test.statistic - target).abs() / target;
            worst = worst.max(rel);
            assert!(rel <= 0.005, "{}: statistic {} vs {target}", c.label, test.statistic);
            assert_eq!(test.df, df);
            assert!(test.p_value < 0.001);
        }
    }
    format!("statistics within 0.5% (worst {:.3}%), df 1/14, p < 0.001", worst * 100.0)
}

fn check_scenario(s: &Scenario, salt: &Salt) {
    let cy = s.truth.census_year;
    let prepared = prepare(&s.registers, cy, salt);
    let db = integrated(&prepared);
    let oracle = oracle_integrate(&s.registers, salt, cy);

    let keys: Vec<String> = db.rows.keys().map(|k| k.to_string()).collect();
    let oracle_keys: Vec<String> = oracle.rows.keys().cloned().collect();
    assert_eq!(keys, oracle_keys, "seed {}: global keys differ", s.metadata.seed);
    for (key, row) in &db.rows {
        let o = &oracle.rows[&key.to_string()];
        for f in MERGED_FIELDS {
            assert_eq!(row.value(f).as_str(), o.values[f].as_deref(), "seed {}: {key}.{f}", s.metadata.seed);
        }
        assert_eq!(db.source_count[key], o.registers.len());
    }

    let reference = hashed_reference(s, salt);
    let t: BTreeSet<String> = s.truth.reference_pids.iter().map(|p| digest(p, salt)).collect();
    let persons: BTreeMap<String, _> = s.truth.persons.iter().map(|p| (digest(&p.pid, salt), p)).collect();
    let mut t_sex = [0u64; 2];
    let mut t_age = [0u64; 15];
    for pid in &t {
        let p = persons[pid];
        t_sex[usize::from(p.sex == "M")] += 1;
        t_age[oracle_bin(p.year_of_birth, cy)] += 1;
    }

    for kind in FrameworkKind::ALL {
        if kind == FrameworkKind::MultiRegister && db.registers.len() < 2 {
            assert!(enumerate(&db, &spec(kind, 2)).is_err());
            continue;
        }
        let pop = enumerate(&db, &spec(kind, 2)).unwrap();
        let expected = oracle_members(&oracle, kind.code(), 2);
        assert_eq!(member_strings(&pop), expected, "seed {}: {kind} members", s.metadata.seed);
        if expected.is_empty() {
            continue;
        }
        let q: QualityReport<f64> = evaluate(&pop, &reference).unwrap();
        let rows: Vec<_> = expected.iter().map(|k| &oracle.rows[k]).collect();
        let covered = rows
            .iter()
            .filter(|r| r.values["pid"].as_ref().is_some_and(|p| t.contains(p)))
            .count() as f64;
        let r = rows.len() as f64;
        assert!(close(q.coverage_rate, covered / t.len() as f64, 1e-12));
        assert!(close(q.overcoverage_rate, (r - covered) / r, 1e-12));

        let mut r_sex = [0u64; 2];
        let mut r_age = [0u64; 15];
        for row in &rows {
            match row.values["sex"].as_deref() {
                Some("F") => r_sex[0] += 1,
                Some("M") => r_sex[1] += 1,
                _ => {}
            }
            if let Some(y) = row.values["year_of_birth"].as_deref() {
                r_age[oracle_bin(y.parse().unwrap(), cy)] += 1;
            }
        }
        assert!(close(q.chd_sex_squared, oracle_chd_squared(&r_sex, &t_sex), 1e-12));
        assert!(close(q.chd_age_squared, oracle_chd_squared(&r_age, &t_age), 1e-12));
        let (stat, df) = oracle_chi2(&r_age, &t_age);
        assert_eq!(q.chi2_age.df, df);
        assert!(close(q.chi2_age.statistic, stat, 1e-9 * stat.max(1.0)));
    }
}

fn c4() -> String {
    let salt = salt();
    let start = Instant::now();
    let mut records = 0;
    for i in 0..50 {
        let s = synth::generate(&random_config(i)).unwrap();
        records += s.registers.iter().map(|r| r.records.len()).sum::<usize>();
        check_scenario(&s, &salt);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    format!("50 scenarios ({records} records) match the nested-loop oracle in {secs:.1}s")
}

fn sizes(db: &IntegratedDatabase) -> BTreeMap<&'static str, u64> {
    FrameworkKind::ALL[..4]
        .iter()
        .map(|&k| (k.code(), enumerate(db, &spec(k, 2)).unwrap().size()))
        .collect()
}

fn c5() -> String {
    let salt = salt();
    let mut checked = 0;
    for i in 0..50 {
        for clean in [false, true] {
            let mut config = random_config(i);
            if clean {
                config.missingness.clear();
                config.out_of_area_share = 0.0;
            }
            let s = synth::generate(&config).unwrap();
            let db = integrated(&prepare(&s.registers, s.truth.census_year, &salt));
            let m = |k| member_strings(&enumerate(&db, &spec(k, 2)).unwrap());
            let (f2, f3, f4) = (
                m(FrameworkKind::HasPid),
                m(FrameworkKind::AllMainVariables),
                m(FrameworkKind::AnyMainVariable),
            );
            assert!(f3.is_subset(&f2) && f2.is_subset(&f4), "seed {i}: nesting");
            if clean {
                let n = sizes(&db);
                assert!(
                    n["F1"] == n["F2"] && n["F2"] == n["F3"] && n["F3"] == n["F4"],
                    "seed {i}: {n:?}"
                );
            }
            if db.registers.len() < 2 {
                checked += 1;
                continue;
            }
            let f5: Vec<u64> = (2..=5)
                .map(|k| enumerate(&db, &spec(FrameworkKind::MultiRegister, k)).unwrap().size())
                .collect();
            assert!(f5.windows(2).all(|w| w[0] >= w[1]), "seed {i}: F5 sizes {f5:?}");
            checked += 1;
        }
    }
    format!("F3 ⊆ F2 ⊆ F4 on {checked} scenarios; F1-F4 equal when complete; F5 nonincreasing in min_registers")
}

fn c6() -> String {
    let salt = salt();
    let mut wins = 0;
    for i in 0..50u64 {
        let config = ScenarioConfig {
            migration_rate_per_year: 0.03 + 0.01 * (i % 5) as f64,
            reference_census_sampling: 0.9,
            out_of_area_share: 0.1,
            duplication_rate: 0.02,
            missingness: [("pid".to_string(), 0.02), ("sex".to_string(), 0.02)].into(),
            seed: 500 + i,
            ..Default::default()
        };
        let s = synth::generate(&config).unwrap();
        let prepared = prepare(&s.registers, s.truth.census_year, &salt);
        let reference = hashed_reference(&s, &salt);
        let recent = prepared.iter().max_by_key(|r| r.reference_year).unwrap().clone();
        let over = |db: &IntegratedDatabase| {
            let pop = enumerate(db, &spec(FrameworkKind::AnyMainVariable, 2)).unwrap();
            evaluate::<f64>(&pop, &reference).unwrap().overcoverage_rate
        };
        if over(&integrated(&prepared)) > over(&integrated(&[recent])) {
            wins += 1;
        }
    }
    assert!(wins >= 45, "pooled overcoverage higher in only {wins}/50 runs");
    format!("pooled overcoverage above recent-only in {wins}/50 runs (need 45)")
}

fn scanner_run(dir: &Path, salt_bytes: &[u8], runs: &[&str]) -> (Scenario, Vec<PathBuf>) {
    let config = ScenarioConfig {
        population_size: 500,
        missingness: [("pid".to_string(), 0.05), ("last_name".to_string(), 0.05)].into(),
        duplication_rate: 0.05,
        migration_rate_per_year: 0.03,
        reference_census_sampling: 0.9,
        out_of_area_share: 0.1,
        seed: 77,
        ..Default::default()
    };
    let s = synth::generate(&config).unwrap();
    let input = dir.join("input");
    synth::write_scenario(&s, &input).unwrap();
    let salt_path = input.join("salt.key");
    std::fs::write(&salt_path, salt_bytes).unwrap();
    let mut run = RunConfig::from_toml(&pipeline::scenario_run_config(&s, "UNUSED").unwrap()).unwrap();
    run.deident.salt_env = None;
    run.deident.salt_file = Some(salt_path);
    run.resolve_paths(&input);
    let outs = runs
        .iter()
        .map(|name| {
            let out = dir.join(name);
            std::fs::create_dir_all(&out).unwrap();
            pipeline::run(&run, &out, &StagePlan::all()).unwrap();
            out
        })
        .collect();
    (s, outs)
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

fn c7() -> String {
    let fips = digest("abc", &Salt::insecure(Vec::new()));
    assert_eq!(fips, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

    let salt = salt();
    let s = synth::generate(&ScenarioConfig {
        population_size: 500,
        years: vec![2018, 2019],
        missingness: [("pid".to_string(), 0.1)].into(),
        duplication_rate: 0.05,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let raw: Vec<Register> = s.registers.iter().cloned().map(|r| relabel_fields(r).unwrap()).collect();
    let hashed: Vec<Register> = raw
        .iter()
        .cloned()
        .map(|r| deidentify(r, &DeidentPolicy::default(), &salt).unwrap())
        .collect();
    let pairs = |regs: &[Register]| {
        let (a, b) = (&regs[0].records, &regs[1].records);
        let mut set = BTreeSet::new();
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                if x.pid.is_present() && x.pid == y.pid {
                    set.insert((i, j));
                }
            }
        }
        set
    };
    let before = pairs(&raw);
    assert_eq!(before, pairs(&hashed));
    assert!(!before.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let salt_bytes = b"scanner-salt-7f3a9c21d4e8b605";
    let (s, outs) = scanner_run(dir.path(), salt_bytes, &["run"]);
    let b64 = base64::engine::general_purpose::STANDARD.encode(salt_bytes);
    let files = files_under(&outs[0]);
    for path in &files {
        let bytes = std::fs::read(path).unwrap();
        assert!(!contains(&bytes, salt_bytes), "salt in {}", path.display());
        assert!(!contains(&bytes, b64.as_bytes()), "base64 salt in {}", path.display());
        for p in &s.truth.persons {
            assert!(!contains(&bytes, p.pid.as_bytes()), "raw pid in {}", path.display());
        }
    }
    format!(
        "FIPS vector ok; {} pid-equal pairs preserved exactly; {} output files free of raw pids and salt",
        before.len(),
        files.len()
    )
}

fn c8() -> String {
    let dir = tempfile::tempdir().unwrap();
    let (s, outs) = scanner_run(dir.path(), b"determinism-salt-0123456789", &["first", "second"]);
    let names = [
        pipeline::REPORT_JSON,
        pipeline::TABLES_TXT,
        pipeline::PYRAMID_CSV,
        pipeline::INTEGRATION_LOG_JSON,
        pipeline::DEDUP_REPORT_CSV,
        pipeline::REJECTS_CSV,
        pipeline::POPULATIONS_JSON,
    ];
    for name in names {
        let a = std::fs::read(outs[0].join(name)).unwrap();
        let b = std::fs::read(outs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }

    let prepared = prepare(&s.registers, s.truth.census_year, &salt());
    let base = integrated(&prepared);
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for order in orders {
        let permuted: Vec<Register> = order.iter().map(|&i| prepared[i].clone()).collect();
        assert!(integrated(&permuted) == base, "order {order:?} changes the database");
    }
    format!("{} report files byte-identical across runs; 6 register orders give one database", names.len())
}

type Criterion = (&'static str, fn() -> String);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 ranking from published counts", c1),
        ("2 CHD golden values", c2),
        ("3 chi-square golden values", c3),
        ("4 integration and evaluation vs brute-force oracle", c4),
        ("5 framework nesting", c5),
        ("6 pooled registers raise overcoverage", c6),
        ("7 de-identification", c7),
        ("8 determinism", c8),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL  criterion {name}: {msg}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
