use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use warebus::dsl::{parse_schema, SourceText};
use warebus::etl::{
    self, load_document, link_document, load_rules, prepare_catalog, run_manifest, EtlError,
    LoadReport, SourceDescriptor, SourceOutcome, SourcesManifest,
};
use warebus::mapping::MappingRules;
use warebus::store::{open_catalog, Catalog, OpenMode, Snapshot};
use warebus::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn manifest() -> SourcesManifest {
    SourcesManifest::read(&fixtures().join("sources/sources.manifest")).unwrap()
}

fn prepared(dir: &Path) -> (Catalog, SourcesManifest, MappingRules) {
    let schema = parse_schema(&SourceText::read(&fixtures().join("medical.dws")).unwrap()).unwrap();
    let catalog = open_catalog(dir, OpenMode::ReadWrite).unwrap();
    let m = manifest();
    let (rules, intervals) = load_rules(&m).unwrap();
    prepare_catalog(&catalog, &schema, Some(intervals)).unwrap();
    (catalog, m, rules)
}

fn loaded(outcomes: &[SourceOutcome]) -> BTreeMap<String, LoadReport> {
    outcomes
        .iter()
        .filter_map(|o| match o {
            SourceOutcome::Loaded(r) => Some((r.source.clone(), r.clone())),
            SourceOutcome::Duplicate { .. } => None,
        })
        .collect()
}

struct Counts {
    facts: BTreeMap<String, usize>,
    members: BTreeMap<String, usize>,
    documents: usize,
    links: usize,
}

fn counts(snap: &Snapshot) -> Counts {
    let schema = snap.schema().unwrap();
    Counts {
        facts: schema
            .fact_tables
            .iter()
            .map(|f| (f.name.clone(), snap.fact_rows(&f.name).unwrap().len()))
            .collect(),
        members: schema
            .dimensions
            .iter()
            .map(|d| (d.name.clone(), snap.dimension(&d.name).unwrap().len()))
            .collect(),
        documents: snap.documents().len(),
        links: snap.links().len(),
    }
}

/// Minimal independent reader for the fixture tables: no quoting beyond a
/// single pair of surrounding double quotes.
fn table(path: &Path, delimiter: char) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(delimiter)
                .map(|f| f.trim().trim_matches('"').to_string())
                .collect()
        })
        .collect()
}

struct Oracle {
    synonyms: BTreeMap<String, String>,
    canonical: BTreeMap<String, String>,
    factors: BTreeMap<(String, String), (f64, f64)>,
}

impl Oracle {
    fn new() -> Self {
        let map = fixtures().join("mapping");
        Oracle {
            synonyms: table(&map.join("synonyms.csv"), ',')
                .into_iter()
                .map(|r| (r[0].to_lowercase(), r[1].clone()))
                .collect(),
            canonical: table(&map.join("canonical_units.csv"), ',')
                .into_iter()
                .map(|r| (r[0].clone(), r[1].clone()))
                .collect(),
            factors: table(&map.join("units.csv"), ',')
                .into_iter()
                .map(|r| {
                    (
                        (r[0].clone(), r[1].clone()),
                        (r[2].parse().unwrap(), r[3].parse().unwrap()),
                    )
                })
                .collect(),
        }
    }

    fn code(&self, label: &str) -> Option<String> {
        let l = label.to_lowercase();
        self.synonyms
            .get(&l)
            .cloned()
            .or_else(|| self.canonical.contains_key(&l).then_some(l))
    }

    /// Canonical value of a raw (value, unit, label) triple, or None when the
    /// row must be rejected.
    fn convert(&self, label: &str, raw: &str, unit: &str) -> Option<(String, f64)> {
        let code = self.code(label)?;
        let x: f64 = raw.replace(',', ".").parse().ok()?;
        let canonical = &self.canonical[&code];
        if unit == canonical {
            return Some((code, x));
        }
        let (f, o) = self.factors.get(&(unit.to_string(), canonical.clone()))?;
        Some((code, x * f + o))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

fn member_text(snap: &Snapshot, dim: &str, key: u64, attr: &str) -> String {
    let schema = snap.schema().unwrap();
    let idx = schema.dimension(dim).unwrap().attribute_index(attr).unwrap();
    snap.dimension(dim).unwrap().member(key).unwrap().values[idx].render()
}

#[test]
fn harmonized_values_match_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    let reports = loaded(&run_manifest(&catalog, &m, &rules).unwrap());
    let snap = catalog.snapshot();
    let oracle = Oracle::new();
    let src = fixtures().join("sources");

    // (fact, source file, delimiter, label/value/unit column positions, provider)
    let plan = [
        ("lab-a", "lab-a.csv", ';', 4, 5, 6, "LAB-A"),
        ("lab-b", "lab-b.csv", ',', 2, 3, 4, "LAB-B"),
    ];
    let rows = snap.fact_rows("biological").unwrap();
    let mut cursor = 0;
    let mut unexpected = 0;
    let mut hemoglobin_labels = BTreeSet::new();
    let mut hemoglobin_units = BTreeSet::new();
    let mut hemoglobin_providers = BTreeSet::new();
    for (name, file, delim, l, v, u, provider) in plan {
        let report = &reports[name];
        assert_eq!(report.records_read() as usize, table(&src.join(file), delim).len());
        for rec in table(&src.join(file), delim) {
            match oracle.convert(&rec[l], &rec[v], &rec[u]) {
                None => {
                    assert!(report.rejected.iter().any(|r| r.reason.contains(&rec[l])));
                }
                Some((code, expected)) => {
                    let row = &rows[cursor];
                    cursor += 1;
                    let got = row.measures[0].as_f64().unwrap();
                    assert!(close(got, expected), "{name}: {got} vs {expected}");
                    assert_eq!(member_text(&snap, "medical-analysis", row.keys[3], "code"), code);
                    assert_eq!(member_text(&snap, "data-provider", row.keys[1], "code"), provider);
                    if code == "hemoglobin" {
                        hemoglobin_labels.insert(rec[l].to_lowercase());
                        hemoglobin_units.insert(rec[u].clone());
                        hemoglobin_providers.insert(provider);
                    }
                }
            }
        }
        unexpected += report
            .rejected
            .iter()
            .filter(|r| !r.reason.contains("Vitamin Q"))
            .count();
    }
    assert_eq!(cursor, rows.len());
    assert_eq!(unexpected, 0);
    assert_eq!(hemoglobin_labels.len(), 3);
    assert_eq!(hemoglobin_units.len(), 2);
    assert_eq!(hemoglobin_providers.len(), 2);
    let analyses = snap.dimension("medical-analysis").unwrap();
    let hemoglobin: Vec<_> = analyses
        .iter()
        .filter(|m| m.values[0] == Value::Text("hemoglobin".into()))
        .collect();
    assert_eq!(hemoglobin.len(), 1);
}

#[test]
fn reload_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    let first = run_manifest(&catalog, &m, &rules).unwrap();
    assert!(first.iter().all(|o| matches!(o, SourceOutcome::Loaded(_))));
    let before = counts(&catalog.snapshot());
    let second = run_manifest(&catalog, &m, &rules).unwrap();
    assert_eq!(second.len(), first.len());
    assert!(second
        .iter()
        .all(|o| matches!(o, SourceOutcome::Duplicate { .. })));
    let after = counts(&catalog.snapshot());
    assert_eq!(before.facts, after.facts);
    assert_eq!(before.members, after.members);
    assert_eq!((before.documents, before.links), (after.documents, after.links));

    let lab = m.sources.iter().find(|s| s.name == "lab-a").unwrap();
    assert!(matches!(
        etl::load_facts(&catalog, lab, &rules),
        Err(EtlError::DuplicateBatch { .. })
    ));
}

#[test]
fn conformed_members_unify_across_datamarts() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    // Facts only: members come from the biological and biometrical sources.
    for name in ["lab-a", "lab-b", "biometrical"] {
        let src = m.sources.iter().find(|s| s.name == name).unwrap();
        etl::load_facts(&catalog, src, &rules).unwrap();
    }
    let snap = catalog.snapshot();
    let src = fixtures().join("sources");
    let oracle = Oracle::new();

    let mut patients = BTreeSet::new();
    let mut times = BTreeSet::new();
    let providers: BTreeSet<&str> = ["LAB-A", "LAB-B", "TRAINING-CENTER"].into();
    for r in table(&src.join("lab-a.csv"), ';') {
        patients.insert(r[0].clone());
        let (d, mo, y) = (&r[1][..2], &r[1][3..5], &r[1][6..]);
        times.insert((format!("{y}-{mo}-{d}"), "unspecified".to_string()));
    }
    for r in table(&src.join("lab-b.csv"), ',') {
        if oracle.code(&r[2]).is_none() {
            continue;
        }
        patients.insert(r[0].clone());
        times.insert((r[1][..10].to_string(), "unspecified".to_string()));
    }
    for r in table(&src.join("biometrical.csv"), ',') {
        patients.insert(r[0].clone());
        let session = match r[2].as_str() {
            "before" | "pre" | "am" => "before-training",
            "after" | "post" | "pm" => "after-training",
            other => panic!("fixture session {other}"),
        };
        times.insert((r[1].clone(), session.to_string()));
    }
    assert_eq!(snap.dimension("patient").unwrap().len(), patients.len());
    assert_eq!(snap.dimension("data-provider").unwrap().len(), providers.len());
    assert_eq!(snap.dimension("time").unwrap().len(), times.len());
    for (date, session) in &times {
        assert!(snap.dimension("time").unwrap().lookup(&[date, session]).is_some());
    }
}

#[test]
fn documents_are_shared_between_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    let reports = loaded(&run_manifest(&catalog, &m, &rules).unwrap());
    let docs = &reports["cardio-documents"];
    assert_eq!((docs.accepted, docs.documents_created, docs.links_created), (3, 2, 3));

    let snap = catalog.snapshot();
    let r1 = snap.fact_row("cardio-report", 1).unwrap().unwrap();
    assert_eq!(member_text(&snap, "patient", r1.keys[0], "code"), "P001");
    let d_r1: BTreeSet<u64> = snap.documents_for("cardio-report", 1).into_iter().collect();
    let d_r2: BTreeSet<u64> = snap.documents_for("cardio-report", 2).into_iter().collect();
    assert_eq!(d_r1.len(), 2);
    assert_eq!(d_r2.len(), 1);
    assert!(d_r2.is_subset(&d_r1));

    // Same payload again: same id, no new link.
    let (doc, bytes) = snap.read_document(*d_r2.iter().next().unwrap()).unwrap();
    let again = load_document(&catalog, bytes, &doc.media_type, BTreeMap::new()).unwrap();
    assert_eq!(again, doc.id);
    assert!(!link_document(&catalog, "cardio-report", 2, doc.id).unwrap());
    assert!(link_document(&catalog, "cardio-report", 2, 99).is_err());
    assert!(matches!(
        load_document(&catalog, Vec::new(), "text/plain", BTreeMap::new()),
        Err(EtlError::EmptyPayload)
    ));
}

#[test]
fn type_one_updates_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    let patients = m.sources.iter().find(|s| s.name == "patient").unwrap();
    etl::load_source(&catalog, patients, &rules).unwrap();

    let changed = dir.path().join("patients-2.csv");
    std::fs::write(&changed, "code,sport\nP001,triathlon\nP005,fencing\n").unwrap();
    let mut src = patients.clone();
    src.path = changed;
    src.uri = "patients-2.csv".into();
    src.columns
        .attributes
        .retain(|b| matches!(b.attribute.as_str(), "code" | "sport"));
    let report = etl::load_source(&catalog, &src, &rules).unwrap();
    assert_eq!(report.members_created["patient"], 1);
    assert_eq!(report.members_updated["patient"], 1);

    let snap = catalog.snapshot();
    let key = snap.dimension("patient").unwrap().lookup(&["P001"]).unwrap();
    assert_eq!(key, 1);
    assert_eq!(member_text(&snap, "patient", key, "sport"), "triathlon");
    // Attributes absent from the second source keep their values.
    assert_eq!(member_text(&snap, "patient", key, "sex"), "M");
}

#[test]
fn empty_source_loads_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "").unwrap();
    let mut src = m.sources.iter().find(|s| s.name == "lab-b").unwrap().clone();
    src.path = path;
    src.uri = "empty.csv".into();
    let report = etl::load_facts(&catalog, &src, &rules).unwrap();
    assert_eq!((report.accepted, report.rejected.len()), (0, 0));
}

#[test]
fn unmapped_columns_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, m, rules) = prepared(dir.path());
    let mut src: SourceDescriptor = m.sources.iter().find(|s| s.name == "lab-b").unwrap().clone();
    src.columns.attributes.clear();
    assert!(matches!(
        etl::load_facts(&catalog, &src, &rules),
        Err(EtlError::Config { .. })
    ));
}

fn row_strategy() -> impl Strategy<Value = (usize, usize, String, usize)> {
    (0usize..4, 0usize..5, "[0-9]{1,3}(\\.[0-9]{1,2})?|x", 0usize..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// accepted + rejected always equals the records read, and the accepted
    /// rows are exactly those the oracle can convert.
    #[test]
    fn load_conserves_records(rows in prop::collection::vec(row_strategy(), 0..30)) {
        let labels = ["HGB", "Ferritine", "Unknown thing", "Hemoglobin"];
        let units = ["g/L", "g/dL", "ng/mL", "ug/L", "furlong"];
        let patients = ["P001", "P002", "", "P003"];
        let dir = tempfile::tempdir().unwrap();
        let (catalog, m, rules) = prepared(dir.path());
        let mut text = String::from("patient,sampled_at,test,result,units\n");
        let oracle = Oracle::new();
        let mut expected = 0u64;
        for (l, u, v, p) in &rows {
            text.push_str(&format!("{},2024-05-01,{},{},{}\n", patients[*p], labels[*l], v, units[*u]));
            if !patients[*p].is_empty() && oracle.convert(labels[*l], v, units[*u]).is_some() {
                expected += 1;
            }
        }
        let path = dir.path().join("gen.csv");
        std::fs::write(&path, &text).unwrap();
        let mut src = m.sources.iter().find(|s| s.name == "lab-b").unwrap().clone();
        src.path = path;
        src.uri = "gen.csv".into();
        let report = etl::load_facts(&catalog, &src, &rules).unwrap();
        prop_assert_eq!(report.records_read(), rows.len() as u64);
        prop_assert_eq!(report.accepted, expected);
        prop_assert_eq!(catalog.snapshot().fact_rows("biological").unwrap().len() as u64, expected);
    }
}
