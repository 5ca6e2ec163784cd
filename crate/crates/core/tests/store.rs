mod support;

use warebus::etl::{load_rules, load_source, prepare_catalog, EtlError, SourcesManifest};
use warebus::store::{open_catalog, FaultPoint, OpenMode, Snapshot, StoreError};

use support::{fixtures, medical_schema};

fn counts(snap: &Snapshot) -> Vec<usize> {
    let schema = snap.schema().unwrap();
    schema
        .fact_tables
        .iter()
        .map(|f| snap.fact_rows(&f.name).unwrap().len())
        .chain(schema.dimensions.iter().map(|d| snap.dimension(&d.name).unwrap().len()))
        .collect()
}

#[test]
fn interrupted_load_leaves_the_prior_snapshot() {
    let manifest = SourcesManifest::read(&fixtures().join("sources/sources.manifest")).unwrap();
    let (rules, intervals) = load_rules(&manifest).unwrap();
    let source = |name: &str| manifest.sources.iter().find(|s| s.name == name).unwrap();
    for point in [FaultPoint::AfterSegments, FaultPoint::BeforeManifestRename] {
        let dir = tempfile::tempdir().unwrap();
        let before = {
            let catalog = open_catalog(dir.path(), OpenMode::ReadWrite).unwrap();
            prepare_catalog(&catalog, &medical_schema(), Some(intervals.clone())).unwrap();
            for name in ["patient", "data-provider", "lab-a"] {
                load_source(&catalog, source(name), &rules).unwrap();
            }
            let before = counts(&catalog.snapshot());
            catalog.inject_fault(point);
            let err = load_source(&catalog, source("lab-b"), &rules).unwrap_err();
            assert!(matches!(err, EtlError::Store(StoreError::InjectedFault(_))), "{err}");
            before
        };
        let catalog = open_catalog(dir.path(), OpenMode::ReadWrite).unwrap();
        assert_eq!(counts(&catalog.snapshot()), before);
        // The batch was never recorded, so it loads normally afterwards.
        let report = load_source(&catalog, source("lab-b"), &rules).unwrap();
        assert!(report.accepted > 0);
    }
}
