use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use warebus::dsl::{check_schema, parse_schema, serialize_schema, SourceText};
use warebus::model::FactClass;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn medical_schema_is_valid() {
    let source = SourceText::read(&fixture("medical.dws")).unwrap();
    let (schema, diags) = check_schema(&source);
    assert!(diags.is_empty(), "{diags:?}");
    let schema = schema.unwrap();
    let report = schema.validate();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert!(schema.is_constellation());

    let bus = schema.conformed_dimensions().unwrap();
    let expected: BTreeSet<String> = ["patient", "data-provider", "time", "medical-analysis"]
        .into_iter()
        .map(String::from)
        .collect();
    assert_eq!(bus, expected);

    assert_eq!(schema.classify_fact_table("biometrical").unwrap(), FactClass::Star);
    assert_eq!(schema.classify_fact_table("biological").unwrap(), FactClass::Snowflake);

    let group = schema.group("cardio-vascular").unwrap();
    assert_eq!(
        schema.group_shared_dimensions(group),
        ["patient", "data-provider", "time", "medical-analysis"]
    );
}

#[test]
fn medical_schema_round_trips() {
    let source = SourceText::read(&fixture("medical.dws")).unwrap();
    let schema = parse_schema(&source).unwrap();
    let text = serialize_schema(&schema).unwrap();
    assert_eq!(parse_schema(&SourceText::inline(text)).unwrap(), schema);
}

#[test]
fn broken_schema_points_at_the_dangling_grain() {
    let source = SourceText::read(&fixture("broken.dws")).unwrap();
    let diags = parse_schema(&source).unwrap_err();
    let dangling: Vec<_> = diags
        .iter()
        .filter(|d| d.message.starts_with("dangling reference"))
        .collect();
    assert_eq!(dangling.len(), 1, "{diags:?}");
    assert_eq!(dangling[0].pos.line, 10);
}
