use std::path::{Path, PathBuf};

use warebus::olap::{execute, Aggregate, CubeQuery};
use warebus::store::{open_catalog, OpenMode};
use warebus_server::cli::{run_cli, EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_USAGE};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<String> = std::iter::once("warebus").chain(args.iter().copied()).map(String::from).collect();
    let code = run_cli(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn schema_check_reports_by_line() {
    let ok = run(&["schema", "check", path(&fixtures().join("medical.dws"))]);
    assert_eq!(ok.code, EXIT_OK, "{}", ok.err);
    let broken = run(&["schema", "check", path(&fixtures().join("broken.dws"))]);
    assert_eq!(broken.code, EXIT_INVALID);
    assert!(broken.err.contains("broken.dws:10:"), "{}", broken.err);
    let missing = run(&["schema", "check", "/no/such/file.dws"]);
    assert_eq!(missing.code, EXIT_IO);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(run(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(run(&["load", "--catalog", "x"]).code, EXIT_USAGE);
    assert_eq!(run(&["serve", "--catalog", "x", "--port", "0"]).code, EXIT_USAGE);
    assert_eq!(run(&["--help"]).code, EXIT_OK);
}

#[test]
fn load_twice_then_query_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("catalog");
    let schema = fixtures().join("medical.dws");
    let manifest = fixtures().join("sources/sources.manifest");
    let load = ["load", "--schema", path(&schema), "--catalog", path(&catalog), "--manifest", path(&manifest)];

    let first = run(&load);
    assert_eq!(first.code, EXIT_OK, "{}", first.err);
    assert!(first.out.contains("lab-a: "));
    let counts = |dir: &Path| {
        let snap = open_catalog(dir, OpenMode::ReadOnly).unwrap().snapshot();
        ["biological", "biometrical", "cardio-report", "cardio-result"].map(|f| snap.fact_rows(f).unwrap().len())
    };
    let before = counts(&catalog);

    let second = run(&load);
    assert_eq!(second.code, EXIT_OK, "{}", second.err);
    assert!(second.out.contains("duplicate batch"), "{}", second.out);
    assert_eq!(counts(&catalog), before);

    let q = CubeQuery::new("biometrical")
        .group("time", "session")
        .measure("value", Aggregate::Max);
    let query_file = dir.path().join("q.json");
    std::fs::write(&query_file, serde_json::to_string(&q).unwrap()).unwrap();
    let out_file = dir.path().join("result.json");
    let query = run(&["query", "--catalog", path(&catalog), "--query", path(&query_file), "--out", path(&out_file)]);
    assert_eq!(query.code, EXIT_OK, "{}", query.err);
    let written = std::fs::read_to_string(&out_file).unwrap();
    let snap = open_catalog(&catalog, OpenMode::ReadOnly).unwrap().snapshot();
    assert_eq!(written.trim_end(), execute(&snap, &q).unwrap().to_canonical_json());

    std::fs::write(&query_file, r#"{"fact": "nope"}"#).unwrap();
    let bad = run(&["query", "--catalog", path(&catalog), "--query", path(&query_file)]);
    assert_eq!(bad.code, EXIT_INVALID);

    let export = run(&[
        "export-av", "--catalog", path(&catalog), "--fact", "biological", "--dimension", "patient",
        "--attribute", "sport", "--measure", "value",
    ]);
    assert_eq!(export.code, EXIT_OK, "{}", export.err);
    assert_eq!(export.out.lines().count(), before[0] + 1);
    assert!(export.out.starts_with("patient.sport,value\n"));

    let no_catalog = run(&["query", "--catalog", path(&dir.path().join("none")), "--query", path(&query_file)]);
    assert_eq!(no_catalog.code, EXIT_IO);
}
