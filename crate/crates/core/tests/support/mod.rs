//! Shared test support: a seeded synthetic catalog, a random cube-query
//! generator and a naive full-scan oracle that shares no code with the engine.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use tempfile::TempDir;
use warebus::dsl::{parse_schema, SourceText};
use warebus::mapping::ReferenceInterval;
use warebus::model::{Aggregability, FactTable, GrainEntry, Measure, Schema, ValueKind};
use warebus::olap::{
    roll_up, Aggregate, Comparison, CubeQuery, CubeResult, Filter, LevelRef, Literal, MeasureSpec,
};
use warebus::store::{open_catalog, BatchId, Catalog, OpenMode, Snapshot, WriteTxn};
use warebus::Value;

pub const PATIENTS: usize = 10;
pub const DAYS: usize = 90;
pub const SESSIONS: [&str; 2] = ["before-training", "after-training"];

pub fn fixtures() -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    if here.join("fixtures").is_dir() {
        here.join("fixtures")
    } else {
        here.join("../core/fixtures")
    }
}

pub fn medical_schema() -> Schema {
    parse_schema(&SourceText::read(&fixtures().join("medical.dws")).unwrap()).unwrap()
}

/// The fixture schema extended with an integer-valued datamart.
pub fn extended_schema() -> Schema {
    let psychology = FactTable {
        name: "psychology".into(),
        grain: vec![
            GrainEntry {
                dimension: "patient".into(),
                level: "patient".into(),
            },
            GrainEntry {
                dimension: "time".into(),
                level: "session".into(),
            },
        ],
        measures: vec![
            Measure::new("score", ValueKind::Integer),
            Measure {
                name: "comment".into(),
                kind: ValueKind::Text,
                aggregability: Aggregability::NonAdditive,
            },
        ],
    };
    medical_schema().add_fact_table(psychology, vec![]).unwrap()
}

pub struct Seeded {
    pub dir: TempDir,
    pub catalog: Catalog,
}

fn text(s: &str) -> Value {
    Value::Text(s.to_string())
}

fn member(tx: &mut WriteTxn<'_>, schema: &Schema, dim: &str, pairs: &[(&str, Value)]) -> u64 {
    let d = schema.dimension(dim).unwrap();
    let values: Vec<Value> = d
        .attributes
        .iter()
        .map(|a| {
            pairs
                .iter()
                .find(|(n, _)| *n == a.name)
                .map_or(Value::Null, |(_, v)| v.clone())
        })
        .collect();
    let natural: Vec<Value> = d
        .natural_key
        .iter()
        .map(|k| values[d.attribute_index(k).unwrap()].clone())
        .collect();
    if let Some(k) = tx.lookup_member(dim, &natural) {
        return k;
    }
    tx.insert_member(dim, values).unwrap()
}

fn time_member(tx: &mut WriteTxn<'_>, schema: &Schema, date: NaiveDate, session: &str) -> u64 {
    member(
        tx,
        schema,
        "time",
        &[
            ("date", Value::Date(date)),
            ("session", text(session)),
            ("month", text(&date.format("%Y-%m").to_string())),
            ("year", Value::Integer(i64::from(chrono::Datelike::year(&date)))),
        ],
    )
}

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 12, 1).unwrap()
}

/// Ten patients followed for ninety days, measured before and after each
/// training session, plus periodic lab work and a questionnaire score.
pub fn seeded_catalog(seed: u64) -> Seeded {
    let dir = tempfile::tempdir().unwrap();
    let catalog = open_catalog(dir.path(), OpenMode::ReadWrite).unwrap();
    let schema = extended_schema();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut tx = catalog.begin().unwrap();
    tx.set_schema(schema.clone()).unwrap();
    tx.set_intervals(vec![
        ReferenceInterval::new("hemoglobin", 120.0, 175.0),
        ReferenceInterval::new("hemoglobin", 130.0, 175.0).when("sex = M"),
        ReferenceInterval::new("ferritin", 30.0, 300.0),
        ReferenceInterval::new("pulse-rate", 40.0, 90.0),
    ]);

    let sports = ["rowing", "cycling", "running"];
    let bands = ["18-25", "26-35"];
    let patients: Vec<u64> = (0..PATIENTS)
        .map(|i| {
            let mut attrs = vec![
                ("code", text(&format!("P{:02}", i + 1))),
                ("birth-year", Value::Integer(1990 + i as i64)),
                ("sex", text(if i % 2 == 0 { "F" } else { "M" })),
                ("age-band", text(bands[i % 2])),
            ];
            // One patient without a recorded sport exercises null headers.
            if i != 7 {
                attrs.push(("sport", text(sports[i % 3])));
            }
            member(&mut tx, &schema, "patient", &attrs)
        })
        .collect();
    let provider = |tx: &mut WriteTxn<'_>, code: &str, kind: &str| {
        member(tx, &schema, "data-provider", &[("code", text(code)), ("name", text(code)), ("kind", text(kind))])
    };
    let training = provider(&mut tx, "TRAINING-CENTER", "training");
    let labs = [provider(&mut tx, "LAB-A", "laboratory"), provider(&mut tx, "LAB-B", "laboratory")];
    let analysis = |tx: &mut WriteTxn<'_>, code: &str, unit: &str, exam: Option<&str>, cat: Option<&str>| {
        let mut attrs = vec![("code", text(code)), ("label", text(code)), ("unit", text(unit))];
        if let (Some(e), Some(c)) = (exam, cat) {
            attrs.push(("examination", text(e)));
            attrs.push(("category", text(c)));
        }
        member(tx, &schema, "medical-analysis", &attrs)
    };
    let weight = analysis(&mut tx, "weight", "kg", None, None);
    let pulse = analysis(&mut tx, "pulse-rate", "bpm", None, None);
    let biology = [
        (analysis(&mut tx, "hemoglobin", "g/L", Some("blood-count"), Some("hematology")), 140.0, 15.0),
        (analysis(&mut tx, "ferritin", "ug/L", Some("iron-status"), Some("hematology")), 90.0, 40.0),
        (analysis(&mut tx, "glucose", "mmol/L", Some("metabolic"), Some("biochemistry")), 5.0, 0.8),
    ];

    let bio_batch = BatchId::derive("synthetic:biometrical", &seed.to_le_bytes(), "biometrical");
    let lab_batch = BatchId::derive("synthetic:biological", &seed.to_le_bytes(), "biological");
    let psy_batch = BatchId::derive("synthetic:psychology", &seed.to_le_bytes(), "psychology");
    let comments = ["calm", "tired", "focused"];
    for day in 0..DAYS {
        let date = start_date() + Duration::days(day as i64);
        for (p, &patient) in patients.iter().enumerate() {
            for session in SESSIONS {
                let t = time_member(&mut tx, &schema, date, session);
                let kg = 55.0 + 2.5 * p as f64 + rng.gen_range(-1.5..1.5);
                let bpm = rng.gen_range(38.0..110.0);
                for (a, v) in [(weight, kg), (pulse, bpm)] {
                    tx.append_fact("biometrical", bio_batch, vec![patient, training, t, a], vec![Value::Decimal(v)])
                        .unwrap();
                }
                let comment = if rng.gen_bool(0.2) {
                    Value::Null
                } else {
                    text(comments.choose(&mut rng).unwrap())
                };
                tx.append_fact(
                    "psychology",
                    psy_batch,
                    vec![patient, t],
                    vec![Value::Integer(rng.gen_range(-20..=100)), comment],
                )
                .unwrap();
            }
            if day % 10 == p % 10 {
                let t = time_member(&mut tx, &schema, date, "unspecified");
                let lab = labs[(day / 10) % 2];
                for (a, mean, spread) in biology {
                    let v = mean + rng.gen_range(-spread..spread);
                    tx.append_fact("biological", lab_batch, vec![patient, lab, t, a], vec![Value::Decimal(v)])
                        .unwrap();
                }
            }
        }
    }
    tx.commit(None).unwrap();
    Seeded { dir, catalog }
}

/// Every attribute of each grain member of a fact row, by dimension.
pub struct RowView {
    pub dims: BTreeMap<String, BTreeMap<String, Value>>,
    pub measures: Vec<Value>,
}

pub fn row_views(snap: &Snapshot, fact: &str) -> Vec<RowView> {
    let schema = snap.schema().unwrap();
    let table = schema.fact_table(fact).unwrap();
    snap.fact_rows(fact)
        .unwrap()
        .iter()
        .map(|row| {
            let mut dims = BTreeMap::new();
            for (g, key) in table.grain.iter().zip(&row.keys) {
                let dim = schema.dimension(&g.dimension).unwrap();
                let m = snap.dimension(&g.dimension).unwrap().member(*key).unwrap();
                let attrs = dim
                    .attributes
                    .iter()
                    .zip(&m.values)
                    .map(|(a, v)| (a.name.clone(), v.clone()))
                    .collect();
                dims.insert(g.dimension.clone(), attrs);
            }
            RowView {
                dims,
                measures: row.measures.clone(),
            }
        })
        .collect()
}

fn level_attrs(schema: &Schema, dim: &str, level: &str) -> Vec<String> {
    schema.dimension(dim).unwrap().level(level).unwrap().bound_attributes
}

fn header(schema: &Schema, row: &RowView, dim: &str, level: &str) -> Vec<Value> {
    level_attrs(schema, dim, level)
        .iter()
        .map(|a| row.dims[dim][a].clone())
        .collect()
}

/// Distinct tuples of a level among a dimension's members.
fn level_tuples(snap: &Snapshot, dim: &str, level: &str) -> Vec<Vec<Value>> {
    let schema = snap.schema().unwrap();
    let d = schema.dimension(dim).unwrap();
    let idx: Vec<usize> = level_attrs(schema, dim, level)
        .iter()
        .map(|a| d.attribute_index(a).unwrap())
        .collect();
    let mut out: Vec<Vec<Value>> = snap
        .dimension(dim)
        .unwrap()
        .iter()
        .map(|m| idx.iter().map(|&i| m.values[i].clone()).collect())
        .collect();
    out.sort();
    out.dedup();
    out
}

fn literal_of(tuple: &[Value]) -> Literal {
    if tuple.len() == 1 {
        Literal::Scalar(tuple[0].clone())
    } else {
        Literal::List(tuple.iter().cloned().map(Literal::Scalar).collect())
    }
}

pub const FACTS: [&str; 3] = ["biometrical", "biological", "psychology"];

pub fn random_query(rng: &mut StdRng, snap: &Snapshot) -> CubeQuery {
    let schema = snap.schema().unwrap();
    let fact = schema.fact_table(FACTS.choose(rng).unwrap()).unwrap();
    let dims: Vec<&str> = fact.grain.iter().map(|g| g.dimension.as_str()).collect();
    let level_of = |rng: &mut StdRng, dim: &str| -> String {
        let levels = schema.navigable_levels(&fact.name, dim).unwrap();
        levels.choose(rng).unwrap().name.clone()
    };

    let mut q = CubeQuery::new(&fact.name);
    let ngroups = rng.gen_range(0..=2.min(dims.len()));
    for dim in dims.choose_multiple(rng, ngroups) {
        let level = level_of(rng, dim);
        q.group_by.push(LevelRef {
            dimension: dim.to_string(),
            level,
        });
    }
    for _ in 0..rng.gen_range(1..=3) {
        let m = fact.measures.choose(rng).unwrap();
        let allowed: Vec<Aggregate> = Aggregate::ALL
            .into_iter()
            .filter(|a| m.kind.is_numeric() || !matches!(a, Aggregate::Sum | Aggregate::Avg))
            .collect();
        q.measures.push(MeasureSpec {
            measure: m.name.clone(),
            aggregate: *allowed.choose(rng).unwrap(),
        });
    }
    for _ in 0..rng.gen_range(0..=2) {
        let dim = dims.choose(rng).unwrap();
        let level = level_of(rng, dim);
        let tuples = level_tuples(snap, dim, &level);
        let op = *Comparison::ALL.choose(rng).unwrap();
        let value = if op == Comparison::In {
            let n = rng.gen_range(1..=3.min(tuples.len()));
            Literal::List(tuples.choose_multiple(rng, n).map(|t| literal_of(t)).collect())
        } else {
            literal_of(tuples.choose(rng).unwrap())
        };
        q.filters.push(Filter {
            dimension: dim.to_string(),
            level,
            op,
            value,
        });
    }
    q
}

fn coerce_tuple(schema: &Schema, dim: &str, level: &str, lit: &Literal) -> Vec<Value> {
    let d = schema.dimension(dim).unwrap();
    let scalars: Vec<Value> = match lit {
        Literal::Scalar(v) => vec![v.clone()],
        Literal::List(items) => items
            .iter()
            .map(|i| match i {
                Literal::Scalar(v) => v.clone(),
                Literal::List(_) => panic!("nested literal"),
            })
            .collect(),
    };
    level_attrs(schema, dim, level)
        .iter()
        .zip(scalars)
        .map(|(a, v)| v.coerce(d.attribute(a).unwrap().kind).unwrap())
        .collect()
}

fn keep(schema: &Schema, row: &RowView, f: &Filter) -> bool {
    let h = header(schema, row, &f.dimension, &f.level);
    if f.op == Comparison::In {
        let Literal::List(items) = &f.value else { panic!("in needs a list") };
        return items
            .iter()
            .any(|i| coerce_tuple(schema, &f.dimension, &f.level, i) == h);
    }
    let t = coerce_tuple(schema, &f.dimension, &f.level, &f.value);
    match f.op {
        Comparison::Eq => h == t,
        Comparison::Ne => h != t,
        Comparison::Lt => h < t,
        Comparison::Le => h <= t,
        Comparison::Gt => h > t,
        Comparison::Ge => h >= t,
        Comparison::In => unreachable!(),
    }
}

fn aggregate(kind: ValueKind, agg: Aggregate, values: &[Value]) -> Value {
    let present: Vec<&Value> = values.iter().filter(|v| !v.is_null()).collect();
    match agg {
        Aggregate::Count => return Value::Integer(values.len() as i64),
        _ if present.is_empty() => return Value::Null,
        _ => {}
    }
    let int_total = || -> i128 {
        present
            .iter()
            .map(|v| match v {
                Value::Integer(i) => i128::from(*i),
                _ => unreachable!(),
            })
            .sum()
    };
    let dec_total = || -> f64 { present.iter().map(|v| v.as_f64().unwrap()).sum() };
    match agg {
        Aggregate::Sum if kind == ValueKind::Integer => Value::Integer(int_total() as i64),
        Aggregate::Sum => Value::Decimal(dec_total()),
        Aggregate::Avg if kind == ValueKind::Integer => Value::Decimal(int_total() as f64 / present.len() as f64),
        Aggregate::Avg => Value::Decimal(dec_total() / present.len() as f64),
        Aggregate::Min => (*present.iter().min().unwrap()).clone(),
        Aggregate::Max => (*present.iter().max().unwrap()).clone(),
        Aggregate::Count => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cells: Vec<(Vec<Vec<Value>>, u64, Vec<Value>)>,
    pub totals: Vec<Value>,
    pub total_rows: u64,
}

/// Filters, groups and aggregates by scanning every row with plain loops.
pub fn oracle(snap: &Snapshot, q: &CubeQuery) -> OracleResult {
    let schema = snap.schema().unwrap();
    let fact = schema.fact_table(&q.fact).unwrap();
    let rows: Vec<RowView> = row_views(snap, &q.fact)
        .into_iter()
        .filter(|r| q.filters.iter().all(|f| keep(schema, r, f)))
        .collect();
    let mut groups: Vec<(Vec<Vec<Value>>, Vec<&RowView>)> = Vec::new();
    for r in &rows {
        let key: Vec<Vec<Value>> = q
            .group_by
            .iter()
            .map(|g| header(schema, r, &g.dimension, &g.level))
            .collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    let agg = |members: &[&RowView]| -> Vec<Value> {
        q.measures
            .iter()
            .map(|m| {
                let idx = fact.measures.iter().position(|x| x.name == m.measure).unwrap();
                let values: Vec<Value> = members.iter().map(|r| r.measures[idx].clone()).collect();
                aggregate(fact.measures[idx].kind, m.aggregate, &values)
            })
            .collect()
    };
    let all: Vec<&RowView> = rows.iter().collect();
    OracleResult {
        cells: groups
            .iter()
            .map(|(k, members)| (k.clone(), members.len() as u64, agg(members)))
            .collect(),
        totals: agg(&all),
        total_rows: rows.len() as u64,
    }
}

pub fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Decimal(x), Value::Decimal(y)) => {
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
        }
        (Value::Integer(x), Value::Integer(y)) => x == y,
        _ => a == b && a.kind() == b.kind(),
    }
}

fn same_values(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(x, y))
}

/// Compares an engine result with the oracle: same cells in the same order,
/// count/min/max/integer sums exact, decimal sums and averages within 1e-9
/// relative.
pub fn compare(result: &CubeResult, expected: &OracleResult) -> Result<(), String> {
    if result.total_rows != expected.total_rows {
        return Err(format!("total rows {} != {}", result.total_rows, expected.total_rows));
    }
    if !same_values(&result.totals, &expected.totals) {
        return Err(format!("totals {:?} != {:?}", result.totals, expected.totals));
    }
    if result.cells.len() != expected.cells.len() {
        return Err(format!("{} cells != {}", result.cells.len(), expected.cells.len()));
    }
    for (cell, (key, rows, values)) in result.cells.iter().zip(&expected.cells) {
        let got = result.headers(cell);
        if got != *key || cell.rows != *rows || !same_values(&cell.values, values) {
            return Err(format!(
                "cell {got:?} ({} rows) {:?} != {key:?} ({rows} rows) {values:?}",
                cell.rows, cell.values
            ));
        }
    }
    Ok(())
}

fn combine(agg: Aggregate, acc: &mut (Value, u64), v: &Value, rows: u64) {
    let (cur, n) = acc;
    *cur = match (agg, &*cur, v) {
        (_, _, Value::Null) => cur.clone(),
        (_, Value::Null, _) => v.clone(),
        (Aggregate::Count, Value::Integer(a), Value::Integer(b)) => Value::Integer(a + b),
        (Aggregate::Sum, Value::Integer(a), Value::Integer(b)) => Value::Integer(a + b),
        (Aggregate::Sum, a, b) => Value::Decimal(a.as_f64().unwrap() + b.as_f64().unwrap()),
        // Weighted by row counts; the seeded numeric measures have no nulls.
        (Aggregate::Avg, a, b) => {
            Value::Decimal((a.as_f64().unwrap() * *n as f64 + b.as_f64().unwrap() * rows as f64) / (*n + rows) as f64)
        }
        (Aggregate::Min, a, b) => a.clone().min(b.clone()),
        (Aggregate::Max, a, b) => a.clone().max(b.clone()),
        _ => unreachable!(),
    };
    *n += rows;
}

/// For every grouped dimension that can roll up, re-aggregates the fine
/// result along the member hierarchy and compares it with the coarse result.
/// Returns how many roll-ups were checked; pairs whose fine level does not
/// determine the coarse one are skipped.
pub fn check_roll_up(snap: &Snapshot, q: &CubeQuery) -> Result<usize, String> {
    let schema = snap.schema().unwrap();
    let fine = warebus::olap::execute(snap, q).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (i, g) in q.group_by.iter().enumerate() {
        let Ok(coarse_q) = roll_up(schema, q, &g.dimension) else { continue };
        let coarse_level = &coarse_q.group_by[i].level;
        let d = schema.dimension(&g.dimension).unwrap();
        let pick = |level: &str, values: &[Value]| -> Vec<Value> {
            level_attrs(schema, &g.dimension, level)
                .iter()
                .map(|a| values[d.attribute_index(a).unwrap()].clone())
                .collect::<Vec<_>>()
        };
        let mut parent: BTreeMap<Vec<Value>, Vec<Value>> = BTreeMap::new();
        let mut functional = true;
        for m in snap.dimension(&g.dimension).unwrap().iter() {
            let f = pick(&g.level, &m.values);
            let c = pick(coarse_level, &m.values);
            if parent.insert(f, c.clone()).is_some_and(|prev| prev != c) {
                functional = false;
            }
        }
        if !functional {
            continue;
        }
        let mut rolled: BTreeMap<Vec<Vec<Value>>, (u64, Vec<(Value, u64)>)> = BTreeMap::new();
        for cell in &fine.cells {
            let mut key = fine.headers(cell);
            key[i] = parent[&key[i]].clone();
            let entry = rolled
                .entry(key)
                .or_insert_with(|| (0, vec![(Value::Null, 0); q.measures.len()]));
            entry.0 += cell.rows;
            for ((acc, v), spec) in entry.1.iter_mut().zip(&cell.values).zip(&q.measures) {
                combine(spec.aggregate, acc, v, cell.rows);
            }
        }
        let coarse = warebus::olap::execute(snap, &coarse_q).map_err(|e| e.to_string())?;
        if coarse.cells.len() != rolled.len() {
            return Err(format!("roll-up of {}: {} cells != {}", g.dimension, coarse.cells.len(), rolled.len()));
        }
        for (cell, (key, (rows, accs))) in coarse.cells.iter().zip(&rolled) {
            let values: Vec<Value> = accs.iter().map(|(v, _)| v.clone()).collect();
            if coarse.headers(cell) != *key || cell.rows != *rows || !same_values(&cell.values, &values) {
                return Err(format!(
                    "roll-up of {} at {:?}: {:?} != {:?}",
                    g.dimension,
                    key,
                    cell.values,
                    values
                ));
            }
        }
        checked += 1;
    }
    Ok(checked)
}

/// Seeded RNG shared by the suites so failures reproduce.
pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
