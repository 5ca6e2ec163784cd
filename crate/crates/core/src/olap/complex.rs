//! Reassembly of a complex fact: a central row, the satellite rows that share
//! its bus coordinates and the documents bridged to it.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{LevelPlan, OlapError};
use crate::model::{FactTable, Schema};
use crate::store::{Document, FactRow, Snapshot};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssembledRow {
    pub fact: String,
    pub id: u64,
    /// Every attribute of each grain member, by dimension.
    pub dimensions: BTreeMap<String, BTreeMap<String, Value>>,
    pub measures: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assembly {
    pub group: String,
    pub central: AssembledRow,
    pub satellites: Vec<AssembledRow>,
    pub documents: Vec<Document>,
}

fn assemble_row(snap: &Snapshot, schema: &Schema, fact: &FactTable, row: &FactRow) -> AssembledRow {
    let mut dimensions = BTreeMap::new();
    for (entry, key) in fact.grain.iter().zip(&row.keys) {
        let dim = schema.dimension(&entry.dimension).expect("valid schema");
        let member = snap.dimension(&dim.name).ok().and_then(|t| t.member(*key));
        let attrs = dim
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.clone(), member.map_or(Value::Null, |m| m.values[i].clone())))
            .collect();
        dimensions.insert(dim.name.clone(), attrs);
    }
    let measures = fact
        .measures
        .iter()
        .zip(&row.measures)
        .map(|(m, v)| (m.name.clone(), v.clone()))
        .collect();
    AssembledRow {
        fact: fact.name.clone(),
        id: row.id,
        dimensions,
        measures,
    }
}

/// How a satellite row is compared to the central row on one shared dimension.
enum Matcher {
    SameKey { central: usize, satellite: usize },
    Header { central: Box<LevelPlan>, satellite: Box<LevelPlan> },
}

fn matchers(schema: &Schema, central: &FactTable, satellite: &FactTable, shared: &[String]) -> Result<Vec<Matcher>, OlapError> {
    shared
        .iter()
        .map(|d| {
            let ci = central.grain_index(d).expect("shared dimension");
            let si = satellite.grain_index(d).ok_or_else(|| OlapError::UnknownDimension {
                fact: satellite.name.clone(),
                dimension: d.clone(),
            })?;
            let level = &central.grain[ci].level;
            if satellite.grain[si].level == *level {
                Ok(Matcher::SameKey {
                    central: ci,
                    satellite: si,
                })
            } else {
                Ok(Matcher::Header {
                    central: Box::new(LevelPlan::resolve(schema, central, d, level)?),
                    satellite: Box::new(LevelPlan::resolve(schema, satellite, d, level)?),
                })
            }
        })
        .collect()
}

/// Gathers the complex fact whose central row is `id`.
pub fn assemble_complex_fact(snap: &Snapshot, group: &str, id: u64) -> Result<Assembly, OlapError> {
    let schema = snap.require_schema()?;
    let group = schema
        .group(group)
        .ok_or_else(|| OlapError::UnknownGroup(group.to_string()))?;
    let central_fact = schema
        .fact_table(&group.central_fact)
        .ok_or_else(|| OlapError::UnknownFact(group.central_fact.clone()))?;
    let central_row = snap
        .fact_row(&central_fact.name, id)?
        .ok_or_else(|| OlapError::UnknownRow {
            fact: central_fact.name.clone(),
            id,
        })?;
    let shared = schema.group_shared_dimensions(group);

    let mut satellites = Vec::new();
    let mut documents = Vec::new();
    let mut push_docs = |fact: &str, row: u64| {
        for doc in snap.documents_for(fact, row) {
            if !documents.contains(&doc) {
                documents.push(doc);
            }
        }
    };
    if group.document_bridge.fact == central_fact.name {
        push_docs(&central_fact.name, id);
    }
    for name in &group.satellite_facts {
        let fact = schema
            .fact_table(name)
            .ok_or_else(|| OlapError::UnknownFact(name.clone()))?;
        let rules = matchers(schema, central_fact, fact, &shared)?;
        let bridged = group.document_bridge.fact == fact.name;
        for row in snap.fact_rows(name)? {
            let hit = rules.iter().all(|m| match m {
                Matcher::SameKey { central, satellite } => central_row.keys[*central] == row.keys[*satellite],
                Matcher::Header { central, satellite } => {
                    central.header(snap, central_row) == satellite.header(snap, row)
                }
            });
            if hit {
                satellites.push(assemble_row(snap, schema, fact, row));
                if bridged {
                    push_docs(name, row.id);
                }
            }
        }
    }
    let documents = documents
        .into_iter()
        .filter_map(|d| snap.document(d).cloned())
        .collect();
    Ok(Assembly {
        group: group.name.clone(),
        central: assemble_row(snap, schema, central_fact, central_row),
        satellites,
        documents,
    })
}
