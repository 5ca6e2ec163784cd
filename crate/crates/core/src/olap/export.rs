//! Attribute-value export: one flat row per fact, pairing a dimension
//! attribute with the fact's measures.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{fact_of, FilterPlan, OlapError};
use crate::store::Snapshot;
use crate::value::Value;

use super::query::Filter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub fact: String,
    pub dimension: String,
    pub attribute: String,
    /// Measures to include; empty means all of the fact's measures.
    #[serde(default)]
    pub measures: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Filter>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeValueView {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl AttributeValueView {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OlapError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| OlapError::Export(e.to_string());
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render)).map_err(err)?;
        }
        w.flush().map_err(|e| OlapError::Export(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String, OlapError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| OlapError::Export(e.to_string()))
    }
}

/// Rows come out in storage order, i.e. load order.
pub fn export_attribute_value(snap: &Snapshot, sel: &Selection) -> Result<AttributeValueView, OlapError> {
    let schema = snap.require_schema()?;
    let fact = fact_of(schema, &sel.fact)?;
    let grain = fact
        .grain_index(&sel.dimension)
        .ok_or_else(|| OlapError::UnknownDimension {
            fact: fact.name.clone(),
            dimension: sel.dimension.clone(),
        })?;
    let dim = schema.dimension(&sel.dimension).expect("valid schema");
    let attr = dim
        .attribute_index(&sel.attribute)
        .ok_or_else(|| OlapError::UnknownAttribute {
            dimension: sel.dimension.clone(),
            attribute: sel.attribute.clone(),
        })?;
    let measures: Vec<(usize, String)> = if sel.measures.is_empty() {
        fact.measures.iter().enumerate().map(|(i, m)| (i, m.name.clone())).collect()
    } else {
        sel.measures
            .iter()
            .map(|m| {
                fact.measure_index(m)
                    .map(|i| (i, m.clone()))
                    .ok_or_else(|| OlapError::UnknownMeasure(m.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    let filters: Vec<FilterPlan> = sel
        .filters
        .iter()
        .map(|f| FilterPlan::resolve(schema, fact, f))
        .collect::<Result<_, _>>()?;

    let members = snap.dimension(&sel.dimension)?;
    let mut header = vec![format!("{}.{}", sel.dimension, sel.attribute)];
    header.extend(measures.iter().map(|(_, n)| n.clone()));
    let mut rows = Vec::new();
    for row in snap.fact_rows(&sel.fact)? {
        if !filters.iter().all(|f| f.matches(snap, row)) {
            continue;
        }
        let mut out = Vec::with_capacity(header.len());
        out.push(
            members
                .member(row.keys[grain])
                .map_or(Value::Null, |m| m.values[attr].clone()),
        );
        out.extend(measures.iter().map(|(i, _)| row.measures[*i].clone()));
        rows.push(out);
    }
    Ok(AttributeValueView { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_renders_nulls_empty() {
        let view = AttributeValueView {
            header: vec!["patient.name".into(), "value".into()],
            rows: vec![
                vec![Value::Text("Doe, J".into()), Value::Decimal(1.5)],
                vec![Value::Text("Roe".into()), Value::Null],
            ],
        };
        assert_eq!(view.to_csv().unwrap(), "patient.name,value\n\"Doe, J\",1.5\nRoe,\n");
    }
}
