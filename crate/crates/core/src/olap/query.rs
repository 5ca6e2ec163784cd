//! Cube query documents as exchanged over the wire.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRef {
    pub dimension: String,
    pub level: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Avg,
    Min,
    Max,
    Count,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [
        Aggregate::Sum,
        Aggregate::Avg,
        Aggregate::Min,
        Aggregate::Max,
        Aggregate::Count,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Aggregate::Sum => "sum",
            Aggregate::Avg => "avg",
            Aggregate::Min => "min",
            Aggregate::Max => "max",
            Aggregate::Count => "count",
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub measure: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=", alias = "≠")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "in")]
    In,
}

impl Comparison {
    pub const ALL: [Comparison; 7] = [
        Comparison::Eq,
        Comparison::Ne,
        Comparison::Lt,
        Comparison::Le,
        Comparison::Gt,
        Comparison::Ge,
        Comparison::In,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Eq => "=",
            Comparison::Ne => "!=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::In => "in",
        }
    }
}

/// A literal for a level: a scalar for single-attribute levels, an array with
/// one entry per bound attribute otherwise, or a list of those for `in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Scalar(Value),
    List(Vec<Literal>),
}

impl From<Value> for Literal {
    fn from(v: Value) -> Self {
        Literal::Scalar(v)
    }
}

impl From<&str> for Literal {
    fn from(v: &str) -> Self {
        Literal::Scalar(Value::Text(v.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub dimension: String,
    pub level: String,
    pub op: Comparison,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeQuery {
    pub fact: String,
    #[serde(default)]
    pub group_by: Vec<LevelRef>,
    #[serde(default)]
    pub measures: Vec<MeasureSpec>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub flag_normality: bool,
}

impl CubeQuery {
    pub fn new(fact: &str) -> Self {
        Self {
            fact: fact.to_string(),
            group_by: Vec::new(),
            measures: Vec::new(),
            filters: Vec::new(),
            flag_normality: false,
        }
    }

    pub fn group(mut self, dimension: &str, level: &str) -> Self {
        self.group_by.push(LevelRef {
            dimension: dimension.to_string(),
            level: level.to_string(),
        });
        self
    }

    pub fn measure(mut self, measure: &str, aggregate: Aggregate) -> Self {
        self.measures.push(MeasureSpec {
            measure: measure.to_string(),
            aggregate,
        });
        self
    }

    pub fn filter(mut self, dimension: &str, level: &str, op: Comparison, value: impl Into<Literal>) -> Self {
        self.filters.push(Filter {
            dimension: dimension.to_string(),
            level: level.to_string(),
            op,
            value: value.into(),
        });
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_json_layout() {
        let json = r#"{
            "fact": "biological",
            "group_by": [{"dimension": "time", "level": "month"}],
            "measures": [{"measure": "value", "aggregate": "avg"}],
            "filters": [
                {"dimension": "patient", "level": "patient", "op": "in", "value": ["P001", "P002"]},
                {"dimension": "time", "level": "year", "op": "≥", "value": 2024}
            ]
        }"#;
        let q: CubeQuery = serde_json::from_str(json).unwrap();
        assert_eq!(q.filters[1].op, Comparison::Ge);
        assert!(!q.flag_normality);
        assert_eq!(
            q.filters[0].value,
            Literal::List(vec!["P001".into(), "P002".into()])
        );
        let back: CubeQuery = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
    }
}
