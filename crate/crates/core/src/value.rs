//! Typed cell values shared by members, fact rows, queries and exports.

use std::cmp::Ordering;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::ValueKind;

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Text(String),
    Integer(i64),
    Decimal(f64),
    Date(NaiveDate),
    Timestamp(NaiveDateTime),
    DocumentRef(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot read `{raw}` as {kind}")]
pub struct ValueError {
    pub raw: String,
    pub kind: ValueKind,
}

const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%d/%m/%Y", "%Y/%m/%d"];
const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%d/%m/%Y %H:%M:%S",
    "%d/%m/%Y %H:%M",
];

pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    DATE_FORMATS
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(raw, f).ok())
}

/// Accepts full timestamps and bare dates (midnight).
pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .or_else(|| parse_date(raw).and_then(|d| d.and_hms_opt(0, 0, 0)))
}

/// Parses a decimal, accepting a single comma as the decimal separator.
pub fn parse_decimal(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let parsed = if raw.contains(',') && !raw.contains('.') && raw.matches(',').count() == 1 {
        raw.replace(',', ".").parse::<f64>().ok()
    } else {
        raw.parse::<f64>().ok()
    };
    parsed.filter(|v| v.is_finite())
}

impl Value {
    pub fn kind(&self) -> Option<ValueKind> {
        Some(match self {
            Value::Null => return None,
            Value::Text(_) => ValueKind::Text,
            Value::Integer(_) => ValueKind::Integer,
            Value::Decimal(_) => ValueKind::Decimal,
            Value::Date(_) => ValueKind::Date,
            Value::Timestamp(_) => ValueKind::Timestamp,
            Value::DocumentRef(_) => ValueKind::DocumentRef,
        })
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Parses source text as `kind`. Empty input reads as null.
    pub fn parse(kind: ValueKind, raw: &str) -> Result<Value, ValueError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Ok(Value::Null);
        }
        let err = || ValueError {
            raw: raw.to_string(),
            kind,
        };
        Ok(match kind {
            ValueKind::Text => Value::Text(trimmed.to_string()),
            ValueKind::Integer => Value::Integer(trimmed.parse().map_err(|_| err())?),
            ValueKind::Decimal => Value::Decimal(parse_decimal(trimmed).ok_or_else(err)?),
            ValueKind::Date => Value::Date(parse_date(trimmed).ok_or_else(err)?),
            ValueKind::Timestamp => Value::Timestamp(parse_timestamp(trimmed).ok_or_else(err)?),
            ValueKind::DocumentRef => Value::DocumentRef(trimmed.parse().map_err(|_| err())?),
        })
    }

    /// Converts a value to `kind` where the conversion is lossless or textual.
    pub fn coerce(&self, kind: ValueKind) -> Result<Value, ValueError> {
        match (self, kind) {
            (Value::Null, _) => Ok(Value::Null),
            (v, k) if v.kind() == Some(k) => Ok(v.clone()),
            (Value::Integer(i), ValueKind::Decimal) => Ok(Value::Decimal(*i as f64)),
            (Value::Decimal(d), ValueKind::Integer) if d.fract() == 0.0 && d.abs() < 9.0e15 => {
                Ok(Value::Integer(*d as i64))
            }
            (Value::Text(s), k) => Value::parse(k, s),
            (v, ValueKind::Text) => Ok(Value::Text(v.render())),
            (v, k) => Err(ValueError {
                raw: v.render(),
                kind: k,
            }),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Plain text form used in exports, headers and natural-key indexes.
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Text(s) => s.clone(),
            Value::Integer(i) => i.to_string(),
            Value::Decimal(d) => d.to_string(),
            Value::Date(d) => d.format("%Y-%m-%d").to_string(),
            Value::Timestamp(t) => t.format("%Y-%m-%dT%H:%M:%S").to_string(),
            Value::DocumentRef(id) => id.to_string(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) | Value::Decimal(_) => 1,
            Value::Text(_) => 2,
            Value::Date(_) => 3,
            Value::Timestamp(_) => 4,
            Value::DocumentRef(_) => 5,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Total order: null first, numbers compared numerically across integer and
/// decimal, then text, dates, timestamps and document references.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        use Value::*;
        match (self, other) {
            (Integer(a), Integer(b)) => a.cmp(b),
            (Decimal(a), Decimal(b)) => a.total_cmp(b),
            (Integer(a), Decimal(b)) => (*a as f64).total_cmp(b).then(Ordering::Less),
            (Decimal(a), Integer(b)) => a.total_cmp(&(*b as f64)).then(Ordering::Greater),
            (Text(a), Text(b)) => a.cmp(b),
            (Date(a), Date(b)) => a.cmp(b),
            (Timestamp(a), Timestamp(b)) => a.cmp(b),
            (DocumentRef(a), DocumentRef(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Text(t) => s.serialize_str(t),
            Value::Integer(i) => s.serialize_i64(*i),
            Value::Decimal(d) => s.serialize_f64(*d),
            Value::DocumentRef(id) => s.serialize_u64(*id),
            Value::Date(_) | Value::Timestamp(_) => s.serialize_str(&self.render()),
        }
    }
}

/// JSON values read back loosely: strings stay text, integral numbers become
/// integers. Callers coerce to the declared kind.
impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a scalar value")
            }
            fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
                Ok(Value::Null)
            }
            fn visit_none<E: de::Error>(self) -> Result<Value, E> {
                Ok(Value::Null)
            }
            fn visit_bool<E: de::Error>(self, b: bool) -> Result<Value, E> {
                Ok(Value::Text(b.to_string()))
            }
            fn visit_i64<E: de::Error>(self, i: i64) -> Result<Value, E> {
                Ok(Value::Integer(i))
            }
            fn visit_u64<E: de::Error>(self, u: u64) -> Result<Value, E> {
                i64::try_from(u)
                    .map(Value::Integer)
                    .map_err(|_| E::custom("integer out of range"))
            }
            fn visit_f64<E: de::Error>(self, f: f64) -> Result<Value, E> {
                Ok(Value::Decimal(f))
            }
            fn visit_str<E: de::Error>(self, s: &str) -> Result<Value, E> {
                Ok(Value::Text(s.to_string()))
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_comma_separator() {
        assert_eq!(parse_decimal("1,25"), Some(1.25));
        assert_eq!(parse_decimal(" 3.5 "), Some(3.5));
        assert_eq!(parse_decimal("1,000.5"), None);
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(parse_decimal("inf"), None);
    }

    #[test]
    fn parse_by_kind() {
        assert_eq!(Value::parse(ValueKind::Integer, "42").unwrap(), Value::Integer(42));
        assert_eq!(Value::parse(ValueKind::Text, "  x ").unwrap(), Value::Text("x".into()));
        assert!(Value::parse(ValueKind::Integer, "4.2").is_err());
        assert!(Value::parse(ValueKind::Date, "2004-13-01").is_err());
        assert_eq!(
            Value::parse(ValueKind::Date, "15/03/2004").unwrap().render(),
            "2004-03-15"
        );
        assert_eq!(
            Value::parse(ValueKind::Timestamp, "2004-03-15 07:30").unwrap().render(),
            "2004-03-15T07:30:00"
        );
        assert!(Value::parse(ValueKind::Decimal, "").unwrap().is_null());
    }

    #[test]
    fn ordering_is_total_and_numeric_across_kinds() {
        let mut v = vec![
            Value::Text("b".into()),
            Value::Decimal(2.5),
            Value::Null,
            Value::Integer(3),
            Value::Integer(2),
            Value::Text("a".into()),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                Value::Null,
                Value::Integer(2),
                Value::Decimal(2.5),
                Value::Integer(3),
                Value::Text("a".into()),
                Value::Text("b".into()),
            ]
        );
        assert_ne!(Value::Integer(2), Value::Decimal(2.0));
    }

    #[test]
    fn json_shape() {
        let json = serde_json::to_string(&vec![
            Value::Null,
            Value::Integer(1),
            Value::Decimal(1.5),
            Value::Text("x".into()),
        ])
        .unwrap();
        assert_eq!(json, r#"[null,1,1.5,"x"]"#);
        let back: Vec<Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[3], Value::Text("x".into()));
    }
}
