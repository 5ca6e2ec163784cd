//! Harmonization metadata: label synonyms, unit conversions, canonical units,
//! nomenclature codes and reference intervals with normality flagging.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::Dimension;
use crate::value::Value;

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("unmapped label `{0}`")]
    UnmappedLabel(String),
    #[error("no conversion from `{from}` to `{to}` for analysis `{code}`")]
    UnconvertibleUnit {
        from: String,
        to: String,
        code: String,
    },
    #[error("analysis `{0}` has no canonical unit")]
    UnknownAnalysis(String),
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: u64,
        message: String,
    },
    #[error("inconsistent mapping rules: {}", .0.join("; "))]
    Inconsistent(Vec<String>),
}

/// Case-folds and collapses runs of whitespace.
pub fn fold_label(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Affine conversion `value * factor + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conversion {
    pub factor: f64,
    pub offset: f64,
}

impl Conversion {
    pub const IDENTITY: Conversion = Conversion {
        factor: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, value: f64) -> f64 {
        value * self.factor + self.offset
    }

    pub fn inverse(&self) -> Option<Conversion> {
        (self.factor != 0.0).then(|| Conversion {
            factor: 1.0 / self.factor,
            offset: -self.offset / self.factor,
        })
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MappingRules {
    /// Folded raw label to canonical analysis code.
    pub synonyms: BTreeMap<String, String>,
    pub unit_conversions: BTreeMap<(String, String), Conversion>,
    pub canonical_units: BTreeMap<String, String>,
    pub nomenclature: BTreeMap<String, String>,
}

impl MappingRules {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_analysis(mut self, code: &str, unit: &str, nomenclature: Option<&str>) -> Self {
        self.canonical_units.insert(code.to_string(), unit.to_string());
        if let Some(n) = nomenclature {
            self.nomenclature.insert(code.to_string(), n.to_string());
        }
        self
    }

    pub fn with_synonym(mut self, raw: &str, code: &str) -> Self {
        self.synonyms.insert(fold_label(raw), code.to_string());
        self
    }

    pub fn with_conversion(mut self, from: &str, to: &str, factor: f64, offset: f64) -> Self {
        self.unit_conversions.insert(
            (from.trim().to_string(), to.trim().to_string()),
            Conversion { factor, offset },
        );
        self
    }

    /// Returns the consistency problems of the rule set; empty when sound.
    pub fn check(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for (raw, code) in &self.synonyms {
            if !self.canonical_units.contains_key(code) {
                issues.push(format!("synonym `{raw}` targets `{code}` which has no canonical unit"));
            }
        }
        for ((from, to), conv) in &self.unit_conversions {
            if !conv.factor.is_finite() || !conv.offset.is_finite() || conv.factor == 0.0 {
                issues.push(format!("conversion {from} -> {to} is degenerate"));
                continue;
            }
            if from == to && (conv.factor != 1.0 || conv.offset != 0.0) {
                issues.push(format!("identity conversion {from} -> {to} must be factor 1, offset 0"));
            }
            if from < to {
                if let Some(back) = self.unit_conversions.get(&(to.clone(), from.clone())) {
                    let expected = conv.inverse().unwrap_or(Conversion::IDENTITY);
                    if !close(back.factor, expected.factor) || !close(back.offset, expected.offset) {
                        issues.push(format!(
                            "conversion {to} -> {from} is not the inverse of {from} -> {to}"
                        ));
                    }
                }
            }
        }
        for code in self.nomenclature.keys() {
            if !self.canonical_units.contains_key(code) {
                issues.push(format!("nomenclature entry for unknown analysis `{code}`"));
            }
        }
        issues
    }

    pub fn ensure_consistent(&self) -> Result<(), MappingError> {
        let issues = self.check();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(MappingError::Inconsistent(issues))
        }
    }

    /// Maps a raw source label to its canonical analysis code. Canonical codes
    /// map to themselves.
    pub fn normalize_label(&self, raw: &str) -> Result<&str, MappingError> {
        let folded = fold_label(raw);
        if let Some(code) = self.synonyms.get(&folded) {
            return Ok(code);
        }
        match self.canonical_units.get_key_value(&folded) {
            Some((code, _)) => Ok(code),
            None => Err(MappingError::UnmappedLabel(raw.to_string())),
        }
    }

    pub fn canonical_unit(&self, code: &str) -> Option<&str> {
        self.canonical_units.get(code).map(String::as_str)
    }

    /// Converts `value` expressed in `from` to the canonical unit of `code`.
    pub fn convert_unit(&self, value: f64, from: &str, code: &str) -> Result<f64, MappingError> {
        let canonical = self
            .canonical_unit(code)
            .ok_or_else(|| MappingError::UnknownAnalysis(code.to_string()))?;
        let from = from.trim();
        if from == canonical {
            return Ok(value);
        }
        self.unit_conversions
            .get(&(from.to_string(), canonical.to_string()))
            .map(|c| c.apply(value))
            .ok_or_else(|| MappingError::UnconvertibleUnit {
                from: from.to_string(),
                to: canonical.to_string(),
                code: code.to_string(),
            })
    }

    /// Reads `synonyms.csv`, `units.csv` and `canonical_units.csv` (each with a
    /// header row) from `dir`. Missing files are treated as empty.
    pub fn load_dir(dir: &Path) -> Result<Self, MappingError> {
        Self::load_files(
            &dir.join("synonyms.csv"),
            &dir.join("units.csv"),
            &dir.join("canonical_units.csv"),
        )
    }

    pub fn load_files(
        synonyms: &Path,
        units: &Path,
        canonical: &Path,
    ) -> Result<Self, MappingError> {
        let mut rules = MappingRules::new();
        for row in read_rows(canonical, 2)? {
            let (code, unit) = (row.fields[0].trim(), row.fields[1].trim());
            rules.canonical_units.insert(code.to_string(), unit.to_string());
            if let Some(n) = row.fields.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()) {
                rules.nomenclature.insert(code.to_string(), n.to_string());
            }
        }
        for row in read_rows(synonyms, 2)? {
            rules
                .synonyms
                .insert(fold_label(&row.fields[0]), row.fields[1].trim().to_string());
        }
        for row in read_rows(units, 4)? {
            let factor = row.decimal(2)?;
            let offset = if row.fields[3].trim().is_empty() {
                0.0
            } else {
                row.decimal(3)?
            };
            rules.unit_conversions.insert(
                (row.fields[0].trim().to_string(), row.fields[1].trim().to_string()),
                Conversion { factor, offset },
            );
        }
        Ok(rules)
    }
}

struct Row {
    file: String,
    line: u64,
    fields: Vec<String>,
}

impl Row {
    fn decimal(&self, i: usize) -> Result<f64, MappingError> {
        crate::value::parse_decimal(&self.fields[i]).ok_or_else(|| MappingError::Format {
            file: self.file.clone(),
            line: self.line,
            message: format!("`{}` is not a number", self.fields[i]),
        })
    }
}

fn read_rows(path: &Path, min_fields: usize) -> Result<Vec<Row>, MappingError> {
    let file = path.display().to_string();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| MappingError::Csv {
            file: file.clone(),
            source,
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| MappingError::Csv {
            file: file.clone(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() < min_fields {
            return Err(MappingError::Format {
                file,
                line,
                message: format!("expected {min_fields} fields, found {}", record.len()),
            });
        }
        let mut fields: Vec<String> = record.iter().map(str::to_string).collect();
        fields.resize(min_fields.max(fields.len()), String::new());
        rows.push(Row {
            file: file.clone(),
            line,
            fields,
        });
    }
    Ok(rows)
}

/// One `attribute = value` test of a context expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub attribute: String,
    pub value: String,
}

/// Conjunction of equality conditions over patient attributes. The empty
/// context matches every patient.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Context(pub BTreeSet<Condition>);

impl Context {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn specificity(&self) -> usize {
        self.0.len()
    }

    pub fn matches(&self, attrs: &BTreeMap<String, Value>) -> bool {
        self.0.iter().all(|c| {
            attrs
                .get(&c.attribute)
                .is_some_and(|v| !v.is_null() && v.render() == c.value)
        })
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.iter().map(|c| c.attribute.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad context expression `{expr}`: {reason}")]
pub struct ContextParseError {
    pub expr: String,
    pub reason: String,
}

/// Parses `sex = F and age-band = 18-25`; an empty string or `*` is the
/// context-free interval.
impl FromStr for Context {
    type Err = ContextParseError;

    fn from_str(expr: &str) -> Result<Self, Self::Err> {
        let trimmed = expr.trim();
        if trimmed.is_empty() || trimmed == "*" {
            return Ok(Context::any());
        }
        let err = |reason: &str| ContextParseError {
            expr: expr.to_string(),
            reason: reason.to_string(),
        };
        let mut conds = BTreeSet::new();
        for part in trimmed.split(" and ") {
            let (attr, value) = part.split_once('=').ok_or_else(|| err("missing `=`"))?;
            let (attr, value) = (attr.trim(), value.trim());
            if attr.is_empty() || value.is_empty() {
                return Err(err("empty attribute or value"));
            }
            if !conds.insert(Condition {
                attribute: attr.to_string(),
                value: value.to_string(),
            }) {
                return Err(err("repeated condition"));
            }
        }
        let attrs: BTreeSet<_> = conds.iter().map(|c| &c.attribute).collect();
        if attrs.len() != conds.len() {
            return Err(err("attribute constrained twice"));
        }
        Ok(Context(conds))
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{} = {}", c.attribute, c.value)?;
        }
        Ok(())
    }
}

impl Serialize for Context {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Context {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInterval {
    pub code: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub context: Context,
}

impl ReferenceInterval {
    pub fn new(code: &str, lower: f64, upper: f64) -> Self {
        Self {
            code: code.to_string(),
            lower,
            upper,
            context: Context::any(),
        }
    }

    pub fn when(mut self, context: &str) -> Self {
        self.context = context.parse().expect("valid context expression");
        self
    }
}

/// Problems with a set of intervals: inverted bounds and contexts naming
/// attributes the patient dimension does not declare.
pub fn check_intervals(intervals: &[ReferenceInterval], patient: Option<&Dimension>) -> Vec<String> {
    let mut issues = Vec::new();
    for (i, iv) in intervals.iter().enumerate() {
        if !(iv.lower.is_finite() && iv.upper.is_finite()) || iv.lower > iv.upper {
            issues.push(format!(
                "interval #{} for `{}` has bounds [{}, {}]",
                i + 1,
                iv.code,
                iv.lower,
                iv.upper
            ));
        }
        if let Some(dim) = patient {
            for attr in iv.context.attributes() {
                if dim.attribute(attr).is_none() {
                    issues.push(format!(
                        "interval #{} for `{}` tests undeclared patient attribute `{attr}`",
                        i + 1,
                        iv.code
                    ));
                }
            }
        }
    }
    issues
}

/// Reads `intervals.csv` (`code,lower,upper,context_expr`, header row).
pub fn load_intervals(path: &Path) -> Result<Vec<ReferenceInterval>, MappingError> {
    let mut out = Vec::new();
    for row in read_rows(path, 3)? {
        let context = row.fields.get(3).map(String::as_str).unwrap_or("");
        out.push(ReferenceInterval {
            code: row.fields[0].trim().to_string(),
            lower: row.decimal(1)?,
            upper: row.decimal(2)?,
            context: context.parse().map_err(|e: ContextParseError| MappingError::Format {
                file: row.file.clone(),
                line: row.line,
                message: e.to_string(),
            })?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    Below,
    Normal,
    Above,
    NoInterval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlagOutcome {
    pub flag: Flag,
    /// Set when several equally specific intervals with different bounds match.
    pub ambiguity: Option<String>,
}

/// Chooses the most specific interval whose context matches `patient` and
/// compares `value` against it, bounds inclusive. Equally specific matches
/// with different bounds give `NoInterval` plus an ambiguity warning.
pub fn flag_normality(
    value: f64,
    code: &str,
    patient: &BTreeMap<String, Value>,
    intervals: &[ReferenceInterval],
) -> FlagOutcome {
    let matching: Vec<&ReferenceInterval> = intervals
        .iter()
        .filter(|iv| iv.code == code && iv.context.matches(patient))
        .collect();
    let Some(best) = matching.iter().map(|iv| iv.context.specificity()).max() else {
        return FlagOutcome {
            flag: Flag::NoInterval,
            ambiguity: None,
        };
    };
    let top: Vec<&ReferenceInterval> = matching
        .into_iter()
        .filter(|iv| iv.context.specificity() == best)
        .collect();
    let chosen = top[0];
    if top
        .iter()
        .any(|iv| iv.lower != chosen.lower || iv.upper != chosen.upper)
    {
        let contexts: Vec<String> = top.iter().map(|iv| format!("[{}]", iv.context)).collect();
        return FlagOutcome {
            flag: Flag::NoInterval,
            ambiguity: Some(format!(
                "{} equally specific intervals for `{code}` match: {}",
                top.len(),
                contexts.join(", ")
            )),
        };
    }
    let flag = if value < chosen.lower {
        Flag::Below
    } else if value > chosen.upper {
        Flag::Above
    } else {
        Flag::Normal
    };
    FlagOutcome {
        flag,
        ambiguity: None,
    }
}
