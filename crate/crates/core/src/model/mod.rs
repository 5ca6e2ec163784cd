//! Dimensional model: dimensions, hierarchies, fact tables and complex-fact groups.
//!
//! A [`Schema`] is immutable once built. Changes such as [`Schema::add_fact_table`]
//! produce a new schema whose version is one greater than its parent.

mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use validate::{
    grain_usage, is_identifier, validate_schema, Location, Rule, Segment, ValidationReport,
    Violation, KEYWORDS,
};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema is invalid: {}", .0.summary())]
    Invalid(ValidationReport),
    #[error("duplicate declaration: {kind} `{name}` already exists")]
    Duplicate { kind: &'static str, name: String },
    #[error("dangling reference: dimension `{0}` is not declared")]
    DanglingDimension(String),
    #[error("unknown fact table `{0}`")]
    UnknownFact(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown hierarchy `{hierarchy}` in dimension `{dimension}`")]
    UnknownHierarchy { dimension: String, hierarchy: String },
}

/// Kind of value an attribute or measure holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Text,
    Integer,
    Decimal,
    Date,
    Timestamp,
    DocumentRef,
}

impl ValueKind {
    pub const ALL: [ValueKind; 6] = [
        ValueKind::Text,
        ValueKind::Integer,
        ValueKind::Decimal,
        ValueKind::Date,
        ValueKind::Timestamp,
        ValueKind::DocumentRef,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ValueKind::Text => "text",
            ValueKind::Integer => "integer",
            ValueKind::Decimal => "decimal",
            ValueKind::Date => "date",
            ValueKind::Timestamp => "timestamp",
            ValueKind::DocumentRef => "document-ref",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == word)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Integer | ValueKind::Decimal)
    }

    /// Kinds allowed on dimension attributes. Document references only appear as measures.
    pub fn is_attribute_kind(self) -> bool {
        self != ValueKind::DocumentRef
    }

    /// Kinds allowed on measures.
    pub fn is_measure_kind(self) -> bool {
        matches!(
            self,
            ValueKind::Decimal | ValueKind::Integer | ValueKind::Text | ValueKind::DocumentRef
        )
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregability {
    Additive,
    SemiAdditive,
    NonAdditive,
}

impl Aggregability {
    pub const ALL: [Aggregability; 3] = [
        Aggregability::Additive,
        Aggregability::SemiAdditive,
        Aggregability::NonAdditive,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Aggregability::Additive => "additive",
            Aggregability::SemiAdditive => "semi-additive",
            Aggregability::NonAdditive => "non-additive",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.keyword() == word)
    }

    /// Numeric measures are additive unless declared otherwise; everything else is not.
    pub fn default_for(kind: ValueKind) -> Self {
        if kind.is_numeric() {
            Aggregability::Additive
        } else {
            Aggregability::NonAdditive
        }
    }

    pub fn is_summable(self) -> bool {
        matches!(self, Aggregability::Additive | Aggregability::SemiAdditive)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: ValueKind,
    /// Marks the attribute as living in a normalized outrigger table.
    #[serde(default)]
    pub outrigger: bool,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Self {
            name: name.into(),
            kind,
            outrigger: false,
        }
    }

    pub fn outrigger(name: impl Into<String>, kind: ValueKind) -> Self {
        Self {
            outrigger: true,
            ..Self::new(name, kind)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub name: String,
    pub bound_attributes: Vec<String>,
}

impl Level {
    pub fn new<S: Into<String>>(name: impl Into<String>, attrs: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            bound_attributes: attrs.into_iter().map(Into::into).collect(),
        }
    }
}

/// Ordered refinement path, finest level first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub name: String,
    pub levels: Vec<Level>,
}

impl Hierarchy {
    pub fn position(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.name == level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub natural_key: Vec<String>,
    pub attributes: Vec<Attribute>,
    pub hierarchies: Vec<Hierarchy>,
}

impl Dimension {
    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn hierarchy(&self, name: &str) -> Option<&Hierarchy> {
        self.hierarchies.iter().find(|h| h.name == name)
    }

    /// Returns the levels of `hierarchy`, finest first, exactly as declared.
    pub fn hierarchy_path(&self, hierarchy: &str) -> Result<&[Level], SchemaError> {
        self.hierarchy(hierarchy)
            .map(|h| h.levels.as_slice())
            .ok_or_else(|| SchemaError::UnknownHierarchy {
                dimension: self.name.clone(),
                hierarchy: hierarchy.to_string(),
            })
    }

    /// Every dimension carries an implicit member level named after itself,
    /// binding the natural key. Flat dimensions are addressed through it.
    pub fn member_level(&self) -> Level {
        Level::new(self.name.clone(), self.natural_key.iter().cloned())
    }

    /// Resolves a level name: declared hierarchy levels first, then the member level.
    pub fn level(&self, name: &str) -> Option<Level> {
        self.hierarchies
            .iter()
            .flat_map(|h| h.levels.iter())
            .find(|l| l.name == name)
            .cloned()
            .or_else(|| (name == self.name).then(|| self.member_level()))
    }

    /// Hierarchies in which `level` appears, in declaration order.
    pub fn hierarchies_with(&self, level: &str) -> impl Iterator<Item = &Hierarchy> + '_ {
        let level = level.to_string();
        self.hierarchies
            .iter()
            .filter(move |h| h.position(&level).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrainEntry {
    pub dimension: String,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub name: String,
    pub kind: ValueKind,
    pub aggregability: Aggregability,
}

impl Measure {
    /// Measure with the default aggregability for its kind.
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Self {
            name: name.into(),
            kind,
            aggregability: Aggregability::default_for(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTable {
    pub name: String,
    pub grain: Vec<GrainEntry>,
    pub measures: Vec<Measure>,
}

impl FactTable {
    pub fn grain_level(&self, dimension: &str) -> Option<&str> {
        self.grain
            .iter()
            .find(|g| g.dimension == dimension)
            .map(|g| g.level.as_str())
    }

    pub fn grain_index(&self, dimension: &str) -> Option<usize> {
        self.grain.iter().position(|g| g.dimension == dimension)
    }

    pub fn measure(&self, name: &str) -> Option<&Measure> {
        self.measures.iter().find(|m| m.name == name)
    }

    pub fn measure_index(&self, name: &str) -> Option<usize> {
        self.measures.iter().position(|m| m.name == name)
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &str> + '_ {
        self.grain.iter().map(|g| g.dimension.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cardinality {
    ManyToMany,
}

impl Cardinality {
    pub fn keyword(self) -> &'static str {
        "many-to-many"
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        (word == "many-to-many").then_some(Cardinality::ManyToMany)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentBridge {
    pub fact: String,
    pub cardinality: Cardinality,
}

/// A fact represented by several interrelated tables: a central report, satellite
/// result tables, and documents attached to the report through a bridge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexFactGroup {
    pub name: String,
    pub central_fact: String,
    pub satellite_facts: Vec<String>,
    pub document_bridge: DocumentBridge,
}

impl ComplexFactGroup {
    pub fn members(&self) -> impl Iterator<Item = &str> + '_ {
        std::iter::once(self.central_fact.as_str())
            .chain(self.satellite_facts.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactClass {
    Star,
    Snowflake,
}

impl fmt::Display for FactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactClass::Star => "star",
            FactClass::Snowflake => "snowflake",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub version: u64,
    pub dimensions: Vec<Dimension>,
    pub fact_tables: Vec<FactTable>,
    pub complex_groups: Vec<ComplexFactGroup>,
}

/// Structural equality: top-level declaration order is not significant.
impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        fn sorted<T, F: Fn(&T) -> &str>(items: &[T], key: F) -> Vec<&T> {
            let mut v: Vec<&T> = items.iter().collect();
            v.sort_by(|a, b| key(a).cmp(key(b)));
            v
        }
        self.name == other.name
            && self.version == other.version
            && sorted(&self.dimensions, |d| &d.name) == sorted(&other.dimensions, |d| &d.name)
            && sorted(&self.fact_tables, |f| &f.name) == sorted(&other.fact_tables, |f| &f.name)
            && sorted(&self.complex_groups, |g| &g.name)
                == sorted(&other.complex_groups, |g| &g.name)
    }
}

impl Eq for Schema {}

impl Schema {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version: 1,
            dimensions: Vec::new(),
            fact_tables: Vec::new(),
            complex_groups: Vec::new(),
        }
    }

    /// Sorts top-level declarations by name, the order the stored form uses.
    pub fn into_canonical_order(mut self) -> Self {
        self.dimensions.sort_by(|a, b| a.name.cmp(&b.name));
        self.fact_tables.sort_by(|a, b| a.name.cmp(&b.name));
        self.complex_groups.sort_by(|a, b| a.name.cmp(&b.name));
        self
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn fact_table(&self, name: &str) -> Option<&FactTable> {
        self.fact_tables.iter().find(|f| f.name == name)
    }

    pub fn group(&self, name: &str) -> Option<&ComplexFactGroup> {
        self.complex_groups.iter().find(|g| g.name == name)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_schema(self)
    }

    /// Fails with the full report when the schema has any violation.
    pub fn ensure_valid(&self) -> Result<(), SchemaError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(SchemaError::Invalid(report))
        }
    }

    /// Dimensions referenced by at least two fact tables: the warehouse bus.
    pub fn conformed_dimensions(&self) -> Result<BTreeSet<String>, SchemaError> {
        self.ensure_valid()?;
        Ok(self.bus())
    }

    /// Bus computation without the validity precondition.
    pub(crate) fn bus(&self) -> BTreeSet<String> {
        let mut uses: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for fact in &self.fact_tables {
            for dim in fact.dimensions() {
                uses.entry(dim).or_default().insert(&fact.name);
            }
        }
        uses.into_iter()
            .filter(|(_, facts)| facts.len() >= 2)
            .map(|(d, _)| d.to_string())
            .collect()
    }

    /// Star when no grain dimension reaches outrigger attributes from its grain
    /// level; snowflake otherwise.
    pub fn classify_fact_table(&self, fact: &str) -> Result<FactClass, SchemaError> {
        let fact = self
            .fact_table(fact)
            .ok_or_else(|| SchemaError::UnknownFact(fact.to_string()))?;
        for entry in &fact.grain {
            let Some(dim) = self.dimension(&entry.dimension) else {
                continue;
            };
            for hierarchy in dim.hierarchies_with(&entry.level) {
                if hierarchy.levels.len() < 2 {
                    continue;
                }
                let snowflaked = hierarchy.levels[1..]
                    .iter()
                    .flat_map(|l| l.bound_attributes.iter())
                    .any(|a| dim.attribute(a).is_some_and(|a| a.outrigger));
                if snowflaked {
                    return Ok(FactClass::Snowflake);
                }
            }
        }
        Ok(FactClass::Star)
    }

    /// True when at least two fact tables share a dimension.
    pub fn is_constellation(&self) -> bool {
        !self.bus().is_empty()
    }

    /// Bus dimensions in the central fact's grain; every group member must carry them.
    pub fn group_shared_dimensions(&self, group: &ComplexFactGroup) -> Vec<String> {
        let bus = self.bus();
        self.fact_table(&group.central_fact)
            .map(|f| {
                f.dimensions()
                    .filter(|d| bus.contains(*d))
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Adds a fact table, optionally together with new dimensions it needs.
    /// Returns the next schema version; `self` is left untouched.
    pub fn add_fact_table(
        &self,
        fact: FactTable,
        new_dimensions: Vec<Dimension>,
    ) -> Result<Schema, SchemaError> {
        if self.fact_table(&fact.name).is_some() {
            return Err(SchemaError::Duplicate {
                kind: "fact",
                name: fact.name,
            });
        }
        for dim in &new_dimensions {
            if self.dimension(&dim.name).is_some() {
                return Err(SchemaError::Duplicate {
                    kind: "dimension",
                    name: dim.name.clone(),
                });
            }
        }
        for entry in &fact.grain {
            let known = self.dimension(&entry.dimension).is_some()
                || new_dimensions.iter().any(|d| d.name == entry.dimension);
            if !known {
                return Err(SchemaError::DanglingDimension(entry.dimension.clone()));
            }
        }
        let mut next = self.clone();
        next.dimensions.extend(new_dimensions);
        next.fact_tables.push(fact);
        next.version += 1;
        next.ensure_valid()?;
        Ok(next)
    }

    /// Levels reachable from the fact's grain level of `dimension`, finest first,
    /// along the first hierarchy containing the grain level. Flat grains yield
    /// just the grain level.
    pub fn navigable_levels(&self, fact: &str, dimension: &str) -> Option<Vec<Level>> {
        let fact = self.fact_table(fact)?;
        let dim = self.dimension(dimension)?;
        let grain = fact.grain_level(dimension)?;
        match dim.hierarchies_with(grain).next() {
            Some(h) => {
                let start = h.position(grain)?;
                Some(h.levels[start..].to_vec())
            }
            None => dim.level(grain).map(|l| vec![l]),
        }
    }
}
