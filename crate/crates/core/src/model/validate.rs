use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::{Aggregability, FactClass, Schema};

/// Words reserved by the schema language; they cannot be used as names.
pub const KEYWORDS: &[&str] = &[
    "schema",
    "version",
    "dimension",
    "naturalkey",
    "hierarchy",
    "level",
    "fact",
    "grain",
    "measure",
    "group",
    "central",
    "satellite",
    "bridge",
    "outrigger",
];

/// Lower-case words joined by single hyphens, starting with a letter.
pub fn is_identifier(s: &str) -> bool {
    if KEYWORDS.contains(&s) {
        return false;
    }
    s.starts_with(|c: char| c.is_ascii_lowercase())
        && s.split('-').all(|p| {
            !p.is_empty() && p.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Segment {
    Dimension { index: usize, name: String },
    NaturalKey { index: usize, name: String },
    Attribute { index: usize, name: String },
    Hierarchy { index: usize, name: String },
    Level { index: usize, name: String },
    LevelAttribute { index: usize, name: String },
    Fact { index: usize, name: String },
    Grain { index: usize, name: String },
    Measure { index: usize, name: String },
    Group { index: usize, name: String },
    Central { name: String },
    Satellite { index: usize, name: String },
    Bridge { name: String },
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (label, name) = match self {
            Segment::Dimension { name, .. } => ("dimension", name),
            Segment::NaturalKey { name, .. } => ("naturalkey", name),
            Segment::Attribute { name, .. } => ("attribute", name),
            Segment::Hierarchy { name, .. } => ("hierarchy", name),
            Segment::Level { name, .. } => ("level", name),
            Segment::LevelAttribute { name, .. } => ("level attribute", name),
            Segment::Fact { name, .. } => ("fact", name),
            Segment::Grain { name, .. } => ("grain", name),
            Segment::Measure { name, .. } => ("measure", name),
            Segment::Group { name, .. } => ("group", name),
            Segment::Central { name } => ("central", name),
            Segment::Satellite { name, .. } => ("satellite", name),
            Segment::Bridge { name } => ("bridge", name),
        };
        write!(f, "{label} `{name}`")
    }
}

/// Path from the schema root to the offending declaration. The empty path is
/// the schema itself. Ordering follows declaration kind, then position.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Location(pub Vec<Segment>);

impl Location {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, seg: Segment) -> Self {
        let mut path = self.0.clone();
        path.push(seg);
        Self(path)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("schema");
        }
        for (i, seg) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" > ")?;
            }
            write!(f, "{seg}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    NoFactTables,
    InvalidIdentifier,
    DuplicateName,
    EmptyNaturalKey,
    NaturalKeyNotAttribute,
    DuplicateAttribute,
    AttributeKind,
    TooFewLevels,
    LevelWithoutAttributes,
    UnknownLevelAttribute,
    NoMeasures,
    MeasureKind,
    SummableNonNumeric,
    DanglingDimension,
    UnknownGrainLevel,
    DuplicateGrainDimension,
    DanglingFact,
    CentralIsSatellite,
    BridgeNotCentral,
    GroupGrainMismatch,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::NoFactTables => "no-fact-tables",
            Rule::InvalidIdentifier => "invalid-identifier",
            Rule::DuplicateName => "duplicate-name",
            Rule::EmptyNaturalKey => "empty-natural-key",
            Rule::NaturalKeyNotAttribute => "natural-key-not-attribute",
            Rule::DuplicateAttribute => "duplicate-attribute",
            Rule::AttributeKind => "attribute-kind",
            Rule::TooFewLevels => "too-few-levels",
            Rule::LevelWithoutAttributes => "level-without-attributes",
            Rule::UnknownLevelAttribute => "unknown-level-attribute",
            Rule::NoMeasures => "no-measures",
            Rule::MeasureKind => "measure-kind",
            Rule::SummableNonNumeric => "summable-non-numeric",
            Rule::DanglingDimension => "dangling-dimension",
            Rule::UnknownGrainLevel => "unknown-grain-level",
            Rule::DuplicateGrainDimension => "duplicate-grain-dimension",
            Rule::DanglingFact => "dangling-fact",
            Rule::CentralIsSatellite => "central-is-satellite",
            Rule::BridgeNotCentral => "bridge-not-central",
            Rule::GroupGrainMismatch => "group-grain-mismatch",
        }
    }

    /// Rules that flag a name that does not resolve.
    pub fn is_dangling(self) -> bool {
        matches!(
            self,
            Rule::NaturalKeyNotAttribute
                | Rule::UnknownLevelAttribute
                | Rule::DanglingDimension
                | Rule::UnknownGrainLevel
                | Rule::DanglingFact
        )
    }

    /// Rules that flag a name declared twice in the same scope.
    pub fn is_duplicate(self) -> bool {
        matches!(
            self,
            Rule::DuplicateName | Rule::DuplicateAttribute | Rule::DuplicateGrainDimension
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: Location,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.location, self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Per-fact star/snowflake classification, filled for valid schemas.
    pub classes: Vec<(String, FactClass)>,
    /// True when at least two fact tables share a dimension.
    pub constellation: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        match self.violations.len() {
            0 => "no violations".to_string(),
            1 => self.violations[0].to_string(),
            n => format!("{} (and {} more)", self.violations[0], n - 1),
        }
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, location: &Location, rule: Rule, message: impl Into<String>) {
        self.out.push(Violation {
            location: location.clone(),
            rule,
            message: message.into(),
        });
    }

    fn ident(&mut self, location: &Location, name: &str) {
        if !is_identifier(name) {
            self.push(
                location,
                Rule::InvalidIdentifier,
                format!("`{name}` is not a valid identifier"),
            );
        }
    }

    /// Reports every repeat after the first occurrence.
    fn unique<'a>(
        &mut self,
        names: impl Iterator<Item = (Location, &'a str)>,
        rule: Rule,
        what: &str,
    ) {
        let mut seen = BTreeSet::new();
        for (loc, name) in names {
            if !seen.insert(name) {
                self.push(&loc, rule, format!("{what} `{name}` is declared more than once"));
            }
        }
    }
}

/// Checks every structural rule of the model. Violations are returned sorted by
/// location; an empty list means the schema is valid.
pub fn validate_schema(schema: &Schema) -> ValidationReport {
    let mut c = Checker { out: Vec::new() };
    let root = Location::root();
    c.ident(&root, &schema.name);

    if schema.fact_tables.is_empty() {
        c.push(&root, Rule::NoFactTables, "no fact tables");
    }

    let dim_locs: Vec<Location> = schema
        .dimensions
        .iter()
        .enumerate()
        .map(|(index, d)| {
            root.child(Segment::Dimension {
                index,
                name: d.name.clone(),
            })
        })
        .collect();
    let fact_locs: Vec<Location> = schema
        .fact_tables
        .iter()
        .enumerate()
        .map(|(index, f)| {
            root.child(Segment::Fact {
                index,
                name: f.name.clone(),
            })
        })
        .collect();

    c.unique(
        dim_locs
            .iter()
            .cloned()
            .zip(schema.dimensions.iter().map(|d| d.name.as_str())),
        Rule::DuplicateName,
        "dimension",
    );
    c.unique(
        fact_locs
            .iter()
            .cloned()
            .zip(schema.fact_tables.iter().map(|f| f.name.as_str())),
        Rule::DuplicateName,
        "fact",
    );

    for (dim, loc) in schema.dimensions.iter().zip(&dim_locs) {
        c.ident(loc, &dim.name);
        if dim.natural_key.is_empty() {
            c.push(loc, Rule::EmptyNaturalKey, "natural key is empty");
        }
        let key_locs = dim.natural_key.iter().enumerate().map(|(index, k)| {
            (
                loc.child(Segment::NaturalKey {
                    index,
                    name: k.clone(),
                }),
                k.as_str(),
            )
        });
        c.unique(key_locs.clone(), Rule::DuplicateAttribute, "natural key part");
        for (kloc, k) in key_locs {
            if dim.attribute(k).is_none() {
                c.push(
                    &kloc,
                    Rule::NaturalKeyNotAttribute,
                    format!("natural key part `{k}` is not an attribute of `{}`", dim.name),
                );
            }
        }
        let attr_locs = dim.attributes.iter().enumerate().map(|(index, a)| {
            (
                loc.child(Segment::Attribute {
                    index,
                    name: a.name.clone(),
                }),
                a,
            )
        });
        c.unique(
            attr_locs.clone().map(|(l, a)| (l, a.name.as_str())),
            Rule::DuplicateAttribute,
            "attribute",
        );
        for (aloc, attr) in attr_locs {
            c.ident(&aloc, &attr.name);
            if !attr.kind.is_attribute_kind() {
                c.push(
                    &aloc,
                    Rule::AttributeKind,
                    format!("attribute `{}` cannot be of kind {}", attr.name, attr.kind),
                );
            }
        }
        let hier_locs: Vec<Location> = dim
            .hierarchies
            .iter()
            .enumerate()
            .map(|(index, h)| {
                loc.child(Segment::Hierarchy {
                    index,
                    name: h.name.clone(),
                })
            })
            .collect();
        c.unique(
            hier_locs
                .iter()
                .cloned()
                .zip(dim.hierarchies.iter().map(|h| h.name.as_str())),
            Rule::DuplicateName,
            "hierarchy",
        );
        for (h, hloc) in dim.hierarchies.iter().zip(&hier_locs) {
            c.ident(hloc, &h.name);
            if h.levels.len() < 2 {
                c.push(
                    hloc,
                    Rule::TooFewLevels,
                    format!("hierarchy `{}` needs at least 2 levels", h.name),
                );
            }
            let level_locs: Vec<Location> = h
                .levels
                .iter()
                .enumerate()
                .map(|(index, l)| {
                    hloc.child(Segment::Level {
                        index,
                        name: l.name.clone(),
                    })
                })
                .collect();
            c.unique(
                level_locs
                    .iter()
                    .cloned()
                    .zip(h.levels.iter().map(|l| l.name.as_str())),
                Rule::DuplicateName,
                "level",
            );
            for (level, lloc) in h.levels.iter().zip(&level_locs) {
                c.ident(lloc, &level.name);
                if level.bound_attributes.is_empty() {
                    c.push(
                        lloc,
                        Rule::LevelWithoutAttributes,
                        format!("level `{}` binds no attribute", level.name),
                    );
                }
                for (index, a) in level.bound_attributes.iter().enumerate() {
                    if dim.attribute(a).is_none() {
                        c.push(
                            &lloc.child(Segment::LevelAttribute {
                                index,
                                name: a.clone(),
                            }),
                            Rule::UnknownLevelAttribute,
                            format!("level `{}` binds unknown attribute `{a}`", level.name),
                        );
                    }
                }
            }
        }
    }

    for (fact, loc) in schema.fact_tables.iter().zip(&fact_locs) {
        c.ident(loc, &fact.name);
        let grain_locs: Vec<Location> = fact
            .grain
            .iter()
            .enumerate()
            .map(|(index, g)| {
                loc.child(Segment::Grain {
                    index,
                    name: g.dimension.clone(),
                })
            })
            .collect();
        c.unique(
            grain_locs
                .iter()
                .cloned()
                .zip(fact.grain.iter().map(|g| g.dimension.as_str())),
            Rule::DuplicateGrainDimension,
            "grain dimension",
        );
        for (entry, gloc) in fact.grain.iter().zip(&grain_locs) {
            match schema.dimension(&entry.dimension) {
                None => c.push(
                    gloc,
                    Rule::DanglingDimension,
                    format!("dimension `{}` is not declared", entry.dimension),
                ),
                Some(dim) if dim.level(&entry.level).is_none() => c.push(
                    gloc,
                    Rule::UnknownGrainLevel,
                    format!(
                        "dimension `{}` has no level `{}`",
                        entry.dimension, entry.level
                    ),
                ),
                Some(_) => {}
            }
        }
        if fact.measures.is_empty() {
            c.push(
                loc,
                Rule::NoMeasures,
                format!("fact `{}` declares no measure", fact.name),
            );
        }
        let measure_locs: Vec<Location> = fact
            .measures
            .iter()
            .enumerate()
            .map(|(index, m)| {
                loc.child(Segment::Measure {
                    index,
                    name: m.name.clone(),
                })
            })
            .collect();
        c.unique(
            measure_locs
                .iter()
                .cloned()
                .zip(fact.measures.iter().map(|m| m.name.as_str())),
            Rule::DuplicateName,
            "measure",
        );
        for (m, mloc) in fact.measures.iter().zip(&measure_locs) {
            c.ident(mloc, &m.name);
            if !m.kind.is_measure_kind() {
                c.push(
                    mloc,
                    Rule::MeasureKind,
                    format!("measure `{}` cannot be of kind {}", m.name, m.kind),
                );
            } else if !m.kind.is_numeric() && m.aggregability != Aggregability::NonAdditive {
                c.push(
                    mloc,
                    Rule::SummableNonNumeric,
                    format!("{} measure `{}` must be non-additive", m.kind, m.name),
                );
            }
        }
    }

    let bus = schema.bus();
    let group_locs: Vec<Location> = schema
        .complex_groups
        .iter()
        .enumerate()
        .map(|(index, g)| {
            root.child(Segment::Group {
                index,
                name: g.name.clone(),
            })
        })
        .collect();
    c.unique(
        group_locs
            .iter()
            .cloned()
            .zip(schema.complex_groups.iter().map(|g| g.name.as_str())),
        Rule::DuplicateName,
        "group",
    );
    for (group, loc) in schema.complex_groups.iter().zip(&group_locs) {
        c.ident(loc, &group.name);
        let central_loc = loc.child(Segment::Central {
            name: group.central_fact.clone(),
        });
        let central = schema.fact_table(&group.central_fact);
        if central.is_none() {
            c.push(
                &central_loc,
                Rule::DanglingFact,
                format!("fact `{}` is not declared", group.central_fact),
            );
        }
        let sat_locs: Vec<Location> = group
            .satellite_facts
            .iter()
            .enumerate()
            .map(|(index, s)| {
                loc.child(Segment::Satellite {
                    index,
                    name: s.clone(),
                })
            })
            .collect();
        c.unique(
            sat_locs
                .iter()
                .cloned()
                .zip(group.satellite_facts.iter().map(String::as_str)),
            Rule::DuplicateName,
            "satellite",
        );
        let shared: Vec<(&str, &str)> = central
            .map(|f| {
                f.grain
                    .iter()
                    .filter(|g| bus.contains(&g.dimension))
                    .map(|g| (g.dimension.as_str(), g.level.as_str()))
                    .collect()
            })
            .unwrap_or_default();
        for (sat, sloc) in group.satellite_facts.iter().zip(&sat_locs) {
            if *sat == group.central_fact {
                c.push(
                    sloc,
                    Rule::CentralIsSatellite,
                    format!("`{sat}` is both central and satellite"),
                );
                continue;
            }
            let Some(fact) = schema.fact_table(sat) else {
                c.push(sloc, Rule::DanglingFact, format!("fact `{sat}` is not declared"));
                continue;
            };
            for (dim, level) in &shared {
                match fact.grain_level(dim) {
                    Some(l) if l == *level => {}
                    Some(l) => c.push(
                        sloc,
                        Rule::GroupGrainMismatch,
                        format!(
                            "satellite `{sat}` records `{dim}` at level `{l}`, central at `{level}`"
                        ),
                    ),
                    None => c.push(
                        sloc,
                        Rule::GroupGrainMismatch,
                        format!("satellite `{sat}` is not linked to shared dimension `{dim}`"),
                    ),
                }
            }
        }
        if group.document_bridge.fact != group.central_fact {
            c.push(
                &loc.child(Segment::Bridge {
                    name: group.document_bridge.fact.clone(),
                }),
                Rule::BridgeNotCentral,
                format!(
                    "document bridge must attach to central fact `{}`",
                    group.central_fact
                ),
            );
        }
    }

    // Stable order: by location, then rule, then message.
    let mut violations = c.out;
    violations.sort_by(|a, b| {
        (&a.location, a.rule, &a.message).cmp(&(&b.location, b.rule, &b.message))
    });
    violations.dedup();

    let classes = if violations.is_empty() {
        schema
            .fact_tables
            .iter()
            .filter_map(|f| {
                schema
                    .classify_fact_table(&f.name)
                    .ok()
                    .map(|c| (f.name.clone(), c))
            })
            .collect()
    } else {
        Vec::new()
    };

    ValidationReport {
        violations,
        classes,
        constellation: !bus.is_empty(),
    }
}

/// Count of fact tables per dimension; used by tests as an independent check.
pub fn grain_usage(schema: &Schema) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for f in &schema.fact_tables {
        for d in f.dimensions() {
            *counts.entry(d).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Attribute, Dimension, FactTable, GrainEntry, Hierarchy, Level, Measure, ValueKind,
    };

    fn base() -> Schema {
        let mut s = Schema::new("w");
        s.dimensions.push(Dimension {
            name: "patient".into(),
            natural_key: vec!["code".into()],
            attributes: vec![
                Attribute::new("code", ValueKind::Text),
                Attribute::new("sport", ValueKind::Text),
            ],
            hierarchies: vec![],
        });
        s.fact_tables.push(FactTable {
            name: "obs".into(),
            grain: vec![GrainEntry {
                dimension: "patient".into(),
                level: "patient".into(),
            }],
            measures: vec![Measure::new("value", ValueKind::Decimal)],
        });
        s
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("data-provider"));
        assert!(is_identifier("a1-b2"));
        assert!(!is_identifier("Data"));
        assert!(!is_identifier("-x"));
        assert!(!is_identifier("x-"));
        assert!(!is_identifier("a--b"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("level"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn valid_base() {
        let r = validate_schema(&base());
        assert!(r.is_valid(), "{:?}", r.violations);
        assert!(!r.constellation);
    }

    #[test]
    fn zero_facts_is_one_violation() {
        let mut s = base();
        s.fact_tables.clear();
        let r = validate_schema(&s);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::NoFactTables);
        assert_eq!(r.violations[0].message, "no fact tables");
    }

    #[test]
    fn dangling_dimension_is_named() {
        let mut s = base();
        s.fact_tables[0].grain[0].dimension = "patint".into();
        let r = validate_schema(&s);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::DanglingDimension);
        assert!(r.violations[0].message.contains("patint"));
    }

    #[test]
    fn hierarchy_rules() {
        let mut s = base();
        s.dimensions[0].hierarchies.push(Hierarchy {
            name: "h".into(),
            levels: vec![Level::new("only", ["sport"])],
        });
        s.dimensions[0].hierarchies.push(Hierarchy {
            name: "g".into(),
            levels: vec![Level::new("a", ["code"]), Level::new("b", Vec::<String>::new()), Level::new("a", ["ghost"])],
        });
        let rules: Vec<Rule> = validate_schema(&s).violations.iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::TooFewLevels));
        assert!(rules.contains(&Rule::LevelWithoutAttributes));
        assert!(rules.contains(&Rule::DuplicateName));
        assert!(rules.contains(&Rule::UnknownLevelAttribute));
    }

    #[test]
    fn text_measure_cannot_be_additive() {
        let mut s = base();
        s.fact_tables[0].measures.push(Measure {
            name: "note".into(),
            kind: ValueKind::Text,
            aggregability: Aggregability::Additive,
        });
        let r = validate_schema(&s);
        assert_eq!(r.violations[0].rule, Rule::SummableNonNumeric);
    }

    #[test]
    fn report_is_sorted_by_location() {
        let mut s = base();
        s.fact_tables[0].grain[0].dimension = "nope".into();
        s.dimensions[0].natural_key = vec!["ghost".into()];
        let r = validate_schema(&s);
        let locs: Vec<_> = r.violations.iter().map(|v| v.location.clone()).collect();
        let mut sorted = locs.clone();
        sorted.sort();
        assert_eq!(locs, sorted);
        assert!(matches!(locs[0].0[0], Segment::Dimension { .. }));
    }
}
