use std::fmt::Write;

use crate::model::{Schema, SchemaError};

/// Canonical text for a valid schema: dimensions, then facts, then groups,
/// each kind sorted by name; two-space indentation; one attribute per line.
/// Output is byte-identical for structurally equal schemas.
pub fn serialize_schema(schema: &Schema) -> Result<String, SchemaError> {
    schema.ensure_valid()?;
    let mut out = String::new();
    // Writing to a String cannot fail.
    let _ = write_schema(&mut out, schema);
    Ok(out)
}

fn write_schema(out: &mut String, schema: &Schema) -> std::fmt::Result {
    writeln!(out, "schema {} version {}", schema.name, schema.version)?;

    let mut dims: Vec<_> = schema.dimensions.iter().collect();
    dims.sort_by(|a, b| a.name.cmp(&b.name));
    for dim in dims {
        writeln!(out)?;
        writeln!(out, "dimension {} {{", dim.name)?;
        writeln!(out, "  naturalkey {}", dim.natural_key.join(" "))?;
        for attr in &dim.attributes {
            write!(out, "  {} {}", attr.name, attr.kind.keyword())?;
            if attr.outrigger {
                out.push_str(" outrigger");
            }
            out.push('\n');
        }
        for h in &dim.hierarchies {
            writeln!(out, "  hierarchy {} {{", h.name)?;
            for level in &h.levels {
                writeln!(
                    out,
                    "    level {} {}",
                    level.name,
                    level.bound_attributes.join(" ")
                )?;
            }
            writeln!(out, "  }}")?;
        }
        writeln!(out, "}}")?;
    }

    let mut facts: Vec<_> = schema.fact_tables.iter().collect();
    facts.sort_by(|a, b| a.name.cmp(&b.name));
    for fact in facts {
        writeln!(out)?;
        writeln!(out, "fact {} {{", fact.name)?;
        for g in &fact.grain {
            writeln!(out, "  grain {} {}", g.dimension, g.level)?;
        }
        for m in &fact.measures {
            writeln!(
                out,
                "  measure {} {} {}",
                m.name,
                m.kind.keyword(),
                m.aggregability.keyword()
            )?;
        }
        writeln!(out, "}}")?;
    }

    let mut groups: Vec<_> = schema.complex_groups.iter().collect();
    groups.sort_by(|a, b| a.name.cmp(&b.name));
    for g in groups {
        writeln!(out)?;
        writeln!(out, "group {} {{", g.name)?;
        writeln!(out, "  central {}", g.central_fact)?;
        for s in &g.satellite_facts {
            writeln!(out, "  satellite {s}")?;
        }
        writeln!(
            out,
            "  bridge {} {}",
            g.document_bridge.fact,
            g.document_bridge.cardinality.keyword()
        )?;
        writeln!(out, "}}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_schema, SourceText};
    use crate::model::{
        Aggregability, Attribute, Dimension, FactTable, GrainEntry, Hierarchy, Level, Measure,
        ValueKind,
    };
    use proptest::prelude::*;

    #[test]
    fn declaration_order_does_not_change_text() {
        let text = "\
schema t version 3
fact b {
  grain y y
  measure v integer
}
dimension y {
  naturalkey k
  k text
}
fact a {
  grain y y
  measure v decimal semi-additive
}
";
        let s = parse_schema(&SourceText::inline(text)).unwrap();
        let mut shuffled = s.clone();
        shuffled.fact_tables.reverse();
        let one = serialize_schema(&s).unwrap();
        assert_eq!(one, serialize_schema(&shuffled).unwrap());
        assert!(one.find("fact a").unwrap() < one.find("fact b").unwrap());
        assert!(one.contains("  measure v decimal semi-additive\n"));
    }

    #[test]
    fn invalid_schema_is_refused() {
        let mut s = Schema::new("t");
        s.dimensions.push(Dimension {
            name: "d".into(),
            natural_key: vec!["k".into()],
            attributes: vec![Attribute::new("k", ValueKind::Text)],
            hierarchies: vec![Hierarchy {
                name: "h".into(),
                levels: vec![],
            }],
        });
        s.fact_tables.push(FactTable {
            name: "f".into(),
            grain: vec![GrainEntry {
                dimension: "d".into(),
                level: "d".into(),
            }],
            measures: vec![Measure::new("v", ValueKind::Decimal)],
        });
        assert!(matches!(serialize_schema(&s), Err(SchemaError::Invalid(_))));
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9]{0,5}(-[a-z0-9]{1,3})?".prop_filter("keyword", |s| {
            crate::model::is_identifier(s)
        })
    }

    prop_compose! {
        fn arb_dimension(name: String)(
            attrs in prop::collection::btree_set(ident(), 1..5),
            kinds in prop::collection::vec(0usize..5, 5),
            outriggers in prop::collection::vec(any::<bool>(), 5),
            with_hierarchy in any::<bool>(),
        ) -> Dimension {
            let attrs: Vec<String> = attrs.into_iter().collect();
            let attributes: Vec<Attribute> = attrs.iter().enumerate().map(|(i, a)| Attribute {
                name: a.clone(),
                kind: ValueKind::ALL[kinds[i]],
                outrigger: outriggers[i] && i > 0,
            }).collect();
            let hierarchies = if with_hierarchy && attrs.len() >= 2 {
                vec![Hierarchy {
                    name: "path".into(),
                    levels: attrs.iter().enumerate().map(|(i, a)| Level::new(format!("l{i}"), [a.clone()])).collect(),
                }]
            } else {
                vec![]
            };
            Dimension { name: name.clone(), natural_key: vec![attrs[0].clone()], attributes, hierarchies }
        }
    }

    fn arb_schema() -> impl Strategy<Value = Schema> {
        (prop::collection::btree_set(ident(), 1..4), 1u64..50)
            .prop_flat_map(|(names, version)| {
                let names: Vec<String> = names.into_iter().collect();
                let dims: Vec<_> = names
                    .iter()
                    .map(|n| arb_dimension(format!("d-{n}")))
                    .collect();
                (dims, Just(version), 1usize..4, any::<u8>())
            })
            .prop_map(|(dims, version, nfacts, mix)| {
                let mut s = Schema::new("gen");
                s.version = version;
                for i in 0..nfacts {
                    let grain = dims
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| (usize::from(mix) + i + j) % 2 == 0 || *j == 0)
                        .map(|(_, d)| GrainEntry {
                            dimension: d.name.clone(),
                            level: d.name.clone(),
                        })
                        .collect();
                    s.fact_tables.push(FactTable {
                        name: format!("f{i}"),
                        grain,
                        measures: vec![
                            Measure::new("amount", ValueKind::Decimal),
                            Measure {
                                name: "note".into(),
                                kind: ValueKind::Text,
                                aggregability: Aggregability::NonAdditive,
                            },
                        ],
                    });
                }
                s.dimensions = dims;
                s
            })
    }

    proptest! {
        #[test]
        fn round_trip(s in arb_schema()) {
            prop_assume!(s.validate().is_valid());
            let text = serialize_schema(&s).unwrap();
            let back = parse_schema(&SourceText::inline(text.clone())).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(serialize_schema(&back).unwrap(), text);
        }

        #[test]
        fn parser_is_total(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
            let text = String::from_utf8_lossy(&bytes).into_owned();
            let _ = parse_schema(&SourceText::inline(text));
        }
    }
}
