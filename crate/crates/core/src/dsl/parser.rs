use std::collections::HashMap;

use super::lexer::{tokenize, Keyword, Token, TokenKind};
use super::{Diagnostic, Pos, SourceText};
use crate::model::{
    validate_schema, Aggregability, Attribute, Cardinality, ComplexFactGroup, Dimension,
    DocumentBridge, FactTable, GrainEntry, Hierarchy, Level, Location, Measure, Schema, Segment,
    ValueKind,
};

type PResult<T> = Result<T, Diagnostic>;

/// Parses schema text. On failure returns every diagnostic found; lexical and
/// syntax errors stop at the first one, reference errors are all reported.
pub fn parse_schema(src: &SourceText) -> Result<Schema, Vec<Diagnostic>> {
    let (schema, diags) = check_schema(src);
    match schema {
        Some(s) if diags.iter().all(|d| !d.is_error()) => Ok(s),
        _ => Err(diags.into_iter().filter(Diagnostic::is_error).collect()),
    }
}

/// Like [`parse_schema`] but also returns warnings alongside a valid schema.
pub fn check_schema(src: &SourceText) -> (Option<Schema>, Vec<Diagnostic>) {
    let tokens = match tokenize(&src.text) {
        Ok(t) => t,
        Err(d) => return (None, vec![d]),
    };
    let mut parser = Parser {
        tokens: &tokens,
        at: 0,
        spans: HashMap::new(),
    };
    let schema = match parser.file() {
        Ok(s) => s,
        Err(d) => return (None, vec![d]),
    };

    let report = validate_schema(&schema);
    let mut diags: Vec<Diagnostic> = report
        .violations
        .iter()
        .map(|v| {
            let prefix = if v.rule.is_duplicate() {
                "duplicate declaration"
            } else if v.rule.is_dangling() {
                "dangling reference"
            } else {
                "invalid schema"
            };
            Diagnostic::error(
                parser.position_of(&v.location),
                format!("{prefix}: {}", v.message),
            )
        })
        .collect();

    if diags.is_empty() {
        for (index, dim) in schema.dimensions.iter().enumerate() {
            if !schema.fact_tables.iter().any(|f| f.grain_index(&dim.name).is_some()) {
                let loc = Location::root().child(Segment::Dimension {
                    index,
                    name: dim.name.clone(),
                });
                diags.push(Diagnostic::warning(
                    parser.position_of(&loc),
                    format!("dimension `{}` is not used by any fact table", dim.name),
                ));
            }
        }
    }
    diags.sort_by_key(|d| (d.pos, !d.is_error()));
    let ok = diags.iter().all(|d| !d.is_error());
    (ok.then_some(schema), diags)
}

struct Parser<'t> {
    tokens: &'t [Token],
    at: usize,
    spans: HashMap<Location, Pos>,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &'t Token {
        &self.tokens[self.at.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> &'t Token {
        let tok = self.peek();
        if self.at < self.tokens.len() - 1 {
            self.at += 1;
        }
        tok
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        let tok = self.peek();
        Err(Diagnostic::error(
            tok.pos,
            format!("syntax error: expected {expected}, found {}", tok.kind),
        ))
    }

    fn position_of(&self, loc: &Location) -> Pos {
        let mut path = loc.clone();
        loop {
            if let Some(p) = self.spans.get(&path) {
                return *p;
            }
            if path.0.pop().is_none() {
                return Pos { line: 1, column: 1 };
            }
        }
    }

    fn skip_newlines(&mut self) {
        while self.peek().kind == TokenKind::Newline {
            self.bump();
        }
    }

    fn keyword(&mut self, kw: Keyword) -> PResult<Pos> {
        match &self.peek().kind {
            TokenKind::Keyword(k) if *k == kw => Ok(self.bump().pos),
            _ => self.unexpected(&format!("`{}`", kw.as_str())),
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        match &self.peek().kind {
            TokenKind::Ident(name) => {
                let pos = self.bump().pos;
                Ok((name.clone(), pos))
            }
            _ => self.unexpected(what),
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek().kind {
            TokenKind::Newline => {
                self.bump();
                Ok(())
            }
            TokenKind::Eof => Ok(()),
            _ => self.unexpected("end of line"),
        }
    }

    fn open_block(&mut self) -> PResult<()> {
        match self.peek().kind {
            TokenKind::LBrace => {
                self.bump();
            }
            _ => return self.unexpected("`{`"),
        }
        match self.peek().kind {
            TokenKind::Newline => {
                self.bump();
                Ok(())
            }
            _ => self.unexpected("end of line after `{`"),
        }
    }

    /// Consumes `}` and the line end after it, if present. Returns false when the
    /// next token does not close the block.
    fn close_block(&mut self, opener: &str, opened_at: Pos) -> PResult<bool> {
        match self.peek().kind {
            TokenKind::RBrace => {
                self.bump();
                self.end_of_line()?;
                Ok(true)
            }
            TokenKind::Eof => Err(Diagnostic::error(
                opened_at,
                format!("syntax error: unclosed block `{opener}`"),
            )),
            _ => Ok(false),
        }
    }

    fn file(&mut self) -> PResult<Schema> {
        self.skip_newlines();
        let header = self.keyword(Keyword::Schema)?;
        let (name, _) = self.ident("schema name")?;
        self.keyword(Keyword::Version)?;
        let version = match self.peek().kind {
            TokenKind::Integer(n) => {
                self.bump();
                n
            }
            _ => return self.unexpected("version number"),
        };
        self.end_of_line()?;
        self.spans.insert(Location::root(), header);

        let mut schema = Schema::new(name);
        schema.version = version;
        loop {
            self.skip_newlines();
            match &self.peek().kind {
                TokenKind::Eof => break,
                TokenKind::Keyword(Keyword::Dimension) => {
                    let dim = self.dimension(schema.dimensions.len())?;
                    schema.dimensions.push(dim);
                }
                TokenKind::Keyword(Keyword::Fact) => {
                    let fact = self.fact(schema.fact_tables.len())?;
                    schema.fact_tables.push(fact);
                }
                TokenKind::Keyword(Keyword::Group) => {
                    let group = self.group(schema.complex_groups.len())?;
                    schema.complex_groups.push(group);
                }
                _ => return self.unexpected("`dimension`, `fact` or `group`"),
            }
        }
        Ok(schema)
    }

    fn dimension(&mut self, index: usize) -> PResult<Dimension> {
        let opened = self.keyword(Keyword::Dimension)?;
        let (name, name_pos) = self.ident("dimension name")?;
        let loc = Location::root().child(Segment::Dimension {
            index,
            name: name.clone(),
        });
        self.spans.insert(loc.clone(), name_pos);
        self.open_block()?;

        let mut dim = Dimension {
            name: name.clone(),
            natural_key: Vec::new(),
            attributes: Vec::new(),
            hierarchies: Vec::new(),
        };
        let mut key_declared: Option<Pos> = None;
        let opener = format!("dimension {name}");
        loop {
            self.skip_newlines();
            if self.close_block(&opener, opened)? {
                break;
            }
            match &self.peek().kind {
                TokenKind::Keyword(Keyword::NaturalKey) => {
                    let pos = self.bump().pos;
                    if key_declared.is_some() {
                        return Err(Diagnostic::error(
                            pos,
                            format!("duplicate declaration: `naturalkey` of `{name}` is declared twice"),
                        ));
                    }
                    key_declared = Some(pos);
                    loop {
                        let (part, part_pos) = self.ident("natural key attribute")?;
                        self.spans.insert(
                            loc.child(Segment::NaturalKey {
                                index: dim.natural_key.len(),
                                name: part.clone(),
                            }),
                            part_pos,
                        );
                        dim.natural_key.push(part);
                        if !matches!(self.peek().kind, TokenKind::Ident(_)) {
                            break;
                        }
                    }
                    self.end_of_line()?;
                }
                TokenKind::Keyword(Keyword::Hierarchy) => {
                    let h = self.hierarchy(&loc, dim.hierarchies.len())?;
                    dim.hierarchies.push(h);
                }
                TokenKind::Ident(_) => {
                    let (attr, attr_pos) = self.ident("attribute name")?;
                    let kind = self.value_kind()?;
                    let outrigger = if self.peek().kind == TokenKind::Keyword(Keyword::Outrigger) {
                        self.bump();
                        true
                    } else {
                        false
                    };
                    self.end_of_line()?;
                    self.spans.insert(
                        loc.child(Segment::Attribute {
                            index: dim.attributes.len(),
                            name: attr.clone(),
                        }),
                        attr_pos,
                    );
                    dim.attributes.push(Attribute {
                        name: attr,
                        kind,
                        outrigger,
                    });
                }
                _ => {
                    return self.unexpected("attribute, `naturalkey`, `hierarchy` or `}`");
                }
            }
        }
        Ok(dim)
    }

    fn value_kind(&mut self) -> PResult<ValueKind> {
        let tok = self.peek();
        match &tok.kind {
            TokenKind::Ident(word) => match ValueKind::from_keyword(word) {
                Some(kind) => {
                    self.bump();
                    Ok(kind)
                }
                None => Err(Diagnostic::error(
                    tok.pos,
                    format!("syntax error: unknown value kind `{word}`"),
                )),
            },
            _ => self.unexpected("value kind"),
        }
    }

    fn hierarchy(&mut self, dim_loc: &Location, index: usize) -> PResult<Hierarchy> {
        let opened = self.keyword(Keyword::Hierarchy)?;
        let (name, name_pos) = self.ident("hierarchy name")?;
        let loc = dim_loc.child(Segment::Hierarchy {
            index,
            name: name.clone(),
        });
        self.spans.insert(loc.clone(), name_pos);
        self.open_block()?;
        let opener = format!("hierarchy {name}");
        let mut levels = Vec::new();
        loop {
            self.skip_newlines();
            if self.close_block(&opener, opened)? {
                break;
            }
            if self.peek().kind != TokenKind::Keyword(Keyword::Level) {
                return self.unexpected("`level` or `}`");
            }
            self.bump();
            let (level_name, level_pos) = self.ident("level name")?;
            let level_loc = loc.child(Segment::Level {
                index: levels.len(),
                name: level_name.clone(),
            });
            self.spans.insert(level_loc.clone(), level_pos);
            let mut attrs = Vec::new();
            loop {
                let (attr, attr_pos) = self.ident("bound attribute")?;
                self.spans.insert(
                    level_loc.child(Segment::LevelAttribute {
                        index: attrs.len(),
                        name: attr.clone(),
                    }),
                    attr_pos,
                );
                attrs.push(attr);
                if !matches!(self.peek().kind, TokenKind::Ident(_)) {
                    break;
                }
            }
            self.end_of_line()?;
            levels.push(Level {
                name: level_name,
                bound_attributes: attrs,
            });
        }
        Ok(Hierarchy { name, levels })
    }

    fn fact(&mut self, index: usize) -> PResult<FactTable> {
        let opened = self.keyword(Keyword::Fact)?;
        let (name, name_pos) = self.ident("fact name")?;
        let loc = Location::root().child(Segment::Fact {
            index,
            name: name.clone(),
        });
        self.spans.insert(loc.clone(), name_pos);
        self.open_block()?;
        let opener = format!("fact {name}");
        let mut fact = FactTable {
            name,
            grain: Vec::new(),
            measures: Vec::new(),
        };
        loop {
            self.skip_newlines();
            if self.close_block(&opener, opened)? {
                break;
            }
            match self.peek().kind {
                TokenKind::Keyword(Keyword::Grain) => {
                    self.bump();
                    let (dimension, dim_pos) = self.ident("dimension name")?;
                    let (level, _) = self.ident("level name")?;
                    self.end_of_line()?;
                    self.spans.insert(
                        loc.child(Segment::Grain {
                            index: fact.grain.len(),
                            name: dimension.clone(),
                        }),
                        dim_pos,
                    );
                    fact.grain.push(GrainEntry { dimension, level });
                }
                TokenKind::Keyword(Keyword::Measure) => {
                    self.bump();
                    let (measure, m_pos) = self.ident("measure name")?;
                    let kind = self.value_kind()?;
                    let aggregability = match &self.peek().kind {
                        TokenKind::Ident(word) => match Aggregability::from_keyword(word) {
                            Some(a) => {
                                self.bump();
                                a
                            }
                            None => {
                                return Err(Diagnostic::error(
                                    self.peek().pos,
                                    format!("syntax error: unknown aggregability `{word}`"),
                                ))
                            }
                        },
                        _ => Aggregability::default_for(kind),
                    };
                    self.end_of_line()?;
                    self.spans.insert(
                        loc.child(Segment::Measure {
                            index: fact.measures.len(),
                            name: measure.clone(),
                        }),
                        m_pos,
                    );
                    fact.measures.push(Measure {
                        name: measure,
                        kind,
                        aggregability,
                    });
                }
                _ => return self.unexpected("`grain`, `measure` or `}`"),
            }
        }
        Ok(fact)
    }

    fn group(&mut self, index: usize) -> PResult<ComplexFactGroup> {
        let opened = self.keyword(Keyword::Group)?;
        let (name, name_pos) = self.ident("group name")?;
        let loc = Location::root().child(Segment::Group {
            index,
            name: name.clone(),
        });
        self.spans.insert(loc.clone(), name_pos);
        self.open_block()?;
        let opener = format!("group {name}");
        let mut central: Option<String> = None;
        let mut bridge: Option<DocumentBridge> = None;
        let mut satellites: Vec<String> = Vec::new();
        loop {
            self.skip_newlines();
            if self.close_block(&opener, opened)? {
                break;
            }
            let stmt = self.peek();
            match stmt.kind {
                TokenKind::Keyword(Keyword::Central) => {
                    self.bump();
                    let (fact, pos) = self.ident("fact name")?;
                    self.end_of_line()?;
                    if central.is_some() {
                        return Err(Diagnostic::error(
                            stmt.pos,
                            format!("duplicate declaration: group `{name}` has two central facts"),
                        ));
                    }
                    self.spans
                        .insert(loc.child(Segment::Central { name: fact.clone() }), pos);
                    central = Some(fact);
                }
                TokenKind::Keyword(Keyword::Satellite) => {
                    self.bump();
                    let (fact, pos) = self.ident("fact name")?;
                    self.end_of_line()?;
                    self.spans.insert(
                        loc.child(Segment::Satellite {
                            index: satellites.len(),
                            name: fact.clone(),
                        }),
                        pos,
                    );
                    satellites.push(fact);
                }
                TokenKind::Keyword(Keyword::Bridge) => {
                    self.bump();
                    let (fact, pos) = self.ident("fact name")?;
                    let card_tok = self.peek();
                    let cardinality = match &card_tok.kind {
                        TokenKind::Ident(w) => Cardinality::from_keyword(w).ok_or_else(|| {
                            Diagnostic::error(
                                card_tok.pos,
                                format!("syntax error: unknown cardinality `{w}`"),
                            )
                        })?,
                        _ => return self.unexpected("cardinality"),
                    };
                    self.bump();
                    self.end_of_line()?;
                    if bridge.is_some() {
                        return Err(Diagnostic::error(
                            stmt.pos,
                            format!("duplicate declaration: group `{name}` has two bridges"),
                        ));
                    }
                    self.spans
                        .insert(loc.child(Segment::Bridge { name: fact.clone() }), pos);
                    bridge = Some(DocumentBridge { fact, cardinality });
                }
                _ => return self.unexpected("`central`, `satellite`, `bridge` or `}`"),
            }
        }
        let missing = |what: &str| {
            Diagnostic::error(
                name_pos,
                format!("syntax error: group `{name}` declares no {what}"),
            )
        };
        let central_fact = central.ok_or_else(|| missing("central fact"))?;
        let document_bridge = bridge.ok_or_else(|| missing("document bridge"))?;
        Ok(ComplexFactGroup {
            name,
            central_fact,
            satellite_facts: satellites,
            document_bridge,
        })
    }
}
