//! `sources.manifest`: a key=value file with one `[section]` per source.
//!
//! ```text
//! [mapping]
//! synonyms = mapping/synonyms.csv
//! units = mapping/units.csv
//! canonical-units = mapping/canonical_units.csv
//! intervals = mapping/intervals.csv
//!
//! [facts lab-a]
//! uri = lab-a.csv
//! fact = biological
//! delimiter = ;
//! provider = LAB-A
//! key.patient.code = Patient
//! label = Analyse
//! value = Resultat
//! unit = Unite
//! timestamp = Date
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};

use super::EtlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Utf8,
    Latin1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFormat {
    pub delimiter: u8,
    pub quote: u8,
    pub header: bool,
    pub encoding: Encoding,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            quote: b'"',
            header: true,
            encoding: Encoding::Utf8,
        }
    }
}

/// A source column, by header name or by 1-based position (`#3`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Name(String),
    Index(usize),
}

impl Column {
    pub fn parse(raw: &str) -> Result<Self, String> {
        match raw.strip_prefix('#') {
            Some(n) => match n.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(Column::Index(i)),
                _ => Err(format!("bad column position `{raw}`")),
            },
            None if raw.is_empty() => Err("empty column name".into()),
            None => Ok(Column::Name(raw.to_string())),
        }
    }

    /// Position of the column in a record, given the header when present.
    pub fn resolve(&self, header: Option<&[String]>) -> Option<usize> {
        match self {
            Column::Index(i) => Some(i - 1),
            Column::Name(n) => header?.iter().position(|h| h.trim() == n),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Name(n) => f.write_str(n),
            Column::Index(i) => write!(f, "#{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    Column(Column),
    Constant(String),
}

/// Feeds one attribute of one dimension from a column or a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeBinding {
    pub dimension: String,
    pub attribute: String,
    pub source: Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Dimension,
    Facts,
    Documents,
}

impl SourceKind {
    fn keyword(self) -> &'static str {
        match self {
            SourceKind::Dimension => "dimension",
            SourceKind::Facts => "facts",
            SourceKind::Documents => "documents",
        }
    }
}

/// Warehouse roles mapped to source columns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnMap {
    pub attributes: Vec<AttributeBinding>,
    /// Raw analysis label, normalized through the synonym table.
    pub label: Option<Column>,
    /// Raw numeric result, converted to the analysis' canonical unit.
    pub value: Option<Column>,
    pub unit: Option<Column>,
    pub timestamp: Option<Column>,
    pub session: Option<Column>,
    /// Other measures read verbatim.
    pub measures: Vec<(String, Column)>,
    /// Document sources: column holding the file path.
    pub file: Option<Column>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDescriptor {
    pub name: String,
    pub kind: SourceKind,
    /// Resolved path of the delimited file.
    pub path: PathBuf,
    /// The `uri` as written in the manifest; part of the batch identity.
    pub uri: String,
    pub format: CsvFormat,
    pub columns: ColumnMap,
    /// Natural key of the data provider for every row of this source.
    pub provider: Option<String>,
    /// Fact table for `facts` and `documents` sources, dimension for `dimension` ones.
    pub target: String,
    /// Measure receiving the converted `value` column.
    pub value_measure: String,
    pub media_type: Option<String>,
    pub analysis_dimension: String,
    pub provider_dimension: String,
    pub time_dimension: String,
}

impl SourceDescriptor {
    /// A fact source reading `path` with default format and dimension names.
    pub fn facts(name: &str, path: &Path, fact: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: SourceKind::Facts,
            path: path.to_path_buf(),
            uri: path.display().to_string(),
            format: CsvFormat::default(),
            columns: ColumnMap::default(),
            provider: None,
            target: fact.to_string(),
            value_measure: "value".to_string(),
            media_type: None,
            analysis_dimension: "medical-analysis".to_string(),
            provider_dimension: "data-provider".to_string(),
            time_dimension: "time".to_string(),
        }
    }

    /// Identity of the load target inside the batch hash.
    pub fn batch_target(&self) -> String {
        match self.kind {
            SourceKind::Facts => self.target.clone(),
            other => format!("{} {}", other.keyword(), self.target),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingPaths {
    pub synonyms: Option<PathBuf>,
    pub units: Option<PathBuf>,
    pub canonical_units: Option<PathBuf>,
    pub intervals: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcesManifest {
    pub path: PathBuf,
    pub mapping: MappingPaths,
    /// In manifest order.
    pub sources: Vec<SourceDescriptor>,
}

impl SourcesManifest {
    pub fn read(path: &Path) -> Result<Self, EtlError> {
        let text = std::fs::read_to_string(path).map_err(|e| EtlError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Dimension sources first, then facts, then documents; manifest order otherwise.
    pub fn load_order(&self) -> Vec<&SourceDescriptor> {
        let mut v: Vec<&SourceDescriptor> = self.sources.iter().collect();
        v.sort_by_key(|s| s.kind as u8);
        v
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, EtlError> {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let err = |line: usize, message: String| EtlError::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut mapping = MappingPaths::default();
        let mut sources: Vec<SourceDescriptor> = Vec::new();
        // None before the first section, Some(None) inside [mapping].
        let mut current: Option<Option<usize>> = None;
        let mut has_uri: Vec<bool> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(inner) = trimmed.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "unterminated section header".into()))?;
                let mut words = inner.split_whitespace();
                let kind = words.next().unwrap_or("");
                if kind == "mapping" {
                    current = Some(None);
                    continue;
                }
                let kind = match kind {
                    "dimension" => SourceKind::Dimension,
                    "facts" => SourceKind::Facts,
                    "document" | "documents" => SourceKind::Documents,
                    other => return Err(err(line, format!("unknown section kind `{other}`"))),
                };
                let name = words
                    .next()
                    .ok_or_else(|| err(line, "section needs a name".into()))?;
                if words.next().is_some() {
                    return Err(err(line, "section header has extra words".into()));
                }
                if sources.iter().any(|s| s.name == name) {
                    return Err(err(line, format!("source `{name}` declared twice")));
                }
                let mut src = SourceDescriptor::facts(name, Path::new(""), "");
                src.kind = kind;
                if kind == SourceKind::Dimension {
                    src.target = name.to_string();
                }
                sources.push(src);
                has_uri.push(false);
                current = Some(Some(sources.len() - 1));
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{trimmed}`")))?;
            match current {
                None => return Err(err(line, "entry outside of any section".into())),
                Some(None) => {
                    let p = Some(dir.join(value));
                    match key {
                        "synonyms" => mapping.synonyms = p,
                        "units" => mapping.units = p,
                        "canonical-units" => mapping.canonical_units = p,
                        "intervals" => mapping.intervals = p,
                        other => return Err(err(line, format!("unknown mapping key `{other}`"))),
                    }
                }
                Some(Some(idx)) => {
                    if key == "uri" {
                        has_uri[idx] = true;
                    }
                    apply_entry(&mut sources[idx], dir, key, value).map_err(|m| err(line, m))?;
                }
            }
        }
        for (src, has) in sources.iter().zip(&has_uri) {
            if !has {
                return Err(err(0, format!("source `{}` has no uri", src.name)));
            }
            if src.target.is_empty() {
                return Err(err(0, format!("source `{}` names no fact table", src.name)));
            }
            if src.kind == SourceKind::Documents && src.columns.file.is_none() {
                return Err(err(0, format!("document source `{}` has no file column", src.name)));
            }
        }
        Ok(SourcesManifest {
            path: path.to_path_buf(),
            mapping,
            sources,
        })
    }
}

fn single_byte(key: &str, value: &str) -> Result<u8, String> {
    match value {
        "tab" | "\\t" => Ok(b'\t'),
        v if v.len() == 1 => Ok(v.as_bytes()[0]),
        _ => Err(format!("`{key}` must be a single ASCII character, found `{value}`")),
    }
}

fn dim_attr<'a>(key: &str, rest: &'a str) -> Result<(&'a str, &'a str), String> {
    rest.split_once('.')
        .filter(|(d, a)| !d.is_empty() && !a.is_empty())
        .ok_or_else(|| format!("`{key}` must look like `{{prefix}}.<dimension>.<attribute>`"))
}

fn apply_entry(src: &mut SourceDescriptor, dir: &Path, key: &str, value: &str) -> Result<(), String> {
    let column = || Column::parse(value);
    let c = &mut src.columns;
    match key {
        "uri" => {
            src.uri = value.to_string();
            src.path = dir.join(value);
        }
        "delimiter" => src.format.delimiter = single_byte(key, value)?,
        "quote" => src.format.quote = single_byte(key, value)?,
        "header" => {
            src.format.header = match value {
                "true" | "yes" => true,
                "false" | "no" => false,
                _ => return Err(format!("`header` must be true or false, found `{value}`")),
            }
        }
        "encoding" => {
            src.format.encoding = match value.to_ascii_lowercase().as_str() {
                "utf-8" | "utf8" => Encoding::Utf8,
                "latin-1" | "latin1" | "iso-8859-1" => Encoding::Latin1,
                _ => return Err(format!("unsupported encoding `{value}`")),
            }
        }
        "fact" => src.target = value.to_string(),
        "provider" => src.provider = Some(value.to_string()),
        "label" => c.label = Some(column()?),
        "value" => c.value = Some(column()?),
        "unit" => c.unit = Some(column()?),
        "timestamp" => c.timestamp = Some(column()?),
        "session" => c.session = Some(column()?),
        "file" => c.file = Some(column()?),
        "media-type" => src.media_type = Some(value.to_string()),
        "measure" => src.value_measure = value.to_string(),
        "analysis-dimension" => src.analysis_dimension = value.to_string(),
        "provider-dimension" => src.provider_dimension = value.to_string(),
        "time-dimension" => src.time_dimension = value.to_string(),
        _ => {
            if let Some(name) = key.strip_prefix("measure.") {
                c.measures.push((name.to_string(), column()?));
                return Ok(());
            }
            let (rest, constant) = if let Some(r) = key.strip_prefix("const.") {
                (r, true)
            } else if let Some(r) = key.strip_prefix("key.").or_else(|| key.strip_prefix("attr.")) {
                (r, false)
            } else {
                return Err(format!("unknown source key `{key}`"));
            };
            let (dimension, attribute) = dim_attr(key, rest)?;
            c.attributes.push(AttributeBinding {
                dimension: dimension.to_string(),
                attribute: attribute.to_string(),
                source: if constant {
                    Binding::Constant(value.to_string())
                } else {
                    Binding::Column(column()?)
                },
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "\
# sources
[mapping]
synonyms = map/syn.csv

[facts lab-a]
uri = a.csv
fact = biological
delimiter = ;
provider = LAB-A
key.patient.code = Patient
const.data-provider.name = Lab A
label = Analyse
value = #4

[dimension patient]
uri = patients.csv
key.patient.code = code
attr.patient.sport = sport
";

    #[test]
    fn parses_sections() {
        let m = SourcesManifest::parse(TEXT, Path::new("/w/sources.manifest")).unwrap();
        assert_eq!(m.mapping.synonyms.as_deref(), Some(Path::new("/w/map/syn.csv")));
        assert_eq!(m.sources.len(), 2);
        let a = &m.sources[0];
        assert_eq!(a.path, Path::new("/w/a.csv"));
        assert_eq!(a.format.delimiter, b';');
        assert_eq!(a.columns.value, Some(Column::Index(4)));
        assert_eq!(a.columns.attributes.len(), 2);
        assert_eq!(
            a.columns.attributes[1].source,
            Binding::Constant("Lab A".into())
        );
        let order: Vec<&str> = m.load_order().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(order, ["patient", "lab-a"]);
        assert_eq!(m.sources[1].batch_target(), "dimension patient");
    }

    #[test]
    fn errors_carry_lines() {
        let bad = "[facts x]\nuri = a.csv\nfact = f\nwhatever = 1\n";
        match SourcesManifest::parse(bad, Path::new("m")) {
            Err(EtlError::Manifest { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SourcesManifest::parse("[facts x]\nfact = f\n", Path::new("m")).is_err());
        assert!(SourcesManifest::parse("k = v\n", Path::new("m")).is_err());
    }
}
