//! Extraction of delimited sources, harmonization through [`MappingRules`],
//! member resolution and atomic batch loading.
//!
//! One load is one source file into one target. Rows that cannot be
//! harmonized are rejected with their provenance and the load carries on;
//! accepted rows become visible together when the batch commits.

mod extract;
mod source;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use extract::{batch_id, extract_rows, Extracted, Extraction, Provenance, RawRecord, Rejection};
pub use source::{
    AttributeBinding, Binding, Column, ColumnMap, CsvFormat, Encoding, MappingPaths, SourceDescriptor,
    SourceKind, SourcesManifest,
};

use crate::mapping::{self, MappingError, MappingRules, ReferenceInterval};
use crate::model::{Dimension, Schema, ValueKind};
use crate::store::{BatchId, Catalog, StoreError, WriteTxn};
use crate::value::{parse_decimal, parse_timestamp, parse_date, Value};

#[derive(Debug, thiserror::Error)]
pub enum EtlError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{uri}: {message}")]
    Csv { uri: String, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("source `{source_name}`: {message}")]
    Config { source_name: String, message: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Store(StoreError),
    #[error("duplicate batch: source `{source_name}` is already loaded as batch {batch}")]
    DuplicateBatch { source_name: String, batch: BatchId },
    #[error("document payload is empty")]
    EmptyPayload,
    #[error("schema: {0}")]
    Schema(String),
}

impl EtlError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EtlError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(uri: &str, e: csv::Error) -> Self {
        EtlError::Csv {
            uri: uri.to_string(),
            message: e.to_string(),
        }
    }

    fn config(src: &SourceDescriptor, message: impl Into<String>) -> Self {
        EtlError::Config {
            source_name: src.name.clone(),
            message: message.into(),
        }
    }
}

impl From<StoreError> for EtlError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DuplicateBatch(batch) => EtlError::DuplicateBatch {
                source_name: String::new(),
                batch,
            },
            other => EtlError::Store(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub source: String,
    pub target: String,
    pub batch_id: BatchId,
    pub accepted: u64,
    pub rejected: Vec<Rejection>,
    pub members_created: BTreeMap<String, u64>,
    pub members_updated: BTreeMap<String, u64>,
    pub documents_created: u64,
    pub links_created: u64,
}

impl LoadReport {
    fn new(src: &SourceDescriptor, batch_id: BatchId) -> Self {
        Self {
            source: src.name.clone(),
            target: src.target.clone(),
            batch_id,
            accepted: 0,
            rejected: Vec::new(),
            members_created: BTreeMap::new(),
            members_updated: BTreeMap::new(),
            documents_created: 0,
            links_created: 0,
        }
    }

    /// Data records read from the source: accepted plus rejected.
    pub fn records_read(&self) -> u64 {
        self.accepted + self.rejected.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberOutcome {
    Existing,
    Created,
    Updated,
}

/// Looks a member up by its natural key, inserting it with the next dense key
/// when absent. Non-null attributes that differ from the stored ones overwrite
/// them in place.
pub fn resolve_dimension_member(
    txn: &mut WriteTxn<'_>,
    dimension: &str,
    attrs: &BTreeMap<String, Value>,
) -> Result<(u64, MemberOutcome), EtlError> {
    let schema = txn.schema()?.clone();
    let dim = schema
        .dimension(dimension)
        .ok_or_else(|| StoreError::UnknownDimension(dimension.to_string()))?;
    for name in attrs.keys() {
        if dim.attribute(name).is_none() {
            return Err(EtlError::Schema(format!(
                "dimension `{dimension}` has no attribute `{name}`"
            )));
        }
    }
    let mut natural = Vec::with_capacity(dim.natural_key.len());
    for k in &dim.natural_key {
        match attrs.get(k) {
            Some(v) if !v.is_null() => natural.push(v.clone()),
            _ => {
                return Err(EtlError::Schema(format!(
                    "incomplete natural key: `{dimension}.{k}` is missing"
                )))
            }
        }
    }
    match txn.lookup_member(dimension, &natural) {
        None => {
            let values = dim
                .attributes
                .iter()
                .map(|a| attrs.get(&a.name).cloned().unwrap_or(Value::Null))
                .collect();
            Ok((txn.insert_member(dimension, values)?, MemberOutcome::Created))
        }
        Some(key) => {
            let current = txn
                .member_values(dimension, key)
                .expect("looked-up member exists")
                .to_vec();
            let merged: Vec<Value> = dim
                .attributes
                .iter()
                .zip(&current)
                .map(|(a, old)| match attrs.get(&a.name) {
                    Some(v) if !v.is_null() => v.clone(),
                    _ => old.clone(),
                })
                .collect();
            if merged == current {
                Ok((key, MemberOutcome::Existing))
            } else {
                txn.update_member(dimension, key, merged)?;
                Ok((key, MemberOutcome::Updated))
            }
        }
    }
}

pub const BEFORE_TRAINING: &str = "before-training";
pub const AFTER_TRAINING: &str = "after-training";
pub const UNSPECIFIED_SESSION: &str = "unspecified";

/// Maps source spellings of the measurement session onto the time dimension's values.
pub fn normalize_session(raw: &str) -> Result<&'static str, String> {
    match mapping::fold_label(raw).as_str() {
        "" | "unspecified" => Ok(UNSPECIFIED_SESSION),
        "before" | "pre" | "am" | "morning" | "before training" | "before-training" => {
            Ok(BEFORE_TRAINING)
        }
        "after" | "post" | "pm" | "evening" | "after training" | "after-training" => {
            Ok(AFTER_TRAINING)
        }
        _ => Err(format!("unknown session `{}`", raw.trim())),
    }
}

/// Attributes of the time member for a source timestamp: `date`, `session`,
/// `month` (`YYYY-MM`) and `year`.
pub fn materialize_time(timestamp: &str, session: Option<&str>) -> Result<BTreeMap<String, Value>, String> {
    let date = parse_date(timestamp.trim())
        .or_else(|| parse_timestamp(timestamp.trim()).map(|t| t.date()))
        .ok_or_else(|| format!("unparseable timestamp `{}`", timestamp.trim()))?;
    let session = normalize_session(session.unwrap_or(""))?;
    let mut out = BTreeMap::new();
    out.insert("date".to_string(), Value::Date(date));
    out.insert("session".to_string(), Value::Text(session.to_string()));
    out.insert(
        "month".to_string(),
        Value::Text(date.format("%Y-%m").to_string()),
    );
    out.insert(
        "year".to_string(),
        Value::Integer(i64::from(chrono::Datelike::year(&date))),
    );
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Analysis,
    Time,
    Provider,
    Plain,
}

#[derive(Debug, Clone)]
enum Feed {
    Column(usize),
    Constant(String),
}

#[derive(Debug)]
struct DimPlan {
    dim: Dimension,
    role: Role,
    feeds: Vec<(String, ValueKind, Feed)>,
}

#[derive(Debug)]
enum MeasureFeed {
    Value,
    Column(usize),
    Absent,
}

/// Column positions and roles resolved once per source file.
#[derive(Debug)]
struct Plan {
    dims: Vec<DimPlan>,
    measures: Vec<(ValueKind, MeasureFeed)>,
    label: Option<usize>,
    value: Option<usize>,
    unit: Option<usize>,
    timestamp: Option<usize>,
    session: Option<usize>,
    file: Option<usize>,
}

fn locate(src: &SourceDescriptor, header: Option<&[String]>, width: Option<usize>, col: &Column) -> Result<usize, EtlError> {
    let idx = col
        .resolve(header)
        .ok_or_else(|| EtlError::config(src, format!("column `{col}` not found")))?;
    if width.is_some_and(|w| idx >= w) {
        return Err(EtlError::config(src, format!("column `{col}` is past the last field")));
    }
    Ok(idx)
}

impl Plan {
    fn build(
        src: &SourceDescriptor,
        schema: &Schema,
        header: Option<&[String]>,
        width: Option<usize>,
    ) -> Result<Plan, EtlError> {
        let opt = |c: &Option<Column>| c.as_ref().map(|c| locate(src, header, width, c)).transpose();
        let dim_names: Vec<String> = match src.kind {
            SourceKind::Facts | SourceKind::Documents => {
                let fact = schema.fact_table(&src.target).ok_or_else(|| {
                    EtlError::config(src, format!("unknown fact table `{}`", src.target))
                })?;
                fact.grain.iter().map(|g| g.dimension.clone()).collect()
            }
            SourceKind::Dimension => {
                let mut names = vec![src.target.clone()];
                for b in &src.columns.attributes {
                    if !names.contains(&b.dimension) {
                        names.push(b.dimension.clone());
                    }
                }
                names
            }
        };

        let mut dims = Vec::new();
        for name in &dim_names {
            let dim = schema
                .dimension(name)
                .ok_or_else(|| EtlError::config(src, format!("unknown dimension `{name}`")))?
                .clone();
            let role = if *name == src.analysis_dimension && src.columns.label.is_some() {
                Role::Analysis
            } else if *name == src.time_dimension && src.columns.timestamp.is_some() {
                Role::Time
            } else if *name == src.provider_dimension && src.provider.is_some() {
                Role::Provider
            } else {
                Role::Plain
            };
            let mut feeds = Vec::new();
            for b in src.columns.attributes.iter().filter(|b| b.dimension == *name) {
                let attr = dim.attribute(&b.attribute).ok_or_else(|| {
                    EtlError::config(src, format!("dimension `{name}` has no attribute `{}`", b.attribute))
                })?;
                let feed = match &b.source {
                    Binding::Column(c) => Feed::Column(locate(src, header, width, c)?),
                    Binding::Constant(v) => Feed::Constant(v.clone()),
                };
                feeds.push((attr.name.clone(), attr.kind, feed));
            }
            let automatic: &[&str] = match role {
                Role::Analysis | Role::Provider => {
                    if dim.natural_key.len() != 1 {
                        return Err(EtlError::config(
                            src,
                            format!("dimension `{name}` needs a single-attribute natural key"),
                        ));
                    }
                    &[]
                }
                Role::Time => &["date", "session", "month", "year"],
                Role::Plain => &[],
            };
            for k in &dim.natural_key {
                let fed = feeds.iter().any(|(a, _, _)| a == k)
                    || automatic.contains(&k.as_str())
                    || matches!(role, Role::Analysis | Role::Provider);
                if !fed {
                    return Err(EtlError::config(
                        src,
                        format!("natural key attribute `{name}.{k}` is not mapped"),
                    ));
                }
            }
            dims.push(DimPlan { dim, role, feeds });
        }
        for b in &src.columns.attributes {
            if !dim_names.contains(&b.dimension) {
                return Err(EtlError::config(
                    src,
                    format!("`{}` is not a dimension of `{}`", b.dimension, src.target),
                ));
            }
        }

        let mut measures = Vec::new();
        if src.kind == SourceKind::Facts {
            let fact = schema.fact_table(&src.target).expect("checked above");
            if src.columns.value.is_some() && fact.measure(&src.value_measure).is_none() {
                return Err(EtlError::config(
                    src,
                    format!("fact `{}` has no measure `{}`", fact.name, src.value_measure),
                ));
            }
            for (name, _) in &src.columns.measures {
                if fact.measure(name).is_none() {
                    return Err(EtlError::config(src, format!("fact `{}` has no measure `{name}`", fact.name)));
                }
            }
            for m in &fact.measures {
                let feed = if src.columns.value.is_some() && m.name == src.value_measure {
                    MeasureFeed::Value
                } else if let Some((_, c)) = src.columns.measures.iter().find(|(n, _)| *n == m.name) {
                    MeasureFeed::Column(locate(src, header, width, c)?)
                } else {
                    MeasureFeed::Absent
                };
                measures.push((m.kind, feed));
            }
        }
        if src.columns.unit.is_some() && src.columns.label.is_none() {
            return Err(EtlError::config(src, "a unit column needs a label column"));
        }

        Ok(Plan {
            dims,
            measures,
            label: opt(&src.columns.label)?,
            value: opt(&src.columns.value)?,
            unit: opt(&src.columns.unit)?,
            timestamp: opt(&src.columns.timestamp)?,
            session: opt(&src.columns.session)?,
            file: opt(&src.columns.file)?,
        })
    }

    /// Member attributes for every planned dimension plus the analysis code,
    /// or the reason the row cannot be harmonized.
    fn members(
        &self,
        src: &SourceDescriptor,
        rules: &MappingRules,
        fields: &[String],
    ) -> Result<(Vec<BTreeMap<String, Value>>, Option<String>), String> {
        let field = |i: usize| fields[i].as_str();
        let mut code = None;
        let mut out = Vec::with_capacity(self.dims.len());
        for plan in &self.dims {
            let dim = &plan.dim;
            let mut attrs = BTreeMap::new();
            match plan.role {
                Role::Analysis => {
                    let raw = field(self.label.expect("analysis role needs a label"));
                    let c = rules.normalize_label(raw).map_err(|e| e.to_string())?;
                    attrs.insert(dim.natural_key[0].clone(), Value::Text(c.to_string()));
                    if let (Some(_), Some(unit)) = (dim.attribute("unit"), rules.canonical_unit(c)) {
                        attrs.insert("unit".into(), Value::Text(unit.to_string()));
                    }
                    if let (Some(_), Some(n)) = (dim.attribute("nomenclature"), rules.nomenclature.get(c)) {
                        attrs.insert("nomenclature".into(), Value::Text(n.clone()));
                    }
                    code = Some(c.to_string());
                }
                Role::Time => {
                    let ts = field(self.timestamp.expect("time role needs a timestamp"));
                    let session = self.session.map(field);
                    for (k, v) in materialize_time(ts, session)? {
                        if let Some(a) = dim.attribute(&k) {
                            let v = v.coerce(a.kind).map_err(|e| e.to_string())?;
                            attrs.insert(k, v);
                        }
                    }
                }
                Role::Provider => {
                    let provider = src.provider.clone().expect("provider role needs a provider");
                    attrs.insert(dim.natural_key[0].clone(), Value::Text(provider));
                }
                Role::Plain => {}
            }
            for (attr, kind, feed) in &plan.feeds {
                let raw = match feed {
                    Feed::Column(i) => field(*i),
                    Feed::Constant(c) => c.as_str(),
                };
                let v = Value::parse(*kind, raw).map_err(|e| format!("{}.{attr}: {e}", dim.name))?;
                if !v.is_null() || !attrs.contains_key(attr) {
                    attrs.insert(attr.clone(), v);
                }
            }
            for k in &dim.natural_key {
                if attrs.get(k).is_none_or(Value::is_null) {
                    return Err(format!("missing natural key `{}.{k}`", dim.name));
                }
            }
            out.push(attrs);
        }
        Ok((out, code))
    }

    fn measures(
        &self,
        rules: &MappingRules,
        fields: &[String],
        code: Option<&str>,
    ) -> Result<Vec<Value>, String> {
        let mut out = Vec::with_capacity(self.measures.len());
        for (kind, feed) in &self.measures {
            let v = match feed {
                MeasureFeed::Absent => Value::Null,
                MeasureFeed::Column(i) => Value::parse(*kind, &fields[*i]).map_err(|e| e.to_string())?,
                MeasureFeed::Value => {
                    let raw = fields[self.value.expect("value feed")].trim();
                    if raw.is_empty() {
                        Value::Null
                    } else {
                        let mut x = parse_decimal(raw).ok_or_else(|| format!("unparseable number `{raw}`"))?;
                        if let (Some(u), Some(code)) = (self.unit, code) {
                            let unit = fields[u].trim();
                            if !unit.is_empty() {
                                x = rules.convert_unit(x, unit, code).map_err(|e| e.to_string())?;
                            }
                        }
                        Value::Decimal(x).coerce(*kind).map_err(|e| e.to_string())?
                    }
                }
            };
            out.push(v);
        }
        Ok(out)
    }
}

#[derive(Default)]
struct MemberTally {
    created: BTreeMap<String, BTreeSet<u64>>,
    updated: BTreeMap<String, BTreeSet<u64>>,
}

impl MemberTally {
    fn record(&mut self, dim: &str, key: u64, outcome: MemberOutcome) {
        match outcome {
            MemberOutcome::Created => {
                self.created.entry(dim.to_string()).or_default().insert(key);
            }
            MemberOutcome::Updated => {
                self.updated.entry(dim.to_string()).or_default().insert(key);
            }
            MemberOutcome::Existing => {}
        }
    }

    /// Members created in this batch are not also counted as updated.
    fn finish(self, report: &mut LoadReport) {
        for (dim, mut keys) in self.updated {
            if let Some(created) = self.created.get(&dim) {
                keys.retain(|k| !created.contains(k));
            }
            if !keys.is_empty() {
                report.members_updated.insert(dim, keys.len() as u64);
            }
        }
        for (dim, keys) in self.created {
            report.members_created.insert(dim, keys.len() as u64);
        }
    }
}

/// Loads one `facts` or `dimension` source as a single batch.
pub fn load_source(
    catalog: &Catalog,
    src: &SourceDescriptor,
    rules: &MappingRules,
) -> Result<LoadReport, EtlError> {
    match src.kind {
        SourceKind::Documents => load_documents(catalog, src),
        _ => load_rows(catalog, src, rules),
    }
}

/// Harmonizes and appends the rows of a fact source.
pub fn load_facts(
    catalog: &Catalog,
    src: &SourceDescriptor,
    rules: &MappingRules,
) -> Result<LoadReport, EtlError> {
    if src.kind != SourceKind::Facts {
        return Err(EtlError::config(src, "not a fact source"));
    }
    load_rows(catalog, src, rules)
}

fn duplicate(src: &SourceDescriptor, batch: BatchId) -> EtlError {
    EtlError::DuplicateBatch {
        source_name: src.name.clone(),
        batch,
    }
}

fn commit(txn: WriteTxn<'_>, src: &SourceDescriptor, batch: BatchId) -> Result<(), EtlError> {
    match txn.commit(Some((batch, &src.name))) {
        Ok(_) => Ok(()),
        Err(StoreError::DuplicateBatch(b)) => Err(duplicate(src, b)),
        Err(e) => Err(EtlError::Store(e)),
    }
}

fn load_rows(catalog: &Catalog, src: &SourceDescriptor, rules: &MappingRules) -> Result<LoadReport, EtlError> {
    let batch = batch_id(src)?;
    let mut txn = catalog.begin()?;
    if txn.base().has_batch(&batch) {
        return Err(duplicate(src, batch));
    }
    let schema = txn.schema()?.clone();
    let mut report = LoadReport::new(src, batch);
    let mut tally = MemberTally::default();
    let mut rows = extract_rows(src)?;
    if src.format.header && rows.header().is_none() {
        // Empty file: nothing to map, but the batch is still registered.
        commit(txn, src, batch)?;
        return Ok(report);
    }
    let plan = Plan::build(src, &schema, rows.header(), rows.width())?;

    for item in rows.by_ref() {
        let record = match item? {
            Extracted::Rejected(r) => {
                report.rejected.push(r);
                continue;
            }
            Extracted::Record(r) => r,
        };
        let reject = |reason: String| Rejection {
            provenance: record.provenance.clone(),
            reason,
        };
        let (members, code) = match plan.members(src, rules, &record.fields) {
            Ok(m) => m,
            Err(reason) => {
                report.rejected.push(reject(reason));
                continue;
            }
        };
        let measures = if src.kind == SourceKind::Facts {
            match plan.measures(rules, &record.fields, code.as_deref()) {
                Ok(m) => m,
                Err(reason) => {
                    report.rejected.push(reject(reason));
                    continue;
                }
            }
        } else {
            Vec::new()
        };
        let mut keys = Vec::with_capacity(members.len());
        for (dp, attrs) in plan.dims.iter().zip(&members) {
            let (key, outcome) = resolve_dimension_member(&mut txn, &dp.dim.name, attrs)?;
            tally.record(&dp.dim.name, key, outcome);
            keys.push(key);
        }
        if src.kind == SourceKind::Facts {
            txn.append_fact(&src.target, batch, keys, measures)?;
        }
        report.accepted += 1;
    }
    commit(txn, src, batch)?;
    tally.finish(&mut report);
    Ok(report)
}

/// Stores one document blob; identical bytes of the same media type keep their id.
pub fn load_document(
    catalog: &Catalog,
    payload: Vec<u8>,
    media_type: &str,
    attributes: BTreeMap<String, String>,
) -> Result<u64, EtlError> {
    if payload.is_empty() {
        return Err(EtlError::EmptyPayload);
    }
    let mut txn = catalog.begin()?;
    let (id, created) = txn.add_document(media_type, payload, attributes);
    if created {
        txn.commit(None)?;
    }
    Ok(id)
}

/// Links a report row of a bridge fact to a document. Returns false when the
/// link already existed.
pub fn link_document(catalog: &Catalog, fact: &str, report: u64, document: u64) -> Result<bool, EtlError> {
    let mut txn = catalog.begin()?;
    let created = txn.link_document(fact, report, document)?;
    if created {
        txn.commit(None)?;
    }
    Ok(created)
}

/// Media type from a file extension, for document sources without `media-type`.
pub fn guess_media_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pdf") => "application/pdf",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("dcm") => "application/dicom",
        Some("txt") => "text/plain",
        Some("csv") => "text/csv",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

/// Reads a document index: each row names a file and the report it belongs
/// to through the natural keys of the bridge fact's grain. Every matching
/// report row is linked to the stored document.
fn load_documents(catalog: &Catalog, src: &SourceDescriptor) -> Result<LoadReport, EtlError> {
    let batch = batch_id(src)?;
    let mut txn = catalog.begin()?;
    if txn.base().has_batch(&batch) {
        return Err(duplicate(src, batch));
    }
    let schema = txn.schema()?.clone();
    let mut report = LoadReport::new(src, batch);
    let mut rows = extract_rows(src)?;
    if src.format.header && rows.header().is_none() {
        // Empty file: nothing to map, but the batch is still registered.
        commit(txn, src, batch)?;
        return Ok(report);
    }
    let plan = Plan::build(src, &schema, rows.header(), rows.width())?;
    let file_col = plan.file.ok_or_else(|| EtlError::config(src, "no file column"))?;
    let base_dir = src.path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    // Labels only matter for resolving analysis codes; documents carry no rules.
    let rules = MappingRules::default();
    let base = txn.base().clone();
    let reports = base.fact_rows(&src.target)?;

    for item in rows.by_ref() {
        let record = match item? {
            Extracted::Rejected(r) => {
                report.rejected.push(r);
                continue;
            }
            Extracted::Record(r) => r,
        };
        let reject = |reason: String| Rejection {
            provenance: record.provenance.clone(),
            reason,
        };
        let members = match plan.members(src, &rules, &record.fields) {
            Ok((m, _)) => m,
            Err(reason) => {
                report.rejected.push(reject(reason));
                continue;
            }
        };
        let mut keys = Vec::new();
        for (dp, attrs) in plan.dims.iter().zip(&members) {
            let natural: Vec<Value> = dp
                .dim
                .natural_key
                .iter()
                .map(|k| attrs[k].clone())
                .collect();
            match txn.lookup_member(&dp.dim.name, &natural) {
                Some(k) => keys.push(k),
                None => break,
            }
        }
        let matching: Vec<u64> = if keys.len() == plan.dims.len() {
            reports.iter().filter(|r| r.keys == keys).map(|r| r.id).collect()
        } else {
            Vec::new()
        };
        if matching.is_empty() {
            report
                .rejected
                .push(reject(format!("no `{}` row matches the document's keys", src.target)));
            continue;
        }
        let rel = record.fields[file_col].trim();
        let path = base_dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| EtlError::io(&path, e))?;
        if bytes.is_empty() {
            report.rejected.push(reject(format!("document `{rel}` is empty")));
            continue;
        }
        let media = src
            .media_type
            .clone()
            .unwrap_or_else(|| guess_media_type(&path).to_string());
        let mut attrs = BTreeMap::new();
        attrs.insert("name".to_string(), rel.to_string());
        let (doc, created) = txn.add_document(&media, bytes, attrs);
        report.documents_created += u64::from(created);
        for r in matching {
            report.links_created += u64::from(txn.link_document(&src.target, r, doc)?);
        }
        report.accepted += 1;
    }
    commit(txn, src, batch)?;
    Ok(report)
}

/// Mapping rules and reference intervals named by a manifest's `[mapping]` section.
pub fn load_rules(manifest: &SourcesManifest) -> Result<(MappingRules, Vec<ReferenceInterval>), EtlError> {
    let none = PathBuf::new();
    let m = &manifest.mapping;
    let rules = MappingRules::load_files(
        m.synonyms.as_ref().unwrap_or(&none),
        m.units.as_ref().unwrap_or(&none),
        m.canonical_units.as_ref().unwrap_or(&none),
    )?;
    rules.ensure_consistent()?;
    let intervals = match &m.intervals {
        Some(p) => mapping::load_intervals(p)?,
        None => Vec::new(),
    };
    Ok((rules, intervals))
}

/// Installs `schema` when the catalog has none or holds an older version, and
/// replaces the stored reference intervals when they differ. Returns whether
/// anything was committed.
pub fn prepare_catalog(
    catalog: &Catalog,
    schema: &Schema,
    intervals: Option<Vec<ReferenceInterval>>,
) -> Result<bool, EtlError> {
    let mut txn = catalog.begin()?;
    let mut changed = false;
    match txn.base().schema().cloned() {
        None => {
            txn.set_schema(schema.clone())?;
            changed = true;
        }
        Some(stored) if *stored == *schema => {}
        Some(stored) if schema.version > stored.version => {
            txn.set_schema(schema.clone())?;
            changed = true;
        }
        Some(stored) => {
            return Err(EtlError::Schema(format!(
                "catalog holds schema `{}` version {} which differs from the given version {}",
                stored.name, stored.version, schema.version
            )))
        }
    }
    if let Some(iv) = intervals {
        if iv.as_slice() != txn.base().intervals() {
            txn.set_intervals(iv);
            changed = true;
        }
    }
    if changed {
        txn.commit(None)?;
    }
    Ok(changed)
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SourceOutcome {
    Loaded(LoadReport),
    /// The identical batch was loaded before; nothing changed.
    Duplicate { source: String, batch: BatchId },
}

/// Loads every source of a manifest in dependency order. Duplicate batches are
/// reported and skipped; any other error stops the run.
pub fn run_manifest(
    catalog: &Catalog,
    manifest: &SourcesManifest,
    rules: &MappingRules,
) -> Result<Vec<SourceOutcome>, EtlError> {
    let mut out = Vec::new();
    for src in manifest.load_order() {
        match load_source(catalog, src, rules) {
            Ok(r) => out.push(SourceOutcome::Loaded(r)),
            Err(EtlError::DuplicateBatch { batch, .. }) => out.push(SourceOutcome::Duplicate {
                source: src.name.clone(),
                batch,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
