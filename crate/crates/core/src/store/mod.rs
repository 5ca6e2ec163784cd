//! Embedded segment store.
//!
//! A catalog is a directory of append-only segment files plus a manifest that
//! records the committed prefix of each segment. Loads go through a
//! [`WriteTxn`]: everything is staged in memory, appended to segments past the
//! committed length, and made visible by atomically replacing the manifest. A
//! crash anywhere before that rename leaves the previous state intact.
//!
//! Readers work on an immutable [`Snapshot`]; installing a batch never changes
//! a snapshot that is already handed out.

mod codec;
pub(crate) mod manifest;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dsl::{parse_schema, serialize_schema, SourceText};
use crate::mapping::ReferenceInterval;
use crate::model::{Schema, ValueKind};
use crate::value::Value;
use codec::{Reader, SegmentKind, HEADER_LEN, SEGMENT_FORMAT};
pub use manifest::BatchEntry;
use manifest::{Manifest, SegmentState};

const LOCK_FILE: &str = "LOCK";
const DOCUMENTS_SEGMENT: &str = "meta/documents.seg";
const LINKS_SEGMENT: &str = "meta/links.seg";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("catalog manifest is unreadable: {0}")]
    CorruptManifest(String),
    #[error("segment {path} is corrupt: {reason}")]
    CorruptSegment { path: String, reason: String },
    #[error("unsupported {what} format version {found}")]
    UnsupportedFormat { what: &'static str, found: u8 },
    #[error("{} is not a catalog", .0.display())]
    NotACatalog(PathBuf),
    #[error("catalog is open read-only")]
    ReadOnly,
    #[error("catalog is locked by another writer")]
    Locked,
    #[error("batch {0} is already loaded")]
    DuplicateBatch(BatchId),
    #[error("catalog has no schema")]
    NoSchema,
    #[error("unknown fact table `{0}`")]
    UnknownFactTable(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown document {0}")]
    UnknownDocument(u64),
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("schema change rejected: {0}")]
    SchemaConflict(String),
    #[error("stored schema is unreadable: {0}")]
    StoredSchema(String),
    #[error("blob of document {id} does not match its checksum")]
    BlobMismatch { id: u64 },
    #[error("injected fault {0:?}")]
    InjectedFault(FaultPoint),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

macro_rules! digest_type {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; 32]);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self)
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let mut out = [0u8; 32];
                hex::decode_to_slice(s, &mut out).map_err(|e| format!("`{s}`: {e}"))?;
                Ok($name(out))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

digest_type!(BatchId);
digest_type!(Checksum);

impl Checksum {
    pub fn of(bytes: &[u8]) -> Self {
        Checksum(Sha256::digest(bytes).into())
    }
}

impl BatchId {
    /// Identity of a load: source location, its content and the target fact.
    pub fn derive(uri: &str, content: &[u8], fact: &str) -> Self {
        let mut h = Sha256::new();
        h.update(uri.as_bytes());
        h.update([0]);
        h.update(content);
        h.update([0]);
        h.update(fact.as_bytes());
        BatchId(h.finalize().into())
    }
}

/// A dimension member; `values` follow the dimension's attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub key: u64,
    pub values: Vec<Value>,
}

/// A fact row; `keys` follow the grain order, `measures` the measure order.
#[derive(Debug, Clone, PartialEq)]
pub struct FactRow {
    pub id: u64,
    pub keys: Vec<u64>,
    pub measures: Vec<Value>,
    pub batch: BatchId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Document {
    pub id: u64,
    pub media_type: String,
    pub checksum: Checksum,
    pub size: u64,
    pub attributes: BTreeMap<String, String>,
}

/// Associates a row of a bridge fact (a report) with a document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DocumentLink {
    pub fact: String,
    pub report: u64,
    pub document: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    ReadOnly,
    ReadWrite,
}

/// Crash simulation points inside [`WriteTxn::commit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Segments and blobs are written, no manifest yet.
    AfterSegments,
    /// The new manifest is written to its temporary file but not renamed.
    BeforeManifestRename,
}

#[derive(Debug, Clone, Default)]
pub struct DimensionTable {
    members: Vec<Member>,
    index: HashMap<Vec<String>, u64>,
    key_positions: Vec<usize>,
}

impl DimensionTable {
    fn new(key_positions: Vec<usize>) -> Self {
        Self {
            key_positions,
            ..Self::default()
        }
    }

    fn natural_key(&self, values: &[Value]) -> Vec<String> {
        self.key_positions
            .iter()
            .map(|&i| values.get(i).map(Value::render).unwrap_or_default())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, key: u64) -> Option<&Member> {
        let idx = usize::try_from(key).ok()?.checked_sub(1)?;
        self.members.get(idx)
    }

    /// Surrogate key of the member whose natural key renders as `natural`.
    pub fn lookup<S: AsRef<str>>(&self, natural: &[S]) -> Option<u64> {
        let k: Vec<String> = natural.iter().map(|s| s.as_ref().to_string()).collect();
        self.index.get(&k).copied()
    }

    pub fn lookup_values(&self, natural: &[Value]) -> Option<u64> {
        let k: Vec<String> = natural.iter().map(Value::render).collect();
        self.index.get(&k).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Member> + '_ {
        self.members.iter()
    }

    /// New keys must be the next dense key; existing keys are replaced.
    fn apply(&mut self, m: Member) -> Result<(), String> {
        let next = self.members.len() as u64 + 1;
        if m.key == next {
            let nk = self.natural_key(&m.values);
            if self.index.insert(nk.clone(), m.key).is_some() {
                return Err(format!("natural key {nk:?} stored twice"));
            }
            self.members.push(m);
            Ok(())
        } else if m.key >= 1 && m.key < next {
            let idx = (m.key - 1) as usize;
            if self.natural_key(&self.members[idx].values) != self.natural_key(&m.values) {
                return Err(format!("member {} changes its natural key", m.key));
            }
            self.members[idx] = m;
            Ok(())
        } else {
            Err(format!("member key {} skips past {}", m.key, next))
        }
    }
}

/// Immutable view of a committed catalog state.
#[derive(Debug, Clone)]
pub struct Snapshot {
    root: PathBuf,
    manifest: Manifest,
    schema: Option<Arc<Schema>>,
    dimensions: BTreeMap<String, Arc<DimensionTable>>,
    facts: BTreeMap<String, Arc<Vec<FactRow>>>,
    documents: Arc<Vec<Document>>,
    document_index: Arc<HashMap<(Checksum, String), u64>>,
    links: Arc<Vec<DocumentLink>>,
    intervals: Arc<Vec<ReferenceInterval>>,
}

impl Snapshot {
    pub fn generation(&self) -> u64 {
        self.manifest.generation
    }

    pub fn schema(&self) -> Option<&Arc<Schema>> {
        self.schema.as_ref()
    }

    pub fn require_schema(&self) -> Result<&Arc<Schema>, StoreError> {
        self.schema.as_ref().ok_or(StoreError::NoSchema)
    }

    pub fn dimension(&self, name: &str) -> Result<&DimensionTable, StoreError> {
        self.dimensions
            .get(name)
            .map(|d| d.as_ref())
            .ok_or_else(|| StoreError::UnknownDimension(name.to_string()))
    }

    pub fn fact_rows(&self, table: &str) -> Result<&[FactRow], StoreError> {
        self.facts
            .get(table)
            .map(|rows| rows.as_slice())
            .ok_or_else(|| StoreError::UnknownFactTable(table.to_string()))
    }

    pub fn scan_facts<'s, P>(
        &'s self,
        table: &str,
        predicate: P,
    ) -> Result<impl Iterator<Item = &'s FactRow> + 's, StoreError>
    where
        P: Fn(&FactRow) -> bool + 's,
    {
        Ok(self.fact_rows(table)?.iter().filter(move |r| predicate(r)))
    }

    pub fn fact_row(&self, table: &str, id: u64) -> Result<Option<&FactRow>, StoreError> {
        let rows = self.fact_rows(table)?;
        Ok(id
            .checked_sub(1)
            .and_then(|i| rows.get(usize::try_from(i).ok()?)))
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, id: u64) -> Option<&Document> {
        id.checked_sub(1)
            .and_then(|i| self.documents.get(usize::try_from(i).ok()?))
    }

    /// Blob bytes, verified against the stored checksum.
    pub fn read_document(&self, id: u64) -> Result<(&Document, Vec<u8>), StoreError> {
        let doc = self.document(id).ok_or(StoreError::UnknownDocument(id))?;
        let path = blob_path(&self.root, &doc.checksum);
        let bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
        if Checksum::of(&bytes) != doc.checksum || bytes.len() as u64 != doc.size {
            return Err(StoreError::BlobMismatch { id });
        }
        Ok((doc, bytes))
    }

    pub fn links(&self) -> &[DocumentLink] {
        &self.links
    }

    /// Document ids linked to one report row, in link order.
    pub fn documents_for(&self, fact: &str, report: u64) -> Vec<u64> {
        self.links
            .iter()
            .filter(|l| l.fact == fact && l.report == report)
            .map(|l| l.document)
            .collect()
    }

    pub fn batches(&self) -> &[BatchEntry] {
        &self.manifest.batches
    }

    pub fn has_batch(&self, id: &BatchId) -> bool {
        self.manifest.batches.iter().any(|b| &b.id == id)
    }

    pub fn intervals(&self) -> &[ReferenceInterval] {
        &self.intervals
    }

    fn empty(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            manifest: Manifest::default(),
            schema: None,
            dimensions: BTreeMap::new(),
            facts: BTreeMap::new(),
            documents: Arc::default(),
            document_index: Arc::default(),
            links: Arc::default(),
            intervals: Arc::default(),
        }
    }

    /// Empty tables for every declared dimension and fact that has none yet.
    fn attach_schema(&mut self, schema: Arc<Schema>) {
        for dim in &schema.dimensions {
            self.dimensions.entry(dim.name.clone()).or_insert_with(|| {
                let positions = dim
                    .natural_key
                    .iter()
                    .filter_map(|k| dim.attribute_index(k))
                    .collect();
                Arc::new(DimensionTable::new(positions))
            });
        }
        for fact in &schema.fact_tables {
            self.facts.entry(fact.name.clone()).or_default();
        }
        self.schema = Some(schema);
    }

    fn load(root: &Path, manifest: Manifest) -> Result<Self, StoreError> {
        let mut snap = Snapshot::empty(root);
        if let Some(text) = &manifest.schema {
            let schema = parse_schema(&SourceText::inline(text.as_str())).map_err(|diags| {
                StoreError::StoredSchema(
                    diags
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; "),
                )
            })?;
            snap.attach_schema(Arc::new(schema));
        }
        for (rel, state) in &manifest.segments {
            let bytes = read_committed(root, rel, state)?;
            let corrupt = |reason: String| StoreError::CorruptSegment {
                path: rel.clone(),
                reason,
            };
            let kind = segment_kind(rel).ok_or_else(|| corrupt("unknown segment".into()))?;
            if bytes[1] != kind as u8 {
                return Err(corrupt(format!("segment kind byte {}", bytes[1])));
            }
            let mut reader = Reader::new(&bytes[HEADER_LEN as usize..]);
            let mut count = 0u64;
            while !reader.is_empty() {
                let mut rec = reader.record().map_err(corrupt)?;
                count += 1;
                match kind {
                    SegmentKind::Dimension => {
                        let m = codec::decode_member(&mut rec).map_err(corrupt)?;
                        let name = segment_name(rel);
                        let table = snap
                            .dimensions
                            .get_mut(name)
                            .ok_or_else(|| corrupt(format!("dimension `{name}` not declared")))?;
                        Arc::make_mut(table).apply(m).map_err(corrupt)?;
                    }
                    SegmentKind::Fact => {
                        let row = codec::decode_fact(&mut rec).map_err(corrupt)?;
                        let name = segment_name(rel);
                        let rows = snap
                            .facts
                            .get_mut(name)
                            .ok_or_else(|| corrupt(format!("fact `{name}` not declared")))?;
                        if row.id != rows.len() as u64 + 1 {
                            return Err(corrupt(format!("fact row id {} out of order", row.id)));
                        }
                        Arc::make_mut(rows).push(row);
                    }
                    SegmentKind::Documents => {
                        let doc = codec::decode_document(&mut rec).map_err(corrupt)?;
                        if doc.id != snap.documents.len() as u64 + 1 {
                            return Err(corrupt(format!("document id {} out of order", doc.id)));
                        }
                        Arc::make_mut(&mut snap.document_index)
                            .insert((doc.checksum, doc.media_type.clone()), doc.id);
                        Arc::make_mut(&mut snap.documents).push(doc);
                    }
                    SegmentKind::Links => {
                        let link = codec::decode_link(&mut rec).map_err(corrupt)?;
                        Arc::make_mut(&mut snap.links).push(link);
                    }
                }
            }
            if count != state.records {
                return Err(corrupt(format!(
                    "manifest promises {} records, found {count}",
                    state.records
                )));
            }
        }
        snap.intervals = Arc::new(manifest.intervals.clone());
        snap.manifest = manifest;
        Ok(snap)
    }
}

fn segment_kind(rel: &str) -> Option<SegmentKind> {
    if rel == DOCUMENTS_SEGMENT {
        Some(SegmentKind::Documents)
    } else if rel == LINKS_SEGMENT {
        Some(SegmentKind::Links)
    } else if rel.starts_with("dims/") {
        Some(SegmentKind::Dimension)
    } else if rel.starts_with("facts/") {
        Some(SegmentKind::Fact)
    } else {
        None
    }
}

fn segment_name(rel: &str) -> &str {
    rel.rsplit('/')
        .next()
        .and_then(|f| f.strip_suffix(".seg"))
        .unwrap_or(rel)
}

fn blob_path(root: &Path, checksum: &Checksum) -> PathBuf {
    root.join("blobs").join(checksum.to_string())
}

fn read_committed(root: &Path, rel: &str, state: &SegmentState) -> Result<Vec<u8>, StoreError> {
    let path = root.join(rel);
    let mut bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
    if (bytes.len() as u64) < state.len || state.len < HEADER_LEN {
        return Err(StoreError::CorruptSegment {
            path: rel.to_string(),
            reason: format!(
                "committed length {} but file holds {} bytes",
                state.len,
                bytes.len()
            ),
        });
    }
    if bytes[0] != SEGMENT_FORMAT {
        return Err(StoreError::UnsupportedFormat {
            what: "segment",
            found: bytes[0],
        });
    }
    bytes.truncate(state.len as usize);
    Ok(bytes)
}

/// Drops any uncommitted tail, then appends `records` and syncs.
fn append_segment(
    root: &Path,
    rel: &str,
    kind: SegmentKind,
    state: SegmentState,
    records: &[Vec<u8>],
) -> Result<SegmentState, StoreError> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
    }
    let io_err = |e| StoreError::io(&path, e);
    let mut f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(io_err)?;
    let mut len = state.len;
    if len == 0 {
        f.set_len(0).map_err(io_err)?;
        f.write_all(&codec::header(kind)).map_err(io_err)?;
        len = HEADER_LEN;
    } else {
        f.set_len(len).map_err(io_err)?;
        f.seek(SeekFrom::Start(len)).map_err(io_err)?;
    }
    let mut buf = Vec::new();
    for r in records {
        buf.extend_from_slice(r);
    }
    f.write_all(&buf).map_err(io_err)?;
    f.sync_data().map_err(io_err)?;
    Ok(SegmentState {
        len: len + buf.len() as u64,
        records: state.records + records.len() as u64,
    })
}

fn write_blob(root: &Path, checksum: &Checksum, bytes: &[u8]) -> Result<(), StoreError> {
    let path = blob_path(root, checksum);
    if path.exists() {
        return Ok(());
    }
    let dir = root.join("blobs");
    fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
    let tmp = dir.join(format!("{checksum}.tmp"));
    let mut f = File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| StoreError::io(&path, e))
}

/// Handle on a catalog directory.
#[derive(Debug)]
pub struct Catalog {
    root: PathBuf,
    mode: OpenMode,
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
    fault: Mutex<Option<FaultPoint>>,
    _lock: Option<File>,
}

/// Opens (and in read-write mode, initializes) the catalog at `root`.
///
/// Read-write handles hold an exclusive lock on `root/LOCK`; a second writer,
/// in this process or another, gets [`StoreError::Locked`].
pub fn open_catalog(root: &Path, mode: OpenMode) -> Result<Catalog, StoreError> {
    let lock = match mode {
        OpenMode::ReadOnly => {
            if !root.is_dir() {
                return Err(StoreError::NotACatalog(root.to_path_buf()));
            }
            None
        }
        OpenMode::ReadWrite => {
            fs::create_dir_all(root).map_err(|e| StoreError::io(root, e))?;
            let path = root.join(LOCK_FILE);
            let f = OpenOptions::new()
                .create(true)
                .truncate(false)
                .write(true)
                .open(&path)
                .map_err(|e| StoreError::io(&path, e))?;
            match f.try_lock() {
                Ok(()) => {}
                Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked),
                Err(fs::TryLockError::Error(e)) => return Err(StoreError::io(&path, e)),
            }
            Some(f)
        }
    };
    let snapshot = match Manifest::load(root)? {
        Some(m) => Snapshot::load(root, m)?,
        None if mode == OpenMode::ReadOnly => {
            return Err(StoreError::NotACatalog(root.to_path_buf()));
        }
        None => {
            let m = Manifest::default();
            m.write_tmp(root)?;
            manifest::publish(root)?;
            Snapshot::empty(root)
        }
    };
    Ok(Catalog {
        root: root.to_path_buf(),
        mode,
        current: RwLock::new(Arc::new(snapshot)),
        writer: Mutex::new(()),
        fault: Mutex::new(None),
        _lock: lock,
    })
}

impl Catalog {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mode(&self) -> OpenMode {
        self.mode
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// Re-reads the committed state from disk, picking up other writers.
    pub fn refresh(&self) -> Result<Arc<Snapshot>, StoreError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let m = Manifest::load(&self.root)?
            .ok_or_else(|| StoreError::NotACatalog(self.root.clone()))?;
        let snap = Arc::new(Snapshot::load(&self.root, m)?);
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = snap.clone();
        Ok(snap)
    }

    /// Like [`Catalog::refresh`], but keeps the current snapshot while the
    /// committed generation is unchanged.
    pub fn refresh_if_stale(&self) -> Result<Arc<Snapshot>, StoreError> {
        let current = self.snapshot();
        match Manifest::load(&self.root)? {
            Some(m) if m.generation == current.generation() => Ok(current),
            _ => self.refresh(),
        }
    }

    /// Starts the single write transaction; other writers block until it ends.
    pub fn begin(&self) -> Result<WriteTxn<'_>, StoreError> {
        if self.mode == OpenMode::ReadOnly {
            return Err(StoreError::ReadOnly);
        }
        let guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let base = self.snapshot();
        Ok(WriteTxn {
            catalog: self,
            _guard: guard,
            schema: base.schema.clone(),
            intervals: None,
            dim_pending: BTreeMap::new(),
            dim_index: HashMap::new(),
            fact_pending: BTreeMap::new(),
            doc_pending: Vec::new(),
            doc_index: HashMap::new(),
            link_pending: Vec::new(),
            link_set: base.links.iter().cloned().collect(),
            base,
        })
    }

    /// Arms a simulated crash for the next commit.
    #[doc(hidden)]
    pub fn inject_fault(&self, point: FaultPoint) {
        *self.fault.lock().unwrap_or_else(|e| e.into_inner()) = Some(point);
    }

    fn take_fault(&self, point: FaultPoint) -> Result<(), StoreError> {
        let mut slot = self.fault.lock().unwrap_or_else(|e| e.into_inner());
        if *slot == Some(point) {
            *slot = None;
            return Err(StoreError::InjectedFault(point));
        }
        Ok(())
    }
}

/// Staged changes against a base snapshot. Dropping the transaction discards them.
pub struct WriteTxn<'c> {
    catalog: &'c Catalog,
    _guard: MutexGuard<'c, ()>,
    base: Arc<Snapshot>,
    schema: Option<Arc<Schema>>,
    intervals: Option<Vec<ReferenceInterval>>,
    /// Per dimension: surrogate key to the latest staged values.
    dim_pending: BTreeMap<String, BTreeMap<u64, Vec<Value>>>,
    dim_index: HashMap<(String, Vec<String>), u64>,
    fact_pending: BTreeMap<String, Vec<FactRow>>,
    doc_pending: Vec<(Document, Vec<u8>)>,
    doc_index: HashMap<(Checksum, String), u64>,
    link_pending: Vec<DocumentLink>,
    link_set: HashSet<DocumentLink>,
}

/// Totals of one commit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommitSummary {
    pub generation: u64,
    pub facts: u64,
    pub members: u64,
    pub documents: u64,
    pub links: u64,
}

impl<'c> WriteTxn<'c> {
    pub fn base(&self) -> &Arc<Snapshot> {
        &self.base
    }

    pub fn schema(&self) -> Result<&Arc<Schema>, StoreError> {
        self.schema.as_ref().ok_or(StoreError::NoSchema)
    }

    /// Stages a schema. With data already stored, every existing dimension
    /// and fact table must keep its shape and the version must increase.
    pub fn set_schema(&mut self, schema: Schema) -> Result<(), StoreError> {
        let schema = schema.into_canonical_order();
        schema
            .ensure_valid()
            .map_err(|e| StoreError::SchemaConflict(e.to_string()))?;
        if let Some(old) = &self.schema {
            if schema.version <= old.version {
                return Err(StoreError::SchemaConflict(format!(
                    "version {} does not follow stored version {}",
                    schema.version, old.version
                )));
            }
            for dim in &old.dimensions {
                match schema.dimension(&dim.name) {
                    Some(d) if d.attributes == dim.attributes && d.natural_key == dim.natural_key => {}
                    Some(_) => {
                        return Err(StoreError::SchemaConflict(format!(
                            "dimension `{}` changes its attributes",
                            dim.name
                        )))
                    }
                    None => {
                        return Err(StoreError::SchemaConflict(format!(
                            "dimension `{}` would be dropped",
                            dim.name
                        )))
                    }
                }
            }
            for fact in &old.fact_tables {
                match schema.fact_table(&fact.name) {
                    Some(f) if f.grain == fact.grain && f.measures == fact.measures => {}
                    Some(_) => {
                        return Err(StoreError::SchemaConflict(format!(
                            "fact table `{}` changes its grain or measures",
                            fact.name
                        )))
                    }
                    None => {
                        return Err(StoreError::SchemaConflict(format!(
                            "fact table `{}` would be dropped",
                            fact.name
                        )))
                    }
                }
            }
        }
        self.schema = Some(Arc::new(schema));
        Ok(())
    }

    pub fn set_intervals(&mut self, intervals: Vec<ReferenceInterval>) {
        self.intervals = Some(intervals);
    }

    fn base_dim(&self, name: &str) -> Option<&DimensionTable> {
        self.base.dimensions.get(name).map(|d| d.as_ref())
    }

    fn member_count(&self, dim: &str) -> u64 {
        let stored = self.base_dim(dim).map_or(0, |d| d.len() as u64);
        let staged = self
            .dim_pending
            .get(dim)
            .and_then(|p| p.keys().next_back().copied())
            .unwrap_or(0);
        stored.max(staged)
    }

    /// Surrogate key for a natural key, looking at staged members first.
    pub fn lookup_member(&self, dim: &str, natural: &[Value]) -> Option<u64> {
        let rendered: Vec<String> = natural.iter().map(Value::render).collect();
        self.dim_index
            .get(&(dim.to_string(), rendered))
            .copied()
            .or_else(|| self.base_dim(dim)?.lookup_values(natural))
    }

    pub fn member_values(&self, dim: &str, key: u64) -> Option<&[Value]> {
        if let Some(v) = self.dim_pending.get(dim).and_then(|p| p.get(&key)) {
            return Some(v);
        }
        self.base_dim(dim)?.member(key).map(|m| m.values.as_slice())
    }

    fn check_member_values(&self, dim: &str, values: &[Value]) -> Result<Vec<String>, StoreError> {
        let schema = self.schema()?;
        let d = schema
            .dimension(dim)
            .ok_or_else(|| StoreError::UnknownDimension(dim.to_string()))?;
        if values.len() != d.attributes.len() {
            return Err(StoreError::Integrity(format!(
                "dimension `{dim}` has {} attributes, member has {}",
                d.attributes.len(),
                values.len()
            )));
        }
        for (attr, v) in d.attributes.iter().zip(values) {
            check_kind(v, attr.kind)
                .map_err(|k| StoreError::Integrity(format!("{dim}.{}: {k}", attr.name)))?;
        }
        let mut natural = Vec::new();
        for k in &d.natural_key {
            let idx = d.attribute_index(k).expect("valid schema");
            if values[idx].is_null() {
                return Err(StoreError::Integrity(format!(
                    "{dim}.{k}: natural key attribute is null"
                )));
            }
            natural.push(values[idx].render());
        }
        Ok(natural)
    }

    /// Stages a new member and returns its surrogate key.
    pub fn insert_member(&mut self, dim: &str, values: Vec<Value>) -> Result<u64, StoreError> {
        let natural = self.check_member_values(dim, &values)?;
        let index_key = (dim.to_string(), natural);
        if self.dim_index.contains_key(&index_key)
            || self
                .base_dim(dim)
                .is_some_and(|d| d.lookup(&index_key.1).is_some())
        {
            return Err(StoreError::Integrity(format!(
                "{dim}: natural key {:?} already exists",
                index_key.1
            )));
        }
        let key = self.member_count(dim) + 1;
        self.dim_index.insert(index_key, key);
        self.dim_pending
            .entry(dim.to_string())
            .or_default()
            .insert(key, values);
        Ok(key)
    }

    /// Overwrites the attributes of an existing member in place.
    pub fn update_member(&mut self, dim: &str, key: u64, values: Vec<Value>) -> Result<(), StoreError> {
        let natural = self.check_member_values(dim, &values)?;
        let current = self
            .member_values(dim, key)
            .ok_or_else(|| StoreError::Integrity(format!("{dim}: no member {key}")))?;
        let schema = self.schema()?;
        let d = schema.dimension(dim).expect("checked above");
        let current_natural: Vec<String> = d
            .natural_key
            .iter()
            .map(|k| current[d.attribute_index(k).expect("valid schema")].render())
            .collect();
        if current_natural != natural {
            return Err(StoreError::Integrity(format!(
                "{dim}: member {key} cannot change its natural key"
            )));
        }
        self.dim_pending
            .entry(dim.to_string())
            .or_default()
            .insert(key, values);
        Ok(())
    }

    fn fact_count(&self, table: &str) -> u64 {
        let stored = self.base.facts.get(table).map_or(0, |r| r.len() as u64);
        stored + self.fact_pending.get(table).map_or(0, |p| p.len() as u64)
    }

    /// Stages a fact row after checking that every key and document reference resolves.
    pub fn append_fact(
        &mut self,
        table: &str,
        batch: BatchId,
        keys: Vec<u64>,
        measures: Vec<Value>,
    ) -> Result<u64, StoreError> {
        let schema = self.schema()?.clone();
        let fact = schema
            .fact_table(table)
            .ok_or_else(|| StoreError::UnknownFactTable(table.to_string()))?;
        if keys.len() != fact.grain.len() || measures.len() != fact.measures.len() {
            return Err(StoreError::Integrity(format!(
                "{table}: expected {} keys and {} measures",
                fact.grain.len(),
                fact.measures.len()
            )));
        }
        for (g, key) in fact.grain.iter().zip(&keys) {
            if self.member_values(&g.dimension, *key).is_none() {
                return Err(StoreError::Integrity(format!(
                    "{table}: key {key} has no member in `{}`",
                    g.dimension
                )));
            }
        }
        for (m, v) in fact.measures.iter().zip(&measures) {
            check_kind(v, m.kind)
                .map_err(|k| StoreError::Integrity(format!("{table}.{}: {k}", m.name)))?;
            if let Value::DocumentRef(id) = v {
                if !self.document_exists(*id) {
                    return Err(StoreError::UnknownDocument(*id));
                }
            }
        }
        let id = self.fact_count(table) + 1;
        self.fact_pending
            .entry(table.to_string())
            .or_default()
            .push(FactRow {
                id,
                keys,
                measures,
                batch,
            });
        Ok(id)
    }

    fn document_exists(&self, id: u64) -> bool {
        id >= 1 && id <= self.base.documents.len() as u64 + self.doc_pending.len() as u64
    }

    /// Content-addressed: identical bytes with the same media type yield the
    /// existing id. The flag tells whether a new document was staged.
    pub fn add_document(
        &mut self,
        media_type: &str,
        bytes: Vec<u8>,
        attributes: BTreeMap<String, String>,
    ) -> (u64, bool) {
        let checksum = Checksum::of(&bytes);
        let key = (checksum, media_type.to_string());
        if let Some(id) = self
            .base
            .document_index
            .get(&key)
            .or_else(|| self.doc_index.get(&key))
        {
            return (*id, false);
        }
        let id = self.base.documents.len() as u64 + self.doc_pending.len() as u64 + 1;
        let doc = Document {
            id,
            media_type: media_type.to_string(),
            checksum,
            size: bytes.len() as u64,
            attributes,
        };
        self.doc_index.insert(key, id);
        self.doc_pending.push((doc, bytes));
        (id, true)
    }

    /// Links a report row of `fact` to a document; linking twice is a no-op.
    pub fn link_document(&mut self, fact: &str, report: u64, document: u64) -> Result<bool, StoreError> {
        let schema = self.schema()?;
        if schema.fact_table(fact).is_none() {
            return Err(StoreError::UnknownFactTable(fact.to_string()));
        }
        if report == 0 || report > self.fact_count(fact) {
            return Err(StoreError::Integrity(format!("{fact}: no report row {report}")));
        }
        if !self.document_exists(document) {
            return Err(StoreError::UnknownDocument(document));
        }
        let link = DocumentLink {
            fact: fact.to_string(),
            report,
            document,
        };
        if !self.link_set.insert(link.clone()) {
            return Ok(false);
        }
        self.link_pending.push(link);
        Ok(true)
    }

    pub fn is_empty(&self) -> bool {
        self.dim_pending.is_empty()
            && self.fact_pending.is_empty()
            && self.doc_pending.is_empty()
            && self.link_pending.is_empty()
            && self.intervals.is_none()
            && self.schema.as_ref().map(|s| s.version) == self.base.schema.as_ref().map(|s| s.version)
    }

    /// Makes the staged state durable and visible. With `batch`, the load is
    /// registered and a batch already registered is refused.
    pub fn commit(self, batch: Option<(BatchId, &str)>) -> Result<CommitSummary, StoreError> {
        if let Some((id, _)) = &batch {
            if self.base.has_batch(id) {
                return Err(StoreError::DuplicateBatch(*id));
            }
        }
        let root = self.catalog.root.clone();
        let mut manifest = self.base.manifest.clone();
        manifest.generation += 1;
        let mut summary = CommitSummary {
            generation: manifest.generation,
            ..CommitSummary::default()
        };

        let schema_changed = !matches!(
            (&self.schema, &self.base.schema),
            (Some(a), Some(b)) if Arc::ptr_eq(a, b)
        );
        if schema_changed {
            if let Some(s) = &self.schema {
                manifest.schema = Some(
                    serialize_schema(s).map_err(|e| StoreError::SchemaConflict(e.to_string()))?,
                );
            }
        }
        if let Some(iv) = &self.intervals {
            manifest.intervals = iv.clone();
        }

        for (doc, bytes) in &self.doc_pending {
            write_blob(&root, &doc.checksum, bytes)?;
        }
        let mut segment = |rel: String, kind, records: Vec<Vec<u8>>| -> Result<(), StoreError> {
            if records.is_empty() {
                return Ok(());
            }
            let state = manifest.segments.get(&rel).copied().unwrap_or_default();
            let next = append_segment(&root, &rel, kind, state, &records)?;
            manifest.segments.insert(rel, next);
            Ok(())
        };
        for (dim, members) in &self.dim_pending {
            summary.members += members.len() as u64;
            let records = members
                .iter()
                .map(|(key, values)| {
                    codec::encode_member(&Member {
                        key: *key,
                        values: values.clone(),
                    })
                })
                .collect();
            segment(format!("dims/{dim}.seg"), SegmentKind::Dimension, records)?;
        }
        for (table, rows) in &self.fact_pending {
            summary.facts += rows.len() as u64;
            segment(
                format!("facts/{table}.seg"),
                SegmentKind::Fact,
                rows.iter().map(codec::encode_fact).collect(),
            )?;
        }
        summary.documents = self.doc_pending.len() as u64;
        segment(
            DOCUMENTS_SEGMENT.to_string(),
            SegmentKind::Documents,
            self.doc_pending
                .iter()
                .map(|(d, _)| codec::encode_document(d))
                .collect(),
        )?;
        summary.links = self.link_pending.len() as u64;
        segment(
            LINKS_SEGMENT.to_string(),
            SegmentKind::Links,
            self.link_pending.iter().map(codec::encode_link).collect(),
        )?;

        if let Some((id, label)) = batch {
            manifest.batches.push(BatchEntry {
                id,
                label: label.to_string(),
                generation: manifest.generation,
                facts: summary.facts,
                members: summary.members,
                documents: summary.documents,
                links: summary.links,
            });
        }

        self.catalog.take_fault(FaultPoint::AfterSegments)?;
        manifest.write_tmp(&root)?;
        self.catalog.take_fault(FaultPoint::BeforeManifestRename)?;
        manifest::publish(&root)?;

        let catalog = self.catalog;
        let next = self.apply(manifest)?;
        *catalog
            .current
            .write()
            .unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        Ok(summary)
    }

    /// Builds the next in-memory snapshot, sharing untouched tables with the base.
    fn apply(self, manifest: Manifest) -> Result<Snapshot, StoreError> {
        let mut next = (*self.base).clone();
        if let Some(s) = self.schema {
            next.attach_schema(s);
        }
        for (dim, members) in self.dim_pending {
            let table = next
                .dimensions
                .get_mut(&dim)
                .ok_or_else(|| StoreError::UnknownDimension(dim.clone()))?;
            let table = Arc::make_mut(table);
            for (key, values) in members {
                table
                    .apply(Member { key, values })
                    .map_err(StoreError::Integrity)?;
            }
        }
        for (table, rows) in self.fact_pending {
            let stored = next
                .facts
                .get_mut(&table)
                .ok_or_else(|| StoreError::UnknownFactTable(table.clone()))?;
            Arc::make_mut(stored).extend(rows);
        }
        for (doc, _) in self.doc_pending {
            Arc::make_mut(&mut next.document_index)
                .insert((doc.checksum, doc.media_type.clone()), doc.id);
            Arc::make_mut(&mut next.documents).push(doc);
        }
        Arc::make_mut(&mut next.links).extend(self.link_pending);
        next.intervals = Arc::new(manifest.intervals.clone());
        next.manifest = manifest;
        Ok(next)
    }
}

fn check_kind(v: &Value, kind: ValueKind) -> Result<(), String> {
    match v.kind() {
        None => Ok(()),
        Some(k) if k == kind => Ok(()),
        Some(k) => Err(format!("expected {kind}, got {k}")),
    }
}
