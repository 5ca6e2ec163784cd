use std::fmt;
use std::fs::File;
use std::io::{self, BufReader};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::source::{Encoding, SourceDescriptor};
use super::EtlError;
use crate::store::BatchId;

/// Where a record came from: source uri and 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub uri: String,
    pub line: u64,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.uri, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub fields: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub provenance: Provenance,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extracted {
    Record(RawRecord),
    Rejected(Rejection),
}

/// Streaming reader over one delimited source.
pub struct Extraction {
    header: Option<Vec<String>>,
    width: Option<usize>,
    records: csv::ByteRecordsIntoIter<BufReader<File>>,
    uri: String,
    encoding: Encoding,
}

impl fmt::Debug for Extraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Extraction")
            .field("uri", &self.uri)
            .field("header", &self.header)
            .finish_non_exhaustive()
    }
}

fn decode(bytes: &[u8], encoding: Encoding) -> Option<String> {
    match encoding {
        Encoding::Utf8 => std::str::from_utf8(bytes).ok().map(str::to_string),
        Encoding::Latin1 => Some(bytes.iter().map(|&b| char::from(b)).collect()),
    }
}

/// Batch identity of a source: its uri, content and load target. The file is
/// hashed in a streaming pass.
pub fn batch_id(src: &SourceDescriptor) -> Result<BatchId, EtlError> {
    let mut f = File::open(&src.path).map_err(|e| EtlError::io(&src.path, e))?;
    let mut h = Sha256::new();
    h.update(src.uri.as_bytes());
    h.update([0]);
    io::copy(&mut f, &mut h).map_err(|e| EtlError::io(&src.path, e))?;
    h.update([0]);
    h.update(src.batch_target().as_bytes());
    Ok(BatchId(h.finalize().into()))
}

/// Opens the source and reads its header when one is declared.
pub fn extract_rows(src: &SourceDescriptor) -> Result<Extraction, EtlError> {
    let file = File::open(&src.path).map_err(|e| EtlError::io(&src.path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(src.format.delimiter)
        .quote(src.format.quote)
        .has_headers(src.format.header)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = if src.format.header {
        let raw = reader.byte_headers().map_err(|e| EtlError::csv(&src.uri, e))?;
        let names = raw
            .iter()
            .map(|b| decode(b, src.format.encoding))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| EtlError::Csv {
                uri: src.uri.clone(),
                message: "header is not valid text".into(),
            })?;
        // An empty file has no header row at all.
        (!names.is_empty()).then_some(names)
    } else {
        None
    };
    Ok(Extraction {
        width: header.as_ref().map(Vec::len),
        header,
        records: reader.into_byte_records(),
        uri: src.uri.clone(),
        encoding: src.format.encoding,
    })
}

impl Extraction {
    pub fn header(&self) -> Option<&[String]> {
        self.header.as_deref()
    }

    /// Field count every record must have: the header's, else the first record's.
    pub fn width(&self) -> Option<usize> {
        self.width
    }
}

impl Iterator for Extraction {
    type Item = Result<Extracted, EtlError>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = match self.records.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(EtlError::csv(&self.uri, e))),
        };
        let provenance = Provenance {
            uri: self.uri.clone(),
            line: record.position().map_or(0, |p| p.line()),
        };
        let reject = |reason: String| {
            Some(Ok(Extracted::Rejected(Rejection {
                provenance: provenance.clone(),
                reason,
            })))
        };
        let width = *self.width.get_or_insert(record.len());
        if record.len() != width {
            return reject(format!(
                "ragged row: {} fields where {width} are expected",
                record.len()
            ));
        }
        let Some(fields) = record
            .iter()
            .map(|b| decode(b, self.encoding))
            .collect::<Option<Vec<_>>>()
        else {
            return reject("row is not valid UTF-8".into());
        };
        Some(Ok(Extracted::Record(RawRecord { fields, provenance })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn source(dir: &Path, text: &[u8], header: bool) -> SourceDescriptor {
        let path = dir.join("s.csv");
        std::fs::write(&path, text).unwrap();
        let mut s = SourceDescriptor::facts("s", &path, "f");
        s.format.header = header;
        s
    }

    fn collect(src: &SourceDescriptor) -> Vec<Extracted> {
        extract_rows(src).unwrap().map(Result::unwrap).collect()
    }

    #[test]
    fn header_is_skipped_and_lines_counted() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path(), b"a,b\n1,2\n3,4\n", true);
        let rows = collect(&src);
        let lines: Vec<u64> = rows
            .iter()
            .map(|r| match r {
                Extracted::Record(r) => r.provenance.line,
                Extracted::Rejected(_) => 0,
            })
            .collect();
        assert_eq!(lines, [2, 3]);
    }

    #[test]
    fn quotes_are_unescaped() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path(), b"\"a,\"\"b\"\"\",x\n", false);
        match &collect(&src)[0] {
            Extracted::Record(r) => assert_eq!(r.fields, ["a,\"b\"", "x"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path(), b"a,b\n1\n2,3\n", true);
        let rows = collect(&src);
        assert!(matches!(&rows[0], Extracted::Rejected(r) if r.provenance.line == 2));
        assert!(matches!(&rows[1], Extracted::Record(_)));
    }

    #[test]
    fn empty_file_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path(), b"", true);
        assert!(collect(&src).is_empty());
    }

    #[test]
    fn latin1_is_decoded() {
        let dir = tempfile::tempdir().unwrap();
        let mut src = source(dir.path(), b"H\xe9matocrite\n", false);
        assert!(matches!(&collect(&src)[0], Extracted::Rejected(_)));
        src.format.encoding = Encoding::Latin1;
        match &collect(&src)[0] {
            Extracted::Record(r) => assert_eq!(r.fields, ["Hématocrite"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_id_depends_on_content_and_target() {
        let dir = tempfile::tempdir().unwrap();
        let src = source(dir.path(), b"a\n1\n", true);
        let one = batch_id(&src).unwrap();
        assert_eq!(one, BatchId::derive(&src.uri, b"a\n1\n", "f"));
        let mut other = src.clone();
        other.target = "g".into();
        assert_ne!(one, batch_id(&other).unwrap());
    }
}
