//! Little-endian record encoding for segment files. The layout is documented in
//! `docs/storage-format.md`; any change here must bump [`SEGMENT_FORMAT`].

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, TimeDelta};

use super::{BatchId, Checksum, Document, DocumentLink, FactRow, Member};
use crate::value::Value;

pub const SEGMENT_FORMAT: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum SegmentKind {
    Dimension = 1,
    Fact = 2,
    Documents = 3,
    Links = 4,
}

pub const HEADER_LEN: u64 = 2;

pub fn header(kind: SegmentKind) -> [u8; 2] {
    [SEGMENT_FORMAT, kind as u8]
}

const TAG_NULL: u8 = 0;
const TAG_TEXT: u8 = 1;
const TAG_INTEGER: u8 = 2;
const TAG_DECIMAL: u8 = 3;
const TAG_DATE: u8 = 4;
const TAG_TIMESTAMP: u8 = 5;
const TAG_DOCUMENT: u8 = 6;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn text(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn value(&mut self, v: &Value) {
        match v {
            Value::Null => self.buf.push(TAG_NULL),
            Value::Text(s) => {
                self.buf.push(TAG_TEXT);
                self.text(s);
            }
            Value::Integer(i) => {
                self.buf.push(TAG_INTEGER);
                self.bytes(&i.to_le_bytes());
            }
            Value::Decimal(d) => {
                self.buf.push(TAG_DECIMAL);
                self.u64(d.to_bits());
            }
            Value::Date(d) => {
                self.buf.push(TAG_DATE);
                let days = (*d - epoch()).num_days() as i32;
                self.bytes(&days.to_le_bytes());
            }
            Value::Timestamp(t) => {
                self.buf.push(TAG_TIMESTAMP);
                self.bytes(&t.and_utc().timestamp_micros().to_le_bytes());
            }
            Value::DocumentRef(id) => {
                self.buf.push(TAG_DOCUMENT);
                self.u64(*id);
            }
        }
    }

    pub fn values(&mut self, vs: &[Value]) {
        self.u16(vs.len() as u16);
        for v in vs {
            self.value(v);
        }
    }

    /// Wraps the payload as `u32 length || payload`.
    pub fn into_record(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.buf.len() + 4);
        out.extend_from_slice(&(self.buf.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.buf);
        out
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

pub type DecodeResult<T> = Result<T, String>;

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, at: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.at >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> DecodeResult<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| format!("truncated record at byte {}", self.at))?;
        let slice = &self.buf[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> DecodeResult<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> DecodeResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> DecodeResult<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> DecodeResult<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> DecodeResult<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn hash(&mut self) -> DecodeResult<[u8; 32]> {
        self.array()
    }

    pub fn text(&mut self) -> DecodeResult<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| "text is not UTF-8".to_string())
    }

    pub fn value(&mut self) -> DecodeResult<Value> {
        Ok(match self.u8()? {
            TAG_NULL => Value::Null,
            TAG_TEXT => Value::Text(self.text()?),
            TAG_INTEGER => Value::Integer(i64::from_le_bytes(self.array()?)),
            TAG_DECIMAL => Value::Decimal(f64::from_bits(self.u64()?)),
            TAG_DATE => {
                let days = i32::from_le_bytes(self.array()?);
                Value::Date(
                    epoch()
                        .checked_add_signed(TimeDelta::days(days.into()))
                        .ok_or("date out of range")?,
                )
            }
            TAG_TIMESTAMP => {
                let micros = i64::from_le_bytes(self.array()?);
                Value::Timestamp(
                    DateTime::from_timestamp_micros(micros)
                        .ok_or("timestamp out of range")?
                        .naive_utc(),
                )
            }
            TAG_DOCUMENT => Value::DocumentRef(self.u64()?),
            other => return Err(format!("unknown value tag {other}")),
        })
    }

    pub fn values(&mut self) -> DecodeResult<Vec<Value>> {
        let n = self.u16()? as usize;
        (0..n).map(|_| self.value()).collect()
    }

    /// Next `u32 length || payload` record.
    pub fn record(&mut self) -> DecodeResult<Reader<'a>> {
        let len = self.u32()? as usize;
        Ok(Reader::new(self.take(len)?))
    }

    pub fn finish(&self) -> DecodeResult<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes in record", self.buf.len() - self.at))
        }
    }
}

pub fn encode_member(m: &Member) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(m.key);
    w.values(&m.values);
    w.into_record()
}

pub fn decode_member(r: &mut Reader<'_>) -> DecodeResult<Member> {
    let m = Member {
        key: r.u64()?,
        values: r.values()?,
    };
    r.finish()?;
    Ok(m)
}

pub fn encode_fact(f: &FactRow) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(f.id);
    w.bytes(&f.batch.0);
    w.u16(f.keys.len() as u16);
    for k in &f.keys {
        w.u64(*k);
    }
    w.values(&f.measures);
    w.into_record()
}

pub fn decode_fact(r: &mut Reader<'_>) -> DecodeResult<FactRow> {
    let id = r.u64()?;
    let batch = BatchId(r.hash()?);
    let n = r.u16()? as usize;
    let keys = (0..n).map(|_| r.u64()).collect::<DecodeResult<Vec<_>>>()?;
    let measures = r.values()?;
    r.finish()?;
    Ok(FactRow {
        id,
        keys,
        measures,
        batch,
    })
}

pub fn encode_document(d: &Document) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(d.id);
    w.bytes(&d.checksum.0);
    w.u64(d.size);
    w.text(&d.media_type);
    w.u16(d.attributes.len() as u16);
    for (k, v) in &d.attributes {
        w.text(k);
        w.text(v);
    }
    w.into_record()
}

pub fn decode_document(r: &mut Reader<'_>) -> DecodeResult<Document> {
    let id = r.u64()?;
    let checksum = Checksum(r.hash()?);
    let size = r.u64()?;
    let media_type = r.text()?;
    let n = r.u16()? as usize;
    let mut attributes = BTreeMap::new();
    for _ in 0..n {
        let k = r.text()?;
        attributes.insert(k, r.text()?);
    }
    r.finish()?;
    Ok(Document {
        id,
        media_type,
        checksum,
        size,
        attributes,
    })
}

pub fn encode_link(l: &DocumentLink) -> Vec<u8> {
    let mut w = Writer::new();
    w.text(&l.fact);
    w.u64(l.report);
    w.u64(l.document);
    w.into_record()
}

pub fn decode_link(r: &mut Reader<'_>) -> DecodeResult<DocumentLink> {
    let l = DocumentLink {
        fact: r.text()?,
        report: r.u64()?,
        document: r.u64()?,
    };
    r.finish()?;
    Ok(l)
}
