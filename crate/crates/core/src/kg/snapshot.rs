//! Binary memory snapshots.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    b"PGMRMEM\0"
//! version  u32 (= 1)
//! kind     u8  (0 entity, 1 relation)
//! dim      u32 (0 when no record is embedded)
//! count    u64
//! count × { id u64, label str, description str, has_embedding u8, [f32; dim] }
//! str = u32 byte length + UTF-8 bytes
//! ```
//!
//! Floats are stored as raw bit patterns, so a load/save cycle is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::memory::Memory;
use super::record::KgRecord;
use super::uri::{UriKind, UriRef};
use super::KgError;

const MAGIC: &[u8; 8] = b"PGMRMEM\0";
const VERSION: u32 = 1;

pub fn write_snapshot(memory: &Memory, mut out: impl Write) -> Result<(), KgError> {
    let dim = memory.dimension().unwrap_or(0);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[match memory.kind() {
        UriKind::Entity => 0,
        UriKind::Relation => 1,
    }])?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&(memory.len() as u64).to_le_bytes())?;
    for record in memory.records() {
        out.write_all(&record.uri().id().to_le_bytes())?;
        write_str(&mut out, record.label())?;
        write_str(&mut out, record.description())?;
        match record.embedding() {
            Some(v) => {
                out.write_all(&[1])?;
                for x in v {
                    out.write_all(&x.to_bits().to_le_bytes())?;
                }
            }
            None => out.write_all(&[0])?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot(mut input: impl Read) -> Result<Memory, KgError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(KgError::Snapshot("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(KgError::Snapshot(format!("unsupported version {version}")));
    }
    let kind = match read_u8(&mut input)? {
        0 => UriKind::Entity,
        1 => UriKind::Relation,
        other => return Err(KgError::Snapshot(format!("bad kind tag {other}"))),
    };
    let dim = read_u32(&mut input)? as usize;
    let count = read_u64(&mut input)?;
    let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let id = read_u64(&mut input)?;
        let label = read_str(&mut input)?;
        let description = read_str(&mut input)?;
        let uri = UriRef::new(kind, id);
        let mut record = KgRecord::new(uri, label, description)
            .map_err(|e| KgError::Snapshot(e.to_string()))?;
        if read_u8(&mut input)? == 1 {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(f32::from_bits(read_u32(&mut input)?));
            }
            record = record.with_embedding(v);
        }
        records.push(record);
    }
    Memory::from_records(kind, records)
}

pub fn save_snapshot(memory: &Memory, path: impl AsRef<Path>) -> Result<(), KgError> {
    write_snapshot(memory, BufWriter::new(File::create(path)?))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Memory, KgError> {
    read_snapshot(BufReader::new(File::open(path)?))
}

/// Opens either a binary snapshot or a JSONL metadata file, telling them
/// apart by the snapshot magic bytes. Snapshots must hold `kind`.
pub fn open_memory(path: impl AsRef<Path>, kind: UriKind) -> Result<Memory, KgError> {
    let path = path.as_ref();
    let mut head = [0u8; 8];
    let is_snapshot = {
        let mut f = File::open(path)?;
        f.read_exact(&mut head).is_ok() && &head == MAGIC
    };
    if !is_snapshot {
        return Memory::load_metadata(path, kind);
    }
    let memory = load_snapshot(path)?;
    if memory.kind() != kind {
        return Err(KgError::KindMismatch {
            line: None,
            uri: memory.records().first().map_or(UriRef::new(memory.kind(), 0), |r| r.uri()),
            expected: kind,
        });
    }
    Ok(memory)
}

fn write_str(out: &mut impl Write, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn read_u8(input: &mut impl Read) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    input.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32(input: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(input: &mut impl Read) -> Result<String, KgError> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| KgError::Snapshot(e.to_string()))
}
