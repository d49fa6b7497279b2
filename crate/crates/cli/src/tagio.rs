//! Timestamp files: the binary "QTTS" container and a `channel,time_ps` CSV.
//!
//! QTTS layout (little-endian): magic `QTTS`, u16 version = 1, two reserved
//! zero bytes, u64 record count, then 9-byte records of u8 channel (0..3 for
//! D1..D4) and i64 picoseconds, sorted by time across channels. Neither
//! encoding stores spans; on reading, every channel gets the span
//! `[first tag, last tag + 1)` taken over the whole file.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use qtwtt_core::{Channel, Span, TimeTagStream};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"QTTS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 9;

pub type Streams = BTreeMap<Channel, TimeTagStream>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagFormat {
    Binary,
    Csv,
}

impl TagFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TagFormat::Csv,
            _ => TagFormat::Binary,
        }
    }
}

fn channel_code(path: &Path, ch: &Channel) -> CliResult<u8> {
    ch.index().ok_or_else(|| CliError::Format {
        path: path.into(),
        msg: format!("channel {ch} has no file encoding (only D1..D4)"),
    })
}

// All records in global time order; ties broken by channel.
fn merged_records(path: &Path, streams: &Streams) -> CliResult<Vec<(i64, u8)>> {
    let mut heap = BinaryHeap::new();
    let mut lists = Vec::new();
    for (ch, s) in streams {
        let code = channel_code(path, ch)?;
        if let Some(&t) = s.tags().first() {
            heap.push(Reverse((t, code, lists.len(), 0usize)));
        }
        lists.push(s.tags());
    }
    let mut out = Vec::with_capacity(lists.iter().map(|l| l.len()).sum());
    while let Some(Reverse((t, code, li, i))) = heap.pop() {
        out.push((t, code));
        if let Some(&next) = lists[li].get(i + 1) {
            heap.push(Reverse((next, code, li, i + 1)));
        }
    }
    Ok(out)
}

pub fn write_tags(streams: &Streams, path: &Path) -> CliResult<()> {
    let records = merged_records(path, streams)?;
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    match TagFormat::from_path(path) {
        TagFormat::Binary => {
            w.write_all(MAGIC).map_err(io)?;
            w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
            w.write_all(&[0, 0]).map_err(io)?;
            w.write_all(&(records.len() as u64).to_le_bytes()).map_err(io)?;
            for (t, code) in records {
                w.write_all(&[code]).map_err(io)?;
                w.write_all(&t.to_le_bytes()).map_err(io)?;
            }
        }
        TagFormat::Csv => {
            writeln!(w, "channel,time_ps").map_err(io)?;
            for (t, code) in records {
                writeln!(w, "{},{t}", Channel::from_index(code).expect("valid code")).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

fn assemble(records: Vec<(u8, i64)>) -> CliResult<Streams> {
    let mut lists: BTreeMap<u8, Vec<i64>> = BTreeMap::new();
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for (code, t) in records {
        lo = lo.min(t);
        hi = hi.max(t);
        lists.entry(code).or_default().push(t);
    }
    let span = if lo <= hi { Span::new(lo, hi + 1)? } else { Span::new(0, 0)? };
    let mut out = Streams::new();
    for (code, tags) in lists {
        let ch = Channel::from_index(code).expect("validated code");
        out.insert(ch.clone(), TimeTagStream::new(ch, tags, span)?);
    }
    Ok(out)
}

fn read_binary(path: &Path) -> CliResult<Streams> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = BufReader::with_capacity(1 << 20, file);
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]).map_err(|e| CliError::io(path, e))? {
            0 => break,
            n => got += n,
        }
    }
    if got < 4 || &header[..4] != MAGIC {
        let mut found = [0u8; 4];
        found[..got.min(4)].copy_from_slice(&header[..got.min(4)]);
        return Err(CliError::BadMagic { path: path.into(), found });
    }
    if got < HEADER_LEN {
        return Err(CliError::Format { path: path.into(), msg: "truncated header".into() });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(CliError::UnsupportedVersion { path: path.into(), version });
    }
    if header[6..8] != [0, 0] {
        return Err(CliError::Format { path: path.into(), msg: "reserved header bytes are not zero".into() });
    }
    let expected = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let mut records = Vec::with_capacity(expected.min(1 << 26) as usize);
    let mut rec = [0u8; RECORD_LEN];
    let mut last = i64::MIN;
    for index in 0..expected {
        if let Err(e) = r.read_exact(&mut rec) {
            return Err(match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    CliError::Truncated { path: path.into(), complete: index, expected }
                }
                _ => CliError::io(path, e),
            });
        }
        let code = rec[0];
        if Channel::from_index(code).is_none() {
            return Err(CliError::Format {
                path: path.into(),
                msg: format!("record {index} has invalid channel code {code}"),
            });
        }
        let t = i64::from_le_bytes(rec[1..].try_into().expect("8 bytes"));
        if t < last {
            return Err(CliError::Unsorted { path: path.into(), index });
        }
        last = t;
        records.push((code, t));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| CliError::io(path, e))? != 0 {
        return Err(CliError::Format {
            path: path.into(),
            msg: format!("trailing bytes after {expected} records"),
        });
    }
    assemble(records)
}

fn read_csv(path: &Path) -> CliResult<Streams> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Format {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let fmt = |msg: String| CliError::Format { path: path.into(), msg };
    let headers = rdr.headers().map_err(|e| fmt(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "time_ps"] {
        return Err(fmt(format!("expected header \"channel,time_ps\", found {:?}", headers.as_slice())));
    }
    let mut records = Vec::new();
    let mut last: BTreeMap<u8, i64> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| fmt(e.to_string()))?;
        let ch: Channel = row[0].parse().map_err(|e| fmt(format!("row {}: {e}", i + 1)))?;
        let code = ch
            .index()
            .ok_or_else(|| fmt(format!("row {}: channel {ch} has no file encoding", i + 1)))?;
        let t: i64 = row[1]
            .trim()
            .parse()
            .map_err(|e| fmt(format!("row {}: time_ps: {e}", i + 1)))?;
        let prev = last.entry(code).or_insert(i64::MIN);
        if t < *prev {
            return Err(CliError::Unsorted { path: path.into(), index: i as u64 });
        }
        *prev = t;
        records.push((code, t));
    }
    assemble(records)
}

pub fn read_tags(path: &Path) -> CliResult<Streams> {
    match TagFormat::from_path(path) {
        TagFormat::Binary => read_binary(path),
        TagFormat::Csv => read_csv(path),
    }
}

/// Splits `file.qtts:D1` into the path and an optional channel.
pub fn parse_selection(spec: &str) -> CliResult<(std::path::PathBuf, Option<Channel>)> {
    if let Some((p, c)) = spec.rsplit_once(':') {
        if let Ok(ch) = c.parse::<Channel>() {
            if ch.index().is_some() {
                return Ok((p.into(), Some(ch)));
            }
        }
    }
    Ok((spec.into(), None))
}

/// Reads one channel named by a `file:channel` selection.
pub fn read_selected(spec: &str) -> CliResult<TimeTagStream> {
    let (path, ch) = parse_selection(spec)?;
    let ch = ch.ok_or_else(|| CliError::Usage(format!("input {spec:?} does not name a channel (use file:D1)")))?;
    let mut streams = read_tags(&path)?;
    match streams.remove(&ch) {
        Some(s) => Ok(s),
        None => {
            let span = streams.values().next().map(|s| s.span()).unwrap_or(Span { start_ps: 0, end_ps: 0 });
            Ok(TimeTagStream::empty(ch, span))
        }
    }
}
