//! Append-only experiment log and its chunked binary container.
//!
//! Container layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "DSLOG\0\0\x01" (last byte is the version)
//! origin_ns    u64      clock origin used as the default re-indexing start
//! n_channels   u32
//! channel      u16 id, u16 name_len, name (UTF-8), u32 rate_hz (0 = aperiodic),
//!              u16 type_len, payload type tag (UTF-8)
//! chunk*       "CHNK", u32 record_count, u32 body_len, body, u32 crc32(body)
//! record       u16 channel, u64 index, u64 stamp_ns, u32 payload_len, payload
//! end          "END\0", u64 total_records
//! ```

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_MAGIC: &[u8; 7] = b"DSLOG\0\0";
pub const LOG_VERSION: u8 = 1;
pub const DEFAULT_CHUNK_BYTES: usize = 1 << 20;
pub const NS_PER_S: u64 = 1_000_000_000;

pub type ChannelId = u16;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("append contract violated on channel {channel}: expected index {expected}, got {got}")]
    IndexGap { channel: String, expected: u64, got: u64 },
    #[error("unknown channel id {0}")]
    UnknownChannel(ChannelId),
    #[error("unknown channel name {0:?}")]
    UnknownChannelName(String),
    #[error("invalid channel table: {0}")]
    ChannelTable(String),
    #[error("channel {0:?} has no nominal rate")]
    UnknownRate(String),
    #[error("expected exactly one start record on {channel:?}, found {count}")]
    StartRecord { channel: String, count: usize },
    #[error("log container at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("checksum mismatch in chunk at byte {offset}")]
    Checksum { offset: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub id: ChannelId,
    pub name: String,
    /// Nominal rate; `None` for one-shot or aperiodic channels.
    pub rate_hz: Option<u32>,
    pub payload_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub channel: ChannelId,
    pub index: u64,
    pub stamp_ns: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Log {
    origin_ns: u64,
    channels: Vec<ChannelMeta>,
    records: Vec<LogRecord>,
    next_index: HashMap<ChannelId, u64>,
}

/// `t0 + floor(index · 1e9 / rate)` in exact integer arithmetic.
pub fn index_stamp_ns(t0_ns: u64, index: u64, rate_hz: u32) -> u64 {
    t0_ns + ((index as u128 * NS_PER_S as u128) / rate_hz as u128) as u64
}

/// Timestamp of fixed step `k` at `steps_per_s` steps per second.
pub fn step_stamp_ns(k: u64, steps_per_s: u32) -> u64 {
    index_stamp_ns(0, k, steps_per_s)
}

impl Log {
    pub fn new(channels: Vec<ChannelMeta>) -> Result<Self, LogError> {
        let mut log = Self::default();
        for c in channels {
            log.add_channel(c)?;
        }
        Ok(log)
    }

    pub fn add_channel(&mut self, meta: ChannelMeta) -> Result<(), LogError> {
        if self.channels.iter().any(|c| c.id == meta.id || c.name == meta.name) {
            return Err(LogError::ChannelTable(format!("duplicate channel {} ({})", meta.id, meta.name)));
        }
        if meta.rate_hz == Some(0) {
            return Err(LogError::ChannelTable(format!("channel {} has rate 0", meta.name)));
        }
        self.channels.push(meta);
        Ok(())
    }

    /// Adds a channel with the next free id.
    pub fn add_named_channel(&mut self, name: &str, rate_hz: Option<u32>, payload_type: &str) -> Result<ChannelId, LogError> {
        let id = self.channels.iter().map(|c| c.id + 1).max().unwrap_or(0);
        self.add_channel(ChannelMeta {
            id,
            name: name.to_string(),
            rate_hz,
            payload_type: payload_type.to_string(),
        })?;
        Ok(id)
    }

    pub fn origin_ns(&self) -> u64 {
        self.origin_ns
    }

    pub fn set_origin_ns(&mut self, t: u64) {
        self.origin_ns = t;
    }

    pub fn channels(&self) -> &[ChannelMeta] {
        &self.channels
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn channel(&self, id: ChannelId) -> Option<&ChannelMeta> {
        self.channels.iter().find(|c| c.id == id)
    }

    pub fn channel_by_name(&self, name: &str) -> Option<&ChannelMeta> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_id(&self, name: &str) -> Result<ChannelId, LogError> {
        self.channel_by_name(name)
            .map(|c| c.id)
            .ok_or_else(|| LogError::UnknownChannelName(name.to_string()))
    }

    pub fn records_on(&self, id: ChannelId) -> impl Iterator<Item = &LogRecord> + '_ {
        self.records.iter().filter(move |r| r.channel == id)
    }

    pub fn count(&self, id: ChannelId) -> usize {
        self.next_index.get(&id).copied().unwrap_or(0) as usize
    }

    pub fn count_by_name(&self, name: &str) -> usize {
        self.channel_by_name(name).map(|c| self.count(c.id)).unwrap_or(0)
    }

    /// Index the next record on `id` must carry.
    pub fn next_index(&self, id: ChannelId) -> u64 {
        self.next_index.get(&id).copied().unwrap_or(0)
    }

    pub fn append(&mut self, record: LogRecord) -> Result<(), LogError> {
        let meta = self.channel(record.channel).ok_or(LogError::UnknownChannel(record.channel))?;
        let expected = self.next_index(record.channel);
        if record.index != expected {
            return Err(LogError::IndexGap {
                channel: meta.name.clone(),
                expected,
                got: record.index,
            });
        }
        self.next_index.insert(record.channel, expected + 1);
        self.records.push(record);
        Ok(())
    }

    /// Appends with the next index on the channel.
    pub fn push(&mut self, channel: ChannelId, stamp_ns: u64, payload: Vec<u8>) -> Result<(), LogError> {
        let index = self.next_index(channel);
        self.append(LogRecord {
            channel,
            index,
            stamp_ns,
            payload,
        })
    }

    /// Mutable access to stored timestamps, for fault injection in tests and tools.
    pub fn stamps_mut(&mut self) -> impl Iterator<Item = (&ChannelId, &mut u64)> {
        self.records.iter_mut().map(|r| (&r.channel, &mut r.stamp_ns))
    }

    pub fn write_to<W: Write>(&self, w: W, chunk_bytes: usize) -> Result<(), LogError> {
        let mut writer = LogWriter::new(w, &self.channels, self.origin_ns, chunk_bytes)?;
        for r in &self.records {
            writer.append(r)?;
        }
        writer.finish()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v, DEFAULT_CHUNK_BYTES).expect("writing to memory cannot fail");
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LogError> {
        read_log(bytes)
    }
}

/// Streaming writer; records are buffered into chunks of about `chunk_bytes`.
pub struct LogWriter<W: Write> {
    w: W,
    chunk: Vec<u8>,
    chunk_records: u32,
    chunk_bytes: usize,
    total: u64,
    next_index: HashMap<ChannelId, u64>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut w: W, channels: &[ChannelMeta], origin_ns: u64, chunk_bytes: usize) -> Result<Self, LogError> {
        let mut head = Vec::new();
        head.extend_from_slice(LOG_MAGIC);
        head.push(LOG_VERSION);
        head.extend_from_slice(&origin_ns.to_le_bytes());
        head.extend_from_slice(&(channels.len() as u32).to_le_bytes());
        let mut next_index = HashMap::new();
        for c in channels {
            head.extend_from_slice(&c.id.to_le_bytes());
            put_str(&mut head, &c.name)?;
            head.extend_from_slice(&c.rate_hz.unwrap_or(0).to_le_bytes());
            put_str(&mut head, &c.payload_type)?;
            next_index.insert(c.id, 0);
        }
        w.write_all(&head)?;
        Ok(Self {
            w,
            chunk: Vec::new(),
            chunk_records: 0,
            chunk_bytes: chunk_bytes.max(1),
            total: 0,
            next_index,
        })
    }

    pub fn append(&mut self, r: &LogRecord) -> Result<(), LogError> {
        let next = self.next_index.get_mut(&r.channel).ok_or(LogError::UnknownChannel(r.channel))?;
        if r.index != *next {
            return Err(LogError::IndexGap {
                channel: r.channel.to_string(),
                expected: *next,
                got: r.index,
            });
        }
        *next += 1;
        self.chunk.extend_from_slice(&r.channel.to_le_bytes());
        self.chunk.extend_from_slice(&r.index.to_le_bytes());
        self.chunk.extend_from_slice(&r.stamp_ns.to_le_bytes());
        self.chunk.extend_from_slice(&(r.payload.len() as u32).to_le_bytes());
        self.chunk.extend_from_slice(&r.payload);
        self.chunk_records += 1;
        self.total += 1;
        if self.chunk.len() >= self.chunk_bytes {
            self.flush_chunk()?;
        }
        Ok(())
    }

    fn flush_chunk(&mut self) -> Result<(), LogError> {
        if self.chunk_records == 0 {
            return Ok(());
        }
        self.w.write_all(b"CHNK")?;
        self.w.write_all(&self.chunk_records.to_le_bytes())?;
        self.w.write_all(&(self.chunk.len() as u32).to_le_bytes())?;
        self.w.write_all(&self.chunk)?;
        self.w.write_all(&crc32fast::hash(&self.chunk).to_le_bytes())?;
        self.chunk.clear();
        self.chunk_records = 0;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, LogError> {
        self.flush_chunk()?;
        self.w.write_all(b"END\0")?;
        self.w.write_all(&self.total.to_le_bytes())?;
        self.w.flush()?;
        Ok(self.w)
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<(), LogError> {
    let len = u16::try_from(s.len()).map_err(|_| LogError::ChannelTable(format!("string too long: {s:?}")))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], LogError> {
        if self.b.len() - self.pos < n {
            return Err(LogError::Format {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self, what: &str) -> Result<u16, LogError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32, LogError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64, LogError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn string(&mut self, what: &str) -> Result<String, LogError> {
        let at = self.pos;
        let n = self.u16(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| LogError::Format {
            offset: at,
            message: format!("{what} is not UTF-8"),
        })
    }
}

pub fn read_log(bytes: &[u8]) -> Result<Log, LogError> {
    let mut c = Cursor { b: bytes, pos: 0 };
    if c.take(7, "magic")? != LOG_MAGIC {
        return Err(LogError::Format {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let version = c.take(1, "version")?[0];
    if version != LOG_VERSION {
        return Err(LogError::Format {
            offset: 7,
            message: format!("unsupported version {version}"),
        });
    }
    let origin = c.u64("origin")?;
    let n = c.u32("channel count")?;
    let mut log = Log::default();
    log.origin_ns = origin;
    for _ in 0..n {
        let id = c.u16("channel id")?;
        let name = c.string("channel name")?;
        let rate = c.u32("channel rate")?;
        let payload_type = c.string("payload type")?;
        log.add_channel(ChannelMeta {
            id,
            name,
            rate_hz: (rate != 0).then_some(rate),
            payload_type,
        })?;
    }
    loop {
        let at = c.pos;
        match c.take(4, "chunk tag")? {
            b"CHNK" => {
                let count = c.u32("record count")?;
                let len = c.u32("chunk length")? as usize;
                let body = c.take(len, "chunk body")?;
                let crc = c.u32("chunk checksum")?;
                if crc32fast::hash(body) != crc {
                    return Err(LogError::Checksum { offset: at });
                }
                let mut rc = Cursor { b: body, pos: 0 };
                for _ in 0..count {
                    let channel = rc.u16("record")?;
                    let index = rc.u64("record")?;
                    let stamp_ns = rc.u64("record")?;
                    let plen = rc.u32("record")? as usize;
                    let payload = rc.take(plen, "payload")?.to_vec();
                    log.append(LogRecord {
                        channel,
                        index,
                        stamp_ns,
                        payload,
                    })?;
                }
                if rc.pos != body.len() {
                    return Err(LogError::Format {
                        offset: at,
                        message: "chunk body longer than its records".into(),
                    });
                }
            }
            b"END\0" => {
                let total = c.u64("record total")?;
                if total != log.records.len() as u64 {
                    return Err(LogError::Format {
                        offset: at,
                        message: format!("end marker counts {total} records, read {}", log.records.len()),
                    });
                }
                if c.pos != bytes.len() {
                    return Err(LogError::Format {
                        offset: c.pos,
                        message: "trailing bytes after end marker".into(),
                    });
                }
                return Ok(log);
            }
            _ => {
                return Err(LogError::Format {
                    offset: at,
                    message: "expected chunk or end marker".into(),
                })
            }
        }
    }
}

/// Rewrites timestamps on `channels` to `t0 + index/rate` (floored to ns).
/// `t0` defaults to the log origin. Payloads and ordering are untouched.
pub fn reindex(log: &Log, channels: &[ChannelId], t0_ns: Option<u64>) -> Result<Log, LogError> {
    let t0 = t0_ns.unwrap_or(log.origin_ns);
    let mut rates = HashMap::new();
    for &id in channels {
        let meta = log.channel(id).ok_or(LogError::UnknownChannel(id))?;
        let rate = meta.rate_hz.ok_or_else(|| LogError::UnknownRate(meta.name.clone()))?;
        rates.insert(id, rate);
    }
    let mut out = log.clone();
    for r in &mut out.records {
        if let Some(&rate) = rates.get(&r.channel) {
            r.stamp_ns = index_stamp_ns(t0, r.index, rate);
        }
    }
    Ok(out)
}

/// Every channel with a nominal rate.
pub fn periodic_channels(log: &Log) -> Vec<ChannelId> {
    log.channels.iter().filter(|c| c.rate_hz.is_some()).map(|c| c.id).collect()
}

/// Timestamp of the single record on `start_channel`.
pub fn start_stamp(log: &Log, start_channel: &str) -> Result<u64, LogError> {
    let id = log.channel_id(start_channel)?;
    let stamps: Vec<u64> = log.records_on(id).map(|r| r.stamp_ns).collect();
    if stamps.len() != 1 {
        return Err(LogError::StartRecord {
            channel: start_channel.to_string(),
            count: stamps.len(),
        });
    }
    Ok(stamps[0])
}

/// Keeps records stamped in `[t_start, t_start + duration]`, re-basing every
/// channel's indices to 0. The result's origin is `t_start`.
pub fn trim(log: &Log, start_channel: &str, duration_ns: u64) -> Result<Log, LogError> {
    let t_start = start_stamp(log, start_channel)?;
    let t_end = t_start.saturating_add(duration_ns);
    let mut out = Log::new(log.channels.clone())?;
    out.origin_ns = t_start;
    for r in &log.records {
        if r.stamp_ns >= t_start && r.stamp_ns <= t_end {
            out.push(r.channel, r.stamp_ns, r.payload.clone())?;
        }
    }
    Ok(out)
}

/// One CSV row per record on `channel`: index, timestamp, payload length, payload hex.
pub fn export_csv<W: Write>(log: &Log, channel: ChannelId, mut w: W) -> Result<(), LogError> {
    log.channel(channel).ok_or(LogError::UnknownChannel(channel))?;
    writeln!(w, "index,stamp_ns,payload_len,payload_hex")?;
    for r in log.records_on(channel) {
        let hex: String = r.payload.iter().map(|b| format!("{b:02x}")).collect();
        writeln!(w, "{},{},{},{}", r.index, r.stamp_ns, r.payload.len(), hex)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel_log() -> Log {
        let mut log = Log::default();
        let imu = log.add_named_channel("imu", Some(240), "imu").unwrap();
        let start = log.add_named_channel("start", None, "empty").unwrap();
        for k in 0..480u64 {
            log.push(imu, step_stamp_ns(k, 240), vec![k as u8]).unwrap();
            if k == 240 {
                log.push(start, step_stamp_ns(k, 240), vec![]).unwrap();
            }
        }
        log
    }

    #[test]
    fn stamp_arithmetic() {
        assert_eq!(index_stamp_ns(0, 5, 240), 20_833_333);
        assert_eq!(step_stamp_ns(240, 240), NS_PER_S);
    }

    #[test]
    fn first_index_zero_and_gaps_rejected() {
        let mut log = Log::default();
        let c = log.add_named_channel("a", Some(30), "x").unwrap();
        assert!(log
            .append(LogRecord {
                channel: c,
                index: 1,
                stamp_ns: 0,
                payload: vec![]
            })
            .is_err());
        for i in 0..4 {
            log.push(c, i, vec![]).unwrap();
        }
        let err = log.append(LogRecord {
            channel: c,
            index: 5,
            stamp_ns: 0,
            payload: vec![],
        });
        assert!(matches!(err, Err(LogError::IndexGap { expected: 4, got: 5, .. })));
        assert!(log.push(99, 0, vec![]).is_err());
    }

    #[test]
    fn round_trip_small_chunks() {
        let log = two_channel_log();
        let mut bytes = Vec::new();
        log.write_to(&mut bytes, 64).unwrap();
        assert_eq!(read_log(&bytes).unwrap(), log);
    }

    #[test]
    fn corrupt_chunk_detected() {
        let log = two_channel_log();
        let mut bytes = log.to_bytes();
        let n = bytes.len();
        bytes[n - 30] ^= 0xff;
        assert!(matches!(read_log(&bytes), Err(LogError::Checksum { .. })));
        assert!(read_log(&bytes[..n - 3]).is_err());
    }

    #[test]
    fn reindex_idempotent_and_rate_required() {
        let log = two_channel_log();
        let imu = log.channel_id("imu").unwrap();
        let once = reindex(&log, &[imu], None).unwrap();
        assert_eq!(once, log);
        assert_eq!(reindex(&once, &[imu], None).unwrap(), once);
        let start = log.channel_id("start").unwrap();
        assert!(matches!(reindex(&log, &[start], None), Err(LogError::UnknownRate(_))));
    }

    #[test]
    fn trim_window() {
        let log = two_channel_log();
        let t = trim(&log, "start", NS_PER_S / 2).unwrap();
        let imu = t.channel_id("imu").unwrap();
        assert_eq!(t.count(imu), 121);
        assert_eq!(t.records_on(imu).next().unwrap().index, 0);
        assert_eq!(t.origin_ns(), NS_PER_S);
        let zero = trim(&log, "start", 0).unwrap();
        assert_eq!(zero.count(imu), 1);
        // Reindexing a trimmed log from its origin restores the clean stamps.
        assert_eq!(reindex(&t, &[imu], None).unwrap(), t);
    }

    #[test]
    fn trim_requires_single_start() {
        let mut log = two_channel_log();
        let start = log.channel_id("start").unwrap();
        log.push(start, 5, vec![]).unwrap();
        assert!(matches!(trim(&log, "start", 10), Err(LogError::StartRecord { count: 2, .. })));
        let mut empty = Log::default();
        empty.add_named_channel("start", None, "empty").unwrap();
        assert!(matches!(trim(&empty, "start", 10), Err(LogError::StartRecord { count: 0, .. })));
    }

    #[test]
    fn csv_rows() {
        let log = two_channel_log();
        let mut out = Vec::new();
        export_csv(&log, log.channel_id("imu").unwrap(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 481);
        assert_eq!(text.lines().nth(2).unwrap(), "1,4166666,1,01");
    }
}
