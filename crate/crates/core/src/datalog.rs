//! Sequential frame log, train/test splitting and LSTM windowing.
//!
//! ```text
//! "FTLLOG1\0"                8 bytes
//! version                    u16 LE
//! channels, height, width    3 × u16 LE
//! dt                         f64 LE
//! descriptor length          u32 LE
//! descriptor                 UTF-8 scenario text, verbatim
//! record count               u64 LE (written when the log is sealed)
//! records, each:
//!   tick                     u64 LE
//!   timestamp                f64 LE
//!   steering                 f64 LE, [−100, 100]
//!   throttle                 f64 LE, [0, 100]
//!   present                  u8 (0 | 1)
//!   pedestrian               u8 (0 none, 1 A, 2 B)
//!   image                    channels × height × width u8
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sim::Identity;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FTLLOG1\0";
pub const VERSION: u16 = 1;
const RECORD_FIXED: usize = 8 + 8 + 8 + 8 + 1 + 1;
/// Logged commands are stored on a grid of this many steps per unit.
const COMMAND_STEPS: f64 = 100.0;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at byte {offset}: {detail}")]
    Corrupt { offset: u64, detail: String },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("split: {0}")]
    Split(String),
    #[error("lap of {len} frames is shorter than the window length {window}")]
    ShortLap { len: usize, window: usize },
}

type Result<T> = std::result::Result<T, LogError>;

#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub channels: u16,
    pub height: u16,
    pub width: u16,
    pub dt: f64,
    pub descriptor: String,
}

impl LogHeader {
    pub fn new(shape: [usize; 3], dt: f64, descriptor: impl Into<String>) -> Self {
        Self {
            channels: shape[0] as u16,
            height: shape[1] as u16,
            width: shape[2] as u16,
            dt,
            descriptor: descriptor.into(),
        }
    }

    pub fn image_len(&self) -> usize {
        self.channels as usize * self.height as usize * self.width as usize
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels as usize, self.height as usize, self.width as usize]
    }

    fn record_len(&self) -> usize {
        RECORD_FIXED + self.image_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub tick: u64,
    pub timestamp: f64,
    /// Quantized pixels, channel-major.
    pub image: Vec<u8>,
    pub steering: f64,
    pub throttle: f64,
    pub present: bool,
    pub pedestrian: Option<Identity>,
}

/// Snap a command to the logging grid.
pub fn quantize_command(v: f64) -> f64 {
    (v * COMMAND_STEPS).round() / COMMAND_STEPS
}

pub fn quantize_image(image: &Tensor) -> Vec<u8> {
    image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn dequantize_image(pixels: &[u8], shape: [usize; 3]) -> Tensor {
    Tensor::new(shape, pixels.iter().map(|&p| p as f64 / 255.0).collect()).expect("image length matches header")
}

impl FrameRecord {
    pub fn new(tick: u64, timestamp: f64, image: &Tensor, steering: f64, throttle: f64, present: bool, pedestrian: Option<Identity>) -> Self {
        Self {
            tick,
            timestamp,
            image: quantize_image(image),
            steering: quantize_command(steering.clamp(-100.0, 100.0)),
            throttle: quantize_command(throttle.clamp(0.0, 100.0)),
            present,
            pedestrian,
        }
    }

    pub fn image_tensor(&self, shape: [usize; 3]) -> Tensor {
        dequantize_image(&self.image, shape)
    }

    /// (steering, throttle) scaled to the regressor head ranges.
    pub fn normalized_target(&self) -> [f64; 2] {
        [self.steering / 100.0, self.throttle / 100.0]
    }

    fn validate(&self, header: &LogHeader) -> Result<()> {
        if self.image.len() != header.image_len() {
            return Err(LogError::Invalid(format!(
                "tick {}: image has {} bytes, header expects {}",
                self.tick,
                self.image.len(),
                header.image_len()
            )));
        }
        if !(-100.0..=100.0).contains(&self.steering) || !(0.0..=100.0).contains(&self.throttle) {
            return Err(LogError::Invalid(format!(
                "tick {}: command ({}, {}) out of range",
                self.tick, self.steering, self.throttle
            )));
        }
        Ok(())
    }
}

/// Inverse of [`FrameRecord::normalized_target`] for logged commands.
pub fn denormalize_target(t: [f64; 2]) -> (f64, f64) {
    (quantize_command(t[0] * 100.0), quantize_command(t[1] * 100.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogFile {
    pub header: LogHeader,
    pub records: Vec<FrameRecord>,
}

/// Streaming writer; the record count is patched in by [`LogWriter::finish`].
pub struct LogWriter {
    out: BufWriter<File>,
    header: LogHeader,
    count_at: u64,
    count: u64,
    last_tick: Option<u64>,
}

impl LogWriter {
    pub fn create(path: impl AsRef<Path>, header: LogHeader) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let head = encode_header(&header);
        out.write_all(&head)?;
        let count_at = head.len() as u64;
        out.write_all(&0u64.to_le_bytes())?;
        Ok(Self {
            out,
            header,
            count_at,
            count: 0,
            last_tick: None,
        })
    }

    pub fn append(&mut self, rec: &FrameRecord) -> Result<()> {
        rec.validate(&self.header)?;
        if self.last_tick.is_some_and(|t| rec.tick <= t) {
            return Err(LogError::Invalid(format!("tick {} does not follow {}", rec.tick, self.last_tick.unwrap())));
        }
        self.out.write_all(&encode_record(rec))?;
        self.last_tick = Some(rec.tick);
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush()?;
        let mut f = self.out.into_inner().map_err(|e| e.into_error())?;
        f.seek(SeekFrom::Start(self.count_at))?;
        f.write_all(&self.count.to_le_bytes())?;
        f.sync_all()?;
        Ok(self.count)
    }
}

fn encode_header(h: &LogHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + h.descriptor.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [h.channels, h.height, h.width] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&h.dt.to_le_bytes());
    out.extend_from_slice(&(h.descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(h.descriptor.as_bytes());
    out
}

fn encode_record(r: &FrameRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(RECORD_FIXED + r.image.len());
    out.extend_from_slice(&r.tick.to_le_bytes());
    out.extend_from_slice(&r.timestamp.to_le_bytes());
    out.extend_from_slice(&r.steering.to_le_bytes());
    out.extend_from_slice(&r.throttle.to_le_bytes());
    out.push(r.present as u8);
    out.push(r.pedestrian.map_or(0, Identity::code));
    out.extend_from_slice(&r.image);
    out
}

pub fn encode_log(log: &LogFile) -> Result<Vec<u8>> {
    let mut out = encode_header(&log.header);
    out.extend_from_slice(&(log.records.len() as u64).to_le_bytes());
    let mut last = None;
    for r in &log.records {
        r.validate(&log.header)?;
        if last.is_some_and(|t| r.tick <= t) {
            return Err(LogError::Invalid(format!("tick {} is not increasing", r.tick)));
        }
        last = Some(r.tick);
        out.extend_from_slice(&encode_record(r));
    }
    Ok(out)
}

pub fn write_log(path: impl AsRef<Path>, log: &LogFile) -> Result<()> {
    let mut w = LogWriter::create(path, log.header.clone())?;
    for r in &log.records {
        w.append(r)?;
    }
    w.finish()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn corrupt(&self, at: usize, detail: impl Into<String>) -> LogError {
        LogError::Corrupt {
            offset: at as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(self.pos, format!("truncated reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode_header(c: &mut Cursor) -> Result<(LogHeader, u64)> {
    if c.take(8, "magic")? != MAGIC {
        return Err(c.corrupt(0, "bad magic"));
    }
    let version = c.u16("version")?;
    if version != VERSION {
        return Err(c.corrupt(8, format!("unsupported version {version}")));
    }
    let (channels, height, width) = (c.u16("channels")?, c.u16("height")?, c.u16("width")?);
    let dt = c.f64("dt")?;
    let len = c.u32("descriptor length")? as usize;
    let at = c.pos;
    let descriptor = String::from_utf8(c.take(len, "descriptor")?.to_vec()).map_err(|_| c.corrupt(at, "descriptor is not UTF-8"))?;
    let count = c.u64("record count")?;
    Ok((
        LogHeader {
            channels,
            height,
            width,
            dt,
            descriptor,
        },
        count,
    ))
}

/// Check that `body_len` bytes after the header hold exactly `count` records.
fn check_body(header: &LogHeader, count: u64, body_at: u64, body_len: u64) -> Result<()> {
    let rec_len = header.record_len() as u64;
    if count.checked_mul(rec_len) == Some(body_len) {
        return Ok(());
    }
    let whole = body_len / rec_len;
    let offset = if whole < count { body_at + whole * rec_len } else { body_at - 8 };
    Err(LogError::Corrupt {
        offset,
        detail: format!("header declares {count} records but {body_len} bytes of {rec_len}-byte records follow"),
    })
}

/// Decode one record starting at absolute offset `at`.
fn decode_record(buf: &[u8], at: usize, header: &LogHeader, last: Option<u64>) -> Result<FrameRecord> {
    let mut c = Cursor { buf, pos: 0 };
    let err = |rel: usize, detail: String| LogError::Corrupt {
        offset: (at + rel) as u64,
        detail,
    };
    let tick = c.u64("tick")?;
    if last.is_some_and(|t| tick <= t) {
        return Err(err(0, format!("tick {tick} does not follow {}", last.unwrap())));
    }
    let timestamp = c.f64("timestamp")?;
    let steering = c.f64("steering")?;
    let throttle = c.f64("throttle")?;
    let present = match c.take(1, "present flag")?[0] {
        0 => false,
        1 => true,
        v => return Err(err(32, format!("present flag {v}"))),
    };
    let pedestrian = match c.take(1, "pedestrian id")?[0] {
        0 => None,
        v => Some(Identity::from_code(v).ok_or_else(|| err(33, format!("pedestrian id {v}")))?),
    };
    let image = c.take(header.image_len(), "image")?.to_vec();
    let rec = FrameRecord {
        tick,
        timestamp,
        image,
        steering,
        throttle,
        present,
        pedestrian,
    };
    rec.validate(header).map_err(|e| err(0, e.to_string()))?;
    Ok(rec)
}

/// Parse a whole log. Fails closed: any defect yields an error and no records.
pub fn decode_log(bytes: &[u8]) -> Result<LogFile> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let (header, count) = decode_header(&mut c)?;
    check_body(&header, count, c.pos as u64, (bytes.len() - c.pos) as u64)?;
    let rec_len = header.record_len();
    let mut records = Vec::with_capacity(count as usize);
    let mut last = None;
    for k in 0..count as usize {
        let at = c.pos + k * rec_len;
        let rec = decode_record(&bytes[at..at + rec_len], at, &header, last)?;
        last = Some(rec.tick);
        records.push(rec);
    }
    Ok(LogFile { header, records })
}

/// Record-at-a-time reader for logs too large to hold in memory. The
/// header and file length are validated on open, so a truncated file fails
/// before any record is produced.
pub struct LogReader {
    input: BufReader<File>,
    header: LogHeader,
    count: u64,
    next: u64,
    offset: u64,
    last: Option<u64>,
    buf: Vec<u8>,
}

impl LogReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut input = BufReader::new(file);
        let mut head = vec![0u8; 28];
        let got = read_up_to(&mut input, &mut head)?;
        head.truncate(got);
        if got == 28 {
            let desc_len = u32::from_le_bytes(head[24..28].try_into().unwrap()) as usize;
            let mut rest = vec![0u8; desc_len + 8];
            let got = read_up_to(&mut input, &mut rest)?;
            head.extend_from_slice(&rest[..got]);
        }
        let mut c = Cursor { buf: &head, pos: 0 };
        let (header, count) = decode_header(&mut c)?;
        let body_at = c.pos as u64;
        check_body(&header, count, body_at, file_len - body_at)?;
        let buf = vec![0u8; header.record_len()];
        Ok(Self {
            input,
            header,
            count,
            next: 0,
            offset: body_at,
            last: None,
            buf,
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    Ok(got)
}

impl Iterator for LogReader {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next == self.count {
            return None;
        }
        let item = self
            .input
            .read_exact(&mut self.buf)
            .map_err(LogError::from)
            .and_then(|_| decode_record(&self.buf, self.offset as usize, &self.header, self.last));
        match &item {
            Ok(rec) => {
                self.last = Some(rec.tick);
                self.next += 1;
                self.offset += self.buf.len() as u64;
            }
            Err(_) => self.next = self.count,
        }
        Some(item)
    }
}

pub fn read_log(path: impl AsRef<Path>) -> Result<LogFile> {
    decode_log(&std::fs::read(path)?)
}

/// How to hold out a test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPolicy {
    /// Shuffle individual items; round(n × fraction) go to test.
    Frames { test_fraction: f64 },
    /// Hold out this many whole laps.
    Laps { test_laps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split `n` items (frames or laps, per `policy`) into disjoint index sets
/// that together cover `0..n`. Both sets come back sorted.
pub fn split_train_test(n: usize, policy: SplitPolicy, seed: u64) -> Result<Split> {
    let n_test = match policy {
        SplitPolicy::Frames { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(LogError::Split(format!("test fraction {test_fraction} outside (0, 1)")));
            }
            (n as f64 * test_fraction).round() as usize
        }
        SplitPolicy::Laps { test_laps } => {
            if test_laps == 0 || n <= test_laps {
                return Err(LogError::Split(format!("{n} laps cannot hold out {test_laps} and still train")));
            }
            test_laps
        }
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

/// Lap split holding out `per_group` laps from every group (e.g. per
/// walking direction). `groups[i]` is the group of lap `i`.
pub fn split_laps_stratified<K: Ord + Clone>(groups: &[K], per_group: usize, seed: u64) -> Result<Split> {
    let mut keys: Vec<K> = groups.to_vec();
    keys.sort();
    keys.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, key) in keys.iter().enumerate() {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| &groups[i] == key).collect();
        let s = split_train_test(members.len(), SplitPolicy::Laps { test_laps: per_group }, seed.wrapping_add(g as u64))?;
        train.extend(s.train.iter().map(|&i| members[i]));
        test.extend(s.test.iter().map(|&i| members[i]));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// One stride-1 window into a lap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sequence {
    /// Index of the first frame in the lap.
    pub start: usize,
    pub len: usize,
    /// Final frame's (steering, throttle), normalized.
    pub target: [f64; 2],
}

impl Sequence {
    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

pub fn make_sequences(lap: &[FrameRecord], window: usize) -> Result<Vec<Sequence>> {
    if window == 0 || lap.len() < window {
        return Err(LogError::ShortLap { len: lap.len(), window });
    }
    Ok((0..=lap.len() - window)
        .map(|start| Sequence {
            start,
            len: window,
            target: lap[start + window - 1].normalized_target(),
        })
        .collect())
}
