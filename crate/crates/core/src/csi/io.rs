//! Trace file formats.
//!
//! Binary (`.csit`), all little-endian:
//!
//! ```text
//! "CSIT" | version u16 | n_rx u16 | n_tx u16 | n_subcarriers u16
//! | packet_rate f64 | carrier_wavelength f64 | frame_count u64
//! | metadata_len u32 | metadata (UTF-8 JSON object)
//! | frame_count × ( timestamp f64 | n_rx × n_subcarriers × (re f32, im f32) )
//! ```
//!
//! JSON lines (`.jsonl`): the first line is a header object with the same
//! fields, every following line is `{"t": <f64>, "csi": [[[re, im], ...], ...]}`
//! with one inner array per antenna.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ComplexSample, CsiFrame, CsiTrace, Metadata};

pub const MAGIC: &[u8; 4] = b"CSIT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 40;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a trace file: bad magic number")]
    BadMagic,
    #[error("unsupported trace format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("dimension mismatch in frame {frame}: expected {expected}, found {found}")]
    DimensionMismatch {
        frame: usize,
        expected: String,
        found: String,
    },
    #[error("truncated payload: expected {expected} bytes/frames, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unexpected data after the last frame")]
    TrailingData,
    #[error("timestamp of frame {frame} is not strictly increasing")]
    NonMonotoneTimestamps { frame: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("malformed JSON on line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

impl TraceError {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::Io(_) => "io",
            TraceError::BadMagic => "bad-magic",
            TraceError::UnsupportedVersion(_) => "unsupported-version",
            TraceError::DimensionMismatch { .. } => "dimension-mismatch",
            TraceError::Truncated { .. } => "truncated",
            TraceError::TrailingData => "trailing-data",
            TraceError::NonMonotoneTimestamps { .. } => "non-monotone-timestamps",
            TraceError::InvalidHeader(_) => "invalid-header",
            TraceError::Json { .. } => "malformed-json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Binary,
    JsonLines,
}

impl TraceFormat {
    /// `.jsonl` / `.json` select JSON lines, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TraceFormat::JsonLines,
            _ => TraceFormat::Binary,
        }
    }
}

/// Header line of the JSON-lines format.
#[derive(Debug, Serialize, Deserialize)]
struct JsonHeader {
    format: String,
    version: u16,
    n_rx: usize,
    n_tx: usize,
    n_subcarriers: usize,
    packet_rate: f64,
    carrier_wavelength: f64,
    frame_count: u64,
    #[serde(default)]
    metadata: Metadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonFrame {
    t: f64,
    csi: Vec<Vec<[f32; 2]>>,
}

fn check_header_dims(trace: &CsiTrace) -> Result<(), TraceError> {
    for (name, v) in [("n_rx", trace.n_rx), ("n_tx", trace.n_tx), ("n_subcarriers", trace.n_subcarriers)] {
        if v > u16::MAX as usize {
            return Err(TraceError::InvalidHeader(format!("{name} = {v} does not fit in u16")));
        }
    }
    Ok(())
}

fn check_frame_dims(trace: &CsiTrace) -> Result<(), TraceError> {
    for (i, f) in trace.frames.iter().enumerate() {
        if f.n_rx != trace.n_rx || f.n_subcarriers != trace.n_subcarriers || !f.is_consistent() {
            return Err(TraceError::DimensionMismatch {
                frame: i,
                expected: format!("{}x{}", trace.n_rx, trace.n_subcarriers),
                found: format!("{}x{} ({} values)", f.n_rx, f.n_subcarriers, f.values.len()),
            });
        }
    }
    Ok(())
}

fn check_monotone(frames: &[CsiFrame]) -> Result<(), TraceError> {
    for i in 1..frames.len() {
        // `!(a > b)` also rejects NaN timestamps.
        if !(frames[i].timestamp > frames[i - 1].timestamp) {
            return Err(TraceError::NonMonotoneTimestamps { frame: i });
        }
    }
    Ok(())
}

/// Serializes a trace into the binary format.
pub fn encode_binary(trace: &CsiTrace) -> Result<Vec<u8>, TraceError> {
    let mut buf = Vec::with_capacity(
        HEADER_LEN + trace.frames.len() * (8 + 8 * trace.n_rx * trace.n_subcarriers),
    );
    write_binary(trace, &mut buf)?;
    Ok(buf)
}

fn write_binary<W: Write>(trace: &CsiTrace, w: &mut W) -> Result<(), TraceError> {
    check_header_dims(trace)?;
    check_frame_dims(trace)?;
    let meta = serde_json::to_vec(&trace.metadata).map_err(|e| TraceError::InvalidHeader(e.to_string()))?;
    let meta_len = u32::try_from(meta.len())
        .map_err(|_| TraceError::InvalidHeader("metadata larger than 4 GiB".into()))?;

    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(trace.n_rx as u16).to_le_bytes())?;
    w.write_all(&(trace.n_tx as u16).to_le_bytes())?;
    w.write_all(&(trace.n_subcarriers as u16).to_le_bytes())?;
    w.write_all(&trace.packet_rate.to_le_bytes())?;
    w.write_all(&trace.carrier_wavelength.to_le_bytes())?;
    w.write_all(&(trace.frames.len() as u64).to_le_bytes())?;
    w.write_all(&meta_len.to_le_bytes())?;
    w.write_all(&meta)?;
    for f in &trace.frames {
        w.write_all(&f.timestamp.to_le_bytes())?;
        for v in &f.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TraceError> {
        if self.buf.len() - self.pos < n {
            return Err(TraceError::Truncated {
                expected: self.pos + n,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TraceError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TraceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TraceError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TraceError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses the binary format.
pub fn decode_binary(bytes: &[u8]) -> Result<CsiTrace, TraceError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(TraceError::BadMagic);
    }
    let mut c = Cursor { buf: bytes, pos: 4 };
    let version = c.u16()?;
    if version != FORMAT_VERSION {
        return Err(TraceError::UnsupportedVersion(version));
    }
    let n_rx = c.u16()? as usize;
    let n_tx = c.u16()? as usize;
    let n_sub = c.u16()? as usize;
    let packet_rate = c.f64()?;
    let carrier_wavelength = c.f64()?;
    let frame_count = usize::try_from(c.u64()?)
        .map_err(|_| TraceError::InvalidHeader("frame count overflows usize".into()))?;
    let meta_len = c.u32()? as usize;
    let meta_bytes = c.take(meta_len)?;
    let metadata: Metadata = if meta_bytes.is_empty() {
        Metadata::new()
    } else {
        serde_json::from_slice(meta_bytes).map_err(|e| TraceError::InvalidHeader(format!("metadata: {e}")))?
    };

    let cells = n_rx * n_sub;
    let frame_bytes = 8 + 8 * cells;
    let remaining = bytes.len() - c.pos;
    let expected = frame_count.checked_mul(frame_bytes).ok_or_else(|| {
        TraceError::InvalidHeader("frame count x frame size overflows".into())
    })?;
    if remaining != expected {
        return Err(payload_size_error(remaining, expected, frame_count, n_rx, n_sub));
    }

    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let timestamp = c.f64()?;
        let raw = c.take(8 * cells)?;
        let values = raw
            .chunks_exact(8)
            .map(|p| {
                ComplexSample::new(
                    f32::from_le_bytes(p[..4].try_into().unwrap()),
                    f32::from_le_bytes(p[4..].try_into().unwrap()),
                )
            })
            .collect();
        frames.push(CsiFrame::new(timestamp, n_rx, n_sub, values));
    }
    check_monotone(&frames)?;

    Ok(CsiTrace {
        packet_rate,
        n_rx,
        n_tx,
        n_subcarriers: n_sub,
        carrier_wavelength,
        frames,
        metadata,
    })
}

/// Distinguishes a payload written with different dimensions from a cut-off file.
fn payload_size_error(remaining: usize, expected: usize, frame_count: usize, n_rx: usize, n_sub: usize) -> TraceError {
    if frame_count > 0 && remaining % frame_count == 0 {
        let per_frame = remaining / frame_count;
        if per_frame > 8 && (per_frame - 8) % 8 == 0 {
            let cells = (per_frame - 8) / 8;
            let guess = if n_sub > 0 && cells % n_sub == 0 {
                format!("{}x{}", cells / n_sub, n_sub)
            } else if n_rx > 0 && cells % n_rx == 0 {
                format!("{}x{}", n_rx, cells / n_rx)
            } else {
                format!("{cells} cells")
            };
            return TraceError::DimensionMismatch {
                frame: 0,
                expected: format!("{n_rx}x{n_sub}"),
                found: guess,
            };
        }
    }
    if remaining < expected {
        TraceError::Truncated { expected, found: remaining }
    } else {
        TraceError::TrailingData
    }
}

fn json_err(line: usize) -> impl Fn(serde_json::Error) -> TraceError {
    move |source| TraceError::Json { line, source }
}

fn write_jsonl<W: Write>(trace: &CsiTrace, w: &mut W) -> Result<(), TraceError> {
    check_header_dims(trace)?;
    check_frame_dims(trace)?;
    let header = JsonHeader {
        format: "CSIT".into(),
        version: FORMAT_VERSION,
        n_rx: trace.n_rx,
        n_tx: trace.n_tx,
        n_subcarriers: trace.n_subcarriers,
        packet_rate: trace.packet_rate,
        carrier_wavelength: trace.carrier_wavelength,
        frame_count: trace.frames.len() as u64,
        metadata: trace.metadata.clone(),
    };
    serde_json::to_writer(&mut *w, &header).map_err(json_err(1))?;
    w.write_all(b"\n")?;
    for (i, f) in trace.frames.iter().enumerate() {
        let frame = JsonFrame {
            t: f.timestamp,
            csi: (0..f.n_rx)
                .map(|rx| f.antenna(rx).iter().map(|v| [v.re, v.im]).collect())
                .collect(),
        };
        serde_json::to_writer(&mut *w, &frame).map_err(json_err(i + 2))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<R: BufRead>(r: R) -> Result<CsiTrace, TraceError> {
    let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (lineno, first) = lines.next().ok_or(TraceError::BadMagic)?;
    let header: JsonHeader = serde_json::from_str(&first?).map_err(json_err(lineno))?;
    if header.format != "CSIT" {
        return Err(TraceError::BadMagic);
    }
    if header.version != FORMAT_VERSION {
        return Err(TraceError::UnsupportedVersion(header.version));
    }
    let frame_count = header.frame_count as usize;
    let mut frames = Vec::with_capacity(frame_count);
    for (lineno, line) in lines {
        if frames.len() == frame_count {
            return Err(TraceError::TrailingData);
        }
        let jf: JsonFrame = serde_json::from_str(&line?).map_err(json_err(lineno))?;
        let idx = frames.len();
        let shape_ok = jf.csi.len() == header.n_rx && jf.csi.iter().all(|row| row.len() == header.n_subcarriers);
        if !shape_ok {
            let found = match jf.csi.first() {
                Some(row) => format!("{}x{}", jf.csi.len(), row.len()),
                None => "0 antennas".to_string(),
            };
            return Err(TraceError::DimensionMismatch {
                frame: idx,
                expected: format!("{}x{}", header.n_rx, header.n_subcarriers),
                found,
            });
        }
        let values = jf
            .csi
            .iter()
            .flat_map(|row| row.iter().map(|p| ComplexSample::new(p[0], p[1])))
            .collect();
        frames.push(CsiFrame::new(jf.t, header.n_rx, header.n_subcarriers, values));
    }
    if frames.len() != frame_count {
        return Err(TraceError::Truncated {
            expected: frame_count,
            found: frames.len(),
        });
    }
    check_monotone(&frames)?;
    Ok(CsiTrace {
        packet_rate: header.packet_rate,
        n_rx: header.n_rx,
        n_tx: header.n_tx,
        n_subcarriers: header.n_subcarriers,
        carrier_wavelength: header.carrier_wavelength,
        frames,
        metadata: header.metadata,
    })
}

/// Parses a trace from bytes, detecting the format from its first byte.
pub fn decode(bytes: &[u8]) -> Result<CsiTrace, TraceError> {
    match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'{') => read_jsonl(BufReader::new(bytes)),
        _ => decode_binary(bytes),
    }
}

/// Reads a trace file in either format.
pub fn read_trace(path: impl AsRef<Path>) -> Result<CsiTrace, TraceError> {
    decode(&fs::read(path)?)
}

/// Writes a trace file in the requested format.
pub fn write_trace(trace: &CsiTrace, path: impl AsRef<Path>, format: TraceFormat) -> Result<(), TraceError> {
    // Serialize fully before touching the filesystem so a failed write leaves no partial file.
    let bytes = match format {
        TraceFormat::Binary => encode_binary(trace)?,
        TraceFormat::JsonLines => {
            let mut buf = Vec::new();
            write_jsonl(trace, &mut buf)?;
            buf
        }
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_trace(n_rx: usize, n_sub: usize, frames: usize) -> CsiTrace {
        let mut t = CsiTrace::new(2000.0, n_rx, n_sub);
        t.metadata.insert("level_ml".into(), json!(800.0));
        t.metadata.insert("note".into(), json!("unit"));
        for i in 0..frames {
            let values = (0..n_rx * n_sub)
                .map(|k| ComplexSample::new((i * 31 + k) as f32 * 0.013 - 1.7, (k as f32).sin() / 3.0))
                .collect();
            t.frames.push(CsiFrame::new(i as f64 / 2000.0, n_rx, n_sub, values));
        }
        t
    }

    #[test]
    fn binary_round_trip_is_identity() {
        let t = sample_trace(3, 30, 100);
        let bytes = encode_binary(&t).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + serde_json::to_vec(&t.metadata).unwrap().len() + 100 * (8 + 8 * 90));
        assert_eq!(decode(&bytes).unwrap(), t);
        assert_eq!(encode_binary(&t).unwrap(), bytes);
    }

    #[test]
    fn jsonl_round_trip_is_identity() {
        let t = sample_trace(3, 30, 100);
        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        assert_eq!(decode(&buf).unwrap(), t);
    }

    #[test]
    fn header_declares_more_antennas_than_payload() {
        let t = sample_trace(2, 30, 10);
        let mut bytes = encode_binary(&t).unwrap();
        bytes[6..8].copy_from_slice(&3u16.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(TraceError::DimensionMismatch { .. })));

        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"n_rx\":2", "\"n_rx\":3", 1);
        let err = decode(text.as_bytes()).unwrap_err();
        assert_eq!(err.code(), "dimension-mismatch");
    }

    #[test]
    fn distinct_error_codes() {
        let t = sample_trace(2, 4, 10);
        let bytes = encode_binary(&t).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode(&bad).unwrap_err().code(), "bad-magic");

        let mut bad = bytes.clone();
        bad[4..6].copy_from_slice(&9u16.to_le_bytes());
        assert_eq!(decode(&bad).unwrap_err().code(), "unsupported-version");

        let cut = &bytes[..bytes.len() - 5];
        assert_eq!(decode(cut).unwrap_err().code(), "truncated");

        let cut = &bytes[..20];
        assert_eq!(decode(cut).unwrap_err().code(), "truncated");

        let mut shuffled = t.clone();
        shuffled.frames.swap(2, 5);
        let b = encode_binary(&shuffled).unwrap();
        assert_eq!(decode(&b).unwrap_err().code(), "non-monotone-timestamps");

        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0u8; 3]);
        assert_eq!(decode(&extra).unwrap_err().code(), "trailing-data");
    }

    #[test]
    fn empty_trace_round_trips() {
        let t = sample_trace(3, 30, 0);
        assert_eq!(decode(&encode_binary(&t).unwrap()).unwrap(), t);
        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        assert_eq!(decode(&buf).unwrap(), t);
    }

    #[test]
    fn writer_rejects_inconsistent_frames() {
        let mut t = sample_trace(3, 4, 3);
        t.frames[1] = CsiFrame::zeros(t.frames[1].timestamp, 2, 4);
        assert!(matches!(encode_binary(&t), Err(TraceError::DimensionMismatch { frame: 1, .. })));
    }

    #[test]
    fn file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let t = sample_trace(3, 30, 25);
        for name in ["a.csit", "a.jsonl"] {
            let p = dir.path().join(name);
            write_trace(&t, &p, TraceFormat::from_path(&p)).unwrap();
            assert_eq!(read_trace(&p).unwrap(), t);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            // Arbitrary f32 bit patterns (finite or not) survive the binary format bit-for-bit.
            #[test]
            fn binary_preserves_bits(raw in proptest::collection::vec(any::<u32>(), 2 * 2 * 3 * 4)) {
                let mut t = CsiTrace::new(2000.0, 2, 3);
                for i in 0..4 {
                    let vals = raw[i * 12..(i + 1) * 12]
                        .chunks(2)
                        .map(|p| ComplexSample::new(f32::from_bits(p[0]), f32::from_bits(p[1])))
                        .collect();
                    t.frames.push(CsiFrame::new(i as f64 * 0.5e-3, 2, 3, vals));
                }
                let bytes = encode_binary(&t).unwrap();
                let back = decode(&bytes).unwrap();
                for (a, b) in t.frames.iter().zip(&back.frames) {
                    for (x, y) in a.values.iter().zip(&b.values) {
                        prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                        prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
                    }
                }
                prop_assert_eq!(encode_binary(&back).unwrap(), bytes);
            }

            #[test]
            fn jsonl_round_trip_finite(vals in proptest::collection::vec(-1e6f32..1e6, 2 * 2 * 5), rate in 1.0f64..5000.0) {
                let mut t = CsiTrace::new(rate, 2, 5);
                t.frames.push(CsiFrame::new(0.0, 2, 5, vals.chunks(2).map(|p| ComplexSample::new(p[0], p[1])).collect()));
                let mut buf = Vec::new();
                write_jsonl(&t, &mut buf).unwrap();
                prop_assert_eq!(decode(&buf).unwrap(), t);
            }
        }
    }
}
