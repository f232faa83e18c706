//! Binary and CSV encodings of an event stream.
//!
//! Binary layout, all integers little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `SFWM`                              |
//! | 2     | format version (u16)                      |
//! | 4     | header length H (u32)                     |
//! | H     | header, UTF-8 JSON                        |
//! | 13·n  | records: cycle u64, time_ps u32, channel u8 |

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use super::{Channel, EventRecord, EventStream, StreamHeader};

pub const MAGIC: [u8; 4] = *b"SFWM";
pub const FORMAT_VERSION: u16 = 1;
pub const RECORD_BYTES: usize = 13;
const PREAMBLE: usize = 10;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an event stream: bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    Version(u16),
    #[error("file truncated at byte offset {offset}: {detail}")]
    Truncated { offset: u64, detail: String },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{extra} unexpected trailing bytes at byte offset {offset}")]
    Trailing { offset: u64, extra: u64 },
    #[error("record {index}: invalid channel {value}")]
    Channel { index: u64, value: u8 },
    #[error("record {index}: out of order")]
    Unsorted { index: u64 },
    #[error("record {index}: time {time_ps} ps lies outside every generation window")]
    OutOfWindow { index: u64, time_ps: u32 },
    #[error("record {index}: cycle {cycle} is beyond the stream's {cycles} cycles")]
    Cycle { index: u64, cycle: u64, cycles: u64 },
    #[error("csv line {line}: {detail}")]
    Csv { line: u64, detail: String },
}

pub(crate) fn validate_records(
    h: &StreamHeader,
    records: &[EventRecord],
    first_index: u64,
) -> Result<(), FormatError> {
    let mut prev: Option<(u64, u32, Channel)> = None;
    for (i, r) in records.iter().enumerate() {
        let index = first_index + i as u64;
        if r.cycle >= h.cycles {
            return Err(FormatError::Cycle {
                index,
                cycle: r.cycle,
                cycles: h.cycles,
            });
        }
        if h.window_of(r.time_ps).is_none() {
            return Err(FormatError::OutOfWindow {
                index,
                time_ps: r.time_ps,
            });
        }
        let key = (r.cycle, r.time_ps, r.channel);
        if prev.is_some_and(|p| p > key) {
            return Err(FormatError::Unsorted { index });
        }
        prev = Some(key);
    }
    Ok(())
}

pub fn write_stream<W: Write>(stream: &EventStream, sink: W) -> Result<(), FormatError> {
    let mut w = std::io::BufWriter::new(sink);
    let mut header = stream.header.clone();
    header.record_count = stream.records.len() as u64;
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::Header(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| FormatError::Header("header too large".into()))?;
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = [0u8; RECORD_BYTES];
    for r in &stream.records {
        buf[..8].copy_from_slice(&r.cycle.to_le_bytes());
        buf[8..12].copy_from_slice(&r.time_ps.to_le_bytes());
        buf[12] = r.channel as u8;
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stream<R: Read>(source: R) -> Result<EventStream, FormatError> {
    let mut bytes = Vec::new();
    BufReader::new(source).read_to_end(&mut bytes)?;
    let total = bytes.len() as u64;
    if bytes.len() < PREAMBLE {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FormatError::Truncated {
            offset: total,
            detail: format!("preamble needs {PREAMBLE} bytes"),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::Version(version));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = PREAMBLE + hlen;
    if bytes.len() < body {
        return Err(FormatError::Truncated {
            offset: total,
            detail: format!("header declares {hlen} bytes, {} present", bytes.len() - PREAMBLE),
        });
    }
    let header: StreamHeader =
        serde_json::from_slice(&bytes[PREAMBLE..body]).map_err(|e| FormatError::Header(e.to_string()))?;
    let n = header.record_count;
    let have = (bytes.len() - body) as u64;
    let need = n * RECORD_BYTES as u64;
    if have < need {
        let whole = have / RECORD_BYTES as u64;
        return Err(FormatError::Truncated {
            offset: body as u64 + whole * RECORD_BYTES as u64,
            detail: format!("record {whole} of {n} is incomplete"),
        });
    }
    if have > need {
        return Err(FormatError::Trailing {
            offset: body as u64 + need,
            extra: have - need,
        });
    }
    let mut records = Vec::with_capacity(n as usize);
    for (i, chunk) in bytes[body..].chunks_exact(RECORD_BYTES).enumerate() {
        let value = chunk[12];
        let channel = Channel::from_u8(value).ok_or(FormatError::Channel {
            index: i as u64,
            value,
        })?;
        records.push(EventRecord {
            cycle: u64::from_le_bytes(chunk[..8].try_into().unwrap()),
            time_ps: u32::from_le_bytes(chunk[8..12].try_into().unwrap()),
            channel,
        });
    }
    validate_records(&header, &records, 0)?;
    Ok(EventStream { header, records })
}

/// Writes `cycle,time_ns,channel` rows; times keep full picosecond precision.
pub fn write_csv<W: Write>(records: &[EventRecord], sink: W) -> Result<(), FormatError> {
    let mut w = std::io::BufWriter::new(sink);
    writeln!(w, "cycle,time_ns,channel")?;
    for r in records {
        writeln!(w, "{},{}.{:03},{}", r.cycle, r.time_ps / 1000, r.time_ps % 1000, r.channel as u8)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`]. Ordering is checked; window
/// membership needs a header and is left to the caller.
pub fn read_csv<R: Read>(source: R) -> Result<Vec<EventRecord>, FormatError> {
    let mut out = Vec::new();
    let mut prev: Option<(u64, u32, Channel)> = None;
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let ln = i as u64 + 1;
        let bad = |detail: String| FormatError::Csv { line: ln, detail };
        if i == 0 {
            if line.trim() != "cycle,time_ns,channel" {
                return Err(bad(format!("expected header `cycle,time_ns,channel`, got `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let (Some(c), Some(t), Some(ch), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad("expected three fields".into()));
        };
        let cycle: u64 = c.trim().parse().map_err(|e| bad(format!("cycle: {e}")))?;
        let time_ps = parse_ns_to_ps(t.trim()).ok_or_else(|| bad(format!("time_ns: cannot read `{t}`")))?;
        let v: u8 = ch.trim().parse().map_err(|e| bad(format!("channel: {e}")))?;
        let channel = Channel::from_u8(v).ok_or_else(|| bad(format!("channel {v} not in 0..=2")))?;
        let key = (cycle, time_ps, channel);
        if prev.is_some_and(|p| p > key) {
            return Err(FormatError::Unsorted { index: out.len() as u64 });
        }
        prev = Some(key);
        out.push(EventRecord { cycle, time_ps, channel });
    }
    Ok(out)
}

/// Exact decimal ns → integer ps; at most three fractional digits.
fn parse_ns_to_ps(s: &str) -> Option<u32> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 3 || int.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let i: u64 = int.parse().ok()?;
    let f: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse::<u64>().ok()? * 10u64.pow(3 - frac.len() as u32)
    };
    u32::try_from(i.checked_mul(1000)?.checked_add(f)?).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_sim::{generate, SourceRates, Wavepacket};
    use crate::params::DetectionParams;

    fn sample() -> EventStream {
        let src = SourceRates { r_s: 4e5, r_as: 4e5, rp_s: 0.7, rp_as: 0.7 };
        generate(&src, &Wavepacket::delta(40.0), &DetectionParams::default(), 9, 5.0, "abc").unwrap()
    }

    fn bytes(s: &EventStream) -> Vec<u8> {
        let mut v = Vec::new();
        write_stream(s, &mut v).unwrap();
        v
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        let s = sample();
        assert!(!s.records.is_empty());
        let b = bytes(&s);
        let back = read_stream(&b[..]).unwrap();
        assert_eq!(back, s);
        assert_eq!(bytes(&back), b);
        assert_eq!(&b[..4], b"SFWM");
    }

    #[test]
    fn empty_stream_is_valid() {
        let mut s = sample();
        s.records.clear();
        s.header.record_count = 0;
        let b = bytes(&s);
        assert_eq!(read_stream(&b[..]).unwrap().records.len(), 0);
    }

    #[test]
    fn truncation_names_the_offset() {
        let s = sample();
        let b = bytes(&s);
        let cut = b.len() - 5;
        match read_stream(&b[..cut]) {
            Err(FormatError::Truncated { offset, .. }) => {
                assert_eq!(offset as usize, b.len() - RECORD_BYTES);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_stream(&b[..7]), Err(FormatError::Truncated { offset: 7, .. })));
        assert!(matches!(read_stream(&b[..20]), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn corrupt_inputs() {
        let s = sample();
        let mut b = bytes(&s);
        b[0] = b'X';
        assert!(matches!(read_stream(&b[..]), Err(FormatError::BadMagic(_))));
        let mut b = bytes(&s);
        b[4] = 9;
        assert!(matches!(read_stream(&b[..]), Err(FormatError::Version(9))));
        let mut b = bytes(&s);
        let last = b.len() - 1;
        b[last] = 7;
        assert!(matches!(read_stream(&b[..]), Err(FormatError::Channel { value: 7, .. })));
        let mut b = bytes(&s);
        b.push(0);
        assert!(matches!(read_stream(&b[..]), Err(FormatError::Trailing { extra: 1, .. })));
    }

    #[test]
    fn ordering_and_window_checks() {
        let mut s = sample();
        s.records.swap(0, 1);
        if s.records[0] != s.records[1] {
            assert!(matches!(read_stream(&bytes(&s)[..]), Err(FormatError::Unsorted { index: 1 })));
        }
        let mut s = sample();
        s.records[0].time_ps = 15_000_000; // between the first two windows
        assert!(matches!(
            read_stream(&bytes(&s)[..]),
            Err(FormatError::OutOfWindow { index: 0, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let s = sample();
        let mut v = Vec::new();
        write_csv(&s.records, &mut v).unwrap();
        let text = String::from_utf8(v.clone()).unwrap();
        assert!(text.starts_with("cycle,time_ns,channel\n"));
        assert_eq!(read_csv(&v[..]).unwrap(), s.records);
        assert!(matches!(read_csv(&b"cycle,time_ns,channel\n0,1.5,4\n"[..]), Err(FormatError::Csv { line: 2, .. })));
        assert_eq!(parse_ns_to_ps("12.5"), Some(12_500));
        assert_eq!(parse_ns_to_ps("0.001"), Some(1));
        assert_eq!(parse_ns_to_ps("1.0001"), None);
    }
}
