//! Event-file formats: a line-oriented text container and a chunked
//! length-prefixed binary twin carrying the same fields.
//!
//! Text: `pairsight-events v1 <width> <height> <time_quantum_ns>` followed
//! by one `t_ticks px py arm` record per line, arm in {S, I}.
//!
//! Binary: magic `PSEVTBIN`, version byte 1, width/height (u16 LE),
//! time quantum (f64 LE), then chunks of `n (u32 LE)` records of
//! 13 bytes each (t i64, px u16, py u16, arm u8, all LE). Chunk boundaries
//! let shard-parallel consumers split the file without scanning records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Arm, CameraGeometry, PhotonEvent};

const TEXT_MAGIC: &str = "pairsight-events";
const BINARY_MAGIC: &[u8; 8] = b"PSEVTBIN";
const BINARY_VERSION: u8 = 1;
const RECORD_BYTES: usize = 13;
const CHUNK_RECORDS: usize = 1 << 16;

/// Sensor context an event file carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHeader {
    pub width: u16,
    pub height: u16,
    pub time_quantum_ns: f64,
}

impl EventHeader {
    pub fn from_geometry(geom: &CameraGeometry) -> Self {
        EventHeader {
            width: geom.width,
            height: geom.height,
            time_quantum_ns: geom.time_quantum_ns,
        }
    }
}

/// A decoded event file.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    pub header: EventHeader,
    pub events: Vec<PhotonEvent>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Re-sort out-of-order timestamps instead of only warning.
    pub resort: bool,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn arm_code(arm: Arm) -> char {
    match arm {
        Arm::Signal => 'S',
        Arm::Idler => 'I',
    }
}

pub fn write_events_text(
    path: impl AsRef<Path>,
    header: &EventHeader,
    events: &[PhotonEvent],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        writeln!(
            w,
            "{TEXT_MAGIC} v1 {} {} {}",
            header.width, header.height, header.time_quantum_ns
        )?;
        for e in events {
            writeln!(w, "{} {} {} {}", e.t, e.px, e.py, arm_code(e.arm))?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn write_events_binary(
    path: impl AsRef<Path>,
    header: &EventHeader,
    events: &[PhotonEvent],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&[BINARY_VERSION])?;
        w.write_all(&header.width.to_le_bytes())?;
        w.write_all(&header.height.to_le_bytes())?;
        w.write_all(&header.time_quantum_ns.to_le_bytes())?;
        for chunk in events.chunks(CHUNK_RECORDS) {
            w.write_all(&(chunk.len() as u32).to_le_bytes())?;
            let mut buf = Vec::with_capacity(chunk.len() * RECORD_BYTES);
            for e in chunk {
                buf.extend_from_slice(&e.t.to_le_bytes());
                buf.extend_from_slice(&e.px.to_le_bytes());
                buf.extend_from_slice(&e.py.to_le_bytes());
                buf.push(e.arm.index() as u8);
            }
            w.write_all(&buf)?;
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

/// Read an event file, sniffing the container from its first bytes.
pub fn read_events(path: impl AsRef<Path>) -> Result<EventFile> {
    read_events_with(path, &ReadOptions::default())
}

pub fn read_events_with(path: impl AsRef<Path>, options: &ReadOptions) -> Result<EventFile> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut magic = [0u8; 8];
    let n = read_up_to(&mut file, &mut magic).map_err(|e| io_err(path, e))?;
    if n == 8 && &magic == BINARY_MAGIC {
        return read_binary_body(path, file, options);
    }
    drop(file);
    read_text(path, options)
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

fn validate_and_finish(
    header: EventHeader,
    mut events: Vec<PhotonEvent>,
    mut warnings: Vec<String>,
    options: &ReadOptions,
) -> Result<EventFile> {
    let out_of_order = events
        .windows(2)
        .position(|pair| pair[1].t < pair[0].t)
        .map(|i| i + 1);
    if let Some(at) = out_of_order {
        if options.resort {
            warnings.push(format!(
                "timestamps out of order at record {at}; re-sorted as requested"
            ));
            events.sort_by_key(|e| e.t);
        } else {
            warnings.push(format!(
                "timestamps out of order at record {at}; pass the re-sort option before joining"
            ));
        }
    }
    Ok(EventFile {
        header,
        events,
        warnings,
    })
}

fn read_text(path: &Path, options: &ReadOptions) -> Result<EventFile> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file: missing header"))?;
    let first = first.map_err(|e| io_err(path, e))?;
    let header = parse_text_header(path, &first)?;

    let mut events = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next_field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| parse_err(path, line_no, format!("missing field `{name}`")))
        };
        let t: i64 = next_field("t")?
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad t: {e}")))?;
        let px: u16 = next_field("px")?
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad px: {e}")))?;
        let py: u16 = next_field("py")?
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad py: {e}")))?;
        let arm = match next_field("arm")? {
            "S" => Arm::Signal,
            "I" => Arm::Idler,
            other => return Err(parse_err(path, line_no, format!("bad arm `{other}`"))),
        };
        if fields.next().is_some() {
            return Err(parse_err(path, line_no, "trailing fields"));
        }
        validate_record(path, line_no, &header, t, px, py)?;
        events.push(PhotonEvent { t, px, py, arm });
    }
    validate_and_finish(header, events, Vec::new(), options)
}

fn parse_text_header(path: &Path, line: &str) -> Result<EventHeader> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != TEXT_MAGIC || fields[1] != "v1" {
        return Err(parse_err(
            path,
            1,
            format!("expected `{TEXT_MAGIC} v1 <width> <height> <time_quantum_ns>`"),
        ));
    }
    let width: u16 = fields[2]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad width: {e}")))?;
    let height: u16 = fields[3]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad height: {e}")))?;
    let time_quantum_ns: f64 = fields[4]
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad time quantum: {e}")))?;
    if time_quantum_ns <= 0.0 {
        return Err(parse_err(path, 1, "time quantum must be positive"));
    }
    Ok(EventHeader {
        width,
        height,
        time_quantum_ns,
    })
}

fn validate_record(
    path: &Path,
    record: usize,
    header: &EventHeader,
    t: i64,
    px: u16,
    py: u16,
) -> Result<()> {
    if t < 0 {
        return Err(parse_err(path, record, format!("negative timestamp {t}")));
    }
    if px >= header.width || py >= header.height {
        return Err(parse_err(
            path,
            record,
            format!(
                "pixel ({px}, {py}) outside the {}x{} sensor",
                header.width, header.height
            ),
        ));
    }
    Ok(())
}

fn read_binary_body(path: &Path, mut file: File, options: &ReadOptions) -> Result<EventFile> {
    let mut fixed = [0u8; 1 + 2 + 2 + 8];
    let n = read_up_to(&mut file, &mut fixed).map_err(|e| io_err(path, e))?;
    if n != fixed.len() {
        return Err(parse_err(path, 0, "truncated binary header"));
    }
    if fixed[0] != BINARY_VERSION {
        return Err(parse_err(
            path,
            0,
            format!("unsupported binary version {}", fixed[0]),
        ));
    }
    let header = EventHeader {
        width: u16::from_le_bytes([fixed[1], fixed[2]]),
        height: u16::from_le_bytes([fixed[3], fixed[4]]),
        time_quantum_ns: f64::from_le_bytes(fixed[5..13].try_into().unwrap()),
    };
    if header.time_quantum_ns <= 0.0 {
        return Err(parse_err(path, 0, "time quantum must be positive"));
    }

    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut record_no = 0usize;
    loop {
        let mut len_bytes = [0u8; 4];
        let n = read_up_to(&mut reader, &mut len_bytes).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        if n != 4 {
            return Err(parse_err(path, record_no, "truncated chunk length"));
        }
        let n_records = u32::from_le_bytes(len_bytes) as usize;
        let mut buf = vec![0u8; n_records * RECORD_BYTES];
        let got = read_up_to(&mut reader, &mut buf).map_err(|e| io_err(path, e))?;
        if got != buf.len() {
            return Err(parse_err(path, record_no, "truncated chunk body"));
        }
        for rec in buf.chunks_exact(RECORD_BYTES) {
            record_no += 1;
            let t = i64::from_le_bytes(rec[0..8].try_into().unwrap());
            let px = u16::from_le_bytes(rec[8..10].try_into().unwrap());
            let py = u16::from_le_bytes(rec[10..12].try_into().unwrap());
            let arm = match rec[12] {
                0 => Arm::Signal,
                1 => Arm::Idler,
                other => return Err(parse_err(path, record_no, format!("bad arm byte {other}"))),
            };
            validate_record(path, record_no, &header, t, px, py)?;
            events.push(PhotonEvent { t, px, py, arm });
        }
    }
    validate_and_finish(header, events, Vec::new(), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn header() -> EventHeader {
        EventHeader {
            width: 256,
            height: 256,
            time_quantum_ns: 1.56,
        }
    }

    fn random_events(n: usize, seed: u64) -> Vec<PhotonEvent> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut events: Vec<PhotonEvent> = (0..n)
            .map(|_| PhotonEvent {
                t: rng.random_range(0..1_000_000),
                px: rng.random_range(0..256),
                py: rng.random_range(0..256),
                arm: if rng.random::<bool>() {
                    Arm::Signal
                } else {
                    Arm::Idler
                },
            })
            .collect();
        events.sort_by_key(|e| e.t);
        events
    }

    #[test]
    fn text_round_trip() {
        let dir = std::env::temp_dir().join("pairsight-io-test-text");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("events.events");
        let events = random_events(10_000, 1);
        write_events_text(&path, &header(), &events).unwrap();
        let back = read_events(&path).unwrap();
        assert_eq!(back.header, header());
        assert_eq!(back.events, events);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn binary_round_trip_and_cross_decode() {
        let dir = std::env::temp_dir().join("pairsight-io-test-bin");
        std::fs::create_dir_all(&dir).unwrap();
        let events = random_events(100_000, 2);
        let text_path = dir.join("events.events");
        let bin_path = dir.join("events.evb");
        write_events_text(&text_path, &header(), &events).unwrap();
        write_events_binary(&bin_path, &header(), &events).unwrap();
        let from_text = read_events(&text_path).unwrap();
        let from_bin = read_events(&bin_path).unwrap();
        assert_eq!(from_text.events, from_bin.events);
        assert_eq!(from_text.header, from_bin.header);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = std::env::temp_dir().join("pairsight-io-test-empty");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.events");
        write_events_text(&path, &header(), &[]).unwrap();
        let back = read_events(&path).unwrap();
        assert!(back.events.is_empty());
    }

    #[test]
    fn out_of_range_pixel_is_parse_error() {
        let dir = std::env::temp_dir().join("pairsight-io-test-range");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.events");
        std::fs::write(&path, "pairsight-events v1 256 256 1.56\n5 256 0 S\n").unwrap();
        match read_events(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_parse_error() {
        let dir = std::env::temp_dir().join("pairsight-io-test-header");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("headerless.events");
        std::fs::write(&path, "5 10 10 S\n").unwrap();
        assert!(matches!(
            read_events(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn out_of_order_warns_and_optionally_resorts() {
        let dir = std::env::temp_dir().join("pairsight-io-test-order");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unsorted.events");
        std::fs::write(
            &path,
            "pairsight-events v1 256 256 1.0\n10 0 0 S\n5 1 1 I\n",
        )
        .unwrap();
        let plain = read_events(&path).unwrap();
        assert_eq!(plain.warnings.len(), 1);
        assert_eq!(plain.events[0].t, 10);
        let resorted = read_events_with(&path, &ReadOptions { resort: true }).unwrap();
        assert_eq!(resorted.events[0].t, 5);
        assert_eq!(resorted.warnings.len(), 1);
    }
}
