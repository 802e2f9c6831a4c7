//! Frame-file format: `pairsight-frames v1 <width> <height> <exposure_ns>`
//! header, then per frame a `F <index>` line followed by `px py arm` hit
//! lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CameraGeometry, Frame};

const MAGIC: &str = "pairsight-frames";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub width: u16,
    pub height: u16,
    pub exposure_ns: f64,
}

impl FrameHeader {
    pub fn new(geom: &CameraGeometry, exposure_ns: f64) -> Self {
        FrameHeader {
            width: geom.width,
            height: geom.height,
            exposure_ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub header: FrameHeader,
    pub frames: Vec<Frame>,
    pub warnings: Vec<String>,
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

pub fn write_frames(path: impl AsRef<Path>, header: &FrameHeader, frames: &[Frame]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        writeln!(
            w,
            "{MAGIC} v1 {} {} {}",
            header.width, header.height, header.exposure_ns
        )?;
        for frame in frames {
            writeln!(w, "F {}", frame.index)?;
            for &(px, py) in &frame.hits_signal {
                writeln!(w, "{px} {py} S")?;
            }
            for &(px, py) in &frame.hits_idler {
                writeln!(w, "{px} {py} I")?;
            }
        }
        w.flush()
    })();
    body.map_err(|e| io_err(path, e))
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file: missing header"))?;
    let first = first.map_err(|e| io_err(path, e))?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC || fields[1] != "v1" {
        return Err(parse_err(
            path,
            1,
            format!("expected `{MAGIC} v1 <width> <height> <exposure_ns>`"),
        ));
    }
    let header = FrameHeader {
        width: fields[2]
            .parse()
            .map_err(|e| parse_err(path, 1, format!("bad width: {e}")))?,
        height: fields[3]
            .parse()
            .map_err(|e| parse_err(path, 1, format!("bad height: {e}")))?,
        exposure_ns: fields[4]
            .parse()
            .map_err(|e| parse_err(path, 1, format!("bad exposure: {e}")))?,
    };
    if header.exposure_ns <= 0.0 {
        return Err(parse_err(path, 1, "exposure must be positive"));
    }

    let mut frames: Vec<Frame> = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("F ") {
            let index: u64 = rest
                .trim()
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad frame index: {e}")))?;
            frames.push(Frame::empty(index, header.exposure_ns));
            continue;
        }
        let frame = frames
            .last_mut()
            .ok_or_else(|| parse_err(path, line_no, "hit line before any `F <index>` line"))?;
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(path, line_no, "expected `px py arm`"));
        }
        let px: u16 = fields[0]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad px: {e}")))?;
        let py: u16 = fields[1]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad py: {e}")))?;
        if px >= header.width || py >= header.height {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "pixel ({px}, {py}) outside the {}x{} sensor",
                    header.width, header.height
                ),
            ));
        }
        let hits = match fields[2] {
            "S" => &mut frame.hits_signal,
            "I" => &mut frame.hits_idler,
            other => return Err(parse_err(path, line_no, format!("bad arm `{other}`"))),
        };
        if hits.contains(&(px, py)) {
            warnings.push(format!(
                "line {line_no}: duplicate pixel ({px}, {py}) in frame {} collapsed to one hit",
                frame.index
            ));
        } else {
            hits.push((px, py));
        }
    }
    for frame in &mut frames {
        frame.hits_signal.sort_unstable();
        frame.hits_idler.sort_unstable();
    }
    Ok(FrameFile {
        header,
        frames,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frame_round_trip() {
        let dir = std::env::temp_dir().join("pairsight-io-test-frames");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("frames.frames");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<Frame> = (0..1000)
            .map(|k| {
                let mut f = Frame::empty(k, 10_000.0);
                for _ in 0..rng.random_range(0..4) {
                    f.hits_signal
                        .push((rng.random_range(0..32), rng.random_range(0..32)));
                }
                for _ in 0..rng.random_range(0..4) {
                    f.hits_idler
                        .push((rng.random_range(32..64), rng.random_range(0..32)));
                }
                f.hits_signal.sort_unstable();
                f.hits_signal.dedup();
                f.hits_idler.sort_unstable();
                f.hits_idler.dedup();
                f
            })
            .collect();
        let header = FrameHeader {
            width: 64,
            height: 32,
            exposure_ns: 10_000.0,
        };
        write_frames(&path, &header, &frames).unwrap();
        let back = read_frames(&path).unwrap();
        assert_eq!(back.header, header);
        assert_eq!(back.frames, frames);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn duplicate_pixel_collapses_with_warning() {
        let dir = std::env::temp_dir().join("pairsight-io-test-dup");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dup.frames");
        std::fs::write(
            &path,
            "pairsight-frames v1 64 32 10000\nF 0\n5 5 S\n5 5 S\n",
        )
        .unwrap();
        let back = read_frames(&path).unwrap();
        assert_eq!(back.frames[0].hits_signal, vec![(5, 5)]);
        assert_eq!(back.warnings.len(), 1);
    }

    #[test]
    fn missing_header_is_parse_error() {
        let dir = std::env::temp_dir().join("pairsight-io-test-nohdr");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("nohdr.frames");
        std::fs::write(&path, "F 0\n5 5 S\n").unwrap();
        assert!(matches!(
            read_frames(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
