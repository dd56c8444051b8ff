//! Segment cache: a 16-byte header (`EMGS`, version u16, C u16, W u32,
//! count u32) followed by `count` records. Each record is label u32,
//! trial id u32, start u32, subject length u16, subject UTF-8 bytes, then
//! `C·W` channel-major f32. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{DatasetError, Segment};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"EMGS";
pub const ARCHIVE_VERSION: u16 = 1;

pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<(), DatasetError> {
    let (channels, window) = match segments.first() {
        Some(s) => (s.channels, s.window),
        None => (0, 0),
    };
    let channels16 = u16::try_from(channels)
        .map_err(|_| DatasetError::Config(format!("{channels} channels exceed u16")))?;
    let mut out = Vec::with_capacity(16 + segments.len() * (14 + 4 * channels * window));
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&channels16.to_le_bytes());
    out.extend_from_slice(&(window as u32).to_le_bytes());
    out.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    for s in segments {
        if (s.channels, s.window) != (channels, window) {
            return Err(DatasetError::Config(format!(
                "segment {}/{}@{} is {}x{}, archive holds {channels}x{window}",
                s.subject_id, s.trial_id, s.start, s.channels, s.window
            )));
        }
        let subject = s.subject_id.as_bytes();
        let subject_len = u16::try_from(subject.len())
            .map_err(|_| DatasetError::Config("subject id longer than 65535 bytes".into()))?;
        out.extend_from_slice(&(s.label as u32).to_le_bytes());
        out.extend_from_slice(&s.trial_id.to_le_bytes());
        out.extend_from_slice(&(s.start as u32).to_le_bytes());
        out.extend_from_slice(&subject_len.to_le_bytes());
        out.extend_from_slice(subject);
        for v in &s.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(DatasetError::Archive {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16, DatasetError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DatasetError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_segments(path: &Path) -> Result<Vec<Segment>, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4, "magic")? != ARCHIVE_MAGIC {
        return Err(DatasetError::Archive {
            offset: 0,
            reason: "bad magic, expected EMGS".into(),
        });
    }
    let version = cur.u16("version")?;
    if version != ARCHIVE_VERSION {
        return Err(DatasetError::Archive {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let channels = cur.u16("channel count")? as usize;
    let window = cur.u32("window")? as usize;
    let count = cur.u32("segment count")? as usize;
    let mut segments = Vec::with_capacity(count.min(bytes.len() / 16));
    for _ in 0..count {
        let label = cur.u32("label")? as usize;
        let trial_id = cur.u32("trial id")?;
        let start = cur.u32("start")? as usize;
        let subject_len = cur.u16("subject length")? as usize;
        let at = cur.pos as u64;
        let subject_id = std::str::from_utf8(cur.take(subject_len, "subject id")?)
            .map_err(|_| DatasetError::Archive {
                offset: at,
                reason: "subject id is not UTF-8".into(),
            })?
            .to_owned();
        let data = cur
            .take(4 * channels * window, "samples")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        segments.push(Segment {
            data,
            channels,
            window,
            label,
            subject_id,
            trial_id,
            start,
        });
    }
    if cur.pos != bytes.len() {
        return Err(DatasetError::Archive {
            offset: cur.pos as u64,
            reason: format!("{} trailing bytes", bytes.len() - cur.pos),
        });
    }
    Ok(segments)
}
