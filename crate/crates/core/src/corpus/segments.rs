use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A phone segment of an utterance in frames, `start..end`, with the phone
/// the word calls for and the phone actually produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub utterance: String,
    pub start: usize,
    pub end: usize,
    pub canonical: String,
    pub produced: String,
}

/// Reads `utterance<TAB>start<TAB>end<TAB>canonical<TAB>produced` lines.
pub fn read_segments(path: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: &str| Error::malformed("segment file", format!("line {}: {detail}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let start = f[1].parse().map_err(|_| bad("bad start frame"))?;
        let end = f[2].parse().map_err(|_| bad("bad end frame"))?;
        if end <= start {
            return Err(bad("empty segment"));
        }
        out.push(Segment { utterance: f[0].into(), start, end, canonical: f[3].into(), produced: f[4].into() });
    }
    Ok(out)
}

pub fn write_segments(path: impl AsRef<Path>, segments: &[Segment]) -> Result<()> {
    let mut text = String::new();
    for s in segments {
        writeln!(text, "{}\t{}\t{}\t{}\t{}", s.utterance, s.start, s.end, s.canonical, s.produced).expect("string write");
    }
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-frame labels of one utterance from its segments; every frame must be
/// covered exactly once.
pub fn frame_labels<'a>(segments: &[&'a Segment], n_frames: usize, produced: bool) -> Result<Vec<&'a str>> {
    let mut labels: Vec<Option<&str>> = vec![None; n_frames];
    for s in segments {
        if s.end > n_frames {
            return Err(Error::InvalidArgument(format!("segment {}..{} of {} exceeds {n_frames} frames", s.start, s.end, s.utterance)));
        }
        let label = if produced { s.produced.as_str() } else { s.canonical.as_str() };
        for l in &mut labels[s.start..s.end] {
            if l.is_some() {
                return Err(Error::InvalidArgument(format!("overlapping segments in {}", s.utterance)));
            }
            *l = Some(label);
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(t, l)| l.ok_or_else(|| Error::InvalidArgument(format!("frame {t} has no segment"))))
        .collect()
}
