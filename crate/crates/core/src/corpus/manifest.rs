use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    #[serde(rename = "TD")]
    Td,
    #[serde(rename = "SSD")]
    Ssd,
}

impl Diagnosis {
    /// `true` for the positive (disordered) class.
    pub fn is_disordered(self) -> bool {
        self == Diagnosis::Ssd
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnosis::Td => "TD",
            Diagnosis::Ssd => "SSD",
        })
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TD" => Ok(Diagnosis::Td),
            "SSD" => Ok(Diagnosis::Ssd),
            _ => Err(Error::InvalidArgument(format!("unknown diagnosis {s:?} (TD or SSD)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub diagnosis: Diagnosis,
    pub word_id: String,
    /// Audio file or feature archive holding this utterance.
    pub path: String,
    /// Whether the word contains an annotated speech-sound error.
    pub annotation: Option<bool>,
    pub age_band: Option<String>,
}

impl ManifestEntry {
    /// `speaker/word`, the key used in feature archives.
    pub fn utterance_id(&self) -> String {
        format!("{}/{}", self.speaker_id, self.word_id)
    }
}

const REQUIRED: [&str; 4] = ["speaker_id", "diagnosis", "word_id", "path"];

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or(Error::ManifestRow { line: 1, detail: "empty manifest".into() })?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| Error::ManifestRow { line: 1, detail: format!("missing column {name}") })?;
    }
    let annotation_col = find("annotation");
    let age_col = find("age_band");

    let mut entries = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::ManifestRow {
                line,
                detail: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let get = |i: usize| fields[i].trim();
        let row_err = |detail: String| Error::ManifestRow { line, detail };
        let speaker_id = get(idx[0]);
        let word_id = get(idx[2]);
        if speaker_id.is_empty() || word_id.is_empty() {
            return Err(row_err("empty speaker_id or word_id".into()));
        }
        let diagnosis = get(idx[1]).parse::<Diagnosis>().map_err(|e| row_err(e.to_string()))?;
        let annotation = match annotation_col.map(get) {
            None | Some("") => None,
            Some("0") => Some(false),
            Some("1") => Some(true),
            Some(other) => return Err(row_err(format!("annotation must be 0 or 1, found {other:?}"))),
        };
        let age_band = age_col.map(get).filter(|s| !s.is_empty()).map(str::to_string);
        entries.push(ManifestEntry {
            speaker_id: speaker_id.to_string(),
            diagnosis,
            word_id: word_id.to_string(),
            path: get(idx[3]).to_string(),
            annotation,
            age_band,
        });
    }
    Ok(entries)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    parse_manifest(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from("speaker_id\tdiagnosis\tword_id\tpath\tannotation\tage_band\n");
    for e in entries {
        let ann = e.annotation.map_or(String::new(), |a| u8::from(a).to_string());
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.speaker_id,
            e.diagnosis,
            e.word_id,
            e.path,
            ann,
            e.age_band.as_deref().unwrap_or("")
        ));
    }
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Diagnosis per speaker; a speaker listed with two diagnoses is an error.
pub fn speaker_labels(entries: &[ManifestEntry]) -> Result<BTreeMap<String, Diagnosis>> {
    let mut out = BTreeMap::new();
    for e in entries {
        if let Some(prev) = out.insert(e.speaker_id.clone(), e.diagnosis) {
            if prev != e.diagnosis {
                return Err(Error::InvalidArgument(format!("speaker {} listed as both {prev} and {}", e.speaker_id, e.diagnosis)));
            }
        }
    }
    Ok(out)
}
