use std::collections::BTreeMap;

use ndarray::Axis;
use rayon::prelude::*;

use super::ManifestEntry;
use crate::error::{Error, Result};
use crate::frontend::{apply_cmvn, cmvn_stats, concat_utterances, FeatureArchive, FeatureMatrix};

/// Entries grouped by speaker, speakers in id order.
pub fn by_speaker(entries: &[ManifestEntry]) -> BTreeMap<&str, Vec<&ManifestEntry>> {
    let mut out: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in entries {
        out.entry(e.speaker_id.as_str()).or_default().push(e);
    }
    out
}

/// Concatenates one speaker's word utterances in word-id order. Words without
/// features are skipped with a warning; the result is named after the speaker.
pub fn assemble_subject_utterance(entries: &[&ManifestEntry], features: &FeatureArchive) -> Result<FeatureMatrix> {
    let speaker = entries.first().map(|e| e.speaker_id.clone()).unwrap_or_default();
    let mut sorted: Vec<&&ManifestEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.word_id.cmp(&b.word_id));
    let mut parts = Vec::new();
    let mut missing = 0;
    for e in sorted {
        if e.speaker_id != speaker {
            return Err(Error::InvalidArgument(format!("entries mix speakers {speaker} and {}", e.speaker_id)));
        }
        match features.get(&e.utterance_id()) {
            Some(f) => parts.push(f.clone()),
            None => missing += 1,
        }
    }
    if parts.is_empty() {
        return Err(Error::NoFeatures(speaker));
    }
    if missing > 0 {
        log::warn!("speaker {speaker}: {missing} of {} words have no features", missing + parts.len());
    }
    Ok(concat_utterances(&parts)?.with_id(speaker))
}

/// Mean and variance normalisation with statistics pooled over each
/// speaker's words. Utterances not listed in `entries` are left out.
pub fn speaker_cmvn(entries: &[ManifestEntry], features: &FeatureArchive) -> Result<FeatureArchive> {
    let groups: Vec<(&str, Vec<&ManifestEntry>)> = by_speaker(entries).into_iter().collect();
    let normalized: Vec<Vec<FeatureMatrix>> = groups
        .into_par_iter()
        .map(|(_, list)| {
            let present: Vec<&FeatureMatrix> = list.iter().filter_map(|e| features.get(&e.utterance_id())).collect();
            if present.is_empty() {
                return Ok(Vec::new());
            }
            let views: Vec<_> = present.iter().map(|f| f.frames().view()).collect();
            let pooled = ndarray::concatenate(Axis(0), &views)
                .map_err(|_| Error::InvalidArgument("utterances of one speaker differ in dimension".into()))?;
            let stats = cmvn_stats(pooled.view())?;
            present.into_iter().map(|f| apply_cmvn(f, &stats)).collect()
        })
        .collect::<Result<_>>()?;
    let mut out = FeatureArchive::new();
    for f in normalized.into_iter().flatten() {
        out.insert(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Diagnosis;
    use crate::frontend::FeatureKind;
    use ndarray::Array2;

    fn entry(word: &str) -> ManifestEntry {
        ManifestEntry {
            speaker_id: "s".into(),
            diagnosis: Diagnosis::Td,
            word_id: word.into(),
            path: String::new(),
            annotation: None,
            age_band: None,
        }
    }

    fn archive(words: &[&str]) -> FeatureArchive {
        words
            .iter()
            .enumerate()
            .map(|(i, w)| FeatureMatrix::new(format!("s/{w}"), FeatureKind::Mfcc, 0.01, Array2::from_elem((100, 2), i as f64)).unwrap())
            .collect()
    }

    #[test]
    fn lengths_add_and_order_is_canonical() {
        let a = archive(&["w1", "w2", "w3"]);
        let e = [entry("w2"), entry("w3"), entry("w1")];
        let refs: Vec<&ManifestEntry> = e.iter().collect();
        let m = assemble_subject_utterance(&refs, &a).unwrap();
        assert_eq!(m.num_frames(), 300);
        assert_eq!(m.utterance_id(), "s");
        assert_eq!(m.frames()[[0, 0]], 0.0);
        assert_eq!(m.frames()[[299, 0]], 2.0);
        let rev: Vec<&ManifestEntry> = e.iter().rev().collect();
        assert_eq!(assemble_subject_utterance(&rev, &a).unwrap(), m);
    }

    #[test]
    fn missing_words_skipped_and_none_is_error() {
        let a = archive(&["w1"]);
        let e = [entry("w1"), entry("w9")];
        let refs: Vec<&ManifestEntry> = e.iter().collect();
        assert_eq!(assemble_subject_utterance(&refs, &a).unwrap().num_frames(), 100);
        let none = [entry("w9")];
        let refs: Vec<&ManifestEntry> = none.iter().collect();
        assert!(matches!(assemble_subject_utterance(&refs, &a), Err(Error::NoFeatures(s)) if s == "s"));
    }

    #[test]
    fn speaker_cmvn_pools_words() {
        let mut a = FeatureArchive::new();
        a.insert(FeatureMatrix::new("s/w1", FeatureKind::Mfcc, 0.01, Array2::from_elem((2, 1), 1.0)).unwrap());
        a.insert(FeatureMatrix::new("s/w2", FeatureKind::Mfcc, 0.01, Array2::from_elem((2, 1), 3.0)).unwrap());
        let out = speaker_cmvn(&[entry("w1"), entry("w2"), entry("w3")], &a).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out.get("s/w1").unwrap().frames()[[0, 0]] + 1.0).abs() < 1e-9);
        assert!((out.get("s/w2").unwrap().frames()[[1, 0]] - 1.0).abs() < 1e-9);
    }
}
