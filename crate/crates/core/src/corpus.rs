//! Experience-record ingestion, self-disclosure masking, diversity sampling
//! and readability statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::EmbeddingProvider;

pub const MASK_TOKEN: &str = "[MASK]";

/// The seven labels of the experience corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldLabel {
    Anger,
    Disgust,
    Fear,
    Guilt,
    Joy,
    Sadness,
    Shame,
}

impl GoldLabel {
    pub const ALL: [GoldLabel; 7] = [
        GoldLabel::Anger,
        GoldLabel::Disgust,
        GoldLabel::Fear,
        GoldLabel::Guilt,
        GoldLabel::Joy,
        GoldLabel::Sadness,
        GoldLabel::Shame,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GoldLabel::Anger => "anger",
            GoldLabel::Disgust => "disgust",
            GoldLabel::Fear => "fear",
            GoldLabel::Guilt => "guilt",
            GoldLabel::Joy => "joy",
            GoldLabel::Sadness => "sadness",
            GoldLabel::Shame => "shame",
        }
    }
}

impl fmt::Display for GoldLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoldLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        GoldLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown gold label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub id: String,
    pub text: String,
    pub gold_label: GoldLabel,
    pub masked: bool,
    pub word_count: usize,
}

impl ExperienceRecord {
    /// Builds a record, deriving `masked` and `word_count` from the text.
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold_label: GoldLabel) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        let masks = text.matches(MASK_TOKEN).count();
        if masks > 1 {
            return Err(Error::Validation(format!(
                "record {id:?} contains {masks} {MASK_TOKEN} tokens"
            )));
        }
        Ok(ExperienceRecord {
            word_count: text.split_whitespace().count(),
            masked: masks == 1,
            id,
            text,
            gold_label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sample_count: usize,
    pub mean_words: f64,
    pub flesch_reading_ease: f64,
    pub flesch_kincaid_grade: f64,
}

#[derive(Deserialize)]
struct Row {
    id: String,
    text: String,
    label: String,
}

/// Reads an `id,text,label` file and keeps records with at least
/// `min_tokens` words, in input order.
pub fn ingest(path: &Path, min_tokens: usize) -> Result<Vec<ExperienceRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["id", "text", "label"] {
        return Err(Error::parse(path, 1, format!("expected header id,text,label, got {headers:?}")));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let label: GoldLabel = row.label.parse()?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::Validation(format!("duplicate record id {:?}", row.id)));
        }
        let record = ExperienceRecord::new(row.id, row.text, label)?;
        if record.word_count >= min_tokens {
            out.push(record);
        }
    }
    Ok(out)
}

/// Writes records back in the `id,text,label` layout read by [`ingest`].
pub fn write_corpus<W: Write>(records: &[ExperienceRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Computation(format!("writing corpus: {e}"));
    w.write_record(["id", "text", "label"]).map_err(to_err)?;
    for r in records {
        w.write_record([r.id.as_str(), r.text.as_str(), r.gold_label.as_str()])
            .map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::Computation(format!("writing corpus: {e}")))?;
    Ok(())
}

/// Words that disclose each gold label, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisclosureTerms(BTreeMap<GoldLabel, BTreeSet<String>>);

const DEFAULT_TERMS: &str = include_str!("../data/disclosure_terms.txt");

impl Default for DisclosureTerms {
    fn default() -> Self {
        DisclosureTerms::parse(DEFAULT_TERMS, Path::new("<bundled>")).expect("bundled terms parse")
    }
}

impl DisclosureTerms {
    /// Parses `label: w1, w2, ...` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut map: BTreeMap<GoldLabel, BTreeSet<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (label, words) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `label: w1, w2`"))?;
            let label: GoldLabel = label
                .parse()
                .map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?;
            let entry = map.entry(label).or_default();
            for w in words.split(',').map(|w| w.trim().to_lowercase()) {
                if w.is_empty() {
                    continue;
                }
                if w.chars().any(|c| !c.is_alphanumeric()) {
                    return Err(Error::parse(origin, i + 1, format!("term {w:?} is not a single word")));
                }
                entry.insert(w);
            }
        }
        Ok(DisclosureTerms(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DisclosureTerms::parse(&text, path)
    }

    pub fn terms(&self, label: GoldLabel) -> Option<&BTreeSet<String>> {
        self.0.get(&label)
    }
}

/// Byte ranges of maximal alphanumeric runs.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Replaces the first disclosure term for the record's label with `[MASK]`.
pub fn mask_self_disclosure(record: &ExperienceRecord, terms: &DisclosureTerms) -> ExperienceRecord {
    if record.masked {
        return record.clone();
    }
    let Some(words) = terms.terms(record.gold_label) else {
        return record.clone();
    };
    let hit = word_spans(&record.text)
        .into_iter()
        .find(|(s, e)| words.contains(&record.text[*s..*e].to_lowercase()));
    match hit {
        None => record.clone(),
        Some((s, e)) => {
            let text = format!("{}{MASK_TOKEN}{}", &record.text[..s], &record.text[e..]);
            ExperienceRecord {
                text,
                masked: true,
                ..record.clone()
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-point-first selection of `k` indices starting at `start_index`.
/// Ties go to the smallest index.
pub fn kcenter_sample(points: &[Vec<f64>], k: usize, start_index: usize) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Argument("kcenter_sample needs at least one point".into()));
    }
    if k > points.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the {} available points",
            points.len()
        )));
    }
    if start_index >= points.len() {
        return Err(Error::Argument(format!("start_index {start_index} out of range")));
    }
    let dim = points[0].len();
    if let Some(i) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::Argument(format!(
            "point {i} has width {}, expected {dim}",
            points[i].len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let mut selected = vec![start_index];
    let mut chosen = vec![false; points.len()];
    chosen[start_index] = true;
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[start_index])).collect();
    while selected.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if chosen[i] {
                continue;
            }
            if best.is_none_or(|b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        let next = best.expect("k <= points.len() leaves a candidate");
        chosen[next] = true;
        selected.push(next);
        for i in 0..points.len() {
            let d = sq_dist(&points[i], &points[next]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    Ok(selected)
}

/// Text embedding followed by the embedding of the gold label word.
pub fn build_sampling_features(
    texts: &[String],
    gold_labels: &[GoldLabel],
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f64>>> {
    if texts.len() != gold_labels.len() {
        return Err(Error::Argument(format!(
            "{} texts but {} labels",
            texts.len(),
            gold_labels.len()
        )));
    }
    let text_vecs = crate::gateway::embed_direct(texts, embedder)?;
    let label_words: Vec<String> = GoldLabel::ALL.iter().map(|l| l.as_str().to_owned()).collect();
    let label_vecs = crate::gateway::embed_direct(&label_words, embedder)?;
    Ok(text_vecs
        .into_iter()
        .zip(gold_labels)
        .map(|(mut v, label)| {
            let li = GoldLabel::ALL.iter().position(|l| l == label).expect("label in ALL");
            v.extend_from_slice(&label_vecs[li]);
            v
        })
        .collect())
}

/// Vowel-group syllable estimate with a silent-e correction; at least 1.
pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut count = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            count += 1;
        }
        prev = v;
    }
    if count > 1 && w.last() == Some(&'e') {
        count -= 1;
    }
    count.max(1)
}

fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .count()
        .max(1)
}

/// Flesch Reading Ease and Flesch-Kincaid grade over the pooled corpus.
pub fn readability_stats(records: &[ExperienceRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(Error::Argument("readability_stats needs at least one record".into()));
    }
    let mut words = 0usize;
    let mut sentences = 0usize;
    let mut syl = 0usize;
    for r in records {
        let toks: Vec<&str> = r
            .text
            .split_whitespace()
            .filter(|t| t.chars().any(char::is_alphanumeric))
            .collect();
        words += toks.len();
        syl += toks.iter().map(|t| syllables(t)).sum::<usize>();
        sentences += sentence_count(&r.text);
    }
    if words == 0 {
        return Err(Error::Argument("records contain no words".into()));
    }
    let wps = words as f64 / sentences as f64;
    let spw = syl as f64 / words as f64;
    let mean_words =
        records.iter().map(|r| r.word_count as f64).sum::<f64>() / records.len() as f64;
    Ok(CorpusStats {
        sample_count: records.len(),
        mean_words,
        flesch_reading_ease: 206.835 - 1.015 * wps - 84.6 * spw,
        flesch_kincaid_grade: 0.39 * wps + 11.8 * spw - 15.59,
    })
}
