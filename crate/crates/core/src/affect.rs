//! Parsing of emotion-prediction outputs and the affective metrics built on
//! them: shifts, EMD, lexical accuracy, intensity MSE and persona recall.

use serde::{Deserialize, Serialize};

use crate::corpus::GoldLabel;
use crate::error::{Error, Result};
use crate::gateway::{embed_direct, EmbeddingProvider};
use crate::lexicon::EmotionVector;

const RECALL_MARKER: &str = "[OUTPUT 1]:";
const EMOTION_MARKER: &str = "[OUTPUT 2]:";
const RESPONSE_MARKER: &str = "Output:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAffective {
    pub persona_recall: String,
    pub emotion_word: String,
    /// More than one word followed the emotion marker; only the first is kept.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCognitive {
    pub response: String,
    /// No `Output:` marker was found and the whole text was taken.
    pub lenient: bool,
}

fn format_error(message: &str, raw: &str) -> Error {
    Error::Format {
        message: message.to_owned(),
        raw: raw.to_owned(),
    }
}

/// Drops code-fence lines and bold markers around the output markers.
fn strip_markdown(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .replace("**", "")
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(&needle.to_ascii_lowercase())
}

/// Lowercased word with leading and trailing punctuation removed.
pub fn normalize_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn parse_affective(raw: &str) -> Result<ParsedAffective> {
    let text = strip_markdown(raw);
    let r = find_ci(&text, RECALL_MARKER).ok_or_else(|| format_error("missing [OUTPUT 1]", raw))?;
    let after_recall = r + RECALL_MARKER.len();
    let e = find_ci(&text[after_recall..], EMOTION_MARKER)
        .map(|i| i + after_recall)
        .ok_or_else(|| format_error("missing [OUTPUT 2]", raw))?;
    let recall = text[after_recall..e].trim().to_owned();
    let rest = &text[e + EMOTION_MARKER.len()..];
    let first_line = rest.trim_start().lines().next().unwrap_or("");
    let mut words = first_line.split_whitespace();
    let word = words.next().map(normalize_word).unwrap_or_default();
    if word.is_empty() {
        return Err(format_error("no emotion word after [OUTPUT 2]", raw));
    }
    Ok(ParsedAffective {
        persona_recall: recall,
        emotion_word: word,
        truncated: words.next().is_some(),
    })
}

pub fn parse_cognitive(raw: &str) -> Result<ParsedCognitive> {
    let text = strip_markdown(raw);
    let (response, lenient) = match text.find(RESPONSE_MARKER) {
        Some(i) => (text[i + RESPONSE_MARKER.len()..].trim().to_owned(), false),
        None => (text.trim().to_owned(), true),
    };
    if response.is_empty() {
        return Err(format_error("empty response", raw));
    }
    Ok(ParsedCognitive { response, lenient })
}

/// I(with) − I(without), componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectiveShift {
    pub deltas: [f64; 8],
}

pub fn affective_shift(with_attr: &EmotionVector, without_attr: &EmotionVector) -> AffectiveShift {
    let mut deltas = [0.0; 8];
    for (i, d) in deltas.iter_mut().enumerate() {
        *d = with_attr.values()[i] - without_attr.values()[i];
    }
    AffectiveShift { deltas }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emd {
    pub distance: f64,
    /// At least one input had zero mass and was replaced by the uniform vector.
    pub uniform_substituted: bool,
}

fn unit_mass(v: &EmotionVector) -> ([f64; 8], bool) {
    let total: f64 = v.values().iter().sum();
    if total <= 0.0 {
        ([1.0 / 8.0; 8], true)
    } else {
        let mut out = *v.values();
        out.iter_mut().for_each(|x| *x /= total);
        (out, false)
    }
}

/// Earth mover's distance with unit cost between distinct emotions, which
/// reduces to half the L1 distance of the unit-mass vectors.
pub fn emd(a: &EmotionVector, b: &EmotionVector) -> Emd {
    let (pa, ua) = unit_mass(a);
    let (pb, ub) = unit_mass(b);
    let distance = 0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Emd {
        distance,
        uniform_substituted: ua || ub,
    }
}

/// Share of predictions equal to the gold label after normalization.
pub fn lexical_accuracy(predictions: &[String], golds: &[GoldLabel]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("no predictions to score".into()));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| normalize_word(p) == g.as_str())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Mean over pairs of the mean squared componentwise error.
pub fn intensity_mse(predictions: &[EmotionVector], golds: &[EmotionVector]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold vectors",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("no vectors to compare".into()));
    }
    let total: f64 = predictions
        .iter()
        .zip(golds)
        .map(|(p, g)| {
            p.values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / 8.0
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallSimilarity {
    pub cosine: f64,
    pub rouge_l_f1: f64,
}

fn rouge_tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(normalize_word)
        .filter(|t| !t.is_empty())
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 with precision over `recalled` and recall over `injected`.
pub fn rouge_l_f1(injected: &str, recalled: &str) -> f64 {
    let a = rouge_tokens(injected);
    let b = rouge_tokens(recalled);
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&a, &b) as f64;
    let p = lcs / b.len() as f64;
    let r = lcs / a.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub fn recall_similarity(injected: &str, recalled: &str, embedder: &dyn EmbeddingProvider) -> Result<RecallSimilarity> {
    if injected.trim().is_empty() || recalled.trim().is_empty() {
        return Err(Error::Argument("recall similarity needs two non-empty strings".into()));
    }
    let v = embed_direct(&[injected.to_owned(), recalled.to_owned()], embedder)?;
    Ok(RecallSimilarity {
        cosine: cosine(&v[0], &v[1]),
        rouge_l_f1: rouge_l_f1(injected, recalled),
    })
}
