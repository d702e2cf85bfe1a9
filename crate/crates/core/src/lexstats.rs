//! Lexical contrasts between response corpora (log-odds with a Dirichlet
//! prior) and the topic-to-attribute variance ratio of response embeddings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased alphanumeric runs; numerals are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub const STOP_WORDS: [&str; 24] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "for", "i", "in", "is", "it", "me", "my",
    "of", "on", "that", "the", "this", "to", "was", "you", "your",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl TokenCounts {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, drop_stop_words: bool) -> Self {
        let mut c = TokenCounts::default();
        for t in texts {
            for tok in tokenize(t) {
                if drop_stop_words && STOP_WORDS.contains(&tok.as_str()) {
                    continue;
                }
                c.add(&tok, 1);
            }
        }
        c
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Self {
        let mut c = TokenCounts::default();
        for (t, n) in pairs {
            c.add(t, n);
        }
        c
    }

    pub fn add(&mut self, token: &str, n: u64) {
        *self.counts.entry(token.to_owned()).or_insert(0) += n;
        self.total += n;
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn merged(&self, other: &TokenCounts) -> TokenCounts {
        let mut m = self.clone();
        for (t, n) in &other.counts {
            m.add(t, *n);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Counts of the pooled corpora.
    Informative,
    /// Equal weight per token.
    Uniform,
}

/// Prior weights over the union vocabulary of `a` and `b`.
pub fn build_prior(a: &TokenCounts, b: &TokenCounts, kind: PriorKind) -> BTreeMap<String, f64> {
    let union = a.merged(b);
    union
        .counts
        .into_iter()
        .map(|(t, n)| {
            let w = match kind {
                PriorKind::Informative => n as f64,
                PriorKind::Uniform => 1.0,
            };
            (t, w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsResult {
    pub token: String,
    pub delta: f64,
    pub z: f64,
}

/// Log-odds ratio with an informative Dirichlet prior, for every token in the
/// union vocabulary. Prior weights are rescaled to sum to `alpha_scale`.
/// Sorted by z, highest first (ties by token).
pub fn log_odds_dirichlet(
    counts_a: &TokenCounts,
    counts_b: &TokenCounts,
    prior: &BTreeMap<String, f64>,
    alpha_scale: f64,
) -> Result<Vec<LogOddsResult>> {
    if !(alpha_scale > 0.0) {
        return Err(Error::Argument(format!("alpha_scale must be positive, got {alpha_scale}")));
    }
    let mass: f64 = prior.values().sum();
    if !(mass > 0.0) {
        return Err(Error::Computation("prior has no mass".into()));
    }
    let alpha0 = alpha_scale;
    let (na, nb) = (counts_a.total as f64, counts_b.total as f64);
    let mut vocab: Vec<&String> = counts_a.counts.keys().chain(counts_b.counts.keys()).collect();
    vocab.sort();
    vocab.dedup();

    let mut out = Vec::with_capacity(vocab.len());
    for w in vocab {
        let weight = prior.get(w).copied().unwrap_or(0.0);
        if !(weight > 0.0) {
            return Err(Error::Computation(format!("token {w:?} has zero prior mass")));
        }
        let alpha = weight / mass * alpha_scale;
        let ya = counts_a.get(w) as f64;
        let yb = counts_b.get(w) as f64;
        let la = ((ya + alpha) / (na + alpha0 - ya - alpha)).ln();
        let lb = ((yb + alpha) / (nb + alpha0 - yb - alpha)).ln();
        let delta = la - lb;
        let z = delta / (1.0 / (ya + alpha) + 1.0 / (yb + alpha)).sqrt();
        out.push(LogOddsResult {
            token: w.clone(),
            delta,
            z,
        });
    }
    out.sort_by(|x, y| y.z.total_cmp(&x.z).then_with(|| x.token.cmp(&y.token)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TavMode {
    /// Squared distances to the base and attribute centroids.
    Centroid,
    /// Mean squared distance over attribute/base pairs versus attribute/attribute pairs.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TavResult {
    pub ratio: f64,
    pub mode: TavMode,
}

fn check_width(sets: &[&[Vec<f64>]]) -> Result<usize> {
    let width = sets
        .iter()
        .find_map(|s| s.first())
        .map(Vec::len)
        .ok_or_else(|| Error::Argument("no embeddings".into()))?;
    for s in sets {
        if s.is_empty() {
            return Err(Error::Argument("embedding set is empty".into()));
        }
        if s.iter().any(|v| v.len() != width) {
            return Err(Error::Argument("embeddings have inconsistent widths".into()));
        }
    }
    Ok(width)
}

fn centroid(set: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut c = vec![0.0; width];
    for v in set {
        for (o, x) in c.iter_mut().zip(v) {
            *o += x;
        }
    }
    c.iter_mut().for_each(|x| *x /= set.len() as f64);
    c
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Spread of attribute responses around the base centroid relative to their
/// own centroid. Values above 1 mean the attribute pulls responses away from
/// the base topic.
pub fn tav_ratio(attr: &[Vec<f64>], base: &[Vec<f64>], mode: TavMode) -> Result<TavResult> {
    let width = check_width(&[attr, base])?;
    let (num, den) = match mode {
        TavMode::Centroid => {
            let mb = centroid(base, width);
            let ma = centroid(attr, width);
            let n = attr.len() as f64;
            (
                attr.iter().map(|v| sq(v, &mb)).sum::<f64>() / n,
                attr.iter().map(|v| sq(v, &ma)).sum::<f64>() / n,
            )
        }
        TavMode::Pairwise => {
            if attr.len() < 2 {
                return Err(Error::Argument("pairwise mode needs two attribute embeddings".into()));
            }
            let cross: f64 = attr.iter().flat_map(|a| base.iter().map(move |b| sq(a, b))).sum();
            let mut within = 0.0;
            let mut pairs = 0usize;
            for i in 0..attr.len() {
                for j in i + 1..attr.len() {
                    within += sq(&attr[i], &attr[j]);
                    pairs += 1;
                }
            }
            (cross / (attr.len() * base.len()) as f64, within / pairs as f64)
        }
    };
    // rounding in the centroid leaves a tiny residue for identical points
    let scale: f64 = attr.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / attr.len() as f64;
    if den <= 1e-24 * (1.0 + scale) {
        return Err(Error::DegenerateVariance(
            "attribute embeddings have no spread around their centroid".into(),
        ));
    }
    Ok(TavResult {
        ratio: num / den,
        mode,
    })
}
