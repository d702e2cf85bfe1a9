//! Communication-level scores (ER, IP, EX) for generated responses and the
//! cognitive shift between persona conditions.
//!
//! The classifiers that produce the levels are external. This module defines
//! the scorer contract and a few adapters: a fixture file, an HTTP endpoint,
//! and [`KeywordScorer`], a toy heuristic for offline pipeline tests.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::{fields_hex, sha256_hex};
use crate::error::{Error, Result};
use crate::gateway::{with_retry, Journal, ProviderError, RetryPolicy};

/// Emotional Reaction, Interpretation and Exploration levels, each 0..=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpitomeScore {
    pub er: u8,
    pub ip: u8,
    pub ex: u8,
}

impl EpitomeScore {
    pub fn new(er: i64, ip: i64, ex: i64) -> Result<Self> {
        let check = |name: &str, v: i64| -> Result<u8> {
            if (0..=2).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::Validation(format!("{name} level {v} outside 0..=2")))
            }
        };
        Ok(EpitomeScore {
            er: check("ER", er)?,
            ip: check("IP", ip)?,
            ex: check("EX", ex)?,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.er as f64, self.ip as f64, self.ex as f64]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CognitiveShift {
    pub deltas: [f64; 3],
}

pub fn cognitive_shift(with_attr: &EpitomeScore, without_attr: &EpitomeScore) -> CognitiveShift {
    let (a, b) = (with_attr.as_array(), without_attr.as_array());
    CognitiveShift {
        deltas: [a[0] - b[0], a[1] - b[1], a[2] - b[2]],
    }
}

/// Mean of per-sample shifts.
pub fn mean_shift(shifts: &[CognitiveShift]) -> Result<CognitiveShift> {
    if shifts.is_empty() {
        return Err(Error::Argument("no shifts to average".into()));
    }
    let mut d = [0.0; 3];
    for s in shifts {
        for (o, x) in d.iter_mut().zip(s.deltas) {
            *o += x;
        }
    }
    d.iter_mut().for_each(|x| *x /= shifts.len() as f64);
    Ok(CognitiveShift { deltas: d })
}

pub trait Scorer: Send + Sync {
    fn scorer_id(&self) -> &str;
    /// Raw levels as (ER, IP, EX); range checking happens in [`score`].
    fn levels(&self, seeker_post: &str, response: &str) -> std::result::Result<[i64; 3], ProviderError>;
}

/// Scores one (post, response) pair, validating the returned levels.
pub fn score(seeker_post: &str, response: &str, scorer: &dyn Scorer) -> Result<EpitomeScore> {
    if seeker_post.trim().is_empty() || response.trim().is_empty() {
        return Err(Error::Argument("post and response must be non-empty".into()));
    }
    let [er, ip, ex] = scorer
        .levels(seeker_post, response)
        .map_err(|e| Error::provider(Vec::new(), e.to_string()))?;
    EpitomeScore::new(er, ip, ex)
}

pub fn pair_key(seeker_post: &str, response: &str) -> (String, String) {
    (sha256_hex(seeker_post.as_bytes()), sha256_hex(response.as_bytes()))
}

/// Scores through a journal so each (post, response) is scored once.
pub fn score_cached(
    seeker_post: &str,
    response: &str,
    scorer: &dyn Scorer,
    cache: &Journal<EpitomeScore>,
    policy: RetryPolicy,
) -> Result<EpitomeScore> {
    let (p, r) = pair_key(seeker_post, response);
    let key = fields_hex([scorer.scorer_id().as_bytes(), p.as_bytes(), r.as_bytes()]);
    if let Some(s) = cache.get(&key) {
        return Ok(s);
    }
    if seeker_post.trim().is_empty() || response.trim().is_empty() {
        return Err(Error::Argument("post and response must be non-empty".into()));
    }
    let [er, ip, ex] = with_retry(policy, || scorer.levels(seeker_post, response))
        .map_err(|e| Error::provider(Vec::new(), e.to_string()))?;
    let s = EpitomeScore::new(er, ip, ex)?;
    cache.insert(&key, &key, s, serde_json::json!({"post": p, "response": r}))?;
    Ok(s)
}

pub type ScoreMap = HashMap<(String, String), EpitomeScore>;

/// Reads `post_digest response_digest er ip ex` lines (whitespace separated,
/// `#` comments). Identical duplicates collapse; conflicting ones are an error.
pub fn ingest_scores(path: &Path) -> Result<ScoreMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = ScoreMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 5 {
            return Err(Error::parse(path, i + 1, "expected 5 columns"));
        }
        let level = |s: &str| -> Result<i64> {
            s.parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad level {s:?}")))
        };
        let s = EpitomeScore::new(level(cols[2])?, level(cols[3])?, level(cols[4])?)
            .map_err(|e| Error::Validation(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let key = (cols[0].to_owned(), cols[1].to_owned());
        match map.get(&key) {
            Some(prev) if *prev != s => {
                return Err(Error::Validation(format!(
                    "conflicting scores for post {} response {}",
                    key.0, key.1
                )))
            }
            _ => {
                map.insert(key, s);
            }
        }
    }
    Ok(map)
}

/// Answers from a precomputed score file, deferring misses to `fallback`.
pub struct FixtureScorer<'a> {
    scores: ScoreMap,
    fallback: Option<&'a dyn Scorer>,
}

impl<'a> FixtureScorer<'a> {
    pub fn new(scores: ScoreMap, fallback: Option<&'a dyn Scorer>) -> Self {
        FixtureScorer { scores, fallback }
    }
}

impl Scorer for FixtureScorer<'_> {
    fn scorer_id(&self) -> &str {
        "fixture"
    }

    fn levels(&self, seeker_post: &str, response: &str) -> std::result::Result<[i64; 3], ProviderError> {
        if let Some(s) = self.scores.get(&pair_key(seeker_post, response)) {
            return Ok([s.er as i64, s.ip as i64, s.ex as i64]);
        }
        match self.fallback {
            Some(f) => f.levels(seeker_post, response),
            None => Err(ProviderError::Invalid("pair not in score fixture".into())),
        }
    }
}

/// POSTs `{"post", "response"}` and expects `{"er", "ip", "ex"}`.
/// The URL comes from `EMPATHY_SCORER_URL` when built with [`HttpScorer::from_env`].
pub struct HttpScorer {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Validation(format!("http client: {e}")))?;
        Ok(HttpScorer {
            client,
            url: url.into(),
        })
    }

    pub fn from_env() -> Result<Self> {
        let url = std::env::var("EMPATHY_SCORER_URL")
            .map_err(|_| Error::Validation("environment variable EMPATHY_SCORER_URL is not set".into()))?;
        HttpScorer::new(url)
    }
}

impl Scorer for HttpScorer {
    fn scorer_id(&self) -> &str {
        &self.url
    }

    fn levels(&self, seeker_post: &str, response: &str) -> std::result::Result<[i64; 3], ProviderError> {
        let body = serde_json::json!({"post": seeker_post, "response": response});
        let v = crate::gateway::http::post_json(&self.client, &self.url, None, &body)?;
        let get = |k: &str| {
            v[k].as_i64()
                .ok_or_else(|| ProviderError::Invalid(format!("missing integer field {k}")))
        };
        Ok([get("er")?, get("ip")?, get("ex")?])
    }
}

/// Toy keyword heuristic. It does not approximate the real classifiers and
/// exists only so the pipeline can run offline.
#[derive(Debug, Default, Clone, Copy)]
pub struct KeywordScorer;

const ER_CUES: [&str; 4] = ["sorry", "painful", "hurts", "heartbreaking"];
const IP_CUES: [&str; 4] = ["understand", "makes sense", "sounds like", "must have"];

fn level(count: usize) -> i64 {
    count.min(2) as i64
}

impl Scorer for KeywordScorer {
    fn scorer_id(&self) -> &str {
        "keyword-toy"
    }

    fn levels(&self, _seeker_post: &str, response: &str) -> std::result::Result<[i64; 3], ProviderError> {
        let lower = response.to_lowercase();
        let count = |cues: &[&str]| cues.iter().map(|c| lower.matches(c).count()).sum::<usize>();
        Ok([
            level(count(&ER_CUES)),
            level(count(&IP_CUES)),
            level(response.matches('?').count()),
        ])
    }
}
