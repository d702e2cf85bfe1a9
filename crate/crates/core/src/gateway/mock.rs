//! Deterministic offline providers.
//!
//! The chat mock reads the request it is given and answers in the required
//! output format. Answers depend only on the seed, model id and request, so
//! reruns are reproducible. Each attribute value nudges outputs in a fixed,
//! seed-derived direction, which gives the statistics something to find.
//! None of this imitates a real model.

use crate::digest::fields_u64;

use super::{ChatProvider, ChatRequest, EmbeddingProvider, ProviderError};

/// Emotion words the mock answers with; all but the last appear in the demo lexicon.
const WORDS: [&str; 16] = [
    "anger", "fear", "joy", "sadness", "disgust", "shame", "guilt", "surprise", "trust",
    "anticipation", "frustration", "anxiety", "happiness", "grief", "embarrassment", "hope",
];
const OOV_WORD: &str = "bewilderment";

const CUES: [(&str, &str); 14] = [
    ("angry", "anger"),
    ("furious", "anger"),
    ("afraid", "fear"),
    ("scared", "fear"),
    ("happy", "joy"),
    ("glad", "joy"),
    ("sad", "sadness"),
    ("cried", "sadness"),
    ("disgusted", "disgust"),
    ("ashamed", "shame"),
    ("embarrassed", "embarrassment"),
    ("guilty", "guilt"),
    ("died", "grief"),
    ("exam", "anxiety"),
];

const ER: [&str; 2] = ["I'm so sorry you went through that.", "That sounds really painful."];
const IP: [&str; 2] = [
    "I understand how hard that must have been.",
    "It makes sense that you felt this way.",
];
const EX: [&str; 2] = ["How are you feeling about it now?", "What happened after that?"];

pub struct MockChat {
    model_id: String,
    seed: u64,
}

impl MockChat {
    pub fn new(model_id: impl Into<String>, seed: u64) -> Self {
        MockChat {
            model_id: model_id.into(),
            seed,
        }
    }

    fn hash(&self, parts: &[&str]) -> u64 {
        let seed = self.seed.to_le_bytes();
        let mut fields: Vec<&[u8]> = vec![&seed, self.model_id.as_bytes()];
        fields.extend(parts.iter().map(|p| p.as_bytes()));
        fields_u64(fields)
    }

    /// Attribute values named in an identity clause.
    fn attribute_values(identity: &str) -> Vec<&str> {
        identity
            .split([','])
            .flat_map(|s| s.split(" and "))
            .map(|c| {
                c.trim()
                    .trim_end_matches("age category")
                    .trim_end_matches("culture")
                    .trim_end_matches("gender")
                    .trim()
            })
            .filter(|v| !v.is_empty())
            .collect()
    }

    fn affective(&self, identity: Option<&str>, text: &str, whole: u64) -> String {
        let lower = text.to_lowercase();
        let cued = CUES
            .iter()
            .find(|(cue, _)| lower.split(|c: char| !c.is_alphanumeric()).any(|w| w == *cue))
            .map(|(_, w)| *w);
        let mut word = cued.unwrap_or(WORDS[(self.hash(&["text", text]) % WORDS.len() as u64) as usize]);

        let recall = match identity {
            None => "You did not describe yourself.".to_owned(),
            Some(id) => {
                let values = Self::attribute_values(id);
                let pick = values[(whole % values.len() as u64) as usize];
                let bias = self.hash(&["bias", pick]);
                // each attribute pulls toward its own word a fixed share of the time
                if (whole >> 8) % 100 < 20 + bias % 30 {
                    word = WORDS[((bias >> 16) % WORDS.len() as u64) as usize];
                }
                if (whole >> 24) % 5 == 0 {
                    format!("You are someone who described themselves as {id}.")
                } else {
                    format!("You are a {id}.")
                }
            }
        };
        if (whole >> 32) % 29 == 0 {
            word = OOV_WORD;
        }
        let shown = match (whole >> 40) % 3 {
            0 => word.to_owned(),
            1 => format!("{word}."),
            _ => capitalize(word),
        };
        if (whole >> 48) % 37 == 0 {
            return shown;
        }
        format!("[OUTPUT 1]: {recall}\n[OUTPUT 2]: {shown}")
    }

    fn cognitive(&self, identity: Option<&str>, whole: u64) -> String {
        let values = identity.map(Self::attribute_values).unwrap_or_default();
        let mut parts: Vec<String> = Vec::new();
        if let Some(id) = identity {
            if whole % 3 != 0 {
                parts.push(format!("As a {id}, your experience deserves care."));
            }
        }
        for (dim, phrases) in [("er", ER), ("ip", IP), ("ex", EX)] {
            let mut p: i64 = 50;
            for v in &values {
                p += (self.hash(&["cog", dim, v]) % 41) as i64 - 20;
            }
            let roll = (self.hash(&[dim, &whole.to_string()]) % 100) as i64;
            let count = if roll < p / 2 {
                2
            } else if roll < p {
                1
            } else {
                0
            };
            parts.extend(phrases[..count].iter().map(|s| s.to_string()));
        }
        if parts.is_empty() {
            parts.push("Thank you for sharing this.".into());
        }
        format!("Output: {}", parts.join(" "))
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl ChatProvider for MockChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let last = request
            .turns
            .last()
            .ok_or_else(|| ProviderError::Invalid("request has no turns".into()))?;
        let identity = (request.turns.len() == 2).then(|| {
            request.turns[0]
                .trim_start_matches("I am a ")
                .trim_end_matches(". Who am I?")
        });
        let text = last.split_once(": ").map_or(last.as_str(), |(_, t)| t);
        let mut parts: Vec<&str> = vec![&request.system_text];
        parts.extend(request.turns.iter().map(String::as_str));
        let whole = self.hash(&parts);
        if request.system_text.contains("[OUTPUT 2]") {
            Ok(self.affective(identity, text, whole))
        } else {
            Ok(self.cognitive(identity, whole))
        }
    }
}

/// Feature-hashed bag of words, L2-normalized.
pub struct MockEmbedder {
    id: String,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        MockEmbedder {
            id: format!("mock-hash-{dim}"),
            dim: dim.max(1),
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = fields_u64([b"tok".as_slice(), tok.as_bytes()]);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder::new(64)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}
