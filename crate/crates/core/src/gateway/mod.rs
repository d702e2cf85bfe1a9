//! Prompt construction, chat and embedding providers, the response cache and
//! the bounded-parallel executor.

mod cache;
mod embed;
mod execute;
pub mod http;
pub mod mock;
mod prompt;
mod provider;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::persona::Persona;

pub use cache::{read_results, Journal, JournalEntry};
pub use embed::{embed, embed_direct, CachedEmbedder};
pub use execute::{execute, ExecuteOptions, PlanItem};
pub use prompt::{
    build_affective_prompt, build_cognitive_prompt, identity_turn, AFFECTIVE_FINAL_PREFIX,
    AFFECTIVE_SYSTEM, AFFECTIVE_SYSTEM_MASKED, COGNITIVE_FINAL_PREFIX, COGNITIVE_SYSTEM,
};
pub use provider::{with_retry, ChatProvider, EmbeddingProvider, ProviderError, RetryPolicy};

pub const AUDIT_TEMPERATURE: f64 = 0.0;
pub const AUDIT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Affective,
    Cognitive,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Affective, Task::Cognitive];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Affective => "affective",
            Task::Cognitive => "cognitive",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "affective" => Ok(Task::Affective),
            "cognitive" => Ok(Task::Cognitive),
            other => Err(Error::Argument(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    /// User messages in order; 1 or 2.
    pub turns: Vec<String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Cache key over the model and every request field.
    pub fn cache_key(&self, model_id: &str) -> String {
        let temperature = self.temperature.to_bits().to_le_bytes();
        let max_tokens = self.max_tokens.to_le_bytes();
        let mut fields: Vec<&[u8]> = vec![
            model_id.as_bytes(),
            self.system_text.as_bytes(),
            &temperature,
            &max_tokens,
        ];
        fields.extend(self.turns.iter().map(|t| t.as_bytes()));
        digest::fields_hex(fields)
    }

    /// Digest of the request content alone.
    pub fn digest(&self) -> String {
        self.cache_key("")
    }
}

/// One model interaction: Y(record, persona) for a task and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub record_id: String,
    pub persona: Persona,
    pub task: Task,
    pub model_id: String,
    /// Raw model text; `None` when the item failed.
    pub raw_output: Option<String>,
    pub error: Option<String>,
    pub cache_hit: bool,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunResult {
    /// Same result with run-specific fields blanked, for replay comparisons.
    pub fn without_volatile(&self) -> RunResult {
        RunResult {
            cache_hit: false,
            timestamp: 0,
            ..self.clone()
        }
    }
}

pub(crate) fn now_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest {
            system_text: "sys".into(),
            turns: vec!["a".into(), "b".into()],
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    #[test]
    fn cache_key_is_stable_and_sensitive() {
        let r = req();
        assert_eq!(r.cache_key("m"), req().cache_key("m"));
        assert_ne!(r.cache_key("m"), r.cache_key("n"));
        let mut t = req();
        t.turns = vec!["ab".into()];
        assert_ne!(r.cache_key("m"), t.cache_key("m"));
        let mut t = req();
        t.temperature = 0.1;
        assert_ne!(r.cache_key("m"), t.cache_key("m"));
        let mut t = req();
        t.max_tokens = 2047;
        assert_ne!(r.cache_key("m"), t.cache_key("m"));
    }

    #[test]
    fn single_byte_mutations_change_key() {
        let base = ChatRequest {
            system_text: "Your task is to analyze".into(),
            turns: vec!["I am a female gender. Who am I?".into(), "text".into()],
            temperature: 0.0,
            max_tokens: 2048,
        };
        let key = base.cache_key("m");
        for field in 0..3 {
            let s = match field {
                0 => &base.system_text,
                1 => &base.turns[0],
                _ => &base.turns[1],
            };
            for i in 0..s.len() {
                let mut bytes = s.clone().into_bytes();
                bytes[i] ^= 0x01;
                let mutated = String::from_utf8(bytes).unwrap();
                let mut r = base.clone();
                match field {
                    0 => r.system_text = mutated,
                    1 => r.turns[0] = mutated,
                    _ => r.turns[1] = mutated,
                }
                assert_ne!(r.cache_key("m"), key);
            }
        }
    }

    #[test]
    fn task_parse() {
        assert_eq!("Affective".parse::<Task>().unwrap(), Task::Affective);
        assert!("x".parse::<Task>().is_err());
    }
}
