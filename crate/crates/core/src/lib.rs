//! Persona-conditioned empathy auditing for chat models.
//!
//! The crate measures how a model's emotion predictions (affective empathy)
//! and response quality (cognitive empathy) shift when a demographic persona
//! is attached to the same user experience. Modules follow the pipeline:
//!
//! * [`corpus`]: ingest, mask and diversity-sample experience records
//! * [`persona`]: attribute taxonomy, persona grid and identity rendering
//! * [`lexicon`]: emotion-intensity vectors plus an out-of-vocabulary regressor
//! * [`gateway`]: prompt construction, providers, replayable response cache
//! * [`affect`]: output parsing, affective shift, EMD, accuracy, recall similarity
//! * [`cognitive`]: communication-level scores and cognitive shift
//! * [`causal`]: treatment-effect estimation, significance, baseline alignment
//! * [`lexstats`]: Dirichlet-prior log-odds and topic-to-attribute variance
//! * [`report`] and [`pipeline`]: table emission and the end-to-end driver

pub mod affect;
pub mod causal;
pub mod cognitive;
pub mod corpus;
pub mod digest;
mod error;
pub mod gateway;
pub mod lexicon;
pub mod lexstats;
pub mod persona;
pub mod pipeline;
pub mod report;

pub use affect::{AffectiveShift, ParsedAffective, RecallSimilarity};
pub use causal::{AteEstimate, BaselineTable, Dimension, OutcomeTable, Setting};
pub use cognitive::{CognitiveShift, EpitomeScore};
pub use corpus::{CorpusStats, ExperienceRecord, GoldLabel};
pub use error::{Error, Result};
pub use gateway::{ChatRequest, RunResult, Task};
pub use lexicon::{Emotion, EmotionVector, Lexicon};
pub use persona::{Attribute, Category, Persona, Taxonomy};
