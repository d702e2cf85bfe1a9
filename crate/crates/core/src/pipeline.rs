//! Run manifests and the staged driver.
//!
//! Each stage reads the artifacts of the previous ones from the output
//! directory, so any stage can be re-run on its own:
//!
//! | stage   | writes |
//! |---------|--------|
//! | sample  | `corpus/sampled.jsonl`, `corpus/sample_ids.txt`, `corpus/stats.json` |
//! | mask    | `corpus/masked.jsonl` |
//! | grid    | `corpus/personas.txt` |
//! | run     | `runs/results.jsonl` |
//! | score   | `metrics/{parsed.jsonl, scores.tsv, accuracy.csv, recall.csv, rejects.csv}` |
//! | analyze | `analysis/{estimates.csv, least_aligned.csv, baseline_alignment.csv, log_odds.csv, tav.csv, notes.txt}` |
//! | report  | `report/{shift_tables.md, shift_tables.csv, summary.md, summary.csv, completion.md}` |
//!
//! `runs/results.jsonl` carries timestamps; everything else is a pure function
//! of the manifest and the response cache.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::affect::{lexical_accuracy, parse_affective, parse_cognitive, recall_similarity};
use crate::causal::{
    ate_intersection, ate_isolation, baseline_alignment, least_aligned, AteEstimate, BaselineTable, Dimension,
    OutcomeTable, Setting, StatsConfig,
};
use crate::cognitive::{pair_key, score_cached, FixtureScorer, HttpScorer, KeywordScorer, Scorer, ingest_scores};
use crate::corpus::{
    build_sampling_features, ingest, kcenter_sample, mask_self_disclosure, readability_stats, CorpusStats,
    DisclosureTerms, ExperienceRecord, GoldLabel,
};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::gateway::http::{HttpChat, HttpEmbedder};
use crate::gateway::mock::{MockChat, MockEmbedder};
use crate::gateway::{
    execute, read_results, CachedEmbedder, ChatProvider, EmbeddingProvider, ExecuteOptions, Journal, PlanItem,
    RetryPolicy, RunResult, Task,
};
use crate::lexicon::{train_oov, EmotionMetrics, EmotionVector, Fallback, Lexicon, OovModel, TrainConfig};
use crate::lexstats::{build_prior, log_odds_dirichlet, tav_ratio, PriorKind, TavMode, TokenCounts};
use crate::persona::{render, Attribute, Category, Persona, Taxonomy};
use crate::report::{
    emit_shift_tables, emit_summary, read_estimates, render_summary, write_csv, write_estimates, write_stamped,
    Stamp,
};
use crate::{cognitive::EpitomeScore, lexicon::Emotion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaMode {
    /// Base plus single-attribute personas.
    Isolation,
    /// Full grid, intersection estimates only.
    Intersection,
    /// Full grid, both settings.
    Full,
}

impl PersonaMode {
    fn settings(self) -> &'static [Setting] {
        match self {
            PersonaMode::Isolation => &[Setting::Isolation],
            PersonaMode::Intersection => &[Setting::Intersection],
            PersonaMode::Full => &[Setting::Isolation, Setting::Intersection],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    pub provider: ChatKind,
    pub model: String,
    /// Mock only.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbedKind,
    /// Mock width.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub model: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbedKind::Mock,
            dim: default_dim(),
            model: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Toy keyword heuristic for offline runs.
    Keyword,
    Fixture,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    pub provider: ScorerKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub url: Option<String>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            provider: ScorerKind::Keyword,
            path: None,
            url: None,
        }
    }
}

fn default_dim() -> usize {
    64
}
fn default_mode() -> PersonaMode {
    PersonaMode::Isolation
}
fn default_tasks() -> Vec<Task> {
    Task::ALL.to_vec()
}
fn default_parallelism() -> usize {
    4
}
fn default_min_tokens() -> usize {
    10
}
fn default_bootstrap() -> usize {
    2000
}
fn default_margin() -> f64 {
    0.005
}
fn default_alpha0() -> f64 {
    10.0
}
fn default_top_k() -> usize {
    10
}

/// TOML run manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    #[serde(default = "default_mode")]
    pub persona_mode: PersonaMode,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_min_tokens")]
    pub min_tokens: usize,
    /// Diversity-sampled subset size; all eligible records when absent.
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub disclosure_terms: Option<PathBuf>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    /// Regressor for emotion words missing from the lexicon.
    #[serde(default)]
    pub oov_model: Option<PathBuf>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_n: usize,
    #[serde(default = "default_margin")]
    pub equivalence_margin: f64,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub chat: Vec<ChatConfig>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunManifest::from_toml(&text, &base)
    }

    /// Parses and validates, reporting every problem at once.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: RunManifest =
            toml::from_str(text).map_err(|e| Error::Manifest(vec![e.message().to_owned()]))?;
        m.base_dir = base_dir.to_path_buf();
        let problems = m.problems();
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(Error::Manifest(problems))
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need_file = |label: &str, p: &Path| {
            let full = self.resolve(p);
            if !full.is_file() {
                out.push(format!("{label}: file not found: {}", full.display()));
            }
        };
        need_file("corpus", &self.corpus);
        need_file("lexicon", &self.lexicon);
        for (label, p) in [
            ("disclosure_terms", &self.disclosure_terms),
            ("taxonomy", &self.taxonomy),
            ("baseline", &self.baseline),
            ("oov_model", &self.oov_model),
        ] {
            if let Some(p) = p {
                need_file(label, p);
            }
        }
        match (self.scorer.provider, &self.scorer.path) {
            (ScorerKind::Fixture, None) => out.push("scorer: fixture provider needs `path`".into()),
            (ScorerKind::Fixture, Some(p)) if !self.resolve(p).is_file() => {
                out.push(format!("scorer: file not found: {}", self.resolve(p).display()))
            }
            _ => {}
        }
        if self.chat.is_empty() {
            out.push("chat: at least one [[chat]] entry is required".into());
        }
        let mut models = BTreeSet::new();
        for c in &self.chat {
            if c.model.trim().is_empty() {
                out.push("chat: model id is empty".into());
            } else if !models.insert(c.model.as_str()) {
                out.push(format!("chat: duplicate model {:?}", c.model));
            }
        }
        if self.tasks.is_empty() {
            out.push("tasks: at least one task is required".into());
        }
        if self.tasks.iter().collect::<BTreeSet<_>>().len() != self.tasks.len() {
            out.push("tasks: duplicate entries".into());
        }
        if self.parallelism == 0 {
            out.push("parallelism: must be at least 1".into());
        }
        if self.bootstrap_n == 0 {
            out.push("bootstrap_n: must be at least 1".into());
        }
        if !(self.equivalence_margin > 0.0 && self.equivalence_margin.is_finite()) {
            out.push(format!("equivalence_margin: must be positive, got {}", self.equivalence_margin));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            out.push(format!("alpha0: must be positive, got {}", self.alpha0));
        }
        if self.sample_size == Some(0) {
            out.push("sample_size: must be at least 1".into());
        }
        if self.top_k == 0 {
            out.push("top_k: must be at least 1".into());
        }
        if self.embedding.dim == 0 {
            out.push("embedding.dim: must be at least 1".into());
        }
        out
    }

    /// sha256 of the canonical JSON form (paths as written, not resolved).
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        sha256_hex(&json)
    }
}

/// Persona grid for a mode.
pub fn personas_for(taxonomy: &Taxonomy, mode: PersonaMode) -> Vec<Persona> {
    match mode {
        PersonaMode::Isolation => taxonomy.isolation_personas(),
        PersonaMode::Intersection | PersonaMode::Full => taxonomy.build_grid(),
    }
}

/// Record-major plan. Affective items use the masked text, cognitive items the
/// original.
pub fn build_plan(
    original: &[ExperienceRecord],
    masked: &[ExperienceRecord],
    personas: &[Persona],
    tasks: &[Task],
) -> Result<Vec<PlanItem>> {
    if original.len() != masked.len() || original.iter().zip(masked).any(|(a, b)| a.id != b.id) {
        return Err(Error::Argument("masked records do not line up with the sampled records".into()));
    }
    let mut plan = Vec::with_capacity(original.len() * personas.len() * tasks.len());
    for (orig, mask) in original.iter().zip(masked) {
        for p in personas {
            for t in tasks {
                let rec = match t {
                    Task::Affective => mask,
                    Task::Cognitive => orig,
                };
                plan.push(PlanItem::new(rec, p, *t)?);
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    /// No result was recorded (the run stopped early).
    Missing,
    /// The provider failed after retries.
    Provider,
    /// The output did not follow the required format.
    Format,
    /// The emotion word is not in the lexicon and no regressor is configured.
    OutOfVocabulary,
    /// The response could not be scored.
    Scorer,
}

impl RejectKind {
    pub const ALL: [RejectKind; 5] = [
        RejectKind::Missing,
        RejectKind::Provider,
        RejectKind::Format,
        RejectKind::OutOfVocabulary,
        RejectKind::Scorer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectKind::Missing => "missing",
            RejectKind::Provider => "provider",
            RejectKind::Format => "format",
            RejectKind::OutOfVocabulary => "out_of_vocabulary",
            RejectKind::Scorer => "scorer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub kind: RejectKind,
    pub message: String,
}

/// One plan item after parsing and scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedRecord {
    pub model_id: String,
    pub record_id: String,
    /// Persona key, `age|culture|gender`.
    pub persona: String,
    pub task: Task,
    pub emotion_word: Option<String>,
    pub truncated: bool,
    /// Intensity came from the out-of-vocabulary regressor.
    pub oov_fallback: bool,
    pub affect: Option<[f64; 8]>,
    pub persona_recall: Option<String>,
    pub response: Option<String>,
    pub epitome: Option<[u8; 3]>,
    pub reject: Option<Reject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub persona: String,
    pub n: usize,
    pub accuracy: f64,
    /// Against the gold label word's lexicon vector, where the lexicon has it.
    pub intensity_mse: Option<f64>,
    pub mse_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub model: String,
    pub persona: String,
    pub n: usize,
    pub cosine: f64,
    pub rouge_l_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRow {
    pub model: String,
    pub task: Task,
    pub persona: String,
    pub total: usize,
    pub rejected: usize,
    pub rate: f64,
    pub missing: usize,
    pub provider: usize,
    pub format: usize,
    pub out_of_vocabulary: usize,
    pub scorer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastAlignedRow {
    pub model: String,
    pub setting: Setting,
    pub dimension: Dimension,
    /// `none` when no attribute is significant.
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub model: String,
    pub setting: Setting,
    pub emotion: Emotion,
    pub rho: Option<f64>,
    pub cultures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsRow {
    pub model: String,
    pub attribute: Attribute,
    pub rank: usize,
    pub token: String,
    pub delta: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TavRow {
    pub model: String,
    pub attribute: Attribute,
    pub n_attribute: usize,
    pub n_base: usize,
    pub ratio: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub model: String,
    pub family: String,
    pub category: Category,
    pub row: String,
    pub attribute: String,
    pub dimension: String,
    pub iso_low: f64,
    pub iso_high: f64,
    pub inter_low: f64,
    pub inter_high: f64,
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub eligible: usize,
    pub selected: usize,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub planned: usize,
    pub failed: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScoreSummary {
    pub parsed: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub sample: SampleSummary,
    pub masked: usize,
    pub personas: usize,
    pub run: RunSummary,
    pub score: ScoreSummary,
    pub estimates: usize,
}

fn write_jsonl<T: Serialize>(path: &Path, stamp: &Stamp, items: &[T]) -> Result<()> {
    let mut body = serde_json::to_string(stamp).expect("stamp serializes");
    body.push('\n');
    for it in items {
        body.push_str(&serde_json::to_string(it).map_err(|e| Error::Computation(e.to_string()))?);
        body.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, stamp: &Stamp) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            let found: Stamp = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, 1, format!("missing stamp: {e}")))?;
            if &found != stamp {
                tracing::warn!(path = %path.display(), "artifact was produced by manifest {}", found.manifest_digest);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub struct Pipeline {
    manifest: RunManifest,
    stamp: Stamp,
    out: PathBuf,
    taxonomy: Taxonomy,
    retry: RetryPolicy,
}

impl Pipeline {
    pub fn new(manifest: RunManifest) -> Result<Self> {
        let problems = manifest.problems();
        if !problems.is_empty() {
            return Err(Error::Manifest(problems));
        }
        let taxonomy = match &manifest.taxonomy {
            Some(p) => Taxonomy::load(&manifest.resolve(p))?,
            None => Taxonomy::default(),
        };
        let out = manifest.resolve(&manifest.output_dir);
        let stamp = Stamp::new(manifest.digest(), manifest.seed);
        let p = Pipeline {
            manifest,
            stamp,
            out,
            taxonomy,
            retry: RetryPolicy::default(),
        };
        let meta = serde_json::json!({
            "manifest_digest": p.stamp.manifest_digest,
            "seed": p.stamp.seed,
            "manifest": p.manifest,
        });
        let path = p.out.join("manifest.json");
        fs::create_dir_all(&p.out).map_err(|e| Error::io(&p.out, e))?;
        fs::write(&path, serde_json::to_string_pretty(&meta).expect("json") + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(p)
    }

    /// Overrides the retry policy (tests use zero delays).
    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn stamp(&self) -> &Stamp {
        &self.stamp
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn cache_dir(&self) -> PathBuf {
        self.manifest.resolve(&self.manifest.cache_dir)
    }

    fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let e = &self.manifest.embedding;
        Ok(match e.provider {
            EmbedKind::Mock => Box::new(MockEmbedder::new(e.dim)),
            EmbedKind::Http => Box::new(HttpEmbedder::from_env(e.model.as_deref())?),
        })
    }

    fn chat(&self, c: &ChatConfig) -> Result<Box<dyn ChatProvider>> {
        Ok(match c.provider {
            ChatKind::Mock => Box::new(MockChat::new(c.model.clone(), c.seed)),
            ChatKind::Http => Box::new(HttpChat::from_env(Some(&c.model))?),
        })
    }

    fn scorer(&self) -> Result<Box<dyn Scorer>> {
        let s = &self.manifest.scorer;
        Ok(match s.provider {
            ScorerKind::Keyword => Box::new(KeywordScorer),
            ScorerKind::Fixture => {
                let p = self.manifest.resolve(s.path.as_deref().expect("validated"));
                Box::new(FixtureScorer::new(ingest_scores(&p)?, None))
            }
            ScorerKind::Http => match &s.url {
                Some(u) => Box::new(HttpScorer::new(u.clone())?),
                None => Box::new(HttpScorer::from_env()?),
            },
        })
    }

    fn with_embedder<T>(&self, f: impl FnOnce(&CachedEmbedder<'_>) -> Result<T>) -> Result<T> {
        let inner = self.embedder()?;
        let journal = Journal::open(&self.cache_dir(), "embeddings")?;
        let cached = CachedEmbedder::new(inner.as_ref(), journal, self.retry);
        f(&cached)
    }

    pub fn sample(&self) -> Result<SampleSummary> {
        let records = ingest(&self.manifest.resolve(&self.manifest.corpus), self.manifest.min_tokens)?;
        if records.is_empty() {
            return Err(Error::Validation(format!(
                "no corpus record has at least {} words",
                self.manifest.min_tokens
            )));
        }
        let eligible = records.len();
        let chosen: Vec<ExperienceRecord> = match self.manifest.sample_size {
            Some(k) if k > eligible => {
                return Err(Error::Argument(format!(
                    "sample_size {k} exceeds the {eligible} eligible records"
                )))
            }
            Some(k) if k < eligible => {
                let texts: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
                let labels: Vec<GoldLabel> = records.iter().map(|r| r.gold_label).collect();
                let features = self.with_embedder(|e| build_sampling_features(&texts, &labels, e))?;
                kcenter_sample(&features, k, 0)?
                    .into_iter()
                    .map(|i| records[i].clone())
                    .collect()
            }
            _ => records,
        };
        let stats = readability_stats(&chosen)?;
        write_jsonl(&self.path("corpus/sampled.jsonl"), &self.stamp, &chosen)?;
        let ids: String = chosen.iter().map(|r| format!("{}\n", r.id)).collect();
        write_stamped(&self.path("corpus/sample_ids.txt"), &self.stamp, &ids)?;
        let stats_json = serde_json::json!({
            "manifest_digest": self.stamp.manifest_digest,
            "seed": self.stamp.seed,
            "eligible": eligible,
            "stats": stats,
        });
        let p = self.path("corpus/stats.json");
        fs::write(&p, serde_json::to_string_pretty(&stats_json).expect("json") + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(SampleSummary {
            eligible,
            selected: chosen.len(),
            stats,
        })
    }

    fn sampled(&self) -> Result<Vec<ExperienceRecord>> {
        read_jsonl(&self.path("corpus/sampled.jsonl"), &self.stamp)
    }

    fn masked(&self) -> Result<Vec<ExperienceRecord>> {
        read_jsonl(&self.path("corpus/masked.jsonl"), &self.stamp)
    }

    /// Masks self-disclosed emotion words; returns how many records changed.
    pub fn mask(&self) -> Result<usize> {
        let terms = match &self.manifest.disclosure_terms {
            Some(p) => DisclosureTerms::load(&self.manifest.resolve(p))?,
            None => DisclosureTerms::default(),
        };
        let masked: Vec<ExperienceRecord> = self
            .sampled()?
            .iter()
            .map(|r| mask_self_disclosure(r, &terms))
            .collect();
        write_jsonl(&self.path("corpus/masked.jsonl"), &self.stamp, &masked)?;
        Ok(masked.iter().filter(|r| r.masked).count())
    }

    pub fn grid(&self) -> Result<Vec<Persona>> {
        let personas = personas_for(&self.taxonomy, self.manifest.persona_mode);
        let body: String = personas.iter().map(|p| format!("{}\n", p.key())).collect();
        write_stamped(&self.path("corpus/personas.txt"), &self.stamp, &body)?;
        Ok(personas)
    }

    fn personas(&self) -> Result<Vec<Persona>> {
        let p = self.path("corpus/personas.txt");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        text.lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(Persona::from_key)
            .collect()
    }

    fn plan(&self) -> Result<Vec<PlanItem>> {
        build_plan(&self.sampled()?, &self.masked()?, &self.personas()?, &self.manifest.tasks)
    }

    /// Queries every configured model. A fatal provider error writes the
    /// completion report and returns [`Error::Aborted`].
    pub fn run_models(&self) -> Result<RunSummary> {
        let plan = self.plan()?;
        let log = self.path("runs/results.jsonl");
        if log.exists() {
            fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
        }
        let cache: Journal<String> = Journal::open(&self.cache_dir(), "chat")?;
        let opts = ExecuteOptions {
            parallelism: self.manifest.parallelism,
            retry: self.retry,
            results_log: Some(log),
        };
        let mut summary = RunSummary {
            planned: plan.len() * self.manifest.chat.len(),
            failed: 0,
            cache_hits: 0,
        };
        for c in &self.manifest.chat {
            let provider = self.chat(c)?;
            let results = match execute(&plan, provider.as_ref(), &cache, &opts) {
                Ok(r) => r,
                Err(e @ Error::Aborted { .. }) => {
                    self.completion(Some(&e.to_string()))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            summary.failed += results.iter().filter(|r| r.error.is_some()).count();
            summary.cache_hits += results.iter().filter(|r| r.cache_hit).count();
        }
        Ok(summary)
    }

    /// Latest result per (model, record, persona, task).
    fn results(&self) -> Result<HashMap<(String, String, String, Task), RunResult>> {
        let mut map = HashMap::new();
        for r in read_results(&self.path("runs/results.jsonl"))? {
            map.insert((r.model_id.clone(), r.record_id.clone(), r.persona.key(), r.task), r);
        }
        Ok(map)
    }

    pub fn score(&self) -> Result<ScoreSummary> {
        let plan = self.plan()?;
        let results = self.results()?;
        let originals: HashMap<String, ExperienceRecord> =
            self.sampled()?.into_iter().map(|r| (r.id.clone(), r)).collect();
        let lexicon = Lexicon::load(&self.manifest.resolve(&self.manifest.lexicon))?;
        let oov = self
            .manifest
            .oov_model
            .as_ref()
            .map(|p| OovModel::load(&self.manifest.resolve(p)))
            .transpose()?;
        let scorer = self.scorer()?;
        let score_cache: Journal<EpitomeScore> = Journal::open(&self.cache_dir(), "scores")?;

        self.with_embedder(|emb| {
            let fallback = oov.as_ref().map(|model| Fallback { model, embedder: emb });
            let mut parsed = Vec::with_capacity(plan.len() * self.manifest.chat.len());
            for c in &self.manifest.chat {
                for item in &plan {
                    let key = (c.model.clone(), item.record_id.clone(), item.persona.key(), item.task);
                    let original = &originals[&item.record_id];
                    parsed.push(self.parse_one(
                        &c.model,
                        item,
                        results.get(&key),
                        original,
                        &lexicon,
                        fallback.as_ref(),
                        scorer.as_ref(),
                        &score_cache,
                    )?);
                }
            }
            write_jsonl(&self.path("metrics/parsed.jsonl"), &self.stamp, &parsed)?;
            self.write_metric_tables(&parsed, &originals, &lexicon, emb)?;
            Ok(ScoreSummary {
                parsed: parsed.len(),
                rejected: parsed.iter().filter(|p| p.reject.is_some()).count(),
            })
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn parse_one(
        &self,
        model: &str,
        item: &PlanItem,
        result: Option<&RunResult>,
        original: &ExperienceRecord,
        lexicon: &Lexicon,
        fallback: Option<&Fallback<'_>>,
        scorer: &dyn Scorer,
        score_cache: &Journal<EpitomeScore>,
    ) -> Result<ParsedRecord> {
        let mut rec = ParsedRecord {
            model_id: model.to_owned(),
            record_id: item.record_id.clone(),
            persona: item.persona.key(),
            task: item.task,
            emotion_word: None,
            truncated: false,
            oov_fallback: false,
            affect: None,
            persona_recall: None,
            response: None,
            epitome: None,
            reject: None,
        };
        let reject = |kind, message: String| Some(Reject { kind, message });
        let raw = match result {
            None => {
                rec.reject = reject(RejectKind::Missing, "no result recorded".into());
                return Ok(rec);
            }
            Some(r) => match (&r.raw_output, &r.error) {
                (Some(raw), None) => raw,
                (_, e) => {
                    rec.reject = reject(RejectKind::Provider, e.clone().unwrap_or_default());
                    return Ok(rec);
                }
            },
        };
        match item.task {
            Task::Affective => match parse_affective(raw) {
                Err(e) => rec.reject = reject(RejectKind::Format, e.to_string()),
                Ok(p) => {
                    rec.truncated = p.truncated;
                    rec.persona_recall = Some(p.persona_recall);
                    rec.oov_fallback = lexicon.get(&p.emotion_word).is_none();
                    match lexicon.intensity(&p.emotion_word, fallback) {
                        Ok(v) => rec.affect = Some(*v.values()),
                        Err(Error::OutOfVocabulary(w)) => {
                            rec.oov_fallback = false;
                            rec.reject = reject(RejectKind::OutOfVocabulary, w);
                        }
                        Err(e) => rec.reject = reject(RejectKind::Provider, e.to_string()),
                    }
                    rec.emotion_word = Some(p.emotion_word);
                }
            },
            Task::Cognitive => match parse_cognitive(raw) {
                Err(e) => rec.reject = reject(RejectKind::Format, e.to_string()),
                Ok(p) => {
                    match score_cached(&original.text, &p.response, scorer, score_cache, self.retry) {
                        Ok(s) => rec.epitome = Some([s.er, s.ip, s.ex]),
                        Err(e) => rec.reject = reject(RejectKind::Scorer, e.to_string()),
                    }
                    rec.response = Some(p.response);
                }
            },
        }
        Ok(rec)
    }

    fn persona_order(&self) -> Result<HashMap<String, usize>> {
        Ok(self
            .personas()?
            .iter()
            .enumerate()
            .map(|(i, p)| (p.key(), i))
            .collect())
    }

    fn model_order(&self) -> HashMap<&str, usize> {
        self.manifest
            .chat
            .iter()
            .enumerate()
            .map(|(i, c)| (c.model.as_str(), i))
            .collect()
    }

    fn write_metric_tables(
        &self,
        parsed: &[ParsedRecord],
        originals: &HashMap<String, ExperienceRecord>,
        lexicon: &Lexicon,
        emb: &dyn EmbeddingProvider,
    ) -> Result<()> {
        let porder = self.persona_order()?;
        let morder = self.model_order();
        let group_key = |p: &ParsedRecord| (morder[p.model_id.as_str()], porder[&p.persona]);

        // scores in the ingest_scores layout
        let mut score_lines = BTreeSet::new();
        for p in parsed {
            if let (Some(r), Some([er, ip, ex])) = (&p.response, p.epitome) {
                let (pd, rd) = pair_key(&originals[&p.record_id].text, r);
                score_lines.insert(format!("{pd}\t{rd}\t{er}\t{ip}\t{ex}\n"));
            }
        }
        write_stamped(
            &self.path("metrics/scores.tsv"),
            &self.stamp,
            &score_lines.into_iter().collect::<String>(),
        )?;

        let mut by_group: BTreeMap<(usize, usize), Vec<&ParsedRecord>> = BTreeMap::new();
        for p in parsed.iter().filter(|p| p.task == Task::Affective) {
            by_group.entry(group_key(p)).or_default().push(p);
        }
        let mut accuracy = Vec::new();
        let mut recall = Vec::new();
        for rows in by_group.values() {
            let ok: Vec<&&ParsedRecord> = rows.iter().filter(|p| p.affect.is_some()).collect();
            let (model, persona) = (rows[0].model_id.clone(), rows[0].persona.clone());
            if !ok.is_empty() {
                let words: Vec<String> = ok.iter().map(|p| p.emotion_word.clone().unwrap_or_default()).collect();
                let golds: Vec<GoldLabel> = ok.iter().map(|p| originals[&p.record_id].gold_label).collect();
                let errs: Vec<f64> = ok
                    .iter()
                    .filter_map(|p| {
                        let gold = lexicon.get(originals[&p.record_id].gold_label.as_str())?;
                        let pred = p.affect?;
                        Some(pred.iter().zip(gold.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 8.0)
                    })
                    .collect();
                accuracy.push(AccuracyRow {
                    model: model.clone(),
                    persona: persona.clone(),
                    n: ok.len(),
                    accuracy: lexical_accuracy(&words, &golds)?,
                    intensity_mse: mean(errs.iter().copied()),
                    mse_n: errs.len(),
                });
            }
            let Some(injected) = render(&Persona::from_key(&persona)?) else { continue };
            let mut sims = Vec::new();
            for p in rows {
                if let Some(recalled) = p.persona_recall.as_deref().filter(|r| !r.trim().is_empty()) {
                    sims.push(recall_similarity(&injected, recalled, emb)?);
                }
            }
            if !sims.is_empty() {
                recall.push(RecallRow {
                    model,
                    persona,
                    n: sims.len(),
                    cosine: mean(sims.iter().map(|s| s.cosine)).expect("non-empty"),
                    rouge_l_f1: mean(sims.iter().map(|s| s.rouge_l_f1)).expect("non-empty"),
                });
            }
        }
        write_csv(&self.path("metrics/accuracy.csv"), &self.stamp, &accuracy)?;
        write_csv(&self.path("metrics/recall.csv"), &self.stamp, &recall)?;

        let mut rejects: BTreeMap<(usize, Task, usize), RejectRow> = BTreeMap::new();
        for p in parsed {
            let (m, pi) = group_key(p);
            let row = rejects.entry((m, p.task, pi)).or_insert_with(|| RejectRow {
                model: p.model_id.clone(),
                task: p.task,
                persona: p.persona.clone(),
                total: 0,
                rejected: 0,
                rate: 0.0,
                missing: 0,
                provider: 0,
                format: 0,
                out_of_vocabulary: 0,
                scorer: 0,
            });
            row.total += 1;
            if let Some(r) = &p.reject {
                row.rejected += 1;
                *match r.kind {
                    RejectKind::Missing => &mut row.missing,
                    RejectKind::Provider => &mut row.provider,
                    RejectKind::Format => &mut row.format,
                    RejectKind::OutOfVocabulary => &mut row.out_of_vocabulary,
                    RejectKind::Scorer => &mut row.scorer,
                } += 1;
            }
        }
        let rows: Vec<RejectRow> = rejects
            .into_values()
            .map(|mut r| {
                r.rate = r.rejected as f64 / r.total as f64;
                r
            })
            .collect();
        write_csv(&self.path("metrics/rejects.csv"), &self.stamp, &rows)
    }

    fn parsed(&self) -> Result<Vec<ParsedRecord>> {
        read_jsonl(&self.path("metrics/parsed.jsonl"), &self.stamp)
    }

    fn stats_config(&self) -> StatsConfig {
        StatsConfig {
            bootstrap_n: self.manifest.bootstrap_n,
            seed: self.manifest.seed,
            equivalence_margin: self.manifest.equivalence_margin,
            alpha: 0.05,
        }
    }

    /// Outcome tables per model, in manifest order.
    pub fn outcome_tables(&self, parsed: &[ParsedRecord]) -> Result<Vec<OutcomeTable>> {
        let mut tables: Vec<OutcomeTable> = self.manifest.chat.iter().map(|c| OutcomeTable::new(c.model.clone())).collect();
        let morder = self.model_order();
        for p in parsed {
            let t = &mut tables[morder[p.model_id.as_str()]];
            let persona = Persona::from_key(&p.persona)?;
            if let Some(a) = p.affect {
                t.set_affect(&p.record_id, &persona, &EmotionVector::new(a)?);
            }
            if let Some([er, ip, ex]) = p.epitome {
                t.set_epitome(&p.record_id, &persona, &EpitomeScore::new(er.into(), ip.into(), ex.into())?);
            }
            if let Some(r) = &p.reject {
                t.mark_missing(&p.record_id, &persona, r.kind.as_str());
            }
        }
        Ok(tables)
    }

    /// Returns the number of estimates written.
    pub fn analyze(&self) -> Result<usize> {
        let parsed = self.parsed()?;
        let tables = self.outcome_tables(&parsed)?;
        let cfg = self.stats_config();
        let mut notes = Vec::new();
        let mut estimates: Vec<AteEstimate> = Vec::new();
        for t in &tables {
            for setting in self.manifest.persona_mode.settings() {
                for a in self.taxonomy.all_attributes() {
                    let r = match setting {
                        Setting::Isolation => ate_isolation(t, &a, &cfg),
                        Setting::Intersection => ate_intersection(t, &a, &self.taxonomy, &cfg),
                    };
                    match r {
                        Ok(es) => estimates.extend(es),
                        Err(Error::Estimation(m)) => notes.push(format!("{} {setting}: {m}", t.model_id)),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        write_estimates(&self.path("analysis/estimates.csv"), &self.stamp, &estimates)?;

        let mut least = Vec::new();
        let mut alignment = Vec::new();
        let baseline = match &self.manifest.baseline {
            Some(p) => BaselineTable::load(&self.manifest.resolve(p))?,
            None => BaselineTable::bundled(),
        };
        for t in &tables {
            for setting in self.manifest.persona_mode.settings() {
                let mine: Vec<AteEstimate> = estimates
                    .iter()
                    .filter(|e| e.model_id == t.model_id && e.setting == *setting)
                    .cloned()
                    .collect();
                for (dimension, attr) in least_aligned(&mine) {
                    least.push(LeastAlignedRow {
                        model: t.model_id.clone(),
                        setting: *setting,
                        dimension,
                        attribute: attr.map_or_else(|| "none".to_owned(), |a| a.to_string()),
                    });
                }
                let culture: Vec<AteEstimate> =
                    mine.into_iter().filter(|e| e.attribute.category == Category::Culture).collect();
                match baseline_alignment(&culture, &baseline) {
                    Ok(rows) => alignment.extend(rows.into_iter().map(|a| AlignmentRow {
                        model: t.model_id.clone(),
                        setting: *setting,
                        emotion: a.emotion,
                        rho: a.rho,
                        cultures: a.cultures,
                    })),
                    Err(Error::Argument(m)) => notes.push(format!("{} {setting} baseline alignment skipped: {m}", t.model_id)),
                    Err(e) => return Err(e),
                }
            }
        }
        write_csv(&self.path("analysis/least_aligned.csv"), &self.stamp, &least)?;
        write_csv(&self.path("analysis/baseline_alignment.csv"), &self.stamp, &alignment)?;

        let (log_odds, tav) = self.with_embedder(|emb| self.lexical_analysis(&parsed, emb, &mut notes))?;
        write_csv(&self.path("analysis/log_odds.csv"), &self.stamp, &log_odds)?;
        write_csv(&self.path("analysis/tav.csv"), &self.stamp, &tav)?;
        let body: String = notes.iter().map(|n| format!("{n}\n")).collect();
        write_stamped(&self.path("analysis/notes.txt"), &self.stamp, &body)?;
        Ok(estimates.len())
    }

    /// Log-odds and TAV of each attribute's responses against base responses.
    fn lexical_analysis(
        &self,
        parsed: &[ParsedRecord],
        emb: &CachedEmbedder<'_>,
        notes: &mut Vec<String>,
    ) -> Result<(Vec<LogOddsRow>, Vec<TavRow>)> {
        let mut log_odds = Vec::new();
        let mut tav = Vec::new();
        if !self.manifest.tasks.contains(&Task::Cognitive) {
            return Ok((log_odds, tav));
        }
        let base_key = Persona::base().key();
        for c in &self.manifest.chat {
            let responses: Vec<(Persona, &str)> = parsed
                .iter()
                .filter(|p| p.model_id == c.model && p.task == Task::Cognitive)
                .filter_map(|p| Some((Persona::from_key(&p.persona).ok()?, p.response.as_deref()?)))
                .collect();
            let base: Vec<String> = responses
                .iter()
                .filter(|(p, _)| p.key() == base_key)
                .map(|(_, r)| r.to_string())
                .collect();
            if base.is_empty() {
                notes.push(format!("{}: no base responses; log-odds and TAV skipped", c.model));
                continue;
            }
            let base_counts = TokenCounts::from_texts(base.iter().map(String::as_str), false);
            let base_vecs = emb.embed_checked(&base)?;
            for a in self.taxonomy.all_attributes() {
                let attr: Vec<String> = responses
                    .iter()
                    .filter(|(p, _)| p.slot(a.category) == a.value.as_deref())
                    .map(|(_, r)| r.to_string())
                    .collect();
                if attr.is_empty() {
                    notes.push(format!("{} {a}: no responses; log-odds and TAV skipped", c.model));
                    continue;
                }
                let counts = TokenCounts::from_texts(attr.iter().map(String::as_str), false);
                let prior = build_prior(&counts, &base_counts, PriorKind::Informative);
                let ranked = log_odds_dirichlet(&counts, &base_counts, &prior, self.manifest.alpha0)?;
                log_odds.extend(ranked.into_iter().take(self.manifest.top_k).enumerate().map(|(i, r)| LogOddsRow {
                    model: c.model.clone(),
                    attribute: a.clone(),
                    rank: i + 1,
                    token: r.token,
                    delta: r.delta,
                    z: r.z,
                }));
                let vecs = emb.embed_checked(&attr)?;
                let (ratio, note) = match tav_ratio(&vecs, &base_vecs, TavMode::Centroid) {
                    Ok(t) => (Some(t.ratio), String::new()),
                    Err(Error::DegenerateVariance(m)) => (None, m),
                    Err(e) => return Err(e),
                };
                tav.push(TavRow {
                    model: c.model.clone(),
                    attribute: a,
                    n_attribute: attr.len(),
                    n_base: base.len(),
                    ratio,
                    note,
                });
            }
        }
        Ok((log_odds, tav))
    }

    pub fn report(&self) -> Result<()> {
        let estimates = read_estimates(&self.path("analysis/estimates.csv"))?;
        let dir = self.path("report");
        if estimates.is_empty() {
            write_stamped(&dir.join("shift_tables.md"), &self.stamp, "No estimates were produced.\n")?;
        } else {
            emit_shift_tables(&estimates, &dir, &self.stamp)?;
        }
        let iso: Vec<AteEstimate> = estimates.iter().filter(|e| e.setting == Setting::Isolation).cloned().collect();
        let inter: Vec<AteEstimate> = estimates.iter().filter(|e| e.setting == Setting::Intersection).cloned().collect();
        let rows = emit_summary(&iso, &inter);
        let md = if rows.is_empty() {
            "The summary compares isolation and intersection estimates; this run has only one setting.\n".to_owned()
        } else {
            render_summary(&rows)
        };
        write_stamped(&dir.join("summary.md"), &self.stamp, &md)?;
        let flat: Vec<SummaryCsvRow> = rows
            .iter()
            .map(|r| SummaryCsvRow {
                model: r.model.clone(),
                family: r.family.as_str().to_owned(),
                category: r.category,
                row: if r.cell.is_some() { "cell" } else { "range" }.to_owned(),
                attribute: r.cell.as_ref().map(|(a, _)| a.to_string()).unwrap_or_default(),
                dimension: r.cell.as_ref().map(|(_, d)| d.to_string()).unwrap_or_default(),
                iso_low: r.iso_low,
                iso_high: r.iso_high,
                inter_low: r.inter_low,
                inter_high: r.inter_high,
                direction: r.direction.glyph().to_owned(),
            })
            .collect();
        write_csv(&dir.join("summary.csv"), &self.stamp, &flat)?;
        self.completion(None)
    }

    /// Writes `report/completion.md`: planned versus completed, failed and
    /// rejected items per model and task.
    pub fn completion(&self, aborted: Option<&str>) -> Result<()> {
        let plan = self.plan()?;
        let results = self.results().unwrap_or_default();
        let parsed = self.parsed().ok();
        let mut out = String::from("# Completion\n\n");
        if let Some(m) = aborted {
            let _ = writeln!(out, "Run aborted: {m}\n");
        }
        out.push_str("| model | task | planned | completed | failed | rejected | reject rate |\n|---|---|---:|---:|---:|---:|---:|\n");
        let mut reasons: BTreeMap<RejectKind, usize> = BTreeMap::new();
        let mut examples = Vec::new();
        for c in &self.manifest.chat {
            for t in &self.manifest.tasks {
                let items: Vec<&PlanItem> = plan.iter().filter(|i| i.task == *t).collect();
                let mut completed = 0;
                let mut failed = 0;
                for i in &items {
                    match results.get(&(c.model.clone(), i.record_id.clone(), i.persona.key(), *t)) {
                        Some(r) if r.error.is_none() => completed += 1,
                        _ => failed += 1,
                    }
                }
                let rejected = parsed.as_ref().map(|ps| {
                    let mine: Vec<&ParsedRecord> =
                        ps.iter().filter(|p| p.model_id == c.model && p.task == *t && p.reject.is_some()).collect();
                    for p in &mine {
                        let r = p.reject.as_ref().expect("filtered");
                        *reasons.entry(r.kind).or_default() += 1;
                        if examples.len() < 10 {
                            examples.push(format!("{} {} {} {}: {}", c.model, t, p.record_id, p.persona, r.message));
                        }
                    }
                    mine.len()
                });
                let (rej, rate) = match rejected {
                    Some(n) if !items.is_empty() => (n.to_string(), format!("{:.3}", n as f64 / items.len() as f64)),
                    _ => ("n/a".into(), "n/a".into()),
                };
                let _ = writeln!(out, "| {} | {t} | {} | {completed} | {failed} | {rej} | {rate} |", c.model, items.len());
            }
        }
        if !reasons.is_empty() {
            out.push_str("\nReject reasons:\n\n");
            for (k, n) in &reasons {
                let _ = writeln!(out, "- {}: {n}", k.as_str());
            }
            out.push_str("\nFirst rejects:\n\n");
            for e in &examples {
                let _ = writeln!(out, "- {}", e.replace('\n', " "));
            }
        }
        write_stamped(&self.path("report/completion.md"), &self.stamp, &out)
    }

    /// Fits the out-of-vocabulary regressor on the manifest's lexicon and
    /// embedding provider and saves it to `out`. Returns held-out metrics.
    pub fn train_oov(&self, out: &Path, config: &TrainConfig) -> Result<Vec<EmotionMetrics>> {
        let lexicon = Lexicon::load(&self.manifest.resolve(&self.manifest.lexicon))?;
        let (model, metrics) =
            self.with_embedder(|emb| train_oov(&lexicon, emb, config, self.manifest.seed))?;
        model.save(out)?;
        Ok(metrics)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<RunOutcome> {
        let sample = self.sample()?;
        let masked = self.mask()?;
        let personas = self.grid()?.len();
        let run = self.run_models()?;
        let score = self.score()?;
        let estimates = self.analyze()?;
        self.report()?;
        Ok(RunOutcome {
            sample,
            masked,
            personas,
            run,
            score,
            estimates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_inputs(dir: &Path) {
        let corpus = "id,text,label\n\
            r1,I felt angry when my neighbour blocked the driveway again this morning,anger\n\
            r2,I was so happy when my sister called to say she passed her exams,joy\n\
            r3,short one,fear\n";
        fs::write(dir.join("corpus.csv"), corpus).unwrap();
        fs::write(dir.join("lex.tsv"), "angry\tanger\t0.824\nhappy\tjoy\t0.7\n").unwrap();
    }

    const MANIFEST: &str = r#"
corpus = "corpus.csv"
lexicon = "lex.tsv"
cache_dir = "cache"
output_dir = "out"
seed = 3

[[chat]]
provider = "mock"
model = "mock-a"
"#;

    #[test]
    fn manifest_defaults_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let m = RunManifest::from_toml(MANIFEST, dir.path()).unwrap();
        assert_eq!(m.persona_mode, PersonaMode::Isolation);
        assert_eq!(m.tasks, Task::ALL.to_vec());
        assert_eq!(m.bootstrap_n, 2000);
        let other = RunManifest::from_toml(&MANIFEST.replace("seed = 3", "seed = 4"), dir.path()).unwrap();
        assert_ne!(m.digest(), other.digest());
        assert_eq!(m.digest(), RunManifest::from_toml(MANIFEST, dir.path()).unwrap().digest());
    }

    #[test]
    fn manifest_lists_every_problem() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("corpus.csv"), "id,text,label\n").unwrap();
        let text = MANIFEST.replace("seed = 3", "seed = 3\nparallelism = 0\nequivalence_margin = 0.0");
        match RunManifest::from_toml(&text, dir.path()) {
            Err(Error::Manifest(p)) => {
                assert_eq!(p.len(), 3, "{p:?}");
                assert!(p[0].contains("lexicon") && p[0].contains("lex.tsv"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            RunManifest::from_toml("corpus = 1", dir.path()),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn plan_arithmetic() {
        let recs: Vec<ExperienceRecord> = (0..3)
            .map(|i| ExperienceRecord::new(format!("r{i}"), "some words here", GoldLabel::Joy).unwrap())
            .collect();
        let personas = Taxonomy::default().isolation_personas();
        let plan = build_plan(&recs, &recs, &personas, &Task::ALL).unwrap();
        assert_eq!(plan.len(), 3 * 19 * 2);
        assert_eq!(plan[0].request.turns.len(), 1);
        assert!(build_plan(&recs, &recs[..2], &personas, &Task::ALL).is_err());
    }

    #[test]
    fn small_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let m = RunManifest::from_toml(&MANIFEST.replace("seed = 3", "seed = 3\nbootstrap_n = 200"), dir.path()).unwrap();
        let p = Pipeline::new(m).unwrap().with_retry(RetryPolicy::immediate());
        let o = p.run_all().unwrap();
        assert_eq!(o.sample.eligible, 2);
        assert_eq!(o.masked, 2);
        assert_eq!(o.run.planned, 2 * 19 * 2);
        assert_eq!(o.score.parsed, 76);
        let completion = fs::read_to_string(p.output_dir().join("report/completion.md")).unwrap();
        assert!(completion.starts_with(&p.stamp().line()));
        assert!(completion.contains("| mock-a | affective | 38 |"));
    }
}
