//! Treatment-effect estimation over persona outcomes.
//!
//! For an attribute `a`, the isolation effect compares the persona carrying
//! only `a` against the base persona on the same record. The intersection
//! effect compares `a` against `Base` for its category while holding every
//! combination of the other two categories fixed, weighting each
//! (record, combination) pair equally.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cognitive::EpitomeScore;
use crate::digest::fields_u64;
use crate::error::{Error, Result};
use crate::lexicon::{Emotion, EmotionVector};
use crate::persona::{Attribute, Category, Persona, Taxonomy};

/// One of the 11 outcome components: 8 emotion intensities, then ER, IP, EX.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Dimension {
    Emotion(Emotion),
    Er,
    Ip,
    Ex,
}

impl Dimension {
    pub const ALL: [Dimension; 11] = [
        Dimension::Emotion(Emotion::Anger),
        Dimension::Emotion(Emotion::Anticipation),
        Dimension::Emotion(Emotion::Disgust),
        Dimension::Emotion(Emotion::Fear),
        Dimension::Emotion(Emotion::Joy),
        Dimension::Emotion(Emotion::Sadness),
        Dimension::Emotion(Emotion::Surprise),
        Dimension::Emotion(Emotion::Trust),
        Dimension::Er,
        Dimension::Ip,
        Dimension::Ex,
    ];

    pub fn index(self) -> usize {
        match self {
            Dimension::Emotion(e) => e.index(),
            Dimension::Er => 8,
            Dimension::Ip => 9,
            Dimension::Ex => 10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Emotion(e) => e.as_str(),
            Dimension::Er => "er",
            Dimension::Ip => "ip",
            Dimension::Ex => "ex",
        }
    }

    pub fn is_affective(self) -> bool {
        matches!(self, Dimension::Emotion(_))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown dimension {s:?}")))
    }
}

impl TryFrom<String> for Dimension {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dimension> for String {
    fn from(d: Dimension) -> String {
        d.as_str().to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Isolation,
    Intersection,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Isolation => "isolation",
            Setting::Intersection => "intersection",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "isolation" => Ok(Setting::Isolation),
            "intersection" => Ok(Setting::Intersection),
            other => Err(Error::Argument(format!("unknown setting {other:?}"))),
        }
    }
}

/// Outcome of one (record, persona) cell; either half may be missing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Outcome {
    pub affect: Option<[f64; 8]>,
    pub epitome: Option<[f64; 3]>,
}

impl Outcome {
    pub fn get(&self, d: Dimension) -> Option<f64> {
        match d {
            Dimension::Emotion(e) => self.affect.map(|a| a[e.index()]),
            other => self.epitome.map(|x| x[other.index() - 8]),
        }
    }
}

/// Outcomes Y(record, persona) for one model.
#[derive(Debug, Clone, Default)]
pub struct OutcomeTable {
    pub model_id: String,
    cells: HashMap<(String, Persona), Outcome>,
    records: BTreeSet<String>,
    /// (record, persona, reason) for cells that could not be filled.
    pub missing: Vec<(String, Persona, String)>,
}

impl OutcomeTable {
    pub fn new(model_id: impl Into<String>) -> Self {
        OutcomeTable {
            model_id: model_id.into(),
            ..Default::default()
        }
    }

    fn cell(&mut self, record_id: &str, persona: &Persona) -> &mut Outcome {
        self.records.insert(record_id.to_owned());
        self.cells
            .entry((record_id.to_owned(), persona.clone()))
            .or_default()
    }

    pub fn set_affect(&mut self, record_id: &str, persona: &Persona, v: &EmotionVector) {
        self.cell(record_id, persona).affect = Some(*v.values());
    }

    pub fn set_epitome(&mut self, record_id: &str, persona: &Persona, s: &EpitomeScore) {
        self.cell(record_id, persona).epitome = Some(s.as_array());
    }

    /// Raw setter used by synthetic tables; values are not range-checked.
    pub fn set_raw(&mut self, record_id: &str, persona: &Persona, affect: Option<[f64; 8]>, epitome: Option<[f64; 3]>) {
        let c = self.cell(record_id, persona);
        c.affect = affect;
        c.epitome = epitome;
    }

    pub fn mark_missing(&mut self, record_id: &str, persona: &Persona, reason: impl Into<String>) {
        self.records.insert(record_id.to_owned());
        self.missing
            .push((record_id.to_owned(), persona.clone(), reason.into()));
    }

    pub fn get(&self, record_id: &str, persona: &Persona, d: Dimension) -> Option<f64> {
        self.cells
            .get(&(record_id.to_owned(), persona.clone()))
            .and_then(|c| c.get(d))
    }

    pub fn record_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub model_id: String,
    pub setting: Setting,
    pub attribute: Attribute,
    pub dimension: Dimension,
    pub mean_shift: f64,
    pub n: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// TOST p-value for |τ| < margin.
    pub equiv_p_value: f64,
    /// (record, combination) pairs dropped because a cell was missing.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub bootstrap_n: usize,
    pub seed: u64,
    pub equivalence_margin: f64,
    pub alpha: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            bootstrap_n: 2000,
            seed: 0,
            equivalence_margin: 0.005,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub mean: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn bootstrap_means(diffs: &[f64], bootstrap_n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    (0..bootstrap_n)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += diffs[rng.random_range(0..n)];
            }
            s / n as f64
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Two-sided paired-bootstrap test of mean ≠ 0 with a 95% percentile
/// interval. The p-value is twice the share of resampled means at or beyond
/// zero on the side opposite the observed mean; a zero mean gives 1.
pub fn significance(paired_diffs: &[f64], bootstrap_n: usize, seed: u64) -> Result<Significance> {
    if paired_diffs.len() < 2 {
        return Err(Error::Argument(format!(
            "significance needs at least 2 differences, got {}",
            paired_diffs.len()
        )));
    }
    if bootstrap_n == 0 {
        return Err(Error::Argument("bootstrap_n must be positive".into()));
    }
    let m = mean(paired_diffs);
    let mut means = bootstrap_means(paired_diffs, bootstrap_n, seed);
    let opposite = if m > 0.0 {
        means.iter().filter(|x| **x <= 0.0).count()
    } else if m < 0.0 {
        means.iter().filter(|x| **x >= 0.0).count()
    } else {
        bootstrap_n
    };
    let p_value = (2.0 * opposite as f64 / bootstrap_n as f64).min(1.0);
    means.sort_by(f64::total_cmp);
    Ok(Significance {
        mean: m,
        p_value,
        ci_low: quantile(&means, 0.025).min(m),
        ci_high: quantile(&means, 0.975).max(m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub equivalent: bool,
    pub p_value: f64,
}

/// Two one-sided bootstrap tests that the mean lies inside (−margin, margin).
/// The reported p-value is the larger one-sided value.
pub fn equivalence_to_base(paired_diffs: &[f64], margin: f64, bootstrap_n: usize, seed: u64) -> Result<Equivalence> {
    if !(margin > 0.0) {
        return Err(Error::Argument(format!("margin must be positive, got {margin}")));
    }
    if paired_diffs.len() < 2 {
        return Err(Error::Argument("equivalence needs at least 2 differences".into()));
    }
    if bootstrap_n == 0 {
        return Err(Error::Argument("bootstrap_n must be positive".into()));
    }
    let means = bootstrap_means(paired_diffs, bootstrap_n, seed);
    let b = bootstrap_n as f64;
    let p_low = means.iter().filter(|x| **x <= -margin).count() as f64 / b;
    let p_up = means.iter().filter(|x| **x >= margin).count() as f64 / b;
    let p_value = p_low.max(p_up);
    Ok(Equivalence {
        equivalent: p_value < 0.05,
        p_value,
    })
}

fn estimate_seed(cfg: &StatsConfig, model: &str, setting: Setting, attribute: &Attribute, d: Dimension, salt: &str) -> u64 {
    let seed = cfg.seed.to_le_bytes();
    let attr = attribute.to_string();
    fields_u64([
        seed.as_slice(),
        model.as_bytes(),
        setting.as_str().as_bytes(),
        attr.as_bytes(),
        d.as_str().as_bytes(),
        salt.as_bytes(),
    ])
}

/// Builds an estimate from paired differences, applying the n = 1 convention
/// (p = 1, degenerate interval).
fn summarize(
    table: &OutcomeTable,
    setting: Setting,
    attribute: &Attribute,
    dimension: Dimension,
    diffs: &[f64],
    skipped: usize,
    cfg: &StatsConfig,
) -> Result<AteEstimate> {
    let m = mean(diffs);
    let (p_value, ci_low, ci_high, equiv_p_value) = if diffs.len() < 2 {
        (1.0, m, m, 1.0)
    } else {
        let sig = significance(
            diffs,
            cfg.bootstrap_n,
            estimate_seed(cfg, &table.model_id, setting, attribute, dimension, "sig"),
        )?;
        let eq = equivalence_to_base(
            diffs,
            cfg.equivalence_margin,
            cfg.bootstrap_n,
            estimate_seed(cfg, &table.model_id, setting, attribute, dimension, "equiv"),
        )?;
        (sig.p_value, sig.ci_low, sig.ci_high, eq.p_value)
    };
    Ok(AteEstimate {
        model_id: table.model_id.clone(),
        setting,
        attribute: attribute.clone(),
        dimension,
        mean_shift: m,
        n: diffs.len(),
        ci_low,
        ci_high,
        p_value,
        equiv_p_value,
        skipped,
    })
}

/// Paired differences Y(with) − Y(without) over records and contexts.
fn paired(table: &OutcomeTable, pairs: &[(Persona, Persona)], d: Dimension) -> (Vec<f64>, usize, Vec<String>) {
    let mut diffs = Vec::new();
    let mut skipped = 0;
    let mut missing = Vec::new();
    for r in table.record_ids() {
        for (with, without) in pairs {
            match (table.get(r, with, d), table.get(r, without, d)) {
                (Some(a), Some(b)) => diffs.push(a - b),
                (a, b) => {
                    skipped += 1;
                    if missing.len() < 5 {
                        if a.is_none() {
                            missing.push(format!("({r}, {with})"));
                        }
                        if b.is_none() {
                            missing.push(format!("({r}, {without})"));
                        }
                    }
                }
            }
        }
    }
    (diffs, skipped, missing)
}

fn estimate_all(
    table: &OutcomeTable,
    setting: Setting,
    attribute: &Attribute,
    pairs: &[(Persona, Persona)],
    cfg: &StatsConfig,
) -> Result<Vec<AteEstimate>> {
    if attribute.is_base() {
        return Err(Error::Argument("cannot estimate the effect of Base".into()));
    }
    let mut out = Vec::new();
    let mut missing_cells = Vec::new();
    for d in Dimension::ALL {
        let (diffs, skipped, missing) = paired(table, pairs, d);
        if diffs.is_empty() {
            missing_cells.extend(missing);
            continue;
        }
        out.push(summarize(table, setting, attribute, d, &diffs, skipped, cfg)?);
    }
    if out.is_empty() {
        missing_cells.sort();
        missing_cells.dedup();
        return Err(Error::Estimation(format!(
            "no complete pairs for {attribute} ({setting}); missing cells include {}",
            missing_cells.join(", ")
        )));
    }
    Ok(out)
}

/// τ(a) = mean over records of Y(a only) − Y(base), per dimension.
/// Dimensions without any complete pair are omitted.
pub fn ate_isolation(table: &OutcomeTable, attribute: &Attribute, cfg: &StatsConfig) -> Result<Vec<AteEstimate>> {
    let with = Persona::base().with(attribute);
    estimate_all(table, Setting::Isolation, attribute, &[(with, Persona::base())], cfg)
}

/// Marginal effect of `attribute` over every combination of the other two
/// categories (their `Base` included), one paired difference per
/// (record, combination).
pub fn ate_intersection(
    table: &OutcomeTable,
    attribute: &Attribute,
    taxonomy: &Taxonomy,
    cfg: &StatsConfig,
) -> Result<Vec<AteEstimate>> {
    let pairs: Vec<(Persona, Persona)> = taxonomy
        .contexts(attribute.category)
        .into_iter()
        .map(|k| (k.with(attribute), k))
        .collect();
    estimate_all(table, Setting::Intersection, attribute, &pairs, cfg)
}

/// Per dimension, the attribute with the largest |τ| among estimates with
/// p < 0.05, or `None` when nothing is significant. Ties keep the first.
pub fn least_aligned(estimates: &[AteEstimate]) -> BTreeMap<Dimension, Option<Attribute>> {
    let mut best: BTreeMap<Dimension, Option<&AteEstimate>> = BTreeMap::new();
    for e in estimates {
        let slot = best.entry(e.dimension).or_insert(None);
        if e.p_value < 0.05 && slot.is_none_or(|b| e.mean_shift.abs() > b.mean_shift.abs()) {
            *slot = Some(e);
        }
    }
    best.into_iter()
        .map(|(d, e)| (d, e.map(|e| e.attribute.clone())))
        .collect()
}

/// Real-world affective scores per culture.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineTable {
    pub rows: BTreeMap<String, [f64; 8]>,
}

const DEFAULT_BASELINE: &str = include_str!("../data/baseline_cultures.csv");

#[derive(Deserialize)]
struct BaselineRow {
    culture: String,
    anger: f64,
    anticipation: f64,
    disgust: f64,
    fear: f64,
    joy: f64,
    sadness: f64,
    surprise: f64,
    trust: f64,
}

impl BaselineTable {
    /// The bundled survey-derived table for the eight default cultures.
    pub fn bundled() -> Self {
        BaselineTable::parse(DEFAULT_BASELINE, Path::new("<bundled>")).expect("bundled baseline parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BaselineTable::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows = BTreeMap::new();
        for row in reader.deserialize::<BaselineRow>() {
            let r = row.map_err(|e| {
                Error::parse(origin, e.position().map_or(0, |p| p.line() as usize), e.to_string())
            })?;
            let v = [r.anger, r.anticipation, r.disgust, r.fear, r.joy, r.sadness, r.surprise, r.trust];
            if rows.insert(r.culture.clone(), v).is_some() {
                return Err(Error::Validation(format!("duplicate baseline culture {:?}", r.culture)));
            }
        }
        Ok(BaselineTable { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub emotion: Emotion,
    /// Spearman correlation; `None` when either side has no rank variation.
    pub rho: Option<f64>,
    pub cultures: usize,
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

/// Rank agreement between culture shifts and the real-world table, per
/// emotion. Emotions whose baseline column is all zero are skipped.
pub fn baseline_alignment(culture_estimates: &[AteEstimate], baseline: &BaselineTable) -> Result<Vec<Alignment>> {
    let mut out = Vec::new();
    for e in Emotion::ALL {
        if baseline.rows.values().all(|v| v[e.index()] == 0.0) {
            continue;
        }
        let mut shifts: BTreeMap<&str, f64> = BTreeMap::new();
        for est in culture_estimates {
            if est.attribute.category == Category::Culture && est.dimension == Dimension::Emotion(e) {
                if let Some(c) = est.attribute.value.as_deref() {
                    shifts.insert(c, est.mean_shift);
                }
            }
        }
        let shared: Vec<(&str, f64, f64)> = shifts
            .iter()
            .filter_map(|(c, s)| baseline.rows.get(*c).map(|b| (*c, *s, b[e.index()])))
            .collect();
        if shared.len() < 3 {
            return Err(Error::Argument(format!(
                "{e}: only {} cultures shared with the baseline, need 3",
                shared.len()
            )));
        }
        let x: Vec<f64> = shared.iter().map(|s| s.1).collect();
        let y: Vec<f64> = shared.iter().map(|s| s.2).collect();
        out.push(Alignment {
            emotion: e,
            rho: spearman(&x, &y),
            cultures: shared.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> StatsConfig {
        StatsConfig {
            bootstrap_n: 500,
            ..StatsConfig::default()
        }
    }

    fn y(v: f64) -> Option<[f64; 8]> {
        Some([v; 8])
    }

    #[test]
    fn isolation_hand_example() {
        let attr = Attribute::new(Category::Gender, "female");
        let p = Persona::base().with(&attr);
        let mut t = OutcomeTable::new("m");
        for (r, (a, b)) in [("r1", (0.5, 0.2)), ("r2", (0.1, 0.1)), ("r3", (0.9, 0.3))] {
            t.set_raw(r, &p, y(a), Some([2.0, 1.0, 0.0]));
            t.set_raw(r, &Persona::base(), y(b), Some([1.0, 1.0, 1.0]));
        }
        let est = ate_isolation(&t, &attr, &cfg()).unwrap();
        assert_eq!(est.len(), 11);
        let anger = &est[0];
        assert!((anger.mean_shift - (0.3 + 0.0 + 0.6) / 3.0).abs() < 1e-12);
        assert_eq!(anger.n, 3);
        assert!(anger.ci_low <= anger.mean_shift && anger.mean_shift <= anger.ci_high);
        assert_eq!(est[8].mean_shift, 1.0);
        assert_eq!(est[10].mean_shift, -1.0);
    }

    #[test]
    fn null_effect_and_missing_cells() {
        let attr = Attribute::new(Category::Culture, "Confucian");
        let p = Persona::base().with(&attr);
        let mut t = OutcomeTable::new("m");
        for r in ["a", "b", "c"] {
            t.set_raw(r, &p, y(0.4), None);
            t.set_raw(r, &Persona::base(), y(0.4), None);
        }
        t.set_raw("d", &p, y(0.9), None);
        let est = ate_isolation(&t, &attr, &cfg()).unwrap();
        assert_eq!(est.len(), 8);
        assert!(est.iter().all(|e| e.mean_shift == 0.0 && e.p_value == 1.0 && e.skipped == 1));
        let other = Attribute::new(Category::Culture, "Latin America");
        match ate_isolation(&t, &other, &cfg()) {
            Err(Error::Estimation(m)) => assert!(m.contains("Latin America")),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn single_pair_gets_degenerate_stats() {
        let attr = Attribute::new(Category::Age, "55+");
        let mut t = OutcomeTable::new("m");
        t.set_raw("r", &Persona::base().with(&attr), y(0.7), None);
        t.set_raw("r", &Persona::base(), y(0.2), None);
        let e = &ate_isolation(&t, &attr, &cfg()).unwrap()[0];
        assert_eq!((e.n, e.p_value, e.ci_low, e.ci_high), (1, 1.0, e.mean_shift, e.mean_shift));
    }

    fn small_taxonomy() -> Taxonomy {
        Taxonomy::new(
            vec!["young".into(), "old".into()],
            vec!["north".into(), "south".into()],
            vec!["m".into(), "f".into()],
        )
        .unwrap()
    }

    #[test]
    fn intersection_hand_example() {
        // two records, contexts restricted by leaving other cells missing
        let tax = small_taxonomy();
        let attr = Attribute::new(Category::Gender, "f");
        let mut t = OutcomeTable::new("m");
        let k1 = Persona::base();
        let k2 = Persona::new(Some("young"), None, Some("north"));
        let vals = [("r1", k1.clone(), 0.5, 0.1), ("r1", k2.clone(), 0.3, 0.3), ("r2", k1, 0.2, 0.4), ("r2", k2, 0.9, 0.1)];
        for (r, k, with, without) in vals {
            t.set_raw(r, &k.with(&attr), y(with), None);
            t.set_raw(r, &k, y(without), None);
        }
        let e = &ate_intersection(&t, &attr, &tax, &cfg()).unwrap()[0];
        let expect = (0.4 + 0.0 - 0.2 + 0.8) / 4.0;
        assert!((e.mean_shift - expect).abs() < 1e-12);
        assert_eq!(e.n, 4);
        assert_eq!(e.skipped, 2 * 9 - 4);
    }

    #[test]
    fn intersection_degenerates_to_isolation() {
        let tax = small_taxonomy();
        let attr = Attribute::new(Category::Culture, "south");
        let mut t = OutcomeTable::new("m");
        for (i, r) in ["a", "b", "c", "d"].iter().enumerate() {
            t.set_raw(r, &Persona::base().with(&attr), y(0.1 * i as f64), Some([1.0, 2.0, 0.0]));
            t.set_raw(r, &Persona::base(), y(0.05), Some([0.0, 2.0, 1.0]));
        }
        let iso = ate_isolation(&t, &attr, &cfg()).unwrap();
        let int = ate_intersection(&t, &attr, &tax, &cfg()).unwrap();
        for (a, b) in iso.iter().zip(&int) {
            assert_eq!(a.mean_shift, b.mean_shift);
            assert_eq!(a.n, b.n);
        }
    }

    #[test]
    fn negation_negates_shift() {
        let attr = Attribute::new(Category::Gender, "male");
        let p = Persona::base().with(&attr);
        let mut t = OutcomeTable::new("m");
        let mut neg = OutcomeTable::new("m");
        for (r, a, b) in [("x", 0.9, 0.2), ("y", 0.3, 0.6), ("z", 0.5, 0.1)] {
            t.set_raw(r, &p, y(a), None);
            t.set_raw(r, &Persona::base(), y(b), None);
            neg.set_raw(r, &p, y(b), None);
            neg.set_raw(r, &Persona::base(), y(a), None);
        }
        let e1 = ate_isolation(&t, &attr, &cfg()).unwrap();
        let e2 = ate_isolation(&neg, &attr, &cfg()).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a.mean_shift + b.mean_shift).abs() < 1e-15);
        }
    }

    #[test]
    fn significance_cases() {
        let zero = significance(&[0.0; 10], 1000, 1).unwrap();
        assert_eq!(zero.p_value, 1.0);
        let ones = significance(&[1.0; 50], 1000, 1).unwrap();
        assert!(ones.p_value < 0.001);
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(significance(&alt, 2000, 3).unwrap().p_value > 0.5);
        assert!(significance(&[1.0], 100, 0).is_err());
        let a = significance(&[0.1, -0.3, 0.5, 0.2], 1000, 42).unwrap();
        assert_eq!(a, significance(&[0.1, -0.3, 0.5, 0.2], 1000, 42).unwrap());
        assert!(a.ci_low <= a.mean && a.mean <= a.ci_high);
    }

    #[test]
    fn bootstrap_converges() {
        let diffs = [0.3, -0.2, 0.5, 0.1, -0.4, 0.6, 0.2, -0.1, 0.35, -0.3, 0.05, 0.15];
        let p1 = significance(&diffs, 100_000, 11).unwrap().p_value;
        let p2 = significance(&diffs, 200_000, 11).unwrap().p_value;
        assert!((p1 - p2).abs() < 0.01, "{p1} vs {p2}");
    }

    /// Exact one-sided tail over all n^n ordered resamples.
    fn exact_tail(diffs: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
        let n = diffs.len();
        let total = n.pow(n as u32);
        let mut hits = 0usize;
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let m = idx.iter().map(|&i| diffs[i]).sum::<f64>() / n as f64;
            if pred(m) {
                hits += 1;
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn equivalence_cases() {
        assert!(equivalence_to_base(&[0.0; 8], 0.01, 500, 0).unwrap().equivalent);
        assert!(!equivalence_to_base(&[0.5; 8], 0.01, 500, 0).unwrap().equivalent);
        assert!(equivalence_to_base(&[0.0; 8], 0.0, 500, 0).is_err());
        let diffs = [0.004, -0.006, 0.002, 0.009, -0.003, 0.001];
        let margin = 0.005;
        let exact = exact_tail(&diffs, |m| m <= -margin).max(exact_tail(&diffs, |m| m >= margin));
        let boot = equivalence_to_base(&diffs, margin, 200_000, 5).unwrap();
        assert!((boot.p_value - exact).abs() < 0.01, "{} vs {exact}", boot.p_value);
        assert_eq!(boot.equivalent, exact < 0.05);
    }

    fn est(attr: &str, d: Dimension, m: f64, p: f64) -> AteEstimate {
        AteEstimate {
            model_id: "m".into(),
            setting: Setting::Isolation,
            attribute: attr.parse().unwrap(),
            dimension: d,
            mean_shift: m,
            n: 10,
            ci_low: m,
            ci_high: m,
            p_value: p,
            equiv_p_value: 1.0,
            skipped: 0,
        }
    }

    #[test]
    fn least_aligned_rules() {
        let anger = Dimension::Emotion(Emotion::Anger);
        let joy = Dimension::Emotion(Emotion::Joy);
        let es = vec![
            est("culture=Confucian", anger, -0.04, 0.01),
            est("gender=male", anger, 0.02, 0.01),
            est("age=55+", anger, 0.09, 0.2),
            est("gender=male", joy, 0.5, 0.3),
            est("gender=female", Dimension::Er, 0.1, 0.04),
        ];
        let la = least_aligned(&es);
        assert_eq!(la[&anger], Some("culture=Confucian".parse().unwrap()));
        assert_eq!(la[&joy], None);
        assert_eq!(la[&Dimension::Er], Some("gender=female".parse().unwrap()));
        let relabeled: Vec<AteEstimate> = es
            .iter()
            .map(|e| AteEstimate { model_id: "other".into(), n: 3, skipped: 9, ..e.clone() })
            .collect();
        assert_eq!(least_aligned(&relabeled), la);
    }

    #[test]
    fn ranks_and_spearman() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    }

    #[test]
    fn bundled_baseline() {
        let b = BaselineTable::bundled();
        assert_eq!(b.rows.len(), 8);
        let (top, _) = b
            .rows
            .iter()
            .max_by(|a, b| a.1[0].total_cmp(&b.1[0]))
            .unwrap();
        assert_eq!(top, "African-Islamic");
        assert_eq!(b.rows["African-Islamic"][0], 0.023);
        assert!(b.rows.values().all(|v| v[2] == 0.0 && v[6] == 0.0));
    }

    #[test]
    fn alignment_perfect_and_reversed() {
        let b = BaselineTable::bundled();
        let cultures: Vec<&String> = b.rows.keys().collect();
        let make = |sign: f64| -> Vec<AteEstimate> {
            cultures
                .iter()
                .flat_map(|c| {
                    let row = b.rows[*c];
                    Emotion::ALL.into_iter().map(move |e| {
                        est(&format!("culture={c}"), Dimension::Emotion(e), sign * row[e.index()], 0.01)
                    })
                })
                .collect()
        };
        let pos = baseline_alignment(&make(1.0), &b).unwrap();
        assert_eq!(pos.len(), 6);
        assert!(pos.iter().all(|a| (a.rho.unwrap() - 1.0).abs() < 1e-12));
        let neg = baseline_alignment(&make(-1.0), &b).unwrap();
        assert!(neg.iter().all(|a| (a.rho.unwrap() + 1.0).abs() < 1e-12));
        let few: Vec<AteEstimate> = make(1.0).into_iter().take(16).collect();
        assert!(matches!(baseline_alignment(&few, &b), Err(Error::Argument(_))));
    }
}
