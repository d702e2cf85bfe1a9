//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 3 7`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use empathy_core::affect::{emd, rouge_l_f1};
use empathy_core::causal::{ate_intersection, ate_isolation, significance, OutcomeTable, StatsConfig};
use empathy_core::gateway::{read_results, RetryPolicy, Task};
use empathy_core::lexicon::{fit, regression_metrics, split_indices, TrainConfig};
use empathy_core::lexstats::{build_prior, log_odds_dirichlet, tav_ratio, PriorKind, TavMode, TokenCounts};
use empathy_core::persona::build_grid;
use empathy_core::pipeline::{build_plan, Pipeline, RunManifest};
use empathy_core::report::{
    bundled_fixture, compare_cells, emit_shift_tables, emit_summary, from_csv, render_summary, ShiftRecord, Stamp,
};
use empathy_core::{
    AteEstimate, Attribute, Category, Dimension, Emotion, EmotionVector, ExperienceRecord, GoldLabel, Lexicon,
    Persona, Setting, Taxonomy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn records(n: usize) -> Vec<ExperienceRecord> {
    (0..n)
        .map(|i| ExperienceRecord::new(format!("r{i}"), format!("record number {i} has a few words"), GoldLabel::Joy).unwrap())
        .collect()
}

// 1

fn grid_cardinality() -> Outcome {
    let grid = build_grid();
    let unique: BTreeSet<String> = grid.iter().map(Persona::key).collect();
    ensure(grid.len() == 315 && unique.len() == 315, format!("grid has {} personas, {} unique", grid.len(), unique.len()))?;
    let t = Taxonomy::default();
    let sizes: Vec<usize> = [Category::Age, Category::Culture, Category::Gender]
        .iter()
        .map(|c| t.attributes(*c).len())
        .collect();
    ensure(sizes == [6, 8, 4], format!("age/culture/gender isolation sets {sizes:?}"))?;
    let iso = t.isolation_personas();
    ensure(
        iso.len() == 19 && iso.iter().skip(1).all(|p| p.non_base_count() == 1),
        format!("isolation personas {}", iso.len()),
    )?;
    let recs = records(300);
    let plan = build_plan(&recs, &recs, &grid, &Task::ALL).map_err(|e| e.to_string())?;
    let per_task: Vec<usize> = Task::ALL.iter().map(|t| plan.iter().filter(|i| i.task == *t).count()).collect();
    ensure(per_task == [94_500, 94_500], format!("plan per task {per_task:?}"))?;
    Ok(format!("315 personas, sets 6/4/8, {} items per task", per_task[0]))
}

// 2

fn lexicon_fidelity() -> Outcome {
    let lex = Lexicon::load(&data("nrc_sample.tsv")).map_err(|e| e.to_string())?;
    let expect: [(&str, [f64; 8]); 2] = [
        ("angry", [0.824, 0.0, 0.469, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ("ashamed", [0.0, 0.0, 0.438, 0.0, 0.0, 0.719, 0.0, 0.0]),
    ];
    for (w, v) in expect {
        let got = lex.get(w).ok_or(format!("{w} missing"))?;
        let bits = |a: &[f64; 8]| a.map(f64::to_bits);
        ensure(bits(got.values()) == bits(&v), format!("{w} -> {:?}", got.values()))?;
    }
    Ok("angry and ashamed bit-identical".into())
}

// 3

/// Outcome of one persona for one record, kept outside the table under test.
type Truth = HashMap<(String, String), ([f64; 8], [f64; 3])>;

fn random_taxonomy(rng: &mut ChaCha8Rng, id: usize) -> Taxonomy {
    let mut values = |prefix: &str| -> Vec<String> {
        (0..rng.random_range(1..=3)).map(|i| format!("{prefix}{id}v{i}")).collect()
    };
    let age = values("a");
    let culture = values("c");
    let gender = values("g");
    Taxonomy::new(age, culture, gender).unwrap()
}

fn slots(values: &[String]) -> Vec<Option<String>> {
    values.iter().cloned().map(Some).chain([None]).collect()
}

fn brute_force(t: &Taxonomy, truth: &Truth, recs: &[String], attr: &Attribute, setting: Setting, d: Dimension) -> (f64, usize) {
    let value = |o: &([f64; 8], [f64; 3])| match d {
        Dimension::Emotion(e) => o.0[e.index()],
        Dimension::Er => o.1[0],
        Dimension::Ip => o.1[1],
        Dimension::Ex => o.1[2],
    };
    let mut sum = 0.0;
    let mut n = 0;
    for r in recs {
        for age in slots(t.values(Category::Age)) {
            for culture in slots(t.values(Category::Culture)) {
                for gender in slots(t.values(Category::Gender)) {
                    let treated = [age.clone(), culture.clone(), gender.clone()];
                    let k = match attr.category {
                        Category::Age => 0,
                        Category::Culture => 1,
                        Category::Gender => 2,
                    };
                    if treated[k] != attr.value {
                        continue;
                    }
                    if setting == Setting::Isolation && treated.iter().enumerate().any(|(i, s)| i != k && s.is_some()) {
                        continue;
                    }
                    let mut control = treated.clone();
                    control[k] = None;
                    let key = |s: &[Option<String>; 3]| {
                        Persona::new(s[0].as_deref(), s[2].as_deref(), s[1].as_deref()).key()
                    };
                    if let (Some(a), Some(b)) =
                        (truth.get(&(r.clone(), key(&treated))), truth.get(&(r.clone(), key(&control))))
                    {
                        sum += value(a) - value(b);
                        n += 1;
                    }
                }
            }
        }
    }
    (if n == 0 { f64::NAN } else { sum / n as f64 }, n)
}

fn ate_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = StatsConfig {
        bootstrap_n: 20,
        ..StatsConfig::default()
    };
    let mut compared = 0;
    for case in 0..200 {
        let t = random_taxonomy(&mut rng, case);
        let n_rec = rng.random_range(1..=10);
        let recs: Vec<String> = (0..n_rec).map(|i| format!("rec{i}")).collect();
        let drop_rate = if case % 4 == 0 { 0.2 } else { 0.0 };
        let mut table = OutcomeTable::new("m");
        let mut truth = Truth::new();
        for r in &recs {
            for p in t.build_grid() {
                if rng.random_bool(drop_rate) {
                    continue;
                }
                let a: [f64; 8] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
                let e: [f64; 3] = std::array::from_fn(|_| rng.random_range(0..=2) as f64);
                table.set_raw(r, &p, Some(a), Some(e));
                truth.insert((r.clone(), p.key()), (a, e));
            }
        }
        for attr in t.all_attributes() {
            for setting in [Setting::Isolation, Setting::Intersection] {
                let got = match setting {
                    Setting::Isolation => ate_isolation(&table, &attr, &cfg),
                    Setting::Intersection => ate_intersection(&table, &attr, &t, &cfg),
                };
                let got: Vec<AteEstimate> = got.unwrap_or_default();
                for d in Dimension::ALL {
                    let (want, n) = brute_force(&t, &truth, &recs, &attr, setting, d);
                    let est = got.iter().find(|e| e.dimension == d);
                    match est {
                        None => ensure(n == 0, format!("case {case} {attr} {setting} {d}: missing estimate, oracle n={n}"))?,
                        Some(e) => {
                            ensure(
                                e.n == n && (e.mean_shift - want).abs() <= 1e-9,
                                format!("case {case} {attr} {setting} {d}: got {} (n={}), oracle {want} (n={n})", e.mean_shift, e.n),
                            )?;
                            compared += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("200 tables, {compared} estimates within 1e-9"))
}

// 4

fn fixture_marks() -> Outcome {
    let (estimates, marks) = bundled_fixture();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_shift_tables(&estimates, dir.path(), &Stamp::new("fixture", 0)).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(dir.path().join("shift_tables.csv")).map_err(|e| e.to_string())?;
    let emitted: Vec<ShiftRecord> = from_csv(&text, Path::new("shift_tables.csv")).map_err(|e| e.to_string())?;

    type Col = (String, Setting, Category, Dimension);
    let mut want: BTreeMap<Col, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for ((model, setting, attr, d), mark) in &marks {
        let slot = want.entry((model.clone(), *setting, attr.category, *d)).or_default();
        if mark.contains('H') {
            slot.0.insert(attr.label().to_owned());
        }
        if mark.contains('L') {
            slot.1.insert(attr.label().to_owned());
        }
    }
    let mut got: BTreeMap<Col, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for r in &emitted {
        let slot = got.entry((r.model.clone(), r.setting, r.category, r.dimension)).or_default();
        if r.mark.contains('H') {
            slot.0.insert(r.attribute.clone());
        }
        if r.mark.contains('L') {
            slot.1.insert(r.attribute.clone());
        }
    }
    let total = want.len();
    let mut strict = 0;
    let mut contained = 0;
    let mut mismatches = Vec::new();
    for (col, (eh, el)) in &want {
        let (h, l) = got.get(col).cloned().unwrap_or_default();
        if &h == eh && &l == el {
            strict += 1;
        } else if mismatches.len() < 3 {
            mismatches.push(format!("{} {} {} {}: H{h:?} L{l:?} vs H{eh:?} L{el:?}", col.0, col.1, col.2, col.3));
        }
        let covers = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.is_subset(b) && (!a.is_empty() || b.is_empty());
        if covers(&h, eh) && covers(&l, el) {
            contained += 1;
        }
    }

    // named examples
    let confucian = emitted
        .iter()
        .find(|r| {
            r.model == "Llama-3-70B"
                && r.setting == Setting::Isolation
                && r.attribute == "Confucian"
                && r.dimension == Dimension::Emotion(Emotion::Anger)
        })
        .ok_or("Confucian anger cell missing")?;
    ensure(confucian.mark == "L", format!("Confucian anger marked {:?}", confucian.mark))?;
    let (iso, inter): (Vec<AteEstimate>, Vec<AteEstimate>) =
        estimates.into_iter().partition(|e| e.setting == Setting::Isolation);
    let rows = emit_summary(&iso, &inter);
    let row = rows
        .iter()
        .find(|r| {
            r.model == "Llama-3-70B"
                && r.cell.as_ref().is_some_and(|(a, d)| a.label() == "Confucian" && *d == Dimension::Emotion(Emotion::Anger))
        })
        .ok_or("summary has no Confucian anger row")?;
    ensure(
        (row.iso_low, row.inter_low) == (-0.035, -0.041) && row.direction.glyph() == "↓",
        format!("Confucian summary {} -> {} {}", row.iso_low, row.inter_low, row.direction.glyph()),
    )?;
    ensure(compare_cells(-0.035, -0.041).glyph() == "↓", "compare_cells(-0.035, -0.041)")?;
    ensure(render_summary(&rows).contains("↓"), "rendered summary lacks ↓")?;

    let rate = strict as f64 / total as f64;
    let detail = format!(
        "{strict}/{total} columns ({:.1}%) match exactly, {contained}/{total} ({:.1}%) by containment; Confucian -0.035 -> -0.041 ↓",
        100.0 * rate,
        100.0 * contained as f64 / total as f64
    );
    if rate >= 0.95 {
        Ok(detail)
    } else {
        Err(format!("{detail}; first mismatches: {}", mismatches.join("; ")))
    }
}

// 5

/// Min-cost transport between two unit-mass histograms by successive
/// shortest paths on the residual graph.
fn transport(supply: &[f64; 8], demand: &[f64; 8], cost: &[[f64; 8]; 8]) -> f64 {
    let n = 8;
    // nodes: 0 source, 1..=8 supply, 9..=16 demand, 17 sink
    let (src, sink, nodes) = (0, 2 * n + 1, 2 * n + 2);
    let mut cap = vec![vec![0.0f64; nodes]; nodes];
    let mut w = vec![vec![0.0f64; nodes]; nodes];
    for i in 0..n {
        cap[src][1 + i] = supply[i];
        cap[1 + n + i][sink] = demand[i];
        for j in 0..n {
            cap[1 + i][1 + n + j] = f64::INFINITY;
            w[1 + i][1 + n + j] = cost[i][j];
            w[1 + n + j][1 + i] = -cost[i][j];
        }
    }
    let mut total_cost = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for v in 0..nodes {
                    if cap[u][v] > 1e-15 && dist[u] + w[u][v] < dist[v] - 1e-15 {
                        dist[v] = dist[u] + w[u][v];
                        prev[v] = u;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            return total_cost;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != src {
            push = push.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = sink;
        while v != src {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total_cost += push * dist[sink];
    }
}

fn unit(v: &[f64; 8]) -> [f64; 8] {
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        [0.125; 8]
    } else {
        v.map(|x| x / s)
    }
}

fn random_vector(rng: &mut ChaCha8Rng) -> EmotionVector {
    if rng.random_ratio(1, 50) {
        return EmotionVector::zero();
    }
    EmotionVector::new(std::array::from_fn(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })).unwrap()
}

fn emd_properties() -> Outcome {
    let cost: [[f64; 8]; 8] = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 0.0 } else { 1.0 }));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (random_vector(&mut rng), random_vector(&mut rng));
        let oracle = transport(&unit(a.values()), &unit(b.values()), &cost);
        let got = emd(&a, &b).distance;
        worst = worst.max((got - oracle).abs());
        ensure((got - oracle).abs() <= 1e-9, format!("emd {got} vs transport {oracle} for {a:?} {b:?}"))?;
    }
    for _ in 0..1000 {
        let (a, b, c) = (random_vector(&mut rng), random_vector(&mut rng), random_vector(&mut rng));
        let d = |x: &EmotionVector, y: &EmotionVector| emd(x, y).distance;
        ensure(d(&a, &b) == d(&b, &a), "symmetry")?;
        ensure(d(&a, &a) == 0.0, "identity")?;
        ensure(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12, "triangle inequality")?;
    }
    Ok(format!("max deviation from transport oracle {worst:.1e}; axioms hold on 1000 triples"))
}

// 6

fn log_odds_correctness() -> Outcome {
    let a = TokenCounts::from_pairs([("x", 2), ("y", 1)]);
    let b = TokenCounts::from_pairs([("y", 2), ("z", 1)]);
    let prior: BTreeMap<String, f64> = [("x", 1.0), ("y", 2.0), ("z", 1.0)].into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    let got = log_odds_dirichlet(&a, &b, &prior, 4.0).map_err(|e| e.to_string())?;
    // alphas 1, 2, 1 with alpha0 = 4 and three tokens per corpus
    let want = [
        ("x", (9.0f64 / 2.0).ln(), (4.0f64 / 3.0).sqrt()),
        ("y", (9.0f64 / 16.0).ln(), (7.0f64 / 12.0).sqrt()),
        ("z", (5.0f64 / 12.0).ln(), (3.0f64 / 2.0).sqrt()),
    ];
    for (tok, delta, sd) in want {
        let r = got.iter().find(|r| r.token == tok).ok_or(format!("{tok} missing"))?;
        ensure(
            (r.delta - delta).abs() <= 1e-9 && (r.z - delta / sd).abs() <= 1e-9,
            format!("{tok}: delta {} z {} vs {delta} {}", r.delta, r.z, delta / sd),
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    for case in 0..100 {
        let mut draw = || {
            let mut c = TokenCounts::default();
            for _ in 0..rng.random_range(1..200) {
                c.add(&vocab[rng.random_range(0..vocab.len())], 1);
            }
            c
        };
        let (a, b) = (draw(), draw());
        let prior = build_prior(&a, &b, PriorKind::Informative);
        let ab = log_odds_dirichlet(&a, &b, &prior, 10.0).map_err(|e| e.to_string())?;
        let ba: HashMap<String, (f64, f64)> = log_odds_dirichlet(&b, &a, &prior, 10.0)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|r| (r.token, (r.delta, r.z)))
            .collect();
        for r in &ab {
            let (d, z) = ba[&r.token];
            ensure(d == -r.delta && z == -r.z, format!("case {case} token {}: not antisymmetric", r.token))?;
        }
    }
    Ok("hand example within 1e-9; exact antisymmetry on 100 corpora".into())
}

// 7

/// Exact two-sided bootstrap p over all multisets of size n, weighted by
/// their multinomial probability.
fn exact_bootstrap_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    let m = diffs.iter().sum::<f64>() / n as f64;
    if m == 0.0 {
        return 1.0;
    }
    let ln_fact: Vec<f64> = (0..=n).scan(0.0, |s, k| {
        if k > 0 {
            *s += (k as f64).ln();
        }
        Some(*s)
    }).collect();
    let base = ln_fact[n] - n as f64 * (n as f64).ln();
    let mut opposite = 0.0;
    let mut counts = vec![0usize; n];
    fn walk(i: usize, left: usize, counts: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
        if i == counts.len() - 1 {
            counts[i] = left;
            visit(counts);
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            walk(i + 1, left - c, counts, visit);
        }
    }
    walk(0, n, &mut counts, &mut |c| {
        let s: f64 = c.iter().zip(diffs).map(|(k, d)| *k as f64 * d).sum::<f64>() / n as f64;
        if (m > 0.0 && s <= 0.0) || (m < 0.0 && s >= 0.0) {
            let lw = base - c.iter().map(|k| ln_fact[*k]).sum::<f64>();
            opposite += lw.exp();
        }
    });
    (2.0 * opposite).min(1.0)
}

fn statistics_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = StatsConfig::default();
    let mut close = 0;
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let n = rng.random_range(2..=12);
        let shift = rng.random_range(-0.8..0.8);
        let diffs: Vec<f64> = (0..n).map(|_| shift + rng.random_range(-1.0..1.0)).collect();
        let a = significance(&diffs, cfg.bootstrap_n, case).map_err(|e| e.to_string())?;
        let b = significance(&diffs, cfg.bootstrap_n, case).map_err(|e| e.to_string())?;
        ensure(a == b, format!("case {case}: same seed gave different results"))?;
        let exact = exact_bootstrap_p(&diffs);
        let gap = (a.p_value - exact).abs();
        worst = worst.max(gap);
        if gap <= 0.05 {
            close += 1;
        }
    }
    ensure(close >= 95, format!("{close}/100 within 0.05 of the exact p (worst gap {worst:.3})"))?;
    Ok(format!("deterministic per seed; {close}/100 within 0.05 of exact enumeration (worst {worst:.3})"))
}

// 8

fn rouge_l() -> Outcome {
    let f = rouge_l_f1("the cat sat", "the cat");
    ensure((f - 0.8).abs() <= 1e-12, format!("F1 {f}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let words = ["alpha", "beta", "gamma", "delta", "the", "a", "cat", "sat", "on", "mat"];
    for _ in 0..100 {
        let s: Vec<&str> = (0..rng.random_range(1..30)).map(|_| words[rng.random_range(0..words.len())]).collect();
        let s = s.join(" ");
        let f = rouge_l_f1(&s, &s);
        ensure(f == 1.0, format!("self-similarity {f} for {s:?}"))?;
    }
    Ok("F1 0.8; self-similarity 1.0 on 100 strings".into())
}

// 9

const E2E_ARTIFACTS: [&str; 22] = [
    "manifest.json",
    "corpus/sampled.jsonl",
    "corpus/sample_ids.txt",
    "corpus/stats.json",
    "corpus/masked.jsonl",
    "corpus/personas.txt",
    "runs/results.jsonl",
    "metrics/parsed.jsonl",
    "metrics/scores.tsv",
    "metrics/accuracy.csv",
    "metrics/recall.csv",
    "metrics/rejects.csv",
    "analysis/estimates.csv",
    "analysis/least_aligned.csv",
    "analysis/baseline_alignment.csv",
    "analysis/log_odds.csv",
    "analysis/tav.csv",
    "analysis/notes.txt",
    "report/shift_tables.md",
    "report/shift_tables.csv",
    "report/summary.md",
    "report/completion.md",
];

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = "id,text,label\n\
        e1,I felt angry when the bus driver drove past me in the pouring rain,anger\n\
        e2,My sister told me she was expecting her first baby next spring,joy\n\
        e3,I was scared when the dog next door jumped the fence and chased me,fear\n\
        e4,I cried at the airport when my father flew back home for good,sadness\n\
        e5,I felt guilty for forgetting my best friend's birthday two years in a row,guilt\n";
    fs::write(dir.path().join("corpus.csv"), corpus).map_err(|e| e.to_string())?;
    let manifest = format!(
        "corpus = \"corpus.csv\"\nlexicon = {:?}\ncache_dir = \"cache\"\noutput_dir = \"out\"\nseed = 9\n\
         [[chat]]\nprovider = \"mock\"\nmodel = \"mock-a\"\n[embedding]\nprovider = \"mock\"\n[scorer]\nprovider = \"keyword\"\n",
        data("nrc_sample.tsv").to_string_lossy()
    );
    let m = RunManifest::from_toml(&manifest, dir.path()).map_err(|e| e.to_string())?;
    let run = || -> Result<_, String> {
        let p = Pipeline::new(m.clone()).map_err(|e| e.to_string())?.with_retry(RetryPolicy::immediate());
        p.run_all().map_err(|e| e.to_string())
    };
    let first = run()?;
    ensure(
        first.sample.selected == 5 && first.personas == 19 && first.run.planned == 5 * 19 * 2,
        format!("unexpected shape {first:?}"),
    )?;
    let out = dir.path().join("out");
    for a in E2E_ARTIFACTS {
        let len = fs::metadata(out.join(a)).map(|m| m.len()).unwrap_or(0);
        ensure(len > 0, format!("artifact {a} missing or empty"))?;
    }
    let mut before = snapshot(&out);
    let results_before = read_results(&out.join("runs/results.jsonl")).map_err(|e| e.to_string())?;
    let second = run()?;
    ensure(second.run.cache_hits == second.run.planned, format!("warm rerun hit the cache {} of {} times", second.run.cache_hits, second.run.planned))?;
    let mut after = snapshot(&out);
    before.remove("runs/results.jsonl");
    after.remove("runs/results.jsonl");
    ensure(before.len() == after.len(), "artifact set changed on rerun")?;
    for (k, v) in &before {
        ensure(after.get(k) == Some(v), format!("{k} differs on rerun"))?;
    }
    let key = |r: &empathy_core::RunResult| (r.model_id.clone(), r.record_id.clone(), r.persona.key(), r.task, r.raw_output.clone());
    let a: BTreeSet<_> = results_before.iter().map(key).collect();
    let b: BTreeSet<_> = read_results(&out.join("runs/results.jsonl")).map_err(|e| e.to_string())?.iter().map(key).collect();
    ensure(a == b, "raw outputs differ on rerun")?;
    Ok(format!(
        "{} requests, {} estimates, {} files byte-identical on warm rerun",
        first.run.planned,
        first.estimates,
        before.len()
    ))
}

// 10

fn oov_regressor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (n, dim) = (1000, 16);
    let w: Vec<[f64; 16]> = (0..8).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<EmotionVector> = x
        .iter()
        .map(|row| {
            EmotionVector::new(std::array::from_fn(|k| {
                let l1: f64 = w[k].iter().map(|v| v.abs()).sum();
                0.5 + 0.45 * w[k].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() / l1
            }))
            .unwrap()
        })
        .collect();
    let (train, held) = split_indices(n, 0.2, 10);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<EmotionVector>) {
        (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (tx, ty) = pick(&train);
    let (hx, hy) = pick(&held);
    let cfg = TrainConfig {
        hidden: vec![64],
        learning_rate: 0.002,
        batch_size: 32,
        max_epochs: 400,
        alpha: 1e-6,
        tol: 1e-7,
        ..TrainConfig::default()
    };
    let model = fit(&tx, &ty, &cfg).map_err(|e| e.to_string())?;
    let pred = model.predict_batch(&hx).map_err(|e| e.to_string())?;
    let metrics = regression_metrics(&pred, &hy);
    let worst = metrics.iter().map(|m| m.r2).fold(f64::INFINITY, f64::min);
    ensure(
        metrics.iter().all(|m| m.r2 > 0.9),
        format!("held-out R² {:?}", metrics.iter().map(|m| (m.emotion.as_str(), m.r2)).collect::<Vec<_>>()),
    )?;
    for scale in [-50.0, 50.0] {
        let far: Vec<f64> = (0..dim).map(|i| if i % 2 == 0 { scale } else { -scale }).collect();
        let v = model.predict(&far).map_err(|e| e.to_string())?;
        ensure(v.values().iter().all(|x| (0.0..=1.0).contains(x)), format!("unclamped output {v:?}"))?;
    }
    Ok(format!("held-out R² >= {worst:.3} for all 8 emotions; outputs clamped"))
}

// 11

fn tav_invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let dim = rng.random_range(2..12);
        let set = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let k = rng.random_range(2..20);
        let attr = set(&mut rng, k);
        let k = rng.random_range(1..20);
        let base = set(&mut rng, k);
        let shift: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let moved = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
            s.iter().map(|v| v.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect()
        };
        let r = tav_ratio(&attr, &base, TavMode::Centroid).map_err(|e| e.to_string())?.ratio;
        let rm = tav_ratio(&moved(&attr), &moved(&base), TavMode::Centroid).map_err(|e| e.to_string())?.ratio;
        worst = worst.max((r - rm).abs());
        ensure((r - rm).abs() <= 1e-9, format!("case {case}: {r} vs translated {rm}"))?;

        // base mirrored through the attribute centroid shares that centroid
        let c: Vec<f64> = (0..dim).map(|j| attr.iter().map(|v| v[j]).sum::<f64>() / attr.len() as f64).collect();
        let mirrored: Vec<Vec<f64>> = attr.iter().map(|v| v.iter().zip(&c).map(|(x, m)| 2.0 * m - x).collect()).collect();
        for b in [&attr, &mirrored] {
            let one = tav_ratio(&attr, b, TavMode::Centroid).map_err(|e| e.to_string())?.ratio;
            ensure((one - 1.0).abs() <= 1e-9, format!("case {case}: coincident centres gave {one}"))?;
        }
    }
    Ok(format!("translation invariant (max gap {worst:.1e}); coincident centres give 1.0"))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "grid cardinality", Duration::from_secs(1), grid_cardinality),
        (2, "lexicon fidelity", Duration::from_secs(1), lexicon_fidelity),
        (3, "ATE oracle equivalence", Duration::from_secs(30), ate_oracle),
        (4, "fixture mark reproduction", Duration::from_secs(10), fixture_marks),
        (5, "EMD metric properties", Duration::from_secs(30), emd_properties),
        (6, "log-odds correctness", Duration::from_secs(10), log_odds_correctness),
        (7, "statistics determinism and calibration", Duration::from_secs(60), statistics_calibration),
        (8, "ROUGE-L", Duration::from_secs(5), rouge_l),
        (9, "end-to-end mock run", Duration::from_secs(60), end_to_end),
        (10, "OOV regressor sanity", Duration::from_secs(300), oov_regressor),
        (11, "TAV invariances", Duration::from_secs(60), tav_invariances),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d}; took {took:.2?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(d) => println!("PASS criterion {id:>2} ({name}) [{took:.2?}]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}) [{took:.2?}]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
