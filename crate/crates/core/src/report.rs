//! Shift tables, isolation/intersection summaries and artifact stamping.
//!
//! Human-readable tables round to 3 decimals; the CSV mirrors keep full
//! precision. Every artifact begins with a `# manifest=<digest> seed=<seed>`
//! line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::causal::{AteEstimate, Dimension, Setting};
use crate::error::{Error, Result};
use crate::persona::{Attribute, Category};

/// Provenance line written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub manifest_digest: String,
    pub seed: u64,
}

impl Stamp {
    pub fn new(manifest_digest: impl Into<String>, seed: u64) -> Self {
        Stamp {
            manifest_digest: manifest_digest.into(),
            seed,
        }
    }

    pub fn line(&self) -> String {
        format!("# manifest={} seed={}", self.manifest_digest, self.seed)
    }

    /// Reads the stamp from the first line of an artifact.
    pub fn parse(text: &str) -> Option<Stamp> {
        let rest = text.lines().next()?.strip_prefix("# manifest=")?;
        let (digest, seed) = rest.split_once(" seed=")?;
        Some(Stamp::new(digest, seed.trim().parse().ok()?))
    }
}

pub fn write_stamped(path: &Path, stamp: &Stamp, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = format!("{}\n{body}", stamp.line());
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extreme {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMark {
    pub extreme: Option<Extreme>,
    /// TOST equivalence to base.
    pub equiv_base: bool,
}

impl CellMark {
    /// Compact code: `H`, `L`, `E`, `HE`, `LE` or `-`.
    pub fn code(&self) -> &'static str {
        match (self.extreme, self.equiv_base) {
            (Some(Extreme::High), false) => "H",
            (Some(Extreme::Low), false) => "L",
            (Some(Extreme::High), true) => "HE",
            (Some(Extreme::Low), true) => "LE",
            (None, true) => "E",
            (None, false) => "-",
        }
    }
}

pub const SIGNIFICANCE: f64 = 0.05;

/// Marks one column. Among significant cells the maximum is High and the
/// minimum is Low (ties share the mark); a lone significant cell is marked by
/// its sign.
pub fn mark_column(cells: &[(f64, f64, f64)]) -> Vec<CellMark> {
    let mut marks: Vec<CellMark> = cells
        .iter()
        .map(|&(_, _, eq)| CellMark {
            extreme: None,
            equiv_base: eq < SIGNIFICANCE,
        })
        .collect();
    let sig: Vec<usize> = (0..cells.len())
        .filter(|&i| cells[i].1 < SIGNIFICANCE)
        .collect();
    match sig.as_slice() {
        [] => {}
        [i] => {
            let v = cells[*i].0;
            marks[*i].extreme = if v > 0.0 {
                Some(Extreme::High)
            } else if v < 0.0 {
                Some(Extreme::Low)
            } else {
                None
            };
        }
        _ => {
            let max = sig.iter().map(|&i| cells[i].0).fold(f64::NEG_INFINITY, f64::max);
            let min = sig.iter().map(|&i| cells[i].0).fold(f64::INFINITY, f64::min);
            for &i in &sig {
                if cells[i].0 == max {
                    marks[i].extreme = Some(Extreme::High);
                } else if cells[i].0 == min {
                    marks[i].extreme = Some(Extreme::Low);
                }
            }
        }
    }
    marks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftCell {
    pub value: f64,
    pub p_value: f64,
    pub equiv_p_value: f64,
    pub n: usize,
    pub mark: CellMark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub attribute: Attribute,
    pub cells: [Option<ShiftCell>; 11],
}

/// One table per (model, setting, category).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTable {
    pub model_id: String,
    pub setting: Setting,
    pub category: Category,
    pub rows: Vec<ShiftRow>,
}

impl ShiftTable {
    pub fn cell(&self, attribute: &Attribute, d: Dimension) -> Option<&ShiftCell> {
        self.rows
            .iter()
            .find(|r| &r.attribute == attribute)
            .and_then(|r| r.cells[d.index()].as_ref())
    }

    /// Attributes carrying `extreme` in column `d`.
    pub fn marked(&self, d: Dimension, extreme: Extreme) -> Vec<&Attribute> {
        self.rows
            .iter()
            .filter(|r| r.cells[d.index()].as_ref().is_some_and(|c| c.mark.extreme == Some(extreme)))
            .map(|r| &r.attribute)
            .collect()
    }
}

/// Groups estimates into tables. Rows keep the order in which attributes
/// first appear; tables are ordered by (model, setting, category).
pub fn build_shift_tables(estimates: &[AteEstimate]) -> Vec<ShiftTable> {
    let mut groups: BTreeMap<(String, Setting, Category), Vec<ShiftRow>> = BTreeMap::new();
    for e in estimates {
        let rows = groups
            .entry((e.model_id.clone(), e.setting, e.attribute.category))
            .or_default();
        let pos = match rows.iter().position(|r| r.attribute == e.attribute) {
            Some(p) => p,
            None => {
                rows.push(ShiftRow {
                    attribute: e.attribute.clone(),
                    cells: Default::default(),
                });
                rows.len() - 1
            }
        };
        rows[pos].cells[e.dimension.index()] = Some(ShiftCell {
            value: e.mean_shift,
            p_value: e.p_value,
            equiv_p_value: e.equiv_p_value,
            n: e.n,
            mark: CellMark::default(),
        });
    }
    let mut tables = Vec::new();
    for ((model_id, setting, category), mut rows) in groups {
        for d in 0..11 {
            let present: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].cells[d].is_some()).collect();
            let cells: Vec<(f64, f64, f64)> = present
                .iter()
                .map(|&r| {
                    let c = rows[r].cells[d].as_ref().expect("present");
                    (c.value, c.p_value, c.equiv_p_value)
                })
                .collect();
            for (&r, m) in present.iter().zip(mark_column(&cells)) {
                rows[r].cells[d].as_mut().expect("present").mark = m;
            }
        }
        tables.push(ShiftTable {
            model_id,
            setting,
            category,
            rows,
        });
    }
    tables
}

fn fmt3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

pub fn render_markdown(tables: &[ShiftTable]) -> String {
    let mut out = String::new();
    out.push_str("Marks: H highest significant shift in column, L lowest, E equivalent to base.\n");
    for t in tables {
        let _ = writeln!(out, "\n## {} / {} / {}\n", t.model_id, t.setting, t.category);
        out.push_str("| attribute |");
        for d in Dimension::ALL {
            let _ = write!(out, " {d} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(11));
        out.push('\n');
        for r in &t.rows {
            let _ = write!(out, "| {} |", r.attribute.label());
            for c in &r.cells {
                match c {
                    Some(c) if c.mark.code() == "-" => {
                        let _ = write!(out, " {} |", fmt3(c.value));
                    }
                    Some(c) => {
                        let _ = write!(out, " {} {} |", fmt3(c.value), c.mark.code());
                    }
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Machine-readable mirror of the shift tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub setting: Setting,
    pub category: Category,
    pub model: String,
    pub attribute: String,
    pub dimension: Dimension,
    pub value: f64,
    pub mark: String,
    pub p_value: f64,
    pub equiv_p_value: f64,
    /// Alternative equivalence reading: the shift is simply not significant.
    pub non_significant: bool,
    pub n: usize,
}

pub fn shift_records(tables: &[ShiftTable]) -> Vec<ShiftRecord> {
    let mut out = Vec::new();
    for t in tables {
        for r in &t.rows {
            for d in Dimension::ALL {
                if let Some(c) = &r.cells[d.index()] {
                    out.push(ShiftRecord {
                        setting: t.setting,
                        category: t.category,
                        model: t.model_id.clone(),
                        attribute: r.attribute.label().to_owned(),
                        dimension: d,
                        value: c.value,
                        mark: c.mark.code().to_owned(),
                        p_value: c.p_value,
                        equiv_p_value: c.equiv_p_value,
                        non_significant: c.p_value >= SIGNIFICANCE,
                        n: c.n,
                    });
                }
            }
        }
    }
    out
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Validation(format!("csv write: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv write: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a stamped CSV artifact; the stamp line is skipped as a comment.
pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::parse(origin, e.position().map_or(0, |p| p.line() as usize), e.to_string())))
        .collect()
}

pub fn render_csv(tables: &[ShiftTable]) -> Result<String> {
    to_csv(&shift_records(tables))
}

/// Writes `shift_tables.md` and `shift_tables.csv` into `dir`.
pub fn emit_shift_tables(estimates: &[AteEstimate], dir: &Path, stamp: &Stamp) -> Result<Vec<ShiftTable>> {
    if estimates.is_empty() {
        return Err(Error::Argument("no estimates to tabulate".into()));
    }
    let tables = build_shift_tables(estimates);
    write_stamped(&dir.join("shift_tables.md"), stamp, &render_markdown(&tables))?;
    write_stamped(&dir.join("shift_tables.csv"), stamp, &render_csv(&tables)?)?;
    Ok(tables)
}

pub fn write_estimates(path: &Path, stamp: &Stamp, estimates: &[AteEstimate]) -> Result<()> {
    write_stamped(path, stamp, &to_csv(estimates)?)
}

pub fn read_estimates(path: &Path) -> Result<Vec<AteEstimate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv(&text, path)
}

pub fn write_csv<T: Serialize>(path: &Path, stamp: &Stamp, rows: &[T]) -> Result<()> {
    write_stamped(path, stamp, &to_csv(rows)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Same,
}

impl Direction {
    pub fn glyph(self) -> &'static str {
        match self {
            Direction::Up => "↑",
            Direction::Down => "↓",
            Direction::Same => "≡",
        }
    }
}

const SAME_FRACTION: f64 = 0.05;

/// Compares range widths; `≡` when they differ by less than 5% of the
/// isolation width.
pub fn compare_ranges(iso: (f64, f64), inter: (f64, f64)) -> Direction {
    let (wi, wx) = (iso.1 - iso.0, inter.1 - inter.0);
    if wi == wx || (wx - wi).abs() < SAME_FRACTION * wi.abs() {
        Direction::Same
    } else if wx > wi {
        Direction::Up
    } else {
        Direction::Down
    }
}

/// Compares one cell across settings; `≡` within 5% of the isolation value.
pub fn compare_cells(iso: f64, inter: f64) -> Direction {
    if iso == inter || (inter - iso).abs() < SAME_FRACTION * iso.abs() {
        Direction::Same
    } else if inter > iso {
        Direction::Up
    } else {
        Direction::Down
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Affective,
    Cognitive,
}

impl Family {
    pub fn of(d: Dimension) -> Family {
        if d.is_affective() {
            Family::Affective
        } else {
            Family::Cognitive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Affective => "affective",
            Family::Cognitive => "cognitive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub family: Family,
    pub category: Category,
    /// `None` for range rows; the extreme attribute and dimension otherwise.
    pub cell: Option<(Attribute, Dimension)>,
    pub iso_low: f64,
    pub iso_high: f64,
    pub inter_low: f64,
    pub inter_high: f64,
    pub direction: Direction,
}

fn range(xs: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    xs.fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

/// Per (model, family, category): the range of shifts in each setting, then
/// one row per dimension for the isolation cell with the largest significant
/// |shift|, compared with the same cell under intersection.
pub fn emit_summary(iso: &[AteEstimate], inter: &[AteEstimate]) -> Vec<SummaryRow> {
    type Key = (String, Family, Category);
    let key = |e: &AteEstimate| (e.model_id.clone(), Family::of(e.dimension), e.attribute.category);
    let mut groups: BTreeMap<Key, (Vec<&AteEstimate>, Vec<&AteEstimate>)> = BTreeMap::new();
    for e in iso {
        groups.entry(key(e)).or_default().0.push(e);
    }
    for e in inter {
        groups.entry(key(e)).or_default().1.push(e);
    }
    let mut rows = Vec::new();
    for ((model, family, category), (a, b)) in groups {
        let (Some(ri), Some(rx)) = (range(a.iter().map(|e| e.mean_shift)), range(b.iter().map(|e| e.mean_shift))) else {
            continue;
        };
        rows.push(SummaryRow {
            model: model.clone(),
            family,
            category,
            cell: None,
            iso_low: ri.0,
            iso_high: ri.1,
            inter_low: rx.0,
            inter_high: rx.1,
            direction: compare_ranges(ri, rx),
        });
        for d in Dimension::ALL.into_iter().filter(|d| Family::of(*d) == family) {
            let top = a
                .iter()
                .filter(|e| e.dimension == d && e.p_value < SIGNIFICANCE)
                .fold(None::<&&AteEstimate>, |best, e| match best {
                    Some(b) if b.mean_shift.abs() >= e.mean_shift.abs() => Some(b),
                    _ => Some(e),
                });
            let Some(top) = top else { continue };
            let Some(other) = b.iter().find(|e| e.dimension == d && e.attribute == top.attribute) else {
                continue;
            };
            rows.push(SummaryRow {
                model: model.clone(),
                family,
                category,
                cell: Some((top.attribute.clone(), d)),
                iso_low: top.mean_shift,
                iso_high: top.mean_shift,
                inter_low: other.mean_shift,
                inter_high: other.mean_shift,
                direction: compare_cells(top.mean_shift, other.mean_shift),
            });
        }
    }
    rows
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from("| model | family | category | row | isolation | intersection | change |\n|---|---|---|---|---|---|:-:|\n");
    for r in rows {
        let (label, iso, int) = match &r.cell {
            None => (
                "range".to_owned(),
                format!("{}..{}", fmt3(r.iso_low), fmt3(r.iso_high)),
                format!("{}..{}", fmt3(r.inter_low), fmt3(r.inter_high)),
            ),
            Some((a, d)) => (format!("{} {d}", a.label()), fmt3(r.iso_low), fmt3(r.inter_low)),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {label} | {iso} | {int} | {} |",
            r.model,
            r.family.as_str(),
            r.category,
            r.direction.glyph()
        );
    }
    out
}

#[derive(Deserialize)]
struct FixtureRow {
    setting: Setting,
    category: Category,
    model: String,
    attribute: String,
    dimension: Dimension,
    value: f64,
    mark: String,
}

const BUNDLED_FIXTURE: &str = include_str!("../data/reference_shift_tables.csv");

/// Published per-cell shifts with their colour marks, as estimates. Marked
/// extreme cells get p = 0.01 (all others 1.0); cells marked equivalent get
/// an equivalence p of 0.01. Returns the estimates and the published mark
/// code per cell, keyed by (model, setting, attribute, dimension).
pub type FixtureMarks = BTreeMap<(String, Setting, Attribute, Dimension), String>;

pub fn parse_fixture(text: &str, origin: &Path) -> Result<(Vec<AteEstimate>, FixtureMarks)> {
    let rows: Vec<FixtureRow> = from_csv(text, origin)?;
    let mut estimates = Vec::with_capacity(rows.len());
    let mut marks = BTreeMap::new();
    for r in rows {
        let attribute = Attribute::new(r.category, r.attribute);
        let significant = r.mark.contains('H') || r.mark.contains('L');
        estimates.push(AteEstimate {
            model_id: r.model.clone(),
            setting: r.setting,
            attribute: attribute.clone(),
            dimension: r.dimension,
            mean_shift: r.value,
            n: 0,
            ci_low: r.value,
            ci_high: r.value,
            p_value: if significant { 0.01 } else { 1.0 },
            equiv_p_value: if r.mark.contains('E') { 0.01 } else { 1.0 },
            skipped: 0,
        });
        marks.insert((r.model, r.setting, attribute, r.dimension), r.mark);
    }
    Ok((estimates, marks))
}

pub fn bundled_fixture() -> (Vec<AteEstimate>, FixtureMarks) {
    parse_fixture(BUNDLED_FIXTURE, Path::new("<bundled>")).expect("bundled fixture parses")
}
