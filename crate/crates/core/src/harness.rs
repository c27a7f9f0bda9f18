//! Reference selection, full-dataset evaluation and per-digit reports.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::PhysicalConfig;
use crate::metric_net::{build_network, Decision, Mode, Network, Reference};
use crate::mnist_io::{binarize, BinaryImage, Dataset, DatasetIndex};
use crate::DIGITS;

/// Ordered `(digit, class ordinal)` entries naming reference images.
///
/// Text form, one entry per line:
///
/// ```text
/// # seed=7
/// 0,12
/// 0,431
/// 1,5
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub entries: Vec<(u8, usize)>,
    pub seed: Option<u64>,
}

impl ReferenceSpec {
    pub fn new(entries: Vec<(u8, usize)>) -> Result<Self> {
        let spec = Self { entries, seed: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(digit, ordinal)) in self.entries.iter().enumerate() {
            if digit as usize >= DIGITS {
                return Err(Error::Input(format!("entry {i}: {digit} is not a digit")));
            }
            if self.entries[..i].contains(&(digit, ordinal)) {
                return Err(Error::DuplicateReference(format!(
                    "entry {i} repeats {digit},{ordinal}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the line format. A `# seed=<n>` comment is picked up as the
    /// seed; other comments and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seed = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("seed=") {
                    seed = v.trim().parse().ok();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Input(format!("line {}: expected `digit,ordinal`, got `{line}`", lineno + 1));
            let (d, o) = line.split_once(',').ok_or_else(bad)?;
            let digit = d.trim().parse().map_err(|_| bad())?;
            let ordinal = o.trim().parse().map_err(|_| bad())?;
            entries.push((digit, ordinal));
        }
        let spec = Self { entries, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed={seed}");
        }
        for (d, o) in &self.entries {
            let _ = writeln!(out, "{d},{o}");
        }
        out
    }

    /// Looks up and binarizes every entry.
    pub fn resolve(&self, dataset: &Dataset, index: &DatasetIndex, threshold: u8) -> Result<Vec<Reference>> {
        self.entries
            .iter()
            .map(|&(digit, ordinal)| {
                let pos = index.resolve_class_ordinal(digit, ordinal)?;
                Ok(Reference::new(digit, binarize(&dataset.images[pos], threshold)).with_source(pos))
            })
            .collect()
    }

    /// Entries of `self` followed by the entries of `other` that are new.
    pub fn extended_with(&self, other: &ReferenceSpec) -> ReferenceSpec {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().filter(|e| !self.entries.contains(e)));
        ReferenceSpec {
            entries,
            seed: self.seed,
        }
    }
}

/// Draws `per_class` images of every digit uniformly without replacement.
///
/// Each digit draws from its own ChaCha stream, so for a fixed seed the
/// draw for `per_class = m` is a prefix of the draw for any larger count
/// and reference sets grow by nesting.
pub fn select_references(labels: &[u8], per_class: usize, seed: u64) -> Result<ReferenceSpec> {
    if per_class == 0 {
        return Err(Error::Selection("per_class must be at least 1".into()));
    }
    let index = DatasetIndex::from_labels(labels)?;
    let mut entries = Vec::with_capacity(per_class * DIGITS);
    for digit in 0..DIGITS as u8 {
        let available = index.positions(digit).len();
        if available < per_class {
            return Err(Error::Selection(format!(
                "digit {digit} has {available} images, {per_class} requested"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(digit as u64);
        let mut ordinals: Vec<usize> = (0..available).collect();
        let (drawn, _) = ordinals.partial_shuffle(&mut rng, per_class);
        // partial_shuffle fills the chosen slice from its end
        entries.extend(drawn.iter().rev().map(|&o| (digit, o)));
    }
    Ok(ReferenceSpec {
        entries,
        seed: Some(seed),
    })
}

/// Counts for one digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DigitScore {
    pub digit: u8,
    pub correct: usize,
    pub total: usize,
    pub rejected: usize,
}

/// `round(100 * part / whole)`, halves rounding up; 0 when `whole` is 0.
pub fn percent(part: usize, whole: usize) -> usize {
    if whole == 0 {
        0
    } else {
        (200 * part + whole) / (2 * whole)
    }
}

impl DigitScore {
    pub fn percent(&self) -> usize {
        percent(self.correct, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub mode: Mode,
    pub digits: [DigitScore; DIGITS],
}

impl EvalReport {
    pub fn empty(mode: Mode) -> Self {
        Self {
            mode,
            digits: std::array::from_fn(|d| DigitScore {
                digit: d as u8,
                ..Default::default()
            }),
        }
    }

    pub fn total(&self) -> usize {
        self.digits.iter().map(|d| d.total).sum()
    }

    pub fn correct(&self) -> usize {
        self.digits.iter().map(|d| d.correct).sum()
    }

    pub fn rejected(&self) -> usize {
        self.digits.iter().map(|d| d.rejected).sum()
    }

    pub fn percent(&self) -> usize {
        percent(self.correct(), self.total())
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// `"10000, 5047, 50%"`.
    pub fn totals_line(&self) -> String {
        format!("{}, {}, {}%", self.total(), self.correct(), self.percent())
    }

    /// Per-digit lines `s0 = 701  i0 = 980  p0 = 71%` followed by the
    /// totals line.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for d in &self.digits {
            let j = d.digit;
            let _ = writeln!(out, "s{j} = {}\ti{j} = {}\tp{j} = {}%", d.correct, d.total, d.percent());
        }
        let _ = writeln!(out, "{}", self.totals_line());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    mode: Mode,
    digits: Vec<DigitRow>,
    total: usize,
    correct: usize,
    percent: usize,
    rejected: usize,
}

#[derive(Serialize, Deserialize)]
struct DigitRow {
    digit: u8,
    correct: usize,
    total: usize,
    percent: usize,
    rejected: usize,
}

const CSV_HEADER: &str = "digit,correct,total,percent,rejected";

/// Renders a report.
///
/// CSV: header `digit,correct,total,percent,rejected`, ten digit rows, then
/// a `total` row. The first line is a `# mode=<mode>` comment.
/// JSON: `{mode, digits: [{digit, correct, total, percent, rejected}], total,
/// correct, percent, rejected}`.
pub fn export_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = format!("# mode={}\n{CSV_HEADER}\n", report.mode);
            for d in &report.digits {
                let _ = writeln!(out, "{},{},{},{},{}", d.digit, d.correct, d.total, d.percent(), d.rejected);
            }
            let _ = writeln!(
                out,
                "total,{},{},{},{}",
                report.correct(),
                report.total(),
                report.percent(),
                report.rejected()
            );
            out
        }
        ReportFormat::Json => {
            let doc = ReportDoc {
                mode: report.mode,
                digits: report
                    .digits
                    .iter()
                    .map(|d| DigitRow {
                        digit: d.digit,
                        correct: d.correct,
                        total: d.total,
                        percent: d.percent(),
                        rejected: d.rejected,
                    })
                    .collect(),
                total: report.total(),
                correct: report.correct(),
                percent: report.percent(),
                rejected: report.rejected(),
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

fn report_from_rows(mode: Mode, rows: Vec<DigitScore>) -> Result<EvalReport> {
    if rows.len() != DIGITS {
        return Err(Error::Report(format!("expected {DIGITS} digit rows, got {}", rows.len())));
    }
    let mut report = EvalReport::empty(mode);
    for row in rows {
        let slot = report
            .digits
            .get_mut(row.digit as usize)
            .ok_or_else(|| Error::Report(format!("digit {}", row.digit)))?;
        *slot = row;
    }
    Ok(report)
}

/// Inverse of [`export_report`]; recovers every count.
pub fn parse_report(text: &str, format: ReportFormat) -> Result<EvalReport> {
    match format {
        ReportFormat::Json => {
            let doc: ReportDoc = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
            let rows = doc
                .digits
                .into_iter()
                .map(|r| DigitScore {
                    digit: r.digit,
                    correct: r.correct,
                    total: r.total,
                    rejected: r.rejected,
                })
                .collect();
            report_from_rows(doc.mode, rows)
        }
        ReportFormat::Csv => {
            let mut mode = Mode::Strict;
            let mut rows = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if let Some(c) = line.strip_prefix('#') {
                    if let Some(m) = c.trim().strip_prefix("mode=") {
                        mode = m.parse()?;
                    }
                    continue;
                }
                if line.is_empty() || line == CSV_HEADER || line.starts_with("total,") {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                let num = |i: usize| -> Result<usize> {
                    f.get(i)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::Report(format!("bad row `{line}`")))
                };
                rows.push(DigitScore {
                    digit: num(0)? as u8,
                    correct: num(1)?,
                    total: num(2)?,
                    rejected: num(4)?,
                });
            }
            report_from_rows(mode, rows)
        }
    }
}

/// Classifies every image; rejections count as errors.
pub fn evaluate(net: &Network, images: &[BinaryImage], labels: &[u8], mode: Mode) -> Result<EvalReport> {
    if images.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= DIGITS) {
        return Err(Error::Data(format!("label {bad}")));
    }
    let decisions = net.classify_batch(images, mode);
    let mut report = EvalReport::empty(mode);
    for (&label, decision) in labels.iter().zip(decisions) {
        let score = &mut report.digits[label as usize];
        score.total += 1;
        match decision {
            Decision::Digit(d) if d == label => score.correct += 1,
            Decision::Digit(_) => {}
            Decision::Rejected => score.rejected += 1,
        }
    }
    Ok(report)
}

/// Binarizes with the network's threshold, then [`evaluate`]s.
pub fn evaluate_dataset(net: &Network, dataset: &Dataset, mode: Mode) -> Result<EvalReport> {
    let images = dataset.binarized(net.config().bin_threshold);
    evaluate(net, &images, &dataset.labels, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    /// Image-to-sensor distance d2, meters.
    PlaneGap,
    /// Charge per pixel q, coulombs.
    Charge,
    /// References per digit.
    PerClass,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2" | "plane-gap" => Ok(Self::PlaneGap),
            "q" | "charge" => Ok(Self::Charge),
            "per-class" | "per_class" => Ok(Self::PerClass),
            other => Err(Error::Input(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// What a sweep holds fixed.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub cfg: PhysicalConfig,
    pub seed: u64,
    pub per_class: usize,
    pub mode: Mode,
}

/// One build + evaluation per value. For `PlaneGap` and `Charge` the
/// reference set drawn from `(seed, per_class)` is shared by all values;
/// `PerClass` draws nested sets from the same seed. A failing value yields
/// an `Err` in its slot and the sweep continues.
pub fn sweep(
    dataset: &Dataset,
    base: &SweepBase,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<(f64, Result<EvalReport>)>> {
    if values.is_empty() {
        return Err(Error::Input("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Input(format!("sweep values must be positive, got {v}")));
    }
    let index = dataset.index();
    let images = dataset.binarized(base.cfg.bin_threshold);
    let fixed = select_references(&dataset.labels, base.per_class, base.seed)?;

    let run = |value: f64| -> Result<EvalReport> {
        let (cfg, spec) = match param {
            SweepParam::PlaneGap => (base.cfg.with_plane_gap(value), fixed.clone()),
            SweepParam::Charge => (base.cfg.with_charge(value), fixed.clone()),
            SweepParam::PerClass => {
                if value.fract() != 0.0 {
                    return Err(Error::Input(format!("per_class must be an integer, got {value}")));
                }
                (base.cfg, select_references(&dataset.labels, value as usize, base.seed)?)
            }
        };
        let refs = spec.resolve(dataset, &index, cfg.bin_threshold)?;
        let net = build_network(refs, &cfg)?;
        evaluate(&net, &images, &dataset.labels, base.mode)
    };
    Ok(values.iter().map(|&v| (v, run(v))).collect())
}
