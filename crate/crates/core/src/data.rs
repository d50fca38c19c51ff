//! Domain types and dataset ingestion.
//!
//! A [`Dataset`] holds every teammate's per-trial judgments together with the
//! ground-truth labels. Judgments arrive in a long CSV format (one row per
//! observation) paired with a ground-truth CSV, or as a single JSON bundle.
//!
//! Teammates that contribute several observation rows for the same test case
//! (panels of human raters, typically) define multiple *instances* of that
//! case; teammates with a single row are repeated across those instances.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a teammate is a person or a model/classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Human,
    Machine,
}

impl Kind {
    fn parse(s: &str) -> Option<Kind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" | "h" => Some(Kind::Human),
            "machine" | "m" => Some(Kind::Machine),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Human => "human",
            Kind::Machine => "machine",
        }
    }
}

/// One teammate's choice and confidence on one test case.
///
/// `confidence` is whatever scale the judge reports on: a discrete rating for
/// humans, a probability or score margin for machines. `class_scores`
/// optionally carries a machine's full per-class score vector (length `L`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Judgment {
    pub test_case: String,
    pub teammate: String,
    pub kind: Kind,
    pub choice: usize,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_scores: Option<Vec<f64>>,
    /// Set when the choice was arbitrary (e.g. equal perplexities).
    #[serde(default, skip_serializing_if = "is_false")]
    pub tie: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Teammate {
    pub name: String,
    pub kind: Kind,
}

/// One evaluation unit: a test case paired with a repetition index.
///
/// `rep` ranges over the maximum number of observation rows any teammate
/// contributed for the case; teammates with fewer rows are cycled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instance {
    pub case: usize,
    pub rep: usize,
}

/// A nonempty subset of a dataset's teammates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamSpec {
    pub members: Vec<String>,
}

impl TeamSpec {
    pub fn new<I, S>(members: I) -> TeamSpec
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TeamSpec {
            members: members.into_iter().map(Into::into).collect(),
        }
    }

    /// Resolve member names to dataset teammate indices, enforcing the
    /// no-duplicates / known-teammate invariants.
    pub fn resolve(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        if self.members.is_empty() {
            return Err(Error::Input("team must have at least one member".into()));
        }
        let mut seen = Vec::new();
        let mut idx = Vec::with_capacity(self.members.len());
        for name in &self.members {
            if seen.contains(&name) {
                return Err(Error::Input(format!("duplicate team member '{name}'")));
            }
            seen.push(name);
            match dataset.teammate_index(name) {
                Some(i) => idx.push(i),
                None => {
                    let known: Vec<_> = dataset
                        .teammates()
                        .iter()
                        .map(|t| t.name.as_str())
                        .collect();
                    return Err(Error::Input(format!(
                        "unknown teammate '{}'; known teammates: {}",
                        name,
                        known.join(", ")
                    )));
                }
            }
        }
        Ok(idx)
    }

    pub fn label(&self) -> String {
        self.members.join("+")
    }
}

/// All judgments for a task, keyed by test case, with ground truth attached.
///
/// Immutable after construction; safe to share across parallel workers.
#[derive(Debug, Clone)]
pub struct Dataset {
    l: usize,
    cases: Vec<String>,
    truth: Vec<usize>,
    teammates: Vec<Teammate>,
    judgments: Vec<Judgment>,
    metadata: Vec<(String, String)>,
    case_index: HashMap<String, usize>,
    tm_index: HashMap<String, usize>,
    /// rows[case][teammate] -> judgment indices in input order.
    rows: Vec<Vec<Vec<usize>>>,
    instances: Vec<Instance>,
}

impl Dataset {
    /// Build and validate a dataset from parts. `truth` fixes the test-case
    /// order; teammate order is first appearance among `judgments`.
    pub fn new(l: usize, truth: Vec<(String, usize)>, judgments: Vec<Judgment>) -> Result<Dataset> {
        Self::with_teammates(l, truth, judgments, None, Vec::new())
    }

    /// As [`Dataset::new`] but with an explicit teammate order (JSON bundles
    /// declare one) and free-form metadata.
    pub fn with_teammates(
        l: usize,
        truth: Vec<(String, usize)>,
        judgments: Vec<Judgment>,
        teammates: Option<Vec<Teammate>>,
        metadata: Vec<(String, String)>,
    ) -> Result<Dataset> {
        if l < 2 {
            return Err(Error::Validation {
                row: 0,
                msg: format!("number of classes must be at least 2, got {l}"),
            });
        }
        let mut cases = Vec::with_capacity(truth.len());
        let mut labels = Vec::with_capacity(truth.len());
        let mut case_index = HashMap::new();
        for (row, (case, label)) in truth.into_iter().enumerate() {
            let row = row as u64 + 1;
            if label >= l {
                return Err(Error::Validation {
                    row,
                    msg: format!("true label {label} out of range for L={l} (case '{case}')"),
                });
            }
            if case_index.insert(case.clone(), cases.len()).is_some() {
                return Err(Error::Validation {
                    row,
                    msg: format!("duplicate ground-truth entry for test case '{case}'"),
                });
            }
            cases.push(case);
            labels.push(label);
        }

        let mut tms: Vec<Teammate> = teammates.unwrap_or_default();
        let mut tm_index: HashMap<String, usize> = tms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
        if tm_index.len() != tms.len() {
            return Err(Error::Validation {
                row: 0,
                msg: "duplicate teammate declaration".into(),
            });
        }
        let declared = !tms.is_empty();

        let mut rows: Vec<Vec<Vec<usize>>> = vec![Vec::new(); cases.len()];
        for (j, judgment) in judgments.iter().enumerate() {
            let row = j as u64 + 1;
            let case = *case_index
                .get(&judgment.test_case)
                .ok_or_else(|| Error::Validation {
                    row,
                    msg: format!(
                        "test case '{}' has no ground-truth entry",
                        judgment.test_case
                    ),
                })?;
            if judgment.choice >= l {
                return Err(Error::Validation {
                    row,
                    msg: format!("choice {} out of range for L={l}", judgment.choice),
                });
            }
            if !judgment.confidence.is_finite() || judgment.confidence < 0.0 {
                return Err(Error::Validation {
                    row,
                    msg: format!(
                        "confidence must be finite and >= 0, got {}",
                        judgment.confidence
                    ),
                });
            }
            if let Some(scores) = &judgment.class_scores {
                if scores.len() != l {
                    return Err(Error::Validation {
                        row,
                        msg: format!("class_scores has {} entries, expected L={l}", scores.len()),
                    });
                }
                if scores.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Validation {
                        row,
                        msg: "class_scores contains a non-finite value".into(),
                    });
                }
                let best = scores[judgment.choice];
                if scores.iter().any(|&s| s > best) {
                    return Err(Error::Validation {
                        row,
                        msg: format!(
                            "class_scores argmax does not match choice {}",
                            judgment.choice
                        ),
                    });
                }
            }
            let tm = match tm_index.get(&judgment.teammate) {
                Some(&i) => {
                    if tms[i].kind != judgment.kind {
                        return Err(Error::Validation {
                            row,
                            msg: format!(
                                "teammate '{}' declared as {} but row says {}",
                                judgment.teammate,
                                tms[i].kind.as_str(),
                                judgment.kind.as_str()
                            ),
                        });
                    }
                    i
                }
                None => {
                    if declared {
                        return Err(Error::Validation {
                            row,
                            msg: format!(
                                "judgment from undeclared teammate '{}'",
                                judgment.teammate
                            ),
                        });
                    }
                    let i = tms.len();
                    tms.push(Teammate {
                        name: judgment.teammate.clone(),
                        kind: judgment.kind,
                    });
                    tm_index.insert(judgment.teammate.clone(), i);
                    i
                }
            };
            let case_rows = &mut rows[case];
            if case_rows.len() < tms.len() {
                case_rows.resize(tms.len(), Vec::new());
            }
            if judgment.kind == Kind::Machine && !case_rows[tm].is_empty() {
                return Err(Error::Validation {
                    row,
                    msg: format!(
                        "duplicate instance: machine '{}' already has a judgment for case '{}'",
                        judgment.teammate, judgment.test_case
                    ),
                });
            }
            case_rows[tm].push(j);
        }
        for case_rows in &mut rows {
            case_rows.resize(tms.len(), Vec::new());
        }

        for (i, tm) in tms.iter().enumerate() {
            let any = rows.iter().any(|case_rows| !case_rows[i].is_empty());
            if !any {
                return Err(Error::Validation {
                    row: 0,
                    msg: format!("teammate '{}' has no judgments", tm.name),
                });
            }
        }

        let mut instances = Vec::new();
        for (case, case_rows) in rows.iter().enumerate() {
            let reps = case_rows.iter().map(Vec::len).max().unwrap_or(0);
            if reps == 0 {
                log::warn!(
                    "test case '{}' has no judgments; it contributes no instances",
                    cases[case]
                );
            }
            for rep in 0..reps {
                instances.push(Instance { case, rep });
            }
        }

        Ok(Dataset {
            l,
            cases,
            truth: labels,
            teammates: tms,
            judgments,
            metadata,
            case_index,
            tm_index,
            rows,
            instances,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.l
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn truth(&self, case: usize) -> usize {
        self.truth[case]
    }

    pub fn teammates(&self) -> &[Teammate] {
        &self.teammates
    }

    pub fn teammate_index(&self, name: &str) -> Option<usize> {
        self.tm_index.get(name).copied()
    }

    pub fn case_of(&self, name: &str) -> Option<usize> {
        self.case_index.get(name).copied()
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    /// All evaluation instances, ordered by (case order, repetition).
    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// Judgment row indices for one (case, teammate) pair, in input order.
    pub fn rows_for(&self, case: usize, teammate: usize) -> &[usize] {
        &self.rows[case][teammate]
    }

    /// The judgment a teammate contributes to an instance, if any.
    /// Teammates with fewer rows than the instance's repetition index are
    /// cycled (`rep % count`), so single-row teammates repeat across reps.
    pub fn judgment_at(&self, instance: Instance, teammate: usize) -> Option<&Judgment> {
        let rows = &self.rows[instance.case][teammate];
        if rows.is_empty() {
            return None;
        }
        Some(&self.judgments[rows[instance.rep % rows.len()]])
    }

    pub fn instance_id(&self, instance: Instance) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}#{}", self.cases[instance.case], instance.rep);
        s
    }

    // ---- serialization ----------------------------------------------------

    /// Load judgments + ground truth CSVs. `l` may be supplied explicitly;
    /// otherwise it is taken from the score-column count when present, or
    /// inferred as `max(label, choice) + 1`.
    pub fn from_csv(judgments_path: &Path, truth_path: &Path, l: Option<usize>) -> Result<Dataset> {
        let truth = read_truth_csv(truth_path)?;
        let (judgments, n_score_cols) = read_judgments_csv(judgments_path)?;
        let l = match (l, n_score_cols) {
            (Some(l), _) => l,
            (None, Some(n)) => n,
            (None, None) => {
                let max_label = truth.iter().map(|(_, z)| *z).max().unwrap_or(0);
                let max_choice = judgments.iter().map(|j| j.choice).max().unwrap_or(0);
                (max_label.max(max_choice) + 1).max(2)
            }
        };
        Dataset::new(l, truth, judgments)
    }

    /// Load a JSON bundle (judgments + truth + L + metadata in one file).
    pub fn from_json(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        let bundle: Bundle = serde_json::from_str(&text)?;
        Dataset::with_teammates(
            bundle.l,
            bundle
                .truth
                .into_iter()
                .map(|t| (t.test_case, t.true_label))
                .collect(),
            bundle.judgments,
            Some(bundle.teammates),
            bundle.metadata,
        )
    }

    /// Write the judgments/truth CSV pair. Score columns are emitted only if
    /// some judgment carries `class_scores`. Tie flags survive only in the
    /// JSON bundle format.
    pub fn to_csv(&self, judgments_path: &Path, truth_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(judgments_path)?;
        let with_scores = self.judgments.iter().any(|j| j.class_scores.is_some());
        let mut header = vec![
            "test_case".to_string(),
            "teammate".to_string(),
            "kind".to_string(),
            "choice".to_string(),
            "confidence".to_string(),
        ];
        if with_scores {
            for k in 0..self.l {
                header.push(format!("score_{k}"));
            }
        }
        w.write_record(&header)?;
        for j in &self.judgments {
            let mut rec = vec![
                j.test_case.clone(),
                j.teammate.clone(),
                j.kind.as_str().to_string(),
                j.choice.to_string(),
                format_float(j.confidence),
            ];
            if with_scores {
                match &j.class_scores {
                    Some(scores) => rec.extend(scores.iter().map(|&s| format_float(s))),
                    None => rec.extend(std::iter::repeat_n(String::new(), self.l)),
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(truth_path)?;
        w.write_record(["test_case", "true_label"])?;
        for (case, label) in self.cases.iter().zip(&self.truth) {
            w.write_record([case.as_str(), &label.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self, path: &Path) -> Result<()> {
        let bundle = Bundle {
            l: self.l,
            metadata: self.metadata.clone(),
            teammates: self.teammates.clone(),
            truth: self
                .cases
                .iter()
                .zip(&self.truth)
                .map(|(c, &z)| TruthEntry {
                    test_case: c.clone(),
                    true_label: z,
                })
                .collect(),
            judgments: self.judgments.clone(),
        };
        let text = serde_json::to_string_pretty(&bundle)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Full-precision float formatting for CSV (Rust's shortest round-trip form).
pub fn format_float(x: f64) -> String {
    format!("{x}")
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    l: usize,
    #[serde(default)]
    metadata: Vec<(String, String)>,
    teammates: Vec<Teammate>,
    truth: Vec<TruthEntry>,
    judgments: Vec<Judgment>,
}

#[derive(Serialize, Deserialize)]
struct TruthEntry {
    test_case: String,
    true_label: usize,
}

fn read_truth_csv(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("missing column '{name}'"),
            })
    };
    let c_case = col("test_case")?;
    let c_label = col("true_label")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let label: usize = rec[c_label].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: format!(
                "true_label '{}' is not a non-negative integer",
                &rec[c_label]
            ),
        })?;
        out.push((rec[c_case].to_string(), label));
    }
    Ok(out)
}

fn read_judgments_csv(path: &Path) -> Result<(Vec<Judgment>, Option<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column '{name}'")))
    };
    let c_case = col("test_case")?;
    let c_tm = col("teammate")?;
    let c_kind = col("kind")?;
    let c_choice = col("choice")?;
    let c_conf = col("confidence")?;
    let mut score_cols = Vec::new();
    for k in 0.. {
        match headers.iter().position(|h| h == format!("score_{k}")) {
            Some(i) => score_cols.push(i),
            None => break,
        }
    }
    let n_score_cols = if score_cols.is_empty() {
        None
    } else {
        Some(score_cols.len())
    };

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let kind = Kind::parse(&rec[c_kind]).ok_or_else(|| {
            parse_err(
                line,
                format!("kind '{}' is not 'human' or 'machine'", &rec[c_kind]),
            )
        })?;
        let choice: usize = rec[c_choice].parse().map_err(|_| {
            parse_err(
                line,
                format!("choice '{}' is not a non-negative integer", &rec[c_choice]),
            )
        })?;
        let confidence: f64 = rec[c_conf].parse().map_err(|_| {
            parse_err(
                line,
                format!("confidence '{}' is not a number", &rec[c_conf]),
            )
        })?;
        let class_scores = if score_cols.is_empty() {
            None
        } else {
            let raw: Vec<&str> = score_cols
                .iter()
                .map(|&i| rec.get(i).unwrap_or(""))
                .collect();
            if raw.iter().all(|s| s.is_empty()) {
                None
            } else {
                let mut scores = Vec::with_capacity(raw.len());
                for s in raw {
                    let v: f64 = s
                        .parse()
                        .map_err(|_| parse_err(line, format!("score '{s}' is not a number")))?;
                    scores.push(v);
                }
                Some(scores)
            }
        };
        out.push(Judgment {
            test_case: rec[c_case].to_string(),
            teammate: rec[c_tm].to_string(),
            kind,
            choice,
            confidence,
            class_scores,
            tie: false,
        });
    }
    Ok((out, n_score_cols))
}

// ---- preprocessing operations ----------------------------------------------

/// Map a raw self-reported confidence in [1, 100] to a three-level rating
/// with cutpoints at 33 and 66.
pub fn discretize_confidence(raw: f64) -> Result<u8> {
    if !raw.is_finite() || !(1.0..=100.0).contains(&raw) {
        return Err(Error::Input(format!(
            "raw confidence {raw} outside [1, 100]"
        )));
    }
    Ok(if raw <= 33.0 {
        0
    } else if raw <= 66.0 {
        1
    } else {
        2
    })
}

/// Loader-side variant that tolerates raw values in [0, 1): some exports use
/// 0 for the slider minimum. Those are clamped into the lowest bin, logged.
pub fn discretize_confidence_lenient(raw: f64) -> Result<u8> {
    if raw.is_finite() && (0.0..1.0).contains(&raw) {
        log::warn!("raw confidence {raw} below 1; clamped to rating 0");
        return Ok(0);
    }
    discretize_confidence(raw)
}

/// Turn a pair of perplexities into (choice, confidence, tie): the lower
/// perplexity wins and the confidence is the absolute gap. Equal
/// perplexities fall to option 0 with the tie flag set.
pub fn perplexity_to_choice_confidence(q0: f64, q1: f64) -> Result<(usize, f64, bool)> {
    if !q0.is_finite() || !q1.is_finite() {
        return Err(Error::Input(format!(
            "perplexities must be finite, got ({q0}, {q1})"
        )));
    }
    let tie = q0 == q1;
    let choice = if q0 <= q1 { 0 } else { 1 };
    Ok((choice, (q0 - q1).abs(), tie))
}

/// Probability scores from perplexities: softmax(-q), computed shift-stably.
pub fn softmax_scores(q: &[f64]) -> Result<Vec<f64>> {
    if q.is_empty() {
        return Err(Error::Input("softmax of an empty vector".into()));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "softmax input contains a non-finite value".into(),
        ));
    }
    // softmax(-q): shift by the minimum of q so the largest exponent is 0.
    let m = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = q.iter().map(|&v| (-(v - m)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}
