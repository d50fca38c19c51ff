//! Regression features from judgments.
//!
//! Binary tasks get one signed-confidence predictor per team member: the
//! magnitude is the member's confidence, the sign encodes the chosen option
//! (+ for option 0). Multiclass tasks get one block of `L` per-class
//! confidence-mass features per member. Optional transforms: drop confidence
//! magnitudes entirely, squash them toward 1, or append interaction /
//! polynomial terms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, Judgment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Signed confidence (the standard model).
    Confidence,
    /// Signs only: every confidence magnitude replaced by 1.
    NoConfidence,
    /// Confidence magnitudes squashed toward 1 with per-teammate strength.
    Squash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "degree")]
pub enum Expansion {
    None,
    /// Products of distinct base features, orders 2..=degree.
    Interactions(u32),
    /// Interactions plus pure powers x^2..x^degree.
    Polynomial(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub mode: Mode,
    /// Squash strength per teammate (squash mode); missing entries mean 0.
    #[serde(default)]
    pub alpha: BTreeMap<String, f64>,
    pub expansion: Expansion,
    /// Z-score features using training-split statistics.
    #[serde(default)]
    pub standardize: bool,
    /// Fail on a missing judgment instead of imputing a zero feature.
    #[serde(default)]
    pub strict: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mode: Mode::Confidence,
            alpha: BTreeMap::new(),
            expansion: Expansion::None,
            standardize: false,
            strict: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, &a) in &self.alpha {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Config(format!(
                    "squash alpha for '{name}' must be finite and >= 0, got {a}"
                )));
            }
        }
        match self.expansion {
            Expansion::Interactions(d) | Expansion::Polynomial(d) if d < 2 => Err(Error::Config(
                format!("expansion degree must be at least 2, got {d}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn alpha_for(&self, teammate: &str) -> f64 {
        self.alpha.get(teammate).copied().unwrap_or(0.0)
    }
}

/// One regression row. For binary tasks `target` is 1 when the true label is
/// the reference option 0; for multiclass it is the class index itself.
#[derive(Debug, Clone)]
pub struct FeatureRow {
    pub instance: String,
    pub x: Vec<f64>,
    pub target: usize,
}

/// A design matrix plus its column names.
#[derive(Debug, Clone)]
pub struct Design {
    pub rows: Vec<FeatureRow>,
    pub names: Vec<String>,
    /// Targets take values in 0..n_outcomes (2 for binary).
    pub n_outcomes: usize,
}

impl Design {
    pub fn width(&self) -> usize {
        self.names.len()
    }
}

/// Signed confidence for a binary judgment: +confidence when option 0 was
/// chosen, -confidence when option 1 was.
pub fn signed_confidence(judgment: &Judgment) -> Result<f64> {
    match judgment.choice {
        0 => Ok(judgment.confidence),
        1 => Ok(-judgment.confidence),
        c => Err(Error::Input(format!(
            "signed confidence is defined for binary choices only, got choice {c}"
        ))),
    }
}

/// Pull a confidence magnitude toward 1: f(x) = 1 + (x-1)/(1 + alpha*|x-1|).
/// alpha = 0 is the exact identity; alpha -> inf sends everything to 1.
pub fn squash(x: f64, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Config(format!(
            "squash alpha must be finite and >= 0, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        return Ok(x);
    }
    let d = x - 1.0;
    Ok(1.0 + d / (1.0 + alpha * d.abs()))
}

/// Coordinate-wise squash of a per-class mass vector toward the one-hot
/// vector of the chosen class (the multiclass limit of the scalar squash:
/// alpha = 0 is the identity, alpha -> inf reproduces no-confidence mode).
fn squash_masses(masses: &mut [f64], choice: usize, alpha: f64) {
    if alpha == 0.0 {
        return;
    }
    for (k, m) in masses.iter_mut().enumerate() {
        let t = if k == choice { 1.0 } else { 0.0 };
        let d = *m - t;
        *m = t + d / (1.0 + alpha * d.abs());
    }
}

/// Build the design matrix for a team over a set of instances.
/// `team` holds resolved teammate indices (see [`crate::data::TeamSpec::resolve`]).
pub fn build_design(
    dataset: &Dataset,
    team: &[usize],
    config: &FeatureConfig,
    instances: &[Instance],
) -> Result<Design> {
    config.validate()?;
    if team.is_empty() {
        return Err(Error::Input("team must have at least one member".into()));
    }
    let l = dataset.n_classes();
    let binary = l == 2;
    let member_names: Vec<&str> = team
        .iter()
        .map(|&t| dataset.teammates()[t].name.as_str())
        .collect();

    let mut base_names = Vec::new();
    if binary {
        base_names.extend(member_names.iter().map(|n| n.to_string()));
    } else {
        for name in &member_names {
            for k in 0..l {
                base_names.push(format!("{name}[{k}]"));
            }
        }
    }

    let mut rows = Vec::with_capacity(instances.len());
    for &inst in instances {
        let mut x = Vec::with_capacity(base_names.len());
        for (&tm, name) in team.iter().zip(&member_names) {
            match dataset.judgment_at(inst, tm) {
                Some(j) => {
                    if binary {
                        let magnitude = match config.mode {
                            Mode::Confidence => j.confidence,
                            Mode::NoConfidence => 1.0,
                            Mode::Squash => squash(j.confidence, config.alpha_for(name))?,
                        };
                        let sign = if j.choice == 0 { 1.0 } else { -1.0 };
                        x.push(sign * magnitude);
                    } else {
                        x.extend(class_masses(j, l, config, name)?);
                    }
                }
                None => {
                    if config.strict {
                        return Err(Error::Input(format!(
                            "teammate '{}' has no judgment for instance {}",
                            name,
                            dataset.instance_id(inst)
                        )));
                    }
                    log::warn!(
                        "teammate '{}' has no judgment for instance {}; imputing zero features",
                        name,
                        dataset.instance_id(inst)
                    );
                    x.extend(std::iter::repeat_n(0.0, if binary { 1 } else { l }));
                }
            }
        }
        let truth = dataset.truth(inst.case);
        let target = if binary {
            usize::from(truth == 0)
        } else {
            truth
        };
        rows.push(FeatureRow {
            instance: dataset.instance_id(inst),
            x,
            target,
        });
    }

    let names = expand(&mut rows, base_names, config.expansion);
    Ok(Design {
        rows,
        names,
        n_outcomes: if binary { 2 } else { l },
    })
}

fn class_masses(j: &Judgment, l: usize, config: &FeatureConfig, name: &str) -> Result<Vec<f64>> {
    let mut masses = match &j.class_scores {
        Some(scores) => scores.clone(),
        // humans (and score-less machines) put their whole confidence mass
        // on the chosen class
        None => {
            let mut v = vec![0.0; l];
            v[j.choice] = j.confidence;
            v
        }
    };
    match config.mode {
        Mode::Confidence => {}
        Mode::NoConfidence => {
            masses.iter_mut().enumerate().for_each(|(k, m)| {
                *m = if k == j.choice { 1.0 } else { 0.0 };
            });
        }
        Mode::Squash => squash_masses(&mut masses, j.choice, config.alpha_for(name)),
    }
    Ok(masses)
}

/// Append expansion terms in place and return the full column-name list.
fn expand(rows: &mut [FeatureRow], base_names: Vec<String>, expansion: Expansion) -> Vec<String> {
    let (degree, with_powers) = match expansion {
        Expansion::None => return base_names,
        Expansion::Interactions(d) => (d as usize, false),
        Expansion::Polynomial(d) => (d as usize, true),
    };
    let n = base_names.len();
    // all index combinations of sizes 2..=degree
    let mut combos: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn rec(start: usize, n: usize, size: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if stack.len() == size {
            out.push(stack.clone());
            return;
        }
        for i in start..n {
            stack.push(i);
            rec(i + 1, n, size, stack, out);
            stack.pop();
        }
    }
    for size in 2..=degree.min(n) {
        rec(0, n, size, &mut stack, &mut combos);
    }

    let mut names = base_names;
    for combo in &combos {
        names.push(
            combo
                .iter()
                .map(|&i| names[i].clone())
                .collect::<Vec<_>>()
                .join("*"),
        );
    }
    if with_powers {
        for i in 0..n {
            for p in 2..=degree {
                names.push(format!("{}^{p}", names[i]));
            }
        }
    }
    for row in rows.iter_mut() {
        let base: Vec<f64> = row.x.clone();
        for combo in &combos {
            row.x.push(combo.iter().map(|&i| base[i]).product());
        }
        if with_powers {
            for &b in &base {
                for p in 2..=degree {
                    row.x.push(b.powi(p as i32));
                }
            }
        }
    }
    names
}
