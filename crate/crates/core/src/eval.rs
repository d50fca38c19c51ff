//! Team evaluation: leave-one-test-case-out cross-validation, subset
//! enumeration, calibration tables and item-difficulty diversity.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, McmcSettings};
use crate::data::{Dataset, Instance, Kind, TeamSpec};
use crate::error::{Error, Result};
use crate::features::{build_design, FeatureConfig, Mode};
use crate::logistic::{self, FitOptions};
use crate::stats;

/// One fold per test case: training keeps every instance of the other
/// cases, testing takes every instance of the held-out case.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub case: usize,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl FoldPlan {
    pub fn new(dataset: &Dataset) -> FoldPlan {
        let instances = dataset.instances();
        let mut folds = Vec::new();
        for case in 0..dataset.cases().len() {
            let test: Vec<Instance> = instances
                .iter()
                .filter(|i| i.case == case)
                .copied()
                .collect();
            if test.is_empty() {
                continue;
            }
            let train: Vec<Instance> = instances
                .iter()
                .filter(|i| i.case != case)
                .copied()
                .collect();
            folds.push(Fold { case, train, test });
        }
        FoldPlan { folds }
    }

    /// Structural invariant: folds partition the instances and no held-out
    /// case leaks into its own training split.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let mut seen = 0usize;
        for fold in &self.folds {
            if fold.train.iter().any(|i| i.case == fold.case) {
                return Err(Error::Validation {
                    row: 0,
                    msg: format!(
                        "fold for case {} contains its own instances in training",
                        fold.case
                    ),
                });
            }
            if fold.train.len() + fold.test.len() != dataset.instances().len() {
                return Err(Error::Validation {
                    row: 0,
                    msg: "fold does not cover all instances".into(),
                });
            }
            seen += fold.test.len();
        }
        if seen != dataset.instances().len() {
            return Err(Error::Validation {
                row: 0,
                msg: "folds do not partition the instances".into(),
            });
        }
        Ok(())
    }
}

/// Which combination model a LOOCV run fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelKind {
    Logistic {
        config: FeatureConfig,
        l2: f64,
        /// When set (squash mode), the strength is re-optimized on every
        /// training split over this grid.
        squash_grid: Option<Vec<f64>>,
        inner_folds: usize,
    },
    Bayes {
        mcmc: McmcSettings,
    },
}

impl ModelKind {
    pub fn logistic(config: FeatureConfig, l2: f64) -> ModelKind {
        ModelKind::Logistic {
            config,
            l2,
            squash_grid: None,
            inner_folds: 5,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Logistic { .. } => "logistic",
            ModelKind::Bayes { .. } => "bayes",
        }
    }
}

/// Outcome of one evaluated instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub instance: String,
    pub test_case: String,
    pub truth: usize,
    pub predicted: usize,
    pub correct: bool,
    /// Set when the prediction was an argmax tie (broken toward the lower
    /// label) or the judgment itself carried a tie flag.
    pub tie: bool,
}

/// Cross-validated evaluation of one team.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub team: TeamSpec,
    pub member_kinds: Vec<Kind>,
    pub model: String,
    pub n_evaluations: usize,
    pub accuracy: f64,
    pub sem: f64,
    pub per_case_outcomes: Vec<InstanceOutcome>,
}

impl EvalReport {
    fn from_outcomes(
        team: &TeamSpec,
        kinds: Vec<Kind>,
        model: &str,
        outcomes: Vec<InstanceOutcome>,
    ) -> EvalReport {
        let n = outcomes.len();
        let accuracy = outcomes.iter().filter(|o| o.correct).count() as f64 / n.max(1) as f64;
        EvalReport {
            team: team.clone(),
            member_kinds: kinds,
            model: model.to_string(),
            n_evaluations: n,
            accuracy,
            sem: stats::binomial_sem(accuracy, n),
            per_case_outcomes: outcomes,
        }
    }
}

/// Leave-one-test-case-out evaluation of a team.
///
/// Single-member teams skip model fitting entirely and score the member's
/// raw choices; teams fit on each fold's training instances and predict the
/// held-out case's instances.
pub fn loocv(
    dataset: &Dataset,
    team: &TeamSpec,
    kind: &ModelKind,
    seed: u64,
) -> Result<EvalReport> {
    let idx = team.resolve(dataset)?;
    let member_kinds: Vec<Kind> = idx.iter().map(|&i| dataset.teammates()[i].kind).collect();

    if idx.len() == 1 {
        // individual teammates: testing phase only
        let tm = idx[0];
        let mut outcomes = Vec::new();
        for inst in dataset.instances() {
            let truth = dataset.truth(inst.case);
            match dataset.judgment_at(*inst, tm) {
                Some(j) => outcomes.push(InstanceOutcome {
                    instance: dataset.instance_id(*inst),
                    test_case: dataset.cases()[inst.case].clone(),
                    truth,
                    predicted: j.choice,
                    correct: j.choice == truth,
                    tie: j.tie,
                }),
                None => log::warn!(
                    "teammate '{}' has no judgment for instance {}; skipped",
                    team.members[0],
                    dataset.instance_id(*inst)
                ),
            }
        }
        if outcomes.is_empty() {
            return Err(Error::Input("no instances to evaluate".into()));
        }
        return Ok(EvalReport::from_outcomes(
            team,
            member_kinds,
            "individual",
            outcomes,
        ));
    }

    let plan = FoldPlan::new(dataset);
    plan.validate(dataset)?;

    let fold_results: Vec<Result<Vec<InstanceOutcome>>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(fold_no, fold)| {
            let fold_seed = seed.wrapping_add((fold_no as u64).wrapping_mul(0x9E3779B97F4A7C15));
            eval_fold(dataset, team, &idx, kind, fold, fold_seed).map_err(|e| match e {
                Error::Fit(msg) => Error::Fit(format!(
                    "fold {fold_no} (held-out case '{}'): {msg}",
                    dataset.cases()[fold.case]
                )),
                other => other,
            })
        })
        .collect();

    let mut outcomes = Vec::with_capacity(dataset.instances().len());
    for r in fold_results {
        outcomes.extend(r?);
    }
    Ok(EvalReport::from_outcomes(
        team,
        member_kinds,
        kind.label(),
        outcomes,
    ))
}

fn eval_fold(
    dataset: &Dataset,
    team: &TeamSpec,
    idx: &[usize],
    kind: &ModelKind,
    fold: &Fold,
    seed: u64,
) -> Result<Vec<InstanceOutcome>> {
    match kind {
        ModelKind::Logistic {
            config,
            l2,
            squash_grid,
            inner_folds,
        } => {
            let opts = FitOptions {
                l2: *l2,
                seed,
                ..FitOptions::default()
            };
            let model = match (config.mode, squash_grid) {
                (Mode::Squash, Some(grid)) => {
                    logistic::fit_squash(
                        dataset,
                        idx,
                        config,
                        grid,
                        &fold.train,
                        &opts,
                        *inner_folds,
                    )?
                    .0
                }
                _ => logistic::fit_team(dataset, idx, config, &fold.train, &opts)?,
            };
            let test_design = build_design(dataset, idx, &model.config, &fold.test)?;
            let mut out = Vec::with_capacity(fold.test.len());
            for (inst, row) in fold.test.iter().zip(&test_design.rows) {
                let (label, _, tie) = model.predict(&row.x)?;
                // binary models predict option 0's probability; labels are
                // already in class space either way
                let truth = dataset.truth(inst.case);
                out.push(InstanceOutcome {
                    instance: dataset.instance_id(*inst),
                    test_case: dataset.cases()[inst.case].clone(),
                    truth,
                    predicted: label,
                    correct: label == truth,
                    tie,
                });
            }
            Ok(out)
        }
        ModelKind::Bayes { mcmc } => {
            let samples = bayes::fit_posterior_on(dataset, team, &fold.train, mcmc, seed)?;
            let obs = bayes::observe_case(dataset, team, fold.case, &fold.test)?;
            let probs = bayes::predict_posterior(&samples, &obs)?;
            let (label, tie) = argmax_tied(&probs);
            let truth = dataset.truth(fold.case);
            Ok(fold
                .test
                .iter()
                .map(|inst| InstanceOutcome {
                    instance: dataset.instance_id(*inst),
                    test_case: dataset.cases()[inst.case].clone(),
                    truth,
                    predicted: label,
                    correct: label == truth,
                    tie,
                })
                .collect())
        }
    }
}

fn argmax_tied(probs: &[f64]) -> (usize, bool) {
    let best = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let label = probs.iter().position(|&p| p == best).unwrap();
    let tie = probs.iter().filter(|&&p| p == best).count() > 1;
    (label, tie)
}

/// Accuracy after shuffling the predicted labels across instances (a
/// chance-level control: scores should drop to about 1/L).
pub fn shuffled_accuracy(report: &EvalReport, seed: u64) -> f64 {
    let mut predictions: Vec<usize> = report
        .per_case_outcomes
        .iter()
        .map(|o| o.predicted)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..predictions.len()).rev() {
        let j = rng.random_range(0..=i);
        predictions.swap(i, j);
    }
    let correct = report
        .per_case_outcomes
        .iter()
        .zip(&predictions)
        .filter(|(o, &p)| o.truth == p)
        .count();
    correct as f64 / predictions.len().max(1) as f64
}

/// All nonempty teammate subsets, ordered by size then lexicographically,
/// optionally restricted to those containing `must_include`.
pub fn enumerate_teams(teammates: &[String], must_include: Option<&str>) -> Result<Vec<TeamSpec>> {
    if teammates.is_empty() {
        return Err(Error::Config("no teammates to enumerate".into()));
    }
    if teammates.len() > 16 {
        return Err(Error::Config(format!(
            "{} teammates would enumerate {} teams; pass an explicit team list instead",
            teammates.len(),
            (1u64 << teammates.len()) - 1
        )));
    }
    if let Some(name) = must_include {
        if !teammates.iter().any(|t| t == name) {
            return Err(Error::Config(format!(
                "must-include teammate '{name}' is unknown"
            )));
        }
    }
    let k = teammates.len();
    let mut teams = Vec::new();
    for mask in 1u32..(1 << k) {
        let members: Vec<String> = (0..k)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| teammates[i].clone())
            .collect();
        if let Some(name) = must_include {
            if !members.iter().any(|m| m == name) {
                continue;
            }
        }
        teams.push(TeamSpec { members });
    }
    teams.sort_by(|a, b| {
        a.members
            .len()
            .cmp(&b.members.len())
            .then_with(|| a.members.cmp(&b.members))
    });
    Ok(teams)
}

// ---- calibration ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub accuracy: f64,
}

/// Confidence-sorted equal-count bins with their mean accuracy, plus the
/// least-squares slope of accuracy on bin index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub teammate: String,
    pub bins: Vec<CalBin>,
    pub slope: f64,
}

/// Bin a teammate's judgments by confidence. Bins are equal-count except
/// that tied confidence values never split across a boundary (discrete
/// rating scales collapse to one bin per level).
pub fn calibration(dataset: &Dataset, teammate: &str, n_bins: usize) -> Result<CalibrationTable> {
    if n_bins < 2 {
        return Err(Error::Config("calibration needs at least 2 bins".into()));
    }
    let tm = dataset
        .teammate_index(teammate)
        .ok_or_else(|| Error::Input(format!("unknown teammate '{teammate}'")))?;
    let mut points: Vec<(f64, bool)> = dataset
        .judgments()
        .iter()
        .filter(|j| j.teammate == dataset.teammates()[tm].name)
        .map(|j| {
            (
                j.confidence,
                j.choice == dataset.truth(dataset.case_of(&j.test_case).unwrap()),
            )
        })
        .collect();
    if points.len() < n_bins {
        return Err(Error::Input(format!(
            "teammate '{teammate}' has {} judgments, fewer than {n_bins} bins",
            points.len()
        )));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let n = points.len();
    let mut bins = Vec::new();
    let mut start = 0usize;
    for b in 0..n_bins {
        if start >= n {
            break;
        }
        let target = if b == n_bins - 1 {
            n
        } else {
            ((b + 1) * n) / n_bins
        };
        let mut end = target.max(start + 1);
        // a cut inside a tie run snaps to the nearer run edge so equal
        // confidences never split across bins
        if end < n && points[end].0 == points[end - 1].0 {
            let tied = points[end].0;
            let mut run_start = end;
            while run_start > 0 && points[run_start - 1].0 == tied {
                run_start -= 1;
            }
            let mut run_end = end;
            while run_end < n && points[run_end].0 == tied {
                run_end += 1;
            }
            end = if run_start > start && target - run_start <= run_end - target {
                run_start
            } else {
                run_end
            };
        }
        let slice = &points[start..end];
        let correct = slice.iter().filter(|(_, ok)| *ok).count();
        bins.push(CalBin {
            lo: slice[0].0,
            hi: slice[slice.len() - 1].0,
            count: slice.len(),
            accuracy: correct as f64 / slice.len() as f64,
        });
        start = end;
    }
    let xs: Vec<f64> = (0..bins.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.accuracy).collect();
    let slope = if bins.len() > 1 {
        stats::ls_slope(&xs, &ys)
    } else {
        0.0
    };
    Ok(CalibrationTable {
        teammate: teammate.to_string(),
        bins,
        slope,
    })
}

// ---- diversity -----------------------------------------------------------------

/// Pairwise Spearman correlations of per-case item difficulty.
/// `None` marks pairs whose correlation is undefined (constant difficulty).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityMatrix {
    pub teammates: Vec<String>,
    pub rho: Vec<Vec<Option<f64>>>,
}

/// Per-case difficulty for one teammate: humans use mean accuracy over their
/// instances; machines use the signed score margin (score of the correct
/// class minus the best other class, or +/- confidence without class
/// scores). Higher always means easier.
pub fn item_difficulty(dataset: &Dataset, teammate: usize) -> Vec<Option<f64>> {
    let tm = &dataset.teammates()[teammate];
    (0..dataset.cases().len())
        .map(|case| {
            let rows = dataset.rows_for(case, teammate);
            if rows.is_empty() {
                return None;
            }
            let z = dataset.truth(case);
            match tm.kind {
                Kind::Human => {
                    let correct = rows
                        .iter()
                        .filter(|&&r| dataset.judgments()[r].choice == z)
                        .count();
                    Some(correct as f64 / rows.len() as f64)
                }
                Kind::Machine => {
                    let j = &dataset.judgments()[rows[0]];
                    match &j.class_scores {
                        Some(scores) => {
                            let best_other = scores
                                .iter()
                                .enumerate()
                                .filter(|(k, _)| *k != z)
                                .map(|(_, &s)| s)
                                .fold(f64::NEG_INFINITY, f64::max);
                            Some(scores[z] - best_other)
                        }
                        None => Some(if j.choice == z {
                            j.confidence
                        } else {
                            -j.confidence
                        }),
                    }
                }
            }
        })
        .collect()
}

pub fn diversity(dataset: &Dataset, teammates: &[String]) -> Result<DiversityMatrix> {
    if teammates.len() < 2 {
        return Err(Error::Input("diversity needs at least 2 teammates".into()));
    }
    let idx: Vec<usize> = teammates
        .iter()
        .map(|name| {
            dataset
                .teammate_index(name)
                .ok_or_else(|| Error::Input(format!("unknown teammate '{name}'")))
        })
        .collect::<Result<_>>()?;
    let difficulty: Vec<Vec<Option<f64>>> =
        idx.iter().map(|&t| item_difficulty(dataset, t)).collect();

    let k = teammates.len();
    let mut rho = vec![vec![None; k]; k];
    for i in 0..k {
        rho[i][i] = Some(1.0);
        for j in i + 1..k {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for case in 0..dataset.cases().len() {
                if let (Some(a), Some(b)) = (difficulty[i][case], difficulty[j][case]) {
                    xs.push(a);
                    ys.push(b);
                }
            }
            let r = match stats::spearman(&xs, &ys) {
                Ok(r) => Some(r),
                Err(Error::Degenerate(_)) => None,
                Err(e) => return Err(e),
            };
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    Ok(DiversityMatrix {
        teammates: teammates.to_vec(),
        rho,
    })
}
