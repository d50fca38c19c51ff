//! Label prediction from posterior draws.
//!
//! For a held-out case the label posterior marginalizes the latent human
//! scores with tensor Gauss-Hermite quadrature (the latent coordinates are
//! conditionally independent Gaussians given the machine scores and the
//! candidate label) and averages the per-draw label probabilities.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, TeamSpec};
use crate::error::{Error, Result};

use super::mcmc::{resolve_pair, Draw, PosteriorSamples};
use super::{ordered_logistic_log_pmf, HUMAN_B, HUMAN_SIGMA};

/// Everything observed about one test case at prediction time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseObservation {
    /// The machine's per-class scores.
    pub machine_scores: Vec<f64>,
    /// Human observations as (choice, rating) pairs; several instances of
    /// the case enter as a product of likelihoods.
    pub humans: Vec<(usize, usize)>,
}

/// Posterior label probabilities for one case, marginalized over draws.
pub fn predict_posterior(samples: &PosteriorSamples, obs: &CaseObservation) -> Result<Vec<f64>> {
    if samples.draws.is_empty() {
        return Err(Error::Input("no posterior draws".into()));
    }
    if obs.machine_scores.len() != samples.l {
        return Err(Error::Input(format!(
            "machine_scores has {} entries, expected L={}",
            obs.machine_scores.len(),
            samples.l
        )));
    }
    if obs.humans.is_empty() {
        return Err(Error::Input(
            "missing the human member's judgment for this case".into(),
        ));
    }
    for &(y, r) in &obs.humans {
        if y >= samples.l {
            return Err(Error::Input(format!("human choice {y} out of range")));
        }
        if r >= samples.n_ratings {
            return Err(Error::Input(format!(
                "human rating {r} exceeds the rating scale (R={})",
                samples.n_ratings
            )));
        }
    }

    let mut acc = vec![0.0; samples.l];
    for draw in &samples.draws {
        let lp: Vec<f64> = (0..samples.l)
            .map(|z| case_log_lik(draw, samples.tau, obs, z))
            .collect();
        let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lp.iter().map(|&v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (a, e) in acc.iter_mut().zip(exps) {
            *a += e / sum;
        }
    }
    let n = samples.draws.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// log p(machine scores, human observations | z, draw); the uniform label
/// prior is constant and drops out.
fn case_log_lik(draw: &Draw, tau: f64, obs: &CaseObservation, z: usize) -> f64 {
    let mut lp = 0.0;
    for (j, &s) in obs.machine_scores.iter().enumerate() {
        let mu = if j == z { draw.a_m } else { draw.b_m };
        let d = (s - mu) / draw.sigma_m;
        lp += -draw.sigma_m.ln() - 0.5 * d * d;
    }
    let cond_sd = (1.0 - draw.rho * draw.rho).sqrt() * HUMAN_SIGMA;
    let mean: Vec<f64> = (0..obs.machine_scores.len())
        .map(|j| {
            let mu_h = if j == z { draw.a_h } else { HUMAN_B };
            let mu_m = if j == z { draw.a_m } else { draw.b_m };
            mu_h + draw.rho * HUMAN_SIGMA * (obs.machine_scores[j] - mu_m) / draw.sigma_m
        })
        .collect();
    for &(y, r) in &obs.humans {
        lp += human_log_lik(draw, tau, &mean, cond_sd, y, r);
    }
    lp
}

/// ln E[softmax_tau(y | pi) * OrderedLogistic(r | pi_y)] over the bivariate
/// conditional normal of the latent scores.
fn human_log_lik(draw: &Draw, tau: f64, mean: &[f64], sd: f64, y: usize, r: usize) -> f64 {
    let s2 = std::f64::consts::SQRT_2 * sd;
    let mut best = f64::NEG_INFINITY;
    let mut terms = Vec::with_capacity(GH_NODES.len() * GH_NODES.len());
    for (i, &ti) in GH_NODES.iter().enumerate() {
        let pi0 = mean[0] + s2 * ti;
        for (j, &tj) in GH_NODES.iter().enumerate() {
            let pi1 = mean[1] + s2 * tj;
            let chosen = if y == 0 { pi0 } else { pi1 };
            let other = if y == 0 { pi1 } else { pi0 };
            let lg = -log1p_exp((other - chosen) / tau)
                + ordered_logistic_log_pmf(r, chosen, &draw.cutpoints, draw.delta)
                + GH_LOG_WEIGHTS[i]
                + GH_LOG_WEIGHTS[j];
            if lg > best {
                best = lg;
            }
            terms.push(lg);
        }
    }
    if best == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - best).exp()).sum();
    best + sum.ln() - std::f64::consts::PI.ln()
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gather one case's observations for a team from a dataset (used by the
/// cross-validation driver).
pub fn observe_case(
    dataset: &Dataset,
    team: &TeamSpec,
    case: usize,
    instances: &[Instance],
) -> Result<CaseObservation> {
    let (machine_idx, human_idx) = resolve_pair(dataset, team)?;
    let machine = dataset
        .judgment_at(Instance { case, rep: 0 }, machine_idx)
        .ok_or_else(|| {
            Error::Input(format!(
                "machine has no judgment for case '{}'",
                dataset.cases()[case]
            ))
        })?;
    let machine_scores = machine
        .class_scores
        .clone()
        .ok_or_else(|| Error::Input("machine judgment lacks class_scores".into()))?;
    let mut humans = Vec::new();
    let mut seen = Vec::new();
    for inst in instances.iter().filter(|i| i.case == case) {
        let rows = dataset.rows_for(case, human_idx);
        if rows.is_empty() {
            continue;
        }
        let row = rows[inst.rep % rows.len()];
        if seen.contains(&row) {
            continue;
        }
        seen.push(row);
        let j = &dataset.judgments()[row];
        humans.push((j.choice, j.confidence as usize));
    }
    Ok(CaseObservation {
        machine_scores,
        humans,
    })
}

// 24-point Gauss-Hermite rule (physicists' convention).
const GH_NODES: [f64; 24] = [
    -6.01592556142574,
    -5.259382927668044,
    -4.625662756423788,
    -4.053664402448149,
    -3.5200068130345246,
    -3.0125461375655647,
    -2.523881017011427,
    -2.049003573661699,
    -1.5842500109616942,
    -1.1267608176112451,
    -0.6741711070372123,
    -0.22441454747251557,
    0.22441454747251557,
    0.6741711070372123,
    1.1267608176112451,
    1.5842500109616942,
    2.049003573661699,
    2.523881017011427,
    3.0125461375655647,
    3.5200068130345246,
    4.053664402448149,
    4.625662756423788,
    5.259382927668044,
    6.01592556142574,
];

const GH_WEIGHTS: [f64; 24] = [
    1.6643684964891008e-16,
    6.584620243078167e-13,
    3.0462542699875555e-10,
    4.018971174941438e-08,
    2.1582457049023414e-06,
    5.688691636404392e-05,
    0.0008236924826884169,
    0.007048355810072673,
    0.037445470503230736,
    0.12773962178455917,
    0.2861795353464429,
    0.42693116386869934,
    0.42693116386869934,
    0.2861795353464429,
    0.12773962178455917,
    0.037445470503230736,
    0.007048355810072673,
    0.0008236924826884169,
    5.688691636404392e-05,
    2.1582457049023414e-06,
    4.018971174941438e-08,
    3.0462542699875555e-10,
    6.584620243078167e-13,
    1.6643684964891008e-16,
];

// ln of the weights, computed once.
static GH_LOG_WEIGHTS: std::sync::LazyLock<[f64; 24]> =
    std::sync::LazyLock::new(|| GH_WEIGHTS.map(f64::ln));
