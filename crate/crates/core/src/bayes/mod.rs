//! Bayesian combination model.
//!
//! Teammates' confidence scores for each (case, class) coordinate are
//! correlated Gaussians whose means depend on whether the class is the true
//! label. Machines expose their scores directly; a human's latent scores
//! drive their choice through a tempered softmax and their discrete rating
//! through an ordered-logistic link.
//!
//! The same generative process serves three roles: sampling synthetic
//! datasets ([`generate`]), posterior inference over its parameters
//! ([`fit_posterior`]), and label prediction for held-out cases
//! ([`predict_posterior`]).

mod mcmc;
mod predict;

pub use mcmc::{
    fit_posterior, fit_posterior_on, Diagnostics, Draw, McmcSettings, PosteriorSamples,
};
pub use predict::{observe_case, predict_posterior, CaseObservation};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Judgment, Kind};
use crate::error::{Error, Result};

/// Identifiability constants for human teammates (their rating scale has no
/// natural units, so the latent location/scale is pinned).
pub const HUMAN_B: f64 = 0.0;
pub const HUMAN_SIGMA: f64 = 1.0;

/// Generative parameters of one teammate: latent scores at the true class
/// center on `a`, at other classes on `b`, with spread `sigma`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeammateParams {
    pub name: String,
    pub kind: Kind,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

/// Full parameter set of the combination model.
///
/// `rho` is the teammate-pair correlation matrix (a single scalar in the
/// two-member case, entered via [`BayesParams::two_member`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesParams {
    pub teammates: Vec<TeammateParams>,
    pub rho: Vec<Vec<f64>>,
    pub tau: f64,
    pub cutpoints: Vec<f64>,
    pub delta: f64,
    pub dirichlet_alpha: f64,
}

impl BayesParams {
    pub const DEFAULT_TAU: f64 = 0.05;
    pub const DEFAULT_DELTA: f64 = 5.0;

    pub fn default_cutpoints() -> Vec<f64> {
        vec![1.0 / 3.0, 2.0 / 3.0]
    }

    /// The machine-plus-human pairing the posterior machinery works with.
    pub fn two_member(machine: TeammateParams, human: TeammateParams, rho: f64) -> BayesParams {
        BayesParams {
            teammates: vec![machine, human],
            rho: vec![vec![1.0, rho], vec![rho, 1.0]],
            tau: Self::DEFAULT_TAU,
            cutpoints: Self::default_cutpoints(),
            delta: Self::DEFAULT_DELTA,
            dirichlet_alpha: 1.0,
        }
    }

    pub fn n_ratings(&self) -> usize {
        self.cutpoints.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.teammates.len();
        if k == 0 {
            return Err(Error::Config("at least one teammate is required".into()));
        }
        for t in &self.teammates {
            if !t.sigma.is_finite() || t.sigma <= 0.0 {
                return Err(Error::Config(format!(
                    "sigma for '{}' must be positive, got {}",
                    t.name, t.sigma
                )));
            }
            if !t.a.is_finite() || !t.b.is_finite() {
                return Err(Error::Config(format!(
                    "a/b for '{}' must be finite",
                    t.name
                )));
            }
        }
        if self.rho.len() != k || self.rho.iter().any(|row| row.len() != k) {
            return Err(Error::Config(format!("rho must be a {k}x{k} matrix")));
        }
        for i in 0..k {
            if (self.rho[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::Config("rho diagonal must be 1".into()));
            }
            for j in 0..k {
                let r = self.rho[i][j];
                if !r.is_finite() || r.abs() > 1.0 {
                    return Err(Error::Config(format!("correlation {r} outside [-1, 1]")));
                }
                if (r - self.rho[j][i]).abs() > 1e-12 {
                    return Err(Error::Config("rho must be symmetric".into()));
                }
            }
        }
        if corr_cholesky(&self.rho).is_none() {
            return Err(Error::Config("rho is not positive definite".into()));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        validate_cutpoints(&self.cutpoints)?;
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !self.dirichlet_alpha.is_finite() || self.dirichlet_alpha <= 0.0 {
            return Err(Error::Config("dirichlet alpha must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn validate_cutpoints(c: &[f64]) -> Result<()> {
    if c.is_empty() {
        return Err(Error::Config("at least one cutpoint is required".into()));
    }
    for w in c.windows(2) {
        // NaN must fail the ordering check too
        if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(format!(
                "cutpoints must be strictly increasing, got {c:?}"
            )));
        }
    }
    if c.iter().any(|&x| !x.is_finite()) {
        return Err(Error::Config("cutpoints must be finite".into()));
    }
    Ok(())
}

fn corr_cholesky(r: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = r.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = r[i][j];
            for m in 0..j {
                sum -= l[i][m] * l[j][m];
            }
            if i == j {
                if sum <= 1e-12 {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

// ---- ordered logistic --------------------------------------------------------

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Rating probabilities under the ordered-logistic link:
/// P(r <= k) = sigmoid(delta * (c_k - eta)).
pub fn ordered_logistic_pmf(eta: f64, cutpoints: &[f64], delta: f64) -> Result<Vec<f64>> {
    validate_cutpoints(cutpoints)?;
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::Config(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !eta.is_finite() {
        return Err(Error::Input(format!("eta must be finite, got {eta}")));
    }
    let r = cutpoints.len() + 1;
    let mut pmf = Vec::with_capacity(r);
    let mut prev = 0.0;
    for &c in cutpoints {
        let cdf = sigmoid(delta * (c - eta));
        pmf.push(cdf - prev);
        prev = cdf;
    }
    pmf.push(1.0 - prev);
    Ok(pmf)
}

/// log P(r = rating), computed without forming the pmf (stable for sharp
/// delta and extreme eta).
pub(crate) fn ordered_logistic_log_pmf(
    rating: usize,
    eta: f64,
    cutpoints: &[f64],
    delta: f64,
) -> f64 {
    let r = cutpoints.len() + 1;
    debug_assert!(rating < r);
    if rating == 0 {
        // ln sigmoid(a0)
        -log1p_exp(-delta * (cutpoints[0] - eta))
    } else if rating == r - 1 {
        // ln (1 - sigmoid(a_{R-2})) = ln sigmoid(-a_{R-2})
        -log1p_exp(delta * (cutpoints[r - 2] - eta))
    } else {
        // ln (sigmoid(a_hi) - sigmoid(a_lo)) with a_hi > a_lo
        let a_hi = delta * (cutpoints[rating] - eta);
        let a_lo = delta * (cutpoints[rating - 1] - eta);
        a_lo + (a_hi - a_lo).exp_m1().ln() - log1p_exp(a_hi) - log1p_exp(a_lo)
    }
}

// ---- generator -----------------------------------------------------------------

/// Sample a synthetic dataset from the generative model: one judgment per
/// case for every teammate (machines carry their full score vector, humans a
/// tempered-softmax choice plus ordered-logistic rating).
pub fn generate(params: &BayesParams, n_cases: usize, l: usize, seed: u64) -> Result<Dataset> {
    generate_with_reps(params, n_cases, l, 1, seed)
}

/// As [`generate`], with `human_reps` independent human observation rows per
/// case (each an independent latent draw given the case's machine scores).
pub fn generate_with_reps(
    params: &BayesParams,
    n_cases: usize,
    l: usize,
    human_reps: usize,
    seed: u64,
) -> Result<Dataset> {
    params.validate()?;
    if n_cases == 0 {
        return Err(Error::Config("n_cases must be at least 1".into()));
    }
    if l < 2 {
        return Err(Error::Config(format!("L must be at least 2, got {l}")));
    }
    if human_reps == 0 {
        return Err(Error::Config("human_reps must be at least 1".into()));
    }
    let k = params.teammates.len();
    let chol = corr_cholesky(&params.rho).expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_cases.to_string().len();

    let mut truth = Vec::with_capacity(n_cases);
    let mut judgments = Vec::new();
    for i in 0..n_cases {
        let case = format!("c{:0width$}", i, width = width);
        // symmetric Dirichlet(alpha) makes every label equally likely
        let z = rng.random_range(0..l);
        truth.push((case.clone(), z));

        // latent scores: for each class coordinate, a correlated draw across
        // teammates (machine coordinates are observed, human ones latent)
        let mut scores = vec![vec![0.0; l]; k];
        for j in 0..l {
            let eps: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            for (t, tm) in params.teammates.iter().enumerate() {
                let mu = if j == z { tm.a } else { tm.b };
                let mut corr = 0.0;
                for m in 0..=t {
                    corr += chol[t][m] * eps[m];
                }
                scores[t][j] = mu + tm.sigma * corr;
            }
        }

        for (t, tm) in params.teammates.iter().enumerate() {
            match tm.kind {
                Kind::Machine => {
                    let s = &scores[t];
                    let choice = argmax(s);
                    let margin = top_margin(s, choice);
                    judgments.push(Judgment {
                        test_case: case.clone(),
                        teammate: tm.name.clone(),
                        kind: Kind::Machine,
                        choice,
                        confidence: margin,
                        class_scores: Some(s.clone()),
                        tie: false,
                    });
                }
                Kind::Human => {
                    for rep in 0..human_reps {
                        // each rep is a fresh latent draw conditioned on the
                        // machine coordinates of this case
                        let latent = if rep == 0 {
                            scores[t].clone()
                        } else {
                            resample_human(&params.teammates, &params.rho, t, &scores, z, &mut rng)
                        };
                        let choice = sample_tempered_softmax(&latent, params.tau, &mut rng);
                        let pmf =
                            ordered_logistic_pmf(latent[choice], &params.cutpoints, params.delta)?;
                        let rating = sample_categorical(&pmf, &mut rng);
                        judgments.push(Judgment {
                            test_case: case.clone(),
                            teammate: tm.name.clone(),
                            kind: Kind::Human,
                            choice,
                            confidence: rating as f64,
                            class_scores: None,
                            tie: false,
                        });
                    }
                }
            }
        }
    }

    Dataset::new(l, truth, judgments)
}

/// Redraw teammate `t`'s coordinates conditioned on every *machine*
/// teammate's observed coordinates (the practical case is one machine and
/// one human, where this is the textbook bivariate conditional).
fn resample_human(
    teammates: &[TeammateParams],
    rho: &[Vec<f64>],
    t: usize,
    scores: &[Vec<f64>],
    z: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let machines: Vec<usize> = teammates
        .iter()
        .enumerate()
        .filter(|(_, tm)| tm.kind == Kind::Machine)
        .map(|(i, _)| i)
        .collect();
    let l = scores[t].len();
    let tm = &teammates[t];
    let mut out = vec![0.0; l];
    if machines.len() == 1 {
        let m = machines[0];
        let r = rho[t][m];
        let mscale = teammates[m].sigma;
        let sd = (1.0 - r * r).sqrt() * tm.sigma;
        for j in 0..l {
            let mu_t = if j == z { tm.a } else { tm.b };
            let mu_m = if j == z {
                teammates[m].a
            } else {
                teammates[m].b
            };
            let mean = mu_t + r * tm.sigma * (scores[m][j] - mu_m) / mscale;
            let e: f64 = rng.sample(StandardNormal);
            out[j] = mean + sd * e;
        }
    } else {
        // several machines: fall back to an unconditional draw for this
        // teammate (reps beyond the first lose the cross-correlation)
        for j in 0..l {
            let mu_t = if j == z { tm.a } else { tm.b };
            let e: f64 = rng.sample(StandardNormal);
            out[j] = mu_t + tm.sigma * e;
        }
    }
    out
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn top_margin(v: &[f64], best: usize) -> f64 {
    let mut second = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if i != best && x > second {
            second = x;
        }
    }
    if second.is_finite() {
        v[best] - second
    } else {
        v[best]
    }
}

fn sample_tempered_softmax(latent: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> usize {
    let m = latent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = latent.iter().map(|&x| ((x - m) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    sample_categorical(&probs, rng)
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
