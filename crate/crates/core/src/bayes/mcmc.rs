//! Posterior inference for the two-member (machine + human) binary model.
//!
//! Metropolis-within-Gibbs: scalar parameters and the per-instance latent
//! human scores are updated with Gaussian random-walk proposals whose scales
//! adapt during warmup toward a 20-40% acceptance rate. Constrained
//! parameters are sampled on unconstrained coordinates (log for scales,
//! atanh for the correlation, ordered stick-breaking for cutpoints) with the
//! matching Jacobian terms in the target density.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, Kind, TeamSpec};
use crate::error::{Error, Result};

use super::{ordered_logistic_log_pmf, HUMAN_B, HUMAN_SIGMA};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSettings {
    pub warmup: usize,
    pub chains: usize,
    pub samples: usize,
    /// Number of rating levels; derived from the data when absent.
    pub n_ratings: Option<usize>,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            warmup: 500,
            chains: 3,
            samples: 25,
            n_ratings: None,
        }
    }
}

/// One posterior draw of the sampled parameters (b_H and sigma_H are fixed
/// for identifiability; tau is fixed at its configured value).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Draw {
    pub a_m: f64,
    pub b_m: f64,
    pub sigma_m: f64,
    pub a_h: f64,
    pub rho: f64,
    pub cutpoints: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Post-warmup parameter-block acceptance rate per chain.
    pub param_acceptance: Vec<f64>,
    /// Post-warmup latent-block acceptance rate per chain.
    pub latent_acceptance: Vec<f64>,
    /// Split R-hat per constrained scalar parameter.
    pub split_rhat: Vec<(String, f64)>,
    /// True when every split R-hat is at most 1.1.
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub machine: String,
    pub human: String,
    pub l: usize,
    pub n_ratings: usize,
    pub tau: f64,
    pub chains: usize,
    pub warmup: usize,
    pub samples_per_chain: usize,
    /// Draws ordered by chain, then sweep.
    pub draws: Vec<Draw>,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn to_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Find the (machine, human) teammate indices of a two-member team.
pub(crate) fn resolve_pair(dataset: &Dataset, team: &TeamSpec) -> Result<(usize, usize)> {
    let idx = team.resolve(dataset)?;
    if idx.len() != 2 {
        return Err(Error::Input(format!(
            "the Bayesian model pairs exactly 2 teammates, got {}",
            idx.len()
        )));
    }
    let kinds: Vec<Kind> = idx.iter().map(|&i| dataset.teammates()[i].kind).collect();
    match (kinds[0], kinds[1]) {
        (Kind::Machine, Kind::Human) => Ok((idx[0], idx[1])),
        (Kind::Human, Kind::Machine) => Ok((idx[1], idx[0])),
        _ => Err(Error::Input(
            "the Bayesian model needs one machine-kind and one human-kind teammate".into(),
        )),
    }
}

/// Observed training data in local case numbering.
pub(crate) struct Observed {
    pub truth: Vec<usize>,
    pub machine: Vec<Vec<f64>>,
    pub human: Vec<HumanOb>,
    pub n_ratings: usize,
}

pub(crate) struct HumanOb {
    pub case: usize,
    pub y: usize,
    pub r: usize,
}

pub(crate) fn build_observed(
    dataset: &Dataset,
    machine_idx: usize,
    human_idx: usize,
    instances: &[Instance],
    n_ratings: Option<usize>,
) -> Result<Observed> {
    if dataset.n_classes() != 2 {
        return Err(Error::Input(format!(
            "the Bayesian model is restricted to binary tasks, got L={}",
            dataset.n_classes()
        )));
    }
    if instances.is_empty() {
        return Err(Error::Input("no training instances".into()));
    }
    let machine_name = &dataset.teammates()[machine_idx].name;
    let mut cases: Vec<usize> = Vec::new();
    for inst in instances {
        if !cases.contains(&inst.case) {
            cases.push(inst.case);
        }
    }
    let mut truth = Vec::with_capacity(cases.len());
    let mut machine = Vec::with_capacity(cases.len());
    for &case in &cases {
        truth.push(dataset.truth(case));
        let j = dataset
            .judgment_at(Instance { case, rep: 0 }, machine_idx)
            .ok_or_else(|| {
                Error::Input(format!(
                    "machine '{machine_name}' has no judgment for case '{}'",
                    dataset.cases()[case]
                ))
            })?;
        let scores = j.class_scores.clone().ok_or_else(|| {
            Error::Input(format!(
            "machine '{machine_name}' must provide class_scores for the Bayesian model (case '{}')",
            dataset.cases()[case]
        ))
        })?;
        machine.push(scores);
    }

    let mut human = Vec::new();
    let mut seen_rows = Vec::new();
    let mut max_rating = 0usize;
    for inst in instances {
        let local = cases.iter().position(|&c| c == inst.case).unwrap();
        let rows = dataset.rows_for(inst.case, human_idx);
        if rows.is_empty() {
            continue; // machine-only case still informs the machine block
        }
        let row = rows[inst.rep % rows.len()];
        if seen_rows.contains(&row) {
            continue;
        }
        seen_rows.push(row);
        let j = &dataset.judgments()[row];
        if j.confidence.fract() != 0.0 {
            return Err(Error::Input(format!(
                "human rating {} is not an integer level (case '{}')",
                j.confidence, j.test_case
            )));
        }
        let r = j.confidence as usize;
        max_rating = max_rating.max(r);
        human.push(HumanOb {
            case: local,
            y: j.choice,
            r,
        });
    }
    if human.is_empty() {
        return Err(Error::Input(
            "no human observations in the training set".into(),
        ));
    }
    let n_ratings = match n_ratings {
        Some(r) => r,
        None => (max_rating + 1).max(2),
    };
    for ob in &human {
        if ob.r >= n_ratings {
            return Err(Error::Input(format!(
                "human rating {} exceeds the rating scale (R={n_ratings})",
                ob.r
            )));
        }
    }
    Ok(Observed {
        truth,
        machine,
        human,
        n_ratings,
    })
}

// ---- target density -----------------------------------------------------------

const PRIOR_SD: f64 = 10.0; // a, b ~ N(0, 10)
const SIGMA_MAX: f64 = 15.0; // sigma_M ~ Uniform(0, 15)
const DELTA_MAX: f64 = 100.0; // delta ~ Uniform(0, 100)
const TAU: f64 = super::BayesParams::DEFAULT_TAU;

/// Constrained view of an unconstrained parameter vector.
#[derive(Clone)]
struct Params {
    a_m: f64,
    b_m: f64,
    sigma_m: f64,
    a_h: f64,
    rho: f64,
    cut: Vec<f64>,
    delta: f64,
    /// log prior + transform Jacobians, or -inf outside the support.
    lp0: f64,
}

fn transform(theta: &[f64], n_cut: usize) -> Params {
    let a_m = theta[0];
    let b_m = theta[1];
    let sigma_m = theta[2].exp();
    let a_h = theta[3];
    let rho = theta[4].tanh();
    let mut cut = Vec::with_capacity(n_cut);
    let mut jac = 0.0;
    let mut prev = 0.0;
    for k in 0..n_cut {
        let s = sigmoid(theta[5 + k]);
        let c = prev + (1.0 - prev) * s;
        jac += (1.0 - prev).ln() + s.ln() + (1.0 - s).ln();
        cut.push(c);
        prev = c;
    }
    let delta = theta[5 + n_cut].exp();

    let mut lp0 = 0.0;
    // a_M, b_M, a_H ~ N(0, PRIOR_SD)
    lp0 -= (a_m * a_m + b_m * b_m + a_h * a_h) / (2.0 * PRIOR_SD * PRIOR_SD);
    // sigma_M ~ Uniform(0, 15) sampled on the log scale
    if sigma_m >= SIGMA_MAX {
        lp0 = f64::NEG_INFINITY;
    }
    lp0 += theta[2];
    // rho ~ Uniform(-1, 1) via tanh
    lp0 += (1.0 - rho * rho).max(f64::MIN_POSITIVE).ln();
    // ordered cutpoints uniform on (0,1) via stick-breaking
    lp0 += jac;
    // delta ~ Uniform(0, 100) on the log scale
    if delta >= DELTA_MAX {
        lp0 = f64::NEG_INFINITY;
    }
    lp0 += theta[5 + n_cut];

    Params {
        a_m,
        b_m,
        sigma_m,
        a_h,
        rho,
        cut,
        delta,
        lp0,
    }
}

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

fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let d = (x - mean) / sd;
    -sd.ln() - 0.5 * d * d
}

/// Machine-score likelihood plus parameter priors.
fn log_machine_block(obs: &Observed, p: &Params) -> f64 {
    if p.lp0 == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut lp = p.lp0;
    for (scores, &z) in obs.machine.iter().zip(&obs.truth) {
        for (j, &s) in scores.iter().enumerate() {
            let mu = if j == z { p.a_m } else { p.b_m };
            lp += ln_normal(s, mu, p.sigma_m);
        }
    }
    lp
}

/// Latent-prior terms only (used by group moves that leave the observation
/// likelihood invariant).
fn log_latent_prior(obs: &Observed, p: &Params, ob: &HumanOb, latent: &[f64; 2]) -> f64 {
    let z = obs.truth[ob.case];
    let scores = &obs.machine[ob.case];
    let cond_sd = (1.0 - p.rho * p.rho).sqrt() * HUMAN_SIGMA;
    let mut lp = 0.0;
    for j in 0..2 {
        let mu_h = if j == z { p.a_h } else { HUMAN_B };
        let mu_m = if j == z { p.a_m } else { p.b_m };
        let mean = mu_h + p.rho * HUMAN_SIGMA * (scores[j] - mu_m) / p.sigma_m;
        lp += ln_normal(latent[j], mean, cond_sd);
    }
    lp
}

/// Latent prior + human-observation likelihood for one instance.
fn log_instance(obs: &Observed, p: &Params, ob: &HumanOb, latent: &[f64; 2]) -> f64 {
    let z = obs.truth[ob.case];
    let scores = &obs.machine[ob.case];
    let cond_sd = (1.0 - p.rho * p.rho).sqrt() * HUMAN_SIGMA;
    let mut lp = 0.0;
    for j in 0..2 {
        let mu_h = if j == z { p.a_h } else { HUMAN_B };
        let mu_m = if j == z { p.a_m } else { p.b_m };
        let mean = mu_h + p.rho * HUMAN_SIGMA * (scores[j] - mu_m) / p.sigma_m;
        lp += ln_normal(latent[j], mean, cond_sd);
    }
    // tempered-softmax choice
    lp += -log1p_exp((latent[1 - ob.y] - latent[ob.y]) / TAU);
    // ordered-logistic rating on the chosen-class score
    lp += ordered_logistic_log_pmf(ob.r, latent[ob.y], &p.cut, p.delta);
    lp
}

fn log_posterior(obs: &Observed, p: &Params, latents: &[[f64; 2]]) -> f64 {
    let mut lp = log_machine_block(obs, p);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    for (ob, latent) in obs.human.iter().zip(latents) {
        lp += log_instance(obs, p, ob, latent);
    }
    lp
}

// ---- sampler --------------------------------------------------------------------

struct ChainOutput {
    draws: Vec<Draw>,
    series: Vec<Vec<f64>>, // per scalar parameter, per sweep
    param_accept: f64,
    latent_accept: f64,
}

fn run_chain(obs: &Observed, warmup: usize, samples: usize, seed: u64, chain: u64) -> ChainOutput {
    let n_cut = obs.n_ratings - 1;
    let n_par = 6 + n_cut;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain + 1);

    // moment-based starting point, jittered per chain
    let mut theta = init_theta(obs, n_cut);
    for t in theta.iter_mut() {
        *t += 0.2 * rng.sample::<f64, _>(StandardNormal);
    }
    let mut params = transform(&theta, n_cut);
    let mut latents = init_latents(obs, &params, &mut rng);
    let mut cur = log_posterior(obs, &params, &latents);

    let mut scales = vec![0.1; n_par];
    let mut latent_scale = 0.5;
    let mut group_scales = [0.2f64, 0.2];
    let mut win_par = vec![(0usize, 0usize); n_par];
    let mut win_lat = (0usize, 0usize);
    let mut win_grp = [(0usize, 0usize); 2];
    let mut acc_par = (0usize, 0usize);
    let mut acc_lat = (0usize, 0usize);

    let total = warmup + samples;
    let mut draws = Vec::with_capacity(samples);
    let mut series = vec![Vec::with_capacity(samples); n_par];

    for sweep in 0..total {
        let sampling = sweep >= warmup;
        // every 5th sweep takes 4x bolder scalar steps; the mixture kernel
        // crosses ridges that the adapted base scale only crawls along
        let bold = sweep % 5 == 4;
        // scalar parameters
        for p_idx in 0..n_par {
            let mut cand = theta.clone();
            let step = scales[p_idx] * if bold { 4.0 } else { 1.0 };
            cand[p_idx] += step * rng.sample::<f64, _>(StandardNormal);
            let cand_params = transform(&cand, n_cut);
            let cand_lp = log_posterior(obs, &cand_params, &latents);
            let accept = (cand_lp - cur) > rng.random::<f64>().ln();
            if accept {
                theta = cand;
                params = cand_params;
                cur = cand_lp;
            }
            if !bold {
                win_par[p_idx].0 += usize::from(accept);
                win_par[p_idx].1 += 1;
            }
            if sampling {
                acc_par.0 += usize::from(accept);
                acc_par.1 += 1;
            }
        }
        // latent human scores
        for i in 0..latents.len() {
            let ob = &obs.human[i];
            let old = latents[i];
            let cand = [
                old[0] + latent_scale * rng.sample::<f64, _>(StandardNormal),
                old[1] + latent_scale * rng.sample::<f64, _>(StandardNormal),
            ];
            let delta =
                log_instance(obs, &params, ob, &cand) - log_instance(obs, &params, ob, &old);
            let accept = delta > rng.random::<f64>().ln();
            if accept {
                latents[i] = cand;
                cur += delta;
            }
            win_lat.0 += usize::from(accept);
            win_lat.1 += 1;
            if sampling {
                acc_lat.0 += usize::from(accept);
                acc_lat.1 += 1;
            }
        }

        // group move: slide the cutpoints and every latent coordinate by a
        // common shift. Choice and rating likelihoods are invariant, so the
        // move walks along the cutpoint-latent ridge that single-site
        // updates cross only slowly; acceptance is the latent-prior ratio
        // (the stick-transform Jacobians of forward and reverse cancel).
        {
            let u = group_scales[0] * rng.sample::<f64, _>(StandardNormal);
            let inside = params.cut[0] + u > 0.0 && params.cut[n_cut - 1] + u < 1.0;
            let mut accept = false;
            if inside {
                let mut delta = 0.0;
                for (ob, latent) in obs.human.iter().zip(&latents) {
                    let shifted = [latent[0] + u, latent[1] + u];
                    delta += log_latent_prior(obs, &params, ob, &shifted)
                        - log_latent_prior(obs, &params, ob, latent);
                }
                accept = delta > rng.random::<f64>().ln();
                if accept {
                    for l in latents.iter_mut() {
                        l[0] += u;
                        l[1] += u;
                    }
                    let new_cut: Vec<f64> = params.cut.iter().map(|c| c + u).collect();
                    write_cut_coords(&mut theta, &new_cut);
                    params = transform(&theta, n_cut);
                    cur = log_posterior(obs, &params, &latents);
                }
            }
            win_grp[0].0 += usize::from(accept);
            win_grp[0].1 += 1;
        }
        // group move: shift a_H together with each instance's true-class
        // latent coordinate (their prior terms move in lockstep)
        {
            let u = group_scales[1] * rng.sample::<f64, _>(StandardNormal);
            let mut cand_theta = theta.clone();
            cand_theta[3] += u;
            let cand_params = transform(&cand_theta, n_cut);
            let mut cand_latents = latents.clone();
            for (ob, l) in obs.human.iter().zip(cand_latents.iter_mut()) {
                l[obs.truth[ob.case]] += u;
            }
            let cand_lp = log_posterior(obs, &cand_params, &cand_latents);
            let accept = (cand_lp - cur) > rng.random::<f64>().ln();
            if accept {
                theta = cand_theta;
                params = cand_params;
                latents = cand_latents;
                cur = cand_lp;
            }
            win_grp[1].0 += usize::from(accept);
            win_grp[1].1 += 1;
        }

        // warmup adaptation toward a 20-40% acceptance rate
        if !sampling && (sweep + 1) % 25 == 0 {
            for (scale, win) in scales.iter_mut().zip(win_par.iter_mut()) {
                let rate = win.0 as f64 / win.1.max(1) as f64;
                if rate < 0.2 {
                    *scale *= 0.7;
                } else if rate > 0.4 {
                    *scale *= 1.4;
                }
                *scale = scale.clamp(1e-4, 50.0);
                *win = (0, 0);
            }
            let rate = win_lat.0 as f64 / win_lat.1.max(1) as f64;
            if rate < 0.2 {
                latent_scale *= 0.7;
            } else if rate > 0.4 {
                latent_scale *= 1.4;
            }
            latent_scale = latent_scale.clamp(1e-4, 50.0);
            win_lat = (0, 0);
            for (scale, win) in group_scales.iter_mut().zip(win_grp.iter_mut()) {
                let rate = win.0 as f64 / win.1.max(1) as f64;
                if rate < 0.2 {
                    *scale *= 0.7;
                } else if rate > 0.4 {
                    *scale *= 1.4;
                }
                *scale = scale.clamp(1e-4, 50.0);
                *win = (0, 0);
            }
        }

        // guard against incremental-update drift
        if (sweep + 1) % 128 == 0 {
            cur = log_posterior(obs, &params, &latents);
        }

        if sampling {
            let d = Draw {
                a_m: params.a_m,
                b_m: params.b_m,
                sigma_m: params.sigma_m,
                a_h: params.a_h,
                rho: params.rho,
                cutpoints: params.cut.clone(),
                delta: params.delta,
            };
            for (s, v) in series.iter_mut().zip(scalar_view(&d)) {
                s.push(v);
            }
            draws.push(d);
        }
    }

    ChainOutput {
        draws,
        series,
        param_accept: acc_par.0 as f64 / acc_par.1.max(1) as f64,
        latent_accept: acc_lat.0 as f64 / acc_lat.1.max(1) as f64,
    }
}

fn scalar_view(d: &Draw) -> Vec<f64> {
    let mut v = vec![d.a_m, d.b_m, d.sigma_m, d.a_h, d.rho];
    v.extend(&d.cutpoints);
    v.push(d.delta);
    v
}

pub(crate) fn scalar_names(n_cut: usize) -> Vec<String> {
    let mut names = vec![
        "a_m".into(),
        "b_m".into(),
        "sigma_m".into(),
        "a_h".into(),
        "rho".into(),
    ];
    for k in 0..n_cut {
        names.push(format!("c{}", k + 1));
    }
    names.push("delta".into());
    names
}

/// Re-encode constrained cutpoints into the stick coordinates of `theta`.
fn write_cut_coords(theta: &mut [f64], cut: &[f64]) {
    let mut prev = 0.0;
    for (k, &c) in cut.iter().enumerate() {
        let s = (c - prev) / (1.0 - prev);
        theta[5 + k] = (s / (1.0 - s)).ln();
        prev = c;
    }
}

fn init_theta(obs: &Observed, n_cut: usize) -> Vec<f64> {
    let mut sum_true = 0.0f64;
    let mut n_true = 0.0f64;
    let mut sum_other = 0.0f64;
    let mut n_other = 0.0f64;
    for (scores, &z) in obs.machine.iter().zip(&obs.truth) {
        for (j, &s) in scores.iter().enumerate() {
            if j == z {
                sum_true += s;
                n_true += 1.0;
            } else {
                sum_other += s;
                n_other += 1.0;
            }
        }
    }
    let a0 = sum_true / n_true.max(1.0);
    let b0 = sum_other / n_other.max(1.0);
    let mut ss = 0.0f64;
    let mut n = 0.0f64;
    for (scores, &z) in obs.machine.iter().zip(&obs.truth) {
        for (j, &s) in scores.iter().enumerate() {
            let mu = if j == z { a0 } else { b0 };
            ss += (s - mu) * (s - mu);
            n += 1.0;
        }
    }
    let sigma0 = (ss / n.max(1.0)).sqrt().clamp(0.05, SIGMA_MAX * 0.9);

    let mut theta = vec![a0, b0, sigma0.ln(), 1.0, 0.0];
    // equally spaced cutpoints in (0,1) through the inverse stick transform
    let mut prev = 0.0;
    for k in 0..n_cut {
        let c = (k + 1) as f64 / (n_cut + 1) as f64;
        let s = (c - prev) / (1.0 - prev);
        theta.push((s / (1.0 - s)).ln());
        prev = c;
    }
    theta.push(5.0f64.ln());
    theta
}

fn init_latents(obs: &Observed, p: &Params, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let cond_sd = (1.0 - p.rho * p.rho).sqrt() * HUMAN_SIGMA;
    obs.human
        .iter()
        .map(|ob| {
            let z = obs.truth[ob.case];
            let scores = &obs.machine[ob.case];
            let mut latent = [0.0; 2];
            for (j, slot) in latent.iter_mut().enumerate() {
                let mu_h = if j == z { p.a_h } else { HUMAN_B };
                let mu_m = if j == z { p.a_m } else { p.b_m };
                let mean = mu_h + p.rho * HUMAN_SIGMA * (scores[j] - mu_m) / p.sigma_m;
                *slot = mean + 0.1 * cond_sd * rng.sample::<f64, _>(StandardNormal);
            }
            latent
        })
        .collect()
}

/// Sample the posterior over model parameters for a two-member team on the
/// full dataset.
pub fn fit_posterior(
    dataset: &Dataset,
    team: &TeamSpec,
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorSamples> {
    let instances: Vec<Instance> = dataset.instances().to_vec();
    fit_posterior_on(dataset, team, &instances, mcmc, seed)
}

/// Sample the posterior using only the given training instances (whole test
/// cases: an instance's case provides its machine scores).
pub fn fit_posterior_on(
    dataset: &Dataset,
    team: &TeamSpec,
    instances: &[Instance],
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorSamples> {
    if mcmc.chains == 0 || mcmc.samples == 0 {
        return Err(Error::Config(
            "chains and samples must be at least 1".into(),
        ));
    }
    let (machine_idx, human_idx) = resolve_pair(dataset, team)?;
    let obs = build_observed(dataset, machine_idx, human_idx, instances, mcmc.n_ratings)?;
    let n_cut = obs.n_ratings - 1;

    let outputs: Vec<ChainOutput> = (0..mcmc.chains as u64)
        .into_par_iter()
        .map(|chain| run_chain(&obs, mcmc.warmup, mcmc.samples, seed, chain))
        .collect();

    let names = scalar_names(n_cut);
    let mut split_rhat = Vec::with_capacity(names.len());
    for (p_idx, name) in names.iter().enumerate() {
        let chains: Vec<&[f64]> = outputs.iter().map(|o| o.series[p_idx].as_slice()).collect();
        split_rhat.push((name.clone(), split_rhat_stat(&chains)));
    }
    let converged = split_rhat.iter().all(|(_, r)| *r <= 1.1);
    if !converged {
        log::warn!(
            "posterior not converged: max split R-hat = {:.3}",
            split_rhat.iter().map(|(_, r)| *r).fold(0.0, f64::max)
        );
    }

    let mut draws = Vec::with_capacity(mcmc.chains * mcmc.samples);
    for o in &outputs {
        draws.extend(o.draws.iter().cloned());
    }

    Ok(PosteriorSamples {
        machine: dataset.teammates()[machine_idx].name.clone(),
        human: dataset.teammates()[human_idx].name.clone(),
        l: dataset.n_classes(),
        n_ratings: obs.n_ratings,
        tau: TAU,
        chains: mcmc.chains,
        warmup: mcmc.warmup,
        samples_per_chain: mcmc.samples,
        draws,
        diagnostics: Diagnostics {
            param_acceptance: outputs.iter().map(|o| o.param_accept).collect(),
            latent_acceptance: outputs.iter().map(|o| o.latent_accept).collect(),
            split_rhat,
            converged,
        },
    })
}

/// Split R-hat (Gelman-Rubin on half-chains).
pub(crate) fn split_rhat_stat(chains: &[&[f64]]) -> f64 {
    let mut seqs: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        if half < 2 {
            return f64::NAN;
        }
        seqs.push(&c[..half]);
        seqs.push(&c[half..half * 2]);
    }
    let n = seqs[0].len() as f64;
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, &mu)| s.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}
