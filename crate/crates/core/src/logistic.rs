//! Confidence-weighted logistic combination model.
//!
//! Each team member contributes signed-confidence features (see
//! [`crate::features`]); a logistic regression over those features predicts
//! the outcome. Binary tasks model the probability of option 0; multiclass
//! tasks use multinomial regression with class 0 as the reference.
//!
//! Fitting is damped Newton on the L2-regularized negative log-likelihood,
//! started from zero weights, so results are deterministic for a given
//! design. The regularization applies to non-intercept weights only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::features::{build_design, Design, FeatureConfig, FeatureRow, Mode};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub nll: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub l2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[FeatureRow]) -> Standardizer {
        let width = rows.first().map_or(0, |r| r.x.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(&r.x) {
                *m += v / n;
            }
        }
        let mut sd = vec![0.0; width];
        for r in rows {
            for (s, (&v, &m)) in sd.iter_mut().zip(r.x.iter().zip(&mean)) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in sd.iter_mut() {
            *s = s.sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

/// A fitted combination model for one team.
///
/// `coefs` holds one row per modeled outcome: a single row of class-0
/// evidence weights for binary tasks, or `L - 1` rows (classes 1..L versus
/// the reference class 0) for multiclass. Each row is `[intercept,
/// weights...]` aligned with `feature_names`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeamModel {
    pub team: Vec<String>,
    pub config: FeatureConfig,
    pub n_outcomes: usize,
    pub feature_names: Vec<String>,
    pub coefs: Vec<Vec<f64>>,
    pub standardizer: Option<Standardizer>,
    pub fit_meta: FitMeta,
}

impl TeamModel {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn intercept(&self) -> f64 {
        self.coefs[0][0]
    }

    /// Named weights of the first (or only) coefficient row.
    pub fn named_weights(&self) -> Vec<(String, f64)> {
        let mut out = vec![("intercept".to_string(), self.coefs[0][0])];
        out.extend(
            self.feature_names
                .iter()
                .cloned()
                .zip(self.coefs[0].iter().skip(1).copied()),
        );
        out
    }

    /// Predict a feature row: (label, per-class probabilities, tie flag).
    /// Argmax ties break toward the lower label and set the flag.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>, bool)> {
        if x.len() != self.width() {
            return Err(Error::Input(format!(
                "feature width {} does not match model width {}",
                x.len(),
                self.width()
            )));
        }
        let std;
        let x = match &self.standardizer {
            Some(s) => {
                std = s.apply(x);
                &std[..]
            }
            None => x,
        };
        let probs = if self.n_outcomes == 2 {
            let eta = dot_aug(&self.coefs[0], x);
            let p0 = sigmoid(eta);
            vec![p0, 1.0 - p0]
        } else {
            // softmax over [0, eta_1, ..., eta_{L-1}]
            let mut etas = vec![0.0];
            etas.extend(self.coefs.iter().map(|w| dot_aug(w, x)));
            let m = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = etas.iter().map(|&e| (e - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        };
        let best = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let label = probs.iter().position(|&p| p == best).unwrap();
        let tie = probs.iter().filter(|&&p| p == best).count() > 1;
        Ok((label, probs, tie))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub l2: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Fit the multinomial parameterization even when the task is binary.
    pub force_multinomial: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            l2: 1e-4,
            seed: 0,
            max_iter: 500,
            tol: 1e-10,
            force_multinomial: false,
        }
    }
}

/// Fit the combination model on a prepared design.
pub fn fit(
    design: &Design,
    config: &FeatureConfig,
    team: &[String],
    opts: &FitOptions,
) -> Result<TeamModel> {
    if design.rows.len() < 2 {
        return Err(Error::Fit("need at least 2 rows to fit".into()));
    }
    if !opts.l2.is_finite() || opts.l2 < 0.0 {
        return Err(Error::Config(format!(
            "l2 must be finite and >= 0, got {}",
            opts.l2
        )));
    }
    let n_outcomes = design.n_outcomes;
    let mut present = vec![false; n_outcomes];
    for r in &design.rows {
        if r.target >= n_outcomes {
            return Err(Error::Fit(format!(
                "target {} out of range for {} outcomes",
                r.target, n_outcomes
            )));
        }
        present[r.target] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Fit(
            "training outcomes are all identical; nothing to fit".into(),
        ));
    }

    let standardizer = if config.standardize {
        Some(Standardizer::fit(&design.rows))
    } else {
        None
    };
    let xs: Vec<Vec<f64>> = design
        .rows
        .iter()
        .map(|r| match &standardizer {
            Some(s) => s.apply(&r.x),
            None => r.x.clone(),
        })
        .collect();
    let ts: Vec<usize> = design.rows.iter().map(|r| r.target).collect();

    let n_rows = xs.len();
    let (coefs, meta) = if n_outcomes == 2 && !opts.force_multinomial {
        let (beta, meta) = newton(
            n_rows,
            |theta| binary_nll_grad(&xs, &ts, theta, opts.l2),
            |theta| binary_hessian(&xs, theta, opts.l2),
            design.width() + 1,
            opts,
        )?;
        (vec![beta], meta)
    } else {
        let k = n_outcomes - 1;
        let w = design.width() + 1;
        let (theta, meta) = newton(
            n_rows,
            |theta| multinomial_nll_grad(&xs, &ts, n_outcomes, theta, opts.l2),
            |theta| multinomial_hessian(&xs, n_outcomes, theta, opts.l2),
            k * w,
            opts,
        )?;
        (theta.chunks(w).map(|c| c.to_vec()).collect(), meta)
    };

    Ok(TeamModel {
        team: team.to_vec(),
        config: config.clone(),
        n_outcomes,
        feature_names: design.names.clone(),
        coefs,
        standardizer,
        fit_meta: meta,
    })
}

/// Convenience: build the design for `instances` and fit.
pub fn fit_team(
    dataset: &Dataset,
    team_idx: &[usize],
    config: &FeatureConfig,
    instances: &[Instance],
    opts: &FitOptions,
) -> Result<TeamModel> {
    let design = build_design(dataset, team_idx, config, instances)?;
    let names: Vec<String> = team_idx
        .iter()
        .map(|&t| dataset.teammates()[t].name.clone())
        .collect();
    fit(&design, config, &names, opts)
}

// ---- objective / gradient / hessian -----------------------------------------

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot_aug(w: &[f64], x: &[f64]) -> f64 {
    w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Negative log-likelihood and gradient for binary logistic regression.
/// `beta` is `[intercept, w_1..w_d]`; targets are 1 when the outcome is the
/// modeled option 0. Regularization (l2/2)*||w||^2 skips the intercept.
pub fn binary_nll_grad(xs: &[Vec<f64>], ts: &[usize], beta: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let mut nll = 0.0;
    let mut grad = vec![0.0; beta.len()];
    for (x, &t) in xs.iter().zip(ts) {
        let eta = dot_aug(beta, x);
        let t = t as f64;
        // -[t*ln p + (1-t)*ln(1-p)] = log(1+e^eta) - t*eta
        nll += log1p_exp(eta) - t * eta;
        let resid = sigmoid(eta) - t;
        grad[0] += resid;
        for (g, &v) in grad[1..].iter_mut().zip(x) {
            *g += resid * v;
        }
    }
    for (i, (g, &b)) in grad.iter_mut().zip(beta).enumerate() {
        if i > 0 {
            nll += 0.5 * l2 * b * b;
            *g += l2 * b;
        }
    }
    (nll, grad)
}

fn binary_hessian(xs: &[Vec<f64>], beta: &[f64], l2: f64) -> Vec<f64> {
    let w = beta.len();
    let mut h = vec![0.0; w * w];
    for x in xs {
        let eta = dot_aug(beta, x);
        let p = sigmoid(eta);
        let s = p * (1.0 - p);
        // augmented row [1, x]
        for i in 0..w {
            let xi = if i == 0 { 1.0 } else { x[i - 1] };
            for j in i..w {
                let xj = if j == 0 { 1.0 } else { x[j - 1] };
                h[i * w + j] += s * xi * xj;
            }
        }
    }
    for i in 1..w {
        h[i * w + i] += l2;
    }
    for i in 0..w {
        for j in 0..i {
            h[i * w + j] = h[j * w + i];
        }
    }
    h
}

/// Negative log-likelihood and gradient for multinomial regression with
/// reference class 0. `theta` is the row-major flattening of the
/// (n_outcomes - 1) x (width + 1) coefficient matrix.
pub fn multinomial_nll_grad(
    xs: &[Vec<f64>],
    ts: &[usize],
    n_outcomes: usize,
    theta: &[f64],
    l2: f64,
) -> (f64, Vec<f64>) {
    let k = n_outcomes - 1;
    let w = theta.len() / k;
    let mut nll = 0.0;
    let mut grad = vec![0.0; theta.len()];
    let mut probs = vec![0.0; n_outcomes];
    for (x, &t) in xs.iter().zip(ts) {
        class_probs(theta, k, w, x, &mut probs);
        nll -= probs[t].max(f64::MIN_POSITIVE).ln();
        for c in 0..k {
            let resid = probs[c + 1] - if t == c + 1 { 1.0 } else { 0.0 };
            let row = &mut grad[c * w..(c + 1) * w];
            row[0] += resid;
            for (g, &v) in row[1..].iter_mut().zip(x) {
                *g += resid * v;
            }
        }
    }
    for c in 0..k {
        for i in 1..w {
            let b = theta[c * w + i];
            nll += 0.5 * l2 * b * b;
            grad[c * w + i] += l2 * b;
        }
    }
    (nll, grad)
}

fn class_probs(theta: &[f64], k: usize, w: usize, x: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    for c in 0..k {
        out[c + 1] = dot_aug(&theta[c * w..(c + 1) * w], x);
    }
    let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in out.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

fn multinomial_hessian(xs: &[Vec<f64>], n_outcomes: usize, theta: &[f64], l2: f64) -> Vec<f64> {
    let k = n_outcomes - 1;
    let w = theta.len() / k;
    let dim = k * w;
    let mut h = vec![0.0; dim * dim];
    let mut probs = vec![0.0; n_outcomes];
    for x in xs {
        class_probs(theta, k, w, x, &mut probs);
        for a in 0..k {
            for b in a..k {
                let s = probs[a + 1] * (if a == b { 1.0 } else { 0.0 } - probs[b + 1]);
                for i in 0..w {
                    let xi = if i == 0 { 1.0 } else { x[i - 1] };
                    for j in 0..w {
                        let xj = if j == 0 { 1.0 } else { x[j - 1] };
                        h[(a * w + i) * dim + b * w + j] += s * xi * xj;
                    }
                }
            }
        }
    }
    // mirror the upper class-blocks
    for a in 0..k {
        for b in 0..a {
            for i in 0..w {
                for j in 0..w {
                    h[(a * w + i) * dim + b * w + j] = h[(b * w + j) * dim + a * w + i];
                }
            }
        }
    }
    for c in 0..k {
        for i in 1..w {
            h[(c * w + i) * dim + c * w + i] += l2;
        }
    }
    h
}

// ---- Newton solver -----------------------------------------------------------

/// If weights blow past this we call the fit separated/non-converged.
const WEIGHT_BLOWUP: f64 = 1e6;

fn newton<FG, FH>(
    n_rows: usize,
    nll_grad: FG,
    hessian: FH,
    dim: usize,
    opts: &FitOptions,
) -> Result<(Vec<f64>, FitMeta)>
where
    FG: Fn(&[f64]) -> (f64, Vec<f64>),
    FH: Fn(&[f64]) -> Vec<f64>,
{
    let mut theta = vec![0.0; dim];
    let (mut nll, mut grad) = nll_grad(&theta);
    let mut iterations = 0;
    let mut grad_norm = norm2(&grad);

    while grad_norm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let h = hessian(&theta);
        let step = solve_spd(&h, &grad, dim)?;
        // Backtracking line search on the Newton direction. Near the optimum
        // the per-step NLL decrease falls below the f64 resolution of the
        // summed objective while the gradient still shrinks quadratically,
        // so a step also counts when it leaves the NLL at its noise floor
        // but strictly reduces the gradient norm.
        let slack = 1e-12 * (1.0 + nll.abs());
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&step)
                .map(|(&t, &s)| t - scale * s)
                .collect();
            let (cand_nll, cand_grad) = nll_grad(&cand);
            let accept =
                cand_nll < nll || (cand_nll <= nll + slack && norm2(&cand_grad) < grad_norm);
            if accept {
                theta = cand;
                nll = cand_nll;
                grad = cand_grad;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break; // stagnated at numerical precision
        }
        grad_norm = norm2(&grad);
    }

    let blown = theta.iter().any(|t| t.abs() > WEIGHT_BLOWUP);
    // At l2 = 0 a vanishing likelihood means the data is perfectly separated
    // and the maximizer does not exist: the weights are diverging even though
    // the gradient has gone numerically flat.
    let separated = opts.l2 == 0.0 && nll < 1e-6 * n_rows.max(1) as f64;
    if blown || separated {
        log::warn!(
            "training data looks perfectly separable (l2 = {}); weights diverge",
            opts.l2
        );
    }
    let converged = grad_norm <= opts.tol.max(1e-8) && !blown && !separated;
    Ok((
        theta,
        FitMeta {
            iterations,
            nll,
            grad_norm,
            converged,
            l2: opts.l2,
            seed: opts.seed,
        },
    ))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve H x = b for symmetric positive-definite H (Cholesky), adding
/// progressively larger diagonal jitter if the factorization fails.
fn solve_spd(h: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut jitter = 0.0;
    for attempt in 0..8 {
        let mut m = h.to_vec();
        if jitter > 0.0 {
            for i in 0..n {
                m[i * n + i] += jitter;
            }
        }
        if let Some(chol) = cholesky(&mut m, n) {
            return Ok(chol_solve(chol, b, n));
        }
        let scale = (0..n)
            .map(|i| h[i * n + i].abs())
            .fold(0.0, f64::max)
            .max(1e-12);
        jitter = scale * 1e-10 * 10f64.powi(attempt);
    }
    Err(Error::Fit("Hessian is not positive definite".into()))
}

/// In-place lower Cholesky; returns None if a pivot is non-positive.
fn cholesky(m: &mut [f64], n: usize) -> Option<&[f64]> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for k in 0..j {
                sum -= m[i * n + k] * m[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                m[i * n + i] = sum.sqrt();
            } else {
                m[i * n + j] = sum / m[j * n + j];
            }
        }
    }
    Some(m)
}

fn chol_solve(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

// ---- squash-parameter selection -----------------------------------------------

/// Default grid of squash strengths.
pub fn default_squash_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e6]
}

/// Choose a squash strength per teammate by inner cross-validated negative
/// log-likelihood on the training instances, then refit on all of them.
///
/// Teammates are optimized coordinate-wise (others held at their current
/// value) for up to two sweeps; a joint grid would be exponential in team
/// size for no practical gain on these data sizes.
pub fn fit_squash(
    dataset: &Dataset,
    team_idx: &[usize],
    base_config: &FeatureConfig,
    grid: &[f64],
    instances: &[Instance],
    opts: &FitOptions,
    inner_folds: usize,
) -> Result<(TeamModel, BTreeMap<String, f64>)> {
    if base_config.mode != Mode::Squash {
        return Err(Error::Config("fit_squash requires squash mode".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("squash grid must not be empty".into()));
    }
    for &a in grid {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::Config(format!(
                "squash grid value {a} must be finite and >= 0"
            )));
        }
    }
    let names: Vec<String> = team_idx
        .iter()
        .map(|&t| dataset.teammates()[t].name.clone())
        .collect();

    // inner folds split by test case so no case leaks across the split
    let mut cases: Vec<usize> = Vec::new();
    for inst in instances {
        if !cases.contains(&inst.case) {
            cases.push(inst.case);
        }
    }
    let k = inner_folds.max(2).min(cases.len());
    let fold_of = |case: usize| -> usize { cases.iter().position(|&c| c == case).unwrap() % k };

    let mut alpha: BTreeMap<String, f64> = names.iter().map(|n| (n.clone(), grid[0])).collect();

    for _sweep in 0..2 {
        let mut changed = false;
        for name in &names {
            let mut best = (f64::INFINITY, alpha[name]);
            for &cand in grid {
                let mut cfg = base_config.clone();
                let mut a = alpha.clone();
                a.insert(name.clone(), cand);
                cfg.alpha = a;
                let mut total_nll = 0.0;
                let mut ok = true;
                for fold in 0..k {
                    let train: Vec<Instance> = instances
                        .iter()
                        .filter(|i| fold_of(i.case) != fold)
                        .copied()
                        .collect();
                    let test: Vec<Instance> = instances
                        .iter()
                        .filter(|i| fold_of(i.case) == fold)
                        .copied()
                        .collect();
                    if train.is_empty() || test.is_empty() {
                        continue;
                    }
                    let model = match fit_team(dataset, team_idx, &cfg, &train, opts) {
                        Ok(m) => m,
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    };
                    let test_design = build_design(dataset, team_idx, &cfg, &test)?;
                    for row in &test_design.rows {
                        let (_, probs, _) = model.predict(&row.x)?;
                        let p = if model.n_outcomes == 2 {
                            if row.target == 1 {
                                probs[0]
                            } else {
                                probs[1]
                            }
                        } else {
                            probs[row.target]
                        };
                        total_nll -= p.max(1e-300).ln();
                    }
                }
                if ok && total_nll < best.0 {
                    best = (total_nll, cand);
                }
            }
            if best.1 != alpha[name] {
                alpha.insert(name.clone(), best.1);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut cfg = base_config.clone();
    cfg.alpha = alpha.clone();
    let model = fit_team(dataset, team_idx, &cfg, instances, opts)?;
    Ok((model, alpha))
}
