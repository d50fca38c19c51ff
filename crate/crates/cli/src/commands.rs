//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Deserialize;

use teamfuse::bayes;
use teamfuse::data::{discretize_confidence_lenient, Dataset, Judgment, Kind, TeamSpec};
use teamfuse::eval::{self, EvalReport, ModelKind};
use teamfuse::features::Mode;
use teamfuse::logistic::{self, FitOptions};
use teamfuse::stats;

use crate::config::RunConfig;
use crate::output::{self, Meta};

pub fn load_dataset(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let ds = if let Some(bundle) = &cfg.data.bundle {
        Dataset::from_json(bundle)?
    } else {
        let judgments = cfg
            .data
            .judgments
            .as_ref()
            .context("no judgments file: pass --data or set data.judgments")?;
        let truth = cfg
            .data
            .truth
            .as_ref()
            .context("no ground-truth file: pass --truth or set data.truth")?;
        Dataset::from_csv(judgments, truth, cfg.data.l)?
    };
    if !cfg.data.discretize_human {
        return Ok(ds);
    }
    // map raw slider confidences to {0,1,2} ratings for human rows
    let truth: Vec<(String, usize)> = ds
        .cases()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), ds.truth(i)))
        .collect();
    let judgments: Vec<Judgment> = ds
        .judgments()
        .iter()
        .map(|j| {
            if j.kind == Kind::Human {
                let rating = discretize_confidence_lenient(j.confidence)?;
                Ok(Judgment {
                    confidence: f64::from(rating),
                    ..j.clone()
                })
            } else {
                Ok(j.clone())
            }
        })
        .collect::<teamfuse::Result<_>>()?;
    Ok(Dataset::new(ds.n_classes(), truth, judgments)?)
}

fn model_kind(cfg: &RunConfig, strict: bool) -> anyhow::Result<ModelKind> {
    match cfg.model.kind.as_str() {
        "logistic" => {
            let fc = cfg.feature_config(strict)?;
            let squash_grid = if fc.mode == Mode::Squash && cfg.squash.optimize {
                Some(cfg.squash.grid.clone())
            } else {
                None
            };
            Ok(ModelKind::Logistic {
                config: fc,
                l2: cfg.model.l2,
                squash_grid,
                inner_folds: cfg.squash.inner_folds,
            })
        }
        "bayes" => Ok(ModelKind::Bayes {
            mcmc: cfg.mcmc.to_settings(),
        }),
        other => bail!(teamfuse::Error::Config(format!(
            "unknown model kind '{other}' (logistic, bayes)"
        ))),
    }
}

// ---- fit -----------------------------------------------------------------------

pub fn cmd_fit(
    cfg: &RunConfig,
    meta: &Meta,
    out: &Path,
    team: &TeamSpec,
    strict: bool,
    seed: u64,
) -> anyhow::Result<()> {
    let ds = load_dataset(cfg)?;
    let label = output::safe_label(&team.label());
    match model_kind(cfg, strict)? {
        ModelKind::Logistic {
            config,
            l2,
            squash_grid,
            inner_folds,
        } => {
            let idx = team.resolve(&ds)?;
            let opts = FitOptions {
                l2,
                seed,
                ..FitOptions::default()
            };
            let model = match (config.mode, squash_grid) {
                (Mode::Squash, Some(grid)) => {
                    logistic::fit_squash(
                        &ds,
                        &idx,
                        &config,
                        &grid,
                        ds.instances(),
                        &opts,
                        inner_folds,
                    )?
                    .0
                }
                _ => logistic::fit_team(&ds, &idx, &config, ds.instances(), &opts)?,
            };
            output::write_json(
                &out.join(format!("model_{label}.json")),
                meta,
                "model",
                &model,
            )?;
            let mut summary = String::new();
            summary.push_str(&meta.comment_line());
            summary.push('\n');
            summary.push_str(&format!("team: {}\n", team.label()));
            summary.push_str(&format!(
                "fit: iterations={} nll={} converged={}\n",
                model.fit_meta.iterations, model.fit_meta.nll, model.fit_meta.converged
            ));
            for (name, w) in model.named_weights() {
                summary.push_str(&format!("{name}\t{w}\n"));
            }
            if model.n_outcomes > 2 {
                summary.push_str(&format!(
                    "(multinomial: {} coefficient rows vs reference class 0)\n",
                    model.coefs.len()
                ));
            }
            print!("{summary}");
            std::fs::write(out.join(format!("model_{label}.txt")), summary)?;
        }
        ModelKind::Bayes { mcmc } => {
            let post = bayes::fit_posterior(&ds, team, &mcmc, seed)?;
            output::write_json(
                &out.join(format!("posterior_{label}.json")),
                meta,
                "posterior",
                &post,
            )?;
            let n = post.draws.len() as f64;
            let mean = |f: &dyn Fn(&bayes::Draw) -> f64| post.draws.iter().map(f).sum::<f64>() / n;
            let mut summary = String::new();
            summary.push_str(&meta.comment_line());
            summary.push('\n');
            summary.push_str(&format!(
                "team: {} (machine={}, human={})\n",
                team.label(),
                post.machine,
                post.human
            ));
            summary.push_str(&format!("a_m\t{}\n", mean(&|d| d.a_m)));
            summary.push_str(&format!("b_m\t{}\n", mean(&|d| d.b_m)));
            summary.push_str(&format!("sigma_m\t{}\n", mean(&|d| d.sigma_m)));
            summary.push_str(&format!("a_h\t{}\n", mean(&|d| d.a_h)));
            summary.push_str(&format!("rho\t{}\n", mean(&|d| d.rho)));
            summary.push_str(&format!("delta\t{}\n", mean(&|d| d.delta)));
            summary.push_str(&format!("converged\t{}\n", post.diagnostics.converged));
            print!("{summary}");
            std::fs::write(out.join(format!("posterior_{label}.txt")), summary)?;
        }
    }
    Ok(())
}

// ---- teams ---------------------------------------------------------------------

pub fn select_teams(cfg: &RunConfig, ds: &Dataset) -> anyhow::Result<Vec<TeamSpec>> {
    let names: Vec<String> = ds.teammates().iter().map(|t| t.name.clone()).collect();
    match cfg.teams.select.as_str() {
        "all" => Ok(eval::enumerate_teams(
            &names,
            cfg.teams.must_include.as_deref(),
        )?),
        "list" => {
            if cfg.teams.list.is_empty() {
                bail!(teamfuse::Error::Config(
                    "teams.select = \"list\" but teams.list is empty".into()
                ));
            }
            Ok(cfg
                .teams
                .list
                .iter()
                .map(|m| TeamSpec { members: m.clone() })
                .collect())
        }
        other => bail!(teamfuse::Error::Config(format!(
            "unknown team selection '{other}' (all, list)"
        ))),
    }
}

pub fn cmd_teams(
    cfg: &RunConfig,
    meta: &Meta,
    out: &Path,
    strict: bool,
    seed: u64,
) -> anyhow::Result<()> {
    let ds = load_dataset(cfg)?;
    let kind = model_kind(cfg, strict)?;
    let mut teams = select_teams(cfg, &ds)?;

    if matches!(kind, ModelKind::Bayes { .. }) && cfg.teams.select == "all" {
        // the Bayesian model applies to single members and machine+human
        // pairs; drop other subsets from blanket enumeration
        teams.retain(|t| {
            let ok = t.members.len() == 1 || is_machine_human_pair(&ds, t);
            if !ok {
                log::warn!(
                    "skipping team {} (Bayesian model pairs one machine with one human)",
                    t.label()
                );
            }
            ok
        });
    }

    let results: Vec<teamfuse::Result<EvalReport>> = teams
        .par_iter()
        .map(|team| eval::loocv(&ds, team, &kind, seed))
        .collect();
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.push(r?);
    }
    reports.sort_by(|a, b| {
        a.team
            .members
            .len()
            .cmp(&b.team.members.len())
            .then(
                a.accuracy
                    .partial_cmp(&b.accuracy)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then_with(|| a.team.members.cmp(&b.team.members))
    });

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.team.label(),
                r.team.members.len().to_string(),
                r.model.clone(),
                r.n_evaluations.to_string(),
                output::fmt_f64(r.accuracy),
                output::fmt_f64(r.sem),
            ]
        })
        .collect();
    output::write_csv(
        &out.join("teams.csv"),
        meta,
        &["team", "size", "model", "n_evaluations", "accuracy", "sem"],
        &rows,
    )?;
    output::write_json(&out.join("teams.json"), meta, "reports", &reports)?;
    for r in &reports {
        println!(
            "{}\t{}\tn={}\taccuracy={:.4}\tsem={:.4}",
            r.team.label(),
            r.model,
            r.n_evaluations,
            r.accuracy,
            r.sem
        );
    }
    Ok(())
}

fn is_machine_human_pair(ds: &Dataset, team: &TeamSpec) -> bool {
    if team.members.len() != 2 {
        return false;
    }
    let kinds: Vec<Kind> = team
        .members
        .iter()
        .filter_map(|m| ds.teammate_index(m).map(|i| ds.teammates()[i].kind))
        .collect();
    kinds.len() == 2 && kinds.contains(&Kind::Human) && kinds.contains(&Kind::Machine)
}

// ---- simulate ------------------------------------------------------------------

pub fn cmd_simulate(cfg: &RunConfig, meta: &Meta, out: &Path, seed: u64) -> anyhow::Result<()> {
    let params = cfg.bayes_params()?;
    let sim = cfg.simulate.as_ref().expect("validated by bayes_params");
    let ds = bayes::generate_with_reps(&params, sim.n_cases, sim.l, sim.human_reps, seed)?;
    let judgments_path = out.join("judgments.csv");
    let truth_path = out.join("truth.csv");
    ds.to_csv(&judgments_path, &truth_path)?;
    output::prepend_meta(&judgments_path, meta)?;
    output::prepend_meta(&truth_path, meta)?;
    output::write_json(
        &out.join("provenance.json"),
        meta,
        "provenance",
        &serde_json::json!({
            "params": params,
            "n_cases": sim.n_cases,
            "l": sim.l,
            "human_reps": sim.human_reps,
        }),
    )?;
    println!(
        "wrote {} judgments over {} cases to {}",
        ds.judgments().len(),
        ds.cases().len(),
        out.display()
    );
    Ok(())
}

// ---- report --------------------------------------------------------------------

#[derive(Deserialize)]
struct ReportsFile {
    reports: Vec<EvalReport>,
}

pub fn cmd_report(
    cfg: &RunConfig,
    meta: &Meta,
    out: &Path,
    results_flag: &[PathBuf],
) -> anyhow::Result<()> {
    let have_dataset =
        cfg.data.bundle.is_some() || (cfg.data.judgments.is_some() && cfg.data.truth.is_some());
    let results: Vec<PathBuf> = if results_flag.is_empty() {
        cfg.report.results.clone()
    } else {
        results_flag.to_vec()
    };
    if !have_dataset && results.is_empty() {
        bail!(teamfuse::Error::Input(
            "report needs a dataset (--data/--truth) or result files (--results)".into()
        ));
    }

    if have_dataset {
        let ds = load_dataset(cfg)?;
        for tm in ds.teammates() {
            let bins = match tm.kind {
                Kind::Human => cfg.report.bins_human,
                Kind::Machine => cfg.report.bins_machine,
            };
            match eval::calibration(&ds, &tm.name, bins) {
                Ok(table) => {
                    let mut rows: Vec<Vec<String>> = table
                        .bins
                        .iter()
                        .enumerate()
                        .map(|(i, b)| {
                            vec![
                                i.to_string(),
                                output::fmt_f64(b.lo),
                                output::fmt_f64(b.hi),
                                b.count.to_string(),
                                output::fmt_f64(b.accuracy),
                            ]
                        })
                        .collect();
                    rows.push(vec![
                        "slope".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        output::fmt_f64(table.slope),
                    ]);
                    output::write_csv(
                        &out.join(format!("calibration_{}.csv", output::safe_label(&tm.name))),
                        meta,
                        &["bin", "confidence_lo", "confidence_hi", "count", "accuracy"],
                        &rows,
                    )?;
                }
                Err(e) => log::warn!("calibration for '{}' skipped: {e}", tm.name),
            }
        }

        let names: Vec<String> = ds.teammates().iter().map(|t| t.name.clone()).collect();
        if names.len() >= 2 {
            let m = eval::diversity(&ds, &names)?;
            let mut header: Vec<&str> = vec!["teammate"];
            header.extend(m.teammates.iter().map(String::as_str));
            let rows: Vec<Vec<String>> = m
                .teammates
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let mut row = vec![name.clone()];
                    row.extend(m.rho[i].iter().map(|v| match v {
                        Some(r) => output::fmt_f64(*r),
                        None => "undefined".to_string(),
                    }));
                    row
                })
                .collect();
            output::write_csv(&out.join("diversity.csv"), meta, &header, &rows)?;
        }
    }

    if !results.is_empty() {
        let mut sets = Vec::new();
        for path in &results {
            let text = std::fs::read_to_string(path).map_err(|_| {
                teamfuse::Error::Input(format!("missing results file {}", path.display()))
            })?;
            let parsed: ReportsFile = serde_json::from_str(&text)
                .with_context(|| format!("cannot parse results file {}", path.display()))?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| path.display().to_string());
            sets.push((label, parsed.reports));
        }

        let mut long_rows = Vec::new();
        for (label, reports) in &sets {
            for r in reports {
                long_rows.push(vec![
                    label.clone(),
                    r.team.label(),
                    r.team.members.len().to_string(),
                    r.model.clone(),
                    r.n_evaluations.to_string(),
                    output::fmt_f64(r.accuracy),
                    output::fmt_f64(r.sem),
                ]);
            }
        }
        output::write_csv(
            &out.join("results_long.csv"),
            meta,
            &[
                "set",
                "team",
                "size",
                "model",
                "n_evaluations",
                "accuracy",
                "sem",
            ],
            &long_rows,
        )?;

        let mut rows = Vec::new();
        for (label, reports) in &sets {
            if let Some(row) = human_benefit_test(label, reports, &cfg.report.unit)? {
                rows.push(row);
            }
        }
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                rows.extend(cross_set_tests(&sets[i], &sets[j], &cfg.report.unit)?);
            }
        }
        output::write_csv(
            &out.join("ttests.csv"),
            meta,
            &[
                "comparison",
                "unit",
                "test",
                "t",
                "df",
                "p_one_sided",
                "p_two_sided",
                "n_a",
                "n_b",
            ],
            &rows,
        )?;
    }

    println!("report written to {}", out.display());
    Ok(())
}

fn unit_samples(reports: &[EvalReport], unit: &str, with_human: Option<bool>) -> Vec<f64> {
    let picked = reports.iter().filter(|r| match with_human {
        None => true,
        Some(want) => r.member_kinds.contains(&Kind::Human) == want,
    });
    match unit {
        "instances" => picked
            .flat_map(|r| {
                r.per_case_outcomes
                    .iter()
                    .map(|o| f64::from(u8::from(o.correct)))
            })
            .collect(),
        _ => picked.map(|r| r.accuracy).collect(),
    }
}

/// Welch test of teams-with-a-human against machine-only teams.
fn human_benefit_test(
    label: &str,
    reports: &[EvalReport],
    unit: &str,
) -> anyhow::Result<Option<Vec<String>>> {
    let with = unit_samples(reports, unit, Some(true));
    let without = unit_samples(reports, unit, Some(false));
    if with.len() < 2 || without.len() < 2 {
        return Ok(None);
    }
    match stats::welch_t(&with, &without) {
        Ok(t) => Ok(Some(test_row(
            &format!("{label}: with_human vs machine_only"),
            unit,
            "welch",
            &t,
            with.len(),
            without.len(),
        ))),
        Err(teamfuse::Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn cross_set_tests(
    a: &(String, Vec<EvalReport>),
    b: &(String, Vec<EvalReport>),
    unit: &str,
) -> anyhow::Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    let name = format!("{} vs {}", a.0, b.0);
    let sa = unit_samples(&a.1, unit, None);
    let sb = unit_samples(&b.1, unit, None);
    if sa.len() >= 2 && sb.len() >= 2 {
        match stats::welch_t(&sa, &sb) {
            Ok(t) => rows.push(test_row(&name, unit, "welch", &t, sa.len(), sb.len())),
            Err(teamfuse::Error::Degenerate(_)) => {
                log::warn!("welch test for '{name}' degenerate; skipped")
            }
            Err(e) => return Err(e.into()),
        }
    }
    // paired test when both sets evaluated the same teams
    let labels_a: Vec<String> = a.1.iter().map(|r| r.team.label()).collect();
    let labels_b: Vec<String> = b.1.iter().map(|r| r.team.label()).collect();
    if labels_a == labels_b && !labels_a.is_empty() {
        let diffs: Vec<f64> =
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.accuracy - y.accuracy)
                .collect();
        match stats::paired_t(&diffs) {
            Ok(t) => rows.push(test_row(
                &format!("{name} (paired)"),
                "teams",
                "paired",
                &t,
                diffs.len(),
                diffs.len(),
            )),
            Err(teamfuse::Error::Degenerate(_)) => {
                log::warn!("paired test for '{name}' has degenerate differences; skipped")
            }
            Err(teamfuse::Error::Input(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

fn test_row(
    name: &str,
    unit: &str,
    test: &str,
    t: &stats::TTest,
    n_a: usize,
    n_b: usize,
) -> Vec<String> {
    vec![
        name.to_string(),
        unit.to_string(),
        test.to_string(),
        output::fmt_f64(t.t),
        output::fmt_f64(t.df),
        output::fmt_f64(t.p),
        output::fmt_f64(t.p_two_sided()),
        n_a.to_string(),
        n_b.to_string(),
    ]
}
