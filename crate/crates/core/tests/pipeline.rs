//! End-to-end library tests: ingestion round-trips, cross-validated fits on
//! generator data, and squash-strength selection.

use teamfuse::bayes::{self, BayesParams, McmcSettings, TeammateParams};
use teamfuse::data::{Dataset, Judgment, Kind, TeamSpec};
use teamfuse::eval::{self, ModelKind};
use teamfuse::features::{FeatureConfig, Mode};
use teamfuse::logistic::{self, FitOptions};

fn machine(name: &str, a: f64, b: f64, sigma: f64) -> TeammateParams {
    TeammateParams {
        name: name.into(),
        kind: Kind::Machine,
        a,
        b,
        sigma,
    }
}

fn human(name: &str, a: f64) -> TeammateParams {
    TeammateParams {
        name: name.into(),
        kind: Kind::Human,
        a,
        b: 0.0,
        sigma: 1.0,
    }
}

fn two_member(rho: f64, a_h: f64, a_m: f64) -> BayesParams {
    BayesParams::two_member(machine("m", a_m, 0.0, 1.0), human("h", a_h), rho)
}

#[test]
fn csv_round_trip_preserves_dataset() {
    let params = two_member(0.3, 1.5, 2.5);
    let ds = bayes::generate(&params, 40, 2, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let j = dir.path().join("judgments.csv");
    let t = dir.path().join("truth.csv");
    ds.to_csv(&j, &t).unwrap();
    let back = Dataset::from_csv(&j, &t, Some(2)).unwrap();

    assert_eq!(back.n_classes(), ds.n_classes());
    assert_eq!(back.cases(), ds.cases());
    assert_eq!(back.judgments().len(), ds.judgments().len());
    for (a, b) in ds.judgments().iter().zip(back.judgments()) {
        assert_eq!(a.test_case, b.test_case);
        assert_eq!(a.teammate, b.teammate);
        assert_eq!(a.kind, b.kind);
        assert_eq!(a.choice, b.choice);
        assert_eq!(
            a.confidence, b.confidence,
            "confidence must round-trip bit-exactly"
        );
        assert_eq!(a.class_scores, b.class_scores);
    }
    for case in 0..ds.cases().len() {
        assert_eq!(ds.truth(case), back.truth(case));
    }
}

#[test]
fn json_round_trip_preserves_dataset_and_ties() {
    let mut judgments = vec![
        Judgment {
            test_case: "c1".into(),
            teammate: "llm".into(),
            kind: Kind::Machine,
            choice: 0,
            confidence: 0.0,
            class_scores: None,
            tie: true,
        },
        Judgment {
            test_case: "c1".into(),
            teammate: "h".into(),
            kind: Kind::Human,
            choice: 1,
            confidence: 2.0,
            class_scores: None,
            tie: false,
        },
    ];
    judgments[0].class_scores = Some(vec![0.5, 0.5]);
    let ds = Dataset::new(2, vec![("c1".into(), 0)], judgments).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    ds.to_json(&path).unwrap();
    let back = Dataset::from_json(&path).unwrap();
    assert!(back.judgments()[0].tie);
    assert_eq!(back.judgments()[0].class_scores, Some(vec![0.5, 0.5]));
    assert_eq!(back.teammates().len(), 2);
    assert_eq!(back.teammates()[0].name, "llm");
}

/// A benchmark-shaped file: 100 test cases, one human teammate with 503
/// observation rows (2 to 9 per case), three machine teammates with one row
/// per case each.
#[test]
fn benchmark_shaped_load() {
    let mut truth = Vec::new();
    let mut judgments = Vec::new();
    // deterministic 2..9 pattern over 100 cases summing to 503
    let mut reps: Vec<usize> = (0..100).map(|i| 2 + (i * 7) % 8).collect();
    let mut total: usize = reps.iter().sum();
    let mut i = 0;
    while total > 503 {
        if reps[i] > 2 {
            reps[i] -= 1;
            total -= 1;
        }
        i = (i + 1) % 100;
    }
    while total < 503 {
        if reps[i] < 9 {
            reps[i] += 1;
            total += 1;
        }
        i = (i + 1) % 100;
    }
    for (case_idx, reps) in reps.iter().enumerate() {
        let case = format!("t{case_idx:03}");
        truth.push((case.clone(), case_idx % 2));
        for r in 0..*reps {
            judgments.push(Judgment {
                test_case: case.clone(),
                teammate: "human".into(),
                kind: Kind::Human,
                choice: (case_idx + r) % 2,
                confidence: (r % 3) as f64,
                class_scores: None,
                tie: false,
            });
        }
        for llm in ["llm7b", "llm13b", "llm70b"] {
            judgments.push(Judgment {
                test_case: case.clone(),
                teammate: llm.into(),
                kind: Kind::Machine,
                choice: case_idx % 2,
                confidence: 1.0 + (case_idx % 5) as f64,
                class_scores: None,
                tie: false,
            });
        }
    }
    assert_eq!(
        judgments.iter().filter(|j| j.kind == Kind::Human).count(),
        503
    );
    let ds = Dataset::new(2, truth, judgments).unwrap();
    let names: Vec<&str> = ds.teammates().iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, vec!["human", "llm7b", "llm13b", "llm70b"]);
    assert_eq!(ds.cases().len(), 100);
    // every human observation row is one evaluation instance
    assert_eq!(ds.instances().len(), 503);
}

#[test]
fn loocv_on_generator_data_beats_chance() {
    let params = two_member(0.3, 1.5, 2.5);
    let ds = bayes::generate(&params, 100, 2, 3).unwrap();
    let kind = ModelKind::logistic(FeatureConfig::default(), 1e-4);
    let report = eval::loocv(&ds, &TeamSpec::new(["m", "h"]), &kind, 7).unwrap();
    assert_eq!(report.n_evaluations, 100);
    assert!(report.accuracy > 0.8, "accuracy {}", report.accuracy);
    // the reported accuracy matches its own outcomes and SEM definition
    let recount = report
        .per_case_outcomes
        .iter()
        .filter(|o| o.correct)
        .count() as f64
        / 100.0;
    assert_eq!(recount, report.accuracy);
    assert_eq!(
        report.sem,
        (report.accuracy * (1.0 - report.accuracy) / 100.0).sqrt()
    );
}

#[test]
fn shuffled_predictions_fall_to_chance() {
    let params = two_member(0.3, 1.5, 2.5);
    let ds = bayes::generate(&params, 400, 2, 5).unwrap();
    let kind = ModelKind::logistic(FeatureConfig::default(), 1e-4);
    let report = eval::loocv(&ds, &TeamSpec::new(["m", "h"]), &kind, 7).unwrap();
    assert!(report.accuracy > 0.9);
    let shuffled = eval::shuffled_accuracy(&report, 123);
    assert!(
        (shuffled - 0.5).abs() <= 0.03,
        "shuffled accuracy {shuffled}"
    );
}

/// A perfectly separating teammate dominates the fit, so held-out accuracy
/// equals that teammate's own accuracy.
#[test]
fn separating_teammate_sets_heldout_accuracy() {
    let mut truth = Vec::new();
    let mut judgments = Vec::new();
    for i in 0..60 {
        let case = format!("c{i:02}");
        let z = i % 2;
        truth.push((case.clone(), z));
        // oracle teammate: always right, confidence between 1 and 2
        judgments.push(Judgment {
            test_case: case.clone(),
            teammate: "oracle".into(),
            kind: Kind::Machine,
            choice: z,
            confidence: 1.0 + ((i * 13) % 10) as f64 / 10.0,
            class_scores: None,
            tie: false,
        });
        // coin-flip teammate
        judgments.push(Judgment {
            test_case: case.clone(),
            teammate: "noise".into(),
            kind: Kind::Machine,
            choice: (i / 2 + i) % 2,
            confidence: 1.0,
            class_scores: None,
            tie: false,
        });
    }
    let ds = Dataset::new(2, truth, judgments).unwrap();
    let kind = ModelKind::logistic(FeatureConfig::default(), 1e-4);
    let report = eval::loocv(&ds, &TeamSpec::new(["oracle", "noise"]), &kind, 0).unwrap();
    let oracle = eval::loocv(&ds, &TeamSpec::new(["oracle"]), &kind, 0).unwrap();
    assert_eq!(oracle.accuracy, 1.0);
    assert_eq!(report.accuracy, oracle.accuracy);
}

#[test]
fn complementarity_on_calibrated_diverse_data() {
    // independent, calibrated, equally strong teammates: the team beats the
    // best individual by several points, well clear of per-seed noise
    let mut margins = Vec::new();
    for seed in 1..=5u64 {
        let params = two_member(0.0, 2.0, 2.0);
        let ds = bayes::generate(&params, 200, 2, seed).unwrap();
        let kind = ModelKind::logistic(FeatureConfig::default(), 1e-4);
        let team = eval::loocv(&ds, &TeamSpec::new(["m", "h"]), &kind, seed).unwrap();
        let m = eval::loocv(&ds, &TeamSpec::new(["m"]), &kind, seed).unwrap();
        let h = eval::loocv(&ds, &TeamSpec::new(["h"]), &kind, seed).unwrap();
        let margin = team.accuracy - m.accuracy.max(h.accuracy);
        assert!(margin >= 0.0, "seed {seed}: margin {margin}");
        margins.push(margin);
    }
    let mean = margins.iter().sum::<f64>() / margins.len() as f64;
    assert!(mean > 0.01, "mean margin {mean}");
}

#[test]
fn squash_selects_small_alpha_for_calibrated_confidence() {
    // confidence magnitude equals the informative latent: already calibrated
    let mut truth = Vec::new();
    let mut judgments = Vec::new();
    let mut state = 88172645463325252u64;
    let mut unit = move || {
        // xorshift, uniform in [0,1)
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..300 {
        let case = format!("c{i:03}");
        let z = i % 2;
        truth.push((case.clone(), z));
        let sign: f64 = if z == 0 { 1.0 } else { -1.0 };
        let latent = sign * 1.2 + 2.0 * (unit() + unit() + unit() - 1.5);
        judgments.push(Judgment {
            test_case: case.clone(),
            teammate: "h".into(),
            kind: Kind::Human,
            choice: usize::from(latent < 0.0),
            confidence: latent.abs(),
            class_scores: None,
            tie: false,
        });
        judgments.push(Judgment {
            test_case: case,
            teammate: "m".into(),
            kind: Kind::Machine,
            choice: usize::from(unit() < 0.5),
            confidence: 1.0,
            class_scores: None,
            tie: false,
        });
    }
    let ds = Dataset::new(2, truth, judgments).unwrap();
    let team = TeamSpec::new(["h"]).resolve(&ds).unwrap();
    let config = FeatureConfig {
        mode: Mode::Squash,
        ..FeatureConfig::default()
    };
    let grid = logistic::default_squash_grid();
    let opts = FitOptions::default();
    let (_, alpha) =
        logistic::fit_squash(&ds, &team, &config, &grid, ds.instances(), &opts, 5).unwrap();
    assert!(alpha["h"] <= 0.01, "selected alpha {}", alpha["h"]);
}

#[test]
fn squash_selects_max_alpha_for_random_confidence() {
    // accurate choices, but confidence is unrelated noise on a wild scale
    let mut truth = Vec::new();
    let mut judgments = Vec::new();
    let mut state = 1181783497276652981u64;
    let mut unit = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..300 {
        let case = format!("c{i:03}");
        let z = i % 2;
        truth.push((case.clone(), z));
        let correct = unit() < 0.85;
        judgments.push(Judgment {
            test_case: case.clone(),
            teammate: "h".into(),
            kind: Kind::Human,
            choice: if correct { z } else { 1 - z },
            confidence: 0.05 + 8.0 * unit(),
            class_scores: None,
            tie: false,
        });
        judgments.push(Judgment {
            test_case: case,
            teammate: "m".into(),
            kind: Kind::Machine,
            choice: usize::from(unit() < 0.5),
            confidence: 1.0,
            class_scores: None,
            tie: false,
        });
    }
    let ds = Dataset::new(2, truth, judgments).unwrap();
    let team = TeamSpec::new(["h"]).resolve(&ds).unwrap();
    let config = FeatureConfig {
        mode: Mode::Squash,
        ..FeatureConfig::default()
    };
    let grid = logistic::default_squash_grid();
    let opts = FitOptions::default();
    let (_, alpha) =
        logistic::fit_squash(&ds, &team, &config, &grid, ds.instances(), &opts, 5).unwrap();
    assert!(alpha["h"] >= 100.0, "selected alpha {}", alpha["h"]);
}

#[test]
fn squash_grid_zero_matches_confidence_mode() {
    let params = two_member(0.3, 1.5, 2.5);
    let ds = bayes::generate(&params, 80, 2, 21).unwrap();
    let team = TeamSpec::new(["m", "h"]).resolve(&ds).unwrap();
    let opts = FitOptions::default();
    let squash_cfg = FeatureConfig {
        mode: Mode::Squash,
        ..FeatureConfig::default()
    };
    let (squash_model, alpha) =
        logistic::fit_squash(&ds, &team, &squash_cfg, &[0.0], ds.instances(), &opts, 5).unwrap();
    assert!(alpha.values().all(|&a| a == 0.0));
    let plain =
        logistic::fit_team(&ds, &team, &FeatureConfig::default(), ds.instances(), &opts).unwrap();
    for (a, b) in squash_model.coefs[0].iter().zip(&plain.coefs[0]) {
        assert_eq!(a, b, "alpha = 0 must reproduce confidence mode exactly");
    }
}

#[test]
fn multiclass_loocv_beats_chance() {
    // four classes, two machines and a human; the multinomial path must
    // combine per-class score blocks
    let params = BayesParams {
        teammates: vec![
            machine("m1", 2.0, 0.0, 1.0),
            machine("m2", 1.5, 0.0, 1.0),
            human("h", 1.5),
        ],
        rho: vec![
            vec![1.0, 0.4, 0.1],
            vec![0.4, 1.0, 0.1],
            vec![0.1, 0.1, 1.0],
        ],
        tau: BayesParams::DEFAULT_TAU,
        cutpoints: BayesParams::default_cutpoints(),
        delta: BayesParams::DEFAULT_DELTA,
        dirichlet_alpha: 1.0,
    };
    let ds = bayes::generate(&params, 120, 4, 11).unwrap();
    assert_eq!(ds.n_classes(), 4);
    let kind = ModelKind::logistic(FeatureConfig::default(), 1e-4);
    let team = eval::loocv(&ds, &TeamSpec::new(["m1", "m2", "h"]), &kind, 1).unwrap();
    let solo = eval::loocv(&ds, &TeamSpec::new(["m1"]), &kind, 1).unwrap();
    assert!(team.accuracy > 0.5, "team accuracy {}", team.accuracy);
    assert!(
        team.accuracy >= solo.accuracy - 0.02,
        "team {} vs solo {}",
        team.accuracy,
        solo.accuracy
    );
}

#[test]
fn bayes_loocv_runs_on_small_data() {
    let params = two_member(0.4, 1.5, 2.5);
    let ds = bayes::generate(&params, 16, 2, 2).unwrap();
    let kind = ModelKind::Bayes {
        mcmc: McmcSettings {
            warmup: 200,
            chains: 2,
            samples: 40,
            n_ratings: Some(3),
        },
    };
    let report = eval::loocv(&ds, &TeamSpec::new(["m", "h"]), &kind, 3).unwrap();
    assert_eq!(report.n_evaluations, 16);
    assert!(report.accuracy > 0.5, "accuracy {}", report.accuracy);
}

#[test]
fn posterior_rho_near_zero_when_generated_independent() {
    let params = two_member(0.0, 1.5, 2.5);
    let ds = bayes::generate(&params, 200, 2, 4).unwrap();
    let mcmc = McmcSettings {
        warmup: 1200,
        chains: 2,
        samples: 800,
        n_ratings: Some(3),
    };
    let post = bayes::fit_posterior(&ds, &TeamSpec::new(["m", "h"]), &mcmc, 4).unwrap();
    let rho = post.draws.iter().map(|d| d.rho).sum::<f64>() / post.draws.len() as f64;
    assert!(
        rho.abs() <= 0.15,
        "posterior rho {rho} for independent teammates"
    );
}

#[test]
fn calibration_slope_near_zero_for_uninformative_confidence() {
    // 10^4 judgments whose confidence says nothing about correctness
    let mut truth = Vec::new();
    let mut judgments = Vec::new();
    let mut state = 0x2545F4914F6CDD1Du64;
    let mut unit = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..10_000 {
        let case = format!("c{i:05}");
        truth.push((case.clone(), 0usize));
        let correct = unit() < 0.7;
        judgments.push(Judgment {
            test_case: case,
            teammate: "h".into(),
            kind: Kind::Human,
            choice: usize::from(!correct),
            confidence: unit() * 10.0,
            class_scores: None,
            tie: false,
        });
    }
    let ds = Dataset::new(2, truth, judgments).unwrap();
    let table = eval::calibration(&ds, "h", 10).unwrap();
    assert!(
        table.slope.abs() <= 0.05,
        "slope {} for uninformative confidence",
        table.slope
    );
}

#[test]
fn diversity_tracks_shared_machine_latents() {
    // two machines with strongly correlated latents vs an independent human:
    // machine-machine difficulty correlation must exceed machine-human
    let params = BayesParams {
        teammates: vec![
            machine("m1", 1.5, 0.0, 1.0),
            machine("m2", 1.5, 0.0, 1.0),
            human("h", 1.5),
        ],
        rho: vec![
            vec![1.0, 0.9, 0.0],
            vec![0.9, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
        tau: BayesParams::DEFAULT_TAU,
        cutpoints: BayesParams::default_cutpoints(),
        delta: BayesParams::DEFAULT_DELTA,
        dirichlet_alpha: 1.0,
    };
    let ds = bayes::generate(&params, 2000, 2, 13).unwrap();
    let m = eval::diversity(&ds, &["m1".into(), "m2".into(), "h".into()]).unwrap();
    let mm = m.rho[0][1].unwrap();
    let mh = m.rho[0][2].unwrap().max(m.rho[1][2].unwrap());
    assert!(mm > 0.5, "machine-machine difficulty correlation {mm}");
    assert!(
        mm > mh,
        "machine-machine {mm} should exceed machine-human {mh}"
    );
}

#[test]
fn posterior_predictive_beats_chance_by_ten_points() {
    // small sampler settings: prediction quality, not R-hat, is under test
    let mut accs = Vec::new();
    for seed in 1..=5u64 {
        let params = two_member(0.3, 1.5, 2.5);
        let ds = bayes::generate(&params, 200, 2, seed).unwrap();
        let team = TeamSpec::new(["m", "h"]);
        let mcmc = McmcSettings {
            warmup: 400,
            chains: 2,
            samples: 40,
            n_ratings: Some(3),
        };
        let post = bayes::fit_posterior(&ds, &team, &mcmc, seed).unwrap();
        let mut correct = 0;
        for case in 0..ds.cases().len() {
            let obs = bayes::observe_case(&ds, &team, case, ds.instances()).unwrap();
            let probs = bayes::predict_posterior(&post, &obs).unwrap();
            let label = if probs[0] >= probs[1] { 0 } else { 1 };
            if label == ds.truth(case) {
                correct += 1;
            }
        }
        accs.push(correct as f64 / 200.0);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!(
        mean >= 0.60,
        "mean posterior predictive accuracy {mean} (accs {accs:?})"
    );
}
