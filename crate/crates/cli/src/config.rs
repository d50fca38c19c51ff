//! Run configuration: a TOML file plus command-line overrides, resolved into
//! one serializable struct whose hash is stamped into every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use teamfuse::bayes::{BayesParams, McmcSettings, TeammateParams};
use teamfuse::features::{Expansion, FeatureConfig, Mode};
use teamfuse::Kind;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub squash: SquashConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub teams: TeamsConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub judgments: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// JSON bundle alternative to the CSV pair.
    pub bundle: Option<PathBuf>,
    pub l: Option<usize>,
    /// Map raw human slider confidences in [0, 100] to ratings {0, 1, 2}
    /// at the 33/66 cutpoints while loading.
    #[serde(default)]
    pub discretize_human: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    pub l2: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: "logistic".into(),
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    pub mode: String,
    pub expansion: String,
    pub degree: u32,
    pub standardize: bool,
    #[serde(default)]
    pub alpha: BTreeMap<String, f64>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            mode: "confidence".into(),
            expansion: "none".into(),
            degree: 2,
            standardize: false,
            alpha: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquashConfig {
    /// Re-optimize alpha on every training split (squash mode only).
    pub optimize: bool,
    pub grid: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for SquashConfig {
    fn default() -> Self {
        SquashConfig {
            optimize: false,
            grid: teamfuse::logistic::default_squash_grid(),
            inner_folds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub warmup: usize,
    pub chains: usize,
    pub samples: usize,
    pub n_ratings: Option<usize>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            warmup: 500,
            chains: 3,
            samples: 25,
            n_ratings: None,
        }
    }
}

impl McmcConfig {
    pub fn to_settings(&self) -> McmcSettings {
        McmcSettings {
            warmup: self.warmup,
            chains: self.chains,
            samples: self.samples,
            n_ratings: self.n_ratings,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamsConfig {
    /// "all" or "list".
    pub select: String,
    pub must_include: Option<String>,
    #[serde(default)]
    pub list: Vec<Vec<String>>,
}

impl Default for TeamsConfig {
    fn default() -> Self {
        TeamsConfig {
            select: "all".into(),
            must_include: None,
            list: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Evaluated team-result JSON files to compare.
    #[serde(default)]
    pub results: Vec<PathBuf>,
    pub bins_human: usize,
    pub bins_machine: usize,
    /// Unit of analysis for significance tests: "teams" or "instances".
    pub unit: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            results: Vec::new(),
            bins_human: 3,
            bins_machine: 10,
            unit: "teams".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_cases: usize,
    pub l: usize,
    #[serde(default = "one")]
    pub human_reps: usize,
    pub teammates: Vec<SimTeammate>,
    /// Scalar correlation (two teammates) ...
    pub rho: Option<f64>,
    /// ... or a full correlation matrix.
    pub rho_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_cutpoints")]
    pub cutpoints: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one_f")]
    pub dirichlet_alpha: f64,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    BayesParams::DEFAULT_TAU
}
fn default_delta() -> f64 {
    BayesParams::DEFAULT_DELTA
}
fn default_cutpoints() -> Vec<f64> {
    BayesParams::default_cutpoints()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTeammate {
    pub name: String,
    pub kind: String,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("cannot parse {}", p.display()))
            }
            None => Ok(RunConfig::default()),
        }
    }

    /// Hash of the fully resolved configuration (stamped into outputs).
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn feature_config(&self, strict: bool) -> anyhow::Result<FeatureConfig> {
        let mode = match self.features.mode.as_str() {
            "confidence" => Mode::Confidence,
            "no_confidence" => Mode::NoConfidence,
            "squash" => Mode::Squash,
            other => bail!("unknown feature mode '{other}' (confidence, no_confidence, squash)"),
        };
        let expansion = match self.features.expansion.as_str() {
            "none" => Expansion::None,
            "interactions" => Expansion::Interactions(self.features.degree),
            "polynomial" => Expansion::Polynomial(self.features.degree),
            other => bail!("unknown expansion '{other}' (none, interactions, polynomial)"),
        };
        Ok(FeatureConfig {
            mode,
            alpha: self.features.alpha.clone(),
            expansion,
            standardize: self.features.standardize,
            strict,
        })
    }

    pub fn bayes_params(&self) -> anyhow::Result<BayesParams> {
        let sim = self
            .simulate
            .as_ref()
            .context("config has no [simulate] section")?;
        let teammates: Vec<TeammateParams> = sim
            .teammates
            .iter()
            .map(|t| {
                let kind = match t.kind.as_str() {
                    "human" => Kind::Human,
                    "machine" => Kind::Machine,
                    other => bail!("unknown teammate kind '{other}'"),
                };
                Ok(TeammateParams {
                    name: t.name.clone(),
                    kind,
                    a: t.a,
                    b: t.b,
                    sigma: t.sigma,
                })
            })
            .collect::<anyhow::Result<_>>()?;
        let k = teammates.len();
        let rho = match (&sim.rho_matrix, sim.rho) {
            (Some(m), _) => m.clone(),
            (None, Some(r)) if k == 2 => vec![vec![1.0, r], vec![r, 1.0]],
            (None, Some(_)) => bail!("scalar rho needs exactly 2 teammates; use rho_matrix"),
            (None, None) => {
                // identity: independent teammates
                (0..k)
                    .map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect())
                    .collect()
            }
        };
        Ok(BayesParams {
            teammates,
            rho,
            tau: sim.tau,
            cutpoints: sim.cutpoints.clone(),
            delta: sim.delta,
            dirichlet_alpha: sim.dirichlet_alpha,
        })
    }
}
