use serde::{Deserialize, Serialize};
use tailclust::limitpp::QSampler;
use tailclust::{Functional, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub blocking: BlockingConfig,
    #[serde(default)]
    pub limit: Option<LimitConfig>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub functionals: Vec<Functional>,
    #[serde(default)]
    pub sums: Option<SumsConfig>,
    #[serde(default)]
    pub records: Option<RecordsConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BlockingConfig {
    /// Defaults to `floor(sqrt(n))`.
    #[serde(default)]
    pub r_n: Option<usize>,
    #[serde(default)]
    pub u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Shape law; taken from the model when absent.
    #[serde(default)]
    pub q: Option<QSampler>,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

fn default_mc() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumsConfig {
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    #[serde(default = "default_limit_reps")]
    pub limit_replications: usize,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_sup_tol")]
    pub sup_tolerance: f64,
    #[serde(default = "default_m2_tol")]
    pub m2_tolerance: f64,
}

fn default_p_min() -> f64 {
    1e-3
}
fn default_limit_reps() -> usize {
    20_000
}
fn default_cells() -> usize {
    4
}
fn default_sup_tol() -> f64 {
    0.03
}
fn default_m2_tol() -> f64 {
    0.05
}

impl Default for SumsConfig {
    fn default() -> Self {
        Self {
            p_min: default_p_min(),
            limit_replications: default_limit_reps(),
            cells: default_cells(),
            sup_tolerance: default_sup_tol(),
            m2_tolerance: default_m2_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordsConfig {
    pub window: (f64, f64),
    #[serde(default = "default_block")]
    pub block_length: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_block() -> usize {
    100
}
fn default_level() -> f64 {
    0.01
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {}", e.path(), e.inner()))
    }
}
