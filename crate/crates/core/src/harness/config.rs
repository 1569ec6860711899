//! Experiment configuration: JSON schema, regime/scale presets, validation.
//!
//! A config file is a flat JSON object. Every key is optional; missing keys
//! come from the regime preset (`isotropic` / `anisotropic`) and the scale
//! preset (`desk` / `paper`). Unknown keys are rejected.
//!
//! `alpha` and `lambda` are per-sample: the solver receives `alpha · n_train`
//! and `lambda · n_train`, so one setting carries across sample sizes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::GeneratorConfig;
use crate::error::{Error, Result};
use crate::graphs::Topology;
use crate::models::GrpcaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Isotropic,
    Anisotropic,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Isotropic => "isotropic",
            Regime::Anisotropic => "anisotropic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "isotropic" => Some(Regime::Isotropic),
            "anisotropic" => Some(Regime::Anisotropic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// p=60, n=2000, s=25, 5 seeds.
    Desk,
    /// p=144, n=10000, s=60, 10 seeds.
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }
}

/// One evaluated arm of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Pca,
    SparsePca,
    GrpcaOracle,
    GrpcaLearned,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Pca, Arm::SparsePca, Arm::GrpcaOracle, Arm::GrpcaLearned];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Pca => "pca",
            Arm::SparsePca => "sparse_pca",
            Arm::GrpcaOracle => "grpca_oracle",
            Arm::GrpcaLearned => "grpca_learned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Arm::ALL.into_iter().find(|a| a.label() == s)
    }
}

pub const DEFAULT_DENSITY_GRID: [f64; 7] = [0.05, 0.10, 0.20, 0.30, 0.50, 0.70, 0.90];

/// Settings of the cross-validated graphical lasso used by the learned arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlassoSettings {
    pub folds: usize,
    pub path_len: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub lasso_tol: f64,
}

impl Default for GlassoSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            path_len: 12,
            tol: 1e-4,
            max_iter: 100,
            lasso_tol: 1e-6,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub preset: Preset,
    /// Generator settings; `seed` is replaced per sweep point.
    pub generator: GeneratorConfig,
    pub topologies: Vec<Topology>,
    pub density_grid: Vec<f64>,
    pub methods: Vec<Arm>,
    pub folds: usize,
    pub seeds: Vec<u64>,
    /// Model settings with per-sample `alpha` and `lambda`.
    pub model: GrpcaConfig,
    pub glasso: GlassoSettings,
    pub output_dir: Option<PathBuf>,
}

/// The file schema. Generator symbols keep their names (`sigma_E` included).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub regime: Option<Regime>,
    pub preset: Option<Preset>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub gamma: Option<f64>,
    pub omega: Option<f64>,
    pub s: Option<usize>,
    pub q_ratio: Option<f64>,
    pub q_count: Option<usize>,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "sigma_E")]
    pub sigma_e: Option<f64>,
    pub sigma1_sq: Option<f64>,
    pub score_decay: Option<f64>,
    pub radius: Option<usize>,
    pub omega_halvings: Option<u32>,
    pub topologies: Option<Vec<Topology>>,
    pub density_grid: Option<Vec<f64>>,
    pub methods: Option<Vec<Arm>>,
    pub folds: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub max_outer: Option<usize>,
    pub tol_rel_obj: Option<f64>,
    pub inner_steps: Option<usize>,
    pub bounded_scores: Option<bool>,
    pub glasso_folds: Option<usize>,
    pub glasso_path_len: Option<usize>,
    pub glasso_tol: Option<f64>,
    pub glasso_max_iter: Option<usize>,
    pub glasso_lasso_tol: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

/// Noise and nuisance settings of a regime on top of the shared ones.
/// `sigma1_sq` puts PCA's held-out global R² near 0.95 (isotropic) and
/// 0.6–0.8 (anisotropic).
fn regime_generator(regime: Regime) -> GeneratorConfig {
    let base = GeneratorConfig {
        r: 8,
        gamma: 16.0,
        omega: 0.4,
        ..GeneratorConfig::default()
    };
    match regime {
        Regime::Isotropic => GeneratorConfig {
            q_ratio: Some(0.1),
            tau: 0.55,
            beta: 1.15,
            sigma_e: 1.0,
            sigma1_sq: 256.0,
            ..base
        },
        Regime::Anisotropic => GeneratorConfig {
            q_ratio: Some(2.0),
            tau: 0.10,
            beta: 2.50,
            sigma_e: 3.0,
            sigma1_sq: 1.0,
            ..base
        },
    }
}

/// Per-sample `(alpha, lambda)` used when the config does not set them.
pub fn default_penalties(regime: Regime) -> (f64, f64) {
    match regime {
        Regime::Isotropic => (0.01, 0.3),
        Regime::Anisotropic => (0.01, 1000.0),
    }
}

impl ExperimentConfig {
    /// Preset values for a regime and scale.
    pub fn preset(regime: Regime, preset: Preset) -> Self {
        let mut generator = regime_generator(regime);
        let seeds = match preset {
            Preset::Desk => {
                generator.p = 60;
                generator.n = 2000;
                generator.s = 25;
                (0..5).collect()
            }
            Preset::Paper => {
                generator.p = 144;
                generator.n = 10_000;
                generator.s = 60;
                (0..10).collect()
            }
        };
        let (alpha, lambda) = default_penalties(regime);
        Self {
            regime,
            preset,
            generator,
            topologies: Topology::ALL.to_vec(),
            density_grid: DEFAULT_DENSITY_GRID.to_vec(),
            methods: Arm::ALL.to_vec(),
            folds: 5,
            seeds,
            model: GrpcaConfig {
                r: 8,
                alpha,
                lambda,
                ..GrpcaConfig::default()
            },
            glasso: GlassoSettings::default(),
            output_dir: None,
        }
    }

    /// Expands presets under `raw` and applies its overrides.
    pub fn resolve(raw: &RawConfig, preset_override: Option<Preset>) -> Result<Self> {
        let regime = raw.regime.unwrap_or(Regime::Anisotropic);
        let preset = preset_override.or(raw.preset).unwrap_or(Preset::Desk);
        let mut c = Self::preset(regime, preset);
        let g = &mut c.generator;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(g.p, raw.p);
        set!(g.n, raw.n);
        set!(g.r, raw.r);
        set!(g.gamma, raw.gamma);
        set!(g.omega, raw.omega);
        set!(g.s, raw.s);
        if raw.q_ratio.is_some() {
            g.q_ratio = raw.q_ratio;
        }
        if raw.q_count.is_some() {
            g.q_count = raw.q_count;
        }
        set!(g.tau, raw.tau);
        set!(g.beta, raw.beta);
        set!(g.sigma_e, raw.sigma_e);
        set!(g.sigma1_sq, raw.sigma1_sq);
        set!(g.score_decay, raw.score_decay);
        set!(g.radius, raw.radius);
        set!(g.omega_halvings, raw.omega_halvings);
        c.model.r = g.r;
        set!(c.topologies, raw.topologies);
        set!(c.density_grid, raw.density_grid);
        set!(c.methods, raw.methods);
        set!(c.folds, raw.folds);
        set!(c.seeds, raw.seeds);
        set!(c.model.alpha, raw.alpha);
        set!(c.model.lambda, raw.lambda);
        set!(c.model.max_outer, raw.max_outer);
        set!(c.model.tol_rel_obj, raw.tol_rel_obj);
        set!(c.model.inner_steps, raw.inner_steps);
        set!(c.model.bounded_scores, raw.bounded_scores);
        set!(c.glasso.folds, raw.glasso_folds);
        set!(c.glasso.path_len, raw.glasso_path_len);
        set!(c.glasso.tol, raw.glasso_tol);
        set!(c.glasso.max_iter, raw.glasso_max_iter);
        set!(c.glasso.lasso_tol, raw.glasso_lasso_tol);
        if raw.output_dir.is_some() {
            c.output_dir = raw.output_dir.clone();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::RangeViolation {
                field: field.to_string(),
                message,
            })
        };
        if self.folds < 2 {
            return bad("folds", format!("need at least 2 folds, got {}", self.folds));
        }
        if self.folds > self.generator.n {
            return bad("folds", format!("{} folds for {} samples", self.folds, self.generator.n));
        }
        if self.methods.is_empty() {
            return bad("methods", "need at least one method".into());
        }
        if self.topologies.is_empty() {
            return bad("topologies", "need at least one topology".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "need at least one seed".into());
        }
        if self.density_grid.is_empty() {
            return bad("density_grid", "need at least one density".into());
        }
        if let Some(d) = self.density_grid.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
            return bad("density_grid", format!("{d} is outside (0, 1]"));
        }
        if self.glasso.folds < 2 {
            return bad("glasso_folds", format!("need at least 2 folds, got {}", self.glasso.folds));
        }
        if self.glasso.path_len < 1 {
            return bad("glasso_path_len", "need at least one penalty".into());
        }
        self.generator.validate()?;
        self.model.validate().map_err(|e| Error::RangeViolation {
            field: "model".into(),
            message: e.to_string(),
        })
    }
}

/// Maps a serde error to `UnknownKey` or `Parse` with its position.
fn config_error(e: serde_json::Error) -> Error {
    let message = e.to_string();
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return Error::UnknownKey(rest[..end].to_string());
        }
    }
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message,
    }
}

pub fn parse_config(text: &str, preset_override: Option<Preset>) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(config_error)?;
    ExperimentConfig::resolve(&raw, preset_override)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    load_config_with(path, None)
}

/// Like [`load_config`], with the scale preset forced (the CLI `--preset`).
pub fn load_config_with(path: &Path, preset_override: Option<Preset>) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?, preset_override)
}
