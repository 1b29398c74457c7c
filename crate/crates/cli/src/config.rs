//! Run configuration: TOML file with sections, strict key checking and
//! command-line overrides. Every default is materialized before a run so
//! the manifest records the complete configuration.

use serde::{Deserialize, Serialize};
use toml::Value;

use lasso_hmm::penalty::DEFAULT_SMOOTHING;
use lasso_hmm::simulation::{GridSpec, ScenarioConfig};
use lasso_hmm::{FitConfig, GradientMode, PenaltyMode};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    /// "smooth" or "literal".
    pub mode: String,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub len: usize,
    pub max: f64,
    pub min: f64,
    /// Explicit values; when non-empty, len/max/min are ignored.
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub max_iterations: usize,
    pub gradient_mode: String,
    pub convergence_tol: f64,
    pub n_random_starts: usize,
    pub nonzero_threshold: f64,
    pub intercept_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub t_train: usize,
    pub t_test: usize,
    pub n_runs: usize,
    pub n_covariates: usize,
    pub true_tpm: Vec<Vec<f64>>,
    pub true_intercepts: Vec<f64>,
    pub true_slopes: Vec<f64>,
    pub covariate_min: f64,
    pub covariate_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub min_attempts: usize,
    /// Scheme used by `score`.
    pub score_scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
}

/// Fully materialized configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub penalty: PenaltySection,
    pub grid: GridSection,
    pub fit: FitSection,
    pub study: StudySection,
    pub data: DataSection,
    pub run: RunSection,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["states"]),
    ("penalty", &["mode", "c"]),
    ("grid", &["len", "max", "min", "lambda"]),
    (
        "fit",
        &[
            "max_iterations",
            "gradient_mode",
            "convergence_tol",
            "n_random_starts",
            "nonzero_threshold",
            "intercept_cap",
        ],
    ),
    (
        "study",
        &[
            "t_train",
            "t_test",
            "n_runs",
            "n_covariates",
            "true_tpm",
            "true_intercepts",
            "true_slopes",
            "covariate_min",
            "covariate_max",
        ],
    ),
    ("data", &["min_attempts", "score_scheme"]),
    ("run", &["seed"]),
];

fn suggest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::jaro_winkler(word, c), c))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

fn unknown(what: &str, name: &str, candidates: &[&str]) -> CliError {
    let hint = suggest(name, candidates.iter().copied())
        .map(|s| format!("; did you mean \"{s}\"?"))
        .unwrap_or_default();
    CliError::Validation(format!("unknown {what} \"{name}\"{hint}"))
}

/// Reject unknown sections and keys, suggesting the closest valid name.
pub fn check_keys(doc: &toml::Table) -> Result<(), CliError> {
    let names: Vec<&str> = SECTIONS.iter().map(|(s, _)| *s).collect();
    for (section, body) in doc {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            let all_keys: Vec<&str> = SECTIONS.iter().flat_map(|(_, k)| k.iter().copied()).collect();
            if body.is_table() {
                return Err(unknown("section", section, &names));
            }
            return Err(unknown("top-level key", section, &all_keys));
        };
        let Value::Table(t) = body else {
            return Err(CliError::Validation(format!("[{section}] must be a section")));
        };
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(unknown(&format!("key in [{section}]"), key, keys));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Defaults for the reduced (desk) or full (paper) design.
    pub fn defaults(paper_scale: bool) -> Self {
        let sc = if paper_scale {
            ScenarioConfig::paper_scale()
        } else {
            ScenarioConfig::desk_scale()
        };
        let fit = FitConfig::default();
        let (len, max, min) = match sc.grid {
            GridSpec::LogSpaced { len, max, min } => (len, max, min),
            GridSpec::Values(_) => unreachable!("presets use log-spaced grids"),
        };
        Self {
            model: ModelSection { states: sc.fit_states },
            penalty: PenaltySection {
                mode: PenaltyMode::SmoothSymmetric.as_str().into(),
                c: DEFAULT_SMOOTHING,
            },
            grid: GridSection {
                len,
                max,
                min,
                lambda: Vec::new(),
            },
            fit: FitSection {
                max_iterations: fit.max_iterations,
                gradient_mode: fit.gradient_mode.as_str().into(),
                convergence_tol: fit.convergence_tol,
                n_random_starts: fit.n_random_starts,
                nonzero_threshold: fit.nonzero_threshold,
                intercept_cap: fit.intercept_cap,
            },
            study: StudySection {
                t_train: sc.t_train,
                t_test: sc.t_test,
                n_runs: sc.n_runs,
                n_covariates: sc.true_slopes.len(),
                true_tpm: sc.true_tpm.clone(),
                true_intercepts: sc.true_intercepts.clone(),
                true_slopes: sc.true_slopes.clone(),
                covariate_min: sc.covariate_range.0,
                covariate_max: sc.covariate_range.1,
            },
            data: DataSection {
                min_attempts: 5,
                score_scheme: "relaxed-BIC".into(),
            },
            run: RunSection { seed: sc.seed },
        }
    }

    /// Overlay the keys present in `text` onto `self`.
    pub fn merge_toml(&mut self, text: &str) -> Result<(), CliError> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
        check_keys(&doc)?;
        let mut base = Value::try_from(&*self).map_err(|e| CliError::Validation(e.to_string()))?;
        let Value::Table(base_t) = &mut base else {
            unreachable!("config serializes to a table")
        };
        for (section, body) in doc {
            if let (Some(Value::Table(dst)), Value::Table(src)) = (base_t.get_mut(&section), body) {
                for (k, v) in src {
                    dst.insert(k, v);
                }
            }
        }
        // a user-set true_slopes fixes the covariate count
        let explicit_slopes = base_t
            .get("study")
            .and_then(|s| s.get("true_slopes"))
            .and_then(Value::as_array)
            .map(Vec::len);
        *self = base
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
        if let Some(n) = explicit_slopes {
            if text.contains("true_slopes") {
                self.study.n_covariates = n;
            }
        }
        self.sync_slopes();
        Ok(())
    }

    /// Resize the true slopes to `n_covariates`, padding with noise zeros.
    pub fn sync_slopes(&mut self) {
        let n = self.study.n_covariates;
        self.study.true_slopes.resize(n, 0.0);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn penalty_mode(&self) -> Result<PenaltyMode, CliError> {
        self.penalty.mode.parse().map_err(CliError::Validation)
    }

    pub fn grid_spec(&self) -> GridSpec {
        if self.grid.lambda.is_empty() {
            GridSpec::LogSpaced {
                len: self.grid.len,
                max: self.grid.max,
                min: self.grid.min,
            }
        } else {
            GridSpec::Values(self.grid.lambda.clone())
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig, CliError> {
        let gradient_mode: GradientMode = self.fit.gradient_mode.parse().map_err(CliError::Validation)?;
        let cfg = FitConfig {
            max_iterations: self.fit.max_iterations,
            gradient_mode,
            convergence_tol: self.fit.convergence_tol,
            n_random_starts: self.fit.n_random_starts,
            nonzero_threshold: self.fit.nonzero_threshold,
            seed: self.run.seed,
            intercept_cap: self.fit.intercept_cap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let s = &self.study;
        if s.true_slopes.len() != s.n_covariates {
            return Err(CliError::Validation(format!(
                "study.true_slopes has {} entries but n_covariates = {}",
                s.true_slopes.len(),
                s.n_covariates
            )));
        }
        let cfg = ScenarioConfig {
            n_states: s.true_intercepts.len(),
            true_tpm: s.true_tpm.clone(),
            true_intercepts: s.true_intercepts.clone(),
            true_slopes: s.true_slopes.clone(),
            covariate_range: (s.covariate_min, s.covariate_max),
            t_train: s.t_train,
            t_test: s.t_test,
            n_runs: s.n_runs,
            seed: self.run.seed,
            initial_state: None,
            grid: self.grid_spec(),
            penalty_c: self.penalty.c,
            penalty_mode: self.penalty_mode()?,
            fit: self.fit_config()?,
            fit_states: self.model.states,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Validate everything a `fit` run needs.
    pub fn validate_for_fit(&self) -> Result<(), CliError> {
        self.fit_config()?;
        self.penalty_mode()?;
        self.grid_spec().build()?;
        lasso_hmm::PenaltyConfig::new(0.0, self.penalty.c, self.penalty_mode()?)?;
        if self.model.states == 0 {
            return Err(CliError::Validation("model.states must be at least 1".into()));
        }
        self.data
            .score_scheme
            .parse::<lasso_hmm::Scheme>()
            .map_err(CliError::Validation)?;
        Ok(())
    }
}
