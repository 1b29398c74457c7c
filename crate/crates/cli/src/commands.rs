use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use lasso_hmm::data::{build_design, descriptives, filter_min_attempts, load_csv, DesignLayout};
use lasso_hmm::inference::{avg_pred_prob, brier_score, decode, forecast_from_filter, ForecastRecord};
use lasso_hmm::model::filtered_last;
use lasso_hmm::selection::{fit_mle, fit_path, select_index};
use lasso_hmm::simulation::run_study;
use lasso_hmm::tables::{self, ForecastRow};
use lasso_hmm::{FitResult, ModelSpec, Params, Scheme};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MODEL_FILE: &str = "model.json";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let res = run_study(&scenario)?;
    tables::write_study(&res.rows, create(out, "study.csv")?)?;
    tables::write_study_details(&res.rows, scenario.fit_states, create(out, "study_details.csv")?)?;
    tables::write_medians(&res.medians(), create(out, "study_medians.csv")?)?;
    if res.rows.iter().all(|r| r.failed) {
        return Err(CliError::Numeric("every scheme failed in every run".into()));
    }
    Ok(())
}

/// Fitted model for one scheme, with the filtered state distribution at
/// the end of each player's training sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeModel {
    pub scheme: String,
    pub lambda: f64,
    pub tpm: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub active_set: Vec<usize>,
    pub loglik: f64,
    pub filters: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub layout: DesignLayout,
    pub schemes: Vec<SchemeModel>,
}

impl SchemeModel {
    pub fn params(&self) -> Result<Params<f64>, CliError> {
        Ok(Params::new(self.tpm.clone(), self.intercepts.clone(), self.slopes.clone())?)
    }
}

pub fn fit(cfg: &RunConfig, data_path: &Path, out: &Path) -> Result<(), CliError> {
    cfg.validate_for_fit()?;
    let records = load_csv(data_path)?;
    let (records, report) = filter_min_attempts(&records, cfg.data.min_attempts);
    if records.is_empty() {
        return Err(CliError::Validation(format!(
            "no player has at least {} attempts",
            cfg.data.min_attempts
        )));
    }
    {
        let mut w = csv_writer(create(out, "filter.csv")?);
        w.write_record(["players_kept", "players_dropped", "rows_kept", "rows_dropped"])
            .map_err(lasso_hmm::Error::from)?;
        w.write_record([
            report.players_kept.to_string(),
            report.players_dropped.to_string(),
            report.rows_kept.to_string(),
            report.rows_dropped.to_string(),
        ])
        .map_err(lasso_hmm::Error::from)?;
        w.flush()?;
    }
    tables::write_descriptives(&descriptives(&records)?, create(out, "descriptives.csv")?)?;
    let design = build_design(&records)?;
    tables::write_catalog(&design.layout, create(out, "catalog.csv")?)?;
    let names = design.layout.names();
    let data = &design.data;
    let spec = ModelSpec::new(cfg.model.states, design.layout.n_columns())?;
    let grid = cfg.grid_spec().build()?;
    let fit_cfg = cfg.fit_config()?;
    let mode = cfg.penalty_mode()?;

    let path = if grid.values().iter().any(|&l| l > 0.0) {
        let p = fit_path(data, &spec, &grid, cfg.penalty.c, mode, &fit_cfg, true)?;
        tables::write_coefficient_path(&p, &names, false, create(out, "coefficient_path.csv")?)?;
        tables::write_coefficient_path(&p, &names, true, create(out, "relaxed_coefficient_path.csv")?)?;
        tables::write_criteria_path(&p, create(out, "criteria_path.csv")?)?;
        Some(p)
    } else {
        None
    };
    let mle = fit_mle(data, &spec, &fit_cfg, path.as_ref()).ok().filter(|f| f.converged);

    let mut chosen: Vec<(Scheme, FitResult<f64>)> = Vec::new();
    for scheme in Scheme::ALL {
        let fit = if scheme == Scheme::Mle {
            mle.clone()
        } else {
            path.as_ref().and_then(|p| {
                let i = select_index(p, scheme).ok()?;
                let pt = &p.points[i];
                Some(if scheme.is_relaxed() {
                    let mut r = pt.relaxed.clone()?;
                    r.lambda = pt.lambda;
                    r
                } else {
                    pt.lasso.clone()
                })
            })
        };
        if let Some(f) = fit {
            chosen.push((scheme, f));
        }
    }
    if chosen.is_empty() {
        return Err(CliError::Numeric("all schemes failed".into()));
    }
    let refs: Vec<(Scheme, &FitResult<f64>)> = chosen.iter().map(|(s, f)| (*s, f)).collect();
    tables::write_selected_models(&names, &refs, create(out, "selected_models.csv")?)?;
    tables::write_tpm_report(&refs, create(out, "tpm.csv")?)?;

    let mut schemes = Vec::new();
    for (scheme, f) in &chosen {
        let mut decodings = Vec::new();
        let mut filters = BTreeMap::new();
        for seq in data.sequences() {
            decodings.push((seq.id.clone(), decode(seq, &f.params)?));
            filters.insert(seq.id.clone(), filtered_last(seq, &f.params)?);
        }
        let file = format!("decoding_{}.csv", scheme.as_str().to_lowercase());
        tables::write_decodings(&decodings, create(out, &file)?)?;
        schemes.push(SchemeModel {
            scheme: scheme.as_str().into(),
            lambda: f.lambda,
            tpm: f.params.tpm_rows(),
            intercepts: f.params.intercepts.clone(),
            slopes: f.params.slopes.clone(),
            active_set: f.active_set.clone(),
            loglik: f.loglik,
            filters,
        });
    }
    let artifact = ModelArtifact {
        layout: design.layout,
        schemes,
    };
    let text = serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out.join(MODEL_FILE), text)?;
    Ok(())
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

pub fn read_model(path: &Path) -> Result<ModelArtifact, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn score(cfg: &RunConfig, model_path: &Path, test_path: &Path, out: &Path) -> Result<(), CliError> {
    let scheme: Scheme = cfg.data.score_scheme.parse().map_err(CliError::Validation)?;
    let artifact = read_model(model_path)?;
    let model = artifact
        .schemes
        .iter()
        .find(|m| m.scheme == scheme.as_str())
        .ok_or_else(|| CliError::Validation(format!("fit has no {scheme} model")))?;
    let params = model.params()?;
    let records = load_csv(test_path)?;
    if records.is_empty() {
        return Err(CliError::Validation(format!("{}: no test records", test_path.display())));
    }
    let test = artifact.layout.encode(&records).map_err(|e| match e {
        lasso_hmm::Error::UnknownCategory(what) => {
            CliError::Validation(format!("schema mismatch between fit and test data: {what} not in the fit"))
        }
        other => other.into(),
    })?;

    let mut rows = Vec::new();
    for seq in test.sequences() {
        let filter = model.filters.get(&seq.id).ok_or_else(|| {
            CliError::Validation(format!("schema mismatch: player {:?} has no training sequence", seq.id))
        })?;
        let pi = forecast_from_filter(filter, seq.covariates(), &params)?;
        for (h, (&p, &y)) in pi.iter().zip(seq.outcomes()).enumerate() {
            rows.push(ForecastRow {
                player_id: seq.id.clone(),
                horizon: h + 1,
                predicted: p,
                outcome: y,
            });
        }
    }
    let recs: Vec<ForecastRecord<f64>> = rows
        .iter()
        .map(|r| ForecastRecord {
            horizon: r.horizon,
            predicted: r.predicted,
            outcome: r.outcome,
        })
        .collect();
    let b = brier_score(&recs)?;
    let a = avg_pred_prob(&recs)?;
    tables::write_forecasts(&rows, create(out, "forecasts.csv")?)?;
    let mut w = csv_writer(create(out, "score_summary.csv")?);
    w.write_record(["scheme", "n", "brier", "avg_prob"])
        .map_err(lasso_hmm::Error::from)?;
    w.write_record([
        scheme.as_str().to_string(),
        rows.len().to_string(),
        tables::fmt_num(b),
        tables::fmt_num(a),
    ])
    .map_err(lasso_hmm::Error::from)?;
    w.flush()?;
    Ok(())
}
