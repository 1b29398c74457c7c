//! Comma-delimited output tables. Reals are written with 17 significant
//! digits so they parse back to the same `f64`.

use std::io::Write;

use crate::data::{DescriptiveRow, DesignLayout};
use crate::error::Result;
use crate::fit::FitResult;
use crate::inference::StateDecoding;
use crate::model::stationary_distribution;
use crate::selection::{select_index, PathResult, Scheme};
use crate::simulation::{SchemeSummary, StudyRow};

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

/// Long-format coefficient path: one row per (lambda, slope).
/// With `relaxed`, the refitted estimates are written instead.
pub fn write_coefficient_path<W: Write>(
    path: &PathResult<f64>,
    names: &[String],
    relaxed: bool,
    w: W,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["lambda", "index", "name", "estimate"])?;
    for pt in &path.points {
        let fit = if relaxed {
            match &pt.relaxed {
                Some(r) => r,
                None => continue,
            }
        } else {
            &pt.lasso
        };
        for (k, b) in fit.params.slopes.iter().enumerate() {
            let name = names.get(k).cloned().unwrap_or_else(|| format!("x{}", k + 1));
            out.write_record([fmt_num(pt.lambda), (k + 1).to_string(), name, fmt_num(*b)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-lambda fit statistics and information criteria, with the schemes
/// that select each point.
pub fn write_criteria_path<W: Write>(path: &PathResult<f64>, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "lambda",
        "converged",
        "df",
        "loglik",
        "aic",
        "bic",
        "relaxed_converged",
        "relaxed_df",
        "relaxed_loglik",
        "relaxed_aic",
        "relaxed_bic",
        "selected_by",
    ])?;
    let chosen: Vec<(Scheme, usize)> = Scheme::ALL
        .into_iter()
        .filter_map(|s| select_index(path, s).ok().map(|i| (s, i)))
        .collect();
    for (i, pt) in path.points.iter().enumerate() {
        let c = &pt.lasso_criteria;
        let r = pt.relaxed_criteria.as_ref();
        let selected: Vec<&str> = chosen
            .iter()
            .filter(|(_, j)| *j == i)
            .map(|(s, _)| s.as_str())
            .collect();
        out.write_record([
            fmt_num(pt.lambda),
            pt.lasso.converged.to_string(),
            c.df.to_string(),
            fmt_num(c.loglik),
            fmt_num(c.aic),
            fmt_num(c.bic),
            pt.relaxed.as_ref().map(|f| f.converged.to_string()).unwrap_or_default(),
            r.map(|c| c.df.to_string()).unwrap_or_default(),
            fmt_opt(r.map(|c| c.loglik)),
            fmt_opt(r.map(|c| c.aic)),
            fmt_opt(r.map(|c| c.bic)),
            selected.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Estimates of every slope under each scheme; slopes outside a scheme's
/// active set are written as exact zeros.
pub fn write_selected_models<W: Write>(names: &[String], fits: &[(Scheme, &FitResult<f64>)], w: W) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["covariate".to_string()];
    header.extend(fits.iter().map(|(s, _)| s.as_str().to_string()));
    out.write_record(&header)?;
    for (k, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        for (_, f) in fits {
            let v = if f.active_set.contains(&k) {
                f.params.slopes[k]
            } else {
                0.0
            };
            row.push(fmt_num(v));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Labels by intercept order: the highest-intercept state is "hot", the
/// lowest "cold".
pub fn state_labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match i {
            0 if n > 1 => "hot".to_string(),
            i if n > 1 && i == n - 1 => "cold".to_string(),
            i => format!("state {}", i + 1),
        })
        .collect()
}

/// Transition matrix, intercepts and stationary distribution per scheme.
/// States are expected in canonical (descending intercept) order.
pub fn write_tpm_report<W: Write>(fits: &[(Scheme, &FitResult<f64>)], w: W) -> Result<()> {
    let mut out = writer(w);
    let n = fits.first().map_or(0, |(_, f)| f.params.n_states());
    let mut header: Vec<String> = ["scheme", "state", "label", "intercept", "stationary"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n).map(|j| format!("gamma_to_{j}")));
    out.write_record(&header)?;
    let labels = state_labels(n);
    for (scheme, f) in fits {
        let p = &f.params;
        let delta = stationary_distribution(p.tpm(), n).ok();
        for i in 0..n {
            let mut row = vec![
                scheme.as_str().to_string(),
                (i + 1).to_string(),
                labels[i].clone(),
                fmt_num(p.intercepts[i]),
                fmt_opt(delta.as_ref().map(|d| d[i])),
            ];
            row.extend(p.tpm_row(i).iter().map(|&g| fmt_num(g)));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Viterbi path (1-based states) and smoothed state probabilities.
pub fn write_decodings<W: Write>(decodings: &[(String, StateDecoding<f64>)], w: W) -> Result<()> {
    let mut out = writer(w);
    let n = decodings.first().map_or(0, |(_, d)| d.smoothed.first().map_or(0, Vec::len));
    let mut header: Vec<String> = ["player_id", "t", "viterbi_state"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|j| format!("prob_state_{j}")));
    out.write_record(&header)?;
    for (id, d) in decodings {
        for (t, (&s, probs)) in d.viterbi.iter().zip(&d.smoothed).enumerate() {
            let mut row = vec![id.clone(), (t + 1).to_string(), (s + 1).to_string()];
            row.extend(probs.iter().map(|&p| fmt_num(p)));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const STUDY_HEADER: [&str; 11] = [
    "run",
    "scheme",
    "mse_beta",
    "mse_intercepts",
    "mse_tpm",
    "tpr",
    "fpr",
    "brier",
    "avg_prob",
    "seconds",
    "failed",
];

/// Long-format study table, one row per run and scheme.
pub fn write_study<W: Write>(rows: &[StudyRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(STUDY_HEADER)?;
    for r in rows {
        out.write_record([
            (r.run + 1).to_string(),
            r.scheme.as_str().to_string(),
            fmt_num(r.mse_beta),
            fmt_num(r.mse_intercepts),
            fmt_num(r.mse_tpm),
            fmt_num(r.tpr),
            fmt_num(r.fpr),
            fmt_num(r.brier),
            fmt_num(r.avg_prob),
            fmt_num(r.seconds),
            r.failed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Selected lambda, fit summary and recovered parameters per run and scheme.
pub fn write_study_details<W: Write>(rows: &[StudyRow], n_states: usize, w: W) -> Result<()> {
    let mut out = writer(w);
    let mut header: Vec<String> = ["run", "scheme", "lambda", "lambda_index", "loglik", "n_active"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n_states).map(|i| format!("gamma_{i}{i}")));
    header.extend((1..=n_states).map(|i| format!("intercept_{i}")));
    header.push("error".into());
    out.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            (r.run + 1).to_string(),
            r.scheme.as_str().to_string(),
            fmt_num(r.lambda),
            r.lambda_index.map(|i| (i + 1).to_string()).unwrap_or_default(),
            fmt_num(r.loglik),
            r.n_active.to_string(),
        ];
        for i in 0..n_states {
            row.push(fmt_opt(r.tpm_diagonal.get(i).copied()));
        }
        for i in 0..n_states {
            row.push(fmt_opt(r.intercepts.get(i).copied()));
        }
        row.push(r.error.clone().unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-scheme medians over non-failed runs.
pub fn write_medians<W: Write>(summaries: &[SchemeSummary], w: W) -> Result<()> {
    let mut out = writer(w);
    let n = summaries.iter().map(|s| s.tpm_diagonal.len()).max().unwrap_or(0);
    let mut header: Vec<String> = [
        "scheme",
        "n_ok",
        "n_failed",
        "mse_beta",
        "mse_intercepts",
        "mse_tpm",
        "tpr",
        "fpr",
        "brier",
        "avg_prob",
        "seconds",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n).map(|i| format!("gamma_{i}{i}")));
    out.write_record(&header)?;
    for s in summaries {
        let mut row = vec![
            s.scheme.as_str().to_string(),
            s.n_ok.to_string(),
            s.n_failed.to_string(),
        ];
        row.extend(
            [
                s.mse_beta,
                s.mse_intercepts,
                s.mse_tpm,
                s.tpr,
                s.fpr,
                s.brier,
                s.avg_prob,
                s.seconds,
            ]
            .map(fmt_num),
        );
        for i in 0..n {
            row.push(fmt_opt(s.tpm_diagonal.get(i).copied()));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Column catalog with the standardization applied to each column.
pub fn write_catalog<W: Write>(layout: &DesignLayout, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["index", "name", "kind", "center", "scale"])?;
    for (k, c) in layout.columns.iter().enumerate() {
        let kind = match c.kind {
            crate::data::ColumnKind::Binary => "binary",
            crate::data::ColumnKind::Metric => "metric",
        };
        out.write_record([
            (k + 1).to_string(),
            c.name.clone(),
            kind.to_string(),
            fmt_num(c.center),
            fmt_num(c.scale),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_descriptives<W: Write>(rows: &[DescriptiveRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["variable", "mean", "sd", "min", "max"])?;
    for r in rows {
        out.write_record([
            r.variable.to_string(),
            fmt_opt(r.mean),
            fmt_opt(r.sd),
            fmt_num(r.min),
            fmt_num(r.max),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One scored observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub player_id: String,
    pub horizon: usize,
    pub predicted: f64,
    pub outcome: bool,
}

pub fn write_forecasts<W: Write>(rows: &[ForecastRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["player_id", "horizon", "predicted", "outcome"])?;
    for r in rows {
        out.write_record([
            r.player_id.clone(),
            r.horizon.to_string(),
            fmt_num(r.predicted),
            u8::from(r.outcome).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
