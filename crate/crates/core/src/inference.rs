//! State decoding (Viterbi and smoothed probabilities), multi-step
//! forecasting from the filtered state, and forecast scores.

use crate::error::{Error, Result};
use crate::model::likelihood_internals::{backward, emissions, forward};
use crate::model::{filtered_last, inv_logit, stationary_distribution, Params, Sequence};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct StateDecoding<S> {
    /// 0-based most likely state per observation.
    pub viterbi: Vec<usize>,
    /// `Pr(s_t = i | y_1..y_T)`, one row per observation.
    pub smoothed: Vec<Vec<S>>,
}

/// Viterbi path and forward-backward smoothed probabilities. Viterbi ties
/// resolve to the lower state index.
pub fn decode<S: Scalar>(seq: &Sequence<S>, params: &Params<S>) -> Result<StateDecoding<S>> {
    if seq.n_covariates() != params.n_covariates() {
        return Err(Error::DimensionMismatch {
            what: "sequence covariates vs slopes",
            expected: params.n_covariates(),
            actual: seq.n_covariates(),
        });
    }
    let n = params.n_states();
    let t_len = seq.len();
    let delta = stationary_distribution(params.tpm(), n)?;
    let em = emissions(seq, params);
    let fwd = forward(&em, &delta, params);
    if !fwd.loglik.is_finite() {
        return Err(Error::InvalidSequence {
            id: seq.id.clone(),
            reason: "sequence has zero likelihood under the parameters".into(),
        });
    }
    let b = backward(&em, &fwd, params);
    let smoothed = (0..t_len)
        .map(|t| {
            let mut row: Vec<S> = (0..n).map(|i| fwd.phi[t * n + i] * b[t * n + i]).collect();
            let s: S = row.iter().copied().sum();
            for v in row.iter_mut() {
                *v /= s;
            }
            row
        })
        .collect();

    // Viterbi in log space on the shifted emissions (shifts do not change
    // the argmax)
    let log_gamma: Vec<S> = params.tpm().iter().map(|g| g.ln()).collect();
    let log_em = |t: usize, j: usize| em.scaled[t * n + j].ln();
    let mut score: Vec<S> = (0..n).map(|j| delta[j].ln() + log_em(0, j)).collect();
    let mut back = vec![0usize; t_len * n];
    let mut next = vec![S::zero(); n];
    for t in 1..t_len {
        for j in 0..n {
            let mut arg = 0;
            let mut best = S::neg_infinity();
            for i in 0..n {
                let v = score[i] + log_gamma[i * n + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t * n + j] = arg;
            next[j] = best + log_em(t, j);
        }
        std::mem::swap(&mut score, &mut next);
    }
    let mut state = 0;
    for j in 1..n {
        if score[j] > score[state] {
            state = j;
        }
    }
    let mut viterbi = vec![0usize; t_len];
    viterbi[t_len - 1] = state;
    for t in (1..t_len).rev() {
        state = back[t * n + state];
        viterbi[t - 1] = state;
    }
    Ok(StateDecoding { viterbi, smoothed })
}

/// Success probabilities for `H` steps after `seq_train`; `covariates_test`
/// is row-major `H x K`. No test outcomes are used.
pub fn forecast<S: Scalar>(
    seq_train: &Sequence<S>,
    covariates_test: &[S],
    params: &Params<S>,
) -> Result<Vec<S>> {
    let phi = filtered_last(seq_train, params)?;
    forecast_from_filter(&phi, covariates_test, params)
}

/// `pi_h = sum_i (phi Gamma^h)_i * inv_logit(beta0_i + x_h' beta)`.
pub fn forecast_from_filter<S: Scalar>(
    filter: &[S],
    covariates_test: &[S],
    params: &Params<S>,
) -> Result<Vec<S>> {
    let n = params.n_states();
    let k = params.n_covariates();
    if filter.len() != n {
        return Err(Error::DimensionMismatch {
            what: "filter vs states",
            expected: n,
            actual: filter.len(),
        });
    }
    if k == 0 {
        if !covariates_test.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "test covariates for a model without covariates",
                expected: 0,
                actual: covariates_test.len(),
            });
        }
        return Err(Error::InvalidRecord(
            "horizon cannot be inferred without covariates; use forecast_horizon".into(),
        ));
    }
    if covariates_test.is_empty() || covariates_test.len() % k != 0 {
        return Err(Error::DimensionMismatch {
            what: "test covariate values (must be a positive multiple of K)",
            expected: k,
            actual: covariates_test.len(),
        });
    }
    let rows: Vec<&[S]> = covariates_test.chunks(k).collect();
    Ok(propagate(filter, &rows, params))
}

/// Forecast for a model with or without covariates over an explicit horizon.
pub fn forecast_horizon<S: Scalar>(filter: &[S], rows: &[&[S]], params: &Params<S>) -> Result<Vec<S>> {
    if filter.len() != params.n_states() {
        return Err(Error::DimensionMismatch {
            what: "filter vs states",
            expected: params.n_states(),
            actual: filter.len(),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if let Some(r) = rows.iter().find(|r| r.len() != params.n_covariates()) {
        return Err(Error::DimensionMismatch {
            what: "test covariate row",
            expected: params.n_covariates(),
            actual: r.len(),
        });
    }
    Ok(propagate(filter, rows, params))
}

fn propagate<S: Scalar>(filter: &[S], rows: &[&[S]], params: &Params<S>) -> Vec<S> {
    let n = params.n_states();
    let mut dist = filter.to_vec();
    let mut next = vec![S::zero(); n];
    rows.iter()
        .map(|x| {
            for (j, v) in next.iter_mut().enumerate() {
                *v = (0..n).fold(S::zero(), |acc, i| acc + dist[i] * params.gamma(i, j));
            }
            std::mem::swap(&mut dist, &mut next);
            let xb = x.iter().zip(&params.slopes).fold(S::zero(), |a, (&u, &v)| a + u * v);
            (0..n).fold(S::zero(), |acc, i| acc + dist[i] * inv_logit(params.intercepts[i] + xb))
        })
        .collect()
}

/// One scored out-of-sample prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord<S> {
    /// 1-based horizon.
    pub horizon: usize,
    pub predicted: S,
    pub outcome: bool,
}

impl<S: Scalar> ForecastRecord<S> {
    pub fn zip(predicted: &[S], outcomes: &[bool]) -> Vec<Self> {
        predicted
            .iter()
            .zip(outcomes)
            .enumerate()
            .map(|(i, (&p, &y))| ForecastRecord {
                horizon: i + 1,
                predicted: p,
                outcome: y,
            })
            .collect()
    }
}

/// Mean squared difference between prediction and outcome.
pub fn brier_score<S: Scalar>(records: &[ForecastRecord<S>]) -> Result<S> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let sum: S = records
        .iter()
        .map(|r| {
            let y = if r.outcome { S::one() } else { S::zero() };
            (r.predicted - y) * (r.predicted - y)
        })
        .sum();
    Ok(sum / S::lit(records.len() as f64))
}

/// Mean probability assigned to the realized outcome.
pub fn avg_pred_prob<S: Scalar>(records: &[ForecastRecord<S>]) -> Result<S> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let sum: S = records
        .iter()
        .map(|r| if r.outcome { r.predicted } else { S::one() - r.predicted })
        .sum();
    Ok(sum / S::lit(records.len() as f64))
}
