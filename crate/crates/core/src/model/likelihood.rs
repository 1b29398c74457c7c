//! Scaled forward/backward recursions and the analytic gradient of the
//! log-likelihood with respect to the working parameters.

use super::params::{check_stochastic, Params};
use super::{Sequence, SequenceSet};
use crate::error::{Error, Result};
use crate::scalar::{softplus, Scalar};

/// Logistic function, `1 / (1 + exp(-eta))`.
#[inline]
pub fn inv_logit<S: Scalar>(eta: S) -> S {
    if eta >= S::zero() {
        S::one() / (S::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (S::one() + e)
    }
}

/// `beta0^(state) + x' beta` for a 0-based `state`.
pub fn linear_predictor<S: Scalar>(state: usize, x: &[S], params: &Params<S>) -> Result<S> {
    if x.len() != params.slopes.len() {
        return Err(Error::DimensionMismatch {
            what: "covariate vector vs slopes",
            expected: params.slopes.len(),
            actual: x.len(),
        });
    }
    if state >= params.n_states() {
        return Err(Error::DimensionMismatch {
            what: "state index",
            expected: params.n_states(),
            actual: state,
        });
    }
    Ok(params.intercepts[state] + dot(x, &params.slopes))
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Stationary distribution `delta` of a row-stochastic matrix, i.e. the
/// left eigenvector with `delta' Gamma = delta'` and `sum(delta) = 1`.
///
/// `tpm` is row-major `n x n`. Reducible chains are rejected.
pub fn stationary_distribution<S: Scalar>(tpm: &[S], n: usize) -> Result<Vec<S>> {
    check_stochastic(tpm, n)?;
    if !is_irreducible(tpm, n) {
        return Err(Error::ReducibleChain);
    }
    // delta (I - Gamma + U) = 1'  <=>  (I - Gamma + U)' delta' = 1
    let mut a = transition_system(tpm, n);
    transpose_in_place(&mut a, n);
    let mut b = vec![S::one(); n];
    solve_in_place(&mut a, n, &mut b).ok_or(Error::ReducibleChain)?;
    // clean tiny negative round-off and renormalize
    let mut sum = S::zero();
    for v in b.iter_mut() {
        if *v < S::zero() {
            *v = S::zero();
        }
        sum += *v;
    }
    for v in b.iter_mut() {
        *v /= sum;
    }
    Ok(b)
}

/// `I - Gamma + U` with `U` the all-ones matrix.
fn transition_system<S: Scalar>(tpm: &[S], n: usize) -> Vec<S> {
    let mut a = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { S::one() } else { S::zero() };
            a[i * n + j] = id - tpm[i * n + j] + S::one();
        }
    }
    a
}

fn transpose_in_place<S: Scalar>(a: &mut [S], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            a.swap(i * n + j, j * n + i);
        }
    }
}

fn is_irreducible<S: Scalar>(tpm: &[S], n: usize) -> bool {
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { tpm[i * n + j] } else { tpm[j * n + i] };
                if !seen[j] && w > S::zero() {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Gaussian elimination with partial pivoting; solves `a x = b` in place.
fn solve_in_place<S: Scalar>(a: &mut [S], n: usize, b: &mut [S]) -> Option<()> {
    let eps = S::epsilon() * S::lit(n as f64 * 16.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| {
            a[r * n + col]
                .abs()
                .partial_cmp(&a[s * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot * n + col].abs() <= eps {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for r in (col + 1)..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == S::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(())
}

/// Per-observation emission terms, rescaled so the largest state term is 1.
pub(crate) struct Emissions<S> {
    pub n: usize,
    /// `exp(log e_t(j) - shift_t)`, row-major `T x N`.
    pub scaled: Vec<S>,
    pub shift: Vec<S>,
    /// Success probability per `(t, j)`.
    pub prob: Vec<S>,
}

pub(crate) fn emissions<S: Scalar>(seq: &Sequence<S>, params: &Params<S>) -> Emissions<S> {
    let n = params.n_states();
    let t_len = seq.len();
    let mut scaled = vec![S::zero(); t_len * n];
    let mut prob = vec![S::zero(); t_len * n];
    let mut shift = vec![S::zero(); t_len];
    let mut logs = vec![S::zero(); n];
    for t in 0..t_len {
        let xb = dot(seq.row(t), &params.slopes);
        let y = seq.outcome(t);
        for j in 0..n {
            let eta = params.intercepts[j] + xb;
            prob[t * n + j] = inv_logit(eta);
            // log p = -softplus(-eta), log(1-p) = -softplus(eta)
            logs[j] = if y { -softplus(-eta) } else { -softplus(eta) };
        }
        let m = logs
            .iter()
            .copied()
            .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
        shift[t] = m;
        for j in 0..n {
            scaled[t * n + j] = (logs[j] - m).exp();
        }
    }
    Emissions {
        n,
        scaled,
        shift,
        prob,
    }
}

/// Normalized forward (filtering) vectors with their scaling constants.
pub(crate) struct Forward<S> {
    /// `Pr(s_t = j | y_1..y_t)`, row-major `T x N`.
    pub phi: Vec<S>,
    /// Normalizer of step `t` relative to the shifted emissions.
    pub c: Vec<S>,
    pub loglik: S,
}

pub(crate) fn forward<S: Scalar>(em: &Emissions<S>, delta: &[S], params: &Params<S>) -> Forward<S> {
    let n = em.n;
    let t_len = em.shift.len();
    let mut phi = vec![S::zero(); t_len * n];
    let mut c = vec![S::zero(); t_len];
    let mut loglik = S::zero();
    let mut a = vec![S::zero(); n];
    for t in 0..t_len {
        for j in 0..n {
            let prior = if t == 0 {
                delta[j]
            } else {
                let prev = &phi[(t - 1) * n..t * n];
                (0..n).fold(S::zero(), |acc, i| acc + prev[i] * params.gamma(i, j))
            };
            a[j] = prior * em.scaled[t * n + j];
        }
        let ct: S = a.iter().copied().sum();
        c[t] = ct;
        if !(ct > S::zero()) {
            return Forward {
                phi,
                c,
                loglik: S::neg_infinity(),
            };
        }
        for j in 0..n {
            phi[t * n + j] = a[j] / ct;
        }
        loglik += ct.ln() + em.shift[t];
    }
    Forward { phi, c, loglik }
}

/// Scaled backward vectors; `phi_t(i) * b_t(i)` is the smoothed probability.
pub(crate) fn backward<S: Scalar>(em: &Emissions<S>, fwd: &Forward<S>, params: &Params<S>) -> Vec<S> {
    let n = em.n;
    let t_len = fwd.c.len();
    let mut b = vec![S::one(); t_len * n];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..n {
            let mut s = S::zero();
            for j in 0..n {
                s += params.gamma(i, j) * em.scaled[(t + 1) * n + j] * b[(t + 1) * n + j];
            }
            b[t * n + i] = s / fwd.c[t + 1];
        }
    }
    b
}

/// Log-likelihood of one sequence with the stationary initial distribution.
pub fn sequence_loglik<S: Scalar>(seq: &Sequence<S>, params: &Params<S>) -> Result<S> {
    check_dims(seq, params)?;
    let delta = stationary_distribution(params.tpm(), params.n_states())?;
    Ok(sequence_loglik_with(seq, params, &delta))
}

fn sequence_loglik_with<S: Scalar>(seq: &Sequence<S>, params: &Params<S>, delta: &[S]) -> S {
    let em = emissions(seq, params);
    forward(&em, delta, params).loglik
}

fn check_dims<S: Scalar>(seq: &Sequence<S>, params: &Params<S>) -> Result<()> {
    if seq.n_covariates() != params.slopes.len() {
        return Err(Error::DimensionMismatch {
            what: "sequence covariates vs slopes",
            expected: params.slopes.len(),
            actual: seq.n_covariates(),
        });
    }
    Ok(())
}

/// Sum of per-sequence log-likelihoods, accumulated in sequence order.
pub fn total_loglik<S: Scalar>(data: &SequenceSet<S>, params: &Params<S>) -> Result<S> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let delta = stationary_distribution(params.tpm(), params.n_states())?;
    let mut total = S::zero();
    for seq in data.sequences() {
        check_dims(seq, params)?;
        total += sequence_loglik_with(seq, params, &delta);
    }
    Ok(total)
}

/// Filtered state distribution after the last observation of `seq`.
pub fn filtered_last<S: Scalar>(seq: &Sequence<S>, params: &Params<S>) -> Result<Vec<S>> {
    check_dims(seq, params)?;
    let delta = stationary_distribution(params.tpm(), params.n_states())?;
    let em = emissions(seq, params);
    let fwd = forward(&em, &delta, params);
    if !fwd.loglik.is_finite() {
        return Err(Error::InvalidSequence {
            id: seq.id.clone(),
            reason: "sequence has zero likelihood under the parameters".into(),
        });
    }
    let n = params.n_states();
    let t = seq.len() - 1;
    Ok(fwd.phi[t * n..(t + 1) * n].to_vec())
}

/// Total log-likelihood and its gradient with respect to the working vector
/// `[theta | intercepts | slopes]` (see [`Params::to_working`]).
pub fn loglik_and_gradient<S: Scalar>(
    data: &SequenceSet<S>,
    params: &Params<S>,
) -> Result<(S, Vec<S>)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = params.n_states();
    let k = params.slopes.len();
    let tpm = params.tpm();
    let delta = stationary_distribution(tpm, n)?;

    // (I - Gamma + U)^{-1}, column by column, for d delta / d gamma.
    let a = transition_system(tpm, n);
    let mut a_inv = vec![S::zero(); n * n];
    for col in 0..n {
        let mut m = a.clone();
        let mut e = vec![S::zero(); n];
        e[col] = S::one();
        solve_in_place(&mut m, n, &mut e).ok_or(Error::ReducibleChain)?;
        for row in 0..n {
            a_inv[row * n + col] = e[row];
        }
    }

    let mut total = S::zero();
    // d loglik / d gamma_ij, treating gamma entries as free
    let mut g_gamma = vec![S::zero(); n * n];
    let mut g_int = vec![S::zero(); n];
    let mut g_slope = vec![S::zero(); k];
    let mut u_over_delta = vec![S::zero(); n];

    for seq in data.sequences() {
        check_dims(seq, params)?;
        let em = emissions(seq, params);
        let fwd = forward(&em, &delta, params);
        if !fwd.loglik.is_finite() {
            return Ok((S::neg_infinity(), vec![S::zero(); params_len(n, k)]));
        }
        total += fwd.loglik;
        let b = backward(&em, &fwd, params);
        let t_len = seq.len();
        for t in 0..t_len {
            let y = if seq.outcome(t) { S::one() } else { S::zero() };
            let mut resid_sum = S::zero();
            for i in 0..n {
                let u = fwd.phi[t * n + i] * b[t * n + i];
                let r = u * (y - em.prob[t * n + i]);
                g_int[i] += r;
                resid_sum += r;
            }
            if resid_sum != S::zero() {
                for (g, &x) in g_slope.iter_mut().zip(seq.row(t)) {
                    *g += resid_sum * x;
                }
            }
            if t > 0 {
                let prev = &fwd.phi[(t - 1) * n..t * n];
                for i in 0..n {
                    for j in 0..n {
                        g_gamma[i * n + j] +=
                            prev[i] * em.scaled[t * n + j] * b[t * n + j] / fwd.c[t];
                    }
                }
            }
        }
        // u_1(m) / delta_m without dividing by delta
        for m in 0..n {
            u_over_delta[m] += em.scaled[m] * b[m] / fwd.c[0];
        }
    }

    // initial-distribution term: d delta_m / d gamma_ij = delta_i * Ainv[j][m]
    for i in 0..n {
        for j in 0..n {
            let mut s = S::zero();
            for m in 0..n {
                s += a_inv[j * n + m] * u_over_delta[m];
            }
            g_gamma[i * n + j] += delta[i] * s;
        }
    }

    let mut grad = Vec::with_capacity(params_len(n, k));
    for i in 0..n {
        let row_mean: S = (0..n).fold(S::zero(), |acc, l| acc + tpm[i * n + l] * g_gamma[i * n + l]);
        for j in 0..n {
            if i != j {
                grad.push(tpm[i * n + j] * (g_gamma[i * n + j] - row_mean));
            }
        }
    }
    grad.extend_from_slice(&g_int);
    grad.extend_from_slice(&g_slope);
    Ok((total, grad))
}

fn params_len(n: usize, k: usize) -> usize {
    n * (n - 1) + n + k
}
