//! Tuning-parameter grid, information criteria, regularization paths and
//! the five model-selection schemes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_from_starts, random_starts, relaxed_refit, FitConfig, FitResult};
use crate::model::{ModelSpec, Params, SequenceSet};
use crate::penalty::{PenaltyConfig, PenaltyMode};
use crate::scalar::Scalar;

/// Strictly descending, non-negative tuning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid<S> {
    values: Vec<S>,
}

impl<S: Scalar> LambdaGrid<S> {
    /// Log-spaced grid from `max` down to `min`, both included.
    pub fn log_spaced(len: usize, max: S, min: S) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidGrid(format!("length must be >= 2, got {len}")));
        }
        if !(min > S::zero()) || !(max > min) || !max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "need max > min > 0, got max = {max}, min = {min}"
            )));
        }
        let (lmax, lmin) = (max.ln(), min.ln());
        let steps = S::lit((len - 1) as f64);
        let mut values: Vec<S> = (0..len)
            .map(|i| (lmax + (lmin - lmax) * S::lit(i as f64) / steps).exp())
            .collect();
        values[0] = max;
        values[len - 1] = min;
        Ok(Self { values })
    }

    /// Grid from explicit values (sorted descending, duplicates removed).
    pub fn from_values(values: &[S]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("no lambda values".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < S::zero()) {
            return Err(Error::InvalidGrid(format!("lambda must be finite and >= 0, got {v}")));
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        v.dedup();
        Ok(Self { values: v })
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Shorthand for [`LambdaGrid::log_spaced`].
pub fn make_grid<S: Scalar>(len: usize, max: S, min: S) -> Result<LambdaGrid<S>> {
    LambdaGrid::log_spaced(len, max, min)
}

/// `(AIC, BIC)` from an unpenalized log-likelihood.
pub fn information_criteria<S: Scalar>(loglik: S, df: usize, n_obs: usize) -> (S, S) {
    let two = S::lit(2.0);
    let df_s = S::lit(df as f64);
    let base = -two * loglik;
    (base + two * df_s, base + S::lit(n_obs as f64).ln() * df_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Mle,
    LassoAic,
    LassoBic,
    RelaxedAic,
    RelaxedBic,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Mle,
        Scheme::LassoAic,
        Scheme::LassoBic,
        Scheme::RelaxedAic,
        Scheme::RelaxedBic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mle => "MLE",
            Scheme::LassoAic => "LASSO-AIC",
            Scheme::LassoBic => "LASSO-BIC",
            Scheme::RelaxedAic => "relaxed-AIC",
            Scheme::RelaxedBic => "relaxed-BIC",
        }
    }

    pub fn is_relaxed(self) -> bool {
        matches!(self, Scheme::RelaxedAic | Scheme::RelaxedBic)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|sc| sc.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

/// Criteria of one fit on the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criteria<S> {
    pub df: usize,
    pub loglik: S,
    pub aic: S,
    pub bic: S,
}

impl<S: Scalar> Criteria<S> {
    pub fn of(fit: &FitResult<S>, n_obs: usize) -> Self {
        let df = fit.df();
        let (aic, bic) = information_criteria(fit.loglik, df, n_obs);
        Self {
            df,
            loglik: fit.loglik,
            aic,
            bic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint<S> {
    pub lambda: S,
    pub lasso: FitResult<S>,
    pub lasso_criteria: Criteria<S>,
    pub relaxed: Option<FitResult<S>>,
    pub relaxed_criteria: Option<Criteria<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult<S> {
    /// In grid order (descending lambda).
    pub points: Vec<PathPoint<S>>,
    /// Observation count used in the BIC penalty.
    pub n_obs: usize,
}

/// Fit the LASSO path in descending lambda, starting each point from the
/// previous solution and from the configured random starts, then refit
/// every point without penalty on its active set.
pub fn fit_path<S: Scalar>(
    data: &SequenceSet<S>,
    spec: &ModelSpec,
    grid: &LambdaGrid<S>,
    c: S,
    mode: PenaltyMode,
    config: &FitConfig,
    relaxed: bool,
) -> Result<PathResult<S>> {
    let n_obs = data.n_obs();
    let mut lasso_fits: Vec<FitResult<S>> = Vec::with_capacity(grid.len());
    for &lambda in grid.values() {
        let penalty = PenaltyConfig::new(lambda, c, mode)?;
        // warm start plus fresh random starts: the warm chain alone can stay
        // in a degenerate optimum found at large lambda
        let mut starts: Vec<Params<S>> = lasso_fits.last().map(|f| f.params.clone()).into_iter().collect();
        starts.extend(random_starts(data, spec, config));
        let res = fit_from_starts(data, spec, &penalty, config, &starts)?;
        lasso_fits.push(res);
    }

    let relaxed_fits: Vec<Option<FitResult<S>>> = if relaxed {
        lasso_fits
            .par_iter()
            .map(|first| relaxed_refit(data, spec, first, config).map(Some))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![None; lasso_fits.len()]
    };

    let points = grid
        .values()
        .iter()
        .zip(lasso_fits)
        .zip(relaxed_fits)
        .map(|((&lambda, lasso), relaxed)| PathPoint {
            lambda,
            lasso_criteria: Criteria::of(&lasso, n_obs),
            relaxed_criteria: relaxed.as_ref().map(|r| Criteria::of(r, n_obs)),
            lasso,
            relaxed,
        })
        .collect();
    Ok(PathResult { points, n_obs })
}

/// Unpenalized fit started from the random starts and from every solution
/// on `path`, so its log-likelihood dominates the penalized fits.
pub fn fit_mle<S: Scalar>(
    data: &SequenceSet<S>,
    spec: &ModelSpec,
    config: &FitConfig,
    path: Option<&PathResult<S>>,
) -> Result<FitResult<S>> {
    let mut starts = random_starts(data, spec, config);
    if let Some(p) = path {
        for pt in &p.points {
            starts.push(pt.lasso.params.clone());
            if let Some(r) = &pt.relaxed {
                starts.push(r.params.clone());
            }
        }
    }
    fit_from_starts(data, spec, &PenaltyConfig::unpenalized(), config, &starts)
}

/// Index of the point chosen by `scheme`. Unconverged fits are skipped; ties
/// go to the larger lambda.
pub fn select_index<S: Scalar>(path: &PathResult<S>, scheme: Scheme) -> Result<usize> {
    let mut order: Vec<usize> = (0..path.points.len()).collect();
    order.sort_by(|&a, &b| {
        path.points[b]
            .lambda
            .partial_cmp(&path.points[a].lambda)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    if scheme == Scheme::Mle {
        let idx = order
            .iter()
            .copied()
            .find(|&i| path.points[i].lambda == S::zero())
            .ok_or(Error::NoUnpenalizedPoint)?;
        if !path.points[idx].lasso.converged {
            return Err(Error::NoConvergedPoint);
        }
        return Ok(idx);
    }

    let criterion = |i: usize| -> Option<S> {
        let p = &path.points[i];
        let (fit, crit) = if scheme.is_relaxed() {
            (p.relaxed.as_ref()?, p.relaxed_criteria?)
        } else {
            (&p.lasso, p.lasso_criteria)
        };
        if !fit.converged {
            return None;
        }
        Some(match scheme {
            Scheme::LassoAic | Scheme::RelaxedAic => crit.aic,
            _ => crit.bic,
        })
    };

    let mut best: Option<(usize, S)> = None;
    for i in order {
        if let Some(v) = criterion(i) {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoConvergedPoint)
}

/// The fit chosen by `scheme` (the relaxed refit for relaxed schemes).
pub fn select<S: Scalar>(path: &PathResult<S>, scheme: Scheme) -> Result<&FitResult<S>> {
    let i = select_index(path, scheme)?;
    let p = &path.points[i];
    Ok(if scheme.is_relaxed() {
        p.relaxed.as_ref().expect("relaxed schemes only pick refitted points")
    } else {
        &p.lasso
    })
}
