//! Smooth L1 penalty and the penalized log-likelihood
//! `loglik - lambda * sum_k |beta_k|` over the masked slopes.

use crate::error::{Error, Result};
use crate::model::{loglik_and_gradient, total_loglik, ModelSpec, Params, SequenceSet};
use crate::scalar::Scalar;

/// How `|beta|` is smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyMode {
    /// `sqrt(beta^2 + c)`: symmetric and differentiable everywhere.
    #[default]
    SmoothSymmetric,
    /// `sqrt((beta + c)^2) = |beta + c|`, kept for fidelity comparisons.
    PaperLiteral,
}

impl PenaltyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyMode::SmoothSymmetric => "smooth",
            PenaltyMode::PaperLiteral => "literal",
        }
    }
}

impl std::str::FromStr for PenaltyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "smooth" | "smooth-symmetric" => Ok(PenaltyMode::SmoothSymmetric),
            "literal" | "paper-literal" => Ok(PenaltyMode::PaperLiteral),
            other => Err(format!("unknown penalty mode {other:?} (expected smooth or literal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig<S> {
    pub lambda: S,
    pub c: S,
    pub mode: PenaltyMode,
}

pub const DEFAULT_SMOOTHING: f64 = 1e-5;

impl<S: Scalar> PenaltyConfig<S> {
    pub fn new(lambda: S, c: S, mode: PenaltyMode) -> Result<Self> {
        if !(lambda >= S::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidPenalty(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(c > S::zero()) || !c.is_finite() {
            return Err(Error::InvalidPenalty(format!("c must be > 0, got {c}")));
        }
        Ok(Self { lambda, c, mode })
    }

    /// Smooth-symmetric penalty with the default `c`.
    pub fn with_lambda(lambda: S) -> Result<Self> {
        Self::new(lambda, S::lit(DEFAULT_SMOOTHING), PenaltyMode::SmoothSymmetric)
    }

    pub fn unpenalized() -> Self {
        Self {
            lambda: S::zero(),
            c: S::lit(DEFAULT_SMOOTHING),
            mode: PenaltyMode::SmoothSymmetric,
        }
    }
}

/// Smoothed absolute value of one coefficient.
#[inline]
pub fn l1_smooth<S: Scalar>(beta: S, config: &PenaltyConfig<S>) -> S {
    match config.mode {
        PenaltyMode::SmoothSymmetric => (beta * beta + config.c).sqrt(),
        PenaltyMode::PaperLiteral => ((beta + config.c) * (beta + config.c)).sqrt(),
    }
}

/// Derivative of [`l1_smooth`] with respect to `beta`.
#[inline]
pub fn l1_smooth_derivative<S: Scalar>(beta: S, config: &PenaltyConfig<S>) -> S {
    match config.mode {
        PenaltyMode::SmoothSymmetric => beta / (beta * beta + config.c).sqrt(),
        PenaltyMode::PaperLiteral => {
            let z = beta + config.c;
            if z > S::zero() {
                S::one()
            } else if z < S::zero() {
                -S::one()
            } else {
                S::zero()
            }
        }
    }
}

/// `lambda * sum` of smoothed magnitudes over the penalized slopes.
pub fn penalty_term<S: Scalar>(slopes: &[S], mask: &[bool], config: &PenaltyConfig<S>) -> S {
    if config.lambda == S::zero() {
        return S::zero();
    }
    let s: S = slopes
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&b, _)| l1_smooth(b, config))
        .sum();
    config.lambda * s
}

fn check_spec<S: Scalar>(params: &Params<S>, spec: &ModelSpec) -> Result<()> {
    if spec.penalized_mask.len() != params.slopes.len() {
        return Err(Error::DimensionMismatch {
            what: "penalized mask vs slopes",
            expected: params.slopes.len(),
            actual: spec.penalized_mask.len(),
        });
    }
    if spec.n_states != params.n_states() {
        return Err(Error::DimensionMismatch {
            what: "states in spec vs params",
            expected: spec.n_states,
            actual: params.n_states(),
        });
    }
    Ok(())
}

pub fn penalized_loglik<S: Scalar>(
    data: &SequenceSet<S>,
    params: &Params<S>,
    config: &PenaltyConfig<S>,
    spec: &ModelSpec,
) -> Result<S> {
    check_spec(params, spec)?;
    let ll = total_loglik(data, params)?;
    Ok(ll - penalty_term(&params.slopes, &spec.penalized_mask, config))
}

/// Penalized log-likelihood with its gradient in working coordinates.
pub fn penalized_loglik_and_gradient<S: Scalar>(
    data: &SequenceSet<S>,
    params: &Params<S>,
    config: &PenaltyConfig<S>,
    spec: &ModelSpec,
) -> Result<(S, Vec<S>)> {
    check_spec(params, spec)?;
    let (ll, mut grad) = loglik_and_gradient(data, params)?;
    let offset = spec.n_unpenalized();
    if config.lambda != S::zero() {
        for (k, (&b, &m)) in params.slopes.iter().zip(&spec.penalized_mask).enumerate() {
            if m {
                grad[offset + k] -= config.lambda * l1_smooth_derivative(b, config);
            }
        }
    }
    Ok((ll - penalty_term(&params.slopes, &spec.penalized_mask, config), grad))
}
