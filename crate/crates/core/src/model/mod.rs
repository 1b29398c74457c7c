//! Markov-switching Bernoulli-logit model: specification, parameters,
//! observation panels and the forward-algorithm likelihood.
//!
//! Only the intercept switches with the hidden state; slopes are shared.

mod likelihood;
mod params;

pub(crate) mod likelihood_internals {
    pub(crate) use super::likelihood::{backward, emissions, forward};
}

pub use likelihood::{
    filtered_last, inv_logit, linear_predictor, loglik_and_gradient, sequence_loglik,
    stationary_distribution, total_loglik,
};
pub use params::Params;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimensions of the model and which slopes enter the penalty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub n_states: usize,
    pub n_covariates: usize,
    /// One flag per slope; `true` means the slope is penalized.
    pub penalized_mask: Vec<bool>,
}

impl ModelSpec {
    /// Spec with every slope penalized.
    pub fn new(n_states: usize, n_covariates: usize) -> Result<Self> {
        Self::with_mask(n_states, vec![true; n_covariates])
    }

    pub fn with_mask(n_states: usize, penalized_mask: Vec<bool>) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidSpec("n_states must be positive".into()));
        }
        Ok(Self {
            n_states,
            n_covariates: penalized_mask.len(),
            penalized_mask,
        })
    }

    /// Number of transition-matrix working parameters, N(N-1).
    pub fn n_tpm_params(&self) -> usize {
        self.n_states * (self.n_states - 1)
    }

    /// Parameters that are always free: intercepts plus t.p.m. entries.
    pub fn n_unpenalized(&self) -> usize {
        self.n_states + self.n_tpm_params()
    }

    /// Length of the full working-parameter vector.
    pub fn n_working(&self) -> usize {
        self.n_unpenalized() + self.n_covariates
    }
}

/// One player's binary outcome series with its covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<S> {
    pub id: String,
    outcomes: Vec<bool>,
    /// Row-major `T x K`.
    covariates: Vec<S>,
    n_covariates: usize,
}

impl<S: Scalar> Sequence<S> {
    pub fn new(
        id: impl Into<String>,
        outcomes: Vec<bool>,
        covariates: Vec<S>,
        n_covariates: usize,
    ) -> Result<Self> {
        let id = id.into();
        if outcomes.is_empty() {
            return Err(Error::InvalidSequence {
                id,
                reason: "sequence has no observations".into(),
            });
        }
        if covariates.len() != outcomes.len() * n_covariates {
            return Err(Error::InvalidSequence {
                id,
                reason: format!(
                    "{} covariate values for {} rows of width {}",
                    covariates.len(),
                    outcomes.len(),
                    n_covariates
                ),
            });
        }
        if let Some(pos) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSequence {
                id,
                reason: format!("non-finite covariate at row {}", pos / n_covariates.max(1)),
            });
        }
        Ok(Self {
            id,
            outcomes,
            covariates,
            n_covariates,
        })
    }

    /// Sequence built from per-row covariate vectors.
    pub fn from_rows(id: impl Into<String>, outcomes: Vec<bool>, rows: &[Vec<S>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let id = id.into();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidSequence {
                id,
                reason: "ragged covariate rows".into(),
            });
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::new(id, outcomes, flat, k)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn outcome(&self, t: usize) -> bool {
        self.outcomes[t]
    }

    pub fn row(&self, t: usize) -> &[S] {
        &self.covariates[t * self.n_covariates..(t + 1) * self.n_covariates]
    }

    pub fn covariates(&self) -> &[S] {
        &self.covariates
    }
}

/// Independent sequences sharing one covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet<S> {
    n_covariates: usize,
    sequences: Vec<Sequence<S>>,
}

impl<S: Scalar> SequenceSet<S> {
    pub fn new(sequences: Vec<Sequence<S>>) -> Result<Self> {
        let n_covariates = sequences.first().map_or(0, |s| s.n_covariates);
        for s in &sequences {
            if s.n_covariates != n_covariates {
                return Err(Error::DimensionMismatch {
                    what: "covariates per sequence",
                    expected: n_covariates,
                    actual: s.n_covariates,
                });
            }
        }
        Ok(Self {
            n_covariates,
            sequences,
        })
    }

    pub fn single(sequence: Sequence<S>) -> Self {
        Self {
            n_covariates: sequence.n_covariates,
            sequences: vec![sequence],
        }
    }

    pub fn sequences(&self) -> &[Sequence<S>] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    /// Total number of observations across sequences.
    pub fn n_obs(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    /// Fraction of successes over all observations.
    pub fn success_rate(&self) -> f64 {
        let n = self.n_obs();
        if n == 0 {
            return f64::NAN;
        }
        let ones: usize = self
            .sequences
            .iter()
            .map(|s| s.outcomes.iter().filter(|&&y| y).count())
            .sum();
        ones as f64 / n as f64
    }

    pub fn get(&self, id: &str) -> Option<&Sequence<S>> {
        self.sequences.iter().find(|s| s.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_rejects_empty_and_ragged() {
        assert!(Sequence::<f64>::new("a", vec![], vec![], 2).is_err());
        assert!(Sequence::new("a", vec![true], vec![1.0], 2).is_err());
        assert!(Sequence::new("a", vec![true], vec![f64::NAN, 1.0], 2).is_err());
        assert!(Sequence::from_rows("a", vec![true, false], &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn set_rejects_mixed_widths() {
        let a = Sequence::new("a", vec![true], vec![1.0], 1).unwrap();
        let b = Sequence::new("b", vec![true], vec![1.0, 2.0], 2).unwrap();
        assert!(SequenceSet::new(vec![a, b]).is_err());
    }

    #[test]
    fn spec_counts() {
        let spec = ModelSpec::new(2, 5).unwrap();
        assert_eq!(spec.n_tpm_params(), 2);
        assert_eq!(spec.n_unpenalized(), 4);
        assert_eq!(spec.n_working(), 9);
        assert!(ModelSpec::new(0, 1).is_err());
    }
}
