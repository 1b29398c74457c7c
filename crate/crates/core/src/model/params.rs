use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Natural-scale parameters: transition matrix, state intercepts and shared
/// slopes (both on the logit scale).
///
/// The working form used by the optimizer is
/// `[theta_ij (i != j, row-major) | intercepts | slopes]` with
/// `gamma_ij = exp(theta_ij) / (1 + sum_{l != i} exp(theta_il))`, i.e. a
/// multinomial logit per row with the diagonal as reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<S> {
    n_states: usize,
    /// Row-major `N x N`.
    tpm: Vec<S>,
    pub intercepts: Vec<S>,
    pub slopes: Vec<S>,
}

const STOCHASTIC_TOL: f64 = 1e-9;

impl<S: Scalar> Params<S> {
    /// Validating constructor; `tpm` is given as rows.
    pub fn new(tpm: Vec<Vec<S>>, intercepts: Vec<S>, slopes: Vec<S>) -> Result<Self> {
        let n = intercepts.len();
        if n == 0 {
            return Err(Error::InvalidSpec("at least one state required".into()));
        }
        if tpm.len() != n || tpm.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "transition matrix rows/cols vs intercepts",
                expected: n,
                actual: tpm.len(),
            });
        }
        let p = Self {
            n_states: n,
            tpm: tpm.into_iter().flatten().collect(),
            intercepts,
            slopes,
        };
        p.check_stochastic()?;
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_covariates(&self) -> usize {
        self.slopes.len()
    }

    #[inline]
    pub fn gamma(&self, i: usize, j: usize) -> S {
        self.tpm[i * self.n_states + j]
    }

    pub fn tpm_row(&self, i: usize) -> &[S] {
        &self.tpm[i * self.n_states..(i + 1) * self.n_states]
    }

    /// Transition matrix as a flat row-major slice.
    pub fn tpm(&self) -> &[S] {
        &self.tpm
    }

    pub fn tpm_rows(&self) -> Vec<Vec<S>> {
        (0..self.n_states).map(|i| self.tpm_row(i).to_vec()).collect()
    }

    pub fn tpm_diagonal(&self) -> Vec<S> {
        (0..self.n_states).map(|i| self.gamma(i, i)).collect()
    }

    pub(crate) fn check_stochastic(&self) -> Result<()> {
        check_stochastic(&self.tpm, self.n_states)
    }

    /// Map to the unconstrained working vector.
    pub fn to_working(&self) -> Result<Vec<S>> {
        let n = self.n_states;
        let mut out = Vec::with_capacity(n * (n - 1) + n + self.slopes.len());
        for i in 0..n {
            let diag = self.gamma(i, i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let g = self.gamma(i, j);
                if g <= S::zero() || diag <= S::zero() {
                    let col = if g <= S::zero() { j } else { i };
                    return Err(Error::BoundaryTpm { row: i, col });
                }
                out.push((g / diag).ln());
            }
        }
        out.extend_from_slice(&self.intercepts);
        out.extend_from_slice(&self.slopes);
        Ok(out)
    }

    /// Copy with every transition probability raised to at least `floor`
    /// and rows renormalized, so that [`Params::to_working`] is defined.
    pub fn with_tpm_floor(&self, floor: S) -> Self {
        let n = self.n_states;
        let mut p = self.clone();
        for row in p.tpm.chunks_mut(n) {
            for g in row.iter_mut() {
                if *g < floor {
                    *g = floor;
                }
            }
            let s = row.iter().fold(S::zero(), |a, &b| a + b);
            for g in row.iter_mut() {
                *g /= s;
            }
        }
        p
    }

    /// Inverse of [`Params::to_working`].
    pub fn from_working(working: &[S], n_states: usize, n_covariates: usize) -> Result<Self> {
        let n = n_states;
        let n_tpm = n * (n - 1);
        let expected = n_tpm + n + n_covariates;
        if working.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "working parameter vector",
                expected,
                actual: working.len(),
            });
        }
        let mut tpm = vec![S::zero(); n * n];
        let mut idx = 0;
        let mut logits = vec![S::zero(); n];
        for i in 0..n {
            for (j, l) in logits.iter_mut().enumerate() {
                if i == j {
                    *l = S::zero();
                } else {
                    *l = working[idx];
                    idx += 1;
                }
            }
            let max = logits
                .iter()
                .copied()
                .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
            let mut sum = S::zero();
            for j in 0..n {
                let e = (logits[j] - max).exp();
                tpm[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                tpm[i * n + j] /= sum;
            }
        }
        Ok(Self {
            n_states: n,
            tpm,
            intercepts: working[n_tpm..n_tpm + n].to_vec(),
            slopes: working[n_tpm + n..].to_vec(),
        })
    }

    /// Relabel states so that new state `k` is old state `perm[k]`.
    pub fn permute_states(&self, perm: &[usize]) -> Self {
        let n = self.n_states;
        let mut tpm = vec![S::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                tpm[a * n + b] = self.gamma(perm[a], perm[b]);
            }
        }
        Self {
            n_states: n,
            tpm,
            intercepts: perm.iter().map(|&k| self.intercepts[k]).collect(),
            slopes: self.slopes.clone(),
        }
    }

    /// Order states by descending intercept (state 1 = highest baseline).
    /// Ties keep the original order.
    pub fn canonicalize(&self) -> Self {
        let mut perm: Vec<usize> = (0..self.n_states).collect();
        perm.sort_by(|&a, &b| {
            self.intercepts[b]
                .partial_cmp(&self.intercepts[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.permute_states(&perm)
    }

    /// Convert every entry to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Params<T> {
        let conv = |v: &[S]| v.iter().map(|x| T::lit(x.to_f64_lossy())).collect();
        Params {
            n_states: self.n_states,
            tpm: conv(&self.tpm),
            intercepts: conv(&self.intercepts),
            slopes: conv(&self.slopes),
        }
    }
}

pub(crate) fn check_stochastic<S: Scalar>(tpm: &[S], n: usize) -> Result<()> {
    if tpm.len() != n * n {
        return Err(Error::DimensionMismatch {
            what: "transition matrix entries",
            expected: n * n,
            actual: tpm.len(),
        });
    }
    let tol = S::lit(STOCHASTIC_TOL);
    for i in 0..n {
        let row = &tpm[i * n..(i + 1) * n];
        if let Some(v) = row
            .iter()
            .find(|v| !v.is_finite() || **v < S::zero() || **v > S::one())
        {
            return Err(Error::NotStochastic(format!(
                "entry {v} in row {} outside [0, 1]",
                i + 1
            )));
        }
        let sum: S = row.iter().copied().sum();
        if (sum - S::one()).abs() > tol {
            return Err(Error::NotStochastic(format!(
                "row {} sums to {sum}",
                i + 1
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Params<f64> {
        Params::new(
            vec![
                vec![0.7, 0.2, 0.1],
                vec![0.05, 0.9, 0.05],
                vec![0.3, 0.3, 0.4],
            ],
            vec![0.1, 1.5, -0.4],
            vec![0.5, -0.2],
        )
        .unwrap()
    }

    #[test]
    fn working_round_trip() {
        let p = example();
        let w = p.to_working().unwrap();
        assert_eq!(w.len(), 6 + 3 + 2);
        let q = Params::from_working(&w, 3, 2).unwrap();
        for (a, b) in p.tpm().iter().zip(q.tpm()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(p.intercepts, q.intercepts);
        assert_eq!(p.slopes, q.slopes);
    }

    #[test]
    fn rejects_bad_tpm() {
        assert!(Params::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]], vec![0.0, 0.0], vec![]).is_err());
        assert!(Params::new(vec![vec![1.2, -0.2], vec![0.5, 0.5]], vec![0.0, 0.0], vec![]).is_err());
        assert!(Params::new(vec![vec![1.0]], vec![0.0, 0.0], vec![]).is_err());
    }

    #[test]
    fn zero_entry_has_no_working_form() {
        let p = Params::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]], vec![0.0, 0.0], vec![]).unwrap();
        assert!(matches!(p.to_working(), Err(Error::BoundaryTpm { row: 0, col: 1 })));
    }

    #[test]
    fn canonicalize_orders_intercepts_descending() {
        let c = example().canonicalize();
        assert_eq!(c.intercepts, vec![1.5, 0.1, -0.4]);
        // old state 1 (0-based) is new state 0
        assert_eq!(c.gamma(0, 0), 0.9);
        assert_eq!(c.gamma(0, 1), 0.05);
        assert_eq!(c.gamma(1, 0), 0.2);
        c.check_stochastic().unwrap();
        assert_eq!(c.canonicalize(), c);
    }

    #[test]
    fn single_state_working_form() {
        let p = Params::new(vec![vec![1.0]], vec![0.3], vec![1.0]).unwrap();
        let w = p.to_working().unwrap();
        assert_eq!(w, vec![0.3, 1.0]);
        assert_eq!(Params::from_working(&w, 1, 1).unwrap(), p);
    }
}
