//! Penalized maximum-likelihood fitting in working coordinates, with
//! multiple random starts and the relaxed (unpenalized, support-restricted)
//! refit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{total_loglik, ModelSpec, Params, SequenceSet};
use crate::optim::{minimize_preconditioned, BfgsOptions, Status};
use crate::penalty::{penalized_loglik, penalized_loglik_and_gradient, PenaltyConfig, PenaltyMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Analytic,
    /// Central differences with step [`FD_STEP`].
    FiniteDifference,
}

pub const FD_STEP: f64 = 1e-7;

impl GradientMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientMode::Analytic => "analytic",
            GradientMode::FiniteDifference => "finite-difference",
        }
    }
}

impl std::str::FromStr for GradientMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(GradientMode::Analytic),
            "finite-difference" | "fd" => Ok(GradientMode::FiniteDifference),
            other => Err(format!(
                "unknown gradient mode {other:?} (expected analytic or finite-difference)"
            )),
        }
    }
}

const TPM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub gradient_mode: GradientMode,
    /// Gradient max-norm (working scale) required for convergence.
    pub convergence_tol: f64,
    pub n_random_starts: usize,
    /// A slope counts as non-zero when its magnitude exceeds this.
    pub nonzero_threshold: f64,
    pub seed: u64,
    /// Working intercepts are confined to `[-cap, cap]`.
    pub intercept_cap: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_mode: GradientMode::Analytic,
            convergence_tol: 1e-6,
            n_random_starts: 5,
            nonzero_threshold: 1e-3,
            seed: 0,
            intercept_cap: 25.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidFitConfig(m.into()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if self.n_random_starts == 0 {
            return bad("n_random_starts must be at least 1");
        }
        if !(self.nonzero_threshold > 0.0) {
            return bad("nonzero_threshold must be positive");
        }
        if !(self.intercept_cap > 0.0) {
            return bad("intercept_cap must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<S> {
    /// Canonical labelling: intercepts in descending order.
    pub params: Params<S>,
    /// Unpenalized log-likelihood at the optimum.
    pub loglik: S,
    pub penalized_loglik: S,
    pub lambda: S,
    pub converged: bool,
    /// 0-based slope indices with `|beta| > nonzero_threshold` (for a
    /// relaxed refit: the refitted support).
    pub active_set: Vec<usize>,
    pub nonzero_threshold: f64,
    pub n_starts_agreeing: usize,
    /// Some intercept ended on the `intercept_cap` boundary.
    pub at_boundary: bool,
    pub iterations: usize,
    pub gradient_norm: S,
}

impl<S: Scalar> FitResult<S> {
    /// Estimated parameters: non-zero slopes plus N intercepts and N(N-1)
    /// transition parameters.
    pub fn df(&self) -> usize {
        let n = self.params.n_states();
        self.active_set.len() + n + n * (n - 1)
    }
}

/// Objective in working coordinates over the free slopes only.
struct Objective<'a, S: Scalar> {
    data: &'a SequenceSet<S>,
    spec: &'a ModelSpec,
    penalty: PenaltyConfig<S>,
    free: Vec<usize>,
    mode: GradientMode,
}

impl<'a, S: Scalar> Objective<'a, S> {
    fn n_head(&self) -> usize {
        self.spec.n_unpenalized()
    }

    fn unpack(&self, x: &[S]) -> Params<S> {
        let head = self.n_head();
        let mut full = Vec::with_capacity(self.spec.n_working());
        full.extend_from_slice(&x[..head]);
        full.resize(self.spec.n_working(), S::zero());
        for (pos, &k) in self.free.iter().enumerate() {
            full[head + k] = x[head + pos];
        }
        Params::from_working(&full, self.spec.n_states, self.spec.n_covariates)
            .expect("working vector has the spec's length")
    }

    fn pack(&self, p: &Params<S>) -> Result<Vec<S>> {
        // earlier optima may have transition probabilities that underflowed to 0
        let w = p.with_tpm_floor(S::lit(TPM_FLOOR)).to_working()?;
        let head = self.n_head();
        let mut x = w[..head].to_vec();
        x.extend(self.free.iter().map(|&k| w[head + k]));
        Ok(x)
    }

    fn value(&self, x: &[S]) -> S {
        let p = self.unpack(x);
        match penalized_loglik(self.data, &p, &self.penalty, self.spec) {
            Ok(v) if v.is_finite() => -v,
            _ => S::infinity(),
        }
    }

    /// Negative penalized log-likelihood and gradient.
    fn eval(&self, x: &[S]) -> (S, Vec<S>) {
        match self.mode {
            GradientMode::Analytic => {
                let p = self.unpack(x);
                match penalized_loglik_and_gradient(self.data, &p, &self.penalty, self.spec) {
                    Ok((v, g)) if v.is_finite() => {
                        let head = self.n_head();
                        let mut out: Vec<S> = g[..head].iter().map(|&d| -d).collect();
                        out.extend(self.free.iter().map(|&k| -g[head + k]));
                        (-v, out)
                    }
                    _ => (S::infinity(), vec![S::zero(); x.len()]),
                }
            }
            GradientMode::FiniteDifference => {
                let f = self.value(x);
                let h = S::lit(FD_STEP);
                let mut xp = x.to_vec();
                let g = (0..x.len())
                    .map(|i| {
                        let orig = xp[i];
                        xp[i] = orig + h;
                        let up = self.value(&xp);
                        xp[i] = orig - h;
                        let down = self.value(&xp);
                        xp[i] = orig;
                        (up - down) / (h + h)
                    })
                    .collect();
                (f, g)
            }
        }
    }

    /// Diagonal inverse-curvature guess: the smooth penalty is very stiff
    /// near zero at large lambda.
    fn precond(&self, x: &[S]) -> Vec<S> {
        let head = self.n_head();
        let mut d = vec![S::one(); x.len()];
        if self.penalty.mode == PenaltyMode::SmoothSymmetric && self.penalty.lambda > S::zero() {
            for (pos, &k) in self.free.iter().enumerate() {
                if self.spec.penalized_mask[k] {
                    let b = x[head + pos];
                    let c = self.penalty.c;
                    let curv = self.penalty.lambda * c / (b * b + c).powf(S::lit(1.5));
                    d[head + pos] = S::one() / (S::one() + curv);
                }
            }
        }
        d
    }

    fn bounds(&self, cap: S) -> (Vec<S>, Vec<S>) {
        let n = self.n_head() + self.free.len();
        let mut lower = vec![S::neg_infinity(); n];
        let mut upper = vec![S::infinity(); n];
        let t = self.spec.n_tpm_params();
        for i in t..t + self.spec.n_states {
            lower[i] = -cap;
            upper[i] = cap;
        }
        (lower, upper)
    }
}

/// Random starting point: intercepts around the logit of the empirical
/// success rate, diagonal-heavy transition matrix, zero slopes.
pub fn random_start<S: Scalar>(data: &SequenceSet<S>, spec: &ModelSpec, rng: &mut impl Rng) -> Params<S> {
    let n = spec.n_states;
    let rate = data.success_rate().clamp(0.01, 0.99);
    let base = (rate / (1.0 - rate)).ln();
    let intercepts = (0..n).map(|_| S::lit(base + rng.gen_range(-1.0..=1.0))).collect();
    let tpm = (0..n)
        .map(|i| {
            if n == 1 {
                return vec![S::one()];
            }
            let diag: f64 = rng.gen_range(0.7..=0.95);
            let weights: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.5..=1.5)).collect();
            let wsum: f64 = weights.iter().sum();
            let mut w = weights.into_iter();
            (0..n)
                .map(|j| {
                    if i == j {
                        S::lit(diag)
                    } else {
                        S::lit((1.0 - diag) * w.next().unwrap() / wsum)
                    }
                })
                .collect()
        })
        .collect();
    Params::new(tpm, intercepts, vec![S::zero(); spec.n_covariates])
        .expect("random start is row-stochastic")
}

/// `n_random_starts` reproducible starting points derived from `config.seed`.
pub fn random_starts<S: Scalar>(data: &SequenceSet<S>, spec: &ModelSpec, config: &FitConfig) -> Vec<Params<S>> {
    (0..config.n_random_starts)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            random_start(data, spec, &mut rng)
        })
        .collect()
}

fn check_inputs<S: Scalar>(data: &SequenceSet<S>, spec: &ModelSpec, config: &FitConfig) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.n_covariates() != spec.n_covariates || spec.penalized_mask.len() != spec.n_covariates {
        return Err(Error::DimensionMismatch {
            what: "data covariates vs model spec",
            expected: spec.n_covariates,
            actual: data.n_covariates(),
        });
    }
    Ok(())
}

/// Maximize the penalized log-likelihood. Without `init`, starts from
/// [`random_starts`]; with `init`, runs a single start from it.
///
/// Non-convergence is not an error: the best-effort optimum is returned with
/// `converged = false`.
pub fn fit<S: Scalar>(
    data: &SequenceSet<S>,
    spec: &ModelSpec,
    penalty: &PenaltyConfig<S>,
    config: &FitConfig,
    init: Option<&Params<S>>,
) -> Result<FitResult<S>> {
    check_inputs(data, spec, config)?;
    let starts = match init {
        Some(p) => vec![p.clone()],
        None => random_starts(data, spec, config),
    };
    fit_restricted(data, spec, penalty, config, &starts, (0..spec.n_covariates).collect())
}

/// Like [`fit`] but from an explicit list of starting points; the best
/// penalized objective wins.
pub fn fit_from_starts<S: Scalar>(
    data: &SequenceSet<S>,
    spec: &ModelSpec,
    penalty: &PenaltyConfig<S>,
    config: &FitConfig,
    starts: &[Params<S>],
) -> Result<FitResult<S>> {
    check_inputs(data, spec, config)?;
    if starts.is_empty() {
        return Err(Error::InvalidFitConfig("no starting points".into()));
    }
    fit_restricted(data, spec, penalty, config, starts, (0..spec.n_covariates).collect())
}

/// Unpenalized refit over the first stage's active slopes; all other slopes
/// are held at exactly zero. Starts from the first-stage estimates.
pub fn relaxed_refit<S: Scalar>(
    data: &SequenceSet<S>,
    spec: &ModelSpec,
    first_stage: &FitResult<S>,
    config: &FitConfig,
) -> Result<FitResult<S>> {
    check_inputs(data, spec, config)?;
    let init = restrict_to_support(&first_stage.params, &first_stage.active_set);
    let mut out = fit_restricted(
        data,
        spec,
        &PenaltyConfig::unpenalized(),
        config,
        &[init],
        first_stage.active_set.clone(),
    )?;
    out.active_set = first_stage.active_set.clone();
    Ok(out)
}

/// Copy of `params` with every slope outside `support` set to zero.
pub fn restrict_to_support<S: Scalar>(params: &Params<S>, support: &[usize]) -> Params<S> {
    let mut p = params.clone();
    for (k, b) in p.slopes.iter_mut().enumerate() {
        if !support.contains(&k) {
            *b = S::zero();
        }
    }
    p
}

fn fit_restricted<S: Scalar>(
    data: &SequenceSet<S>,
    spec: &ModelSpec,
    penalty: &PenaltyConfig<S>,
    config: &FitConfig,
    starts: &[Params<S>],
    free: Vec<usize>,
) -> Result<FitResult<S>> {
    let obj = Objective {
        data,
        spec,
        penalty: *penalty,
        free,
        mode: config.gradient_mode,
    };
    let cap = S::lit(config.intercept_cap);
    let (lower, upper) = obj.bounds(cap);
    let opts = BfgsOptions {
        max_iterations: config.max_iterations,
        gtol: S::lit(config.convergence_tol),
    };

    let outcomes: Vec<_> = starts
        .par_iter()
        .map(|start| {
            let x0 = obj.pack(start)?;
            Ok(minimize_preconditioned(
                |x| obj.eval(x),
                |x| obj.precond(x),
                &x0,
                &lower,
                &upper,
                &opts,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let finite: Vec<_> = outcomes
        .iter()
        .filter(|o| o.status != Status::NonFiniteStart && o.f.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::NonFiniteObjective);
    }
    let pick = |only_converged: bool| {
        finite
            .iter()
            .filter(|o| !only_converged || o.converged())
            .min_by(|a, b| a.f.partial_cmp(&b.f).unwrap_or(std::cmp::Ordering::Equal))
            .copied()
    };
    let best = pick(true).or_else(|| pick(false)).expect("non-empty");
    let agree_tol = S::lit(1e-6) * best.f.abs().max(S::one());
    let n_starts_agreeing = finite.iter().filter(|o| (o.f - best.f).abs() <= agree_tol).count();

    let params = obj.unpack(&best.x).canonicalize();
    let loglik = total_loglik(data, &params)?;
    let pen = penalized_loglik(data, &params, penalty, spec)?;
    let threshold = S::lit(config.nonzero_threshold);
    let active_set = obj
        .free
        .iter()
        .copied()
        .filter(|&k| params.slopes[k].abs() > threshold)
        .collect();
    let edge = cap * (S::one() - S::lit(1e-9));
    let at_boundary = params.intercepts.iter().any(|b| b.abs() >= edge);

    Ok(FitResult {
        loglik,
        penalized_loglik: pen,
        lambda: penalty.lambda,
        converged: best.converged(),
        active_set,
        nonzero_threshold: config.nonzero_threshold,
        n_starts_agreeing,
        at_boundary,
        iterations: best.iterations,
        gradient_norm: best.projected_grad_norm,
        params,
    })
}
