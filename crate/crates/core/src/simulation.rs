//! Synthetic scenario generation and the replicated simulation study.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::PenaltyRecord;
use crate::error::{Error, Result};
use crate::fit::{FitConfig, FitResult};
use crate::inference::{avg_pred_prob, brier_score, forecast, ForecastRecord};
use crate::model::{inv_logit, stationary_distribution};
use crate::model::{ModelSpec, Params, Sequence, SequenceSet};
use crate::penalty::{PenaltyConfig, PenaltyMode, DEFAULT_SMOOTHING};
use crate::selection::{fit_mle, fit_path, select_index, LambdaGrid, PathResult, Scheme};

/// How the lambda grid is built.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    LogSpaced { len: usize, max: f64, min: f64 },
    Values(Vec<f64>),
}

impl GridSpec {
    pub fn build(&self) -> Result<LambdaGrid<f64>> {
        match self {
            GridSpec::LogSpaced { len, max, min } => LambdaGrid::log_spaced(*len, *max, *min),
            GridSpec::Values(v) => LambdaGrid::from_values(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_states: usize,
    pub true_tpm: Vec<Vec<f64>>,
    /// On the linear-predictor scale.
    pub true_intercepts: Vec<f64>,
    pub true_slopes: Vec<f64>,
    pub covariate_range: (f64, f64),
    pub t_train: usize,
    pub t_test: usize,
    pub n_runs: usize,
    pub seed: u64,
    /// Start the chain in this state instead of drawing from the stationary
    /// distribution.
    pub initial_state: Option<usize>,
    pub grid: GridSpec,
    pub penalty_c: f64,
    pub penalty_mode: PenaltyMode,
    pub fit: FitConfig,
    /// Number of states of the fitted model.
    pub fit_states: usize,
}

fn slopes_with_noise(n_noise: usize) -> Vec<f64> {
    let mut s = vec![0.5, 0.7, -0.8];
    s.extend(std::iter::repeat(0.0).take(n_noise));
    s
}

impl ScenarioConfig {
    /// Reduced design: 2550 training and 100 test observations, 25
    /// covariates (22 noise), 25 runs, 20 grid points.
    pub fn desk_scale() -> Self {
        Self {
            n_states: 2,
            true_tpm: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            true_intercepts: vec![inv_logit(0.75), inv_logit(0.35)],
            true_slopes: slopes_with_noise(22),
            covariate_range: (-2.0, 2.0),
            t_train: 2550,
            t_test: 100,
            n_runs: 25,
            seed: 20_240_601,
            initial_state: None,
            grid: GridSpec::LogSpaced {
                len: 20,
                max: 5000.0,
                min: 1e-4,
            },
            penalty_c: DEFAULT_SMOOTHING,
            penalty_mode: PenaltyMode::SmoothSymmetric,
            fit: FitConfig::default(),
            fit_states: 2,
        }
    }

    /// Full design: 5000 + 100 observations, 50 covariates (47 noise), 100
    /// runs, 50 grid points.
    pub fn paper_scale() -> Self {
        Self {
            true_slopes: slopes_with_noise(47),
            t_train: 5000,
            n_runs: 100,
            grid: GridSpec::LogSpaced {
                len: 50,
                max: 5000.0,
                min: 1e-4,
            },
            ..Self::desk_scale()
        }
    }

    pub fn t_total(&self) -> usize {
        self.t_train + self.t_test
    }

    pub fn n_covariates(&self) -> usize {
        self.true_slopes.len()
    }

    pub fn true_params(&self) -> Result<Params<f64>> {
        Params::new(
            self.true_tpm.clone(),
            self.true_intercepts.clone(),
            self.true_slopes.clone(),
        )
    }

    /// Indices of the non-zero true slopes.
    pub fn true_support(&self) -> Vec<usize> {
        (0..self.true_slopes.len())
            .filter(|&k| self.true_slopes[k] != 0.0)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.true_params()?;
        if p.n_states() != self.n_states {
            return Err(Error::InvalidSpec(format!(
                "n_states = {} but the true model has {} states",
                self.n_states,
                p.n_states()
            )));
        }
        if self.t_train == 0 {
            return Err(Error::InvalidSpec("t_train must be positive".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidSpec("n_runs must be positive".into()));
        }
        let (lo, hi) = self.covariate_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpec(format!("covariate range [{lo}, {hi}] is empty")));
        }
        if let Some(s) = self.initial_state {
            if s >= self.n_states {
                return Err(Error::InvalidSpec(format!("initial_state {s} out of range")));
            }
        }
        if self.fit_states == 0 {
            return Err(Error::InvalidSpec("fit_states must be at least 1".into()));
        }
        self.fit.validate()?;
        self.grid.build()?;
        PenaltyConfig::new(0.0, self.penalty_c, self.penalty_mode)?;
        Ok(())
    }
}

/// One generated replication.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub train: SequenceSet<f64>,
    /// Row-major `t_test x K`.
    pub covariates_test: Vec<f64>,
    pub outcomes_test: Vec<bool>,
    /// Hidden states for all `t_total` steps (0-based).
    pub states: Vec<usize>,
}

/// Random stream for `(seed, stream)`; streams are independent of each other.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Simulate one replication: a single training sequence of `t_train` steps
/// followed by `t_test` held-out steps.
pub fn generate(config: &ScenarioConfig, run: u64) -> Result<SimulatedRun> {
    let params = config.true_params()?;
    let n = params.n_states();
    let k = config.n_covariates();
    let init = match config.initial_state {
        Some(s) => {
            let mut d = vec![0.0; n];
            *d.get_mut(s)
                .ok_or_else(|| Error::InvalidSpec(format!("initial_state {s} out of range")))? = 1.0;
            d
        }
        None => stationary_distribution(params.tpm(), n)?,
    };
    let (lo, hi) = config.covariate_range;
    let mut rng = stream_rng(config.seed, run);
    let total = config.t_total();
    let mut states = Vec::with_capacity(total);
    let mut x = Vec::with_capacity(total * k);
    let mut y = Vec::with_capacity(total);
    let mut s = draw_index(&mut rng, &init);
    for t in 0..total {
        if t > 0 {
            s = draw_index(&mut rng, params.tpm_row(s));
        }
        states.push(s);
        let start = x.len();
        for _ in 0..k {
            x.push(rng.gen_range(lo..hi));
        }
        let eta = params.intercepts[s]
            + x[start..]
                .iter()
                .zip(&params.slopes)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        y.push(rng.gen::<f64>() < inv_logit(eta));
    }
    let split = config.t_train * k;
    let covariates_test = x.split_off(split);
    let outcomes_test = y.split_off(config.t_train);
    let train = SequenceSet::single(Sequence::new(format!("run{run}"), y, x, k)?);
    Ok(SimulatedRun {
        train,
        covariates_test,
        outcomes_test,
        states,
    })
}

/// Mean squared componentwise error.
pub fn mse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "estimates vs truth",
            expected: truth.len(),
            actual: estimates.len(),
        });
    }
    Ok(estimates
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64)
}

/// True and false positive rates of `active` (0-based indices) against the
/// true support among `n_covariates` slopes.
pub fn tpr_fpr(active: &[usize], true_support: &[usize], n_covariates: usize) -> (f64, f64) {
    let tp = active.iter().filter(|k| true_support.contains(k)).count();
    let fp = active.len() - tp;
    let n_noise = n_covariates - true_support.len();
    let tpr = if true_support.is_empty() {
        0.0
    } else {
        tp as f64 / true_support.len() as f64
    };
    let fpr = if n_noise == 0 { 0.0 } else { fp as f64 / n_noise as f64 };
    (tpr, fpr)
}

/// One (run, scheme) row of the study table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub run: usize,
    pub scheme: Scheme,
    pub mse_beta: f64,
    pub mse_intercepts: f64,
    pub mse_tpm: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub brier: f64,
    pub avg_prob: f64,
    /// Wall time of the fits behind this scheme.
    pub seconds: f64,
    pub failed: bool,
    pub lambda: f64,
    /// Position of the selected point on the grid (None for MLE).
    pub lambda_index: Option<usize>,
    pub loglik: f64,
    pub n_active: usize,
    pub tpm_diagonal: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub error: Option<String>,
}

impl StudyRow {
    fn failed(run: usize, scheme: Scheme, seconds: f64, err: String) -> Self {
        Self {
            run,
            scheme,
            mse_beta: f64::NAN,
            mse_intercepts: f64::NAN,
            mse_tpm: f64::NAN,
            tpr: f64::NAN,
            fpr: f64::NAN,
            brier: f64::NAN,
            avg_prob: f64::NAN,
            seconds,
            failed: true,
            lambda: f64::NAN,
            lambda_index: None,
            loglik: f64::NAN,
            n_active: 0,
            tpm_diagonal: Vec::new(),
            intercepts: Vec::new(),
            error: Some(err),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mse_beta: f64,
    pub mse_intercepts: f64,
    pub mse_tpm: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub brier: f64,
    pub avg_prob: f64,
    pub seconds: f64,
    /// Medians of the recovered t.p.m. diagonal, per state.
    pub tpm_diagonal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    /// Ordered by run, then scheme.
    pub rows: Vec<StudyRow>,
    pub grid: Vec<f64>,
}

/// Median of the finite values; NaN when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl StudyResult {
    pub fn schemes(&self) -> Vec<Scheme> {
        Scheme::ALL
            .into_iter()
            .filter(|s| self.rows.iter().any(|r| r.scheme == *s))
            .collect()
    }

    pub fn rows_for(&self, scheme: Scheme) -> impl Iterator<Item = &StudyRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    /// Per-scheme medians over runs that did not fail.
    pub fn medians(&self) -> Vec<SchemeSummary> {
        self.schemes()
            .into_iter()
            .map(|scheme| {
                let ok: Vec<&StudyRow> = self.rows_for(scheme).filter(|r| !r.failed).collect();
                let n_failed = self.rows_for(scheme).filter(|r| r.failed).count();
                let med = |f: fn(&StudyRow) -> f64| median(ok.iter().map(|r| f(r)));
                let n_diag = ok.iter().map(|r| r.tpm_diagonal.len()).max().unwrap_or(0);
                SchemeSummary {
                    scheme,
                    n_ok: ok.len(),
                    n_failed,
                    mse_beta: med(|r| r.mse_beta),
                    mse_intercepts: med(|r| r.mse_intercepts),
                    mse_tpm: med(|r| r.mse_tpm),
                    tpr: med(|r| r.tpr),
                    fpr: med(|r| r.fpr),
                    brier: med(|r| r.brier),
                    avg_prob: med(|r| r.avg_prob),
                    seconds: med(|r| r.seconds),
                    tpm_diagonal: (0..n_diag)
                        .map(|i| median(ok.iter().filter_map(|r| r.tpm_diagonal.get(i).copied())))
                        .collect(),
                }
            })
            .collect()
    }
}

/// Fit seed for a run, distinct from the data stream.
fn fit_seed(seed: u64, run: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ run.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct RunContext<'a> {
    config: &'a ScenarioConfig,
    sim: SimulatedRun,
    run: usize,
}

impl RunContext<'_> {
    fn row(&self, scheme: Scheme, fit: &FitResult<f64>, seconds: f64, lambda_index: Option<usize>, lambda: f64) -> StudyRow {
        let cfg = self.config;
        let p = &fit.params;
        let truth_diag: Vec<f64> = (0..cfg.n_states).map(|i| cfg.true_tpm[i][i]).collect();
        let diag = p.tpm_diagonal();
        let (tpr, fpr) = tpr_fpr(&fit.active_set, &cfg.true_support(), cfg.n_covariates());
        let scores = forecast(&self.sim.train.sequences()[0], &self.sim.covariates_test, p).and_then(|pi| {
            let recs = ForecastRecord::zip(&pi, &self.sim.outcomes_test);
            Ok((brier_score(&recs)?, avg_pred_prob(&recs)?))
        });
        let (brier, avg_prob) = match scores {
            Ok(v) => v,
            Err(e) => return StudyRow::failed(self.run, scheme, seconds, e.to_string()),
        };
        StudyRow {
            run: self.run,
            scheme,
            mse_beta: mse(&p.slopes, &cfg.true_slopes).unwrap_or(f64::NAN),
            mse_intercepts: mse(&p.intercepts, &cfg.true_intercepts).unwrap_or(f64::NAN),
            mse_tpm: mse(&diag, &truth_diag).unwrap_or(f64::NAN),
            tpr,
            fpr,
            brier,
            avg_prob,
            seconds,
            failed: false,
            lambda,
            lambda_index,
            loglik: fit.loglik,
            n_active: fit.active_set.len(),
            tpm_diagonal: diag,
            intercepts: p.intercepts.clone(),
            error: None,
        }
    }
}

/// Fit, select and score every scheme on one replication.
pub fn run_once(config: &ScenarioConfig, run: usize) -> Result<Vec<StudyRow>> {
    let sim = generate(config, run as u64)?;
    let spec = ModelSpec::new(config.fit_states, config.n_covariates())?;
    let grid = config.grid.build()?;
    let fit_cfg = FitConfig {
        seed: fit_seed(config.seed, run as u64),
        ..config.fit.clone()
    };
    let ctx = RunContext { config, sim, run };
    let data = &ctx.sim.train;

    let has_path = grid.values().iter().any(|&l| l > 0.0);
    let mut rows = Vec::new();
    let mut path: Option<PathResult<f64>> = None;
    let mut path_seconds = 0.0;
    if has_path {
        let t0 = Instant::now();
        let res = fit_path(data, &spec, &grid, config.penalty_c, config.penalty_mode, &fit_cfg, true);
        path_seconds = t0.elapsed().as_secs_f64();
        match res {
            Ok(p) => path = Some(p),
            Err(e) => {
                for s in Scheme::ALL.into_iter().filter(|s| *s != Scheme::Mle) {
                    rows.push(StudyRow::failed(run, s, path_seconds, e.to_string()));
                }
            }
        }
    }

    let t0 = Instant::now();
    let mle = fit_mle(data, &spec, &fit_cfg, path.as_ref());
    let mle_seconds = t0.elapsed().as_secs_f64();
    let mle_row = match mle {
        Ok(f) if f.converged => ctx.row(Scheme::Mle, &f, mle_seconds, None, 0.0),
        Ok(_) => StudyRow::failed(run, Scheme::Mle, mle_seconds, "MLE did not converge".into()),
        Err(e) => StudyRow::failed(run, Scheme::Mle, mle_seconds, e.to_string()),
    };
    rows.insert(0, mle_row);

    if let Some(p) = &path {
        for scheme in Scheme::ALL.into_iter().filter(|s| *s != Scheme::Mle) {
            let row = match select_index(p, scheme) {
                Ok(i) => {
                    let pt = &p.points[i];
                    let fit = if scheme.is_relaxed() {
                        pt.relaxed.as_ref().expect("relaxed refits were requested")
                    } else {
                        &pt.lasso
                    };
                    ctx.row(scheme, fit, path_seconds, Some(i), pt.lambda)
                }
                Err(e) => StudyRow::failed(run, scheme, path_seconds, e.to_string()),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Run all replications in parallel. Rows are ordered by run, then scheme,
/// independent of scheduling.
pub fn run_study(config: &ScenarioConfig) -> Result<StudyResult> {
    config.validate()?;
    let grid = config.grid.build()?;
    let per_run: Vec<Vec<StudyRow>> = (0..config.n_runs)
        .into_par_iter()
        .map(|run| {
            run_once(config, run).unwrap_or_else(|e| {
                Scheme::ALL
                    .into_iter()
                    .map(|s| StudyRow::failed(run, s, 0.0, e.to_string()))
                    .collect()
            })
        })
        .collect();
    Ok(StudyResult {
        rows: per_run.into_iter().flatten().collect(),
        grid: grid.values().to_vec(),
    })
}

/// Synthetic penalty panel with one goalkeeper carrying a planted effect.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelScenario {
    pub n_players: usize,
    pub attempts_per_player: usize,
    pub n_goalkeepers: usize,
    pub tpm: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// 0-based index of the goalkeeper with the planted effect.
    pub planted_goalkeeper: usize,
    pub planted_effect: f64,
    pub seed: u64,
}

impl Default for PanelScenario {
    fn default() -> Self {
        Self {
            n_players: 50,
            attempts_per_player: 40,
            n_goalkeepers: 10,
            tpm: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            intercepts: vec![1.6, 0.9],
            planted_goalkeeper: 0,
            planted_effect: -1.5,
            seed: 7,
        }
    }
}

impl PanelScenario {
    pub fn player_id(i: usize) -> String {
        format!("P{:03}", i + 1)
    }

    pub fn goalkeeper_id(i: usize) -> String {
        format!("G{:03}", i + 1)
    }

    pub fn planted_goalkeeper_id(&self) -> String {
        Self::goalkeeper_id(self.planted_goalkeeper)
    }
}

/// Simulate a panel of kicks. Each player's states follow the Markov chain
/// in chronological order; only the planted goalkeeper shifts the log-odds.
pub fn generate_panel(cfg: &PanelScenario, replication: u64) -> Result<Vec<PenaltyRecord>> {
    if cfg.planted_goalkeeper >= cfg.n_goalkeepers {
        return Err(Error::InvalidSpec("planted goalkeeper out of range".into()));
    }
    let n = cfg.intercepts.len();
    let params = Params::new(cfg.tpm.clone(), cfg.intercepts.clone(), Vec::new())?;
    let delta = stationary_distribution(params.tpm(), n)?;
    let mut rng = stream_rng(cfg.seed, replication);
    let mut out = Vec::with_capacity(cfg.n_players * cfg.attempts_per_player);
    for p in 0..cfg.n_players {
        let mut when: Vec<(i32, u32, u32)> = (0..cfg.attempts_per_player)
            .map(|_| (rng.gen_range(1963..=2016), rng.gen_range(1..=34), rng.gen_range(1..=90)))
            .collect();
        when.sort_unstable();
        let mut s = draw_index(&mut rng, &delta);
        for (t, &(season, matchday, minute)) in when.iter().enumerate() {
            if t > 0 {
                s = draw_index(&mut rng, params.tpm_row(s));
            }
            let keeper = rng.gen_range(0..cfg.n_goalkeepers);
            let mut eta = cfg.intercepts[s];
            if keeper == cfg.planted_goalkeeper {
                eta += cfg.planted_effect;
            }
            let outcome = u8::from(rng.gen::<f64>() < inv_logit(eta));
            out.push(PenaltyRecord {
                player_id: PanelScenario::player_id(p),
                goalkeeper_id: PanelScenario::goalkeeper_id(keeper),
                season_start_year: season,
                matchday,
                home: rng.gen_range(0..=1),
                minute,
                experience_taker: rng.gen_range(0..=15) as f64,
                experience_keeper: rng.gen_range(0..=15) as f64,
                score_diff: rng.gen_range(-3..=3),
                outcome,
            });
        }
    }
    Ok(out)
}
