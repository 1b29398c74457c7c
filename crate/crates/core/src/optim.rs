//! BFGS minimizer with a strong-Wolfe line search and simple box bounds.
//!
//! Bounded coordinates that sit on a bound with the gradient pointing
//! outward are frozen for the iteration; the inverse-Hessian estimate is
//! reset whenever that frozen set changes.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions<S> {
    pub max_iterations: usize,
    /// Stop when the projected gradient max-norm falls below this.
    pub gtol: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome<S> {
    pub x: Vec<S>,
    pub f: S,
    pub grad: Vec<S>,
    pub iterations: usize,
    pub projected_grad_norm: S,
    pub status: Status,
}

impl<S> BfgsOutcome<S> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 40;

struct Trial<S> {
    x: Vec<S>,
    f: S,
    g: Vec<S>,
    slope: S,
}

/// Minimize `objective` (returning value and gradient) from `x0` subject to
/// `lower <= x <= upper` (use infinities for free coordinates).
pub fn minimize<S, F>(objective: F, x0: &[S], lower: &[S], upper: &[S], opts: &BfgsOptions<S>) -> BfgsOutcome<S>
where
    S: Scalar,
    F: FnMut(&[S]) -> (S, Vec<S>),
{
    minimize_preconditioned(objective, |x: &[S]| vec![S::one(); x.len()], x0, lower, upper, opts)
}

/// [`minimize`] with a diagonal initial inverse-Hessian `precond(x)`, used
/// at the start and after every reset.
pub fn minimize_preconditioned<S, F, P>(
    mut objective: F,
    precond: P,
    x0: &[S],
    lower: &[S],
    upper: &[S],
    opts: &BfgsOptions<S>,
) -> BfgsOutcome<S>
where
    S: Scalar,
    F: FnMut(&[S]) -> (S, Vec<S>),
    P: Fn(&[S]) -> Vec<S>,
{
    let n = x0.len();
    let mut x: Vec<S> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
        .collect();
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsOutcome {
            x,
            f,
            projected_grad_norm: S::infinity(),
            grad: g,
            iterations: 0,
            status: Status::NonFiniteStart,
        };
    }

    let mut h = diagonal(&precond(&x));
    let mut h_is_initial = true;
    let mut prev_free: Vec<bool> = vec![true; n];
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    let mut pg = S::infinity();
    let mut retried = false;

    while iterations < opts.max_iterations {
        if snap_to_bounds(&mut x, lower, upper) {
            let (fs, gs) = objective(&x);
            if fs.is_finite() && gs.iter().all(|v| v.is_finite()) {
                f = fs;
                g = gs;
            }
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > S::zero()) || (x[i] >= upper[i] && g[i] < S::zero())))
            .collect();
        pg = projected_norm(&g, &free);
        if pg < opts.gtol {
            status = Status::Converged;
            break;
        }
        if free != prev_free {
            h = diagonal(&precond(&x));
            h_is_initial = true;
            prev_free = free.clone();
        }

        let gf: Vec<S> = g.iter().zip(&free).map(|(&v, &m)| if m { v } else { S::zero() }).collect();
        let mut d = mat_vec(&h, &gf, n);
        for (di, &m) in d.iter_mut().zip(&free) {
            *di = if m { -*di } else { S::zero() };
        }
        let mut slope0 = dot(&d, &g);
        if !(slope0 < S::zero()) {
            h = diagonal(&precond(&x));
            h_is_initial = true;
            d = gf.iter().enumerate().map(|(i, &v)| -h[i * n + i] * v).collect();
            slope0 = dot(&d, &g);
        }

        let alpha_max = max_step(&x, &d, lower, upper);
        let mut alpha0 = S::one();
        if h_is_initial {
            // unscaled first step: keep it modest
            let dmax = d.iter().fold(S::zero(), |a, v| a.max(v.abs()));
            alpha0 = S::one() / dmax.max(S::one());
        }
        alpha0 = alpha0.min(alpha_max);

        let trial = line_search(&mut objective, &x, f, &d, slope0, alpha0, alpha_max, lower, upper);
        iterations += 1;
        let Some(trial) = trial else {
            if !h_is_initial && !retried {
                h = diagonal(&precond(&x));
                h_is_initial = true;
                retried = true;
                continue;
            }
            status = Status::LineSearchFailed;
            break;
        };
        retried = false;

        let s: Vec<S> = trial.x.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<S> = trial.g.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        let ss = dot(&s, &s);
        if sy > S::lit(1e-12) * (ss * yy).sqrt() && sy.is_finite() {
            if h_is_initial {
                let hy = mat_vec(&h, &y, n);
                let scale = sy / dot(&y, &hy);
                for v in h.iter_mut() {
                    *v *= scale;
                }
            }
            bfgs_update(&mut h, &s, &y, sy, n);
            h_is_initial = false;
        }
        x = trial.x;
        f = trial.f;
        g = trial.g;
    }

    if status == Status::MaxIterations {
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > S::zero()) || (x[i] >= upper[i] && g[i] < S::zero())))
            .collect();
        pg = projected_norm(&g, &free);
        if pg < opts.gtol {
            status = Status::Converged;
        }
    } else if status == Status::LineSearchFailed && pg < opts.gtol {
        status = Status::Converged;
    }

    BfgsOutcome {
        x,
        f,
        grad: g,
        iterations,
        projected_grad_norm: pg,
        status,
    }
}

/// Move coordinates lying within round-off of a bound onto it.
fn snap_to_bounds<S: Scalar>(x: &mut [S], lower: &[S], upper: &[S]) -> bool {
    let mut moved = false;
    for i in 0..x.len() {
        for b in [lower[i], upper[i]] {
            if b.is_finite() && x[i] != b && (x[i] - b).abs() <= S::lit(1e-10) * (S::one() + b.abs()) {
                x[i] = b;
                moved = true;
            }
        }
    }
    moved
}

fn diagonal<S: Scalar>(d: &[S]) -> Vec<S> {
    let n = d.len();
    let mut m = vec![S::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = d[i];
    }
    m
}

fn mat_vec<S: Scalar>(m: &[S], v: &[S], n: usize) -> Vec<S> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

fn projected_norm<S: Scalar>(g: &[S], free: &[bool]) -> S {
    g.iter()
        .zip(free)
        .filter(|(_, &m)| m)
        .fold(S::zero(), |acc, (&v, _)| acc.max(v.abs()))
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update<S: Scalar>(h: &mut [S], s: &[S], y: &[S], sy: S, n: usize) {
    let rho = S::one() / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    let coef = (S::one() + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
    // keep exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (h[i * n + j] + h[j * n + i]) * S::lit(0.5);
            h[i * n + j] = avg;
            h[j * n + i] = avg;
        }
    }
}

fn max_step<S: Scalar>(x: &[S], d: &[S], lower: &[S], upper: &[S]) -> S {
    let mut a = S::infinity();
    for i in 0..x.len() {
        if d[i] < S::zero() && lower[i].is_finite() {
            a = a.min((lower[i] - x[i]) / d[i]);
        } else if d[i] > S::zero() && upper[i].is_finite() {
            a = a.min((upper[i] - x[i]) / d[i]);
        }
    }
    a.max(S::zero())
}

#[allow(clippy::too_many_arguments)]
fn line_search<S, F>(
    objective: &mut F,
    x: &[S],
    f0: S,
    d: &[S],
    slope0: S,
    alpha_init: S,
    alpha_max: S,
    lower: &[S],
    upper: &[S],
) -> Option<Trial<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> (S, Vec<S>),
{
    if !(alpha_max > S::zero()) || !(alpha_init > S::zero()) {
        return None;
    }
    let c1 = S::lit(C1);
    let c2 = S::lit(C2);
    // tolerate objective round-off when deciding sufficient decrease
    let noise = S::epsilon() * S::lit(100.0) * (S::one() + f0.abs());
    let armijo = |f: S, a: S| f <= f0 + c1 * a * slope0 + noise;

    let mut eval = |alpha: S| -> Trial<S> {
        let at_max = alpha >= alpha_max;
        let xs: Vec<S> = x
            .iter()
            .zip(d)
            .enumerate()
            .map(|(i, (&xi, &di))| {
                let v = xi + alpha * di;
                let v = v.max(lower[i]).min(upper[i]);
                // land exactly on a bound that limited the step
                if at_max && di != S::zero() {
                    if di < S::zero() && (v - lower[i]).abs() <= S::lit(1e-12) * (S::one() + lower[i].abs()) {
                        return lower[i];
                    }
                    if di > S::zero() && (upper[i] - v).abs() <= S::lit(1e-12) * (S::one() + upper[i].abs()) {
                        return upper[i];
                    }
                }
                v
            })
            .collect();
        let (f, g) = objective(&xs);
        let (f, g) = if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            (f, g)
        } else {
            (S::infinity(), g)
        };
        let slope = if f.is_finite() { dot(&g, d) } else { S::infinity() };
        Trial { x: xs, f, g, slope }
    };

    let mut best: Option<Trial<S>> = None;
    let keep_best = |best: &mut Option<Trial<S>>, t: &Trial<S>| {
        if t.f < f0 && best.as_ref().map_or(true, |b| t.f < b.f) {
            *best = Some(Trial {
                x: t.x.clone(),
                f: t.f,
                g: t.g.clone(),
                slope: t.slope,
            });
        }
    };

    let mut prev_alpha = S::zero();
    let mut prev_f = f0;
    let mut prev_slope = slope0;
    let mut alpha = alpha_init;
    for i in 0..MAX_LINE_SEARCH {
        let t = eval(alpha);
        keep_best(&mut best, &t);
        if !armijo(t.f, alpha) || (i > 0 && t.f >= prev_f) {
            return zoom(&mut eval, prev_alpha, prev_f, prev_slope, alpha, t.f, f0, slope0, &armijo, best);
        }
        if t.slope.abs() <= -c2 * slope0 {
            return Some(t);
        }
        if t.slope >= S::zero() {
            let (fa, sa) = (t.f, t.slope);
            return zoom(&mut eval, alpha, fa, sa, prev_alpha, prev_f, f0, slope0, &armijo, Some(t).or(best));
        }
        if alpha >= alpha_max {
            // bound reached with sufficient decrease
            return Some(t);
        }
        prev_alpha = alpha;
        prev_f = t.f;
        prev_slope = t.slope;
        alpha = (alpha * S::lit(4.0)).min(alpha_max);
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn zoom<S, E, A>(
    eval: &mut E,
    mut lo: S,
    mut f_lo: S,
    mut slope_lo: S,
    mut hi: S,
    mut f_hi: S,
    f0: S,
    slope0: S,
    armijo: &A,
    mut best: Option<Trial<S>>,
) -> Option<Trial<S>>
where
    S: Scalar,
    E: FnMut(S) -> Trial<S>,
    A: Fn(S, S) -> bool,
{
    let c2 = S::lit(C2);
    for _ in 0..MAX_LINE_SEARCH {
        let width = hi - lo;
        if width.abs() <= S::epsilon() * (S::one() + lo.abs().max(hi.abs())) {
            break;
        }
        // quadratic interpolation from (lo, f_lo, slope_lo) and (hi, f_hi),
        // safeguarded into the interior of the bracket
        let mut a = S::nan();
        if f_hi.is_finite() {
            let denom = S::lit(2.0) * (f_hi - f_lo - slope_lo * width);
            if denom > S::zero() {
                a = lo - slope_lo * width * width / denom;
            }
        }
        let (left, right) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let margin = (right - left) * S::lit(0.1);
        if !a.is_finite() || a < left + margin || a > right - margin {
            a = (lo + hi) * S::lit(0.5);
        }
        let t = eval(a);
        if t.f < f0 && best.as_ref().map_or(true, |b| t.f < b.f) {
            best = Some(Trial {
                x: t.x.clone(),
                f: t.f,
                g: t.g.clone(),
                slope: t.slope,
            });
        }
        if !armijo(t.f, a) || t.f >= f_lo {
            hi = a;
            f_hi = t.f;
        } else {
            if t.slope.abs() <= -c2 * slope0 {
                return Some(t);
            }
            if t.slope * (hi - lo) >= S::zero() {
                hi = lo;
                f_hi = f_lo;
            }
            lo = a;
            f_lo = t.f;
            slope_lo = t.slope;
        }
    }
    best
}
