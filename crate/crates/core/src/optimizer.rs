//! Numerical minimizers shared by every estimation step.
//!
//! * [`minimize_nonsmooth`]: Nelder–Mead simplex with restarts, run from
//!   every supplied start. Used for quantile-loss, ALS and CAViaR fits.
//! * [`minimize_smooth`]: BFGS with central finite-difference gradients and
//!   backtracking line search. Used for likelihood fits and the step-2
//!   AL score.
//!
//! Both are deterministic: starts are processed independently and reduced
//! in start order, with ties in value going to the lowest start index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcwqError, Result};

/// Default gradient tolerance for [`minimize_smooth`].
pub const DEFAULT_SMOOTH_TOL: f64 = 1e-8;
/// Default objective-spread tolerance for [`minimize_nonsmooth`].
pub const DEFAULT_NONSMOOTH_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 5000;
/// After `STALL_ITERS` consecutive relative decreases below `STALL_FTOL`,
/// BFGS resets its Hessian; it stops when a reset brings no real gain.
const STALL_FTOL: f64 = 1e-11;
const STALL_ITERS: usize = 5;
/// A block of `PROGRESS_ITERS` iterations gaining less than `PROGRESS_FTOL`
/// (relative) resets the Hessian; a second such block in a row stops BFGS.
const PROGRESS_ITERS: usize = 100;
const PROGRESS_FTOL: f64 = 1e-7;

/// A minimization problem over `R^dim`.
pub struct OptimizeProblem<F> {
    pub objective: F,
    pub dim: usize,
    /// Optional closed box per coordinate.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub starts: Vec<Vec<f64>>,
}

impl<F> OptimizeProblem<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(objective: F, dim: usize, starts: Vec<Vec<f64>>) -> Self {
        Self {
            objective,
            dim,
            bounds: None,
            starts,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    fn in_bounds(&self, x: &[f64]) -> bool {
        match &self.bounds {
            None => true,
            Some(b) => x.iter().zip(b).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(b) = &self.bounds {
            for (v, (lo, hi)) in x.iter_mut().zip(b) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    /// Objective with out-of-box points mapped to `+inf`.
    fn eval(&self, x: &[f64]) -> f64 {
        if !self.in_bounds(x) {
            return f64::INFINITY;
        }
        let v = (self.objective)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn valid_starts(&self) -> Result<Vec<(usize, Vec<f64>, f64)>> {
        let mut out = Vec::new();
        for (i, s) in self.starts.iter().enumerate() {
            if s.len() != self.dim {
                return Err(FcwqError::DimensionMismatch {
                    expected: self.dim,
                    got: s.len(),
                });
            }
            if !self.in_bounds(s) {
                continue;
            }
            let v = self.eval(s);
            if v.is_finite() {
                out.push((i, s.clone(), v));
            }
        }
        if out.is_empty() {
            let best = self.starts.first().cloned().unwrap_or_default();
            return Err(FcwqError::Optimization {
                msg: "no start point has a finite objective".into(),
                best_point: best,
                best_value: f64::INFINITY,
            });
        }
        Ok(out)
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Index into the problem's start list that produced the optimum.
    pub start_index: usize,
    /// Finite-difference gradient norm at `argmin` (smooth solver only; 0 otherwise).
    pub grad_norm: f64,
}

fn reduce_best(results: Vec<OptimizeResult>) -> OptimizeResult {
    let total: usize = results.iter().map(|r| r.evaluations).sum();
    let mut best: Option<OptimizeResult> = None;
    for r in results {
        match &best {
            Some(b) if !(r.value < b.value) => {}
            _ => best = Some(r),
        }
    }
    let mut best = best.expect("at least one result");
    best.evaluations = total;
    best
}

/// Derivative-free multi-start minimization.
///
/// Each start runs a Nelder–Mead simplex until the spread of objective values
/// over the simplex falls below `tol` (and the simplex has collapsed), or
/// `max_iter` iterations are used. The simplex is then rebuilt around the
/// incumbent and rerun while that still improves the objective.
pub fn minimize_nonsmooth<F>(problem: &OptimizeProblem<F>, tol: f64, max_iter: usize) -> Result<OptimizeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let starts = problem.valid_starts()?;
    let results: Vec<OptimizeResult> = starts
        .par_iter()
        .map(|(idx, x0, f0)| {
            let mut res = nelder_mead(problem, x0, *f0, tol, max_iter);
            res.start_index = *idx;
            res
        })
        .collect();
    Ok(reduce_best(results))
}

fn initial_step(x: f64) -> f64 {
    if x.abs() > 1e-8 {
        0.05 * x.abs()
    } else {
        0.025
    }
}

fn nelder_mead<F>(problem: &OptimizeProblem<F>, x0: &[f64], f0: f64, tol: f64, max_iter: usize) -> OptimizeResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut evals = 0usize;
    let mut iters = 0usize;
    let mut best_x = x0.to_vec();
    let mut best_f = f0;
    let mut converged = false;

    const MAX_RESTARTS: usize = 4;
    for _restart in 0..=MAX_RESTARTS {
        let (x, f, it, ev, conv) = simplex_run(problem, &best_x, best_f, tol, max_iter - iters.min(max_iter));
        iters += it;
        evals += ev;
        let improved = best_f - f > tol;
        if f < best_f {
            best_f = f;
            best_x = x;
        }
        converged = conv;
        if !improved || iters >= max_iter {
            break;
        }
    }
    OptimizeResult {
        argmin: best_x,
        value: best_f,
        converged,
        evaluations: evals,
        start_index: 0,
        grad_norm: 0.0,
    }
}

type SimplexOutcome = (Vec<f64>, f64, usize, usize, bool);

fn simplex_run<F>(problem: &OptimizeProblem<F>, x0: &[f64], f0: f64, tol: f64, max_iter: usize) -> SimplexOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = problem.dim;
    let (rho, chi, psi, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut evals = 0usize;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut fvals: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    fvals.push(f0);
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += initial_step(x0[i]);
        problem.project(&mut v);
        if v[i] == x0[i] {
            v[i] -= initial_step(x0[i]);
            problem.project(&mut v);
        }
        fvals.push(problem.eval(&v));
        evals += 1;
        simplex.push(v);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    let mut iter = 0usize;
    let mut converged = false;

    while iter < max_iter {
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = fvals[worst] - fvals[best];
        let scale = 1.0 + simplex[best].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.is_finite() && spread < tol && diameter < 1e-4 * scale {
            converged = true;
            break;
        }
        iter += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[k]) {
                *c += v / n as f64;
            }
        }

        for i in 0..n {
            trial[i] = centroid[i] + rho * (centroid[i] - simplex[worst][i]);
        }
        problem.project(&mut trial);
        let fr = problem.eval(&trial);
        evals += 1;

        if fr < fvals[best] {
            for i in 0..n {
                trial2[i] = centroid[i] + chi * (trial[i] - centroid[i]);
            }
            problem.project(&mut trial2);
            let fe = problem.eval(&trial2);
            evals += 1;
            if fe < fr {
                simplex[worst].copy_from_slice(&trial2);
                fvals[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                fvals[worst] = fr;
            }
            continue;
        }
        if fr < fvals[second_worst] {
            simplex[worst].copy_from_slice(&trial);
            fvals[worst] = fr;
            continue;
        }
        // contraction
        let outside = fr < fvals[worst];
        for i in 0..n {
            trial2[i] = if outside {
                centroid[i] + psi * (trial[i] - centroid[i])
            } else {
                centroid[i] - psi * (centroid[i] - simplex[worst][i])
            };
        }
        problem.project(&mut trial2);
        let fc = problem.eval(&trial2);
        evals += 1;
        let accept = if outside { fc <= fr } else { fc < fvals[worst] };
        if accept {
            simplex[worst].copy_from_slice(&trial2);
            fvals[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        let xb = simplex[best].clone();
        for k in 0..=n {
            if k == best {
                continue;
            }
            for i in 0..n {
                simplex[k][i] = xb[i] + sigma * (simplex[k][i] - xb[i]);
            }
            problem.project(&mut simplex[k]);
            fvals[k] = problem.eval(&simplex[k]);
            evals += 1;
        }
    }

    let (bi, bf) = fvals
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, &f)| if f < acc.1 { (i, f) } else { acc });
    (simplex[bi].clone(), bf, iter, evals, converged)
}

/// Central finite-difference step `max(1e-6, 1e-8 |x|)`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    (1e-8 * x.abs()).max(1e-6)
}

/// Central finite-difference gradient; falls back to a one-sided difference
/// when one neighbour is non-finite. Returns the number of evaluations used.
pub fn fd_gradient<F>(f: &F, x: &[f64], fx: f64, grad: &mut [f64]) -> usize
where
    F: Fn(&[f64]) -> f64,
{
    let mut evals = 0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        evals += 2;
        grad[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    evals
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Quasi-Newton (BFGS) multi-start minimization.
///
/// Converged means the finite-difference gradient norm dropped below `tol`.
/// A line search that cannot make progress, or a run of negligible
/// decreases, ends the run early with `converged = false`; callers see the
/// gradient norm in the result.
pub fn minimize_smooth<F>(problem: &OptimizeProblem<F>, tol: f64, max_iter: usize) -> Result<OptimizeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let starts = problem.valid_starts()?;
    let results: Vec<OptimizeResult> = starts
        .par_iter()
        .map(|(idx, x0, f0)| {
            let mut res = bfgs(problem, x0, *f0, tol, max_iter);
            res.start_index = *idx;
            res
        })
        .collect();
    Ok(reduce_best(results))
}

fn bfgs<F>(problem: &OptimizeProblem<F>, x0: &[f64], f0: f64, tol: f64, max_iter: usize) -> OptimizeResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = problem.dim;
    let f = |x: &[f64]| problem.eval(x);
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut g = vec![0.0; n];
    let mut evals = fd_gradient(&f, &x, fx, &mut g);
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut converged = norm(&g) < tol;
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut iter = 0;
    let mut stalled = 0;
    let mut reset_value = None;
    let mut checkpoint = fx;
    let mut slow = false;

    while !converged && iter < max_iter {
        iter += 1;
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            hinv = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + t * d[i];
            }
            let fnew = f(&xn);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some(fnew);
                break;
            }
            t *= 0.5;
        }
        let Some(fnew) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };

        evals += fd_gradient(&f, &xn, fnew, &mut gn);
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let f_change = fx - fnew;
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        fx = fnew;

        if sy > 1e-12 {
            if fresh {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let scale = sy / yy;
                hinv = identity(n);
                for (i, row) in hinv.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        converged = norm(&g) < tol;
        if !converged && f_change.abs() <= f64::EPSILON * fx.abs().max(1.0) && fresh {
            break;
        }
        if f_change.abs() <= STALL_FTOL * fx.abs().max(1.0) {
            stalled += 1;
            if stalled >= STALL_ITERS {
                if reset_value.is_some_and(|v: f64| v - fx <= STALL_FTOL * fx.abs().max(1.0)) {
                    break;
                }
                reset_value = Some(fx);
                hinv = identity(n);
                fresh = true;
                stalled = 0;
            }
        } else {
            stalled = 0;
        }
        if iter % PROGRESS_ITERS == 0 {
            if checkpoint - fx <= PROGRESS_FTOL * fx.abs().max(1.0) {
                if slow {
                    break;
                }
                slow = true;
                hinv = identity(n);
                fresh = true;
            } else {
                slow = false;
            }
            checkpoint = fx;
        }
    }

    OptimizeResult {
        grad_norm: norm(&g),
        argmin: x,
        value: fx,
        converged,
        evaluations: evals,
        start_index: 0,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Start list: `center` followed by `n_random` points drawn uniformly from
/// the box `center ± scale`. Deterministic given `seed`.
pub fn multi_start_grid(center: &[f64], n_random: usize, scale: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_random + 1);
    out.push(center.to_vec());
    for _ in 0..n_random {
        out.push(
            center
                .iter()
                .zip(scale)
                .map(|(c, s)| c + s * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        );
    }
    out
}

/// Optimizer knobs exposed through configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    /// Gradient-norm tolerance of the smooth solver.
    pub tol: f64,
    /// Objective-spread tolerance of the simplex solver.
    pub nonsmooth_tol: f64,
    pub max_iter: usize,
    /// Random starts added around the default start of the step-1 and step-2 fits.
    pub n_starts: usize,
    /// Random starts used on warm-started origins (after the first).
    pub warm_starts: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_SMOOTH_TOL,
            nonsmooth_tol: DEFAULT_NONSMOOTH_TOL,
            max_iter: DEFAULT_MAX_ITER,
            n_starts: 20,
            warm_starts: 2,
            seed: 7,
        }
    }
}

/// Mixes a base seed with stream identifiers (SplitMix64 finalizer).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_value_minimum() {
        let p = OptimizeProblem::new(|x: &[f64]| (x[0] - 2.0).abs(), 1, vec![vec![0.0]]);
        let r = minimize_nonsmooth(&p, 1e-7, 5000).unwrap();
        assert!((r.argmin[0] - 2.0).abs() < 1e-6, "{:?}", r);
        assert!(r.converged);
    }

    #[test]
    fn sample_quantile_via_simplex() {
        let sample = [-3.0, -1.0, 0.0, 1.0, 2.0];
        let alpha = 0.4;
        let obj = |x: &[f64]| {
            sample
                .iter()
                .map(|&r| (alpha - if r < x[0] { 1.0 } else { 0.0 }) * (r - x[0]))
                .sum::<f64>()
                / sample.len() as f64
        };
        // brute force on a 1e-4 grid: first minimizer from below
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=60_000 {
            let q = -4.0 + k as f64 * 1e-4;
            let v = obj(&[q]);
            if v < best.0 - 1e-12 {
                best = (v, q);
            }
        }
        assert!((best.1 + 1.0).abs() < 1e-9);
        let p = OptimizeProblem::new(obj, 1, vec![vec![0.5]]);
        let r = minimize_nonsmooth(&p, 1e-7, 5000).unwrap();
        assert!((r.value - best.0).abs() < 1e-6);
        // the 0.4-quantile loss is flat on [-1, 0]
        assert!(r.argmin[0] >= -1.0 - 1e-6 && r.argmin[0] <= 1e-6, "{:?}", r.argmin);
    }

    #[test]
    fn multi_start_finds_global_well() {
        // local minimum near x = 1.9 (value ~ 0.29), global near x = -2.1
        let f = |x: &[f64]| (x[0] * x[0] - 4.0).powi(2) + 2.0 * x[0];
        let starts = multi_start_grid(&[2.0], 10, &[4.0], 3);
        let p = OptimizeProblem::new(f, 1, starts);
        let r = minimize_nonsmooth(&p, 1e-9, 5000).unwrap();
        assert!(r.argmin[0] < -2.0, "{:?}", r);
        let single = OptimizeProblem::new(f, 1, vec![vec![2.0]]);
        let local = minimize_nonsmooth(&single, 1e-9, 5000).unwrap();
        assert!(local.argmin[0] > 1.0 && local.value > r.value);
    }

    #[test]
    fn all_invalid_starts_error() {
        let p = OptimizeProblem::new(|_x: &[f64]| f64::NAN, 1, vec![vec![0.0], vec![1.0]]);
        assert!(matches!(minimize_nonsmooth(&p, 1e-7, 100), Err(FcwqError::Optimization { .. })));
        assert!(minimize_smooth(&p, 1e-8, 100).is_err());
    }

    #[test]
    fn bounds_are_respected() {
        let p = OptimizeProblem::new(|x: &[f64]| (x[0] - 5.0).powi(2), 1, vec![vec![0.0]])
            .with_bounds(vec![(-1.0, 1.0)]);
        let r = minimize_nonsmooth(&p, 1e-9, 5000).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-6);
        let r = minimize_smooth(&p, 1e-8, 5000).unwrap();
        assert!(r.argmin[0] <= 1.0 && r.argmin[0] > 0.99, "{:?}", r);
    }

    #[test]
    fn smooth_quadratic() {
        let p = OptimizeProblem::new(|x: &[f64]| (x[0] - 3.0).powi(2), 1, vec![vec![0.0]]);
        let r = minimize_smooth(&p, 1e-8, 5000).unwrap();
        assert!((r.argmin[0] - 3.0).abs() < 1e-8, "{:?}", r);
        assert!(r.converged);
    }

    #[test]
    fn smooth_rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let p = OptimizeProblem::new(f, 2, vec![vec![-1.2, 1.0]]);
        let r = minimize_smooth(&p, 1e-8, 5000).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-5 && (r.argmin[1] - 1.0).abs() < 1e-5, "{:?}", r);
    }

    #[test]
    fn smooth_immediate_convergence() {
        let p = OptimizeProblem::new(|x: &[f64]| (x[0] - 3.0).powi(2) + x[1].powi(2), 2, vec![vec![3.0, 0.0]]);
        let r = minimize_smooth(&p, 1e-8, 5000).unwrap();
        assert!(r.converged);
        assert!(r.evaluations <= 5, "{}", r.evaluations);
    }

    #[test]
    fn fd_gradient_matches_analytic_quadratic() {
        let a = [[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 4.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |x: &[f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    v += 0.5 * x[i] * a[i][j] * x[j];
                }
                v -= b[i] * x[i];
            }
            v
        };
        for x in [[0.3, -1.2, 2.0], [10.0, 5.0, -7.0], [1e-3, 0.0, 1.0]] {
            let mut g = [0.0; 3];
            fd_gradient(&f, &x, f(&x), &mut g);
            for i in 0..3 {
                let exact: f64 = (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
                assert!((g[i] - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{} vs {exact}", g[i]);
            }
        }
    }

    #[test]
    fn simplex_matches_grid_on_piecewise_linear() {
        let pts = [(-1.5, 0.2), (0.3, -0.4), (2.0, 1.1), (0.7, 0.9), (-0.2, -1.0)];
        let f = |x: &[f64]| pts.iter().map(|(a, b)| (x[0] - a).abs() + 0.5 * (x[1] - b).abs()).sum::<f64>();
        let p = OptimizeProblem::new(f, 2, multi_start_grid(&[0.0, 0.0], 5, &[1.0, 1.0], 1));
        let r = minimize_nonsmooth(&p, 1e-7, 5000).unwrap();
        let mut grid_best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let x = [-2.0 + i as f64 * 0.01, -2.0 + j as f64 * 0.01];
                grid_best = grid_best.min(f(&x));
            }
        }
        assert!(r.value <= grid_best + 1e-6, "{} vs {grid_best}", r.value);
    }

    #[test]
    fn starts_are_deterministic_and_boxed() {
        let a = multi_start_grid(&[1.0, -1.0], 100, &[0.5, 2.0], 42);
        let b = multi_start_grid(&[1.0, -1.0], 100, &[0.5, 2.0], 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 101);
        assert_eq!(multi_start_grid(&[1.0], 0, &[1.0], 0), vec![vec![1.0]]);
        for s in &a {
            assert!((s[0] - 1.0).abs() <= 0.5 && (s[1] + 1.0).abs() <= 2.0);
        }
    }

    #[test]
    fn minimizers_are_deterministic() {
        let f = |x: &[f64]| (x[0] - 1.0).abs() + (x[1] + 0.5).powi(2) + (3.0 * x[0]).sin();
        let p = OptimizeProblem::new(f, 2, multi_start_grid(&[0.0, 0.0], 8, &[2.0, 2.0], 9));
        assert_eq!(minimize_nonsmooth(&p, 1e-7, 2000).unwrap(), minimize_nonsmooth(&p, 1e-7, 2000).unwrap());
        assert_eq!(minimize_smooth(&p, 1e-8, 2000).unwrap(), minimize_smooth(&p, 1e-8, 2000).unwrap());
    }
}
