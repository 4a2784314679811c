//! Box-constrained L-BFGS: two-loop recursion on the free variables, search
//! directions truncated at the bounds, strong-Wolfe line search along the
//! resulting segment.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Sufficient decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_evals_per_search: usize,
    /// Stop when the projected gradient max-norm falls below this fraction of
    /// its initial value.
    pub grad_tol: f64,
    /// Stop when the objective falls to this value or below.
    pub value_tol: f64,
    /// Trial step of the first iteration; `None` takes `1 / |g|_inf`.
    pub first_step: Option<f64>,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 100,
            c1: 1e-4,
            c2: 0.9,
            max_evals_per_search: 20,
            grad_tol: 1e-10,
            value_tol: 0.0,
            first_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    GradientTolerance,
    ValueTolerance,
    LineSearchFailed,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::GradientTolerance => "gradient_tolerance",
            StopReason::ValueTolerance => "value_tolerance",
            StopReason::LineSearchFailed => "line_search_failed",
        }
    }
}

/// One accepted iterate (`iter == 0` is the starting point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterInfo {
    pub iter: usize,
    pub value: f64,
    /// Projected-gradient max-norm.
    pub grad_norm: f64,
    /// Euclidean length of the accepted update.
    pub step_len: f64,
    /// Objective evaluations so far.
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub reason: StopReason,
    pub history: Vec<IterInfo>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Bounds<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
    free: Option<&'a [bool]>,
}

impl Bounds<'_> {
    fn is_free(&self, i: usize) -> bool {
        self.free.is_none_or(|f| f[i])
    }

    /// Gradient with fixed and bound-blocked components removed.
    fn project_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let blocked = !self.is_free(i)
                    || (x[i] <= self.lower[i] && g[i] > 0.0)
                    || (x[i] >= self.upper[i] && g[i] < 0.0);
                if blocked {
                    0.0
                } else {
                    g[i]
                }
            })
            .collect()
    }

    fn clip(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Largest step keeping `x + a d` feasible.
    fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for i in 0..x.len() {
            if d[i] < 0.0 {
                a = a.min((self.lower[i] - x[i]) / d[i]);
            } else if d[i] > 0.0 {
                a = a.min((self.upper[i] - x[i]) / d[i]);
            }
        }
        a.max(0.0)
    }
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Minimizes `f` subject to `lower <= x <= upper`; components with
/// `free[i] == false` keep their initial value. `on_iter` sees every accepted
/// iterate, including the start.
pub fn lbfgs_minimize<F, C>(
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    free: Option<&[bool]>,
    opts: &LbfgsOptions,
    mut f: F,
    mut on_iter: C,
) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&IterInfo, &[f64]) -> Result<()>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n || free.is_some_and(|m| m.len() != n) {
        return Err(Error::GridMismatch(
            "bounds, mask and start point differ in length".into(),
        ));
    }
    if opts.memory == 0 {
        return Err(Error::config("L-BFGS memory must be at least 1"));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::config("lower bound exceeds upper bound"));
    }
    if !(0.0 < opts.c1 && opts.c1 < opts.c2 && opts.c2 < 1.0) {
        return Err(Error::config("line search needs 0 < c1 < c2 < 1"));
    }
    let bounds = Bounds { lower, upper, free };
    let mut x = x0.to_vec();
    bounds.clip(&mut x);
    let mut evals = 1;
    let (mut value, mut grad) = f(&x)?;
    check_grad(&grad, n)?;
    let mut pg = bounds.project_gradient(&x, &grad);
    let g0 = inf_norm(&pg);
    let mut history = vec![IterInfo {
        iter: 0,
        value,
        grad_norm: g0,
        step_len: 0.0,
        evals,
    }];
    on_iter(&history[0], &x)?;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iter = 0;
    let reason = loop {
        let gn = inf_norm(&pg);
        if value <= opts.value_tol {
            break StopReason::ValueTolerance;
        }
        if gn <= opts.grad_tol * g0 || gn == 0.0 {
            break StopReason::GradientTolerance;
        }
        if iter == opts.max_iters {
            break StopReason::MaxIters;
        }
        let mut d = direction(&pg, &pairs);
        for i in 0..n {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            pairs.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let a_max = bounds.max_step(&x, &d);
        let a0 = if pairs.is_empty() {
            opts.first_step.unwrap_or(1.0 / inf_norm(&d))
        } else {
            1.0
        };
        let start = Point {
            alpha: 0.0,
            x: x.clone(),
            value,
            grad: grad.clone(),
            slope: dot(&grad, &d),
        };
        let found = line_search(
            &mut f,
            &bounds,
            &start,
            &d,
            a0.min(a_max),
            a_max,
            opts,
            &mut evals,
        )?;
        let Some(p) = found else {
            if pairs.is_empty() {
                break StopReason::LineSearchFailed;
            }
            log::debug!(
                "line search failed at iteration {}; restarting from steepest descent",
                iter + 1
            );
            pairs.clear();
            continue;
        };
        iter += 1;
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if bounds.is_free(i) {
                    p.grad[i] - grad[i]
                } else {
                    0.0
                }
            })
            .collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, 1.0 / sy));
        }
        x = p.x;
        value = p.value;
        grad = p.grad;
        pg = bounds.project_gradient(&x, &grad);
        let info = IterInfo {
            iter,
            value,
            grad_norm: inf_norm(&pg),
            step_len: dot(&s, &s).sqrt(),
            evals,
        };
        log::info!(
            "iter {iter}: misfit {value:.6e}, |g| {:.3e}, step {:.3e}",
            info.grad_norm,
            info.step_len
        );
        history.push(info);
        on_iter(&info, &x)?;
    };
    Ok(LbfgsResult {
        x,
        value,
        grad,
        reason,
        history,
    })
}

fn check_grad(g: &[f64], n: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::GridMismatch(format!(
            "objective returned {} gradient entries for {n} unknowns",
            g.len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("objective gradient is not finite".into()));
    }
    Ok(())
}

/// Two-loop recursion `-H g`.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut F,
    bounds: &Bounds<'_>,
    start: &Point,
    d: &[f64],
    a1: f64,
    a_max: f64,
    opts: &LbfgsOptions,
    evals: &mut usize,
) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(a1 > 0.0) || !a1.is_finite() {
        return Ok(None);
    }
    let mut budget = opts.max_evals_per_search;
    let mut eval = |alpha: f64, evals: &mut usize| -> Result<Point> {
        let mut x: Vec<f64> = start.x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        bounds.clip(&mut x);
        *evals += 1;
        let (value, grad) = f(&x)?;
        check_grad(&grad, x.len())?;
        let slope = dot(&grad, d);
        Ok(Point {
            alpha,
            x,
            value,
            grad,
            slope,
        })
    };
    let armijo =
        |p: &Point| p.value.is_finite() && p.value <= start.value + opts.c1 * p.alpha * start.slope;
    let curvature = |p: &Point| p.slope.abs() <= -opts.c2 * start.slope;
    let mut prev_alpha = 0.0;
    let mut prev_value = start.value;
    let mut prev_slope = start.slope;
    let mut alpha = a1;
    let mut best: Option<Point> = None;
    let mut first = true;
    let (mut lo, mut hi) = loop {
        if budget == 0 {
            return Ok(best);
        }
        budget -= 1;
        let p = eval(alpha, evals)?;
        if !armijo(&p) || (!first && p.value >= prev_value) {
            break (
                Point {
                    alpha: prev_alpha,
                    x: vec![],
                    value: prev_value,
                    grad: vec![],
                    slope: prev_slope,
                },
                p,
            );
        }
        if curvature(&p) {
            return Ok(Some(p));
        }
        if p.slope >= 0.0 {
            let lo = Point {
                alpha: p.alpha,
                x: p.x.clone(),
                value: p.value,
                grad: p.grad.clone(),
                slope: p.slope,
            };
            best = Some(p);
            break (
                lo,
                Point {
                    alpha: prev_alpha,
                    x: vec![],
                    value: prev_value,
                    grad: vec![],
                    slope: prev_slope,
                },
            );
        }
        if alpha >= a_max {
            // blocked by a bound while still descending
            return Ok(Some(p));
        }
        prev_alpha = p.alpha;
        prev_value = p.value;
        prev_slope = p.slope;
        best = Some(p);
        alpha = (2.0 * alpha).min(a_max);
        first = false;
    };
    // zoom between lo (sufficient decrease, lowest value) and hi
    loop {
        if budget == 0 {
            return Ok(best);
        }
        budget -= 1;
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        if width <= 1e-14 * a.abs().max(b.abs()).max(1e-300) {
            return Ok(best);
        }
        // minimizer of the quadratic through (a, phi_a, phi'_a) and (b, phi_b)
        let denom = 2.0 * (hi.value - lo.value - lo.slope * (b - a));
        let mut t = if denom > 0.0 {
            a - lo.slope * (b - a) * (b - a) / denom
        } else {
            0.5 * (a + b)
        };
        let (l, r) = (a.min(b), a.max(b));
        if !(t > l + 0.1 * width && t < r - 0.1 * width) {
            t = 0.5 * (a + b);
        }
        let p = eval(t, evals)?;
        if !armijo(&p) || p.value >= lo.value {
            hi = p;
            continue;
        }
        if curvature(&p) {
            return Ok(Some(p));
        }
        if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = Point {
            alpha: p.alpha,
            x: p.x.clone(),
            value: p.value,
            grad: p.grad.clone(),
            slope: p.slope,
        };
        best = Some(p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(diag: Vec<f64>, center: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let g: Vec<f64> = x
                .iter()
                .zip(&diag)
                .zip(&center)
                .map(|((x, d), c)| d * (x - c))
                .collect();
            let v = 0.5
                * x.iter()
                    .zip(&diag)
                    .zip(&center)
                    .map(|((x, d), c)| d * (x - c) * (x - c))
                    .sum::<f64>();
            Ok((v, g))
        }
    }

    fn unbounded(n: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    #[test]
    fn quadratic_bowl_converges_within_two_dim_iterations() {
        let dim = 8;
        let diag: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64).collect();
        let center: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.7).sin()).collect();
        let (lo, hi) = unbounded(dim);
        let opts = LbfgsOptions {
            memory: dim,
            max_iters: 2 * dim,
            grad_tol: 1e-14,
            ..Default::default()
        };
        let r = lbfgs_minimize(
            &vec![0.0; dim],
            &lo,
            &hi,
            None,
            &opts,
            quad(diag, center.clone()),
            |_, _| Ok(()),
        )
        .unwrap();
        let err =
            r.x.iter()
                .zip(&center)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        assert!(
            err < 1e-10,
            "error {err} after {} iterations ({:?})",
            r.history.len() - 1,
            r.reason
        );
    }

    #[test]
    fn values_never_increase() {
        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((
                v,
                vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ],
            ))
        };
        let (lo, hi) = unbounded(2);
        let opts = LbfgsOptions {
            max_iters: 200,
            ..Default::default()
        };
        let r = lbfgs_minimize(&[-1.2, 1.0], &lo, &hi, None, &opts, rosen, |_, _| Ok(())).unwrap();
        assert!(r.history.windows(2).all(|w| w[1].value <= w[0].value));
        assert!(
            (r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn bounds_and_mask_are_respected() {
        let diag = vec![1.0, 2.0, 3.0];
        let center = vec![5.0, -5.0, 1.0];
        let lower = vec![0.0, -1.0, -10.0];
        let upper = vec![2.0, 10.0, 10.0];
        let free = [true, true, false];
        let mut seen = Vec::new();
        let r = lbfgs_minimize(
            &[1.0, 1.0, 7.0],
            &lower,
            &upper,
            Some(&free),
            &LbfgsOptions::default(),
            quad(diag, center),
            |_, x| {
                seen.push(x.to_vec());
                Ok(())
            },
        )
        .unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-12 && (r.x[1] + 1.0).abs() < 1e-12);
        assert_eq!(r.x[2], 7.0);
        for x in &seen {
            assert!(x
                .iter()
                .zip(&lower)
                .zip(&upper)
                .all(|((v, l), u)| v >= l && v <= u));
            assert_eq!(x[2], 7.0);
        }
        assert_eq!(r.reason, StopReason::GradientTolerance);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let (lo, hi) = unbounded(2);
        let r = lbfgs_minimize(
            &[1.0, 2.0],
            &lo,
            &hi,
            None,
            &LbfgsOptions::default(),
            quad(vec![1.0, 1.0], vec![1.0, 2.0]),
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.reason, StopReason::ValueTolerance);
    }

    #[test]
    fn rejects_bad_options() {
        let (lo, hi) = unbounded(1);
        let bad = LbfgsOptions {
            memory: 0,
            ..Default::default()
        };
        assert!(lbfgs_minimize(
            &[0.0],
            &lo,
            &hi,
            None,
            &bad,
            quad(vec![1.0], vec![0.0]),
            |_, _| Ok(())
        )
        .is_err());
        let bad = LbfgsOptions {
            c1: 0.95,
            ..Default::default()
        };
        assert!(lbfgs_minimize(
            &[0.0],
            &lo,
            &hi,
            None,
            &bad,
            quad(vec![1.0], vec![0.0]),
            |_, _| Ok(())
        )
        .is_err());
    }
}
