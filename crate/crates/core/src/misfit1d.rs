//! Exact 1D optimal transport on sampled densities and the trace-wise misfits
//! built on it.
//!
//! The squared distance is evaluated in the time domain,
//! `W2^2(f, g) = sum_i w_i f_i (t_i - G^-1(F(t_i)))^2`
//! with trapezoid weights `w_i`, and its gradient is the exact derivative of
//! that quadrature with respect to the samples of `f`.

use crate::error::{Error, Result};
use crate::normalize::{
    default_sign_scale, normalize_exponential, normalize_linear, normalize_signsensitive,
    NormConfig, NormDerivative, NormalizedSignal,
};
use crate::real::Real;
use crate::wave::{ShotRecord, TimeAxis, Trace};

/// Piecewise linear cumulative distribution on uniform knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf<T = f64> {
    pub axis: TimeAxis<T>,
    pub values: Vec<T>,
    /// Unnormalized final cumulative value (the density's trapezoid mass).
    pub raw_mass: T,
}

pub fn cdf<T: Real>(density: &NormalizedSignal<T>) -> Result<Cdf<T>> {
    cdf_of(&density.density, density.axis)
}

pub fn cdf_of<T: Real>(density: &[T], axis: TimeAxis<T>) -> Result<Cdf<T>> {
    if density.len() != axis.nt {
        return Err(Error::GridMismatch(format!(
            "{} samples for an axis of {}",
            density.len(),
            axis.nt
        )));
    }
    if density.iter().any(|v| !(*v >= T::zero())) {
        return Err(Error::Domain(
            "cdf of a density with negative or NaN samples".into(),
        ));
    }
    let half = T::lit(0.5) * axis.dt;
    let mut values = Vec::with_capacity(density.len());
    let mut acc = T::zero();
    values.push(acc);
    for w in density.windows(2) {
        acc += half * (w[0] + w[1]);
        values.push(acc);
    }
    if !(acc > T::zero()) {
        return Err(Error::Degenerate("density has zero mass".into()));
    }
    values.iter_mut().for_each(|v| *v /= acc);
    *values.last_mut().expect("nt >= 2") = T::one();
    Ok(Cdf {
        axis,
        values,
        raw_mass: acc,
    })
}

impl<T: Real> Cdf<T> {
    /// Index `k` of the first knot with `F_k >= y`, clamped to the last knot.
    fn locate(&self, y: T) -> usize {
        self.values
            .partition_point(|&v| v < y)
            .min(self.values.len() - 1)
    }

    /// `inf { t : F(t) >= y }` on the linear interpolant of the knots.
    pub fn quantile(&self, y: T) -> T {
        let k = self.locate(y);
        if k == 0 {
            return self.axis.t(0);
        }
        let (f0, f1) = (self.values[k - 1], self.values[k]);
        let frac = ((y - f0) / (f1 - f0)).min(T::one()).max(T::zero());
        self.axis.t(k - 1) + self.axis.dt * frac
    }

    /// Quantile and its derivative in `y`; the slope denominator is floored
    /// at `floor`. The flag reports whether the floor was active.
    fn quantile_with_slope(&self, y: T, floor: T) -> (T, T, bool) {
        let k = self.locate(y).max(1);
        let (f0, f1) = (self.values[k - 1], self.values[k]);
        let q = self.quantile(y);
        let gap = f1 - f0;
        let clamped = gap < floor;
        (q, self.axis.dt / gap.max(floor), clamped)
    }

    /// Evaluates F at an arbitrary time by linear interpolation.
    pub fn eval(&self, t: T) -> T {
        let s = t / self.axis.dt;
        if !(s > T::zero()) {
            return self.values[0];
        }
        let i = s.floor().to_usize().unwrap_or(usize::MAX);
        if i + 1 >= self.values.len() {
            return T::one();
        }
        let frac = s - T::from_usize_lossy(i);
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }
}

pub fn quantile<T: Real>(cdf: &Cdf<T>, y: T) -> T {
    cdf.quantile(y)
}

/// `T(t_i) = G^-1(F(t_i))` at every sample of `f`.
pub fn optimal_map_1d<T: Real>(f: &NormalizedSignal<T>, g: &NormalizedSignal<T>) -> Result<Vec<T>> {
    let cf = cdf(f)?;
    let cg = cdf(g)?;
    Ok(cf.values.iter().map(|&y| cg.quantile(y)).collect())
}

/// Squared distance and its gradient with respect to the samples of `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct W2Eval<T = f64> {
    pub value: T,
    pub grad: Vec<T>,
    /// Map points where the quantile slope hit the density floor.
    pub clamped: usize,
}

pub fn w2_squared_1d<T: Real>(f: &NormalizedSignal<T>, g: &NormalizedSignal<T>) -> Result<T> {
    Ok(w2_eval(&f.density, f.axis, &g.density, g.axis)?.value)
}

pub fn w2_frechet_1d<T: Real>(
    f: &NormalizedSignal<T>,
    g: &NormalizedSignal<T>,
) -> Result<W2Eval<T>> {
    w2_eval(&f.density, f.axis, &g.density, g.axis)
}

/// Core kernel on raw sample vectors. `f` need not have unit mass: the CDF is
/// renormalized, and that renormalization is differentiated.
pub fn w2_eval<T: Real>(f: &[T], fa: TimeAxis<T>, g: &[T], ga: TimeAxis<T>) -> Result<W2Eval<T>> {
    let cf = cdf_of(f, fa)?;
    let cg = cdf_of(g, ga)?;
    let n = f.len();
    let g_peak = g.iter().copied().fold(T::zero(), T::max);
    let floor = T::lit(1e-12) * g_peak * ga.dt / cg.raw_mass;
    let mut value = T::zero();
    let mut grad = vec![T::zero(); n];
    let mut a = vec![T::zero(); n];
    let mut clamped = 0;
    let two = T::lit(2.0);
    for i in 0..n {
        let (q, slope, cl) = cg.quantile_with_slope(cf.values[i], floor);
        if cl && f[i] > T::zero() {
            clamped += 1;
        }
        let d = fa.t(i) - q;
        let w = fa.weight(i);
        value += w * f[i] * d * d;
        grad[i] = w * d * d;
        a[i] = -two * w * f[i] * d * slope;
    }
    // dF_i/df_j through the cumulative trapezoid C_i and the renormalization C_N.
    let s: T = a.iter().zip(&cf.values).map(|(&ai, &fi)| ai * fi).sum();
    let half = T::lit(0.5) * fa.dt;
    let mut tail = T::zero(); // R_{j+1}
    for j in (0..n).rev() {
        let r_j = tail + a[j];
        let mut c = half * tail;
        if j >= 1 {
            c += half * r_j;
        }
        grad[j] += (c - fa.weight(j) * s) / cf.raw_mass;
        tail = r_j;
    }
    Ok(W2Eval {
        value,
        grad,
        clamped,
    })
}

/// Misfit value plus its derivative with respect to every synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MisfitEval<T = f64> {
    pub value: T,
    pub adjoint_source: ShotRecord<T>,
    pub diagnostics: MisfitDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MisfitDiagnostics {
    /// Traces skipped because their normalization had zero mass.
    pub degenerate_traces: usize,
    pub clamped_points: usize,
}

impl std::ops::AddAssign for MisfitDiagnostics {
    fn add_assign(&mut self, o: Self) {
        self.degenerate_traces += o.degenerate_traces;
        self.clamped_points += o.clamped_points;
    }
}

/// `1/2 sum_r int |f - g|^2 dt` with trapezoid weights.
pub fn misfit_l2<T: Real>(f: &ShotRecord<T>, g: &ShotRecord<T>) -> Result<MisfitEval<T>> {
    f.check_geometry(g)?;
    let ax = f.axis;
    let half = T::lit(0.5);
    let mut value = T::zero();
    let mut adj = ShotRecord::zeros(f.shot_id, f.n_receivers(), ax);
    for ((fr, gr), ar) in f.traces.iter().zip(&g.traces).zip(adj.traces.iter_mut()) {
        for i in 0..ax.nt {
            let r = fr[i] - gr[i];
            let w = ax.weight(i);
            value += half * w * r * r;
            ar[i] = w * r;
        }
    }
    Ok(MisfitEval {
        value,
        adjoint_source: adj,
        diagnostics: MisfitDiagnostics::default(),
    })
}

fn shot_scale<T: Real>(f: &ShotRecord<T>, g: &ShotRecord<T>, c: Option<T>) -> T {
    c.unwrap_or_else(|| default_sign_scale(f.max_abs().max(g.max_abs())))
}

fn finish<T: Real>(n: NormalizedSignal<T>, deriv: NormDerivative) -> NormalizedSignal<T> {
    match deriv {
        NormDerivative::Differentiate => n,
        NormDerivative::Frozen => n.frozen(),
    }
}

/// W2^2 between one normalized pair, chained back to the raw `f` samples.
fn pair_term<T: Real>(
    nf: &NormalizedSignal<T>,
    ng: &NormalizedSignal<T>,
) -> Result<(T, Vec<T>, usize)> {
    let e = w2_frechet_1d(nf, ng)?;
    let adj = nf.jacobian.apply_transpose(&e.grad)?;
    Ok((e.value, adj, e.clamped))
}

/// Trace-by-trace `sum_r W2^2(N(f_r), N(g_r))`.
pub fn misfit_j1<T: Real>(
    f: &ShotRecord<T>,
    g: &ShotRecord<T>,
    norm: &NormConfig<T>,
    deriv: NormDerivative,
) -> Result<MisfitEval<T>> {
    f.check_geometry(g)?;
    let ax = f.axis;
    let mut value = T::zero();
    let mut adj = ShotRecord::zeros(f.shot_id, f.n_receivers(), ax);
    let mut diag = MisfitDiagnostics::default();
    let scale = match norm {
        NormConfig::SignSensitive(c) => shot_scale(f, g, *c),
        NormConfig::Exponential(c) => *c,
        NormConfig::Linear => T::zero(),
    };
    for r in 0..f.n_receivers() {
        let (ft, gt) = (f.trace(r), g.trace(r));
        let pair = match norm {
            NormConfig::Linear => normalize_linear(&ft, &gt),
            NormConfig::SignSensitive(_) => normalize_signsensitive(&ft, scale)
                .and_then(|a| Ok((a, normalize_signsensitive(&gt, scale)?))),
            NormConfig::Exponential(_) => normalize_exponential(&ft, scale)
                .and_then(|a| Ok((a, normalize_exponential(&gt, scale)?))),
        };
        let (nf, ng) = match pair {
            Ok(p) => p,
            Err(Error::Degenerate(msg)) => {
                log::warn!(
                    "shot {} receiver {r}: degenerate trace pair contributes zero ({msg})",
                    f.shot_id
                );
                diag.degenerate_traces += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (v, a, cl) = pair_term(&finish(nf, deriv), &ng)?;
        value += v;
        adj.traces[r] = a;
        diag.clamped_points += cl;
    }
    Ok(MisfitEval {
        value,
        adjoint_source: adj,
        diagnostics: diag,
    })
}

/// Two-sided `sum_r W2^2(P f, P g) + W2^2(P(-f), P(-g))` with the
/// sign-sensitive normalization `P`.
pub fn misfit_j3<T: Real>(
    f: &ShotRecord<T>,
    g: &ShotRecord<T>,
    c: Option<T>,
    deriv: NormDerivative,
) -> Result<MisfitEval<T>> {
    f.check_geometry(g)?;
    let ax = f.axis;
    let scale = shot_scale(f, g, c);
    let mut value = T::zero();
    let mut adj = ShotRecord::zeros(f.shot_id, f.n_receivers(), ax);
    let mut diag = MisfitDiagnostics::default();
    for r in 0..f.n_receivers() {
        let (ft, gt) = (f.trace(r), g.trace(r));
        let pos = pair_term(
            &finish(normalize_signsensitive(&ft, scale)?, deriv),
            &normalize_signsensitive(&gt, scale)?,
        )?;
        let neg = pair_term(
            &finish(normalize_signsensitive(&ft.neg(), scale)?, deriv),
            &normalize_signsensitive(&gt.neg(), scale)?,
        )?;
        value += pos.0 + neg.0;
        adj.traces[r] = pos.1.iter().zip(&neg.1).map(|(&p, &m)| p - m).collect();
        diag.clamped_points += pos.2 + neg.2;
    }
    Ok(MisfitEval {
        value,
        adjoint_source: adj,
        diagnostics: diag,
    })
}

/// Single-trace J3, used by landscape sweeps.
pub fn j3_trace<T: Real>(f: &Trace<T>, g: &Trace<T>, c: T) -> Result<T> {
    let p = w2_squared_1d(
        &normalize_signsensitive(f, c)?,
        &normalize_signsensitive(g, c)?,
    )?;
    let m = w2_squared_1d(
        &normalize_signsensitive(&f.neg(), c)?,
        &normalize_signsensitive(&g.neg(), c)?,
    )?;
    Ok(p + m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::ricker;
    use proptest::prelude::*;

    fn axis(nt: usize, dt: f64) -> TimeAxis<f64> {
        TimeAxis::new(nt, dt).unwrap()
    }

    fn density(ax: TimeAxis<f64>, f: impl Fn(f64) -> f64) -> NormalizedSignal<f64> {
        NormalizedSignal::from_density(Trace::from_fn(ax, f).values, ax).unwrap()
    }

    fn gauss(mu: f64, s: f64) -> impl Fn(f64) -> f64 {
        move |t| (-(t - mu) * (t - mu) / (2.0 * s * s)).exp()
    }

    #[test]
    fn uniform_cdf_and_quantiles() {
        let ax = axis(101, 0.01);
        let u = density(ax, |_| 1.0);
        let c = cdf(&u).unwrap();
        for (i, v) in c.values.iter().enumerate() {
            assert!((v - ax.t(i)).abs() < 1e-14);
        }
        assert!((c.quantile(0.5) - 0.5).abs() < 1e-14);
        assert_eq!(c.quantile(0.0), 0.0);
        assert!((c.quantile(1.0) - 1.0).abs() < 1e-14);
        assert_eq!(*c.values.last().unwrap(), 1.0);
    }

    #[test]
    fn two_spikes_step_by_half() {
        let ax = axis(101, 0.01);
        let mut d = vec![0.0; 101];
        d[25] = 1.0;
        d[75] = 1.0;
        let c = cdf(&NormalizedSignal::from_density(d, ax).unwrap()).unwrap();
        assert!(c.values[24] == 0.0 && (c.values[26] - 0.5).abs() < 1e-14);
        assert!((c.values[74] - 0.5).abs() < 1e-14 && (c.values[76] - 1.0).abs() < 1e-14);
        // flat segment: left endpoint
        assert!((c.quantile(0.5) - 0.26).abs() < 1e-12);
    }

    #[test]
    fn negative_density_rejected() {
        let ax = axis(5, 0.1);
        assert!(cdf_of(&[0.1, -0.2, 0.3, 0.1, 0.1], ax).is_err());
    }

    #[test]
    fn identical_densities_have_identity_map_and_zero_cost() {
        let ax = axis(400, 0.005);
        let f = density(ax, gauss(1.0, 0.2));
        let map = optimal_map_1d(&f, &f).unwrap();
        for (i, m) in map.iter().enumerate() {
            assert!((m - ax.t(i)).abs() < 1e-10);
        }
        let e = w2_frechet_1d(&f, &f).unwrap();
        assert!(e.value.abs() < 1e-12);
        assert!(e.grad.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn shifted_copy_maps_by_translation() {
        let ax = axis(2001, 0.001);
        let s = 0.3;
        let f = density(ax, gauss(0.7, 0.08));
        let g = density(ax, gauss(0.7 + s, 0.08));
        let map = optimal_map_1d(&f, &g).unwrap();
        for i in 0..ax.nt {
            if f.density[i] > 1e-3 {
                assert!(
                    (map[i] - ax.t(i) - s).abs() < 1e-3,
                    "t {} map {}",
                    ax.t(i),
                    map[i]
                );
            }
        }
        let w = w2_squared_1d(&f, &g).unwrap();
        assert!((w - s * s).abs() <= 1e-6 * s * s + 1e-7, "w2 {w}");
    }

    #[test]
    fn dilation_map() {
        let ax = axis(2001, 0.001);
        let f = density(ax, |t| if t <= 1.0 { 1.0 } else { 0.0 });
        let g = density(ax, |_| 1.0);
        let map = optimal_map_1d(&f, &g).unwrap();
        for i in 0..1000 {
            assert!((map[i] - 2.0 * ax.t(i)).abs() < 2e-3);
        }
    }

    #[test]
    fn gaussian_closed_form() {
        // W2^2(N(mu, s^2), N(0,1)) = mu^2 + (s - 1)^2
        for &(mu, s) in &[(0.5, 1.0), (1.5, 0.7), (-0.8, 1.6)] {
            let ax = TimeAxis::new(16001, (16.0 + 2.0f64 * f64::abs(mu)) / 16000.0).unwrap();
            let lo = -8.0 - f64::abs(mu);
            let f = density(ax, |t| gauss(mu, s)(t + lo));
            let g = density(ax, |t| gauss(0.0, 1.0)(t + lo));
            let w = w2_squared_1d(&f, &g).unwrap();
            let exact = mu * mu + (s - 1.0) * (s - 1.0);
            assert!((w - exact).abs() < 1e-4, "mu {mu} s {s}: {w} vs {exact}");
        }
    }

    #[test]
    fn frechet_matches_central_differences() {
        let ax = axis(300, 0.01);
        let f = density(ax, |t| gauss(1.2, 0.25)(t) + 0.05);
        let g = density(ax, |t| gauss(1.7, 0.35)(t) + 0.02);
        let e = w2_frechet_1d(&f, &g).unwrap();
        // mass-neutral direction
        let mut delta: Vec<f64> = (0..300)
            .map(|i| (i as f64 * 0.05).sin() * gauss(1.3, 0.4)(ax.t(i)))
            .collect();
        let m = ax.integrate(&delta);
        delta.iter_mut().for_each(|d| *d -= m / ax.duration());
        let h = 1e-6;
        let eval = |s: f64| {
            let v: Vec<f64> = f
                .density
                .iter()
                .zip(&delta)
                .map(|(a, b)| a + s * b)
                .collect();
            w2_eval(&v, ax, &g.density, ax).unwrap().value
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let an: f64 = e.grad.iter().zip(&delta).map(|(a, b)| a * b).sum();
        assert!(((fd - an) / fd).abs() < 1e-4, "fd {fd} an {an}");
        // descent
        let gg: f64 = e.grad.iter().map(|x| x * x).sum();
        assert!(-gg < 0.0);
    }

    #[test]
    fn l2_cases() {
        let ax = axis(101, 0.01);
        let g = ShotRecord {
            shot_id: 0,
            axis: ax,
            traces: vec![vec![0.3; 101], vec![-0.1; 101]],
        };
        let f = ShotRecord {
            shot_id: 0,
            axis: ax,
            traces: vec![vec![1.3; 101], vec![-0.1; 101]],
        };
        let e = misfit_l2(&f, &g).unwrap();
        assert!((e.value - ax.duration() / 2.0).abs() < 1e-14);
        assert_eq!(misfit_l2(&g, &g).unwrap().value, 0.0);
        // FD check
        let f2 = f.map(|v| v * v.sin());
        let e2 = misfit_l2(&f2, &g).unwrap();
        let (r, i, h) = (0, 37, 1e-6);
        let bump = |s: f64| {
            let mut x = f2.clone();
            x.traces[r][i] += s;
            misfit_l2(&x, &g).unwrap().value
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        assert!(((fd - e2.adjoint_source.traces[r][i]) / fd).abs() < 1e-8);
    }

    fn gather(ax: TimeAxis<f64>, shifts: &[f64]) -> ShotRecord<f64> {
        ShotRecord {
            shot_id: 0,
            axis: ax,
            traces: shifts
                .iter()
                .map(|&s| ricker(6.0, 0.8 + s, ax).unwrap().values)
                .collect(),
        }
    }

    #[test]
    fn j1_cases() {
        let ax = axis(400, 0.005);
        let g = gather(ax, &[0.0, 0.0, 0.0]);
        let f = gather(ax, &[0.05, 0.05, 0.05]);
        let cfg = NormConfig::SignSensitive(Some(2.0));
        let d = NormDerivative::Differentiate;
        let zero = misfit_j1(&g, &g, &cfg, d).unwrap();
        assert!(zero.value.abs() < 1e-12);
        assert!(zero.adjoint_source.max_abs() < 1e-10);
        let three = misfit_j1(&f, &g, &cfg, d).unwrap();
        let one = misfit_j1(
            &ShotRecord {
                shot_id: 0,
                axis: ax,
                traces: vec![f.traces[0].clone()],
            },
            &ShotRecord {
                shot_id: 0,
                axis: ax,
                traces: vec![g.traces[0].clone()],
            },
            &cfg,
            d,
        )
        .unwrap();
        assert!((three.value - 3.0 * one.value).abs() < 1e-12 * three.value);
        let direct = w2_squared_1d(
            &normalize_signsensitive(&f.trace(0), 2.0).unwrap(),
            &normalize_signsensitive(&g.trace(0), 2.0).unwrap(),
        )
        .unwrap();
        assert!((one.value - direct).abs() < 1e-15);
    }

    #[test]
    fn j1_degenerate_trace_contributes_zero() {
        let ax = axis(50, 0.01);
        let f = ShotRecord {
            shot_id: 0,
            axis: ax,
            traces: vec![vec![-1.0; 50], vec![0.5; 50]],
        };
        let g = ShotRecord {
            shot_id: 0,
            axis: ax,
            traces: vec![vec![1.0; 50], vec![0.5; 50]],
        };
        let e = misfit_j1(&f, &g, &NormConfig::Linear, NormDerivative::Differentiate).unwrap();
        assert_eq!(e.diagnostics.degenerate_traces, 1);
        assert!(e.value.abs() < 1e-20);
    }

    fn fd_check(e: &MisfitEval<f64>, eval: &dyn Fn(&ShotRecord<f64>) -> f64, f: &ShotRecord<f64>) {
        let dir = f.map(|_| 0.0);
        let mut dir = dir;
        for (r, tr) in dir.traces.iter_mut().enumerate() {
            for (i, v) in tr.iter_mut().enumerate() {
                *v = ((i * (r + 2)) as f64 * 0.013).sin() * 0.3;
            }
        }
        let h = 1e-6;
        let shifted = |s: f64| {
            let mut x = f.clone();
            for (a, b) in x
                .traces
                .iter_mut()
                .flatten()
                .zip(dir.traces.iter().flatten())
            {
                *a += s * b;
            }
            eval(&x)
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let an: f64 = e
            .adjoint_source
            .traces
            .iter()
            .flatten()
            .zip(dir.traces.iter().flatten())
            .map(|(a, b)| a * b)
            .sum();
        assert!(((fd - an) / fd).abs() < 1e-4, "fd {fd} an {an}");
    }

    #[test]
    fn j1_and_j3_adjoint_sources_match_fd() {
        let ax = axis(300, 0.006);
        let g = gather(ax, &[0.0, 0.1]);
        let f = gather(ax, &[0.12, -0.05]).map(|v| 0.8 * v);
        for cfg in [
            NormConfig::SignSensitive(Some(3.0)),
            NormConfig::Exponential(1.5),
        ] {
            let e = misfit_j1(&f, &g, &cfg, NormDerivative::Differentiate).unwrap();
            fd_check(
                &e,
                &|x| {
                    misfit_j1(x, &g, &cfg, NormDerivative::Differentiate)
                        .unwrap()
                        .value
                },
                &f,
            );
        }
        let e = misfit_j3(&f, &g, Some(3.0), NormDerivative::Differentiate).unwrap();
        fd_check(
            &e,
            &|x| {
                misfit_j3(x, &g, Some(3.0), NormDerivative::Differentiate)
                    .unwrap()
                    .value
            },
            &f,
        );
    }

    #[test]
    fn j3_symmetry_and_zero() {
        let ax = axis(300, 0.006);
        let g = gather(ax, &[0.0]);
        let f = gather(ax, &[0.2]);
        let a = misfit_j3(&f, &g, Some(2.0), NormDerivative::Differentiate)
            .unwrap()
            .value;
        let b = misfit_j3(
            &f.map(|v| -v),
            &g.map(|v| -v),
            Some(2.0),
            NormDerivative::Differentiate,
        )
        .unwrap()
        .value;
        assert!((a - b).abs() < 1e-12 * a);
        assert!(
            misfit_j3(&g, &g, Some(2.0), NormDerivative::Differentiate)
                .unwrap()
                .value
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn j3_ricker_sweep_has_single_minimum_at_zero() {
        let ax = axis(1001, 0.002);
        let g = ricker(10.0, 1.0, ax).unwrap();
        let c = 10.0;
        let vals: Vec<f64> = (0..=100)
            .map(|k| {
                let s = -0.5 + k as f64 * 0.01;
                j3_trace(&ricker(10.0, 1.0 + s, ax).unwrap(), &g, c).unwrap()
            })
            .collect();
        let argmin = (0..vals.len())
            .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
            .unwrap();
        assert_eq!(argmin, 50);
        let local_minima = (1..vals.len() - 1)
            .filter(|&i| vals[i] < vals[i - 1] && vals[i] < vals[i + 1])
            .count();
        assert_eq!(local_minima, 1);
    }

    #[test]
    fn works_in_f32() {
        let ax = TimeAxis::<f32>::new(200, 0.01).unwrap();
        let f = NormalizedSignal::from_density(
            Trace::from_fn(ax, |t| (-(t - 0.8) * (t - 0.8) * 20.0).exp()).values,
            ax,
        )
        .unwrap();
        let g = NormalizedSignal::from_density(
            Trace::from_fn(ax, |t| (-(t - 1.0) * (t - 1.0) * 20.0).exp()).values,
            ax,
        )
        .unwrap();
        let w = w2_squared_1d(&f, &g).unwrap();
        assert!((w - 0.04).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn prop_metric_properties(
            a in prop::collection::vec(0.01f64..1.0, 40),
            b in prop::collection::vec(0.01f64..1.0, 40),
        ) {
            let ax = axis(40, 0.025);
            let f = NormalizedSignal::from_density(a, ax).unwrap();
            let g = NormalizedSignal::from_density(b, ax).unwrap();
            let fg = w2_squared_1d(&f, &g).unwrap();
            let gf = w2_squared_1d(&g, &f).unwrap();
            prop_assert!(fg >= 0.0);
            prop_assert!(w2_squared_1d(&f, &f).unwrap().abs() < 1e-12);
            // time-domain quadrature is only first-order symmetric on coarse grids
            prop_assert!((fg - gf).abs() <= 0.05 * fg.max(gf) + 2.0 * ax.dt * ax.dt);
            let map = optimal_map_1d(&f, &g).unwrap();
            prop_assert!(map.windows(2).all(|w| w[1] >= w[0]));
            let c = cdf(&f).unwrap();
            prop_assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
            for k in 0..=20 {
                let y = k as f64 / 20.0;
                prop_assert!(c.eval(c.quantile(y)) >= y - 1e-12);
            }
        }
    }
}
