use rayon::prelude::*;

use super::{check_increasing, LandscapeSweep};
use crate::error::{Error, Result};
use crate::misfit1d::optimal_map_1d;
use crate::normalize::{NormConfig, NormalizedSignal};
use crate::optimize::{evaluate_misfit, MisfitConfig, MisfitKind};
use crate::wave::{ricker, ShotRecord, TimeAxis, Trace};

/// Samples per discretized Gaussian.
pub const GAUSSIAN_SAMPLES: usize = 4000;
/// Truncation half-width in standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 8.0;

/// Sign-sensitive scale for shift landscapes, in units of `1 / max|f|`.
pub const LANDSCAPE_SIGN_SCALE: f64 = 50.0;

/// The reference signal for shift landscapes: two 10 Hz Ricker wavelets 0.4 s
/// apart on a 4 s record sampled at 62.5 us (64001 samples).
pub fn two_ricker_signal() -> Result<Trace<f64>> {
    let axis = TimeAxis::new(64_001, 6.25e-5)?;
    let a = ricker(10.0, 1.8, axis)?;
    let b = ricker(10.0, 2.2, axis)?;
    Trace::new(
        a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(),
        axis,
    )
}

/// `f(t - s)` on the same axis with zero padding. Fractional sample shifts use
/// linear interpolation. Fails when signal content would leave the window.
pub fn shift_trace(f: &Trace<f64>, s: f64) -> Result<Trace<f64>> {
    if !s.is_finite() {
        return Err(Error::config("shift must be finite"));
    }
    let ax = f.axis;
    let n = ax.nt;
    let k = s / ax.dt;
    let peak = f.max_abs();
    let tol = 1e-6 * peak;
    let lost = f.values.iter().enumerate().any(|(j, v)| {
        let dest = j as f64 + k;
        (dest < -1e-9 || dest > (n - 1) as f64 + 1e-9) && v.abs() > tol
    });
    if lost {
        return Err(Error::config(format!(
            "shift {s} s exceeds the zero padding of the trace"
        )));
    }
    let kr = k.round();
    let integral = (k - kr).abs() < 1e-9;
    let values = (0..n)
        .map(|i| {
            if integral {
                let j = i as i64 - kr as i64;
                if j >= 0 && (j as usize) < n {
                    f.values[j as usize]
                } else {
                    0.0
                }
            } else {
                let x = i as f64 - k;
                let j0 = x.floor();
                let w = x - j0;
                let at = |j: f64| {
                    if j >= 0.0 && j <= (n - 1) as f64 {
                        f.values[j as usize]
                    } else {
                        0.0
                    }
                };
                (1.0 - w) * at(j0) + w * at(j0 + 1.0)
            }
        })
        .collect();
    Trace::new(values, ax)
}

/// Misfit settings used for shift landscapes: the sign-sensitive scale is
/// `LANDSCAPE_SIGN_SCALE / max|f|`.
pub fn landscape_config(kind: MisfitKind, signal: &Trace<f64>) -> Result<MisfitConfig> {
    let peak = signal.max_abs();
    if !(peak > 0.0) {
        return Err(Error::Degenerate(
            "landscape signal is identically zero".into(),
        ));
    }
    let mut cfg = MisfitConfig::new(kind);
    cfg.norm = NormConfig::SignSensitive(Some(LANDSCAPE_SIGN_SCALE / peak));
    Ok(cfg)
}

/// Misfit between `f(t - s)` and `f` for each shift. W2d is rejected since it
/// needs a whole gather.
pub fn landscape_shift(
    signal: &Trace<f64>,
    shifts: &[f64],
    cfg: &MisfitConfig,
) -> Result<LandscapeSweep> {
    if cfg.kind == MisfitKind::W2d {
        return Err(Error::config("shift landscapes support l2, w1d and j3"));
    }
    check_increasing("shift_s", shifts)?;
    let obs = ShotRecord::from_traces(0, vec![signal.clone()])?;
    let values = shifts
        .par_iter()
        .map(|&s| {
            let syn = ShotRecord::from_traces(0, vec![shift_trace(signal, s)?])?;
            Ok(evaluate_misfit(&syn, &obs, cfg)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    LandscapeSweep::new(
        cfg.kind.tag(),
        vec![("shift_s".into(), shifts.to_vec())],
        values,
    )
}

fn gaussian_density(mu: f64, sigma: f64) -> Result<(NormalizedSignal<f64>, f64)> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "Gaussian needs finite mu and sigma > 0, got ({mu}, {sigma})"
        )));
    }
    let start = mu - GAUSSIAN_TRUNCATION * sigma;
    let dt = 2.0 * GAUSSIAN_TRUNCATION * sigma / (GAUSSIAN_SAMPLES - 1) as f64;
    let axis = TimeAxis::new(GAUSSIAN_SAMPLES, dt)?;
    let values = (0..GAUSSIAN_SAMPLES)
        .map(|i| {
            let y = (start + axis.t(i) - mu) / sigma;
            (-0.5 * y * y).exp()
        })
        .collect();
    Ok((NormalizedSignal::from_density(values, axis)?, start))
}

/// `W2^2` between densities sampled on axes starting at `a` and `b`.
pub fn w2_squared_offset(
    f: &NormalizedSignal<f64>,
    a: f64,
    g: &NormalizedSignal<f64>,
    b: f64,
) -> Result<f64> {
    let q = optimal_map_1d(f, g)?;
    let ax = f.axis;
    let mut value = 0.0;
    let mut mass = 0.0;
    for (i, (&fi, qi)) in f.density.iter().zip(q).enumerate() {
        let w = ax.weight(i) * fi;
        let d = ax.t(i) + a - qi - b;
        value += w * d * d;
        mass += w;
    }
    Ok(value / mass)
}

/// `W2^2(N(mu, sigma^2), N(0, 1))` on truncated, renormalized discretizations.
pub fn gaussian_w2(mu: f64, sigma: f64) -> Result<f64> {
    let (f, a) = gaussian_density(mu, sigma)?;
    let (g, b) = gaussian_density(0.0, 1.0)?;
    w2_squared_offset(&f, a, &g, b)
}

pub fn landscape_gaussian(mus: &[f64], sigmas: &[f64]) -> Result<LandscapeSweep> {
    check_increasing("mu", mus)?;
    check_increasing("sigma", sigmas)?;
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("sigma grid must be positive".into()));
    }
    let (g, b) = gaussian_density(0.0, 1.0)?;
    let points: Vec<(f64, f64)> = mus
        .iter()
        .flat_map(|&m| sigmas.iter().map(move |&s| (m, s)))
        .collect();
    let values = points
        .par_iter()
        .map(|&(m, s)| {
            let (f, a) = gaussian_density(m, s)?;
            w2_squared_offset(&f, a, &g, b)
        })
        .collect::<Result<Vec<f64>>>()?;
    LandscapeSweep::new(
        "w2",
        vec![
            ("mu".into(), mus.to_vec()),
            ("sigma".into(), sigmas.to_vec()),
        ],
        values,
    )
}

fn uniform_step(name: &str, ax: &[f64]) -> Result<f64> {
    if ax.len() < 3 {
        return Err(Error::config(format!(
            "axis `{name}` needs at least 3 points for a Hessian"
        )));
    }
    let h = ax[1] - ax[0];
    if ax
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0))
    {
        return Err(Error::config(format!(
            "axis `{name}` must be uniformly spaced"
        )));
    }
    Ok(h)
}

/// Central-difference Hessians of a 2D sweep at all interior grid points,
/// as `((i, j), [[h11, h12], [h12, h22]])`.
pub fn landscape_hessians(sweep: &LandscapeSweep) -> Result<Vec<((usize, usize), [[f64; 2]; 2])>> {
    if sweep.axes.len() != 2 {
        return Err(Error::config("Hessians need a two-parameter sweep"));
    }
    let h1 = uniform_step(&sweep.axes[0].0, &sweep.axes[0].1)?;
    let h2 = uniform_step(&sweep.axes[1].0, &sweep.axes[1].1)?;
    let (n1, n2) = (sweep.axes[0].1.len(), sweep.axes[1].1.len());
    let v = |i: usize, j: usize| sweep.at2(i, j);
    let mut out = Vec::with_capacity((n1 - 2) * (n2 - 2));
    for i in 1..n1 - 1 {
        for j in 1..n2 - 1 {
            let a = (v(i + 1, j) - 2.0 * v(i, j) + v(i - 1, j)) / (h1 * h1);
            let c = (v(i, j + 1) - 2.0 * v(i, j) + v(i, j - 1)) / (h2 * h2);
            let b = (v(i + 1, j + 1) - v(i + 1, j - 1) - v(i - 1, j + 1) + v(i - 1, j - 1))
                / (4.0 * h1 * h2);
            out.push(((i, j), [[a, b], [b, c]]));
        }
    }
    Ok(out)
}

/// Eigenvalues (ascending) of a symmetric 2x2 matrix.
pub fn hessian_eigenvalues(h: [[f64; 2]; 2]) -> (f64, f64) {
    let m = 0.5 * (h[0][0] + h[1][1]);
    let d = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[0][1]).sqrt();
    (m - d, m + d)
}

/// Eigenvalues `(a + 1 -+ sqrt(a^2 - 2a + 4b^2 + 1)) / 2` of the joint
/// translation/dilation Hessian `[[1, b], [b, a]]`, with `a` the second and
/// `b` the first moment of the reference density.
pub fn translation_dilation_eigenvalues(a: f64, b: f64) -> (f64, f64) {
    let r = (a * a - 2.0 * a + 4.0 * b * b + 1.0).max(0.0).sqrt();
    (0.5 * (a + 1.0 - r), 0.5 * (a + 1.0 + r))
}

/// `(E[y^2], E[y])` of the discretized standard Gaussian.
pub fn gaussian_moments() -> Result<(f64, f64)> {
    let (g, b) = gaussian_density(0.0, 1.0)?;
    let ax = g.axis;
    let (mut m1, mut m2, mut mass) = (0.0, 0.0, 0.0);
    for (i, &d) in g.density.iter().enumerate() {
        let w = ax.weight(i) * d;
        let y = b + ax.t(i);
        m1 += w * y;
        m2 += w * y * y;
        mass += w;
    }
    Ok((m2 / mass, m1 / mass))
}
