//! Whole-gather misfit `J2 = W2^2(N f, N g)` with the gathers treated as 2D
//! densities over (receiver, time).
//!
//! A gather is transformed pointwise (`p(f)`), resampled bilinearly onto the
//! square Monge-Ampère grid (receiver axis -> `x1`, time axis -> `x2`, each
//! mapped affinely to `[0, 1]`) and rescaled to unit mass there. Values are in
//! unit-box coordinates; `box_scale` records the physical extent of each axis.

use super::{ma_solve, node_weights, w2_frechet_2d, w2_squared_2d, MaConfig, MaProblem};
use crate::error::{Error, Result};
use crate::misfit1d::{MisfitDiagnostics, MisfitEval};
use crate::normalize::{default_sign_scale, NormConfig, NormDerivative};
use crate::wave::ShotRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct J2Config {
    /// Intervals per side of the Monge-Ampère grid.
    pub grid_n: usize,
    pub norm: NormConfig<f64>,
    pub deriv: NormDerivative,
    pub ma: MaConfig,
}

impl Default for J2Config {
    fn default() -> Self {
        J2Config {
            grid_n: 64,
            norm: NormConfig::default(),
            deriv: NormDerivative::default(),
            ma: MaConfig::default(),
        }
    }
}

/// Diagnostics of one J2 evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct J2Report {
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub filter_fraction: f64,
    /// (receiver span in receivers, time span in seconds) mapped to the unit box.
    pub box_scale: (f64, f64),
}

/// Bilinear taps from the `(n+1)^2` square grid into an `nr x nt` gather.
struct Resampler {
    taps: Vec<[(usize, f64); 4]>,
}

impl Resampler {
    fn new(nr: usize, nt: usize, n: usize) -> Self {
        let pos = |i: usize, len: usize| -> (usize, f64) {
            let s = i as f64 / n as f64 * (len - 1) as f64;
            let a = (s.floor() as usize).min(len - 2);
            (a, s - a as f64)
        };
        let mut taps = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            let (r, tr) = pos(i, nr);
            for j in 0..=n {
                let (t, tt) = pos(j, nt);
                let at = |a: usize, b: usize| a * nt + b;
                taps.push([
                    (at(r, t), (1.0 - tr) * (1.0 - tt)),
                    (at(r + 1, t), tr * (1.0 - tt)),
                    (at(r, t + 1), (1.0 - tr) * tt),
                    (at(r + 1, t + 1), tr * tt),
                ]);
            }
        }
        Resampler { taps }
    }

    fn apply(&self, flat: &[f64]) -> Vec<f64> {
        self.taps
            .iter()
            .map(|t| t.iter().map(|&(k, w)| w * flat[k]).sum())
            .collect()
    }

    fn apply_transpose(&self, v: &[f64], len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (t, &x) in self.taps.iter().zip(v) {
            for &(k, w) in t {
                out[k] += w * x;
            }
        }
        out
    }
}

/// Bilinear resampling of a receiver-by-time gather onto the `(n+1)^2` grid.
pub fn resample_to_square(rec: &ShotRecord<f64>, n: usize) -> Result<Vec<f64>> {
    if rec.n_receivers() < 2 || rec.axis.nt < 2 {
        return Err(Error::config(
            "J2 needs at least two receivers and two time samples",
        ));
    }
    let flat: Vec<f64> = rec.traces.concat();
    Ok(Resampler::new(rec.n_receivers(), rec.axis.nt, n).apply(&flat))
}

/// Pointwise transform and its derivative for one gather.
fn transform(values: &[f64], norm: &NormConfig<f64>, c: f64) -> (Vec<f64>, Vec<f64>) {
    match norm {
        NormConfig::Linear => (
            values.iter().map(|v| v + c).collect(),
            vec![1.0; values.len()],
        ),
        NormConfig::SignSensitive(_) => values
            .iter()
            .map(|&v| {
                if v >= 0.0 {
                    (v + 1.0 / c, 1.0)
                } else {
                    ((c * v).exp() / c, (c * v).exp())
                }
            })
            .unzip(),
        NormConfig::Exponential(_) => values
            .iter()
            .map(|&v| {
                let e = (c * v).exp();
                (e, c * e)
            })
            .unzip(),
    }
}

pub fn misfit_j2(
    f: &ShotRecord<f64>,
    g: &ShotRecord<f64>,
    cfg: &J2Config,
) -> Result<(MisfitEval<f64>, J2Report)> {
    f.check_geometry(g)?;
    let (nr, nt) = (f.n_receivers(), f.axis.nt);
    if nr < 2 {
        return Err(Error::config("J2 needs at least two receivers"));
    }
    let n = cfg.grid_n;
    let ff: Vec<f64> = f.traces.concat();
    let gf: Vec<f64> = g.traces.concat();
    let c = match cfg.norm {
        NormConfig::Linear => {
            let lo = ff.iter().chain(&gf).copied().fold(f64::INFINITY, f64::min);
            (-lo).max(0.0)
        }
        NormConfig::SignSensitive(c) => {
            c.unwrap_or_else(|| default_sign_scale(f.max_abs().max(g.max_abs())))
        }
        NormConfig::Exponential(c) => {
            if c * f.max_abs().max(g.max_abs()) > 700.0 {
                return Err(Error::config(
                    "exponential normalization overflows on this gather",
                ));
            }
            c
        }
    };
    let (pf, dpf) = transform(&ff, &cfg.norm, c);
    let (pg, _) = transform(&gf, &cfg.norm, c);
    let rs = Resampler::new(nr, nt, n);
    let fs = rs.apply(&pf);
    let gs = rs.apply(&pg);
    let w = node_weights(n);
    let b: f64 = fs.iter().zip(&w).map(|(a, b)| a * b).sum();
    if !(b > 0.0) {
        return Err(Error::Degenerate(format!(
            "shot {}: gather has zero mass after normalization",
            f.shot_id
        )));
    }
    let prob = MaProblem::new(n, &fs, &gs, cfg.ma)?;
    let sol = ma_solve(&prob)?;
    let value = w2_squared_2d(&sol, &prob);
    let gd = w2_frechet_2d(&sol, &prob)?;
    // through f~ = R p / b
    let s: f64 = match cfg.deriv {
        NormDerivative::Differentiate => prob.f.iter().zip(&gd).map(|(a, b)| a * b).sum(),
        NormDerivative::Frozen => 0.0,
    };
    let on_grid: Vec<f64> = gd
        .iter()
        .zip(&w)
        .map(|(&v, &wk)| (v - wk * s) / b)
        .collect();
    let back = rs.apply_transpose(&on_grid, nr * nt);
    let adj: Vec<f64> = back.iter().zip(&dpf).map(|(a, d)| a * d).collect();
    let mut adjoint_source = ShotRecord::zeros(f.shot_id, nr, f.axis);
    for (r, tr) in adjoint_source.traces.iter_mut().enumerate() {
        tr.copy_from_slice(&adj[r * nt..(r + 1) * nt]);
    }
    let report = J2Report {
        newton_iters: sol.newton_iters,
        residual_norm: sol.residual_norm,
        filter_fraction: sol.filter_fraction,
        box_scale: ((nr - 1) as f64, f.axis.duration()),
    };
    Ok((
        MisfitEval {
            value,
            adjoint_source,
            diagnostics: MisfitDiagnostics::default(),
        },
        report,
    ))
}
