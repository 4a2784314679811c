use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::misfit1d::{misfit_j1, misfit_j3, misfit_l2, MisfitDiagnostics, MisfitEval};
use crate::monge_ampere::{misfit_j2, J2Config};
use crate::normalize::{NormConfig, NormDerivative};
use crate::wave::{
    adjoint_solve, forward, model_sensitivity, Acquisition, ShotRecord, SimConfig, VelocityModel,
};

/// Which objective compares synthetic and observed gathers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MisfitKind {
    /// Least squares (J0).
    L2,
    /// Trace-by-trace 1D W2 (J1).
    W1d,
    /// Whole-gather 2D W2 through Monge-Ampere (J2).
    W2d,
    /// Two-sided sign-sensitive trace-by-trace W2 (J3).
    J3,
}

impl MisfitKind {
    pub const ALL: [MisfitKind; 4] = [
        MisfitKind::L2,
        MisfitKind::W1d,
        MisfitKind::W2d,
        MisfitKind::J3,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            MisfitKind::L2 => "l2",
            MisfitKind::W1d => "w1d",
            MisfitKind::W2d => "w2d",
            MisfitKind::J3 => "j3",
        }
    }
}

impl fmt::Display for MisfitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MisfitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MisfitKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown misfit `{s}` (expected l2, w1d, w2d or j3)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisfitConfig {
    pub kind: MisfitKind,
    /// Normalization for `W1d` and `W2d`; `J3` always uses the sign-sensitive
    /// map with the scale taken from here when given.
    pub norm: NormConfig<f64>,
    pub deriv: NormDerivative,
    pub j2: J2Config,
    /// Evaluate J1 for a shot whose Monge-Ampere solve fails instead of aborting.
    pub j2_fallback: bool,
}

impl Default for MisfitConfig {
    fn default() -> Self {
        MisfitConfig {
            kind: MisfitKind::L2,
            norm: NormConfig::default(),
            deriv: NormDerivative::default(),
            j2: J2Config::default(),
            j2_fallback: false,
        }
    }
}

impl MisfitConfig {
    pub fn new(kind: MisfitKind) -> Self {
        MisfitConfig {
            kind,
            ..Default::default()
        }
    }
}

/// Per-shot misfit with its adjoint source.
pub fn evaluate_misfit(
    syn: &ShotRecord<f64>,
    obs: &ShotRecord<f64>,
    cfg: &MisfitConfig,
) -> Result<MisfitEval<f64>> {
    match cfg.kind {
        MisfitKind::L2 => misfit_l2(syn, obs),
        MisfitKind::W1d => misfit_j1(syn, obs, &cfg.norm, cfg.deriv),
        MisfitKind::J3 => {
            let c = match cfg.norm {
                NormConfig::SignSensitive(c) => c,
                _ => None,
            };
            misfit_j3(syn, obs, c, cfg.deriv)
        }
        MisfitKind::W2d => {
            let j2 = J2Config {
                norm: cfg.norm,
                deriv: cfg.deriv,
                ..cfg.j2
            };
            match misfit_j2(syn, obs, &j2) {
                Ok((e, report)) => {
                    log::debug!(
                        "shot {}: Monge-Ampere {} Newton iterations, residual {:.2e}, filter fraction {:.3}",
                        syn.shot_id,
                        report.newton_iters,
                        report.residual_norm,
                        report.filter_fraction
                    );
                    Ok(e)
                }
                Err(e @ Error::NonConvergence { .. }) if cfg.j2_fallback => {
                    log::warn!(
                        "shot {}: {e}; falling back to trace-by-trace W2",
                        syn.shot_id
                    );
                    misfit_j1(syn, obs, &cfg.norm, cfg.deriv)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Summed misfit and its gradient with respect to squared slowness.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEval {
    pub misfit: f64,
    /// dJ/dm per grid node, masked.
    pub gradient: Vec<f64>,
    pub diagnostics: MisfitDiagnostics,
    /// Synthetic records, one per shot.
    pub synthetics: Vec<ShotRecord<f64>>,
}

fn shot_gradient(
    model: &VelocityModel<f64>,
    acq: &Acquisition<f64>,
    shot: usize,
    obs: &ShotRecord<f64>,
    cfg: &MisfitConfig,
    sim: &SimConfig,
) -> Result<(MisfitEval<f64>, Vec<f64>, ShotRecord<f64>)> {
    let (syn, u) = forward(model, acq, shot, true, sim)?;
    let u = u.expect("forward field was requested");
    let e = evaluate_misfit(&syn, obs, cfg)?;
    let v = adjoint_solve(model, acq, &e.adjoint_source, sim)?;
    let g = model_sensitivity(model, acq.axis(), &u, &v, sim)?;
    Ok((e, g, syn))
}

/// Adjoint-state gradient summed over shots. Shots run in parallel and are
/// reduced in shot order, so the result does not depend on the thread count.
/// `mask[i] == false` zeroes node `i`.
pub fn model_gradient(
    model: &VelocityModel<f64>,
    acq: &Acquisition<f64>,
    observed: &[ShotRecord<f64>],
    cfg: &MisfitConfig,
    sim: &SimConfig,
    mask: Option<&[bool]>,
) -> Result<GradientEval> {
    if observed.len() != acq.sources.len() {
        return Err(Error::config(format!(
            "{} observed records for {} sources",
            observed.len(),
            acq.sources.len()
        )));
    }
    let n = model.grid.len();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::GridMismatch(format!(
                "mask has {} cells, model has {n}",
                m.len()
            )));
        }
    }
    let per_shot: Vec<Result<(MisfitEval<f64>, Vec<f64>, ShotRecord<f64>)>> = observed
        .par_iter()
        .enumerate()
        .map(|(s, obs)| {
            shot_gradient(model, acq, s, obs, cfg, sim).map_err(|e| Error::Shot {
                shot: s,
                source: Box::new(e),
            })
        })
        .collect();
    let mut misfit = 0.0;
    let mut gradient = vec![0.0; n];
    let mut diagnostics = MisfitDiagnostics::default();
    let mut synthetics = Vec::with_capacity(observed.len());
    for r in per_shot {
        let (e, g, syn) = r?;
        misfit += e.value;
        diagnostics += e.diagnostics;
        for (a, b) in gradient.iter_mut().zip(&g) {
            *a += b;
        }
        synthetics.push(syn);
    }
    if let Some(m) = mask {
        for (g, &keep) in gradient.iter_mut().zip(m) {
            if !keep {
                *g = 0.0;
            }
        }
    }
    Ok(GradientEval {
        misfit,
        gradient,
        diagnostics,
        synthetics,
    })
}

/// Summed misfit only (forward solves, no adjoint).
pub fn total_misfit(
    model: &VelocityModel<f64>,
    acq: &Acquisition<f64>,
    observed: &[ShotRecord<f64>],
    cfg: &MisfitConfig,
    sim: &SimConfig,
) -> Result<f64> {
    let vals: Vec<Result<f64>> = observed
        .par_iter()
        .enumerate()
        .map(|(s, obs)| {
            let (syn, _) = forward(model, acq, s, false, sim)?;
            Ok(evaluate_misfit(&syn, obs, cfg)?.value)
        })
        .collect();
    vals.into_iter().sum()
}

/// Simulated records for every shot, in shot order.
pub fn simulate_all(
    model: &VelocityModel<f64>,
    acq: &Acquisition<f64>,
    sim: &SimConfig,
) -> Result<Vec<ShotRecord<f64>>> {
    (0..acq.sources.len())
        .into_par_iter()
        .map(|s| {
            forward(model, acq, s, false, sim)
                .map(|r| r.0)
                .map_err(|e| Error::Shot {
                    shot: s,
                    source: Box::new(e),
                })
        })
        .collect()
}
