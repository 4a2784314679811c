//! Adjoint-state inversion: model gradients over shots and the L-BFGS driver.
//! The optimization variable is squared slowness `m = 1/c^2`.

mod gradient;
pub mod lbfgs;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub use gradient::{
    evaluate_misfit, model_gradient, simulate_all, total_misfit, GradientEval, MisfitConfig,
    MisfitKind,
};
pub use lbfgs::{lbfgs_minimize, IterInfo, LbfgsOptions, LbfgsResult, StopReason};

use crate::error::{Error, Result};
use crate::wave::{Acquisition, ShotRecord, SimConfig, VelocityModel};

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub misfit: MisfitConfig,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    /// Sufficient-decrease and curvature constants of the line search.
    pub c1: f64,
    pub c2: f64,
    pub max_evals_per_search: usize,
    /// `false` freezes the cell.
    pub update_mask: Option<Vec<bool>>,
    /// Velocity bounds in km/s.
    pub c_min: f64,
    pub c_max: f64,
    /// Relative projected-gradient tolerance.
    pub grad_tol: f64,
    /// Absolute misfit tolerance.
    pub misfit_tol: f64,
    /// Cells within this many grid steps of a source are frozen.
    pub source_mask_radius: usize,
    /// Largest velocity change of the first trial step, km/s.
    pub first_step_dc: f64,
    pub sim: SimConfig,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            misfit: MisfitConfig::default(),
            max_iters: 150,
            lbfgs_memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_evals_per_search: 20,
            update_mask: None,
            c_min: 1.0,
            c_max: 6.0,
            grad_tol: 1e-10,
            misfit_tol: 0.0,
            source_mask_radius: 2,
            first_step_dc: 0.05,
            sim: SimConfig::default(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lbfgs_memory == 0 {
            return Err(Error::config("lbfgs_memory must be at least 1"));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::config(format!(
                "velocity bounds [{}, {}] are invalid",
                self.c_min, self.c_max
            )));
        }
        if !(self.first_step_dc > 0.0) {
            return Err(Error::config("first_step_dc must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionState {
    pub model: VelocityModel<f64>,
    pub iteration: usize,
    pub misfit_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub step_history: Vec<f64>,
    /// Empty when no true model is given.
    pub model_error_history: Vec<f64>,
    /// Wall-clock seconds since the start, per iterate.
    pub seconds: Vec<f64>,
    pub status: Option<StopReason>,
}

/// Frobenius norm of the velocity difference, optionally divided by `|truth|`.
pub fn model_error(
    current: &VelocityModel<f64>,
    truth: &VelocityModel<f64>,
    relative: bool,
) -> Result<f64> {
    if !current.grid.same_shape(&truth.grid) {
        return Err(Error::GridMismatch("models differ in grid shape".into()));
    }
    let d = current
        .c
        .iter()
        .zip(&truth.c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if relative {
        Ok(d / truth.c.iter().map(|v| v * v).sum::<f64>().sqrt())
    } else {
        Ok(d)
    }
}

/// Update mask combining the user mask with the source neighbourhoods.
pub fn effective_mask(
    model: &VelocityModel<f64>,
    acq: &Acquisition<f64>,
    cfg: &InversionConfig,
) -> Result<Vec<bool>> {
    let g = model.grid;
    let mut mask = match &cfg.update_mask {
        Some(m) if m.len() != g.len() => {
            return Err(Error::GridMismatch(format!(
                "update mask has {} cells, model has {}",
                m.len(),
                g.len()
            )))
        }
        Some(m) => m.clone(),
        None => vec![true; g.len()],
    };
    let r = cfg.source_mask_radius as isize;
    for &p in &acq.sources {
        let (sz, sx) = g
            .snap(p)
            .ok_or_else(|| Error::config("source outside grid"))?;
        for dz in -r..=r {
            for dx in -r..=r {
                let (iz, ix) = (sz as isize + dz, sx as isize + dx);
                if iz >= 0 && ix >= 0 && (iz as usize) < g.nz && (ix as usize) < g.nx {
                    mask[g.idx(iz as usize, ix as usize)] = false;
                }
            }
        }
    }
    Ok(mask)
}

/// Runs L-BFGS on squared slowness. `observer` sees the state after the
/// starting point and after every accepted iterate.
pub fn invert(
    initial: &VelocityModel<f64>,
    acq: &Acquisition<f64>,
    observed: &[ShotRecord<f64>],
    cfg: &InversionConfig,
    truth: Option<&VelocityModel<f64>>,
    mut observer: impl FnMut(&InversionState) -> Result<()>,
) -> Result<InversionState> {
    cfg.validate()?;
    acq.validate(&initial.grid)?;
    if let Some(t) = truth {
        if !t.grid.same_shape(&initial.grid) {
            return Err(Error::GridMismatch(
                "true model grid differs from the initial model".into(),
            ));
        }
    }
    let grid = initial.grid;
    let mask = effective_mask(initial, acq, cfg)?;
    let x0 = initial.slowness_squared();
    let lower = vec![1.0 / (cfg.c_max * cfg.c_max); x0.len()];
    let upper = vec![1.0 / (cfg.c_min * cfg.c_min); x0.len()];
    // frozen cells keep their value even when it lies outside the bounds
    let lower: Vec<f64> = lower
        .iter()
        .zip(&x0)
        .zip(&mask)
        .map(|((l, x), &k)| if k { *l } else { *x })
        .collect();
    let upper: Vec<f64> = upper
        .iter()
        .zip(&x0)
        .zip(&mask)
        .map(|((u, x), &k)| if k { *u } else { *x })
        .collect();

    let objective = |m: &[f64]| -> Result<(f64, Vec<f64>)> {
        let model = VelocityModel::from_slowness_squared(grid, m)?;
        let e = model_gradient(&model, acq, observed, &cfg.misfit, &cfg.sim, Some(&mask))?;
        if e.diagnostics.degenerate_traces > 0 {
            log::debug!(
                "{} degenerate traces skipped",
                e.diagnostics.degenerate_traces
            );
        }
        Ok((e.misfit, e.gradient))
    };
    let first = objective(&x0)?;
    let c0 = &initial.c;
    let scale = first
        .1
        .iter()
        .zip(c0)
        .fold(0.0f64, |a, (g, c)| a.max(0.5 * c * c * c * g.abs()));
    let first_step = if scale > 0.0 {
        Some(cfg.first_step_dc / scale)
    } else {
        None
    };
    let mut cached = Some((x0.clone(), first));
    let f = |m: &[f64]| -> Result<(f64, Vec<f64>)> {
        if let Some((x, r)) = cached.take() {
            if x == m {
                return Ok(r);
            }
        }
        objective(m)
    };

    let started = Instant::now();
    let mut state = InversionState {
        model: initial.clone(),
        iteration: 0,
        misfit_history: vec![],
        grad_norm_history: vec![],
        step_history: vec![],
        model_error_history: vec![],
        seconds: vec![],
        status: None,
    };
    let opts = LbfgsOptions {
        memory: cfg.lbfgs_memory,
        max_iters: cfg.max_iters,
        c1: cfg.c1,
        c2: cfg.c2,
        max_evals_per_search: cfg.max_evals_per_search,
        grad_tol: cfg.grad_tol,
        value_tol: cfg.misfit_tol,
        first_step,
    };
    let result = lbfgs_minimize(&x0, &lower, &upper, Some(&mask), &opts, f, |info, m| {
        state.model = VelocityModel::from_slowness_squared(grid, m)?;
        state.iteration = info.iter;
        state.misfit_history.push(info.value);
        state.grad_norm_history.push(info.grad_norm);
        state.step_history.push(info.step_len);
        if let Some(t) = truth {
            state
                .model_error_history
                .push(model_error(&state.model, t, true)?);
        }
        state.seconds.push(started.elapsed().as_secs_f64());
        observer(&state)
    })?;
    state.status = Some(result.reason);
    log::info!(
        "inversion stopped after {} iterations: {}",
        state.iteration,
        result.reason.as_str()
    );
    Ok(state)
}

/// Convergence table: `iter,misfit,grad_norm,step_len,model_error,seconds`.
pub fn convergence_csv(state: &InversionState) -> String {
    let mut s = String::from("iter,misfit,grad_norm,step_len,model_error,seconds\n");
    for i in 0..state.misfit_history.len() {
        let err = state
            .model_error_history
            .get(i)
            .map(|v| format!("{v:.10e}"))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{i},{:.10e},{:.10e},{:.10e},{err},{:.3}",
            state.misfit_history[i],
            state.grad_norm_history[i],
            state.step_history[i],
            state.seconds[i]
        );
    }
    s
}

pub fn write_convergence_csv(path: &Path, state: &InversionState) -> Result<()> {
    std::fs::write(path, convergence_csv(state))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{ricker, Grid2D};

    fn small_setup(c: f64) -> (VelocityModel<f64>, Acquisition<f64>) {
        let grid = Grid2D::new(16, 16, 20.0, 20.0).unwrap();
        let model = VelocityModel::homogeneous(grid, c).unwrap();
        let axis = crate::wave::TimeAxis::new(150, 0.002).unwrap();
        let acq = Acquisition {
            sources: vec![(60.0, 150.0)],
            receivers: (1..15).map(|i| (40.0, 20.0 * i as f64)).collect(),
            wavelet: ricker(15.0, 0.08, axis).unwrap(),
        };
        (model, acq)
    }

    #[test]
    fn model_error_examples() {
        let grid = Grid2D::new(3, 4, 10.0, 10.0).unwrap();
        let t = VelocityModel::new(grid, (0..12).map(|i| 2.0 + 0.1 * i as f64).collect()).unwrap();
        assert_eq!(model_error(&t, &t, false).unwrap(), 0.0);
        let shifted = VelocityModel::new(grid, t.c.iter().map(|v| v + 1.0).collect()).unwrap();
        assert!((model_error(&shifted, &t, false).unwrap() - 12f64.sqrt()).abs() < 1e-12);
        // transposing both grids keeps the norm
        let tr = |m: &VelocityModel<f64>| {
            let g = Grid2D::new(4, 3, 10.0, 10.0).unwrap();
            VelocityModel::new(g, (0..12).map(|k| m.c[(k % 3) * 4 + k / 3]).collect()).unwrap()
        };
        let a = model_error(&shifted, &t, true).unwrap();
        let b = model_error(&tr(&shifted), &tr(&t), true).unwrap();
        assert!((a - b).abs() < 1e-15);
        let other =
            VelocityModel::homogeneous(Grid2D::new(4, 3, 10.0, 10.0).unwrap(), 2.0).unwrap();
        assert!(model_error(&other, &t, false).is_err());
    }

    #[test]
    fn true_model_is_a_fixed_point() {
        let (model, acq) = small_setup(2.0);
        let sim = SimConfig::default();
        let obs = simulate_all(&model, &acq, &sim).unwrap();
        let cfg = InversionConfig {
            max_iters: 5,
            ..Default::default()
        };
        let st = invert(&model, &acq, &obs, &cfg, Some(&model), |_| Ok(())).unwrap();
        assert_eq!(st.iteration, 0);
        assert_eq!(st.misfit_history, vec![0.0]);
        assert_eq!(st.status, Some(StopReason::ValueTolerance));
    }

    #[test]
    fn masked_cells_never_move_and_bounds_hold() {
        let (truth, acq) = small_setup(2.0);
        let mut init = truth.clone();
        init.c.iter_mut().for_each(|v| *v = 1.9);
        let sim = SimConfig::default();
        let obs = simulate_all(&truth, &acq, &sim).unwrap();
        let mut user = vec![true; truth.grid.len()];
        for ix in 0..16 {
            user[truth.grid.idx(0, ix)] = false;
            user[truth.grid.idx(1, ix)] = false;
        }
        let cfg = InversionConfig {
            max_iters: 4,
            update_mask: Some(user),
            c_min: 1.85,
            c_max: 2.05,
            ..Default::default()
        };
        let mask = effective_mask(&init, &acq, &cfg).unwrap();
        let mut checked = 0;
        let st = invert(&init, &acq, &obs, &cfg, Some(&truth), |s| {
            for (i, (&c, &keep)) in s.model.c.iter().zip(&mask).enumerate() {
                if !keep {
                    assert!((c - init.c[i]).abs() < 1e-12);
                }
                assert!(c >= 1.85 - 1e-12 && c <= 2.05 + 1e-12);
            }
            checked += 1;
            Ok(())
        })
        .unwrap();
        assert!(checked >= 2);
        assert!(st.misfit_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(st.misfit_history.len(), st.model_error_history.len());
        let csv = convergence_csv(&st);
        assert!(csv.starts_with("iter,misfit,grad_norm,step_len,model_error,seconds\n"));
        assert_eq!(csv.lines().count(), st.misfit_history.len() + 1);
    }

    #[test]
    fn masked_gradient_entries_are_zero() {
        let (truth, acq) = small_setup(2.0);
        let mut init = truth.clone();
        init.c[truth.grid.idx(8, 8)] = 2.2;
        let sim = SimConfig::default();
        let obs = simulate_all(&truth, &acq, &sim).unwrap();
        let cfg = InversionConfig::default();
        let mask = effective_mask(&init, &acq, &cfg).unwrap();
        let e = model_gradient(
            &init,
            &acq,
            &obs,
            &MisfitConfig::default(),
            &sim,
            Some(&mask),
        )
        .unwrap();
        assert!(e.gradient.iter().zip(&mask).all(|(g, &k)| k || *g == 0.0));
        assert!(e.gradient.iter().any(|g| *g != 0.0));
        assert_eq!(mask.iter().filter(|k| !**k).count(), 25);
    }

    #[test]
    fn misfit_tags_round_trip() {
        for k in MisfitKind::ALL {
            assert_eq!(k.tag().parse::<MisfitKind>().unwrap(), k);
        }
        assert!("l1".parse::<MisfitKind>().is_err());
    }
}
