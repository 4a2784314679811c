use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use otfwi::analysis::{
    correlated_noise_tuned, landscape_config, landscape_gaussian, landscape_shift, noise_scaling,
    strict_interior_minima, sweeps_csv, thickness_study, two_ricker_signal, write_csv,
};
use otfwi::io::{read_record, sidecar_path as sidecar, write_grid, write_model, write_record};
use otfwi::monge_ampere::{ma_solve, misfit_j2, w2_squared_2d, MaConfig, MaProblem};
use otfwi::normalize::NormConfig;
use otfwi::optimize::{invert, simulate_all, write_convergence_csv, MisfitConfig, MisfitKind};
use otfwi::scenarios::{
    read_scenario, scenario_bp_like, scenario_thickness, scenario_three_layer, serialize_scenario,
    Scenario,
};
use otfwi::wave::{ShotRecord, TimeAxis, Trace};
use otfwi::{Error, Result};

use crate::manifest::{config_hash, RunManifest};
use crate::{Cli, Command, LandscapeKind, MaCase};

fn preset(name: &str, full_scale: bool) -> Option<Scenario> {
    match name.replace('-', "_").as_str() {
        "three_layer" => Some(scenario_three_layer(full_scale)),
        "thickness" => Some(scenario_thickness(full_scale)),
        "bp_like" => Some(scenario_bp_like(full_scale)),
        _ => None,
    }
}

/// The scenario named by `--scenario`, falling back to the command's default
/// preset. `None` for commands that take no scenario.
pub fn load_scenario(cli: &Cli) -> Result<Option<Scenario>> {
    let default = match cli.command {
        Command::Simulate { .. } | Command::Invert { .. } => "three_layer",
        Command::ThicknessStudy { .. } => "thickness",
        _ => {
            if cli.scenario.is_some() {
                log::warn!("--scenario is ignored by {}", cli.command.name());
            }
            return Ok(None);
        }
    };
    let Some(arg) = &cli.scenario else {
        return Ok(preset(default, cli.full_scale));
    };
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = preset(arg, cli.full_scale) {
            return Ok(Some(s));
        }
    } else if cli.full_scale {
        log::warn!("--full-scale only applies to preset scenarios");
    }
    read_scenario(path).map(Some)
}

pub fn output_dir(cli: &Cli, scenario: Option<&Scenario>) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    match scenario {
        Some(s) => s.output.dir.clone(),
        None => PathBuf::from("out").join(cli.command.name()),
    }
}

fn parse_misfit(tag: &str) -> Result<MisfitKind> {
    tag.parse()
}

fn canonical_args(cli: &Cli) -> String {
    format!(
        "{:?}\nmisfit = {:?}\nseed = {}\nfull_scale = {}\nsnapshot_every = {:?}\ndump_ma = {}\n",
        cli.command, cli.misfit, cli.seed, cli.full_scale, cli.snapshot_every, cli.dump_ma
    )
}

pub fn execute(
    cli: &Cli,
    scenario: Option<Scenario>,
    out: &Path,
    man: &mut RunManifest,
) -> Result<()> {
    let mut scenario = scenario;
    if let (Some(s), Some(tag), Command::Invert { .. }) =
        (scenario.as_mut(), &cli.misfit, &cli.command)
    {
        s.inversion.misfit = parse_misfit(tag)?;
    }
    man.scenario = scenario.as_ref().map(|s| match &cli.scenario {
        Some(arg) if Path::new(arg).exists() => arg.clone(),
        _ => format!("preset:{}", s.name()),
    });
    let text = scenario
        .as_ref()
        .map(serialize_scenario)
        .unwrap_or_default();
    man.config_hash = config_hash(&(text + &canonical_args(cli)));
    std::fs::create_dir_all(out)?;

    match &cli.command {
        Command::Simulate { noise_snr } => {
            simulate(cli, &scenario.expect("scenario"), *noise_snr, out, man)
        }
        Command::Invert {
            observed,
            max_iters,
        } => run_invert(
            cli,
            &scenario.expect("scenario"),
            observed.as_deref(),
            *max_iters,
            out,
            man,
        ),
        Command::Landscape { kind, points } => landscape(cli, *kind, *points, out, man),
        Command::NoiseStudy {
            pieces,
            trials,
            amplitude,
        } => noise_study(cli, pieces, *trials, *amplitude, out, man),
        Command::MaSolve { n, case, shift } => run_ma(cli, *n, *case, *shift, out, man),
        Command::ThicknessStudy { thicknesses } => {
            thickness(&scenario.expect("scenario"), thicknesses, out, man)
        }
    }
}

fn shot_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("shot_{k:03}.bin"))
}

fn save_model(path: PathBuf, model: &otfwi::Model64, man: &mut RunManifest) -> Result<()> {
    write_model(&path, model)?;
    man.outputs.push(sidecar(&path));
    man.outputs.push(path);
    Ok(())
}

fn save_text(path: PathBuf, text: &str, man: &mut RunManifest) -> Result<()> {
    write_csv(&path, text)?;
    man.outputs.push(path);
    Ok(())
}

fn simulate(
    cli: &Cli,
    s: &Scenario,
    noise_snr: Option<f64>,
    out: &Path,
    man: &mut RunManifest,
) -> Result<()> {
    let built = s.build()?;
    let mut records = simulate_all(&built.truth, &built.acquisition, &built.inversion.sim)?;
    if let Some(db) = noise_snr {
        let noisy = correlated_noise_tuned(&records, db, cli.seed)?;
        man.note("noise_amplitude", format!("{:e}", noisy.amplitude));
        man.note("snr_db", format!("{:.3}", noisy.snr_db));
        records = noisy.records;
    }
    for rec in &records {
        let path = shot_path(out, rec.shot_id);
        write_record(&path, rec)?;
        man.outputs.push(path);
    }
    save_model(out.join("true_model.bin"), &built.truth, man)?;
    save_text(out.join("scenario.txt"), &serialize_scenario(s), man)?;
    let axis = built.acquisition.wavelet.axis;
    man.note("shots", records.len());
    man.note("receivers", built.acquisition.receivers.len());
    man.note("nt", axis.nt);
    man.note("dt", axis.dt);
    Ok(())
}

fn read_observed(
    dir: &Path,
    n_shots: usize,
    n_receivers: usize,
    axis: TimeAxis<f64>,
) -> Result<Vec<ShotRecord<f64>>> {
    (0..n_shots)
        .map(|k| {
            let path = shot_path(dir, k);
            let rec = read_record(&path, k, axis.dt)?;
            if rec.n_receivers() != n_receivers || rec.axis.nt != axis.nt {
                return Err(Error::GridMismatch(format!(
                    "shot {k} ({}) has {} receivers x {} samples, the scenario expects {} x {}",
                    path.display(),
                    rec.n_receivers(),
                    rec.axis.nt,
                    n_receivers,
                    axis.nt
                )));
            }
            Ok(rec)
        })
        .collect()
}

fn run_invert(
    cli: &Cli,
    s: &Scenario,
    observed: Option<&Path>,
    max_iters: Option<usize>,
    out: &Path,
    man: &mut RunManifest,
) -> Result<()> {
    let built = s.build()?;
    let acq = &built.acquisition;
    let mut cfg = built.inversion.clone();
    if let Some(k) = max_iters {
        cfg.max_iters = k;
    }
    let obs = match observed {
        Some(dir) => {
            man.note("observed", dir.display());
            read_observed(
                dir,
                acq.sources.len(),
                acq.receivers.len(),
                acq.wavelet.axis,
            )?
        }
        None => {
            man.note("observed", "synthetic");
            simulate_all(&built.truth, acq, &cfg.sim)?
        }
    };
    let every = cli.snapshot_every.unwrap_or(s.output.snapshot_every);
    let mut snapshots = Vec::new();
    let state = invert(&built.initial, acq, &obs, &cfg, Some(&built.truth), |st| {
        if every > 0 && st.iteration > 0 && st.iteration % every == 0 {
            let path = out.join(format!("model_iter_{:04}.bin", st.iteration));
            write_model(&path, &st.model)?;
            snapshots.push(path);
        }
        Ok(())
    })?;
    for p in snapshots {
        man.outputs.push(sidecar(&p));
        man.outputs.push(p);
    }
    let tag = cfg.misfit.kind.tag();
    let conv = out.join(format!("convergence_{tag}.csv"));
    write_convergence_csv(&conv, &state)?;
    man.outputs.push(conv);
    save_model(
        out.join(format!("model_final_{tag}.bin")),
        &state.model,
        man,
    )?;

    man.note("misfit", tag);
    man.note("iterations", state.iteration);
    man.note("stop_reason", state.status.map_or("none", |r| r.as_str()));
    if let (Some(first), Some(last)) = (state.misfit_history.first(), state.misfit_history.last()) {
        man.note("misfit_initial", format!("{first:e}"));
        man.note("misfit_final", format!("{last:e}"));
    }
    if let Some(e) = state.model_error_history.last() {
        man.note("model_error_final", format!("{e:e}"));
    }

    if cfg.misfit.kind == MisfitKind::W2d {
        let syn = simulate_all(&state.model, acq, &cfg.sim)?;
        let mut csv = String::from("shot,newton_iters,residual_norm,filter_fraction,misfit\n");
        for (f, g) in syn.iter().zip(&obs) {
            let (eval, rep) = misfit_j2(f, g, &cfg.misfit.j2).map_err(|e| Error::Shot {
                shot: f.shot_id,
                source: Box::new(e),
            })?;
            man.note(
                &format!("ma_shot_{:03}", f.shot_id),
                format!(
                    "newton_iters={} residual_norm={:e} filter_fraction={:.4}",
                    rep.newton_iters, rep.residual_norm, rep.filter_fraction
                ),
            );
            let _ = writeln!(
                csv,
                "{},{},{:e},{},{:e}",
                f.shot_id, rep.newton_iters, rep.residual_norm, rep.filter_fraction, eval.value
            );
        }
        if cli.dump_ma {
            save_text(out.join("ma_diagnostics.csv"), &csv, man)?;
        }
    }
    Ok(())
}

fn landscape(
    cli: &Cli,
    kind: LandscapeKind,
    points: Option<usize>,
    out: &Path,
    man: &mut RunManifest,
) -> Result<()> {
    let grid = |lo: f64, hi: f64, n: usize| -> Result<Vec<f64>> {
        if n < 3 {
            return Err(Error::config("landscape needs at least 3 points per axis"));
        }
        Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect())
    };
    match kind {
        LandscapeKind::Shift => {
            let kinds = match cli.misfit.as_deref().unwrap_or("both") {
                "both" => vec![MisfitKind::L2, MisfitKind::J3],
                tag => vec![parse_misfit(tag)?],
            };
            let signal = two_ricker_signal()?;
            let shifts = grid(-0.6, 0.6, points.unwrap_or(241))?;
            let mut sweeps = Vec::new();
            for k in kinds {
                let cfg = match k {
                    MisfitKind::L2 => MisfitConfig::new(k),
                    _ => landscape_config(k, &signal)?,
                };
                let sweep = landscape_shift(&signal, &shifts, &cfg)?;
                man.note(
                    &format!("strict_minima_{}", k.tag()),
                    strict_interior_minima(&sweep.values).len(),
                );
                sweeps.push(sweep);
            }
            save_text(out.join("landscape_shift.csv"), &sweeps_csv(&sweeps)?, man)
        }
        LandscapeKind::Gaussian => {
            if let Some(tag) = cli.misfit.as_deref() {
                if tag != "w1d" && tag != "j3" {
                    return Err(Error::config(format!(
                        "the Gaussian landscape is a W2 sweep; --misfit {tag} is not supported"
                    )));
                }
            }
            let n = points.unwrap_or(21);
            let sweep = landscape_gaussian(&grid(-3.0, 3.0, n)?, &grid(0.2, 3.0, n)?)?;
            save_text(out.join("landscape_gaussian.csv"), &sweep.to_csv(), man)
        }
    }
}

fn noise_study(
    cli: &Cli,
    pieces: &[usize],
    trials: usize,
    amplitude: f64,
    out: &Path,
    man: &mut RunManifest,
) -> Result<()> {
    let nt = 1600;
    let axis = TimeAxis::new(nt, 1.0 / (nt - 1) as f64)?;
    let values = (0..nt)
        .map(|i| {
            let t = axis.t(i);
            1.0 + (-((t - 0.5) / 0.1).powi(2) / 2.0).exp()
        })
        .collect();
    let signal = Trace::new(values, axis)?;
    let study = noise_scaling(
        &signal,
        pieces,
        trials,
        amplitude,
        NormConfig::Linear,
        cli.seed,
    )?;
    let slope = |s: Option<f64>| s.map_or("nan".into(), |v| format!("{v:.4}"));
    man.note("w2_slope", slope(study.w2_slope));
    man.note("l2_slope", slope(study.l2_slope));
    save_text(out.join("noise_study.csv"), &study.to_csv(), man)
}

fn run_ma(
    cli: &Cli,
    n: usize,
    case: MaCase,
    shift: f64,
    out: &Path,
    man: &mut RunManifest,
) -> Result<()> {
    let cfg = MaConfig::default();
    let bump = |x: f64, y: f64, cx: f64| {
        let r2 = (x - cx).powi(2) + (y - 0.5).powi(2);
        0.1 + (-r2 / (2.0 * 0.12 * 0.12)).exp()
    };
    let prob = match case {
        MaCase::Uniform => MaProblem::from_fn(n, |_, _| 1.0, |_, _| 1.0, cfg)?,
        MaCase::Translation => {
            if !(shift.abs() < 0.25) {
                return Err(Error::config(format!(
                    "translation {shift} must stay below 0.25 in magnitude"
                )));
            }
            MaProblem::from_fn(
                n,
                |x, y| bump(x, y, 0.5),
                move |x, y| bump(x, y, 0.5 + shift),
                cfg,
            )?
        }
    };
    let sol = ma_solve(&prob)?;
    let w2 = w2_squared_2d(&sol, &prob);
    man.note("w2_squared", format!("{w2:e}"));
    man.note("newton_iters", sol.newton_iters);
    man.note("residual_norm", format!("{:e}", sol.residual_norm));
    let mut csv = String::from("n,w2_squared,newton_iters,residual_norm,filter_fraction\n");
    let _ = writeln!(
        csv,
        "{n},{w2:e},{},{:e},{}",
        sol.newton_iters, sol.residual_norm, sol.filter_fraction
    );
    save_text(out.join("ma.csv"), &csv, man)?;
    if cli.dump_ma {
        let side = n + 1;
        let dump = |name: &str, v: &[f64], man: &mut RunManifest| -> Result<()> {
            let path = out.join(name);
            write_grid(&path, side, side, v)?;
            man.outputs.push(path);
            Ok(())
        };
        dump("ma_potential.bin", &sol.u, man)?;
        let (m1, m2): (Vec<f64>, Vec<f64>) = sol.map.iter().copied().unzip();
        dump("ma_map_x1.bin", &m1, man)?;
        dump("ma_map_x2.bin", &m2, man)?;
        let mut hist = String::from("newton_step,residual_max\n");
        for (k, r) in sol.history.iter().enumerate() {
            let _ = writeln!(hist, "{k},{r:e}");
        }
        save_text(out.join("ma_history.csv"), &hist, man)?;
    }
    Ok(())
}

fn thickness(s: &Scenario, thicknesses: &[f64], out: &Path, man: &mut RunManifest) -> Result<()> {
    let built = s.build()?;
    let study = thickness_study(s, thicknesses, &built.inversion.sim)?;
    save_text(out.join("thickness.csv"), &study.to_csv(), man)?;
    let mid = study.reference.len() / 2;
    let path = out.join(format!("reference_shot_{mid:03}.bin"));
    write_record(&path, &study.reference[mid])?;
    man.outputs.push(path);
    for (d, recs) in thicknesses.iter().zip(&study.records) {
        let path = out.join(format!("thickness_{d}km_shot_{mid:03}.bin"));
        write_record(&path, &recs[mid])?;
        man.outputs.push(path);
    }
    if let (Some(first), Some(last)) = (study.linf.first(), study.linf.last()) {
        man.note("residual_linf_thinnest", format!("{first:e}"));
        man.note("residual_linf_thickest", format!("{last:e}"));
    }
    Ok(())
}
