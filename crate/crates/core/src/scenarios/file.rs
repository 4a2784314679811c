//! Scenario files: `key = value` lines grouped under `[model]`,
//! `[acquisition]`, `[inversion]` and `[output]`. `#` starts a comment.
//! Lists are comma separated, optional values accept `none`. Missing keys
//! keep their defaults; unknown keys and sections are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{AcquisitionSpec, InversionSpec, ModelKind, ModelSpec, OutputSpec, Scenario};
use crate::error::{Error, Result};

struct Line<'a> {
    no: usize,
    key: &'a str,
    value: &'a str,
}

impl Line<'_> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::config(format!("line {}: key `{}`: {msg}", self.no, self.key))
    }

    fn f64(&self) -> Result<f64> {
        self.value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(format!("expected a number, got `{}`", self.value)))
    }

    fn usize(&self) -> Result<usize> {
        self.value.parse().map_err(|_| {
            self.err(format!(
                "expected a nonnegative integer, got `{}`",
                self.value
            ))
        })
    }

    fn opt_f64(&self) -> Result<Option<f64>> {
        if self.value.eq_ignore_ascii_case("none") {
            Ok(None)
        } else {
            self.f64().map(Some)
        }
    }

    fn list(&self) -> Result<Vec<f64>> {
        if self.value.is_empty() {
            return Ok(vec![]);
        }
        self.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| self.err(format!("bad list entry `{}`", s.trim())))
            })
            .collect()
    }

    fn pair(&self) -> Result<(f64, f64)> {
        match self.list()?.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(self.err("expected two comma-separated numbers")),
        }
    }
}

fn model_key(m: &mut ModelSpec, l: &Line) -> Result<()> {
    match l.key {
        "name" => m.name = l.value.to_string(),
        "kind" => {
            m.kind = match l.value {
                "layered" => ModelKind::Layered,
                "inclusion" => ModelKind::Inclusion,
                "file" => ModelKind::File,
                v => {
                    return Err(l.err(format!(
                        "unknown model kind `{v}` (layered, inclusion or file)"
                    )))
                }
            }
        }
        "nz" => m.nz = l.usize()?,
        "nx" => m.nx = l.usize()?,
        "dz" => m.dz = l.f64()?,
        "dx" => m.dx = l.f64()?,
        "interfaces" => m.interfaces = l.list()?,
        "velocities" => m.velocities = l.list()?,
        "initial_interfaces" => m.initial_interfaces = l.list()?,
        "initial_velocities" => m.initial_velocities = l.list()?,
        "background_velocity" => m.background_velocity = l.f64()?,
        "background_gradient" => m.background_gradient = l.f64()?,
        "inclusion_velocity" => m.inclusion_velocity = l.f64()?,
        "inclusion_center" => m.inclusion_center = l.pair()?,
        "inclusion_radii" => m.inclusion_radii = l.pair()?,
        "initial_smoothing" => m.initial_smoothing = l.f64()?,
        "true_model" => {
            m.true_model = (!l.value.eq_ignore_ascii_case("none")).then(|| PathBuf::from(l.value))
        }
        "decimate" => m.decimate = l.usize()?,
        _ => return Err(l.err("unknown key in [model]")),
    }
    Ok(())
}

fn acquisition_key(a: &mut AcquisitionSpec, l: &Line) -> Result<()> {
    match l.key {
        "n_sources" => a.n_sources = l.usize()?,
        "source_depth" => a.source_depth = l.f64()?,
        "source_x_first" => a.source_x_first = l.f64()?,
        "source_x_last" => a.source_x_last = l.f64()?,
        "n_receivers" => a.n_receivers = l.usize()?,
        "receiver_depth" => a.receiver_depth = l.f64()?,
        "receiver_x_first" => a.receiver_x_first = l.f64()?,
        "receiver_spacing" => a.receiver_spacing = l.f64()?,
        "peak_frequency" => a.peak_frequency = l.f64()?,
        "wavelet_delay" => a.wavelet_delay = l.f64()?,
        "band_low" => a.band_low = l.opt_f64()?,
        "band_high" => a.band_high = l.opt_f64()?,
        "record_length" => a.record_length = l.f64()?,
        "dt" => {
            a.dt = if l.value == "auto" {
                None
            } else {
                l.opt_f64()?
            }
        }
        _ => return Err(l.err("unknown key in [acquisition]")),
    }
    Ok(())
}

fn inversion_key(s: &mut InversionSpec, l: &Line) -> Result<()> {
    match l.key {
        "misfit" => s.misfit = l.value.parse().map_err(|e: Error| l.err(e))?,
        "max_iters" => s.max_iters = l.usize()?,
        "lbfgs_memory" => s.lbfgs_memory = l.usize()?,
        "c_min" => s.c_min = l.f64()?,
        "c_max" => s.c_max = l.f64()?,
        "frozen_depth" => s.frozen_depth = l.f64()?,
        "source_mask_radius" => s.source_mask_radius = l.usize()?,
        "first_step_dc" => s.first_step_dc = l.f64()?,
        _ => return Err(l.err("unknown key in [inversion]")),
    }
    Ok(())
}

fn output_key(o: &mut OutputSpec, l: &Line) -> Result<()> {
    match l.key {
        "dir" => o.dir = PathBuf::from(l.value),
        "snapshot_every" => o.snapshot_every = l.usize()?,
        _ => return Err(l.err("unknown key in [output]")),
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut s = Scenario::default();
    let mut section: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "model" | "acquisition" | "inversion" | "output") {
                return Err(Error::config(format!(
                    "line {no}: unknown section [{name}]"
                )));
            }
            section = Some(match name {
                "model" => "model",
                "acquisition" => "acquisition",
                "inversion" => "inversion",
                _ => "output",
            });
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {no}: expected `key = value`, got `{line}`"))
        })?;
        let l = Line {
            no,
            key: k.trim(),
            value: v.trim(),
        };
        match section {
            Some("model") => model_key(&mut s.model, &l)?,
            Some("acquisition") => acquisition_key(&mut s.acquisition, &l)?,
            Some("inversion") => inversion_key(&mut s.inversion, &l)?,
            Some(_) => output_key(&mut s.output, &l)?,
            None => return Err(l.err("key outside of any section")),
        }
    }
    Ok(s)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read scenario file {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn serialize_scenario(s: &Scenario) -> String {
    let m = &s.model;
    let a = &s.acquisition;
    let i = &s.inversion;
    let mut out = String::new();
    let _ = writeln!(out, "[model]");
    let _ = writeln!(out, "name = {}", m.name);
    let _ = writeln!(out, "kind = {}", m.kind.tag());
    let _ = writeln!(
        out,
        "nz = {}\nnx = {}\ndz = {}\ndx = {}",
        m.nz, m.nx, m.dz, m.dx
    );
    let _ = writeln!(
        out,
        "interfaces = {}\nvelocities = {}",
        list(&m.interfaces),
        list(&m.velocities)
    );
    let _ = writeln!(out, "initial_interfaces = {}", list(&m.initial_interfaces));
    let _ = writeln!(out, "initial_velocities = {}", list(&m.initial_velocities));
    let _ = writeln!(
        out,
        "background_velocity = {}\nbackground_gradient = {}",
        m.background_velocity, m.background_gradient
    );
    let _ = writeln!(out, "inclusion_velocity = {}", m.inclusion_velocity);
    let _ = writeln!(
        out,
        "inclusion_center = {}, {}",
        m.inclusion_center.0, m.inclusion_center.1
    );
    let _ = writeln!(
        out,
        "inclusion_radii = {}, {}",
        m.inclusion_radii.0, m.inclusion_radii.1
    );
    let _ = writeln!(out, "initial_smoothing = {}", m.initial_smoothing);
    let _ = writeln!(
        out,
        "true_model = {}",
        m.true_model
            .as_ref()
            .map_or("none".into(), |p| p.display().to_string())
    );
    let _ = writeln!(out, "decimate = {}", m.decimate);
    let _ = writeln!(out, "\n[acquisition]");
    let _ = writeln!(
        out,
        "n_sources = {}\nsource_depth = {}",
        a.n_sources, a.source_depth
    );
    let _ = writeln!(
        out,
        "source_x_first = {}\nsource_x_last = {}",
        a.source_x_first, a.source_x_last
    );
    let _ = writeln!(
        out,
        "n_receivers = {}\nreceiver_depth = {}",
        a.n_receivers, a.receiver_depth
    );
    let _ = writeln!(
        out,
        "receiver_x_first = {}\nreceiver_spacing = {}",
        a.receiver_x_first, a.receiver_spacing
    );
    let _ = writeln!(
        out,
        "peak_frequency = {}\nwavelet_delay = {}",
        a.peak_frequency, a.wavelet_delay
    );
    let _ = writeln!(
        out,
        "band_low = {}\nband_high = {}",
        opt(a.band_low),
        opt(a.band_high)
    );
    let _ = writeln!(out, "record_length = {}", a.record_length);
    let _ = writeln!(
        out,
        "dt = {}",
        a.dt.map_or("auto".into(), |v| v.to_string())
    );
    let _ = writeln!(out, "\n[inversion]");
    let _ = writeln!(
        out,
        "misfit = {}\nmax_iters = {}\nlbfgs_memory = {}",
        i.misfit, i.max_iters, i.lbfgs_memory
    );
    let _ = writeln!(
        out,
        "c_min = {}\nc_max = {}\nfrozen_depth = {}",
        i.c_min, i.c_max, i.frozen_depth
    );
    let _ = writeln!(
        out,
        "source_mask_radius = {}\nfirst_step_dc = {}",
        i.source_mask_radius, i.first_step_dc
    );
    let _ = writeln!(out, "\n[output]");
    let _ = writeln!(
        out,
        "dir = {}\nsnapshot_every = {}",
        s.output.dir.display(),
        s.output.snapshot_every
    );
    out
}
