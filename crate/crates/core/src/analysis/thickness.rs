use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::optimize::simulate_all;
use crate::scenarios::{build_layered, snap_interfaces, ModelKind, Scenario};
use crate::wave::{ShotRecord, SimConfig, VelocityModel};

/// Residuals of records from models whose deepest layer has a finite
/// thickness against the reference in which it extends to the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessStudy {
    pub thicknesses_km: Vec<f64>,
    /// `max |f_d - f_ref|` over all shots, receivers and samples.
    pub linf: Vec<f64>,
    /// First sample index that the extra interface can influence under the
    /// one-node-per-step stencil reach (`usize::MAX` when it is never reached).
    pub first_affected_sample: Vec<usize>,
    /// `max |f_d - f_ref|` over the samples before `first_affected_sample`.
    pub pre_reflection_linf: Vec<f64>,
    pub records: Vec<Vec<ShotRecord<f64>>>,
    pub reference: Vec<ShotRecord<f64>>,
}

impl ThicknessStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("thickness_km,residual_linf,pre_reflection_linf\n");
        for ((d, r), p) in self
            .thicknesses_km
            .iter()
            .zip(&self.linf)
            .zip(&self.pre_reflection_linf)
        {
            let _ = writeln!(out, "{d},{r:e},{p:e}");
        }
        out
    }
}

/// The base truth with one more interface `thickness_km` below its deepest
/// one, under which the velocity returns to that of the layer above. When the
/// interface reaches the bottom of the grid the base truth is returned unchanged.
/// Also returns the interface row (`None` outside the grid).
pub fn thickness_model(
    base: &Scenario,
    thickness_km: f64,
) -> Result<(VelocityModel<f64>, Option<usize>)> {
    let m = &base.model;
    if m.kind != ModelKind::Layered || m.interfaces.len() < 2 {
        return Err(Error::config(
            "thickness study needs a layered base with at least two interfaces",
        ));
    }
    if !(thickness_km > 0.0) || !thickness_km.is_finite() {
        return Err(Error::config(format!(
            "layer thickness must be positive, got {thickness_km} km"
        )));
    }
    let (truth, _) = base.build_models()?;
    let grid = truth.grid;
    let last = *m.interfaces.last().unwrap();
    let depth = last + 1000.0 * thickness_km;
    if depth - grid.origin.0 >= grid.depth_extent() - 1e-9 {
        return Ok((truth, None));
    }
    let rows = snap_interfaces(&[last, depth], &grid)?;
    if rows[1] <= rows[0] {
        return Err(Error::config(format!(
            "layer thickness {thickness_km} km is below the grid spacing"
        )));
    }
    let mut interfaces = m.interfaces.clone();
    interfaces.push(depth);
    let mut velocities = m.velocities.clone();
    velocities.push(m.velocities[m.velocities.len() - 2]);
    Ok((
        build_layered(&interfaces, &velocities, grid)?,
        Some(rows[1]),
    ))
}

fn linf(a: &[ShotRecord<f64>], b: &[ShotRecord<f64>], upto: usize) -> Result<f64> {
    let mut m = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        x.check_geometry(y)?;
        for (xt, yt) in x.traces.iter().zip(&y.traces) {
            for (p, q) in xt.iter().zip(yt).take(upto) {
                m = m.max((p - q).abs());
            }
        }
    }
    Ok(m)
}

pub fn thickness_study(
    base: &Scenario,
    thicknesses_km: &[f64],
    sim: &SimConfig,
) -> Result<ThicknessStudy> {
    if thicknesses_km.is_empty() || thicknesses_km.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(
            "thicknesses must be a nonempty strictly increasing list",
        ));
    }
    let built = base.build()?;
    let acq = &built.acquisition;
    let grid = built.truth.grid;
    let reference = simulate_all(&built.truth, acq, sim)?;
    let snap_row = |(z, x): (f64, f64)| grid.snap((z, x)).map(|p| p.0);
    let src_rows: Vec<usize> = acq.sources.iter().filter_map(|&p| snap_row(p)).collect();
    let rec_rows: Vec<usize> = acq.receivers.iter().filter_map(|&p| snap_row(p)).collect();
    let (s_max, r_max) = (
        src_rows.into_iter().max().unwrap_or(0),
        rec_rows.into_iter().max().unwrap_or(0),
    );

    let mut out = ThicknessStudy {
        thicknesses_km: thicknesses_km.to_vec(),
        linf: Vec::new(),
        first_affected_sample: Vec::new(),
        pre_reflection_linf: Vec::new(),
        records: Vec::new(),
        reference,
    };
    for &d in thicknesses_km {
        let (model, row) = thickness_model(base, d)?;
        let records = simulate_all(&model, acq, sim)?;
        let first = match row {
            Some(r) => (2 * r).saturating_sub(s_max + r_max + 2),
            None => usize::MAX,
        };
        out.linf.push(linf(&records, &out.reference, usize::MAX)?);
        out.pre_reflection_linf
            .push(linf(&records, &out.reference, first)?);
        out.first_affected_sample.push(first);
        out.records.push(records);
        log::info!(
            "thickness {d} km: residual max {:.3e}",
            out.linf.last().unwrap()
        );
    }
    Ok(out)
}
