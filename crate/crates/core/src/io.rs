//! Binary grid files: a 16-byte header (`OTF1`, `nz` u32 LE, `nx` u32 LE, four
//! zero bytes) followed by `nz * nx` f64 LE values, depth as the slow index.
//! Shot records use `nz = receivers`, `nx = time samples`. Models carry a text
//! sidecar (`<file>.txt`) with `dz`, `dx` and units.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::wave::{Grid2D, ShotRecord, TimeAxis, VelocityModel};

pub const MAGIC: &[u8; 4] = b"OTF1";

/// Raw row-major grid as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub nz: usize,
    pub nx: usize,
    pub values: Vec<f64>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

pub fn encode_grid(nz: usize, nx: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != nz * nx {
        return Err(Error::GridMismatch(format!(
            "{} values for a {nz}x{nx} grid",
            values.len()
        )));
    }
    let dim = |n: usize| {
        u32::try_from(n).map_err(|_| Error::config(format!("dimension {n} exceeds u32")))
    };
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(nz)?.to_le_bytes());
    out.extend_from_slice(&dim(nx)?.to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<GridData> {
    if bytes.len() < 16 {
        return Err(format_err(path, "file shorter than the 16-byte header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(path, "bad magic, expected OTF1"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (nz, nx) = (word(4), word(8));
    if bytes[12..16] != [0; 4] {
        return Err(format_err(path, "reserved header bytes are not zero"));
    }
    let body = &bytes[16..];
    if body.len() != 8 * nz * nx {
        return Err(format_err(
            path,
            format!(
                "expected {} payload bytes for {nz}x{nx}, found {}",
                8 * nz * nx,
                body.len()
            ),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(GridData { nz, nx, values })
}

pub fn write_grid(path: &Path, nz: usize, nx: usize, values: &[f64]) -> Result<()> {
    let bytes = encode_grid(nz, nx, values)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridData> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_grid(&bytes, path)
}

pub fn write_record(path: &Path, rec: &ShotRecord<f64>) -> Result<()> {
    let flat: Vec<f64> = rec.traces.concat();
    write_grid(path, rec.n_receivers(), rec.axis.nt, &flat)
}

/// The time step is not stored in the grid file and must be supplied.
pub fn read_record(path: &Path, shot_id: usize, dt: f64) -> Result<ShotRecord<f64>> {
    let g = read_grid(path)?;
    let axis = TimeAxis::new(g.nx, dt)?;
    let traces = g.values.chunks(g.nx.max(1)).map(|c| c.to_vec()).collect();
    Ok(ShotRecord {
        shot_id,
        axis,
        traces,
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes the velocity grid and its `dz`/`dx` sidecar.
pub fn write_model(path: &Path, model: &VelocityModel<f64>) -> Result<()> {
    let g = model.grid;
    write_grid(path, g.nz, g.nx, &model.c)?;
    let side = format!("dz = {}\ndx = {}\nunits = km/s\n", g.dz, g.dx);
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<VelocityModel<f64>> {
    let side_path = sidecar_path(path);
    let side = fs::read_to_string(&side_path).map_err(|e| {
        format_err(&side_path, format!("cannot read model sidecar ({e}); expected lines `dz = <m>`, `dx = <m>`, `units = km/s`"))
    })?;
    let (mut dz, mut dx) = (None, None);
    for line in side
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(&side_path, format!("expected key = value, got `{line}`")))?;
        let num = || {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format_err(&side_path, format!("bad number for {}", k.trim())))
        };
        match k.trim() {
            "dz" => dz = Some(num()?),
            "dx" => dx = Some(num()?),
            "units" if v.trim() == "km/s" => {}
            "units" => {
                return Err(format_err(
                    &side_path,
                    format!("unsupported units `{}`, expected km/s", v.trim()),
                ))
            }
            other => return Err(format_err(&side_path, format!("unknown key `{other}`"))),
        }
    }
    let (dz, dx) = match (dz, dx) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(format_err(&side_path, "sidecar must define dz and dx")),
    };
    let g = read_grid(path)?;
    VelocityModel::new(Grid2D::new(g.nz, g.nx, dz, dx)?, g.values)
}
