//! Binary field snapshots.
//!
//! A snapshot stores one or more scalar components sampled on the grid in
//! physical space. The layout is a fixed little-endian header followed by
//! the raw samples: magic `DFSF`, version, dimension, modes per axis, box
//! length, component count, then each component's samples in row-major
//! order, one component after another.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::model::{Chart, State};
use crate::Result;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"DFSF";
pub const SNAPSHOT_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Write scalar components sampled on a common grid.
pub fn write_components(
    path: &Path,
    grid: &Grid,
    components: &[&ScalarField],
) -> Result<()> {
    if components.is_empty() {
        return Err(Error::Snapshot("a snapshot needs at least one component".into()));
    }
    for f in components {
        if f.grid() != grid {
            return Err(Error::GridMismatch(
                "snapshot components live on different grids".into(),
            ));
        }
    }
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&SNAPSHOT_MAGIC)?;
    write_u32(&mut w, SNAPSHOT_VERSION)?;
    write_u32(&mut w, grid.dim() as u32)?;
    write_u32(&mut w, grid.n_modes() as u32)?;
    write_f64(&mut w, grid.box_length())?;
    write_u32(&mut w, components.len() as u32)?;
    for f in components {
        for v in f.to_physical() {
            write_f64(&mut w, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a snapshot back as its grid and raw per-component sample blocks.
pub fn read_components(path: &Path) -> Result<(Grid, Vec<Vec<f64>>)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot(format!(
            "bad magic {magic:?}, expected {SNAPSHOT_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported version {version}, expected {SNAPSHOT_VERSION}"
        )));
    }
    let dim = read_u32(&mut r)? as usize;
    let n_modes = read_u32(&mut r)? as usize;
    let box_length = read_f64(&mut r)?;
    let n_components = read_u32(&mut r)? as usize;
    let grid = Grid::new(dim, n_modes, box_length)
        .map_err(|e| Error::Snapshot(format!("header describes an invalid grid: {e}")))?;
    if n_components == 0 {
        return Err(Error::Snapshot("snapshot declares zero components".into()));
    }
    let mut blocks = Vec::with_capacity(n_components);
    for _ in 0..n_components {
        let mut samples = vec![0.0f64; grid.len()];
        for v in samples.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        blocks.push(samples);
    }
    let mut trailer = [0u8; 1];
    if r.read(&mut trailer)? != 0 {
        return Err(Error::Snapshot("trailing bytes after the sample block".into()));
    }
    Ok((grid, blocks))
}

/// Write a full state: the two scalars followed by the velocity components.
pub fn write_state(path: &Path, state: &State) -> Result<()> {
    let mut components: Vec<&ScalarField> = vec![state.scalar1(), state.scalar2()];
    components.extend(state.velocity().components().iter());
    write_components(path, state.grid(), &components)
}

/// Read a state written by `write_state`. The chart is not part of the
/// format, so the caller supplies it.
pub fn read_state(path: &Path, chart: Chart) -> Result<State> {
    let (grid, blocks) = read_components(path)?;
    if blocks.len() != 2 + grid.dim() {
        return Err(Error::Snapshot(format!(
            "state snapshot needs {} components, found {}",
            2 + grid.dim(),
            blocks.len()
        )));
    }
    let s1 = ScalarField::from_physical(grid, &blocks[0])?;
    let s2 = ScalarField::from_physical(grid, &blocks[1])?;
    let u = VectorField::from_components(
        blocks[2..]
            .iter()
            .map(|b| ScalarField::from_physical(grid, b))
            .collect::<Result<Vec<_>>>()?,
    )?;
    State::new(chart, s1, s2, u)
}

/// Write a single scalar field.
pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    write_components(path, f.grid(), &[f])
}

/// Read a snapshot holding exactly one scalar component.
pub fn read_scalar(path: &Path) -> Result<ScalarField> {
    let (grid, blocks) = read_components(path)?;
    if blocks.len() != 1 {
        return Err(Error::Snapshot(format!(
            "expected one component, found {}",
            blocks.len()
        )));
    }
    ScalarField::from_physical(grid, &blocks[0])
}
