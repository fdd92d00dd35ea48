//! Flat binary field dumps.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `KBGKFLD1` |
//! | 4 × 8 | `u64` nx, ny, nz, m_v |
//! | 2 × 8 | `f64` v_max, time |
//! | rest  | `f64` values, row-major `[x][y][z][vx][vy][vz]` |
//!
//! A slab field has `ny = nz = 1`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{DistributionField, PhaseSpaceGrid, SpatialLayout, VelocityLattice};

pub const MAGIC: &[u8; 8] = b"KBGKFLD1";

pub fn write_field<W: Write>(mut w: W, field: &DistributionField, time: f64) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    for d in g.layout.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&(g.lattice.m_v() as u64).to_le_bytes())?;
    w.write_all(&g.lattice.v_max().to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.values().len() * 8);
    for x in field.values() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a dump back; returns the field and its time stamp.
pub fn read_field<R: Read>(mut r: R) -> Result<(DistributionField, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a field dump (bad magic)"));
    }
    let mut word = [0u8; 8];
    let mut u = || -> Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let (nx, ny, nz, m_v) = (u()? as usize, u()? as usize, u()? as usize, u()? as usize);
    let v_max = f64::from_bits(u()?);
    let time = f64::from_bits(u()?);
    let layout = match (ny, nz) {
        (1, 1) => SpatialLayout::Slab { nx },
        _ if ny == nx && nz == nx => SpatialLayout::Full { nx },
        _ => return Err(Error::invalid(format!("unsupported dump extents {nx} x {ny} x {nz}"))),
    };
    let grid = PhaseSpaceGrid::new(layout, VelocityLattice::new(m_v, v_max)?)?;
    let mut bytes = vec![0u8; grid.n_values() * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((DistributionField::from_values(grid, values)?, time))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let grid = PhaseSpaceGrid::new(SpatialLayout::Slab { nx: 3 }, VelocityLattice::new(3, 1.5).unwrap()).unwrap();
        let f = DistributionField::from_fn(grid, |x, v| x[0] + v[1] * v[1]).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f, 0.25).unwrap();
        assert_eq!(buf.len(), 8 + 48 + 81 * 8);
        assert_eq!(&buf[8..16], &3u64.to_le_bytes());
        let (g, t) = read_field(buf.as_slice()).unwrap();
        assert_eq!(g, f);
        assert_eq!(t, 0.25);
        buf[0] = b'X';
        assert!(read_field(buf.as_slice()).is_err());
    }
}
