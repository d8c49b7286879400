//! Binary field checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! b"ZKMS"  u32 version  u32 dim  u32 p  u32 points[dim]
//! f64 box_lengths[dim]  f64 comoving_speed  f64 time  f64 values[prod(points)]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Result, ZkError};
use crate::grid::Grid;
use crate::spectral::Field;

pub const MAGIC: &[u8; 4] = b"ZKMS";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub p: u32,
    pub time: f64,
    pub field: Field,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let grid = self.field.grid();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(grid.dim() as u32).to_le_bytes())?;
        w.write_all(&self.p.to_le_bytes())?;
        for &n in grid.points() {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for &l in grid.box_lengths() {
            w.write_all(&l.to_le_bytes())?;
        }
        w.write_all(&grid.comoving_speed().to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        for &v in self.field.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(ZkError::Format("bad magic bytes, not a ZKMS checkpoint".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(ZkError::Format(format!("unsupported checkpoint version {version}")));
        }
        let dim = read_u32(r)? as usize;
        if !(dim == 2 || dim == 3) {
            return Err(ZkError::Format(format!("checkpoint dimension {dim} is not 2 or 3")));
        }
        let p = read_u32(r)?;
        let mut points = Vec::with_capacity(dim);
        for _ in 0..dim {
            points.push(read_u32(r)? as usize);
        }
        let mut lengths = Vec::with_capacity(dim);
        for _ in 0..dim {
            lengths.push(read_f64(r)?);
        }
        let speed = read_f64(r)?;
        let time = read_f64(r)?;
        let grid = Grid::new(&lengths, &points, speed)
            .map_err(|e| ZkError::Format(format!("invalid grid header: {e}")))?;
        let mut bytes = vec![0u8; grid.len() * 8];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let field = Field::new(Arc::new(grid), values)
            .map_err(|e| ZkError::Format(format!("invalid field values: {e}")))?;
        Ok(Checkpoint { p, time, field })
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn truncated(e: std::io::Error) -> ZkError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        ZkError::Format("checkpoint is truncated".into())
    } else {
        ZkError::Io(e)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = Arc::new(Grid::new(&[4.0, 8.0], &[16, 16], 1.5).unwrap());
        let f = Field::from_fn(g, |x| x[0] - x[1]);
        let mut buf = Vec::new();
        Checkpoint { p: 2, time: 3.0, field: f }.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"ZKMS");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 4 + 4 * 5 + 8 * 4 + 8 * 256);
    }

    #[test]
    fn rejects_garbage() {
        let mut junk: &[u8] = b"NOPE\x01\x00\x00\x00";
        assert!(matches!(Checkpoint::read_from(&mut junk), Err(ZkError::Format(_))));
        let mut short: &[u8] = b"ZKMS\x01\x00";
        assert!(matches!(Checkpoint::read_from(&mut short), Err(ZkError::Format(_))));
    }
}
