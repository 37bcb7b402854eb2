//! Flat binary container for grid fields and the solver series CSV.
//!
//! Layout (little endian): magic `RFGF`, u32 d, f64 s, f64 L, u32 n, f64 t,
//! then n^d f64 cell values in row-major order (x fastest).

use std::io::Write;

use super::{Grid, GridField, SeriesRow};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

const MAGIC: &[u8; 4] = b"RFGF";
const HEADER: usize = 4 + 4 + 8 + 8 + 4 + 8;

pub fn encode_field(field: &GridField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * field.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(field.grid.d as u32).to_le_bytes());
    out.extend_from_slice(&field.spec.s().to_le_bytes());
    out.extend_from_slice(&field.grid.half_width.to_le_bytes());
    out.extend_from_slice(&(field.grid.n as u32).to_le_bytes());
    out.extend_from_slice(&field.t.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos.checked_add(K).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Parse(format!("truncated grid field at byte {}", self.pos))
        })?;
        let mut a = [0u8; K];
        a.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take::<8>()?))
    }
}

/// Decodes a field written by [`encode_field`]. The kernel normalization is the default one.
pub fn decode_field(bytes: &[u8]) -> Result<GridField> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(Error::Parse("bad magic".into()));
    }
    let d = r.u32()? as usize;
    let s = r.f64()?;
    let l = r.f64()?;
    let n = r.u32()? as usize;
    let t = r.f64()?;
    if !t.is_finite() {
        return Err(Error::Parse(format!("bad time {t}")));
    }
    let spec = KernelSpec::new(d, s).map_err(|e| Error::Parse(e.to_string()))?;
    let grid = Grid::new(d, l, n).map_err(|e| Error::Parse(e.to_string()))?;
    let cells = grid.cells();
    let expected = HEADER + 8 * cells;
    if bytes.len() != expected {
        return Err(Error::Parse(format!("expected {expected} bytes, got {}", bytes.len())));
    }
    let values = (0..cells).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
    GridField::new(spec, grid, values, t).map_err(|e| Error::Parse(e.to_string()))
}

/// Series CSV: `t,mass,energy,sup_grad_h,sup_hess_h,support_radius`.
pub fn write_series_csv<W: Write>(rows: &[SeriesRow], mut w: W) -> Result<()> {
    writeln!(w, "t,mass,energy,sup_grad_h,sup_hess_h,support_radius")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.t, r.mass, r.energy, r.sup_grad_h, r.sup_hess_h, r.support_radius)?;
    }
    Ok(())
}
