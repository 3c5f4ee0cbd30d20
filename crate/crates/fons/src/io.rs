//! Field serialization.
//!
//! Binary container layout (all little-endian):
//!
//! ```text
//! offset  size  value
//!      0     4  magic bytes "FONS"
//!      4     2  format version (u16), currently 1
//!      6     2  d (u16)
//!      8     4  n (u32)
//!     12     2  components (u16)
//!     14     8  time index (i64), -1 when the field carries none
//!     22   8*k  samples (f64), row-major axis order, component-fastest
//! ```
//!
//! The CSV export is for debugging: one row per node, index coordinates
//! first, then one column per component, 17 significant digits.

use crate::error::{Error, Result};
use crate::grid::{Field, PeriodicGrid, MAX_DIM};
use crate::numeric::fmt_g17;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FONS";
const VERSION: u16 = 1;

pub fn write_field<W: Write>(mut w: W, f: &Field) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(f.grid().d() as u16).to_le_bytes())?;
    w.write_all(&(f.grid().n() as u32).to_le_bytes())?;
    w.write_all(&(f.components() as u16).to_le_bytes())?;
    w.write_all(&f.time_index().unwrap_or(-1).to_le_bytes())?;
    for &v in f.samples() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container(format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let d = read_u16(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let components = read_u16(&mut r)? as usize;
    let time_index = read_i64(&mut r)?;
    let grid = PeriodicGrid::new(d, n)
        .map_err(|e| Error::Container(format!("header describes an invalid grid: {e}")))?;
    let count = grid
        .node_count()
        .checked_mul(components)
        .ok_or_else(|| Error::Container("sample count overflows".into()))?;
    let mut samples = vec![0.0f64; count];
    let mut buf = [0u8; 8];
    for s in samples.iter_mut() {
        r.read_exact(&mut buf)?;
        *s = f64::from_le_bytes(buf);
    }
    let mut f = Field::from_samples(grid, components, samples)?;
    f.set_time_index(if time_index < 0 { None } else { Some(time_index) });
    Ok(f)
}

pub fn write_field_path<P: AsRef<Path>>(path: P, f: &Field) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_field(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn read_field_path<P: AsRef<Path>>(path: P) -> Result<Field> {
    let file = File::open(path)?;
    read_field(BufReader::new(file))
}

/// Debug CSV: header `i0,..,i{d-1},v0,..,v{c-1}`, one row per node.
pub fn write_field_csv<W: Write>(mut w: W, f: &Field) -> Result<()> {
    let grid = f.grid();
    let d = grid.d();
    let mut header = Vec::with_capacity(d + f.components());
    for a in 0..d {
        header.push(format!("i{a}"));
    }
    for c in 0..f.components() {
        header.push(format!("v{c}"));
    }
    writeln!(w, "{}", header.join(","))?;
    let mut ix = [0usize; MAX_DIM];
    for node in 0..grid.node_count() {
        grid.unflat(node, &mut ix[..d]);
        let mut row = Vec::with_capacity(d + f.components());
        for &i in &ix[..d] {
            row.push(i.to_string());
        }
        for c in 0..f.components() {
            row.push(fmt_g17(f.value(node, c)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trips_bitwise() {
        let g = PeriodicGrid::new(2, 8).unwrap();
        let mut f = Field::from_fn(g, 2, |x, c| {
            (x[0] * 3.0 - x[1] * 11.0 + c as f64).sin() / 3.0
        })
        .unwrap();
        f.set_time_index(Some(5));
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"FONS");
        assert_eq!(buf.len(), 22 + 8 * 64 * 2);
        let back = read_field(&buf[..]).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.components(), 2);
        assert_eq!(back.time_index(), Some(5));
        for (a, b) in f.samples().iter().zip(back.samples()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn missing_time_index_round_trips_as_none() {
        let g = PeriodicGrid::new(1, 4).unwrap();
        let f = Field::zeros(g, 1).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(read_field(&buf[..]).unwrap().time_index(), None);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let g = PeriodicGrid::new(1, 4).unwrap();
        let f = Field::zeros(g, 1).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_field(&bad[..]).is_err());

        let mut bad = buf.clone();
        bad[4] = 99;
        assert!(read_field(&bad[..]).is_err());

        // Truncated sample payload.
        assert!(read_field(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn csv_lists_every_node_once() {
        let g = PeriodicGrid::new(2, 4).unwrap();
        let f = Field::from_fn(g, 1, |x, _| x[0] + 10.0 * x[1]).unwrap();
        let mut out = Vec::new();
        write_field_csv(&mut out, &f).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i0,i1,v0");
        assert_eq!(lines.len(), 1 + 16);
        assert!(lines[1].starts_with("0,0,"));
    }
}
