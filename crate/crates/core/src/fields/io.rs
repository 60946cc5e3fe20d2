//! Binary and CSV field serialisation.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic    8 bytes  "ELLFLD01"
//! n        u32
//! N        u32
//! M        u32
//! L        f64
//! repr     u8       0 = physical, 1 = spectral
//! payload  f64[]    row-major, component-major; spectral entries as (re, im)
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rustfft::num_complex::Complex64;

use super::{GridSpec, Representation, VectorField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ELLFLD01";

pub fn write_binary<W: Write>(field: &VectorField, mut w: W) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(g.dim() as u32)?;
    w.write_u32::<LittleEndian>(g.components() as u32)?;
    w.write_u32::<LittleEndian>(g.points_per_axis() as u32)?;
    w.write_f64::<LittleEndian>(g.period())?;
    match field.representation() {
        Representation::Physical => {
            w.write_u8(0)?;
            for v in field.physical()? {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        Representation::Spectral => {
            w.write_u8(1)?;
            for c in field.spectral()? {
                w.write_f64::<LittleEndian>(c.re)?;
                w.write_f64::<LittleEndian>(c.im)?;
            }
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<VectorField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a field file (bad magic)".into()));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let nc = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let l = r.read_f64::<LittleEndian>()?;
    let grid = GridSpec::new(n, nc, m, l)?;
    let len = nc * grid.total_points();
    match r.read_u8()? {
        0 => {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            VectorField::from_physical(&grid, v)
        }
        1 => {
            let mut raw = vec![0.0; 2 * len];
            r.read_f64_into::<LittleEndian>(&mut raw)?;
            let c = raw
                .chunks(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            VectorField::from_spectral(&grid, c)
        }
        t => Err(Error::Parse(format!("unknown representation tag {t}"))),
    }
}

/// Writes the 2-D slice through the origin spanned by axes `axis_a`, `axis_b`
/// (all other indices zero) as CSV rows `x_a,x_b,u_1,...,u_N`.
pub fn write_csv_slice<W: Write>(
    field: &VectorField,
    axis_a: usize,
    axis_b: usize,
    mut w: W,
) -> Result<()> {
    let g = field.grid();
    let n = g.dim();
    if axis_a >= n || (n > 1 && (axis_b >= n || axis_a == axis_b)) {
        return Err(Error::InvalidInput(format!(
            "slice axes ({axis_a}, {axis_b}) invalid for n = {n}"
        )));
    }
    let phys = field.to_physical();
    let vals = phys.physical()?;
    let pts = g.total_points();
    let m = g.points_per_axis();
    let h = g.spacing();
    let header: Vec<String> = (1..=g.components()).map(|a| format!("u{a}")).collect();
    writeln!(w, "x{},x{},{}", axis_a + 1, axis_b + 1, header.join(","))?;
    let second = if n > 1 { m } else { 1 };
    for i in 0..m {
        for j in 0..second {
            let mut idx = vec![0; n];
            idx[axis_a] = i;
            if n > 1 {
                idx[axis_b] = j;
            }
            let p = g.flat_index(&idx);
            let row: Vec<String> = (0..g.components())
                .map(|a| format!("{:e}", vals[a * pts + p]))
                .collect();
            writeln!(w, "{},{},{}", i as f64 * h, j as f64 * h, row.join(","))?;
        }
    }
    Ok(())
}
