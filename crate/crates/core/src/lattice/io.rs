//! Value-field serialization.
//!
//! Binary layout (little-endian): magic `BPVF`, format version `u32`,
//! dimension count `u32`, then per dimension `(n: u64, min: f64, max: f64)`
//! in storage order (`x₁, q₁, x₂, q₂, …`), time index `u64`, time `f64`,
//! horizon step count `u64`, dtype tag `u8` (1 = f64), and the values.

use std::io::{Read, Write};

use super::{Axis, GridSpec, LatticeError, Result, ValueField};

const MAGIC: &[u8; 4] = b"BPVF";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

pub fn write_binary<W: Write>(field: &ValueField, mut w: W) -> Result<()> {
    let g = &field.grid;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&((2 * g.arms()) as u32).to_le_bytes())?;
    for a in g.x_axes() {
        for axis in [a, g.q_axis()] {
            w.write_all(&(axis.n as u64).to_le_bytes())?;
            w.write_all(&axis.min.to_le_bytes())?;
            w.write_all(&axis.max.to_le_bytes())?;
        }
    }
    w.write_all(&(field.time_index as u64).to_le_bytes())?;
    w.write_all(&field.t.to_le_bytes())?;
    w.write_all(&(g.nt() as u64).to_le_bytes())?;
    w.write_all(&[DTYPE_F64])?;
    let mut buf = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ValueField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LatticeError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(LatticeError::Format(format!("unsupported version {version}")));
    }
    let ndim = read_u32(&mut r)? as usize;
    if ndim == 0 || ndim % 2 != 0 {
        return Err(LatticeError::Format(format!("odd dimension count {ndim}")));
    }
    let mut axes = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let n = read_u64(&mut r)? as usize;
        let min = read_f64(&mut r)?;
        let max = read_f64(&mut r)?;
        axes.push(Axis { min, max, n });
    }
    let time_index = read_u64(&mut r)? as usize;
    let _t = read_f64(&mut r)?;
    let nt = read_u64(&mut r)? as usize;
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    if dtype[0] != DTYPE_F64 {
        return Err(LatticeError::Format(format!("unsupported dtype {}", dtype[0])));
    }
    let q = axes[1];
    if axes.chunks(2).any(|c| c[1] != q) {
        return Err(LatticeError::Format("arms disagree on the q axis".into()));
    }
    let x: Vec<Axis> = axes.chunks(2).map(|c| c[0]).collect();
    let grid = GridSpec::new(x, q, nt)?;
    let len = grid.spatial_len();
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ValueField::new(grid, time_index, values)
}

/// Rounds to nine significant digits and prints the shortest decimal that
/// round-trips the rounded value.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// CSV with columns `x[,q],…,value`, one row per node, preceded by an
/// optional `#` comment line.
pub fn write_csv<W: Write>(field: &ValueField, mut w: W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let k = field.grid.arms();
    let header: Vec<String> = if k == 1 {
        vec!["x".into(), "q".into(), "value".into()]
    } else {
        (1..=k)
            .flat_map(|a| [format!("x{a}"), format!("q{a}")])
            .chain(std::iter::once("value".to_string()))
            .collect()
    };
    writeln!(w, "{}", header.join(","))?;
    let mut err = None;
    field.grid.for_each_node(|n, coords| {
        if err.is_some() {
            return;
        }
        let mut line = String::new();
        for &(x, q) in coords {
            line.push_str(&fmt_sig(x));
            line.push(',');
            line.push_str(&fmt_sig(q));
            line.push(',');
        }
        line.push_str(&fmt_sig(field.values[n]));
        if let Err(e) = writeln!(w, "{line}") {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_roundtrip() {
        let g = GridSpec::uniform(2.0, 7, 4, 10).unwrap();
        let f = ValueField::from_fn(g, 3, |x, q| x.sin() + q);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(matches!(
            read_binary(&b"NOPE0000"[..]),
            Err(LatticeError::Format(_))
        ));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.373_012_345_678), "0.373012346");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
    }

    #[test]
    fn csv_layout() {
        let g = GridSpec::uniform(1.0, 3, 2, 1).unwrap();
        let f = ValueField::from_fn(g, 0, |x, q| x + q);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf, Some("hash abc")).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# hash abc");
        assert_eq!(lines[1], "x,q,value");
        assert_eq!(lines[2], "-2.5,0,-2.5");
        assert_eq!(lines.len(), 2 + 6);
    }
}
