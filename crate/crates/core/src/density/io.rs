//! Grid files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic       8 bytes  "MDGRID01"
//! kind        u32      0 = characteristic (complex), 1 = density (real)
//! n           u64
//! sigma       f64
//! half_width  f64      z_max or w_max
//! p_max       u64
//! abs_error   f64
//! tail_cert   f64
//! digest      32 bytes config digest (zeros when absent)
//! label       u32 length + UTF-8 bytes
//! extra       u32 count + f64 values (density: mass, eps_mass, min, max,
//!             imag_residual, boundary_max; characteristic: real flag)
//! samples     n*n values row-major; complex samples as (re, im)
//! ```

use super::{CharacteristicGrid, DensityDiagnostics, DensityGrid, GridDiagnostics};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 8] = b"MDGRID01";
const KIND_CHARACTERISTIC: u32 = 0;
const KIND_DENSITY: u32 = 1;

struct Header {
    kind: u32,
    n: usize,
    sigma: f64,
    half_width: f64,
    p_max: u64,
    abs_error: f64,
    tail_cert: f64,
    digest: [u8; 32],
    label: String,
    extra: Vec<f64>,
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&h.kind.to_le_bytes())?;
    w.write_all(&(h.n as u64).to_le_bytes())?;
    for v in [h.sigma, h.half_width] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&h.p_max.to_le_bytes())?;
    for v in [h.abs_error, h.tail_cert] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&h.digest)?;
    w.write_all(&(h.label.len() as u32).to_le_bytes())?;
    w.write_all(h.label.as_bytes())?;
    w.write_all(&(h.extra.len() as u32).to_le_bytes())?;
    for v in &h.extra {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        msg: msg.into(),
    }
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
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a grid file (bad magic)"));
    }
    let kind = read_u32(r)?;
    let n = read_u64(r)? as usize;
    if n == 0 || n > 1 << 16 {
        return Err(bad(format!("implausible grid size {n}")));
    }
    let sigma = read_f64(r)?;
    let half_width = read_f64(r)?;
    let p_max = read_u64(r)?;
    let abs_error = read_f64(r)?;
    let tail_cert = read_f64(r)?;
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    let len = read_u32(r)? as usize;
    let mut label = vec![0u8; len];
    r.read_exact(&mut label)?;
    let label = String::from_utf8(label).map_err(|_| bad("label is not UTF-8"))?;
    let count = read_u32(r)? as usize;
    let extra = (0..count).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    Ok(Header {
        kind,
        n,
        sigma,
        half_width,
        p_max,
        abs_error,
        tail_cert,
        digest,
        label,
        extra,
    })
}

pub fn write_characteristic<W: Write>(
    w: &mut W,
    g: &CharacteristicGrid,
    digest: Option<[u8; 32]>,
) -> Result<()> {
    write_header(
        w,
        &Header {
            kind: KIND_CHARACTERISTIC,
            n: g.n,
            sigma: g.sigma,
            half_width: g.z_max,
            p_max: g.p_max,
            abs_error: g.abs_error,
            tail_cert: g.tail_cert,
            digest: digest.unwrap_or_default(),
            label: g.label.clone(),
            extra: vec![if g.real_coefficients { 1.0 } else { 0.0 }],
        },
    )?;
    for v in &g.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a characteristic grid and the embedded digest.
pub fn read_characteristic<R: Read>(r: &mut R) -> Result<(CharacteristicGrid, [u8; 32])> {
    let h = read_header(r)?;
    if h.kind != KIND_CHARACTERISTIC {
        return Err(bad("expected a characteristic grid"));
    }
    let mut values = Vec::with_capacity(h.n * h.n);
    for _ in 0..h.n * h.n {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        values.push(Complex64::new(re, im));
    }
    let grid = CharacteristicGrid {
        label: h.label,
        sigma: h.sigma,
        z_max: h.half_width,
        n: h.n,
        p_max: h.p_max,
        values,
        tail_cert: h.tail_cert,
        abs_error: h.abs_error,
        real_coefficients: h.extra.first().is_some_and(|&v| v != 0.0),
        diagnostics: GridDiagnostics::default(),
    };
    Ok((grid, h.digest))
}

pub fn write_density<W: Write>(w: &mut W, d: &DensityGrid, digest: Option<[u8; 32]>) -> Result<()> {
    let dg = &d.diagnostics;
    write_header(
        w,
        &Header {
            kind: KIND_DENSITY,
            n: d.n,
            sigma: d.sigma,
            half_width: d.w_max,
            p_max: d.p_max,
            abs_error: d.source_abs_error,
            tail_cert: d.tail_cert,
            digest: digest.unwrap_or_default(),
            label: d.label.clone(),
            extra: vec![
                dg.mass,
                dg.eps_mass,
                dg.min_value,
                dg.max_value,
                dg.imag_residual,
                dg.boundary_max,
            ],
        },
    )?;
    for v in &d.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a density grid and the embedded digest.
pub fn read_density<R: Read>(r: &mut R) -> Result<(DensityGrid, [u8; 32])> {
    let h = read_header(r)?;
    if h.kind != KIND_DENSITY {
        return Err(bad("expected a density grid"));
    }
    if h.extra.len() < 6 {
        return Err(bad("density header lacks diagnostics"));
    }
    let values = (0..h.n * h.n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    let dx = 2.0 * h.half_width / h.n as f64;
    let e = &h.extra;
    let grid = DensityGrid {
        label: h.label,
        sigma: h.sigma,
        w_max: h.half_width,
        n: h.n,
        dx,
        values,
        cell_measure: dx * dx / (2.0 * PI),
        p_max: h.p_max,
        source_abs_error: h.abs_error,
        tail_cert: h.tail_cert,
        diagnostics: DensityDiagnostics {
            mass: e[0],
            eps_mass: e[1],
            min_value: e[2],
            max_value: e[3],
            imag_residual: e[4],
            boundary_max: e[5],
        },
    };
    Ok((grid, h.digest))
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e16)`.
pub fn csv_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn digest_line<W: Write>(w: &mut W, digest: Option<&str>) -> Result<()> {
    if let Some(d) = digest {
        writeln!(w, "# config_digest={d}")?;
    }
    Ok(())
}

/// CSV `x,y,value` with shortest round-trip floats.
pub fn write_density_csv<W: Write>(w: &mut W, d: &DensityGrid, digest: Option<&str>) -> Result<()> {
    digest_line(w, digest)?;
    writeln!(w, "x,y,value")?;
    for l in 0..d.n {
        let y = d.coord(l);
        for k in 0..d.n {
            writeln!(w, "{},{},{}", csv_number(d.coord(k)), csv_number(y), csv_number(d.at(l, k)))?;
        }
    }
    Ok(())
}

/// CSV `u,v,re,im`.
pub fn write_characteristic_csv<W: Write>(
    w: &mut W,
    g: &CharacteristicGrid,
    digest: Option<&str>,
) -> Result<()> {
    digest_line(w, digest)?;
    writeln!(w, "u,v,re,im")?;
    for r in 0..g.n {
        let v = g.coord(r);
        for c in 0..g.n {
            let z = g.at(r, c);
            writeln!(
                w,
                "{},{},{},{}",
                csv_number(g.coord(c)),
                csv_number(v),
                csv_number(z.re),
                csv_number(z.im)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::invert_to_density;

    fn grid() -> CharacteristicGrid {
        CharacteristicGrid::from_fn("g", 1.0, 10.0, 32, |u, v| {
            Complex64::new((-(u * u + v * v) / 2.0).exp(), 1e-3 * u)
        })
        .unwrap()
    }

    #[test]
    fn csv_numbers_roundtrip() {
        for x in [0.0, -0.0, 1.5e-17, -3.25, 1e300, 0.1, 123456.789, 5e-324] {
            let s = csv_number(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(csv_number(1.5e-17), "1.5e-17");
        assert_eq!(csv_number(0.25), "0.25");
    }

    #[test]
    fn characteristic_roundtrip() {
        let g = grid();
        let mut buf = Vec::new();
        write_characteristic(&mut buf, &g, Some([7u8; 32])).unwrap();
        let (back, digest) = read_characteristic(&mut buf.as_slice()).unwrap();
        assert_eq!(digest, [7u8; 32]);
        assert_eq!(back.values, g.values);
        assert_eq!((back.n, back.z_max, back.label.as_str()), (32, 10.0, "g"));
        assert!(read_density(&mut buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_characteristic(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn density_roundtrip_is_bit_exact() {
        let g = CharacteristicGrid::from_fn("g", 1.0, 20.0, 32, |u, v| {
            Complex64::new((-(u * u + v * v) / 2.0).exp(), 0.0)
        })
        .unwrap();
        let d = invert_to_density(&g).unwrap();
        let mut buf = Vec::new();
        write_density(&mut buf, &d, None).unwrap();
        let (back, _) = read_density(&mut buf.as_slice()).unwrap();
        assert_eq!(back.values, d.values);
        assert_eq!(back.dx, d.dx);
        assert_eq!(back.diagnostics, d.diagnostics);

        let mut csv = Vec::new();
        write_density_csv(&mut csv, &d, Some("abc")).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_digest=abc"));
        assert_eq!(lines.next(), Some("x,y,value"));
        // every value reloads to the identical bits
        for (line, v) in lines.zip(&d.values) {
            let parsed: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }
}
