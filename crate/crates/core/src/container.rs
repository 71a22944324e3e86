//! Little-endian binary container helpers shared by the dataset, model,
//! GMM-prior, and observation file formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn write_magic<W: Write>(w: &mut W, magic: &[u8]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub fn expect_magic<R: Read>(r: &mut R, magic: &[u8], what: &str) -> Result<()> {
    let mut buf = vec![0u8; magic.len()];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("{what}: file too short for magic")))?;
    if buf != magic {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn expect_version<R: Read>(r: &mut R, version: u16, what: &str) -> Result<()> {
    let got = r
        .read_u16::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{what}: truncated version field")))?;
    if got != version {
        return Err(Error::Format(format!(
            "{what}: unsupported version {got}, this build reads version {version}"
        )));
    }
    Ok(())
}

pub fn write_u16<W: Write>(w: &mut W, v: u16) -> Result<()> {
    w.write_u16::<LittleEndian>(v)?;
    Ok(())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_u64::<LittleEndian>(v)?;
    Ok(())
}

pub fn write_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    w.write_u8(v)?;
    Ok(())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(v)?;
    Ok(())
}

pub fn read_u16<R: Read>(r: &mut R, what: &str) -> Result<u16> {
    r.read_u16::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{what}: truncated u16")))
}

pub fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{what}: truncated u32")))
}

pub fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    r.read_u64::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{what}: truncated u64")))
}

pub fn read_u8<R: Read>(r: &mut R, what: &str) -> Result<u8> {
    r.read_u8()
        .map_err(|_| Error::Format(format!("{what}: truncated u8")))
}

pub fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    r.read_f64::<LittleEndian>()
        .map_err(|_| Error::Format(format!("{what}: truncated f64")))
}

/// Interleaved (re, im) 64-bit float pairs.
pub fn write_complex_slice<W: Write>(w: &mut W, xs: &[Complex64]) -> Result<()> {
    for z in xs {
        w.write_f64::<LittleEndian>(z.re)?;
        w.write_f64::<LittleEndian>(z.im)?;
    }
    Ok(())
}

pub fn read_complex_vec<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let re = read_f64(r, what)?;
        let im = read_f64(r, what)?;
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

pub fn write_f64_slice<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub fn read_f64_vec<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r, what)?);
    }
    Ok(out)
}
