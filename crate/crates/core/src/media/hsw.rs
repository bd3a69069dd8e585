//! `HSW1` raw field files.
//!
//! Layout: the magic `HSW1`, three `u64` little-endian dimensions, a `u32`
//! little-endian element tag, then the values with `x1` varying fastest.
//! Complex values are stored as interleaved real/imaginary `f64`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::C64;

pub const MAGIC: &[u8; 4] = b"HSW1";
pub const TAG_REAL: u32 = 1;
pub const TAG_COMPLEX: u32 = 2;

#[derive(Debug, Error)]
pub enum HswError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not an HSW1 file")]
    BadMagic,
    #[error("unsupported element tag {0}")]
    BadTag(u32),
    #[error("{values} values do not fill dimensions {dims:?}")]
    Size { dims: [usize; 3], values: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum HswField {
    Real { dims: [usize; 3], values: Vec<f64> },
    Complex { dims: [usize; 3], values: Vec<C64> },
}

impl HswField {
    pub fn dims(&self) -> [usize; 3] {
        match self {
            Self::Real { dims, .. } | Self::Complex { dims, .. } => *dims,
        }
    }

    /// Values as complex numbers, promoting real data.
    pub fn to_complex(&self) -> Vec<C64> {
        match self {
            Self::Real { values, .. } => values.iter().map(|&v| C64::new(v, 0.0)).collect(),
            Self::Complex { values, .. } => values.clone(),
        }
    }
}

fn write_header<W: Write>(out: &mut W, dims: [usize; 3], tag: u32) -> io::Result<()> {
    out.write_all(MAGIC)?;
    for d in dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    out.write_all(&tag.to_le_bytes())
}

fn check_len(dims: [usize; 3], values: usize) -> Result<(), HswError> {
    if dims.iter().product::<usize>() != values {
        return Err(HswError::Size { dims, values });
    }
    Ok(())
}

pub fn write_real<W: Write>(out: &mut W, dims: [usize; 3], values: &[f64]) -> Result<(), HswError> {
    check_len(dims, values.len())?;
    write_header(out, dims, TAG_REAL)?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_complex<W: Write>(
    out: &mut W,
    dims: [usize; 3],
    values: &[C64],
) -> Result<(), HswError> {
    check_len(dims, values.len())?;
    write_header(out, dims, TAG_COMPLEX)?;
    for v in values {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read<R: Read>(input: &mut R) -> Result<HswField, HswError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HswError::BadMagic);
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = read_u64(input)? as usize;
    }
    let mut tag = [0u8; 4];
    input.read_exact(&mut tag)?;
    let tag = u32::from_le_bytes(tag);
    let len: usize = dims.iter().product();
    match tag {
        TAG_REAL => {
            let values = (0..len).map(|_| read_f64(input)).collect::<io::Result<_>>()?;
            Ok(HswField::Real { dims, values })
        }
        TAG_COMPLEX => {
            let values = (0..len)
                .map(|_| Ok(C64::new(read_f64(input)?, read_f64(input)?)))
                .collect::<io::Result<_>>()?;
            Ok(HswField::Complex { dims, values })
        }
        other => Err(HswError::BadTag(other)),
    }
}

pub fn save_complex(path: &Path, dims: [usize; 3], values: &[C64]) -> Result<(), HswError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_complex(&mut out, dims, values)?;
    out.flush()?;
    Ok(())
}

pub fn save_real(path: &Path, dims: [usize; 3], values: &[f64]) -> Result<(), HswError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_real(&mut out, dims, values)?;
    out.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<HswField, HswError> {
    read(&mut BufReader::new(File::open(path)?))
}
