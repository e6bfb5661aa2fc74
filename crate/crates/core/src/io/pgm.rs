//! 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A decoded 16-bit raster, row-major from the top-left pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster16 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<Raster16> {
    // Header: magic, width, height, maxval as whitespace-separated tokens
    // (with `#` comments), then exactly one whitespace byte before the data.
    let mut pos = 0;
    let mut fields: Vec<String> = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Raster("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Raster(format!("expected P5 magic, found `{}`", fields[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Raster(format!("bad PGM {what} `{s}`")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 65535 {
        return Err(Error::Raster(format!("expected maxval 65535, found {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Raster("PGM has zero size".into()));
    }
    pos += 1;
    let expected = width * height * 2;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < expected {
        return Err(Error::Raster(format!(
            "PGM body has {} bytes, expected {expected}",
            body.len()
        )));
    }
    let data = body[..expected]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Raster16 {
        width,
        height,
        data,
    })
}

pub fn encode_pgm16(raster: &Raster16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", raster.width, raster.height).into_bytes();
    out.reserve(raster.data.len() * 2);
    for v in &raster.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<Raster16> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm16(&bytes).map_err(|e| Error::Raster(format!("{}: {e}", path.display())))
}

pub fn write_pgm16(path: impl AsRef<Path>, raster: &Raster16) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm16(raster)).map_err(|e| Error::io(path, e))
}
