//! Binary PPM (P6) reading and writing, maxval 255.

use std::fs;
use std::path::Path;

use histoseg_core::raster::Raster2D;

use crate::errors::{CmdError, CmdResult};

/// Reads a P6 image into a 3-channel u8 raster (channel-major RGB).
pub fn read_p6(path: &Path) -> CmdResult<Raster2D<u8>> {
    let bytes = fs::read(path).map_err(|e| CmdError::io(path.display(), e))?;
    let fail = |what: &str| CmdError::Io(format!("{}: {what}", path.display()));

    fn next_token(bytes: &[u8], pos: usize) -> Option<(usize, usize)> {
        let mut i = pos;
        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            break;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        (i > start).then_some((start, i))
    }

    let (s, e) = next_token(&bytes, 0).ok_or_else(|| fail("missing magic"))?;
    if &bytes[s..e] != b"P6" {
        return Err(fail("not a P6 file"));
    }
    let mut pos = e;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let (s, e) = next_token(&bytes, pos).ok_or_else(|| fail("truncated header"))?;
        *d = std::str::from_utf8(&bytes[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fail("non-numeric header field"))?;
        pos = e;
    }
    let (width, height, maxval) = (dims[0], dims[1], dims[2]);
    if maxval != 255 {
        return Err(fail("only maxval 255 is supported"));
    }
    if width == 0 || height == 0 {
        return Err(fail("zero image dimension"));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let expected = width * height * 3;
    let payload = bytes.get(pos..).ok_or_else(|| fail("missing payload"))?;
    if payload.len() != expected {
        return Err(fail("payload length does not match dimensions"));
    }
    let mut raster = Raster2D::filled(height, width, 3, 0u8).map_err(CmdError::from)?;
    for r in 0..height {
        for c in 0..width {
            let base = (r * width + c) * 3;
            for ch in 0..3 {
                raster.set(ch, r, c, payload[base + ch]);
            }
        }
    }
    Ok(raster)
}

/// Writes a 3-channel u8 raster as binary P6.
pub fn write_p6(path: &Path, rgb: &Raster2D<u8>) -> CmdResult<()> {
    if rgb.channels() != 3 {
        return Err(CmdError::Data(format!(
            "{}: PPM output needs 3 channels, got {}",
            path.display(),
            rgb.channels()
        )));
    }
    let (h, w) = rgb.extent();
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.reserve(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                bytes.push(rgb.get(ch, r, c));
            }
        }
    }
    fs::write(path, bytes).map_err(|e| CmdError::io(path.display(), e))
}
