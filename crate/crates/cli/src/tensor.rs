//! The `.hst` tensor container.
//!
//! Layout: 4-byte magic `HST1`, `ndim` as u32 LE, `ndim` dims as u32 LE
//! ((height, width) for 2-D, (channel, height, width) for 3-D), one dtype
//! byte (0=u8, 1=u16, 2=u32, 3=f32, 4=f64), then the raw payload in
//! row-major, channel-major order, little-endian. Readers reject a wrong
//! magic, undersized headers, unknown dtypes, zero dims and payloads whose
//! length does not equal product(dims) × dtype size.

use std::fs;
use std::path::Path;

use histoseg_core::bundle::HoVerMaps;
use histoseg_core::raster::Raster2D;

use crate::errors::{CmdError, CmdResult};

const MAGIC: &[u8; 4] = b"HST1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    U16 = 1,
    U32 = 2,
    F32 = 3,
    F64 = 4,
}

impl Dtype {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::U16),
            2 => Some(Dtype::U32),
            3 => Some(Dtype::F32),
            4 => Some(Dtype::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::U32 => 4,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug)]
pub enum TensorData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Tensor {
    /// (height, width) or (channel, height, width).
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    /// (channels, height, width); 2-D tensors report one channel.
    pub fn shape(&self) -> (usize, usize, usize) {
        match self.dims.len() {
            2 => (1, self.dims[0], self.dims[1]),
            3 => (self.dims[0], self.dims[1], self.dims[2]),
            _ => unreachable!("read_tensor only admits 2-D and 3-D"),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U16(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

pub fn read_tensor(path: &Path) -> CmdResult<Tensor> {
    let bytes = fs::read(path).map_err(|e| CmdError::io(path.display(), e))?;
    let fail = |what: &str| CmdError::Io(format!("{}: {what}", path.display()));
    if bytes.len() < 8 {
        return Err(fail("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic, expected HST1"));
    }
    let ndim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if !(ndim == 2 || ndim == 3) {
        return Err(fail("ndim must be 2 or 3"));
    }
    let header_len = 8 + 4 * ndim + 1;
    if bytes.len() < header_len {
        return Err(fail("truncated header"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 8 + 4 * i;
        let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        if d == 0 {
            return Err(fail("zero-sized dimension"));
        }
        dims.push(d);
    }
    let dtype = Dtype::from_code(bytes[header_len - 1])
        .ok_or_else(|| fail("unknown dtype code"))?;
    let count: usize = dims.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() != count * dtype.size() {
        return Err(fail("payload length does not match dims and dtype"));
    }
    let data = match dtype {
        Dtype::U8 => TensorData::U8(payload.to_vec()),
        Dtype::U16 => TensorData::U16(
            payload
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U32 => TensorData::U32(
            payload
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(Tensor { dims, data })
}

fn write_bytes(path: &Path, dims: &[usize], dtype: Dtype, payload: &[u8]) -> CmdResult<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * dims.len() + 1 + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    bytes.push(dtype as u8);
    bytes.extend_from_slice(payload);
    fs::write(path, bytes).map_err(|e| CmdError::io(path.display(), e))
}

fn raster_dims<T: Copy>(raster: &Raster2D<T>) -> Vec<usize> {
    if raster.channels() == 1 {
        vec![raster.height(), raster.width()]
    } else {
        vec![raster.channels(), raster.height(), raster.width()]
    }
}

pub fn write_u8(path: &Path, raster: &Raster2D<u8>) -> CmdResult<()> {
    write_bytes(path, &raster_dims(raster), Dtype::U8, raster.data())
}

pub fn write_u32(path: &Path, raster: &Raster2D<u32>) -> CmdResult<()> {
    let payload: Vec<u8> = raster.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(path, &raster_dims(raster), Dtype::U32, &payload)
}

pub fn write_f64(path: &Path, raster: &Raster2D<f64>) -> CmdResult<()> {
    let payload: Vec<u8> = raster.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(path, &raster_dims(raster), Dtype::F64, &payload)
}

/// Reads a single-channel tensor of any unsigned dtype as instance labels.
pub fn read_labels(path: &Path) -> CmdResult<Raster2D<u32>> {
    let tensor = read_tensor(path)?;
    let (c, h, w) = tensor.shape();
    if c != 1 {
        return Err(CmdError::Data(format!(
            "{}: expected a single-channel label map, got {c} channels",
            path.display()
        )));
    }
    let data: Vec<u32> = match tensor.data {
        TensorData::U8(v) => v.into_iter().map(u32::from).collect(),
        TensorData::U16(v) => v.into_iter().map(u32::from).collect(),
        TensorData::U32(v) => v,
        _ => {
            return Err(CmdError::Data(format!(
                "{}: label maps must use an unsigned integer dtype",
                path.display()
            )))
        }
    };
    Ok(Raster2D::from_vec(h, w, 1, data).map_err(CmdError::from)?)
}

/// Reads a single-channel u8 tensor (layer maps).
pub fn read_u8_map(path: &Path) -> CmdResult<Raster2D<u8>> {
    let tensor = read_tensor(path)?;
    let (c, h, w) = tensor.shape();
    if c != 1 {
        return Err(CmdError::Data(format!(
            "{}: expected a single-channel map, got {c} channels",
            path.display()
        )));
    }
    match tensor.data {
        TensorData::U8(v) => Ok(Raster2D::from_vec(h, w, 1, v).map_err(CmdError::from)?),
        _ => Err(CmdError::Data(format!(
            "{}: expected dtype u8",
            path.display()
        ))),
    }
}

/// Reads a float tensor (f32 widened to f64) with the given channel count.
pub fn read_prob(path: &Path, channels: usize) -> CmdResult<Raster2D<f64>> {
    let tensor = read_tensor(path)?;
    let (c, h, w) = tensor.shape();
    if c != channels {
        return Err(CmdError::Data(format!(
            "{}: expected {channels} channels, got {c}",
            path.display()
        )));
    }
    match tensor.data {
        TensorData::F32(_) | TensorData::F64(_) => {}
        _ => {
            return Err(CmdError::Data(format!(
                "{}: expected a float dtype",
                path.display()
            )))
        }
    }
    let data = tensor.to_f64();
    Ok(Raster2D::from_vec(h, w, channels, data).map_err(CmdError::from)?)
}

/// Reads the two distance maps from a 2-channel float tensor
/// (channel 0 horizontal, channel 1 vertical).
pub fn read_hover(path: &Path) -> CmdResult<HoVerMaps> {
    let raster = read_prob(path, 2)?;
    let (h, w) = raster.extent();
    let horizontal = Raster2D::from_vec(h, w, 1, raster.channel(0).to_vec()).map_err(CmdError::from)?;
    let vertical = Raster2D::from_vec(h, w, 1, raster.channel(1).to_vec()).map_err(CmdError::from)?;
    Ok(HoVerMaps { horizontal, vertical })
}

pub fn write_hover(path: &Path, maps: &HoVerMaps) -> CmdResult<()> {
    let (h, w) = maps.extent();
    let mut data = Vec::with_capacity(2 * h * w);
    data.extend_from_slice(maps.horizontal.data());
    data.extend_from_slice(maps.vertical.data());
    let raster = Raster2D::from_vec(h, w, 2, data).map_err(CmdError::from)?;
    write_f64(path, &raster)
}
