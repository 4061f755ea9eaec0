//! Foundational 2-D raster types.
//!
//! Rasters are stored channel-major, then row-major within each channel:
//! `index = (channel * height + row) * width + col`. That layout matches the
//! on-disk tensor container used by the CLI, so file I/O is a straight copy.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

mod components;
mod morph;
mod otsu;
mod sobel;

pub use components::{connected_components, relabel, Connectivity};
pub use morph::{disk_offsets, morphology, remove_small, MorphOp, RemoveMode};
pub use otsu::otsu_threshold;
pub use sobel::{sobel, GradientAxis};

pub(crate) use sobel::sobel_adjoint;

/// Dense 2-D raster with one or more channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster2D<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster2D<T> {
    /// Raster of the given shape with every element set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidDimensions {
                height,
                width,
                channels,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        })
    }

    /// Wraps an existing channel-major buffer.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidDimensions {
                height,
                width,
                channels,
            });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                actual: data.len(),
                height,
                width,
                channels,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// (height, width).
    #[inline]
    pub fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        debug_assert!(channel < self.channels && row < self.height && col < self.width);
        (channel * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> T {
        self.data[self.index(channel, row, col)]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: T) {
        let i = self.index(channel, row, col);
        self.data[i] = value;
    }

    /// One channel as a `height * width` slice.
    pub fn channel(&self, channel: usize) -> &[T] {
        let n = self.pixels();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn channel_mut(&mut self, channel: usize) -> &mut [T] {
        let n = self.pixels();
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn same_extent<U: Copy>(&self, other: &Raster2D<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Errs with `ShapeMismatch` when extents differ.
    pub fn check_extent<U: Copy>(&self, other: &Raster2D<U>) -> Result<()> {
        if self.same_extent(other) {
            Ok(())
        } else {
            Err(Error::shape_mismatch(self.extent(), other.extent()))
        }
    }

    /// Elementwise conversion into a raster of another scalar type.
    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster2D<U> {
        Raster2D {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Single-channel raster with values restricted to {0, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    raster: Raster2D<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            raster: Raster2D::filled(height, width, 1, 0u8)?,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut mask = Self::zeros(height, width)?;
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    mask.set(r, c, true);
                }
            }
        }
        Ok(mask)
    }

    /// Validates that the raster is single-channel with values in {0, 1}.
    pub fn from_raster(raster: Raster2D<u8>) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: raster.channels(),
            });
        }
        if let Some(&bad) = raster.data().iter().find(|&&v| v > 1) {
            return Err(Error::NotBinary(bad));
        }
        Ok(Self { raster })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.raster.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.raster.width()
    }

    #[inline]
    pub fn extent(&self) -> (usize, usize) {
        self.raster.extent()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.raster.get(0, row, col) != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.raster.set(0, row, col, value as u8);
    }

    pub fn count_ones(&self) -> usize {
        self.raster.data().iter().filter(|&&v| v != 0).count()
    }

    pub fn raster(&self) -> &Raster2D<u8> {
        &self.raster
    }

    pub fn into_raster(self) -> Raster2D<u8> {
        self.raster
    }
}

/// Single-channel raster of non-negative instance labels; 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceLabelMap {
    raster: Raster2D<u32>,
}

impl InstanceLabelMap {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            raster: Raster2D::filled(height, width, 1, 0u32)?,
        })
    }

    pub fn from_raster(raster: Raster2D<u32>) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: raster.channels(),
            });
        }
        Ok(Self { raster })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.raster.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.raster.width()
    }

    #[inline]
    pub fn extent(&self) -> (usize, usize) {
        self.raster.extent()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.raster.get(0, row, col)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: u32) {
        self.raster.set(0, row, col, label);
    }

    /// Positive labels present in the map, ascending.
    pub fn labels(&self) -> BTreeSet<u32> {
        self.raster
            .data()
            .iter()
            .copied()
            .filter(|&l| l > 0)
            .collect()
    }

    /// Pixel count per positive label.
    pub fn areas(&self) -> BTreeMap<u32, usize> {
        let mut areas = BTreeMap::new();
        for &l in self.raster.data() {
            if l > 0 {
                *areas.entry(l).or_insert(0usize) += 1;
            }
        }
        areas
    }

    /// Unweighted mean of the pixel coordinates of one instance.
    pub fn centroid(&self, label: u32) -> Result<(f64, f64)> {
        if label == 0 {
            return Err(Error::UnknownLabel(0));
        }
        let mut count = 0u64;
        let (mut sum_r, mut sum_c) = (0u64, 0u64);
        for r in 0..self.height() {
            for c in 0..self.width() {
                if self.get(r, c) == label {
                    count += 1;
                    sum_r += r as u64;
                    sum_c += c as u64;
                }
            }
        }
        if count == 0 {
            return Err(Error::UnknownLabel(label));
        }
        Ok((sum_r as f64 / count as f64, sum_c as f64 / count as f64))
    }

    /// Centroids of every instance in a single pass.
    pub fn centroids(&self) -> BTreeMap<u32, (f64, f64)> {
        let mut acc: BTreeMap<u32, (u64, u64, u64)> = BTreeMap::new();
        for r in 0..self.height() {
            for c in 0..self.width() {
                let l = self.get(r, c);
                if l > 0 {
                    let e = acc.entry(l).or_insert((0, 0, 0));
                    e.0 += 1;
                    e.1 += r as u64;
                    e.2 += c as u64;
                }
            }
        }
        acc.into_iter()
            .map(|(l, (n, sr, sc))| (l, (sr as f64 / n as f64, sc as f64 / n as f64)))
            .collect()
    }

    /// Mask of all pixels with a positive label.
    pub fn foreground_mask(&self) -> BinaryMask {
        BinaryMask {
            raster: self.raster.map(|l| (l > 0) as u8),
        }
    }

    pub fn raster(&self) -> &Raster2D<u32> {
        &self.raster
    }

    pub fn into_raster(self) -> Raster2D<u32> {
        self.raster
    }
}
