use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, GridMap, Result};

/// Channel-major (C, H, W) stack of feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Empty);
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidParameter("tensor data length mismatch"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    /// Stacks equally sized grids as channels.
    pub fn from_channels(maps: &[GridMap]) -> Result<Self> {
        let first = maps.first().ok_or(Error::Empty)?;
        let mut data = Vec::with_capacity(maps.len() * first.len());
        for m in maps {
            first.check_same_shape(m)?;
            data.extend_from_slice(m.values());
        }
        Ok(Tensor {
            channels: maps.len(),
            height: first.height(),
            width: first.width(),
            data,
        })
    }

    /// Fails with [`Error::NonFinite`] if the plane holds NaN or infinity.
    pub fn channel(&self, c: usize) -> Result<GridMap> {
        let n = self.height * self.width;
        GridMap::new(self.height, self.width, self.data[c * n..(c + 1) * n].to_vec())
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub(crate) fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub(crate) fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}
