//! Dense 2-D containers shared by every module.
//!
//! All grids are row-major with the origin at the top-left pixel.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on `sum == 1` accepted by [`PixelDistribution::new`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Dense scalar field over image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GridMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Empty);
        }
        if values.len() != height * width {
            return Err(Error::InvalidParameter("values.len() != height * width"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(GridMap {
            height,
            width,
            values,
        })
    }

    /// Builds a grid from a pixel function. Panics on zero dimensions or
    /// non-finite output, both of which are programming errors here.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                assert!(v.is_finite(), "non-finite grid value at ({r}, {c})");
                values.push(v);
            }
        }
        GridMap {
            height,
            width,
            values,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        assert!(value.is_finite());
        GridMap {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        GridMap {
            height,
            width,
            values,
        }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false for a constructed grid; present for API symmetry.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value.is_finite());
        self.values[row * self.width + col] = value;
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Elementwise transform; the closure must return finite values.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> GridMap {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        assert!(values.iter().all(|v| v.is_finite()), "map produced non-finite value");
        GridMap::from_raw(self.height, self.width, values)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Row-major index of the first maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub(crate) fn check_same_shape(&self, other: &GridMap) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

/// A grid whose values are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelDistribution {
    grid: GridMap,
}

impl PixelDistribution {
    /// Validates non-negativity and unit mass (within [`DISTRIBUTION_TOLERANCE`]).
    pub fn new(grid: GridMap) -> Result<Self> {
        let min = grid.min();
        let sum = grid.sum();
        if min < 0.0 || (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::NotADistribution { sum, min });
        }
        Ok(PixelDistribution { grid })
    }

    /// Divides a non-negative grid by its total mass.
    pub fn normalized(grid: GridMap) -> Result<Self> {
        let min = grid.min();
        let sum = grid.sum();
        if min < 0.0 || sum <= 0.0 {
            return Err(Error::NotADistribution { sum, min });
        }
        let (h, w) = grid.shape();
        let values = grid.into_values().into_iter().map(|v| v / sum).collect();
        Ok(PixelDistribution {
            grid: GridMap::from_raw(h, w, values),
        })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        let n = (height * width) as f64;
        PixelDistribution {
            grid: GridMap::filled(height, width, 1.0 / n),
        }
    }

    pub(crate) fn from_raw(grid: GridMap) -> Self {
        PixelDistribution { grid }
    }

    #[inline]
    pub fn grid(&self) -> &GridMap {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        self.grid.values()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn into_grid(self) -> GridMap {
        self.grid
    }
}

/// Pixel fixations for one image. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationSet {
    points: Vec<(usize, usize)>,
    height: usize,
    width: usize,
}

impl FixationSet {
    pub fn new(height: usize, width: usize, points: Vec<(usize, usize)>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Empty);
        }
        if let Some(&(row, col)) = points.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::OutOfBounds {
                row,
                col,
                height,
                width,
            });
        }
        Ok(FixationSet {
            points,
            height,
            width,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, Vec::new())
    }

    #[inline]
    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
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
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Row-major pixel indices of the fixations.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(move |&(r, c)| r * self.width + c)
    }

    pub(crate) fn check_grid(&self, grid: &GridMap) -> Result<()> {
        if grid.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: grid.shape(),
            });
        }
        Ok(())
    }
}
