//! Dense row-major H×W grids and the per-pixel containers built on them.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// A row-major `height × width` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::usage(format!(
                "grid data has {} elements, expected {}×{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&T> {
        if x < self.width && y < self.height {
            Some(&self.data[y * self.width + x])
        } else {
            None
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Usage error naming `what` unless the shapes match.
    pub fn ensure_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "{what}: shape {}×{} does not match {}×{}",
                other.width, other.height, self.width, self.height
            )))
        }
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (x, y): (usize, usize)) -> &T {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        debug_assert!(x < self.width && y < self.height);
        &mut self.data[y * self.width + x]
    }
}

/// Per-pixel validity flags.
pub type ValidityMask = Grid<bool>;

/// Per-pixel predicted uncertainty Σ (log-depth units).
pub type UncertaintyMap = Grid<f64>;

/// Linear RGB image with channels in `[0, 1]`.
pub type RgbImage = Grid<[f64; 3]>;

/// Metric z-depth with a validity mask.
///
/// Valid entries are finite and strictly positive; invalid entries may hold any
/// value and are ignored by every consumer.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub values: Grid<f64>,
    pub mask: ValidityMask,
}

impl DepthMap {
    /// Wraps raw values, marking non-finite and non-positive entries invalid.
    pub fn from_values(values: Grid<f64>) -> Self {
        let mask = values.map(|v| v.is_finite() && *v > 0.0);
        Self { values, mask }
    }

    /// Combines values with an external mask. Pixels flagged valid must hold positive finite depth.
    pub fn new(values: Grid<f64>, mask: ValidityMask) -> Result<Self> {
        values.ensure_shape(&mask, "depth mask")?;
        if let Some(i) = values
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .position(|(v, m)| *m && !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::domain(format!(
                "depth at pixel {i} is flagged valid but is {}",
                values.as_slice()[i]
            )));
        }
        Ok(Self { values, mask })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self::from_values(Grid::filled(width, height, depth))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.values.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.values.height()
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[(x, y)]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.as_slice().iter().filter(|m| **m).count()
    }

    /// Elementwise natural log; invalid pixels map to NaN.
    pub fn log_depth(&self) -> Grid<f64> {
        let data = self
            .values
            .as_slice()
            .iter()
            .zip(self.mask.as_slice())
            .map(|(v, m)| if *m { v.ln() } else { f64::NAN })
            .collect();
        Grid::from_vec(self.width(), self.height(), data).expect("shape preserved")
    }

    /// Elementwise reciprocal; invalid pixels map to NaN.
    pub fn inverse(&self) -> Grid<f64> {
        let data = self
            .values
            .as_slice()
            .iter()
            .zip(self.mask.as_slice())
            .map(|(v, m)| if *m { 1.0 / v } else { f64::NAN })
            .collect();
        Grid::from_vec(self.width(), self.height(), data).expect("shape preserved")
    }

    /// Multiplies valid depths by `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        let values = self
            .values
            .as_slice()
            .iter()
            .zip(self.mask.as_slice())
            .map(|(v, m)| if *m { v * k } else { *v })
            .collect();
        Self {
            values: Grid::from_vec(self.width(), self.height(), values).expect("shape preserved"),
            mask: self.mask.clone(),
        }
    }
}
