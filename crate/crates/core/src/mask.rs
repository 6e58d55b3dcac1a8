//! Row-major binary image masks.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("mask dimensions {a_width}x{a_height} do not match {b_width}x{b_height}")]
pub struct DimensionMismatch {
    pub a_width: u32,
    pub a_height: u32,
    pub b_width: u32,
    pub b_height: u32,
}

/// A `width × height` boolean buffer; pixel `(u, v)` is column `u` of row `v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    /// Returns `None` when `bits.len() != width * height`.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width as usize * height as usize).then_some(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[self.offset(u, v)]
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let i = self.offset(u, v);
        self.bits[i] = value;
    }

    fn offset(&self, u: u32, v: u32) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v as usize * self.width as usize + u as usize
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_false(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn check_same_dims(&self, other: &Mask) -> Result<(), DimensionMismatch> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            })
        }
    }

    /// In-place union with another mask of the same size.
    pub fn union_with(&mut self, other: &Mask) -> Result<(), DimensionMismatch> {
        self.check_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }
}
