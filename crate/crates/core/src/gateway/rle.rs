//! Binary run-length coding for masks.
//!
//! Pixels are visited row by row, left to right. The output alternates
//! false-runs and true-runs and always starts with a (possibly empty) false
//! run, so `[0, 4]` is four set pixels and `[4]` is four clear ones.

use thiserror::Error;

use crate::mask::Mask;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("RLE covers {got} pixels but the mask has {expected}")]
pub struct RleLengthError {
    pub expected: u64,
    pub got: u64,
}

pub fn encode(mask: &Mask) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut length = 0u64;
    for &bit in mask.bits() {
        if bit == current {
            length += 1;
        } else {
            runs.push(length);
            current = bit;
            length = 1;
        }
    }
    runs.push(length);
    runs
}

pub fn decode(runs: &[u64], width: u32, height: u32) -> Result<Mask, RleLengthError> {
    let expected = width as u64 * height as u64;
    let got = runs
        .iter()
        .try_fold(0u64, |acc, &r| acc.checked_add(r))
        .unwrap_or(u64::MAX);
    if got != expected {
        return Err(RleLengthError { expected, got });
    }
    let mut bits = Vec::with_capacity(expected as usize);
    for (i, &run) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
    }
    Ok(Mask::from_bits(width, height, bits).expect("length checked above"))
}
