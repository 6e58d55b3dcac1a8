//! Loss formulas of the segmentation model, as plain numeric functions.
//!
//! `L = w_txt · L_txt + w_mask · L_mask` with
//! `L_mask = w_bce · BCE + w_dice · DICE`.

use serde::{Deserialize, Serialize};

use super::DatasetError;

const PROB_EPS: f64 = 1e-7;
const DICE_SMOOTH: f64 = 1.0;
const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub txt: f64,
    pub mask: f64,
    pub bce: f64,
    pub dice: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            txt: 1.0,
            mask: 1.0,
            bce: 2.0,
            dice: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let weights = [self.txt, self.mask, self.bce, self.dice];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(DatasetError::Weights("weights must be finite and nonnegative".into()));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(DatasetError::Weights("all weights are zero".into()));
        }
        Ok(())
    }
}

fn check_mask_inputs(pred: &[f64], target: &[bool]) -> Result<(), DatasetError> {
    if pred.len() != target.len() {
        return Err(DatasetError::LengthMismatch(pred.len(), target.len()));
    }
    if let Some(&bad) = pred.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(DatasetError::OutOfRange(bad));
    }
    Ok(())
}

/// Mean per-pixel binary cross-entropy with predictions clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce(pred: &[f64], target: &[bool]) -> Result<f64, DatasetError> {
    check_mask_inputs(pred, target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if t {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Smoothed soft DICE loss, `1 - (2·Σpt + 1) / (Σp + Σt + 1)`.
pub fn dice(pred: &[f64], target: &[bool]) -> Result<f64, DatasetError> {
    check_mask_inputs(pred, target)?;
    let (mut inter, mut sum_p, mut sum_t) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(target) {
        let t = if t { 1.0 } else { 0.0 };
        inter += p * t;
        sum_p += p;
        sum_t += t;
    }
    Ok(1.0 - (2.0 * inter + DICE_SMOOTH) / (sum_p + sum_t + DICE_SMOOTH))
}

/// `w_bce · BCE + w_dice · DICE`.
pub fn mask_loss(pred: &[f64], target: &[bool], config: &LossConfig) -> Result<f64, DatasetError> {
    config.validate()?;
    Ok(config.bce * bce(pred, target)? + config.dice * dice(pred, target)?)
}

/// Mean negative log-probability of each target token.
pub fn text_loss(distributions: &[Vec<f64>], targets: &[usize]) -> Result<f64, DatasetError> {
    if distributions.len() != targets.len() {
        return Err(DatasetError::LengthMismatch(distributions.len(), targets.len()));
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (position, (dist, &token)) in distributions.iter().zip(targets).enumerate() {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || dist.iter().any(|p| *p < 0.0) {
            return Err(DatasetError::InvalidDistribution(position, sum));
        }
        let p = *dist.get(token).ok_or(DatasetError::TokenOutOfRange {
            position,
            token,
            vocab: dist.len(),
        })?;
        total -= p.clamp(PROB_EPS, 1.0).ln();
    }
    Ok(total / targets.len() as f64)
}

pub fn total_loss(text: f64, mask: f64, config: &LossConfig) -> f64 {
    config.txt * text + config.mask * mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_mask_prediction() {
        let target = [true, false, false, true, false];
        let pred: Vec<f64> = target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        assert!(bce(&pred, &target).unwrap() <= 2e-7);
        assert!(dice(&pred, &target).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn uniform_half_is_ln2() {
        let target = [true, false, true, true];
        assert!((bce(&[0.5; 4], &target).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn text_loss_cases() {
        let one_hot = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(text_loss(&one_hot, &[1, 0]).unwrap(), 0.0);
        let v = 7;
        let uniform = vec![vec![1.0 / v as f64; v]; 3];
        assert!((text_loss(&uniform, &[0, 3, 6]).unwrap() - (v as f64).ln()).abs() < 1e-12);
        let two = vec![vec![0.5, 0.5], vec![0.25, 0.75]];
        let expected = (2f64.ln() + 4f64.ln()) / 2.0;
        assert!((text_loss(&two, &[0, 0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(bce(&[0.5], &[true, false]), Err(DatasetError::LengthMismatch(1, 2))));
        assert!(matches!(bce(&[1.5], &[true]), Err(DatasetError::OutOfRange(_))));
        assert!(matches!(
            text_loss(&[vec![0.5, 0.6]], &[0]),
            Err(DatasetError::InvalidDistribution(0, _))
        ));
        assert!(matches!(text_loss(&[vec![1.0]], &[]), Err(DatasetError::LengthMismatch(1, 0))));
        let zero = LossConfig {
            txt: 0.0,
            mask: 0.0,
            bce: 0.0,
            dice: 0.0,
        };
        assert!(mask_loss(&[0.5], &[true], &zero).is_err());
    }
}
