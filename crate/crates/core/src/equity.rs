//! Population-weighted Lorenz curve and Gini coefficient of accessibility.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EquityError {
    #[error("scores and populations differ in length ({scores} vs {populations})")]
    LengthMismatch { scores: usize, populations: usize },
    #[error("invalid value at index {index}: {value}")]
    InvalidValue { index: usize, value: f64 },
    #[error("total population is zero")]
    NoPopulation,
    #[error("every populated cell has zero accessibility")]
    NoAccessibility,
}

/// Cumulative population share `x` against cumulative accessibility share `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzPoint {
    pub x: f64,
    pub y: f64,
}

pub fn lorenz(scores: &[f64], populations: &[f64]) -> Result<Vec<LorenzPoint>, EquityError> {
    if scores.len() != populations.len() {
        return Err(EquityError::LengthMismatch { scores: scores.len(), populations: populations.len() });
    }
    for (index, &value) in scores.iter().chain(populations).enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(EquityError::InvalidValue { index: index % scores.len().max(1), value });
        }
    }
    let mut cells: Vec<(f64, f64)> =
        scores.iter().zip(populations).filter(|(_, &p)| p > 0.0).map(|(&a, &p)| (a, p)).collect();
    let total_pop: f64 = cells.iter().map(|c| c.1).sum();
    if total_pop <= 0.0 {
        return Err(EquityError::NoPopulation);
    }
    let total_mass: f64 = cells.iter().map(|(a, p)| a * p).sum();
    if total_mass <= 0.0 {
        return Err(EquityError::NoAccessibility);
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut curve = Vec::with_capacity(cells.len() + 1);
    curve.push(LorenzPoint { x: 0.0, y: 0.0 });
    let (mut pop, mut mass) = (0.0, 0.0);
    for (a, p) in cells {
        pop += p;
        mass += a * p;
        curve.push(LorenzPoint { x: pop / total_pop, y: mass / total_mass });
    }
    if let Some(last) = curve.last_mut() {
        *last = LorenzPoint { x: 1.0, y: 1.0 };
    }
    Ok(curve)
}

/// One minus twice the area under the Lorenz curve, by trapezoids.
pub fn gini_from_curve(curve: &[LorenzPoint]) -> f64 {
    let area2: f64 = curve.windows(2).map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y)).sum();
    (1.0 - area2).clamp(0.0, 1.0 - f64::EPSILON)
}

pub fn gini(scores: &[f64], populations: &[f64]) -> Result<f64, EquityError> {
    Ok(gini_from_curve(&lorenz(scores, populations)?))
}
