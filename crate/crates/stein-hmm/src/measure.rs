//! Per-state sampling measures on a cube.
//!
//! Each hidden state draws points from a two-cell piecewise-constant density
//! on `[0, side]^d`: the cube is split in half along the first axis and the
//! low half carries relative weight `w`, the high half `2 - w`, so the
//! density integrates to 1 and stays within `[min(w, 2-w), max(w, 2-w)]`
//! times the uniform density. This is the simplest family realizing a
//! two-sided density sandwich with exact inverse sampling.

use rand::Rng;
use thiserror::Error;

use crate::rng::Stream;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("low-cell weight {0} outside (0, 2)")]
    WeightOutOfRange(f64),
    #[error("state weight {weight} violates density bounds [{c_m}, {c_max}]")]
    DensityBoundViolated { weight: f64, c_m: f64, c_max: f64 },
    #[error("density bounds ({c_m}, {c_max}) must satisfy 0 < c_m <= c_max")]
    BadDensityBounds { c_m: f64, c_max: f64 },
}

/// Two-cell piecewise-constant densities on `[0, side]^d`, one per state.
#[derive(Debug, Clone)]
pub struct TwoCellMeasures {
    dimension: usize,
    side: f64,
    low_weights: Vec<f64>,
}

impl TwoCellMeasures {
    /// Build from per-state low-cell weights, checking that every implied
    /// density value lies within `[c_m, c_max]` relative to uniform.
    pub fn new(
        dimension: usize,
        side: f64,
        low_weights: Vec<f64>,
        c_m: f64,
        c_max: f64,
    ) -> Result<Self, MeasureError> {
        if !(c_m > 0.0 && c_m <= c_max) {
            return Err(MeasureError::BadDensityBounds { c_m, c_max });
        }
        for &w in &low_weights {
            if !(w > 0.0 && w < 2.0) {
                return Err(MeasureError::WeightOutOfRange(w));
            }
            for value in [w, 2.0 - w] {
                if value < c_m - 1e-12 || value > c_max + 1e-12 {
                    return Err(MeasureError::DensityBoundViolated { weight: value, c_m, c_max });
                }
            }
        }
        Ok(TwoCellMeasures { dimension, side, low_weights })
    }

    /// Uniform measure for every state.
    pub fn uniform(dimension: usize, side: f64, num_states: usize) -> Self {
        TwoCellMeasures { dimension, side, low_weights: vec![1.0; num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.low_weights.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Density at `point` relative to the uniform density on the cube.
    pub fn relative_density(&self, state: u32, point: &[f64]) -> f64 {
        let w = self.low_weights[state as usize];
        if point[0] < self.side / 2.0 {
            w
        } else {
            2.0 - w
        }
    }

    /// Probability that a draw from `state` lands in the low half-cell.
    pub fn low_cell_probability(&self, state: u32) -> f64 {
        self.low_weights[state as usize] / 2.0
    }

    /// Inverse-sample one point from the measure of `state` into `out`.
    pub fn sample_into(&self, state: u32, rng: &mut Stream, out: &mut [f64]) {
        let half = self.side / 2.0;
        let low = rng.random::<f64>() < self.low_cell_probability(state);
        out[0] = if low {
            rng.random::<f64>() * half
        } else {
            half + rng.random::<f64>() * half
        };
        for coord in out.iter_mut().take(self.dimension).skip(1) {
            *coord = rng.random::<f64>() * self.side;
        }
    }
}
