use serde::{Deserialize, Serialize};

/// Uniform one-dimensional grid `x_j = start + j * step`, `j < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        UniformGrid { start, step, len }
    }

    /// `len` points centred on `center` with half-width `half_width`; the
    /// center is a grid node when `len` is even.
    pub fn centered(center: f64, half_width: f64, len: usize) -> Self {
        let step = 2.0 * half_width / len as f64;
        UniformGrid {
            start: center - half_width,
            step,
            len,
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        self.start + self.step * j as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.point(j)).collect()
    }

    pub fn end(&self) -> f64 {
        self.point(self.len.saturating_sub(1))
    }

    /// Riemann sum `Σ f_j * step`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.step
    }

    pub fn same_as(&self, other: &UniformGrid) -> bool {
        self.len == other.len
            && (self.start - other.start).abs() <= 1e-12 * (1.0 + self.start.abs())
            && (self.step - other.step).abs() <= 1e-12 * self.step.abs()
    }
}
