use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Regular lattice over an axis-aligned box. `dims` counts cells per axis, so
/// axis `a` carries `dims[a] + 1` nodes spanning `dims[a] * spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, spacing: f64) -> Result<Self> {
        let origin = vec![0.0; dims.len()];
        Self::with_origin(dims, spacing, origin)
    }

    pub fn with_origin(dims: Vec<usize>, spacing: f64, origin: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(invalid(format!(
                "grids must be 1-, 2- or 3-dimensional, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(invalid(format!(
                "every axis needs at least 2 cells, got {dims:?}"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(invalid(format!("spacing must be positive, got {spacing}")));
        }
        if origin.len() != dims.len() {
            return Err(invalid("origin must have one coordinate per axis"));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Grid whose node lattice spans exactly `[0, sides[a]]` on each axis.
    pub fn covering(sides: &[f64], spacing: f64) -> Result<Self> {
        let dims = sides
            .iter()
            .map(|&s| {
                let cells = (s / spacing).round();
                if cells < 1.0 || ((cells * spacing - s).abs() > 1e-9 * s.max(1.0)) {
                    Err(invalid(format!(
                        "side {s} is not a multiple of spacing {spacing}"
                    )))
                } else {
                    Ok(cells as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, spacing)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Nodes per axis.
    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d + 1).collect()
    }

    pub fn node_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Row-major strides (axis 0 slowest).
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape())
    }

    pub fn sides(&self) -> Vec<f64> {
        self.dims.iter().map(|&d| d as f64 * self.spacing).collect()
    }

    pub fn coords(&self, mut index: usize) -> Vec<f64> {
        let shape = self.shape();
        let mut out = vec![0.0; shape.len()];
        for a in (0..shape.len()).rev() {
            out[a] = self.origin[a] + (index % shape[a]) as f64 * self.spacing;
            index /= shape[a];
        }
        out
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    strides
}
