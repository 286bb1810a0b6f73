use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::grid::{strides_of, GridSpec};
use super::mesh::{dot, SphereMesh};
use crate::error::{invalid, GkfError, Result};
use crate::rng::{self, Purpose};

/// Where a sample lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Grid(GridSpec),
    Sphere(Arc<SphereMesh>),
}

impl Support {
    pub fn node_count(&self) -> usize {
        match self {
            Support::Grid(g) => g.node_count(),
            Support::Sphere(m) => m.vertices.len(),
        }
    }
}

/// One realization of a `k`-component field; `values[c][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub support: Support,
    pub k: usize,
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

impl FieldSample {
    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.support {
            Support::Grid(g) => Some(g),
            Support::Sphere(_) => None,
        }
    }

    /// The `k`-vector at `node`.
    pub fn vector_at(&self, node: usize, out: &mut [f64]) {
        for (c, layer) in self.values.iter().enumerate() {
            out[c] = layer[node];
        }
    }

    pub fn negated(&self) -> Self {
        let mut s = self.clone();
        for layer in &mut s.values {
            for v in layer.iter_mut() {
                *v = -*v;
            }
        }
        s
    }

    /// Every `step`-th node along each axis of a grid sample: the same
    /// realization at a coarser resolution.
    pub fn subsample(&self, step: usize) -> Result<Self> {
        let grid = self
            .grid()
            .ok_or_else(|| invalid("only grid samples can be subsampled"))?;
        if step == 0 || grid.dims.iter().any(|d| d % step != 0) {
            return Err(invalid(format!(
                "step {step} does not divide grid dims {:?}",
                grid.dims
            )));
        }
        let coarse = GridSpec::with_origin(
            grid.dims.iter().map(|d| d / step).collect(),
            grid.spacing * step as f64,
            grid.origin.clone(),
        )?;
        let fine_strides = grid.strides();
        let shape = coarse.shape();
        let values = self
            .values
            .iter()
            .map(|layer| {
                (0..coarse.node_count())
                    .map(|idx| {
                        let mut rem = idx;
                        let mut fine = 0;
                        for a in (0..shape.len()).rev() {
                            fine += (rem % shape[a]) * step * fine_strides[a];
                            rem /= shape[a];
                        }
                        layer[fine]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            support: Support::Grid(coarse),
            k: self.k,
            values,
            seed: self.seed,
        })
    }
}

/// 1-D smoothing weights `w_m ∝ exp(−(m h)² / (2σ²))`, `σ = ℓ/√2`, `|m| ≤ pad`,
/// normalized to unit sum of squares so the field has unit variance.
fn kernel_weights(ell: f64, spacing: f64, pad: usize) -> Vec<f64> {
    let sigma2 = 0.5 * ell * ell;
    let w: Vec<f64> = (-(pad as i64)..=pad as i64)
        .map(|m| {
            let x = m as f64 * spacing;
            (-x * x / (2.0 * sigma2)).exp()
        })
        .collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.into_iter().map(|v| v / norm).collect()
}

/// Valid-mode correlation of `data` (row-major, `shape`) with `w` along `axis`.
fn convolve_axis(data: &[f64], shape: &[usize], axis: usize, w: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let taps = w.len();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = shape[axis] + 1 - taps;
    let in_strides = strides_of(shape);
    let out_strides = strides_of(&out_shape);
    let total: usize = out_shape.iter().product();
    let mut out = vec![0.0; total];
    let step = in_strides[axis];
    for (idx, o) in out.iter_mut().enumerate() {
        let mut base = 0;
        for a in 0..shape.len() {
            base += (idx / out_strides[a] % out_shape[a]) * in_strides[a];
        }
        let mut acc = 0.0;
        for (t, &wt) in w.iter().enumerate() {
            acc += wt * data[base + t * step];
        }
        *o = acc;
    }
    (out, out_shape)
}

/// Padding, in nodes, that puts the generation buffer at least `5ℓ` beyond
/// the grid on every side.
pub fn padding_nodes(ell: f64, spacing: f64) -> usize {
    (5.0 * ell / spacing).ceil() as usize
}

/// Draws `k` independent stationary Gaussian fields with covariance
/// `exp(−|h|²/(2ℓ²))` on `grid` by smoothing padded white noise.
pub fn simulate_field(grid: &GridSpec, ell: f64, k: usize, seed: u64) -> Result<FieldSample> {
    if k == 0 {
        return Err(invalid("need at least one component"));
    }
    if !(ell >= 3.0 * grid.spacing * (1.0 - 1e-12)) {
        return Err(GkfError::Resolution(format!(
            "length scale {ell} is below 3 x spacing ({}); the field would be under-resolved",
            3.0 * grid.spacing
        )));
    }
    let pad = padding_nodes(ell, grid.spacing);
    let w = kernel_weights(ell, grid.spacing, pad);
    let noise_shape: Vec<usize> = grid.shape().iter().map(|n| n + 2 * pad).collect();
    let noise_len: usize = noise_shape.iter().product();
    let values = (0..k)
        .map(|c| {
            let mut rng = rng::stream(seed, Purpose::Field, c as u64);
            let mut data: Vec<f64> = (0..noise_len).map(|_| rng.sample(StandardNormal)).collect();
            let mut shape = noise_shape.clone();
            for axis in 0..shape.len() {
                let (d, s) = convolve_axis(&data, &shape, axis, &w);
                data = d;
                shape = s;
            }
            data
        })
        .collect();
    Ok(FieldSample {
        support: Support::Grid(grid.clone()),
        k,
        values,
        seed,
    })
}

/// The canonical isotropic process `y_i(t) = ⟨ξ_i, t⟩`, `ξ_i ~ N(0, I₃)`.
pub fn canonical_sphere_process(
    mesh: &Arc<SphereMesh>,
    k: usize,
    seed: u64,
) -> Result<FieldSample> {
    if k == 0 {
        return Err(invalid("need at least one component"));
    }
    let values = (0..k)
        .map(|c| {
            let mut rng = rng::stream(seed, Purpose::Sphere, c as u64);
            let xi: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            mesh.vertices.iter().map(|v| dot(&xi, v)).collect()
        })
        .collect();
    Ok(FieldSample {
        support: Support::Sphere(Arc::clone(mesh)),
        k,
        values,
        seed,
    })
}

/// Orthonormalizes `m` by QR and fixes signs so `R` has a positive diagonal,
/// which makes the factorization unique and `Q` Haar-distributed when `m` is
/// Gaussian.
fn haar_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn sample_uniform_rotation_with(n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(invalid("rotation dimension must be >= 1"));
    }
    Ok(haar_columns(gaussian_matrix(n, n, rng)))
}

/// Haar-distributed element of `O(n)`.
pub fn sample_uniform_rotation(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_uniform_rotation_with(n, &mut rng::stream(seed, Purpose::Rotation, 0))
}

/// The projected process `y⁽ⁿ⁾(t) = (√n g t)_{1..k}` with `g` Haar on `O(n)` and
/// `t` zero-padded into `ℝⁿ`.
///
/// Only the top-left `k × 3` block of `g` is needed. The first `k` rows of a
/// Haar matrix are distributed as the transpose of its first `k` columns, which
/// is the sign-fixed thin QR of an `n × k` Gaussian matrix.
pub fn poincare_process(
    mesh: &Arc<SphereMesh>,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<FieldSample> {
    if k == 0 {
        return Err(invalid("need at least one component"));
    }
    if n < k {
        return Err(invalid(format!(
            "projection dimension n={n} is below k={k}"
        )));
    }
    if n < 3 {
        return Err(invalid(format!(
            "the unit 2-sphere embeds only for n >= 3, got {n}"
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Poincare, 0);
    let cols = haar_columns(gaussian_matrix(n, k, &mut rng));
    let scale = (n as f64).sqrt();
    let values = (0..k)
        .map(|c| {
            let row = [cols[(0, c)], cols[(1, c)], cols[(2, c)]];
            mesh.vertices.iter().map(|v| scale * dot(&row, v)).collect()
        })
        .collect();
    Ok(FieldSample {
        support: Support::Sphere(Arc::clone(mesh)),
        k,
        values,
        seed,
    })
}
