//! Special-function combinatorics and the closed-form Lipschitz–Killing
//! curvature catalog for model parameter spaces.
//!
//! Curvatures follow the Weyl normalization: for a set `M ⊂ ℝˡ` and small `ρ`,
//! `vol(Tube(M, ρ)) = Σᵢ ρ^{l−i} ω_{l−i} Lᵢ(M)`. `L₀` is the Euler
//! characteristic, `L_{N−1}` half the boundary measure and `L_N` the volume.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

use crate::error::{invalid, GkfError, Result};
use crate::quad;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

/// Standard Gaussian upper tail `Ψ(u) = P(Z ≥ u)`.
pub fn gauss_tail(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

/// Standard Gaussian density.
pub fn gauss_density(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

fn ln_unit_ball_volume(n: usize) -> f64 {
    0.5 * n as f64 * PI.ln() - ln_gamma(0.5 * n as f64 + 1.0)
}

/// Volume `ω_n = π^{n/2} / Γ(n/2 + 1)` of the unit ball in `ℝⁿ`.
pub fn unit_ball_volume(n: usize) -> f64 {
    if n > 64 {
        return ln_unit_ball_volume(n).exp();
    }
    let mut w = if n.is_multiple_of(2) { 1.0 } else { 2.0 };
    for m in (2 + n % 2..=n).step_by(2) {
        w *= 2.0 * PI / m as f64;
    }
    w
}

/// Surface measure `s_n = 2π^{n/2} / Γ(n/2)` of the unit sphere in `ℝⁿ`.
pub fn sphere_surface(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sphere_surface requires n >= 1"));
    }
    let h = 0.5 * n as f64;
    Ok((2.0_f64.ln() + h * PI.ln() - ln_gamma(h)).exp())
}

fn ln_flag_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) + ln_unit_ball_volume(n)
}

/// Flag coefficient `[n k] = [n]! / ([k]! [n−k]!)` with `[n]! = n! ω_n`.
pub fn flag_coeff(n: i64, k: i64) -> Result<f64> {
    if n < 0 || k < 0 || k > n {
        return Err(invalid(format!(
            "flag_coeff requires 0 <= k <= n, got n={n}, k={k}"
        )));
    }
    let (n, k) = (n as usize, k as usize);
    if k == 0 || k == n {
        return Ok(1.0);
    }
    Ok((ln_flag_factorial(n) - ln_flag_factorial(k) - ln_flag_factorial(n - k)).exp())
}

/// Mills ratio `Ψ(u)/φ(u)` by continued fraction, for large positive `u`.
fn mills_ratio(u: f64) -> f64 {
    // Lentz evaluation of 1/(u + 1/(u + 2/(u + 3/(u + ...)))).
    let tiny = 1e-300;
    let mut f = u;
    let mut c = u;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = u + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = u + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Probabilists' Hermite polynomial `H_n(u)`, extended to `n = −1` by
/// `H_{−1}(u) = √(2π) e^{u²/2} Ψ(u)`.
pub fn hermite(n: i64, u: f64) -> Result<f64> {
    match n {
        n if n < -1 => Err(invalid(format!("hermite order must be >= -1, got {n}"))),
        -1 => Ok(if u > 8.0 {
            mills_ratio(u)
        } else {
            (2.0 * PI).sqrt() * (0.5 * u * u).exp() * gauss_tail(u)
        }),
        0 => Ok(1.0),
        _ => {
            let (mut prev, mut cur) = (1.0, u);
            for m in 1..n {
                let next = u * cur - m as f64 * prev;
                prev = cur;
                cur = next;
            }
            Ok(cur)
        }
    }
}

/// Lipschitz–Killing curvatures `L_0..L_dim` of a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LkVector {
    dim: usize,
    values: Vec<f64>,
}

impl LkVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("an LK vector needs at least L_0"));
        }
        Ok(Self {
            dim: values.len() - 1,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `L_j`, zero above the dimension.
    pub fn get(&self, j: usize) -> f64 {
        self.values.get(j).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    /// A single point: `L = (1)`.
    Point,
    Rectangle {
        sides: Vec<f64>,
    },
    Ball {
        n: usize,
        radius: f64,
    },
    Sphere2 {
        radius: f64,
    },
    /// Geodesic cap of the unit 2-sphere, angular radius in `(0, π/2]`.
    Cap {
        angular_radius: f64,
    },
}

/// A model parameter space together with the homothety factor `λ₂` of the
/// metric induced on it by the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub kind: SpaceKind,
    pub metric_scale: f64,
}

impl SpaceDescriptor {
    pub fn new(kind: SpaceKind, metric_scale: f64) -> Result<Self> {
        let s = Self { kind, metric_scale };
        s.validate()?;
        Ok(s)
    }

    pub fn point() -> Self {
        Self {
            kind: SpaceKind::Point,
            metric_scale: 1.0,
        }
    }

    pub fn rectangle(sides: Vec<f64>, metric_scale: f64) -> Result<Self> {
        Self::new(SpaceKind::Rectangle { sides }, metric_scale)
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(SpaceKind::Sphere2 { radius }, 1.0)
    }

    pub fn cap(angular_radius: f64) -> Result<Self> {
        Self::new(SpaceKind::Cap { angular_radius }, 1.0)
    }

    pub fn with_metric_scale(mut self, metric_scale: f64) -> Result<Self> {
        self.metric_scale = metric_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.metric_scale) {
            return Err(invalid(format!(
                "metric scale must be positive, got {}",
                self.metric_scale
            )));
        }
        match &self.kind {
            SpaceKind::Point => Ok(()),
            SpaceKind::Rectangle { sides } => {
                if sides.is_empty() || !sides.iter().all(|&s| positive(s)) {
                    Err(invalid(format!(
                        "rectangle sides must be positive, got {sides:?}"
                    )))
                } else {
                    Ok(())
                }
            }
            SpaceKind::Ball { n, radius } => {
                if *n == 0 || !positive(*radius) {
                    Err(invalid("ball needs n >= 1 and a positive radius"))
                } else {
                    Ok(())
                }
            }
            SpaceKind::Sphere2 { radius } => {
                if positive(*radius) {
                    Ok(())
                } else {
                    Err(invalid("sphere radius must be positive"))
                }
            }
            SpaceKind::Cap { angular_radius } => {
                if positive(*angular_radius) && *angular_radius <= PI / 2.0 + 1e-12 {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "cap angular radius must lie in (0, pi/2], got {angular_radius}"
                    )))
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SpaceKind::Point => 0,
            SpaceKind::Rectangle { sides } => sides.len(),
            SpaceKind::Ball { n, .. } => *n,
            SpaceKind::Sphere2 { .. } | SpaceKind::Cap { .. } => 2,
        }
    }
}

/// Elementary symmetric polynomials `e_0..e_n` of `xs`.
fn elementary_symmetric(xs: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; xs.len() + 1];
    e[0] = 1.0;
    for (m, &x) in xs.iter().enumerate() {
        for j in (1..=m + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Volume of the Euclidean `ρ`-tube in `ℝ³` around a geodesic cap of the unit
/// sphere with angular radius `alpha ≤ π/2`, for `ρ < 1`.
///
/// The shell over the cap is exact; the part whose nearest point is on the
/// boundary circle is integrated by Gauss–Legendre in the meridian angle.
pub fn cap_tube_volume(alpha: f64, rho: f64) -> f64 {
    let shell = 2.0 * PI * (1.0 - alpha.cos()) * ((1.0 + rho).powi(3) - (1.0 - rho).powi(3)) / 3.0;
    if rho == 0.0 {
        return shell;
    }
    // φ = θ − α ∈ [0, asin ρ]; substitute sin φ = ρ sin t so the radial chord
    // half-width sqrt(ρ² − sin²φ) becomes ρ cos t.
    let rim = quad::integrate(
        |t| {
            let sin_phi = rho * t.sin();
            let cos_phi = (1.0 - sin_phi * sin_phi).sqrt();
            let half = rho * t.cos();
            let (lo, hi) = (cos_phi - half, cos_phi + half);
            let theta = alpha + sin_phi.asin();
            let dphi_dt = rho * t.cos() / cos_phi;
            2.0 * PI * theta.sin() * (hi.powi(3) - lo.powi(3)) / 3.0 * dphi_dt
        },
        0.0,
        PI / 2.0,
        64,
    );
    shell + rim
}

/// Recovers `L_0..L_dim` of a set in `ℝˡ` by least-squares matching of the
/// Weyl polynomial to tube volumes measured at the radii `rhos`.
pub fn calibrate_lk_from_tube<F: Fn(f64) -> f64>(
    dim: usize,
    ambient: usize,
    rhos: &[f64],
    tube_volume: F,
) -> Result<LkVector> {
    if ambient < dim {
        return Err(invalid("ambient dimension below set dimension"));
    }
    if rhos.len() < dim + 1 {
        return Err(invalid("need at least dim + 1 tube radii"));
    }
    let design = DMatrix::from_fn(rhos.len(), dim + 1, |r, i| {
        rhos[r].powi((ambient - i) as i32) * unit_ball_volume(ambient - i)
    });
    let rhs = DVector::from_iterator(rhos.len(), rhos.iter().map(|&r| tube_volume(r)));
    let solution = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| GkfError::InvalidArgument(format!("tube calibration failed: {e}")))?;
    LkVector::new(solution.iter().copied().collect())
}

const CAP_CALIBRATION_RADII: [f64; 6] = [0.02, 0.04, 0.06, 0.08, 0.10, 0.12];

/// LK curvatures of a model space under `metric_scale × (standard metric)`.
pub fn lk_model_space(space: &SpaceDescriptor) -> Result<LkVector> {
    space.validate()?;
    let standard = match &space.kind {
        SpaceKind::Point => vec![1.0],
        SpaceKind::Rectangle { sides } => elementary_symmetric(sides),
        SpaceKind::Ball { n, radius } => (0..=*n)
            .map(|j| {
                (ln_binomial(*n, j) + j as f64 * radius.ln() + ln_unit_ball_volume(*n)
                    - ln_unit_ball_volume(n - j))
                .exp()
            })
            .collect(),
        SpaceKind::Sphere2 { radius } => vec![2.0, 0.0, 4.0 * PI * radius * radius],
        SpaceKind::Cap { angular_radius } => {
            let alpha = *angular_radius;
            let fitted = calibrate_lk_from_tube(2, 3, &CAP_CALIBRATION_RADII, |r| {
                cap_tube_volume(alpha, r)
            })?;
            vec![1.0, fitted.get(1), 2.0 * PI * (1.0 - alpha.cos())]
        }
    };
    let scale = space.metric_scale;
    LkVector::new(
        standard
            .iter()
            .enumerate()
            .map(|(j, &l)| l * scale.powf(0.5 * j as f64))
            .collect(),
    )
}

fn kappa_coeff(i: usize, n: usize) -> f64 {
    (1..=n).fold(1.0, |c, m| {
        let top = (i + 2 * m) as f64;
        c * top * (top - 1.0) / (4.0 * PI * m as f64)
    })
}

fn kappa_convert(lk: &LkVector, kappa: f64, sign: f64) -> LkVector {
    let dim = lk.dim();
    let values = (0..=dim)
        .map(|i| {
            (0..=(dim - i) / 2)
                .map(|n| (sign * kappa).powi(n as i32) * kappa_coeff(i, n) * lk.get(i + 2 * n))
                .sum()
        })
        .collect();
    LkVector { dim, values }
}

/// Extended curvatures `L_i^κ = Σ_n (−κ)ⁿ (i+2n)! / ((4π)ⁿ n! i!) L_{i+2n}`.
pub fn to_kappa(lk: &LkVector, kappa: f64) -> LkVector {
    kappa_convert(lk, kappa, -1.0)
}

/// Inverse of [`to_kappa`].
pub fn from_kappa(lk_kappa: &LkVector, kappa: f64) -> LkVector {
    kappa_convert(lk_kappa, kappa, 1.0)
}

/// Weyl tube polynomial `Σᵢ ρ^{l−i} ω_{l−i} Lᵢ`.
pub fn tube_volume_euclid(lk: &LkVector, ambient_dim: usize, rho: f64) -> Result<f64> {
    if ambient_dim < lk.dim() {
        return Err(invalid(format!(
            "ambient dimension {ambient_dim} is below the set dimension {}",
            lk.dim()
        )));
    }
    if !(rho >= 0.0) {
        return Err(invalid("tube radius must be nonnegative"));
    }
    Ok(lk
        .values()
        .iter()
        .enumerate()
        .map(|(i, &l)| rho.powi((ambient_dim - i) as i32) * unit_ball_volume(ambient_dim - i) * l)
        .sum())
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn kappa_roundtrip(values in proptest::collection::vec(-10.0f64..10.0, 1..=7),
                           kappa in prop_oneof![Just(-2.0), Just(0.5), Just(1.0), Just(5.0)]) {
            let x = LkVector::new(values).unwrap();
            let back = from_kappa(&to_kappa(&x, kappa), kappa);
            let scale = x.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for j in 0..=x.dim() {
                prop_assert!((back.get(j) - x.get(j)).abs() / scale < 1e-10);
            }
            prop_assert_eq!(to_kappa(&x, kappa).get(x.dim()), x.get(x.dim()));
        }
    }
}
