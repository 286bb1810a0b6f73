//! Expected Lipschitz–Killing curvatures of excursion sets:
//!
//! `E{L_i(M ∩ y⁻¹D)} = Σ_j [i+j j] (2π)^{−j/2} L_{i+j}(M) M_j^γ(D)`
//!
//! plus the composite (χ²) variant and the Euler characteristic tail
//! approximation built on it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GkfError, Result};
use crate::geomcore::{flag_coeff, lk_model_space, LkVector, SpaceDescriptor};
use crate::gmf::{gmf_ball_complement, gmf_halfline, GmfVector};

/// Covariance of one unit-variance component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel {
    /// `C(h) = exp(−|h|² / (2ℓ²))`.
    Gaussian { length_scale: f64 },
    /// `C(s, t) = ⟨s, t⟩` on the unit sphere.
    CanonicalSphere,
    /// `C(h) = exp(−|h| / ℓ)`; not differentiable at the origin.
    Exponential { length_scale: f64 },
}

/// `λ₂ = −C''(0)`: the induced metric is `λ₂ ×` the standard one.
pub fn induced_metric_scale(covariance: &CovarianceModel) -> Result<f64> {
    match *covariance {
        CovarianceModel::Gaussian { length_scale } if length_scale > 0.0 => {
            Ok(1.0 / (length_scale * length_scale))
        }
        CovarianceModel::Gaussian { length_scale } => Err(invalid(format!(
            "length scale must be positive, got {length_scale}"
        ))),
        CovarianceModel::CanonicalSphere => Ok(1.0),
        CovarianceModel::Exponential { .. } => Err(GkfError::Unsupported(
            "exponential covariance has no second spectral moment (paths are not C²)".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkfPrediction {
    pub i: usize,
    pub value: f64,
    /// Summand `j` of the finite sum.
    pub terms: Vec<f64>,
    pub lk: LkVector,
    pub gmf: GmfVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

pub fn expected_lk(i: usize, lk_m: &LkVector, gmf_d: &GmfVector) -> Result<GkfPrediction> {
    let dim = lk_m.dim();
    if i > dim {
        return Err(invalid(format!(
            "curvature order {i} exceeds dim M = {dim}"
        )));
    }
    let needed = dim - i;
    if gmf_d.values.len() < needed + 1 {
        return Err(invalid(format!(
            "GMF vector covers j <= {} but order {i} on a {dim}-dimensional space needs j <= {needed}",
            gmf_d.values.len() - 1
        )));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let terms = (0..=needed)
        .map(|j| {
            let flag = flag_coeff((i + j) as i64, j as i64)?;
            Ok(flag * two_pi.powf(-0.5 * j as f64) * lk_m.get(i + j) * gmf_d.values[j])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GkfPrediction {
        i,
        value: terms.iter().sum(),
        terms,
        lk: lk_m.clone(),
        gmf: gmf_d.clone(),
        space: None,
        domain: None,
    })
}

fn halfline_gmf(dim: usize, u: f64) -> GmfVector {
    GmfVector::exact(1, (0..=dim).map(|j| gmf_halfline(j, u)).collect())
}

/// Expected Euler characteristic of `{t ∈ M : y(t) ≥ u}` for a real field.
pub fn expected_ec(space: &SpaceDescriptor, u: f64) -> Result<GkfPrediction> {
    let lk = lk_model_space(space)?;
    let mut p = expected_lk(0, &lk, &halfline_gmf(lk.dim(), u))?;
    p.space = Some(space.clone());
    p.domain = Some(format!("halfline(u={u})"));
    Ok(p)
}

pub fn expected_ec_curve(space: &SpaceDescriptor, u_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let lk = lk_model_space(space)?;
    u_grid
        .iter()
        .map(|&u| Ok((u, expected_lk(0, &lk, &halfline_gmf(lk.dim(), u))?.value)))
        .collect()
}

/// Functions `F: ℝᵏ → ℝ` for which `F⁻¹[u, ∞)` is a supported domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composite {
    /// `F(y) = Σ yᵢ²`, the χ²_k field.
    SumOfSquares,
}

pub fn expected_lk_composite(
    i: usize,
    space: &SpaceDescriptor,
    k: usize,
    f: Composite,
    u: f64,
) -> Result<GkfPrediction> {
    match f {
        Composite::SumOfSquares => {
            if !(u > 0.0) {
                return Err(invalid(format!(
                    "sum-of-squares threshold must be positive, got {u}"
                )));
            }
            let lk = lk_model_space(space)?;
            let radius = u.sqrt();
            let values = (0..=lk.dim())
                .map(|j| gmf_ball_complement(k, radius, j))
                .collect::<Result<Vec<_>>>()?;
            let mut p = expected_lk(i, &lk, &GmfVector::exact(k, values))?;
            p.space = Some(space.clone());
            p.domain = Some(format!("ballcomp(k={k},u={radius})"));
            Ok(p)
        }
    }
}

/// `P{sup_M f ≥ u} ≈ E{χ(A_u)}`; meaningful for large `u` only.
pub fn ec_heuristic_tail(space: &SpaceDescriptor, u: f64) -> Result<f64> {
    Ok(expected_ec(space, u)?.value)
}

/// Threshold `u` at which the heuristic tail equals `target`, searched on the
/// decreasing branch above the curve's last sign change.
pub fn threshold_for_tail(space: &SpaceDescriptor, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target tail probability must lie in (0, 1)"));
    }
    let f = |u: f64| ec_heuristic_tail(space, u);
    let mut hi = 40.0;
    let mut lo = hi;
    while f(lo)? < target {
        lo -= 0.05;
        if lo < -10.0 {
            return Err(invalid(format!("no threshold reaches tail {target}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomcore::{gauss_tail, SpaceKind};
    use std::f64::consts::PI;

    fn rect(sides: &[f64]) -> SpaceDescriptor {
        SpaceDescriptor::rectangle(sides.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn metric_scales() {
        let g = |l| induced_metric_scale(&CovarianceModel::Gaussian { length_scale: l }).unwrap();
        assert_eq!(g(1.0), 1.0);
        assert_eq!(g(2.0), 0.25);
        assert_eq!(
            induced_metric_scale(&CovarianceModel::CanonicalSphere).unwrap(),
            1.0
        );
        assert!(induced_metric_scale(&CovarianceModel::Exponential { length_scale: 1.0 }).is_err());
        assert!(induced_metric_scale(&CovarianceModel::Gaussian { length_scale: 0.0 }).is_err());
    }

    #[test]
    fn metric_scale_matches_numerical_second_derivative() {
        // −C''(0) by central differences on the covariance itself.
        for ell in [0.5, 1.0, 2.0] {
            let c = |h: f64| (-h * h / (2.0 * ell * ell)).exp();
            let h = 1e-4;
            let fd = -(c(h) - 2.0 * c(0.0) + c(-h)) / (h * h);
            let exact =
                induced_metric_scale(&CovarianceModel::Gaussian { length_scale: ell }).unwrap();
            assert!((fd - exact).abs() < 1e-6);
        }
        let cos = |h: f64| h.cos();
        let h = 1e-4;
        assert!((-(cos(h) - 2.0 + cos(-h)) / (h * h) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn full_space_returns_the_space_curvatures() {
        let lk = lk_model_space(&rect(&[3.0, 4.0])).unwrap();
        let full = GmfVector::exact(1, vec![1.0, 0.0, 0.0]);
        for i in 0..=2 {
            assert_eq!(expected_lk(i, &lk, &full).unwrap().value, lk.get(i));
        }
    }

    #[test]
    fn point_and_interval() {
        let p = expected_ec(&SpaceDescriptor::point(), 1.3).unwrap();
        assert_eq!(p.value, gauss_tail(1.3));
        let t = 7.0;
        for u in [-1.0, 0.0, 2.0] {
            let v = expected_ec(&rect(&[t]), u).unwrap().value;
            let rice = gauss_tail(u) + t / (2.0 * PI) * (-0.5 * u * u).exp();
            assert!((v - rice).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_curve() {
        let s = SpaceDescriptor::sphere(1.0).unwrap();
        for u in [-1.0, 0.5, 1.0, 2.0] {
            let v = expected_ec(&s, u).unwrap().value;
            let exact = 2.0 * gauss_tail(u) + (2.0 / PI).sqrt() * u * (-0.5 * u * u).exp();
            assert!((v - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn curve_limits() {
        for space in [
            rect(&[10.0, 10.0]),
            SpaceDescriptor::sphere(1.0).unwrap(),
            rect(&[2.0, 3.0, 1.0]),
        ] {
            let lk = lk_model_space(&space).unwrap();
            let c = expected_ec_curve(&space, &[-8.0, 8.0]).unwrap();
            assert!((c[0].1 - lk.get(0)).abs() < 1e-6);
            assert!(c[1].1.abs() < 1e-6);
        }
    }

    #[test]
    fn top_order_keeps_only_the_volume_term() {
        let space = rect(&[2.0, 5.0]);
        let lk = lk_model_space(&space).unwrap();
        let g = GmfVector::exact(1, vec![gmf_halfline(0, 0.4)]);
        let p = expected_lk(2, &lk, &g).unwrap();
        assert_eq!(p.terms.len(), 1);
        assert_eq!(p.value, 10.0 * gauss_tail(0.4));
    }

    #[test]
    fn i_zero_row_has_unit_flags_and_sum_matches_terms() {
        for j in 0..10 {
            assert_eq!(flag_coeff(j, j).unwrap(), 1.0);
        }
        let p = expected_ec(&rect(&[3.0, 4.0, 5.0]), 1.1).unwrap();
        let s: f64 = p.terms.iter().sum();
        assert!((p.value - s).abs() <= 1e-12 * s.abs());
    }

    #[test]
    fn linear_in_both_arguments() {
        let a = LkVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let b = LkVector::new(vec![-0.5, 4.0, 1.5]).unwrap();
        let g = GmfVector::exact(1, vec![0.3, 0.1, -0.2]);
        let h = GmfVector::exact(1, vec![0.6, -0.4, 0.05]);
        let (alpha, beta) = (1.7, -0.3);
        let ab = LkVector::new(
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        )
        .unwrap();
        let gh = GmfVector::exact(
            1,
            g.values
                .iter()
                .zip(&h.values)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        );
        for i in 0..=2 {
            let lhs = expected_lk(i, &ab, &g).unwrap().value;
            let rhs = alpha * expected_lk(i, &a, &g).unwrap().value
                + beta * expected_lk(i, &b, &g).unwrap().value;
            assert!((lhs - rhs).abs() < 1e-12);
            let lhs = expected_lk(i, &a, &gh).unwrap().value;
            let rhs = alpha * expected_lk(i, &a, &g).unwrap().value
                + beta * expected_lk(i, &a, &h).unwrap().value;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn short_gmf_rejected() {
        let lk = LkVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(expected_lk(0, &lk, &GmfVector::exact(1, vec![0.5, 0.1])).is_err());
        assert!(expected_lk(3, &lk, &GmfVector::exact(1, vec![0.5])).is_err());
    }

    #[test]
    fn composite_chi_square() {
        let u = 2.2;
        let point =
            expected_lk_composite(0, &SpaceDescriptor::point(), 2, Composite::SumOfSquares, u)
                .unwrap();
        assert!((point.value - (-u / 2.0).exp()).abs() < 1e-14);
        // k = 1 is the two-sided Gaussian threshold |y| ≥ √u.
        let space = rect(&[4.0, 3.0]);
        let lk = lk_model_space(&space).unwrap();
        let r = u.sqrt();
        let two_sided = GmfVector::exact(1, (0..=2).map(|j| 2.0 * gmf_halfline(j, r)).collect());
        let reference = expected_lk(0, &lk, &two_sided).unwrap().value;
        let got = expected_lk_composite(0, &space, 1, Composite::SumOfSquares, u)
            .unwrap()
            .value;
        assert!((got - reference).abs() < 1e-12);
        assert!(expected_lk_composite(0, &space, 2, Composite::SumOfSquares, 0.0).is_err());
    }

    #[test]
    fn heuristic_tail() {
        assert_eq!(
            ec_heuristic_tail(&SpaceDescriptor::point(), 2.0).unwrap(),
            gauss_tail(2.0)
        );
        let space = rect(&[10.0, 10.0]);
        let u = threshold_for_tail(&space, 0.05).unwrap();
        assert!((ec_heuristic_tail(&space, u).unwrap() - 0.05).abs() < 1e-10);
        let mut last = f64::INFINITY;
        for step in 0..40 {
            let v = ec_heuristic_tail(&space, u + 0.1 * step as f64).unwrap();
            assert!(v < last && v >= 0.0);
            last = v;
        }
    }

    #[test]
    fn ball_space_prediction_is_finite() {
        let b = SpaceDescriptor::new(SpaceKind::Ball { n: 3, radius: 2.0 }, 1.0).unwrap();
        assert!(expected_ec(&b, 1.0).unwrap().value.is_finite());
    }
}
