//! Gaussian Minkowski functionals `M_j^γ(D)`: the Taylor coefficients (times
//! `j!`) of `ρ ↦ γ_k(Tube(D, ρ))`.
//!
//! Closed forms cover half-lines, intervals, ball complements and the whole
//! space. Anything else goes through [`gmf_numeric`], which fits a polynomial
//! to Monte Carlo tube measures.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{invalid, GkfError, Result};
use crate::geomcore::{gauss_tail, hermite, ln_gamma};
use crate::rng::{self, Purpose};

pub type DistanceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type MembershipFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A caller-supplied domain: membership, Euclidean distance to the set, and a
/// declared lower bound on its reach.
#[derive(Clone)]
pub struct GenericDomain {
    pub label: String,
    pub membership: MembershipFn,
    pub distance: DistanceFn,
    pub reach: f64,
}

impl fmt::Debug for GenericDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericDomain")
            .field("label", &self.label)
            .field("reach", &self.reach)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum DomainKind {
    /// All of `ℝᵏ`.
    FullSpace,
    /// `[u, ∞) ⊂ ℝ`.
    HalfLine {
        u: f64,
    },
    /// `[a, b] ⊂ ℝ`; either end may be infinite.
    Interval {
        a: f64,
        b: f64,
    },
    /// `{x ∈ ℝᵏ : |x| ≥ u}`.
    BallComplement {
        u: f64,
    },
    /// Cartesian product of one-dimensional domains.
    Product(Vec<DomainDescriptor>),
    Generic(GenericDomain),
}

/// A hitting set `D ⊂ ℝᵏ`.
#[derive(Debug, Clone)]
pub struct DomainDescriptor {
    k: usize,
    kind: DomainKind,
}

impl DomainDescriptor {
    pub fn full_space(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("ambient dimension must be >= 1"));
        }
        Ok(Self {
            k,
            kind: DomainKind::FullSpace,
        })
    }

    pub fn half_line(u: f64) -> Self {
        Self {
            k: 1,
            kind: DomainKind::HalfLine { u },
        }
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(invalid(format!("interval requires a < b, got [{a}, {b}]")));
        }
        Ok(Self {
            k: 1,
            kind: DomainKind::Interval { a, b },
        })
    }

    pub fn ball_complement(k: usize, u: f64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("ambient dimension must be >= 1"));
        }
        if !(u > 0.0) || !u.is_finite() {
            return Err(invalid(format!(
                "ball complement radius must be positive, got {u}"
            )));
        }
        Ok(Self {
            k,
            kind: DomainKind::BallComplement { u },
        })
    }

    pub fn product(factors: Vec<DomainDescriptor>) -> Result<Self> {
        if factors.is_empty()
            || factors
                .iter()
                .any(|f| f.k != 1 || matches!(f.kind, DomainKind::Generic(_)))
        {
            return Err(invalid(
                "product factors must be one-dimensional closed-form domains",
            ));
        }
        Ok(Self {
            k: factors.len(),
            kind: DomainKind::Product(factors),
        })
    }

    /// Builds a generic domain, spot-checking that `distance` is nonnegative,
    /// vanishes on members and is 1-Lipschitz on random pairs.
    pub fn generic(
        k: usize,
        label: impl Into<String>,
        membership: MembershipFn,
        distance: DistanceFn,
        reach: f64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(invalid("ambient dimension must be >= 1"));
        }
        if !(reach > 0.0) {
            return Err(invalid("generic domains need a positive reach bound"));
        }
        let mut rng = rng::stream(0x5eed, Purpose::Tube, u64::MAX);
        let mut draw = |scale: f64| -> Vec<f64> {
            (0..k)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        for _ in 0..256 {
            let x = draw(2.0);
            let y = draw(2.0);
            let (dx, dy) = (distance(&x), distance(&y));
            if !(dx >= 0.0) || !(dy >= 0.0) {
                return Err(invalid(
                    "distance function returned a negative or NaN value",
                ));
            }
            if membership(&x) != (dx == 0.0) {
                return Err(invalid("distance function must vanish exactly on the set"));
            }
            let gap: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if (dx - dy).abs() > gap * (1.0 + 1e-9) + 1e-12 {
                return Err(invalid("distance function is not 1-Lipschitz"));
            }
        }
        Ok(Self {
            k,
            kind: DomainKind::Generic(GenericDomain {
                label: label.into(),
                membership,
                distance,
                reach,
            }),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::FullSpace => true,
            DomainKind::HalfLine { u } => x[0] >= *u,
            DomainKind::Interval { a, b } => x[0] >= *a && x[0] <= *b,
            DomainKind::BallComplement { u } => norm(x) >= *u,
            DomainKind::Product(fs) => fs
                .iter()
                .zip(x)
                .all(|(f, xi)| f.contains(std::slice::from_ref(xi))),
            DomainKind::Generic(g) => (g.membership)(x),
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::FullSpace => 0.0,
            DomainKind::HalfLine { u } => (u - x[0]).max(0.0),
            DomainKind::Interval { a, b } => (a - x[0]).max(x[0] - b).max(0.0),
            DomainKind::BallComplement { u } => (u - norm(x)).max(0.0),
            DomainKind::Product(fs) => fs
                .iter()
                .zip(x)
                .map(|(f, xi)| f.distance(std::slice::from_ref(xi)).powi(2))
                .sum::<f64>()
                .sqrt(),
            DomainKind::Generic(g) => (g.distance)(x),
        }
    }

    /// Largest tube radius for which the tube formula is trusted.
    pub fn reach(&self) -> f64 {
        match &self.kind {
            DomainKind::BallComplement { u } => *u,
            DomainKind::Generic(g) => g.reach,
            _ => f64::INFINITY,
        }
    }

    /// Short human-readable description, used in report echoes.
    pub fn describe(&self) -> String {
        match &self.kind {
            DomainKind::FullSpace => format!("fullspace(k={})", self.k),
            DomainKind::HalfLine { u } => format!("halfline(u={u})"),
            DomainKind::Interval { a, b } => format!("interval(a={a},b={b})"),
            DomainKind::BallComplement { u } => format!("ballcomp(k={},u={u})", self.k),
            DomainKind::Product(fs) => {
                let parts: Vec<_> = fs.iter().map(|f| f.describe()).collect();
                format!("product({})", parts.join("x"))
            }
            DomainKind::Generic(g) => {
                format!("generic({},k={},reach={})", g.label, self.k, g.reach)
            }
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `M_0..M_{j_max}` of a domain, optionally with Monte Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmfVector {
    pub k: usize,
    pub j_max: usize,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
}

impl GmfVector {
    pub fn exact(k: usize, values: Vec<f64>) -> Self {
        Self {
            k,
            j_max: values.len() - 1,
            values,
            errors: None,
        }
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        self.values.get(j).copied()
    }
}

/// `M_j^γ([u, ∞))`: `Ψ(u)` for `j = 0`, else `(2π)^{−1/2} H_{j−1}(u) e^{−u²/2}`.
pub fn gmf_halfline(j: usize, u: f64) -> f64 {
    if j == 0 {
        return gauss_tail(u);
    }
    if u.is_infinite() {
        return 0.0;
    }
    let h = hermite(j as i64 - 1, u).expect("order >= 0");
    h * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn poly_derivative_times_gauss(p: &[f64]) -> Vec<f64> {
    // d/dr [P(r) e^{-r²/2}] = (P'(r) - r P(r)) e^{-r²/2}
    let mut out = vec![0.0; p.len() + 1];
    for (i, &c) in p.iter().enumerate() {
        if i > 0 {
            out[i - 1] += i as f64 * c;
        }
        out[i + 1] -= c;
    }
    out
}

fn poly_eval(p: &[f64], r: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

/// `M_j^γ({x ∈ ℝᵏ : |x| ≥ u})`.
///
/// The tube is `{|x| ≥ u − ρ}`, so `M_j = (−1)^{j−1} p_k^{(j−1)}(u)` for
/// `j ≥ 1`, with `p_k` the chi density; its derivatives are computed exactly
/// as polynomials times `e^{−r²/2}`.
pub fn gmf_ball_complement(k: usize, u: f64, j: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("ambient dimension must be >= 1"));
    }
    if !(u > 0.0) {
        return Err(invalid(format!(
            "ball complement radius must be positive, got {u}"
        )));
    }
    let half_k = 0.5 * k as f64;
    if j == 0 {
        return Ok(gamma_ur(half_k, 0.5 * u * u));
    }
    let ln_norm = -((half_k - 1.0) * 2.0_f64.ln() + ln_gamma(half_k));
    let mut poly = vec![0.0; k];
    poly[k - 1] = 1.0;
    for _ in 1..j {
        poly = poly_derivative_times_gauss(&poly);
    }
    let sign = if (j - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * poly_eval(&poly, u) * (ln_norm - 0.5 * u * u).exp())
}

/// Closed-form GMFs when the domain family has one; `None` otherwise.
pub fn gmf_closed_form(d: &DomainDescriptor, j_max: usize) -> Result<Option<GmfVector>> {
    let values: Vec<f64> = match d.kind() {
        DomainKind::FullSpace => (0..=j_max)
            .map(|j| if j == 0 { 1.0 } else { 0.0 })
            .collect(),
        DomainKind::HalfLine { u } => (0..=j_max).map(|j| gmf_halfline(j, *u)).collect(),
        DomainKind::Interval { a, b } => (0..=j_max)
            .map(|j| {
                if j == 0 {
                    gauss_tail(*a) - gauss_tail(*b)
                } else {
                    // Tube([a, b], ρ) = [a − ρ, b + ρ]; the upper end is a reflected half-line.
                    gmf_halfline(j, *a) + gmf_halfline(j, -*b)
                }
            })
            .collect(),
        DomainKind::BallComplement { u } => (0..=j_max)
            .map(|j| gmf_ball_complement(d.k(), *u, j))
            .collect::<Result<_>>()?,
        DomainKind::Product(_) | DomainKind::Generic(_) => return Ok(None),
    };
    Ok(Some(GmfVector::exact(d.k(), values)))
}

/// The domain whose closed-form GMFs are the derivatives of `ρ ↦ γ(Tube(D, ρ))`
/// at `ρ = s`, i.e. `Tube(D, s)` itself, for families where that is closed-form.
pub fn dilate(d: &DomainDescriptor, s: f64) -> Result<DomainDescriptor> {
    match d.kind() {
        DomainKind::FullSpace => Ok(d.clone()),
        DomainKind::HalfLine { u } => Ok(DomainDescriptor::half_line(u - s)),
        DomainKind::Interval { a, b } => DomainDescriptor::interval(a - s, b + s),
        DomainKind::BallComplement { u } => DomainDescriptor::ball_complement(d.k(), u - s),
        _ => Err(GkfError::Unsupported(format!(
            "no closed-form dilation for {}",
            d.describe()
        ))),
    }
}

const TUBE_BLOCK: usize = 1 << 15;

/// Per-block histogram of sample distances against sorted radii; bin `b` holds
/// samples with exactly `b` radii strictly below their distance.
fn distance_histogram(d: &DomainDescriptor, radii: &[f64], samples: usize, seed: u64) -> Vec<u64> {
    let blocks = samples.div_ceil(TUBE_BLOCK);
    let k = d.k();
    let partials: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, Purpose::Tube, b as u64);
            let n = TUBE_BLOCK.min(samples - b * TUBE_BLOCK);
            let mut counts = vec![0u64; radii.len() + 1];
            let mut x = vec![0.0; k];
            for _ in 0..n {
                for xi in x.iter_mut() {
                    *xi = rng.sample(StandardNormal);
                }
                let dist = d.distance(&x);
                counts[radii.partition_point(|&r| r < dist)] += 1;
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; radii.len() + 1];
    for p in partials {
        for (t, c) in total.iter_mut().zip(p) {
            *t += c;
        }
    }
    total
}

/// Monte Carlo estimate of `γ_k(Tube(D, ρ))` with its binomial standard error.
pub fn gauss_tube_measure(
    d: &DomainDescriptor,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(rho >= 0.0) {
        return Err(invalid("tube radius must be nonnegative"));
    }
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if let DomainKind::Generic(g) = d.kind() {
        if rho >= g.reach {
            return Err(GkfError::OutsideReach {
                rho,
                reach: g.reach,
            });
        }
    }
    let counts = distance_histogram(d, &[rho], samples, seed);
    let p = counts[0] as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSettings {
    /// Tube radii for the fit; `None` picks 8 evenly spaced points in
    /// `(0, min(0.2, reach/2)]`.
    pub rho_grid: Option<Vec<f64>>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            rho_grid: None,
            samples: 2_000_000,
            seed: 1,
        }
    }
}

pub const MAX_NUMERIC_ORDER: usize = 4;
pub const FIT_CONDITION_LIMIT: f64 = 1e8;

pub fn default_rho_grid(d: &DomainDescriptor) -> Vec<f64> {
    let top = 0.2_f64.min(0.5 * d.reach());
    (1..=8).map(|i| top * i as f64 / 8.0).collect()
}

/// GMFs recovered as `j!·[ρʲ]` of a least-squares polynomial (degree
/// `j_max + 2`) through Monte Carlo tube measures.
///
/// All radii share the same normal draws, so each sample contributes a fixed
/// linear functional of its indicator vector; standard errors come from the
/// per-sample variance of that functional.
pub fn gmf_numeric(
    d: &DomainDescriptor,
    j_max: usize,
    settings: &NumericSettings,
) -> Result<GmfVector> {
    if j_max > MAX_NUMERIC_ORDER {
        return Err(GkfError::Unsupported(format!(
            "numeric GMF extraction is limited to j <= {MAX_NUMERIC_ORDER}, requested {j_max}"
        )));
    }
    if settings.samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let mut radii = settings
        .rho_grid
        .clone()
        .unwrap_or_else(|| default_rho_grid(d));
    radii.sort_by(f64::total_cmp);
    let degree = j_max + 2;
    if radii.len() < degree + 1 {
        return Err(invalid(format!(
            "need at least {} tube radii for order {j_max}",
            degree + 1
        )));
    }
    if radii[0] < 0.0 {
        return Err(invalid("tube radii must be nonnegative"));
    }
    let top = *radii.last().unwrap();
    if top >= d.reach() {
        return Err(GkfError::OutsideReach {
            rho: top,
            reach: d.reach(),
        });
    }

    let design = DMatrix::from_fn(radii.len(), degree + 1, |r, c| {
        (radii[r] / top).powi(c as i32)
    });
    let svd = design.clone().svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if cond > FIT_CONDITION_LIMIT {
        return Err(GkfError::IllConditioned {
            cond,
            limit: FIT_CONDITION_LIMIT,
        });
    }
    let gram = design.transpose() * &design;
    let pinv = gram.try_inverse().ok_or(GkfError::IllConditioned {
        cond: f64::INFINITY,
        limit: FIT_CONDITION_LIMIT,
    })? * design.transpose();

    // A sample in bin b is inside the tube for radii b.., so its functional is a
    // suffix sum of pinv columns.
    let m = radii.len();
    let mut suffix = vec![DVector::<f64>::zeros(degree + 1); m + 1];
    for b in (0..m).rev() {
        suffix[b] = &suffix[b + 1] + pinv.column(b);
    }
    let counts = distance_histogram(d, &radii, settings.samples, settings.seed);
    let n = settings.samples as f64;
    let mut mean = DVector::<f64>::zeros(degree + 1);
    let mut second = DVector::<f64>::zeros(degree + 1);
    for (b, &c) in counts.iter().enumerate() {
        let w = c as f64 / n;
        mean += &suffix[b] * w;
        second += suffix[b].map(|v| v * v) * w;
    }
    let mut values = Vec::with_capacity(j_max + 1);
    let mut errors = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let factor = (ln_gamma(j as f64 + 1.0)).exp() / top.powi(j as i32);
        let var = (second[j] - mean[j] * mean[j]).max(0.0) / (n - 1.0);
        values.push(mean[j] * factor);
        errors.push(var.sqrt() * factor);
    }
    Ok(GmfVector {
        k: d.k(),
        j_max,
        values,
        errors: Some(errors),
    })
}
