//! Excursion sets `A = {t ∈ M : y(t) ∈ D}` of sampled fields and empirical
//! estimators of their curvatures.
//!
//! Topology uses the closed-cell convention: a lattice cell or mesh simplex
//! belongs to the excursion complex iff all of its vertices are active.

use std::io::{BufRead, Write};

use crate::error::{invalid, GkfError, Result};
use crate::fieldsim::{FieldSample, GridSpec, Support};
use crate::gmf::{DomainDescriptor, DomainKind};

#[derive(Debug, Clone)]
pub struct ExcursionMask {
    pub support: Support,
    pub active: Vec<bool>,
    pub domain: DomainDescriptor,
}

impl ExcursionMask {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    fn grid(&self) -> Result<&GridSpec> {
        match &self.support {
            Support::Grid(g) => Ok(g),
            Support::Sphere(_) => Err(invalid("operation needs a grid-supported mask")),
        }
    }
}

pub fn threshold_excursion(field: &FieldSample, d: &DomainDescriptor) -> Result<ExcursionMask> {
    if d.k() != field.k {
        return Err(GkfError::DimensionMismatch {
            expected: field.k,
            got: d.k(),
        });
    }
    let n = field.support.node_count();
    let mut y = vec![0.0; field.k];
    let active = (0..n)
        .map(|node| {
            field.vector_at(node, &mut y);
            d.contains(&y)
        })
        .collect();
    Ok(ExcursionMask {
        support: field.support.clone(),
        active,
        domain: d.clone(),
    })
}

/// `Σ_d (−1)^d #{active d-cells}` of the cubical complex on a 1-, 2- or 3-D grid.
pub fn euler_char_grid(mask: &ExcursionMask) -> Result<i64> {
    let grid = mask.grid()?;
    Ok(euler_char_cubical(&grid.shape(), &mask.active))
}

pub(crate) fn euler_char_cubical(shape: &[usize], active: &[bool]) -> i64 {
    let ndim = shape.len();
    let strides = crate::fieldsim::grid::strides_of(shape);
    let mut chi = 0i64;
    for axes in 0u32..(1 << ndim) {
        let cell_dim = axes.count_ones();
        // Offsets of the 2^d corners of a cell spanned by `axes`.
        let corners: Vec<usize> = (0u32..(1 << ndim))
            .filter(|c| c & !axes == 0)
            .map(|c| {
                (0..ndim)
                    .filter(|a| c >> a & 1 == 1)
                    .map(|a| strides[a])
                    .sum()
            })
            .collect();
        let extent: Vec<usize> = (0..ndim)
            .map(|a| shape[a] - ((axes >> a) & 1) as usize)
            .collect();
        let count = extent.iter().product::<usize>();
        let mut cells = 0i64;
        for idx in 0..count {
            let mut rem = idx;
            let mut base = 0;
            for a in (0..ndim).rev() {
                base += (rem % extent[a]) * strides[a];
                rem /= extent[a];
            }
            if corners.iter().all(|&o| active[base + o]) {
                cells += 1;
            }
        }
        chi += if cell_dim % 2 == 0 { cells } else { -cells };
    }
    chi
}

/// `V' − E' + F'` of the sub-triangulation spanned by active vertices.
pub fn euler_char_mesh(mask: &ExcursionMask) -> Result<i64> {
    let Support::Sphere(mesh) = &mask.support else {
        return Err(invalid("euler_char_mesh needs a mesh-supported mask"));
    };
    let a = &mask.active;
    let v = a.iter().filter(|&&x| x).count() as i64;
    let e = mesh.edges.iter().filter(|&&[p, q]| a[p] && a[q]).count() as i64;
    let f = mesh
        .triangles
        .iter()
        .filter(|&&[p, q, r]| a[p] && a[q] && a[r])
        .count() as i64;
    Ok(v - e + f)
}

/// Euler characteristic on whichever support the mask has.
pub fn euler_char(mask: &ExcursionMask) -> Result<i64> {
    match mask.support {
        Support::Grid(_) => euler_char_grid(mask),
        Support::Sphere(_) => euler_char_mesh(mask),
    }
}

/// Lebesgue volume of the excursion set by node-centered quadrature: each node
/// carries its lattice cell clipped to the grid box (half weight per boundary
/// axis), so a full mask returns exactly the box volume.
pub fn volume_estimate(mask: &ExcursionMask) -> Result<f64> {
    let grid = mask.grid()?;
    let shape = grid.shape();
    let n = shape.len() as u32;
    // Trapezoid weights in units of 2^-n, so the sum is exact.
    let units: u64 = mask
        .active
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(idx, _)| {
            let mut rem = idx;
            let mut boundary = 0;
            for a in (0..shape.len()).rev() {
                let i = rem % shape[a];
                rem /= shape[a];
                if i == 0 || i == shape[a] - 1 {
                    boundary += 1;
                }
            }
            1u64 << (n - boundary)
        })
        .sum();
    let full: u64 = grid.dims.iter().map(|&d| d as u64).product::<u64>() << n;
    let box_volume: f64 = grid.sides().iter().product();
    Ok(units as f64 / full as f64 * box_volume)
}

/// Scalar function whose superlevel set `{g ≥ 0}` is the excursion set.
type LevelFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

fn level_function(d: &DomainDescriptor) -> Result<LevelFn<'_>> {
    Ok(match d.kind() {
        DomainKind::FullSpace => Box::new(|_| 1.0),
        DomainKind::HalfLine { u } => Box::new(move |y| y[0] - u),
        DomainKind::Interval { a, b } => Box::new(move |y| (y[0] - a).min(b - y[0])),
        DomainKind::BallComplement { u } => {
            Box::new(move |y| y.iter().map(|v| v * v).sum::<f64>().sqrt() - u)
        }
        _ => {
            return Err(GkfError::Unsupported(format!(
                "boundary estimation needs a level function; {} has none",
                d.describe()
            )))
        }
    })
}

/// Half the marching-squares length of the excursion boundary inside a 2-D
/// grid. Crossings are placed by linear interpolation of the field, so the
/// field itself is required. The outer edge of the grid is never counted.
pub fn boundary_estimate(mask: &ExcursionMask, field: Option<&FieldSample>) -> Result<f64> {
    let field = field
        .ok_or_else(|| invalid("boundary estimation needs the field values, not just the mask"))?;
    let grid = mask.grid()?;
    if grid.ndim() != 2 {
        return Err(GkfError::Unsupported(
            "boundary estimation is implemented for 2-D grids".into(),
        ));
    }
    if field.support != mask.support {
        return Err(invalid("field and mask live on different supports"));
    }
    let g = level_function(&mask.domain)?;
    let mut y = vec![0.0; field.k];
    let level: Vec<f64> = (0..grid.node_count())
        .map(|n| {
            field.vector_at(n, &mut y);
            g(&y)
        })
        .collect();
    let [rows, cols] = [grid.dims[0] + 1, grid.dims[1] + 1];
    let h = grid.spacing;
    let mut length = 0.0;
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            // Corners counter-clockwise in (row, col) cell coordinates.
            let pos = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
            let v = [
                level[i * cols + j],
                level[(i + 1) * cols + j],
                level[(i + 1) * cols + j + 1],
                level[i * cols + j + 1],
            ];
            let inside = v.map(|x| x >= 0.0);
            let crossing = |e: usize| -> Option<(f64, f64)> {
                let (a, b) = (e, (e + 1) % 4);
                (inside[a] != inside[b]).then(|| {
                    let t = v[a] / (v[a] - v[b]);
                    (
                        pos[a].0 + t * (pos[b].0 - pos[a].0),
                        pos[a].1 + t * (pos[b].1 - pos[a].1),
                    )
                })
            };
            let pts: Vec<(usize, (f64, f64))> =
                (0..4).filter_map(|e| crossing(e).map(|p| (e, p))).collect();
            let seg =
                |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
            match pts.len() {
                2 => length += seg(pts[0].1, pts[1].1),
                4 => {
                    let p: Vec<(f64, f64)> = pts.iter().map(|x| x.1).collect();
                    let centre_inside = v.iter().sum::<f64>() / 4.0 >= 0.0;
                    // Edge e joins corners e and e+1; pairing decides which
                    // diagonal corners stay connected.
                    if centre_inside == inside[0] {
                        length += seg(p[0], p[1]) + seg(p[2], p[3]);
                    } else {
                        length += seg(p[3], p[0]) + seg(p[1], p[2]);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(0.5 * length * h)
}

pub const MASK_MAGIC: &str = "GKFLAB-MASK v1";

/// Writes a grid mask: header, then one line of `0`/`1` per grid row.
pub fn write_mask<W: Write>(mask: &ExcursionMask, out: &mut W) -> Result<()> {
    let grid = mask.grid()?;
    let io = |e: std::io::Error| GkfError::Parse(e.to_string());
    let dims: Vec<String> = grid.dims.iter().map(|d| d.to_string()).collect();
    writeln!(out, "{MASK_MAGIC} dims={}", dims.join(",")).map_err(io)?;
    let row = *grid.shape().last().unwrap();
    for chunk in mask.active.chunks(row) {
        let line: String = chunk.iter().map(|&a| if a { '1' } else { '0' }).collect();
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Reads a mask dump back into `(cell dims, active flags)`.
pub fn read_mask<R: BufRead>(input: R) -> Result<(Vec<usize>, Vec<bool>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| GkfError::Parse("empty mask dump".into()))?
        .map_err(|e| GkfError::Parse(e.to_string()))?;
    let dims_text = header
        .strip_prefix(MASK_MAGIC)
        .and_then(|r| r.trim().strip_prefix("dims="))
        .ok_or_else(|| GkfError::Parse(format!("bad mask header '{header}'")))?;
    let dims = dims_text
        .split(',')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| GkfError::Parse(format!("bad dims '{dims_text}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut active = Vec::new();
    for line in lines {
        let line = line.map_err(|e| GkfError::Parse(e.to_string()))?;
        for ch in line.trim().chars() {
            match ch {
                '0' => active.push(false),
                '1' => active.push(true),
                other => {
                    return Err(GkfError::Parse(format!(
                        "unexpected mask character '{other}'"
                    )))
                }
            }
        }
    }
    let expected: usize = dims.iter().map(|d| d + 1).product();
    if active.len() != expected {
        return Err(GkfError::Parse(format!(
            "expected {expected} mask entries, found {}",
            active.len()
        )));
    }
    Ok((dims, active))
}
