use std::collections::HashMap;

use crate::error::{invalid, Result};

/// Subdivided icosahedron with vertices projected onto the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub level: u32,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl SphereMesh {
    pub fn icosphere(level: u32) -> Result<Self> {
        if level > 8 {
            return Err(invalid(format!(
                "refinement level {level} is too large (max 8)"
            )));
        }
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<[f64; 3]> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .into_iter()
        .map(normalize)
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let (p, q) = (vertices[a], vertices[b]);
                    vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    vertices.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for &[a, b, c] in &triangles {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        let mut edges: Vec<[usize; 2]> = triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[a, b]| [a.min(b), a.max(b)])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            vertices,
            triangles,
            edges,
            level,
        })
    }

    /// Coarsest level whose longest edge is below `length_scale / 3`.
    pub fn level_for_length_scale(length_scale: f64) -> Result<u32> {
        (0..=8)
            .find(|&l| {
                Self::icosphere(l)
                    .map(|m| m.max_edge_length() < length_scale / 3.0)
                    .unwrap_or(false)
            })
            .ok_or_else(|| {
                invalid(format!(
                    "length scale {length_scale} needs a mesh finer than level 8"
                ))
            })
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `antipodes()[v]` is the vertex at `−vertices[v]`. The icosphere is
    /// centrally symmetric at every level.
    pub fn antipodes(&self) -> Vec<usize> {
        let key = |p: &[f64; 3]| {
            let q = |x: f64| (x * 1e9).round() as i64;
            (q(p[0]), q(p[1]), q(p[2]))
        };
        let lookup: HashMap<_, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| (key(p), i))
            .collect();
        self.vertices
            .iter()
            .map(|p| lookup[&key(&[-p[0], -p[1], -p[2]])])
            .collect()
    }

    /// Vertex whose direction is closest to `dir`.
    pub fn nearest_vertex(&self, dir: [f64; 3]) -> usize {
        let d = normalize(dir);
        (0..self.vertices.len())
            .max_by(|&a, &b| dot(&self.vertices[a], &d).total_cmp(&dot(&self.vertices[b], &d)))
            .unwrap()
    }
}
