//! Independent Betti-number computation for binary masks on a 2-D node grid.
//!
//! The excursion complex holds a vertex, edge or square iff all its corner
//! nodes are active. β0 counts components of the complex, β1 counts bounded
//! components of its complement, and χ = β0 − β1.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }

    fn roots(&mut self, members: impl Iterator<Item = usize>) -> usize {
        let mut roots: Vec<usize> = members.map(|m| self.find(m)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

/// `(β0, β1)` of the closed cubical complex spanned by `active` on a
/// `rows × cols` node grid (row-major).
pub fn betti_numbers(rows: usize, cols: usize, active: &[bool]) -> (usize, usize) {
    let at = |r: usize, c: usize| active[r * cols + c];

    let mut uf = UnionFind::new(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if !at(r, c) {
                continue;
            }
            if r + 1 < rows && at(r + 1, c) {
                uf.union(r * cols + c, (r + 1) * cols + c);
            }
            if c + 1 < cols && at(r, c + 1) {
                uf.union(r * cols + c, r * cols + c + 1);
            }
        }
    }
    let b0 = uf.roots((0..rows * cols).filter(|&i| active[i]));

    // Doubled lattice: (2r, 2c) vertices, mixed parity edges, (odd, odd)
    // squares, plus a one-cell exterior frame.
    let (h, w) = (2 * rows - 1 + 2, 2 * cols - 1 + 2);
    let in_complex = |i: usize, j: usize| -> bool {
        if i == 0 || j == 0 || i == h - 1 || j == w - 1 {
            return false;
        }
        let (i, j) = (i - 1, j - 1);
        let rs: Vec<usize> = if i % 2 == 0 {
            vec![i / 2]
        } else {
            vec![i / 2, i / 2 + 1]
        };
        let cs: Vec<usize> = if j % 2 == 0 {
            vec![j / 2]
        } else {
            vec![j / 2, j / 2 + 1]
        };
        rs.iter().all(|&r| cs.iter().all(|&c| at(r, c)))
    };
    let mut free = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            free[i * w + j] = !in_complex(i, j);
        }
    }
    let mut uf = UnionFind::new(h * w);
    for i in 0..h {
        for j in 0..w {
            if !free[i * w + j] {
                continue;
            }
            if i + 1 < h && free[(i + 1) * w + j] {
                uf.union(i * w + j, (i + 1) * w + j);
            }
            if j + 1 < w && free[i * w + j + 1] {
                uf.union(i * w + j, i * w + j + 1);
            }
        }
    }
    let holes = uf.roots((0..h * w).filter(|&i| free[i])) - 1;
    (b0, holes)
}

/// Random `rows × cols` masks with densities spread over (0.2, 0.8).
pub fn random_masks(count: usize, rows: usize, cols: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p: f64 = rng.random_range(0.2..0.8);
            (0..rows * cols).map(|_| rng.random_bool(p)).collect()
        })
        .collect()
}
