//! Piecewise-linear elements on the mapped polar grid.
//!
//! Elements are triangles in the reference coordinates `(s, θ)`. Gradients
//! are carried to physical space with the inverse transpose of the map's
//! Jacobian at each centroid and weighted by its determinant `sρ²`, so the
//! curved boundary is represented exactly.
//!
//! Node `0` is the centre, ring `i ≥ 1` node `j` is `1 + (i−1)·n_θ + j`. Rings
//! `1..n_r` are free; the boundary ring comes last so that free unknowns form
//! a prefix of the node array.

use crate::domain::StarDomain;
use nalgebra::{Matrix2, Vector2};
use std::sync::Arc;

/// Node ids, reference `(s, θ)` vertices and ring index of one triangle.
type RefTriangle = ([usize; 3], [(f64, f64); 3], usize);

pub(crate) const NO_SLOT: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Triangle {
    pub nodes: [usize; 3],
    pub area: f64,
    pub grads: [Vector2<f64>; 3],
    /// Annulus between rings `ring` and `ring + 1` (the centre fan is 0).
    pub ring: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct PolarMesh {
    pub domain: Arc<StarDomain>,
    pub n_free: usize,
    pub points: Vec<Vector2<f64>>,
    pub triangles: Vec<Triangle>,
    /// Lumped mass of every node.
    pub mass: Vec<f64>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    /// Position in the CSR value array of each local entry `(a, b)` as `3a + b`.
    pub slots: Vec<[usize; 9]>,
}

impl PolarMesh {
    pub fn new(domain: Arc<StarDomain>) -> Self {
        let (nr, nt) = (domain.n_r(), domain.n_theta());
        let id = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * nt + j % nt };
        let n_nodes = 1 + nr * nt;
        let n_free = 1 + (nr - 1) * nt;
        let mut points = vec![Vector2::zeros(); n_nodes];
        for i in 1..=nr {
            for j in 0..nt {
                points[id(i, j)] = domain.node(i, j);
            }
        }
        // Reference vertices `(s, θ)` of every triangle. The centre fan is the
        // quad `[0, h] × [θ_j, θ_{j+1}]` split in two, so one of its halves
        // repeats the centre node.
        let (h, dt) = (domain.h(), domain.d_theta());
        let q = |i: usize, j: usize| (i as f64 * h, j as f64 * dt);
        let mut raw: Vec<RefTriangle> = Vec::with_capacity(2 * nr * nt);
        for j in 0..nt {
            raw.push((
                [0, id(1, j), id(1, j + 1)],
                [q(0, j), q(1, j), q(1, j + 1)],
                0,
            ));
            raw.push(([0, id(1, j + 1), 0], [q(0, j), q(1, j + 1), q(0, j + 1)], 0));
        }
        for i in 1..nr {
            for j in 0..nt {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                let (qa, qb, qc, qd) = (q(i, j), q(i + 1, j), q(i + 1, j + 1), q(i, j + 1));
                if (i + j) % 2 == 0 {
                    raw.push(([a, b, c], [qa, qb, qc], i));
                    raw.push(([a, c, d], [qa, qc, qd], i));
                } else {
                    raw.push(([a, b, d], [qa, qb, qd], i));
                    raw.push(([b, c, d], [qb, qc, qd], i));
                }
            }
        }
        let radius = domain.radius_fn().clone();
        let triangles: Vec<Triangle> = raw
            .into_iter()
            .map(|(nodes, refs, ring)| {
                let p = refs.map(|(s, t)| Vector2::new(s, t));
                let e1 = p[1] - p[0];
                let e2 = p[2] - p[0];
                let area2 = e1.x * e2.y - e1.y * e2.x;
                let grad =
                    |a: usize, b: usize| Vector2::new(p[a].y - p[b].y, p[b].x - p[a].x) / area2;
                let centroid = (p[0] + p[1] + p[2]) / 3.0;
                let (s, theta) = (centroid.x, centroid.y);
                let (rho, drho) = radius.eval(theta);
                let (sin, cos) = theta.sin_cos();
                let e_r = Vector2::new(cos, sin);
                let e_t = Vector2::new(-sin, cos);
                // columns ∂x/∂s and ∂x/∂θ
                let jac = Matrix2::from_columns(&[e_r * rho, (e_r * drho + e_t * rho) * s]);
                let inv_t = jac
                    .try_inverse()
                    .expect("centroids lie off the centre")
                    .transpose();
                Triangle {
                    nodes,
                    area: 0.5 * area2.abs() * s * rho * rho,
                    grads: [grad(1, 2), grad(2, 0), grad(0, 1)].map(|g| inv_t * g),
                    ring,
                }
            })
            .collect();

        // Lumped mass: the exact area of each node's polar cell.
        let mut mass = vec![0.0; n_nodes];
        for j in 0..nt {
            let r2 = domain.rho(j).powi(2) * dt;
            mass[0] += 0.125 * h * h * r2;
            for i in 1..nr {
                mass[id(i, j)] = domain.s(i) * h * r2;
            }
            mass[id(nr, j)] = 0.5 * h * (1.0 - 0.25 * h) * r2;
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_free];
        for t in &triangles {
            for &a in &t.nodes {
                if a < n_free {
                    adjacency[a].extend(t.nodes.iter().copied().filter(|&b| b < n_free));
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n_free + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adjacency {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slots = triangles
            .iter()
            .map(|t| {
                let mut s = [NO_SLOT; 9];
                for (la, &a) in t.nodes.iter().enumerate() {
                    if a >= n_free {
                        continue;
                    }
                    let cols = &col_idx[row_ptr[a]..row_ptr[a + 1]];
                    for (lb, &b) in t.nodes.iter().enumerate() {
                        if b < n_free {
                            let pos = cols.binary_search(&b).expect("pattern contains pair");
                            s[3 * la + lb] = row_ptr[a] + pos;
                        }
                    }
                }
                s
            })
            .collect();
        Self {
            domain,
            n_free,
            points,
            triangles,
            mass,
            row_ptr,
            col_idx,
            slots,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.points.len()
    }

    /// Nodal values from a grid field (ring 0 collapses to the centre).
    pub fn nodal_from_grid(&self, values: &[f64]) -> Vec<f64> {
        let nt = self.domain.n_theta();
        let mut out = Vec::with_capacity(self.n_nodes());
        out.push(values[0]);
        out.extend_from_slice(&values[nt..]);
        out
    }

    /// Grid values from nodal values.
    pub fn to_grid(&self, nodal: &[f64]) -> Vec<f64> {
        let nt = self.domain.n_theta();
        let mut out = vec![nodal[0]; nt];
        out.extend_from_slice(&nodal[1..]);
        out
    }

    pub fn triangle_gradient(&self, t: &Triangle, u: &[f64]) -> Vector2<f64> {
        t.grads[0] * u[t.nodes[0]] + t.grads[1] * u[t.nodes[1]] + t.grads[2] * u[t.nodes[2]]
    }
}
