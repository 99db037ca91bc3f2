//! Mandel-type consolidation problem on a Cartesian hexahedral grid with
//! Q1 displacements, lowest-order Raviart–Thomas velocities and piecewise
//! constant pressures.
//!
//! Boundary conditions (x = 0, y = 0/ly and z = 0 are symmetry planes):
//!
//! | face   | displacement | flux      |
//! |--------|--------------|-----------|
//! | x = 0  | u_x = 0      | none      |
//! | y = 0  | u_y = 0      | none      |
//! | y = ly | u_y = 0      | none      |
//! | z = 0  | u_z = 0      | none      |
//! | z = lz | load on u_z  | none      |
//! | x = lx | free         | drained   |
//!
//! Constrained rows stay in the system: off-diagonal entries in their rows
//! and columns are zeroed, as are their coupling rows and right-hand side,
//! so the dimensions count every node and face.

use serde::{Deserialize, Serialize};

use crate::block::{BlockVector, ThreeFieldSystem};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl GridSpec {
    /// Slab of unit width and height with `a_over_h` elements across and
    /// one element through the thickness per ten across.
    pub fn mandel(a_over_h: usize) -> Self {
        let ny = (a_over_h / 10).max(1);
        let h = 1.0 / a_over_h as f64;
        Self {
            nx: a_over_h,
            ny,
            nz: a_over_h,
            lx: 1.0,
            ly: h * ny as f64,
            lz: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Invalid("grid counts must be at least 1".into()));
        }
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lz > 0.0) {
            return Err(Error::Invalid("grid extents must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> (f64, f64, f64) {
        (
            self.lx / self.nx as f64,
            self.ly / self.ny as f64,
            self.lz / self.nz as f64,
        )
    }

    /// (n_u, n_q, n_p).
    pub fn dims(&self) -> (usize, usize, usize) {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let n_u = 3 * (nx + 1) * (ny + 1) * (nz + 1);
        let n_q = (nx + 1) * ny * nz + nx * (ny + 1) * nz + nx * ny * (nz + 1);
        (n_u, n_q, nx * ny * nz)
    }

    fn node(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.nx + 1) * (j + (self.ny + 1) * k)
    }

    fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    /// Index of the face normal to `dir` with lower corner (i, j, k).
    fn face(&self, dir: usize, i: usize, j: usize, k: usize) -> usize {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let n_xf = (nx + 1) * ny * nz;
        let n_yf = nx * (ny + 1) * nz;
        match dir {
            0 => i + (nx + 1) * (j + ny * k),
            1 => n_xf + i + nx * (j + (ny + 1) * k),
            _ => n_xf + n_yf + i + nx * (j + ny * k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub biot_coefficient: f64,
    pub permeability: f64,
    pub fluid_viscosity: f64,
    /// Contributes S·|cell| to P; zero gives P = 0.
    pub storage_coefficient: f64,
    /// t_c, the unit of Δt in sweeps.
    pub consolidation_time: f64,
    /// Magnitude of the downward traction on the top face.
    pub load: f64,
}

impl Default for MaterialParams {
    /// Nondimensional set with t_c = a²μ/(k(λ + 2G)) = 900 for a = 1.
    fn default() -> Self {
        let (e, nu) = (1.0, 0.25);
        let m = e * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let tc = 900.0;
        Self {
            young_modulus: e,
            poisson_ratio: nu,
            biot_coefficient: 1.0,
            permeability: 1.0 / (tc * m),
            fluid_viscosity: 1.0,
            storage_coefficient: 0.0,
            consolidation_time: tc,
            load: 1.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("young_modulus", self.young_modulus),
            ("biot_coefficient", self.biot_coefficient),
            ("permeability", self.permeability),
            ("fluid_viscosity", self.fluid_viscosity),
            ("consolidation_time", self.consolidation_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::Invalid(format!(
                "poisson_ratio must lie in (0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.storage_coefficient >= 0.0) {
            return Err(Error::Invalid(
                "storage_coefficient must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// (λ, G).
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.young_modulus, self.poisson_ratio);
        (
            e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            e / (2.0 * (1.0 + nu)),
        )
    }
}

/// 24×24 trilinear stiffness of an hx×hy×hz box, 2×2×2 Gauss rule.
/// Local node `a = ia + 2ja + 4ka`, dof `3a + c`.
pub fn element_stiffness(h: (f64, f64, f64), lambda: f64, shear: f64) -> [[f64; 24]; 24] {
    let hs = [h.0, h.1, h.2];
    let g = 1.0 / 3f64.sqrt();
    let mut ke = [[0.0; 24]; 24];
    let jac = hs[0] * hs[1] * hs[2] / 8.0;
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            for &zeta in &[-g, g] {
                let pt = [xi, eta, zeta];
                let mut grad = [[0.0; 3]; 8];
                for (a, ga) in grad.iter_mut().enumerate() {
                    let s = [
                        (a & 1) as f64 * 2.0 - 1.0,
                        ((a >> 1) & 1) as f64 * 2.0 - 1.0,
                        ((a >> 2) & 1) as f64 * 2.0 - 1.0,
                    ];
                    for d in 0..3 {
                        let mut v = s[d] / 2.0 * 2.0 / hs[d];
                        for e in 0..3 {
                            if e != d {
                                v *= (1.0 + s[e] * pt[e]) / 2.0;
                            }
                        }
                        ga[d] = v;
                    }
                }
                for a in 0..8 {
                    for b in 0..8 {
                        let dot: f64 = (0..3).map(|e| grad[a][e] * grad[b][e]).sum();
                        for c in 0..3 {
                            for d in 0..3 {
                                let mut v = lambda * grad[a][c] * grad[b][d]
                                    + shear * grad[a][d] * grad[b][c];
                                if c == d {
                                    v += shear * dot;
                                }
                                ke[3 * a + c][3 * b + d] += v * jac;
                            }
                        }
                    }
                }
            }
        }
    }
    ke
}

fn assemble_k(grid: &GridSpec, ke: &[[f64; 24]; 24]) -> SparseMatrix {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let (n_u, _, _) = grid.dims();
    let mut row_offsets = Vec::with_capacity(n_u + 1);
    let mut cols = Vec::with_capacity(n_u * 81);
    let mut vals = Vec::with_capacity(n_u * 81);
    row_offsets.push(0);
    let mut slots = [0.0f64; 81];
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                for c in 0..3 {
                    slots.fill(0.0);
                    // elements containing node (i, j, k)
                    for ek in k.saturating_sub(1)..k.min(nz - 1) + 1 {
                        for ej in j.saturating_sub(1)..j.min(ny - 1) + 1 {
                            for ei in i.saturating_sub(1)..i.min(nx - 1) + 1 {
                                let la = (i - ei) + 2 * (j - ej) + 4 * (k - ek);
                                for lb in 0..8 {
                                    let (bi, bj, bk) =
                                        (ei + (lb & 1), ej + ((lb >> 1) & 1), ek + ((lb >> 2) & 1));
                                    let off =
                                        ((bk + 1 - k) * 9 + (bj + 1 - j) * 3 + (bi + 1 - i)) * 3;
                                    for d in 0..3 {
                                        slots[off + d] += ke[3 * la + c][3 * lb + d];
                                    }
                                }
                            }
                        }
                    }
                    for dk in 0..3usize {
                        for dj in 0..3usize {
                            for di in 0..3usize {
                                let (bi, bj, bk) = (i + di, j + dj, k + dk);
                                if bi < 1
                                    || bj < 1
                                    || bk < 1
                                    || bi > nx + 1
                                    || bj > ny + 1
                                    || bk > nz + 1
                                {
                                    continue;
                                }
                                let node = grid.node(bi - 1, bj - 1, bk - 1);
                                let off = (dk * 9 + dj * 3 + di) * 3;
                                for d in 0..3 {
                                    cols.push(3 * node + d);
                                    vals.push(slots[off + d]);
                                }
                            }
                        }
                    }
                    row_offsets.push(cols.len());
                }
            }
        }
    }
    SparseMatrix::from_parts_unchecked(n_u, n_u, row_offsets, cols, vals)
}

/// Assembles the three-field system and its load vector.
pub fn assemble_three_field(
    grid: &GridSpec,
    mat: &MaterialParams,
    dt: f64,
    theta: f64,
) -> Result<(ThreeFieldSystem, BlockVector)> {
    grid.validate()?;
    mat.validate()?;
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let (n_u, n_q, n_p) = grid.dims();
    let (hx, hy, hz) = grid.h();
    let vol = hx * hy * hz;
    let area = [hy * hz, hx * hz, hx * hy];
    let (lambda, shear) = mat.lame();
    let biot = mat.biot_coefficient;
    let resist = mat.fluid_viscosity / mat.permeability;

    let ke = element_stiffness((hx, hy, hz), lambda, shear);
    let mut k = assemble_k(grid, &ke);

    let mut qt = Vec::with_capacity(24 * n_p);
    let mut bt = Vec::with_capacity(6 * n_p);
    let mut at = Vec::with_capacity(12 * n_p);
    for ck in 0..nz {
        for cj in 0..ny {
            for ci in 0..nx {
                let e = grid.cell(ci, cj, ck);
                for la in 0..8 {
                    let off = [la & 1, (la >> 1) & 1, (la >> 2) & 1];
                    let node = grid.node(ci + off[0], cj + off[1], ck + off[2]);
                    for c in 0..3 {
                        let sign = if off[c] == 1 { 1.0 } else { -1.0 };
                        qt.push((3 * node + c, e, biot * sign * area[c] / 4.0));
                    }
                }
                for dir in 0..3 {
                    let lo = grid.face(dir, ci, cj, ck);
                    let hi = match dir {
                        0 => grid.face(0, ci + 1, cj, ck),
                        1 => grid.face(1, ci, cj + 1, ck),
                        _ => grid.face(2, ci, cj, ck + 1),
                    };
                    bt.push((lo, e, -area[dir]));
                    bt.push((hi, e, area[dir]));
                    let m = resist * vol;
                    at.push((lo, lo, m / 3.0));
                    at.push((hi, hi, m / 3.0));
                    at.push((lo, hi, m / 6.0));
                    at.push((hi, lo, m / 6.0));
                }
            }
        }
    }
    let mut q = SparseMatrix::from_triplets(n_u, n_p, &qt)?;
    let mut b = SparseMatrix::from_triplets(n_q, n_p, &bt)?;
    let mut a = SparseMatrix::from_triplets(n_q, n_q, &at)?;
    let p = SparseMatrix::from_diagonal(&vec![mat.storage_coefficient * vol; n_p]);

    // load on the top face
    let mut fu = vec![0.0; n_u];
    for j in 0..ny {
        for i in 0..nx {
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                fu[3 * grid.node(i + di, j + dj, nz) + 2] -= mat.load * area[2] / 4.0;
            }
        }
    }

    let mut u_fixed = vec![false; n_u];
    for kk in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let n = grid.node(i, j, kk);
                if i == 0 {
                    u_fixed[3 * n] = true;
                }
                if j == 0 || j == ny {
                    u_fixed[3 * n + 1] = true;
                }
                if kk == 0 {
                    u_fixed[3 * n + 2] = true;
                }
            }
        }
    }
    let mut q_fixed = vec![false; n_q];
    for kk in 0..nz {
        for j in 0..ny {
            q_fixed[grid.face(0, 0, j, kk)] = true;
        }
    }
    for kk in 0..nz {
        for i in 0..nx {
            q_fixed[grid.face(1, i, 0, kk)] = true;
            q_fixed[grid.face(1, i, ny, kk)] = true;
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            q_fixed[grid.face(2, i, j, 0)] = true;
            q_fixed[grid.face(2, i, j, nz)] = true;
        }
    }

    k.clear_columns_off_diagonal(&u_fixed);
    for (i, _) in u_fixed.iter().enumerate().filter(|(_, f)| **f) {
        k.clear_row_keep_diagonal(i);
        q.clear_row(i);
        fu[i] = 0.0;
    }
    a.clear_columns_off_diagonal(&q_fixed);
    for (i, _) in q_fixed.iter().enumerate().filter(|(_, f)| **f) {
        a.clear_row_keep_diagonal(i);
        b.clear_row(i);
    }
    let (k, q, a, b) = (
        k.drop_zeros(),
        q.drop_zeros(),
        a.drop_zeros(),
        b.drop_zeros(),
    );

    let sys = ThreeFieldSystem::new(k, a, p, q, b, theta, dt)?;
    let rhs = BlockVector::from_parts(fu, vec![0.0; n_q], vec![0.0; n_p]);
    Ok((sys, rhs))
}
