//! The 3x3 block operator of three-field poromechanics,
//!
//! ```text
//!     | K     0     -Q |   | u |
//!     | 0     A     -B | . | q |
//!     | Qᵀ   γBᵀ     P |   | p |
//! ```
//!
//! and block vectors partitioned by field.

use crate::error::{Error, Result};
use crate::sparse::{norm2, DenseMatrix, SparseMatrix};

/// Relative symmetry tolerance enforced on K and A.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Block system with its time-integration parameters.
#[derive(Debug, Clone)]
pub struct ThreeFieldSystem {
    k: SparseMatrix,
    a: SparseMatrix,
    p: SparseMatrix,
    q: SparseMatrix,
    b: SparseMatrix,
    theta: f64,
    dt: f64,
}

/// Vector partitioned as (u, q, p).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(n_u: usize, n_q: usize, n_p: usize) -> Self {
        Self {
            u: vec![0.0; n_u],
            q: vec![0.0; n_q],
            p: vec![0.0; n_p],
        }
    }

    pub fn from_parts(u: Vec<f64>, q: Vec<f64>, p: Vec<f64>) -> Self {
        Self { u, q, p }
    }

    /// Splits a monolithic vector ordered (u, q, p).
    pub fn from_flat(x: &[f64], n_u: usize, n_q: usize) -> Self {
        Self {
            u: x[..n_u].to_vec(),
            q: x[n_u..n_u + n_q].to_vec(),
            p: x[n_u + n_q..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn write_flat(&self, out: &mut [f64]) {
        let (nu, nq) = (self.u.len(), self.q.len());
        out[..nu].copy_from_slice(&self.u);
        out[nu..nu + nq].copy_from_slice(&self.q);
        out[nu + nq..].copy_from_slice(&self.p);
    }

    pub fn len(&self) -> usize {
        self.u.len() + self.q.len() + self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Euclidean norm over all three segments.
    pub fn norm(&self) -> f64 {
        (norm2(&self.u).powi(2) + norm2(&self.q).powi(2) + norm2(&self.p).powi(2)).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in self
            .u
            .iter_mut()
            .chain(self.q.iter_mut())
            .chain(self.p.iter_mut())
        {
            *v *= s;
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.u.len(), self.q.len(), self.p.len())
    }
}

impl ThreeFieldSystem {
    /// Validates the block invariants: square symmetric K and A, diagonal
    /// non-negative P, conforming couplings, and γ = θ Δt > 0.
    pub fn new(
        k: SparseMatrix,
        a: SparseMatrix,
        p: SparseMatrix,
        q: SparseMatrix,
        b: SparseMatrix,
        theta: f64,
        dt: f64,
    ) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::NotSquare("K", k.n_rows(), k.n_cols()));
        }
        if !a.is_square() {
            return Err(Error::NotSquare("A", a.n_rows(), a.n_cols()));
        }
        if !p.is_square() {
            return Err(Error::NotSquare("P", p.n_rows(), p.n_cols()));
        }
        let (n_u, n_q, n_p) = (k.n_rows(), a.n_rows(), p.n_rows());
        if q.n_rows() != n_u || q.n_cols() != n_p {
            return Err(Error::Invalid(format!(
                "Q is {}x{}, expected {n_u}x{n_p}",
                q.n_rows(),
                q.n_cols()
            )));
        }
        if b.n_rows() != n_q || b.n_cols() != n_p {
            return Err(Error::Invalid(format!(
                "B is {}x{}, expected {n_q}x{n_p}",
                b.n_rows(),
                b.n_cols()
            )));
        }
        for (name, m) in [("K", &k), ("A", &a)] {
            let asym = m.asymmetry();
            if asym > SYMMETRY_TOL * m.max_abs() {
                return Err(Error::Invalid(format!(
                    "{name} is not symmetric (max |M - Mᵀ| = {asym:e})"
                )));
            }
        }
        if !p.is_diagonal() {
            return Err(Error::Invalid("P must be diagonal".into()));
        }
        if let Some((i, v)) = p
            .diagonal_of()?
            .into_iter()
            .enumerate()
            .find(|(_, v)| *v < 0.0)
        {
            return Err(Error::NonPositive {
                what: "P diagonal (must be non-negative)",
                index: i,
                value: v,
            });
        }
        if !(0.5..=1.0).contains(&theta) {
            return Err(Error::Invalid(format!("theta = {theta} outside [1/2, 1]")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Invalid(format!("time step {dt} must be positive")));
        }
        Ok(Self {
            k,
            a,
            p,
            q,
            b,
            theta,
            dt,
        })
    }

    pub fn k(&self) -> &SparseMatrix {
        &self.k
    }
    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }
    pub fn p(&self) -> &SparseMatrix {
        &self.p
    }
    pub fn q(&self) -> &SparseMatrix {
        &self.q
    }
    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn gamma(&self) -> f64 {
        self.theta * self.dt
    }

    pub fn n_u(&self) -> usize {
        self.k.n_rows()
    }
    pub fn n_q(&self) -> usize {
        self.a.n_rows()
    }
    pub fn n_p(&self) -> usize {
        self.p.n_rows()
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_u(), self.n_q(), self.n_p())
    }
    pub fn size(&self) -> usize {
        self.n_u() + self.n_q() + self.n_p()
    }

    /// Same blocks with a different time step.
    pub fn with_time_step(&self, theta: f64, dt: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&theta) || !(dt > 0.0) {
            return Err(Error::Invalid(format!("invalid theta {theta} or dt {dt}")));
        }
        let mut s = self.clone();
        s.theta = theta;
        s.dt = dt;
        Ok(s)
    }

    fn check(&self, x: &BlockVector, op: &'static str) -> Result<()> {
        let (n_u, n_q, n_p) = self.dims();
        if x.u.len() != n_u {
            return Err(Error::dims(op, n_u, x.u.len()));
        }
        if x.q.len() != n_q {
            return Err(Error::dims(op, n_q, x.q.len()));
        }
        if x.p.len() != n_p {
            return Err(Error::dims(op, n_p, x.p.len()));
        }
        Ok(())
    }

    /// (Ku − Qp, Aq − Bp, Qᵀu + γBᵀq + Pp).
    pub fn apply_block_operator(&self, x: &BlockVector) -> Result<BlockVector> {
        self.check(x, "apply_block_operator")?;
        let (n_u, n_q, n_p) = self.dims();
        let mut y = BlockVector::zeros(n_u, n_q, n_p);
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn apply_into(&self, x: &BlockVector, y: &mut BlockVector) {
        self.k.spmv_into(&x.u, &mut y.u);
        self.q.spmv_acc(-1.0, &x.p, &mut y.u);
        self.a.spmv_into(&x.q, &mut y.q);
        self.b.spmv_acc(-1.0, &x.p, &mut y.q);
        self.p.spmv_into(&x.p, &mut y.p);
        self.q.spmv_t_acc(1.0, &x.u, &mut y.p);
        self.b.spmv_t_acc(self.gamma(), &x.q, &mut y.p);
    }

    /// Flat-vector form of the operator for the Krylov solver.
    pub fn apply_flat(&self, x: &[f64], y: &mut [f64]) {
        let (n_u, n_q, _) = self.dims();
        let (xu, rest) = x.split_at(n_u);
        let (xq, xp) = rest.split_at(n_q);
        let (yu, rest) = y.split_at_mut(n_u);
        let (yq, yp) = rest.split_at_mut(n_q);
        self.k.spmv_into(xu, yu);
        self.q.spmv_acc(-1.0, xp, yu);
        self.a.spmv_into(xq, yq);
        self.b.spmv_acc(-1.0, xp, yq);
        self.p.spmv_into(xp, yp);
        self.q.spmv_t_acc(1.0, xu, yp);
        self.b.spmv_t_acc(self.gamma(), xq, yp);
    }

    /// Returns rhs − 𝒜x and its Euclidean norm.
    pub fn block_residual(&self, x: &BlockVector, rhs: &BlockVector) -> Result<(BlockVector, f64)> {
        self.check(rhs, "block_residual")?;
        let ax = self.apply_block_operator(x)?;
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(r, v)| r - v).collect::<Vec<_>>();
        let r = BlockVector {
            u: sub(&rhs.u, &ax.u),
            q: sub(&rhs.q, &ax.q),
            p: sub(&rhs.p, &ax.p),
        };
        let n = r.norm();
        Ok((r, n))
    }

    /// Monolithic dense assembly of the block operator (oracle use only).
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let (n_u, n_q, _) = self.dims();
        let n = self.size();
        if n * n > crate::sparse::DENSE_BUDGET * 2 {
            return Err(Error::OracleBudget {
                rows: n,
                cols: n,
                budget: crate::sparse::DENSE_BUDGET * 2,
            });
        }
        let mut d = DenseMatrix::zeros(n, n);
        let (ou, oq, op) = (0, n_u, n_u + n_q);
        let g = self.gamma();
        for (i, j, v) in self.k.iter() {
            d.set(ou + i, ou + j, v);
        }
        for (i, j, v) in self.a.iter() {
            d.set(oq + i, oq + j, v);
        }
        for (i, j, v) in self.p.iter() {
            d.set(op + i, op + j, v);
        }
        for (i, j, v) in self.q.iter() {
            d.set(ou + i, op + j, -v);
            d.set(op + j, ou + i, v);
        }
        for (i, j, v) in self.b.iter() {
            d.set(oq + i, op + j, -v);
            d.set(op + j, oq + i, g * v);
        }
        Ok(d)
    }
}
