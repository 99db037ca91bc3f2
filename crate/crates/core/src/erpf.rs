//! Enhanced RPF: replacements for solves with an augmented block
//! Ĉ = C + βFFᵀ when β exceeds its conditioning bound β_ℓ.
//!
//! * Method 1 runs `n_in` stationary sweeps w ← w + (β_ℓ/β)Ĉ_ℓ⁻¹(b − Ĉw).
//! * Method 2 uses the Woodbury form w = C⁻¹(b − βF S̃⁻¹ Fᵀ C⁻¹ b) with
//!   S̃ ≈ I + βFᵀC⁻¹F.
//!
//! The split application ([`erpf2_alt_apply`]) applies Method 2 contexts
//! through the factorizations of the two RPF factors instead of nesting
//! them inside the augmented-block solves.

use serde::Serialize;

use crate::block::BlockVector;
use crate::error::{Error, Result};
use crate::factor::{cholesky_factor, diagonal_solver, ic_factor, InnerSolver};
use crate::rpf::{InnerPolicy, RpfOperator};
use crate::sparse::{SparseMatrix, DENSE_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SelectedVariant {
    #[serde(rename = "erpf1-K-side")]
    Erpf1KSide,
    #[serde(rename = "rpf")]
    Rpf,
    #[serde(rename = "erpf2-A-side")]
    Erpf2ASide,
}

impl std::fmt::Display for SelectedVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectedVariant::Erpf1KSide => "erpf1-K-side",
            SelectedVariant::Rpf => "rpf",
            SelectedVariant::Erpf2ASide => "erpf2-A-side",
        })
    }
}

/// ERPF1 when α < α_K, ERPF2 when α < α_A (preferred when both hold), else RPF.
pub fn select_variant(alpha: f64, alpha_k: f64, alpha_a: f64) -> SelectedVariant {
    match (alpha < alpha_k, alpha < alpha_a) {
        (true, true) => {
            log::warn!("alpha = {alpha:e} is below both alpha_K = {alpha_k:e} and alpha_A = {alpha_a:e}; using erpf2-A-side");
            SelectedVariant::Erpf2ASide
        }
        (true, false) => SelectedVariant::Erpf1KSide,
        (false, true) => SelectedVariant::Erpf2ASide,
        (false, false) => SelectedVariant::Rpf,
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedBlockContext {
    c: SparseMatrix,
    f: SparseMatrix,
    beta: f64,
    beta_ell: f64,
    c_hat: SparseMatrix,
    c_hat_ell: SparseMatrix,
    solver_chat_ell: Option<InnerSolver>,
    solver_c: Option<InnerSolver>,
    solver_stilde: Option<InnerSolver>,
    n_in: usize,
}

impl AugmentedBlockContext {
    pub fn new(
        c: SparseMatrix,
        f: SparseMatrix,
        beta: f64,
        beta_ell: f64,
        n_in: usize,
    ) -> Result<Self> {
        let fft = f.spgemm(&f.transpose())?;
        Self::with_product(c, f, &fft, beta, beta_ell, n_in)
    }

    /// As [`new`](Self::new) with FFᵀ supplied by the caller.
    pub fn with_product(
        c: SparseMatrix,
        f: SparseMatrix,
        fft: &SparseMatrix,
        beta: f64,
        beta_ell: f64,
        n_in: usize,
    ) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::NotSquare(
                "augmented block C",
                c.n_rows(),
                c.n_cols(),
            ));
        }
        if f.n_rows() != c.n_rows() {
            return Err(Error::dims(
                "augmented block F rows",
                c.n_rows(),
                f.n_rows(),
            ));
        }
        if !(beta >= 0.0) || !(beta_ell >= 0.0) {
            return Err(Error::Invalid(format!(
                "beta = {beta}, beta_ell = {beta_ell} must be non-negative"
            )));
        }
        if n_in == 0 {
            return Err(Error::Invalid("n_in must be at least 1".into()));
        }
        let c_hat = c.add_scaled(beta, fft)?;
        let c_hat_ell = c.add_scaled(beta_ell, fft)?;
        Ok(Self {
            c,
            f,
            beta,
            beta_ell,
            c_hat,
            c_hat_ell,
            solver_chat_ell: None,
            solver_c: None,
            solver_stilde: None,
            n_in,
        })
    }

    fn check_solver(s: &InnerSolver, n: usize, what: &'static str) -> Result<()> {
        if s.dim() != n {
            return Err(Error::dims(what, n, s.dim()));
        }
        Ok(())
    }

    pub fn with_chat_ell_solver(mut self, s: InnerSolver) -> Result<Self> {
        Self::check_solver(&s, self.c.n_rows(), "C_hat_ell solver")?;
        self.solver_chat_ell = Some(s);
        Ok(self)
    }

    pub fn with_c_solver(mut self, s: InnerSolver) -> Result<Self> {
        Self::check_solver(&s, self.c.n_rows(), "C solver")?;
        self.solver_c = Some(s);
        Ok(self)
    }

    pub fn with_stilde_solver(mut self, s: InnerSolver) -> Result<Self> {
        Self::check_solver(&s, self.f.n_cols(), "S_tilde solver")?;
        self.solver_stilde = Some(s);
        Ok(self)
    }

    pub fn c(&self) -> &SparseMatrix {
        &self.c
    }
    pub fn f(&self) -> &SparseMatrix {
        &self.f
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn beta_ell(&self) -> f64 {
        self.beta_ell
    }
    pub fn c_hat(&self) -> &SparseMatrix {
        &self.c_hat
    }
    pub fn c_hat_ell(&self) -> &SparseMatrix {
        &self.c_hat_ell
    }
    pub fn n_in(&self) -> usize {
        self.n_in
    }
    pub fn solver_chat_ell(&self) -> Option<&InnerSolver> {
        self.solver_chat_ell.as_ref()
    }
    pub fn solver_c(&self) -> Option<&InnerSolver> {
        self.solver_c.as_ref()
    }
    pub fn solver_stilde(&self) -> Option<&InnerSolver> {
        self.solver_stilde.as_ref()
    }
    pub fn dim(&self) -> usize {
        self.c.n_rows()
    }

    fn check_rhs(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.dim() {
            return Err(Error::dims("augmented block rhs", self.dim(), b.len()));
        }
        Ok(())
    }

    /// Method 1: `n_in` stationary sweeps from w = 0.
    pub fn method1_apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_rhs(b)?;
        if self.solver_chat_ell.is_none() {
            return Err(Error::Invalid("Method 1 needs a C_hat_ell solver".into()));
        }
        if !(self.beta > 0.0) || !(self.beta_ell > 0.0) {
            return Err(Error::Invalid("Method 1 needs beta, beta_ell > 0".into()));
        }
        let mut w = vec![0.0; b.len()];
        self.method1_into(b, &mut w);
        Ok(w)
    }

    pub(crate) fn method1_into(&self, b: &[f64], w: &mut [f64]) {
        let solver = self
            .solver_chat_ell
            .as_ref()
            .expect("C_hat_ell solver present");
        let step = self.beta_ell / self.beta;
        let n = b.len();
        let mut r = b.to_vec();
        let mut v = vec![0.0; n];
        w.fill(0.0);
        for k in 0..self.n_in {
            if k > 0 {
                self.c_hat.spmv_into(w, &mut r);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri = bi - *ri;
                }
            }
            solver.apply_into(&r, &mut v);
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi += step * vi;
            }
        }
    }

    /// Method 2: c = M_C⁻¹b, d = Fᵀc, g = M_S̃⁻¹d, w = M_C⁻¹(b − βFg).
    pub fn method2_apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_rhs(b)?;
        if self.solver_c.is_none() || self.solver_stilde.is_none() {
            return Err(Error::Invalid(
                "Method 2 needs C and S_tilde solvers".into(),
            ));
        }
        let mut w = vec![0.0; b.len()];
        self.method2_into(b, &mut w);
        Ok(w)
    }

    pub(crate) fn method2_into(&self, b: &[f64], w: &mut [f64]) {
        let sc = self.solver_c.as_ref().expect("C solver present");
        let ss = self.solver_stilde.as_ref().expect("S_tilde solver present");
        let mut c = vec![0.0; b.len()];
        sc.apply_into(b, &mut c);
        let mut d = vec![0.0; self.f.n_cols()];
        self.f.spmv_t_into(&c, &mut d);
        let mut g = vec![0.0; d.len()];
        ss.apply_into(&d, &mut g);
        c.copy_from_slice(b);
        self.f.spmv_acc(-self.beta, &g, &mut c);
        sc.apply_into(&c, w);
    }
}

pub fn method1_apply(ctx: &AugmentedBlockContext, b: &[f64]) -> Result<Vec<f64>> {
    ctx.method1_apply(b)
}

pub fn method2_apply(ctx: &AugmentedBlockContext, b: &[f64]) -> Result<Vec<f64>> {
    ctx.method2_apply(b)
}

/// How one side (K̂ or Â) of the RPF application is solved.
#[derive(Debug, Clone)]
pub enum SideSolver {
    Native {
        matrix: SparseMatrix,
        solver: InnerSolver,
    },
    Method1(AugmentedBlockContext),
    Method2(AugmentedBlockContext),
}

impl SideSolver {
    pub(crate) fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        match self {
            SideSolver::Native { solver, .. } => solver.apply_into(b, x),
            SideSolver::Method1(ctx) => ctx.method1_into(b, x),
            SideSolver::Method2(ctx) => ctx.method2_into(b, x),
        }
    }

    pub fn native_matrix(&self) -> Option<&SparseMatrix> {
        match self {
            SideSolver::Native { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    pub fn context(&self) -> Option<&AugmentedBlockContext> {
        match self {
            SideSolver::Native { .. } => None,
            SideSolver::Method1(c) | SideSolver::Method2(c) => Some(c),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SideSolver::Native { .. } => "native",
            SideSolver::Method1(_) => "erpf1",
            SideSolver::Method2(_) => "erpf2",
        }
    }

    pub(crate) fn describe(&self) -> String {
        let kind = |s: Option<&InnerSolver>| {
            s.map_or("none".to_string(), |s| {
                format!("{:?} (nnz {})", s.kind(), s.factor_nnz())
            })
        };
        match self {
            SideSolver::Native { matrix, solver } => {
                format!(
                    "native, nnz {}, solver {}",
                    matrix.nnz(),
                    kind(Some(solver))
                )
            }
            SideSolver::Method1(c) => format!(
                "method 1, beta/beta_ell = {:e}, n_in = {}, solver {}",
                c.beta / c.beta_ell,
                c.n_in,
                kind(c.solver_chat_ell())
            ),
            SideSolver::Method2(c) => format!(
                "method 2, beta/beta_ell = {:e}, C solver {}, S_tilde solver {}",
                c.beta / c.beta_ell,
                kind(c.solver_c()),
                kind(c.solver_stilde())
            ),
        }
    }
}

/// Diagonal solver for D̃_K = I + D_K/α.
pub fn build_stilde_k(d_k: &[f64], alpha: f64) -> Result<InnerSolver> {
    if !(alpha > 0.0) {
        return Err(Error::Invalid(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let d: Vec<f64> = d_k.iter().map(|v| 1.0 + v / alpha).collect();
    diagonal_solver(&d).map_err(|e| e.in_block("S_tilde_K"))
}

/// I + (γ/α) Bᵀ Ã⁻¹ B.
pub fn assemble_stilde_a(
    b: &SparseMatrix,
    a_tilde: &[f64],
    gamma: f64,
    alpha: f64,
) -> Result<SparseMatrix> {
    if a_tilde.len() != b.n_rows() {
        return Err(Error::dims("assemble_stilde_a", b.n_rows(), a_tilde.len()));
    }
    if !(gamma > 0.0) || !(alpha > 0.0) {
        return Err(Error::Invalid("gamma and alpha must be positive".into()));
    }
    let inv: Vec<f64> = a_tilde.iter().map(|v| 1.0 / v).collect();
    let scaled = b.scale_rows(&inv)?;
    let s = b.transpose().spgemm(&scaled)?;
    SparseMatrix::identity(b.n_cols()).add_scaled(gamma / alpha, &s)
}

/// Assembles S̃_A and factors it: directly for M_I, IC(ρ_S) for M_II.
pub fn build_stilde_a(
    b: &SparseMatrix,
    a_tilde: &[f64],
    gamma: f64,
    alpha: f64,
    policy: InnerPolicy,
    rho_s: usize,
) -> Result<InnerSolver> {
    let s = assemble_stilde_a(b, a_tilde, gamma, alpha)?;
    match policy {
        InnerPolicy::Direct => cholesky_factor(&s),
        InnerPolicy::Ic => ic_factor(&s, rho_s),
    }
    .map_err(|e| e.in_block("S_tilde_A"))
}

/// Dense I + βFᵀM_C⁻¹F, factored directly. Oracle-sized problems only.
pub fn exact_stilde(c_solver: &InnerSolver, f: &SparseMatrix, beta: f64) -> Result<InnerSolver> {
    let (n, m) = (f.n_rows(), f.n_cols());
    if m * m > DENSE_BUDGET {
        return Err(Error::OracleBudget {
            rows: m,
            cols: m,
            budget: DENSE_BUDGET,
        });
    }
    if c_solver.dim() != n {
        return Err(Error::dims("exact_stilde", n, c_solver.dim()));
    }
    let ft = f.transpose();
    let mut s = vec![0.0; m * m];
    let mut e = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..m {
        e.fill(0.0);
        let (rows, vals) = ft.row(j);
        for (&i, &v) in rows.iter().zip(vals) {
            e[i] = v;
        }
        c_solver.apply_into(&e, &mut x);
        f.spmv_t_into(&x, &mut col);
        for i in 0..m {
            s[i * m + j] = col[i];
        }
    }
    let mut t = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let v = beta * 0.5 * (s[i * m + j] + s[j * m + i]) + if i == j { 1.0 } else { 0.0 };
            if v != 0.0 {
                t.push((i, j, v));
            }
        }
    }
    cholesky_factor(&SparseMatrix::from_triplets(m, m, &t)?)
        .map_err(|e| e.in_block("S_tilde exact"))
}

/// Split ERPF2 application; sides whose bound holds use the plain RPF steps.
pub fn erpf2_alt_apply(op: &RpfOperator, r: &BlockVector) -> Result<BlockVector> {
    let (n_u, n_q, n_p) = op.dims();
    if r.dims() != op.dims() {
        return Err(Error::dims("erpf2_alt_apply", n_u + n_q + n_p, r.len()));
    }
    let mut t = BlockVector::zeros(n_u, n_q, n_p);
    alt_apply_parts(op, &r.u, &r.q, &r.p, &mut t.u, &mut t.q, &mut t.p);
    Ok(t)
}

pub(crate) fn alt_apply_parts(
    op: &RpfOperator,
    ru: &[f64],
    rq: &[f64],
    rp: &[f64],
    tu: &mut [f64],
    tq: &mut [f64],
    tp: &mut [f64],
) {
    let alpha = op.alpha();
    let inv = 1.0 / alpha;
    let (q, b) = (op.q(), op.b());

    // K-branch
    let mut yp = rp.to_vec();
    match op.k_side() {
        SideSolver::Method2(ctx) => {
            let sk = ctx.solver_c().expect("K solver present");
            let ss = ctx.solver_stilde().expect("S_tilde_K solver present");
            let mut xu = vec![0.0; ru.len()];
            sk.apply_into(ru, &mut xu);
            q.spmv_t_acc(-1.0, &xu, &mut yp);
            let xp = yp.clone();
            ss.apply_into(&xp, &mut yp);
            // r_u + α⁻¹Q y_p keeps the output on the same scale as the
            // nested application.
            xu.copy_from_slice(ru);
            q.spmv_acc(inv, &yp, &mut xu);
            sk.apply_into(&xu, tu);
        }
        side => {
            let mut xu = ru.to_vec();
            q.spmv_acc(inv, rp, &mut xu);
            side.solve_into(&xu, tu);
            q.spmv_t_acc(-1.0, tu, &mut yp);
        }
    }

    // A-branch
    match op.a_side() {
        SideSolver::Method2(ctx) => {
            let sa = ctx.solver_c().expect("A solver present");
            let ss = ctx.solver_stilde().expect("S_tilde_A solver present");
            let mut zq = vec![0.0; rq.len()];
            sa.apply_into(rq, &mut zq);
            b.spmv_t_acc(-op.gamma(), &zq, &mut yp);
            for v in yp.iter_mut() {
                *v *= inv;
            }
            ss.apply_into(&yp, tp);
            let mut x = rq.to_vec();
            b.spmv_acc(1.0, tp, &mut x);
            sa.apply_into(&x, tq);
        }
        side => {
            let mut zq = rq.to_vec();
            b.spmv_acc(inv, &yp, &mut zq);
            side.solve_into(&zq, tq);
            tp.copy_from_slice(&yp);
            b.spmv_t_acc(-op.gamma(), tq, tp);
            for v in tp.iter_mut() {
                *v *= inv;
            }
        }
    }
}
