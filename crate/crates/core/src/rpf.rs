//! RPF preconditioner: diagonal Schur surrogates, the relaxation parameter
//! α with its lower bounds α_K and α_A, the augmented blocks K̂ and Â, and
//! the four-factor application.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::block::{BlockVector, ThreeFieldSystem};
use crate::erpf::{self, select_variant, AugmentedBlockContext, SelectedVariant, SideSolver};
use crate::error::{Error, Result};
use crate::factor::{cholesky_factor, diagonal_solver, ic_factor, InnerSolver};
use crate::krylov::LinearOperator;
use crate::sparse::SparseMatrix;

/// Inner-solver family: direct factorizations (M_I) or incomplete Cholesky
/// with diagonal Ã⁻¹ standing in for A⁻¹ (M_II).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerPolicy {
    #[serde(alias = "m1", alias = "M_I")]
    Direct,
    #[serde(alias = "m2", alias = "M_II")]
    Ic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Native RPF on both sides.
    Rpf,
    /// Method 1 on every side whose bound is violated.
    Erpf1,
    /// Method 2 on every side whose bound is violated.
    Erpf2,
    /// Method 2 contexts applied through the split M₁/M₂ factorizations.
    Erpf2Alt,
    /// Per [`select_variant`]; the A-side ERPF2 case uses the split
    /// application.
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpfConfig {
    pub omega_k: f64,
    pub omega_a: f64,
    pub policy: InnerPolicy,
    pub rho_k: usize,
    pub rho_a: usize,
    pub rho_s: usize,
    pub variant: Variant,
    /// Stationary iterations for Method 1.
    pub n_in: usize,
    /// Replaces the estimated α (diagnostics and forced-regime tests).
    pub alpha_override: Option<f64>,
    /// Use the exact Schur matrix I + βFᵀC⁻¹F (dense) in Method 2.
    pub exact_schur: bool,
}

impl Default for RpfConfig {
    fn default() -> Self {
        Self {
            omega_k: 10.0,
            omega_a: 10.0,
            policy: InnerPolicy::Direct,
            rho_k: 0,
            rho_a: 0,
            rho_s: 0,
            variant: Variant::Auto,
            n_in: 2,
            alpha_override: None,
            exact_schur: false,
        }
    }
}

impl RpfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_k > 1.0) || !(self.omega_a > 1.0) {
            return Err(Error::Config(format!(
                "omega_k and omega_a must exceed 1 (got {}, {})",
                self.omega_k, self.omega_a
            )));
        }
        if self.n_in == 0 {
            return Err(Error::Config("n_in must be at least 1".into()));
        }
        if let Some(a) = self.alpha_override {
            if !(a > 0.0) {
                return Err(Error::Config(format!(
                    "alpha_override must be positive, got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Returns (Ã, D_A) with a_i = (Σ_j |A_ij|)^{1/2} and D_A = diag(Bᵀ Ã⁻¹ B).
pub fn compute_da(a: &SparseMatrix, b: &SparseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.n_rows() != b.n_rows() {
        return Err(Error::dims("compute_da", a.n_rows(), b.n_rows()));
    }
    let a_tilde: Vec<f64> = a.row_abs_sums().iter().map(|s| s.sqrt()).collect();
    if let Some(i) = a_tilde.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            what: "row absolute sum of A",
            index: i,
            value: a_tilde[i],
        });
    }
    let mut d = vec![0.0; b.n_cols()];
    for (i, j, v) in b.iter() {
        d[j] += v * v / a_tilde[i];
    }
    Ok((a_tilde, d))
}

/// D_K = diag(Qᵀ diag(K)⁻¹ Q).
pub fn compute_dk(k: &SparseMatrix, q: &SparseMatrix) -> Result<Vec<f64>> {
    if k.n_rows() != q.n_rows() {
        return Err(Error::dims("compute_dk", k.n_rows(), q.n_rows()));
    }
    let diag = k.diagonal_of()?;
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            what: "diagonal of K",
            index: i,
            value: diag[i],
        });
    }
    let mut d = vec![0.0; q.n_cols()];
    for (i, j, v) in q.iter() {
        d[j] += v * v / diag[i];
    }
    Ok(d)
}

/// α = √γ / n_p · Σ √(D_K D_A).
pub fn compute_alpha(d_k: &[f64], d_a: &[f64], gamma: f64) -> Result<f64> {
    if d_k.is_empty() || d_k.len() != d_a.len() {
        return Err(Error::dims("compute_alpha", d_k.len().max(1), d_a.len()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let s: f64 = d_k.iter().zip(d_a).map(|(k, a)| (k * a).sqrt()).sum();
    Ok(gamma.sqrt() * s / d_k.len() as f64)
}

/// (α_K, α_A) = (max D_K / (ω_K − 1), γ max D_A / (ω_A − 1)).
pub fn compute_alpha_bounds(
    d_k: &[f64],
    d_a: &[f64],
    gamma: f64,
    omega_k: f64,
    omega_a: f64,
) -> Result<(f64, f64)> {
    if d_k.is_empty() || d_a.is_empty() {
        return Err(Error::Invalid("empty surrogate vectors".into()));
    }
    if !(omega_k > 1.0) || !(omega_a > 1.0) || !(gamma > 0.0) {
        return Err(Error::Invalid(
            "omega must exceed 1 and gamma be positive".into(),
        ));
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        max(d_k) / (omega_k - 1.0),
        gamma * max(d_a) / (omega_a - 1.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSide {
    K,
    A,
}

/// Time step at which α/α_K (side K) or α/α_A (side A) equals `ratio`.
/// Uses α ∝ √γ, α_K independent of γ and α_A ∝ γ.
pub fn time_step_for_ratio(
    sys: &ThreeFieldSystem,
    cfg: &RpfConfig,
    side: BoundSide,
    ratio: f64,
) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(Error::Invalid(format!(
            "ratio must be positive, got {ratio}"
        )));
    }
    let (_, d_a) = compute_da(sys.a(), sys.b())?;
    let d_k = compute_dk(sys.k(), sys.q())?;
    let c1 = compute_alpha(&d_k, &d_a, 1.0)?;
    let (alpha_k, c2) = compute_alpha_bounds(&d_k, &d_a, 1.0, cfg.omega_k, cfg.omega_a)?;
    let gamma = match side {
        BoundSide::K => (ratio * alpha_k / c1).powi(2),
        BoundSide::A => (c1 / (ratio * c2)).powi(2),
    };
    Ok(gamma / sys.theta())
}

/// C + s·FFᵀ.
pub(crate) fn augment(c: &SparseMatrix, fft: &SparseMatrix, s: f64) -> Result<SparseMatrix> {
    c.add_scaled(s, fft)
}

#[derive(Debug, Clone)]
pub struct RpfOperator {
    n_u: usize,
    n_q: usize,
    n_p: usize,
    gamma: f64,
    alpha: f64,
    alpha_k: f64,
    alpha_a: f64,
    d_k: Vec<f64>,
    d_a: Vec<f64>,
    a_tilde: Vec<f64>,
    p_norm: f64,
    q: SparseMatrix,
    b: SparseMatrix,
    pub(crate) k_side: SideSolver,
    pub(crate) a_side: SideSolver,
    variant: Variant,
    selected: SelectedVariant,
    /// Apply through the split factorizations instead of nested side solves.
    split: bool,
    setup_time: f64,
}

fn factor_for(
    m: &SparseMatrix,
    policy: InnerPolicy,
    rho: usize,
    block: &'static str,
) -> Result<InnerSolver> {
    match policy {
        InnerPolicy::Direct => cholesky_factor(m),
        InnerPolicy::Ic => ic_factor(m, rho),
    }
    .map_err(|e| e.in_block(block))
}

/// Setup: surrogates, α, bounds, augmented blocks and inner solvers.
pub fn rpf_setup(sys: &ThreeFieldSystem, cfg: &RpfConfig) -> Result<RpfOperator> {
    cfg.validate()?;
    let start = Instant::now();
    let gamma = sys.gamma();
    let (a_tilde, d_a) = compute_da(sys.a(), sys.b())?;
    let d_k = compute_dk(sys.k(), sys.q())?;
    let alpha = match cfg.alpha_override {
        Some(a) => a,
        None => compute_alpha(&d_k, &d_a, gamma)?,
    };
    if !(alpha > 0.0) {
        return Err(Error::NonPositive {
            what: "relaxation parameter alpha",
            index: 0,
            value: alpha,
        });
    }
    let (alpha_k, alpha_a) = compute_alpha_bounds(&d_k, &d_a, gamma, cfg.omega_k, cfg.omega_a)?;
    let p_norm = sys.p().norm_inf();
    if alpha <= p_norm {
        log::warn!("alpha = {alpha:e} does not exceed ||P||_inf = {p_norm:e}");
    }

    let selected = select_variant(alpha, alpha_k, alpha_a);
    let k_low = alpha < alpha_k;
    let a_low = alpha < alpha_a;
    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Native,
        M1,
        M2,
    }
    let pick = |low: bool| -> Kind {
        if !low {
            return Kind::Native;
        }
        match cfg.variant {
            Variant::Rpf => Kind::Native,
            Variant::Erpf1 => Kind::M1,
            Variant::Erpf2 | Variant::Erpf2Alt => Kind::M2,
            Variant::Auto => Kind::Native,
        }
    };
    let (k_kind, a_kind) = match cfg.variant {
        Variant::Auto => match selected {
            SelectedVariant::Erpf1KSide => (Kind::M1, Kind::Native),
            SelectedVariant::Erpf2ASide => (Kind::Native, Kind::M2),
            SelectedVariant::Rpf => (Kind::Native, Kind::Native),
        },
        _ => (pick(k_low), pick(a_low)),
    };

    let qqt = sys.q().spgemm(&sys.q().transpose())?;
    let bbt = sys.b().spgemm(&sys.b().transpose())?;

    let k_side = match k_kind {
        Kind::Native => {
            let k_hat = augment(sys.k(), &qqt, 1.0 / alpha.max(alpha_k))?;
            let solver = factor_for(&k_hat, cfg.policy, cfg.rho_k, "K_hat")?;
            SideSolver::Native {
                matrix: k_hat,
                solver,
            }
        }
        Kind::M1 => {
            let ctx = AugmentedBlockContext::with_product(
                sys.k().clone(),
                sys.q().clone(),
                &qqt,
                1.0 / alpha,
                1.0 / alpha_k,
                cfg.n_in,
            )?;
            let s = factor_for(ctx.c_hat_ell(), cfg.policy, cfg.rho_k, "K_hat_ell")?;
            SideSolver::Method1(ctx.with_chat_ell_solver(s)?)
        }
        Kind::M2 => {
            let ctx = AugmentedBlockContext::with_product(
                sys.k().clone(),
                sys.q().clone(),
                &qqt,
                1.0 / alpha,
                1.0 / alpha_k,
                cfg.n_in,
            )?;
            let sc = factor_for(sys.k(), cfg.policy, cfg.rho_k, "K")?;
            let st = if cfg.exact_schur {
                erpf::exact_stilde(&sc, sys.q(), 1.0 / alpha)?
            } else {
                erpf::build_stilde_k(&d_k, alpha)?
            };
            SideSolver::Method2(ctx.with_c_solver(sc)?.with_stilde_solver(st)?)
        }
    };

    let a_side = match a_kind {
        Kind::Native => {
            let a_hat = augment(sys.a(), &bbt, gamma / alpha.max(alpha_a))?;
            let solver = factor_for(&a_hat, cfg.policy, cfg.rho_a, "A_hat")?;
            SideSolver::Native {
                matrix: a_hat,
                solver,
            }
        }
        Kind::M1 => {
            let ctx = AugmentedBlockContext::with_product(
                sys.a().clone(),
                sys.b().clone(),
                &bbt,
                gamma / alpha,
                gamma / alpha_a,
                cfg.n_in,
            )?;
            let s = factor_for(ctx.c_hat_ell(), cfg.policy, cfg.rho_a, "A_hat_ell")?;
            SideSolver::Method1(ctx.with_chat_ell_solver(s)?)
        }
        Kind::M2 => {
            let ctx = AugmentedBlockContext::with_product(
                sys.a().clone(),
                sys.b().clone(),
                &bbt,
                gamma / alpha,
                gamma / alpha_a,
                cfg.n_in,
            )?;
            let sc = match cfg.policy {
                InnerPolicy::Direct => factor_for(sys.a(), cfg.policy, cfg.rho_a, "A")?,
                InnerPolicy::Ic => diagonal_solver(&a_tilde).map_err(|e| e.in_block("A_tilde"))?,
            };
            let st = if cfg.exact_schur {
                erpf::exact_stilde(&sc, sys.b(), gamma / alpha)?
            } else {
                erpf::build_stilde_a(sys.b(), &a_tilde, gamma, alpha, cfg.policy, cfg.rho_s)?
            };
            SideSolver::Method2(ctx.with_c_solver(sc)?.with_stilde_solver(st)?)
        }
    };

    Ok(RpfOperator {
        n_u: sys.n_u(),
        n_q: sys.n_q(),
        n_p: sys.n_p(),
        gamma,
        alpha,
        alpha_k,
        alpha_a,
        d_k,
        d_a,
        a_tilde,
        p_norm,
        q: sys.q().clone(),
        b: sys.b().clone(),
        k_side,
        a_side,
        variant: cfg.variant,
        selected,
        split: cfg.variant == Variant::Erpf2Alt
            || (cfg.variant == Variant::Auto && a_kind == Kind::M2),
        setup_time: start.elapsed().as_secs_f64(),
    })
}

impl RpfOperator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn alpha_k(&self) -> f64 {
        self.alpha_k
    }
    pub fn alpha_a(&self) -> f64 {
        self.alpha_a
    }
    pub fn alpha_used_k(&self) -> f64 {
        self.alpha.max(self.alpha_k)
    }
    pub fn alpha_used_a(&self) -> f64 {
        self.alpha.max(self.alpha_a)
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn d_k(&self) -> &[f64] {
        &self.d_k
    }
    pub fn d_a(&self) -> &[f64] {
        &self.d_a
    }
    pub fn a_tilde(&self) -> &[f64] {
        &self.a_tilde
    }
    pub fn q(&self) -> &SparseMatrix {
        &self.q
    }
    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }
    /// K̂ when the K-side is solved natively.
    pub fn k_hat(&self) -> Option<&SparseMatrix> {
        self.k_side.native_matrix()
    }
    /// Â when the A-side is solved natively.
    pub fn a_hat(&self) -> Option<&SparseMatrix> {
        self.a_side.native_matrix()
    }
    pub fn k_side(&self) -> &SideSolver {
        &self.k_side
    }
    pub fn a_side(&self) -> &SideSolver {
        &self.a_side
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn selected_variant(&self) -> SelectedVariant {
        self.selected
    }
    /// Wall-clock seconds spent in [`rpf_setup`].
    pub fn setup_time(&self) -> f64 {
        self.setup_time
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_u, self.n_q, self.n_p)
    }

    /// Short label of what each side actually runs, e.g. `erpf2-A-side`.
    pub fn variant_label(&self) -> String {
        match self.variant {
            Variant::Erpf2Alt => "erpf2-alt".into(),
            _ if self.split => "erpf2-A-side".into(),
            _ => match (self.k_side.label(), self.a_side.label()) {
                ("native", "native") => "rpf".into(),
                (k, "native") => format!("{k}-K-side"),
                ("native", a) => format!("{a}-A-side"),
                (k, a) => format!("{k}-K-side+{a}-A-side"),
            },
        }
    }

    /// Key-value setup summary.
    pub fn setup_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_u = {}", self.n_u);
        let _ = writeln!(s, "n_q = {}", self.n_q);
        let _ = writeln!(s, "n_p = {}", self.n_p);
        let _ = writeln!(s, "gamma = {:e}", self.gamma);
        let _ = writeln!(s, "alpha = {:e}", self.alpha);
        let _ = writeln!(s, "alpha_K = {:e}", self.alpha_k);
        let _ = writeln!(s, "alpha_A = {:e}", self.alpha_a);
        let _ = writeln!(s, "alpha/alpha_K = {:e}", self.alpha / self.alpha_k);
        let _ = writeln!(s, "alpha/alpha_A = {:e}", self.alpha / self.alpha_a);
        let _ = writeln!(s, "norm_inf(P) = {:e}", self.p_norm);
        let _ = writeln!(s, "variant = {}", self.variant_label());
        let _ = writeln!(s, "k_side = {}", self.k_side.describe());
        let _ = writeln!(s, "a_side = {}", self.a_side.describe());
        let _ = writeln!(s, "setup_seconds_wall = {:.6}", self.setup_time);
        s
    }

    /// t = M⁻¹r.
    pub fn rpf_apply(&self, r: &BlockVector) -> Result<BlockVector> {
        if r.dims() != self.dims() {
            return Err(Error::dims(
                "rpf_apply",
                self.n_u + self.n_q + self.n_p,
                r.len(),
            ));
        }
        let mut t = BlockVector::zeros(self.n_u, self.n_q, self.n_p);
        self.apply_parts(&r.u, &r.q, &r.p, &mut t.u, &mut t.q, &mut t.p);
        Ok(t)
    }

    pub(crate) fn apply_parts(
        &self,
        ru: &[f64],
        rq: &[f64],
        rp: &[f64],
        tu: &mut [f64],
        tq: &mut [f64],
        tp: &mut [f64],
    ) {
        if self.split {
            erpf::alt_apply_parts(self, ru, rq, rp, tu, tq, tp);
        } else {
            self.nested_apply(ru, rq, rp, tu, tq, tp);
        }
    }

    /// The six-step application with the configured side solvers.
    pub(crate) fn nested_apply(
        &self,
        ru: &[f64],
        rq: &[f64],
        rp: &[f64],
        tu: &mut [f64],
        tq: &mut [f64],
        tp: &mut [f64],
    ) {
        let inv = 1.0 / self.alpha;
        let mut xu = ru.to_vec();
        self.q.spmv_acc(inv, rp, &mut xu);
        self.k_side.solve_into(&xu, tu);
        let mut yp = rp.to_vec();
        self.q.spmv_t_acc(-1.0, tu, &mut yp);
        let mut zq = rq.to_vec();
        self.b.spmv_acc(inv, &yp, &mut zq);
        self.a_side.solve_into(&zq, tq);
        tp.copy_from_slice(&yp);
        self.b.spmv_t_acc(-self.gamma, tq, tp);
        for v in tp.iter_mut() {
            *v *= inv;
        }
    }
}

impl LinearOperator for RpfOperator {
    fn dim(&self) -> usize {
        self.n_u + self.n_q + self.n_p
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (xu, rest) = x.split_at(self.n_u);
        let (xq, xp) = rest.split_at(self.n_q);
        let (yu, rest) = y.split_at_mut(self.n_u);
        let (yq, yp) = rest.split_at_mut(self.n_q);
        self.apply_parts(xu, xq, xp, yu, yq, yp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{norm2, DenseMatrix};
    use crate::testing::random_system;
    use crate::testing::random_vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn da_examples() {
        let (at, d) = compute_da(&SparseMatrix::identity(2), &SparseMatrix::identity(2)).unwrap();
        assert_eq!((at, d), (vec![1.0, 1.0], vec![1.0, 1.0]));
        let a = SparseMatrix::from_diagonal(&[4.0, 4.0]);
        let b = SparseMatrix::from_triplets(2, 1, &[(0, 0, 2.0)]).unwrap();
        let (at, d) = compute_da(&a, &b).unwrap();
        assert_eq!(at, vec![2.0, 2.0]);
        assert_eq!(d, vec![2.0]);
        let z = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(compute_da(&z, &SparseMatrix::identity(2)).is_err());
    }

    #[test]
    fn da_dk_match_dense_oracle() {
        let sys = random_system(21, 30, 25, 8, false);
        let (at, d_a) = compute_da(sys.a(), sys.b()).unwrap();
        let ad = sys.a().to_dense().unwrap();
        let bd = sys.b().to_dense().unwrap().to_nalgebra();
        for i in 0..25 {
            let s: f64 = (0..25).map(|j| ad.get(i, j).abs()).sum();
            assert!((at[i] - s.sqrt()).abs() <= 1e-15 * s.sqrt());
        }
        let ainv = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            25,
            at.iter().map(|v| 1.0 / v),
        ));
        let oracle = bd.transpose() * ainv * &bd;
        for j in 0..8 {
            assert!((d_a[j] - oracle[(j, j)]).abs() <= 1e-13 * oracle[(j, j)]);
        }
        let d_k = compute_dk(sys.k(), sys.q()).unwrap();
        let qd = sys.q().to_dense().unwrap().to_nalgebra();
        let kd = sys.k().diagonal_of().unwrap();
        let kinv = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            30,
            kd.iter().map(|v| 1.0 / v),
        ));
        let oracle = qd.transpose() * kinv * &qd;
        for j in 0..8 {
            assert!((d_k[j] - oracle[(j, j)]).abs() <= 1e-13 * oracle[(j, j)]);
        }
    }

    #[test]
    fn dk_examples() {
        assert_eq!(
            compute_dk(&SparseMatrix::identity(3), &SparseMatrix::identity(3)).unwrap(),
            vec![1.0; 3]
        );
        let k = SparseMatrix::from_diagonal(&[4.0]);
        let q = SparseMatrix::from_diagonal(&[2.0]);
        assert_eq!(compute_dk(&k, &q).unwrap(), vec![1.0]);
        assert!(compute_dk(&SparseMatrix::from_diagonal(&[0.0]), &q).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(compute_alpha(&[1.0; 4], &[1.0; 4], 4.0).unwrap(), 2.0);
        assert_eq!(compute_alpha(&[4.0], &[9.0], 1.0).unwrap(), 6.0);
        let (dk, da) = ([0.3, 2.0, 1.1], [0.5, 0.7, 4.0]);
        let a1 = compute_alpha(&dk, &da, 0.37).unwrap();
        let a4 = compute_alpha(&dk, &da, 4.0 * 0.37).unwrap();
        assert!((a4 - 2.0 * a1).abs() <= 1e-15 * a4);
        assert!(compute_alpha(&[], &[], 1.0).is_err());
    }

    #[test]
    fn bound_examples() {
        assert_eq!(
            compute_alpha_bounds(&[1.0, 3.0], &[1.0], 1.0, 4.0, 10.0)
                .unwrap()
                .0,
            1.0
        );
        assert_eq!(
            compute_alpha_bounds(&[1.0], &[2.0], 5.0, 10.0, 11.0)
                .unwrap()
                .1,
            1.0
        );
        let (k1, a1) = compute_alpha_bounds(&[1.0, 2.0], &[3.0, 1.0], 1.0, 10.0, 10.0).unwrap();
        let (k2, a2) = compute_alpha_bounds(&[1.0, 2.0], &[3.0, 1.0], 7.0, 10.0, 10.0).unwrap();
        assert_eq!(k1, k2);
        assert!((a2 - 7.0 * a1).abs() < 1e-14);
        assert!(compute_alpha_bounds(&[1.0], &[1.0], 1.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn decoupled_blocks_are_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let k = crate::testing::random_spd(&mut rng, 12, 0.2);
        let a = crate::testing::random_spd(&mut rng, 9, 0.2);
        let sys = ThreeFieldSystem::new(
            k.clone(),
            a.clone(),
            SparseMatrix::zeros(3, 3),
            SparseMatrix::zeros(12, 3),
            SparseMatrix::zeros(9, 3),
            1.0,
            0.1,
        )
        .unwrap();
        let cfg = RpfConfig {
            alpha_override: Some(1.0),
            variant: Variant::Rpf,
            ..Default::default()
        };
        let op = rpf_setup(&sys, &cfg).unwrap();
        assert_eq!(
            op.k_hat().unwrap().add_scaled(-1.0, &k).unwrap().max_abs(),
            0.0
        );
        assert_eq!(
            op.a_hat().unwrap().add_scaled(-1.0, &a).unwrap().max_abs(),
            0.0
        );
    }

    fn setup_random(seed: u64, alpha: f64) -> (ThreeFieldSystem, RpfOperator) {
        let sys = random_system(seed, 40, 30, 10, true);
        let cfg = RpfConfig {
            alpha_override: Some(alpha),
            variant: Variant::Rpf,
            ..Default::default()
        };
        let op = rpf_setup(&sys, &cfg).unwrap();
        (sys, op)
    }

    #[test]
    fn augmented_blocks_and_guards() {
        let (sys, op) = setup_random(23, 0.7);
        assert!(op.alpha_used_k() >= op.alpha_k() && op.alpha_used_a() >= op.alpha_a());
        let qqt = sys.q().spgemm(&sys.q().transpose()).unwrap();
        let expect = sys.k().add_scaled(1.0 / op.alpha_used_k(), &qqt).unwrap();
        let k_hat = op.k_hat().unwrap();
        assert!(k_hat.add_scaled(-1.0, &expect).unwrap().max_abs() <= 1e-13 * k_hat.max_abs());
        let bbt = sys.b().spgemm(&sys.b().transpose()).unwrap();
        let expect = sys
            .a()
            .add_scaled(sys.gamma() / op.alpha_used_a(), &bbt)
            .unwrap();
        let a_hat = op.a_hat().unwrap();
        assert!(a_hat.add_scaled(-1.0, &expect).unwrap().max_abs() <= 1e-13 * a_hat.max_abs());
    }

    /// Dense (1/α)·M₁M₂ with αI_u in the (1,1) block of M₂.
    fn dense_m(sys: &ThreeFieldSystem, alpha: f64) -> DenseMatrix {
        let (n_u, n_q, n_p) = sys.dims();
        let n = n_u + n_q + n_p;
        let g = sys.gamma();
        let k = sys.k().to_dense().unwrap().to_nalgebra();
        let q = sys.q().to_dense().unwrap().to_nalgebra();
        let a = sys.a().to_dense().unwrap().to_nalgebra();
        let b = sys.b().to_dense().unwrap().to_nalgebra();
        let mut m1 = nalgebra::DMatrix::zeros(n, n);
        let mut m2 = nalgebra::DMatrix::zeros(n, n);
        let (ou, oq, op) = (0, n_u, n_u + n_q);
        m1.view_mut((ou, ou), (n_u, n_u)).copy_from(&k);
        m1.view_mut((ou, op), (n_u, n_p)).copy_from(&(-&q));
        m1.view_mut((op, ou), (n_p, n_u)).copy_from(&q.transpose());
        for i in 0..n_q {
            m1[(oq + i, oq + i)] = alpha;
        }
        for i in 0..n_p {
            m1[(op + i, op + i)] = alpha;
            m2[(op + i, op + i)] = alpha;
        }
        for i in 0..n_u {
            m2[(i, i)] = alpha;
        }
        m2.view_mut((oq, oq), (n_q, n_q)).copy_from(&a);
        m2.view_mut((oq, op), (n_q, n_p)).copy_from(&(-&b));
        m2.view_mut((op, oq), (n_p, n_q))
            .copy_from(&(b.transpose() * g));
        DenseMatrix::from_nalgebra(&((m1 * m2) / alpha))
    }

    #[test]
    fn apply_inverts_dense_factorization() {
        // α above both bounds so K̂, Â use α itself.
        let (sys, op) = setup_random(24, 50.0);
        assert!(op.alpha() > op.alpha_k() && op.alpha() > op.alpha_a());
        let m = dense_m(&sys, op.alpha());
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let e = random_vec(&mut rng, sys.size());
        let r = m.matvec(&e).unwrap();
        let (n_u, n_q, _) = sys.dims();
        let t = op.rpf_apply(&BlockVector::from_flat(&r, n_u, n_q)).unwrap();
        assert!(rel(&t.to_flat(), &e) <= 1e-8);
    }

    #[test]
    fn apply_zero_and_linearity() {
        let (sys, op) = setup_random(26, 1.3);
        let (n_u, n_q, n_p) = sys.dims();
        let z = op.rpf_apply(&BlockVector::zeros(n_u, n_q, n_p)).unwrap();
        assert!(z.to_flat().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let r1 = random_vec(&mut rng, sys.size());
        let r2 = random_vec(&mut rng, sys.size());
        let sum: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + b).collect();
        let lhs = op.apply(&sum);
        let rhs: Vec<f64> = op
            .apply(&r1)
            .iter()
            .zip(op.apply(&r2))
            .map(|(a, b)| a + b)
            .collect();
        assert!(rel(&lhs, &rhs) <= 1e-12);
        assert!(op
            .rpf_apply(&BlockVector::zeros(n_u, n_q, n_p + 1))
            .is_err());
    }

    #[test]
    fn time_step_hits_requested_ratio() {
        let sys = random_system(29, 30, 20, 6, false);
        let cfg = RpfConfig::default();
        for (side, ratio) in [
            (BoundSide::K, 0.25),
            (BoundSide::A, 0.5),
            (BoundSide::K, 3.0),
        ] {
            let dt = time_step_for_ratio(&sys, &cfg, side, ratio).unwrap();
            let op = rpf_setup(&sys.with_time_step(1.0, dt).unwrap(), &cfg).unwrap();
            let got = match side {
                BoundSide::K => op.alpha() / op.alpha_k(),
                BoundSide::A => op.alpha() / op.alpha_a(),
            };
            assert!((got - ratio).abs() <= 1e-12 * ratio);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = RpfConfig::default();
        assert!(c.validate().is_ok());
        c.omega_k = 1.0;
        assert!(c.validate().is_err());
        let c = RpfConfig {
            n_in: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let parsed: RpfConfig =
            toml::from_str("policy = \"ic\"\nvariant = \"erpf2-alt\"\nrho_k = 5").unwrap();
        assert_eq!(parsed.policy, InnerPolicy::Ic);
        assert_eq!(parsed.variant, Variant::Erpf2Alt);
        assert_eq!(parsed.rho_k, 5);
        assert!(toml::from_str::<RpfConfig>("omega = 3").is_err());
    }

    #[test]
    fn setup_report_lists_parameters() {
        let (_, op) = setup_random(28, 2.0);
        let rep = op.setup_report();
        for key in [
            "alpha = ",
            "alpha_K = ",
            "alpha/alpha_A = ",
            "variant = rpf",
            "setup_seconds_wall",
        ] {
            assert!(rep.contains(key), "missing {key} in\n{rep}");
        }
    }
}
