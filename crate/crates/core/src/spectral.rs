//! Dense spectral diagnostics for small instances: generalized eigenvalues
//! of augmented-block pairs, the Method 1 iteration-matrix radius,
//! singular-value profiles and the trace objective used to pick α.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::{DenseMatrix, SparseMatrix, DENSE_BUDGET};

/// Largest dimension accepted by the dense eigen-solvers.
pub const SPECTRAL_BUDGET: usize = 1500;

fn check_size(n: usize) -> Result<()> {
    if n > SPECTRAL_BUDGET {
        return Err(Error::OracleBudget {
            rows: n,
            cols: n,
            budget: SPECTRAL_BUDGET * SPECTRAL_BUDGET,
        });
    }
    Ok(())
}

fn dense(m: &SparseMatrix) -> Result<DMatrix<f64>> {
    Ok(m.to_dense()?.to_nalgebra())
}

fn symmetric_eigs(m: DMatrix<f64>) -> Vec<f64> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// All λ with Ml v = λ Mr v, ascending. `Mr` must be SPD.
pub fn generalized_eigs(ml: &DenseMatrix, mr: &DenseMatrix) -> Result<Vec<f64>> {
    let n = ml.n_rows;
    if ml.n_cols != n || mr.n_rows != n || mr.n_cols != n {
        return Err(Error::dims("generalized_eigs", n, mr.n_rows));
    }
    check_size(n)?;
    generalized_eigs_na(ml.to_nalgebra(), mr.to_nalgebra())
}

fn generalized_eigs_na(ml: DMatrix<f64>, mr: DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = mr.cholesky().ok_or(Error::NotSpd {
        index: 0,
        value: f64::NAN,
    })?;
    let l = chol.l();
    // L⁻¹ Ml L⁻ᵀ
    let x = l.solve_lower_triangular(&ml).expect("non-singular factor");
    let y = l
        .solve_lower_triangular(&x.transpose())
        .expect("non-singular factor");
    Ok(symmetric_eigs(y))
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    /// Generalized eigenvalues of (Ĉ, Ĉ_ℓ), ascending (all real).
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue of S_C = FᵀC⁻¹F.
    pub mu1: f64,
    /// (βμ₁ + 1)/(β_ℓμ₁ + 1).
    pub bound_lambda1: f64,
    /// Largest distance of an eigenvalue outside [1, λ₁].
    pub max_violation: f64,
    /// (βμ + 1)/(β_ℓμ + 1) over spec(S_C) together with 1 for the kernel, ascending.
    pub mapped: Vec<f64>,
}

/// Generalized spectrum of (C + βFFᵀ, C + β_ℓFFᵀ) against its upper bound.
pub fn augmented_spectrum_bound(
    c: &SparseMatrix,
    f: &SparseMatrix,
    beta: f64,
    beta_ell: f64,
) -> Result<EigenReport> {
    if !(beta_ell > 0.0) || beta < beta_ell {
        return Err(Error::Invalid(format!(
            "need beta >= beta_ell > 0 (beta = {beta}, beta_ell = {beta_ell})"
        )));
    }
    let n = c.n_rows();
    if f.n_rows() != n {
        return Err(Error::dims("augmented_spectrum_bound", n, f.n_rows()));
    }
    check_size(n)?;
    let cd = dense(c)?;
    let fd = dense(f)?;
    let chol = cd.clone().cholesky().ok_or(Error::NotSpd {
        index: 0,
        value: f64::NAN,
    })?;
    let s_c = fd.transpose() * chol.solve(&fd);
    let mu = symmetric_eigs(s_c);
    let mu1 = mu.last().copied().unwrap_or(0.0).max(0.0);
    let map = |m: f64| (beta * m + 1.0) / (beta_ell * m + 1.0);
    let bound = map(mu1);
    let fft = &fd * fd.transpose();
    let ev = generalized_eigs_na(&cd + &fft * beta, &cd + &fft * beta_ell)?;
    let max_violation = ev
        .iter()
        .map(|&l| (1.0 - l).max(l - bound).max(0.0))
        .fold(0.0, f64::max);
    let mut mapped: Vec<f64> = mu.iter().map(|&m| map(m.max(0.0))).collect();
    mapped.extend(std::iter::repeat_n(1.0, n.saturating_sub(mu.len())));
    mapped.sort_by(f64::total_cmp);
    Ok(EigenReport {
        eigenvalues: ev,
        mu1,
        bound_lambda1: bound,
        max_violation,
        mapped,
    })
}

/// Spectral radius of G = I − (β_ℓ/β)Ĉ_ℓ⁻¹Ĉ by power iteration, using a
/// dense exact Ĉ_ℓ⁻¹. G is self-adjoint in the Ĉ_ℓ inner product, which
/// the Rayleigh quotient exploits.
pub fn iteration_matrix_radius(
    c: &SparseMatrix,
    f: &SparseMatrix,
    beta: f64,
    beta_ell: f64,
) -> Result<f64> {
    if !(beta > 0.0) || !(beta_ell > 0.0) {
        return Err(Error::Invalid("beta and beta_ell must be positive".into()));
    }
    let n = c.n_rows();
    check_size(n)?;
    let cd = dense(c)?;
    let fd = dense(f)?;
    let fft = &fd * fd.transpose();
    let c_hat = &cd + &fft * beta;
    let c_ell = &cd + &fft * beta_ell;
    let chol = c_ell.clone().cholesky().ok_or(Error::NotSpd {
        index: 0,
        value: f64::NAN,
    })?;
    let g = DMatrix::identity(n, n) - chol.solve(&c_hat) * (beta_ell / beta);

    // deterministic, generic start vector
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 104729) as f64 / 104729.0);
    let mut est: f64 = 0.0;
    for _ in 0..20_000 {
        let gx = &g * &x;
        let num = x.dot(&(&c_ell * &gx));
        let den = x.dot(&(&c_ell * &x));
        let new = (num / den).abs();
        let norm = gx.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x = gx / norm;
        if (new - est).abs() <= 1e-13 * new.max(1e-300) {
            return Ok(new);
        }
        est = new;
    }
    Ok(est)
}

/// Singular values in descending order, from the eigenvalues of MᵀM (or MMᵀ).
pub fn singular_values(m: &SparseMatrix) -> Result<Vec<f64>> {
    let (r, c) = (m.n_rows(), m.n_cols());
    check_size(r.min(c))?;
    if r * c > DENSE_BUDGET {
        return Err(Error::OracleBudget {
            rows: r,
            cols: c,
            budget: DENSE_BUDGET,
        });
    }
    let d = dense(m)?;
    let gram = if c <= r {
        d.transpose() * &d
    } else {
        &d * d.transpose()
    };
    let mut sv: Vec<f64> = symmetric_eigs(gram)
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    sv.reverse();
    Ok(sv)
}

/// Pressure-space model of the preconditioned trace:
/// Z_α = α(αI + S_K)⁻¹ S (αI + γS_A)⁻¹ with S = P + S_K + γS_A.
#[derive(Debug, Clone)]
pub struct TraceModel {
    pub s_k: DMatrix<f64>,
    pub s_a: DMatrix<f64>,
    pub p: DVector<f64>,
    pub gamma: f64,
}

impl TraceModel {
    /// Exact S_K = QᵀK⁻¹Q and S_A = BᵀA⁻¹B from a system.
    pub fn from_system(sys: &crate::block::ThreeFieldSystem) -> Result<Self> {
        check_size(sys.n_p())?;
        let schur =
            |c: &SparseMatrix, f: &SparseMatrix, what: &'static str| -> Result<DMatrix<f64>> {
                let cd = dense(c)?;
                let fd = dense(f)?;
                let chol = cd
                    .cholesky()
                    .ok_or(Error::NotSpd {
                        index: 0,
                        value: f64::NAN,
                    })
                    .map_err(|e| e.in_block(what))?;
                let s = fd.transpose() * chol.solve(&fd);
                Ok((&s + s.transpose()) * 0.5)
            };
        Ok(Self {
            s_k: schur(sys.k(), sys.q(), "K")?,
            s_a: schur(sys.a(), sys.b(), "A")?,
            p: DVector::from_vec(sys.p().diagonal_of()?),
            gamma: sys.gamma(),
        })
    }

    /// Diagonal surrogates D_K, D_A in place of S_K, S_A.
    pub fn diagonal(d_k: &[f64], d_a: &[f64], p: &[f64], gamma: f64) -> Result<Self> {
        if d_k.len() != d_a.len() || p.len() != d_k.len() {
            return Err(Error::dims("TraceModel::diagonal", d_k.len(), d_a.len()));
        }
        check_size(d_k.len())?;
        Ok(Self {
            s_k: DMatrix::from_diagonal(&DVector::from_column_slice(d_k)),
            s_a: DMatrix::from_diagonal(&DVector::from_column_slice(d_a)),
            p: DVector::from_column_slice(p),
            gamma,
        })
    }

    pub fn n_p(&self) -> usize {
        self.p.len()
    }

    pub fn s_full(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.p) + &self.s_k + &self.s_a * self.gamma
    }

    /// n_p − tr Z_α.
    pub fn objective(&self, alpha: f64) -> f64 {
        let n = self.n_p();
        let eye = DMatrix::<f64>::identity(n, n);
        let left = (&eye * alpha + &self.s_k).lu();
        let right = (&eye * alpha + &self.s_a * self.gamma).transpose().lu();
        // (S (αI + γS_A)⁻¹)ᵀ = (αI + γS_A)⁻ᵀ Sᵀ
        let st = right
            .solve(&self.s_full().transpose())
            .expect("non-singular shift");
        let z = left.solve(&st.transpose()).expect("non-singular shift") * alpha;
        n as f64 - z.trace()
    }
}

pub fn trace_objective_scan(tm: &TraceModel, alpha_grid: &[f64]) -> Result<Vec<f64>> {
    if let Some(a) = alpha_grid.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Invalid(format!(
            "alpha grid must be positive, found {a}"
        )));
    }
    Ok(alpha_grid.iter().map(|&a| tm.objective(a)).collect())
}

/// `n` points spaced logarithmically over [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `index,value` CSV.
pub fn write_values_csv<W: Write>(mut out: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:e}")?;
    }
    Ok(())
}

/// `index,real,imag` CSV; the imaginary column is zero for these real spectra.
pub fn write_eigen_csv<W: Write>(mut out: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,real,imag")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:e},0")?;
    }
    Ok(())
}

pub fn write_csv_file(path: impl AsRef<Path>, values: &[f64], eigen: bool) -> Result<()> {
    let path = path.as_ref();
    std::fs::File::create(path)
        .and_then(|f| {
            let w = std::io::BufWriter::new(f);
            if eigen {
                write_eigen_csv(w, values)
            } else {
                write_values_csv(w, values)
            }
        })
        .map_err(|e| Error::io(path, e))
}
