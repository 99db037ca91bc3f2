//! Right-preconditioned Bi-CGStab.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, SparseMatrix};

/// |ρ| or |ω| below this is treated as breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_IT: usize = 1000;
/// Consecutive true-residual rejections before giving up with `Stagnation`.
const MAX_REPLACEMENTS: usize = 3;

/// A square linear map on flat vectors. `apply_into` overwrites `y`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

impl LinearOperator for crate::block::ThreeFieldSystem {
    fn dim(&self) -> usize {
        self.size()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.apply_flat(x, y);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Breakdown,
    Stagnation,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::Breakdown => "breakdown",
            SolveStatus::Stagnation => "stagnation",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual 2-norm, starting with the initial residual (1.0).
    pub residual_history: Vec<f64>,
    /// ‖rhs − 𝒜x‖₂/‖rhs‖₂ recomputed from the returned iterate.
    pub final_residual: f64,
    pub setup_time: f64,
    pub solve_time: f64,
    pub total_time: f64,
    pub status: SolveStatus,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn with_setup_time(mut self, seconds: f64) -> Self {
        self.setup_time = seconds;
        self.total_time = self.setup_time + self.solve_time;
        self
    }

    pub fn write_residual_csv_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,relative_residual")?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(out, "{i},{r:e}")?;
        }
        Ok(())
    }

    pub fn write_residual_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|f| self.write_residual_csv_to(std::io::BufWriter::new(f)))
            .map_err(|e| Error::io(path, e))
    }
}

fn true_residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    op.apply_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm2(r)
}

/// Solves 𝒜x = b from x₀ = 0 with right preconditioning (𝒜M⁻¹y = b, x = M⁻¹y).
/// Convergence is declared on ‖b − 𝒜x‖₂/‖b‖₂ ≤ tol using the recomputed
/// true residual.
pub fn bicgstab(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    max_it: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::dims("bicgstab rhs", n, b.len()));
    }
    if prec.dim() != n {
        return Err(Error::dims("bicgstab preconditioner", n, prec.dim()));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let start = Instant::now();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    let finish = |x: Vec<f64>, it: usize, hist: Vec<f64>, fin: f64, status: SolveStatus| {
        let solve_time = start.elapsed().as_secs_f64();
        let report = SolveReport {
            iterations: it,
            residual_history: hist,
            final_residual: fin,
            setup_time: 0.0,
            solve_time,
            total_time: solve_time,
            status,
        };
        Ok((x, report))
    };
    if bnorm == 0.0 {
        return finish(x, 0, vec![0.0], 0.0, SolveStatus::Converged);
    }
    let mut history = vec![1.0];
    if 1.0 < tol {
        return finish(x, 0, history, 1.0, SolveStatus::Converged);
    }

    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut restart = true;
    let mut rejections = 0;

    // Accepts on the true residual, otherwise replaces r and restarts.
    macro_rules! check_true {
        ($it:expr) => {{
            let rel = true_residual(op, b, &x, &mut scratch) / bnorm;
            *history.last_mut().unwrap() = rel;
            if rel <= tol {
                return finish(x, $it, history, rel, SolveStatus::Converged);
            }
            rejections += 1;
            if rejections >= MAX_REPLACEMENTS {
                return finish(x, $it, history, rel, SolveStatus::Stagnation);
            }
            r.copy_from_slice(&scratch);
            r_hat.copy_from_slice(&r);
            restart = true;
        }};
    }

    for it in 1..=max_it {
        let rho = dot(&r_hat, &r);
        if rho.abs() < BREAKDOWN_TOL {
            let fin = true_residual(op, b, &x, &mut scratch) / bnorm;
            return finish(x, it - 1, history, fin, SolveStatus::Breakdown);
        }
        if restart {
            p.copy_from_slice(&r);
            restart = false;
        } else {
            let beta = (rho / rho_old) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        prec.apply_into(&p, &mut p_hat);
        op.apply_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv.abs() < BREAKDOWN_TOL {
            let fin = true_residual(op, b, &x, &mut scratch) / bnorm;
            return finish(x, it - 1, history, fin, SolveStatus::Breakdown);
        }
        alpha = rho / rv;
        rho_old = rho;
        // r becomes s
        axpy(-alpha, &v, &mut r);
        let s_rel = norm2(&r) / bnorm;
        if s_rel <= tol {
            axpy(alpha, &p_hat, &mut x);
            history.push(s_rel);
            check_true!(it);
            continue;
        }
        prec.apply_into(&r, &mut s_hat);
        op.apply_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        axpy(alpha, &p_hat, &mut x);
        if omega.abs() < BREAKDOWN_TOL {
            history.push(s_rel);
            let fin = true_residual(op, b, &x, &mut scratch) / bnorm;
            return finish(x, it, history, fin, SolveStatus::Breakdown);
        }
        axpy(omega, &s_hat, &mut x);
        axpy(-omega, &t, &mut r);
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if !rel.is_finite() {
            let fin = true_residual(op, b, &x, &mut scratch) / bnorm;
            return finish(x, it, history, fin, SolveStatus::Breakdown);
        }
        if rel <= tol {
            check_true!(it);
        }
    }
    let fin = true_residual(op, b, &x, &mut scratch) / bnorm;
    finish(x, max_it, history, fin, SolveStatus::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::DenseMatrix;
    use crate::testing::random_vec;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct DenseOp(DMatrix<f64>);
    impl LinearOperator for DenseOp {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply_into(&self, x: &[f64], y: &mut [f64]) {
            let r = &self.0 * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        }
    }

    fn recompute(op: &dyn LinearOperator, b: &[f64], x: &[f64]) -> f64 {
        let ax = op.apply(x);
        norm2(&b.iter().zip(&ax).map(|(u, v)| u - v).collect::<Vec<_>>()) / norm2(b)
    }

    #[test]
    fn identity_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_vec(&mut rng, 30);
        let (x, rep) = bicgstab(&Identity(30), &Identity(30), &b, 1e-6, 100).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations <= 1);
        assert_eq!(rep.residual_history[0], 1.0);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_preconditioner_two_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 50;
        let a = DMatrix::from_fn(n, n, |i, j| {
            rng.random_range(-1.0..1.0) + if i == j { 5.0 } else { 0.0 }
        });
        let inv = a.clone().try_inverse().unwrap();
        let b = random_vec(&mut rng, n);
        let op = DenseOp(a);
        let (x, rep) = bicgstab(&op, &DenseOp(inv), &b, 1e-10, 100).unwrap();
        assert!(rep.converged());
        assert!(rep.iterations <= 2, "iterations {}", rep.iterations);
        assert!(recompute(&op, &b, &x) <= 1e-10);
    }

    #[test]
    fn diagonal_system() {
        let d: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let a = SparseMatrix::from_diagonal(&d);
        let b = vec![1.0; 100];
        let (x, rep) = bicgstab(&a, &Identity(100), &b, 1e-6, 1000).unwrap();
        assert!(rep.converged());
        let err: f64 = x
            .iter()
            .zip(&d)
            .map(|(xi, di)| (xi - 1.0 / di).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-6 * norm2(&d.iter().map(|v| 1.0 / v).collect::<Vec<_>>()) * 100.0);
        assert!(rep.residual_history.last().unwrap() <= &1e-6);
        assert!((rep.final_residual - recompute(&a, &b, &x)).abs() <= 1e-12);
    }

    #[test]
    fn reports_max_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d: Vec<f64> = (0..200).map(|i| 10f64.powf(i as f64 / 20.0)).collect();
        let a = SparseMatrix::from_diagonal(&d);
        let b = random_vec(&mut rng, 200);
        let (x, rep) = bicgstab(&a, &Identity(200), &b, 1e-12, 3).unwrap();
        assert_eq!(rep.status, SolveStatus::MaxIterations);
        assert_eq!(rep.iterations, 3);
        assert!((rep.final_residual - recompute(&a, &b, &x)).abs() <= 1e-12);
    }

    #[test]
    fn zero_rhs_and_bad_input() {
        let (x, rep) = bicgstab(&Identity(4), &Identity(4), &[0.0; 4], 1e-6, 10).unwrap();
        assert!(rep.converged());
        assert_eq!(x, vec![0.0; 4]);
        assert!(bicgstab(&Identity(4), &Identity(3), &[1.0; 4], 1e-6, 10).is_err());
        assert!(bicgstab(&Identity(4), &Identity(4), &[1.0; 3], 1e-6, 10).is_err());
        assert!(bicgstab(&Identity(4), &Identity(4), &[1.0; 4], 0.0, 10).is_err());
    }

    #[test]
    fn skew_system_breaks_down() {
        // r̂·𝒜r = 0 for skew 𝒜 with identity preconditioner.
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, -1.0)]).unwrap();
        let (_, rep) = bicgstab(&a, &Identity(2), &[1.0, 0.0], 1e-8, 10).unwrap();
        assert_eq!(rep.status, SolveStatus::Breakdown);
    }

    #[test]
    fn residual_csv_and_times() {
        let d = DenseMatrix::from_row_major(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let a = d.to_sparse();
        let (_, rep) = bicgstab(&a, &Identity(2), &[1.0, 1.0], 1e-8, 10).unwrap();
        let rep = rep.with_setup_time(0.5);
        assert_eq!(rep.total_time, rep.setup_time + rep.solve_time);
        let mut buf = Vec::new();
        rep.write_residual_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,relative_residual\n0,1e0\n"));
        assert_eq!(text.lines().count(), rep.residual_history.len() + 1);
    }
}
