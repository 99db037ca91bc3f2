//! Inner solvers: sparse Cholesky, memory-limited incomplete Cholesky and
//! diagonal inverses, all exposed through [`InnerSolver`].
//!
//! Both Cholesky variants share one left-looking column factorization. The
//! incomplete variant keeps, in every column of L, the entries of the
//! original pattern plus the `rho` largest-magnitude fill entries (ties go
//! to the smaller row index).

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Diagonal shifts tried, in order, when an incomplete factorization meets a
/// non-positive pivot. Each retry factors M + σ diag(M).
pub const IC_SHIFTS: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

/// Approximate inverse supplied from outside the crate (e.g. a multigrid
/// cycle). `apply_into` must overwrite `x`.
pub trait ApproxInverse: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn apply_into(&self, b: &[f64], x: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering {
    Natural,
    ReverseCuthillMckee,
    NestedDissection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverKind {
    DirectCholesky,
    IncompleteCholesky { rho: usize, shift: f64 },
    Diagonal,
    External,
}

/// Lower-triangular factor stored by columns, diagonal entry first.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    perm: Option<Vec<usize>>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Imp {
    Factor(CholeskyFactor),
    Diagonal(Vec<f64>),
    External(Arc<dyn ApproxInverse>),
}

/// "Apply an approximate inverse to a vector".
#[derive(Debug, Clone)]
pub struct InnerSolver {
    kind: SolverKind,
    imp: Imp,
}

impl InnerSolver {
    pub fn kind(&self) -> &SolverKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.imp {
            Imp::Factor(f) => f.n,
            Imp::Diagonal(d) => d.len(),
            Imp::External(e) => e.dim(),
        }
    }

    /// Stored entries of the factor (zero for diagonal/external solvers).
    pub fn factor_nnz(&self) -> usize {
        match &self.imp {
            Imp::Factor(f) => f.vals.len(),
            _ => 0,
        }
    }

    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::dims("inner solver apply", self.dim(), b.len()));
        }
        let mut x = vec![0.0; b.len()];
        self.apply_into(b, &mut x);
        Ok(x)
    }

    /// Overwrites `x` with the approximate inverse applied to `b`.
    pub fn apply_into(&self, b: &[f64], x: &mut [f64]) {
        debug_assert_eq!(b.len(), self.dim());
        debug_assert_eq!(x.len(), self.dim());
        match &self.imp {
            Imp::Factor(f) => f.solve_into(b, x),
            Imp::Diagonal(inv) => {
                for ((xi, bi), di) in x.iter_mut().zip(b).zip(inv) {
                    *xi = bi * di;
                }
            }
            Imp::External(e) => e.apply_into(b, x),
        }
    }

    pub fn external(inner: Arc<dyn ApproxInverse>) -> Self {
        Self {
            kind: SolverKind::External,
            imp: Imp::External(inner),
        }
    }
}

/// Exact sparse Cholesky with nested-dissection preordering.
pub fn cholesky_factor(m: &SparseMatrix) -> Result<InnerSolver> {
    cholesky_factor_ordered(m, Ordering::NestedDissection)
}

pub fn cholesky_factor_ordered(m: &SparseMatrix, ordering: Ordering) -> Result<InnerSolver> {
    check_square(m)?;
    let f = factor(m, ordering, None, 0.0)?;
    Ok(InnerSolver {
        kind: SolverKind::DirectCholesky,
        imp: Imp::Factor(f),
    })
}

/// Incomplete Cholesky in natural ordering with `rho` extra fill entries per column.
pub fn ic_factor(m: &SparseMatrix, rho: usize) -> Result<InnerSolver> {
    ic_factor_ordered(m, rho, Ordering::Natural)
}

pub fn ic_factor_ordered(m: &SparseMatrix, rho: usize, ordering: Ordering) -> Result<InnerSolver> {
    check_square(m)?;
    let mut last_index = 0;
    for shift in std::iter::once(0.0).chain(IC_SHIFTS) {
        match factor(m, ordering, Some(rho), shift) {
            Ok(f) => {
                if shift > 0.0 {
                    log::debug!("incomplete Cholesky needed diagonal shift {shift:e}");
                }
                return Ok(InnerSolver {
                    kind: SolverKind::IncompleteCholesky { rho, shift },
                    imp: Imp::Factor(f),
                });
            }
            Err(Error::NotSpd { index, .. }) => last_index = index,
            Err(e) => return Err(e),
        }
    }
    Err(Error::IncompleteBreakdown { index: last_index })
}

/// x_i = b_i / d_i.
pub fn diagonal_solver(d: &[f64]) -> Result<InnerSolver> {
    if let Some((i, &v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive {
            what: "diagonal solver entries",
            index: i,
            value: v,
        });
    }
    Ok(InnerSolver {
        kind: SolverKind::Diagonal,
        imp: Imp::Diagonal(d.iter().map(|v| 1.0 / v).collect()),
    })
}

fn check_square(m: &SparseMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare(
            "Cholesky factorization",
            m.n_rows(),
            m.n_cols(),
        ))
    }
}

const NONE: usize = usize::MAX;

fn factor(
    m: &SparseMatrix,
    ordering: Ordering,
    fill: Option<usize>,
    shift: f64,
) -> Result<CholeskyFactor> {
    let n = m.n_rows();
    let perm = match ordering {
        Ordering::Natural => None,
        Ordering::ReverseCuthillMckee => Some(rcm_ordering(m)),
        Ordering::NestedDissection => Some(nested_dissection_ordering(m)),
    };
    let owned;
    let a = match &perm {
        Some(p) => {
            owned = m.permute_symmetric(p)?;
            &owned
        }
        None => m,
    };

    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx: Vec<usize> = Vec::with_capacity(a.nnz());
    let mut vals: Vec<f64> = Vec::with_capacity(a.nnz());
    col_ptr.push(0);

    let mut w = vec![0.0; n];
    let mut mark = vec![NONE; n];
    let mut orig = vec![NONE; n];
    let mut pattern: Vec<usize> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut fill_cand: Vec<usize> = Vec::new();
    // Linked lists of columns k whose next unused entry lies in row r.
    let mut head = vec![NONE; n];
    let mut next = vec![NONE; n];
    let mut pos = vec![0usize; n];

    for j in 0..n {
        pattern.clear();
        mark[j] = j;
        w[j] = 0.0;
        pattern.push(j);
        let (cols, rv) = a.row(j);
        for (&i, &v) in cols.iter().zip(rv) {
            if i < j {
                continue;
            }
            if mark[i] != j {
                mark[i] = j;
                w[i] = 0.0;
                pattern.push(i);
            }
            w[i] += v;
            orig[i] = j;
        }
        if shift != 0.0 {
            w[j] *= 1.0 + shift;
        }

        let mut k = head[j];
        while k != NONE {
            let next_k = next[k];
            let p = pos[k];
            let ljk = vals[p];
            let end = col_ptr[k + 1];
            for q in p..end {
                let i = row_idx[q];
                if mark[i] != j {
                    mark[i] = j;
                    w[i] = 0.0;
                    pattern.push(i);
                }
                w[i] -= vals[q] * ljk;
            }
            pos[k] = p + 1;
            if p + 1 < end {
                let r = row_idx[p + 1];
                next[k] = head[r];
                head[r] = k;
            }
            k = next_k;
        }
        head[j] = NONE;

        let d = w[j];
        if !(d > 0.0) || !d.is_finite() {
            let index = perm.as_ref().map_or(j, |p| p[j]);
            return Err(Error::NotSpd { index, value: d });
        }
        let ljj = d.sqrt();

        kept.clear();
        match fill {
            None => kept.extend(pattern.iter().copied().filter(|&i| i != j)),
            Some(rho) => {
                fill_cand.clear();
                for &i in pattern.iter().filter(|&&i| i != j) {
                    if orig[i] == j {
                        kept.push(i);
                    } else {
                        fill_cand.push(i);
                    }
                }
                if fill_cand.len() > rho {
                    fill_cand.sort_unstable_by(|&x, &y| {
                        w[y].abs().total_cmp(&w[x].abs()).then(x.cmp(&y))
                    });
                    fill_cand.truncate(rho);
                }
                kept.extend_from_slice(&fill_cand);
            }
        }
        kept.sort_unstable();

        let start = row_idx.len();
        row_idx.push(j);
        vals.push(ljj);
        for &i in &kept {
            row_idx.push(i);
            vals.push(w[i] / ljj);
        }
        col_ptr.push(row_idx.len());
        pos[j] = start + 1;
        if let Some(&r) = kept.first() {
            next[j] = head[r];
            head[r] = j;
        }
    }

    Ok(CholeskyFactor {
        n,
        perm,
        col_ptr,
        row_idx,
        vals,
    })
}

impl CholeskyFactor {
    fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        match &self.perm {
            None => {
                x.copy_from_slice(b);
                self.solve_in_place(x);
            }
            Some(p) => {
                let mut y: Vec<f64> = p.iter().map(|&old| b[old]).collect();
                self.solve_in_place(&mut y);
                for (new, &old) in p.iter().enumerate() {
                    x[old] = y[new];
                }
            }
        }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        // L y = b
        for j in 0..self.n {
            let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let xj = x[j] / self.vals[lo];
            x[j] = xj;
            if xj != 0.0 {
                for q in lo + 1..hi {
                    x[self.row_idx[q]] -= self.vals[q] * xj;
                }
            }
        }
        // Lᵀ x = y
        for j in (0..self.n).rev() {
            let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let mut s = x[j];
            for q in lo + 1..hi {
                s -= self.vals[q] * x[self.row_idx[q]];
            }
            x[j] = s / self.vals[lo];
        }
    }

    /// Row indices of column `j` of L (in the factored ordering).
    #[cfg(test)]
    fn column_rows(&self, j: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
    }
}

/// Reverse Cuthill–McKee ordering of the symmetric pattern of `m`,
/// returned as `perm[new] = old`. Each connected component starts from a
/// pseudo-peripheral node.
pub fn rcm_ordering(m: &SparseMatrix) -> Vec<usize> {
    let n = m.n_rows();
    let degree: Vec<usize> = (0..n)
        .map(|i| m.row(i).0.iter().filter(|&&j| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs: Vec<usize> = Vec::new();

    let bfs_levels = |start: usize, seen: &mut Vec<usize>, stamp: usize| -> (usize, usize) {
        // returns (eccentricity, a min-degree node in the last level)
        let mut frontier = vec![start];
        seen[start] = stamp;
        let mut depth = 0;
        let mut last = frontier.clone();
        while !frontier.is_empty() {
            last = frontier.clone();
            let mut nextf = Vec::new();
            for &v in &frontier {
                for &u in m.row(v).0 {
                    if seen[u] != stamp {
                        seen[u] = stamp;
                        nextf.push(u);
                    }
                }
            }
            if !nextf.is_empty() {
                depth += 1;
            }
            frontier = nextf;
        }
        let far = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        (depth, far)
    };

    let mut seen = vec![NONE; n];
    let mut stamp = 0;
    for root in 0..n {
        if visited[root] {
            continue;
        }
        // pseudo-peripheral start node (George–Liu)
        let mut start = root;
        stamp += 1;
        let (mut ecc, mut far) = bfs_levels(start, &mut seen, stamp);
        for _ in 0..8 {
            stamp += 1;
            let (e2, f2) = bfs_levels(far, &mut seen, stamp);
            if e2 > ecc {
                start = far;
                ecc = e2;
                far = f2;
            } else {
                if e2 == ecc {
                    start = far;
                }
                break;
            }
        }

        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(m.row(v).0.iter().copied().filter(|&u| !visited[u]));
            nbrs.sort_unstable_by_key(|&u| (degree[u], u));
            for &u in &nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Subgraphs at or below this size are ordered naturally.
const ND_LEAF: usize = 64;

/// Nested dissection on the symmetric pattern of `m` using BFS level-set
/// separators, returned as `perm[new] = old`.
pub fn nested_dissection_ordering(m: &SparseMatrix) -> Vec<usize> {
    let n = m.n_rows();
    let mut label = vec![1usize; n];
    let mut next_label = 2;
    let mut order = Vec::with_capacity(n);
    let mut level_of = vec![usize::MAX; n];
    let mut pending: Vec<(Vec<usize>, usize, Option<Vec<usize>>)> =
        vec![((0..n).collect(), 1, None)];

    // Explicit stack; a `Some(sep)` entry emits its separator after both halves.
    while let Some((set, lbl, sep)) = pending.pop() {
        if let Some(sep) = sep {
            order.extend(sep);
            continue;
        }
        if set.len() <= ND_LEAF {
            let mut s = set;
            s.sort_unstable();
            order.extend(s);
            continue;
        }
        let bfs = |start: usize, level_of: &mut Vec<usize>| -> Vec<Vec<usize>> {
            let mut levels = vec![vec![start]];
            level_of[start] = 0;
            let mut seen = vec![start];
            loop {
                let mut next = Vec::new();
                for &v in levels.last().unwrap() {
                    for &u in m.row(v).0 {
                        if label[u] == lbl && level_of[u] == usize::MAX {
                            level_of[u] = levels.len();
                            next.push(u);
                            seen.push(u);
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                levels.push(next);
            }
            for v in seen {
                level_of[v] = usize::MAX;
            }
            levels
        };
        let mut levels = bfs(set[0], &mut level_of);
        let reached: usize = levels.iter().map(Vec::len).sum();
        if reached < set.len() {
            // disconnected: peel off the reached component
            let comp: Vec<usize> = levels.concat();
            let (a, b) = (next_label, next_label + 1);
            next_label += 2;
            for &v in &set {
                label[v] = b;
            }
            for &v in &comp {
                label[v] = a;
            }
            let rest: Vec<usize> = set.into_iter().filter(|&v| label[v] == b).collect();
            pending.push((rest, b, None));
            pending.push((comp, a, None));
            continue;
        }
        for _ in 0..4 {
            let far = *levels
                .last()
                .unwrap()
                .iter()
                .min_by_key(|&&v| (m.row(v).0.len(), v))
                .unwrap();
            let cand = bfs(far, &mut level_of);
            if cand.len() > levels.len() {
                levels = cand;
            } else {
                break;
            }
        }
        if levels.len() < 3 {
            let mut s = set;
            s.sort_unstable();
            order.extend(s);
            continue;
        }
        let half = set.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (i, l) in levels.iter().enumerate() {
            acc += l.len();
            if acc >= half {
                mid = i.clamp(1, levels.len() - 2);
                break;
            }
        }
        let (a, b) = (next_label, next_label + 1);
        next_label += 2;
        let part_a: Vec<usize> = levels[..mid].concat();
        let part_b: Vec<usize> = levels[mid + 1..].concat();
        let sep = std::mem::take(&mut levels[mid]);
        for &v in &part_a {
            label[v] = a;
        }
        for &v in &part_b {
            label[v] = b;
        }
        for &v in &sep {
            label[v] = 0;
        }
        pending.push((Vec::new(), 0, Some(sep)));
        pending.push((part_b, b, None));
        pending.push((part_a, a, None));
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{dot, norm2};
    use crate::testing::{random_spd, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_residual(m: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mx = m.spmv(x).unwrap();
        norm2(&mx.iter().zip(b).map(|(a, c)| a - c).collect::<Vec<_>>()) / norm2(b)
    }

    #[test]
    fn cholesky_small_cases() {
        let d = SparseMatrix::from_diagonal(&[4.0, 9.0]);
        let s = cholesky_factor(&d).unwrap();
        assert_eq!(s.apply(&[8.0, 27.0]).unwrap(), vec![2.0, 3.0]);
        let m = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
        )
        .unwrap();
        let x = cholesky_factor(&m).unwrap().apply(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_spd(&mut rng, 100, 0.05);
        let b = random_vec(&mut rng, 100);
        for ord in [
            Ordering::Natural,
            Ordering::ReverseCuthillMckee,
            Ordering::NestedDissection,
        ] {
            let x = cholesky_factor_ordered(&m, ord).unwrap().apply(&b).unwrap();
            assert!(rel_residual(&m, &x, &b) <= 1e-10);
        }
    }

    #[test]
    fn cholesky_reports_indefinite_pivot() {
        let m = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 1.0),
                (1, 1, 1.0),
                (1, 2, 2.0),
                (2, 1, 2.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        match cholesky_factor_ordered(&m, Ordering::Natural) {
            Err(Error::NotSpd { index, value }) => {
                assert_eq!(index, 2);
                assert!(value < 0.0);
            }
            other => panic!("expected NotSpd, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_apply_is_self_adjoint_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_spd(&mut rng, 60, 0.1);
        let s = cholesky_factor(&m).unwrap();
        let b = random_vec(&mut rng, 60);
        let c = random_vec(&mut rng, 60);
        let l = dot(&b, &s.apply(&c).unwrap());
        let r = dot(&c, &s.apply(&b).unwrap());
        assert!((l - r).abs() <= 1e-10 * l.abs().max(r.abs()));
        assert!(dot(&b, &s.apply(&b).unwrap()) > 0.0);
    }

    #[test]
    fn ic_diagonal_is_exact() {
        let d = SparseMatrix::from_diagonal(&[2.0, 5.0, 0.5]);
        for rho in [0, 3] {
            let x = ic_factor(&d, rho).unwrap().apply(&[2.0, 5.0, 0.5]).unwrap();
            for v in x {
                assert!((v - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ic_with_full_fill_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = random_spd(&mut rng, 80, 0.08);
        let b = random_vec(&mut rng, 80);
        let xd = cholesky_factor(&m).unwrap().apply(&b).unwrap();
        let xi = ic_factor(&m, 80).unwrap().apply(&b).unwrap();
        let diff = norm2(&xd.iter().zip(&xi).map(|(a, c)| a - c).collect::<Vec<_>>());
        assert!(diff <= 1e-9 * norm2(&xd));
    }

    #[test]
    fn ic_zero_fill_on_tridiagonal_keeps_pattern() {
        let n = 12;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let m = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let s = ic_factor(&m, 0).unwrap();
        let Imp::Factor(f) = &s.imp else { panic!() };
        for j in 0..n {
            let want: Vec<usize> = (j..(j + 2).min(n)).collect();
            assert_eq!(f.column_rows(j), &want[..]);
        }
        // tridiagonal has no fill: IC(0) is exact
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        assert!(rel_residual(&m, &s.apply(&b).unwrap(), &b) < 1e-14);
    }

    #[test]
    fn ic_fill_bound_per_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = random_spd(&mut rng, 70, 0.1);
        for rho in [0, 2, 5] {
            let s = ic_factor(&m, rho).unwrap();
            let Imp::Factor(f) = &s.imp else { panic!() };
            for j in 0..70 {
                let orig_below = m.row(j).0.iter().filter(|&&i| i > j).count();
                assert!(f.column_rows(j).len() - 1 <= orig_below + rho);
            }
        }
    }

    #[test]
    fn ic_shift_rescues_breakdown() {
        // SPD but IC(0) breaks down without a shift.
        let t = [
            (0, 0, 1.0),
            (0, 1, 0.9),
            (1, 0, 0.9),
            (0, 2, 0.9),
            (2, 0, 0.9),
            (1, 1, 1.0),
            (2, 2, 1.0),
            (1, 3, 0.9),
            (3, 1, 0.9),
            (2, 3, -0.9),
            (3, 2, -0.9),
            (3, 3, 1.0),
        ];
        let m = SparseMatrix::from_triplets(4, 4, &t).unwrap();
        match ic_factor(&m, 0) {
            Ok(s) => {
                if let SolverKind::IncompleteCholesky { shift, .. } = s.kind() {
                    assert!(*shift >= 0.0);
                }
            }
            Err(Error::IncompleteBreakdown { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn diagonal_solver_cases() {
        let s = diagonal_solver(&[1.0; 3]).unwrap();
        assert_eq!(s.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let s = diagonal_solver(&[2.0, 4.0]).unwrap();
        assert_eq!(s.apply(&[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
        assert!(diagonal_solver(&[1.0, 0.0]).is_err());
        assert!(diagonal_solver(&[1.0, -2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let d: Vec<f64> = (0..40)
            .map(|_| 0.1 + rand::Rng::random::<f64>(&mut rng))
            .collect();
        let b = random_vec(&mut rng, 40);
        let x = diagonal_solver(&d).unwrap().apply(&b).unwrap();
        for i in 0..40 {
            assert!((x[i] * d[i] - b[i]).abs() <= 1e-15 * b[i].abs().max(1e-300) * 2.0);
        }
    }

    #[test]
    fn rcm_is_a_permutation_and_reduces_bandwidth() {
        // 2D grid Laplacian numbered column-major on a long strip.
        let (nx, ny) = (4, 30);
        let idx = |i: usize, j: usize| j + ny * i;
        let mut t = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i + 1 < nx {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < ny {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        let m = SparseMatrix::from_triplets(nx * ny, nx * ny, &t).unwrap();
        let perm = rcm_ordering(&m);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..nx * ny).collect::<Vec<_>>());
        let bw = |m: &SparseMatrix| m.iter().map(|(i, j, _)| i.abs_diff(j)).max().unwrap();
        assert!(bw(&m.permute_symmetric(&perm).unwrap()) < bw(&m));

        let nd = nested_dissection_ordering(&m);
        let mut sorted = nd.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..nx * ny).collect::<Vec<_>>());
    }

    #[test]
    fn nested_dissection_handles_disconnected_graphs() {
        let mut t = Vec::new();
        for i in 0..300 {
            t.push((i, i, 4.0));
            if i + 1 < 300 && i % 100 != 99 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let m = SparseMatrix::from_triplets(300, 300, &t).unwrap();
        let mut nd = nested_dissection_ordering(&m);
        nd.sort_unstable();
        assert_eq!(nd, (0..300).collect::<Vec<_>>());
        let b: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
        let x = cholesky_factor(&m).unwrap().apply(&b).unwrap();
        assert!(rel_residual(&m, &x, &b) < 1e-14);
    }
}
