use std::collections::VecDeque;

use super::CsrMatrix;
use crate::error::LinalgError;
use crate::scalar::Real;

/// Reverse Cuthill–McKee ordering of the matrix graph. Returns `perm` with
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last_level = |start: usize| -> (usize, usize) {
        // returns (eccentricity, min-degree node in last level)
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(u) = q.pop_front() {
            last = u;
            for &v in a.row(u).0 {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        let ecc = dist[last];
        let best = (0..n).filter(|&v| dist[v] == ecc).min_by_key(|&v| (degree[v], v)).unwrap_or(last);
        (ecc, best)
    };
    while order.len() < n {
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)).unwrap();
        // pseudo-peripheral start
        let mut start = seed;
        let (mut ecc, mut cand) = bfs_last_level(start);
        for _ in 0..8 {
            let (e2, c2) = bfs_last_level(cand);
            if e2 <= ecc {
                break;
            }
            start = cand;
            ecc = e2;
            cand = c2;
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = a.row(u).0.iter().copied().filter(|&v| !visited[v]).collect();
            nb.sort_by_key(|&v| (degree[v], v));
            for v in nb {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Geometric nested dissection. `coords[i]` is the position of unknown `i`;
/// the graph is split at the median of the wider coordinate and the vertices
/// on the upper side adjacent to the lower side form the separator, which is
/// numbered last. Returns `perm` with `perm[new] = old`.
pub fn nested_dissection<T: Real>(a: &CsrMatrix<T>, coords: &[(f64, f64)]) -> Vec<usize> {
    let n = a.dim();
    assert_eq!(coords.len(), n, "one coordinate per unknown");
    let mut side = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![(0..n).collect::<Vec<usize>>()];
    // Explicit stack of pending pieces; a separator is emitted after both halves.
    enum Job {
        Split(Vec<usize>),
        Emit(Vec<usize>),
    }
    let mut jobs: Vec<Job> = stack.drain(..).map(Job::Split).collect();
    while let Some(job) = jobs.pop() {
        let verts = match job {
            Job::Emit(v) => {
                order.extend(v);
                continue;
            }
            Job::Split(v) => v,
        };
        if verts.len() <= 64 {
            order.extend(verts);
            continue;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &v in &verts {
            let (x, y) = coords[v];
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let axis = |v: usize| if x1 - x0 >= y1 - y0 { coords[v].0 } else { coords[v].1 };
        let mut keys: Vec<f64> = verts.iter().map(|&v| axis(v)).collect();
        let mid = keys.len() / 2;
        let (_, m, _) = keys.select_nth_unstable_by(mid, f64::total_cmp);
        let m = *m;
        for &v in &verts {
            side[v] = if axis(v) < m { 1 } else { 2 };
        }
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut sep = Vec::new();
        for &v in &verts {
            if side[v] == 1 {
                lo.push(v);
            } else if a.row(v).0.iter().any(|&u| side[u] == 1) {
                sep.push(v);
            } else {
                hi.push(v);
            }
        }
        for &v in &verts {
            side[v] = 0;
        }
        if lo.is_empty() || hi.is_empty() {
            order.extend(verts);
            continue;
        }
        jobs.push(Job::Emit(sep));
        jobs.push(Job::Split(hi));
        jobs.push(Job::Split(lo));
    }
    order
}

/// Sparse Cholesky factorisation `P A Pᵀ = L Lᵀ` (up-looking, column storage of `L`).
#[derive(Clone, Debug)]
pub struct SparseCholesky<T> {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<T>,
}

const NONE: usize = usize::MAX;

impl<T: Real> SparseCholesky<T> {
    /// Factors under a reverse Cuthill–McKee ordering.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self, LinalgError> {
        Self::factor_with_ordering(a, reverse_cuthill_mckee(a))
    }

    /// `a` must be symmetric with both triangles stored.
    pub fn factor_with_ordering(a: &CsrMatrix<T>, perm: Vec<usize>) -> Result<Self, LinalgError> {
        let n = a.dim();
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // upper pattern of column k of C = P A Pᵀ (rows i < k)
        let upper = |k: usize| a.row(perm[k]).0.iter().map(|&c| iperm[c]).filter(move |&i| i < k);

        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for mut i in upper(k) {
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut flag = vec![NONE; n];
        let mut pattern = Vec::new();
        let mut path = Vec::new();
        let mut reach = |k: usize, pattern: &mut Vec<usize>, flag: &mut [usize]| {
            pattern.clear();
            flag[k] = k;
            for mut i in upper(k) {
                path.clear();
                while flag[i] != k {
                    path.push(i);
                    flag[i] = k;
                    i = parent[i];
                }
                pattern.extend(path.iter().rev());
            }
            pattern.reverse();
        };

        let mut counts = vec![1usize; n];
        for k in 0..n {
            reach(k, &mut pattern, &mut flag);
            for &j in &pattern {
                counts[j] += 1;
            }
        }
        let mut lp = Vec::with_capacity(n + 1);
        lp.push(0);
        for k in 0..n {
            lp.push(lp[k] + counts[k]);
        }
        let nnz = lp[n];
        let mut li = vec![0; nnz];
        let mut lx = vec![T::zero(); nnz];
        let mut next: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![T::zero(); n];
        flag.iter_mut().for_each(|f| *f = NONE);
        for k in 0..n {
            reach(k, &mut pattern, &mut flag);
            let (cols, vals) = a.row(perm[k]);
            for (&c, &v) in cols.iter().zip(vals) {
                let i = iperm[c];
                if i <= k {
                    x[i] += v;
                }
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &j in &pattern {
                let lkj = x[j] / lx[lp[j]];
                x[j] = T::zero();
                for p in lp[j] + 1..next[j] {
                    x[li[p]] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                li[next[j]] = k;
                lx[next[j]] = lkj;
                next[j] += 1;
            }
            if !(d > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite { row: perm[k], pivot: d.as_f64() });
            }
            li[next[k]] = k;
            lx[next[k]] = d.sqrt();
            next[k] += 1;
        }
        Ok(Self { perm, lp, li, lx })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn factor_size(&self) -> usize {
        self.lx.len()
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::Dimension { expected: n, got: b.len() });
        }
        let mut y: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        for j in 0..n {
            let (s, e) = (self.lp[j], self.lp[j + 1]);
            let yj = y[j] / self.lx[s];
            y[j] = yj;
            for p in s + 1..e {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let (s, e) = (self.lp[j], self.lp[j + 1]);
            let mut yj = y[j];
            for p in s + 1..e {
                yj -= self.lx[p] * y[self.li[p]];
            }
            y[j] = yj / self.lx[s];
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(m: usize) -> CsrMatrix<f64> {
        let n = m * m;
        let mut d = vec![vec![0.0; n]; n];
        for j in 0..m {
            for i in 0..m {
                let k = j * m + i;
                d[k][k] = 4.0;
                if i > 0 {
                    d[k][k - 1] = -1.0;
                }
                if i + 1 < m {
                    d[k][k + 1] = -1.0;
                }
                if j > 0 {
                    d[k][k - m] = -1.0;
                }
                if j + 1 < m {
                    d[k][k + m] = -1.0;
                }
            }
        }
        CsrMatrix::from_dense(&d)
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_2d(6);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..36).collect::<Vec<_>>());
    }

    #[test]
    fn factor_solves_laplacian() {
        let a = laplacian_2d(7);
        let chol = SparseCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..49).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b).unwrap();
        let mut ax = vec![0.0; 49];
        a.matvec(&x, &mut ax);
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).abs() < 1e-12);
        }
        assert!(chol.factor_size() < 49 * 50 / 2 / 2);
    }

    #[test]
    fn nested_dissection_orders_and_solves() {
        let m = 48;
        let a = laplacian_2d(m);
        let coords: Vec<(f64, f64)> = (0..m * m).map(|k| ((k % m) as f64, (k / m) as f64)).collect();
        let p = nested_dissection(&a, &coords);
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..m * m).collect::<Vec<_>>());
        let nd = SparseCholesky::factor_with_ordering(&a, p).unwrap();
        let rcm = SparseCholesky::factor(&a).unwrap();
        assert!(nd.factor_size() < rcm.factor_size(), "{} vs {}", nd.factor_size(), rcm.factor_size());
        let b: Vec<f64> = (0..m * m).map(|i| (i as f64).cos()).collect();
        let x = nd.solve(&b).unwrap();
        let mut ax = vec![0.0; m * m];
        a.matvec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(l, r)| (l - r).abs() < 1e-12));
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(SparseCholesky::factor(&a), Err(LinalgError::NotPositiveDefinite { .. })));
    }
}
