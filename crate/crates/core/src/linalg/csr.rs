use crate::scalar::Real;

/// Compressed sparse row matrix with a fixed, sorted sparsity pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Square matrix with the given per-row column sets (sorted and deduplicated here).
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.last().map_or(true, |&c| c < n));
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let vals = vec![T::zero(); cols.len()];
        Self { n, row_ptr, cols, vals }
    }

    pub fn from_dense(a: &[Vec<T>]) -> Self {
        let rows = a
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != T::zero()).map(|(j, _)| j).collect())
            .collect();
        let mut m = Self::from_pattern(rows);
        for (i, r) in a.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != T::zero() {
                    m.add(i, j, v);
                }
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].binary_search(&j).ok().map(|k| s + k)
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.position(i, j).expect("entry outside the sparsity pattern");
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |k| self.vals[k])
    }

    pub fn fill_zero(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n {
            let (c, v) = self.row(i);
            y[i] = c.iter().zip(v).fold(T::zero(), |acc, (&j, &a)| acc + a * x[j]);
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Principal submatrix on the rows/columns mapped to `Some(new index)`.
    pub fn principal_submatrix(&self, map: &[Option<usize>], size: usize) -> Self {
        let mut row_ptr = vec![0; size + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut order: Vec<(usize, usize)> = map.iter().enumerate().filter_map(|(o, n)| n.map(|n| (n, o))).collect();
        order.sort_unstable();
        for (new_i, old_i) in order {
            let (c, v) = self.row(old_i);
            for (&j, &a) in c.iter().zip(v) {
                if let Some(nj) = map[j] {
                    cols.push(nj);
                    vals.push(a);
                }
            }
            row_ptr[new_i + 1] = cols.len();
        }
        Self { n: size, row_ptr, cols, vals }
    }

    /// Replaces `a_ij` and `a_ji` by their mean, removing round-off asymmetry.
    /// The pattern must be structurally symmetric.
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if j > i {
                    let m = half * (self.vals[k] + self.get(j, i));
                    self.vals[k] = m;
                    let (c, _) = self.row(j);
                    let pos = self.row_ptr[j] + c.binary_search(&i).expect("symmetric pattern");
                    self.vals[pos] = m;
                }
            }
        }
    }

    /// Largest absolute asymmetry `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }
}
