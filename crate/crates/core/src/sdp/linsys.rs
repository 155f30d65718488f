//! Sparse constraint operator and the dense normal-equation factorisation
//! used by the affine projection.

/// Compressed sparse row matrix with real entries.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(c, v)| v * x[c]).sum()
    }

    /// `out = A x`.
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.row_dot(r, x);
        }
    }

    /// Restriction to a subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut indptr = vec![0usize; rows.len() + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                indices.push(c);
                values.push(v);
            }
            indptr[i + 1] = indices.len();
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, triplets)
    }

    /// Dense `A Aᵀ` (row-major, `rows x rows`).
    pub fn gram(&self) -> Vec<f64> {
        let n = self.rows;
        let at = self.transpose();
        let mut g = vec![0.0; n * n];
        let mut acc = vec![0.0; n];
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (c, v) in self.row(i) {
                for (j, w) in at.row(c) {
                    acc[j] += v * w;
                }
            }
            g[i * n..(i + 1) * n].copy_from_slice(&acc);
        }
        g
    }
}

/// Rows of a PSD Gram matrix that are numerically independent, found by
/// diagonally pivoted Cholesky. Returned in ascending order.
pub(crate) fn independent_rows(gram: &[f64], n: usize, rel_tol: f64) -> Vec<usize> {
    let mut a = gram.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).map(|i| gram[i * n + i]).fold(0.0, f64::max);
    if max_diag <= 0.0 {
        return Vec::new();
    }
    let tol = rel_tol * max_diag;
    let mut rank = 0;
    for k in 0..n {
        // pivot: largest remaining diagonal of the Schur complement
        let (p, &piv) = (k..n)
            .map(|i| (i, &a[i * n + i]))
            .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
            .expect("non-empty range");
        if piv <= tol {
            break;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            for i in 0..n {
                a.swap(i * n + k, i * n + p);
            }
            perm.swap(k, p);
        }
        let d = a[k * n + k].sqrt();
        a[k * n + k] = d;
        for i in k + 1..n {
            a[i * n + k] /= d;
        }
        for i in k + 1..n {
            let lik = a[i * n + k];
            if lik == 0.0 {
                continue;
            }
            for j in k + 1..=i {
                a[i * n + j] -= lik * a[j * n + k];
            }
        }
        // keep the upper triangle in sync for later pivot swaps
        for i in k + 1..n {
            for j in k + 1..i {
                a[j * n + i] = a[i * n + j];
            }
        }
        rank += 1;
    }
    let mut rows: Vec<usize> = perm[..rank].to_vec();
    rows.sort_unstable();
    rows
}

/// Dense Cholesky factor `L` of an SPD matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = m[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            let row = &self.l[i * n..i * n + i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}
