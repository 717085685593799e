use std::fmt::Write as _;

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Triplets {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.n_rows && c < self.n_cols);
        self.entries.push((r, c, v));
    }

    /// Adds every entry of `m`, offset by (`r0`, `c0`) and scaled.
    pub fn add_block(&mut self, m: &Csr, r0: usize, c0: usize, scale: f64) {
        for (r, c, v) in m.iter() {
            self.push(r0 + r, c0 + c, scale * v);
        }
    }

    pub fn to_csr(&self) -> Csr {
        Csr::from_triplets(self.n_rows, self.n_cols, &self.entries)
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Csr {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in entries {
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        let mut next = counts.clone();
        for &(r, c, v) in entries {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Csr {
        Csr {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    /// y = A^T x
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        dot(x, &ay)
    }

    pub fn transpose(&self) -> Csr {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Csr::from_triplets(self.n_cols, self.n_rows, &t)
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// alpha A + beta B
    pub fn axpby(alpha: f64, a: &Csr, beta: f64, b: &Csr) -> Csr {
        assert_eq!((a.n_rows, a.n_cols), (b.n_rows, b.n_cols));
        let mut t = Triplets::new(a.n_rows, a.n_cols);
        t.add_block(a, 0, 0, alpha);
        t.add_block(b, 0, 0, beta);
        t.to_csr()
    }

    /// max |A - A^T| / max |A|
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut big: f64 = 0.0;
        for (r, c, v) in self.iter() {
            worst = worst.max((v - self.get(c, r)).abs());
            big = big.max(v.abs());
        }
        if big == 0.0 {
            0.0
        } else {
            worst / big
        }
    }

    /// Keeps entries whose row and column both map to `Some`, renumbered.
    pub fn restrict(&self, rows: &[Option<usize>], n_rows: usize, cols: &[Option<usize>], n_cols: usize) -> Csr {
        let t: Vec<_> = self
            .iter()
            .filter_map(|(r, c, v)| Some((rows[r]?, cols[c]?, v)))
            .collect();
        Csr::from_triplets(n_rows, n_cols, &t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            d[(r, c)] += v;
        }
        d
    }

    /// `i j value` lines, one per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.iter() {
            let _ = writeln!(s, "{r} {c} {v:.17e}");
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn transpose_matvec_agrees_with_dense() {
        let a = Csr::from_triplets(2, 3, &[(0, 1, 2.0), (1, 2, -1.0), (1, 0, 0.5)]);
        let x = [1.0, -2.0];
        let d = a.to_dense();
        let want = d.transpose() * nalgebra::DVector::from_row_slice(&x);
        assert_eq!(a.tmatvec(&x), want.as_slice());
        assert_eq!(a.transpose().matvec(&x), want.as_slice());
    }
}
