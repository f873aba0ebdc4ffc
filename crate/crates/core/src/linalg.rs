//! Compressed sparse rows and a Jacobi-preconditioned conjugate
//! gradient solver for symmetric positive definite systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles an `n × n` matrix from `(row, col, value)` triplets;
    /// duplicate entries are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            let slot = next[i];
            cols[slot] = j;
            vals[slot] = v;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..n {
            let (lo, hi) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(lo..hi);
            // stable sort keeps the summation order deterministic
            order.sort_by_key(|&s| cols[s]);
            let mut last = usize::MAX;
            for &s in &order {
                if cols[s] == last {
                    *values.last_mut().expect("entry exists") += vals[s];
                } else {
                    col_idx.push(cols[s]);
                    values.push(vals[s]);
                    last = cols[s];
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// Largest `|A_ij − A_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut defect = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                defect = defect.max((v - self.get(j, i)).abs());
            }
        }
        if scale > 0.0 {
            defect / scale
        } else {
            0.0
        }
    }

    /// Principal submatrix on `keep` (sorted, unique), with the index map
    /// from full to reduced numbering.
    pub fn principal_submatrix(&self, keep: &[usize]) -> (Self, Vec<Option<usize>>) {
        let mut map = vec![None; self.n];
        for (r, &i) in keep.iter().enumerate() {
            map[i] = Some(r);
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            for (j, v) in self.row(i) {
                if let Some(c) = map[j] {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        (
            Self {
                n: keep.len(),
                row_ptr,
                col_idx,
                values,
            },
            map,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub rel_tol: f64,
    /// Iteration cap; `None` uses `50·√n`.
    pub max_iters: Option<usize>,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves `A x = b` with diagonal preconditioning, starting from `x`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    settings: CgSettings,
) -> Result<CgOutcome> {
    let n = a.dim();
    let cap = settings
        .max_iters
        .unwrap_or_else(|| (50.0 * (n as f64).sqrt()).ceil() as usize)
        .max(1);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / b_norm;

    for it in 0..cap {
        if res <= settings.rel_tol {
            return Ok(CgOutcome {
                iterations: it,
                rel_residual: res,
            });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverDivergence {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm(&r) / b_norm;
    }
    if res <= settings.rel_tol {
        Ok(CgOutcome {
            iterations: cap,
            rel_residual: res,
        })
    } else {
        Err(Error::SolverDivergence {
            iterations: cap,
            residual: res,
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (0, 0, 3.0), (1, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 2.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn cg_solves_tridiagonal_system() {
        let n = 50;
        let a = laplacian_1d(n);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&exact, &mut b);
        let mut x = vec![0.0; n];
        let out = conjugate_gradient(&a, &b, &mut x, CgSettings::default()).unwrap();
        assert!(out.rel_residual <= 1e-10);
        for (xi, ei) in x.iter().zip(&exact) {
            assert!((xi - ei).abs() < 1e-7);
        }
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let err = conjugate_gradient(
            &a,
            &b,
            &mut x,
            CgSettings {
                rel_tol: 1e-12,
                max_iters: Some(3),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::SolverDivergence { iterations: 3, .. }));
    }

    #[test]
    fn submatrix_keeps_selected_block() {
        let a = laplacian_1d(4);
        let (s, map) = a.principal_submatrix(&[1, 2]);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.get(0, 1), -1.0);
        assert_eq!(map[0], None);
        assert_eq!(map[2], Some(1));
    }
}
