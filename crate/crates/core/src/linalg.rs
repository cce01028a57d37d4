//! Square linear solves used by the Newton iteration.
//!
//! Small systems go through nalgebra's dense LU. Large power-flow Jacobians
//! use [`SparseLu`]: a minimum-degree ordering on the symmetrized pattern
//! followed by right-looking elimination with threshold partial pivoting.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use nalgebra::{DMatrix, DVector};

/// Relative pivot magnitude below which a system is treated as singular.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Solves `a x = b` by LU with partial pivoting; `None` if a pivot is
/// negligible relative to the largest entry of `a`.
pub fn dense_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.amax();
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let lu = a.lu();
    let u = lu.u();
    if u.diagonal().iter().any(|d| d.abs() <= PIVOT_RTOL * scale) {
        return None;
    }
    lu.solve(b)
}

/// Compressed triplet input for [`SparseLu`].
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.entries.push((row, col, val));
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Fill-reducing column/row order for a structurally symmetric pattern.
pub fn minimum_degree_order(n: usize, entries: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for &(r, c, _) in entries {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = adj[v].drain().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            heap.push(Reverse((adj[a].len(), a)));
        }
    }
    order
}

/// Sparse LU factors of `P A Pᵀ` with row pivoting recorded per step.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    pivot_row: Vec<usize>,
    lower: Vec<Vec<(usize, f64)>>,
    upper: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl SparseLu {
    pub fn factor(a: &Triplets, order: &[usize]) -> Option<Self> {
        let n = a.n;
        let mut position = vec![0usize; n];
        for (k, &orig) in order.iter().enumerate() {
            position[orig] = k;
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut scale = 0.0f64;
        for &(r, c, v) in &a.entries {
            let (pr, pc) = (position[r], position[c]);
            *rows[pr].entry(pc).or_insert(0.0) += v;
            col_rows[pc].insert(pr);
            scale = scale.max(v.abs());
        }
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }

        let mut active = vec![true; n];
        let mut pivot_row = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);

        for k in 0..n {
            let candidates: Vec<usize> = col_rows[k].iter().copied().filter(|&r| active[r]).collect();
            let value = |r: usize, rows: &Vec<BTreeMap<usize, f64>>| rows[r].get(&k).copied().unwrap_or(0.0);
            let (mut best, mut best_abs) = (usize::MAX, 0.0f64);
            for &r in &candidates {
                let v = value(r, &rows).abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best_abs <= PIVOT_RTOL * scale {
                return None;
            }
            // Prefer the ordered diagonal to keep the fill pattern of the ordering.
            let piv = if active[k] && value(k, &rows).abs() >= 0.1 * best_abs {
                k
            } else {
                best
            };
            active[piv] = false;
            let piv_val = value(piv, &rows);
            let piv_row: Vec<(usize, f64)> = rows[piv].range(k + 1..).map(|(&c, &v)| (c, v)).collect();

            let mut multipliers = Vec::new();
            for &r in &candidates {
                if r == piv {
                    continue;
                }
                let l = rows[r].remove(&k).unwrap_or(0.0) / piv_val;
                if l == 0.0 {
                    continue;
                }
                for &(c, u) in &piv_row {
                    let e = rows[r].entry(c).or_insert_with(|| {
                        col_rows[c].insert(r);
                        0.0
                    });
                    *e -= l * u;
                }
                multipliers.push((r, l));
            }
            col_rows[k].clear();
            pivot_row.push(piv);
            lower.push(multipliers);
            upper.push(piv_row);
            diag.push(piv_val);
            rows[piv].clear();
        }
        Some(Self {
            n,
            perm: order.to_vec(),
            pivot_row,
            lower,
            upper,
            diag,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for (k, &orig) in self.perm.iter().enumerate() {
            y[k] = b[orig];
        }
        for k in 0..n {
            let yp = y[self.pivot_row[k]];
            if yp != 0.0 {
                for &(r, l) in &self.lower[k] {
                    y[r] -= l * yp;
                }
            }
        }
        let mut z = vec![0.0; n];
        for k in (0..n).rev() {
            let mut acc = y[self.pivot_row[k]];
            for &(c, u) in &self.upper[k] {
                acc -= u * z[c];
            }
            z[k] = acc / self.diag[k];
        }
        let mut x = vec![0.0; n];
        for (k, &orig) in self.perm.iter().enumerate() {
            x[orig] = z[k];
        }
        x
    }
}
