//! Sparse LDL^T factorization for symmetric positive-definite systems.
//!
//! Ordering is greedy minimum degree on the elimination graph, so tree
//! networks factor with zero fill and loopy networks with little.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Symmetric matrix assembled from (row, col, value) contributions.
#[derive(Clone, Debug)]
pub struct SymmetricBuilder {
    n: usize,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl SymmetricBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![BTreeMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at (i, j) and, for i != j, at (j, i).
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        *self.rows[i].entry(j).or_insert(0.0) += value;
        if i != j {
            *self.rows[j].entry(i).or_insert(0.0) += value;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].get(&j).copied().unwrap_or(0.0)
    }

    pub fn factor(&self) -> Result<LdlFactor> {
        LdlFactor::new(self)
    }
}

fn minimum_degree_order(rows: &[BTreeMap<usize, f64>]) -> Vec<usize> {
    let n = rows.len();
    let mut adj: Vec<BTreeSet<usize>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.keys().copied().filter(|&j| j != i).collect())
        .collect();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let k = (0..n)
            .filter(|&i| alive[i])
            .min_by_key(|&i| (adj[i].len(), i))
            .unwrap();
        alive[k] = false;
        order.push(k);
        let nbrs: Vec<usize> = adj[k].iter().copied().collect();
        for &a in &nbrs {
            adj[a].remove(&k);
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[k].clear();
    }
    order
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    /// perm[k] = original index eliminated at step k.
    perm: Vec<usize>,
    /// Strict lower columns: l[k] = [(row > k, value)] in permuted indices.
    l: Vec<Vec<(usize, f64)>>,
    d: Vec<f64>,
}

impl LdlFactor {
    fn new(a: &SymmetricBuilder) -> Result<Self> {
        let n = a.n;
        let perm = minimum_degree_order(&a.rows);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        // Upper triangle of the permuted matrix, row-wise.
        let mut work: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, row) in a.rows.iter().enumerate() {
            for (&j, &v) in row {
                let (pi, pj) = (inv[i], inv[j]);
                if pi <= pj {
                    *work[pi].entry(pj).or_insert(0.0) += v;
                }
            }
        }
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let mut l = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for k in 0..n {
            let row = std::mem::take(&mut work[k]);
            let dk = row.get(&k).copied().unwrap_or(0.0);
            if !(dk > 1e-13 * scale) || !dk.is_finite() {
                return Err(Error::SingularSystem(format!(
                    "non-positive pivot {dk:e} at unknown {}",
                    perm[k]
                )));
            }
            let col: Vec<(usize, f64)> = row
                .iter()
                .filter(|(&j, _)| j > k)
                .map(|(&j, &v)| (j, v / dk))
                .collect();
            for (x, &(i, li)) in col.iter().enumerate() {
                for &(j, lj) in &col[x..] {
                    *work[i].entry(j).or_insert(0.0) -= li * dk * lj;
                }
            }
            l.push(col);
            d.push(dk);
        }
        Ok(Self { perm, l, d })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let yk = y[k];
            for &(i, lik) in &self.l[k] {
                y[i] -= lik * yk;
            }
        }
        for k in 0..n {
            y[k] /= self.d[k];
        }
        for k in (0..n).rev() {
            let mut acc = y[k];
            for &(i, lik) in &self.l[k] {
                acc -= lik * y[i];
            }
            y[k] = acc;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Number of stored off-diagonal factor entries.
    pub fn fill(&self) -> usize {
        self.l.iter().map(Vec::len).sum()
    }
}
