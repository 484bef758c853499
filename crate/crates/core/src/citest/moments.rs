use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::data::Dataset;

/// Unexplained-variance fraction below which a conditioning column counts
/// as collinear with the preceding ones.
const COLLINEAR_TOL: f64 = 1e-10;

/// Centered cross-products of one row subset. Columns `0..D` are the
/// system variables; when the subset spans several contexts, `R` is
/// dummy-coded after them (one column per context except the first).
#[derive(Debug)]
pub(crate) struct Moments {
    pub n: usize,
    n_system: usize,
    dummy_contexts: Vec<u32>,
    pub group_counts: BTreeMap<u32, usize>,
    means: Vec<f64>,
    cross: DMatrix<f64>,
}

impl Moments {
    pub fn pooled(data: &Dataset) -> Self {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        Self::build(data, &rows)
    }

    pub fn restricted(data: &Dataset, r: u32) -> Self {
        Self::build(data, &data.rows_in_context(r))
    }

    fn build(data: &Dataset, rows: &[usize]) -> Self {
        let mut group_counts = BTreeMap::new();
        for &i in rows {
            *group_counts.entry(data.context()[i]).or_insert(0usize) += 1;
        }
        let dummy_contexts: Vec<u32> = group_counts.keys().skip(1).copied().collect();
        let mut columns: Vec<Vec<f64>> = (0..data.n_system())
            .map(|c| rows.iter().map(|&i| data.column(c)[i]).collect())
            .collect();
        for &r in &dummy_contexts {
            columns.push(
                rows.iter()
                    .map(|&i| if data.context()[i] == r { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        let n = rows.len();
        let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let centered: Vec<Vec<f64>> = columns
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| v - m).collect())
            .collect();
        let k = columns.len();
        let mut cross = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let s: f64 = centered[a].iter().zip(&centered[b]).map(|(u, v)| u * v).sum();
                cross[(a, b)] = s;
                cross[(b, a)] = s;
            }
        }
        Moments {
            n,
            n_system: data.n_system(),
            dummy_contexts,
            group_counts,
            means,
            cross,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.group_counts.len()
    }

    pub fn mean(&self, col: usize) -> f64 {
        self.means[col]
    }

    /// Centered sum of squares of one internal column.
    pub fn sum_sq(&self, col: usize) -> f64 {
        self.cross[(col, col)]
    }

    /// Internal columns for a set of dataset columns, `R` expanded to its
    /// dummies.
    pub fn expand(&self, cols: &BTreeSet<usize>) -> Vec<usize> {
        let mut out = Vec::new();
        for &c in cols {
            if c == self.n_system {
                out.extend(self.dummy_columns());
            } else {
                out.push(c);
            }
        }
        out
    }

    pub fn dummy_columns(&self) -> std::ops::Range<usize> {
        self.n_system..self.n_system + self.dummy_contexts.len()
    }

    pub fn dummy_contexts(&self) -> &[u32] {
        &self.dummy_contexts
    }

    /// Residual cross-products of `targets` after regressing them on `z`
    /// with intercept, plus the coefficient matrix (`|z| × |targets|`).
    /// `None` when the conditioning columns are collinear.
    pub fn residualize(&self, targets: &[usize], z: &[usize]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        residualize_cross(&self.cross, targets, z)
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }
}

/// [`Moments::residualize`] on an arbitrary centered cross-product matrix.
pub(crate) fn residualize_cross(
    cross: &DMatrix<f64>,
    targets: &[usize],
    z: &[usize],
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let t = targets.len();
    let k = z.len();
    let saa = DMatrix::from_fn(t, t, |i, j| cross[(targets[i], targets[j])]);
    if k == 0 {
        return Some((saa, DMatrix::zeros(0, t)));
    }
    let szz = DMatrix::from_fn(k, k, |i, j| cross[(z[i], z[j])]);
    let chol = szz.clone().cholesky()?;
    let l = chol.l_dirty();
    for i in 0..k {
        let d = l[(i, i)];
        if !(d * d >= COLLINEAR_TOL * szz[(i, i)]) || szz[(i, i)] <= 0.0 {
            return None;
        }
    }
    let sza = DMatrix::from_fn(k, t, |i, j| cross[(z[i], targets[j])]);
    let beta = chol.solve(&sza);
    Some((saa - sza.transpose() * &beta, beta))
}
