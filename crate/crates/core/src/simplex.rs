//! Probability-simplex geometry: tangent-space bases and Euclidean projection.
//!
//! Every player's strategy lives on a simplex. Local analysis works in the
//! (k-1)-dimensional tangent space through a basis matrix `N` with
//! `1^T N = 0` and `N^T N = I`; trajectories and bandit iterates need the
//! Euclidean projection onto the (optionally floored) simplex.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Deterministic tangent-space basis for the k-simplex.
///
/// Columns are the Gram–Schmidt orthonormalization of
/// `e_1 - e_2, ..., e_1 - e_k`, so repeated calls are byte-identical. The
/// result `N` is `k x (k-1)` with `1^T N = 0` and `N^T N = I`.
pub fn simplex_basis(k: usize) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "simplex basis needs k >= 2, got {k}"
        )));
    }
    let mut basis = DMatrix::zeros(k, k - 1);
    for j in 1..k {
        let mut v = DVector::zeros(k);
        v[0] = 1.0;
        v[j] = -1.0;
        for c in 0..(j - 1) {
            let col = basis.column(c);
            let proj = col.dot(&v);
            v.axpy(-proj, &col.clone_owned(), 1.0);
        }
        v /= v.norm();
        basis.set_column(j - 1, &v);
    }
    Ok(basis)
}

/// Per-player tangent bases for a game, plus the block-diagonal collection.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexBasis {
    mats: Vec<DMatrix<f64>>,
}

impl SimplexBasis {
    pub fn for_actions(actions: &[usize]) -> Result<Self> {
        let mats = actions
            .iter()
            .map(|&k| simplex_basis(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mats })
    }

    /// Basis `N_i` of player `i`.
    pub fn player(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    pub fn players(&self) -> usize {
        self.mats.len()
    }

    /// Total reduced dimension `sum_i (k_i - 1)`.
    pub fn reduced_dim(&self) -> usize {
        self.mats.iter().map(|m| m.ncols()).sum()
    }

    /// The block-diagonal stacked basis.
    pub fn block_diag(&self) -> DMatrix<f64> {
        let rows: usize = self.mats.iter().map(|m| m.nrows()).sum();
        let cols = self.reduced_dim();
        let mut out = DMatrix::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for m in &self.mats {
            out.view_mut((r, c), (m.nrows(), m.ncols())).copy_from(m);
            r += m.nrows();
            c += m.ncols();
        }
        out
    }
}

/// Euclidean projection of `v` onto the floored simplex
/// `{x : x >= eps, sum x = 1}` (Duchi-style sort algorithm).
///
/// With `eps = 0` this is the ordinary simplex projection. Idempotent.
pub fn project_simplex(v: &DVector<f64>, eps: f64) -> Result<DVector<f64>> {
    let k = v.len();
    if eps < 0.0 || eps * k as f64 > 1.0 + 1e-15 {
        return Err(Error::InvalidArgument(format!(
            "floor eps = {eps} infeasible for k = {k}"
        )));
    }
    let mass = 1.0 - eps * k as f64;
    if mass <= 0.0 {
        return Ok(DVector::from_element(k, eps));
    }
    // Shift by the floor, project onto the simplex of total mass `mass`.
    let z: Vec<f64> = v.iter().map(|x| x - eps).collect();
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("non-finite entry in projection"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - mass) / (i as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        }
    }
    Ok(DVector::from_iterator(
        k,
        z.iter().map(|&x| (x - theta).max(0.0) + eps),
    ))
}

/// Uniform distribution over `k` actions.
pub fn uniform(k: usize) -> DVector<f64> {
    DVector::from_element(k, 1.0 / k as f64)
}
