//! Applicable finite-dimensional operators.
//!
//! Orbit code iterates by repeated application; dense matrix powers are
//! never formed. The one concrete workhorse is a column-sparse matrix,
//! which covers every structured operator in the crate (shifts, C-type
//! blocks, diagonal and rank-one pieces) at the truncations we use.

use crate::scalar::Scalar;
use crate::vector::BlockVector;
use crate::{Error, Result};

/// Anything that can be applied to a coordinate vector.
pub trait Operator<S: Scalar> {
    fn dim(&self) -> usize;

    /// `y = T x` on raw coordinates (`x.len() == dim()`).
    fn apply_slice(&self, x: &[S]) -> Vec<S>;

    fn apply(&self, x: &BlockVector<S>) -> Result<BlockVector<S>> {
        if x.dim() != self.dim() {
            return Err(Error::Parameter(format!(
                "operator dim {} vs vector dim {}",
                self.dim(),
                x.dim()
            )));
        }
        BlockVector::new(self.apply_slice(x.coords()), x.tag())
    }
}

/// Column-major sparse matrix: `cols[j]` lists `(row, entry)` with rows
/// strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseColMatrix<S> {
    dim: usize,
    cols: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> SparseColMatrix<S> {
    pub fn zeros(dim: usize) -> Self {
        SparseColMatrix { dim, cols: vec![Vec::new(); dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let cols = (0..dim).map(|j| vec![(j, S::one())]).collect();
        SparseColMatrix { dim, cols }
    }

    pub fn from_cols(dim: usize, cols: Vec<Vec<(usize, S)>>) -> Result<Self> {
        if cols.len() != dim {
            return Err(Error::Parameter("column count != dim".into()));
        }
        for (j, col) in cols.iter().enumerate() {
            let mut last = None;
            for (r, _) in col {
                if *r >= dim {
                    return Err(Error::Parameter(format!("row {r} out of range in column {j}")));
                }
                if let Some(l) = last {
                    if *r <= l {
                        return Err(Error::Parameter(format!(
                            "rows not strictly increasing in column {j}"
                        )));
                    }
                }
                last = Some(*r);
            }
        }
        Ok(SparseColMatrix { dim, cols })
    }

    pub fn col(&self, j: usize) -> &[(usize, S)] {
        &self.cols[j]
    }

    pub fn set_entry(&mut self, row: usize, col: usize, value: S) {
        assert!(row < self.dim && col < self.dim);
        let c = &mut self.cols[col];
        match c.binary_search_by_key(&row, |(r, _)| *r) {
            Ok(i) => {
                if value.is_zero() {
                    c.remove(i);
                } else {
                    c[i].1 = value;
                }
            }
            Err(i) => {
                if !value.is_zero() {
                    c.insert(i, (row, value));
                }
            }
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> S {
        self.cols[col]
            .iter()
            .find(|(r, _)| *r == row)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(S::zero)
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// `self ∘ rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let cols = rhs
            .cols
            .iter()
            .map(|col| {
                let mut dense = vec![S::zero(); self.dim];
                for (r, v) in col {
                    for (rr, vv) in &self.cols[*r] {
                        dense[*rr] = dense[*rr].clone() + vv.clone() * v.clone();
                    }
                }
                compress(&dense)
            })
            .collect();
        SparseColMatrix { dim: self.dim, cols }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let cols = (0..self.dim)
            .map(|j| {
                let mut dense = vec![S::zero(); self.dim];
                for (r, v) in &self.cols[j] {
                    dense[*r] = v.clone();
                }
                for (r, v) in &rhs.cols[j] {
                    dense[*r] = dense[*r].clone() - v.clone();
                }
                compress(&dense)
            })
            .collect();
        SparseColMatrix { dim: self.dim, cols }
    }

    /// Adds the rank-one operator `y ⊗ f` (matrix `y f^T`).
    pub fn add_rank_one(&mut self, y: &[S], f: &[S]) {
        assert_eq!(y.len(), self.dim);
        assert_eq!(f.len(), self.dim);
        for j in 0..self.dim {
            if f[j].is_zero() {
                continue;
            }
            let mut dense = vec![S::zero(); self.dim];
            for (r, v) in &self.cols[j] {
                dense[*r] = v.clone();
            }
            for (r, yv) in y.iter().enumerate() {
                if !yv.is_zero() {
                    dense[r] = dense[r].clone() + yv.clone() * f[j].clone();
                }
            }
            self.cols[j] = compress(&dense);
        }
    }

    /// Exact rank via elimination over the non-zero columns only (cheap
    /// when the matrix is a low-rank update).
    pub fn rank(&self) -> usize {
        let mut basis: Vec<Vec<S>> = Vec::new();
        for col in &self.cols {
            if col.is_empty() {
                continue;
            }
            let mut dense = vec![S::zero(); self.dim];
            for (r, v) in col {
                dense[*r] = v.clone();
            }
            // reduce against the pivots found so far
            for b in &basis {
                let lead = b.iter().position(|x| !x.is_zero()).unwrap();
                if !dense[lead].is_zero() {
                    let factor = dense[lead].clone() / b[lead].clone();
                    for i in 0..self.dim {
                        dense[i] = dense[i].clone() - factor.clone() * b[i].clone();
                    }
                }
            }
            if dense.iter().any(|x| !x.is_zero()) {
                basis.push(dense);
            }
        }
        basis.len()
    }

    /// l1 operator norm restricted as in a projected product: the maximum
    /// over columns `j ∈ cols` of the sum of `|entries|` over `rows < row_cut`.
    pub fn l1_norm_rows_below(&self, row_cut: usize, cols: impl Iterator<Item = usize>) -> S {
        let mut best = S::zero();
        for j in cols {
            let mut sum = S::zero();
            for (r, v) in &self.cols[j] {
                if *r < row_cut {
                    sum = sum + v.abs();
                }
            }
            if sum > best {
                best = sum;
            }
        }
        best
    }

    /// Max column l1 sum — the l1→l1 operator norm.
    pub fn l1_norm(&self) -> S {
        self.l1_norm_rows_below(self.dim, 0..self.dim)
    }
}

fn compress<S: Scalar>(dense: &[S]) -> Vec<(usize, S)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_zero())
        .map(|(r, v)| (r, v.clone()))
        .collect()
}

impl<S: Scalar> Operator<S> for SparseColMatrix<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_slice(&self, x: &[S]) -> Vec<S> {
        let mut y = vec![S::zero(); self.dim];
        for (j, xj) in x.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            for (r, v) in &self.cols[j] {
                y[*r] = y[*r].clone() + v.clone() * xj.clone();
            }
        }
        y
    }
}

/// Weighted backward shift `(B_w x)_k = w_{k+1} x_{k+1}`, last coordinate 0.
/// `multipliers[k]` holds `w_{k+1}`.
#[derive(Clone, Debug)]
pub struct BackwardShift<S> {
    multipliers: Vec<S>,
}

impl<S: Scalar> BackwardShift<S> {
    pub fn new(multipliers: Vec<S>) -> Self {
        BackwardShift { multipliers }
    }

    /// Unweighted shift scaled by a constant: `c·B`.
    pub fn scaled(c: S, dim: usize) -> Self {
        BackwardShift { multipliers: vec![c; dim.saturating_sub(1)] }
    }

    /// The right inverse `S = F_{1/w}`: `(S x)_{k+1} = x_k / w_{k+1}`,
    /// truncated at the top coordinate.
    pub fn right_inverse_apply(&self, x: &[S]) -> Vec<S> {
        let dim = self.dim();
        let mut y = vec![S::zero(); dim];
        for k in 0..dim - 1 {
            if !x[k].is_zero() {
                y[k + 1] = x[k].clone() / self.multipliers[k].clone();
            }
        }
        y
    }
}

impl<S: Scalar> Operator<S> for BackwardShift<S> {
    fn dim(&self) -> usize {
        self.multipliers.len() + 1
    }

    fn apply_slice(&self, x: &[S]) -> Vec<S> {
        let dim = self.dim();
        let mut y = vec![S::zero(); dim];
        for k in 0..dim - 1 {
            if !x[k + 1].is_zero() {
                y[k] = self.multipliers[k].clone() * x[k + 1].clone();
            }
        }
        y
    }
}

/// Identity operator of a given dimension.
#[derive(Clone, Copy, Debug)]
pub struct IdentityOp(pub usize);

impl<S: Scalar> Operator<S> for IdentityOp {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply_slice(&self, x: &[S]) -> Vec<S> {
        x.to_vec()
    }
}
