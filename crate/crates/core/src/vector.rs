//! Finite coordinate vectors tagged with the norm they are measured in.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Which norm a [`BlockVector`] carries.
///
/// `Lp(p)` comparisons are done on p-th powers, so they stay exact in
/// rational mode (no roots are ever taken).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormTag {
    /// `sup_k |x_k|` — the c0 / l-infinity norm.
    Sup,
    /// `(Σ |x_k|^p)^{1/p}` for an integer `p ≥ 1`.
    Lp(u32),
    /// Max over consecutive length-`block_len` blocks of the block's l1
    /// norm — the norm of a truncated c0-sum of l1 spaces.
    MaxBlockL1(usize),
}

/// A finite-dimensional vector in either arithmetic mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector<S> {
    coords: Vec<S>,
    tag: NormTag,
}

impl<S: Scalar> BlockVector<S> {
    pub fn new(coords: Vec<S>, tag: NormTag) -> Result<Self> {
        if let NormTag::MaxBlockL1(len) = tag {
            if len == 0 || coords.len() % len != 0 {
                return Err(Error::Parameter(format!(
                    "coordinate count {} is not a multiple of block length {len}",
                    coords.len()
                )));
            }
        }
        if let NormTag::Lp(p) = tag {
            if p == 0 {
                return Err(Error::Parameter("lp norm needs p >= 1".into()));
            }
        }
        Ok(BlockVector { coords, tag })
    }

    pub fn zeros(dim: usize, tag: NormTag) -> Self {
        Self::new(vec![S::zero(); dim], tag).expect("zero vector")
    }

    /// Basis vector `e_k`.
    pub fn basis(dim: usize, k: usize, tag: NormTag) -> Self {
        let mut v = Self::zeros(dim, tag);
        v.coords[k] = S::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn tag(&self) -> NormTag {
        self.tag
    }

    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [S] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<S> {
        self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    /// Degree: index of the last non-zero coordinate (`None` if zero).
    pub fn degree(&self) -> Option<usize> {
        self.coords.iter().rposition(|c| !c.is_zero())
    }

    pub fn add_scaled(&mut self, other: &Self, factor: &S) {
        assert_eq!(self.dim(), other.dim());
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            *a = a.clone() + b.clone() * factor.clone();
        }
    }

    /// The norm as an `f64` (lossy for huge/tiny exact values).
    pub fn norm_f64(&self) -> f64 {
        match self.tag {
            NormTag::Sup => self
                .coords
                .iter()
                .map(|c| c.abs().to_f64())
                .fold(0.0, f64::max),
            NormTag::Lp(p) => self
                .coords
                .iter()
                .map(|c| c.abs().to_f64().powi(p as i32))
                .sum::<f64>()
                .powf(1.0 / p as f64),
            NormTag::MaxBlockL1(len) => self
                .coords
                .chunks(len)
                .map(|b| b.iter().map(|c| c.abs().to_f64()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    /// The norm in the scalar type. For `Lp(p)` this is the p-th power of
    /// the norm (exactness over prettiness); `Sup` and `MaxBlockL1` are the
    /// norms themselves.
    pub fn norm_comparable(&self) -> S {
        match self.tag {
            NormTag::Sup => self
                .coords
                .iter()
                .map(|c| c.abs())
                .fold(S::zero(), |m, c| if c > m { c } else { m }),
            NormTag::Lp(p) => self
                .coords
                .iter()
                .map(|c| powi(&c.abs(), p))
                .fold(S::zero(), |acc, c| acc + c),
            NormTag::MaxBlockL1(len) => self
                .coords
                .chunks(len)
                .map(|b| b.iter().map(|c| c.abs()).fold(S::zero(), |a, c| a + c))
                .fold(S::zero(), |m, c| if c > m { c } else { m }),
        }
    }

    /// Exact comparison `‖self − other‖ < radius`, with `Lp` handled on
    /// p-th powers. Requires matching dimensions and tags.
    pub fn dist_lt(&self, other: &Self, radius: &S) -> Result<bool> {
        if self.dim() != other.dim() || self.tag != other.tag {
            return Err(Error::Parameter(format!(
                "dimension/norm mismatch: {}/{:?} vs {}/{:?}",
                self.dim(),
                self.tag,
                other.dim(),
                other.tag
            )));
        }
        let d = |i: usize| (self.coords[i].clone() - other.coords[i].clone()).abs();
        Ok(match self.tag {
            NormTag::Sup => (0..self.dim()).all(|i| d(i) < *radius),
            NormTag::Lp(p) => {
                let mut acc = S::zero();
                let bound = powi(radius, p);
                for i in 0..self.dim() {
                    acc = acc + powi(&d(i), p);
                    if acc >= bound {
                        return Ok(false);
                    }
                }
                acc < bound
            }
            NormTag::MaxBlockL1(len) => {
                let bound = radius.clone();
                let n = self.dim();
                let mut start = 0;
                while start < n {
                    let mut acc = S::zero();
                    for i in start..start + len {
                        acc = acc + d(i);
                    }
                    if acc >= bound {
                        return Ok(false);
                    }
                    start += len;
                }
                true
            }
        })
    }

    /// Largest bit size over coordinates (for the exact-mode growth guard).
    pub fn max_bit_size(&self) -> usize {
        self.coords.iter().map(|c| c.bit_size()).max().unwrap_or(0)
    }
}

fn powi<S: Scalar>(x: &S, p: u32) -> S {
    let mut acc = S::one();
    for _ in 0..p {
        acc = acc * x.clone();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    #[test]
    fn norms_basic() {
        let v = BlockVector::new(vec![1.0, -2.0, 0.5], NormTag::Sup).unwrap();
        assert_eq!(v.norm_f64(), 2.0);
        let v = BlockVector::new(vec![1.0, -2.0, 0.5, 0.0], NormTag::Lp(1)).unwrap();
        assert_eq!(v.norm_f64(), 3.5);
        let v =
            BlockVector::new(vec![1.0, -2.0, 0.5, 0.25], NormTag::MaxBlockL1(2)).unwrap();
        assert_eq!(v.norm_f64(), 3.0);
    }

    #[test]
    fn norm_zero_iff_zero() {
        let z: BlockVector<Rat> = BlockVector::zeros(4, NormTag::Lp(2));
        assert!(z.norm_comparable().is_zero());
        let mut v = z.clone();
        v.coords_mut()[3] = Rat::from_ratio(1, 7);
        assert!(!v.norm_comparable().is_zero());
    }

    #[test]
    fn block_len_validated() {
        assert!(BlockVector::new(vec![1.0; 5], NormTag::MaxBlockL1(2)).is_err());
    }

    #[test]
    fn exact_lp_distance() {
        let a = BlockVector::new(vec![Rat::from_ratio(1, 3), Rat::from_ratio(1, 5)], NormTag::Lp(2))
            .unwrap();
        let b = BlockVector::zeros(2, NormTag::Lp(2));
        // ‖a‖₂² = 1/9 + 1/25 = 34/225; compare against radius² exactly.
        let r_in = Rat::from_ratio(2, 5); // (2/5)² = 36/225 > 34/225
        let r_out = Rat::from_ratio(17, 45); // (17/45)² = 289/2025 < 306/2025
        assert!(a.dist_lt(&b, &r_in).unwrap());
        assert!(!a.dist_lt(&b, &r_out).unwrap());
    }
}
