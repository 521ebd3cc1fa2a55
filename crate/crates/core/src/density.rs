//! Integer sets at a finite horizon, counting-ratio density profiles,
//! visit sets of operator orbits, and syndeticity gaps.
//!
//! All densities are finite-horizon statements: `ratio(N) = #(A∩[0,N])/(N+1)`
//! and the tail min/max over `N ≥ burn_in` stand in for lower/upper density.
//! Nothing here claims a limit.

use std::io::{BufRead, Write};

use crate::operator::Operator;
use crate::scalar::Scalar;
use crate::vector::BlockVector;
use crate::{Error, Result};

/// A subset of `[0, horizon] ⊂ Z≥0`, stored as a dense bitset. Values are
/// immutable once built; all set algebra returns fresh sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet {
    horizon: u64,
    words: Vec<u64>,
}

impl IndexSet {
    pub fn empty(horizon: u64) -> Self {
        let words = vec![0u64; (horizon as usize + 64) / 64];
        IndexSet { horizon, words }
    }

    /// `[0, horizon]` entire.
    pub fn full(horizon: u64) -> Self {
        let mut s = Self::empty(horizon);
        for n in 0..=horizon {
            s.set_bit(n);
        }
        s
    }

    pub fn from_members<I: IntoIterator<Item = u64>>(horizon: u64, members: I) -> Result<Self> {
        let mut s = Self::empty(horizon);
        for n in members {
            if n > horizon {
                return Err(Error::Parameter(format!("member {n} exceeds horizon {horizon}")));
            }
            s.set_bit(n);
        }
        Ok(s)
    }

    pub fn from_pred(horizon: u64, pred: impl Fn(u64) -> bool) -> Self {
        let mut s = Self::empty(horizon);
        for n in 0..=horizon {
            if pred(n) {
                s.set_bit(n);
            }
        }
        s
    }

    /// Integer interval `[lo, hi] ∩ [0, horizon]` (empty if `lo > hi`).
    pub fn from_interval(horizon: u64, lo: u64, hi: u64) -> Self {
        let mut s = Self::empty(horizon);
        if lo > hi {
            return s;
        }
        for n in lo..=hi.min(horizon) {
            s.set_bit(n);
        }
        s
    }

    /// Positive multiples of `step` up to the horizon.
    pub fn positive_multiples(horizon: u64, step: u64) -> Self {
        let mut s = Self::empty(horizon);
        let mut n = step;
        while n <= horizon {
            s.set_bit(n);
            n += step;
        }
        s
    }

    fn set_bit(&mut self, n: u64) {
        self.words[(n / 64) as usize] |= 1u64 << (n % 64);
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn contains(&self, n: u64) -> bool {
        n <= self.horizon && self.words[(n / 64) as usize] & (1u64 << (n % 64)) != 0
    }

    pub fn len(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn min(&self) -> Option<u64> {
        self.iter().next()
    }

    pub fn max(&self) -> Option<u64> {
        for (i, w) in self.words.iter().enumerate().rev() {
            if *w != 0 {
                return Some(i as u64 * 64 + 63 - w.leading_zeros() as u64);
            }
        }
        None
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(|(i, w)| {
            let mut w = *w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as u64;
                    w &= w - 1;
                    Some(i as u64 * 64 + b)
                }
            })
        })
    }

    pub fn members(&self) -> Vec<u64> {
        self.iter().collect()
    }

    fn binary_op(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        let horizon = self.horizon.min(other.horizon);
        let mut out = Self::empty(horizon);
        for i in 0..out.words.len() {
            out.words[i] = f(self.words[i], other.words[i]);
        }
        out.mask_tail();
        out
    }

    fn mask_tail(&mut self) {
        let last_bits = (self.horizon % 64) + 1;
        if last_bits < 64 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << last_bits) - 1;
        }
    }

    /// Union on the common horizon (min of the two).
    pub fn union(&self, other: &Self) -> Self {
        self.binary_op(other, |a, b| a | b)
    }

    /// Intersection on the common horizon.
    pub fn intersect(&self, other: &Self) -> Self {
        self.binary_op(other, |a, b| a & b)
    }

    /// Set difference `self ∖ other` on the common horizon.
    pub fn difference(&self, other: &Self) -> Self {
        self.binary_op(other, |a, b| a & !b)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        if self.horizon > other.horizon {
            // all members must still fit under the other's horizon
            if self.iter().any(|n| n > other.horizon) {
                return false;
            }
        }
        self.iter().all(|n| other.contains(n))
    }

    pub fn is_disjoint_from(&self, other: &Self) -> bool {
        let n = self.words.len().min(other.words.len());
        (0..n).all(|i| self.words[i] & other.words[i] == 0)
    }

    /// Translation by a non-negative integer, clipped at the horizon.
    pub fn translate(&self, t: u64) -> Self {
        let mut out = Self::empty(self.horizon);
        for n in self.iter() {
            match n.checked_add(t) {
                Some(m) if m <= self.horizon => out.set_bit(m),
                _ => {}
            }
        }
        out
    }

    /// `(self + [−r, r]) ∩ [0, horizon]`.
    pub fn dilate(&self, r: u64) -> Self {
        let mut out = Self::empty(self.horizon);
        for n in self.iter() {
            let lo = n.saturating_sub(r);
            let hi = (n + r).min(self.horizon);
            for m in lo..=hi {
                out.set_bit(m);
            }
        }
        out
    }

    /// Prefix counts: `counts[N] = #(self ∩ [0, N])`.
    pub fn prefix_counts(&self) -> Vec<u64> {
        let mut counts = Vec::with_capacity(self.horizon as usize + 1);
        let mut acc = 0u64;
        for n in 0..=self.horizon {
            if self.contains(n) {
                acc += 1;
            }
            counts.push(acc);
        }
        counts
    }

    /// Serializes as a one-line `horizon=<N>` header followed by
    /// newline-delimited decimal members.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "horizon={}", self.horizon)?;
        for n in self.iter() {
            writeln!(w, "{n}")?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let horizon: u64 = header
            .trim()
            .strip_prefix("horizon=")
            .ok_or_else(|| Error::Parameter("missing horizon= header".into()))?
            .parse()
            .map_err(|e| Error::Parameter(format!("bad horizon: {e}")))?;
        let mut s = Self::empty(horizon);
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let n: u64 = t.parse().map_err(|e| Error::Parameter(format!("bad member: {e}")))?;
            if n > horizon {
                return Err(Error::Parameter(format!("member {n} exceeds horizon {horizon}")));
            }
            s.set_bit(n);
        }
        Ok(s)
    }
}

/// An exact counting ratio `count / (N+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frac {
    pub num: u64,
    pub den: u64,
}

impl Frac {
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn lt(self, other: Frac) -> bool {
        (self.num as u128) * (other.den as u128) < (other.num as u128) * (self.den as u128)
    }
}

/// Counting-ratio profile of an [`IndexSet`]: `ratio(N) = #(A∩[0,N])/(N+1)`
/// for every `N ≤ horizon`, plus the exact tail min/max past `burn_in`.
/// The tail statistics are finite-horizon surrogates for lower/upper
/// density — they are reported as such, never as limits.
#[derive(Clone, Debug)]
pub struct DensityProfile {
    counts: Vec<u64>,
    burn_in: u64,
    tail_min: Frac,
    tail_max: Frac,
}

impl DensityProfile {
    pub fn horizon(&self) -> u64 {
        self.counts.len() as u64 - 1
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    pub fn count(&self, n: u64) -> u64 {
        self.counts[n as usize]
    }

    pub fn ratio(&self, n: u64) -> f64 {
        self.counts[n as usize] as f64 / (n + 1) as f64
    }

    /// Exact minimum of `ratio(N)` over `N ∈ [burn_in, horizon]`.
    pub fn tail_min(&self) -> Frac {
        self.tail_min
    }

    /// Exact maximum of `ratio(N)` over `N ∈ [burn_in, horizon]`.
    pub fn tail_max(&self) -> Frac {
        self.tail_max
    }

    pub fn tail_min_f64(&self) -> f64 {
        self.tail_min.to_f64()
    }

    pub fn tail_max_f64(&self) -> f64 {
        self.tail_max.to_f64()
    }

    /// CSV export with columns `N,count,ratio`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "N,count,ratio")?;
        for n in 0..self.counts.len() {
            writeln!(w, "{n},{},{}", self.counts[n], self.counts[n] as f64 / (n + 1) as f64)?;
        }
        Ok(())
    }
}

/// Builds the counting-ratio profile of `set`, with tail statistics taken
/// over `N ∈ [burn_in, horizon]`.
pub fn density_profile(set: &IndexSet, burn_in: u64) -> Result<DensityProfile> {
    if burn_in > set.horizon() {
        return Err(Error::Parameter(format!(
            "burn_in {burn_in} exceeds horizon {}",
            set.horizon()
        )));
    }
    let counts = set.prefix_counts();
    let mut tail_min = Frac { num: 1, den: 1 };
    let mut tail_max = Frac { num: 0, den: 1 };
    for n in burn_in..=set.horizon() {
        let f = Frac { num: counts[n as usize], den: n + 1 };
        if f.lt(tail_min) {
            tail_min = f;
        }
        if tail_max.lt(f) {
            tail_max = f;
        }
    }
    Ok(DensityProfile { counts, burn_in, tail_min, tail_max })
}

/// Gap statistics of a non-empty set: `max_gap` is the largest difference
/// between consecutive members, including the leading gap from 0 to the
/// minimum; `trailing_gap` is the distance from the maximum to the horizon.
/// A set is syndetic-at-horizon with bound `max_gap`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyndeticGap {
    pub max_gap: u64,
    pub trailing_gap: u64,
}

pub fn syndetic_gap(set: &IndexSet) -> Result<SyndeticGap> {
    let mut iter = set.iter();
    let first = iter.next().ok_or_else(|| Error::Domain("syndetic gap of empty set".into()))?;
    let mut max_gap = first; // leading gap from 0
    let mut prev = first;
    for n in iter {
        max_gap = max_gap.max(n - prev);
        prev = n;
    }
    Ok(SyndeticGap { max_gap, trailing_gap: set.horizon() - prev })
}

/// Default bit-size budget for the exact-mode growth guard in orbit scans.
pub const EXACT_ORBIT_BIT_BUDGET: usize = 1 << 16;

/// The visit set `{ n ∈ [0, horizon] : ‖Tⁿx − center‖ < radius }`, computed
/// by repeated application of `op` (never by matrix powering). In exact
/// mode, coordinate growth beyond `EXACT_ORBIT_BIT_BUDGET` bits aborts with
/// an error advising float mode.
pub fn visit_set<S: Scalar, T: Operator<S> + ?Sized>(
    op: &T,
    x: &BlockVector<S>,
    center: &BlockVector<S>,
    radius: &S,
    horizon: u64,
) -> Result<IndexSet> {
    if *radius <= S::zero() {
        return Err(Error::Parameter("radius must be positive".into()));
    }
    if x.dim() != op.dim() || center.dim() != op.dim() || x.tag() != center.tag() {
        return Err(Error::Parameter(format!(
            "dimension/norm mismatch: op dim {}, x dim {}, center dim {}",
            op.dim(),
            x.dim(),
            center.dim()
        )));
    }
    let mut out = IndexSet::empty(horizon);
    let mut current = x.clone();
    for n in 0..=horizon {
        if n > 0 {
            current = op.apply(&current)?;
            if S::EXACT && current.max_bit_size() > EXACT_ORBIT_BIT_BUDGET {
                return Err(Error::ExactBlowup {
                    budget: EXACT_ORBIT_BIT_BUDGET,
                    step: n as usize,
                });
            }
        }
        if current.dist_lt(center, radius)? {
            out.set_bit(n);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{BackwardShift, IdentityOp};
    use crate::vector::NormTag;

    #[test]
    fn evens_profile() {
        let evens = IndexSet::from_pred(10_000, |n| n % 2 == 0);
        let p = density_profile(&evens, 100).unwrap();
        assert!((p.tail_min_f64() - 0.5).abs() < 1e-2);
        assert!((p.tail_max_f64() - 0.5).abs() < 1e-2);
    }

    #[test]
    fn empty_profile_all_zero() {
        let p = density_profile(&IndexSet::empty(500), 0).unwrap();
        assert_eq!(p.tail_max(), Frac { num: 0, den: 1 });
        for n in 0..=500 {
            assert_eq!(p.ratio(n), 0.0);
        }
    }

    #[test]
    fn direct_count_ratio() {
        // {2,6,10,14,18} at horizon 19: ratio(19) = 5/20
        let a = IndexSet::from_members(19, [2, 6, 10, 14, 18]).unwrap();
        let p = density_profile(&a, 0).unwrap();
        assert_eq!(p.count(19), 5);
        assert_eq!(p.ratio(19), 0.25);
    }

    #[test]
    fn burn_in_beyond_horizon_rejected() {
        let a = IndexSet::full(10);
        assert!(matches!(density_profile(&a, 11), Err(Error::Parameter(_))));
    }

    #[test]
    fn recount_matches_profile() {
        let a = IndexSet::from_pred(997, |n| n % 7 == 3 || n % 11 == 5);
        let p = density_profile(&a, 0).unwrap();
        for n in [0u64, 1, 13, 500, 997] {
            let recount = (0..=n).filter(|&m| a.contains(m)).count() as u64;
            assert_eq!(p.count(n), recount);
        }
    }

    #[test]
    fn gaps() {
        let fives = IndexSet::from_pred(100, |n| n % 5 == 0);
        assert_eq!(syndetic_gap(&fives).unwrap(), SyndeticGap { max_gap: 5, trailing_gap: 0 });

        let single = IndexSet::from_members(10, [0]).unwrap();
        assert_eq!(syndetic_gap(&single).unwrap(), SyndeticGap { max_gap: 0, trailing_gap: 10 });

        assert!(syndetic_gap(&IndexSet::empty(4)).is_err());
    }

    #[test]
    fn set_algebra() {
        let a = IndexSet::from_members(5, [1, 3]).unwrap();
        let b = IndexSet::from_members(5, [2, 3]).unwrap();
        assert_eq!(a.union(&b).members(), vec![1, 2, 3]);
        assert_eq!(a.intersect(&b).members(), vec![3]);
        assert_eq!(a.difference(&b).members(), vec![1]);

        let c = IndexSet::from_members(6, [0, 5]).unwrap();
        assert_eq!(c.translate(3).members(), vec![3]); // 8 clipped

        let twos = IndexSet::from_pred(100, |n| n % 2 == 0);
        let threes = IndexSet::from_pred(100, |n| n % 3 == 0);
        let sixes = IndexSet::from_pred(100, |n| n % 6 == 0);
        assert_eq!(twos.intersect(&threes), sixes);
    }

    #[test]
    fn horizon_mismatch_takes_min() {
        let a = IndexSet::full(100);
        let b = IndexSet::full(50);
        assert_eq!(a.union(&b).horizon(), 50);
        assert_eq!(a.union(&b).len(), 51);
    }

    #[test]
    fn visit_identity_everywhere() {
        let x = BlockVector::new(vec![1.0, 2.0], NormTag::Sup).unwrap();
        let v = visit_set(&IdentityOp(2), &x, &x, &0.5, 30).unwrap();
        assert_eq!(v.len(), 31);
    }

    #[test]
    fn visit_nilpotent_tail() {
        // T = 2B on dim 2, x = e1, center = 2·e0: visits exactly {1}.
        let t: BackwardShift<f64> = BackwardShift::scaled(2.0, 2);
        let x = BlockVector::new(vec![0.0, 1.0], NormTag::Sup).unwrap();
        let center = BlockVector::new(vec![2.0, 0.0], NormTag::Sup).unwrap();
        let v = visit_set(&t, &x, &center, &0.1, 20).unwrap();
        assert_eq!(v.members(), vec![1]);
    }

    #[test]
    fn visit_dimension_mismatch() {
        let t: BackwardShift<f64> = BackwardShift::scaled(2.0, 3);
        let x = BlockVector::new(vec![0.0, 1.0], NormTag::Sup).unwrap();
        assert!(visit_set(&t, &x, &x, &0.1, 5).is_err());
    }

    #[test]
    fn roundtrip_io() {
        let a = IndexSet::from_pred(300, |n| n % 13 == 1);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let b = IndexSet::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }
}
