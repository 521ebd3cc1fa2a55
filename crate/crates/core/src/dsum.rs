//! A truncated c0-sum of l1 blocks and the operator quintet acting on it.
//!
//! The space is `L` blocks of `K` coordinates each, normed by the max of
//! the block l1 norms. On it live:
//!
//! * `T  = ⊕_l (I + 2^{−l} B)` — dampened shift perturbations per block;
//! * `T1 = ⊕_l (I + B)` — the undampened version;
//! * `D` — diagonal `2^{−lk}` on coordinate k of block l, intertwining
//!   the two: `T1 D = D T` exactly on the truncation (both sides only
//!   lower coordinate indices, so there is no boundary leakage);
//! * `V` — the kernel `2^{−jk}` summing block-1 coordinates into rows;
//! * `R0` — writes `ε_l · V(x(1))` into every block l.
//!
//! The dominant-term expansion of `R0` and the rank-one extension
//! `R(x) = R0(x) + (x_0(1)/u_0(1)) (v − R0 u)` (which pins `R(u) = v`
//! exactly) are verified here with exact rational arithmetic.

use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::operator::{Operator, SparseColMatrix};
use crate::scalar::{Rat, Scalar};
use crate::vector::{BlockVector, NormTag};
use crate::{Error, Result};

/// The truncated block space: `blocks` blocks of `block_len` coordinates,
/// dampening factors `eps[l−1] = ε_l > 0` decreasing to 0.
#[derive(Clone, Debug)]
pub struct DsumSpace {
    pub blocks: usize,
    pub block_len: usize,
    pub eps: Vec<Rat>,
}

/// JSON shape: `{L, K, eps_rule}` where the default rule is `2^-l`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DsumConfig {
    #[serde(rename = "L")]
    pub blocks: usize,
    #[serde(rename = "K")]
    pub block_len: usize,
    #[serde(default)]
    pub eps_rule: EpsRule,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum EpsRule {
    /// `ε_l = 2^{−l}` — dyadic, so every operator entry stays exact.
    #[default]
    Pow2Inverse,
}

impl DsumSpace {
    /// Default dampening `ε_l = 2^{−l}`.
    pub fn new(blocks: usize, block_len: usize) -> Result<Self> {
        if blocks == 0 || block_len < 2 {
            return Err(Error::Parameter("need at least one block of length ≥ 2".into()));
        }
        let eps = (1..=blocks).map(|l| <Rat as Scalar>::pow2(-(l as i64))).collect();
        Ok(DsumSpace { blocks, block_len, eps })
    }

    pub fn from_config(cfg: &DsumConfig) -> Result<Self> {
        match cfg.eps_rule {
            EpsRule::Pow2Inverse => Self::new(cfg.blocks, cfg.block_len),
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks * self.block_len
    }

    /// Flat index of coordinate k of block l (1-based block index).
    pub fn idx(&self, l: usize, k: usize) -> usize {
        debug_assert!(l >= 1 && l <= self.blocks && k < self.block_len);
        (l - 1) * self.block_len + k
    }

    pub fn norm_tag(&self) -> NormTag {
        NormTag::MaxBlockL1(self.block_len)
    }

    pub fn zero_vector<S: Scalar>(&self) -> BlockVector<S> {
        BlockVector::zeros(self.dim(), self.norm_tag())
    }

    /// Basis vector `e_k(l)`.
    pub fn basis<S: Scalar>(&self, l: usize, k: usize) -> BlockVector<S> {
        BlockVector::basis(self.dim(), self.idx(l, k), self.norm_tag())
    }
}

/// The operator quintet on one space.
#[derive(Clone, Debug)]
pub struct DsumOps {
    pub space: DsumSpace,
    pub t: SparseColMatrix<Rat>,
    pub t1: SparseColMatrix<Rat>,
    pub d: SparseColMatrix<Rat>,
    /// Block-level kernel (acts within a single l1 block).
    pub v: SparseColMatrix<Rat>,
    pub r0: SparseColMatrix<Rat>,
}

/// Materializes all five operators. `V` is truncated to `j, k ∈ [1, K−1]`
/// with zero row 0; `R0` reads only block 1.
pub fn build_dsum_ops(space: &DsumSpace) -> Result<DsumOps> {
    let dim = space.dim();
    let kk = space.block_len;
    let mut t = SparseColMatrix::<Rat>::zeros(dim);
    let mut t1 = SparseColMatrix::<Rat>::zeros(dim);
    let mut d = SparseColMatrix::<Rat>::zeros(dim);

    for l in 1..=space.blocks {
        let damp = <Rat as Scalar>::pow2(-(l as i64));
        for k in 0..kk {
            let col = space.idx(l, k);
            t.set_entry(col, col, Rat::one());
            t1.set_entry(col, col, Rat::one());
            if k >= 1 {
                // backward shift part: e_k ↦ e_{k−1}
                t.set_entry(space.idx(l, k - 1), col, damp.clone());
                t1.set_entry(space.idx(l, k - 1), col, Rat::one());
            }
            d.set_entry(col, col, <Rat as Scalar>::pow2(-((l * k) as i64)));
        }
    }

    let mut v = SparseColMatrix::<Rat>::zeros(kk);
    for j in 1..kk {
        for k in 1..kk {
            v.set_entry(k, j, <Rat as Scalar>::pow2(-((j * k) as i64)));
        }
    }

    let mut r0 = SparseColMatrix::<Rat>::zeros(dim);
    for j in 1..kk {
        let col = space.idx(1, j);
        for l in 1..=space.blocks {
            for k in 1..kk {
                r0.set_entry(
                    space.idx(l, k),
                    col,
                    space.eps[l - 1].clone() * <Rat as Scalar>::pow2(-((j * k) as i64)),
                );
            }
        }
    }

    Ok(DsumOps { space: space.clone(), t, t1, d, v, r0 })
}

impl DsumOps {
    /// K×K restriction of a full-space operator to block l (valid because
    /// `T`, `T1`, `D` never cross blocks).
    fn block_restriction(&self, m: &SparseColMatrix<Rat>, l: usize) -> SparseColMatrix<Rat> {
        let kk = self.space.block_len;
        let base = (l - 1) * kk;
        let mut out = SparseColMatrix::<Rat>::zeros(kk);
        for k in 0..kk {
            for (r, v) in m.col(base + k) {
                if (base..base + kk).contains(r) {
                    out.set_entry(r - base, k, v.clone());
                }
            }
        }
        out
    }
}

/// Exact per-block identity `(I+B) D(l) = D(l) (I+2^{−l}B)` on the K-block
/// truncation, using the materialized operators. Both sides only lower
/// coordinate indices, so the truncated equality is exact, with no leakage
/// at the top index (the check covers every column including K−1).
pub fn check_intertwining(ops: &DsumOps, l: usize) -> Result<bool> {
    if l < 1 || l > ops.space.blocks {
        return Err(Error::Parameter(format!("block {l} out of range")));
    }
    let shifted = ops.block_restriction(&ops.t1, l);
    let dampened = ops.block_restriction(&ops.t, l);
    let diag = ops.block_restriction(&ops.d, l);
    Ok(shifted.compose(&diag) == diag.compose(&dampened))
}

/// The assembled identity `T1 D = D T` on the whole truncated space.
pub fn check_intertwining_full(ops: &DsumOps) -> bool {
    ops.t1.compose(&ops.d) == ops.d.compose(&ops.t)
}

/// Sparsity facts the construction relies on: `T`, `T1`, `D` never raise a
/// coordinate index within a block and never cross blocks; `V` and `R0`
/// have zero row 0 in every block and read nothing outside block 1
/// (resp. columns `j ∈ [1, K−1]`).
pub fn check_sparsity_pattern(ops: &DsumOps) -> bool {
    let kk = ops.space.block_len;
    let dim = ops.space.dim();
    for (name, m) in [("t", &ops.t), ("t1", &ops.t1), ("d", &ops.d)] {
        let _ = name;
        for col in 0..dim {
            let block = col / kk;
            if m.col(col).iter().any(|(row, _)| row / kk != block || *row > col) {
                return false;
            }
        }
    }
    for col in 0..kk.min(1) {
        // V kills e_0: column 0 empty, row 0 empty
        if !ops.v.col(col).is_empty() {
            return false;
        }
    }
    for col in 0..kk {
        if ops.v.col(col).iter().any(|(r, _)| *r == 0) {
            return false;
        }
    }
    for col in 0..dim {
        let in_block1_tail = col >= 1 && col < kk;
        if !in_block1_tail && !ops.r0.col(col).is_empty() {
            return false;
        }
        if ops.r0.col(col).iter().any(|(r, _)| r % kk == 0) {
            return false;
        }
    }
    true
}

/// Per-k outcome of the dominant-term expansion of `R0`.
#[derive(Clone, Debug)]
pub struct DominantTermReport {
    pub l: usize,
    pub m: usize,
    /// `(k, δ(k), bound 2^{−k}·‖x(1)‖₁/|x_m(1)|)` for each checked k.
    pub rows: Vec<(usize, f64, f64)>,
    /// Max of `|δ(k)|·2^k·|x_m(1)|/‖x(1)‖₁` over the range — at most 1
    /// when the expansion holds.
    pub max_ratio: f64,
    pub all_within: bool,
}

/// Verifies `⟨e_k*(l), R0 x⟩ = ε_l·x_m(1)·2^{−mk}·(1+δ(k))` with
/// `|δ(k)| ≤ 2^{−k}·‖x(1)‖₁/|x_m(1)|`, where m is the first non-zero
/// block-1 coordinate past 0. Exact rational arithmetic throughout.
pub fn dominant_term_check(
    ops: &DsumOps,
    x: &BlockVector<Rat>,
    l: usize,
    k_range: std::ops::Range<usize>,
) -> Result<DominantTermReport> {
    let space = &ops.space;
    if x.dim() != space.dim() {
        return Err(Error::Parameter("vector dimension mismatch".into()));
    }
    if l < 1 || l > space.blocks {
        return Err(Error::Parameter(format!("block {l} out of range")));
    }
    if k_range.start < 1 || k_range.end > space.block_len {
        return Err(Error::Parameter("k range must lie in [1, K)".into()));
    }
    let block1 = &x.coords()[0..space.block_len];
    let m = (1..space.block_len)
        .find(|&j| !block1[j].is_zero())
        .ok_or_else(|| Error::Parameter("x(1) vanishes past coordinate 0".into()))?;
    let x_m = block1[m].clone();
    let block1_l1 = block1.iter().fold(<Rat as Scalar>::zero(), |a, c| a + Signed::abs(c));

    let image = ops.r0.apply_slice(x.coords());
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    let mut all_within = true;
    for k in k_range {
        let lhs = image[space.idx(l, k)].clone();
        let scale =
            space.eps[l - 1].clone() * x_m.clone() * <Rat as Scalar>::pow2(-((m * k) as i64));
        let delta = lhs / scale - Rat::one();
        let bound = <Rat as Scalar>::pow2(-(k as i64)) * block1_l1.clone() / Signed::abs(&x_m);
        let within = Signed::abs(&delta) <= bound;
        if !within {
            all_within = false;
        }
        let ratio = if bound.is_zero() {
            0.0
        } else {
            ToPrimitive::to_f64(&(Signed::abs(&delta) / bound.clone())).unwrap_or(f64::NAN)
        };
        max_ratio = max_ratio.max(ratio);
        rows.push((k, ToPrimitive::to_f64(&delta).unwrap_or(f64::NAN), ToPrimitive::to_f64(&bound).unwrap_or(f64::NAN)));
    }
    Ok(DominantTermReport { l, m, rows, max_ratio, all_within })
}

/// The rank-one extension pinned at one vector pair.
#[derive(Clone, Debug)]
pub struct RankOneExtension {
    pub r: SparseColMatrix<Rat>,
    /// Exact rank of `R − R0` (1 unless `v = R0 u`).
    pub diff_rank: usize,
}

/// Builds `R(x) = R0(x) + (x_0(1)/u_0(1))·(v − R0 u)` and verifies
/// `R(u) = v` exactly at build time.
pub fn build_r(
    ops: &DsumOps,
    u: &BlockVector<Rat>,
    v: &BlockVector<Rat>,
) -> Result<RankOneExtension> {
    let space = &ops.space;
    if u.dim() != space.dim() || v.dim() != space.dim() {
        return Err(Error::Parameter("vector dimension mismatch".into()));
    }
    let u0 = u.coords()[space.idx(1, 0)].clone();
    if u0.is_zero() {
        return Err(Error::Parameter("u must have a non-zero leading block-1 coordinate".into()));
    }
    let r0u = ops.r0.apply_slice(u.coords());
    let correction: Vec<Rat> = v
        .coords()
        .iter()
        .zip(&r0u)
        .map(|(vi, ri)| (vi.clone() - ri.clone()) / u0.clone())
        .collect();
    let mut functional = vec![<Rat as Scalar>::zero(); space.dim()];
    functional[space.idx(1, 0)] = Rat::one();
    let mut r = ops.r0.clone();
    r.add_rank_one(&correction, &functional);

    // exact pin: R(u) = v
    let ru = r.apply_slice(u.coords());
    for (i, (got, want)) in ru.iter().zip(v.coords()).enumerate() {
        if got != want {
            return Err(Error::Construction(format!("R(u) differs from v at coordinate {i}")));
        }
    }
    let diff_rank = r.sub(&ops.r0).rank();
    Ok(RankOneExtension { r, diff_rank })
}

/// Exact l1→max-block operator norm data: `‖R0‖ = max_l ε_l · ‖V‖` with
/// `‖V‖` the max column l1 sum. Returns `(‖R0‖, max_l ε_l · ‖V‖)` — equal
/// by construction, both exact.
pub fn r0_norm_split(ops: &DsumOps) -> (Rat, Rat) {
    // operator norm of R0 on the max-block-l1 space: the worst unit input
    // is a block-1 basis vector; its image has block-l l1 mass ε_l·(col sum)
    let kk = ops.space.block_len;
    let mut r0_norm = <Rat as Scalar>::zero();
    for j in 1..kk {
        let col = ops.r0.col(ops.space.idx(1, j));
        let mut per_block = vec![<Rat as Scalar>::zero(); ops.space.blocks];
        for (r, val) in col {
            per_block[r / kk] = per_block[r / kk].clone() + Signed::abs(val);
        }
        for b in per_block {
            if b > r0_norm {
                r0_norm = b;
            }
        }
    }
    let v_norm = ops.v.l1_norm();
    let eps_max = ops.space.eps.iter().cloned().fold(<Rat as Scalar>::zero(), |a, e| if e > a { e } else { a });
    (r0_norm, eps_max * v_norm)
}

/// Smallest-singular-value style invertibility margin for `cI + R` on the
/// truncation: `σ_min ≥ c − ‖R‖₁` with `‖R‖₁` the exact max column sum of
/// the max-block norm... computed here as the l1-induced bound
/// `‖R0‖ + ‖rank-one part‖`. Returns the bound `c − ‖R‖`; positive means
/// invertible.
pub fn extension_invertibility_margin(ops: &DsumOps, ext: &RankOneExtension, c: &Rat) -> Rat {
    let (r0_norm, _) = r0_norm_split(ops);
    let kk = ops.space.block_len;
    // rank-one part: the functional e_0*(1) has norm 1 on the block norm;
    // the vector factor contributes its max block l1 mass
    let diff = ext.r.sub(&ops.r0);
    let col = diff.col(ops.space.idx(1, 0));
    let mut per_block = vec![<Rat as Scalar>::zero(); ops.space.blocks];
    for (r, val) in col {
        per_block[r / kk] = per_block[r / kk].clone() + Signed::abs(val);
    }
    let rank_one_norm =
        per_block.into_iter().fold(<Rat as Scalar>::zero(), |a, b| if b > a { b } else { a });
    c.clone() - r0_norm - rank_one_norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_ops() -> DsumOps {
        build_dsum_ops(&DsumSpace::new(4, 16).unwrap()).unwrap()
    }

    #[test]
    fn diagonal_action() {
        let ops = small_ops();
        // D e_3(2) = 2^{−6} e_3(2)
        let e = ops.space.basis::<Rat>(2, 3);
        let y = ops.d.apply(&e).unwrap();
        assert_eq!(y.coords()[ops.space.idx(2, 3)], <Rat as Scalar>::pow2(-6));
        assert_eq!(y.coords().iter().filter(|c| !c.is_zero()).count(), 1);
    }

    #[test]
    fn kernel_action_single_term() {
        let ops = small_ops();
        // V e_1 = Σ_k 2^{−k} e_k (truncated), zero at k = 0
        let mut y = vec![<Rat as Scalar>::zero(); 16];
        y[1] = Rat::one();
        let img = ops.v.apply_slice(&y);
        assert!(img[0].is_zero());
        for k in 1..16 {
            assert_eq!(img[k], <Rat as Scalar>::pow2(-(k as i64)));
        }
    }

    #[test]
    fn r0_reads_only_block_one() {
        let ops = small_ops();
        let e = ops.space.basis::<Rat>(3, 5);
        assert!(ops.r0.apply(&e).unwrap().is_zero());
        // and writes ε_l V(x(1)) into every block
        let x = ops.space.basis::<Rat>(1, 2);
        let img = ops.r0.apply(&x).unwrap();
        for l in 1..=4usize {
            let val = img.coords()[ops.space.idx(l, 1)].clone();
            assert_eq!(val, ops.space.eps[l - 1].clone() * <Rat as Scalar>::pow2(-2));
        }
    }

    #[test]
    fn intertwining_per_block_and_full() {
        let ops = small_ops();
        for l in 1..=4 {
            assert!(check_intertwining(&ops, l).unwrap(), "block {l}");
        }
        assert!(check_intertwining_full(&ops));
    }

    #[test]
    fn intertwining_negative_control() {
        let mut ops = small_ops();
        let idx = ops.space.idx(2, 3);
        let doubled = ops.d.entry(idx, idx) * Rat::from_i64(2);
        ops.d.set_entry(idx, idx, doubled);
        assert!(!check_intertwining(&ops, 2).unwrap());
        assert!(!check_intertwining_full(&ops));
    }

    #[test]
    fn sparsity_facts() {
        assert!(check_sparsity_pattern(&small_ops()));
    }

    #[test]
    fn dominant_term_single_spike_exact() {
        let ops = small_ops();
        // x(1) = e_m(1): δ(k) = 0 identically
        let x = ops.space.basis::<Rat>(1, 3);
        let r = dominant_term_check(&ops, &x, 2, 1..16).unwrap();
        assert_eq!(r.m, 3);
        assert!(r.all_within);
        assert!(r.rows.iter().all(|(_, d, _)| *d == 0.0));
    }

    #[test]
    fn dominant_term_two_spikes_tight() {
        let ops = small_ops();
        // x(1) = e_1 + e_2: δ(k) = 2^{−k} exactly
        let mut x = ops.space.zero_vector::<Rat>();
        x.coords_mut()[ops.space.idx(1, 1)] = Rat::one();
        x.coords_mut()[ops.space.idx(1, 2)] = Rat::one();
        let r = dominant_term_check(&ops, &x, 3, 1..16).unwrap();
        assert_eq!(r.m, 1);
        assert!(r.all_within);
        for (k, d, _) in &r.rows {
            assert_eq!(*d, (-(*k as f64)).exp2(), "k={k}");
        }
    }

    #[test]
    fn dominant_term_random_rationals() {
        let ops = small_ops();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = rng.gen_range(1..=3usize);
            let mut x = ops.space.zero_vector::<Rat>();
            x.coords_mut()[ops.space.idx(1, 0)] = Rat::from_i64(rng.gen_range(-3i64..=3));
            x.coords_mut()[ops.space.idx(1, m)] =
                Rat::from_ratio(rng.gen_range(1..=9i64) * if rng.gen() { 1 } else { -1 }, rng.gen_range(1..=7i64));
            for j in m + 1..16 {
                x.coords_mut()[ops.space.idx(1, j)] =
                    Rat::from_ratio(rng.gen_range(-5i64..=5), rng.gen_range(1..=9i64));
            }
            let l = rng.gen_range(1..=4usize);
            let r = dominant_term_check(&ops, &x, l, 1..16).unwrap();
            assert!(r.all_within, "violated at l={l}, m={m}");
            assert!(r.max_ratio <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rank_one_extension_pins_target() {
        let ops = small_ops();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut u = ops.space.zero_vector::<Rat>();
            let mut v = ops.space.zero_vector::<Rat>();
            for i in 0..ops.space.dim() {
                u.coords_mut()[i] = Rat::from_ratio(rng.gen_range(-4i64..=4), rng.gen_range(1..=5i64));
                v.coords_mut()[i] = Rat::from_ratio(rng.gen_range(-4i64..=4), rng.gen_range(1..=5i64));
            }
            u.coords_mut()[0] = Rat::from_ratio(rng.gen_range(1..=5i64), 2);
            let ext = build_r(&ops, &u, &v).unwrap();
            assert_eq!(ext.diff_rank, 1);
            // R(x) = R0(x) for x with vanishing leading coordinate
            let mut x = ops.space.basis::<Rat>(1, 4);
            x.coords_mut()[ops.space.idx(2, 2)] = Rat::from_i64(3);
            assert_eq!(ext.r.apply_slice(x.coords()), ops.r0.apply_slice(x.coords()));
        }
    }

    #[test]
    fn rank_one_extension_degenerate() {
        let ops = small_ops();
        let mut u = ops.space.zero_vector::<Rat>();
        u.coords_mut()[0] = Rat::one();
        u.coords_mut()[ops.space.idx(1, 2)] = Rat::from_ratio(1, 3);
        let v = BlockVector::new(ops.r0.apply_slice(u.coords()), ops.space.norm_tag()).unwrap();
        let ext = build_r(&ops, &u, &v).unwrap();
        assert_eq!(ext.diff_rank, 0);
        assert_eq!(ext.r, ops.r0);
    }

    #[test]
    fn rank_one_extension_requires_leading_coordinate() {
        let ops = small_ops();
        let u = ops.space.basis::<Rat>(1, 1);
        let v = ops.space.basis::<Rat>(2, 1);
        assert!(matches!(build_r(&ops, &u, &v), Err(Error::Parameter(_))));
    }

    #[test]
    fn norm_split_identity() {
        let ops = small_ops();
        let (lhs, rhs) = r0_norm_split(&ops);
        assert!(lhs <= rhs);
        // for the default dampening the bound is attained exactly
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn envelope_of_diagonal_images() {
        // for unit y (max-block-l1 ≤ 1), |（Dy)_k(l)| ≤ 2^{−lk}
        let ops = small_ops();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let mut y = ops.space.zero_vector::<Rat>();
            for l in 1..=4usize {
                // random block with l1 norm ≤ 1
                let mut remaining = Rat::one();
                for k in 0..16usize {
                    if rng.gen_bool(0.3) {
                        let part = remaining.clone() / Rat::from_i64(rng.gen_range(2..=4));
                        let signed = if rng.gen() { part.clone() } else { -part.clone() };
                        y.coords_mut()[ops.space.idx(l, k)] = signed;
                        remaining = remaining - part;
                    }
                }
            }
            let img = ops.d.apply(&y).unwrap();
            for l in 1..=4usize {
                for k in 0..16usize {
                    let bound = <Rat as Scalar>::pow2(-((l * k) as i64));
                    assert!(Signed::abs(&img.coords()[ops.space.idx(l, k)]) <= bound);
                }
            }
        }
    }

    #[test]
    fn invertibility_margin_positive_for_large_c() {
        let ops = small_ops();
        let u = ops.space.basis::<Rat>(1, 0);
        let mut v = ops.space.basis::<Rat>(2, 1);
        v.coords_mut()[3] = Rat::from_ratio(1, 2);
        let ext = build_r(&ops, &u, &v).unwrap();
        let margin = extension_invertibility_margin(&ops, &ext, &Rat::from_i64(4));
        assert!(margin > <Rat as Scalar>::zero());
    }
}
