//! Explicit integer-set constructions.
//!
//! * dyadic layers `{2^{k−1}·m : m odd}` — syndetic, pairwise disjoint,
//!   density `2^{−k}`;
//! * geometric interval families `[(1−mult·ε)aᵘ, (1+mult·ε)aᵘ]` with the
//!   three closed-form conditions that make them usable (4ε-intervals
//!   pairwise disjoint, 2ε-differences contained in 4ε-intervals,
//!   ε-intervals absorbing ±v shifts);
//! * disjointification of a family of positive-tail-density sets into
//!   pairwise far-apart subsets, executed verbatim at finite horizon;
//! * the doubly-indexed "bad set" whose counting ratio stays ≥ 1/4 while
//!   each scale-J window repeats one half-sized pattern.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{density_profile, Frac, IndexSet};
use crate::scalar::Rat;
use crate::{Error, Result};

/// `{2^{k−1}·m : m odd} ∩ [1, horizon]`: the k-th dyadic layer. Syndetic
/// with gap `2^k`, counting density `2^{−k}`.
pub fn dyadic_layer(k: u32, horizon: u64) -> IndexSet {
    assert!(k >= 1, "layer index starts at 1");
    if k - 1 >= 63 {
        return IndexSet::empty(horizon);
    }
    let start = 1u64 << (k - 1);
    let step = 1u64 << k;
    let mut out = Vec::new();
    let mut n = start;
    while n <= horizon {
        out.push(n);
        n += step;
    }
    IndexSet::from_members(horizon, out).expect("members within horizon")
}

fn floor_big(x: &Rat) -> BigInt {
    x.floor().to_integer()
}

fn ceil_big(x: &Rat) -> BigInt {
    x.ceil().to_integer()
}

/// Exact integer endpoints `(⌈(1−mult·ε)aᵘ⌉, ⌊(1+mult·ε)aᵘ⌋)` of the u-th
/// interval, before clipping.
pub fn interval_endpoints(base: &Rat, eps: &Rat, mult: u32, u: u32) -> (BigInt, BigInt) {
    let m = Rat::from_integer(BigInt::from(mult));
    let one = Rat::one();
    let au = pow_rat(base, u);
    let lo = ceil_big(&((one.clone() - m.clone() * eps.clone()) * au.clone()));
    let hi = floor_big(&((one + m * eps.clone()) * au));
    (lo, hi)
}

pub(crate) fn pow_rat(base: &Rat, e: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..e {
        acc *= base.clone();
    }
    acc
}

/// A geometric family of integer intervals at one width multiplier.
#[derive(Clone, Debug)]
pub struct IntervalFamily {
    pub base: Rat,
    pub eps: Rat,
    pub mult: u32,
    /// `(u, lo, hi)` for intervals meeting `[0, horizon]`, clipped.
    pub intervals: Vec<(u32, u64, u64)>,
}

impl IntervalFamily {
    pub fn interval(&self, u: u32) -> Option<(u64, u64)> {
        self.intervals.iter().find(|(v, _, _)| *v == u).map(|(_, lo, hi)| (*lo, *hi))
    }

    pub fn pairwise_disjoint(&self) -> bool {
        let mut sorted: Vec<_> = self.intervals.iter().map(|(_, lo, hi)| (*lo, *hi)).collect();
        sorted.sort_unstable();
        sorted.windows(2).all(|w| w[0].1 < w[1].0)
    }
}

fn check_interval_params(base: &Rat, eps: &Rat, mult: u32) -> Result<()> {
    if *base <= Rat::one() {
        return Err(Error::Parameter("base must exceed 1".into()));
    }
    if *eps <= Rat::zero() || *eps >= Rat::new(BigInt::one(), BigInt::from(4)) {
        return Err(Error::Parameter("eps must lie in (0, 1/4)".into()));
    }
    if !matches!(mult, 1 | 2 | 4) {
        return Err(Error::Parameter("mult must be 1, 2 or 4".into()));
    }
    Ok(())
}

/// Builds the interval family for `u = 1..=u_max`, clipped to the horizon;
/// intervals lying entirely above the horizon are omitted.
pub fn geometric_intervals(
    base: &Rat,
    eps: &Rat,
    mult: u32,
    u_max: u32,
    horizon: u64,
) -> Result<IntervalFamily> {
    check_interval_params(base, eps, mult)?;
    let mut intervals = Vec::new();
    for u in 1..=u_max {
        let (lo, hi) = interval_endpoints(base, eps, mult, u);
        if lo > BigInt::from(horizon) {
            break;
        }
        if hi < BigInt::zero() || hi < lo {
            continue;
        }
        let lo_u = lo.max(BigInt::zero()).to_u64().unwrap_or(u64::MAX);
        let hi_u = hi.min(BigInt::from(horizon)).to_u64().unwrap_or(horizon);
        intervals.push((u, lo_u, hi_u));
    }
    Ok(IntervalFamily { base: base.clone(), eps: eps.clone(), mult, intervals })
}

/// Outcome of the three closed-form interval conditions, each evaluated in
/// exact rational arithmetic.
#[derive(Clone, Debug)]
pub struct IntervalConditionReport {
    pub u_max: u32,
    /// `(1+4ε) < (1−4ε)·a` — makes the 4ε-intervals pairwise disjoint.
    /// Vacuous (true) when `u_max < 2`.
    pub separation_ok: bool,
    pub separation_ratio: Rat,
    /// `2εa ≥ 1+2ε` — puts differences of 2ε-intervals inside the
    /// 4ε-interval. Vacuous when `u_max < 2`.
    pub difference_ok: bool,
    pub difference_ratio: Rat,
    /// `ε·aᵛ ≥ v` for all `1 ≤ v ≤ u_max` — lets the ε-interval absorb a
    /// ±v shift inside the 2ε-interval.
    pub shift_ok: bool,
    pub shift_failures: Vec<u32>,
}

impl IntervalConditionReport {
    pub fn all_pass(&self) -> bool {
        self.separation_ok && self.difference_ok && self.shift_ok
    }
}

/// Evaluates the three closed-form inequalities behind the interval
/// conditions. The first two only constrain pairs `u > v ≥ 1`, hence are
/// vacuously true when `u_max < 2`.
pub fn verify_interval_conditions(
    base: &Rat,
    eps: &Rat,
    u_max: u32,
) -> Result<IntervalConditionReport> {
    check_interval_params(base, eps, 1)?;
    let one = Rat::one();
    let four = Rat::from_integer(BigInt::from(4));
    let two = Rat::from_integer(BigInt::from(2));

    let separation_ratio = (one.clone() + four.clone() * eps.clone())
        / ((one.clone() - four * eps.clone()) * base.clone());
    let separation_ok = u_max < 2 || separation_ratio < one;

    let difference_ratio =
        two.clone() * eps.clone() * base.clone() / (one.clone() + two * eps.clone());
    let difference_ok = u_max < 2 || difference_ratio >= one;

    let mut shift_failures = Vec::new();
    for v in 1..=u_max {
        let lhs = eps.clone() * pow_rat(base, v);
        if lhs < Rat::from_integer(BigInt::from(v)) {
            shift_failures.push(v);
        }
    }
    let shift_ok = shift_failures.is_empty();

    Ok(IntervalConditionReport {
        u_max,
        separation_ok,
        separation_ratio,
        difference_ok,
        difference_ratio,
        shift_ok,
        shift_failures,
    })
}

/// The outcome of disjointifying a family: thinning steps, spread-out
/// subsets, and the guarantees they satisfy exactly at the horizon.
#[derive(Clone, Debug)]
pub struct DisjointifyPlan {
    /// Requested minimum thresholds `N_i`.
    pub mins: Vec<u64>,
    /// `M_i = 2·max_{j≤i} N_j`.
    pub m_values: Vec<u64>,
    /// Chosen thinning steps `s(i)` (least feasible, scanned upward).
    pub steps: Vec<u64>,
    /// The outputs `B_i`.
    pub outputs: Vec<IndexSet>,
    /// Exact tail min of each `B_i` at the plan's burn-in.
    pub output_tail_mins: Vec<Frac>,
    pub burn_in: u64,
}

impl DisjointifyPlan {
    /// Checks the four output guarantees against the original family:
    /// subset, min threshold, pairwise disjointness, and the pairwise
    /// separation `|n−m| ≥ N_i + N_j`.
    pub fn verify(&self, originals: &[IndexSet]) -> Result<()> {
        for (i, b) in self.outputs.iter().enumerate() {
            if !b.is_subset_of(&originals[i]) {
                return Err(Error::Construction(format!("output {i} not a subset of its source")));
            }
            if let Some(min) = b.min() {
                if min < self.mins[i] {
                    return Err(Error::Construction(format!(
                        "output {i} has min {min} below threshold {}",
                        self.mins[i]
                    )));
                }
            }
        }
        let members: Vec<Vec<u64>> = self.outputs.iter().map(|b| b.members()).collect();
        for i in 0..members.len() {
            for j in i..members.len() {
                if i != j && !self.outputs[i].is_disjoint_from(&self.outputs[j]) {
                    return Err(Error::Construction(format!("outputs {i} and {j} intersect")));
                }
                let bound = self.mins[i] + self.mins[j];
                for &n in &members[i] {
                    for &m in &members[j] {
                        if n != m && n.abs_diff(m) < bound {
                            return Err(Error::Construction(format!(
                                "separation violated: |{n}−{m}| < {bound} for outputs {i},{j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Exact tail-max of `thin + [−radius, radius]` over `N ∈ [burn_in, H]`
/// without materializing the dilation: the ratio can only peak at merged
/// interval right ends (or at burn-in itself).
fn dilated_tail_max(members: &[u64], radius: u64, horizon: u64, burn_in: u64) -> Frac {
    let mut merged: Vec<(u64, u64)> = Vec::new();
    for &m in members {
        let lo = m.saturating_sub(radius);
        let hi = (m + radius).min(horizon);
        match merged.last_mut() {
            Some((_, end)) if lo <= *end + 1 => *end = (*end).max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let count_at = |n: u64| -> u64 {
        let mut c = 0;
        for &(lo, hi) in &merged {
            if lo > n {
                break;
            }
            c += hi.min(n) - lo + 1;
        }
        c
    };
    let lt =
        |a: Frac, b: Frac| (a.num as u128) * (b.den as u128) < (b.num as u128) * (a.den as u128);
    let mut best = Frac { num: count_at(burn_in), den: burn_in + 1 };
    for &(_, hi) in &merged {
        if hi >= burn_in {
            let f = Frac { num: count_at(hi), den: hi + 1 };
            if lt(best, f) {
                best = f;
            }
        }
    }
    best
}

/// Thins each set to every `s(i)`-th member and removes neighborhoods of
/// the later sets, producing pairwise far-apart subsets `B_i ⊆ A_i` with
/// `min(B_i) ≥ N_i` and `|n−m| ≥ N_i+N_j` across outputs. `s(i)` is the
/// least integer `≥ M_i` for which the ±M_i dilation of the thinned set
/// has tail-max at most `min_{j<i} 4^{−(i−j)}·tail_min(A_{j,s(j)})`.
///
/// Fails with a diagnostic naming the set and the binding constraint when
/// the feasible step leaves no usable tail (the finite horizon is too
/// small for the requested family).
pub fn disjointify(sets: &[IndexSet], mins: &[u64], burn_in: u64) -> Result<DisjointifyPlan> {
    if sets.is_empty() || sets.len() != mins.len() {
        return Err(Error::Parameter("need one positive threshold per set".into()));
    }
    let horizon = sets[0].horizon();
    if sets.iter().any(|s| s.horizon() != horizon) {
        return Err(Error::Parameter("sets must share a horizon".into()));
    }
    if mins.iter().any(|&n| n == 0) {
        return Err(Error::Parameter("thresholds must be positive".into()));
    }
    if burn_in > horizon {
        return Err(Error::Parameter("burn_in exceeds horizon".into()));
    }
    for (i, s) in sets.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Precondition(format!("set {i} is empty")));
        }
        let p = density_profile(s, burn_in)?;
        if p.tail_min().num == 0 {
            return Err(Error::Precondition(format!(
                "set {i} has zero tail density at burn-in {burn_in}"
            )));
        }
    }

    let k = sets.len();
    let members: Vec<Vec<u64>> = sets.iter().map(|s| s.members()).collect();
    let mut m_values = Vec::with_capacity(k);
    let mut running_max = 0u64;
    for &n in mins {
        running_max = running_max.max(n);
        m_values.push(2 * running_max);
    }

    // every s-th member, 1-based: positions s, 2s, 3s, ...
    let thin = |i: usize, s: u64| -> Vec<u64> {
        members[i].iter().copied().skip(s as usize - 1).step_by(s as usize).collect()
    };

    let mut steps = Vec::with_capacity(k);
    let mut thinned: Vec<Vec<u64>> = Vec::with_capacity(k);
    let mut thinned_tail_mins: Vec<Frac> = Vec::with_capacity(k);

    let frac_le =
        |a: Frac, b_num: u128, b_den: u128| (a.num as u128) * b_den <= b_num * (a.den as u128);

    for i in 0..k {
        // bounds from earlier sets: tail_min(A_{j,s(j)}) / 4^{i−j}
        let bounds: Vec<(usize, u128, u128)> = (0..i)
            .map(|j| {
                let f = thinned_tail_mins[j];
                (j, f.num as u128, (f.den as u128) << (2 * (i - j) as u32))
            })
            .collect();
        let mut chosen = None;
        let mut s = m_values[i];
        while s <= horizon {
            let t = thin(i, s);
            let tm = dilated_tail_max(&t, m_values[i], horizon, burn_in);
            if bounds.iter().all(|&(_, bn, bd)| frac_le(tm, bn, bd)) {
                chosen = Some((s, t));
                break;
            }
            s += 1;
        }
        let (s, t) = chosen.ok_or_else(|| {
            Error::Construction(format!(
                "no feasible thinning step for set {i} up to the horizon"
            ))
        })?;
        let ts = IndexSet::from_members(horizon, t.iter().copied())?;
        let tp = density_profile(&ts, burn_in)?;
        if tp.tail_min().num == 0 {
            let binding = bounds.iter().min_by(|a, b| (a.1 * b.2).cmp(&(b.1 * a.2))).map(|&(j, _, _)| j);
            return Err(Error::Construction(format!(
                "set {i}: feasible step {s} leaves an empty tail at burn-in {burn_in}{} — \
                 horizon too small for this family",
                binding.map(|j| format!(" (binding constraint from set {j})")).unwrap_or_default()
            )));
        }
        steps.push(s);
        thinned.push(t);
        thinned_tail_mins.push(tp.tail_min());
    }

    // B_i = thinned_i minus the dilated later thinnings
    let dilated: Vec<IndexSet> = (0..k)
        .map(|j| {
            IndexSet::from_members(horizon, thinned[j].iter().copied())
                .map(|s| s.dilate(m_values[j]))
        })
        .collect::<Result<_>>()?;
    let mut outputs = Vec::with_capacity(k);
    let mut output_tail_mins = Vec::with_capacity(k);
    for i in 0..k {
        let mut b = IndexSet::from_members(horizon, thinned[i].iter().copied())?;
        for d in dilated.iter().skip(i + 1) {
            b = b.difference(d);
        }
        let p = density_profile(&b, burn_in)?;
        output_tail_mins.push(p.tail_min());
        outputs.push(b);
    }

    let plan = DisjointifyPlan {
        mins: mins.to_vec(),
        m_values,
        steps,
        outputs,
        output_tail_mins,
        burn_in,
    };
    plan.verify(sets)?;
    Ok(plan)
}

/// The two families of density-positive target sets for the shift pair:
/// multiples of `b_p` inside the ε-intervals indexed by the even layers
/// (`E_p`) and by the odd layers (`F_p`).
#[derive(Clone, Debug)]
pub struct EfSets {
    pub e_sets: Vec<IndexSet>,
    pub f_sets: Vec<IndexSet>,
    pub warnings: Vec<String>,
}

pub fn build_ef_sets(
    base: &Rat,
    eps: &Rat,
    b_seq: &[u64],
    p_max: u32,
    horizon: u64,
) -> Result<EfSets> {
    let report = verify_interval_conditions(base, eps, 2)?;
    if !report.all_pass() {
        return Err(Error::Precondition("interval conditions fail for these parameters".into()));
    }
    if b_seq.len() < p_max as usize {
        return Err(Error::Parameter(format!("need b_1..b_{p_max}")));
    }
    if b_seq.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("b must be strictly increasing".into()));
    }
    let mut warnings = Vec::new();
    let build = |layer_of_p: fn(u32) -> u32, warnings: &mut Vec<String>| -> Result<Vec<IndexSet>> {
        let mut out = Vec::new();
        for p in 1..=p_max {
            let b_p = b_seq[p as usize - 1];
            if b_p > horizon {
                warnings.push(format!("b_{p} = {b_p} exceeds the horizon; set {p} is empty"));
                out.push(IndexSet::empty(horizon));
                continue;
            }
            let mut mem = Vec::new();
            let mut u = 1u64 << (layer_of_p(p) - 1);
            let step = 1u64 << layer_of_p(p);
            loop {
                if u > u32::MAX as u64 {
                    break;
                }
                let (lo, hi) = interval_endpoints(base, eps, 1, u as u32);
                if lo > BigInt::from(horizon) {
                    break;
                }
                let lo_u = lo.max(BigInt::zero()).to_u64().unwrap_or(u64::MAX);
                let hi_u = hi.min(BigInt::from(horizon)).to_u64().unwrap_or(horizon);
                // positive multiples of b_p in [lo_u, hi_u]
                let first = lo_u.div_ceil(b_p).max(1) * b_p;
                let mut n = first;
                while n <= hi_u {
                    mem.push(n);
                    n += b_p;
                }
                u += step;
            }
            if mem.is_empty() {
                warnings.push(format!("target set {p} is empty at horizon {horizon}"));
            }
            out.push(IndexSet::from_members(horizon, mem)?);
        }
        Ok(out)
    };
    let e_sets = build(|p| 2 * p, &mut warnings)?;
    let f_sets = build(|p| 2 * p + 1, &mut warnings)?;
    Ok(EfSets { e_sets, f_sets, warnings })
}

/// Parameters of the doubly-indexed bad set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BadSetParams {
    /// Window lengths `J_1 < J_2 < …`.
    #[serde(rename = "J")]
    pub window_lengths: Vec<u64>,
    pub mode: BadSetMode,
    pub horizon: u64,
    /// Refusal threshold for full enumeration (default 10^6 subsets).
    #[serde(default = "default_full_cap")]
    pub full_cap: u64,
}

fn default_full_cap() -> u64 {
    1_000_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BadSetMode {
    Full,
    Sampled { count: u64, seed: u64 },
}

/// One scale of the bad set, kept for invariant rechecks.
#[derive(Clone, Debug)]
pub struct BadSetBlock {
    pub k: u32,
    pub window: u64,
    /// Number of patterns in force at this scale.
    pub family_count: u64,
    /// Start of this scale's range (`M_{k−1}`, 0 for k = 1).
    pub start: u128,
    /// End of this scale's range (`M_k = (k+1)^{C_k}·J_k`), saturating.
    pub end: u128,
    /// The patterns `F_{k,j} ⊆ [0, J_k)`, each of size ≥ J_k/2, in
    /// canonical order (ascending characteristic integer; bit i = element i).
    pub families: Vec<Vec<u64>>,
}

#[derive(Clone, Debug)]
pub struct BadSet {
    pub set: IndexSet,
    pub blocks: Vec<BadSetBlock>,
}

/// All subsets of `[0, len)` with at least `len/2` elements, ordered by
/// their characteristic integers (lowest index = least significant bit).
fn enumerate_half_subsets(len: u64, cap: u64) -> Result<Vec<Vec<u64>>> {
    if len >= 63 {
        return Err(Error::Refused(format!(
            "full enumeration over windows of length {len} is far past the cap; use sampled mode"
        )));
    }
    let mut out = Vec::new();
    for mask in 1u64..(1 << len) {
        if 2 * mask.count_ones() as u64 >= len {
            out.push((0..len).filter(|i| mask >> i & 1 == 1).collect());
            if out.len() as u64 > cap {
                return Err(Error::Refused(format!(
                    "full enumeration exceeds the cap of {cap} subsets; use sampled mode"
                )));
            }
        }
    }
    Ok(out)
}

/// Seeded uniform sample of `count` distinct subsets of `[0, len)` with at
/// least `len/2` elements (rejection from uniform masks).
fn sample_half_subsets(len: u64, count: u64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<u64>>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    let mut attempts = 0u64;
    while (out.len() as u64) < count {
        attempts += 1;
        if attempts > 10_000 * count.max(1) {
            return Err(Error::Parameter(format!(
                "cannot draw {count} distinct half-subsets of a window of length {len}"
            )));
        }
        let members: Vec<u64> = (0..len).filter(|_| rng.gen::<bool>()).collect();
        if 2 * members.len() as u64 >= len && seen.insert(members.clone()) {
            out.push(members);
        }
    }
    Ok(out)
}

fn pow_u128_saturating(base: u128, exp: u64, cap: u128) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
        if acc >= cap {
            return cap;
        }
    }
    acc
}

/// Builds the bad set: scale-1 block `[0, J_1)` plus pattern-repeated
/// windows, then scale-k blocks `[M_{k−1}, J_k)` plus windows, clipped to
/// the horizon. Requires `J_k ≥ 2·M_{k−1}` for `k ≥ 2`.
pub fn build_bad_set(params: &BadSetParams) -> Result<BadSet> {
    let js = &params.window_lengths;
    if js.is_empty() {
        return Err(Error::Parameter("need at least one window length".into()));
    }
    if js.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("window lengths must be strictly increasing".into()));
    }
    if js[0] < 1 {
        return Err(Error::Parameter("window lengths must be positive".into()));
    }
    let horizon = params.horizon;
    let mut raw: Vec<u64> = Vec::new();
    let mut blocks = Vec::new();
    let cap: u128 = u128::MAX / (1 << 32);

    let mut rng = match &params.mode {
        BadSetMode::Sampled { seed, .. } => ChaCha8Rng::seed_from_u64(*seed),
        BadSetMode::Full => ChaCha8Rng::seed_from_u64(0),
    };

    let mut m_prev: u128 = 0;
    for (idx, &j_len) in js.iter().enumerate() {
        let k = idx as u32 + 1;
        if idx > 0 && (j_len as u128) < 2 * m_prev {
            return Err(Error::Parameter(format!(
                "window {k}: J_{k} = {j_len} must be at least twice the previous scale end {m_prev}"
            )));
        }
        let families = match &params.mode {
            BadSetMode::Full => enumerate_half_subsets(j_len, params.full_cap)?,
            BadSetMode::Sampled { count, .. } => sample_half_subsets(j_len, *count, &mut rng)?,
        };
        let c_count = families.len() as u64;
        let base = k as u128 + 1;
        let m_k = pow_u128_saturating(base, c_count, cap).saturating_mul(j_len as u128).min(cap);

        // leading interval [m_prev, J_k) (which is [0, J_1) at scale 1)
        if m_prev <= horizon as u128 {
            let lead_end = (j_len as u128).min(horizon as u128 + 1);
            let mut n = m_prev;
            while n < lead_end {
                raw.push(n as u64);
                n += 1;
            }
        }
        // pattern windows: window index s ∈ [(k+1)^j, (k+1)^{j+1}) uses pattern j
        'outer: for (jj, fam) in families.iter().enumerate() {
            let s_lo = pow_u128_saturating(base, jj as u64, cap);
            let s_hi = pow_u128_saturating(base, jj as u64 + 1, cap);
            let mut s = s_lo;
            while s < s_hi {
                let window_start = s.saturating_mul(j_len as u128);
                if window_start > horizon as u128 {
                    break 'outer;
                }
                for &f in fam {
                    let n = window_start + f as u128;
                    if n <= horizon as u128 {
                        raw.push(n as u64);
                    }
                }
                s += 1;
            }
        }
        blocks.push(BadSetBlock {
            k,
            window: j_len,
            family_count: c_count,
            start: m_prev,
            end: m_k,
            families,
        });
        m_prev = m_k;
        if m_prev > horizon as u128 {
            break;
        }
    }
    let set = IndexSet::from_members(horizon, raw)?;
    Ok(BadSet { set, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::syndetic_gap;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn dyadic_layers_small() {
        assert_eq!(dyadic_layer(1, 10).members(), vec![1, 3, 5, 7, 9]);
        assert_eq!(dyadic_layer(2, 20).members(), vec![2, 6, 10, 14, 18]);
    }

    #[test]
    fn dyadic_layer_density_and_gap() {
        let layer = dyadic_layer(3, 100_000);
        // brute-force membership oracle
        for n in 0..=1000u64 {
            assert_eq!(layer.contains(n), n % 4 == 0 && n % 8 != 0, "n={n}");
        }
        let p = density_profile(&layer, 1000).unwrap();
        assert!((p.tail_min_f64() - 0.125).abs() < 1e-3);
        assert_eq!(syndetic_gap(&layer).unwrap().max_gap, 8);
    }

    #[test]
    fn interval_examples() {
        let a = rat(8, 1);
        let e = rat(1, 8);
        let fam = geometric_intervals(&a, &e, 1, 3, 1_000_000).unwrap();
        assert_eq!(fam.interval(1), Some((7, 9)));
        assert_eq!(fam.interval(2), Some((56, 72)));
        let wide = geometric_intervals(&a, &e, 4, 2, 1_000_000).unwrap();
        assert_eq!(wide.interval(1), Some((4, 12)));
        assert_eq!(wide.interval(2), Some((32, 96)));
        assert!(wide.pairwise_disjoint());
    }

    #[test]
    fn interval_conditions_reference_values() {
        let report = verify_interval_conditions(&rat(8, 1), &rat(1, 8), 20).unwrap();
        // (1+4ε)/((1−4ε)a) = (3/2)/4 = 3/8, 2εa/(1+2ε) = 8/5, ε·8^v ≥ v up to 20
        assert_eq!(report.separation_ratio, rat(3, 8));
        assert_eq!(report.difference_ratio, rat(8, 5));
        assert!(report.all_pass());

        let bad = verify_interval_conditions(&rat(2, 1), &rat(1, 8), 20).unwrap();
        assert_eq!(bad.separation_ratio, rat(3, 2));
        assert!(!bad.separation_ok);
        assert!(!bad.all_pass());

        // u_max = 1: pairwise parts vacuous, shift condition (1/8)·8 = 1 ≥ 1
        let single = verify_interval_conditions(&rat(8, 1), &rat(1, 8), 1).unwrap();
        assert!(single.all_pass());

        assert!(verify_interval_conditions(&rat(8, 1), &rat(1, 4), 5).is_err());
    }

    #[test]
    fn disjointify_two_sets() {
        let horizon = 100_000;
        let a1 = IndexSet::from_pred(horizon, |n| n >= 1);
        let a2 = IndexSet::from_pred(horizon, |n| n % 2 == 0);
        let plan = disjointify(&[a1.clone(), a2.clone()], &[2, 2], 1000).unwrap();
        plan.verify(&[a1, a2]).unwrap();
        assert!(plan.output_tail_mins.iter().all(|f| f.num > 0));
    }

    #[test]
    fn disjointify_single_set_gaps() {
        let horizon = 10_000;
        let a1 = IndexSet::from_pred(horizon, |n| n >= 1);
        let plan = disjointify(&[a1], &[5], 100).unwrap();
        assert_eq!(plan.steps[0], 10);
        let b = &plan.outputs[0];
        assert!(b.min().unwrap() >= 5);
        let members = b.members();
        assert!(members.windows(2).all(|w| w[1] - w[0] >= 10));
    }

    #[test]
    fn disjointify_rejects_zero_tail() {
        let horizon = 10_000;
        // all members past the burn-in: the counting ratio is 0 there
        let late = IndexSet::from_members(horizon, [5000, 5001, 5002]).unwrap();
        let err = disjointify(&[late], &[2], 1000).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));

        // positive tail density but too few members to thin: diagnostic
        let thin = IndexSet::from_members(horizon, [1, 2, 3]).unwrap();
        let err = disjointify(&[thin], &[2], 1000).unwrap_err();
        assert!(matches!(err, Error::Construction(_)), "{err}");
    }

    #[test]
    fn ef_sets_small_horizon() {
        let a = rat(8, 1);
        let e = rat(1, 8);
        let ef = build_ef_sets(&a, &e, &[12, 80, 448], 3, 10_000).unwrap();
        // only the u = 2 interval [56,72] fits: multiples of 12 are 60, 72
        assert_eq!(ef.e_sets[0].members(), vec![60, 72]);
        // E_p and F_q never meet (even vs odd layers, disjoint intervals)
        for ep in &ef.e_sets {
            for fq in &ef.f_sets {
                assert!(ep.is_disjoint_from(fq));
            }
        }
    }

    #[test]
    fn ef_sets_warn_when_step_exceeds_horizon() {
        let a = rat(8, 1);
        let e = rat(1, 8);
        let ef = build_ef_sets(&a, &e, &[12, 80, 20_000], 3, 10_000).unwrap();
        assert!(ef.e_sets[2].is_empty());
        assert!(ef.warnings.iter().any(|w| w.contains("b_3")));
    }

    #[test]
    fn bad_set_scale1_full() {
        // J₁ = 4: the 11 half-subsets of {0,1,2,3}, horizon M₁ = 2^11·4
        let params = BadSetParams {
            window_lengths: vec![4],
            mode: BadSetMode::Full,
            horizon: 8191,
            full_cap: default_full_cap(),
        };
        let bs = build_bad_set(&params).unwrap();
        assert_eq!(bs.blocks[0].family_count, 11);
        assert_eq!(bs.blocks[0].end, 8192);
        let p = density_profile(&bs.set, 0).unwrap();
        for n in 0..=8191u64 {
            assert!(4 * p.count(n) >= n + 1, "ratio below 1/4 at N={n}");
        }
        // window identity: A ∩ [sJ,(s+1)J) = sJ + F_j for s ∈ [2^j, 2^{j+1})
        for (j, fam) in bs.blocks[0].families.iter().enumerate() {
            for s in (1u64 << j)..(1u64 << (j + 1)) {
                let window: Vec<u64> =
                    (s * 4..(s + 1) * 4).filter(|&n| bs.set.contains(n)).collect();
                let expect: Vec<u64> = fam.iter().map(|f| s * 4 + f).collect();
                assert_eq!(window, expect, "s={s}");
            }
        }
    }

    #[test]
    fn bad_set_minimal_window() {
        // J₁ = 2: exactly {0}, {1}, {0,1} in canonical order
        let params = BadSetParams {
            window_lengths: vec![2],
            mode: BadSetMode::Full,
            horizon: 15,
            full_cap: default_full_cap(),
        };
        let bs = build_bad_set(&params).unwrap();
        assert_eq!(bs.blocks[0].families, vec![vec![0], vec![1], vec![0, 1]]);
        let p = density_profile(&bs.set, 0).unwrap();
        for n in 0..=15u64 {
            assert!(4 * p.count(n) >= n + 1, "ratio below 1/4 at N={n}");
        }
    }

    #[test]
    fn bad_set_sampled_two_scales() {
        let params = BadSetParams {
            window_lengths: vec![4, 200],
            mode: BadSetMode::Sampled { count: 3, seed: 7 },
            horizon: 30_000,
            full_cap: default_full_cap(),
        };
        let bs = build_bad_set(&params).unwrap();
        let again = build_bad_set(&params).unwrap();
        assert_eq!(bs.set, again.set, "seeded build must be deterministic");
        // scale containment: members at or past a block's start stay below its end
        let b2 = &bs.blocks[1];
        assert!(b2.start <= b2.end);
        let scale2: Vec<u64> = bs.set.iter().filter(|&n| (n as u128) >= b2.start).collect();
        assert!(scale2.iter().all(|&n| (n as u128) < b2.end));
        assert!(!scale2.is_empty());
    }

    #[test]
    fn bad_set_full_mode_cap_refusal() {
        let params = BadSetParams {
            window_lengths: vec![24],
            mode: BadSetMode::Full,
            horizon: 1000,
            full_cap: default_full_cap(),
        };
        assert!(matches!(build_bad_set(&params), Err(Error::Refused(_))));
    }
}
