//! Weighted backward shifts on truncated c0, built from "tent" profiles.
//!
//! A tent prescribes the cumulative weight product in log2 units: height
//! `h` on a plateau `S`, falling off at slope 1 with distance, vanishing
//! outside a window `J ⊇ S`. The cumulative of the built system is the
//! pointwise max of the tents, so every weight lands in `{1/2, 1, 2}`
//! (a max of 1-Lipschitz profiles is 1-Lipschitz).
//!
//! From three tent families (interval plateaus over the even or odd dyadic
//! layers, arithmetic-progression plateaus, and difference-set plateaus)
//! this module assembles the counterexample shift pair, checks the
//! frequent-hypercyclicity criterion for shifts — cumulative growth along
//! each target set plus the pairwise separation lower bound — verifies the
//! window inclusion for the joint high-cumulative sets G_p, and scans the
//! density defect of `C_M = {n : W(n) > M}`.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{density_profile, DensityProfile, Frac, IndexSet};
use crate::operator::BackwardShift;
use crate::scalar::{Rat, Scalar};
use crate::sets::{build_ef_sets, interval_endpoints, verify_interval_conditions};
use crate::vector::BlockVector;
use crate::{Error, Result};

/// A positive weight sequence `w_1..w_H` with cached cumulative products
/// `W(n) = w_1⋯w_n`, `W(0) = 1`. Tent-built systems store the cumulative
/// exponents exactly; general systems store floating-point cumulatives.
#[derive(Clone, Debug)]
pub struct WeightSystem {
    repr: Repr,
}

#[derive(Clone, Debug)]
enum Repr {
    /// `W(n) = 2^{log2_cum[n]}`, `log2_cum[0] = 0`.
    Log2(Vec<i64>),
    /// Cumulative products as floats, `cum[0] = 1`.
    Plain(Vec<f64>),
}

impl WeightSystem {
    /// From explicit weights `w_1..w_H` (floats).
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Parameter("weights must be positive and finite".into()));
        }
        let mut cum = Vec::with_capacity(weights.len() + 1);
        cum.push(1.0);
        for (i, w) in weights.iter().enumerate() {
            cum.push(cum[i] * w);
        }
        Ok(WeightSystem { repr: Repr::Plain(cum) })
    }

    pub fn constant(w: f64, len: u64) -> Result<Self> {
        Self::from_weights(&vec![w; len as usize])
    }

    /// From exact cumulative exponents (`log2_cum[n] = log2 W(n)`).
    /// Validation is deferred to [`WeightSystem::validate_tent_invariants`].
    pub fn from_log2_cum(log2_cum: Vec<i64>) -> Self {
        assert!(!log2_cum.is_empty());
        WeightSystem { repr: Repr::Log2(log2_cum) }
    }

    /// Largest weight index `H`.
    pub fn horizon(&self) -> u64 {
        match &self.repr {
            Repr::Log2(c) => c.len() as u64 - 1,
            Repr::Plain(c) => c.len() as u64 - 1,
        }
    }

    /// `log2 W(n)` when stored exactly.
    pub fn cum_log2(&self, n: u64) -> Option<i64> {
        match &self.repr {
            Repr::Log2(c) => Some(c[n as usize]),
            Repr::Plain(_) => None,
        }
    }

    pub fn cum_f64(&self, n: u64) -> f64 {
        match &self.repr {
            Repr::Log2(c) => (c[n as usize] as f64).exp2(),
            Repr::Plain(c) => c[n as usize],
        }
    }

    /// log2 of the cumulative — exact integer (as float) for tent systems.
    pub fn cum_log2_f64(&self, n: u64) -> f64 {
        match &self.repr {
            Repr::Log2(c) => c[n as usize] as f64,
            Repr::Plain(c) => c[n as usize].log2(),
        }
    }

    pub fn weight_f64(&self, n: u64) -> f64 {
        assert!(n >= 1);
        match &self.repr {
            Repr::Log2(c) => ((c[n as usize] - c[n as usize - 1]) as f64).exp2(),
            Repr::Plain(c) => c[n as usize] / c[n as usize - 1],
        }
    }

    pub fn weight_as<S: Scalar>(&self, n: u64) -> S {
        match &self.repr {
            Repr::Log2(c) => S::pow2(c[n as usize] - c[n as usize - 1]),
            Repr::Plain(_) => S::from_f64(self.weight_f64(n)),
        }
    }

    /// Minimum weight over `n ∈ [1, H]`.
    pub fn min_weight(&self) -> f64 {
        (1..=self.horizon()).map(|n| self.weight_f64(n)).fold(f64::INFINITY, f64::min)
    }

    /// Tent-system invariants: exact exponents, `W(0) = 1`, non-negative,
    /// and 1-Lipschitz in log2 (so every weight is in {1/2, 1, 2}).
    pub fn validate_tent_invariants(&self) -> Result<()> {
        let c = match &self.repr {
            Repr::Log2(c) => c,
            Repr::Plain(_) => {
                return Err(Error::Precondition(
                    "weight system does not carry exact cumulative exponents".into(),
                ))
            }
        };
        if c[0] != 0 {
            return Err(Error::Precondition("cumulative at 0 must be 1".into()));
        }
        for (n, w) in c.windows(2).enumerate() {
            if w[1] < 0 {
                return Err(Error::Precondition(format!("cumulative below 1 at n={}", n + 1)));
            }
            if (w[1] - w[0]).abs() > 1 {
                return Err(Error::Precondition(format!(
                    "weight outside {{1/2,1,2}} at n={}",
                    n + 1
                )));
            }
        }
        Ok(())
    }

    /// The shift operator `B_w` on `dim ≤ H+1` coordinates.
    pub fn shift_op<S: Scalar>(&self, dim: usize) -> Result<BackwardShift<S>> {
        if dim == 0 || dim as u64 > self.horizon() + 1 {
            return Err(Error::Parameter(format!(
                "shift dimension {dim} out of range for horizon {}",
                self.horizon()
            )));
        }
        Ok(BackwardShift::new((1..dim as u64).map(|n| self.weight_as(n)).collect()))
    }

    /// CSV export with columns `n,w_n,log2W_n`.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "n,w_n,log2W_n")?;
        for n in 1..=self.horizon() {
            match &self.repr {
                Repr::Log2(c) => writeln!(w, "{n},{},{}", self.weight_f64(n), c[n as usize])?,
                Repr::Plain(c) => {
                    writeln!(w, "{n},{},{}", self.weight_f64(n), c[n as usize].log2())?
                }
            }
        }
        Ok(())
    }
}

/// One tent: cumulative exponent `h` on the plateau, slope-1 falloff,
/// support inside the window.
#[derive(Clone, Debug)]
pub struct TentSpec {
    pub plateau: IndexSet,
    pub height: u64,
    pub window: IndexSet,
    /// For diagnostics only.
    pub label: String,
}

impl TentSpec {
    pub fn new(plateau: IndexSet, height: u64, window: IndexSet, label: impl Into<String>) -> Self {
        TentSpec { plateau, height, window, label: label.into() }
    }
}

/// Distance to the nearest plateau member for every `n ∈ [0, horizon]`
/// (`u64::MAX` when the plateau is empty).
fn distances_to(set: &IndexSet, horizon: u64) -> Vec<u64> {
    let len = horizon as usize + 1;
    let mut d = vec![u64::MAX; len];
    let mut last: Option<u64> = None;
    for n in 0..=horizon {
        if set.contains(n) {
            last = Some(n);
        }
        if let Some(m) = last {
            d[n as usize] = n - m;
        }
    }
    let mut next: Option<u64> = None;
    for n in (0..=horizon).rev() {
        if set.contains(n) {
            next = Some(n);
        }
        if let Some(m) = next {
            d[n as usize] = d[n as usize].min(m - n);
        }
    }
    d
}

/// Builds the weight system whose cumulative exponent is
/// `max(0, max_t (h_t − d(n, S_t)))`. Each tent must be feasible: its
/// profile has to vanish outside its window, and the window must contain
/// the plateau. Tents with empty plateaus contribute nothing.
pub fn plateau_weights(tents: &[TentSpec], horizon: u64) -> Result<WeightSystem> {
    let mut log2 = vec![0i64; horizon as usize + 1];
    for (idx, tent) in tents.iter().enumerate() {
        if tent.plateau.is_empty() {
            continue;
        }
        if !tent.plateau.is_subset_of(&tent.window) {
            return Err(Error::Construction(format!(
                "tent {idx} ({}): plateau not contained in window",
                tent.label
            )));
        }
        let d = distances_to(&tent.plateau, horizon);
        for n in 0..=horizon as usize {
            let value = if d[n] >= tent.height { 0 } else { (tent.height - d[n]) as i64 };
            if value > 0 && !tent.window.contains(n as u64) {
                return Err(Error::Construction(format!(
                    "tent {idx} ({}) is infeasible at n={n}: value {value} outside its window",
                    tent.label
                )));
            }
            log2[n] = log2[n].max(value);
        }
    }
    if log2[0] != 0 {
        return Err(Error::Construction("a tent reaches position 0".into()));
    }
    let sys = WeightSystem::from_log2_cum(log2);
    sys.validate_tent_invariants()?;
    Ok(sys)
}

/// Rule for the sparse step sequence `b_q`.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `b_q = 4^q (2q+1)`: the window union `⋃_{q≥p} (b_qN + [−q,q])` then
    /// has upper density at most `Σ_{q≥p} 4^{−q}`.
    #[default]
    Pow4Linear,
    Explicit(Vec<u64>),
}

impl StepRule {
    pub fn steps(&self, p_max: u32) -> Result<Vec<u64>> {
        match self {
            StepRule::Pow4Linear => {
                Ok((1..=p_max as u64).map(|q| 4u64.pow(q as u32) * (2 * q + 1)).collect())
            }
            StepRule::Explicit(v) => {
                if v.len() < p_max as usize {
                    return Err(Error::Parameter(format!("need b_1..b_{p_max}")));
                }
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Parameter("b must be strictly increasing".into()));
                }
                Ok(v[..p_max as usize].to_vec())
            }
        }
    }
}

/// Parameters of the counterexample shift pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShiftPairParams {
    pub a: f64,
    pub eps: f64,
    #[serde(default)]
    pub b_rule: StepRule,
    pub p_max: u32,
    #[serde(rename = "H")]
    pub horizon: u64,
}

/// The built pair: two tent weight systems plus their target sets.
#[derive(Clone, Debug)]
pub struct ShiftCounterexample {
    pub params: ShiftPairParams,
    pub base: Rat,
    pub eps: Rat,
    pub b_seq: Vec<u64>,
    pub w: WeightSystem,
    pub w_prime: WeightSystem,
    pub tents_w: Vec<TentSpec>,
    pub tents_w_prime: Vec<TentSpec>,
    /// Target sets over the even layers (for `w`).
    pub e_sets: Vec<IndexSet>,
    /// Target sets over the odd layers (for `w_prime`).
    pub f_sets: Vec<IndexSet>,
    pub warnings: Vec<String>,
}

fn clip_endpoints(lo: &BigInt, hi: &BigInt, horizon: u64) -> Option<(u64, u64)> {
    if *lo > BigInt::from(horizon) || hi < lo || *hi < BigInt::zero() {
        return None;
    }
    let lo_u = lo.max(&BigInt::zero()).to_u64()?;
    let hi_u = hi.min(&BigInt::from(horizon)).to_u64().unwrap_or(horizon);
    Some((lo_u, hi_u))
}

/// Tent families for one parity (even layers for `w`, odd for `w'`):
/// interval tents of height `u`, step tents of height `p`, and
/// difference-set tents of height `max(p, q)`.
fn parity_tents(
    base: &Rat,
    eps: &Rat,
    b_seq: &[u64],
    p_max: u32,
    horizon: u64,
    odd: bool,
) -> Vec<TentSpec> {
    let mut tents = Vec::new();
    let big_h = BigInt::from(horizon);

    // layer members (u, p); iterate one past visibility because a
    // difference-set plateau can reach below the horizon even when the
    // interval itself does not
    let mut layer_members: Vec<(u64, u32)> = Vec::new();
    for p in 1..=p_max {
        let k = if odd { 2 * p + 1 } else { 2 * p };
        if k >= 63 {
            continue;
        }
        let mut u = 1u64 << (k - 1);
        let step = 1u64 << k;
        loop {
            let (lo, _) = interval_endpoints(base, eps, 1, u as u32);
            layer_members.push((u, p));
            if lo > big_h {
                break;
            }
            u += step;
            if u > u32::MAX as u64 {
                break;
            }
        }
    }
    layer_members.sort_unstable();

    for &(u, _) in &layer_members {
        let (lo, hi) = interval_endpoints(base, eps, 1, u as u32);
        if let Some((plo, phi)) = clip_endpoints(&lo, &hi, horizon) {
            let (wlo, whi) = interval_endpoints(base, eps, 2, u as u32);
            if let Some((wlo, whi)) = clip_endpoints(&wlo, &whi, horizon) {
                tents.push(TentSpec::new(
                    IndexSet::from_interval(horizon, plo, phi),
                    u,
                    IndexSet::from_interval(horizon, wlo, whi),
                    format!("interval u={u}"),
                ));
            }
        }
    }

    for p in 1..=p_max as u64 {
        let b_p = b_seq[p as usize - 1];
        if b_p > horizon {
            continue;
        }
        let plateau = IndexSet::positive_multiples(horizon, b_p);
        let window = plateau.dilate(p);
        tents.push(TentSpec::new(plateau, p, window, format!("step b_{p}={b_p}")));
    }

    for i in 0..layer_members.len() {
        for j in 0..i {
            let (u, pu) = layer_members[i];
            let (v, pv) = layer_members[j];
            if u == v {
                continue;
            }
            let (lo_u, hi_u) = interval_endpoints(base, eps, 1, u as u32);
            let (lo_v, hi_v) = interval_endpoints(base, eps, 1, v as u32);
            let dlo = &lo_u - &hi_v;
            let dhi = &hi_u - &lo_v;
            if let Some((plo, phi)) = clip_endpoints(&dlo, &dhi, horizon) {
                let (wlo, whi) = interval_endpoints(base, eps, 4, u as u32);
                if let Some((wlo, whi)) = clip_endpoints(&wlo, &whi, horizon) {
                    tents.push(TentSpec::new(
                        IndexSet::from_interval(horizon, plo, phi),
                        pu.max(pv) as u64,
                        IndexSet::from_interval(horizon, wlo, whi),
                        format!("difference u={u} v={v}"),
                    ));
                }
            }
        }
    }
    tents
}

/// Builds the counterexample pair `w` (even layers) and `w'` (odd layers)
/// together with their target sets. The interval conditions must hold for
/// the chosen base and eps; tent infeasibility past that point is a bug,
/// not an input error.
pub fn counterexample_pair(params: &ShiftPairParams) -> Result<ShiftCounterexample> {
    let base = Rat::from_f64(params.a);
    let eps = Rat::from_f64(params.eps);
    let horizon = params.horizon;
    // largest u whose ε-interval is visible governs the condition range
    let mut u_max = 1u32;
    while interval_endpoints(&base, &eps, 1, u_max + 1).0 <= BigInt::from(horizon) && u_max < 200 {
        u_max += 1;
    }
    let conditions = verify_interval_conditions(&base, &eps, u_max.max(2))?;
    if !conditions.all_pass() {
        return Err(Error::Precondition(format!(
            "interval conditions fail for a={}, eps={}",
            params.a, params.eps
        )));
    }
    let b_seq = params.b_rule.steps(params.p_max)?;

    let tents_w = parity_tents(&base, &eps, &b_seq, params.p_max, horizon, false);
    let tents_w_prime = parity_tents(&base, &eps, &b_seq, params.p_max, horizon, true);
    let w = plateau_weights(&tents_w, horizon)?;
    let w_prime = plateau_weights(&tents_w_prime, horizon)?;

    let ef = build_ef_sets(&base, &eps, &b_seq, params.p_max, horizon)?;

    Ok(ShiftCounterexample {
        params: params.clone(),
        base,
        eps,
        b_seq,
        w,
        w_prime,
        tents_w,
        tents_w_prime,
        e_sets: ef.e_sets,
        f_sets: ef.f_sets,
        warnings: ef.warnings,
    })
}

/// Default separation thresholds `M(p) = 2^p`.
pub fn default_thresholds(p_max: u32) -> Vec<f64> {
    (1..=p_max).map(|p| (p as f64).exp2()).collect()
}

/// Cumulative minima of one target set over dyadic index windows.
#[derive(Clone, Debug)]
pub struct GrowthSeries {
    /// 1-based target index.
    pub p: usize,
    /// `(j, min log2 W over members in [2^j, 2^{j+1}))`, non-empty windows only.
    pub window_minima: Vec<(u32, f64)>,
    pub nondecreasing: bool,
    pub empty: bool,
}

/// One separation violation, if any.
#[derive(Clone, Debug)]
pub struct SeparationWitness {
    pub p: usize,
    pub q: usize,
    pub m: u64,
    pub n: u64,
    pub cum_log2: f64,
    pub required_log2: f64,
}

#[derive(Clone, Debug)]
pub struct FhcShiftReport {
    /// Growth surrogate: windowed minima, non-decreasing per target. No
    /// finite computation certifies divergence; this is the declared
    /// finite-horizon stand-in.
    pub growth: Vec<GrowthSeries>,
    pub growth_ok: bool,
    /// Separation: `W(m−n) ≥ max(M(p), M(q))` for all cross pairs `m > n`,
    /// checked exactly within the horizon.
    pub separation_ok: bool,
    pub violation: Option<SeparationWitness>,
    pub pairs_checked: u64,
}

/// Checks the two shift-criterion conditions for a weight system against
/// pairwise-disjoint target sets.
pub fn check_fhc_shift(
    wsys: &WeightSystem,
    targets: &[IndexSet],
    thresholds: &[f64],
    horizon: u64,
) -> Result<FhcShiftReport> {
    if thresholds.len() != targets.len() {
        return Err(Error::Parameter("need one threshold per target set".into()));
    }
    if thresholds.iter().any(|m| *m <= 0.0) {
        return Err(Error::Parameter("thresholds must be positive".into()));
    }
    for i in 0..targets.len() {
        for j in 0..i {
            if !targets[i].is_disjoint_from(&targets[j]) {
                return Err(Error::Precondition(format!("target sets {j} and {i} intersect")));
            }
        }
    }
    let horizon = horizon.min(wsys.horizon());

    let mut growth = Vec::new();
    for (idx, set) in targets.iter().enumerate() {
        let mut minima: Vec<(u32, f64)> = Vec::new();
        let mut members = set.iter().filter(|&n| n >= 1 && n <= horizon).peekable();
        for j in 0..64u32 {
            let lo = 1u64 << j;
            if lo > horizon {
                break;
            }
            let hi = 1u128 << (j + 1);
            let mut min_here: Option<f64> = None;
            while let Some(&n) = members.peek() {
                if (n as u128) < hi {
                    let c = wsys.cum_log2_f64(n);
                    min_here = Some(min_here.map_or(c, |m: f64| m.min(c)));
                    members.next();
                } else {
                    break;
                }
            }
            if let Some(m) = min_here {
                minima.push((j, m));
            }
        }
        let nondecreasing = minima.windows(2).all(|w| w[0].1 <= w[1].1);
        growth.push(GrowthSeries {
            p: idx + 1,
            empty: minima.is_empty(),
            window_minima: minima,
            nondecreasing,
        });
    }
    let growth_ok = growth.iter().all(|g| g.nondecreasing);

    // separation: exact scan over cross pairs, parallel over chunks of the
    // outer set; min-by-witness reduction keeps the result deterministic
    let members: Vec<Vec<u64>> = targets
        .iter()
        .map(|s| s.iter().filter(|&n| n >= 1 && n <= horizon).collect())
        .collect();
    let thresholds_log2: Vec<f64> = thresholds.iter().map(|m| m.log2()).collect();
    let mut violation: Option<SeparationWitness> = None;
    let mut pairs_checked = 0u64;
    for p in 0..members.len() {
        for q in 0..members.len() {
            let required = thresholds_log2[p].max(thresholds_log2[q]);
            let found: Vec<SeparationWitness> = members[p]
                .par_chunks(4096)
                .filter_map(|chunk| {
                    let mut local: Option<SeparationWitness> = None;
                    for &m in chunk {
                        for &n in &members[q] {
                            if n >= m {
                                break;
                            }
                            let cum = wsys.cum_log2_f64(m - n);
                            if cum < required {
                                let w = SeparationWitness {
                                    p: p + 1,
                                    q: q + 1,
                                    m,
                                    n,
                                    cum_log2: cum,
                                    required_log2: required,
                                };
                                if local.as_ref().map_or(true, |l| (w.m, w.n) < (l.m, l.n)) {
                                    local = Some(w);
                                }
                            }
                        }
                    }
                    local
                })
                .collect();
            for &m in &members[p] {
                pairs_checked += members[q].iter().take_while(|&&n| n < m).count() as u64;
            }
            for w in found {
                if violation
                    .as_ref()
                    .map_or(true, |v| (w.p, w.q, w.m, w.n) < (v.p, v.q, v.m, v.n))
                {
                    violation = Some(w);
                }
            }
        }
    }

    Ok(FhcShiftReport {
        growth,
        growth_ok,
        separation_ok: violation.is_none(),
        violation,
        pairs_checked,
    })
}

#[derive(Clone, Debug)]
pub struct GpInclusionReport {
    pub p: u32,
    /// `G_p ⊆ ⋃_{q ≥ p} (b_qN + [−q, q])`, checked exactly.
    pub inclusion_holds: bool,
    pub first_outside: Option<u64>,
    pub g_set: IndexSet,
    pub tail_max: Frac,
    /// Closed-form bound `Σ_{q≥p} (2q+1)/b_q` on the window union density.
    pub union_density_bound: f64,
}

/// Computes `G_p = {n : W(n) ≥ 2^p and W'(n) ≥ 2^p}` exactly from the
/// cumulative exponents and checks the window inclusion. Both systems must
/// satisfy the tent invariants (this runs first).
pub fn check_gp_inclusion(
    pair: &ShiftCounterexample,
    p: u32,
    burn_in: u64,
) -> Result<GpInclusionReport> {
    pair.w.validate_tent_invariants()?;
    pair.w_prime.validate_tent_invariants()?;
    let horizon = pair.params.horizon;
    let mut members = Vec::new();
    for n in 1..=horizon {
        if pair.w.cum_log2(n).unwrap() >= p as i64
            && pair.w_prime.cum_log2(n).unwrap() >= p as i64
        {
            members.push(n);
        }
    }
    let g_set = IndexSet::from_members(horizon, members)?;

    let mut union = IndexSet::empty(horizon);
    let mut bound = 0.0;
    for q in p..=pair.params.p_max {
        let b_q = pair.b_seq[q as usize - 1];
        bound += (2.0 * q as f64 + 1.0) / b_q as f64;
        if b_q <= horizon {
            union = union.union(&IndexSet::positive_multiples(horizon, b_q).dilate(q as u64));
        }
    }
    let first_outside = g_set.iter().find(|&n| !union.contains(n));
    let tail_max = density_profile(&g_set, burn_in.min(horizon))?.tail_max();
    Ok(GpInclusionReport {
        p,
        inclusion_holds: first_outside.is_none(),
        first_outside,
        g_set,
        tail_max,
        union_density_bound: bound,
    })
}

/// One application of the weighted backward shift to a vector.
pub fn apply_backward_shift<S: Scalar>(
    wsys: &WeightSystem,
    x: &BlockVector<S>,
) -> Result<BlockVector<S>> {
    use crate::operator::Operator;
    wsys.shift_op::<S>(x.dim())?.apply(x)
}

#[derive(Clone, Debug)]
pub struct DefectReport {
    pub threshold: f64,
    pub profile: DensityProfile,
    pub tail_max: Frac,
    /// Whether `tail_max ≤ 1 − margin` at this horizon.
    pub bounded_away: bool,
    pub margin: f64,
}

/// Density profile of `C_M = {n ∈ [1, H] : W(n) > M}` and the flag that
/// its tail max stays away from 1. Together with the window inclusion this
/// is the finite-horizon evidence that the high-cumulative level sets are
/// not co-dense.
pub fn transitivity_defect(
    wsys: &WeightSystem,
    threshold: f64,
    burn_in: u64,
    margin: f64,
) -> Result<DefectReport> {
    if threshold <= 0.0 {
        return Err(Error::Parameter("threshold must be positive".into()));
    }
    let horizon = wsys.horizon();
    let log_m = threshold.log2();
    let members = (1..=horizon).filter(|&n| wsys.cum_log2_f64(n) > log_m);
    let set = IndexSet::from_members(horizon, members)?;
    let profile = density_profile(&set, burn_in)?;
    let tail_max = profile.tail_max();
    let bounded_away = tail_max.to_f64() <= 1.0 - margin;
    Ok(DefectReport { threshold, profile, tail_max, bounded_away, margin })
}
