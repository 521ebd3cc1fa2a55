//! C-type block operators on truncated lp.
//!
//! A C-type operator is determined by four parameters `(v, w, φ, b)`:
//! interior coordinates shift forward with weights, the last coordinate of
//! block n feeds `v_n` into the start of block `φ(n) < n` and closes its
//! own block with the inverse weight product. Every finitely supported
//! vector is periodic, and the span of the first N blocks is invariant —
//! truncation is exact, never an approximation.
//!
//! The `plus-one` parameterization specializes to doubling weights on a
//! `δ`-prefix of each block and feedback coefficients `2^{−τ}`; its
//! schedule (`δ = Δ/4`, `τ = Δ/8`, decreasing `γ_k`, the truncated
//! summability inequality, and the off-block norm estimate) is evaluated
//! here, in exact arithmetic when the space exponent is 1.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::operator::{Operator, SparseColMatrix};
use crate::scalar::{to_dyadic_parts, Rat, Scalar};
use crate::vector::{BlockVector, NormTag};
use crate::{Error, Result};

/// The four parameters of a C-type operator, materialized for
/// `n_max = b.len() − 1` blocks (dimension `b[n_max]`).
#[derive(Clone, Debug)]
pub struct CTypeParams {
    /// Feedback coefficients; `v_of_n[n]` is used for `1 ≤ n < n_max`
    /// (index 0 is never read — block 0 has no feedback target).
    pub v_of_n: Vec<Rat>,
    /// Interior weights by absolute position; `w_abs[j]` is `w_j` for
    /// `1 ≤ j < b[n_max]` (index 0 is never read).
    pub w_abs: Vec<Rat>,
    /// `phi[n] < n` for `n ≥ 1`; `phi[0] = 0`.
    pub phi: Vec<usize>,
    /// Strictly increasing block boundaries with `b[0] = 0`.
    pub b: Vec<u64>,
}

impl CTypeParams {
    pub fn block_count(&self) -> usize {
        self.b.len() - 1
    }

    pub fn dim(&self) -> usize {
        *self.b.last().unwrap() as usize
    }

    /// Which block a coordinate lives in.
    pub fn block_of(&self, k: u64) -> usize {
        match self.b.binary_search(&k) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn block_len(&self, n: usize) -> u64 {
        self.b[n + 1] - self.b[n]
    }

    pub fn validate(&self) -> Result<()> {
        let n_max = self.block_count();
        if n_max == 0 {
            return Err(Error::Parameter("need at least one block".into()));
        }
        if self.b[0] != 0 {
            return Err(Error::Parameter("block boundaries must start at 0".into()));
        }
        if self.b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("block boundaries must be strictly increasing".into()));
        }
        if self.phi.len() < n_max || self.phi[0] != 0 {
            return Err(Error::Parameter("phi must cover all blocks with phi(0) = 0".into()));
        }
        for n in 1..n_max {
            if self.phi[n] >= n {
                return Err(Error::Parameter(format!("phi({n}) = {} must be < {n}", self.phi[n])));
            }
            let own = self.block_len(n);
            let target = 2 * self.block_len(self.phi[n]);
            if own % target != 0 {
                return Err(Error::Parameter(format!(
                    "block {n} length {own} is not a multiple of {target} (twice block {} length)",
                    self.phi[n]
                )));
            }
            if self.v_of_n.len() <= n || self.v_of_n[n].is_zero() {
                return Err(Error::Parameter(format!("feedback coefficient v_{n} must be non-zero")));
            }
        }
        if self.w_abs.len() < self.dim() {
            return Err(Error::Parameter("need a weight for every interior position".into()));
        }
        for j in 1..self.dim() {
            if self.w_abs[j].is_zero() {
                return Err(Error::Parameter(format!("weight w_{j} must be non-zero")));
            }
        }
        Ok(())
    }

    /// Product of interior weights of block n: `∏_{j=b_n+1}^{b_{n+1}−1} w_j`
    /// (empty product = 1).
    fn interior_product(&self, n: usize) -> Rat {
        let mut acc = Rat::one();
        for j in self.b[n] + 1..self.b[n + 1] {
            acc *= self.w_abs[j as usize].clone();
        }
        acc
    }
}

/// Builds the operator on `span(e_0 .. e_{b[n_max]−1})`. Interior columns
/// shift up with their weight; the block-end column of block n ≥ 1 maps to
/// `v_n e_{b_{φ(n)}} − (∏ w)^{−1} e_{b_n}`; the block-0 end column maps to
/// `−(∏ w)^{−1} e_0`.
pub fn build_ctype<S: Scalar>(params: &CTypeParams) -> Result<SparseColMatrix<S>> {
    params.validate()?;
    let dim = params.dim();
    let n_max = params.block_count();
    let mut cols: Vec<Vec<(usize, S)>> = vec![Vec::new(); dim];

    for n in 0..n_max {
        let start = params.b[n];
        let end = params.b[n + 1];
        for k in start..end - 1 {
            let w = S::from_rat(&params.w_abs[k as usize + 1]);
            cols[k as usize] = vec![(k as usize + 1, w)];
        }
        let k_end = (end - 1) as usize;
        let inv = Rat::one() / params.interior_product(n);
        if n == 0 {
            cols[k_end] = vec![(0, -S::from_rat(&inv))];
        } else {
            let target = params.b[params.phi[n]] as usize;
            let own = params.b[n] as usize;
            let v = S::from_rat(&params.v_of_n[n]);
            // target < own always (phi(n) < n)
            cols[k_end] = vec![(target, v), (own, -S::from_rat(&inv))];
        }
    }
    SparseColMatrix::from_cols(dim, cols)
}

/// Checks that the operator maps `span(e_0..e_{b_N−1})` into itself for
/// every `N ≤ n_max` — column supports never cross their own block end.
pub fn truncation_invariant<S: Scalar>(op: &SparseColMatrix<S>, params: &CTypeParams) -> bool {
    for n in 0..params.block_count() {
        let end = params.b[n + 1] as usize;
        for k in params.b[n]..params.b[n + 1] {
            if op.col(k as usize).iter().any(|(r, _)| *r >= end) {
                return false;
            }
        }
    }
    true
}

/// The `plus-one` parameterization: block sizes per stage, doubling-weight
/// prefix lengths, and feedback exponents.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CPlusOneParams {
    /// Size of block 0 (default 1).
    #[serde(rename = "Delta0", default = "default_block0")]
    pub block0_size: u64,
    /// `Δ^{(k)}`: common size of blocks `[2^{k−1}, 2^k)`, k = 1..=k_max.
    #[serde(rename = "Delta")]
    pub block_sizes: Vec<u64>,
    /// `δ^{(k)} < Δ^{(k)}`: how many leading interior weights equal 2.
    #[serde(rename = "delta")]
    pub doubling_counts: Vec<u64>,
    /// `τ^{(k)}`: the feedback coefficient of stage k is `2^{−τ}`.
    #[serde(rename = "tau")]
    pub feedback_exps: Vec<u64>,
    pub k_max: u32,
}

fn default_block0() -> u64 {
    1
}

impl CPlusOneParams {
    pub fn validate(&self) -> Result<()> {
        let k_max = self.k_max as usize;
        if k_max == 0
            || self.block_sizes.len() != k_max
            || self.doubling_counts.len() != k_max
            || self.feedback_exps.len() != k_max
        {
            return Err(Error::Parameter("need Delta, delta, tau of length k_max ≥ 1".into()));
        }
        if self.block0_size == 0 {
            return Err(Error::Parameter("block 0 must be non-empty".into()));
        }
        for k in 0..k_max {
            if self.doubling_counts[k] >= self.block_sizes[k] {
                return Err(Error::Parameter(format!(
                    "stage {}: delta must be smaller than the block size",
                    k + 1
                )));
            }
            let required = if k == 0 { 2 * self.block0_size } else { 2 * self.block_sizes[k - 1] };
            if self.block_sizes[k] % required != 0 {
                return Err(Error::Parameter(format!(
                    "stage {}: block size {} is not a multiple of {required}",
                    k + 1,
                    self.block_sizes[k]
                )));
            }
        }
        if self.doubling_counts.windows(2).any(|w| w[0] >= w[1])
            || self.feedback_exps.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Parameter("delta and tau must be increasing".into()));
        }
        Ok(())
    }

    /// Stage of block n ≥ 1: the k with `n ∈ [2^{k−1}, 2^k)`.
    pub fn stage_of_block(&self, n: usize) -> usize {
        (usize::BITS - n.leading_zeros()) as usize
    }

    /// Expands to explicit C-type parameters with `2^{k_max}` blocks.
    pub fn to_ctype(&self) -> Result<CTypeParams> {
        self.validate()?;
        let n_max = 1usize << self.k_max;
        let mut b = Vec::with_capacity(n_max + 1);
        b.push(0u64);
        b.push(self.block0_size);
        let mut phi = vec![0usize; n_max];
        let mut v_of_n = vec![Rat::one(); n_max];
        for n in 1..n_max {
            let k = self.stage_of_block(n);
            let size = self.block_sizes[k - 1];
            b.push(b[n] + size);
            phi[n] = n - (1 << (k - 1));
            v_of_n[n] = <Rat as Scalar>::pow2(-(self.feedback_exps[k - 1] as i64));
        }
        let dim = *b.last().unwrap();
        let mut w_abs = vec![Rat::one(); dim as usize];
        for n in 1..n_max {
            let k = self.stage_of_block(n);
            let delta = self.doubling_counts[k - 1];
            let size = self.block_sizes[k - 1];
            for i in 1..size {
                let j = b[n] + i;
                w_abs[j as usize] =
                    if i <= delta { Rat::from_i64(2) } else { Rat::one() };
            }
        }
        let params = CTypeParams { v_of_n, w_abs, phi, b };
        params.validate()?;
        Ok(params)
    }
}

/// Exact periodicity of block n: `T^{2·len(block n)} e_k = e_k` for every
/// basis vector of the block. Requires exact arithmetic.
pub fn check_periodicity<S: Scalar>(
    op: &SparseColMatrix<S>,
    params: &CTypeParams,
    n: usize,
) -> Result<bool> {
    if !S::EXACT {
        return Err(Error::FloatRefused("periodicity check"));
    }
    if n >= params.block_count() {
        return Err(Error::Parameter(format!("block {n} not materialized")));
    }
    let period = 2 * params.block_len(n);
    for k in params.b[n]..params.b[n + 1] {
        let mut x = BlockVector::<S>::basis(op.dim(), k as usize, NormTag::Lp(1));
        for _ in 0..period {
            x = op.apply(&x)?;
        }
        let e_k = BlockVector::<S>::basis(op.dim(), k as usize, NormTag::Lp(1));
        if x != e_k {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Result of the two projection conditions at one stage.
#[derive(Clone, Debug)]
pub struct ProjectionReport {
    pub stage: u32,
    /// `K = b_{2^stage}`: coordinates below K are the projected range.
    pub k_cut: u64,
    /// `J = 2·Δ^{(stage)}`: the period used in the identity check.
    pub period: u64,
    /// Exact identity `T^J e_k = e_k` for all `k < K`.
    pub identity_ok: bool,
    /// Requested norm-check range (a declared stand-in for the
    /// astronomically large theoretical range).
    pub requested_j_max: u64,
    /// Largest j for which the schedule's own estimate covers the bound:
    /// `⌊3/4·Δ^{(stage+1)}⌋` when the next stage exists.
    pub estimate_valid_j_max: Option<u64>,
    /// Exact norms `‖π_K T^j (I−π_K)‖_{1→1}` for `j = 0..=j_max` (f64 view).
    pub norms: Vec<f64>,
    /// All norms ≤ 1 over the requested range.
    pub bound_ok: bool,
    /// First `(j, norm)` with norm > 1, if any.
    pub first_violation: Option<(u64, f64)>,
}

/// Default budget for sparse column power scans.
pub const PROJECTION_SCAN_BUDGET: u64 = 100_000_000;

/// Checks, at stage n: (a) the exact projection identity `T^{J_n} π_{K_n} =
/// π_{K_n}`; (b) the exact l1→l1 norms `‖π_{K_n} T^j (I−π_{K_n})‖ ≤ 1` for
/// `j ≤ j_max`, computed as max column sums of the sparse powers. Exact
/// arithmetic only.
pub fn check_projection_conditions(
    op: &SparseColMatrix<Rat>,
    cp: &CPlusOneParams,
    params: &CTypeParams,
    stage: u32,
    j_max: u64,
) -> Result<ProjectionReport> {
    if stage == 0 {
        return Err(Error::Parameter("stage must be at least 1".into()));
    }
    if (1usize << stage) >= params.block_count() {
        return Err(Error::Parameter(format!(
            "stage {stage} needs more than 2^{stage} materialized blocks"
        )));
    }
    let k_cut = params.b[1 << stage];
    let delta_stage = cp.block_sizes[stage as usize - 1];
    let period = 2 * delta_stage;
    let dim = op.dim() as u64;
    let cost = (dim - k_cut) * j_max;
    if cost > PROJECTION_SCAN_BUDGET {
        return Err(Error::Refused(format!(
            "norm scan would take {cost} sparse column steps (budget {PROJECTION_SCAN_BUDGET})"
        )));
    }

    // (a) exact identity on every basis vector below the cut
    let mut identity_ok = true;
    'outer: for k in 0..k_cut {
        let mut x = BlockVector::<Rat>::basis(dim as usize, k as usize, NormTag::Lp(1));
        for _ in 0..period {
            x = op.apply(&x)?;
        }
        for (i, c) in x.coords().iter().enumerate() {
            let expect = if i == k as usize { Rat::one() } else { Rat::zero() };
            if *c != expect {
                identity_ok = false;
                break 'outer;
            }
        }
    }

    // (b) exact column sums of the sparse powers
    let mut cols: Vec<Vec<(usize, Rat)>> = (k_cut..dim).map(|k| vec![(k as usize, Rat::one())]).collect();
    let mut norms = Vec::with_capacity(j_max as usize + 1);
    let mut first_violation = None;
    for j in 0..=j_max {
        if j > 0 {
            for col in &mut cols {
                let mut dense: Vec<(usize, Rat)> = Vec::new();
                let mut acc: std::collections::BTreeMap<usize, Rat> = Default::default();
                for (r, v) in col.iter() {
                    for (rr, vv) in op.col(*r) {
                        let e = acc.entry(*rr).or_insert_with(Rat::zero);
                        *e += vv.clone() * v.clone();
                    }
                }
                for (r, v) in acc {
                    if !v.is_zero() {
                        dense.push((r, v));
                    }
                }
                *col = dense;
            }
        }
        let mut max_sum = Rat::zero();
        for col in &cols {
            let mut sum = Rat::zero();
            for (r, v) in col {
                if (*r as u64) < k_cut {
                    sum += Signed::abs(v);
                }
            }
            if sum > max_sum {
                max_sum = sum;
            }
        }
        let val = ToPrimitive::to_f64(&max_sum).unwrap_or(f64::NAN);
        if first_violation.is_none() && max_sum > Rat::one() {
            first_violation = Some((j, val));
        }
        norms.push(val);
    }

    let estimate_valid_j_max = if (stage as usize) < cp.block_sizes.len() {
        Some(3 * cp.block_sizes[stage as usize] / 4)
    } else {
        None
    };
    Ok(ProjectionReport {
        stage,
        k_cut,
        period,
        identity_ok,
        requested_j_max: j_max,
        estimate_valid_j_max,
        norms,
        bound_ok: first_violation.is_none(),
        first_violation,
    })
}

/// Sampled-vector variant of the norm bound for lp with `p ≥ 1`: draws
/// vectors supported past the cut and checks
/// `‖π_K T^j (I−π_K) x‖_p ≤ ‖(I−π_K) x‖_p` in float arithmetic.
pub fn check_projection_norm_sampled(
    op: &SparseColMatrix<f64>,
    k_cut: u64,
    j_max: u64,
    p: u32,
    samples: u32,
    seed: u64,
) -> Result<(bool, f64)> {
    let dim = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut x = vec![0.0f64; dim];
        for c in x.iter_mut().skip(k_cut as usize) {
            *c = (rng.gen_range(-8i32..=8) as f64) / 4.0;
        }
        let tail = BlockVector::new(x.clone(), NormTag::Lp(p))?;
        let tail_norm = tail.norm_f64();
        if tail_norm == 0.0 {
            continue;
        }
        let mut cur = x;
        for _ in 0..=j_max {
            let mut head = cur.clone();
            for c in head.iter_mut().skip(k_cut as usize) {
                *c = 0.0;
            }
            let head_norm = BlockVector::new(head, NormTag::Lp(p))?.norm_f64();
            worst = worst.max(head_norm / tail_norm);
            cur = op.apply_slice(&cur);
        }
    }
    Ok((worst <= 1.0 + 1e-12, worst))
}

/// One summability row: `2^n Σ_{k≥n+1} 2^{k−1} γ_k ≤ 1`, truncated at the
/// last materialized stage.
#[derive(Clone, Debug)]
pub struct SummabilityRow {
    pub n: u32,
    pub lhs: f64,
    pub lhs_exact: Option<Rat>,
    pub ok: bool,
    pub truncated_at: u32,
}

#[derive(Clone, Debug)]
pub struct BlockEstimateCheck {
    pub samples: u32,
    pub all_ok: bool,
    pub max_ratio: f64,
}

/// The derived schedule and its health checks.
#[derive(Clone, Debug)]
pub struct ScheduleReport {
    pub p: u32,
    pub block_sizes: Vec<u64>,
    pub doubling_counts: Vec<u64>,
    pub feedback_exps: Vec<u64>,
    /// `γ_k = 2^{δ^{(k−1)}−τ^{(k)}} (Δ^{(k)})^{1−1/p}` with `δ^{(0)} = 0`.
    pub gammas: Vec<f64>,
    /// Exact values when p = 1.
    pub gammas_exact: Option<Vec<Rat>>,
    pub gamma_decreasing: bool,
    /// Stages k (1-based) where `γ_k ≥ γ_{k−1}`.
    pub gamma_failures: Vec<u32>,
    /// `(δ^{(k)} − τ^{(k)}) / Δ^{(k)}` — exactly 1/8 under this schedule.
    pub criterion_ratios: Vec<Rat>,
    pub summability: Vec<SummabilityRow>,
    pub block_estimate: BlockEstimateCheck,
}

/// Derives `δ = Δ/4`, `τ = Δ/8` from the block sizes (all must be in 8N
/// and each a multiple of twice its predecessor), evaluates `γ_k`, the
/// decrease of `γ`, the truncated summability inequality for every
/// `n < k_max`, the positivity ratio `(δ−τ)/Δ`, and spot-checks the
/// off-block estimate `‖P_m T^j P_l x‖ ≤ (β_l/4)‖P_l x‖` on sampled
/// `(m, l, j, x)` with `j` inside the estimate's validity range
/// `0 ≤ j ≤ 3Δ^{(k)}/4`.
pub fn schedule_report(block_sizes: &[u64], p: u32, samples: u32, seed: u64) -> Result<ScheduleReport> {
    if block_sizes.is_empty() {
        return Err(Error::Parameter("need at least one stage".into()));
    }
    if p == 0 {
        return Err(Error::Parameter("space exponent must be ≥ 1".into()));
    }
    for (k, &d) in block_sizes.iter().enumerate() {
        if d % 8 != 0 {
            return Err(Error::Parameter(format!("stage {}: block size must be in 8N", k + 1)));
        }
        let required = if k == 0 { 2 } else { 2 * block_sizes[k - 1] };
        if d % required != 0 {
            return Err(Error::Parameter(format!(
                "stage {}: block size {d} is not a multiple of {required}",
                k + 1
            )));
        }
    }
    let k_max = block_sizes.len() as u32;
    let doubling_counts: Vec<u64> = block_sizes.iter().map(|d| d / 4).collect();
    let feedback_exps: Vec<u64> = block_sizes.iter().map(|d| d / 8).collect();

    // γ_k with δ^{(0)} = 0 for the leading stage
    let mut gammas = Vec::with_capacity(k_max as usize);
    let mut gammas_exact = (p == 1).then(Vec::new);
    for k in 1..=k_max as usize {
        let exp = if k == 1 { 0i64 } else { doubling_counts[k - 2] as i64 }
            - feedback_exps[k - 1] as i64;
        let size_pow = (block_sizes[k - 1] as f64).powf(1.0 - 1.0 / p as f64);
        gammas.push((exp as f64).exp2() * size_pow);
        if let Some(ge) = gammas_exact.as_mut() {
            ge.push(<Rat as Scalar>::pow2(exp));
        }
    }
    let mut gamma_failures = Vec::new();
    for k in 1..gammas.len() {
        let bad = match &gammas_exact {
            Some(ge) => ge[k] >= ge[k - 1],
            None => gammas[k] >= gammas[k - 1],
        };
        if bad {
            gamma_failures.push(k as u32 + 1);
        }
    }
    let gamma_decreasing = gamma_failures.is_empty();

    let criterion_ratios: Vec<Rat> = (0..k_max as usize)
        .map(|k| {
            Rat::new(
                BigInt::from(doubling_counts[k] as i64 - feedback_exps[k] as i64),
                BigInt::from(block_sizes[k]),
            )
        })
        .collect();

    let mut summability = Vec::new();
    for n in 0..k_max {
        let mut lhs = 0.0f64;
        let mut lhs_exact = (p == 1).then(<Rat as Scalar>::zero);
        for k in (n + 1)..=k_max {
            let coeff = ((n as f64) + (k as f64) - 1.0).exp2();
            lhs += coeff * gammas[k as usize - 1];
            if let (Some(acc), Some(ge)) = (lhs_exact.as_mut(), gammas_exact.as_ref()) {
                *acc += <Rat as Scalar>::pow2(n as i64 + k as i64 - 1) * ge[k as usize - 1].clone();
            }
        }
        let ok = match &lhs_exact {
            Some(v) => *v <= Rat::one(),
            None => lhs <= 1.0 + 1e-12,
        };
        summability.push(SummabilityRow { n, lhs, lhs_exact, ok, truncated_at: k_max });
    }

    // off-block estimate on the materialized operator
    let cp = CPlusOneParams {
        block0_size: 1,
        block_sizes: block_sizes.to_vec(),
        doubling_counts: doubling_counts.clone(),
        feedback_exps: feedback_exps.clone(),
        k_max,
    };
    let params = cp.to_ctype()?;
    let op = build_ctype::<Rat>(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all_ok = true;
    let mut max_ratio = 0.0f64;
    let n_blocks = params.block_count();
    for _ in 0..samples {
        let l = rng.gen_range(1..n_blocks);
        let m = rng.gen_range(0..l);
        let k_stage = cp.stage_of_block(l);
        let j = rng.gen_range(0..=(3 * cp.block_sizes[k_stage - 1] / 4));
        let mut x = BlockVector::<Rat>::zeros(op.dim(), NormTag::Lp(p));
        for i in params.b[l]..params.b[l + 1] {
            x.coords_mut()[i as usize] = Rat::from_i64(rng.gen_range(-4i64..=4));
        }
        if x.is_zero() {
            continue;
        }
        let x_norm = x.norm_comparable();
        let mut cur = x;
        for _ in 0..j {
            cur = op.apply(&cur)?;
        }
        let mut in_m = BlockVector::<Rat>::zeros(op.dim(), NormTag::Lp(p));
        for i in params.b[m]..params.b[m + 1] {
            in_m.coords_mut()[i as usize] = cur.coords()[i as usize].clone();
        }
        let m_norm = in_m.norm_comparable();
        // bound: (β_l/4)·‖P_l x‖ = γ_{stage}·‖P_l x‖, on p-th powers
        let gamma = match &gammas_exact {
            Some(ge) => ge[k_stage - 1].clone(),
            None => Rat::from_f64(gammas[k_stage - 1]),
        };
        let mut bound = x_norm.clone();
        for _ in 0..p {
            bound = bound.clone() * gamma.clone();
        }
        // m_norm and bound are p-th powers of the norms
        let ok = m_norm <= bound;
        if !ok {
            all_ok = false;
        }
        let ratio = ToPrimitive::to_f64(&m_norm).unwrap_or(f64::NAN)
            / ToPrimitive::to_f64(&bound).unwrap_or(f64::NAN);
        if ratio.is_finite() {
            max_ratio = max_ratio.max(ratio.powf(1.0 / p as f64));
        }
    }

    Ok(ScheduleReport {
        p,
        block_sizes: block_sizes.to_vec(),
        doubling_counts,
        feedback_exps,
        gammas,
        gammas_exact,
        gamma_decreasing,
        gamma_failures,
        criterion_ratios,
        summability,
        block_estimate: BlockEstimateCheck { samples, all_ok, max_ratio },
    })
}

/// Exports a dyadic-entry operator as CSV `row,col,numerator,log2denominator`.
pub fn export_dyadic_csv(op: &SparseColMatrix<Rat>, w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "row,col,numerator,log2denominator")?;
    for col in 0..op.dim() {
        for (row, v) in op.col(col) {
            let (num, den) = to_dyadic_parts(v).ok_or_else(|| {
                Error::Parameter(format!("entry at ({row},{col}) is not dyadic"))
            })?;
            writeln!(w, "{row},{col},{num},{den}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_8_32() -> CPlusOneParams {
        CPlusOneParams {
            block0_size: 1,
            block_sizes: vec![8, 32],
            doubling_counts: vec![2, 8],
            feedback_exps: vec![1, 4],
            k_max: 2,
        }
    }

    fn minimal_params() -> CTypeParams {
        CTypeParams {
            v_of_n: vec![Rat::one()],
            w_abs: vec![Rat::one()],
            phi: vec![0],
            b: vec![0, 1],
        }
    }

    #[test]
    fn minimal_block_action() {
        let op = build_ctype::<Rat>(&minimal_params()).unwrap();
        // empty interior product: T e_0 = −e_0
        assert_eq!(op.entry(0, 0), Rat::from_i64(-1));
        assert!(check_periodicity(&op, &minimal_params(), 0).unwrap());
    }

    #[test]
    fn plus_one_expansion() {
        let params = preset_8_32().to_ctype().unwrap();
        assert_eq!(params.b, vec![0, 1, 9, 41, 73]);
        assert_eq!(params.phi[3], 1);
        assert_eq!(params.block_len(2), 32);
        assert_eq!(params.block_len(3), 32);
    }

    #[test]
    fn plus_one_divisibility_enforced() {
        let mut p = preset_8_32();
        p.block_sizes = vec![8, 8]; // 8 is not a multiple of 2·8
        p.doubling_counts = vec![2, 3];
        p.feedback_exps = vec![1, 2];
        let err = p.to_ctype().unwrap_err();
        assert!(format!("{err}").contains("stage 2"), "{err}");
    }

    #[test]
    fn plus_one_actions() {
        let cp = preset_8_32();
        let params = cp.to_ctype().unwrap();
        let op = build_ctype::<Rat>(&params).unwrap();
        // interior of block 1: T e_{b_1} = 2 e_{b_1+1}
        assert_eq!(op.entry(2, 1), Rat::from_i64(2));
        // block-1 end: T e_8 = 2^{−τ(1)} e_0 − (1/4) e_1
        assert_eq!(op.entry(0, 8), Rat::from_ratio(1, 2));
        assert_eq!(op.entry(1, 8), Rat::from_ratio(-1, 4));
        assert!(truncation_invariant(&op, &params));
    }

    #[test]
    fn periodicity_all_blocks() {
        let params = preset_8_32().to_ctype().unwrap();
        let op = build_ctype::<Rat>(&params).unwrap();
        for n in 0..params.block_count() {
            assert!(check_periodicity(&op, &params, n).unwrap(), "block {n}");
        }
    }

    #[test]
    fn periodicity_survives_feedback_sign_flip() {
        // the feedback coefficient enters the period linearly through two
        // mutually canceling terms, so flipping its sign changes nothing
        let mut params = preset_8_32().to_ctype().unwrap();
        params.v_of_n[1] = -params.v_of_n[1].clone();
        let op = build_ctype::<Rat>(&params).unwrap();
        assert!(check_periodicity(&op, &params, 1).unwrap());
    }

    #[test]
    fn periodicity_catches_corrupted_closing_sign() {
        let params = preset_8_32().to_ctype().unwrap();
        let mut op = build_ctype::<Rat>(&params).unwrap();
        // negate the block-closing coefficient of block 1 (entry (1, 8))
        let closing = op.entry(1, 8);
        assert!(!closing.is_zero());
        op.set_entry(1, 8, -closing);
        assert!(!check_periodicity(&op, &params, 1).unwrap());
    }

    #[test]
    fn periodicity_refuses_floats() {
        let params = minimal_params();
        let op = build_ctype::<f64>(&params).unwrap();
        assert!(matches!(check_periodicity(&op, &params, 0), Err(Error::FloatRefused(_))));
    }

    #[test]
    fn finitely_supported_vectors_periodic() {
        // lcm of block periods over blocks 0..2 of the preset: lcm(2,16,64)
        let params = preset_8_32().to_ctype().unwrap();
        let op = build_ctype::<Rat>(&params).unwrap();
        let mut x = BlockVector::<Rat>::zeros(op.dim(), NormTag::Lp(1));
        x.coords_mut()[0] = Rat::from_i64(3);
        x.coords_mut()[5] = Rat::from_ratio(-7, 2);
        x.coords_mut()[12] = Rat::from_ratio(1, 16);
        let orig = x.clone();
        for _ in 0..64 {
            x = op.apply(&x).unwrap();
        }
        assert_eq!(x, orig);
    }

    #[test]
    fn projection_identity_and_norms() {
        let cp = preset_8_32();
        let params = cp.to_ctype().unwrap();
        let op = build_ctype::<Rat>(&params).unwrap();
        let report = check_projection_conditions(&op, &cp, &params, 1, 40).unwrap();
        assert_eq!(report.k_cut, 9);
        assert_eq!(report.period, 16);
        assert!(report.identity_ok);
        assert_eq!(report.estimate_valid_j_max, Some(24));
        // j = 0: complementary projections compose to zero
        assert_eq!(report.norms[0], 0.0);
        // the bound holds exactly up to j = 28 and first fails at j = 29
        // with norm 2 (doubling prefix meets the feedback coefficient)
        assert!(report.norms[..29].iter().all(|n| *n <= 1.0));
        assert_eq!(report.first_violation, Some((29, 2.0)));
        // at j = 32 the full doubling run has fed back: norm 16
        assert_eq!(report.norms[32], 16.0);
    }

    #[test]
    fn projection_stage_out_of_range() {
        let cp = preset_8_32();
        let params = cp.to_ctype().unwrap();
        let op = build_ctype::<Rat>(&params).unwrap();
        assert!(matches!(
            check_projection_conditions(&op, &cp, &params, 2, 10),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sampled_norm_mode_agrees_with_columns_at_p1() {
        let cp = preset_8_32();
        let params = cp.to_ctype().unwrap();
        let op_exact = build_ctype::<Rat>(&params).unwrap();
        let op_float = build_ctype::<f64>(&params).unwrap();
        let exact = check_projection_conditions(&op_exact, &cp, &params, 1, 24).unwrap();
        let max_exact = exact.norms.iter().cloned().fold(0.0, f64::max);
        let (ok, worst) = check_projection_norm_sampled(&op_float, 9, 24, 1, 200, 11).unwrap();
        assert!(ok);
        // sampled dilations never exceed the exact column norm
        assert!(worst <= max_exact + 1e-9, "worst {worst} vs exact {max_exact}");
    }

    #[test]
    fn schedule_reference_values() {
        let report = schedule_report(&[8, 32], 1, 50, 3).unwrap();
        assert_eq!(report.doubling_counts, vec![2, 8]);
        assert_eq!(report.feedback_exps, vec![1, 4]);
        let exact = report.gammas_exact.as_ref().unwrap();
        assert_eq!(exact[0], Rat::from_ratio(1, 2));
        assert_eq!(exact[1], Rat::from_ratio(1, 4));
        assert!(report.gamma_decreasing);
        for r in &report.criterion_ratios {
            assert_eq!(*r, Rat::from_ratio(1, 8));
        }
        // truncated sums: n=0: γ₁ + 2γ₂ = 1; n=1: 2·2·γ₂ = 1
        for row in &report.summability {
            assert_eq!(row.lhs_exact.as_ref().unwrap(), &Rat::one());
            assert!(row.ok);
        }
        assert!(report.block_estimate.all_ok, "ratio {}", report.block_estimate.max_ratio);
    }

    #[test]
    fn schedule_flags_slow_growth() {
        let report = schedule_report(&[8, 16], 1, 10, 3).unwrap();
        // γ₂ = 2^{2−2} = 1 ≥ γ₁ = 1/2 → flagged
        assert!(!report.gamma_decreasing);
        assert_eq!(report.gamma_failures, vec![2]);
        assert!(report.summability.iter().any(|r| !r.ok));
    }

    #[test]
    fn dyadic_export_roundtrip_format() {
        let params = preset_8_32().to_ctype().unwrap();
        let op = build_ctype::<Rat>(&params).unwrap();
        let mut buf = Vec::new();
        export_dyadic_csv(&op, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("row,col,numerator,log2denominator"));
        // block-1 end column: v_1 = 1/2 → "0,8,1,1"
        assert!(text.lines().any(|l| l == "0,8,1,1"), "{text}");
    }
}
