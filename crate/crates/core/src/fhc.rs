//! Construction of an orbit vector realizing prescribed visit sets, and
//! rank-one similarity interpolation.
//!
//! Given a weighted backward shift `T = B_w` with weights bounded below by
//! `c > 1`, finitely supported targets `x_p`, radii `α_p`, and sets `A_p`
//! of positive tail density, the builder
//!
//! 1. pins tolerances `ε_p = min(α_p, 2^{−p}) / (2(p+1))` and verifies the
//!    tolerance inequalities they must satisfy;
//! 2. finds tail thresholds `N_p` from the closed-form geometric tail of
//!    the right inverse `S` (the forward shift with weights `1/w`);
//! 3. disjointifies the `A_p` at the thresholds into visit sets `B_p`;
//! 4. assembles `x = Σ_p Σ_{n∈B_p} Sⁿ x_p`, truncated at coordinate `K`,
//!    with the dropped-tail mass bounded and reported — never silently
//!    ignored.
//!
//! The orbit then satisfies `‖Tⁿx − x_p‖ < 3α_p + slack` for every
//! `n ∈ B_p` inside the orbit horizon, which the orbit report verifies by
//! direct computation. Coordinates of `x` reach scales like `2^{−K}`, so
//! the builder works in wide-exponent floats ([`WideFloat`]).

use num_traits::{Signed, ToPrimitive};

use crate::density::{density_profile, Frac, IndexSet};
use crate::operator::{Operator, SparseColMatrix};
use crate::scalar::{Rat, Scalar, WideFloat};
use crate::sets::{disjointify, DisjointifyPlan};
use crate::shift::WeightSystem;
use crate::vector::{BlockVector, NormTag};
use crate::{Error, Result};

/// Tolerance split recorded per target: the orbit-error decomposition
/// gives `own_side + later_side` as the bound for each of the forward and
/// backward contributions, and both must stay below `α_p`.
#[derive(Clone, Debug)]
pub struct ToleranceSplit {
    pub p: usize,
    /// `p · ε_p` — contributions of targets up to p.
    pub own_side: f64,
    /// `Σ_{q>p} ε_q` — contributions of later targets.
    pub later_side: f64,
    pub alpha: f64,
}

/// The assembled plan: targets, tolerances, visit sets, and the vector.
#[derive(Clone, Debug)]
pub struct FhccPlan {
    pub targets: Vec<BlockVector<WideFloat>>,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Tail thresholds `N_p`.
    pub tail_starts: Vec<u64>,
    /// The visit sets `B_p` (disjointified, `min ≥ N_p`, far apart).
    pub visit_sets: Vec<IndexSet>,
    pub thinning_steps: Vec<u64>,
    pub vector: BlockVector<WideFloat>,
    /// Coordinate truncation `K`.
    pub truncation: usize,
    pub orbit_horizon: u64,
    /// Upper bound on the mass dropped by the coordinate truncation.
    pub dropped_tail: WideFloat,
    pub splits: Vec<ToleranceSplit>,
}

impl FhccPlan {
    /// The approach radius `3 α_p + dropped-tail slack` used by orbit
    /// checks at target p (0-based index).
    pub fn approach_radius(&self, p: usize) -> WideFloat {
        WideFloat::from_f64(3.0 * self.alphas[p]) + self.dropped_tail
    }
}

/// Builds the plan for a shift with all weights `≥ c > 1`. The sets must
/// share the horizon `K`; the truncation must leave room for the whole
/// orbit window (`K ≥ orbit_horizon + max degree`).
pub fn fhcc_vector(
    wsys: &WeightSystem,
    targets: &[Vec<f64>],
    a_sets: &[IndexSet],
    alphas: &[f64],
    truncation: usize,
    orbit_horizon: u64,
    burn_in: u64,
) -> Result<FhccPlan> {
    let count = targets.len();
    if count == 0 || a_sets.len() != count || alphas.len() != count {
        return Err(Error::Parameter("need matching targets, sets and radii".into()));
    }
    if alphas.iter().any(|a| !(a > &0.0)) {
        return Err(Error::Parameter("radii must be positive".into()));
    }
    if (truncation as u64) > wsys.horizon() {
        return Err(Error::Parameter("truncation exceeds the weight horizon".into()));
    }
    let c = (1..=truncation as u64).map(|n| wsys.weight_f64(n)).fold(f64::INFINITY, f64::min);
    if !(c > 1.0) {
        return Err(Error::Precondition(format!(
            "weights must be bounded below by some c > 1 on the truncation (found {c})"
        )));
    }
    let degrees: Vec<usize> = targets
        .iter()
        .enumerate()
        .map(|(p, t)| {
            t.iter()
                .rposition(|v| *v != 0.0)
                .ok_or_else(|| Error::Parameter(format!("target {} is zero", p + 1)))
        })
        .collect::<Result<_>>()?;
    let max_degree = *degrees.iter().max().unwrap();
    if max_degree >= truncation {
        return Err(Error::Refused(format!(
            "target degree {max_degree} does not fit below the truncation {truncation}"
        )));
    }
    if (truncation as u64) < orbit_horizon + max_degree as u64 {
        return Err(Error::Refused(format!(
            "truncation {truncation} would corrupt orbit values up to {orbit_horizon} \
             (need at least orbit horizon + max target degree {max_degree})"
        )));
    }
    if a_sets.iter().any(|s| s.horizon() != truncation as u64) {
        return Err(Error::Parameter("prescribed sets must live at the truncation horizon".into()));
    }

    // pinned tolerance rule, then the inequalities it must satisfy
    let epsilons: Vec<f64> = (1..=count)
        .map(|p| alphas[p - 1].min((-(p as f64)).exp2()) / (2.0 * (p as f64 + 1.0)))
        .collect();
    let mut splits = Vec::with_capacity(count);
    for p in 1..=count {
        let own = p as f64 * epsilons[p - 1];
        let later: f64 = epsilons[p..].iter().sum();
        let strict: f64 = epsilons[(p + 1).min(count)..].iter().sum();
        if own + strict >= alphas[p - 1] || own + later >= alphas[p - 1] {
            return Err(Error::Construction(format!(
                "tolerance inequalities fail at target {p}: {own} + {later} vs α = {}",
                alphas[p - 1]
            )));
        }
        splits.push(ToleranceSplit { p, own_side: own, later_side: later, alpha: alphas[p - 1] });
    }

    // geometric tails of the right inverse: Σ_{n≥N} ‖Sⁿ x_i‖ ≤
    // c^{−N} · c/(c−1) · ‖x_i‖, plus the requirement N > max degree so the
    // forward tails vanish identically
    let max_norm =
        targets.iter().map(|t| t.iter().fold(0.0f64, |m, v| m.max(f64::abs(*v)))).fold(0.0, f64::max);
    let tail_starts: Vec<u64> = epsilons
        .iter()
        .map(|eps| {
            let mut n = (max_degree + 1) as u64;
            while c.powi(-(n as i32)) * c / (c - 1.0) * max_norm > *eps {
                n += 1;
            }
            n
        })
        .collect();

    let plan: DisjointifyPlan = disjointify(a_sets, &tail_starts, burn_in)?;

    // assemble x = Σ_p Σ_{n ∈ B_p, n ≤ K − deg} Sⁿ x_p; the per-p orbit
    // of S is kept as a sliding compact window so assembly is O(K·deg)
    let dim = truncation + 1;
    let mut x = BlockVector::<WideFloat>::zeros(dim, NormTag::Sup);
    let mut dropped = WideFloat::ZERO;
    let weights: Vec<WideFloat> =
        (1..=truncation as u64).map(|n| wsys.weight_as::<WideFloat>(n)).collect();
    let coords = x.coords_mut();
    for (p, target) in targets.iter().enumerate() {
        let deg = degrees[p];
        let mut window: Vec<WideFloat> =
            target[..=deg].iter().map(|v| WideFloat::from_f64(*v)).collect();
        let limit = truncation - deg;
        let mut offset = 0usize;
        let members = plan.outputs[p].members();
        for &n in &members {
            if n as usize > limit {
                // closed-form bound on the dropped contribution
                let norm = target.iter().fold(0.0f64, |m, v| m.max(f64::abs(*v)));
                dropped = dropped
                    + WideFloat::from_f64(norm * c / (c - 1.0))
                        * WideFloat::from_f64(c).powi_neg(n);
                continue;
            }
            while offset < n as usize {
                // S: shift up by one, divide by the landing weight
                for (j, w) in window.iter_mut().enumerate() {
                    *w = *w / weights[offset + j];
                }
                offset += 1;
            }
            for (j, w) in window.iter().enumerate() {
                coords[offset + j] = coords[offset + j] + *w;
            }
        }
    }

    let targets_embedded: Vec<BlockVector<WideFloat>> = targets
        .iter()
        .map(|t| {
            let mut v = BlockVector::<WideFloat>::zeros(dim, NormTag::Sup);
            for (i, c) in t.iter().enumerate() {
                v.coords_mut()[i] = WideFloat::from_f64(*c);
            }
            v
        })
        .collect();

    Ok(FhccPlan {
        targets: targets_embedded,
        alphas: alphas.to_vec(),
        epsilons,
        tail_starts,
        visit_sets: plan.outputs,
        thinning_steps: plan.steps,
        vector: x,
        truncation,
        orbit_horizon,
        dropped_tail: dropped,
        splits,
    })
}

trait Powi {
    fn powi_neg(self, n: u64) -> Self;
}

impl Powi for WideFloat {
    /// `self^{−n}` by binary exponentiation.
    fn powi_neg(self, n: u64) -> Self {
        let mut acc = WideFloat::one();
        let mut base = WideFloat::one() / self;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }
}

/// Per-target outcome of one orbit pass.
#[derive(Clone, Debug)]
pub struct OrbitTargetReport {
    /// Visit set of the ball around the target.
    pub visits: IndexSet,
    /// `visits ∩ A_p`.
    pub intersected: IndexSet,
    pub tail_min: Frac,
}

#[derive(Clone, Debug)]
pub struct OrbitReport {
    pub per_target: Vec<OrbitTargetReport>,
    pub burn_in: u64,
}

/// One orbit pass servicing all targets: visit sets of the target balls,
/// intersected with the prescribed sets, with their density profiles.
pub fn orbit_density_report<S: Scalar, T: Operator<S> + ?Sized>(
    op: &T,
    x: &BlockVector<S>,
    targets: &[BlockVector<S>],
    radii: &[S],
    a_sets: &[IndexSet],
    horizon: u64,
    burn_in: u64,
) -> Result<OrbitReport> {
    if targets.len() != radii.len() || targets.len() != a_sets.len() {
        return Err(Error::Parameter("need matching targets, radii and sets".into()));
    }
    if x.dim() != op.dim() || targets.iter().any(|t| t.dim() != op.dim()) {
        return Err(Error::Parameter("dimension mismatch".into()));
    }
    let mut visit_members: Vec<Vec<u64>> = vec![Vec::new(); targets.len()];
    let mut current = x.clone();
    for n in 0..=horizon {
        if n > 0 {
            current = op.apply(&current)?;
        }
        for (i, target) in targets.iter().enumerate() {
            if current.dist_lt(target, &radii[i])? {
                visit_members[i].push(n);
            }
        }
    }
    let mut per_target = Vec::with_capacity(targets.len());
    for (i, members) in visit_members.into_iter().enumerate() {
        let visits = IndexSet::from_members(horizon, members)?;
        // intersect works on the common (smaller) horizon
        let intersected = visits.intersect(&a_sets[i]);
        let tail_min = density_profile(&intersected, burn_in.min(horizon))?.tail_min();
        per_target.push(OrbitTargetReport { visits, intersected, tail_min });
    }
    Ok(OrbitReport { per_target, burn_in })
}

/// Rank-one similarity interpolation: starting from `S`, pins
/// `L z_l = x_l` for exactly the given pairs via biorthogonal functionals,
/// touching nothing the functionals do not see.
#[derive(Clone, Debug)]
pub struct Interpolation {
    pub op: SparseColMatrix<Rat>,
    /// `Σ_l ‖v_l*‖ · ‖x_l − L_{l−1} z_l‖` (dual l1 × sup norms).
    pub perturbation_bound: f64,
    pub within_eps: bool,
    /// Exact rank of `L − S` (at most the number of pairs).
    pub update_rank: usize,
}

/// Builds `L = L_n` by the recursion `L_l = L_{l−1} + v_l* ⊗ (x_l −
/// L_{l−1} z_l)` with `v_l*(z_s) = 0` for `s < l`, `v_l*(z_l) = 1`. The
/// `z_l` must be linearly independent (checked by exact rank). If the
/// perturbation bound reaches `eps`, the operator is still returned with
/// `within_eps = false` — keeping the update small is the caller's job.
pub fn similarity_interpolation(
    s_op: &SparseColMatrix<Rat>,
    pairs: &[(Vec<Rat>, Vec<Rat>)],
    eps: f64,
) -> Result<Interpolation> {
    let dim = s_op.dim();
    if pairs.is_empty() {
        return Err(Error::Parameter("need at least one pair".into()));
    }
    if pairs.iter().any(|(z, x)| z.len() != dim || x.len() != dim) {
        return Err(Error::Parameter("vector dimension mismatch".into()));
    }

    let mut op = s_op.clone();
    let mut bound = 0.0f64;
    for l in 1..=pairs.len() {
        let functional = biorthogonal_functional(&pairs[..l], dim)?;
        let z_l = &pairs[l - 1].0;
        let x_l = &pairs[l - 1].1;
        let image = op.apply_slice(z_l);
        let correction: Vec<Rat> =
            x_l.iter().zip(&image).map(|(a, b)| a.clone() - b.clone()).collect();
        let f_norm: f64 = functional
            .iter()
            .map(|c| ToPrimitive::to_f64(&Signed::abs(c)).unwrap_or(0.0))
            .sum();
        let c_norm: f64 = correction
            .iter()
            .map(|c| ToPrimitive::to_f64(&Signed::abs(c)).unwrap_or(0.0))
            .fold(0.0, f64::max);
        bound += f_norm * c_norm;
        op.add_rank_one(&correction, &functional);
    }

    // exact pins
    for (l, (z, x)) in pairs.iter().enumerate() {
        if op.apply_slice(z) != *x {
            return Err(Error::Construction(format!("pair {} not interpolated exactly", l + 1)));
        }
    }
    let update_rank = op.sub(s_op).rank();
    Ok(Interpolation { op, perturbation_bound: bound, within_eps: bound < eps, update_rank })
}

/// A functional `f` with `f(z_s) = 0` for `s < l` and `f(z_l) = 1`, where
/// `l = prefix.len()`. Fails when the `z_s` are dependent.
fn biorthogonal_functional(prefix: &[(Vec<Rat>, Vec<Rat>)], dim: usize) -> Result<Vec<Rat>> {
    let l = prefix.len();
    // row-reduce the z's to find pivot columns
    let mut rows: Vec<Vec<Rat>> = prefix.iter().map(|(z, _)| z.clone()).collect();
    let mut pivots: Vec<usize> = Vec::with_capacity(l);
    for r in 0..l {
        // eliminate against previous pivots
        for (i, &p) in pivots.iter().enumerate() {
            let factor = rows[r][p].clone() / rows[i][p].clone();
            if !factor.is_zero() {
                let prev = rows[i].clone();
                for (a, b) in rows[r].iter_mut().zip(prev) {
                    *a = a.clone() - factor.clone() * b;
                }
            }
        }
        let piv = rows[r]
            .iter()
            .position(|v| !v.is_zero())
            .ok_or_else(|| Error::Parameter(format!("vectors are linearly dependent at {}", r + 1)))?;
        pivots.push(piv);
    }
    // solve A c = e_l with A[s][t] = z_s[pivot_t]
    let mut a: Vec<Vec<Rat>> = prefix
        .iter()
        .map(|(z, _)| pivots.iter().map(|&p| z[p].clone()).collect())
        .collect();
    let mut rhs: Vec<Rat> = (0..l).map(|i| if i + 1 == l { Rat::one() } else { Rat::zero() }).collect();
    // forward elimination with partial pivoting (exact, so any non-zero works)
    for col in 0..l {
        let pivot_row = (col..l)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::Parameter("vectors are linearly dependent".into()))?;
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..l {
            if !a[r][col].is_zero() {
                let factor = a[r][col].clone() / a[col][col].clone();
                let upper = a[col].clone();
                for (x, y) in a[r].iter_mut().zip(upper) {
                    *x = x.clone() - factor.clone() * y;
                }
                rhs[r] = rhs[r].clone() - factor * rhs[col].clone();
            }
        }
    }
    let mut c = vec![Rat::zero(); l];
    for row in (0..l).rev() {
        let mut acc = rhs[row].clone();
        for col in row + 1..l {
            acc = acc - a[row][col].clone() * c[col].clone();
        }
        c[row] = acc / a[row][row].clone();
    }
    let mut f = vec![Rat::zero(); dim];
    for (t, &p) in pivots.iter().enumerate() {
        f[p] = c[t].clone();
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::IdentityOp;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::from_ratio(n, d)
    }

    #[test]
    fn plan_single_target() {
        let k = 2000usize;
        let wsys = WeightSystem::constant(2.0, k as u64).unwrap();
        let everything = IndexSet::from_pred(k as u64, |n| n >= 1);
        let plan =
            fhcc_vector(&wsys, &[vec![1.0]], &[everything], &[0.125], k, 1000, 100).unwrap();
        assert_eq!(plan.epsilons, vec![0.125f64.min(0.5) / 4.0]);
        assert_eq!(plan.tail_starts, vec![6]);
        let b = &plan.visit_sets[0];
        assert!(b.min().unwrap() >= 6);
        let members = b.members();
        assert!(members.windows(2).all(|w| w[1] - w[0] >= 12));

        // orbit approach: every visit lands within 3α + slack of the target
        let shift = wsys.shift_op::<WideFloat>(k + 1).unwrap();
        let radius = plan.approach_radius(0);
        let report = orbit_density_report(
            &shift,
            &plan.vector,
            &plan.targets,
            &[radius],
            &plan.visit_sets,
            1000,
            100,
        )
        .unwrap();
        let inside_horizon =
            IndexSet::from_members(1000, b.iter().filter(|&n| n <= 1000)).unwrap();
        assert!(inside_horizon.is_subset_of(&report.per_target[0].visits));
        assert!(report.per_target[0].tail_min.num > 0);
    }

    #[test]
    fn plan_refuses_tight_truncation() {
        let wsys = WeightSystem::constant(2.0, 1000).unwrap();
        let everything = IndexSet::from_pred(1000, |n| n >= 1);
        assert!(matches!(
            fhcc_vector(&wsys, &[vec![1.0, 1.0]], &[everything], &[0.125], 1000, 1000, 10),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn plan_refuses_overlong_target() {
        let wsys = WeightSystem::constant(2.0, 100).unwrap();
        let everything = IndexSet::from_pred(100, |n| n >= 1);
        let mut long = vec![0.0; 200];
        long[150] = 1.0;
        assert!(matches!(
            fhcc_vector(&wsys, &[long], &[everything], &[0.125], 100, 10, 1),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn plan_requires_growth() {
        let wsys = WeightSystem::constant(1.0, 100).unwrap();
        let everything = IndexSet::from_pred(100, |n| n >= 1);
        assert!(matches!(
            fhcc_vector(&wsys, &[vec![1.0]], &[everything], &[0.125], 100, 10, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn orbit_report_zero_vector() {
        let op = IdentityOp(4);
        let x = BlockVector::<f64>::zeros(4, NormTag::Sup);
        let target = BlockVector::<f64>::basis(4, 0, NormTag::Sup);
        let a = IndexSet::full(50);
        let r = orbit_density_report(&op, &x, &[target], &[0.5], &[a], 50, 0).unwrap();
        assert!(r.per_target[0].visits.is_empty());
    }

    #[test]
    fn orbit_report_identity_recovers_sets() {
        let op = IdentityOp(3);
        let x = BlockVector::new(vec![1.0, 2.0, 0.0], NormTag::Sup).unwrap();
        let a = IndexSet::from_pred(40, |n| n % 3 == 1);
        let r = orbit_density_report(&op, &x, &[x.clone()], &[0.25], &[a.clone()], 40, 0).unwrap();
        assert_eq!(r.per_target[0].intersected, a);
    }

    #[test]
    fn interpolation_identity_case() {
        let s = SparseColMatrix::<Rat>::identity(4);
        let pairs: Vec<(Vec<Rat>, Vec<Rat>)> = (0..3)
            .map(|i| {
                let mut z = vec![Rat::zero(); 4];
                z[i] = rat(i as i64 + 1, 2);
                z[3] = Rat::one();
                (z.clone(), z)
            })
            .collect();
        let r = similarity_interpolation(&s, &pairs, 0.5).unwrap();
        assert_eq!(r.op, s);
        assert_eq!(r.perturbation_bound, 0.0);
        assert_eq!(r.update_rank, 0);
        assert!(r.within_eps);
    }

    #[test]
    fn interpolation_single_correction_by_hand() {
        let s = SparseColMatrix::<Rat>::identity(3);
        let z = vec![Rat::one(), Rat::zero(), Rat::zero()];
        let x = vec![Rat::one(), rat(1, 100), Rat::zero()];
        let r = similarity_interpolation(&s, &[(z.clone(), x.clone())], 1.0).unwrap();
        // L = I + (1/100)·e_1 ⊗ e_0*
        assert_eq!(r.op.entry(1, 0), rat(1, 100));
        assert_eq!(r.op.apply_slice(&z), x);
        assert_eq!(r.update_rank, 1);
    }

    #[test]
    fn interpolation_rejects_dependent_vectors() {
        let s = SparseColMatrix::<Rat>::identity(3);
        let z = vec![Rat::one(), Rat::zero(), Rat::zero()];
        let pairs = vec![
            (z.clone(), z.clone()),
            (z.clone(), vec![Rat::zero(), Rat::one(), Rat::zero()]),
        ];
        assert!(matches!(similarity_interpolation(&s, &pairs, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn interpolation_pins_are_exact_and_low_rank() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let dim = 12;
        // unit upper-triangular start (invertible)
        let mut s = SparseColMatrix::<Rat>::identity(dim);
        for i in 0..dim {
            for j in i + 1..dim {
                if rng.gen_bool(0.3) {
                    s.set_entry(i, j, rat(rng.gen_range(-2i64..=2), 1));
                }
            }
        }
        let pairs: Vec<(Vec<Rat>, Vec<Rat>)> = (0..5)
            .map(|l| {
                let mut z = vec![Rat::zero(); dim];
                z[l] = Rat::one(); // guaranteed independent
                for j in l + 1..dim {
                    z[j] = rat(rng.gen_range(-3i64..=3), rng.gen_range(1..=4i64));
                }
                let x: Vec<Rat> =
                    (0..dim).map(|_| rat(rng.gen_range(-3i64..=3), rng.gen_range(1..=4i64))).collect();
                (z, x)
            })
            .collect();
        let r = similarity_interpolation(&s, &pairs, 1e-6).unwrap();
        for (z, x) in &pairs {
            assert_eq!(r.op.apply_slice(z), *x);
        }
        assert!(r.update_rank <= 5);
        // large corrections: flagged, not failed
        assert!(!r.within_eps);
    }
}
