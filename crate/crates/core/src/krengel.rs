//! Tower witness for slow norm convergence.
//!
//! Families `X_1..X_J` of towers with prime heights `h(1) < … < h(J)` and
//! masses `a_j ∝ 2^{-j}` are laid on one cycle; `f = χ_{X_1}`. On the tall
//! families `C_j = X_{j+1} ∪ … ∪ X_J` the average `f_{h(j)}` vanishes except
//! on the top `h(j)` floors, so `‖f_{h(j)} − a‖₁` stays of order `a·μ(C_j)`
//! while `ψ(h(j))` has already dropped far below it.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::alpern::{self, AlpernError, AlpernSolution, Wiring};
use crate::check::{Check, Relation};
use crate::cycle_ir::{Label, SystemIR};
use crate::rates::{RateError, RateFunction};
use crate::rational::{ceil_int, q_int, q_u64, Q};
use crate::windows::{l1_norm_deviation, window_stats, LabelSet};

pub const DEFAULT_HEIGHT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KrengelError {
    #[error("need at least 2 tower families, got {0}")]
    TooFewFamilies(usize),
    #[error("growth targets: expected {expected} positive values, got {got}")]
    BadGrowth { expected: usize, got: usize },
    #[error("height for family {j} exceeds the cap {cap} (needs at least {needed})")]
    PlanTooLarge { j: usize, cap: u64, needed: String },
    #[error("plan invariant failed: {0}")]
    PlanCheck(Check),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Alpern(#[from] AlpernError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KrengelPlan {
    pub rate: RateFunction,
    /// `a_j = 2^{-j}/(1 − 2^{-J})`, index `j − 1`.
    pub masses: Vec<Q>,
    /// Strictly increasing primes.
    pub heights: Vec<u64>,
    /// Growth targets `M_j`.
    pub growth: Vec<Q>,
    /// `eps_j = Σ_{i>j} a_i/h(i)` from the target masses.
    pub eps: Vec<Q>,
}

impl KrengelPlan {
    pub fn families(&self) -> usize {
        self.heights.len()
    }
}

/// `M_j = j`.
pub fn default_growth(families: usize) -> Vec<Q> {
    (1..=families as i64).map(q_int).collect()
}

/// `a_j = 2^{J−j}/(2^J − 1)` for `j = 1..J`.
pub fn renormalized_masses(families: usize) -> Vec<Q> {
    let total: BigInt = (BigInt::one() << families) - 1;
    (1..=families)
        .map(|j| Q::new(BigInt::one() << (families - j), total.clone()))
        .collect()
}

/// `Σ_{i>j} a_i/h(i)` for every `j` (last entry 0).
pub fn tail_eps(masses: &[Q], heights: &[u64]) -> Vec<Q> {
    let mut eps = vec![Q::zero(); masses.len()];
    for j in (0..masses.len().saturating_sub(1)).rev() {
        eps[j] = &eps[j + 1] + &masses[j + 1] / q_u64(heights[j + 1]);
    }
    eps
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    // These bases are deterministic for all 64-bit n.
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn next_prime_within(from: u64, cap: u64) -> Option<u64> {
    (from.max(2)..=cap).find(|&p| is_prime(p))
}

/// Chooses heights so that every plan condition holds by construction, then
/// re-checks them independently with [`check_plan`].
pub fn select_heights(
    rate: &RateFunction,
    families: usize,
    growth: Option<Vec<Q>>,
    height_cap: u64,
) -> Result<KrengelPlan, KrengelError> {
    if families < 2 {
        return Err(KrengelError::TooFewFamilies(families));
    }
    let growth = growth.unwrap_or_else(|| default_growth(families));
    if growth.len() != families || growth.iter().any(|m| *m <= Q::zero()) {
        return Err(KrengelError::BadGrowth {
            expected: families,
            got: growth.len(),
        });
    }
    let masses = renormalized_masses(families);
    let too_large = |j: usize, needed: String| KrengelError::PlanTooLarge {
        j,
        cap: height_cap,
        needed,
    };
    // Rate condition: ψ̄(h) ≤ a_j/(2·M_j).
    let rate_cond = |j: usize| -> Result<u64, KrengelError> {
        let y = &masses[j] / (q_int(2) * &growth[j]);
        rate.threshold_at_most(&y)
            .map_err(|_| too_large(j + 1, "beyond u64".into()))
    };
    let mut heights: Vec<u64> = Vec::with_capacity(families);
    for j in 0..families {
        let mut bound = BigInt::from(rate_cond(j)?);
        if let Some(&prev) = heights.last() {
            let hp = q_u64(prev);
            // Decay: a_{j+1}/h(j+1) ≤ a_j/(2·h(j)).
            let decay = ceil_int(&(q_int(2) * &hp * &masses[j] / &masses[j - 1]));
            // Sufficient for the tail condition at the previous level.
            let psi_low = rate.eval_lower(prev)?;
            let tail_cond = ceil_int(&(q_int(2) * &growth[j - 1] * &masses[j] * &hp / psi_low));
            bound = bound.max(decay).max(tail_cond).max(BigInt::from(prev + 1));
        }
        let start = bound
            .to_u64()
            .filter(|&b| b <= height_cap)
            .ok_or_else(|| too_large(j + 1, bound.to_string()))?;
        let h = next_prime_within(start, height_cap).ok_or_else(|| too_large(j + 1, start.to_string()))?;
        heights.push(h);
    }
    let eps = tail_eps(&masses, &heights);
    let plan = KrengelPlan {
        rate: rate.clone(),
        masses,
        heights,
        growth,
        eps,
    };
    if let Some(c) = check_plan(&plan)?.into_iter().find(|c| !c.passed()) {
        return Err(KrengelError::PlanCheck(c));
    }
    Ok(plan)
}

/// Every plan invariant as an exact check: primality and strict growth of
/// heights, the rate condition at every level, tail condition and decay below `J`.
pub fn check_plan(plan: &KrengelPlan) -> Result<Vec<Check>, KrengelError> {
    let mut out = Vec::new();
    let eps = tail_eps(&plan.masses, &plan.heights);
    for (idx, &h) in plan.heights.iter().enumerate() {
        let j = idx as u64 + 1;
        let prime = if is_prime(h) { Q::one() } else { Q::zero() };
        out.push(Check::new(j, "height is prime", prime, Relation::Ge, Q::one()));
        if idx > 0 {
            out.push(Check::new(j, "heights increase", q_u64(h), Relation::Gt, q_u64(plan.heights[idx - 1])));
        }
        let a = &plan.masses[idx];
        let m = &plan.growth[idx];
        out.push(Check::new(
            j,
            "rate: psi_up(h) <= a_j/(2 M_j)",
            plan.rate.eval(h)?,
            Relation::Le,
            a / (q_int(2) * m),
        ));
        if idx + 1 < plan.heights.len() {
            out.push(Check::new(
                j,
                "tail: M_j eps_j h <= psi_low(h)",
                m * &eps[idx] * q_u64(h),
                Relation::Le,
                plan.rate.eval_lower(h)?,
            ));
            out.push(Check::new(
                j,
                "decay: a_{j+1}/h(j+1) <= a_j/(2 h(j))",
                &plan.masses[idx + 1] / q_u64(plan.heights[idx + 1]),
                Relation::Le,
                a / (q_int(2) * q_u64(h)),
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct KrengelWitness {
    pub plan: KrengelPlan,
    pub solution: AlpernSolution,
    pub wiring: Wiring,
    pub system: SystemIR,
    /// Realized mass of `X_1`, the constant compared against.
    pub a: Q,
}

pub fn build_witness(plan: &KrengelPlan, tol: &Q, wiring: Wiring, n_cap: u64) -> Result<KrengelWitness, KrengelError> {
    let n = alpern::min_feasible_n(&plan.heights, &plan.masses, tol, 1, n_cap)?;
    let solution = alpern::solve_multiplicities(&plan.heights, &plan.masses, n, tol)?;
    let system = alpern::build_tower_cycle(&solution, wiring);
    let a = solution.masses[0].clone();
    Ok(KrengelWitness {
        plan: plan.clone(),
        solution,
        wiring,
        system,
        a,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KrengelRow {
    pub j: usize,
    pub height: u64,
    /// Realized `Σ_{i>j} μ(X_i)/h(i)`.
    pub eps: Q,
    pub eps_h: Q,
    pub mass_c: Q,
    /// ∫_{C_j} f_{h(j)} dμ.
    pub int_on_c: Q,
    /// μ{x ∈ C_j : f_{h(j)}(x) > 0}.
    pub nonzero_mass_on_c: Q,
    /// ∫_{C_j} |f_{h(j)} − a| dμ.
    pub l1_on_c: Q,
    /// a·μ(C_j) − eps_j·h(j).
    pub chain_bound: Q,
    /// a_j/4 with renormalized a_j.
    pub tail_bound: Q,
    /// ‖f_{h(j)} − a‖₁.
    pub l1_total: Q,
    pub psi: Q,
    pub ratio: Q,
    pub target: Q,
}

impl KrengelRow {
    pub fn checks(&self) -> Vec<Check> {
        let j = self.j as u64;
        vec![
            Check::new(j, "int_C f_N <= eps_j h(j)", self.int_on_c.clone(), Relation::Le, self.eps_h.clone()),
            Check::new(
                j,
                "mass{f_N > 0} on C <= eps_j h(j)",
                self.nonzero_mass_on_c.clone(),
                Relation::Le,
                self.eps_h.clone(),
            ),
            Check::new(
                j,
                "int_C |f_N - a| >= a mu(C) - eps_j h(j)",
                self.l1_on_c.clone(),
                Relation::Ge,
                self.chain_bound.clone(),
            ),
            Check::new(
                j,
                "a mu(C) - eps_j h(j) > tail_bound",
                self.chain_bound.clone(),
                Relation::Gt,
                self.tail_bound.clone(),
            ),
            Check::new(j, "||f_N - a|| / psi_up >= M_j", self.ratio.clone(), Relation::Ge, self.target.clone()),
        ]
    }
}

fn row(w: &KrengelWitness, idx: usize) -> Result<KrengelRow, KrengelError> {
    let plan = &w.plan;
    let fam = plan.families();
    let h = plan.heights[idx];
    let sys = &w.system;
    let f = LabelSet::of([0]);
    let c_set = LabelSet::of((idx + 1..fam).map(|i| i as Label));
    let eps = (idx + 1..fam)
        .map(|i| &w.solution.masses[i] / q_u64(plan.heights[i]))
        .sum::<Q>();
    let eps_h = &eps * q_u64(h);
    let zero = window_stats(sys, &f, &c_set, h, &Q::zero(), &Q::zero());
    let around_a = window_stats(sys, &f, &c_set, h, &w.a, &Q::zero());
    let mass_c = zero.restriction_mass.clone();
    let chain_bound = &w.a * &mass_c - &eps_h;
    let l1_total = l1_norm_deviation(sys, &f, h, &w.a);
    let psi = plan.rate.eval(h)?;
    let ratio = &l1_total / &psi;
    Ok(KrengelRow {
        j: idx + 1,
        height: h,
        eps,
        eps_h,
        int_on_c: zero.l1_deviation.clone(),
        nonzero_mass_on_c: &zero.restriction_mass - &zero.measure_within,
        mass_c,
        l1_on_c: around_a.l1_deviation,
        chain_bound,
        tail_bound: &plan.masses[idx] / q_int(4),
        l1_total,
        psi,
        ratio,
        target: plan.growth[idx].clone(),
    })
}

/// Rows `j = 1..J−1` with every quantity of the inequality chain. Rows are
/// computed concurrently; order is by `j`.
pub fn krengel_rows(w: &KrengelWitness) -> Result<Vec<KrengelRow>, KrengelError> {
    (0..w.plan.families() - 1)
        .into_par_iter()
        .map(|idx| row(w, idx))
        .collect()
}

/// All row checks; the caller decides whether any failure is fatal.
pub fn verify_krengel(w: &KrengelWitness) -> Result<(Vec<KrengelRow>, Vec<Check>), KrengelError> {
    let rows = krengel_rows(w)?;
    let checks = rows.iter().flat_map(KrengelRow::checks).collect();
    Ok((rows, checks))
}
