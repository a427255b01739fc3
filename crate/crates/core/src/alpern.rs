//! Finite tower partitions: split one n-cycle into towers of given
//! aggregate-coprime heights with masses close to prescribed targets.
//!
//! Errors are handled in integer form. With `D` the common denominator of
//! the target masses and `a_j = A_j/D`, the scaled error of multiplicity `k`
//! is `|k·h_j·D − A_j·n|`, and the mass error is that divided by `n·D`.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cycle_ir::{Label, SystemIR};
use crate::rational::{ceil_int, floor_int, lcm_denominators, q_u64, DecU64, Rat, Q};

pub const DEFAULT_N_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlpernError {
    #[error("heights are not coprime in aggregate (gcd {gcd})")]
    Coprimality { gcd: u64 },
    #[error("n = {n} has no representation with every multiplicity positive")]
    Infeasible { n: u64 },
    #[error("tolerance {tol} unachievable; best max mass error is {best}")]
    Tolerance { tol: String, best: String },
    #[error("no feasible n up to the search cap {cap}")]
    SearchBound { cap: u64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlpernSolution {
    pub heights: Vec<u64>,
    pub multiplicities: Vec<u64>,
    pub n: u64,
    pub targets: Vec<Q>,
    /// Realized masses `k_j·h_j/n`.
    pub masses: Vec<Q>,
    pub max_mass_error: Q,
}

/// Wire form `{heights, multiplicities, n, masses, error}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDoc {
    pub heights: Vec<DecU64>,
    pub multiplicities: Vec<DecU64>,
    pub n: DecU64,
    pub masses: Vec<Rat>,
    pub error: Rat,
}

impl From<&AlpernSolution> for SolutionDoc {
    fn from(s: &AlpernSolution) -> Self {
        SolutionDoc {
            heights: s.heights.iter().copied().map(DecU64).collect(),
            multiplicities: s.multiplicities.iter().copied().map(DecU64).collect(),
            n: DecU64(s.n),
            masses: s.masses.iter().cloned().map(Rat).collect(),
            error: Rat(s.max_mass_error.clone()),
        }
    }
}

/// How towers are ordered around the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Wiring {
    /// One tower of each family with copies left, cycling through families.
    #[default]
    RoundRobin,
    /// All towers of family 1, then family 2, and so on.
    FamilyBlocks,
}

/// Validated instance in scaled integer form.
struct Instance {
    heights: Vec<u64>,
    targets: Vec<Q>,
    /// `A_j = a_j·D`.
    scaled_targets: Vec<i128>,
    denom: i128,
}

fn gcd_all(hs: &[u64]) -> u64 {
    hs.iter().fold(0u64, |g, &h| g.gcd(&h))
}

impl Instance {
    fn new(heights: &[u64], masses: &[Q]) -> Result<Self, AlpernError> {
        if heights.is_empty() || heights.len() != masses.len() {
            return Err(AlpernError::Invalid("heights and masses must be nonempty and of equal length".into()));
        }
        if heights.contains(&0) {
            return Err(AlpernError::Invalid("heights must be positive".into()));
        }
        if masses.iter().any(|a| *a <= Q::zero()) {
            return Err(AlpernError::Invalid("masses must be positive".into()));
        }
        if masses.iter().sum::<Q>() != Q::one() {
            return Err(AlpernError::Invalid("masses must sum to 1".into()));
        }
        let g = gcd_all(heights);
        if g != 1 {
            return Err(AlpernError::Coprimality { gcd: g });
        }
        let d = lcm_denominators(masses);
        let denom = d
            .to_i128()
            .filter(|d| *d < 1i128 << 60)
            .ok_or_else(|| AlpernError::Invalid("mass denominators too large".into()))?;
        let scaled_targets = masses
            .iter()
            .map(|a| (a * Q::from_integer(d.clone())).to_integer().to_i128().expect("fits"))
            .collect();
        Ok(Self {
            heights: heights.to_vec(),
            targets: masses.to_vec(),
            scaled_targets,
            denom,
        })
    }

    /// Multiplicity interval for family `j` at scaled error bound `e`
    /// (`None` means unbounded error).
    fn interval(&self, j: usize, n: u64, e: Option<i128>) -> (u64, u64) {
        let h = self.heights[j];
        let kmax = n / h;
        let Some(e) = e else {
            return (1, kmax);
        };
        let step = h as i128 * self.denom;
        let center = self.scaled_targets[j] * n as i128;
        let lo = Integer::div_ceil(&(center - e), &step).max(1);
        let hi = Integer::div_floor(&(center + e), &step).min(kmax as i128);
        if lo > hi {
            (1, 0)
        } else {
            (lo as u64, hi as u64)
        }
    }

    fn scaled_error(&self, j: usize, k: u64, n: u64) -> i128 {
        (k as i128 * self.heights[j] as i128 * self.denom - self.scaled_targets[j] * n as i128).abs()
    }

    /// Lexicographically smallest `k` with `Σ k_j·h_j = n` and every scaled
    /// error at most `e`.
    fn feasible(&self, n: u64, e: Option<i128>) -> Option<Vec<u64>> {
        let m = self.heights.len();
        let iv: Vec<(u64, u64)> = (0..m).map(|j| self.interval(j, n, e)).collect();
        if iv.iter().any(|(lo, hi)| lo > hi) {
            return None;
        }
        let mut suffix_min = vec![0u128; m + 1];
        let mut suffix_max = vec![0u128; m + 1];
        let mut suffix_gcd = vec![0u64; m + 1];
        for j in (0..m).rev() {
            let h = self.heights[j] as u128;
            suffix_min[j] = suffix_min[j + 1] + iv[j].0 as u128 * h;
            suffix_max[j] = suffix_max[j + 1] + iv[j].1 as u128 * h;
            suffix_gcd[j] = suffix_gcd[j + 1].gcd(&self.heights[j]);
        }
        let search = Search {
            heights: &self.heights,
            iv: &iv,
            suffix_min: &suffix_min,
            suffix_max: &suffix_max,
            suffix_gcd: &suffix_gcd,
        };
        let mut dead = HashSet::new();
        let mut ks = Vec::with_capacity(m);
        search.go(0, n, &mut ks, &mut dead).then_some(ks)
    }

    fn solution(&self, n: u64, ks: Vec<u64>) -> AlpernSolution {
        let masses: Vec<Q> = ks
            .iter()
            .zip(&self.heights)
            .map(|(k, h)| Q::new(BigInt::from(k * h), BigInt::from(n)))
            .collect();
        let max_mass_error = masses
            .iter()
            .zip(&self.targets)
            .map(|(m, a)| (m - a).abs())
            .max()
            .expect("nonempty");
        AlpernSolution {
            heights: self.heights.clone(),
            multiplicities: ks,
            n,
            targets: self.targets.clone(),
            masses,
            max_mass_error,
        }
    }
}

struct Search<'a> {
    heights: &'a [u64],
    iv: &'a [(u64, u64)],
    suffix_min: &'a [u128],
    suffix_max: &'a [u128],
    suffix_gcd: &'a [u64],
}

impl Search<'_> {
    /// Depth-first over families in order with ascending multiplicities;
    /// `dead` memoizes `(family, remaining)` states with no completion.
    fn go(&self, j: usize, rem: u64, ks: &mut Vec<u64>, dead: &mut HashSet<(usize, u64)>) -> bool {
        let m = self.heights.len();
        let r = rem as u128;
        if r < self.suffix_min[j] || r > self.suffix_max[j] || rem % self.suffix_gcd[j] != 0 {
            return false;
        }
        let h = self.heights[j];
        let (lo, hi) = self.iv[j];
        if j + 1 == m {
            let k = rem / h;
            if rem % h == 0 && (lo..=hi).contains(&k) {
                ks.push(k);
                return true;
            }
            return false;
        }
        if dead.contains(&(j, rem)) {
            return false;
        }
        // Keep rem − k·h within the suffix range of the remaining families.
        let need_max = self.suffix_max[j + 1];
        let need_min = self.suffix_min[j + 1];
        let k_from = if r > need_max {
            ((r - need_max).div_ceil(h as u128)) as u64
        } else {
            0
        }
        .max(lo);
        let k_to = if r >= need_min {
            ((r - need_min) / h as u128) as u64
        } else {
            return false;
        }
        .min(hi);
        for k in k_from..=k_to {
            ks.push(k);
            if self.go(j + 1, rem - k * h, ks, dead) {
                return true;
            }
            ks.pop();
        }
        dead.insert((j, rem));
        false
    }
}

/// Error-minimal multiplicities with `Σ k_j·h_j = n`, ties broken by the
/// lexicographically smallest `k`; fails if the optimum exceeds `tol`.
pub fn solve_multiplicities(heights: &[u64], masses: &[Q], n: u64, tol: &Q) -> Result<AlpernSolution, AlpernError> {
    let inst = Instance::new(heights, masses)?;
    if (n as i128).checked_mul(inst.denom).map_or(true, |v| v >= 1i128 << 100) {
        return Err(AlpernError::Invalid("n too large for this mass denominator".into()));
    }
    let any = inst.feasible(n, None).ok_or(AlpernError::Infeasible { n })?;
    // Bisection on the integer scaled error; the least feasible bound is
    // attained by some multiplicity, hence it is the optimum.
    let mut hi = (0..heights.len())
        .map(|j| inst.scaled_error(j, any[j], n))
        .max()
        .expect("nonempty");
    let mut lo: i128 = -1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if inst.feasible(n, Some(mid)).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let ks = inst.feasible(n, Some(hi)).expect("bisection invariant");
    let sol = inst.solution(n, ks);
    if sol.max_mass_error > *tol {
        return Err(AlpernError::Tolerance {
            tol: crate::rational::fmt_q(tol),
            best: crate::rational::fmt_q(&sol.max_mass_error),
        });
    }
    Ok(sol)
}

/// Least `n` on the grid `granularity·ℕ`, at or above `Σ h_j` and at most
/// `cap`, for which [`solve_multiplicities`] succeeds within `tol`.
pub fn min_feasible_n(heights: &[u64], masses: &[Q], tol: &Q, granularity: u64, cap: u64) -> Result<u64, AlpernError> {
    let inst = Instance::new(heights, masses)?;
    if granularity == 0 {
        return Err(AlpernError::Invalid("granularity must be positive".into()));
    }
    let floor_n: u64 = heights.iter().sum();
    let mut n = floor_n.div_ceil(granularity) * granularity;
    let tol_scaled = tol * Q::from_integer(BigInt::from(inst.denom));
    while n <= cap {
        let e = floor_int(&(&tol_scaled * q_u64(n)));
        let e = e.to_i128().ok_or_else(|| AlpernError::Invalid("tolerance too large".into()))?;
        let mut jump = n;
        for j in 0..heights.len() {
            let (lo, hi) = inst.interval(j, n, Some(e));
            if lo > hi {
                jump = jump.max(next_open(&inst.targets[j], heights[j], tol, n));
            }
        }
        if jump > n {
            n = jump.div_ceil(granularity) * granularity;
            continue;
        }
        if inst.feasible(n, Some(e)).is_some() {
            return Ok(n);
        }
        n += granularity;
    }
    Err(AlpernError::SearchBound { cap })
}

/// Lower bound on the next `n' > n` where family `(a, h)` has a multiplicity
/// within `tol`.
fn next_open(a: &Q, h: u64, tol: &Q, n: u64) -> u64 {
    let lower = a - tol;
    let upper = a + tol;
    let k0 = if lower > Q::zero() {
        ceil_int(&(lower * q_u64(n) / q_u64(h))).max(BigInt::one())
    } else {
        BigInt::one()
    };
    let bound = ceil_int(&(Q::from_integer(k0 * BigInt::from(h)) / upper));
    bound.to_u64().unwrap_or(u64::MAX).max(n + 1)
}

/// The tower cycle of a solution: `k_j` copies of `Tower(h_j)` labeled
/// `j − 1` (0-based family index), ordered by `wiring`.
pub fn build_tower_cycle(sol: &AlpernSolution, wiring: Wiring) -> SystemIR {
    let towers: Vec<SystemIR> = sol
        .heights
        .iter()
        .enumerate()
        .map(|(j, &h)| SystemIR::tower(h, j as Label).expect("positive height"))
        .collect();
    let mut order = Vec::with_capacity(sol.multiplicities.iter().sum::<u64>() as usize);
    match wiring {
        Wiring::FamilyBlocks => {
            for (t, &k) in towers.iter().zip(&sol.multiplicities) {
                order.extend(std::iter::repeat(t.clone()).take(k as usize));
            }
        }
        Wiring::RoundRobin => {
            let mut left = sol.multiplicities.clone();
            while left.iter().any(|&k| k > 0) {
                for (t, k) in towers.iter().zip(left.iter_mut()) {
                    if *k > 0 {
                        order.push(t.clone());
                        *k -= 1;
                    }
                }
            }
        }
    }
    SystemIR::looped(order).expect("towers")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q_frac, q_int};

    fn halves() -> Vec<Q> {
        vec![q_frac(1, 2), q_frac(1, 2)]
    }

    #[test]
    fn worked_instances() {
        let s = solve_multiplicities(&[2, 3], &halves(), 12, &Q::zero()).unwrap();
        assert_eq!(s.multiplicities, vec![3, 2]);
        assert!(s.max_mass_error.is_zero());
        let s = solve_multiplicities(&[3, 5], &halves(), 17, &q_int(1)).unwrap();
        assert_eq!(s.multiplicities, vec![4, 1]);
        assert_eq!(s.masses, vec![q_frac(12, 17), q_frac(5, 17)]);
        assert_eq!(s.max_mass_error, q_frac(7, 34));
    }

    #[test]
    fn errors() {
        assert_eq!(
            solve_multiplicities(&[2, 4], &halves(), 12, &q_int(1)),
            Err(AlpernError::Coprimality { gcd: 2 })
        );
        assert_eq!(
            solve_multiplicities(&[3, 5], &halves(), 7, &q_int(1)),
            Err(AlpernError::Infeasible { n: 7 })
        );
        assert!(matches!(
            solve_multiplicities(&[3, 5], &halves(), 17, &q_frac(1, 10)),
            Err(AlpernError::Tolerance { ref best, .. }) if best == "7/34"
        ));
        assert!(solve_multiplicities(&[2, 3], &[q_frac(1, 2), q_frac(1, 3)], 12, &q_int(1)).is_err());
    }

    #[test]
    fn min_n_examples() {
        // Scan n = 5..12: n=5 gives k=(1,1) with error 1/10; first exact n is 12.
        for n in 5..12 {
            let r = solve_multiplicities(&[2, 3], &halves(), n, &Q::zero());
            assert!(r.is_err(), "n={n}");
        }
        assert_eq!(min_feasible_n(&[2, 3], &halves(), &Q::zero(), 1, DEFAULT_N_CAP).unwrap(), 12);
        assert_eq!(min_feasible_n(&[2, 3], &halves(), &q_frac(1, 10), 1, DEFAULT_N_CAP).unwrap(), 5);
        assert_eq!(min_feasible_n(&[2, 3], &halves(), &q_int(1), 1, DEFAULT_N_CAP).unwrap(), 5);
        assert_eq!(
            min_feasible_n(&[3, 5], &halves(), &Q::zero(), 1, 20),
            Err(AlpernError::SearchBound { cap: 20 })
        );
    }

    #[test]
    fn cycle_layouts() {
        let s = solve_multiplicities(&[2, 3], &halves(), 12, &Q::zero()).unwrap();
        let ir = build_tower_cycle(&s, Wiring::RoundRobin);
        assert_eq!(ir.len(), 12);
        assert_eq!(ir.label_count(0), 6);

        let s = AlpernSolution {
            heights: vec![2, 3],
            multiplicities: vec![2, 1],
            n: 7,
            targets: halves(),
            masses: vec![q_frac(4, 7), q_frac(3, 7)],
            max_mass_error: q_frac(1, 14),
        };
        // Family ids 1,2 are labels 0,1.
        assert_eq!(build_tower_cycle(&s, Wiring::RoundRobin).stream(0, 7), vec![0, 0, 1, 1, 1, 0, 0]);
        assert_eq!(build_tower_cycle(&s, Wiring::FamilyBlocks).stream(0, 7), vec![0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn single_family() {
        let s = solve_multiplicities(&[1], &[q_int(1)], 9, &Q::zero()).unwrap();
        assert_eq!(s.multiplicities, vec![9]);
        let ir = build_tower_cycle(&s, Wiring::RoundRobin);
        assert_eq!(ir.len(), 9);
        assert_eq!(ir.label_space(), 1);
    }

    #[test]
    fn solution_doc_shape() {
        let s = solve_multiplicities(&[2, 3], &halves(), 12, &Q::zero()).unwrap();
        let json = serde_json::to_string(&SolutionDoc::from(&s)).unwrap();
        assert_eq!(
            json,
            r#"{"heights":["2","3"],"multiplicities":["3","2"],"n":"12","masses":["1/2","1/2"],"error":"0/1"}"#
        );
    }
}
