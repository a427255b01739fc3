//! Exact Birkhoff window statistics over a single-cycle system.
//!
//! For a start atom `x` the window sum is `w(x) = Σ_{i=1..N} f(T^i x)`, so
//! the window begins at the successor of `x`. Windows wrap around the cycle.
//! Statistics aggregate over start atoms whose own label lies in the
//! restriction set.
//!
//! The engine keeps three run cursors (`x`, `x+1`, `x+N+1`) and advances
//! them jointly in stretches where all three labels are constant. Inside a
//! stretch the window sums form an arithmetic progression with step in
//! {-1, 0, 1}, which is counted and summed in closed form with integers.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::cycle_ir::{Label, SystemIR};
use crate::rational::{q_u64, Q};

/// Start positions per parallel chunk.
const PAR_CHUNK: u64 = 1 << 18;

/// Largest cycle the brute-force oracle will walk.
pub const ORACLE_MAX_LEN: u64 = 100_000;

/// A set of component labels: the observable `f = χ_A` or a restriction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet(BTreeSet<Label>);

impl LabelSet {
    pub fn of(labels: impl IntoIterator<Item = Label>) -> Self {
        Self(labels.into_iter().collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Labels `0..space`.
    pub fn all(space: usize) -> Self {
        Self::of(0..space as Label)
    }

    pub fn contains(&self, l: Label) -> bool {
        self.0.contains(&l)
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }

    /// Atoms of `ir` carrying a label in the set.
    pub fn count_in(&self, ir: &SystemIR) -> u64 {
        self.iter().map(|l| ir.label_count(l)).sum()
    }

    fn mask(&self) -> Vec<bool> {
        let max = self.0.iter().next_back().map_or(0, |&m| m as usize + 1);
        let mut v = vec![false; max];
        for l in &self.0 {
            v[*l as usize] = true;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowReport {
    pub n: u64,
    pub c: Q,
    pub eps: Q,
    /// μ(R), with atom mass `1/L` of the scanned system.
    pub restriction_mass: Q,
    /// μ{x ∈ R : |f_N(x) − c| ≤ eps}.
    pub measure_within: Q,
    /// ∫_R |f_N − c| dμ.
    pub l1_deviation: Q,
    /// Signed extremes of `f_N − c` over R; `None` when R is empty.
    pub min_dev: Option<Q>,
    pub max_dev: Option<Q>,
}

/// Integer band `|w·qc − pc·N| ≤ half_width`.
#[derive(Debug, Clone)]
struct Band {
    lo: BigInt,
    hi: BigInt,
}

impl Band {
    /// `|w/N − c| ≤ eps` (or `< eps` when `strict`) in integer form.
    fn new(n: u64, c: &Q, eps: &Q, strict: bool) -> Self {
        let (pc, qc) = (c.numer(), c.denom());
        let (pe, qe) = (eps.numer(), eps.denom());
        let nn = BigInt::from(n);
        let target = pc * &nn;
        // Real half-width B = pe·N·qc/qe; LHS is an integer.
        let b_num = pe * &nn * qc;
        let half = if strict {
            b_num.div_ceil(qe) - 1
        } else {
            b_num.div_floor(qe)
        };
        if half.is_negative() {
            return Self {
                lo: BigInt::one(),
                hi: BigInt::zero(),
            };
        }
        let lo = (&target - &half).div_ceil(qc);
        let hi = (&target + &half).div_floor(qc);
        Self { lo, hi }
    }

    /// How many integers of `[a, b]` fall in the band.
    fn count(&self, a: &BigInt, b: &BigInt) -> BigInt {
        let lo = a.max(&self.lo);
        let hi = b.min(&self.hi);
        if lo > hi {
            BigInt::zero()
        } else {
            hi - lo + 1
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Acc {
    in_r: u64,
    within: Vec<BigInt>,
    /// Σ_{x∈R} |w(x)·qc − pc·N|.
    l1_scaled: BigInt,
    min_w: Option<BigInt>,
    max_w: Option<BigInt>,
}

impl Acc {
    fn new(bands: usize) -> Self {
        Self {
            within: vec![BigInt::zero(); bands],
            ..Default::default()
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        self.in_r += other.in_r;
        for (a, b) in self.within.iter_mut().zip(other.within) {
            *a += b;
        }
        self.l1_scaled += other.l1_scaled;
        self.min_w = opt_min(self.min_w, other.min_w);
        self.max_w = opt_max(self.max_w, other.max_w);
        self
    }
}

fn opt_min(a: Option<BigInt>, b: Option<BigInt>) -> Option<BigInt> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn opt_max(a: Option<BigInt>, b: Option<BigInt>) -> Option<BigInt> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Σ_{v=a..b} |v·q − k| for integers `a ≤ b`, `q > 0`.
fn sum_abs_affine(a: &BigInt, b: &BigInt, q: &BigInt, k: &BigInt) -> BigInt {
    // Σ_{v=a..b} (v·q − k) over a range where the sign is fixed.
    let signed_sum = |lo: &BigInt, hi: &BigInt| -> BigInt {
        let cnt = hi - lo + 1;
        let sum_v = (lo + hi) * &cnt / 2;
        sum_v * q - cnt * k
    };
    // Values v ≤ split give v·q − k ≤ 0.
    let split = k.div_floor(q);
    let mut total = BigInt::zero();
    if a <= &split {
        let hi = b.min(&split);
        total -= signed_sum(a, hi);
    }
    let lo2 = a.max(&(&split + 1)).clone();
    if lo2 <= *b {
        total += signed_sum(&lo2, b);
    }
    total
}

struct Scan<'a> {
    f: Vec<bool>,
    r: Vec<bool>,
    qc: &'a BigInt,
    target: BigInt,
    bands: &'a [Band],
}

impl Scan<'_> {
    fn f(&self, l: Label) -> bool {
        self.f.get(l as usize).copied().unwrap_or(false)
    }

    fn r(&self, l: Label) -> bool {
        self.r.get(l as usize).copied().unwrap_or(false)
    }

    /// Folds `k` consecutive start atoms in R with window sums
    /// `w, w+d, …, w+(k−1)d`.
    fn fold_progression(&self, acc: &mut Acc, w: &BigInt, d: i64, k: u64) {
        let last = w + BigInt::from(d) * BigInt::from(k - 1);
        let (a, b) = if d >= 0 { (w.clone(), last) } else { (last, w.clone()) };
        acc.in_r += k;
        if d == 0 {
            let kk = BigInt::from(k);
            for (slot, band) in acc.within.iter_mut().zip(self.bands) {
                if band.lo <= *w && *w <= band.hi {
                    *slot += &kk;
                }
            }
            acc.l1_scaled += (w * self.qc - &self.target).abs() * kk;
        } else {
            for (slot, band) in acc.within.iter_mut().zip(self.bands) {
                *slot += band.count(&a, &b);
            }
            acc.l1_scaled += sum_abs_affine(&a, &b, self.qc, &self.target);
        }
        acc.min_w = opt_min(acc.min_w.take(), Some(a));
        acc.max_w = opt_max(acc.max_w.take(), Some(b));
    }

    /// Start atoms `start..start+count` with remainder window length `rem`
    /// (`0 < rem < L`) and `base` = full-period contribution.
    fn run_range(&self, ir: &SystemIR, start: u64, count: u64, rem: u64, base: &BigInt) -> Acc {
        let mut acc = Acc::new(self.bands.len());
        let mut xs = ir.runs_from(start);
        let mut tail = ir.runs_from(start + 1);
        let mut head = tail.clone();
        let mut w0 = 0u64;
        head.consume(rem, &mut |l, k| {
            if self.f(l) {
                w0 += k;
            }
        });
        let mut w = base + BigInt::from(w0);
        let mut left = count;
        while left > 0 {
            let (lx, kx) = xs.peek();
            let (lt, kt) = tail.peek();
            let (lh, kh) = head.peek();
            let k = kx.min(kt).min(kh).min(left);
            let d = self.f(lh) as i64 - self.f(lt) as i64;
            if self.r(lx) {
                self.fold_progression(&mut acc, &w, d, k);
            }
            if d != 0 {
                w += BigInt::from(d) * BigInt::from(k);
            }
            xs.advance(k);
            tail.advance(k);
            head.advance(k);
            left -= k;
        }
        acc
    }
}

fn scan(ir: &SystemIR, f: &LabelSet, r: &LabelSet, n: u64, c: &Q, bands: &[Band]) -> Acc {
    let l = ir.len();
    let total_f = f.count_in(ir);
    let (full, rem) = (n / l, n % l);
    let base = BigInt::from(full) * BigInt::from(total_f);
    let sc = Scan {
        f: f.mask(),
        r: r.mask(),
        qc: c.denom(),
        target: c.numer() * BigInt::from(n),
        bands,
    };
    if rem == 0 {
        // Every window is a whole number of periods.
        let in_r = r.count_in(ir);
        let mut acc = Acc::new(bands.len());
        if in_r > 0 {
            sc.fold_progression(&mut acc, &base, 0, in_r);
        }
        return acc;
    }
    let chunks: Vec<(u64, u64)> = (0..l.div_ceil(PAR_CHUNK))
        .map(|i| {
            let s = i * PAR_CHUNK;
            (s, PAR_CHUNK.min(l - s))
        })
        .collect();
    chunks
        .into_par_iter()
        .map(|(s, cnt)| sc.run_range(ir, s, cnt, rem, &base))
        .reduce(|| Acc::new(bands.len()), Acc::merge)
}

fn dev_of(w: &BigInt, n: u64, c: &Q) -> Q {
    Q::new(w.clone(), BigInt::from(n)) - c
}

/// Window statistics of `f_N` against target `c` with tolerance `eps`,
/// aggregated over start atoms labeled in `restriction`.
pub fn window_stats(ir: &SystemIR, f: &LabelSet, restriction: &LabelSet, n: u64, c: &Q, eps: &Q) -> WindowReport {
    assert!(n >= 1, "window length must be positive");
    let bands = [Band::new(n, c, eps, false)];
    let acc = scan(ir, f, restriction, n, c, &bands);
    let l = q_u64(ir.len());
    let within = Q::from_integer(acc.within[0].clone()) / &l;
    let l1 = Q::new(acc.l1_scaled, BigInt::from(ir.len()) * BigInt::from(n) * c.denom());
    WindowReport {
        n,
        c: c.clone(),
        eps: eps.clone(),
        restriction_mass: q_u64(acc.in_r) / &l,
        measure_within: within,
        l1_deviation: l1,
        min_dev: acc.min_w.as_ref().map(|w| dev_of(w, n, c)),
        max_dev: acc.max_w.as_ref().map(|w| dev_of(w, n, c)),
    }
}

/// ‖f_N − a‖₁ over the whole system.
pub fn l1_norm_deviation(ir: &SystemIR, f: &LabelSet, n: u64, a: &Q) -> Q {
    let all = LabelSet::all(ir.label_space());
    window_stats(ir, f, &all, n, a, &Q::zero()).l1_deviation
}

/// μ{x ∈ R : |f_N(x) − c| ≥ theta}.
pub fn exceedance_mass(ir: &SystemIR, f: &LabelSet, restriction: &LabelSet, n: u64, c: &Q, theta: &Q) -> Q {
    assert!(n >= 1, "window length must be positive");
    let bands = [Band::new(n, c, theta, true)];
    let acc = scan(ir, f, restriction, n, c, &bands);
    Q::new(BigInt::from(acc.in_r) - &acc.within[0], BigInt::from(ir.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("brute-force oracle refuses cycles longer than {ORACLE_MAX_LEN} (got {0})")]
pub struct OracleTooLarge(pub u64);

/// Naive O(L·N) reference for [`window_stats`]: materializes the labels and
/// sums every window term by term with rational comparisons.
pub fn brute_force_oracle(
    ir: &SystemIR,
    f: &LabelSet,
    restriction: &LabelSet,
    n: u64,
    c: &Q,
    eps: &Q,
) -> Result<WindowReport, OracleTooLarge> {
    let l = ir.len();
    if l > ORACLE_MAX_LEN {
        return Err(OracleTooLarge(l));
    }
    let labels = ir.stream(0, l as usize);
    let mut in_r = 0u64;
    let mut within = 0u64;
    let mut l1 = Q::zero();
    let mut min_dev: Option<Q> = None;
    let mut max_dev: Option<Q> = None;
    let nq = q_u64(n);
    for x in 0..l {
        if !restriction.contains(labels[x as usize]) {
            continue;
        }
        in_r += 1;
        let mut w = 0u64;
        for i in 1..=n {
            if f.contains(labels[((x + i) % l) as usize]) {
                w += 1;
            }
        }
        let dev = q_u64(w) / &nq - c;
        if dev.abs() <= *eps {
            within += 1;
        }
        l1 += dev.abs();
        min_dev = Some(match min_dev {
            Some(m) if m <= dev => m,
            _ => dev.clone(),
        });
        max_dev = Some(match max_dev {
            Some(m) if m >= dev => m,
            _ => dev,
        });
    }
    let lq = q_u64(l);
    Ok(WindowReport {
        n,
        c: c.clone(),
        eps: eps.clone(),
        restriction_mass: q_u64(in_r) / &lq,
        measure_within: q_u64(within) / &lq,
        l1_deviation: l1 / &lq,
        min_dev,
        max_dev,
    })
}

/// Mean of `f_N` over all atoms; equals `S/L` for every `N`.
pub fn mean_window(ir: &SystemIR, f: &LabelSet, n: u64) -> Q {
    let all = LabelSet::all(ir.label_space());
    let rep = window_stats(ir, f, &all, n, &Q::zero(), &Q::zero());
    // f_N ≥ 0, so with c = 0 the L1 deviation is the mean itself.
    rep.l1_deviation
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q_frac, q_int};

    fn cycle(labels: &[Label]) -> SystemIR {
        SystemIR::looped(labels.iter().map(|&l| SystemIR::tower(1, l).unwrap()).collect()).unwrap()
    }

    fn both(ir: &SystemIR, f: &LabelSet, r: &LabelSet, n: u64, c: &Q, eps: &Q) -> WindowReport {
        let fast = window_stats(ir, f, r, n, c, eps);
        let slow = brute_force_oracle(ir, f, r, n, c, eps).unwrap();
        assert_eq!(fast, slow, "engine and oracle disagree at N={n}");
        fast
    }

    #[test]
    fn worked_example() {
        // Labels 1,0,0,1: window sums after each atom are 1,0,1,2.
        let ir = cycle(&[1, 0, 0, 1]);
        let f = LabelSet::of([1]);
        let all = LabelSet::all(2);
        let rep = both(&ir, &f, &all, 2, &q_frac(1, 2), &Q::zero());
        assert_eq!(rep.measure_within, q_frac(1, 2));
        assert_eq!(rep.l1_deviation, q_frac(1, 4));
        assert_eq!(rep.min_dev, Some(q_frac(-1, 2)));
        assert_eq!(rep.max_dev, Some(q_frac(1, 2)));
        assert_eq!(l1_norm_deviation(&ir, &f, 2, &q_frac(1, 2)), q_frac(1, 4));
    }

    #[test]
    fn full_period_window_is_the_mean() {
        let ir = SystemIR::splice(&cycle(&[0, 1, 1, 0, 2]), &cycle(&[1, 2]), 3, 1).unwrap();
        let f = LabelSet::of([1]);
        let mean = q_frac(3, 7);
        let r = LabelSet::of([0, 2]);
        let rep = both(&ir, &f, &r, 7, &mean, &Q::zero());
        assert_eq!(rep.measure_within, rep.restriction_mass);
        assert_eq!(rep.restriction_mass, q_frac(4, 7));
        assert!(rep.l1_deviation.is_zero());
        assert_eq!(l1_norm_deviation(&ir, &f, 14, &mean), Q::zero());
    }

    #[test]
    fn empty_observable() {
        let ir = cycle(&[0, 1, 1]);
        let rep = both(&ir, &LabelSet::empty(), &LabelSet::of([1]), 5, &Q::zero(), &Q::zero());
        assert_eq!(rep.measure_within, q_frac(2, 3));
    }

    #[test]
    fn constant_deviation() {
        let ir = cycle(&[1, 1, 0, 0]);
        assert_eq!(l1_norm_deviation(&ir, &LabelSet::of([1]), 1, &q_frac(1, 2)), q_frac(1, 2));
    }

    #[test]
    fn empty_restriction_has_no_extremes() {
        let ir = cycle(&[0, 0, 1]);
        let rep = both(&ir, &LabelSet::of([0]), &LabelSet::of([5]), 2, &Q::zero(), &Q::zero());
        assert_eq!(rep.min_dev, None);
        assert!(rep.restriction_mass.is_zero());
    }

    #[test]
    fn wrap_formula_for_long_windows() {
        let ir = SystemIR::refine(&cycle(&[1, 0, 0, 1, 1]), 2).unwrap();
        let f = LabelSet::of([1]);
        let all = LabelSet::all(2);
        for n in [9, 10, 11, 23, 37] {
            both(&ir, &f, &all, n, &q_frac(3, 5), &q_frac(1, 20));
        }
    }

    #[test]
    fn splice_example_against_oracle() {
        let ir = SystemIR::splice(&cycle(&[0, 0, 0]), &cycle(&[1, 1]), 1, 0).unwrap();
        let f = LabelSet::of([0]);
        both(&ir, &f, &LabelSet::all(2), 3, &q_frac(3, 5), &q_frac(1, 3));
    }

    #[test]
    fn exceedance_matches_direct_count() {
        let ir = cycle(&[1, 0, 0, 1]);
        let f = LabelSet::of([1]);
        let all = LabelSet::all(2);
        // Sums 1,0,1,2 with N=2 -> f_N = 1/2,0,1/2,1; |f_N - 1/2| >= 1/2 twice.
        assert_eq!(exceedance_mass(&ir, &f, &all, 2, &q_frac(1, 2), &q_frac(1, 2)), q_frac(1, 2));
        assert_eq!(exceedance_mass(&ir, &f, &all, 2, &q_frac(1, 2), &Q::zero()), q_int(1));
    }

    #[test]
    fn mean_identity() {
        let ir = SystemIR::splice(&cycle(&[0, 1, 1, 0, 2]), &cycle(&[1, 2, 2]), 2, 0).unwrap();
        for n in 1..20 {
            assert_eq!(mean_window(&ir, &LabelSet::of([2]), n), q_frac(3, 8));
        }
    }

    #[test]
    fn sum_abs_affine_matches_loop() {
        for (a, b, q, k) in [(-3i64, 7i64, 3i64, 5i64), (0, 0, 1, 0), (4, 9, 7, 100), (2, 5, 2, -1)] {
            let direct: i64 = (a..=b).map(|v| (v * q - k).abs()).sum();
            let got = sum_abs_affine(&a.into(), &b.into(), &q.into(), &k.into());
            assert_eq!(got, BigInt::from(direct));
        }
    }

    #[test]
    fn oracle_refuses_large() {
        let ir = SystemIR::tower(ORACLE_MAX_LEN + 1, 0).unwrap();
        assert!(brute_force_oracle(&ir, &LabelSet::of([0]), &LabelSet::of([0]), 1, &Q::zero(), &Q::zero()).is_err());
    }
}
