//! Stagewise witness for slow pointwise convergence of `f = χ_{A_0}`.
//!
//! Components `A_0..A_J` start as separate cycles. Stage `j+1` lifts the
//! current merged cycle over `U_j = A_0 ∪ … ∪ A_j` and glues in `A_{j+1}` by
//! one transposition, picks the window length `N_{j+1}` against the rate,
//! and re-checks the near-constancy of `f_{N_i}` on `U_i` at every earlier
//! scale. Lifting by a factor `r` keeps every old window statistic and
//! shrinks the relative mass of the windows a splice can disturb, so
//! doubling `r` until all checks pass always terminates for a large enough
//! factor.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::check::{Check, Relation};
use crate::cycle_ir::{Label, NodeView, SystemIR};
use crate::rates::{RateError, RateFunction};
use crate::rational::{fmt_q, lcm_denominators, q_int, q_u64, Q};
use crate::windows::{exceedance_mass, window_stats, LabelSet};

pub const DEFAULT_MULTIPLIER: u64 = 10;
pub const DEFAULT_RETRY_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PodviginError {
    #[error("invalid components: {0}")]
    Invalid(String),
    #[error("granularity too coarse: component {j} gets {atoms} atom(s), need at least 2")]
    TooCoarse { j: usize, atoms: String },
    #[error("no pending components left")]
    NothingPending,
    #[error("stage {stage}: refinement cap {cap} exceeded; last failure {failure}")]
    RetryCapExceeded { stage: usize, cap: u64, failure: Check },
    #[error("stage {stage}: no splice atom labeled A_{label} away from earlier splice atoms")]
    NoSpliceAtom { stage: usize, label: usize },
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("atom count overflows u64")]
    Overflow,
}

/// Masses of `A_0..A_J` and the base atom granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSpec {
    pub masses: Vec<Q>,
    /// `g` = common denominator × multiplier.
    pub granularity: u64,
}

impl ComponentSpec {
    pub fn new(masses: Vec<Q>, multiplier: u64) -> Result<Self, PodviginError> {
        if masses.len() < 2 {
            return Err(PodviginError::Invalid("need at least A_0 and A_1".into()));
        }
        if masses.iter().any(|m| *m <= Q::zero()) {
            return Err(PodviginError::Invalid("masses must be positive".into()));
        }
        let total: Q = masses.iter().sum();
        if total != Q::one() {
            return Err(PodviginError::Invalid(format!("masses sum to {}, not 1", fmt_q(&total))));
        }
        if multiplier == 0 {
            return Err(PodviginError::Invalid("multiplier must be positive".into()));
        }
        let g = lcm_denominators(&masses) * BigInt::from(multiplier);
        let granularity = g.to_u64().ok_or(PodviginError::Overflow)?;
        let spec = Self { masses, granularity };
        for j in 0..spec.masses.len() {
            let atoms = spec.base_atoms(j);
            if atoms < 2 {
                return Err(PodviginError::TooCoarse {
                    j,
                    atoms: atoms.to_string(),
                });
            }
        }
        Ok(spec)
    }

    /// Index of the last component.
    pub fn last(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn c(&self) -> &Q {
        &self.masses[0]
    }

    /// μ(U_j) = μ(A_0) + … + μ(A_j).
    pub fn mass_u(&self, j: usize) -> Q {
        self.masses[..=j].iter().sum()
    }

    /// `c_j = c/(1 − Σ_{i>j} μ(A_i))`, the mean of `f` on `U_j`.
    pub fn c_j(&self, j: usize) -> Q {
        let tail: Q = self.masses[j + 1..].iter().sum();
        self.c() / (Q::one() - tail)
    }

    fn base_atoms(&self, j: usize) -> u64 {
        (&self.masses[j] * q_u64(self.granularity))
            .to_integer()
            .to_u64()
            .expect("granularity fits")
    }
}

/// `ε_j = (c_j − c)/divisor`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsSchedule {
    pub divisor: Q,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self { divisor: q_int(8) }
    }
}

impl EpsSchedule {
    pub fn eps(&self, spec: &ComponentSpec, j: usize) -> Q {
        (spec.c_j(j) - spec.c()) / &self.divisor
    }
}

/// `μ{x ∈ U_i : |f_{N_i} − c_i| ≤ ε_i} ≥ μ(U_i) − ε_i`, evaluated after
/// `stage`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandCheck {
    pub stage: usize,
    pub i: usize,
    pub n: u64,
    pub c_i: Q,
    pub eps_i: Q,
    pub measure_within: Q,
    pub required: Q,
}

impl BandCheck {
    pub fn to_check(&self) -> Check {
        Check::new(
            self.i as u64,
            format!("band after stage {}: mu(|f_N - c_{}| <= eps) >= mu(U) - eps", self.stage, self.i),
            self.measure_within.clone(),
            Relation::Ge,
            self.required.clone(),
        )
    }

    pub fn margin(&self) -> Q {
        &self.measure_within - &self.required
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub j: usize,
    /// Lift factor applied at this stage.
    pub refine: u64,
    pub splice_left: u64,
    pub splice_right: u64,
    /// Length of the merged cycle after the stage.
    pub length: u64,
    /// Total atoms of the space after the stage.
    pub atoms: u64,
    /// Window length; `None` at the last stage where `c_J = c`.
    pub n: Option<u64>,
    pub c_j: Q,
    pub eps_j: Q,
    /// ψ̄(N_j).
    pub psi: Option<Q>,
    /// `(c_j − c)/j`.
    pub gap_bound: Q,
    pub attempts: u32,
    /// Checks for every `i ≤ j` on the system right after this stage.
    pub bands: Vec<BandCheck>,
}

impl StageRecord {
    pub fn gap_check(&self) -> Option<Check> {
        self.psi.as_ref().map(|psi| {
            Check::new(
                self.j as u64,
                "psi_up(N_j) < (c_j - c)/j",
                psi.clone(),
                Relation::Lt,
                self.gap_bound.clone(),
            )
        })
    }

    pub fn band_min_margin(&self) -> Option<Q> {
        self.bands.iter().map(BandCheck::margin).min()
    }
}

#[derive(Debug, Clone)]
pub struct StageState {
    pub spec: ComponentSpec,
    /// Completed stages; `0` means only `A_0` is merged.
    pub stage: usize,
    /// Product of all lift factors so far.
    pub scale: u64,
    pub merged: SystemIR,
    /// Cycles of `A_{stage+1}..A_J`, lifted to the current scale.
    pub pending: Vec<SystemIR>,
    pub history: Vec<StageRecord>,
    /// Sorted positions in `merged` of every splice atom so far.
    pub splice_atoms: Vec<u64>,
}

impl StageState {
    pub fn total_atoms(&self) -> u64 {
        self.spec.granularity * self.scale
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_empty()
    }
}

pub fn init_components(spec: &ComponentSpec) -> Result<StageState, PodviginError> {
    let cycles = (0..spec.masses.len())
        .map(|j| SystemIR::tower(spec.base_atoms(j), j as Label).expect("positive"))
        .collect::<Vec<_>>();
    let mut it = cycles.into_iter();
    let merged = it.next().expect("A_0");
    Ok(StageState {
        spec: spec.clone(),
        stage: 0,
        scale: 1,
        merged,
        pending: it.collect(),
        history: Vec::new(),
        splice_atoms: Vec::new(),
    })
}

/// Knobs for [`stage`].
#[derive(Debug, Clone)]
pub struct StageParams {
    pub rate: RateFunction,
    pub eps: EpsSchedule,
    /// Largest lift factor tried per stage.
    pub retry_cap: u64,
}

fn u_labels(i: usize) -> LabelSet {
    LabelSet::of(0..=i as Label)
}

fn f_set() -> LabelSet {
    LabelSet::of([0])
}

/// Positions of `images` after an `r`-fold lift of a cycle of length `len`.
fn lift_positions(images: &[u64], len: u64, r: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (0..r).flat_map(|t| images.iter().map(move |p| p + t * len)).collect();
    out.sort_unstable();
    out
}

fn cyclic_dist(a: u64, b: u64, len: u64) -> u64 {
    let d = a.abs_diff(b);
    d.min(len - d)
}

/// Distance from `p` to the nearest of the sorted `images`.
fn nearest_dist(images: &[u64], p: u64, len: u64) -> u64 {
    let i = images.partition_point(|&x| x < p);
    let after = images[i % images.len()];
    let before = images[(i + images.len() - 1) % images.len()];
    cyclic_dist(p, after, len).min(cyclic_dist(p, before, len))
}

/// Leftmost atom labeled `label` at maximal cyclic distance from `images`.
/// `None` if every such atom is itself an image.
pub fn choose_splice_atom(ir: &SystemIR, label: Label, images: &[u64]) -> Option<u64> {
    let len = ir.len();
    let mut runs = Vec::new();
    let mut pos = 0u64;
    ir.for_each_run(0, len, &mut |l, k| {
        if l == label {
            match runs.last_mut() {
                Some((_, e)) if *e + 1 == pos => *e = pos + k - 1,
                _ => runs.push((pos, pos + k - 1)),
            }
        }
        pos += k;
    });
    if images.is_empty() {
        return runs.first().map(|r| r.0);
    }
    // Peaks of the distance function sit at midpoints between neighbours.
    let mut mids: Vec<u64> = Vec::with_capacity(2 * images.len());
    for w in images.windows(2) {
        let m = (w[0] + w[1]) / 2;
        mids.push(m);
        mids.push(m + 1);
    }
    let (last, first) = (images[images.len() - 1], images[0]);
    let wrap_mid = (last + (first + len - last) / 2) % len;
    mids.push(wrap_mid);
    mids.push((wrap_mid + 1) % len);
    mids.sort_unstable();
    let mut best: Option<(u64, u64)> = None;
    for &(s, e) in &runs {
        let lo = mids.partition_point(|&m| m < s);
        let hi = mids.partition_point(|&m| m <= e);
        let cands = [s, e].into_iter().chain(mids[lo..hi].iter().copied());
        for p in cands {
            let d = nearest_dist(images, p, len);
            if d == 0 {
                continue;
            }
            best = match best {
                Some((bd, bp)) if bd > d || (bd == d && bp <= p) => Some((bd, bp)),
                _ => Some((d, p)),
            };
        }
    }
    best.map(|(_, p)| p)
}

fn global_mass(local: &Q, merged_len: u64, total: u64) -> Q {
    local * q_u64(merged_len) / q_u64(total)
}

/// Band check for scale `i` on `merged` (which must contain `U_i`).
pub fn band_check(
    spec: &ComponentSpec,
    eps: &EpsSchedule,
    merged: &SystemIR,
    total_atoms: u64,
    stage: usize,
    i: usize,
    n: u64,
) -> BandCheck {
    let c_i = spec.c_j(i);
    let eps_i = eps.eps(spec, i);
    let rep = window_stats(merged, &f_set(), &u_labels(i), n, &c_i, &eps_i);
    BandCheck {
        stage,
        i,
        n,
        measure_within: global_mass(&rep.measure_within, merged.len(), total_atoms),
        required: spec.mass_u(i) - &eps_i,
        c_i,
        eps_i,
    }
}

struct Attempt {
    merged: SystemIR,
    pending: Vec<SystemIR>,
    images: Vec<u64>,
    record: StageRecord,
}

fn attempt(state: &StageState, params: &StageParams, r: u64) -> Result<Attempt, PodviginError> {
    let spec = &state.spec;
    let j1 = state.stage + 1;
    let old_len = state.merged.len();
    let lifted = if r == 1 {
        state.merged.clone()
    } else {
        SystemIR::refine(&state.merged, r).map_err(|_| PodviginError::Overflow)?
    };
    let pending = state
        .pending
        .iter()
        .map(|p| if r == 1 { Ok(p.clone()) } else { SystemIR::refine(p, r) })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| PodviginError::Overflow)?;
    let images = lift_positions(&state.splice_atoms, old_len, r);
    let comp = &pending[0];
    let p_left = choose_splice_atom(&lifted, state.stage as Label, &images).ok_or(PodviginError::NoSpliceAtom {
        stage: j1,
        label: state.stage,
    })?;
    let p_right = comp.len() - 1;
    let merged = SystemIR::splice(&lifted, comp, p_left, p_right).map_err(|_| PodviginError::Overflow)?;
    let lb = comp.len();
    let mut new_images: Vec<u64> = images.iter().map(|&p| if p > p_left { p + lb } else { p }).collect();
    new_images.push(p_left);
    new_images.push(p_left + lb);
    new_images.sort_unstable();

    let total = state
        .total_atoms()
        .checked_mul(r)
        .ok_or(PodviginError::Overflow)?;
    let c = spec.c();
    let c_j = spec.c_j(j1);
    let eps_j = params.eps.eps(spec, j1);
    let gap_bound = (&c_j - c) / q_u64(j1 as u64);
    let (n, psi) = if j1 < spec.last() {
        let least = params.rate.threshold(&gap_bound)?;
        let q = least.div_ceil(merged.len()).max(1);
        let n = q.checked_mul(merged.len()).ok_or(PodviginError::Overflow)?;
        (Some(n), Some(params.rate.eval(n)?))
    } else {
        (None, None)
    };
    let mut scales: Vec<(usize, u64)> = state
        .history
        .iter()
        .filter_map(|rec| rec.n.map(|n| (rec.j, n)))
        .collect();
    if let Some(n) = n {
        scales.push((j1, n));
    }
    let bands: Vec<BandCheck> = scales
        .par_iter()
        .map(|&(i, n)| band_check(spec, &params.eps, &merged, total, j1, i, n))
        .collect();
    let record = StageRecord {
        j: j1,
        refine: r,
        splice_left: p_left,
        splice_right: p_right,
        length: merged.len(),
        atoms: total,
        n,
        c_j,
        eps_j,
        psi,
        gap_bound,
        attempts: 0,
        bands,
    };
    Ok(Attempt {
        merged,
        pending,
        images: new_images,
        record,
    })
}

/// Runs one stage, doubling the lift factor until every check passes.
pub fn stage(state: &StageState, params: &StageParams) -> Result<StageState, PodviginError> {
    if state.pending.is_empty() {
        return Err(PodviginError::NothingPending);
    }
    let mut r = 1u64;
    let mut tries = 0u32;
    loop {
        tries += 1;
        let att = attempt(state, params, r)?;
        let failure = att
            .record
            .gap_check()
            .into_iter()
            .chain(att.record.bands.iter().map(BandCheck::to_check))
            .find(|c| !c.passed());
        match failure {
            None => {
                let mut record = att.record;
                record.attempts = tries;
                let mut history = state.history.clone();
                history.push(record);
                let mut pending = att.pending;
                pending.remove(0);
                return Ok(StageState {
                    spec: state.spec.clone(),
                    stage: state.stage + 1,
                    scale: state.scale * r,
                    merged: att.merged,
                    pending,
                    history,
                    splice_atoms: att.images,
                });
            }
            Some(check) => {
                if r >= params.retry_cap {
                    return Err(PodviginError::RetryCapExceeded {
                        stage: state.stage + 1,
                        cap: params.retry_cap,
                        failure: check,
                    });
                }
                r = (r * 2).min(params.retry_cap);
            }
        }
    }
}

/// All stages from `A_0` alone to the fully merged space.
pub fn run_all(spec: &ComponentSpec, params: &StageParams) -> Result<StageState, PodviginError> {
    let mut state = init_components(spec)?;
    while !state.is_complete() {
        state = stage(&state, params)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivergenceRow {
    pub j: usize,
    pub n: u64,
    /// `(c_j − c) − ε_j`.
    pub deviation: Q,
    pub psi: Q,
    pub ratio: Q,
    /// μ{x : |f_{N_j}(x) − c| ≥ (c_j − c) − ε_j}.
    pub qualifying_mass: Q,
    pub required_mass: Q,
    /// `j·(1 − ε_j/(c_j − c))`.
    pub ratio_floor: Q,
}

impl DivergenceRow {
    pub fn checks(&self) -> Vec<Check> {
        let j = self.j as u64;
        vec![
            Check::new(
                j,
                "qualifying mass >= mu(U_j) - eps_j",
                self.qualifying_mass.clone(),
                Relation::Ge,
                self.required_mass.clone(),
            ),
            Check::new(
                j,
                "ratio_j > j (1 - eps_j/(c_j - c))",
                self.ratio.clone(),
                Relation::Gt,
                self.ratio_floor.clone(),
            ),
        ]
    }
}

/// Divergence rows for stages `j < J` on a final system covering all of X.
pub fn divergence_rows(
    spec: &ComponentSpec,
    eps: &EpsSchedule,
    rate: &RateFunction,
    system: &SystemIR,
    scales: &[(usize, u64)],
) -> Result<Vec<DivergenceRow>, PodviginError> {
    scales
        .par_iter()
        .map(|&(j, n)| {
            let c = spec.c();
            let gap = spec.c_j(j) - c;
            let eps_j = eps.eps(spec, j);
            let deviation = &gap - &eps_j;
            let all = LabelSet::all(spec.masses.len());
            let qualifying_mass = exceedance_mass(system, &f_set(), &all, n, c, &deviation);
            let psi = rate.eval(n)?;
            Ok(DivergenceRow {
                j,
                n,
                ratio: &deviation / &psi,
                psi,
                qualifying_mass,
                required_mass: spec.mass_u(j) - &eps_j,
                ratio_floor: q_u64(j as u64) * (Q::one() - &eps_j / &gap),
                deviation,
            })
        })
        .collect()
}

pub fn verify_divergence(state: &StageState, rate: &RateFunction, eps: &EpsSchedule) -> Result<Vec<DivergenceRow>, PodviginError> {
    let scales = stage_scales(&state.history);
    divergence_rows(&state.spec, eps, rate, &state.merged, &scales)
}

/// `(j, N_j)` for every stage that has a window length.
pub fn stage_scales(history: &[StageRecord]) -> Vec<(usize, u64)> {
    history.iter().filter_map(|r| r.n.map(|n| (r.j, n))).collect()
}

/// Band checks at every recorded scale on the final system.
pub fn final_bands(spec: &ComponentSpec, eps: &EpsSchedule, system: &SystemIR, scales: &[(usize, u64)]) -> Vec<BandCheck> {
    let stage = spec.last();
    scales
        .par_iter()
        .map(|&(i, n)| band_check(spec, eps, system, system.len(), stage, i, n))
        .collect()
}

/// One splice level recovered from a final IR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpliceLevel {
    pub stage: usize,
    pub refine: u64,
    pub p_left: u64,
    pub p_right: u64,
    pub right_len: u64,
}

/// Unwinds `Splice(Refine?(prev), comp, …)` levels down to the `A_0` cycle.
pub fn splice_levels(ir: &SystemIR) -> Option<Vec<SpliceLevel>> {
    let mut levels = Vec::new();
    let mut node = ir.clone();
    loop {
        match node.view() {
            NodeView::Splice { left, right, p_left, p_right } => {
                let (inner, r) = match left.view() {
                    NodeView::Refine { child, factor } => (child.clone(), factor),
                    _ => (left.clone(), 1),
                };
                levels.push(SpliceLevel {
                    stage: 0,
                    refine: r,
                    p_left,
                    p_right,
                    right_len: right.len(),
                });
                node = inner;
            }
            NodeView::Tower { .. } => break,
            _ => return None,
        }
    }
    levels.reverse();
    for (k, l) in levels.iter_mut().enumerate() {
        l.stage = k + 1;
    }
    Some(levels)
}

/// Structural stage invariants of a final IR: each splice joins an `A_j`
/// atom of the merged cycle to an `A_{j+1}` atom, avoids all earlier splice
/// atoms, and the label masses match the components.
pub fn audit_structure(spec: &ComponentSpec, ir: &SystemIR) -> Vec<Check> {
    let mut out = Vec::new();
    let one = Q::one();
    let Some(levels) = splice_levels(ir) else {
        out.push(Check::new(0, "IR has the staged splice shape", Q::zero(), Relation::Ge, one));
        return out;
    };
    out.push(Check::new(
        0,
        "number of stages = J",
        q_u64(levels.len() as u64),
        Relation::Ge,
        q_u64(spec.last() as u64),
    ));
    // Rebuild each intermediate merged cycle bottom-up.
    let mut node = match splice_levels_base(ir) {
        Some(n) => n,
        None => return out,
    };
    let mut images: Vec<u64> = Vec::new();
    let mut chain = Vec::new();
    collect_splices(ir, &mut chain);
    chain.reverse();
    for (lvl, splice) in levels.iter().zip(chain) {
        let j = lvl.stage;
        let lifted = if lvl.refine == 1 { node.clone() } else { SystemIR::refine(&node, lvl.refine).expect("fits") };
        images = lift_positions(&images, node.len(), lvl.refine);
        let left_label = lifted.label_at(lvl.p_left) as usize;
        let NodeView::Splice { right, .. } = splice.view() else { unreachable!() };
        let right_label = right.label_at(lvl.p_right) as usize;
        let row = j as u64;
        out.push(Check::new(
            row,
            format!("stage {j}: left splice atom labeled A_{}", j - 1),
            bool_q(left_label == j - 1),
            Relation::Ge,
            one.clone(),
        ));
        out.push(Check::new(
            row,
            format!("stage {j}: right splice atom labeled A_{j}"),
            bool_q(right_label == j && right.label_count(j as Label) == right.len()),
            Relation::Ge,
            one.clone(),
        ));
        out.push(Check::new(
            row,
            format!("stage {j}: splice atom disjoint from earlier splice atoms"),
            bool_q(images.binary_search(&lvl.p_left).is_err()),
            Relation::Ge,
            one.clone(),
        ));
        images = images.iter().map(|&p| if p > lvl.p_left { p + lvl.right_len } else { p }).collect();
        images.push(lvl.p_left);
        images.push(lvl.p_left + lvl.right_len);
        images.sort_unstable();
        node = splice.clone();
    }
    let total = q_u64(ir.len());
    for (j, m) in spec.masses.iter().enumerate() {
        out.push(Check::new(
            j as u64,
            format!("mass of A_{j} matches"),
            bool_q(q_u64(ir.label_count(j as Label)) / &total == *m),
            Relation::Ge,
            one.clone(),
        ));
    }
    out
}

fn bool_q(b: bool) -> Q {
    if b {
        Q::one()
    } else {
        Q::zero()
    }
}

fn splice_levels_base(ir: &SystemIR) -> Option<SystemIR> {
    let mut node = ir.clone();
    loop {
        match node.view() {
            NodeView::Splice { left, .. } => {
                node = match left.view() {
                    NodeView::Refine { child, .. } => child.clone(),
                    _ => left.clone(),
                };
            }
            NodeView::Tower { .. } => return Some(node),
            _ => return None,
        }
    }
}

fn collect_splices(ir: &SystemIR, out: &mut Vec<SystemIR>) {
    let mut node = ir.clone();
    while let NodeView::Splice { left, .. } = node.view() {
        out.push(node.clone());
        node = match left.view() {
            NodeView::Refine { child, .. } => child.clone(),
            _ => left.clone(),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q_frac;

    fn spec4() -> ComponentSpec {
        ComponentSpec::new(vec![q_frac(3, 10), q_frac(3, 10), q_frac(2, 10), q_frac(2, 10)], 10).unwrap()
    }

    #[test]
    fn component_constants() {
        let s = spec4();
        assert_eq!(s.granularity, 100);
        let st = init_components(&s).unwrap();
        let lens: Vec<u64> = std::iter::once(&st.merged).chain(&st.pending).map(|c| c.len()).collect();
        assert_eq!(lens, vec![30, 30, 20, 20]);
        assert_eq!(s.c_j(1), q_frac(1, 2));
        assert_eq!(s.c_j(2), q_frac(3, 8));
        assert_eq!(s.c_j(3), q_frac(3, 10));
        assert_eq!(s.c(), &q_frac(3, 10));
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            ComponentSpec::new(vec![q_frac(1, 2), q_frac(1, 3)], 10),
            Err(PodviginError::Invalid(_))
        ));
        assert!(matches!(
            ComponentSpec::new(vec![q_frac(1, 2), q_frac(1, 2)], 1),
            Err(PodviginError::TooCoarse { .. })
        ));
    }

    #[test]
    fn splice_atom_policy() {
        let ir = SystemIR::looped(vec![
            SystemIR::tower(4, 1).unwrap(),
            SystemIR::tower(6, 0).unwrap(),
            SystemIR::tower(2, 1).unwrap(),
        ])
        .unwrap();
        assert_eq!(choose_splice_atom(&ir, 0, &[]), Some(4));
        // Atoms 8 and 9 are both at distance 3; the leftmost wins.
        assert_eq!(choose_splice_atom(&ir, 0, &[0, 5]), Some(8));
        assert_eq!(choose_splice_atom(&ir, 2, &[]), None);
    }

    #[test]
    fn lifted_images() {
        assert_eq!(lift_positions(&[1, 3], 5, 3), vec![1, 3, 6, 8, 11, 13]);
    }

    #[test]
    fn last_stage_has_no_window() {
        let s = ComponentSpec::new(vec![q_frac(1, 2), q_frac(1, 2)], 10).unwrap();
        let params = StageParams {
            rate: RateFunction::power(q_frac(1, 2)).unwrap(),
            eps: EpsSchedule::default(),
            retry_cap: DEFAULT_RETRY_CAP,
        };
        let st = run_all(&s, &params).unwrap();
        assert_eq!(st.history.len(), 1);
        assert_eq!(st.history[0].n, None);
        assert!(verify_divergence(&st, &params.rate, &params.eps).unwrap().is_empty());
    }
}
