//! Symbolic construction IR for single-cycle permutations on equal-mass atoms.
//!
//! A [`SystemIR`] never materializes its atoms. Positions `0..L` are counted
//! in cycle order from the canonical start (the first atom of the first or
//! left child), so the successor of position `p` is always `p + 1 mod L` and
//! every node is a single cycle by construction. Only the label at each
//! position depends on the node structure.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::rational::DecU64;

pub type Label = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("malformed IR document: {0}")]
    Parse(String),
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> IrError {
    IrError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug)]
enum Kind {
    Tower { height: u64, label: Label },
    Loop { children: Vec<SystemIR>, offsets: Vec<u64> },
    Refine { child: SystemIR, factor: u64 },
    Splice { left: SystemIR, right: SystemIR, p_left: u64, p_right: u64 },
}

#[derive(Debug)]
struct Node {
    kind: Kind,
    len: u64,
    /// `Some(l)` when every atom carries label `l`.
    uniform: Option<Label>,
    /// Atom count per label id.
    counts: Vec<u64>,
    depth: u32,
}

/// Immutable handle to an IR node; cloning shares the subgraph.
#[derive(Debug, Clone)]
pub struct SystemIR(Arc<Node>);

/// Which input cycle a spliced atom came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Kind-level view of a node, for walking the DAG from outside the module.
#[derive(Debug, Clone)]
pub enum NodeView<'a> {
    Tower { height: u64, label: Label },
    Loop { children: &'a [SystemIR] },
    Refine { child: &'a SystemIR, factor: u64 },
    Splice { left: &'a SystemIR, right: &'a SystemIR, p_left: u64, p_right: u64 },
}

fn add_counts(a: &[u64], b: &[u64], path: &str) -> Result<Vec<u64>, IrError> {
    let mut out = vec![0u64; a.len().max(b.len())];
    for (i, slot) in out.iter_mut().enumerate() {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        *slot = x
            .checked_add(y)
            .ok_or_else(|| invalid(path, "length overflows u64"))?;
    }
    Ok(out)
}

fn merged_uniform(a: Option<Label>, b: Option<Label>) -> Option<Label> {
    match (a, b) {
        (Some(x), Some(y)) if x == y => Some(x),
        _ => None,
    }
}

impl SystemIR {
    pub fn tower(height: u64, label: Label) -> Result<Self, IrError> {
        if height == 0 {
            return Err(invalid("tower", "height must be positive"));
        }
        let mut counts = vec![0u64; label as usize + 1];
        counts[label as usize] = height;
        Ok(Self(Arc::new(Node {
            kind: Kind::Tower { height, label },
            len: height,
            uniform: Some(label),
            counts,
            depth: 1,
        })))
    }

    /// Concatenation of towers closed into one cycle.
    pub fn looped(children: Vec<SystemIR>) -> Result<Self, IrError> {
        if children.is_empty() {
            return Err(invalid("loop", "needs at least one tower"));
        }
        let mut offsets = Vec::with_capacity(children.len());
        let mut len = 0u64;
        let mut counts: Vec<u64> = Vec::new();
        let mut uniform = children[0].0.uniform;
        for (i, c) in children.iter().enumerate() {
            let path = format!("loop.children[{i}]");
            if !matches!(c.0.kind, Kind::Tower { .. }) {
                return Err(invalid(path, "loop children must be towers"));
            }
            offsets.push(len);
            len = len
                .checked_add(c.len())
                .ok_or_else(|| invalid(&path, "length overflows u64"))?;
            counts = add_counts(&counts, &c.0.counts, &path)?;
            uniform = merged_uniform(uniform, c.0.uniform);
        }
        Ok(Self(Arc::new(Node {
            kind: Kind::Loop { children, offsets },
            len,
            uniform,
            counts,
            depth: 2,
        })))
    }

    /// The r-fold lift: a cycle of length `r·L` whose labels repeat the
    /// child's stream `r` times.
    pub fn refine(child: &SystemIR, factor: u64) -> Result<Self, IrError> {
        if factor == 0 {
            return Err(invalid("refine", "factor must be positive"));
        }
        let len = child
            .len()
            .checked_mul(factor)
            .ok_or_else(|| invalid("refine", "length overflows u64"))?;
        let counts = child
            .0
            .counts
            .iter()
            .map(|c| c * factor)
            .collect::<Vec<_>>();
        Ok(Self(Arc::new(Node {
            kind: Kind::Refine {
                child: child.clone(),
                factor,
            },
            len,
            uniform: child.0.uniform,
            counts,
            depth: child.0.depth + 1,
        })))
    }

    /// Transposition merge of two cycles. With `x` the atom at `p_left` of
    /// `left` and `y` the atom at `p_right` of `right`, the result follows
    /// both cycles except `x → succ(y)` and `y → succ(x)`. Its cycle order is
    /// `x_0..x_p, y_{p'+1}..y_{p'}, x_{p+1}..`.
    pub fn splice(left: &SystemIR, right: &SystemIR, p_left: u64, p_right: u64) -> Result<Self, IrError> {
        if p_left >= left.len() {
            return Err(invalid(
                "splice.p_left",
                format!("position {p_left} out of range for length {}", left.len()),
            ));
        }
        if p_right >= right.len() {
            return Err(invalid(
                "splice.p_right",
                format!("position {p_right} out of range for length {}", right.len()),
            ));
        }
        let len = left
            .len()
            .checked_add(right.len())
            .ok_or_else(|| invalid("splice", "length overflows u64"))?;
        let counts = add_counts(&left.0.counts, &right.0.counts, "splice")?;
        Ok(Self(Arc::new(Node {
            kind: Kind::Splice {
                left: left.clone(),
                right: right.clone(),
                p_left,
                p_right,
            },
            len,
            uniform: merged_uniform(left.0.uniform, right.0.uniform),
            counts,
            depth: left.0.depth.max(right.0.depth) + 1,
        })))
    }

    pub fn len(&self) -> u64 {
        self.0.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self) -> u32 {
        self.0.depth
    }

    /// Atom count per label id (index = label).
    pub fn label_counts(&self) -> &[u64] {
        &self.0.counts
    }

    pub fn label_count(&self, label: Label) -> u64 {
        self.0.counts.get(label as usize).copied().unwrap_or(0)
    }

    /// Number of label ids, i.e. one past the largest label present.
    pub fn label_space(&self) -> usize {
        self.0.counts.len()
    }

    pub fn view(&self) -> NodeView<'_> {
        match &self.0.kind {
            Kind::Tower { height, label } => NodeView::Tower {
                height: *height,
                label: *label,
            },
            Kind::Loop { children, .. } => NodeView::Loop { children },
            Kind::Refine { child, factor } => NodeView::Refine {
                child,
                factor: *factor,
            },
            Kind::Splice {
                left,
                right,
                p_left,
                p_right,
            } => NodeView::Splice {
                left,
                right,
                p_left: *p_left,
                p_right: *p_right,
            },
        }
    }

    pub fn ptr_eq(&self, other: &SystemIR) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Label of the atom at cycle position `pos`. O(depth).
    pub fn label_at(&self, pos: u64) -> Label {
        let mut node = self;
        let mut pos = pos % self.len();
        loop {
            if let Some(l) = node.0.uniform {
                return l;
            }
            match &node.0.kind {
                Kind::Tower { label, .. } => return *label,
                Kind::Loop { children, offsets } => {
                    let i = offsets.partition_point(|&o| o <= pos) - 1;
                    pos -= offsets[i];
                    node = &children[i];
                }
                Kind::Refine { child, .. } => {
                    pos %= child.len();
                    node = child;
                }
                Kind::Splice { .. } => {
                    let (side, p) = node.splice_origin(pos).expect("splice node");
                    pos = p;
                    node = node.splice_child(side);
                }
            }
        }
    }

    fn splice_child(&self, side: Side) -> &SystemIR {
        match &self.0.kind {
            Kind::Splice { left, right, .. } => match side {
                Side::Left => left,
                Side::Right => right,
            },
            _ => unreachable!("not a splice node"),
        }
    }

    /// For a splice node: which input cycle the atom at `pos` came from, and
    /// its position there. `None` for other node kinds.
    pub fn splice_origin(&self, pos: u64) -> Option<(Side, u64)> {
        let Kind::Splice {
            left,
            right,
            p_left,
            p_right,
        } = &self.0.kind
        else {
            return None;
        };
        let lb = right.len();
        Some(if pos <= *p_left {
            (Side::Left, pos)
        } else if pos <= p_left + lb {
            (Side::Right, (p_right + 1 + (pos - p_left - 1)) % lb)
        } else {
            debug_assert!(pos < left.len() + lb);
            (Side::Left, pos - lb)
        })
    }

    /// Inverse of [`splice_origin`](Self::splice_origin).
    pub fn splice_position(&self, side: Side, child_pos: u64) -> Option<u64> {
        let Kind::Splice {
            right,
            p_left,
            p_right,
            ..
        } = &self.0.kind
        else {
            return None;
        };
        let lb = right.len();
        Some(match side {
            Side::Left if child_pos <= *p_left => child_pos,
            Side::Left => child_pos + lb,
            Side::Right => p_left + 1 + (child_pos + lb - p_right - 1) % lb,
        })
    }

    /// Calls `sink(label, run_len)` for the labels of positions
    /// `start..start+len` (no wrap), in order. Adjacent calls may repeat a
    /// label.
    pub fn for_each_run(&self, start: u64, len: u64, sink: &mut impl FnMut(Label, u64)) {
        debug_assert!(start + len <= self.len());
        if len == 0 {
            return;
        }
        if let Some(l) = self.0.uniform {
            sink(l, len);
            return;
        }
        match &self.0.kind {
            Kind::Tower { label, .. } => sink(*label, len),
            Kind::Loop { children, offsets } => {
                let mut i = offsets.partition_point(|&o| o <= start) - 1;
                let mut pos = start;
                let end = start + len;
                while pos < end {
                    let child = &children[i];
                    let off = pos - offsets[i];
                    let take = (child.len() - off).min(end - pos);
                    child.for_each_run(off, take, sink);
                    pos += take;
                    i += 1;
                }
            }
            Kind::Refine { child, .. } => {
                let lc = child.len();
                let mut pos = start;
                let end = start + len;
                while pos < end {
                    let off = pos % lc;
                    let take = (lc - off).min(end - pos);
                    child.for_each_run(off, take, sink);
                    pos += take;
                }
            }
            Kind::Splice {
                left,
                right,
                p_left,
                p_right,
            } => {
                let lb = right.len();
                let end = start + len;
                let mut pos = start;
                while pos < end {
                    if pos <= *p_left {
                        let take = (p_left + 1 - pos).min(end - pos);
                        left.for_each_run(pos, take, sink);
                        pos += take;
                    } else if pos <= p_left + lb {
                        let rpos = (p_right + 1 + (pos - p_left - 1)) % lb;
                        let seg_end = (p_left + lb + 1).min(end);
                        let take = (lb - rpos).min(seg_end - pos);
                        right.for_each_run(rpos, take, sink);
                        pos += take;
                    } else {
                        let lpos = pos - lb;
                        let take = end - pos;
                        left.for_each_run(lpos, take, sink);
                        pos += take;
                    }
                }
            }
        }
    }

    /// Run cursor over the infinite cyclic stream starting at `start`.
    pub fn runs_from(&self, start: u64) -> RunCursor {
        RunCursor::new(self.clone(), start % self.len())
    }

    /// Label stream starting at `start`.
    pub fn stream_from(&self, start: u64) -> LabelStream {
        LabelStream {
            pos: start % self.len(),
            len: self.len(),
            runs: self.runs_from(start),
        }
    }

    /// `count` labels from `start`, wrapping mod L.
    pub fn stream(&self, start: u64, count: usize) -> Vec<Label> {
        self.stream_from(start).take(count).map(|(_, l)| l).collect()
    }
}

/// Lazily buffered runs `(label, length)` of the cyclic label stream.
#[derive(Debug, Clone)]
pub struct RunCursor {
    ir: SystemIR,
    next_pos: u64,
    chunk: u64,
    buf: VecDeque<(Label, u64)>,
}

const MIN_CHUNK: u64 = 4096;
const TARGET_RUNS: usize = 1024;

impl RunCursor {
    fn new(ir: SystemIR, start: u64) -> Self {
        Self {
            ir,
            next_pos: start,
            chunk: MIN_CHUNK,
            buf: VecDeque::new(),
        }
    }

    fn refill(&mut self) {
        let l = self.ir.len();
        let take = self.chunk.min(l - self.next_pos);
        let buf = &mut self.buf;
        let before = buf.len();
        self.ir.for_each_run(self.next_pos, take, &mut |label, n| match buf.back_mut() {
            Some((last, len)) if *last == label => *len += n,
            _ => buf.push_back((label, n)),
        });
        self.next_pos = (self.next_pos + take) % l;
        if buf.len() - before < TARGET_RUNS / 4 {
            self.chunk = self.chunk.saturating_mul(2);
        }
    }

    /// Current run without consuming it.
    pub fn peek(&mut self) -> (Label, u64) {
        if self.buf.is_empty() {
            self.refill();
        }
        *self.buf.front().expect("nonempty after refill")
    }

    /// Consumes `n` atoms, which must not exceed the current run.
    pub fn advance(&mut self, n: u64) {
        let front = self.buf.front_mut().expect("peek before advance");
        debug_assert!(n <= front.1);
        front.1 -= n;
        if front.1 == 0 {
            self.buf.pop_front();
        }
    }

    /// Consumes `n` atoms across runs, calling `sink(label, k)` per piece.
    pub fn consume(&mut self, mut n: u64, sink: &mut impl FnMut(Label, u64)) {
        while n > 0 {
            let (label, avail) = self.peek();
            let k = avail.min(n);
            sink(label, k);
            self.advance(k);
            n -= k;
        }
    }

    /// Skips `n` atoms. Runs-proportional for short skips; large skips use
    /// position arithmetic.
    pub fn skip(&mut self, n: u64) {
        let buffered: u64 = self.buf.iter().map(|r| r.1).sum();
        if n <= buffered {
            self.consume(n, &mut |_, _| {});
        } else {
            let l = self.ir.len();
            let rest = (n - buffered) % l;
            self.buf.clear();
            self.next_pos = (self.next_pos + rest) % l;
        }
    }
}

/// Cursor over `(position, label)` along the cycle.
#[derive(Debug, Clone)]
pub struct LabelStream {
    pos: u64,
    len: u64,
    runs: RunCursor,
}

impl Iterator for LabelStream {
    type Item = (u64, Label);

    fn next(&mut self) -> Option<Self::Item> {
        let (label, _) = self.runs.peek();
        self.runs.advance(1);
        let p = self.pos;
        self.pos = (self.pos + 1) % self.len;
        Some((p, label))
    }
}

// ---------------------------------------------------------------------------
// JSON document

pub const IR_FORMAT: &str = "ergolab-ir/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NodeDoc {
    Tower { height: DecU64, label: Label },
    Loop { children: Vec<usize> },
    Refine { child: usize, factor: DecU64 },
    Splice { left: usize, right: usize, p_left: DecU64, p_right: DecU64 },
}

/// Nodes listed children-first; `root` indexes the last-built node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrDocument {
    pub format: String,
    pub root: usize,
    pub nodes: Vec<NodeDoc>,
}

impl SystemIR {
    pub fn to_document(&self) -> IrDocument {
        let mut nodes = Vec::new();
        let mut seen: HashMap<*const Node, usize> = HashMap::new();
        let root = emit(self, &mut nodes, &mut seen);
        IrDocument {
            format: IR_FORMAT.to_string(),
            root,
            nodes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("IR serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, IrError> {
        let doc: IrDocument = serde_json::from_str(s).map_err(|e| IrError::Parse(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &IrDocument) -> Result<Self, IrError> {
        if doc.format != IR_FORMAT {
            return Err(invalid("format", format!("expected {IR_FORMAT:?}, got {:?}", doc.format)));
        }
        let mut built: Vec<SystemIR> = Vec::with_capacity(doc.nodes.len());
        for (i, node) in doc.nodes.iter().enumerate() {
            let path = format!("nodes[{i}]");
            let get = |j: usize, field: &str| -> Result<SystemIR, IrError> {
                built.get(j).cloned().ok_or_else(|| {
                    invalid(format!("{path}.{field}"), format!("index {j} does not precede node {i}"))
                })
            };
            let rewrap = |e: IrError, field: &str| match e {
                IrError::Invalid { reason, .. } => invalid(format!("{path}.{field}"), reason),
                other => other,
            };
            let ir = match node {
                NodeDoc::Tower { height, label } => {
                    SystemIR::tower(height.0, *label).map_err(|e| rewrap(e, "height"))?
                }
                NodeDoc::Loop { children } => {
                    let cs = children
                        .iter()
                        .enumerate()
                        .map(|(k, &c)| get(c, &format!("children[{k}]")))
                        .collect::<Result<Vec<_>, _>>()?;
                    SystemIR::looped(cs).map_err(|e| rewrap(e, "children"))?
                }
                NodeDoc::Refine { child, factor } => {
                    SystemIR::refine(&get(*child, "child")?, factor.0).map_err(|e| rewrap(e, "factor"))?
                }
                NodeDoc::Splice {
                    left,
                    right,
                    p_left,
                    p_right,
                } => {
                    let l = get(*left, "left")?;
                    let r = get(*right, "right")?;
                    SystemIR::splice(&l, &r, p_left.0, p_right.0).map_err(|e| match e {
                        IrError::Invalid { path: p, reason } => {
                            let field = p.rsplit('.').next().unwrap_or("splice").to_string();
                            invalid(format!("{path}.{field}"), reason)
                        }
                        other => other,
                    })?
                }
            };
            built.push(ir);
        }
        built
            .get(doc.root)
            .cloned()
            .ok_or_else(|| invalid("root", format!("index {} out of range", doc.root)))
    }

    /// Structural equality of the unfolded DAGs.
    pub fn same_structure(&self, other: &SystemIR) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        match (&self.0.kind, &other.0.kind) {
            (Kind::Tower { height: h1, label: l1 }, Kind::Tower { height: h2, label: l2 }) => {
                h1 == h2 && l1 == l2
            }
            (Kind::Loop { children: a, .. }, Kind::Loop { children: b, .. }) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_structure(y))
            }
            (Kind::Refine { child: a, factor: f }, Kind::Refine { child: b, factor: g }) => {
                f == g && a.same_structure(b)
            }
            (
                Kind::Splice { left: a1, right: b1, p_left: x1, p_right: y1 },
                Kind::Splice { left: a2, right: b2, p_left: x2, p_right: y2 },
            ) => x1 == x2 && y1 == y2 && a1.same_structure(a2) && b1.same_structure(b2),
            _ => false,
        }
    }
}

fn emit(ir: &SystemIR, nodes: &mut Vec<NodeDoc>, seen: &mut HashMap<*const Node, usize>) -> usize {
    let key = Arc::as_ptr(&ir.0);
    if let Some(&i) = seen.get(&key) {
        return i;
    }
    let doc = match &ir.0.kind {
        Kind::Tower { height, label } => NodeDoc::Tower {
            height: DecU64(*height),
            label: *label,
        },
        Kind::Loop { children, .. } => NodeDoc::Loop {
            children: children.iter().map(|c| emit(c, nodes, seen)).collect(),
        },
        Kind::Refine { child, factor } => NodeDoc::Refine {
            child: emit(child, nodes, seen),
            factor: DecU64(*factor),
        },
        Kind::Splice {
            left,
            right,
            p_left,
            p_right,
        } => {
            let l = emit(left, nodes, seen);
            let r = emit(right, nodes, seen);
            NodeDoc::Splice {
                left: l,
                right: r,
                p_left: DecU64(*p_left),
                p_right: DecU64(*p_right),
            }
        }
    };
    nodes.push(doc);
    let i = nodes.len() - 1;
    seen.insert(key, i);
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(labels: &[Label]) -> SystemIR {
        SystemIR::looped(labels.iter().map(|&l| SystemIR::tower(1, l).unwrap()).collect()).unwrap()
    }

    #[test]
    fn lengths() {
        assert_eq!(SystemIR::tower(5, 0).unwrap().len(), 5);
        let lp = SystemIR::looped(vec![SystemIR::tower(2, 0).unwrap(), SystemIR::tower(3, 1).unwrap()]).unwrap();
        assert_eq!(SystemIR::refine(&lp, 4).unwrap().len(), 20);
        let s = SystemIR::splice(&cycle(&[0, 0, 0]), &cycle(&[1, 1]), 0, 0).unwrap();
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn stream_examples() {
        let lp = SystemIR::looped(vec![SystemIR::tower(2, 1).unwrap(), SystemIR::tower(3, 0).unwrap()]).unwrap();
        assert_eq!(lp.stream(0, 5), vec![1, 1, 0, 0, 0]);
        let r = SystemIR::refine(&cycle(&[1, 0]), 2).unwrap();
        assert_eq!(r.stream(0, 4), vec![1, 0, 1, 0]);
        assert_eq!(SystemIR::refine(&cycle(&[1, 0]), 3).unwrap().stream(0, 6), vec![1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn splice_example_order() {
        // A = x0 x1 x2 (label 0), B = y0 y1 (label 1); order x0 x1 y1 y0 x2.
        let s = SystemIR::splice(&cycle(&[0, 0, 0]), &cycle(&[1, 1]), 1, 0).unwrap();
        assert_eq!(s.stream(0, 5), vec![0, 0, 1, 1, 0]);
        let origins: Vec<_> = (0..5).map(|p| s.splice_origin(p).unwrap()).collect();
        assert_eq!(
            origins,
            vec![
                (Side::Left, 0),
                (Side::Left, 1),
                (Side::Right, 1),
                (Side::Right, 0),
                (Side::Left, 2)
            ]
        );
        for (p, (side, cp)) in origins.into_iter().enumerate() {
            assert_eq!(s.splice_position(side, cp), Some(p as u64));
        }
    }

    #[test]
    fn stream_wraps_and_resumes() {
        let s = SystemIR::splice(&cycle(&[0, 1, 2]), &cycle(&[3, 4]), 2, 1).unwrap();
        let full = s.stream(0, 15);
        assert_eq!(&full[..5], &full[5..10]);
        assert_eq!(s.stream(3, 7), full[3..10].to_vec());
        for p in 0..5 {
            assert_eq!(s.label_at(p), full[p as usize]);
        }
    }

    #[test]
    fn refine_by_one_is_stream_equal() {
        let s = SystemIR::splice(&cycle(&[0, 1, 1]), &cycle(&[2, 0]), 1, 1).unwrap();
        let r = SystemIR::refine(&s, 1).unwrap();
        assert_eq!(s.stream(0, 12), r.stream(0, 12));
    }

    #[test]
    fn invalid_construction() {
        assert!(SystemIR::tower(0, 0).is_err());
        assert!(SystemIR::looped(vec![]).is_err());
        assert!(SystemIR::refine(&cycle(&[0]), 0).is_err());
        let err = SystemIR::splice(&cycle(&[0, 0]), &cycle(&[1]), 2, 0).unwrap_err();
        assert!(matches!(err, IrError::Invalid { ref path, .. } if path == "splice.p_left"));
        let inner = cycle(&[0, 1]);
        assert!(SystemIR::looped(vec![inner]).is_err());
    }

    #[test]
    fn label_counts_track_construction() {
        let s = SystemIR::splice(&cycle(&[0, 0, 1]), &SystemIR::tower(4, 2).unwrap(), 2, 3).unwrap();
        let r = SystemIR::refine(&s, 3).unwrap();
        assert_eq!(r.label_counts(), &[6, 3, 12]);
    }

    #[test]
    fn document_round_trip_three_nodes() {
        let t = SystemIR::tower(3, 0).unwrap();
        let r = SystemIR::refine(&t, 2).unwrap();
        let s = SystemIR::splice(&r, &t, 4, 1).unwrap();
        let doc = s.to_document();
        assert_eq!(doc.nodes.len(), 3);
        let back = SystemIR::from_json(&s.to_json()).unwrap();
        assert!(back.same_structure(&s));
        assert_eq!(back.to_document(), doc);
    }

    #[test]
    fn document_validation_errors() {
        let bad = r#"{"format":"ergolab-ir/1","root":2,"nodes":[
            {"kind":"tower","height":"3","label":0},
            {"kind":"tower","height":"2","label":1},
            {"kind":"splice","left":0,"right":1,"p_left":"3","p_right":"0"}]}"#;
        match SystemIR::from_json(bad) {
            Err(IrError::Invalid { path, .. }) => assert_eq!(path, "nodes[2].p_left"),
            other => panic!("unexpected {other:?}"),
        }
        let fwd = r#"{"format":"ergolab-ir/1","root":0,"nodes":[{"kind":"refine","child":1,"factor":"2"}]}"#;
        assert!(matches!(SystemIR::from_json(fwd), Err(IrError::Invalid { .. })));
        let garbage = r#"{"format":"ergolab-ir/1","root":0,"nodes":[{"kind":"tower","height":"x","label":0}]}"#;
        assert!(matches!(SystemIR::from_json(garbage), Err(IrError::Parse(_))));
        let extra = r#"{"format":"ergolab-ir/1","root":0,"nodes":[],"junk":1}"#;
        assert!(SystemIR::from_json(extra).is_err());
    }

    #[test]
    fn shared_subgraphs_serialize_once() {
        let t = SystemIR::tower(2, 0).unwrap();
        let lp = SystemIR::looped(vec![t.clone(), t.clone(), t]).unwrap();
        assert_eq!(lp.to_document().nodes.len(), 2);
    }
}
