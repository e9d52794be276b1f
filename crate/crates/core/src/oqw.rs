//! Open quantum walks over training samples.
//!
//! Positions are classical; each position carries a real symmetric block on
//! the internal space `ancilla ⊗ features` of dimension `k = 2 d`, ancilla as
//! the most significant index. Encoded states are real, so real blocks are
//! exact.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::classifier::{class_distribution, TrainingSet};
use crate::data::Dataset;
use crate::encoding::{check_len, FeatureVector};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::ClassId;

pub const TRACE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Cycle,
    Complete,
    /// Edges only between nodes of different classes.
    Bipartite,
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycle" => Ok(GraphKind::Cycle),
            "complete" => Ok(GraphKind::Complete),
            "bipartite" => Ok(GraphKind::Bipartite),
            other => Err(Error::InvalidArgument(format!("unknown graph kind `{other}`"))),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Cycle => "cycle",
            GraphKind::Complete => "complete",
            GraphKind::Bipartite => "bipartite",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arrangement {
    /// Contiguous class blocks, stable within a class.
    Clustered,
    /// Round-robin over classes: ABCABC...
    Interleaved,
    GivenOrder,
}

impl FromStr for Arrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clustered" => Ok(Arrangement::Clustered),
            "interleaved" => Ok(Arrangement::Interleaved),
            "given" | "given-order" => Ok(Arrangement::GivenOrder),
            other => Err(Error::InvalidArgument(format!("unknown arrangement `{other}`"))),
        }
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arrangement::Clustered => "clustered",
            Arrangement::Interleaved => "interleaved",
            Arrangement::GivenOrder => "given-order",
        })
    }
}

/// Sample indices in walk order.
pub fn arrange(labels: &[ClassId], arrangement: Arrangement) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    match arrangement {
        Arrangement::GivenOrder => order,
        Arrangement::Clustered => {
            order.sort_by_key(|&i| labels[i]);
            order
        }
        Arrangement::Interleaved => {
            let classes: BTreeSet<ClassId> = labels.iter().copied().collect();
            let mut queues: Vec<std::collections::VecDeque<usize>> = classes
                .iter()
                .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
                .collect();
            order.clear();
            while queues.iter().any(|q| !q.is_empty()) {
                for q in &mut queues {
                    if let Some(i) = q.pop_front() {
                        order.push(i);
                    }
                }
            }
            order
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    /// Index of the training sample held at this node.
    pub sample: usize,
    pub label: ClassId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkGraph {
    nodes: Vec<Node>,
    adjacency: Vec<Vec<usize>>,
}

impl WalkGraph {
    pub fn build(kind: GraphKind, labels: &[ClassId], arrangement: Arrangement) -> Result<Self> {
        Self::from_order(kind, &arrange(labels, arrangement), labels)
    }

    /// Node `n` holds sample `order[n]`.
    pub fn from_order(kind: GraphKind, order: &[usize], labels: &[ClassId]) -> Result<Self> {
        let n = order.len();
        if n < 2 {
            return Err(Error::InvalidGraph(format!("{n} nodes, at least 2 required")));
        }
        let nodes: Vec<Node> = order
            .iter()
            .map(|&s| {
                labels
                    .get(s)
                    .map(|&label| Node { sample: s, label })
                    .ok_or_else(|| Error::InvalidGraph(format!("sample {s} has no label")))
            })
            .collect::<Result<_>>()?;
        let adjacency: Vec<Vec<usize>> = match kind {
            GraphKind::Cycle => (0..n)
                .map(|i| {
                    let set: BTreeSet<usize> = [(i + n - 1) % n, (i + 1) % n].into();
                    set.into_iter().collect()
                })
                .collect(),
            GraphKind::Complete => (0..n)
                .map(|i| (0..n).filter(|&j| j != i).collect())
                .collect(),
            GraphKind::Bipartite => {
                let distinct: BTreeSet<ClassId> = nodes.iter().map(|x| x.label).collect();
                if distinct.len() < 2 {
                    return Err(Error::InvalidGraph(
                        "bipartite graph needs at least two classes".into(),
                    ));
                }
                (0..n)
                    .map(|i| {
                        (0..n)
                            .filter(|&j| nodes[j].label != nodes[i].label)
                            .collect()
                    })
                    .collect()
            }
        };
        Self::from_adjacency(nodes, adjacency)
    }

    /// Arbitrary directed graph; self-loops are allowed.
    pub fn from_adjacency(nodes: Vec<Node>, adjacency: Vec<Vec<usize>>) -> Result<Self> {
        if nodes.len() != adjacency.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: adjacency.len(),
            });
        }
        for (i, out) in adjacency.iter().enumerate() {
            if out.is_empty() {
                return Err(Error::InvalidGraph(format!("node {i} has no outgoing edge")));
            }
            if let Some(&j) = out.iter().find(|&&j| j >= nodes.len()) {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) leaves the graph")));
            }
            let unique: BTreeSet<_> = out.iter().collect();
            if unique.len() != out.len() {
                return Err(Error::InvalidGraph(format!("node {i} has parallel edges")));
            }
        }
        Ok(WalkGraph { nodes, adjacency })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.len() && self.adjacency[i].contains(&j)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, out)| out.iter().map(move |&j| (i, j)))
    }

    /// Row-stochastic matrix `P[i][j] = 1/d_out(i)` on edges.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut p = vec![vec![0.0; n]; n];
        for (i, j) in self.edges() {
            p[i][j] = 1.0 / self.out_degree(i) as f64;
        }
        p
    }

    /// First node carrying `label`, in the middle of that label's run.
    pub fn middle_of_class(&self, label: ClassId) -> Option<usize> {
        let at: Vec<usize> = (0..self.len())
            .filter(|&i| self.nodes[i].label == label)
            .collect();
        at.get(at.len() / 2).copied()
    }
}

/// Mixing horizon `1 / (1 - SLEM)` of the simple random walk. The graph must
/// be undirected; periodic or disconnected graphs give infinity.
pub fn mixing_horizon(graph: &WalkGraph) -> Result<f64> {
    let n = graph.len();
    for (i, j) in graph.edges() {
        if !graph.has_edge(j, i) {
            return Err(Error::InvalidGraph(format!(
                "edge ({i}, {j}) has no reverse; mixing horizon needs an undirected graph"
            )));
        }
    }
    // D^{1/2} P D^{-1/2} with stationary weights proportional to degree
    let deg: Vec<f64> = (0..n).map(|i| graph.out_degree(i) as f64).collect();
    let s = DMatrix::from_fn(n, n, |i, j| {
        if graph.has_edge(i, j) {
            1.0 / (deg[i] * deg[j]).sqrt()
        } else {
            0.0
        }
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let slem = eig[1..].iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let gap = 1.0 - slem;
    Ok(if gap <= 1e-12 { f64::INFINITY } else { 1.0 / gap })
}

/// Comparison state `(|0> test + |1> sample) / sqrt(2)` as real amplitudes.
pub fn comparison_vector(test: &FeatureVector, sample: &FeatureVector) -> Result<Vec<f64>> {
    check_len(test, sample)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Ok(test
        .values()
        .iter()
        .chain(sample.values())
        .map(|v| v * r)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionKind {
    /// Every hop prepares the full comparison state of the target node.
    Reset,
    /// The ancilla-0 branch is kept and the ancilla-1 branch is overwritten
    /// with the target sample.
    Conditional,
}

/// Kraus operator for one edge.
#[derive(Clone, Debug, PartialEq)]
pub enum KrausOp {
    /// The family `{ scale |target><d| : d = 0..k }`, acting on a block as
    /// `scale^2 tr(B) |target><target|`.
    Reset { target: Arc<[f64]>, scale: f64 },
    /// A single real `k × k` operator, row-major.
    Dense { dim: usize, entries: Vec<f64> },
}

impl KrausOp {
    pub fn dim(&self) -> usize {
        match self {
            KrausOp::Reset { target, .. } => target.len(),
            KrausOp::Dense { dim, .. } => *dim,
        }
    }

    /// Explicit matrices of the operator family, row-major.
    pub fn matrices(&self) -> Vec<Vec<f64>> {
        match self {
            KrausOp::Reset { target, scale } => {
                let k = target.len();
                (0..k)
                    .map(|d| {
                        let mut m = vec![0.0; k * k];
                        for r in 0..k {
                            m[r * k + d] = scale * target[r];
                        }
                        m
                    })
                    .collect()
            }
            KrausOp::Dense { entries, .. } => vec![entries.clone()],
        }
    }

    /// Sum of the matrices in the family.
    pub fn summed(&self) -> Vec<f64> {
        let k = self.dim();
        self.matrices().into_iter().fold(vec![0.0; k * k], |mut acc, m| {
            acc.iter_mut().zip(m).for_each(|(a, b)| *a += b);
            acc
        })
    }

    /// `Σ K^T K` over the family.
    pub fn gram(&self) -> Vec<f64> {
        let k = self.dim();
        let mut g = vec![0.0; k * k];
        match self {
            KrausOp::Reset { target, scale } => {
                let w = scale * scale * target.iter().map(|x| x * x).sum::<f64>();
                for d in 0..k {
                    g[d * k + d] = w;
                }
            }
            KrausOp::Dense { entries, .. } => {
                for a in 0..k {
                    for b in 0..k {
                        g[a * k + b] = (0..k).map(|r| entries[r * k + a] * entries[r * k + b]).sum();
                    }
                }
            }
        }
        g
    }

    /// `K v` for a dense operator; the reset family has no single image.
    fn apply_dense(&self, v: &[f64]) -> Option<Vec<f64>> {
        match self {
            KrausOp::Dense { dim, entries } => Some(
                (0..*dim)
                    .map(|r| (0..*dim).map(|c| entries[r * dim + c] * v[c]).sum())
                    .collect(),
            ),
            KrausOp::Reset { .. } => None,
        }
    }
}

/// Conditional operator `(|0><0| ⊗ 1 + |1><1| ⊗ |sample><1...1|) / sqrt(d_out)`.
pub fn conditional_op(sample: &FeatureVector, d_out: usize) -> KrausOp {
    let d = sample.len();
    let k = 2 * d;
    let s = 1.0 / (d_out as f64).sqrt();
    let mut entries = vec![0.0; k * k];
    for f in 0..d {
        entries[f * k + f] = s;
        for c in 0..d {
            entries[(d + f) * k + d + c] = s * sample.values()[f];
        }
    }
    KrausOp::Dense { dim: k, entries }
}

pub fn kraus_for_edge(
    graph: &WalkGraph,
    edge: (usize, usize),
    kind: TransitionKind,
    test: Option<&FeatureVector>,
    sample_j: &FeatureVector,
) -> Result<KrausOp> {
    let (i, j) = edge;
    if !graph.has_edge(i, j) {
        return Err(Error::InvalidGraph(format!("({i}, {j}) is not an edge")));
    }
    let d_out = graph.out_degree(i);
    match kind {
        TransitionKind::Reset => {
            let test = test.ok_or_else(|| {
                Error::InvalidArgument("reset transitions embed the test vector".into())
            })?;
            Ok(KrausOp::Reset {
                target: comparison_vector(test, sample_j)?.into(),
                scale: 1.0 / (d_out as f64).sqrt(),
            })
        }
        TransitionKind::Conditional => Ok(conditional_op(sample_j, d_out)),
    }
}

/// Kraus operators for every edge, aligned with [`WalkGraph::neighbors`].
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSet {
    kind: TransitionKind,
    dim: usize,
    ops: Vec<Vec<Option<KrausOp>>>,
}

impl TransitionSet {
    /// Reset-kind set; graph node `n` holds `train.sample(n)`.
    pub fn reset(graph: &WalkGraph, test: &FeatureVector, train: &TrainingSet) -> Result<Self> {
        Self::for_kind(graph, TransitionKind::Reset, Some(test), train)
    }

    pub fn conditional(graph: &WalkGraph, train: &TrainingSet) -> Result<Self> {
        Self::for_kind(graph, TransitionKind::Conditional, None, train)
    }

    pub fn for_kind(
        graph: &WalkGraph,
        kind: TransitionKind,
        test: Option<&FeatureVector>,
        train: &TrainingSet,
    ) -> Result<Self> {
        if graph.len() != train.len() {
            return Err(Error::DimensionMismatch {
                expected: graph.len(),
                found: train.len(),
            });
        }
        // one shared target per node keeps the reset fast path grouped
        let targets: Vec<Option<Arc<[f64]>>> = match (kind, test) {
            (TransitionKind::Reset, Some(t)) => train
                .samples()
                .iter()
                .map(|x| comparison_vector(t, x).map(|v| Some(v.into())))
                .collect::<Result<_>>()?,
            _ => vec![None; graph.len()],
        };
        let mut ops = Vec::with_capacity(graph.len());
        for i in 0..graph.len() {
            let mut row = Vec::with_capacity(graph.out_degree(i));
            for &j in graph.neighbors(i) {
                let op = match &targets[j] {
                    Some(target) => KrausOp::Reset {
                        target: target.clone(),
                        scale: 1.0 / (graph.out_degree(i) as f64).sqrt(),
                    },
                    None => kraus_for_edge(graph, (i, j), kind, test, train.sample(j).0)?,
                };
                row.push(Some(op));
            }
            ops.push(row);
        }
        Ok(TransitionSet {
            kind,
            dim: 2 * train.feature_len(),
            ops,
        })
    }

    /// Empty set for `graph`; fill it with [`TransitionSet::insert`].
    pub fn empty(graph: &WalkGraph, kind: TransitionKind, dim: usize) -> Self {
        TransitionSet {
            kind,
            dim,
            ops: (0..graph.len())
                .map(|i| vec![None; graph.out_degree(i)])
                .collect(),
        }
    }

    pub fn insert(&mut self, graph: &WalkGraph, edge: (usize, usize), op: KrausOp) -> Result<()> {
        let (i, j) = edge;
        let slot = graph
            .neighbors(i)
            .iter()
            .position(|&x| x == j)
            .ok_or_else(|| Error::InvalidGraph(format!("({i}, {j}) is not an edge")))?;
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: op.dim(),
            });
        }
        self.ops[i][slot] = Some(op);
        Ok(())
    }

    pub fn kind(&self) -> TransitionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per node, the max-entry deviation of `Σ_j K^T K` from the identity.
    pub fn completeness_deviation(&self) -> Vec<f64> {
        let k = self.dim;
        self.ops
            .iter()
            .map(|row| {
                let mut g = vec![0.0; k * k];
                for op in row.iter().flatten() {
                    g.iter_mut().zip(op.gram()).for_each(|(a, b)| *a += b);
                }
                (0..k * k)
                    .map(|e| {
                        let id = if e / k == e % k { 1.0 } else { 0.0 };
                        (g[e] - id).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    fn op(&self, i: usize, slot: usize, j: usize) -> Result<&KrausOp> {
        self.ops
            .get(i)
            .and_then(|row| row.get(slot))
            .and_then(Option::as_ref)
            .ok_or(Error::MissingKraus(i, j))
    }
}

/// Block-diagonal walk state.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    dim: usize,
    /// Blocks of all positions, row-major, concatenated.
    data: Vec<f64>,
    /// Largest `|1 - trace|` removed by renormalization so far.
    deficit: f64,
}

impl WalkState {
    /// Pure internal state `|psi><psi|` at `position`.
    pub fn point(num_nodes: usize, position: usize, psi: &[f64]) -> Result<Self> {
        if position >= num_nodes {
            return Err(Error::InvalidGraph(format!(
                "start {position} outside {num_nodes} nodes"
            )));
        }
        let k = psi.len();
        let norm: f64 = psi.iter().map(|x| x * x).sum();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let mut data = vec![0.0; num_nodes * k * k];
        outer_add(&mut data[position * k * k..(position + 1) * k * k], psi, 1.0);
        Ok(WalkState {
            dim: k,
            data,
            deficit: 0.0,
        })
    }

    pub fn from_blocks(dim: usize, blocks: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(b) = blocks.iter().find(|b| b.len() != dim * dim) {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: b.len(),
            });
        }
        let s = WalkState {
            dim,
            data: blocks.concat(),
            deficit: 0.0,
        };
        let t = s.trace();
        if (t - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(t));
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let kk = self.dim * self.dim;
        &self.data[i * kk..(i + 1) * kk]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim * self.dim)
    }

    pub fn trace(&self) -> f64 {
        self.blocks().map(|b| block_trace(b, self.dim)).sum()
    }

    pub fn renormalization_deficit(&self) -> f64 {
        self.deficit
    }

    /// Largest `|B - B^T|` entry over all blocks.
    pub fn asymmetry(&self) -> f64 {
        let k = self.dim;
        self.blocks()
            .flat_map(|b| (0..k * k).map(move |e| (b[e] - b[(e % k) * k + e / k]).abs()))
            .fold(0.0, f64::max)
    }

    /// Post-selection probability after the ancilla Hadamard, per node.
    pub fn success_weights(&self) -> Vec<f64> {
        self.blocks().map(|b| block_success(b, self.dim)).collect()
    }
}

fn block_trace(b: &[f64], k: usize) -> f64 {
    (0..k).map(|d| b[d * k + d]).sum()
}

/// `½ Σ_f (B[0f,0f] + B[0f,1f] + B[1f,0f] + B[1f,1f])`.
fn block_success(b: &[f64], k: usize) -> f64 {
    let d = k / 2;
    0.5 * (0..d)
        .map(|f| b[f * k + f] + b[f * k + d + f] + b[(d + f) * k + f] + b[(d + f) * k + d + f])
        .sum::<f64>()
}

fn outer_add(b: &mut [f64], v: &[f64], w: f64) {
    let k = v.len();
    for (row, &vr) in b.chunks_exact_mut(k).zip(v) {
        let wr = w * vr;
        for (x, &vc) in row.iter_mut().zip(v) {
            *x += wr * vc;
        }
    }
}

fn sandwich_add(out: &mut [f64], m: &[f64], b: &[f64], k: usize) {
    let mut mb = vec![0.0; k * k];
    for r in 0..k {
        for c in 0..k {
            mb[r * k + c] = (0..k).map(|x| m[r * k + x] * b[x * k + c]).sum();
        }
    }
    for r in 0..k {
        for c in 0..k {
            out[r * k + c] += (0..k).map(|x| mb[r * k + x] * m[c * k + x]).sum::<f64>();
        }
    }
}

/// One application of the walk channel. Reset-kind sets are trace preserving;
/// otherwise the result is renormalized and the deficit recorded.
pub fn walk_step(state: &WalkState, graph: &WalkGraph, transitions: &TransitionSet) -> Result<WalkState> {
    let mut next = state.clone();
    walk_step_into(state, graph, transitions, &mut next)?;
    Ok(next)
}

/// [`walk_step`] writing into an existing state to reuse its storage.
pub fn walk_step_into(
    state: &WalkState,
    graph: &WalkGraph,
    transitions: &TransitionSet,
    next: &mut WalkState,
) -> Result<()> {
    let k = state.dim;
    let kk = k * k;
    let n = graph.len();
    if state.num_nodes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.num_nodes(),
        });
    }
    if transitions.dim != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: transitions.dim,
        });
    }
    next.dim = k;
    next.deficit = state.deficit;
    next.data.clear();
    next.data.resize(n * kk, 0.0);
    // reset contributions grouped by target vector
    let mut first: Vec<Option<(&[f64], f64)>> = vec![None; n];
    let mut extra: Vec<(usize, &[f64], f64)> = Vec::new();
    for (i, b) in state.blocks().enumerate() {
        let tr = block_trace(b, k);
        let empty = tr == 0.0 && b.iter().all(|&x| x == 0.0);
        for (slot, &j) in graph.neighbors(i).iter().enumerate() {
            let op = transitions.op(i, slot, j)?;
            if empty {
                continue;
            }
            match op {
                KrausOp::Reset { target, scale } => {
                    let w = scale * scale * tr;
                    let t: &[f64] = target;
                    match &mut first[j] {
                        Some((ft, fw)) if std::ptr::eq(*ft, t) => *fw += w,
                        Some(_) => match extra
                            .iter_mut()
                            .find(|e| e.0 == j && std::ptr::eq(e.1, t))
                        {
                            Some(e) => e.2 += w,
                            None => extra.push((j, t, w)),
                        },
                        slot @ None => *slot = Some((t, w)),
                    }
                }
                KrausOp::Dense { entries, .. } => {
                    sandwich_add(&mut next.data[j * kk..(j + 1) * kk], entries, b, k)
                }
            }
        }
    }
    for (j, f) in first.into_iter().enumerate() {
        if let Some((t, w)) = f {
            outer_add(&mut next.data[j * kk..(j + 1) * kk], t, w);
        }
    }
    for (j, t, w) in extra {
        outer_add(&mut next.data[j * kk..(j + 1) * kk], t, w);
    }
    if transitions.kind == TransitionKind::Conditional {
        let t = next.trace();
        if t <= 0.0 {
            return Err(Error::ZeroSuccessProbability);
        }
        next.deficit = next.deficit.max((1.0 - t).abs());
        next.data.iter_mut().for_each(|x| *x /= t);
    }
    Ok(())
}

/// Trace of each block.
pub fn position_marginal(state: &WalkState) -> Vec<f64> {
    state.blocks().map(|b| block_trace(b, state.dim)).collect()
}

/// Point-mass start iterated with the dense stochastic matrix; entry `t` is
/// the marginal after `t` steps, `t = 0..=steps`.
pub fn classical_marginals(graph: &WalkGraph, start: usize, steps: usize) -> Vec<Vec<f64>> {
    let p = graph.transition_matrix();
    let n = graph.len();
    let mut m = vec![0.0; n];
    m[start] = 1.0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(m.clone());
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for i in 0..n {
            if m[i] != 0.0 {
                for j in 0..n {
                    next[j] += m[i] * p[i][j];
                }
            }
        }
        m = next;
        out.push(m.clone());
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WalkEngine {
    /// Full block evolution.
    #[default]
    Blocks,
    /// Reset-kind only: evolve the position marginal classically and weight
    /// each node by its comparison success probability.
    Marginal,
}

/// Conditional probability of `true_class` after the would-be measurement,
/// for steps `1..=steps`. Graph node `n` holds `train.sample(n)`; the walk
/// starts from the comparison state of `start` (reset kind) or from
/// `(|0> test + |1> e_0) / sqrt(2)` at `start` (conditional kind).
#[allow(clippy::too_many_arguments)]
pub fn success_curve(
    graph: &WalkGraph,
    train: &TrainingSet,
    test: &FeatureVector,
    true_class: ClassId,
    start: usize,
    kind: TransitionKind,
    steps: usize,
    engine: WalkEngine,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::UnsupportedSteps(0));
    }
    if graph.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: train.len(),
        });
    }
    let labels = train.labels();
    let ratio = |weights: &[f64], masses: &[f64]| -> Result<f64> {
        let mut hit = 0.0;
        let mut all = 0.0;
        for ((w, m), &y) in weights.iter().zip(masses).zip(labels) {
            let p = w * m;
            all += p;
            if y == true_class {
                hit += p;
            }
        }
        if all <= 0.0 {
            return Err(Error::ZeroSuccessProbability);
        }
        Ok(hit / all)
    };
    match engine {
        WalkEngine::Blocks => {
            let transitions = TransitionSet::for_kind(graph, kind, Some(test), train)?;
            let psi = match kind {
                TransitionKind::Reset => comparison_vector(test, train.sample(start).0)?,
                TransitionKind::Conditional => {
                    let mut e0 = vec![0.0; test.len()];
                    e0[0] = 1.0;
                    comparison_vector(test, &FeatureVector::new(e0)?)?
                }
            };
            let mut state = WalkState::point(graph.len(), start, &psi)?;
            let mut next = state.clone();
            let ones = vec![1.0; graph.len()];
            let mut out = Vec::with_capacity(steps);
            for _ in 0..steps {
                walk_step_into(&state, graph, &transitions, &mut next)?;
                std::mem::swap(&mut state, &mut next);
                out.push(ratio(&state.success_weights(), &ones)?);
            }
            Ok(out)
        }
        WalkEngine::Marginal => {
            if kind != TransitionKind::Reset {
                return Err(Error::InvalidArgument(
                    "the marginal engine supports reset transitions only".into(),
                ));
            }
            let p0: Vec<f64> = train
                .samples()
                .iter()
                .map(|x| crate::classifier::success_probability(test, x))
                .collect::<Result<_>>()?;
            let n = graph.len();
            let mut m = vec![0.0; n];
            m[start] = 1.0;
            let mut next = vec![0.0; n];
            let mut out = Vec::with_capacity(steps);
            for _ in 0..steps {
                next.iter_mut().for_each(|x| *x = 0.0);
                for (i, &mi) in m.iter().enumerate() {
                    if mi != 0.0 {
                        let w = mi / graph.out_degree(i) as f64;
                        for &j in graph.neighbors(i) {
                            next[j] += w;
                        }
                    }
                }
                std::mem::swap(&mut m, &mut next);
                out.push(ratio(&p0, &m)?);
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartRule {
    /// Middle node of the given class's nodes, in node order.
    MiddleOfClass(ClassId),
    Node(usize),
}

impl StartRule {
    pub fn resolve(self, graph: &WalkGraph) -> Result<usize> {
        match self {
            StartRule::MiddleOfClass(c) => graph
                .middle_of_class(c)
                .ok_or_else(|| Error::InvalidGraph(format!("no node of class {c}"))),
            StartRule::Node(i) if i < graph.len() => Ok(i),
            StartRule::Node(i) => Err(Error::InvalidGraph(format!(
                "start {i} outside {} nodes",
                graph.len()
            ))),
        }
    }
}

/// A walk layout over a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub graph: GraphKind,
    pub arrangement: Arrangement,
    pub start: StartRule,
}

impl Scenario {
    /// Cycle over class blocks, starting in the middle of class A.
    pub fn clustered() -> Self {
        Scenario {
            graph: GraphKind::Cycle,
            arrangement: Arrangement::Clustered,
            start: StartRule::MiddleOfClass(0),
        }
    }

    /// Cycle over ABCABC..., starting at node 0.
    pub fn interleaved() -> Self {
        Scenario {
            graph: GraphKind::Cycle,
            arrangement: Arrangement::Interleaved,
            start: StartRule::Node(0),
        }
    }

    /// Walk for held-out sample `test`: the dataset is arranged, then the
    /// test node is removed.
    pub fn graph_without(&self, labels: &[ClassId], test: usize) -> Result<WalkGraph> {
        let order: Vec<usize> = arrange(labels, self.arrangement)
            .into_iter()
            .filter(|&i| i != test)
            .collect();
        WalkGraph::from_order(self.graph, &order, labels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassCurves {
    pub class_names: Vec<String>,
    /// `values[t][c]`: mean success of class-`c` test samples after `t + 1` steps.
    pub values: Vec<Vec<f64>>,
    /// Channel-model conditionals the curves should approach.
    pub limits: Vec<f64>,
}

impl ClassCurves {
    pub fn at(&self, step: usize) -> &[f64] {
        &self.values[step - 1]
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("at least one step")
    }

    pub fn to_table(&self, name: &str) -> crate::data::Table {
        let columns = self.class_names.iter().map(|c| format!("p_{c}")).collect();
        let mut t = crate::data::Table::new(name, "step", columns);
        for (s, row) in self.values.iter().enumerate() {
            t.push_row((s + 1).to_string(), row.clone());
        }
        t
    }
}

/// Leave-one-out success curves averaged per true class. `dataset` must be
/// preprocessed already.
pub fn class_curves(
    dataset: &Dataset,
    scenario: Scenario,
    steps: usize,
    engine: WalkEngine,
    exec: Execution,
) -> Result<ClassCurves> {
    let labels = dataset.labels();
    let nc = dataset.num_classes();
    let per_test = exec.try_map(dataset.len(), |t| -> Result<(Vec<f64>, f64)> {
        let graph = scenario.graph_without(labels, t)?;
        let samples = graph
            .nodes()
            .iter()
            .map(|n| dataset.features()[n.sample].clone())
            .collect();
        let train_labels = graph.nodes().iter().map(|n| n.label).collect();
        let train = TrainingSet::new(samples, train_labels, nc)?;
        let test = &dataset.features()[t];
        let start = scenario.start.resolve(&graph)?;
        let curve = success_curve(
            &graph,
            &train,
            test,
            labels[t],
            start,
            TransitionKind::Reset,
            steps,
            engine,
        )?;
        let limit = class_distribution(test, &train)?.conditional[labels[t]];
        Ok((curve, limit))
    })?;
    let counts = dataset.class_counts();
    let mut values = vec![vec![0.0; nc]; steps];
    let mut limits = vec![0.0; nc];
    for ((curve, limit), &y) in per_test.iter().zip(labels) {
        let w = 1.0 / counts[y] as f64;
        for (row, v) in values.iter_mut().zip(curve) {
            row[y] += w * v;
        }
        limits[y] += w * limit;
    }
    Ok(ClassCurves {
        class_names: dataset.class_names().to_vec(),
        values,
        limits,
    })
}

/// A party holding private labelled samples. Other code only sees its id.
#[derive(Clone, Debug)]
pub struct Agent {
    id: usize,
    samples: Vec<FeatureVector>,
    labels: Vec<ClassId>,
}

impl Agent {
    pub fn new(id: usize, samples: Vec<FeatureVector>, labels: Vec<ClassId>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if samples.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                found: labels.len(),
            });
        }
        if let Some(x) = samples.iter().find(|x| !x.is_unit()) {
            return Err(Error::NotNormalized(x.norm().powi(2)));
        }
        Ok(Agent {
            id,
            samples,
            labels,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn feature_len(&self) -> usize {
        self.samples[0].len()
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.samples.len())
    }

    /// Applies the conditional operator for its sample `local`, renormalizes,
    /// and returns the squared norm scaled by `d_out` before renormalization.
    fn receive(&self, state: &mut Vec<f64>, local: usize, d_out: usize) -> Result<f64> {
        let op = conditional_op(&self.samples[local], d_out);
        let next = op.apply_dense(state).expect("dense operator");
        let n2: f64 = next.iter().map(|x| x * x).sum();
        if n2 <= 0.0 {
            return Err(Error::ZeroProbabilityBranch);
        }
        let inv = n2.sqrt().recip();
        *state = next.into_iter().map(|x| x * inv).collect();
        Ok(n2 * d_out as f64)
    }

    /// Swaps its sample `local` back to `e_0` on the ancilla-1 branch before
    /// hand-over.
    fn release(&self, state: &mut [f64], local: usize) {
        let d = self.feature_len();
        let mut v = self.samples[local].values().to_vec();
        v[0] -= 1.0;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv < 1e-30 {
            return;
        }
        let branch = &mut state[d..];
        let proj: f64 = branch.iter().zip(&v).map(|(a, b)| a * b).sum();
        let f = 2.0 * proj / vv;
        branch.iter_mut().zip(&v).for_each(|(a, b)| *a -= f * b);
    }

    fn label(&self, local: usize) -> ClassId {
        self.labels[local]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartAgent {
    Fixed(usize),
    /// Chosen with probability proportional to the agent's sample count.
    Random,
}

pub type StopPredicate = Arc<dyn Fn(usize, usize) -> bool + Send + Sync>;

/// When to stop walking and measure.
#[derive(Clone)]
pub enum StopCondition {
    /// Total hops per attempt, counting the initial self-application.
    Hops(usize),
    /// Stops once `predicate(hops, current agent id)` holds; fails after `cap`
    /// hops.
    Until { predicate: StopPredicate, cap: usize },
}

impl fmt::Debug for StopCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopCondition::Hops(n) => write!(f, "Hops({n})"),
            StopCondition::Until { cap, .. } => write!(f, "Until {{ cap: {cap} }}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributedTranscript {
    /// Agent ids visited in each attempt.
    pub attempts: Vec<Vec<usize>>,
    pub label: ClassId,
    /// Largest deviation of `d_out ‖K psi‖²` from one over all hops.
    pub max_deficit: f64,
}

/// Agents sharing a walk graph; node `n` is `agents[n]`.
#[derive(Clone, Debug)]
pub struct AgentNetwork {
    agents: Vec<Agent>,
    graph: WalkGraph,
}

impl AgentNetwork {
    pub fn new(agents: Vec<Agent>, graph: WalkGraph) -> Result<Self> {
        if agents.len() != graph.len() {
            return Err(Error::DimensionMismatch {
                expected: graph.len(),
                found: agents.len(),
            });
        }
        let d = agents[0].feature_len();
        if let Some(a) = agents.iter().find(|a| a.feature_len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: a.feature_len(),
            });
        }
        Ok(AgentNetwork { agents, graph })
    }

    /// Complete graph over the agents; a single agent gets a self-loop.
    pub fn complete(agents: Vec<Agent>) -> Result<Self> {
        let n = agents.len();
        let nodes = (0..n).map(|i| Node { sample: i, label: 0 }).collect();
        let adjacency = if n == 1 {
            vec![vec![0]]
        } else {
            (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect()
        };
        Self::new(agents, WalkGraph::from_adjacency(nodes, adjacency)?)
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn graph(&self) -> &WalkGraph {
        &self.graph
    }
}

/// Runs the multi-party protocol until a label is emitted or `max_attempts`
/// attempts end in ancilla outcome 1.
pub fn run_distributed(
    network: &AgentNetwork,
    test: &FeatureVector,
    seed: u64,
    start: StartAgent,
    stop: &StopCondition,
    max_attempts: usize,
) -> Result<DistributedTranscript> {
    let agents = &network.agents;
    let graph = &network.graph;
    let d = agents[0].feature_len();
    if test.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: test.len(),
        });
    }
    if !test.is_unit() {
        return Err(Error::NotNormalized(test.norm().powi(2)));
    }
    if let StopCondition::Hops(0) = stop {
        return Err(Error::UnsupportedSteps(0));
    }
    let total: usize = agents.iter().map(Agent::num_samples).sum();
    let mut rng = stream_rng(seed, 0);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut transcript = DistributedTranscript {
        attempts: Vec::new(),
        label: 0,
        max_deficit: 0.0,
    };
    for _ in 0..max_attempts {
        let mut at = match start {
            StartAgent::Fixed(a) if a < agents.len() => a,
            StartAgent::Fixed(a) => {
                return Err(Error::InvalidArgument(format!("no agent {a}")));
            }
            StartAgent::Random => {
                let mut u = rng.random_range(0..total);
                let mut a = 0;
                while u >= agents[a].num_samples() {
                    u -= agents[a].num_samples();
                    a += 1;
                }
                a
            }
        };
        let mut state: Vec<f64> = test.values().iter().map(|x| x * r).collect();
        state.extend((0..d).map(|f| if f == 0 { r } else { 0.0 }));
        let mut local = agents[at].pick(&mut rng);
        let n2 = agents[at].receive(&mut state, local, graph.out_degree(at))?;
        transcript.max_deficit = transcript.max_deficit.max((1.0 - n2).abs());
        let mut hops = vec![agents[at].id()];
        loop {
            let done = match stop {
                StopCondition::Hops(n) => hops.len() >= *n,
                StopCondition::Until { predicate, cap } => {
                    if predicate(hops.len(), agents[at].id()) {
                        true
                    } else if hops.len() >= *cap {
                        return Err(Error::CapReached(*cap));
                    } else {
                        false
                    }
                }
            };
            if done {
                break;
            }
            let out = graph.neighbors(at);
            let next = out[rng.random_range(0..out.len())];
            agents[at].release(&mut state, local);
            local = agents[next].pick(&mut rng);
            let n2 = agents[next].receive(&mut state, local, graph.out_degree(at))?;
            transcript.max_deficit = transcript.max_deficit.max((1.0 - n2).abs());
            at = next;
            hops.push(agents[at].id());
        }
        transcript.attempts.push(hops);
        let p0: f64 = 0.5 * (0..d).map(|f| (state[f] + state[d + f]).powi(2)).sum::<f64>();
        if rng.random::<f64>() < p0 {
            transcript.label = agents[at].label(local);
            return Ok(transcript);
        }
    }
    Err(Error::CapReached(max_attempts))
}
