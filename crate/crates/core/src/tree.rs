//! Topic hierarchy and the Gaussian-diffusion prior precision built on it.
//!
//! Node 0 is always the corpus-level node. Every other node is a topic that
//! documents may be labeled to. A node with at least one child is a *parent*
//! and owns one differential-usage variance per word.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("duplicate node id {0}")]
    DuplicateId(usize),
    #[error("multiple root nodes: {0} and {1}")]
    MultipleRoots(usize, usize),
    #[error("no root node (every record has a parent)")]
    NoRoot,
    #[error("root node must have id 0, found {0}")]
    RootNotZero(usize),
    #[error("node ids must be contiguous 0..{expected}, missing {missing}")]
    NonContiguousIds { expected: usize, missing: usize },
    #[error("cycle detected through node {0}")]
    CycleDetected(usize),
    #[error("node {child} references missing parent {parent}")]
    DanglingParent { child: usize, parent: usize },
    #[error("variance for node {node} must be positive, got {value}")]
    NonPositiveVariance { node: usize, value: f64 },
    #[error("expected {expected} parent variances, got {got}")]
    VarianceCount { expected: usize, got: usize },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
}

/// One row of the tree file: `child_id,parent_id,name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub name: String,
}

impl NodeRecord {
    pub fn new(id: usize, parent: Option<usize>, name: impl Into<String>) -> Self {
        Self {
            id,
            parent,
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicTree {
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    /// Nodes with at least one child, ascending.
    parents: Vec<usize>,
    /// `parent_slot[node]` is the index of `node` in `parents`.
    parent_slot: Vec<Option<usize>>,
}

impl TopicTree {
    pub const ROOT: usize = 0;

    pub fn parse(records: &[NodeRecord]) -> Result<Self, TreeError> {
        let mut by_id: BTreeMap<usize, &NodeRecord> = BTreeMap::new();
        for rec in records {
            if by_id.insert(rec.id, rec).is_some() {
                return Err(TreeError::DuplicateId(rec.id));
            }
        }

        let mut root = None;
        for rec in by_id.values() {
            if rec.parent.is_none() {
                if let Some(first) = root {
                    return Err(TreeError::MultipleRoots(first, rec.id));
                }
                root = Some(rec.id);
            }
        }
        let root = root.ok_or(TreeError::NoRoot)?;

        for rec in by_id.values() {
            if let Some(p) = rec.parent {
                if !by_id.contains_key(&p) {
                    return Err(TreeError::DanglingParent {
                        child: rec.id,
                        parent: p,
                    });
                }
            }
        }

        // Walk up from every node; a path longer than the node count, or one
        // that revisits a node, is a cycle.
        for rec in by_id.values() {
            let mut seen = HashSet::new();
            let mut cur = rec.id;
            while let Some(p) = by_id[&cur].parent {
                if !seen.insert(cur) {
                    return Err(TreeError::CycleDetected(cur));
                }
                cur = p;
            }
        }

        if root != Self::ROOT {
            return Err(TreeError::RootNotZero(root));
        }
        let n = by_id.len();
        if let Some(missing) = (0..n).find(|i| !by_id.contains_key(i)) {
            return Err(TreeError::NonContiguousIds {
                expected: n,
                missing,
            });
        }

        let names: Vec<String> = (0..n).map(|i| by_id[&i].name.clone()).collect();
        let parent: Vec<Option<usize>> = (0..n).map(|i| by_id[&i].parent).collect();
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        // ids are visited in ascending order so the child lists are sorted

        let mut depth = vec![0; n];
        let mut stack = vec![Self::ROOT];
        while let Some(node) = stack.pop() {
            for &c in &children[node] {
                depth[c] = depth[node] + 1;
                stack.push(c);
            }
        }

        let parents: Vec<usize> = (0..n).filter(|&i| !children[i].is_empty()).collect();
        let mut parent_slot = vec![None; n];
        for (slot, &p) in parents.iter().enumerate() {
            parent_slot[p] = Some(slot);
        }

        Ok(Self {
            names,
            parent,
            children,
            depth,
            parents,
            parent_slot,
        })
    }

    /// A corpus node with `level_sizes[0]` children, each of which has
    /// `level_sizes[1]` children, and so on. Ids are assigned breadth first.
    pub fn balanced(level_sizes: &[usize]) -> Self {
        let mut records = vec![NodeRecord::new(0, None, "root")];
        let mut frontier = vec![0usize];
        let mut next = 1;
        for (level, &width) in level_sizes.iter().enumerate() {
            let mut new_frontier = Vec::new();
            for &p in &frontier {
                for j in 0..width {
                    let name = if level == 0 {
                        format!("T{}", j + 1)
                    } else {
                        format!("{}.{}", records[p].name, j + 1)
                    };
                    records.push(NodeRecord::new(next, Some(p), name));
                    new_frontier.push(next);
                    next += 1;
                }
            }
            frontier = new_frontier;
        }
        Self::parse(&records).expect("balanced tree is valid")
    }

    pub fn records(&self) -> Vec<NodeRecord> {
        (0..self.n_nodes())
            .map(|i| NodeRecord::new(i, self.parent[i], self.names[i].clone()))
            .collect()
    }

    /// All nodes including the corpus node.
    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    /// Label targets: every non-root node.
    pub fn n_topics(&self) -> usize {
        self.n_nodes() - 1
    }

    /// Topic index `k` in `0..n_topics()` corresponds to node `k + 1`.
    pub fn topic_node(k: usize) -> usize {
        k + 1
    }

    pub fn topic_index(node: usize) -> Option<usize> {
        node.checked_sub(1)
    }

    pub fn contains(&self, node: usize) -> bool {
        node < self.n_nodes()
    }

    pub fn is_topic(&self, node: usize) -> bool {
        node != Self::ROOT && self.contains(node)
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn n_parents(&self) -> usize {
        self.parents.len()
    }

    pub fn parent_slot(&self, node: usize) -> Option<usize> {
        self.parent_slot[node]
    }

    /// Strict ancestors of `node`, nearest first, ending at the root.
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn is_strict_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            if p == ancestor {
                return true;
            }
            cur = p;
        }
        false
    }

    pub fn deepest_common_ancestor(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root has parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root has parent");
        }
        while a != b {
            a = self.parent[a].expect("non-root has parent");
            b = self.parent[b].expect("non-root has parent");
        }
        a
    }

    /// Nodes ordered so that every parent precedes its children.
    pub fn breadth_first(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n_nodes());
        order.push(Self::ROOT);
        let mut i = 0;
        while i < order.len() {
            let node = order[i];
            order.extend_from_slice(&self.children[node]);
            i += 1;
        }
        order
    }
}

/// Sparse symmetric precision of the joint Gaussian prior on one word's log
/// rates. Off-diagonal entries exist only on parent-child edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    diag: Vec<f64>,
    /// `(parent, child, value)`, value is the (negative) off-diagonal entry.
    edges: Vec<(usize, usize, f64)>,
}

impl PrecisionMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.edges
            .iter()
            .find(|&&(p, c, _)| (p == i && c == j) || (p == j && c == i))
            .map_or(0.0, |e| e.2)
    }

    /// `out = Λ x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (d, xi)) in out.iter_mut().zip(self.diag.iter().zip(x)) {
            *o = d * xi;
        }
        for &(p, c, v) in &self.edges {
            out[p] += v * x[c];
            out[c] += v * x[p];
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `xᵀ Λ x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut q: f64 = self.diag.iter().zip(x).map(|(d, xi)| d * xi * xi).sum();
        for &(p, c, v) in &self.edges {
            q += 2.0 * v * x[p] * x[c];
        }
        q
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for &(p, c, v) in &self.edges {
            m[(p, c)] += v;
            m[(c, p)] += v;
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }
}

/// Precision of the diffusion prior: the corpus node has variance `gamma2`
/// around ψ and each child varies around its parent with variance
/// `tau2[parent_slot(parent)]`.
pub fn build_precision(
    tree: &TopicTree,
    gamma2: f64,
    tau2: &[f64],
) -> Result<PrecisionMatrix, TreeError> {
    if !(gamma2 > 0.0) || !gamma2.is_finite() {
        return Err(TreeError::NonPositiveVariance {
            node: TopicTree::ROOT,
            value: gamma2,
        });
    }
    if tau2.len() != tree.n_parents() {
        return Err(TreeError::VarianceCount {
            expected: tree.n_parents(),
            got: tau2.len(),
        });
    }
    let mut diag = vec![0.0; tree.n_nodes()];
    diag[TopicTree::ROOT] = 1.0 / gamma2;
    let mut edges = Vec::with_capacity(tree.n_nodes() - 1);
    for (slot, &p) in tree.parents().iter().enumerate() {
        let t = tau2[slot];
        if !(t > 0.0) || !t.is_finite() {
            return Err(TreeError::NonPositiveVariance { node: p, value: t });
        }
        let prec = 1.0 / t;
        for &c in tree.children(p) {
            diag[c] += prec;
            diag[p] += prec;
            edges.push((p, c, -prec));
        }
    }
    Ok(PrecisionMatrix { diag, edges })
}
