//! Rendering preparation in two stages.
//!
//! [`layout`] computes a deterministic layered layout:
//!
//! 1. back edges are found by a depth-first search from the head that visits
//!    successors in canonical node order (edges into the head or out of the
//!    tail are always treated as back edges);
//! 2. ranks are longest-path distances from the sources over the remaining
//!    edges, with the tail pushed below every other node;
//! 3. each rank is ordered by barycenter sweeps (a fixed number of down/up
//!    passes), ties broken by node order, i.e. block address;
//! 4. `y = rank * row_height` and `x = slot * col_width`, every rank centered
//!    on the widest one.
//!
//! [`anomaly_map`] then colors every edge gray or red against a weight
//! threshold. An edge is red iff its weight is strictly above the threshold;
//! red intensity is `weight / max_weight`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvg::Cvg;
use crate::diff::DiffLsg;
use crate::lsg::Lsg;
use crate::node::NodeId;
use crate::trace::FunctionRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("graph of function {0} lacks a head or tail node")]
    MissingHeadTail(usize),
    #[error("layout does not belong to this graph: {0}")]
    LayoutMismatch(String),
}

/// Per-edge payload carried through to the styled graph for inspection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faulty_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Anything that can be laid out and styled: golden LSGs (weight = count),
/// diffs (weight = |golden - faulty|) and CVGs (weight = max over runs).
pub trait WeightedGraph {
    fn function_index(&self) -> usize;
    fn node_ids(&self) -> &BTreeSet<NodeId>;
    /// Edges in canonical `(from, to)` order.
    fn weighted_edges(&self) -> Vec<(NodeId, NodeId, u64, EdgeDetail)>;
}

impl WeightedGraph for Lsg {
    fn function_index(&self) -> usize {
        self.function_index
    }
    fn node_ids(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }
    fn weighted_edges(&self) -> Vec<(NodeId, NodeId, u64, EdgeDetail)> {
        self.edges
            .iter()
            .map(|(&(f, t), &c)| {
                (
                    f,
                    t,
                    c,
                    EdgeDetail {
                        count: Some(c),
                        ..Default::default()
                    },
                )
            })
            .collect()
    }
}

impl WeightedGraph for DiffLsg {
    fn function_index(&self) -> usize {
        self.function_index
    }
    fn node_ids(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }
    fn weighted_edges(&self) -> Vec<(NodeId, NodeId, u64, EdgeDetail)> {
        self.edges
            .iter()
            .map(|(&(f, t), e)| {
                let detail = EdgeDetail {
                    golden_count: Some(e.golden_count),
                    faulty_count: Some(e.faulty_count),
                    ..Default::default()
                };
                (f, t, e.weight(), detail)
            })
            .collect()
    }
}

impl WeightedGraph for Cvg {
    fn function_index(&self) -> usize {
        self.function_index
    }
    fn node_ids(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }
    fn weighted_edges(&self) -> Vec<(NodeId, NodeId, u64, EdgeDetail)> {
        self.edges
            .iter()
            .map(|(&(f, t), v)| {
                let detail = EdgeDetail {
                    weights: Some(v.weights.clone()),
                    freq: Some(v.freq),
                    mean_w: Some(v.mean_w),
                    score: Some(v.score),
                    ..Default::default()
                };
                (f, t, v.max_w, detail)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutOptions {
    pub row_height: f64,
    pub col_width: f64,
    /// Number of down-then-up barycenter passes.
    pub sweeps: usize,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        LayoutOptions {
            row_height: 90.0,
            col_width: 140.0,
            sweeps: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub id: NodeId,
    pub rank: u32,
    pub slot: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub reversed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutGraph {
    pub function_index: usize,
    pub row_height: f64,
    pub col_width: f64,
    pub canvas: Canvas,
    /// Canonical node order.
    pub nodes: Vec<LayoutNode>,
    /// Canonical edge order.
    pub edges: Vec<LayoutEdge>,
}

impl LayoutGraph {
    pub fn node(&self, id: NodeId) -> Option<&LayoutNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn max_rank(&self) -> u32 {
        self.nodes.iter().map(|n| n.rank).max().unwrap_or(0)
    }
}

pub fn layout<G: WeightedGraph + ?Sized>(graph: &G) -> Result<LayoutGraph, LayoutError> {
    layout_with(graph, &LayoutOptions::default())
}

pub fn layout_with<G: WeightedGraph + ?Sized>(
    graph: &G,
    opts: &LayoutOptions,
) -> Result<LayoutGraph, LayoutError> {
    let ids: Vec<NodeId> = graph.node_ids().iter().copied().collect();
    if ids.first() != Some(&NodeId::Head) || ids.last() != Some(&NodeId::Tail) {
        return Err(LayoutError::MissingHeadTail(graph.function_index()));
    }
    let n = ids.len();
    let tail = n - 1;
    let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edges: Vec<(usize, usize)> = graph
        .weighted_edges()
        .iter()
        .map(|(f, t, _, _)| {
            let lookup = |id: &NodeId| {
                index.get(id).copied().ok_or_else(|| {
                    LayoutError::LayoutMismatch(format!("edge endpoint {id} is not a node"))
                })
            };
            Ok((lookup(f)?, lookup(t)?))
        })
        .collect::<Result<_, LayoutError>>()?;

    // Successor lists are in canonical order because `edges` is.
    let mut succ: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(f, t)) in edges.iter().enumerate() {
        succ[f].push((t, e));
    }

    // 1. back edges
    let mut reversed = vec![false; edges.len()];
    for (e, &(f, t)) in edges.iter().enumerate() {
        if t == 0 || f == tail {
            reversed[e] = true;
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        mark[root] = Mark::Open;
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(top) = stack.last_mut() {
            let (v, next) = *top;
            if let Some(&(w, e)) = succ[v].get(next) {
                top.1 += 1;
                match mark[w] {
                    Mark::Open => reversed[e] = true,
                    Mark::New => {
                        mark[w] = Mark::Open;
                        stack.push((w, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }

    // 2. longest-path ranks over the forward edges (Kahn, smallest node first)
    let mut indeg = vec![0usize; n];
    let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(f, t)) in edges.iter().enumerate() {
        if !reversed[e] {
            indeg[t] += 1;
            fwd[f].push(t);
            preds[t].push(f);
        }
    }
    let mut rank = vec![0u32; n];
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = ready.pop_first() {
        for &w in &fwd[v] {
            rank[w] = rank[w].max(rank[v] + 1);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    let deepest_other = rank[..tail].iter().copied().max().unwrap_or(0);
    rank[tail] = rank[tail].max(deepest_other + 1);
    let max_rank = rank[tail];

    // 3. barycenter ordering
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); max_rank as usize + 1];
    for v in 0..n {
        layers[rank[v] as usize].push(v);
    }
    let mut pos = vec![0f64; n];
    let place = |layer: &[usize], pos: &mut [f64]| {
        let mid = (layer.len() as f64 - 1.0) / 2.0;
        for (slot, &v) in layer.iter().enumerate() {
            pos[v] = slot as f64 - mid;
        }
    };
    for layer in &layers {
        place(layer, &mut pos);
    }
    let reorder = |layer: &mut Vec<usize>, neigh: &[Vec<usize>], pos: &mut [f64]| {
        let mut keyed: Vec<(f64, usize)> = layer
            .iter()
            .map(|&v| {
                let ns = &neigh[v];
                let bary = if ns.is_empty() {
                    pos[v]
                } else {
                    ns.iter().map(|&u| pos[u]).sum::<f64>() / ns.len() as f64
                };
                (bary, v)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        *layer = keyed.into_iter().map(|(_, v)| v).collect();
        place(layer, pos);
    };
    for _ in 0..opts.sweeps {
        for layer in layers.iter_mut().skip(1) {
            reorder(layer, &preds, &mut pos);
        }
        for layer in layers.iter_mut().rev().skip(1) {
            reorder(layer, &fwd, &mut pos);
        }
    }

    // 4. coordinates
    let widest = layers.iter().map(Vec::len).max().unwrap_or(1);
    let mut slot = vec![0u32; n];
    let mut x = vec![0f64; n];
    for layer in &layers {
        let offset = (widest - layer.len()) as f64 / 2.0;
        for (s, &v) in layer.iter().enumerate() {
            slot[v] = s as u32;
            x[v] = (offset + s as f64) * opts.col_width;
        }
    }

    Ok(LayoutGraph {
        function_index: graph.function_index(),
        row_height: opts.row_height,
        col_width: opts.col_width,
        canvas: Canvas {
            width: widest as f64 * opts.col_width,
            height: f64::from(max_rank + 1) * opts.row_height,
        },
        nodes: (0..n)
            .map(|v| LayoutNode {
                id: ids[v],
                rank: rank[v],
                slot: slot[v],
                x: x[v],
                y: f64::from(rank[v]) * opts.row_height,
            })
            .collect(),
        edges: edges
            .iter()
            .zip(&reversed)
            .map(|(&(f, t), &r)| LayoutEdge {
                from: ids[f],
                to: ids[t],
                reversed: r,
            })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStyle {
    HeadYellow,
    TailRed,
    BlockDefault,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStyle {
    Gray,
    Red,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyledNode {
    #[serde(flatten)]
    pub layout: LayoutNode,
    pub style: NodeStyle,
    /// Source line range, when the symbol table maps this block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyledEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub reversed: bool,
    pub weight: u64,
    pub style: EdgeStyle,
    /// `weight / max_weight`, present for red edges only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    #[serde(flatten)]
    pub detail: EdgeDetail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyledGraph {
    pub function_index: usize,
    pub threshold: u64,
    pub max_weight: u64,
    pub row_height: f64,
    pub col_width: f64,
    pub canvas: Canvas,
    pub nodes: Vec<StyledNode>,
    pub edges: Vec<StyledEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
}

impl StyledGraph {
    pub fn red_edges(&self) -> impl Iterator<Item = &StyledEdge> {
        self.edges.iter().filter(|e| e.style == EdgeStyle::Red)
    }

    /// Adds the function name and, where known, source file and line ranges.
    pub fn attach_source(&mut self, symbol: &FunctionRecord) {
        self.function_name = Some(symbol.name.clone());
        self.source_file = symbol.source_file.clone();
        for node in &mut self.nodes {
            if let NodeId::Block(addr) = node.layout.id {
                node.lines = symbol.source_line_map.get(&addr).copied();
            }
        }
    }
}

pub fn anomaly_map<G: WeightedGraph + ?Sized>(
    graph: &G,
    threshold: u64,
    layout: &LayoutGraph,
) -> Result<StyledGraph, LayoutError> {
    if layout.function_index != graph.function_index() {
        return Err(LayoutError::LayoutMismatch(format!(
            "layout of function {} for graph of function {}",
            layout.function_index,
            graph.function_index()
        )));
    }
    if !layout
        .nodes
        .iter()
        .map(|n| n.id)
        .eq(graph.node_ids().iter().copied())
    {
        return Err(LayoutError::LayoutMismatch("node sets differ".into()));
    }
    let edges = graph.weighted_edges();
    let reversed: BTreeMap<(NodeId, NodeId), bool> = layout
        .edges
        .iter()
        .map(|e| ((e.from, e.to), e.reversed))
        .collect();
    if reversed.len() != edges.len()
        || edges
            .iter()
            .any(|(f, t, _, _)| !reversed.contains_key(&(*f, *t)))
    {
        return Err(LayoutError::LayoutMismatch("edge sets differ".into()));
    }
    let max_weight = edges.iter().map(|e| e.2).max().unwrap_or(0);

    let nodes = layout
        .nodes
        .iter()
        .map(|n| StyledNode {
            layout: n.clone(),
            style: match n.id {
                NodeId::Head => NodeStyle::HeadYellow,
                NodeId::Tail => NodeStyle::TailRed,
                NodeId::Block(_) => NodeStyle::BlockDefault,
            },
            lines: None,
        })
        .collect();
    let edges = edges
        .into_iter()
        .map(|(from, to, weight, detail)| {
            let red = weight > threshold;
            StyledEdge {
                from,
                to,
                reversed: reversed[&(from, to)],
                weight,
                style: if red { EdgeStyle::Red } else { EdgeStyle::Gray },
                intensity: red.then(|| weight as f64 / max_weight as f64),
                detail,
            }
        })
        .collect();
    Ok(StyledGraph {
        function_index: graph.function_index(),
        threshold,
        max_weight,
        row_height: layout.row_height,
        col_width: layout.col_width,
        canvas: layout.canvas,
        nodes,
        edges,
        function_name: None,
        source_file: None,
    })
}
