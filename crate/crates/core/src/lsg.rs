//! Loop sensitive graphs: per-function control-flow graphs rebuilt from a
//! trace, with a synthetic head and tail and edges weighted by how many times
//! each transition executed. Loop iterations therefore show up as edge
//! multiplicity instead of being collapsed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::NodeId;
use crate::trace::{RunTrace, TraceEvent};

pub type EdgeKey = (NodeId, NodeId);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lsg {
    pub function_index: usize,
    pub nodes: BTreeSet<NodeId>,
    /// Only edges that executed at least once are stored.
    pub edges: BTreeMap<EdgeKey, u64>,
    pub invocations: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LsgError {
    #[error("function {0} is not in the run's symbol table")]
    UnknownFunction(usize),
    #[error("invalid LSG for function {function}: {reason}")]
    Invalid { function: usize, reason: String },
}

impl Lsg {
    /// Head and tail only, no invocations.
    pub fn empty(function_index: usize) -> Self {
        Lsg {
            function_index,
            nodes: [NodeId::Head, NodeId::Tail].into_iter().collect(),
            edges: BTreeMap::new(),
            invocations: 0,
        }
    }

    fn bump(&mut self, from: NodeId, to: NodeId) {
        self.nodes.insert(from);
        self.nodes.insert(to);
        *self.edges.entry((from, to)).or_insert(0) += 1;
    }

    pub fn block_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_block()).count()
    }

    pub fn total_count(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Checks structural and flow invariants; used when loading persisted graphs.
    pub fn validate(&self) -> Result<(), LsgError> {
        let invalid = |reason: String| {
            Err(LsgError::Invalid {
                function: self.function_index,
                reason,
            })
        };
        if !self.nodes.contains(&NodeId::Head) || !self.nodes.contains(&NodeId::Tail) {
            return invalid("missing head or tail".into());
        }
        let mut inflow: BTreeMap<NodeId, u64> = BTreeMap::new();
        let mut outflow: BTreeMap<NodeId, u64> = BTreeMap::new();
        for (&(from, to), &count) in &self.edges {
            if count == 0 {
                return invalid(format!("zero-count edge {from} -> {to}"));
            }
            if to == NodeId::Head || from == NodeId::Tail {
                return invalid(format!("edge {from} -> {to} enters head or leaves tail"));
            }
            if !self.nodes.contains(&from) || !self.nodes.contains(&to) {
                return invalid(format!("edge {from} -> {to} references an unknown node"));
            }
            *outflow.entry(from).or_default() += count;
            *inflow.entry(to).or_default() += count;
        }
        for node in self.nodes.iter().filter(|n| n.is_block()) {
            let (i, o) = (
                inflow.get(node).copied().unwrap_or(0),
                outflow.get(node).copied().unwrap_or(0),
            );
            if i != o || i == 0 {
                return invalid(format!("flow at {node}: in {i}, out {o}"));
            }
        }
        let head_out = outflow.get(&NodeId::Head).copied().unwrap_or(0);
        let tail_in = inflow.get(&NodeId::Tail).copied().unwrap_or(0);
        if head_out != self.invocations || tail_in != self.invocations {
            return invalid(format!(
                "head out {head_out}, tail in {tail_in}, invocations {}",
                self.invocations
            ));
        }
        Ok(())
    }
}

/// Replays the call stack. Each frame remembers the last node it visited, so
/// blocks of a callee never become successors of the caller's blocks.
fn replay(run: &RunTrace, mut sink: impl FnMut(usize, Step)) {
    let mut frames: Vec<(usize, NodeId)> = Vec::new();
    for ev in &run.events {
        match *ev {
            TraceEvent::Call { function } => {
                frames.push((function, NodeId::Head));
                sink(function, Step::Invoke);
            }
            TraceEvent::Block { function, addr } => {
                if let Some((_, last)) = frames.last_mut() {
                    let to = NodeId::Block(addr);
                    sink(function, Step::Edge(*last, to));
                    *last = to;
                }
            }
            TraceEvent::Return { function } => {
                if let Some((_, last)) = frames.pop() {
                    sink(function, Step::Edge(last, NodeId::Tail));
                }
            }
        }
    }
}

enum Step {
    Invoke,
    Edge(NodeId, NodeId),
}

fn apply(lsg: &mut Lsg, step: Step) {
    match step {
        Step::Invoke => lsg.invocations += 1,
        Step::Edge(from, to) => lsg.bump(from, to),
    }
}

/// LSG of a single function. The run is expected to pass
/// [`crate::trace::validate_run`].
pub fn build_lsg(run: &RunTrace, function_index: usize) -> Result<Lsg, LsgError> {
    if !run.has_function(function_index) {
        return Err(LsgError::UnknownFunction(function_index));
    }
    let mut lsg = Lsg::empty(function_index);
    replay(run, |f, step| {
        if f == function_index {
            apply(&mut lsg, step);
        }
    });
    Ok(lsg)
}

/// One LSG per function in the symbol table, in a single pass.
pub fn build_all_lsgs(run: &RunTrace) -> BTreeMap<usize, Lsg> {
    let mut all: BTreeMap<usize, Lsg> = run
        .symbols
        .iter()
        .map(|s| (s.index, Lsg::empty(s.index)))
        .collect();
    replay(run, |f, step| {
        if let Some(lsg) = all.get_mut(&f) {
            apply(lsg, step);
        }
    });
    all
}

#[derive(Serialize, Deserialize)]
struct LsgWire {
    function_index: usize,
    invocations: u64,
    nodes: Vec<NodeId>,
    edges: Vec<LsgEdgeWire>,
}

#[derive(Serialize, Deserialize)]
struct LsgEdgeWire {
    from: NodeId,
    to: NodeId,
    count: u64,
}

impl Serialize for Lsg {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LsgWire {
            function_index: self.function_index,
            invocations: self.invocations,
            nodes: self.nodes.iter().copied().collect(),
            edges: self
                .edges
                .iter()
                .map(|(&(from, to), &count)| LsgEdgeWire { from, to, count })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Lsg {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = LsgWire::deserialize(deserializer)?;
        let mut edges = BTreeMap::new();
        for e in wire.edges {
            if edges.insert((e.from, e.to), e.count).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate edge {} -> {}",
                    e.from, e.to
                )));
            }
        }
        Ok(Lsg {
            function_index: wire.function_index,
            invocations: wire.invocations,
            nodes: wire.nodes.into_iter().collect(),
            edges,
        })
    }
}
