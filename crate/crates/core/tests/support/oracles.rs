//! Seeded random inputs and brute-force reference implementations used by
//! the property suites and the acceptance runner. Nothing here calls into the
//! graph builders it is meant to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use resil_core::lsg::EdgeKey;
use resil_core::{
    BlockAddr, DiffLsg, FunctionRecord, InjectionSite, Lsg, NodeId, RunKind, RunTrace, TraceEvent,
};

/// Balanced random trace over `functions` functions with at most
/// `max_events` events. Some functions may never be called.
pub fn random_run(
    rng: &mut impl Rng,
    run_id: &str,
    kind: RunKind,
    functions: usize,
    max_events: usize,
) -> RunTrace {
    let symbols: Vec<FunctionRecord> = (0..functions)
        .map(|i| FunctionRecord::new(i, format!("f{i}")))
        .collect();
    let max_depth = 6;
    let budget = max_events.saturating_sub(max_depth);
    let target = rng.random_range(0..=budget);
    let mut events = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    while events.len() < target {
        let roll = rng.random_range(0..100);
        if stack.is_empty() || (roll < 20 && stack.len() < max_depth) {
            let f = rng.random_range(0..functions);
            events.push(TraceEvent::Call { function: f });
            stack.push(f);
        } else if roll < 75 {
            let f = *stack.last().unwrap();
            let addr = 0x1000 * (f as u64 + 1) + 0x10 * rng.random_range(0..5u64);
            events.push(TraceEvent::Block {
                function: f,
                addr: BlockAddr(addr),
            });
        } else {
            let f = stack.pop().unwrap();
            events.push(TraceEvent::Return { function: f });
        }
    }
    while let Some(f) = stack.pop() {
        events.push(TraceEvent::Return { function: f });
    }
    let injection = (kind == RunKind::Faulty).then(|| InjectionSite {
        function_index: rng.random_range(0..functions),
        dynamic_event_index: rng.random_range(0..100),
        bit: rng.random_range(0..64),
    });
    RunTrace {
        run_id: run_id.to_string(),
        kind,
        injection,
        symbols,
        events,
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct OracleLsg {
    pub invocations: u64,
    pub edges: BTreeMap<EdgeKey, u64>,
}

/// Groups blocks by invocation first, then counts consecutive pairs of
/// `head, blocks..., tail` per invocation.
pub fn oracle_lsgs(run: &RunTrace) -> BTreeMap<usize, OracleLsg> {
    let mut owner: Vec<usize> = Vec::new();
    let mut paths: Vec<Vec<NodeId>> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for ev in &run.events {
        match *ev {
            TraceEvent::Call { function } => {
                open.push(owner.len());
                owner.push(function);
                paths.push(vec![NodeId::Head]);
            }
            TraceEvent::Block { addr, .. } => {
                paths[*open.last().unwrap()].push(NodeId::Block(addr))
            }
            TraceEvent::Return { .. } => {
                paths[open.pop().unwrap()].push(NodeId::Tail);
            }
        }
    }
    let mut out: BTreeMap<usize, OracleLsg> = run
        .symbols
        .iter()
        .map(|s| (s.index, OracleLsg::default()))
        .collect();
    for (f, path) in owner.iter().zip(&paths) {
        let entry = out.get_mut(f).unwrap();
        entry.invocations += 1;
        for w in path.windows(2) {
            *entry.edges.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }
    out
}

/// Edge weights of the difference of two LSGs, absent edges counting as 0.
pub fn oracle_diff(golden: &Lsg, faulty: &Lsg) -> BTreeMap<EdgeKey, u64> {
    let keys: BTreeSet<EdgeKey> = golden
        .edges
        .keys()
        .chain(faulty.edges.keys())
        .copied()
        .collect();
    keys.into_iter()
        .map(|k| {
            let g = golden.edges.get(&k).copied().unwrap_or(0) as i128;
            let f = faulty.edges.get(&k).copied().unwrap_or(0) as i128;
            (k, (g - f).unsigned_abs() as u64)
        })
        .collect()
}

#[derive(Debug, PartialEq)]
pub struct OracleVector {
    pub weights: Vec<u64>,
    pub freq: f64,
    pub max_w: u64,
    pub mean_w: f64,
    pub score: f64,
}

/// Per-edge weight vectors and aggregates over a list of diffs.
pub fn oracle_cvg(diffs: &[&DiffLsg]) -> BTreeMap<EdgeKey, OracleVector> {
    let mut keys = BTreeSet::new();
    for d in diffs {
        keys.extend(d.edges.keys().copied());
    }
    let mut out: BTreeMap<EdgeKey, OracleVector> = BTreeMap::new();
    for k in keys {
        let weights: Vec<u64> = diffs
            .iter()
            .map(|d| {
                d.edges
                    .get(&k)
                    .map_or(0, |e| e.golden_count.abs_diff(e.faulty_count))
            })
            .collect();
        let n = weights.len() as f64;
        let mut max_w = 0;
        let mut sum = 0;
        let mut hits = 0;
        for &w in &weights {
            max_w = max_w.max(w);
            sum += w;
            if w != 0 {
                hits += 1;
            }
        }
        out.insert(
            k,
            OracleVector {
                freq: hits as f64 / n,
                max_w,
                mean_w: sum as f64 / n,
                score: 0.0,
                weights,
            },
        );
    }
    let global = out.values().map(|v| v.max_w).max().unwrap_or(0);
    if global != 0 {
        for v in out.values_mut() {
            v.score = v.freq * (v.max_w as f64 / global as f64);
        }
    }
    out
}

/// Arbitrary directed graph over head, tail and up to `blocks` blocks, with
/// edges anywhere (including into head, out of tail and self loops).
pub fn random_graph(rng: &mut impl Rng, function_index: usize, blocks: usize, edges: usize) -> Lsg {
    let mut g = Lsg::empty(function_index);
    let mut ids = vec![NodeId::Head, NodeId::Tail];
    for i in 0..blocks {
        let id = NodeId::block(0x100 + 0x10 * i as u64);
        ids.push(id);
        g.nodes.insert(id);
    }
    for _ in 0..edges {
        let from = ids[rng.random_range(0..ids.len())];
        let to = ids[rng.random_range(0..ids.len())];
        *g.edges.entry((from, to)).or_insert(0) += rng.random_range(1..50);
    }
    g
}

pub const LOOP10_HEADER: u64 = 0x1010;
pub const LOOP10_LATCH: u64 = 0x1020;

#[derive(Debug, PartialEq, Eq)]
pub struct Loop10Outcome {
    /// Executed latch -> header transitions.
    pub back_edges: u64,
    /// `None` when the run hit the step limit.
    pub output: Option<u64>,
}

/// Hand-written model of `fixtures/programs/loop10.toy` with a single bit
/// flip of register `reg` applied on entry to the `event`-th block (0-based),
/// before the block's instructions run. Every call, block and return counts
/// toward `step_limit`.
pub fn loop10_oracle(fault: Option<(u64, usize, u8)>, step_limit: u64) -> Loop10Outcome {
    #[derive(Clone, Copy, PartialEq)]
    enum B {
        Init,
        Header,
        Latch,
        Exit,
    }
    let mut r = [0u64; 5];
    let mut steps = 0u64;
    let mut block_index = 0u64;
    let mut back_edges = 0u64;
    let mut step = || {
        steps += 1;
        steps <= step_limit
    };
    let crash = |back_edges| Loop10Outcome {
        back_edges,
        output: None,
    };

    // C main
    if !step() {
        return crash(back_edges);
    }
    let mut prev: Option<B> = None;
    let mut at = B::Init;
    loop {
        if !step() {
            return crash(back_edges);
        }
        if let Some((event, reg, bit)) = fault {
            if event == block_index {
                r[reg] ^= 1 << bit;
            }
        }
        block_index += 1;
        if prev == Some(B::Latch) && at == B::Header {
            back_edges += 1;
        }
        prev = Some(at);
        at = match at {
            B::Init => {
                r[0] = 0;
                r[1] = 10;
                r[2] = 0;
                B::Header
            }
            B::Header => {
                r[2] = r[2].wrapping_add(r[0]);
                B::Latch
            }
            B::Latch => {
                r[3] = 1;
                r[0] = r[0].wrapping_add(r[3]);
                r[3] = u64::from(r[0] < r[1]);
                if r[3] != 0 {
                    B::Header
                } else {
                    B::Exit
                }
            }
            B::Exit => {
                // R main
                if !step() {
                    return crash(back_edges);
                }
                return Loop10Outcome {
                    back_edges,
                    output: Some(r[2]),
                };
            }
        };
    }
}
