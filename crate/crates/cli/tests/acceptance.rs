//! Acceptance runner: one PASS/FAIL line per criterion, with its runtime.
//! Exits non-zero if any criterion fails.

#[path = "../../core/tests/support/dot_grammar.rs"]
mod dot_grammar;
#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resil_client::Client;
use resil_core::diff::status_of;
use resil_core::harness::{FaultSpec, Interpreter, Outcome, ToyProgram};
use resil_core::layout::{EdgeStyle, WeightedGraph};
use resil_core::workspace::{ExportFormat, View, Workspace};
use resil_core::{
    accumulate, anomaly_map, build_all_lsgs, build_lsg, canonical, diff_lsg, layout, BlockAddr,
    DiffLsg, NodeId, RunKind, Status, TraceEvent,
};
use sha2::{Digest, Sha256};

use oracles::{
    loop10_oracle, oracle_cvg, oracle_diff, oracle_lsgs, random_graph, random_run, LOOP10_HEADER,
    LOOP10_LATCH,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr, $($msg:tt)+) => {{
        let (a, b) = (&$a, &$b);
        if a != b {
            return Err(format!("{}: {:?} != {:?}", format!($($msg)+), a, b));
        }
    }};
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tmp() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

fn fixture_fidelity() -> Check {
    let dir = tmp()?;
    let ws = Workspace::new(dir.path());
    let summary = ws
        .ingest(&[repo().join("fixtures/comd_case")])
        .map_err(|e| e.to_string())?;
    ensure_eq!(summary.functions, 157, "functions");
    let snap = ws.latest().map_err(|e| e.to_string())?;
    let statuses = snap.statuses("faulty-0001").map_err(|e| e.to_string())?;
    ensure_eq!(statuses.len(), 157, "status rows");
    let differ = statuses
        .iter()
        .filter(|s| s.status == Status::Differ)
        .count();
    ensure_eq!(differ, 64, "functions with status differ");
    let markers: Vec<_> = statuses.iter().filter(|s| s.is_injection_site).collect();
    ensure_eq!(markers.len(), 1, "injection markers");
    ensure_eq!(markers[0].name, "setVcm_omp_fn.o", "marked function");
    let target = snap
        .function_by_name("setVcm_omp_fn.o")
        .map_err(|e| e.to_string())?
        .index;
    let diff = snap
        .diff("faulty-0001", target)
        .map_err(|e| e.to_string())?;
    ensure_eq!(diff.block_count(), 12, "block nodes");
    let b = |a| NodeId::Block(BlockAddr(a));
    ensure_eq!(
        diff.heaviest_edge(),
        Some((b(0x408000), b(0x408030), 351)),
        "heaviest edge"
    );
    ensure_eq!(
        diff.edges.values().filter(|e| e.weight() == 351).count(),
        1,
        "edges at max weight"
    );
    let styled = snap
        .styled_graph("faulty-0001", target, View::Diff, 350)
        .map_err(|e| e.to_string())?;
    ensure_eq!(styled.red_edges().count(), 1, "red edges at threshold 350");
    let dot = snap
        .export("faulty-0001", target, ExportFormat::Dot, 350, View::Diff)
        .map_err(|e| e.to_string())?;
    let parsed = dot_grammar::parse_dot(&String::from_utf8_lossy(&dot))?;
    let dot_blocks = parsed
        .node_stmts
        .iter()
        .filter(|(_, attrs)| attrs.iter().any(|(k, v)| k == "class" && v == "block"))
        .count();
    ensure_eq!(dot_blocks, 12, "block nodes in DOT export");
    Ok(format!(
        "157 functions, 64 differ, 1 marker, 12 blocks, max 351, {} red at 350",
        styled.red_edges().count()
    ))
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let (mut edges, mut events) = (0usize, 0usize);
    const TRACES: usize = 1000;
    for case in 0..TRACES {
        let functions = rng.random_range(1..=10);
        let max_events = rng.random_range(0..=200);
        let run = random_run(&mut rng, "r", RunKind::Golden, functions, max_events);
        ensure!(
            run.events.len() <= 200,
            "case {case}: {} events",
            run.events.len()
        );
        events += run.events.len();
        let oracle = oracle_lsgs(&run);
        let all = build_all_lsgs(&run);
        for sym in &run.symbols {
            let lsg = build_lsg(&run, sym.index).map_err(|e| e.to_string())?;
            let expected = &oracle[&sym.index];
            ensure_eq!(
                lsg.edges,
                expected.edges,
                "case {case} function {}",
                sym.index
            );
            ensure_eq!(
                lsg.invocations,
                expected.invocations,
                "case {case} invocations"
            );
            lsg.validate().map_err(|e| format!("case {case}: {e}"))?;
            ensure_eq!(all[&sym.index], lsg, "case {case}: build_all vs build");
            edges += lsg.edges.len();
        }
        let blocks = run
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Block { .. }))
            .count() as u64;
        let calls = run
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Call { .. }))
            .count() as u64;
        let total: u64 = all.values().map(|l| l.total_count()).sum();
        ensure_eq!(total, blocks + calls, "case {case}: total count identity");
    }
    Ok(format!(
        "{TRACES} traces, {events} events, {edges} edges compared"
    ))
}

fn diff_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1ff);
    let mut pairs = 0;
    for case in 0..500 {
        let functions = rng.random_range(1..=10);
        let a = build_all_lsgs(&random_run(&mut rng, "a", RunKind::Golden, functions, 200));
        let b = build_all_lsgs(&random_run(&mut rng, "b", RunKind::Faulty, functions, 200));
        for (f, ga) in &a {
            let gb = &b[f];
            let same = diff_lsg(ga, ga).map_err(|e| e.to_string())?;
            ensure!(
                same.edges.values().all(|e| e.weight() == 0),
                "case {case}: self diff not zero"
            );
            ensure_eq!(status_of(&same), Status::Match, "case {case}: self status");
            let ab = diff_lsg(ga, gb).map_err(|e| e.to_string())?;
            let ba = diff_lsg(gb, ga).map_err(|e| e.to_string())?;
            let w = |d: &DiffLsg| {
                d.edges
                    .iter()
                    .map(|(k, e)| (*k, e.weight()))
                    .collect::<Vec<_>>()
            };
            ensure_eq!(w(&ab), w(&ba), "case {case}: symmetry");
            ensure_eq!(
                w(&ab),
                oracle_diff(ga, gb).into_iter().collect::<Vec<_>>(),
                "case {case}: absent edges as zero"
            );
            let differs = w(&ab).iter().any(|(_, x)| *x > 0);
            ensure_eq!(
                status_of(&ab),
                if differs {
                    Status::Differ
                } else {
                    Status::Match
                },
                "case {case}: status"
            );
            pairs += 1;
        }
    }
    Ok(format!("{pairs} LSG pairs"))
}

fn loop_sensitivity() -> Check {
    const FROZEN_COUNTER_FLIP_WEIGHT: u64 = 2;
    let text = std::fs::read_to_string(repo().join("fixtures/programs/loop10.toy"))
        .map_err(|e| e.to_string())?;
    let program = ToyProgram::parse(&text).map_err(|e| e.to_string())?;
    let interp = Interpreter::new(&program).map_err(|e| e.to_string())?;
    let (golden, out) = interp.execute(&[], "golden").map_err(|e| e.to_string())?;
    let flip = FaultSpec {
        dynamic_event_index: 1,
        target_register: 0,
        bit: 1,
    };
    let mut masked = Vec::new();
    for event in [0, 3, 10, 20] {
        masked.push(FaultSpec {
            dynamic_event_index: event,
            target_register: 4,
            bit: 5,
        });
        masked.push(FaultSpec {
            dynamic_event_index: event,
            target_register: 3,
            bit: 0,
        });
    }
    masked.push(FaultSpec {
        dynamic_event_index: 0,
        target_register: 1,
        bit: 63,
    });

    let mut runs = vec![("golden.trace".to_string(), Ok(golden))];
    let mut outcomes = Vec::new();
    for (i, fault) in std::iter::once(&flip).chain(&masked).enumerate() {
        let (trace, outcome) = interp
            .execute_faulty(&[], fault, &format!("faulty-{:04}", i + 1), &out)
            .map_err(|e| e.to_string())?;
        outcomes.push(outcome.classification);
        runs.push((format!("{}.trace", trace.run_id), Ok(trace)));
    }
    let dir = tmp()?;
    let ws = Workspace::new(dir.path());
    ws.ingest_runs(runs, None).map_err(|e| e.to_string())?;
    let snap = ws.latest().map_err(|e| e.to_string())?;

    let model_golden = loop10_oracle(None, u64::MAX);
    let model_flip = loop10_oracle(Some((1, 0, 1)), u64::MAX);
    let expected = model_golden.back_edges.abs_diff(model_flip.back_edges);
    ensure_eq!(
        expected,
        FROZEN_COUNTER_FLIP_WEIGHT,
        "oracle drifted from the frozen value"
    );
    let back = (
        NodeId::Block(BlockAddr(LOOP10_LATCH)),
        NodeId::Block(BlockAddr(LOOP10_HEADER)),
    );
    let d = snap.diff("faulty-0001", 0).map_err(|e| e.to_string())?;
    let got = d.edges.get(&back).map_or(0, |e| e.weight());
    ensure_eq!(got, FROZEN_COUNTER_FLIP_WEIGHT, "back-edge diff weight");
    ensure_eq!(outcomes[0], Outcome::Sdc, "counter flip outcome");
    for (i, fault) in masked.iter().enumerate() {
        let id = format!("faulty-{:04}", i + 2);
        ensure_eq!(
            loop10_oracle(
                Some((
                    fault.dynamic_event_index,
                    fault.target_register as usize,
                    fault.bit
                )),
                u64::MAX
            ),
            model_golden,
            "{fault:?} not masked in model"
        );
        ensure_eq!(outcomes[i + 1], Outcome::Benign, "{fault:?} classification");
        let d = snap.diff(&id, 0).map_err(|e| e.to_string())?;
        ensure!(
            d.edges.values().all(|e| e.weight() == 0),
            "{fault:?}: non-zero diff"
        );
        let statuses = snap.statuses(&id).map_err(|e| e.to_string())?;
        ensure!(
            statuses.iter().all(|s| s.status == Status::Match),
            "{fault:?}: status differ"
        );
    }
    Ok(format!(
        "back-edge weight {got} (oracle {expected}), {} masked runs all-zero and benign",
        masked.len()
    ))
}

fn tree_hash(dir: &Path) -> Result<String, String> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for p in &files {
        let rel = p.strip_prefix(dir).map_err(|e| e.to_string())?;
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(p).map_err(|e| e.to_string())?);
        h.update([0]);
    }
    Ok(format!(
        "{} files, sha256 {}",
        files.len(),
        &hex::encode(h.finalize())[..16]
    ))
}

fn campaign_determinism() -> Check {
    let program = repo().join("fixtures/programs/loop10.toy");
    let mut hashes = Vec::new();
    let dirs = [tmp()?, tmp()?];
    for dir in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_resil"))
            .args(["campaign", "--program"])
            .arg(&program)
            .args(["--runs", "20", "--seed", "42", "--workspace"])
            .arg(dir.path())
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            out.status.success(),
            "campaign failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        hashes.push(tree_hash(dir.path())?);
    }
    ensure_eq!(hashes[0], hashes[1], "workspace hashes");
    Ok(hashes[0].clone())
}

fn layout_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a70);
    let mut graphs = 0;
    for case in 0..300 {
        let blocks = rng.random_range(0..25);
        let edges = rng.random_range(0..60);
        let g = random_graph(&mut rng, 0, blocks, edges);
        check_layout(&g)?;
        graphs += 1;
        if case % 3 == 0 {
            let functions = rng.random_range(1..=5);
            let a = build_all_lsgs(&random_run(&mut rng, "a", RunKind::Golden, functions, 200));
            let b = build_all_lsgs(&random_run(&mut rng, "b", RunKind::Faulty, functions, 200));
            for (f, ga) in &a {
                let d = diff_lsg(ga, &b[f]).map_err(|e| e.to_string())?;
                check_layout(&d)?;
                graphs += 1;
            }
        }
    }
    Ok(format!("{graphs} graphs"))
}

fn check_layout<G: WeightedGraph>(g: &G) -> Result<(), String> {
    let l = layout(g).map_err(|e| e.to_string())?;
    ensure_eq!(l.node(NodeId::Head).map(|n| n.rank), Some(0), "head rank");
    for e in l.edges.iter().filter(|e| !e.reversed) {
        let (from, to) = (l.node(e.from).unwrap().rank, l.node(e.to).unwrap().rank);
        ensure!(from < to, "{} -> {} is not rank increasing", e.from, e.to);
    }
    let again = layout(g).map_err(|e| e.to_string())?;
    ensure!(
        canonical::to_vec(&again).map_err(|e| e.to_string())?
            == canonical::to_vec(&l).map_err(|e| e.to_string())?,
        "re-layout differs"
    );
    let max = g.weighted_edges().iter().map(|e| e.2).max().unwrap_or(0);
    let mut previous: Option<BTreeSet<(NodeId, NodeId)>> = None;
    for t in 0..=max {
        let styled = anomaly_map(g, t, &l).map_err(|e| e.to_string())?;
        for e in &styled.edges {
            ensure_eq!(
                e.style == EdgeStyle::Red,
                e.weight > t,
                "edge {} -> {} at {t}",
                e.from,
                e.to
            );
        }
        let red: BTreeSet<_> = styled.red_edges().map(|e| (e.from, e.to)).collect();
        if let Some(prev) = &previous {
            ensure!(red.is_subset(prev), "red set grew at threshold {t}");
        }
        previous = Some(red);
    }
    Ok(())
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn cvg_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc7);
    let mut vectors = 0;
    for case in 0..30 {
        let functions = rng.random_range(1..=6);
        let golden = build_all_lsgs(&random_run(
            &mut rng,
            "golden",
            RunKind::Golden,
            functions,
            200,
        ));
        let faulty: Vec<_> = (0..20)
            .map(|i| {
                let id = format!("faulty-{:04}", i + 1);
                (
                    id.clone(),
                    build_all_lsgs(&random_run(&mut rng, &id, RunKind::Faulty, functions, 200)),
                )
            })
            .collect();
        for (f, g) in &golden {
            let diffs: Vec<(String, DiffLsg)> = faulty
                .iter()
                .map(|(id, lsgs)| {
                    Ok((
                        id.clone(),
                        diff_lsg(g, &lsgs[f]).map_err(|e| e.to_string())?,
                    ))
                })
                .collect::<Result<_, String>>()?;
            let cvg = accumulate(diffs.iter().map(|(id, d)| (id.as_str(), d)))
                .map_err(|e| e.to_string())?;
            let oracle = oracle_cvg(&diffs.iter().map(|(_, d)| d).collect::<Vec<_>>());
            ensure_eq!(cvg.edges.len(), oracle.len(), "case {case}: edge count");
            for (k, v) in &cvg.edges {
                let o = &oracle[k];
                ensure_eq!(v.weights.len(), 20, "vector length");
                ensure_eq!(
                    (&v.weights, v.max_w, v.freq, v.mean_w, v.score),
                    (&o.weights, o.max_w, o.freq, o.mean_w, o.score),
                    "case {case}: vector vs oracle"
                );
                ensure!(
                    (0.0..=1.0).contains(&v.freq),
                    "freq {} out of range",
                    v.freq
                );
                ensure!(
                    v.max_w as f64 >= v.mean_w,
                    "max {} < mean {}",
                    v.max_w,
                    v.mean_w
                );
                vectors += 1;
            }
            let mut shuffled = diffs.clone();
            shuffled.shuffle(&mut rng);
            let perm = accumulate(shuffled.iter().map(|(id, d)| (id.as_str(), d)))
                .map_err(|e| e.to_string())?;
            ensure_eq!(
                perm.ranked_edges(),
                cvg.ranked_edges(),
                "case {case}: ranking under permutation"
            );
        }
    }
    Ok(format!("{vectors} edge vectors over 20-run campaigns"))
}

fn api_contract() -> Check {
    let dir = tmp()?;
    Workspace::new(dir.path())
        .ingest(&[repo().join("fixtures/comd_case")])
        .map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let server = resil_server::start(dir.path(), "127.0.0.1:0".parse().unwrap(), None)
            .await
            .map_err(|e| e.to_string())?;
        let client = Client::new(server.base_url());
        let snap = Workspace::new(dir.path())
            .latest()
            .map_err(|e| e.to_string())?;
        let raw = |rel: &str| std::fs::read(snap.dir().join(rel)).map_err(|e| e.to_string());
        let mut expected: Vec<(String, Vec<u8>)> = vec![
            ("/api/manifest".into(), raw("manifest.json")?),
            ("/api/symbols".into(), raw("symbols.json")?),
            ("/api/summary".into(), raw("summary.json")?),
            ("/api/campaign/ranking".into(), raw("ranking.json")?),
            (
                "/api/runs".into(),
                canonical::to_vec(&snap.run_list()).map_err(|e| e.to_string())?,
            ),
            (
                "/api/runs/faulty-0001/functions".into(),
                raw("status/faulty-0001.json")?,
            ),
        ];
        for sym in snap.symbols() {
            let f = sym.index;
            expected.push((
                format!("/api/runs/golden/functions/{f}/lsg"),
                raw(&format!("lsg/golden/{f}.json"))?,
            ));
            expected.push((
                format!("/api/runs/faulty-0001/functions/{f}/lsg"),
                raw(&format!("lsg/faulty-0001/{f}.json"))?,
            ));
            expected.push((
                format!("/api/runs/faulty-0001/functions/{f}/diff"),
                raw(&format!("diff/faulty-0001/{f}.json"))?,
            ));
            expected.push((
                Client::export_path("faulty-0001", f, ExportFormat::Json, 0, View::Diff),
                raw(&format!("diff/faulty-0001/{f}.json"))?,
            ));
            expected.push((
                format!("/api/campaign/cvg/{f}/vectors"),
                raw(&format!("cvg/{f}.json"))?,
            ));
            let styled = snap
                .styled_graph("faulty-0001", f, View::Diff, 350)
                .map_err(|e| e.to_string())?;
            expected.push((
                Client::graph_path("faulty-0001", f, 350, View::Diff),
                canonical::to_vec(&styled).map_err(|e| e.to_string())?,
            ));
            let cvg = snap.cvg_styled(f, 1).map_err(|e| e.to_string())?;
            expected.push((
                format!("/api/campaign/cvg/{f}?threshold=1"),
                canonical::to_vec(&cvg).map_err(|e| e.to_string())?,
            ));
        }
        for (path, want) in &expected {
            let first = client
                .get_raw(path)
                .await
                .map_err(|e| format!("{path}: {e}"))?;
            let second = client
                .get_raw(path)
                .await
                .map_err(|e| format!("{path}: {e}"))?;
            ensure!(
                &first == want,
                "{path}: body differs from persisted artifact"
            );
            ensure!(first == second, "{path}: repeated GET differs");
        }
        server.abort();
        Ok(format!(
            "{} endpoint responses byte-identical, each fetched twice",
            expected.len()
        ))
    })
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "fixture fidelity",
            limit: Some(Duration::from_secs(5)),
            run: fixture_fidelity,
        },
        Criterion {
            name: "oracle equivalence",
            limit: Some(Duration::from_secs(60)),
            run: oracle_equivalence,
        },
        Criterion {
            name: "diff laws",
            limit: None,
            run: diff_laws,
        },
        Criterion {
            name: "loop sensitivity",
            limit: None,
            run: loop_sensitivity,
        },
        Criterion {
            name: "campaign determinism",
            limit: Some(Duration::from_secs(30)),
            run: campaign_determinism,
        },
        Criterion {
            name: "layout properties",
            limit: None,
            run: layout_properties,
        },
        Criterion {
            name: "cvg properties",
            limit: None,
            run: cvg_properties,
        },
        Criterion {
            name: "api contract",
            limit: None,
            run: api_contract,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {:<22} {:>9.2?}  {detail}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<22} {:>9.2?}  {why}", c.name, elapsed);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
