//! Synthetic golden/faulty trace pair modelled on a molecular-dynamics
//! proxy application. Shared by the `gen_comd_case` example (which writes
//! `fixtures/comd_case/`) and the regeneration test.

use resil_core::{BlockAddr, FunctionRecord, InjectionSite, RunKind, RunTrace, TraceEvent};

pub const FUNCTION_COUNT: usize = 157;
pub const TARGET: &str = "setVcm_omp_fn.o";
pub const AFFECTED_OTHERS: usize = 63;

const BASE_NAMES: &[&str] = &[
    "parseCommandLine",
    "printCmdYaml",
    "initParallel",
    "initSubsystems",
    "initSimulation",
    "initDecomposition",
    "initLinkCells",
    "initLjPot",
    "initEamPot",
    "createFccLattice",
    "setVcm",
    "setTemperature",
    "randomDisplacements",
    "computeVcm",
    "timestep",
    "advanceVelocity",
    "advancePosition",
    "redistributeAtoms",
    "updateLinkCells",
    "haloExchange",
    "initAtomHaloExchange",
    "loadAtomsBuffer",
    "unloadAtomsBuffer",
    "sortAtomsInCell",
    "ljForce",
    "eamForce",
    "kineticEnergy",
    "computeForce",
    "sumAtoms",
    "printThings",
    "printRate",
    "validateResult",
    "destroySimulation",
    "profileStart",
    "profileStop",
    "getNeighborBoxes",
    "getBoxFromCoord",
    "moveAtom",
    "putAtomInBox",
    "maxOccupancy",
    "addIntParallel",
    "addRealParallel",
    "maxIntParallel",
    "minRankDoubleParallel",
    "bcastParallel",
    "gasdev",
    "lcg61",
    "mkSeed",
    "interpolate",
    "initSplineTable",
];

/// `main` first, then plain names, then numbered outlined-region variants.
pub fn function_names() -> Vec<String> {
    let mut names = vec!["main".to_string()];
    names.extend(BASE_NAMES.iter().map(|s| s.to_string()));
    let mut k = 0;
    while names.len() < FUNCTION_COUNT {
        for base in BASE_NAMES {
            if names.len() == FUNCTION_COUNT {
                break;
            }
            if *base == "setVcm" {
                continue;
            }
            names.push(format!("{base}_omp_fn.{k}"));
        }
        k += 1;
    }
    // the outlined loop of setVcm sits right behind setVcm itself
    let pos = names.iter().position(|n| n == "setVcm").unwrap() + 1;
    names.insert(pos, TARGET.to_string());
    names.truncate(FUNCTION_COUNT);
    names
}

fn target_index() -> usize {
    function_names().iter().position(|n| n == TARGET).unwrap()
}

fn never_invoked(i: usize) -> bool {
    i % 9 == 5
}

fn base_addr(i: usize) -> u64 {
    0x420000 + 0x200 * i as u64
}

/// Functions after the target in call order whose loop trip count changes
/// in the faulty run.
pub fn affected_others() -> Vec<usize> {
    let t = target_index();
    let candidates: Vec<usize> = (t + 1..FUNCTION_COUNT)
        .filter(|&i| !never_invoked(i))
        .collect();
    let mut picked: Vec<usize> = candidates.iter().copied().step_by(2).collect();
    for &c in &candidates {
        if picked.len() >= AFFECTED_OTHERS {
            break;
        }
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    picked.truncate(AFFECTED_OTHERS);
    picked.sort_unstable();
    picked
}

struct Builder {
    events: Vec<TraceEvent>,
    block_events: u64,
    injection_at: Option<u64>,
}

impl Builder {
    fn call(&mut self, f: usize) {
        self.events.push(TraceEvent::Call { function: f });
    }
    fn ret(&mut self, f: usize) {
        self.events.push(TraceEvent::Return { function: f });
    }
    fn block(&mut self, f: usize, addr: u64) {
        self.events.push(TraceEvent::Block {
            function: f,
            addr: BlockAddr(addr),
        });
        self.block_events += 1;
    }
}

const SV_ENTRY: [u64; 3] = [0x407f80, 0x407fa0, 0x407fc0];
const SV_HEADER: u64 = 0x408000;
const SV_BODY: u64 = 0x408030;
const SV_PATH_A: u64 = 0x408048;
const SV_PATH_B: u64 = 0x408060;
const SV_LATCH_A: u64 = 0x408070;
const SV_LATCH_B: u64 = 0x408080;
const SV_EXIT: [u64; 3] = [0x408090, 0x40809c, 0x4080a8];

/// Trip counts of the target's loop: (iterations, iterations taking path a).
pub const GOLDEN_TRIPS: (u64, u64) = (1000, 600);
pub const FAULTY_TRIPS: (u64, u64) = (649, 400);

fn emit_target(
    b: &mut Builder,
    f: usize,
    (iters, split): (u64, u64),
    inject_at_iteration: Option<u64>,
) {
    b.call(f);
    for a in SV_ENTRY {
        b.block(f, a);
    }
    for i in 0..iters {
        if inject_at_iteration == Some(i) {
            b.injection_at = Some(b.block_events);
        }
        b.block(f, SV_HEADER);
        b.block(f, SV_BODY);
        if i < split {
            b.block(f, SV_PATH_A);
            b.block(f, SV_LATCH_A);
        } else {
            b.block(f, SV_PATH_B);
            b.block(f, SV_LATCH_B);
        }
    }
    b.block(f, SV_HEADER);
    for a in SV_EXIT {
        b.block(f, a);
    }
    b.ret(f);
}

fn emit_loop(b: &mut Builder, f: usize, trips: u64) {
    let base = base_addr(f);
    b.call(f);
    b.block(f, base);
    for _ in 0..trips {
        b.block(f, base + 0x10);
        b.block(f, base + 0x20);
    }
    b.block(f, base + 0x10);
    b.block(f, base + 0x30);
    b.ret(f);
}

fn golden_trips(i: usize) -> u64 {
    3 + (i as u64 * 7) % 20
}

fn symbols() -> Vec<FunctionRecord> {
    let t = target_index();
    function_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let mut rec = FunctionRecord::new(i, name);
            if i == t {
                rec.source_file = Some("initAtoms.c".into());
                rec.source_line_map.insert(BlockAddr(SV_HEADER), (126, 129));
                rec.source_line_map.insert(BlockAddr(SV_BODY), (126, 129));
            } else if i % 10 == 0 && !never_invoked(i) && i != 0 {
                rec.source_file = Some("timestep.c".into());
                rec.source_line_map.insert(
                    BlockAddr(base_addr(i) + 0x10),
                    (40 + i as u32, 44 + i as u32),
                );
            }
            rec
        })
        .collect()
}

fn build(faulty: bool) -> RunTrace {
    let t = target_index();
    let affected = affected_others();
    let mut b = Builder {
        events: Vec::new(),
        block_events: 0,
        injection_at: None,
    };
    b.call(0);
    b.block(0, 0x401000);
    for i in 1..FUNCTION_COUNT {
        if never_invoked(i) {
            continue;
        }
        b.block(0, 0x401010);
        if i == t {
            let trips = if faulty { FAULTY_TRIPS } else { GOLDEN_TRIPS };
            emit_target(&mut b, i, trips, faulty.then_some(FAULTY_TRIPS.1));
        } else {
            let mut trips = golden_trips(i);
            if faulty && affected.contains(&i) {
                trips += 1 + (i as u64 % 3);
            }
            emit_loop(&mut b, i, trips);
        }
    }
    b.block(0, 0x401020);
    b.ret(0);
    RunTrace {
        run_id: if faulty {
            "faulty-0001".into()
        } else {
            "golden".into()
        },
        kind: if faulty {
            RunKind::Faulty
        } else {
            RunKind::Golden
        },
        injection: faulty.then(|| InjectionSite {
            function_index: t,
            dynamic_event_index: b.injection_at.expect("injection point emitted"),
            bit: 9,
        }),
        symbols: symbols(),
        events: b.events,
    }
}

/// Canonical texts of (golden, faulty).
pub fn generate() -> (String, String) {
    (build(false).render(), build(true).render())
}
