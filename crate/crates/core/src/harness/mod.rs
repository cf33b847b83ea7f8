//! Deterministic toy interpreter with single-bit-flip fault injection, and
//! seeded fault-injection campaigns on top of it.

mod interp;
mod program;

pub use interp::{
    classify_outcome, execute, execute_with_fault, ExecError, Execution, FaultSpec, Interpreter,
    Outcome, OutcomeRecord, Termination, DEFAULT_STEP_LIMIT, MAX_CALL_DEPTH,
};
pub use program::{
    BinOp, CmpOp, Instr, ProgramError, Reg, Terminator, ToyBlock, ToyFunction, ToyProgram,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::manifest::{CampaignManifest, FaultyRunEntry};
use crate::trace::{RunTrace, TraceEvent};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("a campaign needs at least one faulty run")]
    NoRuns,
    #[error("golden run has no block events or no registers to flip")]
    EmptyInjectionSpace,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Clone, Debug)]
pub struct CampaignOptions {
    /// Used to derive the campaign id.
    pub name: String,
    pub step_limit: u64,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            name: "campaign".into(),
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

/// The golden run, every faulty run and the manifest indexing them.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub manifest: CampaignManifest,
    pub golden: RunTrace,
    pub faulty: Vec<RunTrace>,
}

pub const GOLDEN_RUN_ID: &str = "golden";

pub fn faulty_run_id(i: usize) -> String {
    format!("faulty-{:04}", i + 1)
}

/// Draws `n` fault specs uniformly over (golden Block event, register of the
/// function executing it, bit).
pub fn sample_faults(
    program: &ToyProgram,
    golden: &RunTrace,
    n: usize,
    seed: u64,
) -> Result<Vec<FaultSpec>, CampaignError> {
    // cumulative injection-space size after each block event
    let mut cumulative = Vec::new();
    let mut regs_at = Vec::new();
    let mut total = 0u64;
    for ev in &golden.events {
        if let TraceEvent::Block { function, .. } = ev {
            let regs = program.functions[*function].registers;
            total += u64::from(regs) * 64;
            cumulative.push(total);
            regs_at.push(regs);
        }
    }
    if total == 0 {
        return Err(CampaignError::EmptyInjectionSpace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let draw = rng.random_range(0..total);
            let event = cumulative.partition_point(|&c| c <= draw);
            let base = if event == 0 { 0 } else { cumulative[event - 1] };
            let offset = draw - base;
            FaultSpec {
                dynamic_event_index: event as u64,
                target_register: (offset / 64) as u16,
                bit: (offset % 64) as u8,
            }
        })
        .collect())
}

/// One golden run plus `n` seeded faulty runs. Individual faulty runs never
/// abort the campaign; abnormal terminations are recorded as crashes.
pub fn run_campaign(
    program: &ToyProgram,
    inputs: &[u64],
    n: usize,
    seed: u64,
    options: &CampaignOptions,
) -> Result<Campaign, CampaignError> {
    if n == 0 {
        return Err(CampaignError::NoRuns);
    }
    let interp = Interpreter::new(program)?.with_step_limit(options.step_limit);
    let (golden, golden_output) = interp.execute(inputs, GOLDEN_RUN_ID)?;
    let specs = sample_faults(program, &golden, n, seed)?;

    let results: Vec<(RunTrace, OutcomeRecord)> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| interp.execute_faulty(inputs, spec, &faulty_run_id(i), &golden_output))
        .collect::<Result<_, _>>()?;

    let runs = results
        .iter()
        .zip(&specs)
        .map(|((trace, outcome), spec)| FaultyRunEntry {
            run_id: trace.run_id.clone(),
            injection: trace.injection.expect("faulty trace carries its injection"),
            fault: Some(*spec),
            outcome: Some(outcome.clone()),
        })
        .collect();
    let manifest = CampaignManifest {
        campaign_id: format!("{}-n{}-s{}", options.name, n, seed),
        golden_run_id: golden.run_id.clone(),
        symbol_digest: golden.symbol_digest(),
        seed: Some(seed),
        inputs: Some(inputs.to_vec()),
        golden_output: Some(golden_output),
        runs,
    };
    Ok(Campaign {
        manifest,
        golden,
        faulty: results.into_iter().map(|(t, _)| t).collect(),
    })
}
