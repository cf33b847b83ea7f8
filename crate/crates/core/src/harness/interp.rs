use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::program::{BinOp, Instr, ProgramError, Reg, Terminator, ToyProgram};
use crate::trace::{BlockAddr, FunctionRecord, InjectionSite, RunKind, RunTrace, TraceEvent};

pub const DEFAULT_STEP_LIMIT: u64 = 10_000_000;
pub const MAX_CALL_DEPTH: usize = 1024;

/// A single bit flip in one integer register of the frame that is about to
/// execute the `dynamic_event_index`-th Block event (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSpec {
    pub dynamic_event_index: u64,
    pub target_register: u16,
    pub bit: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum Termination {
    Normal,
    Trap(String),
    StepLimit,
}

impl Termination {
    pub fn is_abnormal(&self) -> bool {
        !matches!(self, Termination::Normal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Benign,
    Sdc,
    Crash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub run_id: String,
    pub classification: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faulty_output: Option<Vec<u64>>,
    pub events_executed: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error(transparent)]
    InvalidProgram(#[from] ProgramError),
    #[error("step limit of {limit} events exceeded")]
    StepLimitExceeded { limit: u64 },
    #[error("golden run trapped: {0}")]
    Trap(String),
    #[error("{given} inputs but entry function has {registers} registers")]
    TooManyInputs { given: usize, registers: u16 },
    #[error("fault at block event {index} never fired (run has {block_events} block events)")]
    FaultNotReached { index: u64, block_events: u64 },
    #[error("invalid fault: {0}")]
    InvalidFault(String),
}

/// `crash` on abnormal termination, otherwise `sdc` when outputs differ.
pub fn classify_outcome(
    golden_output: &[u64],
    faulty_output: &[u64],
    termination: &Termination,
) -> Outcome {
    if termination.is_abnormal() {
        Outcome::Crash
    } else if golden_output != faulty_output {
        Outcome::Sdc
    } else {
        Outcome::Benign
    }
}

/// Raw result of one interpretation, golden or faulty.
#[derive(Clone, Debug)]
pub struct Execution {
    pub events: Vec<TraceEvent>,
    pub outputs: Vec<u64>,
    pub termination: Termination,
    /// Events emitted before termination; the synthetic returns appended
    /// when unwinding an aborted run are not counted.
    pub events_executed: u64,
    pub block_events: u64,
    pub injection: Option<InjectionSite>,
}

struct Frame {
    function: usize,
    block: usize,
    pc: usize,
    regs: Vec<u64>,
    ret_dst: Option<Reg>,
    /// Block to enter when the pending call-then-fallthrough returns.
    resume_at: Option<usize>,
}

pub struct Interpreter<'p> {
    program: &'p ToyProgram,
    step_limit: u64,
    block_maps: Vec<HashMap<BlockAddr, usize>>,
}

impl<'p> Interpreter<'p> {
    pub fn new(program: &'p ToyProgram) -> Result<Self, ExecError> {
        program.check()?;
        let block_maps = program
            .functions
            .iter()
            .map(|f| {
                f.blocks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| (b.address, i))
                    .collect()
            })
            .collect();
        Ok(Interpreter {
            program,
            step_limit: DEFAULT_STEP_LIMIT,
            block_maps,
        })
    }

    pub fn with_step_limit(mut self, limit: u64) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn program(&self) -> &ToyProgram {
        self.program
    }

    pub fn symbols(&self) -> Vec<FunctionRecord> {
        self.program
            .functions
            .iter()
            .map(|f| FunctionRecord::new(f.index, f.name.clone()))
            .collect()
    }

    /// Golden execution. Any abnormal termination is an error here.
    pub fn execute(&self, inputs: &[u64], run_id: &str) -> Result<(RunTrace, Vec<u64>), ExecError> {
        let exec = self.run(inputs, None)?;
        match exec.termination {
            Termination::Normal => {}
            Termination::StepLimit => {
                return Err(ExecError::StepLimitExceeded {
                    limit: self.step_limit,
                })
            }
            Termination::Trap(reason) => return Err(ExecError::Trap(reason)),
        }
        let trace = RunTrace {
            run_id: run_id.to_string(),
            kind: RunKind::Golden,
            injection: None,
            symbols: self.symbols(),
            events: exec.events,
        };
        Ok((trace, exec.outputs))
    }

    /// Faulty execution classified against an already known golden output.
    pub fn execute_faulty(
        &self,
        inputs: &[u64],
        fault: &FaultSpec,
        run_id: &str,
        golden_output: &[u64],
    ) -> Result<(RunTrace, OutcomeRecord), ExecError> {
        let exec = self.run(inputs, Some(fault))?;
        let Some(site) = exec.injection else {
            return Err(ExecError::FaultNotReached {
                index: fault.dynamic_event_index,
                block_events: exec.block_events,
            });
        };
        let classification = classify_outcome(golden_output, &exec.outputs, &exec.termination);
        let outcome = OutcomeRecord {
            run_id: run_id.to_string(),
            classification,
            faulty_output: (classification != Outcome::Crash).then(|| exec.outputs.clone()),
            events_executed: exec.events_executed,
        };
        let trace = RunTrace {
            run_id: run_id.to_string(),
            kind: RunKind::Faulty,
            injection: Some(site),
            symbols: self.symbols(),
            events: exec.events,
        };
        Ok((trace, outcome))
    }

    /// Runs the program, optionally flipping one register bit.
    pub fn run(&self, inputs: &[u64], fault: Option<&FaultSpec>) -> Result<Execution, ExecError> {
        if let Some(f) = fault {
            if f.bit > 63 {
                return Err(ExecError::InvalidFault(format!(
                    "bit {} out of range",
                    f.bit
                )));
            }
        }
        let program = self.program;
        let entry = &program.functions[program.entry];
        if inputs.len() > usize::from(entry.registers) {
            return Err(ExecError::TooManyInputs {
                given: inputs.len(),
                registers: entry.registers,
            });
        }

        let mut st = State {
            events: Vec::new(),
            outputs: Vec::new(),
            block_events: 0,
            injection: None,
            limit: self.step_limit,
            fault: fault.copied(),
        };
        let mut stack: Vec<Frame> = Vec::new();
        let termination = match self.drive(&mut st, &mut stack, inputs) {
            Ok(()) => Termination::Normal,
            Err(Stop::StepLimit) => Termination::StepLimit,
            Err(Stop::Trap(reason)) => Termination::Trap(reason),
            Err(Stop::Fault(e)) => return Err(e),
        };
        let events_executed = st.events.len() as u64;
        // keep aborted traces balanced
        while let Some(frame) = stack.pop() {
            st.events.push(TraceEvent::Return {
                function: frame.function,
            });
        }
        Ok(Execution {
            events: st.events,
            outputs: st.outputs,
            termination,
            events_executed,
            block_events: st.block_events,
            injection: st.injection,
        })
    }

    fn drive(&self, st: &mut State, stack: &mut Vec<Frame>, inputs: &[u64]) -> Result<(), Stop> {
        let program = self.program;
        self.call(st, stack, program.entry, inputs.to_vec(), None)?;

        while let Some(frame) = stack.last_mut() {
            if let Some(next) = frame.resume_at.take() {
                self.enter_block(st, frame, next)?;
                continue;
            }
            let func = &program.functions[frame.function];
            let block = &func.blocks[frame.block];
            if let Some(ins) = block.instructions.get(frame.pc) {
                frame.pc += 1;
                let r = &mut frame.regs;
                match ins {
                    Instr::Const { dst, value } => r[dst.0 as usize] = *value,
                    Instr::Bin { op, dst, lhs, rhs } => {
                        let (a, b) = (r[lhs.0 as usize], r[rhs.0 as usize]);
                        r[dst.0 as usize] = match op {
                            BinOp::Add => a.wrapping_add(b),
                            BinOp::Sub => a.wrapping_sub(b),
                            BinOp::Mul => a.wrapping_mul(b),
                        };
                    }
                    Instr::Cmp { op, dst, lhs, rhs } => {
                        r[dst.0 as usize] =
                            u64::from(op.eval(r[lhs.0 as usize], r[rhs.0 as usize]));
                    }
                    Instr::Out { src } => st.outputs.push(r[src.0 as usize]),
                    Instr::Call { callee, dst, args } => {
                        let args = args.iter().map(|a| r[a.0 as usize]).collect();
                        self.call(st, stack, *callee, args, Some(*dst))?;
                    }
                }
                continue;
            }
            match &block.terminator {
                Terminator::Jump(t) => {
                    let next = self.block_maps[frame.function][t];
                    self.enter_block(st, frame, next)?;
                }
                Terminator::Branch {
                    cond,
                    taken,
                    not_taken,
                } => {
                    let t = if frame.regs[cond.0 as usize] != 0 {
                        taken
                    } else {
                        not_taken
                    };
                    let next = self.block_maps[frame.function][t];
                    self.enter_block(st, frame, next)?;
                }
                Terminator::CallFallthrough {
                    callee,
                    dst,
                    args,
                    next,
                } => {
                    frame.resume_at = Some(self.block_maps[frame.function][next]);
                    let args = args.iter().map(|a| frame.regs[a.0 as usize]).collect();
                    self.call(st, stack, *callee, args, Some(*dst))?;
                }
                Terminator::Return(src) => {
                    let value = src.map_or(0, |s| frame.regs[s.0 as usize]);
                    st.emit(TraceEvent::Return {
                        function: frame.function,
                    })?;
                    let done = stack.pop().expect("frame on stack");
                    if let (Some(caller), Some(dst)) = (stack.last_mut(), done.ret_dst) {
                        caller.regs[dst.0 as usize] = value;
                    }
                }
            }
        }
        Ok(())
    }

    fn call(
        &self,
        st: &mut State,
        stack: &mut Vec<Frame>,
        function: usize,
        args: Vec<u64>,
        ret_dst: Option<Reg>,
    ) -> Result<(), Stop> {
        if stack.len() >= MAX_CALL_DEPTH {
            return Err(Stop::Trap(format!("call depth exceeded {MAX_CALL_DEPTH}")));
        }
        let mut regs = vec![0u64; usize::from(self.program.functions[function].registers)];
        regs[..args.len()].copy_from_slice(&args);
        st.emit(TraceEvent::Call { function })?;
        stack.push(Frame {
            function,
            block: 0,
            pc: 0,
            regs,
            ret_dst,
            resume_at: None,
        });
        let frame = stack.last_mut().expect("just pushed");
        self.enter_block(st, frame, 0)
    }

    fn enter_block(&self, st: &mut State, frame: &mut Frame, block: usize) -> Result<(), Stop> {
        let addr = self.program.functions[frame.function].blocks[block].address;
        st.emit(TraceEvent::Block {
            function: frame.function,
            addr,
        })?;
        frame.block = block;
        frame.pc = 0;
        let index = st.block_events;
        st.block_events += 1;
        if let Some(fault) = st.fault.filter(|f| f.dynamic_event_index == index) {
            let reg = usize::from(fault.target_register);
            let Some(slot) = frame.regs.get_mut(reg) else {
                return Err(Stop::Fault(ExecError::InvalidFault(format!(
                    "register r{reg} does not exist in `{}`",
                    self.program.functions[frame.function].name
                ))));
            };
            *slot ^= 1u64 << fault.bit;
            st.injection = Some(InjectionSite {
                function_index: frame.function,
                dynamic_event_index: index,
                bit: fault.bit,
            });
        }
        Ok(())
    }
}

struct State {
    events: Vec<TraceEvent>,
    outputs: Vec<u64>,
    block_events: u64,
    injection: Option<InjectionSite>,
    limit: u64,
    fault: Option<FaultSpec>,
}

impl State {
    fn emit(&mut self, ev: TraceEvent) -> Result<(), Stop> {
        if self.events.len() as u64 >= self.limit {
            return Err(Stop::StepLimit);
        }
        self.events.push(ev);
        Ok(())
    }
}

enum Stop {
    StepLimit,
    Trap(String),
    Fault(ExecError),
}

/// Golden execution of `program` on `inputs`.
pub fn execute(program: &ToyProgram, inputs: &[u64]) -> Result<(RunTrace, Vec<u64>), ExecError> {
    Interpreter::new(program)?.execute(inputs, "golden")
}

/// Runs the golden execution for reference, then the faulty one.
pub fn execute_with_fault(
    program: &ToyProgram,
    inputs: &[u64],
    fault: &FaultSpec,
    run_id: &str,
) -> Result<(RunTrace, OutcomeRecord), ExecError> {
    let interp = Interpreter::new(program)?;
    let (_, golden_output) = interp.execute(inputs, "golden")?;
    interp.execute_faulty(inputs, fault, run_id, &golden_output)
}
