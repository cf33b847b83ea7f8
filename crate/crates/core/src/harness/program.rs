//! Toy basic-block programs and their text assembly.
//!
//! ```text
//! # comment (also `;` to end of line)
//! .entry main
//! .fun main regs=4
//! .block 0x1000
//!     const r0 0
//!     const r1 10
//!     jmp 0x1010
//! .block 0x1010
//!     cmp lt r2 r0 r1
//!     br r2 0x1020 0x1030
//! ...
//! ```
//!
//! Instructions: `const rD imm`, `add|sub|mul rD rA rB` (wrapping),
//! `cmp eq|ne|lt|le|gt|ge rD rA rB` (unsigned, writes 1 or 0),
//! `call <fun> rD [rA ...]` (arguments land in the callee's `r0..`, the
//! callee's return value lands in `rD`) and `out rA` (appends to the output).
//!
//! Terminators: `jmp 0xT`, `br rC 0xT 0xF` (taken when `rC != 0`),
//! `ret [rA]`. A block whose last line is a `call` has the
//! call-then-fallthrough terminator and continues with the next block of the
//! same function. Immediates are decimal (optionally negative, stored two's
//! complement) or `0x` hex.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::trace::BlockAddr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Reg(pub u16);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn eval(self, a: u64, b: u64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr {
    Const {
        dst: Reg,
        value: u64,
    },
    Bin {
        op: BinOp,
        dst: Reg,
        lhs: Reg,
        rhs: Reg,
    },
    Cmp {
        op: CmpOp,
        dst: Reg,
        lhs: Reg,
        rhs: Reg,
    },
    Call {
        callee: usize,
        dst: Reg,
        args: Vec<Reg>,
    },
    Out {
        src: Reg,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Terminator {
    Jump(BlockAddr),
    Branch {
        cond: Reg,
        taken: BlockAddr,
        not_taken: BlockAddr,
    },
    /// Call, then continue with the next block in definition order.
    CallFallthrough {
        callee: usize,
        dst: Reg,
        args: Vec<Reg>,
        next: BlockAddr,
    },
    Return(Option<Reg>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyBlock {
    pub address: BlockAddr,
    pub instructions: Vec<Instr>,
    pub terminator: Terminator,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyFunction {
    pub index: usize,
    pub name: String,
    /// First block is the function entry.
    pub blocks: Vec<ToyBlock>,
    pub registers: u16,
}

impl ToyFunction {
    pub fn block_position(&self, addr: BlockAddr) -> Option<usize> {
        self.blocks.iter().position(|b| b.address == addr)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyProgram {
    pub functions: Vec<ToyFunction>,
    pub entry: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("line {line}: {reason}: `{text}`")]
    Syntax {
        line: usize,
        text: String,
        reason: String,
    },
    #[error("invalid program: {0}")]
    Invalid(String),
}

fn syntax(line: usize, text: &str, reason: impl Into<String>) -> ProgramError {
    ProgramError::Syntax {
        line,
        text: text.to_string(),
        reason: reason.into(),
    }
}

// Parse-time shapes; call targets are resolved by name after all `.fun`s are known.
enum RawInstr {
    Plain(Instr),
    Call {
        callee: String,
        dst: Reg,
        args: Vec<Reg>,
    },
}

enum RawTerm {
    Jump(BlockAddr),
    Branch(Reg, BlockAddr, BlockAddr),
    Return(Option<Reg>),
}

struct RawBlock {
    line: usize,
    address: BlockAddr,
    body: Vec<(usize, RawInstr)>,
    term: Option<RawTerm>,
}

struct RawFunction {
    name: String,
    registers: u16,
    blocks: Vec<RawBlock>,
}

impl ToyProgram {
    pub fn parse(text: &str) -> Result<ToyProgram, ProgramError> {
        let mut entry_name: Option<String> = None;
        let mut funcs: Vec<RawFunction> = Vec::new();

        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let code = raw_line.split(['#', ';']).next().unwrap_or("").trim();
            if code.is_empty() {
                continue;
            }
            let toks: Vec<&str> = code.split_whitespace().collect();
            match toks[0] {
                ".entry" => {
                    let [_, name] = toks[..] else {
                        return Err(syntax(line, code, "expected `.entry <name>`"));
                    };
                    if entry_name.replace(name.to_string()).is_some() {
                        return Err(syntax(line, code, "duplicate .entry"));
                    }
                }
                ".fun" => {
                    let [_, name, regs] = toks[..] else {
                        return Err(syntax(line, code, "expected `.fun <name> regs=<n>`"));
                    };
                    let registers = regs
                        .strip_prefix("regs=")
                        .and_then(|n| n.parse::<u16>().ok())
                        .ok_or_else(|| syntax(line, code, "expected regs=<n>"))?;
                    funcs.push(RawFunction {
                        name: name.to_string(),
                        registers,
                        blocks: Vec::new(),
                    });
                }
                ".block" => {
                    let [_, addr] = toks[..] else {
                        return Err(syntax(line, code, "expected `.block 0x<addr>`"));
                    };
                    let address = parse_addr(addr, line, code)?;
                    let f = funcs
                        .last_mut()
                        .ok_or_else(|| syntax(line, code, ".block outside .fun"))?;
                    f.blocks.push(RawBlock {
                        line,
                        address,
                        body: Vec::new(),
                        term: None,
                    });
                }
                op => {
                    let block = funcs
                        .last_mut()
                        .and_then(|f| f.blocks.last_mut())
                        .ok_or_else(|| syntax(line, code, "instruction outside .block"))?;
                    if block.term.is_some() {
                        return Err(syntax(line, code, "instruction after terminator"));
                    }
                    let reg = |t: &str| parse_reg(t, line, code);
                    match (op, &toks[1..]) {
                        ("const", [d, v]) => block.body.push((
                            line,
                            RawInstr::Plain(Instr::Const {
                                dst: reg(d)?,
                                value: parse_imm(v, line, code)?,
                            }),
                        )),
                        ("add" | "sub" | "mul", [d, a, b]) => {
                            let op = match op {
                                "add" => BinOp::Add,
                                "sub" => BinOp::Sub,
                                _ => BinOp::Mul,
                            };
                            block.body.push((
                                line,
                                RawInstr::Plain(Instr::Bin {
                                    op,
                                    dst: reg(d)?,
                                    lhs: reg(a)?,
                                    rhs: reg(b)?,
                                }),
                            ));
                        }
                        ("cmp", [c, d, a, b]) => {
                            let op = match *c {
                                "eq" => CmpOp::Eq,
                                "ne" => CmpOp::Ne,
                                "lt" => CmpOp::Lt,
                                "le" => CmpOp::Le,
                                "gt" => CmpOp::Gt,
                                "ge" => CmpOp::Ge,
                                _ => return Err(syntax(line, code, "unknown comparison")),
                            };
                            block.body.push((
                                line,
                                RawInstr::Plain(Instr::Cmp {
                                    op,
                                    dst: reg(d)?,
                                    lhs: reg(a)?,
                                    rhs: reg(b)?,
                                }),
                            ));
                        }
                        ("call", [callee, d, args @ ..]) => {
                            let args = args.iter().map(|a| reg(a)).collect::<Result<_, _>>()?;
                            block.body.push((
                                line,
                                RawInstr::Call {
                                    callee: callee.to_string(),
                                    dst: reg(d)?,
                                    args,
                                },
                            ));
                        }
                        ("out", [s]) => block
                            .body
                            .push((line, RawInstr::Plain(Instr::Out { src: reg(s)? }))),
                        ("jmp", [t]) => {
                            block.term = Some(RawTerm::Jump(parse_addr(t, line, code)?))
                        }
                        ("br", [c, t, f]) => {
                            block.term = Some(RawTerm::Branch(
                                reg(c)?,
                                parse_addr(t, line, code)?,
                                parse_addr(f, line, code)?,
                            ))
                        }
                        ("ret", []) => block.term = Some(RawTerm::Return(None)),
                        ("ret", [r]) => block.term = Some(RawTerm::Return(Some(reg(r)?))),
                        _ => {
                            return Err(syntax(
                                line,
                                code,
                                "unknown instruction or wrong operand count",
                            ))
                        }
                    }
                }
            }
        }

        let names: HashMap<&str, usize> = funcs
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.as_str(), i))
            .collect();
        if names.len() != funcs.len() {
            return Err(ProgramError::Invalid("duplicate function name".into()));
        }
        let entry_name =
            entry_name.ok_or_else(|| ProgramError::Invalid("missing .entry directive".into()))?;
        let entry = *names.get(entry_name.as_str()).ok_or_else(|| {
            ProgramError::Invalid(format!("entry function `{entry_name}` not defined"))
        })?;

        let mut functions = Vec::with_capacity(funcs.len());
        for (index, f) in funcs.iter().enumerate() {
            let resolve = |callee: &str, line: usize| {
                names
                    .get(callee)
                    .copied()
                    .ok_or_else(|| syntax(line, callee, "call to undefined function"))
            };
            let mut blocks = Vec::with_capacity(f.blocks.len());
            for (pos, b) in f.blocks.iter().enumerate() {
                let mut body = Vec::with_capacity(b.body.len());
                for (line, ins) in &b.body {
                    body.push(match ins {
                        RawInstr::Plain(i) => i.clone(),
                        RawInstr::Call { callee, dst, args } => Instr::Call {
                            callee: resolve(callee, *line)?,
                            dst: *dst,
                            args: args.clone(),
                        },
                    });
                }
                let terminator = match &b.term {
                    Some(RawTerm::Jump(t)) => Terminator::Jump(*t),
                    Some(RawTerm::Branch(c, t, nt)) => Terminator::Branch {
                        cond: *c,
                        taken: *t,
                        not_taken: *nt,
                    },
                    Some(RawTerm::Return(r)) => Terminator::Return(*r),
                    None => match body.pop() {
                        Some(Instr::Call { callee, dst, args }) => {
                            let next =
                                f.blocks.get(pos + 1).map(|n| n.address).ok_or_else(|| {
                                    ProgramError::Invalid(format!(
                                        "block {} (line {}) falls through past the end of `{}`",
                                        b.address, b.line, f.name
                                    ))
                                })?;
                            Terminator::CallFallthrough {
                                callee,
                                dst,
                                args,
                                next,
                            }
                        }
                        _ => {
                            return Err(ProgramError::Invalid(format!(
                                "block {} (line {}) has no terminator",
                                b.address, b.line
                            )))
                        }
                    },
                };
                blocks.push(ToyBlock {
                    address: b.address,
                    instructions: body,
                    terminator,
                });
            }
            functions.push(ToyFunction {
                index,
                name: f.name.clone(),
                blocks,
                registers: f.registers,
            });
        }

        let program = ToyProgram { functions, entry };
        program.check()?;
        Ok(program)
    }

    /// Structural validity: unique block addresses, resolvable targets,
    /// register operands in range, non-empty functions.
    pub fn check(&self) -> Result<(), ProgramError> {
        let invalid = |m: String| Err(ProgramError::Invalid(m));
        if self.entry >= self.functions.len() {
            return invalid(format!("entry index {} out of range", self.entry));
        }
        let mut seen = HashSet::new();
        for (i, f) in self.functions.iter().enumerate() {
            if f.index != i {
                return invalid(format!(
                    "function `{}` has index {} at position {i}",
                    f.name, f.index
                ));
            }
            if f.blocks.is_empty() {
                return invalid(format!("function `{}` has no blocks", f.name));
            }
            let local: HashSet<BlockAddr> = f.blocks.iter().map(|b| b.address).collect();
            for b in &f.blocks {
                if !seen.insert(b.address) {
                    return invalid(format!("duplicate block address {}", b.address));
                }
                let regs_ok = |r: &Reg| r.0 < f.registers;
                let check_call =
                    |callee: usize, dst: &Reg, args: &[Reg]| -> Result<(), ProgramError> {
                        let Some(target) = self.functions.get(callee) else {
                            return Err(ProgramError::Invalid(format!(
                                "call target {callee} does not exist"
                            )));
                        };
                        if !regs_ok(dst) || !args.iter().all(regs_ok) {
                            return Err(ProgramError::Invalid(format!(
                                "register out of range in {}",
                                b.address
                            )));
                        }
                        if args.len() > usize::from(target.registers) {
                            return Err(ProgramError::Invalid(format!(
                                "call in {} passes {} arguments to `{}` which has {} registers",
                                b.address,
                                args.len(),
                                target.name,
                                target.registers
                            )));
                        }
                        Ok(())
                    };
                for ins in &b.instructions {
                    let ok = match ins {
                        Instr::Const { dst, .. } => regs_ok(dst),
                        Instr::Bin { dst, lhs, rhs, .. } | Instr::Cmp { dst, lhs, rhs, .. } => {
                            regs_ok(dst) && regs_ok(lhs) && regs_ok(rhs)
                        }
                        Instr::Call { callee, dst, args } => {
                            check_call(*callee, dst, args)?;
                            true
                        }
                        Instr::Out { src } => regs_ok(src),
                    };
                    if !ok {
                        return invalid(format!("register out of range in {}", b.address));
                    }
                }
                let targets: Vec<BlockAddr> = match &b.terminator {
                    Terminator::Jump(t) => vec![*t],
                    Terminator::Branch {
                        cond,
                        taken,
                        not_taken,
                    } => {
                        if !regs_ok(cond) {
                            return invalid(format!("register out of range in {}", b.address));
                        }
                        vec![*taken, *not_taken]
                    }
                    Terminator::CallFallthrough {
                        callee,
                        dst,
                        args,
                        next,
                    } => {
                        check_call(*callee, dst, args)?;
                        vec![*next]
                    }
                    Terminator::Return(r) => {
                        if r.is_some_and(|r| !regs_ok(&r)) {
                            return invalid(format!("register out of range in {}", b.address));
                        }
                        vec![]
                    }
                };
                for t in targets {
                    if !local.contains(&t) {
                        return invalid(format!(
                            "branch target {t} in {} is not a block of `{}`",
                            b.address, f.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn function_by_name(&self, name: &str) -> Option<&ToyFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

fn parse_reg(tok: &str, line: usize, code: &str) -> Result<Reg, ProgramError> {
    tok.strip_prefix('r')
        .and_then(|n| n.parse().ok())
        .map(Reg)
        .ok_or_else(|| syntax(line, code, format!("bad register `{tok}`")))
}

fn parse_addr(tok: &str, line: usize, code: &str) -> Result<BlockAddr, ProgramError> {
    tok.parse()
        .map_err(|_| syntax(line, code, format!("bad block address `{tok}`")))
}

fn parse_imm(tok: &str, line: usize, code: &str) -> Result<u64, ProgramError> {
    let parsed = if let Some(hex) = tok.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else if tok.starts_with('-') {
        tok.parse::<i64>().ok().map(|v| v as u64)
    } else {
        tok.parse::<u64>().ok()
    };
    parsed.ok_or_else(|| syntax(line, code, format!("bad immediate `{tok}`")))
}
