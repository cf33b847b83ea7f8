//! Execution-trace data model and its line-oriented text format.
//!
//! A trace file looks like this:
//!
//! ```text
//! RUN r7 faulty
//! INJ 3 1042 17
//! FUN 0 main
//! FUN 3 setVcm
//! SRC 3 initAtoms.c
//! MAP 3 0x408000 126 129
//! C 0
//! B 0 0x401000
//! C 3
//! B 3 0x407f80
//! R 3
//! R 0
//! ```
//!
//! Lines are LF terminated, tokens are separated by spaces and a `#` in the
//! first column starts a comment line. The symbol table (`FUN`, `SRC`, `MAP`)
//! precedes all events. Every `B` and `R` event must name the function on top
//! of the call stack implied by the `C`/`R` events, and the stack must be empty
//! at the end of the stream.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Start address of a basic block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockAddr(pub u64);

impl fmt::Display for BlockAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid block address `{0}` (expected canonical lowercase 0x-prefixed hex)")]
pub struct ParseAddrError(pub String);

impl FromStr for BlockAddr {
    type Err = ParseAddrError;

    /// Accepts only the canonical rendering: `0x` prefix, lowercase digits,
    /// no redundant leading zeros.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseAddrError(s.to_string());
        let digits = s.strip_prefix("0x").ok_or_else(err)?;
        if digits.is_empty()
            || digits.len() > 16
            || !digits
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
            || (digits.len() > 1 && digits.starts_with('0'))
        {
            return Err(err());
        }
        u64::from_str_radix(digits, 16)
            .map(BlockAddr)
            .map_err(|_| err())
    }
}

impl Serialize for BlockAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One entry of a program's symbol table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    /// Definition order.
    pub index: usize,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    /// Block address to inclusive source line range.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_line_map: BTreeMap<BlockAddr, (u32, u32)>,
}

impl FunctionRecord {
    pub fn new(index: usize, name: impl Into<String>) -> Self {
        FunctionRecord {
            index,
            name: name.into(),
            source_file: None,
            source_line_map: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Golden,
    Faulty,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Golden => "golden",
            RunKind::Faulty => "faulty",
        }
    }
}

/// Where a fault fired: the function active at the flip, the Block-event
/// index (counted over the golden stream) and the flipped bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InjectionSite {
    pub function_index: usize,
    pub dynamic_event_index: u64,
    pub bit: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Call { function: usize },
    Block { function: usize, addr: BlockAddr },
    Return { function: usize },
}

impl TraceEvent {
    pub fn function_index(&self) -> usize {
        match *self {
            TraceEvent::Call { function }
            | TraceEvent::Block { function, .. }
            | TraceEvent::Return { function } => function,
        }
    }
}

/// One program execution, golden or faulty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunTrace {
    pub run_id: String,
    pub kind: RunKind,
    pub injection: Option<InjectionSite>,
    pub symbols: Vec<FunctionRecord>,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: malformed line `{text}`: {reason}")]
    MalformedLine {
        line: usize,
        text: String,
        reason: String,
    },
    #[error("line {line}: reference to undeclared function {function}")]
    UnknownFunction { line: usize, function: usize },
    #[error("line {line}: unbalanced events: {reason}")]
    UnbalancedEvents { line: usize, reason: String },
    #[error("line {line}: duplicate RUN header")]
    DuplicateHeader { line: usize },
}

/// Run ids double as file names inside a workspace.
pub fn is_valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

fn malformed(line: usize, text: &str, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedLine {
        line,
        text: text.to_string(),
        reason: reason.into(),
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Header,
    Symbols,
    Events,
}

/// Parses a trace from its text form.
pub fn parse_trace(text: &str) -> Result<RunTrace, TraceError> {
    let mut header: Option<(String, RunKind)> = None;
    let mut injection = None;
    let mut symbols: BTreeMap<usize, FunctionRecord> = BTreeMap::new();
    let mut names = HashSet::new();
    let mut events = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut section = Section::Header;
    let mut last_line = 0;

    let body = text.strip_suffix('\n').unwrap_or(text);
    for (i, raw) in body.split('\n').enumerate() {
        let line = i + 1;
        last_line = line;
        if raw.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = raw.split_ascii_whitespace().collect();
        let Some(&tag) = toks.first() else {
            return Err(malformed(line, raw, "empty line"));
        };

        if header.is_none() {
            if tag != "RUN" {
                return Err(malformed(line, raw, "trace must start with a RUN header"));
            }
            let [_, id, kind] = toks[..] else {
                return Err(malformed(
                    line,
                    raw,
                    "expected `RUN <run_id> <golden|faulty>`",
                ));
            };
            if !is_valid_run_id(id) {
                return Err(malformed(line, raw, "run id must match [A-Za-z0-9._-]+"));
            }
            let kind = match kind {
                "golden" => RunKind::Golden,
                "faulty" => RunKind::Faulty,
                _ => return Err(malformed(line, raw, "run kind must be golden or faulty")),
            };
            header = Some((id.to_string(), kind));
            continue;
        }
        let kind = header.as_ref().map(|h| h.1).unwrap_or(RunKind::Golden);

        if tag == "RUN" {
            return Err(TraceError::DuplicateHeader { line });
        }
        if tag == "INJ" {
            if section != Section::Header || injection.is_some() {
                return Err(malformed(
                    line,
                    raw,
                    "INJ must directly follow the RUN header",
                ));
            }
            if kind == RunKind::Golden {
                return Err(malformed(line, raw, "INJ on golden run"));
            }
            let [_, f, ev, bit] = toks[..] else {
                return Err(malformed(
                    line,
                    raw,
                    "expected `INJ <function_index> <dynamic_event_index> <bit>`",
                ));
            };
            let site = InjectionSite {
                function_index: parse_num(f, line, raw)?,
                dynamic_event_index: parse_num(ev, line, raw)?,
                bit: parse_num(bit, line, raw)?,
            };
            if site.bit > 63 {
                return Err(malformed(line, raw, "bit must be in 0..=63"));
            }
            injection = Some(site);
            continue;
        }
        if kind == RunKind::Faulty && injection.is_none() {
            return Err(malformed(
                line,
                raw,
                "faulty run requires an INJ line after RUN",
            ));
        }

        match tag {
            "FUN" | "SRC" | "MAP" => {
                if section == Section::Events {
                    return Err(malformed(
                        line,
                        raw,
                        "symbol table entries must precede events",
                    ));
                }
                section = Section::Symbols;
                match (tag, &toks[..]) {
                    ("FUN", [_, idx, name]) => {
                        let idx: usize = parse_num(idx, line, raw)?;
                        if symbols.contains_key(&idx) {
                            return Err(malformed(line, raw, "duplicate function index"));
                        }
                        if !names.insert(name.to_string()) {
                            return Err(malformed(line, raw, "duplicate function name"));
                        }
                        symbols.insert(idx, FunctionRecord::new(idx, *name));
                    }
                    ("SRC", [_, idx, file]) => {
                        let rec = symbol_mut(&mut symbols, parse_num(idx, line, raw)?, line)?;
                        if rec.source_file.replace(file.to_string()).is_some() {
                            return Err(malformed(line, raw, "duplicate SRC entry"));
                        }
                    }
                    ("MAP", [_, idx, addr, start, end]) => {
                        let addr = parse_addr(addr, line, raw)?;
                        let (start, end): (u32, u32) =
                            (parse_num(start, line, raw)?, parse_num(end, line, raw)?);
                        if start > end {
                            return Err(malformed(line, raw, "line_start exceeds line_end"));
                        }
                        let rec = symbol_mut(&mut symbols, parse_num(idx, line, raw)?, line)?;
                        if rec.source_line_map.insert(addr, (start, end)).is_some() {
                            return Err(malformed(line, raw, "duplicate MAP entry"));
                        }
                    }
                    _ => {
                        return Err(malformed(
                            line,
                            raw,
                            format!("wrong number of fields for {tag}"),
                        ))
                    }
                }
            }
            "C" | "B" | "R" => {
                section = Section::Events;
                let event = match (tag, &toks[..]) {
                    ("C", [_, f]) => TraceEvent::Call {
                        function: parse_num(f, line, raw)?,
                    },
                    ("B", [_, f, addr]) => TraceEvent::Block {
                        function: parse_num(f, line, raw)?,
                        addr: parse_addr(addr, line, raw)?,
                    },
                    ("R", [_, f]) => TraceEvent::Return {
                        function: parse_num(f, line, raw)?,
                    },
                    _ => {
                        return Err(malformed(
                            line,
                            raw,
                            format!("wrong number of fields for {tag}"),
                        ))
                    }
                };
                let function = event.function_index();
                if !symbols.contains_key(&function) {
                    return Err(TraceError::UnknownFunction { line, function });
                }
                match event {
                    TraceEvent::Call { .. } => stack.push(function),
                    TraceEvent::Block { .. } | TraceEvent::Return { .. } => match stack.last() {
                        None => {
                            return Err(TraceError::UnbalancedEvents {
                                line,
                                reason: format!("`{tag}` event with empty call stack"),
                            })
                        }
                        Some(&top) if top != function => {
                            return Err(TraceError::UnbalancedEvents {
                                line,
                                reason: format!("event names function {function} but function {top} is on top of the stack"),
                            })
                        }
                        Some(_) => {
                            if tag == "R" {
                                stack.pop();
                            }
                        }
                    },
                }
                events.push(event);
            }
            _ => return Err(malformed(line, raw, format!("unknown record type `{tag}`"))),
        }
    }

    let Some((run_id, kind)) = header else {
        return Err(malformed(last_line.max(1), "", "missing RUN header"));
    };
    if kind == RunKind::Faulty && injection.is_none() {
        return Err(malformed(
            last_line,
            "",
            "faulty run requires an INJ line after RUN",
        ));
    }
    if !stack.is_empty() {
        return Err(TraceError::UnbalancedEvents {
            line: last_line,
            reason: format!("{} call(s) still open at end of stream", stack.len()),
        });
    }
    if let Some(site) = injection {
        if !symbols.contains_key(&site.function_index) {
            return Err(TraceError::UnknownFunction {
                line: 2,
                function: site.function_index,
            });
        }
    }
    Ok(RunTrace {
        run_id,
        kind,
        injection,
        symbols: symbols.into_values().collect(),
        events,
    })
}

fn parse_num<T: FromStr>(tok: &str, line: usize, raw: &str) -> Result<T, TraceError> {
    if tok.len() > 1 && tok.starts_with('0') || tok.starts_with('+') {
        return Err(malformed(
            line,
            raw,
            format!("non-canonical integer `{tok}`"),
        ));
    }
    tok.parse()
        .map_err(|_| malformed(line, raw, format!("invalid integer `{tok}`")))
}

fn parse_addr(tok: &str, line: usize, raw: &str) -> Result<BlockAddr, TraceError> {
    tok.parse()
        .map_err(|e: ParseAddrError| malformed(line, raw, e.to_string()))
}

fn symbol_mut(
    symbols: &mut BTreeMap<usize, FunctionRecord>,
    idx: usize,
    line: usize,
) -> Result<&mut FunctionRecord, TraceError> {
    symbols.get_mut(&idx).ok_or(TraceError::UnknownFunction {
        line,
        function: idx,
    })
}

fn render_symbols(symbols: &[FunctionRecord], out: &mut String) {
    use std::fmt::Write;
    for rec in symbols {
        let _ = writeln!(out, "FUN {} {}", rec.index, rec.name);
        if let Some(file) = &rec.source_file {
            let _ = writeln!(out, "SRC {} {}", rec.index, file);
        }
        for (addr, (start, end)) in &rec.source_line_map {
            let _ = writeln!(out, "MAP {} {} {} {}", rec.index, addr, start, end);
        }
    }
}

impl RunTrace {
    /// Canonical text rendering; `parse_trace(&t.render()) == Ok(t)`.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(16 * self.events.len() + 64);
        let _ = writeln!(out, "RUN {} {}", self.run_id, self.kind.as_str());
        if let Some(site) = &self.injection {
            let _ = writeln!(
                out,
                "INJ {} {} {}",
                site.function_index, site.dynamic_event_index, site.bit
            );
        }
        render_symbols(&self.symbols, &mut out);
        for ev in &self.events {
            let _ = match ev {
                TraceEvent::Call { function } => writeln!(out, "C {function}"),
                TraceEvent::Block { function, addr } => writeln!(out, "B {function} {addr}"),
                TraceEvent::Return { function } => writeln!(out, "R {function}"),
            };
        }
        out
    }

    /// SHA-256 over the rendered symbol table; runs of the same program share it.
    pub fn symbol_digest(&self) -> String {
        symbol_digest(&self.symbols)
    }

    /// Symbol lookup by definition index.
    pub fn symbol(&self, index: usize) -> Option<&FunctionRecord> {
        self.symbols
            .binary_search_by_key(&index, |f| f.index)
            .ok()
            .map(|pos| &self.symbols[pos])
    }

    pub fn has_function(&self, index: usize) -> bool {
        self.symbol(index).is_some()
    }

    pub fn function_by_name(&self, name: &str) -> Option<&FunctionRecord> {
        self.symbols.iter().find(|f| f.name == name)
    }

    pub fn block_event_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Block { .. }))
            .count()
    }
}

pub fn symbol_digest(symbols: &[FunctionRecord]) -> String {
    let mut text = String::new();
    render_symbols(symbols, &mut text);
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A single invariant violation found by [`validate_run`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_index: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, event_index: Option<usize>, message: impl Into<String>) {
        self.findings.push(Finding {
            event_index,
            message: message.into(),
        });
    }
}

/// Checks every [`RunTrace`] invariant and reports violations instead of
/// failing on the first one.
pub fn validate_run(run: &RunTrace) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !is_valid_run_id(&run.run_id) {
        report.push(None, format!("invalid run id `{}`", run.run_id));
    }
    let mut names = HashSet::new();
    for pair in run.symbols.windows(2) {
        if pair[0].index >= pair[1].index {
            report.push(
                None,
                format!(
                    "symbol indices not strictly increasing at {}",
                    pair[1].index
                ),
            );
        }
    }
    for rec in &run.symbols {
        if !names.insert(rec.name.as_str()) {
            report.push(None, format!("duplicate function name `{}`", rec.name));
        }
    }
    match (run.kind, &run.injection) {
        (RunKind::Golden, Some(_)) => report.push(None, "injection on golden run"),
        (RunKind::Faulty, None) => report.push(None, "faulty run without injection"),
        (_, Some(site)) => {
            if !run.has_function(site.function_index) {
                report.push(
                    None,
                    format!("injection names unknown function {}", site.function_index),
                );
            }
            if site.bit > 63 {
                report.push(None, format!("injection bit {} out of range", site.bit));
            }
        }
        _ => {}
    }

    let mut stack: Vec<usize> = Vec::new();
    for (i, ev) in run.events.iter().enumerate() {
        let f = ev.function_index();
        if !run.has_function(f) {
            report.push(Some(i), format!("event references unknown function {f}"));
        }
        match ev {
            TraceEvent::Call { .. } => stack.push(f),
            TraceEvent::Block { .. } | TraceEvent::Return { .. } => match stack.last() {
                None => report.push(Some(i), "event with empty call stack"),
                Some(&top) if top != f => {
                    report.push(
                        Some(i),
                        format!("event names function {f} but {top} is on top of the stack"),
                    );
                    // resynchronise on the named frame if it is open at all
                    if matches!(ev, TraceEvent::Return { .. }) {
                        if let Some(pos) = stack.iter().rposition(|&g| g == f) {
                            stack.truncate(pos);
                        }
                    }
                }
                Some(_) => {
                    if matches!(ev, TraceEvent::Return { .. }) {
                        stack.pop();
                    }
                }
            },
        }
    }
    if !stack.is_empty() {
        report.push(
            None,
            format!("{} call(s) still open at end of trace", stack.len()),
        );
    }
    report
}
