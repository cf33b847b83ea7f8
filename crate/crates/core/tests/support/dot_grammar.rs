//! Recursive-descent recogniser for the Graphviz DOT language (graph, node,
//! edge and attribute statements, `ID = ID`, ports and all four ID forms;
//! subgraphs are not needed here and are rejected). Returns the node and
//! edge sets so exports can be checked for round-tripping counts.

#![allow(dead_code)]

use std::collections::BTreeSet;

#[derive(Debug, PartialEq, Eq)]
pub struct DotGraph {
    pub strict: bool,
    pub directed: bool,
    pub name: Option<String>,
    /// Nodes named by node statements or edge endpoints.
    pub nodes: BTreeSet<String>,
    pub edges: Vec<(String, String)>,
    /// Node statements in order, with their attributes.
    pub node_stmts: Vec<(String, Vec<(String, String)>)>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Id(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eq,
    Semi,
    Comma,
    Colon,
    Arrow,
    Line,
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let b: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let mut line_start = true;
    while i < b.len() {
        let c = b[i];
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if line_start && c == '#' {
            while i < b.len() && b[i] != '\n' {
                i += 1;
            }
            continue;
        }
        line_start = false;
        if c == '/' && b.get(i + 1) == Some(&'/') {
            while i < b.len() && b[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && b.get(i + 1) == Some(&'*') {
            i += 2;
            while i + 1 < b.len() && !(b[i] == '*' && b[i + 1] == '/') {
                i += 1;
            }
            if i + 1 >= b.len() {
                return Err("unterminated comment".into());
            }
            i += 2;
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '=' => Some(Tok::Eq),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            _ => None,
        };
        if let Some(t) = single {
            out.push(t);
            i += 1;
            continue;
        }
        if c == '-' && matches!(b.get(i + 1), Some('>') | Some('-')) {
            out.push(if b[i + 1] == '>' {
                Tok::Arrow
            } else {
                Tok::Line
            });
            i += 2;
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match b.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') if b.get(i + 1) == Some(&'"') => {
                        s.push('"');
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Tok::Id(s));
            continue;
        }
        if c == '<' {
            let mut depth = 0;
            let start = i;
            loop {
                match b.get(i) {
                    None => return Err("unterminated HTML string".into()),
                    Some('<') => depth += 1,
                    Some('>') => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
            i += 1;
            out.push(Tok::Id(b[start..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            if c == '-' {
                i += 1;
            }
            let mut digits = 0;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
                digits += 1;
            }
            if b.get(i) == Some(&'.') {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                    digits += 1;
                }
            }
            if digits == 0 {
                return Err(format!("bad numeral at offset {start}"));
            }
            if b.get(i).is_some_and(|ch| ch.is_alphabetic() || *ch == '_') {
                return Err(format!("numeral followed by letters at offset {start}"));
            }
            out.push(Tok::Id(b[start..i].iter().collect()));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && (b[i].is_alphanumeric() || b[i] == '_') {
                i += 1;
            }
            out.push(Tok::Id(b[start..i].iter().collect()));
            continue;
        }
        return Err(format!("unexpected character {c:?}"));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    directed: bool,
    graph: DotGraph,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), String> {
        match self.next() {
            Some(x) if x == t => Ok(()),
            other => Err(format!("expected {t:?}, found {other:?}")),
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(format!("expected ID, found {other:?}")),
        }
    }

    fn keyword(t: Option<&Tok>, kw: &str) -> bool {
        matches!(t, Some(Tok::Id(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn attr_list(&mut self) -> Result<Vec<(String, String)>, String> {
        let mut attrs = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            self.next();
            while self.peek() != Some(&Tok::RBracket) {
                let k = self.id()?;
                self.expect(Tok::Eq)?;
                let v = self.id()?;
                attrs.push((k, v));
                if matches!(self.peek(), Some(Tok::Semi) | Some(Tok::Comma)) {
                    self.next();
                }
            }
            self.expect(Tok::RBracket)?;
        }
        Ok(attrs)
    }

    fn node_id(&mut self) -> Result<String, String> {
        if Self::keyword(self.peek(), "subgraph") || self.peek() == Some(&Tok::LBrace) {
            return Err("subgraphs are not supported".into());
        }
        let id = self.id()?;
        if self.peek() == Some(&Tok::Colon) {
            self.next();
            self.id()?;
            if self.peek() == Some(&Tok::Colon) {
                self.next();
                self.id()?;
            }
        }
        Ok(id)
    }

    fn stmt(&mut self) -> Result<(), String> {
        let t = self.peek();
        if Self::keyword(t, "graph") || Self::keyword(t, "node") || Self::keyword(t, "edge") {
            self.next();
            self.attr_list()?;
            return Ok(());
        }
        let first = self.node_id()?;
        if self.peek() == Some(&Tok::Eq) {
            self.next();
            self.id()?;
            return Ok(());
        }
        let mut chain = vec![first];
        while let Some(op) = self.peek().cloned() {
            match op {
                Tok::Arrow if self.directed => {}
                Tok::Line if !self.directed => {}
                Tok::Arrow | Tok::Line => {
                    return Err("edge operator does not match graph kind".into())
                }
                _ => break,
            }
            self.next();
            chain.push(self.node_id()?);
        }
        let attrs = self.attr_list()?;
        if chain.len() == 1 {
            self.graph.nodes.insert(chain[0].clone());
            self.graph.node_stmts.push((chain.pop().unwrap(), attrs));
        } else {
            for w in chain.windows(2) {
                self.graph.nodes.insert(w[0].clone());
                self.graph.nodes.insert(w[1].clone());
                self.graph.edges.push((w[0].clone(), w[1].clone()));
            }
        }
        Ok(())
    }
}

pub fn parse_dot(src: &str) -> Result<DotGraph, String> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        directed: false,
        graph: DotGraph {
            strict: false,
            directed: false,
            name: None,
            nodes: BTreeSet::new(),
            edges: Vec::new(),
            node_stmts: Vec::new(),
        },
    };
    if Parser::keyword(p.peek(), "strict") {
        p.next();
        p.graph.strict = true;
    }
    p.directed = if Parser::keyword(p.peek(), "digraph") {
        true
    } else if Parser::keyword(p.peek(), "graph") {
        false
    } else {
        return Err("expected `graph` or `digraph`".into());
    };
    p.graph.directed = p.directed;
    p.next();
    if let Some(Tok::Id(_)) = p.peek() {
        p.graph.name = Some(p.id()?);
    }
    p.expect(Tok::LBrace)?;
    while p.peek() != Some(&Tok::RBrace) {
        if p.peek().is_none() {
            return Err("unexpected end of input".into());
        }
        p.stmt()?;
        if p.peek() == Some(&Tok::Semi) {
            p.next();
        }
    }
    p.expect(Tok::RBrace)?;
    if p.pos != p.toks.len() {
        return Err("trailing input after graph".into());
    }
    Ok(p.graph)
}
