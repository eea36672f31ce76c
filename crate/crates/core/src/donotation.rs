//! Do-notation: parsing, linear type checking and elaboration to diagrams.
//!
//! ```text
//! program := ident "(" params ")" ":" stmt* "return" "(" vars ")"
//! stmt    := ident "(" vars ")" ["->" binders]
//!          | "?" Type "->" ident          (receive, session programs only)
//!          | "!" ident                    (send, session programs only)
//! binders := ident | "(" vars ")"
//! param   := ident [":" Type]
//! ```
//! `→` is accepted for `->`, and `#` starts a comment.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigUint;
use thiserror::Error;

use crate::diagram::{Builder, Diagram, DiagramError};
use crate::signature::Polygraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DoError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("variable `{0}` used more than once")]
    Reused(String),
    #[error("variable `{0}` is never used")]
    Unused(String),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("statement {stmt} (`{gen}`): expected {expected} {what}, found {found}")]
    Arity {
        stmt: usize,
        gen: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("variable `{var}` has type `{found}` but `{expected}` is required")]
    TypeMismatch {
        var: String,
        expected: String,
        found: String,
    },
    #[error("cannot infer the type of `{0}`; annotate it as `{0}: Type`")]
    CannotInfer(String),
    #[error("statement {0} sends or receives in a pure program")]
    Effect(usize),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Call {
        gen: String,
        args: Vec<String>,
        binders: Vec<String>,
    },
    Send {
        var: String,
    },
    Recv {
        ty: String,
        var: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoProgram {
    pub name: String,
    pub params: Vec<Param>,
    pub stmts: Vec<Stmt>,
    pub returns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Arrow,
    Bang,
    Question,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, DoError> {
    let mut out = vec![];
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    let err = |line, column, message: String| DoError::Syntax { line, column, message };
    while let Some(&c) = chars.peek() {
        let (l, cl) = (line, col);
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(s), l, cl));
            continue;
        }
        chars.next();
        col += 1;
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '!' => Tok::Bang,
            '?' => Tok::Question,
            '→' => Tok::Arrow,
            '-' if chars.peek() == Some(&'>') => {
                chars.next();
                col += 1;
                Tok::Arrow
            }
            other => return Err(err(l, cl, format!("unexpected character `{other}`"))),
        };
        out.push((tok, l, cl));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    at: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.at + 1).map(|t| &t.0)
    }

    fn fail<T>(&self, message: &str) -> Result<T, DoError> {
        let (line, column) = self.toks.get(self.at).map(|t| (t.1, t.2)).unwrap_or(self.end);
        Err(DoError::Syntax {
            line,
            column,
            message: message.to_string(),
        })
    }

    fn eat(&mut self, t: Tok, what: &str) -> Result<(), DoError> {
        if self.peek() == Some(&t) {
            self.at += 1;
            Ok(())
        } else {
            self.fail(&format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String, DoError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => self.fail("expected identifier"),
        }
    }

    fn vars(&mut self) -> Result<Vec<String>, DoError> {
        self.eat(Tok::LParen, "`(`")?;
        let mut out = vec![];
        if self.peek() == Some(&Tok::RParen) {
            self.at += 1;
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            match self.peek() {
                Some(Tok::Comma) => self.at += 1,
                Some(Tok::RParen) => {
                    self.at += 1;
                    return Ok(out);
                }
                _ => return self.fail("expected `,` or `)`"),
            }
        }
    }

    fn params(&mut self) -> Result<Vec<Param>, DoError> {
        self.eat(Tok::LParen, "`(`")?;
        let mut out = vec![];
        if self.peek() == Some(&Tok::RParen) {
            self.at += 1;
            return Ok(out);
        }
        loop {
            let name = self.ident()?;
            let ty = if self.peek() == Some(&Tok::Colon) {
                self.at += 1;
                Some(self.ident()?)
            } else {
                None
            };
            out.push(Param { name, ty });
            match self.peek() {
                Some(Tok::Comma) => self.at += 1,
                Some(Tok::RParen) => {
                    self.at += 1;
                    return Ok(out);
                }
                _ => return self.fail("expected `,` or `)`"),
            }
        }
    }
}

pub fn parse(text: &str) -> Result<DoProgram, DoError> {
    let toks = lex(text)?;
    let lines = text.lines().count().max(1);
    let mut p = Parser {
        toks,
        at: 0,
        end: (lines, text.lines().last().map(|l| l.len() + 1).unwrap_or(1)),
    };
    let name = p.ident()?;
    let params = p.params()?;
    p.eat(Tok::Colon, "`:`")?;
    let mut stmts = vec![];
    loop {
        match p.peek() {
            Some(Tok::Ident(s)) if s == "return" && p.peek2() == Some(&Tok::LParen) => {
                p.at += 1;
                let returns = p.vars()?;
                if p.peek().is_some() {
                    return p.fail("unexpected input after return");
                }
                return Ok(DoProgram {
                    name,
                    params,
                    stmts,
                    returns,
                });
            }
            Some(Tok::Ident(_)) => {
                let gen = p.ident()?;
                let args = p.vars()?;
                let binders = if p.peek() == Some(&Tok::Arrow) {
                    p.at += 1;
                    if p.peek() == Some(&Tok::LParen) {
                        p.vars()?
                    } else {
                        vec![p.ident()?]
                    }
                } else {
                    vec![]
                };
                stmts.push(Stmt::Call { gen, args, binders });
            }
            Some(Tok::Bang) => {
                p.at += 1;
                let var = p.ident()?;
                stmts.push(Stmt::Send { var });
            }
            Some(Tok::Question) => {
                p.at += 1;
                let ty = p.ident()?;
                p.eat(Tok::Arrow, "`->`")?;
                let var = p.ident()?;
                stmts.push(Stmt::Recv { ty, var });
            }
            _ => return p.fail("expected a statement or `return(...)`"),
        }
    }
}

/// Pretty-printer; `parse(&print(p)) == p`.
pub fn print(p: &DoProgram) -> String {
    let params: Vec<String> = p
        .params
        .iter()
        .map(|q| match &q.ty {
            Some(t) => format!("{}: {}", q.name, t),
            None => q.name.clone(),
        })
        .collect();
    let mut s = format!("{}({}):\n", p.name, params.join(", "));
    for st in &p.stmts {
        match st {
            Stmt::Call { gen, args, binders } => {
                let _ = write!(s, "  {}({})", gen, args.join(", "));
                if !binders.is_empty() {
                    let _ = write!(s, " -> ({})", binders.join(", "));
                }
                s.push('\n');
            }
            Stmt::Send { var } => {
                let _ = writeln!(s, "  !{var}");
            }
            Stmt::Recv { ty, var } => {
                let _ = writeln!(s, "  ?{ty} -> {var}");
            }
        }
    }
    let _ = writeln!(s, "  return({})", p.returns.join(", "));
    s
}

pub type VarId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TStmt {
    Call {
        gen: String,
        args: Vec<VarId>,
        binders: Vec<VarId>,
    },
    Send {
        var: VarId,
    },
    Recv {
        var: VarId,
    },
}

/// A checked program in single-assignment form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Typed {
    pub name: String,
    pub var_names: Vec<String>,
    pub var_types: Vec<String>,
    pub params: Vec<VarId>,
    pub stmts: Vec<TStmt>,
    pub returns: Vec<VarId>,
}

/// Linear type checking against `sig`. Send and receive statements are accepted only
/// when `allow_effects` is set.
pub fn check_with(program: &DoProgram, sig: &Polygraph, allow_effects: bool) -> Result<Typed, DoError> {
    let mut names: Vec<String> = vec![];
    let mut types: Vec<Option<String>> = vec![];
    let mut live: HashMap<String, VarId> = HashMap::new();
    let mut ever: HashSet<String> = HashSet::new();

    let declare = |t: &str| -> Result<(), DoError> {
        if sig.has_object(t) {
            Ok(())
        } else {
            Err(DoError::UnknownType(t.to_string()))
        }
    };
    let bind = |name: &str,
                ty: Option<String>,
                names: &mut Vec<String>,
                types: &mut Vec<Option<String>>,
                live: &mut HashMap<String, VarId>,
                ever: &mut HashSet<String>|
     -> Result<VarId, DoError> {
        if live.contains_key(name) {
            return Err(DoError::Unused(name.to_string()));
        }
        names.push(name.to_string());
        types.push(ty);
        ever.insert(name.to_string());
        live.insert(name.to_string(), names.len() - 1);
        Ok(names.len() - 1)
    };
    let consume = |name: &str,
                   want: Option<&str>,
                   types: &mut Vec<Option<String>>,
                   live: &mut HashMap<String, VarId>,
                   ever: &HashSet<String>|
     -> Result<VarId, DoError> {
        let v = match live.remove(name) {
            Some(v) => v,
            None if ever.contains(name) => return Err(DoError::Reused(name.to_string())),
            None => return Err(DoError::Unbound(name.to_string())),
        };
        if let Some(w) = want {
            match &types[v] {
                Some(t) if t != w => {
                    return Err(DoError::TypeMismatch {
                        var: name.to_string(),
                        expected: w.to_string(),
                        found: t.clone(),
                    })
                }
                Some(_) => {}
                None => types[v] = Some(w.to_string()),
            }
        }
        Ok(v)
    };

    let mut params = vec![];
    for q in &program.params {
        if let Some(t) = &q.ty {
            declare(t)?;
        }
        if ever.contains(&q.name) {
            return Err(DoError::Reused(q.name.clone()));
        }
        params.push(bind(
            &q.name,
            q.ty.clone(),
            &mut names,
            &mut types,
            &mut live,
            &mut ever,
        )?);
    }
    let mut stmts = vec![];
    for (k, st) in program.stmts.iter().enumerate() {
        match st {
            Stmt::Call { gen, args, binders } => {
                let g = sig
                    .generator(gen)
                    .ok_or_else(|| DoError::UnknownGenerator(gen.clone()))?;
                if g.effectful && !allow_effects {
                    return Err(DoError::Effect(k));
                }
                if g.inputs.len() != args.len() {
                    return Err(DoError::Arity {
                        stmt: k,
                        gen: gen.clone(),
                        what: "arguments",
                        expected: g.inputs.len(),
                        found: args.len(),
                    });
                }
                if g.outputs.len() != binders.len() {
                    return Err(DoError::Arity {
                        stmt: k,
                        gen: gen.clone(),
                        what: "binders",
                        expected: g.outputs.len(),
                        found: binders.len(),
                    });
                }
                let a = args
                    .iter()
                    .zip(&g.inputs)
                    .map(|(x, t)| consume(x, Some(t), &mut types, &mut live, &ever))
                    .collect::<Result<Vec<_>, _>>()?;
                let b = binders
                    .iter()
                    .zip(&g.outputs)
                    .map(|(x, t)| bind(x, Some(t.clone()), &mut names, &mut types, &mut live, &mut ever))
                    .collect::<Result<Vec<_>, _>>()?;
                stmts.push(TStmt::Call {
                    gen: gen.clone(),
                    args: a,
                    binders: b,
                });
            }
            Stmt::Send { var } => {
                if !allow_effects {
                    return Err(DoError::Effect(k));
                }
                let v = consume(var, None, &mut types, &mut live, &ever)?;
                stmts.push(TStmt::Send { var: v });
            }
            Stmt::Recv { ty, var } => {
                if !allow_effects {
                    return Err(DoError::Effect(k));
                }
                declare(ty)?;
                let v = bind(var, Some(ty.clone()), &mut names, &mut types, &mut live, &mut ever)?;
                stmts.push(TStmt::Recv { var: v });
            }
        }
    }
    let returns = program
        .returns
        .iter()
        .map(|x| consume(x, None, &mut types, &mut live, &ever))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(name) = live.keys().min() {
        return Err(DoError::Unused(name.clone()));
    }
    let var_types = types
        .into_iter()
        .zip(&names)
        .map(|(t, n)| t.ok_or_else(|| DoError::CannotInfer(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Typed {
        name: program.name.clone(),
        var_names: names,
        var_types,
        params,
        stmts,
        returns,
    })
}

/// Checks a pure program.
pub fn check(program: &DoProgram, sig: &Polygraph) -> Result<Typed, DoError> {
    check_with(program, sig, false)
}

/// Builds the diagram of a checked pure program: one wire per variable, one node per statement.
pub fn elaborate(typed: &Typed, sig: &Arc<Polygraph>) -> Result<Diagram, DoError> {
    let mut b = Builder::new(sig.clone());
    let mut wire = vec![usize::MAX; typed.var_names.len()];
    for &v in &typed.params {
        wire[v] = b.wire(&typed.var_types[v])?;
    }
    for (k, st) in typed.stmts.iter().enumerate() {
        match st {
            TStmt::Call { gen, args, binders } => {
                let ins: Vec<_> = args.iter().map(|&v| wire[v]).collect();
                let outs = b.node(gen, &ins)?;
                for (&v, w) in binders.iter().zip(outs) {
                    wire[v] = w;
                }
            }
            _ => return Err(DoError::Effect(k)),
        }
    }
    let ins = typed.params.iter().map(|&v| wire[v]).collect();
    let outs = typed.returns.iter().map(|&v| wire[v]).collect();
    Ok(b.finish(ins, outs)?)
}

/// Parses, checks and elaborates in one go.
pub fn compile(text: &str, sig: &Arc<Polygraph>) -> Result<Diagram, DoError> {
    let p = parse(text)?;
    let t = check(&p, sig)?;
    elaborate(&t, sig)
}

/// Number of insertions of `n` new items into a list of `m`, by the recurrence
/// `Ins(n+1, m) = (m+1) Ins(n, m+1)`, `Ins(0, m) = 1`.
pub fn insertion_count(n: usize, m: usize) -> BigUint {
    // Unfolding the recurrence from the bottom: Ins(0, m+n) = 1, then n steps up.
    let mut acc = BigUint::from(1u32);
    for k in (0..n).rev() {
        acc *= BigUint::from(m + k + 1);
    }
    acc
}
