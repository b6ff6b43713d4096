//! Concrete syntax: lexing, the line-block parser, pretty printers, and
//! the arity-driven kind inference that fills in `forall` binder kinds.
//!
//! Input files are sequences of blocks. A block starts on a line whose
//! first character is in column zero; indented lines continue the current
//! block and blank lines end it. `--` starts a comment. Blocks are one of
//!
//! ```text
//! K : A x <= A (B x)          -- a rewrite rule (left <= right, reversed)
//! g : forall a x . ...        -- a type signature
//! g a1 a2 = a2 (a1 ...)       -- a corecursive equation
//! h : A x = g (...) x ...     -- an annotated lemma (re-checkable output)
//! step h 20                   -- print the 20th term of the unfolding
//! :full 6 A x                 -- print the reduction tree to depth 6
//! :inner 6 A x                -- print 6 leftmost-innermost steps
//! ```
//!
//! Capitalized identifiers are constants, uncapitalized ones variables; a
//! capitalized name may serve as a term constant and as an axiom name at
//! once, since type and evidence positions never mix.

use crate::kernel::{Evidence, Kind, KindEnv, Name, Type};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at line {line}, column {col}: expected {expected}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}

/// One top-level block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decl {
    /// `name : lhs <= rhs` — a rewrite rule `lhs -> rhs`, written reversed.
    Rule { name: Name, lhs: Type, rhs: Type },
    /// `name : T` — an axiom, or the signature of a later equation.
    Sig { name: Name, ty: Type },
    /// `name p1 .. pn = e` — sugar for `name = mu name. \p1 .. pn. e`.
    Equation {
        name: Name,
        params: Vec<Name>,
        body: Evidence,
    },
    /// `name : T = e` — elaborated output, accepted back for re-checking.
    Lemma { name: Name, ty: Type, body: Evidence },
    Command(Command),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    /// `step h n`: the n-th term of the reduction unfolded from `h`
    /// (the start term counts as term 1).
    Step { name: Name, count: usize },
    /// `:full d t`: the reduction tree of `t` to depth `d`.
    FullTree { depth: usize, term: Type },
    /// `:inner n t`: `n` leftmost-innermost steps from `t`.
    InnerSteps { count: usize, term: Type },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum TokKind {
    Ident(String),
    Num(usize),
    Colon,
    Equals,
    Imply,    // =>
    RevImply, // <=
    LParen,
    RParen,
    Lambda,
    Dot,
    Forall,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Ident(s) => format!("identifier {}", s),
            TokKind::Num(n) => format!("number {}", n),
            TokKind::Colon => "':'".into(),
            TokKind::Equals => "'='".into(),
            TokKind::Imply => "'=>'".into(),
            TokKind::RevImply => "'<='".into(),
            TokKind::LParen => "'('".into(),
            TokKind::RParen => "')'".into(),
            TokKind::Lambda => "'\\'".into(),
            TokKind::Dot => "'.'".into(),
            TokKind::Forall => "'forall'".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Tok {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn lex_line(text: &str, line_no: usize, out: &mut Vec<Tok>) -> Result<(), ParseError> {
    let text = match text.find("--") {
        Some(i) => &text[..i],
        None => text,
    };
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let col = i + 1;
        let tok = |kind| Tok {
            kind,
            line: line_no,
            col,
        };
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => out.push(tok(TokKind::LParen)),
            ')' => out.push(tok(TokKind::RParen)),
            '\\' => out.push(tok(TokKind::Lambda)),
            '.' => out.push(tok(TokKind::Dot)),
            ':' => out.push(tok(TokKind::Colon)),
            '=' => {
                if bytes.get(i + 1) == Some(&'>') {
                    out.push(tok(TokKind::Imply));
                    i += 1;
                } else {
                    out.push(tok(TokKind::Equals));
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&'=') {
                    out.push(tok(TokKind::RevImply));
                    i += 1;
                } else {
                    return Err(ParseError {
                        line: line_no,
                        col,
                        expected: "'<='".into(),
                    });
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: usize = bytes[start..i].iter().collect::<String>().parse().unwrap();
                out.push(Tok {
                    kind: TokKind::Num(n),
                    line: line_no,
                    col,
                });
                continue;
            }
            c if c.is_alphabetic() => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_alphanumeric() || bytes[i] == '\'' || bytes[i] == '_')
                {
                    i += 1;
                }
                let word: String = bytes[start..i].iter().collect();
                let kind = if word == "forall" {
                    TokKind::Forall
                } else {
                    TokKind::Ident(word)
                };
                out.push(Tok {
                    kind,
                    line: line_no,
                    col,
                });
                continue;
            }
            other => {
                return Err(ParseError {
                    line: line_no,
                    col,
                    expected: format!("a token (found {:?})", other),
                })
            }
        }
        i += 1;
    }
    Ok(())
}

/// Splits the source into blocks of tokens, one block per declaration.
fn blocks(src: &str) -> Result<Vec<Vec<Tok>>, ParseError> {
    let mut result: Vec<Vec<Tok>> = Vec::new();
    let mut open = false;
    for (idx, raw) in src.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = match raw.find("--") {
            Some(i) => &raw[..i],
            None => raw,
        };
        if stripped.trim().is_empty() {
            open = false;
            continue;
        }
        let starts_block = !stripped.starts_with(|c: char| c.is_whitespace());
        if starts_block || !open {
            result.push(Vec::new());
            open = true;
        }
        lex_line(raw, line_no, result.last_mut().unwrap())?;
    }
    Ok(result.into_iter().filter(|b| !b.is_empty()).collect())
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Tok]) -> Parser<'a> {
        Parser { toks, pos: 0 }
    }

    fn peek(&self) -> Option<&TokKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn err(&self, expected: impl Into<String>) -> ParseError {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) => ParseError {
                line: t.line,
                col: t.col,
                expected: expected.into(),
            },
            None => ParseError {
                line: 0,
                col: 0,
                expected: expected.into(),
            },
        }
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), ParseError> {
        match self.peek() {
            Some(k) if *k == kind => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(kind.describe())),
        }
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek() {
            Some(TokKind::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("an identifier")),
        }
    }

    fn number(&mut self) -> Result<usize, ParseError> {
        match self.peek() {
            Some(TokKind::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("a number")),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("end of declaration"))
        }
    }

    // -- types --------------------------------------------------------------

    fn type_expr(&mut self) -> Result<Type, ParseError> {
        match self.peek() {
            Some(TokKind::Forall) => {
                self.pos += 1;
                let mut binders = vec![self.ident()?];
                while let Some(TokKind::Ident(_)) = self.peek() {
                    binders.push(self.ident()?);
                }
                self.expect(TokKind::Dot)?;
                let body = self.type_expr()?;
                // Binder kinds are placeholders until inference fills them.
                Ok(binders
                    .into_iter()
                    .rev()
                    .fold(body, |b, x| Type::forall(x, Kind::Star, b)))
            }
            Some(TokKind::Lambda) => {
                self.pos += 1;
                let mut binders = vec![self.ident()?];
                while let Some(TokKind::Ident(_)) = self.peek() {
                    binders.push(self.ident()?);
                }
                self.expect(TokKind::Dot)?;
                let body = self.type_expr()?;
                Ok(binders.into_iter().rev().fold(body, |b, x| Type::lam(x, b)))
            }
            _ => {
                let lhs = self.type_app()?;
                if self.peek() == Some(&TokKind::Imply) {
                    self.pos += 1;
                    let rhs = self.type_expr()?;
                    Ok(Type::imply(lhs, rhs))
                } else {
                    Ok(lhs)
                }
            }
        }
    }

    fn type_app(&mut self) -> Result<Type, ParseError> {
        let mut t = self
            .type_atom()?
            .ok_or_else(|| self.err("a type"))?;
        while let Some(arg) = self.type_atom()? {
            t = Type::app(t, arg);
        }
        Ok(t)
    }

    fn type_atom(&mut self) -> Result<Option<Type>, ParseError> {
        match self.peek() {
            Some(TokKind::Ident(s)) => {
                let t = ident_type(s);
                self.pos += 1;
                Ok(Some(t))
            }
            Some(TokKind::LParen) => {
                self.pos += 1;
                let t = self.type_expr()?;
                self.expect(TokKind::RParen)?;
                Ok(Some(t))
            }
            _ => Ok(None),
        }
    }

    // -- evidence -----------------------------------------------------------

    fn evidence_expr(&mut self) -> Result<Evidence, ParseError> {
        if self.peek() == Some(&TokKind::Lambda) {
            self.pos += 1;
            let mut binders = Vec::new();
            loop {
                match self.peek() {
                    Some(TokKind::Ident(_)) => binders.push((self.ident()?, None)),
                    Some(TokKind::LParen) => {
                        // `(x : T)` — an annotated evidence binder.
                        self.pos += 1;
                        let x = self.ident()?;
                        self.expect(TokKind::Colon)?;
                        let ty = self.type_expr()?;
                        self.expect(TokKind::RParen)?;
                        binders.push((x, Some(ty)));
                    }
                    Some(TokKind::Dot) => break,
                    _ => return Err(self.err("a binder or '.'")),
                }
            }
            if binders.is_empty() {
                return Err(self.err("at least one binder"));
            }
            self.expect(TokKind::Dot)?;
            let body = self.evidence_expr()?;
            Ok(binders
                .into_iter()
                .rev()
                .fold(body, |b, (x, ann)| Evidence::elam(x, ann, b)))
        } else {
            let mut e = self
                .evidence_atom()?
                .ok_or_else(|| self.err("an expression"))?;
            while let Some(arg) = self.evidence_atom()? {
                e = Evidence::app(e, arg);
            }
            Ok(e)
        }
    }

    fn evidence_atom(&mut self) -> Result<Option<Evidence>, ParseError> {
        match self.peek() {
            Some(TokKind::Ident(s)) => {
                let e = ident_evidence(s);
                self.pos += 1;
                Ok(Some(e))
            }
            Some(TokKind::LParen) => {
                self.pos += 1;
                let e = self.evidence_expr()?;
                self.expect(TokKind::RParen)?;
                Ok(Some(e))
            }
            _ => Ok(None),
        }
    }
}

fn is_constant(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_uppercase())
}

fn ident_type(name: &str) -> Type {
    if is_constant(name) {
        Type::cnst(name)
    } else {
        Type::var(name)
    }
}

fn ident_evidence(name: &str) -> Evidence {
    if is_constant(name) {
        Evidence::EConst(name.into())
    } else {
        Evidence::EVar(name.into())
    }
}

fn parse_block(toks: &[Tok]) -> Result<Decl, ParseError> {
    let mut p = Parser::new(toks);
    // Commands first: `:full`, `:inner`, `step`.
    if p.peek() == Some(&TokKind::Colon) {
        p.pos += 1;
        let cmd = p.ident()?;
        let n = p.number()?;
        let term = p.type_expr()?;
        p.expect_end()?;
        return match cmd.as_str() {
            "full" => Ok(Decl::Command(Command::FullTree { depth: n, term })),
            "inner" => Ok(Decl::Command(Command::InnerSteps { count: n, term })),
            _ => Err(ParseError {
                line: toks[0].line,
                col: toks[0].col,
                expected: "'full' or 'inner'".into(),
            }),
        };
    }
    if let Some(TokKind::Ident(s)) = p.peek() {
        if s == "step" {
            p.pos += 1;
            let name = p.ident()?;
            let count = p.number()?;
            p.expect_end()?;
            return Ok(Decl::Command(Command::Step { name, count }));
        }
    }
    let name = p.ident()?;
    match p.peek() {
        Some(TokKind::Colon) => {
            p.pos += 1;
            // `<=` and `=` never occur inside a type, so scanning ahead for
            // them classifies the block before committing to a sub-parser.
            let has_rev = toks.iter().any(|t| t.kind == TokKind::RevImply);
            if has_rev {
                let lhs = p.type_app()?;
                p.expect(TokKind::RevImply)?;
                let rhs = p.type_app()?;
                p.expect_end()?;
                return Ok(Decl::Rule { name, lhs, rhs });
            }
            let has_eq = toks.iter().any(|t| t.kind == TokKind::Equals);
            let ty = p.type_expr()?;
            if has_eq {
                p.expect(TokKind::Equals)?;
                let body = p.evidence_expr()?;
                p.expect_end()?;
                Ok(Decl::Lemma { name, ty, body })
            } else {
                p.expect_end()?;
                Ok(Decl::Sig { name, ty })
            }
        }
        _ => {
            let mut params = Vec::new();
            while let Some(TokKind::Ident(_)) = p.peek() {
                params.push(p.ident()?);
            }
            p.expect(TokKind::Equals)?;
            let body = p.evidence_expr()?;
            p.expect_end()?;
            Ok(Decl::Equation { name, params, body })
        }
    }
}

/// Parses a whole input file.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut decls = Vec::new();
    for block in blocks(src)? {
        decls.push(parse_block(&block)?);
    }
    let mut prog = Program { decls };
    fill_binder_kinds(&mut prog);
    Ok(prog)
}

/// Parses a single type (used by tests and the command terms).
pub fn parse_type(src: &str) -> Result<Type, ParseError> {
    let mut toks = Vec::new();
    lex_line(src, 1, &mut toks)?;
    let mut p = Parser::new(&toks);
    let t = p.type_expr()?;
    p.expect_end()?;
    Ok(binder_kinds_in(&t))
}

/// Parses a single evidence expression.
pub fn parse_evidence(src: &str) -> Result<Evidence, ParseError> {
    let mut toks = Vec::new();
    lex_line(src, 1, &mut toks)?;
    let mut p = Parser::new(&toks);
    let e = p.evidence_expr()?;
    p.expect_end()?;
    Ok(e)
}

// ---------------------------------------------------------------------------
// Kind inference
//
// The surface syntax never annotates kinds. Constants get `*^n => *` where n
// is the largest number of arguments they are applied to anywhere in the
// program; `forall` binders likewise, from their applications in the body.

/// Records the maximum applied arity of every constant in type positions.
fn const_arities(t: &Type, acc: &mut BTreeMap<Name, usize>) {
    let (head, args) = t.spine();
    if let Type::Const(c) = head {
        let e = acc.entry(c.clone()).or_insert(0);
        *e = (*e).max(args.len());
    }
    match head {
        Type::Lam(_, b) | Type::Forall(_, _, b) => const_arities(b, acc),
        Type::Imply(a, b) => {
            const_arities(a, acc);
            const_arities(b, acc);
        }
        _ => {}
    }
    for a in args {
        const_arities(a, acc);
    }
}

/// Maximum applied arity of the variable `x` in `t` (respecting shadowing).
fn var_arity(t: &Type, x: &str) -> usize {
    let (head, args) = t.spine();
    let mut n = 0;
    if let Type::Var(v) = head {
        if v == x {
            n = args.len();
        }
    }
    match head {
        Type::Lam(y, b) | Type::Forall(y, _, b) if y != x => n = n.max(var_arity(b, x)),
        Type::Imply(a, b) => n = n.max(var_arity(a, x)).max(var_arity(b, x)),
        _ => {}
    }
    for a in args {
        n = n.max(var_arity(a, x));
    }
    n
}

/// Fills each `forall` binder's kind from its applications in the body.
pub fn binder_kinds_in(t: &Type) -> Type {
    match t {
        Type::Var(_) | Type::Const(_) => t.clone(),
        Type::Lam(x, b) => Type::lam(x.clone(), binder_kinds_in(b)),
        Type::Forall(x, _, b) => {
            let k = Kind::term_kind(var_arity(b, x));
            Type::forall(x.clone(), k, binder_kinds_in(b))
        }
        Type::App(a, b) => Type::app(binder_kinds_in(a), binder_kinds_in(b)),
        Type::Imply(a, b) => Type::imply(binder_kinds_in(a), binder_kinds_in(b)),
    }
}

fn binder_kinds_in_evidence(e: &Evidence) -> Evidence {
    match e {
        Evidence::EVar(_) | Evidence::EConst(_) => e.clone(),
        Evidence::ELam(x, ann, b) => Evidence::elam(
            x.clone(),
            ann.as_ref().map(binder_kinds_in),
            binder_kinds_in_evidence(b),
        ),
        Evidence::Mu(x, b) => Evidence::mu(x.clone(), binder_kinds_in_evidence(b)),
        Evidence::TyLam(x, b) => Evidence::ty_lam(x.clone(), binder_kinds_in_evidence(b)),
        Evidence::EApp(f, a) => {
            Evidence::app(binder_kinds_in_evidence(f), binder_kinds_in_evidence(a))
        }
        Evidence::TyApp(f, t) => Evidence::ty_app(binder_kinds_in_evidence(f), binder_kinds_in(t)),
    }
}

fn fill_binder_kinds(prog: &mut Program) {
    for d in &mut prog.decls {
        match d {
            Decl::Rule { lhs, rhs, .. } => {
                *lhs = binder_kinds_in(lhs);
                *rhs = binder_kinds_in(rhs);
            }
            Decl::Sig { ty, .. } => *ty = binder_kinds_in(ty),
            Decl::Lemma { ty, body, .. } => {
                *ty = binder_kinds_in(ty);
                *body = binder_kinds_in_evidence(body);
            }
            Decl::Equation { body, .. } => *body = binder_kinds_in_evidence(body),
            Decl::Command(Command::FullTree { term, .. })
            | Decl::Command(Command::InnerSteps { term, .. }) => *term = binder_kinds_in(term),
            Decl::Command(_) => {}
        }
    }
}

/// The term-constant signature of a program: every constant occurring in a
/// type position, at its maximum applied arity, in first-occurrence order.
pub fn constant_kinds(prog: &Program) -> Vec<(Name, Kind)> {
    let mut order: Vec<Name> = Vec::new();
    let mut arities: BTreeMap<Name, usize> = BTreeMap::new();
    let visit = |t: &Type, order: &mut Vec<Name>, arities: &mut BTreeMap<Name, usize>| {
        const_arities(t, arities);
        // Preserve first-occurrence order: walk again recording new names.
        fn record(t: &Type, order: &mut Vec<Name>) {
            match t {
                Type::Const(c) => {
                    if !order.iter().any(|o| o == c) {
                        order.push(c.clone());
                    }
                }
                Type::Var(_) => {}
                Type::Lam(_, b) | Type::Forall(_, _, b) => record(b, order),
                Type::App(a, b) | Type::Imply(a, b) => {
                    record(a, order);
                    record(b, order);
                }
            }
        }
        record(t, order);
    };
    for d in &prog.decls {
        match d {
            Decl::Rule { lhs, rhs, .. } => {
                visit(lhs, &mut order, &mut arities);
                visit(rhs, &mut order, &mut arities);
            }
            Decl::Sig { ty, .. } | Decl::Lemma { ty, .. } => visit(ty, &mut order, &mut arities),
            Decl::Command(Command::FullTree { term, .. })
            | Decl::Command(Command::InnerSteps { term, .. }) => {
                visit(term, &mut order, &mut arities)
            }
            _ => {}
        }
    }
    order
        .into_iter()
        .map(|c| {
            let a = arities.get(&c).copied().unwrap_or(0);
            (c, Kind::term_kind(a))
        })
        .collect()
}

/// Builds a `KindEnv` from `constant_kinds`.
pub fn signature(prog: &Program) -> KindEnv {
    let mut env = KindEnv::new();
    for (c, k) in constant_kinds(prog) {
        env.insert(c, k);
    }
    env
}

// ---------------------------------------------------------------------------
// Printers

fn write_type(out: &mut String, t: &Type, prec: u8) {
    // prec 0: anywhere; 1: application head/imply operand; 2: argument
    match t {
        Type::Var(x) | Type::Const(x) => out.push_str(x),
        Type::Forall(..) => {
            let parens = prec > 0;
            if parens {
                out.push('(');
            }
            out.push_str("forall");
            let mut cur = t;
            while let Type::Forall(x, _, b) = cur {
                let _ = write!(out, " {}", x);
                cur = b;
            }
            out.push_str(" . ");
            write_type(out, cur, 0);
            if parens {
                out.push(')');
            }
        }
        Type::Lam(..) => {
            let parens = prec > 0;
            if parens {
                out.push('(');
            }
            out.push('\\');
            let mut cur = t;
            while let Type::Lam(x, b) = cur {
                let _ = write!(out, " {}", x);
                cur = b;
            }
            out.push_str(" . ");
            write_type(out, cur, 0);
            if parens {
                out.push(')');
            }
        }
        Type::Imply(a, b) => {
            let parens = prec > 0;
            if parens {
                out.push('(');
            }
            write_type(out, a, 1);
            out.push_str(" => ");
            write_type(out, b, 0);
            if parens {
                out.push(')');
            }
        }
        Type::App(f, a) => {
            let parens = prec > 1;
            if parens {
                out.push('(');
            }
            write_type(out, f, 1);
            out.push(' ');
            write_type(out, a, 2);
            if parens {
                out.push(')');
            }
        }
    }
}

pub fn print_type(t: &Type) -> String {
    let mut s = String::new();
    write_type(&mut s, t, 0);
    s
}

/// Prints a flat first-order term (same grammar as types).
pub fn print_term(t: &Type) -> String {
    print_type(t)
}

fn write_evidence(out: &mut String, e: &Evidence, prec: u8) {
    match e {
        Evidence::EVar(x) | Evidence::EConst(x) => out.push_str(x),
        Evidence::ELam(..) | Evidence::TyLam(..) => {
            let parens = prec > 0;
            if parens {
                out.push('(');
            }
            out.push('\\');
            let mut cur = e;
            loop {
                match cur {
                    Evidence::ELam(x, None, b) | Evidence::TyLam(x, b) => {
                        let _ = write!(out, " {}", x);
                        cur = b;
                    }
                    Evidence::ELam(x, Some(t), b) => {
                        let _ = write!(out, " ({} : {})", x, print_type(t));
                        cur = b;
                    }
                    _ => break,
                }
            }
            out.push_str(" . ");
            write_evidence(out, cur, 0);
            if parens {
                out.push(')');
            }
        }
        Evidence::Mu(x, b) => {
            let parens = prec > 0;
            if parens {
                out.push('(');
            }
            let _ = write!(out, "mu {} . ", x);
            write_evidence(out, b, 0);
            if parens {
                out.push(')');
            }
        }
        Evidence::EApp(f, a) => {
            let parens = prec > 1;
            if parens {
                out.push('(');
            }
            write_evidence(out, f, 1);
            out.push(' ');
            write_evidence(out, a, 2);
            if parens {
                out.push(')');
            }
        }
        Evidence::TyApp(f, t) => {
            let parens = prec > 1;
            if parens {
                out.push('(');
            }
            write_evidence(out, f, 1);
            out.push(' ');
            write_type(out, t, 2);
            if parens {
                out.push(')');
            }
        }
    }
}

pub fn print_evidence(e: &Evidence) -> String {
    let mut s = String::new();
    write_evidence(&mut s, e, 0);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{alpha_eq, alpha_eq_evidence};

    #[test]
    fn parses_rules_sigs_equations_and_commands() {
        let src = r"
Ka : A x <= A (B x)
Kb : B x <= A x

g : forall a b x .
      (forall p y . p (a (b y)) => p (a y)) =>
      (forall p y . p (a y) => p (b y)) => a x

g a b = a (g (\ v . a (b v)) (\ v . a v))

h : A x
h = g (\ v . Ka v) Kb

step h 20
";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.decls.len(), 7);
        match &prog.decls[0] {
            Decl::Rule { name, lhs, rhs } => {
                assert_eq!(name, "Ka");
                assert_eq!(print_type(lhs), "A x");
                assert_eq!(print_type(rhs), "A (B x)");
            }
            d => panic!("expected rule, got {:?}", d),
        }
        match &prog.decls[2] {
            Decl::Sig { name, ty } => {
                assert_eq!(name, "g");
                // a is applied to one argument in the body, so * => *
                if let Type::Forall(a, k, _) = ty {
                    assert_eq!(a, "a");
                    assert_eq!(*k, Kind::term_kind(1));
                } else {
                    panic!("not a forall: {:?}", ty);
                }
            }
            d => panic!("expected sig, got {:?}", d),
        }
        match &prog.decls[3] {
            Decl::Equation { name, params, .. } => {
                assert_eq!(name, "g");
                assert_eq!(params, &["a".to_string(), "b".to_string()]);
            }
            d => panic!("expected equation, got {:?}", d),
        }
        match &prog.decls[6] {
            Decl::Command(Command::Step { name, count }) => {
                assert_eq!(name, "h");
                assert_eq!(*count, 20);
            }
            d => panic!("expected step command, got {:?}", d),
        }
    }

    #[test]
    fn blank_lines_and_indentation_delimit_blocks() {
        // A continuation line glues to the block above even mid-expression.
        let src = "e : D Z\n     Z\ne = g\n";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.decls.len(), 2);
        match &prog.decls[0] {
            Decl::Sig { ty, .. } => assert_eq!(print_type(ty), "D Z Z"),
            d => panic!("{:?}", d),
        }
    }

    #[test]
    fn comments_are_ignored() {
        let src = "-- a rule\nK : A x <= A (B x) -- trailing\n";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.decls.len(), 1);
    }

    #[test]
    fn annotated_lemmas_round_trip() {
        let src = "h : A x =\n  g (\\ m1' . A m1') x (\\ p3' y4' (v : p3' (A (B y4'))) . Ka (\\ m1' . p3' m1') y4' v)\n";
        let prog = parse_program(src).unwrap();
        let (ty, body) = match &prog.decls[0] {
            Decl::Lemma { ty, body, .. } => (ty.clone(), body.clone()),
            d => panic!("{:?}", d),
        };
        let printed = format!("h : {} =\n  {}\n", print_type(&ty), print_evidence(&body));
        let again = parse_program(&printed).unwrap();
        match &again.decls[0] {
            Decl::Lemma { ty: t2, body: b2, .. } => {
                assert!(alpha_eq(&ty, t2));
                assert!(alpha_eq_evidence(&body, b2));
            }
            d => panic!("{:?}", d),
        }
    }

    #[test]
    fn printer_parenthesizes_minimally() {
        let t = parse_type("forall p x . p (G (F (G x))) => p (F x)").unwrap();
        assert_eq!(print_type(&t), "forall p x . p (G (F (G x))) => p (F x)");
        let e = parse_evidence("\\ v . a2 (a1 v)").unwrap();
        assert_eq!(print_evidence(&e), "\\ v . a2 (a1 v)");
        // nested implications keep their grouping
        let u = parse_type("(a => b) => a => b").unwrap();
        assert_eq!(print_type(&u), "(a => b) => a => b");
        assert!(alpha_eq(&parse_type(&print_type(&u)).unwrap(), &u));
    }

    #[test]
    fn signature_collects_constants_in_first_occurrence_order() {
        let src = "A : forall p x y . p (D x (S y)) => p (D (S x) y)\nB : forall p y . p (D (S y) Z) => p (D Z y)\n";
        let prog = parse_program(src).unwrap();
        let ks = constant_kinds(&prog);
        let shown: Vec<String> = ks
            .iter()
            .map(|(c, k)| format!("{} : {}", c, k))
            .collect();
        assert_eq!(
            shown,
            vec!["D : * => * => *", "S : * => *", "Z : *"]
        );
    }

    #[test]
    fn forall_binder_kinds_come_from_arity() {
        let t = parse_type("forall d . (forall p x y . p (d x (S y)) => p (d (S x) y)) => d Z Z")
            .unwrap();
        if let Type::Forall(_, k, body) = &t {
            assert_eq!(*k, Kind::term_kind(2));
            if let Type::Imply(prem, _) = body.as_ref() {
                if let Type::Forall(_, kp, _) = prem.as_ref() {
                    assert_eq!(*kp, Kind::term_kind(1));
                } else {
                    panic!("premise not a forall");
                }
            } else {
                panic!("body not an imply");
            }
        } else {
            panic!("not a forall");
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse_program("h :\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = parse_program("K : A x <= \n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = parse_program("? :\n").unwrap_err();
        assert_eq!((err.line, err.col), (1, 1));
    }

    #[test]
    fn tree_and_inner_commands() {
        let prog = parse_program(":full 6 A x\n:inner 6 F Z Z (S Z)\n").unwrap();
        match &prog.decls[0] {
            Decl::Command(Command::FullTree { depth, term }) => {
                assert_eq!(*depth, 6);
                assert_eq!(print_type(term), "A x");
            }
            d => panic!("{:?}", d),
        }
        match &prog.decls[1] {
            Decl::Command(Command::InnerSteps { count, term }) => {
                assert_eq!(*count, 6);
                assert_eq!(print_type(term), "F Z Z (S Z)");
            }
            d => panic!("{:?}", d),
        }
    }
}
