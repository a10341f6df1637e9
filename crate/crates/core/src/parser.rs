//! Concrete ASCII syntax: fully parenthesized S-expressions with the keywords
//! `cost send recv quote call ncall seq par cchoice achoice gchoice def bot
//! eps once`. `#` starts a line comment. A file is a sequence of `def` forms
//! and agent programs; `(def (f x...) body)` populates the definition table
//! and the remaining top-level forms are the programs, in order.
//!
//! `call` is resolved against the definition table once the whole input is
//! read: calls of process definitions become process calls, calls of atomic
//! definitions or of undefined names become simple calls. A definition is
//! atomic when its body is a simple expression (cost, send, receive, quote).

use std::fmt;

use thiserror::Error;

use crate::ast::{DefTable, Definition, Expr, Name};
use crate::cost::CostWeight;

/// Byte range plus line/column of a syntactic element, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl SourceSpan {
    fn point(pos: usize, line: u32, column: u32) -> Self {
        SourceSpan {
            start: pos,
            end: pos,
            line,
            column,
        }
    }

    fn merge(self, other: SourceSpan) -> SourceSpan {
        SourceSpan {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: self.line,
            column: self.column,
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("parse error at {span}: {message}")]
pub struct ParseError {
    pub message: String,
    pub span: SourceSpan,
}

fn err<T>(message: impl Into<String>, span: SourceSpan) -> Result<T, ParseError> {
    Err(ParseError {
        message: message.into(),
        span,
    })
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Clone, Debug, PartialEq)]
enum Token {
    LParen,
    RParen,
    Atom(String),
}

fn lex(text: &str) -> Result<Vec<(Token, SourceSpan)>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            '#' => {
                while i < bytes.len() && bytes[i] as char != '\n' {
                    i += 1;
                }
            }
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '(' => {
                tokens.push((Token::LParen, SourceSpan::point(i, line, col)));
                i += 1;
                col += 1;
            }
            ')' => {
                tokens.push((Token::RParen, SourceSpan::point(i, line, col)));
                i += 1;
                col += 1;
            }
            _ => {
                let start = i;
                let start_col = col;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_whitespace() || c == '(' || c == ')' || c == '#' {
                        break;
                    }
                    i += 1;
                    col += 1;
                }
                let atom = match std::str::from_utf8(&bytes[start..i]) {
                    Ok(s) => s.to_string(),
                    Err(_) => {
                        return err(
                            "invalid UTF-8 in atom",
                            SourceSpan {
                                start,
                                end: i,
                                line,
                                column: start_col,
                            },
                        )
                    }
                };
                tokens.push((
                    Token::Atom(atom),
                    SourceSpan {
                        start,
                        end: i,
                        line,
                        column: start_col,
                    },
                ));
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Reading S-expressions

#[derive(Clone, Debug)]
enum SExp {
    Atom(String, SourceSpan),
    List(Vec<SExp>, SourceSpan),
}

impl SExp {
    fn span(&self) -> SourceSpan {
        match self {
            SExp::Atom(_, s) | SExp::List(_, s) => *s,
        }
    }
}

fn read_all(tokens: &[(Token, SourceSpan)]) -> Result<Vec<SExp>, ParseError> {
    let mut forms = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        let (form, next) = read_one(tokens, pos)?;
        forms.push(form);
        pos = next;
    }
    Ok(forms)
}

fn read_one(tokens: &[(Token, SourceSpan)], pos: usize) -> Result<(SExp, usize), ParseError> {
    match &tokens[pos] {
        (Token::Atom(a), span) => Ok((SExp::Atom(a.clone(), *span), pos + 1)),
        (Token::RParen, span) => err("unbalanced `)`", *span),
        (Token::LParen, open_span) => {
            let mut items = Vec::new();
            let mut cur = pos + 1;
            loop {
                match tokens.get(cur) {
                    None => return err("unbalanced `(`", *open_span),
                    Some((Token::RParen, close_span)) => {
                        let span = open_span.merge(*close_span);
                        return Ok((SExp::List(items, span), cur + 1));
                    }
                    Some(_) => {
                        let (item, next) = read_one(tokens, cur)?;
                        items.push(item);
                        cur = next;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lowering

const KEYWORDS: &[&str] = &[
    "cost", "send", "recv", "quote", "call", "ncall", "seq", "par", "cchoice", "achoice",
    "gchoice", "def", "bot", "eps", "once", "fuzzy",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn atom_name(form: &SExp, what: &str) -> Result<(Name, SourceSpan), ParseError> {
    match form {
        SExp::Atom(a, span) => {
            if is_keyword(a) {
                err(format!("keyword `{a}` cannot be used as {what}"), *span)
            } else if a.parse::<f64>().is_ok() {
                err(format!("number `{a}` cannot be used as {what}"), *span)
            } else {
                Ok((Name::new(a), *span))
            }
        }
        SExp::List(_, span) => err(format!("expected {what}, found a list"), *span),
    }
}

/// Raw definition before call resolution.
struct RawDef {
    name: Name,
    params: Vec<Name>,
    body: SExp,
    span: SourceSpan,
}

struct Lowerer {
    /// Names of definitions whose body is a simple expression.
    atomic: Vec<Name>,
    /// All defined names.
    defined: Vec<Name>,
}

impl Lowerer {
    fn is_atomic_def(&self, name: &Name) -> bool {
        self.atomic.contains(name)
    }

    fn is_defined(&self, name: &Name) -> bool {
        self.defined.contains(name)
    }

    fn lower(&self, form: &SExp) -> Result<Expr, ParseError> {
        match form {
            SExp::Atom(a, span) => match a.as_str() {
                "bot" => Ok(Expr::Bottom),
                "eps" => Ok(Expr::Epsilon),
                _ if is_keyword(a) => err(format!("keyword `{a}` is not an expression"), *span),
                _ if a.parse::<f64>().is_ok() => {
                    err(format!("unexpected number `{a}`"), *span)
                }
                _ => Ok(Expr::Var(Name::new(a))),
            },
            SExp::List(items, span) => {
                let head = match items.first() {
                    Some(SExp::Atom(a, _)) => a.as_str(),
                    Some(other) => return err("expected a keyword", other.span()),
                    None => return err("empty form", *span),
                };
                let rest = &items[1..];
                match head {
                    "cost" => Ok(Expr::Cost(self.lower_all(rest)?)),
                    "quote" => Ok(Expr::Suppress(self.lower_all(rest)?)),
                    "par" => {
                        if rest.is_empty() {
                            // Empty parallel composition is bottom by convention.
                            Ok(Expr::Bottom)
                        } else {
                            Ok(Expr::Par(self.lower_all(rest)?))
                        }
                    }
                    "cchoice" => {
                        if rest.is_empty() {
                            Ok(Expr::Bottom)
                        } else {
                            Ok(Expr::CostChoice(self.lower_all(rest)?))
                        }
                    }
                    "achoice" => {
                        if rest.is_empty() {
                            Ok(Expr::Bottom)
                        } else {
                            Ok(Expr::AdvChoice(self.lower_all(rest)?))
                        }
                    }
                    "gchoice" => self.lower_gchoice(rest, *span),
                    "send" => {
                        let (channel, _) = match rest.first() {
                            Some(f) => atom_name(f, "a channel name")?,
                            None => return err("send needs a channel", *span),
                        };
                        Ok(Expr::Send {
                            channel,
                            args: self.lower_all(&rest[1..])?,
                        })
                    }
                    "recv" => {
                        let (channel, _) = match rest.first() {
                            Some(f) => atom_name(f, "a channel name")?,
                            None => return err("recv needs a channel", *span),
                        };
                        let mut vars = Vec::new();
                        for v in &rest[1..] {
                            let (name, vspan) = atom_name(v, "a receive variable")?;
                            if vars.contains(&name) {
                                return err(
                                    format!("duplicate receive variable `{name}`"),
                                    vspan,
                                );
                            }
                            vars.push(name);
                        }
                        Ok(Expr::Receive { channel, vars })
                    }
                    "seq" => {
                        if rest.is_empty() {
                            return err("seq needs at least a head", *span);
                        }
                        let head = self.lower(&rest[0])?;
                        let tail = self.lower_all(&rest[1..])?;
                        if head == Expr::Epsilon && tail.is_empty() {
                            Ok(Expr::Epsilon)
                        } else {
                            Ok(Expr::seq(head, tail))
                        }
                    }
                    "call" => {
                        let (name, _) = match rest.first() {
                            Some(f) => atom_name(f, "a call target")?,
                            None => return err("call needs a name", *span),
                        };
                        let args = self.lower_all(&rest[1..])?;
                        if self.is_defined(&name) && !self.is_atomic_def(&name) {
                            Ok(Expr::ProcCall {
                                name,
                                args,
                                force_once: false,
                            })
                        } else {
                            Ok(Expr::SimpleCall {
                                name,
                                args,
                                negated: false,
                            })
                        }
                    }
                    "ncall" => {
                        let (name, nspan) = match rest.first() {
                            Some(f) => atom_name(f, "a call target")?,
                            None => return err("ncall needs a name", *span),
                        };
                        if self.is_defined(&name) && !self.is_atomic_def(&name) {
                            return err(
                                format!("`{name}` is a process definition; only simple calls can be negated"),
                                nspan,
                            );
                        }
                        Ok(Expr::SimpleCall {
                            name,
                            args: self.lower_all(&rest[1..])?,
                            negated: true,
                        })
                    }
                    "once" => {
                        let (name, nspan) = match rest.first() {
                            Some(f) => atom_name(f, "a call target")?,
                            None => return err("once needs a name", *span),
                        };
                        if !self.is_defined(&name) {
                            return err(format!("`{name}` is not defined"), nspan);
                        }
                        Ok(Expr::ProcCall {
                            name,
                            args: self.lower_all(&rest[1..])?,
                            force_once: true,
                        })
                    }
                    "def" => err("definitions are only allowed at top level", *span),
                    other => err(format!("unknown keyword `{other}`"), *span),
                }
            }
        }
    }

    fn lower_all(&self, forms: &[SExp]) -> Result<Vec<Expr>, ParseError> {
        forms.iter().map(|f| self.lower(f)).collect()
    }

    fn lower_gchoice(&self, rest: &[SExp], span: SourceSpan) -> Result<Expr, ParseError> {
        if rest.is_empty() {
            return Ok(Expr::Bottom);
        }
        let (fuzzy, rest) = match rest.first() {
            Some(SExp::Atom(a, _)) if a == "fuzzy" => (true, &rest[1..]),
            _ => (false, rest),
        };
        if rest.is_empty() {
            return Ok(Expr::Bottom);
        }
        let weighted: Vec<bool> = rest.iter().map(|f| Self::looks_weighted(f)).collect();
        if weighted.iter().any(|w| *w) && !weighted.iter().all(|w| *w) {
            return err(
                "gchoice branches must either all carry weights or none",
                span,
            );
        }
        let mut branches = Vec::new();
        if weighted[0] {
            for f in rest {
                let (w, child) = match f {
                    SExp::List(items, fspan) => {
                        if items.len() != 2 {
                            return err(
                                "weighted gchoice branch must be `(weight expr)`",
                                *fspan,
                            );
                        }
                        let w = match &items[0] {
                            SExp::Atom(a, aspan) => match a.parse::<f64>() {
                                Ok(w) => w,
                                Err(_) => return err(format!("bad weight `{a}`"), *aspan),
                            },
                            l => return err("weight must be a number", l.span()),
                        };
                        (w, self.lower(&items[1])?)
                    }
                    a => return err("weighted gchoice branch must be a list", a.span()),
                };
                let weight = if fuzzy {
                    CostWeight::Fuzzy(w)
                } else {
                    CostWeight::Probability(w)
                };
                branches.push((weight, child));
            }
        } else {
            let n = rest.len() as f64;
            for f in rest {
                let weight = if fuzzy {
                    CostWeight::Fuzzy(1.0)
                } else {
                    CostWeight::Probability(1.0 / n)
                };
                branches.push((weight, self.lower(f)?));
            }
        }
        Ok(Expr::GenChoice(branches))
    }

    fn looks_weighted(form: &SExp) -> bool {
        match form {
            SExp::List(items, _) => matches!(
                items.first(),
                Some(SExp::Atom(a, _)) if a.parse::<f64>().is_ok()
            ),
            _ => false,
        }
    }
}

fn simple_body(form: &SExp) -> bool {
    match form {
        SExp::List(items, _) => matches!(
            items.first(),
            Some(SExp::Atom(a, _)) if matches!(a.as_str(), "cost" | "send" | "recv" | "quote")
        ),
        _ => false,
    }
}

/// Parse a whole source text into its agent programs and definition table.
pub fn parse(text: &str) -> Result<(Vec<Expr>, DefTable), ParseError> {
    let tokens = lex(text)?;
    let forms = read_all(&tokens)?;

    let mut raw_defs: Vec<RawDef> = Vec::new();
    let mut program_forms: Vec<SExp> = Vec::new();
    for form in forms {
        if let SExp::List(items, span) = &form {
            if matches!(items.first(), Some(SExp::Atom(a, _)) if a == "def") {
                if items.len() != 3 {
                    return err("def takes a signature and a body", *span);
                }
                let (name, params) = match &items[1] {
                    SExp::List(sig, sig_span) => {
                        if sig.is_empty() {
                            return err("definition signature is empty", *sig_span);
                        }
                        let (name, _) = atom_name(&sig[0], "a definition name")?;
                        let mut params = Vec::new();
                        for p in &sig[1..] {
                            let (param, pspan) = atom_name(p, "a parameter")?;
                            if params.contains(&param) {
                                return err(format!("duplicate parameter `{param}`"), pspan);
                            }
                            params.push(param);
                        }
                        (name, params)
                    }
                    other => return err("definition signature must be a list", other.span()),
                };
                if raw_defs.iter().any(|d| d.name == name) {
                    return err(format!("duplicate definition of `{name}`"), *span);
                }
                raw_defs.push(RawDef {
                    name,
                    params,
                    body: items[2].clone(),
                    span: *span,
                });
                continue;
            }
        }
        program_forms.push(form);
    }

    let lowerer = Lowerer {
        atomic: raw_defs
            .iter()
            .filter(|d| simple_body(&d.body))
            .map(|d| d.name.clone())
            .collect(),
        defined: raw_defs.iter().map(|d| d.name.clone()).collect(),
    };

    let mut defs = DefTable::new();
    for raw in &raw_defs {
        let body = lowerer.lower(&raw.body)?;
        for v in body.free_vars() {
            if !raw.params.contains(&v) {
                return err(
                    format!("free variable `{v}` in definition of `{}`", raw.name),
                    raw.span,
                );
            }
        }
        let def = Definition::new(
            raw.name.clone(),
            raw.params.clone(),
            body,
            simple_body(&raw.body),
        )
        .map_err(|e| ParseError {
            message: e.to_string(),
            span: raw.span,
        })?;
        defs.insert(def).map_err(|e| ParseError {
            message: e.to_string(),
            span: raw.span,
        })?;
    }

    let programs = program_forms
        .iter()
        .map(|f| lowerer.lower(f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((programs, defs))
}

// ---------------------------------------------------------------------------
// Printing

/// Canonical form: one space between atoms; weights use the shortest decimal
/// that round-trips. `parse(print(e))` is structurally equal to `e` given the
/// same definitions.
pub fn print(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Bottom => out.push_str("bot"),
        Expr::Epsilon => out.push_str("eps"),
        Expr::Var(v) => out.push_str(v.as_str()),
        Expr::Cost(cs) => write_form("cost", cs, out),
        Expr::Suppress(cs) => write_form("quote", cs, out),
        Expr::Par(cs) => write_form("par", cs, out),
        Expr::CostChoice(cs) => write_form("cchoice", cs, out),
        Expr::AdvChoice(cs) => write_form("achoice", cs, out),
        Expr::GenChoice(cs) => {
            out.push_str("(gchoice");
            if cs.iter().any(|(w, _)| w.is_fuzzy()) {
                out.push_str(" fuzzy");
            }
            for (w, c) in cs {
                out.push_str(" (");
                out.push_str(&format!("{}", w.raw()));
                out.push(' ');
                write_expr(c, out);
                out.push(')');
            }
            out.push(')');
        }
        Expr::Send { channel, args } => {
            out.push_str("(send ");
            out.push_str(channel.as_str());
            for a in args {
                out.push(' ');
                write_expr(a, out);
            }
            out.push(')');
        }
        Expr::Receive { channel, vars } => {
            out.push_str("(recv ");
            out.push_str(channel.as_str());
            for v in vars {
                out.push(' ');
                out.push_str(v.as_str());
            }
            out.push(')');
        }
        Expr::SimpleCall {
            name,
            args,
            negated,
        } => {
            out.push('(');
            out.push_str(if *negated { "ncall" } else { "call" });
            out.push(' ');
            out.push_str(name.as_str());
            for a in args {
                out.push(' ');
                write_expr(a, out);
            }
            out.push(')');
        }
        Expr::ProcCall {
            name,
            args,
            force_once,
        } => {
            out.push('(');
            out.push_str(if *force_once { "once" } else { "call" });
            out.push(' ');
            out.push_str(name.as_str());
            for a in args {
                out.push(' ');
                write_expr(a, out);
            }
            out.push(')');
        }
        Expr::Seq { head, tail } => {
            out.push_str("(seq ");
            write_expr(head, out);
            for t in tail {
                out.push(' ');
                write_expr(t, out);
            }
            out.push(')');
        }
    }
}

fn write_form(kw: &str, children: &[Expr], out: &mut String) {
    out.push('(');
    out.push_str(kw);
    for c in children {
        out.push(' ');
        write_expr(c, out);
    }
    out.push(')');
}

/// Print a definition as a `def` form.
pub fn print_definition(def: &Definition) -> String {
    let mut out = String::from("(def (");
    out.push_str(def.name.as_str());
    for p in &def.params {
        out.push(' ');
        out.push_str(p.as_str());
    }
    out.push_str(") ");
    write_expr(&def.body, &mut out);
    out.push(')');
    out
}

/// Print a whole parsed unit back to source: definitions first, then programs.
pub fn print_unit(programs: &[Expr], defs: &DefTable) -> String {
    let mut out = String::new();
    for def in defs.iter() {
        out.push_str(&print_definition(def));
        out.push('\n');
    }
    for p in programs {
        out.push_str(&print(p));
        out.push('\n');
    }
    out
}

/// Display form using the calculus' traditional glyphs. Not re-parseable;
/// meant for human eyes behind the `--pretty` flag.
pub fn print_pretty(e: &Expr) -> String {
    let mut out = String::new();
    write_pretty(e, &mut out);
    out
}

fn write_pretty(e: &Expr, out: &mut String) {
    match e {
        Expr::Bottom => out.push('⊥'),
        Expr::Epsilon => out.push('ε'),
        Expr::Var(v) => out.push_str(v.as_str()),
        Expr::Cost(cs) => write_pretty_form("$", cs, out),
        Expr::Suppress(cs) => write_pretty_form("'", cs, out),
        Expr::Par(cs) => write_pretty_form("∥", cs, out),
        Expr::CostChoice(cs) => write_pretty_form("⊓", cs, out),
        Expr::AdvChoice(cs) => write_pretty_form("⊕", cs, out),
        Expr::GenChoice(cs) => {
            out.push_str("(⊔");
            for (w, c) in cs {
                out.push_str(&format!(" ({} ", w.raw()));
                write_pretty(c, out);
                out.push(')');
            }
            out.push(')');
        }
        Expr::Send { channel, args } => {
            out.push_str(&format!("(→ {}", channel));
            for a in args {
                out.push(' ');
                write_pretty(a, out);
            }
            out.push(')');
        }
        Expr::Receive { channel, vars } => {
            out.push_str(&format!("(← {}", channel));
            for v in vars {
                out.push(' ');
                out.push_str(v.as_str());
            }
            out.push(')');
        }
        Expr::SimpleCall {
            name,
            args,
            negated,
        } => {
            out.push('(');
            if *negated {
                out.push('¬');
            }
            out.push_str(name.as_str());
            for a in args {
                out.push(' ');
                write_pretty(a, out);
            }
            out.push(')');
        }
        Expr::ProcCall {
            name,
            args,
            force_once,
        } => {
            out.push('(');
            if *force_once {
                out.push('¹');
                out.push(' ');
            }
            out.push_str(name.as_str());
            for a in args {
                out.push(' ');
                write_pretty(a, out);
            }
            out.push(')');
        }
        Expr::Seq { head, tail } => {
            out.push_str("(∘ ");
            write_pretty(head, out);
            for t in tail {
                out.push(' ');
                write_pretty(t, out);
            }
            out.push(')');
        }
    }
}

fn write_pretty_form(kw: &str, children: &[Expr], out: &mut String) {
    out.push('(');
    out.push_str(kw);
    for c in children {
        out.push(' ');
        write_pretty(c, out);
    }
    out.push(')');
}
