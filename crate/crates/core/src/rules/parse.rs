use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{Constraint, ElementDecl, KeyEvent, PartName, RuleDiagnostic, StateDef};

/// A rule-source error with a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl core::error::Error for ParseError {}

impl From<ParseError> for RuleDiagnostic {
    fn from(e: ParseError) -> Self {
        RuleDiagnostic { line: Some(e.line), column: Some(e.column), ..RuleDiagnostic::error("", e.message) }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Arrow,
    Sym(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: u32,
    column: u32,
}

fn err(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError { line: pos.line, column: pos.column, message: message.into() }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        let advance = |i: &mut usize, col: &mut u32, n: usize| {
            *i += n;
            *col += n as u32;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            advance(&mut i, &mut col, 1);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut col, 1);
            }
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push((Tok::Arrow, pos));
            advance(&mut i, &mut col, 2);
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut col, 1);
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else if c.is_ascii_digit() || c == '-' || c == '.' {
            let start = i;
            advance(&mut i, &mut col, 1);
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                advance(&mut i, &mut col, 1);
            }
            let text: String = chars[start..i].iter().collect();
            let n: f64 = text.parse().map_err(|_| err(pos, format!("malformed number `{text}`")))?;
            out.push((Tok::Num(n), pos));
        } else if c == '"' {
            advance(&mut i, &mut col, 1);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(pos, "unterminated string")),
                    Some('"') => {
                        advance(&mut i, &mut col, 1);
                        break;
                    }
                    Some('\\') => {
                        let e = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => return Err(err(Pos { line, column: col }, "unknown escape in string")),
                        };
                        s.push(e);
                        advance(&mut i, &mut col, 2);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut col, 1);
                    }
                }
            }
            out.push((Tok::Str(s), pos));
        } else if "{}()[],;".contains(c) {
            out.push((Tok::Sym(c), pos));
            advance(&mut i, &mut col, 1);
        } else {
            return Err(err(pos, format!("unexpected character `{c}`")));
        }
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

/// A variable reference with its source position, checked after the state closes.
struct VarRef {
    name: String,
    pos: Pos,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(err(self.pos(), format!("expected `{kw}`, found {}", self.peek())))
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(err(self.pos(), format!("expected `{c}`, found {}", self.peek())))
        }
    }

    fn expect_arrow(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Arrow {
            self.bump();
            Ok(())
        } else {
            Err(err(self.pos(), format!("expected `->`, found {}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        match self.bump() {
            (Tok::Ident(s), p) => Ok((s, p)),
            (t, p) => Err(err(p, format!("expected identifier, found {t}"))),
        }
    }

    fn var(&mut self) -> Result<VarRef, ParseError> {
        let (name, pos) = self.ident()?;
        Ok(VarRef { name, pos })
    }

    fn string(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            (Tok::Str(s), _) => Ok(s),
            (t, p) => Err(err(p, format!("expected string, found {t}"))),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.bump() {
            (Tok::Num(n), _) => Ok(n),
            (t, p) => Err(err(p, format!("expected number, found {t}"))),
        }
    }

    fn file(&mut self) -> Result<Vec<KeyEvent>, ParseError> {
        let mut events = Vec::new();
        while *self.peek() != Tok::Eof {
            events.push(self.event()?);
        }
        Ok(events)
    }

    fn event(&mut self) -> Result<KeyEvent, ParseError> {
        self.expect_kw("event")?;
        let (event_id, _) = self.ident()?;
        self.expect_sym('{')?;
        self.expect_kw("action")?;
        let action_label = self.string()?;

        let mut states = Vec::new();
        while self.is_kw("state") {
            states.push(self.state()?);
        }
        if states.is_empty() {
            return Err(err(self.pos(), format!("event `{event_id}` needs at least one state, found {}", self.peek())));
        }

        let mut intervals = Vec::new();
        while self.is_kw("interval") {
            let kw_pos = self.pos();
            self.bump();
            let (from, _) = self.ident()?;
            self.expect_arrow()?;
            let (to, _) = self.ident()?;
            self.expect_kw("max")?;
            let thr = self.number()?;
            self.expect_kw("s")?;
            let k = intervals.len();
            if k + 1 < states.len() && (states[k].name != from || states[k + 1].name != to) {
                return Err(err(
                    kw_pos,
                    format!(
                        "interval {} must connect `{}` -> `{}`, found `{from}` -> `{to}`",
                        k + 1,
                        states[k].name,
                        states[k + 1].name
                    ),
                ));
            }
            intervals.push(thr);
        }
        let close = self.pos();
        self.expect_sym('}')?;

        if intervals.len() + 1 != states.len() {
            return Err(err(
                close,
                format!("event `{event_id}`: expected {} intervals, found {}", states.len() - 1, intervals.len()),
            ));
        }
        Ok(KeyEvent { event_id, action_label, states, intervals })
    }

    fn state(&mut self) -> Result<StateDef, ParseError> {
        self.expect_kw("state")?;
        let (name, _) = self.ident()?;
        self.expect_sym('{')?;

        let mut elements = Vec::new();
        let mut refs: Vec<VarRef> = Vec::new();
        loop {
            if self.is_kw("person") {
                self.bump();
                let (var, _) = self.ident()?;
                elements.push(ElementDecl::person(var));
            } else if self.is_kw("object") {
                self.bump();
                let class = self.string()?;
                let (var, _) = self.ident()?;
                elements.push(ElementDecl::object(class, var));
            } else if self.is_kw("part") {
                self.bump();
                let (pname, ppos) = self.ident()?;
                let part = PartName::from_name(&pname).ok_or_else(|| err(ppos, format!("unknown body part `{pname}`")))?;
                let (var, _) = self.ident()?;
                self.expect_kw("of")?;
                let owner = self.var()?;
                elements.push(ElementDecl::part(part, var, owner.name.clone()));
                refs.push(owner);
            } else {
                break;
            }
        }

        let mut constraints = Vec::new();
        loop {
            if self.is_kw("dir") {
                self.bump();
                self.expect_sym('(')?;
                let anchor = self.var()?;
                self.expect_arrow()?;
                let target = self.var()?;
                self.expect_sym(')')?;
                self.expect_kw("in")?;
                self.expect_sym('[')?;
                let deg_min = self.number()?;
                self.expect_kw("deg")?;
                self.expect_sym(',')?;
                let deg_max = self.number()?;
                self.expect_kw("deg")?;
                self.expect_sym(']')?;
                constraints.push(Constraint::Direction {
                    anchor: anchor.name.clone(),
                    target: target.name.clone(),
                    deg_min,
                    deg_max,
                });
                refs.extend([anchor, target]);
            } else if self.is_kw("contact") {
                self.bump();
                self.expect_sym('(')?;
                let a = self.var()?;
                self.expect_sym(',')?;
                let b = self.var()?;
                let mut iou_min = None;
                if *self.peek() == Tok::Sym(',') {
                    self.bump();
                    self.expect_kw("iou")?;
                    iou_min = Some(self.number()?);
                }
                self.expect_sym(')')?;
                constraints.push(Constraint::Contact { a: a.name.clone(), b: b.name.clone(), iou_min });
                refs.extend([a, b]);
            } else if self.is_kw("closer") {
                self.bump();
                self.expect_sym('(')?;
                let l0 = self.var()?;
                self.expect_sym(',')?;
                let l1 = self.var()?;
                self.expect_sym(';')?;
                let g0 = self.var()?;
                self.expect_sym(',')?;
                let g1 = self.var()?;
                self.expect_sym(')')?;
                constraints.push(Constraint::DistanceOrder {
                    lesser: (l0.name.clone(), l1.name.clone()),
                    greater: (g0.name.clone(), g1.name.clone()),
                });
                refs.extend([l0, l1, g0, g1]);
            } else if matches!(self.peek(), Tok::Ident(s) if s == "person" || s == "object" || s == "part") {
                return Err(err(self.pos(), "declarations must precede constraints"));
            } else {
                break;
            }
        }
        self.expect_sym('}')?;

        if let Some(r) = refs.iter().find(|r| !elements.iter().any(|e| e.var == r.name)) {
            return Err(err(r.pos, format!("undeclared variable `{}` in state `{name}`", r.name)));
        }
        Ok(StateDef { name, elements, constraints })
    }
}

/// Parses rule source into key events.
///
/// Checks syntax, variable references and interval count. Use
/// [`validate_event`](super::validate_event) for the remaining invariants.
pub fn parse_events(src: &str) -> Result<Vec<KeyEvent>, ParseError> {
    let toks = lex(src)?;
    Parser { toks, at: 0 }.file()
}
