//! Textual policy and attribute-file syntax.
//!
//! ```text
//! policy     := "IF" cond "THEN" "CAN" "<" WORD "," WORD "," WORD ">"
//! cond       := term ("OR" term)*
//! term       := factor ("AND" factor)*
//! factor     := comparison | INT "OF" "(" cond ("," cond)+ ")" | "(" cond ")"
//! comparison := NAME "=" VALUE
//!             | NAME ("<" | ">" | "<=" | ">=" | "=") INT "#" INT
//! ```
//!
//! The `#INT` suffix is the bit width of a numeric comparison and is
//! mandatory. Attribute files hold one attribute per line, either
//! `name=value` or `name:=int#bits`.

use std::fmt;

use crate::policy::{
    compile_condition, is_reserved_char, AttributeAssignment, CmpOp, Comparison, ConditionTree,
    Expr, PolicyError, SatTuple,
};
use crate::token::Token;

const KEYWORDS: [&str; 6] = ["IF", "THEN", "CAN", "AND", "OR", "OF"];

/// A parsed authorization policy: `IF condition THEN CAN <S, A, T>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyAst {
    pub condition: Expr,
    pub sat: SatTuple,
}

impl PolicyAst {
    pub fn compile(&self) -> Result<ConditionTree, PolicyError> {
        compile_condition(&self.condition)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("threshold gate needs at least two children")]
    Arity,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Parse failure with its 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Lexeme {
    Word(String),
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Hash,
    Comma,
    LParen,
    RParen,
}

impl fmt::Display for Lexeme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lexeme::Word(w) => write!(f, "`{w}`"),
            Lexeme::Eq => f.write_str("`=`"),
            Lexeme::Lt => f.write_str("`<`"),
            Lexeme::Gt => f.write_str("`>`"),
            Lexeme::Le => f.write_str("`<=`"),
            Lexeme::Ge => f.write_str("`>=`"),
            Lexeme::Hash => f.write_str("`#`"),
            Lexeme::Comma => f.write_str("`,`"),
            Lexeme::LParen => f.write_str("`(`"),
            Lexeme::RParen => f.write_str("`)`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    lex: Lexeme,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut col) = (1, 1);
    while let Some(&c) = chars.peek() {
        let (l0, c0) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let ch = chars.next();
            if ch == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        let lexeme = match c {
            '=' => Some(Lexeme::Eq),
            '#' => Some(Lexeme::Hash),
            ',' => Some(Lexeme::Comma),
            '(' => Some(Lexeme::LParen),
            ')' => Some(Lexeme::RParen),
            '<' | '>' => {
                bump(&mut chars);
                let with_eq = chars.peek() == Some(&'=');
                if with_eq {
                    bump(&mut chars);
                }
                out.push(Spanned {
                    lex: match (c, with_eq) {
                        ('<', false) => Lexeme::Lt,
                        ('<', true) => Lexeme::Le,
                        ('>', false) => Lexeme::Gt,
                        _ => Lexeme::Ge,
                    },
                    line: l0,
                    col: c0,
                });
                continue;
            }
            _ => None,
        };
        if let Some(lex) = lexeme {
            bump(&mut chars);
            out.push(Spanned { lex, line: l0, col: c0 });
            continue;
        }
        let mut word = String::new();
        while let Some(&ch) = chars.peek() {
            if is_reserved_char(ch) {
                break;
            }
            word.push(ch);
            bump(&mut chars);
        }
        out.push(Spanned {
            lex: Lexeme::Word(word),
            line: l0,
            col: c0,
        });
    }
    out
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn new(src: &str) -> Self {
        let (line, col) = src.lines().enumerate().last().map_or((1, 1), |(i, l)| {
            (i + 1, l.chars().count() + 1)
        });
        Parser {
            toks: lex(src),
            pos: 0,
            end: (line, col),
        }
    }

    fn peek(&self) -> Option<&Lexeme> {
        self.toks.get(self.pos).map(|t| &t.lex)
    }

    fn peek_at(&self, n: usize) -> Option<&Lexeme> {
        self.toks.get(self.pos + n).map(|t| &t.lex)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map_or(self.end, |t| (t.line, t.col))
    }

    fn error_at(&self, at: (usize, usize), kind: impl Into<ParseErrorKind>) -> ParseError {
        ParseError {
            line: at.0,
            col: at.1,
            kind: kind.into(),
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let found = match self.peek() {
            Some(l) => l.to_string(),
            None => "end of input".to_string(),
        };
        self.error_at(
            self.here(),
            ParseErrorKind::Syntax(format!("expected {wanted}, found {found}")),
        )
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Lexeme::Word(w)) if w == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn punct(&mut self, want: Lexeme) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&want.to_string()))
        }
    }

    fn word(&mut self, what: &str) -> Result<(String, (usize, usize)), ParseError> {
        let at = self.here();
        match self.peek() {
            Some(Lexeme::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok((w, at))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn int(&mut self, what: &str) -> Result<(u64, (usize, usize)), ParseError> {
        let (w, at) = self.word(what)?;
        if w.is_empty() || !w.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.error_at(at, ParseErrorKind::Syntax(format!("expected {what}, found `{w}`"))));
        }
        let v = w
            .parse()
            .map_err(|_| self.error_at(at, ParseErrorKind::Syntax(format!("integer `{w}` is too large"))))?;
        Ok((v, at))
    }

    fn policy(&mut self) -> Result<PolicyAst, ParseError> {
        self.keyword("IF")?;
        let condition = self.cond()?;
        self.keyword("THEN")?;
        self.keyword("CAN")?;
        self.punct(Lexeme::Lt)?;
        let (s, s_at) = self.word("subject")?;
        self.punct(Lexeme::Comma)?;
        let (a, _) = self.word("action")?;
        self.punct(Lexeme::Comma)?;
        let (t, _) = self.word("target")?;
        self.punct(Lexeme::Gt)?;
        let sat = SatTuple::new(&s, &a, &t).map_err(|e| self.error_at(s_at, e))?;
        Ok(PolicyAst { condition, sat })
    }

    fn cond(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        while self.at_keyword("OR") {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::Or(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.factor()?];
        while self.at_keyword("AND") {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::And(factors)
        })
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match (self.peek(), self.peek_at(1)) {
            (Some(Lexeme::LParen), _) => {
                self.pos += 1;
                let inner = self.cond()?;
                self.punct(Lexeme::RParen)?;
                Ok(inner)
            }
            (Some(Lexeme::Word(_)), Some(Lexeme::Word(of))) if of == "OF" => self.threshold(),
            _ => self.comparison().map(Expr::Cmp),
        }
    }

    fn threshold(&mut self) -> Result<Expr, ParseError> {
        let (k, k_at) = self.int("threshold")?;
        self.keyword("OF")?;
        self.punct(Lexeme::LParen)?;
        let mut children = vec![self.cond()?];
        while self.peek() == Some(&Lexeme::Comma) {
            self.pos += 1;
            children.push(self.cond()?);
        }
        self.punct(Lexeme::RParen)?;
        if children.len() < 2 {
            return Err(self.error_at(k_at, ParseErrorKind::Arity));
        }
        let k = usize::try_from(k).unwrap_or(usize::MAX);
        if k == 0 || k > children.len() {
            return Err(self.error_at(
                k_at,
                PolicyError::Threshold {
                    k,
                    c: children.len(),
                },
            ));
        }
        Ok(Expr::Threshold { k, children })
    }

    fn comparison(&mut self) -> Result<Comparison, ParseError> {
        let (name, at) = self.word("attribute name")?;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(self.error_at(
                at,
                ParseErrorKind::Syntax(format!("expected attribute name, found keyword `{name}`")),
            ));
        }
        let op = match self.peek() {
            Some(Lexeme::Eq) => CmpOp::Eq,
            Some(Lexeme::Lt) => CmpOp::Lt,
            Some(Lexeme::Gt) => CmpOp::Gt,
            Some(Lexeme::Le) => CmpOp::Le,
            Some(Lexeme::Ge) => CmpOp::Ge,
            _ => return Err(self.unexpected("comparison operator")),
        };
        self.pos += 1;
        let numeric = op != CmpOp::Eq
            || matches!(
                (self.peek(), self.peek_at(1)),
                (Some(Lexeme::Word(_)), Some(Lexeme::Hash))
            );
        if !numeric {
            let (value, _) = self.word("value")?;
            return Comparison::string_eq(&name, &value).map_err(|e| self.error_at(at, e));
        }
        let (k, _) = self.int("integer constant")?;
        self.punct(Lexeme::Hash)?;
        let (bits, bits_at) = self.int("bit width")?;
        let bits = u32::try_from(bits).map_err(|_| self.error_at(bits_at, PolicyError::BitWidth(u32::MAX)))?;
        Comparison::numeric(&name, op, k, bits).map_err(|e| self.error_at(at, e))
    }
}

/// Parses exactly one policy.
pub fn parse_policy(text: &str) -> Result<PolicyAst, ParseError> {
    let mut p = Parser::new(text);
    let ast = p.policy()?;
    if p.peek().is_some() {
        return Err(p.unexpected("end of policy"));
    }
    Ok(ast)
}

/// Parses a file holding any number of consecutive policies.
pub fn parse_policies(text: &str) -> Result<Vec<PolicyAst>, ParseError> {
    let mut p = Parser::new(text);
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.policy()?);
    }
    Ok(out)
}

fn render_comparison(c: &Comparison, out: &mut String) {
    match c {
        Comparison::StringEq { name, value } => {
            out.push_str(name);
            out.push('=');
            out.push_str(value);
        }
        Comparison::Numeric {
            name,
            op,
            constant,
            bits,
        } => out.push_str(&format!("{name}{op}{constant}#{bits}")),
    }
}

fn render_expr(e: &Expr, out: &mut String) {
    let join = |cs: &[Expr], sep: &str, paren: &dyn Fn(&Expr) -> bool, out: &mut String| {
        for (i, c) in cs.iter().enumerate() {
            if i > 0 {
                out.push_str(sep);
            }
            if paren(c) {
                out.push('(');
                render_expr(c, out);
                out.push(')');
            } else {
                render_expr(c, out);
            }
        }
    };
    match e {
        Expr::Cmp(c) => render_comparison(c, out),
        Expr::And(cs) => join(cs, " AND ", &|c| matches!(c, Expr::And(_) | Expr::Or(_)), out),
        Expr::Or(cs) => join(cs, " OR ", &|c| matches!(c, Expr::Or(_)), out),
        Expr::Threshold { k, children } => {
            out.push_str(&format!("{k} OF ("));
            join(children, ", ", &|_| false, out);
            out.push(')');
        }
    }
}

/// Canonical single-line text; parsing it yields the same AST.
pub fn render_policy(ast: &PolicyAst) -> String {
    let mut out = String::from("IF ");
    render_expr(&ast.condition, &mut out);
    let [s, a, t] = ast.sat.items();
    out.push_str(&format!(" THEN CAN <{s}, {a}, {t}>"));
    out
}

/// Parses `name=value` and `name:=int#bits` lines; blank lines are skipped.
pub fn parse_attributes(text: &str) -> Result<AttributeAssignment, ParseError> {
    let mut out = AttributeAssignment::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = raw.len() - raw.trim_start().len() + 1;
        let err = |col: usize, kind: ParseErrorKind| ParseError {
            line: line_no,
            col,
            kind,
        };
        let split = trimmed
            .find(['=', ':'])
            .ok_or_else(|| err(col, ParseErrorKind::Syntax("expected `=` or `:=`".into())))?;
        let name = trimmed[..split].trim();
        let rest = &trimmed[split..];
        if out.get(name).is_some() {
            return Err(err(col, ParseErrorKind::Syntax(format!("duplicate attribute `{name}`"))));
        }
        if let Some(num) = rest.strip_prefix(":=") {
            let num_col = col + split + 2;
            let (v, bits) = num
                .trim()
                .split_once('#')
                .ok_or_else(|| err(num_col, ParseErrorKind::Syntax("expected `int#bits`".into())))?;
            let parse_int = |s: &str| -> Result<u64, ParseError> {
                let s = s.trim();
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(err(num_col, ParseErrorKind::Syntax(format!("expected integer, found `{s}`"))));
                }
                s.parse()
                    .map_err(|_| err(num_col, ParseErrorKind::Syntax(format!("integer `{s}` is too large"))))
            };
            let v = parse_int(v)?;
            let bits = u32::try_from(parse_int(bits)?).unwrap_or(u32::MAX);
            out.insert_numeric(name, v, bits)
                .map_err(|e| err(num_col, e.into()))?;
        } else if let Some(value) = rest.strip_prefix('=') {
            out.insert_str(name, value.trim())
                .map_err(|e| err(col, e.into()))?;
        } else {
            return Err(err(col + split, ParseErrorKind::Syntax("expected `=` or `:=`".into())));
        }
    }
    Ok(out)
}

/// Renders attributes back into file syntax, one per line.
pub fn render_attributes(a: &AttributeAssignment) -> String {
    use crate::policy::AttributeValue;
    a.iter()
        .map(|(name, v)| match v {
            AttributeValue::Str(s) => format!("{name}={s}\n"),
            AttributeValue::Num { value, bits } => format!("{name}:={value}#{bits}\n"),
        })
        .collect()
}

/// Shorthand for tests and examples.
pub fn tuple(s: &str, a: &str, t: &str) -> SatTuple {
    SatTuple {
        subject: Token::new(s).expect("non-empty"),
        action: Token::new(a).expect("non-empty"),
        target: Token::new(t).expect("non-empty"),
    }
}
