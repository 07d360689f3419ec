//! Total parser from answer strings to [`AnswerValue`].
//!
//! Structure is decided first (matrices, unions, `\pm`, delimited lists,
//! intervals, booleans); everything else goes through a small LaTeX-aware
//! expression grammar. Input that fits nowhere becomes `Text`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Num;

use super::expr::{Constant, Expr, Function};
use super::extract::RawAnswer;
use super::value::{AnswerValue, Decimal, Interval, Matrix};

const MAX_DEPTH: usize = 128;

pub fn parse_answer(raw: &RawAnswer) -> AnswerValue {
    parse_str(&raw.text)
}

pub fn parse_str(text: &str) -> AnswerValue {
    let cleaned = strip_decorations(text);
    match parse_value(&cleaned, 0) {
        Some(v) => v,
        None => AnswerValue::Text(normalize_text(&cleaned)),
    }
}

/// Lowercased, whitespace-free form used for text comparison.
pub fn normalize_text(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

// ---------------------------------------------------------------------------
// decoration stripping

const DROP_COMMANDS: &[&str] = &[
    "\\displaystyle",
    "\\left",
    "\\right",
    "\\bigl",
    "\\bigr",
    "\\Bigl",
    "\\Bigr",
    "\\big",
    "\\Big",
    "\\!",
    "\\,",
    "\\;",
    "\\:",
    "\\ ",
    "\\$",
    "\\%",
];

const UNWRAP_COMMANDS: &[&str] = &["\\text", "\\textbf", "\\mathrm", "\\mathbf", "\\mbox", "\\textrm"];

pub(crate) fn strip_decorations(input: &str) -> String {
    let mut s: String = input
        .chars()
        .map(|c| match c {
            '\u{2212}' => '-',
            '\u{00D7}' => '*',
            '\u{00F7}' => '/',
            _ => c,
        })
        .collect();
    s = s.replace('π', "\\pi").replace('∞', "\\infty");
    s = s.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac");
    s = s.replace("\\left.", "").replace("\\right.", "");
    s = drop_commands(&s, DROP_COMMANDS);
    s = s.replace('$', "").replace('%', "").replace('~', " ").replace('°', "");
    for suffix in ["^{\\circ}", "^\\circ", "\\circ"] {
        s = s.replace(suffix, "");
    }
    s = drop_trailing_unit(s.trim());
    for cmd in UNWRAP_COMMANDS {
        s = unwrap_command(&s, cmd);
    }
    let s = s.trim().trim_end_matches(['.', ';']).trim().to_string();
    strip_assignment(&s)
}

/// Drops listed commands in one pass; `\\` row breaks are kept intact.
fn drop_commands(s: &str, drop: &[&str]) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('\\') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let name_len = match tail.chars().next() {
            None => 0,
            Some(c) if c.is_ascii_alphabetic() => tail.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(tail.len()),
            Some(c) => c.len_utf8(),
        };
        let cmd = &rest[pos..pos + 1 + name_len];
        if !drop.contains(&cmd) {
            out.push_str(cmd);
        }
        rest = &rest[pos + 1 + name_len..];
    }
    out.push_str(rest);
    out
}

/// `18 \text{ dollars}` -> `18`; a lone `\text{...}` is left for unwrapping.
fn drop_trailing_unit(s: &str) -> String {
    for cmd in ["\\text", "\\mbox", "\\textrm", "\\mathrm"] {
        if let Some(pos) = s.rfind(cmd) {
            let head = s[..pos].trim_end();
            let tail = &s[pos + cmd.len()..];
            if head.is_empty() || !tail.trim_start().starts_with('{') {
                continue;
            }
            if let Some(len) = group_len(tail.trim_start()) {
                let consumed = tail.len() - tail.trim_start().len() + len;
                let content = &tail.trim_start()[1..len - 1];
                let unit_like = content.trim().chars().all(|c| c.is_alphabetic() || c == ' ' || c == '.');
                if tail[consumed..].trim().is_empty() && unit_like && !content.trim().is_empty() {
                    return head.to_string();
                }
            }
        }
    }
    s.to_string()
}

/// Byte length of the brace group starting at `s[0] == '{'`, braces included.
fn group_len(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn unwrap_command(s: &str, cmd: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find(cmd) {
        let after = &rest[pos + cmd.len()..];
        if after.starts_with(|c: char| c.is_ascii_alphabetic()) {
            out.push_str(&rest[..pos + cmd.len()]);
            rest = after;
            continue;
        }
        let trimmed = after.trim_start();
        match trimmed.starts_with('{').then(|| group_len(trimmed)).flatten() {
            Some(len) => {
                out.push_str(&rest[..pos]);
                out.push_str(&trimmed[1..len - 1]);
                rest = &trimmed[len..];
            }
            None => {
                out.push_str(&rest[..pos + cmd.len()]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// `x = 5` -> `5` when the left side is a single (possibly subscripted) name.
fn strip_assignment(s: &str) -> String {
    if s.matches('=').count() != 1 {
        return s.to_string();
    }
    let (lhs, rhs) = s.split_once('=').unwrap_or((s, ""));
    let lhs = lhs.trim();
    let rhs = rhs.trim();
    let mut chars = lhs.chars();
    let first_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
    let rest: String = chars.collect();
    let rest_ok = rest.is_empty()
        || (rest.starts_with('_')
            && rest[1..]
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '{' || c == '}'));
    if first_ok && rest_ok && !rhs.is_empty() {
        rhs.to_string()
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// structural layer

fn parse_value(s: &str, depth: usize) -> Option<AnswerValue> {
    if depth > MAX_DEPTH {
        return None;
    }
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let lower = s.to_ascii_lowercase();
    match lower.as_str() {
        "true" | "yes" => return Some(AnswerValue::Boolean(true)),
        "false" | "no" => return Some(AnswerValue::Boolean(false)),
        _ => {}
    }
    if let Some(m) = parse_matrix(s, depth) {
        return Some(m);
    }
    let union_parts = split_top_level(s, Separator::Command("\\cup"));
    if union_parts.len() > 1 {
        let mut items = Vec::with_capacity(union_parts.len());
        for part in union_parts {
            let v = match parse_value(part, depth + 1)? {
                AnswerValue::Tuple(t) if t.len() == 2 => {
                    let mut it = t.into_iter();
                    AnswerValue::Interval(Box::new(Interval {
                        lo: it.next()?,
                        hi: it.next()?,
                        lo_closed: false,
                        hi_closed: false,
                    }))
                }
                v => v,
            };
            items.push(v);
        }
        return Some(AnswerValue::SetValue(items));
    }
    if let Some(delimited) = parse_delimited(s, depth) {
        return Some(delimited);
    }
    let commas = split_top_level(s, Separator::Comma);
    if commas.len() > 1 {
        if let Some(n) = parse_thousands(s) {
            return Some(n);
        }
        let items = commas
            .into_iter()
            .map(|p| parse_value(p, depth + 1))
            .collect::<Option<Vec<_>>>()?;
        return Some(AnswerValue::SetValue(items));
    }
    if let Some(pm) = expand_plus_minus(s, depth) {
        return Some(pm);
    }
    if is_word_like(s) {
        return Some(AnswerValue::Text(normalize_text(s)));
    }
    parse_scalar(s)
}

/// Words such as "Monday" or "odd" are text, not products of variables.
fn is_word_like(s: &str) -> bool {
    let mut longest_run = 0;
    let mut run = 0;
    for c in s.chars() {
        if c.is_alphabetic() {
            run += 1;
            longest_run = longest_run.max(run);
        } else if c == ' ' {
            run = 0;
        } else {
            return false;
        }
    }
    longest_run >= 3
}

fn parse_thousands(s: &str) -> Option<AnswerValue> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(b) => ("-", b),
        None => ("", s),
    };
    let (int_part, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let groups: Vec<&str> = int_part.split(',').collect();
    let first = groups.first()?;
    let ok = !first.is_empty()
        && first.len() <= 3
        && first.chars().all(|c| c.is_ascii_digit())
        && groups[1..].iter().all(|g| g.len() == 3 && g.chars().all(|c| c.is_ascii_digit()))
        && frac.is_none_or(|f| !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()));
    if !ok {
        return None;
    }
    let mut joined = format!("{sign}{}", groups.concat());
    if let Some(f) = frac {
        joined.push('.');
        joined.push_str(f);
    }
    parse_scalar(&joined)
}

fn expand_plus_minus(s: &str, depth: usize) -> Option<AnswerValue> {
    // a single sign choice; more would expand exponentially
    let count = find_commands(s, "\\pm") + find_commands(s, "\\mp");
    if count != 1 {
        return None;
    }
    for cmd in ["\\pm", "\\mp"] {
        if let Some(pos) = find_command(s, cmd) {
            let (head, tail) = (&s[..pos], &s[pos + cmd.len()..]);
            let (first, second) = if cmd == "\\pm" { ("+", "-") } else { ("-", "+") };
            let a = parse_value(&format!("{head}{first}{tail}"), depth + 1)?;
            let b = parse_value(&format!("{head}{second}{tail}"), depth + 1)?;
            return Some(AnswerValue::SetValue(vec![a, b]));
        }
    }
    None
}

fn find_commands(s: &str, cmd: &str) -> usize {
    let mut n = 0;
    let mut from = 0;
    while let Some(pos) = find_command(&s[from..], cmd) {
        n += 1;
        from += pos + cmd.len();
    }
    n
}

fn find_command(s: &str, cmd: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(rel) = s[from..].find(cmd) {
        let pos = from + rel;
        let after = &s[pos + cmd.len()..];
        if !after.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return Some(pos);
        }
        from = pos + cmd.len();
    }
    None
}

#[derive(Clone, Copy)]
enum Separator {
    Comma,
    Command(&'static str),
}

/// Splits at separators outside any bracket, brace or environment.
fn split_top_level(s: &str, sep: Separator) -> Vec<&str> {
    let bytes = s.as_bytes();
    let mut parts = Vec::new();
    let mut depth: i64 = 0;
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\\' {
            let rest = &s[i..];
            if rest.starts_with("\\{") || rest.starts_with("\\begin") {
                depth += 1;
            } else if rest.starts_with("\\}") || rest.starts_with("\\end") {
                depth -= 1;
            } else if let Separator::Command(cmd) = sep {
                if depth == 0
                    && rest.starts_with(cmd)
                    && !rest[cmd.len()..].starts_with(|c: char| c.is_ascii_alphabetic())
                {
                    parts.push(&s[start..i]);
                    i += cmd.len();
                    start = i;
                    continue;
                }
            }
            // skip the escaped character or command name
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                i += 1;
            }
            if i < bytes.len() && !bytes[i - 1].is_ascii_alphabetic() {
                i += 1;
            }
            continue;
        }
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b',' if depth == 0 && matches!(sep, Separator::Comma) => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    parts.push(&s[start..]);
    parts
}

/// Checks that `inner` never closes more than it opened and ends balanced.
fn balanced(inner: &str) -> bool {
    let mut depth: i64 = 0;
    let bytes = inner.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                let rest = &inner[i..];
                if rest.starts_with("\\{") {
                    depth += 1;
                } else if rest.starts_with("\\}") {
                    depth -= 1;
                }
                i += 2;
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return false;
        }
        i += 1;
    }
    depth == 0
}

fn parse_delimited(s: &str, depth: usize) -> Option<AnswerValue> {
    if let Some(inner) = s.strip_prefix("\\{").and_then(|r| r.strip_suffix("\\}")) {
        if !balanced(inner) {
            return None;
        }
        if inner.trim().is_empty() {
            return Some(AnswerValue::SetValue(Vec::new()));
        }
        let items = split_top_level(inner, Separator::Comma)
            .into_iter()
            .map(|p| parse_value(p, depth + 1))
            .collect::<Option<Vec<_>>>()?;
        return Some(AnswerValue::SetValue(items));
    }
    let open = s.chars().next()?;
    let close = s.chars().last()?;
    if !matches!(open, '(' | '[' | '{') || !matches!(close, ')' | ']' | '}') || s.len() < 2 {
        return None;
    }
    let inner = &s[1..s.len() - 1];
    if !balanced(inner) {
        return None;
    }
    let parts = split_top_level(inner, Separator::Comma);
    if parts.len() < 2 {
        // plain grouping like `(x+1)` is left to the expression grammar
        return None;
    }
    let items = parts
        .into_iter()
        .map(|p| parse_value(p, depth + 1))
        .collect::<Option<Vec<_>>>()?;
    match (open, close) {
        ('{', '}') => Some(AnswerValue::SetValue(items)),
        ('(', ')') => Some(AnswerValue::Tuple(items)),
        ('{', _) | (_, '}') => None,
        _ if items.len() == 2 && endpoints_ordered(&items[0], &items[1]) => {
            let mut it = items.into_iter();
            Some(AnswerValue::Interval(Box::new(Interval {
                lo: it.next()?,
                hi: it.next()?,
                lo_closed: open == '[',
                hi_closed: close == ']',
            })))
        }
        ('[', ']') => Some(AnswerValue::Tuple(items)),
        _ => None,
    }
}

fn endpoints_ordered(lo: &AnswerValue, hi: &AnswerValue) -> bool {
    let empty = Default::default();
    let (Some(a), Some(b)) = (lo.as_expr(), hi.as_expr()) else {
        return false;
    };
    if !a.free_vars().is_empty() || !b.free_vars().is_empty() {
        return true;
    }
    let (x, y) = (a.eval(&empty), b.eval(&empty));
    x.is_nan() || y.is_nan() || x <= y
}

fn parse_matrix(s: &str, depth: usize) -> Option<AnswerValue> {
    let rest = s.strip_prefix("\\begin{")?;
    let (env, body) = rest.split_once('}')?;
    if !matches!(env, "pmatrix" | "bmatrix" | "matrix" | "Bmatrix" | "smallmatrix") {
        return None;
    }
    let end = format!("\\end{{{env}}}");
    let body = body.trim_end().strip_suffix(end.as_str())?;
    let mut rows = Vec::new();
    for row in body.split("\\\\") {
        if row.trim().is_empty() {
            continue;
        }
        let cells = row
            .split('&')
            .map(|c| parse_value(c, depth + 1))
            .collect::<Option<Vec<_>>>()?;
        rows.push(cells);
    }
    Matrix::from_rows(rows).map(AnswerValue::Matrix)
}

// ---------------------------------------------------------------------------
// expression layer

/// Parses a single numeric or symbolic expression.
fn parse_scalar(s: &str) -> Option<AnswerValue> {
    if let Some(d) = parse_decimal_literal(s) {
        return Some(AnswerValue::Decimal(d));
    }
    let mut p = ExprParser::new(s);
    let expr = p.parse_expr().ok()?;
    p.skip_ws();
    if !p.at_end() {
        return None;
    }
    match expr.try_exact() {
        Some(q) => Some(AnswerValue::from_rational(q)),
        None => Some(AnswerValue::Symbolic(expr)),
    }
}

/// `-12.50` style literals keep their decimal notation.
fn parse_decimal_literal(s: &str) -> Option<Decimal> {
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b.trim_start()),
        None => (false, t.strip_prefix('+').unwrap_or(t).trim_start()),
    };
    let (int, frac) = body.split_once('.')?;
    if frac.is_empty()
        || !frac.chars().all(|c| c.is_ascii_digit())
        || !int.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int}{frac}");
    let mut sig = BigInt::from_str_radix(&digits, 10).ok()?;
    if neg {
        sig = -sig;
    }
    let exponent = -i32::try_from(frac.len()).ok()?;
    Some(Decimal::new(sig, exponent))
}

struct ExprParser {
    chars: Vec<char>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, ()>;

const OPERATOR_COMMANDS: &[&str] = &["cdot", "times", "div", "ast"];

impl ExprParser {
    fn new(s: &str) -> Self {
        Self {
            chars: s.chars().collect(),
            pos: 0,
            depth: 0,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(())
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    /// Command name at the cursor without consuming it.
    fn peek_command(&self) -> Option<String> {
        if self.peek() != Some('\\') {
            return None;
        }
        let name: String = self.chars[self.pos + 1..]
            .iter()
            .take_while(|c| c.is_ascii_alphabetic())
            .collect();
        Some(name)
    }

    fn take_command(&mut self) -> PResult<String> {
        let name = self.peek_command().ok_or(())?;
        if name.is_empty() {
            return Err(());
        }
        self.pos += 1 + name.len();
        Ok(name)
    }

    fn parse_expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.parse_term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some('-') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        self.leave();
        Ok(lhs)
    }

    fn parse_term(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some('/') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                Some('\\') => {
                    let name = self.peek_command().unwrap_or_default();
                    if OPERATOR_COMMANDS.contains(&name.as_str()) {
                        self.pos += 1 + name.len();
                        let rhs = self.parse_unary()?;
                        lhs = if name == "div" {
                            Expr::Div(Box::new(lhs), Box::new(rhs))
                        } else {
                            Expr::Mul(Box::new(lhs), Box::new(rhs))
                        };
                    } else if starts_primary_command(&name) {
                        let rhs = self.parse_power()?;
                        lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                    } else {
                        break;
                    }
                }
                Some(c) if c.is_ascii_alphanumeric() || c == '(' || c == '{' || c == '.' => {
                    let rhs = self.parse_power()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        self.enter()?;
        self.skip_ws();
        let out = match self.peek() {
            Some('-') => {
                self.pos += 1;
                Expr::Neg(Box::new(self.parse_unary()?))
            }
            Some('+') => {
                self.pos += 1;
                self.parse_unary()?
            }
            _ => self.parse_power()?,
        };
        self.leave();
        Ok(out)
    }

    fn parse_power(&mut self) -> PResult<Expr> {
        let base = self.parse_primary()?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let exponent = match self.peek() {
                Some('{') => self.parse_group('{', '}')?,
                Some('-') => {
                    self.pos += 1;
                    Expr::Neg(Box::new(self.parse_primary()?))
                }
                _ => self.parse_primary()?,
            };
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_group(&mut self, open: char, close: char) -> PResult<Expr> {
        if !self.eat(open) {
            return Err(());
        }
        let e = self.parse_expr()?;
        if !self.eat(close) {
            return Err(());
        }
        Ok(e)
    }

    fn parse_number(&mut self) -> PResult<Expr> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let int: String = self.chars[start..self.pos].iter().collect();
        let mut frac = String::new();
        if self.peek() == Some('.') && self.chars.get(self.pos + 1).is_some_and(char::is_ascii_digit) {
            self.pos += 1;
            let fs = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            frac = self.chars[fs..self.pos].iter().collect();
        }
        if int.is_empty() && frac.is_empty() {
            return Err(());
        }
        let digits = format!("{int}{frac}");
        let n = BigInt::from_str_radix(&digits, 10).map_err(|_| ())?;
        if frac.is_empty() {
            Ok(Expr::Num(BigRational::from_integer(n)))
        } else {
            let scale = num_traits::pow(BigInt::from(10), frac.len());
            Ok(Expr::Dec(BigRational::new(n, scale)))
        }
    }

    /// A single-token argument as in `\frac12` or `\sqrt2`, or a braced group.
    fn parse_arg(&mut self) -> PResult<Expr> {
        self.skip_ws();
        match self.peek() {
            Some('{') => self.parse_group('{', '}'),
            Some(c) if c.is_ascii_digit() => {
                self.pos += 1;
                Ok(Expr::int(i64::from(c.to_digit(10).ok_or(())?)))
            }
            Some(c) if c.is_alphabetic() => {
                self.pos += 1;
                Ok(letter(c))
            }
            Some('\\') => self.parse_primary(),
            _ => Err(()),
        }
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        self.enter()?;
        self.skip_ws();
        let out = match self.peek().ok_or(())? {
            c if c.is_ascii_digit() || c == '.' => self.parse_number()?,
            '(' => self.parse_group('(', ')')?,
            '{' => self.parse_group('{', '}')?,
            '[' => self.parse_group('[', ']')?,
            '\\' => self.parse_command()?,
            c if c.is_alphabetic() => {
                self.pos += 1;
                let mut e = letter(c);
                if let Expr::Var(name) = &mut e {
                    if self.peek() == Some('_') {
                        self.pos += 1;
                        let sub = self.subscript()?;
                        name.push('_');
                        name.push_str(&sub);
                    }
                }
                e
            }
            _ => return Err(()),
        };
        self.leave();
        Ok(out)
    }

    fn subscript(&mut self) -> PResult<String> {
        match self.peek() {
            Some('{') => {
                let start = self.pos + 1;
                let mut end = start;
                while end < self.chars.len() && self.chars[end] != '}' {
                    if !self.chars[end].is_ascii_alphanumeric() {
                        return Err(());
                    }
                    end += 1;
                }
                if end >= self.chars.len() || end == start {
                    return Err(());
                }
                self.pos = end + 1;
                Ok(self.chars[start..end].iter().collect())
            }
            Some(c) if c.is_ascii_alphanumeric() => {
                self.pos += 1;
                Ok(c.to_string())
            }
            _ => Err(()),
        }
    }

    fn parse_command(&mut self) -> PResult<Expr> {
        let name = self.take_command()?;
        match name.as_str() {
            "frac" => {
                let num = self.parse_arg()?;
                let den = self.parse_arg()?;
                Ok(Expr::Div(Box::new(num), Box::new(den)))
            }
            "sqrt" => {
                self.skip_ws();
                if self.peek() == Some('[') {
                    let index = self.parse_group('[', ']')?;
                    let radicand = self.parse_arg()?;
                    let exponent = Expr::Div(Box::new(Expr::int(1)), Box::new(index));
                    return Ok(Expr::Pow(Box::new(radicand), Box::new(exponent)));
                }
                Ok(Expr::Sqrt(Box::new(self.parse_arg()?)))
            }
            "pi" => Ok(Expr::Const(Constant::Pi)),
            "infty" | "infinity" => Ok(Expr::Const(Constant::Infinity)),
            other => {
                let f = Function::from_command(other).ok_or(())?;
                self.skip_ws();
                let arg = match self.peek() {
                    Some('(') => self.parse_group('(', ')')?,
                    Some('{') => self.parse_group('{', '}')?,
                    _ => self.parse_power()?,
                };
                Ok(Expr::Func(f, Box::new(arg)))
            }
        }
    }
}

fn starts_primary_command(name: &str) -> bool {
    matches!(name, "frac" | "sqrt" | "pi" | "infty" | "infinity") || Function::from_command(name).is_some()
}

fn letter(c: char) -> Expr {
    if c == 'e' {
        Expr::Const(Constant::E)
    } else {
        Expr::Var(c.to_string())
    }
}
