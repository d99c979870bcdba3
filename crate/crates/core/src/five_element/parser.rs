use std::collections::HashMap;

use super::lexer::{lex_entry, syntax, LexedEntry, Spanned, Tok};
use super::validate::{validate, DeclRef, Diagnostic, DiagnosticKind, Diagnostics};
use super::{
    Binding, CmpOp, Comparison, Condition, ConstraintDecl, Domain, Expr, FiveElementModel, IndexDomain, IndexFilter,
    Member, Objective, ParamDecl, ParamValue, Relation, Scalar, Sense, SetDecl, VarDecl,
    SECTION_NAMES,
};

const MAX_DEPTH: usize = 200;

#[derive(Clone, Copy)]
enum SectionName {
    Sets,
    Parameters,
    Variables,
    Objective,
    Constraints,
}

impl SectionName {
    const ALL: [SectionName; 5] = [
        SectionName::Sets,
        SectionName::Parameters,
        SectionName::Variables,
        SectionName::Objective,
        SectionName::Constraints,
    ];
}
const KEYWORDS: [&str; 5] = ["sum", "forall", "in", "and", "mod"];

/// Picks the part of an LLM response that holds the model: the last fenced
/// block containing all five section headers, or the whole text. Returns the
/// slice and the 0-based line offset of its first line.
pub fn extract_document(text: &str) -> (&str, usize) {
    let mut best: Option<(&str, usize)> = None;
    let mut open: Option<(usize, usize)> = None; // (byte offset of body, line of body)
    let mut offset = 0;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        if line.trim_start().starts_with("```") {
            match open.take() {
                None => open = Some((offset + line.len(), lineno + 1)),
                Some((start, start_line)) => {
                    let body = &text[start..offset];
                    if SECTION_NAMES.iter().all(|s| find_header(body, s).is_some()) {
                        best = Some((body, start_line));
                    }
                }
            }
        }
        offset += line.len();
    }
    best.unwrap_or((text, 0))
}

/// Matches `## Name:` (colon optional, case-insensitive) and returns the text
/// after the header on the same line.
fn header_of(line: &str) -> Option<(usize, &str)> {
    let rest = line.trim().strip_prefix("##")?;
    if rest.starts_with('#') {
        return None;
    }
    let rest = rest.trim_start();
    SECTION_NAMES.iter().enumerate().find_map(|(i, name)| {
        let head = rest.get(..name.len())?;
        if !head.eq_ignore_ascii_case(name) {
            return None;
        }
        let tail = &rest[name.len()..];
        if tail.chars().next().is_some_and(|c| c.is_alphanumeric()) {
            return None;
        }
        let tail = tail.trim_start();
        Some((i, tail.strip_prefix(':').unwrap_or(tail)))
    })
}

fn find_header(body: &str, name: &str) -> Option<usize> {
    body.lines().position(|l| header_of(l).is_some_and(|(i, _)| SECTION_NAMES[i] == name))
}

struct Section {
    /// (1-based line number, text)
    lines: Vec<(usize, String)>,
}

/// Parses a five-element document (possibly wrapped in prose or code fences)
/// and validates it.
pub fn parse_five_element(text: &str) -> Result<FiveElementModel, Diagnostics> {
    let (doc, line_offset) = extract_document(text);
    let mut sections: [Option<Section>; 5] = Default::default();
    let mut current: Option<usize> = None;
    let mut diags = Vec::new();
    for (i, line) in doc.lines().enumerate() {
        let lineno = line_offset + i + 1;
        if let Some((idx, tail)) = header_of(line) {
            if sections[idx].is_some() {
                diags.push(Diagnostic::at(
                    DiagnosticKind::SyntaxError,
                    format!("section `{}` appears more than once", SECTION_NAMES[idx]),
                    lineno,
                    1,
                ));
                current = None;
                continue;
            }
            let mut lines = Vec::new();
            if !tail.trim().is_empty() {
                lines.push((lineno, tail.to_string()));
            }
            sections[idx] = Some(Section { lines });
            current = Some(idx);
        } else if line.trim_start().starts_with("```") {
            current = None;
        } else if let Some(idx) = current {
            sections[idx].as_mut().unwrap().lines.push((lineno, line.to_string()));
        }
    }
    for (i, s) in sections.iter().enumerate() {
        if s.is_none() {
            diags.push(Diagnostic::new(
                DiagnosticKind::MissingSection(SECTION_NAMES[i].to_string()),
                format!("section `## {}:` is missing", SECTION_NAMES[i]),
            ));
        }
    }
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    let sections = sections.map(|s| s.unwrap());

    let mut spans: HashMap<DeclRef, usize> = HashMap::new();
    let mut sets = Vec::new();
    let mut parameters = Vec::new();
    let mut variables = Vec::new();
    let mut objective = None;
    let mut constraints = Vec::new();

    for (idx, section) in sections.iter().enumerate() {
        let name = SectionName::ALL[idx];
        for entry in group_entries(section) {
            let lexed = match lex_entry(&entry.1, entry.0) {
                Ok(l) => l,
                Err(d) => {
                    diags.push(d);
                    continue;
                }
            };
            if lexed.tokens.is_empty() {
                continue;
            }
            let mut cur = Cursor::new(&lexed);
            let result = match name {
                SectionName::Sets => cur.set_decl().map(|s| {
                    spans.insert(DeclRef::Set(sets.len()), lexed.line);
                    sets.push(s);
                }),
                SectionName::Parameters => cur.param_decl().map(|p| {
                    spans.insert(DeclRef::Param(parameters.len()), lexed.line);
                    parameters.push(p);
                }),
                SectionName::Variables => cur.var_decl().map(|v| {
                    spans.insert(DeclRef::Var(variables.len()), lexed.line);
                    variables.push(v);
                }),
                SectionName::Objective => {
                    if objective.is_some() {
                        Err(syntax(lexed.line, 1, "the objective section holds more than one objective"))
                    } else {
                        cur.objective().map(|o| {
                            spans.insert(DeclRef::Objective, lexed.line);
                            objective = Some(o);
                        })
                    }
                }
                SectionName::Constraints => cur.constraint().map(|c| {
                    spans.insert(DeclRef::Constraint(constraints.len()), lexed.line);
                    constraints.push(c);
                }),
            };
            if let Err(d) = result.and_then(|_| cur.finish()) {
                diags.push(d);
            }
        }
    }
    let Some(objective) = objective else {
        if diags.is_empty() {
            diags.push(Diagnostic::new(DiagnosticKind::SyntaxError, "the objective section is empty"));
        }
        return Err(Diagnostics(diags));
    };
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    let model = FiveElementModel { sets, parameters, variables, objective, constraints };
    let mut problems = validate(&model);
    if problems.is_empty() {
        return Ok(model);
    }
    for d in &mut problems {
        if let Some(line) = d.origin.and_then(|o| spans.get(&o)) {
            d.line = Some(*line);
        }
    }
    Err(Diagnostics(problems))
}

/// Splits a section into logical entries: one per line, except that an
/// entry continues while brackets are unbalanced.
fn group_entries(section: &Section) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String, i64)> = None;
    for (lineno, line) in &section.lines {
        let trimmed = line.trim();
        if pending.is_none() && (trimmed.is_empty() || trimmed.starts_with('#')) {
            continue;
        }
        let code = line.split('#').next().unwrap_or("");
        let delta: i64 = code
            .chars()
            .map(|c| match c {
                '(' | '[' | '{' => 1,
                ')' | ']' | '}' => -1,
                _ => 0,
            })
            .sum();
        match pending.as_mut() {
            Some((_, text, depth)) => {
                text.push('\n');
                text.push_str(line);
                *depth += delta;
            }
            None => pending = Some((*lineno, line.clone(), delta)),
        }
        if pending.as_ref().is_some_and(|p| p.2 <= 0) {
            let (l, t, _) = pending.take().unwrap();
            out.push((l, t));
        }
    }
    if let Some((l, t, _)) = pending {
        out.push((l, t));
    }
    out
}

struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
    entry: &'a LexedEntry,
    depth: usize,
}

impl<'a> Cursor<'a> {
    fn new(entry: &'a LexedEntry) -> Self {
        Cursor { toks: &entry.tokens, pos: 0, entry, depth: 0 }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.pos + n).map(|s| &s.tok)
    }

    fn error(&self, message: impl Into<String>) -> Diagnostic {
        let (line, column) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.column),
            None => self.entry.end,
        };
        syntax(line, column, message)
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {}", t.describe())),
            None => self.error(format!("expected {wanted}, found end of line")),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), Diagnostic> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), Diagnostic> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn finish(&self) -> Result<(), Diagnostic> {
        if self.pos < self.toks.len() {
            Err(self.unexpected("end of entry"))
        } else {
            Ok(())
        }
    }

    fn signed_number(&mut self) -> Result<f64, Diagnostic> {
        let negative = self.eat(&Tok::Minus);
        match self.peek() {
            Some(Tok::Number(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if negative { -v } else { v })
            }
            Some(Tok::Ident(s)) if s == "inf" => {
                self.pos += 1;
                Ok(if negative { f64::NEG_INFINITY } else { f64::INFINITY })
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn integer(&mut self) -> Result<i64, Diagnostic> {
        let v = self.signed_number()?;
        if v.fract() != 0.0 || !v.is_finite() || v.abs() > 9.0e15 {
            self.pos -= 1;
            return Err(self.error(format!("expected an integer, found {v}")));
        }
        Ok(v as i64)
    }

    // NAME = {m1, m2, ...}
    fn set_decl(&mut self) -> Result<SetDecl, Diagnostic> {
        let name = self.ident()?;
        self.expect(Tok::Assign)?;
        self.expect(Tok::LBrace)?;
        let mut members = Vec::new();
        if !self.eat(&Tok::RBrace) {
            loop {
                match self.peek() {
                    Some(Tok::Ident(s)) if !KEYWORDS.contains(&s.as_str()) => {
                        members.push(Member::Symbol(s.clone()));
                        self.pos += 1;
                    }
                    Some(Tok::Number(_)) | Some(Tok::Minus) => {
                        let lo = self.integer()?;
                        if self.eat(&Tok::DotDot) {
                            let hi = self.integer()?;
                            if hi < lo || hi - lo > 1_000_000 {
                                return Err(self.error(format!("invalid member range {lo}..{hi}")));
                            }
                            members.extend((lo..=hi).map(Member::Int));
                        } else {
                            members.push(Member::Int(lo));
                        }
                    }
                    _ => return Err(self.unexpected("a set member")),
                }
                if self.eat(&Tok::RBrace) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(SetDecl { name, members, description: self.entry.description.clone() })
    }

    fn name_list(&mut self) -> Result<Vec<String>, Diagnostic> {
        let mut names = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            names.push(self.ident()?);
        }
        Ok(names)
    }

    fn scalar(&mut self) -> Result<Scalar, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(s)) if s != "inf" => {
                let s = s.clone();
                self.pos += 1;
                Ok(Scalar::Symbol(s))
            }
            _ => {
                let v = self.signed_number()?;
                if !v.is_finite() {
                    self.pos -= 1;
                    return Err(self.error("parameter values must be finite"));
                }
                Ok(Scalar::Num(v))
            }
        }
    }

    fn value_list(&mut self, out: &mut Vec<Scalar>) -> Result<(), Diagnostic> {
        self.descend()?;
        self.expect(Tok::LParen)?;
        loop {
            if self.peek() == Some(&Tok::LParen) {
                self.value_list(out)?;
            } else {
                out.push(self.scalar()?);
            }
            if self.eat(&Tok::RParen) {
                break;
            }
            self.expect(Tok::Comma)?;
        }
        self.depth -= 1;
        Ok(())
    }

    // NAME[SETS] = (v1, ..., vk)  |  NAME = v
    fn param_decl(&mut self) -> Result<ParamDecl, Diagnostic> {
        let name = self.ident()?;
        let mut index = Vec::new();
        if self.eat(&Tok::LBracket) {
            index = self.name_list()?;
            self.expect(Tok::RBracket)?;
        }
        self.expect(Tok::Assign)?;
        let value = if self.peek() == Some(&Tok::LParen) {
            let mut values = Vec::new();
            self.value_list(&mut values)?;
            ParamValue::Array(values)
        } else {
            ParamValue::Scalar(self.scalar()?)
        };
        Ok(ParamDecl { name, index, value, description: self.entry.description.clone() })
    }

    // NAME[SETS] : domain [in lo..hi]  |  NAME[i in I, j in J | cond] : domain ...
    fn var_decl(&mut self) -> Result<VarDecl, Diagnostic> {
        let name = self.ident()?;
        let mut index = Vec::new();
        let mut filter = None;
        if self.eat(&Tok::LBracket) {
            let binding_form = matches!(self.peek_at(1), Some(Tok::Ident(s)) if s == "in");
            if binding_form {
                let domain = self.index_domain()?;
                let names = domain.bindings.iter().map(|b| b.var.clone()).collect();
                index = domain.bindings.into_iter().map(|b| b.set).collect();
                filter = Some(IndexFilter { names, condition: domain.condition.unwrap_or(Condition(Vec::new())) });
            } else {
                index = self.name_list()?;
            }
            self.expect(Tok::RBracket)?;
        }
        self.expect(Tok::Colon)?;
        let domain = match self.peek() {
            Some(Tok::Ident(s)) => match s.to_ascii_lowercase().as_str() {
                "binary" => Domain::Binary,
                "integer" => Domain::Integer,
                "continuous" => Domain::Continuous,
                _ => return Err(self.unexpected("`binary`, `integer` or `continuous`")),
            },
            _ => return Err(self.unexpected("`binary`, `integer` or `continuous`")),
        };
        self.pos += 1;
        let bounds = if self.eat_keyword("in") {
            let lo = self.signed_number()?;
            self.expect(Tok::DotDot)?;
            let hi = self.signed_number()?;
            Some((lo, hi))
        } else {
            None
        };
        Ok(VarDecl { name, index, filter, domain, bounds, description: self.entry.description.clone() })
    }

    fn objective(&mut self) -> Result<Objective, Diagnostic> {
        let sense = match self.peek() {
            Some(Tok::Ident(s)) => match s.to_ascii_lowercase().as_str() {
                "minimize" | "min" | "minimise" => Sense::Minimize,
                "maximize" | "max" | "maximise" => Sense::Maximize,
                _ => return Err(self.unexpected("`minimize` or `maximize`")),
            },
            _ => return Err(self.unexpected("`minimize` or `maximize`")),
        };
        self.pos += 1;
        let expr = self.expr()?;
        Ok(Objective { sense, expr, description: self.entry.description.clone() })
    }

    fn constraint(&mut self) -> Result<ConstraintDecl, Diagnostic> {
        let lhs = self.expr()?;
        let relation = match self.peek() {
            Some(Tok::Le) => Relation::Le,
            Some(Tok::Ge) => Relation::Ge,
            Some(Tok::EqEq) | Some(Tok::Assign) => Relation::Eq,
            _ => return Err(self.unexpected("`<=`, `>=` or `==`")),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        let quantifier = if self.eat_keyword("forall") { Some(self.index_domain()?) } else { None };
        Ok(ConstraintDecl { lhs, relation, rhs, quantifier, description: self.entry.description.clone() })
    }

    fn index_domain(&mut self) -> Result<IndexDomain, Diagnostic> {
        let mut bindings = Vec::new();
        loop {
            let var = self.ident()?;
            self.expect_keyword("in")?;
            let set = self.ident()?;
            bindings.push(Binding { var, set });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let condition = if self.eat(&Tok::Pipe) { Some(self.condition()?) } else { None };
        Ok(IndexDomain { bindings, condition })
    }

    fn condition(&mut self) -> Result<Condition, Diagnostic> {
        let mut cmps = Vec::new();
        loop {
            let left = self.label()?;
            let op = match self.peek() {
                Some(Tok::EqEq) | Some(Tok::Assign) => CmpOp::Eq,
                Some(Tok::Ne) => CmpOp::Ne,
                _ => return Err(self.unexpected("`==` or `!=`")),
            };
            self.pos += 1;
            let right = self.label()?;
            cmps.push(Comparison { left, op, right });
            if !self.eat_keyword("and") {
                break;
            }
        }
        Ok(Condition(cmps))
    }

    /// An index name or a member label (identifier or integer).
    fn label(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(_)) => self.ident(),
            Some(Tok::Number(_)) | Some(Tok::Minus) => Ok(self.integer()?.to_string()),
            _ => Err(self.unexpected("an index or member")),
        }
    }

    fn descend(&mut self) -> Result<(), Diagnostic> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("expression is nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, Diagnostic> {
        self.descend()?;
        let mut lhs = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(&Tok::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, Diagnostic> {
        self.descend()?;
        let mut lhs = self.factor()?;
        loop {
            if self.eat(&Tok::Star) {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(&Tok::Slash) {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat_keyword("mod") {
                lhs = Expr::Mod(Box::new(lhs), Box::new(self.factor()?));
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, Diagnostic> {
        self.descend()?;
        let out = if self.eat(&Tok::Minus) {
            if let Some(Tok::Number(v)) = self.peek() {
                let v = *v;
                self.pos += 1;
                Expr::Num(-v)
            } else {
                Expr::Neg(Box::new(self.factor()?))
            }
        } else if self.is_keyword("sum") {
            self.pos += 1;
            self.expect(Tok::LBrace)?;
            let domain = self.index_domain()?;
            self.expect(Tok::RBrace)?;
            let body = self.term()?;
            Expr::Sum { domain, body: Box::new(body) }
        } else {
            self.primary()?
        };
        self.depth -= 1;
        Ok(out)
    }

    fn primary(&mut self) -> Result<Expr, Diagnostic> {
        match self.peek() {
            Some(Tok::Number(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                let mut index = Vec::new();
                if self.eat(&Tok::LBracket) {
                    loop {
                        index.push(self.label()?);
                        if self.eat(&Tok::RBracket) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                Ok(Expr::Ref { name, index })
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}
