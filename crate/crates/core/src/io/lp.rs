//! CPLEX-style LP text.
//!
//! Square brackets in variable names are written as parentheses (brackets delimit the
//! quadratic objective block) and mapped back on import. Every variable appears in the
//! `Bounds` section in index order, which fixes the variable order on re-import. Row
//! names are `<tag>_<index>`. Complementarity pairs have no LP syntax; with
//! `allow_lossy` they are written as `\ complementarity a b` comments next to the
//! aggregated product row, and this importer restores them from those comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{LinearExpr, Model, Objective, ObjectiveSense, QuadTerm, Sense, VarId, VarKind};

const KEYWORDS: &[&str] = &[
    "minimize", "minimise", "min", "maximize", "maximise", "max", "subject", "st", "s.t.", "bounds", "bound",
    "binaries", "binary", "bin", "generals", "general", "integers", "end", "free", "inf", "infinity",
];

/// Terms per output line before wrapping.
const TERMS_PER_LINE: usize = 8;

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if (1e-5..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        fmt_num(v)
    }
}

fn lp_name(name: &str) -> Result<String> {
    let bad = || Error::InvalidModel(format!("variable name '{name}' cannot be written in LP format"));
    let first = name.chars().next().ok_or_else(bad)?;
    if !(first.is_ascii_alphabetic() || first == '_') || KEYWORDS.contains(&name.to_ascii_lowercase().as_str()) {
        return Err(bad());
    }
    let ok = name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || "_.[]{}!#$%&;?@'`|~".contains(c));
    if !ok {
        return Err(bad());
    }
    Ok(name.replace('[', "(").replace(']', ")"))
}

fn model_name(lp: &str) -> String {
    lp.replace('(', "[").replace(')', "]")
}

struct ExprWriter<'a> {
    out: &'a mut String,
    count: usize,
}

impl ExprWriter<'_> {
    fn push(&mut self, piece: &str) {
        if self.count > 0 && self.count.is_multiple_of(TERMS_PER_LINE) {
            self.out.push_str("\n   ");
        }
        self.out.push(' ');
        self.out.push_str(piece);
        self.count += 1;
    }

    fn term(&mut self, coeff: f64, name: &str) {
        let sign = if coeff < 0.0 { "-" } else { "+" };
        let a = coeff.abs();
        if a == 1.0 {
            self.push(&format!("{sign} {name}"));
        } else {
            self.push(&format!("{sign} {} {name}", fmt_num(a)));
        }
    }
}

fn write_linear(out: &mut String, expr: &LinearExpr, names: &[String], include_constant: bool) {
    let mut w = ExprWriter { out, count: 0 };
    for (v, c) in &expr.terms {
        w.term(*c, &names[v.0]);
    }
    if include_constant && expr.constant != 0.0 {
        let sign = if expr.constant < 0.0 { "-" } else { "+" };
        w.push(&format!("{sign} {}", fmt_num(expr.constant.abs())));
    }
    if w.count == 0 {
        w.push(&format!("0 {}", names[0]));
    }
}

/// LP text of `model`. Errors with [`Error::LossyExport`] on complementarity pairs
/// unless `allow_lossy` is set.
pub fn export_lp(model: &Model, allow_lossy: bool) -> Result<String> {
    if !model.complementarities.is_empty() && !allow_lossy {
        return Err(Error::LossyExport);
    }
    if model.variables.is_empty() {
        return Err(Error::InvalidModel("cannot export a model without variables".into()));
    }
    let names: Vec<String> = model.variables.iter().map(|v| lp_name(&v.name)).collect::<Result<_>>()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ {} variables, {} rows, {} binaries",
        model.num_vars(),
        model.num_constraints(),
        model.num_binaries()
    );
    for (k, v) in &model.metadata {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidModel(format!("metadata entry '{k}' cannot be written as a comment")));
        }
        let _ = writeln!(out, "\\ meta {k}={v}");
    }
    if !model.complementarities.is_empty() {
        let _ = writeln!(out, "\\ pairs below are complementarity constraints (no LP syntax); aggregated product row:");
        let products: Vec<String> = model
            .complementarities
            .iter()
            .map(|p| format!("{} * {}", names[p.a.0], names[p.b.0]))
            .collect();
        let _ = writeln!(out, "\\ aggregated: {} <= 0", products.join(" + "));
        for p in &model.complementarities {
            let _ = writeln!(out, "\\ complementarity {} {}", names[p.a.0], names[p.b.0]);
        }
    }
    out.push_str(match model.objective.sense {
        ObjectiveSense::Minimize => "Minimize\n obj:",
        ObjectiveSense::Maximize => "Maximize\n obj:",
    });
    write_linear(&mut out, &model.objective.linear, &names, true);
    if !model.objective.quadratic.is_empty() {
        let mut w = ExprWriter { out: &mut out, count: 1 };
        w.push("+ [");
        for q in &model.objective.quadratic {
            // The bracket is halved on import, so coefficients are written doubled.
            let body = if q.i == q.j {
                format!("{} ^ 2", names[q.i.0])
            } else {
                format!("{} * {}", names[q.i.0], names[q.j.0])
            };
            w.term(2.0 * q.coeff, &body);
        }
        w.push("] / 2");
    }
    out.push_str("\nSubject To\n");
    for (r, c) in model.constraints.iter().enumerate() {
        let tag = if c.tag.is_empty() { String::new() } else { lp_name(&c.tag)? };
        let _ = write!(out, " {tag}_{r}:");
        write_linear(&mut out, &LinearExpr { terms: c.expr.terms.clone(), constant: 0.0 }, &names, false);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), fmt_num(c.normalized_rhs()));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables.iter().zip(&names) {
        let line = match (v.lower, v.upper) {
            (l, u) if l == u => format!("{name} = {}", fmt_num(l)),
            (f64::NEG_INFINITY, f64::INFINITY) => format!("{name} free"),
            (l, f64::INFINITY) => format!("{name} >= {}", fmt_num(l)),
            (l, u) => format!("{} <= {name} <= {}", fmt_bound(l), fmt_num(u)),
        };
        let _ = writeln!(out, " {line}");
    }
    let binaries = model.binaries();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let row: Vec<&str> = chunk.iter().map(|v| names[v.0].as_str()).collect();
            let _ = writeln!(out, " {}", row.join(" "));
        }
    }
    out.push_str("End\n");
    Ok(out)
}

pub fn write_lp(model: &Model, path: impl AsRef<Path>, allow_lossy: bool) -> Result<()> {
    super::write(path.as_ref(), &export_lp(model, allow_lossy)?)
}

pub fn read_lp(path: impl AsRef<Path>) -> Result<Model> {
    import_lp(&super::read(path.as_ref())?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

#[derive(Clone, Debug)]
struct Tok {
    text: String,
    line: usize,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number(s: &str) -> Option<f64> {
    let t = s.trim_start_matches('+');
    match t.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ if t.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == '-') => t.parse().ok(),
        _ => None,
    }
}

fn sense_of(s: &str) -> Option<Sense> {
    match s {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

fn is_section(toks: &[Tok], pos: usize) -> Option<(Section, usize, Option<ObjectiveSense>)> {
    let t = toks.get(pos)?.text.to_ascii_lowercase();
    let next = toks.get(pos + 1).map(|t| t.text.to_ascii_lowercase());
    match t.as_str() {
        "minimize" | "minimise" | "min" => Some((Section::Objective, 1, Some(ObjectiveSense::Minimize))),
        "maximize" | "maximise" | "max" => Some((Section::Objective, 1, Some(ObjectiveSense::Maximize))),
        "subject" if next.as_deref() == Some("to") => Some((Section::Constraints, 2, None)),
        "st" | "s.t." => Some((Section::Constraints, 1, None)),
        "bounds" | "bound" => Some((Section::Bounds, 1, None)),
        "binaries" | "binary" | "bin" => Some((Section::Binaries, 1, None)),
        "end" => Some((Section::End, 1, None)),
        _ => None,
    }
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|t| t.text.as_str())
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or(self.toks.last())
            .map_or(1, |t| t.line)
    }

    fn next(&mut self) -> Result<Tok> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| parse_err(self.line(), "unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn at_section(&self) -> bool {
        is_section(&self.toks, self.pos).is_some()
    }

    fn label(&mut self) -> Option<String> {
        let t = self.peek()?;
        if t.len() > 1 && t.ends_with(':') {
            let s = t[..t.len() - 1].to_string();
            self.pos += 1;
            Some(s)
        } else {
            None
        }
    }

    fn name(&mut self, what: &str) -> Result<String> {
        let t = self.next()?;
        let first = t.text.chars().next().unwrap_or(' ');
        if !(first.is_ascii_alphabetic() || first == '_') || number(&t.text).is_some() {
            return Err(parse_err(t.line, format!("expected {what}, found '{}'", t.text)));
        }
        Ok(model_name(&t.text))
    }

    /// `[sign] [coeff]` prefix of a term; returns the signed coefficient and whether an
    /// explicit number was read.
    fn coefficient(&mut self) -> Result<(f64, bool)> {
        let mut sign = 1.0;
        while let Some(s @ ("+" | "-")) = self.peek() {
            if s == "-" {
                sign = -sign;
            }
            self.pos += 1;
        }
        if let Some(v) = self.peek().and_then(number) {
            self.pos += 1;
            return Ok((sign * v, true));
        }
        Ok((sign, false))
    }

    /// Linear terms until a sense token, `[` or a section keyword. Returns terms and the
    /// constant.
    fn linear(&mut self) -> Result<(Vec<(String, f64)>, f64)> {
        let mut terms = Vec::new();
        let mut constant = 0.0;
        loop {
            match self.peek() {
                None => break,
                Some(t) if sense_of(t).is_some() => break,
                _ if self.at_section() => break,
                _ => {}
            }
            let (c, explicit) = self.coefficient()?;
            match self.peek() {
                Some("[") => {
                    if explicit || c < 0.0 {
                        return Err(parse_err(self.line(), "quadratic block must be preceded by '+'"));
                    }
                    break;
                }
                Some(t) if explicit && (sense_of(t).is_some() || t == "+" || t == "-") => constant += c,
                None => constant += c,
                _ if explicit && self.at_section() => constant += c,
                _ => {
                    let n = self.name("variable")?;
                    terms.push((n, c));
                }
            }
        }
        Ok((terms, constant))
    }

    fn quadratic(&mut self) -> Result<Vec<(String, String, f64)>> {
        let open = self.next()?;
        if open.text != "[" {
            return Err(parse_err(open.line, "expected '['"));
        }
        let mut out = Vec::new();
        while self.peek() != Some("]") {
            let (c, _) = self.coefficient()?;
            let a = self.name("variable")?;
            match self.next()?.text.as_str() {
                "^" => {
                    let two = self.next()?;
                    if two.text != "2" {
                        return Err(parse_err(two.line, "only squares are supported"));
                    }
                    out.push((a.clone(), a, c));
                }
                "*" => {
                    let b = self.name("variable")?;
                    out.push((a, b, c));
                }
                other => return Err(parse_err(self.line(), format!("expected '^' or '*', found '{other}'"))),
            }
        }
        self.pos += 1;
        let slash = self.next()?;
        let two = self.next()?;
        if slash.text != "/" || two.text != "2" {
            return Err(parse_err(slash.line, "quadratic block must end with '] / 2'"));
        }
        Ok(out.into_iter().map(|(a, b, c)| (a, b, c / 2.0)).collect())
    }
}

struct RawRow {
    tag: String,
    terms: Vec<(String, f64)>,
    sense: Sense,
    rhs: f64,
}

/// Parses LP text written by [`export_lp`] (and the same subset of the CPLEX format
/// written by hand).
pub fn import_lp(text: &str) -> Result<Model> {
    let mut toks = Vec::new();
    let mut metadata = Vec::new();
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let (body, comment) = match raw.find('\\') {
            Some(k) => (&raw[..k], Some(raw[k + 1..].trim())),
            None => (raw, None),
        };
        if let Some(c) = comment {
            if let Some(kv) = c.strip_prefix("meta ") {
                let (k, v) = kv.split_once('=').ok_or_else(|| parse_err(line, "metadata comment needs key=value"))?;
                metadata.push((k.to_string(), v.to_string()));
            } else if let Some(p) = c.strip_prefix("complementarity ") {
                let names: Vec<&str> = p.split_whitespace().collect();
                if names.len() != 2 {
                    return Err(parse_err(line, "complementarity comment needs two names"));
                }
                pairs.push((model_name(names[0]), model_name(names[1]), line));
            }
        }
        toks.extend(body.split_whitespace().map(|t| Tok {
            text: t.to_string(),
            line,
        }));
    }
    let mut p = Parser { toks, pos: 0 };
    let mut sense = None;
    let mut obj_terms = Vec::new();
    let mut obj_constant = 0.0;
    let mut quad = Vec::new();
    let mut rows: Vec<RawRow> = Vec::new();
    let mut bounds: Vec<(String, Option<f64>, Option<f64>, usize)> = Vec::new();
    let mut binaries = Vec::new();
    let mut section = None;
    while p.pos < p.toks.len() {
        if let Some(t) = p.peek() {
            if ["generals", "general", "integers", "semi-continuous"].contains(&t.to_ascii_lowercase().as_str()) {
                return Err(parse_err(p.line(), format!("'{t}' sections are not supported")));
            }
        }
        if let Some((s, width, os)) = is_section(&p.toks, p.pos) {
            p.pos += width;
            section = Some(s);
            if let Some(os) = os {
                if sense.is_some() {
                    return Err(parse_err(p.line(), "more than one objective section"));
                }
                sense = Some(os);
            }
            if s == Section::End {
                break;
            }
            continue;
        }
        match section {
            None => return Err(parse_err(p.line(), "expected an objective section")),
            Some(Section::Objective) => {
                p.label();
                let (t, c) = p.linear()?;
                obj_terms.extend(t);
                obj_constant += c;
                while p.peek() == Some("[") {
                    quad.extend(p.quadratic()?);
                    let (t, c) = p.linear()?;
                    obj_terms.extend(t);
                    obj_constant += c;
                }
                if !p.at_section() && p.pos < p.toks.len() {
                    return Err(parse_err(p.line(), format!("unexpected '{}' in objective", p.peek().unwrap_or(""))));
                }
            }
            Some(Section::Constraints) => {
                let line = p.line();
                let label = p.label().unwrap_or_default();
                let tag = match label.rsplit_once('_') {
                    Some((t, idx)) if idx.parse::<usize>().is_ok() => model_name(t),
                    _ => model_name(&label),
                };
                let (terms, constant) = p.linear()?;
                let s = p.next()?;
                let sense = sense_of(&s.text).ok_or_else(|| parse_err(s.line, format!("expected a sense, found '{}'", s.text)))?;
                let (rhs, explicit) = p.coefficient()?;
                if !explicit || !rhs.is_finite() {
                    return Err(parse_err(line, "constraint needs a finite right-hand side"));
                }
                rows.push(RawRow {
                    tag,
                    terms,
                    sense,
                    rhs: rhs - constant,
                });
            }
            Some(Section::Bounds) => {
                let line = p.line();
                let first = p.next()?;
                if let Some(lo) = number(&first.text) {
                    let op = p.next()?;
                    let name = p.name("variable")?;
                    let lo = match sense_of(&op.text) {
                        Some(Sense::Le) => lo,
                        _ => return Err(parse_err(line, "expected 'lower <= name'")),
                    };
                    let mut hi = None;
                    if p.peek().and_then(sense_of) == Some(Sense::Le) {
                        p.pos += 1;
                        let (v, explicit) = p.coefficient()?;
                        if !explicit {
                            return Err(parse_err(line, "expected an upper bound"));
                        }
                        hi = Some(v);
                    }
                    bounds.push((name, Some(lo), hi, line));
                } else {
                    let name = model_name(&first.text);
                    let op = p.next()?;
                    if op.text.eq_ignore_ascii_case("free") {
                        bounds.push((name, Some(f64::NEG_INFINITY), Some(f64::INFINITY), line));
                        continue;
                    }
                    let (v, explicit) = p.coefficient()?;
                    if !explicit {
                        return Err(parse_err(line, "expected a bound value"));
                    }
                    match sense_of(&op.text) {
                        Some(Sense::Le) => bounds.push((name, None, Some(v), line)),
                        Some(Sense::Ge) => bounds.push((name, Some(v), None, line)),
                        Some(Sense::Eq) => bounds.push((name, Some(v), Some(v), line)),
                        None => return Err(parse_err(line, format!("unexpected '{}' in bounds", op.text))),
                    }
                }
            }
            Some(Section::Binaries) => {
                let n = p.name("binary variable")?;
                binaries.push(n);
            }
            Some(Section::End) => unreachable!(),
        }
    }
    let sense = sense.ok_or_else(|| parse_err(1, "missing objective section"))?;

    // Variable order: the Bounds section first, then first appearance elsewhere.
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut see = |n: &str| {
        if !index.contains_key(n) {
            index.insert(n.to_string(), order.len());
            order.push(n.to_string());
        }
    };
    bounds.iter().for_each(|b| see(&b.0));
    obj_terms.iter().for_each(|t| see(&t.0));
    quad.iter().for_each(|q| {
        see(&q.0);
        see(&q.1)
    });
    rows.iter().flat_map(|r| &r.terms).for_each(|t| see(&t.0));
    binaries.iter().for_each(|b| see(b));
    let mut lower = vec![0.0; order.len()];
    let mut upper = vec![f64::INFINITY; order.len()];
    let mut binary = vec![false; order.len()];
    for b in &binaries {
        let k = index[b];
        binary[k] = true;
        upper[k] = 1.0;
    }
    for (name, lo, hi, _) in &bounds {
        let k = index[name];
        if let Some(lo) = lo {
            lower[k] = *lo;
        }
        if let Some(hi) = hi {
            upper[k] = *hi;
        }
    }
    let mut model = Model::new();
    for (k, name) in order.iter().enumerate() {
        let kind = if binary[k] { VarKind::Binary } else { VarKind::Continuous };
        model.add_variable(name.clone(), kind, lower[k], upper[k])?;
    }
    let id = |n: &str| VarId(index[n]);
    for r in rows {
        let expr = LinearExpr::from_terms(r.terms.iter().map(|(n, c)| (id(n), *c)));
        model.add_constraint(expr, r.sense, r.rhs, r.tag)?;
    }
    let lin = LinearExpr::from_terms(obj_terms.iter().map(|(n, c)| (id(n), *c))).with_constant(obj_constant);
    let quad: Vec<QuadTerm> = quad
        .iter()
        .map(|(a, b, c)| QuadTerm {
            i: id(a),
            j: id(b),
            coeff: *c,
        })
        .collect();
    let objective = match sense {
        ObjectiveSense::Minimize => Objective::minimize(lin),
        ObjectiveSense::Maximize => Objective::maximize(lin),
    };
    model.set_objective(objective.with_quadratic(quad))?;
    for (a, b, line) in pairs {
        let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
            return Err(parse_err(line, format!("complementarity names unknown variable in '{a} {b}'")));
        };
        model.add_complementarity(VarId(ia), VarId(ib))?;
    }
    model.metadata.extend(metadata);
    Ok(model)
}
