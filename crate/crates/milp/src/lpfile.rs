//! CPLEX LP text format: export, a parser for the subset we emit, and
//! import of `name value` solution files.

use crate::model::{LinExpr, Milp, Rational, Relation, VarKind};
use crate::MilpError;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::HashSet;
use std::fmt::Write;

pub fn export_lp(milp: &Milp) -> String {
    let mut out = String::new();
    out.push_str("Minimize\n");
    out.push_str(" obj:");
    if milp.objective.is_empty() {
        if let Some(v) = milp.vars.first() {
            let _ = write!(out, " 0 {}", v.name);
        }
    } else {
        write_expr(&mut out, milp, &milp.objective);
    }
    out.push('\n');
    out.push_str("Subject To\n");
    for c in &milp.constraints {
        let _ = write!(out, " {}:", c.name);
        if c.expr.is_empty() {
            if let Some(v) = milp.vars.first() {
                let _ = write!(out, " 0 {}", v.name);
            }
        } else {
            write_expr(&mut out, milp, &c.expr);
        }
        let _ = writeln!(out, " {} {}", c.rel, fmt_num(&c.rhs));
    }
    let mut used: HashSet<usize> = HashSet::new();
    for (v, _) in &milp.objective.terms {
        used.insert(v.0);
    }
    for c in &milp.constraints {
        for (v, _) in &c.expr.terms {
            used.insert(v.0);
        }
    }
    let mut bounds = String::new();
    for (i, v) in milp.vars.iter().enumerate() {
        if v.kind == VarKind::Binary {
            continue;
        }
        let zero = Rational::zero();
        let default = v.lower.as_ref() == Some(&zero) && v.upper.is_none();
        if default && used.contains(&i) {
            continue;
        }
        let _ = match (&v.lower, &v.upper) {
            (Some(l), Some(u)) if l == u => writeln!(bounds, " {} = {}", v.name, fmt_num(l)),
            (Some(l), Some(u)) => {
                writeln!(bounds, " {} <= {} <= {}", fmt_num(l), v.name, fmt_num(u))
            }
            (Some(l), None) => writeln!(bounds, " {} >= {}", v.name, fmt_num(l)),
            (None, Some(u)) => writeln!(bounds, " -inf <= {} <= {}", v.name, fmt_num(u)),
            (None, None) => writeln!(bounds, " {} free", v.name),
        };
    }
    if !bounds.is_empty() {
        out.push_str("Bounds\n");
        out.push_str(&bounds);
    }
    for (title, kind) in [("Binaries", VarKind::Binary), ("Generals", VarKind::Integer)] {
        let names: Vec<&str> = milp
            .vars
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.name.as_str())
            .collect();
        if names.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        for chunk in names.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

fn write_expr(out: &mut String, milp: &Milp, e: &LinExpr) {
    for (k, (v, c)) in e.terms.iter().enumerate() {
        let name = &milp.vars[v.0].name;
        let neg = c.is_negative();
        let mag = c.abs();
        let sign = match (k, neg) {
            (0, false) => "",
            (0, true) => "-",
            (_, false) => "+ ",
            (_, true) => "- ",
        };
        let sep = if k == 0 { " " } else { " " };
        if mag.is_one() {
            let _ = write!(out, "{sep}{sign}{name}");
        } else {
            let _ = write!(out, "{sep}{sign}{} {name}", fmt_num(&mag));
        }
    }
}

/// Integers verbatim, everything else as the shortest round-tripping `f64`.
pub fn fmt_num(r: &Rational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    let f = r.to_f64().unwrap_or(f64::NAN);
    format!("{f:?}")
}

/// Exact rational value of a decimal literal such as `-1.25e-3`.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mant, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = Rational::from_integer(num);
    if scale >= 0 {
        r *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    Some(match l.as_str() {
        "minimize" | "minimum" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." | "st." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "generals" | "general" | "gen" => Section::Generals,
        "end" => Section::End,
        _ => return None,
    })
}

/// Parses the LP subset produced by [`export_lp`] (one statement per line).
pub fn parse_lp(text: &str) -> Result<Milp, MilpError> {
    let mut milp = Milp::new();
    let mut section = Section::None;
    let mut binaries: Vec<String> = Vec::new();
    let mut generals: Vec<String> = Vec::new();
    let mut bounds: Vec<(usize, String)> = Vec::new();
    let mut objective: Option<(usize, String)> = None;
    let mut rows: Vec<(usize, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = match raw.find('\\') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_of(line) {
            if s == Section::Objective && section != Section::None {
                return Err(MilpError::Parse {
                    line: ln,
                    msg: "objective section must come first".into(),
                });
            }
            section = s;
            continue;
        }
        match section {
            Section::None => {
                return Err(MilpError::Parse {
                    line: ln,
                    msg: "expected 'Minimize'".into(),
                })
            }
            Section::Objective => objective = Some((ln, line.to_string())),
            Section::Constraints => rows.push((ln, line.to_string())),
            Section::Bounds => bounds.push((ln, line.to_string())),
            Section::Binaries => binaries.extend(line.split_whitespace().map(String::from)),
            Section::Generals => generals.extend(line.split_whitespace().map(String::from)),
            Section::End => {
                return Err(MilpError::Parse {
                    line: ln,
                    msg: "content after 'End'".into(),
                })
            }
        }
    }
    if section != Section::End {
        return Err(MilpError::Parse {
            line: text.lines().count(),
            msg: "missing 'End'".into(),
        });
    }
    // variables are declared in order of first appearance; kinds are applied afterwards
    let bin_set: HashSet<&str> = binaries.iter().map(|s| s.as_str()).collect();
    let gen_set: HashSet<&str> = generals.iter().map(|s| s.as_str()).collect();
    let mut declare = |milp: &mut Milp, name: &str, ln: usize| -> Result<crate::VarId, MilpError> {
        if let Some(v) = milp.var_by_name(name) {
            return Ok(v);
        }
        let kind = if bin_set.contains(name) {
            VarKind::Binary
        } else if gen_set.contains(name) {
            VarKind::Integer
        } else {
            VarKind::Continuous
        };
        milp.add_var(name, kind, Some(Rational::zero()), None)
            .map_err(|e| MilpError::Parse {
                line: ln,
                msg: e.to_string(),
            })
    };
    if let Some((ln, line)) = objective {
        let body = strip_label(&line).1;
        let terms = parse_terms(body, ln)?;
        let mut e = LinExpr::new();
        for (c, name) in terms {
            let v = declare(&mut milp, &name, ln)?;
            e.add(v, c);
        }
        milp.set_objective(e);
    }
    for (ln, line) in rows {
        let (name, body) = strip_label(&line);
        let (lhs, rel, rhs) = split_relation(body).ok_or(MilpError::Parse {
            line: ln,
            msg: "missing relation".into(),
        })?;
        let rhs = parse_decimal(rhs).ok_or(MilpError::Parse {
            line: ln,
            msg: format!("bad right-hand side '{}'", rhs.trim()),
        })?;
        let mut e = LinExpr::new();
        for (c, vname) in parse_terms(lhs, ln)? {
            let v = declare(&mut milp, &vname, ln)?;
            e.add(v, c);
        }
        milp.add_constraint(name.unwrap_or(""), e, rel, rhs)
            .map_err(|e| MilpError::Parse {
                line: ln,
                msg: e.to_string(),
            })?;
    }
    for (ln, line) in bounds {
        apply_bound(&mut milp, &line, ln, &mut declare)?;
    }
    for name in binaries.iter().chain(generals.iter()) {
        declare(&mut milp, name, 0)?;
    }
    Ok(milp)
}

fn strip_label(line: &str) -> (Option<&str>, &str) {
    match line.find(':') {
        Some(i) => (Some(line[..i].trim()), &line[i + 1..]),
        None => (None, line),
    }
}

fn split_relation(s: &str) -> Option<(&str, Relation, &str)> {
    for (tok, rel) in [
        ("<=", Relation::Le),
        ("=<", Relation::Le),
        (">=", Relation::Ge),
        ("=>", Relation::Ge),
        ("<", Relation::Le),
        (">", Relation::Ge),
        ("=", Relation::Eq),
    ] {
        if let Some(i) = s.find(tok) {
            return Some((&s[..i], rel, &s[i + tok.len()..]));
        }
    }
    None
}

fn parse_terms(s: &str, ln: usize) -> Result<Vec<(Rational, String)>, MilpError> {
    let mut out = Vec::new();
    let mut sign = Rational::one();
    let mut coef: Option<Rational> = None;
    // split signs off as separate tokens
    let spaced = s.replace('+', " + ").replace('-', " - ");
    let mut toks = spaced.split_whitespace().peekable();
    while let Some(t) = toks.next() {
        match t {
            "+" => {}
            "-" => sign = -sign,
            _ => {
                // exponent signs were split apart: re-join "1e" "-" "5"
                let mut tok = t.to_string();
                if (tok.ends_with('e') || tok.ends_with('E'))
                    && tok[..tok.len() - 1].chars().all(|c| c.is_ascii_digit() || c == '.')
                    && !tok[..tok.len() - 1].is_empty()
                {
                    if let Some(&next) = toks.peek() {
                        if next == "-" || next == "+" {
                            tok.push_str(next);
                            toks.next();
                            if let Some(n) = toks.next() {
                                tok.push_str(n);
                            }
                        }
                    }
                }
                if let Some(num) = parse_decimal(&tok) {
                    coef = Some(coef.unwrap_or_else(Rational::one) * num);
                } else {
                    let c = coef.take().unwrap_or_else(Rational::one) * &sign;
                    if !crate::model::is_valid_name(&tok) {
                        return Err(MilpError::Parse {
                            line: ln,
                            msg: format!("bad variable name '{tok}'"),
                        });
                    }
                    out.push((c, tok));
                    sign = Rational::one();
                }
            }
        }
    }
    if let Some(c) = coef {
        if !c.is_zero() || !out.is_empty() {
            return Err(MilpError::Parse {
                line: ln,
                msg: "dangling constant in expression".into(),
            });
        }
    }
    Ok(out)
}

fn parse_bound_num(s: &str) -> Option<Option<Rational>> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "-inf" | "-infinity" | "+inf" | "+infinity" | "inf" | "infinity" => Some(None),
        _ => parse_decimal(&t).map(Some),
    }
}

fn apply_bound(
    milp: &mut Milp,
    line: &str,
    ln: usize,
    declare: &mut impl FnMut(&mut Milp, &str, usize) -> Result<crate::VarId, MilpError>,
) -> Result<(), MilpError> {
    let err = |msg: &str| MilpError::Parse {
        line: ln,
        msg: msg.to_string(),
    };
    let t: Vec<&str> = line.split_whitespace().collect();
    let set = |milp: &mut Milp, v: crate::VarId, lo: Option<Option<Rational>>, hi: Option<Option<Rational>>| {
        let var = &mut milp.vars[v.0];
        if let Some(l) = lo {
            var.lower = l;
        }
        if let Some(h) = hi {
            var.upper = h;
        }
    };
    match t.as_slice() {
        [name, free] if free.eq_ignore_ascii_case("free") => {
            let v = declare(milp, name, ln)?;
            set(milp, v, Some(None), Some(None));
        }
        [lo, "<=", name, "<=", hi] => {
            let v = declare(milp, name, ln)?;
            let lo = parse_bound_num(lo).ok_or_else(|| err("bad lower bound"))?;
            let hi = parse_bound_num(hi).ok_or_else(|| err("bad upper bound"))?;
            set(milp, v, Some(lo), Some(hi));
        }
        [name, ">=", lo] | [lo, "<=", name] if parse_bound_num(lo).is_some() => {
            let v = declare(milp, name, ln)?;
            set(milp, v, Some(parse_bound_num(lo).unwrap()), None);
        }
        [name, "<=", hi] | [hi, ">=", name] if parse_bound_num(hi).is_some() => {
            let v = declare(milp, name, ln)?;
            set(milp, v, None, Some(parse_bound_num(hi).unwrap()));
        }
        [name, "=", val] => {
            let v = declare(milp, name, ln)?;
            let val = parse_bound_num(val).ok_or_else(|| err("bad fixed value"))?;
            set(milp, v, Some(val.clone()), Some(val));
        }
        _ => return Err(err("unrecognised bound")),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportedSolution {
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Reads `name value` (or `name=value`) lines; `#` starts a comment line.
pub fn import_solution(text: &str, milp: &Milp) -> Result<ImportedSolution, MilpError> {
    let mut values: Vec<Option<f64>> = vec![None; milp.num_vars()];
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let normalized = line.replace('=', " ");
        let parts: Vec<&str> = normalized.split_whitespace().collect();
        let [name, val] = parts.as_slice() else {
            return Err(MilpError::Parse {
                line: ln,
                msg: format!("expected 'name value', got '{line}'"),
            });
        };
        let v: f64 = val.parse().map_err(|_| MilpError::Parse {
            line: ln,
            msg: format!("bad value '{val}'"),
        })?;
        let id = milp
            .var_by_name(name)
            .ok_or_else(|| MilpError::UnknownVariable(name.to_string()))?;
        values[id.0] = Some(v);
    }
    let mut warnings = Vec::new();
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.unwrap_or_else(|| {
                warnings.push(format!("{} missing, defaulting to 0", milp.vars[i].name));
                0.0
            })
        })
        .collect();
    Ok(ImportedSolution { values, warnings })
}
