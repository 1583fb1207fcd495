use super::ast::*;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;
use std::fmt::Write;

/// Finite decimals print as decimals, everything else as `p/q`.
pub fn fmt_prob(p: &Prob) -> String {
    if p.is_integer() {
        return p.numer().to_string();
    }
    let mut d = p.denom().clone();
    let (mut twos, mut fives) = (0usize, 0usize);
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while d.is_multiple_of(&two) {
        d /= &two;
        twos += 1;
    }
    while d.is_multiple_of(&five) {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", p.numer(), p.denom());
    }
    let digits = twos.max(fives);
    let scaled = p * Prob::from_integer(num_traits::pow(BigInt::from(10), digits));
    let s = scaled.to_integer().to_string();
    let s = format!("{:0>width$}", s, width = digits + 1);
    let (int, frac) = s.split_at(s.len() - digits);
    format!("{int}.{frac}")
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(op, _, _) => op.precedence(),
        Expr::Not(_) => 3,
        Expr::Neg(_) => 7,
        Expr::Int(n) if *n < 0 => 7,
        _ => 8,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let p = prec(e);
    let paren = p < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Int(n) => write!(out, "{n}").unwrap(),
        Expr::Bool(b) => write!(out, "{b}").unwrap(),
        Expr::Var(v) => out.push_str(v),
        Expr::Neg(a) => {
            out.push('-');
            write_expr(out, a, 7);
        }
        Expr::Not(a) => {
            out.push('!');
            write_expr(out, a, 3);
        }
        Expr::Bin(op, a, b) => {
            // Comparisons are non-associative; everything else is left-associative.
            let left_min = if op.is_comparison() { p + 1 } else { p };
            write_expr(out, a, left_min);
            match op {
                BinOp::And | BinOp::Or | BinOp::Add | BinOp::Sub => write!(out, " {} ", op.symbol()),
                _ => write!(out, "{}", op.symbol()),
            }
            .unwrap();
            write_expr(out, b, p + 1);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn emit_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn emit_domain(v: &VarDecl) -> String {
    let set = match &v.restricted {
        None => {
            return match v.ty {
                VarType::Bool => "bool".into(),
                VarType::Int => format!("[{}..{}]", v.lo, v.hi),
            }
        }
        Some(s) => s,
    };
    if v.ty == VarType::Bool {
        let items: Vec<&str> = set.iter().map(|&b| if b == 1 { "true" } else { "false" }).collect();
        return format!("{{{}}}", items.join(", "));
    }
    let mut items = vec![];
    let vals: Vec<i64> = set.iter().copied().collect();
    let mut i = 0;
    while i < vals.len() {
        let mut j = i;
        while j + 1 < vals.len() && vals[j + 1] == vals[j] + 1 {
            j += 1;
        }
        if j == i {
            items.push(vals[i].to_string());
        } else {
            items.push(format!("{}..{}", vals[i], vals[j]));
        }
        i = j + 1;
    }
    format!("{{{}}}", items.join(", "))
}

fn emit_decl(out: &mut String, indent: &str, v: &VarDecl) {
    let init = match v.ty {
        VarType::Bool => (v.init == 1).to_string(),
        VarType::Int => v.init.to_string(),
    };
    write!(out, "{indent}{} : {} init {};", v.name, emit_domain(v), init).unwrap();
    if v.sink {
        out.push_str(" // <!sub-stochastic!>");
    }
    out.push('\n');
}

pub fn emit_command(c: &Command) -> String {
    let mut s = String::new();
    write!(s, "[{}] {} -> ", c.action.as_deref().unwrap_or(""), emit_expr(&c.guard)).unwrap();
    let single = c.branches.len() == 1 && c.branches[0].prob.is_one();
    let branches: Vec<String> = c
        .branches
        .iter()
        .map(|b| {
            let upd = if b.updates.is_empty() {
                "true".to_string()
            } else {
                b.updates
                    .iter()
                    .map(|u| format!("({}'={})", u.var, emit_expr(&u.value)))
                    .collect::<Vec<_>>()
                    .join(" & ")
            };
            if single {
                upd
            } else {
                format!("{} : {}", fmt_prob(&b.prob), upd)
            }
        })
        .collect();
    s.push_str(&branches.join(" + "));
    s.push(';');
    s
}

pub fn emit_model(m: &Model) -> String {
    let mut out = String::from("mdp\n");
    if !m.globals.is_empty() {
        out.push('\n');
        for g in &m.globals {
            emit_decl(&mut out, "global ", g);
        }
    }
    if !m.formulas.is_empty() {
        out.push('\n');
        for (f, e) in &m.formulas {
            writeln!(out, "formula {f} = {};", emit_expr(e)).unwrap();
        }
    }
    for module in &m.modules {
        writeln!(out, "\nmodule {}", module.name).unwrap();
        if !module.actions.is_empty() {
            let acts: Vec<&str> = module.actions.iter().map(|s| s.as_str()).collect();
            writeln!(out, "  actions {};", acts.join(", ")).unwrap();
        }
        for v in &module.vars {
            emit_decl(&mut out, "  ", v);
        }
        if !module.commands.is_empty() {
            out.push('\n');
        }
        for c in &module.commands {
            writeln!(out, "  {}", emit_command(c)).unwrap();
        }
        out.push_str("endmodule\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn probability_formatting() {
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        assert_eq!(fmt_prob(&r(1, 2)), "0.5");
        assert_eq!(fmt_prob(&r(1, 3)), "1/3");
        assert_eq!(fmt_prob(&r(1, 1)), "1");
        assert_eq!(fmt_prob(&r(1, 40)), "0.025");
        assert_eq!(fmt_prob(&r(3, 5)), "0.6");
    }

    #[test]
    fn minimal_precedence() {
        let e = Expr::bin(
            BinOp::Sub,
            Expr::var("a"),
            Expr::bin(BinOp::Sub, Expr::var("b"), Expr::Int(-1)),
        );
        assert_eq!(emit_expr(&e), "a - (b - -1)");
        let g = Expr::Not(Box::new(Expr::bin(BinOp::And, Expr::var("p"), Expr::var("q"))));
        assert_eq!(emit_expr(&g), "!(p & q)");
    }
}
