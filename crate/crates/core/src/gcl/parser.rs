use super::ast::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GclError {
    #[error("{pos}: expected {expected}, found {found}")]
    Syntax {
        pos: Pos,
        expected: String,
        found: String,
    },
    #[error("{pos}: undeclared variable `{name}`")]
    Undeclared { pos: Pos, name: String },
    #[error("duplicate {kind} name `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("{pos}: probabilities sum to {sum} ≠ 1")]
    ProbSum { pos: Pos, sum: String },
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
    #[error("composition: {0}")]
    Compose(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    Annot(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(s) => write!(f, "`{s}`"),
            Tok::Annot(s) => write!(f, "annotation `{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "->", "..", "<=", ">=", "!=", "[", "]", "(", ")", "{", "}", ":", ";", ",", "+", "-", "*",
    "/", "&", "|", "!", "=", "<", ">", "'",
];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, GclError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            let start = i;
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            let comment: String = chars[start..i].iter().collect();
            if let (Some(a), Some(b)) = (comment.find("<!"), comment.find("!>")) {
                if a + 2 <= b {
                    out.push((Tok::Annot(comment[a + 2..b].trim().to_string()), pos));
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), pos));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = SYMBOLS.iter().find(|s| rest.starts_with(**s)).ok_or_else(|| {
                GclError::Syntax {
                    pos,
                    expected: "a token".into(),
                    found: format!("`{c}`"),
                }
            })?;
            for _ in 0..sym.len() {
                bump!();
            }
            out.push((Tok::Sym(sym), pos));
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "mdp", "module", "endmodule", "init", "bool", "true", "false", "global", "actions", "formula",
];

pub fn parse_decimal_prob(s: &str) -> Option<Prob> {
    let (int, frac) = match s.split_once('.') {
        Some((a, b)) => (a, b),
        None => (s, ""),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(digits, den))
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    uses: Vec<(String, Pos)>,
    cmd_pos: HashMap<(usize, usize), Pos>,
    decl_pos: HashMap<String, Pos>,
}

type PResult<T> = Result<T, GclError>;

impl Parser {
    fn skip_annots(&mut self) {
        while let Tok::Annot(_) = self.toks[self.i].0 {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> &Tok {
        self.skip_annots();
        &self.toks[self.i].0
    }

    fn peek2(&mut self) -> &Tok {
        self.skip_annots();
        let mut j = self.i + 1;
        while let Tok::Annot(_) = self.toks[j].0 {
            j += 1;
        }
        &self.toks[j.min(self.toks.len() - 1)].0
    }

    fn pos(&mut self) -> Pos {
        self.skip_annots();
        self.toks[self.i].1
    }

    fn next(&mut self) -> Tok {
        self.skip_annots();
        let t = self.toks[self.i].0.clone();
        if t != Tok::Eof {
            self.i += 1;
        }
        t
    }

    fn err<T>(&mut self, expected: &str) -> PResult<T> {
        let pos = self.pos();
        let found = self.peek().to_string();
        Err(GclError::Syntax {
            pos,
            expected: expected.to_string(),
            found,
        })
    }

    fn is_sym(&mut self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&mut self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.next();
            Ok(())
        } else {
            self.err(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(s)
            }
            _ => self.err("identifier"),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat_sym("-");
        match self.peek().clone() {
            Tok::Num(s) if !s.contains('.') => {
                let pos = self.pos();
                self.next();
                let v: i64 = s.parse().map_err(|_| GclError::Invalid {
                    pos,
                    msg: format!("integer `{s}` out of range"),
                })?;
                Ok(if neg { -v } else { v })
            }
            _ => self.err("integer"),
        }
    }

    fn model(&mut self) -> PResult<Model> {
        let mut m = Model::default();
        if self.is_kw("mdp") {
            self.next();
        }
        loop {
            if self.is_kw("global") {
                self.next();
                let d = self.var_decl()?;
                m.globals.push(d);
            } else if self.is_kw("formula") {
                self.next();
                let pos = self.pos();
                let name = self.ident()?;
                self.decl_pos.insert(name.clone(), pos);
                self.expect_sym("=")?;
                let e = self.expr()?;
                self.expect_sym(";")?;
                m.formulas.push((name, e));
            } else if self.is_kw("module") {
                let idx = m.modules.len();
                let module = self.module(idx)?;
                m.modules.push(module);
            } else if *self.peek() == Tok::Eof {
                return Ok(m);
            } else {
                return self.err("`module`, `global`, `formula` or end of input");
            }
        }
    }

    fn module(&mut self, idx: usize) -> PResult<Module> {
        self.expect_kw("module")?;
        let name = self.ident()?;
        let mut module = Module {
            name,
            vars: vec![],
            actions: BTreeSet::new(),
            commands: vec![],
        };
        loop {
            if self.is_kw("endmodule") {
                self.next();
                return Ok(module);
            } else if self.is_kw("actions") {
                self.next();
                loop {
                    let a = self.ident()?;
                    module.actions.insert(a);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")?;
            } else if self.is_sym("[") {
                let pos = self.pos();
                self.cmd_pos.insert((idx, module.commands.len()), pos);
                let c = self.command()?;
                module.commands.push(c);
            } else if matches!(self.peek(), Tok::Ident(_)) && *self.peek2() == Tok::Sym(":") {
                let d = self.var_decl()?;
                module.vars.push(d);
            } else {
                return self.err("declaration, command or `endmodule`");
            }
        }
    }

    fn bool_lit(&mut self) -> Option<bool> {
        if self.is_kw("true") {
            self.next();
            Some(true)
        } else if self.is_kw("false") {
            self.next();
            Some(false)
        } else {
            None
        }
    }

    fn var_decl(&mut self) -> PResult<VarDecl> {
        let pos = self.pos();
        let name = self.ident()?;
        self.decl_pos.insert(name.clone(), pos);
        self.expect_sym(":")?;
        let mut d = if self.is_kw("bool") {
            self.next();
            VarDecl::boolean(&name, false)
        } else if self.eat_sym("[") {
            let lo = self.int()?;
            self.expect_sym("..")?;
            let hi = self.int()?;
            self.expect_sym("]")?;
            if lo > hi {
                return Err(GclError::Invalid {
                    pos,
                    msg: format!("empty domain [{lo}..{hi}] for `{name}`"),
                });
            }
            VarDecl::int(&name, lo, hi, lo)
        } else if self.eat_sym("{") {
            let mut set = BTreeSet::new();
            let mut is_bool = None;
            loop {
                if let Some(b) = self.bool_lit() {
                    if is_bool == Some(false) {
                        return self.err("integer");
                    }
                    is_bool = Some(true);
                    set.insert(b as i64);
                } else {
                    if is_bool == Some(true) {
                        return self.err("`true` or `false`");
                    }
                    is_bool = Some(false);
                    let a = self.int()?;
                    let b = if self.eat_sym("..") { self.int()? } else { a };
                    set.extend(a..=b);
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym("}")?;
            if set.is_empty() {
                return Err(GclError::Invalid {
                    pos,
                    msg: format!("empty domain for `{name}`"),
                });
            }
            let mut d = if is_bool == Some(true) {
                VarDecl::boolean(&name, false)
            } else {
                VarDecl::int(&name, *set.first().unwrap(), *set.last().unwrap(), 0)
            };
            d.init = *set.first().unwrap();
            d.restricted = Some(set);
            d
        } else {
            return self.err("`bool`, `[` or `{`");
        };
        if self.is_kw("init") {
            self.next();
            d.init = match self.bool_lit() {
                Some(b) if d.ty == VarType::Bool => b as i64,
                Some(_) => return self.err("integer"),
                None if d.ty == VarType::Int => self.int()?,
                None => return self.err("`true` or `false`"),
            };
        }
        self.expect_sym(";")?;
        if let Tok::Annot(a) = &self.toks[self.i].0 {
            if a == "sub-stochastic" && self.toks[self.i].1.line == pos.line {
                d.sink = true;
                self.i += 1;
            }
        }
        Ok(d)
    }

    fn command(&mut self) -> PResult<Command> {
        self.expect_sym("[")?;
        let action = if self.is_sym("]") { None } else { Some(self.ident()?) };
        self.expect_sym("]")?;
        let guard = self.expr()?;
        self.expect_sym("->")?;
        let mut branches = vec![];
        loop {
            let prob = if matches!(self.peek(), Tok::Num(_)) {
                let p = self.prob()?;
                self.expect_sym(":")?;
                p
            } else {
                Prob::one()
            };
            let updates = self.updates()?;
            branches.push(UpdateBranch { prob, updates });
            if !self.eat_sym("+") {
                break;
            }
        }
        self.expect_sym(";")?;
        Ok(Command {
            action,
            guard,
            branches,
        })
    }

    fn prob(&mut self) -> PResult<Prob> {
        let pos = self.pos();
        let num = match self.next() {
            Tok::Num(s) => s,
            _ => unreachable!(),
        };
        let mut p = parse_decimal_prob(&num).unwrap();
        if self.eat_sym("/") {
            match self.next() {
                Tok::Num(s) => {
                    let d = parse_decimal_prob(&s).unwrap();
                    if d.is_zero() {
                        return Err(GclError::Invalid {
                            pos,
                            msg: "division by zero in probability".into(),
                        });
                    }
                    p /= d;
                }
                _ => return self.err("number"),
            }
        }
        Ok(p)
    }

    fn updates(&mut self) -> PResult<Vec<Update>> {
        if self.is_kw("true") {
            self.next();
            return Ok(vec![]);
        }
        let mut ups = vec![];
        loop {
            self.expect_sym("(")?;
            let pos = self.pos();
            let var = self.ident()?;
            self.uses.push((var.clone(), pos));
            self.expect_sym("'")?;
            self.expect_sym("=")?;
            let value = self.expr()?;
            self.expect_sym(")")?;
            ups.push(Update { var, value });
            if !self.eat_sym("&") {
                return Ok(ups);
            }
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.and()?;
        while self.eat_sym("|") {
            e = Expr::bin(BinOp::Or, e, self.and()?);
        }
        Ok(e)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut e = self.not()?;
        while self.eat_sym("&") {
            e = Expr::bin(BinOp::And, e, self.not()?);
        }
        Ok(e)
    }

    fn not(&mut self) -> PResult<Expr> {
        if self.eat_sym("!") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> PResult<Expr> {
        let e = self.add()?;
        let op = match self.peek() {
            Tok::Sym("=") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            _ => return Ok(e),
        };
        self.next();
        Ok(Expr::bin(op, e, self.add()?))
    }

    fn add(&mut self) -> PResult<Expr> {
        let mut e = self.mul()?;
        loop {
            let op = if self.is_sym("+") {
                BinOp::Add
            } else if self.is_sym("-") {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            self.next();
            e = Expr::bin(op, e, self.mul()?);
        }
    }

    fn mul(&mut self) -> PResult<Expr> {
        let mut e = self.unary()?;
        while self.eat_sym("*") {
            e = Expr::bin(BinOp::Mul, e, self.unary()?);
        }
        Ok(e)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                Expr::Int(n) => Expr::Int(-n),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(s) if !s.contains('.') => {
                self.next();
                s.parse().map(Expr::Int).map_err(|_| GclError::Invalid {
                    pos,
                    msg: format!("integer `{s}` out of range"),
                })
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.next();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(_) => {
                let v = self.ident()?;
                self.uses.push((v.clone(), pos));
                Ok(Expr::Var(v))
            }
            Tok::Sym("(") => {
                self.next();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            _ => self.err("expression"),
        }
    }
}

fn parser(text: &str) -> PResult<Parser> {
    Ok(Parser {
        toks: lex(text)?,
        i: 0,
        uses: vec![],
        cmd_pos: HashMap::new(),
        decl_pos: HashMap::new(),
    })
}

pub fn parse_model(text: &str) -> Result<Model, GclError> {
    let mut p = parser(text)?;
    let m = p.model()?;
    let mut declared: HashSet<&str> = m.all_vars().iter().map(|v| v.name.as_str()).collect();
    declared.extend(m.formulas.iter().map(|(n, _)| n.as_str()));
    if let Some((name, pos)) = p.uses.iter().find(|(n, _)| !declared.contains(n.as_str())) {
        return Err(GclError::Undeclared {
            pos: *pos,
            name: name.clone(),
        });
    }
    validate_with(&m, &p.cmd_pos, &p.decl_pos)?;
    Ok(m)
}

/// Parses a standalone expression (used for property targets).
pub fn parse_expr(text: &str) -> Result<Expr, GclError> {
    let mut p = parser(text)?;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.err("end of expression");
    }
    Ok(e)
}

pub fn validate(m: &Model) -> Result<(), GclError> {
    validate_with(m, &HashMap::new(), &HashMap::new())
}

pub(crate) struct TypeEnv<'a> {
    pub vars: HashMap<&'a str, VarType>,
    pub formulas: HashMap<&'a str, &'a Expr>,
}

impl<'a> TypeEnv<'a> {
    pub fn new(m: &'a Model) -> Self {
        TypeEnv {
            vars: m.all_vars().into_iter().map(|v| (v.name.as_str(), v.ty)).collect(),
            formulas: m.formulas.iter().map(|(n, e)| (n.as_str(), e)).collect(),
        }
    }

    pub fn type_of(&self, e: &Expr) -> Result<VarType, String> {
        use VarType::*;
        let want = |e: &Expr, t: VarType| -> Result<(), String> {
            let got = self.type_of(e)?;
            if got == t {
                Ok(())
            } else {
                Err(format!("expected {t:?} expression, found {got:?} in `{}`", super::emit::emit_expr(e)))
            }
        };
        match e {
            Expr::Int(_) => Ok(Int),
            Expr::Bool(_) => Ok(Bool),
            Expr::Var(v) => match (self.vars.get(v.as_str()), self.formulas.get(v.as_str())) {
                (Some(t), _) => Ok(*t),
                (None, Some(f)) => self.type_of(f),
                (None, None) => Err(format!("undeclared variable `{v}`")),
            },
            Expr::Neg(a) => want(a, Int).map(|_| Int),
            Expr::Not(a) => want(a, Bool).map(|_| Bool),
            Expr::Bin(op, a, b) => match op {
                BinOp::And | BinOp::Or => {
                    want(a, Bool)?;
                    want(b, Bool)?;
                    Ok(Bool)
                }
                BinOp::Eq | BinOp::Ne => {
                    let t = self.type_of(a)?;
                    want(b, t)?;
                    Ok(Bool)
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    want(a, Int)?;
                    want(b, Int)?;
                    Ok(Bool)
                }
                BinOp::Add | BinOp::Sub => {
                    want(a, Int)?;
                    want(b, Int)?;
                    Ok(Int)
                }
                BinOp::Mul => {
                    want(a, Int)?;
                    want(b, Int)?;
                    if !self.is_const(a) && !self.is_const(b) {
                        return Err(format!(
                            "non-linear product `{}`",
                            super::emit::emit_expr(e)
                        ));
                    }
                    Ok(Int)
                }
            },
        }
    }

    fn is_const(&self, e: &Expr) -> bool {
        let mut vs = BTreeSet::new();
        e.vars(&mut vs);
        vs.iter().all(|v| {
            !self.vars.contains_key(v.as_str())
                && self.formulas.get(v.as_str()).map_or(false, |f| self.is_const(f))
        })
    }
}

fn validate_with(
    m: &Model,
    cmd_pos: &HashMap<(usize, usize), Pos>,
    decl_pos: &HashMap<String, Pos>,
) -> Result<(), GclError> {
    let mut names = HashSet::new();
    for v in m.all_vars() {
        if !names.insert(v.name.as_str()) {
            return Err(GclError::Duplicate {
                kind: "variable",
                name: v.name.clone(),
            });
        }
    }
    for (f, _) in &m.formulas {
        if !names.insert(f.as_str()) {
            return Err(GclError::Duplicate {
                kind: "formula",
                name: f.clone(),
            });
        }
    }
    let mut mods = HashSet::new();
    for module in &m.modules {
        if !mods.insert(module.name.as_str()) {
            return Err(GclError::Duplicate {
                kind: "module",
                name: module.name.clone(),
            });
        }
    }
    for v in m.all_vars() {
        let pos = decl_pos.get(&v.name).copied().unwrap_or_default();
        if !v.contains(v.init) {
            return Err(GclError::Invalid {
                pos,
                msg: format!("initial value of `{}` outside its domain", v.name),
            });
        }
        if v.sink && (v.ty != VarType::Bool || v.restricted.as_ref() != Some(&BTreeSet::from([0]))) {
            return Err(GclError::Invalid {
                pos,
                msg: format!("sink variable `{}` must have domain {{false}}", v.name),
            });
        }
    }
    let env = TypeEnv::new(m);
    // Formulas must not refer to themselves.
    for (i, (f, e)) in m.formulas.iter().enumerate() {
        let mut vs = BTreeSet::new();
        e.vars(&mut vs);
        if vs.iter().any(|v| m.formulas[i..].iter().any(|(g, _)| g == v)) {
            return Err(GclError::Invalid {
                pos: decl_pos.get(f).copied().unwrap_or_default(),
                msg: format!("formula `{f}` may only use earlier formulas"),
            });
        }
        env.type_of(e).map_err(|msg| GclError::Invalid {
            pos: decl_pos.get(f).copied().unwrap_or_default(),
            msg,
        })?;
    }
    let globals: HashMap<&str, &VarDecl> = m.globals.iter().map(|v| (v.name.as_str(), v)).collect();
    for (mi, module) in m.modules.iter().enumerate() {
        let own: HashMap<&str, &VarDecl> = module.vars.iter().map(|v| (v.name.as_str(), v)).collect();
        for (ci, c) in module.commands.iter().enumerate() {
            let pos = cmd_pos.get(&(mi, ci)).copied().unwrap_or_default();
            let invalid = |msg: String| GclError::Invalid { pos, msg };
            match env.type_of(&c.guard).map_err(invalid)? {
                VarType::Bool => {}
                _ => return Err(invalid("guard must be boolean".into())),
            }
            let mut sum = Prob::zero();
            for b in &c.branches {
                if !b.prob.is_positive() || b.prob > Prob::one() {
                    return Err(invalid(format!("probability {} outside (0,1]", b.prob)));
                }
                sum += &b.prob;
                let mut written = HashSet::new();
                for u in &b.updates {
                    let decl = match (own.get(u.var.as_str()), globals.get(u.var.as_str())) {
                        (Some(d), _) => *d,
                        (None, Some(d)) if c.action.is_none() => *d,
                        (None, Some(_)) => {
                            return Err(invalid(format!(
                                "global `{}` may only be written by unlabelled commands",
                                u.var
                            )))
                        }
                        (None, None) => {
                            return Err(invalid(format!(
                                "module `{}` cannot write `{}`",
                                module.name, u.var
                            )))
                        }
                    };
                    if !written.insert(u.var.as_str()) {
                        return Err(invalid(format!("`{}` updated twice", u.var)));
                    }
                    let t = env.type_of(&u.value).map_err(invalid)?;
                    if t != decl.ty {
                        return Err(invalid(format!("type mismatch in update of `{}`", u.var)));
                    }
                }
            }
            if !sum.is_one() {
                return Err(GclError::ProbSum {
                    pos,
                    sum: sum.to_string(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> Prob {
        Prob::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn coin_flip_command() {
        let m = parse_model(
            "mdp
             module p
               flip : bool init true;
               coin : [0..1] init 0;
               [] flip -> 0.5: (coin'=0) & (flip'=false) + 0.5: (coin'=1) & (flip'=false);
             endmodule",
        )
        .unwrap();
        let c = &m.modules[0].commands[0];
        assert_eq!(c.action, None);
        assert_eq!(c.branches.len(), 2);
        assert!(c.branches.iter().all(|b| b.prob == r(1, 2)));
        assert_eq!(c.branches[1].updates[0].value, Expr::Int(1));
    }

    #[test]
    fn minimal_model() {
        let m = parse_model("module m x:[0..0]; [] true -> 1: (x'=0); endmodule").unwrap();
        assert_eq!(m.num_commands(), 1);
        assert_eq!(m.num_branches(), 1);
        assert_eq!(m.modules[0].vars[0].init, 0);
    }

    #[test]
    fn probability_sum_error() {
        let e = parse_model("module m x:[0..1] init 0; [] x=0 -> 0.5:(x'=1) + 0.4:(x'=0); endmodule").unwrap_err();
        assert!(matches!(e, GclError::ProbSum { .. }));
        assert!(e.to_string().contains("probabilities sum to 9/10 ≠ 1"), "{e}");
    }

    #[test]
    fn fraction_and_implicit_probabilities() {
        let m = parse_model("module m x:[0..2] init 0; [] x=0 -> 1/3:(x'=1) + 2/3:(x'=2); [] x>0 -> (x'=0); [a] x=2 -> true; endmodule")
            .unwrap();
        let cs = &m.modules[0].commands;
        assert_eq!(cs[0].branches[0].prob, r(1, 3));
        assert_eq!(cs[1].branches[0].prob, r(1, 1));
        assert!(cs[2].branches[0].updates.is_empty());
        assert_eq!(cs[2].action.as_deref(), Some("a"));
    }

    #[test]
    fn undeclared_and_duplicate_names() {
        let e = parse_model("module m x:[0..1] init 0; [] y=0 -> (x'=1); endmodule").unwrap_err();
        assert!(matches!(e, GclError::Undeclared { ref name, .. } if name == "y"), "{e}");
        let e = parse_model("module m x:[0..1] init 0; endmodule module n x:[0..1] init 0; endmodule").unwrap_err();
        assert!(matches!(e, GclError::Duplicate { .. }), "{e}");
        let e = parse_model("module m x:[0..1] init 0; endmodule module m y:[0..1] init 0; endmodule").unwrap_err();
        assert!(matches!(e, GclError::Duplicate { kind: "module", .. }), "{e}");
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_model("module m\n  x:[0..1] init 0;\n  [] x=0 -> (x'=1)\nendmodule").unwrap_err();
        match e {
            GclError::Syntax { pos, .. } => assert_eq!(pos.line, 4),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn foreign_write_rejected() {
        let e = parse_model(
            "module m x:[0..1] init 0; [] true -> (y'=1); endmodule
             module n y:[0..1] init 0; endmodule",
        )
        .unwrap_err();
        assert!(matches!(e, GclError::Invalid { .. }), "{e}");
    }

    #[test]
    fn globals_formulas_and_restricted_domains() {
        let m = parse_model(
            "global c : [0..4] init 2;
             formula low = c <= 1;
             module m
               x : {1,3,5} init 3;
               [] low & x=3 -> (x'=5);
               [] !low -> (c'=c-1);
             endmodule",
        )
        .unwrap();
        assert_eq!(m.globals[0].name, "c");
        assert_eq!(m.formulas[0].0, "low");
        assert_eq!(m.modules[0].vars[0].values(), vec![1, 3, 5]);
        assert!(parse_model("module m x : {1,3} init 2; endmodule").is_err());
        // globals may only be written by τ commands
        assert!(parse_model("global c : [0..1] init 0; module m x:[0..1] init 0; [a] true -> (c'=1); endmodule").is_err());
    }

    #[test]
    fn expressions_type_check() {
        assert!(parse_model("module m x:[0..1] init 0; [] x -> (x'=1); endmodule").is_err());
        assert!(parse_model("module m b:bool init false; [] true -> (b'=1); endmodule").is_err());
        assert!(parse_expr("a & (b | !c)").is_ok());
        assert!(parse_expr("a &").is_err());
    }
}
