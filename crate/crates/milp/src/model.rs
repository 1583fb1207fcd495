use crate::MilpError;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use std::collections::HashMap;
use std::fmt;

pub type Rational = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// `None` means unbounded in that direction.
    pub lower: Option<Rational>,
    pub upper: Option<Rational>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

/// Sparse linear expression; terms are kept merged per variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, Rational)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        let mut e = Self::new();
        e.add(v, Rational::one());
        e
    }

    pub fn add(&mut self, v: VarId, coef: Rational) -> &mut Self {
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == v) {
            t.1 += coef;
        } else {
            self.terms.push((v, coef));
        }
        self.terms.retain(|t| !t.1.is_zero());
        self
    }

    pub fn add_int(&mut self, v: VarId, coef: i64) -> &mut Self {
        self.add(v, Rational::from_integer(BigInt::from(coef)))
    }

    pub fn with(mut self, v: VarId, coef: i64) -> Self {
        self.add_int(v, coef);
        self
    }

    pub fn with_rat(mut self, v: VarId, coef: Rational) -> Self {
        self.add(v, coef);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval_f64(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(v, c)| c.to_f64().unwrap_or(f64::NAN) * values[v.0])
            .sum()
    }

    /// Exact evaluation; every `f64` is converted to the rational it denotes.
    pub fn eval_exact(&self, values: &[f64]) -> Rational {
        let mut acc = Rational::zero();
        for (v, c) in &self.terms {
            acc += c * f64_to_rational(values[v.0]);
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub rel: Relation,
    pub rhs: Rational,
}

/// A minimisation MILP.
#[derive(Clone, Debug, Default)]
pub struct Milp {
    pub vars: Vec<Variable>,
    pub objective: LinExpr,
    pub constraints: Vec<Constraint>,
    names: HashMap<String, VarId>,
    row_names: HashMap<String, usize>,
}

impl Milp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: Option<Rational>,
        upper: Option<Rational>,
    ) -> Result<VarId, MilpError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(MilpError::BadName(name));
        }
        if self.names.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (Some(Rational::zero()), Some(Rational::one())),
            _ => (lower, upper),
        };
        let id = VarId(self.vars.len());
        self.names.insert(name.clone(), id);
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Binary, None, None)
    }

    /// Continuous variable in `[0, 1]`.
    pub fn add_unit(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_var(
            name,
            VarKind::Continuous,
            Some(Rational::zero()),
            Some(Rational::one()),
        )
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        rel: Relation,
        rhs: Rational,
    ) -> Result<usize, MilpError> {
        let mut name = name.into();
        if name.is_empty() {
            name = format!("c{}", self.constraints.len());
        }
        if !is_valid_name(&name) {
            return Err(MilpError::BadName(name));
        }
        if self.row_names.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        for (v, _) in &expr.terms {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UnknownVariable(format!("#{}", v.0)));
            }
        }
        let idx = self.constraints.len();
        self.row_names.insert(name.clone(), idx);
        self.constraints.push(Constraint {
            name,
            expr,
            rel,
            rhs,
        });
        Ok(idx)
    }

    pub fn set_objective(&mut self, obj: LinExpr) {
        self.objective = obj;
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer_vars(&self) -> usize {
        self.vars.iter().filter(|v| v.kind.is_integral()).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval_f64(values)
    }

    /// Largest violation of bounds, rows, and integrality (separately for integrality).
    pub fn violation(&self, values: &[f64]) -> Violation {
        let mut v = Violation::default();
        for (i, var) in self.vars.iter().enumerate() {
            let x = values[i];
            if let Some(lo) = &var.lower {
                v.bound = v.bound.max(lo.to_f64().unwrap_or(0.0) - x);
            }
            if let Some(hi) = &var.upper {
                v.bound = v.bound.max(x - hi.to_f64().unwrap_or(0.0));
            }
            if var.kind.is_integral() {
                v.integrality = v.integrality.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            let lhs = c.expr.eval_exact(values);
            let diff = (&lhs - &c.rhs).to_f64().unwrap_or(f64::INFINITY);
            let viol = match c.rel {
                Relation::Le => diff,
                Relation::Ge => -diff,
                Relation::Eq => diff.abs(),
            };
            v.row = v.row.max(viol);
        }
        v
    }

    pub fn is_feasible(&self, values: &[f64], tol: f64, int_tol: f64) -> bool {
        let v = self.violation(values);
        v.bound <= tol && v.row <= tol && v.integrality <= int_tol
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Violation {
    pub bound: f64,
    pub row: f64,
    pub integrality: f64,
}

/// Names must survive the LP text format: no whitespace, not starting with a digit or sign.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || "_!\"#$%&(),;?@'{}~".contains(c) => {}
        _ => return false,
    }
    name.len() <= 255
        && chars.all(|c| c.is_ascii_alphanumeric() || "_!\"#$%&(),.;?@'{}~".contains(c))
}

pub fn f64_to_rational(x: f64) -> Rational {
    Rational::from_f64(x).unwrap_or_else(Rational::zero)
}

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

