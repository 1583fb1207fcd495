//! A small MILP toolkit: model, dense bounded simplex over `f64` or exact
//! rationals, LP-based branch and bound, and CPLEX LP import/export.

mod bnb;
mod lpfile;
mod model;
mod scalar;
mod simplex;

pub use bnb::{
    solve, solve_lp_relaxation, Arithmetic, CutoffFn, Incumbent, LpSolution, SolveConfig,
    SolveResult, SolveStats, Status,
};
pub use lpfile::{export_lp, fmt_num, import_solution, parse_decimal, parse_lp, ImportedSolution};
pub use model::{
    f64_to_rational, is_valid_name, rational, Constraint, LinExpr, Milp, Rational, Relation,
    VarId, VarKind, Variable, Violation,
};
pub use scalar::Scalar;
pub use simplex::{LpStatus, Tableau};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MilpError {
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("invalid name '{0}'")]
    BadName(String),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
