use num_rational::BigRational;
use std::collections::BTreeSet;

pub type Prob = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "|",
            BinOp::And => "&",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

/// Expressions refer to variables by name; `semantics` compiles them to indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Bool(true), _) => b,
            (_, Expr::Bool(true)) => a,
            _ => Expr::bin(BinOp::And, a, b),
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) | Expr::Not(e) => e.vars(out),
            Expr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarType {
    Int,
    Bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub ty: VarType,
    pub lo: i64,
    pub hi: i64,
    pub init: i64,
    /// A restricted domain drops successors outside the listed values instead
    /// of treating them as errors.
    pub restricted: Option<BTreeSet<i64>>,
    /// Dead-sink marker used to encode sub-stochastic commands.
    pub sink: bool,
}

impl VarDecl {
    pub fn int(name: &str, lo: i64, hi: i64, init: i64) -> Self {
        VarDecl {
            name: name.to_string(),
            ty: VarType::Int,
            lo,
            hi,
            init,
            restricted: None,
            sink: false,
        }
    }

    pub fn boolean(name: &str, init: bool) -> Self {
        VarDecl {
            name: name.to_string(),
            ty: VarType::Bool,
            lo: 0,
            hi: 1,
            init: init as i64,
            restricted: None,
            sink: false,
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        match &self.restricted {
            Some(set) => set.contains(&v),
            None => self.lo <= v && v <= self.hi,
        }
    }

    /// All values of the (possibly restricted) domain.
    pub fn values(&self) -> Vec<i64> {
        match &self.restricted {
            Some(set) => set.iter().copied().collect(),
            None => (self.lo..=self.hi).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Update {
    pub var: String,
    pub value: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateBranch {
    pub prob: Prob,
    pub updates: Vec<Update>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Command {
    /// `None` is the internal action τ.
    pub action: Option<String>,
    pub guard: Expr,
    pub branches: Vec<UpdateBranch>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Module {
    pub name: String,
    pub vars: Vec<VarDecl>,
    /// Explicitly declared actions; the alphabet also contains every action used by a command.
    pub actions: BTreeSet<String>,
    pub commands: Vec<Command>,
}

impl Module {
    pub fn alphabet(&self) -> BTreeSet<String> {
        let mut a = self.actions.clone();
        for c in &self.commands {
            if let Some(act) = &c.action {
                a.insert(act.clone());
            }
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Model {
    /// Globals may only be written by τ commands.
    pub globals: Vec<VarDecl>,
    /// Named boolean expressions, inlined wherever the name is used.
    pub formulas: Vec<(String, Expr)>,
    pub modules: Vec<Module>,
}

impl Model {
    /// All variables in canonical order: globals, then module variables.
    pub fn all_vars(&self) -> Vec<&VarDecl> {
        self.globals
            .iter()
            .chain(self.modules.iter().flat_map(|m| m.vars.iter()))
            .collect()
    }

    pub fn num_commands(&self) -> usize {
        self.modules.iter().map(|m| m.commands.len()).sum()
    }

    pub fn num_branches(&self) -> usize {
        self.modules
            .iter()
            .flat_map(|m| m.commands.iter())
            .map(|c| c.branches.len())
            .sum()
    }

    pub fn module_index(&self, name: &str) -> Option<usize> {
        self.modules.iter().position(|m| m.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CommandId {
    pub module: usize,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchRef {
    pub cmd: CommandId,
    pub branch: usize,
}
