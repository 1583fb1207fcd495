use crate::gcl::{self, BinOp, BranchRef, CommandId, Expr, GclError, Model, Prob, VarDecl, VarType};
use crate::pa::{Branch, LabelId, LabelSet, StateId, SubPa, Transition};
use num_traits::One;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap, VecDeque};
use thiserror::Error;

pub type Rational = num_rational::BigRational;

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error(transparent)]
    Gcl(#[from] GclError),
    #[error("state {state}: value {value} of `{var}` outside its domain")]
    OutOfRange { var: String, value: i64, state: String },
    #[error("state space exceeds the cap of {0} states")]
    StateCap(usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Commands,
    Modules,
    Branches,
    States,
    Values,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Command(CommandId),
    Module(usize),
    Branch(BranchRef),
    State(StateId),
    Value { var: usize, value: i64 },
    /// Labels of hand-built or generated PAs that have no model behind them.
    Synthetic(usize),
}

#[derive(Clone, Debug)]
pub struct LabelFactory {
    pub kind: LabelKind,
    /// Module equivalence classes (modules factory only); defaults to singletons.
    pub module_classes: Option<Vec<Vec<usize>>>,
}

impl LabelFactory {
    pub fn commands() -> Self {
        Self::of(LabelKind::Commands)
    }
    pub fn modules(classes: Option<Vec<Vec<usize>>>) -> Self {
        LabelFactory {
            kind: LabelKind::Modules,
            module_classes: classes,
        }
    }
    pub fn branches() -> Self {
        Self::of(LabelKind::Branches)
    }
    pub fn states() -> Self {
        Self::of(LabelKind::States)
    }
    pub fn values() -> Self {
        Self::of(LabelKind::Values)
    }
    pub fn of(kind: LabelKind) -> Self {
        LabelFactory {
            kind,
            module_classes: None,
        }
    }
}

/// Synchronization cut data: a label may only be chosen together with one
/// partner label from each synchronizing module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncCut {
    pub label: LabelId,
    pub partners: Vec<Vec<LabelId>>,
}

#[derive(Clone, Debug)]
pub struct LabeledPa {
    pub pa: SubPa,
    pub kind: LabelKind,
    pub vars: Vec<VarDecl>,
    pub states: Vec<Vec<i64>>,
    pub labels: Vec<Label>,
    pub names: Vec<String>,
    pub weights: Vec<Rational>,
    pub sync: Option<Vec<SyncCut>>,
    pub module_classes: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl LabeledPa {
    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn all_labels(&self) -> LabelSet {
        (0..self.labels.len() as u32).map(LabelId).collect()
    }

    pub fn name(&self, l: LabelId) -> &str {
        &self.names[l.0 as usize]
    }

    pub fn weight(&self, l: LabelId) -> &Rational {
        &self.weights[l.0 as usize]
    }

    pub fn total_weight<'a>(&self, ls: impl IntoIterator<Item = &'a LabelId>) -> Rational {
        ls.into_iter().map(|l| self.weight(*l)).sum()
    }

    pub fn state_string(&self, s: StateId) -> String {
        let parts: Vec<String> = self
            .vars
            .iter()
            .zip(&self.states[s])
            .filter(|(d, _)| !d.sink)
            .map(|(d, v)| format!("{}={}", d.name, fmt_value(d, *v)))
            .collect();
        format!("({})", parts.join(","))
    }
}

fn fmt_value(d: &VarDecl, v: i64) -> String {
    match d.ty {
        VarType::Bool => (v == 1).to_string(),
        VarType::Int => v.to_string(),
    }
}

/// Expressions with variables resolved to state-vector indices.
#[derive(Clone, Debug)]
pub enum CExpr {
    Const(i64),
    Var(usize),
    Neg(Box<CExpr>),
    Not(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    pub fn eval(&self, s: &[i64]) -> i64 {
        match self {
            CExpr::Const(c) => *c,
            CExpr::Var(i) => s[*i],
            CExpr::Neg(a) => -a.eval(s),
            CExpr::Not(a) => (a.eval(s) == 0) as i64,
            CExpr::Bin(op, a, b) => {
                let x = a.eval(s);
                // Short-circuit keeps evaluation total for guarded arithmetic.
                match op {
                    BinOp::And if x == 0 => return 0,
                    BinOp::Or if x != 0 => return 1,
                    _ => {}
                }
                let y = b.eval(s);
                match op {
                    BinOp::Or | BinOp::And => (y != 0) as i64,
                    BinOp::Eq => (x == y) as i64,
                    BinOp::Ne => (x != y) as i64,
                    BinOp::Lt => (x < y) as i64,
                    BinOp::Le => (x <= y) as i64,
                    BinOp::Gt => (x > y) as i64,
                    BinOp::Ge => (x >= y) as i64,
                    BinOp::Add => x.saturating_add(y),
                    BinOp::Sub => x.saturating_sub(y),
                    BinOp::Mul => x.saturating_mul(y),
                }
            }
        }
    }

    pub fn holds(&self, s: &[i64]) -> bool {
        self.eval(s) != 0
    }
}

pub struct Compiler<'a> {
    index: HashMap<&'a str, usize>,
    formulas: HashMap<&'a str, &'a Expr>,
    types: gcl::parser::TypeEnv<'a>,
}

impl<'a> Compiler<'a> {
    pub fn new(m: &'a Model) -> Self {
        Compiler {
            index: m
                .all_vars()
                .iter()
                .enumerate()
                .map(|(i, v)| (v.name.as_str(), i))
                .collect(),
            formulas: m.formulas.iter().map(|(n, e)| (n.as_str(), e)).collect(),
            types: gcl::parser::TypeEnv::new(m),
        }
    }

    pub fn compile(&self, e: &Expr) -> Result<CExpr, SemanticsError> {
        Ok(match e {
            Expr::Int(n) => CExpr::Const(*n),
            Expr::Bool(b) => CExpr::Const(*b as i64),
            Expr::Var(v) => match (self.index.get(v.as_str()), self.formulas.get(v.as_str())) {
                (Some(i), _) => CExpr::Var(*i),
                (None, Some(f)) => self.compile(f)?,
                (None, None) => return Err(SemanticsError::Invalid(format!("undeclared variable `{v}`"))),
            },
            Expr::Neg(a) => CExpr::Neg(Box::new(self.compile(a)?)),
            Expr::Not(a) => CExpr::Not(Box::new(self.compile(a)?)),
            Expr::Bin(op, a, b) => CExpr::Bin(*op, Box::new(self.compile(a)?), Box::new(self.compile(b)?)),
        })
    }

    /// Compiles a boolean condition, checking its type.
    pub fn condition(&self, e: &Expr) -> Result<CExpr, SemanticsError> {
        match self.types.type_of(e) {
            Ok(VarType::Bool) => self.compile(e),
            Ok(_) => Err(SemanticsError::Invalid(format!(
                "`{}` is not a boolean expression",
                gcl::emit_expr(e)
            ))),
            Err(msg) => Err(SemanticsError::Invalid(msg)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub state_cap: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { state_cap: 1_000_000 }
    }
}

struct Interner {
    ids: HashMap<Label, LabelId>,
    labels: Vec<Label>,
}

impl Interner {
    fn get(&mut self, l: Label) -> LabelId {
        if let Some(id) = self.ids.get(&l) {
            return *id;
        }
        let id = LabelId(self.labels.len() as u32);
        self.ids.insert(l.clone(), id);
        self.labels.push(l);
        id
    }
}

struct CBranch {
    updates: Vec<(usize, CExpr)>,
    prob: Prob,
    origin: BTreeSet<BranchRef>,
}

struct CCommand {
    action: Option<String>,
    guard: CExpr,
    branches: Vec<CBranch>,
    sources: Vec<CommandId>,
}

pub fn build_pa(model: &Model, factory: &LabelFactory) -> Result<LabeledPa, SemanticsError> {
    build_pa_with(model, factory, &BuildOptions::default())
}

pub fn build_pa_with(
    model: &Model,
    factory: &LabelFactory,
    opts: &BuildOptions,
) -> Result<LabeledPa, SemanticsError> {
    gcl::validate(model)?;
    let flat = gcl::flatten(model)?;
    let vars: Vec<VarDecl> = model.all_vars().into_iter().cloned().collect();
    let comp = Compiler::new(model);
    let mut commands = vec![];
    for c in &flat.commands {
        let mut branches = vec![];
        for b in &c.branches {
            let mut updates = vec![];
            for u in &b.updates {
                updates.push((comp.index[u.var.as_str()], comp.compile(&u.value)?));
            }
            branches.push(CBranch {
                updates,
                prob: b.prob.clone(),
                origin: b.origin.clone(),
            });
        }
        commands.push(CCommand {
            action: c.action.clone(),
            guard: comp.compile(&c.guard)?,
            branches,
            sources: c.sources.clone(),
        });
    }

    let classes = match (&factory.kind, &factory.module_classes) {
        (LabelKind::Modules, Some(cl)) => {
            let mut seen = BTreeSet::new();
            for m in cl.iter().flatten() {
                if *m >= model.modules.len() || !seen.insert(*m) {
                    return Err(SemanticsError::Invalid(format!("bad module class member {m}")));
                }
            }
            let mut cl = cl.clone();
            cl.extend((0..model.modules.len()).filter(|m| !seen.contains(m)).map(|m| vec![m]));
            cl
        }
        _ => (0..model.modules.len()).map(|m| vec![m]).collect(),
    };
    let class_of: HashMap<usize, usize> = classes
        .iter()
        .enumerate()
        .flat_map(|(ci, ms)| ms.iter().map(move |m| (*m, ci)))
        .collect();

    let mut interner = Interner {
        ids: HashMap::new(),
        labels: vec![],
    };
    // Text-derived labels exist whether or not they are ever used.
    for (mi, m) in model.modules.iter().enumerate() {
        for (ci, c) in m.commands.iter().enumerate() {
            let cmd = CommandId { module: mi, index: ci };
            match factory.kind {
                LabelKind::Commands => {
                    interner.get(Label::Command(cmd));
                }
                LabelKind::Branches => {
                    for b in 0..c.branches.len() {
                        interner.get(Label::Branch(BranchRef { cmd, branch: b }));
                    }
                }
                _ => {}
            }
        }
    }
    if factory.kind == LabelKind::Modules {
        for ci in 0..classes.len() {
            interner.get(Label::Module(ci));
        }
    }

    let init: Vec<i64> = vars.iter().map(|v| v.init).collect();
    let mut index: HashMap<Vec<i64>, StateId> = HashMap::new();
    let mut states: Vec<Vec<i64>> = vec![];
    let mut trans: Vec<Vec<Transition>> = vec![];
    let mut queue = VecDeque::new();
    let mut discover = |s: Vec<i64>,
                        states: &mut Vec<Vec<i64>>,
                        interner: &mut Interner,
                        queue: &mut VecDeque<StateId>|
     -> Result<StateId, SemanticsError> {
        if let Some(id) = index.get(&s) {
            return Ok(*id);
        }
        let id = states.len();
        if id >= opts.state_cap {
            return Err(SemanticsError::StateCap(opts.state_cap));
        }
        if factory.kind == LabelKind::States {
            interner.get(Label::State(id));
        }
        index.insert(s.clone(), id);
        states.push(s);
        queue.push_back(id);
        Ok(id)
    };
    discover(init.clone(), &mut states, &mut interner, &mut queue)?;
    let value_labels = |s: &[i64], interner: &mut Interner| -> LabelSet {
        vars.iter()
            .enumerate()
            .filter(|(_, d)| !d.sink)
            .map(|(i, _)| interner.get(Label::Value { var: i, value: s[i] }))
            .collect()
    };
    let init_labels = match factory.kind {
        LabelKind::States => LabelSet::from([LabelId(0)]),
        LabelKind::Values => value_labels(&init, &mut interner),
        _ => LabelSet::new(),
    };

    while let Some(s) = queue.pop_front() {
        let cur = states[s].clone();
        let mut out = vec![];
        for c in &commands {
            if !c.guard.holds(&cur) {
                continue;
            }
            // successor → (probability, origin branches), in first-seen order
            let mut succ: Vec<(Vec<i64>, Prob, BTreeSet<BranchRef>)> = vec![];
            for b in &c.branches {
                let mut next = cur.clone();
                for (v, e) in &b.updates {
                    next[*v] = e.eval(&cur);
                }
                let mut dropped = false;
                for (i, d) in vars.iter().enumerate() {
                    if !d.contains(next[i]) {
                        if d.restricted.is_some() {
                            dropped = true;
                        } else {
                            return Err(SemanticsError::OutOfRange {
                                var: d.name.clone(),
                                value: next[i],
                                state: format!("{cur:?}"),
                            });
                        }
                    }
                }
                if dropped {
                    continue;
                }
                match succ.iter_mut().find(|(t, _, _)| *t == next) {
                    Some((_, p, o)) => {
                        *p += &b.prob;
                        o.extend(b.origin.iter().copied());
                    }
                    None => succ.push((next, b.prob.clone(), b.origin.clone())),
                }
            }
            if succ.is_empty() {
                continue;
            }
            let mut branches = vec![];
            for (next, prob, origin) in succ {
                let labels: LabelSet = match factory.kind {
                    LabelKind::Commands => c.sources.iter().map(|id| interner.get(Label::Command(*id))).collect(),
                    LabelKind::Modules => c
                        .sources
                        .iter()
                        .map(|id| interner.get(Label::Module(class_of[&id.module])))
                        .collect(),
                    LabelKind::Branches => origin.iter().map(|b| interner.get(Label::Branch(*b))).collect(),
                    LabelKind::States | LabelKind::Values => LabelSet::new(),
                };
                let labels = match factory.kind {
                    LabelKind::Values => value_labels(&next, &mut interner),
                    _ => labels,
                };
                let target = discover(next, &mut states, &mut interner, &mut queue)?;
                let labels = match factory.kind {
                    LabelKind::States => LabelSet::from([interner.get(Label::State(target))]),
                    _ => labels,
                };
                branches.push(Branch { target, prob, labels });
            }
            branches.sort_by_key(|b| b.target);
            out.push(Transition {
                action: c.action.clone(),
                branches,
            });
        }
        if trans.len() <= s {
            trans.resize(s + 1, vec![]);
        }
        trans[s] = out;
    }
    trans.resize(states.len(), vec![]);

    let labels = interner.labels;
    let names = labels.iter().map(|l| label_name(model, &vars, &classes, l)).collect();
    let weights = labels
        .iter()
        .map(|l| match l {
            Label::Module(ci) => Rational::from_integer(classes[*ci].len().into()),
            _ => Rational::one(),
        })
        .collect();
    let sync = match factory.kind {
        LabelKind::Commands | LabelKind::Branches => Some(sync_cuts(model, factory.kind, &interner.ids)),
        _ => None,
    };
    Ok(LabeledPa {
        pa: SubPa {
            init: 0,
            trans,
            init_labels,
        },
        kind: factory.kind,
        vars,
        states,
        labels,
        names,
        weights,
        sync,
        module_classes: classes,
        warnings: flat.warnings,
    })
}

fn label_name(model: &Model, vars: &[VarDecl], classes: &[Vec<usize>], l: &Label) -> String {
    match l {
        Label::Command(c) => format!("{}:{}", model.modules[c.module].name, c.index + 1),
        Label::Branch(b) => format!(
            "{}:{}.{}",
            model.modules[b.cmd.module].name,
            b.cmd.index + 1,
            b.branch + 1
        ),
        Label::Module(ci) => classes[*ci]
            .iter()
            .map(|m| model.modules[*m].name.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        Label::State(s) => format!("s{s}"),
        Label::Synthetic(i) => format!("l{i}"),
        Label::Value { var, value } => format!("{}={}", vars[*var].name, fmt_value(&vars[*var], *value)),
    }
}

fn sync_cuts(model: &Model, kind: LabelKind, ids: &HashMap<Label, LabelId>) -> Vec<SyncCut> {
    let labels_of = |cmd: CommandId| -> Vec<LabelId> {
        match kind {
            LabelKind::Commands => vec![ids[&Label::Command(cmd)]],
            _ => (0..model.modules[cmd.module].commands[cmd.index].branches.len())
                .map(|b| ids[&Label::Branch(BranchRef { cmd, branch: b })])
                .collect(),
        }
    };
    let alphabets: Vec<BTreeSet<String>> = model.modules.iter().map(|m| m.alphabet()).collect();
    let mut cuts = vec![];
    for (mi, m) in model.modules.iter().enumerate() {
        for (ci, c) in m.commands.iter().enumerate() {
            let Some(a) = &c.action else { continue };
            let mut partners = vec![];
            for (mj, other) in model.modules.iter().enumerate() {
                if mj == mi || !alphabets[mj].contains(a) {
                    continue;
                }
                partners.push(
                    other
                        .commands
                        .iter()
                        .enumerate()
                        .filter(|(_, d)| d.action.as_ref() == Some(a))
                        .flat_map(|(dj, _)| labels_of(CommandId { module: mj, index: dj }))
                        .collect(),
                );
            }
            if partners.is_empty() {
                continue;
            }
            for l in labels_of(CommandId { module: mi, index: ci }) {
                cuts.push(SyncCut {
                    label: l,
                    partners: partners.clone(),
                });
            }
        }
    }
    cuts
}

/// States satisfying `target`, which may use model variables and formulas.
pub fn target_states(model: &Model, lpa: &LabeledPa, target: &Expr) -> Result<Vec<bool>, SemanticsError> {
    let c = Compiler::new(model).condition(target)?;
    Ok(lpa.states.iter().map(|s| c.holds(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcl::{parse_expr, parse_model};
    use num_traits::One;

    fn build(text: &str, f: LabelFactory) -> LabeledPa {
        build_pa(&parse_model(text).unwrap(), &f).unwrap()
    }

    #[test]
    fn one_flip() {
        let lpa = build("module m x:[0..1] init 0; [] x=0 -> 1:(x'=1); endmodule", LabelFactory::commands());
        assert_eq!(lpa.pa.num_states(), 2);
        assert_eq!(lpa.pa.num_transitions(), 1);
        assert!(lpa.pa.trans[1].is_empty());
        assert_eq!(lpa.state_string(1), "(x=1)");
    }

    #[test]
    fn state_labels_on_a_chain() {
        let lpa = build(
            "module m x:[0..2] init 0; [] x<2 -> (x'=x+1); endmodule",
            LabelFactory::states(),
        );
        assert_eq!(lpa.num_labels(), 3);
        assert_eq!(lpa.pa.init_labels.len(), 1);
        for ts in &lpa.pa.trans {
            for b in ts.iter().flat_map(|t| &t.branches) {
                assert_eq!(b.labels.len(), 1);
                assert_eq!(lpa.labels[b.labels.iter().next().unwrap().0 as usize], Label::State(b.target));
            }
        }
    }

    #[test]
    fn value_labels_follow_successors() {
        let lpa = build(
            "module m x:[0..2] init 0; b : bool init false; [] x=0 -> 0.5:(x'=1) + 0.5:(x'=2)&(b'=true); endmodule",
            LabelFactory::values(),
        );
        let names: BTreeSet<&str> = lpa.names.iter().map(String::as_str).collect();
        assert_eq!(names, ["b=false", "b=true", "x=0", "x=1", "x=2"].into());
        let t = &lpa.pa.trans[0][0];
        let into: Vec<Vec<&str>> = t.branches.iter().map(|b| b.labels.iter().map(|l| lpa.name(*l)).collect()).collect();
        assert!(into.contains(&vec!["x=1", "b=false"]) || into.contains(&vec!["b=false", "x=1"]));
        assert_eq!(lpa.pa.init_labels.len(), 2);
    }

    #[test]
    fn colliding_branches_merge_with_label_union() {
        let lpa = build(
            "module m x:[0..1] init 0; [] x=0 -> 0.5:(x'=1) + 0.5:(x'=1); [] x=0 -> (x'=1); endmodule",
            LabelFactory::branches(),
        );
        assert_eq!(lpa.pa.trans[0].len(), 2);
        let first = &lpa.pa.trans[0][0];
        assert_eq!(first.branches.len(), 1);
        assert!(first.branches[0].prob.is_one());
        assert_eq!(first.branches[0].labels.len(), 2);
        // the numerically identical second command stays a separate transition
        assert_eq!(lpa.pa.trans[0][1].branches.len(), 1);
        assert_ne!(lpa.pa.trans[0][1].branches[0].labels, first.branches[0].labels);
    }

    #[test]
    fn synchronized_commands_carry_both_labels() {
        let text = "module m x:[0..1] init 0; [a] x=0 -> (x'=1); endmodule
                    module n y:[0..1] init 0; [a] y=0 -> (y'=1); endmodule";
        let lpa = build(text, LabelFactory::commands());
        assert_eq!(lpa.num_labels(), 2);
        assert_eq!(lpa.pa.trans[0][0].branches[0].labels.len(), 2);
        let sync = lpa.sync.as_ref().unwrap();
        assert_eq!(sync.len(), 2);
        assert!(sync.iter().all(|c| c.partners.len() == 1 && c.partners[0].len() == 1));
        assert!(build(text, LabelFactory::states()).sync.is_none());
    }

    #[test]
    fn module_classes_weigh_their_size() {
        let text = "module p x:[0..1] init 0; [] x=0 -> (x'=1); endmodule
                    module q y:[0..1] init 0; [] y=0 -> (y'=1); endmodule
                    module r z:[0..1] init 0; [] z=0 -> (z'=1); endmodule";
        let lpa = build(text, LabelFactory::modules(Some(vec![vec![0, 1], vec![2]])));
        assert_eq!(lpa.num_labels(), 2);
        assert_eq!(lpa.names, ["p+q", "r"]);
        assert_eq!(lpa.weights[0], Rational::from_integer(2.into()));
    }

    #[test]
    fn range_and_cap_errors() {
        let m = parse_model("module m x:[0..1] init 0; [] true -> (x'=x+1); endmodule").unwrap();
        assert!(matches!(build_pa(&m, &LabelFactory::commands()), Err(SemanticsError::OutOfRange { .. })));
        let m = parse_model("module m x:[0..9] init 0; [] x<9 -> (x'=x+1); endmodule").unwrap();
        let capped = build_pa_with(&m, &LabelFactory::commands(), &BuildOptions { state_cap: 5 });
        assert!(matches!(capped, Err(SemanticsError::StateCap(5))));
        // restricted domains silently drop successors outside the domain
        let m = parse_model("module m x:{0,2} init 0; [] true -> 0.5:(x'=1) + 0.5:(x'=2); endmodule").unwrap();
        let lpa = build_pa(&m, &LabelFactory::commands()).unwrap();
        assert_eq!(lpa.pa.trans[0][0].mass(), Rational::new(1.into(), 2.into()));
    }

    #[test]
    fn targets_from_expression() {
        let text = "module m x:[0..2] init 0; [] x<2 -> (x'=x+1); endmodule";
        let m = parse_model(text).unwrap();
        let lpa = build_pa(&m, &LabelFactory::commands()).unwrap();
        assert_eq!(target_states(&m, &lpa, &parse_expr("x>=1").unwrap()).unwrap(), vec![false, true, true]);
        assert!(target_states(&m, &lpa, &parse_expr("x+1").unwrap()).is_err());
    }
}
