use super::ast::*;
use super::parser::GclError;
use std::collections::{BTreeSet, HashSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatBranch {
    pub prob: Prob,
    pub updates: Vec<Update>,
    /// Source command branches this product branch was built from.
    pub origin: BTreeSet<BranchRef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatCommand {
    pub action: Option<String>,
    pub guard: Expr,
    pub branches: Vec<FlatBranch>,
    pub sources: Vec<CommandId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatModule {
    pub modules: Vec<usize>,
    pub vars: BTreeSet<String>,
    pub actions: BTreeSet<String>,
    pub commands: Vec<FlatCommand>,
    pub warnings: Vec<String>,
}

impl FlatCommand {
    fn writes(&self) -> HashSet<&str> {
        self.branches
            .iter()
            .flat_map(|b| b.updates.iter().map(|u| u.var.as_str()))
            .collect()
    }
}

pub fn lift_module(m: &Model, index: usize) -> FlatModule {
    let module = &m.modules[index];
    let commands = module
        .commands
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let id = CommandId { module: index, index: ci };
            FlatCommand {
                action: c.action.clone(),
                guard: c.guard.clone(),
                branches: c
                    .branches
                    .iter()
                    .enumerate()
                    .map(|(bi, b)| FlatBranch {
                        prob: b.prob.clone(),
                        updates: b.updates.clone(),
                        origin: BTreeSet::from([BranchRef { cmd: id, branch: bi }]),
                    })
                    .collect(),
                sources: vec![id],
            }
        })
        .collect();
    FlatModule {
        modules: vec![index],
        vars: module.vars.iter().map(|v| v.name.clone()).collect(),
        actions: module.alphabet(),
        commands,
        warnings: vec![],
    }
}

pub fn compose_commands(c: &FlatCommand, d: &FlatCommand) -> Result<FlatCommand, GclError> {
    match (&c.action, &d.action) {
        (Some(a), Some(b)) if a == b => {}
        (a, b) => {
            return Err(GclError::Compose(format!(
                "action mismatch: [{}] vs [{}]",
                a.as_deref().unwrap_or(""),
                b.as_deref().unwrap_or("")
            )))
        }
    }
    let (wc, wd) = (c.writes(), d.writes());
    if let Some(v) = wc.intersection(&wd).next() {
        return Err(GclError::Compose(format!("both commands write `{v}`")));
    }
    let mut branches = Vec::with_capacity(c.branches.len() * d.branches.len());
    for b1 in &c.branches {
        for b2 in &d.branches {
            branches.push(FlatBranch {
                prob: &b1.prob * &b2.prob,
                updates: b1.updates.iter().chain(&b2.updates).cloned().collect(),
                origin: b1.origin.union(&b2.origin).copied().collect(),
            });
        }
    }
    Ok(FlatCommand {
        action: c.action.clone(),
        guard: Expr::and(c.guard.clone(), d.guard.clone()),
        branches,
        sources: c.sources.iter().chain(&d.sources).copied().collect(),
    })
}

pub fn compose_modules(m1: &FlatModule, m2: &FlatModule) -> Result<FlatModule, GclError> {
    if let Some(v) = m1.vars.intersection(&m2.vars).next() {
        return Err(GclError::Compose(format!("variable `{v}` owned by both modules")));
    }
    let shared: BTreeSet<&String> = m1.actions.intersection(&m2.actions).collect();
    let is_shared = |c: &FlatCommand| c.action.as_ref().map_or(false, |a| shared.contains(a));
    let mut warnings: Vec<String> = m1.warnings.iter().chain(&m2.warnings).cloned().collect();
    let mut commands: Vec<FlatCommand> = m1
        .commands
        .iter()
        .chain(&m2.commands)
        .filter(|c| !is_shared(c))
        .cloned()
        .collect();
    for a in &shared {
        let left: Vec<&FlatCommand> = m1.commands.iter().filter(|c| c.action.as_ref() == Some(a)).collect();
        let right: Vec<&FlatCommand> = m2.commands.iter().filter(|c| c.action.as_ref() == Some(a)).collect();
        if left.is_empty() != right.is_empty() {
            warnings.push(format!(
                "action `{a}` is blocked: {} command(s) have no synchronization partner",
                left.len() + right.len()
            ));
        }
        for c in &left {
            for d in &right {
                commands.push(compose_commands(c, d)?);
            }
        }
    }
    Ok(FlatModule {
        modules: m1.modules.iter().chain(&m2.modules).copied().collect(),
        vars: m1.vars.union(&m2.vars).cloned().collect(),
        actions: m1.actions.union(&m2.actions).cloned().collect(),
        commands,
        warnings,
    })
}

pub fn flatten(m: &Model) -> Result<FlatModule, GclError> {
    let mut acc: Option<FlatModule> = None;
    for i in 0..m.modules.len() {
        let lifted = lift_module(m, i);
        acc = Some(match acc {
            None => lifted,
            Some(a) => compose_modules(&a, &lifted)?,
        });
    }
    Ok(acc.unwrap_or(FlatModule {
        modules: vec![],
        vars: BTreeSet::new(),
        actions: BTreeSet::new(),
        commands: vec![],
        warnings: vec![],
    }))
}
