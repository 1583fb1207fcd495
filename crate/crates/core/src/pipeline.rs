use crate::analysis;
use crate::gcl::{self, BranchRef, CommandId, Expr, GclError, Model, Prob, Update, UpdateBranch, VarDecl};
use crate::pa::{is_subsystem, Branch, LabelSet, SubPa, Transition};
use crate::scl::{self, SclConfig, SclError, SclResult};
use crate::semantics::{build_pa, target_states, Label, LabelFactory, LabelKind, LabeledPa, Rational, SemanticsError};
use num_traits::{One, Zero};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gcl(#[from] GclError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Scl(#[from] SclError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error("property: {0}")]
    Property(String),
    #[error("property holds: maximal probability {pmax} ≤ {lambda}")]
    Satisfied { pmax: String, lambda: String },
    #[error("stage `{stage}` produced a model that no longer violates the property (probability {pmax})")]
    Reverification { stage: String, pmax: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Property {
    pub lambda: Rational,
    pub target: Expr,
}

/// Accepts `P<=λ [ F expr ]` with λ a decimal or fraction.
pub fn parse_property(text: &str) -> Result<Property, PipelineError> {
    let err = |m: &str| PipelineError::Property(m.to_string());
    let rest = text.trim().strip_prefix('P').ok_or_else(|| err("expected `P<=λ [ F target ]`"))?.trim_start();
    let rest = match rest.strip_prefix("<=") {
        Some(r) => r,
        None if rest.starts_with('<') => return Err(err("only non-strict bounds `P<=λ` are supported")),
        None => return Err(err("only upper bounds `P<=λ` are supported")),
    };
    let open = rest.find('[').ok_or_else(|| err("expected `[`"))?;
    let lambda = parse_bound(rest[..open].trim()).ok_or_else(|| err("malformed probability bound"))?;
    if lambda < Rational::zero() || lambda > Rational::one() {
        return Err(err("probability bound outside [0,1]"));
    }
    let body = rest[open + 1..].trim_end();
    let body = body.strip_suffix(']').ok_or_else(|| err("expected `]`"))?.trim();
    let body = body.strip_prefix('F').ok_or_else(|| err("expected `F`"))?;
    if !body.starts_with(char::is_whitespace) && !body.starts_with('(') {
        return Err(err("expected `F`"));
    }
    let target = gcl::parse_expr(body)?;
    Ok(Property { lambda, target })
}

fn parse_bound(s: &str) -> Option<Rational> {
    match s.split_once('/') {
        Some((a, b)) => {
            let d = gcl::parser::parse_decimal_prob(b.trim())?;
            if d.is_zero() {
                return None;
            }
            Some(gcl::parser::parse_decimal_prob(a.trim())? / d)
        }
        None => gcl::parser::parse_decimal_prob(s),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRow {
    pub stage: String,
    pub labels: usize,
    pub relevant_labels: usize,
    pub states: usize,
    pub branches: usize,
    pub vars: usize,
    pub int_vars: usize,
    pub constraints: usize,
    pub time_s: f64,
    pub mem_kb: Option<u64>,
    pub n: Option<usize>,
    pub weight: Option<String>,
    pub lb: String,
    pub status: String,
    pub cuts: String,
    pub prob: Option<String>,
    pub selected: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub lambda: String,
    pub pmax: String,
    pub pmax_f64: f64,
    pub stages: Vec<StageRow>,
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = format!("P<={} violated: p_max = {} ({:.6})\n", self.lambda, self.pmax, self.pmax_f64);
        out.push_str(&format!(
            "{:<10} {:>6} {:>6} {:>7} {:>7} {:>9} {:>9} {:>8} {:>5} {:>6} {:<16} {}\n",
            "stage", "labels", "rel", "Var.", "Int.", "Constr.", "Time", "Mem.", "n", "lb", "status", "cuts"
        ));
        for r in &self.stages {
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>7} {:>7} {:>9} {:>8.2}s {:>8} {:>5} {:>6} {:<16} {}\n",
                r.stage,
                r.labels,
                r.relevant_labels,
                r.vars,
                r.int_vars,
                r.constraints,
                r.time_s,
                r.mem_kb.map_or("-".into(), |m| format!("{}M", m / 1024)),
                r.n.map_or("??".into(), |n| n.to_string()),
                r.lb,
                r.status,
                r.cuts
            ));
        }
        for r in &self.stages {
            out.push_str(&format!("{}: {}\n", r.stage, r.selected.join(" ")));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn status_name(r: &SclResult) -> String {
    match r.status {
        hlcex_milp::Status::Optimal => "optimal",
        hlcex_milp::Status::FeasibleTimeout => "feasible_timeout",
        hlcex_milp::Status::Infeasible => "infeasible",
        hlcex_milp::Status::Unbounded => "unbounded",
    }
    .to_string()
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub scl: SclConfig,
    /// Third stage selects value intervals instead of arbitrary value sets.
    pub intervals: bool,
    /// Module equivalence classes for the modules factory.
    pub module_classes: Option<Vec<Vec<usize>>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scl: SclConfig::default(),
            intervals: false,
            module_classes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Commands,
    Modules,
    Branches,
    States,
    Values,
    Intervals,
    Pipeline,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "commands" => Mode::Commands,
            "modules" => Mode::Modules,
            "branches" => Mode::Branches,
            "states" => Mode::States,
            "values" => Mode::Values,
            "intervals" => Mode::Intervals,
            "pipeline" => Mode::Pipeline,
            _ => return None,
        })
    }

    fn kind(self) -> LabelKind {
        match self {
            Mode::Commands | Mode::Pipeline => LabelKind::Commands,
            Mode::Modules => LabelKind::Modules,
            Mode::Branches => LabelKind::Branches,
            Mode::States => LabelKind::States,
            Mode::Values | Mode::Intervals => LabelKind::Values,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageOutput {
    pub lpa: LabeledPa,
    pub result: SclResult,
    pub labels: LabelSet,
    /// Simplified model; `None` for state labels, which have no model-level counterpart.
    pub model: Option<Model>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub model: Model,
    pub text: String,
    pub report: Report,
    pub stages: Vec<StageOutput>,
}

/// Exact maximal probability of the property in `model`.
pub fn check(model: &Model, prop: &Property) -> Result<(LabeledPa, Vec<bool>, Prob), PipelineError> {
    let lpa = build_pa(model, &LabelFactory::commands())?;
    let t = target_states(model, &lpa, &prop.target)?;
    let p = analysis::max_prob_init(&lpa.pa, &t)?;
    Ok((lpa, t, p))
}

fn preserved_alphabet(old: &gcl::Module, commands: &[gcl::Command]) -> BTreeSet<String> {
    let used: BTreeSet<&String> = commands.iter().filter_map(|c| c.action.as_ref()).collect();
    old.alphabet().into_iter().filter(|a| !used.contains(a)).collect()
}

/// Drops every command not in `keep`; module alphabets stay unchanged so that
/// partners of removed commands remain blocked.
pub fn remove_commands(model: &Model, keep: &BTreeSet<CommandId>) -> Model {
    let mut out = model.clone();
    for (mi, module) in out.modules.iter_mut().enumerate() {
        let old = model.modules[mi].clone();
        module.commands = old
            .commands
            .iter()
            .enumerate()
            .filter(|(ci, _)| keep.contains(&CommandId { module: mi, index: *ci }))
            .map(|(_, c)| c.clone())
            .collect();
        module.actions = preserved_alphabet(&old, &module.commands);
    }
    out
}

fn sink_name(model: &Model, module: &gcl::Module) -> String {
    if let Some(v) = module.vars.iter().find(|v| v.sink) {
        return v.name.clone();
    }
    let taken: BTreeSet<&str> = model
        .all_vars()
        .iter()
        .map(|v| v.name.as_str())
        .chain(model.formulas.iter().map(|(f, _)| f.as_str()))
        .collect();
    let base = format!("{}_sink", module.name);
    let mut name = base.clone();
    let mut k = 1;
    while taken.contains(name.as_str()) {
        name = format!("{base}{k}");
        k += 1;
    }
    name
}

/// Drops every branch not in `keep`; the missing mass of a command goes to a
/// dead sink value, so the command becomes sub-stochastic.
pub fn remove_branches(model: &Model, keep: &BTreeSet<BranchRef>) -> Model {
    let mut out = model.clone();
    for mi in 0..model.modules.len() {
        let old = &model.modules[mi];
        let sink = sink_name(model, old);
        let mut need_sink = false;
        let mut commands = vec![];
        for (ci, c) in old.commands.iter().enumerate() {
            let kept: Vec<UpdateBranch> = c
                .branches
                .iter()
                .enumerate()
                .filter(|(bi, _)| keep.contains(&BranchRef { cmd: CommandId { module: mi, index: ci }, branch: *bi }))
                .map(|(_, b)| b.clone())
                .collect();
            if kept.is_empty() {
                continue;
            }
            let mass: Prob = kept.iter().map(|b| &b.prob).sum();
            let mut branches = kept;
            if !mass.is_one() {
                need_sink = true;
                branches.push(UpdateBranch {
                    prob: Prob::one() - mass,
                    updates: vec![Update {
                        var: sink.clone(),
                        value: Expr::Bool(true),
                    }],
                });
            }
            commands.push(gcl::Command {
                action: c.action.clone(),
                guard: c.guard.clone(),
                branches,
            });
        }
        let module = &mut out.modules[mi];
        module.actions = preserved_alphabet(old, &commands);
        module.commands = commands;
        if need_sink && !module.vars.iter().any(|v| v.sink) {
            let mut d = VarDecl::boolean(&sink, false);
            d.restricted = Some(BTreeSet::from([0]));
            d.sink = true;
            module.vars.push(d);
        }
    }
    out
}

/// Restricts every non-sink variable to the given values (all its values when absent).
pub fn restrict_domains(model: &Model, values: &BTreeMap<String, BTreeSet<i64>>) -> Model {
    let mut out = model.clone();
    let restrict = |v: &mut VarDecl| {
        if v.sink {
            return;
        }
        let set = values.get(&v.name).cloned().unwrap_or_default();
        let full: BTreeSet<i64> = v.values().into_iter().collect();
        let set: BTreeSet<i64> = set.intersection(&full).copied().collect();
        if set == (v.lo..=v.hi).collect::<BTreeSet<i64>>() {
            v.restricted = None;
        } else {
            v.restricted = Some(set);
        }
    };
    for g in &mut out.globals {
        restrict(g);
    }
    for m in &mut out.modules {
        for v in &mut m.vars {
            restrict(v);
        }
    }
    out
}

fn apply_selection(model: &Model, lpa: &LabeledPa, labels: &LabelSet, intervals: bool) -> Option<Model> {
    let picked = labels.iter().map(|l| &lpa.labels[l.0 as usize]);
    match lpa.kind {
        LabelKind::Commands => {
            let keep = picked.filter_map(|l| if let Label::Command(c) = l { Some(*c) } else { None }).collect();
            Some(remove_commands(model, &keep))
        }
        LabelKind::Branches => {
            let keep = picked.filter_map(|l| if let Label::Branch(b) = l { Some(*b) } else { None }).collect();
            Some(remove_branches(model, &keep))
        }
        LabelKind::Modules => {
            let mods: BTreeSet<usize> = picked
                .filter_map(|l| if let Label::Module(c) = l { Some(*c) } else { None })
                .flat_map(|c| lpa.module_classes[c].iter().copied())
                .collect();
            let keep: BTreeSet<CommandId> = model
                .modules
                .iter()
                .enumerate()
                .filter(|(mi, _)| mods.contains(mi))
                .flat_map(|(mi, m)| (0..m.commands.len()).map(move |ci| CommandId { module: mi, index: ci }))
                .collect();
            Some(remove_commands(model, &keep))
        }
        LabelKind::Values => {
            let mut values: BTreeMap<String, BTreeSet<i64>> = BTreeMap::new();
            for l in picked {
                if let Label::Value { var, value } = l {
                    values.entry(lpa.vars[*var].name.clone()).or_default().insert(*value);
                }
            }
            if intervals {
                for set in values.values_mut() {
                    let (a, b) = (*set.first().unwrap(), *set.last().unwrap());
                    *set = (a..=b).collect();
                }
            }
            Some(restrict_domains(model, &values))
        }
        LabelKind::States => None,
    }
}

/// Maps `small` onto the state numbering of `big` via the values of shared,
/// non-sink variables and checks the subsystem relation.
pub fn is_model_subsystem(small: &LabeledPa, big: &LabeledPa) -> bool {
    let key = |lpa: &LabeledPa, s: usize| -> Vec<(String, i64)> {
        lpa.vars
            .iter()
            .zip(&lpa.states[s])
            .filter(|(d, _)| !d.sink)
            .map(|(d, v)| (d.name.clone(), *v))
            .collect()
    };
    let index: HashMap<Vec<(String, i64)>, usize> = (0..big.pa.num_states()).map(|s| (key(big, s), s)).collect();
    let mut map = vec![0; small.pa.num_states()];
    for s in 0..small.pa.num_states() {
        match index.get(&key(small, s)) {
            Some(t) => map[s] = *t,
            None => return false,
        }
    }
    let mut remapped = SubPa::new(big.pa.num_states(), map[small.pa.init]);
    for (s, ts) in small.pa.trans.iter().enumerate() {
        for t in ts {
            remapped.trans[map[s]].push(Transition {
                action: t.action.clone(),
                branches: t
                    .branches
                    .iter()
                    .map(|b| Branch {
                        target: map[b.target],
                        prob: b.prob.clone(),
                        labels: LabelSet::new(),
                    })
                    .collect(),
            });
        }
    }
    is_subsystem(&remapped, &big.pa)
}

fn run_stage(
    model: &Model,
    prop: &Property,
    factory: LabelFactory,
    cfg: &PipelineConfig,
    intervals: bool,
    name: &str,
) -> Result<(StageOutput, StageRow), PipelineError> {
    let lpa = build_pa(model, &factory)?;
    let targets = target_states(model, &lpa, &prop.target)?;
    let mut scl_cfg = cfg.scl.clone();
    scl_cfg.intervals = intervals;
    let (_, relevant_labels) = analysis::relevant_states(&lpa.pa, &targets);
    let result = scl::solve_scl(&lpa, &targets, &prop.lambda, &scl_cfg)?;
    let labels = match &result.selection {
        Some(sel) => sel.labels.clone(),
        None => relevant_labels.clone(),
    };
    let simplified = apply_selection(model, &lpa, &labels, intervals);
    if let Some(m) = &simplified {
        // Independent re-check of the emitted text.
        let reparsed = gcl::parse_model(&gcl::emit_model(m))?;
        let (_, _, p) = check(&reparsed, prop)?;
        if p <= prop.lambda {
            return Err(PipelineError::Reverification {
                stage: name.to_string(),
                pmax: p.to_string(),
            });
        }
    }
    let row = StageRow {
        stage: name.to_string(),
        labels: lpa.num_labels(),
        relevant_labels: relevant_labels.len(),
        states: lpa.pa.num_states(),
        branches: lpa.pa.num_branches(),
        vars: result.num_vars,
        int_vars: result.num_int_vars,
        constraints: result.num_constraints,
        time_s: result.elapsed.as_secs_f64(),
        mem_kb: peak_memory_kb(),
        n: result.size(),
        weight: result.selection.as_ref().map(|s| s.weight.to_string()),
        lb: result.lower_bound.to_string(),
        status: status_name(&result),
        cuts: result.cuts.to_string(),
        prob: result.selection.as_ref().map(|s| s.prob.to_string()),
        selected: labels.iter().map(|l| lpa.name(*l).to_string()).collect(),
    };
    Ok((
        StageOutput {
            lpa,
            result,
            labels,
            model: simplified,
        },
        row,
    ))
}

fn violated(model: &Model, prop: &Property) -> Result<Prob, PipelineError> {
    let (_, _, p) = check(model, prop)?;
    if p <= prop.lambda {
        return Err(PipelineError::Satisfied {
            pmax: p.to_string(),
            lambda: prop.lambda.to_string(),
        });
    }
    Ok(p)
}

fn report(prop: &Property, pmax: &Prob, stages: Vec<StageRow>) -> Report {
    Report {
        lambda: prop.lambda.to_string(),
        pmax: pmax.to_string(),
        pmax_f64: crate::encode::prob_to_f64(pmax),
        stages,
    }
}

/// Commands, then branches, then values (or intervals); each stage works on
/// the re-parsed output of the previous one.
pub fn run_pipeline(model: &Model, prop: &Property, cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    let pmax = violated(model, prop)?;
    let third = if cfg.intervals { "intervals" } else { "values" };
    let plan = [
        (LabelFactory::commands(), false, "commands"),
        (LabelFactory::branches(), false, "branches"),
        (LabelFactory::values(), cfg.intervals, third),
    ];
    let mut current = model.clone();
    let mut rows = vec![];
    let mut stages = vec![];
    for (factory, intervals, name) in plan {
        let (out, row) = run_stage(&current, prop, factory, cfg, intervals, name)?;
        current = gcl::parse_model(&gcl::emit_model(out.model.as_ref().unwrap()))?;
        rows.push(row);
        stages.push(out);
    }
    Ok(Outcome {
        text: gcl::emit_model(&current),
        model: current,
        report: report(prop, &pmax, rows),
        stages,
    })
}

/// A single SCL computation for one label kind.
pub fn run_mode(model: &Model, prop: &Property, mode: Mode, cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    if mode == Mode::Pipeline {
        return run_pipeline(model, prop, cfg);
    }
    let pmax = violated(model, prop)?;
    let factory = match mode {
        Mode::Modules => LabelFactory::modules(cfg.module_classes.clone()),
        m => LabelFactory::of(m.kind()),
    };
    let name = match mode {
        Mode::Commands => "commands",
        Mode::Modules => "modules",
        Mode::Branches => "branches",
        Mode::States => "states",
        Mode::Values => "values",
        _ => "intervals",
    };
    let (out, row) = run_stage(model, prop, factory, cfg, mode == Mode::Intervals, name)?;
    let result_model = out.model.clone().unwrap_or_else(|| model.clone());
    Ok(Outcome {
        text: gcl::emit_model(&result_model),
        model: result_model,
        report: report(prop, &pmax, vec![row]),
        stages: vec![out],
    })
}

/// Labeled PA and MILP of a single-kind run (the first stage for the pipeline).
pub fn encode_mode(
    model: &Model,
    prop: &Property,
    mode: Mode,
    cfg: &PipelineConfig,
) -> Result<(LabeledPa, Vec<bool>, crate::encode::Encoding), PipelineError> {
    violated(model, prop)?;
    let factory = match mode {
        Mode::Modules => LabelFactory::modules(cfg.module_classes.clone()),
        m => LabelFactory::of(m.kind()),
    };
    let lpa = build_pa(model, &factory)?;
    let targets = target_states(model, &lpa, &prop.target)?;
    let mut scl_cfg = cfg.scl.clone();
    scl_cfg.intervals = mode == Mode::Intervals;
    let enc = crate::encode::encode_scl(&lpa, &targets, &prop.lambda, &scl::encode_options(&lpa, &scl_cfg))
        .map_err(SclError::from)?;
    Ok((lpa, targets, enc))
}

/// Decodes an externally computed MILP solution for a single-kind run.
pub fn import_mode(
    model: &Model,
    prop: &Property,
    mode: Mode,
    cfg: &PipelineConfig,
    solution: &str,
) -> Result<(Outcome, Vec<String>), PipelineError> {
    let pmax = violated(model, prop)?;
    let (lpa, _, enc) = encode_mode(model, prop, mode, cfg)?;
    let imported = hlcex_milp::import_solution(solution, &enc.milp)
        .map_err(|e| PipelineError::Property(format!("solution file: {e}")))?;
    let sel = scl::decode_solution(&lpa, &enc, &imported.values)?;
    let simplified = apply_selection(model, &lpa, &sel.labels, mode == Mode::Intervals);
    let row = StageRow {
        stage: "imported".into(),
        labels: lpa.num_labels(),
        relevant_labels: analysis::relevant_states(&lpa.pa, &enc.targets).1.len(),
        states: lpa.pa.num_states(),
        branches: lpa.pa.num_branches(),
        vars: enc.milp.num_vars(),
        int_vars: enc.milp.num_integer_vars(),
        constraints: enc.milp.num_constraints(),
        time_s: 0.0,
        mem_kb: peak_memory_kb(),
        n: Some(sel.labels.len()),
        weight: Some(sel.weight.to_string()),
        lb: "-".into(),
        status: "imported".into(),
        cuts: enc.cuts.to_string(),
        prob: Some(sel.prob.to_string()),
        selected: sel.labels.iter().map(|l| lpa.name(*l).to_string()).collect(),
    };
    let m = simplified.unwrap_or_else(|| model.clone());
    Ok((
        Outcome {
            text: gcl::emit_model(&m),
            model: m,
            report: report(prop, &pmax, vec![row]),
            stages: vec![],
        },
        imported.warnings,
    ))
}
