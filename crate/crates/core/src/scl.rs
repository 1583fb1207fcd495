use crate::analysis::{self, AnalysisError};
use crate::encode::{self, selected_labels, CutConfig, EncodeError, EncodeOptions, Encoding};
use crate::gcl::Prob;
use crate::pa::{induced_by_labels, induced_by_labels_map, LabelId, LabelSet, StateId, SubPa};
use crate::semantics::{Label, LabelKind, LabeledPa, Rational};
use hlcex_milp::{Arithmetic, CutoffFn, SolveConfig, SolveStats, Status};
use num_traits::{ToPrimitive, Zero};
use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SclError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("MILP is infeasible although the property is violated")]
    Infeasible,
    #[error("MILP is unbounded")]
    Unbounded,
    #[error("decoded label set is not critical: probability {0} does not exceed the bound")]
    NotCritical(String),
}

#[derive(Clone, Debug)]
pub struct SclConfig {
    pub cuts: CutConfig,
    pub delta_lambda: Rational,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub arithmetic: Arithmetic,
    /// Seed the solver with a greedily minimized critical set.
    pub mip_start: bool,
    pub intervals: bool,
}

impl Default for SclConfig {
    fn default() -> Self {
        SclConfig {
            cuts: CutConfig::all(),
            delta_lambda: EncodeOptions::default().delta_lambda,
            time_limit: None,
            node_limit: None,
            arithmetic: Arithmetic::Float,
            mip_start: true,
            intervals: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub labels: LabelSet,
    pub weight: Rational,
    pub induced: SubPa,
    pub prob: Prob,
}

#[derive(Clone, Debug)]
pub struct SclResult {
    pub status: Status,
    /// Absent when the solver stopped before finding any solution.
    pub selection: Option<Selection>,
    pub objective: Option<f64>,
    /// Proven lower bound on the weight of every critical set.
    pub lower_bound: Rational,
    pub num_vars: usize,
    pub num_int_vars: usize,
    pub num_constraints: usize,
    pub root_bound: Option<f64>,
    pub stats: SolveStats,
    pub elapsed: Duration,
    pub cuts: CutConfig,
}

impl SclResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn size(&self) -> Option<usize> {
        self.selection.as_ref().map(|s| s.labels.len())
    }
}

pub fn encode_options(lpa: &LabeledPa, cfg: &SclConfig) -> EncodeOptions {
    EncodeOptions {
        delta_lambda: cfg.delta_lambda.clone(),
        cuts: cfg.cuts,
        intervals: cfg.intervals,
    }
    .tap_kind(lpa.kind)
}

trait TapKind {
    fn tap_kind(self, kind: LabelKind) -> Self;
}

impl TapKind for EncodeOptions {
    fn tap_kind(mut self, kind: LabelKind) -> Self {
        if self.intervals && self.cuts.label {
            log::info!("label cuts are not valid for interval selection; disabled");
        }
        self.cuts = self.cuts.effective(kind, self.intervals);
        self
    }
}

fn rat_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Smallest multiple of `g` that is ≥ `x` (up to float slack).
fn ceil_to(x: f64, g: &Rational) -> Rational {
    let gf = rat_f64(g);
    let k = (x / gf - 1e-6).ceil().max(0.0);
    g * Rational::from_integer((k as i64).into())
}

/// Largest weight of labels appearing in a decoded set, lower bound from the
/// MILP bound: every remaining solution has `obj ≥ B` and `obj ≤ W − w_min/2·(λ+δ)`.
fn weight_lower_bound(enc: &Encoding, bound: f64) -> Rational {
    let slack = rat_f64(&enc.w_min) / 2.0 * rat_f64(&(&enc.lambda + &enc.delta_lambda));
    ceil_to(bound + slack, &enc.granularity)
}

pub fn decode_solution(lpa: &LabeledPa, enc: &Encoding, values: &[f64]) -> Result<Selection, SclError> {
    let labels = selected_labels(enc, values);
    selection_for(lpa, &enc.targets, &enc.lambda, labels)
}

pub fn selection_for(lpa: &LabeledPa, targets: &[bool], lambda: &Rational, labels: LabelSet) -> Result<Selection, SclError> {
    let induced = induced_by_labels(&lpa.pa, &labels);
    let prob = analysis::max_prob_init(&induced, targets)?;
    if prob <= *lambda {
        return Err(SclError::NotCritical(prob.to_string()));
    }
    Ok(Selection {
        weight: lpa.total_weight(&labels),
        labels,
        induced,
        prob,
    })
}

fn float_pmax(pa: &SubPa, targets: &[bool]) -> f64 {
    if targets[pa.init] {
        return 1.0;
    }
    analysis::value_iteration(pa, targets, 1e-10)
        .map(|r| r.prob[pa.init])
        .unwrap_or(0.0)
}

/// Greedy removal of labels (heaviest first) while the set stays critical.
pub fn greedy_critical_set(lpa: &LabeledPa, enc: &Encoding) -> LabelSet {
    let threshold = rat_f64(&(&enc.lambda + &enc.delta_lambda)) + 1e-9;
    let mut set: LabelSet = enc.maps.x.keys().copied().collect();
    let mut order: Vec<LabelId> = set.iter().copied().filter(|l| !lpa.pa.init_labels.contains(l)).collect();
    order.sort_by(|a, b| lpa.weight(*b).cmp(lpa.weight(*a)).then(a.cmp(b)));
    if enc.maps.h_lo.is_empty() {
        for l in order {
            set.remove(&l);
            if float_pmax(&induced_by_labels(&lpa.pa, &set), &enc.targets) <= threshold {
                set.insert(l);
            }
        }
        return set;
    }
    // Interval mode: only shrink value ranges from their ends.
    let mut per_var: BTreeMap<usize, Vec<(i64, LabelId)>> = BTreeMap::new();
    for l in &set {
        if let Label::Value { var, value } = lpa.labels[l.0 as usize] {
            per_var.entry(var).or_default().push((value, *l));
        }
    }
    for vals in per_var.values_mut() {
        vals.sort();
    }
    loop {
        let mut progress = false;
        for vals in per_var.values_mut() {
            for end in [0usize, 1] {
                while vals.len() > 1 {
                    let idx = if end == 0 { 0 } else { vals.len() - 1 };
                    let l = vals[idx].1;
                    if lpa.pa.init_labels.contains(&l) {
                        break;
                    }
                    set.remove(&l);
                    if float_pmax(&induced_by_labels(&lpa.pa, &set), &enc.targets) > threshold {
                        vals.remove(idx);
                        progress = true;
                    } else {
                        set.insert(l);
                        break;
                    }
                }
            }
        }
        if !progress {
            return set;
        }
    }
}

/// A MILP assignment realizing a critical set via an optimal scheduler of the
/// induced system, restricted to what that scheduler actually uses.
pub fn assignment_for(lpa: &LabeledPa, enc: &Encoding, set: &LabelSet) -> Option<Vec<f64>> {
    let (induced, map) = induced_by_labels_map(&enc.restricted.pa, set);
    let targets = &enc.targets;
    let r = analysis::policy_iteration(&induced, targets).ok()?;
    let probs = r.exact?;
    let init = induced.init;
    if probs[init] < &enc.lambda + &enc.delta_lambda {
        return None;
    }
    let n = induced.num_states();
    // States reachable from init under the scheduler with positive probability.
    let mut dom = vec![false; n];
    dom[init] = true;
    let mut queue = VecDeque::from([init]);
    while let Some(s) = queue.pop_front() {
        if targets[s] {
            continue;
        }
        let Some(k) = r.sched.choice[s] else { continue };
        for b in &induced.trans[s][k].branches {
            if !dom[b.target] && !probs[b.target].is_zero() {
                dom[b.target] = true;
                queue.push_back(b.target);
            }
        }
    }
    let mut values = vec![0.0; enc.milp.num_vars()];
    let mut used = lpa.pa.init_labels.clone();
    let mut chosen: BTreeMap<StateId, usize> = BTreeMap::new();
    for s in 0..n {
        if let Some(v) = enc.maps.p.get(&s) {
            if dom[s] || targets[s] {
                values[v.0] = rat_f64(&probs[s]);
            }
        }
        if !dom[s] || targets[s] {
            continue;
        }
        let Some(k) = r.sched.choice[s] else { continue };
        if probs[s].is_zero() {
            continue;
        }
        let orig_in_restricted = map[s][k];
        let i = enc.restricted.orig[s][orig_in_restricted];
        chosen.insert(s, i);
        values[enc.maps.sigma[&(s, i)].0] = 1.0;
        for b in &induced.trans[s][k].branches {
            values[enc.maps.p_branch[&(s, i, b.target)].0] = rat_f64(&(&b.prob * &probs[b.target]));
            used.extend(b.labels.iter().copied());
        }
    }
    // Increasing paths: distance to the targets along chosen transitions.
    if !enc.maps.r.is_empty() {
        let mut dist: BTreeMap<StateId, usize> = BTreeMap::new();
        let mut next_hop: BTreeMap<StateId, StateId> = BTreeMap::new();
        let mut frontier: VecDeque<StateId> = (0..n).filter(|s| targets[*s]).collect();
        for s in &frontier {
            dist.insert(*s, 0);
        }
        let mut pred: Vec<Vec<StateId>> = vec![vec![]; n];
        for (s, i) in &chosen {
            let k = enc.restricted.orig[*s].iter().position(|x| x == i).unwrap();
            for x in enc.restricted.pa.trans[*s][k].support() {
                if !probs[x].is_zero() {
                    pred[x].push(*s);
                }
            }
        }
        while let Some(u) = frontier.pop_front() {
            let du = dist[&u];
            for &s in &pred[u] {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(s) {
                    e.insert(du + 1);
                    next_hop.insert(s, u);
                    frontier.push_back(s);
                }
            }
        }
        // r decreases by δ_r along each problematic step towards the targets.
        let mut order: Vec<StateId> = dist.keys().copied().collect();
        order.sort_by_key(|s| dist[s]);
        let mut rank: BTreeMap<StateId, Rational> = BTreeMap::new();
        for s in order {
            if !enc.classes.problematic[s] {
                continue;
            }
            let hop = next_hop[&s];
            let base = if enc.classes.problematic[hop] {
                rank[&hop].clone()
            } else {
                Rational::from_integer(1.into()) + &enc.delta_r
            };
            let rs = base - &enc.delta_r;
            values[enc.maps.r[&s].0] = rat_f64(&rs);
            rank.insert(s, rs);
            if let Some(i) = chosen.get(&s) {
                if let Some(t) = enc.maps.t.get(&(s, *i, hop)) {
                    values[t.0] = 1.0;
                }
            }
        }
        for (s, v) in &enc.maps.r {
            if !rank.contains_key(s) {
                values[v.0] = 1.0;
            }
        }
    }
    for (l, v) in &enc.maps.x {
        if used.contains(l) {
            values[v.0] = 1.0;
        }
    }
    if !enc.maps.h_lo.is_empty() {
        let mut range: BTreeMap<usize, (i64, i64)> = BTreeMap::new();
        for l in &used {
            if let Label::Value { var, value } = lpa.labels[l.0 as usize] {
                let e = range.entry(var).or_insert((value, value));
                e.0 = e.0.min(value);
                e.1 = e.1.max(value);
            }
        }
        for (&(var, value), &lo) in &enc.maps.h_lo {
            let hi = enc.maps.h_hi[&(var, value)];
            match range.get(&var) {
                Some(&(a, _)) if value < a => values[lo.0] = 1.0,
                Some(&(_, b)) if value > b => values[hi.0] = 1.0,
                Some(_) => {}
                None => values[lo.0] = 1.0,
            }
        }
        for (id, l) in lpa.labels.iter().enumerate() {
            if let Label::Value { var, value } = l {
                if let (Some(&(a, b)), Some(x)) = (range.get(var), enc.maps.x.get(&LabelId(id as u32))) {
                    if a <= *value && *value <= b {
                        values[x.0] = 1.0;
                    }
                }
            }
        }
    }
    Some(values)
}

pub fn solve_encoded(lpa: &LabeledPa, enc: &Encoding, cfg: &SclConfig) -> Result<SclResult, SclError> {
    let start = Instant::now();
    let mut solve_cfg = SolveConfig {
        time_limit: cfg.time_limit,
        node_limit: cfg.node_limit,
        arithmetic: cfg.arithmetic,
        ..SolveConfig::default()
    };
    if cfg.mip_start {
        let set = greedy_critical_set(lpa, enc);
        solve_cfg.initial = assignment_for(lpa, enc, &set);
        if solve_cfg.initial.is_none() {
            log::warn!("greedy start could not be turned into a MILP assignment");
        }
    }
    let weights: Vec<(usize, f64)> = enc.maps.x.iter().map(|(l, v)| (v.0, rat_f64(lpa.weight(*l)))).collect();
    let g = rat_f64(&enc.granularity);
    let slack = rat_f64(&enc.w_min) / 2.0 * rat_f64(&(&enc.lambda + &enc.delta_lambda));
    let cutoff: CutoffFn = Arc::new(move |values: &[f64], _obj: f64| {
        let w: f64 = weights.iter().filter(|(j, _)| values[*j] > 0.5).map(|(_, w)| w).sum();
        w - g - slack + 1e-7
    });
    solve_cfg.cutoff = Some(cutoff);
    let res = hlcex_milp::solve(&enc.milp, &solve_cfg);
    let (selection, objective) = match (&res.status, &res.incumbent) {
        (Status::Infeasible, _) => return Err(SclError::Infeasible),
        (Status::Unbounded, _) => return Err(SclError::Unbounded),
        (_, Some(inc)) => (Some(decode_solution(lpa, enc, &inc.values)?), Some(inc.objective)),
        (_, None) => (None, None),
    };
    let lower_bound = match (&res.status, &selection) {
        (Status::Optimal, Some(sel)) => sel.weight.clone(),
        (_, Some(sel)) => weight_lower_bound(enc, res.lower_bound).min(sel.weight.clone()),
        (_, None) => weight_lower_bound(enc, res.lower_bound),
    };
    Ok(SclResult {
        status: res.status,
        selection,
        objective,
        lower_bound,
        num_vars: enc.milp.num_vars(),
        num_int_vars: enc.milp.num_integer_vars(),
        num_constraints: enc.milp.num_constraints(),
        root_bound: res.stats.root_bound,
        stats: res.stats,
        elapsed: start.elapsed(),
        cuts: enc.cuts,
    })
}

pub fn solve_scl(lpa: &LabeledPa, targets: &[bool], lambda: &Rational, cfg: &SclConfig) -> Result<SclResult, SclError> {
    let enc = encode::encode_scl(lpa, targets, lambda, &encode_options(lpa, cfg))?;
    solve_encoded(lpa, &enc, cfg)
}
