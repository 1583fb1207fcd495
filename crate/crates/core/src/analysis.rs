use crate::gcl::Prob;
use crate::pa::{LabelSet, Scheduler, StateId, SubPa, Transition};
use num_traits::{One, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

pub const VI_EPSILON: f64 = 1e-9;
pub const VI_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReachMethod {
    ValueIteration,
    /// Exact policy iteration over rationals.
    LinearProgram,
}

#[derive(Clone, Debug)]
pub struct ReachResult {
    pub prob: Vec<f64>,
    pub exact: Option<Vec<Prob>>,
    pub sched: Scheduler,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
}

impl ReachResult {
    pub fn at(&self, s: StateId) -> f64 {
        self.prob[s]
    }
}

fn to_f64(p: &Prob) -> f64 {
    p.to_f64().unwrap_or(f64::NAN)
}

/// States that can reach `targets` in the branch graph.
pub fn backward_reachable(pa: &SubPa, targets: &[bool]) -> Vec<bool> {
    let pred = pa.predecessors();
    let mut seen = targets.to_vec();
    let mut stack: Vec<StateId> = (0..pa.num_states()).filter(|&s| targets[s]).collect();
    while let Some(s) = stack.pop() {
        for &p in &pred[s] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

fn value_f64(t: &Transition, v: &[f64]) -> f64 {
    t.branches.iter().map(|b| to_f64(&b.prob) * v[b.target]).sum()
}

fn value_exact(t: &Transition, v: &[Prob]) -> Prob {
    t.branches.iter().map(|b| &b.prob * &v[b.target]).sum()
}

/// A scheduler attaining `v` (up to `tol`) that reaches the targets from every
/// positive state: argmax transitions are fixed outward from the target set.
pub fn attractor_scheduler(pa: &SubPa, targets: &[bool], v: &[f64], tol: f64) -> Scheduler {
    let n = pa.num_states();
    let mut sched = Scheduler::empty(n);
    let mut done: Vec<bool> = targets.to_vec();
    let pred = pa.predecessors();
    let mut queue: VecDeque<StateId> = (0..n).filter(|&s| targets[s]).collect();
    while let Some(u) = queue.pop_front() {
        for &s in &pred[u] {
            if done[s] || v[s] <= 0.0 {
                continue;
            }
            let pick = pa.trans[s].iter().position(|t| {
                value_f64(t, v) >= v[s] - tol && t.branches.iter().any(|b| done[b.target])
            });
            if let Some(i) = pick {
                sched.choice[s] = Some(i);
                done[s] = true;
                queue.push_back(s);
            }
        }
    }
    sched
}

pub fn value_iteration(pa: &SubPa, targets: &[bool], eps: f64) -> Result<ReachResult, AnalysisError> {
    let n = pa.num_states();
    let can = backward_reachable(pa, targets);
    let mut v: Vec<f64> = (0..n).map(|s| if targets[s] { 1.0 } else { 0.0 }).collect();
    let active: Vec<StateId> = (0..n).filter(|&s| can[s] && !targets[s]).collect();
    let mut residual = 0.0;
    for it in 1..=VI_MAX_ITERATIONS {
        residual = 0.0f64;
        for &s in &active {
            let best = pa.trans[s].iter().map(|t| value_f64(t, &v)).fold(0.0, f64::max);
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual < eps {
            let sched = attractor_scheduler(pa, targets, &v, 1e-7);
            return Ok(ReachResult {
                prob: v,
                exact: None,
                sched,
                converged: true,
                residual,
                iterations: it,
            });
        }
    }
    Err(AnalysisError::NotConverged {
        iterations: VI_MAX_ITERATIONS,
        residual,
    })
}

/// Exact reachability probabilities of the Markov chain induced by `sched`.
pub fn evaluate_scheduler(pa: &SubPa, targets: &[bool], sched: &Scheduler) -> Vec<Prob> {
    let n = pa.num_states();
    let chosen = |s: StateId| sched.choice[s].map(|i| &pa.trans[s][i]);
    // States reaching the targets along chosen transitions.
    let mut reach = targets.to_vec();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if !reach[s] {
                if let Some(t) = chosen(s) {
                    if t.branches.iter().any(|b| reach[b.target]) {
                        reach[s] = true;
                        changed = true;
                    }
                }
            }
        }
    }
    let unknowns: Vec<StateId> = (0..n).filter(|&s| reach[s] && !targets[s]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in unknowns.iter().enumerate() {
        local[s] = i;
    }
    let mut rows: Vec<BTreeMap<usize, Prob>> = vec![BTreeMap::new(); unknowns.len()];
    let mut rhs: Vec<Prob> = vec![Prob::zero(); unknowns.len()];
    for (i, &s) in unknowns.iter().enumerate() {
        *rows[i].entry(i).or_insert_with(Prob::zero) += Prob::one();
        for b in &chosen(s).unwrap().branches {
            if targets[b.target] {
                rhs[i] += &b.prob;
            } else if reach[b.target] {
                *rows[i].entry(local[b.target]).or_insert_with(Prob::zero) -= &b.prob;
            }
        }
    }
    let x = solve_sparse(rows, rhs);
    let mut out: Vec<Prob> = (0..n).map(|s| if targets[s] { Prob::one() } else { Prob::zero() }).collect();
    for (i, &s) in unknowns.iter().enumerate() {
        out[s] = x[i].clone();
    }
    out
}

/// Gaussian elimination without pivoting; valid for the nonsingular M-matrices
/// arising from transient Markov chains.
fn solve_sparse(mut rows: Vec<BTreeMap<usize, Prob>>, mut rhs: Vec<Prob>) -> Vec<Prob> {
    let n = rows.len();
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, r) in rows.iter().enumerate() {
        for &j in r.keys() {
            col_rows[j].insert(i);
        }
    }
    for k in 0..n {
        let pivot = rows[k].remove(&k).expect("singular system");
        let inv = Prob::one() / pivot;
        for v in rows[k].values_mut() {
            *v *= &inv;
        }
        rhs[k] *= &inv;
        rows[k].insert(k, Prob::one());
        let below: Vec<usize> = col_rows[k].range(k + 1..).copied().collect();
        let pivot_row: Vec<(usize, Prob)> = rows[k]
            .iter()
            .filter(|(j, _)| **j != k)
            .map(|(j, v)| (*j, v.clone()))
            .collect();
        for i in below {
            let Some(f) = rows[i].remove(&k) else { continue };
            col_rows[k].remove(&i);
            for (j, v) in &pivot_row {
                let e = rows[i].entry(*j).or_insert_with(Prob::zero);
                *e -= &f * v;
                if e.is_zero() {
                    rows[i].remove(j);
                    col_rows[*j].remove(&i);
                } else {
                    col_rows[*j].insert(i);
                }
            }
            let d = &f * &rhs[k];
            rhs[i] -= d;
        }
    }
    let mut x = vec![Prob::zero(); n];
    for k in (0..n).rev() {
        let mut v = rhs[k].clone();
        for (j, a) in &rows[k] {
            if *j > k {
                v -= a * &x[*j];
            }
        }
        x[k] = v;
    }
    x
}

pub fn policy_iteration(pa: &SubPa, targets: &[bool]) -> Result<ReachResult, AnalysisError> {
    let n = pa.num_states();
    let can = backward_reachable(pa, targets);
    let start = value_iteration(pa, targets, VI_EPSILON)?;
    let mut sched = start.sched;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let v = evaluate_scheduler(pa, targets, &sched);
        let mut improved = false;
        for s in 0..n {
            if targets[s] || !can[s] {
                continue;
            }
            let mut best = v[s].clone();
            let mut pick = None;
            for (i, t) in pa.trans[s].iter().enumerate() {
                let q = value_exact(t, &v);
                if q > best {
                    best = q;
                    pick = Some(i);
                }
            }
            if let Some(i) = pick {
                sched.choice[s] = Some(i);
                improved = true;
            }
        }
        if !improved {
            for s in 0..n {
                if v[s].is_zero() {
                    sched.choice[s] = None;
                }
            }
            return Ok(ReachResult {
                prob: v.iter().map(to_f64).collect(),
                exact: Some(v),
                sched,
                converged: true,
                residual: 0.0,
                iterations,
            });
        }
    }
}

pub fn max_reach_prob(pa: &SubPa, targets: &[bool], method: ReachMethod) -> Result<ReachResult, AnalysisError> {
    match method {
        ReachMethod::ValueIteration => value_iteration(pa, targets, VI_EPSILON),
        ReachMethod::LinearProgram => policy_iteration(pa, targets),
    }
}

/// Exact maximal probability of reaching the targets from the initial state.
pub fn max_prob_init(pa: &SubPa, targets: &[bool]) -> Result<Prob, AnalysisError> {
    if targets[pa.init] {
        return Ok(Prob::one());
    }
    if !backward_reachable(pa, targets)[pa.init] {
        return Ok(Prob::zero());
    }
    let r = policy_iteration(pa, targets)?;
    Ok(r.exact.unwrap()[pa.init].clone())
}

#[derive(Clone, Debug)]
pub struct StateClasses {
    pub relevant: Vec<bool>,
    pub relevant_labels: LabelSet,
    pub problematic: Vec<bool>,
    pub problematic_pairs: Vec<(StateId, usize)>,
}

pub fn relevant_states(pa: &SubPa, targets: &[bool]) -> (Vec<bool>, LabelSet) {
    let fwd = pa.reachable_from_init();
    let bwd = backward_reachable(pa, targets);
    let rel: Vec<bool> = fwd.iter().zip(&bwd).map(|(a, b)| *a && *b).collect();
    let mut labels = LabelSet::new();
    if rel[pa.init] {
        labels.extend(pa.init_labels.iter().copied());
    }
    for (s, ts) in pa.trans.iter().enumerate() {
        if !rel[s] {
            continue;
        }
        for t in ts {
            for b in &t.branches {
                if rel[b.target] {
                    labels.extend(b.labels.iter().copied());
                }
            }
        }
    }
    (rel, labels)
}

/// The part of the PA the SCL encoding works on: only relevant non-target states
/// keep transitions, branches only lead to relevant states, and transitions left
/// without branches disappear. `orig` maps kept transitions to their original index.
#[derive(Clone, Debug)]
pub struct Restricted {
    pub pa: SubPa,
    pub orig: Vec<Vec<usize>>,
}

pub fn restrict_to_relevant(pa: &SubPa, targets: &[bool], relevant: &[bool]) -> Restricted {
    let mut out = SubPa::new(pa.num_states(), pa.init);
    out.init_labels = pa.init_labels.clone();
    let mut orig = vec![vec![]; pa.num_states()];
    for (s, ts) in pa.trans.iter().enumerate() {
        if !relevant[s] || targets[s] {
            continue;
        }
        for (i, t) in ts.iter().enumerate() {
            let branches: Vec<_> = t.branches.iter().filter(|b| relevant[b.target]).cloned().collect();
            if !branches.is_empty() {
                out.trans[s].push(Transition {
                    action: t.action.clone(),
                    branches,
                });
                orig[s].push(i);
            }
        }
    }
    Restricted { pa: out, orig }
}

/// Greatest set of relevant non-target states in which some transition keeps
/// its whole (relevant) support inside the set.
pub fn problematic_states(pa: &SubPa, targets: &[bool], relevant: &[bool]) -> Vec<bool> {
    let r = restrict_to_relevant(pa, targets, relevant);
    let mut u: Vec<bool> = (0..pa.num_states()).map(|s| relevant[s] && !targets[s]).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..pa.num_states() {
            if u[s] && !r.pa.trans[s].iter().any(|t| t.support().all(|x| u[x])) {
                u[s] = false;
                changed = true;
            }
        }
    }
    u
}

/// Pairs (state, original transition index) whose relevant support stays problematic.
pub fn problematic_pairs(pa: &SubPa, targets: &[bool], relevant: &[bool], problematic: &[bool]) -> Vec<(StateId, usize)> {
    let r = restrict_to_relevant(pa, targets, relevant);
    let mut out = vec![];
    for s in 0..pa.num_states() {
        if !problematic[s] {
            continue;
        }
        for (k, t) in r.pa.trans[s].iter().enumerate() {
            if t.support().all(|x| problematic[x]) {
                out.push((s, r.orig[s][k]));
            }
        }
    }
    out
}

pub fn classify(pa: &SubPa, targets: &[bool]) -> StateClasses {
    let (relevant, relevant_labels) = relevant_states(pa, targets);
    let problematic = problematic_states(pa, targets, &relevant);
    let problematic_pairs = problematic_pairs(pa, targets, &relevant, &problematic);
    StateClasses {
        relevant,
        relevant_labels,
        problematic,
        problematic_pairs,
    }
}
