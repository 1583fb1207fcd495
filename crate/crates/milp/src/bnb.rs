//! LP-based branch and bound: most-fractional branching (ties by lowest index),
//! best-bound node selection with depth-first plunging.

use crate::model::{Milp, VarKind};
use crate::scalar::Scalar;
use crate::simplex::{LpStatus, Tableau};
use num_rational::BigRational;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Arithmetic {
    #[default]
    Float,
    Rational,
}

/// Maps an incumbent (values, objective) to the node bound at or above which
/// nodes cannot contain anything better.
pub type CutoffFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SolveConfig {
    pub time_limit: Option<Duration>,
    /// Absolute gap: nodes with bound ≥ incumbent − gap_tol are pruned.
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    pub arithmetic: Arithmetic,
    /// Optional start solution; ignored unless feasible.
    pub initial: Option<Vec<f64>>,
    /// Overrides the `gap_tol` rule when set.
    pub cutoff: Option<CutoffFn>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tol: 1e-6,
            node_limit: None,
            arithmetic: Arithmetic::Float,
            initial: None,
            cutoff: None,
        }
    }
}

impl fmt::Debug for SolveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolveConfig")
            .field("time_limit", &self.time_limit)
            .field("gap_tol", &self.gap_tol)
            .field("node_limit", &self.node_limit)
            .field("arithmetic", &self.arithmetic)
            .field("initial", &self.initial.is_some())
            .field("cutoff", &self.cutoff.is_some())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// Stopped by a limit; the incumbent may be absent.
    FeasibleTimeout,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Incumbent {
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    pub elapsed: Duration,
    pub root_bound: Option<f64>,
    /// Global dual bound after every processed node.
    pub bound_history: Vec<f64>,
    /// Node LPs that needed a fresh or rational re-solve.
    pub numerical_fallbacks: usize,
    pub start_accepted: bool,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: Status,
    pub incumbent: Option<Incumbent>,
    pub lower_bound: f64,
    pub stats: SolveStats,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Exact optimum when solved in rational arithmetic.
    pub exact_objective: Option<BigRational>,
}

/// Solves the continuous relaxation.
pub fn solve_lp_relaxation(milp: &Milp, arithmetic: Arithmetic) -> LpSolution {
    match arithmetic {
        Arithmetic::Float => {
            let mut t = Tableau::<f64>::from_milp(milp);
            let status = t.solve(iteration_budget(milp));
            LpSolution {
                status,
                objective: t.objective(),
                values: t.primal(),
                exact_objective: None,
            }
        }
        Arithmetic::Rational => {
            let mut t = Tableau::<BigRational>::from_milp(milp);
            let status = t.solve(iteration_budget(milp));
            let obj = t.objective();
            LpSolution {
                status,
                objective: obj.to_f64(),
                values: t.primal().iter().map(|v| v.to_f64()).collect(),
                exact_objective: Some(obj),
            }
        }
    }
}

fn iteration_budget(milp: &Milp) -> usize {
    50 * (milp.num_vars() + milp.num_constraints()) + 10_000
}

pub fn solve(milp: &Milp, cfg: &SolveConfig) -> SolveResult {
    match cfg.arithmetic {
        Arithmetic::Float => BranchAndBound::<f64>::new(milp, cfg).run(),
        Arithmetic::Rational => BranchAndBound::<BigRational>::new(milp, cfg).run(),
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    bound: f64,
    depth: usize,
    seq: usize,
    /// Bound changes relative to the root: (column, lower, upper).
    changes: Vec<(usize, Option<T>, Option<T>)>,
}

impl<T> PartialEq for Node<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T> Eq for Node<T> {}
impl<T> PartialOrd for Node<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Node<T> {
    // BinaryHeap is a max-heap: smaller bound = higher priority, then deeper, then older
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&o.depth))
            .then(o.seq.cmp(&self.seq))
    }
}

struct BranchAndBound<'a, T: Scalar> {
    milp: &'a Milp,
    cfg: &'a SolveConfig,
    int_cols: Vec<usize>,
    incumbent: Option<Incumbent>,
    stats: SolveStats,
    start: Instant,
    seq: usize,
    global_bound: f64,
    _marker: std::marker::PhantomData<T>,
}

const INT_TOL: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-9;

impl<'a, T: Scalar> BranchAndBound<'a, T> {
    fn new(milp: &'a Milp, cfg: &'a SolveConfig) -> Self {
        let int_cols = milp
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind.is_integral())
            .map(|(i, _)| i)
            .collect();
        Self {
            milp,
            cfg,
            int_cols,
            incumbent: None,
            stats: SolveStats::default(),
            start: Instant::now(),
            seq: 0,
            global_bound: f64::NEG_INFINITY,
            _marker: std::marker::PhantomData,
        }
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            None => f64::INFINITY,
            Some(inc) => match &self.cfg.cutoff {
                Some(f) => f(&inc.values, inc.objective),
                None => inc.objective - self.cfg.gap_tol,
            },
        }
    }

    fn out_of_budget(&self) -> bool {
        if let Some(tl) = self.cfg.time_limit {
            if self.start.elapsed() >= tl {
                return true;
            }
        }
        if let Some(nl) = self.cfg.node_limit {
            if self.stats.nodes >= nl {
                return true;
            }
        }
        false
    }

    fn note_bound(&mut self, b: f64) {
        let b = match &self.incumbent {
            Some(inc) => b.min(inc.objective),
            None => b,
        };
        if b > self.global_bound {
            self.global_bound = b;
        }
        self.stats.bound_history.push(self.global_bound);
    }

    fn try_incumbent(&mut self, values: Vec<f64>) -> bool {
        if !self.milp.is_feasible(&values, FEAS_TOL, INT_TOL) {
            return false;
        }
        let objective = self.milp.objective_value(&values);
        if self.incumbent.as_ref().map_or(true, |i| objective < i.objective - 1e-12) {
            log::debug!("incumbent {objective} after {} nodes", self.stats.nodes);
            self.incumbent = Some(Incumbent { values, objective });
            return true;
        }
        false
    }

    fn budget(&self) -> usize {
        iteration_budget(self.milp)
    }

    fn run(mut self) -> SolveResult {
        let mut root = Tableau::<T>::from_milp(self.milp);
        for &j in &self.int_cols {
            let (lo, hi) = round_int_bounds(&self.milp.vars[j]);
            root.set_bounds(j, lo.map(|v| T::from_i64(v)), hi.map(|v| T::from_i64(v)));
        }
        if let Some(start) = self.cfg.initial.clone() {
            if start.len() == self.milp.num_vars() {
                let mut rounded = start;
                for &j in &self.int_cols {
                    rounded[j] = rounded[j].round();
                }
                self.stats.start_accepted = self.try_incumbent(rounded);
            }
        }
        let budget = self.budget();
        let st = root.solve(budget);
        self.stats.lp_iterations += root.iterations;
        match st {
            LpStatus::Infeasible => return self.finish(Status::Infeasible),
            LpStatus::Unbounded => return self.finish(Status::Unbounded),
            LpStatus::IterationLimit => {
                self.stats.numerical_fallbacks += 1;
                return self.finish(Status::FeasibleTimeout);
            }
            LpStatus::Optimal => {}
        }
        let root_obj = root.objective().to_f64();
        self.stats.root_bound = Some(root_obj);
        let mut heap: BinaryHeap<Node<T>> = BinaryHeap::new();
        let mut dive: Option<(Tableau<T>, Node<T>)> = Some((
            root.clone(),
            Node {
                bound: root_obj,
                depth: 0,
                seq: 0,
                changes: Vec::new(),
            },
        ));
        let mut unsafe_prunes = 0usize;
        loop {
            let open_min = heap.peek().map(|n| n.bound);
            let dive_bound = dive.as_ref().map(|d| d.1.bound);
            let current = match (open_min, dive_bound) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => f64::INFINITY,
            };
            if current.is_finite() {
                self.note_bound(current);
            }
            if dive.is_none() && heap.is_empty() {
                break;
            }
            if self.global_bound >= self.cutoff() {
                break;
            }
            if self.out_of_budget() {
                return self.finish(Status::FeasibleTimeout);
            }
            let (mut tab, node, fresh) = match dive.take() {
                Some((t, n)) => (t, n, false),
                None => {
                    let n = heap.pop().unwrap();
                    if n.bound >= self.cutoff() {
                        continue;
                    }
                    let mut t = root.clone();
                    for (j, lo, hi) in &n.changes {
                        t.set_bounds(*j, lo.clone(), hi.clone());
                    }
                    (t, n, true)
                }
            };
            self.stats.nodes += 1;
            let before = tab.iterations;
            let mut st = if node.depth == 0 && !fresh {
                LpStatus::Optimal
            } else {
                tab.solve(budget)
            };
            self.stats.lp_iterations += tab.iterations - before;
            if st == LpStatus::IterationLimit {
                self.stats.numerical_fallbacks += 1;
                let mut t = Tableau::<T>::from_milp(self.milp);
                for &j in &self.int_cols {
                    let (lo, hi) = round_int_bounds(&self.milp.vars[j]);
                    t.set_bounds(j, lo.map(|v| T::from_i64(v)), hi.map(|v| T::from_i64(v)));
                }
                for (j, lo, hi) in &node.changes {
                    t.set_bounds(*j, lo.clone(), hi.clone());
                }
                st = t.solve(budget * 4);
                tab = t;
            }
            match st {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => return self.finish(Status::Unbounded),
                LpStatus::IterationLimit => {
                    unsafe_prunes += 1;
                    continue;
                }
            }
            let obj = tab.objective().to_f64();
            if obj >= self.cutoff() {
                continue;
            }
            let mut branch = self.most_fractional(&tab, INT_TOL);
            if branch.is_none() {
                if self.accept_integral(&tab) {
                    continue;
                }
                // Nearly integral but rounding breaks feasibility: keep splitting.
                branch = self.most_fractional(&tab, 0.0);
            }
            let Some((j, v)) = branch else {
                continue;
            };
            let (lo, hi) = tab.bounds(j);
            let down = Some(T::from_i64(v.floor() as i64));
            let up = Some(T::from_i64(v.ceil() as i64));
            let depth = node.depth + 1;
            let mut down_changes = node.changes.clone();
            down_changes.push((j, lo.clone(), down.clone()));
            let mut up_changes = node.changes;
            up_changes.push((j, up.clone(), hi.clone()));
            let go_up = v - v.floor() >= 0.5;
            let (dive_lo, dive_hi, dive_changes, other_changes) = if go_up {
                (up, hi, up_changes, down_changes)
            } else {
                (lo, down, down_changes, up_changes)
            };
            self.seq += 1;
            heap.push(Node {
                bound: obj,
                depth,
                seq: self.seq,
                changes: other_changes,
            });
            tab.set_bounds(j, dive_lo, dive_hi);
            self.seq += 1;
            dive = Some((
                tab,
                Node {
                    bound: obj,
                    depth,
                    seq: self.seq,
                    changes: dive_changes,
                },
            ));
        }
        if unsafe_prunes > 0 {
            return self.finish(Status::FeasibleTimeout);
        }
        if self.incumbent.is_some() {
            self.finish(Status::Optimal)
        } else {
            self.finish(Status::Infeasible)
        }
    }

    /// Most fractional integer column above `tol`, ties by lowest index.
    fn most_fractional(&self, tab: &Tableau<T>, tol: f64) -> Option<(usize, f64)> {
        let mut branch: Option<(usize, f64, f64)> = None;
        for &j in &self.int_cols {
            let v = tab.value_of(j).to_f64();
            let f = v - v.floor();
            let score = f.min(1.0 - f);
            if score > tol && branch.map_or(true, |(_, s, _)| score > s + 1e-12) {
                branch = Some((j, score, v));
            }
        }
        branch.map(|(j, _, v)| (j, v))
    }

    /// Fixes the integer columns at their rounded values and re-solves so the
    /// continuous part is consistent with exactly integral values. Returns whether
    /// the rounded point is feasible.
    fn accept_integral(&mut self, tab: &Tableau<T>) -> bool {
        let mut polished = tab.clone();
        for &j in &self.int_cols {
            let v = T::from_i64(polished.value_of(j).to_f64().round() as i64);
            polished.set_bounds(j, Some(v.clone()), Some(v));
        }
        let before = polished.iterations;
        let st = polished.solve(self.budget());
        self.stats.lp_iterations += polished.iterations - before;
        let values: Vec<f64> = if st == LpStatus::Optimal {
            polished.primal().iter().map(|v| v.to_f64()).collect()
        } else {
            tab.primal().iter().map(|v| v.to_f64()).collect()
        };
        let mut values = values;
        for &j in &self.int_cols {
            values[j] = values[j].round();
        }
        if !self.milp.is_feasible(&values, FEAS_TOL, INT_TOL) {
            return false;
        }
        self.try_incumbent(values);
        true
    }

    fn finish(mut self, status: Status) -> SolveResult {
        self.stats.elapsed = self.start.elapsed();
        let lower_bound = match (status, &self.incumbent) {
            (Status::Optimal, Some(inc)) => inc.objective,
            (Status::Infeasible, _) => f64::INFINITY,
            (Status::Unbounded, _) => f64::NEG_INFINITY,
            (_, Some(inc)) => self.global_bound.min(inc.objective),
            (_, None) => self.global_bound,
        };
        SolveResult {
            status,
            incumbent: self.incumbent,
            lower_bound,
            stats: self.stats,
        }
    }
}

fn round_int_bounds(v: &crate::model::Variable) -> (Option<i64>, Option<i64>) {
    use num_traits::ToPrimitive;
    let lo = v.lower.as_ref().and_then(|l| l.ceil().to_integer().to_i64());
    let hi = v.upper.as_ref().and_then(|h| h.floor().to_integer().to_i64());
    match v.kind {
        VarKind::Binary => (Some(lo.unwrap_or(0).max(0)), Some(hi.unwrap_or(1).min(1))),
        _ => (lo, hi),
    }
}
