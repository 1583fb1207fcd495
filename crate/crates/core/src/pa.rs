use crate::gcl::Prob;
use num_traits::{One, Zero};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt::Write;

pub type StateId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LabelId(pub u32);

pub type LabelSet = BTreeSet<LabelId>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub target: StateId,
    pub prob: Prob,
    pub labels: LabelSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    /// `None` is τ.
    pub action: Option<String>,
    pub branches: Vec<Branch>,
}

impl Transition {
    pub fn mass(&self) -> Prob {
        self.branches.iter().map(|b| &b.prob).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.branches.iter().map(|b| b.target)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubPa {
    pub init: StateId,
    pub trans: Vec<Vec<Transition>>,
    /// Labels attached to the initial state itself; removing any of them removes init's behaviour.
    pub init_labels: LabelSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Scheduler {
    pub choice: Vec<Option<usize>>,
}

impl Scheduler {
    pub fn empty(n: usize) -> Self {
        Scheduler { choice: vec![None; n] }
    }

    pub fn is_valid_for(&self, pa: &SubPa) -> bool {
        self.choice.len() == pa.num_states()
            && self
                .choice
                .iter()
                .enumerate()
                .all(|(s, c)| c.map_or(true, |i| i < pa.trans[s].len()))
    }
}

impl SubPa {
    pub fn new(num_states: usize, init: StateId) -> Self {
        SubPa {
            init,
            trans: vec![vec![]; num_states],
            init_labels: LabelSet::new(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.trans.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.trans.iter().map(|t| t.len()).sum()
    }

    pub fn num_branches(&self) -> usize {
        self.trans.iter().flatten().map(|t| t.branches.len()).sum()
    }

    pub fn labels(&self) -> LabelSet {
        let mut out = self.init_labels.clone();
        for t in self.trans.iter().flatten() {
            for b in &t.branches {
                out.extend(b.labels.iter().copied());
            }
        }
        out
    }

    pub fn is_pa(&self) -> bool {
        self.trans
            .iter()
            .all(|ts| !ts.is_empty() && ts.iter().all(|t| t.mass().is_one()))
    }

    pub fn predecessors(&self) -> Vec<Vec<StateId>> {
        let mut pred = vec![vec![]; self.num_states()];
        for (s, ts) in self.trans.iter().enumerate() {
            for t in ts {
                for b in &t.branches {
                    pred[b.target].push(s);
                }
            }
        }
        for p in &mut pred {
            p.sort_unstable();
            p.dedup();
        }
        pred
    }

    pub fn reachable_from_init(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        seen[self.init] = true;
        let mut stack = vec![self.init];
        while let Some(s) = stack.pop() {
            for t in &self.trans[s] {
                for b in &t.branches {
                    if !seen[b.target] {
                        seen[b.target] = true;
                        stack.push(b.target);
                    }
                }
            }
        }
        seen
    }
}

/// Adds a sink (the last state) absorbing missing mass and deadlocks.
pub fn complete_to_pa(m: &SubPa) -> SubPa {
    let sink = m.num_states();
    let mut out = m.clone();
    let to_sink = |p: Prob| Transition {
        action: None,
        branches: vec![Branch {
            target: sink,
            prob: p,
            labels: LabelSet::new(),
        }],
    };
    for ts in &mut out.trans {
        if ts.is_empty() {
            ts.push(to_sink(Prob::one()));
        }
        for t in ts.iter_mut() {
            let rest = Prob::one() - t.mass();
            if rest > Prob::zero() {
                t.branches.push(Branch {
                    target: sink,
                    prob: rest,
                    labels: LabelSet::new(),
                });
            }
        }
    }
    out.trans.push(vec![to_sink(Prob::one())]);
    out
}

/// Restriction to `labset`, also returning each surviving transition's original index.
pub fn induced_by_labels_map(pa: &SubPa, labset: &LabelSet) -> (SubPa, Vec<Vec<usize>>) {
    let init_ok = pa.init_labels.is_subset(labset);
    let mut out = SubPa::new(pa.num_states(), pa.init);
    out.init_labels = pa.init_labels.clone();
    let mut map = vec![vec![]; pa.num_states()];
    for (s, ts) in pa.trans.iter().enumerate() {
        if s == pa.init && !init_ok {
            continue;
        }
        for (i, t) in ts.iter().enumerate() {
            let branches: Vec<Branch> = t
                .branches
                .iter()
                .filter(|b| b.labels.is_subset(labset))
                .cloned()
                .collect();
            if !branches.is_empty() {
                out.trans[s].push(Transition {
                    action: t.action.clone(),
                    branches,
                });
                map[s].push(i);
            }
        }
    }
    (out, map)
}

pub fn induced_by_labels(pa: &SubPa, labset: &LabelSet) -> SubPa {
    induced_by_labels_map(pa, labset).0
}

pub fn induced_by_scheduler(pa: &SubPa, sched: &Scheduler) -> SubPa {
    let mut out = SubPa::new(pa.num_states(), pa.init);
    out.init_labels = pa.init_labels.clone();
    for (s, c) in sched.choice.iter().enumerate() {
        if let Some(i) = c {
            out.trans[s].push(pa.trans[s][*i].clone());
        }
    }
    out
}

fn embeds(small: &Transition, big: &Transition) -> bool {
    small.action == big.action
        && small.branches.iter().all(|b| {
            big.branches
                .iter()
                .any(|c| c.target == b.target && c.prob == b.prob)
        })
}

/// Whether `a` is a subsystem of `b`: states are identified by id and each state's
/// transitions inject into `b`'s with equal actions and equal-or-dropped branch probabilities.
pub fn is_subsystem(a: &SubPa, b: &SubPa) -> bool {
    if a.init != b.init || a.num_states() > b.num_states() {
        return false;
    }
    a.trans.iter().enumerate().all(|(s, ts)| {
        let big = &b.trans[s];
        let mut owner: Vec<Option<usize>> = vec![None; big.len()];
        fn augment(
            i: usize,
            ts: &[Transition],
            big: &[Transition],
            owner: &mut Vec<Option<usize>>,
            seen: &mut Vec<bool>,
        ) -> bool {
            for j in 0..big.len() {
                if !seen[j] && embeds(&ts[i], &big[j]) {
                    seen[j] = true;
                    if owner[j].map_or(true, |k| augment(k, ts, big, owner, seen)) {
                        owner[j] = Some(i);
                        return true;
                    }
                }
            }
            false
        }
        (0..ts.len()).all(|i| augment(i, ts, big, &mut owner, &mut vec![false; big.len()]))
    })
}

/// Line-based listing: `state action -> successor prob {labels}`.
pub fn debug_export(pa: &SubPa, label_name: &dyn Fn(LabelId) -> String) -> String {
    let mut out = String::new();
    let names = |ls: &LabelSet| ls.iter().map(|l| label_name(*l)).collect::<Vec<_>>().join(",");
    writeln!(out, "init {} {{{}}}", pa.init, names(&pa.init_labels)).unwrap();
    for (s, ts) in pa.trans.iter().enumerate() {
        for (i, t) in ts.iter().enumerate() {
            for b in &t.branches {
                writeln!(
                    out,
                    "{s} {}#{i} -> {} {} {{{}}}",
                    t.action.as_deref().unwrap_or("tau"),
                    b.target,
                    b.prob,
                    names(&b.labels)
                )
                .unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::problematic_fixture;
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> Prob {
        Prob::new(BigInt::from(n), BigInt::from(d))
    }

    fn tr(branches: &[(StateId, Prob, &[u32])]) -> Transition {
        Transition {
            action: None,
            branches: branches
                .iter()
                .map(|(t, p, ls)| Branch {
                    target: *t,
                    prob: p.clone(),
                    labels: ls.iter().map(|l| LabelId(*l)).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn completion_of_a_pa_only_adds_the_sink() {
        let mut pa = SubPa::new(2, 0);
        pa.trans[0].push(tr(&[(1, r(1, 1), &[0])]));
        pa.trans[1].push(tr(&[(0, r(1, 1), &[0])]));
        let c = complete_to_pa(&pa);
        assert_eq!(c.num_states(), 3);
        assert_eq!(&c.trans[..2], &pa.trans[..]);
        assert!(c.is_pa());
    }

    #[test]
    fn completion_adds_missing_mass() {
        let mut pa = SubPa::new(3, 0);
        pa.trans[0].push(tr(&[(1, r(1, 2), &[])]));
        pa.trans[1].push(tr(&[(2, r(1, 1), &[])]));
        let c = complete_to_pa(&pa);
        assert_eq!(c.trans[0][0].branches[1].target, 3);
        assert_eq!(c.trans[0][0].branches[1].prob, r(1, 2));
        assert_eq!(c.trans[2].len(), 1);
        assert_eq!(c.trans[2][0].action, None);
        assert_eq!(c.trans[2][0].branches[0].target, 3);
        assert!(c.is_pa() && !pa.is_pa());
    }

    #[test]
    fn induced_by_all_and_no_labels() {
        let (lpa, _) = problematic_fixture();
        assert_eq!(induced_by_labels(&lpa.pa, &lpa.all_labels()), lpa.pa);
        assert_eq!(induced_by_labels(&lpa.pa, &LabelSet::new()).num_transitions(), 0);
    }

    #[test]
    fn induced_keeps_beta_only() {
        let (lpa, _) = problematic_fixture();
        let betas: LabelSet = (2..6).map(LabelId).collect();
        let sub = induced_by_labels(&lpa.pa, &betas);
        assert!(sub.trans.iter().flatten().all(|t| t.action.as_deref() == Some("beta")));
        assert_eq!(sub.num_transitions(), 2);
        // partially kept transitions become sub-stochastic
        let sub = induced_by_labels(&lpa.pa, &[LabelId(2)].into());
        assert_eq!(sub.trans[0][0].mass(), r(1, 2));
        assert!(is_subsystem(&sub, &lpa.pa));
    }

    #[test]
    fn scheduler_induction() {
        let (lpa, _) = problematic_fixture();
        let alpha = Scheduler {
            choice: vec![Some(0), Some(0), None],
        };
        let sub = induced_by_scheduler(&lpa.pa, &alpha);
        assert_eq!(sub.trans[0][0].branches[0].target, 1);
        assert_eq!(sub.trans[1][0].branches[0].target, 0);
        assert!(sub.trans.iter().all(|ts| ts.len() <= 1));
        let none = induced_by_scheduler(&lpa.pa, &Scheduler::empty(3));
        assert_eq!(none.num_transitions(), 0);
        assert!(alpha.is_valid_for(&lpa.pa));
        assert!(!Scheduler { choice: vec![Some(2), None, None] }.is_valid_for(&lpa.pa));
    }

    #[test]
    fn subsystem_checks() {
        let (lpa, _) = problematic_fixture();
        assert!(is_subsystem(&lpa.pa, &lpa.pa));
        let mut a = SubPa::new(2, 0);
        a.trans[0].push(tr(&[(1, r(1, 3), &[])]));
        let mut b = SubPa::new(2, 0);
        b.trans[0].push(tr(&[(1, r(1, 2), &[])]));
        assert!(!is_subsystem(&a, &b));
        assert!(is_subsystem(&SubPa::new(2, 0), &b));
        // injectivity: two copies do not fit into one
        let mut two = b.clone();
        two.trans[0].push(b.trans[0][0].clone());
        assert!(!is_subsystem(&two, &b));
        assert!(is_subsystem(&b, &two));
    }

    #[test]
    fn export_lists_one_branch_per_line() {
        let (lpa, _) = problematic_fixture();
        let text = debug_export(&lpa.pa, &|l| lpa.name(l).to_string());
        assert_eq!(text.lines().count(), 1 + lpa.pa.num_branches());
        assert!(text.contains("0 alpha#0 -> 1 1 {a0}"));
        assert!(text.contains("1 beta#1 -> 2 1/2 {b1t}"));
    }
}
