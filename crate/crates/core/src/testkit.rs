use crate::analysis;
use crate::pa::{induced_by_labels, Branch, LabelId, LabelSet, Scheduler, StateId, SubPa, Transition};
use crate::semantics::{Label, LabelKind, LabeledPa, Rational};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

pub const MAX_BRUTE_FORCE_LABELS: usize = 20;
pub const MAX_SCHEDULERS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum TestkitError {
    #[error("{0} labels exceed the enumeration guard of {MAX_BRUTE_FORCE_LABELS}")]
    TooManyLabels(usize),
    #[error("{0} schedulers exceed the enumeration guard of {MAX_SCHEDULERS}")]
    TooManySchedulers(u128),
    #[error("no critical label set: the property is not violated")]
    NoCriticalSet,
    #[error("invalid X3C instance: {0}")]
    BadInstance(String),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Wraps a bare sub-PA whose branch labels are `0..names.len()`.
pub fn synthetic(pa: SubPa, names: Vec<String>, weights: Vec<Rational>) -> LabeledPa {
    assert_eq!(names.len(), weights.len());
    LabeledPa {
        states: (0..pa.num_states()).map(|s| vec![s as i64]).collect(),
        pa,
        kind: LabelKind::Branches,
        vars: vec![],
        labels: (0..names.len()).map(Label::Synthetic).collect(),
        names,
        weights,
        sync: Some(vec![]),
        module_classes: vec![],
        warnings: vec![],
    }
}

fn is_critical(lpa: &LabeledPa, targets: &[bool], lambda: &Rational, set: &LabelSet) -> Result<bool, TestkitError> {
    let sub = induced_by_labels(&lpa.pa, set);
    Ok(analysis::max_prob_init(&sub, targets)? > *lambda)
}

/// Minimum-weight critical label set by exhaustive enumeration, cheapest subsets first.
pub fn brute_force_scl(lpa: &LabeledPa, targets: &[bool], lambda: &Rational) -> Result<(Rational, LabelSet), TestkitError> {
    let n = lpa.num_labels();
    if n > MAX_BRUTE_FORCE_LABELS {
        return Err(TestkitError::TooManyLabels(n));
    }
    let mut subsets: Vec<(Rational, Vec<LabelId>)> = (0u32..1 << n)
        .map(|mask| {
            let ls: Vec<LabelId> = (0..n as u32).filter(|i| mask >> i & 1 == 1).map(LabelId).collect();
            (lpa.total_weight(&ls), ls)
        })
        .collect();
    subsets.sort();
    for (w, ls) in subsets {
        let set: LabelSet = ls.into_iter().collect();
        if is_critical(lpa, targets, lambda, &set)? {
            return Ok((w, set));
        }
    }
    Err(TestkitError::NoCriticalSet)
}

/// All memoryless deterministic schedulers; partial ones too unless `deadlock_free`.
pub fn enumerate_schedulers(pa: &SubPa, deadlock_free: bool) -> Result<SchedulerIter, TestkitError> {
    let radix: Vec<usize> = pa
        .trans
        .iter()
        .map(|ts| if deadlock_free { ts.len().max(1) } else { ts.len() + 1 })
        .collect();
    let total: u128 = radix.iter().map(|&r| r as u128).product();
    if total > MAX_SCHEDULERS as u128 {
        return Err(TestkitError::TooManySchedulers(total));
    }
    let options: Vec<Vec<Option<usize>>> = pa
        .trans
        .iter()
        .map(|ts| {
            let mut o: Vec<Option<usize>> = (0..ts.len()).map(Some).collect();
            if !deadlock_free || ts.is_empty() {
                o.insert(0, None);
            }
            o
        })
        .collect();
    Ok(SchedulerIter {
        digits: vec![0; options.len()],
        options,
        done: false,
    })
}

pub struct SchedulerIter {
    options: Vec<Vec<Option<usize>>>,
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for SchedulerIter {
    type Item = Scheduler;

    fn next(&mut self) -> Option<Scheduler> {
        if self.done {
            return None;
        }
        let sched = Scheduler {
            choice: self.digits.iter().zip(&self.options).map(|(&d, o)| o[d]).collect(),
        };
        self.done = true;
        for (d, o) in self.digits.iter_mut().zip(&self.options) {
            *d += 1;
            if *d < o.len() {
                self.done = false;
                break;
            }
            *d = 0;
        }
        Some(sched)
    }
}

/// Maximum reachability probability of `init` by trying every deadlock-free scheduler.
pub fn brute_force_max_prob(pa: &SubPa, targets: &[bool]) -> Result<Rational, TestkitError> {
    let mut best = Rational::zero();
    for sched in enumerate_schedulers(pa, true)? {
        let v = analysis::evaluate_scheduler(pa, targets, &sched);
        if v[pa.init] > best {
            best = v[pa.init].clone();
        }
    }
    Ok(best)
}

/// States from which some deadlock-free scheduler reaches `targets` with probability zero,
/// restricted to relevant states.
pub fn brute_force_problematic(pa: &SubPa, targets: &[bool], relevant: &[bool]) -> Result<Vec<bool>, TestkitError> {
    let mut prob = vec![false; pa.num_states()];
    for sched in enumerate_schedulers(pa, true)? {
        let v = analysis::evaluate_scheduler(pa, targets, &sched);
        for s in 0..pa.num_states() {
            if relevant[s] && !targets[s] && v[s].is_zero() {
                prob[s] = true;
            }
        }
    }
    Ok(prob)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct X3cInstance {
    /// Elements are `0..size`.
    pub size: usize,
    pub sets: Vec<[usize; 3]>,
}

impl X3cInstance {
    pub fn new(size: usize, sets: Vec<[usize; 3]>) -> Result<Self, TestkitError> {
        if size == 0 || size % 3 != 0 {
            return Err(TestkitError::BadInstance(format!("|X| = {size} is not a positive multiple of 3")));
        }
        for c in &sets {
            let distinct: BTreeSet<usize> = c.iter().copied().collect();
            if distinct.len() != 3 || c.iter().any(|&x| x >= size) {
                return Err(TestkitError::BadInstance(format!("{c:?} is not a 3-subset of X")));
            }
        }
        Ok(X3cInstance { size, sets })
    }

    pub fn r(&self) -> usize {
        self.size / 3
    }

    pub fn random(seed: u64, r: usize, num_sets: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = 3 * r;
        let mut sets = BTreeSet::new();
        // Plant a cover half of the time so both answers occur.
        if rng.gen_bool(0.5) {
            let mut perm: Vec<usize> = (0..size).collect();
            for i in (1..size).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            for ch in perm.chunks(3) {
                let mut c = [ch[0], ch[1], ch[2]];
                c.sort();
                sets.insert(c);
            }
        }
        let total = num_sets.min(binomial3(size));
        while sets.len() < total {
            let mut c = [0; 3];
            loop {
                for x in c.iter_mut() {
                    *x = rng.gen_range(0..size);
                }
                if c[0] != c[1] && c[1] != c[2] && c[0] != c[2] {
                    break;
                }
            }
            c.sort();
            sets.insert(c);
        }
        let mut sets: Vec<[usize; 3]> = sets.into_iter().collect();
        for i in (1..sets.len()).rev() {
            sets.swap(i, rng.gen_range(0..=i));
        }
        X3cInstance { size, sets }
    }
}

fn binomial3(n: usize) -> usize {
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// Exact 3-cover by backtracking on the smallest uncovered element.
pub fn exact_cover(inst: &X3cInstance) -> Option<Vec<usize>> {
    fn go(inst: &X3cInstance, covered: &mut Vec<bool>, chosen: &mut Vec<usize>) -> bool {
        let Some(x) = covered.iter().position(|c| !c) else {
            return true;
        };
        for (i, c) in inst.sets.iter().enumerate() {
            if c.contains(&x) && c.iter().all(|&y| !covered[y]) {
                c.iter().for_each(|&y| covered[y] = true);
                chosen.push(i);
                if go(inst, covered, chosen) {
                    return true;
                }
                chosen.pop();
                c.iter().for_each(|&y| covered[y] = false);
            }
        }
        false
    }
    let mut covered = vec![false; inst.size];
    let mut chosen = vec![];
    go(inst, &mut covered, &mut chosen).then_some(chosen)
}

pub struct X3cScl {
    pub lpa: LabeledPa,
    pub targets: Vec<bool>,
    pub lambda: Rational,
    pub k: Rational,
}

/// SCL instance with a critical set of weight ≤ r iff the instance has an exact cover.
///
/// States: init, one per element, one per 3-set, target. Branches `x → c` carry the
/// weight-1 label of `c`; the init and target branches carry weight-0 labels.
pub fn x3c_to_scl(inst: &X3cInstance) -> X3cScl {
    let n = inst.size;
    let m = inst.sets.len();
    let (init, t) = (0, n + m + 1);
    let xs = |x: usize| 1 + x;
    let cs = |c: usize| 1 + n + c;
    let (l_init, l_t) = (LabelId(0), LabelId(1));
    let l_c = |c: usize| LabelId(2 + c as u32);
    let mut pa = SubPa::new(n + m + 2, init);
    let dirac = |target, l| Transition {
        action: Some("a".into()),
        branches: vec![Branch {
            target,
            prob: Rational::one(),
            labels: [l].into(),
        }],
    };
    pa.trans[init].push(Transition {
        action: Some("a".into()),
        branches: (0..n)
            .map(|x| Branch {
                target: xs(x),
                prob: rat(1, n as i64),
                labels: [l_init].into(),
            })
            .collect(),
    });
    for x in 0..n {
        for (j, c) in inst.sets.iter().enumerate() {
            if c.contains(&x) {
                pa.trans[xs(x)].push(dirac(cs(j), l_c(j)));
            }
        }
    }
    for j in 0..m {
        pa.trans[cs(j)].push(dirac(t, l_t));
    }
    let mut names = vec!["l_init".to_string(), "l_t".to_string()];
    let mut weights = vec![Rational::zero(), Rational::zero()];
    for c in &inst.sets {
        names.push(format!("l_{}_{}_{}", c[0], c[1], c[2]));
        weights.push(Rational::one());
    }
    let mut targets = vec![false; pa.num_states()];
    targets[t] = true;
    X3cScl {
        lpa: synthetic(pa, names, weights),
        targets,
        lambda: Rational::one() - rat(1, n as i64 + 1),
        k: Rational::from_integer(BigInt::from(inst.r())),
    }
}

/// Random labeled PA; state 0 is initial. `density` in (0, 1] scales the number of
/// transitions, branches and labels per branch.
pub fn random_labeled_pa(seed: u64, n_states: usize, n_labels: usize, density: f64) -> LabeledPa {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = density.clamp(0.05, 1.0);
    let mut pa = SubPa::new(n_states.max(1), 0);
    for s in 0..pa.num_states() {
        let num_trans = (0..3).filter(|_| rng.gen_bool(density)).count();
        for a in 0..num_trans {
            let width = 1 + (0..2).filter(|_| rng.gen_bool(density)).count();
            let mut targets: BTreeSet<StateId> = BTreeSet::new();
            for _ in 0..width {
                targets.insert(rng.gen_range(0..pa.num_states()));
            }
            let parts: Vec<i64> = targets.iter().map(|_| rng.gen_range(1..=4)).collect();
            let total: i64 = parts.iter().sum();
            let branches = targets
                .into_iter()
                .zip(parts)
                .map(|(target, p)| {
                    let mut labels = LabelSet::new();
                    if n_labels > 0 {
                        labels.insert(LabelId(rng.gen_range(0..n_labels as u32)));
                        for l in 0..n_labels as u32 {
                            if rng.gen_bool(density * 0.2) {
                                labels.insert(LabelId(l));
                            }
                        }
                    }
                    Branch {
                        target,
                        prob: rat(p, total),
                        labels,
                    }
                })
                .collect();
            pa.trans[s].push(Transition {
                action: Some(["a", "b", "c"][a].into()),
                branches,
            });
        }
    }
    let names = (0..n_labels).map(|l| format!("l{l}")).collect();
    let weights = (0..n_labels)
        .map(|_| Rational::from_integer(BigInt::from(rng.gen_range(1..=3))))
        .collect();
    synthetic(pa, names, weights)
}

pub struct RandomScl {
    pub seed: u64,
    pub lpa: LabeledPa,
    pub targets: Vec<bool>,
    pub lambda: Rational,
    pub pmax: Rational,
}

/// Random SCL instance with `p_max > 0` and `λ` drawn from `[0, p_max)` in tenths.
pub fn random_scl(seed: u64, max_states: usize, max_labels: usize) -> RandomScl {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5c1);
    loop {
        let n_states = rng.gen_range(2..=max_states.max(2));
        let n_labels = rng.gen_range(1..=max_labels.max(1));
        let density = rng.gen_range(0.3..0.9);
        let lpa = random_labeled_pa(rng.gen(), n_states, n_labels, density);
        let mut targets = vec![false; n_states];
        targets[n_states - 1] = true;
        if n_states > 3 && rng.gen_bool(0.3) {
            targets[n_states - 2] = true;
        }
        let pmax = analysis::max_prob_init(&lpa.pa, &targets).expect("small PA");
        if pmax.is_zero() || targets[lpa.pa.init] {
            continue;
        }
        let lambda = &pmax * rat(rng.gen_range(0..10), 10);
        return RandomScl {
            seed,
            lpa,
            targets,
            lambda,
            pmax,
        };
    }
}

/// Two problematic states cycling under `a`; `b` leaves each with probability 1/2
/// to the target and otherwise stays. Labels: `a0`, `a1`, `b0t`, `b0s`, `b1t`, `b1s`.
pub fn problematic_fixture() -> (LabeledPa, Vec<bool>) {
    let (s0, s1, t) = (0, 1, 2);
    let mut pa = SubPa::new(3, s0);
    let br = |target, prob: Rational, l: u32| Branch {
        target,
        prob,
        labels: [LabelId(l)].into(),
    };
    for (s, other, base) in [(s0, s1, 0u32), (s1, s0, 1)] {
        pa.trans[s].push(Transition {
            action: Some("alpha".into()),
            branches: vec![br(other, Rational::one(), base)],
        });
        let half = rat(1, 2);
        let mut bs = vec![br(t, half.clone(), 2 + 2 * base), br(s, half, 3 + 2 * base)];
        bs.sort_by_key(|b| b.target);
        pa.trans[s].push(Transition {
            action: Some("beta".into()),
            branches: bs,
        });
    }
    let names = ["a0", "a1", "b0t", "b0s", "b1t", "b1s"].map(String::from).to_vec();
    let weights = vec![Rational::one(); 6];
    (synthetic(pa, names, weights), vec![false, false, true])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pa::debug_export;

    #[test]
    fn single_label_two_states() {
        let mut pa = SubPa::new(2, 0);
        pa.trans[0].push(Transition {
            action: None,
            branches: vec![Branch {
                target: 1,
                prob: Rational::one(),
                labels: [LabelId(0)].into(),
            }],
        });
        let lpa = synthetic(pa, vec!["l".into()], vec![rat(3, 1)]);
        let (w, set) = brute_force_scl(&lpa, &[false, true], &Rational::zero()).unwrap();
        assert_eq!(w, rat(3, 1));
        assert_eq!(set, [LabelId(0)].into());
    }

    #[test]
    fn fixture_witness_avoids_alpha() {
        let (lpa, t) = problematic_fixture();
        for lambda in [rat(0, 1), rat(1, 4), rat(1, 2), rat(9, 10)] {
            let (_, set) = brute_force_scl(&lpa, &t, &lambda).unwrap();
            assert!(!set.contains(&LabelId(0)) && !set.contains(&LabelId(1)), "{lambda}: {set:?}");
            assert!(set.iter().any(|l| l.0 >= 2));
        }
    }

    #[test]
    fn fixture_schedulers() {
        let (lpa, t) = problematic_fixture();
        let scheds: Vec<_> = enumerate_schedulers(&lpa.pa, true).unwrap().collect();
        assert_eq!(scheds.len(), 4);
        let zero = scheds
            .iter()
            .filter(|s| analysis::evaluate_scheduler(&lpa.pa, &t, s)[0].is_zero())
            .count();
        assert_eq!(zero, 1);
        assert_eq!(enumerate_schedulers(&lpa.pa, false).unwrap().count(), 3 * 3);
    }

    #[test]
    fn two_by_two_schedulers() {
        let mut pa = SubPa::new(2, 0);
        for s in 0..2 {
            for a in ["a", "b"] {
                pa.trans[s].push(Transition {
                    action: Some(a.into()),
                    branches: vec![Branch {
                        target: 1 - s,
                        prob: Rational::one(),
                        labels: LabelSet::new(),
                    }],
                });
            }
        }
        let total: Vec<_> = enumerate_schedulers(&pa, true).unwrap().collect();
        assert_eq!(total.len(), 4);
        assert!(total.iter().all(|s| s.choice.iter().all(Option::is_some)));
        assert_eq!(enumerate_schedulers(&pa, false).unwrap().count(), 9);
    }

    #[test]
    fn x3c_examples() {
        let one = X3cInstance::new(3, vec![[0, 1, 2]]).unwrap();
        let s = x3c_to_scl(&one);
        let (w, set) = brute_force_scl(&s.lpa, &s.targets, &s.lambda).unwrap();
        assert_eq!(w, Rational::one());
        assert!(set.contains(&LabelId(2)));

        let six = X3cInstance::new(6, vec![[0, 1, 3], [0, 1, 2], [2, 4, 5], [3, 4, 5]]).unwrap();
        let s = x3c_to_scl(&six);
        assert!(brute_force_scl(&s.lpa, &s.targets, &s.lambda).unwrap().0 <= s.k);
        assert!(exact_cover(&six).is_some());

        // Element 5 is uncovered: not even all labels reach t from every element.
        let holes = X3cInstance::new(6, vec![[0, 1, 2], [2, 3, 4]]).unwrap();
        let s = x3c_to_scl(&holes);
        assert!(matches!(
            brute_force_scl(&s.lpa, &s.targets, &s.lambda),
            Err(TestkitError::NoCriticalSet)
        ));
        assert!(exact_cover(&holes).is_none());
        assert!(X3cInstance::new(4, vec![]).is_err());
        assert!(X3cInstance::new(6, vec![[0, 0, 1]]).is_err());
    }

    #[test]
    fn random_pa_is_deterministic() {
        let name = |l: LabelId| format!("l{}", l.0);
        let a = debug_export(&random_labeled_pa(7, 6, 4, 0.6).pa, &name);
        let b = debug_export(&random_labeled_pa(7, 6, 4, 0.6).pa, &name);
        assert_eq!(a, b);
        assert_ne!(a, debug_export(&random_labeled_pa(8, 6, 4, 0.6).pa, &name));
    }

    #[test]
    fn single_state_target_is_certain() {
        let lpa = random_labeled_pa(1, 1, 2, 0.5);
        assert!(analysis::max_prob_init(&lpa.pa, &[true]).unwrap().is_one());
    }
}
