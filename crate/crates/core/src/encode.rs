use crate::analysis::{self, restrict_to_relevant, Restricted, StateClasses};
use crate::gcl::Prob;
use crate::pa::{LabelId, StateId};
use crate::semantics::{Label, LabelKind, LabeledPa, Rational};
use hlcex_milp::{LinExpr, Milp, Relation, VarId, VarKind};
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("property is not violated: maximal probability {pmax} ≤ {lambda}")]
    NotViolated { pmax: String, lambda: String },
    #[error("all relevant labels have weight zero")]
    AllWeightsZero,
    #[error("synchronization cuts need command or branch labels, not {0:?}")]
    SyncUnsupported(LabelKind),
    #[error("interval constraints need variable-value labels, not {0:?}")]
    IntervalsUnsupported(LabelKind),
    #[error("unknown cut family `{0}` (expected none, fwd, bwd, label, sync, all or a `+`/`,` combination)")]
    BadCuts(String),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CutConfig {
    pub fwd: bool,
    pub bwd: bool,
    pub label: bool,
    pub sync: bool,
}

impl CutConfig {
    pub fn none() -> Self {
        CutConfig::default()
    }

    pub fn all() -> Self {
        CutConfig {
            fwd: true,
            bwd: true,
            label: true,
            sync: true,
        }
    }

    pub fn from_bits(bits: u8) -> Self {
        CutConfig {
            fwd: bits & 1 != 0,
            bwd: bits & 2 != 0,
            label: bits & 4 != 0,
            sync: bits & 8 != 0,
        }
    }

    pub fn parse(s: &str) -> Result<Self, EncodeError> {
        let mut c = CutConfig::none();
        for part in s.split(|ch| ch == '+' || ch == ',').map(str::trim) {
            match part {
                "none" => {}
                "all" => c = CutConfig::all(),
                "fwd" => c.fwd = true,
                "bwd" => c.bwd = true,
                "label" => c.label = true,
                "sync" => c.sync = true,
                _ => return Err(EncodeError::BadCuts(s.to_string())),
            }
        }
        Ok(c)
    }

    /// Drops families that do not apply to a label kind.
    pub fn effective(self, kind: LabelKind, intervals: bool) -> Self {
        CutConfig {
            sync: self.sync && matches!(kind, LabelKind::Commands | LabelKind::Branches),
            label: self.label && !intervals,
            ..self
        }
    }
}

impl fmt::Display for CutConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.fwd, "fwd"), (self.bwd, "bwd"), (self.label, "label"), (self.sync, "sync")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if parts.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

#[derive(Clone, Debug)]
pub struct EncodeOptions {
    pub delta_lambda: Rational,
    pub cuts: CutConfig,
    pub intervals: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            delta_lambda: Rational::new(1.into(), 1_000_000.into()),
            cuts: CutConfig::all(),
            intervals: false,
        }
    }
}

/// Transition indices in the maps refer to the original PA.
#[derive(Clone, Debug, Default)]
pub struct VarMaps {
    pub x: BTreeMap<LabelId, VarId>,
    pub sigma: BTreeMap<(StateId, usize), VarId>,
    pub p_branch: BTreeMap<(StateId, usize, StateId), VarId>,
    pub p: BTreeMap<StateId, VarId>,
    pub r: BTreeMap<StateId, VarId>,
    pub t: BTreeMap<(StateId, usize, StateId), VarId>,
    pub h_lo: BTreeMap<(usize, i64), VarId>,
    pub h_hi: BTreeMap<(usize, i64), VarId>,
}

#[derive(Clone, Debug)]
pub struct Encoding {
    pub milp: Milp,
    pub maps: VarMaps,
    pub restricted: Restricted,
    pub classes: StateClasses,
    pub targets: Vec<bool>,
    pub lambda: Rational,
    pub delta_lambda: Rational,
    pub delta_r: Rational,
    pub w_min: Rational,
    /// Every label-set weight is a multiple of this.
    pub granularity: Rational,
    pub cuts: CutConfig,
}

impl Encoding {
    /// Transitions of a restricted state as (original index, transition).
    pub fn transitions(&self, s: StateId) -> impl Iterator<Item = (usize, &crate::pa::Transition)> {
        self.restricted.orig[s].iter().copied().zip(self.restricted.pa.trans[s].iter())
    }

    pub fn init(&self) -> StateId {
        self.restricted.pa.init
    }

    pub fn weight_of(&self, lpa: &LabeledPa, values: &[f64]) -> Rational {
        self.maps
            .x
            .iter()
            .filter(|(_, v)| values[v.0] > 0.5)
            .map(|(l, _)| lpa.weight(*l).clone())
            .sum()
    }
}

fn gcd_rational(a: &Rational, b: &Rational) -> Rational {
    use num_integer::Integer;
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    let num = a.numer().gcd(b.numer());
    let den = a.denom().lcm(b.denom());
    Rational::new(num, den)
}

fn slug(v: i64) -> String {
    if v < 0 {
        format!("m{}", -v)
    } else {
        v.to_string()
    }
}

pub fn encode_scl(
    lpa: &LabeledPa,
    targets: &[bool],
    lambda: &Rational,
    opts: &EncodeOptions,
) -> Result<Encoding, EncodeError> {
    let pa = &lpa.pa;
    let pmax = analysis::max_prob_init(pa, targets)?;
    if pmax <= *lambda {
        return Err(EncodeError::NotViolated {
            pmax: pmax.to_string(),
            lambda: lambda.to_string(),
        });
    }
    if opts.intervals && lpa.kind != LabelKind::Values {
        return Err(EncodeError::IntervalsUnsupported(lpa.kind));
    }
    if opts.cuts.sync && lpa.sync.is_none() {
        return Err(EncodeError::SyncUnsupported(lpa.kind));
    }
    let classes = analysis::classify(pa, targets);
    let restricted = restrict_to_relevant(pa, targets, &classes.relevant);
    let rpa = &restricted.pa;
    let init = pa.init;

    let mut used: BTreeSet<LabelId> = pa.init_labels.clone();
    for ts in &rpa.trans {
        for t in ts {
            for b in &t.branches {
                used.extend(b.labels.iter().copied());
            }
        }
    }
    if opts.intervals {
        used.extend(lpa.all_labels());
    }
    let positive: Vec<&Rational> = used.iter().map(|l| lpa.weight(*l)).filter(|w| w.is_positive()).collect();
    if positive.is_empty() {
        return Err(EncodeError::AllWeightsZero);
    }
    let w_min = positive.iter().copied().min().unwrap().clone();
    let granularity = positive.iter().fold(Rational::zero(), |g, w| gcd_rational(&g, w));

    let mut milp = Milp::new();
    let mut maps = VarMaps::default();
    let unit = |milp: &mut Milp, name: String, kind: VarKind| {
        milp.add_var(&name, kind, Some(Rational::zero()), Some(Rational::one())).unwrap()
    };
    for l in &used {
        maps.x.insert(*l, unit(&mut milp, format!("x_l{}", l.0), VarKind::Binary));
    }
    let n = pa.num_states();
    for s in 0..n {
        if classes.relevant[s] {
            maps.p.insert(s, unit(&mut milp, format!("p_{s}"), VarKind::Continuous));
        }
    }
    for s in 0..n {
        for (k, t) in rpa.trans[s].iter().enumerate() {
            let i = restricted.orig[s][k];
            maps.sigma.insert((s, i), unit(&mut milp, format!("sg_{s}_{i}"), VarKind::Binary));
            for b in &t.branches {
                let v = unit(&mut milp, format!("pb_{s}_{i}_{}", b.target), VarKind::Continuous);
                maps.p_branch.insert((s, i, b.target), v);
            }
        }
    }
    let num_problematic = classes.problematic.iter().filter(|b| **b).count();
    let delta_r = Rational::new(1.into(), (num_problematic as i64 + 1).into());
    for s in 0..n {
        if classes.problematic[s] {
            maps.r.insert(s, unit(&mut milp, format!("r_{s}"), VarKind::Continuous));
        }
    }
    let pairs: BTreeSet<(StateId, usize)> = classes.problematic_pairs.iter().copied().collect();
    for s in 0..n {
        for (k, t) in rpa.trans[s].iter().enumerate() {
            let i = restricted.orig[s][k];
            if pairs.contains(&(s, i)) {
                for b in &t.branches {
                    let v = unit(&mut milp, format!("t_{s}_{i}_{}", b.target), VarKind::Binary);
                    maps.t.insert((s, i, b.target), v);
                }
            }
        }
    }

    // (3.1a)
    let mut obj = LinExpr::new();
    for (l, v) in &maps.x {
        if !lpa.weight(*l).is_zero() {
            obj.add(*v, lpa.weight(*l).clone());
        }
    }
    obj.add(maps.p[&init], -(&w_min / Rational::from_integer(2.into())));
    milp.set_objective(obj);

    let c = |milp: &mut Milp, name: String, e: LinExpr, rel: Relation, rhs: Rational| {
        milp.add_constraint(name.as_str(), e, rel, rhs).unwrap();
    };
    // (3.1b)
    c(
        &mut milp,
        "lambda".into(),
        LinExpr::var(maps.p[&init]),
        Relation::Ge,
        lambda + &opts.delta_lambda,
    );
    // (3.1c)
    for (s, v) in &maps.p {
        if targets[*s] {
            c(&mut milp, format!("target_{s}"), LinExpr::var(*v), Relation::Eq, Rational::one());
        }
    }
    let states: Vec<StateId> = (0..n).filter(|s| !rpa.trans[*s].is_empty()).collect();
    let sigmas = |s: StateId| -> LinExpr {
        let mut e = LinExpr::new();
        for &i in &restricted.orig[s] {
            e.add_int(maps.sigma[&(s, i)], 1);
        }
        e
    };
    // (3.1d)
    for &s in &states {
        c(&mut milp, format!("choice_{s}"), sigmas(s), Relation::Le, Rational::one());
    }
    // (3.1e)
    for &s in &states {
        let mut e = sigmas(s);
        e.add_int(maps.p[&s], -1);
        c(&mut milp, format!("active_{s}"), e, Relation::Ge, Rational::zero());
    }
    // (3.1f)
    if classes.relevant[init] {
        for l in &pa.init_labels {
            let e = LinExpr::var(maps.p[&init]).with(maps.x[l], -1);
            c(&mut milp, format!("initlab_{}", l.0), e, Relation::Le, Rational::zero());
        }
    }
    for &s in &states {
        for (i, t) in restricted.orig[s].iter().zip(&rpa.trans[s]) {
            for b in &t.branches {
                for l in &b.labels {
                    let e = LinExpr::var(maps.p_branch[&(s, *i, b.target)]).with(maps.x[l], -1);
                    c(&mut milp, format!("lab_{s}_{i}_{}_{}", b.target, l.0), e, Relation::Le, Rational::zero());
                }
            }
        }
    }
    // (3.1g)
    for &s in &states {
        for (i, t) in restricted.orig[s].iter().zip(&rpa.trans[s]) {
            for b in &t.branches {
                let mut e = LinExpr::var(maps.p_branch[&(s, *i, b.target)]);
                e.add(maps.p[&b.target], -b.prob.clone());
                c(&mut milp, format!("flow_{s}_{i}_{}", b.target), e, Relation::Le, Rational::zero());
            }
        }
    }
    // (3.1h)
    for &s in &states {
        for (i, t) in restricted.orig[s].iter().zip(&rpa.trans[s]) {
            let mut e = LinExpr::var(maps.p[&s]).with(maps.sigma[&(s, *i)], 1);
            for b in &t.branches {
                e.add_int(maps.p_branch[&(s, *i, b.target)], -1);
            }
            c(&mut milp, format!("prob_{s}_{i}"), e, Relation::Le, Rational::one());
        }
    }
    // (3.1i)
    for &(s, i) in &pairs {
        let mut e = LinExpr::var(maps.sigma[&(s, i)]);
        for ((s2, i2, _), v) in maps.t.range((s, i, 0)..=(s, i, usize::MAX)) {
            debug_assert_eq!((*s2, *i2), (s, i));
            e.add_int(*v, -1);
        }
        c(&mut milp, format!("path_{s}_{i}"), e, Relation::Eq, Rational::zero());
    }
    // (3.1j)
    for (&(s, i, s2), &tv) in &maps.t {
        let e = LinExpr::var(maps.r[&s]).with(maps.r[&s2], -1).with(tv, 1);
        c(&mut milp, format!("rank_{s}_{i}_{s2}"), e, Relation::Le, Rational::one() - &delta_r);
    }

    let mut enc = Encoding {
        milp,
        maps,
        restricted,
        classes,
        targets: targets.to_vec(),
        lambda: lambda.clone(),
        delta_lambda: opts.delta_lambda.clone(),
        delta_r,
        w_min,
        granularity,
        cuts: opts.cuts,
    };
    if opts.intervals {
        add_interval_constraints(&mut enc, lpa)?;
    }
    if opts.cuts.fwd || opts.cuts.bwd {
        add_scheduler_cuts(&mut enc, opts.cuts.fwd, opts.cuts.bwd);
    }
    if opts.cuts.label {
        add_label_cuts(&mut enc, lpa);
    }
    if opts.cuts.sync {
        add_sync_cuts(&mut enc, lpa)?;
    }
    Ok(enc)
}

/// Forward cuts (with the initial-state special case) and backward cuts (with
/// the target special case).
pub fn add_scheduler_cuts(enc: &mut Encoding, fwd: bool, bwd: bool) {
    let rpa = &enc.restricted.pa;
    let n = rpa.num_states();
    let init = rpa.init;
    let init_is_target = enc.targets[init];
    let out_sigma = |s: StateId, e: &mut LinExpr, coeff: i64| {
        for &i in &enc.restricted.orig[s] {
            e.add_int(enc.maps.sigma[&(s, i)], coeff);
        }
    };
    let mut rows: Vec<(String, LinExpr, Relation, Rational)> = vec![];
    if fwd {
        for s in 0..n {
            for (i, t) in enc.restricted.orig[s].iter().zip(&rpa.trans[s]) {
                if t.support().any(|x| enc.targets[x]) {
                    continue;
                }
                let mut e = LinExpr::var(enc.maps.sigma[&(s, *i)]);
                let succ: BTreeSet<StateId> = t.support().filter(|x| *x != s).collect();
                for x in succ {
                    out_sigma(x, &mut e, -1);
                }
                rows.push((format!("fwd_{s}_{i}"), e, Relation::Le, Rational::zero()));
            }
        }
        if !init_is_target {
            let mut e = LinExpr::new();
            out_sigma(init, &mut e, 1);
            rows.push(("fwd_init".into(), e, Relation::Ge, Rational::one()));
        }
    }
    if bwd {
        let mut incoming: Vec<Vec<(StateId, usize)>> = vec![vec![]; n];
        for s in 0..n {
            for (i, t) in enc.restricted.orig[s].iter().zip(&rpa.trans[s]) {
                for x in t.support() {
                    if x != s {
                        incoming[x].push((s, *i));
                    }
                }
            }
        }
        for s in 0..n {
            if s == init || rpa.trans[s].is_empty() {
                continue;
            }
            let mut e = LinExpr::new();
            out_sigma(s, &mut e, 1);
            for (p, i) in &incoming[s] {
                e.add_int(enc.maps.sigma[&(*p, *i)], -1);
            }
            rows.push((format!("bwd_{s}"), e, Relation::Le, Rational::zero()));
        }
        if !init_is_target {
            let mut e = LinExpr::new();
            for s in 0..n {
                if enc.targets[s] {
                    for (p, i) in &incoming[s] {
                        e.add_int(enc.maps.sigma[&(*p, *i)], 1);
                    }
                }
            }
            rows.push(("bwd_target".into(), e, Relation::Ge, Rational::one()));
        }
    }
    for (name, e, rel, rhs) in rows {
        enc.milp.add_constraint(name.as_str(), e, rel, rhs).unwrap();
    }
}

/// A selected label must occur on a selected transition (init labels excepted).
pub fn add_label_cuts(enc: &mut Encoding, lpa: &LabeledPa) {
    let rpa = &enc.restricted.pa;
    let mut carriers: BTreeMap<LabelId, Vec<VarId>> = BTreeMap::new();
    for s in 0..rpa.num_states() {
        for (i, t) in enc.restricted.orig[s].iter().zip(&rpa.trans[s]) {
            let ls: BTreeSet<LabelId> = t.branches.iter().flat_map(|b| b.labels.iter().copied()).collect();
            for l in ls {
                carriers.entry(l).or_default().push(enc.maps.sigma[&(s, *i)]);
            }
        }
    }
    let _ = lpa;
    let mut rows = vec![];
    for (l, x) in &enc.maps.x {
        if rpa.init_labels.contains(l) {
            continue;
        }
        let mut e = LinExpr::var(*x);
        for v in carriers.get(l).map(|v| v.as_slice()).unwrap_or(&[]) {
            e.add_int(*v, -1);
        }
        rows.push((format!("labcut_{}", l.0), e));
    }
    for (name, e) in rows {
        enc.milp.add_constraint(name.as_str(), e, Relation::Le, Rational::zero()).unwrap();
    }
}

pub fn add_sync_cuts(enc: &mut Encoding, lpa: &LabeledPa) -> Result<(), EncodeError> {
    let sync = lpa.sync.as_ref().ok_or(EncodeError::SyncUnsupported(lpa.kind))?;
    let mut rows = vec![];
    for cut in sync {
        let Some(&x) = enc.maps.x.get(&cut.label) else { continue };
        for (j, partners) in cut.partners.iter().enumerate() {
            let mut e = LinExpr::var(x);
            for d in partners {
                if let Some(&y) = enc.maps.x.get(d) {
                    e.add_int(y, -1);
                }
            }
            rows.push((format!("sync_{}_{j}", cut.label.0), e));
        }
    }
    for (name, e) in rows {
        enc.milp.add_constraint(name.as_str(), e, Relation::Le, Rational::zero()).unwrap();
    }
    Ok(())
}

/// Per variable, the selected values must form an interval.
pub fn add_interval_constraints(enc: &mut Encoding, lpa: &LabeledPa) -> Result<(), EncodeError> {
    if lpa.kind != LabelKind::Values {
        return Err(EncodeError::IntervalsUnsupported(lpa.kind));
    }
    let mut per_var: BTreeMap<usize, Vec<(i64, LabelId)>> = BTreeMap::new();
    for (id, l) in lpa.labels.iter().enumerate() {
        if let Label::Value { var, value } = l {
            let lid = LabelId(id as u32);
            if enc.maps.x.contains_key(&lid) {
                per_var.entry(*var).or_default().push((*value, lid));
            }
        }
    }
    for (var, mut vals) in per_var {
        vals.sort();
        let name = &lpa.vars[var].name;
        let mut prev: Option<(VarId, VarId)> = None;
        for (value, lid) in &vals {
            let lo = enc
                .milp
                .add_var(&format!("hl_{name}_{}", slug(*value)), VarKind::Binary, None, None)
                .unwrap();
            let hi = enc
                .milp
                .add_var(&format!("hu_{name}_{}", slug(*value)), VarKind::Binary, None, None)
                .unwrap();
            enc.maps.h_lo.insert((var, *value), lo);
            enc.maps.h_hi.insert((var, *value), hi);
            let e = LinExpr::var(lo).with(hi, 1).with(enc.maps.x[lid], 1);
            enc.milp
                .add_constraint(format!("iv_{name}_{}", slug(*value)), e, Relation::Eq, Rational::one())
                .unwrap();
            if let Some((plo, phi)) = prev {
                let v = slug(*value);
                enc.milp
                    .add_constraint(format!("ivlo_{name}_{v}"), LinExpr::var(lo).with(plo, -1), Relation::Le, Rational::zero())
                    .unwrap();
                enc.milp
                    .add_constraint(format!("ivhi_{name}_{v}"), LinExpr::var(phi).with(hi, -1), Relation::Le, Rational::zero())
                    .unwrap();
            }
            prev = Some((lo, hi));
        }
    }
    Ok(())
}

/// Decoded label set: `x_ℓ ≥ 1/2`.
pub fn selected_labels(enc: &Encoding, values: &[f64]) -> BTreeSet<LabelId> {
    enc.maps
        .x
        .iter()
        .filter(|(_, v)| values[v.0] > 0.5)
        .map(|(l, _)| *l)
        .collect()
}

pub fn prob_to_f64(p: &Prob) -> f64 {
    num_traits::ToPrimitive::to_f64(p).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcl::{parse_expr, parse_model};
    use crate::pa::{Branch, LabelSet, SubPa, Transition};
    use crate::semantics::{build_pa, target_states, LabelFactory};
    use crate::testkit::{brute_force_scl, problematic_fixture, synthetic};
    use hlcex_milp::{solve, SolveConfig, Status};
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn two_states(weight: i64) -> LabeledPa {
        let mut pa = SubPa::new(2, 0);
        pa.trans[0].push(Transition {
            action: None,
            branches: vec![Branch {
                target: 1,
                prob: r(1, 1),
                labels: [LabelId(0)].into(),
            }],
        });
        synthetic(pa, vec!["l".into()], vec![r(weight, 1)])
    }

    fn row<'a>(enc: &'a Encoding, name: &str) -> Option<&'a hlcex_milp::Constraint> {
        enc.milp.constraints.iter().find(|c| c.name == name)
    }

    #[test]
    fn two_state_objective() {
        let lpa = two_states(3);
        let enc = encode_scl(&lpa, &[false, true], &r(1, 2), &EncodeOptions::default()).unwrap();
        let res = solve(&enc.milp, &SolveConfig::default());
        assert_eq!(res.status, Status::Optimal);
        let inc = res.incumbent.unwrap();
        assert!((inc.objective - (3.0 - 1.5)).abs() < 1e-9);
        assert_eq!(selected_labels(&enc, &inc.values), [LabelId(0)].into());
    }

    #[test]
    fn preconditions() {
        let lpa = two_states(1);
        assert!(matches!(
            encode_scl(&lpa, &[false, true], &r(1, 1), &EncodeOptions::default()),
            Err(EncodeError::NotViolated { .. })
        ));
        let zero = two_states(0);
        assert!(matches!(
            encode_scl(&zero, &[false, true], &r(1, 2), &EncodeOptions::default()),
            Err(EncodeError::AllWeightsZero)
        ));
    }

    #[test]
    fn cut_parsing() {
        assert_eq!(CutConfig::parse("all").unwrap(), CutConfig::all());
        assert_eq!(CutConfig::parse("none").unwrap(), CutConfig::none());
        let c = CutConfig::parse("fwd+label").unwrap();
        assert!(c.fwd && c.label && !c.bwd && !c.sync);
        assert_eq!(c.to_string(), "fwd+label");
        assert_eq!(CutConfig::parse("bwd,sync").unwrap().to_string(), "bwd+sync");
        assert!(CutConfig::parse("fwd+magic").is_err());
        assert_eq!((0..16).map(|b| CutConfig::from_bits(b).to_string()).collect::<BTreeSet<_>>().len(), 16);
    }

    #[test]
    fn backward_cut_on_a_chain() {
        let lpa = two_states(1);
        let opts = EncodeOptions {
            cuts: CutConfig::parse("bwd").unwrap(),
            ..EncodeOptions::default()
        };
        let enc = encode_scl(&lpa, &[false, true], &r(1, 2), &opts).unwrap();
        let bt = row(&enc, "bwd_target").unwrap();
        assert_eq!(bt.expr.terms, vec![(enc.maps.sigma[&(0, 0)], r(1, 1))]);
        assert_eq!(bt.rel, Relation::Ge);
    }

    #[test]
    fn label_cut_on_single_transition() {
        let lpa = two_states(1);
        let opts = EncodeOptions {
            cuts: CutConfig::parse("label").unwrap(),
            ..EncodeOptions::default()
        };
        let enc = encode_scl(&lpa, &[false, true], &r(1, 2), &opts).unwrap();
        let c = row(&enc, "labcut_0").unwrap();
        assert_eq!(c.expr.terms.len(), 2);
        assert_eq!(c.rel, Relation::Le);
    }

    #[test]
    fn sync_cuts_pair_partners() {
        let text = "module m x:[0..1] init 0; [a] x=0 -> (x'=1); endmodule
                    module n y:[0..1] init 0; [a] y=0 -> (y'=1); endmodule";
        let m = parse_model(text).unwrap();
        let lpa = build_pa(&m, &LabelFactory::commands()).unwrap();
        let t = target_states(&m, &lpa, &parse_expr("x=1").unwrap()).unwrap();
        let opts = EncodeOptions {
            cuts: CutConfig::parse("sync").unwrap(),
            ..EncodeOptions::default()
        };
        let enc = encode_scl(&lpa, &t, &r(0, 1), &opts).unwrap();
        let rows: Vec<_> = enc.milp.constraints.iter().filter(|c| c.name.starts_with("sync_")).collect();
        assert_eq!(rows.len(), 2);
        let states = build_pa(&m, &LabelFactory::states()).unwrap();
        assert!(matches!(
            encode_scl(&states, &t, &r(0, 1), &opts),
            Err(EncodeError::SyncUnsupported(LabelKind::States))
        ));
        // `all` drops families that cannot apply
        assert!(!CutConfig::all().effective(LabelKind::States, false).sync);
        assert!(!CutConfig::all().effective(LabelKind::Values, true).label);
    }

    #[test]
    fn fixture_needs_beta_labels() {
        let (lpa, t) = problematic_fixture();
        let enc = encode_scl(&lpa, &t, &r(1, 4), &EncodeOptions::default()).unwrap();
        assert_eq!(enc.maps.r.len(), 2);
        assert_eq!(enc.maps.t.len(), 2);
        assert_eq!(enc.delta_r, r(1, 3));
        let res = solve(&enc.milp, &SolveConfig::default());
        let sel = selected_labels(&enc, &res.incumbent.unwrap().values);
        assert!(sel.iter().any(|l| l.0 >= 2));
        // the α labels alone admit no feasible point
        let mut fixed = enc.milp.clone();
        for l in 2..6 {
            let x = enc.maps.x[&LabelId(l)];
            fixed.add_constraint(format!("off_{l}"), LinExpr::var(x), Relation::Le, r(0, 1)).unwrap();
        }
        assert_eq!(solve(&fixed, &SolveConfig::default()).status, Status::Infeasible);
        assert_eq!(brute_force_scl(&lpa, &t, &r(1, 4)).unwrap().0, r(1, 1));
    }

    fn domain_model() -> (LabeledPa, Vec<bool>) {
        let m = parse_model("module m x:[0..2] init 0; [] x=0 -> 0.5:(x'=2) + 0.5:(x'=1); endmodule").unwrap();
        let lpa = build_pa(&m, &LabelFactory::values()).unwrap();
        let t = target_states(&m, &lpa, &parse_expr("x=2").unwrap()).unwrap();
        (lpa, t)
    }

    #[test]
    fn interval_selection_is_contiguous() {
        let (lpa, t) = domain_model();
        let opts = EncodeOptions {
            cuts: CutConfig::all().effective(LabelKind::Values, false),
            ..EncodeOptions::default()
        };
        let plain = encode_scl(&lpa, &t, &r(2, 5), &opts).unwrap();
        let p = solve(&plain.milp, &SolveConfig::default()).incumbent.unwrap();
        let plain_sel: Vec<&str> = selected_labels(&plain, &p.values).iter().map(|l| lpa.name(*l)).collect();
        assert_eq!(plain_sel, ["x=0", "x=2"]);

        let opts = EncodeOptions {
            intervals: true,
            cuts: CutConfig::all().effective(LabelKind::Values, true),
            ..EncodeOptions::default()
        };
        let iv = encode_scl(&lpa, &t, &r(2, 5), &opts).unwrap();
        assert_eq!(iv.maps.h_lo.len(), 3);
        let s = solve(&iv.milp, &SolveConfig::default()).incumbent.unwrap();
        let sel = selected_labels(&iv, &s.values);
        assert_eq!(sel.len(), 3);
        assert!(iv.weight_of(&lpa, &s.values) >= plain.weight_of(&lpa, &p.values));

        let commands = build_pa(
            &parse_model("module m x:[0..1] init 0; [] x=0 -> (x'=1); endmodule").unwrap(),
            &LabelFactory::commands(),
        )
        .unwrap();
        assert!(matches!(
            encode_scl(&commands, &[false, true], &r(0, 1), &opts),
            Err(EncodeError::IntervalsUnsupported(LabelKind::Commands))
        ));
    }

    #[test]
    fn every_feasible_interval_point_is_contiguous() {
        let (lpa, t) = domain_model();
        let opts = EncodeOptions {
            intervals: true,
            cuts: CutConfig::none(),
            ..EncodeOptions::default()
        };
        let enc = encode_scl(&lpa, &t, &r(0, 1), &opts).unwrap();
        let xs: Vec<(i64, VarId)> = enc
            .maps
            .x
            .iter()
            .filter_map(|(l, v)| match lpa.labels[l.0 as usize] {
                Label::Value { value, .. } => Some((value, *v)),
                _ => None,
            })
            .collect();
        for mask in 0u32..8 {
            let mut m = enc.milp.clone();
            for (i, (_, v)) in xs.iter().enumerate() {
                let on = r((mask >> i & 1) as i64, 1);
                m.add_constraint(format!("fix_{i}"), LinExpr::var(*v), Relation::Eq, on).unwrap();
            }
            let mut vals: Vec<i64> = xs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, (v, _))| *v).collect();
            vals.sort();
            let contiguous = vals.windows(2).all(|w| w[1] == w[0] + 1);
            if solve(&m, &SolveConfig::default()).status == Status::Optimal {
                assert!(contiguous, "{vals:?}");
            }
        }
    }

    #[test]
    fn coin_sizes_within_bounds() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/coin2-1.gcl");
        let m = parse_model(&std::fs::read_to_string(dir).unwrap()).unwrap();
        let lpa = build_pa(&m, &LabelFactory::commands()).unwrap();
        let t = target_states(&m, &lpa, &parse_expr("finished & all_coins_equal_0").unwrap()).unwrap();
        let enc = encode_scl(&lpa, &t, &r(2, 5), &EncodeOptions::default()).unwrap();
        let (l, n, mm) = (12, 144, 252);
        let ints = enc.milp.num_integer_vars();
        let conts = enc.milp.num_vars() - ints;
        assert!(ints <= l + 2 * mm, "{ints}");
        assert!(conts <= 2 * n + 2 * mm, "{conts}");
        assert!(enc.milp.num_constraints() <= 4 * (n + l * mm), "{}", enc.milp.num_constraints());
        assert_eq!(enc.classes.relevant_labels.len(), l);
        // labels only on branches leaving targets need no variable
        assert!(enc.maps.x.len() <= l);
        let unused: LabelSet = lpa.all_labels().difference(&enc.classes.relevant_labels).copied().collect();
        assert_eq!(unused.len(), 2);
    }
}
