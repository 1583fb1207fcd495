use hlcex::analysis::{self, max_reach_prob, ReachMethod};
use hlcex::encode::{encode_scl, selected_labels, EncodeOptions};
use hlcex::gcl::{compose_commands, emit_model, lift_module, parse_model, validate, BinOp, Command, Expr, Model, Module, Prob, Update, UpdateBranch, VarDecl};
use hlcex::pa::{complete_to_pa, induced_by_labels, induced_by_labels_map, induced_by_scheduler, is_subsystem, LabelId, LabelSet, Scheduler};
use hlcex::semantics::Rational;
use hlcex::testkit::{brute_force_problematic, brute_force_scl, random_labeled_pa, random_scl};
use hlcex_milp::{solve, LinExpr, Relation, SolveConfig, Status};
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

fn subset(n: usize, mask: u32) -> LabelSet {
    (0..n as u32).filter(|i| mask >> i & 1 == 1).map(LabelId).collect()
}

// ---- frontend ----

fn probs(parts: Vec<u8>) -> Vec<Prob> {
    let total: i64 = parts.iter().map(|p| *p as i64).sum();
    parts.into_iter().map(|p| rat(p as i64, total)).collect()
}

fn int_expr(names: Vec<String>) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3i64..6).prop_map(Expr::Int),
        proptest::sample::select(names).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        (inner.clone(), inner, proptest::sample::select(vec![BinOp::Add, BinOp::Sub]))
            .prop_map(|(a, b, op)| Expr::bin(op, a, b))
    })
}

fn guard(ints: Vec<String>, bools: Vec<String>) -> impl Strategy<Value = Expr> {
    let cmp = (
        int_expr(ints),
        -2i64..5,
        proptest::sample::select(vec![BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge]),
    )
        .prop_map(|(a, c, op)| Expr::bin(op, a, Expr::Int(c)));
    let leaf = prop_oneof![cmp, proptest::sample::select(bools).prop_map(Expr::Var), Just(Expr::Bool(true))];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), proptest::sample::select(vec![BinOp::And, BinOp::Or]))
                .prop_map(|(a, b, op)| Expr::bin(op, a, b)),
            inner.prop_map(|e| Expr::Not(Box::new(e))),
        ]
    })
}

fn module(idx: usize, actions: Vec<&'static str>) -> impl Strategy<Value = Module> {
    let ints = vec![format!("x{idx}"), format!("y{idx}")];
    let bools = vec![format!("b{idx}")];
    let update = (0usize..3, int_expr(ints.clone()), any::<bool>());
    let branch = (1u8..5, proptest::collection::vec(update, 0..3));
    let command = (
        proptest::option::of(proptest::sample::select(actions)),
        guard(ints.clone(), bools.clone()),
        proptest::collection::vec(branch, 1..4),
    );
    proptest::collection::vec(command, 0..4).prop_map(move |cmds| {
        let names = [ints[0].clone(), ints[1].clone(), bools[0].clone()];
        let commands = cmds
            .into_iter()
            .map(|(action, guard, branches)| {
                let ps = probs(branches.iter().map(|b| b.0).collect());
                Command {
                    action: action.map(String::from),
                    guard,
                    branches: branches
                        .into_iter()
                        .zip(ps)
                        .map(|((_, ups), prob)| {
                            let mut seen = BTreeSet::new();
                            let updates = ups
                                .into_iter()
                                .filter(|(v, _, _)| seen.insert(*v))
                                .map(|(v, e, b)| Update {
                                    var: names[v].clone(),
                                    value: if v == 2 { Expr::Bool(b) } else { e },
                                })
                                .collect();
                            UpdateBranch { prob, updates }
                        })
                        .collect(),
                }
            })
            .collect();
        Module {
            name: format!("m{idx}"),
            vars: vec![
                VarDecl::int(&names[0], 0, 3, 0),
                VarDecl::int(&names[1], -2, 2, 1),
                VarDecl::boolean(&names[2], false),
            ],
            actions: BTreeSet::new(),
            commands,
        }
    })
}

fn model() -> impl Strategy<Value = Model> {
    (module(0, vec!["a", "b"]), module(1, vec!["a", "c"])).prop_map(|(m0, m1)| Model {
        globals: vec![],
        formulas: vec![],
        modules: vec![m0, m1],
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_emit_round_trip(m in model()) {
        prop_assume!(validate(&m).is_ok());
        let text = emit_model(&m);
        let back = parse_model(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, m, "{}", text);
    }

    #[test]
    fn composition_invariants(m in model()) {
        prop_assume!(validate(&m).is_ok());
        let (a, b) = (lift_module(&m, 0), lift_module(&m, 1));
        for c in a.commands.iter().filter(|c| c.action.as_deref() == Some("a")) {
            for d in b.commands.iter().filter(|d| d.action.as_deref() == Some("a")) {
                let p = compose_commands(c, d).unwrap();
                let total: Prob = p.branches.iter().map(|x| &x.prob).sum();
                prop_assert!(total.is_one());
                prop_assert_eq!(p.branches.len(), c.branches.len() * d.branches.len());
                for (i, x) in c.branches.iter().enumerate() {
                    for (j, y) in d.branches.iter().enumerate() {
                        let z = &p.branches[i * d.branches.len() + j];
                        let origin: BTreeSet<_> = x.origin.union(&y.origin).copied().collect();
                        prop_assert_eq!(&z.origin, &origin);
                        prop_assert_eq!(&z.prob, &(&x.prob * &y.prob));
                    }
                }
            }
        }
    }
}

// ---- probabilistic automata ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn induced_is_monotone_subsystem(seed in any::<u64>(), n in 1usize..7, l in 1usize..6, a in any::<u32>(), b in any::<u32>()) {
        let lpa = random_labeled_pa(seed, n, l, 0.6);
        let small = subset(l, a & b);
        let big = subset(l, a);
        let s = induced_by_labels(&lpa.pa, &small);
        let g = induced_by_labels(&lpa.pa, &big);
        prop_assert!(is_subsystem(&s, &g));
        prop_assert!(is_subsystem(&g, &lpa.pa));
        prop_assert_eq!(induced_by_labels(&lpa.pa, &lpa.all_labels()), lpa.pa.clone());
    }

    #[test]
    fn completion_yields_a_pa(seed in any::<u64>(), n in 1usize..7, mask in any::<u32>()) {
        let lpa = random_labeled_pa(seed, n, 4, 0.5);
        let sub = induced_by_labels(&lpa.pa, &subset(4, mask));
        let c = complete_to_pa(&sub);
        prop_assert!(c.is_pa());
        prop_assert_eq!(c.num_states(), sub.num_states() + 1);
    }

    #[test]
    fn scheduler_and_label_induction_commute(seed in any::<u64>(), n in 1usize..7, mask in any::<u32>(), picks in proptest::collection::vec(any::<u8>(), 7)) {
        let lpa = random_labeled_pa(seed, n, 4, 0.6);
        let labels = subset(4, mask);
        let sched = Scheduler {
            choice: lpa.pa.trans.iter().zip(&picks).map(|(ts, p)| (!ts.is_empty()).then(|| *p as usize % ts.len())).collect(),
        };
        let left = induced_by_labels(&induced_by_scheduler(&lpa.pa, &sched), &labels);
        let (restricted, map) = induced_by_labels_map(&lpa.pa, &labels);
        let projected = Scheduler {
            choice: sched.choice.iter().enumerate().map(|(s, c)| c.and_then(|i| map[s].iter().position(|&k| k == i))).collect(),
        };
        prop_assert_eq!(left, induced_by_scheduler(&restricted, &projected));
    }

    #[test]
    fn value_iteration_matches_exact(seed in any::<u64>(), n in 2usize..9, t in 0usize..8) {
        let lpa = random_labeled_pa(seed, n, 3, 0.6);
        let mut targets = vec![false; n];
        targets[t % n] = true;
        let vi = max_reach_prob(&lpa.pa, &targets, ReachMethod::ValueIteration).unwrap();
        let ex = max_reach_prob(&lpa.pa, &targets, ReachMethod::LinearProgram).unwrap();
        let exact = ex.exact.as_ref().unwrap();
        for s in 0..n {
            prop_assert!((vi.prob[s] - ex.prob[s]).abs() < 1e-6);
            prop_assert!(exact[s] >= Rational::zero() && exact[s] <= Rational::one());
        }
        prop_assert_eq!(&analysis::evaluate_scheduler(&lpa.pa, &targets, &ex.sched), exact);
        let reach = analysis::backward_reachable(&lpa.pa, &targets);
        for s in 0..n {
            prop_assert_eq!(reach[s], !exact[s].is_zero());
        }
    }

    #[test]
    fn problematic_states_match_enumeration(seed in any::<u64>(), n in 2usize..7) {
        let lpa = random_labeled_pa(seed, n, 3, 0.7);
        let mut targets = vec![false; n];
        targets[n - 1] = true;
        let classes = analysis::classify(&lpa.pa, &targets);
        let restricted = analysis::restrict_to_relevant(&lpa.pa, &targets, &classes.relevant);
        let brute = brute_force_problematic(&restricted.pa, &targets, &classes.relevant).unwrap();
        prop_assert_eq!(&classes.problematic, &brute);
        for (s, i) in &classes.problematic_pairs {
            prop_assert!(classes.problematic[*s]);
            prop_assert!(lpa.pa.trans[*s][*i].support().filter(|x| classes.relevant[*x]).all(|x| classes.problematic[x]));
        }
    }
}

// ---- encoding vs. oracle ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn critical_sets_are_milp_feasible(seed in any::<u64>()) {
        let inst = random_scl(seed, 6, 5);
        let (_, witness) = brute_force_scl(&inst.lpa, &inst.targets, &inst.lambda).unwrap();
        let enc = encode_scl(&inst.lpa, &inst.targets, &inst.lambda, &EncodeOptions::default()).unwrap();
        let mut fixed = enc.milp.clone();
        for (l, x) in &enc.maps.x {
            let on = if witness.contains(l) { rat(1, 1) } else { rat(0, 1) };
            fixed.add_constraint(format!("fix_{}", l.0), LinExpr::var(*x), Relation::Eq, on).unwrap();
        }
        prop_assert_eq!(solve(&fixed, &SolveConfig::default()).status, Status::Optimal);
    }

    #[test]
    fn objective_sandwich(seed in any::<u64>()) {
        let inst = random_scl(seed, 6, 5);
        let enc = encode_scl(&inst.lpa, &inst.targets, &inst.lambda, &EncodeOptions::default()).unwrap();
        let res = solve(&enc.milp, &SolveConfig::default());
        prop_assert_eq!(res.status, Status::Optimal);
        let inc = res.incumbent.unwrap();
        let sel = selected_labels(&enc, &inc.values);
        let w = inst.lpa.total_weight(&sel).to_f64().unwrap();
        let w_min = enc.w_min.to_f64().unwrap();
        prop_assert!(w - w_min < inc.objective && inc.objective < w, "{} {} {}", w, w_min, inc.objective);
        let p = analysis::max_prob_init(&induced_by_labels(&inst.lpa.pa, &sel), &inst.targets).unwrap();
        prop_assert!(p > inst.lambda);
    }
}
