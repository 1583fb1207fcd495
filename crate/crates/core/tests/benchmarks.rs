use hlcex::gcl::parse_model;
use hlcex::semantics::{build_pa, LabelFactory};

fn load(name: &str) -> hlcex::gcl::Model {
    let path = format!("{}/../../models/{name}.gcl", env!("CARGO_MANIFEST_DIR"));
    parse_model(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn coin_state_spaces() {
    for (name, states, branches) in [("coin2-1", 144, 252), ("coin2-2", 272, 492)] {
        let lpa = build_pa(&load(name), &LabelFactory::commands()).unwrap();
        assert_eq!(lpa.pa.num_states(), states, "{name}");
        assert_eq!(lpa.pa.num_branches(), branches, "{name}");
    }
}

#[test]
fn coin_label_counts() {
    let m = load("coin2-1");
    assert_eq!(build_pa(&m, &LabelFactory::commands()).unwrap().num_labels(), 14);
    assert_eq!(build_pa(&m, &LabelFactory::branches()).unwrap().num_labels(), 16);
    assert_eq!(build_pa(&m, &LabelFactory::values()).unwrap().num_labels(), 19);
}

fn targets(m: &hlcex::gcl::Model, lpa: &hlcex::semantics::LabeledPa) -> Vec<bool> {
    let e = hlcex::gcl::parse_expr("finished & all_coins_equal_0").unwrap();
    hlcex::semantics::target_states(m, lpa, &e).unwrap()
}

#[test]
fn coin_max_probabilities() {
    use hlcex::analysis::{max_reach_prob, ReachMethod};
    for (name, expected) in [("coin2-1", 0.6), ("coin2-2", 0.5556)] {
        let m = load(name);
        let lpa = build_pa(&m, &LabelFactory::commands()).unwrap();
        let t = targets(&m, &lpa);
        let vi = max_reach_prob(&lpa.pa, &t, ReachMethod::ValueIteration).unwrap();
        let ex = max_reach_prob(&lpa.pa, &t, ReachMethod::LinearProgram).unwrap();
        assert!((ex.prob[0] - expected).abs() < 1e-4, "{name}: {}", ex.prob[0]);
        for s in 0..lpa.pa.num_states() {
            assert!((vi.prob[s] - ex.prob[s]).abs() < 1e-6);
        }
    }
}

#[test]
fn coin_relevant_commands() {
    let m = load("coin2-1");
    let lpa = build_pa(&m, &LabelFactory::commands()).unwrap();
    let t = targets(&m, &lpa);
    let (_, labels) = hlcex::analysis::relevant_states(&lpa.pa, &t);
    assert_eq!(labels.len(), 12);
}
