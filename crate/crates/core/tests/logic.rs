mod common;

use dclm::logic::{
    optimize_y_gamma, predicate_value, solve, LogicNetwork, LogicProblem, SolveConfig, TNorm, Thresholds,
};
use dclm::perception::FeatureMap;

/// 32 distinct two-hot 4x4 maps, one per channel: cells {i, i+1} and
/// {i, i+5} (mod 16). Any two differ by JS >= 0.5.
fn two_hot_sample() -> Vec<FeatureMap> {
    (0..32)
        .map(|c| {
            let i = c % 16;
            let j = if c < 16 { (i + 1) % 16 } else { (i + 5) % 16 };
            let mut v = vec![0.0; 16];
            v[i] = 1.0;
            v[j] = 1.0;
            FeatureMap::new(c, 4, 4, v).unwrap()
        })
        .collect()
}

fn net() -> LogicNetwork {
    LogicNetwork::new(10, TNorm::Lukasiewicz, Thresholds::default()).unwrap()
}

#[test]
fn first_sample_spawns_a_predicate_per_distinct_map() {
    let mut net = net();
    let routes = net.extend(&two_hot_sample()).unwrap();
    assert!(routes.iter().all(|r| r.spawned && r.value == 1.0));
    assert_eq!(net.predicates().len(), 32);
    assert_eq!(net.clauses().len(), 320);
    assert_eq!(net.groups().len(), 10);
    assert!(net.groups().iter().all(|g| g.clauses.len() == 32));
}

#[test]
fn repeated_sample_only_adds_groundings() {
    let mut net = net();
    net.extend(&two_hot_sample()).unwrap();
    let routes = net.extend(&two_hot_sample()).unwrap();
    assert!(routes.iter().all(|r| !r.spawned && r.value == 1.0));
    assert_eq!(net.predicates().len(), 32);
    assert_eq!(net.clauses().len(), 320);
    assert!(net.predicates().iter().all(|p| p.groundings().len() == 2));
}

#[test]
fn new_clauses_start_negated_feature_plain_decision() {
    let mut net = net();
    net.extend(&two_hot_sample()[..1]).unwrap();
    for c in net.clauses() {
        assert_eq!(net.gamma()[c.features[0].edge], 1.0);
        assert_eq!(net.gamma()[c.decision.edge], 0.0);
    }
    // all ten groups share the one predicate, with distinct decision targets
    let classes: Vec<usize> = net.clauses().iter().map(|c| c.decision.class).collect();
    assert_eq!(classes, (0..10).collect::<Vec<_>>());
}

#[test]
fn empty_maps_are_skipped() {
    let mut net = net();
    let empty = FeatureMap::new(3, 4, 4, vec![0.0; 16]).unwrap();
    assert!(net.extend(&[empty]).unwrap().is_empty());
    assert!(net.predicates().is_empty());
}

#[test]
fn predicate_threshold_is_inclusive() {
    let a = FeatureMap::new(0, 1, 2, vec![1.0, 1.0]).unwrap();
    let b = FeatureMap::new(0, 1, 2, vec![1.0, 0.0]).unwrap();
    let d = dclm::divergence::js(&a, &b, 1e-9).unwrap();
    assert_eq!(predicate_value(&a, &b, d, 1e-9).unwrap(), 1.0);
    assert_eq!(predicate_value(&a, &b, d * (1.0 - 1e-12), 1e-9).unwrap(), 0.0);
}

#[test]
fn solver_never_decreases_the_objective_on_random_networks() {
    for seed in 0..100 {
        let inst = common::logic_instance(seed);
        let problem = LogicProblem::new(&inst.net, &inst.grounding);
        let mut gamma = inst.net.gamma().to_vec();
        let sol = solve(&problem, &mut gamma, &inst.lambda, &inst.f, &SolveConfig::default()).unwrap();
        assert!(sol.trace.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: {:?}", sol.trace);
        assert!(gamma.iter().all(|g| (-1.0..=1.0).contains(g)), "seed {seed}");
        assert!(sol.y.iter().all(|y| (0.0..=1.0).contains(y)), "seed {seed}");
    }
}

#[test]
fn solver_moves_decisions_toward_satisfied_clauses() {
    // one predicate true on its only grounding; "not A or Y1" pushes y up
    let mut net = LogicNetwork::new(2, TNorm::Lukasiewicz, Thresholds::default()).unwrap();
    net.extend(&two_hot_sample()[..1]).unwrap();
    let grounding = net.stored_grounding();
    let f = [0.2, 0.2];
    let sol = optimize_y_gamma(&mut net, &grounding, &[5.0, 0.0], &f, &SolveConfig::default()).unwrap();
    assert!(sol.y[0] > f[0], "{:?}", sol.y);
    assert!((sol.y[1] - f[1]).abs() < 1e-12, "{:?}", sol.y);
    assert!(sol.objective > sol.trace[0]);
}

#[test]
fn membership_table_lists_every_predicate() {
    let mut net = net();
    net.extend(&two_hot_sample()[..3]).unwrap();
    let csv = net.membership_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "disjunction,A1,A2,A3");
    assert_eq!(lines.count(), 10);
}
