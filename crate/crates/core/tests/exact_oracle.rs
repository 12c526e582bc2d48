use sfcprot::exact::{
    enumerate_all, solve_exact, OracleError, ProtectionMode, SearchConfig, SearchError,
};
use sfcprot::harness::toy_scenario;

const MODES: [ProtectionMode; 3] = [
    ProtectionMode::SharedProtection,
    ProtectionMode::DedicatedProtection,
    ProtectionMode::NoProtection,
];

fn all_paths(mode: ProtectionMode) -> SearchConfig {
    SearchConfig {
        k_paths: None,
        ..SearchConfig::with_mode(mode)
    }
}

#[test]
fn search_matches_enumeration_on_toys() {
    let mut feasible = 0;
    for seed in 0..30 {
        let sc = toy_scenario(seed);
        for mode in MODES {
            let cfg = all_paths(mode);
            let exact = solve_exact(&sc.network, &sc.services, &cfg);
            let oracle = enumerate_all(&sc.network, &sc.services, &cfg);
            match (exact, oracle) {
                (Ok(e), Ok(o)) => {
                    assert!(e.stats.proven_optimal);
                    let (a, b) = (
                        e.evaluation.metrics.objective,
                        o.evaluation.metrics.objective,
                    );
                    assert!(
                        (a - b).abs() <= 1e-12,
                        "seed {seed} {mode:?}: search {a} oracle {b}"
                    );
                    feasible += 1;
                }
                (Err(SearchError::Infeasible { .. }), Err(OracleError::Infeasible)) => {}
                (e, o) => panic!("seed {seed} {mode:?}: search {e:?} oracle {o:?}"),
            }
        }
    }
    assert!(feasible >= 25, "only {feasible} feasible comparisons");
}

#[test]
fn zero_capacity_toy_is_infeasible_for_both() {
    let mut sc = toy_scenario(1);
    let text = sc
        .to_json()
        .replace("\"capacity\":2.0", "\"capacity\":0.0")
        .replace("\"capacity\":3.0", "\"capacity\":0.0")
        .replace("\"capacity\":4.0", "\"capacity\":0.0");
    sc = sfcprot::model::Scenario::from_json(&text).unwrap();
    let cfg = all_paths(ProtectionMode::SharedProtection);
    assert!(matches!(
        enumerate_all(&sc.network, &sc.services, &cfg),
        Err(OracleError::Infeasible)
    ));
    assert!(matches!(
        solve_exact(&sc.network, &sc.services, &cfg),
        Err(SearchError::Infeasible { .. })
    ));
}

#[test]
fn oracle_refuses_large_instances() {
    let sc = sfcprot::harness::builtin_scenario_8node();
    let cfg = all_paths(ProtectionMode::SharedProtection);
    assert!(matches!(
        enumerate_all(&sc.network, &sc.services, &cfg),
        Err(OracleError::TooLarge(_))
    ));
}
