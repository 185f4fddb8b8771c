use fracdesign::design::{a_value, score};
use fracdesign::measure::{optimize, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use fracdesign::search::{binomial, brute_force_binary_oracle, run_procedure};
use fracdesign::{
    Error, ExactDesign, FactorialSpace, ModelMatrices, OptimizerResult, Procedure, ProcedureConfig, RequirementSet,
    ScoringMode, SearchTrace,
};

fn model(levels: &[usize], effects: &str) -> ModelMatrices {
    let space = FactorialSpace::new(levels.to_vec()).unwrap();
    let reqs = RequirementSet::parse(&space, effects).unwrap();
    ModelMatrices::build(&space, &reqs).unwrap()
}

fn solve(mm: &ModelMatrices) -> OptimizerResult {
    optimize(mm, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap()
}

fn trace(mm: &ModelMatrices, procedure: Procedure, target: usize, scoring: ScoringMode) -> SearchTrace {
    let opt = solve(mm);
    let cfg = ProcedureConfig::new(target).with_scoring(scoring);
    run_procedure(procedure, &opt.p_hat, opt.s, mm, &cfg).unwrap()
}

fn contained(small: &ExactDesign, big: &ExactDesign) -> bool {
    small.replications().iter().zip(big.replications()).all(|(a, b)| a <= b)
}

#[test]
fn binary_traces_shrink_one_run_at_a_time() {
    let mm = model(&[2, 2, 2, 3], "1;2;3;4;1x4;2x4");
    for procedure in [Procedure::B1, Procedure::B2] {
        let t = trace(&mm, procedure, mm.q() + 1, ScoringMode::Direct);
        assert_eq!(t.last().n_runs, mm.q() + 1);
        for pair in t.steps.windows(2) {
            assert!(pair[1].design.is_binary());
            assert_eq!(pair[1].n_runs + 1, pair[0].n_runs);
            if procedure == Procedure::B2 {
                assert!(contained(&pair[1].design, &pair[0].design));
            }
        }
        assert_eq!(t.initial().design, ExactDesign::full_factorial(mm.v()));
    }
}

#[test]
fn procedure_a_keeps_sizes_consecutive() {
    let mm = model(&[2, 2, 2, 2], "1;2;3;4;1x2;3x4");
    let t = trace(&mm, Procedure::A, 8, ScoringMode::Direct);
    assert_eq!(t.last().n_runs, 8);
    for pair in t.steps.windows(2) {
        assert_eq!(pair[1].n_runs + 1, pair[0].n_runs);
    }
    for step in &t.steps {
        let sc = score(&step.design, &mm, solve(&mm).s, &[1.0, 5.0]).unwrap();
        assert!((sc.eff_lb - step.eff_lb).abs() < 1e-12);
        assert!(step.eff_lb <= 1.0 + 1e-9);
    }
}

#[test]
fn incremental_scoring_matches_direct() {
    for (levels, effects) in [(&[2, 2, 2, 3][..], "1;2;3;4;1x4;2x4"), (&[2, 3, 4][..], "1;2;3;2x3")] {
        let mm = model(levels, effects);
        for procedure in Procedure::ALL {
            let direct = trace(&mm, procedure, mm.q() + 1, ScoringMode::Direct);
            let incremental = trace(&mm, procedure, mm.q() + 1, ScoringMode::Incremental);
            assert_eq!(direct.steps.len(), incremental.steps.len());
            for (d, i) in direct.steps.iter().zip(&incremental.steps) {
                assert_eq!(d.design, i.design, "{procedure} N = {}", d.n_runs);
                assert!((d.eff_lb - i.eff_lb).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn traces_are_deterministic() {
    let mm = model(&[2, 2, 3, 3], "1;2;3;4;1x2");
    for procedure in Procedure::ALL {
        let a = trace(&mm, procedure, mm.q() + 2, ScoringMode::Direct);
        let b = trace(&mm, procedure, mm.q() + 2, ScoringMode::Direct);
        assert_eq!(a, b);
    }
}

#[test]
fn oracle_bounds_every_binary_search_result() {
    let mm = model(&[2, 2, 2, 2], "1;2;3;4;1x2;3x4");
    let opt = solve(&mm);
    for n in 7..=10 {
        let oracle = brute_force_binary_oracle(&mm, n, &[1.0, 5.0], 1_000_000).unwrap();
        assert_eq!(oracle.evaluated, binomial(16, n).unwrap());
        let best = a_value(&oracle.argmin, &mm).unwrap();
        assert!((best - oracle.min_a).abs() <= 1e-9 * best);
        for procedure in [Procedure::B1, Procedure::B2] {
            let cfg = ProcedureConfig::new(n);
            let t = run_procedure(procedure, &opt.p_hat, opt.s, &mm, &cfg).unwrap();
            let a = a_value(t.final_design(), &mm).unwrap();
            assert!(a >= oracle.min_a * (1.0 - 1e-12));
            for eff in oracle.true_efficiencies(a) {
                assert!(eff <= 1.0 + 1e-9);
            }
        }
    }
}

#[test]
fn oracle_refuses_large_enumerations() {
    let mm = model(&[2, 3, 4], "1;2;3;2x3");
    match brute_force_binary_oracle(&mm, 13, &[1.0], 1000) {
        Err(Error::BudgetExceeded { .. }) => {}
        other => panic!("expected a budget refusal, got {other:?}"),
    }
    assert_eq!(binomial(24, 13), Some(2_496_144));
}

#[test]
fn configuration_is_validated() {
    let mm = model(&[2, 2], "1;2");
    let opt = solve(&mm);
    let cfg = ProcedureConfig::new(2);
    assert!(matches!(
        run_procedure(Procedure::B2, &opt.p_hat, opt.s, &mm, &cfg),
        Err(Error::TooFewRuns { n_runs: 2, min: 3 })
    ));
    let mut cfg = ProcedureConfig::new(3);
    cfg.keep_threshold = 0.99;
    assert!(matches!(run_procedure(Procedure::A, &opt.p_hat, opt.s, &mm, &cfg), Err(Error::InvalidConfig(_))));
}
