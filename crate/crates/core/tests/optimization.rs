//! Optimizer behavior on the test case.

use mlmc_boed::mlmc::{Construction, GradientConfig, GradientEstimator, LevelWeights};
use mlmc_boed::optim::{optimize, BoxDomain, OptimizeConfig, OptimizerConfig, RobbinsMonroState, Schedule};
use mlmc_boed::parallel::Workers;
use mlmc_boed::problems::{ProposalKind, TestCase};
use proptest::prelude::*;

fn config(estimator: GradientEstimator, max_iters: u64, seed: u64) -> OptimizeConfig {
    OptimizeConfig {
        gradient: GradientConfig::new(estimator, ProposalKind::Prior, 2000),
        optimizer: OptimizerConfig::Rm { c: 5.0, polyak: true },
        domain: BoxDomain::new(vec![1e-8], vec![f64::INFINITY]).unwrap(),
        initial: vec![1.5],
        max_iters,
        seed,
        eig_every: 0,
        eig: None,
    }
}

#[test]
fn single_inner_sample_drifts_away_from_optimum() {
    let tr = optimize(&TestCase::default(), &config(GradientEstimator::StandardMc { m: 1 }, 300, 1), &Workers::default())
        .unwrap();
    assert!(tr.averaged_design[0] > 1.5, "{:?}", tr.averaged_design);
    assert!(tr.final_design[0] > 2.0, "{:?}", tr.final_design);
}

#[test]
fn mlmc_moves_toward_optimum() {
    let est = GradientEstimator::Mlmc {
        weights: LevelWeights::new(1, 1.5, None).unwrap(),
        construction: Construction::Antithetic,
    };
    let tr = optimize(&TestCase::default(), &config(est, 2000, 1), &Workers::default()).unwrap();
    let err = (tr.final_design[0] - TestCase::optimal_design()).abs();
    assert!(err < 0.1, "{:?}", tr.final_design);
}

#[test]
fn exact_gradient_converges_monotonically_near_optimum() {
    let tc = TestCase::default();
    let star = TestCase::optimal_design();
    let grad = |x: f64| mlmc_boed::fdcheck::gradient(|v| tc.eig_closed(v[0]), &[x], 1e-6)[0];
    let domain = BoxDomain::new(vec![1e-8], vec![f64::INFINITY]).unwrap();
    for start in [0.8, 0.95, 1.2, 1.4] {
        let mut rm = RobbinsMonroState::new(vec![start], Schedule { c: 5.0 });
        let mut prev = (start - star).abs();
        for _ in 0..2000 {
            let g = grad(rm.current()[0]);
            rm.step(&[g], &domain).unwrap();
            let d = (rm.current()[0] - star).abs();
            assert!(d <= prev + 1e-12, "start {start}: {d} after {prev}");
            prev = d;
        }
        assert!(prev < 1e-3, "start {start}: {prev}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn iterates_stay_in_the_box(seed in 0u64..1000, lo in 0.5f64..1.2, width in 0.05f64..1.0, c in 0.5f64..50.0) {
        let est = GradientEstimator::Mlmc {
            weights: LevelWeights::new(1, 1.5, None).unwrap(),
            construction: Construction::Antithetic,
        };
        let mut cfg = config(est, 30, seed);
        cfg.gradient.n_outer = 20;
        cfg.domain = BoxDomain::new(vec![lo], vec![lo + width]).unwrap();
        cfg.initial = vec![lo + 0.5 * width];
        cfg.optimizer = OptimizerConfig::Rm { c, polyak: false };
        let tr = optimize(&TestCase::default(), &cfg, &Workers::single()).unwrap();
        for row in &tr.rows {
            prop_assert!(cfg.domain.contains(&row.design));
        }
    }
}
