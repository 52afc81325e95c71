//! The whole stack is generic over the scalar type; drive a small run in
//! `f32` end to end to keep that instantiation honest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use balin::env::{Phase, SpecMode, SyntheticEnv};
use balin::policy::{LambdaRule, Policy, PolicyConfig, PolicyKind};

#[test]
fn f32_policy_runs_the_synthetic_loop() {
    let env = SyntheticEnv::<f32>::new(SpecMode::Misspecified);
    let config = PolicyConfig::<f32>::new(PolicyKind::Blts, 1.0)
        .with_gamma(0.1)
        .with_lambda(LambdaRule::Fixed(1.0))
        .with_mc_iterations(100);
    let mut policy = Policy::new(config, env.feature_dim(), env.n_arms(), 3).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    env.warm_start(&mut policy, &mut rng).unwrap();
    let mut total = 0.0f32;
    for _ in 0..100 {
        let x = env.context(Phase::Online, &mut rng);
        let features = env.features(x);
        let (arm, p) = policy.choose(&features, &mut rng).unwrap();
        let reward = env.reward(arm, x, &mut rng).unwrap();
        policy.observe(&features, arm, reward, p).unwrap();
        total += reward;
    }
    assert!(total.is_finite());
    for arm in 0..3 {
        let estimate = policy.arm_estimate(arm).expect("all arms modeled");
        assert!(estimate.theta().iter().all(|v| v.is_finite()));
        for w in policy.weights_for_arm(arm).unwrap() {
            assert!((1.0..=10.0 + 1e-4).contains(&w));
        }
    }
}

#[test]
fn f32_and_f64_fits_agree_to_single_precision() {
    let xs = [[1.0, 0.4], [-0.3, 0.9], [0.7, -0.8], [0.2, 0.1]];
    let rewards = [0.5, -0.25, 1.0, 0.125];
    let weights = [1.0, 2.0, 3.0, 0.5];

    let fit64 = {
        let x = balin::linalg::Matrix::<f64>::from_rows(
            &xs.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        )
        .unwrap();
        let data =
            balin::regression::DesignData::new(x, rewards.to_vec(), weights.to_vec()).unwrap();
        balin::regression::fit_weighted_ridge(&data, 0.5).unwrap()
    };
    let fit32 = {
        let x = balin::linalg::Matrix::<f32>::from_rows(
            &xs.iter()
                .map(|r| r.iter().map(|&v| v as f32).collect())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let data = balin::regression::DesignData::new(
            x,
            rewards.iter().map(|&v| v as f32).collect(),
            weights.iter().map(|&v| v as f32).collect(),
        )
        .unwrap();
        balin::regression::fit_weighted_ridge(&data, 0.5).unwrap()
    };
    for (a, b) in fit64.theta().iter().zip(fit32.theta()) {
        assert!((a - *b as f64).abs() < 1e-5, "{a} vs {b}");
    }
}
