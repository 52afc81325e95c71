//! Scratch calibration: record greedy-agreement trajectories on the
//! well-specified mode for candidate (policy, alpha) configurations and
//! tabulate found-percentages over a threshold range, per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use balin::env::{Phase, SpecMode, SyntheticEnv};
use balin::harness::{EnvSpec, ExperimentConfig, OptimalAssignmentProbe, PolicyCombo};
use balin::policy::PolicyKind;

const HORIZON: usize = 2000;
const REPS: usize = 50;
const CHECK: usize = 10;

fn main() {
    let env = SyntheticEnv::<f64>::new(SpecMode::WellSpecified);
    let config = ExperimentConfig::<f64>::new(EnvSpec::SyntheticWell);
    let combos = [
        PolicyCombo { kind: PolicyKind::LinTs, alpha: 0.25, gamma: None },
        PolicyCombo { kind: PolicyKind::LinTs, alpha: 0.5, gamma: None },
        PolicyCombo { kind: PolicyKind::Blts, alpha: 0.25, gamma: Some(0.1) },
        PolicyCombo { kind: PolicyKind::Blts, alpha: 0.5, gamma: Some(0.1) },
        PolicyCombo { kind: PolicyKind::LinUcb, alpha: 1.0, gamma: None },
        PolicyCombo { kind: PolicyKind::Blucb, alpha: 1.0, gamma: Some(0.1) },
    ];
    for seed in [42u64, 7] {
        println!("=== seed {seed}");
        let probe = OptimalAssignmentProbe::build(
            &env,
            1000,
            0.95,
            CHECK,
            balin::harness::probe_seed(seed),
        )
        .unwrap();
        for combo in &combos {
            let trajectories: Vec<Vec<f64>> = (0..REPS)
                .map(|rep| {
                    let mut policy = config
                        .build_policy(
                            combo,
                            env.feature_dim(),
                            env.n_arms(),
                            balin::harness::aux_seed(seed, rep as u64),
                        )
                        .unwrap();
                    let mut env_rng =
                        ChaCha8Rng::seed_from_u64(balin::harness::env_seed(seed, rep as u64));
                    let mut dec_rng = ChaCha8Rng::seed_from_u64(
                        balin::harness::decision_seed(seed, rep as u64),
                    );
                    let third = 1.0 / 3.0;
                    for _ in 0..env.warm_start_size() {
                        let (x, arm, r) = env.warm_draw(&mut env_rng).unwrap();
                        policy
                            .observe_uniform(&env.features(x), arm, r, third)
                            .unwrap();
                    }
                    let mut traj = Vec::new();
                    for s in 0..HORIZON {
                        let x = env.context(Phase::Online, &mut env_rng);
                        let feats = env.features(x);
                        let (arm, p) = policy.choose(&feats, &mut dec_rng).unwrap();
                        let reward = env.reward(arm, x, &mut env_rng).unwrap();
                        policy.observe(&feats, arm, reward, p).unwrap();
                        if (s + 1) % CHECK == 0 {
                            traj.push(probe.agreement(&policy).unwrap().unwrap_or(0.0));
                        }
                    }
                    traj
                })
                .collect();
            print!("{:>7}@{:<5}", combo.kind.to_string(), combo.alpha);
            for threshold in [0.95, 0.96, 0.97, 0.98, 0.99] {
                let found = trajectories
                    .iter()
                    .filter(|traj| traj.iter().any(|&a| a >= threshold))
                    .count();
                print!("  t{threshold}: {:>3.0}%", 100.0 * found as f64 / REPS as f64);
            }
            println!();
        }
    }
}
