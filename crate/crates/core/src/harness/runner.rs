//! Replication loops, optimal-assignment detection and result containers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{ClassificationEnv, Phase, SpecMode, SyntheticEnv, SYNTHETIC_ARMS};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

use super::{stream, stream_seed, Agent, EnvSpec, ExperimentConfig, PolicyCombo};

/// Samples used to fit the best-in-class linear reference policy for the
/// misspecified synthetic mode.
const REFERENCE_FIT_SAMPLES: usize = 100_000;

/// One logged round. `reward` is the realized reward; `regret` compares
/// true expected rewards (synthetic) or is `1 - reward` (classification);
/// `cum_regret` accumulates from the start of the replication, warm-start
/// rows included.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub replication: usize,
    pub t: usize,
    pub arm: usize,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub propensity: f64,
}

/// Per-replication log and aggregates. `cum_regret` is the online-phase
/// cumulative regret R(T); warm-start regret appears only in the step log.
#[derive(Clone, Debug)]
pub struct ReplicationResult {
    pub replication: usize,
    pub steps: Vec<StepRecord>,
    pub cum_regret: f64,
    pub norm_regret: Option<f64>,
    pub found_step: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ComboResult<F> {
    pub combo: PolicyCombo<F>,
    pub replications: Vec<ReplicationResult>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult<F> {
    /// Whether optimal-assignment detection ran (synthetic environments).
    pub detection: bool,
    pub combos: Vec<ComboResult<F>>,
}

/// Fixed probe set plus reference policy for optimal-assignment detection.
///
/// At each checkpoint the policy's exploration-free argmax is evaluated on
/// the probe contexts; the assignment counts as found once agreement with
/// the reference reaches the threshold (meeting it exactly counts).
///
/// The reference is the true-expected-reward argmax in the well-specified
/// mode. In the misspecified mode no linear policy can match that, so the
/// reference is the best-in-class linear policy: per-arm least squares of
/// the noiseless expected rewards on the linear features, fit once on
/// 100,000 online-distribution contexts.
#[derive(Clone, Debug)]
pub struct OptimalAssignmentProbe<F> {
    features: Vec<Vec<F>>,
    reference: Vec<usize>,
    threshold: f64,
    checkpoint_interval: usize,
}

impl<F: Scalar> OptimalAssignmentProbe<F> {
    pub fn build(
        env: &SyntheticEnv<F>,
        probe_size: usize,
        threshold: f64,
        checkpoint_interval: usize,
        seed: u64,
    ) -> Result<Self> {
        if probe_size == 0 {
            return Err(Error::invalid("probe_size", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let contexts: Vec<[F; 2]> = (0..probe_size)
            .map(|_| env.context(Phase::Online, &mut rng))
            .collect();
        let reference = match env.mode() {
            SpecMode::WellSpecified => contexts.iter().map(|&x| env.true_optimal_arm(x)).collect(),
            SpecMode::Misspecified => {
                let coefficients = fit_linear_reference(env, &mut rng)?;
                contexts
                    .iter()
                    .map(|&x| {
                        let features = env.features(x);
                        argmax_by(SYNTHETIC_ARMS, |arm| {
                            linalg::dot(&coefficients[arm], &features)
                        })
                    })
                    .collect()
            }
        };
        let features = contexts.iter().map(|&x| env.features(x)).collect();
        Ok(Self {
            features,
            reference,
            threshold,
            checkpoint_interval,
        })
    }

    pub fn checkpoint_interval(&self) -> usize {
        self.checkpoint_interval
    }

    /// Fraction of probe contexts where the agent's greedy argmax agrees
    /// with the reference; `None` while the agent has unmodeled arms.
    pub fn agreement<A: Agent<F>>(&self, agent: &A) -> Result<Option<f64>> {
        let mut agree = 0usize;
        for (features, &reference) in self.features.iter().zip(&self.reference) {
            match agent.greedy_arm(features)? {
                Some(arm) if arm == reference => agree += 1,
                Some(_) => {}
                None => return Ok(None),
            }
        }
        Ok(Some(agree as f64 / self.features.len() as f64))
    }

    pub fn is_found<A: Agent<F>>(&self, agent: &A) -> Result<bool> {
        Ok(matches!(self.agreement(agent)?, Some(a) if a >= self.threshold))
    }
}

/// Best-in-class linear coefficients per arm: least squares of the
/// noiseless reward surfaces on `(1, x₀, x₁)` under the online context
/// distribution.
fn fit_linear_reference<F: Scalar, R: Rng + ?Sized>(
    env: &SyntheticEnv<F>,
    rng: &mut R,
) -> Result<Vec<Vec<F>>> {
    let d = 3;
    let mut gram = Matrix::<F>::zeros(d, d);
    let mut moments = vec![vec![F::zero(); d]; SYNTHETIC_ARMS];
    for _ in 0..REFERENCE_FIT_SAMPLES {
        let x = env.context(Phase::Online, rng);
        let row = [F::one(), x[0], x[1]];
        for j in 0..d {
            for k in 0..=j {
                gram[(j, k)] += row[j] * row[k];
            }
        }
        for (arm, moment) in moments.iter_mut().enumerate() {
            let y = env.expected_reward(arm, x)?;
            for j in 0..d {
                moment[j] += y * row[j];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[(k, j)] = gram[(j, k)];
        }
    }
    let factor = linalg::cholesky(&gram)?;
    Ok(moments
        .iter()
        .map(|moment| linalg::cholesky_solve(&factor, moment))
        .collect())
}

fn argmax_by<F: Scalar>(n: usize, mut score: impl FnMut(usize) -> F) -> usize {
    let mut best = 0usize;
    let mut best_score = F::neg_infinity();
    for i in 0..n {
        let s = score(i);
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

/// Runs one synthetic replication: the uniformly assigned warm-start batch
/// followed by `horizon` choose/observe rounds, with detection checkpoints
/// every `checkpoint_interval` online steps when a probe is given.
pub fn run_synthetic_replication<F: Scalar, A: Agent<F>>(
    env: &SyntheticEnv<F>,
    agent: &mut A,
    horizon: usize,
    replication: usize,
    base_seed: u64,
    probe: Option<&OptimalAssignmentProbe<F>>,
) -> Result<ReplicationResult> {
    let mut env_rng =
        ChaCha8Rng::seed_from_u64(stream_seed(base_seed, replication as u64, stream::ENV));
    let mut decision_rng =
        ChaCha8Rng::seed_from_u64(stream_seed(base_seed, replication as u64, stream::DECISION));

    let warm = env.warm_start_size();
    let mut steps = Vec::with_capacity(warm + horizon);
    let mut cum_all = 0.0;
    let uniform = 1.0 / SYNTHETIC_ARMS as f64;

    for i in 0..warm {
        let (x, arm, reward) = env.warm_draw(&mut env_rng)?;
        agent.observe_uniform(&env.features(x), arm, reward, F::cast(uniform))?;
        let regret = instantaneous_regret(env, arm, x)?;
        cum_all += regret;
        steps.push(StepRecord {
            replication,
            t: i,
            arm,
            reward: reward.to_f64_lossy(),
            regret,
            cum_regret: cum_all,
            propensity: uniform,
        });
    }

    let mut online_cum = 0.0;
    let mut found_step = None;
    for s in 0..horizon {
        let x = env.context(Phase::Online, &mut env_rng);
        let features = env.features(x);
        let (arm, propensity) = agent.choose(&features, &mut decision_rng)?;
        let reward = env.reward(arm, x, &mut env_rng)?;
        agent.observe(&features, arm, reward, propensity)?;
        let regret = instantaneous_regret(env, arm, x)?;
        cum_all += regret;
        online_cum += regret;
        steps.push(StepRecord {
            replication,
            t: warm + s,
            arm,
            reward: reward.to_f64_lossy(),
            regret,
            cum_regret: cum_all,
            propensity: propensity.to_f64_lossy(),
        });
        if let Some(probe) = probe {
            if found_step.is_none()
                && (s + 1) % probe.checkpoint_interval() == 0
                && probe.is_found(agent)?
            {
                found_step = Some(s + 1);
            }
        }
    }

    Ok(ReplicationResult {
        replication,
        steps,
        cum_regret: online_cum,
        norm_regret: None,
        found_step,
    })
}

fn instantaneous_regret<F: Scalar>(env: &SyntheticEnv<F>, arm: usize, x: [F; 2]) -> Result<f64> {
    let best = env.true_optimal_arm(x);
    let gap = env.expected_reward(best, x)? - env.expected_reward(arm, x)?;
    Ok(gap.to_f64_lossy())
}

/// Runs one classification replication over a seeded shuffle of the
/// dataset. Regret per round is `1 - reward`; the normalized cumulative
/// regret divides by the number of rounds played.
pub fn run_dataset_replication<F: Scalar, A: Agent<F>>(
    dataset: &ClassificationEnv<F>,
    agent: &mut A,
    horizon: Option<usize>,
    replication: usize,
    base_seed: u64,
) -> Result<ReplicationResult> {
    let env = dataset.shuffled(stream_seed(base_seed, replication as u64, stream::SHUFFLE));
    let mut decision_rng =
        ChaCha8Rng::seed_from_u64(stream_seed(base_seed, replication as u64, stream::DECISION));

    let rounds = horizon.unwrap_or(env.len()).min(env.len());
    let mut steps = Vec::with_capacity(rounds);
    let mut cum = 0.0;
    for t in 0..rounds {
        let x = env.context(t)?;
        let (arm, propensity) = agent.choose(&x, &mut decision_rng)?;
        let reward = env.reward(t, arm)?;
        agent.observe(&x, arm, reward, propensity)?;
        let regret = 1.0 - reward.to_f64_lossy();
        cum += regret;
        steps.push(StepRecord {
            replication,
            t,
            arm,
            reward: reward.to_f64_lossy(),
            regret,
            cum_regret: cum,
            propensity: propensity.to_f64_lossy(),
        });
    }

    Ok(ReplicationResult {
        replication,
        steps,
        cum_regret: cum,
        norm_regret: Some(cum / rounds as f64),
        found_step: None,
    })
}

/// Runs the full sweep: every (policy, α, γ) combination for the configured
/// number of replications. Replications run in parallel and are merged in
/// replication order, so results do not depend on scheduling.
pub fn run_experiment<F: Scalar>(config: &ExperimentConfig<F>) -> Result<ExperimentResult<F>> {
    config.validate()?;
    match &config.env {
        EnvSpec::SyntheticWell => run_synthetic_experiment(config, SpecMode::WellSpecified),
        EnvSpec::SyntheticMis => run_synthetic_experiment(config, SpecMode::Misspecified),
        EnvSpec::Dataset { path, label_column } => {
            let dataset = ClassificationEnv::<F>::load_csv(path, label_column.as_deref())?;
            run_dataset_experiment(config, &dataset)
        }
    }
}

fn run_synthetic_experiment<F: Scalar>(
    config: &ExperimentConfig<F>,
    mode: SpecMode,
) -> Result<ExperimentResult<F>> {
    let env = SyntheticEnv::<F>::new(mode);
    let probe = OptimalAssignmentProbe::build(
        &env,
        config.probe_size,
        config.agreement_threshold,
        config.checkpoint_interval,
        stream_seed(config.base_seed, 0, stream::PROBE),
    )?;
    let horizon = config.horizon.unwrap_or(super::DEFAULT_SYNTHETIC_HORIZON);
    let mut combos = Vec::new();
    for combo in config.combos() {
        let replications: Vec<ReplicationResult> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let mut policy = config.build_policy(
                    &combo,
                    env.feature_dim(),
                    env.n_arms(),
                    stream_seed(config.base_seed, rep as u64, stream::AUX),
                )?;
                run_synthetic_replication(
                    &env,
                    &mut policy,
                    horizon,
                    rep,
                    config.base_seed,
                    Some(&probe),
                )
            })
            .collect::<Result<_>>()?;
        combos.push(ComboResult {
            combo,
            replications,
        });
    }
    Ok(ExperimentResult {
        detection: true,
        combos,
    })
}

fn run_dataset_experiment<F: Scalar>(
    config: &ExperimentConfig<F>,
    dataset: &ClassificationEnv<F>,
) -> Result<ExperimentResult<F>> {
    let mut combos = Vec::new();
    for combo in config.combos() {
        let replications: Vec<ReplicationResult> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let mut policy = config.build_policy(
                    &combo,
                    dataset.context_dim(),
                    dataset.n_classes(),
                    stream_seed(config.base_seed, rep as u64, stream::AUX),
                )?;
                run_dataset_replication(dataset, &mut policy, config.horizon, rep, config.base_seed)
            })
            .collect::<Result<_>>()?;
        combos.push(ComboResult {
            combo,
            replications,
        });
    }
    Ok(ExperimentResult {
        detection: false,
        combos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;
    use std::cell::Cell;

    /// Plays the true-optimal arm; never learns.
    struct OracleAgent {
        env: SyntheticEnv<f64>,
    }

    impl Agent<f64> for OracleAgent {
        fn choose<R: Rng + ?Sized>(&mut self, x: &[f64], _rng: &mut R) -> Result<(usize, f64)> {
            // features carry the raw coordinates at positions 1 and 2
            Ok((self.env.true_optimal_arm([x[1], x[2]]), 1.0))
        }

        fn observe(&mut self, _x: &[f64], _arm: usize, _reward: f64, _p: f64) -> Result<()> {
            Ok(())
        }

        fn greedy_arm(&self, x: &[f64]) -> Result<Option<usize>> {
            Ok(Some(self.env.true_optimal_arm([x[1], x[2]])))
        }
    }

    /// Picks uniformly at random forever.
    struct UniformAgent {
        k: usize,
    }

    impl Agent<f64> for UniformAgent {
        fn choose<R: Rng + ?Sized>(&mut self, _x: &[f64], rng: &mut R) -> Result<(usize, f64)> {
            Ok((rng.random_range(0..self.k), 1.0 / self.k as f64))
        }

        fn observe(&mut self, _x: &[f64], _arm: usize, _reward: f64, _p: f64) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn oracle_agent_has_zero_online_regret() {
        let env = SyntheticEnv::<f64>::new(SpecMode::WellSpecified);
        let mut agent = OracleAgent { env: env.clone() };
        let result = run_synthetic_replication(&env, &mut agent, 200, 0, 7, None).unwrap();
        assert_eq!(result.cum_regret, 0.0);
        for step in &result.steps[env.warm_start_size()..] {
            assert_eq!(step.regret, 0.0);
        }
    }

    #[test]
    fn replications_replay_bit_identically() {
        let env = SyntheticEnv::<f64>::new(SpecMode::Misspecified);
        let config = ExperimentConfig::<f64>::new(EnvSpec::SyntheticMis);
        let combo = PolicyCombo {
            kind: PolicyKind::Blts,
            alpha: 1.0,
            gamma: Some(0.1),
        };
        let run = || {
            let mut policy = config
                .build_policy(&combo, env.feature_dim(), env.n_arms(), 123)
                .unwrap();
            run_synthetic_replication(&env, &mut policy, 60, 3, 42, None).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.cum_regret, b.cum_regret);
    }

    #[test]
    fn cumulative_regret_is_nondecreasing() {
        let env = SyntheticEnv::<f64>::new(SpecMode::WellSpecified);
        let config = ExperimentConfig::<f64>::new(EnvSpec::SyntheticWell);
        let combo = PolicyCombo {
            kind: PolicyKind::LinUcb,
            alpha: 2.0,
            gamma: None,
        };
        let mut policy = config
            .build_policy(&combo, env.feature_dim(), env.n_arms(), 5)
            .unwrap();
        let result = run_synthetic_replication(&env, &mut policy, 100, 0, 11, None).unwrap();
        let mut last = 0.0;
        for step in &result.steps {
            assert!(step.cum_regret >= last);
            assert!(step.regret >= 0.0);
            last = step.cum_regret;
        }
    }

    #[test]
    fn uniform_agent_norm_regret_matches_binomial_mean() {
        // balanced 4-class dataset: uniform play loses (K-1)/K of rounds
        let n = 2000;
        let k = 4;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 17) as f64]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let dataset = ClassificationEnv::from_matrix(
            Matrix::from_rows(&rows).unwrap(),
            labels,
        )
        .unwrap();
        let mut agent = UniformAgent { k };
        let result = run_dataset_replication(&dataset, &mut agent, None, 0, 9).unwrap();
        let norm = result.norm_regret.unwrap();
        let expect = (k - 1) as f64 / k as f64;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (norm - expect).abs() <= 3.0 * sigma,
            "norm {norm} vs {expect}"
        );
        assert!((0.0..=1.0).contains(&norm));
    }

    #[test]
    fn agreement_exactly_at_threshold_counts_as_found() {
        let env = SyntheticEnv::<f64>::new(SpecMode::WellSpecified);
        let probe = OptimalAssignmentProbe::build(&env, 20, 0.9, 10, 77).unwrap();

        // agrees with the reference on exactly 18 of 20 probe contexts
        struct Scripted {
            answers: Vec<usize>,
            next: Cell<usize>,
        }
        impl Agent<f64> for Scripted {
            fn choose<R: Rng + ?Sized>(&mut self, _x: &[f64], _r: &mut R) -> Result<(usize, f64)> {
                unreachable!("probe only calls greedy_arm")
            }
            fn observe(&mut self, _x: &[f64], _a: usize, _r: f64, _p: f64) -> Result<()> {
                Ok(())
            }
            fn greedy_arm(&self, _x: &[f64]) -> Result<Option<usize>> {
                let i = self.next.get();
                self.next.set(i + 1);
                Ok(Some(self.answers[i]))
            }
        }

        let mut answers = probe.reference.clone();
        answers[0] = (answers[0] + 1) % 3;
        answers[1] = (answers[1] + 1) % 3;
        let agent = Scripted {
            answers,
            next: Cell::new(0),
        };
        assert_eq!(probe.agreement(&agent).unwrap(), Some(0.9));
        let agent = Scripted {
            answers: probe.reference.clone(),
            next: Cell::new(0),
        };
        assert!(probe.is_found(&agent).unwrap());
    }

    #[test]
    fn exact_coefficients_are_found_at_the_first_checkpoint() {
        // greedy argmax from the true surfaces agrees with the reference
        // everywhere, so detection fires at the first checkpoint
        let env = SyntheticEnv::<f64>::new(SpecMode::WellSpecified);
        let probe = OptimalAssignmentProbe::build(&env, 200, 0.95, 10, 1).unwrap();
        let mut agent = OracleAgent { env: env.clone() };
        let result =
            run_synthetic_replication(&env, &mut agent, 30, 0, 2, Some(&probe)).unwrap();
        assert_eq!(result.found_step, Some(10));
    }

    #[test]
    fn never_playing_the_bump_arm_is_never_found() {
        // arm 0 is optimal on a positive-measure region, so a policy that
        // never assigns it cannot reach 95% agreement in well-specified mode
        struct NoArmZero {
            env: SyntheticEnv<f64>,
        }
        impl Agent<f64> for NoArmZero {
            fn choose<R: Rng + ?Sized>(&mut self, x: &[f64], _r: &mut R) -> Result<(usize, f64)> {
                Ok((self.greedy_arm(x)?.unwrap(), 1.0))
            }
            fn observe(&mut self, _x: &[f64], _a: usize, _r: f64, _p: f64) -> Result<()> {
                Ok(())
            }
            fn greedy_arm(&self, x: &[f64]) -> Result<Option<usize>> {
                let best = self.env.true_optimal_arm([x[1], x[2]]);
                Ok(Some(if best == 0 { 2 } else { best }))
            }
        }
        let env = SyntheticEnv::<f64>::new(SpecMode::WellSpecified);
        let probe = OptimalAssignmentProbe::build(&env, 500, 0.95, 10, 1).unwrap();
        let mut agent = NoArmZero { env: env.clone() };
        let result =
            run_synthetic_replication(&env, &mut agent, 100, 0, 2, Some(&probe)).unwrap();
        assert_eq!(result.found_step, None);
        let agreement = probe.agreement(&agent).unwrap().unwrap();
        assert!(agreement < 0.7, "agreement {agreement}");
    }

    #[test]
    fn misspecified_reference_rarely_plays_the_flat_arm() {
        // the best linear policy splits the plane between arms 0 and 2
        let env = SyntheticEnv::<f64>::new(SpecMode::Misspecified);
        let probe = OptimalAssignmentProbe::build(&env, 500, 0.95, 10, 3).unwrap();
        let ones = probe.reference.iter().filter(|&&a| a == 1).count();
        assert!(ones < 10, "arm 1 chosen {ones} times");
        let zeros = probe.reference.iter().filter(|&&a| a == 0).count() as f64 / 500.0;
        assert!((0.65..0.9).contains(&zeros), "arm 0 share {zeros}");
    }

    #[test]
    fn sweep_emits_one_combo_per_kind_alpha_gamma() {
        let mut config = ExperimentConfig::<f64>::new(EnvSpec::SyntheticWell);
        config.policies = vec![PolicyKind::Blts, PolicyKind::LinTs];
        config.alphas = Some(vec![0.25, 0.5]);
        config.gammas = vec![0.05, 0.1];
        let combos = config.combos();
        assert_eq!(combos.len(), 2 * 2 + 2);
        let labels: Vec<String> = combos.iter().map(|c| c.label()).collect();
        let unique: std::collections::HashSet<&String> = labels.iter().collect();
        assert_eq!(unique.len(), labels.len());
    }

    #[test]
    fn default_alphas_depend_on_kind() {
        let mut config = ExperimentConfig::<f64>::new(EnvSpec::SyntheticWell);
        config.policies = vec![PolicyKind::LinTs, PolicyKind::LinUcb];
        let combos = config.combos();
        assert_eq!(combos[0].alpha, 1.0);
        assert_eq!(combos[1].alpha, 2.0);
    }
}
