//! Group sampling and the GRPO training loop for the toy policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::policy::{encode_token, RowKey, Slot, ToyPolicy};
use super::task::{Difficulty, Route, TaskPool, ToyTask, ANSWER_ARITY};
use crate::grammar::TaggedResponse;
use crate::grpo::{
    objective_gradient, step_diagnostics_by, GrpoConfig, RolloutGroup, StepDiagnostics,
};
use crate::pretext::letter_of;
use crate::reward::{score, RewardBreakdown, RewardConfig, RewardMode};

/// Slack below the maximum total that still counts as fully correct.
const CORRECT_SLACK: f64 = 1e-9;
const TASK_STREAM: u64 = 0x706f_6f6c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Pretext,
    Vanilla,
    Viss,
    /// Pretext mode for the first `pretext_fraction` of steps, then vanilla.
    PretextPlus,
}

impl TrainMode {
    fn reward_mode(self, step: usize, switch_step: usize) -> RewardMode {
        match self {
            TrainMode::Pretext => RewardMode::Pretext,
            TrainMode::Vanilla => RewardMode::Vanilla,
            TrainMode::Viss => RewardMode::Viss,
            TrainMode::PretextPlus if step < switch_step => RewardMode::Pretext,
            TrainMode::PretextPlus => RewardMode::Vanilla,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub mode: TrainMode,
    pub steps: usize,
    pub seed: u64,
    pub groups_per_step: usize,
    pub learning_rate: f64,
    /// Ascent steps taken on each sampled batch; ratios leave 1 after the first.
    pub updates_per_batch: usize,
    pub pretext_fraction: f64,
    pub pool_size: usize,
    pub difficulty: Difficulty,
    pub grpo: GrpoConfig,
    /// Reward scales; the mode field is set per task route.
    pub rewards: RewardConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pretext,
            steps: 500,
            seed: 0,
            groups_per_step: 16,
            learning_rate: 0.5,
            updates_per_batch: 1,
            pretext_fraction: 1.0 / 3.0,
            pool_size: TaskPool::DEFAULT_SIZE,
            difficulty: Difficulty::Full,
            grpo: GrpoConfig::default(),
            rewards: RewardConfig::default(),
        }
    }
}

impl ToyConfig {
    fn switch_step(&self) -> usize {
        (self.steps as f64 * self.pretext_fraction.clamp(0.0, 1.0)).round() as usize
    }
}

/// A sampled group and the reward it takes to count as fully correct.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub route: Route,
    pub group: RolloutGroup,
    pub correct_threshold: f64,
}

fn route_rewards(rewards: &RewardConfig, route: Route) -> RewardConfig {
    RewardConfig {
        mode: route.reward_mode(),
        ..*rewards
    }
}

/// Canonical tagged text for a sampled action.
pub fn render_response(route: Route, transform_option: Option<u8>, answer_option: Option<u8>) -> String {
    let letter = |o: Option<u8>| letter_of(o.expect("route needs a transform token") as usize).to_string();
    let number = |o: Option<u8>| o.expect("route needs an answer token").to_string();
    let response = match route {
        Route::Pretext => TaggedResponse {
            think: "Compare the frames with a natural view.".into(),
            transform_answer: None,
            user_answer: letter(transform_option),
        },
        Route::Vanilla => TaggedResponse {
            think: "Locate the requested cells.".into(),
            transform_answer: None,
            user_answer: number(answer_option),
        },
        Route::Viss => TaggedResponse {
            think: "Identify the transform, undo it, then read the cells.".into(),
            transform_answer: Some(letter(transform_option)),
            user_answer: number(answer_option),
        },
    };
    response.render()
}

fn transform_arity(task: &ToyTask) -> u8 {
    task.spec
        .expect("pretext and viss routes have a transform")
        .family()
        .cardinality()
}

fn score_action(task: &ToyTask, route: Route, rewards: &RewardConfig, t: Option<u8>, a: Option<u8>) -> RewardBreakdown {
    score(
        &render_response(route, t, a),
        Some(&task.descriptor()),
        task.pretext.as_ref(),
        &route_rewards(rewards, route),
    )
}

/// Samples `group_size` responses to `task` from `policy`. In viss mode each
/// response is a transform token followed by an answer token, drawn in one
/// pass. `mode` in `rewards` is ignored in favour of `mode`.
pub fn sample_group(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    task: &ToyTask,
    mode: RewardMode,
    rewards: &RewardConfig,
    group_size: usize,
    seed: u64,
) -> Rollout {
    let route = task.route(mode);
    let observation = task.observation(route);
    let mut group = RolloutGroup {
        query_id: observation,
        responses: Vec::with_capacity(group_size),
        rewards: Vec::with_capacity(group_size),
        old_logprobs: Vec::with_capacity(group_size),
        ref_logprobs: Vec::with_capacity(group_size),
        breakdowns: Vec::with_capacity(group_size),
    };
    for i in 0..group_size {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, i as u64]));
        let mut tokens = Vec::with_capacity(2);
        let mut old = Vec::with_capacity(2);
        let mut refs = Vec::with_capacity(2);
        let mut pick = |key: RowKey, slot: Slot, arity: u8, rng: &mut ChaCha8Rng| {
            let option = policy.sample(&key, arity, rng);
            tokens.push(encode_token(slot, arity, option));
            old.push(policy.log_prob(&key, arity, option));
            refs.push(reference.log_prob(&key, arity, option));
            option
        };
        let transform_key = RowKey {
            observation,
            slot: Slot::Transform,
            prefix: None,
        };
        let (t, a) = match route {
            Route::Pretext => {
                let t = pick(transform_key, Slot::Transform, transform_arity(task), &mut rng);
                (Some(t), None)
            }
            Route::Vanilla => {
                let key = RowKey {
                    observation,
                    slot: Slot::Answer,
                    prefix: None,
                };
                (None, Some(pick(key, Slot::Answer, ANSWER_ARITY, &mut rng)))
            }
            Route::Viss => {
                let t = pick(transform_key, Slot::Transform, transform_arity(task), &mut rng);
                let key = RowKey {
                    observation,
                    slot: Slot::Answer,
                    prefix: Some(t),
                };
                (Some(t), Some(pick(key, Slot::Answer, ANSWER_ARITY, &mut rng)))
            }
        };
        let breakdown = score_action(task, route, rewards, t, a);
        group.responses.push(tokens);
        group.rewards.push(breakdown.total);
        group.old_logprobs.push(old);
        group.ref_logprobs.push(refs);
        group.breakdowns.push(breakdown);
    }
    Rollout {
        route,
        group,
        correct_threshold: route_rewards(rewards, route).max_total() - CORRECT_SLACK,
    }
}

/// Exact expected total reward of `policy` on `task`, by enumerating every
/// action.
pub fn expected_reward(policy: &ToyPolicy, task: &ToyTask, mode: RewardMode, rewards: &RewardConfig) -> f64 {
    let route = task.route(mode);
    let observation = task.observation(route);
    let key = |slot, prefix| RowKey {
        observation,
        slot,
        prefix,
    };
    match route {
        Route::Pretext => {
            let arity = transform_arity(task);
            let probs = policy.probabilities(&key(Slot::Transform, None), arity);
            (0..arity)
                .map(|t| probs[t as usize] * score_action(task, route, rewards, Some(t), None).total)
                .sum()
        }
        Route::Vanilla => {
            let probs = policy.probabilities(&key(Slot::Answer, None), ANSWER_ARITY);
            (0..ANSWER_ARITY)
                .map(|a| probs[a as usize] * score_action(task, route, rewards, None, Some(a)).total)
                .sum()
        }
        Route::Viss => {
            let arity = transform_arity(task);
            let t_probs = policy.probabilities(&key(Slot::Transform, None), arity);
            (0..arity)
                .map(|t| {
                    let a_probs = policy.probabilities(&key(Slot::Answer, Some(t)), ANSWER_ARITY);
                    let inner: f64 = (0..ANSWER_ARITY)
                        .map(|a| a_probs[a as usize] * score_action(task, route, rewards, Some(t), Some(a)).total)
                        .sum();
                    t_probs[t as usize] * inner
                })
                .sum()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub diagnostics: Vec<StepDiagnostics>,
    pub policy: ToyPolicy,
}

/// Trains from a uniform policy on the default pool for `config.seed`.
pub fn train(config: &ToyConfig) -> TrainOutcome {
    let pool = TaskPool::generate(config.seed, config.pool_size, config.difficulty);
    train_with(config, &pool, ToyPolicy::uniform(), |_, _| {})
}

/// The GRPO loop: sample groups with the current policy, score them, take
/// `updates_per_batch` ascent steps on the summed group objectives. The
/// reference policy is `initial`, frozen. `observer` sees each step's
/// diagnostics and the updated policy.
pub fn train_with<F>(config: &ToyConfig, pool: &TaskPool, initial: ToyPolicy, mut observer: F) -> TrainOutcome
where
    F: FnMut(&StepDiagnostics, &ToyPolicy),
{
    assert!(!pool.is_empty(), "task pool must not be empty");
    config.grpo.validate().expect("valid GRPO config");
    let reference = initial.clone();
    let mut policy = initial;
    let switch_step = config.switch_step();
    let mut diagnostics = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mode = config.mode.reward_mode(step, switch_step);
        let mut picker = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, step as u64, TASK_STREAM]));
        let rollouts: Vec<Rollout> = (0..config.groups_per_step)
            .map(|b| {
                let task = &pool.tasks()[rand::Rng::random_range(&mut picker, 0..pool.len())];
                let seed = derive_seed(&[config.seed, step as u64, b as u64]);
                sample_group(&policy, &reference, task, mode, &config.rewards, config.grpo.group_size, seed)
            })
            .collect();

        for _ in 0..config.updates_per_batch.max(1) {
            let mut total = super::PolicyGradient::default();
            for rollout in &rollouts {
                let g = objective_gradient(&rollout.group, &policy, &config.grpo)
                    .expect("sampled groups are well formed");
                total.accumulate(&g);
            }
            policy.apply_gradient(&total, config.learning_rate);
        }

        let groups: Vec<RolloutGroup> = rollouts.iter().map(|r| r.group.clone()).collect();
        let thresholds: Vec<f64> = rollouts.iter().map(|r| r.correct_threshold).collect();
        let mut diag = step_diagnostics_by(&groups, &thresholds, &config.grpo).expect("non-empty batch");
        diag.step = step;
        observer(&diag, &policy);
        diagnostics.push(diag);
    }
    TrainOutcome { diagnostics, policy }
}
