//! Group-relative policy optimization.
//!
//! Rewards of the G responses sampled for one query are standardized within
//! the group to get per-response advantages:
//!
//! ```text
//! A_i = (r_i - mean(r)) / std(r)          population std; A = 0 when std < floor
//! ```
//!
//! and the objective to maximize is the token-level clipped surrogate with a
//! KL penalty towards a frozen reference policy:
//!
//! ```text
//! J = 1/G Σ_i 1/|o_i| Σ_t [ min(ρ_it A_i, clip(ρ_it, 1-ε, 1+ε) A_i) - β k3_it ]
//! ρ_it  = exp(logπ_θ - logπ_old)
//! k3_it = exp(logπ_ref - logπ_θ) - (logπ_ref - logπ_θ) - 1
//! ```
//!
//! With single-token responses the token-level and sequence-level ratios
//! coincide. When a response carries several answers sampled in one round,
//! the joint ratio factorizes over its tokens.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::RewardBreakdown;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group has {0} responses, at least 2 are required")]
    GroupTooSmall(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("no groups in batch")]
    EmptyBatch,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub group_size: usize,
    pub advantage_std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            group_size: 8,
            advantage_std_floor: 1e-8,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(GrpoError::InvalidConfig(format!(
                "clip_epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err(GrpoError::InvalidConfig(format!(
                "kl_beta must be finite and non-negative, got {}",
                self.kl_beta
            )));
        }
        if self.group_size < 2 {
            return Err(GrpoError::GroupTooSmall(self.group_size));
        }
        Ok(())
    }
}

/// G responses to one query with their rewards and behaviour/reference
/// log-probabilities, one entry per token.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    /// Opaque handle to the query (visual input plus questions).
    pub query_id: u64,
    pub responses: Vec<Vec<u32>>,
    pub rewards: Vec<f64>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub ref_logprobs: Vec<Vec<f64>>,
    /// Per-response reward components; empty when not tracked.
    pub breakdowns: Vec<RewardBreakdown>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let g = self.responses.len();
        if g < 2 {
            return Err(GrpoError::GroupTooSmall(g));
        }
        if self.rewards.len() != g || self.old_logprobs.len() != g || self.ref_logprobs.len() != g
        {
            return Err(GrpoError::LengthMismatch(format!(
                "{g} responses but {} rewards, {} old and {} reference logprob rows",
                self.rewards.len(),
                self.old_logprobs.len(),
                self.ref_logprobs.len()
            )));
        }
        if !self.breakdowns.is_empty() && self.breakdowns.len() != g {
            return Err(GrpoError::LengthMismatch(format!(
                "{g} responses but {} reward breakdowns",
                self.breakdowns.len()
            )));
        }
        for (i, tokens) in self.responses.iter().enumerate() {
            if tokens.is_empty() {
                return Err(GrpoError::LengthMismatch(format!("response {i} has no tokens")));
            }
            if self.old_logprobs[i].len() != tokens.len() || self.ref_logprobs[i].len() != tokens.len()
            {
                return Err(GrpoError::LengthMismatch(format!(
                    "response {i} has {} tokens but {} old / {} reference logprobs",
                    tokens.len(),
                    self.old_logprobs[i].len(),
                    self.ref_logprobs[i].len()
                )));
            }
        }
        check_finite("reward", &self.rewards)?;
        for row in self.old_logprobs.iter().chain(&self.ref_logprobs) {
            check_finite("logprob", row)?;
        }
        Ok(())
    }

    pub fn token_count(&self) -> usize {
        self.responses.iter().map(Vec::len).sum()
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), GrpoError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(GrpoError::NonFiniteInput(format!("{what} {v}"))),
        None => Ok(()),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Within-response reduction of per-token terms: the token mean.
fn reduce_tokens(terms: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = terms.len() as f64;
    terms.sum::<f64>() / n
}

/// Standardizes rewards within the group. A group whose spread is below
/// `std_floor` gets all-zero advantages.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    check_finite("reward", rewards)?;
    let m = mean(rewards);
    let s = population_std(rewards);
    if s < std_floor {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - m) / s).collect())
}

fn k3(policy: f64, reference: f64) -> f64 {
    let d = reference - policy;
    d.exp() - d - 1.0
}

/// Per-token k3 estimate of KL(π_θ ‖ π_ref); non-negative, zero iff equal.
pub fn kl_estimate(policy_logprob: &[f64], ref_logprob: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if policy_logprob.len() != ref_logprob.len() {
        return Err(GrpoError::LengthMismatch(format!(
            "{} policy vs {} reference logprobs",
            policy_logprob.len(),
            ref_logprob.len()
        )));
    }
    Ok(policy_logprob
        .iter()
        .zip(ref_logprob)
        .map(|(&p, &r)| k3(p, r))
        .collect())
}

fn check_new_logprobs(group: &RolloutGroup, new_logprobs: &[Vec<f64>]) -> Result<(), GrpoError> {
    group.validate()?;
    if new_logprobs.len() != group.len() {
        return Err(GrpoError::LengthMismatch(format!(
            "{} new logprob rows for {} responses",
            new_logprobs.len(),
            group.len()
        )));
    }
    for (i, row) in new_logprobs.iter().enumerate() {
        if row.len() != group.responses[i].len() {
            return Err(GrpoError::LengthMismatch(format!(
                "response {i}: {} new logprobs for {} tokens",
                row.len(),
                group.responses[i].len()
            )));
        }
        check_finite("new logprob", row)?;
    }
    Ok(())
}

/// Clip-min term for one token and its derivative w.r.t. the new logprob.
/// The clipped branch has zero subgradient.
fn clip_term(ratio: f64, advantage: f64, epsilon: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// The clipped, KL-penalized surrogate `J` evaluated at `new_logprobs`.
pub fn clipped_surrogate(
    group: &RolloutGroup,
    new_logprobs: &[Vec<f64>],
    config: &GrpoConfig,
) -> Result<f64, GrpoError> {
    check_new_logprobs(group, new_logprobs)?;
    let advantages = group_advantages(&group.rewards, config.advantage_std_floor)?;
    let per_response: Vec<f64> = (0..group.len())
        .map(|i| {
            let old = &group.old_logprobs[i];
            let reference = &group.ref_logprobs[i];
            reduce_tokens(new_logprobs[i].iter().enumerate().map(|(t, &new)| {
                let ratio = (new - old[t]).exp();
                let (term, _) = clip_term(ratio, advantages[i], config.clip_epsilon);
                term - config.kl_beta * k3(new, reference[t])
            }))
        })
        .collect();
    Ok(mean(&per_response))
}

/// ∂J/∂(new logprob) for every token of every response.
pub fn surrogate_logprob_weights(
    group: &RolloutGroup,
    new_logprobs: &[Vec<f64>],
    config: &GrpoConfig,
) -> Result<Vec<Vec<f64>>, GrpoError> {
    check_new_logprobs(group, new_logprobs)?;
    let advantages = group_advantages(&group.rewards, config.advantage_std_floor)?;
    let g = group.len() as f64;
    Ok((0..group.len())
        .map(|i| {
            let old = &group.old_logprobs[i];
            let reference = &group.ref_logprobs[i];
            let scale = 1.0 / (g * new_logprobs[i].len() as f64);
            new_logprobs[i]
                .iter()
                .enumerate()
                .map(|(t, &new)| {
                    let ratio = (new - old[t]).exp();
                    let (_, d_clip) = clip_term(ratio, advantages[i], config.clip_epsilon);
                    let d_kl = 1.0 - (reference[t] - new).exp();
                    scale * (d_clip - config.kl_beta * d_kl)
                })
                .collect()
        })
        .collect())
}

/// A policy whose token log-probabilities are differentiable in its
/// parameters.
pub trait DifferentiablePolicy {
    type Gradient;

    /// log π(token) for each token of each response in `group`.
    fn token_logprobs(&self, group: &RolloutGroup) -> Vec<Vec<f64>>;

    /// Σ_it weights[i][t] · ∂ log π(token_it) / ∂θ.
    fn backprop(&self, group: &RolloutGroup, weights: &[Vec<f64>]) -> Self::Gradient;
}

/// Exact gradient of [`clipped_surrogate`] w.r.t. the policy parameters,
/// evaluated at the policy's current log-probabilities.
pub fn objective_gradient<P: DifferentiablePolicy>(
    group: &RolloutGroup,
    policy: &P,
    config: &GrpoConfig,
) -> Result<P::Gradient, GrpoError> {
    let new_logprobs = policy.token_logprobs(group);
    let weights = surrogate_logprob_weights(group, &new_logprobs, config)?;
    Ok(policy.backprop(group, &weights))
}

/// Per-step training statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub mean_reward: f64,
    pub r_t_mean: f64,
    pub r_a_mean: f64,
    /// Fraction of groups in which every reward exceeds the threshold.
    pub all_correct_ratio: f64,
    /// Fraction of groups in which no reward exceeds the threshold.
    pub all_wrong_ratio: f64,
    pub mean_completion_length: f64,
    /// J at the sampling policy, averaged over groups.
    pub objective_value: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str =
        "step,mean_reward,r_t_mean,r_a_mean,all_correct_ratio,completion_length,objective";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.mean_reward,
            self.r_t_mean,
            self.r_a_mean,
            self.all_correct_ratio,
            self.mean_completion_length,
            self.objective_value
        )
    }
}

/// Renders diagnostics as CSV with a header line.
pub fn diagnostics_csv(steps: &[StepDiagnostics]) -> String {
    let mut out = String::from(StepDiagnostics::CSV_HEADER);
    out.push('\n');
    for s in steps {
        let _ = writeln!(out, "{}", s.csv_row());
    }
    out
}

pub fn step_diagnostics(
    groups: &[RolloutGroup],
    correctness_threshold: f64,
    config: &GrpoConfig,
) -> Result<StepDiagnostics, GrpoError> {
    step_diagnostics_by(groups, &vec![correctness_threshold; groups.len()], config)
}

/// Like [`step_diagnostics`] with a separate correctness threshold per group,
/// for batches mixing tasks whose maximum reward differs.
pub fn step_diagnostics_by(
    groups: &[RolloutGroup],
    thresholds: &[f64],
    config: &GrpoConfig,
) -> Result<StepDiagnostics, GrpoError> {
    if groups.is_empty() {
        return Err(GrpoError::EmptyBatch);
    }
    if thresholds.len() != groups.len() {
        return Err(GrpoError::LengthMismatch(format!(
            "{} thresholds for {} groups",
            thresholds.len(),
            groups.len()
        )));
    }
    let mut rewards = 0.0;
    let mut r_t = 0.0;
    let mut r_a = 0.0;
    let mut responses = 0usize;
    let mut tokens = 0usize;
    let mut all_correct = 0usize;
    let mut all_wrong = 0usize;
    let mut objective = 0.0;
    for (group, &correctness_threshold) in groups.iter().zip(thresholds) {
        group.validate()?;
        rewards += group.rewards.iter().sum::<f64>();
        r_t += group.breakdowns.iter().map(|b| b.r_t).sum::<f64>();
        r_a += group.breakdowns.iter().map(|b| b.r_a).sum::<f64>();
        responses += group.len();
        tokens += group.token_count();
        let correct = group
            .rewards
            .iter()
            .filter(|&&r| r > correctness_threshold)
            .count();
        all_correct += usize::from(correct == group.len());
        all_wrong += usize::from(correct == 0);
        objective += clipped_surrogate(group, &group.old_logprobs, config)?;
    }
    let n_groups = groups.len() as f64;
    Ok(StepDiagnostics {
        step: 0,
        mean_reward: rewards / responses as f64,
        r_t_mean: r_t / responses as f64,
        r_a_mean: r_a / responses as f64,
        all_correct_ratio: all_correct as f64 / n_groups,
        all_wrong_ratio: all_wrong as f64 / n_groups,
        mean_completion_length: tokens as f64 / responses as f64,
        objective_value: objective / n_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_token_group(rewards: Vec<f64>) -> RolloutGroup {
        let g = rewards.len();
        RolloutGroup {
            query_id: 0,
            responses: vec![vec![0]; g],
            rewards,
            old_logprobs: vec![vec![-1.0]; g],
            ref_logprobs: vec![vec![-1.0]; g],
            breakdowns: vec![],
        }
    }

    /// Independent mean/std: two-pass with explicit loops.
    fn oracle_mean_std(values: &[f64]) -> (f64, f64) {
        let mut sum = 0.0;
        for v in values {
            sum += v;
        }
        let m = sum / values.len() as f64;
        let mut sq = 0.0;
        for v in values {
            sq += (v - m) * (v - m);
        }
        (m, (sq / values.len() as f64).sqrt())
    }

    #[test]
    fn advantage_examples() {
        let r = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(oracle_mean_std(&r), (0.5, 0.5));
        assert_eq!(group_advantages(&r, 1e-8).unwrap(), vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(group_advantages(&[0.7; 5], 1e-8).unwrap(), vec![0.0; 5]);
        assert_eq!(oracle_mean_std(&[2.0, 0.0]), (1.0, 1.0));
        assert_eq!(group_advantages(&[2.0, 0.0], 1e-8).unwrap(), vec![1.0, -1.0]);
        assert_eq!(group_advantages(&[1.0], 1e-8), Err(GrpoError::GroupTooSmall(1)));
        assert!(matches!(
            group_advantages(&[1.0, f64::NAN], 1e-8),
            Err(GrpoError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_estimate(&[-0.3, -2.0], &[-0.3, -2.0]).unwrap(), vec![0.0, 0.0]);
        let reference = -0.5;
        let policy = reference - std::f64::consts::LN_2;
        let v = kl_estimate(&[policy], &[reference]).unwrap()[0];
        assert!((v - (2.0 - std::f64::consts::LN_2 - 1.0)).abs() < 1e-12);
        assert!((v - 0.3069).abs() < 1e-4);
        assert!(matches!(
            kl_estimate(&[0.0], &[0.0, 1.0]),
            Err(GrpoError::LengthMismatch(_))
        ));
    }

    #[test]
    fn kl_is_nonnegative_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p: f64 = rng.random_range(-8.0..0.0);
            let r: f64 = rng.random_range(-8.0..0.0);
            let k = kl_estimate(&[p], &[r]).unwrap()[0];
            assert!(k >= 0.0, "k3({p}, {r}) = {k}");
            if p != r {
                assert!(k > 0.0 || (p - r).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn unit_ratios_give_zero_objective() {
        let group = single_token_group(vec![1.0, 0.0, 3.0, 0.5]);
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        let j = clipped_surrogate(&group, &group.old_logprobs.clone(), &cfg).unwrap();
        assert!(j.abs() < 1e-15, "{j}");
    }

    /// Two-branch oracle: evaluate both branches of the min explicitly.
    #[test]
    fn clip_example_evaluates_to_one_tenth() {
        let mut group = single_token_group(vec![2.0, 0.0]); // advantages {1, -1}
        group.old_logprobs = vec![vec![-1.0], vec![-1.0]];
        let new = vec![vec![-1.0 + 1.5f64.ln()], vec![-1.0]];
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        let branches = |ratio: f64, a: f64| {
            let unclipped = ratio * a;
            let clipped = ratio.clamp(0.8, 1.2) * a;
            if unclipped < clipped {
                unclipped
            } else {
                clipped
            }
        };
        let oracle = (branches(1.5, 1.0) + branches(1.0, -1.0)) / 2.0;
        assert!((oracle - 0.1).abs() < 1e-12);
        let j = clipped_surrogate(&group, &new, &cfg).unwrap();
        assert!((j - 0.1).abs() < 1e-12, "{j}");
        // negative advantage with a large ratio is not clipped
        let new = vec![vec![-1.0], vec![-1.0 + 1.5f64.ln()]];
        let j = clipped_surrogate(&group, &new, &cfg).unwrap();
        assert!((j - (1.0 - 1.5) / 2.0).abs() < 1e-12, "{j}");
    }

    #[test]
    fn zero_advantages_leave_only_the_kl_term() {
        let mut group = single_token_group(vec![1.0; 3]);
        group.ref_logprobs = vec![vec![-0.2], vec![-1.5], vec![-3.0]];
        let new = vec![vec![-0.4], vec![-1.0], vec![-2.0]];
        let cfg = GrpoConfig::default();
        let j = clipped_surrogate(&group, &new, &cfg).unwrap();
        let kl: f64 = (0..3)
            .map(|i| kl_estimate(&new[i], &group.ref_logprobs[i]).unwrap()[0])
            .sum::<f64>()
            / 3.0;
        assert!((j + cfg.kl_beta * kl).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let group = single_token_group(vec![1.0, 0.0]);
        let cfg = GrpoConfig::default();
        assert!(matches!(
            clipped_surrogate(&group, &[vec![0.0]], &cfg),
            Err(GrpoError::LengthMismatch(_))
        ));
        assert!(matches!(
            clipped_surrogate(&group, &[vec![0.0, 1.0], vec![0.0]], &cfg),
            Err(GrpoError::LengthMismatch(_))
        ));
        assert!(matches!(
            clipped_surrogate(&group, &[vec![f64::INFINITY], vec![0.0]], &cfg),
            Err(GrpoError::NonFiniteInput(_))
        ));
        let mut bad = group.clone();
        bad.old_logprobs[0].push(0.0);
        assert!(bad.validate().is_err());
        assert!(single_token_group(vec![1.0]).validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        for cfg in [
            GrpoConfig { clip_epsilon: 0.0, ..Default::default() },
            GrpoConfig { clip_epsilon: 1.0, ..Default::default() },
            GrpoConfig { kl_beta: -0.1, ..Default::default() },
            GrpoConfig { group_size: 1, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn diagnostics_counting() {
        let cfg = GrpoConfig::default();
        let all_right = single_token_group(vec![1.0, 1.0, 1.0]);
        let mixed = single_token_group(vec![1.0, 0.0, 1.0]);
        let all_bad = single_token_group(vec![0.0, 0.0, 0.0]);
        let d = step_diagnostics(std::slice::from_ref(&all_right), 0.5, &cfg).unwrap();
        assert_eq!(d.all_correct_ratio, 1.0);
        let d = step_diagnostics(&[all_right.clone(), mixed.clone()], 0.5, &cfg).unwrap();
        assert_eq!(d.all_correct_ratio, 0.5);
        assert_eq!(d.all_wrong_ratio, 0.0);
        assert!((d.mean_reward - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(d.mean_completion_length, 1.0);
        let d = step_diagnostics(&[all_right, mixed, all_bad], 0.5, &cfg).unwrap();
        assert!((d.all_wrong_ratio - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(step_diagnostics(&[], 0.5, &cfg), Err(GrpoError::EmptyBatch));
    }

    #[test]
    fn diagnostics_match_direct_counting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let groups: Vec<RolloutGroup> = (0..40)
            .map(|_| {
                let g = rng.random_range(2..9);
                let mut group = single_token_group(
                    (0..g).map(|_| f64::from(rng.random_range(0..3u8)) * 0.5).collect(),
                );
                for (i, resp) in group.responses.iter_mut().enumerate() {
                    resp.resize(1 + i % 3, 0);
                    group.old_logprobs[i] = vec![-1.0; resp.len()];
                    group.ref_logprobs[i] = vec![-1.0; resp.len()];
                }
                group
            })
            .collect();
        let threshold = 0.75;
        let d = step_diagnostics(&groups, threshold, &GrpoConfig::default()).unwrap();
        let mut correct_groups = 0;
        let mut wrong_groups = 0;
        let mut total = 0.0;
        let mut count = 0;
        let mut tokens = 0;
        for g in &groups {
            let mut all = true;
            let mut none = true;
            for (i, &r) in g.rewards.iter().enumerate() {
                all &= r > threshold;
                none &= r <= threshold;
                total += r;
                count += 1;
                tokens += g.responses[i].len();
            }
            correct_groups += all as usize;
            wrong_groups += none as usize;
        }
        assert_eq!(d.all_correct_ratio, correct_groups as f64 / 40.0);
        assert_eq!(d.all_wrong_ratio, wrong_groups as f64 / 40.0);
        assert!((d.mean_reward - total / count as f64).abs() < 1e-12);
        assert!((d.mean_completion_length - tokens as f64 / count as f64).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let csv = diagnostics_csv(&[StepDiagnostics {
            step: 3,
            mean_reward: 1.5,
            ..Default::default()
        }]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(StepDiagnostics::CSV_HEADER));
        assert_eq!(lines.next(), Some("3,1.5,0,0,0,0,0"));
    }

    fn reward_group() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, 2..12)
    }

    proptest! {
        #[test]
        fn advantages_are_standardized(rewards in reward_group()) {
            let a = group_advantages(&rewards, 1e-8).unwrap();
            let (_, s) = oracle_mean_std(&rewards);
            if s >= 1e-8 {
                let (am, astd) = oracle_mean_std(&a);
                prop_assert!(am.abs() < 1e-9);
                prop_assert!((astd - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(a.iter().all(|&v| v == 0.0));
            }
        }

        #[test]
        fn advantages_ignore_shift_and_scale(rewards in reward_group(), shift in -3.0f64..3.0, scale in 0.1f64..10.0) {
            prop_assume!(oracle_mean_std(&rewards).1 > 1e-3);
            let base = group_advantages(&rewards, 1e-8).unwrap();
            let moved: Vec<f64> = rewards.iter().map(|r| r * scale + shift).collect();
            let other = group_advantages(&moved, 1e-8).unwrap();
            for (x, y) in base.iter().zip(&other) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn huge_epsilon_reduces_to_ratio_weighted_advantage(
            rewards in proptest::collection::vec(0.0f64..1.0, 2..6),
            shifts in proptest::collection::vec(-0.3f64..0.3, 6),
        ) {
            let group = single_token_group(rewards);
            let g = group.len();
            let new: Vec<Vec<f64>> = (0..g).map(|i| vec![-1.0 + shifts[i]]).collect();
            let cfg = GrpoConfig { clip_epsilon: 1.0 - 1e-12, kl_beta: 0.0, ..Default::default() };
            // ratios stay within (0.74, 1.35) so only the upper clip can bind
            let adv = group_advantages(&group.rewards, cfg.advantage_std_floor).unwrap();
            let unclipped: f64 = (0..g).map(|i| shifts[i].exp() * adv[i]).sum::<f64>() / g as f64;
            let j = clipped_surrogate(&group, &new, &cfg).unwrap();
            prop_assert!((j - unclipped).abs() < 1e-12);
        }
    }
}
