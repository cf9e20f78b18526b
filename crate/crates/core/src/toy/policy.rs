//! Tabular softmax policy over single-token slots.

use std::collections::BTreeMap;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::grpo::{DifferentiablePolicy, RolloutGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Transform = 0,
    Answer = 1,
}

/// One row of logits: an observation, the slot being filled and, for an
/// answer that follows a transform token, the option chosen there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub observation: u64,
    pub slot: Slot,
    pub prefix: Option<u8>,
}

/// Packs slot, arity and option into one token id.
pub fn encode_token(slot: Slot, arity: u8, option: u8) -> u32 {
    debug_assert!(option < arity);
    (slot as u32) << 16 | u32::from(arity) << 8 | u32::from(option)
}

/// Inverse of [`encode_token`].
pub fn decode_token(token: u32) -> Option<(Slot, u8, u8)> {
    let slot = match token >> 16 {
        0 => Slot::Transform,
        1 => Slot::Answer,
        _ => return None,
    };
    let arity = ((token >> 8) & 0xff) as u8;
    let option = (token & 0xff) as u8;
    (option < arity).then_some((slot, arity, option))
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Sparse table of logit rows; a row that was never written is all zeros
/// (uniform).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToyPolicy {
    rows: BTreeMap<RowKey, Vec<f64>>,
}

/// Gradient with the same sparse layout as the policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyGradient {
    rows: BTreeMap<RowKey, Vec<f64>>,
}

impl PolicyGradient {
    pub fn get(&self, key: &RowKey) -> Option<&[f64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RowKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    fn row_mut(&mut self, key: RowKey, arity: usize) -> &mut Vec<f64> {
        self.rows.entry(key).or_insert_with(|| vec![0.0; arity])
    }

    /// Adds `other` into `self`, row by row in key order.
    pub fn accumulate(&mut self, other: &PolicyGradient) {
        for (key, row) in &other.rows {
            let mine = self.row_mut(*key, row.len());
            for (m, g) in mine.iter_mut().zip(row) {
                *m += g;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.rows.values().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl ToyPolicy {
    pub fn uniform() -> Self {
        Self::default()
    }

    /// Maximum-likelihood warm start from (row, arity, option) counts:
    /// each logit is ln(count + alpha).
    pub fn from_counts<I>(records: I, alpha: f64) -> Self
    where
        I: IntoIterator<Item = (RowKey, u8, u8)>,
    {
        assert!(alpha > 0.0, "smoothing must be positive");
        let mut counts: BTreeMap<RowKey, Vec<f64>> = BTreeMap::new();
        for (key, arity, option) in records {
            counts.entry(key).or_insert_with(|| vec![0.0; arity as usize])[option as usize] += 1.0;
        }
        let rows = counts
            .into_iter()
            .map(|(k, c)| (k, c.into_iter().map(|n| (n + alpha).ln()).collect()))
            .collect();
        Self { rows }
    }

    pub fn logits(&self, key: &RowKey, arity: u8) -> Vec<f64> {
        match self.rows.get(key) {
            Some(row) => {
                assert_eq!(row.len(), arity as usize, "arity changed for {key:?}");
                row.clone()
            }
            None => vec![0.0; arity as usize],
        }
    }

    pub fn set_logits(&mut self, key: RowKey, logits: Vec<f64>) {
        assert!(logits.iter().all(|l| l.is_finite()), "logits must be finite");
        self.rows.insert(key, logits);
    }

    pub fn log_probs(&self, key: &RowKey, arity: u8) -> Vec<f64> {
        log_softmax(&self.logits(key, arity))
    }

    pub fn probabilities(&self, key: &RowKey, arity: u8) -> Vec<f64> {
        self.log_probs(key, arity).into_iter().map(f64::exp).collect()
    }

    pub fn log_prob(&self, key: &RowKey, arity: u8, option: u8) -> f64 {
        self.log_probs(key, arity)[option as usize]
    }

    /// Inverse-CDF draw from the row's softmax.
    pub fn sample<R: Rng + ?Sized>(&self, key: &RowKey, arity: u8, rng: &mut R) -> u8 {
        let probs = self.probabilities(key, arity);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i as u8;
            }
        }
        arity - 1
    }

    /// Exact KL(self ‖ reference) on one row.
    pub fn exact_kl(&self, reference: &ToyPolicy, key: &RowKey, arity: u8) -> f64 {
        let p = self.log_probs(key, arity);
        let q = reference.log_probs(key, arity);
        p.iter().zip(&q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum()
    }

    /// Gradient ascent: θ ← θ + lr·g.
    pub fn apply_gradient(&mut self, gradient: &PolicyGradient, learning_rate: f64) {
        for (key, g) in &gradient.rows {
            let row = self.rows.entry(*key).or_insert_with(|| vec![0.0; g.len()]);
            for (l, d) in row.iter_mut().zip(g) {
                *l += learning_rate * d;
            }
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&RowKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// SHA-256 over the rows in key order with exact logit bits.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (key, row) in &self.rows {
            hasher.update(key.observation.to_le_bytes());
            hasher.update([key.slot as u8, key.prefix.map_or(0xff, |p| p)]);
            for l in row {
                hasher.update(l.to_bits().to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    /// The row and arity that produced each token. An answer token that
    /// follows a transform token is conditioned on it.
    fn token_rows(group: &RolloutGroup) -> Vec<Vec<(RowKey, u8, u8)>> {
        group
            .responses
            .iter()
            .map(|tokens| {
                let mut prefix = None;
                tokens
                    .iter()
                    .map(|&t| {
                        let (slot, arity, option) =
                            decode_token(t).unwrap_or_else(|| panic!("invalid toy token {t:#x}"));
                        let key = RowKey {
                            observation: group.query_id,
                            slot,
                            prefix: if slot == Slot::Answer { prefix } else { None },
                        };
                        if slot == Slot::Transform {
                            prefix = Some(option);
                        }
                        (key, arity, option)
                    })
                    .collect()
            })
            .collect()
    }

    /// Row keys for every token of `group`, as used by the policy.
    pub fn keys_for(group: &RolloutGroup) -> Vec<Vec<RowKey>> {
        Self::token_rows(group)
            .into_iter()
            .map(|r| r.into_iter().map(|(k, _, _)| k).collect())
            .collect()
    }
}

impl DifferentiablePolicy for ToyPolicy {
    type Gradient = PolicyGradient;

    fn token_logprobs(&self, group: &RolloutGroup) -> Vec<Vec<f64>> {
        Self::token_rows(group)
            .into_iter()
            .map(|r| r.into_iter().map(|(k, a, o)| self.log_prob(&k, a, o)).collect())
            .collect()
    }

    /// ∂ log softmax(z)[o] / ∂ z_j = 1[j = o] − p_j.
    fn backprop(&self, group: &RolloutGroup, weights: &[Vec<f64>]) -> PolicyGradient {
        let mut gradient = PolicyGradient::default();
        for (row, w) in Self::token_rows(group).into_iter().zip(weights) {
            for ((key, arity, option), &weight) in row.into_iter().zip(w) {
                let probs = self.probabilities(&key, arity);
                let g = gradient.row_mut(key, arity as usize);
                for (j, p) in probs.iter().enumerate() {
                    let indicator = if j == option as usize { 1.0 } else { 0.0 };
                    g[j] += weight * (indicator - p);
                }
            }
        }
        gradient
    }
}
