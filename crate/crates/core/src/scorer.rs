//! Per-position probability models and list-level reward aggregation.
//!
//! A [`SlateScorer`] maps a whole slate to per-position exposure and click
//! probabilities. The reward of a slate is then
//!
//! ```text
//! R = Σ_i (V_i + N_i − P_i)
//! V_i = p_clk · p_exp · s   (CPA ads)      V_i = p_exp · s   (otherwise)
//! N_i = p_exp · p_clk · n
//! P_i = d · p_exp
//! ```
//!
//! summed over page positions in ascending order. A large ad contributes one
//! term per position it covers.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CandidatePool, Item, ItemKind, Pricing, Slate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("length mismatch: slate has {slate} positions, got {scores} scores")]
    LengthMismatch { slate: usize, scores: usize },
    #[error("invalid scorer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub p_exp: f64,
    pub p_clk: f64,
}

impl ItemScores {
    pub const CERTAIN: ItemScores = ItemScores {
        p_exp: 1.0,
        p_clk: 1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemReward {
    pub position: usize,
    pub value: f64,
    pub engagement: f64,
    pub penalty: f64,
}

impl ItemReward {
    pub fn contribution(&self) -> f64 {
        self.value + self.engagement - self.penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub items: Vec<ItemReward>,
    pub total: f64,
}

/// A deterministic model of per-position exposure and click probabilities.
pub trait SlateScorer: Send + Sync {
    /// One entry per slate position.
    fn score(&self, slate: &Slate, pool: &CandidatePool) -> Result<Vec<ItemScores>, ScoreError>;

    /// Upper envelope of the probabilities `item` can receive at `position`
    /// in any slate. Pruning is only sound if this really bounds `score`.
    fn envelope(&self, _item: &Item, _position: usize) -> ItemScores {
        ItemScores::CERTAIN
    }

    /// Rejects pools the scorer cannot handle.
    fn check_pool(&self, _pool: &CandidatePool) -> Result<(), ScoreError> {
        Ok(())
    }
}

/// Wraps a scorer and counts how many slates it has scored.
pub struct CountingScorer<'a> {
    inner: &'a dyn SlateScorer,
    evaluations: AtomicU64,
}

impl<'a> CountingScorer<'a> {
    pub fn new(inner: &'a dyn SlateScorer) -> Self {
        CountingScorer {
            inner,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &'a dyn SlateScorer {
        self.inner
    }

    pub fn score(
        &self,
        slate: &Slate,
        pool: &CandidatePool,
    ) -> Result<Vec<ItemScores>, ScoreError> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.inner.score(slate, pool)
    }
}

/// Per-position reward terms; accumulation is position-ascending.
pub fn aggregate_reward(
    slate: &Slate,
    scores: &[ItemScores],
    pool: &CandidatePool,
) -> Result<RewardBreakdown, ScoreError> {
    if scores.len() != slate.len() {
        return Err(ScoreError::LengthMismatch {
            slate: slate.len(),
            scores: scores.len(),
        });
    }
    let mut total = 0.0;
    let items = slate
        .entries()
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (r, sc))| {
            let term = item_reward(pool.item(*r), *sc, i + 1);
            total += term.contribution();
            term
        })
        .collect();
    Ok(RewardBreakdown { items, total })
}

pub fn item_reward(item: &Item, sc: ItemScores, position: usize) -> ItemReward {
    let value = match (item.kind.is_ad(), item.pricing) {
        (true, Pricing::Cpa) => sc.p_clk * sc.p_exp * item.bid_value,
        _ => sc.p_exp * item.bid_value,
    };
    ItemReward {
        position,
        value,
        engagement: sc.p_exp * sc.p_clk * item.engagement_value,
        penalty: item.penalty_coeff * sc.p_exp,
    }
}

/// Scores a slate and aggregates its reward. Counts one evaluation.
pub fn score_slate(
    slate: &Slate,
    pool: &CandidatePool,
    scorer: &CountingScorer<'_>,
) -> Result<(RewardBreakdown, Vec<ItemScores>), ScoreError> {
    let scores = scorer.score(slate, pool)?;
    let reward = aggregate_reward(slate, &scores, pool)?;
    Ok((reward, scores))
}

/// Logit offsets applied for each neighbouring item, by neighbour kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighbourOffsets {
    #[serde(default)]
    pub organic: f64,
    #[serde(default)]
    pub ad: f64,
    #[serde(default)]
    pub large_ad: f64,
}

impl NeighbourOffsets {
    fn of(&self, kind: ItemKind) -> f64 {
        match kind {
            ItemKind::Organic => self.organic,
            ItemKind::Ad => self.ad,
            ItemKind::LargeAd => self.large_ad,
        }
    }

    /// Largest offset one side can add, counting "no neighbour" as zero.
    fn max_side(&self) -> f64 {
        self.organic.max(self.ad).max(self.large_ad).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConfig {
    #[serde(default)]
    pub exp: NeighbourOffsets,
    #[serde(default)]
    pub clk: NeighbourOffsets,
}

/// Reference scorer configuration. When `exp_weights` / `clk_weights` are
/// absent they are drawn uniformly from `[-weight_scale, weight_scale]` with a
/// generator seeded by `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceScorerConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub feature_dim: usize,
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clk_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub exp_bias: f64,
    #[serde(default)]
    pub clk_bias: f64,
    #[serde(default)]
    pub exp_position_decay: f64,
    #[serde(default)]
    pub clk_position_decay: f64,
    #[serde(default)]
    pub context: ContextConfig,
}

fn default_schema() -> u32 {
    1
}

fn default_weight_scale() -> f64 {
    0.5
}

impl ReferenceScorerConfig {
    /// Seeded weights with a mild position decay and ads lowering their
    /// neighbours' exposure.
    pub fn seeded(seed: u64, feature_dim: usize) -> Self {
        ReferenceScorerConfig {
            schema_version: 1,
            seed,
            feature_dim,
            weight_scale: 0.5,
            exp_weights: None,
            clk_weights: None,
            exp_bias: 0.5,
            clk_bias: -1.0,
            exp_position_decay: 0.08,
            clk_position_decay: 0.03,
            context: ContextConfig {
                exp: NeighbourOffsets {
                    organic: 0.05,
                    ad: -0.3,
                    large_ad: -0.4,
                },
                clk: NeighbourOffsets {
                    organic: 0.0,
                    ad: -0.1,
                    large_ad: -0.15,
                },
            },
        }
    }

    /// All-zero weights and offsets: every probability is 0.5.
    pub fn neutral(feature_dim: usize) -> Self {
        ReferenceScorerConfig {
            schema_version: 1,
            seed: 0,
            feature_dim,
            weight_scale: 0.0,
            exp_weights: Some(vec![0.0; feature_dim]),
            clk_weights: Some(vec![0.0; feature_dim]),
            exp_bias: 0.0,
            clk_bias: 0.0,
            exp_position_decay: 0.0,
            clk_position_decay: 0.0,
            context: ContextConfig::default(),
        }
    }
}

/// Logistic model over item features, a linear position decay and the kinds
/// of the immediately preceding and following items.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceScorer {
    config: ReferenceScorerConfig,
    exp_weights: Vec<f64>,
    clk_weights: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ReferenceScorer {
    pub fn new(config: ReferenceScorerConfig) -> Result<Self, ScoreError> {
        if config.schema_version != 1 {
            return Err(ScoreError::InvalidConfig(format!(
                "unsupported schema_version {}",
                config.schema_version
            )));
        }
        if config.feature_dim == 0 {
            return Err(ScoreError::InvalidConfig(
                "feature_dim must be positive".into(),
            ));
        }
        let finite = [
            config.weight_scale,
            config.exp_bias,
            config.clk_bias,
            config.exp_position_decay,
            config.clk_position_decay,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(ScoreError::InvalidConfig("non-finite parameter".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = config.weight_scale.abs();
        let mut resolve = |given: &Option<Vec<f64>>| -> Result<Vec<f64>, ScoreError> {
            match given {
                Some(w) if w.len() != config.feature_dim => Err(ScoreError::DimensionMismatch {
                    expected: config.feature_dim,
                    actual: w.len(),
                }),
                Some(w) => Ok(w.clone()),
                None => Ok((0..config.feature_dim)
                    .map(|_| {
                        if scale > 0.0 {
                            rng.random_range(-scale..=scale)
                        } else {
                            0.0
                        }
                    })
                    .collect()),
            }
        };
        let exp_weights = resolve(&config.exp_weights)?;
        let clk_weights = resolve(&config.clk_weights)?;
        Ok(ReferenceScorer {
            config,
            exp_weights,
            clk_weights,
        })
    }

    pub fn config(&self) -> &ReferenceScorerConfig {
        &self.config
    }

    pub fn exp_weights(&self) -> &[f64] {
        &self.exp_weights
    }

    pub fn clk_weights(&self) -> &[f64] {
        &self.clk_weights
    }

    fn base_logits(&self, item: &Item, position: usize) -> (f64, f64) {
        let offset = (position - 1) as f64;
        (
            self.config.exp_bias + dot(&self.exp_weights, &item.features)
                - self.config.exp_position_decay * offset,
            self.config.clk_bias + dot(&self.clk_weights, &item.features)
                - self.config.clk_position_decay * offset,
        )
    }
}

impl SlateScorer for ReferenceScorer {
    fn score(&self, slate: &Slate, pool: &CandidatePool) -> Result<Vec<ItemScores>, ScoreError> {
        self.check_pool(pool)?;
        let entries = slate.entries();
        let ctx = &self.config.context;
        Ok(entries
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let item = pool.item(*r);
                let (mut exp, mut clk) = self.base_logits(item, i + 1);
                // Cells of the same large ad are not neighbours of each other.
                let prev = i.checked_sub(1).map(|j| entries[j]);
                let next = entries.get(i + 1).copied();
                for n in [prev, next].into_iter().flatten().filter(|n| n != r) {
                    let kind = pool.item(n).kind;
                    exp += ctx.exp.of(kind);
                    clk += ctx.clk.of(kind);
                }
                ItemScores {
                    p_exp: logistic(exp),
                    p_clk: logistic(clk),
                }
            })
            .collect())
    }

    fn envelope(&self, item: &Item, position: usize) -> ItemScores {
        let (exp, clk) = self.base_logits(item, position);
        let sides = if position > 1 { 2.0 } else { 1.0 };
        let ctx = &self.config.context;
        ItemScores {
            p_exp: logistic(exp + sides * ctx.exp.max_side()),
            p_clk: logistic(clk + sides * ctx.clk.max_side()),
        }
    }

    fn check_pool(&self, pool: &CandidatePool) -> Result<(), ScoreError> {
        if pool.feature_dim() != self.config.feature_dim {
            return Err(ScoreError::DimensionMismatch {
                expected: self.config.feature_dim,
                actual: pool.feature_dim(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ItemRef, RuleSet};

    fn one_ad_pool(pricing: Pricing) -> CandidatePool {
        CandidatePool::new(
            vec![Item::organic("o1", 0.0, vec![0.0])],
            vec![Item::ad("a1", pricing, 2.0, 1.0, 0.1, vec![0.0])],
            vec![],
            1,
            0,
        )
        .unwrap()
    }

    /// Spreadsheet-style recomputation of one position's contribution.
    fn by_hand(cpa: bool, p_exp: f64, p_clk: f64, s: f64, n: f64, d: f64) -> f64 {
        let v = if cpa { p_clk * p_exp * s } else { p_exp * s };
        v + p_exp * p_clk * n - d * p_exp
    }

    fn ad_only_slate(p: &CandidatePool) -> Slate {
        Slate::from_entries(p, vec![ItemRef(1)]).unwrap()
    }

    #[test]
    fn cpm_reward_terms() {
        let p = one_ad_pool(Pricing::Cpm);
        let s = ad_only_slate(&p);
        let r = aggregate_reward(
            &s,
            &[ItemScores {
                p_exp: 0.5,
                p_clk: 0.2,
            }],
            &p,
        )
        .unwrap();
        let t = r.items[0];
        assert!((t.value - 1.0).abs() < 1e-15);
        assert!((t.engagement - 0.1).abs() < 1e-15);
        assert!((t.penalty - 0.05).abs() < 1e-15);
        assert!((r.total - 1.05).abs() < 1e-12);
        assert!((r.total - by_hand(false, 0.5, 0.2, 2.0, 1.0, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn cpa_reward_terms() {
        let p = one_ad_pool(Pricing::Cpa);
        let s = ad_only_slate(&p);
        let r = aggregate_reward(
            &s,
            &[ItemScores {
                p_exp: 0.5,
                p_clk: 0.2,
            }],
            &p,
        )
        .unwrap();
        assert!((r.items[0].value - 0.2).abs() < 1e-15);
        assert!((r.total - 0.25).abs() < 1e-12);
        assert!((r.total - by_hand(true, 0.5, 0.2, 2.0, 1.0, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn zero_exposure_zero_reward() {
        let p = one_ad_pool(Pricing::Cpm);
        let s = Slate::from_entries(&p, vec![ItemRef(0), ItemRef(1)]).unwrap();
        let zero = ItemScores {
            p_exp: 0.0,
            p_clk: 0.7,
        };
        assert_eq!(aggregate_reward(&s, &[zero, zero], &p).unwrap().total, 0.0);
    }

    #[test]
    fn length_mismatch() {
        let p = one_ad_pool(Pricing::Cpm);
        let s = ad_only_slate(&p);
        assert_eq!(
            aggregate_reward(&s, &[], &p),
            Err(ScoreError::LengthMismatch {
                slate: 1,
                scores: 0
            })
        );
    }

    #[test]
    fn neutral_scorer_is_one_half() {
        let p = crate::domain::tests::pool(4, 2, 0);
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::neutral(2)).unwrap();
        let s = Slate::organic_page(&p, 4)
            .insert_ad(&p, p.find("a1").unwrap(), 2, &RuleSet::permissive(6, 2))
            .unwrap();
        for sc in scorer.score(&s, &p).unwrap() {
            assert_eq!(
                sc,
                ItemScores {
                    p_exp: 0.5,
                    p_clk: 0.5
                }
            );
        }
    }

    #[test]
    fn position_decay_lowers_exposure() {
        let items: Vec<Item> = (1..=5)
            .map(|i| Item::organic(format!("o{i}"), 1.0, vec![0.3, -0.2]))
            .collect();
        let p = CandidatePool::new(items, vec![], vec![], 2, 0).unwrap();
        let cfg = ReferenceScorerConfig {
            exp_position_decay: 0.1,
            ..ReferenceScorerConfig::neutral(2)
        };
        let scores = ReferenceScorer::new(cfg)
            .unwrap()
            .score(&Slate::organic_page(&p, 5), &p)
            .unwrap();
        assert!(scores[0].p_exp > scores[4].p_exp);
    }

    #[test]
    fn explicit_weight_length_checked() {
        let cfg = ReferenceScorerConfig {
            exp_weights: Some(vec![1.0]),
            ..ReferenceScorerConfig::neutral(2)
        };
        assert_eq!(
            ReferenceScorer::new(cfg),
            Err(ScoreError::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        );
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::neutral(3)).unwrap();
        let p = crate::domain::tests::pool(2, 0, 0);
        assert!(matches!(
            scorer.score(&Slate::organic_page(&p, 2), &p),
            Err(ScoreError::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn seeded_weights_are_reproducible() {
        let a = ReferenceScorer::new(ReferenceScorerConfig::seeded(11, 4)).unwrap();
        let b = ReferenceScorer::new(ReferenceScorerConfig::seeded(11, 4)).unwrap();
        let c = ReferenceScorer::new(ReferenceScorerConfig::seeded(12, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.exp_weights(), c.exp_weights());
        assert!(a.exp_weights().iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn counter_counts_calls() {
        let p = crate::domain::tests::pool(3, 0, 0);
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::neutral(2)).unwrap();
        let counting = CountingScorer::new(&scorer);
        let s = Slate::organic_page(&p, 3);
        for _ in 0..7 {
            score_slate(&s, &p, &counting).unwrap();
        }
        assert_eq!(counting.evaluations(), 7);
    }

    #[test]
    fn organic_page_has_positive_reward() {
        let p = crate::domain::tests::pool(5, 0, 0);
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::seeded(3, 2)).unwrap();
        let (r, _) = score_slate(
            &Slate::organic_page(&p, 5),
            &p,
            &CountingScorer::new(&scorer),
        )
        .unwrap();
        assert!(r.total > 0.0);
        assert!(r.items.iter().all(|t| t.value == 0.0 && t.penalty == 0.0));
    }

    #[test]
    fn earlier_ad_position_earns_more() {
        let p = crate::domain::tests::pool(6, 1, 0);
        let rules = RuleSet::permissive(7, 1);
        let cfg = ReferenceScorerConfig {
            exp_position_decay: 0.2,
            ..ReferenceScorerConfig::neutral(2)
        };
        let scorer = ReferenceScorer::new(cfg).unwrap();
        let counting = CountingScorer::new(&scorer);
        let a1 = p.find("a1").unwrap();
        let v = |pos: usize| {
            let s = Slate::from_placements(&p, &rules, &[(a1, pos)]).unwrap();
            score_slate(&s, &p, &counting).unwrap().0.items[pos - 1].value
        };
        assert!(v(2) > v(5));
    }

    mod props {
        use super::*;
        use crate::harness::{generate_pool, BenchScenario};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cpa_never_exceeds_cpm(p_exp in 0.0f64..=1.0, p_clk in 0.0f64..=1.0, s in 0.0f64..10.0) {
                let cpa = by_hand(true, p_exp, p_clk, s, 0.0, 0.0);
                let cpm = by_hand(false, p_exp, p_clk, s, 0.0, 0.0);
                prop_assert!(cpa <= cpm);
                if p_clk < 1.0 && p_exp * s > 0.0 {
                    prop_assert!(cpa < cpm);
                }
                let item = Item::ad("a", Pricing::Cpa, s, 0.0, 0.0, vec![]);
                let sc = ItemScores { p_exp, p_clk };
                let cpm_item = Item { pricing: Pricing::Cpm, ..item.clone() };
                prop_assert!(item_reward(&item, sc, 1).value <= item_reward(&cpm_item, sc, 1).value);
            }

            #[test]
            fn decomposition_and_scaling(seed in 0u64..500, exponent in -3i32..4) {
                let scenario = BenchScenario::default();
                let pool = generate_pool(&scenario, seed).unwrap();
                let scorer = ReferenceScorer::new(scenario.scorer.clone()).unwrap();
                let rules = &scenario.rules;
                let slate = crate::constraints::enumerate_feasible(&pool, rules).last().unwrap();
                let scores = scorer.score(&slate, &pool).unwrap();
                let r = aggregate_reward(&slate, &scores, &pool).unwrap();
                let sum = r.items.iter().fold(0.0, |acc, t| acc + t.contribution());
                prop_assert_eq!(sum, r.total);
                // Powers of two scale exactly in floating point.
                let c = 2f64.powi(exponent);
                let scaled = pool.scaled(c).unwrap();
                let rs = aggregate_reward(&slate, &scores, &scaled).unwrap();
                prop_assert_eq!(rs.total, c * r.total);
            }
        }
    }
}
