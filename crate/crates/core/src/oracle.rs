//! Brute-force reference solver.
//!
//! Builds the feasible set its own way (every ad subset of size at most `K`
//! times every start-position tuple over the whole page, laid out by hand and
//! filtered with [`check`]) and scores all of it. It deliberately shares no
//! enumeration code with [`crate::constraints`], so agreement between the two
//! is meaningful.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{check, count_feasible};
use crate::domain::{prefer, CandidatePool, ItemRef, RuleSet, Slate};
use crate::scorer::{aggregate_reward, RewardBreakdown, ScoreError, SlateScorer};

pub const DEFAULT_FEASIBLE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("feasible set has {predicted} slates, limit is {limit}")]
    FeasibleSetTooLarge { predicted: u64, limit: u64 },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub feasible_limit: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            feasible_limit: DEFAULT_FEASIBLE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: Slate,
    pub reward: RewardBreakdown,
    pub feasible_count: u64,
    pub per_k: Vec<u64>,
}

/// Every subset of `items` with at most `max` members.
fn subsets(items: &[ItemRef], max: usize) -> Vec<Vec<ItemRef>> {
    let mut out = vec![Vec::new()];
    for item in items {
        let grown: Vec<Vec<ItemRef>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(*item);
                t
            })
            .collect();
        out.extend(grown);
    }
    out
}

/// Lays the chosen ads out at the given starts, filling the rest with
/// organics in order.
fn layout(
    pool: &CandidatePool,
    rules: &RuleSet,
    ads: &[ItemRef],
    starts: &[usize],
) -> Option<Slate> {
    let spans: Vec<usize> = ads
        .iter()
        .map(|r| rules.span_of(pool.item(*r).kind))
        .collect();
    let len = (pool.organic().len() + spans.iter().sum::<usize>()).min(rules.page_size);
    let mut cells: Vec<Option<ItemRef>> = vec![None; len];
    for ((ad, start), span) in ads.iter().zip(starts).zip(&spans) {
        if *start > len {
            return None;
        }
        for offset in 0..*span {
            let pos = start + offset;
            if pos > len {
                break;
            }
            if cells[pos - 1].is_some() {
                return None;
            }
            cells[pos - 1] = Some(*ad);
        }
    }
    let mut next = 0;
    let mut entries = Vec::with_capacity(len);
    for cell in cells {
        match cell {
            Some(r) => entries.push(r),
            None => {
                if next == pool.organic().len() {
                    return None;
                }
                entries.push(pool.organic_ref(next));
                next += 1;
            }
        }
    }
    Slate::from_entries(pool, entries).ok()
}

/// Exhaustive argmax over the feasible set, with the decoder's tie-break.
pub fn brute_force(
    pool: &CandidatePool,
    rules: &RuleSet,
    scorer: &dyn SlateScorer,
    config: &OracleConfig,
) -> Result<OracleResult, OracleError> {
    let predicted = count_feasible(pool, rules).total;
    if predicted > config.feasible_limit {
        return Err(OracleError::FeasibleSetTooLarge {
            predicted,
            limit: config.feasible_limit,
        });
    }
    scorer.check_pool(pool)?;

    let ads: Vec<ItemRef> = pool.refs().filter(|r| pool.item(*r).kind.is_ad()).collect();
    let max = rules.max_ads.min(ads.len());
    let mut per_k = vec![0u64; max + 1];
    let mut best: Option<(Slate, RewardBreakdown)> = None;

    for chosen in subsets(&ads, max) {
        let mut starts = vec![1usize; chosen.len()];
        loop {
            if let Some(slate) = layout(pool, rules, &chosen, &starts) {
                if check(&slate, rules, pool).is_empty() {
                    per_k[chosen.len()] += 1;
                    let reward = aggregate_reward(&slate, &scorer.score(&slate, pool)?, pool)?;
                    let incumbent = best.as_ref().map(|(s, r)| (r.total, s));
                    if prefer(pool, (reward.total, &slate), incumbent) {
                        best = Some((slate, reward));
                    }
                }
            }
            // Odometer over 1..=page_size for every chosen ad.
            let Some(i) = starts.iter().position(|s| *s < rules.page_size) else {
                break;
            };
            starts[i] += 1;
            for s in &mut starts[..i] {
                *s = 1;
            }
        }
    }

    let (best, reward) = best.expect("the organic page is always feasible");
    Ok(OracleResult {
        best,
        reward,
        feasible_count: per_k.iter().sum(),
        per_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{decode, DecodeConfig};
    use crate::domain::tests::pool;
    use crate::scorer::{ReferenceScorer, ReferenceScorerConfig};

    #[test]
    fn subsets_up_to_size() {
        let items: Vec<ItemRef> = (0..4).map(ItemRef).collect();
        assert_eq!(subsets(&items, 0).len(), 1);
        assert_eq!(subsets(&items, 2).len(), 1 + 4 + 6);
        assert_eq!(subsets(&items, 4).len(), 16);
    }

    #[test]
    fn zero_ads() {
        let p = pool(5, 0, 0);
        let rules = RuleSet::permissive(5, 2);
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::seeded(1, 2)).unwrap();
        let r = brute_force(&p, &rules, &scorer, &OracleConfig::default()).unwrap();
        assert_eq!(r.best, Slate::organic_page(&p, 5));
        assert_eq!(r.feasible_count, 1);
    }

    #[test]
    fn agrees_with_counting_and_decoder() {
        let p = pool(6, 3, 1);
        let rules = RuleSet {
            large_ad_span: 2,
            min_spacing: 2,
            min_pos: 2,
            ..RuleSet::permissive(7, 2)
        };
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::seeded(9, 2)).unwrap();
        let r = brute_force(&p, &rules, &scorer, &OracleConfig::default()).unwrap();
        let c = count_feasible(&p, &rules);
        assert_eq!(r.feasible_count, c.total);
        assert_eq!(r.per_k, c.per_k);
        let d = decode(&p, &rules, &scorer, DecodeConfig::default()).unwrap();
        assert_eq!(d.chosen, r.best);
        assert_eq!(d.reward.total, r.reward.total);
    }

    #[test]
    fn limit_is_enforced() {
        let p = pool(8, 4, 0);
        let rules = RuleSet::permissive(8, 2);
        let scorer = ReferenceScorer::new(ReferenceScorerConfig::seeded(1, 2)).unwrap();
        let err =
            brute_force(&p, &rules, &scorer, &OracleConfig { feasible_limit: 10 }).unwrap_err();
        let predicted = count_feasible(&p, &rules).total;
        assert_eq!(
            err,
            OracleError::FeasibleSetTooLarge {
                predicted,
                limit: 10
            }
        );
    }
}
