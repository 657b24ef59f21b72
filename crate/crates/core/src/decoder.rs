//! Bounded decoding over the feasible set.
//!
//! Two modes are provided:
//!
//! * [`DecodeMode::TwoStage`] first picks the best single regular-ad insertion
//!   (or the organic page), then expands that intermediate page with a second
//!   ad, large-ad variants and the no-ad page. Cheap, linear in `A · L`, but
//!   it never revisits pairs that do not contain the stage-one ad.
//! * [`DecodeMode::ExhaustiveBounded`] scores every feasible slate, grouped by
//!   ad subset, and is exactly optimal.
//!
//! Candidates are grouped by the ads they add to a partial page. With
//! [`Pruning::HardFilterPlusUpperBound`] a whole group is skipped when an
//! admissible bound on its best completion falls below the incumbent.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::constraints::{ad_subsets, arrangements, is_feasible};
use crate::domain::{prefer, CandidatePool, ItemKind, ItemRef, RuleSet, Slate};
use crate::scorer::{
    aggregate_reward, item_reward, score_slate, CountingScorer, ItemScores, RewardBreakdown,
    ScoreError, SlateScorer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    TwoStage,
    #[default]
    ExhaustiveBounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pruning {
    /// Every generated candidate is scored; infeasible ones are dropped only
    /// at selection time.
    Off,
    /// Infeasible candidates are discarded before scoring.
    HardFilterOnly,
    /// Hard filtering plus upper-bound pruning of candidate groups.
    #[default]
    HardFilterPlusUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub pruning: Pruning,
}

impl DecodeConfig {
    pub fn new(mode: DecodeMode, pruning: Pruning) -> Self {
        DecodeConfig { mode, pruning }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub chosen: Slate,
    pub reward: RewardBreakdown,
    pub scores: Vec<ItemScores>,
    /// Scorer calls made.
    pub evaluations: u64,
    /// Candidates discarded by a hard rule before scoring.
    pub pruned_by_constraint: u64,
    /// Feasible candidates skipped because their group's bound lost.
    pub pruned_by_bound: u64,
    /// Feasible candidates either scored or bound-pruned.
    pub feasible_considered: u64,
}

/// Relative allowance added to every bound so that rounding in a different
/// summation order can never make it dip under a true reward.
const BOUND_SLACK: f64 = 1e-9;

/// Admissible bound on the reward of any feasible slate obtained by
/// inserting every ad in `pending` into `partial`.
///
/// With nothing pending the only completion is `partial` itself and its exact
/// reward is returned (one scorer evaluation). Otherwise no scorer call is
/// made: each item, existing or pending, is credited with the best value and
/// engagement its probability envelope allows over every position it can
/// reach, and penalties are bounded by zero. Returns negative infinity when
/// no feasible completion exists.
pub fn upper_bound(
    partial: &Slate,
    pending: &[ItemRef],
    pool: &CandidatePool,
    rules: &RuleSet,
    scorer: &CountingScorer<'_>,
) -> Result<f64, ScoreError> {
    if pending.is_empty() {
        return Ok(score_slate(partial, pool, scorer)?.0.total);
    }
    if partial.ad_count() + pending.len() > rules.max_ads || rules.frequency_cap_hit(pool) {
        return Ok(f64::NEG_INFINITY);
    }
    let model = scorer.inner();
    let optimistic = |r: ItemRef, position: usize| {
        let item = pool.item(r);
        let t = item_reward(item, model.envelope(item, position), position);
        t.value + t.engagement
    };
    let shift: usize = pending
        .iter()
        .map(|r| rules.span_of(pool.item(*r).kind))
        .sum();
    let page = (partial.len() + shift).min(rules.page_size);

    let mut bound = 0.0;
    for (i, r) in partial.entries().iter().enumerate() {
        let from = i + 1;
        let to = (from + shift).min(page);
        bound += (from..=to).map(|q| optimistic(*r, q)).fold(0.0, f64::max);
    }
    for r in pending {
        let kind = pool.item(*r).kind;
        let span = rules.span_of(kind);
        let last = page.min(rules.max_pos);
        let best = (rules.min_pos..=last)
            .filter(|q| q + span - 1 <= last)
            .filter(|q| kind != ItemKind::LargeAd || rules.large_ad_start_positions.contains(q))
            .map(|q| (q..q + span).map(|c| optimistic(*r, c)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        if best == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        bound += best;
    }
    Ok(bound + BOUND_SLACK * (1.0 + bound.abs()))
}

struct Best {
    slate: Slate,
    reward: RewardBreakdown,
    scores: Vec<ItemScores>,
}

struct Session<'a> {
    pool: &'a CandidatePool,
    rules: &'a RuleSet,
    scorer: CountingScorer<'a>,
    pruning: Pruning,
    best: Option<Best>,
    pruned_by_constraint: u64,
    pruned_by_bound: u64,
    feasible_considered: u64,
    /// Only two-stage decoding can generate the same page twice.
    seen: Option<HashSet<Vec<ItemRef>>>,
}

impl<'a> Session<'a> {
    fn new(
        pool: &'a CandidatePool,
        rules: &'a RuleSet,
        scorer: &'a dyn SlateScorer,
        pruning: Pruning,
        dedupe: bool,
    ) -> Result<Self, ScoreError> {
        scorer.check_pool(pool)?;
        Ok(Session {
            pool,
            rules,
            scorer: CountingScorer::new(scorer),
            pruning,
            best: None,
            pruned_by_constraint: 0,
            pruned_by_bound: 0,
            feasible_considered: 0,
            seen: dedupe.then(HashSet::new),
        })
    }

    fn first_visit(&mut self, slate: &Slate) -> bool {
        match &mut self.seen {
            Some(seen) => seen.insert(slate.entries().to_vec()),
            None => true,
        }
    }

    fn offer(&mut self, slate: Slate) -> Result<(), ScoreError> {
        if !self.first_visit(&slate) {
            return Ok(());
        }
        let feasible = is_feasible(&slate, self.rules, self.pool);
        if !feasible && self.pruning != Pruning::Off {
            self.pruned_by_constraint += 1;
            return Ok(());
        }
        let (reward, scores) = score_slate(&slate, self.pool, &self.scorer)?;
        if !feasible {
            return Ok(());
        }
        self.feasible_considered += 1;
        let incumbent = self.best.as_ref().map(|b| (b.reward.total, &b.slate));
        if prefer(self.pool, (reward.total, &slate), incumbent) {
            self.best = Some(Best {
                slate,
                reward,
                scores,
            });
        }
        Ok(())
    }

    /// Offers every candidate formed by inserting `pending` into `partial`,
    /// or skips them all when the group's bound cannot beat the incumbent.
    fn offer_group(
        &mut self,
        partial: &Slate,
        pending: &[ItemRef],
        candidates: impl Iterator<Item = Slate>,
    ) -> Result<(), ScoreError> {
        let prune = match (&self.best, self.pruning) {
            (Some(best), Pruning::HardFilterPlusUpperBound) => {
                upper_bound(partial, pending, self.pool, self.rules, &self.scorer)?
                    < best.reward.total
            }
            _ => false,
        };
        for slate in candidates {
            if !prune {
                self.offer(slate)?;
            } else if self.first_visit(&slate) {
                if is_feasible(&slate, self.rules, self.pool) {
                    self.pruned_by_bound += 1;
                    self.feasible_considered += 1;
                } else {
                    self.pruned_by_constraint += 1;
                }
            }
        }
        Ok(())
    }

    fn report(self) -> DecodeReport {
        let best = self
            .best
            .expect("the organic page is always offered and always feasible");
        DecodeReport {
            chosen: best.slate,
            reward: best.reward,
            scores: best.scores,
            evaluations: self.scorer.evaluations(),
            pruned_by_constraint: self.pruned_by_constraint,
            pruned_by_bound: self.pruned_by_bound,
            feasible_considered: self.feasible_considered,
        }
    }

    /// Every insertion point of `ad` into `base`, keeping only results that
    /// still show every ad of `base`.
    fn insertions(&self, base: &Slate, ad: ItemRef) -> Vec<Slate> {
        (1..=base.len() + 1)
            .filter_map(|q| base.insert_ad(self.pool, ad, q, self.rules).ok())
            .filter(|s| s.ad_count() == base.ad_count() + 1)
            .collect()
    }

    fn stage1(&mut self) -> Result<Slate, ScoreError> {
        let organic = Slate::organic_page(self.pool, self.rules.page_size);
        self.offer(organic.clone())?;
        for ad in self.pool.regular_ad_refs_by_id() {
            let candidates = self.insertions(&organic, ad);
            self.offer_group(&organic, &[ad], candidates.into_iter())?;
        }
        Ok(self
            .best
            .as_ref()
            .expect("organic page offered")
            .slate
            .clone())
    }

    fn stage2(&mut self, intermediate: &Slate) -> Result<(), ScoreError> {
        let organic = Slate::organic_page(self.pool, self.rules.page_size);
        self.offer(intermediate.clone())?;
        self.offer(organic.clone())?;
        let current: Vec<ItemRef> = intermediate.placements().iter().map(|p| p.item).collect();

        // Second ad on top of the intermediate page (double-ad and combined
        // large-ad lists).
        if current.len() == 1 && self.rules.max_ads >= 2 {
            for ad in self.pool.ad_refs_by_id() {
                if ad == current[0] {
                    continue;
                }
                let candidates = self.insertions(intermediate, ad);
                self.offer_group(intermediate, &[ad], candidates.into_iter())?;
            }
        }
        // Large ad in place of whatever the intermediate page carries.
        for large in self.pool.large_ad_refs_by_id() {
            if current.contains(&large) {
                continue;
            }
            let candidates = self.insertions(&organic, large);
            self.offer_group(&organic, &[large], candidates.into_iter())?;
        }
        Ok(())
    }

    fn exhaustive(&mut self) -> Result<(), ScoreError> {
        let organic = Slate::organic_page(self.pool, self.rules.page_size);
        for subset in ad_subsets(self.pool, self.rules) {
            if subset.is_empty() {
                self.offer(organic.clone())?;
                continue;
            }
            let candidates = arrangements(self.pool, self.rules, &subset);
            self.offer_group(&organic, &subset, candidates)?;
        }
        Ok(())
    }
}

/// Best page among the organic page and every single regular-ad insertion.
/// The returned report's `chosen` slate is the intermediate page.
pub fn stage1_insert(
    pool: &CandidatePool,
    rules: &RuleSet,
    scorer: &dyn SlateScorer,
    pruning: Pruning,
) -> Result<DecodeReport, ScoreError> {
    let mut session = Session::new(pool, rules, scorer, pruning, true)?;
    session.stage1()?;
    Ok(session.report())
}

/// Expands an intermediate page: keep it, add a second ad, swap in a large
/// ad, or strip all ads.
pub fn stage2_expand(
    intermediate: &Slate,
    pool: &CandidatePool,
    rules: &RuleSet,
    scorer: &dyn SlateScorer,
    pruning: Pruning,
) -> Result<DecodeReport, ScoreError> {
    let mut session = Session::new(pool, rules, scorer, pruning, true)?;
    session.stage2(intermediate)?;
    Ok(session.report())
}

pub fn decode(
    pool: &CandidatePool,
    rules: &RuleSet,
    scorer: &dyn SlateScorer,
    config: DecodeConfig,
) -> Result<DecodeReport, ScoreError> {
    match config.mode {
        DecodeMode::TwoStage => {
            let mut session = Session::new(pool, rules, scorer, config.pruning, true)?;
            let intermediate = session.stage1()?;
            session.stage2(&intermediate)?;
            Ok(session.report())
        }
        DecodeMode::ExhaustiveBounded => {
            let mut session = Session::new(pool, rules, scorer, config.pruning, false)?;
            session.exhaustive()?;
            Ok(session.report())
        }
    }
}

/// Re-scores `slate` and checks the stored breakdown against it.
pub fn rescore(
    slate: &Slate,
    pool: &CandidatePool,
    scorer: &dyn SlateScorer,
) -> Result<RewardBreakdown, ScoreError> {
    aggregate_reward(slate, &scorer.score(slate, pool)?, pool)
}
