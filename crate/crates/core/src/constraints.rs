//! Hard business rules: feasibility checking plus enumeration and counting of
//! the feasible set.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::domain::{CandidatePool, ItemKind, ItemRef, RuleSet, Slate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    LoadExceeded,
    SpacingViolated,
    PositionOutOfBounds,
    LargeAdRuleBroken,
    FrequencyCapHit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

fn violation(kind: ViolationKind, detail: String) -> Violation {
    Violation { kind, detail }
}

/// Returns every violated rule; an empty list means the slate is feasible.
///
/// Clauses are checked in a fixed order: load, pairwise spacing, position
/// bounds, large-ad placement, frequency cap.
pub fn check(slate: &Slate, rules: &RuleSet, pool: &CandidatePool) -> Vec<Violation> {
    let mut out = Vec::new();
    let ads = slate.placements();
    let id = |r: ItemRef| pool.item(r).id.clone();

    if ads.len() > rules.max_ads {
        out.push(violation(
            ViolationKind::LoadExceeded,
            format!("{} ads on page, limit {}", ads.len(), rules.max_ads),
        ));
    }

    // Placements are sorted by start, so the gap between two ads is the
    // distance from the end of the earlier one to the start of the later.
    for (i, a) in ads.iter().enumerate() {
        for b in &ads[i + 1..] {
            let gap = b.start - a.end();
            if gap < rules.min_spacing {
                out.push(violation(
                    ViolationKind::SpacingViolated,
                    format!(
                        "{} (ends at {}) and {} (starts at {}) are {} apart, need {}",
                        id(a.item),
                        a.end(),
                        id(b.item),
                        b.start,
                        gap,
                        rules.min_spacing
                    ),
                ));
            }
        }
    }

    for p in ads {
        if p.start < rules.min_pos || p.end() > rules.max_pos {
            out.push(violation(
                ViolationKind::PositionOutOfBounds,
                format!(
                    "{} covers {}..={}, allowed {}..={}",
                    id(p.item),
                    p.start,
                    p.end(),
                    rules.min_pos,
                    rules.max_pos
                ),
            ));
        }
    }

    for p in ads {
        let kind = pool.item(p.item).kind;
        if kind == ItemKind::LargeAd {
            if !rules.large_ad_start_positions.contains(&p.start) {
                out.push(violation(
                    ViolationKind::LargeAdRuleBroken,
                    format!(
                        "large ad {} starts at disallowed position {}",
                        id(p.item),
                        p.start
                    ),
                ));
            }
            if p.span != rules.large_ad_span {
                out.push(violation(
                    ViolationKind::LargeAdRuleBroken,
                    format!(
                        "large ad {} shows {} of {} positions",
                        id(p.item),
                        p.span,
                        rules.large_ad_span
                    ),
                ));
            }
        } else if p.span != 1 {
            out.push(violation(
                ViolationKind::LargeAdRuleBroken,
                format!("ad {} spans {} positions", id(p.item), p.span),
            ));
        }
    }

    if !ads.is_empty() && rules.frequency_cap_hit(pool) {
        out.push(violation(
            ViolationKind::FrequencyCapHit,
            format!(
                "user has {} prior exposures, cap {:?}",
                pool.user_exposure_count(),
                rules.user_frequency_cap
            ),
        ));
    }
    out
}

pub fn is_feasible(slate: &Slate, rules: &RuleSet, pool: &CandidatePool) -> bool {
    check(slate, rules, pool).is_empty()
}

/// Largest ad count the enumeration considers: `min(K, number of ads)`.
pub fn max_ad_count(pool: &CandidatePool, rules: &RuleSet) -> usize {
    rules.max_ads.min(pool.ad_count())
}

/// Every subset of ads with at most `K` members, ascending by size and then
/// lexicographically by ad id.
pub fn ad_subsets(pool: &CandidatePool, rules: &RuleSet) -> Vec<Vec<ItemRef>> {
    let ads = pool.ad_refs_by_id();
    (0..=max_ad_count(pool, rules))
        .flat_map(|k| ads.iter().copied().combinations(k))
        .collect()
}

/// Page length once the given ads are inserted.
pub fn page_len(pool: &CandidatePool, rules: &RuleSet, ads: &[ItemRef]) -> usize {
    let span: usize = ads.iter().map(|r| rules.span_of(pool.item(*r).kind)).sum();
    (pool.organic().len() + span).min(rules.page_size)
}

/// Every structurally valid slate holding exactly `ads` (assumed sorted by
/// id), in lexicographic order of the start-position tuple. Feasibility is
/// not checked.
pub fn arrangements<'a>(
    pool: &'a CandidatePool,
    rules: &'a RuleSet,
    ads: &'a [ItemRef],
) -> Box<dyn Iterator<Item = Slate> + 'a> {
    if ads.is_empty() {
        return Box::new(std::iter::once(Slate::organic_page(pool, rules.page_size)));
    }
    let len = page_len(pool, rules, ads);
    Box::new(
        ads.iter()
            .map(|_| 1..=len)
            .multi_cartesian_product()
            .filter_map(move |starts| {
                let placed: Vec<(ItemRef, usize)> = ads.iter().copied().zip(starts).collect();
                Slate::from_placements(pool, rules, &placed)
            }),
    )
}

/// Every structurally valid slate with at most `K` ads, feasible or not, in
/// canonical order.
pub fn candidate_slates<'a>(
    pool: &'a CandidatePool,
    rules: &'a RuleSet,
) -> impl Iterator<Item = Slate> + 'a {
    let subsets = ad_subsets(pool, rules);
    (0..subsets.len()).flat_map(move |i| {
        // Each arrangement borrows its own subset, so collect per subset.
        arrangements(pool, rules, &subsets[i]).collect::<Vec<_>>()
    })
}

/// Streams the feasible set exactly once in canonical order: ascending ad
/// count, then lexicographic by (ad id tuple, start-position tuple).
pub fn enumerate_feasible<'a>(
    pool: &'a CandidatePool,
    rules: &'a RuleSet,
) -> impl Iterator<Item = Slate> + 'a {
    candidate_slates(pool, rules).filter(move |s| is_feasible(s, rules, pool))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleCount {
    pub total: u64,
    /// `per_k[k]` is the number of feasible slates with exactly `k` ads.
    pub per_k: Vec<u64>,
}

pub fn count_feasible(pool: &CandidatePool, rules: &RuleSet) -> FeasibleCount {
    let mut per_k = vec![0u64; max_ad_count(pool, rules) + 1];
    for subset in ad_subsets(pool, rules) {
        let n = arrangements(pool, rules, &subset)
            .filter(|s| is_feasible(s, rules, pool))
            .count() as u64;
        per_k[subset.len()] += n;
    }
    FeasibleCount {
        total: per_k.iter().sum(),
        per_k,
    }
}
