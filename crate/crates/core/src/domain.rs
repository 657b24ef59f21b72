//! Core data model: items, candidate pools, business rules and slates.
//!
//! A slate is the organic page with zero or more ads inserted into it. Organic
//! items keep their upstream order; inserting an ad pushes the items after it
//! down by the ad's span and the page is truncated to the page size. Positions
//! are 1-based everywhere.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("position {position} is not a valid insertion point (page has {len} entries)")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("item {0} already present")]
    DuplicateItem(ItemId),
    #[error("item {0} is not an ad")]
    NotAnAd(ItemId),
    #[error("invalid pool: {0}")]
    InvalidPool(String),
    #[error("invalid rules: {0}")]
    InvalidRules(String),
    #[error("invalid slate: {0}")]
    InvalidSlate(String),
}

/// Opaque item identifier. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(Arc<str>);

impl ItemId {
    pub fn new(id: impl AsRef<str>) -> Self {
        ItemId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Organic,
    Ad,
    LargeAd,
}

impl ItemKind {
    pub fn is_ad(self) -> bool {
        !matches!(self, ItemKind::Organic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pricing {
    /// Value is realized per click.
    Cpa,
    /// Value is realized per exposure.
    #[default]
    Cpm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub kind: ItemKind,
    pub pricing: Pricing,
    /// Monetization scale `s`.
    pub bid_value: f64,
    /// Engagement benefit coefficient `n`.
    pub engagement_value: f64,
    /// Exposure penalty coefficient `d`.
    pub penalty_coeff: f64,
    pub features: Vec<f64>,
}

impl Item {
    pub fn organic(id: impl AsRef<str>, engagement_value: f64, features: Vec<f64>) -> Self {
        Item {
            id: ItemId::new(id),
            kind: ItemKind::Organic,
            pricing: Pricing::Cpm,
            bid_value: 0.0,
            engagement_value,
            penalty_coeff: 0.0,
            features,
        }
    }

    pub fn ad(
        id: impl AsRef<str>,
        pricing: Pricing,
        bid_value: f64,
        engagement_value: f64,
        penalty_coeff: f64,
        features: Vec<f64>,
    ) -> Self {
        Item {
            id: ItemId::new(id),
            kind: ItemKind::Ad,
            pricing,
            bid_value,
            engagement_value,
            penalty_coeff,
            features,
        }
    }

    pub fn large_ad(
        id: impl AsRef<str>,
        pricing: Pricing,
        bid_value: f64,
        engagement_value: f64,
        penalty_coeff: f64,
        features: Vec<f64>,
    ) -> Self {
        Item {
            kind: ItemKind::LargeAd,
            ..Item::ad(
                id,
                pricing,
                bid_value,
                engagement_value,
                penalty_coeff,
                features,
            )
        }
    }

    /// Returns a copy with `s`, `n` and `d` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Item {
            bid_value: self.bid_value * factor,
            engagement_value: self.engagement_value * factor,
            penalty_coeff: self.penalty_coeff * factor,
            ..self.clone()
        }
    }

    fn validate(&self, feature_dim: usize) -> Result<(), DomainError> {
        let coeffs = [self.bid_value, self.engagement_value, self.penalty_coeff];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(DomainError::InvalidPool(format!(
                "item {}: s, n, d must be finite and non-negative",
                self.id
            )));
        }
        if self.kind == ItemKind::Organic && (self.bid_value != 0.0 || self.penalty_coeff != 0.0) {
            return Err(DomainError::InvalidPool(format!(
                "organic item {} must have zero bid value and penalty",
                self.id
            )));
        }
        if self.features.len() != feature_dim {
            return Err(DomainError::InvalidPool(format!(
                "item {} has {} features, pool declares {}",
                self.id,
                self.features.len(),
                feature_dim
            )));
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(DomainError::InvalidPool(format!(
                "item {} has a non-finite feature",
                self.id
            )));
        }
        Ok(())
    }
}

/// Index of an item inside its pool. Organics come first, then ads, then
/// large ads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemRef(pub u32);

impl ItemRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    organic: Vec<Item>,
    ads: Vec<Item>,
    large_ads: Vec<Item>,
    feature_dim: usize,
    user_exposure_count: u32,
}

impl CandidatePool {
    pub fn new(
        organic: Vec<Item>,
        ads: Vec<Item>,
        large_ads: Vec<Item>,
        feature_dim: usize,
        user_exposure_count: u32,
    ) -> Result<Self, DomainError> {
        if feature_dim == 0 {
            return Err(DomainError::InvalidPool(
                "feature_dim must be positive".into(),
            ));
        }
        if organic.is_empty() {
            return Err(DomainError::InvalidPool("organic list is empty".into()));
        }
        for (list, kind) in [
            (&organic, ItemKind::Organic),
            (&ads, ItemKind::Ad),
            (&large_ads, ItemKind::LargeAd),
        ] {
            for item in list {
                if item.kind != kind {
                    return Err(DomainError::InvalidPool(format!(
                        "item {} has kind {:?} but is listed as {:?}",
                        item.id, item.kind, kind
                    )));
                }
                item.validate(feature_dim)?;
            }
        }
        let mut seen = BTreeSet::new();
        for item in organic.iter().chain(&ads).chain(&large_ads) {
            if !seen.insert(item.id.clone()) {
                return Err(DomainError::DuplicateItem(item.id.clone()));
            }
        }
        if organic.len() + ads.len() + large_ads.len() > u32::MAX as usize {
            return Err(DomainError::InvalidPool("pool too large".into()));
        }
        Ok(CandidatePool {
            organic,
            ads,
            large_ads,
            feature_dim,
            user_exposure_count,
        })
    }

    pub fn organic(&self) -> &[Item] {
        &self.organic
    }

    pub fn ads(&self) -> &[Item] {
        &self.ads
    }

    pub fn large_ads(&self) -> &[Item] {
        &self.large_ads
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn user_exposure_count(&self) -> u32 {
        self.user_exposure_count
    }

    pub fn len(&self) -> usize {
        self.organic.len() + self.ads.len() + self.large_ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ad_count(&self) -> usize {
        self.ads.len() + self.large_ads.len()
    }

    pub fn item(&self, r: ItemRef) -> &Item {
        let i = r.index();
        let (o, a) = (self.organic.len(), self.ads.len());
        if i < o {
            &self.organic[i]
        } else if i < o + a {
            &self.ads[i - o]
        } else {
            &self.large_ads[i - o - a]
        }
    }

    pub fn get(&self, r: ItemRef) -> Option<&Item> {
        (r.index() < self.len()).then(|| self.item(r))
    }

    pub fn organic_ref(&self, index: usize) -> ItemRef {
        ItemRef(index as u32)
    }

    /// All item refs in pool order.
    pub fn refs(&self) -> impl Iterator<Item = ItemRef> {
        (0..self.len() as u32).map(ItemRef)
    }

    /// Refs of every ad and large ad, sorted by item id.
    pub fn ad_refs_by_id(&self) -> Vec<ItemRef> {
        let start = self.organic.len() as u32;
        let mut refs: Vec<ItemRef> = (start..self.len() as u32).map(ItemRef).collect();
        refs.sort_by(|a, b| self.item(*a).id.cmp(&self.item(*b).id));
        refs
    }

    /// Refs of regular (single-slot) ads, sorted by item id.
    pub fn regular_ad_refs_by_id(&self) -> Vec<ItemRef> {
        self.ad_refs_by_id()
            .into_iter()
            .filter(|r| self.item(*r).kind == ItemKind::Ad)
            .collect()
    }

    /// Refs of large ads, sorted by item id.
    pub fn large_ad_refs_by_id(&self) -> Vec<ItemRef> {
        self.ad_refs_by_id()
            .into_iter()
            .filter(|r| self.item(*r).kind == ItemKind::LargeAd)
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<ItemRef> {
        self.refs().find(|r| self.item(*r).id.as_str() == id)
    }

    /// Copy of the pool with every item's `s`, `n`, `d` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, DomainError> {
        let scale = |items: &[Item]| items.iter().map(|i| i.scaled(factor)).collect();
        CandidatePool::new(
            scale(&self.organic),
            scale(&self.ads),
            scale(&self.large_ads),
            self.feature_dim,
            self.user_exposure_count,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    /// Page size `L`.
    pub page_size: usize,
    /// Ad load cap `K`.
    pub max_ads: usize,
    /// Minimum positional gap `Δ` between two ads.
    pub min_spacing: usize,
    pub min_pos: usize,
    pub max_pos: usize,
    pub large_ad_span: usize,
    pub large_ad_start_positions: BTreeSet<usize>,
    /// `None` disables the frequency rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_frequency_cap: Option<u32>,
}

impl RuleSet {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |m: String| Err(DomainError::InvalidRules(m));
        if self.page_size == 0 {
            return bad("page_size must be positive".into());
        }
        if self.min_spacing == 0 {
            return bad("min_spacing must be at least 1".into());
        }
        if !(1 <= self.min_pos && self.min_pos <= self.max_pos && self.max_pos <= self.page_size) {
            return bad(format!(
                "need 1 <= min_pos ({}) <= max_pos ({}) <= page_size ({})",
                self.min_pos, self.max_pos, self.page_size
            ));
        }
        if self.large_ad_span == 0 || self.large_ad_span > self.page_size {
            return bad(format!(
                "large_ad_span {} must be in 1..={}",
                self.large_ad_span, self.page_size
            ));
        }
        Ok(())
    }

    /// Whether the frequency rule forces this user's ad budget to zero.
    pub fn frequency_cap_hit(&self, pool: &CandidatePool) -> bool {
        self.user_frequency_cap
            .is_some_and(|cap| pool.user_exposure_count() >= cap)
    }

    pub fn span_of(&self, kind: ItemKind) -> usize {
        match kind {
            ItemKind::LargeAd => self.large_ad_span,
            _ => 1,
        }
    }

    /// Rules with every position allowed and no spacing requirement beyond
    /// non-overlap. Handy for tests.
    pub fn permissive(page_size: usize, max_ads: usize) -> Self {
        RuleSet {
            page_size,
            max_ads,
            min_spacing: 1,
            min_pos: 1,
            max_pos: page_size,
            large_ad_span: 1,
            large_ad_start_positions: (1..=page_size).collect(),
            user_frequency_cap: None,
        }
    }
}

/// An ad occupying `span` consecutive positions starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Placement {
    pub item: ItemRef,
    pub start: usize,
    pub span: usize,
}

impl Placement {
    pub fn end(&self) -> usize {
        self.start + self.span - 1
    }

    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end()
    }
}

/// An ordered page. `entries[i]` is the item at position `i + 1`; a large ad
/// repeats across the positions it covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Slate {
    entries: Vec<ItemRef>,
    placements: Vec<Placement>,
    ad_positions: Vec<usize>,
}

impl Slate {
    /// The organic page: the first `min(organic, page_size)` organic items.
    pub fn organic_page(pool: &CandidatePool, page_size: usize) -> Slate {
        let len = pool.organic().len().min(page_size);
        Slate {
            entries: (0..len).map(|i| pool.organic_ref(i)).collect(),
            placements: Vec::new(),
            ad_positions: Vec::new(),
        }
    }

    /// Builds a slate from a per-position item list, validating structure.
    pub fn from_entries(pool: &CandidatePool, entries: Vec<ItemRef>) -> Result<Slate, DomainError> {
        let invalid = |m: String| Err(DomainError::InvalidSlate(m));
        let mut placements: Vec<Placement> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut next_organic = 0usize;
        let mut i = 0;
        while i < entries.len() {
            let r = entries[i];
            let Some(item) = pool.get(r) else {
                return invalid(format!("position {} references unknown item", i + 1));
            };
            if !seen.insert(r) {
                return Err(DomainError::DuplicateItem(item.id.clone()));
            }
            match item.kind {
                ItemKind::Organic => {
                    if r.index() != next_organic {
                        return invalid(format!(
                            "organic {} at position {} is out of upstream order",
                            item.id,
                            i + 1
                        ));
                    }
                    next_organic += 1;
                    i += 1;
                }
                ItemKind::Ad => {
                    placements.push(Placement {
                        item: r,
                        start: i + 1,
                        span: 1,
                    });
                    i += 1;
                }
                ItemKind::LargeAd => {
                    let run = entries[i..].iter().take_while(|e| **e == r).count();
                    placements.push(Placement {
                        item: r,
                        start: i + 1,
                        span: run,
                    });
                    i += run;
                }
            }
        }
        let ad_positions = placements.iter().flat_map(|p| p.positions()).collect();
        Ok(Slate {
            entries,
            placements,
            ad_positions,
        })
    }

    /// Inserts `ad` so that it starts at `position`, pushing later items down
    /// and truncating the page to `rules.page_size`. The receiver is left
    /// untouched.
    pub fn insert_ad(
        &self,
        pool: &CandidatePool,
        ad: ItemRef,
        position: usize,
        rules: &RuleSet,
    ) -> Result<Slate, DomainError> {
        let item = pool
            .get(ad)
            .ok_or_else(|| DomainError::InvalidSlate("unknown ad".into()))?;
        if !item.kind.is_ad() {
            return Err(DomainError::NotAnAd(item.id.clone()));
        }
        if self.entries.contains(&ad) {
            return Err(DomainError::DuplicateItem(item.id.clone()));
        }
        let len = self.entries.len();
        let out_of_range = DomainError::PositionOutOfRange { position, len };
        if position == 0 || position > len + 1 {
            return Err(out_of_range);
        }
        // Inserting inside a large ad's span would split it.
        if self
            .placements
            .iter()
            .any(|p| p.start < position && position <= p.end())
        {
            return Err(out_of_range);
        }
        let span = rules.span_of(item.kind);
        let mut entries = Vec::with_capacity(len + span);
        entries.extend_from_slice(&self.entries[..position - 1]);
        entries.extend(std::iter::repeat_n(ad, span));
        entries.extend_from_slice(&self.entries[position - 1..]);
        entries.truncate(rules.page_size);
        Slate::from_entries(pool, entries)
    }

    /// Builds the slate whose ads sit at the given start positions, with
    /// organics filling the remaining positions in upstream order. The page
    /// length is `min(organic + total span, page_size)`. Returns `None` when
    /// the placements overlap or fall off the page.
    pub fn from_placements(
        pool: &CandidatePool,
        rules: &RuleSet,
        ads: &[(ItemRef, usize)],
    ) -> Option<Slate> {
        let total_span: usize = ads
            .iter()
            .map(|(r, _)| rules.span_of(pool.item(*r).kind))
            .sum();
        let len = (pool.organic().len() + total_span).min(rules.page_size);
        let mut slots: Vec<Option<ItemRef>> = vec![None; len];
        for &(r, start) in ads {
            let span = rules.span_of(pool.item(r).kind);
            if start == 0 || start > len {
                return None;
            }
            // A large ad may hang off the end of the page; check() rejects it.
            for pos in start..(start + span).min(len + 1) {
                if slots[pos - 1].replace(r).is_some() {
                    return None;
                }
            }
        }
        let mut organics = 0..pool.organic().len();
        // Running out of organics means the layout is not reachable by
        // insertion (a large ad hanging past the last organic).
        let entries = slots
            .into_iter()
            .map(|slot| slot.or_else(|| organics.next().map(|i| pool.organic_ref(i))))
            .collect::<Option<Vec<_>>>()?;
        Slate::from_entries(pool, entries).ok()
    }

    pub fn entries(&self) -> &[ItemRef] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ads on the page, ordered by start position.
    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    /// Sorted positions holding an ad; a large ad contributes every covered
    /// position.
    pub fn ad_positions(&self) -> &[usize] {
        &self.ad_positions
    }

    pub fn ad_count(&self) -> usize {
        self.placements.len()
    }

    pub fn contains(&self, r: ItemRef) -> bool {
        self.entries.contains(&r)
    }

    /// Item at a 1-based position.
    pub fn at(&self, position: usize) -> Option<ItemRef> {
        position
            .checked_sub(1)
            .and_then(|i| self.entries.get(i).copied())
    }

    pub fn item_ids(&self, pool: &CandidatePool) -> Vec<ItemId> {
        self.entries
            .iter()
            .map(|r| pool.item(*r).id.clone())
            .collect()
    }

    /// Canonical ordering key: ad count, then ad ids ascending, then the start
    /// position of each of those ads.
    pub fn key(&self, pool: &CandidatePool) -> SlateKey {
        let mut ads: Vec<(ItemId, usize)> = self
            .placements
            .iter()
            .map(|p| (pool.item(p.item).id.clone(), p.start))
            .collect();
        ads.sort();
        let (ids, positions) = ads.into_iter().unzip();
        SlateKey {
            ad_count: self.placements.len(),
            ids,
            positions,
        }
    }
}

/// Deterministic tie-break order over slates: fewer ads first, then
/// lexicographically smallest (ad id tuple, position tuple).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlateKey {
    pub ad_count: usize,
    pub ids: Vec<ItemId>,
    pub positions: Vec<usize>,
}

/// True when a slate with reward `candidate` should replace the incumbent:
/// strictly larger reward, or equal reward and a smaller key.
pub fn prefer(
    pool: &CandidatePool,
    candidate: (f64, &Slate),
    incumbent: Option<(f64, &Slate)>,
) -> bool {
    match incumbent {
        None => true,
        Some((best, slate)) => match candidate.0.partial_cmp(&best) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => candidate.1.key(pool) < slate.key(pool),
            _ => false,
        },
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn feat(dim: usize) -> Vec<f64> {
        vec![0.0; dim]
    }

    /// Pool with organics o1..oN, ads a1..aM, large ads g1..gG.
    pub fn pool(organic: usize, ads: usize, large: usize) -> CandidatePool {
        CandidatePool::new(
            (1..=organic)
                .map(|i| Item::organic(format!("o{i}"), 1.0, feat(2)))
                .collect(),
            (1..=ads)
                .map(|i| Item::ad(format!("a{i}"), Pricing::Cpm, 1.0, 0.1, 0.05, feat(2)))
                .collect(),
            (1..=large)
                .map(|i| Item::large_ad(format!("g{i}"), Pricing::Cpm, 2.0, 0.1, 0.05, feat(2)))
                .collect(),
            2,
            0,
        )
        .unwrap()
    }

    fn ids(slate: &Slate, pool: &CandidatePool) -> Vec<String> {
        slate.item_ids(pool).iter().map(|i| i.to_string()).collect()
    }

    /// Element-by-element replay of an insertion, used as the reference for
    /// `insert_ad`.
    fn replay_insert(
        base: &[String],
        ad: &str,
        span: usize,
        position: usize,
        page: usize,
    ) -> Vec<String> {
        let mut out = Vec::new();
        for (i, item) in base.iter().enumerate() {
            if i + 1 == position {
                for _ in 0..span {
                    out.push(ad.to_string());
                }
            }
            out.push(item.clone());
        }
        if position == base.len() + 1 {
            for _ in 0..span {
                out.push(ad.to_string());
            }
        }
        out.truncate(page);
        out
    }

    #[test]
    fn insert_shifts_without_truncation() {
        let p = pool(3, 1, 0);
        let rules = RuleSet::permissive(4, 2);
        let base = Slate::organic_page(&p, 4);
        let a1 = p.find("a1").unwrap();
        let s = base.insert_ad(&p, a1, 2, &rules).unwrap();
        assert_eq!(ids(&s, &p), ["o1", "a1", "o2", "o3"]);
        assert_eq!(s.ad_positions(), &[2]);
        assert_eq!(ids(&base, &p), ["o1", "o2", "o3"]);
    }

    #[test]
    fn insert_truncates_to_page_size() {
        let p = pool(3, 1, 0);
        let rules = RuleSet::permissive(3, 2);
        let base = Slate::organic_page(&p, 3);
        let s = base
            .insert_ad(&p, p.find("a1").unwrap(), 2, &rules)
            .unwrap();
        assert_eq!(ids(&s, &p), ["o1", "a1", "o2"]);
    }

    #[test]
    fn insert_large_ad_spans_and_truncates() {
        let p = pool(4, 0, 1);
        let rules = RuleSet {
            large_ad_span: 2,
            ..RuleSet::permissive(5, 2)
        };
        let base = Slate::organic_page(&p, 5);
        let s = base
            .insert_ad(&p, p.find("g1").unwrap(), 3, &rules)
            .unwrap();
        let expected = replay_insert(&ids(&base, &p), "g1", 2, 3, 5);
        assert_eq!(expected, ["o1", "o2", "g1", "g1", "o3"]);
        assert_eq!(ids(&s, &p), expected);
        assert_eq!(s.ad_positions(), &[3, 4]);
        assert_eq!(s.placements()[0].span, 2);
    }

    #[test]
    fn insert_errors() {
        let p = pool(3, 2, 1);
        let rules = RuleSet {
            large_ad_span: 2,
            ..RuleSet::permissive(6, 2)
        };
        let base = Slate::organic_page(&p, 6);
        let a1 = p.find("a1").unwrap();
        assert!(matches!(
            base.insert_ad(&p, a1, 0, &rules),
            Err(DomainError::PositionOutOfRange { .. })
        ));
        assert!(matches!(
            base.insert_ad(&p, a1, 5, &rules),
            Err(DomainError::PositionOutOfRange {
                position: 5,
                len: 3
            })
        ));
        let with = base.insert_ad(&p, a1, 4, &rules).unwrap();
        assert!(matches!(
            with.insert_ad(&p, a1, 1, &rules),
            Err(DomainError::DuplicateItem(_))
        ));
        assert!(matches!(
            base.insert_ad(&p, p.find("o1").unwrap(), 1, &rules),
            Err(DomainError::NotAnAd(_))
        ));
        let g = base
            .insert_ad(&p, p.find("g1").unwrap(), 2, &rules)
            .unwrap();
        assert!(matches!(
            g.insert_ad(&p, p.find("a2").unwrap(), 3, &rules),
            Err(DomainError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn from_placements_matches_sequential_insertion() {
        let p = pool(5, 2, 0);
        let rules = RuleSet::permissive(6, 2);
        let a1 = p.find("a1").unwrap();
        let a2 = p.find("a2").unwrap();
        let direct = Slate::from_placements(&p, &rules, &[(a2, 2), (a1, 5)]).unwrap();
        let seq = Slate::organic_page(&p, 6)
            .insert_ad(&p, a2, 2, &rules)
            .unwrap()
            .insert_ad(&p, a1, 5, &rules)
            .unwrap();
        assert_eq!(direct, seq);
        assert_eq!(ids(&direct, &p), ["o1", "a2", "o2", "o3", "a1", "o4"]);
        assert!(Slate::from_placements(&p, &rules, &[(a1, 2), (a2, 2)]).is_none());
        assert!(Slate::from_placements(&p, &rules, &[(a1, 7)]).is_none());
    }

    #[test]
    fn from_entries_rejects_reordered_organics() {
        let p = pool(3, 0, 0);
        let e = vec![ItemRef(1), ItemRef(0)];
        assert!(Slate::from_entries(&p, e).is_err());
        let dup = vec![ItemRef(0), ItemRef(0)];
        assert!(Slate::from_entries(&p, dup).is_err());
    }

    #[test]
    fn pool_invariants() {
        let bad_organic = Item {
            bid_value: 1.0,
            ..Item::organic("o1", 1.0, feat(2))
        };
        assert!(CandidatePool::new(vec![bad_organic], vec![], vec![], 2, 0).is_err());
        assert!(CandidatePool::new(vec![], vec![], vec![], 2, 0).is_err());
        let dup = vec![
            Item::organic("x", 1.0, feat(2)),
            Item::organic("x", 1.0, feat(2)),
        ];
        assert!(matches!(
            CandidatePool::new(dup, vec![], vec![], 2, 0),
            Err(DomainError::DuplicateItem(_))
        ));
        let short = vec![Item::organic("o1", 1.0, feat(1))];
        assert!(CandidatePool::new(short, vec![], vec![], 2, 0).is_err());
        let neg = Item::ad("a", Pricing::Cpa, -1.0, 0.0, 0.0, feat(2));
        assert!(CandidatePool::new(
            vec![Item::organic("o", 1.0, feat(2))],
            vec![neg],
            vec![],
            2,
            0
        )
        .is_err());
    }

    #[test]
    fn rules_validation() {
        assert!(RuleSet::permissive(5, 2).validate().is_ok());
        let r = RuleSet {
            min_pos: 0,
            ..RuleSet::permissive(5, 2)
        };
        assert!(r.validate().is_err());
        let r = RuleSet {
            max_pos: 6,
            ..RuleSet::permissive(5, 2)
        };
        assert!(r.validate().is_err());
        let r = RuleSet {
            min_spacing: 0,
            ..RuleSet::permissive(5, 2)
        };
        assert!(r.validate().is_err());
        let r = RuleSet {
            large_ad_span: 6,
            ..RuleSet::permissive(5, 2)
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn key_orders_by_count_then_ids_then_positions() {
        let p = pool(5, 2, 0);
        let rules = RuleSet::permissive(6, 2);
        let (a1, a2) = (p.find("a1").unwrap(), p.find("a2").unwrap());
        let none = Slate::organic_page(&p, 6);
        let s1 = Slate::from_placements(&p, &rules, &[(a1, 3)]).unwrap();
        let s2 = Slate::from_placements(&p, &rules, &[(a1, 4)]).unwrap();
        let s3 = Slate::from_placements(&p, &rules, &[(a2, 1)]).unwrap();
        let s4 = Slate::from_placements(&p, &rules, &[(a2, 1), (a1, 3)]).unwrap();
        let keys: Vec<_> = [&none, &s1, &s2, &s3, &s4]
            .iter()
            .map(|s| s.key(&p))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(keys[4].positions, vec![3, 1]);
        assert!(prefer(&p, (1.0, &s1), Some((1.0, &s2))));
        assert!(!prefer(&p, (1.0, &s2), Some((1.0, &s1))));
        assert!(prefer(&p, (1.5, &s4), Some((1.0, &none))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn insertion_preserves_organic_order_and_length(
                organic in 1usize..9,
                page in 1usize..10,
                span in 1usize..4,
                large in any::<bool>(),
                pos_seed in 0usize..100,
            ) {
                let p = pool(organic, 1, 1);
                let span = span.min(page);
                let rules = RuleSet { large_ad_span: span, ..RuleSet::permissive(page, 2) };
                let base = Slate::organic_page(&p, page);
                let ad = p.find(if large { "g1" } else { "a1" }).unwrap();
                let position = 1 + pos_seed % (base.len() + 1);
                let s = base.insert_ad(&p, ad, position, &rules).unwrap();
                let item_span = if large { span } else { 1 };
                prop_assert_eq!(s.len(), (base.len() + item_span).min(page));
                let organics: Vec<usize> = s.entries().iter()
                    .filter(|r| !p.item(**r).kind.is_ad())
                    .map(|r| r.index())
                    .collect();
                prop_assert!(organics.windows(2).all(|w| w[0] + 1 == w[1]));
                prop_assert_eq!(organics.first().copied().unwrap_or(0), 0);
                let rederived: Vec<usize> = s.entries().iter().enumerate()
                    .filter(|(_, r)| p.item(**r).kind.is_ad())
                    .map(|(i, _)| i + 1)
                    .collect();
                prop_assert_eq!(rederived, s.ad_positions().to_vec());
                let expected = replay_insert(&ids(&base, &p), p.item(ad).id.as_str(), item_span, position, page);
                prop_assert_eq!(ids(&s, &p), expected);
            }
        }
    }
}
