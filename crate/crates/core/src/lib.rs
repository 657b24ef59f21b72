//! Constrained slate reranking: inserts ads into an organic feed under
//! load, spacing, position and large-ad rules, decodes the best page by
//! enumeration with admissible pruning, and checks itself against a
//! brute-force oracle.
//!
//! ```
//! use slate_rerank::{decode, CandidatePool, DecodeConfig, Item, Pricing, ReferenceScorer,
//!     ReferenceScorerConfig, RuleSet};
//!
//! let organic = (1..=5).map(|i| Item::organic(format!("o{i}"), 1.0, vec![0.0; 2])).collect();
//! let ads = vec![Item::ad("a1", Pricing::Cpm, 3.0, 0.0, 0.1, vec![0.5, 0.5])];
//! let pool = CandidatePool::new(organic, ads, vec![], 2, 0).unwrap();
//! let rules = RuleSet::permissive(5, 1);
//! let scorer = ReferenceScorer::new(ReferenceScorerConfig::seeded(1, 2)).unwrap();
//! let report = decode(&pool, &rules, &scorer, DecodeConfig::default()).unwrap();
//! assert_eq!(report.chosen.len(), 5);
//! ```

pub mod cli;
pub mod constraints;
pub mod decoder;
pub mod domain;
pub mod harness;
pub mod io;
pub mod oracle;
pub mod scorer;

pub use constraints::{
    check, count_feasible, enumerate_feasible, is_feasible, FeasibleCount, Violation, ViolationKind,
};
pub use decoder::{
    decode, stage1_insert, stage2_expand, upper_bound, DecodeConfig, DecodeMode, DecodeReport,
    Pruning,
};
pub use domain::{
    CandidatePool, DomainError, Item, ItemId, ItemKind, ItemRef, Placement, Pricing, RuleSet,
    Slate, SlateKey,
};
pub use oracle::{brute_force, OracleConfig, OracleError, OracleResult};
pub use scorer::{
    CountingScorer, ItemReward, ItemScores, ReferenceScorer, ReferenceScorerConfig,
    RewardBreakdown, ScoreError, SlateScorer,
};
