//! Synthetic pools and strategy benchmarking.
//!
//! A [`BenchScenario`] is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! name = "default"
//! seed = 42
//! trials = 200
//! ge_candidates = 64          # M, proposals scored by the generator-evaluator baseline
//! oracle_limit = 1000000      # skip the oracle when |F| is larger
//! pruning = "hard_filter_plus_upper_bound"
//!
//! [pool]
//! organic = [11, 11]          # inclusive ranges
//! ads = [1, 4]
//! large_ads = [0, 2]
//! feature_dim = 4
//! cpa_fraction = 0.5
//! organic_engagement = [0.2, 1.0]
//! bid_value = [0.5, 3.0]
//! engagement_value = [0.0, 0.5]
//! penalty_coeff = [0.0, 0.4]
//! user_exposure = [0, 24]
//!
//! [rules]                     # same keys as a rules file
//! [scorer]                    # same keys as a scorer config file
//! [sweep]                     # optional complexity sweep
//! ad_counts = [1, 2, 3, 4, 5, 6]
//! page_sizes = [11]
//! permutation_sizes = [5, 6, 7, 8]
//! trials_per_point = 40
//! pruning = "hard_filter_only"
//! ```
//!
//! Pool files read by the CLI hold one JSON object per line:
//!
//! ```json
//! {"schema_version":1,"feature_dim":2,"user_exposure_count":0,
//!  "organic":[{"id":"o1","engagement_value":0.8,"features":[0.1,-0.4]}],
//!  "ads":[{"id":"a1","pricing":"cpa","bid_value":2.0,"engagement_value":0.1,
//!          "penalty_coeff":0.05,"features":[0.3,0.2]}],
//!  "large_ads":[]}
//! ```
//!
//! `ads` and `large_ads` may be omitted; `pricing` defaults to `cpm`; organic
//! items must not carry a bid value or penalty.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{check, count_feasible, enumerate_feasible};
use crate::decoder::{decode, DecodeConfig, DecodeMode, Pruning};
use crate::domain::{prefer, CandidatePool, Item, Pricing, RuleSet, Slate};
use crate::oracle::{brute_force, OracleConfig, OracleError, DEFAULT_FEASIBLE_LIMIT};
use crate::scorer::{
    score_slate, CountingScorer, ReferenceScorer, ReferenceScorerConfig, ScoreError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl From<crate::domain::DomainError> for HarnessError {
    fn from(e: crate::domain::DomainError) -> Self {
        HarnessError::InvalidScenario(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolShape {
    pub organic: [usize; 2],
    pub ads: [usize; 2],
    #[serde(default)]
    pub large_ads: [usize; 2],
    pub feature_dim: usize,
    #[serde(default)]
    pub cpa_fraction: f64,
    pub organic_engagement: [f64; 2],
    pub bid_value: [f64; 2],
    pub engagement_value: [f64; 2],
    pub penalty_coeff: [f64; 2],
    #[serde(default)]
    pub user_exposure: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub ad_counts: Vec<usize>,
    pub page_sizes: Vec<usize>,
    pub permutation_sizes: Vec<usize>,
    pub trials_per_point: usize,
    /// Pruning used for the two-stage sweep. Bound pruning makes counts
    /// data-dependent, so the default measures the hard-filtered family.
    #[serde(default = "sweep_pruning")]
    pub pruning: Pruning,
}

fn sweep_pruning() -> Pruning {
    Pruning::HardFilterOnly
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchScenario {
    #[serde(default = "one")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    pub ge_candidates: usize,
    #[serde(default = "default_limit")]
    pub oracle_limit: u64,
    #[serde(default)]
    pub pruning: Pruning,
    pub pool: PoolShape,
    pub rules: RuleSet,
    pub scorer: ReferenceScorerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn one() -> u32 {
    1
}

fn default_limit() -> u64 {
    DEFAULT_FEASIBLE_LIMIT
}

impl Default for BenchScenario {
    /// Production-like page: eleven organics, up to six ads and two large
    /// ads, at most two ads per page.
    fn default() -> Self {
        BenchScenario {
            schema_version: 1,
            name: "default".into(),
            seed: 42,
            trials: 200,
            ge_candidates: 64,
            oracle_limit: DEFAULT_FEASIBLE_LIMIT,
            pruning: Pruning::HardFilterPlusUpperBound,
            pool: PoolShape {
                organic: [11, 11],
                ads: [1, 4],
                large_ads: [0, 2],
                feature_dim: 4,
                cpa_fraction: 0.5,
                organic_engagement: [0.2, 1.0],
                bid_value: [0.5, 3.0],
                engagement_value: [0.0, 0.5],
                penalty_coeff: [0.0, 0.4],
                user_exposure: [0, 24],
            },
            rules: RuleSet {
                page_size: 11,
                max_ads: 2,
                min_spacing: 3,
                min_pos: 2,
                max_pos: 11,
                large_ad_span: 2,
                large_ad_start_positions: [3, 5, 7, 9].into(),
                user_frequency_cap: Some(20),
            },
            scorer: ReferenceScorerConfig::seeded(7, 4),
            sweep: None,
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Debug>(
    name: &str,
    r: &[T; 2],
) -> Result<(), HarnessError> {
    if r[0] > r[1] {
        return Err(HarnessError::InvalidScenario(format!(
            "{name} range {r:?} is inverted"
        )));
    }
    Ok(())
}

impl BenchScenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(m));
        if self.schema_version != 1 {
            return bad(format!(
                "unsupported schema_version {}",
                self.schema_version
            ));
        }
        let p = &self.pool;
        check_range("organic", &p.organic)?;
        check_range("ads", &p.ads)?;
        check_range("large_ads", &p.large_ads)?;
        check_range("user_exposure", &p.user_exposure)?;
        for (name, r) in [
            ("organic_engagement", &p.organic_engagement),
            ("bid_value", &p.bid_value),
            ("engagement_value", &p.engagement_value),
            ("penalty_coeff", &p.penalty_coeff),
        ] {
            check_range(name, r)?;
            if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if p.organic[0] == 0 {
            return bad("organic length must be at least 1".into());
        }
        if p.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&p.cpa_fraction) {
            return bad(format!("cpa_fraction {} outside [0, 1]", p.cpa_fraction));
        }
        if self.scorer.feature_dim != p.feature_dim {
            return bad(format!(
                "scorer feature_dim {} differs from pool feature_dim {}",
                self.scorer.feature_dim, p.feature_dim
            ));
        }
        self.rules.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.trials_per_point == 0 {
                return bad("sweep.trials_per_point must be positive".into());
            }
            if sweep.page_sizes.contains(&0) {
                return bad("sweep page sizes must be positive".into());
            }
        }
        Ok(())
    }
}

/// Deterministic pool for `(scenario.seed, trial_index)`.
pub fn generate_pool(
    scenario: &BenchScenario,
    trial_index: u64,
) -> Result<CandidatePool, HarnessError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(trial_index);
    let shape = &scenario.pool;
    let uniform = |r: [f64; 2], rng: &mut ChaCha8Rng| {
        if r[0] == r[1] {
            r[0]
        } else {
            rng.random_range(r[0]..r[1])
        }
    };
    let organic_len = rng.random_range(shape.organic[0]..=shape.organic[1]);
    let ad_count = rng.random_range(shape.ads[0]..=shape.ads[1]);
    let large_count = rng.random_range(shape.large_ads[0]..=shape.large_ads[1]);
    let exposure = rng.random_range(shape.user_exposure[0]..=shape.user_exposure[1]);

    let features = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..shape.feature_dim)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect()
    };
    let organic = (1..=organic_len)
        .map(|i| {
            let n = uniform(shape.organic_engagement, &mut rng);
            Item::organic(format!("o{i}"), n, features(&mut rng))
        })
        .collect();
    let ad = |i: usize, rng: &mut ChaCha8Rng, large: bool| {
        let pricing = if rng.random_bool(shape.cpa_fraction) {
            Pricing::Cpa
        } else {
            Pricing::Cpm
        };
        let s = uniform(shape.bid_value, rng);
        let n = uniform(shape.engagement_value, rng);
        let d = uniform(shape.penalty_coeff, rng);
        let f = features(rng);
        if large {
            Item::large_ad(format!("g{i}"), pricing, s, n, d, f)
        } else {
            Item::ad(format!("a{i}"), pricing, s, n, d, f)
        }
    };
    let ads = (1..=ad_count).map(|i| ad(i, &mut rng, false)).collect();
    let large_ads = (1..=large_count).map(|i| ad(i, &mut rng, true)).collect();
    Ok(CandidatePool::new(
        organic,
        ads,
        large_ads,
        shape.feature_dim,
        exposure,
    )?)
}

/// Number of permutations of `n` items, visited one by one (Heap's
/// algorithm). Only sensible for small `n`.
pub fn count_permutations_executed(n: usize) -> u64 {
    let mut items: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut visited = 1u64;
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            items.swap(j, i);
            visited += 1;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    visited
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Largest `n` for which full-permutation decoding is actually executed.
pub const MAX_EXECUTED_PERMUTATION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        Summary {
            mean,
            median: percentile(&v, 0.5),
            p99: percentile(&v, 0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: String,
    pub trials: usize,
    pub evaluations: Summary,
    pub wall_time_us: Summary,
    pub mean_reward: Option<f64>,
    pub compliance_rate: Option<f64>,
    /// Mean of `oracle reward − strategy reward` over trials where the oracle
    /// ran.
    pub mean_optimality_gap: Option<f64>,
    pub max_optimality_gap: Option<f64>,
    pub oracle_trials: usize,
}

/// Distribution of `exhaustive reward − two-stage reward` per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub trials: usize,
    pub zero_gap_trials: usize,
    pub negative_gap_trials: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub gaps: Vec<f64>,
}

impl GapReport {
    pub fn from_gaps(gaps: Vec<f64>) -> GapReport {
        let mut sorted = gaps.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        GapReport {
            trials: n,
            zero_gap_trials: sorted.iter().filter(|g| **g == 0.0).count(),
            negative_gap_trials: sorted.iter().filter(|g| **g < 0.0).count(),
            min: sorted.first().copied().unwrap_or(f64::NAN),
            mean: if n == 0 {
                f64::NAN
            } else {
                sorted.iter().sum::<f64>() / n as f64
            },
            median: percentile(&sorted, 0.5),
            p90: percentile(&sorted, 0.9),
            p99: percentile(&sorted, 0.99),
            max: sorted.last().copied().unwrap_or(f64::NAN),
            gaps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationPoint {
    pub n: usize,
    pub executed: u64,
    pub factorial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ads: usize,
    pub page_size: usize,
    pub ads_times_page: usize,
    pub mean_evaluations: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (intercept + slope * a)).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub permutations: Vec<PermutationPoint>,
    pub two_stage: Vec<SweepPoint>,
    pub two_stage_fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub gap: GapReport,
    pub sweep: Option<SweepReport>,
}

pub const FULL_PERMUTATION: &str = "full_permutation";
pub const GENERATOR_EVALUATOR: &str = "generator_evaluator";
pub const CGR_TWO_STAGE: &str = "cgr_two_stage";
pub const CGR_EXHAUSTIVE: &str = "cgr_exhaustive";

#[derive(Default)]
struct Column {
    evaluations: Vec<f64>,
    wall_us: Vec<f64>,
    rewards: Vec<f64>,
    compliant: usize,
    gaps: Vec<f64>,
}

impl Column {
    fn row(&self, strategy: &str, trials: usize, scored: bool) -> BenchRow {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        BenchRow {
            strategy: strategy.into(),
            trials,
            evaluations: Summary::of(&self.evaluations),
            wall_time_us: Summary::of(&self.wall_us),
            mean_reward: if scored { mean(&self.rewards) } else { None },
            compliance_rate: scored.then(|| self.compliant as f64 / trials as f64),
            mean_optimality_gap: if scored { mean(&self.gaps) } else { None },
            max_optimality_gap: if scored && !self.gaps.is_empty() {
                Some(self.gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            } else {
                None
            },
            oracle_trials: self.gaps.len(),
        }
    }
}

fn micros(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e6
}

/// Generator-evaluator baseline: `m` feasible pages drawn uniformly with
/// replacement, all scored, best kept.
pub fn generator_evaluator(
    pool: &CandidatePool,
    rules: &RuleSet,
    scorer: &ReferenceScorer,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Slate, f64, u64), ScoreError> {
    let feasible: Vec<Slate> = enumerate_feasible(pool, rules).collect();
    let counting = CountingScorer::new(scorer);
    let mut best: Option<(Slate, f64)> = None;
    for _ in 0..m {
        let s = feasible.choose(rng).expect("feasible set is never empty");
        let (reward, _) = score_slate(s, pool, &counting)?;
        if prefer(pool, (reward.total, s), best.as_ref().map(|(b, r)| (*r, b))) {
            best = Some((s.clone(), reward.total));
        }
    }
    let (slate, reward) = match best {
        Some(b) => b,
        None => {
            let s = Slate::organic_page(pool, rules.page_size);
            let r = score_slate(&s, pool, &counting)?.0.total;
            (s, r)
        }
    };
    Ok((slate, reward, counting.evaluations()))
}

pub fn run_bench(scenario: &BenchScenario) -> Result<BenchReport, HarnessError> {
    scenario.validate()?;
    let scorer = ReferenceScorer::new(scenario.scorer.clone())?;
    let rules = &scenario.rules;
    let oracle_cfg = OracleConfig {
        feasible_limit: scenario.oracle_limit,
    };
    let mut perm = Column::default();
    let mut ge = Column::default();
    let mut two = Column::default();
    let mut ex = Column::default();
    let mut gaps = Vec::with_capacity(scenario.trials);

    for t in 0..scenario.trials as u64 {
        let pool = generate_pool(scenario, t)?;

        let n = pool.len();
        let start = Instant::now();
        let count = if n <= MAX_EXECUTED_PERMUTATION {
            count_permutations_executed(n) as f64
        } else {
            factorial(n)
        };
        perm.wall_us.push(micros(start));
        perm.evaluations.push(count);

        let oracle = if count_feasible(&pool, rules).total <= scenario.oracle_limit {
            Some(
                brute_force(&pool, rules, &scorer, &oracle_cfg)?
                    .reward
                    .total,
            )
        } else {
            None
        };

        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(t);
        let start = Instant::now();
        let (slate, reward, evals) =
            generator_evaluator(&pool, rules, &scorer, scenario.ge_candidates, &mut rng)?;
        ge.wall_us.push(micros(start));
        ge.evaluations.push(evals as f64);
        ge.rewards.push(reward);
        ge.compliant += check(&slate, rules, &pool).is_empty() as usize;
        if let Some(o) = oracle {
            ge.gaps.push(o - reward);
        }

        let mut rewards = [0.0; 2];
        for (i, (col, mode)) in [
            (&mut two, DecodeMode::TwoStage),
            (&mut ex, DecodeMode::ExhaustiveBounded),
        ]
        .into_iter()
        .enumerate()
        {
            let start = Instant::now();
            let r = decode(
                &pool,
                rules,
                &scorer,
                DecodeConfig::new(mode, scenario.pruning),
            )?;
            col.wall_us.push(micros(start));
            col.evaluations.push(r.evaluations as f64);
            col.rewards.push(r.reward.total);
            col.compliant += check(&r.chosen, rules, &pool).is_empty() as usize;
            if let Some(o) = oracle {
                col.gaps.push(o - r.reward.total);
            }
            rewards[i] = r.reward.total;
        }
        gaps.push(rewards[1] - rewards[0]);
    }

    let n = scenario.trials;
    let rows = vec![
        perm.row(FULL_PERMUTATION, n, false),
        ge.row(GENERATOR_EVALUATOR, n, true),
        two.row(CGR_TWO_STAGE, n, true),
        ex.row(CGR_EXHAUSTIVE, n, true),
    ];
    let sweep = scenario
        .sweep
        .as_ref()
        .map(|s| run_sweep(scenario, s))
        .transpose()?;
    Ok(BenchReport {
        rows,
        gap: GapReport::from_gaps(gaps),
        sweep,
    })
}

/// Full-permutation counts for small `n` and mean two-stage evaluation counts
/// over a grid of ad counts and page sizes.
pub fn run_sweep(
    scenario: &BenchScenario,
    sweep: &SweepConfig,
) -> Result<SweepReport, HarnessError> {
    let permutations = sweep
        .permutation_sizes
        .iter()
        .map(|&n| PermutationPoint {
            n,
            executed: if n <= MAX_EXECUTED_PERMUTATION {
                count_permutations_executed(n)
            } else {
                0
            },
            factorial: factorial(n),
        })
        .collect();

    let scorer = ReferenceScorer::new(scenario.scorer.clone())?;
    let mut points = Vec::new();
    for &page in &sweep.page_sizes {
        for &ads in &sweep.ad_counts {
            let mut s = scenario.clone();
            s.pool.organic = [page, page];
            s.pool.ads = [ads, ads];
            s.pool.large_ads = [0, 0];
            s.rules.page_size = page;
            s.rules.min_pos = s.rules.min_pos.min(page);
            s.rules.max_pos = page;
            s.rules.large_ad_span = s.rules.large_ad_span.min(page);
            let mut total = 0.0;
            for t in 0..sweep.trials_per_point as u64 {
                let pool = generate_pool(&s, t)?;
                let r = decode(
                    &pool,
                    &s.rules,
                    &scorer,
                    DecodeConfig::new(DecodeMode::TwoStage, sweep.pruning),
                )?;
                total += r.evaluations as f64;
            }
            points.push(SweepPoint {
                ads,
                page_size: page,
                ads_times_page: ads * page,
                mean_evaluations: total / sweep.trials_per_point as f64,
            });
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.ads_times_page as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_evaluations).collect();
    Ok(SweepReport {
        permutations,
        two_stage_fit: linear_fit(&x, &y),
        two_stage: points,
    })
}

/// Human-readable comparison table.
pub fn render_table(report: &BenchReport) -> String {
    let mut out = String::new();
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    let _ = writeln!(
        out,
        "{:<22} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10} {:>11} {:>10}",
        "strategy",
        "evals mean",
        "evals p50",
        "evals p99",
        "us p50",
        "us p99",
        "reward",
        "compliance",
        "gap mean"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<22} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.1} {:>10.1} {:>10} {:>11} {:>10}",
            r.strategy,
            r.evaluations.mean,
            r.evaluations.median,
            r.evaluations.p99,
            r.wall_time_us.median,
            r.wall_time_us.p99,
            opt(r.mean_reward, 4),
            opt(r.compliance_rate.map(|c| c * 100.0), 1),
            opt(r.mean_optimality_gap, 6),
        );
    }
    let g = &report.gap;
    let _ = writeln!(
        out,
        "\ntwo-stage gap vs exhaustive over {} trials: zero in {}, mean {:.6}, p50 {:.6}, p90 {:.6}, p99 {:.6}, max {:.6}",
        g.trials, g.zero_gap_trials, g.mean, g.median, g.p90, g.p99, g.max
    );
    if let Some(s) = &report.sweep {
        let _ = writeln!(out, "\nfull permutation:");
        for p in &s.permutations {
            let _ = writeln!(
                out,
                "  N={:<3} executed={:<10} N!={:.0}",
                p.n, p.executed, p.factorial
            );
        }
        let _ = writeln!(out, "two-stage evaluations:");
        for p in &s.two_stage {
            let _ = writeln!(
                out,
                "  A={:<2} L={:<3} A*L={:<4} mean evals={:.2}",
                p.ads, p.page_size, p.ads_times_page, p.mean_evaluations
            );
        }
        let f = s.two_stage_fit;
        let _ = writeln!(
            out,
            "  linear fit: evals = {:.3} + {:.3} * A*L, R^2 = {:.5}",
            f.intercept, f.slope, f.r_squared
        );
    }
    out
}
