//! File formats: candidate pools (JSONL), rules, scorer and bench scenario
//! configs (TOML), and the JSONL records the CLI writes.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{DecodeConfig, DecodeMode, DecodeReport, Pruning};
use crate::domain::{CandidatePool, Item, ItemId, ItemKind, Pricing, RuleSet};
use crate::harness::BenchScenario;
use crate::scorer::{ItemReward, ItemScores, ReferenceScorerConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: parse error: {message}", Location(path, *line))]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("{}: {message}", Location(path, *line))]
    Schema {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
}

struct Location<'a>(&'a Path, Option<usize>);

impl fmt::Display for Location<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.1 {
            Some(line) => write!(f, "{}:{line}", self.0.display()),
            None => write!(f, "{}", self.0.display()),
        }
    }
}

impl FormatError {
    fn schema(path: &Path, line: Option<usize>, message: impl ToString) -> Self {
        FormatError::Schema {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.into(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub id: String,
    #[serde(default)]
    pub pricing: Pricing,
    #[serde(default)]
    pub bid_value: f64,
    #[serde(default)]
    pub engagement_value: f64,
    #[serde(default)]
    pub penalty_coeff: f64,
    pub features: Vec<f64>,
}

/// One line of a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolRecord {
    pub schema_version: u32,
    pub feature_dim: usize,
    #[serde(default)]
    pub user_exposure_count: u32,
    pub organic: Vec<ItemRecord>,
    #[serde(default)]
    pub ads: Vec<ItemRecord>,
    #[serde(default)]
    pub large_ads: Vec<ItemRecord>,
}

impl From<&Item> for ItemRecord {
    fn from(item: &Item) -> Self {
        ItemRecord {
            id: item.id.to_string(),
            pricing: item.pricing,
            bid_value: item.bid_value,
            engagement_value: item.engagement_value,
            penalty_coeff: item.penalty_coeff,
            features: item.features.clone(),
        }
    }
}

impl From<&CandidatePool> for PoolRecord {
    fn from(pool: &CandidatePool) -> Self {
        let list = |items: &[Item]| items.iter().map(ItemRecord::from).collect();
        PoolRecord {
            schema_version: SCHEMA_VERSION,
            feature_dim: pool.feature_dim(),
            user_exposure_count: pool.user_exposure_count(),
            organic: list(pool.organic()),
            ads: list(pool.ads()),
            large_ads: list(pool.large_ads()),
        }
    }
}

impl PoolRecord {
    pub fn into_pool(self) -> Result<CandidatePool, String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {}",
                self.schema_version
            ));
        }
        let build = |records: Vec<ItemRecord>, kind: ItemKind| -> Result<Vec<Item>, String> {
            records
                .into_iter()
                .map(|r| {
                    if kind == ItemKind::Organic && (r.bid_value != 0.0 || r.penalty_coeff != 0.0) {
                        return Err(format!("organic item {} has a bid value or penalty", r.id));
                    }
                    Ok(Item {
                        id: ItemId::new(&r.id),
                        kind,
                        pricing: r.pricing,
                        bid_value: r.bid_value,
                        engagement_value: r.engagement_value,
                        penalty_coeff: r.penalty_coeff,
                        features: r.features,
                    })
                })
                .collect()
        };
        CandidatePool::new(
            build(self.organic, ItemKind::Organic)?,
            build(self.ads, ItemKind::Ad)?,
            build(self.large_ads, ItemKind::LargeAd)?,
            self.feature_dim,
            self.user_exposure_count,
        )
        .map_err(|e| e.to_string())
    }
}

/// Parses a pool file held in memory; blank lines are skipped.
pub fn parse_pools(path: &Path, text: &str) -> Result<Vec<CandidatePool>, FormatError> {
    let mut pools = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = Some(i + 1);
        if line.trim().is_empty() {
            continue;
        }
        let record: PoolRecord = serde_json::from_str(line).map_err(|e| {
            let message = e.to_string();
            if e.is_data() {
                FormatError::schema(path, line_no, message)
            } else {
                FormatError::Parse {
                    path: path.into(),
                    line: line_no,
                    message,
                }
            }
        })?;
        pools.push(
            record
                .into_pool()
                .map_err(|m| FormatError::schema(path, line_no, m))?,
        );
    }
    Ok(pools)
}

pub fn read_pools(path: &Path) -> Result<Vec<CandidatePool>, FormatError> {
    parse_pools(path, &read(path)?)
}

pub fn write_pools(path: &Path, pools: &[CandidatePool]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.into(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for pool in pools {
        write_record(&mut out, &PoolRecord::from(pool)).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Syntax check, then `schema_version` check, then typed deserialization.
fn parse_toml_table(path: &Path, text: &str) -> Result<toml::Table, FormatError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| FormatError::Parse {
            path: path.into(),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
    match table.get("schema_version") {
        None => {}
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
        Some(v) => {
            return Err(FormatError::schema(
                path,
                None,
                format!("unsupported schema_version {v}"),
            ))
        }
    }
    Ok(table)
}

fn typed<T: DeserializeOwned>(path: &Path, table: toml::Table) -> Result<T, FormatError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| FormatError::schema(path, None, e.message()))
}

pub fn parse_rules(path: &Path, text: &str) -> Result<RuleSet, FormatError> {
    let mut table = parse_toml_table(path, text)?;
    table.remove("schema_version");
    let rules: RuleSet = typed(path, table)?;
    rules
        .validate()
        .map_err(|e| FormatError::schema(path, None, e))?;
    Ok(rules)
}

pub fn read_rules(path: &Path) -> Result<RuleSet, FormatError> {
    parse_rules(path, &read(path)?)
}

pub fn parse_scorer_config(path: &Path, text: &str) -> Result<ReferenceScorerConfig, FormatError> {
    typed(path, parse_toml_table(path, text)?)
}

pub fn read_scorer_config(path: &Path) -> Result<ReferenceScorerConfig, FormatError> {
    parse_scorer_config(path, &read(path)?)
}

pub fn parse_scenario(path: &Path, text: &str) -> Result<BenchScenario, FormatError> {
    let scenario: BenchScenario = typed(path, parse_toml_table(path, text)?)?;
    scenario
        .validate()
        .map_err(|e| FormatError::schema(path, None, e))?;
    Ok(scenario)
}

pub fn read_scenario(path: &Path) -> Result<BenchScenario, FormatError> {
    parse_scenario(path, &read(path)?)
}

/// Writes `record` as one JSON line.
pub fn write_record<W: Write, T: Serialize>(out: &mut W, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub id: ItemId,
    pub start: usize,
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRecord {
    pub schema_version: u32,
    pub pool_index: usize,
    pub mode: DecodeMode,
    pub pruning: Pruning,
    pub slate: Vec<ItemId>,
    pub placements: Vec<PlacementRecord>,
    pub reward: f64,
    pub breakdown: Vec<ItemReward>,
    pub scores: Vec<ItemScores>,
    pub evaluations: u64,
    pub pruned_by_constraint: u64,
    pub pruned_by_bound: u64,
    pub feasible_considered: u64,
}

impl RerankRecord {
    pub fn new(
        pool_index: usize,
        pool: &CandidatePool,
        config: DecodeConfig,
        report: &DecodeReport,
    ) -> Self {
        RerankRecord {
            schema_version: SCHEMA_VERSION,
            pool_index,
            mode: config.mode,
            pruning: config.pruning,
            slate: report.chosen.item_ids(pool),
            placements: placements(pool, &report.chosen),
            reward: report.reward.total,
            breakdown: report.reward.items.clone(),
            scores: report.scores.clone(),
            evaluations: report.evaluations,
            pruned_by_constraint: report.pruned_by_constraint,
            pruned_by_bound: report.pruned_by_bound,
            feasible_considered: report.feasible_considered,
        }
    }
}

pub fn placements(pool: &CandidatePool, slate: &crate::domain::Slate) -> Vec<PlacementRecord> {
    slate
        .placements()
        .iter()
        .map(|p| PlacementRecord {
            id: pool.item(p.item).id.clone(),
            start: p.start,
            span: p.span,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyStatus {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub schema_version: u32,
    pub pool_index: usize,
    pub status: VerifyStatus,
    pub mode: DecodeMode,
    pub pruning: Pruning,
    pub decoder_slate: Vec<ItemId>,
    pub oracle_slate: Vec<ItemId>,
    pub decoder_reward: f64,
    pub oracle_reward: f64,
    pub feasible_count: u64,
    pub per_k: Vec<u64>,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub schema_version: u32,
    pub pool_index: usize,
    pub total: u64,
    pub per_k: Vec<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::pool;

    fn p() -> &'static Path {
        Path::new("in.jsonl")
    }

    #[test]
    fn pool_round_trip() {
        let original = vec![pool(4, 2, 1), pool(3, 0, 0)];
        let text: String = original
            .iter()
            .map(|x| serde_json::to_string(&PoolRecord::from(x)).unwrap() + "\n\n")
            .collect();
        assert_eq!(parse_pools(p(), &text).unwrap(), original);
    }

    #[test]
    fn syntax_error_carries_line() {
        let good = serde_json::to_string(&PoolRecord::from(&pool(2, 0, 0))).unwrap();
        let text = format!("{good}\n{{\"schema_version\": 1,\n");
        match parse_pools(p(), &text).unwrap_err() {
            FormatError::Parse { line, .. } => assert_eq!(line, Some(2)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn schema_errors() {
        let mut rec = PoolRecord::from(&pool(2, 1, 0));
        rec.ads[0].features.push(0.0);
        let text = serde_json::to_string(&rec).unwrap();
        let err = parse_pools(p(), &text).unwrap_err();
        assert!(
            matches!(err, FormatError::Schema { line: Some(1), .. }),
            "{err}"
        );

        let err = parse_pools(
            p(),
            r#"{"schema_version":1,"feature_dim":2,"organic":[],"bogus":1}"#,
        )
        .unwrap_err();
        assert!(matches!(err, FormatError::Schema { .. }), "{err}");

        let mut rec = PoolRecord::from(&pool(2, 0, 0));
        rec.schema_version = 2;
        let err = parse_pools(p(), &serde_json::to_string(&rec).unwrap()).unwrap_err();
        assert!(err.to_string().contains("schema_version"));

        let mut rec = PoolRecord::from(&pool(2, 0, 0));
        rec.organic[0].bid_value = 1.0;
        assert!(parse_pools(p(), &serde_json::to_string(&rec).unwrap()).is_err());
    }

    const RULES: &str = r#"
schema_version = 1
page_size = 11
max_ads = 2
min_spacing = 3
min_pos = 2
max_pos = 11
large_ad_span = 2
large_ad_start_positions = [3, 5, 7]
user_frequency_cap = 20
"#;

    #[test]
    fn rules_toml() {
        let r = parse_rules(Path::new("r.toml"), RULES).unwrap();
        assert_eq!(r.page_size, 11);
        assert_eq!(r.user_frequency_cap, Some(20));
        assert_eq!(r.large_ad_start_positions.len(), 3);

        let missing_cap = RULES.replace("user_frequency_cap = 20", "");
        assert_eq!(
            parse_rules(Path::new("r.toml"), &missing_cap)
                .unwrap()
                .user_frequency_cap,
            None
        );

        let broken = RULES.replace("max_ads = 2", "max_ads = = 2");
        match parse_rules(Path::new("r.toml"), &broken).unwrap_err() {
            FormatError::Parse { line, .. } => assert_eq!(line, Some(4)),
            e => panic!("{e}"),
        }
        match parse_rules(Path::new("r.toml"), "page_size = 3\n= 4\n").unwrap_err() {
            FormatError::Parse { line, .. } => assert_eq!(line, Some(2)),
            e => panic!("{e}"),
        }
        let invalid = RULES.replace("max_pos = 11", "max_pos = 12");
        assert!(matches!(
            parse_rules(Path::new("r.toml"), &invalid),
            Err(FormatError::Schema { .. })
        ));
        let unknown = format!("{RULES}\nextra = 1\n");
        assert!(matches!(
            parse_rules(Path::new("r.toml"), &unknown),
            Err(FormatError::Schema { .. })
        ));
        let version = RULES.replace("schema_version = 1", "schema_version = 3");
        assert!(matches!(
            parse_rules(Path::new("r.toml"), &version),
            Err(FormatError::Schema { .. })
        ));
    }

    #[test]
    fn scorer_and_scenario_toml() {
        let cfg = parse_scorer_config(
            Path::new("s.toml"),
            "schema_version = 1\nseed = 3\nfeature_dim = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        let default = BenchScenario::default();
        let text = toml::to_string(&default).unwrap();
        assert_eq!(parse_scenario(Path::new("b.toml"), &text).unwrap(), default);
    }
}
