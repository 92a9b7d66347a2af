//! Structure-aware hard negative mining.
//!
//! For a `(query, positive)` pair the miner retrieves the `retrieval_depth`
//! nearest articles, drops the query's gold set, buckets the rest by hierarchy
//! level and samples up to `negative_budget` of them from the positive's own
//! level and its valid neighbours in the ordered hierarchy. Articles linked to
//! the positive in the citation graph (either direction) are then added on top
//! of the budget.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{dense_search_text, DenseIndex};
use crate::citation::{citation_neighbors, CitationGraph};
use crate::corpus::{ArticleId, Corpus, HierarchyLevel};
use crate::error::{Error, Result};
use crate::providers::EmbeddingProvider;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Take candidates in dense-rank order within each bucket.
    #[default]
    RankOrder,
    /// Shuffle each bucket with the configured seed before taking.
    RandomWithinBucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub retrieval_depth: usize,
    pub negative_budget: usize,
    pub random_seed: u64,
    pub sampling: SamplingMode,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            retrieval_depth: 100,
            negative_budget: 8,
            random_seed: 0,
            sampling: SamplingMode::RankOrder,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negative_budget < 1 {
            return Err(Error::Config("mining.negative_budget must be >= 1".into()));
        }
        if self.retrieval_depth < self.negative_budget {
            return Err(Error::Config(format!(
                "mining.retrieval_depth ({}) must be >= mining.negative_budget ({})",
                self.retrieval_depth, self.negative_budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriplet {
    pub query: String,
    pub positive_id: ArticleId,
    pub negative_ids: Vec<ArticleId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningOutcome {
    pub triplet: TrainingTriplet,
    pub target_levels: Vec<HierarchyLevel>,
    pub hierarchy_negatives: usize,
    pub citation_negatives: usize,
    pub warnings: Vec<String>,
}

/// Only the ordered authority levels 0..=4 have neighbours.
pub fn is_valid_level(level: i64) -> bool {
    (0..=4).contains(&level)
}

/// The positive's level plus its valid neighbours in the ordered hierarchy.
pub fn target_levels(positive: HierarchyLevel) -> BTreeSet<HierarchyLevel> {
    let mut t = BTreeSet::from([positive]);
    if positive.is_ordered() {
        let l = positive.value() as i64;
        for adj in [l - 1, l + 1] {
            if is_valid_level(adj) {
                t.insert(HierarchyLevel::from_value(adj).expect("valid level"));
            }
        }
    }
    t
}

/// Retrieved candidates grouped by hierarchy level. Each entry keeps its
/// 0-based rank in the original retrieval list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HierarchyBuckets {
    buckets: BTreeMap<HierarchyLevel, Vec<(usize, ArticleId)>>,
}

impl HierarchyBuckets {
    pub fn partition<'a>(
        ranked: impl IntoIterator<Item = &'a ArticleId>,
        level_of: impl Fn(&ArticleId) -> Option<HierarchyLevel>,
    ) -> Self {
        let mut buckets: BTreeMap<HierarchyLevel, Vec<(usize, ArticleId)>> = BTreeMap::new();
        for (rank, id) in ranked.into_iter().enumerate() {
            if let Some(level) = level_of(id) {
                buckets.entry(level).or_default().push((rank, id.clone()));
            }
        }
        HierarchyBuckets { buckets }
    }

    pub fn get(&self, level: HierarchyLevel) -> &[(usize, ArticleId)] {
        self.buckets.get(&level).map_or(&[], Vec::as_slice)
    }

    pub fn levels(&self) -> impl Iterator<Item = HierarchyLevel> + '_ {
        self.buckets.keys().copied()
    }
}

/// Budgeted selection over the target levels:
///
/// 1. up to `ceil(budget / 2)` from the positive's own level;
/// 2. the budget left after step 1 is split evenly across the other target
///    levels in ascending level order, any remainder going to the lower levels;
/// 3. any shortfall is refilled from the unselected target-level candidates in
///    global retrieval-rank order.
///
/// Selection within a bucket follows rank order, or a seeded shuffle in
/// [`SamplingMode::RandomWithinBucket`].
pub fn sample_by_hierarchy(
    buckets: &HierarchyBuckets,
    positive_level: HierarchyLevel,
    targets: &BTreeSet<HierarchyLevel>,
    budget: usize,
    mode: SamplingMode,
    seed: u64,
) -> Vec<ArticleId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ordered: BTreeMap<HierarchyLevel, Vec<(usize, ArticleId)>> = targets
        .iter()
        .map(|&l| {
            let mut entries = buckets.get(l).to_vec();
            if mode == SamplingMode::RandomWithinBucket {
                entries.shuffle(&mut rng);
            }
            (l, entries)
        })
        .collect();

    let mut selected: Vec<ArticleId> = Vec::with_capacity(budget);
    let mut taken: HashSet<usize> = HashSet::new();
    let mut take = |level: HierarchyLevel, quota: usize, selected: &mut Vec<ArticleId>| {
        let mut n = 0;
        for (rank, id) in ordered.get(&level).into_iter().flatten() {
            if n == quota {
                break;
            }
            if taken.insert(*rank) {
                selected.push(id.clone());
                n += 1;
            }
        }
    };

    if targets.contains(&positive_level) {
        take(positive_level, budget.div_ceil(2), &mut selected);
    }
    let others: Vec<HierarchyLevel> = targets
        .iter()
        .copied()
        .filter(|&l| l != positive_level)
        .collect();
    if !others.is_empty() {
        let remaining = budget - selected.len();
        let base = remaining / others.len();
        let extra = remaining % others.len();
        for (i, &level) in others.iter().enumerate() {
            take(level, base + usize::from(i < extra), &mut selected);
        }
    }

    if selected.len() < budget {
        let mut rest: Vec<&(usize, ArticleId)> = ordered
            .values()
            .flatten()
            .filter(|(rank, _)| !taken.contains(rank))
            .collect();
        rest.sort_by_key(|(rank, _)| *rank);
        for (_, id) in rest.into_iter().take(budget - selected.len()) {
            selected.push(id.clone());
        }
    }
    selected
}

fn pair_seed(seed: u64, query: &str, positive: &ArticleId) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query.as_bytes());
    h.update([0]);
    h.update(positive.as_str().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Mines negatives for one `(query, positive)` pair. The positive is always
/// excluded, even if it is missing from `gold`.
#[allow(clippy::too_many_arguments)]
pub fn mine_struct_negatives(
    query: &str,
    positive: &ArticleId,
    gold: &BTreeSet<ArticleId>,
    corpus: &Corpus,
    graph: &CitationGraph,
    index: &DenseIndex,
    provider: &dyn EmbeddingProvider,
    cfg: &MiningConfig,
) -> Result<MiningOutcome> {
    cfg.validate()?;
    let positive_level = corpus
        .level_of(positive.as_str())
        .ok_or_else(|| Error::UnknownArticle(positive.to_string()))?;

    let excluded = |id: &ArticleId| id == positive || gold.contains(id);

    let retrieved = dense_search_text(index, provider, query, cfg.retrieval_depth)?;
    let remaining: Vec<&ArticleId> = retrieved
        .iter()
        .map(|(id, _)| id)
        .filter(|id| !excluded(id))
        .collect();
    let buckets = HierarchyBuckets::partition(remaining, |id| corpus.level_of(id.as_str()));
    let targets = target_levels(positive_level);

    let mut negatives = sample_by_hierarchy(
        &buckets,
        positive_level,
        &targets,
        cfg.negative_budget,
        cfg.sampling,
        pair_seed(cfg.random_seed, query, positive),
    );
    let hierarchy_negatives = negatives.len();

    let mut citation_negatives = 0;
    for n in citation_neighbors(graph, positive.as_str()) {
        if !excluded(&n) && !negatives.contains(&n) {
            negatives.push(n);
            citation_negatives += 1;
        }
    }

    let mut warnings = Vec::new();
    if negatives.is_empty() {
        warnings.push(format!("no negatives found for positive {positive}"));
    }
    Ok(MiningOutcome {
        triplet: TrainingTriplet {
            query: query.to_string(),
            positive_id: positive.clone(),
            negative_ids: negatives,
        },
        target_levels: targets.into_iter().collect(),
        hierarchy_negatives,
        citation_negatives,
        warnings,
    })
}
