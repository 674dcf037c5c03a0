//! Topic clustering over a week's articles: group, score cohesion, pick
//! representatives, apply the selection quota, and compute the clustering
//! ratio.
//!
//! The reference clusterer is average-linkage agglomerative clustering on
//! cosine similarity: clusters merge while the best inter-cluster average
//! similarity stays at or above `merge_threshold`, then anything smaller than
//! `min_cluster_size` is left unclustered. It is fully deterministic (ties
//! break on `(published_at, id)`) and permutation-invariant, which keeps
//! every downstream artifact byte-stable. [`TopicClusterer`] is the pluggable
//! contract if a different topic model is swapped in.
//!
//! Cluster quality splits on mean pairwise similarity: strictly above
//! `cohesion_threshold` is high-cohesion, anything else low. Low-cohesion
//! topics can supplement the selection only when high-cohesion topics fall
//! below the quota floor, and their reported size is capped at 2 as a
//! confidence discount; their full membership still picks the representative.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbedError, Embedding};
use crate::market_data::NewsArticle;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("article/embedding count mismatch: {articles} articles vs {embeddings} embeddings")]
    CountMismatch { articles: usize, embeddings: usize },
    #[error("pairwise similarity needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("cluster has no members")]
    EmptyCluster,
    #[error("representative id {0} not found among articles")]
    UnknownArticle(String),
    #[error("bad clustering params: {0}")]
    BadParams(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// High-cohesion clusters carry full size metadata into prompts; low-cohesion
/// clusters are confidence-discounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CohesionClass {
    High,
    Low,
}

/// Tunable thresholds and quotas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringParams {
    /// Mean pairwise similarity strictly above this is high-cohesion.
    pub cohesion_threshold: f64,
    /// Agglomerative merging stops below this inter-cluster similarity.
    pub merge_threshold: f64,
    /// Smaller groups stay unclustered.
    pub min_cluster_size: usize,
    /// Low-cohesion topics supplement only when high count is below this.
    pub high_quota_floor: usize,
    /// At most this many low-cohesion supplements.
    pub low_supplement_cap: usize,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        ClusteringParams {
            cohesion_threshold: 0.6,
            merge_threshold: 0.5,
            min_cluster_size: 2,
            high_quota_floor: 6,
            low_supplement_cap: 4,
        }
    }
}

impl ClusteringParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(0.0..1.0).contains(&self.cohesion_threshold) || self.cohesion_threshold == 0.0 {
            return Err(ClusterError::BadParams(format!(
                "cohesion_threshold must be in (0,1), got {}",
                self.cohesion_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.merge_threshold) || self.merge_threshold == 0.0 {
            return Err(ClusterError::BadParams(format!(
                "merge_threshold must be in (0,1), got {}",
                self.merge_threshold
            )));
        }
        if self.min_cluster_size == 0 || self.high_quota_floor == 0 || self.low_supplement_cap == 0
        {
            return Err(ClusterError::BadParams(
                "cluster sizes and quotas must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// A group of same-topic articles with its quality metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicCluster {
    /// Member article ids, ascending `(published_at, id)`.
    pub member_ids: Vec<String>,
    /// Mean of member embeddings, renormalized.
    pub centroid: Embedding,
    /// Mean pairwise cosine similarity over all member pairs.
    pub cohesion: f64,
    /// The centroid-proximate member.
    pub representative_id: String,
    pub size: usize,
    /// Whole days between earliest and latest member timestamps.
    pub temporal_span_days: i64,
    pub cohesion_class: CohesionClass,
}

/// A topic as it enters a prompt: the representative article plus
/// dissemination metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedTopic {
    pub representative: NewsArticle,
    /// Full size for high-cohesion topics; capped at 2 for low-cohesion.
    pub reported_size: usize,
    pub temporal_span_days: i64,
    pub cohesion_class: CohesionClass,
}

/// Pluggable topic-partition contract; [`cluster_topics`] is the reference
/// implementation.
pub trait TopicClusterer: Send + Sync {
    fn cluster(
        &self,
        articles: &[NewsArticle],
        embeddings: &[Embedding],
        params: &ClusteringParams,
    ) -> Result<Vec<TopicCluster>, ClusterError>;
}

/// The deterministic average-linkage reference clusterer.
pub struct AverageLinkageClusterer;

impl TopicClusterer for AverageLinkageClusterer {
    fn cluster(
        &self,
        articles: &[NewsArticle],
        embeddings: &[Embedding],
        params: &ClusteringParams,
    ) -> Result<Vec<TopicCluster>, ClusterError> {
        cluster_topics(articles, embeddings, params)
    }
}

/// Mean pairwise cosine similarity over all unordered member pairs.
pub fn avg_pairwise_similarity(embeddings: &[&Embedding]) -> Result<f64, ClusterError> {
    if embeddings.len() < 2 {
        return Err(ClusterError::TooFewMembers(embeddings.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            sum += cosine_similarity(embeddings[i], embeddings[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// High iff strictly above the threshold; the threshold itself is Low.
pub fn classify_cohesion(cohesion: f64, threshold: f64) -> CohesionClass {
    if cohesion > threshold {
        CohesionClass::High
    } else {
        CohesionClass::Low
    }
}

/// The member most similar to the centroid; ties break on earliest
/// `published_at`, then lexicographic id.
pub fn representative<'a>(
    members: &[(&'a NewsArticle, &Embedding)],
    centroid: &Embedding,
) -> Result<&'a NewsArticle, ClusterError> {
    if members.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let mut ordered: Vec<&(&NewsArticle, &Embedding)> = members.iter().collect();
    ordered.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));
    let mut best = ordered[0].0;
    let mut best_sim = cosine_similarity(ordered[0].1, centroid)?;
    for (article, embedding) in ordered.into_iter().skip(1) {
        let sim = cosine_similarity(embedding, centroid)?;
        if sim > best_sim {
            best = article;
            best_sim = sim;
        }
    }
    Ok(best)
}

/// Whole days between the earliest and latest timestamp (floored); a
/// same-day cluster spans 0.
pub fn temporal_span_days(timestamps: &[DateTime<Utc>]) -> i64 {
    let (min, max) = match (timestamps.iter().min(), timestamps.iter().max()) {
        (Some(min), Some(max)) => (min, max),
        _ => return 0,
    };
    (*max - *min).num_days()
}

/// Mean of member embeddings, renormalized. Falls back to the first member
/// if the mean degenerates to zero norm.
fn centroid_of(embeddings: &[&Embedding]) -> Result<Embedding, ClusterError> {
    let dim = embeddings[0].dim();
    let mut mean = vec![0.0f64; dim];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(e.as_slice()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= embeddings.len() as f64;
    }
    match Embedding::unit(mean) {
        Ok(c) => Ok(c),
        Err(EmbedError::ZeroNorm) => Ok((*embeddings[0]).clone()),
        Err(e) => Err(e.into()),
    }
}

/// Group a week's articles into topics.
///
/// Output clusters are disjoint, each at least `min_cluster_size` strong,
/// ordered by their earliest member; articles in no cluster are unclustered
/// (see [`unclustered_ids`]). Identical inputs give identical output, in any
/// input order.
pub fn cluster_topics(
    articles: &[NewsArticle],
    embeddings: &[Embedding],
    params: &ClusteringParams,
) -> Result<Vec<TopicCluster>, ClusterError> {
    if articles.len() != embeddings.len() {
        return Err(ClusterError::CountMismatch {
            articles: articles.len(),
            embeddings: embeddings.len(),
        });
    }
    params.validate()?;
    if articles.is_empty() {
        return Ok(Vec::new());
    }

    // Canonical order: everything downstream indexes articles in
    // (published_at, id) order, which makes the whole pass
    // permutation-invariant.
    let mut order: Vec<usize> = (0..articles.len()).collect();
    order.sort_by(|&a, &b| articles[a].sort_key().cmp(&articles[b].sort_key()));
    let articles: Vec<&NewsArticle> = order.iter().map(|&i| &articles[i]).collect();
    let embeddings: Vec<&Embedding> = order.iter().map(|&i| &embeddings[i]).collect();
    let n = articles.len();

    let mut sim = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = cosine_similarity(embeddings[i], embeddings[j])?;
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }

    // Average linkage via Lance-Williams: linkage[a][b] is the mean
    // similarity over all cross pairs of clusters a and b, updated exactly on
    // each merge.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut linkage = sim.clone();
    let mut active: Vec<usize> = (0..n).collect();

    while active.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[(ai + 1)..] {
                let s = linkage[a][b];
                let better = match best {
                    None => true,
                    // Strict > keeps the earliest (smallest-index) pair on
                    // ties; cluster slots are ordered by earliest member.
                    Some((_, _, bs)) => s > bs,
                };
                if better {
                    best = Some((a, b, s));
                }
            }
        }
        let (a, b, s) = best.expect("at least one pair while len > 1");
        if s < params.merge_threshold {
            break;
        }
        let size_a = members[a].len() as f64;
        let size_b = members[b].len() as f64;
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let merged = (size_a * linkage[a][c] + size_b * linkage[b][c]) / (size_a + size_b);
            linkage[a][c] = merged;
            linkage[c][a] = merged;
        }
        let absorbed = std::mem::take(&mut members[b]);
        members[a].extend(absorbed);
        members[a].sort_unstable();
        active.retain(|&c| c != b);
    }

    let mut clusters = Vec::new();
    for &slot in &active {
        let idxs = &members[slot];
        if idxs.len() < params.min_cluster_size {
            continue;
        }
        let member_articles: Vec<&NewsArticle> = idxs.iter().map(|&i| articles[i]).collect();
        let member_embeddings: Vec<&Embedding> = idxs.iter().map(|&i| embeddings[i]).collect();
        let centroid = centroid_of(&member_embeddings)?;
        let cohesion = avg_pairwise_similarity(&member_embeddings)?;
        let pairs: Vec<(&NewsArticle, &Embedding)> = member_articles
            .iter()
            .copied()
            .zip(member_embeddings.iter().copied())
            .collect();
        let rep = representative(&pairs, &centroid)?;
        let timestamps: Vec<DateTime<Utc>> =
            member_articles.iter().map(|a| a.published_at).collect();
        clusters.push(TopicCluster {
            member_ids: member_articles.iter().map(|a| a.id.clone()).collect(),
            centroid,
            cohesion,
            representative_id: rep.id.clone(),
            size: idxs.len(),
            temporal_span_days: temporal_span_days(&timestamps),
            cohesion_class: classify_cohesion(cohesion, params.cohesion_threshold),
        });
    }
    // Slots are visited in ascending canonical order, so clusters come out
    // ordered by their earliest member already.
    Ok(clusters)
}

/// Ids of articles that ended up in no cluster.
pub fn unclustered_ids(articles: &[NewsArticle], clusters: &[TopicCluster]) -> Vec<String> {
    let clustered: std::collections::HashSet<&str> = clusters
        .iter()
        .flat_map(|c| c.member_ids.iter().map(String::as_str))
        .collect();
    let mut out: Vec<&NewsArticle> = articles
        .iter()
        .filter(|a| !clustered.contains(a.id.as_str()))
        .collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out.into_iter().map(|a| a.id.clone()).collect()
}

/// Apply the topic-selection quota.
///
/// Every high-cohesion cluster is selected (descending size, then descending
/// cohesion). When high-cohesion topics number fewer than
/// `high_quota_floor`, up to `low_supplement_cap` low-cohesion topics are
/// appended by descending cohesion, with reported size capped at 2.
pub fn select_topics(
    clusters: &[TopicCluster],
    articles: &[NewsArticle],
    params: &ClusteringParams,
) -> Result<Vec<SelectedTopic>, ClusterError> {
    let by_id: std::collections::HashMap<&str, &NewsArticle> =
        articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let lookup = |cluster: &TopicCluster| -> Result<NewsArticle, ClusterError> {
        by_id
            .get(cluster.representative_id.as_str())
            .map(|a| (*a).clone())
            .ok_or_else(|| ClusterError::UnknownArticle(cluster.representative_id.clone()))
    };

    let mut highs: Vec<&TopicCluster> = clusters
        .iter()
        .filter(|c| c.cohesion_class == CohesionClass::High)
        .collect();
    highs.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(b.cohesion.total_cmp(&a.cohesion))
            .then(a.representative_id.cmp(&b.representative_id))
    });

    let mut selected = Vec::with_capacity(highs.len());
    for cluster in &highs {
        selected.push(SelectedTopic {
            representative: lookup(cluster)?,
            reported_size: cluster.size,
            temporal_span_days: cluster.temporal_span_days,
            cohesion_class: CohesionClass::High,
        });
    }

    if highs.len() < params.high_quota_floor {
        let mut lows: Vec<&TopicCluster> = clusters
            .iter()
            .filter(|c| c.cohesion_class == CohesionClass::Low)
            .collect();
        lows.sort_by(|a, b| {
            b.cohesion
                .total_cmp(&a.cohesion)
                .then(a.representative_id.cmp(&b.representative_id))
        });
        for cluster in lows.into_iter().take(params.low_supplement_cap) {
            selected.push(SelectedTopic {
                representative: lookup(cluster)?,
                reported_size: cluster.size.min(2),
                temporal_span_days: cluster.temporal_span_days,
                cohesion_class: CohesionClass::Low,
            });
        }
    }
    Ok(selected)
}

/// Share of articles sitting in high-cohesion clusters; 0 when the week had
/// no articles.
pub fn clustering_ratio(clusters: &[TopicCluster], total_articles: usize) -> f64 {
    if total_articles == 0 {
        return 0.0;
    }
    let clustered: usize = clusters
        .iter()
        .filter(|c| c.cohesion_class == CohesionClass::High)
        .map(|c| c.size)
        .sum();
    clustered as f64 / total_articles as f64
}

/// One row of the weekly clustering diagnostics export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekDiagnostics {
    pub start_date: chrono::NaiveDate,
    pub news_count: usize,
    pub clusters: usize,
    pub good_clusters: usize,
    pub clustered_news: usize,
    pub ratio: f64,
}

impl WeekDiagnostics {
    pub fn from_clusters(
        start_date: chrono::NaiveDate,
        clusters: &[TopicCluster],
        news_count: usize,
    ) -> Self {
        let good: Vec<&TopicCluster> = clusters
            .iter()
            .filter(|c| c.cohesion_class == CohesionClass::High)
            .collect();
        WeekDiagnostics {
            start_date,
            news_count,
            clusters: clusters.len(),
            good_clusters: good.len(),
            clustered_news: good.iter().map(|c| c.size).sum(),
            ratio: clustering_ratio(clusters, news_count),
        }
    }
}

/// Write diagnostics rows as CSV: `start_date,news_count,clusters,good_clusters,clustered_news,ratio`
/// with the ratio fixed to two decimals.
pub fn write_diagnostics_csv<W: std::io::Write>(
    mut out: W,
    rows: &[WeekDiagnostics],
) -> std::io::Result<()> {
    writeln!(
        out,
        "start_date,news_count,clusters,good_clusters,clustered_news,ratio"
    )?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.2}",
            row.start_date, row.news_count, row.clusters, row.good_clusters, row.clustered_news, row.ratio
        )?;
    }
    Ok(())
}
