//! Clustering quality metrics against ground-truth labels, majority-label
//! overlap between two clusterings, and the analytic incremental-vs-full
//! reclustering cost model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Assignment, ClusterError};
use crate::cam::DeviceParams;

/// Quality of one clustering, judged by ground-truth labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    /// Fraction of spectra sitting in clusters of size ≥ 2.
    pub clustered_spectra_ratio: f64,
    /// Fraction of clustered spectra whose label differs from their
    /// cluster's majority label. Zero — with `incorrect_defined` false —
    /// when nothing is clustered.
    pub incorrect_clustering_ratio: f64,
    pub incorrect_defined: bool,
    pub n_spectra: usize,
    pub n_clusters: usize,
    pub n_clustered: usize,
    /// Majority labels of all clusters of size ≥ 2; the currency of
    /// [`overlap_report`].
    pub majority_labels: BTreeSet<String>,
}

/// Compute quality metrics from an assignment log and an id → label map.
/// Cluster membership is reconstructed from the assignments themselves
/// (each spectrum belongs to the cluster its assignment names). Every
/// assigned spectrum must carry a label.
pub fn metrics(
    assignments: &[Assignment],
    labels: &BTreeMap<String, String>,
) -> Result<QualityMetrics, ClusterError> {
    let missing = assignments
        .iter()
        .filter(|a| !labels.contains_key(&a.spectrum_id))
        .count();
    if missing > 0 {
        return Err(ClusterError::LabelsMissing { missing });
    }

    let mut clusters: BTreeMap<(u64, u64), Vec<&str>> = BTreeMap::new();
    for a in assignments {
        clusters
            .entry((a.bucket, a.cluster))
            .or_default()
            .push(labels[&a.spectrum_id].as_str());
    }

    let n_spectra = assignments.len();
    let n_clusters = clusters.len();
    let mut n_clustered = 0usize;
    let mut n_incorrect = 0usize;
    let mut majority_labels = BTreeSet::new();

    for members in clusters.values() {
        if members.len() < 2 {
            continue;
        }
        n_clustered += members.len();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &l in members {
            *counts.entry(l).or_default() += 1;
        }
        // majority label; count ties break to the lexicographically
        // smallest label (BTreeMap iteration order makes this total)
        let (majority, majority_count) = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&l, &c)| (l, c))
            .expect("non-empty cluster");
        n_incorrect += members.len() - majority_count;
        majority_labels.insert(majority.to_string());
    }

    let incorrect_defined = n_clustered > 0;
    Ok(QualityMetrics {
        clustered_spectra_ratio: if n_spectra == 0 {
            0.0
        } else {
            n_clustered as f64 / n_spectra as f64
        },
        incorrect_clustering_ratio: if incorrect_defined {
            n_incorrect as f64 / n_clustered as f64
        } else {
            0.0
        },
        incorrect_defined,
        n_spectra,
        n_clusters,
        n_clustered,
        majority_labels,
    })
}

/// Majority-label agreement between two clusterings, with the three
/// UpSet-style counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// |A ∩ B| / |A ∪ B| over majority-label sets; 1.0 for two empty sets.
    pub overlap: f64,
    pub a_only: usize,
    pub b_only: usize,
    pub both: usize,
}

pub fn overlap_report(a: &BTreeSet<String>, b: &BTreeSet<String>) -> OverlapReport {
    let both = a.intersection(b).count();
    let union = a.union(b).count();
    OverlapReport {
        overlap: if union == 0 {
            1.0
        } else {
            both as f64 / union as f64
        },
        a_only: a.len() - both,
        b_only: b.len() - both,
        both,
    }
}

/// Query traffic of one bucket for the speedup model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BucketLoad {
    /// Consensus rows present before the query stream starts.
    pub initial_rows: usize,
    /// Queries that match an existing cluster.
    pub matches: u64,
    /// Queries that fall outside every threshold.
    pub outliers: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SpeedupWorkload {
    pub buckets: Vec<BucketLoad>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub expansion_ns: f64,
    pub full_recluster_ns: f64,
    /// full_recluster_ns / expansion_ns.
    pub ratio: f64,
    pub expansion_comparisons: u64,
    pub full_recluster_comparisons: u64,
}

fn lta_ns(rows: usize, device: &DeviceParams) -> f64 {
    if rows <= 1 {
        0.0
    } else {
        f64::from(usize::BITS - (rows - 1).leading_zeros()) * device.lta_stage_latency_ns
    }
}

/// Analytic latency of the same query stream under the two outlier
/// policies.
///
/// Both policies pay one CAM search plus LTA per query. On an outlier,
/// EXPANSION appends a single row (one row-write). FULL_RECLUSTER instead
/// re-clusters the whole bucket: every item (stored rows plus the
/// newcomer) is re-compared once — modeled as one search each — and every
/// row is rewritten. Matches are interleaved uniformly between outliers.
pub fn compare_speedup(workload: &SpeedupWorkload, device: &DeviceParams) -> SpeedupReport {
    let mut expansion_ns = 0.0;
    let mut full_ns = 0.0;
    let mut expansion_cmp = 0u64;
    let mut full_cmp = 0u64;

    for b in &workload.buckets {
        // interleave: spread matches evenly across outlier events
        let per_query = |rows: usize| device.search_latency_ns + lta_ns(rows, device);
        let mut rows = b.initial_rows.max(1);
        let total = b.matches + b.outliers;
        let mut matches_done = 0u64;
        for k in 0..b.outliers {
            // matches arriving before the (k+1)-th outlier; the loop
            // bound guarantees the divisor is nonzero
            let matches_now = (b.matches * (k + 1)) / b.outliers - matches_done;
            matches_done += matches_now;
            for _ in 0..matches_now {
                expansion_ns += per_query(rows);
                full_ns += per_query(rows);
                expansion_cmp += rows as u64;
                full_cmp += rows as u64;
            }
            // the outlier itself
            expansion_ns += per_query(rows) + device.write_latency_per_row_ns;
            full_ns += per_query(rows);
            expansion_cmp += rows as u64;
            full_cmp += rows as u64;
            // full policy re-clusters rows+1 items and rewrites each row
            let rebuilt = rows + 1;
            full_ns += rebuilt as f64
                * (per_query(rebuilt) + device.write_latency_per_row_ns);
            full_cmp += (rebuilt * rebuilt) as u64;
            rows += 1;
        }
        // trailing matches after the last outlier
        for _ in matches_done..total - b.outliers {
            expansion_ns += per_query(rows);
            full_ns += per_query(rows);
            expansion_cmp += rows as u64;
            full_cmp += rows as u64;
        }
    }

    SpeedupReport {
        expansion_ns,
        full_recluster_ns: full_ns,
        ratio: if expansion_ns == 0.0 { 1.0 } else { full_ns / expansion_ns },
        expansion_comparisons: expansion_cmp,
        full_recluster_comparisons: full_cmp,
    }
}
