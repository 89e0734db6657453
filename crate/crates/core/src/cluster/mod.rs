//! Cluster lifecycle: greedy Phase-I clustering (which doubles as the
//! full-reclustering oracle), percentile-fit dynamic thresholds, the
//! match/outlier decision, cluster expansion, and periodic consensus
//! rewrite.
//!
//! Cluster ids are per-bucket and monotonically assigned; a cluster's id
//! equals its row index in the bucket's CAM bank, which is what lets the
//! LTA winner index name the matching cluster directly. Expansion only
//! ever appends, so ids stay stable across eviction/reload round-trips.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{lta_select, CamBank, CamError, CurrentModel, DeviceParams, EnergyLatencyLedger};
use crate::hdc::{hamming, Accumulator, HdcError, Hypervector};

pub mod metrics;

pub use metrics::{
    compare_speedup, metrics, overlap_report, BucketLoad, OverlapReport, QualityMetrics,
    SpeedupReport, SpeedupWorkload,
};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("threshold fit requires Phase-I statistics, none were collected")]
    NoStatistics,
    #[error("bucket {bucket}: bank row {row} does not match cluster record {expected}")]
    RowClusterMismatch { bucket: u64, row: usize, expected: u64 },
    #[error("quality metrics need ground-truth labels; {missing} spectra have none")]
    LabelsMissing { missing: usize },
    #[error(transparent)]
    Hdc(#[from] HdcError),
    #[error(transparent)]
    Cam(#[from] CamError),
}

/// One cluster: its consensus row plus the vote accumulator behind it.
/// `consensus` mirrors the CAM row contents; when `pending_updates` is
/// zero it equals `accumulator.bundle(tie)` exactly.
#[derive(Clone, Debug)]
pub struct ClusterRecord {
    pub cluster_id: u64,
    pub bucket_id: u64,
    pub consensus: Hypervector,
    pub accumulator: Accumulator,
    pub members: u32,
    pub pending_updates: u32,
}

impl ClusterRecord {
    fn founded(cluster_id: u64, bucket_id: u64, hv: &Hypervector) -> Self {
        Self {
            cluster_id,
            bucket_id,
            consensus: hv.clone(),
            accumulator: Accumulator::from_hv(hv),
            members: 1,
            pending_updates: 0,
        }
    }
}

/// Per-bucket MATCH/NEW_CLUSTER cutoff with a pooled global fallback for
/// buckets whose Phase-I produced too few clusters to trust.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub per_bucket: BTreeMap<u64, u32>,
    /// Fallback τ* fit on the pooled distances of every bucket.
    pub global: u32,
    pub percentile: f64,
    pub beta: f64,
}

impl ThresholdModel {
    pub fn threshold_for(&self, bucket: u64) -> u32 {
        self.per_bucket.get(&bucket).copied().unwrap_or(self.global)
    }
}

/// Phase-I distance statistics of one bucket.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    /// Hamming distance of every member to its cluster's final consensus,
    /// in (cluster id, arrival) order.
    pub member_distances: Vec<u32>,
    pub n_clusters: usize,
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 · n)` of the
/// ascending-sorted sample.
fn nearest_rank(sorted: &[u32], p: f64) -> u32 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Fit τ_b per bucket (β × p-th percentile of member-to-consensus
/// distances) and the pooled fallback τ*. Buckets with fewer than 3
/// clusters carry too little structure and fall back to τ*. The result is
/// clamped into `[1, dim−1]` so degenerate zero-noise statistics still
/// yield a usable cutoff.
pub fn fit_threshold(
    stats: &BTreeMap<u64, BucketStats>,
    p: f64,
    beta: f64,
    dim: usize,
) -> Result<ThresholdModel, ClusterError> {
    let clamp = |raw: f64| -> u32 { (raw.round().max(1.0) as u32).min(dim as u32 - 1) };

    let mut pooled: Vec<u32> = stats
        .values()
        .flat_map(|s| s.member_distances.iter().copied())
        .collect();
    if pooled.is_empty() {
        return Err(ClusterError::NoStatistics);
    }
    pooled.sort_unstable();
    let global = clamp(beta * f64::from(nearest_rank(&pooled, p)));

    let mut per_bucket = BTreeMap::new();
    for (&bucket, s) in stats {
        if s.n_clusters >= 3 {
            let mut d = s.member_distances.clone();
            d.sort_unstable();
            per_bucket.insert(bucket, clamp(beta * f64::from(nearest_rank(&d, p))));
        }
    }
    Ok(ThresholdModel {
        per_bucket,
        global,
        percentile: p,
        beta,
    })
}

/// Phase-III outcome for one query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Match,
    NewCluster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub spectrum_id: String,
    pub bucket: u64,
    pub cluster: u64,
    pub outcome: Outcome,
    /// Hamming distance to the nearest consensus at decision time; an
    /// empty bucket has no rows, recorded as the dimension (farther than
    /// any real distance).
    pub distance: u32,
}

/// Result of Phase-I clustering of one bucket.
#[derive(Clone, Debug)]
pub struct PhaseOneResult {
    pub records: Vec<ClusterRecord>,
    pub assignments: Vec<Assignment>,
    pub stats: BucketStats,
}

/// Greedy leader clustering in arrival order: each hypervector joins the
/// first existing cluster whose consensus lies within `theta`, otherwise
/// founds a new cluster; the joined cluster's consensus is rebundled
/// immediately. Member distances in the returned stats are measured
/// against final consensus vectors.
///
/// This routine is also the full-reclustering oracle the incremental path
/// is judged against.
pub fn initial_cluster(
    bucket_id: u64,
    items: &[(String, Hypervector)],
    theta: u32,
    tie: &Hypervector,
) -> Result<PhaseOneResult, ClusterError> {
    let mut records: Vec<ClusterRecord> = Vec::new();
    let mut membership: Vec<Vec<usize>> = Vec::new();
    let mut assignments = Vec::with_capacity(items.len());

    for (i, (id, hv)) in items.iter().enumerate() {
        let mut joined = None;
        for r in &mut records {
            let d = hamming(&r.consensus, hv)?;
            if d <= theta {
                r.accumulator.add(hv)?;
                r.consensus = r.accumulator.bundle(tie)?;
                r.members += 1;
                joined = Some((r.cluster_id, d));
                break;
            }
        }
        let assignment = match joined {
            Some((cluster, d)) => {
                membership[cluster as usize].push(i);
                Assignment {
                    spectrum_id: id.clone(),
                    bucket: bucket_id,
                    cluster,
                    outcome: Outcome::Match,
                    distance: d,
                }
            }
            None => {
                let cluster = records.len() as u64;
                records.push(ClusterRecord::founded(cluster, bucket_id, hv));
                membership.push(vec![i]);
                Assignment {
                    spectrum_id: id.clone(),
                    bucket: bucket_id,
                    cluster,
                    outcome: Outcome::NewCluster,
                    distance: hv.dim() as u32,
                }
            }
        };
        assignments.push(assignment);
    }

    let mut member_distances = Vec::with_capacity(items.len());
    for (r, members) in records.iter().zip(&membership) {
        for &i in members {
            member_distances.push(hamming(&r.consensus, &items[i].1)?);
        }
    }
    let n_clusters = records.len();
    Ok(PhaseOneResult {
        records,
        assignments,
        stats: BucketStats {
            member_distances,
            n_clusters,
        },
    })
}

/// All cluster state of a run, partitioned by bucket.
pub struct ClusterEngine {
    dim: usize,
    tie: Hypervector,
    /// Rewrite the CAM row after this many accumulated match updates;
    /// 0 freezes every consensus at creation (no match-path writes).
    rewrite_period: u32,
    buckets: BTreeMap<u64, Vec<ClusterRecord>>,
    stats: BTreeMap<u64, BucketStats>,
    thresholds: Option<ThresholdModel>,
}

impl ClusterEngine {
    pub fn new(dim: usize, tie: Hypervector, rewrite_period: u32) -> Self {
        Self {
            dim,
            tie,
            rewrite_period,
            buckets: BTreeMap::new(),
            stats: BTreeMap::new(),
            thresholds: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tie(&self) -> &Hypervector {
        &self.tie
    }

    pub fn rewrite_period(&self) -> u32 {
        self.rewrite_period
    }

    pub fn thresholds(&self) -> Option<&ThresholdModel> {
        self.thresholds.as_ref()
    }

    pub fn set_thresholds(&mut self, t: ThresholdModel) {
        self.thresholds = Some(t);
    }

    pub fn stats(&self) -> &BTreeMap<u64, BucketStats> {
        &self.stats
    }

    pub fn bucket_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.buckets.keys().copied()
    }

    pub fn records(&self, bucket: u64) -> &[ClusterRecord] {
        self.buckets.get(&bucket).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Install externally built records (snapshot restore). Records must
    /// arrive with ids 0..n in order.
    pub fn install_bucket(&mut self, bucket: u64, records: Vec<ClusterRecord>, stats: BucketStats) {
        debug_assert!(records
            .iter()
            .enumerate()
            .all(|(i, r)| r.cluster_id == i as u64 && r.bucket_id == bucket));
        self.buckets.insert(bucket, records);
        self.stats.insert(bucket, stats);
    }

    /// Run Phase-I over one bucket's spectra and adopt the result.
    pub fn run_phase_one(
        &mut self,
        bucket: u64,
        items: &[(String, Hypervector)],
        theta: u32,
    ) -> Result<Vec<Assignment>, ClusterError> {
        let result = initial_cluster(bucket, items, theta, &self.tie)?;
        self.buckets.insert(bucket, result.records);
        self.stats.insert(bucket, result.stats);
        Ok(result.assignments)
    }

    /// Fit thresholds from the Phase-I statistics collected so far.
    pub fn fit_thresholds(&mut self, p: f64, beta: f64) -> Result<(), ClusterError> {
        self.thresholds = Some(fit_threshold(&self.stats, p, beta, self.dim)?);
        Ok(())
    }

    /// Consensus rows of a bucket in cluster-id order — the image the
    /// scheduler writes into a CAM bank on load.
    pub fn bucket_rows(&self, bucket: u64) -> Vec<(u64, Hypervector)> {
        self.records(bucket)
            .iter()
            .map(|r| (r.cluster_id, r.consensus.clone()))
            .collect()
    }

    pub fn bucket_row_count(&self, bucket: u64) -> usize {
        self.records(bucket).len()
    }

    /// Full Phase-III handling of one query whose bucket is resident in
    /// `bank`: search, LTA selection, threshold decision, and the
    /// matching commit (consensus update or expansion).
    #[allow(clippy::too_many_arguments)]
    pub fn handle_query(
        &mut self,
        spectrum_id: &str,
        bucket: u64,
        hv: &Hypervector,
        bank: &mut CamBank,
        model: &CurrentModel,
        device: &DeviceParams,
        ledger: &mut EnergyLatencyLedger,
    ) -> Result<Assignment, ClusterError> {
        debug_assert_eq!(bank.bucket_id(), bucket);
        if bank.rows() == 0 {
            // empty bucket: nothing to search, the query founds cluster 0
            return self.expand(spectrum_id, bucket, hv, self.dim as u32, bank, device, ledger);
        }

        let matches = bank.search(hv, model, device, ledger)?;
        let entries: Vec<(usize, f64)> = matches.iter().map(|m| (m.row, m.current)).collect();
        let (row, _) = lta_select(&entries, device, ledger)?;
        let winner = matches[row];
        let threshold = self
            .thresholds
            .as_ref()
            .map(|t| t.threshold_for(bucket))
            .unwrap_or(self.dim as u32 - 1);

        if winner.distance <= threshold {
            let cluster = bank.cluster_of_row(row);
            self.update_consensus(spectrum_id, bucket, cluster, hv, winner.distance, bank, device, ledger)
        } else {
            self.expand(spectrum_id, bucket, hv, winner.distance, bank, device, ledger)
        }
    }

    /// MATCH commit: fold the query into the cluster accumulator; every
    /// `rewrite_period`-th update rebundles the consensus and rewrites the
    /// CAM row.
    #[allow(clippy::too_many_arguments)]
    pub fn update_consensus(
        &mut self,
        spectrum_id: &str,
        bucket: u64,
        cluster: u64,
        hv: &Hypervector,
        distance: u32,
        bank: &mut CamBank,
        device: &DeviceParams,
        ledger: &mut EnergyLatencyLedger,
    ) -> Result<Assignment, ClusterError> {
        let record = &mut self
            .buckets
            .get_mut(&bucket)
            .expect("bucket exists for resident bank")[cluster as usize];
        record.accumulator.add(hv)?;
        record.members += 1;
        record.pending_updates += 1;
        if self.rewrite_period > 0 && record.pending_updates >= self.rewrite_period {
            record.consensus = record.accumulator.bundle(&self.tie)?;
            record.pending_updates = 0;
            bank.rewrite_row(cluster as usize, record.consensus.clone(), device, ledger)?;
        }
        Ok(Assignment {
            spectrum_id: spectrum_id.to_string(),
            bucket,
            cluster,
            outcome: Outcome::Match,
            distance,
        })
    }

    /// NEW_CLUSTER commit: found a cluster from the query and append its
    /// consensus as a fresh CAM row.
    #[allow(clippy::too_many_arguments)]
    pub fn expand(
        &mut self,
        spectrum_id: &str,
        bucket: u64,
        hv: &Hypervector,
        distance: u32,
        bank: &mut CamBank,
        device: &DeviceParams,
        ledger: &mut EnergyLatencyLedger,
    ) -> Result<Assignment, ClusterError> {
        let records = self.buckets.entry(bucket).or_default();
        let cluster = records.len() as u64;
        if bank.rows() != records.len() {
            return Err(ClusterError::RowClusterMismatch {
                bucket,
                row: bank.rows(),
                expected: cluster,
            });
        }
        bank.write_rows(&[(cluster, hv.clone())], device, ledger)?;
        records.push(ClusterRecord::founded(cluster, bucket, hv));
        Ok(Assignment {
            spectrum_id: spectrum_id.to_string(),
            bucket,
            cluster,
            outcome: Outcome::NewCluster,
            distance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::CurrentModel;

    const D: usize = 2048;

    fn hv(seed: u64, index: u64) -> Hypervector {
        Hypervector::random(D, seed, index).unwrap()
    }

    fn tie() -> Hypervector {
        hv(0xbeef, 0)
    }

    /// `base` with exactly `d` deterministic bit flips.
    fn at_distance(base: &Hypervector, d: u32, salt: u64) -> Hypervector {
        let mut out = base.clone();
        let step = 97usize;
        let start = (salt as usize * 131) % D;
        for i in 0..d as usize {
            out.flip_bit((start + i * step) % D);
        }
        assert_eq!(hamming(base, &out).unwrap(), d);
        out
    }

    fn items(hvs: &[Hypervector]) -> Vec<(String, Hypervector)> {
        hvs.iter()
            .enumerate()
            .map(|(i, h)| (format!("s{i}"), h.clone()))
            .collect()
    }

    #[test]
    fn single_spectrum_single_cluster() {
        let a = hv(1, 0);
        let got = initial_cluster(5, &items(std::slice::from_ref(&a)), 100, &tie()).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.records[0].consensus, a);
        assert_eq!(got.records[0].members, 1);
        assert_eq!(got.stats.member_distances, vec![0]);
        assert_eq!(got.assignments[0].outcome, Outcome::NewCluster);
    }

    // Zero intra-cluster distance: identical replicas per template, three
    // templates → exactly the template partition at any θ below the
    // inter-template distance.
    #[test]
    fn zero_noise_bucket_recovers_partition() {
        let templates: Vec<Hypervector> = (0..3).map(|t| hv(7, t)).collect();
        let mut hvs = Vec::new();
        for t in &templates {
            for _ in 0..4 {
                hvs.push(t.clone());
            }
        }
        let got = initial_cluster(0, &items(&hvs), 200, &tie()).unwrap();
        assert_eq!(got.records.len(), 3);
        for (i, a) in got.assignments.iter().enumerate() {
            assert_eq!(a.cluster, (i / 4) as u64);
        }
        assert!(got.stats.member_distances.iter().all(|&d| d == 0));
    }

    // All-pairs oracle fixes the intra/inter distance modes first; greedy
    // clustering at the midpoint θ must then recover the ground truth to
    // ARI ≥ 0.95.
    #[test]
    fn noisy_bucket_clusters_to_high_ari() {
        // 8 "peptides" × 8 replicas at ~120 bits of noise
        let mut hvs = Vec::new();
        let mut labels = Vec::new();
        for p in 0..8u64 {
            let base = hv(21, p);
            for r in 0..8u64 {
                hvs.push(at_distance(&base, 120, p * 8 + r));
                labels.push(p);
            }
        }
        let mut intra_max = 0;
        let mut inter_min = u32::MAX;
        for i in 0..hvs.len() {
            for j in i + 1..hvs.len() {
                let d = hamming(&hvs[i], &hvs[j]).unwrap();
                if labels[i] == labels[j] {
                    intra_max = intra_max.max(d);
                } else {
                    inter_min = inter_min.min(d);
                }
            }
        }
        assert!(intra_max < inter_min, "modes overlap: {intra_max} vs {inter_min}");
        let theta = (intra_max + inter_min) / 2;
        let got = initial_cluster(0, &items(&hvs), theta, &tie()).unwrap();

        let ari = adjusted_rand_index(
            &labels,
            &got.assignments.iter().map(|a| a.cluster).collect::<Vec<_>>(),
        );
        assert!(ari >= 0.95, "ARI {ari}");
    }

    fn adjusted_rand_index(a: &[u64], b: &[u64]) -> f64 {
        let choose2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
        let mut table: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        let mut rows: BTreeMap<u64, u64> = BTreeMap::new();
        let mut cols: BTreeMap<u64, u64> = BTreeMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *table.entry((x, y)).or_default() += 1;
            *rows.entry(x).or_default() += 1;
            *cols.entry(y).or_default() += 1;
        }
        let sum_ij: f64 = table.values().map(|&n| choose2(n)).sum();
        let sum_a: f64 = rows.values().map(|&n| choose2(n)).sum();
        let sum_b: f64 = cols.values().map(|&n| choose2(n)).sum();
        let total = choose2(a.len() as u64);
        let expected = sum_a * sum_b / total;
        let max = (sum_a + sum_b) / 2.0;
        (sum_ij - expected) / (max - expected)
    }

    #[test]
    fn percentile_nearest_rank() {
        let stats = BTreeMap::from([(
            0u64,
            BucketStats {
                member_distances: (1..=100).collect(),
                n_clusters: 3,
            },
        )]);
        let t = fit_threshold(&stats, 95.0, 1.0, D).unwrap();
        assert_eq!(t.per_bucket[&0], 95);
        assert_eq!(t.global, 95);
    }

    #[test]
    fn degenerate_distances_and_beta() {
        let stats = BTreeMap::from([(
            3u64,
            BucketStats {
                member_distances: vec![40; 12],
                n_clusters: 4,
            },
        )]);
        let t = fit_threshold(&stats, 95.0, 1.5, D).unwrap();
        assert_eq!(t.per_bucket[&3], 60); // β·d0
        // all-zero distances clamp to the minimum usable cutoff
        let zero = BTreeMap::from([(
            0u64,
            BucketStats {
                member_distances: vec![0; 8],
                n_clusters: 5,
            },
        )]);
        let t0 = fit_threshold(&zero, 95.0, 1.0, D).unwrap();
        assert_eq!(t0.per_bucket[&0], 1);
    }

    #[test]
    fn few_cluster_bucket_falls_back_to_global() {
        let stats = BTreeMap::from([
            (
                0u64,
                BucketStats {
                    member_distances: vec![10, 20, 30, 40],
                    n_clusters: 1, // too few clusters → no per-bucket τ
                },
            ),
            (
                1u64,
                BucketStats {
                    member_distances: vec![100; 4],
                    n_clusters: 3,
                },
            ),
        ]);
        let t = fit_threshold(&stats, 95.0, 1.0, D).unwrap();
        assert!(!t.per_bucket.contains_key(&0));
        assert_eq!(t.per_bucket[&1], 100);
        // pooled: [10,20,30,40,100,100,100,100], rank ceil(0.95·8)=8 → 100
        assert_eq!(t.global, 100);
        assert_eq!(t.threshold_for(0), 100);
        assert_eq!(t.threshold_for(1), 100);
    }

    #[test]
    fn no_statistics_errors() {
        assert_eq!(
            fit_threshold(&BTreeMap::new(), 95.0, 1.0, D).unwrap_err(),
            ClusterError::NoStatistics
        );
    }

    struct Rig {
        engine: ClusterEngine,
        bank: CamBank,
        model: CurrentModel,
        device: DeviceParams,
        ledger: EnergyLatencyLedger,
    }

    impl Rig {
        fn new(rewrite_period: u32, threshold: u32) -> Self {
            let mut engine = ClusterEngine::new(D, tie(), rewrite_period);
            engine.set_thresholds(ThresholdModel {
                per_bucket: BTreeMap::new(),
                global: threshold,
                percentile: 95.0,
                beta: 1.0,
            });
            Self {
                engine,
                bank: CamBank::new(0, D, 1024).unwrap(),
                model: CurrentModel::ideal(),
                device: DeviceParams::default(),
                ledger: EnergyLatencyLedger::new(),
            }
        }

        fn query(&mut self, id: &str, hv: &Hypervector) -> Assignment {
            self.engine
                .handle_query(
                    id,
                    0,
                    hv,
                    &mut self.bank,
                    &self.model,
                    &self.device,
                    &mut self.ledger,
                )
                .unwrap()
        }
    }

    #[test]
    fn empty_bucket_founds_cluster_zero() {
        let mut rig = Rig::new(0, 100);
        let a = rig.query("q0", &hv(1, 0));
        assert_eq!(
            a,
            Assignment {
                spectrum_id: "q0".into(),
                bucket: 0,
                cluster: 0,
                outcome: Outcome::NewCluster,
                distance: D as u32,
            }
        );
        assert_eq!(rig.engine.records(0).len(), 1);
        assert_eq!(rig.bank.rows(), 1);
    }

    #[test]
    fn exact_duplicate_matches_at_distance_zero() {
        let mut rig = Rig::new(0, 100);
        let a = hv(2, 0);
        rig.query("q0", &a);
        let got = rig.query("q1", &a);
        assert_eq!(got.outcome, Outcome::Match);
        assert_eq!(got.cluster, 0);
        assert_eq!(got.distance, 0);
    }

    // The decision boundary is exactly τ: distance τ matches, τ+1 founds.
    #[test]
    fn boundary_at_exact_threshold() {
        for threshold in [1u32, 17, 250, 1000] {
            let mut rig = Rig::new(0, threshold);
            let base = hv(3, u64::from(threshold));
            rig.query("seed", &base);

            let at = rig.query("at", &at_distance(&base, threshold, 1));
            assert_eq!(at.outcome, Outcome::Match, "τ={threshold}");
            assert_eq!(at.distance, threshold);

            let over = rig.query("over", &at_distance(&base, threshold + 1, 2));
            assert_eq!(over.outcome, Outcome::NewCluster, "τ={threshold}");
            assert_eq!(over.distance, threshold + 1);
            assert_eq!(over.cluster, 1);
        }
    }

    #[test]
    fn two_distant_queries_take_sequential_ids() {
        let mut rig = Rig::new(0, 10);
        let a = rig.query("q0", &hv(4, 0));
        let b = rig.query("q1", &hv(4, 1));
        assert_eq!((a.cluster, b.cluster), (0, 1));
        assert_eq!(rig.bank.rows(), 2);
    }

    // 100 outliers append 100 rows: write energy 100·D·278 fJ exactly.
    #[test]
    fn outlier_write_energy_closed_form() {
        let mut rig = Rig::new(0, 10);
        for i in 0..100u64 {
            rig.query(&format!("q{i}"), &hv(5, i));
        }
        assert_eq!(rig.ledger.write_fj, 100.0 * 2048.0 * 278.0);
        assert_eq!(rig.ledger.rows_written, 100);
    }

    #[test]
    fn rewrite_period_one_rewrites_every_match() {
        let mut rig = Rig::new(1, 300);
        let base = hv(6, 0);
        rig.query("seed", &base);
        let write_after_seed = rig.ledger.write_fj;
        for i in 0..5u64 {
            rig.query(&format!("m{i}"), &at_distance(&base, 40, i));
        }
        let rewrites = (rig.ledger.write_fj - write_after_seed) / (2048.0 * 278.0);
        assert_eq!(rewrites, 5.0);
    }

    #[test]
    fn sixteen_matches_trigger_exactly_one_rewrite() {
        let mut rig = Rig::new(16, 300);
        let base = hv(7, 0);
        rig.query("seed", &base);
        let write_after_seed = rig.ledger.write_fj;
        for i in 0..16u64 {
            let got = rig.query(&format!("m{i}"), &at_distance(&base, 30, i));
            assert_eq!(got.outcome, Outcome::Match);
        }
        assert_eq!(rig.ledger.write_fj - write_after_seed, 2048.0 * 278.0);
        // consensus invariant holds right after a rewrite
        let r = &rig.engine.records(0)[0];
        assert_eq!(r.pending_updates, 0);
        assert_eq!(r.consensus, r.accumulator.bundle(rig.engine.tie()).unwrap());
        assert_eq!(r.members, 17);
    }

    #[test]
    fn frozen_consensus_never_writes_on_match() {
        let mut rig = Rig::new(0, 300);
        let base = hv(8, 0);
        rig.query("seed", &base);
        let write_after_seed = rig.ledger.write_fj;
        for i in 0..50u64 {
            rig.query(&format!("m{i}"), &at_distance(&base, 25, i));
        }
        assert_eq!(rig.ledger.write_fj, write_after_seed);
        let r = &rig.engine.records(0)[0];
        assert_eq!(r.consensus, base); // frozen at creation
        assert_eq!(r.members, 51);
    }

    #[test]
    fn expansion_never_mutates_existing_ids() {
        let mut rig = Rig::new(0, 10);
        for i in 0..20u64 {
            rig.query(&format!("q{i}"), &hv(9, i));
        }
        let ids: Vec<u64> = rig.engine.records(0).iter().map(|r| r.cluster_id).collect();
        assert_eq!(ids, (0..20).collect::<Vec<u64>>());
        for (row, r) in rig.engine.records(0).iter().enumerate() {
            assert_eq!(rig.bank.cluster_of_row(row), r.cluster_id);
        }
    }
}
