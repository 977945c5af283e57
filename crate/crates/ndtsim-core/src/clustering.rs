//! Affinity-based grouping of NDTs from physical and traffic
//! attributes: pairwise similarity scores combined into one affinity
//! value, then average-linkage agglomerative merging.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, splitmix64};

/// Physical and spectral attributes of one NDT's base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttributes {
    pub id: String,
    /// Planar position in meters.
    pub position: (f64, f64),
    /// Backhaul capacity in Mbps.
    pub backhaul_capacity: f64,
    /// Coverage disk radius in meters.
    pub coverage_radius: f64,
    /// Occurrence distribution over frequency bands; non-negative,
    /// sums to 1.
    pub freq_histogram: Vec<f64>,
}

impl NodeAttributes {
    pub fn validate(&self) -> Result<()> {
        let hist_sum: f64 = self.freq_histogram.iter().sum();
        let ok = self.position.0.is_finite()
            && self.position.1.is_finite()
            && self.backhaul_capacity > 0.0
            && self.backhaul_capacity.is_finite()
            && self.coverage_radius > 0.0
            && self.coverage_radius.is_finite()
            && !self.freq_histogram.is_empty()
            && self.freq_histogram.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (hist_sum - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "node '{}' has invalid attributes",
                self.id
            )))
        }
    }
}

/// Weights of the four affinity terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityWeights {
    #[serde(default = "default_weight")]
    pub distance: f64,
    #[serde(default = "default_weight")]
    pub capacity: f64,
    #[serde(default = "default_weight")]
    pub overlap: f64,
    #[serde(default = "default_weight")]
    pub traffic: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl Default for AffinityWeights {
    fn default() -> Self {
        AffinityWeights {
            distance: 1.0,
            capacity: 1.0,
            overlap: 1.0,
            traffic: 1.0,
        }
    }
}

/// The four pairwise similarity ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSimilarities {
    /// Euclidean distance in meters, floored at 1.
    pub distance: f64,
    /// Smaller/larger backhaul capacity ratio, in (0, 1].
    pub capacity_ratio: f64,
    /// Coverage overlap area over the smaller disk's area, in [0, 1].
    pub overlap: f64,
    /// Cosine similarity of frequency histograms, in [0, 1].
    pub traffic: f64,
}

/// Area of the intersection of two disks at center distance `d`.
fn disk_intersection_area(d: f64, r1: f64, r2: f64) -> f64 {
    let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= large - small {
        return std::f64::consts::PI * small * small;
    }
    let d2 = d * d;
    let a1 = r1 * r1 * (((d2 + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0)).acos();
    let a2 = r2 * r2 * (((d2 + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0)).acos();
    let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    a1 + a2 - 0.5 * k.max(0.0).sqrt()
}

/// Computes the four similarity terms for a pair of nodes.
pub fn pair_similarities(a: &NodeAttributes, b: &NodeAttributes) -> Result<PairSimilarities> {
    a.validate()?;
    b.validate()?;
    let dx = a.position.0 - b.position.0;
    let dy = a.position.1 - b.position.1;
    let distance = (dx * dx + dy * dy).sqrt().max(1.0);

    let capacity_ratio = {
        let (lo, hi) = if a.backhaul_capacity <= b.backhaul_capacity {
            (a.backhaul_capacity, b.backhaul_capacity)
        } else {
            (b.backhaul_capacity, a.backhaul_capacity)
        };
        lo / hi
    };

    let small = a.coverage_radius.min(b.coverage_radius);
    let raw_dist = (dx * dx + dy * dy).sqrt();
    let overlap = disk_intersection_area(raw_dist, a.coverage_radius, b.coverage_radius)
        / (std::f64::consts::PI * small * small);

    let dot: f64 = a
        .freq_histogram
        .iter()
        .zip(&b.freq_histogram)
        .map(|(x, y)| x * y)
        .sum();
    if a.freq_histogram.len() != b.freq_histogram.len() {
        return Err(Error::DimensionMismatch {
            expected: a.freq_histogram.len(),
            got: b.freq_histogram.len(),
        });
    }
    let na: f64 = a.freq_histogram.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.freq_histogram.iter().map(|v| v * v).sum::<f64>().sqrt();
    let traffic = if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    };

    Ok(PairSimilarities {
        distance,
        capacity_ratio,
        overlap: overlap.clamp(0.0, 1.0),
        traffic,
    })
}

/// Combines the four terms: inverse distance plus the three bounded
/// similarities, each weighted. Higher means more alike.
pub fn affinity_from_terms(s: &PairSimilarities, w: &AffinityWeights) -> f64 {
    w.distance / s.distance
        + w.capacity * s.capacity_ratio
        + w.overlap * s.overlap
        + w.traffic * s.traffic
}

pub fn affinity(a: &NodeAttributes, b: &NodeAttributes, w: &AffinityWeights) -> Result<f64> {
    Ok(affinity_from_terms(&pair_similarities(a, b)?, w))
}

/// Full symmetric affinity matrix with zero diagonal.
pub fn affinity_matrix(nodes: &[NodeAttributes], w: &AffinityWeights) -> Result<Vec<Vec<f64>>> {
    let n = nodes.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = affinity(&nodes[i], &nodes[j], w)?;
            m[i][j] = a;
            m[j][i] = a;
        }
    }
    Ok(m)
}

/// Node-to-cluster assignment; cluster indices are dense and ordered
/// by each cluster's smallest member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Node `i`'s total affinity into each cluster, excluding itself.
fn cluster_mass(affinities: &[Vec<f64>], labels: &[usize], i: usize, c: usize) -> Vec<f64> {
    let mut mass = vec![0.0; c];
    for (j, &l) in labels.iter().enumerate() {
        if j != i {
            mass[l] += affinities[i][j];
        }
    }
    mass
}

const REFINE_GAIN_TOL: f64 = 1e-12;

/// Single-node moves and cross-cluster pair swaps, accepted while the
/// mean within-cluster affinity strictly improves. Clusters never
/// empty out; fixed scan order keeps the pass deterministic.
fn refine_labels(affinities: &[Vec<f64>], labels: &mut [usize], c: usize) {
    let n = labels.len();
    let mut sizes = vec![0usize; c];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                sum += affinities[i][j];
            }
        }
    }
    let mut pairs: usize = sizes.iter().map(|s| s * (s - 1) / 2).sum();

    for _pass in 0..16 * n.max(1) {
        let mut moved = false;
        for i in 0..n {
            let from = labels[i];
            if sizes[from] == 1 {
                continue;
            }
            let mass = cluster_mass(affinities, labels, i, c);
            let mut best_to = from;
            let mut best_obj = mean_within_affinity(sum, pairs) + REFINE_GAIN_TOL;
            let mut best_sum = sum;
            let mut best_pairs = pairs;
            for to in 0..c {
                if to == from {
                    continue;
                }
                let new_sum = sum + mass[to] - mass[from];
                let new_pairs = pairs + sizes[to] - (sizes[from] - 1);
                let obj = mean_within_affinity(new_sum, new_pairs);
                if obj > best_obj {
                    best_obj = obj;
                    best_to = to;
                    best_sum = new_sum;
                    best_pairs = new_pairs;
                }
            }
            if best_to != from {
                sizes[from] -= 1;
                sizes[best_to] += 1;
                sum = best_sum;
                pairs = best_pairs;
                labels[i] = best_to;
                moved = true;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (labels[i], labels[j]);
                if a == b {
                    continue;
                }
                let mass_i = cluster_mass(affinities, labels, i, c);
                let mass_j = cluster_mass(affinities, labels, j, c);
                // Sizes are unchanged by a swap, and the (i, j) edge
                // stays cross-cluster.
                let gain = mass_i[b] - mass_i[a] + mass_j[a] - mass_j[b]
                    - 2.0 * affinities[i][j];
                if mean_within_affinity(sum + gain, pairs)
                    > mean_within_affinity(sum, pairs) + REFINE_GAIN_TOL
                {
                    labels[i] = b;
                    labels[j] = a;
                    sum += gain;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

/// Below this many nodes, the best partition is found exhaustively.
const EXACT_SEARCH_LIMIT: usize = 10;

/// The clustering objective: mean affinity over within-cluster pairs.
/// Normalizing by the pair count keeps the optimum from degenerating
/// into one giant cluster (every pair carries a positive baseline).
fn mean_within_affinity(sum: f64, pairs: usize) -> f64 {
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Exhaustive best partition into exactly `c` non-empty clusters by
/// mean within-cluster affinity, over restricted-growth label strings.
fn exact_labels(affinities: &[Vec<f64>], n: usize, c: usize) -> Vec<usize> {
    struct Search<'a> {
        affinities: &'a [Vec<f64>],
        n: usize,
        c: usize,
        labels: Vec<usize>,
        sizes: Vec<usize>,
        best_obj: f64,
        best: Vec<usize>,
    }
    impl Search<'_> {
        fn recurse(&mut self, item: usize, sum: f64) {
            if item == self.n {
                if self.sizes.len() == self.c {
                    let pairs: usize = self.sizes.iter().map(|s| s * (s - 1) / 2).sum();
                    let obj = mean_within_affinity(sum, pairs);
                    if obj > self.best_obj {
                        self.best_obj = obj;
                        self.best = self.labels.clone();
                    }
                }
                return;
            }
            // Every cluster must end non-empty.
            if self.sizes.len() + (self.n - item) < self.c {
                return;
            }
            for g in 0..self.sizes.len() {
                let add: f64 = self
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == g)
                    .map(|(u, _)| self.affinities[item][u])
                    .sum();
                self.labels.push(g);
                self.sizes[g] += 1;
                self.recurse(item + 1, sum + add);
                self.sizes[g] -= 1;
                self.labels.pop();
            }
            if self.sizes.len() < self.c {
                self.labels.push(self.sizes.len());
                self.sizes.push(1);
                self.recurse(item + 1, sum);
                self.sizes.pop();
                self.labels.pop();
            }
        }
    }
    let mut search = Search {
        affinities,
        n,
        c,
        labels: Vec::new(),
        sizes: Vec::new(),
        best_obj: f64::NEG_INFINITY,
        best: Vec::new(),
    };
    search.recurse(0, 0.0);
    search.best
}

/// Renumbers labels densely in order of each cluster's smallest member.
fn canonicalize_labels(labels: &mut [usize], c: usize) {
    let mut remap: Vec<Option<usize>> = vec![None; c];
    let mut next = 0;
    for l in labels.iter_mut() {
        let target = *remap[*l].get_or_insert_with(|| {
            let t = next;
            next += 1;
            t
        });
        *l = target;
    }
}

/// Clusters nodes by affinity into exactly `c` groups. Small sets are
/// partitioned exhaustively; larger ones use average-linkage
/// agglomeration (repeatedly merging the pair of clusters with the
/// highest average cross affinity, ties to the lowest index pair)
/// polished by local reassignment while the total within-cluster
/// affinity strictly improves.
pub fn cluster(affinities: &[Vec<f64>], c: usize) -> Result<ClusterAssignment> {
    let n = affinities.len();
    if c == 0 || c > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {c} outside [1, {n}]"
        )));
    }
    for (i, row) in affinities.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "affinity matrix",
                });
            }
            if (v - affinities[j][i]).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "affinity matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut labels = if n <= EXACT_SEARCH_LIMIT {
        exact_labels(affinities, n, c)
    } else {
        agglomerate_labels(affinities, n, c)
    };
    canonicalize_labels(&mut labels, c);
    Ok(ClusterAssignment {
        labels,
        num_clusters: c,
    })
}

fn agglomerate_labels(affinities: &[Vec<f64>], n: usize, c: usize) -> Vec<usize> {
    // Active clusters stay sorted by smallest member, so "lowest index
    // pair" is well defined after merges.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut link = affinities.to_vec();

    while members.len() > c {
        let m = members.len();
        let (mut bi, mut bj, mut best) = (0, 1, f64::NEG_INFINITY);
        for i in 0..m {
            for j in (i + 1)..m {
                if link[i][j] > best {
                    best = link[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        // Average linkage via Lance-Williams keeps cross-cluster means exact.
        let (si, sj) = (members[bi].len() as f64, members[bj].len() as f64);
        for k in 0..m {
            if k != bi && k != bj {
                let merged = (si * link[bi][k] + sj * link[bj][k]) / (si + sj);
                link[bi][k] = merged;
                link[k][bi] = merged;
            }
        }
        let absorbed = members.remove(bj);
        members[bi].extend(absorbed);
        members[bi].sort_unstable();
        link.remove(bj);
        for row in link.iter_mut() {
            row.remove(bj);
        }
    }

    let mut labels = vec![0; n];
    for (cluster_idx, group) in members.iter().enumerate() {
        for &node in group {
            labels[node] = cluster_idx;
        }
    }
    refine_labels(affinities, &mut labels, c);
    labels
}

/// Loads node attributes from a CSV with columns
/// `id,x,y,capacity,radius` followed by one column per histogram bin.
pub fn load_attributes_csv(path: &Path) -> Result<Vec<NodeAttributes>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::CsvParse {
        line: 0,
        msg: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let expected = ["id", "x", "y", "capacity", "radius"];
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(Error::CsvParse {
                line: 1,
                msg: format!("expected column {i} to be '{name}'"),
            });
        }
    }
    if headers.len() <= expected.len() {
        return Err(Error::CsvParse {
            line: 1,
            msg: "need at least one histogram bin column".into(),
        });
    }

    let mut nodes = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::CsvParse {
            line: 0,
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |idx: usize| -> Result<f64> {
            record
                .get(idx)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::CsvParse {
                    line,
                    msg: format!("bad numeric field {idx}"),
                })
        };
        // Raw bin counts are accepted; they are normalized into a
        // distribution here.
        let mut hist: Vec<f64> = (expected.len()..headers.len())
            .map(parse)
            .collect::<Result<_>>()?;
        let total: f64 = hist.iter().sum();
        if total > 0.0 && hist.iter().all(|v| *v >= 0.0) {
            hist.iter_mut().for_each(|v| *v /= total);
        }
        let node = NodeAttributes {
            id: record.get(0).unwrap_or("").to_string(),
            position: (parse(1)?, parse(2)?),
            backhaul_capacity: parse(3)?,
            coverage_radius: parse(4)?,
            freq_histogram: hist,
        };
        node.validate()?;
        nodes.push(node);
    }
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(nodes)
}

/// Synthesizes plausible node attributes for `n` NDTs, purely from the
/// seed: positions in a 2 km square, mid-range capacities and radii,
/// and normalized random band histograms.
pub fn synth_attributes(n: usize, seed: u64) -> Vec<NodeAttributes> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, splitmix64(i as u64 + 1)));
            let mut hist: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = hist.iter().sum();
            if total > 0.0 {
                hist.iter_mut().for_each(|v| *v /= total);
            }
            NodeAttributes {
                id: format!("ndt{i:05}"),
                position: (rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0)),
                backhaul_capacity: rng.gen_range(50.0..500.0),
                coverage_radius: rng.gen_range(150.0..350.0),
                freq_histogram: hist,
            }
        })
        .collect()
}
