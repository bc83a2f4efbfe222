//! Exceedance sets, the box and proximity cluster rules, region counts and a
//! Poisson goodness-of-fit test for count samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use crate::error::{invalid, Error, Result};
use crate::geometry::{IndexSetGeometry, Region, Tiling};
use crate::lattice::{LatticeBox, Site};
use crate::sim::FieldSample;

/// Strict exceedances `{v ∈ D_n : x_v > threshold}` in lexicographic order.
pub fn exceedance_set(field: &FieldSample, geom: &IndexSetGeometry, threshold: f64) -> Result<Vec<Site>> {
    if !field.window().contains_box(geom.window()) {
        return Err(Error::WindowMismatch(format!(
            "field on {:?} does not cover D_n in {:?}",
            field.window(),
            geom.window()
        )));
    }
    let values = field.values();
    Ok(geom
        .sites()
        .filter(|v| values[field.window().index_of(v).expect("covered")] > threshold)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterRule {
    /// Every J-box containing an exceedance is one cluster.
    Box,
    /// Connected components of `|u_l - w_l| < t_l` for all axes `l`.
    Proximity,
}

/// Partition of an exceedance set into clusters, ordered by smallest
/// lexicographic member; members are sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub rule: ClusterRule,
    pub phi: Vec<Site>,
    pub clusters: Vec<Vec<Site>>,
}

impl ClusterPartition {
    fn from_groups(rule: ClusterRule, mut phi: Vec<Site>, mut clusters: Vec<Vec<Site>>) -> Self {
        phi.sort();
        for c in &mut clusters {
            c.sort();
        }
        clusters.sort_by(|a, b| a[0].cmp(&b[0]));
        ClusterPartition { rule, phi, clusters }
    }

    /// `Γ_n`.
    pub fn gamma(&self) -> usize {
        self.clusters.len()
    }

    /// Checks that the clusters are disjoint, non-empty and cover `phi`.
    pub fn is_valid_partition(&self) -> bool {
        let mut all: Vec<&Site> = self.clusters.iter().flatten().collect();
        if self.clusters.iter().any(|c| c.is_empty()) || all.len() != self.phi.len() {
            return false;
        }
        all.sort();
        all.iter().zip(&self.phi).all(|(a, b)| *a == b) && all.windows(2).all(|w| w[0] != w[1])
    }
}

/// Groups `phi` by the J-box containing each site.
pub fn box_clusters(phi: &[Site], tiling: &Tiling) -> ClusterPartition {
    let mut keyed: Vec<(Site, Site)> = phi.iter().map(|v| (tiling.tile_of(v), v.clone())).collect();
    keyed.sort();
    let mut clusters: Vec<Vec<Site>> = Vec::new();
    let mut last: Option<Site> = None;
    for (z, v) in keyed {
        if last.as_ref() == Some(&z) {
            clusters.last_mut().expect("open cluster").push(v);
        } else {
            clusters.push(vec![v]);
            last = Some(z);
        }
    }
    ClusterPartition::from_groups(ClusterRule::Box, phi.to_vec(), clusters)
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of `phi` under `|u_l - w_l| < t_l` on every axis.
pub fn proximity_clusters(phi: &[Site], t_n: &[i64]) -> Result<ClusterPartition> {
    if t_n.iter().any(|t| *t < 1) {
        return Err(invalid("t_n", "must be positive"));
    }
    if let Some(v) = phi.iter().find(|v| v.len() != t_n.len()) {
        return Err(Error::DimensionMismatch {
            expected: t_n.len(),
            got: v.len(),
        });
    }
    let mut sorted = phi.to_vec();
    sorted.sort();
    let n = sorted.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            // sorted by first coordinate, so the scan can stop early
            if sorted[j][0] - sorted[i][0] >= t_n[0] {
                break;
            }
            if sorted[i]
                .iter()
                .zip(&sorted[j])
                .zip(t_n)
                .all(|((a, b), t)| (a - b).abs() < *t)
            {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<Site>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for (i, v) in sorted.iter().enumerate() {
        let r = uf.find(i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(v.clone());
    }
    Ok(ClusterPartition::from_groups(ClusterRule::Proximity, sorted, groups))
}

/// Counting regions validated against a geometry once.
#[derive(Debug, Clone)]
pub struct PreparedRegions {
    regions: Vec<Region>,
    window: LatticeBox,
    masks: Vec<Vec<bool>>,
}

impl PreparedRegions {
    pub fn new(geom: &IndexSetGeometry, regions: Vec<Region>) -> Result<Self> {
        let masks = regions
            .iter()
            .map(|r| geom.region_mask(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedRegions {
            regions,
            window: geom.window().clone(),
            masks,
        })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn contains(&self, region: usize, v: &[i64]) -> bool {
        self.window
            .index_of(v)
            .is_some_and(|i| self.masks[region][i])
    }
}

/// Number of clusters meeting each region. A cluster meeting several regions
/// counts once in each.
pub fn count_regions(partition: &ClusterPartition, regions: &PreparedRegions) -> Vec<usize> {
    (0..regions.len())
        .map(|r| {
            partition
                .clusters
                .iter()
                .filter(|c| c.iter().any(|v| regions.contains(r, v)))
                .count()
        })
        .collect()
}

/// `N_n(A)` (box rule) and `Ñ_n(A)` (proximity rule) for every region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterCounts {
    pub box_counts: Vec<usize>,
    pub proximity_counts: Vec<usize>,
}

impl ClusterCounts {
    pub fn rule(&self, rule: ClusterRule) -> &[usize] {
        match rule {
            ClusterRule::Box => &self.box_counts,
            ClusterRule::Proximity => &self.proximity_counts,
        }
    }
}

/// Region counts under both rules for an exceedance set.
pub fn cluster_counts(phi: &[Site], geom: &IndexSetGeometry, regions: &PreparedRegions) -> Result<ClusterCounts> {
    let boxes = box_clusters(phi, geom.tiling());
    let prox = proximity_clusters(phi, geom.t_n())?;
    Ok(ClusterCounts {
        box_counts: count_regions(&boxes, regions),
        proximity_counts: count_regions(&prox, regions),
    })
}

/// Dispersion index and chi-square goodness of fit against `Poisson(lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonGof {
    pub n: usize,
    pub lambda: f64,
    pub mean: f64,
    pub variance: f64,
    pub dispersion: f64,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    /// Pooled bins as `(first count, last count or None for the tail)`.
    pub bins: Vec<(u64, Option<u64>)>,
}

impl PoissonGof {
    pub fn passes(&self, dispersion_band: (f64, f64), p_min: f64) -> bool {
        self.dispersion >= dispersion_band.0 && self.dispersion <= dispersion_band.1 && self.p_value > p_min
    }
}

/// Minimum sample size accepted by [`poisson_gof`].
pub const GOF_MIN_SAMPLE: usize = 100;

/// Pools consecutive counts into bins with expected frequency at least 5.
fn pooled_bins(n: usize, lambda: f64) -> Result<Vec<(u64, Option<u64>, f64)>> {
    let law = Poisson::new(lambda).map_err(|e| invalid("lambda", e.to_string()))?;
    let nf = n as f64;
    let mut bins = Vec::new();
    let mut k = 0u64;
    loop {
        let lo = k;
        let mut expected = 0.0;
        while expected < 5.0 {
            expected += nf * law.pmf(k);
            k += 1;
        }
        let tail = nf * law.sf(k - 1);
        if tail < 5.0 {
            bins.push((lo, None, expected + tail));
            break;
        }
        bins.push((lo, Some(k - 1), expected));
    }
    Ok(bins)
}

pub fn poisson_gof(counts: &[u64], lambda: f64) -> Result<PoissonGof> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if counts.len() < GOF_MIN_SAMPLE {
        return Err(Error::SampleTooSmall {
            needed: GOF_MIN_SAMPLE,
            got: counts.len(),
        });
    }
    let n = counts.len();
    let nf = n as f64;
    let mean = counts.iter().sum::<u64>() as f64 / nf;
    let variance = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let dispersion = if mean > 0.0 { variance / mean } else { f64::NAN };
    let bins = pooled_bins(n, lambda)?;
    let mut chi_square = 0.0;
    for &(lo, hi, expected) in &bins {
        let observed = counts
            .iter()
            .filter(|&&c| c >= lo && hi.is_none_or(|h| c <= h))
            .count() as f64;
        chi_square += (observed - expected).powi(2) / expected;
    }
    let df = bins.len().saturating_sub(1);
    let p_value = if df == 0 {
        f64::NAN
    } else {
        ChiSquared::new(df as f64)
            .map_err(|e| invalid("df", e.to_string()))?
            .sf(chi_square)
    };
    Ok(PoissonGof {
        n,
        lambda,
        mean,
        variance,
        dispersion,
        chi_square,
        df,
        p_value,
        bins: bins.into_iter().map(|(lo, hi, _)| (lo, hi)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeC;

    fn line(n: f64, t: i64) -> IndexSetGeometry {
        IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![n], vec![t], None).unwrap()
    }

    #[test]
    fn strict_exceedances() {
        let g = line(5.0, 1);
        let f = FieldSample::from_values(LatticeBox::segment(5), vec![3.0, 0.0, 7.0, 7.0, 1.0]).unwrap();
        assert_eq!(exceedance_set(&f, &g, 2.0).unwrap(), vec![vec![0], vec![2], vec![3]]);
        assert_eq!(exceedance_set(&f, &g, 7.0).unwrap(), Vec::<Site>::new());
        assert_eq!(exceedance_set(&f, &g, -1.0).unwrap().len(), 5);
        let short = FieldSample::from_values(LatticeBox::segment(4), vec![0.0; 4]).unwrap();
        assert!(exceedance_set(&short, &g, 0.0).is_err());
    }

    #[test]
    fn box_and_proximity_rules_on_a_line() {
        let g = line(9.0, 3);
        let phi = vec![vec![0], vec![2], vec![5]];
        let b = box_clusters(&phi, g.tiling());
        assert_eq!(b.clusters, vec![vec![vec![0], vec![2]], vec![vec![5]]]);
        let p = proximity_clusters(&phi, &[3]).unwrap();
        assert_eq!(p.clusters, vec![vec![vec![0], vec![2]], vec![vec![5]]]);
        assert!(b.is_valid_partition() && p.is_valid_partition());
        assert_eq!(box_clusters(&[], g.tiling()).gamma(), 0);
        assert_eq!(proximity_clusters(&[], &[3]).unwrap().gamma(), 0);
    }

    #[test]
    fn proximity_in_the_plane() {
        let phi = vec![vec![5, 5], vec![0, 0], vec![1, 1]];
        let p = proximity_clusters(&phi, &[2, 2]).unwrap();
        assert_eq!(p.clusters, vec![vec![vec![0, 0], vec![1, 1]], vec![vec![5, 5]]]);
        // a chain joins sites that are not adjacent themselves
        let chain = vec![vec![0, 0], vec![1, 1], vec![2, 2]];
        assert_eq!(proximity_clusters(&chain, &[2, 2]).unwrap().gamma(), 1);
    }

    #[test]
    fn straddling_cluster_counts_in_both_regions() {
        let g = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![20.0], vec![10], None).unwrap();
        let regions = PreparedRegions::new(
            &g,
            vec![
                Region::Scaled(ShapeC::axis_box(vec![0.0], vec![0.5]).unwrap()),
                Region::Scaled(ShapeC::axis_box(vec![0.5], vec![1.0]).unwrap()),
                Region::Scaled(ShapeC::unit_box(1).unwrap()),
            ],
        )
        .unwrap();
        let phi = vec![vec![9], vec![10]];
        let c = cluster_counts(&phi, &g, &regions).unwrap();
        assert_eq!(c.proximity_counts, vec![1, 1, 1]);
        assert_eq!(c.box_counts, vec![1, 1, 2]);
    }

    #[test]
    fn gof_rejects_degenerate_and_small_samples() {
        assert!(poisson_gof(&[1; 50], 1.0).is_err());
        assert!(poisson_gof(&[1; 500], 0.0).is_err());
        let g = poisson_gof(&[3; 500], 3.0).unwrap();
        assert_eq!(g.dispersion, 0.0);
        assert!(!g.passes((0.85, 1.15), 0.01));
    }

    #[test]
    fn pooled_bins_have_enough_expected_mass() {
        for &(n, lambda) in &[(2000usize, 0.8f64), (10_000, 3.0), (100, 0.4)] {
            let bins = pooled_bins(n, lambda).unwrap();
            let total: f64 = bins.iter().map(|b| b.2).sum();
            assert!((total - n as f64).abs() < 1e-6 * n as f64);
            assert!(bins.iter().all(|b| b.2 >= 5.0));
            assert!(bins.last().unwrap().1.is_none());
        }
    }
}
