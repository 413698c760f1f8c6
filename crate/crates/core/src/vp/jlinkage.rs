use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Segment2D, INFINITY_EPS};
use crate::error::{Error, Result};

/// Draws `m` vanishing point hypotheses, each the normalized intersection of two
/// distinct segments' lines.
///
/// Segments are visited in id order so the result depends only on the segment
/// set and the seed. Pairs whose lines coincide cannot be normalized and are
/// redrawn, up to a bounded number of attempts.
pub fn sample_vp_hypotheses(segments: &[Segment2D], m: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if segments.len() < 2 {
        return Err(Error::TooFewSegments(segments.len()));
    }
    let mut sorted: Vec<&Segment2D> = segments.iter().collect();
    sorted.sort_by_key(|s| s.id);
    let lines: Vec<Vector3<f64>> = sorted.iter().map(|s| s.line()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(m);
    let max_attempts = 20 * m.max(1);
    let mut attempts = 0;
    while out.len() < m && attempts < max_attempts {
        attempts += 1;
        let i = rng.random_range(0..lines.len());
        let mut j = rng.random_range(0..lines.len() - 1);
        if j >= i {
            j += 1;
        }
        let h = lines[i].cross(&lines[j]);
        let n = h.norm();
        if n < 1e-12 {
            continue;
        }
        out.push(h / n);
    }
    Ok(out)
}

/// Angle in degrees between the segment and the ray from its midpoint to `vp`.
///
/// Vanishing points at infinity use their `(x, y)` direction. The result lies in `[0, 90]`.
pub fn consensus(seg: &Segment2D, vp: &Vector3<f64>) -> Result<f64> {
    let mid = seg.midpoint();
    let toward = if vp.z.abs() < INFINITY_EPS * vp.norm() {
        Vector2::new(vp.x, vp.y)
    } else {
        let d = Vector2::new(vp.x / vp.z, vp.y / vp.z) - mid;
        if d.norm() < 1e-9 {
            return Err(Error::VpAtSegmentMidpoint);
        }
        d
    };
    let dir = seg.end - seg.start;
    let cross = dir.x * toward.y - dir.y * toward.x;
    let dot = dir.dot(&toward);
    Ok(cross.abs().atan2(dot.abs()).to_degrees())
}

/// Fixed-width bitset over hypothesis indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceSet {
    words: Vec<u64>,
}

impl PreferenceSet {
    pub fn empty(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)] }
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect() }
    }

    /// `1 - |A ∩ B| / |A ∪ B|`, and 1 when both sets are empty.
    pub fn jaccard_distance(&self, other: &Self) -> f64 {
        let mut inter = 0u32;
        let mut union = 0u32;
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones();
            union += (a | b).count_ones();
        }
        if union == 0 {
            1.0
        } else {
            1.0 - inter as f64 / union as f64
        }
    }
}

/// Preference set of a segment: hypotheses within `threshold_deg` consensus.
pub fn preference_set(seg: &Segment2D, hypotheses: &[Vector3<f64>], threshold_deg: f64) -> PreferenceSet {
    let mut ps = PreferenceSet::empty(hypotheses.len());
    for (i, h) in hypotheses.iter().enumerate() {
        if matches!(consensus(seg, h), Ok(a) if a < threshold_deg) {
            ps.insert(i);
        }
    }
    ps
}

struct Cluster {
    ids: Vec<u64>,
    ps: PreferenceSet,
}

/// Agglomerative J-Linkage clustering.
///
/// Returns disjoint clusters of segment ids (each sorted ascending), largest
/// first. Clusters below `min_cluster_size`, and segments that prefer no
/// hypothesis, are dropped as outliers. Ties in
/// the merge order are broken by the clusters' smallest segment ids, which
/// keeps the partition independent of input order.
pub fn jlinkage_cluster(
    segments: &[Segment2D],
    hypotheses: &[Vector3<f64>],
    threshold_deg: f64,
    min_cluster_size: usize,
) -> Vec<Vec<u64>> {
    let mut sorted: Vec<&Segment2D> = segments.iter().collect();
    sorted.sort_by_key(|s| s.id);
    let mut clusters: Vec<Cluster> =
        sorted.iter().map(|s| Cluster { ids: vec![s.id], ps: preference_set(s, hypotheses, threshold_deg) }).collect();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            if clusters[i].ps.is_empty() {
                continue;
            }
            for j in (i + 1)..clusters.len() {
                let d = clusters[i].ps.jaccard_distance(&clusters[j].ps);
                if d >= 1.0 {
                    continue;
                }
                // clusters stay ordered by smallest id, so (i, j) order is the id order
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let merged = clusters.remove(j);
        let target = &mut clusters[i];
        target.ps = target.ps.intersection(&merged.ps);
        target.ids.extend(merged.ids);
        target.ids.sort_unstable();
    }

    let mut out: Vec<Vec<u64>> = clusters
        .into_iter()
        .filter(|c| !c.ps.is_empty() && c.ids.len() >= min_cluster_size.max(1))
        .map(|c| c.ids)
        .collect();
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: u64, a: (f64, f64), b: (f64, f64)) -> Segment2D {
        Segment2D::new(id, Vector2::new(a.0, a.1), Vector2::new(b.0, b.1))
    }

    #[test]
    fn parallel_segments_meet_at_infinity() {
        let segs = vec![seg(0, (0.0, 10.0), (50.0, 10.0)), seg(1, (5.0, 30.0), (80.0, 30.0))];
        let h = sample_vp_hypotheses(&segs, 4, 1).unwrap();
        for v in h {
            assert!(v.z.abs() < 1e-12);
            assert!((v.x.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn converging_segments_meet_at_planted_point() {
        let segs = vec![seg(0, (0.0, 0.0), (50.0, 50.0)), seg(1, (100.0, 0.0), (100.0, 40.0))];
        let h = sample_vp_hypotheses(&segs, 3, 2).unwrap();
        let expected = Vector3::new(100.0, 100.0, 1.0).normalize();
        for v in h {
            assert!((v - expected).norm() < 1e-12 || (v + expected).norm() < 1e-12);
        }
    }

    #[test]
    fn hypotheses_are_deterministic() {
        let segs: Vec<_> =
            (0..10).map(|i| seg(i, (i as f64 * 7.0, 3.0), (i as f64 * 5.0 + 40.0, 90.0 + i as f64))).collect();
        assert_eq!(sample_vp_hypotheses(&segs, 50, 9).unwrap(), sample_vp_hypotheses(&segs, 50, 9).unwrap());
        let mut rev = segs.clone();
        rev.reverse();
        assert_eq!(sample_vp_hypotheses(&segs, 50, 9).unwrap(), sample_vp_hypotheses(&rev, 50, 9).unwrap());
    }

    #[test]
    fn too_few_segments() {
        let segs = vec![seg(0, (0.0, 0.0), (1.0, 0.0))];
        assert!(matches!(sample_vp_hypotheses(&segs, 10, 0), Err(Error::TooFewSegments(1))));
    }

    #[test]
    fn consensus_cases() {
        let horizontal = seg(0, (0.0, 0.0), (10.0, 0.0));
        assert_eq!(consensus(&horizontal, &Vector3::new(1.0, 0.0, 0.0)).unwrap(), 0.0);
        let above = Vector3::new(5.0, 1000.0, 1.0).normalize();
        assert!((consensus(&horizontal, &above).unwrap() - 90.0).abs() < 1e-12);

        // segment tilted 2 degrees away from the ray toward (1000, 0)
        let a = 2f64.to_radians();
        let tilted = seg(1, (-10.0 * a.cos(), -10.0 * a.sin()), (10.0 * a.cos(), 10.0 * a.sin()));
        let vp = Vector3::new(1000.0, 0.0, 1.0).normalize();
        assert!((consensus(&tilted, &vp).unwrap() - 2.0).abs() < 1e-6);

        let at_mid = Vector3::new(5.0, 0.0, 1.0);
        assert!(matches!(consensus(&horizontal, &at_mid), Err(Error::VpAtSegmentMidpoint)));
    }

    #[test]
    fn consensus_invariances() {
        let s = seg(0, (12.0, -3.0), (80.0, 40.0));
        let vp = Vector3::new(400.0, 250.0, 0.7);
        let base = consensus(&s, &vp).unwrap();
        assert!((consensus(&s.reversed(), &vp).unwrap() - base).abs() < 1e-12);
        assert!((consensus(&s, &(vp * -3.5)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn single_family_forms_one_cluster() {
        let vp = Vector2::new(300.0, -800.0);
        let segs: Vec<_> = (0..20)
            .map(|i| {
                let a = Vector2::new(20.0 * i as f64, 400.0);
                let d = (vp - a).normalize();
                Segment2D::new(i, a, a + d * 60.0)
            })
            .collect();
        let h = sample_vp_hypotheses(&segs, 100, 4).unwrap();
        let clusters = jlinkage_cluster(&segs, &h, 2.0, 3);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 20);
    }

    #[test]
    fn empty_preference_sets_stay_unclustered() {
        let segs = vec![seg(0, (0.0, 0.0), (10.0, 0.0)), seg(1, (0.0, 5.0), (10.0, 5.0))];
        let far_off = vec![Vector3::new(0.0, 1.0, 0.0)];
        assert!(jlinkage_cluster(&segs, &far_off, 2.0, 1).is_empty());
    }

    #[test]
    fn jaccard() {
        let mut a = PreferenceSet::empty(100);
        let mut b = PreferenceSet::empty(100);
        for i in [1, 2, 3, 70] {
            a.insert(i);
        }
        for i in [2, 3, 70, 99] {
            b.insert(i);
        }
        assert!((a.jaccard_distance(&b) - (1.0 - 3.0 / 5.0)).abs() < 1e-15);
        assert_eq!(PreferenceSet::empty(5).jaccard_distance(&PreferenceSet::empty(5)), 1.0);
        assert_eq!(a.intersection(&b).len(), 3);
    }
}
