//! Discrepancy measures on 2-D outlet layouts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ca::OutletPoint;
use crate::lexicon::Topic;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Median of a non-empty sample; the mean of the two middle values for even
/// sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Symmetric Euclidean distance matrix of the points.
pub fn pairwise_distances(points: &[OutletPoint]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x = dist(points[i].coords, points[j].coords);
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    d
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterThreshold {
    /// Median of all pairwise distances.
    #[default]
    Auto,
    #[serde(untagged)]
    Fixed(f64),
}

impl FromStr for ClusterThreshold {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(ClusterThreshold::Auto);
        }
        let x: f64 = s.trim().parse().map_err(|_| format!("cluster threshold must be a number or `auto`, got `{s}`"))?;
        if !x.is_finite() || x < 0.0 {
            return Err(format!("cluster threshold must be finite and non-negative, got {x}"));
        }
        Ok(ClusterThreshold::Fixed(x))
    }
}

impl fmt::Display for ClusterThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterThreshold::Auto => f.write_str("auto"),
            ClusterThreshold::Fixed(x) => write!(f, "{x}"),
        }
    }
}

/// Partition of the points into single-linkage clusters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterAssignment {
    /// Point indices; each cluster ascending, clusters ordered by first member.
    pub clusters: Vec<Vec<usize>>,
    /// Index into `clusters` of the largest cluster.
    pub major: usize,
    pub threshold: f64,
}

impl ClusterAssignment {
    pub fn major_members(&self) -> &[usize] {
        &self.clusters[self.major]
    }

    pub fn cluster_of(&self, point: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&point))
    }
}

/// Single-linkage agglomerative clustering cut at `threshold`: clusters merge
/// while their closest members are within the threshold. The closest pair is
/// merged first; ties go to the lowest cluster indices.
///
/// The largest cluster is the major one; among equally large clusters the one
/// holding the lexicographically smallest outlet name wins.
pub fn find_clusters(points: &[OutletPoint], threshold: ClusterThreshold) -> ClusterAssignment {
    let d = pairwise_distances(points);
    let n = points.len();
    let tau = match threshold {
        ClusterThreshold::Fixed(x) => x,
        ClusterThreshold::Auto => {
            let all: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[i][j]).collect();
            if all.is_empty() {
                0.0
            } else {
                median(&all)
            }
        }
    };

    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let link = |a: &[usize], b: &[usize]| {
        a.iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| d[i][j])
            .fold(f64::INFINITY, f64::min)
    };
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let l = link(&clusters[a], &clusters[b]);
                if best.is_none_or(|(_, _, bl)| l < bl) {
                    best = Some((a, b, l));
                }
            }
        }
        match best {
            Some((a, b, l)) if l <= tau => {
                let merged = clusters.remove(b);
                clusters[a].extend(merged);
            }
            _ => break,
        }
    }
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);

    let smallest_name = |c: &[usize]| c.iter().map(|&i| points[i].outlet.as_str()).min().unwrap_or("");
    let major = (0..clusters.len())
        .min_by(|&a, &b| {
            clusters[b]
                .len()
                .cmp(&clusters[a].len())
                .then_with(|| smallest_name(&clusters[a]).cmp(smallest_name(&clusters[b])))
        })
        .unwrap_or(0);
    if clusters.is_empty() {
        clusters.push(Vec::new());
    }
    ClusterAssignment { clusters, major, threshold: tau }
}

/// Why a per-unit value is missing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Gap {
    /// The unit was degenerate or absent.
    NoEmbedding,
    OutletAbsent,
    /// The major cluster held only the queried outlet.
    EmptyCluster,
}

/// Distance from `outlet` to the mean point of the major cluster, leaving
/// `outlet` itself out of the mean.
pub fn centroid_distance(points: &[OutletPoint], outlet: &str, clusters: &ClusterAssignment) -> Result<f64, Gap> {
    let me = points.iter().position(|p| p.outlet == outlet).ok_or(Gap::OutletAbsent)?;
    let others: Vec<usize> = clusters.major_members().iter().copied().filter(|&i| i != me).collect();
    if others.is_empty() {
        return Err(Gap::EmptyCluster);
    }
    let k = others.len() as f64;
    let cx = others.iter().map(|&i| points[i].coords[0]).sum::<f64>() / k;
    let cy = others.iter().map(|&i| points[i].coords[1]).sum::<f64>() / k;
    Ok(dist(points[me].coords, [cx, cy]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MadVariant {
    /// Every embedded outlet.
    #[default]
    All,
    /// Only the major cluster's members.
    Major,
}

impl FromStr for MadVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(MadVariant::All),
            "major" => Ok(MadVariant::Major),
            other => Err(format!("unknown MAD variant `{other}` (expected all or major)")),
        }
    }
}

/// Center the MAD is measured from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MadCenter {
    /// Per-axis median. Invariant under translation and axis reflections.
    #[default]
    ComponentWise,
    /// Geometric (spatial) median. Also invariant under rotation.
    Spatial,
}

impl FromStr for MadCenter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "componentwise" => Ok(MadCenter::ComponentWise),
            "spatial" => Ok(MadCenter::Spatial),
            other => Err(format!("unknown MAD center `{other}` (expected componentwise or spatial)")),
        }
    }
}

const SPATIAL_MEDIAN_MAX_ITER: usize = 100_000;

/// Geometric median by the Vardi–Zhang variant of Weiszfeld's iteration,
/// which stays well defined when the iterate lands on a data point.
pub fn spatial_median(points: &[[f64; 2]]) -> [f64; 2] {
    assert!(!points.is_empty(), "spatial median of an empty sample");
    let k = points.len() as f64;
    let mut y = [points.iter().map(|p| p[0]).sum::<f64>() / k, points.iter().map(|p| p[1]).sum::<f64>() / k];
    let scale = points.iter().map(|p| dist(*p, y)).fold(0.0, f64::max);
    if scale == 0.0 {
        return y;
    }
    for _ in 0..SPATIAL_MEDIAN_MAX_ITER {
        let mut coincident = 0.0;
        let (mut wsum, mut tx, mut ty, mut rx, mut ry) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in points {
            let d = dist(*p, y);
            if d <= 1e-15 * scale {
                coincident += 1.0;
                continue;
            }
            let w = 1.0 / d;
            wsum += w;
            tx += w * p[0];
            ty += w * p[1];
            rx += w * (p[0] - y[0]);
            ry += w * (p[1] - y[1]);
        }
        if wsum == 0.0 {
            return y;
        }
        let t = [tx / wsum, ty / wsum];
        let r = rx.hypot(ry);
        let gamma = if r == 0.0 { 1.0 } else { (coincident / r).min(1.0) };
        let next = [(1.0 - gamma) * t[0] + gamma * y[0], (1.0 - gamma) * t[1] + gamma * y[1]];
        let step = dist(next, y);
        y = next;
        if step <= 1e-15 * scale {
            break;
        }
    }
    y
}

/// Median distance of the points to their center.
pub fn radial_mad(points: &[[f64; 2]], center: MadCenter) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let m = match center {
        MadCenter::ComponentWise => {
            let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
            [median(&xs), median(&ys)]
        }
        MadCenter::Spatial => spatial_median(points),
    };
    let ds: Vec<f64> = points.iter().map(|p| dist(*p, m)).collect();
    median(&ds)
}

/// Which points enter the dispersion and what they are measured from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MadOptions {
    pub variant: MadVariant,
    pub center: MadCenter,
}

/// Robust 2-D dispersion of the layout: the median distance from each point
/// to the center of the selected points.
pub fn cluster_mad(points: &[OutletPoint], clusters: &ClusterAssignment, opts: MadOptions) -> f64 {
    let pts: Vec<[f64; 2]> = match opts.variant {
        MadVariant::All => points.iter().map(|p| p.coords).collect(),
        MadVariant::Major => clusters.major_members().iter().map(|&i| points[i].coords).collect(),
    };
    radial_mad(&pts, opts.center)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SeriesKind {
    CentroidDistance(String),
    ClusterMad,
}

impl SeriesKind {
    pub fn label(&self) -> &'static str {
        match self {
            SeriesKind::CentroidDistance(_) => "centroid",
            SeriesKind::ClusterMad => "mad",
        }
    }

    pub fn outlet(&self) -> Option<&str> {
        match self {
            SeriesKind::CentroidDistance(o) => Some(o),
            SeriesKind::ClusterMad => None,
        }
    }
}

/// One value per year; `None` marks a gap.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscrepancySeries {
    pub topic: Topic,
    pub kind: SeriesKind,
    pub values: BTreeMap<i32, Option<f64>>,
}

impl DiscrepancySeries {
    pub fn has_values(&self) -> bool {
        self.values.values().any(Option::is_some)
    }

    /// `topic,kind,outlet_or_blank,year,value_or_NA` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("topic,kind,outlet_or_blank,year,value_or_NA\n");
        out.push_str(&self.csv_rows());
        out
    }

    pub fn csv_rows(&self) -> String {
        let outlet = self.kind.outlet().unwrap_or("");
        self.values
            .iter()
            .map(|(y, v)| {
                let v = v.map_or_else(|| "NA".to_string(), |x| x.to_string());
                format!("{},{},{},{},{}\n", self.topic, self.kind.label(), outlet, y, v)
            })
            .collect()
    }

    /// Parses rows written by [`Self::to_csv`]; rows are grouped into one
    /// series per (topic, kind, outlet).
    pub fn from_csv(text: &str) -> Result<Vec<Self>, String> {
        let mut by_key: BTreeMap<(Topic, SeriesKind), BTreeMap<i32, Option<f64>>> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| format!("series line {}: {what}", idx + 1);
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let topic: Topic = f[0].parse().map_err(|e: String| bad(&e))?;
            let kind = match (f[1], f[2]) {
                ("mad", "") => SeriesKind::ClusterMad,
                ("centroid", o) if !o.is_empty() => SeriesKind::CentroidDistance(o.to_string()),
                _ => return Err(bad("unknown kind/outlet")),
            };
            let year: i32 = f[3].parse().map_err(|_| bad("bad year"))?;
            let value = match f[4] {
                "NA" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad("bad value"))?),
            };
            by_key.entry((topic, kind)).or_default().insert(year, value);
        }
        Ok(by_key.into_iter().map(|((topic, kind), values)| DiscrepancySeries { topic, kind, values }).collect())
    }
}

/// Per-year layouts for one topic; `None` marks a degenerate or missing unit.
pub type YearLayouts = BTreeMap<i32, Option<Vec<OutletPoint>>>;

/// Applies the series metric year by year. Missing units become gaps.
pub fn build_series(topic: Topic, layouts: &YearLayouts, kind: SeriesKind, threshold: ClusterThreshold, mad: MadOptions) -> DiscrepancySeries {
    let values = layouts
        .iter()
        .map(|(&year, pts)| {
            let value = pts.as_ref().and_then(|pts| {
                let clusters = find_clusters(pts, threshold);
                match &kind {
                    SeriesKind::ClusterMad => Some(cluster_mad(pts, &clusters, mad)),
                    SeriesKind::CentroidDistance(o) => centroid_distance(pts, o, &clusters).ok(),
                }
            });
            (year, value)
        })
        .collect();
    DiscrepancySeries { topic, kind, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<OutletPoint> {
        coords.iter().enumerate().map(|(i, &(x, y))| OutletPoint::new(format!("o{i}"), x, y)).collect()
    }

    /// Connected components of the graph with an edge wherever d ≤ τ.
    fn components_oracle(points: &[OutletPoint], tau: f64) -> Vec<Vec<usize>> {
        let d = pairwise_distances(points);
        let n = points.len();
        let mut label: Vec<Option<usize>> = vec![None; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if label[s].is_some() {
                continue;
            }
            let id = comps.len();
            let mut stack = vec![s];
            let mut members = Vec::new();
            label[s] = Some(id);
            while let Some(v) = stack.pop() {
                members.push(v);
                for w in 0..n {
                    if label[w].is_none() && d[v][w] <= tau {
                        label[w] = Some(id);
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    #[test]
    fn distances_examples() {
        let d = pairwise_distances(&pts(&[(0.0, 0.0), (3.0, 4.0)]));
        assert_eq!(d, vec![vec![0.0, 5.0], vec![5.0, 0.0]]);
        let d = pairwise_distances(&pts(&[(1.0, 1.0); 3]));
        assert!(d.iter().flatten().all(|x| *x == 0.0));
        let d = pairwise_distances(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 2.0)]));
        assert_eq!(d[0][1], 1.0);
        assert_eq!(d[1][2], 2.0);
        assert!((d[0][2] - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_form_one_cluster() {
        let c = find_clusters(&pts(&[(2.0, 2.0); 5]), ClusterThreshold::Auto);
        assert_eq!(c.clusters, vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(c.major, 0);
    }

    #[test]
    fn planted_major_cluster() {
        let mut coords: Vec<(f64, f64)> = (0..6).map(|i| (0.01 * i as f64, 0.02 * (i % 2) as f64)).collect();
        coords.extend([(10.0, 0.0), (0.0, 10.0), (-10.0, -10.0)]);
        let c = find_clusters(&pts(&coords), ClusterThreshold::Fixed(1.0));
        assert_eq!(c.major_members(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(c.clusters.len(), 4);
    }

    #[test]
    fn tiny_threshold_gives_singletons() {
        let mut p = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        p[0].outlet = "zeta".into();
        p[1].outlet = "alpha".into();
        p[2].outlet = "mid".into();
        let c = find_clusters(&p, ClusterThreshold::Fixed(0.5));
        assert_eq!(c.clusters, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(c.major_members(), &[1]);
    }

    #[test]
    fn centroid_examples() {
        let p = pts(&[(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)]);
        let c = ClusterAssignment { clusters: vec![vec![0, 1], vec![2]], major: 0, threshold: 2.0 };
        assert_eq!(centroid_distance(&p, "o2", &c), Ok(3.0));

        let p = pts(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]);
        let c = ClusterAssignment { clusters: vec![vec![0, 1, 2]], major: 0, threshold: 3.0 };
        assert!((centroid_distance(&p, "o0", &c).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let p = pts(&[(1.0, 1.0), (0.0, 0.0), (2.0, 2.0)]);
        let c = ClusterAssignment { clusters: vec![vec![1, 2], vec![0]], major: 0, threshold: 0.0 };
        assert_eq!(centroid_distance(&p, "o0", &c), Ok(0.0));

        assert_eq!(centroid_distance(&p, "nope", &c), Err(Gap::OutletAbsent));
        let c = ClusterAssignment { clusters: vec![vec![0], vec![1], vec![2]], major: 0, threshold: 0.0 };
        assert_eq!(centroid_distance(&p, "o0", &c), Err(Gap::EmptyCluster));
    }

    #[test]
    fn mad_examples() {
        let one = |p: &[OutletPoint]| find_clusters(p, ClusterThreshold::Auto);
        let p = pts(&[(3.0, 3.0); 4]);
        assert_eq!(cluster_mad(&p, &one(&p), MadOptions::default()), 0.0);
        let p = pts(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)]);
        assert_eq!(cluster_mad(&p, &one(&p), MadOptions::default()), 2.0);
    }

    #[test]
    fn mad_robust_to_outlier_vs_spread() {
        let tight = [(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (-0.1, 0.0), (0.0, -0.1), (0.07, 0.07)];
        let base = pts(&tight);
        let mut outlier = tight.to_vec();
        outlier.push((100.0, 100.0));
        let spread: Vec<(f64, f64)> = tight
            .iter()
            .map(|&(x, y)| {
                let r = x.hypot(y);
                if r == 0.0 {
                    (1.0, 0.0)
                } else {
                    (x + x / r, y + y / r)
                }
            })
            .collect();
        let m = |p: &[OutletPoint]| cluster_mad(p, &find_clusters(p, ClusterThreshold::Auto), MadOptions::default());
        let m0 = m(&base);
        let d_out = (m(&pts(&outlier)) - m0).abs();
        let d_spread = (m(&pts(&spread)) - m0).abs();
        assert!(d_out < d_spread, "{d_out} vs {d_spread}");
    }

    #[test]
    fn spatial_median_examples() {
        let cross = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [-2.0, 0.0], [0.0, -2.0]];
        let m = spatial_median(&cross);
        assert!(m[0].abs() < 1e-12 && m[1].abs() < 1e-12);
        assert_eq!(radial_mad(&cross, MadCenter::Spatial), 2.0);
        // Fermat point of a triangle with all angles < 120°
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        let m = spatial_median(&tri);
        assert!((m[0] - 0.5).abs() < 1e-12 && (m[1] - 3f64.sqrt() / 6.0).abs() < 1e-12);
        // the axis-aligned center is not rotation invariant
        let l = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let rotated: Vec<[f64; 2]> = l.iter().map(|p| [r * (p[0] - p[1]), r * (p[0] + p[1])]).collect();
        assert_eq!(radial_mad(&l, MadCenter::ComponentWise), 2.0);
        assert!((radial_mad(&rotated, MadCenter::ComponentWise) - 2f64.sqrt()).abs() < 1e-12);
        let a = radial_mad(&l, MadCenter::Spatial);
        assert!((a - radial_mad(&rotated, MadCenter::Spatial)).abs() < 1e-10);
    }

    #[test]
    fn farthest_point_pushed_out_leaves_mad_unchanged() {
        let base = [[0.0, 0.0], [0.3, 0.1], [-0.2, 0.2], [0.1, -0.3], [-0.1, -0.1], [2.0, 1.5]];
        for center in [MadCenter::ComponentWise, MadCenter::Spatial] {
            let m = match center {
                MadCenter::Spatial => spatial_median(&base),
                MadCenter::ComponentWise => {
                    let xs: Vec<f64> = base.iter().map(|p| p[0]).collect();
                    let ys: Vec<f64> = base.iter().map(|p| p[1]).collect();
                    [median(&xs), median(&ys)]
                }
            };
            let mut pushed = base;
            pushed[5] = [m[0] + 2.0 * (base[5][0] - m[0]), m[1] + 2.0 * (base[5][1] - m[1])];
            assert!((radial_mad(&base, center) - radial_mad(&pushed, center)).abs() < 1e-12, "{center:?}");
        }
    }

    #[test]
    fn major_variant_ignores_outliers() {
        let p = pts(&[(0.0, 0.0), (0.2, 0.0), (0.0, 0.2), (9.0, 9.0), (-9.0, 9.0), (9.0, -9.0)]);
        let c = find_clusters(&p, ClusterThreshold::Fixed(1.0));
        let all = cluster_mad(&p, &c, MadOptions::default());
        let major = cluster_mad(&p, &c, MadOptions { variant: MadVariant::Major, ..Default::default() });
        assert!(major < all);
        assert!((major - 0.2).abs() < 1e-12);
    }

    #[test]
    fn series_examples() {
        let mut layouts = YearLayouts::new();
        layouts.insert(2014, None);
        layouts.insert(2015, None);
        let s = build_series(Topic::SocialIssue, &layouts, SeriesKind::ClusterMad, ClusterThreshold::Auto, MadOptions::default());
        assert_eq!(s.values.len(), 2);
        assert!(!s.has_values());
        assert_eq!(s.to_csv(), "topic,kind,outlet_or_blank,year,value_or_NA\nsocial,mad,,2014,NA\nsocial,mad,,2015,NA\n");

        let mut layouts = YearLayouts::new();
        for (i, year) in (2014..2018).enumerate() {
            let r = 4.0 - i as f64;
            layouts.insert(year, Some(pts(&[(r, 0.0), (0.0, r), (-r, 0.0), (0.0, -r), (0.0, 0.0)])));
        }
        let s = build_series(Topic::SocialIssue, &layouts, SeriesKind::ClusterMad, ClusterThreshold::Auto, MadOptions::default());
        let v: Vec<f64> = s.values.values().map(|x| x.unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");

        let single: YearLayouts = [(2020, Some(pts(&[(0.0, 0.0), (1.0, 0.0)])))].into_iter().collect();
        let s = build_series(Topic::SocialIssue, &single, SeriesKind::CentroidDistance("o0".into()), ClusterThreshold::Auto, MadOptions::default());
        assert_eq!(s.values, [(2020, Some(1.0))].into_iter().collect());

        let parsed = DiscrepancySeries::from_csv(&s.to_csv()).unwrap();
        assert_eq!(parsed, vec![s]);
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("auto".parse::<ClusterThreshold>(), Ok(ClusterThreshold::Auto));
        assert_eq!("0.5".parse::<ClusterThreshold>(), Ok(ClusterThreshold::Fixed(0.5)));
        assert!("-1".parse::<ClusterThreshold>().is_err());
    }

    fn layout() -> impl Strategy<Value = Vec<OutletPoint>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..=9).prop_map(|c| pts(&c))
    }

    proptest! {
        #[test]
        fn single_linkage_matches_components(p in layout(), tau in 0.0..6.0f64) {
            let c = find_clusters(&p, ClusterThreshold::Fixed(tau));
            let mut oracle = components_oracle(&p, tau);
            oracle.sort_by_key(|c| c[0]);
            prop_assert_eq!(c.clusters.clone(), oracle);
            let sizes: Vec<usize> = c.clusters.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().all(|&s| s <= sizes[c.major]));
        }

        #[test]
        fn threshold_extremes(p in layout()) {
            let d = pairwise_distances(&p);
            let max = d.iter().flatten().copied().fold(0.0, f64::max);
            prop_assert_eq!(find_clusters(&p, ClusterThreshold::Fixed(max)).clusters.len(), 1);
            let min_pos = d.iter().flatten().copied().filter(|x| *x > 0.0).fold(f64::INFINITY, f64::min);
            if min_pos.is_finite() && p.iter().enumerate().all(|(i, a)| p[i+1..].iter().all(|b| a.coords != b.coords)) {
                prop_assert_eq!(find_clusters(&p, ClusterThreshold::Fixed(min_pos * 0.5)).clusters.len(), p.len());
            }
        }

        #[test]
        fn rigid_motion_invariance(p in layout(), angle in 0.0..std::f64::consts::TAU, dx in -10.0..10.0f64, dy in -10.0..10.0f64) {
            let (s, c) = angle.sin_cos();
            let moved: Vec<OutletPoint> = p
                .iter()
                .map(|q| OutletPoint::new(q.outlet.clone(), c * q.coords[0] - s * q.coords[1] + dx, s * q.coords[0] + c * q.coords[1] + dy))
                .collect();
            let (d0, d1) = (pairwise_distances(&p), pairwise_distances(&moved));
            for (a, b) in d0.iter().flatten().zip(d1.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let fixed = find_clusters(&p, ClusterThreshold::Fixed(2.0));
            let fixed_moved = ClusterAssignment { ..fixed.clone() };
            let c0 = centroid_distance(&p, "o0", &fixed);
            let c1 = centroid_distance(&moved, "o0", &fixed_moved);
            match (c0, c1) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-10),
                (a, b) => prop_assert_eq!(a, b),
            }
            let spatial = MadOptions { center: MadCenter::Spatial, ..Default::default() };
            let (a, b) = (cluster_mad(&p, &fixed, spatial), cluster_mad(&moved, &fixed_moved, spatial));
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);

            // the per-axis median follows translations, reflections and quarter turns
            let quarter: Vec<OutletPoint> = p
                .iter()
                .map(|q| OutletPoint::new(q.outlet.clone(), -q.coords[1] + dx, q.coords[0] + dy))
                .collect();
            let m0 = cluster_mad(&p, &fixed, MadOptions::default());
            prop_assert!((m0 - cluster_mad(&quarter, &fixed, MadOptions::default())).abs() < 1e-10);
        }

        #[test]
        fn mad_invariant_to_relabeling(p in layout(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = p.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = cluster_mad(&p, &find_clusters(&p, ClusterThreshold::Auto), MadOptions::default());
            let b = cluster_mad(&shuffled, &find_clusters(&shuffled, ClusterThreshold::Auto), MadOptions::default());
            prop_assert_eq!(a, b);
        }
    }
}
