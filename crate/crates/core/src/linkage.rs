//! Agglomerative clustering of vectors into a binary hierarchy.
//!
//! Single linkage runs Prim's algorithm on the implicit complete graph
//! (quadratic time, linear memory). Complete and median linkage keep a
//! condensed `f32` matrix of squared Euclidean distances and follow the
//! generic nearest-neighbor scheme with lazily refreshed candidates.
//!
//! Internal node `n + k` is the `k`-th merge; its children are ordered by
//! node id (older cluster first).

use crate::error::{Error, Result};
use crate::hierarchy::{log2_big, Hierarchy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Read;
use std::path::Path;

pub const DEFAULT_MATRIX_CAP: usize = 12_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub data: Vec<f32>,
    pub labels: Option<Vec<String>>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f32>, labels: Option<Vec<String>>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { row: data.len() / dim.max(1), expected: dim, got: data.len() % dim.max(1) });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("non-finite component".into()));
        }
        let n = data.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: l.len() });
            }
        }
        Ok(Self { dim, data, labels })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn sqdist(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum()
    }

    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.data.truncate(n * self.dim);
            if let Some(l) = &mut self.labels {
                l.truncate(n);
            }
        }
    }
}

/// Reads numeric rows. A first row that does not parse as numbers is taken
/// as a header; a header column named `label` holds per-point labels.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut label_col = None;
    let mut dim = None;
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if row_idx == 0 && rec.iter().any(|f| f.trim().parse::<f32>().is_err()) {
            label_col = rec.iter().position(|f| f.trim().eq_ignore_ascii_case("label"));
            continue;
        }
        let mut count = 0;
        for (c, f) in rec.iter().enumerate() {
            if Some(c) == label_col {
                labels.push(f.trim().to_string());
                continue;
            }
            let x: f32 = f.trim().parse().map_err(|_| Error::Parse(format!("row {row_idx}: bad number {f:?}")))?;
            data.push(x);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => return Err(Error::DimensionMismatch { row: row_idx, expected: d, got: count }),
            _ => {}
        }
    }
    let dim = dim.ok_or(Error::TooFewPoints(0))?;
    PointSet::new(dim, data, label_col.map(|_| labels))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Parse("truncated IDX header".into()))?;
    Ok(u32::from_be_bytes(b))
}

/// Reads an IDX image file (magic `0x00000803`), keeping at most `limit` images.
pub fn load_idx_images(path: impl AsRef<Path>, limit: Option<usize>) -> Result<PointSet> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let magic = read_u32(&mut r)?;
    if magic != 0x0000_0803 {
        return Err(Error::Parse(format!("IDX image magic {magic:#010x}, expected 0x00000803")));
    }
    let count = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let mut bytes = vec![0u8; n * rows * cols];
    r.read_exact(&mut bytes).map_err(|_| Error::Parse("truncated IDX image data".into()))?;
    PointSet::new(rows * cols, bytes.into_iter().map(f32::from).collect(), None)
}

/// Reads an IDX label file (magic `0x00000801`).
pub fn load_idx_labels(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Vec<u8>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let magic = read_u32(&mut r)?;
    if magic != 0x0000_0801 {
        return Err(Error::Parse(format!("IDX label magic {magic:#010x}, expected 0x00000801")));
    }
    let count = read_u32(&mut r)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes).map_err(|_| Error::Parse("truncated IDX label data".into()))?;
    Ok(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    /// Weighted centroid (WPGMC).
    Median,
}

impl std::str::FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "median" => Ok(Linkage::Median),
            _ => Err(Error::InvalidParameter(format!("unknown linkage {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dendrogram {
    pub tree: Hierarchy,
    /// Euclidean merge height of internal node `n + k`.
    pub heights: Vec<f64>,
}

/// Merges as (slot a, slot b, squared distance), in merge order.
type Merges = Vec<(usize, usize, f64)>;

pub fn agglomerate(points: &PointSet, linkage: Linkage, matrix_cap: usize) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let merges = match linkage {
        Linkage::Single => single_linkage(points),
        _ if n > matrix_cap => return Err(Error::MemoryBudgetExceeded { n, cap: matrix_cap }),
        Linkage::Complete => generic_linkage(points, |dka, dkb, _dab| dka.max(dkb)),
        Linkage::Median => generic_linkage(points, |dka, dkb, dab| 0.5 * dka + 0.5 * dkb - 0.25 * dab),
    };
    build(n, &merges)
}

fn build(n: usize, merges: &Merges) -> Result<Dendrogram> {
    let mut slot_node: Vec<usize> = (0..n).collect();
    let mut children = vec![None; 2 * n - 1];
    let mut heights = Vec::with_capacity(n - 1);
    for (k, &(a, b, d)) in merges.iter().enumerate() {
        let (x, y) = (slot_node[a], slot_node[b]);
        let id = n + k;
        children[id] = Some((x.min(y), x.max(y)));
        // the merged cluster lives on in slot b
        slot_node[b] = id;
        heights.push(d.max(0.0).sqrt());
    }
    let payloads = (0..n).map(|i| i.to_string()).collect();
    Ok(Dendrogram { tree: Hierarchy::from_children(&children, payloads)?, heights })
}

fn single_linkage(points: &PointSet) -> Merges {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let p = cur;
        let upd: Vec<(usize, f64)> =
            (0..n).into_par_iter().filter(|&j| !in_tree[j]).map(|j| (j, points.sqdist(p, j))).collect();
        for (j, d) in upd {
            if d < best[j] || (d == best[j] && p < from[j]) {
                best[j] = d;
                from[j] = p;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((best[next], from[next].min(next), from[next].max(next)));
        cur = next;
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // union-find over points; a set's root doubles as its cluster slot
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (d, a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        merges.push((ra, rb, d));
        parent[ra] = rb;
    }
    merges
}

struct Condensed {
    n: usize,
    d: Vec<f32>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)] as f64
    }
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v as f32;
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    // min-heap on (distance, slot)
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

fn generic_linkage(points: &PointSet, update: impl Fn(f64, f64, f64) -> f64) -> Merges {
    let n = points.len();
    let mut m = Condensed { n, d: vec![0.0; n * (n - 1) / 2] };
    let rows: Vec<Vec<f32>> =
        (0..n).into_par_iter().map(|i| (i + 1..n).map(|j| points.sqdist(i, j) as f32).collect()).collect();
    for (i, row) in rows.into_iter().enumerate() {
        if !row.is_empty() {
            let start = m.idx(i, i + 1);
            m.d[start..start + row.len()].copy_from_slice(&row);
        }
    }
    let mut active = vec![true; n];
    let mut nn = vec![usize::MAX; n];
    let mut mindist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    let refresh = |x: usize, m: &Condensed, active: &[bool], nn: &mut [usize], mindist: &mut [f64]| {
        nn[x] = usize::MAX;
        mindist[x] = f64::INFINITY;
        for y in x + 1..n {
            if active[y] {
                let d = m.get(x, y);
                if d < mindist[x] {
                    mindist[x] = d;
                    nn[x] = y;
                }
            }
        }
    };
    for x in 0..n - 1 {
        refresh(x, &m, &active, &mut nn, &mut mindist);
        heap.push(Entry(mindist[x], x));
    }
    let mut merges = Vec::with_capacity(n - 1);
    while merges.len() < n - 1 {
        let Entry(d, a) = heap.pop().expect("active pairs remain");
        if !active[a] || d != mindist[a] || nn[a] == usize::MAX {
            continue;
        }
        let b = nn[a];
        let actual = m.get(a, b);
        if !active[b] || actual != d {
            refresh(a, &m, &active, &mut nn, &mut mindist);
            if nn[a] != usize::MAX {
                heap.push(Entry(mindist[a], a));
            }
            continue;
        }
        merges.push((a, b, d));
        active[a] = false;
        for x in 0..n {
            if active[x] && x != b {
                let v = update(m.get(x, a), m.get(x, b), d);
                m.set(x, b, v);
            }
        }
        for x in 0..b {
            if !active[x] {
                continue;
            }
            if nn[x] == a {
                nn[x] = b;
            }
            let dxb = m.get(x, b);
            if dxb < mindist[x] {
                mindist[x] = dxb;
                nn[x] = b;
                heap.push(Entry(dxb, x));
            }
        }
        if b < n - 1 {
            refresh(b, &m, &active, &mut nn, &mut mindist);
            if nn[b] != usize::MAX {
                heap.push(Entry(mindist[b], b));
            }
        }
    }
    merges
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeReport {
    pub n: usize,
    pub avg_depth: f64,
    pub std_depth: f64,
    pub height: usize,
    pub log2_cuts: f64,
    pub cut_count_bits: u64,
    pub sibling_leaf_pairs: usize,
}

pub fn tree_report(h: &Hierarchy) -> TreeReport {
    let s = h.leaf_depth_stats();
    let counts = h.count_cuts();
    TreeReport {
        n: s.n,
        avg_depth: s.avg_depth,
        std_depth: s.std_depth,
        height: s.height,
        log2_cuts: log2_big(counts.total()),
        cut_count_bits: counts.total().bits(),
        sibling_leaf_pairs: h.sibling_leaf_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f32]) -> PointSet {
        PointSet::new(1, xs.to_vec(), None).unwrap()
    }

    #[test]
    fn two_points_any_linkage() {
        for l in [Linkage::Single, Linkage::Complete, Linkage::Median] {
            let d = agglomerate(&line(&[0.0, 5.0]), l, 100).unwrap();
            assert_eq!(d.tree.n_leaves(), 2);
            assert_eq!(d.heights, vec![5.0]);
        }
    }

    #[test]
    fn collinear_single() {
        let d = agglomerate(&line(&[0.0, 1.0, 3.0]), Linkage::Single, 100).unwrap();
        assert_eq!(d.tree.children(3), Some([0, 1]));
        assert_eq!(d.tree.children(4), Some([2, 3]));
        assert_eq!(d.heights, vec![1.0, 2.0]);
    }

    #[test]
    fn matrix_cap() {
        let err = agglomerate(&line(&[0.0, 1.0, 3.0]), Linkage::Complete, 2).unwrap_err();
        assert!(matches!(err, Error::MemoryBudgetExceeded { n: 3, cap: 2 }));
        assert!(agglomerate(&line(&[0.0]), Linkage::Single, 2).is_err());
    }
}
