//! Graph storage, ingestion, synthetic benchmarks, degree bounding and splits.
//!
//! Edges are kept in compressed sparse column form: for every target node the
//! sorted list of its in-neighbours. Aggregation walks exactly these lists, so
//! a neighbourhood sum is one sequential pass over the storage.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};

/// A directed, unweighted, attributed graph.
#[derive(Debug)]
pub struct Graph {
    num_nodes: usize,
    /// `col_ptr[i]..col_ptr[i + 1]` indexes the in-neighbours of node `i`.
    col_ptr: Vec<usize>,
    sources: Vec<usize>,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    adjacency_reads: AtomicUsize,
}

/// Read-only view of the in-edge lists, handed out by [`Graph::adjacency`].
#[derive(Debug, Clone, Copy)]
pub struct Adjacency<'a> {
    col_ptr: &'a [usize],
    sources: &'a [usize],
}

impl<'a> Adjacency<'a> {
    pub fn num_nodes(&self) -> usize {
        self.col_ptr.len() - 1
    }

    /// Sources `j` of all edges `j -> target`, ascending.
    pub fn in_neighbors(&self, target: usize) -> &'a [usize] {
        &self.sources[self.col_ptr[target]..self.col_ptr[target + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + 'a {
        let col_ptr = self.col_ptr;
        let sources = self.sources;
        (0..col_ptr.len() - 1).flat_map(move |dst| {
            sources[col_ptr[dst]..col_ptr[dst + 1]]
                .iter()
                .map(move |&src| (src, dst))
        })
    }
}

impl Graph {
    /// Builds a graph, deduplicating edges and validating every index.
    pub fn new(
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let num_nodes = features.nrows();
        if labels.len() != num_nodes {
            return Err(Error::Validation(format!(
                "{} labels for {} feature rows",
                labels.len(),
                num_nodes
            )));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {label} of node {node} is not below the class count {num_classes}"
            )));
        }

        // Sort by (dst, src) so each column is contiguous and ascending.
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (src, dst) in edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge ({src}, {dst}) has an endpoint outside [0, {num_nodes})"
                )));
            }
            pairs.push((dst, src));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut col_ptr = vec![0usize; num_nodes + 1];
        for &(dst, _) in &pairs {
            col_ptr[dst + 1] += 1;
        }
        for i in 0..num_nodes {
            col_ptr[i + 1] += col_ptr[i];
        }
        let sources = pairs.into_iter().map(|(_, src)| src).collect();

        Ok(Self {
            num_nodes,
            col_ptr,
            sources,
            features,
            labels,
            num_classes,
            adjacency_reads: AtomicUsize::new(0),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Access to the edge structure. Every call is counted, which is how
    /// training runs prove how often the private adjacency was queried.
    pub fn adjacency(&self) -> Adjacency<'_> {
        self.adjacency_reads.fetch_add(1, Ordering::Relaxed);
        Adjacency {
            col_ptr: &self.col_ptr,
            sources: &self.sources,
        }
    }

    /// Number of [`Graph::adjacency`] calls so far.
    pub fn adjacency_reads(&self) -> usize {
        self.adjacency_reads.load(Ordering::Relaxed)
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.col_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for &src in &self.sources {
            deg[src] += 1;
        }
        deg
    }

    /// Writes the graph in the text formats read by [`load_graph`].
    pub fn write_files(&self, edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<()> {
        let write = |path: &Path, body: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            body(&mut out)
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(path, e))
        };

        write(edge_path, &|out| {
            let adj = Adjacency {
                col_ptr: &self.col_ptr,
                sources: &self.sources,
            };
            let mut edges: Vec<_> = adj.edges().collect();
            edges.sort_unstable();
            for (src, dst) in edges {
                writeln!(out, "{src}\t{dst}")?;
            }
            Ok(())
        })?;
        write(feature_path, &|out| {
            for row in self.features.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(","))?;
            }
            Ok(())
        })?;
        write(label_path, &|out| {
            for label in &self.labels {
                writeln!(out, "{label}")?;
            }
            Ok(())
        })
    }
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        Self {
            num_nodes: self.num_nodes,
            col_ptr: self.col_ptr.clone(),
            sources: self.sources.clone(),
            features: self.features.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            adjacency_reads: AtomicUsize::new(self.adjacency_reads()),
        }
    }
}

/// Disjoint train/validation/test masks over the nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl SplitMasks {
    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.mask(split)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (count(&self.train), count(&self.val), count(&self.test))
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.train.len() != num_nodes || self.val.len() != num_nodes || self.test.len() != num_nodes {
            return Err(Error::Validation(format!("split masks must cover {num_nodes} nodes")));
        }
        for i in 0..num_nodes {
            let hits = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if hits > 1 {
                return Err(Error::Validation(format!("node {i} belongs to more than one split")));
            }
        }
        if !self.train.iter().any(|&b| b) {
            return Err(Error::Validation("training split is empty".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.75, 0.10, 0.15);

/// Randomly partitions the nodes into train/val/test.
///
/// Sizes follow largest-remainder rounding of `num_nodes * ratio`: every
/// split first gets the floor of its quota, and the leftover nodes go to the
/// splits with the largest fractional parts (ties favour train, then val).
pub fn split_nodes(num_nodes: usize, ratios: (f64, f64, f64), seed: u64) -> SplitMasks {
    let sizes = split_sizes(num_nodes, ratios);
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut keyed_rng(seed, Domain::Split, 0));

    let mut masks = SplitMasks {
        train: vec![false; num_nodes],
        val: vec![false; num_nodes],
        test: vec![false; num_nodes],
    };
    for (pos, &node) in order.iter().enumerate() {
        if pos < sizes[0] {
            masks.train[node] = true;
        } else if pos < sizes[0] + sizes[1] {
            masks.val[node] = true;
        } else {
            masks.test[node] = true;
        }
    }
    masks
}

fn split_sizes(num_nodes: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let quotas = [ratios.0, ratios.1, ratios.2].map(|r| {
        // Round away representation noise such as 100 * 0.15 = 15.000000000000002.
        (num_nodes as f64 * r * 1e9).round() / 1e9
    });
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut leftover = num_nodes.saturating_sub(sizes.iter().sum());
    let mut by_remainder = [0usize, 1, 2];
    by_remainder.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    sizes
}

/// Parameters of a directed stochastic block model with Gaussian class features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_dim: usize,
    /// Norm of each class mean; features are `mean[class] + N(0, I)`.
    pub feature_signal: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.num_classes == 0 {
            return Err(Error::Validation("SBM needs at least one node and one class".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Validation("SBM feature dimension must be positive".into()));
        }
        for (name, p) in [("intra_p", self.intra_p), ("inter_p", self.inter_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.feature_signal >= 0.0) {
            return Err(Error::Validation("feature_signal must be non-negative".into()));
        }
        Ok(())
    }
}

/// Samples a directed SBM graph and a default 75/10/15 split.
///
/// Every ordered pair `(i, j)`, `i != j`, becomes an edge independently with
/// probability `intra_p` when both nodes share a class and `inter_p` otherwise.
pub fn generate_sbm(spec: &SbmSpec) -> Result<(Graph, SplitMasks)> {
    spec.validate()?;
    let n = spec.num_nodes;
    let mut rng = keyed_rng(spec.seed, Domain::Sbm, 0);

    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.num_classes)).collect();

    // Class means: random directions scaled to the requested signal.
    let mut means = Array2::<f64>::zeros((spec.num_classes, spec.feature_dim));
    for mut row in means.rows_mut() {
        let dir: Array1<f64> = (0..spec.feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.dot(&dir).sqrt().max(f64::MIN_POSITIVE);
        row.assign(&(dir * (spec.feature_signal / norm)));
    }
    let mut features = Array2::<f64>::zeros((n, spec.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = means[[labels[i], c]] + z;
        }
    }

    let mut edges = Vec::new();
    if spec.intra_p > 0.0 || spec.inter_p > 0.0 {
        for src in 0..n {
            for dst in 0..n {
                if src == dst {
                    continue;
                }
                let p = if labels[src] == labels[dst] { spec.intra_p } else { spec.inter_p };
                if rng.random::<f64>() < p {
                    edges.push((src, dst));
                }
            }
        }
    }

    let graph = Graph::new(edges, features, labels, spec.num_classes)?;
    let masks = split_nodes(n, DEFAULT_SPLIT, spec.seed);
    Ok((graph, masks))
}

/// Keeps at most `cap` outgoing edges per node, chosen uniformly at random.
pub fn bound_degree(graph: &Graph, cap: usize, seed: u64) -> Result<Graph> {
    if cap == 0 {
        return Err(Error::Validation("degree cap must be at least 1".into()));
    }
    let mut out_lists: Vec<Vec<usize>> = vec![Vec::new(); graph.num_nodes()];
    for (src, dst) in graph.adjacency().edges() {
        out_lists[src].push(dst);
    }
    let mut kept = Vec::new();
    for (src, targets) in out_lists.iter_mut().enumerate() {
        if targets.len() > cap {
            // Fisher-Yates prefix: the first `cap` slots become a uniform sample.
            let mut rng = keyed_rng(seed, Domain::DegreeBound, src as u64);
            for i in 0..cap {
                let j = rng.random_range(i..targets.len());
                targets.swap(i, j);
            }
            targets.truncate(cap);
        }
        kept.extend(targets.iter().map(|&dst| (src, dst)));
    }
    Graph::new(kept, graph.features.clone(), graph.labels.clone(), graph.num_classes)
}

/// Reads a graph from an edge list, a feature CSV and a label file.
///
/// The node count is the number of feature rows; the class count is one
/// more than the largest label.
pub fn load_graph(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<Graph> {
    let read = |path: &Path| fs::read_to_string(path).map_err(|e| Error::io(path, e));
    let parse_err = |path: &Path, line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in read(feature_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| field.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(feature_path, idx + 1, format!("bad feature value: {e}")))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    feature_path,
                    idx + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let num_nodes = rows.len();
    let dim = rows.first().map_or(0, Vec::len);
    let features = Array2::from_shape_vec((num_nodes, dim), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Shape(e.to_string()))?;

    let mut labels = Vec::with_capacity(num_nodes);
    for (idx, line) in read(label_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label = line
            .parse::<usize>()
            .map_err(|e| parse_err(label_path, idx + 1, format!("bad label: {e}")))?;
        labels.push(label);
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);

    let mut edges = Vec::new();
    for (idx, line) in read(edge_path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut endpoint = |what: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| parse_err(edge_path, idx + 1, format!("missing {what} index")))?
                .parse::<usize>()
                .map_err(|e| parse_err(edge_path, idx + 1, format!("bad {what} index: {e}")))
        };
        let src = endpoint("source")?;
        let dst = endpoint("target")?;
        if fields.next().is_some() {
            return Err(parse_err(edge_path, idx + 1, "expected exactly two fields".into()));
        }
        if src >= num_nodes || dst >= num_nodes {
            return Err(Error::Validation(format!(
                "{}:{}: edge ({src}, {dst}) out of range for {num_nodes} nodes",
                edge_path.display(),
                idx + 1
            )));
        }
        edges.push((src, dst));
    }

    Graph::new(edges, features, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn line_graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(edges.iter().copied(), Array2::zeros((n, 1)), vec![0; n], 1).unwrap()
    }

    #[test]
    fn loads_minimal_graph() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n");
        let f = write(dir.path(), "f.csv", "0.5\n-1.0\n");
        let l = write(dir.path(), "l.txt", "0\n1\n");
        let g = load_graph(&e, &f, &l).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.adjacency().edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn out_of_range_endpoint_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "5\t0\n");
        let f = write(dir.path(), "f.csv", "0.5\n-1.0\n");
        let l = write(dir.path(), "l.txt", "0\n0\n");
        assert!(matches!(load_graph(&e, &f, &l), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n1\tx\n");
        let f = write(dir.path(), "f.csv", "0.5\n-1.0\n");
        let l = write(dir.path(), "l.txt", "0\n0\n");
        match load_graph(&e, &f, &l) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_edges_are_stored_once() {
        let raw = vec![(0, 1), (2, 1), (0, 1), (1, 0), (2, 1)];
        let g = line_graph(3, &raw);
        let mut oracle = raw.clone();
        oracle.sort_unstable();
        oracle.dedup();
        let mut stored: Vec<_> = g.adjacency().edges().collect();
        stored.sort_unstable();
        assert_eq!(stored, oracle);
    }

    #[test]
    fn adjacency_reads_are_counted() {
        let g = line_graph(3, &[(0, 1)]);
        assert_eq!(g.adjacency_reads(), 0);
        let _ = g.adjacency();
        let _ = g.adjacency();
        assert_eq!(g.adjacency_reads(), 2);
        assert_eq!(g.in_degrees(), vec![0, 1, 0]);
        assert_eq!(g.out_degrees(), vec![1, 0, 0]);
    }

    fn sbm(n: usize, intra: f64, inter: f64, seed: u64) -> SbmSpec {
        SbmSpec {
            num_nodes: n,
            num_classes: 4,
            intra_p: intra,
            inter_p: inter,
            feature_dim: 8,
            feature_signal: 1.0,
            seed,
        }
    }

    #[test]
    fn sbm_without_edge_probability_is_edgeless() {
        let (g, _) = generate_sbm(&sbm(50, 0.0, 0.0, 1)).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn sbm_is_deterministic() {
        let spec = sbm(200, 0.05, 0.01, 9);
        let (a, ma) = generate_sbm(&spec).unwrap();
        let (b, mb) = generate_sbm(&spec).unwrap();
        assert_eq!(
            a.adjacency().edges().collect::<Vec<_>>(),
            b.adjacency().edges().collect::<Vec<_>>()
        );
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
        assert_eq!(ma, mb);
    }

    #[test]
    fn sbm_intra_class_edge_frequency() {
        let (g, _) = generate_sbm(&sbm(1000, 0.05, 0.005, 3)).unwrap();
        let labels = g.labels();
        let mut class_sizes = [0usize; 4];
        for &l in labels {
            class_sizes[l] += 1;
        }
        let possible: usize = class_sizes.iter().map(|&s| s * (s - 1)).sum();
        let intra = g.adjacency().edges().filter(|&(s, d)| labels[s] == labels[d]).count();
        let freq = intra as f64 / possible as f64;
        assert!((freq - 0.05).abs() <= 0.2 * 0.05, "intra frequency {freq}");
    }

    #[test]
    fn sbm_rejects_empty_spec() {
        let mut spec = sbm(0, 0.1, 0.1, 0);
        assert!(generate_sbm(&spec).is_err());
        spec.num_nodes = 10;
        spec.num_classes = 0;
        assert!(generate_sbm(&spec).is_err());
        spec.num_classes = 2;
        spec.intra_p = 1.5;
        assert!(generate_sbm(&spec).is_err());
    }

    #[test]
    fn degree_bounding_under_and_over_cap() {
        let mut edges = vec![(0, 1), (0, 2), (0, 3)];
        edges.extend((1..=10).map(|d| (11, d)));
        let g = line_graph(12, &edges);
        let bounded = bound_degree(&g, 5, 0).unwrap();
        let deg = bounded.out_degrees();
        assert_eq!(deg[0], 3);
        assert_eq!(deg[11], 5);

        let bounded = bound_degree(&g, 4, 0).unwrap();
        assert_eq!(bounded.out_degrees()[11], 4);
        let again = bound_degree(&g, 4, 0).unwrap();
        assert_eq!(
            bounded.adjacency().edges().collect::<Vec<_>>(),
            again.adjacency().edges().collect::<Vec<_>>()
        );
        assert!(bound_degree(&g, 0, 0).is_err());
    }

    #[test]
    fn degree_bounding_samples_uniformly() {
        // Each of 10 out-edges should survive a cap of 4 with probability 0.4.
        let g = line_graph(11, &(1..=10).map(|d| (0, d)).collect::<Vec<_>>());
        let trials = 4000;
        let mut hits = [0usize; 11];
        for seed in 0..trials {
            for (_, dst) in bound_degree(&g, 4, seed).unwrap().adjacency().edges() {
                hits[dst] += 1;
            }
        }
        let sd = (trials as f64 * 0.4 * 0.6).sqrt();
        for &h in &hits[1..] {
            assert!((h as f64 - 0.4 * trials as f64).abs() < 4.0 * sd, "hits {h}");
        }
    }

    #[test]
    fn split_sizes_follow_ratio() {
        let m = split_nodes(100, DEFAULT_SPLIT, 1);
        assert_eq!(m.sizes(), (75, 10, 15));
        m.validate(100).unwrap();
    }

    #[test]
    fn split_of_four_nodes() {
        // Quotas 3.0 / 0.4 / 0.6: floors (3, 0, 0), the leftover node goes
        // to the largest remainder (test).
        assert_eq!(split_nodes(4, DEFAULT_SPLIT, 5).sizes(), (3, 0, 1));
    }

    #[test]
    fn split_is_seeded() {
        assert_eq!(split_nodes(57, DEFAULT_SPLIT, 3), split_nodes(57, DEFAULT_SPLIT, 3));
        assert_ne!(split_nodes(57, DEFAULT_SPLIT, 3), split_nodes(57, DEFAULT_SPLIT, 4));
    }

    proptest! {
        #[test]
        fn bounded_out_degree_never_exceeds_cap(
            n in 2usize..15,
            raw in proptest::collection::vec((0usize..15, 0usize..15), 0..80),
            cap in 1usize..5,
            seed in 0u64..1000,
        ) {
            let edges: Vec<_> = raw.into_iter().map(|(s, d)| (s % n, d % n)).collect();
            let g = line_graph(n, &edges);
            let b = bound_degree(&g, cap, seed).unwrap();
            prop_assert!(b.out_degrees().iter().all(|&d| d <= cap));
            let before: std::collections::BTreeSet<_> = g.adjacency().edges().collect();
            prop_assert!(b.adjacency().edges().all(|e| before.contains(&e)));
        }

        #[test]
        fn splits_partition_nodes(n in 1usize..500, seed in 0u64..100) {
            let m = split_nodes(n, DEFAULT_SPLIT, seed);
            let (a, b, c) = m.sizes();
            prop_assert_eq!(a + b + c, n);
            for (size, r) in [(a, 0.75), (b, 0.10), (c, 0.15)] {
                prop_assert!((size as f64 - n as f64 * r).abs() <= 1.0);
            }
            for i in 0..n {
                prop_assert_eq!(m.train[i] as u8 + m.val[i] as u8 + m.test[i] as u8, 1);
            }
        }
    }
}
