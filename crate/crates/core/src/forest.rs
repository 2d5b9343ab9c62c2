//! Shapelet transform and a random forest over the transformed features.
//!
//! Trees are CART classifiers split on Gini impurity, each grown on a
//! bootstrap resample with a random feature subset per node. A tree's
//! randomness comes from its own ChaCha8 stream (the forest seed with the
//! tree index as stream id), so forests are reproducible and can be grown
//! in any order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discovery::ShapeletSet;
use crate::series::{Label, LabeledWindow, TimeSeries};
use crate::{par, Error, Result};

/// Minimum distance of `window` to each shapelet, in shapelet order.
pub fn shapelet_transform(shapelets: &ShapeletSet, window: &TimeSeries) -> Result<Vec<f64>> {
    shapelets.shapelets.iter().map(|s| shapelets.distance.min_distance(&s.values, window.samples())).collect()
}

/// Transforms many windows in parallel.
pub fn transform_all<'a, I>(shapelets: &ShapeletSet, windows: I) -> Result<Vec<Vec<f64>>>
where
    I: IntoIterator<Item = &'a TimeSeries>,
{
    let windows: Vec<&TimeSeries> = windows.into_iter().collect();
    par::try_map(&windows, |w| shapelet_transform(shapelets, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per node; `None` means ⌊√k⌋ (at least one).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    pub decision_threshold: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
            bootstrap: true,
            seed: 0,
            decision_threshold: 0.5,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::usage("n_trees must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::usage("min_leaf must be at least 1"));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::usage("decision_threshold must lie in (0, 1)"));
        }
        if self.max_features == Some(0) {
            return Err(Error::usage("max_features must be at least 1"));
        }
        Ok(())
    }

    fn features_per_node(&self, k: usize) -> usize {
        self.max_features.unwrap_or_else(|| ((k as f64).sqrt().floor() as usize).max(1)).min(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        events: u32,
        others: u32,
    },
}

/// A decision tree stored as a node arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Event fraction of the leaf reached by `x`.
    pub fn prob_event(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] < threshold { left } else { right };
                }
                Node::Leaf { events, others } => return events as f64 / (events + others) as f64,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// `n · gini`, i.e. `n − Σcᵢ²/n`, for a two-class count.
fn weighted_gini(events: usize, others: usize) -> f64 {
    let n = (events + others) as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - ((events * events + others * others) as f64) / n
}

/// A candidate node split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSplit {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

impl NodeSplit {
    /// Larger decrease wins, then the lower feature index, then the lower
    /// threshold, so the choice does not depend on feature visiting order.
    fn beats(&self, other: &NodeSplit) -> bool {
        self.decrease > other.decrease
            || (self.decrease == other.decrease
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Best Gini split of `rows` on `feature`, considering midpoints between
/// consecutive distinct values that leave at least `min_leaf` rows per side.
pub fn best_feature_split(
    features: &[Vec<f64>],
    labels: &[Label],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<NodeSplit> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| features[a][feature].total_cmp(&features[b][feature]).then(a.cmp(&b)));
    let total = rows.iter().fold((0, 0), |c, &r| count(c, labels[r]));
    let parent = weighted_gini(total.0, total.1);
    let mut left = (0, 0);
    let mut best: Option<NodeSplit> = None;
    for i in 0..order.len().saturating_sub(1) {
        left = count(left, labels[order[i]]);
        let (lo, hi) = (features[order[i]][feature], features[order[i + 1]][feature]);
        let n_left = i + 1;
        if lo == hi || n_left < min_leaf || order.len() - n_left < min_leaf {
            continue;
        }
        let decrease = parent - weighted_gini(left.0, left.1) - weighted_gini(total.0 - left.0, total.1 - left.1);
        let cand = NodeSplit { feature, threshold: midpoint(lo, hi), decrease };
        if best.as_ref().map_or(true, |b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    best
}

fn count(c: (usize, usize), l: Label) -> (usize, usize) {
    match l {
        Label::Event => (c.0 + 1, c.1),
        Label::Other => (c.0, c.1 + 1),
    }
}

struct TreeBuilder<'a, R> {
    features: &'a [Vec<f64>],
    labels: &'a [Label],
    params: &'a ForestParams,
    k: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> TreeBuilder<'_, R> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let (events, others) = rows.iter().fold((0, 0), |c, &r| count(c, self.labels[r]));
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { events: events as u32, others: others as u32 });

        let stop = events == 0
            || others == 0
            || self.params.max_depth.is_some_and(|d| depth >= d)
            || rows.len() < 2 * self.params.min_leaf;
        if stop || self.k == 0 {
            return id;
        }

        let mut order: Vec<usize> = (0..self.k).collect();
        order.shuffle(self.rng);
        let wanted = self.params.features_per_node(self.k);
        let mut best: Option<NodeSplit> = None;
        for (tried, &f) in order.iter().enumerate() {
            // Keep drawing past the quota until some feature can split.
            if tried >= wanted && best.is_some() {
                break;
            }
            if let Some(s) = best_feature_split(self.features, self.labels, rows, f, self.params.min_leaf) {
                if s.decrease > 1e-12 && best.as_ref().map_or(true, |b| s.beats(b)) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else { return id };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.features[r][split.feature] < split.threshold);
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

fn check_features(features: &[Vec<f64>], labels: &[Label]) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::usage(format!("{} feature rows but {} labels", features.len(), labels.len())));
    }
    let k = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != k) {
        return Err(Error::usage("feature rows differ in length"));
    }
    Ok(k)
}

/// Grows one tree on `rows` (indices into `features`, repeats allowed).
pub fn fit_tree<R: Rng>(
    features: &[Vec<f64>],
    labels: &[Label],
    rows: &[usize],
    params: &ForestParams,
    rng: &mut R,
) -> Result<Tree> {
    let k = check_features(features, labels)?;
    if rows.is_empty() {
        return Err(Error::usage("cannot grow a tree on zero samples"));
    }
    let mut builder = TreeBuilder { features, labels, params, k, rng, nodes: Vec::new() };
    builder.grow(rows, 0);
    Ok(Tree { nodes: builder.nodes })
}

/// The random stream used for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub prob_event: f64,
    pub prob_other: f64,
}

impl Forest {
    /// Mean leaf event fraction over the trees. Per-tree values are summed
    /// in sorted order, so the result is independent of tree order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_features {
            return Err(Error::usage(format!(
                "feature vector has {} values, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut probs: Vec<f64> = self.trees.iter().map(|t| t.prob_event(x)).collect();
        probs.sort_by(f64::total_cmp);
        let prob_event = (probs.iter().sum::<f64>() / probs.len() as f64).clamp(0.0, 1.0);
        let label = if prob_event >= self.params.decision_threshold { Label::Event } else { Label::Other };
        Ok(Prediction { label, prob_event, prob_other: 1.0 - prob_event })
    }
}

/// Fits `params.n_trees` trees, each on its own bootstrap resample.
pub fn fit_forest(features: &[Vec<f64>], labels: &[Label], params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    let k = check_features(features, labels)?;
    let events = labels.iter().filter(|&&l| l == Label::Event).count();
    if events == 0 || events == labels.len() {
        return Err(Error::usage("training labels must contain both classes"));
    }
    let n = labels.len();
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = tree_rng(params.seed, t);
        let rows: Vec<usize> =
            if params.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
        fit_tree(features, labels, &rows, params, &mut rng)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Forest { params: params.clone(), n_features: k, trees })
}

/// A forest together with the shapelets that define its feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub shapelets: ShapeletSet,
    pub forest: Forest,
}

impl Model {
    pub fn predict(&self, window: &TimeSeries) -> Result<Prediction> {
        self.forest.predict_proba(&shapelet_transform(&self.shapelets, window)?)
    }

    /// Checks that `window` can be fed to this model.
    pub fn check_window(&self, window: &TimeSeries) -> Result<()> {
        if window.sample_rate_hz() != self.shapelets.sample_rate_hz {
            return Err(Error::usage(format!(
                "window sampled at {} Hz but the model was trained at {} Hz",
                window.sample_rate_hz(),
                self.shapelets.sample_rate_hz
            )));
        }
        if let Some(s) = self.shapelets.shapelets.iter().find(|s| s.length > window.len()) {
            return Err(Error::usage(format!(
                "shapelet of length {} does not fit a {}-sample window",
                s.length,
                window.len()
            )));
        }
        Ok(())
    }
}

/// Transforms the labeled windows and fits a forest on them.
pub fn train(shapelets: ShapeletSet, windows: &[LabeledWindow], params: &ForestParams) -> Result<Model> {
    let features = transform_all(&shapelets, windows.iter().map(|w| &w.series))?;
    let labels: Vec<Label> = windows.iter().map(|w| w.label).collect();
    let forest = fit_forest(&features, &labels, params)?;
    Ok(Model { shapelets, forest })
}

/// Versioned on-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub model: Model,
}

impl ModelDocument {
    pub const FORMAT: &'static str = "eqshapelet.model";
    pub const VERSION: u32 = 1;

    pub fn new(model: Model) -> Self {
        Self { format: Self::FORMAT.into(), version: Self::VERSION, manifest: None, model }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != Self::FORMAT || doc.version != Self::VERSION {
            return Err(Error::data(format!("unsupported model document {} v{}", doc.format, doc.version)));
        }
        Ok(doc)
    }
}

/// Binary confusion counts with `Event` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Event, Label::Event) => self.true_positives += 1,
            (Label::Other, Label::Event) => self.false_positives += 1,
            (Label::Other, Label::Other) => self.true_negatives += 1,
            (Label::Event, Label::Other) => self.false_negatives += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    fn ratio(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.true_positives + self.true_negatives, self.total())
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy().unwrap_or(0.0),
            precision: self.precision(),
            recall: self.recall(),
            confusion: *self,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Absent when nothing was predicted positive.
    pub precision: Option<f64>,
    /// Absent when there are no positive windows.
    pub recall: Option<f64>,
    pub confusion: Confusion,
}

/// Classifies labeled windows and tallies the outcome.
pub fn evaluate(model: &Model, windows: &[LabeledWindow]) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::usage("nothing to evaluate"));
    }
    let predictions = par::try_map(windows, |w| model.predict(&w.series))?;
    let mut confusion = Confusion::default();
    for (w, p) in windows.iter().zip(&predictions) {
        confusion.record(w.label, p.label);
    }
    Ok(confusion.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::Shapelet;
    use crate::distance::DistanceMode;
    use proptest::prelude::*;
    use rand::Rng;
    use Label::{Event as E, Other as O};

    fn leaf(events: u32, others: u32) -> Tree {
        Tree { nodes: vec![Node::Leaf { events, others }] }
    }

    fn stump(feature: usize, threshold: f64, left: (u32, u32), right: (u32, u32)) -> Tree {
        Tree {
            nodes: vec![
                Node::Split { feature, threshold, left: 1, right: 2 },
                Node::Leaf { events: left.0, others: left.1 },
                Node::Leaf { events: right.0, others: right.1 },
            ],
        }
    }

    fn forest(trees: Vec<Tree>, k: usize) -> Forest {
        Forest { params: ForestParams::default(), n_features: k, trees }
    }

    fn shapelet_set(values: Vec<Vec<f64>>) -> ShapeletSet {
        ShapeletSet {
            distance: DistanceMode::Raw,
            window_len: 10,
            sample_rate_hz: 20.0,
            shapelets: values
                .into_iter()
                .map(|v| Shapelet {
                    length: v.len(),
                    values: v,
                    quality: 1.0,
                    split_threshold: 1.0,
                    source_window_id: "w".into(),
                    source_offset: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn transform_examples() {
        let w = TimeSeries::new(vec![0.0, 1.0, 5.0, 2.0, 0.0, 0.0, 3.0, 3.0, 3.0, 0.0], 20.0, 0.0).unwrap();
        let set = shapelet_set(vec![vec![1.0, 5.0, 2.0], vec![3.0, 3.0, 3.0], vec![9.0, 9.0, 9.0]]);
        let f = shapelet_transform(&set, &w).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(&f[..2], &[0.0, 0.0]);
        // exhaustive alignment oracle for the third
        let want = (0..=7)
            .map(|s| (0..3).map(|j| (9.0 - w.samples()[s + j]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(f[2], want);
        // dropping a shapelet drops exactly its coordinate
        let fewer = shapelet_set(vec![vec![1.0, 5.0, 2.0], vec![9.0, 9.0, 9.0]]);
        assert_eq!(shapelet_transform(&fewer, &w).unwrap(), vec![f[0], f[2]]);
        let too_long = shapelet_set(vec![vec![0.0; 11]]);
        assert!(shapelet_transform(&too_long, &w).is_err());
        let eight = shapelet_set((0..8).map(|i| vec![i as f64; 4]).collect());
        assert_eq!(shapelet_transform(&eight, &w).unwrap().len(), 8);
    }

    #[test]
    fn single_class_node_is_a_leaf() {
        let f = vec![vec![1.0], vec![2.0]];
        let t = fit_tree(&f, &[E, E], &[0, 1], &ForestParams::default(), &mut tree_rng(0, 0)).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { events: 2, others: 0 }]);
    }

    #[test]
    fn separable_data_gives_a_stump() {
        let f: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let l: Vec<Label> = (0..10).map(|i| if i < 5 { E } else { O }).collect();
        let rows: Vec<usize> = (0..10).collect();
        let t = fit_tree(&f, &l, &rows, &ForestParams::default(), &mut tree_rng(0, 0)).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.nodes[0], Node::Split { feature: 0, threshold: 4.5, left: 1, right: 2 });
        assert!(f.iter().zip(&l).all(|(x, &y)| (t.prob_event(x) == 1.0) == (y == E)));
    }

    /// Brute force over all (feature, midpoint) pairs with explicit partitions.
    fn gini_oracle(features: &[Vec<f64>], labels: &[Label]) -> (usize, f64) {
        let gini_n = |ls: &[Label]| {
            let n = ls.len() as f64;
            if ls.is_empty() {
                return 0.0;
            }
            let e = ls.iter().filter(|&&l| l == E).count();
            n - ((e * e + (ls.len() - e) * (ls.len() - e)) as f64) / n
        };
        let parent = gini_n(labels);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..features[0].len() {
            let mut vals: Vec<f64> = features.iter().map(|x| x[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for pair in vals.windows(2) {
                let t = midpoint(pair[0], pair[1]);
                let left: Vec<Label> = features.iter().zip(labels).filter(|(x, _)| x[f] < t).map(|(_, &l)| l).collect();
                let right: Vec<Label> =
                    features.iter().zip(labels).filter(|(x, _)| x[f] >= t).map(|(_, &l)| l).collect();
                let dec = parent - gini_n(&left) - gini_n(&right);
                let better = match best {
                    None => true,
                    Some((bf, bt, bd)) => dec > bd || (dec == bd && (f < bf || (f == bf && t < bt))),
                };
                if better {
                    best = Some((f, t, dec));
                }
            }
        }
        let (f, t, _) = best.unwrap();
        (f, t)
    }

    #[test]
    fn root_split_matches_gini_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let features: Vec<Vec<f64>> =
                (0..50).map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let labels: Vec<Label> =
                features.iter().map(|x| if x[trial % 4] + rng.random_range(-2.0..2.0) < 5.0 { E } else { O }).collect();
            let params = ForestParams { max_features: Some(4), ..Default::default() };
            let rows: Vec<usize> = (0..50).collect();
            let tree = fit_tree(&features, &labels, &rows, &params, &mut tree_rng(1, trial)).unwrap();
            let Node::Split { feature, threshold, .. } = tree.nodes[0] else { panic!("root is a leaf") };
            assert_eq!((feature, threshold), gini_oracle(&features, &labels));
        }
    }

    #[test]
    fn depth_and_leaf_limits() {
        let f: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let l: Vec<Label> = (0..16).map(|i| if i % 2 == 0 { E } else { O }).collect();
        let rows: Vec<usize> = (0..16).collect();
        let shallow = ForestParams { max_depth: Some(2), ..Default::default() };
        assert!(fit_tree(&f, &l, &rows, &shallow, &mut tree_rng(0, 0)).unwrap().depth() <= 2);
        let big_leaves = ForestParams { min_leaf: 8, ..Default::default() };
        let t = fit_tree(&f, &l, &rows, &big_leaves, &mut tree_rng(0, 0)).unwrap();
        for n in &t.nodes {
            if let Node::Leaf { events, others } = n {
                assert!(events + others >= 8);
            }
        }
    }

    #[test]
    fn forest_is_deterministic_and_accurate() {
        let f: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let l: Vec<Label> = (0..40).map(|i| if i < 20 { E } else { O }).collect();
        let params = ForestParams { n_trees: 25, seed: 9, ..Default::default() };
        let a = fit_forest(&f, &l, &params).unwrap();
        let b = par::with_threads(Some(3), || fit_forest(&f, &l, &params)).unwrap().unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.trees.len(), 25);
        for (x, &y) in f.iter().zip(&l) {
            assert_eq!(a.predict_proba(x).unwrap().label, y);
        }
        let other_seed = fit_forest(&f, &l, &ForestParams { seed: 10, ..params.clone() }).unwrap();
        assert_ne!(a, other_seed);
        assert!(fit_forest(&f, &[E; 40], &params).unwrap_err().is_usage());
    }

    #[test]
    fn single_tree_on_pure_data() {
        let f: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let l = [E, E, E, O, O, O];
        let params = ForestParams { n_trees: 1, bootstrap: false, ..Default::default() };
        let model = fit_forest(&f, &l, &params).unwrap();
        assert!(f.iter().zip(&l).all(|(x, &y)| model.predict_proba(x).unwrap().label == y));
    }

    #[test]
    fn probability_arithmetic() {
        let pure = forest(vec![leaf(3, 0), leaf(1, 0)], 1);
        let p = pure.predict_proba(&[0.0]).unwrap();
        assert_eq!((p.prob_event, p.label), (1.0, E));
        // leaves 3/4 and 1/5 -> mean 0.475
        let two = forest(vec![stump(0, 1.0, (3, 1), (0, 2)), stump(0, 2.0, (1, 4), (2, 0))], 1);
        let p = two.predict_proba(&[0.5]).unwrap();
        assert!((p.prob_event - 0.475).abs() < 1e-15);
        assert_eq!(p.label, O);
        assert!((p.prob_event + p.prob_other - 1.0).abs() < 1e-15);
        let p = two.predict_proba(&[1.5]).unwrap();
        // right leaf 0/2 and left leaf 1/5 -> mean 0.1
        assert!((p.prob_event - 0.1).abs() < 1e-15);
        assert!(two.predict_proba(&[1.0, 2.0]).unwrap_err().is_usage());
        // exactly at the threshold is an event
        let half = forest(vec![leaf(1, 1)], 1);
        assert_eq!(half.predict_proba(&[0.0]).unwrap().label, E);
    }

    #[test]
    fn majority_vote_with_pure_leaves() {
        let trees = vec![stump(0, 1.0, (1, 0), (0, 1)), stump(0, 2.0, (1, 0), (0, 1)), stump(0, 3.0, (1, 0), (0, 1))];
        let f = forest(trees, 1);
        assert_eq!(f.predict_proba(&[1.5]).unwrap().label, E);
        assert_eq!(f.predict_proba(&[2.5]).unwrap().label, O);
    }

    #[test]
    fn confusion_metrics() {
        let c = Confusion { true_positives: 281, false_positives: 11, false_negatives: 7, true_negatives: 0 };
        assert!((c.precision().unwrap() - 0.962).abs() < 1e-3);
        assert!((c.recall().unwrap() - 0.976).abs() < 1e-3);
        let mut c = Confusion::default();
        for (t, p) in [(E, E), (O, O), (E, E), (O, E)] {
            c.record(t, p);
        }
        assert_eq!(c.accuracy(), Some(0.75));
        let empty = Confusion { true_negatives: 3, ..Default::default() };
        assert_eq!((empty.precision(), empty.recall(), empty.accuracy()), (None, None, Some(1.0)));
    }

    #[test]
    fn evaluate_all_correct() {
        let set = shapelet_set(vec![vec![5.0, 5.0, 5.0]]);
        let win = |v: f64, label| LabeledWindow::new("w", TimeSeries::new(vec![v; 10], 20.0, 0.0).unwrap(), label);
        let windows = vec![win(5.0, E), win(5.1, E), win(0.0, O), win(0.2, O)];
        let model = train(set, &windows, &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        let m = evaluate(&model, &windows).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (1.0, Some(1.0), Some(1.0)));
        assert!(evaluate(&model, &[]).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_are_valid_and_order_free(
            leaves in proptest::collection::vec((0u32..5, 0u32..5), 1..12),
            x in -5f64..5.0,
        ) {
            let trees: Vec<Tree> = leaves
                .iter()
                .enumerate()
                .filter(|(_, (e, o))| e + o > 0)
                .map(|(i, &(e, o))| stump(0, i as f64 - 6.0, (e, o), (o, e)))
                .collect();
            prop_assume!(!trees.is_empty());
            let mut reversed = trees.clone();
            reversed.reverse();
            let p = forest(trees, 1).predict_proba(&[x]).unwrap();
            let q = forest(reversed, 1).predict_proba(&[x]).unwrap();
            prop_assert!((0.0..=1.0).contains(&p.prob_event));
            prop_assert!((p.prob_event + p.prob_other - 1.0).abs() < 1e-12);
            prop_assert_eq!(p, q);
        }
    }
}
