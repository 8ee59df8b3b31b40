//! CART random forest with Gini splits, bootstrap sampling and per-node
//! feature subsampling.
//!
//! Training first puts the rows in a canonical order, so the fitted model
//! depends only on the multiset of rows and the seed. Each tree draws from
//! its own ChaCha stream of the seed.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::motion_feature_names;
use super::{ActivityError, ActivityLabel, LabeledSample, Result};

pub const FOREST_FORMAT: &str = "ppgema-forest";
pub const FOREST_VERSION: u32 = 1;
const MIN_PER_CLASS: usize = 10;
const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features examined per split; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 12,
            max_features: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training rows per class that reached this leaf.
    Leaf { counts: [u32; N_CLASSES] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &[u32; N_CLASSES] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    fn predict(&self, x: &[f64]) -> usize {
        argmax(self.leaf(x))
    }
}

/// Serialized as JSON; `format` and `version` identify the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: usize,
    pub seed: u64,
    pub feature_names: Vec<String>,
    trees: Vec<Tree>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Per-class tree votes.
    pub fn votes(&self, x: &[f64]) -> [usize; N_CLASSES] {
        let mut votes = [0; N_CLASSES];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1;
        }
        votes
    }

    pub fn predict(&self, x: &[f64]) -> ActivityLabel {
        ActivityLabel::from_index(argmax(&self.votes(x))).expect("class index")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel =
            serde_json::from_str(text).map_err(|e| ActivityError::Model(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| ActivityError::Model(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ActivityError::Model(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the serialized model.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.format != FOREST_FORMAT || self.version != FOREST_VERSION {
            return Err(ActivityError::Model(format!(
                "unsupported model {} v{}",
                self.format, self.version
            )));
        }
        if self.trees.is_empty() || self.trees.len() != self.n_trees {
            return Err(ActivityError::Model("tree count mismatch".into()));
        }
        let d = self.n_features();
        for tree in &self.trees {
            let n = tree.nodes.len();
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    // Children always follow their parent, which rules out cycles.
                    if *feature >= d || *left <= i || *right <= i || *left >= n || *right >= n {
                        return Err(ActivityError::Model(format!("malformed node {i}")));
                    }
                }
            }
            if n == 0 {
                return Err(ActivityError::Model("empty tree".into()));
            }
        }
        Ok(())
    }
}

fn argmax(counts: &[impl Copy + PartialOrd + Default]) -> usize {
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

fn canonical_order(samples: &[LabeledSample]) -> Vec<&LabeledSample> {
    let mut rows: Vec<&LabeledSample> = samples.iter().collect();
    rows.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then_with(|| {
                a.features
                    .iter()
                    .zip(&b.features)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.subject_id.cmp(&b.subject_id))
    });
    rows
}

fn check_training_set(samples: &[LabeledSample]) -> Result<usize> {
    let d = samples.first().map_or(0, |s| s.features.len());
    for (index, s) in samples.iter().enumerate() {
        if s.features.len() != d || d == 0 || !s.features.iter().all(|v| v.is_finite()) {
            return Err(ActivityError::BadFeatures { expected: d, index });
        }
    }
    let mut counts = [0usize; N_CLASSES];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count();
    if present < 2 {
        return Err(ActivityError::TooFewClasses(present));
    }
    for (i, &count) in counts.iter().enumerate() {
        if count > 0 && count < MIN_PER_CLASS {
            return Err(ActivityError::DeficientClass {
                class: ActivityLabel::from_index(i).expect("class index"),
                count,
                needed: MIN_PER_CLASS,
            });
        }
    }
    Ok(d)
}

pub fn train_forest(samples: &[LabeledSample], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let d = check_training_set(samples)?;
    let rows = canonical_order(samples);
    let x: Vec<&[f64]> = rows.iter().map(|r| r.features.as_slice()).collect();
    let y: Vec<usize> = rows.iter().map(|r| r.label.index()).collect();
    let mtry = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let n_trees = params.n_trees.max(1);

    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let boot: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            TreeBuilder {
                x: &x,
                y: &y,
                mtry,
                max_depth: params.max_depth,
                min_split: params.min_samples_split.max(2),
                rng,
                nodes: Vec::new(),
            }
            .build(boot)
        })
        .collect();

    let names = motion_feature_names();
    let feature_names = if names.len() == d {
        names
    } else {
        (0..d).map(|i| format!("f{i}")).collect()
    };
    Ok(ForestModel {
        format: FOREST_FORMAT.into(),
        version: FOREST_VERSION,
        n_trees,
        max_depth: params.max_depth,
        max_features: mtry,
        seed,
        feature_names,
        trees,
    })
}

struct TreeBuilder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [usize],
    mtry: usize,
    max_depth: usize,
    min_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build(mut self, rows: Vec<usize>) -> Tree {
        self.grow(rows, 0);
        Tree { nodes: self.nodes }
    }

    fn counts(&self, rows: &[usize]) -> [u32; N_CLASSES] {
        let mut c = [0u32; N_CLASSES];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&rows);
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        self.nodes.push(Node::Leaf { counts });
        if pure || depth >= self.max_depth || rows.len() < self.min_split {
            return id;
        }
        let Some(split) = self.best_split(&rows, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Scans features in random order until `mtry` non-constant ones have
    /// been tried. The score is Σ count²/n over both children, which grows
    /// as the weighted Gini impurity shrinks.
    fn best_split(&mut self, rows: &[usize], counts: &[u32; N_CLASSES]) -> Option<Split> {
        let n = rows.len() as f64;
        let parent = counts.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / n;
        let mut order: Vec<usize> = (0..self.x[0].len()).collect();
        order.shuffle(&mut self.rng);

        let mut best: Option<Split> = None;
        let mut tried = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for f in order {
            if tried == self.mtry {
                break;
            }
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            tried += 1;

            let mut left = [0f64; N_CLASSES];
            let mut right: [f64; N_CLASSES] = counts.map(f64::from);
            let (mut sl, mut sr) = (0.0, counts.iter().map(|&c| (c as f64).powi(2)).sum::<f64>());
            for i in 0..pairs.len() - 1 {
                let c = pairs[i].1;
                // Update Σ count² incrementally as one row moves left.
                sl += 2.0 * left[c] + 1.0;
                sr -= 2.0 * right[c] - 1.0;
                left[c] += 1.0;
                right[c] -= 1.0;
                let (a, b) = (pairs[i].0, pairs[i + 1].0);
                if a == b {
                    continue;
                }
                let nl = (i + 1) as f64;
                let score = sl / nl + sr / (n - nl);
                if score > parent + 1e-12 && best.as_ref().is_none_or(|s| score > s.score) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out: Vec<String>,
    pub n_test: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOutReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// `confusion[true][predicted]`, summed over folds.
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
}

/// Subjects are sorted by id and split into consecutive groups of `k`; a
/// trailing remainder forms one smaller fold. Every fold trains on all
/// other subjects with the same seed.
pub fn evaluate_leave_k_out(
    samples: &[LabeledSample],
    k: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<LeaveOutReport> {
    let subjects: Vec<&str> = samples
        .iter()
        .map(|s| s.subject_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if k == 0 || subjects.len() < k + 1 {
        return Err(ActivityError::TooFewSubjects {
            have: subjects.len(),
            k,
        });
    }
    let mut folds = Vec::new();
    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    for group in subjects.chunks(k) {
        let (test, train): (Vec<LabeledSample>, Vec<LabeledSample>) = samples
            .iter()
            .cloned()
            .partition(|s| group.contains(&s.subject_id.as_str()));
        let model = train_forest(&train, params, seed)?;
        let mut correct = 0;
        for s in &test {
            let p = model.predict(&s.features);
            confusion[s.label.index()][p.index()] += 1;
            correct += usize::from(p == s.label);
        }
        folds.push(FoldResult {
            held_out: group.iter().map(|s| s.to_string()).collect(),
            n_test: test.len(),
            accuracy: correct as f64 / test.len() as f64,
        });
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(LeaveOutReport {
        k,
        folds,
        mean_accuracy,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n_per: usize, subject: &str, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for (label, centre) in [(ActivityLabel::Sit, -1.0), (ActivityLabel::Walk, 1.0)] {
            for _ in 0..n_per {
                out.push(LabeledSample {
                    subject_id: subject.into(),
                    label,
                    features: vec![
                        centre + rng.random_range(-0.9..0.9),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    ],
                });
            }
        }
        out
    }

    fn small() -> ForestParams {
        ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        }
    }

    #[test]
    fn separable_set_fits_perfectly() {
        let data = blobs(100, "a", 1);
        let model = train_forest(&data, &small(), 7).unwrap();
        assert!(data.iter().all(|s| model.predict(&s.features) == s.label));
        assert_eq!(model.max_features, 2);
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<_> = blobs(20, "a", 1)
            .into_iter()
            .filter(|s| s.label == ActivityLabel::Sit)
            .collect();
        assert!(matches!(
            train_forest(&data, &small(), 1),
            Err(ActivityError::TooFewClasses(1))
        ));
    }

    #[test]
    fn deficient_class_is_named() {
        let mut data = blobs(20, "a", 1);
        data.truncate(25);
        let err = train_forest(&data, &small(), 1).unwrap_err();
        assert!(err.to_string().contains("walk"), "{err}");
    }

    #[test]
    fn deterministic_and_order_free() {
        let data = blobs(50, "a", 3);
        let a = train_forest(&data, &small(), 11).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let b = train_forest(&rev, &small(), 11).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = train_forest(&data, &small(), 12).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn leaf_counts_sum_to_bootstrap_size() {
        let data = blobs(30, "a", 5);
        let model = train_forest(&data, &small(), 2).unwrap();
        for tree in &model.trees {
            let total: u32 = tree
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { counts } => Some(counts.iter().sum::<u32>()),
                    _ => None,
                })
                .sum();
            // Split nodes are overwritten, so only true leaves remain as Leaf.
            assert_eq!(total as usize, data.len());
        }
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let data = blobs(40, "a", 9);
        let model = train_forest(&data, &small(), 4).unwrap();
        let back = ForestModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.digest(), model.digest());
        let bad = model.to_json().replace(FOREST_FORMAT, "other");
        assert!(ForestModel::from_json(&bad).is_err());
    }

    #[test]
    fn leave_k_out_folds() {
        let mut data = Vec::new();
        for (i, s) in ["s1", "s2", "s3", "s4", "s5"].iter().enumerate() {
            data.extend(blobs(20, s, i as u64));
        }
        let report = evaluate_leave_k_out(&data, 2, &small(), 1).unwrap();
        assert_eq!(report.folds.len(), 3);
        assert_eq!(report.folds[2].held_out, vec!["s5".to_string()]);
        assert!(report.mean_accuracy > 0.9);
        assert!(matches!(
            evaluate_leave_k_out(&data, 5, &small(), 1),
            Err(ActivityError::TooFewSubjects { .. })
        ));
    }

    #[test]
    fn duplicated_subjects_score_equally() {
        let base = blobs(20, "x", 4);
        let mut data = Vec::new();
        for s in ["s1", "s2", "s3", "s4"] {
            data.extend(base.iter().cloned().map(|mut r| {
                r.subject_id = s.into();
                r
            }));
        }
        let report = evaluate_leave_k_out(&data, 2, &small(), 3).unwrap();
        assert_eq!(report.folds[0].accuracy, report.folds[1].accuracy);
    }
}
