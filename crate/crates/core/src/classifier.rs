//! Pretest behavior features and the Rote / Dabbler / Selective classifiers:
//! a transparent threshold rule and a bagged CART forest.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::EARLY_SWITCH_THRESHOLD;
use crate::curriculum::Phase;
use crate::events::{EventRecord, EventType};

pub const FEATURES_PER_PROBLEM: usize = 7;
pub const N_FEATURES: usize = 2 * FEATURES_PER_PROBLEM + 2;
pub const N_CLASSES: usize = 3;

/// Declaration order is the forest's tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    Rote,
    Dabbler,
    Selective,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 3] = [GroupLabel::Rote, GroupLabel::Dabbler, GroupLabel::Selective];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for GroupLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupLabel::ALL
            .into_iter()
            .find(|g| g.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown group {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("pretest log covers {found} problems, expected 2")]
    WrongProblemCount { found: usize },
    #[error("{label} has {found} examples; at least {needed} are required")]
    InsufficientExamples { label: GroupLabel, found: usize, needed: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid forest: {0}")]
    BadModel(String),
}

/// Per pretest problem: switched, switch_action_index, switch_elapsed,
/// total_actions, rejected_fraction, solve_time, completed. Then
/// switch_count and earliest_switch_action. Missing switch values are -1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn switch_count(&self) -> f64 {
        self.0[2 * FEATURES_PER_PROBLEM]
    }

    pub fn earliest_switch_action(&self) -> f64 {
        self.0[2 * FEATURES_PER_PROBLEM + 1]
    }
}

/// The events of a session log that belong to its pretest problems.
pub fn pretest_events(log: &[EventRecord]) -> Vec<EventRecord> {
    let ids: Vec<&str> = log
        .iter()
        .filter(|e| e.event_type == EventType::ProblemStarted && e.payload.phase == Some(Phase::Pretest))
        .filter_map(|e| e.problem_id.as_deref())
        .collect();
    log.iter().filter(|e| e.problem_id.as_deref().is_some_and(|p| ids.contains(&p))).cloned().collect()
}

pub fn extract_features(pretest_log: &[EventRecord]) -> Result<FeatureVector, ClassifierError> {
    let mut order: Vec<&str> = Vec::new();
    for e in pretest_log {
        if let Some(p) = e.problem_id.as_deref() {
            if !order.contains(&p) {
                order.push(p);
            }
        }
    }
    if order.len() != 2 {
        return Err(ClassifierError::WrongProblemCount { found: order.len() });
    }
    let mut v = [0.0; N_FEATURES];
    let mut switch_count = 0.0;
    let mut earliest: Option<f64> = None;
    for (k, id) in order.iter().enumerate() {
        let events: Vec<&EventRecord> = pretest_log.iter().filter(|e| e.problem_id.as_deref() == Some(id)).collect();
        let start = events
            .iter()
            .find(|e| e.event_type == EventType::ProblemStarted)
            .map_or(events[0].timestamp_ms, |e| e.timestamp_ms);
        let count = |t: EventType| events.iter().filter(|e| e.event_type == t).count() as f64;
        let applied = count(EventType::StepApplied);
        let rejected = count(EventType::StepRejected);
        let switch = events.iter().find(|e| e.event_type == EventType::StrategySwitched);
        let completion = events.iter().find(|e| e.event_type == EventType::ProblemCompleted);
        let end = completion.map_or_else(|| events.last().map_or(start, |e| e.timestamp_ms), |e| e.timestamp_ms);
        let (switched, index, elapsed) = match switch {
            Some(s) => {
                let idx = f64::from(s.payload.action_index.unwrap_or_default());
                switch_count += 1.0;
                earliest = Some(earliest.map_or(idx, |e: f64| e.min(idx)));
                (1.0, idx, s.payload.elapsed_s.unwrap_or_default())
            }
            None => (0.0, -1.0, -1.0),
        };
        let base = k * FEATURES_PER_PROBLEM;
        v[base..base + FEATURES_PER_PROBLEM].copy_from_slice(&[
            switched,
            index,
            elapsed,
            applied + rejected + switched,
            if applied + rejected > 0.0 { rejected / (applied + rejected) } else { 0.0 },
            end.saturating_sub(start) as f64 / 1000.0,
            if completion.is_some() { 1.0 } else { 0.0 },
        ]);
    }
    v[2 * FEATURES_PER_PROBLEM] = switch_count;
    v[2 * FEATURES_PER_PROBLEM + 1] = earliest.unwrap_or(-1.0);
    Ok(FeatureVector(v))
}

/// No switch: Rote. A switch within the early-switch window: Selective. Otherwise Dabbler.
pub fn rule_baseline(fv: &FeatureVector) -> GroupLabel {
    if fv.switch_count() == 0.0 {
        GroupLabel::Rote
    } else if fv.earliest_switch_action() <= f64::from(EARLY_SWITCH_THRESHOLD) {
        GroupLabel::Selective
    } else {
        GroupLabel::Dabbler
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub min_class_examples: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: 6, features_per_split: 4, min_class_examples: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: [u32; N_CLASSES] },
}

/// Nodes in an array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64; N_FEATURES]) -> &[u32; N_CLASSES] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    fn vote(&self, x: &[f64; N_FEATURES]) -> usize {
        argmax_first(self.leaf_for(x).iter().map(|&c| c as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: GroupLabel,
    pub probabilities: [f64; N_CLASSES],
}

fn argmax_first(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn gini(counts: &[usize; N_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [[f64; N_FEATURES]],
    y: &'a [usize],
    params: ForestParams,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: [usize; N_CLASSES]) -> usize {
        self.nodes.push(TreeNode::Leaf { counts: counts.map(|c| c as u32) });
        self.nodes.len() - 1
    }

    fn grow<R: Rng>(&mut self, rows: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let counts = self.counts(&rows);
        let parent = gini(&counts, rows.len());
        if depth >= self.params.max_depth || parent == 0.0 || rows.len() < 2 {
            return self.leaf(counts);
        }
        let k = self.params.features_per_split.min(N_FEATURES);
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in sample(rng, N_FEATURES, k).into_iter() {
            let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (self.x[r][feature], self.y[r])).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; N_CLASSES];
            let mut right = counts;
            for i in 0..sorted.len() - 1 {
                left[sorted[i].1] += 1;
                right[sorted[i].1] -= 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let (nl, nr) = (i + 1, sorted.len() - i - 1);
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / rows.len() as f64;
                if best.is_none_or(|b| impurity < b.0) {
                    best = Some((impurity, feature, (sorted[i].0 + sorted[i + 1].0) / 2.0));
                }
            }
        }
        let Some((impurity, feature, threshold)) = best else {
            return self.leaf(counts);
        };
        if impurity >= parent - 1e-12 {
            return self.leaf(counts);
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&row| self.x[row][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts: [0; N_CLASSES] });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = TreeNode::Split { feature, threshold, left, right };
        at
    }
}

pub fn train_forest(dataset: &[(FeatureVector, GroupLabel)], params: ForestParams) -> Result<Forest, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    for label in GroupLabel::ALL {
        let found = dataset.iter().filter(|(_, l)| *l == label).count();
        if found < params.min_class_examples {
            return Err(ClassifierError::InsufficientExamples { label, found, needed: params.min_class_examples });
        }
    }
    let x: Vec<[f64; N_FEATURES]> = dataset.iter().map(|(f, _)| f.0).collect();
    let y: Vec<usize> = dataset.iter().map(|(_, l)| l.index()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = dataset.len();
    let trees = (0..params.n_trees)
        .map(|_| {
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder { x: &x, y: &y, params, nodes: Vec::new() };
            b.grow(rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest { params, trees })
}

impl Forest {
    pub fn predict(&self, fv: &FeatureVector) -> Prediction {
        let mut votes = [0usize; N_CLASSES];
        for t in &self.trees {
            votes[t.vote(&fv.0)] += 1;
        }
        let total = self.trees.len().max(1) as f64;
        Prediction {
            label: GroupLabel::ALL[argmax_first(votes.iter().map(|&v| v as f64))],
            probabilities: votes.map(|v| v as f64 / total),
        }
    }

    /// Structural check for forests read from disk.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.trees.is_empty() {
            return Err(ClassifierError::BadModel("no trees".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(ClassifierError::BadModel(format!("tree {t} is empty")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if let TreeNode::Split { feature, left, right, .. } = node {
                    // children always come after their parent, so traversal terminates
                    let bad = *feature >= N_FEATURES
                        || *left <= i
                        || *right <= i
                        || *left >= tree.nodes.len()
                        || *right >= tree.nodes.len();
                    if bad {
                        return Err(ClassifierError::BadModel(format!("tree {t} node {i} is malformed")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Forest, ClassifierError> {
        let forest: Forest = serde_json::from_str(text).map_err(|e| ClassifierError::BadModel(e.to_string()))?;
        forest.validate()?;
        Ok(forest)
    }

    pub fn evaluate(&self, dataset: &[(FeatureVector, GroupLabel)]) -> Result<Metrics, ClassifierError> {
        let mut m = vec![vec![0u64; N_CLASSES]; N_CLASSES];
        for (fv, label) in dataset {
            m[label.index()][self.predict(fv).label.index()] += 1;
        }
        Metrics::from_confusion(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
}

impl Metrics {
    /// `confusion[actual][predicted]`; classes never predicted (or never
    /// present) contribute 0 to the macro averages.
    pub fn from_confusion(confusion: &[Vec<u64>]) -> Result<Metrics, ClassifierError> {
        let k = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(ClassifierError::EmptyDataset);
        }
        let diag: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let recall: f64 = (0..k).map(|i| ratio(confusion[i][i], confusion[i].iter().sum())).sum();
        let precision: f64 = (0..k).map(|j| ratio(confusion[j][j], confusion.iter().map(|row| row[j]).sum())).sum();
        Ok(Metrics {
            accuracy: diag as f64 / total as f64,
            macro_recall: recall / k as f64,
            macro_precision: precision / k as f64,
        })
    }
}

/// Label counts per class, for reporting.
pub fn label_counts<'a>(labels: impl IntoIterator<Item = &'a GroupLabel>) -> BTreeMap<GroupLabel, usize> {
    let mut out = BTreeMap::new();
    for l in labels {
        *out.entry(*l).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Payload;

    fn ev(seq: u64, problem: &str, event_type: EventType, payload: Payload) -> EventRecord {
        EventRecord {
            seq,
            timestamp_ms: seq * 1000,
            session_id: "s".into(),
            problem_id: Some(problem.into()),
            event_type,
            payload,
        }
    }

    fn started(seq: u64, problem: &str) -> EventRecord {
        ev(seq, problem, EventType::ProblemStarted, Payload { phase: Some(Phase::Pretest), ..Default::default() })
    }

    fn switched(seq: u64, problem: &str, action: u32) -> EventRecord {
        let payload = Payload { action_index: Some(action), elapsed_s: Some(7.5), ..Default::default() };
        ev(seq, problem, EventType::StrategySwitched, payload)
    }

    #[test]
    fn no_switch_features() {
        let log = vec![
            started(0, "a"),
            ev(1, "a", EventType::StepApplied, Payload::default()),
            ev(2, "a", EventType::ProblemCompleted, Payload::default()),
            started(3, "b"),
            ev(4, "b", EventType::StepRejected, Payload::default()),
        ];
        let fv = extract_features(&log).unwrap();
        assert_eq!(fv.switch_count(), 0.0);
        assert_eq!(fv.earliest_switch_action(), -1.0);
        assert_eq!(&fv.0[0..7], &[0.0, -1.0, -1.0, 1.0, 0.0, 2.0, 1.0]);
        assert_eq!(&fv.0[7..14], &[0.0, -1.0, -1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(extract_features(&log).unwrap(), fv);
        assert_eq!(rule_baseline(&fv), GroupLabel::Rote);
    }

    #[test]
    fn single_switch_features() {
        let log = vec![started(0, "a"), switched(1, "a", 5), started(2, "b")];
        let fv = extract_features(&log).unwrap();
        assert_eq!(fv.switch_count(), 1.0);
        assert_eq!(fv.earliest_switch_action(), 5.0);
        assert_eq!(fv.0[1], 5.0);
        assert_eq!(fv.0[2], 7.5);
        assert_eq!(fv.0[8], -1.0);
    }

    #[test]
    fn wrong_problem_count() {
        let log = vec![started(0, "a")];
        assert_eq!(extract_features(&log), Err(ClassifierError::WrongProblemCount { found: 1 }));
        let log = vec![started(0, "a"), started(1, "b"), started(2, "c")];
        assert_eq!(extract_features(&log), Err(ClassifierError::WrongProblemCount { found: 3 }));
    }

    #[test]
    fn baseline_thresholds() {
        let fv = |earliest: f64| {
            let mut v = [0.0; N_FEATURES];
            v[14] = 1.0;
            v[15] = earliest;
            FeatureVector(v)
        };
        assert_eq!(rule_baseline(&fv(12.0)), GroupLabel::Selective);
        assert_eq!(rule_baseline(&fv(30.0)), GroupLabel::Selective);
        assert_eq!(rule_baseline(&fv(31.0)), GroupLabel::Dabbler);
        assert_eq!(rule_baseline(&fv(45.0)), GroupLabel::Dabbler);
    }

    fn separable(n_per_class: usize) -> Vec<(FeatureVector, GroupLabel)> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut out = Vec::new();
        for label in GroupLabel::ALL {
            for _ in 0..n_per_class {
                let mut v = [0.0; N_FEATURES];
                for x in v.iter_mut() {
                    *x = rng.random::<f64>();
                }
                // every feature carries the class in its integer part
                for x in v.iter_mut() {
                    *x += 10.0 * label.index() as f64;
                }
                out.push((FeatureVector(v), label));
            }
        }
        out
    }

    #[test]
    fn separable_data_is_learned_exactly() {
        let data = separable(20);
        let forest = train_forest(&data, ForestParams { n_trees: 25, seed: 4, ..Default::default() }).unwrap();
        let m = forest.evaluate(&data).unwrap();
        assert_eq!((m.accuracy, m.macro_recall, m.macro_precision), (1.0, 1.0, 1.0));
        for tree in &forest.trees {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, .. } = node {
                    assert!(*feature < N_FEATURES);
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let data = separable(15);
        let params = ForestParams { n_trees: 10, seed: 77, ..Default::default() };
        let a = train_forest(&data, params).unwrap();
        let b = train_forest(&data, params).unwrap();
        assert_eq!(a, b);
        let back = Forest::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        for (fv, _) in &data {
            assert_eq!(a.predict(fv), back.predict(fv));
        }
    }

    #[test]
    fn too_few_examples() {
        let mut data = separable(12);
        data.retain(|(_, l)| *l != GroupLabel::Selective);
        data.extend(separable(2).into_iter().filter(|(_, l)| *l == GroupLabel::Selective));
        assert_eq!(
            train_forest(&data, ForestParams::default()).unwrap_err(),
            ClassifierError::InsufficientExamples { label: GroupLabel::Selective, found: 2, needed: 10 }
        );
        assert_eq!(train_forest(&[], ForestParams::default()).unwrap_err(), ClassifierError::EmptyDataset);
    }

    fn stump(class: usize) -> Tree {
        let mut counts = [0; N_CLASSES];
        counts[class] = 1;
        Tree { nodes: vec![TreeNode::Leaf { counts }] }
    }

    #[test]
    fn voting_and_tie_break() {
        let fv = FeatureVector([0.0; N_FEATURES]);
        let unanimous = Forest { params: ForestParams::default(), trees: vec![stump(0), stump(0), stump(0)] };
        let p = unanimous.predict(&fv);
        assert_eq!((p.label, p.probabilities), (GroupLabel::Rote, [1.0, 0.0, 0.0]));

        let tied = Forest { params: ForestParams::default(), trees: vec![stump(1), stump(0), stump(1), stump(0)] };
        assert_eq!(tied.predict(&fv).label, GroupLabel::Rote);
        let tied = Forest { params: ForestParams::default(), trees: vec![stump(2), stump(1)] };
        assert_eq!(tied.predict(&fv).label, GroupLabel::Dabbler);
        assert_eq!(tied.predict(&fv), tied.predict(&fv));
    }

    #[test]
    fn malformed_models_are_refused() {
        let mut f = Forest { params: ForestParams::default(), trees: vec![stump(0)] };
        f.trees[0].nodes.insert(0, TreeNode::Split { feature: 16, threshold: 0.0, left: 1, right: 1 });
        assert!(Forest::from_json(&f.to_json()).is_err());
        f.trees[0].nodes[0] = TreeNode::Split { feature: 3, threshold: 0.0, left: 0, right: 1 };
        assert!(f.validate().is_err());
    }

    #[test]
    fn metrics_from_confusion() {
        let m = Metrics::from_confusion(&[vec![10, 0], vec![5, 5]]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        // all-Rote predictor on balanced 3-class data
        let m = Metrics::from_confusion(&[vec![10, 0, 0], vec![10, 0, 0], vec![10, 0, 0]]).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_precision - 1.0 / 9.0).abs() < 1e-12);
        assert!(Metrics::from_confusion(&[vec![0, 0], vec![0, 0]]).is_err());
    }
}
