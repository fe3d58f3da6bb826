//! Decision trees over nominal attributes: information-gain induction with
//! one branch per attribute value, then reduced-error pruning against a
//! held-out part of the training rows.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::recode::{RecodedTable, Token};

/// Gains at or below this are treated as zero.
const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Label {
    No,
    Yes,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::No, Label::Yes];

    pub fn index(self) -> usize {
        match self {
            Label::No => 0,
            Label::Yes => 1,
        }
    }

    pub fn from_token(token: Token) -> Option<Label> {
        match token {
            Token::No => Some(Label::No),
            Token::Yes => Some(Label::Yes),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::No => "No",
            Label::Yes => "Yes",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub no: u32,
    pub yes: u32,
}

impl ClassCounts {
    pub fn new(no: u32, yes: u32) -> Self {
        ClassCounts { no, yes }
    }

    pub fn total(&self) -> u32 {
        self.no + self.yes
    }

    pub fn get(&self, label: Label) -> u32 {
        match label {
            Label::No => self.no,
            Label::Yes => self.yes,
        }
    }

    pub fn add(&mut self, label: Label) {
        match label {
            Label::No => self.no += 1,
            Label::Yes => self.yes += 1,
        }
    }

    /// Ties go to No.
    pub fn majority(&self) -> Label {
        if self.yes > self.no {
            Label::Yes
        } else {
            Label::No
        }
    }

    /// Instances not labelled `label`.
    pub fn errors_for(&self, label: Label) -> u32 {
        self.total() - self.get(label)
    }

    pub fn is_pure(&self) -> bool {
        self.no == 0 || self.yes == 0
    }
}

/// Shannon entropy in bits; zero for an empty node.
pub fn entropy(counts: &ClassCounts) -> f64 {
    let total = f64::from(counts.total());
    if total == 0.0 {
        return 0.0;
    }
    [counts.no, counts.yes]
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = f64::from(c) / total;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("no training rows")]
    EmptyInput,
    #[error("invalid tree parameter: {0}")]
    InvalidParams(String),
    #[error("{rows} training rows cannot fill {folds} pruning folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("row lacks attribute `{0}` used by the tree")]
    MissingAttribute(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeParams {
    /// A node needs at least twice this many rows to be split.
    pub min_leaf: usize,
    /// One of this many folds is held out for pruning.
    pub prune_folds: usize,
    pub seed: u64,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 2,
            prune_folds: 3,
            seed: 1,
            max_depth: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_leaf < 1 {
            return Err(TreeError::InvalidParams("min_leaf must be >= 1".into()));
        }
        if self.prune_folds < 2 {
            return Err(TreeError::InvalidParams("prune_folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// A recoded table with each cell replaced by its index within the
/// column's domain, ready for counting.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    table: &'a RecodedTable,
    codes: Vec<u8>,
    labels: Vec<Label>,
    attributes: Vec<usize>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(table: &'a RecodedTable) -> Self {
        let columns = table.columns();
        let mut codes = Vec::with_capacity(table.len() * columns.len());
        let mut labels = Vec::with_capacity(table.len());
        for (r, row) in table.rows().enumerate() {
            for (token, column) in row.iter().zip(columns) {
                let code = column
                    .value_index(*token)
                    .expect("recoded tokens lie in their column domain");
                codes.push(code as u8);
            }
            labels.push(
                Label::from_token(table.target(r)).expect("target column holds No/Yes"),
            );
        }
        let attributes = (0..columns.len())
            .filter(|&c| c != table.target_index())
            .collect();
        TrainingSet {
            table,
            codes,
            labels,
            attributes,
        }
    }

    pub fn table(&self) -> &RecodedTable {
        self.table
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    fn code(&self, row: usize, column: usize) -> usize {
        self.codes[row * self.table.width() + column] as usize
    }

    pub fn counts(&self, rows: &[usize]) -> ClassCounts {
        let mut c = ClassCounts::default();
        for &r in rows {
            c.add(self.labels[r]);
        }
        c
    }

    fn attribute_column(&self, name: &str) -> Result<usize, TreeError> {
        self.table
            .column_index(name)
            .filter(|&c| c != self.table.target_index())
            .ok_or_else(|| TreeError::UnknownAttribute(name.to_string()))
    }

    fn value_counts(&self, rows: &[usize], column: usize) -> Vec<ClassCounts> {
        let mut per_value = vec![ClassCounts::default(); self.table.columns()[column].domain.len()];
        for &r in rows {
            per_value[self.code(r, column)].add(self.labels[r]);
        }
        per_value
    }

    fn gain(&self, rows: &[usize], parent: &ClassCounts, column: usize) -> f64 {
        let n = f64::from(parent.total());
        let children: f64 = self
            .value_counts(rows, column)
            .iter()
            .filter(|c| c.total() > 0)
            .map(|c| f64::from(c.total()) / n * entropy(c))
            .sum();
        entropy(parent) - children
    }

    /// Information gain of splitting `rows` on the named attribute.
    pub fn info_gain(&self, rows: &[usize], attribute: &str) -> Result<f64, TreeError> {
        let column = self.attribute_column(attribute)?;
        if rows.is_empty() {
            return Err(TreeError::EmptyInput);
        }
        Ok(self.gain(rows, &self.counts(rows), column))
    }

    /// Attribute with the largest information gain over `rows`, earliest
    /// column on ties. `None` when no attribute has positive gain.
    pub fn best_attribute(&self, rows: &[usize]) -> Option<(String, f64)> {
        let parent = self.counts(rows);
        best_split(self, rows, &parent, &self.attributes)
            .map(|(c, g)| (self.table.columns()[c].name.clone(), g))
    }
}

fn best_split(
    set: &TrainingSet<'_>,
    rows: &[usize],
    parent: &ClassCounts,
    candidates: &[usize],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &column in candidates {
        let g = set.gain(rows, parent, column);
        if g > GAIN_EPSILON && best.is_none_or(|(_, bg)| g > bg) {
            best = Some((column, g));
        }
    }
    best
}

/// Information gain of `attribute` over the given rows of `table`.
pub fn info_gain(table: &RecodedTable, rows: &[usize], attribute: &str) -> Result<f64, TreeError> {
    TrainingSet::new(table).info_gain(rows, attribute)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Branch {
    pub value: Token,
    pub child: DecisionTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecisionTree {
    Leaf {
        label: Label,
        /// Growing-set rows that reached this leaf.
        counts: ClassCounts,
    },
    Split {
        attribute: String,
        #[serde(skip)]
        column: usize,
        /// Growing-set rows that reached this node.
        counts: ClassCounts,
        /// One branch per domain value, in domain order.
        branches: Vec<Branch>,
    },
}

impl DecisionTree {
    pub fn leaf(counts: ClassCounts) -> Self {
        DecisionTree::Leaf {
            label: counts.majority(),
            counts,
        }
    }

    pub fn counts(&self) -> ClassCounts {
        match self {
            DecisionTree::Leaf { counts, .. } | DecisionTree::Split { counts, .. } => *counts,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, DecisionTree::Leaf { .. })
    }

    /// Split attribute at the root, if any.
    pub fn root_attribute(&self) -> Option<&str> {
        match self {
            DecisionTree::Split { attribute, .. } => Some(attribute),
            DecisionTree::Leaf { .. } => None,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 1,
            DecisionTree::Split { branches, .. } => {
                1 + branches.iter().map(|b| b.child.node_count()).sum::<usize>()
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 1,
            DecisionTree::Split { branches, .. } => {
                branches.iter().map(|b| b.child.leaf_count()).sum()
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 0,
            DecisionTree::Split { branches, .. } => {
                1 + branches.iter().map(|b| b.child.depth()).max().unwrap_or(0)
            }
        }
    }

    fn classify_row(&self, set: &TrainingSet<'_>, row: usize) -> Label {
        match self {
            DecisionTree::Leaf { label, .. } => *label,
            DecisionTree::Split {
                column, branches, ..
            } => branches[set.code(row, *column)].child.classify_row(set, row),
        }
    }

    /// Misclassified rows among `rows`.
    pub fn errors_on(&self, set: &TrainingSet<'_>, rows: &[usize]) -> usize {
        rows.iter()
            .filter(|&&r| self.classify_row(set, r) != set.labels[r])
            .count()
    }

    /// Label for row `row` of `table`. Attributes are looked up by name, so
    /// `table` may be any projection holding the split attributes.
    pub fn predict(&self, table: &RecodedTable, row: usize) -> Result<Label, TreeError> {
        self.predict_with(&|name| {
            table
                .column_index(name)
                .map(|c| table.row(row)[c])
        })
    }

    /// Label for a row given as (attribute, value) pairs.
    pub fn predict_record(&self, record: &[(&str, Token)]) -> Result<Label, TreeError> {
        self.predict_with(&|name| {
            record
                .iter()
                .find(|(a, _)| *a == name)
                .map(|&(_, t)| t)
        })
    }

    fn predict_with(&self, lookup: &dyn Fn(&str) -> Option<Token>) -> Result<Label, TreeError> {
        match self {
            DecisionTree::Leaf { label, .. } => Ok(*label),
            DecisionTree::Split {
                attribute,
                counts,
                branches,
                ..
            } => {
                let value = lookup(attribute)
                    .ok_or_else(|| TreeError::MissingAttribute(attribute.clone()))?;
                match branches.iter().find(|b| b.value == value) {
                    Some(b) => b.child.predict_with(lookup),
                    None => Ok(counts.majority()),
                }
            }
        }
    }
}

/// Grows an unpruned tree on `rows`.
pub fn grow_tree(
    set: &TrainingSet<'_>,
    rows: &[usize],
    params: &TreeParams,
) -> Result<DecisionTree, TreeError> {
    params.validate()?;
    if rows.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    Ok(grow(set, rows, &set.attributes, 0, params))
}

fn grow(
    set: &TrainingSet<'_>,
    rows: &[usize],
    candidates: &[usize],
    depth: usize,
    params: &TreeParams,
) -> DecisionTree {
    let counts = set.counts(rows);
    let stop = counts.is_pure()
        || rows.len() < 2 * params.min_leaf
        || candidates.is_empty()
        || params.max_depth.is_some_and(|d| depth >= d);
    if stop {
        return DecisionTree::leaf(counts);
    }
    let Some((column, _)) = best_split(set, rows, &counts, candidates) else {
        return DecisionTree::leaf(counts);
    };

    let domain = set.table.columns()[column].domain;
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); domain.len()];
    for &r in rows {
        parts[set.code(r, column)].push(r);
    }
    let remaining: Vec<usize> = candidates.iter().copied().filter(|&c| c != column).collect();
    let parent_label = counts.majority();
    let branches = domain
        .iter()
        .zip(parts)
        .map(|(&value, part)| {
            let child = if part.is_empty() {
                DecisionTree::Leaf {
                    label: parent_label,
                    counts: ClassCounts::default(),
                }
            } else {
                grow(set, &part, &remaining, depth + 1, params)
            };
            Branch { value, child }
        })
        .collect();
    DecisionTree::Split {
        attribute: set.table.columns()[column].name.clone(),
        column,
        counts,
        branches,
    }
}

/// Reduced-error pruning: bottom-up, a subtree becomes a leaf labelled with
/// its growing-set majority whenever that leaf makes no more errors on the
/// pruning rows reaching it than the subtree does. Subtrees reached by no
/// pruning rows are collapsed.
pub fn rep_prune(tree: &DecisionTree, set: &TrainingSet<'_>, prune_rows: &[usize]) -> DecisionTree {
    prune(tree, set, prune_rows).0
}

fn prune(tree: &DecisionTree, set: &TrainingSet<'_>, rows: &[usize]) -> (DecisionTree, usize) {
    match tree {
        DecisionTree::Leaf { label, .. } => {
            let errors = rows.iter().filter(|&&r| set.labels[r] != *label).count();
            (tree.clone(), errors)
        }
        DecisionTree::Split {
            attribute,
            column,
            counts,
            branches,
        } => {
            let collapsed = DecisionTree::leaf(*counts);
            let leaf_label = counts.majority();
            let leaf_errors = rows.iter().filter(|&&r| set.labels[r] != leaf_label).count();
            if rows.is_empty() {
                return (collapsed, 0);
            }
            let mut parts: Vec<Vec<usize>> = vec![Vec::new(); branches.len()];
            for &r in rows {
                parts[set.code(r, *column)].push(r);
            }
            let mut subtree_errors = 0;
            let mut pruned = Vec::with_capacity(branches.len());
            for (branch, part) in branches.iter().zip(&parts) {
                let (child, e) = prune(&branch.child, set, part);
                subtree_errors += e;
                pruned.push(Branch {
                    value: branch.value,
                    child,
                });
            }
            if leaf_errors <= subtree_errors {
                (collapsed, leaf_errors)
            } else {
                let kept = DecisionTree::Split {
                    attribute: attribute.clone(),
                    column: *column,
                    counts: *counts,
                    branches: pruned,
                };
                (kept, subtree_errors)
            }
        }
    }
}

/// Splits `rows` into `folds` consecutive chunks of the seeded shuffle,
/// earlier chunks taking the remainder. Returns (pruning, growing).
pub fn grow_prune_split(rows: &[usize], folds: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = rows.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let first = rows.len() / folds + usize::from(rows.len() % folds > 0);
    let growing = shuffled.split_off(first);
    (shuffled, growing)
}

/// Grows on all but one fold of the shuffled rows and prunes on that fold.
pub fn fit_rows(
    set: &TrainingSet<'_>,
    rows: &[usize],
    params: &TreeParams,
) -> Result<DecisionTree, TreeError> {
    params.validate()?;
    if rows.len() < params.prune_folds {
        return Err(TreeError::TooFewRows {
            rows: rows.len(),
            folds: params.prune_folds,
        });
    }
    let (pruning, growing) = grow_prune_split(rows, params.prune_folds, params.seed);
    let grown = grow_tree(set, &growing, params)?;
    Ok(rep_prune(&grown, set, &pruning))
}

/// Fits a pruned tree on every row of `table`.
pub fn fit(table: &RecodedTable, params: &TreeParams) -> Result<DecisionTree, TreeError> {
    let set = TrainingSet::new(table);
    fit_rows(&set, &set.all_rows(), params)
}

/// Text listing: one line per branch, `attr = value` for internal nodes
/// and `attr = value : LABEL (n/e)` for leaves, where n counts growing rows
/// and e the growing rows the leaf misclassifies.
pub fn render_tree(tree: &DecisionTree) -> String {
    let mut out = String::new();
    match tree {
        DecisionTree::Leaf { label, counts } => {
            let _ = writeln!(out, ": {label} ({}/{})", counts.total(), counts.errors_for(*label));
        }
        DecisionTree::Split { .. } => render_into(tree, 0, &mut out),
    }
    out
}

fn render_into(tree: &DecisionTree, depth: usize, out: &mut String) {
    let DecisionTree::Split {
        attribute,
        branches,
        ..
    } = tree
    else {
        return;
    };
    for branch in branches {
        out.push_str(&"|   ".repeat(depth));
        let _ = write!(out, "{attribute} = {}", branch.value);
        match &branch.child {
            DecisionTree::Leaf { label, counts } => {
                let _ = writeln!(
                    out,
                    " : {label} ({}/{})",
                    counts.total(),
                    counts.errors_for(*label)
                );
            }
            child => {
                out.push('\n');
                render_into(child, depth + 1, out);
            }
        }
    }
}
