//! Association rules and reduced-error-pruned decision trees over the
//! Turkiye student evaluation table.
//!
//! The pipeline is `ingest` (CSV load and range checks) → `recode`
//! (nominal tokens and analysis projections) → `assoc` (Apriori rules) or
//! `reptree` + `eval` (tree learning and stratified cross-validation).
//! `cli` ties the stages to the `evalmine` binary.

pub mod assoc;
pub mod cli;
pub mod eval;
pub mod ingest;
pub mod recode;
pub mod reptree;

pub use assoc::{
    brute_force_itemsets, frequent_itemsets, generate_rules, itemize, AssociationRule, Item,
    Itemset, Transactions,
};
pub use eval::{compute_metrics, cross_validate, stratified_folds, ConfusionMatrix, EvalReport};
pub use ingest::{load_csv, parse_csv, validate_schema, RawTable, ValidationSummary};
pub use recode::{project_analysis, recode_table, AnalysisId, RecodedTable, Token};
pub use reptree::{
    entropy, fit, grow_tree, info_gain, render_tree, rep_prune, ClassCounts, DecisionTree, Label,
    TreeParams,
};
