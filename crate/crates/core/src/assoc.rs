//! Level-wise frequent itemset mining and association rules.
//!
//! Supports are kept as integer counts over the transaction total; fractions
//! are derived only for thresholds and reporting.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::recode::RecodedTable;

/// Upper bound on distinct items accepted by [`brute_force_itemsets`].
pub const BRUTE_FORCE_MAX_ITEMS: usize = 20;

/// Index into a [`Transactions`] item catalog. Id order is the
/// lexicographic item order used for sorting output.
pub type ItemId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Item {
    pub attribute: String,
    pub value: String,
}

impl Item {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Item {
            attribute: attribute.into(),
            value: value.into(),
        }
    }

    /// A bare item with no attribute/value structure, e.g. a basket product.
    pub fn flag(name: impl Into<String>) -> Self {
        Item::new(name, "")
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value.is_empty() {
            f.write_str(&self.attribute)
        } else {
            write!(f, "{}={}", self.attribute, self.value)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("min_support {0} outside (0, 1]")]
    MinSupport(f64),
    #[error("min_confidence {0} outside (0, 1]")]
    MinConfidence(f64),
    #[error("{found} distinct items exceed the brute-force limit of {BRUTE_FORCE_MAX_ITEMS}")]
    TooManyItems { found: usize },
    #[error("no attribute named `{0}`")]
    UnknownAttribute(String),
    #[error("itemset list is not closed under subsets")]
    NotDownwardClosed,
}

/// Item baskets over a shared catalog. Each basket is sorted and holds at
/// most one item per attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transactions {
    catalog: Vec<Item>,
    attribute_of: Vec<u32>,
    baskets: Vec<Vec<ItemId>>,
}

impl Transactions {
    /// Baskets of bare item names. Each distinct name is its own attribute;
    /// repeated names within a basket collapse.
    pub fn from_baskets<S: AsRef<str>>(baskets: &[Vec<S>]) -> Self {
        let names: BTreeSet<&str> = baskets.iter().flatten().map(|s| s.as_ref()).collect();
        let index: HashMap<&str, ItemId> = names
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, i as ItemId))
            .collect();
        let baskets = baskets
            .iter()
            .map(|b| {
                let set: BTreeSet<ItemId> = b.iter().map(|s| index[s.as_ref()]).collect();
                set.into_iter().collect()
            })
            .collect();
        Transactions {
            catalog: names.iter().map(|&n| Item::flag(n)).collect(),
            attribute_of: (0..names.len() as u32).collect(),
            baskets,
        }
    }

    pub fn len(&self) -> usize {
        self.baskets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baskets.is_empty()
    }

    pub fn catalog(&self) -> &[Item] {
        &self.catalog
    }

    pub fn item(&self, id: ItemId) -> &Item {
        &self.catalog[id as usize]
    }

    pub fn baskets(&self) -> &[Vec<ItemId>] {
        &self.baskets
    }

    /// Ids of the items in `basket`, resolved to labels.
    pub fn resolve(&self, ids: &[ItemId]) -> Vec<Item> {
        ids.iter().map(|&id| self.item(id).clone()).collect()
    }

    fn same_attribute(&self, a: ItemId, b: ItemId) -> bool {
        self.attribute_of[a as usize] == self.attribute_of[b as usize]
    }
}

/// One basket per row, one `column=value` item per column.
pub fn itemize(table: &RecodedTable) -> Transactions {
    let mut catalog = Vec::new();
    let mut attribute_of = Vec::new();
    let mut offsets = Vec::with_capacity(table.width());
    for (c, column) in table.columns().iter().enumerate() {
        offsets.push(catalog.len());
        for value in column.domain {
            catalog.push(Item::new(column.name.clone(), value.as_str()));
            attribute_of.push(c as u32);
        }
    }
    let baskets = table
        .rows()
        .map(|row| {
            row.iter()
                .zip(table.columns())
                .zip(&offsets)
                .map(|((&token, column), &offset)| {
                    let v = column
                        .value_index(token)
                        .expect("recoded tokens lie in their column domain");
                    (offset + v) as ItemId
                })
                .collect()
        })
        .collect();
    Transactions {
        catalog,
        attribute_of,
        baskets,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Itemset {
    /// Sorted ascending.
    pub items: Vec<ItemId>,
    /// Number of transactions containing every item.
    pub count: u32,
}

impl Itemset {
    pub fn support(&self, total: usize) -> f64 {
        ratio(self.count, total as u32)
    }
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        f64::from(num) / f64::from(den)
    }
}

/// `count / total >= threshold`, with the quotient correctly rounded so an
/// exact decimal match compares equal.
fn meets(count: u32, total: u32, threshold: f64) -> bool {
    total > 0 && ratio(count, total) >= threshold
}

fn output_order(a: &Itemset, b: &Itemset) -> Ordering {
    a.items
        .len()
        .cmp(&b.items.len())
        .then(b.count.cmp(&a.count))
        .then_with(|| a.items.cmp(&b.items))
}

/// Frequent itemsets of a transaction set, with the catalog needed to
/// print them.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentItemsets {
    pub catalog: Vec<Item>,
    pub total: usize,
    pub min_support: f64,
    /// Sorted by size ascending, count descending, then items.
    pub sets: Vec<Itemset>,
}

impl FrequentItemsets {
    pub fn resolve(&self, ids: &[ItemId]) -> Vec<Item> {
        ids.iter()
            .map(|&id| self.catalog[id as usize].clone())
            .collect()
    }

    pub fn find(&self, items: &[Item]) -> Option<&Itemset> {
        let mut ids: Vec<ItemId> = items
            .iter()
            .map(|it| self.catalog.iter().position(|c| c == it).map(|p| p as ItemId))
            .collect::<Option<_>>()?;
        ids.sort_unstable();
        self.sets.iter().find(|s| s.items == ids)
    }
}

fn check_support(min_support: f64) -> Result<(), AssocError> {
    if min_support > 0.0 && min_support <= 1.0 {
        Ok(())
    } else {
        Err(AssocError::MinSupport(min_support))
    }
}

/// Fixed-width bitset over item ids, one per basket.
struct BasketBits {
    words: usize,
    bits: Vec<u64>,
}

impl BasketBits {
    fn new(tx: &Transactions) -> Self {
        let words = tx.catalog.len().div_ceil(64).max(1);
        let mut bits = vec![0u64; words * tx.baskets.len()];
        for (b, basket) in tx.baskets.iter().enumerate() {
            for &id in basket {
                bits[b * words + id as usize / 64] |= 1 << (id % 64);
            }
        }
        BasketBits { words, bits }
    }

    fn contains_all(&self, basket: usize, items: &[ItemId]) -> bool {
        let row = &self.bits[basket * self.words..(basket + 1) * self.words];
        items
            .iter()
            .all(|&id| row[id as usize / 64] & (1 << (id % 64)) != 0)
    }
}

/// One counting pass over the baskets for a whole level of candidates.
fn count_candidates(bits: &BasketBits, baskets: usize, candidates: &[Vec<ItemId>]) -> Vec<u32> {
    let mut counts = vec![0u32; candidates.len()];
    for b in 0..baskets {
        for (count, cand) in counts.iter_mut().zip(candidates) {
            if bits.contains_all(b, cand) {
                *count += 1;
            }
        }
    }
    counts
}

/// Joins itemsets of size k sharing their first k-1 items and drops any
/// candidate with an infrequent k-subset. `level` must be sorted.
fn next_candidates(tx: &Transactions, level: &[Itemset]) -> Vec<Vec<ItemId>> {
    let known: HashSet<&[ItemId]> = level.iter().map(|s| s.items.as_slice()).collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < level.len() {
        let k = level[start].items.len();
        let prefix = &level[start].items[..k - 1];
        let end = start
            + level[start..]
                .iter()
                .take_while(|s| &s.items[..k - 1] == prefix)
                .count();
        for i in start..end {
            for j in i + 1..end {
                let (a, b) = (level[i].items[k - 1], level[j].items[k - 1]);
                if tx.same_attribute(a, b) {
                    continue;
                }
                let mut cand = level[i].items.clone();
                cand.push(b);
                let mut sub = Vec::with_capacity(k);
                let all_frequent = (0..k - 1).all(|drop| {
                    sub.clear();
                    sub.extend(
                        cand.iter()
                            .enumerate()
                            .filter(|&(p, _)| p != drop)
                            .map(|(_, &id)| id),
                    );
                    known.contains(sub.as_slice())
                });
                if all_frequent {
                    out.push(cand);
                }
            }
        }
        start = end;
    }
    out
}

/// Apriori: every itemset whose support reaches `min_support`.
pub fn frequent_itemsets(
    tx: &Transactions,
    min_support: f64,
) -> Result<FrequentItemsets, AssocError> {
    check_support(min_support)?;
    let total = tx.len() as u32;

    let mut single = vec![0u32; tx.catalog.len()];
    for basket in &tx.baskets {
        for &id in basket {
            single[id as usize] += 1;
        }
    }
    let mut level: Vec<Itemset> = single
        .iter()
        .enumerate()
        .filter(|&(_, &c)| meets(c, total, min_support))
        .map(|(id, &count)| Itemset {
            items: vec![id as ItemId],
            count,
        })
        .collect();

    let bits = BasketBits::new(tx);
    let mut all = Vec::new();
    while !level.is_empty() {
        let candidates = next_candidates(tx, &level);
        let counts = count_candidates(&bits, tx.len(), &candidates);
        let next: Vec<Itemset> = candidates
            .into_iter()
            .zip(counts)
            .filter(|&(_, c)| meets(c, total, min_support))
            .map(|(items, count)| Itemset { items, count })
            .collect();
        all.append(&mut level);
        level = next;
    }
    all.sort_by(output_order);
    Ok(FrequentItemsets {
        catalog: tx.catalog.clone(),
        total: tx.len(),
        min_support,
        sets: all,
    })
}

/// Exhaustive enumeration of every non-empty item subset. Test oracle for
/// [`frequent_itemsets`]; exponential in the catalog size.
pub fn brute_force_itemsets(
    tx: &Transactions,
    min_support: f64,
) -> Result<FrequentItemsets, AssocError> {
    check_support(min_support)?;
    let n = tx.catalog.len();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(AssocError::TooManyItems { found: n });
    }
    let total = tx.len() as u32;
    let masks: Vec<u32> = tx
        .baskets
        .iter()
        .map(|b| b.iter().fold(0u32, |m, &id| m | (1 << id)))
        .collect();
    let mut sets = Vec::new();
    for subset in 1u32..(1u32 << n) {
        let count = masks.iter().filter(|&&m| m & subset == subset).count() as u32;
        if meets(count, total, min_support) {
            let items = (0..n as ItemId).filter(|&i| subset & (1 << i) != 0).collect();
            sets.push(Itemset { items, count });
        }
    }
    sets.sort_by(output_order);
    Ok(FrequentItemsets {
        catalog: tx.catalog.clone(),
        total: tx.len(),
        min_support,
        sets,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationRule {
    pub antecedent: Vec<Item>,
    pub consequent: Vec<Item>,
    /// Transactions containing antecedent and consequent.
    pub count: u32,
    pub antecedent_count: u32,
    pub consequent_count: u32,
    pub total: u32,
}

impl AssociationRule {
    pub fn support(&self) -> f64 {
        ratio(self.count, self.total)
    }

    pub fn confidence(&self) -> f64 {
        ratio(self.count, self.antecedent_count)
    }

    pub fn lift(&self) -> f64 {
        let consequent_support = ratio(self.consequent_count, self.total);
        if consequent_support == 0.0 {
            0.0
        } else {
            self.confidence() / consequent_support
        }
    }

    /// `a=x b=y ==> c=z`
    pub fn body(&self) -> String {
        let join = |items: &[Item]| {
            items
                .iter()
                .map(Item::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("{} ==> {}", join(&self.antecedent), join(&self.consequent))
    }

    pub fn matches(&self, antecedent: &[Item], consequent: &[Item]) -> bool {
        let same = |a: &[Item], b: &[Item]| {
            a.len() == b.len() && a.iter().all(|x| b.contains(x))
        };
        same(&self.antecedent, antecedent) && same(&self.consequent, consequent)
    }
}

impl fmt::Display for AssociationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}  (supp={:.4}, conf={:.4}, lift={:.4})",
            self.body(),
            self.support(),
            self.confidence(),
            self.lift()
        )
    }
}

struct RawRule {
    antecedent: Vec<ItemId>,
    consequent: Vec<ItemId>,
    count: u32,
    antecedent_count: u32,
    consequent_count: u32,
}

fn rule_order(a: &RawRule, b: &RawRule) -> Ordering {
    // confidence descending, compared as exact fractions
    let lhs = u64::from(b.count) * u64::from(a.antecedent_count);
    let rhs = u64::from(a.count) * u64::from(b.antecedent_count);
    lhs.cmp(&rhs)
        .then(b.count.cmp(&a.count))
        .then_with(|| a.antecedent.cmp(&b.antecedent))
        .then_with(|| a.consequent.cmp(&b.consequent))
}

/// Rules from every frequent itemset of size >= 2 whose confidence reaches
/// `min_confidence`. With `consequent_filter`, only single-item consequents
/// on that attribute are produced.
pub fn generate_rules(
    frequent: &FrequentItemsets,
    min_confidence: f64,
    consequent_filter: Option<&str>,
) -> Result<Vec<AssociationRule>, AssocError> {
    if !(min_confidence > 0.0 && min_confidence <= 1.0) {
        return Err(AssocError::MinConfidence(min_confidence));
    }
    if let Some(attr) = consequent_filter {
        if !frequent.catalog.iter().any(|it| it.attribute == attr) {
            return Err(AssocError::UnknownAttribute(attr.to_string()));
        }
    }
    let counts: HashMap<&[ItemId], u32> = frequent
        .sets
        .iter()
        .map(|s| (s.items.as_slice(), s.count))
        .collect();
    let lookup = |ids: &[ItemId]| counts.get(ids).copied().ok_or(AssocError::NotDownwardClosed);

    let mut raw = Vec::new();
    for set in frequent.sets.iter().filter(|s| s.items.len() >= 2) {
        let k = set.items.len();
        let splits: Vec<u64> = match consequent_filter {
            Some(attr) => (0..k)
                .filter(|&p| frequent.catalog[set.items[p] as usize].attribute == attr)
                .map(|p| 1u64 << p)
                .collect(),
            None => (1..(1u64 << k) - 1).collect(),
        };
        for mask in splits {
            let (mut antecedent, mut consequent) = (Vec::new(), Vec::new());
            for (p, &id) in set.items.iter().enumerate() {
                if mask & (1 << p) != 0 {
                    consequent.push(id);
                } else {
                    antecedent.push(id);
                }
            }
            let antecedent_count = lookup(&antecedent)?;
            if !meets(set.count, antecedent_count, min_confidence) {
                continue;
            }
            raw.push(RawRule {
                consequent_count: lookup(&consequent)?,
                antecedent,
                consequent,
                count: set.count,
                antecedent_count,
            });
        }
    }
    raw.sort_by(rule_order);
    let total = frequent.total as u32;
    Ok(raw
        .into_iter()
        .map(|r| AssociationRule {
            antecedent: frequent.resolve(&r.antecedent),
            consequent: frequent.resolve(&r.consequent),
            count: r.count,
            antecedent_count: r.antecedent_count,
            consequent_count: r.consequent_count,
            total,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recode::{Column, Token, TARGET, TARGET_DOMAIN, INSTRUCTOR_DOMAIN, COURSE_DOMAIN};

    fn toy() -> Transactions {
        Transactions::from_baskets(&[
            vec!["x", "y"],
            vec!["x", "y"],
            vec!["x", "z"],
            vec!["y"],
        ])
    }

    fn labelled(f: &FrequentItemsets) -> Vec<(String, u32)> {
        f.sets
            .iter()
            .map(|s| {
                let names: Vec<String> = f.resolve(&s.items).iter().map(|i| i.to_string()).collect();
                (names.join(","), s.count)
            })
            .collect()
    }

    // Toy baskets {xy, xy, xz, y}: counting every non-empty subset of
    // {x, y, z} by hand gives x:3 y:3 z:1 xy:2 xz:1 yz:0 xyz:0.
    #[test]
    fn toy_frequent_itemsets() {
        let f = frequent_itemsets(&toy(), 0.5).unwrap();
        assert_eq!(
            labelled(&f),
            vec![("x".into(), 3), ("y".into(), 3), ("x,y".into(), 2)]
        );
        assert_eq!(f.sets[0].support(f.total), 0.75);
        assert_eq!(f.sets[2].support(f.total), 0.5);
        assert_eq!(brute_force_itemsets(&toy(), 0.5).unwrap(), f);
    }

    #[test]
    fn constant_baskets_at_full_support() {
        let tx = Transactions::from_baskets(&[vec!["x", "y"], vec!["y", "x"], vec!["x", "y"]]);
        let f = frequent_itemsets(&tx, 1.0).unwrap();
        assert_eq!(
            labelled(&f),
            vec![("x".into(), 3), ("y".into(), 3), ("x,y".into(), 3)]
        );
    }

    #[test]
    fn threshold_bounds() {
        assert_eq!(
            frequent_itemsets(&toy(), 1.1),
            Err(AssocError::MinSupport(1.1))
        );
        assert!(frequent_itemsets(&toy(), 0.0).is_err());
        assert!(brute_force_itemsets(&toy(), -0.5).is_err());
        let f = frequent_itemsets(&toy(), 0.5).unwrap();
        assert_eq!(generate_rules(&f, 0.0, None), Err(AssocError::MinConfidence(0.0)));
        assert!(generate_rules(&f, 1.5, None).is_err());
    }

    #[test]
    fn brute_force_guards() {
        let single = Transactions::from_baskets(&[vec!["x"]]);
        let f = brute_force_itemsets(&single, 1.0).unwrap();
        assert_eq!(labelled(&f), vec![("x".into(), 1)]);

        let names: Vec<String> = (0..21).map(|i| format!("i{i:02}")).collect();
        let tx = Transactions::from_baskets(&[names]);
        assert_eq!(
            brute_force_itemsets(&tx, 0.5),
            Err(AssocError::TooManyItems { found: 21 })
        );
    }

    // Partitions of {x,y}: x=>y has conf 2/3, y=>x has conf 2/3, both
    // above 0.6; with equal confidence and support the antecedent order
    // decides.
    #[test]
    fn toy_rules() {
        let f = frequent_itemsets(&toy(), 0.5).unwrap();
        let rules = generate_rules(&f, 0.6, None).unwrap();
        let bodies: Vec<String> = rules.iter().map(|r| r.body()).collect();
        assert_eq!(bodies, vec!["x ==> y", "y ==> x"]);
        for r in &rules {
            assert!((r.confidence() - 2.0 / 3.0).abs() < 1e-12);
            assert_eq!(r.support(), 0.5);
            assert!((r.lift() - (2.0 / 3.0) / 0.75).abs() < 1e-12);
        }
        assert_eq!(
            rules[0].to_string(),
            "x ==> y  (supp=0.5000, conf=0.6667, lift=0.8889)"
        );
        assert!(generate_rules(&f, 0.7, None).unwrap().is_empty());
    }

    #[test]
    fn no_pairs_no_rules() {
        let f = frequent_itemsets(&toy(), 0.75).unwrap();
        assert!(generate_rules(&f, 0.1, None).unwrap().is_empty());
    }

    fn course_table() -> RecodedTable {
        let cols = vec![
            Column::new("instr", INSTRUCTOR_DOMAIN),
            Column::new("class", COURSE_DOMAIN),
            Column::new(TARGET, TARGET_DOMAIN),
        ];
        let rows = vec![
            vec![Token::A, Token::E, Token::No],
            vec![Token::C, Token::E, Token::No],
            vec![Token::C, Token::E, Token::No],
            vec![Token::B, Token::A, Token::Yes],
            vec![Token::A, Token::B, Token::No],
        ];
        RecodedTable::new(cols, rows).unwrap()
    }

    #[test]
    fn itemize_one_item_per_column() {
        let t = course_table();
        let tx = itemize(&t);
        assert_eq!(tx.len(), 5);
        assert_eq!(tx.catalog().len(), 3 + 13 + 2);
        let first: Vec<String> = tx.resolve(&tx.baskets()[0]).iter().map(|i| i.to_string()).collect();
        assert_eq!(first, vec!["instr=A", "class=E", "nb.repeat=No"]);
        assert!(tx.baskets().iter().all(|b| b.len() == 3));
    }

    #[test]
    fn class_association_mode() {
        let tx = itemize(&course_table());
        let f = frequent_itemsets(&tx, 0.2).unwrap();
        let rules = generate_rules(&f, 0.9, Some(TARGET)).unwrap();
        assert!(rules.iter().all(|r| r.consequent.len() == 1 && r.consequent[0].attribute == TARGET));
        let bodies: Vec<String> = rules.iter().map(|r| r.body()).collect();
        // class=E appears 3 times, always No; instr=A twice, always No.
        assert_eq!(bodies[0], "class=E ==> nb.repeat=No");
        assert!(bodies.contains(&"instr=C class=E ==> nb.repeat=No".to_string()));
        assert!(bodies.contains(&"instr=A ==> nb.repeat=No".to_string()));
        let e = &rules[0];
        assert_eq!((e.count, e.antecedent_count, e.consequent_count, e.total), (3, 3, 4, 5));
        assert_eq!(
            generate_rules(&f, 0.9, Some("grade")),
            Err(AssocError::UnknownAttribute("grade".into()))
        );
    }

    #[test]
    fn find_itemset() {
        let f = frequent_itemsets(&itemize(&course_table()), 0.2).unwrap();
        let s = f
            .find(&[Item::new("class", "E"), Item::new("instr", "C")])
            .unwrap();
        assert_eq!(s.count, 2);
        assert!(f.find(&[Item::new("class", "Z")]).is_none());
    }
}
