//! Dataset representation, the anonymity predicate, costs, and edit
//! application — the shared vocabulary of every algorithm in this crate.
//!
//! Records are kept as sorted, duplicate-free sequences of interned item
//! ids. Bit vectors over the full universe are never materialized; column
//! statistics are obtained by counting item occurrences across a block.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::Error;

/// Dense handle for one distinct item of the universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

/// Dense interner: every distinct raw item string maps to exactly one
/// [`ItemId`], and `len()` equals the number of distinct items seen.
#[derive(Debug, Default, Clone)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, ItemId>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> ItemId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = ItemId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<ItemId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ItemId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One individual's set of items, with an opaque record id that is carried
/// through but ignored by all anonymity and equality logic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSet {
    pub record_id: String,
    items: Vec<ItemId>,
}

impl RecordSet {
    /// Builds a record, sorting and deduplicating the items.
    pub fn new(record_id: impl Into<String>, mut items: Vec<ItemId>) -> Self {
        items.sort_unstable();
        items.dedup();
        Self {
            record_id: record_id.into(),
            items,
        }
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Size of the symmetric difference of two item sets.
pub fn hamming(a: &RecordSet, b: &RecordSet) -> usize {
    hamming_items(a.items(), b.items())
}

/// Symmetric-difference size over two sorted item slices.
pub fn hamming_items(a: &[ItemId], b: &[ItemId]) -> usize {
    let (mut i, mut j, mut diff) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                diff += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                diff += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    diff + (a.len() - i) + (b.len() - j)
}

/// A dataset of records over a universe of `universe_size` items.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<RecordSet>,
    pub universe_size: usize,
}

impl Dataset {
    /// Builds a dataset, checking that record ids are unique and every item
    /// id lies below the universe size.
    pub fn new(records: Vec<RecordSet>, universe_size: usize) -> Result<Self, Error> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate record id {:?}",
                    r.record_id
                )));
            }
            if let Some(item) = r.items().last() {
                if item.0 as usize >= universe_size {
                    return Err(Error::InvalidDataset(format!(
                        "record {:?} holds item e{} outside universe of size {}",
                        r.record_id, item.0, universe_size
                    )));
                }
            }
        }
        Ok(Self {
            records,
            universe_size,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Input contract for the anonymizers: records must be non-empty.
    pub fn require_nonempty_records(&self) -> Result<(), Error> {
        for r in &self.records {
            if r.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "record {:?} is empty",
                    r.record_id
                )));
            }
        }
        Ok(())
    }
}

/// True iff every record's item set equals the item set of at least k-1
/// other records (set equality; record ids are ignored).
pub fn is_k_anonymous(d: &Dataset, k: usize) -> bool {
    if k <= 1 {
        return true;
    }
    let mut counts: HashMap<&[ItemId], usize> = HashMap::new();
    for r in &d.records {
        *counts.entry(r.items()).or_insert(0) += 1;
    }
    counts.values().all(|&c| c >= k)
}

/// Partition of record indices into blocks of size >= k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub blocks: Vec<Vec<usize>>,
}

impl Grouping {
    pub fn new(blocks: Vec<Vec<usize>>) -> Self {
        Self { blocks }
    }

    /// Checks that the blocks partition `0..n` exactly and each has size >= k.
    pub fn validate(&self, n: usize, k: usize) -> Result<(), Error> {
        let mut seen = vec![false; n];
        for (b, block) in self.blocks.iter().enumerate() {
            if block.len() < k {
                return Err(Error::InvalidGrouping(format!(
                    "block {b} has {} members, fewer than k = {k}",
                    block.len()
                )));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::InvalidGrouping(format!(
                        "block {b} references record {i} outside 0..{n}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidGrouping(format!(
                        "record {i} appears in more than one block"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidGrouping(format!("record {i} is unassigned")));
        }
        Ok(())
    }

    /// Sorts members within blocks and blocks by first member.
    pub fn normalized(mut self) -> Self {
        for block in &mut self.blocks {
            block.sort_unstable();
        }
        self.blocks.sort();
        self
    }

    pub fn min_block_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Add,
    Delete,
}

/// One item addition or deletion applied to a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edit {
    pub record: usize,
    pub item: ItemId,
    pub op: EditOp,
}

impl std::fmt::Display for Edit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = match self.op {
            EditOp::Add => "add",
            EditOp::Delete => "delete",
        };
        write!(f, "{op} e{} on record {}", self.item.0, self.record)
    }
}

/// Ordered list of edits; its length is the anonymization cost.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EditScript {
    pub edits: Vec<Edit>,
}

impl EditScript {
    pub fn new(edits: Vec<Edit>) -> Self {
        Self { edits }
    }

    pub fn cost(&self) -> usize {
        self.edits.len()
    }

    /// Op-reversed script: applying it to the output restores the input.
    pub fn inverted(&self) -> EditScript {
        EditScript {
            edits: self
                .edits
                .iter()
                .map(|e| Edit {
                    record: e.record,
                    item: e.item,
                    op: match e.op {
                        EditOp::Add => EditOp::Delete,
                        EditOp::Delete => EditOp::Add,
                    },
                })
                .collect(),
        }
    }
}

/// Applies a script: every `Add` inserts an absent item, every `Delete`
/// removes a present item. Rejects scripts with duplicate (record, item)
/// pairs or edits that do not match the dataset, identifying the offending
/// edit.
pub fn apply_edits(d: &Dataset, script: &EditScript) -> Result<Dataset, Error> {
    let mut sets: Vec<BTreeSet<ItemId>> = d
        .records
        .iter()
        .map(|r| r.items().iter().copied().collect())
        .collect();
    let mut touched: HashSet<(usize, ItemId)> = HashSet::new();
    for (index, e) in script.edits.iter().enumerate() {
        let fail = |reason: &str| Error::InvalidEdit {
            index,
            description: e.to_string(),
            reason: reason.to_string(),
        };
        if e.record >= d.len() {
            return Err(fail("record index out of range"));
        }
        if e.item.0 as usize >= d.universe_size {
            return Err(fail("item outside universe"));
        }
        if !touched.insert((e.record, e.item)) {
            return Err(fail("duplicate (record, item) pair in script"));
        }
        match e.op {
            EditOp::Add => {
                if !sets[e.record].insert(e.item) {
                    return Err(fail("adds an item that is already present"));
                }
            }
            EditOp::Delete => {
                if !sets[e.record].remove(&e.item) {
                    return Err(fail("deletes an item that is absent"));
                }
            }
        }
    }
    let records = d
        .records
        .iter()
        .zip(sets)
        .map(|(r, set)| RecordSet::new(r.record_id.clone(), set.into_iter().collect()))
        .collect();
    Dataset::new(records, d.universe_size)
}

/// Grouping plus per-block suppressed columns: within each block every
/// non-suppressed column must be uniform.
#[derive(Debug, Clone)]
pub struct SuppressionSolution {
    pub grouping: Grouping,
    pub suppressed: Vec<BTreeSet<ItemId>>,
}

/// Occurrence count per item present in at least one member of the block.
/// For item e the pair is (e, N1); N0 is `block.len() - N1`.
pub fn block_column_counts(d: &Dataset, block: &[usize]) -> BTreeMap<ItemId, usize> {
    let mut counts = BTreeMap::new();
    for &i in block {
        for &item in d.records[i].items() {
            *counts.entry(item).or_insert(0) += 1;
        }
    }
    counts
}

/// Minimum flips to make the block uniform: sum over columns of min(N1, N0).
pub fn block_flip_cost(d: &Dataset, block: &[usize]) -> usize {
    block_column_counts(d, block)
        .values()
        .map(|&n1| n1.min(block.len() - n1))
        .sum()
}

/// Columns on which the block's records disagree.
pub fn block_disagreeing_columns(d: &Dataset, block: &[usize]) -> BTreeSet<ItemId> {
    block_column_counts(d, block)
        .into_iter()
        .filter(|&(_, n1)| n1 < block.len())
        .map(|(item, _)| item)
        .collect()
}

/// Suppression cost of the block on its own: |block| x #disagreeing columns.
pub fn block_star_cost(d: &Dataset, block: &[usize]) -> usize {
    block.len() * block_disagreeing_columns(d, block).len()
}

/// Total stars of a feasible suppression solution: sum over blocks of
/// block size x number of suppressed columns. Errors if some unsuppressed
/// column is non-uniform, naming the block and column.
pub fn suppression_cost(d: &Dataset, s: &SuppressionSolution) -> Result<usize, Error> {
    s.grouping.validate(d.len(), 1)?;
    if s.suppressed.len() != s.grouping.blocks.len() {
        return Err(Error::InvalidGrouping(format!(
            "{} suppressed-column sets for {} blocks",
            s.suppressed.len(),
            s.grouping.blocks.len()
        )));
    }
    let mut cost = 0;
    for (b, block) in s.grouping.blocks.iter().enumerate() {
        for (item, n1) in block_column_counts(d, block) {
            if n1 < block.len() && !s.suppressed[b].contains(&item) {
                return Err(Error::InfeasibleSuppression {
                    block: b,
                    column: item.0,
                });
            }
        }
        cost += block.len() * s.suppressed[b].len();
    }
    Ok(cost)
}

/// Output of an anonymizer: the edited dataset, the script, the grouping
/// that produced it, and the cost split into edits and deleted-record items.
#[derive(Debug, Clone)]
pub struct AnonymizationResult {
    pub output: Dataset,
    pub script: EditScript,
    pub grouping: Grouping,
    /// Records removed wholesale (used by the pipeline's undersized-cluster
    /// rule; empty for the plain anonymizers).
    pub deleted_records: Vec<usize>,
    /// Records whose output item set became empty.
    pub emptied_records: Vec<usize>,
    pub edit_cost: usize,
    pub deleted_item_cost: usize,
}

impl AnonymizationResult {
    pub fn total_cost(&self) -> usize {
        self.edit_cost + self.deleted_item_cost
    }
}
