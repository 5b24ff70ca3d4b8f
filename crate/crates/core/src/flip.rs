//! Suppression-to-flip conversion via per-column majorities, its reverse,
//! and the per-group majority anonymization used by every algorithm's final
//! step.
//!
//! For a block G and column C with N1 ones and N0 zeros, the majority center
//! keeps C iff N1 > N0 (strict; ties flip the 1's to 0's), so the block's
//! edit cost is exactly sum over columns of min(N1, N0). Only columns present
//! in at least one member are visited; absent columns are uniformly zero.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::model::{
    apply_edits, block_column_counts, block_disagreeing_columns, suppression_cost,
    AnonymizationResult, Dataset, Edit, EditOp, EditScript, Grouping, ItemId, SuppressionSolution,
};

/// Majority center of a block and the edits that make every member equal it.
#[derive(Debug, Clone)]
pub struct GroupAnonymization {
    pub center: Vec<ItemId>,
    pub edits: Vec<Edit>,
}

impl GroupAnonymization {
    pub fn cost(&self) -> usize {
        self.edits.len()
    }
}

/// Per-column majority anonymization of one block. `members` are record
/// indices into `d`; emitted edits use those indices. The center contains an
/// item iff strictly more than half of the members contain it, and the edit
/// count equals sum over columns of min(N1, N0).
pub fn anonymize_group(d: &Dataset, members: &[usize]) -> GroupAnonymization {
    let counts = block_column_counts(d, members);
    let center: Vec<ItemId> = counts
        .iter()
        .filter(|&(_, &n1)| n1 > members.len() - n1)
        .map(|(&item, _)| item)
        .collect();
    let mut edits = Vec::new();
    for &i in members {
        let record = &d.records[i];
        for &item in &center {
            if !record.contains(item) {
                edits.push(Edit {
                    record: i,
                    item,
                    op: EditOp::Add,
                });
            }
        }
        for &item in record.items() {
            if center.binary_search(&item).is_err() {
                edits.push(Edit {
                    record: i,
                    item,
                    op: EditOp::Delete,
                });
            }
        }
    }
    GroupAnonymization { center, edits }
}

/// Converts a feasible suppression solution into an edit script by flipping
/// each block to its per-column majority. The resulting dataset is
/// k-anonymous for k = the minimum block size, with the same grouping.
pub fn suppression_to_flip(d: &Dataset, s: &SuppressionSolution) -> Result<EditScript, Error> {
    suppression_cost(d, s)?; // feasibility check
    let mut edits = Vec::new();
    for block in &s.grouping.blocks {
        edits.extend(anonymize_group(d, block).edits);
    }
    Ok(EditScript::new(edits))
}

/// Reverse direction: given a grouping and a script that makes every block
/// uniform, suppresses exactly the columns on which each block's original
/// records disagree. Errors if some block does not become uniform.
pub fn flip_to_suppression(
    d: &Dataset,
    grouping: &Grouping,
    script: &EditScript,
) -> Result<SuppressionSolution, Error> {
    grouping.validate(d.len(), 1)?;
    let out = apply_edits(d, script)?;
    for (b, block) in grouping.blocks.iter().enumerate() {
        let first = out.records[block[0]].items();
        if block.iter().any(|&i| out.records[i].items() != first) {
            return Err(Error::NonUniformBlock { block: b });
        }
    }
    let suppressed: Vec<BTreeSet<ItemId>> = grouping
        .blocks
        .iter()
        .map(|block| block_disagreeing_columns(d, block))
        .collect();
    Ok(SuppressionSolution {
        grouping: grouping.clone(),
        suppressed,
    })
}

/// Builds the full anonymization result for a grouping: per-block majority
/// edits, the edited dataset, and empty-record flags.
pub fn result_from_grouping(d: &Dataset, grouping: Grouping) -> Result<AnonymizationResult, Error> {
    grouping.validate(d.len(), 1)?;
    let mut edits = Vec::new();
    for block in &grouping.blocks {
        edits.extend(anonymize_group(d, block).edits);
    }
    let script = EditScript::new(edits);
    let output = apply_edits(d, &script)?;
    let emptied_records = output
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_empty())
        .map(|(i, _)| i)
        .collect();
    let edit_cost = script.cost();
    Ok(AnonymizationResult {
        output,
        script,
        grouping,
        deleted_records: Vec::new(),
        emptied_records,
        edit_cost,
        deleted_item_cost: 0,
    })
}
