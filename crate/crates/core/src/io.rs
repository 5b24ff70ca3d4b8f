//! Set-data text format: one record per line,
//! `record_id<TAB>item1 item2 item3 ...`.
//!
//! Items are whitespace-separated, order-insensitive on read, emitted
//! sorted by item name. A line with no tab (or nothing after the tab) is an
//! empty record; anonymizer entry points reject those, the verifier accepts
//! them.

use crate::error::Error;
use crate::model::{Dataset, Interner, RecordSet};

pub fn read_set_data(text: &str) -> Result<(Dataset, Interner), Error> {
    let mut interner = Interner::new();
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (record_id, rest) = match line.split_once('\t') {
            Some((id, rest)) => (id, rest),
            None => (line, ""),
        };
        let record_id = record_id.trim();
        if record_id.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "missing record id".to_string(),
            });
        }
        let items = rest
            .split_whitespace()
            .map(|tok| interner.intern(tok))
            .collect();
        records.push(RecordSet::new(record_id, items));
    }
    let universe_size = interner.len();
    let dataset = Dataset::new(records, universe_size).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    Ok((dataset, interner))
}

pub fn write_set_data(d: &Dataset, interner: &Interner) -> String {
    let mut out = String::new();
    for r in &d.records {
        let mut names: Vec<&str> = r.items().iter().map(|&i| interner.name(i)).collect();
        names.sort_unstable();
        out.push_str(&r.record_id);
        out.push('\t');
        out.push_str(&names.join(" "));
        out.push('\n');
    }
    out
}
